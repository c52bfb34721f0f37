//! Embedding matrices, the `EMB1` file format, label alignment and splits.
//!
//! `EMB1` layout (little-endian):
//!
//! ```text
//! magic  "EMB1"
//! u32    n
//! u32    dim
//! u16    tag_len, then tag_len bytes of UTF-8 source model tag
//! n x    [u16 id_len, id bytes, dim x f32]
//! ```

use std::collections::{HashMap, HashSet};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::binio::{put_string, Reader};
use crate::error::{Error, Result};
use crate::labels::SoftLabelMatrix;
use crate::rng::{self, Domain};

pub const EMB_MAGIC: [u8; 4] = *b"EMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub sample_ids: Vec<String>,
    pub dim: usize,
    data: Vec<f32>,
    pub source_model: String,
}

impl EmbeddingMatrix {
    pub fn new(sample_ids: Vec<String>, dim: usize, data: Vec<f32>, source_model: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        if data.len() != sample_ids.len() * dim {
            return Err(Error::LengthMismatch(format!(
                "{} values for {} rows x {dim} columns",
                data.len(),
                sample_ids.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                column: pos % dim,
            });
        }
        Ok(EmbeddingMatrix {
            sample_ids,
            dim,
            data,
            source_model: source_model.into(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            dim: self.dim,
            data,
            source_model: self.source_model.clone(),
        }
    }

    /// Keeps only the given feature columns, in the given order.
    pub fn select_columns(&self, columns: &[usize], source_model: impl Into<String>) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.dim) {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: bad + 1,
            });
        }
        let mut data = Vec::with_capacity(self.n_samples() * columns.len());
        for i in 0..self.n_samples() {
            let row = self.row(i);
            data.extend(columns.iter().map(|&c| row[c]));
        }
        EmbeddingMatrix::new(self.sample_ids.clone(), columns.len(), data, source_model)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e| Error::io("<embedding stream>", e);
        let n = u32::try_from(self.n_samples()).map_err(|_| Error::InvalidConfig("too many rows".into()))?;
        let dim = u32::try_from(self.dim).map_err(|_| Error::InvalidConfig("dim too large".into()))?;
        w.write_all(&EMB_MAGIC).map_err(io)?;
        w.write_all(&n.to_le_bytes()).map_err(io)?;
        w.write_all(&dim.to_le_bytes()).map_err(io)?;
        put_string(w, &self.source_model).map_err(io)?;
        for i in 0..self.n_samples() {
            put_string(w, &self.sample_ids[i]).map_err(io)?;
            for v in self.row(i) {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = Reader::new(r, "embedding file");
        let magic = r.bytes::<4>("magic")?;
        if magic != EMB_MAGIC {
            return Err(Error::BadMagic {
                expected: EMB_MAGIC,
                found: magic,
            });
        }
        let n = r.u32("row count")? as usize;
        let dim = r.u32("dim")? as usize;
        if dim == 0 {
            return Err(Error::Malformed("embedding file declares dim 0".into()));
        }
        let source_model = r.string("source model tag")?;
        let mut sample_ids = Vec::with_capacity(n.min(1 << 20));
        let mut data = Vec::with_capacity((n * dim).min(1 << 26));
        for row in 0..n {
            sample_ids.push(r.string(&format!("id of row {row}"))?);
            for column in 0..dim {
                let v = r.f32(&format!("row {row} column {column}"))?;
                if !v.is_finite() {
                    return Err(Error::NonFinite { row, column });
                }
                data.push(v);
            }
        }
        r.finish()?;
        Ok(EmbeddingMatrix {
            sample_ids,
            dim,
            data,
            source_model,
        })
    }
}

pub fn write_embedding_file(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    m.write_to(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::read_from(BufReader::new(file))
}

/// CSV import: first column is the sample id, the rest are features. A
/// header row is expected and skipped.
pub fn read_embedding_csv<R: Read>(reader: R, source_model: &str) -> Result<EmbeddingMatrix> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let width = rec.len().saturating_sub(1);
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(Error::DimMismatch {
                    expected: d,
                    actual: width,
                })
            }
            _ => {}
        }
        ids.push(rec.get(0).unwrap_or("").to_string());
        for (column, cell) in rec.iter().skip(1).enumerate() {
            let v: f32 = cell.trim().parse().map_err(|_| Error::BadCell {
                row: row + 1,
                column: column.to_string(),
                value: cell.to_string(),
            })?;
            data.push(v);
        }
    }
    EmbeddingMatrix::new(ids, dim.unwrap_or(0), data, source_model)
}

/// Embeddings and labels with element-wise identical sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    embeddings: EmbeddingMatrix,
    labels: SoftLabelMatrix,
}

impl AlignedDataset {
    pub fn new(embeddings: EmbeddingMatrix, labels: SoftLabelMatrix) -> Result<Self> {
        if embeddings.sample_ids != labels.sample_ids {
            return Err(Error::LengthMismatch(
                "embedding and label sample ids differ; use `align` first".into(),
            ));
        }
        Ok(AlignedDataset { embeddings, labels })
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn labels(&self) -> &SoftLabelMatrix {
        &self.labels
    }

    pub fn into_parts(self) -> (EmbeddingMatrix, SoftLabelMatrix) {
        (self.embeddings, self.labels)
    }

    pub fn n_samples(&self) -> usize {
        self.embeddings.n_samples()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        AlignedDataset {
            embeddings: self.embeddings.select_rows(indices),
            labels: self.labels.select_rows(indices),
        }
    }

    pub fn with_feature_columns(&self, columns: &[usize], source_model: &str) -> Result<Self> {
        Ok(AlignedDataset {
            embeddings: self.embeddings.select_columns(columns, source_model)?,
            labels: self.labels.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub dataset: AlignedDataset,
    /// Embedding ids with no label row.
    pub dropped_embeddings: Vec<String>,
    /// Label ids with no embedding row.
    pub dropped_labels: Vec<String>,
}

/// Inner join on sample id, preserving embedding row order. Duplicate label
/// ids resolve to the first occurrence.
pub fn align(embeddings: &EmbeddingMatrix, labels: &SoftLabelMatrix) -> Result<Alignment> {
    let mut label_pos: HashMap<&str, usize> = HashMap::new();
    for (i, id) in labels.sample_ids.iter().enumerate() {
        label_pos.entry(id.as_str()).or_insert(i);
    }
    let mut emb_rows = Vec::new();
    let mut label_rows = Vec::new();
    let mut dropped_embeddings = Vec::new();
    for (i, id) in embeddings.sample_ids.iter().enumerate() {
        match label_pos.get(id.as_str()) {
            Some(&j) => {
                emb_rows.push(i);
                label_rows.push(j);
            }
            None => dropped_embeddings.push(id.clone()),
        }
    }
    if emb_rows.is_empty() {
        return Err(Error::Empty("embedding and label sample ids do not intersect".into()));
    }
    let kept: HashSet<&str> = embeddings.sample_ids.iter().map(String::as_str).collect();
    let dropped_labels = labels
        .sample_ids
        .iter()
        .filter(|id| !kept.contains(id.as_str()))
        .cloned()
        .collect();
    Ok(Alignment {
        dataset: AlignedDataset {
            embeddings: embeddings.select_rows(&emb_rows),
            labels: labels.select_rows(&label_rows),
        },
        dropped_embeddings,
        dropped_labels,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Fractions of samples assigned to train and validation; the remainder is
/// the test partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.99,
            validation: 0.01,
        }
    }
}

/// The `patientNNNNN` path component of a CheXpert image path, or the whole
/// id when there is none.
pub fn chexpert_patient_id(sample_id: &str) -> String {
    sample_id
        .split('/')
        .find(|c| c.starts_with("patient"))
        .unwrap_or(sample_id)
        .to_string()
}

/// Shuffles groups (one sample per group unless `group_key` is given) with a
/// seeded stream and fills train, validation, then test by cumulative count.
/// The test partition may be empty only when the two fractions sum to one.
pub fn split_dataset(
    ds: &AlignedDataset,
    fractions: SplitFractions,
    seed: u64,
    group_key: Option<&dyn Fn(&str) -> String>,
) -> Result<DatasetSplit> {
    let SplitFractions { train, validation } = fractions;
    let sum = train + validation;
    if !(train > 0.0 && validation > 0.0 && sum <= 1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "split fractions must be positive and sum to at most 1, got ({train}, {validation})"
        )));
    }
    let ids = &ds.embeddings().sample_ids;
    let n = ids.len();

    let mut groups: Vec<Vec<usize>> = match group_key {
        None => (0..n).map(|i| vec![i]).collect(),
        Some(key) => {
            let mut order: Vec<String> = Vec::new();
            let mut members: HashMap<String, Vec<usize>> = HashMap::new();
            for (i, id) in ids.iter().enumerate() {
                let k = key(id);
                members
                    .entry(k.clone())
                    .or_insert_with(|| {
                        order.push(k);
                        Vec::new()
                    })
                    .push(i);
            }
            order
                .into_iter()
                .map(|k| members.remove(&k).unwrap_or_default())
                .collect()
        }
    };
    groups.shuffle(&mut rng::stream(seed, Domain::Split, &[]));

    let train_target = (train * n as f64).round() as usize;
    let val_target = (sum * n as f64).round().min(n as f64) as usize;
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    let mut assigned = 0usize;
    for g in groups {
        let len = g.len();
        let dest = if assigned < train_target {
            &mut split.train
        } else if assigned < val_target {
            &mut split.validation
        } else {
            &mut split.test
        };
        dest.extend(g);
        assigned += len;
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();

    let test_required = sum < 1.0 - 1e-12;
    if split.train.is_empty() || split.validation.is_empty() || (test_required && split.test.is_empty()) {
        return Err(Error::Empty(format!(
            "split of {n} samples leaves a partition empty (train {}, validation {}, test {})",
            split.train.len(),
            split.validation.len(),
            split.test.len()
        )));
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn labels_for(v: &[&str]) -> SoftLabelMatrix {
        SoftLabelMatrix::new(ids(v), vec!["L".into()], vec![0.0; v.len()]).unwrap()
    }

    #[test]
    fn small_matrix_round_trips_bit_exactly() {
        let m = EmbeddingMatrix::new(
            ids(&["a", "b"]),
            3,
            vec![0.0, -0.0, 1.5, f32::MIN_POSITIVE, -3.25, f32::MAX],
            "t",
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = EmbeddingMatrix::read_from(buf.as_slice()).unwrap();
        let bits = |m: &EmbeddingMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
        assert_eq!(back.sample_ids, m.sample_ids);
        assert_eq!(back.source_model, "t");
    }

    #[test]
    fn densenet_sized_file_is_accepted() {
        let m = EmbeddingMatrix::new(ids(&["img"]), 1024, vec![0.25; 1024], "DenseNet121").unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = EmbeddingMatrix::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.dim, 1024);
        assert_eq!(back.source_model, "DenseNet121");
    }

    #[test]
    fn truncated_and_bad_magic_and_non_finite() {
        let m = EmbeddingMatrix::new(ids(&["a", "b", "c", "d", "e"]), 2, vec![1.0; 10], "t").unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        // drop the last record: header still claims 5 rows
        let cut = buf.len() - (2 + 1 + 8);
        assert!(matches!(
            EmbeddingMatrix::read_from(&buf[..cut]),
            Err(Error::Truncated(_))
        ));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            EmbeddingMatrix::read_from(bad.as_slice()),
            Err(Error::BadMagic { .. })
        ));

        let mut nan = buf.clone();
        let off = buf.len() - 4;
        nan[off..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            EmbeddingMatrix::read_from(nan.as_slice()),
            Err(Error::NonFinite { row: 4, column: 1 })
        ));
        assert!(EmbeddingMatrix::new(ids(&["a"]), 1, vec![f32::INFINITY], "t").is_err());
    }

    #[test]
    fn csv_import() {
        let csv = "id,f0,f1\na,1.5,2\nb,-1,0\n";
        let m = read_embedding_csv(csv.as_bytes(), "csv").unwrap();
        assert_eq!(m.dim, 2);
        assert_eq!(m.row(1), &[-1.0, 0.0]);
    }

    #[test]
    fn align_inner_join_preserves_embedding_order() {
        let e = EmbeddingMatrix::new(ids(&["a", "b", "c"]), 1, vec![1.0, 2.0, 3.0], "t").unwrap();
        let l = labels_for(&["b", "c", "d"]);
        let al = align(&e, &l).unwrap();
        assert_eq!(al.dataset.embeddings().sample_ids, ids(&["b", "c"]));
        assert_eq!(al.dataset.embeddings().row(0), &[2.0]);
        assert_eq!(al.dropped_embeddings, ids(&["a"]));
        assert_eq!(al.dropped_labels, ids(&["d"]));

        let again = align(al.dataset.embeddings(), al.dataset.labels()).unwrap();
        assert_eq!(again.dataset, al.dataset);

        let disjoint = labels_for(&["x", "y"]);
        assert!(matches!(align(&e, &disjoint), Err(Error::Empty(_))));
    }

    fn synthetic_ds(n: usize) -> AlignedDataset {
        let names: Vec<String> = (0..n)
            .map(|i| format!("train/patient{:05}/study1/view{}.jpg", i / 3, i % 3))
            .collect();
        let e = EmbeddingMatrix::new(names.clone(), 1, vec![0.0; n], "t").unwrap();
        let l = SoftLabelMatrix::new(names, vec!["L".into()], vec![0.0; n]).unwrap();
        AlignedDataset::new(e, l).unwrap()
    }

    #[test]
    fn split_fraction_counts_and_determinism() {
        let ds = synthetic_ds(1000);
        let f = SplitFractions {
            train: 0.9,
            validation: 0.1,
        };
        let s = split_dataset(&ds, f, 3, None);
        // fractions summing to one leave test empty, which is allowed
        let s = s.unwrap();
        let frac = s.train.len() as f64 / 1000.0;
        assert!((0.88..=0.92).contains(&frac), "{frac}");
        assert_eq!(s, split_dataset(&ds, f, 3, None).unwrap());
        assert_ne!(s, split_dataset(&ds, f, 4, None).unwrap());
    }

    #[test]
    fn grouped_split_keeps_patients_together() {
        let ds = synthetic_ds(900);
        let key = |s: &str| chexpert_patient_id(s);
        let s = split_dataset(
            &ds,
            SplitFractions {
                train: 0.7,
                validation: 0.15,
            },
            11,
            Some(&key),
        )
        .unwrap();
        let ids = &ds.embeddings().sample_ids;
        let mut owner: HashMap<String, usize> = HashMap::new();
        for (p, part) in [&s.train, &s.validation, &s.test].iter().enumerate() {
            for &i in part.iter() {
                let prev = owner.insert(chexpert_patient_id(&ids[i]), p);
                assert!(prev.is_none() || prev == Some(p), "patient spans partitions");
            }
        }
    }

    #[test]
    fn split_errors() {
        let ds = synthetic_ds(3);
        let tiny = SplitFractions {
            train: 0.9,
            validation: 0.05,
        };
        assert!(matches!(split_dataset(&ds, tiny, 0, None), Err(Error::Empty(_))));
        let bad = SplitFractions {
            train: 0.8,
            validation: 0.3,
        };
        assert!(matches!(split_dataset(&ds, bad, 0, None), Err(Error::InvalidConfig(_))));
    }
}
