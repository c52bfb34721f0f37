//! Score matrices and the predictions CSV shared by ensembling and
//! evaluation: `classifier,sample_id,<label1>,...,<labelL>`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One classifier's probabilities, samples x labels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub classifier: String,
    pub sample_ids: Vec<String>,
    pub labels: Vec<String>,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(classifier: String, sample_ids: Vec<String>, labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != sample_ids.len() * labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} scores for {} samples x {} labels",
                values.len(),
                sample_ids.len(),
                labels.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig(format!(
                "score {} for sample `{}` outside [0, 1]",
                values[pos],
                sample_ids[pos / labels.len()]
            )));
        }
        Ok(ScoreMatrix {
            classifier,
            sample_ids,
            labels,
            values,
        })
    }

    pub fn with_classifier(mut self, name: impl Into<String>) -> Self {
        self.classifier = name.into();
        self
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, sample: usize, label: usize) -> f64 {
        self.values[sample * self.labels.len() + label]
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        let l = self.labels.len();
        &self.values[sample * l..(sample + 1) * l]
    }

    pub fn column(&self, label: usize) -> Vec<f64> {
        (0..self.n_samples()).map(|i| self.get(i, label)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Keeps the named labels, in the given order.
    pub fn select_labels(&self, names: &[String]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|n| self.label_index(n).ok_or_else(|| Error::UnknownLabel(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(self.n_samples() * cols.len());
        for i in 0..self.n_samples() {
            values.extend(cols.iter().map(|&c| self.get(i, c)));
        }
        Ok(ScoreMatrix {
            classifier: self.classifier.clone(),
            sample_ids: self.sample_ids.clone(),
            labels: names.to_vec(),
            values,
        })
    }

    /// Reorders rows to match `ids`; every id must be present.
    pub fn reorder_samples(&self, ids: &[String]) -> Result<Self> {
        let pos: HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut values = Vec::with_capacity(ids.len() * self.n_labels());
        for id in ids {
            let &i = pos.get(id.as_str()).ok_or_else(|| {
                Error::LengthMismatch(format!("classifier `{}` has no prediction for `{id}`", self.classifier))
            })?;
            values.extend_from_slice(self.row(i));
        }
        Ok(ScoreMatrix {
            classifier: self.classifier.clone(),
            sample_ids: ids.to_vec(),
            labels: self.labels.clone(),
            values,
        })
    }
}

/// Scores from several classifiers over the same samples and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub sample_ids: Vec<String>,
    pub labels: Vec<String>,
    pub classifiers: Vec<ScoreMatrix>,
}

impl PredictionSet {
    /// Aligns every matrix to the first one's sample order and label set.
    pub fn new(matrices: Vec<ScoreMatrix>) -> Result<Self> {
        let first = matrices.first().ok_or_else(|| Error::Empty("no classifiers".into()))?;
        let sample_ids = first.sample_ids.clone();
        let labels = first.labels.clone();
        let mut seen = std::collections::HashSet::new();
        let mut classifiers = Vec::with_capacity(matrices.len());
        for m in &matrices {
            if !seen.insert(m.classifier.clone()) {
                return Err(Error::ClassifierMismatch(format!(
                    "duplicate classifier `{}`",
                    m.classifier
                )));
            }
            if m.n_samples() != sample_ids.len() {
                return Err(Error::LengthMismatch(format!(
                    "classifier `{}` has {} samples, expected {}",
                    m.classifier,
                    m.n_samples(),
                    sample_ids.len()
                )));
            }
            classifiers.push(m.select_labels(&labels)?.reorder_samples(&sample_ids)?);
        }
        Ok(PredictionSet {
            sample_ids,
            labels,
            classifiers,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn classifier_names(&self) -> Vec<String> {
        self.classifiers.iter().map(|c| c.classifier.clone()).collect()
    }

    /// The N x L matrix for one sample.
    pub fn sample_matrix(&self, sample: usize) -> crate::ensemble::PredictionMatrix {
        let mut values = Vec::with_capacity(self.classifiers.len() * self.labels.len());
        for c in &self.classifiers {
            values.extend_from_slice(c.row(sample));
        }
        crate::ensemble::PredictionMatrix::from_parts(self.classifier_names(), self.labels.clone(), values)
    }
}

/// Exact decimal text with 17 significant digits.
pub fn format_score(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_predictions_csv<W: Write>(writer: W, matrices: &[ScoreMatrix]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let labels = matrices.first().map(|m| m.labels.clone()).unwrap_or_default();
    let mut header = vec!["classifier".to_string(), "sample_id".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for m in matrices {
        if m.labels != labels {
            return Err(Error::LengthMismatch(format!(
                "classifier `{}` has a different label set",
                m.classifier
            )));
        }
        for i in 0..m.n_samples() {
            let mut rec = vec![m.classifier.clone(), m.sample_ids[i].clone()];
            rec.extend(m.row(i).iter().map(|&v| format_score(v)));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<predictions csv>", e))?;
    Ok(())
}

/// Reads a predictions CSV; classifiers appear in first-seen order.
pub fn read_predictions_csv<R: Read>(reader: R) -> Result<Vec<ScoreMatrix>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("classifier") {
        return Err(Error::MissingColumn("classifier".into()));
    }
    if headers.get(1) != Some("sample_id") {
        return Err(Error::MissingColumn("sample_id".into()));
    }
    let labels: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, (Vec<String>, Vec<f64>)> = HashMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let classifier = rec.get(0).unwrap_or("").to_string();
        let entry = rows.entry(classifier.clone()).or_insert_with(|| {
            order.push(classifier.clone());
            (Vec::new(), Vec::new())
        });
        entry.0.push(rec.get(1).unwrap_or("").to_string());
        for (k, cell) in rec.iter().skip(2).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::BadCell {
                row: row + 1,
                column: labels[k].clone(),
                value: cell.to_string(),
            })?;
            entry.1.push(v);
        }
    }
    order
        .into_iter()
        .map(|c| {
            let (ids, values) = rows.remove(&c).unwrap_or_default();
            ScoreMatrix::new(c, ids, labels.clone(), values)
        })
        .collect()
}

pub fn read_predictions_file(path: impl AsRef<Path>) -> Result<Vec<ScoreMatrix>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions_csv(std::io::BufReader::new(file))
}

pub fn write_predictions_file(path: impl AsRef<Path>, matrices: &[ScoreMatrix]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_predictions_csv(std::io::BufWriter::new(file), matrices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(name: &str, ids: &[&str], values: Vec<f64>) -> ScoreMatrix {
        ScoreMatrix::new(
            name.into(),
            ids.iter().map(|s| s.to_string()).collect(),
            vec!["A".into(), "B".into()],
            values,
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let a = m("rf", &["x", "y"], vec![0.1, 1.0 / 3.0, 0.0, 1e-300]);
        let b = m("xgb", &["x", "y"], vec![0.5, 0.25, 0.999_999_999_7, 1.0]);
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("classifier,sample_id,A,B\n"));
        let back = read_predictions_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn set_aligns_sample_order() {
        let a = m("a", &["x", "y"], vec![0.1, 0.2, 0.3, 0.4]);
        let b = m("b", &["y", "x"], vec![0.3, 0.4, 0.1, 0.2]);
        let set = PredictionSet::new(vec![a, b]).unwrap();
        assert_eq!(set.classifiers[1].row(0), &[0.1, 0.2]);
        let dup = PredictionSet::new(vec![m("a", &["x"], vec![0.1, 0.2]), m("a", &["x"], vec![0.1, 0.2])]);
        assert!(matches!(dup, Err(Error::ClassifierMismatch(_))));
    }

    #[test]
    fn rejects_out_of_range_and_bad_cells() {
        assert!(ScoreMatrix::new("c".into(), vec!["x".into()], vec!["A".into()], vec![1.5]).is_err());
        let bad = "classifier,sample_id,A\nc,x,zero\n";
        assert!(matches!(
            read_predictions_csv(bad.as_bytes()),
            Err(Error::BadCell { .. })
        ));
    }
}
