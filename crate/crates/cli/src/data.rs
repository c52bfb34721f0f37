//! Loading and writing helpers shared by the commands.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use cxrtrees::embedding::{align, read_embedding_file, AlignedDataset, DatasetSplit};
use cxrtrees::labels::{
    apply_lsr, parse_label_csv, read_label_header, LabelHierarchy, LabelRegistry, LsrConfig, SoftLabelMatrix,
    UnmentionedPolicy, DEFAULT_HIERARCHY,
};
use cxrtrees::predictions::{read_predictions_file, ScoreMatrix};

use crate::config::pick;
use crate::error::{CliError, CliResult};
use crate::{Global, LabelArgs, PartitionArgs};

pub fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut w = create(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::new("io", e.to_string()))?;
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

pub fn read_json(path: &Path) -> CliResult<serde_json::Value> {
    serde_json::from_reader(BufReader::new(open(path)?))
        .map_err(|e| CliError::new("malformed", format!("{}: {e}", path.display())))
}

/// Soft targets for every row of the label file. Smoothing is keyed by row
/// position, so it is applied before any partition filtering.
pub fn load_soft_labels(g: &Global, a: &LabelArgs) -> CliResult<SoftLabelMatrix> {
    let cfg = &g.config.labels;
    let names = match a.label_names.clone().or_else(|| cfg.names.clone()) {
        Some(n) => n,
        None => read_label_header(open(&a.labels)?)?,
    };
    let registry = LabelRegistry::new(&names, &[])?;
    let policy: UnmentionedPolicy = pick(a.unmentioned.clone(), cfg.unmentioned.clone(), "negative".into()).parse()?;
    let anns = parse_label_csv(&a.labels, &registry, policy)?;
    let defaults = LsrConfig::default();
    let lsr = LsrConfig {
        a: pick(a.lsr_a, cfg.lsr_a, defaults.a),
        b: pick(a.lsr_b, cfg.lsr_b, defaults.b),
        seed: pick(a.lsr_seed, cfg.lsr_seed, g.seed),
    };
    Ok(apply_lsr(&anns, &names, &lsr)?)
}

/// Hierarchy over `labels`, from `path`, the config, or the built-in default.
pub fn load_hierarchy(g: &Global, path: Option<&Path>, labels: &[String]) -> CliResult<LabelHierarchy> {
    let text = match path.or(g.config.labels.hierarchy.as_deref()) {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => DEFAULT_HIERARCHY.to_string(),
    };
    Ok(LabelHierarchy::parse_restricted(&text, labels)?)
}

pub const PARTITIONS: [&str; 3] = ["train", "validation", "test"];

pub fn write_split(path: &Path, ids: &[String], split: &DatasetSplit) -> CliResult<()> {
    let mut part = vec![""; ids.len()];
    for (name, rows) in PARTITIONS.iter().zip([&split.train, &split.validation, &split.test]) {
        for &i in rows {
            part[i] = name;
        }
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| CliError::new("csv", format!("{}: {e}", path.display()));
    w.write_record(["sample_id", "partition"]).map_err(io)?;
    for (id, p) in ids.iter().zip(part) {
        w.write_record([id.as_str(), p]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Sample ids in the selected partition, or `None` without a split file.
pub fn partition_ids(p: &PartitionArgs, default: &str) -> CliResult<Option<HashSet<String>>> {
    let Some(path) = &p.split else {
        return Ok(None);
    };
    let wanted = p.partition.as_deref().unwrap_or(default);
    read_partition(path, wanted).map(Some)
}

pub fn read_partition(path: &Path, wanted: &str) -> CliResult<HashSet<String>> {
    if !PARTITIONS.contains(&wanted) {
        return Err(CliError::config(format!("unknown partition `{wanted}`")));
    }
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let bad = |e: csv::Error| CliError::new("csv", format!("{}: {e}", path.display()));
    let headers = rdr.headers().map_err(bad)?.clone();
    if headers.get(0) != Some("sample_id") || headers.get(1) != Some("partition") {
        return Err(CliError::new(
            "missing_column",
            format!("{}: expected `sample_id,partition`", path.display()),
        ));
    }
    let mut ids = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(bad)?;
        if rec.get(1) == Some(wanted) {
            ids.insert(rec.get(0).unwrap_or("").to_string());
        }
    }
    if ids.is_empty() {
        return Err(CliError::new(
            "empty",
            format!("partition `{wanted}` of {} is empty", path.display()),
        ));
    }
    Ok(ids)
}

/// Rows of `ds` whose id is in `keep`, in dataset order.
pub fn subset_dataset(ds: &AlignedDataset, keep: &HashSet<String>) -> CliResult<AlignedDataset> {
    let rows: Vec<usize> = (0..ds.n_samples())
        .filter(|&i| keep.contains(&ds.embeddings().sample_ids[i]))
        .collect();
    if rows.is_empty() {
        return Err(CliError::new("empty", "no labelled samples in the selected partition"));
    }
    Ok(ds.subset(&rows))
}

pub fn subset_scores(m: &ScoreMatrix, keep: &HashSet<String>) -> CliResult<ScoreMatrix> {
    let ids: Vec<String> = m.sample_ids.iter().filter(|id| keep.contains(*id)).cloned().collect();
    if ids.is_empty() {
        return Err(CliError::new(
            "empty",
            format!(
                "classifier `{}` has no predictions in the selected partition",
                m.classifier
            ),
        ));
    }
    Ok(m.reorder_samples(&ids)?)
}

/// Embeddings joined with soft labels, dropped ids reported on stderr.
pub fn load_aligned(g: &Global, embeddings: &Path, labels: &LabelArgs) -> CliResult<AlignedDataset> {
    let emb = read_embedding_file(embeddings)?;
    let soft = load_soft_labels(g, labels)?;
    let a = align(&emb, &soft)?;
    if !a.dropped_embeddings.is_empty() || !a.dropped_labels.is_empty() {
        eprintln!(
            "note: {} embeddings without labels and {} labels without embeddings were dropped",
            a.dropped_embeddings.len(),
            a.dropped_labels.len()
        );
    }
    Ok(a.dataset)
}

/// Every classifier from every file, in file order.
pub fn read_all_predictions(paths: &[impl AsRef<Path>]) -> CliResult<Vec<ScoreMatrix>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_predictions_file(p)?);
    }
    Ok(out)
}

/// Label-row lookup by sample id.
pub fn row_index(labels: &SoftLabelMatrix) -> HashMap<&str, usize> {
    let mut pos = HashMap::new();
    for (i, id) in labels.sample_ids.iter().enumerate() {
        pos.entry(id.as_str()).or_insert(i);
    }
    pos
}
