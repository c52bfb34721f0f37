//! Findings, the finding hierarchy, raw annotations and label smoothing.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// The fourteen CheXpert findings, in the dataset's column order.
pub const CHEXPERT_FINDINGS: [&str; 14] = [
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
];

/// The five findings models are evaluated on by default.
pub const FOCUS_FINDINGS: [&str; 5] = [
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Pleural Effusion",
];

/// Default hierarchy file contents (`child: parent` per line).
pub const DEFAULT_HIERARCHY: &str = "\
# Simplified CheXpert finding hierarchy. Edit freely: only `child: parent`
# lines are read, `#` starts a comment.
Edema: Lung Opacity
Consolidation: Lung Opacity
Atelectasis: Lung Opacity
Pneumonia: Lung Opacity
Lung Lesion: Lung Opacity
Cardiomegaly: Enlarged Cardiomediastinum
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindingLabel {
    pub id: usize,
    pub name: String,
    pub is_focus: bool,
}

/// Dense, name-unique set of findings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRegistry {
    labels: Vec<FindingLabel>,
    by_name: HashMap<String, usize>,
}

impl LabelRegistry {
    pub fn new<S: AsRef<str>>(names: &[S], focus: &[S]) -> Result<Self> {
        let mut by_name = HashMap::new();
        let mut labels = Vec::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            let name = name.as_ref().to_string();
            if by_name.insert(name.clone(), id).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate label name `{name}`")));
            }
            labels.push(FindingLabel {
                id,
                name,
                is_focus: false,
            });
        }
        for f in focus {
            let id = *by_name
                .get(f.as_ref())
                .ok_or_else(|| Error::UnknownLabel(f.as_ref().to_string()))?;
            labels[id].is_focus = true;
        }
        Ok(LabelRegistry { labels, by_name })
    }

    /// The CheXpert registry with the five focus findings marked.
    pub fn chexpert() -> Self {
        Self::new(&CHEXPERT_FINDINGS, &FOCUS_FINDINGS).expect("static registry is valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[FindingLabel] {
        &self.labels
    }

    pub fn names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.labels[id].name
    }

    pub fn focus_ids(&self) -> Vec<usize> {
        self.labels.iter().filter(|l| l.is_focus).map(|l| l.id).collect()
    }
}

/// Parent links over label ids. Construction does not validate; call
/// [`validate_hierarchy`] before using a hierarchy built from user input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelHierarchy {
    parent: Vec<Option<usize>>,
}

impl LabelHierarchy {
    /// A hierarchy with no edges: every label is a root and a leaf.
    pub fn empty(n_labels: usize) -> Self {
        LabelHierarchy {
            parent: vec![None; n_labels],
        }
    }

    pub fn from_parents(parent: Vec<Option<usize>>) -> Self {
        LabelHierarchy { parent }
    }

    /// Builds from `(child, parent)` id pairs; a later pair for the same
    /// child replaces an earlier one.
    pub fn from_pairs(n_labels: usize, pairs: &[(usize, usize)]) -> Self {
        let mut parent = vec![None; n_labels];
        for &(c, p) in pairs {
            parent[c] = Some(p);
        }
        LabelHierarchy { parent }
    }

    /// Parses the `child: parent` text format against a registry.
    pub fn parse(text: &str, registry: &LabelRegistry) -> Result<Self> {
        let mut parent = vec![None; registry.len()];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (child, par) = line
                .split_once(':')
                .ok_or_else(|| Error::Malformed(format!("hierarchy line {}: expected `child: parent`", lineno + 1)))?;
            let (child, par) = (child.trim(), par.trim());
            let c = registry
                .id(child)
                .ok_or_else(|| Error::UnknownLabel(child.to_string()))?;
            let p = registry.id(par).ok_or_else(|| Error::DanglingParent {
                label: child.to_string(),
                parent: par.to_string(),
            })?;
            if parent[c].is_some_and(|old| old != p) {
                return Err(Error::Malformed(format!(
                    "hierarchy line {}: `{child}` already has a parent",
                    lineno + 1
                )));
            }
            parent[c] = Some(p);
        }
        Ok(LabelHierarchy { parent })
    }

    /// Parses against an arbitrary label list. Names in `text` that are not
    /// in `labels` are allowed; a label whose parent is absent is attached to
    /// its nearest present ancestor, or becomes a root.
    pub fn parse_restricted<S: AsRef<str>>(text: &str, labels: &[S]) -> Result<Self> {
        let mut names: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some((c, p)) = line.split_once(':') {
                for name in [c.trim(), p.trim()] {
                    if !names.iter().any(|n| n == name) {
                        names.push(name.to_string());
                    }
                }
            }
        }
        let registry = LabelRegistry::new(&names, &[] as &[String])?;
        let full = Self::parse(text, &registry)?;
        validate_named(&full, &registry)?;
        let parent = (0..labels.len())
            .map(|l| full.ancestors(l).into_iter().find(|&a| a < labels.len()))
            .collect();
        Ok(LabelHierarchy { parent })
    }

    pub fn load(path: impl AsRef<Path>, registry: &LabelRegistry) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, registry)
    }

    /// Serializes back to the text format using registry names.
    pub fn to_text(&self, registry: &LabelRegistry) -> String {
        let mut out = String::new();
        for (c, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                out.push_str(&format!("{}: {}\n", registry.name(c), registry.name(*p)));
            }
        }
        out
    }

    pub fn n_labels(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parent[id]
    }

    pub fn is_empty(&self) -> bool {
        self.parent.iter().all(Option::is_none)
    }

    /// Ancestors of `id`, nearest first. Assumes a validated hierarchy.
    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.parent[id];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent[p];
        }
        out
    }

    /// Labels that are some label's parent.
    pub fn internal(&self) -> Vec<usize> {
        let set: HashSet<usize> = self.parent.iter().flatten().copied().collect();
        let mut v: Vec<usize> = set.into_iter().collect();
        v.sort_unstable();
        v
    }

    pub fn leaves(&self) -> Vec<usize> {
        let internal: HashSet<usize> = self.internal().into_iter().collect();
        (0..self.parent.len()).filter(|i| !internal.contains(i)).collect()
    }

    /// Parents listed before children.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut depth: Vec<(usize, usize)> = (0..self.parent.len()).map(|i| (self.ancestors(i).len(), i)).collect();
        depth.sort_unstable();
        depth.into_iter().map(|(_, i)| i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyReport {
    pub leaves: Vec<usize>,
    pub internal: Vec<usize>,
}

/// Checks id closure and acyclicity, and reports leaves and internal nodes.
pub fn validate_hierarchy(h: &LabelHierarchy) -> Result<HierarchyReport> {
    let n = h.parent.len();
    for (c, p) in h.parent.iter().enumerate() {
        if let Some(p) = *p {
            if p >= n {
                return Err(Error::DanglingParent {
                    label: c.to_string(),
                    parent: p.to_string(),
                });
            }
        }
    }
    // 0 = unvisited, 1 = on the current walk, 2 = known acyclic
    let mut state = vec![0u8; n];
    for start in 0..n {
        let mut path = Vec::new();
        let mut cur = Some(start);
        while let Some(c) = cur {
            match state[c] {
                2 => break,
                1 => {
                    let pos = path.iter().position(|&x| x == c).unwrap_or(0);
                    let mut cycle: Vec<String> = path[pos..].iter().map(|x: &usize| x.to_string()).collect();
                    cycle.push(c.to_string());
                    return Err(Error::HierarchyCycle(cycle));
                }
                _ => {
                    state[c] = 1;
                    path.push(c);
                    cur = h.parent[c];
                }
            }
        }
        for c in path {
            state[c] = 2;
        }
    }
    Ok(HierarchyReport {
        leaves: h.leaves(),
        internal: h.internal(),
    })
}

/// Like [`validate_hierarchy`], but names labels in cycle reports.
pub fn validate_named(h: &LabelHierarchy, registry: &LabelRegistry) -> Result<HierarchyReport> {
    if h.n_labels() != registry.len() {
        return Err(Error::LengthMismatch(format!(
            "hierarchy covers {} labels, registry has {}",
            h.n_labels(),
            registry.len()
        )));
    }
    validate_hierarchy(h).map_err(|e| match e {
        Error::HierarchyCycle(ids) => Error::HierarchyCycle(
            ids.iter()
                .map(|s| {
                    s.parse::<usize>()
                        .map(|i| registry.name(i).to_string())
                        .unwrap_or_else(|_| s.clone())
                })
                .collect(),
        ),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnnotationValue {
    Positive,
    Negative,
    Uncertain,
    Unmentioned,
}

/// What to do with blank label cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnmentionedPolicy {
    #[default]
    Negative,
    Uncertain,
    DropSample,
}

impl FromStr for UnmentionedPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative" => Ok(Self::Negative),
            "uncertain" => Ok(Self::Uncertain),
            "drop-sample" | "drop" => Ok(Self::DropSample),
            other => Err(Error::InvalidConfig(format!("unknown unmentioned policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAnnotation {
    pub sample_id: String,
    pub values: Vec<AnnotationValue>,
}

fn parse_cell(cell: &str) -> Option<AnnotationValue> {
    match cell.trim() {
        "1" | "1.0" => Some(AnnotationValue::Positive),
        "0" | "0.0" => Some(AnnotationValue::Negative),
        "-1" | "-1.0" | "u" => Some(AnnotationValue::Uncertain),
        "" => Some(AnnotationValue::Unmentioned),
        _ => None,
    }
}

/// Header columns that never hold findings.
pub const METADATA_COLUMNS: [&str; 6] = ["sample_id", "Path", "Sex", "Age", "Frontal/Lateral", "AP/PA"];

/// Finding column names in a label CSV header, in file order.
pub fn read_label_header<R: Read>(reader: R) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let names: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .filter(|h| !METADATA_COLUMNS.contains(&h.as_str()))
        .collect();
    if names.is_empty() {
        return Err(Error::Empty("label csv has no finding columns".into()));
    }
    Ok(names)
}

/// Reads a CheXpert-style label CSV. Columns not in the registry are ignored.
pub fn parse_label_csv(
    path: impl AsRef<Path>,
    registry: &LabelRegistry,
    policy: UnmentionedPolicy,
) -> Result<Vec<RawAnnotation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_label_csv(file, registry, policy)
}

pub fn read_label_csv<R: Read>(
    reader: R,
    registry: &LabelRegistry,
    policy: UnmentionedPolicy,
) -> Result<Vec<RawAnnotation>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = find("sample_id")
        .or_else(|| find("Path"))
        .ok_or_else(|| Error::MissingColumn("sample_id".into()))?;
    let label_cols = registry
        .labels()
        .iter()
        .map(|l| find(&l.name).ok_or_else(|| Error::MissingColumn(l.name.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let mut values = Vec::with_capacity(label_cols.len());
        let mut drop = false;
        for (l, &col) in label_cols.iter().enumerate() {
            let cell = record.get(col).unwrap_or("");
            let v = parse_cell(cell).ok_or_else(|| Error::BadCell {
                row: row + 1,
                column: registry.name(l).to_string(),
                value: cell.to_string(),
            })?;
            let v = match (v, policy) {
                (AnnotationValue::Unmentioned, UnmentionedPolicy::Negative) => AnnotationValue::Negative,
                (AnnotationValue::Unmentioned, UnmentionedPolicy::Uncertain) => AnnotationValue::Uncertain,
                (AnnotationValue::Unmentioned, UnmentionedPolicy::DropSample) => {
                    drop = true;
                    AnnotationValue::Unmentioned
                }
                (v, _) => v,
            };
            values.push(v);
        }
        if !drop {
            out.push(RawAnnotation {
                sample_id: record.get(id_col).unwrap_or("").to_string(),
                values,
            });
        }
    }
    Ok(out)
}

/// Writes annotations in the label CSV format (`1`, `0`, `-1`, blank).
pub fn write_label_csv<W: std::io::Write>(
    writer: W,
    registry: &LabelRegistry,
    annotations: &[RawAnnotation],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["sample_id".to_string()];
    header.extend(registry.names());
    w.write_record(&header)?;
    for a in annotations {
        let mut rec = vec![a.sample_id.clone()];
        rec.extend(a.values.iter().map(|v| {
            match v {
                AnnotationValue::Positive => "1",
                AnnotationValue::Negative => "0",
                AnnotationValue::Uncertain => "-1",
                AnnotationValue::Unmentioned => "",
            }
            .to_string()
        }));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<label csv>", e))?;
    Ok(())
}

/// Bounds of the uniform distribution uncertain labels are mapped into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsrConfig {
    pub a: f64,
    pub b: f64,
    pub seed: u64,
}

impl Default for LsrConfig {
    fn default() -> Self {
        LsrConfig {
            a: 0.55,
            b: 0.85,
            seed: 0,
        }
    }
}

impl LsrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a > 0.5 && self.b > self.a && self.b <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "LSR bounds must satisfy 1 >= b > a > 0.5, got a={} b={}",
                self.a, self.b
            )))
        }
    }

    /// The smoothed value for an uncertain entry, drawn from `[a, b)`.
    pub fn sample(&self, sample: usize, label: usize) -> f64 {
        let u: f64 = rng::stream(self.seed, Domain::Lsr, &[sample as u64, label as u64]).random();
        let v = self.a + (self.b - self.a) * u;
        if v >= self.b {
            self.b.next_down()
        } else {
            v
        }
    }
}

/// Per-sample, per-finding targets in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMatrix {
    pub sample_ids: Vec<String>,
    pub labels: Vec<String>,
    targets: Vec<f64>,
}

impl SoftLabelMatrix {
    pub fn new(sample_ids: Vec<String>, labels: Vec<String>, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != sample_ids.len() * labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} targets for {} samples x {} labels",
                targets.len(),
                sample_ids.len(),
                labels.len()
            )));
        }
        if let Some(pos) = targets.iter().position(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidConfig(format!(
                "target {} at row {} outside [0, 1]",
                targets[pos],
                pos / labels.len().max(1)
            )));
        }
        Ok(SoftLabelMatrix {
            sample_ids,
            labels,
            targets,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, sample: usize, label: usize) -> f64 {
        self.targets[sample * self.labels.len() + label]
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        let l = self.labels.len();
        &self.targets[sample * l..(sample + 1) * l]
    }

    pub fn column(&self, label: usize) -> Vec<f64> {
        (0..self.n_samples()).map(|i| self.get(i, label)).collect()
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut targets = Vec::with_capacity(indices.len() * self.labels.len());
        for &i in indices {
            targets.extend_from_slice(self.row(i));
        }
        SoftLabelMatrix {
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            labels: self.labels.clone(),
            targets,
        }
    }

    /// Hard 0/1 truth for one label: `target >= threshold`.
    pub fn binarized_column(&self, label: usize, threshold: f64) -> Vec<u8> {
        (0..self.n_samples())
            .map(|i| u8::from(self.get(i, label) >= threshold))
            .collect()
    }
}

/// Maps annotations to soft targets: positive 1, negative 0, uncertain a
/// deterministic draw from `[a, b)` keyed by (seed, sample, label).
pub fn apply_lsr(annotations: &[RawAnnotation], labels: &[String], cfg: &LsrConfig) -> Result<SoftLabelMatrix> {
    cfg.validate()?;
    let mut targets = Vec::with_capacity(annotations.len() * labels.len());
    for (i, ann) in annotations.iter().enumerate() {
        if ann.values.len() != labels.len() {
            return Err(Error::LengthMismatch(format!(
                "sample `{}` has {} values, expected {}",
                ann.sample_id,
                ann.values.len(),
                labels.len()
            )));
        }
        for (l, v) in ann.values.iter().enumerate() {
            targets.push(match v {
                AnnotationValue::Positive => 1.0,
                AnnotationValue::Negative => 0.0,
                AnnotationValue::Uncertain => cfg.sample(i, l),
                AnnotationValue::Unmentioned => {
                    return Err(Error::InvalidConfig(format!(
                        "sample `{}` has an unresolved unmentioned value for `{}`",
                        ann.sample_id, labels[l]
                    )))
                }
            });
        }
    }
    Ok(SoftLabelMatrix {
        sample_ids: annotations.iter().map(|a| a.sample_id.clone()).collect(),
        labels: labels.to_vec(),
        targets,
    })
}

/// Indices of samples whose target is exactly 1.0 at every internal label.
pub fn filter_conditional_subset(labels: &SoftLabelMatrix, h: &LabelHierarchy) -> Vec<usize> {
    let internal = h.internal();
    (0..labels.n_samples())
        .filter(|&i| internal.iter().all(|&l| labels.get(i, l) == 1.0))
        .collect()
}

impl fmt::Display for AnnotationValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AnnotationValue::Positive => "positive",
            AnnotationValue::Negative => "negative",
            AnnotationValue::Uncertain => "uncertain",
            AnnotationValue::Unmentioned => "unmentioned",
        };
        f.write_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_registry() -> LabelRegistry {
        LabelRegistry::new(&["A", "B", "C"], &["A"]).unwrap()
    }

    #[test]
    fn registry_ids_are_dense_and_names_unique() {
        let r = LabelRegistry::chexpert();
        assert_eq!(r.len(), 14);
        for (i, l) in r.labels().iter().enumerate() {
            assert_eq!(l.id, i);
        }
        assert_eq!(r.focus_ids().len(), 5);
        assert!(LabelRegistry::new(&["A", "A"], &[]).is_err());
    }

    #[test]
    fn cells_map_to_classes() {
        let csv = "Path,Sex,A,B,C\np1,F,1.0,-1.0,\np2,M,0,u,-1\n";
        let anns = read_label_csv(csv.as_bytes(), &small_registry(), UnmentionedPolicy::Negative).unwrap();
        use AnnotationValue::*;
        assert_eq!(anns[0].sample_id, "p1");
        assert_eq!(anns[0].values, vec![Positive, Uncertain, Negative]);
        assert_eq!(anns[1].values, vec![Negative, Uncertain, Uncertain]);
    }

    #[test]
    fn blank_policies() {
        let csv = "sample_id,A,B,C\ns1,1,,0\ns2,0,1,1\n";
        let r = small_registry();
        let unc = read_label_csv(csv.as_bytes(), &r, UnmentionedPolicy::Uncertain).unwrap();
        assert_eq!(unc[0].values[1], AnnotationValue::Uncertain);
        let dropped = read_label_csv(csv.as_bytes(), &r, UnmentionedPolicy::DropSample).unwrap();
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].sample_id, "s2");
    }

    #[test]
    fn missing_column_and_bad_cell_are_reported() {
        let r = small_registry();
        let err = read_label_csv("sample_id,A,B\ns,1,0\n".as_bytes(), &r, Default::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "C"));
        let err = read_label_csv(
            "sample_id,A,B,C\ns,1,0,0\nt,1,yes,0\n".as_bytes(),
            &r,
            Default::default(),
        )
        .unwrap_err();
        match err {
            Error::BadCell { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "B", "yes"));
            }
            e => panic!("unexpected {e}"),
        }
        let err = read_label_csv("A,B,C\n1,0,0\n".as_bytes(), &r, Default::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(_)));
    }

    #[test]
    fn lsr_identity_cases_and_range() {
        use AnnotationValue::*;
        let anns = vec![RawAnnotation {
            sample_id: "x".into(),
            values: vec![Positive, Negative, Uncertain],
        }];
        let names = vec!["A".into(), "B".into(), "C".into()];
        let m = apply_lsr(&anns, &names, &LsrConfig::default()).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(0, 1), 0.0);
        let v = m.get(0, 2);
        assert!((0.55..0.85).contains(&v), "{v}");
    }

    #[test]
    fn lsr_rejects_bad_bounds() {
        for (a, b) in [(0.5, 0.8), (0.7, 0.6), (0.4, 0.9), (0.6, 1.2)] {
            let cfg = LsrConfig { a, b, seed: 0 };
            assert!(apply_lsr(&[], &[], &cfg).is_err(), "{a} {b}");
        }
    }

    #[test]
    fn hierarchy_parse_and_validate() {
        let r = LabelRegistry::chexpert();
        let h = LabelHierarchy::parse(DEFAULT_HIERARCHY, &r).unwrap();
        let rep = validate_named(&h, &r).unwrap();
        let internal: Vec<&str> = rep.internal.iter().map(|&i| r.name(i)).collect();
        assert_eq!(internal, vec!["Enlarged Cardiomediastinum", "Lung Opacity"]);
        assert_eq!(rep.leaves.len() + rep.internal.len(), r.len());
        let again = LabelHierarchy::parse(&h.to_text(&r), &r).unwrap();
        assert_eq!(again, h);
    }

    #[test]
    fn empty_hierarchy_is_all_leaves() {
        let h = LabelHierarchy::empty(4);
        let rep = validate_hierarchy(&h).unwrap();
        assert_eq!(rep.leaves, vec![0, 1, 2, 3]);
        assert!(rep.internal.is_empty());
    }

    #[test]
    fn cycles_and_dangling_parents_fail() {
        let h = LabelHierarchy::from_pairs(3, &[(0, 1), (1, 0)]);
        assert!(matches!(validate_hierarchy(&h), Err(Error::HierarchyCycle(_))));
        let h = LabelHierarchy::from_pairs(2, &[(0, 0)]);
        assert!(matches!(validate_hierarchy(&h), Err(Error::HierarchyCycle(_))));
        let h = LabelHierarchy::from_parents(vec![Some(5), None]);
        assert!(matches!(validate_hierarchy(&h), Err(Error::DanglingParent { .. })));

        let r = small_registry();
        let err = LabelHierarchy::parse("A: B\nB: A\n", &r).and_then(|h| validate_named(&h, &r));
        match err {
            Err(Error::HierarchyCycle(names)) => assert!(names.contains(&"A".to_string())),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            LabelHierarchy::parse("A: Z\n", &r),
            Err(Error::DanglingParent { .. })
        ));
    }

    #[test]
    fn filter_with_empty_hierarchy_keeps_everything() {
        let m = SoftLabelMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["X".into(), "Y".into()],
            vec![0.0, 0.7, 1.0, 0.0],
        )
        .unwrap();
        assert_eq!(filter_conditional_subset(&m, &LabelHierarchy::empty(2)), vec![0, 1]);
        let h = LabelHierarchy::from_pairs(2, &[(1, 0)]);
        assert_eq!(filter_conditional_subset(&m, &h), vec![1]);
    }

    #[test]
    fn restricted_hierarchy_skips_absent_parents() {
        let text = "B: A\nC: B\nD: X\n";
        let h = LabelHierarchy::parse_restricted(text, &["A", "C", "D"]).unwrap();
        assert_eq!(h.parent(0), None);
        assert_eq!(h.parent(1), Some(0));
        assert_eq!(h.parent(2), None);
        assert!(LabelHierarchy::parse_restricted("A: B\nB: A\n", &["A"]).is_err());
    }

    #[test]
    fn header_lists_finding_columns() {
        let csv = "Path,Sex,Age,Frontal/Lateral,AP/PA,Edema,Cardiomegaly\n";
        assert_eq!(
            read_label_header(csv.as_bytes()).unwrap(),
            vec!["Edema", "Cardiomegaly"]
        );
        assert!(read_label_header("sample_id\n".as_bytes()).is_err());
    }
}
