//! `TEM1` model files (little-endian).
//!
//! ```text
//! magic    "TEM1"
//! u8       kind: 0 = forest, 1 = boosted
//! hyperparameters
//!   forest:  u32 n_estimators, u32 max_depth, u32 min_samples_split,
//!            u32 min_samples_leaf, u8 max_features rule (0 sqrt, 1 all,
//!            2 fixed), u32 fixed k, u64 seed
//!   boosted: u32 rounds, u32 max_depth, f64 learning_rate, f64 l2_lambda,
//!            u64 seed
//! u32      feature dim
//! u32      label count
//! per label:
//!   u16 name_len, name bytes, f64 base_score, u32 tree count
//!   per tree: u32 node count, then per node in pre-order
//!     i32 feature (-1 = leaf), f64 threshold, f64 value, u32 left, u32 right
//! ```
//!
//! Depths are stored as u32 with `u32::MAX` standing for "unbounded".

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BoostHyperparams, ForestHyperparams, Hyperparams, LabelTrees, MaxFeatures, Node, Tree, TreeEnsembleModel};
use crate::binio::{put_string, Reader};
use crate::error::{Error, Result};

pub const TEM_MAGIC: [u8; 4] = *b"TEM1";

fn u32_of(v: usize) -> u32 {
    u32::try_from(v).unwrap_or(u32::MAX)
}

fn usize_of(v: u32) -> usize {
    if v == u32::MAX {
        usize::MAX
    } else {
        v as usize
    }
}

impl TreeEnsembleModel {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        self.encode(w).map_err(|e| Error::io("<model stream>", e))
    }

    fn encode<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&TEM_MAGIC)?;
        match &self.hyperparams {
            Hyperparams::Forest(hp) => {
                w.write_all(&[0])?;
                w.write_all(&u32_of(hp.n_estimators).to_le_bytes())?;
                w.write_all(&u32_of(hp.max_depth).to_le_bytes())?;
                w.write_all(&u32_of(hp.min_samples_split).to_le_bytes())?;
                w.write_all(&u32_of(hp.min_samples_leaf).to_le_bytes())?;
                let (rule, k) = match hp.max_features {
                    MaxFeatures::Sqrt => (0u8, 0u32),
                    MaxFeatures::All => (1, 0),
                    MaxFeatures::Fixed(k) => (2, u32_of(k)),
                };
                w.write_all(&[rule])?;
                w.write_all(&k.to_le_bytes())?;
                w.write_all(&hp.seed.to_le_bytes())?;
            }
            Hyperparams::Boosted(hp) => {
                w.write_all(&[1])?;
                w.write_all(&u32_of(hp.rounds).to_le_bytes())?;
                w.write_all(&u32_of(hp.max_depth).to_le_bytes())?;
                w.write_all(&hp.learning_rate.to_le_bytes())?;
                w.write_all(&hp.l2_lambda.to_le_bytes())?;
                w.write_all(&hp.seed.to_le_bytes())?;
            }
        }
        w.write_all(&u32_of(self.dim).to_le_bytes())?;
        w.write_all(&u32_of(self.labels.len()).to_le_bytes())?;
        for label in &self.labels {
            put_string(w, &label.name)?;
            w.write_all(&label.base_score.to_le_bytes())?;
            w.write_all(&u32_of(label.trees.len()).to_le_bytes())?;
            for tree in &label.trees {
                w.write_all(&u32_of(tree.nodes.len()).to_le_bytes())?;
                for n in &tree.nodes {
                    w.write_all(&n.feature.to_le_bytes())?;
                    w.write_all(&n.threshold.to_le_bytes())?;
                    w.write_all(&n.value.to_le_bytes())?;
                    w.write_all(&n.left.to_le_bytes())?;
                    w.write_all(&n.right.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.encode(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = Reader::new(r, "model file");
        let model = decode(&mut r)?;
        r.finish()?;
        Ok(model)
    }

    /// Reads one model and leaves any following bytes unread.
    pub(crate) fn read_embedded<R: Read>(r: R) -> Result<Self> {
        decode(&mut Reader::new(r, "model file"))
    }
}

fn decode<R: Read>(r: &mut Reader<R>) -> Result<TreeEnsembleModel> {
    let magic = r.bytes::<4>("magic")?;
    if magic != TEM_MAGIC {
        return Err(Error::BadMagic {
            expected: TEM_MAGIC,
            found: magic,
        });
    }
    let hyperparams = match r.u8("kind")? {
        0 => {
            let n_estimators = r.u32("n_estimators")? as usize;
            let max_depth = usize_of(r.u32("max_depth")?);
            let min_samples_split = r.u32("min_samples_split")? as usize;
            let min_samples_leaf = r.u32("min_samples_leaf")? as usize;
            let rule = r.u8("max_features rule")?;
            let k = r.u32("max_features k")? as usize;
            let max_features = match rule {
                0 => MaxFeatures::Sqrt,
                1 => MaxFeatures::All,
                2 => MaxFeatures::Fixed(k),
                other => return Err(Error::Malformed(format!("unknown max_features rule {other}"))),
            };
            Hyperparams::Forest(ForestHyperparams {
                n_estimators,
                max_depth,
                min_samples_split,
                min_samples_leaf,
                max_features,
                seed: r.u64("seed")?,
            })
        }
        1 => Hyperparams::Boosted(BoostHyperparams {
            rounds: r.u32("rounds")? as usize,
            max_depth: usize_of(r.u32("max_depth")?),
            learning_rate: r.f64("learning_rate")?,
            l2_lambda: r.f64("l2_lambda")?,
            seed: r.u64("seed")?,
        }),
        other => return Err(Error::Malformed(format!("unknown model kind {other}"))),
    };
    let dim = r.u32("dim")? as usize;
    let n_labels = r.u32("label count")? as usize;
    let mut labels = Vec::with_capacity(n_labels.min(1024));
    for _ in 0..n_labels {
        let name = r.string("label name")?;
        let base_score = r.f64("base score")?;
        let n_trees = r.u32("tree count")? as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for t in 0..n_trees {
            let n_nodes = r.u32("node count")? as usize;
            if n_nodes == 0 {
                return Err(Error::Malformed(format!("label `{name}` tree {t} has no nodes")));
            }
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
            for i in 0..n_nodes {
                let node = Node {
                    feature: r.i32("feature")?,
                    threshold: r.f64("threshold")?,
                    value: r.f64("value")?,
                    left: r.u32("left")?,
                    right: r.u32("right")?,
                };
                if !node.is_leaf() {
                    let (l, rr) = (node.left as usize, node.right as usize);
                    // pre-order: children follow their parent
                    if node.feature as usize >= dim || l <= i || rr <= i || l >= n_nodes || rr >= n_nodes {
                        return Err(Error::Malformed(format!(
                            "label `{name}` tree {t} node {i} has invalid feature or child links"
                        )));
                    }
                }
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        labels.push(LabelTrees {
            name,
            base_score,
            trees,
        });
    }
    Ok(TreeEnsembleModel {
        hyperparams,
        dim,
        labels,
    })
}

pub fn write_model_file(model: &TreeEnsembleModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    model.write_to(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<TreeEnsembleModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    TreeEnsembleModel::read_from(BufReader::new(file))
}
