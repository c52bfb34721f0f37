//! Binary regression trees stored as flat node arrays, and the two growers
//! used by the forest (variance reduction) and boosting (second-order gain).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingMatrix;

/// `feature == -1` marks a leaf. Internal nodes route `x <= threshold` left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub feature: i32,
    pub threshold: f64,
    pub value: f64,
    pub left: u32,
    pub right: u32,
}

impl Node {
    pub fn leaf(value: f64) -> Self {
        Node {
            feature: -1,
            threshold: 0.0,
            value,
            left: 0,
            right: 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature < 0
    }
}

/// Nodes in pre-order; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn single_leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::leaf(value)],
        }
    }

    /// Index of the leaf `row` lands in.
    pub fn leaf_index(&self, row: &[f32]) -> usize {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return i;
            }
            i = if f64::from(row[n.feature as usize]) <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn predict_row(&self, row: &[f32]) -> f64 {
        self.nodes[self.leaf_index(row)].value
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

/// Stopping rules shared by both growers.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowLimits {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

struct Split {
    feature: usize,
    threshold: f64,
}

fn partition(x: &EmbeddingMatrix, idx: &mut [usize], split: &Split) -> usize {
    let mut lo = 0;
    let mut hi = idx.len();
    while lo < hi {
        if f64::from(x.get(idx[lo], split.feature)) <= split.threshold {
            lo += 1;
        } else {
            hi -= 1;
            idx.swap(lo, hi);
        }
    }
    lo
}

fn midpoint(a: f32, b: f32) -> f64 {
    let (a, b) = (f64::from(a), f64::from(b));
    let m = a + (b - a) * 0.5;
    // keeps a <= m < b
    if m >= b {
        a
    } else {
        m
    }
}

/// Variance-reduction grower over a (possibly repeated) row index list.
pub(crate) struct RegressionGrower<'a> {
    x: &'a EmbeddingMatrix,
    y: &'a [f64],
    limits: GrowLimits,
    max_features: usize,
    features: Vec<usize>,
    buf: Vec<(f32, f64)>,
    nodes: Vec<Node>,
}

impl<'a> RegressionGrower<'a> {
    pub fn new(x: &'a EmbeddingMatrix, y: &'a [f64], limits: GrowLimits, max_features: usize) -> Self {
        RegressionGrower {
            x,
            y,
            limits,
            max_features: max_features.clamp(1, x.dim),
            features: (0..x.dim).collect(),
            buf: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn grow(mut self, idx: &mut [usize], rng: &mut ChaCha8Rng) -> Tree {
        self.node(idx, 0, rng);
        Tree { nodes: self.nodes }
    }

    fn node(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let id = self.nodes.len() as u32;
        let m = idx.len();
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let first = self.y[idx[0]];
        let constant = idx.iter().all(|&i| self.y[i] == first);
        // a repeated value is stored exactly, not as a rounded mean
        let mean = if constant { first } else { sum / m as f64 };
        self.nodes.push(Node::leaf(mean));
        if depth >= self.limits.max_depth || m < self.limits.min_samples_split || constant {
            return id;
        }
        let Some(split) = self.best_split(idx, sum, mean, rng) else {
            return id;
        };
        let mid = partition(self.x, idx, &split);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.node(l, depth + 1, rng);
        let right = self.node(r, depth + 1, rng);
        self.nodes[id as usize] = Node {
            feature: split.feature as i32,
            threshold: split.threshold,
            value: mean,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, idx: &[usize], sum: f64, mean: f64, rng: &mut ChaCha8Rng) -> Option<Split> {
        let m = idx.len();
        let min_leaf = self.limits.min_samples_leaf;
        if m < 2 * min_leaf {
            return None;
        }
        // partial Fisher-Yates: the first max_features entries are the sample
        let d = self.features.len();
        for k in 0..self.max_features {
            let j = rng.random_range(k..d);
            self.features.swap(k, j);
        }
        let sse: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let parent_score = sum * sum / m as f64;

        let mut best: Option<(f64, Split)> = None;
        for k in 0..self.max_features {
            let f = self.features[k];
            self.buf.clear();
            self.buf.extend(idx.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for pos in 0..m - 1 {
                left_sum += self.buf[pos].1;
                let nl = pos + 1;
                if nl < min_leaf {
                    continue;
                }
                if m - nl < min_leaf {
                    break;
                }
                if self.buf[pos].0 == self.buf[pos + 1].0 {
                    continue;
                }
                let right_sum = sum - left_sum;
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / (m - nl) as f64;
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((
                        score,
                        Split {
                            feature: f,
                            threshold: midpoint(self.buf[pos].0, self.buf[pos + 1].0),
                        },
                    ));
                }
            }
        }
        let (score, split) = best?;
        let gain = score - parent_score;
        (gain > 0.0 && gain > 1e-12 * sse).then_some(split)
    }
}

/// Exact greedy grower on gradient/hessian pairs of a twice-differentiable
/// loss. Leaf values are `-G / (H + lambda)` scaled by `shrinkage`.
pub(crate) struct NewtonGrower<'a> {
    x: &'a EmbeddingMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    max_depth: usize,
    lambda: f64,
    shrinkage: f64,
    buf: Vec<(f32, f64, f64)>,
    nodes: Vec<Node>,
}

impl<'a> NewtonGrower<'a> {
    pub fn new(
        x: &'a EmbeddingMatrix,
        grad: &'a [f64],
        hess: &'a [f64],
        max_depth: usize,
        lambda: f64,
        shrinkage: f64,
    ) -> Self {
        NewtonGrower {
            x,
            grad,
            hess,
            max_depth,
            lambda,
            shrinkage,
            buf: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn grow(mut self, idx: &mut [usize]) -> Tree {
        self.node(idx, 0);
        Tree { nodes: self.nodes }
    }

    fn weight(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.lambda;
        if denom > 0.0 {
            -g / denom * self.shrinkage
        } else {
            0.0
        }
    }

    fn node(&mut self, idx: &mut [usize], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let g: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| self.hess[i]).sum();
        let value = self.weight(g, h);
        self.nodes.push(Node::leaf(value));
        if depth >= self.max_depth || idx.len() < 2 {
            return id;
        }
        let Some(split) = self.best_split(idx, g, h) else {
            return id;
        };
        let mid = partition(self.x, idx, &split);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.node(l, depth + 1);
        let right = self.node(r, depth + 1);
        self.nodes[id as usize] = Node {
            feature: split.feature as i32,
            threshold: split.threshold,
            value,
            left,
            right,
        };
        id
    }

    fn score(&self, g: f64, h: f64) -> Option<f64> {
        let denom = h + self.lambda;
        (denom > 0.0).then(|| g * g / denom)
    }

    fn best_split(&mut self, idx: &[usize], g: f64, h: f64) -> Option<Split> {
        let parent = self.score(g, h)?;
        let m = idx.len();
        let mut best: Option<(f64, Split)> = None;
        for f in 0..self.x.dim {
            self.buf.clear();
            self.buf
                .extend(idx.iter().map(|&i| (self.x.get(i, f), self.grad[i], self.hess[i])));
            self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let (mut gl, mut hl) = (0.0, 0.0);
            for pos in 0..m - 1 {
                gl += self.buf[pos].1;
                hl += self.buf[pos].2;
                if self.buf[pos].0 == self.buf[pos + 1].0 {
                    continue;
                }
                let (Some(sl), Some(sr)) = (self.score(gl, hl), self.score(g - gl, h - hl)) else {
                    continue;
                };
                let gain = sl + sr - parent;
                if gain > 0.0 && best.as_ref().is_none_or(|(b, _)| gain > *b) {
                    best = Some((
                        gain,
                        Split {
                            feature: f,
                            threshold: midpoint(self.buf[pos].0, self.buf[pos + 1].0),
                        },
                    ));
                }
            }
        }
        let (gain, split) = best?;
        (gain > 1e-12 * parent.max(f64::MIN_POSITIVE)).then_some(split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn col(xs: &[f32]) -> EmbeddingMatrix {
        let ids = (0..xs.len()).map(|i| i.to_string()).collect();
        EmbeddingMatrix::new(ids, 1, xs.to_vec(), "t").unwrap()
    }

    fn limits(depth: usize) -> GrowLimits {
        GrowLimits {
            max_depth: depth,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let x = col(&[1.0, 2.0, 3.0, 4.0]);
        let y = [0.7; 4];
        let mut idx: Vec<usize> = (0..4).collect();
        let t = RegressionGrower::new(&x, &y, limits(10), 1).grow(&mut idx, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].value, 0.7);
    }

    #[test]
    fn step_function_threshold_between_classes() {
        let xs = [-3.0f32, -1.5, -0.25, 0.5, 2.0, 4.0];
        let x = col(&xs);
        let y: Vec<f64> = xs.iter().map(|&v| f64::from(u8::from(v > 0.0))).collect();
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        let t = RegressionGrower::new(&x, &y, limits(1), 1).grow(&mut idx, &mut ChaCha8Rng::seed_from_u64(0));
        let root = t.nodes[0];
        assert_eq!(root.feature, 0);
        assert!(root.threshold > -0.25 && root.threshold < 0.5, "{}", root.threshold);
    }

    #[test]
    fn midpoint_stays_left_closed() {
        let a = 1.0f32;
        let b = a.next_up();
        let m = midpoint(a, b);
        assert!(f64::from(a) <= m && m < f64::from(b));
    }

    #[test]
    fn newton_grower_zero_gradient_is_zero_leaf() {
        let x = col(&[0.0, 1.0, 2.0]);
        let g = [0.0; 3];
        let h = [0.25; 3];
        let mut idx: Vec<usize> = (0..3).collect();
        let t = NewtonGrower::new(&x, &g, &h, 3, 1.0, 0.1).grow(&mut idx);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].value, 0.0);
    }
}
