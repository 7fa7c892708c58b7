//! Least-squares regression trees with axis-aligned splits.

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartParams {
    pub max_depth: usize,
    /// Minimum number of training rows in each child.
    pub min_leaf: usize,
    /// A split must reduce the SSE by more than this fraction of the root SSE.
    pub min_improvement: f64,
}

impl Default for CartParams {
    fn default() -> Self {
        Self { max_depth: 30, min_leaf: 7, min_improvement: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    /// (feature, threshold) of the root split, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first() {
            Some(Node::Split { feature, threshold, .. }) => Some((*feature, *threshold)),
            _ => None,
        }
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    params: CartParams,
    min_gain: f64,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

pub fn grow_tree(x: &Matrix, y: &[f64], params: CartParams) -> RegressionTree {
    let idx: Vec<usize> = (0..x.nrows).collect();
    let (_, root_sse) = mean_sse(y, &idx);
    let mut b = Builder {
        x,
        y,
        params,
        min_gain: (params.min_improvement * root_sse).max(1e-12 * (1.0 + root_sse)),
        nodes: Vec::new(),
    };
    b.build(idx, 0);
    RegressionTree { nodes: b.nodes }
}

fn mean_sse(y: &[f64], idx: &[usize]) -> (f64, f64) {
    if idx.is_empty() {
        return (0.0, 0.0);
    }
    let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    let sse = idx.iter().map(|&i| (y[i] - m).powi(2)).sum();
    (m, sse)
}

impl Builder<'_> {
    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let slot = self.nodes.len();
        let (mean, sse) = mean_sse(self.y, &idx);
        self.nodes.push(Node::Leaf(mean));
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf.max(1) || sse <= self.min_gain {
            return slot;
        }
        let Some(best) = self.best_split(&idx) else {
            return slot;
        };
        if best.gain <= self.min_gain {
            return slot;
        }
        let (li, ri): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x.get(i, best.feature) <= best.threshold);
        let left = self.build(li, depth + 1);
        let right = self.build(ri, depth + 1);
        self.nodes[slot] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        slot
    }

    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.params.min_leaf.max(1);
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let base = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x.ncols {
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.y[order[k - 1]];
                if k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let lo = self.x.get(order[k - 1], f);
                let hi = self.x.get(order[k], f);
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64 - base;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit { gain, feature: f, threshold: 0.5 * (lo + hi) });
                }
            }
        }
        best
    }
}
