//! Regression trees with exact greedy splits.

use serde::{Deserialize, Serialize};

use crate::scalar::{cmp, Real};

/// Column-major feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    columns: Vec<Vec<T>>,
    n_rows: usize,
}

impl<T: Real> FeatureMatrix<T> {
    /// All columns must have the same length.
    pub fn from_columns(columns: Vec<Vec<T>>) -> Self {
        let n_rows = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == n_rows), "ragged feature matrix");
        FeatureMatrix { columns, n_rows }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, f: usize) -> &[T] {
        &self.columns[f]
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Rows at `indices`, repeats allowed.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        FeatureMatrix {
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            n_rows: indices.len(),
        }
    }

    /// Row indices sorted by value, per feature; ties keep row order.
    pub(crate) fn presort(&self) -> Vec<Vec<usize>> {
        self.columns
            .iter()
            .map(|col| {
                let mut idx: Vec<usize> = (0..self.n_rows).collect();
                idx.sort_by(|&a, &b| cmp(&col[a], &col[b]).then(a.cmp(&b)));
                idx
            })
            .collect()
    }
}

/// A tree node. Every node records how many rows reached it and the
/// Bessel-corrected variance of their residuals (0 below two rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node<T> {
    Leaf {
        value: T,
        n_rows: usize,
        variance: T,
    },
    Split {
        feature: usize,
        /// Rows with `x <= threshold` go left.
        threshold: T,
        left: usize,
        right: usize,
        n_rows: usize,
        variance: T,
    },
}

impl<T: Real> Node<T> {
    pub fn n_rows(&self) -> usize {
        match self {
            Node::Leaf { n_rows, .. } | Node::Split { n_rows, .. } => *n_rows,
        }
    }

    pub fn variance(&self) -> T {
        match self {
            Node::Leaf { variance, .. } | Node::Split { variance, .. } => *variance,
        }
    }

    fn set_stats(&mut self, count: usize, var: T) {
        match self {
            Node::Leaf { n_rows, variance, .. } | Node::Split { n_rows, variance, .. } => {
                *n_rows = count;
                *variance = var;
            }
        }
    }
}

/// Flattened tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Real> Tree<T> {
    /// Indices of the nodes visited from root to leaf.
    pub fn path(&self, x: &[T]) -> Vec<usize> {
        let mut path = vec![0];
        let mut i = 0;
        while let Node::Split { feature, threshold, left, right, .. } = &self.nodes[i] {
            i = if x[*feature] <= *threshold { *left } else { *right };
            path.push(i);
        }
        path
    }

    pub fn predict(&self, x: &[T]) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    fn predict_matrix_row(&self, m: &FeatureMatrix<T>, row: usize) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if m.column(*feature)[row] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub(crate) fn add_predictions(&self, m: &FeatureMatrix<T>, scale: T, out: &mut [T]) {
        for (row, o) in out.iter_mut().enumerate() {
            *o += scale * self.predict_matrix_row(m, row);
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T: Real>(t: &Tree<T>, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Replaces every node's row count and variance with statistics of the
    /// given residuals routed through the tree.
    pub fn restat(&mut self, m: &FeatureMatrix<T>, residuals: &[T]) {
        let mut members: Vec<Vec<T>> = vec![Vec::new(); self.nodes.len()];
        for (row, &r) in residuals.iter().enumerate() {
            let x = m.row(row);
            for node in self.path(&x) {
                members[node].push(r);
            }
        }
        for (node, values) in self.nodes.iter_mut().zip(members) {
            let var = crate::stats::sample_variance(&values).unwrap_or_else(T::zero);
            node.set_stats(values.len(), var);
        }
    }
}

/// Grows one tree on `residuals` restricted to the rows in `sorted`.
pub(crate) struct TreeBuilder<'a, T> {
    matrix: &'a FeatureMatrix<T>,
    residuals: &'a [T],
    max_depth: usize,
    go_left: Vec<bool>,
    nodes: Vec<Node<T>>,
}

struct BestSplit<T> {
    slot: usize,
    threshold: T,
    gain: T,
}

impl<'a, T: Real> TreeBuilder<'a, T> {
    pub(crate) fn new(matrix: &'a FeatureMatrix<T>, residuals: &'a [T], max_depth: usize) -> Self {
        TreeBuilder {
            matrix,
            residuals,
            max_depth,
            go_left: vec![false; matrix.n_rows()],
            nodes: Vec::new(),
        }
    }

    /// `features[k]` is a feature index and `sorted[k]` the node's rows in
    /// ascending order of that feature. All lists hold the same rows.
    pub(crate) fn build(mut self, features: &[usize], sorted: Vec<Vec<usize>>) -> Tree<T> {
        self.grow(features, sorted, 0);
        Tree { nodes: self.nodes }
    }

    fn grow(&mut self, features: &[usize], sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let n = rows.len();
        let vals: Vec<T> = rows.iter().map(|&r| self.residuals[r]).collect();
        let sum: T = vals.iter().copied().sum();
        let mean = if n > 0 { sum / T::lit(n as f64) } else { T::zero() };
        let ss: T = vals.iter().map(|&v| (v - mean) * (v - mean)).sum();
        let variance = if n >= 2 { ss / T::lit((n - 1) as f64) } else { T::zero() };

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean, n_rows: n, variance });
        if depth >= self.max_depth || n < 2 {
            return id;
        }
        let Some(best) = self.best_split(features, &sorted, sum, ss) else {
            return id;
        };

        let feature = features[best.slot];
        let col = self.matrix.column(feature);
        for &r in rows {
            self.go_left[r] = col[r] <= best.threshold;
        }
        let (left_lists, right_lists): (Vec<_>, Vec<_>) = sorted
            .into_iter()
            .map(|list| list.into_iter().partition::<Vec<usize>, _>(|&r| self.go_left[r]))
            .unzip();
        let left = self.grow(features, left_lists, depth + 1);
        let right = self.grow(features, right_lists, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold: best.threshold,
            left,
            right,
            n_rows: n,
            variance,
        };
        id
    }

    /// Best variance-reducing split; ties keep the earlier feature, then the
    /// smaller threshold.
    fn best_split(&self, features: &[usize], sorted: &[Vec<usize>], sum: T, ss: T) -> Option<BestSplit<T>> {
        let n = sorted[0].len();
        let total = sum * sum / T::lit(n as f64);
        // gains below this are round-off on (near-)constant residuals
        let floor = ss * T::lit(1e-12);
        let mut best: Option<BestSplit<T>> = None;
        for (slot, &f) in features.iter().enumerate() {
            let col = self.matrix.column(f);
            let rows = &sorted[slot];
            let mut left_sum = T::zero();
            for k in 0..n - 1 {
                left_sum += self.residuals[rows[k]];
                let (a, b) = (col[rows[k]], col[rows[k + 1]]);
                if !(a < b) {
                    continue;
                }
                let n_left = T::lit((k + 1) as f64);
                let n_right = T::lit((n - k - 1) as f64);
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / n_left + right_sum * right_sum / n_right - total;
                if gain > floor && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = a + (b - a) / T::lit(2.0);
                    let threshold = if a <= mid && mid < b { mid } else { a };
                    best = Some(BestSplit { slot, threshold, gain });
                }
            }
        }
        best
    }
}
