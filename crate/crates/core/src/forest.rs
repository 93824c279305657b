//! Random forest of CART classification trees that predicts class-1
//! probabilities by averaging leaf fractions.
//!
//! Trees are grown on bootstrap draws with Gini splits. Every feature is
//! sorted once per tree; nodes keep per-feature index lists in sorted order
//! and partition them stably, so a split search is a linear scan.

use ndarray::Array2;
use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::clip_probability;
use crate::rng::{self, Rng};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 12, min_leaf: 5, mtry: None, seed: 0 }
    }
}

impl ForestConfig {
    /// Features tried per split for `d` input columns.
    pub fn resolved_mtry(&self, d: usize) -> Result<usize> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::Config("forest n_trees, max_depth and min_leaf must be positive".into()));
        }
        match self.mtry {
            Some(0) => Err(Error::Config("mtry must be positive".into())),
            Some(m) if m > d => Err(Error::Config(format!("mtry {m} exceeds feature count {d}"))),
            Some(m) => Ok(m),
            None => Ok(((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TreeNode<T> {
    Split {
        feature: usize,
        threshold: T,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
    Leaf {
        /// Fraction of (bootstrap-weighted) training samples with target 1.
        fraction: T,
        count: usize,
    },
}

impl<T: Scalar> TreeNode<T> {
    /// Leaf fraction reached by `row`.
    pub fn predict_row(&self, row: &[T]) -> T {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { fraction, .. } => return *fraction,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Sorted, de-duplicated feature indices used by any split.
    pub fn features_used(&self) -> Vec<usize> {
        fn walk<T>(n: &TreeNode<T>, acc: &mut Vec<usize>) {
            if let TreeNode::Split { feature, left, right, .. } = n {
                acc.push(*feature);
                walk(left, acc);
                walk(right, acc);
            }
        }
        let mut acc = Vec::new();
        walk(self, &mut acc);
        acc.sort_unstable();
        acc.dedup();
        acc
    }

    pub fn leaves(&self) -> Vec<(T, usize)> {
        match self {
            TreeNode::Leaf { fraction, count } => vec![(*fraction, *count)],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestModel<T> {
    trees: Vec<TreeNode<T>>,
    n_features: usize,
}

impl<T: Scalar> ForestModel<T> {
    pub fn from_trees(trees: Vec<TreeNode<T>>, n_features: usize) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Input("a forest needs at least one tree".into()));
        }
        Ok(Self { trees, n_features })
    }

    pub fn trees(&self) -> &[TreeNode<T>] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Column-major copy of the features with each column's row order.
struct Presorted<T> {
    columns: Vec<Vec<T>>,
    order: Vec<Vec<u32>>,
}

impl<T: Scalar> Presorted<T> {
    fn new(features: &Array2<T>) -> Self {
        let columns: Vec<Vec<T>> = features.columns().into_iter().map(|c| c.to_vec()).collect();
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].partial_cmp(&col[b as usize]).expect("finite features"));
                idx
            })
            .collect();
        Self { columns, order }
    }
}

struct Grower<'a, T> {
    data: &'a Presorted<T>,
    targets: &'a [u8],
    weights: &'a [u32],
    /// Per-feature in-bag indices, sorted by that feature within each node range.
    lists: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    buffer: Vec<u32>,
    max_depth: usize,
    /// Minimum distinct in-bag rows per leaf.
    min_leaf: f64,
    mtry: usize,
}

fn gini_mass(weight: f64, positives: f64) -> f64 {
    if weight <= 0.0 {
        0.0
    } else {
        2.0 * positives * (weight - positives) / weight
    }
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    score: f64,
}

impl<'a, T: Scalar> Grower<'a, T> {
    fn new(data: &'a Presorted<T>, targets: &'a [u8], weights: &'a [u32], config: &ForestConfig, mtry: usize) -> Self {
        let lists = data
            .order
            .iter()
            .map(|o| o.iter().copied().filter(|&i| weights[i as usize] > 0).collect())
            .collect();
        Self {
            data,
            targets,
            weights,
            lists,
            goes_left: vec![false; targets.len()],
            buffer: Vec::new(),
            max_depth: config.max_depth,
            min_leaf: config.min_leaf as f64,
            mtry,
        }
    }

    fn node_totals(&self, start: usize, end: usize) -> (f64, f64) {
        self.lists[0][start..end].iter().fold((0.0, 0.0), |(w, p), &i| {
            let wi = f64::from(self.weights[i as usize]);
            (w + wi, p + wi * f64::from(self.targets[i as usize]))
        })
    }

    fn grow(&mut self, start: usize, end: usize, depth: usize, rng: &mut Rng) -> TreeNode<T> {
        let (total_w, total_p) = self.node_totals(start, end);
        let leaf = TreeNode::Leaf {
            fraction: T::lit(total_p / total_w),
            count: total_w as usize,
        };
        let distinct = (end - start) as f64;
        if depth >= self.max_depth || total_p == 0.0 || total_p == total_w || distinct < 2.0 * self.min_leaf {
            return leaf;
        }
        let Some(best) = self.best_split(start, end, total_w, total_p, rng) else {
            return leaf;
        };

        let col = &self.data.columns[best.feature];
        for &i in &self.lists[best.feature][start..end] {
            self.goes_left[i as usize] = col[i as usize] <= best.threshold;
        }
        let mut n_left = 0;
        for f in 0..self.lists.len() {
            self.buffer.clear();
            let slice = &mut self.lists[f][start..end];
            let mut w = 0;
            for k in 0..slice.len() {
                let i = slice[k];
                if self.goes_left[i as usize] {
                    slice[w] = i;
                    w += 1;
                } else {
                    self.buffer.push(i);
                }
            }
            slice[w..].copy_from_slice(&self.buffer);
            n_left = w;
        }
        let left = self.grow(start, start + n_left, depth + 1, rng);
        let right = self.grow(start + n_left, end, depth + 1, rng);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&self, start: usize, end: usize, total_w: f64, total_p: f64, rng: &mut Rng) -> Option<BestSplit<T>> {
        let d = self.lists.len();
        let parent = gini_mass(total_w, total_p);
        let mut best: Option<BestSplit<T>> = None;
        for feature in index::sample(rng, d, self.mtry).into_iter() {
            let col = &self.data.columns[feature];
            let list = &self.lists[feature][start..end];
            let (mut wl, mut pl) = (0.0, 0.0);
            for k in 0..list.len() - 1 {
                let i = list[k] as usize;
                let wi = f64::from(self.weights[i]);
                wl += wi;
                pl += wi * f64::from(self.targets[i]);
                let (a, b) = (col[i], col[list[k + 1] as usize]);
                if !(a < b) {
                    continue;
                }
                let n_left = (k + 1) as f64;
                if n_left < self.min_leaf || list.len() as f64 - n_left < self.min_leaf {
                    continue;
                }
                let score = gini_mass(wl, pl) + gini_mass(total_w - wl, total_p - pl);
                if score < parent - 1e-12 * total_w && best.as_ref().is_none_or(|bs| score < bs.score) {
                    let mut threshold = (a + b) / T::lit(2.0);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit { feature, threshold, score });
                }
            }
        }
        best
    }
}

fn check_inputs<T: Scalar>(features: &Array2<T>, targets: &[u8]) -> Result<()> {
    if features.nrows() == 0 {
        return Err(Error::Input("cannot fit a tree on an empty training set".into()));
    }
    if features.ncols() == 0 {
        return Err(Error::Input("cannot fit a tree without features".into()));
    }
    if targets.len() != features.nrows() {
        return Err(Error::Shape(format!("{} targets for {} rows", targets.len(), features.nrows())));
    }
    if targets.iter().any(|&t| t > 1) {
        return Err(Error::Validation("forest targets must be 0 or 1".into()));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("forest features must be finite".into()));
    }
    Ok(())
}

/// Grows one tree on all rows (unit weights). `rng` drives feature sampling.
pub fn tree_fit<T: Scalar>(features: &Array2<T>, targets: &[u8], config: &ForestConfig, rng: &mut Rng) -> Result<TreeNode<T>> {
    check_inputs(features, targets)?;
    let mtry = config.resolved_mtry(features.ncols())?;
    let data = Presorted::new(features);
    let weights = vec![1u32; targets.len()];
    let mut grower = Grower::new(&data, targets, &weights, config, mtry);
    Ok(grower.grow(0, targets.len(), 0, rng))
}

/// Fits `n_trees` trees, tree `t` on a bootstrap draw from stream `(seed, t)`.
pub fn forest_fit<T: Scalar>(features: &Array2<T>, targets: &[u8], config: &ForestConfig) -> Result<ForestModel<T>> {
    check_inputs(features, targets)?;
    let mtry = config.resolved_mtry(features.ncols())?;
    let data = Presorted::new(features);
    let n = targets.len();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(config.seed, "tree", &[t as u64]);
            let mut weights = vec![0u32; n];
            for _ in 0..n {
                weights[rng.random_range(0..n)] += 1;
            }
            let mut grower = Grower::new(&data, targets, &weights, config, mtry);
            grower.grow(0, grower.lists[0].len(), 0, &mut rng)
        })
        .collect();
    Ok(ForestModel { trees, n_features: features.ncols() })
}

/// Mean leaf fraction over trees, before clipping.
pub fn forest_predict_raw<T: Scalar>(model: &ForestModel<T>, features: &Array2<T>) -> Result<Vec<T>> {
    if features.ncols() != model.n_features {
        return Err(Error::Shape(format!(
            "features have {} columns, forest was trained on {}",
            features.ncols(),
            model.n_features
        )));
    }
    let nt = T::from_count(model.trees.len());
    Ok(features
        .rows()
        .into_iter()
        .map(|row| {
            let row = row.to_vec();
            model.trees.iter().map(|t| t.predict_row(&row)).sum::<T>() / nt
        })
        .collect())
}

/// Mean leaf fraction over trees, clipped to `[1e-3, 1 - 1e-3]`.
pub fn forest_predict_proba<T: Scalar>(model: &ForestModel<T>, features: &Array2<T>) -> Result<Vec<T>> {
    Ok(forest_predict_raw(model, features)?.into_iter().map(clip_probability).collect())
}
