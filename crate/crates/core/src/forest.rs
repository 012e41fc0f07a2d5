//! CART trees and bootstrap random forests over mixed feature columns.
//!
//! Classification splits minimise Gini impurity, regression splits minimise
//! the summed squared error. Categorical features split on a subset of their
//! levels: levels ordered by mean response for regression and binary targets,
//! one level against the rest for multiclass targets.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::rng::{self, HarnessRng};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForestError {
    #[error("no training rows")]
    EmptyTraining,
    #[error("feature matrix has {features} rows but {targets} targets")]
    LengthMismatch { features: usize, targets: usize },
    #[error("classification target has a single class")]
    SingleClass,
    #[error("forest needs at least one tree")]
    NoTrees,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureColumn {
    Continuous(Vec<f64>),
    Categorical { values: Vec<u32>, levels: u32 },
}

impl FeatureColumn {
    fn len(&self) -> usize {
        match self {
            FeatureColumn::Continuous(v) => v.len(),
            FeatureColumn::Categorical { values, .. } => values.len(),
        }
    }
}

/// Column-major, fully observed feature matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    columns: Vec<FeatureColumn>,
    rows: usize,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<FeatureColumn>, rows: usize) -> Self {
        debug_assert!(columns.iter().all(|c| c.len() == rows));
        Self { columns, rows }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    /// Matrix restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                FeatureColumn::Continuous(v) => {
                    FeatureColumn::Continuous(rows.iter().map(|&r| v[r]).collect())
                }
                FeatureColumn::Categorical { values, levels } => FeatureColumn::Categorical {
                    values: rows.iter().map(|&r| values[r]).collect(),
                    levels: *levels,
                },
            })
            .collect();
        Self {
            columns,
            rows: rows.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(Vec<f64>),
    Classification { labels: Vec<u32>, classes: u32 },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(v) => v.len(),
            Targets::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxFeatures {
    Sqrt,
    Third,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, width: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => libm::sqrt(width as f64) as usize,
            MaxFeatures::Third => width / 3,
            MaxFeatures::All => width,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, width.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn classification() -> Self {
        Self {
            trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }

    pub fn regression() -> Self {
        Self {
            trees: 100,
            max_features: MaxFeatures::Third,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }

    pub fn for_targets(targets: &Targets) -> Self {
        match targets {
            Targets::Regression(_) => Self::regression(),
            Targets::Classification { .. } => Self::classification(),
        }
    }

    pub fn with_trees(mut self, trees: usize) -> Self {
        self.trees = trees;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// Left when the value is `<=` the threshold.
    Threshold(f64),
    /// Left when the level is a member.
    Subset(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Leaf {
    Mean(f64),
    /// Class proportions.
    Histogram(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_for(&self, x: &FeatureMatrix, row: usize) -> &Leaf {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(leaf) => return leaf,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    let go_left = match (&x.columns[*feature], rule) {
                        (FeatureColumn::Continuous(v), SplitRule::Threshold(t)) => v[row] <= *t,
                        (FeatureColumn::Categorical { values, .. }, SplitRule::Subset(s)) => {
                            s.get(values[row] as usize).copied().unwrap_or(false)
                        }
                        _ => false,
                    };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }

    /// Grows one tree on `sample` (row indices, repeats allowed).
    pub fn fit(
        x: &FeatureMatrix,
        y: &Targets,
        sample: Vec<usize>,
        params: &ForestParams,
        rng: &mut HarnessRng,
    ) -> Self {
        let mut builder = Builder {
            x,
            y,
            params,
            nodes: Vec::new(),
        };
        builder.grow(sample, rng);
        DecisionTree {
            nodes: builder.nodes,
        }
    }
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a Targets,
    params: &'a ForestParams,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    rule: SplitRule,
    impurity: f64,
}

/// Running node statistics for impurity computations.
#[derive(Clone)]
enum Stats {
    Regression { n: f64, sum: f64, sum_sq: f64 },
    Classification { n: f64, counts: Vec<f64> },
}

impl Stats {
    fn empty(y: &Targets) -> Self {
        match y {
            Targets::Regression(_) => Stats::Regression {
                n: 0.0,
                sum: 0.0,
                sum_sq: 0.0,
            },
            Targets::Classification { classes, .. } => Stats::Classification {
                n: 0.0,
                counts: alloc::vec![0.0; *classes as usize],
            },
        }
    }

    fn add(&mut self, y: &Targets, row: usize, sign: f64) {
        match (self, y) {
            (Stats::Regression { n, sum, sum_sq }, Targets::Regression(v)) => {
                *n += sign;
                *sum += sign * v[row];
                *sum_sq += sign * v[row] * v[row];
            }
            (Stats::Classification { n, counts }, Targets::Classification { labels, .. }) => {
                *n += sign;
                counts[labels[row] as usize] += sign;
            }
            _ => unreachable!("stats and targets disagree"),
        }
    }

    fn n(&self) -> f64 {
        match self {
            Stats::Regression { n, .. } | Stats::Classification { n, .. } => *n,
        }
    }

    /// Node size times impurity (SSE for regression, n * Gini for classes).
    fn weighted_impurity(&self) -> f64 {
        match self {
            Stats::Regression { n, sum, sum_sq } => {
                if *n == 0.0 {
                    0.0
                } else {
                    (sum_sq - sum * sum / n).max(0.0)
                }
            }
            Stats::Classification { n, counts } => {
                if *n == 0.0 {
                    0.0
                } else {
                    n - counts.iter().map(|c| c * c).sum::<f64>() / n
                }
            }
        }
    }

    /// Ordering key for categorical levels: mean response (regression) or the
    /// share of the highest class (binary).
    fn score(&self) -> f64 {
        match self {
            Stats::Regression { n, sum, .. } => sum / n,
            Stats::Classification { n, counts } => counts.last().copied().unwrap_or(0.0) / n,
        }
    }
}

impl Builder<'_> {
    fn leaf(&self, rows: &[usize]) -> Leaf {
        match self.y {
            Targets::Regression(v) => {
                let sum: f64 = rows.iter().map(|&r| v[r]).sum();
                Leaf::Mean(sum / rows.len() as f64)
            }
            Targets::Classification { labels, classes } => {
                let mut hist = alloc::vec![0.0; *classes as usize];
                for &r in rows {
                    hist[labels[r] as usize] += 1.0;
                }
                let n = rows.len() as f64;
                hist.iter_mut().for_each(|h| *h /= n);
                Leaf::Histogram(hist)
            }
        }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        match self.y {
            Targets::Regression(v) => rows.iter().all(|&r| v[r] == v[rows[0]]),
            Targets::Classification { labels, .. } => {
                rows.iter().all(|&r| labels[r] == labels[rows[0]])
            }
        }
    }

    fn grow(&mut self, root: Vec<usize>, rng: &mut HarnessRng) {
        // (node slot, rows) work list; slots are reserved before children grow
        let mut stack = alloc::vec![(0usize, root)];
        self.nodes.push(Node::Leaf(Leaf::Mean(0.0)));
        while let Some((slot, rows)) = stack.pop() {
            let min_leaf = self.params.min_samples_leaf.max(1);
            let split = if rows.len() < 2 * min_leaf || self.is_pure(&rows) {
                None
            } else {
                self.best_split(&rows, rng)
            };
            match split {
                None => self.nodes[slot] = Node::Leaf(self.leaf(&rows)),
                Some(c) => {
                    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&r| self.goes_left(c.feature, &c.rule, r));
                    let left = self.nodes.len();
                    let right = left + 1;
                    self.nodes.push(Node::Leaf(Leaf::Mean(0.0)));
                    self.nodes.push(Node::Leaf(Leaf::Mean(0.0)));
                    self.nodes[slot] = Node::Split {
                        feature: c.feature,
                        rule: c.rule,
                        left,
                        right,
                    };
                    stack.push((right, right_rows));
                    stack.push((left, left_rows));
                }
            }
        }
    }

    fn goes_left(&self, feature: usize, rule: &SplitRule, row: usize) -> bool {
        match (&self.x.columns[feature], rule) {
            (FeatureColumn::Continuous(v), SplitRule::Threshold(t)) => v[row] <= *t,
            (FeatureColumn::Categorical { values, .. }, SplitRule::Subset(s)) => {
                s[values[row] as usize]
            }
            _ => false,
        }
    }

    fn is_constant(&self, feature: usize, rows: &[usize]) -> bool {
        match &self.x.columns[feature] {
            FeatureColumn::Continuous(v) => rows.iter().all(|&r| v[r] == v[rows[0]]),
            FeatureColumn::Categorical { values, .. } => {
                rows.iter().all(|&r| values[r] == values[rows[0]])
            }
        }
    }

    fn best_split(&self, rows: &[usize], rng: &mut HarnessRng) -> Option<Candidate> {
        let width = self.x.width();
        let budget = self.params.max_features.resolve(width);
        let mut order: Vec<usize> = (0..width).collect();
        order.shuffle(rng);
        let mut visited = 0;
        let mut best: Option<Candidate> = None;
        for feature in order {
            if visited >= budget {
                break;
            }
            if self.is_constant(feature, rows) {
                continue;
            }
            visited += 1;
            let found = match &self.x.columns[feature] {
                FeatureColumn::Continuous(v) => self.best_threshold(feature, v, rows),
                FeatureColumn::Categorical { values, levels } => {
                    self.best_subset(feature, values, *levels, rows)
                }
            };
            if let Some(c) = found {
                if best.as_ref().is_none_or(|b| c.impurity < b.impurity) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn best_threshold(&self, feature: usize, v: &[f64], rows: &[usize]) -> Option<Candidate> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut sorted = rows.to_vec();
        sorted.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut left = Stats::empty(self.y);
        let mut right = Stats::empty(self.y);
        for &r in &sorted {
            right.add(self.y, r, 1.0);
        }
        let mut best: Option<(f64, f64)> = None;
        for i in 0..sorted.len() - 1 {
            let r = sorted[i];
            left.add(self.y, r, 1.0);
            right.add(self.y, r, -1.0);
            let (lo, hi) = (v[r], v[sorted[i + 1]]);
            if lo == hi || i + 1 < min_leaf || sorted.len() - i - 1 < min_leaf {
                continue;
            }
            let impurity = left.weighted_impurity() + right.weighted_impurity();
            if best.is_none_or(|(b, _)| impurity < b) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some((impurity, threshold));
            }
        }
        best.map(|(impurity, t)| Candidate {
            feature,
            rule: SplitRule::Threshold(t),
            impurity,
        })
    }

    fn best_subset(
        &self,
        feature: usize,
        values: &[u32],
        levels: u32,
        rows: &[usize],
    ) -> Option<Candidate> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut per_level: Vec<Stats> = (0..levels).map(|_| Stats::empty(self.y)).collect();
        let mut total = Stats::empty(self.y);
        for &r in rows {
            per_level[values[r] as usize].add(self.y, r, 1.0);
            total.add(self.y, r, 1.0);
        }
        let present: Vec<usize> = (0..levels as usize)
            .filter(|&l| per_level[l].n() > 0.0)
            .collect();
        let ordered = match self.y {
            Targets::Regression(_) => true,
            Targets::Classification { classes, .. } => *classes <= 2,
        };
        let candidates: Vec<Vec<usize>> = if ordered {
            let mut by_score = present.clone();
            by_score.sort_by(|&a, &b| {
                per_level[a]
                    .score()
                    .total_cmp(&per_level[b].score())
                    .then(a.cmp(&b))
            });
            (1..by_score.len()).map(|k| by_score[..k].to_vec()).collect()
        } else {
            present.iter().map(|&l| alloc::vec![l]).collect()
        };
        let mut best: Option<Candidate> = None;
        for subset in candidates {
            let mut left = Stats::empty(self.y);
            for &l in &subset {
                merge(&mut left, &per_level[l]);
            }
            let mut right = total.clone();
            subtract(&mut right, &left);
            if (left.n() as usize) < min_leaf || (right.n() as usize) < min_leaf {
                continue;
            }
            let impurity = left.weighted_impurity() + right.weighted_impurity();
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mut member = alloc::vec![false; levels as usize];
                subset.iter().for_each(|&l| member[l] = true);
                best = Some(Candidate {
                    feature,
                    rule: SplitRule::Subset(member),
                    impurity,
                });
            }
        }
        best
    }
}

fn merge(into: &mut Stats, other: &Stats) {
    match (into, other) {
        (
            Stats::Regression { n, sum, sum_sq },
            Stats::Regression {
                n: n2,
                sum: s2,
                sum_sq: q2,
            },
        ) => {
            *n += n2;
            *sum += s2;
            *sum_sq += q2;
        }
        (Stats::Classification { n, counts }, Stats::Classification { n: n2, counts: c2 }) => {
            *n += n2;
            counts.iter_mut().zip(c2).for_each(|(a, b)| *a += b);
        }
        _ => unreachable!("mixed stats"),
    }
}

fn subtract(from: &mut Stats, other: &Stats) {
    match (from, other) {
        (
            Stats::Regression { n, sum, sum_sq },
            Stats::Regression {
                n: n2,
                sum: s2,
                sum_sq: q2,
            },
        ) => {
            *n -= n2;
            *sum -= s2;
            *sum_sq -= q2;
        }
        (Stats::Classification { n, counts }, Stats::Classification { n: n2, counts: c2 }) => {
            *n -= n2;
            counts.iter_mut().zip(c2).for_each(|(a, b)| *a -= b);
        }
        _ => unreachable!("mixed stats"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Value(f64),
    Class(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    classes: Option<u32>,
}

impl RandomForest {
    /// Fits `params.trees` trees, each with its own seed derived from `seed`,
    /// so the result does not depend on scheduling.
    pub fn fit(
        x: &FeatureMatrix,
        y: &Targets,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self, ForestError> {
        if x.rows() != y.len() {
            return Err(ForestError::LengthMismatch {
                features: x.rows(),
                targets: y.len(),
            });
        }
        if y.is_empty() {
            return Err(ForestError::EmptyTraining);
        }
        if params.trees == 0 {
            return Err(ForestError::NoTrees);
        }
        let n = y.len();
        let grow = |t: usize| {
            let mut rng = rng::seeded(rng::derive_seed(seed, t as u64));
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            DecisionTree::fit(x, y, sample, params, &mut rng)
        };
        #[cfg(feature = "std")]
        let trees = {
            use rayon::prelude::*;
            (0..params.trees).into_par_iter().map(grow).collect()
        };
        #[cfg(not(feature = "std"))]
        let trees = (0..params.trees).map(grow).collect();
        let classes = match y {
            Targets::Regression(_) => None,
            Targets::Classification { classes, .. } => Some(*classes),
        };
        Ok(Self { trees, classes })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Averaged class proportions (classification forests only).
    pub fn predict_proba(&self, x: &FeatureMatrix, row: usize) -> Option<Vec<f64>> {
        let classes = self.classes? as usize;
        let mut acc = alloc::vec![0.0; classes];
        for tree in &self.trees {
            if let Leaf::Histogram(h) = tree.leaf_for(x, row) {
                acc.iter_mut().zip(h).for_each(|(a, p)| *a += p);
            }
        }
        let k = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        Some(acc)
    }

    pub fn predict(&self, x: &FeatureMatrix, row: usize) -> Prediction {
        match self.predict_proba(x, row) {
            Some(p) => {
                // lowest index wins ties
                let mut best = 0;
                for (i, v) in p.iter().enumerate() {
                    if *v > p[best] {
                        best = i;
                    }
                }
                Prediction::Class(best as u32)
            }
            None => {
                let sum: f64 = self
                    .trees
                    .iter()
                    .map(|t| match t.leaf_for(x, row) {
                        Leaf::Mean(m) => *m,
                        Leaf::Histogram(_) => 0.0,
                    })
                    .sum();
                Prediction::Value(sum / self.trees.len() as f64)
            }
        }
    }

    pub fn predict_all(&self, x: &FeatureMatrix) -> Vec<Prediction> {
        (0..x.rows()).map(|r| self.predict(x, r)).collect()
    }
}
