//! Random forest for binary labels: bootstrap trees grown to purity with
//! Gini splits over `mtry` random features per node, majority vote.
//!
//! Each tree keeps one row ordering per feature, sorted once per tree from a
//! global presort, and partitions those orderings in place as it splits, so
//! every node scans its rows in feature order without re-sorting.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ContactError, N_FEATURES};
use crate::split::Dataset;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 500, mtry: 4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: u8, threshold: f64, left: u32, right: u32 },
    /// Bootstrap class counts that reached the leaf.
    Leaf { counts: [u32; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> u8 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
                Node::Leaf { counts } => return u8::from(counts[1] > counts[0]),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Split { left, right, .. } => 1 + go(t, *left as usize).max(go(t, *right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub seed: u64,
    pub mtry: usize,
    pub n_trees: usize,
    /// Out-of-bag error measured while training.
    pub oob_error: f64,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Votes for class 1.
    pub fn votes(&self, x: &[f64; N_FEATURES]) -> usize {
        self.trees.iter().filter(|t| t.predict(x) == 1).count()
    }

    /// Majority vote; a tie goes to class 0.
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> u8 {
        u8::from(2 * self.votes(x) > self.trees.len())
    }

    pub fn predict_all(&self, data: &Dataset) -> Vec<u8> {
        data.features.iter().map(|x| self.predict(x)).collect()
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), ContactError> {
        serde_json::to_writer(w, self).map_err(|e| ContactError::Format(e.to_string()))
    }

    pub fn load<R: Read>(r: R) -> Result<Self, ContactError> {
        let m: ForestModel = serde_json::from_reader(r).map_err(|e| ContactError::Format(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(ContactError::Format(format!(
                "model format {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        for t in &m.trees {
            for n in &t.nodes {
                if let Node::Split { feature, left, right, .. } = n {
                    if *feature as usize >= N_FEATURES || *left as usize >= t.nodes.len() || *right as usize >= t.nodes.len() {
                        return Err(ContactError::Format("tree references an invalid feature or node".into()));
                    }
                }
            }
        }
        Ok(m)
    }
}

/// Column-major copy of the training data with one global sort per feature.
struct Presorted<'a> {
    cols: Vec<Vec<f64>>,
    sorted: Vec<Vec<u32>>,
    labels: &'a [u8],
}

impl<'a> Presorted<'a> {
    fn new(data: &'a Dataset) -> Self {
        let n = data.len();
        let cols: Vec<Vec<f64>> = (0..N_FEATURES).map(|f| data.features.iter().map(|x| x[f]).collect()).collect();
        let sorted = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
                idx
            })
            .collect();
        Self { cols, sorted, labels: &data.labels }
    }
}

struct Grower<'p, 'a> {
    data: &'p Presorted<'a>,
    weight: Vec<u32>,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    mtry: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Grower<'_, '_> {
    fn class_weights(&self, lo: usize, hi: usize) -> [f64; 2] {
        let mut w = [0.0; 2];
        for &r in &self.order[0][lo..hi] {
            w[self.data.labels[r as usize] as usize] += self.weight[r as usize] as f64;
        }
        w
    }

    fn best_split(&self, lo: usize, hi: usize, total: [f64; 2], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let n = total[0] + total[1];
        let parent = (total[0] * total[0] + total[1] * total[1]) / n;
        let mut features: [usize; N_FEATURES] = std::array::from_fn(|i| i);
        let mut best: Option<BestSplit> = None;
        for k in 0..self.mtry {
            let j = rng.random_range(k..N_FEATURES);
            features.swap(k, j);
            let f = features[k];
            let col = &self.data.cols[f];
            let rows = &self.order[f][lo..hi];
            let mut left = [0.0f64; 2];
            for i in 0..rows.len() - 1 {
                let r = rows[i] as usize;
                left[self.data.labels[r] as usize] += self.weight[r] as f64;
                let (v, v_next) = (col[r], col[rows[i + 1] as usize]);
                if v >= v_next {
                    continue;
                }
                let nl = left[0] + left[1];
                let right = [total[0] - left[0], total[1] - left[1]];
                let nr = n - nl;
                let score = (left[0] * left[0] + left[1] * left[1]) / nl + (right[0] * right[0] + right[1] * right[1]) / nr;
                if score > parent * (1.0 + 1e-12) && best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = 0.5 * (v + v_next);
                    let threshold = if mid < v_next { mid } else { v };
                    best = Some(BestSplit { feature: f, threshold, score });
                }
            }
        }
        best
    }

    /// Stable partition of every feature ordering on `[lo, hi)`.
    fn partition(&mut self, lo: usize, hi: usize, split: &BestSplit) -> usize {
        let col = &self.data.cols[split.feature];
        for &r in &self.order[0][lo..hi] {
            self.goes_left[r as usize] = col[r as usize] <= split.threshold;
        }
        let mut mid = lo;
        for f in 0..N_FEATURES {
            self.scratch.clear();
            let seg = &mut self.order[f][lo..hi];
            let mut w = 0;
            for i in 0..seg.len() {
                let r = seg[i];
                if self.goes_left[r as usize] {
                    seg[w] = r;
                    w += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
            mid = lo + w;
        }
        mid
    }

    fn grow(&mut self, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = vec![Node::Leaf { counts: [0, 0] }];
        let mut stack = vec![(0usize, 0usize, self.order[0].len())];
        while let Some((id, lo, hi)) = stack.pop() {
            let w = self.class_weights(lo, hi);
            let counts = [w[0] as u32, w[1] as u32];
            if w[0] == 0.0 || w[1] == 0.0 || hi - lo < 2 {
                nodes[id] = Node::Leaf { counts };
                continue;
            }
            let Some(split) = self.best_split(lo, hi, w, rng) else {
                nodes[id] = Node::Leaf { counts };
                continue;
            };
            let mid = self.partition(lo, hi, &split);
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { counts: [0, 0] });
            nodes.push(Node::Leaf { counts: [0, 0] });
            nodes[id] = Node::Split { feature: split.feature as u8, threshold: split.threshold, left: l as u32, right: r as u32 };
            stack.push((r, mid, hi));
            stack.push((l, lo, mid));
        }
        Tree { nodes }
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn grow_tree(pre: &Presorted<'_>, mtry: usize, seed: u64, index: usize) -> (Tree, Vec<u32>) {
    let n = pre.labels.len();
    let mut rng = tree_rng(seed, index);
    let mut weight = vec![0u32; n];
    for _ in 0..n {
        weight[rng.random_range(0..n)] += 1;
    }
    let order: Vec<Vec<u32>> = pre.sorted.iter().map(|s| s.iter().copied().filter(|&r| weight[r as usize] > 0).collect()).collect();
    let mut g = Grower { data: pre, weight, order, goes_left: vec![false; n], scratch: Vec::new(), mtry };
    let tree = g.grow(&mut rng);
    (tree, g.weight)
}

/// Grows `n_trees` bootstrap trees. Tree `i` draws from the ChaCha stream
/// `i` of the master seed, so the model is reproducible bit for bit.
pub fn train_forest(data: &Dataset, params: &ForestParams) -> Result<ForestModel, ContactError> {
    if data.is_empty() {
        return Err(ContactError::Empty("training set"));
    }
    let pos = data.positives();
    if pos == 0 || pos == data.len() {
        return Err(ContactError::DegenerateModel);
    }
    if params.n_trees == 0 {
        return Err(ContactError::Empty("forest needs at least one tree"));
    }
    let mtry = params.mtry.clamp(1, N_FEATURES);
    let pre = Presorted::new(data);
    let n = data.len();
    let mut oob_votes = vec![[0u32; 2]; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let (tree, weight) = grow_tree(&pre, mtry, params.seed, t);
        for (r, &w) in weight.iter().enumerate() {
            if w == 0 {
                oob_votes[r][tree.predict(&data.features[r]) as usize] += 1;
            }
        }
        trees.push(tree);
    }
    Ok(ForestModel {
        format_version: MODEL_FORMAT_VERSION,
        seed: params.seed,
        mtry,
        n_trees: params.n_trees,
        oob_error: oob_error(&oob_votes, &data.labels),
        trees,
    })
}

fn oob_error(votes: &[[u32; 2]], labels: &[u8]) -> f64 {
    let (mut wrong, mut seen) = (0usize, 0usize);
    for (v, &y) in votes.iter().zip(labels) {
        if v[0] + v[1] == 0 {
            continue;
        }
        seen += 1;
        if u8::from(v[1] > v[0]) != y {
            wrong += 1;
        }
    }
    if seen == 0 {
        0.0
    } else {
        wrong as f64 / seen as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtryTuning {
    pub best: usize,
    /// `(mtry, oob_error)` per candidate.
    pub oob: Vec<(usize, f64)>,
}

/// Picks the candidate with the lowest OOB error of a probe forest; ties go
/// to the smaller `mtry`. Single-class data scores 0 for every candidate.
pub fn tune_mtry(train: &Dataset, candidates: &[usize], probe_trees: usize, seed: u64) -> Result<MtryTuning, ContactError> {
    if train.is_empty() {
        return Err(ContactError::Empty("training set"));
    }
    if candidates.is_empty() {
        return Err(ContactError::Empty("no mtry candidates"));
    }
    let pos = train.positives();
    let single_class = pos == 0 || pos == train.len();
    let mut oob = Vec::with_capacity(candidates.len());
    for &m in candidates {
        let e = if single_class {
            0.0
        } else {
            train_forest(train, &ForestParams { n_trees: probe_trees, mtry: m, seed })?.oob_error
        };
        oob.push((m, e));
    }
    let best = oob
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(m, _)| m)
        .expect("non-empty candidates");
    Ok(MtryTuning { best, oob })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::SampleKey;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = Dataset::default();
        for i in 0..n {
            let mut x = [0.0; N_FEATURES];
            for v in x.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let y = u8::from(x[0] + 0.5 * x[1] > 0.1);
            d.push(x, y, SampleKey { replicate: 0, sample: i as u32 });
        }
        d
    }

    #[test]
    fn separable_training_error_is_zero() {
        let d = toy(300, 1);
        let m = train_forest(&d, &ForestParams { n_trees: 25, mtry: 3, seed: 7 }).unwrap();
        assert!(d.features.iter().zip(&d.labels).all(|(x, &y)| m.predict(x) == y));
    }

    #[test]
    fn deterministic_under_seed() {
        let d = toy(200, 2);
        let p = ForestParams { n_trees: 10, mtry: 4, seed: 99 };
        assert_eq!(train_forest(&d, &p).unwrap(), train_forest(&d, &p).unwrap());
        let other = train_forest(&d, &ForestParams { seed: 100, ..p }).unwrap();
        assert_ne!(other.trees, train_forest(&d, &p).unwrap().trees);
    }

    #[test]
    fn single_class_is_degenerate() {
        let mut d = toy(50, 3);
        d.labels.iter_mut().for_each(|y| *y = 1);
        assert!(matches!(train_forest(&d, &ForestParams::default()), Err(ContactError::DegenerateModel)));
        let t = tune_mtry(&d, &[2, 3, 4, 5, 6, 7, 8], 10, 0).unwrap();
        assert_eq!(t.best, 2);
        assert!(t.oob.iter().all(|(_, e)| *e == 0.0));
    }

    #[test]
    fn leaves_are_pure_or_unsplittable() {
        let d = toy(150, 4);
        let m = train_forest(&d, &ForestParams { n_trees: 5, mtry: 10, seed: 1 }).unwrap();
        for t in &m.trees {
            for n in &t.nodes {
                if let Node::Leaf { counts } = n {
                    assert!(counts[0] == 0 || counts[1] == 0);
                }
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let d = toy(100, 5);
        let m = train_forest(&d, &ForestParams { n_trees: 5, mtry: 2, seed: 3 }).unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        assert_eq!(ForestModel::load(&buf[..]).unwrap(), m);
        let mut bad = m.clone();
        bad.format_version = 99;
        let mut buf = Vec::new();
        bad.save(&mut buf).unwrap();
        assert!(matches!(ForestModel::load(&buf[..]), Err(ContactError::Format(_))));
    }

    #[test]
    fn tie_vote_goes_to_zero() {
        let leaf = |c: u8| Tree { nodes: vec![Node::Leaf { counts: if c == 1 { [0, 3] } else { [3, 0] } }] };
        let m = ForestModel { format_version: 1, seed: 0, mtry: 1, n_trees: 2, oob_error: 0.0, trees: vec![leaf(0), leaf(1)] };
        assert_eq!(m.predict(&[0.0; N_FEATURES]), 0);
    }
}
