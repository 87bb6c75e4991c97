//! Bagged axis-aligned decision trees (Gini impurity, √d features per split)
//! for ROI pixel vectors.

use std::io::{Read, Write};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, domain};
use crate::{Error, Label, Result};

const MAGIC: &[u8; 4] = b"SHFR";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per split; `None` means ⌈√d⌉.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 8,
            max_features: None,
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(Label),
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> Label {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf(label) => return label,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn depth_from(&self, i: usize) -> usize {
        match self.nodes[i] {
            Node::Leaf(_) => 0,
            Node::Split { left, right, .. } => {
                1 + self.depth_from(left as usize).max(self.depth_from(right as usize))
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.depth_from(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub n_features: usize,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

struct Builder<'a> {
    x: &'a [f64],
    y: &'a [Label],
    d: usize,
    m: usize,
    params: &'a ForestParams,
    nodes: Vec<Node>,
}

fn majority(y: &[Label], idx: &[usize]) -> Label {
    let bright = idx.iter().filter(|&&i| y[i].is_bright()).count();
    if 2 * bright > idx.len() {
        Label::Bright
    } else {
        Label::Dark
    }
}

/// `n · Gini` for a node with `b` bright of `n`; summed over children it is
/// the weighted impurity up to a constant factor.
fn weighted_gini(b: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    2.0 * b as f64 * (n - b) as f64 / n as f64
}

impl Builder<'_> {
    fn build<R: Rng>(&mut self, idx: &mut [usize], depth: usize, rng: &mut R) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf(majority(self.y, idx)));
        let bright = idx.iter().filter(|&&i| self.y[i].is_bright()).count();
        if depth >= self.params.max_depth
            || idx.len() < self.params.min_samples_split.max(2)
            || bright == 0
            || bright == idx.len()
        {
            return id;
        }
        let parent = weighted_gini(bright, idx.len());
        let mut best: Option<(f64, usize, f64)> = None;
        let mut column: Vec<(f64, bool)> = Vec::with_capacity(idx.len());
        for f in index::sample(rng, self.d, self.m) {
            column.clear();
            column.extend(idx.iter().map(|&i| (self.x[i * self.d + f], self.y[i].is_bright())));
            column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let n = column.len();
            let mut left_b = 0;
            for s in 1..n {
                left_b += usize::from(column[s - 1].1);
                if column[s - 1].0 == column[s].0 {
                    continue;
                }
                let imp = weighted_gini(left_b, s) + weighted_gini(bright - left_b, n - s);
                if best.is_none_or(|(b, _, _)| imp < b) {
                    best = Some((imp, f, 0.5 * (column[s - 1].0 + column[s].0)));
                }
            }
        }
        let Some((imp, feature, threshold)) = best else {
            return id;
        };
        if imp >= parent {
            return id;
        }
        let split = partition(idx, |i| self.x[i * self.d + feature] <= threshold);
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id as usize] =
            Node::Split { feature: feature as u32, threshold, left, right };
        id
    }
}

/// In-place stable-enough partition; returns the count satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut k = 0;
    for j in 0..idx.len() {
        if pred(idx[j]) {
            idx.swap(k, j);
            k += 1;
        }
    }
    k
}

/// Trains a forest on row vectors `features` with labels `labels`.
pub fn train_classifier(
    features: &[Vec<f64>],
    labels: &[Label],
    params: &ForestParams,
) -> Result<ForestModel> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: features.len() });
    }
    if params.n_trees == 0 || params.max_depth == 0 {
        return Err(Error::config("forest needs ≥ 1 tree and depth ≥ 1"));
    }
    if !labels.iter().any(|l| l.is_bright()) || labels.iter().all(|l| l.is_bright()) {
        return Err(Error::MissingClass);
    }
    let d = features[0].len();
    if d == 0 {
        return Err(Error::domain("empty feature vectors"));
    }
    let mut x = Vec::with_capacity(features.len() * d);
    for row in features {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite feature"));
        }
        x.extend_from_slice(row);
    }
    let m = params.max_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).clamp(1, d);
    let n = labels.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(params.seed, domain::TREE, t as u64);
            let mut idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder { x: &x, y: labels, d, m, params, nodes: Vec::new() };
            b.build(&mut idx, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel { n_features: d, params: *params, trees })
}

/// Majority vote; ties go to dark.
pub fn classify_pixels(model: &ForestModel, pixels: &[f64]) -> Result<Label> {
    if pixels.len() != model.n_features {
        return Err(Error::DimensionMismatch { expected: model.n_features, got: pixels.len() });
    }
    let votes = model.trees.iter().filter(|t| t.predict(pixels).is_bright()).count();
    Ok(if 2 * votes > model.trees.len() { Label::Bright } else { Label::Dark })
}

impl ForestModel {
    pub fn from_trees(n_features: usize, trees: Vec<Tree>) -> Self {
        let params = ForestParams { n_trees: trees.len(), ..ForestParams::default() };
        ForestModel { n_features, params, trees }
    }

    /// Versioned little-endian binary dump.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.n_features as u32).to_le_bytes())?;
        w.write_all(&(self.params.max_depth as u32).to_le_bytes())?;
        w.write_all(&(self.params.max_features.unwrap_or(0) as u32).to_le_bytes())?;
        w.write_all(&(self.params.min_samples_split as u32).to_le_bytes())?;
        w.write_all(&[u8::from(self.params.bootstrap)])?;
        w.write_all(&self.params.seed.to_le_bytes())?;
        w.write_all(&(self.trees.len() as u32).to_le_bytes())?;
        for tree in &self.trees {
            w.write_all(&(tree.nodes.len() as u32).to_le_bytes())?;
            for node in &tree.nodes {
                match *node {
                    Node::Leaf(label) => w.write_all(&[0, u8::from(label.is_bright())])?,
                    Node::Split { feature, threshold, left, right } => {
                        w.write_all(&[1])?;
                        w.write_all(&feature.to_le_bytes())?;
                        w.write_all(&threshold.to_le_bytes())?;
                        w.write_all(&left.to_le_bytes())?;
                        w.write_all(&right.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a forest dump".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported forest dump version {version}")));
        }
        let n_features = read_u32(&mut r)? as usize;
        let max_depth = read_u32(&mut r)? as usize;
        let max_features = match read_u32(&mut r)? {
            0 => None,
            m => Some(m as usize),
        };
        let min_samples_split = read_u32(&mut r)? as usize;
        let bootstrap = read_u8(&mut r)? != 0;
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed)?;
        let n_trees = read_u32(&mut r)? as usize;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = read_u32(&mut r)? as usize;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let node = match read_u8(&mut r)? {
                    0 => Node::Leaf(if read_u8(&mut r)? != 0 { Label::Bright } else { Label::Dark }),
                    1 => {
                        let feature = read_u32(&mut r)?;
                        let mut t = [0u8; 8];
                        r.read_exact(&mut t)?;
                        let left = read_u32(&mut r)?;
                        let right = read_u32(&mut r)?;
                        if feature as usize >= n_features
                            || left as usize >= n_nodes
                            || right as usize >= n_nodes
                        {
                            return Err(Error::Parse("forest node index out of range".into()));
                        }
                        Node::Split { feature, threshold: f64::from_le_bytes(t), left, right }
                    }
                    tag => return Err(Error::Parse(format!("bad node tag {tag}"))),
                };
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(Error::Parse("empty tree".into()));
            }
            trees.push(Tree { nodes });
        }
        Ok(ForestModel {
            n_features,
            params: ForestParams {
                n_trees,
                max_depth,
                max_features,
                min_samples_split,
                bootstrap,
                seed: u64::from_le_bytes(seed),
            },
            trees,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}
