//! Newton-boosted regression trees on binary log-loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::logistic::{log_loss, logit, sigmoid, smoothed_prior};

/// Hessian regularizer in leaf values and split gains.
pub const HESSIAN_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 200,
            learning_rate: 0.05,
            max_depth: 4,
            min_samples_leaf: 20,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.min_samples_leaf >= 1) {
            return Err(Error::Config("gbdt: need learning_rate > 0 and min_samples_leaf >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        samples: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
                Node::Leaf { value, .. } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, samples } => Some((value, samples)),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    pub degenerate: bool,
    /// Mean training log-loss before the first and after every round.
    pub train_loss: Vec<f64>,
}

impl GbdtModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

/// Newton leaf value `-sum(g) / (sum(h) + eps)` before shrinkage.
pub fn leaf_value(g: f64, h: f64) -> f64 {
    -g / (h + HESSIAN_EPS)
}

fn score(g: f64, h: f64) -> f64 {
    g * g / (h + HESSIAN_EPS)
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Best split of every frontier node along one feature.
fn scan_feature(
    feature: usize,
    column: &[f64],
    order: &[u32],
    slot_of: &[usize],
    node_of: &[usize],
    totals: &[Stats],
    grad: &[f64],
    hess: &[f64],
    min_leaf: usize,
) -> Vec<Option<Candidate>> {
    let k = totals.len();
    let mut left = vec![Stats::default(); k];
    let mut last = vec![f64::NAN; k];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    for &i in order {
        let i = i as usize;
        let slot = slot_of[node_of[i]];
        if slot == usize::MAX {
            continue;
        }
        let x = column[i];
        let l = &mut left[slot];
        let tot = totals[slot];
        if l.n >= min_leaf && tot.n - l.n >= min_leaf && x > last[slot] {
            let gain = score(l.g, l.h) + score(tot.g - l.g, tot.h - l.h) - score(tot.g, tot.h);
            if best[slot].is_none_or(|b| gain > b.gain) {
                let mut threshold = 0.5 * (last[slot] + x);
                if threshold >= x {
                    threshold = last[slot];
                }
                best[slot] = Some(Candidate {
                    gain,
                    feature,
                    threshold,
                });
            }
        }
        l.g += grad[i];
        l.h += hess[i];
        l.n += 1;
        last[slot] = x;
    }
    best
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    order: &'a [Vec<u32>],
    cfg: &'a GbdtConfig,
}

impl Builder<'_> {
    /// Grows one tree level by level; returns the tree and each sample's leaf node.
    fn grow(&self, grad: &[f64], hess: &[f64]) -> (Tree, Vec<usize>) {
        let n = grad.len();
        let mut node_of = vec![0usize; n];
        let mut nodes: Vec<Option<Node>> = vec![None];
        let mut stats = vec![Stats {
            g: grad.iter().sum(),
            h: hess.iter().sum(),
            n,
        }];
        let mut frontier = vec![0usize];
        for _depth in 0..self.cfg.max_depth {
            if frontier.is_empty() || self.columns.is_empty() {
                break;
            }
            let mut slot_of = vec![usize::MAX; nodes.len()];
            for (s, &node) in frontier.iter().enumerate() {
                slot_of[node] = s;
            }
            let totals: Vec<Stats> = frontier.iter().map(|&k| stats[k]).collect();
            let per_feature: Vec<Vec<Option<Candidate>>> = (0..self.columns.len())
                .into_par_iter()
                .map(|f| {
                    scan_feature(
                        f,
                        &self.columns[f],
                        &self.order[f],
                        &slot_of,
                        &node_of,
                        &totals,
                        grad,
                        hess,
                        self.cfg.min_samples_leaf,
                    )
                })
                .collect();
            let mut next = Vec::new();
            let mut split_of: Vec<Option<(usize, f64, usize, usize)>> = vec![None; nodes.len()];
            for (s, &node) in frontier.iter().enumerate() {
                // features ascend, so strict improvement keeps the lowest index on ties
                let mut best: Option<Candidate> = None;
                for cands in &per_feature {
                    if let Some(c) = cands[s] {
                        if c.gain > 1e-12 && best.is_none_or(|b| c.gain > b.gain) {
                            best = Some(c);
                        }
                    }
                }
                if let Some(c) = best {
                    let l = nodes.len();
                    nodes.push(None);
                    nodes.push(None);
                    stats.push(Stats::default());
                    stats.push(Stats::default());
                    nodes[node] = Some(Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: l,
                        right: l + 1,
                    });
                    split_of[node] = Some((c.feature, c.threshold, l, l + 1));
                    next.push(l);
                    next.push(l + 1);
                }
            }
            for i in 0..n {
                if let Some(Some((f, thr, l, r))) = split_of.get(node_of[i]) {
                    let child = if self.columns[*f][i] <= *thr { *l } else { *r };
                    node_of[i] = child;
                    let st = &mut stats[child];
                    st.g += grad[i];
                    st.h += hess[i];
                    st.n += 1;
                }
            }
            frontier = next;
        }
        let nodes = nodes
            .into_iter()
            .zip(&stats)
            .map(|(node, st)| {
                node.unwrap_or(Node::Leaf {
                    value: self.cfg.learning_rate * leaf_value(st.g, st.h),
                    samples: st.n,
                })
            })
            .collect();
        (Tree { nodes }, node_of)
    }
}

fn mean_loss(margins: &[f64], y: &[f64]) -> f64 {
    margins.iter().zip(y).map(|(&z, &t)| log_loss(z, t)).sum::<f64>() / y.len() as f64
}

/// `columns[f][i]` is feature `f` of sample `i`.
pub fn fit_gbdt(columns: &[Vec<f64>], y: &[f64], cfg: &GbdtConfig) -> Result<GbdtModel> {
    cfg.validate()?;
    let n = y.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument("gbdt: column lengths differ from label count".into()));
    }
    if columns.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("gbdt: non-finite feature".into()));
    }
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    let mut model = GbdtModel {
        base_score: 0.0,
        trees: Vec::new(),
        learning_rate: cfg.learning_rate,
        max_depth: cfg.max_depth,
        n_trees: cfg.n_trees,
        min_samples_leaf: cfg.min_samples_leaf,
        degenerate: false,
        train_loss: Vec::new(),
    };
    if pos == 0 || pos == n {
        model.base_score = logit(smoothed_prior(y));
        model.degenerate = true;
        return Ok(model);
    }
    model.base_score = logit(pos as f64 / n as f64);

    let order: Vec<Vec<u32>> = columns
        .par_iter()
        .map(|c| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let builder = Builder {
        columns,
        order: &order,
        cfg,
    };
    let mut margins = vec![model.base_score; n];
    let mut loss = mean_loss(&margins, y);
    model.train_loss.push(loss);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trial = vec![0.0; n];
    for _ in 0..cfg.n_trees {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        let (mut tree, leaf_of) = builder.grow(&grad, &hess);
        // halve the step until the training loss does not increase
        let mut scale = 1.0;
        let mut new_loss = loss;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = margins[i] + scale * leaf_of_value(&tree, leaf_of[i]);
            }
            new_loss = mean_loss(&trial, y);
            if new_loss <= loss {
                break;
            }
            scale *= 0.5;
        }
        if new_loss > loss {
            scale = 0.0;
            new_loss = loss;
        }
        if scale != 1.0 {
            for node in &mut tree.nodes {
                if let Node::Leaf { value, .. } = node {
                    *value *= scale;
                }
            }
            for i in 0..n {
                trial[i] = margins[i] + leaf_of_value(&tree, leaf_of[i]);
            }
        }
        std::mem::swap(&mut margins, &mut trial);
        loss = if scale == 1.0 { new_loss } else { mean_loss(&margins, y) };
        model.train_loss.push(loss);
        model.trees.push(tree);
    }
    Ok(model)
}

fn leaf_of_value(tree: &Tree, node: usize) -> f64 {
    match tree.nodes[node] {
        Node::Leaf { value, .. } => value,
        Node::Split { .. } => unreachable!("samples always end in leaves"),
    }
}
