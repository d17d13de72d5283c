use super::marginal::{weight_matrix, LeafStats};
use super::tree::branch_probability;
use super::{Forest, ForestHyper, SoftTree};
use crate::error::Result;
use crate::kernels::{sample_gamma, RngStream};

const P_GROW: f64 = 0.4;
const P_PRUNE: f64 = 0.4;

/// Gaussian pseudo-responses `z` at scaled inputs, stored row-major.
#[derive(Clone, Debug, Default)]
pub struct PooledData {
    dim: usize,
    inputs: Vec<f64>,
    pub z: Vec<f64>,
}

impl PooledData {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            inputs: Vec::new(),
            z: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            inputs: Vec::with_capacity(n * dim),
            z: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, input: &[f64], z: f64) {
        debug_assert_eq!(input.len(), self.dim);
        self.inputs.extend_from_slice(input);
        self.z.push(z);
    }

    pub fn clear(&mut self) {
        self.inputs.clear();
        self.z.clear();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    #[inline]
    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
}

impl MoveKind {
    fn slot(self) -> usize {
        match self {
            MoveKind::Grow => 0,
            MoveKind::Prune => 1,
            MoveKind::Change => 2,
        }
    }
}

/// Bookkeeping from one sweep.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepStats {
    /// Proposed structural moves, indexed grow/prune/change.
    pub proposed: [usize; 3],
    pub accepted: [usize; 3],
    pub bandwidth_accepted: usize,
    /// Number of (tree, datum) leaf-weight evaluations performed.
    pub weight_rows: u64,
}

pub(crate) struct Proposal {
    pub tree: SoftTree,
    /// log prior ratio plus log reverse/forward proposal ratio.
    pub log_ratio: f64,
}

/// Draws a structural proposal. Returns `None` when the proposal has zero prior mass.
pub(crate) fn propose(
    tree: &SoftTree,
    hyper: &ForestHyper,
    dim: usize,
    rng: &mut RngStream,
) -> (MoveKind, Option<Proposal>) {
    let branches = tree.branches();
    let kind = if branches.is_empty() {
        MoveKind::Grow
    } else {
        let u = rng.uniform();
        if u < P_GROW {
            MoveKind::Grow
        } else if u < P_GROW + P_PRUNE {
            MoveKind::Prune
        } else {
            MoveKind::Change
        }
    };
    let q = |d: usize| branch_probability(hyper, d);
    let proposal = match kind {
        MoveKind::Grow => {
            let leaves = tree.leaves();
            let (leaf, depth) = leaves[rng.index(leaves.len())];
            let coord = rng.index(dim);
            let cut = rng.uniform();
            let (qd, qd1) = (q(depth), q(depth + 1));
            if qd <= 0.0 {
                return (kind, None);
            }
            let mut new = tree.clone();
            new.grow(leaf, coord, cut);
            let p_grow_old = if branches.is_empty() { 1.0 } else { P_GROW };
            let log_prior = qd.ln() + 2.0 * (1.0 - qd1).ln() - (1.0 - qd).ln();
            let log_prop = P_PRUNE.ln() - (new.prunable().len() as f64).ln() - p_grow_old.ln()
                + (leaves.len() as f64).ln();
            Some(Proposal {
                tree: new,
                log_ratio: log_prior + log_prop,
            })
        }
        MoveKind::Prune => {
            let nogs = tree.prunable();
            let (branch, depth) = nogs[rng.index(nogs.len())];
            let (qd, qd1) = (q(depth), q(depth + 1));
            let mut new = tree.clone();
            new.prune(branch);
            let p_grow_new = if new.leaf_count() == 1 { 1.0 } else { P_GROW };
            let log_prior = (1.0 - qd).ln() - qd.ln() - 2.0 * (1.0 - qd1).ln();
            let log_prop = p_grow_new.ln() - (new.leaf_count() as f64).ln() - P_PRUNE.ln()
                + (nogs.len() as f64).ln();
            Some(Proposal {
                tree: new,
                log_ratio: log_prior + log_prop,
            })
        }
        MoveKind::Change => {
            let (branch, _) = branches[rng.index(branches.len())];
            let mut new = tree.clone();
            new.set_rule(branch, rng.index(dim), rng.uniform());
            Some(Proposal {
                tree: new,
                log_ratio: 0.0,
            })
        }
    };
    (kind, proposal)
}

/// One Bayesian backfitting sweep over every tree of `forest` against the
/// pseudo-responses in `data`.
///
/// For each tree: form partial residuals, propose grow/prune/change
/// (0.4/0.4/0.2) with leaf means integrated out, update the bandwidth by an
/// independence Metropolis step from its Gamma prior (also leaf-marginal),
/// then draw the leaf means from their joint Gaussian full conditional.
pub fn backfit_sweep(
    forest: &mut Forest,
    data: &PooledData,
    rng: &mut RngStream,
) -> Result<SweepStats> {
    let n = data.len();
    let dim = data.dim();
    let sigma = forest.hyper.sigma_mu;
    let hyper = forest.hyper.clone();
    let mut stats = SweepStats::default();

    let mut fits: Vec<Vec<f64>> = forest
        .trees
        .iter()
        .map(|t| (0..n).map(|i| t.evaluate(data.input(i))).collect())
        .collect();
    stats.weight_rows += (n * forest.trees.len()) as u64;
    let mut total = vec![0.0; n];
    for fit in &fits {
        for (acc, v) in total.iter_mut().zip(fit) {
            *acc += v;
        }
    }
    let mut resid = vec![0.0; n];

    for (tree, fit) in forest.trees.iter_mut().zip(fits.iter_mut()) {
        for i in 0..n {
            resid[i] = data.z[i] - total[i] + fit[i];
        }

        let (mut weights, mut leaves) = weight_matrix(tree, data);
        stats.weight_rows += n as u64;
        let mut leaf_stats = LeafStats::from_weights(&weights, leaves, &resid);
        let mut log_marg = leaf_stats.log_marginal(sigma)?;

        let (kind, proposal) = propose(tree, &hyper, dim, rng);
        stats.proposed[kind.slot()] += 1;
        if let Some(p) = proposal {
            let (w_new, l_new) = weight_matrix(&p.tree, data);
            stats.weight_rows += n as u64;
            let s_new = LeafStats::from_weights(&w_new, l_new, &resid);
            if let Ok(lm_new) = s_new.log_marginal(sigma) {
                if rng.uniform().ln() < lm_new - log_marg + p.log_ratio {
                    *tree = p.tree;
                    weights = w_new;
                    leaves = l_new;
                    leaf_stats = s_new;
                    log_marg = lm_new;
                    stats.accepted[kind.slot()] += 1;
                }
            }
        }

        if leaves > 1 {
            let bw = sample_gamma(1.0, hyper.bandwidth_rate, rng)?;
            let mut candidate = tree.clone();
            candidate.set_bandwidth(bw);
            let (w_new, l_new) = weight_matrix(&candidate, data);
            stats.weight_rows += n as u64;
            let s_new = LeafStats::from_weights(&w_new, l_new, &resid);
            if let Ok(lm_new) = s_new.log_marginal(sigma) {
                if rng.uniform().ln() < lm_new - log_marg {
                    *tree = candidate;
                    weights = w_new;
                    leaf_stats = s_new;
                    stats.bandwidth_accepted += 1;
                }
            }
        } else {
            // a stump's likelihood does not depend on its bandwidth
            tree.set_bandwidth(sample_gamma(1.0, hyper.bandwidth_rate, rng)?);
        }

        let values = leaf_stats.draw(sigma, rng)?;
        tree.set_leaf_values(&values);
        for i in 0..n {
            let row = &weights[i * leaves..(i + 1) * leaves];
            let new_fit: f64 = row.iter().zip(&values).map(|(w, m)| w * m).sum();
            total[i] += new_fit - fit[i];
            fit[i] = new_fit;
        }
    }
    Ok(stats)
}
