//! Soft decision-tree ensemble: prior, gated evaluation, leaf-marginal
//! likelihood and the Bayesian backfitting sweep.

mod backfit;
mod marginal;
mod scaler;
mod tree;

pub use backfit::{backfit_sweep, MoveKind, PooledData, SweepStats};
pub use marginal::{draw_leaf_values, tree_log_marginal, LeafStats};
pub use scaler::InputScaler;
pub use tree::{branch_probability, gate, sample_tree_prior, Node, PreorderNode, SoftTree};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernels::{slice_sample, Bounds, RngStream};

/// Ensemble hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub trees: usize,
    /// Prior standard deviation of each leaf mean (current value when it is
    /// learned).
    pub sigma_mu: f64,
    /// Scale of a half-Cauchy hyperprior on `sigma_mu`; `None` holds
    /// `sigma_mu` fixed.
    #[serde(default)]
    pub sigma_mu_prior: Option<f64>,
    pub gamma: f64,
    pub beta: f64,
    /// Rate of the Gamma(1, rate) prior on each tree's bandwidth.
    pub bandwidth_rate: f64,
    pub k: f64,
}

impl ForestHyper {
    /// Defaults for `trees` trees, with `sigma_mu = 3 / (k sqrt(trees))`.
    pub fn with_trees(trees: usize) -> Self {
        let k = 2.0;
        Self {
            trees,
            sigma_mu: 3.0 / (k * (trees as f64).sqrt()),
            gamma: 0.95,
            beta: 2.0,
            bandwidth_rate: 10.0,
            k,
            sigma_mu_prior: None,
        }
    }

    /// Same defaults, with `sigma_mu` learned under a half-Cauchy prior
    /// whose scale is the default `3 / (k sqrt(trees))`.
    pub fn with_learned_scale(trees: usize) -> Self {
        let h = Self::with_trees(trees);
        Self {
            sigma_mu_prior: Some(h.sigma_mu),
            ..h
        }
    }
}

impl Default for ForestHyper {
    fn default() -> Self {
        Self::with_trees(50)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<SoftTree>,
    pub hyper: ForestHyper,
}

impl Forest {
    /// All-stump forest with zero leaves and bandwidths drawn from the prior.
    pub fn initial(hyper: ForestHyper, rng: &mut RngStream) -> Self {
        let trees = (0..hyper.trees)
            .map(|_| {
                let bw = crate::kernels::sample_gamma(1.0, hyper.bandwidth_rate, rng)
                    .expect("positive bandwidth rate");
                SoftTree::stump(0.0, bw)
            })
            .collect();
        Self { trees, hyper }
    }

    pub fn sample_prior(hyper: ForestHyper, dim: usize, rng: &mut RngStream) -> Self {
        let trees = (0..hyper.trees)
            .map(|_| sample_tree_prior(&hyper, dim, rng))
            .collect();
        Self { trees, hyper }
    }

    /// `l` at an already-scaled input.
    #[inline]
    pub fn evaluate_scaled(&self, input: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.evaluate(input)).sum()
    }

    /// `l(t, x)` on raw time and covariates.
    pub fn evaluate(&self, t: f64, x: &[f64], scaler: &InputScaler) -> f64 {
        let input = scaler.scale(t, x);
        self.evaluate_scaled(&input)
    }

    pub fn total_leaves(&self) -> usize {
        self.trees.iter().map(SoftTree::leaf_count).sum()
    }

    /// Slice-samples `log sigma_mu` given every leaf mean when the hyperprior
    /// is enabled; otherwise does nothing.
    pub fn update_leaf_scale(&mut self, rng: &mut RngStream) -> Result<()> {
        let Some(scale) = self.hyper.sigma_mu_prior else {
            return Ok(());
        };
        let (n, ss) = self
            .trees
            .iter()
            .flat_map(|t| t.leaf_values())
            .fold((0.0, 0.0), |(n, ss), mu| (n + 1.0, ss + mu * mu));
        let target = |v: f64| {
            let s = v.exp();
            -n * v - 0.5 * ss / (s * s) - (s / scale).powi(2).ln_1p() + v
        };
        let v = slice_sample(target, self.hyper.sigma_mu.ln(), 1.0, Bounds::REAL, rng)?;
        self.hyper.sigma_mu = v.exp();
        Ok(())
    }
}
