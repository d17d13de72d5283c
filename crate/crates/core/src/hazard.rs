//! Parametric baseline hazards and the frailty / baseline parameter updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{ln_gamma, sample_gamma, slice_sample, Bounds, RngStream};

/// Parametric baseline hazard `lambda0(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BaselineHazard {
    /// `lambda0(t) = rate`.
    Exponential { rate: f64 },
    /// `lambda0(t) = rate * shape * t^(shape - 1)`, so `Lambda0(t) = rate * t^shape`.
    Weibull { shape: f64, rate: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineFamily {
    Exponential,
    Weibull,
}

impl BaselineHazard {
    pub fn family(&self) -> BaselineFamily {
        match self {
            BaselineHazard::Exponential { .. } => BaselineFamily::Exponential,
            BaselineHazard::Weibull { .. } => BaselineFamily::Weibull,
        }
    }

    pub fn rate(&self) -> f64 {
        match *self {
            BaselineHazard::Exponential { rate } | BaselineHazard::Weibull { rate, .. } => rate,
        }
    }

    #[inline]
    pub fn hazard(&self, t: f64) -> f64 {
        match *self {
            BaselineHazard::Exponential { rate } => rate,
            BaselineHazard::Weibull { shape, rate } => rate * shape * t.powf(shape - 1.0),
        }
    }

    /// `Lambda0(t)` without domain checks; `t` must be nonnegative.
    #[inline]
    pub(crate) fn cum(&self, t: f64) -> f64 {
        match *self {
            BaselineHazard::Exponential { rate } => rate * t,
            BaselineHazard::Weibull { shape, rate } => rate * t.powf(shape),
        }
    }

    /// `Lambda0^{-1}(u)` without domain checks; `u` must be nonnegative.
    #[inline]
    pub(crate) fn inv_cum(&self, u: f64) -> f64 {
        match *self {
            BaselineHazard::Exponential { rate } => u / rate,
            BaselineHazard::Weibull { shape, rate } => (u / rate).powf(1.0 / shape),
        }
    }

    pub fn cumulative_hazard(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("cumulative hazard at negative time {t}")));
        }
        Ok(self.cum(t))
    }

    pub fn inverse_cumulative_hazard(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("inverse cumulative hazard at {u}")));
        }
        Ok(self.inv_cum(u))
    }
}

/// Gamma(shape, rate) prior parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub const fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    #[inline]
    pub fn ln_density(&self, x: f64) -> f64 {
        (self.shape - 1.0) * x.ln() - self.rate * x
    }
}

/// Priors on the baseline parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselinePrior {
    pub rate: GammaPrior,
    /// Weibull shape prior; unused for the exponential family.
    pub shape: GammaPrior,
}

pub const DEFAULT_WEIBULL_SHAPE_PRIOR: GammaPrior = GammaPrior::new(2.0, 2.0);

impl BaselinePrior {
    /// Rate prior Gamma(1, m) where `m` is the mean of the observed finite
    /// interval midpoints, so the prior mean rate is `1 / m`.
    pub fn from_midpoint_mean(mean_midpoint: f64) -> Self {
        Self {
            rate: GammaPrior::new(1.0, mean_midpoint),
            shape: DEFAULT_WEIBULL_SHAPE_PRIOR,
        }
    }
}

/// Augmented-data summaries needed by the baseline update.
#[derive(Clone, Debug, Default)]
pub struct BaselineData {
    /// Event times (observed or imputed) plus rejected points.
    pub points: usize,
    /// Sum of log times over those points (Weibull only).
    pub log_time_sum: f64,
    /// `(W_i, Y_ij)` pairs: frailty and exposure horizon of every subject.
    pub exposures: Vec<(f64, f64)>,
}

impl BaselineData {
    pub fn weighted_exposure(&self) -> f64 {
        self.exposures.iter().map(|&(w, y)| w * y).sum()
    }
}

fn weibull_loglik(shape: f64, rate: f64, data: &BaselineData) -> f64 {
    let n = data.points as f64;
    let cum: f64 = data
        .exposures
        .iter()
        .map(|&(w, y)| if y > 0.0 { w * y.powf(shape) } else { 0.0 })
        .sum();
    n * (rate.ln() + shape.ln()) + (shape - 1.0) * data.log_time_sum - rate * cum
}

/// Baseline parameter update: conjugate Gamma draw for the exponential rate;
/// coordinatewise slice sampling of (shape, rate) on the log scale for Weibull.
pub fn update_baseline(
    bh: &BaselineHazard,
    data: &BaselineData,
    prior: &BaselinePrior,
    rng: &mut RngStream,
) -> Result<BaselineHazard> {
    match *bh {
        BaselineHazard::Exponential { .. } => {
            let rate = sample_gamma(
                prior.rate.shape + data.points as f64,
                prior.rate.rate + data.weighted_exposure(),
                rng,
            )?;
            Ok(BaselineHazard::Exponential { rate })
        }
        BaselineHazard::Weibull { shape, rate } => {
            let log_shape = slice_sample(
                |v| {
                    let k = v.exp();
                    weibull_loglik(k, rate, data) + prior.shape.ln_density(k) + v
                },
                shape.ln(),
                1.0,
                Bounds::REAL,
                rng,
            )?;
            let shape = log_shape.exp();
            let log_rate = slice_sample(
                |v| {
                    let r = v.exp();
                    weibull_loglik(shape, r, data) + prior.rate.ln_density(r) + v
                },
                rate.ln(),
                1.0,
                Bounds::REAL,
                rng,
            )?;
            Ok(BaselineHazard::Weibull {
                shape,
                rate: log_rate.exp(),
            })
        }
    }
}

/// Cluster frailties and their Gamma(eta, eta) parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrailtyState {
    pub eta: f64,
    pub w: Vec<f64>,
}

impl FrailtyState {
    pub fn unit(clusters: usize, eta: f64) -> Self {
        Self {
            eta,
            w: vec![1.0; clusters],
        }
    }
}

/// Per-cluster augmented-data counts for the conjugate frailty update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClusterStats {
    /// Observed or imputed events.
    pub events: usize,
    /// Rejected thinning points.
    pub rejected: usize,
    /// Sum of `Lambda0(Y_ij)` over the cluster's subjects.
    pub cum_hazard: f64,
}

impl ClusterStats {
    /// Parameters `(shape, rate)` of the Gamma full conditional of `W_i`.
    pub fn posterior(&self, eta: f64) -> (f64, f64) {
        (
            eta + (self.events + self.rejected) as f64,
            eta + self.cum_hazard,
        )
    }
}

/// Draws every `W_i` from `Gamma(eta + d_i + sum m_ij, eta + sum Lambda0(Y_ij))`.
pub fn update_frailties(eta: f64, clusters: &[ClusterStats], rng: &mut RngStream) -> Result<Vec<f64>> {
    clusters
        .iter()
        .map(|c| {
            let (shape, rate) = c.posterior(eta);
            sample_gamma(shape, rate, rng)
        })
        .collect()
}

/// Log of the Gamma(eta, eta) density summed over frailties.
pub fn frailty_log_likelihood(eta: f64, w: &[f64]) -> f64 {
    let n = w.len() as f64;
    let (sum_ln, sum) = w.iter().fold((0.0, 0.0), |(a, b), &v| (a + v.ln(), b + v));
    n * (eta * eta.ln() - ln_gamma(eta)) + (eta - 1.0) * sum_ln - eta * sum
}

/// One slice-sampling transition for `eta` targeting its Gamma prior times
/// the frailty likelihood; the slice runs on `log eta`.
pub fn update_eta(eta: f64, w: &[f64], prior: &GammaPrior, rng: &mut RngStream) -> Result<f64> {
    let (n, sum_ln, sum) = w
        .iter()
        .fold((0.0, 0.0, 0.0), |(n, a, b), &v| (n + 1.0, a + v.ln(), b + v));
    let target = |v: f64| {
        let e = v.exp();
        let lik = n * (e * v - ln_gamma(e)) + (e - 1.0) * sum_ln - e * sum;
        lik + prior.ln_density(e) + v
    };
    Ok(slice_sample(target, eta.ln(), 1.0, Bounds::REAL, rng)?.exp())
}
