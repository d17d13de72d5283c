//! Posterior survival curves, restricted mean survival time, LPML and the
//! benchmark RMSE.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{CensorKind, SubjectRecord};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::InputScaler;
use crate::kernels::normal_cdf;
use crate::sampler::{Draw, PosteriorDraws};

/// How the frailty enters a predicted curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrailtyMode {
    /// `W = 1`: `S = exp(-Lambda)`.
    Unit,
    /// `W` integrated against its Gamma(eta, eta) law: `S = (1 + Lambda/eta)^(-eta)`.
    Marginal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    /// `per_draw[d][k]` is the survival at `times[k]` under draw `d`.
    pub per_draw: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Linear-interpolated sample quantile (`q` in [0, 1]) of sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Draw mean and 2.5% / 97.5% bands of `per_draw[d][k]` for each `k`.
fn summarize(per_draw: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut mean = Vec::with_capacity(len);
    let mut lower = Vec::with_capacity(len);
    let mut upper = Vec::with_capacity(len);
    let mut col = Vec::with_capacity(per_draw.len());
    for k in 0..len {
        col.clear();
        col.extend(per_draw.iter().map(|row| row[k]));
        mean.push(col.iter().sum::<f64>() / col.len() as f64);
        col.sort_by(|a, b| a.total_cmp(b));
        lower.push(quantile_sorted(&col, 0.025));
        upper.push(quantile_sorted(&col, 0.975));
    }
    (mean, lower, upper)
}

/// Cumulative hazard `Lambda(t) = int_0^t lambda0(s) Phi(l(s, x)) ds` under one
/// draw at each of `times` (ascending, within `[0, horizon]`).
///
/// The integral is a trapezoid rule in the increments of `Lambda0` over a
/// uniform `grid`-point mesh on `[0, horizon]`; `Phi(l)` is interpolated
/// linearly between mesh points for times off the mesh.
pub fn cumulative_hazard_at(
    draw: &Draw,
    scaled_x: &[f64],
    scaler: &InputScaler,
    horizon: f64,
    grid: usize,
    times: &[f64],
) -> Vec<f64> {
    let m = grid.max(2) - 1;
    let h = horizon / m as f64;
    let mut input = Vec::with_capacity(scaled_x.len() + 1);
    input.push(0.0);
    input.extend_from_slice(scaled_x);
    let mut phi = Vec::with_capacity(m + 1);
    let mut cum0 = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let s = k as f64 * h;
        input[0] = scaler.scale_time(s);
        phi.push(normal_cdf(draw.evaluate_scaled(&input)));
        cum0.push(draw.bh.cum(s));
    }
    let mut acc = vec![0.0; m + 1];
    for k in 1..=m {
        acc[k] = acc[k - 1] + 0.5 * (cum0[k] - cum0[k - 1]) * (phi[k] + phi[k - 1]);
    }
    times
        .iter()
        .map(|&t| {
            if !(h > 0.0) || t <= 0.0 {
                return 0.0;
            }
            let pos = (t / h).min(m as f64);
            let k = (pos.floor() as usize).min(m - 1);
            let frac = pos - k as f64;
            if frac <= 0.0 {
                return acc[k];
            }
            let phi_t = phi[k] + frac * (phi[k + 1] - phi[k]);
            acc[k] + 0.5 * (draw.bh.cum(t) - cum0[k]) * (phi[k] + phi_t)
        })
        .collect()
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Domain("no prediction times".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Domain("prediction times must be finite and >= 0".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("prediction times must be ascending".into()));
    }
    Ok(())
}

/// Posterior survival curve at raw covariates `x` and ascending `times`,
/// using a `grid`-point quadrature mesh over `[0, max(times)]`.
pub fn predict_survival(
    draws: &PosteriorDraws,
    x: &[f64],
    times: &[f64],
    mode: FrailtyMode,
    grid: usize,
) -> Result<SurvivalCurve> {
    if draws.draws.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    check_times(times)?;
    let scaler = &draws.header.scaler;
    if x.len() != scaler.covariate_dim() {
        return Err(Error::Shape(format!(
            "expected {} covariates, got {}",
            scaler.covariate_dim(),
            x.len()
        )));
    }
    let scaled_x = scaler.scale_covariates(x);
    let horizon = *times.last().unwrap();
    let per_draw: Vec<Vec<f64>> = draws
        .draws
        .par_iter()
        .map(|d| {
            cumulative_hazard_at(d, &scaled_x, scaler, horizon, grid, times)
                .into_iter()
                .map(|lam| match mode {
                    FrailtyMode::Marginal if d.eta.is_finite() => {
                        (-d.eta * (lam / d.eta).ln_1p()).exp()
                    }
                    _ => (-lam).exp(),
                })
                .collect()
        })
        .collect();
    let (mean, lower, upper) = summarize(&per_draw, times.len());
    Ok(SurvivalCurve {
        times: times.to_vec(),
        per_draw,
        mean,
        lower,
        upper,
    })
}

/// Curves for several covariate rows sharing the same times.
pub fn predict_survival_many(
    draws: &PosteriorDraws,
    rows: &[Vec<f64>],
    times: &[f64],
    mode: FrailtyMode,
    grid: usize,
) -> Result<Vec<SurvivalCurve>> {
    rows.iter()
        .map(|x| predict_survival(draws, x, times, mode, grid))
        .collect()
}

/// Writes `subject,time,mean,lower,upper` rows, one per (subject, time).
pub fn write_curves<W: Write>(mut out: W, curves: &[SurvivalCurve]) -> Result<()> {
    writeln!(out, "subject,time,mean,lower,upper")?;
    for (i, c) in curves.iter().enumerate() {
        for k in 0..c.times.len() {
            writeln!(
                out,
                "{i},{},{},{},{}",
                c.times[k], c.mean[k], c.lower[k], c.upper[k]
            )?;
        }
    }
    Ok(())
}

/// Restricted mean survival time with its per-draw distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Rmst {
    pub tau: f64,
    pub mean: f64,
    pub per_draw: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// Trapezoid area under `values` over `times` (with `S(0) = 1` prepended when
/// the first time is positive) from 0 to `tau`.
fn area_to(times: &[f64], values: &[f64], tau: f64) -> f64 {
    let mut prev_t = 0.0;
    let mut prev_s = 1.0;
    let mut area = 0.0;
    for (&t, &s) in times.iter().zip(values) {
        if t <= prev_t {
            prev_s = s;
            continue;
        }
        if t >= tau {
            let s_tau = prev_s + (s - prev_s) * (tau - prev_t) / (t - prev_t);
            return area + 0.5 * (tau - prev_t) * (prev_s + s_tau);
        }
        area += 0.5 * (t - prev_t) * (prev_s + s);
        prev_t = t;
        prev_s = s;
    }
    area
}

/// `int_0^tau S(u) du` for the posterior-mean curve and for each draw.
pub fn rmst(curve: &SurvivalCurve, tau: f64) -> Result<Rmst> {
    let last = curve.times.last().copied().unwrap_or(0.0);
    if !(tau >= 0.0) || tau > last {
        return Err(Error::Domain(format!(
            "tau = {tau} outside the curve's time range [0, {last}]"
        )));
    }
    let mean = area_to(&curve.times, &curve.mean, tau);
    let mut per_draw: Vec<f64> = curve
        .per_draw
        .iter()
        .map(|row| area_to(&curve.times, row, tau))
        .collect();
    let mut sorted = per_draw.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (lower, upper) = if sorted.is_empty() {
        (mean, mean)
    } else {
        (quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975))
    };
    per_draw.shrink_to_fit();
    Ok(Rmst {
        tau,
        mean,
        per_draw,
        lower,
        upper,
    })
}

/// Log of the per-draw observed-data likelihood of one subject, conditional
/// on that draw's frailty for the subject's cluster.
pub fn subject_log_likelihood(
    record: &SubjectRecord,
    draw: &Draw,
    scaler: &InputScaler,
    grid: usize,
) -> f64 {
    let w = if draw.w.is_empty() { 1.0 } else { draw.w[record.cluster] };
    let x = scaler.scale_covariates(&record.x);
    let horizon = record.max_finite_endpoint();
    match record.kind() {
        CensorKind::Uncensored => {
            let t = record.left;
            let lam = cumulative_hazard_at(draw, &x, scaler, horizon, grid, &[t])[0];
            let input = scaler.scale(t, &record.x);
            let phi = normal_cdf(draw.evaluate_scaled(&input));
            (draw.bh.hazard(t) * w * phi).ln() - w * lam
        }
        CensorKind::Right => {
            -w * cumulative_hazard_at(draw, &x, scaler, horizon, grid, &[record.left])[0]
        }
        CensorKind::Left | CensorKind::Interval => {
            let lam = cumulative_hazard_at(draw, &x, scaler, horizon, grid, &[record.left, record.right]);
            -w * lam[0] + (-(-w * (lam[1] - lam[0])).exp_m1()).ln()
        }
    }
}

/// LPML from a log-likelihood matrix (`loglik[i][d]`: subject `i`, draw `d`).
/// Each log CPO is minus the log of the mean of `1 / L` over draws.
pub fn lpml_from_loglik(loglik: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (i, row) in loglik.iter().enumerate() {
        if row.is_empty() {
            return Err(Error::Domain("no posterior draws".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonPositiveLikelihood { subject: i });
        }
        let max = row.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (-v - max).exp()).sum::<f64>().ln();
        total += -(lse - (row.len() as f64).ln());
    }
    Ok(total)
}

/// Log pseudo marginal likelihood of `dataset` under `draws`.
pub fn lpml(dataset: &Dataset, draws: &PosteriorDraws, grid: usize) -> Result<f64> {
    if draws.draws.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    let scaler = &draws.header.scaler;
    let loglik: Vec<Vec<f64>> = dataset
        .subjects
        .par_iter()
        .map(|rec| {
            draws
                .draws
                .iter()
                .map(|d| subject_log_likelihood(rec, d, scaler, grid))
                .collect()
        })
        .collect();
    lpml_from_loglik(&loglik)
}

/// Root mean squared difference between true and predicted survival
/// matrices (subjects by grid times).
pub fn rmse_survival(truth: &[Vec<f64>], predicted: &[Vec<f64>]) -> Result<f64> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::Shape(format!(
            "{} true rows vs {} predicted rows",
            truth.len(),
            predicted.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (a, b)) in truth.iter().zip(predicted).enumerate() {
        if a.len() != b.len() {
            return Err(Error::Shape(format!("row {i}: {} vs {} columns", a.len(), b.len())));
        }
        sum += a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        count += a.len();
    }
    Ok((sum / count as f64).sqrt())
}
