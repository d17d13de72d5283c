//! Data augmentation: rejected points of the thinned Poisson process, probit
//! latent variables, and imputation of interval-censored event times.
//!
//! Event times are read as the first accepted point of a Poisson process with
//! intensity `lambda0(s) W` thinned with acceptance probability `Phi(l(s, x))`.
//! The rejected points before the event (or before the censoring time) form
//! a Poisson process with intensity `lambda0(s) W (1 - Phi(l(s, x)))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::BaselineHazard;
use crate::kernels::{
    normal_cdf, sample_exponential, sample_poisson, sample_positive_poisson,
    sample_truncated_normal, RngStream, TruncationSide,
};

/// Attempts allowed before interval imputation gives up.
pub const IMPUTATION_CAP: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CensorKind {
    Uncensored,
    Right,
    Left,
    Interval,
}

/// One observation: the event time lies in `(left, right]`.
///
/// `left == right` means the time was observed exactly and `right = inf`
/// means right-censoring at `left`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub cluster: usize,
    pub left: f64,
    pub right: f64,
    pub x: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(cluster: usize, left: f64, right: f64, x: Vec<f64>) -> Result<Self> {
        let r = Self {
            cluster,
            left,
            right,
            x,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn uncensored(cluster: usize, t: f64, x: Vec<f64>) -> Result<Self> {
        Self::new(cluster, t, t, x)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.left >= 0.0 && self.left.is_finite()) {
            return Err(Error::Data(format!("left endpoint {} must be finite and >= 0", self.left)));
        }
        if !(self.right >= self.left) || self.right.is_nan() {
            return Err(Error::Data(format!(
                "interval ({}, {}] is not ordered",
                self.left, self.right
            )));
        }
        if self.left == self.right && self.left == 0.0 {
            return Err(Error::Data("event observed at time 0".into()));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("covariates must be finite".into()));
        }
        Ok(())
    }

    pub fn kind(&self) -> CensorKind {
        if self.right.is_infinite() {
            CensorKind::Right
        } else if self.left == self.right {
            CensorKind::Uncensored
        } else if self.left == 0.0 {
            CensorKind::Left
        } else {
            CensorKind::Interval
        }
    }

    /// Largest finite endpoint.
    pub fn max_finite_endpoint(&self) -> f64 {
        if self.right.is_finite() {
            self.right
        } else {
            self.left
        }
    }

    /// Midpoint of the finite part of the interval.
    pub fn midpoint(&self) -> f64 {
        if self.right.is_finite() {
            0.5 * (self.left + self.right)
        } else {
            self.left
        }
    }
}

/// Latent state attached to one subject for a single MCMC iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSubject {
    /// Observed or imputed event time; `None` for right-censored subjects.
    pub event_time: Option<f64>,
    /// Rejected points in `(0, Y)`.
    pub rejected: Vec<f64>,
    /// Probit latents: one negative value per rejected point, then a positive
    /// value for the event when there is one.
    pub latents: Vec<f64>,
}

impl AugmentedSubject {
    /// Exposure horizon `Y`: the event time, or the censoring time.
    pub fn horizon(&self, record: &SubjectRecord) -> f64 {
        self.event_time.unwrap_or(record.left)
    }

    pub fn events(&self) -> usize {
        usize::from(self.event_time.is_some())
    }
}

/// Rejected points paired with `l` evaluated there.
pub(crate) fn rejected_points_with_values<L: FnMut(f64) -> f64>(
    horizon: f64,
    w: f64,
    mut l: L,
    bh: &BaselineHazard,
    rng: &mut RngStream,
) -> Result<Vec<(f64, f64)>> {
    if !(horizon > 0.0) {
        return Ok(Vec::new());
    }
    let scaled = bh.cum(horizon) * w;
    let q = sample_poisson(scaled, rng)?;
    let mut out = Vec::new();
    for _ in 0..q {
        let c = rng.uniform_in(0.0, scaled);
        let g = bh.inv_cum(c / w);
        if !(g > 0.0 && g < horizon) {
            continue;
        }
        let lv = l(g);
        if rng.uniform() <= 1.0 - normal_cdf(lv) {
            out.push((g, lv));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Rejected points on `(0, horizon)`: a draw from the Poisson process with
/// intensity `lambda0(s) W (1 - Phi(l(s)))`, returned in increasing order.
pub fn sample_rejected_points<L: FnMut(f64) -> f64>(
    horizon: f64,
    w: f64,
    l: L,
    bh: &BaselineHazard,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    Ok(rejected_points_with_values(horizon, w, l, bh, rng)?
        .into_iter()
        .map(|(g, _)| g)
        .collect())
}

/// Truncated-normal probit latents for the rejected points and the event.
pub fn sample_probit_latents<L: FnMut(f64) -> f64>(
    aug: &AugmentedSubject,
    mut l: L,
    rng: &mut RngStream,
) -> Vec<f64> {
    let mut z: Vec<f64> = aug
        .rejected
        .iter()
        .map(|&g| sample_truncated_normal(l(g), TruncationSide::Negative, rng))
        .collect();
    if let Some(t) = aug.event_time {
        z.push(sample_truncated_normal(l(t), TruncationSide::Positive, rng));
    }
    z
}

/// Imputes an event time in `(left, right]` as the first accepted point of
/// the thinned process on that interval, conditional on at least one
/// acceptance. Each attempt draws a positive Poisson count of candidate
/// points; candidates are tested in increasing order and the first accepted
/// one is returned.
pub fn impute_interval_time<L: FnMut(f64) -> f64>(
    left: f64,
    right: f64,
    w: f64,
    mut l: L,
    bh: &BaselineHazard,
    rng: &mut RngStream,
) -> Result<f64> {
    if !(right > left && right.is_finite() && left >= 0.0) {
        return Err(Error::Domain(format!(
            "imputation needs a finite interval with right > left, got ({left}, {right}]"
        )));
    }
    let lo = bh.cum(left) * w;
    let hi = bh.cum(right) * w;
    let mass = hi - lo;
    if !(mass > 0.0) {
        return Ok(right);
    }
    let mut candidates = Vec::new();
    for _ in 0..IMPUTATION_CAP {
        let q = sample_positive_poisson(mass, rng)?;
        candidates.clear();
        candidates.extend((0..q).map(|_| bh.inv_cum(rng.uniform_in(lo, hi) / w)));
        candidates.sort_by(|a, b| a.total_cmp(b));
        for &t in &candidates {
            if t > left && t <= right && rng.uniform() <= normal_cdf(l(t)) {
                return Ok(t);
            }
        }
    }
    Err(Error::ImputationCap {
        cap: IMPUTATION_CAP,
    })
}

/// First accepted point of the thinned process on `(0, inf)`: a draw of the
/// event time from the hazard `lambda0(t) W Phi(l(t))`.
pub fn sample_event_time<L: FnMut(f64) -> f64>(
    w: f64,
    mut l: L,
    bh: &BaselineHazard,
    rng: &mut RngStream,
) -> Result<f64> {
    let mut cum = 0.0;
    for _ in 0..IMPUTATION_CAP {
        cum += sample_exponential(1.0, rng);
        let t = bh.inv_cum(cum / w);
        if rng.uniform() <= normal_cdf(l(t)) {
            return Ok(t);
        }
    }
    Err(Error::ImputationCap {
        cap: IMPUTATION_CAP,
    })
}

/// Full per-subject augmentation for one iteration. `l` evaluates the ensemble
/// at a raw time for this subject. Returns the augmented subject together
/// with `l` at each latent's location (rejected points, then the event).
pub fn augment_subject<L: FnMut(f64) -> f64>(
    record: &SubjectRecord,
    w: f64,
    mut l: L,
    bh: &BaselineHazard,
    rng: &mut RngStream,
) -> Result<(AugmentedSubject, Vec<f64>)> {
    let event_time = match record.kind() {
        CensorKind::Uncensored => Some(record.left),
        CensorKind::Right => None,
        CensorKind::Left | CensorKind::Interval => Some(impute_interval_time(
            record.left,
            record.right,
            w,
            &mut l,
            bh,
            rng,
        )?),
    };
    let horizon = event_time.unwrap_or(record.left);
    let pts = rejected_points_with_values(horizon, w, &mut l, bh, rng)?;
    let mut values: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let mut latents: Vec<f64> = values
        .iter()
        .map(|&lv| sample_truncated_normal(lv, TruncationSide::Negative, rng))
        .collect();
    if let Some(t) = event_time {
        let lv = l(t);
        values.push(lv);
        latents.push(sample_truncated_normal(lv, TruncationSide::Positive, rng));
    }
    Ok((
        AugmentedSubject {
            event_time,
            rejected: pts.into_iter().map(|p| p.0).collect(),
            latents,
        },
        values,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::ks_test;
    use crate::kernels::normal_ln_pdf;

    const EXP1: BaselineHazard = BaselineHazard::Exponential { rate: 1.5 };

    #[test]
    fn record_kinds() {
        let x = vec![0.1];
        assert_eq!(SubjectRecord::new(0, 2.0, 2.0, x.clone()).unwrap().kind(), CensorKind::Uncensored);
        assert_eq!(SubjectRecord::new(0, 2.0, f64::INFINITY, x.clone()).unwrap().kind(), CensorKind::Right);
        assert_eq!(SubjectRecord::new(0, 0.0, 3.0, x.clone()).unwrap().kind(), CensorKind::Left);
        assert_eq!(SubjectRecord::new(0, 1.0, 3.0, x.clone()).unwrap().kind(), CensorKind::Interval);
        assert!(SubjectRecord::new(0, 3.0, 1.0, x.clone()).is_err());
        assert!(SubjectRecord::new(0, -1.0, 1.0, x.clone()).is_err());
        assert!(SubjectRecord::new(0, 0.0, 0.0, x.clone()).is_err());
        assert!(SubjectRecord::new(0, 1.0, f64::NAN, x).is_err());
    }

    #[test]
    fn strong_acceptance_leaves_no_rejections() {
        let mut rng = RngStream::new(1, 0);
        let mut empty = 0;
        for _ in 0..10_000 {
            if sample_rejected_points(2.0, 1.0, |_| 10.0, &EXP1, &mut rng).unwrap().is_empty() {
                empty += 1;
            }
        }
        assert_eq!(empty, 10_000);
    }

    #[test]
    fn rejected_count_mean() {
        // l = 0: E[count] = Omega Y W / 2
        let (omega, y, w) = (1.5, 2.0, 1.3);
        let mut rng = RngStream::new(2, 0);
        let n = 100_000;
        let total: usize = (0..n)
            .map(|_| sample_rejected_points(y, w, |_| 0.0, &EXP1, &mut rng).unwrap().len())
            .sum();
        let want = omega * y * w / 2.0;
        assert!((total as f64 / n as f64 / want - 1.0).abs() < 0.01);
    }

    #[test]
    fn rejected_points_follow_thinned_intensity() {
        // l(s) = 1.5 - s on a Weibull baseline: normalized intensity
        // lambda0(s) (1 - Phi(l(s))) on (0, Y), CDF by quadrature.
        let bh = BaselineHazard::Weibull { shape: 1.6, rate: 0.9 };
        let l = |s: f64| 1.5 - s;
        let y = 2.5;
        let mut rng = RngStream::new(3, 0);
        let mut pts = Vec::new();
        while pts.len() < 100_000 {
            for g in sample_rejected_points(y, 1.0, l, &bh, &mut rng).unwrap() {
                assert!(g > 0.0 && g < y);
                pts.push(g);
            }
        }
        let m = 20_000;
        let h = y / m as f64;
        let dens: Vec<f64> = (0..=m)
            .map(|k| {
                let s = k as f64 * h;
                if s == 0.0 { 0.0 } else { bh.hazard(s) * (1.0 - normal_cdf(l(s))) }
            })
            .collect();
        let mut cdf = vec![0.0; m + 1];
        for k in 1..=m {
            cdf[k] = cdf[k - 1] + 0.5 * h * (dens[k - 1] + dens[k]);
        }
        let total = cdf[m];
        let p = ks_test(&pts, |t| {
            let pos = (t / h).clamp(0.0, m as f64 - 1e-9);
            let k = pos as usize;
            let frac = pos - k as f64;
            (cdf[k] + frac * (cdf[k + 1] - cdf[k])) / total
        })
        .p_value;
        assert!(p > 1e-3, "p={p}");
    }

    #[test]
    fn latent_signs_and_half_normal_means() {
        let aug = AugmentedSubject {
            event_time: Some(1.0),
            rejected: vec![0.2, 0.5],
            latents: vec![],
        };
        let mut rng = RngStream::new(4, 0);
        let n = 100_000;
        let (mut neg, mut pos) = (0.0, 0.0);
        for _ in 0..n {
            let z = sample_probit_latents(&aug, |_| 0.0, &mut rng);
            assert_eq!(z.len(), 3);
            assert!(z[0] < 0.0 && z[1] < 0.0 && z[2] > 0.0);
            neg += z[0];
            pos += z[2];
        }
        let hn = (2.0 / std::f64::consts::PI).sqrt();
        assert!((neg / n as f64 + hn).abs() < 0.01);
        assert!((pos / n as f64 - hn).abs() < 0.01);
        let right = AugmentedSubject::default();
        assert!(sample_probit_latents(&right, |_| 0.0, &mut rng).is_empty());
    }

    #[test]
    fn latents_marginalize_to_probit_factors() {
        // Draws under l, reweighted to l': E[prod N(z; l')/N(z; l)] equals the
        // ratio of probit factors Phi(l'(T)) (1 - Phi(l'(G))) / same under l.
        let aug = AugmentedSubject {
            event_time: Some(1.0),
            rejected: vec![0.4],
            latents: vec![],
        };
        let l = |s: f64| if s < 0.5 { -0.3 } else { 0.6 };
        let l2 = |s: f64| if s < 0.5 { 0.2 } else { 0.1 };
        let mut rng = RngStream::new(5, 0);
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z = sample_probit_latents(&aug, l, &mut rng);
            let w = (normal_ln_pdf(z[0] - l2(0.4)) - normal_ln_pdf(z[0] - l(0.4))
                + normal_ln_pdf(z[1] - l2(1.0))
                - normal_ln_pdf(z[1] - l(1.0)))
            .exp();
            acc += w;
        }
        let got = acc / n as f64;
        let want = normal_cdf(l2(1.0)) * (1.0 - normal_cdf(l2(0.4)))
            / (normal_cdf(l(1.0)) * (1.0 - normal_cdf(l(0.4))));
        assert!((got / want - 1.0).abs() < 0.01, "{got} vs {want}");
    }

    #[test]
    fn imputation_strong_acceptance_law() {
        // Phi(l) ~ 1: truncated first-event law on (A, B].
        let (a, b, w) = (0.5, 2.0, 1.2);
        let bh = BaselineHazard::Weibull { shape: 1.4, rate: 0.8 };
        let mut rng = RngStream::new(6, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| impute_interval_time(a, b, w, |_| 10.0, &bh, &mut rng).unwrap())
            .collect();
        assert!(xs.iter().all(|&t| t > a && t <= b));
        let denom = 1.0 - (-w * (bh.cum(b) - bh.cum(a))).exp();
        let p = ks_test(&xs, |t| {
            let t = t.clamp(a, b);
            (1.0 - (-w * (bh.cum(t) - bh.cum(a))).exp()) / denom
        })
        .p_value;
        assert!(p > 1e-3, "p={p}");
    }

    #[test]
    fn imputation_narrow_interval() {
        let mut rng = RngStream::new(7, 0);
        let (a, b) = (1.0, 1.0 + 1e-9);
        for _ in 0..1000 {
            let t = impute_interval_time(a, b, 1.0, |_| 0.0, &EXP1, &mut rng).unwrap();
            assert!(t > a && t <= b);
        }
        assert!(impute_interval_time(2.0, 1.0, 1.0, |_| 0.0, &EXP1, &mut rng).is_err());
        assert!(impute_interval_time(1.0, f64::INFINITY, 1.0, |_| 0.0, &EXP1, &mut rng).is_err());
    }

    #[test]
    fn imputation_zero_forest_decile_density() {
        // l = 0: density prop. to lambda0 W Phi(0) exp(-W Phi(0) (Lambda0(t) - Lambda0(A))).
        let (a, b, w) = (0.3, 2.3, 0.9);
        let mut rng = RngStream::new(8, 0);
        let n = 400_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| impute_interval_time(a, b, w, |_| 0.0, &EXP1, &mut rng).unwrap())
            .collect();
        let rate = 1.5 * w * 0.5;
        let cdf = |t: f64| (1.0 - (-rate * (t - a)).exp()) / (1.0 - (-rate * (b - a)).exp());
        // decile bins of the target law
        let edges: Vec<f64> = (0..=10)
            .map(|k| {
                let u = k as f64 / 10.0;
                a - (1.0 - u * (1.0 - (-rate * (b - a)).exp())).ln() / rate
            })
            .collect();
        for k in 0..10 {
            let frac = xs.iter().filter(|&&t| t > edges[k] && t <= edges[k + 1]).count() as f64
                / n as f64;
            let want = cdf(edges[k + 1]) - cdf(edges[k]);
            assert!((frac / want - 1.0).abs() < 0.01 * 3.0, "bin {k}: {frac} vs {want}");
        }
    }

    #[test]
    fn event_time_first_acceptance() {
        // l = 0, exponential: event times ~ Exp(Omega W / 2)
        let mut rng = RngStream::new(9, 0);
        let w = 0.8;
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_event_time(w, |_| 0.0, &EXP1, &mut rng).unwrap())
            .collect();
        let rate = 1.5 * w * 0.5;
        let p = ks_test(&xs, |t| 1.0 - (-rate * t).exp()).p_value;
        assert!(p > 1e-3);
    }

    #[test]
    fn augment_subject_shapes() {
        let mut rng = RngStream::new(10, 0);
        let right = SubjectRecord::new(0, 1.5, f64::INFINITY, vec![]).unwrap();
        let interval = SubjectRecord::new(0, 0.5, 1.0, vec![]).unwrap();
        for _ in 0..2000 {
            let (aug, vals) = augment_subject(&right, 1.0, |_| -0.5, &EXP1, &mut rng).unwrap();
            assert!(aug.event_time.is_none());
            assert_eq!(aug.latents.len(), aug.rejected.len());
            assert_eq!(vals.len(), aug.latents.len());
            assert!(aug.rejected.iter().all(|&g| g > 0.0 && g < 1.5));
            assert!(aug.latents.iter().all(|&z| z < 0.0));
            let (aug, _) = augment_subject(&interval, 1.0, |_| -0.5, &EXP1, &mut rng).unwrap();
            let t = aug.event_time.unwrap();
            assert!(t > 0.5 && t <= 1.0);
            assert_eq!(aug.latents.len(), aug.rejected.len() + 1);
            assert!(*aug.latents.last().unwrap() > 0.0);
            assert!(aug.rejected.iter().all(|&g| g > 0.0 && g < t));
        }
    }
}
