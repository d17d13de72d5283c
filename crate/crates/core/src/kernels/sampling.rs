use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use super::rng::RngStream;
use crate::error::{Error, Result};

/// Which half-line a truncated normal is restricted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruncationSide {
    /// Support `(-inf, 0)`.
    Negative,
    /// Support `(0, inf)`.
    Positive,
}

// Truncation points further than this into the tail use the exponential proposal.
const TAIL_SWITCH: f64 = 0.5;

#[inline]
pub fn sample_std_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

// Standard normal restricted to (a, inf).
fn std_normal_above(a: f64, rng: &mut RngStream) -> f64 {
    if a <= TAIL_SWITCH {
        loop {
            let z = sample_std_normal(rng);
            if z > a {
                return z;
            }
        }
    }
    // Robert (1995) translated-exponential proposal with the optimal rate.
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - rng.uniform().ln() / rate;
        let log_accept = -0.5 * (z - rate) * (z - rate);
        if rng.uniform().ln() <= log_accept {
            return z;
        }
    }
}

/// Draw from N(mean, 1) restricted to one side of zero.
pub fn sample_truncated_normal(mean: f64, side: TruncationSide, rng: &mut RngStream) -> f64 {
    match side {
        TruncationSide::Positive => mean + std_normal_above(-mean, rng),
        TruncationSide::Negative => -(-mean + std_normal_above(mean, rng)),
    }
}

/// Gamma draw in the shape/rate parameterization.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!(
            "gamma requires positive finite shape and rate, got ({shape}, {rate})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Domain(e.to_string()))?;
    // Guard against an underflowed zero for tiny shapes.
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

#[inline]
pub fn sample_exponential(rate: f64, rng: &mut RngStream) -> f64 {
    -rng.uniform().ln() / rate
}

pub fn sample_poisson(mean: f64, rng: &mut RngStream) -> Result<u64> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::Domain(format!(
            "poisson mean must be finite and nonnegative, got {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(mean).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(p.sample(rng) as u64)
}

/// Poisson draw conditioned on being positive.
///
/// Uses the first arrival of a unit-length process: the first point falls at
/// `s` with density proportional to `mean * exp(-mean * s)` on (0, 1), and the
/// remaining count is Poisson on what is left of the interval.
pub fn sample_positive_poisson(mean: f64, rng: &mut RngStream) -> Result<u64> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::Domain(format!(
            "positive poisson mean must be finite and positive, got {mean}"
        )));
    }
    let p_any = -(-mean).exp_m1();
    let first = -(-rng.uniform() * p_any).ln_1p() / mean;
    let rest = sample_poisson(mean * (1.0 - first).max(0.0), rng)?;
    Ok(1 + rest)
}
