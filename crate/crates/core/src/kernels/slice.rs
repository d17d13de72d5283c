//! Univariate slice sampling with stepping out and shrinkage (Neal 2003).

use super::rng::RngStream;
use crate::error::{Error, Result};

/// Cap on the number of stepping-out expansions per transition.
pub const MAX_EXPANSIONS: usize = 64;

/// Open support interval of a slice target. Either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const REAL: Bounds = Bounds {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
    pub const POSITIVE: Bounds = Bounds {
        lower: 0.0,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    #[inline]
    fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

/// One slice-sampling transition for an unnormalized log density.
///
/// The initial interval of length `width` is placed at random around `current`
/// and stepped out (at most [`MAX_EXPANSIONS`] steps in total) until both ends
/// fall outside the slice or leave `bounds`; proposals are then drawn by
/// shrinkage. Points outside `bounds` are treated as zero density.
pub fn slice_sample<F>(
    mut log_density: F,
    current: f64,
    width: f64,
    bounds: Bounds,
    rng: &mut RngStream,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let f0 = log_density(current);
    if !f0.is_finite() || !bounds.contains(current) {
        return Err(Error::SliceNonFinite(current));
    }
    let width = if width > 0.0 && width.is_finite() {
        width
    } else {
        return Err(Error::Domain(format!("slice width must be positive, got {width}")));
    };
    let mut density = |x: f64| {
        if bounds.contains(x) {
            log_density(x)
        } else {
            f64::NEG_INFINITY
        }
    };

    let level = f0 - super::sample_exponential(1.0, rng);

    let mut left = current - width * rng.uniform();
    let mut right = left + width;
    let mut left_steps = ((MAX_EXPANSIONS as f64) * rng.uniform()) as usize;
    let mut right_steps = MAX_EXPANSIONS - 1 - left_steps;
    while left_steps > 0 && left > bounds.lower && density(left) > level {
        left -= width;
        left_steps -= 1;
    }
    while right_steps > 0 && right < bounds.upper && density(right) > level {
        right += width;
        right_steps -= 1;
    }
    left = left.max(bounds.lower);
    right = right.min(bounds.upper);

    loop {
        let proposal = rng.uniform_in(left, right);
        let fp = density(proposal);
        if fp > level {
            return Ok(proposal);
        }
        if proposal < current {
            left = proposal;
        } else {
            right = proposal;
        }
        // The interval collapsed onto the current point; staying put is valid.
        if right - left <= f64::EPSILON * current.abs().max(1.0) {
            return Ok(current);
        }
    }
}
