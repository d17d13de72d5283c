//! Seedable random streams, special functions and the univariate samplers
//! shared by every other module.

mod rng;
mod sampling;
mod slice;
mod special;

pub use rng::RngStream;
pub use sampling::{
    sample_exponential, sample_gamma, sample_poisson, sample_positive_poisson, sample_std_normal,
    sample_truncated_normal, TruncationSide,
};
pub use slice::{slice_sample, Bounds, MAX_EXPANSIONS};
pub use special::{
    gamma_p, gamma_q, ln_gamma, normal_cdf, normal_ln_pdf, normal_sf,
};
