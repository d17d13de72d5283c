use serde::{Deserialize, Serialize};

/// Maps raw `(t, x)` onto the unit cube the trees split on.
///
/// Covariates are min–max scaled with ranges taken from training data; time
/// is divided by `time_scale`. Everything is clamped to [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub time_scale: f64,
    pub mins: Vec<f64>,
    pub spans: Vec<f64>,
}

/// Headroom multiplier applied to the largest finite interval endpoint.
pub const TIME_HEADROOM: f64 = 1.5;

impl InputScaler {
    /// Pass-through scaler for inputs already on the unit cube.
    pub fn identity(p: usize) -> Self {
        Self {
            time_scale: 1.0,
            mins: vec![0.0; p],
            spans: vec![1.0; p],
        }
    }

    /// Fits the scaler: `max_endpoint` is the largest finite interval endpoint
    /// in the training data and `rows` the training covariate vectors.
    pub fn fit<'a, I>(max_endpoint: f64, p: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut mins = vec![f64::INFINITY; p];
        let mut maxs = vec![f64::NEG_INFINITY; p];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        let spans = mins
            .iter()
            .zip(&maxs)
            .map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 })
            .collect();
        let mins = mins
            .into_iter()
            .map(|m| if m.is_finite() { m } else { 0.0 })
            .collect();
        let time_scale = if max_endpoint > 0.0 && max_endpoint.is_finite() {
            TIME_HEADROOM * max_endpoint
        } else {
            1.0
        };
        Self {
            time_scale,
            mins,
            spans,
        }
    }

    pub fn covariate_dim(&self) -> usize {
        self.mins.len()
    }

    /// Input dimension seen by the trees (time plus covariates).
    pub fn input_dim(&self) -> usize {
        self.mins.len() + 1
    }

    #[inline]
    pub fn scale_time(&self, t: f64) -> f64 {
        (t / self.time_scale).clamp(0.0, 1.0)
    }

    pub fn scale_covariates(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mins.iter().zip(&self.spans))
            .map(|(&v, (&lo, &span))| ((v - lo) / span).clamp(0.0, 1.0))
            .collect()
    }

    /// Full input vector `(t, x1..xp)` on the unit cube.
    pub fn scale(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len() + 1);
        out.push(self.scale_time(t));
        out.extend(self.scale_covariates(x));
        out
    }
}
