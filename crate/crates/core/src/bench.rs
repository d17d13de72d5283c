//! Simulation settings A–D and the survival-prediction RMSE benchmark.
//!
//! Survival times are Gamma(shape, 6) with shape given by the Friedman test
//! function of five uniform covariates, optionally shifted by a Uniform(0, 0.2)
//! cluster effect (B, D) and interval-censored by a Poisson inspection
//! scheme (C, D).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::SubjectRecord;
use crate::config::FitConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{gamma_q, sample_exponential, sample_gamma, sample_poisson, RngStream};
use crate::predict::{predict_survival, rmse_survival, FrailtyMode};
use crate::sampler::{fit, fit_no_frailty, PosteriorDraws};

/// Rate of the Gamma survival-time law.
pub const TIME_RATE: f64 = 6.0;
/// Upper end of the Uniform cluster-effect law.
pub const EFFECT_MAX: f64 = 0.2;
pub const COVARIATES: usize = 5;

/// `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5`.
pub fn friedman(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
        + 20.0 * (x[2] - 0.5).powi(2)
        + 10.0 * x[3]
        + 5.0 * x[4]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// Independent, uncensored.
    A,
    /// Clustered, uncensored.
    B,
    /// Independent, interval-censored.
    C,
    /// Clustered, interval-censored.
    D,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::A, Setting::B, Setting::C, Setting::D];

    pub fn clustered(self) -> bool {
        matches!(self, Setting::B | Setting::D)
    }

    pub fn censored(self) -> bool {
        matches!(self, Setting::C | Setting::D)
    }

    /// Published mean RMSE of the soft-tree hazard model in this setting.
    pub fn reference_rmse(self) -> f64 {
        match self {
            Setting::A => 0.1038,
            Setting::B => 0.1063,
            Setting::C => 0.1106,
            Setting::D => 0.0944,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Setting::A => "independent, uncensored",
            Setting::B => "clustered, uncensored",
            Setting::C => "independent, interval-censored",
            Setting::D => "clustered, interval-censored",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Setting::A => "A",
            Setting::B => "B",
            Setting::C => "C",
            Setting::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Setting::A),
            "B" => Ok(Setting::B),
            "C" => Ok(Setting::C),
            "D" => Ok(Setting::D),
            _ => Err(Error::Config(format!("unknown setting {s:?} (expected A, B, C or D)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub setting: Setting,
    /// Training size for independent settings.
    pub n: usize,
    pub clusters: usize,
    pub cluster_size: usize,
    pub replicates: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(setting: Setting) -> Self {
        Self {
            setting,
            n: 100,
            clusters: 10,
            cluster_size: 10,
            replicates: 20,
            test_size: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n", self.n),
            ("clusters", self.clusters),
            ("cluster_size", self.cluster_size),
            ("replicates", self.replicates),
            ("test_size", self.test_size),
        ];
        for (k, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        Ok(())
    }
}

/// Interval around a true time `t` from the Poisson inspection scheme:
/// `K ~ Poisson(t)`; left end is the last of `K` uniform inspections on
/// `(0, t)` (0 when `K = 0`); right end is `t + Exp(1)`.
pub fn censor_interval(t: f64, rng: &mut RngStream) -> Result<(f64, f64)> {
    let k = sample_poisson(t, rng)?;
    let left = if k == 0 {
        0.0
    } else {
        rng.uniform().powf(1.0 / k as f64) * t
    };
    let right = t + sample_exponential(1.0, rng);
    Ok((left, right))
}

/// One simulated replicate with its test set and true survival matrix.
#[derive(Clone, Debug)]
pub struct SimReplicate {
    pub train: Dataset,
    /// Uncensored training times, in subject order.
    pub train_times: Vec<f64>,
    pub test_x: Vec<Vec<f64>>,
    /// Cluster effect of each test subject (0 for independent settings).
    pub test_effects: Vec<f64>,
    pub test_times: Vec<f64>,
    /// Ten evaluation times.
    pub grid: Vec<f64>,
    /// `truth[i][g]`: true survival of test subject `i` at `grid[g]`.
    pub truth: Vec<Vec<f64>>,
}

struct Draws {
    x: Vec<Vec<f64>>,
    cluster: Vec<usize>,
    effect: Vec<f64>,
    times: Vec<f64>,
}

fn draw_subjects(
    setting: Setting,
    n: usize,
    clusters: usize,
    cluster_size: usize,
    rng: &mut RngStream,
) -> Result<Draws> {
    let (count, cluster_of): (usize, Box<dyn Fn(usize) -> usize>) = if setting.clustered() {
        (clusters * cluster_size, Box::new(move |i| i / cluster_size))
    } else {
        (n, Box::new(|i| i))
    };
    let n_clusters = if setting.clustered() { clusters } else { n };
    let effects: Vec<f64> = (0..n_clusters)
        .map(|_| {
            if setting.clustered() {
                rng.uniform_in(0.0, EFFECT_MAX)
            } else {
                0.0
            }
        })
        .collect();
    let mut out = Draws {
        x: Vec::with_capacity(count),
        cluster: Vec::with_capacity(count),
        effect: Vec::with_capacity(count),
        times: Vec::with_capacity(count),
    };
    for i in 0..count {
        let x: Vec<f64> = (0..COVARIATES).map(|_| rng.uniform()).collect();
        let c = cluster_of(i);
        let shape = friedman(&x) + effects[c];
        out.times.push(sample_gamma(shape, TIME_RATE, rng)?);
        out.x.push(x);
        out.cluster.push(c);
        out.effect.push(effects[c]);
    }
    Ok(out)
}

/// Empirical quantile (linear interpolation) of unsorted data.
fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    crate::predict::quantile_sorted(&s, q)
}

/// Simulates a training set and a test set for `config.setting`.
pub fn generate(config: &SimConfig, rng: &mut RngStream) -> Result<SimReplicate> {
    config.validate()?;
    let setting = config.setting;
    let train = draw_subjects(setting, config.n, config.clusters, config.cluster_size, rng)?;
    let mut subjects = Vec::with_capacity(train.times.len());
    for i in 0..train.times.len() {
        let t = train.times[i];
        let (left, right) = if setting.censored() {
            censor_interval(t, rng)?
        } else {
            (t, t)
        };
        subjects.push(SubjectRecord::new(train.cluster[i], left, right, train.x[i].clone())?);
    }
    let train_set = Dataset::from_records(subjects)?;

    let test_clusters = config.test_size.div_ceil(config.cluster_size);
    let mut test = draw_subjects(setting, config.test_size, test_clusters, config.cluster_size, rng)?;
    test.x.truncate(config.test_size);
    test.effect.truncate(config.test_size);
    test.times.truncate(config.test_size);

    let grid: Vec<f64> = (0..10)
        .map(|g| quantile(&test.times, 0.05 + 0.1 * g as f64))
        .collect();
    let truth = test
        .x
        .iter()
        .zip(&test.effect)
        .map(|(x, e)| {
            let shape = friedman(x) + e;
            grid.iter().map(|&t| gamma_q(shape, TIME_RATE * t)).collect()
        })
        .collect();
    Ok(SimReplicate {
        train: train_set,
        train_times: train.times,
        test_x: test.x,
        test_effects: test.effect,
        test_times: test.times,
        grid,
        truth,
    })
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sim: SimConfig,
    pub fit: FitConfig,
    /// Use every `predict_stride`-th retained draw for prediction.
    pub predict_stride: usize,
    pub mode: FrailtyMode,
}

impl BenchConfig {
    pub fn new(setting: Setting) -> Self {
        Self {
            sim: SimConfig::new(setting),
            fit: FitConfig::default(),
            predict_stride: 5,
            mode: FrailtyMode::Unit,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub setting: Setting,
    pub rmse: Vec<f64>,
    pub mean: f64,
    /// Standard error of the mean across replicates.
    pub se: f64,
    pub seconds: Vec<f64>,
}

impl BenchReport {
    pub fn from_rmse(setting: Setting, rmse: Vec<f64>, seconds: Vec<f64>) -> Self {
        let m = rmse.len() as f64;
        let mean = rmse.iter().sum::<f64>() / m;
        let se = if rmse.len() > 1 {
            (rmse.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
        } else {
            f64::NAN
        };
        Self {
            setting,
            rmse,
            mean,
            se,
            seconds,
        }
    }

    /// Per-replicate rows followed by a `#` summary block.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "setting,replicate,rmse,seconds")?;
        for (r, (v, s)) in self.rmse.iter().zip(&self.seconds).enumerate() {
            writeln!(out, "{},{r},{v:.6},{s:.1}", self.setting)?;
        }
        writeln!(out, "# setting {} ({})", self.setting, self.setting.description())?;
        writeln!(out, "# replicates {}", self.rmse.len())?;
        writeln!(out, "# mean_rmse {:.4}", self.mean)?;
        writeln!(out, "# se {:.4}", self.se)?;
        writeln!(out, "# reference_rmse {:.4}", self.setting.reference_rmse())?;
        Ok(())
    }
}

/// Keeps every `stride`-th draw, counted from the last one backwards so the
/// final draw is always included.
pub fn thin_draws(draws: &PosteriorDraws, stride: usize) -> PosteriorDraws {
    let stride = stride.max(1);
    let n = draws.draws.len();
    let kept = (0..n)
        .filter(|i| (n - 1 - i) % stride == 0)
        .map(|i| draws.draws[i].clone())
        .collect();
    PosteriorDraws {
        header: draws.header.clone(),
        draws: kept,
    }
}

/// Generates, fits and scores one replicate; returns the RMSE.
pub fn run_replicate(config: &BenchConfig, replicate: usize) -> Result<f64> {
    let setting = config.sim.setting;
    let seed = config.sim.seed;
    let mut gen_rng = RngStream::new(seed, 2 * replicate as u64);
    let fit_rng = RngStream::new(seed, 2 * replicate as u64 + 1);
    let rep = generate(&config.sim, &mut gen_rng)?;
    let draws = if setting.clustered() {
        fit(&rep.train, &config.fit, fit_rng)?
    } else {
        fit_no_frailty(&rep.train, &config.fit, fit_rng)?
    };
    let draws = thin_draws(&draws, config.predict_stride);
    let predicted = rep
        .test_x
        .par_iter()
        .map(|x| predict_survival(&draws, x, &rep.grid, config.mode, config.fit.grid).map(|c| c.mean))
        .collect::<Result<Vec<_>>>()?;
    rmse_survival(&rep.truth, &predicted)
}

/// Runs every replicate (in parallel) and summarizes their RMSEs.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    config.sim.validate()?;
    config.fit.validate()?;
    let results: Vec<Result<(f64, f64)>> = (0..config.sim.replicates)
        .into_par_iter()
        .map(|r| {
            let start = std::time::Instant::now();
            let rmse = run_replicate(config, r).map_err(|e| Error::Replicate {
                replicate: r,
                source: Box::new(e),
            })?;
            let secs = start.elapsed().as_secs_f64();
            log::info!(
                "setting {} replicate {r}: rmse {rmse:.4} ({secs:.1}s)",
                config.sim.setting
            );
            Ok((rmse, secs))
        })
        .collect();
    let mut rmse = Vec::with_capacity(results.len());
    let mut seconds = Vec::with_capacity(results.len());
    for r in results {
        let (v, s) = r?;
        rmse.push(v);
        seconds.push(s);
    }
    Ok(BenchReport::from_rmse(config.sim.setting, rmse, seconds))
}
