//! MCMC orchestration: imputation, augmentation, baseline and ensemble
//! updates, frailties, and draw collection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_subject, AugmentedSubject};
use crate::config::FitConfig;
use crate::data::{Covariate, Dataset};
use crate::error::{Error, Result};
use crate::forest::{backfit_sweep, Forest, InputScaler, PooledData, SoftTree, SweepStats};
use crate::hazard::{
    update_baseline, update_eta, update_frailties, BaselineData, BaselineFamily, BaselineHazard,
    BaselinePrior, ClusterStats, FrailtyState,
};
use crate::kernels::RngStream;

const STAGE_AUGMENT: u64 = 0;
const STAGE_BASELINE: u64 = 1;
const STAGE_FOREST: u64 = 2;
const STAGE_ETA: u64 = 3;
const STAGE_FRAILTY: u64 = 4;
const STAGE_LEAF_SCALE: u64 = 5;
const STAGE_INIT: u64 = u64::MAX;

/// Overrides used mainly by diagnostics; the defaults derive everything from
/// the data and the config.
#[derive(Clone, Debug, Default)]
pub struct SamplerOptions {
    /// Fixed input scaler instead of one fitted to the data.
    pub scaler: Option<InputScaler>,
    /// Fixed baseline prior instead of the config / data-centred one.
    pub baseline_prior: Option<BaselinePrior>,
    /// Holds `eta` fixed at this value (frailties are still updated).
    pub fixed_eta: Option<f64>,
    /// Drops every likelihood contribution, so the chain targets the prior.
    pub prior_only: bool,
}

#[derive(Clone, Debug)]
pub struct ModelState {
    pub bh: BaselineHazard,
    pub frailty: FrailtyState,
    pub forest: Forest,
    pub augmented: Vec<AugmentedSubject>,
    pub scaler: InputScaler,
}

/// Work counters for one iteration.
#[derive(Clone, Debug, Default)]
pub struct IterationStats {
    /// Rejected points plus events fed to the ensemble update.
    pub augmented_points: usize,
    /// Single-tree evaluations spent during augmentation.
    pub tree_evaluations: u64,
    pub sweep: SweepStats,
}

/// One retained posterior snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub iteration: u64,
    pub bh: BaselineHazard,
    pub eta: f64,
    pub w: Vec<f64>,
    /// Leaf-mean prior scale at this iteration.
    pub sigma_mu: f64,
    pub trees: Vec<SoftTree>,
}

impl Draw {
    /// Ensemble value at an already-scaled input.
    pub fn evaluate_scaled(&self, input: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.evaluate(input)).sum()
    }
}

/// Everything needed to interpret a set of draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawHeader {
    pub config: FitConfig,
    pub seed: u64,
    pub stream: u64,
    pub family: BaselineFamily,
    pub frailty: bool,
    pub scaler: InputScaler,
    pub covariates: Vec<Covariate>,
    pub cluster_labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    pub header: DrawHeader,
    pub draws: Vec<Draw>,
}

pub struct Sampler {
    data: Dataset,
    config: FitConfig,
    options: SamplerOptions,
    prior: BaselinePrior,
    frailty: bool,
    state: ModelState,
    rng: RngStream,
    iteration: u64,
    /// Per-subject scaled input with slot 0 reserved for time.
    inputs: Vec<Vec<f64>>,
    pooled: PooledData,
}

impl Sampler {
    pub fn new(
        data: Dataset,
        config: FitConfig,
        options: SamplerOptions,
        rng: RngStream,
    ) -> Result<Self> {
        config.validate()?;
        let scaler = options.scaler.clone().unwrap_or_else(|| {
            InputScaler::fit(
                data.max_finite_endpoint(),
                data.covariate_dim(),
                data.subjects.iter().map(|s| s.x.as_slice()),
            )
        });
        if scaler.covariate_dim() != data.covariate_dim() {
            return Err(Error::Shape(format!(
                "scaler expects {} covariates, data has {}",
                scaler.covariate_dim(),
                data.covariate_dim()
            )));
        }
        let prior = options.baseline_prior.unwrap_or_else(|| {
            let mut p = BaselinePrior::from_midpoint_mean(data.mean_midpoint());
            if let Some(r) = config.rate_prior {
                p.rate = r;
            }
            p.shape = config.shape_prior;
            p
        });
        let rate = prior.rate.mean();
        let bh = match config.family {
            BaselineFamily::Exponential => BaselineHazard::Exponential { rate },
            BaselineFamily::Weibull => BaselineHazard::Weibull { shape: 1.0, rate },
        };
        let frailty = config.frailty;
        let eta = match (frailty, options.fixed_eta) {
            (false, _) => f64::INFINITY,
            (true, Some(e)) => e,
            (true, None) => config.eta_prior.mean(),
        };
        let mut init = rng.derive(&[STAGE_INIT]);
        let forest = Forest::initial(config.hyper(), &mut init);
        let inputs = data
            .subjects
            .iter()
            .map(|s| scaler.scale(0.0, &s.x))
            .collect();
        let state = ModelState {
            bh,
            frailty: FrailtyState::unit(data.clusters(), eta),
            forest,
            augmented: vec![AugmentedSubject::default(); data.len()],
            scaler,
        };
        let pooled = PooledData::new(state.scaler.input_dim());
        Ok(Self {
            data,
            config,
            options,
            prior,
            frailty,
            state,
            rng,
            iteration: 0,
            inputs,
            pooled,
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    /// Mutable access to the chain state, e.g. to start from a given point.
    pub fn state_mut(&mut self) -> &mut ModelState {
        &mut self.state
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Mutable access to the data. Covariates must keep their dimension;
    /// cached scaled inputs are refreshed on the next step.
    pub fn data_mut(&mut self) -> &mut Dataset {
        self.inputs.clear();
        &mut self.data
    }

    pub fn baseline_prior(&self) -> &BaselinePrior {
        &self.prior
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn header(&self) -> DrawHeader {
        DrawHeader {
            config: self.config.clone(),
            seed: self.rng.seed(),
            stream: self.rng.stream(),
            family: self.config.family,
            frailty: self.frailty,
            scaler: self.state.scaler.clone(),
            covariates: self.data.covariates.clone(),
            cluster_labels: self.data.cluster_labels.clone(),
        }
    }

    pub fn snapshot(&self) -> Draw {
        Draw {
            iteration: self.iteration,
            bh: self.state.bh,
            eta: self.state.frailty.eta,
            w: self.state.frailty.w.clone(),
            sigma_mu: self.state.forest.hyper.sigma_mu,
            trees: self.state.forest.trees.clone(),
        }
    }

    /// One full MCMC iteration.
    pub fn step(&mut self) -> Result<IterationStats> {
        let iter = self.iteration;
        let mut stats = IterationStats::default();
        if self.inputs.len() != self.data.len() {
            let scaler = &self.state.scaler;
            self.inputs = self
                .data
                .subjects
                .iter()
                .map(|s| scaler.scale(0.0, &s.x))
                .collect();
        }

        // (1)-(2) imputation, rejected points and probit latents
        if self.options.prior_only {
            for a in &mut self.state.augmented {
                *a = AugmentedSubject::default();
            }
        } else {
            let base = self.rng.derive(&[iter, STAGE_AUGMENT]);
            let st = &self.state;
            let trees = st.forest.trees.len() as u64;
            let results: Vec<Result<(AugmentedSubject, u64)>> = self
                .data
                .subjects
                .par_iter()
                .zip(self.inputs.par_iter())
                .enumerate()
                .map(|(i, (rec, input))| {
                    let mut rng = base.derive(&[i as u64]);
                    let mut buf = input.clone();
                    let mut evals = 0u64;
                    let out = augment_subject(
                        rec,
                        st.frailty.w[rec.cluster],
                        |t| {
                            evals += 1;
                            buf[0] = st.scaler.scale_time(t);
                            st.forest.evaluate_scaled(&buf)
                        },
                        &st.bh,
                        &mut rng,
                    );
                    out.map(|(aug, _)| (aug, evals * trees)).map_err(|e| Error::Subject {
                        subject: i,
                        source: Box::new(e),
                    })
                })
                .collect();
            for (slot, r) in self.state.augmented.iter_mut().zip(results) {
                let (aug, evals) = r?;
                stats.tree_evaluations += evals;
                *slot = aug;
            }
        }

        // pooled (input, Z) set and baseline summaries
        self.pooled.clear();
        let mut bdata = BaselineData::default();
        for ((rec, aug), input) in self
            .data
            .subjects
            .iter()
            .zip(&self.state.augmented)
            .zip(self.inputs.iter_mut())
        {
            let locations = aug.rejected.iter().chain(aug.event_time.iter());
            for (&loc, &z) in locations.zip(&aug.latents) {
                input[0] = self.state.scaler.scale_time(loc);
                self.pooled.push(input, z);
                bdata.log_time_sum += loc.ln();
            }
            bdata.points += aug.latents.len();
            if !self.options.prior_only {
                bdata
                    .exposures
                    .push((self.state.frailty.w[rec.cluster], aug.horizon(rec)));
            }
        }
        stats.augmented_points = self.pooled.len();

        // (3) baseline
        let mut rng = self.rng.derive(&[iter, STAGE_BASELINE]);
        self.state.bh = update_baseline(&self.state.bh, &bdata, &self.prior, &mut rng)?;

        // (4) ensemble
        let mut rng = self.rng.derive(&[iter, STAGE_FOREST]);
        stats.sweep = backfit_sweep(&mut self.state.forest, &self.pooled, &mut rng)?;
        let mut rng = self.rng.derive(&[iter, STAGE_LEAF_SCALE]);
        self.state.forest.update_leaf_scale(&mut rng)?;

        if self.frailty {
            // (5) eta
            if self.options.fixed_eta.is_none() {
                let mut rng = self.rng.derive(&[iter, STAGE_ETA]);
                self.state.frailty.eta = update_eta(
                    self.state.frailty.eta,
                    &self.state.frailty.w,
                    &self.config.eta_prior,
                    &mut rng,
                )?;
            }
            // (6) frailties
            let mut clusters = vec![ClusterStats::default(); self.data.clusters()];
            if !self.options.prior_only {
                for (rec, aug) in self.data.subjects.iter().zip(&self.state.augmented) {
                    let c = &mut clusters[rec.cluster];
                    c.events += aug.events();
                    c.rejected += aug.rejected.len();
                    c.cum_hazard += self.state.bh.cum(aug.horizon(rec));
                }
            }
            let mut rng = self.rng.derive(&[iter, STAGE_FRAILTY]);
            self.state.frailty.w = update_frailties(self.state.frailty.eta, &clusters, &mut rng)?;
        }

        self.iteration += 1;
        Ok(stats)
    }

    /// Runs burn-in and sampling, keeping every `thin`-th sampling iteration.
    pub fn run(&mut self) -> Result<PosteriorDraws> {
        let total = self.config.burn_in + self.config.samples;
        let mut draws = Vec::with_capacity(self.config.retained());
        for k in 0..total {
            self.step()?;
            if k >= self.config.burn_in && (k + 1 - self.config.burn_in) % self.config.thin == 0 {
                draws.push(self.snapshot());
            }
            if (k + 1) % 500 == 0 {
                log::debug!("iteration {}/{total}", k + 1);
            }
        }
        Ok(PosteriorDraws {
            header: self.header(),
            draws,
        })
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

/// Fits the full model (frailties per `config.frailty`) and returns the
/// retained draws.
pub fn fit(dataset: &Dataset, config: &FitConfig, rng: RngStream) -> Result<PosteriorDraws> {
    fit_with_options(dataset, config, SamplerOptions::default(), rng)
}

/// Fits with every frailty held at 1 and no `eta` updates.
pub fn fit_no_frailty(dataset: &Dataset, config: &FitConfig, rng: RngStream) -> Result<PosteriorDraws> {
    let config = FitConfig {
        frailty: false,
        ..config.clone()
    };
    fit(dataset, &config, rng)
}

pub fn fit_with_options(
    dataset: &Dataset,
    config: &FitConfig,
    options: SamplerOptions,
    rng: RngStream,
) -> Result<PosteriorDraws> {
    log::info!(
        "fit: {} subjects, {} clusters, {} covariates, seed {} stream {}",
        dataset.len(),
        dataset.clusters(),
        dataset.covariate_dim(),
        rng.seed(),
        rng.stream()
    );
    let mut sampler = Sampler::new(dataset.clone(), config.clone(), options, rng)?;
    with_threads(config.threads, || sampler.run())
}
