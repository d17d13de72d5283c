//! Sampler configuration and its flat `key = value` text form.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestHyper;
use crate::hazard::{BaselineFamily, GammaPrior, DEFAULT_WEIBULL_SHAPE_PRIOR};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub trees: usize,
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
    pub family: BaselineFamily,
    /// Gamma prior on the baseline rate; `None` centres it on the data.
    pub rate_prior: Option<GammaPrior>,
    pub shape_prior: GammaPrior,
    pub eta_prior: GammaPrior,
    pub frailty: bool,
    /// Learn the leaf scale under a half-Cauchy hyperprior instead of holding
    /// it at its default.
    pub learn_leaf_scale: bool,
    /// Quadrature points for survival prediction.
    pub grid: usize,
    /// Worker threads; 0 uses the rayon default. Not stored with draws,
    /// which do not depend on it.
    #[serde(skip)]
    pub threads: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            trees: 50,
            burn_in: 2500,
            samples: 2500,
            thin: 1,
            seed: 0,
            family: BaselineFamily::Exponential,
            rate_prior: None,
            shape_prior: DEFAULT_WEIBULL_SHAPE_PRIOR,
            eta_prior: GammaPrior::new(4.0, 0.01),
            frailty: true,
            learn_leaf_scale: true,
            grid: 200,
            threads: 0,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "trees",
    "burn_in",
    "samples",
    "thin",
    "seed",
    "family",
    "rate_prior_shape",
    "rate_prior_rate",
    "shape_prior_shape",
    "shape_prior_rate",
    "eta_prior_shape",
    "eta_prior_rate",
    "frailty",
    "learn_leaf_scale",
    "grid",
    "threads",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl FitConfig {
    pub fn hyper(&self) -> ForestHyper {
        if self.learn_leaf_scale {
            ForestHyper::with_learned_scale(self.trees)
        } else {
            ForestHyper::with_trees(self.trees)
        }
    }

    /// Number of draws a run keeps.
    pub fn retained(&self) -> usize {
        self.samples / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("trees", self.trees),
            ("samples", self.samples),
            ("thin", self.thin),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if self.samples < self.thin {
            return Err(Error::Config("thin exceeds samples; no draws would be kept".into()));
        }
        if self.grid < 2 {
            return Err(Error::Config("grid needs at least 2 points".into()));
        }
        let mut priors = vec![("shape_prior", self.shape_prior), ("eta_prior", self.eta_prior)];
        if let Some(p) = self.rate_prior {
            priors.push(("rate_prior", p));
        }
        for (k, p) in priors {
            if !(p.shape > 0.0 && p.rate > 0.0 && p.shape.is_finite() && p.rate.is_finite()) {
                return Err(Error::Config(format!("{k} parameters must be positive and finite")));
            }
        }
        Ok(())
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "trees" => self.trees = parse(key, value)?,
            "burn_in" => self.burn_in = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "thin" => self.thin = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "family" => {
                self.family = match value {
                    "exponential" => BaselineFamily::Exponential,
                    "weibull" => BaselineFamily::Weibull,
                    _ => return Err(Error::Config(format!("unknown family {value:?}"))),
                }
            }
            "rate_prior_shape" | "rate_prior_rate" => {
                let mut p = self.rate_prior.unwrap_or(GammaPrior::new(1.0, 1.0));
                if key == "rate_prior_shape" {
                    p.shape = parse(key, value)?;
                } else {
                    p.rate = parse(key, value)?;
                }
                self.rate_prior = Some(p);
            }
            "shape_prior_shape" => self.shape_prior.shape = parse(key, value)?,
            "shape_prior_rate" => self.shape_prior.rate = parse(key, value)?,
            "eta_prior_shape" => self.eta_prior.shape = parse(key, value)?,
            "eta_prior_rate" => self.eta_prior.rate = parse(key, value)?,
            "frailty" => self.frailty = parse(key, value)?,
            "learn_leaf_scale" => self.learn_leaf_scale = parse(key, value)?,
            "grid" => self.grid = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Full resolved configuration as `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let family = match self.family {
            BaselineFamily::Exponential => "exponential",
            BaselineFamily::Weibull => "weibull",
        };
        let _ = writeln!(s, "trees = {}", self.trees);
        let _ = writeln!(s, "burn_in = {}", self.burn_in);
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "thin = {}", self.thin);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "family = {family}");
        if let Some(p) = self.rate_prior {
            let _ = writeln!(s, "rate_prior_shape = {}", p.shape);
            let _ = writeln!(s, "rate_prior_rate = {}", p.rate);
        }
        let _ = writeln!(s, "shape_prior_shape = {}", self.shape_prior.shape);
        let _ = writeln!(s, "shape_prior_rate = {}", self.shape_prior.rate);
        let _ = writeln!(s, "eta_prior_shape = {}", self.eta_prior.shape);
        let _ = writeln!(s, "eta_prior_rate = {}", self.eta_prior.rate);
        let _ = writeln!(s, "frailty = {}", self.frailty);
        let _ = writeln!(s, "learn_leaf_scale = {}", self.learn_leaf_scale);
        let _ = writeln!(s, "grid = {}", self.grid);
        let _ = writeln!(s, "threads = {}", self.threads);
        s
    }
}
