#![allow(dead_code)]

use softsurv::augment::{sample_event_time, SubjectRecord};
use softsurv::config::FitConfig;
use softsurv::data::Dataset;
use softsurv::diagnostics::geweke_z;
use softsurv::forest::{Forest, ForestHyper, InputScaler};
use softsurv::hazard::{BaselineHazard, BaselinePrior, FrailtyState, GammaPrior};
use softsurv::kernels::{sample_gamma, RngStream};
use softsurv::sampler::{ModelState, Sampler, SamplerOptions};

pub const CLUSTERS: [usize; 4] = [0, 0, 1, 1];
pub const COVARIATES: [f64; 4] = [0.15, 0.6, 0.35, 0.85];
pub const PROBES: [[f64; 2]; 3] = [[0.2, 0.3], [0.5, 0.7], [0.9, 0.5]];

fn prior() -> BaselinePrior {
    BaselinePrior {
        rate: GammaPrior::new(2.0, 2.0),
        shape: GammaPrior::new(2.0, 2.0),
    }
}

fn eta_prior() -> GammaPrior {
    GammaPrior::new(3.0, 1.0)
}

/// Which miniature model to test.
#[derive(Clone, Copy, Debug)]
pub struct Variant {
    pub frailty: bool,
    pub censored: bool,
}

fn hyper() -> ForestHyper {
    ForestHyper {
        sigma_mu: 1.0,
        ..ForestHyper::with_trees(1)
    }
}

fn scaler() -> InputScaler {
    InputScaler {
        time_scale: 3.0,
        mins: vec![0.0],
        spans: vec![1.0],
    }
}

struct Params {
    bh: BaselineHazard,
    frailty: FrailtyState,
    forest: Forest,
}

fn functionals(p: &Params, v: Variant) -> Vec<f64> {
    let mut out = vec![p.bh.rate()];
    if v.frailty {
        out.push(p.frailty.w[0]);
        out.push(p.frailty.eta);
    }
    out.extend(PROBES.iter().map(|x| p.forest.evaluate_scaled(x)));
    out
}

fn names(v: Variant) -> Vec<&'static str> {
    let mut out = vec!["omega"];
    if v.frailty {
        out.extend(["w1", "eta"]);
    }
    out.extend(["l(p1)", "l(p2)", "l(p3)"]);
    out
}

fn forward_params(v: Variant, rng: &mut RngStream) -> Params {
    let rate = sample_gamma(2.0, 2.0, rng).unwrap();
    let frailty = if v.frailty {
        let eta = sample_gamma(eta_prior().shape, eta_prior().rate, rng).unwrap();
        let w = (0..2).map(|_| sample_gamma(eta, eta, rng).unwrap()).collect();
        FrailtyState { eta, w }
    } else {
        FrailtyState::unit(2, f64::INFINITY)
    };
    Params {
        bh: BaselineHazard::Exponential { rate },
        frailty,
        forest: Forest::sample_prior(hyper(), 2, rng),
    }
}

fn simulate_times(p: &Params, rng: &mut RngStream) -> Vec<f64> {
    let s = scaler();
    (0..4)
        .map(|i| {
            let x = [COVARIATES[i]];
            sample_event_time(
                p.frailty.w[CLUSTERS[i]],
                |t| p.forest.evaluate(t, &x, &s),
                &p.bh,
                rng,
            )
            .unwrap()
        })
        .collect()
}

// Fixed, non-informative censoring: subject 0 exact, subject 1 right-censored
// at 0.8, subjects 2 and 3 inspected every 0.5 up to 2 (left-, interval- or
// right-censored accordingly).
fn record(i: usize, t: f64, censored: bool) -> SubjectRecord {
    let x = vec![COVARIATES[i]];
    let c = CLUSTERS[i];
    if !censored || i == 0 {
        return SubjectRecord::uncensored(c, t, x).unwrap();
    }
    if i == 1 {
        return if t > 0.8 {
            SubjectRecord::new(c, 0.8, f64::INFINITY, x).unwrap()
        } else {
            SubjectRecord::uncensored(c, t, x).unwrap()
        };
    }
    if t > 2.0 {
        return SubjectRecord::new(c, 2.0, f64::INFINITY, x).unwrap();
    }
    let lo = (t / 0.5).floor() * 0.5;
    SubjectRecord::new(c, lo, lo + 0.5, x).unwrap()
}

fn dataset(times: &[f64], censored: bool) -> Dataset {
    let subjects = times
        .iter()
        .enumerate()
        .map(|(i, &t)| record(i, t, censored))
        .collect();
    Dataset::from_records(subjects).unwrap()
}

/// First and second moments of each tracked functional, as
/// `(name, z)` pairs, from `n` forward draws and `n` successive-conditional
/// transitions on the two-cluster, four-subject, one-tree model. With
/// `censored`, three of the four subjects are observed through censoring.
pub fn miniature_geweke(v: Variant, n: usize, seed: u64) -> Vec<(String, f64)> {
    let Variant { frailty, censored, .. } = v;
    let mut rng = RngStream::new(seed, 0);
    let k = names(v).len();
    let mut forward = vec![Vec::with_capacity(n); 2 * k];
    for _ in 0..n {
        let p = forward_params(v, &mut rng);
        for (j, f) in functionals(&p, v).into_iter().enumerate() {
            forward[j].push(f);
            forward[k + j].push(f * f);
        }
    }

    let start = forward_params(v, &mut rng);
    let times = simulate_times(&start, &mut rng);
    let config = FitConfig {
        trees: 1,
        eta_prior: eta_prior(),
        frailty,
        learn_leaf_scale: false,
        ..Default::default()
    };
    let options = SamplerOptions {
        scaler: Some(scaler()),
        baseline_prior: Some(prior()),
        ..Default::default()
    };
    let mut sampler = Sampler::new(dataset(&times, censored), config, options, RngStream::new(seed, 1)).unwrap();
    {
        let st: &mut ModelState = sampler.state_mut();
        st.bh = start.bh;
        st.frailty = start.frailty;
        st.forest = start.forest;
    }
    let mut chain = vec![Vec::with_capacity(n); 2 * k];
    for _ in 0..n {
        sampler.step().unwrap();
        let st = sampler.state();
        let p = Params {
            bh: st.bh,
            frailty: st.frailty.clone(),
            forest: st.forest.clone(),
        };
        for (j, f) in functionals(&p, v).into_iter().enumerate() {
            chain[j].push(f);
            chain[k + j].push(f * f);
        }
        let times = simulate_times(&p, &mut rng);
        for (i, (s, t)) in sampler.data_mut().subjects.iter_mut().zip(times).enumerate() {
            *s = record(i, t, censored);
        }
    }

    let labels = names(v);
    (0..2 * k)
        .map(|j| {
            let name = if j < k {
                format!("E[{}]", labels[j])
            } else {
                format!("E[{}^2]", labels[j - k])
            };
            (name, geweke_z(&forward[j], &chain[j], 50))
        })
        .collect()
}
