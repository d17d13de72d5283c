use softsurv::augment::SubjectRecord;
use softsurv::config::FitConfig;
use softsurv::data::Dataset;
use softsurv::kernels::RngStream;
use softsurv::predict::{predict_survival, FrailtyMode};
use softsurv::sampler::{fit_no_frailty, fit_with_options, PosteriorDraws, SamplerOptions};

fn data() -> Dataset {
    let mut rng = RngStream::new(17, 0);
    let subjects = (0..40)
        .map(|i| {
            let x = rng.uniform();
            let t = -(rng.uniform().ln()) / (0.5 + x);
            if i % 3 == 0 {
                SubjectRecord::new(i % 8, 0.5 * t, t + 0.3, vec![x]).unwrap()
            } else {
                SubjectRecord::uncensored(i % 8, t, vec![x]).unwrap()
            }
        })
        .collect();
    Dataset::from_records(subjects).unwrap()
}

const TIMES: [f64; 4] = [0.25, 0.5, 1.0, 1.5];
const ROWS: [f64; 3] = [0.1, 0.5, 0.9];

// Posterior-mean survival at each (row, time), averaged over chains.
fn pooled_curves(chains: &[PosteriorDraws], mode: FrailtyMode) -> Vec<f64> {
    let mut out = vec![0.0; ROWS.len() * TIMES.len()];
    for draws in chains {
        for (r, x) in ROWS.iter().enumerate() {
            let c = predict_survival(draws, &[*x], &TIMES, mode, 200).unwrap();
            for (k, s) in c.mean.iter().enumerate() {
                out[r * TIMES.len() + k] += s / chains.len() as f64;
            }
        }
    }
    out
}

// With eta fixed very large every frailty is pinned at 1, so the frailty fit
// must reproduce the no-frailty posterior up to Monte Carlo error.
#[test]
fn large_eta_matches_no_frailty() {
    let d = data();
    let config = FitConfig {
        trees: 5,
        burn_in: 500,
        samples: 10_000,
        // a learned leaf scale decorrelates the paired chains and the
        // difference drowns in Monte Carlo noise
        learn_leaf_scale: false,
        ..Default::default()
    };
    // Paired seeds: both fits share every random stream except the frailty
    // draws, which keeps the Monte Carlo noise in the difference small.
    let seeds = [1, 2, 3, 4];
    let plain: Vec<_> = seeds
        .iter()
        .map(|&s| fit_no_frailty(&d, &config, RngStream::new(s, 0)).unwrap())
        .collect();
    let pinned: Vec<_> = seeds
        .iter()
        .map(|&s| {
            let options = SamplerOptions {
                fixed_eta: Some(1e8),
                ..Default::default()
            };
            fit_with_options(&d, &config, options, RngStream::new(s, 0)).unwrap()
        })
        .collect();
    let w_dev = pinned
        .iter()
        .flat_map(|p| p.draws.iter())
        .flat_map(|dr| dr.w.iter())
        .map(|w| (w - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(w_dev < 1e-3, "frailty deviation {w_dev}");

    let a = pooled_curves(&plain, FrailtyMode::Unit);
    let b = pooled_curves(&pinned, FrailtyMode::Marginal);
    let worst = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    assert!(worst < 0.005, "max survival difference {worst}");
}
