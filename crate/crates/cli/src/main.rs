use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use softsurv::bench::{generate, run_benchmark, BenchConfig, Setting, SimConfig};
use softsurv::config::FitConfig;
use softsurv::data::{read_covariate_rows, Dataset};
use softsurv::kernels::RngStream;
use softsurv::predict::{lpml, predict_survival, rmst, write_curves, FrailtyMode};
use softsurv::sampler::fit;
use softsurv::{store, Error};

#[derive(Parser)]
#[command(name = "softsurv", version, about = "Soft-tree ensemble hazard regression for clustered, censored survival data")]
struct Cli {
    /// Cap on worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a training set (and optionally a test set) from setting A-D.
    Simulate(SimulateArgs),
    /// Fit the model and write a draw store.
    Fit(FitArgs),
    /// Posterior survival curves at new covariates.
    Predict(PredictArgs),
    /// Restricted mean survival time at new covariates.
    Rmst(RmstArgs),
    /// Log pseudo marginal likelihood of a dataset under a draw store.
    Lpml(LpmlArgs),
    /// Simulation benchmark: mean prediction RMSE over replicates.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Unit,
    Marginal,
}

impl From<ModeArg> for FrailtyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Unit => FrailtyMode::Unit,
            ModeArg::Marginal => FrailtyMode::Marginal,
        }
    }
}

/// Sampler settings shared by `fit` and `benchmark`; flags override the file.
#[derive(Args)]
struct SamplerArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Baseline family: exponential or weibull.
    #[arg(long)]
    family: Option<String>,
    /// Hold every frailty at 1.
    #[arg(long)]
    no_frailty: bool,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl SamplerArgs {
    fn resolve(&self, threads: usize) -> Result<FitConfig, Error> {
        let mut c = FitConfig::default();
        if let Some(path) = &self.config {
            c.apply_text(&fs::read_to_string(path)?)?;
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("trees", self.trees.map(|v| v.to_string())),
            ("burn_in", self.burn_in.map(|v| v.to_string())),
            ("samples", self.samples.map(|v| v.to_string())),
            ("thin", self.thin.map(|v| v.to_string())),
            ("family", self.family.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                c.set(k, &v)?;
            }
        }
        if self.no_frailty {
            c.frailty = false;
        }
        if threads > 0 {
            c.threads = threads;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            c.set(k.trim(), v)?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    setting: Setting,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training data output (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Test covariates output (CSV).
    #[arg(long)]
    test_out: Option<PathBuf>,
    /// True survival of the test subjects on the ten-point grid (CSV).
    #[arg(long)]
    truth_out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 10)]
    cluster_size: usize,
    #[arg(long, default_value_t = 100)]
    test_size: usize,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    draws: PathBuf,
    /// Covariate rows (CSV with the training covariate columns).
    #[arg(long)]
    at: PathBuf,
    /// Comma-separated ascending times.
    #[arg(long, value_delimiter = ',', required = true)]
    times: Vec<f64>,
    #[arg(long, value_enum, default_value = "unit")]
    mode: ModeArg,
    /// Quadrature points (defaults to the fit's grid setting).
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RmstArgs {
    #[arg(long)]
    draws: PathBuf,
    #[arg(long)]
    at: PathBuf,
    #[arg(long)]
    tau: f64,
    #[arg(long, value_enum, default_value = "unit")]
    mode: ModeArg,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LpmlArgs {
    #[arg(long)]
    draws: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    setting: Setting,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    /// Use every k-th retained draw for prediction.
    #[arg(long, default_value_t = 5)]
    stride: usize,
    #[arg(long, value_enum, default_value = "unit")]
    mode: ModeArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn log_config(c: &FitConfig) {
    for line in c.to_text().lines() {
        log::info!("config {line}");
    }
}

fn read_dataset(path: &Path) -> Result<Dataset, Error> {
    Dataset::read_csv(File::open(path)?)
}

fn simulate(a: &SimulateArgs) -> Result<(), Error> {
    let cfg = SimConfig {
        setting: a.setting,
        n: a.n,
        clusters: a.clusters,
        cluster_size: a.cluster_size,
        replicates: 1,
        test_size: a.test_size,
        seed: a.seed,
    };
    log::info!("simulate setting {} seed {}", a.setting, a.seed);
    let rep = generate(&cfg, &mut RngStream::new(a.seed, 0))?;
    rep.train.write_csv(BufWriter::new(File::create(&a.out)?))?;
    if let Some(p) = &a.test_out {
        let mut w = BufWriter::new(File::create(p)?);
        writeln!(w, "x1,x2,x3,x4,x5")?;
        for x in &rep.test_x {
            let row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
    }
    if let Some(p) = &a.truth_out {
        let mut w = BufWriter::new(File::create(p)?);
        writeln!(w, "subject,time,survival")?;
        for (i, row) in rep.truth.iter().enumerate() {
            for (t, s) in rep.grid.iter().zip(row) {
                writeln!(w, "{i},{t},{s}")?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn run_fit(a: &FitArgs, threads: usize) -> Result<(), Error> {
    let config = a.sampler.resolve(threads)?;
    log_config(&config);
    let data = read_dataset(&a.data)?;
    let draws = fit(&data, &config, RngStream::new(config.seed, 0))?;
    store::save(&a.out, &draws)?;
    log::info!("wrote {} draws to {}", draws.draws.len(), a.out.display());
    Ok(())
}

fn run_predict(a: &PredictArgs) -> Result<(), Error> {
    let draws = store::load(&a.draws)?;
    let rows = read_covariate_rows(File::open(&a.at)?, &draws.header.covariates)?;
    let grid = a.grid.unwrap_or(draws.header.config.grid);
    let curves = rows
        .iter()
        .map(|x| predict_survival(&draws, x, &a.times, a.mode.into(), grid))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = output(a.out.as_deref())?;
    write_curves(&mut out, &curves)?;
    out.flush()?;
    Ok(())
}

fn run_rmst(a: &RmstArgs) -> Result<(), Error> {
    let draws = store::load(&a.draws)?;
    let rows = read_covariate_rows(File::open(&a.at)?, &draws.header.covariates)?;
    let grid = a.grid.unwrap_or(draws.header.config.grid).max(2);
    let times: Vec<f64> = (0..grid)
        .map(|k| a.tau * k as f64 / (grid - 1) as f64)
        .collect();
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "subject,tau,mean,lower,upper")?;
    for (i, x) in rows.iter().enumerate() {
        let curve = predict_survival(&draws, x, &times, a.mode.into(), grid)?;
        let r = rmst(&curve, a.tau)?;
        writeln!(out, "{i},{},{},{},{}", r.tau, r.mean, r.lower, r.upper)?;
    }
    out.flush()?;
    Ok(())
}

fn run_lpml(a: &LpmlArgs) -> Result<(), Error> {
    let draws = store::load(&a.draws)?;
    let data = read_dataset(&a.data)?;
    let grid = a.grid.unwrap_or(draws.header.config.grid);
    let v = lpml(&data, &draws, grid)?;
    println!("lpml {v}");
    Ok(())
}

fn run_bench(a: &BenchmarkArgs, threads: usize) -> Result<(), Error> {
    let fit = a.sampler.resolve(threads)?;
    log_config(&fit);
    let mut cfg = BenchConfig::new(a.setting);
    cfg.sim.replicates = a.replicates;
    cfg.sim.seed = fit.seed;
    cfg.predict_stride = a.stride;
    cfg.mode = a.mode.into();
    // replicates already run in parallel; each fit stays on the shared pool
    cfg.fit = FitConfig { threads: 0, ..fit };
    let report = run_benchmark(&cfg)?;
    let mut out = output(a.out.as_deref())?;
    report.write(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Error category and exit code.
fn classify(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Config(_) => ("config", 3),
        Error::Data(_) | Error::Shape(_) => ("data", 4),
        Error::Store(_) => ("store", 5),
        Error::Io(_) => ("io", 6),
        Error::Subject { source, .. } | Error::Replicate { source, .. } => {
            let (kind, code) = classify(source);
            if code == 7 || code == 8 {
                (kind, code)
            } else {
                ("numeric", 7)
            }
        }
        Error::ImputationCap { .. } => ("imputation", 8),
        Error::Domain(_)
        | Error::SliceNonFinite(_)
        | Error::NotPositiveDefinite
        | Error::NonPositiveLikelihood { .. } => ("numeric", 7),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error[config]: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => run_fit(a, cli.threads),
        Command::Predict(a) => run_predict(a),
        Command::Rmst(a) => run_rmst(a),
        Command::Lpml(a) => run_lpml(a),
        Command::Benchmark(a) => run_bench(a, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = classify(&e);
            eprintln!("error[{kind}]: {}", e.to_string().replace('\n', " "));
            ExitCode::from(code)
        }
    }
}
