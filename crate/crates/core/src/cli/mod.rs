//! Command-line front end.
//!
//! Every command resolves a [`RunConfig`] from defaults, an optional
//! `key = value` file and flags (flags win), echoes it to stderr as JSON and
//! writes its files plus `run.json` into the output directory. The wall-clock
//! time appears only under the `timestamp` key of `run.json`.

pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dpp::{
    enumerate_distribution, samples_to_csv, Configuration, DppSampler, MAX_ENUMERATION,
};
use crate::dynamics::{simulate_with_engine, RateEngine, Trajectory, TrajectoryMeta};
use crate::error::Error;
use crate::exact::{build_generator, spectrum};
use crate::format::fmt_complex;
use crate::kernel::{is_admissible, kernel_matrix, Site};
use crate::rn::{
    rn_derivative, rn_moments, rn_stabilization, stabilization_csv, SitePattern, SwapPair,
};
use crate::rng::SeededRng;
use config::{parse_window, RunConfig, Settings};
use verify::{alternating, Suite};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "KAWASAKI_DPP_THREADS";

/// Stream offset for the environment samples of `--phi-window` runs, far
/// from the replica streams `0, 1, 2, …`.
const ENVIRONMENT_STREAM_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, config values or inputs; exit code 1.
    Usage(String),
    /// Numerical or I/O failure; exit code 2.
    Failure(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::WindowMismatch(_)
            | Error::DuplicateSite(_)
            | Error::SamePoint(_)
            | Error::Size { .. }
            | Error::EmptyInput(_)
            | Error::DimensionMismatch { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "kawasaki-dpp",
    version,
    about = "Gamma-kernel DPPs on Z+1/2 and their Kawasaki swap dynamics"
)]
pub struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args)]
struct CommonArgs {
    /// First kernel parameter, `a` or `a+bi`.
    #[arg(
        long,
        global = true,
        allow_hyphen_values = true,
        value_name = "COMPLEX"
    )]
    z: Option<String>,
    /// Second kernel parameter, `a` or `a+bi`.
    #[arg(
        long,
        global = true,
        allow_hyphen_values = true,
        value_name = "COMPLEX"
    )]
    zp: Option<String>,
    /// Inclusive site-index range; site `i` sits at `x = i + 1/2`.
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "LO..HI")]
    window: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` file; flags override its entries.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// metropolis, sqrt-ratio or glauber-like.
    #[arg(long, global = true)]
    rate_model: Option<String>,
    /// nn, exp:<alpha> or range:<r>.
    #[arg(long, global = true)]
    proximity: Option<String>,
    /// Proximity weight multiplying `u`.
    #[arg(long, global = true)]
    weight: Option<f64>,
    #[arg(long, global = true)]
    t_max: Option<f64>,
    #[arg(long, global = true)]
    n_samples: Option<usize>,
}

impl CommonArgs {
    fn settings(&self) -> Settings {
        Settings {
            z: self.z.clone(),
            zp: self.zp.clone(),
            window: self.window.clone(),
            seed: self.seed,
            rate_model: self.rate_model.clone(),
            proximity: self.proximity.clone(),
            weight: self.weight,
            t_max: self.t_max,
            n_samples: self.n_samples,
            output_dir: self.output_dir.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print whether (z, z') is an admissible pair.
    Admissible,
    /// Kernel matrix on the window with its diagnostics.
    Kernel,
    /// Exact samples of the window DPP.
    Sample,
    /// Probability of every configuration of the window.
    ExactProbs,
    /// Swap ratios for one transposition.
    Rn(RnArgs),
    /// Simulate the swap dynamics.
    Simulate(SimulateArgs),
    /// Spectrum of the generator on the window.
    Spectrum(SpectrumArgs),
    /// Run the bundled invariant checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct RnArgs {
    /// Site index of the first swapped site.
    #[arg(long, allow_hyphen_values = true)]
    x: i64,
    /// Site index of the second swapped site.
    #[arg(long, allow_hyphen_values = true)]
    y: i64,
    /// Configuration on the window as a 0/1 string, leftmost site first.
    #[arg(long)]
    gamma: Option<String>,
    /// Conditioning pattern `index:0|1,...` for the stabilization table.
    #[arg(long, allow_hyphen_values = true)]
    pattern: Option<String>,
    /// Window sizes for the stabilization table, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SimulateArgs {
    /// Initial configuration as a 0/1 string; defaults to `1010…`.
    #[arg(long)]
    initial: Option<String>,
    /// Independent replicas; replica `r` uses random stream `r`.
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    /// Larger window on which the swap ratios are evaluated, with the sites
    /// outside the simulation window frozen at a sampled environment.
    #[arg(long, allow_hyphen_values = true, value_name = "LO..HI")]
    phi_window: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SpectrumArgs {
    /// Particle number; the full configuration space when omitted.
    #[arg(long)]
    sector: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Usage(format!("{THREADS_ENV}={v:?}: expected a positive integer"))
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Failure(format!("thread pool: {e}")))
}

fn execute(cli: Cli) -> CliResult<i32> {
    let file = match &cli.common.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let config = RunConfig::resolve(cli.common.settings(), file)?;
    eprintln!("{}", json!({ "run_config": config }));
    thread_pool()?.install(|| match &cli.command {
        Command::Admissible => {
            println!("{}", is_admissible(config.z, config.z_prime));
            Ok(0)
        }
        Command::Kernel => cmd_kernel(&config),
        Command::Sample => cmd_sample(&config),
        Command::ExactProbs => cmd_exact_probs(&config),
        Command::Rn(args) => cmd_rn(&config, args),
        Command::Simulate(args) => cmd_simulate(&config, args),
        Command::Spectrum(args) => cmd_spectrum(&config, args),
        Command::Verify(args) => {
            let report = verify::run_suite(args.suite, &config)?;
            println!("{}", to_json(&report));
            Ok(if report.failures == 0 { 0 } else { 2 })
        }
    })
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

/// Files of one run, written by the orchestrating thread only.
struct RunOutput<'a> {
    config: &'a RunConfig,
    command: &'static str,
    args: Value,
    files: Vec<(String, String)>,
}

impl<'a> RunOutput<'a> {
    fn new(config: &'a RunConfig, command: &'static str, args: Value) -> Self {
        Self {
            config,
            command,
            args,
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn write(self) -> CliResult<()> {
        let dir: &Path = &self.config.output_dir;
        fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            fs::write(dir.join(name), contents)?;
        }
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let run = json!({
            "command": self.command,
            "config": self.config,
            "args": self.args,
            "outputs": self.files.iter().map(|f| &f.0).collect::<Vec<_>>(),
            "timestamp": timestamp,
        });
        fs::write(dir.join("run.json"), to_json(&run) + "\n")?;
        Ok(())
    }
}

fn cmd_kernel(config: &RunConfig) -> CliResult<i32> {
    let k = kernel_matrix(&config.pair()?, &config.window)?;
    let diag = k.diagnostics()?;
    let summary = to_json(&json!({ "window": config.window.to_string(), "diagnostics": diag }));
    let mut out = RunOutput::new(config, "kernel", Value::Null);
    out.add("kernel.csv", k.to_csv());
    out.add("kernel_diagnostics.json", summary.clone() + "\n");
    out.write()?;
    println!("{summary}");
    Ok(0)
}

fn cmd_sample(config: &RunConfig) -> CliResult<i32> {
    let k = kernel_matrix(&config.pair()?, &config.window)?;
    let sampler = DppSampler::new(&k)?;
    let base = SeededRng::new(config.seed);
    let samples: Vec<Configuration> = (0..config.n_samples)
        .into_par_iter()
        .map(|i| sampler.sample(&mut base.stream(i as u64)))
        .collect();
    let n = samples.len() as f64;
    let mean = samples
        .iter()
        .map(|s| s.particle_count() as f64)
        .sum::<f64>()
        / n;
    let variance: f64 = sampler.eigenvalues().iter().map(|l| l * (1.0 - l)).sum();
    let summary = to_json(&json!({
        "window": config.window.to_string(),
        "n_samples": samples.len(),
        "mean_count": mean,
        "expected_count": k.trace(),
        "count_variance": variance,
    }));
    let mut out = RunOutput::new(config, "sample", Value::Null);
    out.add("samples.csv", samples_to_csv(&config.window, &samples));
    out.add("sample_summary.json", summary.clone() + "\n");
    out.write()?;
    println!("{summary}");
    Ok(0)
}

fn cmd_exact_probs(config: &RunConfig) -> CliResult<i32> {
    let k = kernel_matrix(&config.pair()?, &config.window)?;
    let pmf = enumerate_distribution(&k)?;
    let summary = to_json(&json!({
        "window": config.window.to_string(),
        "states": pmf.probs().len(),
        "total": pmf.total(),
        "min": pmf.min(),
        "clamped": pmf.clamped(),
    }));
    let mut out = RunOutput::new(config, "exact-probs", Value::Null);
    out.add("pmf.csv", pmf.to_csv());
    out.write()?;
    println!("{summary}");
    Ok(0)
}

fn cmd_rn(config: &RunConfig, args: &RnArgs) -> CliResult<i32> {
    let p = config.pair()?;
    let s = SwapPair::new(Site(args.x), Site(args.y))?;
    let w = config.window;
    let mut result = json!({
        "window": w.to_string(),
        "x": Site(args.x).x(),
        "y": Site(args.y).x(),
    });
    let mut out = RunOutput::new(
        config,
        "rn",
        serde_json::to_value(args).expect("serializable"),
    );
    if args.gamma.is_some() || w.size() <= MAX_ENUMERATION {
        let k = kernel_matrix(&p, &w)?;
        if let Some(text) = &args.gamma {
            let gamma = Configuration::parse(w, text)?;
            result["gamma"] = json!(text);
            result["phi"] = json!(rn_derivative(&k, &gamma, s)?);
        }
        if w.size() <= MAX_ENUMERATION {
            result["moments"] = json!(rn_moments(&k, s)?);
        }
    }
    if !args.sizes.is_empty() {
        let pattern = match &args.pattern {
            Some(text) => SitePattern::parse(text)?,
            None => SitePattern::new(Vec::new())?,
        };
        let rows = rn_stabilization(
            &p,
            &pattern,
            s,
            &args.sizes,
            config.n_samples,
            &SeededRng::new(config.seed),
        )?;
        out.add("rn_stabilization.csv", stabilization_csv(&rows));
        result["stabilization"] = json!(rows);
    }
    let summary = to_json(&result);
    out.add("rn.json", summary.clone() + "\n");
    out.write()?;
    println!("{summary}");
    Ok(0)
}

fn cmd_simulate(config: &RunConfig, args: &SimulateArgs) -> CliResult<i32> {
    if args.replicas == 0 {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }
    let p = config.pair()?;
    let w = config.window;
    let model = config.model();
    let initial = match &args.initial {
        Some(text) => Configuration::parse(w, text)?,
        None => alternating(w),
    };
    let phi_kernel = match &args.phi_window {
        Some(text) => {
            let big = parse_window(text)?;
            if !big.contains_window(&w) {
                return Err(CliError::Usage(format!(
                    "--phi-window {big} must contain --window {w}"
                )));
            }
            Some(kernel_matrix(&p, &big)?)
        }
        None => None,
    };
    let k = kernel_matrix(&p, &w)?;
    let base = SeededRng::new(config.seed);

    let trajectories: Vec<Trajectory> = (0..args.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut engine = match &phi_kernel {
                None => RateEngine::new(model, k.clone()),
                Some(big) => {
                    let env = DppSampler::new(big)?
                        .sample(&mut base.stream(ENVIRONMENT_STREAM_OFFSET + r));
                    RateEngine::with_environment(model, big.clone(), w, env)?
                }
            };
            simulate_with_engine(&mut engine, &initial, config.t_max, &mut base.stream(r))
        })
        .collect::<crate::error::Result<_>>()?;

    let mut out = RunOutput::new(
        config,
        "simulate",
        serde_json::to_value(args).expect("serializable"),
    );
    let mut replicas = Vec::new();
    for (r, t) in trajectories.iter().enumerate() {
        let meta = TrajectoryMeta {
            seed: config.seed,
            stream: r as u64,
            z: fmt_complex(config.z),
            z_prime: fmt_complex(config.z_prime),
            window: w.to_string(),
            rate_model: config.rate_model.to_string(),
            proximity: config.proximity.to_string(),
            proximity_weight: config.proximity_weight,
            t_max: config.t_max,
            initial_bitmask: initial.to_string(),
            n_events: t.n_events(),
            absorbed: t.absorbed,
        };
        out.add(format!("trajectory_{r}.csv"), t.to_csv());
        out.add(format!("trajectory_{r}.json"), to_json(&meta) + "\n");
        replicas.push(json!({
            "replica": r,
            "n_events": t.n_events(),
            "absorbed": t.absorbed,
            "final": t.final_configuration().to_string(),
        }));
    }
    out.write()?;
    println!(
        "{}",
        to_json(&json!({ "window": w.to_string(), "replicas": replicas }))
    );
    Ok(0)
}

#[derive(Serialize)]
struct SpectrumOutput {
    window: String,
    sector: Option<usize>,
    model: Value,
    eigenvalues: Vec<f64>,
    spectral_gap: f64,
}

fn cmd_spectrum(config: &RunConfig, args: &SpectrumArgs) -> CliResult<i32> {
    let k = kernel_matrix(&config.pair()?, &config.window)?;
    let g = build_generator(&config.model(), &k, args.sector)?;
    let s = spectrum(&g)?;
    let report = to_json(&SpectrumOutput {
        window: config.window.to_string(),
        sector: args.sector,
        model: json!({
            "rate_model": config.rate_model.to_string(),
            "proximity": config.proximity.to_string(),
            "proximity_weight": config.proximity_weight,
        }),
        eigenvalues: s.eigenvalues,
        spectral_gap: s.spectral_gap,
    });
    let mut out = RunOutput::new(
        config,
        "spectrum",
        serde_json::to_value(args).expect("serializable"),
    );
    out.add("spectrum.json", report.clone() + "\n");
    out.write()?;
    println!("{report}");
    Ok(0)
}
