//! `proxydfm`: simulate the fiscal-foresight DGP, run Monte Carlo
//! comparisons of proxy VAR / FAVAR / DFM estimators, and estimate a proxy
//! DFM on an external panel + instrument.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use proxydfm_core as core;
use proxydfm_core::{Error, InstrumentSeries, TimeSeriesPanel};

mod estimate;

#[derive(Parser)]
#[command(name = "proxydfm", version, about = "proxy-identified dynamic factor models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub(crate) struct CommonArgs {
    /// JSON configuration file
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// output directory
    #[arg(long)]
    pub(crate) out: PathBuf,
    /// RNG seed (overrides the config)
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    /// worker threads (falls back to PROXYDFM_THREADS, then all cores)
    #[arg(long)]
    pub(crate) threads: Option<usize>,
}

#[derive(Args, Clone)]
pub(crate) struct DataArgs {
    /// balanced panel CSV (optionally with a FRED-style transform row)
    #[arg(long)]
    pub(crate) panel: PathBuf,
    /// instrument CSV (date, value)
    #[arg(long)]
    pub(crate) instrument: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one dataset from the fiscal-foresight DGP
    Simulate(CommonArgs),
    /// Run a Monte Carlo estimator comparison
    Montecarlo(CommonArgs),
    /// Estimate a proxy DFM on a panel + instrument
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Test the instrument's dependence on future innovations
    InvertibilityTest {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Re-estimate a proxy VAR once per candidate variable
    SpecSweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: Option<String>,
    out: String,
    seed: Option<u64>,
    version: &'a str,
    timestamp: String,
}

/// Write the manifest atomically (temp file + rename) before any results.
pub(crate) fn write_manifest(common: &CommonArgs, command: &str) -> core::Result<()> {
    std::fs::create_dir_all(&common.out)?;
    let manifest = RunManifest {
        command,
        config: common.config.as_ref().map(|p| p.display().to_string()),
        out: common.out.display().to_string(),
        seed: common.seed,
        version: env!("CARGO_PKG_VERSION"),
        timestamp: timestamp(),
    };
    let tmp = common.out.join(".manifest.json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(&manifest)?)?;
    std::fs::rename(&tmp, common.out.join("manifest.json"))?;
    Ok(())
}

fn timestamp() -> String {
    use std::time::{SystemTime, UNIX_EPOCH};
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("{secs}")
}

fn init_threads(threads: Option<usize>) {
    let n = threads.or_else(|| {
        std::env::var("PROXYDFM_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub(crate) fn load_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> core::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad config {}: {e}", p.display())))
        }
    }
}

fn cmd_simulate(common: &CommonArgs) -> core::Result<()> {
    let mut params: core::LeeperParams = load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        params.seed = s;
    }
    write_manifest(common, "simulate")?;
    let ds = core::simulate(&params)?;
    let out = &common.out;
    ds.noisy_panel.save_csv(&out.join("panel.csv"), None)?;
    ds.observables.save_csv(&out.join("observables.csv"), None)?;
    let truth = out.join("truth");
    std::fs::create_dir_all(&truth)?;
    let shocks = TimeSeriesPanel::new(
        ds.true_shocks.clone(),
        vec!["u_a".into(), "u_tau".into()],
        None,
        core::Frequency::Abstract,
    )?;
    shocks.save_csv(&truth.join("true_shocks.csv"), None)?;
    let names = ["a", "k", "tau"];
    let mut wtr = csv::Writer::from_path(truth.join("true_irf.csv"))?;
    wtr.write_record(["horizon", "variable", "shock", "value"])?;
    for (h, b) in ds.true_irf.iter().enumerate() {
        for (i, v) in names.iter().enumerate() {
            for (j, s) in ["u_tau", "u_a"].iter().enumerate() {
                wtr.write_record([
                    h.to_string(),
                    v.to_string(),
                    s.to_string(),
                    format!("{:.17e}", b[(i, j)]),
                ])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::Io(e.into()))?;
    log::info!(
        "simulated T={} N={} into {}",
        params.t,
        ds.noisy_panel.nvars(),
        out.display()
    );
    Ok(())
}

fn cmd_montecarlo(common: &CommonArgs) -> core::Result<()> {
    let mut cfg: core::ExperimentConfig = load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.dgp.seed = s;
    }
    write_manifest(common, "montecarlo")?;
    let res = core::run_experiment(&cfg)?;
    core::write_results(&common.out, &res)?;
    log::info!(
        "{}/{} replications succeeded; results in {}",
        res.n_success,
        res.n_reps,
        common.out.display()
    );
    Ok(())
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Param(_) | Error::Json(_) | Error::Parse { .. } => 2,
        Error::ExcessFailures { .. } => 3,
        Error::Normalization(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, run): (&CommonArgs, Box<dyn FnOnce() -> core::Result<()>>) = match &cli.command {
        Command::Simulate(c) => (c, Box::new(move || cmd_simulate(c))),
        Command::Montecarlo(c) => (c, Box::new(move || cmd_montecarlo(c))),
        Command::Estimate { common, data } => {
            (common, Box::new(move || estimate::cmd_estimate(common, data)))
        }
        Command::InvertibilityTest { common, data } => (
            common,
            Box::new(move || estimate::cmd_invertibility(common, data)),
        ),
        Command::SpecSweep { common, data } => (
            common,
            Box::new(move || estimate::cmd_spec_sweep(common, data)),
        ),
    };
    init_threads(common.threads);
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

pub(crate) fn load_instrument(path: &Path) -> core::Result<InstrumentSeries> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "instrument file {} does not exist",
            path.display()
        )));
    }
    InstrumentSeries::load_csv(path)
}

pub(crate) fn load_config_required<T: for<'de> Deserialize<'de>>(path: &Path) -> core::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))
}
