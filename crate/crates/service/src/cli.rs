//! Command-line front end. Every service capability has an offline
//! subcommand; documents are JSON, record streams are one JSON object per
//! line.

use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fbt_core::bayes::GaussianState;
use fbt_core::checkpoint;
use fbt_core::experiments::{
    run_drift_tracking, run_length_sweep, AnalysisConfig, DataSource, DriftConfig,
};
use fbt_core::gateset::{ideal_two_qubit_gateset, NoisyGateSet, TwoQubitGate};
use fbt_core::parse_json;
use fbt_core::postproc::gauge::{gauge_optimize, GaugeOptions};
use fbt_core::postproc::report::{postprocess, snapshot_csv, PostprocessOptions};
use fbt_core::records::{read_records, write_records, ObservationRecord};
use fbt_core::session::{Session, SessionConfig};
use fbt_core::simulator::{simulate, ExperimentPlan, NoiseInjection};
use serde::de::DeserializeOwned;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "fbt", version, about = "Streaming Bayesian gate-set tomography")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Boots a session and writes it as a checkpoint.
    Bootstrap(BootstrapArgs),
    /// Applies records to a checkpointed session; summaries go to stdout.
    Update(UpdateArgs),
    /// Simulates an experiment plan; records go to stdout or `--out`.
    Simulate(SimulateArgs),
    /// Runs an experiment driver.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Gauge-optimizes a gate set against its ideal part.
    GaugeOpt(GaugeOptArgs),
    /// Gauge-optimizes, projects and decomposes a gate set into error
    /// generators.
    Taxonomy(TaxonomyArgs),
    /// Runs the HTTP service.
    Serve(ServeArgs),
    /// Prints the contents of a checkpoint.
    Checkpoint(CheckpointArgs),
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Independent estimates per sequence length.
    LengthSweep(LengthSweepArgs),
    /// Batch-wise warm-booted tracking.
    DriftTrack(DriftTrackArgs),
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// Session config (JSON); blind cold boot of the ideal CZ set if absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "session")]
    pub id: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct UpdateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Records file; stdin if absent.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Where to write the updated session; in place if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Target gate set document; the ideal CZ set if absent.
    #[arg(long)]
    pub gateset: Option<PathBuf>,
    /// Experiment plan (JSON), for simulated data.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Noise injection (JSON), for simulated data.
    #[arg(long)]
    pub injection: Option<PathBuf>,
    /// Measured records; replaces the simulator.
    #[arg(long, conflicts_with_all = ["plan", "injection"])]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LengthSweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Analysis config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
    pub lengths: Vec<usize>,
    /// Coefficient table (CSV); stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full result (JSON).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DriftTrackArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Drift config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint whose posterior feeds a warm first batch.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Infidelity table (CSV); stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full result (JSON).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GaugeOptArgs {
    /// Estimated gate set document.
    #[arg(long)]
    pub gateset: PathBuf,
    /// Gauge options (JSON).
    #[arg(long)]
    pub options: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TaxonomyArgs {
    /// Estimated gate set document.
    #[arg(long)]
    pub gateset: PathBuf,
    /// Post-processing options (JSON).
    #[arg(long)]
    pub options: Option<PathBuf>,
    /// Emit the decomposition table as CSV instead of the JSON snapshot.
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "FBT_BIND", default_value = "127.0.0.1:8080")]
    pub bind: String,
    #[arg(long, default_value = "checkpoints")]
    pub checkpoint_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    pub path: PathBuf,
    /// Print the embedded session report instead of the summary.
    #[arg(long, conflicts_with = "mean")]
    pub report: bool,
    /// Print the posterior-mean gate set document.
    #[arg(long)]
    pub mean: bool,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), |p| read_json(p))
}

fn read_gateset(path: &Path) -> Result<NoisyGateSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    NoisyGateSet::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_records(path: Option<&PathBuf>) -> Result<Vec<ObservationRecord>> {
    Ok(match path {
        Some(p) => {
            let file = fs::File::open(p).with_context(|| format!("reading {}", p.display()))?;
            read_records(BufReader::new(file)).with_context(|| format!("parsing {}", p.display()))?
        }
        None => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text)?;
            read_records(text.as_bytes()).context("parsing stdin")?
        }
    })
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

impl DataArgs {
    fn base(&self) -> Result<NoisyGateSet> {
        Ok(match &self.gateset {
            Some(p) => read_gateset(p)?.ideal(),
            None => ideal_two_qubit_gateset(TwoQubitGate::Cz),
        })
    }

    fn source(&self) -> Result<DataSource> {
        if let Some(p) = &self.records {
            return Ok(DataSource::Records(load_records(Some(p))?));
        }
        let Some(plan) = &self.plan else {
            bail!("give either --records or --plan (with optional --injection)");
        };
        Ok(DataSource::Simulated {
            plan: read_json(plan)?,
            injection: read_json_or_default(self.injection.as_ref())?,
        })
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bootstrap(a) => {
            let config: SessionConfig = read_json_or_default(a.config.as_ref())?;
            let session = Session::create(a.id, config)?;
            session.checkpoint(&a.out)?;
            eprintln!("wrote {}", a.out.display());
        }
        Command::Update(a) => {
            let mut session = Session::restore(&a.checkpoint)?;
            let records = load_records(a.records.as_ref())?;
            let summaries = session.submit(&records)?;
            let out = a.out.as_ref().unwrap_or(&a.checkpoint);
            session.checkpoint(out)?;
            let mut text = String::new();
            for s in &summaries {
                text.push_str(&serde_json::to_string(s)?);
                text.push('\n');
            }
            emit(None, &text)?;
        }
        Command::Simulate(a) => {
            let base = a.data.base()?;
            let Some(plan) = &a.data.plan else {
                bail!("simulate needs --plan");
            };
            let plan: ExperimentPlan = read_json(plan)?;
            let injection: NoiseInjection = read_json_or_default(a.data.injection.as_ref())?;
            let records = simulate(&plan, &injection, &base)?;
            let mut buf = Vec::new();
            write_records(&mut buf, &records)?;
            emit(a.out.as_ref(), std::str::from_utf8(&buf)?)?;
        }
        Command::Experiment(ExperimentCommand::LengthSweep(a)) => {
            let base = a.data.base()?;
            let config: AnalysisConfig = read_json_or_default(a.config.as_ref())?;
            let result = run_length_sweep(&base, &a.data.source()?, &a.lengths, &config)?;
            if let Some(p) = &a.json {
                fs::write(p, pretty(&result)?)?;
            }
            emit(a.out.as_ref(), &result.to_csv())?;
        }
        Command::Experiment(ExperimentCommand::DriftTrack(a)) => {
            let base = a.data.base()?;
            let config: DriftConfig = read_json_or_default(a.config.as_ref())?;
            let initial: Option<GaussianState> = match &a.initial {
                Some(p) => Some(checkpoint::load(p)?.estimator.into_state()),
                None => None,
            };
            let result = run_drift_tracking(&base, &a.data.source()?, &config, initial.as_ref())?;
            if let Some(p) = &a.json {
                fs::write(p, pretty(&result)?)?;
            }
            emit(a.out.as_ref(), &result.to_csv())?;
        }
        Command::GaugeOpt(a) => {
            let gs = read_gateset(&a.gateset)?;
            let options: GaugeOptions = read_json_or_default(a.options.as_ref())?;
            let r = gauge_optimize(&gs, &gs.ideal(), &options)?;
            let doc = json!({
                "objective": r.objective,
                "iterations": r.iterations,
                "reason": r.reason,
                "gauge": r.transform.matrix().row_iter().map(|row| row.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
                "gateset": r.gateset.to_document(),
            });
            emit(a.out.as_ref(), &pretty(&doc)?)?;
        }
        Command::Taxonomy(a) => {
            let gs = read_gateset(&a.gateset)?;
            let options: PostprocessOptions = read_json_or_default(a.options.as_ref())?;
            let snapshot = postprocess(&gs, &gs.ideal(), &options)?;
            let text = if a.csv { snapshot_csv(&snapshot) } else { pretty(&snapshot)? };
            emit(a.out.as_ref(), &text)?;
        }
        Command::Serve(a) => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::app::serve(&a.bind, a.checkpoint_dir))?;
        }
        Command::Checkpoint(a) => {
            if a.report {
                let session = Session::restore(&a.path)?;
                emit(None, &pretty(&session.report())?)?;
                return Ok(());
            }
            let ckpt = checkpoint::load(&a.path)?;
            let est = &ckpt.estimator;
            if a.mean {
                emit(None, &pretty(&est.mean_gateset()?.to_document())?)?;
                return Ok(());
            }
            let state = est.state();
            let doc = json!({
                "schema": checkpoint::CHECKPOINT_SCHEMA,
                "dim": state.dim(),
                "factor_columns": state.factor().ncols(),
                "update_count": state.update_count,
                "covariance_trace": state.covariance_trace(),
                "approx_error_active": state.approx_error_active,
                "provenance": state.provenance,
                "config": est.config(),
                "session": ckpt.extra.get("id"),
            });
            emit(None, &pretty(&doc)?)?;
        }
    }
    Ok(())
}
