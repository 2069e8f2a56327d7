//! End-to-end experiment drivers: independent per-length estimation and
//! batch-wise drift tracking with warm-booted posteriors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{Estimator, EstimatorConfig, GaussianState};
use crate::bootstrap::{bootstrap, full_warm_boot, BootstrapConfig};
use crate::checkpoint;
use crate::error::{FbtError, Result};
use crate::gateset::NoisyGateSet;
use crate::linearize::{with_residual, Owner, ResidualRegistry};
use crate::postproc::gauge::gauge_optimize;
use crate::postproc::report::{postprocess, PostprocessOptions, Snapshot};
use crate::postproc::taxonomy::{infidelity_report, Contribution, GeneratorClass};
use crate::pauli::Ptm;
use crate::records::ObservationRecord;
use crate::simulator::{simulate, ExperimentPlan, NoiseInjection, PlanKind};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Simulated { plan: ExperimentPlan, injection: NoiseInjection },
    Records(Vec<ObservationRecord>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub bootstrap: BootstrapConfig,
    pub estimator: EstimatorConfig,
    pub postprocess: PostprocessOptions,
    /// Posterior draws for credible intervals.
    pub ci_draws: usize,
    /// Central credible mass, 0.997 gives the 0.0015 and 0.9985 quantiles.
    pub ci_level: f64,
    pub seed: u64,
    /// Runs with fewer records are flagged.
    pub min_records: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            bootstrap: BootstrapConfig::default(),
            estimator: EstimatorConfig::default(),
            postprocess: PostprocessOptions::default(),
            ci_draws: 1000,
            ci_level: 0.997,
            seed: 0,
            min_records: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    /// Draws whose decomposition succeeded.
    pub draws: usize,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn interval(mut values: Vec<f64>, level: f64) -> Interval {
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let n = values.len();
    Interval {
        mean: values.iter().sum::<f64>() / n.max(1) as f64,
        low: quantile(&values, tail),
        high: quantile(&values, 1.0 - tail),
        draws: n,
    }
}

/// Channel name (gate label, `E` or `rho`) and generator label such as
/// `H_IZ`, or `eps_ent` / `eps_j` for the channel's entanglement infidelity
/// and total stochastic rate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoefficientKey {
    pub channel: String,
    pub generator: String,
}

impl CoefficientKey {
    pub fn new(channel: &str, generator: &str) -> Self {
        CoefficientKey {
            channel: channel.into(),
            generator: generator.into(),
        }
    }
}

fn channel_noise(gs: &NoisyGateSet, channel: &str) -> Result<Ptm> {
    match channel {
        "E" => Ok(gs.effect_noise().clone()),
        "rho" => Ok(gs.prep_noise().clone()),
        label => Ok(gs.gate(&label.into())?.noise.clone()),
    }
}

fn key_channels(keys: &[CoefficientKey]) -> Vec<&str> {
    let mut channels: Vec<&str> = keys.iter().map(|k| k.channel.as_str()).collect();
    channels.sort_unstable();
    channels.dedup();
    channels
}

/// Gauge-optimizes the gate set at residual `x` and reads the keyed
/// coefficients from the unprojected noise channels. `None` when gauge
/// optimization or a logarithm fails.
fn coefficient_values(
    base: &NoisyGateSet,
    state: &GaussianState,
    x: &DVector<f64>,
    keys: &[CoefficientKey],
    options: &PostprocessOptions,
) -> Result<Option<Vec<f64>>> {
    let gs = with_residual(base, state.registry(), x)?;
    let gauged = match gauge_optimize(&gs, &base.ideal(), &options.gauge) {
        Ok(g) => g.gateset,
        Err(_) => return Ok(None),
    };
    let mut reports = BTreeMap::new();
    for c in key_channels(keys) {
        match infidelity_report(&channel_noise(&gauged, c)?) {
            Ok(r) => reports.insert(c, r),
            Err(_) => return Ok(None),
        };
    }
    let mut values = Vec::with_capacity(keys.len());
    for key in keys {
        let r = &reports[key.channel.as_str()];
        let v = if key.generator == "eps_ent" {
            r.eps_ent
        } else if key.generator == "eps_j" {
            r.eps_j
        } else {
            let label = key.generator.parse()?;
            r.decomposition
                .iter()
                .find(|c| c.label == label)
                .map(|c| c.value)
                .ok_or_else(|| FbtError::InvalidConfig(format!("unknown generator `{}`", key.generator)))?
        };
        values.push(v);
    }
    Ok(Some(values))
}

/// Keyed coefficients of the posterior mean through the same pipeline as
/// [`posterior_intervals`]; NaN when the pipeline fails.
pub fn point_values(
    base: &NoisyGateSet,
    state: &GaussianState,
    keys: &[CoefficientKey],
    options: &PostprocessOptions,
) -> Result<Vec<f64>> {
    Ok(coefficient_values(base, state, state.mean(), keys, options)?
        .unwrap_or_else(|| vec![f64::NAN; keys.len()]))
}

/// Credible intervals for generator coefficients and for `eps_ent` (key
/// generator `eps_ent`), from posterior draws pushed through gauge
/// optimization and decomposition. Draws are not CPTP-projected: on a wide
/// posterior the projection of each draw adds infidelity that the mean does
/// not have. Draw `k` uses RNG stream `k` of `seed`.
pub fn posterior_intervals(
    base: &NoisyGateSet,
    state: &GaussianState,
    keys: &[CoefficientKey],
    options: &PostprocessOptions,
    draws: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<Interval>> {
    if draws < 2 {
        return Err(FbtError::InvalidConfig("credible intervals need >= 2 draws".into()));
    }
    let per_draw: Vec<Option<Vec<f64>>> = (0..draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let x = state.sample(&mut rng);
            coefficient_values(base, state, &x, keys, options)
        })
        .collect::<Result<_>>()?;
    let ok: Vec<Vec<f64>> = per_draw.into_iter().flatten().collect();
    if ok.len() < draws / 2 {
        tracing::warn!(succeeded = ok.len(), draws, "most posterior draws failed to decompose");
    }
    Ok((0..keys.len())
        .map(|i| interval(ok.iter().map(|v| v[i]).collect(), level))
        .collect())
}

/// Bootstraps, applies all records and returns the estimator.
pub fn estimate(
    base: &NoisyGateSet,
    records: &[ObservationRecord],
    bootstrap_config: &BootstrapConfig,
    previous: Option<&GaussianState>,
    estimator: EstimatorConfig,
) -> Result<Estimator> {
    let state = bootstrap(base, bootstrap_config, previous)?;
    let mut est = Estimator::new(base, state, estimator)?;
    est.update_all(records)?;
    Ok(est)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub gate: String,
    pub coefficient: String,
    pub length: usize,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRun {
    pub length: usize,
    pub n_records: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flagged: Option<String>,
    pub snapshot: Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthSweepResult {
    pub runs: Vec<LengthRun>,
    pub table: Vec<CoefficientRow>,
}

impl LengthSweepResult {
    /// Rows for one coefficient, ordered by length.
    pub fn series(&self, gate: &str, coefficient: &str) -> Vec<&CoefficientRow> {
        let mut rows: Vec<_> = self
            .table
            .iter()
            .filter(|r| r.gate == gate && r.coefficient == coefficient)
            .collect();
        rows.sort_by_key(|r| r.length);
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gate,coefficient,L,value,ci_low,ci_high\n");
        for r in &self.table {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e}\n",
                r.gate, r.coefficient, r.length, r.value, r.ci_low, r.ci_high
            ));
        }
        out
    }
}

fn session_seed(seed: u64, key: u64) -> u64 {
    seed ^ key.wrapping_add(1).wrapping_mul(GOLDEN)
}

/// Hamiltonian and stochastic coefficients of every gate.
fn sweep_keys(base: &NoisyGateSet) -> Vec<CoefficientKey> {
    let frame = crate::postproc::taxonomy::GeneratorFrame::get(base.n_qubits());
    let mut keys = Vec::new();
    for g in base.gates() {
        for l in frame.labels() {
            if matches!(l.class, GeneratorClass::H | GeneratorClass::S) {
                keys.push(CoefficientKey::new(g.label.as_str(), &l.to_string()));
            }
        }
        keys.push(CoefficientKey::new(g.label.as_str(), "eps_ent"));
    }
    keys
}

fn run_length(
    base: &NoisyGateSet,
    length: usize,
    records: &[ObservationRecord],
    config: &AnalysisConfig,
) -> Result<(LengthRun, Vec<CoefficientRow>)> {
    let seed = session_seed(config.seed, length as u64);
    let estimator_config = EstimatorConfig {
        seed,
        ..config.estimator.clone()
    };
    let est = estimate(base, records, &config.bootstrap, None, estimator_config)?;
    let mean = est.mean_gateset()?;
    let snapshot = postprocess(&mean, &base.ideal(), &config.postprocess)?;
    let flagged = (records.len() < config.min_records).then(|| {
        format!(
            "only {} records at length {length}; fewer than {} needed for convergence diagnostics",
            records.len(),
            config.min_records
        )
    });
    if let Some(f) = &flagged {
        tracing::warn!("{f}");
    }
    let keys = sweep_keys(base);
    let intervals = posterior_intervals(
        base,
        est.state(),
        &keys,
        &config.postprocess,
        config.ci_draws,
        config.ci_level,
        seed,
    )?;
    let values = point_values(base, est.state(), &keys, &config.postprocess)?;
    let rows = keys
        .iter()
        .zip(intervals)
        .zip(values)
        .map(|((k, iv), value)| {
            CoefficientRow {
                gate: k.channel.clone(),
                coefficient: k.generator.clone(),
                length,
                value,
                ci_low: iv.low,
                ci_high: iv.high,
            }
        })
        .collect();
    Ok((
        LengthRun {
            length,
            n_records: records.len(),
            flagged,
            snapshot,
        },
        rows,
    ))
}

/// One independent estimation per sequence length. Sessions share nothing,
/// and each is seeded from the analysis seed and its length, so the order
/// of `lengths` does not affect any result. Simulated sources are run
/// shortest length first.
pub fn run_length_sweep(
    base: &NoisyGateSet,
    source: &DataSource,
    lengths: &[usize],
    config: &AnalysisConfig,
) -> Result<LengthSweepResult> {
    if lengths.is_empty() {
        return Err(FbtError::InvalidConfig("length sweep needs at least one length".into()));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let records = match source {
        DataSource::Simulated { plan, injection } => {
            let plan = ExperimentPlan {
                kind: PlanKind::LengthSweep,
                lengths: sorted.clone(),
                ..plan.clone()
            };
            simulate(&plan, injection, base)?
        }
        DataSource::Records(r) => r.clone(),
    };
    let mut by_length: BTreeMap<usize, Vec<ObservationRecord>> = BTreeMap::new();
    for r in records {
        by_length.entry(r.sequence.len()).or_default().push(r);
    }
    let empty = Vec::new();
    let results: Vec<(LengthRun, Vec<CoefficientRow>)> = sorted
        .par_iter()
        .map(|&l| run_length(base, l, by_length.get(&l).unwrap_or(&empty), config))
        .collect::<Result<_>>()?;
    let mut runs = Vec::new();
    let mut table = Vec::new();
    for (run, rows) in results {
        runs.push(run);
        table.extend(rows);
    }
    Ok(LengthSweepResult { runs, table })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub analysis: AnalysisConfig,
    /// Covariance inflation applied at each warm boot; 1 keeps the previous
    /// posterior unchanged.
    pub inflation: f64,
    /// Variance added to every free parameter of the drifting channels at
    /// each warm boot; models the drift between consecutive batches.
    pub process_noise: f64,
    /// Channels (gate labels, `E`, `rho`) that receive process noise; empty
    /// means all.
    pub drifting: Vec<String>,
    /// Coefficients reported with credible intervals for every batch.
    pub tracked: Vec<CoefficientKey>,
    /// Where per-batch checkpoints are written, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            analysis: AnalysisConfig {
                ci_draws: 100,
                ..AnalysisConfig::default()
            },
            inflation: 1.0,
            process_noise: 0.0,
            drifting: Vec::new(),
            tracked: Vec::new(),
            checkpoint_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchChannel {
    pub channel: String,
    pub eps_ent: f64,
    pub top: Vec<Contribution>,
    pub negative: Vec<Contribution>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedValue {
    pub key: CoefficientKey,
    pub value: f64,
    pub interval: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub batch: u64,
    pub lab_time: f64,
    pub n_records: usize,
    pub covariance_trace: f64,
    pub channels: Vec<BatchChannel>,
    pub tracked: Vec<TrackedValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftTrackResult {
    pub batches: Vec<BatchResult>,
}

impl DriftTrackResult {
    /// Per-batch values of a tracked coefficient.
    pub fn series(&self, key: &CoefficientKey) -> Vec<&TrackedValue> {
        self.batches
            .iter()
            .filter_map(|b| b.tracked.iter().find(|t| &t.key == key))
            .collect()
    }

    /// `(batch, lab_time, gate, eps_ent, generator, contribution)` rows,
    /// negative contributions included.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("batch,lab_time,gate,eps_ent,generator,contribution\n");
        for b in &self.batches {
            for c in &b.channels {
                for k in c.top.iter().chain(&c.negative) {
                    out.push_str(&format!(
                        "{},{},{},{:e},{},{:e}\n",
                        b.batch, b.lab_time, c.channel, c.eps_ent, k.label, k.value
                    ));
                }
            }
        }
        out
    }
}

/// Splits records into consecutive batches, rejecting out-of-order ids.
pub fn split_batches(records: &[ObservationRecord]) -> Result<Vec<(u64, Vec<ObservationRecord>)>> {
    let mut out: Vec<(u64, Vec<ObservationRecord>)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let b = r
            .batch
            .ok_or_else(|| FbtError::InvalidConfig(format!("record {i} has no batch id")))?;
        match out.last_mut() {
            Some((last, v)) if *last == b => v.push(r.clone()),
            Some((last, _)) if *last > b => {
                return Err(FbtError::OutOfOrder(format!(
                    "record {i} belongs to batch {b} after batch {last}"
                )))
            }
            _ => out.push((b, vec![r.clone()])),
        }
    }
    Ok(out)
}

fn process_noise(base: &NoisyGateSet, config: &DriftConfig) -> Result<DVector<f64>> {
    let registry = ResidualRegistry::for_gateset(base);
    let names: Vec<String> = registry.entries().iter().map(|e| owner_channel(&e.owner)).collect();
    if let Some(bad) = config.drifting.iter().find(|d| !names.contains(d)) {
        return Err(FbtError::InvalidConfig(format!("unknown drifting channel `{bad}`")));
    }
    let mut q = DVector::zeros(registry.len());
    for (e, name) in registry.entries().iter().zip(&names) {
        if config.drifting.is_empty() || config.drifting.contains(name) {
            q.rows_mut(e.offset, e.len).fill(config.process_noise);
        }
    }
    Ok(q)
}

fn owner_channel(owner: &Owner) -> String {
    match owner {
        Owner::Gate(g) => g.to_string(),
        Owner::Effect => "E".into(),
        Owner::Prep => "rho".into(),
    }
}

/// Batch-wise tracking: the first batch is booted per the analysis
/// config, with `initial` feeding the warm strategies, each later batch
/// from the previous posterior (full warm boot).
pub fn run_drift_tracking(
    base: &NoisyGateSet,
    source: &DataSource,
    config: &DriftConfig,
    initial: Option<&GaussianState>,
) -> Result<DriftTrackResult> {
    if !(config.inflation >= 1.0) {
        return Err(FbtError::InvalidConfig(format!(
            "inflation must be at least 1, got {}",
            config.inflation
        )));
    }
    let records = match source {
        DataSource::Simulated { plan, injection } => {
            let plan = ExperimentPlan {
                kind: PlanKind::DriftTracking,
                ..plan.clone()
            };
            simulate(&plan, injection, base)?
        }
        DataSource::Records(r) => r.clone(),
    };
    let batches = split_batches(&records)?;
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let analysis = &config.analysis;
    let target = base.ideal();
    let mut previous: Option<GaussianState> = None;
    let mut out = Vec::with_capacity(batches.len());
    for (b, batch) in &batches {
        let mut state = match &previous {
            None => bootstrap(base, &analysis.bootstrap, initial)?,
            Some(prev) => full_warm_boot(base, prev)?,
        };
        if previous.is_some() {
            if config.inflation > 1.0 {
                state.inflate(config.inflation)?;
            }
            if config.process_noise > 0.0 {
                state.add_process_noise(&process_noise(base, config)?)?;
            }
        }
        let estimator_config = EstimatorConfig {
            seed: session_seed(analysis.seed, *b),
            ..analysis.estimator.clone()
        };
        let mut est = Estimator::new(base, state, estimator_config)?;
        est.update_all(batch)?;
        let snapshot = postprocess(&est.mean_gateset()?, &target, &analysis.postprocess)?;
        let channels = snapshot
            .channels
            .iter()
            .map(|c| BatchChannel {
                channel: c.channel.clone(),
                eps_ent: c.eps_ent,
                top: c.top.clone(),
                negative: c.negative.clone(),
            })
            .collect();
        let tracked = if config.tracked.is_empty() {
            Vec::new()
        } else {
            let intervals = posterior_intervals(
                base,
                est.state(),
                &config.tracked,
                &analysis.postprocess,
                analysis.ci_draws,
                analysis.ci_level,
                session_seed(analysis.seed, *b),
            )?;
            let values = point_values(base, est.state(), &config.tracked, &analysis.postprocess)?;
            config
                .tracked
                .iter()
                .zip(intervals)
                .zip(values)
                .map(|((k, interval), value)| {
                    TrackedValue {
                        key: k.clone(),
                        value,
                        interval,
                    }
                })
                .collect()
        };
        let checkpoint = match &config.checkpoint_dir {
            Some(dir) => {
                let path = dir.join(format!("batch-{b:05}.ckpt"));
                checkpoint::save(&path, &est, serde_json::json!({ "batch": b }))?;
                Some(path.display().to_string())
            }
            None => None,
        };
        let lab_time = batch.iter().map(|r| r.t).sum::<f64>() / batch.len() as f64;
        tracing::info!(batch = b, lab_time, records = batch.len(), "batch analyzed");
        out.push(BatchResult {
            batch: *b,
            lab_time,
            n_records: batch.len(),
            covariance_trace: est.state().covariance_trace(),
            channels,
            tracked,
            checkpoint,
        });
        previous = Some(est.into_state());
    }
    Ok(DriftTrackResult { batches: out })
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return f64::NAN;
    }
    let x = DVector::from_column_slice(&a[..n]);
    let y = DVector::from_column_slice(&b[..n]);
    let xm = x.add_scalar(-x.mean());
    let ym = y.add_scalar(-y.mean());
    xm.dot(&ym) / (xm.norm() * ym.norm())
}
