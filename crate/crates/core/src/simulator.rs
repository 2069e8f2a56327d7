//! Synthetic noisy two-qubit device.
//!
//! Noise is injected as error generators (see [`crate::postproc::taxonomy`])
//! with three kinds of terms: static coefficients, drift coefficients that
//! are functions of lab time, and length-dependent coefficients that grow
//! with the pulse count inside a sequence. Each gate application gets its
//! own channel `G·Λ_gs·exp(L(t, k))`.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FbtError, Result};
use crate::gateset::{GateLabel, GateSequence, NoisyGateSet};
use crate::linalg::expm;
use crate::parity::{ProjectedRecord, ProjectionOutcome, ProjectionSpec};
use crate::pauli::{ptm_to_choi, Ptm};
use crate::postproc::cptp::cptp_project;
use crate::postproc::taxonomy::{GeneratorFrame, GeneratorLabel};
use crate::records::ObservationRecord;

/// Corrections above this are logged.
pub const CPTP_LOG_THRESHOLD: f64 = 1e-10;
/// Corrections above this are rejected.
pub const CPTP_REJECT_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticTerm {
    /// Gate label, `E` or `rho`.
    pub target: String,
    /// Generator label such as `H_IX` or `S_ZI`.
    pub generator: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftFunction {
    Linear {
        #[serde(default)]
        offset: f64,
        /// Per second.
        slope: f64,
    },
    Sinusoidal {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Gaussian steps of `step_sd` every `interval` seconds.
    RandomWalk {
        step_sd: f64,
        interval: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl DriftFunction {
    fn evaluate(&self, t: f64, fallback_seed: u64) -> f64 {
        match *self {
            DriftFunction::Linear { offset, slope } => offset + slope * t,
            DriftFunction::Sinusoidal {
                offset,
                amplitude,
                period,
                phase,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * t / period + phase).sin(),
            DriftFunction::RandomWalk {
                step_sd,
                interval,
                seed,
            } => {
                let steps = (t / interval).floor().max(0.0) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(fallback_seed));
                let normal = Normal::new(0.0, step_sd).expect("finite step size");
                (0..steps).map(|_| normal.sample(&mut rng)).sum()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftTerm {
    pub target: String,
    pub generator: String,
    pub function: DriftFunction,
}

/// Coefficient `per_pulse · k` at pulse index `k` (0 for the first gate of
/// a sequence), or `saturation · (1 − exp(−per_pulse · k / saturation))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthTerm {
    pub target: String,
    pub generator: String,
    pub per_pulse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
}

impl LengthTerm {
    fn evaluate(&self, k: usize) -> f64 {
        let linear = self.per_pulse * k as f64;
        match self.saturation {
            Some(s) if s != 0.0 => s * (1.0 - (-linear / s).exp()),
            _ => linear,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseInjection {
    pub seed: u64,
    #[serde(rename = "static")]
    pub static_terms: Vec<StaticTerm>,
    pub drift: Vec<DriftTerm>,
    pub length_dependent: Vec<LengthTerm>,
}

impl NoiseInjection {
    pub fn with_static(mut self, target: &str, generator: &str, value: f64) -> Self {
        self.static_terms.push(StaticTerm {
            target: target.into(),
            generator: generator.into(),
            value,
        });
        self
    }

    pub fn with_drift(mut self, target: &str, generator: &str, function: DriftFunction) -> Self {
        self.drift.push(DriftTerm {
            target: target.into(),
            generator: generator.into(),
            function,
        });
        self
    }

    pub fn with_length_dependent(mut self, target: &str, generator: &str, per_pulse: f64) -> Self {
        self.length_dependent.push(LengthTerm {
            target: target.into(),
            generator: generator.into(),
            per_pulse,
            saturation: None,
        });
        self
    }

    /// The gate set with only the static terms applied, as the reference
    /// "true" gate set for plant-and-recover checks.
    pub fn static_gateset(&self, gs: &NoisyGateSet) -> Result<NoisyGateSet> {
        let compiled = CompiledInjection::new(self, gs)?;
        let n_gates = gs.gates().len();
        let mut gate_noise = Vec::with_capacity(n_gates);
        for i in 0..n_gates {
            let inj = compiled.channel(i, None, 0)?;
            gate_noise.push(Ptm::new(gs.gates()[i].noise.matrix() * inj)?);
        }
        let effect = Ptm::new(compiled.channel(n_gates, None, 0)? * gs.effect_noise().matrix())?;
        let prep = Ptm::new(compiled.channel(n_gates + 1, None, 0)? * gs.prep_noise().matrix())?;
        gs.with_noise(gate_noise, effect, prep)
    }
}

struct TargetTerms {
    static_generator: DMatrix<f64>,
    drift: Vec<(DMatrix<f64>, DriftFunction, u64)>,
    length: Vec<(DMatrix<f64>, LengthTerm)>,
}

/// Injection resolved against a gate set. Targets are indexed like the
/// residual registry: gates, then `E`, then `rho`.
struct CompiledInjection {
    n_qubits: usize,
    targets: Vec<TargetTerms>,
}

fn resolve_target(gs: &NoisyGateSet, target: &str) -> Result<usize> {
    let n = gs.gates().len();
    match target {
        "E" => Ok(n),
        "rho" => Ok(n + 1),
        label => gs.gate_index(&GateLabel::new(label)),
    }
}

fn generator_matrix(n_qubits: usize, label: &str) -> Result<DMatrix<f64>> {
    let frame = GeneratorFrame::get(n_qubits);
    let parsed = GeneratorLabel::from_str(label)?;
    let k = frame
        .index_of_label(&parsed)
        .ok_or_else(|| FbtError::InvalidConfig(format!("unknown generator `{label}`")))?;
    Ok(frame.generator(k).clone())
}

impl CompiledInjection {
    fn new(inj: &NoiseInjection, gs: &NoisyGateSet) -> Result<Self> {
        let n_qubits = gs.n_qubits();
        let dim = gs.superop_dim();
        let mut targets: Vec<TargetTerms> = (0..gs.gates().len() + 2)
            .map(|_| TargetTerms {
                static_generator: DMatrix::zeros(dim, dim),
                drift: Vec::new(),
                length: Vec::new(),
            })
            .collect();
        for term in &inj.static_terms {
            let i = resolve_target(gs, &term.target)?;
            targets[i].static_generator += generator_matrix(n_qubits, &term.generator)? * term.value;
        }
        for (k, term) in inj.drift.iter().enumerate() {
            let i = resolve_target(gs, &term.target)?;
            let seed = inj.seed.wrapping_add(k as u64);
            targets[i]
                .drift
                .push((generator_matrix(n_qubits, &term.generator)?, term.function.clone(), seed));
        }
        for term in &inj.length_dependent {
            let i = resolve_target(gs, &term.target)?;
            if i >= gs.gates().len() {
                return Err(FbtError::InvalidConfig(
                    "length-dependent terms apply to gates only".into(),
                ));
            }
            targets[i]
                .length
                .push((generator_matrix(n_qubits, &term.generator)?, term.clone()));
        }
        Ok(CompiledInjection { n_qubits, targets })
    }

    fn has_drift(&self) -> bool {
        self.targets.iter().any(|t| !t.drift.is_empty())
    }

    fn has_length(&self, target: usize) -> bool {
        !self.targets[target].length.is_empty()
    }

    /// Injected channel for `target` at lab time `t` (drift ignored when
    /// `None`) and pulse index `k`.
    fn channel(&self, target: usize, t: Option<f64>, k: usize) -> Result<DMatrix<f64>> {
        let terms = &self.targets[target];
        let mut l = terms.static_generator.clone();
        if let Some(t) = t {
            for (g, f, seed) in &terms.drift {
                l += g * f.evaluate(t, *seed);
            }
        }
        for (g, term) in &terms.length {
            l += g * term.evaluate(k);
        }
        if l.iter().all(|&v| v == 0.0) {
            let n = l.nrows();
            return Ok(DMatrix::identity(n, n));
        }
        let mut m = expm(&l);
        // generators have a zero first row, so the exact exponential is TP
        let n = m.nrows();
        m[(0, 0)] = 1.0;
        for j in 1..n {
            m[(0, j)] = 0.0;
        }
        let ptm = Ptm::new(m)?;
        debug_assert_eq!(ptm.n_qubits(), self.n_qubits);
        if ptm_to_choi(&ptm).min_eigenvalue() >= -CPTP_LOG_THRESHOLD {
            return Ok(ptm.into_matrix());
        }
        let projected = cptp_project(&ptm);
        if projected.correction_norm > CPTP_REJECT_THRESHOLD {
            return Err(FbtError::NotCptp(projected.correction_norm));
        }
        tracing::debug!(correction = projected.correction_norm, target, "injected channel projected to CPTP");
        Ok(projected.ptm.into_matrix())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    LengthSweep,
    DriftTracking,
    Generic,
}

/// Per-shot duration: `gate_seconds · L + readout_seconds`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DurationModel {
    pub gate_seconds: f64,
    pub readout_seconds: f64,
}

impl Default for DurationModel {
    fn default() -> Self {
        DurationModel {
            gate_seconds: 1e-5,
            readout_seconds: 3e-3,
        }
    }
}

impl DurationModel {
    fn shot(&self, len: usize) -> f64 {
        self.gate_seconds * len as f64 + self.readout_seconds
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub kind: PlanKind,
    pub lengths: Vec<usize>,
    /// Sequences per length (length sweep) or in total (generic).
    pub n_sequences: usize,
    pub shots: u32,
    pub batch_size: usize,
    pub n_batches: usize,
    pub batch_window_seconds: f64,
    pub rasterized: bool,
    pub seed: u64,
    pub duration: DurationModel,
    /// Effect to record; `None` is the native measurement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effect: Option<String>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            kind: PlanKind::Generic,
            lengths: vec![8, 16, 32, 64, 128],
            n_sequences: 5000,
            shots: 100,
            batch_size: 80,
            n_batches: 500,
            batch_window_seconds: 32.4,
            rasterized: true,
            seed: 0,
            duration: DurationModel::default(),
            effect: None,
        }
    }
}

/// A contiguous run of sequences scheduled together.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub index: usize,
    pub batch: Option<u64>,
    pub start_time: f64,
    /// Total duration; for batch plans this is the batch window.
    pub duration: Option<f64>,
    pub sequences: Vec<GateSequence>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleEntry {
    pub sequence_index: usize,
    pub shot_index: u32,
    pub lab_time: f64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// `count` sequences of `length` labels drawn uniformly and independently.
pub fn generate_random_sequences(
    labels: &[GateLabel],
    length: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<GateSequence>> {
    if labels.is_empty() {
        return Err(FbtError::InvalidConfig("no gate labels to draw from".into()));
    }
    if count == 0 {
        return Err(FbtError::InvalidConfig("sequence count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            GateSequence::new(
                (0..length)
                    .map(|_| labels[rng.random_range(0..labels.len())].clone())
                    .collect(),
            )
        })
        .collect())
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() {
            return Err(FbtError::InvalidConfig("plan needs at least one length".into()));
        }
        if self.shots == 0 {
            return Err(FbtError::InvalidConfig("shots must be at least 1".into()));
        }
        let count = match self.kind {
            PlanKind::DriftTracking => self.batch_size.min(self.n_batches),
            _ => self.n_sequences,
        };
        if count == 0 {
            return Err(FbtError::InvalidConfig("plan schedules no sequences".into()));
        }
        if self.kind == PlanKind::DriftTracking && !(self.batch_window_seconds > 0.0) {
            return Err(FbtError::InvalidConfig("batch window must be positive".into()));
        }
        Ok(())
    }

    fn mixed_lengths(&self, labels: &[GateLabel], count: usize, seed: u64) -> Result<Vec<GateSequence>> {
        let mut out = Vec::with_capacity(count);
        for (k, &len) in self.lengths.iter().enumerate() {
            // sequence i gets lengths[i mod n]
            let n = (count + self.lengths.len() - 1 - k) / self.lengths.len();
            if n > 0 {
                out.push(generate_random_sequences(labels, len, n, seed ^ (k as u64).wrapping_mul(GOLDEN))?);
            }
        }
        let mut iters: Vec<_> = out.into_iter().map(|v| v.into_iter()).collect();
        let mut seqs = Vec::with_capacity(count);
        for i in 0..count {
            let k = i % self.lengths.len();
            seqs.push(iters[k].next().expect("per-length counts cover the total"));
        }
        Ok(seqs)
    }

    /// Deterministic corpus for this plan, split into scheduling blocks.
    pub fn blocks(&self, labels: &[GateLabel]) -> Result<Vec<Block>> {
        self.validate()?;
        let mut blocks = Vec::new();
        match self.kind {
            PlanKind::LengthSweep => {
                let mut start = 0.0;
                for (index, &len) in self.lengths.iter().enumerate() {
                    let seed = self.seed.wrapping_add((len as u64).wrapping_mul(GOLDEN));
                    let sequences = generate_random_sequences(labels, len, self.n_sequences, seed)?;
                    let duration = self.duration.shot(len) * self.n_sequences as f64 * self.shots as f64;
                    blocks.push(Block {
                        index,
                        batch: None,
                        start_time: start,
                        duration: None,
                        sequences,
                    });
                    start += duration;
                }
            }
            PlanKind::DriftTracking => {
                for b in 0..self.n_batches {
                    let seed = self.seed.wrapping_add((b as u64 + 1).wrapping_mul(GOLDEN));
                    blocks.push(Block {
                        index: b,
                        batch: Some(b as u64),
                        start_time: b as f64 * self.batch_window_seconds,
                        duration: Some(self.batch_window_seconds),
                        sequences: self.mixed_lengths(labels, self.batch_size, seed)?,
                    });
                }
            }
            PlanKind::Generic => blocks.push(Block {
                index: 0,
                batch: None,
                start_time: 0.0,
                duration: None,
                sequences: self.mixed_lengths(labels, self.n_sequences, self.seed)?,
            }),
        }
        Ok(blocks)
    }
}

/// Execution order and start time of every shot in a block. Rasterized
/// plans loop over all sequences once per shot.
pub fn rasterize(plan: &ExperimentPlan, block: &Block) -> Vec<ScheduleEntry> {
    let n = block.sequences.len();
    let mut order = Vec::with_capacity(n * plan.shots as usize);
    if plan.rasterized {
        for shot in 0..plan.shots {
            for s in 0..n {
                order.push((s, shot));
            }
        }
    } else {
        for s in 0..n {
            for shot in 0..plan.shots {
                order.push((s, shot));
            }
        }
    }
    let raw: f64 = block
        .sequences
        .iter()
        .map(|s| plan.duration.shot(s.len()))
        .sum::<f64>()
        * plan.shots as f64;
    let scale = match block.duration {
        Some(d) if raw > 0.0 => d / raw,
        _ => 1.0,
    };
    let mut t = block.start_time;
    order
        .into_iter()
        .map(|(s, shot)| {
            let entry = ScheduleEntry {
                sequence_index: s,
                shot_index: shot,
                lab_time: t,
            };
            t += scale * plan.duration.shot(block.sequences[s].len());
            entry
        })
        .collect()
}

fn block_span(plan: &ExperimentPlan, block: &Block) -> f64 {
    block.duration.unwrap_or_else(|| {
        block
            .sequences
            .iter()
            .map(|s| plan.duration.shot(s.len()))
            .sum::<f64>()
            * plan.shots as f64
    })
}

/// Channels for one drift time slot: per target, per pulse index.
struct SlotChannels {
    gates: Vec<Vec<DMatrix<f64>>>,
    effect: DVector<f64>,
    prep: DVector<f64>,
}

struct Device<'a> {
    gs: &'a NoisyGateSet,
    compiled: CompiledInjection,
    max_len: usize,
}

impl<'a> Device<'a> {
    fn slot(&self, t: Option<f64>, effect: Option<&str>) -> Result<SlotChannels> {
        let n_gates = self.gs.gates().len();
        let mut gates = Vec::with_capacity(n_gates);
        for i in 0..n_gates {
            let pulses = if self.compiled.has_length(i) { self.max_len.max(1) } else { 1 };
            let mut per_k = Vec::with_capacity(pulses);
            for k in 0..pulses {
                per_k.push(self.gs.noisy_gate(i) * self.compiled.channel(i, t, k)?);
            }
            gates.push(per_k);
        }
        let effect_channel = self.compiled.channel(n_gates, t, 0)?;
        let prep_channel = self.compiled.channel(n_gates + 1, t, 0)?;
        Ok(SlotChannels {
            gates,
            effect: effect_channel.tr_mul(&self.gs.measured_effect(effect)?),
            prep: prep_channel * self.gs.prepared_state(),
        })
    }
}

fn probability(slot: &SlotChannels, seq: &[usize]) -> f64 {
    let mut state = slot.prep.clone();
    for (k, &g) in seq.iter().enumerate() {
        let per_k = &slot.gates[g];
        let m = &per_k[k.min(per_k.len() - 1)];
        state = m * state;
    }
    slot.effect.dot(&state).clamp(0.0, 1.0)
}

struct BlockOutcome {
    hits: Vec<u32>,
    mean_time: Vec<f64>,
}

/// Simulates one block. Drift is evaluated once per time slot; a slot is one
/// raster pass (block span / shots).
fn run_block(
    plan: &ExperimentPlan,
    device: &Device<'_>,
    block: &Block,
    sequences: &[GateSequence],
    effect: Option<&str>,
    stream_offset: u64,
) -> Result<BlockOutcome> {
    let schedule = rasterize(plan, block);
    let n = sequences.len();
    let span = block_span(plan, block);
    let n_slots = if device.compiled.has_drift() { plan.shots as usize } else { 1 };
    let slot_len = span / n_slots as f64;
    let slots: Vec<SlotChannels> = (0..n_slots)
        .map(|q| {
            let t = device
                .compiled
                .has_drift()
                .then(|| block.start_time + (q as f64 + 0.5) * slot_len);
            device.slot(t, effect)
        })
        .collect::<Result<_>>()?;
    let resolved: Vec<Vec<usize>> = sequences
        .iter()
        .map(|s| device.gs.resolve(s))
        .collect::<Result<_>>()?;
    // per sequence: (slot, lab time) of each shot in shot order
    let mut shots: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(plan.shots as usize); n];
    for e in &schedule {
        let q = (((e.lab_time - block.start_time) / slot_len).floor().max(0.0) as usize).min(n_slots - 1);
        shots[e.sequence_index].push((q, e.lab_time));
    }
    let results: Vec<(u32, f64)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream(stream_offset + s as u64);
            let mut cache: Vec<Option<f64>> = vec![None; n_slots];
            let mut hits = 0u32;
            let mut time = 0.0;
            for &(q, t) in &shots[s] {
                let p = *cache[q].get_or_insert_with(|| probability(&slots[q], &resolved[s]));
                if rng.random::<f64>() < p {
                    hits += 1;
                }
                time += t;
            }
            (hits, time / shots[s].len().max(1) as f64)
        })
        .collect();
    Ok(BlockOutcome {
        hits: results.iter().map(|r| r.0).collect(),
        mean_time: results.iter().map(|r| r.1).collect(),
    })
}

fn device<'a>(plan: &ExperimentPlan, injection: &NoiseInjection, gs: &'a NoisyGateSet, blocks: &[Block]) -> Result<Device<'a>> {
    let compiled = CompiledInjection::new(injection, gs)?;
    let max_len = blocks
        .iter()
        .flat_map(|b| b.sequences.iter().map(|s| s.len()))
        .max()
        .unwrap_or(0)
        .max(plan.lengths.iter().copied().max().unwrap_or(0));
    Ok(Device { gs, compiled, max_len })
}

fn stream_offset(block: &Block, projection: usize) -> u64 {
    ((block.index as u64) << 40) | ((projection as u64) << 32)
}

/// Simulates every block of the plan with the given device model.
pub fn simulate_blocks(
    plan: &ExperimentPlan,
    injection: &NoiseInjection,
    gs: &NoisyGateSet,
    blocks: &[Block],
) -> Result<Vec<ObservationRecord>> {
    let device = device(plan, injection, gs, blocks)?;
    let effect = plan.effect.as_deref();
    gs.effect(effect)?;
    let mut records = Vec::new();
    for block in blocks {
        let out = run_block(plan, &device, block, &block.sequences, effect, stream_offset(block, 0))?;
        for (s, seq) in block.sequences.iter().enumerate() {
            let mut r = ObservationRecord::from_counts(seq.clone(), out.hits[s], plan.shots);
            r.t = out.mean_time[s];
            r.batch = block.batch;
            r.effect = plan.effect.clone();
            records.push(r);
        }
    }
    Ok(records)
}

/// Records for the plan, ordered by block then sequence.
pub fn simulate(plan: &ExperimentPlan, injection: &NoiseInjection, gs: &NoisyGateSet) -> Result<Vec<ObservationRecord>> {
    let blocks = plan.blocks(&gs.labels())?;
    simulate_blocks(plan, injection, gs, &blocks)
}

/// Parity-projected data: every projection of every sequence is an
/// independent repetition of the sequence followed by the projection prefix,
/// read out with the plan's effect.
pub fn simulate_projected(
    plan: &ExperimentPlan,
    injection: &NoiseInjection,
    gs: &NoisyGateSet,
    projections: &[ProjectionSpec],
) -> Result<Vec<ProjectedRecord>> {
    let blocks = plan.blocks(&gs.labels())?;
    let device = device(plan, injection, gs, &blocks)?;
    let mut out = Vec::new();
    for block in &blocks {
        let mut per_projection = Vec::with_capacity(projections.len());
        for (k, proj) in projections.iter().enumerate() {
            let seqs: Vec<GateSequence> = block.sequences.iter().map(|s| s.then(&proj.prefix)).collect();
            per_projection.push(run_block(
                plan,
                &device,
                block,
                &seqs,
                plan.effect.as_deref(),
                stream_offset(block, k),
            )?);
        }
        for (s, seq) in block.sequences.iter().enumerate() {
            let outcomes = projections
                .iter()
                .zip(&per_projection)
                .map(|(proj, o)| ProjectionOutcome {
                    projection: proj.label.clone(),
                    freq: o.hits[s] as f64 / plan.shots as f64,
                    shots: plan.shots,
                })
                .collect();
            out.push(ProjectedRecord {
                sequence: seq.clone(),
                outcomes,
                t: per_projection[0].mean_time[s],
                batch: block.batch,
            });
        }
    }
    Ok(out)
}
