//! Initial priors over the noise residuals.
//!
//! Four strategies: a depolarizing guess with a flat diagonal covariance
//! (blind cold), a depolarizing guess matched to measured fidelities
//! (fidelity cold), CPTP-constrained resampling of a previous estimate
//! (partial warm), and reuse of a finished posterior (full warm).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::GaussianState;
use crate::error::{FbtError, Result};
use crate::gateset::{GateSetDocument, NoisyGateSet};
use crate::linearize::{residual_of, Owner, ResidualRegistry};
use crate::postproc::cptp::{cptp_project_with, CptpOptions};
use crate::pauli::Ptm;

/// Diagonal prior variances per residual block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub gate_variance: f64,
    /// Per-gate overrides of `gate_variance`.
    pub gate_variances: BTreeMap<String, f64>,
    pub spam_variance: f64,
    /// Gates whose residual is pinned at the mean.
    pub frozen: Vec<String>,
    /// Pin the first PTM row of every channel (trace preservation).
    pub lock_trace: bool,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            gate_variance: 1e-4,
            gate_variances: BTreeMap::new(),
            spam_variance: 1e-4,
            frozen: Vec::new(),
            lock_trace: true,
        }
    }
}

impl PriorSpec {
    pub fn variances(&self, registry: &ResidualRegistry) -> Result<DVector<f64>> {
        for label in self.gate_variances.keys().chain(self.frozen.iter()) {
            registry.entry(&Owner::Gate(label.as_str().into())).map_err(|_| {
                FbtError::field("prior", format!("unknown gate `{label}`"))
            })?;
        }
        let n = registry.superop_dim();
        let mut v = DVector::zeros(registry.len());
        for e in registry.entries() {
            let value = match &e.owner {
                Owner::Gate(g) if self.frozen.iter().any(|f| f == g.as_str()) => 0.0,
                Owner::Gate(g) => *self.gate_variances.get(g.as_str()).unwrap_or(&self.gate_variance),
                Owner::Effect | Owner::Prep => self.spam_variance,
            };
            if !(value >= 0.0) || !value.is_finite() {
                return Err(FbtError::InvalidVariance(value));
            }
            v.rows_mut(e.offset, e.len).fill(value);
            if self.lock_trace {
                for j in 0..n {
                    v[e.offset + j * n] = 0.0;
                }
            }
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlindColdConfig {
    /// Depolarizing strength of the guessed gate noise.
    pub depolarizing: f64,
    pub gate_depolarizing: BTreeMap<String, f64>,
    pub spam_depolarizing: f64,
    pub prior: PriorSpec,
}

impl Default for BlindColdConfig {
    fn default() -> Self {
        BlindColdConfig {
            depolarizing: 0.0,
            gate_depolarizing: BTreeMap::new(),
            spam_depolarizing: 0.0,
            prior: PriorSpec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityStat {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelityColdConfig {
    /// Per-gate entanglement fidelity statistics. Gates not listed keep the
    /// `prior` settings with an identity mean.
    pub fidelity: BTreeMap<String, FidelityStat>,
    pub prior: PriorSpec,
    pub n_samples: usize,
    /// Rescaling rounds used to match the spread after CPTP projection.
    pub moment_iterations: usize,
    pub seed: u64,
}

impl Default for FidelityColdConfig {
    fn default() -> Self {
        FidelityColdConfig {
            fidelity: BTreeMap::new(),
            prior: PriorSpec::default(),
            n_samples: 1000,
            moment_iterations: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartialWarmConfig {
    /// Guessed uncertainty around the previous mean.
    pub prior: PriorSpec,
    /// Previous estimate as a gate-set document; when absent the previous
    /// state passed to [`bootstrap`] supplies the mean.
    pub guessed_mean: Option<GateSetDocument>,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for PartialWarmConfig {
    fn default() -> Self {
        PartialWarmConfig {
            prior: PriorSpec::default(),
            guessed_mean: None,
            n_samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullWarmConfig {
    /// Checkpoint file to boot from; resolved by the caller.
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum BootstrapConfig {
    BlindCold(BlindColdConfig),
    FidelityCold(FidelityColdConfig),
    PartialWarm(PartialWarmConfig),
    FullWarm(FullWarmConfig),
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig::BlindCold(BlindColdConfig::default())
    }
}

impl BootstrapConfig {
    pub fn name(&self) -> &'static str {
        match self {
            BootstrapConfig::BlindCold(_) => "blind_cold",
            BootstrapConfig::FidelityCold(_) => "fidelity_cold",
            BootstrapConfig::PartialWarm(_) => "partial_warm",
            BootstrapConfig::FullWarm(_) => "full_warm",
        }
    }

    /// Whether booting involves Monte-Carlo sampling.
    pub fn is_sampling(&self) -> bool {
        matches!(self, BootstrapConfig::FidelityCold(_) | BootstrapConfig::PartialWarm(_))
    }
}

fn depolarizing_residual(n: usize, p: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 1..n {
        m[(i, i)] = -p;
    }
    m
}

fn put_block(x: &mut DVector<f64>, offset: usize, m: &DMatrix<f64>) {
    x.rows_mut(offset, m.len()).copy_from_slice(m.as_slice());
}

pub fn blind_cold_boot(gs: &NoisyGateSet, cfg: &BlindColdConfig) -> Result<GaussianState> {
    let reg = ResidualRegistry::for_gateset(gs);
    let n = reg.superop_dim();
    let mut mean = DVector::zeros(reg.len());
    for (i, g) in gs.gates().iter().enumerate() {
        let p = *cfg
            .gate_depolarizing
            .get(g.label.as_str())
            .unwrap_or(&cfg.depolarizing);
        put_block(&mut mean, reg.gate_offset(i), &depolarizing_residual(n, p));
    }
    let spam = depolarizing_residual(n, cfg.spam_depolarizing);
    put_block(&mut mean, reg.effect_offset(), &spam);
    put_block(&mut mean, reg.prep_offset(), &spam);
    let variances = cfg.prior.variances(&reg)?;
    let mut state = GaussianState::from_diagonal(reg, mean, &variances)?;
    state.provenance = "blind_cold".into();
    Ok(state)
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn block_to_ptm(block: &[f64], n: usize) -> Result<Ptm> {
    let mut m = DMatrix::from_column_slice(n, n, block);
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    Ptm::new(m)
}

fn ptm_to_block(p: &Ptm) -> DVector<f64> {
    let n = p.dim();
    let mut v = DVector::from_column_slice(p.matrix().as_slice());
    for i in 0..n {
        v[i * n + i] -= 1.0;
    }
    v
}

/// Entanglement fidelity spread of CPTP-projected draws of one block.
fn projected_fidelity_sd(
    mean: &DVector<f64>,
    sd: &DVector<f64>,
    n: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let options = CptpOptions::sampling();
    let fids: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(seed, k as u64);
            let x = DVector::from_fn(mean.len(), |i, _| {
                mean[i] + sd[i] * rng.sample::<f64, _>(StandardNormal)
            });
            let p = cptp_project_with(&block_to_ptm(x.as_slice(), n)?, &options).ptm;
            Ok(p.entanglement_fidelity())
        })
        .collect::<Result<_>>()?;
    let k = fids.len() as f64;
    let m = fids.iter().sum::<f64>() / k;
    Ok((fids.iter().map(|f| (f - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt())
}

/// Depolarizing mean with the requested entanglement fidelity; diagonal
/// covariance sized by first-order propagation of `F = Tr(Λ)/d²`, then
/// rescaled until the spread after CPTP projection matches.
pub fn fidelity_cold_boot(gs: &NoisyGateSet, cfg: &FidelityColdConfig) -> Result<GaussianState> {
    let reg = ResidualRegistry::for_gateset(gs);
    let n = reg.superop_dim();
    let block = n * n;
    let mut mean = DVector::zeros(reg.len());
    let mut variances = cfg.prior.variances(&reg)?;
    if cfg.n_samples < 2 && !cfg.fidelity.is_empty() {
        return Err(FbtError::InvalidConfig("fidelity boot needs >= 2 samples".into()));
    }
    for (label, stat) in &cfg.fidelity {
        if !(stat.mean > 0.0 && stat.mean <= 1.0) {
            return Err(FbtError::field(
                format!("fidelity.{label}.mean"),
                format!("{} is outside (0, 1]", stat.mean),
            ));
        }
        if !(stat.variance >= 0.0) || !stat.variance.is_finite() {
            return Err(FbtError::field(
                format!("fidelity.{label}.variance"),
                format!("{} is not a variance", stat.variance),
            ));
        }
        let idx = gs
            .gate_index(&label.as_str().into())
            .map_err(|_| FbtError::field("fidelity", format!("unknown gate `{label}`")))?;
        let off = reg.gate_offset(idx);
        // F = Tr(Λ)/n = 1 - (n - 1) p / n
        let p = ((1.0 - stat.mean) * n as f64 / (n as f64 - 1.0)).min(1.0);
        put_block(&mut mean, off, &depolarizing_residual(n, p));

        // only free diagonal entries move the fidelity
        let free_diag: Vec<usize> = (0..n)
            .map(|i| i * n + i)
            .filter(|&k| !(cfg.prior.lock_trace && k == 0))
            .collect();
        // var F = Σ_free σ² / n²
        let var0 = stat.variance * (n * n) as f64 / free_diag.len() as f64;
        let mut sd_block = DVector::zeros(block);
        for k in 0..block {
            let locked = cfg.prior.lock_trace && k % n == 0;
            if !locked {
                sd_block[k] = var0.sqrt();
            }
        }
        let target = stat.variance.sqrt();
        if target > 0.0 {
            let mean_block = mean.rows(off, block).into_owned();
            for round in 0..cfg.moment_iterations {
                let seed = cfg.seed ^ ((idx as u64) << 32) ^ round as u64;
                let observed = projected_fidelity_sd(&mean_block, &sd_block, n, cfg.n_samples, seed)?;
                if observed <= 0.0 {
                    break;
                }
                let ratio = target / observed;
                sd_block *= ratio;
                if (ratio - 1.0).abs() < 0.02 {
                    break;
                }
            }
        }
        for k in 0..block {
            variances[off + k] = sd_block[k] * sd_block[k];
        }
    }
    let mut state = GaussianState::from_diagonal(reg, mean, &variances)?;
    state.provenance = "fidelity_cold".into();
    Ok(state)
}

/// CPTP-constrained resampling around `mean`: draw from `N(mean, diag(v))`,
/// project every channel, and return the sample mean and covariance.
pub fn partial_warm_boot(
    gs: &NoisyGateSet,
    mean: &DVector<f64>,
    variances: &DVector<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<GaussianState> {
    let reg = ResidualRegistry::for_gateset(gs);
    if mean.len() != reg.len() || variances.len() != reg.len() {
        return Err(FbtError::DimensionMismatch {
            expected: reg.len(),
            got: mean.len(),
        });
    }
    if n_samples < 2 {
        return Err(FbtError::InvalidConfig("partial warm boot needs >= 2 samples".into()));
    }
    let n = reg.superop_dim();
    let block = n * n;
    let sd = variances.map(f64::sqrt);
    let options = CptpOptions::sampling();
    let samples: Vec<DVector<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(seed, k as u64);
            let mut x = DVector::from_fn(reg.len(), |i, _| {
                if sd[i] > 0.0 {
                    mean[i] + sd[i] * rng.sample::<f64, _>(StandardNormal)
                } else {
                    mean[i]
                }
            });
            for e in reg.entries() {
                let p = block_to_ptm(&x.as_slice()[e.offset..e.offset + block], n)?;
                let projected = cptp_project_with(&p, &options).ptm;
                x.rows_mut(e.offset, block).copy_from(&ptm_to_block(&projected));
            }
            Ok(x)
        })
        .collect::<Result<_>>()?;
    let k = n_samples as f64;
    let mut sample_mean = DVector::zeros(reg.len());
    for s in &samples {
        sample_mean += s;
    }
    sample_mean /= k;
    let jitter: Vec<usize> = (0..reg.len()).filter(|&i| variances[i] > 0.0).collect();
    let mut factor = DMatrix::zeros(reg.len(), n_samples + jitter.len());
    let scale = 1.0 / (k - 1.0).sqrt();
    for (c, s) in samples.iter().enumerate() {
        factor.set_column(c, &((s - &sample_mean) * scale));
    }
    if !jitter.is_empty() {
        tracing::warn!(
            components = jitter.len(),
            "sample covariance is rank deficient; adding 1e-12 diagonal jitter"
        );
    }
    for (c, &i) in jitter.iter().enumerate() {
        factor[(i, n_samples + c)] = 1e-6;
    }
    let mut state = GaussianState::from_factor(reg, sample_mean, factor)?;
    state.provenance = "partial_warm".into();
    Ok(state)
}

/// Previous posterior as the new prior.
pub fn full_warm_boot(gs: &NoisyGateSet, previous: &GaussianState) -> Result<GaussianState> {
    previous.registry().check(gs)?;
    let mut state = previous.clone();
    state.update_count = 0;
    state.provenance = "full_warm".into();
    Ok(state)
}

/// Runs the configured strategy. `previous` feeds the warm strategies.
pub fn bootstrap(
    gs: &NoisyGateSet,
    config: &BootstrapConfig,
    previous: Option<&GaussianState>,
) -> Result<GaussianState> {
    match config {
        BootstrapConfig::BlindCold(c) => blind_cold_boot(gs, c),
        BootstrapConfig::FidelityCold(c) => fidelity_cold_boot(gs, c),
        BootstrapConfig::PartialWarm(c) => {
            let reg = ResidualRegistry::for_gateset(gs);
            let mean = match (&c.guessed_mean, previous) {
                (Some(doc), _) => {
                    let guess = NoisyGateSet::from_document(doc)?;
                    residual_of(&guess, &reg)?
                }
                (None, Some(prev)) => {
                    prev.registry().check(gs)?;
                    prev.mean().clone()
                }
                (None, None) => {
                    return Err(FbtError::InvalidConfig(
                        "partial warm boot needs a guessed mean or a previous estimate".into(),
                    ))
                }
            };
            let variances = c.prior.variances(&reg)?;
            partial_warm_boot(gs, &mean, &variances, c.n_samples, c.seed)
        }
        BootstrapConfig::FullWarm(_) => {
            let prev = previous.ok_or_else(|| {
                FbtError::InvalidConfig("full warm boot needs a previous posterior".into())
            })?;
            full_warm_boot(gs, prev)
        }
    }
}
