//! Sequential Gaussian conditioning on scalar sequence outcomes.
//!
//! The covariance is held as a square-root factor `Γ = F Fᵀ` with `F` of
//! shape `n × m`, where `m` counts the free directions. Rank-1 updates use
//! the Potter form, which keeps `Γ` symmetric and positive semidefinite by
//! construction and costs `O(n·m)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FbtError, Result};
use crate::gateset::NoisyGateSet;
use crate::linearize::{linearize, with_residual, LinearizedSequence, ResidualRegistry};
use crate::postproc::cptp::{cptp_project_with, CptpOptions};
use crate::records::ObservationRecord;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    registry: ResidualRegistry,
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    pub update_count: u64,
    pub approx_error_active: bool,
    pub provenance: String,
}

/// Outcome of one conditioning step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub predicted: f64,
    pub innovation: f64,
    /// `aᵀΓa` before the update.
    pub prior_variance: f64,
    /// `aᵀΓ'a` after the update.
    pub posterior_variance: f64,
}

impl GaussianState {
    pub fn from_factor(
        registry: ResidualRegistry,
        mean: DVector<f64>,
        factor: DMatrix<f64>,
    ) -> Result<Self> {
        if mean.len() != registry.len() {
            return Err(FbtError::DimensionMismatch {
                expected: registry.len(),
                got: mean.len(),
            });
        }
        if factor.nrows() != registry.len() {
            return Err(FbtError::DimensionMismatch {
                expected: registry.len(),
                got: factor.nrows(),
            });
        }
        if mean.iter().chain(factor.iter()).any(|v| !v.is_finite()) {
            return Err(FbtError::NonFinite("Gaussian state"));
        }
        Ok(GaussianState {
            registry,
            mean,
            factor,
            update_count: 0,
            approx_error_active: true,
            provenance: String::new(),
        })
    }

    /// Diagonal covariance; zero-variance components get no factor column.
    pub fn from_diagonal(
        registry: ResidualRegistry,
        mean: DVector<f64>,
        variances: &DVector<f64>,
    ) -> Result<Self> {
        if variances.len() != registry.len() {
            return Err(FbtError::DimensionMismatch {
                expected: registry.len(),
                got: variances.len(),
            });
        }
        if let Some(v) = variances.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(FbtError::InvalidVariance(*v));
        }
        let free: Vec<usize> = (0..variances.len()).filter(|&i| variances[i] > 0.0).collect();
        let mut factor = DMatrix::zeros(variances.len(), free.len());
        for (c, &i) in free.iter().enumerate() {
            factor[(i, c)] = variances[i].sqrt();
        }
        GaussianState::from_factor(registry, mean, factor)
    }

    /// Dense covariance, factored by a symmetric eigendecomposition.
    /// Eigenvalues below `-1e-10·max` are rejected; the rest are floored at 0.
    pub fn from_covariance(
        registry: ResidualRegistry,
        mean: DVector<f64>,
        cov: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = registry.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(FbtError::DimensionMismatch {
                expected: n,
                got: cov.nrows(),
            });
        }
        let sym = (cov + cov.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let scale = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let floor = 1e-10 * scale.max(f64::MIN_POSITIVE);
        if let Some(v) = eig.eigenvalues.iter().find(|&&v| v < -floor) {
            return Err(FbtError::NotPositiveSemidefinite(*v));
        }
        let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > floor).collect();
        let mut factor = DMatrix::zeros(n, keep.len());
        for (c, &k) in keep.iter().enumerate() {
            let s = eig.eigenvalues[k].sqrt();
            factor.set_column(c, &(eig.eigenvectors.column(k) * s));
        }
        GaussianState::from_factor(registry, mean, factor)
    }

    pub fn registry(&self) -> &ResidualRegistry {
        &self.registry
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn set_mean(&mut self, mean: DVector<f64>) -> Result<()> {
        if mean.len() != self.mean.len() {
            return Err(FbtError::DimensionMismatch {
                expected: self.mean.len(),
                got: mean.len(),
            });
        }
        self.mean = mean;
        Ok(())
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    pub fn marginal_variances(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.factor.row_iter().map(|r| r.norm_squared()),
        )
    }

    pub fn covariance_trace(&self) -> f64 {
        self.factor.norm_squared()
    }

    /// `aᵀΓa`.
    pub fn variance_along(&self, a: &DVector<f64>) -> f64 {
        self.factor.tr_mul(a).norm_squared()
    }

    /// Adds `diag(variances)` to the covariance, skipping frozen parameters
    /// (zero prior row), then refactors to a square Cholesky factor.
    pub fn add_process_noise(&mut self, variances: &DVector<f64>) -> Result<()> {
        let n = self.dim();
        if variances.len() != n {
            return Err(FbtError::DimensionMismatch {
                expected: n,
                got: variances.len(),
            });
        }
        if let Some(v) = variances.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(FbtError::InvalidConfig(format!(
                "process noise must be non-negative, got {v}"
            )));
        }
        if variances.iter().all(|&v| v == 0.0) {
            return Ok(());
        }
        let live: Vec<bool> = self.factor.row_iter().map(|r| r.norm_squared() > 0.0).collect();
        let mut cov = self.covariance();
        let scale = cov.diagonal().max().max(variances.max()).max(f64::MIN_POSITIVE);
        for k in 0..n {
            // Tiny jitter keeps the Cholesky factorization defined on
            // rank-deficient covariances.
            cov[(k, k)] += if live[k] { variances[k] + 1e-14 * scale } else { 1.0 };
        }
        let chol = cov
            .cholesky()
            .ok_or(FbtError::NotPositiveSemidefinite(f64::NAN))?;
        let mut factor = chol.unpack();
        for k in (0..n).filter(|&k| !live[k]) {
            factor.row_mut(k).fill(0.0);
        }
        self.factor = factor;
        Ok(())
    }

    /// Multiplies the covariance by `factor ≥ 1` (forgetting).
    pub fn inflate(&mut self, factor: f64) -> Result<()> {
        if !(factor >= 1.0) || !factor.is_finite() {
            return Err(FbtError::InvalidConfig(format!(
                "inflation factor must be >= 1, got {factor}"
            )));
        }
        self.factor *= factor.sqrt();
        Ok(())
    }

    /// Draw `mean + F z` with `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * z
    }

    /// Linear prediction at the current mean for a row expanded at
    /// `lin_point`.
    pub fn predict(&self, lin: &LinearizedSequence, lin_point: &DVector<f64>) -> f64 {
        lin.m_bar + lin.a_row.dot(&(&self.mean - lin_point))
    }

    /// Conditions on `observed = m̄ + a·(x − x_lin) + noise`, `noise ~ N(0, variance)`.
    pub fn condition(
        &mut self,
        lin: &LinearizedSequence,
        lin_point: &DVector<f64>,
        observed: f64,
        variance: f64,
    ) -> Result<Conditioning> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(FbtError::InvalidVariance(variance));
        }
        if lin.a_row.len() != self.dim() || lin_point.len() != self.dim() {
            return Err(FbtError::DimensionMismatch {
                expected: self.dim(),
                got: lin.a_row.len(),
            });
        }
        let predicted = self.predict(lin, lin_point);
        let innovation = observed - predicted;
        let phi = self.factor.tr_mul(&lin.a_row);
        let prior_variance = phi.norm_squared();
        let beta = prior_variance + variance;
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(FbtError::NotPositiveSemidefinite(beta));
        }
        let f_phi = &self.factor * &phi;
        self.mean.axpy(innovation / beta, &f_phi, 1.0);
        let gamma = 1.0 / (1.0 + (variance / beta).sqrt());
        self.factor.ger(-gamma / beta, &f_phi, &phi, 1.0);
        if !innovation.is_finite() || self.mean.iter().any(|v| !v.is_finite()) {
            return Err(FbtError::NonFinite("posterior mean"));
        }
        self.update_count += 1;
        Ok(Conditioning {
            predicted,
            innovation,
            prior_variance,
            posterior_variance: prior_variance * variance / beta,
        })
    }
}

/// Single conditioning step on a copy of `state`.
pub fn update(
    state: &GaussianState,
    lin: &LinearizedSequence,
    lin_point: &DVector<f64>,
    observed: f64,
    variance: f64,
) -> Result<GaussianState> {
    let mut next = state.clone();
    next.condition(lin, lin_point, observed, variance)?;
    Ok(next)
}

/// Binomial variance at the predicted probability, floored at
/// `1/(4·shots²)`.
pub fn shot_noise_variance(m_pred: f64, shots: u32) -> f64 {
    let n = shots.max(1) as f64;
    let m = m_pred.clamp(0.0, 1.0);
    (m * (1.0 - m) / n).max(1.0 / (4.0 * n * n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxErrorConfig {
    pub n_samples: usize,
    pub projection: CptpOptions,
}

impl Default for ApproxErrorConfig {
    fn default() -> Self {
        ApproxErrorConfig {
            n_samples: 100,
            projection: CptpOptions::sampling(),
        }
    }
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Monte-Carlo variance of the linearization error for one sequence.
///
/// Draws residuals from `state`, CPTP-projects the channels the sequence
/// touches (plus SPAM), and takes the sample variance of
/// `exact − (m̄ + a·(x − x_lin))`. Sample `k` uses RNG stream `k` of `seed`,
/// so results do not depend on thread scheduling.
pub fn approximation_error_variance(
    state: &GaussianState,
    lin_gs: &NoisyGateSet,
    lin: &LinearizedSequence,
    lin_point: &DVector<f64>,
    config: &ApproxErrorConfig,
    seed: u64,
) -> Result<f64> {
    if config.n_samples < 2 {
        return Err(FbtError::InvalidConfig("approximation error needs >= 2 samples".into()));
    }
    let reg = &state.registry;
    let block = reg.superop_dim() * reg.superop_dim();
    let n = reg.superop_dim();
    let indices = lin_gs.resolve(&lin.sequence)?;
    let mut used: Vec<usize> = indices.clone();
    used.sort_unstable();
    used.dedup();
    // registry entry indices: gates, then effect, then prep
    let mut blocks: Vec<usize> = used.clone();
    blocks.push(reg.n_gates());
    blocks.push(reg.n_gates() + 1);
    let m = state.factor.ncols();

    let discrepancy = |k: usize| -> Result<f64> {
        let mut rng = sample_rng(seed, k as u64);
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut gs = lin_gs.clone();
        let mut shift = 0.0;
        for &b in &blocks {
            let off = reg.entries()[b].offset;
            let x = state.mean.rows(off, block) + state.factor.rows(off, block) * &z;
            let mut mat = DMatrix::from_column_slice(n, n, x.as_slice());
            for i in 0..n {
                mat[(i, i)] += 1.0;
            }
            let projected = cptp_project_with(&crate::pauli::Ptm::new(mat)?, &config.projection).ptm;
            let mut dx = DVector::from_column_slice(projected.matrix().as_slice());
            for i in 0..n {
                dx[i * n + i] -= 1.0;
            }
            shift += lin.a_row.rows(off, block).dot(&(dx - lin_point.rows(off, block)));
            if b < reg.n_gates() {
                gs.set_noise_at(b, projected)?;
            } else if b == reg.n_gates() {
                gs.set_effect_noise(projected)?;
            } else {
                gs.set_prep_noise(projected)?;
            }
        }
        let exact = gs.outcome_raw(&lin.sequence, lin.effect.as_deref())?;
        let d = exact - (lin.m_bar + shift);
        if !d.is_finite() {
            return Err(FbtError::NonFinite("approximation-error sample"));
        }
        Ok(d)
    };
    let samples: Vec<f64> = (0..config.n_samples)
        .into_par_iter()
        .map(discrepancy)
        .collect::<Result<_>>()?;
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    Ok(samples.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0))
}

/// Turns approximation-error sampling off once it has been negligible for
/// `window` consecutive updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropController {
    pub ratio: f64,
    pub window: u32,
    pub consecutive: u32,
    pub active: bool,
}

impl Default for DropController {
    fn default() -> Self {
        DropController {
            ratio: 0.01,
            window: 20,
            consecutive: 0,
            active: true,
        }
    }
}

impl DropController {
    /// Records one update; returns whether sampling stays active.
    pub fn observe(&mut self, var_approx: f64, var_shot: f64) -> bool {
        if !self.active {
            return false;
        }
        if var_approx < self.ratio * var_shot {
            self.consecutive += 1;
        } else {
            self.consecutive = 0;
        }
        if self.consecutive >= self.window {
            self.active = false;
            tracing::info!("approximation-error sampling dropped");
        }
        self.active
    }

    pub fn reactivate(&mut self) {
        self.active = true;
        self.consecutive = 0;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Refresh the expansion point every this many updates.
    pub relinearize_every: u64,
    pub approx_error: bool,
    pub approx: ApproxErrorConfig,
    pub drop_ratio: f64,
    pub drop_window: u32,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            relinearize_every: 50,
            approx_error: true,
            approx: ApproxErrorConfig::default(),
            drop_ratio: 0.01,
            drop_window: 20,
            seed: 0,
        }
    }
}

/// Per-update bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateSummary {
    pub index: u64,
    pub t: f64,
    pub sequence_len: usize,
    pub predicted: f64,
    pub observed: f64,
    pub var_shot: f64,
    pub var_approx: f64,
    pub posterior_variance: f64,
}

/// Streaming estimator: Gaussian state plus the expansion point.
#[derive(Clone, Debug)]
pub struct Estimator {
    base: NoisyGateSet,
    state: GaussianState,
    lin_point: DVector<f64>,
    lin_gs: NoisyGateSet,
    since_relinearize: u64,
    last_group: Option<u64>,
    drop: DropController,
    config: EstimatorConfig,
}

impl Estimator {
    /// `base` supplies ideal gates, state preparation and effects; its noise
    /// channels are ignored.
    pub fn new(base: &NoisyGateSet, state: GaussianState, config: EstimatorConfig) -> Result<Self> {
        state.registry.check(base)?;
        let lin_point = state.mean.clone();
        let lin_gs = with_residual(base, &state.registry, &lin_point)?;
        let drop = DropController {
            ratio: config.drop_ratio,
            window: config.drop_window,
            consecutive: 0,
            active: config.approx_error && state.approx_error_active,
        };
        let mut state = state;
        state.approx_error_active = drop.active;
        Ok(Estimator {
            base: base.ideal(),
            state,
            lin_point,
            lin_gs,
            since_relinearize: 0,
            last_group: None,
            drop,
            config,
        })
    }

    pub fn state(&self) -> &GaussianState {
        &self.state
    }

    pub fn into_state(self) -> GaussianState {
        self.state
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn base(&self) -> &NoisyGateSet {
        &self.base
    }

    pub fn lin_point(&self) -> &DVector<f64> {
        &self.lin_point
    }

    pub fn drop_controller(&self) -> &DropController {
        &self.drop
    }

    pub fn since_relinearize(&self) -> u64 {
        self.since_relinearize
    }

    pub fn last_group(&self) -> Option<u64> {
        self.last_group
    }

    /// Gate set at the current posterior mean.
    pub fn mean_gateset(&self) -> Result<NoisyGateSet> {
        with_residual(&self.base, &self.state.registry, &self.state.mean)
    }

    /// Rebuilds an estimator from checkpointed parts.
    pub(crate) fn from_parts(
        base: &NoisyGateSet,
        state: GaussianState,
        lin_point: DVector<f64>,
        since_relinearize: u64,
        last_group: Option<u64>,
        drop: DropController,
        config: EstimatorConfig,
    ) -> Result<Self> {
        state.registry.check(base)?;
        let lin_gs = with_residual(base, &state.registry, &lin_point)?;
        Ok(Estimator {
            base: base.ideal(),
            state,
            lin_point,
            lin_gs,
            since_relinearize,
            last_group,
            drop,
            config,
        })
    }

    pub fn relinearize(&mut self) -> Result<()> {
        self.lin_point = self.state.mean.clone();
        self.lin_gs = with_residual(&self.base, &self.state.registry, &self.lin_point)?;
        self.since_relinearize = 0;
        Ok(())
    }

    /// Multiplies the covariance by `factor`.
    pub fn inflate(&mut self, factor: f64) -> Result<()> {
        self.state.inflate(factor)
    }

    pub fn reactivate_approx_error(&mut self) {
        if self.config.approx_error {
            self.drop.reactivate();
            self.state.approx_error_active = true;
        }
    }

    pub fn update(&mut self, record: &ObservationRecord) -> Result<UpdateSummary> {
        record.validate()?;
        let same_group = record.group.is_some() && record.group == self.last_group;
        if self.since_relinearize >= self.config.relinearize_every && !same_group {
            self.relinearize()?;
        }
        self.last_group = record.group;
        let lin = linearize(
            &self.lin_gs,
            &self.state.registry,
            &record.sequence,
            record.effect.as_deref(),
        )?;
        let predicted = self.state.predict(&lin, &self.lin_point);
        let var_shot = shot_noise_variance(predicted, record.shots);
        let var_approx = if self.drop.active {
            let seed = self
                .config
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(self.state.update_count);
            let v = approximation_error_variance(
                &self.state,
                &self.lin_gs,
                &lin,
                &self.lin_point,
                &self.config.approx,
                seed,
            )?;
            self.state.approx_error_active = self.drop.observe(v, var_shot);
            v
        } else {
            0.0
        };
        let c = self
            .state
            .condition(&lin, &self.lin_point, record.freq, var_shot + var_approx)?;
        self.since_relinearize += 1;
        Ok(UpdateSummary {
            index: self.state.update_count,
            t: record.t,
            sequence_len: record.sequence.len(),
            predicted: c.predicted,
            observed: record.freq,
            var_shot,
            var_approx,
            posterior_variance: c.posterior_variance,
        })
    }

    pub fn update_all(&mut self, records: &[ObservationRecord]) -> Result<Vec<UpdateSummary>> {
        records.iter().map(|r| self.update(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateset::{ideal_two_qubit_gateset, GateSequence, TwoQubitGate};
    use crate::linearize::{linearize, ResidualRegistry};

    fn toy_registry() -> (NoisyGateSet, ResidualRegistry) {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let reg = ResidualRegistry::for_gateset(&gs);
        (gs, reg)
    }

    #[test]
    fn process_noise_adds_to_live_diagonal_only() {
        let (_, reg) = toy_registry();
        let n = reg.len();
        let mut factor = DMatrix::zeros(n, 2);
        factor[(3, 0)] = 1e-2;
        factor[(5, 0)] = 2e-2;
        factor[(5, 1)] = 1e-2;
        let mut state = GaussianState::from_factor(reg, DVector::zeros(n), factor).unwrap();
        let before = state.covariance();
        let q = DVector::from_element(n, 1e-4);
        state.add_process_noise(&q).unwrap();
        let after = state.covariance();
        let mut expected = before.clone();
        expected[(3, 3)] += 1e-4;
        expected[(5, 5)] += 1e-4;
        assert!((after - expected).amax() < 1e-15);
        assert!(state.factor().row(0).iter().all(|&v| v == 0.0));

        let untouched = state.clone();
        state.add_process_noise(&DVector::zeros(n)).unwrap();
        assert_eq!(state, untouched);
        assert!(state.add_process_noise(&DVector::from_element(n, -1.0)).is_err());
        assert!(state.add_process_noise(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn one_dimensional_conjugate_update() {
        let (_, reg) = toy_registry();
        let n = reg.len();
        let mut var = DVector::zeros(n);
        var[0] = 1.0;
        let mut state = GaussianState::from_diagonal(reg, DVector::zeros(n), &var).unwrap();
        let mut a = DVector::zeros(n);
        a[0] = 1.0;
        let lin = LinearizedSequence {
            m_bar: 0.0,
            a_row: a,
            sequence: GateSequence::empty(),
            effect: None,
        };
        let x0 = DVector::zeros(n);
        state.condition(&lin, &x0, 1.0, 1.0).unwrap();
        assert_eq!(state.mean()[0], 0.5);
        assert!((state.covariance()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_row_leaves_state_unchanged() {
        let (_, reg) = toy_registry();
        let n = reg.len();
        let var = DVector::from_element(n, 1e-4);
        let state = GaussianState::from_diagonal(reg, DVector::zeros(n), &var).unwrap();
        let lin = LinearizedSequence {
            m_bar: 0.3,
            a_row: DVector::zeros(n),
            sequence: GateSequence::empty(),
            effect: None,
        };
        let next = update(&state, &lin, &DVector::zeros(n), 0.9, 0.01).unwrap();
        assert_eq!(next.mean(), state.mean());
        assert_eq!(next.factor(), state.factor());
    }

    #[test]
    fn rejects_non_positive_noise_variance() {
        let (_, reg) = toy_registry();
        let n = reg.len();
        let state = GaussianState::from_diagonal(reg, DVector::zeros(n), &DVector::zeros(n)).unwrap();
        let lin = LinearizedSequence {
            m_bar: 0.0,
            a_row: DVector::zeros(n),
            sequence: GateSequence::empty(),
            effect: None,
        };
        assert!(matches!(
            update(&state, &lin, &DVector::zeros(n), 0.0, 0.0),
            Err(FbtError::InvalidVariance(_))
        ));
    }

    #[test]
    fn shot_noise_values() {
        assert!((shot_noise_variance(0.5, 100) - 0.0025).abs() < 1e-18);
        assert!((shot_noise_variance(0.0, 100) - 2.5e-5).abs() < 1e-18);
        assert!((shot_noise_variance(0.9, 100) - 9e-4).abs() < 1e-15);
        // the floor sits below the smallest nonzero binomial variance
        let smallest = (1.0 / 100.0) * (1.0 - 1.0 / 100.0) / 100.0;
        assert!(2.5e-5 < smallest);
    }

    #[test]
    fn drop_controller_rules() {
        let mut d = DropController::default();
        for i in 0..20 {
            assert_eq!(d.observe(0.0, 1e-3), i < 19);
        }
        assert!(!d.observe(1.0, 1e-3));
        let mut d = DropController::default();
        for _ in 0..100 {
            assert!(d.observe(1e-3, 1e-3));
        }
        d.reactivate();
        assert!(d.active);
    }

    #[test]
    fn zero_covariance_has_zero_approximation_error() {
        let (gs, reg) = toy_registry();
        let n = reg.len();
        let state = GaussianState::from_diagonal(reg.clone(), DVector::zeros(n), &DVector::zeros(n))
            .unwrap();
        let lin = linearize(&gs, &reg, &"x1 cz x2 z1".parse().unwrap(), None).unwrap();
        let v = approximation_error_variance(
            &state,
            &gs,
            &lin,
            &DVector::zeros(n),
            &ApproxErrorConfig::default(),
            1,
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn estimator_relinearizes_on_cadence_but_not_inside_groups() {
        let (gs, reg) = toy_registry();
        let n = reg.len();
        let state = GaussianState::from_diagonal(reg, DVector::zeros(n), &DVector::from_element(n, 1e-6))
            .unwrap();
        let config = EstimatorConfig {
            relinearize_every: 2,
            approx_error: false,
            ..Default::default()
        };
        let mut est = Estimator::new(&gs, state, config).unwrap();
        let rec = |g: Option<u64>| {
            let mut r = ObservationRecord::from_counts("x1".parse().unwrap(), 1, 2);
            r.group = g;
            r
        };
        est.update(&rec(None)).unwrap();
        est.update(&rec(Some(7))).unwrap();
        assert_eq!(est.since_relinearize(), 2);
        est.update(&rec(Some(7))).unwrap();
        assert_eq!(est.since_relinearize(), 3);
        est.update(&rec(None)).unwrap();
        assert_eq!(est.since_relinearize(), 1);
    }
}
