//! First-order expansion of sequence outcomes in the noise residuals.
//!
//! Every noise channel is written `Λ = Λ̄ + ε` around the current mean `Λ̄`.
//! Residual blocks are `vec(Λ − I)` in column-major order, concatenated as
//! gates (gate-set order), then `Λ_E`, then `Λ_ρ`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FbtError, Result};
use crate::gateset::{GateLabel, GateSequence, NoisyGateSet};
use crate::pauli::Ptm;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Owner {
    Gate(GateLabel),
    Effect,
    Prep,
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Gate(g) => write!(f, "gate:{g}"),
            Owner::Effect => f.write_str("E"),
            Owner::Prep => f.write_str("rho"),
        }
    }
}

impl From<Owner> for String {
    fn from(o: Owner) -> String {
        o.to_string()
    }
}

impl TryFrom<String> for Owner {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.as_str() {
            "E" => Ok(Owner::Effect),
            "rho" => Ok(Owner::Prep),
            _ => s
                .strip_prefix("gate:")
                .map(|g| Owner::Gate(GateLabel::new(g)))
                .ok_or_else(|| format!("unknown residual owner `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub owner: Owner,
    pub offset: usize,
    pub len: usize,
}

/// Layout of the residual vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualRegistry {
    superop_dim: usize,
    entries: Vec<RegistryEntry>,
}

impl ResidualRegistry {
    pub fn for_gateset(gs: &NoisyGateSet) -> Self {
        let n = gs.superop_dim();
        let block = n * n;
        let mut owners: Vec<Owner> = gs.labels().into_iter().map(Owner::Gate).collect();
        owners.push(Owner::Effect);
        owners.push(Owner::Prep);
        let entries = owners
            .into_iter()
            .enumerate()
            .map(|(i, owner)| RegistryEntry {
                owner,
                offset: i * block,
                len: block,
            })
            .collect();
        ResidualRegistry {
            superop_dim: n,
            entries,
        }
    }

    pub fn superop_dim(&self) -> usize {
        self.superop_dim
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.last().map(|e| e.offset + e.len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_gates(&self) -> usize {
        self.entries.len() - 2
    }

    pub fn entry(&self, owner: &Owner) -> Result<&RegistryEntry> {
        self.entries
            .iter()
            .find(|e| &e.owner == owner)
            .ok_or_else(|| FbtError::RegistryMismatch(format!("no block for {owner}")))
    }

    pub fn gate_offset(&self, index: usize) -> usize {
        self.entries[index].offset
    }

    pub fn effect_offset(&self) -> usize {
        self.entries[self.entries.len() - 2].offset
    }

    pub fn prep_offset(&self) -> usize {
        self.entries[self.entries.len() - 1].offset
    }

    /// Fails unless `gs` has the same gates, in the same order, and dimension.
    pub fn check(&self, gs: &NoisyGateSet) -> Result<()> {
        let expected = ResidualRegistry::for_gateset(gs);
        if &expected != self {
            let have: Vec<String> = self.entries.iter().map(|e| e.owner.to_string()).collect();
            let want: Vec<String> = expected.entries.iter().map(|e| e.owner.to_string()).collect();
            return Err(FbtError::RegistryMismatch(format!(
                "registry [{}] does not match gate set [{}]",
                have.join(", "),
                want.join(", ")
            )));
        }
        Ok(())
    }

    /// Offsets partition `[0, len)` with no gaps or overlaps.
    pub fn is_partition(&self) -> bool {
        let mut next = 0;
        for e in &self.entries {
            if e.offset != next {
                return false;
            }
            next += e.len;
        }
        true
    }
}

/// Column-major vectorization.
pub fn vec_matrix(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &[f64], n: usize) -> Result<DMatrix<f64>> {
    if v.len() != n * n {
        return Err(FbtError::DimensionMismatch {
            expected: n * n,
            got: v.len(),
        });
    }
    Ok(DMatrix::from_column_slice(n, n, v))
}

/// `vec(Λ − I)` for every channel of `gs`.
pub fn residual_of(gs: &NoisyGateSet, registry: &ResidualRegistry) -> Result<DVector<f64>> {
    registry.check(gs)?;
    let n = registry.superop_dim();
    let id = DMatrix::<f64>::identity(n, n);
    let mut x = DVector::zeros(registry.len());
    let mut put = |offset: usize, m: &DMatrix<f64>| {
        x.rows_mut(offset, n * n)
            .copy_from_slice((m - &id).as_slice());
    };
    for (i, g) in gs.gates().iter().enumerate() {
        put(registry.gate_offset(i), g.noise.matrix());
    }
    put(registry.effect_offset(), gs.effect_noise().matrix());
    put(registry.prep_offset(), gs.prep_noise().matrix());
    Ok(x)
}

/// Noise channels `I + unvec(block)` for each block of `x`, in registry order
/// (gates, then effect, then preparation).
pub fn channels_from_residual(registry: &ResidualRegistry, x: &DVector<f64>) -> Result<Vec<Ptm>> {
    if x.len() != registry.len() {
        return Err(FbtError::DimensionMismatch {
            expected: registry.len(),
            got: x.len(),
        });
    }
    let n = registry.superop_dim();
    registry
        .entries()
        .iter()
        .map(|e| {
            let mut m = unvec(&x.as_slice()[e.offset..e.offset + e.len], n)?;
            for i in 0..n {
                m[(i, i)] += 1.0;
            }
            Ptm::new(m)
        })
        .collect()
}

/// `gs` with its noise channels replaced by `I + unvec(x)`.
pub fn with_residual(
    gs: &NoisyGateSet,
    registry: &ResidualRegistry,
    x: &DVector<f64>,
) -> Result<NoisyGateSet> {
    registry.check(gs)?;
    let mut channels = channels_from_residual(registry, x)?;
    let prep = channels.pop().expect("registry has prep block");
    let effect = channels.pop().expect("registry has effect block");
    gs.with_noise(channels, effect, prep)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedSequence {
    pub m_bar: f64,
    pub a_row: DVector<f64>,
    pub sequence: GateSequence,
    pub effect: Option<String>,
}

impl LinearizedSequence {
    /// `m̄ + a·δ` for a residual displacement `δ` from the expansion point.
    pub fn predict(&self, delta: &DVector<f64>) -> f64 {
        self.m_bar + self.a_row.dot(delta)
    }
}

fn add_outer(a_row: &mut DVector<f64>, offset: usize, w: &DVector<f64>, s: &DVector<f64>) {
    let n = w.len();
    let block = &mut a_row.as_mut_slice()[offset..offset + n * n];
    for (b, &sb) in s.iter().enumerate() {
        if sb == 0.0 {
            continue;
        }
        let col = &mut block[b * n..(b + 1) * n];
        for (c, &wa) in col.iter_mut().zip(w.iter()) {
            *c += wa * sb;
        }
    }
}

/// Expands the outcome of `seq` (measured with `effect`, `None` = native)
/// around the noise channels currently held by `gs`.
///
/// Cost is one forward and one backward pass of matrix-vector products plus
/// one rank-1 block per gate position.
pub fn linearize(
    gs: &NoisyGateSet,
    registry: &ResidualRegistry,
    seq: &GateSequence,
    effect: Option<&str>,
) -> Result<LinearizedSequence> {
    let indices = gs.resolve(seq)?;
    let n = gs.superop_dim();
    if registry.superop_dim() != n || registry.n_gates() != gs.gates().len() {
        return Err(FbtError::RegistryMismatch(
            "registry was built for a different gate set".into(),
        ));
    }
    let rho = gs.rho0();
    let e_vec = &gs.effect(effect)?.vector;

    // forward: states[p] is the state entering the noise of position p
    let mut states = Vec::with_capacity(indices.len() + 1);
    states.push(gs.prepared_state());
    for &i in &indices {
        let next = gs.noisy_gate(i) * states.last().expect("non-empty");
        states.push(next);
    }
    let final_state = states.last().expect("non-empty");
    let m_bar = e_vec.dot(&(gs.effect_noise().matrix() * final_state));
    if !m_bar.is_finite() {
        return Err(FbtError::NonFinite("linearized prediction"));
    }

    let mut a_row = DVector::zeros(registry.len());
    add_outer(&mut a_row, registry.effect_offset(), e_vec, final_state);

    // backward: u is the effect seen after the gate at position p
    let mut u = gs.effect_noise().matrix().tr_mul(e_vec);
    for (p, &i) in indices.iter().enumerate().rev() {
        let w = gs.gates()[i].ideal.matrix().tr_mul(&u);
        add_outer(&mut a_row, registry.gate_offset(i), &w, &states[p]);
        u = gs.noisy_gate(i).tr_mul(&u);
    }
    add_outer(&mut a_row, registry.prep_offset(), &u, rho);

    if a_row.iter().any(|v| !v.is_finite()) {
        return Err(FbtError::NonFinite("sensitivity row"));
    }
    Ok(LinearizedSequence {
        m_bar,
        a_row,
        sequence: seq.clone(),
        effect: effect.map(str::to_string),
    })
}

/// Parallel [`linearize`] over many sequences, in input order.
pub fn linearize_batch(
    gs: &NoisyGateSet,
    registry: &ResidualRegistry,
    items: &[(GateSequence, Option<String>)],
) -> Result<Vec<LinearizedSequence>> {
    items
        .par_iter()
        .map(|(s, e)| linearize(gs, registry, s, e.as_deref()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateset::{ideal_two_qubit_gateset, TwoQubitGate};
    use crate::testkit::random_cptp_near_identity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const LABELS: [&str; 5] = ["x1", "x2", "z1", "z2", "cz"];

    fn random_seq(rng: &mut ChaCha8Rng, len: usize) -> GateSequence {
        (0..len).map(|_| LABELS[rng.random_range(0..5)]).collect()
    }

    fn random_direction(rng: &mut ChaCha8Rng, len: usize, norm: f64) -> DVector<f64> {
        let v = DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal));
        &v * (norm / v.norm())
    }

    fn noisy_mean(seed: u64) -> NoisyGateSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        for l in gs.labels() {
            gs.set_noise(&l, random_cptp_near_identity(2, 0.02, &mut rng)).unwrap();
        }
        gs.set_effect_noise(random_cptp_near_identity(2, 0.02, &mut rng)).unwrap();
        gs.set_prep_noise(random_cptp_near_identity(2, 0.02, &mut rng)).unwrap();
        gs
    }

    #[test]
    fn registry_layout() {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let reg = ResidualRegistry::for_gateset(&gs);
        assert_eq!(reg.len(), 1792);
        assert!(reg.is_partition());
        assert_eq!(reg.effect_offset(), 5 * 256);
        let json = serde_json::to_string(&reg).unwrap();
        assert!(json.contains("\"gate:cz\""));
        assert_eq!(serde_json::from_str::<ResidualRegistry>(&json).unwrap(), reg);
        let dcz = ideal_two_qubit_gateset(TwoQubitGate::Dcz);
        assert!(matches!(reg.check(&dcz), Err(FbtError::RegistryMismatch(_))));
    }

    #[test]
    fn vec_round_trip_and_identity_stride() {
        let m = DMatrix::from_fn(16, 16, |i, j| (i * 31 + j * 7) as f64 * 0.1);
        assert_eq!(unvec(vec_matrix(&m).as_slice(), 16).unwrap(), m);
        let v = vec_matrix(&DMatrix::identity(16, 16));
        for (k, x) in v.iter().enumerate() {
            assert_eq!(*x, if k % 17 == 0 { 1.0 } else { 0.0 });
        }
        assert!(unvec(&[0.0; 15], 4).is_err());
    }

    #[test]
    fn empty_sequence_touches_only_spam_blocks() {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let reg = ResidualRegistry::for_gateset(&gs);
        let lin = linearize(&gs, &reg, &GateSequence::empty(), None).unwrap();
        let expected = gs.native_effect().vector.dot(gs.rho0());
        assert_eq!(lin.m_bar, expected);
        assert!(lin.a_row.rows(0, reg.effect_offset()).iter().all(|v| *v == 0.0));
        assert!(lin.a_row.rows(reg.effect_offset(), 512).norm() > 0.0);
    }

    #[test]
    fn single_gate_block_matches_index_loop() {
        let gs = noisy_mean(3);
        let reg = ResidualRegistry::for_gateset(&gs);
        let lin = linearize(&gs, &reg, &"x1".parse().unwrap(), None).unwrap();
        // ⟨⟨E|Λ_E G ε Λ_ρ|ρ⟩⟩ = Σ_ab (GᵀΛ_EᵀE)_a ε_ab (Λ_ρ ρ)_b
        let g = gs.gate(&"x1".into()).unwrap().ideal.matrix().clone();
        let e = &gs.native_effect().vector;
        let s = gs.prepared_state();
        let le = gs.effect_noise().matrix();
        for a in 0..16 {
            for b in 0..16 {
                let mut w = 0.0;
                for k in 0..16 {
                    for l in 0..16 {
                        w += e[l] * le[(l, k)] * g[(k, a)];
                    }
                }
                let expected = w * s[b];
                assert!((lin.a_row[a + 16 * b] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn first_order_shift_matches_matrix_form() {
        let gs = noisy_mean(4);
        let reg = ResidualRegistry::for_gateset(&gs);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let seq = random_seq(&mut rng, 12);
        let lin = linearize(&gs, &reg, &seq, None).unwrap();
        let x = random_direction(&mut rng, reg.len(), 1.0);
        let eps = channels_from_residual(&reg, &x).unwrap();
        let eps: Vec<DMatrix<f64>> = eps
            .into_iter()
            .map(|p| p.into_matrix() - DMatrix::identity(16, 16))
            .collect();
        // derivative by product rule, one channel at a time
        let idx = gs.resolve(&seq).unwrap();
        let e = gs.native_effect().vector.clone();
        let chain = |replace: Option<usize>| -> f64 {
            let mut s = match replace {
                Some(p) if p == idx.len() + 1 => &eps[6] * gs.rho0(),
                _ => gs.prepared_state(),
            };
            for (p, &i) in idx.iter().enumerate() {
                s = match replace {
                    Some(q) if q == p => gs.gates()[i].ideal.matrix() * (&eps[i] * s),
                    _ => gs.noisy_gate(i) * s,
                };
            }
            let le = match replace {
                Some(q) if q == idx.len() => eps[5].clone(),
                _ => gs.effect_noise().matrix().clone(),
            };
            e.dot(&(le * s))
        };
        let shift: f64 = (0..idx.len() + 2).map(|p| chain(Some(p))).sum();
        assert!((lin.a_row.dot(&x) - shift).abs() < 1e-12);
    }

    #[test]
    fn repeated_gate_blocks_accumulate() {
        let gs = noisy_mean(5);
        let reg = ResidualRegistry::for_gateset(&gs);
        let g = 1;
        let off = reg.gate_offset(g);
        let seq: GateSequence = "x2 x2 x2".parse().unwrap();
        let lin = linearize(&gs, &reg, &seq, None).unwrap();
        // sum of single-position contributions computed by direct products
        let e = gs.measured_effect(None).unwrap();
        let gt = gs.noisy_gate(g);
        let gi = gs.gates()[g].ideal.matrix();
        let mut total = DVector::<f64>::zeros(256);
        for p in 0..3 {
            let mut s = gs.prepared_state();
            for _ in 0..p {
                s = gt * s;
            }
            let mut u = e.clone();
            for _ in p + 1..3 {
                u = gt.tr_mul(&u);
            }
            let w = gi.tr_mul(&u);
            total += vec_matrix(&(&w * s.transpose()));
        }
        assert!((lin.a_row.rows(off, 256) - total).norm() < 1e-12);
    }

    #[test]
    fn directional_derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gs = noisy_mean(6);
        let reg = ResidualRegistry::for_gateset(&gs);
        let x0 = residual_of(&gs, &reg).unwrap();
        for _ in 0..20 {
            let len = rng.random_range(0..=16);
            let seq = random_seq(&mut rng, len);
            let lin = linearize(&gs, &reg, &seq, None).unwrap();
            let dx = random_direction(&mut rng, reg.len(), 1e-4);
            let perturbed = with_residual(&gs, &reg, &(&x0 + &dx)).unwrap();
            let exact = perturbed.outcome_raw(&seq, None).unwrap();
            assert!((exact - lin.predict(&dx)).abs() <= 1e-6);
        }
    }

    #[test]
    fn non_native_effect_linearizes_consistently() {
        let gs = noisy_mean(8);
        let reg = ResidualRegistry::for_gateset(&gs);
        let seq: GateSequence = "x1 cz z2".parse().unwrap();
        let lin = linearize(&gs, &reg, &seq, Some("even")).unwrap();
        assert!((lin.m_bar - gs.outcome_raw(&seq, Some("even")).unwrap()).abs() < 1e-14);
        assert!(linearize(&gs, &reg, &seq, Some("bogus")).is_err());
    }

    #[test]
    fn linear_model_is_exactly_linear() {
        let gs = noisy_mean(7);
        let reg = ResidualRegistry::for_gateset(&gs);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lin = linearize(&gs, &reg, &random_seq(&mut rng, 8), None).unwrap();
        let dx = random_direction(&mut rng, reg.len(), 1e-2);
        let one = lin.predict(&dx) - lin.m_bar;
        let two = lin.predict(&(&dx * 2.0)) - lin.m_bar;
        assert!((two - 2.0 * one).abs() < 1e-15);
    }
}
