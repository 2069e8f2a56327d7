//! Noisy gate sets and exact sequence outcomes.
//!
//! A noisy gate is `G̃ = G·Λ`: the noise channel acts first, then the ideal
//! gate. SPAM noise enters as `⟨⟨E|Λ_E` and `Λ_ρ|ρ⟩⟩`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FbtError, Result};
use crate::parity::make_parity_effects;
use crate::pauli::{pauli_rotation, ptm_from_unitary, PauliBasis, Ptm, C64};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GateLabel(String);

impl GateLabel {
    pub fn new(label: impl Into<String>) -> Self {
        GateLabel(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for GateLabel {
    fn from(s: &str) -> Self {
        GateLabel::new(s)
    }
}

/// Gates in time order: the first label is applied first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GateSequence(Vec<GateLabel>);

impl GateSequence {
    pub fn new(labels: Vec<GateLabel>) -> Self {
        GateSequence(labels)
    }

    pub fn empty() -> Self {
        GateSequence(Vec::new())
    }

    pub fn labels(&self) -> &[GateLabel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self` followed by `suffix`.
    pub fn then(&self, suffix: &GateSequence) -> GateSequence {
        let mut labels = self.0.clone();
        labels.extend(suffix.0.iter().cloned());
        GateSequence(labels)
    }
}

impl FromStr for GateSequence {
    type Err = FbtError;

    /// Parses whitespace- or comma-separated labels.
    fn from_str(s: &str) -> Result<Self> {
        Ok(GateSequence(
            s.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(GateLabel::new)
                .collect(),
        ))
    }
}

impl fmt::Display for GateSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.0.iter().map(|g| g.as_str()).collect();
        f.write_str(&parts.join(" "))
    }
}

impl<'a> FromIterator<&'a str> for GateSequence {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        GateSequence(iter.into_iter().map(GateLabel::new).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwoQubitGate {
    Cz,
    Dcz,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub label: GateLabel,
    pub ideal: Ptm,
    pub noise: Ptm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedEffect {
    pub name: String,
    /// Vectorized effect `⟨⟨E|` in the normalized Pauli basis.
    pub vector: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyGateSet {
    n_qubits: usize,
    gates: Vec<Gate>,
    // G·Λ per gate, in registry order
    noisy: Vec<DMatrix<f64>>,
    effect_noise: Ptm,
    prep_noise: Ptm,
    rho0: DVector<f64>,
    // first entry is the native measurement
    effects: Vec<NamedEffect>,
}

/// `diag(1,1,1,-1)` in the `|q1 q2⟩` computational basis.
pub fn cz_unitary() -> DMatrix<C64> {
    let mut u = DMatrix::<C64>::identity(4, 4);
    u[(3, 3)] = C64::new(-1.0, 0.0);
    u
}

/// CZ conjugated by π rotations on both qubits, `(X⊗X)·CZ·(X⊗X)`, followed by
/// optional local Z phases `exp(-iφ₁/2 Z₁)·exp(-iφ₂/2 Z₂)`.
pub fn dcz_unitary(local_phases: [f64; 2]) -> DMatrix<C64> {
    let xx = pauli_rotation("XX", std::f64::consts::PI).expect("valid label")
        * C64::new(0.0, 1.0);
    let core = &xx * cz_unitary() * &xx;
    let z1 = pauli_rotation("ZI", local_phases[0]).expect("valid label");
    let z2 = pauli_rotation("IZ", local_phases[1]).expect("valid label");
    z1 * z2 * core
}

/// Vectorized `|↓↓⟩⟨↓↓|`, with `|↓⟩` the computational `|0⟩`.
pub fn ground_state(n_qubits: usize) -> DVector<f64> {
    let basis = PauliBasis::get(n_qubits);
    let d = basis.dim();
    let mut rho = DMatrix::from_element(d, d, C64::new(0.0, 0.0));
    rho[(0, 0)] = C64::new(1.0, 0.0);
    basis.vectorize(&rho)
}

/// Ideal two-qubit gate set `{x1, x2, z1, z2, cz|dcz}` with identity noise,
/// `|↓↓⟩` preparation and odd-parity native readout (even parity also
/// registered as a non-native effect).
pub fn ideal_two_qubit_gateset(variant: TwoQubitGate) -> NoisyGateSet {
    let half = std::f64::consts::FRAC_PI_2;
    let rot = |label: &str| {
        ptm_from_unitary(&pauli_rotation(label, half).expect("valid label")).expect("unitary")
    };
    let (two_label, two_ptm) = match variant {
        TwoQubitGate::Cz => ("cz", ptm_from_unitary(&cz_unitary()).expect("unitary")),
        TwoQubitGate::Dcz => ("dcz", ptm_from_unitary(&dcz_unitary([0.0, 0.0])).expect("unitary")),
    };
    let (odd, even) = make_parity_effects();
    let gates = vec![
        ("x1", rot("XI")),
        ("x2", rot("IX")),
        ("z1", rot("ZI")),
        ("z2", rot("IZ")),
        (two_label, two_ptm),
    ];
    NoisyGateSet::new(
        2,
        gates
            .into_iter()
            .map(|(l, g)| (GateLabel::new(l), g))
            .collect(),
        ground_state(2),
        vec![
            NamedEffect {
                name: "odd".into(),
                vector: odd,
            },
            NamedEffect {
                name: "even".into(),
                vector: even,
            },
        ],
    )
    .expect("ideal gate set is well formed")
}

impl NoisyGateSet {
    /// Gate set with identity noise everywhere.
    pub fn new(
        n_qubits: usize,
        ideal: Vec<(GateLabel, Ptm)>,
        rho0: DVector<f64>,
        effects: Vec<NamedEffect>,
    ) -> Result<Self> {
        let n = 1usize << (2 * n_qubits);
        let mut gates = Vec::with_capacity(ideal.len());
        for (label, g) in ideal {
            if g.dim() != n {
                return Err(FbtError::DimensionMismatch {
                    expected: n,
                    got: g.dim(),
                });
            }
            if gates.iter().any(|x: &Gate| x.label == label) {
                return Err(FbtError::DuplicateGate(label.to_string()));
            }
            gates.push(Gate {
                label,
                ideal: g,
                noise: Ptm::identity(n_qubits),
            });
        }
        if rho0.len() != n {
            return Err(FbtError::DimensionMismatch {
                expected: n,
                got: rho0.len(),
            });
        }
        if effects.is_empty() {
            return Err(FbtError::InvalidConfig("at least one effect required".into()));
        }
        for e in &effects {
            if e.vector.len() != n {
                return Err(FbtError::DimensionMismatch {
                    expected: n,
                    got: e.vector.len(),
                });
            }
        }
        let noisy = gates.iter().map(|g| g.ideal.matrix().clone()).collect();
        Ok(NoisyGateSet {
            n_qubits,
            gates,
            noisy,
            effect_noise: Ptm::identity(n_qubits),
            prep_noise: Ptm::identity(n_qubits),
            rho0,
            effects,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Superoperator dimension `d²`.
    pub fn superop_dim(&self) -> usize {
        1usize << (2 * self.n_qubits)
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn labels(&self) -> Vec<GateLabel> {
        self.gates.iter().map(|g| g.label.clone()).collect()
    }

    pub fn gate_index(&self, label: &GateLabel) -> Result<usize> {
        self.gates
            .iter()
            .position(|g| &g.label == label)
            .ok_or_else(|| FbtError::UnknownGate(label.to_string()))
    }

    pub fn gate(&self, label: &GateLabel) -> Result<&Gate> {
        Ok(&self.gates[self.gate_index(label)?])
    }

    /// `G·Λ` for the gate at `index`.
    pub fn noisy_gate(&self, index: usize) -> &DMatrix<f64> {
        &self.noisy[index]
    }

    pub fn set_noise(&mut self, label: &GateLabel, noise: Ptm) -> Result<()> {
        let i = self.gate_index(label)?;
        self.set_noise_at(i, noise)
    }

    pub fn set_noise_at(&mut self, index: usize, noise: Ptm) -> Result<()> {
        if noise.dim() != self.superop_dim() {
            return Err(FbtError::DimensionMismatch {
                expected: self.superop_dim(),
                got: noise.dim(),
            });
        }
        self.noisy[index] = self.gates[index].ideal.matrix() * noise.matrix();
        self.gates[index].noise = noise;
        Ok(())
    }

    pub fn effect_noise(&self) -> &Ptm {
        &self.effect_noise
    }

    pub fn prep_noise(&self) -> &Ptm {
        &self.prep_noise
    }

    pub fn set_effect_noise(&mut self, noise: Ptm) -> Result<()> {
        if noise.dim() != self.superop_dim() {
            return Err(FbtError::DimensionMismatch {
                expected: self.superop_dim(),
                got: noise.dim(),
            });
        }
        self.effect_noise = noise;
        Ok(())
    }

    pub fn set_prep_noise(&mut self, noise: Ptm) -> Result<()> {
        if noise.dim() != self.superop_dim() {
            return Err(FbtError::DimensionMismatch {
                expected: self.superop_dim(),
                got: noise.dim(),
            });
        }
        self.prep_noise = noise;
        Ok(())
    }

    pub fn rho0(&self) -> &DVector<f64> {
        &self.rho0
    }

    pub fn effects(&self) -> &[NamedEffect] {
        &self.effects
    }

    pub fn native_effect(&self) -> &NamedEffect {
        &self.effects[0]
    }

    /// Effect by name; `None` selects the native measurement.
    pub fn effect(&self, name: Option<&str>) -> Result<&NamedEffect> {
        match name {
            None => Ok(self.native_effect()),
            Some(n) => self
                .effects
                .iter()
                .find(|e| e.name == n)
                .ok_or_else(|| FbtError::UnknownEffect(n.to_string())),
        }
    }

    /// Noisy state preparation `Λ_ρ|ρ⟩⟩`.
    pub fn prepared_state(&self) -> DVector<f64> {
        self.prep_noise.matrix() * &self.rho0
    }

    /// Noisy effect `⟨⟨E|Λ_E` as a column vector.
    pub fn measured_effect(&self, name: Option<&str>) -> Result<DVector<f64>> {
        Ok(self.effect_noise.matrix().tr_mul(&self.effect(name)?.vector))
    }

    pub fn resolve(&self, seq: &GateSequence) -> Result<Vec<usize>> {
        seq.labels().iter().map(|l| self.gate_index(l)).collect()
    }

    /// Unclamped outcome probability.
    pub fn outcome_raw(&self, seq: &GateSequence, effect: Option<&str>) -> Result<f64> {
        let indices = self.resolve(seq)?;
        let mut state = self.prepared_state();
        for i in indices {
            state = &self.noisy[i] * state;
        }
        Ok(self.measured_effect(effect)?.dot(&state))
    }

    /// Outcome probability for the given effect, clamped to `[0, 1]`.
    pub fn outcome(&self, seq: &GateSequence, effect: Option<&str>) -> Result<f64> {
        let p = self.outcome_raw(seq, effect)?;
        if !p.is_finite() {
            return Err(FbtError::NonFinite("exact outcome"));
        }
        if !(0.0..=1.0).contains(&p) {
            tracing::debug!(probability = p, sequence = %seq, "clamping outcome probability");
        }
        Ok(p.clamp(0.0, 1.0))
    }

    /// `⟨⟨E|Λ_E · ∏(G_iΛ_i) · Λ_ρ|ρ⟩⟩` for the native effect.
    pub fn exact_outcome(&self, seq: &GateSequence) -> Result<f64> {
        self.outcome(seq, None)
    }

    /// Same gate set with different noise channels, given in registry order.
    pub fn with_noise(&self, gate_noise: Vec<Ptm>, effect_noise: Ptm, prep_noise: Ptm) -> Result<Self> {
        if gate_noise.len() != self.gates.len() {
            return Err(FbtError::DimensionMismatch {
                expected: self.gates.len(),
                got: gate_noise.len(),
            });
        }
        let mut out = self.clone();
        for (i, n) in gate_noise.into_iter().enumerate() {
            out.set_noise_at(i, n)?;
        }
        out.set_effect_noise(effect_noise)?;
        out.set_prep_noise(prep_noise)?;
        Ok(out)
    }

    /// Copy with every noise channel reset to the identity.
    pub fn ideal(&self) -> Self {
        let id = Ptm::identity(self.n_qubits);
        self.with_noise(vec![id.clone(); self.gates.len()], id.clone(), id)
            .expect("dimensions unchanged")
    }

    pub fn to_document(&self) -> GateSetDocument {
        let row_major = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut v = Vec::with_capacity(m.len());
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    v.push(m[(r, c)]);
                }
            }
            v
        };
        GateSetDocument {
            schema: GATESET_SCHEMA.into(),
            convention: Convention::default(),
            n_qubits: self.n_qubits,
            gates: self
                .gates
                .iter()
                .map(|g| GateEntry {
                    label: g.label.clone(),
                    ideal: row_major(g.ideal.matrix()),
                    noise: Some(row_major(g.noise.matrix())),
                })
                .collect(),
            effect_noise: Some(row_major(self.effect_noise.matrix())),
            prep_noise: Some(row_major(self.prep_noise.matrix())),
            rho0: self.rho0.iter().copied().collect(),
            effects: self
                .effects
                .iter()
                .map(|e| EffectEntry {
                    name: e.name.clone(),
                    vector: e.vector.iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &GateSetDocument) -> Result<Self> {
        if doc.schema != GATESET_SCHEMA {
            return Err(FbtError::field(
                "schema",
                format!("expected `{GATESET_SCHEMA}`, got `{}`", doc.schema),
            ));
        }
        if !(1..=4).contains(&doc.n_qubits) {
            return Err(FbtError::field("n_qubits", "must be between 1 and 4"));
        }
        let n = 1usize << (2 * doc.n_qubits);
        let matrix = |path: String, values: &[f64]| -> Result<Ptm> {
            if values.len() != n * n {
                return Err(FbtError::field(
                    path,
                    format!("expected {} entries, got {}", n * n, values.len()),
                ));
            }
            if let Some(k) = values.iter().position(|v| !v.is_finite()) {
                return Err(FbtError::field(format!("{path}[{k}]"), "non-finite entry"));
            }
            Ptm::new(DMatrix::from_row_slice(n, n, values))
        };
        let vector = |path: String, values: &[f64]| -> Result<DVector<f64>> {
            if values.len() != n {
                return Err(FbtError::field(
                    path,
                    format!("expected {} entries, got {}", n, values.len()),
                ));
            }
            Ok(DVector::from_column_slice(values))
        };
        let mut ideal = Vec::with_capacity(doc.gates.len());
        let mut noise = Vec::with_capacity(doc.gates.len());
        for (i, g) in doc.gates.iter().enumerate() {
            ideal.push((g.label.clone(), matrix(format!("gates[{i}].ideal"), &g.ideal)?));
            noise.push(match &g.noise {
                Some(v) => matrix(format!("gates[{i}].noise"), v)?,
                None => Ptm::identity(doc.n_qubits),
            });
        }
        let effects = doc
            .effects
            .iter()
            .enumerate()
            .map(|(i, e)| {
                Ok(NamedEffect {
                    name: e.name.clone(),
                    vector: vector(format!("effects[{i}].vector"), &e.vector)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rho0 = vector("rho0".into(), &doc.rho0)?;
        let base = NoisyGateSet::new(doc.n_qubits, ideal, rho0, effects).map_err(|e| match e {
            FbtError::DuplicateGate(l) => FbtError::field("gates", format!("duplicate label `{l}`")),
            other => other,
        })?;
        let effect_noise = match &doc.effect_noise {
            Some(v) => matrix("effect_noise".into(), v)?,
            None => Ptm::identity(doc.n_qubits),
        };
        let prep_noise = match &doc.prep_noise {
            Some(v) => matrix("prep_noise".into(), v)?,
            None => Ptm::identity(doc.n_qubits),
        };
        base.with_noise(noise, effect_noise, prep_noise)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("document serializes")
    }

    /// Parses a gate-set document; errors carry the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        NoisyGateSet::from_document(&crate::error::parse_json(text)?)
    }
}

pub const GATESET_SCHEMA: &str = "fbt.gateset.v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convention {
    pub basis: String,
    pub normalization: String,
    pub ptm: String,
    pub layout: String,
    pub noise_placement: String,
}

impl Default for Convention {
    fn default() -> Self {
        Convention {
            basis: "pauli strings, lexicographic in IXYZ, qubit 1 leftmost".into(),
            normalization: "vectors in P/sqrt(d); PTM R_ij = Tr(P_i Phi(P_j))/d".into(),
            ptm: "real d^2 x d^2".into(),
            layout: "row-major".into(),
            noise_placement: "noisy gate = G * Lambda (noise first)".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateEntry {
    pub label: GateLabel,
    pub ideal: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEntry {
    pub name: String,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSetDocument {
    pub schema: String,
    #[serde(default)]
    pub convention: Convention,
    pub n_qubits: usize,
    pub gates: Vec<GateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect_noise: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prep_noise: Option<Vec<f64>>,
    pub rho0: Vec<f64>,
    pub effects: Vec<EffectEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::random_cptp_near_identity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(s: &str) -> GateSequence {
        s.parse().unwrap()
    }

    // density-matrix evolution on 4x4 matrices, independent of PTMs
    fn evolve(labels: &[&str]) -> f64 {
        let half = std::f64::consts::FRAC_PI_2;
        let mut rho = DMatrix::from_element(4, 4, C64::new(0.0, 0.0));
        rho[(0, 0)] = C64::new(1.0, 0.0);
        for l in labels {
            let u = match *l {
                "x1" => pauli_rotation("XI", half).unwrap(),
                "x2" => pauli_rotation("IX", half).unwrap(),
                "z1" => pauli_rotation("ZI", half).unwrap(),
                "z2" => pauli_rotation("IZ", half).unwrap(),
                "cz" => cz_unitary(),
                _ => unreachable!(),
            };
            rho = &u * rho * u.adjoint();
        }
        // odd parity: |01⟩, |10⟩
        rho[(1, 1)].re + rho[(2, 2)].re
    }

    #[test]
    fn cz_variant_uses_cz_ptm() {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let cz = gs.gate(&"cz".into()).unwrap();
        assert_eq!(cz.ideal, ptm_from_unitary(&cz_unitary()).unwrap());
        assert_eq!(gs.labels().len(), 5);
    }

    #[test]
    fn z1_rotates_xi_into_yi() {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let z1 = gs.gate(&"z1".into()).unwrap().ideal.matrix().clone();
        let b = PauliBasis::get(2);
        let i = |l: &str| b.index_of(l).unwrap();
        assert!((z1[(i("YI"), i("XI"))] - 1.0).abs() < 1e-12);
        assert!((z1[(i("XI"), i("YI"))] + 1.0).abs() < 1e-12);
        assert!((z1[(i("ZI"), i("ZI"))] - 1.0).abs() < 1e-12);
        for l in ["IX", "IY", "IZ"] {
            assert!((z1[(i(l), i(l))] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dcz_squares_to_identity_up_to_global_phase() {
        let u = dcz_unitary([0.0, 0.0]);
        let sq = &u * &u;
        let phase = sq[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        let scaled = sq / phase;
        assert!((scaled - DMatrix::<C64>::identity(4, 4)).norm() < 1e-12);
        // it is a controlled phase: diagonal with a single -1
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Dcz);
        let r = &gs.gate(&"dcz".into()).unwrap().ideal;
        assert!((r.matrix() * r.matrix() - DMatrix::<f64>::identity(16, 16)).norm() < 1e-12);
    }

    #[test]
    fn basic_outcomes() {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        assert!(gs.exact_outcome(&GateSequence::empty()).unwrap().abs() < 1e-15);
        assert!((gs.exact_outcome(&seq("x2 x2")).unwrap() - 1.0).abs() < 1e-12);
        let p = gs.exact_outcome(&seq("x1")).unwrap();
        assert!((p - evolve(&["x1"])).abs() < 1e-12);
        assert!((p - 0.5).abs() < 1e-12);
        assert!(matches!(
            gs.exact_outcome(&seq("x1 bogus")),
            Err(FbtError::UnknownGate(_))
        ));
    }

    #[test]
    fn ideal_outcomes_match_density_matrix_evolution_without_clamping() {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let labels = ["x1", "x2", "z1", "z2", "cz"];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let len = rand::Rng::random_range(&mut rng, 0..20);
            let s: Vec<&str> = (0..len)
                .map(|_| labels[rand::Rng::random_range(&mut rng, 0..5)])
                .collect();
            let p = gs.outcome_raw(&s.iter().copied().collect(), None).unwrap();
            assert!((-1e-10..=1.0 + 1e-10).contains(&p));
            assert!((p - evolve(&s)).abs() < 1e-10);
        }
    }

    #[test]
    fn document_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut gs = ideal_two_qubit_gateset(TwoQubitGate::Dcz);
        for l in gs.labels() {
            gs.set_noise(&l, random_cptp_near_identity(2, 0.03, &mut rng)).unwrap();
        }
        gs.set_effect_noise(random_cptp_near_identity(2, 0.03, &mut rng)).unwrap();
        let text = gs.to_json();
        let back = NoisyGateSet::from_json(&text).unwrap();
        assert_eq!(back, gs);
    }

    #[test]
    fn malformed_matrix_reports_field_path() {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let mut doc = gs.to_document();
        doc.gates[2].ideal.pop();
        let err = NoisyGateSet::from_document(&doc).unwrap_err();
        assert!(err.to_string().starts_with("gates[2].ideal"), "{err}");

        let text = gs.to_json().replacen("\"rho0\": [", "\"rho0\": [\"oops\", ", 1);
        let err = NoisyGateSet::from_json(&text).unwrap_err();
        assert!(err.to_string().starts_with("rho0"), "{err}");
    }
}
