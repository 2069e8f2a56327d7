//! Parity readout effects and projection-sequence bookkeeping.
//!
//! The native measurement reads odd parity. Even parity is obtained either by
//! a non-native effect or by appending the inversion prefix `[x2, x2]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FbtError, Result};
use crate::gateset::GateSequence;
use crate::pauli::{PauliBasis, C64};
use crate::records::ObservationRecord;

/// Vectorized two-qubit parity projectors `(odd, even)`.
///
/// `odd = |↑↓⟩⟨↑↓| + |↓↑⟩⟨↓↑|`, `even = |↑↑⟩⟨↑↑| + |↓↓⟩⟨↓↓|`, so the two sum to
/// the identity effect.
pub fn make_parity_effects() -> (DVector<f64>, DVector<f64>) {
    let basis = PauliBasis::get(2);
    let projector = |states: [usize; 2]| {
        let mut m = DMatrix::from_element(4, 4, C64::new(0.0, 0.0));
        for s in states {
            m[(s, s)] = C64::new(1.0, 0.0);
        }
        basis.vectorize(&m)
    };
    (projector([1, 2]), projector([0, 3]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub label: String,
    /// Gates appended to the main sequence before the native measurement.
    pub prefix: GateSequence,
    /// Effect equivalent to `prefix` followed by the native readout, if the
    /// gate set registers one. `None` means the prefix is empty.
    #[serde(default)]
    pub effect: Option<String>,
}

impl ProjectionSpec {
    pub fn odd() -> Self {
        ProjectionSpec {
            label: "odd".into(),
            prefix: GateSequence::empty(),
            effect: None,
        }
    }

    pub fn even() -> Self {
        ProjectionSpec {
            label: "even".into(),
            prefix: "x2 x2".parse().expect("static sequence"),
            effect: Some("even".into()),
        }
    }
}

/// Default projections: native odd readout and `[x2, x2]` inversion.
pub fn default_projections() -> Vec<ProjectionSpec> {
    vec![ProjectionSpec::odd(), ProjectionSpec::even()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOutcome {
    pub projection: String,
    pub freq: f64,
    pub shots: u32,
}

/// A main sequence measured under one or more projections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedRecord {
    pub sequence: GateSequence,
    pub outcomes: Vec<ProjectionOutcome>,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub batch: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnpackMode {
    /// One projection; prefix folded into a non-native effect.
    A(String),
    /// One projection; prefix appended to the sequence.
    B(String),
    /// All projections as effect rows sharing a linearization point.
    C,
    /// All projections, each appended as in `B`.
    D,
}

fn outcome<'a>(rec: &'a ProjectedRecord, label: &str) -> Result<&'a ProjectionOutcome> {
    rec.outcomes
        .iter()
        .find(|o| o.projection == label)
        .ok_or_else(|| FbtError::MissingProjection(label.to_string()))
}

fn spec<'a>(projections: &'a [ProjectionSpec], label: &str) -> Result<&'a ProjectionSpec> {
    projections
        .iter()
        .find(|p| p.label == label)
        .ok_or_else(|| FbtError::MissingProjection(label.to_string()))
}

fn folded(rec: &ProjectedRecord, p: &ProjectionSpec, o: &ProjectionOutcome) -> ObservationRecord {
    let mut r = ObservationRecord::new(rec.sequence.clone(), o.freq, o.shots);
    if !p.prefix.is_empty() {
        r.effect = Some(p.effect.clone().unwrap_or_else(|| p.label.clone()));
    }
    r.t = rec.t;
    r.batch = rec.batch;
    r
}

fn appended(rec: &ProjectedRecord, p: &ProjectionSpec, o: &ProjectionOutcome) -> ObservationRecord {
    let mut r = ObservationRecord::new(rec.sequence.then(&p.prefix), o.freq, o.shots);
    r.t = rec.t;
    r.batch = rec.batch;
    r
}

/// Converts projected records into scalar observation records.
pub fn unpack_to_native(
    records: &[ProjectedRecord],
    projections: &[ProjectionSpec],
    mode: &UnpackMode,
) -> Result<Vec<ObservationRecord>> {
    let mut out = Vec::new();
    for (k, rec) in records.iter().enumerate() {
        match mode {
            UnpackMode::A(label) => {
                let p = spec(projections, label)?;
                out.push(folded(rec, p, outcome(rec, label)?));
            }
            UnpackMode::B(label) => {
                let p = spec(projections, label)?;
                out.push(appended(rec, p, outcome(rec, label)?));
            }
            UnpackMode::C => {
                for p in projections {
                    let mut r = folded(rec, p, outcome(rec, &p.label)?);
                    r.group = Some(k as u64);
                    out.push(r);
                }
            }
            UnpackMode::D => {
                for p in projections {
                    out.push(appended(rec, p, outcome(rec, &p.label)?));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateset::{ideal_two_qubit_gateset, TwoQubitGate};

    fn record(seq: &str) -> ProjectedRecord {
        ProjectedRecord {
            sequence: seq.parse().unwrap(),
            outcomes: vec![
                ProjectionOutcome {
                    projection: "odd".into(),
                    freq: 0.25,
                    shots: 4,
                },
                ProjectionOutcome {
                    projection: "even".into(),
                    freq: 0.75,
                    shots: 4,
                },
            ],
            t: 2.0,
            batch: Some(1),
        }
    }

    #[test]
    fn effects_are_complete_and_related_by_inversion() {
        let (odd, even) = make_parity_effects();
        let id = PauliBasis::get(2).vectorize(&DMatrix::identity(4, 4));
        assert!((&odd + &even - id).norm() < 1e-12);

        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let x2 = gs.gate(&"x2".into()).unwrap().ideal.matrix().clone();
        let flipped = (&x2 * &x2).tr_mul(&odd);
        assert!((flipped - even).norm() < 1e-12);

        // |↑↓⟩ = |10⟩ is fully odd
        let mut s = DMatrix::from_element(4, 4, C64::new(0.0, 0.0));
        s[(2, 2)] = C64::new(1.0, 0.0);
        let v = PauliBasis::get(2).vectorize(&s);
        assert!((odd.dot(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mode_d_doubles_records() {
        let recs = vec![record("x1 cz"); 4220];
        let out = unpack_to_native(&recs, &default_projections(), &UnpackMode::D).unwrap();
        assert_eq!(out.len(), 8440);
        assert_eq!(out[0].sequence.len(), 2);
        assert_eq!(out[1].sequence.len(), 4);
        assert!(out.iter().all(|r| r.effect.is_none()));
    }

    #[test]
    fn mode_b_on_odd_matches_mode_a() {
        let recs = vec![record("x1")];
        let a = unpack_to_native(&recs, &default_projections(), &UnpackMode::A("odd".into()));
        let b = unpack_to_native(&recs, &default_projections(), &UnpackMode::B("odd".into()));
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn mode_a_even_uses_effect_and_mode_c_groups_rows() {
        let recs = vec![record("x1"), record("x2")];
        let a = unpack_to_native(&recs, &default_projections(), &UnpackMode::A("even".into()))
            .unwrap();
        assert_eq!(a[0].effect.as_deref(), Some("even"));
        assert_eq!(a[0].sequence.len(), 1);
        let c = unpack_to_native(&recs, &default_projections(), &UnpackMode::C).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[2].group, Some(1));
        assert_eq!(c[3].group, Some(1));
        assert_eq!(c[3].effect.as_deref(), Some("even"));
    }

    #[test]
    fn missing_projection_is_an_error() {
        let mut r = record("x1");
        r.outcomes.pop();
        let err = unpack_to_native(&[r], &default_projections(), &UnpackMode::D);
        assert!(matches!(err, Err(FbtError::MissingProjection(_))));
    }

    #[test]
    fn noiseless_odd_and_even_predictions_sum_to_one() {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Dcz);
        for s in ["", "x1", "x1 dcz x2", "z1 x2 x1 dcz z2 x1"] {
            let seq: GateSequence = s.parse().unwrap();
            let odd = gs.outcome_raw(&seq, None).unwrap();
            let even = gs.outcome_raw(&seq, Some("even")).unwrap();
            let even_b = gs.outcome_raw(&seq.then(&"x2 x2".parse().unwrap()), None).unwrap();
            assert!((odd + even - 1.0).abs() < 1e-12);
            assert!((even - even_b).abs() < 1e-12);
        }
    }
}
