//! Error-generator taxonomy: Hamiltonian (H), Pauli-stochastic (S),
//! Pauli-correlation (C) and active (A) elementary generators.
//!
//! For Pauli strings `P`, `Q` (unnormalized, `P² = I`):
//!
//! ```text
//! H_P[ρ]   = −i[P, ρ]
//! S_P[ρ]   = PρP − ρ
//! C_PQ[ρ]  = PρQ + QρP − ½{{P, Q}, ρ}
//! A_PQ[ρ]  = i(PρQ − QρP + ½{[P, Q], ρ})
//! ```
//!
//! Coefficients are read off with the dual frame obtained from the inverse
//! Gram matrix of the 240 elementary generators (two qubits).

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FbtError, Result};
use crate::linalg::logm;
use crate::pauli::{ptm_from_map, PauliBasis, Ptm, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GeneratorClass {
    H,
    S,
    C,
    A,
}

impl fmt::Display for GeneratorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GeneratorClass::H => "H",
            GeneratorClass::S => "S",
            GeneratorClass::C => "C",
            GeneratorClass::A => "A",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneratorLabel {
    pub class: GeneratorClass,
    pub p: String,
    /// Second Pauli for C and A generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<String>,
}

impl fmt::Display for GeneratorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.q {
            Some(q) => write!(f, "{}_{},{}", self.class, self.p, q),
            None => write!(f, "{}_{}", self.class, self.p),
        }
    }
}

impl FromStr for GeneratorLabel {
    type Err = FbtError;

    /// Parses `H_IZ`, `S_ZI`, `C_XI,ZZ` or `A_XI,ZZ`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || FbtError::InvalidConfig(format!("malformed generator label `{s}`"));
        let (class, rest) = s.split_once('_').ok_or_else(bad)?;
        let class = match class {
            "H" => GeneratorClass::H,
            "S" => GeneratorClass::S,
            "C" => GeneratorClass::C,
            "A" => GeneratorClass::A,
            _ => return Err(bad()),
        };
        let (p, q) = match rest.split_once(',') {
            Some((p, q)) => (p.to_string(), Some(q.to_string())),
            None => (rest.to_string(), None),
        };
        let paired = matches!(class, GeneratorClass::C | GeneratorClass::A);
        if p.is_empty() || paired != q.is_some() {
            return Err(bad());
        }
        Ok(GeneratorLabel { class, p, q })
    }
}

/// Elementary generators as PTMs with their dual frame.
pub struct GeneratorFrame {
    n_qubits: usize,
    labels: Vec<GeneratorLabel>,
    generators: Vec<DMatrix<f64>>,
    duals: Vec<DMatrix<f64>>,
}

fn mul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b
}

impl GeneratorFrame {
    fn build(n_qubits: usize) -> Result<Self> {
        let basis = PauliBasis::get(n_qubits);
        let count = basis.len();
        let i = C64::new(0.0, 1.0);
        let half = C64::new(0.5, 0.0);
        let mut labels = Vec::new();
        let mut generators = Vec::new();
        for a in 1..count {
            let p = basis.matrix(a).clone();
            labels.push(GeneratorLabel {
                class: GeneratorClass::H,
                p: basis.label(a).to_string(),
                q: None,
            });
            generators.push(
                ptm_from_map(n_qubits, |r| (mul(&p, r) - mul(r, &p)) * (-i)).into_matrix(),
            );
        }
        for a in 1..count {
            let p = basis.matrix(a).clone();
            labels.push(GeneratorLabel {
                class: GeneratorClass::S,
                p: basis.label(a).to_string(),
                q: None,
            });
            generators.push(ptm_from_map(n_qubits, |r| mul(&mul(&p, r), &p) - r).into_matrix());
        }
        for class in [GeneratorClass::C, GeneratorClass::A] {
            for a in 1..count {
                for b in a + 1..count {
                    let p = basis.matrix(a).clone();
                    let q = basis.matrix(b).clone();
                    labels.push(GeneratorLabel {
                        class,
                        p: basis.label(a).to_string(),
                        q: Some(basis.label(b).to_string()),
                    });
                    let g = match class {
                        GeneratorClass::C => {
                            let pq = mul(&p, &q) + mul(&q, &p);
                            ptm_from_map(n_qubits, |r| {
                                mul(&mul(&p, r), &q) + mul(&mul(&q, r), &p)
                                    - (mul(&pq, r) + mul(r, &pq)) * half
                            })
                        }
                        _ => {
                            let comm = mul(&p, &q) - mul(&q, &p);
                            ptm_from_map(n_qubits, |r| {
                                (mul(&mul(&p, r), &q) - mul(&mul(&q, r), &p)
                                    + (mul(&comm, r) + mul(r, &comm)) * half)
                                    * i
                            })
                        }
                    };
                    generators.push(g.into_matrix());
                }
            }
        }
        let k = generators.len();
        let gram = DMatrix::from_fn(k, k, |r, c| generators[r].dot(&generators[c]));
        let inv = gram
            .clone()
            .try_inverse()
            .ok_or(FbtError::Singular("generator Gram matrix"))?;
        let duals = (0..k)
            .map(|r| {
                let mut d = DMatrix::zeros(count, count);
                for (c, g) in generators.iter().enumerate() {
                    let w = inv[(r, c)];
                    if w != 0.0 {
                        d += g * w;
                    }
                }
                d
            })
            .collect();
        Ok(GeneratorFrame {
            n_qubits,
            labels,
            generators,
            duals,
        })
    }

    /// Cached frame for `n_qubits` (1 or 2).
    pub fn get(n_qubits: usize) -> &'static GeneratorFrame {
        static FRAMES: [OnceLock<GeneratorFrame>; 2] = [OnceLock::new(), OnceLock::new()];
        assert!((1..=2).contains(&n_qubits), "generator frames cover 1 or 2 qubits");
        FRAMES[n_qubits - 1]
            .get_or_init(|| GeneratorFrame::build(n_qubits).expect("standard frame is invertible"))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[GeneratorLabel] {
        &self.labels
    }

    pub fn generator(&self, k: usize) -> &DMatrix<f64> {
        &self.generators[k]
    }

    pub fn dual(&self, k: usize) -> &DMatrix<f64> {
        &self.duals[k]
    }

    pub fn index_of_label(&self, label: &GeneratorLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn index_of(&self, class: GeneratorClass, p: &str, q: Option<&str>) -> Option<usize> {
        self.labels
            .iter()
            .position(|l| l.class == class && l.p == p && l.q.as_deref() == q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub label: GeneratorLabel,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorGeneratorDecomposition {
    pub h: Vec<Coefficient>,
    pub s: Vec<Coefficient>,
    pub c: Vec<Coefficient>,
    pub a: Vec<Coefficient>,
    /// Frobenius norm of `L − Σ coeff·generator`.
    pub residual_norm: f64,
}

impl ErrorGeneratorDecomposition {
    pub fn iter(&self) -> impl Iterator<Item = &Coefficient> {
        self.h.iter().chain(&self.s).chain(&self.c).chain(&self.a)
    }

    /// Coefficient by label, e.g. `("H", "IZ", None)`.
    pub fn get(&self, class: GeneratorClass, p: &str, q: Option<&str>) -> Option<f64> {
        self.iter()
            .find(|c| c.label.class == class && c.label.p == p && c.label.q.as_deref() == q)
            .map(|c| c.value)
    }

    pub fn hamiltonian(&self, p: &str) -> Option<f64> {
        self.get(GeneratorClass::H, p, None)
    }

    pub fn stochastic(&self, p: &str) -> Option<f64> {
        self.get(GeneratorClass::S, p, None)
    }
}

/// Principal logarithm of a noise channel.
pub fn error_generator(noise: &Ptm) -> Result<DMatrix<f64>> {
    logm(noise.matrix())
}

pub fn decompose_generator(l: &DMatrix<f64>) -> Result<ErrorGeneratorDecomposition> {
    let n = l.nrows();
    let n_qubits = match n {
        4 => 1,
        16 => 2,
        _ => {
            return Err(FbtError::DimensionMismatch {
                expected: 16,
                got: n,
            })
        }
    };
    if l.ncols() != n {
        return Err(FbtError::DimensionMismatch {
            expected: n,
            got: l.ncols(),
        });
    }
    let frame = GeneratorFrame::get(n_qubits);
    let mut out = ErrorGeneratorDecomposition {
        h: Vec::new(),
        s: Vec::new(),
        c: Vec::new(),
        a: Vec::new(),
        residual_norm: 0.0,
    };
    let mut reconstruction = DMatrix::zeros(n, n);
    for k in 0..frame.len() {
        let value = frame.dual(k).dot(l);
        reconstruction += frame.generator(k) * value;
        let coeff = Coefficient {
            label: frame.labels()[k].clone(),
            value,
        };
        match coeff.label.class {
            GeneratorClass::H => out.h.push(coeff),
            GeneratorClass::S => out.s.push(coeff),
            GeneratorClass::C => out.c.push(coeff),
            GeneratorClass::A => out.a.push(coeff),
        }
    }
    out.residual_norm = (l - reconstruction).norm();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub label: GeneratorLabel,
    /// `h²` for Hamiltonian generators, `s` for stochastic ones.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfidelityReport {
    pub eps_ent: f64,
    pub eps_j: f64,
    pub theta_j_sq: f64,
    /// H and S contributions with non-negative values, largest first.
    pub contributions: Vec<Contribution>,
    /// Negative stochastic contributions, most negative first.
    pub negative: Vec<Contribution>,
    pub decomposition: ErrorGeneratorDecomposition,
}

impl InfidelityReport {
    pub fn top(&self, k: usize) -> &[Contribution] {
        &self.contributions[..k.min(self.contributions.len())]
    }
}

/// `ε_ent = 1 − Tr(Λ)/d²` together with its generator-level split
/// `ε_J = Σ s_P` and `θ_J² = Σ h_P²`.
pub fn infidelity_report(noise: &Ptm) -> Result<InfidelityReport> {
    let eps_ent = 1.0 - noise.entanglement_fidelity();
    let l = error_generator(noise)?;
    let decomposition = decompose_generator(&l)?;
    let eps_j = decomposition.s.iter().map(|c| c.value).sum();
    let theta_j_sq = decomposition.h.iter().map(|c| c.value * c.value).sum();
    let mut contributions = Vec::new();
    let mut negative = Vec::new();
    for c in &decomposition.h {
        contributions.push(Contribution {
            label: c.label.clone(),
            value: c.value * c.value,
        });
    }
    for c in &decomposition.s {
        let entry = Contribution {
            label: c.label.clone(),
            value: c.value,
        };
        if c.value < 0.0 {
            negative.push(entry);
        } else {
            contributions.push(entry);
        }
    }
    contributions.sort_by(|a, b| b.value.total_cmp(&a.value));
    negative.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(InfidelityReport {
        eps_ent,
        eps_j,
        theta_j_sq,
        contributions,
        negative,
        decomposition,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub label: String,
    pub class: GeneratorClass,
    pub coefficient: f64,
    pub contribution: f64,
}

/// Flat `(label, class, coefficient, contribution)` rows. C and A generators
/// do not enter the infidelity at first order and carry contribution 0.
pub fn decomposition_table(d: &ErrorGeneratorDecomposition) -> Vec<DecompositionRow> {
    d.iter()
        .map(|c| DecompositionRow {
            label: c.label.to_string(),
            class: c.label.class,
            coefficient: c.value,
            contribution: match c.label.class {
                GeneratorClass::H => c.value * c.value,
                GeneratorClass::S => c.value,
                _ => 0.0,
            },
        })
        .collect()
}

pub fn decomposition_csv(d: &ErrorGeneratorDecomposition) -> String {
    let mut out = String::from("label,class,coefficient,contribution\n");
    for r in decomposition_table(d) {
        out.push_str(&format!("{},{},{:e},{:e}\n", r.label, r.class, r.coefficient, r.contribution));
    }
    out
}

/// Sum of `coeff · generator` over a coefficient map, for building test
/// generators.
pub fn generator_from_coefficients(
    n_qubits: usize,
    terms: &[(GeneratorClass, &str, Option<&str>, f64)],
) -> Result<DMatrix<f64>> {
    let frame = GeneratorFrame::get(n_qubits);
    let n = 1usize << (2 * n_qubits);
    let mut l = DMatrix::zeros(n, n);
    for &(class, p, q, v) in terms {
        let k = frame.index_of(class, p, q).ok_or_else(|| {
            FbtError::InvalidConfig(format!("unknown generator {class}_{p}{}", q.map(|q| format!(",{q}")).unwrap_or_default()))
        })?;
        l += frame.generator(k) * v;
    }
    Ok(l)
}

/// Flattened generator coefficients in frame order.
pub fn coefficient_vector(d: &ErrorGeneratorDecomposition) -> DVector<f64> {
    DVector::from_iterator(
        d.h.len() + d.s.len() + d.c.len() + d.a.len(),
        d.iter().map(|c| c.value),
    )
}
