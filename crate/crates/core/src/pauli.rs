//! Pauli bases, Pauli transfer matrices and Choi matrices.
//!
//! Conventions used everywhere in the crate:
//!
//! * Pauli strings are unnormalized (`P² = I`), ordered lexicographically in
//!   `{I, X, Y, Z}` with qubit 1 as the leftmost label and the leftmost tensor
//!   factor. Index 0 is the identity string.
//! * Operators are vectorized in the normalized basis `P/√d`, so
//!   `⟨⟨A|B⟩⟩ = Tr(A†B)` and `|ρ⟩⟩₀ = 1/√d` for any unit-trace state.
//! * PTM entries are `R[i][j] = Tr(Pᵢ Φ(Pⱼ)) / d`.
//! * Choi matrices are `J = Σ_ab Φ(|a⟩⟨b|) ⊗ |a⟩⟨b|` (output factor first), so
//!   a trace-preserving channel has `Tr J = d`. The map `R ↦ J` is a
//!   Frobenius isometry.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{FbtError, Result};

pub type C64 = Complex<f64>;

const MAX_QUBITS: usize = 4;

/// Pauli string stored as a monomial matrix: row `r` holds `phases[r]` in
/// column `cols[r]`.
#[derive(Clone, Debug)]
struct Monomial {
    cols: Vec<usize>,
    phases: Vec<C64>,
    // row index of the nonzero in each column
    rows: Vec<usize>,
}

#[derive(Debug)]
pub struct PauliBasis {
    n_qubits: usize,
    dim: usize,
    labels: Vec<String>,
    matrices: Vec<DMatrix<C64>>,
    monomials: Vec<Monomial>,
}

impl PauliBasis {
    fn build(n_qubits: usize) -> Self {
        assert!(
            (1..=MAX_QUBITS).contains(&n_qubits),
            "pauli basis supports 1..={MAX_QUBITS} qubits"
        );
        let zero = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        // (cols, phases) for I, X, Y, Z
        let single: [([usize; 2], [C64; 2]); 4] = [
            ([0, 1], [one, one]),
            ([1, 0], [one, one]),
            ([1, 0], [-i, i]),
            ([0, 1], [one, -one]),
        ];
        let letters = ['I', 'X', 'Y', 'Z'];
        let dim = 1usize << n_qubits;
        let count = 1usize << (2 * n_qubits);

        let mut labels = Vec::with_capacity(count);
        let mut matrices = Vec::with_capacity(count);
        let mut monomials = Vec::with_capacity(count);
        for index in 0..count {
            // qubit 1 is the most significant base-4 digit
            let digits: Vec<usize> = (0..n_qubits)
                .map(|q| (index >> (2 * (n_qubits - 1 - q))) & 3)
                .collect();
            labels.push(digits.iter().map(|&k| letters[k]).collect::<String>());

            let mut cols = vec![0usize; dim];
            let mut phases = vec![one; dim];
            for (row, (col, phase)) in cols.iter_mut().zip(phases.iter_mut()).enumerate() {
                for (q, &k) in digits.iter().enumerate() {
                    let shift = n_qubits - 1 - q;
                    let bit = (row >> shift) & 1;
                    let (c, p) = single[k];
                    *col |= c[bit] << shift;
                    *phase *= p[bit];
                }
            }
            let mut rows = vec![0usize; dim];
            let mut m = DMatrix::from_element(dim, dim, zero);
            for r in 0..dim {
                rows[cols[r]] = r;
                m[(r, cols[r])] = phases[r];
            }
            matrices.push(m);
            monomials.push(Monomial { cols, phases, rows });
        }
        PauliBasis {
            n_qubits,
            dim,
            labels,
            matrices,
            monomials,
        }
    }

    /// Shared basis for `n_qubits` (1 to 4).
    pub fn get(n_qubits: usize) -> &'static PauliBasis {
        static CACHE: [OnceLock<PauliBasis>; MAX_QUBITS] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
        assert!(
            (1..=MAX_QUBITS).contains(&n_qubits),
            "pauli basis supports 1..={MAX_QUBITS} qubits"
        );
        CACHE[n_qubits - 1].get_or_init(|| PauliBasis::build(n_qubits))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Hilbert-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis elements, `d²`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Unnormalized Pauli string matrix.
    pub fn matrix(&self, index: usize) -> &DMatrix<C64> {
        &self.matrices[index]
    }

    /// Coefficients of a Hermitian operator in the normalized basis.
    pub fn vectorize(&self, op: &DMatrix<C64>) -> DVector<f64> {
        let norm = (self.dim as f64).sqrt();
        DVector::from_iterator(
            self.len(),
            self.monomials.iter().map(|p| {
                let mut tr = C64::new(0.0, 0.0);
                // Tr(P A) = Σ_r P[r, c_r] A[c_r, r]
                for r in 0..self.dim {
                    tr += p.phases[r] * op[(p.cols[r], r)];
                }
                tr.re / norm
            }),
        )
    }

    /// Inverse of [`vectorize`](Self::vectorize).
    pub fn operator(&self, v: &DVector<f64>) -> DMatrix<C64> {
        let norm = (self.dim as f64).sqrt();
        let mut out = DMatrix::from_element(self.dim, self.dim, C64::new(0.0, 0.0));
        for (p, &c) in self.monomials.iter().zip(v.iter()) {
            if c == 0.0 {
                continue;
            }
            for r in 0..self.dim {
                out[(r, p.cols[r])] += p.phases[r] * (c / norm);
            }
        }
        out
    }
}

fn qubits_for_len(len: usize) -> Option<usize> {
    (1..=MAX_QUBITS).find(|&n| 1usize << (2 * n) == len)
}

/// Real `d² × d²` superoperator in the Pauli basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Ptm(DMatrix<f64>);

impl Ptm {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(FbtError::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if qubits_for_len(matrix.nrows()).is_none() {
            return Err(FbtError::InvalidConfig(format!(
                "PTM dimension {} is not 4^n",
                matrix.nrows()
            )));
        }
        Ok(Ptm(matrix))
    }

    pub fn identity(n_qubits: usize) -> Self {
        let n = 1usize << (2 * n_qubits);
        Ptm(DMatrix::identity(n, n))
    }

    /// Uniform depolarizing channel `diag(1, 1-p, …, 1-p)`.
    pub fn depolarizing(n_qubits: usize, p: f64) -> Self {
        let n = 1usize << (2 * n_qubits);
        let mut m = DMatrix::identity(n, n) * (1.0 - p);
        m[(0, 0)] = 1.0;
        Ptm(m)
    }

    pub fn n_qubits(&self) -> usize {
        qubits_for_len(self.0.nrows()).expect("validated on construction")
    }

    /// Superoperator dimension `d²`.
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `self · first`: `first` acts before `self`.
    pub fn compose(&self, first: &Ptm) -> Result<Ptm> {
        compose(self, first)
    }

    /// Largest deviation of the first row from `e₁`.
    pub fn trace_preservation_defect(&self) -> f64 {
        (0..self.dim())
            .map(|j| (self.0[(0, j)] - if j == 0 { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.trace_preservation_defect() <= tol
    }

    pub fn is_unital(&self, tol: f64) -> bool {
        (0..self.dim()).all(|i| (self.0[(i, 0)] - if i == 0 { 1.0 } else { 0.0 }).abs() <= tol)
    }

    /// Entanglement fidelity `Tr(R)/d²`.
    pub fn entanglement_fidelity(&self) -> f64 {
        self.0.trace() / self.dim() as f64
    }
}

/// `a · b`, with `b` applied first.
pub fn compose(a: &Ptm, b: &Ptm) -> Result<Ptm> {
    if a.dim() != b.dim() {
        return Err(FbtError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(Ptm(&a.0 * &b.0))
}

/// PTM of `ρ ↦ UρU†`.
pub fn ptm_from_unitary(u: &DMatrix<C64>) -> Result<Ptm> {
    let d = u.nrows();
    if !u.is_square() || !d.is_power_of_two() || d < 2 {
        return Err(FbtError::DimensionMismatch {
            expected: d.next_power_of_two().max(2),
            got: u.ncols(),
        });
    }
    let deviation = (u.adjoint() * u - DMatrix::<C64>::identity(d, d)).norm();
    if !deviation.is_finite() || deviation > 1e-10 {
        return Err(FbtError::NotUnitary { deviation });
    }
    let basis = PauliBasis::get(d.trailing_zeros() as usize);
    // Liouville form of X ↦ UXU† on column-stacked vectors is conj(U) ⊗ U.
    let liouville = u.map(|z| z.conj()).kronecker(u);
    let n = basis.len();
    let stacked: Vec<DVector<C64>> = (0..n)
        .map(|j| DVector::from_column_slice(basis.matrix(j).as_slice()))
        .collect();
    let mut r = DMatrix::zeros(n, n);
    for j in 0..n {
        let image = &liouville * &stacked[j];
        for i in 0..n {
            r[(i, j)] = stacked[i].dotc(&image).re / d as f64;
        }
    }
    Ok(Ptm(r))
}

/// PTM of an arbitrary linear map given as a closure on operators.
pub fn ptm_from_map(n_qubits: usize, map: impl Fn(&DMatrix<C64>) -> DMatrix<C64>) -> Ptm {
    let basis = PauliBasis::get(n_qubits);
    let n = basis.len();
    let d = basis.dim() as f64;
    let mut r = DMatrix::zeros(n, n);
    for j in 0..n {
        let image = map(basis.matrix(j));
        let coeffs = basis.vectorize(&image);
        for i in 0..n {
            // vectorize divides by √d; R[i][j] = Tr(P_i Φ(P_j))/d
            r[(i, j)] = coeffs[i] / d.sqrt();
        }
    }
    Ptm(r)
}

/// PTM of the channel with the given Kraus operators.
pub fn ptm_from_kraus(kraus: &[DMatrix<C64>]) -> Result<Ptm> {
    let first = kraus
        .first()
        .ok_or_else(|| FbtError::InvalidConfig("no Kraus operators".into()))?;
    let d = first.nrows();
    if !d.is_power_of_two() || d < 2 {
        return Err(FbtError::DimensionMismatch {
            expected: d.next_power_of_two().max(2),
            got: d,
        });
    }
    Ok(ptm_from_map(d.trailing_zeros() as usize, |x| {
        kraus
            .iter()
            .map(|k| k * x * k.adjoint())
            .fold(DMatrix::from_element(d, d, C64::new(0.0, 0.0)), |acc, t| acc + t)
    }))
}

/// Hermitian `d² × d²` Choi matrix (trace `d` for TP channels).
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix(DMatrix<C64>);

impl ChoiMatrix {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() || qubits_for_len(matrix.nrows()).is_none() {
            return Err(FbtError::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        Ok(ChoiMatrix(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.0 - self.0.adjoint()).norm()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

pub fn ptm_to_choi(r: &Ptm) -> ChoiMatrix {
    let basis = PauliBasis::get(r.n_qubits());
    let d = basis.dim();
    let n = basis.len();
    let mut j = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    let scale = 1.0 / d as f64;
    for a in 0..n {
        let pa = &basis.monomials[a];
        for b in 0..n {
            let coeff = r.0[(a, b)];
            if coeff == 0.0 {
                continue;
            }
            let pb = &basis.monomials[b];
            // (P_a ⊗ P_bᵀ)[(r1,r2),(c1,c2)] with P_bᵀ[r2, c2] = P_b[c2, r2]
            for r1 in 0..d {
                let c1 = pa.cols[r1];
                let ph1 = pa.phases[r1] * (coeff * scale);
                for r2 in 0..d {
                    let c2 = pb.rows[r2];
                    let ph2 = pb.phases[c2];
                    j[(r1 * d + r2, c1 * d + c2)] += ph1 * ph2;
                }
            }
        }
    }
    ChoiMatrix(j)
}

pub fn choi_to_ptm(c: &ChoiMatrix) -> Result<Ptm> {
    let n_qubits = qubits_for_len(c.0.nrows()).ok_or(FbtError::DimensionMismatch {
        expected: 16,
        got: c.0.nrows(),
    })?;
    let basis = PauliBasis::get(n_qubits);
    let d = basis.dim();
    let n = basis.len();
    let mut r = DMatrix::zeros(n, n);
    for a in 0..n {
        let pa = &basis.monomials[a];
        for b in 0..n {
            let pb = &basis.monomials[b];
            // Tr(J K) with K = P_a ⊗ P_bᵀ; K[row, κ(row)] = φ(row)
            let mut tr = C64::new(0.0, 0.0);
            for r1 in 0..d {
                let c1 = pa.cols[r1];
                for r2 in 0..d {
                    let c2 = pb.rows[r2];
                    let phase = pa.phases[r1] * pb.phases[c2];
                    tr += c.0[(c1 * d + c2, r1 * d + r2)] * phase;
                }
            }
            r[(a, b)] = tr.re / d as f64;
        }
    }
    Ok(Ptm(r))
}

/// Single-qubit Pauli matrices `[I, X, Y, Z]`.
pub fn single_qubit_paulis() -> [DMatrix<C64>; 4] {
    let b = PauliBasis::get(1);
    [
        b.matrix(0).clone(),
        b.matrix(1).clone(),
        b.matrix(2).clone(),
        b.matrix(3).clone(),
    ]
}

/// `exp(-i θ/2 · P)` for a Pauli string `P`.
pub fn pauli_rotation(label: &str, theta: f64) -> Result<DMatrix<C64>> {
    let basis = PauliBasis::get(label.len().max(1));
    let idx = basis
        .index_of(label)
        .ok_or_else(|| FbtError::InvalidConfig(format!("unknown Pauli string `{label}`")))?;
    let d = basis.dim();
    let p = basis.matrix(idx);
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let s = C64::new(0.0, -(theta / 2.0).sin());
    Ok(DMatrix::<C64>::identity(d, d) * c + p * s)
}
