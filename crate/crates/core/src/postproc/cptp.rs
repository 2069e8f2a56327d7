//! Projection onto CPTP channels by Dykstra alternating projections in Choi
//! space.
//!
//! The PTM-to-Choi map is a Frobenius isometry, so the result is also the
//! nearest CPTP channel in PTM Frobenius distance. The TP set is the affine
//! subspace `Tr_out J = I`, which corresponds to resetting the first PTM row.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::pauli::{choi_to_ptm, ptm_to_choi, ChoiMatrix, Ptm, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CptpOptions {
    /// Stop when an iteration moves the iterate less than this (Frobenius).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CptpOptions {
    fn default() -> Self {
        CptpOptions {
            tolerance: 1e-10,
            max_iterations: 1000,
        }
    }
}

impl CptpOptions {
    /// Few iterations for Monte-Carlo sampling loops. The output is still
    /// exactly CPTP, only not necessarily the nearest such channel.
    pub fn sampling() -> Self {
        CptpOptions {
            tolerance: 1e-4,
            max_iterations: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CptpProjection {
    pub ptm: Ptm,
    pub iterations: usize,
    pub converged: bool,
    /// Frobenius distance between input and output.
    pub correction_norm: f64,
}

// Eigenvalues above this are treated as non-negative for the early exit.
const PSD_SLACK: f64 = 1e-14;

fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Writes the PSD part of the Hermitian matrix `m` into `out`.
fn project_psd_into(m: &DMatrix<C64>, out: &mut DMatrix<C64>) {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        out.copy_from(m);
        return;
    }
    let mut v = eig.eigenvectors;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        v.column_mut(k).scale_mut(s);
    }
    v.mul_to(&v.adjoint(), out);
}

/// Applies `J − I ⊗ (Tr_out J − I)/d` in place, the nearest matrix with
/// `Tr_out J = I`.
fn project_tp_in_place(m: &mut DMatrix<C64>, d: usize) {
    let scale = 1.0 / d as f64;
    for a in 0..d {
        for b in 0..d {
            let mut s = C64::new(0.0, 0.0);
            for o in 0..d {
                s += m[(o * d + a, o * d + b)];
            }
            if a == b {
                s -= C64::new(1.0, 0.0);
            }
            let c = s * scale;
            for o in 0..d {
                m[(o * d + a, o * d + b)] -= c;
            }
        }
    }
}

fn is_cptp(r: &Ptm, choi: &ChoiMatrix) -> bool {
    r.trace_preservation_defect() == 0.0 && choi.min_eigenvalue() >= -PSD_SLACK
}

/// Nearest CPTP channel to `r`. Inputs that are already CPTP are returned
/// unchanged.
pub fn cptp_project_with(r: &Ptm, options: &CptpOptions) -> CptpProjection {
    let choi = ptm_to_choi(r);
    if is_cptp(r, &choi) {
        return CptpProjection {
            ptm: r.clone(),
            iterations: 0,
            converged: true,
            correction_norm: 0.0,
        };
    }
    let d = 1usize << r.n_qubits();
    let n = d * d;
    let zero = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    let mut x = hermitian_part(choi.matrix());
    let (mut p, mut q) = (zero.clone(), zero.clone());
    let (mut y, mut next) = (zero.clone(), zero);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        iterations += 1;
        // y = P_tp(x + p); p ← x + p − y
        y.copy_from(&x);
        y += &p;
        p.copy_from(&y);
        project_tp_in_place(&mut y, d);
        p -= &y;
        // next = P_psd(y + q); q ← y + q − next
        q += &y;
        project_psd_into(&q, &mut next);
        q -= &next;
        x -= &next;
        let moved = x.norm();
        std::mem::swap(&mut x, &mut next);
        if moved < options.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        tracing::warn!(iterations, "CPTP projection did not converge; returning best iterate");
    }
    let mut out = choi_to_ptm(&ChoiMatrix::new(x).expect("square")).expect("valid dimension");
    // exact TP; the PSD error this introduces is bounded by the last movement
    let m = out.matrix_mut();
    m[(0, 0)] = 1.0;
    for j in 1..n {
        m[(0, j)] = 0.0;
    }
    // remove that residual by mixing in the fully depolarizing channel,
    // whose Choi matrix is I/d
    let lambda = ptm_to_choi(&out).min_eigenvalue();
    if lambda < 0.0 {
        let t = -lambda / (1.0 / d as f64 - lambda);
        let m = out.matrix_mut();
        *m *= 1.0 - t;
        m[(0, 0)] = 1.0;
    }
    let correction_norm = (out.matrix() - r.matrix()).norm();
    CptpProjection {
        ptm: out,
        iterations,
        converged,
        correction_norm,
    }
}

pub fn cptp_project(r: &Ptm) -> CptpProjection {
    cptp_project_with(r, &CptpOptions::default())
}
