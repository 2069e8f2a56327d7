//! Random unitaries and channels for tests and simulations.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::pauli::{ptm_from_kraus, ptm_from_unitary, Ptm, C64};

fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Haar-random `d × d` unitary.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<C64> {
    let qr = ginibre(d, d, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for k in 0..d {
        let diag = r[(k, k)];
        let phase = if diag.norm() > 0.0 { diag / diag.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..d {
            u[(row, k)] *= phase;
        }
    }
    u
}

/// Random CPTP channel on `n_qubits` with `n_kraus` Kraus operators.
pub fn random_cptp<R: Rng + ?Sized>(n_qubits: usize, n_kraus: usize, rng: &mut R) -> Ptm {
    let d = 1usize << n_qubits;
    // Stinespring: columns of a random isometry d -> d·k
    let g = ginibre(d * n_kraus, d, rng);
    let q = g.qr().q();
    let kraus: Vec<DMatrix<C64>> = (0..n_kraus)
        .map(|k| q.rows(k * d, d).into_owned())
        .collect();
    ptm_from_kraus(&kraus).expect("valid kraus set")
}

/// CPTP channel within roughly `strength` of the identity: a small random
/// unitary composed with a small admixture of a random channel.
pub fn random_cptp_near_identity<R: Rng + ?Sized>(
    n_qubits: usize,
    strength: f64,
    rng: &mut R,
) -> Ptm {
    let d = 1usize << n_qubits;
    let h = ginibre(d, d, rng);
    let h = (&h + h.adjoint()) * C64::new(0.5 * strength, 0.0);
    let u = (h * C64::new(0.0, -1.0)).exp();
    let unitary = ptm_from_unitary(&u).expect("exp of anti-Hermitian is unitary");
    let mix = random_cptp(n_qubits, 2, rng);
    let p = strength * rng.random::<f64>();
    let mixed = Ptm::identity(n_qubits).matrix() * (1.0 - p) + mix.matrix() * p;
    Ptm::new(unitary.matrix() * mixed).expect("square")
}
