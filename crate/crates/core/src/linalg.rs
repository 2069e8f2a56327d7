//! Dense matrix functions on small real matrices.

use nalgebra::{DMatrix, Schur};

use crate::error::{FbtError, Result};

/// Eigenvalues closer than this to the closed negative real axis (or zero)
/// are rejected by [`logm`].
pub const BRANCH_CUT_TOLERANCE: f64 = 1e-8;

// 8-point Gauss-Legendre rule on [0, 1]; equals the [8/8] Padé approximant
// of log(1 + x).
const GL_NODES: [f64; 8] = [
    0.019_855_071_751_231_856,
    0.101_666_761_293_186_63,
    0.237_233_795_041_835_5,
    0.408_282_678_752_175_1,
    0.591_717_321_247_824_9,
    0.762_766_204_958_164_5,
    0.898_333_238_706_813_4,
    0.980_144_928_248_768_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.050_614_268_145_188_13,
    0.111_190_517_226_687_24,
    0.156_853_322_938_943_64,
    0.181_341_891_689_181_0,
    0.181_341_891_689_181_0,
    0.156_853_322_938_943_64,
    0.111_190_517_226_687_24,
    0.050_614_268_145_188_13,
];

// ‖T − I‖₁ threshold below which the Padé approximant is accurate to
// roughly unit roundoff.
const PADE_THRESHOLD: f64 = 0.25;
const MAX_SQRTS: usize = 64;

pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().exp()
}

/// Diagonal blocks of a real quasi-triangular matrix as `(start, size)`.
fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n {
            let sub = t[(i + 1, i)].abs();
            let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
            if sub > f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
                blocks.push((i, 2));
                i += 2;
                continue;
            }
        }
        blocks.push((i, 1));
        i += 1;
    }
    blocks
}

fn check_block_spectrum(t: &DMatrix<f64>, start: usize, size: usize) -> Result<()> {
    let reject = |re: f64, im: f64, distance: f64| {
        Err(FbtError::BranchCut { re, im, distance })
    };
    if size == 1 {
        let v = t[(start, start)];
        if v <= BRANCH_CUT_TOLERANCE {
            return reject(v, 0.0, v.max(0.0));
        }
        return Ok(());
    }
    let (a, b, c, d) = (
        t[(start, start)],
        t[(start, start + 1)],
        t[(start + 1, start)],
        t[(start + 1, start + 1)],
    );
    let half_tr = 0.5 * (a + d);
    let det = a * d - b * c;
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        for ev in [half_tr - s, half_tr + s] {
            if ev <= BRANCH_CUT_TOLERANCE {
                return reject(ev, 0.0, ev.max(0.0));
            }
        }
    } else {
        let im = (-disc).sqrt();
        if half_tr <= 0.0 && im < BRANCH_CUT_TOLERANCE {
            return reject(half_tr, im, im);
        }
    }
    Ok(())
}

/// Principal square root of a 1×1 or 2×2 block with no eigenvalues on the
/// closed negative real axis.
fn block_sqrt(block: &DMatrix<f64>) -> DMatrix<f64> {
    if block.nrows() == 1 {
        return DMatrix::from_element(1, 1, block[(0, 0)].sqrt());
    }
    // sqrt(A) = (A + sI) / t with s = sqrt(det A), t = sqrt(tr A + 2s)
    let s = block.determinant().sqrt();
    let t = (block.trace() + 2.0 * s).sqrt();
    (block + DMatrix::identity(2, 2) * s) / t
}

/// Solve `A X + X B = C` for small blocks via the Kronecker form.
fn solve_block_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (p, q) = (a.nrows(), b.nrows());
    let ip = DMatrix::<f64>::identity(p, p);
    let iq = DMatrix::<f64>::identity(q, q);
    let k = iq.kronecker(a) + b.transpose().kronecker(&ip);
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or(FbtError::Singular("quasi-triangular square root"))?;
    Ok(DMatrix::from_column_slice(p, q, x.as_slice()))
}

/// Principal square root of a real quasi-upper-triangular matrix, block
/// column by block column.
fn quasi_triangular_sqrt(t: &DMatrix<f64>, blocks: &[(usize, usize)]) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let mut r = DMatrix::zeros(n, n);
    for (j, &(sj, nj)) in blocks.iter().enumerate() {
        let diag = block_sqrt(&t.view((sj, sj), (nj, nj)).into_owned());
        r.view_mut((sj, sj), (nj, nj)).copy_from(&diag);
        for i in (0..j).rev() {
            let (si, ni) = blocks[i];
            let mut rhs = t.view((si, sj), (ni, nj)).into_owned();
            for &(sk, nk) in &blocks[i + 1..j] {
                rhs -= r.view((si, sk), (ni, nk)) * r.view((sk, sj), (nk, nj));
            }
            let rii = r.view((si, si), (ni, ni)).into_owned();
            let rjj = r.view((sj, sj), (nj, nj)).into_owned();
            let x = solve_block_sylvester(&rii, &rjj, &rhs)?;
            r.view_mut((si, sj), (ni, nj)).copy_from(&x);
        }
    }
    Ok(r)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Real principal matrix logarithm by inverse scaling and squaring on the
/// real Schur form.
///
/// Fails with [`FbtError::BranchCut`] when an eigenvalue is zero, negative
/// real, or within [`BRANCH_CUT_TOLERANCE`] of the negative real axis.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(FbtError::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(FbtError::NonFinite("logm input"));
    }
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or(FbtError::NoConvergence("real Schur decomposition"))?;
    let (q, mut t) = schur.unpack();
    // Clean the strictly lower part outside the 2x2 blocks.
    let blocks = schur_blocks(&t);
    for col in 0..n {
        for row in col + 1..n {
            let in_block = blocks
                .iter()
                .any(|&(s, size)| size == 2 && row == s + 1 && col == s);
            if !in_block {
                t[(row, col)] = 0.0;
            }
        }
    }
    for &(start, size) in &blocks {
        check_block_spectrum(&t, start, size)?;
    }

    let identity = DMatrix::<f64>::identity(n, n);
    let mut squarings = 0;
    while one_norm(&(&t - &identity)) > PADE_THRESHOLD {
        if squarings == MAX_SQRTS {
            return Err(FbtError::NoConvergence("inverse scaling and squaring"));
        }
        t = quasi_triangular_sqrt(&t, &blocks)?;
        squarings += 1;
    }

    let x = &t - &identity;
    let mut log_t = DMatrix::zeros(n, n);
    for (&node, &weight) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        let denom = &identity + &x * node;
        let term = denom
            .lu()
            .solve(&x)
            .ok_or(FbtError::Singular("Padé denominator"))?;
        log_t += term * weight;
    }
    log_t *= (1u64 << squarings) as f64;
    let out = &q * log_t * q.transpose();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(FbtError::NonFinite("logm output"));
    }
    Ok(out)
}

/// 2-norm condition number.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
