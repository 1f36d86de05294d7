use crate::error::{Error, Result};

use super::{matvec, Matrix, Rng};

const MAX_SWEEPS: usize = 100;
const INPUT_SYMMETRY_TOL: f64 = 1e-8;

/// Eigenvalues (descending) and matching unit eigenvectors stored as the
/// columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Eigenvalues of a symmetric matrix, sorted descending.
///
/// See [`sym_eig_with_vectors`] for the contract.
pub fn sym_eig(m: &Matrix, tol: f64) -> Result<Vec<f64>> {
    sym_eig_with_vectors(m, tol).map(|e| e.values)
}

/// Cyclic Jacobi eigendecomposition of a (numerically) symmetric matrix.
///
/// The input is symmetrized as `(m + mᵀ)/2` first; inputs whose symmetry
/// defect exceeds `1e-8·(1 + max|m|)` are rejected. Every returned pair
/// satisfies `‖Mq − λq‖₂ ≤ tol·‖M‖_F`, otherwise the call fails with
/// [`Error::NoConvergence`].
pub fn sym_eig_with_vectors(m: &Matrix, tol: f64) -> Result<SymEigen> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let defect = m.symmetry_defect();
    if defect > INPUT_SYMMETRY_TOL * (1.0 + m.max_abs()) {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric (defect {defect:e})"
        )));
    }
    let n = m.rows();
    let sym = m.symmetrized();
    let mut a = sym.clone();
    let mut v = Matrix::identity(n);
    let scale = sym.frobenius_norm();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum();
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            context: "jacobi eigendecomposition",
            iterations: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);

    let bound = tol * scale;
    for (k, &lambda) in values.iter().enumerate() {
        let q: Vec<f64> = (0..n).map(|r| vectors[(r, k)]).collect();
        let mq = matvec(&sym, &q)?;
        let residual = mq
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual > bound {
            return Err(Error::NoConvergence {
                context: "jacobi eigendecomposition residual",
                iterations: MAX_SWEEPS,
            });
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Applies the plane rotation that annihilates `a[p][q]`: `A ← JᵀAJ`,
/// `V ← VJ`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Largest singular value by power iteration on `mᵀm`.
///
/// The start vector is drawn from `Rng::new(seed)`. Returns the best
/// Rayleigh-quotient estimate seen, so the result is nondecreasing in
/// `iters` for a fixed seed. A zero matrix yields 0.
pub fn power_iteration_sigma_max(m: &Matrix, iters: usize, seed: u64) -> f64 {
    let iters = iters.max(1);
    let mut rng = Rng::new(seed);
    let mut v: Vec<f64> = (0..m.cols()).map(|_| rng.normal()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    v.iter_mut().for_each(|x| *x /= norm);

    let mt = m.transpose();
    let mut best: f64 = 0.0;
    for _ in 0..iters {
        let w = matvec(m, &v).expect("shape fixed at construction");
        let rayleigh = w.norm_sq();
        best = best.max(rayleigh);
        let z = matvec(&mt, &w).expect("shape fixed at construction");
        let zn = z.norm();
        if zn == 0.0 {
            break;
        }
        v = z.iter().map(|x| x / zn).collect();
    }
    best.sqrt()
}
