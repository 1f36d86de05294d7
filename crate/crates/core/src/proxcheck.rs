//! Numerical check that a tied autoencoder `f(x) = Wᵀρ(Wx)` is a Moreau
//! proximity operator.
//!
//! Sufficient conditions: `ρ` is differentiable with `ρ' ∈ [0, 1]`, and the
//! singular values of `W` lie in `[0, 1]`. The consequence that can be
//! measured at a point is the Jacobian `Wᵀ·diag(ρ'(Wx))·W` being symmetric
//! with eigenvalues in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::autoencoder::{tied_jacobian, Autoencoder, Model, TiedAutoencoder};
use crate::error::{Error, Result};
use crate::numerics::{
    gemm, power_iteration_sigma_max, sym_eig, Matrix, Rng, Transpose, Vector, DEFAULT_POWER_ITERS,
};
use crate::parallel::map_indexed;

/// Step for the central-difference Jacobian comparison.
pub const FD_STEP: f64 = 1e-5;
/// Largest tolerated entrywise gap between analytic and numeric Jacobians.
pub const FD_TOL: f64 = 1e-5;
/// Relative symmetry tolerance: `max|J − Jᵀ| ≤ SYMMETRY_TOL·(1 + ‖J‖_F)`.
pub const SYMMETRY_TOL: f64 = 1e-8;

const GRID_MIN: f64 = -50.0;
const GRID_MAX: f64 = 50.0;
const GRID_STEP: f64 = 1e-3;
const POWER_SEED: u64 = 0x5eed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    PremiseViolated,
    ConclusionViolated,
    /// The model is not a tied two-layer autoencoder.
    OutOfScope,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Certified => "certified",
            Verdict::PremiseViolated => "premise_violated",
            Verdict::ConclusionViolated => "conclusion_violated",
            Verdict::OutOfScope => "out_of_scope",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxReport {
    pub premise_activation_ok: bool,
    /// Smallest and largest `ρ'` seen on the grid and at probe points.
    pub derivative_range: (f64, f64),
    pub activation_differentiable: bool,
    pub premise_sigma_ok: bool,
    pub sigma_max: f64,
    /// Worst `max|J − Jᵀ|` over probe points, before any symmetrization.
    pub jacobian_symmetry_defect: f64,
    pub eigen_min: f64,
    pub eigen_max: f64,
    pub analytic_vs_numeric_jacobian_maxerr: f64,
    pub probe_count: usize,
    pub tol: f64,
    pub verdict: Verdict,
}

impl ProxReport {
    /// Multi-line human-readable summary.
    pub fn summary(&self) -> String {
        format!(
            "verdict: {}\n\
             activation derivative range [{:.6}, {:.6}] differentiable={} -> {}\n\
             sigma_max(W) = {:.9} -> {}\n\
             jacobian symmetry defect {:.3e}\n\
             jacobian eigenvalues in [{:.9}, {:.9}] over {} probe points\n\
             analytic vs numeric jacobian max error {:.3e}",
            self.verdict,
            self.derivative_range.0,
            self.derivative_range.1,
            self.activation_differentiable,
            ok_str(self.premise_activation_ok),
            self.sigma_max,
            ok_str(self.premise_sigma_ok),
            self.jacobian_symmetry_defect,
            self.eigen_min,
            self.eigen_max,
            self.probe_count,
            self.analytic_vs_numeric_jacobian_maxerr,
        )
    }
}

fn ok_str(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "violated"
    }
}

/// Central-difference Jacobian; column `j` is
/// `(f(x + h·e_j) − f(x − h·e_j)) / (2h)`.
pub fn numeric_jacobian<A: Autoencoder + ?Sized>(f: &A, x: &[f64], h: f64) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {h}")));
    }
    let d = x.len();
    if f.dim() != d {
        return Err(Error::dims("jacobian point", f.dim(), d));
    }
    let mut jac = Matrix::zeros(d, d);
    let mut probe = x.to_vec();
    for j in 0..d {
        probe[j] = x[j] + h;
        let plus = f.forward(&probe)?;
        probe[j] = x[j] - h;
        let minus = f.forward(&probe)?;
        probe[j] = x[j];
        for i in 0..d {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// `Wᵀ·diag(ρ'(Wx))·W` as computed, without mirroring.
fn raw_jacobian(ae: &TiedAutoencoder, x: &[f64]) -> Result<Matrix> {
    let slopes = ae.activation().deriv(&ae.encode_linear(x)?);
    let w = ae.weight();
    let mut scaled = w.clone();
    for (k, s) in slopes.iter().enumerate() {
        scaled.row_mut(k).iter_mut().for_each(|v| *v *= s);
    }
    let mut j = Matrix::zeros(w.cols(), w.cols());
    gemm(1.0, w, Transpose::Yes, &scaled, Transpose::No, 0.0, &mut j)?;
    Ok(j)
}

struct ProbeResult {
    deriv_min: f64,
    deriv_max: f64,
    symmetry_ok: bool,
    symmetry_defect: f64,
    eigen_min: f64,
    eigen_max: f64,
    fd_err: f64,
}

fn probe(ae: &TiedAutoencoder, x: &[f64], tol: f64) -> Result<ProbeResult> {
    let act = ae.activation();
    let slopes = act.deriv(&ae.encode_linear(x)?);
    let deriv_min = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let deriv_max = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let raw = raw_jacobian(ae, x)?;
    let symmetry_defect = raw.symmetry_defect();
    let symmetry_ok = symmetry_defect <= SYMMETRY_TOL * (1.0 + raw.frobenius_norm());

    let jac = tied_jacobian(ae, x)?.matrix;
    let eig = sym_eig(&jac, tol.max(1e-10))?;
    let eigen_max = eig.first().copied().unwrap_or(0.0);
    let eigen_min = eig.last().copied().unwrap_or(0.0);

    let fd = numeric_jacobian(ae, x, FD_STEP)?;
    Ok(ProbeResult {
        deriv_min,
        deriv_max,
        symmetry_ok,
        symmetry_defect,
        eigen_min,
        eigen_max,
        fd_err: fd.max_abs_diff(&jac),
    })
}

/// Checks the premises globally and the Jacobian conclusions at every
/// probe point; the verdict reflects the worst case.
///
/// Premises: `ρ` differentiable, `ρ'` within `[0, 1]` on a dense grid over
/// `[−50, 50]`, at the probe pre-activations, and in closed form; and
/// `σ₁(W) ≤ 1 + tol`. Conclusions: symmetry within [`SYMMETRY_TOL`],
/// eigenvalues within `[−tol, 1 + tol]`, analytic Jacobian within
/// [`FD_TOL`] of central differences.
pub fn check_moreau(ae: &TiedAutoencoder, probe_points: &[Vector], tol: f64) -> Result<ProxReport> {
    if probe_points.is_empty() {
        return Err(Error::Empty("probe points"));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be >= 0, got {tol}"
        )));
    }
    let act = ae.activation();
    let steps = ((GRID_MAX - GRID_MIN) / GRID_STEP).round() as usize;
    let (mut dmin, mut dmax) = (0..=steps)
        .map(|i| act.deriv_scalar(GRID_MIN + i as f64 * GRID_STEP))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });

    let probes = map_indexed(probe_points, |_, x| probe(ae, x, tol))?;
    let mut report = ProxReport {
        premise_activation_ok: false,
        derivative_range: (0.0, 0.0),
        activation_differentiable: act.is_differentiable(),
        premise_sigma_ok: false,
        sigma_max: power_iteration_sigma_max(ae.weight(), DEFAULT_POWER_ITERS, POWER_SEED),
        jacobian_symmetry_defect: 0.0,
        eigen_min: f64::INFINITY,
        eigen_max: f64::NEG_INFINITY,
        analytic_vs_numeric_jacobian_maxerr: 0.0,
        probe_count: probes.len(),
        tol,
        verdict: Verdict::Certified,
    };
    let mut symmetry_ok = true;
    for p in &probes {
        dmin = dmin.min(p.deriv_min);
        dmax = dmax.max(p.deriv_max);
        symmetry_ok &= p.symmetry_ok;
        report.jacobian_symmetry_defect = report.jacobian_symmetry_defect.max(p.symmetry_defect);
        report.eigen_min = report.eigen_min.min(p.eigen_min);
        report.eigen_max = report.eigen_max.max(p.eigen_max);
        report.analytic_vs_numeric_jacobian_maxerr =
            report.analytic_vs_numeric_jacobian_maxerr.max(p.fd_err);
    }
    let (lo, hi) = act.derivative_bounds();
    report.derivative_range = (dmin, dmax);
    report.premise_activation_ok =
        report.activation_differentiable && lo >= 0.0 && hi <= 1.0 && dmin >= 0.0 && dmax <= 1.0;
    report.premise_sigma_ok = report.sigma_max <= 1.0 + tol;

    let conclusions_ok = symmetry_ok
        && report.eigen_min >= -tol
        && report.eigen_max <= 1.0 + tol
        && report.analytic_vs_numeric_jacobian_maxerr <= FD_TOL;
    report.verdict = if !(report.premise_activation_ok && report.premise_sigma_ok) {
        Verdict::PremiseViolated
    } else if !conclusions_ok {
        Verdict::ConclusionViolated
    } else {
        Verdict::Certified
    };
    Ok(report)
}

/// `count` probe points uniform in `[0, 1]^d`, followed by `extra`.
pub fn default_probe_points(d: usize, count: usize, seed: u64, extra: &[Vector]) -> Vec<Vector> {
    let mut rng = Rng::new(seed);
    let mut points: Vec<Vector> = (0..count)
        .map(|_| Vector::from_fn(d, |_| rng.uniform()))
        .collect();
    points.extend(extra.iter().cloned());
    points
}

/// Result of checking an arbitrary model.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelCheck {
    Report(ProxReport),
    /// Deep models are outside the class the check covers.
    OutOfScope {
        model: String,
    },
}

impl ModelCheck {
    pub fn verdict(&self) -> Verdict {
        match self {
            ModelCheck::Report(r) => r.verdict,
            ModelCheck::OutOfScope { .. } => Verdict::OutOfScope,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(match self {
            ModelCheck::Report(r) => serde_json::to_string_pretty(r)?,
            ModelCheck::OutOfScope { model } => serde_json::to_string_pretty(&serde_json::json!({
                "verdict": Verdict::OutOfScope,
                "model": model,
            }))?,
        })
    }
}

pub fn check_model(model: &Model, probe_points: &[Vector], tol: f64) -> Result<ModelCheck> {
    match model.as_tied() {
        Some(ae) => check_moreau(ae, probe_points, tol).map(ModelCheck::Report),
        None => Ok(ModelCheck::OutOfScope {
            model: model.describe(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{Activation, FnAutoencoder};
    use crate::numerics::matvec;

    fn softplus() -> Activation {
        Activation::Softplus { beta: 1.0 }
    }

    #[test]
    fn numeric_jacobian_of_identity() {
        let f = FnAutoencoder::new(4, |x: &[f64]| Vector::from(x));
        let j = numeric_jacobian(&f, &[0.1, 0.5, 0.2, 0.9], 1e-5).unwrap();
        assert!(j.max_abs_diff(&Matrix::identity(4)) < 1e-10);
    }

    #[test]
    fn numeric_jacobian_of_linear_map() {
        let a = Matrix::from_rows(&[
            vec![1.0, -2.0, 0.5],
            vec![0.0, 3.0, 1.0],
            vec![0.25, 0.0, -1.0],
        ])
        .unwrap();
        let a2 = a.clone();
        let f = FnAutoencoder::new(3, move |x: &[f64]| matvec(&a2, x).unwrap());
        let j = numeric_jacobian(&f, &[0.3, -0.2, 0.7], 1e-4).unwrap();
        assert!(j.max_abs_diff(&a) < 1e-10);
    }

    #[test]
    fn numeric_jacobian_rejects_nonpositive_step() {
        let f = FnAutoencoder::new(1, |x: &[f64]| Vector::from(x));
        assert!(numeric_jacobian(&f, &[0.0], 0.0).is_err());
    }

    #[test]
    fn half_identity_softplus_is_certified() {
        let ae = TiedAutoencoder::new(Matrix::identity(6).scaled(0.5), softplus()).unwrap();
        let probes = default_probe_points(6, 8, 3, &[]);
        let r = check_moreau(&ae, &probes, 1e-6).unwrap();
        assert_eq!(r.verdict, Verdict::Certified);
        assert!(r.eigen_min >= 0.0 && r.eigen_max <= 0.25);
        assert!((r.sigma_max - 0.5).abs() < 1e-12);
    }

    #[test]
    fn doubled_identity_is_premise_violation() {
        let ae =
            TiedAutoencoder::new(Matrix::identity(3).scaled(2.0), Activation::Identity).unwrap();
        let r = check_moreau(&ae, &default_probe_points(3, 4, 1, &[]), 1e-6).unwrap();
        assert_eq!(r.verdict, Verdict::PremiseViolated);
        assert!(!r.premise_sigma_ok);
        assert!((r.eigen_max - 4.0).abs() < 1e-9);
    }

    #[test]
    fn leaky_relu_fails_differentiability_premise() {
        let ae = TiedAutoencoder::new(
            Matrix::identity(3).scaled(0.5),
            Activation::LeakyRelu { slope: 0.01 },
        )
        .unwrap();
        let r = check_moreau(&ae, &default_probe_points(3, 4, 1, &[]), 1e-6).unwrap();
        assert!(!r.activation_differentiable);
        assert_eq!(r.verdict, Verdict::PremiseViolated);
    }

    #[test]
    fn empty_probe_set_is_an_error() {
        let ae = TiedAutoencoder::new(Matrix::identity(2), softplus()).unwrap();
        assert!(check_moreau(&ae, &[], 1e-6).is_err());
    }

    #[test]
    fn verdict_serializes_snake_case() {
        assert_eq!(
            serde_json::to_string(&Verdict::ConclusionViolated).unwrap(),
            "\"conclusion_violated\""
        );
    }
}
