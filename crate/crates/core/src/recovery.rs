//! Recovery of a training image from its degraded version.
//!
//! The unknown-mask method alternates two steps. With the mask estimate
//! `Θ` fixed, the image is estimated by ADMM on
//! `‖Θx − y‖² + λ₁·s_f(x)` where the proximal step of the implicit
//! regularizer `s_f` is replaced by one application of the autoencoder
//! (plug-and-play). With the image estimate fixed, each mask entry is the
//! per-coordinate minimizer over `{0, 1}` of the residual cost, which has a
//! closed form.
//!
//! The regularization weights never appear as parameters: the weight on
//! `s_f` is absorbed by the plug-and-play substitution, and the mask
//! regularizer is an indicator, so its weight is irrelevant.
//!
//! All estimates stay unclipped; the mask rule relies on seeing values
//! below 0 or above `2y`.

use crate::autoencoder::{Activation, Autoencoder, Model};
use crate::degradation::ErasureMask;
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Rng, Vector};

/// How the first mask estimate `Ĥ⁽⁰⁾` is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum MaskInit {
    /// Everything treated as erased.
    Zeros,
    /// Each coordinate kept with probability 1/2, drawn from `seed`.
    BernoulliHalf {
        seed: u64,
    },
    FromMask(ErasureMask),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryConfig {
    /// ADMM penalty `γ > 0`.
    pub gamma: f64,
    /// Fixed number of ADMM iterations per outer iteration.
    pub admm_iters: usize,
    /// Threshold on `(1/d)‖x̂⁽ᵗ⁾ − x̂⁽ᵗ⁻¹⁾‖²`.
    pub outer_tol: f64,
    /// Consecutive outer iterations below `outer_tol` needed to stop.
    pub patience: usize,
    /// Safety cap on outer iterations.
    pub max_outer: usize,
    pub mask_init: MaskInit,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            gamma: 1.0,
            admm_iters: 40,
            outer_tol: 1e-9,
            patience: 3,
            max_outer: 200,
            mask_init: MaskInit::BernoulliHalf { seed: 42 },
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if self.admm_iters == 0 || self.patience == 0 || self.max_outer == 0 {
            return Err(Error::InvalidArgument(
                "admm_iters, patience and max_outer must be >= 1".into(),
            ));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::InvalidArgument("outer_tol must be > 0".into()));
        }
        Ok(())
    }

    /// Per-sample copy: a Bernoulli initialization gets a seed derived from
    /// the configured one and the sample index.
    pub fn for_sample(&self, index: usize) -> RecoveryConfig {
        let mask_init = match &self.mask_init {
            MaskInit::BernoulliHalf { seed } => MaskInit::BernoulliHalf {
                seed: derive_seed(*seed, index as u64),
            },
            other => other.clone(),
        };
        RecoveryConfig {
            mask_init,
            ..self.clone()
        }
    }

    fn initial_mask(&self, d: usize) -> Result<ErasureMask> {
        match &self.mask_init {
            MaskInit::Zeros => Ok(ErasureMask::all_erased(d)),
            MaskInit::BernoulliHalf { seed } => {
                Ok(ErasureMask::bernoulli_half(d, &mut Rng::new(*seed)))
            }
            MaskInit::FromMask(m) if m.len() == d => Ok(m.clone()),
            MaskInit::FromMask(m) => Err(Error::dims("initial mask", d, m.len())),
        }
    }
}

/// Default ADMM penalty for a model: 0.5 for a 10-layer FC network with
/// leaky ReLU, 0.1 for PReLU or 20-layer FC networks, 1.0 otherwise.
pub fn default_gamma(model: &Model) -> f64 {
    match model {
        Model::Deep(m) => {
            let act = m.layers()[0].activation;
            let depth = m.layers().len();
            if matches!(act, Some(Activation::Prelu { .. })) || depth >= 20 {
                0.1
            } else if matches!(act, Some(Activation::LeakyRelu { .. })) && depth == 10 {
                0.5
            } else {
                1.0
            }
        }
        Model::Tied(_) => 1.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryResult {
    pub estimate: Vector,
    /// Final mask estimate; `None` for methods that do not estimate one.
    pub mask_estimate: Option<ErasureMask>,
    pub outer_iters: usize,
    pub converged: bool,
    /// `(1/d)‖x̂⁽ᵗ⁾ − x̂⁽ᵗ⁻¹⁾‖²` per iteration, with `x̂⁽⁰⁾ = y`.
    pub change_trace: Vec<f64>,
    /// `(1/d)‖x̂⁽ᵗ⁾ − x‖²` per iteration when ground truth was supplied.
    pub truth_trace: Option<Vec<f64>>,
}

/// Closed-form minimizer of `‖Θx − y‖² + (γ/2)‖x − ṽ‖²`:
/// `(yᵢ + (γ/2)ṽᵢ)/(1 + γ/2)` on kept coordinates, `ṽᵢ` on erased ones.
pub fn data_fidelity_update(
    y: &[f64],
    v_tilde: &[f64],
    theta: &ErasureMask,
    gamma: f64,
) -> Result<Vector> {
    if v_tilde.len() != y.len() {
        return Err(Error::dims("data fidelity ṽ", y.len(), v_tilde.len()));
    }
    if theta.len() != y.len() {
        return Err(Error::dims("data fidelity mask", y.len(), theta.len()));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    let half = 0.5 * gamma;
    let denom = 1.0 + half;
    Ok(y.iter()
        .zip(v_tilde)
        .zip(theta.as_slice())
        .map(|((&yi, &vi), &kept)| if kept { (yi + half * vi) / denom } else { vi })
        .collect())
}

/// Iterates of one ADMM step `k`: `ξ̂⁽ᵏ⁾`, `v̂⁽ᵏ⁾` and the updated dual
/// `u⁽ᵏ⁺¹⁾`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmStep {
    pub xi_hat: Vector,
    pub v_hat: Vector,
    pub u_next: Vector,
}

/// Plug-and-play ADMM for a fixed mask estimate `theta`; returns the last
/// `ξ̂⁽ᵏ⁾`.
pub fn admm_solve<A: Autoencoder + ?Sized>(
    f: &A,
    y: &[f64],
    theta: &ErasureMask,
    config: &RecoveryConfig,
) -> Result<Vector> {
    admm_run(f, y, theta, config, None)
}

/// [`admm_solve`], also returning every inner iterate.
pub fn admm_solve_traced<A: Autoencoder + ?Sized>(
    f: &A,
    y: &[f64],
    theta: &ErasureMask,
    config: &RecoveryConfig,
) -> Result<(Vector, Vec<AdmmStep>)> {
    let mut trace = Vec::with_capacity(config.admm_iters);
    let out = admm_run(f, y, theta, config, Some(&mut trace))?;
    Ok((out, trace))
}

fn admm_run<A: Autoencoder + ?Sized>(
    f: &A,
    y: &[f64],
    theta: &ErasureMask,
    config: &RecoveryConfig,
    mut trace: Option<&mut Vec<AdmmStep>>,
) -> Result<Vector> {
    config.validate()?;
    let d = y.len();
    if f.dim() != d {
        return Err(Error::dims("autoencoder dimension", d, f.dim()));
    }
    if theta.len() != d {
        return Err(Error::dims("mask estimate", d, theta.len()));
    }
    let mut v_hat = Vector::zeros(d);
    let mut u = Vector::zeros(d);
    let mut xi_hat = Vector::zeros(d);
    for k in 1..=config.admm_iters {
        let v_tilde: Vector = v_hat.iter().zip(u.iter()).map(|(v, u)| v - u).collect();
        xi_hat = data_fidelity_update(y, &v_tilde, theta, config.gamma)?;
        let xi_tilde: Vector = xi_hat.iter().zip(u.iter()).map(|(x, u)| x + u).collect();
        v_hat = f.forward(&xi_tilde)?;
        if v_hat.len() != d {
            return Err(Error::dims("autoencoder output", d, v_hat.len()));
        }
        u.iter_mut()
            .zip(xi_hat.iter().zip(v_hat.iter()))
            .for_each(|(u, (x, v))| *u += x - v);
        if !(xi_hat.is_finite() && v_hat.is_finite() && u.is_finite()) {
            return Err(Error::NonFinite {
                context: "admm iterate",
                iteration: k,
            });
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(AdmmStep {
                xi_hat: xi_hat.clone(),
                v_hat: v_hat.clone(),
                u_next: u.clone(),
            });
        }
    }
    Ok(xi_hat)
}

/// Per-coordinate minimizer over `{0,1}` of
/// `Σ_{kept} (x̂ᵢ − yᵢ)² + Σ_{erased} yᵢ²`: erase when `x̂ᵢ > 2yᵢ` or
/// `x̂ᵢ < 0`, keep otherwise (ties keep).
pub fn mask_update(x_hat: &[f64], y: &[f64]) -> Result<ErasureMask> {
    if x_hat.len() != y.len() {
        return Err(Error::dims("mask update", y.len(), x_hat.len()));
    }
    Ok(ErasureMask::new(
        x_hat
            .iter()
            .zip(y)
            .map(|(&x, &yi)| !(x > 2.0 * yi || x < 0.0))
            .collect(),
    ))
}

fn check_inputs<A: Autoencoder + ?Sized>(f: &A, y: &[f64], truth: Option<&[f64]>) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("degraded sample"));
    }
    if f.dim() != y.len() {
        return Err(Error::dims("autoencoder dimension", y.len(), f.dim()));
    }
    if let Some(t) = truth {
        if t.len() != y.len() {
            return Err(Error::dims("ground truth", y.len(), t.len()));
        }
    }
    Ok(())
}

fn mean_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Blind recovery: alternating ADMM image estimation and mask estimation.
///
/// Stops once the mean squared change between successive image estimates
/// stays below `outer_tol` for `patience` consecutive iterations, or after
/// `max_outer` iterations with `converged = false`.
pub fn recover_unknown_h<A: Autoencoder + ?Sized>(
    f: &A,
    y: &[f64],
    config: &RecoveryConfig,
    truth: Option<&[f64]>,
) -> Result<RecoveryResult> {
    config.validate()?;
    check_inputs(f, y, truth)?;
    let mut mask = config.initial_mask(y.len())?;
    let mut previous = Vector::from(y);
    let mut change_trace = Vec::new();
    let mut truth_trace = truth.map(|_| Vec::new());
    let mut streak = 0;
    let mut converged = false;

    for _ in 0..config.max_outer {
        let estimate = admm_solve(f, y, &mask, config)?;
        mask = mask_update(&estimate, y)?;
        let change = mean_sq(&estimate, &previous);
        change_trace.push(change);
        if let (Some(tt), Some(x)) = (truth_trace.as_mut(), truth) {
            tt.push(mean_sq(&estimate, x));
        }
        previous = estimate;
        streak = if change < config.outer_tol {
            streak + 1
        } else {
            0
        };
        if streak >= config.patience {
            converged = true;
            break;
        }
    }
    Ok(RecoveryResult {
        estimate: previous,
        mask_estimate: Some(mask),
        outer_iters: change_trace.len(),
        converged,
        change_trace,
        truth_trace,
    })
}

/// Recovery with the true mask: one ADMM solve with `Θ = H`. When
/// `noiseless`, kept coordinates are then overwritten by `y`
/// (`x̂ ← (I − H)x̂ + Hy`).
pub fn recover_known_h<A: Autoencoder + ?Sized>(
    f: &A,
    y: &[f64],
    h: &ErasureMask,
    config: &RecoveryConfig,
    noiseless: bool,
    truth: Option<&[f64]>,
) -> Result<RecoveryResult> {
    config.validate()?;
    check_inputs(f, y, truth)?;
    let mut estimate = admm_solve(f, y, h, config)?;
    if noiseless {
        for (i, (e, &yi)) in estimate.iter_mut().zip(y).enumerate() {
            if h.is_kept(i) {
                *e = yi;
            }
        }
    }
    Ok(RecoveryResult {
        change_trace: vec![mean_sq(&estimate, y)],
        truth_trace: truth.map(|x| vec![mean_sq(&estimate, x)]),
        estimate,
        mask_estimate: Some(h.clone()),
        outer_iters: 1,
        converged: true,
    })
}

/// Iterates `x⁽ᵏ⁾ = f(x⁽ᵏ⁻¹⁾)` from `x⁽⁰⁾ = y` until the mean squared step
/// falls below `tol` or `max_iters` is reached.
pub fn baseline_iterate<A: Autoencoder + ?Sized>(
    f: &A,
    y: &[f64],
    max_iters: usize,
    tol: f64,
    truth: Option<&[f64]>,
) -> Result<RecoveryResult> {
    check_inputs(f, y, truth)?;
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    let mut x = Vector::from(y);
    let mut change_trace = Vec::new();
    let mut truth_trace = truth.map(|_| Vec::new());
    let mut converged = false;
    for k in 1..=max_iters {
        let next = f.forward(&x)?;
        if !next.is_finite() {
            return Err(Error::NonFinite {
                context: "autoencoder iteration",
                iteration: k,
            });
        }
        let change = mean_sq(&next, &x);
        change_trace.push(change);
        if let (Some(tt), Some(t)) = (truth_trace.as_mut(), truth) {
            tt.push(mean_sq(&next, t));
        }
        x = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(RecoveryResult {
        estimate: x,
        mask_estimate: None,
        outer_iters: change_trace.len(),
        converged,
        change_trace,
        truth_trace,
    })
}

/// Defaults for [`baseline_iterate`].
pub const BASELINE_MAX_ITERS: usize = 1000;
pub const BASELINE_TOL: f64 = 1e-12;
