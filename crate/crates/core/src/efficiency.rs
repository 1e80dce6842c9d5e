//! Asymptotic efficiency: `γ(φ, h)`, Fisher information, noncentrality
//! parameters, and the relative efficiencies of the rank tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ancova::GammaLimit;
use crate::distributions::{convolve_densities, ErrorLaw};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, partition};
use crate::scorekit::{score_norm_sq, ScoreFunction};

const ABS_TOL: f64 = 1e-13;
const REL_TOL: f64 = 1e-10;

fn clamp_unit(t: f64) -> f64 {
    t.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn grid_with(law: &ErrorLaw, extra: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let base = law.integration_grid();
    partition(base[0], base[base.len() - 1], base.iter().copied().chain(extra))
}

/// `γ(φ, h) = ∫ h(x)² φ′(H(x)) dx + Σ_k J_k h(H⁻¹(t_k))`, where `J_k` are the
/// jumps of φ at `t_k`. For Wilcoxon scores this is `∫ h²`.
pub fn gamma_phi(phi: &ScoreFunction, law: &ErrorLaw) -> Result<f64> {
    law.validate()?;
    let jump_points: Vec<(f64, f64)> = phi.jumps().iter().map(|&(t, size)| (law.quantile(t), size)).collect();
    let pts = grid_with(law, jump_points.iter().map(|j| j.0));
    let ac = integrate_adaptive(
        |x| {
            let h = law.pdf(x);
            if h == 0.0 {
                return 0.0;
            }
            finite_or_zero(h * h * phi.slope(clamp_unit(law.cdf(x))))
        },
        &pts,
        ABS_TOL,
        REL_TOL,
    )?;
    let mut total = ac.value;
    for (x, size) in jump_points {
        total += size * law.density(x)?;
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("γ({}, {law}) is not finite", phi.label())));
    }
    Ok(total)
}

/// `γ(φ, h) = ∫₀¹ φ(t) φ(t, h) dt` with `φ(t, h) = -h′(H⁻¹(t)) / h(H⁻¹(t))`,
/// evaluated as `∫ φ(H(x)) (-h′(x)) dx`. Needs a differentiable density.
pub fn gamma_phi_score_form(phi: &ScoreFunction, law: &ErrorLaw) -> Result<f64> {
    law.validate()?;
    if !law.is_smooth() {
        return Err(Error::Numeric(format!("the score form of γ needs a differentiable density; {law} has jumps")));
    }
    let jumps = phi.jumps().iter().map(|&(t, _)| law.quantile(t)).collect::<Vec<_>>();
    let pts = grid_with(law, jumps);
    let r = integrate_adaptive(
        |x| {
            let d = law.pdf_derivative(x).unwrap_or(f64::NAN);
            if d == 0.0 {
                return 0.0;
            }
            finite_or_zero(-phi.eval(clamp_unit(law.cdf(x))) * d)
        },
        &pts,
        ABS_TOL,
        REL_TOL,
    )?;
    Ok(r.value)
}

/// `ℐ(h) = ∫ (h′/h)² h`.
pub fn fisher_information(law: &ErrorLaw) -> Result<f64> {
    law.validate()?;
    if !law.is_smooth() {
        return Err(Error::Numeric(format!("Fisher information diverges for {law} (density has jumps)")));
    }
    let pts = law.integration_grid();
    let r = integrate_adaptive(
        |x| {
            let h = law.pdf(x);
            if !(h > 1e-300) {
                return 0.0;
            }
            let d = law.pdf_derivative(x).unwrap_or(f64::NAN);
            finite_or_zero(d * d / h)
        },
        &pts,
        ABS_TOL,
        REL_TOL,
    )?;
    Ok(r.value)
}

/// Efficiency of the test on responses observed with additive error,
/// relative to the test on the clean responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub gamma_phi_f: f64,
    pub gamma_phi_h: f64,
    /// `(γ(φ,h) / γ(φ,f))²`.
    pub are_latent: f64,
    /// `None` when the density has jumps.
    pub fisher_f: Option<f64>,
    pub fisher_h: Option<f64>,
    /// `ℐ(h) A²(φ) / γ²(φ,f)`.
    pub upper_bound: Option<f64>,
    pub score_norm_sq: f64,
}

/// `noise = None` is a point mass at zero, so `h = f`.
pub fn are_latent(phi: &ScoreFunction, f_law: &ErrorLaw, noise_law: Option<&ErrorLaw>) -> Result<EfficiencyReport> {
    let h_law = match noise_law {
        Some(g) => convolve_densities(f_law, g)?,
        None => f_law.clone(),
    };
    let gamma_f = gamma_phi(phi, f_law)?;
    if gamma_f == 0.0 {
        return Err(Error::Numeric(format!("γ({}, {f_law}) vanishes", phi.label())));
    }
    let gamma_h = if noise_law.is_some() { gamma_phi(phi, &h_law)? } else { gamma_f };
    let a2 = score_norm_sq(phi)?;
    let fisher = |law: &ErrorLaw| if law.is_smooth() { fisher_information(law).map(Some) } else { Ok(None) };
    let fisher_f = fisher(f_law)?;
    let fisher_h = if noise_law.is_some() { fisher(&h_law)? } else { fisher_f };
    let ratio = gamma_h / gamma_f;
    Ok(EfficiencyReport {
        gamma_phi_f: gamma_f,
        gamma_phi_h: gamma_h,
        are_latent: ratio * ratio,
        fisher_f,
        fisher_h,
        upper_bound: fisher_h.map(|i| i * a2 / (gamma_f * gamma_f)),
        score_norm_sq: a2,
    })
}

/// `β*ᵀ Q β* γ² / norming`.
pub fn noncentrality(beta_star: &DVector<f64>, q: &DMatrix<f64>, gamma_val: f64, norming: f64) -> Result<f64> {
    if q.nrows() != beta_star.len() || q.ncols() != beta_star.len() {
        return Err(Error::Dimension(format!("β* has length {}, Q is {:?}", beta_star.len(), q.shape())));
    }
    if !(norming > 0.0) {
        return Err(Error::InvalidArgument(format!("norming must be positive, got {norming}")));
    }
    let sym = (q - q.transpose()).abs().max();
    if sym > 1e-12 * q.abs().max() || q.clone().cholesky().is_none() {
        return Err(Error::SingularDesign("Q must be symmetric positive definite".into()));
    }
    let form = (beta_star.transpose() * q * beta_star)[(0, 0)];
    Ok(form * gamma_val * gamma_val / norming)
}

/// `γ₀₀ / γ₀₀.₁`.
pub fn are_ancova(gamma: &GammaLimit) -> Result<f64> {
    if !(gamma.gamma_00_1 > 0.0) {
        return Err(Error::DegenerateCovariate { v00_1: gamma.gamma_00_1, v00: gamma.gamma_00 });
    }
    Ok(gamma.gamma_00 / gamma.gamma_00_1)
}
