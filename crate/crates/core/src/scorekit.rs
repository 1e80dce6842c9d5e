//! Score-generating functions, per-sample score vectors and the centering
//! constant `A²(φ)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distributions::normal;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_doubling, integrate_adaptive, partition};

/// Probit-space integration range; Φ(±12) is within 2e-33 of the ends.
const Z_LIMIT: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Wilcoxon,
    Sign,
    #[serde(rename = "vdw")]
    VanDerWaerden,
    Custom,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::Wilcoxon => "wilcoxon",
            ScoreKind::Sign => "sign",
            ScoreKind::VanDerWaerden => "vdw",
            ScoreKind::Custom => "custom",
        })
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wilcoxon" => Ok(ScoreKind::Wilcoxon),
            "sign" | "median" => Ok(ScoreKind::Sign),
            "vdw" | "vanderwaerden" | "van-der-waerden" | "normal" => Ok(ScoreKind::VanDerWaerden),
            _ => Err(Error::InvalidArgument(format!("unknown score kind '{s}'"))),
        }
    }
}

/// How `a_n(i)` is derived from φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// `a_n(i) = φ(i/(n+1))`.
    #[default]
    Approximate,
    /// `a_n(i) = E φ(U_{n:i})`.
    Exact,
}

type Eval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A score generator φ on (0, 1).
#[derive(Clone)]
pub struct ScoreFunction {
    kind: ScoreKind,
    label: String,
    eval: Eval,
    /// Derivative of the absolutely continuous part, when known.
    slope: Option<Eval>,
    /// Jump discontinuities `(t, φ(t+) - φ(t-))`.
    jumps: Vec<(f64, f64)>,
    monotone: bool,
}

impl fmt::Debug for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoreFunction")
            .field("kind", &self.kind)
            .field("label", &self.label)
            .field("monotone", &self.monotone)
            .finish()
    }
}

impl ScoreFunction {
    /// φ(t) = t.
    pub fn wilcoxon() -> Self {
        Self {
            kind: ScoreKind::Wilcoxon,
            label: "wilcoxon".into(),
            eval: Arc::new(|t| t),
            slope: Some(Arc::new(|_| 1.0)),
            jumps: vec![],
            monotone: true,
        }
    }

    /// φ(t) = sign(t - 1/2), the median-test score.
    pub fn sign() -> Self {
        Self {
            kind: ScoreKind::Sign,
            label: "sign".into(),
            eval: Arc::new(|t: f64| {
                if t > 0.5 {
                    1.0
                } else if t < 0.5 {
                    -1.0
                } else {
                    0.0
                }
            }),
            slope: Some(Arc::new(|_| 0.0)),
            jumps: vec![(0.5, 2.0)],
            monotone: true,
        }
    }

    /// φ(t) = Φ⁻¹(t).
    pub fn van_der_waerden() -> Self {
        Self {
            kind: ScoreKind::VanDerWaerden,
            label: "vdw".into(),
            eval: Arc::new(normal::quantile),
            slope: Some(Arc::new(|t| 1.0 / normal::pdf(normal::quantile(t)))),
            jumps: vec![],
            monotone: true,
        }
    }

    pub fn from_kind(kind: ScoreKind) -> Result<Self> {
        match kind {
            ScoreKind::Wilcoxon => Ok(Self::wilcoxon()),
            ScoreKind::Sign => Ok(Self::sign()),
            ScoreKind::VanDerWaerden => Ok(Self::van_der_waerden()),
            ScoreKind::Custom => Err(Error::InvalidArgument("custom scores need a function or table".into())),
        }
    }

    /// A user-supplied φ with a monotonicity declaration. The function must
    /// be finite on a 1024-point grid; a declared-monotone φ that decreases
    /// somewhere on that grid is accepted with a warning.
    pub fn custom<F>(label: impl Into<String>, f: F, monotone: bool) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let s = Self {
            kind: ScoreKind::Custom,
            label: label.into(),
            eval: Arc::new(f),
            slope: None,
            jumps: vec![],
            monotone,
        };
        s.check_grid()?;
        Ok(s)
    }

    /// Piecewise-linear φ through the `(t, φ(t))` knots, constant beyond the
    /// outermost knots.
    pub fn from_table(label: impl Into<String>, mut knots: Vec<(f64, f64)>, monotone: bool) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidScore("score table needs at least two rows".into()));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite() || *t < 0.0 || *t > 1.0) {
            return Err(Error::InvalidScore("score table rows must be finite with t in [0, 1]".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidScore("score table has duplicate t values".into()));
        }
        let knots = Arc::new(knots);
        let k1 = knots.clone();
        let eval = move |t: f64| interpolate(&k1, t).0;
        let k2 = knots.clone();
        let slope = move |t: f64| interpolate(&k2, t).1;
        let s = Self {
            kind: ScoreKind::Custom,
            label: label.into(),
            eval: Arc::new(eval),
            slope: Some(Arc::new(slope)),
            jumps: vec![],
            monotone,
        };
        s.check_grid()?;
        Ok(s)
    }

    /// Reads a two-column (`t`, `φ(t)`) text table; columns may be separated
    /// by commas or whitespace, and `#` starts a comment. A non-numeric first
    /// line is treated as a header.
    pub fn load_table(path: impl AsRef<Path>, monotone: bool) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut knots = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|c| !c.is_empty()).collect();
            let parsed: Option<Vec<f64>> = cells.iter().map(|c| c.parse().ok()).collect();
            match parsed {
                Some(v) if v.len() == 2 => knots.push((v[0], v[1])),
                None if knots.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(Error::Parse {
                        row: lineno + 1,
                        column: "t,phi".into(),
                        msg: format!("expected two numbers, got '{line}'"),
                    })
                }
            }
        }
        Self::from_table(path.display().to_string(), knots, monotone)
    }

    /// `c·φ + b`; used to check that statistics do not depend on the
    /// affine normalisation of φ.
    pub fn affine(&self, c: f64, b: f64) -> Self {
        let f = self.eval.clone();
        let slope = self.slope.clone().map(|s| Arc::new(move |t| c * s(t)) as Eval);
        Self {
            kind: ScoreKind::Custom,
            label: format!("{c}*{}+{b}", self.label),
            eval: Arc::new(move |t| c * f(t) + b),
            slope,
            jumps: self.jumps.iter().map(|&(t, j)| (t, c * j)).collect(),
            monotone: self.monotone && c >= 0.0,
        }
    }

    fn check_grid(&self) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        let mut violations = 0usize;
        for k in 0..1024 {
            let t = (k as f64 + 0.5) / 1024.0;
            let v = self.eval(t);
            if !v.is_finite() {
                return Err(Error::InvalidScore(format!("{} is not finite at t = {t}", self.label)));
            }
            if v < prev {
                violations += 1;
            }
            prev = v;
        }
        if self.monotone && violations > 0 {
            log::warn!(
                "score function '{}' declared nondecreasing but decreases at {violations} grid steps",
                self.label
            );
        }
        Ok(())
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    /// Derivative of the absolutely continuous part of φ (central
    /// differences when no closed form was supplied).
    pub fn slope(&self, t: f64) -> f64 {
        match &self.slope {
            Some(s) => s(t),
            None => {
                let h = 1e-6_f64.min(0.5 * t.min(1.0 - t));
                (self.eval(t + h) - self.eval(t - h)) / (2.0 * h)
            }
        }
    }

    /// φ(Φ(z)), exact for the normal scores and clamped away from the
    /// endpoints otherwise.
    pub fn eval_probit(&self, z: f64) -> f64 {
        match self.kind {
            ScoreKind::VanDerWaerden => z,
            _ => self.eval(normal::cdf(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)),
        }
    }

    /// Jump discontinuities as `(location, size)`.
    pub fn jumps(&self) -> &[(f64, f64)] {
        &self.jumps
    }

    /// Integral over (0, 1) of a function given in probit coordinates,
    /// `∫ g(z) ϕ(z) dz` with `t = Φ(z)`, so endpoint singularities of φ are
    /// damped by the normal density.
    pub(crate) fn integrate_unit<G: Fn(f64) -> f64>(&self, g: G, tol: f64) -> Result<f64> {
        let breaks = self.jumps.iter().map(|(t, _)| normal::quantile(*t)).chain([0.0]);
        let pts = partition(-Z_LIMIT, Z_LIMIT, breaks);
        let r = integrate_adaptive(|z| g(z) * normal::pdf(z), &pts, tol, tol)?;
        Ok(r.value)
    }
}

fn interpolate(knots: &[(f64, f64)], t: f64) -> (f64, f64) {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if t <= first.0 {
        return (first.1, 0.0);
    }
    if t >= last.0 {
        return (last.1, 0.0);
    }
    let idx = knots.partition_point(|k| k.0 <= t);
    let (t0, v0) = knots[idx - 1];
    let (t1, v1) = knots[idx];
    let slope = (v1 - v0) / (t1 - t0);
    (v0 + slope * (t - t0), slope)
}

/// The scores `a_n(1..n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub mode: ScoreMode,
    pub source: String,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Score for an integer rank `r` in 1..=n.
    pub fn at(&self, r: usize) -> f64 {
        self.values[r - 1]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample variance of the scores with divisor `n - 1`.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (self.values.len() as f64 - 1.0)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("scores need n >= 2, got {n}")));
    }
    Ok(())
}

/// `a_n(i) = φ(i/(n+1))`.
pub fn scores_approximate(phi: &ScoreFunction, n: usize) -> Result<ScoreVector> {
    check_n(n)?;
    let values = (1..=n)
        .map(|i| {
            let t = i as f64 / (n as f64 + 1.0);
            let v = phi.eval(t);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidScore(format!("{} evaluates to {v} at t = {t}", phi.label())))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreVector { values, mode: ScoreMode::Approximate, source: phi.label().to_string() })
}

/// `a_n(i) = E φ(U_{n:i})`, with `U_{n:i} ~ Beta(i, n - i + 1)`.
///
/// Integrated in probit space (`t = Φ(z)`) by 64-point Gauss–Legendre panels,
/// doubled until the relative change is below 1e-10. The z-range covers
/// the Beta mean ± 30 standard deviations and is split at the jumps of φ.
pub fn scores_exact(phi: &ScoreFunction, n: usize) -> Result<ScoreVector> {
    check_n(n)?;
    let nf = n as f64;
    // ln of the log-binomial coefficients C(n-1, k), k = 0..n-1.
    let mut ln_binom = vec![0.0; n];
    for k in 1..n {
        ln_binom[k] = ln_binom[k - 1] + ((n - k) as f64).ln() - (k as f64).ln();
    }
    let mut values = Vec::with_capacity(n);
    for i in 1..=n {
        let a = i as f64;
        let b = nf - a + 1.0;
        let log_norm = nf.ln() + ln_binom[i - 1];
        let mean = a / (nf + 1.0);
        let sd = (a * b / ((nf + 1.0) * (nf + 1.0) * (nf + 2.0))).sqrt();
        let to_z = |t: f64| {
            if t <= 0.0 {
                -Z_LIMIT
            } else if t >= 1.0 {
                Z_LIMIT
            } else {
                normal::quantile(t).clamp(-Z_LIMIT, Z_LIMIT)
            }
        };
        let z_lo = to_z(mean - 30.0 * sd);
        let z_hi = to_z(mean + 30.0 * sd);
        let integrand = |z: f64| {
            let lo_tail = normal::cdf(z);
            let hi_tail = normal::sf(z);
            if lo_tail <= 0.0 || hi_tail <= 0.0 {
                return 0.0;
            }
            let log_dens = log_norm + (a - 1.0) * lo_tail.ln() + (b - 1.0) * hi_tail.ln();
            phi.eval_probit(z) * log_dens.exp() * normal::pdf(z)
        };
        let pts = partition(z_lo, z_hi, phi.jumps().iter().map(|(t, _)| normal::quantile(*t)));
        let mut total = 0.0;
        for w in pts.windows(2) {
            total += gauss_legendre_doubling(integrand, w[0], w[1], 1e-10, 1e-15)?;
        }
        if !total.is_finite() {
            return Err(Error::InvalidScore(format!("exact score {i} of {} is not finite", phi.label())));
        }
        values.push(total);
    }
    Ok(ScoreVector { values, mode: ScoreMode::Exact, source: phi.label().to_string() })
}

pub fn scores(phi: &ScoreFunction, n: usize, mode: ScoreMode) -> Result<ScoreVector> {
    match mode {
        ScoreMode::Approximate => scores_approximate(phi, n),
        ScoreMode::Exact => scores_exact(phi, n),
    }
}

/// `A²(φ) = ∫₀¹ (φ(t) - φ̄)² dt`; closed form for the built-in scores.
pub fn score_norm_sq(phi: &ScoreFunction) -> Result<f64> {
    let a2 = match phi.kind() {
        ScoreKind::Wilcoxon => 1.0 / 12.0,
        ScoreKind::Sign | ScoreKind::VanDerWaerden => 1.0,
        ScoreKind::Custom => {
            let mean = phi.integrate_unit(|z| phi.eval_probit(z), 1e-13)?;
            phi.integrate_unit(
                |z| {
                    let d = phi.eval_probit(z) - mean;
                    d * d
                },
                1e-13,
            )?
        }
    };
    if !(a2 > 1e-14) {
        return Err(Error::DegenerateScore(format!(
            "A²({}) = {a2:e}; a constant score function carries no rank information",
            phi.label()
        )));
    }
    Ok(a2)
}
