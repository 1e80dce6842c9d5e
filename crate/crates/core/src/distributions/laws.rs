//! Error laws used by the simulation generators and the efficiency
//! calculators, including numerically convolved laws.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normal;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, partition};
use crate::rng::{self, Domain};

/// Tail probability that bounds every effective-support window.
pub const WINDOW_TAIL: f64 = 1e-10;

const CONV_ABS_TOL: f64 = 1e-14;
const CONV_REL_TOL: f64 = 1e-11;

/// A univariate error law. The second parameter of every location–scale
/// family is a scale (for `Normal` the standard deviation, not the
/// variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ErrorLaw {
    Normal { mu: f64, sigma: f64 },
    Laplace { mu: f64, b: f64 },
    Cauchy { x0: f64, gamma: f64 },
    Uniform { lo: f64, hi: f64 },
    Logistic { mu: f64, s: f64 },
    Convolution(Box<ErrorLaw>, Box<ErrorLaw>),
}

impl ErrorLaw {
    pub fn standard_normal() -> Self {
        ErrorLaw::Normal { mu: 0.0, sigma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ErrorLaw::Normal { mu, sigma } => mu.is_finite() && *sigma > 0.0 && sigma.is_finite(),
            ErrorLaw::Laplace { mu, b } => mu.is_finite() && *b > 0.0 && b.is_finite(),
            ErrorLaw::Cauchy { x0, gamma } => x0.is_finite() && *gamma > 0.0 && gamma.is_finite(),
            ErrorLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            ErrorLaw::Logistic { mu, s } => mu.is_finite() && *s > 0.0 && s.is_finite(),
            ErrorLaw::Convolution(a, b) => {
                a.validate()?;
                b.validate()?;
                true
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid law parameters: {self}")))
        }
    }

    /// Density at `t`. Convolution densities are evaluated by adaptive
    /// quadrature; a quadrature failure yields NaN.
    pub fn pdf(&self, t: f64) -> f64 {
        self.density(t).unwrap_or(f64::NAN)
    }

    /// Density at `t`, surfacing quadrature failures.
    pub fn density(&self, t: f64) -> Result<f64> {
        Ok(match self {
            ErrorLaw::Normal { mu, sigma } => normal::pdf((t - mu) / sigma) / sigma,
            ErrorLaw::Laplace { mu, b } => (-(t - mu).abs() / b).exp() / (2.0 * b),
            ErrorLaw::Cauchy { x0, gamma } => {
                let z = (t - x0) / gamma;
                1.0 / (PI * gamma * (1.0 + z * z))
            }
            ErrorLaw::Uniform { lo, hi } => {
                if t > *lo && t < *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            ErrorLaw::Logistic { mu, s } => {
                let z = -((t - mu) / s).abs();
                let e = z.exp();
                e / (s * (1.0 + e) * (1.0 + e))
            }
            ErrorLaw::Convolution(a, b) => convolve_at(a, b, t, |law, x| law.pdf(x))?,
        })
    }

    /// Derivative of the density, `None` where the density has jumps
    /// (uniform laws). Convolutions differentiate under the integral when
    /// either factor is smooth and fall back to central differences
    /// otherwise.
    pub fn pdf_derivative(&self, t: f64) -> Option<f64> {
        match self {
            ErrorLaw::Normal { mu, sigma } => Some(-(t - mu) / (sigma * sigma) * self.pdf(t)),
            ErrorLaw::Laplace { mu, b } => {
                let d = t - mu;
                if d == 0.0 {
                    Some(0.0)
                } else {
                    Some(-d.signum() / b * self.pdf(t))
                }
            }
            ErrorLaw::Cauchy { x0, gamma } => {
                let d = t - x0;
                Some(-2.0 * d / (gamma * gamma + d * d) * self.pdf(t))
            }
            ErrorLaw::Logistic { mu, s } => {
                let z = (t - mu) / s;
                Some(-(0.5 * z).tanh() / s * self.pdf(t))
            }
            ErrorLaw::Uniform { .. } => None,
            ErrorLaw::Convolution(a, b) => {
                if a.is_smooth() {
                    convolve_at(a, b, t, |law, x| law.pdf_derivative(x).unwrap_or(f64::NAN)).ok()
                } else if b.is_smooth() {
                    convolve_at(b, a, t, |law, x| law.pdf_derivative(x).unwrap_or(f64::NAN)).ok()
                } else {
                    let step = f64::EPSILON.cbrt() * self.scale().max(t.abs());
                    Some((self.pdf(t + step) - self.pdf(t - step)) / (2.0 * step))
                }
            }
        }
    }

    /// Whether the density is differentiable almost everywhere with a
    /// bounded derivative (no jump discontinuities).
    pub fn is_smooth(&self) -> bool {
        match self {
            ErrorLaw::Uniform { .. } => false,
            ErrorLaw::Convolution(_, _) => true,
            _ => true,
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            ErrorLaw::Normal { mu, sigma } => normal::cdf((t - mu) / sigma),
            ErrorLaw::Laplace { mu, b } => {
                let z = (t - mu) / b;
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            ErrorLaw::Cauchy { x0, gamma } => 0.5 + ((t - x0) / gamma).atan() / PI,
            ErrorLaw::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            ErrorLaw::Logistic { mu, s } => 1.0 / (1.0 + (-(t - mu) / s).exp()),
            ErrorLaw::Convolution(a, b) => {
                // H(t) = ∫ F_a(t - s) f_b(s) ds over the narrower window.
                let (dens, dist) = if a.window_width() < b.window_width() { (a, b) } else { (b, a) };
                let (lo, hi) = dens.window();
                let pts = partition(lo, hi, breakpoints(dens, 0.0).chain(breakpoints(dist, 0.0).map(|m| t - m)));
                integrate_adaptive(|s| dist.cdf(t - s) * dens.pdf(s), &pts, CONV_ABS_TOL, CONV_REL_TOL)
                    .map(|r| r.value.clamp(0.0, 1.0))
                    .unwrap_or(f64::NAN)
            }
        }
    }

    /// Quantile function; convolutions invert the distribution function by
    /// safeguarded Newton iteration.
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if u >= 1.0 {
            return f64::INFINITY;
        }
        match self {
            ErrorLaw::Normal { mu, sigma } => mu + sigma * normal::quantile(u),
            ErrorLaw::Laplace { mu, b } => {
                if u < 0.5 {
                    mu + b * (2.0 * u).ln()
                } else {
                    mu - b * (2.0 * (1.0 - u)).ln()
                }
            }
            ErrorLaw::Cauchy { x0, gamma } => x0 + gamma * (PI * (u - 0.5)).tan(),
            ErrorLaw::Uniform { lo, hi } => lo + (hi - lo) * u,
            ErrorLaw::Logistic { mu, s } => mu + s * (u / (1.0 - u)).ln(),
            ErrorLaw::Convolution(_, _) => self.invert_cdf(u),
        }
    }

    fn invert_cdf(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = self.window();
        let mut f_lo = self.cdf(lo) - u;
        let mut f_hi = self.cdf(hi) - u;
        let mut widen = 0;
        while f_lo > 0.0 && widen < 60 {
            lo -= (hi - lo).max(1.0);
            f_lo = self.cdf(lo) - u;
            widen += 1;
        }
        while f_hi < 0.0 && widen < 120 {
            hi += (hi - lo).max(1.0);
            f_hi = self.cdf(hi) - u;
            widen += 1;
        }
        let mut x = self.median_hint().clamp(lo, hi);
        for _ in 0..200 {
            let fx = self.cdf(x) - u;
            if fx == 0.0 {
                return x;
            }
            if fx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.pdf(x);
            let newton = x - fx / d;
            x = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (hi - lo).abs() <= 1e-13 * (1.0 + x.abs()) || fx.abs() < 1e-15 {
                break;
            }
        }
        x
    }

    /// Draw `n` values from the `(seed)` sampling stream.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut s = rng::stream(seed, Domain::Sampling, 0, 0);
        (0..n).map(|_| self.draw(&mut s)).collect()
    }

    /// One draw from an explicit stream.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::Normal { mu, sigma } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                mu + sigma * z
            }
            ErrorLaw::Convolution(a, b) => a.draw(rng) + b.draw(rng),
            _ => {
                let u: f64 = rng.sample(Open01);
                self.quantile(u)
            }
        }
    }

    /// Effective support: the `WINDOW_TAIL` and `1 - WINDOW_TAIL` quantiles
    /// (exact support for uniform laws; sum of the factor windows for
    /// convolutions).
    pub fn window(&self) -> (f64, f64) {
        match self {
            ErrorLaw::Uniform { lo, hi } => (*lo, *hi),
            ErrorLaw::Convolution(a, b) => {
                let (la, ua) = a.window();
                let (lb, ub) = b.window();
                (la + lb, ua + ub)
            }
            _ => (self.quantile(WINDOW_TAIL), self.quantile(1.0 - WINDOW_TAIL)),
        }
    }

    fn window_width(&self) -> f64 {
        let (lo, hi) = self.window();
        hi - lo
    }

    /// A location hint (exact median for symmetric factors).
    pub fn median_hint(&self) -> f64 {
        match self {
            ErrorLaw::Normal { mu, .. } | ErrorLaw::Laplace { mu, .. } | ErrorLaw::Logistic { mu, .. } => *mu,
            ErrorLaw::Cauchy { x0, .. } => *x0,
            ErrorLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            ErrorLaw::Convolution(a, b) => a.median_hint() + b.median_hint(),
        }
    }

    /// A dispersion hint: the half-width of the central 50% for the base
    /// laws, summed over convolution factors.
    pub fn scale(&self) -> f64 {
        match self {
            ErrorLaw::Convolution(a, b) => a.scale() + b.scale(),
            _ => 0.5 * (self.quantile(0.75) - self.quantile(0.25)),
        }
    }

    /// Integration nodes for functionals of the density: the effective
    /// window widened threefold about the location, split at the usual
    /// breakpoints.
    pub(crate) fn integration_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.window();
        let (lo, hi) = match self {
            ErrorLaw::Uniform { .. } => (lo, hi),
            _ => {
                let m = self.median_hint();
                (m - 3.0 * (m - lo), m + 3.0 * (hi - m))
            }
        };
        partition(lo, hi, breakpoints(self, 0.0))
    }

    /// Whether the law is symmetric about its median hint.
    pub fn is_symmetric(&self) -> bool {
        match self {
            ErrorLaw::Convolution(a, b) => a.is_symmetric() && b.is_symmetric(),
            _ => true,
        }
    }
}

/// Candidate breakpoints for integrals against `law`'s density, shifted by
/// `offset`: the location, support edges and a geometric ladder of scales.
fn breakpoints(law: &ErrorLaw, offset: f64) -> impl Iterator<Item = f64> {
    let m = law.median_hint() + offset;
    let s = law.scale();
    let (lo, hi) = law.window();
    const LADDER: [f64; 9] = [0.5, 1.0, 2.0, 4.0, 10.0, 30.0, 1e2, 1e4, 1e6];
    let mut pts = vec![m, lo + offset, hi + offset];
    if let ErrorLaw::Convolution(a, b) = law {
        pts.extend(breakpoints(a, offset + b.median_hint()));
        pts.extend(breakpoints(b, offset + a.median_hint()));
    }
    for k in LADDER {
        pts.push(m - k * s);
        pts.push(m + k * s);
    }
    pts.into_iter()
}

/// `∫ g(a, t - s) f_b(s) ds` over the intersection of the effective windows.
fn convolve_at(a: &ErrorLaw, b: &ErrorLaw, t: f64, g: impl Fn(&ErrorLaw, f64) -> f64) -> Result<f64> {
    let (la, ua) = a.window();
    let (lb, ub) = b.window();
    let lo = lb.max(t - ua);
    let hi = ub.min(t - la);
    if lo >= hi {
        return Ok(0.0);
    }
    let pts = partition(lo, hi, breakpoints(b, 0.0).chain(breakpoints(a, 0.0).map(|m| t - m)));
    let r = integrate_adaptive(|s| g(a, t - s) * b.pdf(s), &pts, CONV_ABS_TOL, CONV_REL_TOL)?;
    Ok(r.value)
}

/// The law of the sum of independent draws from `a` and `b`.
///
/// Validates the result by checking that the convolved density carries
/// unit mass.
pub fn convolve_densities(a: &ErrorLaw, b: &ErrorLaw) -> Result<ErrorLaw> {
    a.validate()?;
    b.validate()?;
    let h = ErrorLaw::Convolution(Box::new(a.clone()), Box::new(b.clone()));
    let m = h.median_hint();
    let s = h.scale();
    let (lo, hi) = h.window();
    let pts = partition(lo, hi, breakpoints(&h, 0.0).chain([m - 3.0 * s, m + 3.0 * s]));
    let mass = integrate_adaptive(|t| h.density(t).unwrap_or(f64::NAN), &pts, 1e-10, 1e-10)?;
    if (mass.value - 1.0).abs() > 1e-6 {
        return Err(Error::Quadrature {
            what: format!("convolution {h} integrates to {}", mass.value),
            achieved: (mass.value - 1.0).abs(),
        });
    }
    Ok(h)
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorLaw::Normal { mu, sigma } => write!(f, "normal:{mu},{sigma}"),
            ErrorLaw::Laplace { mu, b } => write!(f, "laplace:{mu},{b}"),
            ErrorLaw::Cauchy { x0, gamma } => write!(f, "cauchy:{x0},{gamma}"),
            ErrorLaw::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            ErrorLaw::Logistic { mu, s } => write!(f, "logistic:{mu},{s}"),
            ErrorLaw::Convolution(a, b) => write!(f, "{a}+{b}"),
        }
    }
}

impl FromStr for ErrorLaw {
    type Err = Error;

    /// Parses `family:p1,p2`, with `+` joining convolution factors
    /// (e.g. `normal:0,1+uniform:-1,1`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bytes = s.as_bytes();
        if let Some(pos) = (1..bytes.len()).rev().find(|&i| bytes[i - 1] == b'+' && bytes[i].is_ascii_alphabetic()) {
            let left: ErrorLaw = s[..pos - 1].parse()?;
            let right: ErrorLaw = s[pos..].parse()?;
            return Ok(ErrorLaw::Convolution(Box::new(left), Box::new(right)));
        }
        let bad = || Error::InvalidArgument(format!("cannot parse law '{s}' (expected e.g. normal:0,1)"));
        let (family, params) = s.split_once(':').ok_or_else(bad)?;
        let vals: Vec<f64> = params
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        if vals.len() != 2 {
            return Err(bad());
        }
        let (p1, p2) = (vals[0], vals[1]);
        let law = match family.trim().to_ascii_lowercase().as_str() {
            "normal" | "n" => ErrorLaw::Normal { mu: p1, sigma: p2 },
            "laplace" | "l" => ErrorLaw::Laplace { mu: p1, b: p2 },
            "cauchy" => ErrorLaw::Cauchy { x0: p1, gamma: p2 },
            "uniform" | "u" => ErrorLaw::Uniform { lo: p1, hi: p2 },
            "logistic" => ErrorLaw::Logistic { mu: p1, s: p2 },
            _ => return Err(bad()),
        };
        law.validate()?;
        Ok(law)
    }
}

impl TryFrom<String> for ErrorLaw {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ErrorLaw> for String {
    fn from(l: ErrorLaw) -> String {
        l.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtins() -> Vec<ErrorLaw> {
        vec![
            ErrorLaw::standard_normal(),
            ErrorLaw::Normal { mu: 1.0, sigma: 0.7 },
            ErrorLaw::Laplace { mu: 0.0, b: 1.0 },
            ErrorLaw::Cauchy { x0: 0.0, gamma: 1.0 },
            ErrorLaw::Uniform { lo: -1.0, hi: 1.0 },
            ErrorLaw::Logistic { mu: 0.0, s: 1.0 },
        ]
    }

    #[test]
    fn quantile_inverts_cdf_on_grid() {
        for law in builtins() {
            for k in 1..100 {
                let u = k as f64 / 100.0;
                let back = law.cdf(law.quantile(u));
                assert!((back - u).abs() < 1e-8, "{law} at {u}: {back}");
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for law in builtins() {
            let (lo, hi) = law.window();
            let pts = partition(lo, hi, breakpoints(&law, 0.0));
            let m = integrate_adaptive(|t| law.pdf(t), &pts, 1e-12, 1e-12).unwrap();
            assert!((m.value - 1.0).abs() < 1e-6, "{law}: {}", m.value);
        }
    }

    #[test]
    fn normal_self_convolution_density_at_zero() {
        let n = ErrorLaw::standard_normal();
        let h = convolve_densities(&n, &n).unwrap();
        let expect = 1.0 / (4.0 * PI).sqrt();
        assert!((h.pdf(0.0) - expect).abs() < 1e-6);
    }

    #[test]
    fn convolution_with_tiny_uniform_is_near_identity() {
        let eps = 1e-6;
        for law in [ErrorLaw::standard_normal(), ErrorLaw::Logistic { mu: 0.0, s: 1.0 }] {
            let h = convolve_densities(&law, &ErrorLaw::Uniform { lo: -eps, hi: eps }).unwrap();
            for &t in &[-2.0, -0.3, 0.0, 1.1, 3.0] {
                assert!((h.pdf(t) - law.pdf(t)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn normal_uniform_convolution_closed_form() {
        let h = convolve_densities(&ErrorLaw::standard_normal(), &ErrorLaw::Uniform { lo: -1.0, hi: 1.0 }).unwrap();
        let expect = (normal::cdf(1.0) - normal::cdf(-1.0)) / 2.0;
        assert!((h.pdf(0.0) - expect).abs() < 1e-6);
        assert!((expect - 0.34134).abs() < 1e-5);
        // Distribution function and quantile of the convolution.
        let t = 0.8;
        let expect_cdf = {
            // ∫_{-1}^{1} Φ(t - s)/2 ds by the integrated normal cdf.
            let g = |x: f64| x * normal::cdf(x) + normal::pdf(x);
            (g(t + 1.0) - g(t - 1.0)) / 2.0
        };
        assert!((h.cdf(t) - expect_cdf).abs() < 1e-9);
        let u = 0.83;
        assert!((h.cdf(h.quantile(u)) - u).abs() < 1e-9);
    }

    #[test]
    fn convolution_of_symmetric_laws_is_symmetric() {
        let pairs = [
            (ErrorLaw::Cauchy { x0: 0.0, gamma: 1.0 }, ErrorLaw::Normal { mu: 0.0, sigma: 2.0 }),
            (ErrorLaw::Laplace { mu: 0.0, b: 1.0 }, ErrorLaw::Uniform { lo: -1.0, hi: 1.0 }),
        ];
        for (a, b) in pairs {
            let h = convolve_densities(&a, &b).unwrap();
            for &t in &[0.3, 1.0, 2.5, 7.0] {
                assert!((h.pdf(t) - h.pdf(-t)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn convolution_derivative_matches_difference_quotient() {
        let h = convolve_densities(&ErrorLaw::Laplace { mu: 0.0, b: 1.0 }, &ErrorLaw::Uniform { lo: -1.0, hi: 1.0 })
            .unwrap();
        let g = convolve_densities(&ErrorLaw::standard_normal(), &ErrorLaw::Uniform { lo: -1.0, hi: 1.0 }).unwrap();
        for law in [h, g] {
            for &t in &[-1.7, 0.4, 2.2] {
                let step = 1e-4;
                let fd = (law.pdf(t + step) - law.pdf(t - step)) / (2.0 * step);
                assert!((law.pdf_derivative(t).unwrap() - fd).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_supported() {
        let u = ErrorLaw::Uniform { lo: 0.0, hi: 1.0 };
        let xs = u.sample(10_000, 3);
        assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
        assert_eq!(xs, u.sample(10_000, 3));
        assert_ne!(xs, u.sample(10_000, 4));
    }

    #[test]
    fn normal_sample_mean_within_clt_bound() {
        let xs = ErrorLaw::standard_normal().sample(1_000_000, 11);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 4.0 / 1000.0);
    }

    #[test]
    fn cauchy_tail_frequency() {
        let n = 1_000_000;
        let xs = ErrorLaw::Cauchy { x0: 0.0, gamma: 1.0 }.sample(n, 5);
        let p = 2.0 * (0.5 - 10f64.atan() / PI);
        let hits = xs.iter().filter(|x| x.abs() > 10.0).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits - p).abs() < 3.0 * se, "{hits} vs {p}");
        assert!((p - 0.0635).abs() < 1e-3);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["normal:0,1", "laplace:0,1", "cauchy:0,1", "uniform:-1,1", "logistic:0,2", "normal:0,1+uniform:-1,1"] {
            let law: ErrorLaw = s.parse().unwrap();
            assert_eq!(law.to_string(), s);
        }
        assert!("normal:0".parse::<ErrorLaw>().is_err());
        assert!("normal:0,-1".parse::<ErrorLaw>().is_err());
        assert!("gamma:1,1".parse::<ErrorLaw>().is_err());
    }
}
