//! Monte Carlo power studies for partially linear models with a covariate
//! observed under measurement error.
//!
//! Data follow `y_i = β₀ + x_i β₁ + ν(w_i) + e_i` with `w_i = z_i + η_i`,
//! where `ν(w)` is `γ w`, `δ w²` or `sin w`. The design `x` and the latent
//! covariate `z` are drawn once per `(n, design_seed)` and held fixed.

use std::fmt;
use std::io::Write;

use rand::distr::Open01;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ancova::ancova_from_ranks;
use crate::anova::anova_from_ranks;
use crate::design::{build_design_1d, Design};
use crate::distributions::ErrorLaw;
use crate::error::{Error, Result};
use crate::ranking::{self, TiePolicy};
use crate::result::{PermutationSpec, TestOptions, TestResult};
use crate::rng::{self, Domain, Stream};
use crate::scorekit::{self, ScoreFunction, ScoreKind, ScoreMode};

pub const X_RANGE: (f64, f64) = (-2.0, 10.0);
pub const Z_RANGE: (f64, f64) = (-10.0, 30.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `ν(w) = γ w`.
    Linear,
    /// `ν(w) = δ w²`.
    Quadratic,
    /// `ν(w) = sin w`.
    Sine,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Quadratic => "quadratic",
            ModelKind::Sine => "sine",
        })
    }
}

/// How each replication's test decision is calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Calibration {
    /// Reject when the asymptotic χ²_p p-value is at most α.
    #[default]
    Asymptotic,
    /// Reject when a Monte Carlo permutation p-value with `b` draws is at
    /// most α.
    Permutation { b: usize },
}

fn default_beta0() -> f64 {
    1.0
}
fn default_grid() -> Vec<f64> {
    (-5..=5).map(|k| k as f64 / 10.0).collect()
}
fn default_gamma() -> f64 {
    3.0
}
fn default_delta() -> f64 {
    -2.0
}
fn default_error_law() -> ErrorLaw {
    ErrorLaw::standard_normal()
}
fn default_replications() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_scores() -> ScoreKind {
    ScoreKind::Wilcoxon
}

/// A power-study scenario. Omitted fields take the standard study values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    pub n: usize,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    #[serde(default = "default_grid")]
    pub beta1_grid: Vec<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_error_law")]
    pub error_law: ErrorLaw,
    #[serde(default)]
    pub noise_law: Option<ErrorLaw>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_scores")]
    pub score_kind: ScoreKind,
    #[serde(default)]
    pub score_mode: ScoreMode,
    pub seed: u64,
    pub design_seed: u64,
    #[serde(default)]
    pub calibration: Calibration,
    /// Draw a fresh latent covariate `z` in every replication instead of
    /// holding it fixed with the design.
    #[serde(default)]
    pub redraw_latent: bool,
}

impl ScenarioConfig {
    /// Standard scenario for `model` and `n` with the given seeds.
    pub fn standard(model: ModelKind, n: usize, seed: u64, design_seed: u64) -> Self {
        Self {
            model,
            n,
            beta0: default_beta0(),
            beta1_grid: default_grid(),
            gamma: default_gamma(),
            delta: default_delta(),
            error_law: default_error_law(),
            noise_law: None,
            replications: default_replications(),
            alpha: default_alpha(),
            score_kind: default_scores(),
            score_mode: ScoreMode::Approximate,
            seed,
            design_seed,
            calibration: Calibration::Asymptotic,
            redraw_latent: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n < 4 {
            return Err(Error::InvalidArgument(format!("n must be at least 4, got {}", self.n)));
        }
        if self.beta1_grid.is_empty() {
            return Err(Error::InvalidArgument("beta1_grid is empty".into()));
        }
        if self.score_kind == ScoreKind::Custom {
            return Err(Error::InvalidArgument("simulation supports the built-in scores only".into()));
        }
        if let Calibration::Permutation { b } = self.calibration {
            if b < crate::permute::MIN_DRAWS {
                return Err(Error::InvalidArgument(format!("permutation calibration needs b >= 99, got {b}")));
            }
        }
        let finite = [self.beta0, self.gamma, self.delta].iter().chain(&self.beta1_grid).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("model parameters must be finite".into()));
        }
        self.error_law.validate()?;
        if let Some(l) = &self.noise_law {
            l.validate()?;
        }
        Ok(())
    }

    fn nu(&self, w: f64) -> f64 {
        match self.model {
            ModelKind::Linear => self.gamma * w,
            ModelKind::Quadratic => self.delta * w * w,
            ModelKind::Sine => w.sin(),
        }
    }
}

fn uniform_on<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.sample(Open01);
    lo + (hi - lo) * u
}

/// Design points `x ~ U(-2, 10)` and latent covariate `z ~ U(-10, 30)`,
/// determined by `(n, design_seed)`.
pub fn fixed_design(n: usize, design_seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("n must be at least 4, got {n}")));
    }
    let mut rng = rng::stream(design_seed, Domain::Design, n as u32, 0);
    let x = (0..n).map(|_| uniform_on(&mut rng, X_RANGE)).collect();
    let z = (0..n).map(|_| uniform_on(&mut rng, Z_RANGE)).collect();
    Ok((x, z))
}

/// One simulated data set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

/// Draws `e` (then `η`, when a noise law is set) from `rep_stream` and
/// assembles the responses.
pub fn generate_dataset<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    beta1: f64,
    x: &[f64],
    z: &[f64],
    rep_stream: &mut R,
) -> Dataset {
    let n = x.len();
    let e: Vec<f64> = (0..n).map(|_| cfg.error_law.draw(rep_stream)).collect();
    let w: Vec<f64> = match &cfg.noise_law {
        Some(noise) => z.iter().map(|&zi| zi + noise.draw(rep_stream)).collect(),
        None => z.to_vec(),
    };
    let y = (0..n).map(|i| cfg.beta0 + x[i] * beta1 + cfg.nu(w[i]) + e[i]).collect();
    Dataset { y, x: x.to_vec(), w }
}

/// Rejection rates at one value of `β₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub beta1: f64,
    pub rejection_rate_anova: f64,
    pub rejection_rate_ancova: f64,
    /// Larger of the two binomial standard errors `√(r(1-r)/R)`.
    pub mc_standard_error: f64,
    pub errors_anova: usize,
    pub errors_ancova: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub config: ScenarioConfig,
    pub points: Vec<PowerPoint>,
}

impl PowerCurve {
    pub fn point(&self, beta1: f64) -> Option<&PowerPoint> {
        self.points.iter().find(|p| (p.beta1 - beta1).abs() < 1e-12)
    }

    /// Plot-ready CSV: `beta1, power_anova, power_ancova, mc_se, n, model,
    /// error_law, noise_law, scores, seed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wtr.write_record([
            "beta1",
            "power_anova",
            "power_ancova",
            "mc_se",
            "n",
            "model",
            "error_law",
            "noise_law",
            "scores",
            "seed",
        ])
        .map_err(io)?;
        let c = &self.config;
        let noise = c.noise_law.as_ref().map_or_else(|| "none".to_string(), |l| l.to_string());
        for p in &self.points {
            wtr.write_record([
                p.beta1.to_string(),
                p.rejection_rate_anova.to_string(),
                p.rejection_rate_ancova.to_string(),
                p.mc_standard_error.to_string(),
                c.n.to_string(),
                c.model.to_string(),
                c.error_law.to_string(),
                noise.clone(),
                c.score_kind.to_string(),
                c.seed.to_string(),
            ])
            .map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    reject_anova: usize,
    reject_ancova: usize,
    ok_anova: usize,
    ok_ancova: usize,
}

impl std::ops::Add for Tally {
    type Output = Tally;
    fn add(self, o: Tally) -> Tally {
        Tally {
            reject_anova: self.reject_anova + o.reject_anova,
            reject_ancova: self.reject_ancova + o.reject_ancova,
            ok_anova: self.ok_anova + o.ok_anova,
            ok_ancova: self.ok_ancova + o.ok_ancova,
        }
    }
}

fn rate(rejections: usize, ok: usize) -> f64 {
    if ok == 0 {
        f64::NAN
    } else {
        rejections as f64 / ok as f64
    }
}

/// Runs every `(β₁, replication)` cell and tallies rejections of both
/// tests. Failed cells are counted per test and excluded from its rate.
pub fn run_power_study(cfg: &ScenarioConfig) -> Result<PowerCurve> {
    cfg.validate()?;
    let n = cfg.n;
    let (x, z_fixed) = fixed_design(n, cfg.design_seed)?;
    let design = build_design_1d(&x)?;
    let phi = ScoreFunction::from_kind(cfg.score_kind)?;
    let a = scorekit::scores(&phi, n, cfg.score_mode)?;
    let a2 = scorekit::score_norm_sq(&phi)?;
    let grid_len = u32::try_from(cfg.beta1_grid.len())
        .map_err(|_| Error::InvalidArgument("beta1_grid is too long".into()))?;

    let cell = |bi: u32, rep: u32| -> Tally {
        let mut stream = rng::stream(cfg.seed, Domain::Replication, bi, rep);
        let z_rep;
        let z = if cfg.redraw_latent {
            z_rep = (0..n).map(|_| uniform_on(&mut stream, Z_RANGE)).collect::<Vec<_>>();
            &z_rep
        } else {
            &z_fixed
        };
        let data = generate_dataset(cfg, cfg.beta1_grid[bi as usize], &x, z, &mut stream);
        let opts = TestOptions {
            ties: TiePolicy::ErrorOnTies,
            score_mode: cfg.score_mode,
            permutation: match cfg.calibration {
                Calibration::Asymptotic => PermutationSpec::None,
                Calibration::Permutation { b } => PermutationSpec::MonteCarlo { b, seed: stream.next_u64() },
            },
        };
        let decide = |r: &TestResult| match cfg.calibration {
            Calibration::Asymptotic => r.p_asymptotic <= cfg.alpha,
            Calibration::Permutation { .. } => r.p_permutation.is_some_and(|p| p <= cfg.alpha),
        };
        let mut t = Tally::default();
        let anova = ranking::ranks(&data.y, opts.ties).and_then(|r| anova_from_ranks(&design, &r, &phi, &a, a2, &opts));
        if let Ok(r) = anova {
            t.ok_anova = 1;
            t.reject_anova = decide(&r) as usize;
        }
        let w_rows: Vec<Vec<f64>> = data.w.iter().map(|&v| vec![v]).collect();
        let ancova = ranking::rank_collection(&data.y, &w_rows, opts.ties)
            .and_then(|rc| ancova_from_ranks(&design, &rc, &phi, &a, &opts));
        if let Ok(r) = ancova {
            t.ok_ancova = 1;
            t.reject_ancova = decide(&r) as usize;
        }
        t
    };

    let reps = u32::try_from(cfg.replications)
        .map_err(|_| Error::InvalidArgument("replications exceed the stream index range".into()))?;
    let points = (0..grid_len)
        .map(|bi| {
            let t = (0..reps).into_par_iter().map(|rep| cell(bi, rep)).reduce(Tally::default, |a, b| a + b);
            let ra = rate(t.reject_anova, t.ok_anova);
            let rc = rate(t.reject_ancova, t.ok_ancova);
            let se = |r: f64| (r * (1.0 - r) / cfg.replications as f64).sqrt();
            PowerPoint {
                beta1: cfg.beta1_grid[bi as usize],
                rejection_rate_anova: ra,
                rejection_rate_ancova: rc,
                mc_standard_error: se(ra).max(se(rc)),
                errors_anova: cfg.replications - t.ok_anova,
                errors_ancova: cfg.replications - t.ok_ancova,
            }
        })
        .collect();
    Ok(PowerCurve { config: cfg.clone(), points })
}

/// Monte Carlo stream for an ad hoc replication outside a power study.
pub fn replication_stream(seed: u64, beta_index: u32, replication: u32) -> Stream {
    rng::stream(seed, Domain::Replication, beta_index, replication)
}

/// Design of a scenario as a fitted [`Design`].
pub fn scenario_design(cfg: &ScenarioConfig) -> Result<Design> {
    let (x, _) = fixed_design(cfg.n, cfg.design_seed)?;
    build_design_1d(&x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_law() -> ErrorLaw {
        ErrorLaw::Uniform { lo: 0.0, hi: 1e-300 }
    }

    fn quiet(model: ModelKind) -> ScenarioConfig {
        ScenarioConfig { error_law: zero_law(), ..ScenarioConfig::standard(model, 4, 1, 1) }
    }

    #[test]
    fn generator_plugs_in_model_terms() {
        let mut s = replication_stream(0, 0, 0);
        let d = generate_dataset(&quiet(ModelKind::Linear), 0.0, &[0.0], &[1.0], &mut s);
        assert!((d.y[0] - 4.0).abs() < 1e-12);
        let d = generate_dataset(&quiet(ModelKind::Quadratic), 0.0, &[0.0], &[2.0], &mut s);
        assert!((d.y[0] + 7.0).abs() < 1e-12);
        let d = generate_dataset(&quiet(ModelKind::Sine), 0.0, &[0.0], &[0.0], &mut s);
        assert!((d.y[0] - 1.0).abs() < 1e-12);
        let d = generate_dataset(&quiet(ModelKind::Linear), 2.0, &[1.5], &[0.0], &mut s);
        assert!((d.y[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn design_ranges_and_determinism() {
        let (x, z) = fixed_design(500, 11).unwrap();
        assert!(x.iter().all(|&v| v > -2.0 && v < 10.0));
        assert!(z.iter().all(|&v| v > -10.0 && v < 30.0));
        assert_eq!(fixed_design(500, 11).unwrap(), (x.clone(), z));
        assert_ne!(fixed_design(500, 12).unwrap().0, x);
        assert_ne!(fixed_design(100, 11).unwrap().0[..100], x[..100]);
    }

    #[test]
    fn noise_enters_covariate_only() {
        let cfg = ScenarioConfig { noise_law: Some(ErrorLaw::Normal { mu: 0.0, sigma: 0.7 }), ..quiet(ModelKind::Linear) };
        let mut s = replication_stream(3, 0, 0);
        let d = generate_dataset(&cfg, 0.0, &[0.0; 3], &[1.0, 2.0, 3.0], &mut s);
        for i in 0..3 {
            assert!((d.y[i] - (1.0 + 3.0 * d.w[i])).abs() < 1e-9);
        }
        assert!(d.w.iter().zip([1.0, 2.0, 3.0]).any(|(w, z)| (w - z).abs() > 1e-6));
    }

    #[test]
    fn config_validation_and_defaults() {
        let cfg: ScenarioConfig =
            serde_json::from_str(r#"{"model":"quadratic","n":20,"seed":1,"design_seed":2}"#).unwrap();
        assert_eq!(cfg.beta1_grid.len(), 11);
        assert_eq!(cfg.replications, 10_000);
        assert_eq!(cfg.error_law, ErrorLaw::standard_normal());
        assert_eq!(cfg.delta, -2.0);
        assert!(ScenarioConfig { n: 3, ..cfg.clone() }.validate().is_err());
        assert!(ScenarioConfig { alpha: 1.0, ..cfg.clone() }.validate().is_err());
        assert!(ScenarioConfig { replications: 0, ..cfg.clone() }.validate().is_err());
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"model":"linear","n":20,"seed":1,"design_seed":2,"bogus":1}"#).is_err());
    }

    #[test]
    fn study_is_deterministic_across_thread_counts() {
        let cfg = ScenarioConfig {
            beta1_grid: vec![0.0, 0.3],
            replications: 200,
            noise_law: Some(ErrorLaw::Normal { mu: 0.0, sigma: 0.7 }),
            ..ScenarioConfig::standard(ModelKind::Sine, 30, 5, 6)
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| run_power_study(&cfg).unwrap());
        let b = run_power_study(&cfg).unwrap();
        assert_eq!(a, b);
        for p in &a.points {
            assert!((0.0..=1.0).contains(&p.rejection_rate_anova));
            let r = p.rejection_rate_anova;
            let se = (r * (1.0 - r) / 200.0).sqrt();
            assert!(p.mc_standard_error >= se);
        }
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("beta1,power_anova,power_ancova,mc_se,n,model,error_law,noise_law,scores,seed\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
