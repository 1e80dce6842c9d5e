//! Rank analysis of covariance: covariate rank statistics, the rank-score
//! covariance `V_n`, its Schur complement, and the residual criterion
//! `L_n⁰ = T_n0:1ᵀ Q_n⁻¹ T_n0:1 / v_n00.1`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::anova::{centered_sum, permutation_p};
use crate::design::Design;
use crate::distributions::chisq_sf;
use crate::error::{Error, Result};
use crate::permute::RankQuadraticForm;
use crate::ranking::{self, RankCollection};
use crate::result::{Diagnostics, Method, TestOptions, TestResult};
use crate::scorekit::{self, ScoreFunction, ScoreVector};

/// Relative eigenvalue cutoff for the pseudo-inverse of `V_n11`.
pub const PINV_CUTOFF: f64 = 1e-10;

/// `v_n00.1 / v_n00` at or below which the covariates are taken to
/// determine the response ranks.
pub const DEGENERATE_RATIO: f64 = 1e-10;

/// Intermediate quantities of the covariance-adjusted test.
#[derive(Debug, Clone, PartialEq)]
pub struct AncovaWork {
    /// `p × (q+1)`, column `j` is `T_nj`.
    pub t_matrix: DMatrix<f64>,
    pub v_n: DMatrix<f64>,
    pub v_00: f64,
    pub v_0: DVector<f64>,
    pub v_11: DMatrix<f64>,
    pub v_00_1: f64,
    /// `V_n11⁺ v_n0`.
    pub weights: DVector<f64>,
    /// `T_n0:1 = T_n0 - Σ_j w_j T_nj`.
    pub t_resid: DVector<f64>,
    pub rank_deficient: bool,
    /// Per-unit residual scores `a(R_i⁽⁰⁾) - Σ_j w_j a(R_i⁽ʲ⁾)`.
    pub residual_scores: Vec<f64>,
}

/// Schur complement of the leading entry of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Schur {
    pub v_00_1: f64,
    pub weights: DVector<f64>,
    /// Whether the trailing block needed the pseudo-inverse.
    pub rank_deficient: bool,
}

/// Columns `T_nj = n^{-1/2} Σ_i (x_i - x̄) a(R_i⁽ʲ⁾)`, `j = 0..q`.
pub fn covariate_rank_stats(d: &Design, rc: &RankCollection, a: &ScoreVector) -> Result<DMatrix<f64>> {
    check_dims(d, rc, a)?;
    let scored = rc.scored(a)?;
    let mut t = DMatrix::zeros(d.p(), scored.len());
    for (j, row) in scored.iter().enumerate() {
        t.set_column(j, &centered_sum(d, row));
    }
    Ok(t)
}

/// `v_njl = (n-1)⁻¹ Σ_i (a(R_i⁽ʲ⁾) - ā)(a(R_i⁽ˡ⁾) - ā)`.
pub fn rank_score_cov(rc: &RankCollection, a: &ScoreVector) -> Result<DMatrix<f64>> {
    let n = rc.n();
    if n < 2 {
        return Err(Error::InsufficientData("rank-score covariance needs n >= 2".into()));
    }
    let scored = rc.scored(a)?;
    Ok(covariance_of_rows(&scored, a.mean()))
}

fn covariance_of_rows(scored: &[Vec<f64>], abar: f64) -> DMatrix<f64> {
    let k = scored.len();
    let n = scored[0].len();
    let centered: Vec<Vec<f64>> = scored.iter().map(|r| r.iter().map(|v| v - abar).collect()).collect();
    let mut v = DMatrix::zeros(k, k);
    for j in 0..k {
        for l in j..k {
            let s: f64 = centered[j].iter().zip(&centered[l]).map(|(x, y)| x * y).sum::<f64>() / (n as f64 - 1.0);
            v[(j, l)] = s;
            v[(l, j)] = s;
        }
    }
    v
}

/// `v_00.1 = v_00 - v_0ᵀ V_11⁺ v_0` together with the weights `V_11⁺ v_0`.
pub fn schur_complement(v: &DMatrix<f64>) -> Result<Schur> {
    let k = v.nrows();
    if k != v.ncols() || k < 2 {
        return Err(Error::Dimension(format!("Schur complement needs a square matrix of size >= 2, got {:?}", v.shape())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite entry in covariance matrix".into()));
    }
    let v_00 = v[(0, 0)];
    let v_0 = v.view((1, 0), (k - 1, 1)).into_owned();
    let v_11 = v.view((1, 1), (k - 1, k - 1)).into_owned();
    let v_11 = (&v_11 + v_11.transpose()) * 0.5;
    let eig = SymmetricEigen::new(v_11);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_CUTOFF * max_ev;
    let mut weights = DVector::zeros(k - 1);
    let mut explained = 0.0;
    let mut rank_deficient = false;
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if !(lambda > cutoff) {
            rank_deficient = true;
            continue;
        }
        let u = eig.eigenvectors.column(idx);
        let proj = u.dot(&v_0.column(0));
        weights += u * (proj / lambda);
        explained += proj * proj / lambda;
    }
    if rank_deficient {
        log::warn!("covariate rank-score block is singular; using its pseudo-inverse");
    }
    Ok(Schur { v_00_1: v_00 - explained, weights, rank_deficient })
}

/// Every intermediate of the covariance-adjusted test.
pub fn ancova_work(d: &Design, rc: &RankCollection, a: &ScoreVector) -> Result<AncovaWork> {
    check_dims(d, rc, a)?;
    let scored = rc.scored(a)?;
    let q = scored.len() - 1;
    let v_n = covariance_of_rows(&scored, a.mean());
    let schur = schur_complement(&v_n)?;
    let v_00 = v_n[(0, 0)];
    let mut t_matrix = DMatrix::zeros(d.p(), q + 1);
    for (j, row) in scored.iter().enumerate() {
        t_matrix.set_column(j, &centered_sum(d, row));
    }
    let t_resid = t_matrix.column(0) - t_matrix.columns(1, q) * &schur.weights;
    let residual_scores: Vec<f64> = (0..d.n())
        .map(|i| scored[0][i] - (0..q).map(|j| schur.weights[j] * scored[j + 1][i]).sum::<f64>())
        .collect();
    Ok(AncovaWork {
        v_0: v_n.view((1, 0), (q, 1)).column(0).into_owned(),
        v_11: v_n.view((1, 1), (q, q)).into_owned(),
        t_matrix,
        v_00,
        v_00_1: schur.v_00_1,
        weights: schur.weights,
        t_resid,
        rank_deficient: schur.rank_deficient,
        residual_scores,
        v_n,
    })
}

fn check_dims(d: &Design, rc: &RankCollection, a: &ScoreVector) -> Result<()> {
    if rc.rows.len() < 2 {
        return Err(Error::Dimension("rank collection needs the response and at least one covariate".into()));
    }
    if rc.rows.iter().any(|r| r.len() != d.n()) || a.len() != d.n() {
        return Err(Error::Dimension(format!("design has n = {}, rank rows or scores differ", d.n())));
    }
    Ok(())
}

/// Covariance-adjusted rank test of `β = 0`; `w` holds `n` rows of `q`
/// covariate values.
pub fn ancova_rank_test(
    d: &Design,
    y: &[f64],
    w: &[Vec<f64>],
    phi: &ScoreFunction,
    opts: &TestOptions,
) -> Result<TestResult> {
    if y.len() != d.n() {
        return Err(Error::Dimension(format!("response has {} values, design has n = {}", y.len(), d.n())));
    }
    scorekit::score_norm_sq(phi)?;
    let a = scorekit::scores(phi, d.n(), opts.score_mode)?;
    let rc = ranking::rank_collection(y, w, opts.ties)?;
    ancova_from_ranks(d, &rc, phi, &a, opts)
}

/// Test on a precomputed rank collection and score vector.
pub fn ancova_from_ranks(
    d: &Design,
    rc: &RankCollection,
    phi: &ScoreFunction,
    a: &ScoreVector,
    opts: &TestOptions,
) -> Result<TestResult> {
    let work = ancova_work(d, rc, a)?;
    if !(work.v_00_1 > DEGENERATE_RATIO * work.v_00) {
        return Err(Error::DegenerateCovariate { v00_1: work.v_00_1, v00: work.v_00 });
    }
    let form = RankQuadraticForm::new(d, work.residual_scores.clone(), work.v_00_1)?;
    let statistic = form.observed();
    let p_permutation = permutation_p(&form, statistic, opts.permutation, Method::AncovaRank)?;
    Ok(TestResult {
        method: Method::AncovaRank,
        statistic,
        df: d.p(),
        p_asymptotic: chisq_sf(statistic, d.p() as u32),
        p_permutation,
        n: d.n(),
        p: d.p(),
        q: rc.q(),
        score_kind: phi.kind(),
        score_label: phi.label().to_string(),
        diagnostics: Diagnostics {
            noether_max: d.noether_max(),
            tie_policy: rc.rows[0].tie_policy,
            score_mode: a.mode,
            norming: work.v_00_1,
            v00: Some(work.v_00),
            v00_1: Some(work.v_00_1),
            covariate_rank_deficient: Some(work.rank_deficient),
            permutation: opts.permutation,
        },
    })
}

/// `L_n = tr(V_n⁻¹ Tᵀ Q_n⁻¹ T)`, the criterion on the stacked vector of all
/// `q+1` rank statistics. Requires `V_n` nonsingular.
pub fn full_criterion(d: &Design, work: &AncovaWork) -> Result<f64> {
    let v_inv = work
        .v_n
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("rank-score covariance is singular".into()))?
        .inverse();
    let g = gram_in_q_metric(d, &work.t_matrix);
    Ok((v_inv * g).trace())
}

/// `L_n* = Σ_{j,l ≥ 1} (V_n11⁻¹)_{jl} T_njᵀ Q_n⁻¹ T_nl`, the covariates-only
/// criterion. With it, `L_n⁰ = L_n - L_n*`.
pub fn covariate_criterion(d: &Design, work: &AncovaWork) -> Result<f64> {
    let q = work.v_11.nrows();
    let v11_inv = work
        .v_11
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("covariate rank-score block is singular".into()))?
        .inverse();
    let g = gram_in_q_metric(d, &work.t_matrix.columns(1, q).into_owned());
    Ok((v11_inv * g).trace())
}

/// `Tᵀ Q_n⁻¹ T`.
fn gram_in_q_metric(d: &Design, t: &DMatrix<f64>) -> DMatrix<f64> {
    let mut solved = t.clone();
    for j in 0..t.ncols() {
        solved.set_column(j, &d.solve(&t.column(j).into_owned()));
    }
    t.transpose() * solved
}

/// Limit `Γ` of the rank-score covariance and its Schur complement.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaLimit {
    pub gamma: DMatrix<f64>,
    pub gamma_00: f64,
    pub gamma_0: DVector<f64>,
    pub gamma_11: DMatrix<f64>,
    pub gamma_00_1: f64,
}

impl GammaLimit {
    pub fn from_matrix(gamma: DMatrix<f64>) -> Result<Self> {
        let schur = schur_complement(&gamma)?;
        let k = gamma.nrows();
        Ok(Self {
            gamma_00: gamma[(0, 0)],
            gamma_0: gamma.view((1, 0), (k - 1, 1)).column(0).into_owned(),
            gamma_11: gamma.view((1, 1), (k - 1, k - 1)).into_owned(),
            gamma_00_1: schur.v_00_1,
            gamma,
        })
    }
}

/// Elementwise average of `V_n` realisations.
pub fn gamma_limit_estimate<I>(samples: I) -> Result<GammaLimit>
where
    I: IntoIterator<Item = DMatrix<f64>>,
{
    let mut sum: Option<DMatrix<f64>> = None;
    let mut count = 0usize;
    for m in samples {
        match &mut sum {
            None => sum = Some(m),
            Some(s) => {
                if s.shape() != m.shape() {
                    return Err(Error::Dimension(format!("sample shape {:?} differs from {:?}", m.shape(), s.shape())));
                }
                *s += m;
            }
        }
        count += 1;
    }
    if count < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 realisations, got {count}")));
    }
    GammaLimit::from_matrix(sum.expect("nonempty") / count as f64)
}
