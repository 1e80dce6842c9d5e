//! The linear rank statistic `S_n` and the rank criterion
//! `T_n² = S_nᵀ Q_n⁻¹ S_n / A²(φ)` for `H0: β = 0`.

use nalgebra::DVector;

use crate::design::Design;
use crate::distributions::chisq_sf;
use crate::error::{Error, Result};
use crate::permute::{self, PermutationMode, PermutationPlan, RankQuadraticForm};
use crate::ranking::{self, RankVector};
use crate::result::{Diagnostics, Method, PermutationSpec, TestOptions, TestResult};
use crate::scorekit::{self, ScoreFunction, ScoreVector};

/// `S_n = n^{-1/2} Σ_i (x_i - x̄) a(R_i)`.
pub fn linear_rank_statistic(d: &Design, r: &RankVector, a: &ScoreVector) -> Result<DVector<f64>> {
    let n = d.n();
    if r.len() != n || a.len() != n {
        return Err(Error::Dimension(format!(
            "design has n = {n}, ranks {}, scores {}",
            r.len(),
            a.len()
        )));
    }
    let scored = r.scored(a)?;
    Ok(centered_sum(d, &scored))
}

pub(crate) fn centered_sum(d: &Design, unit_scores: &[f64]) -> DVector<f64> {
    let xc = d.x_centered();
    let mut s = DVector::zeros(d.p());
    for (i, &a) in unit_scores.iter().enumerate() {
        s += xc.row(i).transpose() * a;
    }
    s / (d.n() as f64).sqrt()
}

/// Rank test of `β = 0` in `Y_i = β₀ + x_iᵀβ + e_i`.
pub fn anova_rank_test(d: &Design, y: &[f64], phi: &ScoreFunction, opts: &TestOptions) -> Result<TestResult> {
    if y.len() != d.n() {
        return Err(Error::Dimension(format!("response has {} values, design has n = {}", y.len(), d.n())));
    }
    let a2 = scorekit::score_norm_sq(phi)?;
    let a = scorekit::scores(phi, d.n(), opts.score_mode)?;
    let r = ranking::ranks(y, opts.ties)?;
    anova_from_ranks(d, &r, phi, &a, a2, opts)
}

/// The same test applied to responses observed with additive measurement
/// error, `W̃_i = Y_i + V_i`. Only the ranks of `W̃` enter.
pub fn anova_rank_test_contaminated(
    d: &Design,
    w_tilde: &[f64],
    phi: &ScoreFunction,
    opts: &TestOptions,
) -> Result<TestResult> {
    anova_rank_test(d, w_tilde, phi, opts)
}

/// Test on precomputed ranks and scores; `a2` is `A²(φ)`.
pub fn anova_from_ranks(
    d: &Design,
    r: &RankVector,
    phi: &ScoreFunction,
    a: &ScoreVector,
    a2: f64,
    opts: &TestOptions,
) -> Result<TestResult> {
    if r.len() != d.n() || a.len() != d.n() {
        return Err(Error::Dimension(format!("design has n = {}, ranks {}", d.n(), r.len())));
    }
    let form = RankQuadraticForm::new(d, r.scored(a)?, a2)?;
    let statistic = form.observed();
    let p_permutation = permutation_p(&form, statistic, opts.permutation, Method::AnovaRank)?;
    Ok(TestResult {
        method: Method::AnovaRank,
        statistic,
        df: d.p(),
        p_asymptotic: chisq_sf(statistic, d.p() as u32),
        p_permutation,
        n: d.n(),
        p: d.p(),
        q: 0,
        score_kind: phi.kind(),
        score_label: phi.label().to_string(),
        diagnostics: Diagnostics {
            noether_max: d.noether_max(),
            tie_policy: r.tie_policy,
            score_mode: a.mode,
            norming: a2,
            v00: None,
            v00_1: None,
            covariate_rank_deficient: None,
            permutation: opts.permutation,
        },
    })
}

pub(crate) fn permutation_p(
    form: &RankQuadraticForm,
    observed: f64,
    spec: PermutationSpec,
    kind: Method,
) -> Result<Option<f64>> {
    let mode = match spec {
        PermutationSpec::None => return Ok(None),
        PermutationSpec::Exact => PermutationMode::Exact,
        PermutationSpec::MonteCarlo { b, seed } => PermutationMode::MonteCarlo { b, seed },
    };
    let plan = PermutationPlan { mode, n: form.n(), statistic_kind: kind };
    permute::permutation_pvalue(observed, |pi| form.permuted(pi), &plan).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_design, build_design_1d};
    use crate::ranking::TiePolicy;
    use rand::{Rng, SeedableRng};

    fn rv(r: &[f64]) -> RankVector {
        RankVector { ranks: r.to_vec(), tie_policy: TiePolicy::ErrorOnTies }
    }

    #[test]
    fn three_point_example() {
        let d = build_design_1d(&[1.0, 2.0, 3.0]).unwrap();
        let a = scorekit::scores_approximate(&ScoreFunction::wilcoxon(), 3).unwrap();
        let s = linear_rank_statistic(&d, &rv(&[3.0, 1.0, 2.0]), &a).unwrap();
        assert!((s[0] + 0.25 / 3f64.sqrt()).abs() < 1e-15);

        let t = anova_rank_test(&d, &[30.0, 10.0, 20.0], &ScoreFunction::wilcoxon(), &TestOptions::default()).unwrap();
        assert!((t.statistic - 0.375).abs() < 1e-14);
        assert_eq!(t.df, 1);
        assert!((t.p_asymptotic - chisq_sf(0.375, 1)).abs() < 1e-15);
    }

    #[test]
    fn constant_scores_give_zero_statistic_vector() {
        let d = build_design(&[vec![1.0, 0.3], vec![2.0, -1.0], vec![0.5, 2.0], vec![3.0, 1.0]]).unwrap();
        let a = ScoreVector { values: vec![0.7; 4], mode: Default::default(), source: "const".into() };
        let s = linear_rank_statistic(&d, &rv(&[2.0, 4.0, 1.0, 3.0]), &a).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = 6;
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(0.0..1.0)]).collect();
            let d = build_design(&rows).unwrap();
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let r = ranking::ranks(&y, TiePolicy::ErrorOnTies).unwrap();
            let a = scorekit::scores_approximate(&ScoreFunction::van_der_waerden(), n).unwrap();
            let s = linear_rank_statistic(&d, &r, &a).unwrap();
            for k in 0..2 {
                let mean: f64 = rows.iter().map(|row| row[k]).sum::<f64>() / n as f64;
                let direct: f64 = (0..n)
                    .map(|i| (rows[i][k] - mean) * a.values[r.ranks[i] as usize - 1])
                    .sum::<f64>()
                    / (n as f64).sqrt();
                assert!((s[k] - direct).abs() < 1e-12);
            }
            let t = anova_rank_test(&d, &y, &ScoreFunction::van_der_waerden(), &TestOptions::default()).unwrap();
            let q_inv = d.q_n().clone().try_inverse().unwrap();
            let oracle = (s.transpose() * q_inv * &s)[(0, 0)];
            assert!((t.statistic - oracle).abs() < 1e-11 * (1.0 + oracle));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let d = build_design_1d(&[1.0, 2.0, 3.0]).unwrap();
        let a = scorekit::scores_approximate(&ScoreFunction::wilcoxon(), 3).unwrap();
        assert!(matches!(linear_rank_statistic(&d, &rv(&[1.0, 2.0]), &a), Err(Error::Dimension(_))));
        assert!(anova_rank_test(&d, &[1.0], &ScoreFunction::wilcoxon(), &TestOptions::default()).is_err());
    }

    #[test]
    fn ties_follow_policy() {
        let d = build_design_1d(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = [1.0, 1.0, 2.0, 3.0];
        let e = anova_rank_test(&d, &y, &ScoreFunction::wilcoxon(), &TestOptions::default()).unwrap_err();
        assert_eq!(e, Error::Ties { row: None, indices: vec![0, 1] });
        let opts = TestOptions { ties: TiePolicy::MidRanks, ..Default::default() };
        let t = anova_rank_test(&d, &y, &ScoreFunction::wilcoxon(), &opts).unwrap();
        assert_eq!(t.diagnostics.tie_policy, TiePolicy::MidRanks);
    }

    #[test]
    fn contaminated_without_noise_is_identical() {
        let d = build_design_1d(&[0.1, 0.7, 0.2, 0.9, 0.5]).unwrap();
        let y = [3.0, 1.0, 4.0, 1.5, 9.0];
        let opts = TestOptions::default();
        let a = anova_rank_test(&d, &y, &ScoreFunction::sign(), &opts).unwrap();
        let b = anova_rank_test_contaminated(&d, &y, &ScoreFunction::sign(), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permutation_mean_of_s_is_zero() {
        let d = build_design(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 1.0], vec![0.0, -2.0], vec![2.0, 2.5]]).unwrap();
        let a = scorekit::scores_approximate(&ScoreFunction::wilcoxon(), 5).unwrap();
        let mut total = DVector::zeros(2);
        let mut count = 0;
        let mut perm: Vec<usize> = (0..5).collect();
        permutohedron(&mut perm, 0, &mut |p| {
            let r = rv(&p.iter().map(|&k| (k + 1) as f64).collect::<Vec<_>>());
            total += linear_rank_statistic(&d, &r, &a).unwrap();
            count += 1;
        });
        assert_eq!(count, 120);
        assert!(total.iter().all(|v| v.abs() < 1e-12), "{total}");
    }

    fn permutohedron(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permutohedron(p, k + 1, f);
            p.swap(k, i);
        }
    }
}
