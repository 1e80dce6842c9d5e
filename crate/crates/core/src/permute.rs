//! Permutation-reference inference: exact enumeration for small samples and
//! Monte Carlo permutation otherwise.
//!
//! Statistics are supplied as closures of a permutation `π` of `0..n`, where
//! unit `i` of the design is paired with the rank column `π(i)`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::result::Method;
use crate::rng::{self, Domain};

/// Largest `n` for which full enumeration is allowed (8! = 40,320).
pub const EXACT_THRESHOLD: usize = 8;

/// Smallest admissible number of Monte Carlo draws.
pub const MIN_DRAWS: usize = 99;

/// Relative slack when comparing permuted statistics against the observed
/// one, so values that agree up to rounding count as ties.
pub const TIE_REL_TOL: f64 = 1e-9;

const MC_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PermutationMode {
    Exact,
    MonteCarlo { b: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub mode: PermutationMode,
    pub n: usize,
    pub statistic_kind: Method,
}

impl PermutationPlan {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            PermutationMode::Exact if self.n > EXACT_THRESHOLD => {
                Err(Error::ExactTooLarge { n: self.n, bound: EXACT_THRESHOLD })
            }
            PermutationMode::MonteCarlo { b, .. } if b < MIN_DRAWS => Err(Error::InvalidArgument(format!(
                "Monte Carlo permutation needs B >= {MIN_DRAWS}, got {b}"
            ))),
            _ if self.n < 2 => Err(Error::InvalidArgument("permutation needs n >= 2".into())),
            _ => Ok(()),
        }
    }
}

/// Whether `value` counts as at least as extreme as `observed`.
#[inline]
pub fn at_least(value: f64, observed: f64) -> bool {
    value >= observed - TIE_REL_TOL * observed.abs() - 1e-14
}

/// Heap's algorithm over the first `len` entries of `perm`, calling `visit`
/// on every arrangement (including the initial one).
fn heap_permutations(perm: &mut [usize], len: usize, visit: &mut impl FnMut(&[usize])) {
    let mut c = vec![0usize; len];
    visit(perm);
    let mut i = 1;
    while i < len {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(perm);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Runs `visit` over all `n!` permutations, split into `n` blocks by the
/// element in the last position. Blocks are processed in parallel and the
/// per-block results returned in block order.
fn enumerate_blocks<T, F>(n: usize, per_block: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut dyn FnMut(&mut dyn FnMut(&[usize]))) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|last| {
            let mut perm: Vec<usize> = (0..n).filter(|&k| k != last).collect();
            perm.push(last);
            let mut drive = |visit: &mut dyn FnMut(&[usize])| {
                let mut v = |p: &[usize]| visit(p);
                heap_permutations(&mut perm, n - 1, &mut v);
            };
            per_block(&mut drive)
        })
        .collect()
}

/// The complete permutation null distribution (`n!` values, deterministic
/// order).
pub fn exact_null_distribution<F>(recompute: F, n: usize) -> Result<Vec<f64>>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if n > EXACT_THRESHOLD {
        return Err(Error::ExactTooLarge { n, bound: EXACT_THRESHOLD });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("permutation needs n >= 1".into()));
    }
    let blocks = enumerate_blocks(n, |drive| {
        let mut vals = Vec::new();
        drive(&mut |p| vals.push(recompute(p)));
        vals
    });
    Ok(blocks.into_iter().flatten().collect())
}

/// Permutation p-value of `observed`.
///
/// Exact: `#{π : stat(π) ≥ observed} / n!`. Monte Carlo:
/// `(1 + #{b : stat(π_b) ≥ observed}) / (B + 1)`, where the identity is
/// redrawn whenever it comes up. Draws are split into fixed-size chunks with
/// their own streams, so the result does not depend on the thread count.
pub fn permutation_pvalue<F>(observed: f64, recompute: F, plan: &PermutationPlan) -> Result<f64>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    plan.validate()?;
    let n = plan.n;
    match plan.mode {
        PermutationMode::Exact => {
            let counts = enumerate_blocks(n, |drive| {
                let mut hits = 0u64;
                let mut total = 0u64;
                drive(&mut |p| {
                    total += 1;
                    if at_least(recompute(p), observed) {
                        hits += 1;
                    }
                });
                (hits, total)
            });
            let (hits, total) = counts.into_iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            Ok(hits as f64 / total as f64)
        }
        PermutationMode::MonteCarlo { b, seed } => {
            let chunks = b.div_ceil(MC_CHUNK);
            let hits: u64 = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = rng::stream(seed, Domain::Permutation, c as u32, 0);
                    let draws = MC_CHUNK.min(b - c * MC_CHUNK);
                    let mut perm: Vec<usize> = (0..n).collect();
                    let mut hits = 0u64;
                    for _ in 0..draws {
                        loop {
                            perm.shuffle(&mut rng);
                            if perm.iter().enumerate().any(|(i, &v)| i != v) {
                                break;
                            }
                        }
                        if at_least(recompute(&perm), observed) {
                            hits += 1;
                        }
                    }
                    hits
                })
                .sum();
            Ok((1 + hits) as f64 / (b + 1) as f64)
        }
    }
}

/// Quadratic form `c · uᵀ Q_n⁻¹ u` with `u = n^{-1/2} Σ_i (x_i - x̄) r_{π(i)}`,
/// the common shape of both rank criteria. The design is pre-whitened by the
/// Cholesky factor of `Q_n` so each evaluation is a single pass.
#[derive(Debug, Clone)]
pub struct RankQuadraticForm {
    n: usize,
    p: usize,
    /// Row-major `n × p` matrix `X⁰ L⁻ᵀ / √n`.
    whitened: Vec<f64>,
    unit_scores: Vec<f64>,
    inv_norming: f64,
}

impl RankQuadraticForm {
    pub fn new(design: &Design, unit_scores: Vec<f64>, norming: f64) -> Result<Self> {
        let n = design.n();
        let p = design.p();
        if unit_scores.len() != n {
            return Err(Error::Dimension(format!("{} unit scores for n = {n}", unit_scores.len())));
        }
        if !(norming > 0.0) {
            return Err(Error::Numeric(format!("norming constant must be positive, got {norming}")));
        }
        let scale = 1.0 / (n as f64).sqrt();
        let mut whitened = vec![0.0; n * p];
        for i in 0..n {
            let u = design.whiten(&design.x_centered().row(i).transpose())?;
            for k in 0..p {
                whitened[i * p + k] = u[k] * scale;
            }
        }
        // Σ (x_i - x̄) = 0, so removing the score mean only reduces rounding.
        let mean = unit_scores.iter().sum::<f64>() / n as f64;
        let unit_scores = unit_scores.into_iter().map(|s| s - mean).collect();
        Ok(Self { n, p, whitened, unit_scores, inv_norming: 1.0 / norming })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn unit_scores(&self) -> &[f64] {
        &self.unit_scores
    }

    /// Statistic with units paired to `unit_scores[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> f64 {
        let p = self.p;
        let mut acc = [0.0f64; 8];
        if p <= acc.len() {
            let acc = &mut acc[..p];
            for (i, &pi) in perm.iter().enumerate() {
                let r = self.unit_scores[pi];
                let row = &self.whitened[i * p..(i + 1) * p];
                for k in 0..p {
                    acc[k] += row[k] * r;
                }
            }
            acc.iter().map(|v| v * v).sum::<f64>() * self.inv_norming
        } else {
            let mut acc = vec![0.0f64; p];
            for (i, &pi) in perm.iter().enumerate() {
                let r = self.unit_scores[pi];
                for k in 0..p {
                    acc[k] += self.whitened[i * p + k] * r;
                }
            }
            acc.iter().map(|v| v * v).sum::<f64>() * self.inv_norming
        }
    }

    /// Statistic under the identity pairing.
    pub fn observed(&self) -> f64 {
        let id: Vec<usize> = (0..self.n).collect();
        self.permuted(&id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> usize {
        (1..=n).product()
    }

    #[test]
    fn heap_visits_every_permutation_once() {
        for n in 1..=6 {
            let mut seen = std::collections::HashSet::new();
            let mut perm: Vec<usize> = (0..n).collect();
            heap_permutations(&mut perm, n, &mut |p| {
                seen.insert(p.to_vec());
            });
            assert_eq!(seen.len(), factorial(n));
        }
        let all = exact_null_distribution(|p| p.iter().enumerate().map(|(i, &v)| (i * 10 + v) as f64).sum(), 5).unwrap();
        assert_eq!(all.len(), 120);
    }

    #[test]
    fn constant_statistic_gives_unit_p() {
        let plan = PermutationPlan { mode: PermutationMode::Exact, n: 3, statistic_kind: Method::AnovaRank };
        assert_eq!(permutation_pvalue(2.0, |_| 2.0, &plan).unwrap(), 1.0);
    }

    #[test]
    fn maximum_of_distinct_values_gives_one_over_n_factorial() {
        let stat = |p: &[usize]| (p[0] * 100 + p[1] * 10 + p[2]) as f64;
        let plan = PermutationPlan { mode: PermutationMode::Exact, n: 3, statistic_kind: Method::AnovaRank };
        let p = permutation_pvalue(210.0, stat, &plan).unwrap();
        assert!((p - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn exact_refuses_large_n_and_mc_needs_draws() {
        let plan = PermutationPlan { mode: PermutationMode::Exact, n: 9, statistic_kind: Method::AnovaRank };
        assert_eq!(permutation_pvalue(0.0, |_| 0.0, &plan).unwrap_err(), Error::ExactTooLarge { n: 9, bound: 8 });
        assert!(exact_null_distribution(|_| 0.0, 9).is_err());
        let plan = PermutationPlan {
            mode: PermutationMode::MonteCarlo { b: 50, seed: 1 },
            n: 20,
            statistic_kind: Method::AnovaRank,
        };
        assert!(permutation_pvalue(0.0, |_| 0.0, &plan).is_err());
    }

    #[test]
    fn monte_carlo_is_reproducible_and_never_zero() {
        let stat = |p: &[usize]| p.iter().enumerate().map(|(i, &v)| (i as f64) * (v as f64)).sum::<f64>();
        let plan = PermutationPlan {
            mode: PermutationMode::MonteCarlo { b: 2_000, seed: 42 },
            n: 30,
            statistic_kind: Method::AnovaRank,
        };
        // Identity maximises Σ i·π(i).
        let obs = stat(&(0..30).collect::<Vec<_>>());
        let p1 = permutation_pvalue(obs, stat, &plan).unwrap();
        let p2 = permutation_pvalue(obs, stat, &plan).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1, 1.0 / 2001.0);
    }

    #[test]
    fn mc_result_independent_of_thread_count() {
        let stat = |p: &[usize]| p.iter().enumerate().map(|(i, &v)| ((i + 1) as f64).ln() * v as f64).sum::<f64>();
        let plan = PermutationPlan {
            mode: PermutationMode::MonteCarlo { b: 5_000, seed: 3 },
            n: 12,
            statistic_kind: Method::AncovaRank,
        };
        let obs = 150.0;
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| permutation_pvalue(obs, stat, &plan).unwrap());
        let b = four.install(|| permutation_pvalue(obs, stat, &plan).unwrap());
        assert_eq!(a, b);
    }
}
