//! Ranks of responses and covariates, and the rank collection matrix used by
//! the covariance-adjusted test.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::scorekit::ScoreVector;

/// How ties among the values are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", content = "seed", rename_all = "snake_case")]
pub enum TiePolicy {
    /// Ties are an error; the null theory assumes continuous laws.
    #[default]
    ErrorOnTies,
    /// Tied values share the average of their positions. Permutation
    /// inference is then conditional on the observed tie pattern.
    MidRanks,
    /// Ties are broken uniformly at random from a dedicated seeded stream.
    RandomTieBreak(u64),
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TiePolicy::ErrorOnTies => f.write_str("error"),
            TiePolicy::MidRanks => f.write_str("midrank"),
            TiePolicy::RandomTieBreak(seed) => write!(f, "random({seed})"),
        }
    }
}

/// Ranks `1..n` (half-integers for mid-ranked ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankVector {
    pub ranks: Vec<f64>,
    pub tie_policy: TiePolicy,
}

impl RankVector {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Whether every rank is an integer (no mid-ranked ties).
    pub fn is_permutation(&self) -> bool {
        self.ranks.iter().all(|r| r.fract() == 0.0)
    }

    /// Scores `a(R_i)` for each unit. A mid-ranked group of size k receives
    /// the mean of the scores over the k positions it occupies.
    pub fn scored(&self, a: &ScoreVector) -> Result<Vec<f64>> {
        let n = self.ranks.len();
        if a.len() != n {
            return Err(Error::Dimension(format!("{} scores for {n} ranks", a.len())));
        }
        if self.is_permutation() {
            return Ok(self.ranks.iter().map(|&r| a.at(r as usize)).collect());
        }
        // Group sizes by doubled rank (integral for mid-ranks).
        let mut size = vec![0usize; 2 * n + 2];
        for &r in &self.ranks {
            size[(2.0 * r) as usize] += 1;
        }
        Ok(self
            .ranks
            .iter()
            .map(|&r| {
                let k = size[(2.0 * r) as usize];
                let first = (r - (k as f64 - 1.0) / 2.0).round() as usize;
                (first..first + k).map(|p| a.at(p)).sum::<f64>() / k as f64
            })
            .collect())
    }
}

/// Ranks of `values` in ascending order under `policy`.
pub fn ranks(values: &[f64], policy: TiePolicy) -> Result<RankVector> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot rank an empty sample".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));

    let mut out = vec![0.0; n];
    let mut tied = Vec::new();
    let mut tie_rng = match policy {
        TiePolicy::RandomTieBreak(seed) => Some(rng::stream(seed, Domain::TieBreak, 0, 0)),
        _ => None,
    };
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let group = &mut order[start..end];
        if group.len() == 1 {
            out[group[0]] = (start + 1) as f64;
        } else {
            match policy {
                TiePolicy::ErrorOnTies => tied.extend_from_slice(group),
                TiePolicy::MidRanks => {
                    let mid = (start + end + 1) as f64 / 2.0;
                    for &i in group.iter() {
                        out[i] = mid;
                    }
                }
                TiePolicy::RandomTieBreak(_) => {
                    group.shuffle(tie_rng.as_mut().expect("tie stream"));
                    for (k, &i) in group.iter().enumerate() {
                        out[i] = (start + k + 1) as f64;
                    }
                }
            }
        }
        start = end;
    }
    if !tied.is_empty() {
        tied.sort_unstable();
        return Err(Error::Ties { row: None, indices: tied });
    }
    Ok(RankVector { ranks: out, tie_policy: policy })
}

/// The `(q+1) × n` rank collection: row 0 ranks the response, row `j` ranks
/// covariate column `j`. Column `i` belongs to observation unit `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCollection {
    pub rows: Vec<RankVector>,
}

impl RankCollection {
    /// Number of covariates `q`.
    pub fn q(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    /// Rank matrix as nested rows of plain numbers.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.ranks.clone()).collect()
    }

    /// Scored rank matrix, `(q+1)` rows of `n` scores.
    pub fn scored(&self, a: &ScoreVector) -> Result<Vec<Vec<f64>>> {
        self.rows.iter().map(|r| r.scored(a)).collect()
    }
}

/// Ranks `y` and each column of `w` (given as `n` rows of `q` values).
pub fn rank_collection(y: &[f64], w: &[Vec<f64>], policy: TiePolicy) -> Result<RankCollection> {
    let n = y.len();
    if w.len() != n {
        return Err(Error::Dimension(format!("covariates have {} rows, response has {n}", w.len())));
    }
    let q = w.first().map_or(0, |r| r.len());
    if q == 0 {
        return Err(Error::Dimension("at least one covariate column is required".into()));
    }
    if let Some(i) = w.iter().position(|r| r.len() != q) {
        return Err(Error::Dimension(format!("covariate row {i} has {} values, expected {q}", w[i].len())));
    }
    let with_row = |row: usize, e: Error| match e {
        Error::Ties { indices, .. } => Error::Ties { row: Some(row), indices },
        other => other,
    };
    let mut rows = Vec::with_capacity(q + 1);
    rows.push(ranks(y, policy).map_err(|e| with_row(0, e))?);
    for j in 0..q {
        let col: Vec<f64> = w.iter().map(|r| r[j]).collect();
        // Distinct tie-break streams per row.
        let p = match policy {
            TiePolicy::RandomTieBreak(seed) => TiePolicy::RandomTieBreak(seed.wrapping_add(j as u64 + 1)),
            other => other,
        };
        let mut rv = ranks(&col, p).map_err(|e| with_row(j + 1, e))?;
        rv.tie_policy = policy;
        rows.push(rv);
    }
    Ok(RankCollection { rows })
}
