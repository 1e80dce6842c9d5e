//! Test options and result records shared by both rank tests.

use serde::{Deserialize, Serialize};

use crate::ranking::TiePolicy;
use crate::scorekit::{ScoreKind, ScoreMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AnovaRank,
    AncovaRank,
}

/// Permutation reference requested alongside the asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PermutationSpec {
    #[default]
    None,
    Exact,
    MonteCarlo { b: usize, seed: u64 },
}

/// Options common to both tests.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TestOptions {
    pub ties: TiePolicy,
    pub score_mode: ScoreMode,
    pub permutation: PermutationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub noether_max: f64,
    pub tie_policy: TiePolicy,
    pub score_mode: ScoreMode,
    /// Divisor of the quadratic form: `A²(φ)` or `v_n00.1`.
    pub norming: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v00: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v00_1: Option<f64>,
    /// Set when the covariate block of `V_n` needed a pseudo-inverse.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariate_rank_deficient: Option<bool>,
    pub permutation: PermutationSpec,
}

/// Outcome of a rank test of `H0: β = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub df: usize,
    pub p_asymptotic: f64,
    pub p_permutation: Option<f64>,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub score_kind: ScoreKind,
    pub score_label: String,
    pub diagnostics: Diagnostics,
}
