//! Rank tests of regression in partially linear models whose covariates may
//! be latent or observed with measurement error.
//!
//! The two criteria are the rank test `T_n²` built from linear rank
//! statistics and the rank analysis-of-covariance criterion `L_n⁰`, each with
//! an asymptotic χ² reference and an optional permutation reference.

pub mod ancova;
pub mod anova;
pub mod data;
pub mod design;
pub mod distributions;
pub mod efficiency;
pub mod error;
pub mod permute;
pub mod quadrature;
pub mod ranking;
pub mod result;
pub mod rng;
pub mod scorekit;
pub mod simlab;

pub use ancova::{ancova_rank_test, AncovaWork, GammaLimit};
pub use anova::{anova_rank_test, anova_rank_test_contaminated, linear_rank_statistic};
pub use data::{parse_csv, DataTable};
pub use design::{build_design, build_design_1d, Design};
pub use distributions::{ChiSquareRef, ErrorLaw};
pub use efficiency::{are_ancova, are_latent, EfficiencyReport};
pub use error::{Error, ErrorClass, Result};
pub use permute::{PermutationMode, PermutationPlan};
pub use ranking::{RankCollection, RankVector, TiePolicy};
pub use result::{Method, PermutationSpec, TestOptions, TestResult};
pub use scorekit::{ScoreFunction, ScoreKind, ScoreMode, ScoreVector};
pub use simlab::{ModelKind, PowerCurve, ScenarioConfig};
