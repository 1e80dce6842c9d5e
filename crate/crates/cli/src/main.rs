//! `rclm`: rank tests of regression from the command line.
//!
//! Every subcommand prints one JSON record on standard output that echoes
//! the effective configuration, plus a short human-readable summary on
//! standard error.
//!
//! ```bash
//! rclm rank-anova --data d.csv --y y --x x1 --scores wilcoxon
//! rclm rank-ancova --data d.csv --y y --x x1 --covariates w1,w2 --perm mc --B 9999 --seed 7
//! rclm simulate --config scenario.json --out curve.csv
//! rclm are --scores wilcoxon --error normal:0,1 --noise normal:0,2
//! rclm perm-null --data small.csv --y y --x x1
//! ```
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 numeric.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use rclm::anova::anova_from_ranks;
use rclm::ancova::ancova_from_ranks;
use rclm::design::{build_design, Design};
use rclm::efficiency::are_latent;
use rclm::permute::{self, RankQuadraticForm};
use rclm::simlab::run_power_study;
use rclm::{
    ranking, scorekit, DataTable, Error, ErrorClass, ErrorLaw, PermutationSpec, ScenarioConfig, ScoreFunction,
    ScoreKind, ScoreMode, TestOptions, TiePolicy,
};

#[derive(Parser, Debug)]
#[command(name = "rclm", version, about = "Rank tests of regression with latent or noisy covariates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rank test of β = 0 from linear rank statistics
    RankAnova(TestArgs),
    /// Covariance-adjusted rank test of β = 0
    RankAncova(TestArgs),
    /// Monte Carlo power study from a scenario file
    Simulate(SimulateArgs),
    /// Asymptotic efficiency under additive response noise
    Are(AreArgs),
    /// Exact permutation null distribution (n ≤ 8)
    PermNull(TestArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Ties {
    Error,
    Midrank,
    Random,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Perm {
    None,
    Exact,
    Mc,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Approx,
    Exact,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Built-in score function
    #[arg(long, value_parser = parse_score_kind, default_value = "wilcoxon")]
    scores: ScoreKind,
    /// Piecewise-linear score table (CSV rows `t,phi`), overrides --scores
    #[arg(long)]
    score_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Input CSV with a header row
    #[arg(long)]
    data: PathBuf,
    /// Response column
    #[arg(long, default_value = "y")]
    y: String,
    /// Design columns, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    x: Vec<String>,
    /// Covariate columns, comma separated
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[command(flatten)]
    score: ScoreArgs,
    /// Approximate scores φ(i/(n+1)) or exact expected order-statistic scores
    #[arg(long, value_enum, default_value = "approx")]
    score_mode: Mode,
    #[arg(long, value_enum, default_value = "error")]
    ties: Ties,
    /// Permutation reference
    #[arg(long, value_enum, default_value = "none")]
    perm: Perm,
    /// Monte Carlo permutation draws
    #[arg(long = "B", default_value_t = 9999)]
    b: usize,
    /// Seed for Monte Carlo permutation and random tie-breaking
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the record to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario JSON document
    #[arg(long)]
    config: PathBuf,
    /// Power-curve CSV destination
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the replication count of the scenario
    #[arg(long)]
    replications: Option<usize>,
}

#[derive(Args, Debug)]
struct AreArgs {
    #[command(flatten)]
    score: ScoreArgs,
    /// Error law, e.g. normal:0,1 or logistic:0,1
    #[arg(long, value_parser = parse_law)]
    error: ErrorLaw,
    /// Noise law added to the response, or "none"
    #[arg(long, default_value = "none")]
    noise: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_score_kind(s: &str) -> Result<ScoreKind, String> {
    match s.parse::<ScoreKind>() {
        Ok(ScoreKind::Custom) => Err("use --score-table for custom scores".into()),
        Ok(k) => Ok(k),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_law(s: &str) -> Result<ErrorLaw, String> {
    s.parse::<ErrorLaw>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}

fn run(cmd: Command) -> rclm::Result<()> {
    match cmd {
        Command::RankAnova(a) => rank_test(a, false),
        Command::RankAncova(a) => rank_test(a, true),
        Command::Simulate(a) => simulate(a),
        Command::Are(a) => are(a),
        Command::PermNull(a) => perm_null(a),
    }
}

fn emit(record: &Value, out: Option<&Path>) -> rclm::Result<()> {
    let line = serde_json::to_string(record).map_err(|e| Error::Numeric(e.to_string()))?;
    println!("{line}");
    if let Some(path) = out {
        fs::write(path, format!("{line}\n"))?;
    }
    Ok(())
}

fn score_function(s: &ScoreArgs) -> rclm::Result<ScoreFunction> {
    match &s.score_table {
        Some(path) => ScoreFunction::load_table(path, true),
        None => ScoreFunction::from_kind(s.scores),
    }
}

fn tie_policy(a: &TestArgs) -> rclm::Result<TiePolicy> {
    Ok(match a.ties {
        Ties::Error => TiePolicy::ErrorOnTies,
        Ties::Midrank => TiePolicy::MidRanks,
        Ties::Random => TiePolicy::RandomTieBreak(
            a.seed.ok_or_else(|| Error::InvalidArgument("--ties random needs an explicit --seed".into()))?,
        ),
    })
}

fn permutation(a: &TestArgs) -> rclm::Result<PermutationSpec> {
    Ok(match a.perm {
        Perm::None => PermutationSpec::None,
        Perm::Exact => PermutationSpec::Exact,
        Perm::Mc => PermutationSpec::MonteCarlo {
            b: a.b,
            seed: a.seed.ok_or_else(|| Error::InvalidArgument("--perm mc needs an explicit --seed".into()))?,
        },
    })
}

struct Loaded {
    table: DataTable,
    design: Design,
    phi: ScoreFunction,
    opts: TestOptions,
}

fn load(a: &TestArgs, need_covariates: bool) -> rclm::Result<Loaded> {
    let x: Vec<&str> = a.x.iter().map(String::as_str).collect();
    let w: Option<Vec<&str>> = a.covariates.as_ref().map(|c| c.iter().map(String::as_str).collect());
    if need_covariates && w.is_none() {
        return Err(Error::InvalidArgument("rank-ancova needs --covariates".into()));
    }
    let table = rclm::parse_csv(&a.data, &a.y, &x, w.as_deref())?;
    let design = build_design(&table.x)?;
    let opts = TestOptions {
        ties: tie_policy(a)?,
        score_mode: match a.score_mode {
            Mode::Approx => ScoreMode::Approximate,
            Mode::Exact => ScoreMode::Exact,
        },
        permutation: permutation(a)?,
    };
    Ok(Loaded { table, design, phi: score_function(&a.score)?, opts })
}

fn test_config(a: &TestArgs, l: &Loaded, command: &str) -> Value {
    json!({
        "command": command,
        "data": a.data.display().to_string(),
        "y": a.y,
        "x": a.x,
        "covariates": a.covariates,
        "scores": l.phi.label(),
        "score_table": a.score.score_table.as_ref().map(|p| p.display().to_string()),
        "score_mode": l.opts.score_mode,
        "ties": l.opts.ties,
        "permutation": l.opts.permutation,
    })
}

fn rank_test(a: TestArgs, ancova: bool) -> rclm::Result<()> {
    let l = load(&a, ancova)?;
    let result = if ancova {
        rclm::ancova_rank_test(&l.design, &l.table.y, l.table.w.as_deref().unwrap_or_default(), &l.phi, &l.opts)?
    } else {
        rclm::anova_rank_test(&l.design, &l.table.y, &l.phi, &l.opts)?
    };
    let name = if ancova { "rank-ancova" } else { "rank-anova" };
    eprintln!(
        "{name}: n = {}, p = {}, q = {}, statistic = {:.6}, df = {}, p (chi-square) = {:.6}{}",
        result.n,
        result.p,
        result.q,
        result.statistic,
        result.df,
        result.p_asymptotic,
        result.p_permutation.map_or_else(String::new, |p| format!(", p (permutation) = {p:.6}")),
    );
    let record = json!({ "config": test_config(&a, &l, name), "result": result });
    emit(&record, a.out.as_deref())
}

fn perm_null(a: TestArgs) -> rclm::Result<()> {
    let l = load(&a, false)?;
    let n = l.design.n();
    if n > permute::EXACT_THRESHOLD {
        return Err(Error::ExactTooLarge { n, bound: permute::EXACT_THRESHOLD });
    }
    let a_vec = scorekit::scores(&l.phi, n, l.opts.score_mode)?;
    let opts = TestOptions { permutation: PermutationSpec::Exact, ..l.opts };
    let (result, form) = match &l.table.w {
        None => {
            let a2 = scorekit::score_norm_sq(&l.phi)?;
            let r = ranking::ranks(&l.table.y, opts.ties)?;
            let res = anova_from_ranks(&l.design, &r, &l.phi, &a_vec, a2, &opts)?;
            let form = RankQuadraticForm::new(&l.design, r.scored(&a_vec)?, a2)?;
            (res, form)
        }
        Some(w) => {
            let rc = ranking::rank_collection(&l.table.y, w, opts.ties)?;
            let res = ancova_from_ranks(&l.design, &rc, &l.phi, &a_vec, &opts)?;
            let work = rclm::ancova::ancova_work(&l.design, &rc, &a_vec)?;
            let form = RankQuadraticForm::new(&l.design, work.residual_scores, work.v_00_1)?;
            (res, form)
        }
    };
    let values = permute::exact_null_distribution(|pi| form.permuted(pi), n)?;
    eprintln!(
        "perm-null: n = {n}, {} permutations, statistic = {:.6}, exact p = {:.6}",
        values.len(),
        result.statistic,
        result.p_permutation.unwrap_or(f64::NAN)
    );
    let mut config = test_config(&a, &l, "perm-null");
    config["permutation"] = json!(opts.permutation);
    let record = json!({ "config": config, "result": result, "null_distribution": values });
    emit(&record, a.out.as_deref())
}

fn simulate(a: SimulateArgs) -> rclm::Result<()> {
    let text = fs::read_to_string(&a.config).map_err(|e| Error::Io(format!("{}: {e}", a.config.display())))?;
    let mut cfg: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", a.config.display())))?;
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    let curve = run_power_study(&cfg)?;
    if let Some(path) = &a.out {
        curve.write_csv(fs::File::create(path)?)?;
    }
    for p in &curve.points {
        eprintln!(
            "beta1 = {:+.2}: power anova = {:.4}, ancova = {:.4} (se {:.4})",
            p.beta1, p.rejection_rate_anova, p.rejection_rate_ancova, p.mc_standard_error
        );
    }
    let record = json!({
        "command": "simulate",
        "config": curve.config,
        "out": a.out.as_ref().map(|p| p.display().to_string()),
        "points": curve.points,
    });
    emit(&record, None)
}

fn are(a: AreArgs) -> rclm::Result<()> {
    let phi = score_function(&a.score)?;
    let noise = match a.noise.trim() {
        "none" => None,
        s => Some(s.parse::<ErrorLaw>().map_err(|e| Error::InvalidArgument(e.to_string()))?),
    };
    let report = are_latent(&phi, &a.error, noise.as_ref())?;
    eprintln!(
        "are: gamma(f) = {:.8}, gamma(h) = {:.8}, efficiency = {:.8}",
        report.gamma_phi_f, report.gamma_phi_h, report.are_latent
    );
    let record = json!({
        "config": {
            "command": "are",
            "scores": phi.label(),
            "error": a.error.to_string(),
            "noise": noise.as_ref().map(|l| l.to_string()),
        },
        "report": report,
    });
    emit(&record, a.out.as_deref())
}
