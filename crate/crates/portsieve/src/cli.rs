//! Batch command-line front end.
//!
//! One thin binary with five subcommands: `backtest`, `screen`,
//! `estimate`, `gen-synthetic`, and `validate-theory`. Configuration
//! lives in key-value (TOML) files; command-line flags override file
//! values. Every failure prints a single-line machine-readable JSON error
//! record to stderr with a stable exit code:
//!
//! * 2 — config schema violation
//! * 3 — data error (unreadable or missing input files, bad rows)
//! * 4 — estimator failure under the abort policy
//! * 5 — theory experiment failure-rate budget exceeded
//! * 1 — other failures (for `validate-theory`, a sensible-screening run
//!   whose medians did not decrease)
//!
//! The only environment variable read is the log filter (`RUST_LOG`).

use crate::agents::{load_event_panel, Fallback};
use crate::backtest::{
    run_backtest, screen_month, AgentKind, BacktestConfig, BacktestError, DataBundle,
    FailurePolicy,
};
use crate::data::{
    align_window, load_characteristics_panel, load_returns_panel, winsorize_standardize,
};
use crate::dates::Month;
use crate::portfolio::Objective;
use crate::precision::{
    estimate_precision, load_factor_panel, DeepConfig, EstimateOptions, Method,
};
use crate::report::{
    audit_csv, convergence_csv, monthly_ledger_csv, summary_table_csv, summary_table_text,
    write_report_file, RunManifest,
};
use crate::rules::load_rule_schedule;
use crate::synthetic::{generate_world, write_world, WorldConfig};
use crate::theory::{sharpe_consistency_experiment, ScreeningMode, TheorySpec};
use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ESTIMATOR: i32 = 4;
pub const EXIT_THEORY: i32 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "portsieve",
    version,
    about = "Screened high-dimensional portfolio engine"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the rolling screen-estimate-weight backtest and write reports.
    Backtest {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for monthly.csv, summary.csv/txt, audit.csv
        /// and manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Restrict to one method code (nw, rnw, poet, deep, nls).
        #[arg(long)]
        method: Option<String>,
        /// Restrict to one objective code (gmv, mv, msr).
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        cost_bp: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Emit per-month consensus signal sets without estimating anything.
    Screen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// First decision month (defaults to the month before
        /// out_sample_start).
        #[arg(long)]
        start: Option<String>,
        /// Last decision month (defaults to the month before
        /// out_sample_end).
        #[arg(long)]
        end: Option<String>,
    },
    /// Estimate one precision matrix on the screened universe at a date.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Decision month, YYYY-MM.
        #[arg(long)]
        date: String,
        #[arg(long)]
        method: String,
    },
    /// Generate a synthetic data bundle plus a ready-to-run backtest
    /// config.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        assets: Option<usize>,
        #[arg(long)]
        months: Option<usize>,
        #[arg(long)]
        strength: Option<f64>,
    },
    /// Run the screened Sharpe-ratio convergence experiment.
    ValidateTheory {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure with its exit code; rendered as a one-line JSON record.
#[derive(Debug)]
pub struct CliFailure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliFailure {
    fn config(message: impl Into<String>) -> CliFailure {
        CliFailure {
            code: EXIT_CONFIG,
            kind: "config",
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> CliFailure {
        CliFailure {
            code: EXIT_DATA,
            kind: "data",
            message: message.into(),
        }
    }

    pub fn record(&self) -> String {
        serde_json::json!({
            "code": self.code,
            "kind": self.kind,
            "message": self.message,
        })
        .to_string()
    }
}

fn classify_backtest_error(e: BacktestError) -> CliFailure {
    match e {
        BacktestError::BadConfig(m) => CliFailure::config(m),
        BacktestError::EstimatorAborted { .. } | BacktestError::WeightsAborted { .. } => {
            CliFailure {
                code: EXIT_ESTIMATOR,
                kind: "estimator",
                message: e.to_string(),
            }
        }
        other => CliFailure::data(other.to_string()),
    }
}

/// Raw key-value run configuration; paths resolve relative to the config
/// file's directory.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    returns: String,
    characteristics: Option<String>,
    factors: Option<String>,
    sentiment: Option<String>,
    analyst: Option<String>,
    rules: Option<String>,
    agents: Option<Vec<String>>,
    fallback: Option<String>,
    method: Option<String>,
    objective: Option<String>,
    train_window: Option<usize>,
    cost_bp: Option<f64>,
    rho: Option<f64>,
    out_sample_start: String,
    out_sample_end: String,
    seed: Option<u64>,
    failure_policy: Option<String>,
    initial_cost_free: Option<bool>,
    half_life_days: Option<f64>,
    logistic_features: Option<Vec<String>>,
    profitability_feature: Option<String>,
    value_feature: Option<String>,
    factor_count: Option<usize>,
    max_factors: Option<usize>,
    diagonal_loading: Option<bool>,
    deep: Option<DeepConfig>,
}

/// A parsed run: engine config plus resolved input paths.
pub struct RunPlan {
    pub config: BacktestConfig,
    pub config_text: String,
    pub paths: RunPaths,
}

#[derive(Debug, Clone, Default)]
pub struct RunPaths {
    pub returns: PathBuf,
    pub characteristics: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub sentiment: Option<PathBuf>,
    pub analyst: Option<PathBuf>,
    pub rules: Option<PathBuf>,
}

impl RunPaths {
    pub fn all(&self) -> Vec<&PathBuf> {
        let mut out = vec![&self.returns];
        for p in [
            &self.characteristics,
            &self.factors,
            &self.sentiment,
            &self.analyst,
            &self.rules,
        ]
        .into_iter()
        .flatten()
        {
            out.push(p);
        }
        out
    }
}

fn parse_month_arg(s: &str, what: &str) -> Result<Month, CliFailure> {
    s.parse()
        .map_err(|e| CliFailure::config(format!("{what}: {e}")))
}

fn parse_methods(spec: &str) -> Result<Vec<Method>, CliFailure> {
    if spec == "all" {
        return Ok(Method::ALL.to_vec());
    }
    spec.split(',')
        .map(|code| {
            Method::from_code(code.trim())
                .ok_or_else(|| CliFailure::config(format!("unknown method `{code}`")))
        })
        .collect()
}

fn parse_objectives(spec: &str) -> Result<Vec<Objective>, CliFailure> {
    if spec == "all" {
        return Ok(Objective::ALL.to_vec());
    }
    spec.split(',')
        .map(|code| {
            Objective::from_code(code.trim())
                .ok_or_else(|| CliFailure::config(format!("unknown objective `{code}`")))
        })
        .collect()
}

fn parse_fallback(spec: &str) -> Result<Fallback, CliFailure> {
    if spec == "union" {
        return Ok(Fallback::Union);
    }
    if let Some(idx) = spec.strip_prefix("agent:") {
        let index: usize = idx
            .parse()
            .map_err(|_| CliFailure::config(format!("bad fallback agent index `{idx}`")))?;
        return Ok(Fallback::DesignatedAgent(index));
    }
    Err(CliFailure::config(format!(
        "unknown fallback `{spec}` (expected `union` or `agent:<index>`)"
    )))
}

/// Load and resolve a run config file.
pub fn load_run_plan(path: &Path) -> Result<RunPlan, CliFailure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliFailure::config(format!("cannot read config {}: {e}", path.display())))?;
    let raw: RawRunConfig = toml::from_str(&text)
        .map_err(|e| CliFailure::config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |s: &String| base.join(s);

    let start = parse_month_arg(&raw.out_sample_start, "out_sample_start")?;
    let end = parse_month_arg(&raw.out_sample_end, "out_sample_end")?;
    let mut config = BacktestConfig::new(start, end);
    if let Some(v) = raw.train_window {
        config.train_window = v;
    }
    if let Some(v) = raw.cost_bp {
        config.cost_bp = v;
    }
    if let Some(v) = raw.rho {
        config.rho = v;
    }
    if let Some(v) = raw.seed {
        config.seed = v;
    }
    if let Some(v) = raw.half_life_days {
        config.half_life_days = v;
    }
    if let Some(v) = raw.logistic_features {
        config.logistic_features = v;
    }
    if let Some(v) = raw.profitability_feature {
        config.profitability_feature = v;
    }
    if let Some(v) = raw.value_feature {
        config.value_feature = v;
    }
    if let Some(v) = raw.initial_cost_free {
        config.initial_cost_free = v;
    }
    if let Some(v) = &raw.failure_policy {
        config.failure_policy = match v.as_str() {
            "skip" => FailurePolicy::Skip,
            "abort" => FailurePolicy::Abort,
            other => {
                return Err(CliFailure::config(format!(
                    "unknown failure_policy `{other}` (expected skip|abort)"
                )))
            }
        };
    }
    if let Some(v) = &raw.method {
        config.methods = parse_methods(v)?;
    }
    if let Some(v) = &raw.objective {
        config.objectives = parse_objectives(v)?;
    }
    if let Some(v) = &raw.agents {
        config.agents = v
            .iter()
            .map(|code| {
                AgentKind::from_code(code)
                    .ok_or_else(|| CliFailure::config(format!("unknown agent `{code}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
    }
    if let Some(v) = &raw.fallback {
        config.fallback = parse_fallback(v)?;
    }
    let mut estimate = EstimateOptions::default();
    if let Some(v) = raw.factor_count {
        estimate.factor_count = Some(v);
    }
    if let Some(v) = raw.max_factors {
        estimate.max_factors = v;
    }
    if let Some(v) = raw.diagonal_loading {
        estimate.diagonal_loading = v;
    }
    if let Some(v) = raw.deep {
        estimate.deep = v;
    }
    config.estimate = estimate;
    config
        .validate()
        .map_err(|e| CliFailure::config(e.to_string()))?;

    let paths = RunPaths {
        returns: resolve(&raw.returns),
        characteristics: raw.characteristics.as_ref().map(resolve),
        factors: raw.factors.as_ref().map(resolve),
        sentiment: raw.sentiment.as_ref().map(resolve),
        analyst: raw.analyst.as_ref().map(resolve),
        rules: raw.rules.as_ref().map(resolve),
    };
    Ok(RunPlan {
        config,
        config_text: text,
        paths,
    })
}

/// Inputs genuinely required by the selected agents and methods.
fn check_required_inputs(plan: &RunPlan) -> Result<(), CliFailure> {
    let missing = |what: &str, key: &str| {
        CliFailure::data(format!(
            "{what} required but no `{key}` file configured"
        ))
    };
    for agent in &plan.config.agents {
        match agent {
            AgentKind::Rules => {
                if plan.paths.rules.is_none() {
                    return Err(missing("rules agent", "rules"));
                }
                if plan.paths.characteristics.is_none() {
                    return Err(missing("rules agent", "characteristics"));
                }
            }
            AgentKind::Sentiment => {
                if plan.paths.sentiment.is_none() {
                    return Err(missing("sentiment agent", "sentiment"));
                }
            }
            AgentKind::Analyst => {
                if plan.paths.analyst.is_none() {
                    return Err(missing("analyst agent", "analyst"));
                }
            }
            AgentKind::Logistic | AgentKind::NovyMarx => {
                if plan.paths.characteristics.is_none() {
                    return Err(missing("characteristic-based agent", "characteristics"));
                }
            }
        }
    }
    for method in &plan.config.methods {
        if method.needs_factors() && plan.paths.factors.is_none() {
            return Err(CliFailure::data(format!(
                "method {} requires a `factors` file, which was not configured",
                method.code()
            )));
        }
    }
    Ok(())
}

/// Load every configured input file into a bundle.
pub fn load_bundle(plan: &RunPlan) -> Result<DataBundle, CliFailure> {
    let mut bundle = DataBundle {
        returns: load_returns_panel(&plan.paths.returns)
            .map_err(|e| CliFailure::data(e.to_string()))?,
        ..DataBundle::default()
    };
    if let Some(path) = &plan.paths.characteristics {
        let raw = load_characteristics_panel(path).map_err(|e| CliFailure::data(e.to_string()))?;
        let standardized =
            winsorize_standardize(&raw).map_err(|e| CliFailure::data(e.to_string()))?;
        bundle.characteristics = Some(standardized);
    }
    if let Some(path) = &plan.paths.factors {
        bundle.factors =
            Some(load_factor_panel(path).map_err(|e| CliFailure::data(e.to_string()))?);
    }
    if let Some(path) = &plan.paths.sentiment {
        bundle.sentiment = Some(
            load_event_panel(path, "score").map_err(|e| CliFailure::data(e.to_string()))?,
        );
    }
    if let Some(path) = &plan.paths.analyst {
        bundle.analyst = Some(
            load_event_panel(path, "recommendation")
                .map_err(|e| CliFailure::data(e.to_string()))?,
        );
    }
    if let Some(path) = &plan.paths.rules {
        bundle.rules =
            Some(load_rule_schedule(path).map_err(|e| CliFailure::data(e.to_string()))?);
    }
    Ok(bundle)
}

fn ensure_out_dir(out: &Path) -> Result<(), CliFailure> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliFailure::data(format!("cannot create {}: {e}", out.display())))
}

fn start_manifest(plan: &RunPlan) -> Result<RunManifest, CliFailure> {
    let mut manifest = RunManifest::start(plan.config.seed, plan.config_text.clone());
    // Digests recorded before any computation touches the data.
    for path in plan.paths.all() {
        manifest
            .record_input(path)
            .map_err(|e| CliFailure::data(e.to_string()))?;
    }
    Ok(manifest)
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("{}", failure.record());
            failure.code
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliFailure> {
    match cli.command {
        Command::Backtest {
            config,
            out,
            method,
            objective,
            seed,
            cost_bp,
            rho,
        } => {
            let mut plan = load_run_plan(&config)?;
            // Flags win over file values.
            if let Some(m) = &method {
                plan.config.methods = parse_methods(m)?;
            }
            if let Some(o) = &objective {
                plan.config.objectives = parse_objectives(o)?;
            }
            if let Some(s) = seed {
                plan.config.seed = s;
            }
            if let Some(c) = cost_bp {
                plan.config.cost_bp = c;
            }
            if let Some(r) = rho {
                plan.config.rho = r;
            }
            plan.config
                .validate()
                .map_err(|e| CliFailure::config(e.to_string()))?;
            check_required_inputs(&plan)?;
            ensure_out_dir(&out)?;
            let mut manifest = start_manifest(&plan)?;
            let bundle = load_bundle(&plan)?;
            let report = run_backtest(&plan.config, &bundle).map_err(classify_backtest_error)?;

            let io = |e: crate::report::ReportError| CliFailure::data(e.to_string());
            write_report_file(out.join("monthly.csv"), &monthly_ledger_csv(&report))
                .map_err(io)?;
            write_report_file(out.join("summary.csv"), &summary_table_csv(&report))
                .map_err(io)?;
            write_report_file(out.join("summary.txt"), &summary_table_text(&report))
                .map_err(io)?;
            write_report_file(out.join("audit.csv"), &audit_csv(&report)).map_err(io)?;
            manifest.finish();
            manifest.write(out.join("manifest.json")).map_err(io)?;
            print!("{}", summary_table_text(&report));
            Ok(EXIT_OK)
        }
        Command::Screen { config, out, start, end } => {
            let plan = load_run_plan(&config)?;
            check_required_inputs(&plan)?;
            ensure_out_dir(&out)?;
            let mut manifest = start_manifest(&plan)?;
            let bundle = load_bundle(&plan)?;
            let first = match &start {
                Some(s) => parse_month_arg(s, "start")?,
                None => plan.config.out_sample_start.prev(),
            };
            let last = match &end {
                Some(s) => parse_month_arg(s, "end")?,
                None => plan.config.out_sample_end.prev(),
            };
            if first > last {
                return Err(CliFailure::config(format!(
                    "start {first} after end {last}"
                )));
            }
            let mut csv = String::from("date,asset,signal\n");
            for month in Month::range_inclusive(first, last) {
                let (signals, _) = screen_month(&plan.config, &bundle, month)
                    .map_err(classify_backtest_error)?;
                for (asset, action) in signals.non_hold() {
                    let _ = writeln!(csv, "{month},{asset},{action}");
                }
            }
            write_report_file(out.join("signals.csv"), &csv)
                .map_err(|e| CliFailure::data(e.to_string()))?;
            manifest.finish();
            manifest
                .write(out.join("manifest.json"))
                .map_err(|e| CliFailure::data(e.to_string()))?;
            Ok(EXIT_OK)
        }
        Command::Estimate {
            config,
            out,
            date,
            method,
        } => {
            let plan = load_run_plan(&config)?;
            let method = Method::from_code(&method)
                .ok_or_else(|| CliFailure::config(format!("unknown method `{method}`")))?;
            if method.needs_factors() && plan.paths.factors.is_none() {
                return Err(CliFailure::data(format!(
                    "method {} requires a factors file",
                    method.code()
                )));
            }
            let decision = parse_month_arg(&date, "date")?;
            check_required_inputs(&plan)?;
            ensure_out_dir(&out)?;
            let mut manifest = start_manifest(&plan)?;
            let bundle = load_bundle(&plan)?;
            let (signals, _) = screen_month(&plan.config, &bundle, decision)
                .map_err(classify_backtest_error)?;
            let screened = signals.screened_assets();
            if screened.is_empty() {
                return Err(CliFailure::data(format!(
                    "screened universe at {decision} is empty"
                )));
            }
            let window = align_window(
                &bundle.returns,
                decision,
                plan.config.train_window,
                &screened,
            )
            .map_err(|e| CliFailure::data(e.to_string()))?;
            let mut demeaned = window.matrix.clone();
            demeaned.values = window.matrix.demeaned();
            let mut options = plan.config.estimate.clone();
            options.deep.seed =
                crate::rng::derive_seed(plan.config.seed, &format!("backtest/deep/{decision}"));
            let estimate = estimate_precision(method, &demeaned, bundle.factors.as_ref(), &options)
                .map_err(|e| CliFailure {
                    code: EXIT_ESTIMATOR,
                    kind: "estimator",
                    message: e.to_string(),
                })?;
            let mut csv = String::from("asset");
            for a in &estimate.assets {
                let _ = write!(csv, ",{a}");
            }
            csv.push('\n');
            for (i, a) in estimate.assets.iter().enumerate() {
                let _ = write!(csv, "{a}");
                for j in 0..estimate.p() {
                    let _ = write!(csv, ",{:.10}", estimate.gamma[(i, j)]);
                }
                csv.push('\n');
            }
            write_report_file(out.join("gamma.csv"), &csv)
                .map_err(|e| CliFailure::data(e.to_string()))?;
            manifest.finish();
            manifest
                .write(out.join("manifest.json"))
                .map_err(|e| CliFailure::data(e.to_string()))?;
            println!(
                "estimated {} precision for {} assets at {decision}",
                method.code(),
                estimate.p()
            );
            Ok(EXIT_OK)
        }
        Command::GenSynthetic {
            out,
            seed,
            assets,
            months,
            strength,
        } => {
            let mut config = WorldConfig::default();
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(a) = assets {
                config.assets = a;
            }
            if let Some(m) = months {
                config.months = m;
            }
            if let Some(s) = strength {
                config.strength = s;
            }
            if config.assets < 2 || config.months < 26 {
                return Err(CliFailure::config(
                    "need at least 2 assets and 26 months".to_string(),
                ));
            }
            ensure_out_dir(&out)?;
            let world = generate_world(&config);
            let paths = write_world(&world, &out)
                .map_err(|e| CliFailure::data(format!("cannot write world: {e}")))?;

            // Ready-to-run config: training window fits ahead of the
            // out-of-sample span.
            let train_window = (config.months.saturating_sub(60)).clamp(24, 180);
            let first = world.months[0];
            let start = first.add_months(train_window as i32 + 1);
            let end = world.months[world.months.len() - 1];
            let run_config = format!(
                "returns = \"{}\"\ncharacteristics = \"{}\"\nfactors = \"{}\"\nsentiment = \"{}\"\nanalyst = \"{}\"\nrules = \"{}\"\nagents = [\"rules\", \"sentiment\"]\nfallback = \"union\"\nmethod = \"all\"\nobjective = \"all\"\ntrain_window = {train_window}\ncost_bp = 10.0\nrho = 0.01\nout_sample_start = \"{start}\"\nout_sample_end = \"{end}\"\nseed = {}\nfailure_policy = \"abort\"\nmax_factors = 1\ndiagonal_loading = true\n",
                crate::synthetic::RETURNS_FILE,
                crate::synthetic::CHARACTERISTICS_FILE,
                crate::synthetic::FACTORS_FILE,
                crate::synthetic::SENTIMENT_FILE,
                crate::synthetic::ANALYST_FILE,
                crate::synthetic::RULES_FILE,
                config.seed,
            );
            let config_path = out.join("run.toml");
            write_report_file(&config_path, &run_config)
                .map_err(|e| CliFailure::data(e.to_string()))?;
            for path in paths {
                println!("wrote {}", path.display());
            }
            println!("wrote {}", config_path.display());
            Ok(EXIT_OK)
        }
        Command::ValidateTheory { spec, out } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| {
                CliFailure::config(format!("cannot read spec {}: {e}", spec.display()))
            })?;
            let theory_spec: TheorySpec = toml::from_str(&text)
                .map_err(|e| CliFailure::config(format!("{}: {e}", spec.display())))?;
            ensure_out_dir(&out)?;
            let table = sharpe_consistency_experiment(&theory_spec).map_err(|e| match e {
                crate::theory::TheoryError::FailureBudgetExceeded { .. } => CliFailure {
                    code: EXIT_THEORY,
                    kind: "theory",
                    message: e.to_string(),
                },
                other => CliFailure::config(other.to_string()),
            })?;
            let csv = convergence_csv(&table);
            write_report_file(out.join("convergence.csv"), &csv)
                .map_err(|e| CliFailure::data(e.to_string()))?;
            print!("{csv}");
            // Contrast runs are informative, not failures.
            if table.converged || theory_spec.screening == ScreeningMode::Random {
                Ok(EXIT_OK)
            } else {
                eprintln!(
                    "{}",
                    serde_json::json!({
                        "code": EXIT_FAIL,
                        "kind": "theory",
                        "message": "medians did not decrease monotonically",
                    })
                );
                Ok(EXIT_FAIL)
            }
        }
    }
}
