//! Report files: monthly ledger, summary table in the method-by-objective
//! layout, audit log, convergence table, and the run manifest.
//!
//! Every writer formats floats with a fixed number of decimals so
//! identical runs produce byte-identical files. The manifest is the one
//! exception to byte-stability: it records wall-clock timestamps.

use crate::backtest::{BacktestReport, Summary};
use crate::portfolio::Objective;
use crate::precision::Method;
use crate::theory::ConvergenceTable;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("summary table line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn write_text(path: impl AsRef<Path>, text: &str) -> Result<(), ReportError> {
    std::fs::write(path.as_ref(), text).map_err(|source| ReportError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

/// Monthly ledger: one row per method x objective x month.
pub fn monthly_ledger_csv(report: &BacktestReport) -> String {
    let mut out = String::from("method,objective,date,gross,net,turnover,p_hat,cash\n");
    for cell in &report.cells {
        for m in &cell.monthly {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                cell.method.code(),
                cell.objective.code(),
                m.date,
                f6(m.gross),
                f6(m.net),
                f6(m.turnover),
                m.p_hat,
                m.cash
            );
        }
    }
    out
}

/// Summary table in the method-by-objective layout: rows are methods, column
/// triples are annualized Sharpe ratio / return / variance for
/// GMV, MV, MSR.
pub fn summary_table_csv(report: &BacktestReport) -> String {
    let mut out =
        String::from("method,sr_gmv,sr_mv,sr_msr,ret_gmv,ret_mv,ret_msr,var_gmv,var_mv,var_msr\n");
    let mut methods: Vec<Method> = report.cells.iter().map(|c| c.method).collect();
    methods.dedup();
    for method in methods {
        let cell = |objective: Objective| -> Option<&Summary> {
            report
                .cell(method, objective)
                .and_then(|c| c.summary.as_ref())
        };
        let field = |s: Option<&Summary>, pick: fn(&Summary) -> f64| match s {
            Some(s) => f6(pick(s)),
            None => String::from("NA"),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            method.label(),
            field(cell(Objective::Gmv), |s| s.annualized_sr),
            field(cell(Objective::MeanVariance), |s| s.annualized_sr),
            field(cell(Objective::MaxSharpe), |s| s.annualized_sr),
            field(cell(Objective::Gmv), |s| s.annualized_return),
            field(cell(Objective::MeanVariance), |s| s.annualized_return),
            field(cell(Objective::MaxSharpe), |s| s.annualized_return),
            field(cell(Objective::Gmv), |s| s.annualized_variance),
            field(cell(Objective::MeanVariance), |s| s.annualized_variance),
            field(cell(Objective::MaxSharpe), |s| s.annualized_variance),
        );
    }
    out
}

/// One parsed summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    /// Indexed by objective: SR, return, variance per GMV/MV/MSR.
    pub sharpe: [Option<f64>; 3],
    pub returns: [Option<f64>; 3],
    pub variance: [Option<f64>; 3],
}

/// Parse [`summary_table_csv`] output back into rows.
pub fn parse_summary_table(text: &str) -> Result<Vec<SummaryRow>, ReportError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ReportError::Malformed {
        line: 1,
        message: "empty summary table".into(),
    })?;
    let expected = "method,sr_gmv,sr_mv,sr_msr,ret_gmv,ret_mv,ret_msr,var_gmv,var_mv,var_msr";
    if header != expected {
        return Err(ReportError::Malformed {
            line: 1,
            message: format!("unexpected header `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 10 {
            return Err(ReportError::Malformed {
                line: idx + 1,
                message: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        let parse = |s: &str, line: usize| -> Result<Option<f64>, ReportError> {
            if s == "NA" {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| ReportError::Malformed {
                line,
                message: format!("invalid number `{s}`"),
            })
        };
        let mut nums = Vec::with_capacity(9);
        for s in &fields[1..] {
            nums.push(parse(s, idx + 1)?);
        }
        rows.push(SummaryRow {
            method: fields[0].to_string(),
            sharpe: [nums[0], nums[1], nums[2]],
            returns: [nums[3], nums[4], nums[5]],
            variance: [nums[6], nums[7], nums[8]],
        });
    }
    Ok(rows)
}

/// Fixed-width text rendering of the summary table for terminals.
pub fn summary_table_text(report: &BacktestReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>24} {:>26} {:>26}",
        "", "Sharpe Ratio", "Returns", "Variance"
    );
    let _ = writeln!(
        out,
        "{:<14} {:>8} {:>8} {:>8}  {:>8} {:>8} {:>8}  {:>8} {:>8} {:>8}",
        "Method", "GMV", "MV", "MSR", "GMV", "MV", "MSR", "GMV", "MV", "MSR"
    );
    let mut methods: Vec<Method> = report.cells.iter().map(|c| c.method).collect();
    methods.dedup();
    for method in methods {
        let get = |objective: Objective, pick: fn(&Summary) -> f64| -> String {
            match report
                .cell(method, objective)
                .and_then(|c| c.summary.as_ref())
            {
                Some(s) => format!("{:.4}", pick(s)),
                None => "NA".to_string(),
            }
        };
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>8} {:>8}  {:>8} {:>8} {:>8}  {:>8} {:>8} {:>8}",
            method.label(),
            get(Objective::Gmv, |s| s.annualized_sr),
            get(Objective::MeanVariance, |s| s.annualized_sr),
            get(Objective::MaxSharpe, |s| s.annualized_sr),
            get(Objective::Gmv, |s| s.annualized_return),
            get(Objective::MeanVariance, |s| s.annualized_return),
            get(Objective::MaxSharpe, |s| s.annualized_return),
            get(Objective::Gmv, |s| s.annualized_variance),
            get(Objective::MeanVariance, |s| s.annualized_variance),
            get(Objective::MaxSharpe, |s| s.annualized_variance),
        );
    }
    out
}

/// Per-decision-month audit log.
pub fn audit_csv(report: &BacktestReport) -> String {
    let mut out = String::from(
        "decision_month,earning_month,intersection_size,fallback_used,conflicts_dropped,screened,dropped_coverage,cash,notes\n",
    );
    for a in &report.audit {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            a.decision_month,
            a.earning_month,
            a.consensus.intersection_size,
            a.consensus.fallback_used,
            a.consensus.conflicts_dropped,
            a.screened,
            a.dropped_coverage,
            a.cash,
            a.notes.join("; ").replace(',', ";")
        );
    }
    out
}

/// Convergence table `n,q10,q50,q90,fail_rate` with a trailing
/// `# converged=` flag line.
pub fn convergence_csv(table: &ConvergenceTable) -> String {
    let mut out = String::from("n,q10,q50,q90,fail_rate\n");
    for point in &table.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            point.n,
            f6(point.q10),
            f6(point.q50),
            f6(point.q90),
            f6(point.fail_rate)
        );
    }
    let _ = writeln!(out, "# converged={}", table.converged);
    out
}

/// SHA-256 digest of a file, hex encoded.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String, ReportError> {
    let bytes = std::fs::read(path.as_ref()).map_err(|source| ReportError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Run manifest: config snapshot, input digests (recorded before any
/// computation), tool version, seed, and timestamps. Identical manifests
/// imply identical outputs; the timestamps themselves are informational.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub config_snapshot: String,
    pub input_digests: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: Option<String>,
}

impl RunManifest {
    pub fn start(seed: u64, config_snapshot: String) -> RunManifest {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_snapshot,
            input_digests: BTreeMap::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
        }
    }

    pub fn record_input(&mut self, path: impl AsRef<Path>) -> Result<(), ReportError> {
        let digest = file_digest(path.as_ref())?;
        self.input_digests
            .insert(path.as_ref().display().to_string(), digest);
        Ok(())
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ReportError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_text(path, &json)
    }
}

/// Write a string to a file, mapping IO errors with the path attached.
pub fn write_report_file(path: impl AsRef<Path>, text: &str) -> Result<(), ReportError> {
    write_text(path, text)
}
