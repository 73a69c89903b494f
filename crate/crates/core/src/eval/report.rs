use std::fmt::Write as _;

use super::{percent, EvalReport};
use crate::learners::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "table" | "text-table" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}` (expected text, json or csv)")),
        }
    }
}

enum Row {
    Family(&'static str, Family),
    Missing(&'static str, &'static str),
}

const ROWS: [Row; 9] = [
    Row::Family("Neural Nets", Family::Lvq),
    Row::Family("Lazy Learner", Family::Knn),
    Row::Family("Symbolic Eager", Family::NaiveBayes),
    Row::Family("Learners", Family::Id3),
    Row::Missing("", "RIPPER"),
    Row::Missing("", "Boosted RIPPER"),
    Row::Missing("", "C4.5"),
    Row::Missing("", "C5.0"),
    Row::Family("Support Vectors", Family::LinearSvmOvr),
];

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

fn text(report: &EvalReport) -> String {
    let modes = &report.config.modes;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}-fold cross-validation, seed {}, {} documents, {} categories",
        report.config.n_folds, report.config.seed, report.n_docs, report.n_categories
    );
    let _ = writeln!(out);
    let mut head1 = format!("{:<17}{:<18}", "", "");
    let mut head2 = format!("{:<17}{:<18}", "", "SML algorithm");
    for m in modes {
        let _ = write!(head1, "{:<18}", m.label());
        let _ = write!(head2, "{:<9}{:<9}", "Best", "Best5");
    }
    let _ = writeln!(out, "{}", head1.trim_end());
    let _ = writeln!(out, "{}", head2.trim_end());
    let rule = "-".repeat(35 + 18 * modes.len());
    let _ = writeln!(out, "{rule}");
    for row in &ROWS {
        let mut line = String::new();
        match row {
            Row::Family(group, family) => {
                if !report.cells.iter().any(|c| c.family == *family) {
                    continue;
                }
                let _ = write!(line, "{:<17}{:<18}", group, family.label());
                for &m in modes {
                    match report.cell(m, *family) {
                        Some(c) if c.error.is_none() => {
                            let _ = write!(line, "{:<9}{:<9}", pct(c.best1), pct(c.best5));
                        }
                        Some(_) => {
                            let _ = write!(line, "{:<9}{:<9}", "error", "error");
                        }
                        None => {
                            let _ = write!(line, "{:<9}{:<9}", "-", "-");
                        }
                    }
                }
            }
            Row::Missing(group, name) => {
                let _ = write!(line, "{:<17}{:<18}", group, name);
                for _ in modes {
                    let _ = write!(line, "{:<9}{:<9}", "n/a", "n/a");
                }
            }
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    let _ = writeln!(out, "{rule}");
    let mut line = format!("{:<17}{:<18}", "Baseline", "Majority class");
    for _ in modes {
        let _ = write!(line, "{:<9}{:<9}", pct(report.baseline.best1), pct(report.baseline.best5));
    }
    let _ = writeln!(out, "{}", line.trim_end());
    let _ = writeln!(out);
    let (dm, df) = report.config.designated;
    match (report.designated_best5, report.overall_best5) {
        (Some(b5), Some(overall)) => {
            let _ = writeln!(
                out,
                "overall: coverage {:.4} x Best5 {:.4} ({}, {}) = {:.4} ({})",
                report.coverage,
                b5,
                dm.label(),
                df.label(),
                overall,
                percent(overall)
            );
        }
        _ => {
            let _ = writeln!(out, "overall: n/a ({}, {} not evaluated)", dm.label(), df.label());
        }
    }
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        let _ = writeln!(
            out,
            "error in {} / {}: {}",
            c.mode.label(),
            c.family.label(),
            c.error.as_deref().unwrap_or_default()
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn csv(report: &EvalReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mode", "family", "best1", "best5", "n_test", "error"])
        .expect("in-memory write");
    for c in &report.cells {
        w.write_record([
            c.mode.as_str(),
            c.family.as_str(),
            &format!("{:.6}", c.best1),
            &format!("{:.6}", c.best5),
            &c.n_test.to_string(),
            c.error.as_deref().unwrap_or(""),
        ])
        .expect("in-memory write");
    }
    w.write_record([
        "",
        "majority_baseline",
        &format!("{:.6}", report.baseline.best1),
        &format!("{:.6}", report.baseline.best5),
        &report.n_docs.to_string(),
        "",
    ])
    .expect("in-memory write");
    w.into_inner().expect("in-memory flush")
}

/// Renders the report; equal reports give equal bytes in every format.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Text => text(report).into_bytes(),
        ReportFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
            bytes.push(b'\n');
            bytes
        }
        ReportFormat::Csv => csv(report),
    }
}
