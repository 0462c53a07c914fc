//! Report assembly and rendering to JSON, CSV and SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backtest::{ClassicEvaluation, DailyEval, RunResult, POSITION_LABELS};
use crate::error::{Error, Result};
use crate::metrics::{self, Summary};
use crate::HORIZON;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 8] = ["No.", "RMSE", "Mon", "Tue", "Wed", "Thu", "Fri", "Time"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRound {
    pub round: usize,
    pub seed: u64,
    pub rmse: f64,
    pub day_rmse: [f64; HORIZON],
    pub time_sec: Option<f64>,
}

/// Daily-mode statistics for one partition of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub round: usize,
    pub predictions: usize,
    pub rmse: f64,
    pub correlation: Option<f64>,
    pub ratio_rmse_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cases {
    pub case_i: Vec<CaseRow>,
    pub case_ii: Vec<CaseRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub rmse: f64,
    pub day_rmse: [f64; HORIZON],
    pub time_sec: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean: AggregateRow,
    pub min: AggregateRow,
    pub max: AggregateRow,
    pub sd: AggregateRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub model_id: String,
    pub config_digest: String,
    /// `daily` for classical regressors, `walk_forward` for LSTMs.
    pub protocol: String,
    pub rounds: Vec<ReportRound>,
    pub aggregates: Aggregates,
    pub ratio_rmse_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub correlation: Option<f64>,
    pub test_mean_open: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cases: Option<Cases>,
}

fn aggregate(rounds: &[ReportRound]) -> Result<Aggregates> {
    let col = |f: &dyn Fn(&ReportRound) -> f64| metrics::summarize(&rounds.iter().map(f).collect::<Vec<_>>());
    let rmse = col(&|r| r.rmse)?;
    let mut days = [rmse; HORIZON];
    for (p, d) in days.iter_mut().enumerate() {
        *d = col(&|r| r.day_rmse[p])?;
    }
    let time = if rounds.iter().all(|r| r.time_sec.is_some()) {
        Some(col(&|r| r.time_sec.unwrap_or(0.0))?)
    } else {
        None
    };
    let row = |pick: fn(&Summary) -> f64| AggregateRow {
        rmse: pick(&rmse),
        day_rmse: days.map(|d| pick(&d)),
        time_sec: time.map(|t| pick(&t)),
    };
    Ok(Aggregates { mean: row(|s| s.mean), min: row(|s| s.min), max: row(|s| s.max), sd: row(|s| s.sd) })
}

fn report_rounds(runs: &[&RunResult], record_time: bool) -> Vec<ReportRound> {
    runs.iter()
        .enumerate()
        .map(|(i, r)| ReportRound {
            round: i + 1,
            seed: r.seed,
            rmse: r.rmse_overall,
            day_rmse: r.rmse_per_day,
            time_sec: record_time.then_some(r.wall_time),
        })
        .collect()
}

/// Weekly walk-forward report. Timings are included only when
/// `record_time` is set, since they make otherwise identical runs differ.
pub fn walk_forward_report(
    model_id: &str,
    config_digest: &str,
    runs: &[RunResult],
    test_mean_open: f64,
    record_time: bool,
) -> Result<EvalReport> {
    let refs: Vec<&RunResult> = runs.iter().collect();
    let rounds = report_rounds(&refs, record_time);
    let aggregates = aggregate(&rounds)?;
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        model_id: model_id.to_string(),
        config_digest: config_digest.to_string(),
        protocol: "walk_forward".into(),
        ratio_rmse_mean: metrics::ratio_rmse_mean(aggregates.mean.rmse, test_mean_open)?,
        rounds,
        aggregates,
        correlation: None,
        test_mean_open,
        cases: None,
    })
}

fn case_row(round: usize, e: &DailyEval, mean_open: f64) -> Result<CaseRow> {
    Ok(CaseRow {
        round,
        predictions: e.predicted.len(),
        rmse: e.rmse,
        correlation: e.correlation,
        ratio_rmse_mean: metrics::ratio_rmse_mean(e.rmse, mean_open)?,
    })
}

/// Daily-mode report: round rows describe the test partition (Case II)
/// by week position; `cases` holds both partitions' daily statistics.
/// `correlation` is the mean Case II correlation when every round has one.
pub fn classic_report(
    model_id: &str,
    config_digest: &str,
    evals: &[ClassicEvaluation],
    train_mean_open: f64,
    test_mean_open: f64,
    record_time: bool,
) -> Result<EvalReport> {
    let weekly: Vec<&RunResult> = evals.iter().map(|e| &e.case_ii.weekly).collect();
    let mut rounds = report_rounds(&weekly, record_time);
    for (row, e) in rounds.iter_mut().zip(evals) {
        row.rmse = e.case_ii.rmse;
    }
    let aggregates = aggregate(&rounds)?;
    let mut cases = Cases { case_i: vec![], case_ii: vec![] };
    for (i, e) in evals.iter().enumerate() {
        cases.case_i.push(case_row(i + 1, &e.case_i, train_mean_open)?);
        cases.case_ii.push(case_row(i + 1, &e.case_ii, test_mean_open)?);
    }
    let corrs: Option<Vec<f64>> = cases.case_ii.iter().map(|c| c.correlation).collect();
    let correlation = corrs.map(|c| c.iter().sum::<f64>() / c.len() as f64);
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        model_id: model_id.to_string(),
        config_digest: config_digest.to_string(),
        protocol: "daily".into(),
        ratio_rmse_mean: metrics::ratio_rmse_mean(aggregates.mean.rmse, test_mean_open)?,
        rounds,
        aggregates,
        correlation,
        test_mean_open,
        cases: Some(cases),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        match probe.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(Error::Schema(format!("report schema version {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(Error::Schema("report has no schema_version".into())),
        }
        Ok(serde_json::from_value(probe)?)
    }
}

fn opt(v: Option<f64>, dp: usize) -> String {
    v.map(|t| format!("{t:.dp$}")).unwrap_or_default()
}

fn push_row(out: &mut String, label: &str, rmse: String, days: [String; HORIZON], time: String) {
    let _ = writeln!(out, "{label},{rmse},{},{time}", days.join(","));
}

/// Round rows followed by Mean, Min, Max, SD and RMSE/Mean rows.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in &report.rounds {
        push_row(&mut out, &r.round.to_string(), format!("{:.1}", r.rmse), r.day_rmse.map(|d| format!("{d:.0}")), opt(r.time_sec, 2));
    }
    let a = &report.aggregates;
    push_row(&mut out, "Mean", format!("{:.2}", a.mean.rmse), a.mean.day_rmse.map(|d| format!("{d:.0}")), opt(a.mean.time_sec, 2));
    push_row(&mut out, "Min", format!("{:.1}", a.min.rmse), a.min.day_rmse.map(|d| format!("{d:.0}")), opt(a.min.time_sec, 2));
    push_row(&mut out, "Max", format!("{:.1}", a.max.rmse), a.max.day_rmse.map(|d| format!("{d:.0}")), opt(a.max.time_sec, 2));
    push_row(&mut out, "SD", format!("{:.2}", a.sd.rmse), a.sd.day_rmse.map(|d| format!("{d:.1}")), opt(a.sd.time_sec, 3));
    let m = report.test_mean_open;
    push_row(
        &mut out,
        "RMSE/Mean",
        format!("{:.4}", report.ratio_rmse_mean),
        a.mean.day_rmse.map(|d| format!("{:.2}", d / m)),
        String::new(),
    );
    out
}

/// Per-partition daily statistics, or `None` for weekly reports.
pub fn render_cases_csv(report: &EvalReport) -> Option<String> {
    let cases = report.cases.as_ref()?;
    let mut out = String::from("Round,Case,Predictions,RMSE,Correlation,RMSE/Mean\n");
    for (name, rows) in [("I", &cases.case_i), ("II", &cases.case_ii)] {
        for c in rows {
            let _ = writeln!(
                out,
                "{},{name},{},{:.2},{},{:.4}",
                c.round,
                c.predictions,
                c.rmse,
                opt(c.correlation, 4),
                c.ratio_rmse_mean
            );
        }
    }
    Some(out)
}

/// Bar chart of one round's per-position RMSE (1-based `round`).
pub fn render_svg(report: &EvalReport, round: usize) -> Result<String> {
    let r = report
        .rounds
        .iter()
        .find(|r| r.round == round)
        .ok_or_else(|| Error::Config(format!("report has no round {round}")))?;
    let (w, h, left, bottom, top) = (480.0, 300.0, 60.0, 40.0, 40.0);
    let plot_h = h - bottom - top;
    let top_val = r.day_rmse.iter().copied().fold(0.0f64, f64::max).max(1e-12) * 1.1;
    let slot = (w - left - 20.0) / HORIZON as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{} round {} day-wise RMSE</text>"#,
        w / 2.0,
        xml_escape(&report.model_id),
        r.round
    );
    let base = h - bottom;
    let _ = writeln!(s, r#"<line x1="{left}" y1="{base}" x2="{:.1}" y2="{base}" stroke="black"/>"#, w - 20.0);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="black"/>"#);
    for (p, (label, v)) in POSITION_LABELS.iter().zip(r.day_rmse).enumerate() {
        let bh = plot_h * v / top_val;
        let x = left + slot * p as f64 + slot * 0.15;
        let bw = slot * 0.7;
        let _ = writeln!(
            s,
            r##"<rect x="{x:.1}" y="{:.1}" width="{bw:.1}" height="{bh:.1}" fill="#4a7ab5"/>"##,
            base - bh
        );
        let cx = x + bw / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{v:.0}</text>"#,
            base - bh - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{label}</text>"#,
            base + 16.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

/// Writes the requested formats into `dir` and returns the paths written.
pub fn render_report(report: &EvalReport, formats: &[Format], dir: &Path, svg_round: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = &report.model_id;
    let mut written = vec![];
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    for f in formats {
        match f {
            Format::Json => put(format!("{stem}_report.json"), report.to_json()?)?,
            Format::Csv => {
                put(format!("{stem}_report.csv"), render_csv(report))?;
                if let Some(c) = render_cases_csv(report) {
                    put(format!("{stem}_cases.csv"), c)?;
                }
            }
            Format::Svg => put(format!("{stem}_round{svg_round}.svg"), render_svg(report, svg_round)?)?,
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backtest::ForecastRound;

    const TABLE: [f64; 10] = [350.7, 347.2, 351.9, 323.6, 347.4, 314.5, 330.8, 340.1, 378.1, 361.5];

    fn runs() -> Vec<RunResult> {
        TABLE
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let err = [e * 0.7, e * 0.85, e, e * 1.1, e * 1.25];
                let r = ForecastRound { week_index: 0, predicted: err, actual: [0.0; 5] };
                RunResult::from_rounds(vec![r], 18.0 + i as f64 * 0.1, 42 + i as u64).unwrap()
            })
            .collect()
    }

    #[test]
    fn csv_layout() {
        let rep = walk_forward_report("lstm1", "abc", &runs(), 11070.59, true).unwrap();
        let csv = render_csv(&rep);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "No.,RMSE,Mon,Tue,Wed,Thu,Fri,Time");
        assert_eq!(lines.len() - 1, 15);
        assert!(lines[11].starts_with("Mean,"));
        assert!(lines[15].starts_with("RMSE/Mean,"));
        assert!(lines[15].ends_with(','));
    }

    #[test]
    fn time_column_blank_unless_recorded() {
        let rep = walk_forward_report("lstm1", "abc", &runs(), 11070.59, false).unwrap();
        assert!(rep.rounds.iter().all(|r| r.time_sec.is_none()));
        assert!(render_csv(&rep).lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn aggregates_recomputable_from_rows() {
        let rep = walk_forward_report("m", "d", &runs(), 11070.59, true).unwrap();
        let rmse: Vec<f64> = rep.rounds.iter().map(|r| r.rmse).collect();
        let s = metrics::summarize(&rmse).unwrap();
        assert!((rep.aggregates.mean.rmse - s.mean).abs() < 1e-9);
        assert!((rep.aggregates.sd.rmse - s.sd).abs() < 1e-9);
        assert!((rep.ratio_rmse_mean - rep.aggregates.mean.rmse / rep.test_mean_open).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_and_schema_guard() {
        let rep = walk_forward_report("lstm1", "abc", &runs(), 11070.59, true).unwrap();
        let text = rep.to_json().unwrap();
        assert_eq!(EvalReport::from_json(&text).unwrap(), rep);
        assert_eq!(rep.to_json().unwrap(), text);
        let bad = text.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(EvalReport::from_json(&bad), Err(Error::Schema(_))));
    }

    #[test]
    fn svg_deterministic_and_checked() {
        let rep = walk_forward_report("lstm1", "abc", &runs(), 11070.59, false).unwrap();
        let a = render_svg(&rep, 2).unwrap();
        assert_eq!(a, render_svg(&rep, 2).unwrap());
        assert_eq!(a.matches("<rect").count(), 6);
        assert!(render_svg(&rep, 11).is_err());
    }

    #[test]
    fn files_written() {
        let dir = tempfile::tempdir().unwrap();
        let rep = walk_forward_report("lstm1", "abc", &runs(), 11070.59, false).unwrap();
        let paths = render_report(&rep, &[Format::Json, Format::Csv, Format::Svg], dir.path(), 1).unwrap();
        assert_eq!(paths.len(), 3);
        let again = tempfile::tempdir().unwrap();
        render_report(&rep, &[Format::Json, Format::Csv, Format::Svg], again.path(), 1).unwrap();
        for p in &paths {
            let q = again.path().join(p.file_name().unwrap());
            assert_eq!(fs::read(p).unwrap(), fs::read(q).unwrap());
        }
    }
}
