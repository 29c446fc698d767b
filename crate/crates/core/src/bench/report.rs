use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::stats::Aggregate;
use super::{ExperimentConfig, Timing, TrialResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub mode: u8,
    pub position: usize,
    pub trial: usize,
    pub error: String,
}

/// Per-mode aggregates over every successful trial at every position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: u8,
    pub label: String,
    pub trials: usize,
    pub update_rate: Option<Aggregate>,
    pub mean_tick_cost: Option<Aggregate>,
    pub p95_tick_cost: Option<Aggregate>,
    pub time_to_execution: Option<Aggregate>,
    pub points_peak: Option<Aggregate>,
}

impl ModeSummary {
    pub fn from_trials(mode: u8, label: &str, trials: &[&TrialResult]) -> Self {
        let agg = |f: &dyn Fn(&TrialResult) -> Option<f64>| Aggregate::of(&trials.iter().filter_map(|t| f(t)).collect::<Vec<_>>());
        ModeSummary {
            mode,
            label: label.to_string(),
            trials: trials.len(),
            update_rate: agg(&|t| Some(t.update_rate)),
            mean_tick_cost: agg(&|t| Some(t.mean_tick_cost)),
            p95_tick_cost: agg(&|t| Some(t.p95_tick_cost)),
            time_to_execution: agg(&|t| t.time_to_execution),
            points_peak: agg(&|t| Some(t.points_peak as f64)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fingerprint {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub version: String,
    pub timing: Option<Timing>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    /// Trials per mode and position, as configured.
    pub configured_trials: usize,
    pub positions: usize,
    pub modes: Vec<ModeSummary>,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    /// Set when any trial failed; aggregates then cover fewer trials than configured.
    pub partial: bool,
    pub fingerprint: Fingerprint,
}

impl Report {
    pub fn build(
        config: &ExperimentConfig,
        positions: usize,
        trials: Vec<TrialResult>,
        failures: Vec<TrialFailure>,
        timing: Option<Timing>,
    ) -> Report {
        let modes = config
            .modes
            .iter()
            .map(|spec| {
                let mine: Vec<&TrialResult> = trials.iter().filter(|t| t.mode == spec.mode).collect();
                ModeSummary::from_trials(spec.mode, &spec.label, &mine)
            })
            .collect();
        Report {
            configured_trials: config.trials,
            positions,
            modes,
            trials,
            partial: !failures.is_empty(),
            failures,
            fingerprint: Fingerprint {
                os: std::env::consts::OS.to_string(),
                arch: std::env::consts::ARCH.to_string(),
                cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
                version: env!("CARGO_PKG_VERSION").to_string(),
                timing,
                config_hash: config.hash(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

const CSV_COLUMNS: [&str; 20] = [
    "mode",
    "label",
    "trials",
    "update_rate_mean",
    "update_rate_std",
    "update_rate_min",
    "update_rate_max",
    "tick_cost_mean",
    "tick_cost_std",
    "tick_cost_min",
    "tick_cost_max",
    "p95_tick_cost_mean",
    "tte_mean",
    "tte_std",
    "tte_min",
    "tte_q1",
    "tte_median",
    "tte_q3",
    "tte_max",
    "points_peak_mean",
];

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

fn csv_row(m: &ModeSummary) -> Vec<String> {
    let ur = m.update_rate;
    let tc = m.mean_tick_cost;
    let tte = m.time_to_execution;
    vec![
        m.mode.to_string(),
        m.label.clone(),
        m.trials.to_string(),
        num(ur.map(|a| a.mean)),
        num(ur.map(|a| a.std)),
        num(ur.map(|a| a.min)),
        num(ur.map(|a| a.max)),
        num(tc.map(|a| a.mean)),
        num(tc.map(|a| a.std)),
        num(tc.map(|a| a.min)),
        num(tc.map(|a| a.max)),
        num(m.p95_tick_cost.map(|a| a.mean)),
        num(tte.map(|a| a.mean)),
        num(tte.map(|a| a.std)),
        num(tte.map(|a| a.min)),
        num(tte.map(|a| a.q1)),
        num(tte.map(|a| a.median)),
        num(tte.map(|a| a.q3)),
        num(tte.map(|a| a.max)),
        num(m.points_peak.map(|a| a.mean)),
    ]
}

fn render_csv(report: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for m in &report.modes {
        w.write_record(csv_row(m)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn pm(a: Option<Aggregate>, scale: f64, digits: usize) -> String {
    match a {
        Some(a) => format!("{:.*} ± {:.*}", digits, a.mean * scale, digits, a.std * scale),
        None => "n/a".into(),
    }
}

fn render_markdown(report: &Report) -> String {
    let mut out = String::from(
        "| Mode | Label | Trials | Update rate (Hz) | Tick cost (ms) | p95 tick cost (ms) | Time to execution (s) | TTE min / Q1 / median / Q3 / max (s) |\n\
         |---:|---|---:|---:|---:|---:|---:|---|\n",
    );
    for m in &report.modes {
        let boxplot = match m.time_to_execution {
            Some(a) => format!("{:.4} / {:.4} / {:.4} / {:.4} / {:.4}", a.min, a.q1, a.median, a.q3, a.max),
            None => "n/a".into(),
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
            m.mode,
            m.label,
            m.trials,
            pm(m.update_rate, 1.0, 2),
            pm(m.mean_tick_cost, 1e3, 4),
            pm(m.p95_tick_cost, 1e3, 4),
            pm(m.time_to_execution, 1.0, 4),
            boxplot,
        ));
    }
    if !report.failures.is_empty() {
        out.push_str("\nFailed trials:\n\n");
        for f in &report.failures {
            out.push_str(&format!("- mode {} position {} trial {}: {}\n", f.mode, f.position, f.trial, f.error));
        }
    }
    out
}

/// Renders the per-mode table. Column order is fixed; CSV holds only the table
/// so that identical runs give identical bytes.
pub fn render_report(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report is plain data") + "\n",
        ReportFormat::Markdown => render_markdown(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> Report {
        let config = ExperimentConfig {
            modes: Vec::new(),
            trials: 0,
            positions: Vec::new(),
        };
        Report::build(&config, 1, Vec::new(), Vec::new(), None)
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = empty();
        assert_eq!(render_report(&r, ReportFormat::Csv).lines().count(), 1);
        assert_eq!(render_report(&r, ReportFormat::Markdown).lines().count(), 2);
    }

    #[test]
    fn format_names() {
        assert_eq!(ReportFormat::from_path(Path::new("out/report.md")), Some(ReportFormat::Markdown));
        assert_eq!(ReportFormat::from_path(Path::new("r.CSV")), Some(ReportFormat::Csv));
        assert_eq!(ReportFormat::from_path(Path::new("r.txt")), None);
    }
}
