use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::{ExperimentReport, ScaleReport, TimingReport};
use crate::error::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

pub fn report_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Table rows in display order: one per weight order, then oracle, then control variate.
fn row_names(scale: &ScaleReport) -> Vec<String> {
    let mut rows: Vec<String> = Vec::new();
    for c in &scale.cells {
        if !rows.contains(&c.estimator) {
            rows.push(c.estimator.clone());
        }
    }
    rows
}

fn cell_value(scale: &ScaleReport, h: &str, row: &str) -> (Option<f64>, Option<f64>) {
    scale
        .cells
        .iter()
        .find(|c| c.h == h && c.estimator == row)
        .map_or((None, None), |c| (c.ratio, c.se))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// Wide table: one row per (scale, estimator), a ratio and SE column per test function.
pub fn table_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["scale".to_string(), "estimator".to_string(), "reference".to_string()];
    for h in &report.config.h {
        header.push(h.clone());
        header.push(format!("{h}_se"));
    }
    w.write_record(&header).map_err(|e| Error::Config(e.to_string()))?;
    for scale in &report.scales {
        for row in row_names(scale) {
            let reference = scale
                .cells
                .iter()
                .find(|c| c.estimator == row)
                .map(|c| c.reference.clone())
                .unwrap_or_default();
            let mut rec = vec![scale.label.clone(), row.clone(), reference];
            for h in &report.config.h {
                let (r, se) = cell_value(scale, h, &row);
                rec.push(fmt_opt(r));
                rec.push(fmt_opt(se));
            }
            w.write_record(&rec).map_err(|e| Error::Config(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

/// Aligned text rendering of the variance-ratio table.
pub fn table_text(report: &ExperimentReport) -> String {
    let hs = &report.config.h;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}: ratios of per-block term variances ({} iterations x {} replications)",
        report.config.name, report.config.iterations, report.config.replications
    );
    let mut line = format!("{:<14}{:<10}", "", "");
    for h in hs {
        line.push_str(&format!("{h:>18}"));
    }
    let _ = writeln!(out, "{}", line.trim_end());
    for scale in &report.scales {
        for (i, row) in row_names(scale).into_iter().enumerate() {
            let label = if i == 0 { scale.label.as_str() } else { "" };
            let mut line = format!("{label:<14}{row:<10}");
            for h in hs {
                let cell = match cell_value(scale, h, &row) {
                    (Some(r), Some(se)) => format!("{r:.3} ({se:.3})"),
                    (Some(r), None) => format!("{r:.3}"),
                    _ => "-".to_string(),
                };
                line.push_str(&format!("{cell:>18}"));
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
    }
    out
}

fn envelope_file_name(estimator: &str) -> String {
    match estimator {
        "delta" => "envelope_delta.csv".to_string(),
        other => format!("envelope_delta_k{}.csv", other.trim_start_matches("k=")),
    }
}

/// Per-iteration envelope files, one per running estimator.
pub fn write_figures(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut names: Vec<String> = Vec::new();
    for scale in &report.scales {
        if let Some(env) = &scale.envelopes {
            for k in env.estimators.keys() {
                if !names.contains(k) {
                    names.push(k.clone());
                }
            }
        }
    }
    let mut written = Vec::new();
    for name in names {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["scale", "h", "iteration", "min", "q05", "q95", "max"])
            .map_err(|e| Error::Config(e.to_string()))?;
        for scale in &report.scales {
            let Some(env) = &scale.envelopes else { continue };
            let Some(e) = env.estimators.get(&name) else { continue };
            for t in 0..e.min.len() {
                w.write_record([
                    scale.label.clone(),
                    env.h.clone(),
                    (t + 1).to_string(),
                    e.min[t].to_string(),
                    e.q05[t].to_string(),
                    e.q95[t].to_string(),
                    e.max[t].to_string(),
                ])
                .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        let path = dir.join(envelope_file_name(&name));
        fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_tables(report: &ExperimentReport, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join(format!("table_{}.csv", report.config.name));
    write_file(&path, &table_csv(report)?)?;
    Ok(path)
}

const README: &str = "\
Files written by `rbmh run`.

report.json
  config             configuration echo (runtime-only keys such as threads and out_dir omitted)
  seed               base seed; replication r uses seed + r at every scale
  probit_fit         MLE, standard errors and data size (probit only)
  scales[]           one entry per proposal scale or target parameter
    cells[]          variance ratio of an estimator's per-block terms to its reference:
                     estimator k=<order> or oracle against delta (occupation counts),
                     cv against the highest weight order; ratio pools all complete blocks
                     of all replications, se is a jackknife over replications, sign_test
                     counts per-replication ratios below 1 (one-sided binomial p-value)
    estimates        per test function and estimator, one value per replication
    summary          mean and variance of those values across replications
    cv_coefficients  fitted control-variate slope per replication
    accounting       path_proposals = R (N - 1); weight_fresh_proposals are proposals simulated
                     beyond the path; total_proposals = path + fresh + control_variate_draws
    envelopes        per-iteration min / 5% / 95% / max of running estimates for the first h

timing.json
  wall-clock seconds; not reproducible and not part of report.json

table_<name>.csv
  scale, estimator, reference, then <h> and <h>_se for every test function

envelope_delta.csv, envelope_delta_k<order>.csv
  scale, h, iteration (1..N), min, q05, q95, max across replications
";

/// Write the report, timings, table, envelopes and a column description into `dir`.
pub fn write_outputs(report: &ExperimentReport, timing: Option<&TimingReport>, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join(REPORT_FILE);
    write_file(&path, &report_json(report)?)?;
    written.push(path);
    if let Some(t) = timing {
        let path = dir.join(TIMING_FILE);
        write_file(&path, &(serde_json::to_string_pretty(t)? + "\n"))?;
        written.push(path);
    }
    written.push(write_tables(report, dir)?);
    written.extend(write_figures(report, dir)?);
    let path = dir.join("README.txt");
    write_file(&path, README)?;
    written.push(path);
    Ok(written)
}
