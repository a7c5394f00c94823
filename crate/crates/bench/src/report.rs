//! CSV and JSON report writers.
//!
//! CSV columns: `solver, instance, m, n, t, trial, iterations, seconds,
//! terminal_res, stop_reason`, one row per trial followed by a row with
//! `trial = mean` holding the mean iterations and seconds. The history
//! companion file has columns `trial, iteration, res, distance`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::OutputFormat;
use crate::runner::BenchReport;
use crate::BenchError;

pub const CSV_HEADER: [&str; 10] = [
    "solver",
    "instance",
    "m",
    "n",
    "t",
    "trial",
    "iterations",
    "seconds",
    "terminal_res",
    "stop_reason",
];

pub const HISTORY_HEADER: [&str; 4] = ["trial", "iteration", "res", "distance"];

pub const OUT_DIR_ENV: &str = "GRABP_BENCH_OUT_DIR";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(reports: &[BenchReport], w: W) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for report in reports {
        for t in &report.trials {
            out.write_record([
                report.solver.clone(),
                report.instance.clone(),
                t.m.to_string(),
                t.n.to_string(),
                opt(t.t),
                t.trial.to_string(),
                t.iterations.to_string(),
                t.seconds.to_string(),
                t.terminal_res.to_string(),
                t.stop_reason.as_str().to_string(),
            ])?;
        }
        let first = report.trials.first();
        let agg = &report.aggregates;
        out.write_record([
            report.solver.clone(),
            report.instance.clone(),
            opt(first.map(|t| t.m)),
            opt(first.map(|t| t.n)),
            opt(first.and_then(|t| t.t)),
            "mean".to_string(),
            agg.mean_iterations.to_string(),
            agg.mean_seconds.to_string(),
            String::new(),
            format!("forced={}", agg.forced_trials),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_json<W: Write>(reports: &[BenchReport], mut w: W) -> Result<(), BenchError> {
    match reports {
        [single] => serde_json::to_writer_pretty(&mut w, single)?,
        many => serde_json::to_writer_pretty(&mut w, many)?,
    }
    writeln!(w).map_err(|source| BenchError::Io {
        path: PathBuf::from("<output>"),
        source,
    })
}

pub fn write_history<W: Write>(reports: &[BenchReport], w: W) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HISTORY_HEADER)?;
    for report in reports {
        for t in &report.trials {
            for rec in t.history.iter().flatten() {
                out.write_record([
                    t.trial.to_string(),
                    rec.iteration.to_string(),
                    rec.res.to_string(),
                    opt(rec.distance),
                ])?;
            }
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_report<W: Write>(reports: &[BenchReport], format: OutputFormat, w: W) -> Result<(), BenchError> {
    match format {
        OutputFormat::Csv => write_csv(reports, w),
        OutputFormat::Json => write_json(reports, w),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, BenchError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| BenchError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `report.csv` -> `report.history.csv`.
pub fn history_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.history.csv"))
}

/// Writes the report to `path` and, when any trial has a history, the
/// companion file next to it. Returns the paths written.
pub fn emit_report(reports: &[BenchReport], format: OutputFormat, path: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let mut written = vec![path.to_path_buf()];
    write_report(reports, format, create(path)?)?;
    if reports.iter().flat_map(|r| &r.trials).any(|t| t.history.is_some()) {
        let hp = history_path(path);
        write_history(reports, create(&hp)?)?;
        written.push(hp);
    }
    Ok(written)
}

/// Writes each trial's final iterate to `dir/trial-<i>.txt`, one value per line.
pub fn dump_solutions(report: &BenchReport, dir: &Path) -> Result<(), BenchError> {
    for t in &report.trials {
        let path = dir.join(format!("trial-{}.txt", t.trial));
        let mut w = create(&path)?;
        for v in &t.x {
            writeln!(w, "{v:e}").map_err(|source| BenchError::Io {
                path: path.clone(),
                source,
            })?;
        }
    }
    Ok(())
}

/// Default report file under `$GRABP_BENCH_OUT_DIR`, if that is set.
pub fn default_output_path(solver: &str, instance: &str, format: OutputFormat) -> Option<PathBuf> {
    let dir = std::env::var_os(OUT_DIR_ENV)?;
    let slug: String = instance
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    Some(PathBuf::from(dir).join(format!("{solver}-{slug}.{}", format.extension())))
}

pub fn stdout() -> io::StdoutLock<'static> {
    io::stdout().lock()
}
