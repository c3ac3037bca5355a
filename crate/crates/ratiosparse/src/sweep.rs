//! Parallel sweeps and their CSV tables.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use ratiosparse_core::bench::{aggregate, run_trial, Clock, ExperimentSpec, Summary, TrialRecord};
use ratiosparse_core::gen::MatrixKind;

use crate::error::{AppError, AppResult};

/// Monotonic seconds since construction.
pub struct WallClock(Instant);

impl Default for WallClock {
    fn default() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Runs every `(cell, trial)` on a pool of `threads` workers (`0` = all
/// cores). Records come back in job order, so the output does not depend on
/// the thread count.
pub fn run_sweep(spec: &ExperimentSpec, threads: usize) -> AppResult<Vec<TrialRecord>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(AppError::runtime)?;
    let clock = WallClock::default();
    let jobs = spec.jobs();
    let nested: Vec<Vec<TrialRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, trial)| run_trial(spec, cell, trial, &clock))
            .collect()
    });
    Ok(nested.into_iter().flatten().collect())
}

fn kind_fields(kind: MatrixKind) -> (&'static str, f64) {
    match kind {
        MatrixKind::Gaussian { r } => ("gaussian", r),
        MatrixKind::OversampledDct { f } => ("dct", f),
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn writer(path: &Path) -> AppResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| AppError::Runtime(format!("cannot write `{}`: {e}", path.display())))
}

fn finish(mut w: csv::Writer<std::fs::File>) -> AppResult<()> {
    w.flush().map_err(AppError::runtime)
}

fn row(w: &mut csv::Writer<std::fs::File>, cells: &[String]) -> AppResult<()> {
    w.write_record(cells).map_err(AppError::runtime)
}

/// One row per `(trial, method)` without timing.
pub fn write_records(path: &Path, records: &[TrialRecord]) -> AppResult<()> {
    let mut w = writer(path)?;
    row(&mut w, &[
        "cell", "family", "param", "sparsity", "trial", "seed", "method", "rel_error", "success",
        "failure_class", "snr_db_metric", "iterations", "error",
    ].map(String::from))?;
    for r in records {
        let (family, param) = kind_fields(r.generator.kind);
        row(&mut w, &[
            r.cell.to_string(),
            family.into(),
            num(param),
            r.generator.sparsity.to_string(),
            r.trial.to_string(),
            r.generator.seed.to_string(),
            r.method.tag().into(),
            num(r.rel_error),
            r.success.to_string(),
            r.failure_class.tag().into(),
            num(r.snr_db_metric),
            r.iterations.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    finish(w)
}

/// Wall times, kept apart so the other tables are reproducible byte for byte.
pub fn write_timings(path: &Path, records: &[TrialRecord]) -> AppResult<()> {
    let mut w = writer(path)?;
    row(&mut w, &["cell", "trial", "method", "wall_time"].map(String::from))?;
    for r in records {
        row(&mut w, &[r.cell.to_string(), r.trial.to_string(), r.method.tag().into(), num(r.wall_time)])?;
    }
    finish(w)
}

pub fn write_rates(path: &Path, summary: &Summary) -> AppResult<()> {
    let mut w = writer(path)?;
    row(&mut w, &[
        "cell", "family", "param", "sparsity", "method", "trials", "errors", "success_rate",
        "model_failure_rate", "algorithm_failure_rate",
    ].map(String::from))?;
    for r in &summary.rates {
        let (family, param) = kind_fields(r.kind);
        row(&mut w, &[
            r.cell.to_string(),
            family.into(),
            num(param),
            r.sparsity.to_string(),
            r.method.tag().into(),
            r.trials.to_string(),
            r.errors.to_string(),
            num(r.success_rate),
            num(r.model_failure_rate),
            num(r.algorithm_failure_rate),
        ])?;
    }
    finish(w)
}

/// Long-format plot data: one series per `(method, family, param)`, `x` the
/// sparsity and `y` the success rate.
pub fn write_plot_data(path: &Path, summary: &Summary) -> AppResult<()> {
    let mut w = writer(path)?;
    row(&mut w, &["series", "x", "y"].map(String::from))?;
    for r in &summary.rates {
        let (family, param) = kind_fields(r.kind);
        row(&mut w, &[
            format!("{}:{family}={param}", r.method.tag()),
            r.sparsity.to_string(),
            num(r.success_rate),
        ])?;
    }
    finish(w)
}

pub fn write_ranks(path: &Path, summary: &Summary) -> AppResult<()> {
    let mut w = writer(path)?;
    row(&mut w, &["cell", "method", "mean_rank", "ranked_trials"].map(String::from))?;
    for r in &summary.ranks {
        row(&mut w, &[r.cell.to_string(), r.method.tag().into(), num(r.mean_rank), r.ranked_trials.to_string()])?;
    }
    finish(w)
}

pub fn write_wins(path: &Path, summary: &Summary) -> AppResult<()> {
    let mut w = writer(path)?;
    row(&mut w, &["cell", "method", "wins"].map(String::from))?;
    for r in &summary.wins {
        row(&mut w, &[r.cell.to_string(), r.method.tag().into(), r.wins.to_string()])?;
    }
    finish(w)
}

/// Writes every table of a sweep into `dir` and returns the summary.
/// Noisy sweeps add `ranks.csv` and `wins.csv`.
pub fn write_outputs(dir: &Path, records: &[TrialRecord], noisy: bool) -> AppResult<Summary> {
    let summary = aggregate(records);
    write_records(&dir.join("records.csv"), records)?;
    write_timings(&dir.join("timings.csv"), records)?;
    write_rates(&dir.join("rates.csv"), &summary)?;
    write_plot_data(&dir.join("plot_success.csv"), &summary)?;
    if noisy {
        write_ranks(&dir.join("ranks.csv"), &summary)?;
        write_wins(&dir.join("wins.csv"), &summary)?;
    }
    Ok(summary)
}
