//! Command-line front end. [`run`] parses arguments, dispatches and maps
//! failures onto exit codes: `0` success, `1` usage or missing input, `2`
//! runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ratiosparse_core::analysis::{check_ensp, descent_report, toy_example_scan};
use ratiosparse_core::baselines::solve_l1;
use ratiosparse_core::objective::count_nonzero;
use ratiosparse_core::rvfl::{
    evaluate_mse, export_model, fold_score, import_model, kfold, normalize_grid, select_lambda, train,
    CvReport, Dataset, RvflModel,
};
use ratiosparse_core::solver::admm_solve_from;
use ratiosparse_core::{objective_h, SolveResult, Vector};

use crate::config::{Config, Family, GridSection};
use crate::error::{AppError, AppResult};
use crate::io::{ensure_dir, key_values, parse_dataset, parse_instance, parse_matrix, read_text, write_text};
use crate::sweep::{run_sweep, write_outputs};

#[derive(Debug, Parser)]
#[command(name = "ratiosparse", version, about = "Sparse recovery with the l1/2-over-l2 ratio")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub zeta: Option<f64>,
    /// Initial outer penalty, in the unit of `solver.rho_scale`.
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    /// Initial inner penalty.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Comma-separated method tags: l1, l1-l2, irls-lp, half-over-two.
    #[arg(long, global = true, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Worker threads; 1 gives bitwise-reproducible runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StartChoice {
    Zero,
    L1,
}

#[derive(Debug, Args)]
pub struct GridOpts {
    /// Gaussian family, e.g. `r=0.2` or `r=0.2,0.5`.
    #[arg(long)]
    pub gaussian: Option<String>,
    /// Oversampled DCT family, e.g. `F=10`.
    #[arg(long)]
    pub dct: Option<String>,
    /// `start:step:end`, a comma list or one value.
    #[arg(long)]
    pub sparsity: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub min_separation: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance file with the nested ADMM.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// Start point: zero, or the l1 solution.
        #[arg(long, value_enum, default_value = "l1")]
        start: StartChoice,
    },
    /// Scan the toy solution family and report each surrogate's argmin.
    Toy {
        /// `start:step:end`.
        #[arg(long, default_value = "-15:0.01:25", allow_hyphen_values = true)]
        grid: String,
    },
    /// Success-rate sweep without measurement noise.
    BenchNoiseless {
        #[command(flatten)]
        grid: GridOpts,
    },
    /// Ranking sweep with measurement noise.
    BenchNoisy {
        #[command(flatten)]
        grid: GridOpts,
        /// Measurement SNR in dB.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Test the extended null space property of a small matrix.
    NspCheck {
        /// Matrix file: bare rows or an instance file.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        /// Kernel samples when the check cannot be exact.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
    /// Train an RVFL regressor on a CSV dataset.
    RvflTrain {
        #[arg(long)]
        data: PathBuf,
        /// Separate test CSV; otherwise a seeded split of `--data`.
        #[arg(long)]
        test_data: Option<PathBuf>,
        #[arg(long)]
        targets: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        /// ridge, l1, l1_minus_l2, irls_lp or half_over_two.
        #[arg(long)]
        regularizer: Option<String>,
        /// Fixed λ; skips cross-validation.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Evaluate an exported RVFL model on a CSV dataset.
    RvflEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        targets: Option<usize>,
    },
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads the config file and applies flag overrides.
pub fn effective_config(g: &GlobalOpts) -> AppResult<Config> {
    let mut c = match &g.config {
        Some(path) => Config::from_toml(&read_text(path)?)?,
        None => Config::default(),
    };
    if let Some(s) = g.seed {
        c.bench.seed = s;
        c.rvfl.seed = s;
    }
    if let Some(z) = g.zeta {
        c.solver.zeta = z;
        c.bench.zeta = z;
    }
    if let Some(r) = g.rho {
        c.solver.rho0 = r;
    }
    if let Some(v) = g.gamma {
        c.solver.gamma0 = v;
    }
    if let Some(t) = g.trials {
        c.bench.trials = t;
    }
    if let Some(m) = &g.methods {
        c.bench.methods = m.clone();
    }
    if let Some(t) = g.threads {
        c.bench.threads = t;
    }
    c.solver.to_core().validate().map_err(|e| AppError::Usage(format!("invalid solver settings: {e}")))?;
    Ok(c)
}

fn dispatch(cli: Cli) -> AppResult<()> {
    let config = effective_config(&cli.global)?;
    if cli.global.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(AppError::Usage("no subcommand given; see --help".into()));
    };
    let out = &cli.global.out;
    match command {
        Command::Solve { instance, start } => cmd_solve(&config, out, &instance, start),
        Command::Toy { grid } => cmd_toy(out, &grid),
        Command::BenchNoiseless { grid } => {
            let mut g = config.noiseless.clone();
            apply_grid(&mut g, &grid, None)?;
            cmd_bench(&config, out, &g, &grid, false)
        }
        Command::BenchNoisy { grid, snr } => {
            let mut g = config.noisy.clone();
            apply_grid(&mut g, &grid, snr)?;
            cmd_bench(&config, out, &g, &grid, true)
        }
        Command::NspCheck { matrix, s, p, c, samples } => {
            cmd_nsp(&config, out, &matrix, s, p, c, samples)
        }
        Command::RvflTrain { data, test_data, targets, hidden, regularizer, lambda } => {
            let mut cfg = config.clone();
            if let Some(t) = targets {
                cfg.rvfl.targets = t;
            }
            if let Some(h) = hidden {
                cfg.rvfl.hidden = h;
            }
            if let Some(r) = regularizer {
                cfg.rvfl.regularizer = r;
            }
            cmd_rvfl_train(&cfg, out, &data, test_data.as_deref(), lambda)
        }
        Command::RvflEval { model, data, targets } => {
            cmd_rvfl_eval(out, &model, &data, targets.unwrap_or(config.rvfl.targets))
        }
    }
}

/// `start:step:end` (inclusive) into integer ticks of `step`.
pub fn parse_range_f64(text: &str) -> AppResult<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || AppError::Usage(format!("expected start:step:end, found `{text}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    Ok((v[0], v[1], v[2]))
}

/// `start:step:end`, `a,b,c` or one value.
pub fn parse_sparsity(text: &str) -> AppResult<Vec<usize>> {
    let bad = || AppError::Usage(format!("bad sparsity list `{text}`"));
    let nums = |sep: char| -> AppResult<Vec<usize>> {
        text.split(sep).map(|p| p.trim().parse::<usize>().map_err(|_| bad())).collect()
    };
    let out = if text.contains(':') {
        let v = nums(':')?;
        if v.len() != 3 || v[1] == 0 || v[0] > v[2] {
            return Err(bad());
        }
        (v[0]..=v[2]).step_by(v[1]).collect()
    } else {
        nums(',')?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

/// `r=0.2,0.5`, `F=10` or bare values.
fn parse_params(text: &str, key: &str) -> AppResult<Vec<f64>> {
    let body = match text.split_once('=') {
        Some((k, v)) if k.trim().eq_ignore_ascii_case(key) => v,
        Some(_) => return Err(AppError::Usage(format!("expected `{key}=...`, found `{text}`"))),
        None => text,
    };
    let vals: Vec<f64> = body
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| AppError::Usage(format!("bad parameter list `{text}`")))?;
    if vals.is_empty() {
        return Err(AppError::Usage(format!("bad parameter list `{text}`")));
    }
    Ok(vals)
}

fn apply_grid(g: &mut GridSection, opts: &GridOpts, snr: Option<f64>) -> AppResult<()> {
    match (&opts.gaussian, &opts.dct) {
        (Some(_), Some(_)) => {
            return Err(AppError::Usage("give either --gaussian or --dct, not both".into()))
        }
        (Some(t), None) => {
            g.family = Family::Gaussian;
            g.params = parse_params(t, "r")?;
        }
        (None, Some(t)) => {
            g.family = Family::Dct;
            g.params = parse_params(t, "F")?;
        }
        (None, None) => {}
    }
    if let Some(s) = &opts.sparsity {
        g.sparsity = parse_sparsity(s)?;
    }
    if let Some(l) = opts.min_separation {
        g.min_separation = l;
    }
    if let Some(db) = snr {
        g.snr_db = db;
    }
    Ok(())
}

fn cmd_bench(config: &Config, out: &Path, grid: &GridSection, opts: &GridOpts, noisy: bool) -> AppResult<()> {
    let mut config = config.clone();
    if let Some(m) = opts.m {
        config.bench.m = m;
    }
    if let Some(n) = opts.n {
        config.bench.n = n;
    }
    let spec = config.experiment(grid, noisy)?;
    let dir = ensure_dir(out)?;
    let records = run_sweep(&spec, config.bench.threads)?;
    let summary = write_outputs(&dir, &records, noisy)?;
    write_text(&dir.join("config.toml"), &config.to_toml())?;

    for r in &summary.rates {
        println!(
            "cell {} s={} {:<14} success {:.3} model_failure {:.3} algorithm_failure {:.3} errors {}",
            r.cell, r.sparsity, r.method.tag(), r.success_rate, r.model_failure_rate, r.algorithm_failure_rate, r.errors
        );
    }
    for r in summary.ranks.iter().filter(|_| noisy) {
        println!("cell {} {:<14} mean_rank {:.3}", r.cell, r.method.tag(), r.mean_rank);
    }
    for w in summary.wins.iter().filter(|_| noisy) {
        println!("cell {} {:<14} wins {}", w.cell, w.method.tag(), w.wins);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_solve(config: &Config, out: &Path, path: &Path, start: StartChoice) -> AppResult<()> {
    let instance = parse_instance(&read_text(path)?)?;
    let solver = config.solver.to_core();
    let zeta = solver.zeta;
    let n = instance.n();
    let x0 = match start {
        StartChoice::Zero => Vector::zeros(n),
        StartChoice::L1 => solve_l1(&instance, zeta, &solver)?.x,
    };
    // the ratio is undefined at the origin; a zero start with b = 0 is optimal
    let trivial = instance.b().iter().all(|v| *v == 0.0);
    let result: Option<SolveResult> = if trivial { None } else { Some(admm_solve_from(&instance, &solver, &x0)?) };
    let x = result.as_ref().map_or_else(|| Vector::zeros(n), |r| r.x.clone());

    let dir = ensure_dir(out)?;
    let mut csv = String::from("index,x\n");
    for (i, v) in x.iter().enumerate() {
        csv.push_str(&format!("{i},{v}\n"));
    }
    write_text(&dir.join("solution.csv"), &csv)?;

    let objective = if x.iter().all(|v| *v == 0.0) { instance.data_fit(&x)? } else { objective_h(&instance, zeta, &x)? };
    let mut pairs = vec![
        ("zeta", zeta.to_string()),
        ("objective", objective.to_string()),
        ("residual_norm", instance.residual(&x)?.norm().to_string()),
        ("nonzeros", count_nonzero(x.as_slice(), 1e-8).to_string()),
    ];
    if let Some(r) = &result {
        pairs.push(("termination", format!("{:?}", r.termination)));
        pairs.push(("outer_iters", r.outer_iters.to_string()));
        pairs.push(("inner_iters", r.total_inner_iters.to_string()));
        pairs.push(("descent_violations", r.descent_violations.to_string()));
    } else {
        pairs.push(("termination", "TrivialZero".into()));
    }
    if let Some(truth) = instance.ground_truth() {
        if truth.norm() > 0.0 {
            pairs.push(("rel_error", ((&x - truth).norm() / truth.norm()).to_string()));
        }
    }
    let mut text = key_values(&pairs);
    if let Some(report) = result.as_ref().and_then(|r| descent_report(r, &instance, &solver).ok()) {
        text.push_str(&report.to_key_value());
    }
    write_text(&dir.join("diagnostics.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_toy(out: &Path, grid: &str) -> AppResult<()> {
    let (start, step, end) = parse_range_f64(grid)?;
    let scan = toy_example_scan(start, end, step).map_err(|e| AppError::Usage(e.to_string()))?;
    let dir = ensure_dir(out)?;
    let mut csv = String::from("sigma,ratio,l1,l1_minus_l2,nnz\n");
    for r in &scan.table {
        csv.push_str(&format!("{},{},{},{},{}\n", r.sigma, r.ratio, r.l1, r.l1_minus_l2, r.nnz));
    }
    write_text(&dir.join("toy_scan.csv"), &csv)?;
    let nnz_at = |s: f64| {
        scan.table
            .iter()
            .min_by(|a, b| (a.sigma - s).abs().total_cmp(&(b.sigma - s).abs()))
            .map_or(0, |r| r.nnz)
    };
    let text = key_values(&[
        ("best_sigma", scan.best_sigma.to_string()),
        ("best_sigma_l1", scan.best_sigma_l1.to_string()),
        ("best_sigma_l1_minus_l2", scan.best_sigma_l1_minus_l2.to_string()),
        ("nnz_at_best_sigma", nnz_at(scan.best_sigma).to_string()),
        ("grid_points", scan.table.len().to_string()),
    ]);
    write_text(&dir.join("toy.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_nsp(config: &Config, out: &Path, path: &Path, s: usize, p: f64, c: f64, samples: usize) -> AppResult<()> {
    let a = parse_matrix(&read_text(path)?)?;
    let cert = check_ensp(&a, s, p, c, samples, config.bench.seed).map_err(|e| AppError::Usage(e.to_string()))?;
    let mut pairs = vec![
        ("s", s.to_string()),
        ("p", p.to_string()),
        ("c", c.to_string()),
        ("holds", cert.holds.to_string()),
        ("sampled", cert.sampled.to_string()),
        ("kernel_dim", cert.kernel_dim.to_string()),
        ("worst_margin", cert.worst_margin.to_string()),
    ];
    if let Some((v, t)) = &cert.witness {
        pairs.push(("witness", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")));
        pairs.push(("witness_support", t.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")));
    }
    if let Some(note) = &cert.note {
        pairs.push(("note", note.clone()));
    }
    let text = key_values(&pairs);
    write_text(&ensure_dir(out)?.join("nsp.txt"), &text)?;
    print!("{text}");
    Ok(())
}

/// Cross-validation with every `(λ, fold)` pair scored in parallel.
pub fn cross_validate_parallel(
    template: &RvflModel,
    data: &Dataset,
    grid: &[f64],
    folds: usize,
    config: &Config,
) -> AppResult<CvReport> {
    let grid = normalize_grid(grid).map_err(|e| AppError::Usage(e.to_string()))?;
    if data.len() < folds.max(3) {
        return Err(AppError::Usage("cross-validation needs at least three samples".into()));
    }
    let reg = config.rvfl.regularizer()?;
    let solver = config.solver.to_core();
    let parts = kfold(data.len(), folds, config.rvfl.seed).map_err(|e| AppError::Usage(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.bench.threads)
        .build()
        .map_err(AppError::runtime)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|l| (0..parts.len()).map(move |f| (l, f))).collect();
    let flat: Vec<f64> = pool.install(|| {
        jobs.par_iter()
            .map(|&(l, f)| fold_score(template, data, &parts[f], grid[l], reg, &solver))
            .collect()
    });
    let scores: Vec<Vec<f64>> = flat.chunks(parts.len()).map(<[f64]>::to_vec).collect();
    Ok(select_lambda(&grid, &scores))
}

fn cmd_rvfl_train(config: &Config, out: &Path, data: &Path, test: Option<&Path>, lambda: Option<f64>) -> AppResult<()> {
    let r = &config.rvfl;
    let full = parse_dataset(&read_text(data)?, r.targets)?;
    let (train_set, test_set) = match test {
        Some(path) => (full, Some(parse_dataset(&read_text(path)?, r.targets)?)),
        None => {
            let (tr, te) = full.split(r.test_fraction, r.seed).map_err(|e| AppError::Usage(e.to_string()))?;
            (full.rows(&tr), Some(full.rows(&te)))
        }
    };
    let template = RvflModel::new(train_set.x.ncols(), r.hidden, r.activation()?, r.seed).with_standardize(r.standardize);
    let reg = r.regularizer()?;
    let dir = ensure_dir(out)?;
    let chosen = match lambda {
        Some(l) => l,
        None => {
            let cv = cross_validate_parallel(&template, &train_set, &r.grid(), r.folds, config)?;
            let mut csv = String::from("lambda,mean_validation_mse\n");
            for (l, s) in &cv.scores {
                csv.push_str(&format!("{l},{s}\n"));
            }
            write_text(&dir.join("cv.csv"), &csv)?;
            cv.best_lambda
        }
    };
    let mut model = template;
    train(&mut model, &train_set, chosen, reg, &config.solver.to_core())?;
    write_text(&dir.join("model.txt"), &export_model(&model))?;
    let mut pairs = vec![
        ("regularizer", reg.tag().to_string()),
        ("lambda", chosen.to_string()),
        ("nonzeros", model.nonzeros().to_string()),
        ("weights", model.beta.len().to_string()),
        ("train_mse", evaluate_mse(&model, &train_set.x, &train_set.y)?.to_string()),
    ];
    if let Some(t) = &test_set {
        pairs.push(("test_mse", evaluate_mse(&model, &t.x, &t.y)?.to_string()));
    }
    let text = key_values(&pairs);
    write_text(&dir.join("rvfl.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_rvfl_eval(out: &Path, model: &Path, data: &Path, targets: usize) -> AppResult<()> {
    let model = import_model(&read_text(model)?).map_err(|e| AppError::Usage(e.to_string()))?;
    let set = parse_dataset(&read_text(data)?, targets)?;
    let mse = evaluate_mse(&model, &set.x, &set.y).map_err(|e| AppError::Usage(e.to_string()))?;
    let text = key_values(&[("mse", mse.to_string()), ("rows", set.len().to_string())]);
    write_text(&ensure_dir(out)?.join("eval.txt"), &text)?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_lists() {
        assert_eq!(parse_sparsity("2:2:8").unwrap(), vec![2, 4, 6, 8]);
        assert_eq!(parse_sparsity("5,10").unwrap(), vec![5, 10]);
        assert_eq!(parse_sparsity("15").unwrap(), vec![15]);
        assert!(parse_sparsity("0").is_err());
        assert!(parse_sparsity("2:0:8").is_err());
    }

    #[test]
    fn family_params() {
        assert_eq!(parse_params("r=0.2,0.5", "r").unwrap(), vec![0.2, 0.5]);
        assert_eq!(parse_params("F=10", "F").unwrap(), vec![10.0]);
        assert_eq!(parse_params("10", "F").unwrap(), vec![10.0]);
        assert!(parse_params("q=1", "r").is_err());
    }

    #[test]
    fn float_ranges() {
        assert_eq!(parse_range_f64("-15:0.01:25").unwrap(), (-15.0, 0.01, 25.0));
        assert!(parse_range_f64("1:2").is_err());
    }
}
