//! Experiment harness: trials, metrics, failure classes and aggregation into
//! success rates, mean ranks and winning counts.
//!
//! The harness is sequential and clock-agnostic; the `ratiosparse` crate
//! runs [`run_trial`] on a thread pool and supplies wall-clock timing through
//! [`Clock`].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::baselines::{
    solve_irls_lp, solve_l1, solve_l1_minus_l2_dca, IrlsOptions,
};
use crate::error::{Error, Result};
use crate::gen::{derive_seed, generate, Amplitude, GeneratorSpec, MatrixKind};
use crate::objective::objective_h;
use crate::problem::{ProblemInstance, SolveResult, SolverConfig};
use crate::solver::admm_solve_from;
use crate::Vector;

/// A recovery method taking part in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    L1,
    L1MinusL2,
    IrlsLp { p: f64 },
    /// The `ℓ½/ℓ₂` model solved by the nested ADMM.
    HalfOverTwo,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::L1 => "l1",
            Method::L1MinusL2 => "l1-l2",
            Method::IrlsLp { .. } => "irls-lp",
            Method::HalfOverTwo => "half-over-two",
        }
    }

    /// Parses a tag; `irls-lp` uses `p = 1/2`.
    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "l1" => Some(Method::L1),
            "l1-l2" => Some(Method::L1MinusL2),
            "irls-lp" => Some(Method::IrlsLp { p: 0.5 }),
            "half-over-two" => Some(Method::HalfOverTwo),
            _ => None,
        }
    }

    /// The four methods in initialization-chain order.
    pub fn all() -> Vec<Method> {
        vec![
            Method::L1,
            Method::L1MinusL2,
            Method::IrlsLp { p: 0.5 },
            Method::HalfOverTwo,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    None,
    /// `ℋ(x̂) ≤ ℋ(x)`: the model prefers the wrong point.
    ModelFailure,
    /// `ℋ(x̂) > ℋ(x)`: the solver stopped short of the truth.
    AlgorithmFailure,
}

impl FailureClass {
    pub fn tag(&self) -> &'static str {
        match self {
            FailureClass::None => "none",
            FailureClass::ModelFailure => "model_failure",
            FailureClass::AlgorithmFailure => "algorithm_failure",
        }
    }
}

/// `‖x − x̂‖₂ / ‖x‖₂`.
pub fn rel_error(x_true: &Vector, x_hat: &Vector) -> Result<f64> {
    crate::error::ensure_len("x_hat", x_true.len(), x_hat.len())?;
    let norm = x_true.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("ground truth is zero".into()));
    }
    Ok((x_true - x_hat).norm() / norm)
}

/// `10 log₁₀(‖x̂ − x‖²/‖x‖²)` in dB; lower is better. Exact recovery gives
/// `−∞`.
pub fn snr_metric(x_true: &Vector, x_hat: &Vector) -> Result<f64> {
    let r = rel_error(x_true, x_hat)?;
    Ok(if r == 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * r.log10()
    })
}

/// Success threshold on the relative error.
pub const SUCCESS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub rel_error: f64,
    pub success: bool,
    pub failure_class: FailureClass,
    pub snr_db_metric: f64,
}

/// Success when the relative error is at most `1e-3`; otherwise compares
/// `ℋ(x̂)` with `ℋ(x)` at `zeta`. Ties count as model failures.
pub fn classify_trial(instance: &ProblemInstance, x_hat: &Vector, zeta: f64) -> Result<Classification> {
    let truth = instance.ground_truth().ok_or(Error::MissingGroundTruth)?;
    let rel = rel_error(truth, x_hat)?;
    let snr = snr_metric(truth, x_hat)?;
    let success = rel <= SUCCESS_TOL;
    let failure_class = if success {
        FailureClass::None
    } else if objective_h(instance, zeta, x_hat)? > objective_h(instance, zeta, truth)? {
        FailureClass::AlgorithmFailure
    } else {
        FailureClass::ModelFailure
    };
    Ok(Classification {
        rel_error: rel,
        success,
        failure_class,
        snr_db_metric: snr,
    })
}

/// Which solution initializes the methods that accept a start point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitPolicy {
    /// ℓ₁ from zero, ℓ₁−ℓ₂ from ℓ₁, IRLS from the pseudoinverse, the ratio
    /// model from ℓ₁−ℓ₂. For noisy Gaussian sweeps ℓ₁−ℓ₂ and the ratio
    /// model start from IRLS instead.
    #[default]
    Protocol,
    /// Every start point is zero.
    Zero,
}

/// Everything needed to reproduce a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kinds: Vec<MatrixKind>,
    pub sparsities: Vec<usize>,
    pub m: usize,
    pub n: usize,
    pub min_separation: usize,
    pub noise_db: Option<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    /// Overrides the per-family default `ζ`.
    pub zeta: Option<f64>,
    pub solver: SolverConfig,
    pub init: InitPolicy,
    pub amplitude: Amplitude,
}

impl ExperimentSpec {
    /// The noiseless protocol on a `64 × 512` matrix.
    pub fn noiseless(kinds: Vec<MatrixKind>, sparsities: Vec<usize>, trials: usize, seed: u64) -> Self {
        Self {
            kinds,
            sparsities,
            m: 64,
            n: 512,
            min_separation: 1,
            noise_db: None,
            trials,
            master_seed: seed,
            methods: Method::all(),
            zeta: None,
            solver: SolverConfig::default(),
            init: InitPolicy::Protocol,
            amplitude: Amplitude::StandardNormal,
        }
    }

    /// The noisy protocol: separation 15, measurement SNR `snr_db`.
    pub fn noisy(kinds: Vec<MatrixKind>, sparsity: usize, snr_db: f64, trials: usize, seed: u64) -> Self {
        Self {
            min_separation: 15,
            noise_db: Some(snr_db),
            ..Self::noiseless(kinds, vec![sparsity], trials, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() || self.sparsities.is_empty() || self.methods.is_empty() {
            return Err(Error::param("spec", "kinds, sparsities and methods must be nonempty"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be positive"));
        }
        if let Some(z) = self.zeta {
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::param("zeta", "must be positive"));
            }
        }
        for m in &self.methods {
            if let Method::IrlsLp { p } = m {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::param("p", "must lie in (0, 1)"));
                }
            }
        }
        self.solver.validate()?;
        for cell in 0..self.cell_count() {
            self.generator(cell, 0).validate()?;
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.kinds.len() * self.sparsities.len()
    }

    /// `(kind, sparsity)` of a cell; cells enumerate sparsities fastest.
    pub fn cell(&self, index: usize) -> (MatrixKind, usize) {
        let s = self.sparsities.len();
        (self.kinds[index / s], self.sparsities[index % s])
    }

    /// Benchmark `ζ`: `1e-5` noiseless, `8e-4` noisy DCT, `8e-3` noisy
    /// Gaussian, unless overridden.
    pub fn zeta_for(&self, kind: MatrixKind) -> f64 {
        if let Some(z) = self.zeta {
            return z;
        }
        match (self.noise_db, kind) {
            (None, _) => 1e-5,
            (Some(_), MatrixKind::OversampledDct { .. }) => 8e-4,
            (Some(_), MatrixKind::Gaussian { .. }) => 8e-3,
        }
    }

    /// Seed of the instance shared by all methods of one trial.
    pub fn trial_seed(&self, cell: usize, trial: usize) -> u64 {
        derive_seed(self.master_seed, &[cell as u64, trial as u64])
    }

    pub fn generator(&self, cell: usize, trial: usize) -> GeneratorSpec {
        let (kind, sparsity) = self.cell(cell);
        GeneratorSpec {
            kind,
            m: self.m,
            n: self.n,
            sparsity,
            min_separation: self.min_separation,
            noise_db: self.noise_db,
            seed: self.trial_seed(cell, trial),
            amplitude: self.amplitude,
        }
    }

    /// All `(cell, trial)` pairs in output order.
    pub fn jobs(&self) -> Vec<(usize, usize)> {
        (0..self.cell_count())
            .flat_map(|c| (0..self.trials).map(move |t| (c, t)))
            .collect()
    }
}

/// Source of wall-clock time in seconds.
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// A clock that always reads zero; timing fields become `0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    pub generator: GeneratorSpec,
    pub method: Method,
    pub x_hat: Vector,
    pub rel_error: f64,
    pub success: bool,
    pub failure_class: FailureClass,
    pub snr_db_metric: f64,
    pub wall_time: f64,
    pub iterations: usize,
    /// Set when the method failed; the metric fields are then `NaN`/`+∞`.
    pub error: Option<String>,
}

fn errored(cell: usize, trial: usize, generator: GeneratorSpec, method: Method, n: usize, msg: String) -> TrialRecord {
    TrialRecord {
        cell,
        trial,
        generator,
        method,
        x_hat: Vector::zeros(n),
        rel_error: f64::NAN,
        success: false,
        failure_class: FailureClass::None,
        snr_db_metric: f64::INFINITY,
        wall_time: 0.0,
        iterations: 0,
        error: Some(msg),
    }
}

/// Runs every method of `spec` on the instance of `(cell, trial)`.
///
/// Initializers required by the chain are computed even when their method
/// is not listed. Errors are recorded per method; a generator error yields
/// one errored record per method.
pub fn run_trial(spec: &ExperimentSpec, cell: usize, trial: usize, clock: &dyn Clock) -> Vec<TrialRecord> {
    let generator = spec.generator(cell, trial);
    let instance = match generate(&generator) {
        Ok(inst) => inst,
        Err(e) => {
            return spec
                .methods
                .iter()
                .map(|&m| errored(cell, trial, generator.clone(), m, spec.n, e.to_string()))
                .collect()
        }
    };
    let (kind, sparsity) = spec.cell(cell);
    let zeta = spec.zeta_for(kind);
    let config = SolverConfig {
        zeta,
        ..spec.solver.clone()
    };
    let noisy_gaussian = spec.noise_db.is_some() && matches!(kind, MatrixKind::Gaussian { .. });
    let n = instance.n();

    let mut cache: BTreeMap<&'static str, (Result<SolveResult>, f64)> = BTreeMap::new();
    let timed = |f: &dyn Fn() -> Result<SolveResult>| {
        let t0 = clock.now_seconds();
        let r = f();
        (r, clock.now_seconds() - t0)
    };
    let irls_p = spec
        .methods
        .iter()
        .find_map(|m| match m {
            Method::IrlsLp { p } => Some(*p),
            _ => None,
        })
        .unwrap_or(0.5);

    let zero = Vector::zeros(n);
    let protocol = spec.init == InitPolicy::Protocol;
    let needs = |m: &str| -> bool {
        let listed = |t: &str| spec.methods.iter().any(|x| x.tag() == t);
        match m {
            "l1" => listed("l1") || (protocol && !noisy_gaussian && (listed("l1-l2") || listed("half-over-two"))),
            "irls-lp" => listed("irls-lp") || (protocol && noisy_gaussian && (listed("l1-l2") || listed("half-over-two"))),
            "l1-l2" => listed("l1-l2") || (protocol && !noisy_gaussian && listed("half-over-two")),
            _ => listed(m),
        }
    };

    if needs("l1") {
        let r = timed(&|| solve_l1(&instance, zeta, &config));
        cache.insert("l1", r);
    }
    if needs("irls-lp") {
        let opts = IrlsOptions::for_instance(&instance, irls_p, Some(sparsity));
        let r = timed(&|| solve_irls_lp(&instance, opts, &config));
        cache.insert("irls-lp", r);
    }
    let start_of = |cache: &BTreeMap<&'static str, (Result<SolveResult>, f64)>, key: &str| -> Result<Vector> {
        if !protocol {
            return Ok(zero.clone());
        }
        match cache.get(key) {
            Some((Ok(r), _)) => Ok(r.x.clone()),
            Some((Err(e), _)) => Err(Error::Degenerate(alloc::format!("initializer {key} failed: {e}"))),
            None => Ok(zero.clone()),
        }
    };
    if needs("l1-l2") {
        let key = if noisy_gaussian { "irls-lp" } else { "l1" };
        let r = match start_of(&cache, key) {
            Ok(x0) => timed(&|| solve_l1_minus_l2_dca(&instance, zeta, &config, &x0)),
            Err(e) => (Err(e), 0.0),
        };
        cache.insert("l1-l2", r);
    }
    if needs("half-over-two") {
        let key = if noisy_gaussian { "irls-lp" } else { "l1-l2" };
        let r = match start_of(&cache, key) {
            Ok(x0) => timed(&|| admm_solve_from(&instance, &config, &x0)),
            Err(e) => (Err(e), 0.0),
        };
        cache.insert("half-over-two", r);
    }

    spec.methods
        .iter()
        .map(|&method| {
            let Some((result, wall)) = cache.get(method.tag()) else {
                return errored(cell, trial, generator.clone(), method, n, "method was not run".into());
            };
            let outcome = result
                .as_ref()
                .map_err(|e| e.clone())
                .and_then(|r| classify_trial(&instance, &r.x, zeta).map(|c| (r, c)));
            match outcome {
                Ok((r, c)) => TrialRecord {
                    cell,
                    trial,
                    generator: generator.clone(),
                    method,
                    x_hat: r.x.clone(),
                    rel_error: c.rel_error,
                    success: c.success,
                    failure_class: c.failure_class,
                    snr_db_metric: c.snr_db_metric,
                    wall_time: *wall,
                    iterations: r.outer_iters,
                    error: None,
                },
                Err(e) => errored(cell, trial, generator.clone(), method, n, e.to_string()),
            }
        })
        .collect()
}

/// Sequential sweep over all cells and trials.
pub fn run_sweep(spec: &ExperimentSpec, clock: &dyn Clock) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    Ok(spec
        .jobs()
        .into_iter()
        .flat_map(|(c, t)| run_trial(spec, c, t, clock))
        .collect())
}

/// Success and failure rates of one method in one cell. Rates are over
/// non-erroring trials.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub cell: usize,
    pub kind: MatrixKind,
    pub sparsity: usize,
    pub method: Method,
    pub trials: usize,
    pub errors: usize,
    pub success_rate: f64,
    pub model_failure_rate: f64,
    pub algorithm_failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub cell: usize,
    pub method: Method,
    /// Mean of per-trial ranks by ascending SNR metric (ties share the
    /// average rank).
    pub mean_rank: f64,
    pub ranked_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinRow {
    pub cell: usize,
    pub method: Method,
    /// Trials in which this competitor beats the ratio model; for the ratio
    /// model itself, its total number of pairwise wins.
    pub wins: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub rates: Vec<RateRow>,
    pub ranks: Vec<RankRow>,
    pub wins: Vec<WinRow>,
}

/// Average ranks of `values` in ascending order, ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn method_key(m: &Method) -> (u8, u64) {
    match m {
        Method::L1 => (0, 0),
        Method::L1MinusL2 => (1, 0),
        Method::IrlsLp { p } => (2, p.to_bits()),
        Method::HalfOverTwo => (3, 0),
    }
}

/// Folds records into rate, rank and winning-count tables. The result does
/// not depend on the order of `records`.
pub fn aggregate(records: &[TrialRecord]) -> Summary {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.cell, r.trial, method_key(&r.method)));

    let mut methods: Vec<Method> = Vec::new();
    for r in &sorted {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods.sort_by_key(method_key);
    let cells: Vec<usize> = {
        let mut c: Vec<usize> = sorted.iter().map(|r| r.cell).collect();
        c.dedup();
        c
    };

    let mut summary = Summary::default();
    for &cell in &cells {
        let in_cell: Vec<&&TrialRecord> = sorted.iter().filter(|r| r.cell == cell).collect();
        for &method in &methods {
            let rs: Vec<&&&TrialRecord> = in_cell.iter().filter(|r| r.method == method).collect();
            if rs.is_empty() {
                continue;
            }
            let errors = rs.iter().filter(|r| r.error.is_some()).count();
            let ok = rs.len() - errors;
            let rate = |pred: &dyn Fn(&TrialRecord) -> bool| {
                if ok == 0 {
                    0.0
                } else {
                    rs.iter().filter(|r| r.error.is_none() && pred(r)).count() as f64 / ok as f64
                }
            };
            summary.rates.push(RateRow {
                cell,
                kind: rs[0].generator.kind,
                sparsity: rs[0].generator.sparsity,
                method,
                trials: rs.len(),
                errors,
                success_rate: rate(&|r| r.success),
                model_failure_rate: rate(&|r| r.failure_class == FailureClass::ModelFailure),
                algorithm_failure_rate: rate(&|r| r.failure_class == FailureClass::AlgorithmFailure),
            });
        }

        // per-trial ranks over the methods present in every trial record set
        let mut trials: BTreeMap<usize, Vec<(Method, f64)>> = BTreeMap::new();
        for r in &in_cell {
            trials.entry(r.trial).or_default().push((r.method, r.snr_db_metric));
        }
        let mut rank_sum: BTreeMap<(u8, u64), (Method, f64, usize)> = BTreeMap::new();
        let mut win_count: BTreeMap<(u8, u64), (Method, usize)> = BTreeMap::new();
        for m in &methods {
            win_count.insert(method_key(m), (*m, 0));
        }
        for entries in trials.values() {
            let values: Vec<f64> = entries.iter().map(|e| e.1).collect();
            let ranks = average_ranks(&values);
            for ((m, _), rank) in entries.iter().zip(ranks) {
                let e = rank_sum.entry(method_key(m)).or_insert((*m, 0.0, 0));
                e.1 += rank;
                e.2 += 1;
            }
            if let Some(&(_, ours)) = entries.iter().find(|e| e.0 == Method::HalfOverTwo) {
                for &(m, v) in entries.iter().filter(|e| e.0 != Method::HalfOverTwo) {
                    if v < ours {
                        win_count.get_mut(&method_key(&m)).expect("listed").1 += 1;
                    } else if ours < v {
                        win_count.get_mut(&method_key(&Method::HalfOverTwo)).expect("listed").1 += 1;
                    }
                }
            }
        }
        for (_, (method, sum, count)) in rank_sum {
            summary.ranks.push(RankRow {
                cell,
                method,
                mean_rank: sum / count as f64,
                ranked_trials: count,
            });
        }
        if methods.contains(&Method::HalfOverTwo) {
            for (_, (method, wins)) in win_count {
                summary.wins.push(WinRow { cell, method, wins });
            }
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;
    use proptest::prelude::*;

    fn vec_of(v: &[f64]) -> Vector {
        Vector::from_vec(v.to_vec())
    }

    #[test]
    fn rel_error_examples() {
        let x = vec_of(&[1.0, -2.0, 0.5]);
        assert_eq!(rel_error(&x, &x).unwrap(), 0.0);
        assert_eq!(rel_error(&x, &Vector::zeros(3)).unwrap(), 1.0);
        assert!((rel_error(&x, &(&x * 1.001)).unwrap() - 0.001).abs() < 1e-15);
        assert!(rel_error(&Vector::zeros(3), &x).is_err());
    }

    #[test]
    fn snr_examples() {
        let x = vec_of(&[3.0, 4.0]);
        assert!((snr_metric(&x, &(&x * 0.9)).unwrap() + 20.0).abs() < 1e-12);
        assert_eq!(snr_metric(&x, &x).unwrap(), f64::NEG_INFINITY);
        let r = 10f64.powf(-45.0 / 20.0);
        let y = &x * (1.0 - r);
        assert!((snr_metric(&x, &y).unwrap() + 45.0).abs() < 1e-9);
    }

    fn toy_like() -> ProblemInstance {
        let a = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let x = vec_of(&[1.0, 0.0, 0.0]);
        let b = &a * &x;
        ProblemInstance::new(a, b).unwrap().with_ground_truth(x).unwrap()
    }

    #[test]
    fn classification_examples() {
        let inst = toy_like();
        let truth = inst.ground_truth().unwrap().clone();
        let c = classify_trial(&inst, &truth, 1e-5).unwrap();
        assert!(c.success);
        assert_eq!(c.failure_class, FailureClass::None);

        // far from the truth and worse data fit: algorithm failure
        let bad = vec_of(&[0.0, 3.0, 0.0]);
        let c = classify_trial(&inst, &bad, 1e-5).unwrap();
        assert_eq!(c.failure_class, FailureClass::AlgorithmFailure);

        // feasible and sparser under a huge ζ: a spread-out truth loses
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = vec_of(&[0.5, 0.5]);
        let inst = ProblemInstance::new(a, vec_of(&[1.0])).unwrap().with_ground_truth(x).unwrap();
        let c = classify_trial(&inst, &vec_of(&[1.0, 0.0]), 1.0).unwrap();
        assert_eq!(c.failure_class, FailureClass::ModelFailure);

        let plain = ProblemInstance::new(Matrix::identity(2, 2), vec_of(&[1.0, 1.0])).unwrap();
        assert!(matches!(
            classify_trial(&plain, &vec_of(&[1.0, 1.0]), 1e-5),
            Err(Error::MissingGroundTruth)
        ));
    }

    #[test]
    fn average_rank_examples() {
        assert_eq!(average_ranks(&[3.0]), vec![1.0]);
        assert_eq!(average_ranks(&[2.0, 1.0, 3.0]), vec![2.0, 1.0, 3.0]);
        assert_eq!(average_ranks(&[1.0, 1.0, 0.0]), vec![2.5, 2.5, 1.0]);
        assert_eq!(
            average_ranks(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            vec![1.5, 1.5]
        );
    }

    fn record(cell: usize, trial: usize, method: Method, snr: f64, class: FailureClass) -> TrialRecord {
        TrialRecord {
            cell,
            trial,
            generator: GeneratorSpec {
                kind: MatrixKind::Gaussian { r: 0.2 },
                m: 4,
                n: 8,
                sparsity: 2,
                min_separation: 1,
                noise_db: None,
                seed: 0,
                amplitude: Amplitude::StandardNormal,
            },
            method,
            x_hat: Vector::zeros(1),
            rel_error: 0.0,
            success: class == FailureClass::None,
            failure_class: class,
            snr_db_metric: snr,
            wall_time: 0.0,
            iterations: 1,
            error: None,
        }
    }

    #[test]
    fn single_method_rank_is_one() {
        let recs: Vec<TrialRecord> = (0..5)
            .map(|t| record(0, t, Method::L1, -(t as f64), FailureClass::None))
            .collect();
        let s = aggregate(&recs);
        assert_eq!(s.ranks.len(), 1);
        assert_eq!(s.ranks[0].mean_rank, 1.0);
        assert!(s.wins.is_empty());
    }

    #[test]
    fn winning_counts() {
        let mut recs = Vec::new();
        for t in 0..50 {
            let ours = -40.0;
            let l1 = if t < 30 { -50.0 } else { -30.0 };
            recs.push(record(0, t, Method::HalfOverTwo, ours, FailureClass::None));
            recs.push(record(0, t, Method::L1, l1, FailureClass::None));
        }
        let s = aggregate(&recs);
        let win = |m: Method| s.wins.iter().find(|w| w.method == m).unwrap().wins;
        assert_eq!(win(Method::L1), 30);
        assert_eq!(win(Method::HalfOverTwo), 20);
    }

    #[test]
    fn sweep_shares_instances_and_seeds() {
        let spec = ExperimentSpec {
            m: 10,
            n: 30,
            trials: 3,
            methods: vec![Method::L1],
            ..ExperimentSpec::noiseless(vec![MatrixKind::Gaussian { r: 0.2 }], vec![2], 3, 7)
        };
        let recs = run_sweep(&spec, &NoClock).unwrap();
        assert_eq!(recs.len(), 3);
        let seeds: Vec<u64> = recs.iter().map(|r| r.generator.seed).collect();
        assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2] && seeds[0] != seeds[2]);

        let both = ExperimentSpec {
            methods: vec![Method::L1, Method::HalfOverTwo],
            trials: 1,
            ..spec.clone()
        };
        let recs = run_sweep(&both, &NoClock).unwrap();
        assert_eq!(recs[0].generator, recs[1].generator);
        assert_eq!(
            generate(&recs[0].generator).unwrap(),
            generate(&recs[1].generator).unwrap()
        );
    }

    #[test]
    fn generator_errors_are_recorded() {
        let spec = ExperimentSpec {
            m: 8,
            n: 20,
            methods: vec![Method::L1, Method::HalfOverTwo],
            ..ExperimentSpec::noisy(vec![MatrixKind::Gaussian { r: 0.2 }], 2, 40.0, 1, 3)
        };
        // s·L = 30 > n = 20
        assert!(spec.validate().is_err());
        let recs = run_trial(&spec, 0, 0, &NoClock);
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.error.is_some() && r.snr_db_metric == f64::INFINITY));
        let s = aggregate(&recs);
        assert!(s.rates.iter().all(|r| r.errors == 1 && r.success_rate == 0.0));
    }

    #[test]
    fn zeta_defaults() {
        let g = MatrixKind::Gaussian { r: 0.2 };
        let d = MatrixKind::OversampledDct { f: 10.0 };
        let quiet = ExperimentSpec::noiseless(vec![g], vec![5], 1, 0);
        assert_eq!(quiet.zeta_for(g), 1e-5);
        let noisy = ExperimentSpec::noisy(vec![g, d], 10, 50.0, 1, 0);
        assert_eq!(noisy.zeta_for(d), 8e-4);
        assert_eq!(noisy.zeta_for(g), 8e-3);
        let fixed = ExperimentSpec { zeta: Some(0.1), ..noisy };
        assert_eq!(fixed.zeta_for(d), 0.1);
    }

    fn arb_class() -> impl Strategy<Value = FailureClass> {
        prop_oneof![
            Just(FailureClass::None),
            Just(FailureClass::ModelFailure),
            Just(FailureClass::AlgorithmFailure),
        ]
    }

    fn arb_records() -> impl Strategy<Value = Vec<TrialRecord>> {
        prop::collection::vec((0usize..3, arb_class(), -60.0..0.0f64, 0u8..4), 1..12).prop_map(
            |rows| {
                let methods = Method::all();
                let mut out = Vec::new();
                for (t, (cell, class, snr, tie)) in rows.into_iter().enumerate() {
                    for (i, m) in methods.iter().enumerate() {
                        let v = if (i as u8) < tie { snr } else { snr + i as f64 };
                        let class = if i == 0 { class } else { FailureClass::None };
                        out.push(record(cell, t, *m, v, class));
                    }
                }
                out
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rates_partition(recs in arb_records()) {
            let s = aggregate(&recs);
            for r in &s.rates {
                let total = r.success_rate + r.model_failure_rate + r.algorithm_failure_rate;
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn aggregation_is_order_independent(recs in arb_records(), seed in any::<u64>()) {
            let mut shuffled = recs.clone();
            let mut rng = crate::gen::rng_from_seed(seed);
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut rng);
            prop_assert_eq!(aggregate(&recs), aggregate(&shuffled));
        }

        #[test]
        fn ranks_sum_identity(values in prop::collection::vec(prop_oneof![Just(0.0), -5.0..5.0f64], 1..9)) {
            let k = values.len() as f64;
            let total: f64 = average_ranks(&values).iter().sum();
            prop_assert!((total - k * (k + 1.0) / 2.0).abs() < 1e-9);
        }
    }
}
