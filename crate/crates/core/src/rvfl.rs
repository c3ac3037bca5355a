//! Random vector functional link regression with sparse output weights.
//!
//! Hidden weights and biases are drawn once from `U(−1, 1)` and stay fixed;
//! only the output weights `β` over `H = [a(XW + 1bᵀ) | X]` are trained.
//! Training minimizes `‖Hβ − y‖² + λR(β)` per target column, which every
//! regularizer solves as `½‖Hβ − y‖² + (λ/2)R(β)`, so `ζ = λ/2`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Cholesky;
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::baselines::{solve_irls_lp, solve_l1, solve_l1_minus_l2_dca, IrlsOptions};
use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::gen::{derive_seed, rng_from_seed};
use crate::problem::{ProblemInstance, SolverConfig};
use crate::solver::admm_solve_from;
use crate::{Matrix, Vector};

/// Magnitudes at or below this count as zero weights.
pub const NONZERO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(&self, t: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-t).exp()),
            Activation::Relu => t.max(0.0),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "sigmoid" => Some(Activation::Sigmoid),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// `R(β) = ‖β‖₂²`, solved in closed form.
    Ridge,
    L1,
    /// DCA started from the `ℓ₁` solution.
    L1MinusL2,
    IrlsLp { p: f64 },
    /// The ratio `‖β‖½^½ / ‖β‖₂^½`, nested ADMM started from the `ℓ₁` solution.
    HalfOverTwo,
}

impl Regularizer {
    pub fn tag(&self) -> &'static str {
        match self {
            Regularizer::Ridge => "ridge",
            Regularizer::L1 => "l1",
            Regularizer::L1MinusL2 => "l1_minus_l2",
            Regularizer::IrlsLp { .. } => "irls_lp",
            Regularizer::HalfOverTwo => "half_over_two",
        }
    }

    /// Parses a tag; `irls_lp` uses `p = 1/2`.
    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "ridge" => Some(Regularizer::Ridge),
            "l1" => Some(Regularizer::L1),
            "l1_minus_l2" => Some(Regularizer::L1MinusL2),
            "irls_lp" => Some(Regularizer::IrlsLp { p: 0.5 }),
            "half_over_two" => Some(Regularizer::HalfOverTwo),
            _ => None,
        }
    }
}

/// Inputs and targets, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        ensure_len("target rows", x.nrows(), y.nrows())?;
        ensure_finite(x.as_slice())?;
        ensure_finite(y.as_slice())?;
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
        }
    }

    /// Seeded shuffle split; `test_fraction` of the rows (at least one) go
    /// to the test part.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::param("test_fraction", "must lie in (0, 1)"));
        }
        let n = self.len();
        if n < 2 {
            return Err(Error::param("dataset", "needs at least two rows to split"));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_from_seed(seed));
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        let test = idx.split_off(n - n_test);
        Ok((idx, test))
    }
}

/// Seeded `k`-fold partition of `0..n`; every index lands in exactly one
/// validation fold.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::param("folds", "need at least two folds"));
    }
    if n < k {
        return Err(Error::param("dataset", "fewer samples than folds"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    Ok((0..k)
        .map(|f| {
            let mut train = Vec::with_capacity(n);
            let mut valid = Vec::with_capacity(n / k + 1);
            for (pos, &i) in idx.iter().enumerate() {
                if pos % k == f {
                    valid.push(i);
                } else {
                    train.push(i);
                }
            }
            (train, valid)
        })
        .collect())
}

/// Random hidden layer, input standardization and output weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RvflModel {
    /// `d × L` hidden weights.
    pub w: Matrix,
    pub b_hidden: Vector,
    pub activation: Activation,
    /// `(L + d) × m` output weights; empty until trained.
    pub beta: Matrix,
    pub lambda: f64,
    pub seed: u64,
    /// Standardize inputs and center targets with train-split statistics.
    pub standardize: bool,
    pub x_mean: Vector,
    pub x_scale: Vector,
    pub y_mean: Vector,
}

impl RvflModel {
    /// Draws `W` and `b` from `U(−1, 1)`.
    pub fn new(d: usize, hidden: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = rng_from_seed(derive_seed(seed, &[0x7276_666c]));
        let w = Matrix::from_fn(d, hidden, |_, _| rng.random_range(-1.0..1.0));
        let b_hidden = Vector::from_fn(hidden, |_, _| rng.random_range(-1.0..1.0));
        Self {
            w,
            b_hidden,
            activation,
            beta: Matrix::zeros(0, 0),
            lambda: 0.0,
            seed,
            standardize: true,
            x_mean: Vector::zeros(d),
            x_scale: Vector::from_element(d, 1.0),
            y_mean: Vector::zeros(0),
        }
    }

    pub fn with_standardize(mut self, on: bool) -> Self {
        self.standardize = on;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w.ncols()
    }

    /// `[a(XW + 1bᵀ) | X]` on inputs as given.
    pub fn build_features(&self, x: &Matrix) -> Result<Matrix> {
        ensure_len("feature columns", self.input_dim(), x.ncols())?;
        let l = self.hidden();
        let d = self.input_dim();
        let pre = x * &self.w;
        Ok(Matrix::from_fn(x.nrows(), l + d, |i, j| {
            if j < l {
                self.activation.apply(pre[(i, j)] + self.b_hidden[j])
            } else {
                x[(i, j - l)]
            }
        }))
    }

    /// Features of raw inputs after the stored standardization.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        ensure_len("feature columns", self.input_dim(), x.ncols())?;
        let z = Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.x_mean[j]) / self.x_scale[j]
        });
        self.build_features(&z)
    }

    /// Stores column means and standard deviations of `x` and target
    /// means of `y`; identity scaling when standardization is off.
    pub fn fit_scaling(&mut self, x: &Matrix, y: &Matrix) {
        let d = x.ncols();
        if !self.standardize || x.nrows() == 0 {
            self.x_mean = Vector::zeros(d);
            self.x_scale = Vector::from_element(d, 1.0);
            self.y_mean = Vector::zeros(y.ncols());
            return;
        }
        let n = x.nrows() as f64;
        self.x_mean = Vector::from_fn(d, |j, _| x.column(j).sum() / n);
        self.x_scale = Vector::from_fn(d, |j, _| {
            let mu = self.x_mean[j];
            let var = x.column(j).iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        });
        self.y_mean = Vector::from_fn(y.ncols(), |j, _| y.column(j).sum() / n);
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if self.beta.nrows() == 0 {
            return Err(Error::Degenerate("model is not trained".into()));
        }
        let mut out = self.features(x)? * &self.beta;
        for mut row in out.row_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += self.y_mean[j];
            }
        }
        Ok(out)
    }

    /// Count of `|βᵢ| > 1e-6` over all output columns.
    pub fn nonzeros(&self) -> usize {
        self.beta.iter().filter(|v| v.abs() > NONZERO_TOL).count()
    }
}

/// Solver settings for RVFL training; iteration caps are raised to at least
/// `2000` because the feature matrices are small.
pub fn training_config(base: &SolverConfig, lambda: f64) -> SolverConfig {
    SolverConfig {
        zeta: lambda / 2.0,
        max_total_iters: Some(base.max_total_iters.unwrap_or(0).max(2000)),
        ..base.clone()
    }
}

/// `(HᵀH + λI)⁻¹Hᵀy`, falling back to a minimum-norm solve at `λ = 0`.
pub fn ridge_solve(h: &Matrix, y: &Vector, lambda: f64) -> Result<Vector> {
    let mut g = h.tr_mul(h);
    for i in 0..g.nrows() {
        g[(i, i)] += lambda;
    }
    let rhs = h.tr_mul(y);
    if let Some(chol) = Cholesky::new(g) {
        return Ok(chol.solve(&rhs));
    }
    h.clone()
        .svd(true, true)
        .solve(y, 1e-12)
        .map_err(|_| Error::Factorization("ridge least squares"))
}

/// Output weights for one target column of the (scaled) problem.
pub fn solve_column(
    h: &Matrix,
    y: &Vector,
    lambda: f64,
    regularizer: Regularizer,
    base: &SolverConfig,
) -> Result<Vector> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", "must be nonnegative and finite"));
    }
    if regularizer == Regularizer::Ridge {
        return ridge_solve(h, y, lambda);
    }
    if lambda == 0.0 {
        return ridge_solve(h, y, 0.0);
    }
    let config = training_config(base, lambda);
    let zeta = config.zeta;
    let instance = ProblemInstance::new(h.clone(), y.clone())?.with_noise_db(Some(f64::INFINITY));
    let x = match regularizer {
        Regularizer::Ridge => unreachable!("handled above"),
        Regularizer::L1 => solve_l1(&instance, zeta, &config)?.x,
        Regularizer::L1MinusL2 => {
            let start = solve_l1(&instance, zeta, &config)?.x;
            solve_l1_minus_l2_dca(&instance, zeta, &config, &start)?.x
        }
        Regularizer::IrlsLp { p } => {
            let options = IrlsOptions {
                p,
                sparsity: None,
                equality_constrained: false,
            };
            solve_irls_lp(&instance, options, &config)?.x
        }
        Regularizer::HalfOverTwo => {
            // the ratio is undefined at zero, where the ℓ₁ path may stop
            let start = solve_l1(&instance, zeta, &config)?.x;
            if start.iter().all(|v| *v == 0.0) {
                start
            } else {
                admm_solve_from(&instance, &config, &start)?.x
            }
        }
    };
    Ok(x)
}

/// Fits scaling on `data`, builds `H` and solves every target column.
pub fn train(
    model: &mut RvflModel,
    data: &Dataset,
    lambda: f64,
    regularizer: Regularizer,
    config: &SolverConfig,
) -> Result<()> {
    ensure_len("feature columns", model.input_dim(), data.x.ncols())?;
    if data.is_empty() {
        return Err(Error::param("dataset", "training set is empty"));
    }
    model.fit_scaling(&data.x, &data.y);
    let h = model.features(&data.x)?;
    let mut beta = Matrix::zeros(h.ncols(), data.y.ncols());
    for j in 0..data.y.ncols() {
        let y = Vector::from_fn(data.len(), |i, _| data.y[(i, j)] - model.y_mean[j]);
        let col = solve_column(&h, &y, lambda, regularizer, config)?;
        beta.set_column(j, &col);
    }
    model.beta = beta;
    model.lambda = lambda;
    Ok(())
}

/// Mean over rows and output columns of the squared prediction error.
pub fn evaluate_mse(model: &RvflModel, x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::param("dataset", "test set is empty"));
    }
    ensure_len("target rows", x.nrows(), y.nrows())?;
    let pred = model.predict(x)?;
    ensure_len("target columns", pred.ncols(), y.ncols())?;
    Ok((pred - y).norm_squared() / (y.nrows() * y.ncols()) as f64)
}

/// The default `λ` grid: 15 points, logarithmic from `1e-6` to `10`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-6, 10.0, 15)
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64))
        .collect()
}

/// Sorted, deduplicated copy of a `λ` grid.
pub fn normalize_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::param("lambda_grid", "must be nonempty"));
    }
    if grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::param("lambda_grid", "entries must be nonnegative and finite"));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub best_lambda: f64,
    /// `(λ, mean validation MSE)` in ascending `λ`; failed fits score `+∞`.
    pub scores: Vec<(f64, f64)>,
}

/// Validation MSE of one `(λ, fold)` pair.
pub fn fold_score(
    template: &RvflModel,
    data: &Dataset,
    fold: &(Vec<usize>, Vec<usize>),
    lambda: f64,
    regularizer: Regularizer,
    config: &SolverConfig,
) -> f64 {
    let mut model = template.clone();
    let train_part = data.rows(&fold.0);
    let valid = data.rows(&fold.1);
    match train(&mut model, &train_part, lambda, regularizer, config) {
        Ok(()) => evaluate_mse(&model, &valid.x, &valid.y).unwrap_or(f64::INFINITY),
        Err(_) => f64::INFINITY,
    }
}

/// Picks the `λ` with the smallest mean validation MSE given per-`λ` fold
/// scores; ties go to the smaller `λ`.
pub fn select_lambda(grid: &[f64], fold_scores: &[Vec<f64>]) -> CvReport {
    let scores: Vec<(f64, f64)> = grid
        .iter()
        .zip(fold_scores)
        .map(|(&l, s)| (l, s.iter().sum::<f64>() / s.len() as f64))
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.1 < scores[best].1 {
            best = i;
        }
    }
    CvReport {
        best_lambda: scores[best].0,
        scores,
    }
}

/// Sequential `k`-fold cross-validation over `lambda_grid`.
pub fn cross_validate(
    template: &RvflModel,
    data: &Dataset,
    lambda_grid: &[f64],
    folds: usize,
    regularizer: Regularizer,
    config: &SolverConfig,
    seed: u64,
) -> Result<CvReport> {
    let grid = normalize_grid(lambda_grid)?;
    if data.len() < folds.max(3) {
        return Err(Error::param("dataset", "cross-validation needs at least three samples"));
    }
    let parts = kfold(data.len(), folds, seed)?;
    let scores: Vec<Vec<f64>> = grid
        .iter()
        .map(|&l| {
            parts
                .iter()
                .map(|f| fold_score(template, data, f, l, regularizer, config))
                .collect()
        })
        .collect();
    Ok(select_lambda(&grid, &scores))
}

/// A dataset whose targets are a sparse combination of the RVFL features of
/// a reference model plus Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub samples: usize,
    pub inputs: usize,
    pub hidden: usize,
    /// Nonzero entries of the planted `β₀`.
    pub active: usize,
    /// Noise standard deviation relative to the clean target's.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            samples: 200,
            inputs: 10,
            hidden: 50,
            active: 6,
            noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub data: Dataset,
    /// The reference model, whose hidden layer matches `RvflModel::new`
    /// with the same seed.
    pub model: RvflModel,
    pub beta: Vector,
}

/// Inputs `N(0, 1)`, `β₀` with `active` entries of magnitude in `[1, 2]`
/// and random sign, `y = Hβ₀ + noise`. Features use raw inputs.
pub fn planted_dataset(spec: &PlantedSpec) -> Result<Planted> {
    let p = spec.hidden + spec.inputs;
    if spec.active == 0 || spec.active > p {
        return Err(Error::param("active", "must lie in 1..=L+d"));
    }
    let model = RvflModel::new(spec.inputs, spec.hidden, Activation::Sigmoid, spec.seed).with_standardize(false);
    let mut rng = rng_from_seed(derive_seed(spec.seed, &[1]));
    let normal = rand_distr::StandardNormal;
    let x = Matrix::from_fn(spec.samples, spec.inputs, |_, _| rng.sample::<f64, _>(normal));
    let mut idx: Vec<usize> = (0..p).collect();
    idx.shuffle(&mut rng);
    let mut beta = Vector::zeros(p);
    for &i in &idx[..spec.active] {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        beta[i] = sign * rng.random_range(1.0..2.0);
    }
    let clean = model.build_features(&x)? * &beta;
    let mean = clean.sum() / clean.len() as f64;
    let sd = (clean.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / clean.len() as f64).sqrt();
    let y = Vector::from_fn(spec.samples, |i, _| {
        clean[i] + spec.noise * sd * rng.sample::<f64, _>(normal)
    });
    let y = Matrix::from_column_slice(spec.samples, 1, y.as_slice());
    Ok(Planted {
        data: Dataset::new(x, y)?,
        model,
        beta,
    })
}

/// Version header of the text model dump.
pub const MODEL_HEADER: &str = "ratiosparse-rvfl v1";

/// Plain-text dump: header, shapes, activation, seed, `λ`, scaling, `W`,
/// `b` and `β`, one row per line.
pub fn export_model(model: &RvflModel) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    let row = |s: &mut String, v: &mut dyn Iterator<Item = f64>| {
        let parts: Vec<String> = v.map(|x| alloc::format!("{x:e}")).collect();
        let _ = writeln!(s, "{}", parts.join(" "));
    };
    let _ = writeln!(s, "{MODEL_HEADER}");
    let _ = writeln!(
        s,
        "d {} hidden {} outputs {} activation {} seed {} lambda {:e} standardize {}",
        model.input_dim(),
        model.hidden(),
        model.beta.ncols(),
        model.activation.tag(),
        model.seed,
        model.lambda,
        model.standardize
    );
    let _ = writeln!(s, "x_mean");
    row(&mut s, &mut model.x_mean.iter().copied());
    let _ = writeln!(s, "x_scale");
    row(&mut s, &mut model.x_scale.iter().copied());
    let _ = writeln!(s, "y_mean");
    row(&mut s, &mut model.y_mean.iter().copied());
    let _ = writeln!(s, "W");
    for r in model.w.row_iter() {
        row(&mut s, &mut r.iter().copied());
    }
    let _ = writeln!(s, "b_hidden");
    row(&mut s, &mut model.b_hidden.iter().copied());
    let _ = writeln!(s, "beta");
    for r in model.beta.row_iter() {
        row(&mut s, &mut r.iter().copied());
    }
    s
}

/// Parses the output of [`export_model`].
pub fn import_model(text: &str) -> Result<RvflModel> {
    let bad = |why: &str| Error::Degenerate(alloc::format!("model file: {why}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MODEL_HEADER) {
        return Err(bad("missing version header"));
    }
    let meta: Vec<&str> = lines.next().ok_or_else(|| bad("missing shape line"))?.split_whitespace().collect();
    let field = |key: &str| -> Result<&str> {
        meta.iter()
            .position(|t| *t == key)
            .and_then(|i| meta.get(i + 1).copied())
            .ok_or_else(|| bad("incomplete shape line"))
    };
    let num = |key: &str| -> Result<usize> { field(key)?.parse().map_err(|_| bad("bad shape")) };
    let (d, l, m) = (num("d")?, num("hidden")?, num("outputs")?);
    let activation = Activation::from_tag(field("activation")?).ok_or_else(|| bad("unknown activation"))?;
    let seed: u64 = field("seed")?.parse().map_err(|_| bad("bad seed"))?;
    let lambda: f64 = field("lambda")?.parse().map_err(|_| bad("bad lambda"))?;
    let standardize: bool = field("standardize")?.parse().map_err(|_| bad("bad flag"))?;

    let mut section = |name: &str, rows: usize, cols: usize| -> Result<Matrix> {
        if lines.next().map(str::trim) != Some(name) {
            return Err(bad("unexpected section"));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<core::result::Result<_, _>>()
                .map_err(|_| bad("non-numeric entry"))?;
            if vals.len() != cols {
                return Err(bad("row length mismatch"));
            }
            data.extend(vals);
        }
        Ok(Matrix::from_row_slice(rows, cols, &data))
    };
    let x_mean = section("x_mean", 1, d)?.row(0).transpose();
    let x_scale = section("x_scale", 1, d)?.row(0).transpose();
    let y_mean = section("y_mean", 1, m)?.row(0).transpose();
    let w = section("W", d, l)?;
    let b_hidden = section("b_hidden", 1, l)?.row(0).transpose();
    let beta = section("beta", l + d, m)?;
    Ok(RvflModel {
        w,
        b_hidden,
        activation,
        beta,
        lambda,
        seed,
        standardize,
        x_mean,
        x_scale,
        y_mean,
    })
}
