//! TOML configuration. Every field has a default; a file only needs the
//! keys it changes, and command-line flags override both.

use serde::{Deserialize, Serialize};

use ratiosparse_core::bench::{ExperimentSpec, InitPolicy, Method};
use ratiosparse_core::gen::{Amplitude, MatrixKind};
use ratiosparse_core::rvfl::{log_grid, Activation, Regularizer};
use ratiosparse_core::{
    AdaptivePenalty, InnerStart, PenaltyScale, SolverConfig, UWeight, YSolver,
};

use crate::error::AppError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoScale {
    Gram,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyRule {
    Off,
    ResidualBalance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YSolverChoice {
    Auto,
    Smw,
    Cg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerStartChoice {
    Cold,
    Warm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UWeightChoice {
    Gamma,
    DeltaTilde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// `ζ` used by `solve`; benchmarks use their own defaults.
    pub zeta: f64,
    pub rho0: f64,
    pub rho_scale: RhoScale,
    pub gamma0: f64,
    pub eps_out: f64,
    pub eps_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub rel_change_tol: f64,
    /// `0` means `5 n`.
    pub max_total_iters: usize,
    pub adaptive_penalty: PenaltyRule,
    pub y_solver: YSolverChoice,
    pub cg_tol: f64,
    pub inner_start: InnerStartChoice,
    pub u_weight: UWeightChoice,
    pub x_step_safeguard: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = SolverConfig::default();
        Self {
            zeta: c.zeta,
            rho0: c.rho0,
            rho_scale: RhoScale::Gram,
            gamma0: c.gamma0,
            eps_out: c.eps_out,
            eps_inner: c.eps_inner,
            max_outer: c.max_outer,
            max_inner: c.max_inner,
            rel_change_tol: c.rel_change_tol,
            max_total_iters: 0,
            adaptive_penalty: PenaltyRule::Off,
            y_solver: YSolverChoice::Auto,
            cg_tol: 1e-10,
            inner_start: InnerStartChoice::Cold,
            u_weight: UWeightChoice::Gamma,
            x_step_safeguard: c.x_step_safeguard,
        }
    }
}

impl SolverSection {
    pub fn to_core(&self) -> SolverConfig {
        SolverConfig {
            zeta: self.zeta,
            rho0: self.rho0,
            rho_scale: match self.rho_scale {
                RhoScale::Gram => PenaltyScale::GramRelative,
                RhoScale::Absolute => PenaltyScale::Absolute,
            },
            gamma0: self.gamma0,
            eps_out: self.eps_out,
            eps_inner: self.eps_inner,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            rel_change_tol: self.rel_change_tol,
            max_total_iters: (self.max_total_iters > 0).then_some(self.max_total_iters),
            adaptive_penalty: match self.adaptive_penalty {
                PenaltyRule::Off => AdaptivePenalty::Off,
                PenaltyRule::ResidualBalance => AdaptivePenalty::residual_balance(),
            },
            y_solver: match self.y_solver {
                YSolverChoice::Auto => YSolver::Auto,
                YSolverChoice::Smw => YSolver::SmwFactorization,
                YSolverChoice::Cg => YSolver::ConjugateGradient {
                    tol: self.cg_tol,
                    max_iter: None,
                },
            },
            inner_start: match self.inner_start {
                InnerStartChoice::Cold => InnerStart::Cold,
                InnerStartChoice::Warm => InnerStart::Warm,
            },
            u_weight: match self.u_weight {
                UWeightChoice::Gamma => UWeight::Gamma,
                UWeightChoice::DeltaTilde => UWeight::DeltaTilde,
            },
            x_step_safeguard: self.x_step_safeguard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    Dct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitChoice {
    Protocol,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeChoice {
    Normal,
    Hdr,
}

/// Settings shared by both benchmark commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<String>,
    pub irls_p: f64,
    /// Overrides the per-family `ζ`; `0` keeps the defaults.
    pub zeta: f64,
    pub init: InitChoice,
    pub amplitude: AmplitudeChoice,
    /// Worker threads; `0` uses all cores.
    pub threads: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            m: 64,
            n: 512,
            trials: 20,
            seed: 0,
            methods: Method::all().iter().map(|m| m.tag().to_string()).collect(),
            irls_p: 0.5,
            zeta: 0.0,
            init: InitChoice::Protocol,
            amplitude: AmplitudeChoice::Normal,
            threads: 0,
        }
    }
}

/// One benchmark grid: a matrix family with its parameter values (`r` for
/// Gaussian, `F` for DCT) and a list of sparsities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub family: Family,
    pub params: Vec<f64>,
    pub sparsity: Vec<usize>,
    pub min_separation: usize,
    /// Measurement SNR in dB; ignored by `bench-noiseless`.
    pub snr_db: f64,
}

impl GridSection {
    fn noiseless() -> Self {
        Self {
            family: Family::Gaussian,
            params: vec![0.2],
            sparsity: (1..=15).map(|k| 2 * k).collect(),
            min_separation: 1,
            snr_db: f64::INFINITY,
        }
    }

    fn noisy() -> Self {
        Self {
            family: Family::Dct,
            params: vec![10.0],
            sparsity: vec![15],
            min_separation: 15,
            snr_db: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RvflSection {
    pub hidden: usize,
    pub activation: String,
    pub regularizer: String,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_points: usize,
    /// Explicit grid; replaces the logarithmic one when nonempty.
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    /// Number of trailing CSV columns holding targets.
    pub targets: usize,
    /// Held-out fraction when no separate test file is given.
    pub test_fraction: f64,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for RvflSection {
    fn default() -> Self {
        Self {
            hidden: 100,
            activation: "sigmoid".into(),
            regularizer: "half_over_two".into(),
            lambda_min: 1e-6,
            lambda_max: 10.0,
            lambda_points: 15,
            lambda_grid: Vec::new(),
            folds: 3,
            targets: 1,
            test_fraction: 0.3,
            seed: 0,
            standardize: true,
        }
    }
}

impl RvflSection {
    pub fn grid(&self) -> Vec<f64> {
        if self.lambda_grid.is_empty() {
            log_grid(self.lambda_min, self.lambda_max, self.lambda_points)
        } else {
            self.lambda_grid.clone()
        }
    }

    pub fn activation(&self) -> Result<Activation, AppError> {
        Activation::from_tag(&self.activation)
            .ok_or_else(|| AppError::Usage(format!("unknown activation `{}`", self.activation)))
    }

    pub fn regularizer(&self) -> Result<Regularizer, AppError> {
        Regularizer::from_tag(&self.regularizer)
            .ok_or_else(|| AppError::Usage(format!("unknown regularizer `{}`", self.regularizer)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub solver: SolverSection,
    pub bench: BenchSection,
    pub noiseless: GridSection,
    pub noisy: GridSection,
    pub rvfl: RvflSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            solver: SolverSection::default(),
            bench: BenchSection::default(),
            noiseless: GridSection::noiseless(),
            noisy: GridSection::noisy(),
            rvfl: RvflSection::default(),
        }
    }
}

impl Config {
    /// Parses a file and fills every missing key from [`Config::default`].
    pub fn from_toml(text: &str) -> Result<Self, AppError> {
        let invalid = |e: &dyn std::fmt::Display| AppError::Usage(format!("invalid config: {e}"));
        let file: toml::Table = text.parse().map_err(|e| invalid(&e))?;
        let mut merged = toml::Table::try_from(Config::default()).map_err(|e| invalid(&e))?;
        merge(&mut merged, file);
        merged.try_into().map_err(|e| invalid(&e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn methods(&self) -> Result<Vec<Method>, AppError> {
        self.bench
            .methods
            .iter()
            .map(|t| {
                let m = Method::from_tag(t.trim())
                    .ok_or_else(|| AppError::Usage(format!("unknown method `{t}`")))?;
                Ok(match m {
                    Method::IrlsLp { .. } => Method::IrlsLp { p: self.bench.irls_p },
                    other => other,
                })
            })
            .collect()
    }

    /// Builds the sweep of one grid; `noisy` selects the SNR and `ζ`
    /// defaults.
    pub fn experiment(&self, grid: &GridSection, noisy: bool) -> Result<ExperimentSpec, AppError> {
        let kinds = grid
            .params
            .iter()
            .map(|&v| match grid.family {
                Family::Gaussian => MatrixKind::Gaussian { r: v },
                Family::Dct => MatrixKind::OversampledDct { f: v },
            })
            .collect();
        let b = &self.bench;
        let spec = ExperimentSpec {
            kinds,
            sparsities: grid.sparsity.clone(),
            m: b.m,
            n: b.n,
            min_separation: grid.min_separation,
            noise_db: noisy.then_some(grid.snr_db),
            trials: b.trials,
            master_seed: b.seed,
            methods: self.methods()?,
            zeta: (b.zeta > 0.0).then_some(b.zeta),
            solver: self.solver.to_core(),
            init: match b.init {
                InitChoice::Protocol => InitPolicy::Protocol,
                InitChoice::Zero => InitPolicy::Zero,
            },
            amplitude: match b.amplitude {
                AmplitudeChoice::Normal => Amplitude::StandardNormal,
                AmplitudeChoice::Hdr => Amplitude::HighDynamicRange,
            },
        };
        spec.validate().map_err(|e| AppError::Usage(format!("invalid experiment: {e}")))?;
        Ok(spec)
    }
}

fn merge(base: &mut toml::Table, file: toml::Table) {
    for (key, value) in file {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(f)) => merge(b, f),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.solver.to_core(), SolverConfig::default());
    }

    #[test]
    fn partial_files_keep_defaults() {
        let c = Config::from_toml("[bench]\ntrials = 3\n[noisy]\nfamily = \"gaussian\"\nparams = [0.2]\n").unwrap();
        assert_eq!(c.bench.trials, 3);
        assert_eq!(c.noisy.family, Family::Gaussian);
        assert_eq!(c.noisy.snr_db, 50.0);
        assert_eq!(c.bench.n, 512);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_toml("[bench]\ntrails = 3\n").is_err());
        assert!(Config::from_toml("[solvers]\n").is_err());
    }

    #[test]
    fn experiment_from_defaults() {
        let c = Config::default();
        let spec = c.experiment(&c.noisy, true).unwrap();
        assert_eq!(spec.noise_db, Some(50.0));
        assert_eq!(spec.methods.len(), 4);
        assert_eq!(spec.kinds, vec![MatrixKind::OversampledDct { f: 10.0 }]);
        let spec = c.experiment(&c.noiseless, false).unwrap();
        assert_eq!(spec.noise_db, None);
        assert_eq!(spec.cell_count(), 15);
    }
}
