//! Monte-Carlo harnesses: recovery phase grids, stability sweeps, frequency
//! checks for the random-matrix bounds and the mask-model equivalence test.
//!
//! Every trial seed is `seed::trial_seed(base, cell, trial)`, so results do
//! not depend on how trials are scheduled across the worker pool.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Deserialize;

use crate::certificates::{
    rip_constant_exact, sampling_spectral_ratio, spectral_check_rows, stability_constant, tangent_deviation,
    tangent_sup_ratio, RowCheck,
};
use crate::cs_solver::{lambda_gaussian, lambda_general, solve_cs, CsSolveOptions, Status};
use crate::error::{invalid, Error, Result};
use crate::io::{format_f64, report_to_string, table_to_string, ReportRow};
use crate::linalg::{self, PowerIteration};
use crate::mask::Mask;
use crate::mc_solver::{lambda_mc, solve_mc, McSolveOptions};
use crate::models::{
    bernoulli_mask, gen_cs_instance, gen_ensemble, gen_mc_instance, gen_mc_lowrank, noise_of_norm, random_sign_matrix,
    random_support, sample_auxiliary_masks, sample_direct_masks, CorruptionMagnitudes, EnsembleKind, MaskModel,
    McParams,
};
use crate::proxops::TangentProjector;
use crate::seed;

/// `λ` as a formula name (`gaussian`, `general`, `mc`) or an explicit value.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum LambdaRule {
    Value(f64),
    Named(String),
}

impl LambdaRule {
    pub fn parse(text: &str) -> Result<Self> {
        let rule = match text.parse::<f64>() {
            Ok(v) => LambdaRule::Value(v),
            Err(_) => LambdaRule::Named(text.to_string()),
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LambdaRule::Value(v) if !(*v > 0.0) => invalid(format!("lambda must be positive, got {v}")),
            LambdaRule::Named(name) if !matches!(name.as_str(), "gaussian" | "general" | "mc") => {
                invalid(format!("unknown lambda rule {name:?} (expected gaussian, general, mc or a number)"))
            }
            _ => Ok(()),
        }
    }

    pub fn cs_value(&self, m: usize, n: usize) -> Result<f64> {
        match self {
            LambdaRule::Value(v) => Ok(*v),
            LambdaRule::Named(name) => match name.as_str() {
                "gaussian" => lambda_gaussian(m, n),
                "general" => lambda_general(n),
                other => invalid(format!("lambda rule {other:?} does not apply to sparse recovery")),
            },
        }
    }

    pub fn mc_value(&self, rho: f64, n: usize) -> Result<f64> {
        match self {
            LambdaRule::Value(v) => Ok(*v),
            LambdaRule::Named(name) if name == "mc" => lambda_mc(rho, n),
            LambdaRule::Named(other) => invalid(format!("lambda rule {other:?} does not apply to matrix completion")),
        }
    }
}

fn default_trials() -> usize {
    20
}
fn default_success_tol() -> f64 {
    1e-4
}
fn default_jobs() -> usize {
    1
}
fn default_ensemble() -> EnsembleKind {
    EnsembleKind::GaussianIid
}
fn default_one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsSolverSection {
    #[serde(default = "CsSolverSection::default_penalty")]
    pub penalty: f64,
    #[serde(default = "CsSolverSection::default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "CsSolverSection::default_tol")]
    pub tol: f64,
}

impl CsSolverSection {
    fn default_penalty() -> f64 {
        1.0
    }
    fn default_max_iters() -> usize {
        50_000
    }
    fn default_tol() -> f64 {
        1e-8
    }

    pub fn options(&self, lambda: f64, epsilon: f64) -> CsSolveOptions {
        let mut o = CsSolveOptions::new(lambda).with_epsilon(epsilon);
        o.penalty = self.penalty;
        o.max_iters = self.max_iters;
        o.tol_primal = self.tol;
        o.tol_dual = self.tol;
        o
    }
}

impl Default for CsSolverSection {
    fn default() -> Self {
        CsSolverSection {
            penalty: Self::default_penalty(),
            max_iters: Self::default_max_iters(),
            tol: Self::default_tol(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSolverSection {
    #[serde(default = "McSolverSection::default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "McSolverSection::default_tol")]
    pub tol: f64,
}

impl McSolverSection {
    fn default_max_iters() -> usize {
        10_000
    }
    fn default_tol() -> f64 {
        1e-7
    }

    pub fn options(&self, lambda: f64) -> McSolveOptions {
        let mut o = McSolveOptions::new(lambda);
        o.max_iters = self.max_iters;
        o.tol = self.tol;
        o
    }
}

impl Default for McSolverSection {
    fn default() -> Self {
        McSolverSection {
            max_iters: Self::default_max_iters(),
            tol: Self::default_tol(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsModel {
    #[serde(default = "default_ensemble")]
    pub ensemble: EnsembleKind,
    pub m: usize,
    pub n: usize,
}

/// Cells are the Cartesian product of the two sparsity lists.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsGrid {
    pub k_x: Vec<usize>,
    pub k_f: Vec<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseCsConfig {
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_success_tol")]
    pub success_tol: f64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Record wall-clock runtimes (makes the report non-reproducible).
    #[serde(default)]
    pub timing: bool,
    pub output: Option<PathBuf>,
    pub model: CsModel,
    pub grid: CsGrid,
    /// Defaults to `gaussian` for Gaussian ensembles and `general` otherwise.
    pub lambda: Option<LambdaRule>,
    #[serde(default)]
    pub solver: CsSolverSection,
}

impl PhaseCsConfig {
    pub fn lambda_rule(&self) -> LambdaRule {
        self.lambda.clone().unwrap_or_else(|| {
            LambdaRule::Named(if self.model.ensemble == EnsembleKind::GaussianIid { "gaussian" } else { "general" }.into())
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McModel {
    pub n: usize,
    #[serde(default)]
    pub magnitudes: CorruptionMagnitudes,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McGrid {
    pub r: Vec<usize>,
    pub rho: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseMcConfig {
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_success_tol")]
    pub success_tol: f64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub timing: bool,
    pub output: Option<PathBuf>,
    pub model: McModel,
    pub grid: McGrid,
    /// Defaults to `mc`, evaluated at each cell's `ρ`.
    pub lambda: Option<LambdaRule>,
    #[serde(default)]
    pub solver: McSolverSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityModel {
    #[serde(default = "default_ensemble")]
    pub ensemble: EnsembleKind,
    pub m: usize,
    pub n: usize,
    pub k_x: usize,
    pub k_f: usize,
}

/// Support sizes for the exact restricted isometry constant.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RipSection {
    pub s1: usize,
    pub s2: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub model: StabilityModel,
    pub epsilons: Vec<f64>,
    pub lambda: Option<LambdaRule>,
    #[serde(default)]
    pub solver: CsSolverSection,
    pub rip: Option<RipSection>,
}

/// One frequency check; `trials` overrides the experiment default.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LemmaCheck {
    /// `‖B‖ ≤ √m + √n + t` for standard normal `B`.
    GaussianNorm { m: usize, n: usize, t: f64, trials: Option<usize> },
    /// Gaussian `A` (variance `1/m`) is a `δ`-isometry on a random `s`-support.
    GaussianRip { m: usize, n: usize, s: usize, delta: f64, trials: Option<usize> },
    /// `‖A_{:,T}ᵀA_{:,T} − I‖ ≤ bound`.
    RowGram {
        #[serde(default = "LemmaCheck::default_rows")]
        ensemble: EnsembleKind,
        m: usize,
        n: usize,
        s: usize,
        #[serde(default = "LemmaCheck::half")]
        bound: f64,
        trials: Option<usize>,
    },
    /// `‖A_{:,Tᶜ}ᵀA_{:,T}v‖_∞ ≤ constant·‖v‖₂/√s`.
    RowCrossVec {
        #[serde(default = "LemmaCheck::default_rows")]
        ensemble: EnsembleKind,
        m: usize,
        n: usize,
        s: usize,
        #[serde(default = "LemmaCheck::twentieth")]
        constant: f64,
        trials: Option<usize>,
    },
    /// `max_{i∈Tᶜ} ‖A_{:,T}ᵀA_{:,i}‖ ≤ bound`.
    RowCrossCol {
        #[serde(default = "LemmaCheck::default_rows")]
        ensemble: EnsembleKind,
        m: usize,
        n: usize,
        s: usize,
        #[serde(default = "LemmaCheck::one")]
        bound: f64,
        trials: Option<usize>,
    },
    /// `‖P_T − ρ₀⁻¹P_T P_{Ω₀} P_T‖ ≤ eps`.
    TangentContraction {
        n: usize,
        r: usize,
        rho0: f64,
        #[serde(default = "LemmaCheck::half")]
        eps: f64,
        trials: Option<usize>,
    },
    /// `‖(I − ρ₀⁻¹P_T P_{Ω₀})UV*‖_∞ ≤ eps‖UV*‖_∞`.
    TangentSup {
        n: usize,
        r: usize,
        rho0: f64,
        #[serde(default = "LemmaCheck::half")]
        eps: f64,
        trials: Option<usize>,
    },
    /// `‖(ρ₀I − P_{Ω₀})Z‖ ≤ constant·√(nρ₀ ln n)‖Z‖_∞` for a random sign `Z`.
    SamplingSpectral {
        n: usize,
        rho0: f64,
        #[serde(default = "LemmaCheck::one")]
        constant: f64,
        trials: Option<usize>,
    },
}

impl LemmaCheck {
    fn default_rows() -> EnsembleKind {
        EnsembleKind::RademacherRows
    }
    fn half() -> f64 {
        0.5
    }
    fn twentieth() -> f64 {
        0.05
    }
    fn one() -> f64 {
        1.0
    }

    pub fn id(&self) -> &'static str {
        match self {
            LemmaCheck::GaussianNorm { .. } => "gaussian-norm",
            LemmaCheck::GaussianRip { .. } => "gaussian-rip",
            LemmaCheck::RowGram { .. } => "row-gram",
            LemmaCheck::RowCrossVec { .. } => "row-cross-vec",
            LemmaCheck::RowCrossCol { .. } => "row-cross-col",
            LemmaCheck::TangentContraction { .. } => "tangent-contraction",
            LemmaCheck::TangentSup { .. } => "tangent-sup",
            LemmaCheck::SamplingSpectral { .. } => "sampling-spectral",
        }
    }

    fn trials_override(&self) -> Option<usize> {
        match self {
            LemmaCheck::GaussianNorm { trials, .. }
            | LemmaCheck::GaussianRip { trials, .. }
            | LemmaCheck::RowGram { trials, .. }
            | LemmaCheck::RowCrossVec { trials, .. }
            | LemmaCheck::RowCrossCol { trials, .. }
            | LemmaCheck::TangentContraction { trials, .. }
            | LemmaCheck::TangentSup { trials, .. }
            | LemmaCheck::SamplingSpectral { trials, .. } => *trials,
        }
    }

    pub fn params(&self) -> String {
        match self {
            LemmaCheck::GaussianNorm { m, n, t, .. } => format!("m={m};n={n};t={t}"),
            LemmaCheck::GaussianRip { m, n, s, delta, .. } => format!("m={m};n={n};s={s};delta={delta}"),
            LemmaCheck::RowGram { ensemble, m, n, s, bound, .. } => {
                format!("ensemble={};m={m};n={n};s={s};bound={bound}", ensemble_name(*ensemble))
            }
            LemmaCheck::RowCrossVec { ensemble, m, n, s, constant, .. } => {
                format!("ensemble={};m={m};n={n};s={s};constant={constant}", ensemble_name(*ensemble))
            }
            LemmaCheck::RowCrossCol { ensemble, m, n, s, bound, .. } => {
                format!("ensemble={};m={m};n={n};s={s};bound={bound}", ensemble_name(*ensemble))
            }
            LemmaCheck::TangentContraction { n, r, rho0, eps, .. } | LemmaCheck::TangentSup { n, r, rho0, eps, .. } => {
                format!("n={n};r={r};rho0={rho0};eps={eps}")
            }
            LemmaCheck::SamplingSpectral { n, rho0, constant, .. } => format!("n={n};rho0={rho0};constant={constant}"),
        }
    }

    fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if p > 0.0 && p <= 1.0 {
                Ok(())
            } else {
                invalid(format!("{}: {name} must lie in (0, 1], got {p}", self.id()))
            }
        };
        match self {
            LemmaCheck::RowGram { s, n, .. }
            | LemmaCheck::RowCrossVec { s, n, .. }
            | LemmaCheck::RowCrossCol { s, n, .. }
            | LemmaCheck::GaussianRip { s, n, .. }
                if s > n =>
            {
                invalid(format!("{}: s = {s} exceeds n = {n}", self.id()))
            }
            LemmaCheck::RowCrossVec { s: 0, .. } => invalid("row-cross-vec: s must be at least 1"),
            LemmaCheck::TangentContraction { rho0, r, n, .. } | LemmaCheck::TangentSup { rho0, r, n, .. } => {
                if r > n {
                    return invalid(format!("{}: r = {r} exceeds n = {n}", self.id()));
                }
                prob("rho0", *rho0)
            }
            LemmaCheck::SamplingSpectral { rho0, n, .. } => {
                if *n < 2 {
                    return invalid("sampling-spectral: n must be at least 2");
                }
                prob("rho0", *rho0)
            }
            _ => Ok(()),
        }
    }

    /// `(value, bound)` for one seeded draw.
    fn draw(&self, seed: u64) -> Result<(f64, f64)> {
        match self {
            LemmaCheck::GaussianNorm { m, n, t, .. } => {
                let b = linalg::gaussian_matrix(*m, *n, seed);
                Ok((linalg::spectral_norm(&b)?, crate::certificates::gaussian_norm_bound(*m, *n, *t)))
            }
            LemmaCheck::GaussianRip { m, n, s, delta, .. } => {
                let a = gen_ensemble(*m, *n, EnsembleKind::GaussianIid, seed)?.data;
                let t = random_support(*n, *s, seed::stream(seed, 1))?;
                Ok((spectral_check_rows(&a, &t, &RowCheck::Gram)?, *delta))
            }
            LemmaCheck::RowGram { ensemble, m, n, s, bound, .. } => {
                let a = gen_ensemble(*m, *n, *ensemble, seed)?.data;
                let t = random_support(*n, *s, seed::stream(seed, 1))?;
                Ok((spectral_check_rows(&a, &t, &RowCheck::Gram)?, *bound))
            }
            LemmaCheck::RowCrossVec { ensemble, m, n, s, constant, .. } => {
                let a = gen_ensemble(*m, *n, *ensemble, seed)?.data;
                let t = random_support(*n, *s, seed::stream(seed, 1))?;
                let v: DVector<f64> = linalg::gaussian_matrix(*s, 1, seed::stream(seed, 2)).column(0).into_owned();
                Ok((spectral_check_rows(&a, &t, &RowCheck::CrossVec(v))?, *constant))
            }
            LemmaCheck::RowCrossCol { ensemble, m, n, s, bound, .. } => {
                let a = gen_ensemble(*m, *n, *ensemble, seed)?.data;
                let t = random_support(*n, *s, seed::stream(seed, 1))?;
                Ok((spectral_check_rows(&a, &t, &RowCheck::CrossCol)?, *bound))
            }
            LemmaCheck::TangentContraction { n, r, rho0, eps, .. } => {
                let lr = gen_mc_lowrank(*n, *r, seed)?;
                let tp = TangentProjector::new(&lr.u, &lr.v)?;
                let omega0 = bernoulli_mask(*n, *rho0, seed::stream(seed, 1))?;
                let dev = tangent_deviation(&tp, &omega0, *rho0, PowerIteration::default(), seed::stream(seed, 2));
                Ok((dev, *eps))
            }
            LemmaCheck::TangentSup { n, r, rho0, eps, .. } => {
                let lr = gen_mc_lowrank(*n, *r, seed)?;
                let tp = TangentProjector::new(&lr.u, &lr.v)?;
                let omega0 = bernoulli_mask(*n, *rho0, seed::stream(seed, 1))?;
                let z = &lr.u * lr.v.transpose();
                Ok((tangent_sup_ratio(&tp, &omega0, *rho0, &z), *eps))
            }
            LemmaCheck::SamplingSpectral { n, rho0, constant, .. } => {
                let omega0 = bernoulli_mask(*n, *rho0, seed::stream(seed, 1))?;
                let z = random_sign_matrix(*n, seed);
                Ok((sampling_spectral_ratio(&omega0, *rho0, &z)?, *constant))
            }
        }
    }
}

fn ensemble_name(kind: EnsembleKind) -> &'static str {
    match kind {
        EnsembleKind::GaussianIid => "gaussian-iid",
        EnsembleKind::RademacherRows => "rademacher-rows",
        EnsembleKind::SubsampledDct => "subsampled-dct",
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaConfig {
    pub seed: u64,
    #[serde(default = "LemmaConfig::default_trials")]
    pub trials: usize,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    pub output: Option<PathBuf>,
    pub lemma: Vec<LemmaCheck>,
}

impl LemmaConfig {
    fn default_trials() -> usize {
        200
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEquivConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub n: usize,
    pub rho: f64,
    pub s: f64,
    /// Draws per sampler in one comparison.
    #[serde(default = "default_one")]
    pub trials: usize,
    /// Independent comparisons.
    #[serde(default = "default_one")]
    pub repetitions: usize,
}

/// A parsed experiment configuration file.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    PhaseCs(PhaseCsConfig),
    PhaseMc(PhaseMcConfig),
    Stability(StabilityConfig),
    Lemmas(LemmaConfig),
    ModelEquiv(ModelEquivConfig),
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn require_nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return cfg_err(format!("{name} must not be empty"));
    }
    Ok(())
}

fn require_common(trials: usize, tol: f64, jobs: usize) -> Result<()> {
    if trials == 0 {
        return cfg_err("trials must be at least 1");
    }
    if !(tol > 0.0) {
        return cfg_err("success_tol must be positive");
    }
    if jobs == 0 {
        return cfg_err("jobs must be at least 1");
    }
    Ok(())
}

fn lambda_checked(rule: &Option<LambdaRule>) -> Result<()> {
    match rule {
        Some(r) => r.validate().map_err(|e| Error::Config(format!("lambda: {e}"))),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::PhaseCs(_) => "phase-cs",
            ExperimentConfig::PhaseMc(_) => "phase-mc",
            ExperimentConfig::Stability(_) => "stability",
            ExperimentConfig::Lemmas(_) => "lemmas",
            ExperimentConfig::ModelEquiv(_) => "model-equiv",
        }
    }

    pub fn output(&self) -> Option<&PathBuf> {
        match self {
            ExperimentConfig::PhaseCs(c) => c.output.as_ref(),
            ExperimentConfig::PhaseMc(c) => c.output.as_ref(),
            ExperimentConfig::Stability(c) => c.output.as_ref(),
            ExperimentConfig::Lemmas(c) => c.output.as_ref(),
            ExperimentConfig::ModelEquiv(c) => c.output.as_ref(),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::PhaseCs(c) => c.seed = seed,
            ExperimentConfig::PhaseMc(c) => c.seed = seed,
            ExperimentConfig::Stability(c) => c.seed = seed,
            ExperimentConfig::Lemmas(c) => c.seed = seed,
            ExperimentConfig::ModelEquiv(c) => c.seed = seed,
        }
    }

    pub fn set_jobs(&mut self, jobs: usize) {
        match self {
            ExperimentConfig::PhaseCs(c) => c.jobs = jobs,
            ExperimentConfig::PhaseMc(c) => c.jobs = jobs,
            ExperimentConfig::Lemmas(c) => c.jobs = jobs,
            ExperimentConfig::Stability(_) | ExperimentConfig::ModelEquiv(_) => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::PhaseCs(c) => {
                require_common(c.trials, c.success_tol, c.jobs)?;
                require_nonempty("grid.k_x", &c.grid.k_x)?;
                require_nonempty("grid.k_f", &c.grid.k_f)?;
                if c.model.m == 0 || c.model.m > c.model.n {
                    return cfg_err("model needs 1 <= m <= n");
                }
                lambda_checked(&c.lambda)
            }
            ExperimentConfig::PhaseMc(c) => {
                require_common(c.trials, c.success_tol, c.jobs)?;
                require_nonempty("grid.r", &c.grid.r)?;
                require_nonempty("grid.rho", &c.grid.rho)?;
                require_nonempty("grid.s", &c.grid.s)?;
                if c.model.n < 2 {
                    return cfg_err("model.n must be at least 2");
                }
                if c.grid.rho.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
                    return cfg_err("grid.rho values must lie in (0, 1]");
                }
                if c.grid.s.iter().any(|&s| !(0.0..1.0).contains(&s)) {
                    return cfg_err("grid.s values must lie in [0, 1)");
                }
                lambda_checked(&c.lambda)
            }
            ExperimentConfig::Stability(c) => {
                require_nonempty("epsilons", &c.epsilons)?;
                if c.epsilons.iter().any(|&e| !(e >= 0.0)) {
                    return cfg_err("epsilons must be non-negative");
                }
                lambda_checked(&c.lambda)
            }
            ExperimentConfig::Lemmas(c) => {
                require_common(c.trials, 1.0, c.jobs)?;
                require_nonempty("lemma", &c.lemma)?;
                for l in &c.lemma {
                    l.validate().map_err(|e| Error::Config(e.to_string()))?;
                }
                Ok(())
            }
            ExperimentConfig::ModelEquiv(c) => {
                if c.trials == 0 || c.repetitions == 0 {
                    return cfg_err("trials and repetitions must be at least 1");
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub coords: Vec<f64>,
    pub successes: usize,
    pub trials: usize,
    pub median_rel_error: Option<f64>,
    pub median_iterations: Option<f64>,
    /// Trials that carried an errata note.
    pub errata: usize,
}

impl CellSummary {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub experiment: String,
    pub axes: Vec<Axis>,
    pub trials: usize,
    pub success_tol: f64,
    pub base_seed: u64,
    /// Row-major over the axes (last axis fastest).
    pub cells: Vec<CellSummary>,
    pub rows: Vec<ReportRow>,
}

impl PhaseGrid {
    pub fn cell(&self, coords: &[f64]) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.coords == coords)
    }

    pub fn summary_header(&self) -> Vec<String> {
        let mut h: Vec<String> = vec!["cell".into()];
        h.extend(self.axes.iter().map(|a| a.name.clone()));
        h.extend(
            ["trials", "successes", "success_rate", "median_rel_error", "median_iterations", "errata"]
                .map(String::from),
        );
        h
    }

    pub fn summary_rows(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let mut row = vec![k.to_string()];
                row.extend(c.coords.iter().map(|v| v.to_string()));
                row.push(c.trials.to_string());
                row.push(c.successes.to_string());
                row.push(format_f64(c.success_rate()));
                row.push(c.median_rel_error.map(format_f64).unwrap_or_default());
                row.push(c.median_iterations.map(format_f64).unwrap_or_default());
                row.push(c.errata.to_string());
                row
            })
            .collect()
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

fn cartesian(axes: &[Axis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

/// Outcome of one trial before the success rule is applied.
struct TrialOutcome {
    rel_error: Option<f64>,
    iterations: Option<usize>,
    errata: String,
}

impl TrialOutcome {
    fn failed(err: &Error) -> Self {
        TrialOutcome {
            rel_error: None,
            iterations: None,
            errata: format!("error: {err}"),
        }
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))
}

#[allow(clippy::too_many_arguments)]
fn run_grid(
    experiment: &str,
    axes: Vec<Axis>,
    trials: usize,
    success_tol: f64,
    base_seed: u64,
    jobs: usize,
    timing: bool,
    trial: impl Fn(&[f64], u64) -> TrialOutcome + Sync,
) -> Result<PhaseGrid> {
    let cells = cartesian(&axes);
    let jobs_list: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..trials).map(move |t| (c, t))).collect();
    let rows: Vec<ReportRow> = pool(jobs)?.install(|| {
        jobs_list
            .par_iter()
            .map(|&(c, t)| {
                let seed = seed::trial_seed(base_seed, c, t);
                let start = Instant::now();
                let out = trial(&cells[c], seed);
                let runtime_ms = timing.then(|| start.elapsed().as_secs_f64() * 1e3);
                let coords = axes
                    .iter()
                    .zip(&cells[c])
                    .map(|(a, v)| format!("{}={v}", a.name))
                    .collect::<Vec<_>>()
                    .join(";");
                ReportRow {
                    experiment: experiment.to_string(),
                    cell: c,
                    coords,
                    trial: t,
                    seed,
                    success: out.rel_error.is_some_and(|e| e <= success_tol),
                    rel_error: out.rel_error,
                    iterations: out.iterations,
                    runtime_ms,
                    errata: out.errata,
                }
            })
            .collect()
    });
    let summaries = cells
        .iter()
        .enumerate()
        .map(|(c, coords)| {
            let mine: Vec<&ReportRow> = rows.iter().filter(|r| r.cell == c).collect();
            CellSummary {
                coords: coords.clone(),
                successes: mine.iter().filter(|r| r.success).count(),
                trials,
                median_rel_error: median(mine.iter().filter_map(|r| r.rel_error).collect()),
                median_iterations: median(mine.iter().filter_map(|r| r.iterations.map(|k| k as f64)).collect()),
                errata: mine.iter().filter(|r| !r.errata.is_empty()).count(),
            }
        })
        .collect();
    Ok(PhaseGrid {
        experiment: experiment.to_string(),
        axes,
        trials,
        success_tol,
        base_seed,
        cells: summaries,
        rows,
    })
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn status_note(status: Status) -> String {
    match status {
        Status::Converged => String::new(),
        Status::MaxIters => "max-iters".into(),
    }
}

/// Sparse recovery success grid over `(‖x‖₀, ‖f‖₀)`.
pub fn run_phase_cs(cfg: &PhaseCsConfig) -> Result<PhaseGrid> {
    let (m, n) = (cfg.model.m, cfg.model.n);
    let lambda = cfg.lambda_rule().cs_value(m, n)?;
    let axes = vec![
        Axis {
            name: "k_x".into(),
            values: cfg.grid.k_x.iter().map(|&k| k as f64).collect(),
        },
        Axis {
            name: "k_f".into(),
            values: cfg.grid.k_f.iter().map(|&k| k as f64).collect(),
        },
    ];
    let opts = cfg.solver.options(lambda, 0.0);
    let trial = |coords: &[f64], seed: u64| {
        let (kx, kf) = (coords[0] as usize, coords[1] as usize);
        let run = || -> Result<TrialOutcome> {
            let inst = gen_cs_instance(cfg.model.ensemble, m, n, kx, kf, 0.0, seed)?;
            let rec = solve_cs(&inst.a.data, &inst.y, &opts)?;
            let err = (&rec.x_hat - &inst.x_true).norm() + (&rec.f_hat - &inst.f_true).norm();
            Ok(TrialOutcome {
                rel_error: Some(relative(err, inst.x_true.norm() + inst.f_true.norm())),
                iterations: Some(rec.iters),
                errata: status_note(rec.status),
            })
        };
        run().unwrap_or_else(|e| TrialOutcome::failed(&e))
    };
    run_grid("phase-cs", axes, cfg.trials, cfg.success_tol, cfg.seed, cfg.jobs, cfg.timing, trial)
}

/// Matrix completion success grid over `(r, ρ, s)`; masks follow the direct
/// Bernoulli model for any `ρ ∈ (0, 1]`.
pub fn run_phase_mc(cfg: &PhaseMcConfig) -> Result<PhaseGrid> {
    let n = cfg.model.n;
    let rule = cfg.lambda.clone().unwrap_or(LambdaRule::Named("mc".into()));
    let axes = vec![
        Axis {
            name: "r".into(),
            values: cfg.grid.r.iter().map(|&r| r as f64).collect(),
        },
        Axis {
            name: "rho".into(),
            values: cfg.grid.rho.clone(),
        },
        Axis {
            name: "s".into(),
            values: cfg.grid.s.clone(),
        },
    ];
    let trial = |coords: &[f64], seed: u64| {
        let (r, rho, s) = (coords[0] as usize, coords[1], coords[2]);
        let run = || -> Result<TrialOutcome> {
            let mut params = McParams::new(n, r, rho, s);
            params.magnitudes = cfg.model.magnitudes;
            let inst = gen_mc_instance(&params, MaskModel::Bernoulli, None, seed)?;
            let opts = cfg.solver.options(rule.mc_value(rho, n)?);
            let rec = solve_mc(&inst.m_obs, &inst.o, &opts)?;
            Ok(TrialOutcome {
                rel_error: Some(relative((&rec.l_hat - &inst.l).norm(), inst.l.norm())),
                iterations: Some(rec.iters),
                errata: status_note(rec.status),
            })
        };
        run().unwrap_or_else(|e| TrialOutcome::failed(&e))
    };
    run_grid("phase-mc", axes, cfg.trials, cfg.success_tol, cfg.seed, cfg.jobs, cfg.timing, trial)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRow {
    pub epsilon: f64,
    /// `‖x̂ − x‖₂ + ‖f̂ − f‖₂`; `None` when the solve failed.
    pub error: Option<f64>,
    /// `error/ε` for `ε > 0`.
    pub ratio: Option<f64>,
    /// `K(δ)·ε` when an exact `δ < 1/9` is available.
    pub k_bound: Option<f64>,
    pub iterations: Option<usize>,
    pub errata: String,
}

pub const STABILITY_HEADER: [&str; 7] = ["epsilon", "error", "ratio", "k_bound", "delta", "iterations", "errata"];

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityTable {
    pub delta: Option<f64>,
    pub rows: Vec<StabilityRow>,
}

impl StabilityTable {
    pub fn records(&self) -> Vec<Vec<String>> {
        let f = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
        self.rows
            .iter()
            .map(|r| {
                vec![
                    format_f64(r.epsilon),
                    f(r.error),
                    f(r.ratio),
                    f(r.k_bound),
                    f(self.delta),
                    r.iterations.map(|k| k.to_string()).unwrap_or_default(),
                    r.errata.clone(),
                ]
            })
            .collect()
    }
}

/// Re-solves `y = Ax + f + w` for each `ε` with fresh noise of norm exactly `ε`.
pub fn stability_sweep(
    a: &DMatrix<f64>,
    x: &DVector<f64>,
    f: &DVector<f64>,
    epsilons: &[f64],
    lambda: f64,
    solver: &CsSolverSection,
    delta: Option<f64>,
    seed: u64,
) -> Result<StabilityTable> {
    if a.ncols() != x.len() || a.nrows() != f.len() {
        return invalid("stability sweep: shapes of A, x and f disagree");
    }
    let k = delta.and_then(|d| stability_constant(d).ok());
    let rows = epsilons
        .iter()
        .enumerate()
        .map(|(idx, &eps)| {
            let w = noise_of_norm(a.nrows(), eps, seed::derive(seed, &[idx as u64]));
            let y = a * x + f + w;
            match solve_cs(a, &y, &solver.options(lambda, eps)) {
                Ok(rec) => {
                    let err = (&rec.x_hat - x).norm() + (&rec.f_hat - f).norm();
                    StabilityRow {
                        epsilon: eps,
                        error: Some(err),
                        ratio: (eps > 0.0).then(|| err / eps),
                        k_bound: k.map(|k| k * eps),
                        iterations: Some(rec.iters),
                        errata: status_note(rec.status),
                    }
                }
                Err(e) => StabilityRow {
                    epsilon: eps,
                    error: None,
                    ratio: None,
                    k_bound: k.map(|k| k * eps),
                    iterations: None,
                    errata: format!("error: {e}"),
                },
            }
        })
        .collect();
    Ok(StabilityTable { delta, rows })
}

pub fn run_stability_cs(cfg: &StabilityConfig) -> Result<StabilityTable> {
    let md = &cfg.model;
    let inst = gen_cs_instance(md.ensemble, md.m, md.n, md.k_x, md.k_f, 0.0, cfg.seed)?;
    let rule = cfg.lambda.clone().unwrap_or_else(|| {
        LambdaRule::Named(if md.ensemble == EnsembleKind::GaussianIid { "gaussian" } else { "general" }.into())
    });
    let lambda = rule.cs_value(md.m, md.n)?;
    let delta = match &cfg.rip {
        Some(r) => Some(rip_constant_exact(&inst.a.data, r.s1, r.s2)?.delta),
        None => None,
    };
    stability_sweep(
        &inst.a.data,
        &inst.x_true,
        &inst.f_true,
        &cfg.epsilons,
        lambda,
        &cfg.solver,
        delta,
        seed::stream(cfg.seed, 100),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct LemmaRow {
    pub id: &'static str,
    pub params: String,
    pub trials: usize,
    pub passes: usize,
    pub max_value: f64,
}

impl LemmaRow {
    pub fn rate(&self) -> f64 {
        self.passes as f64 / self.trials as f64
    }
}

pub const LEMMA_HEADER: [&str; 6] = ["id", "params", "trials", "passes", "rate", "max_value"];

pub fn lemma_records(rows: &[LemmaRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.id.to_string(),
                r.params.clone(),
                r.trials.to_string(),
                r.passes.to_string(),
                format_f64(r.rate()),
                format_f64(r.max_value),
            ]
        })
        .collect()
}

/// Empirical pass rate of each configured bound.
pub fn run_lemma_frequencies(cfg: &LemmaConfig) -> Result<Vec<LemmaRow>> {
    let work: Vec<(usize, usize)> = cfg
        .lemma
        .iter()
        .enumerate()
        .flat_map(|(k, l)| (0..l.trials_override().unwrap_or(cfg.trials)).map(move |t| (k, t)))
        .collect();
    let draws: Vec<Result<(f64, f64)>> = pool(cfg.jobs)?.install(|| {
        work.par_iter()
            .map(|&(k, t)| cfg.lemma[k].draw(seed::trial_seed(cfg.seed, k, t)))
            .collect()
    });
    let mut rows: Vec<LemmaRow> = cfg
        .lemma
        .iter()
        .map(|l| LemmaRow {
            id: l.id(),
            params: l.params(),
            trials: 0,
            passes: 0,
            max_value: f64::NEG_INFINITY,
        })
        .collect();
    for (&(k, _), draw) in work.iter().zip(draws) {
        let (value, bound) = draw?;
        let row = &mut rows[k];
        row.trials += 1;
        row.passes += usize::from(value <= bound);
        row.max_value = row.max_value.max(value);
    }
    Ok(rows)
}

/// Joint-frequency comparison of `(1_O, 1_Ω)` between the two mask samplers.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub cells: u64,
    /// Counts of `(0,0)`, `(1,0)`, `(1,1)` under the direct sampler.
    pub direct: [u64; 3],
    pub auxiliary: [u64; 3],
    pub z: [f64; 3],
    pub passed: bool,
}

pub const EQUIVALENCE_CATEGORIES: [&str; 3] = ["out", "observed-clean", "observed-corrupted"];
pub const EQUIVALENCE_HEADER: [&str; 6] = ["repetition", "category", "direct", "auxiliary", "z", "passed"];
pub const EQUIVALENCE_Z_LIMIT: f64 = 4.0;

fn categorize(o: &Mask, omega: &Mask, counts: &mut [u64; 3]) {
    let (rows, cols) = o.shape();
    for i in 0..rows {
        for j in 0..cols {
            let k = match (o.contains(i, j), omega.contains(i, j)) {
                (false, _) => 0,
                (true, false) => 1,
                (true, true) => 2,
            };
            counts[k] += 1;
        }
    }
}

/// Two-sample proportion z-score with pooled standard error (0 when the
/// pooled proportion is degenerate).
pub fn two_sample_z(c1: u64, c2: u64, total: u64) -> f64 {
    let n = total as f64;
    let (p1, p2) = (c1 as f64 / n, c2 as f64 / n);
    let p = 0.5 * (p1 + p2);
    let se = (p * (1.0 - p) * 2.0 / n).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (p1 - p2) / se
    }
}

pub fn run_model_equivalence(n: usize, rho: f64, s: f64, trials: usize, seed: u64) -> Result<EquivalenceReport> {
    if trials == 0 {
        return invalid("trials must be at least 1");
    }
    let k = random_sign_matrix(n, seed::stream(seed, 0));
    let mut direct = [0u64; 3];
    let mut auxiliary = [0u64; 3];
    for t in 0..trials as u64 {
        let d = sample_direct_masks(n, rho, s, &k, CorruptionMagnitudes::Unit, seed::derive(seed, &[t, 1]))?;
        categorize(&d.o, &d.omega, &mut direct);
        let a = sample_auxiliary_masks(n, rho, s, &k, CorruptionMagnitudes::Unit, seed::derive(seed, &[t, 2]))?;
        categorize(&a.o, &a.omega, &mut auxiliary);
    }
    let cells = (n * n * trials) as u64;
    let z: [f64; 3] = std::array::from_fn(|c| two_sample_z(direct[c], auxiliary[c], cells));
    Ok(EquivalenceReport {
        cells,
        direct,
        auxiliary,
        z,
        passed: z.iter().all(|v| v.abs() <= EQUIVALENCE_Z_LIMIT),
    })
}

pub fn run_model_equivalence_config(cfg: &ModelEquivConfig) -> Result<Vec<EquivalenceReport>> {
    (0..cfg.repetitions)
        .map(|r| run_model_equivalence(cfg.n, cfg.rho, cfg.s, cfg.trials, seed::derive(cfg.seed, &[r as u64])))
        .collect()
}

pub fn equivalence_records(reports: &[EquivalenceReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .enumerate()
        .flat_map(|(r, rep)| {
            (0..3).map(move |c| {
                vec![
                    r.to_string(),
                    EQUIVALENCE_CATEGORIES[c].to_string(),
                    rep.direct[c].to_string(),
                    rep.auxiliary[c].to_string(),
                    format_f64(rep.z[c]),
                    u8::from(rep.z[c].abs() <= EQUIVALENCE_Z_LIMIT).to_string(),
                ]
            })
        })
        .collect()
}

/// Result of any experiment kind.
#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentOutput {
    Grid(PhaseGrid),
    Stability(StabilityTable),
    Lemmas(Vec<LemmaRow>),
    Equivalence(Vec<EquivalenceReport>),
}

impl ExperimentOutput {
    /// The primary CSV report.
    pub fn csv(&self) -> String {
        match self {
            ExperimentOutput::Grid(g) => report_to_string(&g.rows),
            ExperimentOutput::Stability(t) => table_to_string(&STABILITY_HEADER, &t.records()),
            ExperimentOutput::Lemmas(rows) => table_to_string(&LEMMA_HEADER, &lemma_records(rows)),
            ExperimentOutput::Equivalence(reps) => table_to_string(&EQUIVALENCE_HEADER, &equivalence_records(reps)),
        }
    }
}

pub fn run_config(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    Ok(match cfg {
        ExperimentConfig::PhaseCs(c) => ExperimentOutput::Grid(run_phase_cs(c)?),
        ExperimentConfig::PhaseMc(c) => ExperimentOutput::Grid(run_phase_mc(c)?),
        ExperimentConfig::Stability(c) => ExperimentOutput::Stability(run_stability_cs(c)?),
        ExperimentConfig::Lemmas(c) => ExperimentOutput::Lemmas(run_lemma_frequencies(c)?),
        ExperimentConfig::ModelEquiv(c) => ExperimentOutput::Equivalence(run_model_equivalence_config(c)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_order_is_row_major() {
        let axes = vec![
            Axis {
                name: "a".into(),
                values: vec![1.0, 2.0],
            },
            Axis {
                name: "b".into(),
                values: vec![3.0, 4.0, 5.0],
            },
        ];
        let c = cartesian(&axes);
        assert_eq!(c.len(), 6);
        assert_eq!(c[1], vec![1.0, 4.0]);
        assert_eq!(c[3], vec![2.0, 3.0]);
    }

    #[test]
    fn medians() {
        assert_eq!(median(vec![]), None);
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn z_scores() {
        assert_eq!(two_sample_z(0, 0, 100), 0.0);
        assert_eq!(two_sample_z(100, 100, 100), 0.0);
        assert!((two_sample_z(60, 40, 100) - 0.2 / (0.5f64 * 0.5 * 0.02).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lambda_rules() {
        assert_eq!(LambdaRule::parse("0.5").unwrap(), LambdaRule::Value(0.5));
        assert!(LambdaRule::parse("gausian").is_err());
        assert!(LambdaRule::parse("-1").is_err());
        let g = LambdaRule::parse("general").unwrap();
        assert!((g.cs_value(10, 1000).unwrap() - 0.380_479_733_101_625_2).abs() < 1e-12);
        assert!(g.mc_value(0.5, 10).is_err());
        assert!(LambdaRule::parse("mc").unwrap().cs_value(5, 10).is_err());
    }
}
