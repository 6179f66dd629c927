//! Command-line front end. `run` never exits the process itself so it can
//! be driven from tests; `main` only forwards its return code.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::Rng as _;

use crate::certificates::{
    build_cs_certificate, build_mc_certificate, rip_constant_exact, verify_cs_inexact_duality, verify_mc_duality,
    Margin, McDualityInputs,
};
use crate::cs_solver::solve_cs;
use crate::error::{Error, Result};
use crate::experiments::{run_config, CsSolverSection, ExperimentOutput, LambdaRule, McSolverSection, PhaseGrid};
use crate::io::{self, format_f64};
use crate::linalg::{self, PowerIteration};
use crate::mc_solver::{estimate_rho, solve_mc};
use crate::models::{gen_cs_instance, gen_ensemble, gen_mc_instance, random_support, EnsembleKind, MaskModel, McParams};
use crate::seed;

#[derive(Debug, Parser)]
#[command(
    name = "robust-recovery",
    version,
    about = "Sparse recovery and matrix completion from grossly corrupted measurements",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random instance and write it as Matrix Market files
    #[command(subcommand)]
    Gen(GenCommand),
    /// Solve min ‖x‖₁ + λ‖f‖₁ s.t. ‖Ax + f − y‖₂ ≤ ε
    SolveCs(SolveCsArgs),
    /// Solve min ‖L‖_* + λ‖S‖₁ s.t. P_O(L) + S = M on the observed entries
    SolveMc(SolveMcArgs),
    /// Exact restricted isometry constant of [A, I] by enumeration
    Rip(RipArgs),
    /// Build the golfing dual vector for a random sparse-recovery instance
    CertifyCs(CertifyCsArgs),
    /// Build the golfing dual matrix for a random matrix-completion instance
    CertifyMc(CertifyMcArgs),
    /// Sparse recovery success grid
    PhaseCs(ExperimentArgs),
    /// Matrix completion success grid
    PhaseMc(ExperimentArgs),
    /// Recovery error against the noise level
    Stability(ExperimentArgs),
    /// Empirical pass rates of the random-matrix bounds
    Lemmas(ExperimentArgs),
    /// Compare the direct and auxiliary mask samplers
    ModelEquiv(ExperimentArgs),
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Writes A.mtx, y.mtx, x.mtx, f.mtx
    Cs(GenCsArgs),
    /// Writes M.mtx, O.mtx, L.mtx, S.mtx
    Mc(GenMcArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EnsembleArg {
    Gaussian,
    Rademacher,
    Dct,
}

impl From<EnsembleArg> for EnsembleKind {
    fn from(e: EnsembleArg) -> Self {
        match e {
            EnsembleArg::Gaussian => EnsembleKind::GaussianIid,
            EnsembleArg::Rademacher => EnsembleKind::RademacherRows,
            EnsembleArg::Dct => EnsembleKind::SubsampledDct,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MaskModelArg {
    /// Bernoulli masks, any ρ in (0, 1]
    Bernoulli,
    /// Direct model, ρ < 1/2
    Direct,
    /// Auxiliary model, ρ < 1/2
    Auxiliary,
}

impl From<MaskModelArg> for MaskModel {
    fn from(m: MaskModelArg) -> Self {
        match m {
            MaskModelArg::Bernoulli => MaskModel::Bernoulli,
            MaskModelArg::Direct => MaskModel::Direct,
            MaskModelArg::Auxiliary => MaskModel::Auxiliary,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenCsArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub ensemble: EnsembleArg,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    /// Nonzeros in x
    #[arg(long)]
    pub kx: usize,
    /// Nonzeros in f
    #[arg(long)]
    pub kf: usize,
    /// Noise norm
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenMcArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub r: usize,
    /// Observation rate
    #[arg(long)]
    pub rho: f64,
    /// Corruption rate among observed entries
    #[arg(long)]
    pub s: f64,
    #[arg(long, value_enum, default_value = "bernoulli")]
    pub model: MaskModelArg,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CsSolverArgs {
    #[arg(long, default_value_t = 1.0)]
    pub penalty: f64,
    #[arg(long, default_value_t = 50_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct SolveCsArgs {
    #[arg(long = "A")]
    pub a: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// gaussian, general or a positive number
    #[arg(long, default_value = "general")]
    pub lambda_rule: String,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    /// x̂ goes here, f̂ next to it with a `.f` infix
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: CsSolverArgs,
}

#[derive(Debug, Args)]
pub struct SolveMcArgs {
    #[arg(long = "M")]
    pub m: PathBuf,
    /// Pattern file of observed entries
    #[arg(long)]
    pub mask: PathBuf,
    /// mc (at the observed rate) or a positive number
    #[arg(long, default_value = "mc")]
    pub lambda_rule: String,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// L̂ goes here, Ŝ next to it with a `.s` infix
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RipArgs {
    #[arg(long = "A")]
    pub a: PathBuf,
    #[arg(long)]
    pub s1: usize,
    #[arg(long)]
    pub s2: usize,
}

#[derive(Debug, Args)]
pub struct CertifyCsArgs {
    #[arg(long, value_enum, default_value = "rademacher")]
    pub ensemble: EnsembleArg,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    /// Support size of x
    #[arg(long)]
    pub s: usize,
    /// Number of corrupted measurements
    #[arg(long)]
    pub mb: usize,
    #[arg(long, default_value = "general")]
    pub lambda_rule: String,
    #[arg(long)]
    pub seed: u64,
    /// Optional file for the dual vector q
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyMcArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub r: usize,
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub s: f64,
    #[arg(long, default_value = "mc")]
    pub lambda_rule: String,
    #[arg(long)]
    pub seed: u64,
    /// Optional file for the dual matrix Y
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML experiment file
    #[arg(long)]
    pub config: PathBuf,
    /// CSV destination; overrides the config, stdout if neither is set
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides the config
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Base seed; overrides the config
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Gen(GenCommand::Cs(a)) => gen_cs(a, out),
        Command::Gen(GenCommand::Mc(a)) => gen_mc(a, out),
        Command::SolveCs(a) => solve_cs_cmd(a, out),
        Command::SolveMc(a) => solve_mc_cmd(a, out),
        Command::Rip(a) => rip_cmd(a, out),
        Command::CertifyCs(a) => certify_cs(a, out),
        Command::CertifyMc(a) => certify_mc(a, out),
        Command::PhaseCs(a) => experiment("phase-cs", a, out),
        Command::PhaseMc(a) => experiment("phase-mc", a, out),
        Command::Stability(a) => experiment("stability", a, out),
        Command::Lemmas(a) => experiment("lemmas", a, out),
        Command::ModelEquiv(a) => experiment("model-equiv", a, out),
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn emit(out: &mut dyn Write, key: &str, value: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{key} = {value}").map_err(stdout_err)
}

fn emit_f(out: &mut dyn Write, key: &str, value: f64) -> Result<()> {
    emit(out, key, format_f64(value))
}

fn emit_margins(out: &mut dyn Write, prefix: &str, margins: &[Margin]) -> Result<()> {
    for m in margins {
        writeln!(
            out,
            "{prefix}: {} achieved={} required={} {}",
            m.name,
            format_f64(m.achieved),
            format_f64(m.required),
            if m.passed { "pass" } else { "fail" }
        )
        .map_err(stdout_err)?;
    }
    Ok(())
}

fn join(v: &[usize]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn gen_cs(a: GenCsArgs, out: &mut dyn Write) -> Result<()> {
    let inst = gen_cs_instance(a.ensemble.into(), a.m, a.n, a.kx, a.kf, a.eps, a.seed)?;
    create_dir(&a.out_dir)?;
    io::write_matrix(&a.out_dir.join("A.mtx"), &inst.a.data)?;
    io::write_vector(&a.out_dir.join("y.mtx"), &inst.y)?;
    io::write_vector(&a.out_dir.join("x.mtx"), &inst.x_true)?;
    io::write_vector(&a.out_dir.join("f.mtx"), &inst.f_true)?;
    emit(out, "support_x", join(&inst.support_x))?;
    emit(out, "support_f", join(&inst.support_f))
}

fn gen_mc(a: GenMcArgs, out: &mut dyn Write) -> Result<()> {
    let inst = gen_mc_instance(&McParams::new(a.n, a.r, a.rho, a.s), a.model.into(), None, a.seed)?;
    create_dir(&a.out_dir)?;
    io::write_matrix(&a.out_dir.join("M.mtx"), &inst.m_obs)?;
    io::write_mask(&a.out_dir.join("O.mtx"), &inst.o)?;
    io::write_matrix(&a.out_dir.join("L.mtx"), &inst.l)?;
    io::write_matrix(&a.out_dir.join("S.mtx"), &inst.s)?;
    emit(out, "observed", inst.o.len())?;
    emit(out, "corrupted", inst.omega.len())?;
    emit_f(out, "incoherence", inst.mu)
}

fn cs_solver_section(s: &CsSolverArgs) -> CsSolverSection {
    CsSolverSection {
        penalty: s.penalty,
        max_iters: s.max_iters,
        tol: s.tol,
    }
}

fn solve_cs_cmd(a: SolveCsArgs, out: &mut dyn Write) -> Result<()> {
    let mat = io::read_matrix(&a.a)?;
    let y = io::read_vector(&a.y)?;
    let lambda = LambdaRule::parse(&a.lambda_rule)?.cs_value(mat.nrows(), mat.ncols())?;
    let rec = solve_cs(&mat, &y, &cs_solver_section(&a.solver).options(lambda, a.eps))?;
    io::write_vector(&a.out, &rec.x_hat)?;
    io::write_vector(&io::sibling_path(&a.out, "f"), &rec.f_hat)?;
    emit_f(out, "lambda", lambda)?;
    emit(out, "status", format!("{:?}", rec.status))?;
    emit(out, "iterations", rec.iters)?;
    emit_f(out, "objective", rec.objective)?;
    emit_f(out, "constraint_residual", rec.constraint_residual)?;
    emit_f(out, "primal_residual", rec.primal_residual)?;
    emit_f(out, "dual_residual", rec.dual_residual)
}

fn solve_mc_cmd(a: SolveMcArgs, out: &mut dyn Write) -> Result<()> {
    let m = io::read_matrix(&a.m)?;
    let o = io::read_mask(&a.mask)?;
    let n = m.nrows();
    let lambda = LambdaRule::parse(&a.lambda_rule)?.mc_value(estimate_rho(&o, n), n)?;
    let solver = McSolverSection {
        max_iters: a.max_iters,
        tol: a.tol,
    };
    let rec = solve_mc(&m, &o, &solver.options(lambda))?;
    io::write_matrix(&a.out, &rec.l_hat)?;
    io::write_matrix(&io::sibling_path(&a.out, "s"), &rec.s_hat)?;
    emit_f(out, "lambda", lambda)?;
    emit(out, "status", format!("{:?}", rec.status))?;
    emit(out, "iterations", rec.iters)?;
    emit(out, "rank", rec.rank)?;
    emit_f(out, "objective", rec.objective)?;
    emit_f(out, "residual", rec.residual)?;
    emit_f(out, "dual_residual", rec.dual_residual)
}

fn rip_cmd(a: RipArgs, out: &mut dyn Write) -> Result<()> {
    let mat = io::read_matrix(&a.a)?;
    let rep = rip_constant_exact(&mat, a.s1, a.s2)?;
    emit_f(out, "delta", rep.delta)?;
    emit(out, "argmax_t", join(&rep.argmax_t))?;
    emit(out, "argmax_v", join(&rep.argmax_v))?;
    emit(out, "subsets", rep.n_subsets_enumerated)
}

fn random_signs(len: usize, seed: u64) -> DVector<f64> {
    let mut rng = seed::rng(seed);
    DVector::from_fn(len, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

fn certify_cs(a: CertifyCsArgs, out: &mut dyn Write) -> Result<()> {
    let mat = gen_ensemble(a.m, a.n, a.ensemble.into(), seed::stream(a.seed, 1))?.data;
    let t = random_support(a.n, a.s, seed::stream(a.seed, 2))?;
    let b = random_support(a.m, a.mb, seed::stream(a.seed, 3))?;
    let sx = random_signs(t.len(), seed::stream(a.seed, 4));
    let sf = random_signs(b.len(), seed::stream(a.seed, 5));
    let lambda = LambdaRule::parse(&a.lambda_rule)?.cs_value(a.m, a.n)?;
    let cert = build_cs_certificate(&mat, &t, &b, &sx, &sf, lambda, seed::stream(a.seed, 6))?;
    let rep = verify_cs_inexact_duality(&cert, &mat, &t, &b, &sx, &sf, lambda)?;
    if let Some(path) = &a.out {
        io::write_vector(path, &cert.q)?;
    }
    emit_f(out, "lambda", lambda)?;
    emit(out, "blocks", cert.partition.len())?;
    emit_f(out, "telescoping_residual", cert.telescoping_residual)?;
    emit_margins(out, "condition", &rep.conditions)?;
    emit(out, "guarantee", rep.guarantee)
}

fn certify_mc(a: CertifyMcArgs, out: &mut dyn Write) -> Result<()> {
    let inst = gen_mc_instance(
        &McParams::new(a.n, a.r, a.rho, a.s),
        MaskModel::AuxiliaryUnrestricted,
        None,
        seed::stream(a.seed, 1),
    )?;
    let lambda = LambdaRule::parse(&a.lambda_rule)?.mc_value(a.rho, a.n)?;
    let cert = build_mc_certificate(&inst, lambda, seed::stream(a.seed, 2))?;
    let inputs = McDualityInputs::from_instance(&inst)?;
    let rep = verify_mc_duality(&cert.y, &inputs, lambda, PowerIteration::default(), seed::stream(a.seed, 3))?;
    if let Some(path) = &a.out {
        io::write_matrix(path, &cert.y)?;
    }
    emit_f(out, "lambda", lambda)?;
    emit(out, "blocks", cert.block_sizes.len())?;
    emit_f(out, "telescoping_residual", cert.telescoping_residual)?;
    emit_f(out, "spectral_norm_y", linalg::spectral_norm(&cert.y)?)?;
    emit_margins(out, "condition", &rep.conditions)?;
    emit(out, "guarantee", rep.guarantee)
}

fn write_or_print(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => out.write_all(text.as_bytes()).map_err(stdout_err),
    }
}

fn write_grid(out: &mut dyn Write, path: Option<&Path>, grid: &PhaseGrid) -> Result<()> {
    write_or_print(out, path, &io::report_to_string(&grid.rows))?;
    if let Some(p) = path {
        let summary = io::sibling_path(p, "summary");
        io::write_table(&summary, &grid.summary_header(), &grid.summary_rows())?;
        for (k, c) in grid.cells.iter().enumerate() {
            let coords: Vec<String> = grid.axes.iter().zip(&c.coords).map(|(a, v)| format!("{}={v}", a.name)).collect();
            writeln!(out, "cell {k} {}: {}/{}", coords.join(" "), c.successes, c.trials).map_err(stdout_err)?;
        }
    }
    Ok(())
}

fn experiment(expected: &str, a: ExperimentArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = io::read_config(&a.config)?;
    if cfg.kind() != expected {
        return Err(Error::Config(format!(
            "{}: kind is {:?}, but the {expected} command was run",
            a.config.display(),
            cfg.kind()
        )));
    }
    if let Some(seed) = a.seed {
        cfg.set_seed(seed);
    }
    if let Some(jobs) = a.jobs {
        cfg.set_jobs(jobs);
    }
    let path = a.out.or_else(|| cfg.output().cloned());
    let path = path.as_deref();
    let output = run_config(&cfg)?;
    match &output {
        ExperimentOutput::Grid(grid) => write_grid(out, path, grid),
        ExperimentOutput::Equivalence(reports) => {
            write_or_print(out, path, &output.csv())?;
            if path.is_some() {
                emit(out, "passed", reports.iter().all(|r| r.passed))?;
            }
            Ok(())
        }
        _ => write_or_print(out, path, &output.csv()),
    }
}

/// Long help of the top-level command and of every subcommand, in order.
pub fn usage_text() -> String {
    use clap::CommandFactory;
    let mut cmd = Cli::command();
    cmd.build();
    let mut text = String::new();
    fn walk(cmd: &mut clap::Command, path: &str, text: &mut String) {
        let name = if path.is_empty() { cmd.get_name().to_string() } else { format!("{path} {}", cmd.get_name()) };
        text.push_str(&format!("==> {name}\n"));
        text.push_str(&cmd.render_long_help().to_string());
        text.push('\n');
        for sub in cmd.get_subcommands_mut() {
            walk(sub, &name, text);
        }
    }
    walk(&mut cmd, "", &mut text);
    text
}
