use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use robust_recovery::cli::{run, usage_text};
use robust_recovery::io::{read_vector, write_matrix, write_vector};

const GOLDEN: &str = "tests/golden/usage.txt";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robust-recovery"))
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn run_in_process(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("robust-recovery").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// Set `UPDATE_GOLDEN=1` to rewrite the pinned usage text.
#[test]
fn usage_text_matches_golden_file() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    let text = usage_text();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, golden, "usage text changed; rerun with UPDATE_GOLDEN=1 if intended");
}

#[test]
fn every_subcommand_and_flag_is_documented() {
    let text = usage_text();
    for sub in [
        "gen cs", "gen mc", "solve-cs", "solve-mc", "rip", "certify-cs", "certify-mc", "phase-cs", "phase-mc",
        "stability", "lemmas", "model-equiv",
    ] {
        assert!(text.contains(&format!("==> robust-recovery {sub}\n")), "{sub}");
    }
    for flag in ["--A", "--y", "--lambda-rule", "--eps", "--out", "--s1", "--s2", "--config", "--jobs", "--seed"] {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let (code, out, err) = run_in_process(&["frobnicate"]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("Usage:"));
    let (code, _, err) = run_in_process(&["rip", "--A", "a.mtx", "--s1", "1", "--s2", "1", "--bogus"]);
    assert_eq!(code, 2);
    assert!(err.contains("--bogus"));
    // stochastic commands need an explicit seed
    let (code, _, err) = run_in_process(&["gen", "cs", "--m", "4", "--n", "8", "--kx", "1", "--kf", "1", "--out-dir", "x"]);
    assert_eq!(code, 2);
    assert!(err.contains("--seed"));
    assert_eq!(exec(&["solve-cs"]).status.code(), Some(2));
}

#[test]
fn help_exits_0_on_stdout() {
    let (code, out, err) = run_in_process(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("phase-mc"));
    assert!(err.is_empty());
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.mtx");
    let (code, _, err) = run_in_process(&["rip", "--A", missing.to_str().unwrap(), "--s1", "1", "--s2", "1"]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error: "));

    // config of the wrong kind
    let cfg = dir.path().join("e.toml");
    std::fs::write(&cfg, "kind = \"model-equiv\"\nseed = 1\nn = 10\nrho = 0.3\ns = 0.1\n").unwrap();
    let (code, _, err) = run_in_process(&["phase-cs", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("model-equiv"));
    assert_eq!(exec(&["rip", "--A", missing.to_str().unwrap(), "--s1", "1", "--s2", "1"]).status.code(), Some(1));
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_cs_writes_both_vectors() {
    let dir = tempfile::tempdir().unwrap();
    // y = 0 has the unique minimizer (0, 0)
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
    let y = DVector::from_vec(vec![0.0, 0.0]);
    write_matrix(&dir.path().join("a.mtx"), &a).unwrap();
    write_vector(&dir.path().join("y.mtx"), &y).unwrap();
    let out = dir.path().join("sol.mtx");
    let o = exec(&[
        "solve-cs",
        "--A",
        path_str(&dir.path().join("a.mtx")),
        "--y",
        path_str(&dir.path().join("y.mtx")),
        "--lambda-rule",
        "gaussian",
        "--eps",
        "0",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for key in ["objective = ", "constraint_residual = ", "primal_residual = ", "dual_residual = "] {
        assert!(text.contains(key), "{key}");
    }
    assert_eq!(read_vector(&out).unwrap(), DVector::zeros(3));
    assert_eq!(read_vector(&dir.path().join("sol.f.mtx")).unwrap(), DVector::zeros(2));
}

#[test]
fn rip_prints_delta_and_supports() {
    let dir = tempfile::tempdir().unwrap();
    let a = DMatrix::<f64>::identity(4, 4);
    write_matrix(&dir.path().join("a.mtx"), &a).unwrap();
    let o = exec(&["rip", "--A", path_str(&dir.path().join("a.mtx")), "--s1", "2", "--s2", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    // [I, I] has a unit-overlap pair: Gram eigenvalues 0 and 2
    assert!(text.contains("delta = 1.0000000000000000e0"), "{text}");
    assert!(text.contains("argmax_t = "));
    assert!(text.contains("argmax_v = "));
}

#[test]
fn generated_instances_solve_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let o = exec(&[
        "gen", "cs", "--m", "40", "--n", "80", "--kx", "3", "--kf", "2", "--seed", "5", "--out-dir", path_str(&inst),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let sol = dir.path().join("x.mtx");
    let o = exec(&[
        "solve-cs",
        "--A",
        path_str(&inst.join("A.mtx")),
        "--y",
        path_str(&inst.join("y.mtx")),
        "--lambda-rule",
        "gaussian",
        "--out",
        path_str(&sol),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let x = read_vector(&inst.join("x.mtx")).unwrap();
    assert!((read_vector(&sol).unwrap() - &x).norm() <= 1e-6 * x.norm());

    let mc = dir.path().join("mc");
    let o = exec(&[
        "gen", "mc", "--n", "30", "--r", "1", "--rho", "0.6", "--s", "0.0", "--seed", "2", "--out-dir", path_str(&mc),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let lhat = dir.path().join("l.mtx");
    let o = exec(&[
        "solve-mc",
        "--M",
        path_str(&mc.join("M.mtx")),
        "--mask",
        path_str(&mc.join("O.mtx")),
        "--lambda-rule",
        "1",
        "--out",
        path_str(&lhat),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let l = robust_recovery::io::read_matrix(&mc.join("L.mtx")).unwrap();
    let l_hat = robust_recovery::io::read_matrix(&lhat).unwrap();
    assert!((l_hat - &l).norm() <= 1e-4 * l.norm());
    assert!(dir.path().join("l.s.mtx").exists());
}

#[test]
fn certify_commands_report_conditions() {
    let o = exec(&["certify-cs", "--m", "64", "--n", "128", "--s", "2", "--mb", "2", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("telescoping_residual = "));
    assert_eq!(text.matches("condition: ").count(), 7);
    assert!(text.contains("guarantee = "));

    let o = exec(&["certify-mc", "--n", "20", "--r", "1", "--rho", "0.6", "--s", "0.02", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("condition: ").count(), 6);
}

fn write_tiny_grid(dir: &Path) -> PathBuf {
    let cfg = dir.join("grid.toml");
    std::fs::write(
        &cfg,
        "kind = \"phase-mc\"\nseed = 31\ntrials = 2\njobs = 2\nlambda = 0.3\n[model]\nn = 16\n\
         [grid]\nr = [1]\nrho = [0.6, 1.0]\ns = [0.0, 0.05]\n",
    )
    .unwrap();
    cfg
}

#[test]
fn phase_mc_twice_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_grid(dir.path());
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}.csv"));
        let o = exec(&["phase-mc", "--config", path_str(&cfg), "--out", path_str(&out)]);
        assert_eq!(o.status.code(), Some(0));
        let summary = std::fs::read(dir.path().join(format!("run{k}.summary.csv"))).unwrap();
        outputs.push((std::fs::read(&out).unwrap(), summary, o.stdout));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(!outputs[0].0.is_empty());
}

#[test]
fn stdout_report_when_no_output_is_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_grid(dir.path());
    let o = exec(&["phase-mc", "--config", path_str(&cfg), "--jobs", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("experiment,cell,coords,trial,seed,success"));
    assert_eq!(text.lines().count(), 1 + 4 * 2);
    // the seed override changes every trial seed
    let o2 = exec(&["phase-mc", "--config", path_str(&cfg), "--seed", "32"]);
    assert_ne!(stdout(&o2), text);
}
