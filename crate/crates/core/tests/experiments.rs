use std::path::Path;

use robust_recovery::experiments::{
    run_lemma_frequencies, run_model_equivalence, run_phase_cs, run_phase_mc, run_stability_cs, ExperimentConfig,
    LemmaConfig, PhaseCsConfig, PhaseGrid, PhaseMcConfig, StabilityConfig,
};
use robust_recovery::io::{parse_config, report_to_string};
use robust_recovery::models::{sample_auxiliary_masks, sample_direct_masks, random_sign_matrix, CorruptionMagnitudes};

fn parse(text: &str) -> ExperimentConfig {
    parse_config(text, Path::new("test.toml")).unwrap()
}

fn phase_cs(text: &str) -> PhaseCsConfig {
    match parse(text) {
        ExperimentConfig::PhaseCs(c) => c,
        other => panic!("unexpected kind {}", other.kind()),
    }
}

fn phase_mc(text: &str) -> PhaseMcConfig {
    match parse(text) {
        ExperimentConfig::PhaseMc(c) => c,
        other => panic!("unexpected kind {}", other.kind()),
    }
}

fn successes(grid: &PhaseGrid, coords: &[f64]) -> usize {
    grid.cell(coords).unwrap().successes
}

/// Success counts never rise by more than one trial along `axis`.
fn assert_non_increasing(grid: &PhaseGrid, axis: usize) {
    for a in &grid.cells {
        for b in &grid.cells {
            let same_elsewhere = (0..a.coords.len()).all(|k| k == axis || a.coords[k] == b.coords[k]);
            if same_elsewhere && a.coords[axis] < b.coords[axis] {
                assert!(
                    b.successes <= a.successes + 1,
                    "{:?}: {} then {:?}: {}",
                    a.coords,
                    a.successes,
                    b.coords,
                    b.successes
                );
            }
        }
    }
}

#[test]
fn zero_signal_always_succeeds() {
    for ensemble in ["gaussian-iid", "rademacher-rows", "subsampled-dct"] {
        let cfg = phase_cs(&format!(
            "kind = \"phase-cs\"\nseed = 3\ntrials = 5\n[model]\nensemble = \"{ensemble}\"\nm = 16\nn = 32\n\
             [grid]\nk_x = [0]\nk_f = [0]\n"
        ));
        let grid = run_phase_cs(&cfg).unwrap();
        assert_eq!(grid.cells[0].successes, 5, "{ensemble}");
        assert!(grid.rows.iter().all(|r| r.rel_error == Some(0.0)));
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let text = "kind = \"phase-cs\"\nseed = 99\ntrials = 3\n[model]\nm = 20\nn = 40\n\
                [grid]\nk_x = [1, 3]\nk_f = [0, 2, 6]\n";
    let mut cfg = phase_cs(text);
    let serial = run_phase_cs(&cfg).unwrap();
    cfg.jobs = 4;
    let parallel = run_phase_cs(&cfg).unwrap();
    assert_eq!(serial, parallel);
    assert_eq!(report_to_string(&serial.rows), report_to_string(&parallel.rows));
    // cell-major, trial-minor ordering
    let keys: Vec<(usize, usize)> = serial.rows.iter().map(|r| (r.cell, r.trial)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert!(serial.cells.iter().all(|c| c.successes <= c.trials));
    assert!(serial.rows.iter().all(|r| r.runtime_ms.is_none()));
}

#[test]
fn changing_the_seed_changes_the_draws() {
    let text = "kind = \"phase-cs\"\nseed = 1\ntrials = 2\n[model]\nm = 20\nn = 40\n[grid]\nk_x = [2]\nk_f = [2]\n";
    let mut cfg = phase_cs(text);
    let a = run_phase_cs(&cfg).unwrap();
    cfg.seed = 2;
    let b = run_phase_cs(&cfg).unwrap();
    assert_ne!(a.rows[0].seed, b.rows[0].seed);
    assert_ne!(a.rows[0].rel_error, b.rows[0].rel_error);
}

#[test]
fn gaussian_phase_regimes() {
    let cell = |k: usize| {
        phase_cs(&format!(
            "kind = \"phase-cs\"\nseed = 2024\ntrials = 20\n[model]\nm = 128\nn = 256\n\
             [grid]\nk_x = [{k}]\nk_f = [{k}]\n"
        ))
    };
    assert!(run_phase_cs(&cell(6)).unwrap().cells[0].successes >= 18);
    assert!(run_phase_cs(&cell(60)).unwrap().cells[0].successes <= 10);
}

#[test]
fn phase_cs_monotone_along_both_axes() {
    let cfg = phase_cs(
        "kind = \"phase-cs\"\nseed = 17\ntrials = 10\njobs = 4\n[model]\nm = 40\nn = 80\n\
         [grid]\nk_x = [1, 4, 8, 12]\nk_f = [0, 4, 8, 12]\n",
    );
    let grid = run_phase_cs(&cfg).unwrap();
    assert_non_increasing(&grid, 0);
    assert_non_increasing(&grid, 1);
    assert_eq!(successes(&grid, &[1.0, 0.0]), 10);
}

#[test]
fn full_clean_observation_returns_l() {
    // λ ≥ 1 makes S = 0 optimal, so the program reduces to L = M
    let cfg = phase_mc(
        "kind = \"phase-mc\"\nseed = 5\ntrials = 5\nlambda = 1.0\n[model]\nn = 30\n\
         [grid]\nr = [1, 3]\nrho = [1.0]\ns = [0.0]\n",
    );
    let grid = run_phase_mc(&cfg).unwrap();
    assert!(grid.cells.iter().all(|c| c.successes == 5));
}

#[test]
fn phase_mc_regimes() {
    // 1/√(ρn) ≈ 0.18 recovers 13 of these 20; the weight on S needs to be
    // somewhat larger at n = 60
    let easy = phase_mc(
        "kind = \"phase-mc\"\nseed = 8\ntrials = 20\nlambda = 0.25\n[model]\nn = 60\n\
         [grid]\nr = [2]\nrho = [0.5]\ns = [0.05]\n",
    );
    assert!(run_phase_mc(&easy).unwrap().cells[0].successes >= 18);
    let hard = phase_mc(&format!(
        "kind = \"phase-mc\"\nseed = 8\ntrials = 20\nlambda = {}\n[model]\nn = 60\n\
         [grid]\nr = [20]\nrho = [0.2]\ns = [0.3]\n\n[solver]\nmax_iters = 2000\n",
        1.0 / 12f64.sqrt()
    ));
    assert!(run_phase_mc(&hard).unwrap().cells[0].successes <= 10);
}

#[test]
fn phase_mc_monotone_in_corruption() {
    let cfg = phase_mc(&format!(
        "kind = \"phase-mc\"\nseed = 12\ntrials = 8\njobs = 4\nlambda = {}\n[model]\nn = 40\n\
         [grid]\nr = [2]\nrho = [0.5]\ns = [0.0, 0.05, 0.15, 0.3]\n",
        1.0 / 20f64.sqrt()
    ));
    let grid = run_phase_mc(&cfg).unwrap();
    assert_non_increasing(&grid, 2);
}

fn stability(text: &str) -> StabilityConfig {
    match parse(text) {
        ExperimentConfig::Stability(c) => c,
        other => panic!("unexpected kind {}", other.kind()),
    }
}

#[test]
fn stability_scales_linearly() {
    let cfg = stability(
        "kind = \"stability\"\nseed = 4\nepsilons = [0.0, 1e-3, 1e-2, 1e-1]\n\
         [model]\nm = 200\nn = 400\nk_x = 10\nk_f = 10\n",
    );
    let table = run_stability_cs(&cfg).unwrap();
    assert!(table.delta.is_none());
    let err: Vec<f64> = table.rows.iter().map(|r| r.error.unwrap()).collect();
    assert!(err[0] <= 1e-6, "noiseless error {}", err[0]);
    assert!(err[3] / err[1] <= 150.0);
    for k in 1..3 {
        assert!(err[k + 1] / err[k] <= 15.0);
        assert!(err[k + 1] > err[k]);
    }
}

#[test]
fn stability_reports_the_bound_only_in_range() {
    let cfg = stability(
        "kind = \"stability\"\nseed = 4\nepsilons = [0.01]\n[model]\nm = 8\nn = 10\nk_x = 1\nk_f = 1\n\
         [rip]\ns1 = 1\ns2 = 1\n",
    );
    let table = run_stability_cs(&cfg).unwrap();
    let delta = table.delta.unwrap();
    assert!(delta > 0.0);
    // a random 8x10 matrix is far from isometric, so no K(δ) applies
    assert!(delta >= 1.0 / 9.0);
    assert!(table.rows[0].k_bound.is_none());
}

fn lemmas(text: &str) -> LemmaConfig {
    match parse(text) {
        ExperimentConfig::Lemmas(c) => c,
        other => panic!("unexpected kind {}", other.kind()),
    }
}

#[test]
fn lemma_pass_rates() {
    let cfg = lemmas(
        "kind = \"lemmas\"\nseed = 21\njobs = 4\n\
         [[lemma]]\nid = \"gaussian-norm\"\nm = 60\nn = 120\nt = 5.0\n\
         [[lemma]]\nid = \"row-gram\"\nm = 256\nn = 512\ns = 4\n\
         [[lemma]]\nid = \"tangent-contraction\"\nn = 240\nr = 1\nrho0 = 0.5\ntrials = 40\n",
    );
    let rows = run_lemma_frequencies(&cfg).unwrap();
    assert_eq!(rows[0].trials, 200);
    assert_eq!(rows[0].rate(), 1.0);
    assert!(rows[1].rate() >= 0.95, "{}", rows[1].rate());
    assert_eq!(rows[2].trials, 40);
    assert!(rows[2].rate() >= 0.95, "{}", rows[2].rate());
}

#[test]
fn lemma_params_are_validated() {
    let text = "kind = \"lemmas\"\nseed = 1\n[[lemma]]\nid = \"row-gram\"\nm = 10\nn = 5\ns = 6\n";
    assert!(parse_config(text, Path::new("l.toml")).is_err());
    let text = "kind = \"lemmas\"\nseed = 1\n[[lemma]]\nid = \"row-grm\"\nm = 10\nn = 5\ns = 2\n";
    assert!(parse_config(text, Path::new("l.toml")).is_err());
}

#[test]
fn equivalence_without_corruption_is_trivial() {
    let rep = run_model_equivalence(50, 0.3, 0.0, 2, 1).unwrap();
    assert_eq!(rep.direct[2], 0);
    assert_eq!(rep.auxiliary[2], 0);
    assert_eq!(rep.z[2], 0.0);
    assert!(rep.passed);
}

#[test]
fn equivalence_at_moderate_size() {
    let rep = run_model_equivalence(200, 0.3, 0.1, 1, 77).unwrap();
    assert!(rep.passed, "{:?}", rep.z);
    assert_eq!(rep.direct.iter().sum::<u64>(), 40_000);
}

#[test]
fn corruption_frequency_matches_rho_s() {
    let k = random_sign_matrix(200, 3);
    for seed in 0..3 {
        let d = sample_direct_masks(200, 0.3, 0.1, &k, CorruptionMagnitudes::Unit, seed).unwrap();
        let a = sample_auxiliary_masks(200, 0.3, 0.1, &k, CorruptionMagnitudes::Unit, seed + 10).unwrap();
        for omega in [&d.omega, &a.omega] {
            let freq = omega.len() as f64 / 40_000.0;
            assert!((freq - 0.03).abs() <= 0.005, "{freq}");
        }
    }
}
