//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runtime budgets are part of each criterion.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use demix::bench::{
    make_instance, median_error, min_successful_n, run_experiment_with, run_solver, DesignKind,
    ExperimentSpec, SolverId, StepRule,
};
use demix::model::{LinkFunction, NoiseSpec};
use demix::operators::{make_basis, BasisKind};
use demix::par::Exec;
use demix::seeding::rng;
use demix::selfcheck::{brute_force_project, gradient_fd_error};
use demix::solvers::contraction_factor;
use demix::sparsity::{block_project, incoherence_estimate, incoherence_exact_single};
use demix::vecops::gaussian_vec;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, budget: Duration) -> bool {
    elapsed < budget
}

fn projection_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(0xC1);
    let (mut configs, mut mismatches) = (0usize, 0usize);
    for p in 1..=12usize {
        for b in 1..=3usize {
            if p % b != 0 {
                continue;
            }
            for blocks in 1..=3usize.min(p / b) {
                let s = blocks * b;
                configs += 1;
                for _ in 0..200 {
                    let v = gaussian_vec(&mut r, p);
                    let got = block_project(&v, s, b).expect("valid budget");
                    let (want_blocks, want_values) = brute_force_project(&v, s, b);
                    let same_values = got
                        .values()
                        .iter()
                        .zip(&want_values)
                        .all(|(a, b)| a.to_bits() == b.to_bits());
                    if got.pattern().active_blocks() != want_blocks.as_slice() || !same_values {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && within(elapsed, Duration::from_secs(5)),
        format!("{configs} (p,b,s) configs x 200 vectors, {mismatches} mismatches, {elapsed:.2?}"),
    )
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let id = gradient_fd_error(LinkFunction::Identity, 32, 48, 100, 0xC2).expect("instance");
    let sg = gradient_fd_error(LinkFunction::ShiftedSigmoid, 32, 48, 100, 0xC2).expect("instance");
    let elapsed = start.elapsed();
    outcome(
        id < 1e-5 && sg < 1e-5 && within(elapsed, Duration::from_secs(10)),
        format!("max relative error identity {id:.2e}, sigmoid {sg:.2e}, {elapsed:.2?}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn linear_convergence() -> Outcome {
    let start = Instant::now();
    let mut spec = ExperimentSpec::desk_scale();
    spec.p = 256;
    spec.b = 4;
    spec.s = 16;
    spec.link = LinkFunction::Identity;
    spec.design = DesignKind::Orthogonal;
    spec.sample_grid = vec![256];
    spec.step_size = StepRule::Fixed(1.0);
    spec.stop_tol = 0.0;
    spec.max_iters = 200;
    spec.master_seed = 3;
    let basis = spec.basis().expect("basis");
    // Errors at or below this level are dominated by rounding, so their
    // ratios say nothing about the iteration map.
    const FLOOR: f64 = 1e-13;
    let (mut ratios, mut converged) = (Vec::new(), 0usize);
    for trial in 0..20 {
        let inst = make_instance(&spec, &basis, 256, trial).expect("instance");
        let est = run_solver(&spec, SolverId::StructDht, &inst, true).expect("solve");
        let trace = est.trace.expect("trace");
        let errs = trace.errors();
        if errs.last().is_some_and(|&e| e < 1e-8) {
            converged += 1;
        }
        // First iteration after which both supports never change again.
        let recs = &trace.records;
        let last = recs.last().expect("non-empty trace");
        let stable = recs
            .iter()
            .rposition(|r| (r.support1, r.support2) != (last.support1, last.support2))
            .map_or(0, |i| i + 1);
        let inst_ratios: Vec<f64> = errs[stable..]
            .windows(2)
            .filter(|w| w[0] > FLOOR && w[1] > FLOOR)
            .map(|w| w[1] / w[0])
            .collect();
        // Reaching the floor in a single step is a ratio of (at most) 0.
        ratios.push(if inst_ratios.is_empty() { 0.0 } else { median(inst_ratios) });
    }
    let med = median(ratios);
    let elapsed = start.elapsed();
    outcome(
        med < 1.0 && converged >= 18 && within(elapsed, Duration::from_secs(60)),
        format!("median contraction ratio {med:.3e}, {converged}/20 reached error < 1e-8, {elapsed:.2?}"),
    )
}

fn contraction_arithmetic() -> Outcome {
    let rho = |eta, m, big_m| contraction_factor(eta, m, big_m).expect("valid constants").rho;
    let a = rho(1.0, 1.0, 1.0);
    let b = rho(0.8, 1.0, 1.0);
    // At M/m = 2/sqrt(3) the optimal step m/M^2 gives rho = 2 sqrt(1 - m^2/M^2) = 1.
    let big_m = 2.0 / 3f64.sqrt();
    let c = rho(1.0 / (big_m * big_m), 1.0, big_m);
    outcome(
        a.abs() <= 1e-12 && (b - 0.4).abs() <= 1e-12 && (c - 1.0).abs() <= 1e-12,
        format!("rho(1,1,1)={a:e}, rho(0.8,1,1)={b}, boundary rho={c}"),
    )
}

fn noise_floor_scaling() -> Outcome {
    let start = Instant::now();
    let mut medians = Vec::new();
    for sigma in [0.05, 0.1] {
        let mut spec = ExperimentSpec::desk_scale();
        spec.p = 512;
        spec.b = 4;
        spec.s = 32;
        spec.link = LinkFunction::Identity;
        spec.design = DesignKind::Gaussian;
        spec.sample_grid = vec![400];
        spec.trials = 20;
        spec.noise = NoiseSpec::gaussian(sigma).expect("sigma");
        spec.solvers = vec![SolverId::StructDht];
        spec.master_seed = 5;
        spec.step_size = StepRule::Spectral;
        let results = run_experiment_with(&spec, Exec::Parallel).expect("experiment");
        medians.push(median_error(&results, SolverId::StructDht, 400).expect("results"));
    }
    let ratio = medians[1] / medians[0];
    let elapsed = start.elapsed();
    outcome(
        (1.3..=3.0).contains(&ratio) && within(elapsed, Duration::from_secs(120)),
        format!(
            "median error sigma=0.05 {:.3e}, sigma=0.1 {:.3e}, ratio {ratio:.3}, {elapsed:.2?}",
            medians[0], medians[1]
        ),
    )
}

fn fmt_n(n: Option<usize>) -> String {
    n.map_or_else(|| "none".to_string(), |v| v.to_string())
}

/// Minimal n, with "never reached" ordered above every grid value.
fn rank(n: Option<usize>, grid: &[usize]) -> usize {
    n.and_then(|v| grid.iter().position(|&g| g == v)).unwrap_or(grid.len())
}

struct PhaseRuns {
    desk: Option<usize>,
    desk_line: Outcome,
    struct_min: Vec<(usize, Option<usize>)>,
    elapsed: Duration,
}

fn phase_runs() -> PhaseRuns {
    let start = Instant::now();
    let spec = ExperimentSpec::desk_scale();
    let results = run_experiment_with(&spec, Exec::Parallel).expect("desk experiment");
    let grid = &spec.sample_grid;
    let min_n = |solver| {
        min_successful_n(&results, solver, grid, spec.success_threshold, 0.9).expect("results")
    };
    let (sd, dht, dst) = (min_n(SolverId::StructDht), min_n(SolverId::Dht), min_n(SolverId::Dst));
    let desk_elapsed = start.elapsed();
    // dht's minimal n may exceed dst's by at most one grid position.
    let passed = rank(sd, grid) < rank(dht, grid)
        && rank(dht, grid) <= rank(dst, grid) + 1
        && within(desk_elapsed, Duration::from_secs(15 * 60));
    let desk_line = outcome(
        passed,
        format!(
            "minimal n for 0.9 success: struct-dht {}, dht {}, dst {} (none = not reached on {:?}), {desk_elapsed:.2?}",
            fmt_n(sd),
            fmt_n(dht),
            fmt_n(dst),
            grid
        ),
    );

    let mut struct_min = Vec::new();
    for s in [16usize, 32] {
        let mut spec = ExperimentSpec::desk_scale();
        spec.s = s;
        spec.sample_grid = demix::bench::default_sample_grid(s);
        spec.solvers = vec![SolverId::StructDht];
        let results = run_experiment_with(&spec, Exec::Parallel).expect("experiment");
        let n = min_successful_n(&results, SolverId::StructDht, &spec.sample_grid, spec.success_threshold, 0.9)
            .expect("results");
        struct_min.push((s, n));
    }
    struct_min.push((64, sd));
    PhaseRuns {
        desk: sd,
        desk_line,
        struct_min,
        elapsed: start.elapsed(),
    }
}

fn sample_complexity_trend(runs: &PhaseRuns) -> Outcome {
    let mins: Vec<Option<usize>> = runs.struct_min.iter().map(|&(_, n)| n).collect();
    let ratios: Option<Vec<f64>> = mins
        .windows(2)
        .map(|w| Some(w[1]? as f64 / w[0]? as f64))
        .collect();
    let passed = ratios.as_ref().is_some_and(|r| r.iter().all(|&x| x <= 2.5));
    debug_assert_eq!(runs.struct_min.last().map(|&(_, n)| n), Some(runs.desk));
    let listing: Vec<String> = runs
        .struct_min
        .iter()
        .map(|&(s, n)| format!("s={s}: {}", fmt_n(n)))
        .collect();
    outcome(
        passed,
        format!(
            "struct-dht minimal n {}, successive ratios {:?}, {:.2?} total",
            listing.join(", "),
            ratios.unwrap_or_default(),
            runs.elapsed
        ),
    )
}

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn phase_csv(out: &PathBuf, threads: &str) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_demix"))
        .args(["phase", "--config"])
        .arg(config_dir().join("smoke.cfg"))
        .args(["--override", "trials=2", "--threads", threads, "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("phase exited with {}", status.status));
    }
    std::fs::read(out.join("results.csv")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let base = std::env::temp_dir().join(format!("demix-acceptance-{}", std::process::id()));
    let runs: Result<Vec<Vec<u8>>, String> = [("a", "1"), ("b", "1"), ("c", "8")]
        .iter()
        .map(|(dir, threads)| phase_csv(&base.join(dir), threads))
        .collect();
    let _ = std::fs::remove_dir_all(&base);
    match runs {
        Ok(r) => outcome(
            r[0] == r[1] && r[0] == r[2],
            format!(
                "results.csv {} bytes; run1==run2: {}, threads1==threads8: {}",
                r[0].len(),
                r[0] == r[1],
                r[0] == r[2]
            ),
        ),
        Err(e) => outcome(false, e),
    }
}

fn incoherence_probe() -> Outcome {
    let dct64 = make_basis(BasisKind::Dct, 64, 0).expect("basis");
    let same = incoherence_estimate(&dct64, &dct64, 4, 100, 0xC9).expect("estimate");
    let id16 = make_basis(BasisKind::Identity, 16, 0).expect("basis");
    let dct16 = make_basis(BasisKind::Dct, 16, 0).expect("basis");
    let exact = incoherence_exact_single(&id16, &dct16).expect("exact");
    let est = incoherence_estimate(&id16, &dct16, 1, 1000, 0xC9).expect("estimate");
    outcome(
        same >= 1.0 - 1e-9 && est >= 0.5 * exact && est <= exact,
        format!("identical bases {same}; identity/dct p=16 s=1: estimate {est}, exact {exact}"),
    )
}

fn main() -> ExitCode {
    let mut failures = 0usize;
    let mut report = |id: u32, name: &str, o: Outcome| {
        let status = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failures += 1;
        }
        println!("criterion {id} [{status}] {name}: {}", o.detail);
    };
    report(1, "projection matches exhaustive search", projection_oracle());
    report(2, "gradient matches central differences", gradient_correctness());
    report(3, "linear convergence on well-conditioned instances", linear_convergence());
    report(4, "contraction-factor arithmetic", contraction_arithmetic());
    report(5, "noise-floor scaling with sigma", noise_floor_scaling());
    let runs = phase_runs();
    let trend = sample_complexity_trend(&runs);
    report(6, "struct-dht needs fewer samples than dht at desk scale", runs.desk_line);
    report(7, "minimal successful n grows subquadratically in s", trend);
    report(8, "phase CSV is byte-identical across runs and thread counts", determinism());
    report(9, "incoherence probe bounds", incoherence_probe());
    println!("acceptance: {} of 9 criteria passed", 9 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
