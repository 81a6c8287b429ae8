//! Monte-Carlo phase-transition harness.
//!
//! For every `(n, trial)` cell a fresh ground truth, design, and noise draw
//! are generated from `derive_seed([master_seed, n, trial])`, and every
//! requested solver is run on the same instance. Cells are independent, so
//! they may execute in any order or in parallel; results are sorted by
//! `(solver, n, trial)` afterwards.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{invalid, DemixError, Result};
use crate::model::{generate_observations, DemixingModel, LinkFunction, NoiseKind, NoiseSpec};
use crate::operators::{
    make_gaussian_design, make_orthogonal_design, make_partial_circulant_design, BasisKind,
    LinearMap, StackedBasis,
};
use crate::par::Exec;
use crate::seeding::derive_seed;
use crate::solvers::{
    dht_solve, dst_solve, struct_dht_solve, DstMode, EstimateResult, Init, Lambda, SolverConfig,
};
use crate::sparsity::{restricted_spectrum, validate_budget, BlockSparseVector, StackedCoefficients};
use crate::vecops::{dist2, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SolverId {
    StructDht,
    Dht,
    Dst,
}

impl SolverId {
    pub const ALL: [SolverId; 3] = [SolverId::StructDht, SolverId::Dht, SolverId::Dst];

    pub fn name(self) -> &'static str {
        match self {
            Self::StructDht => "struct-dht",
            Self::Dht => "dht",
            Self::Dst => "dst",
        }
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverId {
    type Err = DemixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "struct-dht" => Ok(Self::StructDht),
            "dht" => Ok(Self::Dht),
            "dst" => Ok(Self::Dst),
            other => Err(invalid(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    Gaussian,
    Circulant,
    Orthogonal,
}

impl DesignKind {
    pub fn make(self, n: usize, p: usize, seed: u64) -> Result<LinearMap> {
        match self {
            Self::Gaussian => make_gaussian_design(n, p, seed),
            Self::Circulant => make_partial_circulant_design(n, p, seed),
            Self::Orthogonal => make_orthogonal_design(n, p, seed),
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Circulant => "circulant",
            Self::Orthogonal => "orthogonal",
        })
    }
}

impl FromStr for DesignKind {
    type Err = DemixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "circulant" => Ok(Self::Circulant),
            "orthogonal" => Ok(Self::Orthogonal),
            other => Err(invalid(format!("unknown design `{other}`"))),
        }
    }
}

/// Step-size selection for the experiment's solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `1 / sup g'`, the inverse curvature scale of the link.
    Auto,
    /// `1 / M`, with `M` the largest restricted-Hessian eigenvalue at zero
    /// found by probing random block supports of each instance.
    Spectral,
    Fixed(f64),
}

/// Probe supports used by [`StepRule::Spectral`].
pub const SPECTRAL_PROBES: usize = 8;

impl StepRule {
    /// The step size for `model`; `seed` drives the spectral probes.
    pub fn resolve(self, model: &DemixingModel, s: usize, b: usize, seed: u64) -> Result<f64> {
        match self {
            Self::Auto => Ok(1.0 / model.link().upper_slope()),
            Self::Spectral => {
                let zero = StackedCoefficients::zeros(model.dim(), s, b)?;
                let spectrum = restricted_spectrum(model, &zero, SPECTRAL_PROBES, seed)?;
                if !(spectrum.upper > 0.0 && spectrum.upper.is_finite()) {
                    return Err(invalid(format!(
                        "restricted smoothness probe returned {}",
                        spectrum.upper
                    )));
                }
                Ok(1.0 / spectrum.upper)
            }
            Self::Fixed(v) => Ok(v),
        }
    }
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Spectral => f.write_str("spectral"),
            Self::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for StepRule {
    type Err = DemixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => return Ok(Self::Auto),
            "spectral" => return Ok(Self::Spectral),
            _ => {}
        }
        s.parse::<f64>()
            .map(Self::Fixed)
            .map_err(|e| invalid(format!("step size `{s}`: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Zero,
    Random,
}

impl FromStr for InitKind {
    type Err = DemixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "random" => Ok(Self::Random),
            other => Err(invalid(format!("unknown init `{other}`"))),
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Zero => "zero",
            Self::Random => "random",
        })
    }
}

/// `count` log-spaced sample counts from `2s` to `16s`.
pub fn log_spaced_grid(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count <= 1 || hi <= lo {
        return vec![lo.max(1)];
    }
    let ratio = (hi as f64 / lo as f64).powf(1.0 / (count - 1) as f64);
    let mut grid: Vec<usize> = (0..count)
        .map(|i| (lo as f64 * ratio.powi(i as i32)).round() as usize)
        .collect();
    grid.dedup();
    grid
}

pub fn default_sample_grid(s: usize) -> Vec<usize> {
    log_spaced_grid(2 * s.max(1), 16 * s.max(1), 8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub p: usize,
    pub b: usize,
    pub s: usize,
    pub sample_grid: Vec<usize>,
    pub trials: usize,
    pub link: LinkFunction,
    pub design: DesignKind,
    pub phi: BasisKind,
    pub psi: BasisKind,
    pub noise: NoiseSpec,
    pub solvers: Vec<SolverId>,
    pub success_threshold: f64,
    pub master_seed: u64,
    pub step_size: StepRule,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub init: InitKind,
    pub dst_mode: DstMode,
    pub dst_lambda: Lambda,
    /// When false the `ms` column is written as 0 so that result files are
    /// byte-reproducible.
    pub record_wall_time: bool,
    /// Sample count for single solves.
    pub n: Option<usize>,
    /// Solver for single solves.
    pub solver: SolverId,
}

fn key_err(key: &str, message: impl Into<String>) -> DemixError {
    DemixError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

impl ExperimentSpec {
    /// Desk-scale replica of the block-sparse demixing experiment.
    pub fn desk_scale() -> Self {
        Self {
            p: 1024,
            b: 8,
            s: 64,
            sample_grid: default_sample_grid(64),
            trials: 10,
            link: LinkFunction::ShiftedSigmoid,
            design: DesignKind::Gaussian,
            phi: BasisKind::Identity,
            psi: BasisKind::Dct,
            noise: NoiseSpec::none(),
            solvers: SolverId::ALL.to_vec(),
            success_threshold: 0.05,
            master_seed: 0,
            step_size: StepRule::Auto,
            max_iters: 500,
            stop_tol: 1e-9,
            init: InitKind::Zero,
            dst_mode: DstMode::Entrywise,
            dst_lambda: Lambda::Auto,
            record_wall_time: false,
            n: None,
            solver: SolverId::StructDht,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("p", self.p), ("b", self.b)] {
            if v == 0 {
                return Err(key_err(key, "must be positive"));
            }
        }
        if self.p % self.b != 0 {
            return Err(key_err("b", format!("block length {} must divide p = {}", self.b, self.p)));
        }
        if let Err(e) = validate_budget(self.p, self.s, self.b) {
            let key = "s";
            return Err(key_err(key, e.to_string()));
        }
        if self.s == 0 {
            return Err(key_err("s", "must be positive"));
        }
        if self.sample_grid.is_empty() || self.sample_grid.contains(&0) {
            return Err(key_err("sample_grid", "must be a non-empty list of positive counts"));
        }
        if self.sample_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(key_err("sample_grid", "must be strictly increasing"));
        }
        if self.trials == 0 {
            return Err(key_err("trials", "must be at least 1"));
        }
        if !(self.success_threshold > 0.0) {
            return Err(key_err("success_threshold", "must be > 0"));
        }
        if self.solvers.is_empty() {
            return Err(key_err("solvers", "at least one solver is required"));
        }
        if let StepRule::Fixed(v) = self.step_size {
            if !(v > 0.0 && v.is_finite()) {
                return Err(key_err("step_size", "must be positive"));
            }
        }
        if self.max_iters == 0 {
            return Err(key_err("max_iters", "must be at least 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(key_err("stop_tol", "must be >= 0"));
        }
        if let Lambda::Fixed(l) = self.dst_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(key_err("dst.lambda", "must be >= 0"));
            }
        }
        if matches!(self.design, DesignKind::Circulant | DesignKind::Orthogonal) {
            let too_big = self.sample_grid.iter().chain(self.n.iter()).any(|&n| n > self.p);
            if too_big {
                return Err(key_err("design", format!("{} design needs n <= p", self.design)));
            }
        }
        if self.n == Some(0) {
            return Err(key_err("n", "must be positive"));
        }
        Ok(())
    }


    /// The resolved spec in config-file syntax, with provenance comments.
    pub fn to_config_string(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let solvers = self.solvers.iter().map(|s| s.name()).collect::<Vec<_>>().join(",");
        let noise_kind = match self.noise.kind() {
            NoiseKind::None => "none",
            NoiseKind::Gaussian => "gaussian",
        };
        let mut out = String::new();
        out.push_str("# resolved experiment configuration\n");
        out.push_str("# ground truth: uniform random active blocks, standard normal block values, each component scaled to unit l2 norm\n");
        out.push_str(&match self.step_size {
            StepRule::Auto => format!("# step_size = auto resolves to 1/sup g' = {}\n", 1.0 / self.link.upper_slope()),
            StepRule::Spectral => "# step_size = spectral means 1/(largest restricted Hessian eigenvalue at 0), probed per instance\n".to_string(),
            StepRule::Fixed(_) => String::new(),
        });
        out.push_str("# dst.lambda = auto means 0.1*|grad F(0)|_inf, divided by 10 every max_iters/5 iterations\n");
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("p", self.p.to_string());
        kv("b", self.b.to_string());
        kv("s", self.s.to_string());
        kv("sample_grid", list(&self.sample_grid));
        kv("trials", self.trials.to_string());
        kv("link", self.link.to_string());
        kv("design", self.design.to_string());
        kv("basis.phi", self.phi.to_string());
        kv("basis.psi", self.psi.to_string());
        kv("noise.kind", noise_kind.to_string());
        kv("noise.sigma", self.noise.sigma().to_string());
        kv("solvers", solvers);
        kv("success_threshold", self.success_threshold.to_string());
        kv("master_seed", self.master_seed.to_string());
        kv("step_size", self.step_size.to_string());
        kv("max_iters", self.max_iters.to_string());
        kv("stop_tol", self.stop_tol.to_string());
        kv("init", self.init.to_string());
        kv("dst.mode", self.dst_mode.to_string());
        kv("dst.lambda", self.dst_lambda.to_string());
        kv("record_wall_time", self.record_wall_time.to_string());
        if let Some(n) = self.n {
            kv("n", n.to_string());
        }
        kv("solver", self.solver.to_string());
        out
    }

    pub fn basis(&self) -> Result<StackedBasis> {
        StackedBasis::from_kinds(self.phi, self.psi, self.p, derive_seed(&[self.master_seed, 0xBA51]))
    }

    fn solver_config(&self, inst: &Instance) -> Result<SolverConfig> {
        let init_seed = inst.init_seed;
        let step_size = self
            .step_size
            .resolve(&inst.model, self.s, self.b, derive_seed(&[init_seed, 0x57E9]))?;
        Ok(SolverConfig {
            step_size,
            max_iters: self.max_iters,
            sparsity: self.s,
            block: self.b,
            init: match self.init {
                InitKind::Zero => Init::Zero,
                InitKind::Random => Init::Random(init_seed),
            },
            stop_tol: self.stop_tol,
            record_trace: false,
        })
    }
}

/// One synthetic problem with its ground truth.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: DemixingModel,
    pub theta1: BlockSparseVector,
    pub theta2: BlockSparseVector,
    pub beta: Vec<f64>,
    pub init_seed: u64,
}

impl Instance {
    pub fn stacked_truth(&self) -> Vec<f64> {
        let mut t = self.theta1.values().to_vec();
        t.extend_from_slice(self.theta2.values());
        t
    }
}

pub fn trial_seed(master_seed: u64, n: usize, trial: usize) -> u64 {
    derive_seed(&[master_seed, n as u64, trial as u64])
}

/// Draws the instance for cell `(n, trial)`.
pub fn make_instance(spec: &ExperimentSpec, basis: &StackedBasis, n: usize, trial: usize) -> Result<Instance> {
    let seed = trial_seed(spec.master_seed, n, trial);
    let theta1 = BlockSparseVector::random_unit(spec.p, spec.b, spec.s, derive_seed(&[seed, 1]))?;
    let theta2 = BlockSparseVector::random_unit(spec.p, spec.b, spec.s, derive_seed(&[seed, 2]))?;
    let design = spec.design.make(n, spec.p, derive_seed(&[seed, 3]))?;
    let y = generate_observations(
        &design,
        basis,
        &theta1,
        &theta2,
        spec.link,
        spec.noise,
        derive_seed(&[seed, 4]),
    )?;
    let mut t = theta1.values().to_vec();
    t.extend_from_slice(theta2.values());
    let beta = basis.apply_stacked(&t)?;
    Ok(Instance {
        model: DemixingModel::new(design, basis.clone(), spec.link, y)?,
        theta1,
        theta2,
        beta,
        init_seed: derive_seed(&[seed, 5]),
    })
}

/// Runs one solver on an instance with the spec's settings.
pub fn run_solver(
    spec: &ExperimentSpec,
    solver: SolverId,
    inst: &Instance,
    record_trace: bool,
) -> Result<EstimateResult> {
    let mut cfg = spec.solver_config(inst)?;
    cfg.record_trace = record_trace;
    let truth = inst.stacked_truth();
    let truth = record_trace.then_some(truth.as_slice());
    match solver {
        SolverId::StructDht => struct_dht_solve(&inst.model, &cfg, truth),
        SolverId::Dht => dht_solve(&inst.model, &cfg, truth),
        SolverId::Dst => dst_solve(&inst.model, &cfg, spec.dst_lambda, spec.dst_mode, truth),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub solver: SolverId,
    pub n: usize,
    pub trial: usize,
    /// `|beta_hat - beta| / |beta|`; `+inf` for diverged runs.
    pub normalized_error: f64,
    pub err_theta1: f64,
    pub err_theta2: f64,
    pub iterations: usize,
    pub wall_ms: f64,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        !self.normalized_error.is_finite()
    }
}

/// Runs all requested solvers on cell `(n, trial)`.
pub fn run_trial(spec: &ExperimentSpec, basis: &StackedBasis, n: usize, trial: usize) -> Result<Vec<TrialResult>> {
    let inst = make_instance(spec, basis, n, trial)?;
    let beta_norm = norm2(&inst.beta);
    let mut out = Vec::with_capacity(spec.solvers.len());
    for &solver in &spec.solvers {
        let start = Instant::now();
        let outcome = run_solver(spec, solver, &inst, false);
        let wall_ms = if spec.record_wall_time {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        let result = match outcome {
            Ok(est) => TrialResult {
                solver,
                n,
                trial,
                normalized_error: dist2(&est.beta_hat, &inst.beta) / beta_norm,
                err_theta1: dist2(est.theta1_hat.values(), inst.theta1.values()),
                err_theta2: dist2(est.theta2_hat.values(), inst.theta2.values()),
                iterations: est.iterations_used,
                wall_ms,
            },
            Err(DemixError::Diverged { iteration, .. }) => TrialResult {
                solver,
                n,
                trial,
                normalized_error: f64::INFINITY,
                err_theta1: f64::INFINITY,
                err_theta2: f64::INFINITY,
                iterations: iteration,
                wall_ms,
            },
            Err(e) => return Err(e),
        };
        out.push(result);
    }
    Ok(out)
}

pub fn sort_results(results: &mut [TrialResult]) {
    results.sort_by(|a, b| (a.solver, a.n, a.trial).cmp(&(b.solver, b.n, b.trial)));
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TrialResult>> {
    run_experiment_with(spec, Exec::Parallel)
}

pub fn run_experiment_with(spec: &ExperimentSpec, exec: Exec) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    let basis = spec.basis()?;
    let cells: Vec<(usize, usize)> = spec
        .sample_grid
        .iter()
        .flat_map(|&n| (0..spec.trials).map(move |t| (n, t)))
        .collect();
    let per_cell = exec.map_indexed(cells.len(), |i| {
        let (n, trial) = cells[i];
        run_trial(spec, &basis, n, trial)
    });
    let mut results = Vec::with_capacity(cells.len() * spec.solvers.len());
    for r in per_cell {
        results.extend(r?);
    }
    sort_results(&mut results);
    Ok(results)
}

/// Fraction of `(solver, n)` trials with normalized error below `threshold`.
pub fn success_probability(results: &[TrialResult], solver: SolverId, n: usize, threshold: f64) -> Result<f64> {
    let sel: Vec<&TrialResult> = results.iter().filter(|r| r.solver == solver && r.n == n).collect();
    if sel.is_empty() {
        return Err(invalid(format!("no results for solver {solver} at n={n}")));
    }
    let ok = sel.iter().filter(|r| r.normalized_error < threshold).count();
    Ok(ok as f64 / sel.len() as f64)
}

/// Median normalized error of the `(solver, n)` trials.
pub fn median_error(results: &[TrialResult], solver: SolverId, n: usize) -> Result<f64> {
    let mut v: Vec<f64> = results
        .iter()
        .filter(|r| r.solver == solver && r.n == n)
        .map(|r| r.normalized_error)
        .collect();
    if v.is_empty() {
        return Err(invalid(format!("no results for solver {solver} at n={n}")));
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    Ok(if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    })
}

/// Smallest grid value whose success probability reaches `level`.
pub fn min_successful_n(
    results: &[TrialResult],
    solver: SolverId,
    grid: &[usize],
    threshold: f64,
    level: f64,
) -> Result<Option<usize>> {
    for &n in grid {
        if success_probability(results, solver, n, threshold)? >= level {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

pub const CSV_HEADER: &str = "solver,n,trial,norm_error,err_theta1,err_theta2,iters,ms";

pub fn results_csv(results: &[TrialResult]) -> String {
    let mut out = String::with_capacity(64 * (results.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.solver, r.n, r.trial, r.normalized_error, r.err_theta1, r.err_theta2, r.iterations, r.wall_ms
        ));
    }
    out
}

pub fn emit_csv(results: &[TrialResult], path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(invalid("no results to write"));
    }
    let mut f = std::fs::File::create(path).map_err(|e| DemixError::io(path, e))?;
    f.write_all(results_csv(results).as_bytes())
        .map_err(|e| DemixError::io(path, e))
}
