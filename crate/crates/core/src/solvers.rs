//! Iterative solvers for the demixing loss.
//!
//! [`struct_dht_solve`] alternates a gradient step on the loss with the
//! stacked block hard-thresholding projection. [`dht_solve`] is the same
//! iteration with unit blocks, and [`dst_solve`] is a proximal-gradient
//! (soft-thresholding) baseline.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, DemixError, Result};
use crate::model::{DemixingModel, LossEval};
use crate::seeding::rng;
use crate::sparsity::{
    block_project, stacked_block_project, validate_budget, BlockSparseVector, StackedCoefficients,
};
use crate::vecops::{all_finite, dist2, gaussian_vec, norm2};

/// A run is declared divergent once `F(t^k) - F(t^0)` exceeds this multiple
/// of `1 + |F(t^0)|`. Bounded links (sigmoid) never overflow, so a
/// non-finite check alone cannot catch an oversized step.
pub const DIVERGENCE_RATIO: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zero,
    /// Gaussian draw projected onto the constraint set.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub sparsity: usize,
    pub block: usize,
    pub init: Init,
    /// Stop once `|t^{k+1} - t^k| <= stop_tol * (1 + |t^k|)`.
    pub stop_tol: f64,
    pub record_trace: bool,
}

impl SolverConfig {
    pub fn new(step_size: f64, max_iters: usize, sparsity: usize, block: usize) -> Self {
        Self {
            step_size,
            max_iters,
            sparsity,
            block,
            init: Init::Zero,
            stop_tol: 1e-9,
            record_trace: false,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(invalid("stop_tol must be >= 0"));
        }
        validate_budget(p, self.sparsity, self.block)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub loss: f64,
    /// `|t^k - theta|_2`, present when the true coefficients were supplied.
    pub error: Option<f64>,
    pub support1: u64,
    pub support2: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub const CSV_HEADER: &'static str = "iter,loss,error,support1,support2";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let err = r.error.map(|e| e.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iter, r.loss, err, r.support1, r.support2
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| DemixError::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| DemixError::io(path, e))
    }

    /// Errors of the recorded iterates, when available.
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.error).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub theta1_hat: BlockSparseVector,
    pub theta2_hat: BlockSparseVector,
    pub beta_hat: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub trace: Option<SolverTrace>,
}

impl EstimateResult {
    pub fn stacked(&self) -> Vec<f64> {
        let mut t = self.theta1_hat.values().to_vec();
        t.extend_from_slice(self.theta2_hat.values());
        t
    }
}

struct Recorder<'a> {
    trace: Option<SolverTrace>,
    truth: Option<&'a [f64]>,
}

impl Recorder<'_> {
    fn push(&mut self, iter: usize, loss: f64, t: &[f64], hashes: (u64, u64)) {
        if let Some(trace) = &mut self.trace {
            trace.records.push(TraceRecord {
                iter,
                loss,
                error: self.truth.map(|th| dist2(t, th)),
                support1: hashes.0,
                support2: hashes.1,
            });
        }
    }
}

fn support_hashes(t: &StackedCoefficients) -> (u64, u64) {
    (
        t.first().pattern().support_hash(),
        t.second().pattern().support_hash(),
    )
}

fn checked_eval(model: &DemixingModel, t: &[f64], iteration: usize, base: Option<f64>) -> Result<LossEval> {
    let diverged = |reason: String| DemixError::Diverged { iteration, reason };
    if !all_finite(t) {
        return Err(diverged("non-finite iterate".into()));
    }
    let eval = model.evaluate(t)?;
    if !eval.loss.is_finite() {
        return Err(diverged(format!("non-finite loss {}", eval.loss)));
    }
    if !all_finite(&eval.gradient) {
        return Err(diverged("non-finite gradient".into()));
    }
    if let Some(f0) = base {
        if eval.loss - f0 > DIVERGENCE_RATIO * (1.0 + f0.abs()) {
            return Err(diverged(format!(
                "loss grew from {f0} to {}",
                eval.loss
            )));
        }
    }
    Ok(eval)
}

fn check_truth(truth: Option<&[f64]>, p: usize) -> Result<()> {
    match truth {
        Some(th) if th.len() != 2 * p => Err(invalid(format!(
            "true coefficients must have length {}, got {}",
            2 * p,
            th.len()
        ))),
        _ => Ok(()),
    }
}

fn initial_point(config: &SolverConfig, p: usize) -> Result<StackedCoefficients> {
    match config.init {
        Init::Zero => StackedCoefficients::zeros(p, config.sparsity, config.block),
        Init::Random(seed) => {
            let draw = gaussian_vec(&mut rng(seed), 2 * p);
            stacked_block_project(&draw, config.sparsity, config.block)
        }
    }
}

fn finish(
    model: &DemixingModel,
    t: StackedCoefficients,
    iterations_used: usize,
    converged: bool,
    trace: Option<SolverTrace>,
) -> Result<EstimateResult> {
    let beta_hat = model.basis().apply_stacked(&t.to_vec())?;
    let (theta1_hat, theta2_hat) = t.into_halves();
    Ok(EstimateResult {
        theta1_hat,
        theta2_hat,
        beta_hat,
        iterations_used,
        converged,
        trace,
    })
}

/// Block hard-thresholded gradient descent on the demixing loss.
///
/// Each iteration takes `t~ = t - eta grad F(t)` and projects each half of
/// `t~` onto the `(s, b)` block-sparse set. The true stacked coefficients, if
/// given, are only used to fill in the trace's error column.
pub fn struct_dht_solve(
    model: &DemixingModel,
    config: &SolverConfig,
    true_theta: Option<&[f64]>,
) -> Result<EstimateResult> {
    let p = model.dim();
    config.validate(p)?;
    check_truth(true_theta, p)?;
    let (s, b, eta) = (config.sparsity, config.block, config.step_size);

    let mut rec = Recorder {
        trace: config.record_trace.then(SolverTrace::default),
        truth: true_theta,
    };
    let mut t = initial_point(config, p)?;
    let mut tv = t.to_vec();
    let mut eval = checked_eval(model, &tv, 0, None)?;
    let f0 = eval.loss;
    rec.push(0, eval.loss, &tv, support_hashes(&t));

    let mut iterations_used = 0;
    let mut converged = false;
    for k in 1..=config.max_iters {
        let stepped: Vec<f64> = tv
            .iter()
            .zip(&eval.gradient)
            .map(|(ti, gi)| ti - eta * gi)
            .collect();
        t = stacked_block_project(&stepped, s, b)?;
        let next = t.to_vec();
        let displacement = dist2(&next, &tv);
        let scale = 1.0 + norm2(&tv);
        tv = next;
        eval = checked_eval(model, &tv, k, Some(f0))?;
        rec.push(k, eval.loss, &tv, support_hashes(&t));
        iterations_used = k;
        if displacement <= config.stop_tol * scale {
            converged = true;
            break;
        }
    }
    finish(model, t, iterations_used, converged, rec.trace)
}

/// Unstructured hard thresholding: [`struct_dht_solve`] with unit blocks.
pub fn dht_solve(
    model: &DemixingModel,
    config: &SolverConfig,
    true_theta: Option<&[f64]>,
) -> Result<EstimateResult> {
    let config = SolverConfig {
        block: 1,
        ..config.clone()
    };
    struct_dht_solve(model, &config, true_theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DstMode {
    Entrywise,
    Group,
}

impl FromStr for DstMode {
    type Err = DemixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entrywise" => Ok(Self::Entrywise),
            "group" => Ok(Self::Group),
            other => Err(invalid(format!("unknown DST mode `{other}`"))),
        }
    }
}

impl fmt::Display for DstMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Entrywise => "entrywise",
            Self::Group => "group",
        })
    }
}

/// Regularization weight for [`dst_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    /// `0.1 |grad F(0)|_inf`, divided by 10 every `N/5` iterations (four
    /// decreases in total).
    Auto,
    Fixed(f64),
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Fixed(v) => write!(f, "{v}"),
        }
    }
}

pub const LAMBDA_AUTO_FRACTION: f64 = 0.1;
pub const CONTINUATION_STAGES: usize = 5;

/// Entrywise soft threshold.
pub fn soft_threshold(v: &[f64], tau: f64) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            if x > tau {
                x - tau
            } else if x < -tau {
                x + tau
            } else {
                0.0
            }
        })
        .collect()
}

/// Blockwise shrinkage `block * max(0, 1 - tau / |block|)`.
pub fn group_soft_threshold(v: &[f64], b: usize, tau: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    for block in v.chunks(b) {
        let nrm = norm2(block);
        let scale = if nrm > 0.0 { (1.0 - tau / nrm).max(0.0) } else { 0.0 };
        out.extend(block.iter().map(|x| x * scale));
    }
    out
}

/// Proximal gradient with soft thresholding. The final iterate is
/// hard-truncated onto the `(s, b)` set so its error is comparable with the
/// hard-thresholding solvers.
pub fn dst_solve(
    model: &DemixingModel,
    config: &SolverConfig,
    lambda: Lambda,
    mode: DstMode,
    true_theta: Option<&[f64]>,
) -> Result<EstimateResult> {
    let p = model.dim();
    config.validate(p)?;
    check_truth(true_theta, p)?;
    let (s, b, eta) = (config.sparsity, config.block, config.step_size);

    let (lambda0, continuation) = match lambda {
        Lambda::Fixed(l) if l >= 0.0 && l.is_finite() => (l, false),
        Lambda::Fixed(l) => return Err(invalid(format!("lambda must be >= 0, got {l}"))),
        Lambda::Auto => {
            let g0 = model.gradient(&vec![0.0; 2 * p])?;
            let inf = g0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (LAMBDA_AUTO_FRACTION * inf, true)
        }
    };
    let stage_len = (config.max_iters / CONTINUATION_STAGES).max(1);
    let lambda_at = |k: usize| {
        if continuation {
            let stage = ((k - 1) / stage_len).min(CONTINUATION_STAGES - 1);
            lambda0 * 10f64.powi(-(stage as i32))
        } else {
            lambda0
        }
    };
    let final_stage = |k: usize| !continuation || (k - 1) / stage_len >= CONTINUATION_STAGES - 1;

    let mut rec = Recorder {
        trace: config.record_trace.then(SolverTrace::default),
        truth: true_theta,
    };
    let mut tv = initial_point(config, p)?.to_vec();
    let mut eval = checked_eval(model, &tv, 0, None)?;
    let f0 = eval.loss;
    rec.push(0, eval.loss, &tv, support_hashes(&stacked_block_project(&tv, s, b)?));

    let mut iterations_used = 0;
    let mut converged = false;
    for k in 1..=config.max_iters {
        let stepped: Vec<f64> = tv
            .iter()
            .zip(&eval.gradient)
            .map(|(ti, gi)| ti - eta * gi)
            .collect();
        let tau = eta * lambda_at(k);
        let next = if tau == 0.0 {
            stepped
        } else {
            match mode {
                DstMode::Entrywise => soft_threshold(&stepped, tau),
                DstMode::Group => {
                    let mut out = group_soft_threshold(&stepped[..p], b, tau);
                    out.extend(group_soft_threshold(&stepped[p..], b, tau));
                    out
                }
            }
        };
        let displacement = dist2(&next, &tv);
        let scale = 1.0 + norm2(&tv);
        tv = next;
        eval = checked_eval(model, &tv, k, Some(f0))?;
        if rec.trace.is_some() {
            let hashes = support_hashes(&stacked_block_project(&tv, s, b)?);
            rec.push(k, eval.loss, &tv, hashes);
        }
        iterations_used = k;
        if final_stage(k) && displacement <= config.stop_tol * scale {
            converged = true;
            break;
        }
    }
    let first = block_project(&tv[..p], s, b)?;
    let second = block_project(&tv[p..], s, b)?;
    finish(
        model,
        StackedCoefficients::new(first, second)?,
        iterations_used,
        converged,
        rec.trace,
    )
}

/// Per-iteration contraction factor and step-size admissibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contraction {
    pub rho: f64,
    pub admissible: bool,
}

/// `rho = 2 sqrt(1 + eta^2 M^2 - 2 eta m)`, admissible when the condition
/// number satisfies `M/m <= 2/sqrt(3)`, the step lies in `(0.5/M, 1.5/m)`,
/// and `rho < 1`.
pub fn contraction_factor(eta: f64, m: f64, big_m: f64) -> Result<Contraction> {
    check_constants(m, big_m)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("step size must be positive, got {eta}")));
    }
    let radicand = (1.0 + eta * eta * big_m * big_m - 2.0 * eta * m).max(0.0);
    let rho = 2.0 * radicand.sqrt();
    let admissible = big_m / m <= 2.0 / 3f64.sqrt()
        && 0.5 / big_m < eta
        && eta < 1.5 / m
        && rho < 1.0;
    Ok(Contraction { rho, admissible })
}

fn check_constants(m: f64, big_m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(invalid(format!("restricted convexity constant must be > 0, got {m}")));
    }
    if !(big_m >= m && big_m.is_finite()) {
        return Err(invalid(format!(
            "restricted smoothness constant {big_m} must be >= convexity constant {m}"
        )));
    }
    Ok(())
}

/// Step size minimizing the contraction factor, `m / M^2`, clipped into the
/// admissible open interval `(0.5/M, 1.5/m)` with a 1% margin.
pub fn default_step_size(m: f64, big_m: f64) -> Result<f64> {
    check_constants(m, big_m)?;
    let lo = 0.5 / big_m * 1.01;
    let hi = 1.5 / m * 0.99;
    Ok((m / (big_m * big_m)).clamp(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_observations, LinkFunction, NoiseSpec};
    use crate::operators::{make_gaussian_design, make_orthogonal_design, BasisKind, StackedBasis};

    fn instance(link: LinkFunction, n: usize, p: usize, s: usize, b: usize, seed: u64) -> (DemixingModel, Vec<f64>) {
        let design = make_orthogonal_design(n, p, seed).unwrap();
        let basis = StackedBasis::from_kinds(BasisKind::Identity, BasisKind::Dct, p, 0).unwrap();
        let th1 = BlockSparseVector::random_unit(p, b, s, seed + 10).unwrap();
        let th2 = BlockSparseVector::random_unit(p, b, s, seed + 20).unwrap();
        let y = generate_observations(&design, &basis, &th1, &th2, link, NoiseSpec::none(), 0).unwrap();
        let mut t = th1.values().to_vec();
        t.extend_from_slice(th2.values());
        (DemixingModel::new(design, basis, link, y).unwrap(), t)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[3.0, -1.0, 0.5], 1.0), vec![2.0, 0.0, 0.0]);
        assert_eq!(soft_threshold(&[-3.0], 1.0), vec![-2.0]);
        let g = group_soft_threshold(&[0.0, 2.0, 0.3, 0.4], 2, 1.0);
        assert_eq!(g[..2], [0.0, 1.0]);
        assert_eq!(g[2..], [0.0, 0.0]);
    }

    #[test]
    fn contraction_examples() {
        let c = contraction_factor(1.0, 1.0, 1.0).unwrap();
        assert_eq!(c.rho, 0.0);
        assert!(c.admissible);
        let c = contraction_factor(0.8, 1.0, 1.0).unwrap();
        assert!((c.rho - 0.4).abs() < 1e-12);
        assert!(c.admissible);
        assert!(contraction_factor(1.0, 0.0, 1.0).is_err());
        assert!(contraction_factor(1.0, -1.0, 1.0).is_err());
        assert!(contraction_factor(1.0, 2.0, 1.0).is_err());
        // outside the step window
        assert!(!contraction_factor(0.4, 1.0, 1.0).unwrap().admissible);
    }

    #[test]
    fn default_step_examples() {
        assert_eq!(default_step_size(1.0, 1.0).unwrap(), 1.0);
        assert!((default_step_size(0.9, 1.0).unwrap() - 0.9).abs() < 1e-15);
        // m/M below 1/2 clips to the lower edge
        let eta = default_step_size(0.1, 1.0).unwrap();
        assert!((eta - 0.505).abs() < 1e-12);
    }

    #[test]
    fn zero_truth_stays_at_zero() {
        let p = 16;
        let design = make_gaussian_design(8, p, 3).unwrap();
        let basis = StackedBasis::from_kinds(BasisKind::Identity, BasisKind::Dct, p, 0).unwrap();
        let model = DemixingModel::new(design, basis, LinkFunction::shifted_sigmoid(), vec![0.0; 8]).unwrap();
        let cfg = SolverConfig::new(1.0, 20, 4, 2).with_trace();
        let out = struct_dht_solve(&model, &cfg, Some(&[0.0; 32])).unwrap();
        assert!(out.stacked().iter().all(|&v| v == 0.0));
        assert!(out.trace.unwrap().errors().iter().all(|&e| e == 0.0));
        let out = dht_solve(&model, &cfg, None).unwrap();
        assert!(out.stacked().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn well_conditioned_identity_instance_converges() {
        // Identity/DCT at p = 64 is coherent enough that the rate sits near
        // 0.7 per step; 1e-10 is reached within 27..81 iterations across seeds.
        for seed in 1..=10 {
            let (model, truth) = instance(LinkFunction::identity(), 64, 64, 8, 4, seed);
            let mut cfg = SolverConfig::new(1.0, 100, 8, 4);
            cfg.stop_tol = 0.0;
            let out = struct_dht_solve(&model, &cfg, Some(&truth)).unwrap();
            assert!(dist2(&out.stacked(), &truth) < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn iterates_stay_feasible_and_trace_is_bounded() {
        let (model, truth) = instance(LinkFunction::shifted_sigmoid(), 48, 64, 8, 4, 2);
        let cfg = SolverConfig::new(2.0, 30, 8, 4).with_trace();
        let out = struct_dht_solve(&model, &cfg, Some(&truth)).unwrap();
        let trace = out.trace.as_ref().unwrap();
        assert!(trace.records.len() <= cfg.max_iters + 1);
        for half in [&out.theta1_hat, &out.theta2_hat] {
            assert!(BlockSparseVector::new(half.pattern().clone(), half.values().to_vec()).is_ok());
            assert_eq!(half.pattern().active_blocks().len(), 2);
        }
        let beta = model.basis().apply_stacked(&out.stacked()).unwrap();
        assert!(dist2(&beta, &out.beta_hat) <= 1e-12);
    }

    #[test]
    fn unit_blocks_match_dht() {
        let (model, _) = instance(LinkFunction::shifted_sigmoid(), 32, 32, 4, 1, 3);
        let mut cfg = SolverConfig::new(1.5, 25, 4, 1).with_trace();
        cfg.init = Init::Random(5);
        let a = struct_dht_solve(&model, &cfg, None).unwrap();
        let b = dht_solve(&model, &SolverConfig { block: 4, ..cfg.clone() }, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn solver_is_deterministic() {
        let (model, truth) = instance(LinkFunction::shifted_sigmoid(), 30, 32, 4, 2, 4);
        let mut cfg = SolverConfig::new(2.0, 40, 4, 2).with_trace();
        cfg.init = Init::Random(9);
        let a = struct_dht_solve(&model, &cfg, Some(&truth)).unwrap();
        let b = struct_dht_solve(&model, &cfg, Some(&truth)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_step_is_reported_as_divergence() {
        for link in [LinkFunction::identity(), LinkFunction::shifted_sigmoid()] {
            let (model, _) = instance(link, 48, 64, 8, 4, 5);
            let cfg = SolverConfig::new(1e6, 100, 8, 4);
            match struct_dht_solve(&model, &cfg, None) {
                Err(DemixError::Diverged { iteration, .. }) => assert!(iteration >= 1),
                other => panic!("{link}: expected divergence, got {other:?}"),
            }
        }
    }

    #[test]
    fn config_validation() {
        let (model, _) = instance(LinkFunction::identity(), 16, 16, 4, 2, 0);
        assert!(struct_dht_solve(&model, &SolverConfig::new(0.0, 5, 4, 2), None).is_err());
        assert!(struct_dht_solve(&model, &SolverConfig::new(1.0, 0, 4, 2), None).is_err());
        assert!(struct_dht_solve(&model, &SolverConfig::new(1.0, 5, 3, 2), None).is_err());
        assert!(struct_dht_solve(&model, &SolverConfig::new(1.0, 5, 4, 2), Some(&[0.0; 3])).is_err());
        assert!(dst_solve(&model, &SolverConfig::new(1.0, 5, 4, 2), Lambda::Fixed(-1.0), DstMode::Entrywise, None).is_err());
    }

    #[test]
    fn dst_without_penalty_is_gradient_descent() {
        let (model, _) = instance(LinkFunction::identity(), 12, 16, 4, 2, 6);
        let mut cfg = SolverConfig::new(0.5, 3, 16, 2).with_trace();
        cfg.stop_tol = 0.0;
        let out = dst_solve(&model, &cfg, Lambda::Fixed(0.0), DstMode::Entrywise, None).unwrap();
        // s = p so the final truncation is the identity
        let mut t = vec![0.0; 32];
        for _ in 0..3 {
            let g = model.gradient(&t).unwrap();
            t.iter_mut().zip(&g).for_each(|(ti, gi)| *ti -= 0.5 * gi);
        }
        assert!(dist2(&out.stacked(), &t) < 1e-14);
    }

    #[test]
    fn dst_recovers_easy_instance() {
        let (model, truth) = instance(LinkFunction::identity(), 64, 64, 8, 4, 7);
        let mut cfg = SolverConfig::new(1.0, 500, 8, 4);
        cfg.stop_tol = 1e-12;
        for mode in [DstMode::Entrywise, DstMode::Group] {
            let out = dst_solve(&model, &cfg, Lambda::Auto, mode, Some(&truth)).unwrap();
            assert!(dist2(&out.stacked(), &truth) < 1e-3, "{mode}");
        }
    }

    #[test]
    fn trace_csv_layout() {
        let trace = SolverTrace {
            records: vec![
                TraceRecord { iter: 0, loss: 0.0, error: Some(1.5), support1: 7, support2: 9 },
                TraceRecord { iter: 1, loss: -0.25, error: None, support1: 7, support2: 9 },
            ],
        };
        assert_eq!(trace.to_csv(), "iter,loss,error,support1,support2\n0,0,1.5,7,9\n1,-0.25,,7,9\n");
    }
}
