//! Link functions, the single-index loss
//! `F(t) = (1/n) sum_i [Theta(x_i^T Gamma t) - y_i x_i^T Gamma t]`,
//! its gradient and Hessian action, and synthetic observations.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, DemixError, Result};
use crate::operators::{LinearMap, StackedBasis};
use crate::seeding::rng;
use crate::sparsity::BlockSparseVector;
use crate::vecops::gaussian_vec;

/// Interval on which the sigmoid's slope bounds are reported.
pub const SLOPE_DOMAIN: f64 = 50.0;

/// Monotone link `g` with derivative `g'` and antiderivative `Theta`
/// normalized to `Theta(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkFunction {
    /// `g(x) = x`; the loss reduces to least squares.
    Identity,
    /// `g(x) = (1 - e^-x) / (1 + e^-x) = tanh(x/2)`.
    ShiftedSigmoid,
}

impl LinkFunction {
    pub fn identity() -> Self {
        Self::Identity
    }

    pub fn shifted_sigmoid() -> Self {
        Self::ShiftedSigmoid
    }

    pub fn g(self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::ShiftedSigmoid => (0.5 * x).tanh(),
        }
    }

    pub fn g_prime(self, x: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::ShiftedSigmoid => {
                let e = (-x.abs()).exp();
                2.0 * e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    /// `Theta(x) = integral_0^x g`.
    pub fn theta(self, x: f64) -> f64 {
        match self {
            Self::Identity => 0.5 * x * x,
            // 2 ln cosh(x/2), rewritten so that e^-|x| never overflows
            Self::ShiftedSigmoid => {
                let a = x.abs();
                a + 2.0 * (-a).exp().ln_1p() - 2.0 * std::f64::consts::LN_2
            }
        }
    }

    /// Lower bound of `g'` over `|x| <= 50`.
    pub fn lower_slope(self) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::ShiftedSigmoid => self.g_prime(SLOPE_DOMAIN),
        }
    }

    /// Upper bound of `g'`.
    pub fn upper_slope(self) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::ShiftedSigmoid => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::ShiftedSigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkFunction {
    type Err = DemixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "sigmoid" | "shifted-sigmoid" => Ok(Self::ShiftedSigmoid),
            other => Err(invalid(format!("unknown link `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    Gaussian,
}

/// Additive observation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    kind: NoiseKind,
    sigma: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma: 0.0,
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("noise sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(Self {
            kind: NoiseKind::Gaussian,
            sigma,
        })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Everything needed to evaluate the loss: design `X`, bases `Gamma`, link,
/// and observations `y`.
#[derive(Debug, Clone)]
pub struct DemixingModel {
    design: LinearMap,
    basis: StackedBasis,
    link: LinkFunction,
    observations: Vec<f64>,
}

/// Loss value together with its gradient at one point.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

impl DemixingModel {
    pub fn new(
        design: LinearMap,
        basis: StackedBasis,
        link: LinkFunction,
        observations: Vec<f64>,
    ) -> Result<Self> {
        if design.cols() != basis.dim() {
            return Err(invalid(format!(
                "design has {} columns but the bases have dimension {}",
                design.cols(),
                basis.dim()
            )));
        }
        if observations.len() != design.rows() {
            return Err(invalid(format!(
                "design has {} rows but {} observations were given",
                design.rows(),
                observations.len()
            )));
        }
        Ok(Self {
            design,
            basis,
            link,
            observations,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn samples(&self) -> usize {
        self.design.rows()
    }

    pub fn design(&self) -> &LinearMap {
        &self.design
    }

    pub fn basis(&self) -> &StackedBasis {
        &self.basis
    }

    pub fn link(&self) -> LinkFunction {
        self.link
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// `X Gamma t`.
    pub fn linear_predictor(&self, t: &[f64]) -> Result<Vec<f64>> {
        let beta = self.basis.apply_stacked(t)?;
        Ok(self.design.apply(&beta))
    }

    pub fn loss(&self, t: &[f64]) -> Result<f64> {
        let z = self.linear_predictor(t)?;
        Ok(self.loss_from_predictor(&z))
    }

    fn loss_from_predictor(&self, z: &[f64]) -> f64 {
        let link = self.link;
        let total: f64 = z
            .iter()
            .zip(&self.observations)
            .map(|(&zi, &yi)| link.theta(zi) - yi * zi)
            .sum();
        total / self.samples() as f64
    }

    /// `[(1/n) Phi^T X^T r; (1/n) Psi^T X^T r]` with `r = g(X Gamma t) - y`.
    pub fn gradient(&self, t: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(t)?.gradient)
    }

    /// Loss and gradient sharing one forward pass; the residual is formed
    /// once and reused for both halves of the gradient.
    pub fn evaluate(&self, t: &[f64]) -> Result<LossEval> {
        let z = self.linear_predictor(t)?;
        let loss = self.loss_from_predictor(&z);
        let inv_n = 1.0 / self.samples() as f64;
        let residual: Vec<f64> = z
            .iter()
            .zip(&self.observations)
            .map(|(&zi, &yi)| (self.link.g(zi) - yi) * inv_n)
            .collect();
        let back = self.design.adjoint(&residual);
        let gradient = self.basis.adjoint_stacked(&back)?;
        Ok(LossEval { loss, gradient })
    }

    /// `g'(X Gamma t)`, the diagonal of the Hessian's middle factor.
    pub fn curvature_weights(&self, t: &[f64]) -> Result<Vec<f64>> {
        let z = self.linear_predictor(t)?;
        Ok(z.into_iter().map(|zi| self.link.g_prime(zi)).collect())
    }

    /// `(1/n) Gamma^T X^T diag(w) X Gamma v` for weights from
    /// [`Self::curvature_weights`].
    pub fn hessian_apply(&self, weights: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.samples() {
            return Err(invalid("curvature weight length must equal the sample count"));
        }
        let z = self.linear_predictor(v)?;
        let inv_n = 1.0 / self.samples() as f64;
        let scaled: Vec<f64> = z.iter().zip(weights).map(|(zi, w)| zi * w * inv_n).collect();
        self.basis.adjoint_stacked(&self.design.adjoint(&scaled))
    }
}

/// Draws `y_i = g(x_i^T (Phi theta1 + Psi theta2)) + e_i`.
pub fn generate_observations(
    design: &LinearMap,
    basis: &StackedBasis,
    theta1: &BlockSparseVector,
    theta2: &BlockSparseVector,
    link: LinkFunction,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Vec<f64>> {
    let p = basis.dim();
    if design.cols() != p || theta1.values().len() != p || theta2.values().len() != p {
        return Err(invalid(format!(
            "dimension mismatch: design has {} columns, bases {p}, components {} and {}",
            design.cols(),
            theta1.values().len(),
            theta2.values().len()
        )));
    }
    let mut t = Vec::with_capacity(2 * p);
    t.extend_from_slice(theta1.values());
    t.extend_from_slice(theta2.values());
    let beta = basis.apply_stacked(&t)?;
    let mut y: Vec<f64> = design.apply(&beta).into_iter().map(|z| link.g(z)).collect();
    if noise.kind == NoiseKind::Gaussian && noise.sigma > 0.0 {
        let e = gaussian_vec(&mut rng(seed), y.len());
        for (yi, ei) in y.iter_mut().zip(e) {
            *yi += noise.sigma * ei;
        }
    }
    Ok(y)
}
