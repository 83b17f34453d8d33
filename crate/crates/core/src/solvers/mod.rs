//! Deconvolution solvers built only from [`crate::convolution`] operators.
//!
//! [`deconv_pg`] minimizes `½‖conv_full(x, h) - y‖²` over `x >= 0` by
//! projected gradient descent with a backtracking step that enforces strict
//! decrease of the objective. [`deconv_rl`] is the multiplicative
//! Richardson–Lucy iteration, kept as the comparison baseline.

mod pg;
mod rl;

use std::io::Write;
use std::time::Duration;

use crate::convolution::{adjoint_apply, conv_full, full_shape, Kernel};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

pub use pg::{deconv_pg, deconv_pg_from};
pub use rl::{deconv_rl, deconv_rl_from};

/// Initial step of every line search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// Reciprocal of a power-iteration estimate of `‖A^T A‖`.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeconvConfig {
    pub max_iters: usize,
    /// Stop once `(f_k - f_{k+1}) / f_k` falls below this.
    pub tol_rel_objective: f64,
    pub initial_step: StepSize,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Power iterations used by [`StepSize::Auto`].
    pub power_iters: usize,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        DeconvConfig {
            max_iters: 500,
            tol_rel_objective: 1e-6,
            initial_step: StepSize::Auto,
            backtrack_factor: 0.5,
            max_backtracks: 50,
            power_iters: 30,
        }
    }
}

impl DeconvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.tol_rel_objective >= 0.0) {
            return bad("tol_rel_objective must be >= 0");
        }
        if let StepSize::Fixed(s) = self.initial_step {
            if !(s > 0.0 && s.is_finite()) {
                return bad("initial_step must be positive and finite");
            }
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if self.max_backtracks == 0 {
            return bad("max_backtracks must be positive");
        }
        if self.power_iters == 0 {
            return bad("power_iters must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlConfig {
    pub max_iters: usize,
    /// Stop once `‖x_{k+1} - x_k‖ / ‖x_k‖` falls below this.
    pub tol_rel_change: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig { max_iters: 500, tol_rel_change: 1e-6 }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if !(self.tol_rel_change >= 0.0) {
            return Err(Error::InvalidArgument("tol_rel_change must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
    /// No step length in the backtracking range decreased the objective.
    Stalled,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIters => "max_iters",
            StopReason::Stalled => "stalled",
        }
    }
}

/// Outcome of a solver run.
///
/// `objective_trace[k]` and `kkt_trace[k]` describe the iterate after update
/// `k + 1`; the starting point is summarized by `initial_objective`. For the
/// projected gradient solver the objective is the least-squares misfit and
/// the trace is strictly decreasing. For Richardson–Lucy it is the
/// generalized Kullback–Leibler divergence against the clamped data.
#[derive(Clone, Debug)]
pub struct DeconvReport<T> {
    pub estimate: Tensor<T>,
    pub initial_objective: T,
    pub objective_trace: Vec<T>,
    pub kkt_trace: Vec<T>,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    pub wall_time: Duration,
    /// Initial line-search step (projected gradient only).
    pub step_size: Option<T>,
    /// Observations clamped to zero before Richardson–Lucy.
    pub clamped_observations: usize,
}

impl<T: Real> DeconvReport<T> {
    pub fn final_objective(&self) -> T {
        self.objective_trace.last().copied().unwrap_or(self.initial_objective)
    }

    /// Writes `iter,objective,kkt` with one data row per iteration.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,objective,kkt")?;
        for (k, (f, kkt)) in self.objective_trace.iter().zip(&self.kkt_trace).enumerate() {
            writeln!(w, "{},{:e},{:e}", k + 1, f.as_f64(), kkt.as_f64())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `½ Σ (conv_full(x, h) - y)²`.
pub fn objective<T: Real>(x: &Tensor<T>, y: &Tensor<T>, h: &Kernel<T>) -> Result<T> {
    let ax = conv_full(x, h)?;
    half_squared_misfit(&ax, y)
}

pub(crate) fn half_squared_misfit<T: Real>(ax: &Tensor<T>, y: &Tensor<T>) -> Result<T> {
    ax.check_same_shape(y)?;
    let sum: T = ax
        .vectorize()
        .iter()
        .zip(y.vectorize())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(T::of(0.5) * sum)
}

/// `max_i |min(x_i, g_i)|` for the least-squares gradient `g`; zero exactly
/// at first-order optima of the nonnegative problem.
pub fn kkt_residual<T: Real>(x: &Tensor<T>, y: &Tensor<T>, h: &Kernel<T>) -> Result<T> {
    let g = crate::convolution::normal_gradient(x, y, h)?;
    Ok(complementarity(x, &g))
}

pub(crate) fn complementarity<T: Real>(x: &Tensor<T>, g: &Tensor<T>) -> T {
    x.vectorize()
        .iter()
        .zip(g.vectorize())
        .fold(T::zero(), |acc, (&xi, &gi)| acc.max(xi.min(gi).abs()))
}

/// Reciprocal of a power-iteration estimate of the largest eigenvalue of
/// `A^T A`, seeded with the all-ones vector.
pub fn estimate_step<T: Real>(h: &Kernel<T>, x_shape: &Shape, power_iters: usize) -> Result<T> {
    if power_iters == 0 {
        return Err(Error::InvalidArgument("power_iters must be positive".into()));
    }
    if h.is_zero() {
        return Err(Error::Degenerate("all-zero kernel".into()));
    }
    full_shape(x_shape, h)?;
    // Rescaled by the largest magnitude each round; λ̂ = ‖A^T A v‖ / ‖v‖.
    let mut v = Tensor::filled(x_shape.clone(), T::one());
    let mut lambda = T::zero();
    for _ in 0..power_iters {
        let w = adjoint_apply(&conv_full(&v, h)?, h, x_shape)?;
        lambda = w.norm() / v.norm();
        let peak = w.max_abs();
        if !(lambda > T::zero()) || !lambda.is_finite() || !(peak > T::zero()) {
            return Err(Error::Degenerate(format!("power iteration produced {lambda}")));
        }
        v = w.scale(T::one() / peak);
    }
    Ok(T::one() / lambda)
}

pub(crate) fn check_problem<T: Real>(y: &Tensor<T>, h: &Kernel<T>, x_shape: &Shape) -> Result<()> {
    let expected = full_shape(x_shape, h)?;
    if y.shape() != &expected {
        return shape_err(format!(
            "observation has shape {}, expected {expected} for estimate {x_shape} and kernel {}",
            y.shape(),
            h.shape()
        ));
    }
    if h.is_zero() {
        return Err(Error::Degenerate("all-zero kernel".into()));
    }
    Ok(())
}
