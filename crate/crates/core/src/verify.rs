//! Randomized equivalence checks between the convolution routines and the
//! explicit block-Toeplitz matrix.
//!
//! The operators under test are injectable so a deliberately broken
//! implementation can be shown to fail.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convolution::{adjoint_apply, conv_full, full_shape, normal_gradient, Kernel};
use crate::error::Result;
use crate::explicit::build_matrix;
use crate::tensor::{Shape, Tensor};

pub const MATRIX_TOLERANCE: f64 = 1e-12;
pub const ADJOINT_TOLERANCE: f64 = 1e-10;
pub const STEP_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    pub max_ndim: usize,
    pub max_extent: usize,
    pub max_radius: usize,
    pub cases: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { max_ndim: 3, max_extent: 5, max_radius: 2, cases: 200, seed: 0x5eed }
    }
}

type ConvFn<'a> = dyn Fn(&Tensor<f64>, &Kernel<f64>) -> Result<Tensor<f64>> + 'a;
type AdjointFn<'a> = dyn Fn(&Tensor<f64>, &Kernel<f64>, &Shape) -> Result<Tensor<f64>> + 'a;
type GradientFn<'a> = dyn Fn(&Tensor<f64>, &Tensor<f64>, &Kernel<f64>) -> Result<Tensor<f64>> + 'a;

/// Convolution-side operators checked against the explicit matrix.
pub struct Operators<'a> {
    pub conv: &'a ConvFn<'a>,
    pub adjoint: &'a AdjointFn<'a>,
    pub gradient: &'a GradientFn<'a>,
}

impl Default for Operators<'static> {
    fn default() -> Self {
        Operators {
            conv: &|x, h| conv_full(x, h),
            adjoint: &|y, h, s| adjoint_apply(y, h, s),
            gradient: &|x, y, h| normal_gradient(x, y, h),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub worst_error: f64,
    pub tolerance: f64,
}

impl PropertyResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        PropertyResult { name, cases: 0, failures: 0, worst_error: 0.0, tolerance }
    }

    fn record(&mut self, error: f64) {
        self.cases += 1;
        // NaN counts as a failure.
        if !(error <= self.tolerance) {
            self.failures += 1;
        }
        if error.is_nan() || error > self.worst_error {
            self.worst_error = error;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub properties: Vec<PropertyResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }
}

/// One random problem: input, kernel, and an observation-space tensor.
pub struct Instance {
    pub x: Tensor<f64>,
    pub h: Kernel<f64>,
    pub y: Tensor<f64>,
}

pub fn random_instance<R: Rng>(rng: &mut R, cfg: &VerifyConfig) -> Result<Instance> {
    let ndim = rng.gen_range(1..=cfg.max_ndim.max(1));
    let x_ext: Vec<usize> = (0..ndim).map(|_| rng.gen_range(1..=cfg.max_extent.max(1))).collect();
    let h_ext: Vec<usize> = (0..ndim).map(|_| 2 * rng.gen_range(0..=cfg.max_radius) + 1).collect();
    let x_shape = Shape::new(x_ext)?;
    let x = Tensor::from_fn(x_shape.clone(), |_| rng.gen_range(-1.0..1.0));
    let h = Kernel::new(Tensor::from_fn(Shape::new(h_ext)?, |_| rng.gen_range(-1.0..1.0)))?;
    let y = Tensor::from_fn(full_shape(&x_shape, &h)?, |_| rng.gen_range(-1.0..1.0));
    Ok(Instance { x, h, y })
}

pub fn run_suite(cfg: &VerifyConfig) -> Result<SuiteReport> {
    run_suite_with(cfg, &Operators::default())
}

pub fn run_suite_with(cfg: &VerifyConfig, ops: &Operators<'_>) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut forward = PropertyResult::new("convolution equals block-Toeplitz matvec", MATRIX_TOLERANCE);
    let mut transpose =
        PropertyResult::new("flip-convolve-crop equals transpose matvec", MATRIX_TOLERANCE);
    let mut inner = PropertyResult::new("adjoint identity <Ax,y> = <x,A*y>", ADJOINT_TOLERANCE);
    let mut step = PropertyResult::new("projected gradient step by convolutions", STEP_TOLERANCE);

    for _ in 0..cfg.cases {
        let Instance { x, h, y } = random_instance(&mut rng, cfg)?;
        let a = build_matrix(&h, x.shape())?;

        let ax = (ops.conv)(&x, &h);
        forward.record(match &ax {
            Ok(ax) => max_abs_diff(ax.vectorize(), &a.matvec(x.vectorize())?),
            Err(_) => f64::INFINITY,
        });

        let aty = (ops.adjoint)(&y, &h, x.shape());
        transpose.record(match &aty {
            Ok(aty) => max_abs_diff(aty.vectorize(), &a.transpose_matvec(y.vectorize())?),
            Err(_) => f64::INFINITY,
        });

        inner.record(match (&ax, &aty) {
            (Ok(ax), Ok(aty)) if ax.shape() == y.shape() && aty.shape() == x.shape() => {
                let lhs = ax.dot(&y)?;
                let rhs = x.dot(aty)?;
                let scale = ax.norm() * y.norm() + x.norm() * aty.norm();
                if scale == 0.0 {
                    (lhs - rhs).abs()
                } else {
                    (lhs - rhs).abs() / scale
                }
            }
            _ => f64::INFINITY,
        });

        let delta = rng.gen_range(0.05..1.0);
        let by_matrix = {
            let ata_x = a.transpose_matvec(&a.matvec(x.vectorize())?)?;
            let at_y = a.transpose_matvec(y.vectorize())?;
            x.vectorize()
                .iter()
                .zip(ata_x.iter().zip(&at_y))
                .map(|(&xi, (&p, &q))| (xi - delta * (p - q)).max(0.0))
                .collect::<Vec<_>>()
        };
        step.record(match (ops.gradient)(&x, &y, &h) {
            Ok(g) if g.shape() == x.shape() => {
                let by_conv = x.zip_with(&g, |xi, gi| (xi - delta * gi).max(0.0))?;
                max_abs_diff(by_conv.vectorize(), &by_matrix)
            }
            _ => f64::INFINITY,
        });
    }
    Ok(SuiteReport { properties: vec![forward, transpose, inner, step] })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0, |m, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() || d > m {
            d
        } else {
            m
        }
    })
}
