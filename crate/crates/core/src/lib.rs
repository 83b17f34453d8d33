//! N-dimensional discrete convolution, its block-Toeplitz matrix and adjoint,
//! and nonnegative image deconvolution driven only by convolutions.
//!
//! The numeric core is generic over the element type. Convolution, cropping
//! and the explicit matrix accept any [`Scalar`], which includes exact
//! rationals; solvers, metrics and simulation need a floating-point [`Real`].
//! File formats and the command line work in `f64`. The aliases below name
//! the common instantiations.

pub mod convolution;
pub mod error;
pub mod explicit;
pub mod imageio;
pub mod scalar;
pub mod simulation;
pub mod solvers;
pub mod tensor;
pub mod verify;

pub use convolution::{adjoint_apply, conv_full, crop_m, flip, full_shape, normal_gradient, Kernel};
pub use error::{Error, Result};
pub use explicit::{build_matrix, ExplicitConvMatrix};
pub use scalar::{Real, Scalar};
pub use solvers::{
    deconv_pg, deconv_pg_from, deconv_rl, deconv_rl_from, estimate_step, kkt_residual, objective,
    DeconvConfig, DeconvReport, RlConfig, StepSize, StopReason,
};
pub use tensor::{Shape, Tensor};

/// Exact rational scalar, for bit-exact operator identities.
pub type Rational = num_rational::Ratio<i64>;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type TensorQ = Tensor<Rational>;

pub type Kernel64 = Kernel<f64>;
pub type Kernel32 = Kernel<f32>;
pub type KernelQ = Kernel<Rational>;

pub type Matrix64 = ExplicitConvMatrix<f64>;
pub type MatrixQ = ExplicitConvMatrix<Rational>;

pub type Report64 = DeconvReport<f64>;
pub type Report32 = DeconvReport<f32>;
