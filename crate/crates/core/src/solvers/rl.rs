use std::time::Instant;

use super::{check_problem, complementarity, DeconvReport, RlConfig, StopReason};
use crate::convolution::{adjoint_apply, conv_full, Kernel};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

/// Richardson–Lucy deconvolution from a flat start carrying the data flux.
///
/// Negative observations are clamped to zero and counted in the report. The
/// kernel is rescaled to unit sum and the estimate refers to that rescaled
/// kernel.
pub fn deconv_rl<T: Real>(
    y: &Tensor<T>,
    h: &Kernel<T>,
    x_shape: &Shape,
    cfg: &RlConfig,
) -> Result<DeconvReport<T>> {
    deconv_rl_from(y, h, x_shape, cfg, None)
}

/// [`deconv_rl`] from an explicit nonnegative starting point.
pub fn deconv_rl_from<T: Real>(
    y: &Tensor<T>,
    h: &Kernel<T>,
    x_shape: &Shape,
    cfg: &RlConfig,
    initial: Option<&Tensor<T>>,
) -> Result<DeconvReport<T>> {
    cfg.validate()?;
    check_problem(y, h, x_shape)?;
    if h.tensor().vectorize().iter().any(|&v| v < T::zero()) {
        return Err(Error::InvalidArgument("Richardson-Lucy needs a nonnegative kernel".into()));
    }
    let started = Instant::now();

    let h = Kernel::new(h.tensor().scale(T::one() / h.sum()))?;
    let clamped_observations = y.vectorize().iter().filter(|&&v| v < T::zero()).count();
    let y = y.clamp_below_zero();

    let mut x = match initial {
        Some(x0) if x0.shape() != x_shape => {
            return shape_err(format!("initial estimate {} for shape {x_shape}", x0.shape()))
        }
        Some(x0) if x0.min_value() < T::zero() => {
            return Err(Error::InvalidArgument("initial estimate has negative entries".into()))
        }
        Some(x0) => x0.clone(),
        None => {
            let level = y.sum() / T::of(x_shape.len() as f64);
            Tensor::filled(x_shape.clone(), level)
        }
    };

    // A^T 1: every column of the full-model matrix sums to Σh = 1.
    let column_sums = adjoint_apply(&Tensor::filled(y.shape().clone(), T::one()), &h, x_shape)?;

    let mut ax = conv_full(&x, &h)?;
    let mut correction = adjoint_apply(&y.guarded_div(&ax)?, &h, x_shape)?;
    let initial_objective = divergence(&ax, &y);

    let mut objective_trace = Vec::new();
    let mut kkt_trace = Vec::new();
    let mut stop_reason = StopReason::MaxIters;

    while objective_trace.len() < cfg.max_iters {
        let x_norm = x.norm();
        if x_norm == T::zero() {
            stop_reason = StopReason::Converged;
            break;
        }
        let next = x.mul(&correction)?;
        let change = next.sub(&x)?.norm() / x_norm;
        x = next;
        ax = conv_full(&x, &h)?;
        correction = adjoint_apply(&y.guarded_div(&ax)?, &h, x_shape)?;
        objective_trace.push(divergence(&ax, &y));
        kkt_trace.push(complementarity(&x, &column_sums.sub(&correction)?));

        if change < T::of(cfg.tol_rel_change) {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    Ok(DeconvReport {
        estimate: x,
        initial_objective,
        iterations_run: objective_trace.len(),
        objective_trace,
        kkt_trace,
        stop_reason,
        wall_time: started.elapsed(),
        step_size: None,
        clamped_observations,
    })
}

/// Generalized Kullback–Leibler divergence `Σ y ln(y / Ax) - y + Ax`, with
/// `0 ln 0 = 0` and `Ax` floored at the division guard.
fn divergence<T: Real>(ax: &Tensor<T>, y: &Tensor<T>) -> T {
    let eps = T::div_epsilon();
    ax.vectorize()
        .iter()
        .zip(y.vectorize())
        .map(|(&a, &b)| {
            let a = a.max(T::zero());
            if b > T::zero() {
                b * (b / a.max(eps)).ln() - b + a
            } else {
                a
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(extents: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(extents.to_vec()).unwrap(), data.to_vec()).unwrap()
    }

    #[test]
    fn delta_kernel_reproduces_data_in_one_step() {
        let h = Kernel::from_vec(vec![3], vec![0., 1., 0.]).unwrap();
        let y = t(&[5], &[0.7, 2., 3., 5., 0.1]);
        let x0 = t(&[3], &[1., 4., 0.5]);
        let cfg = RlConfig { max_iters: 1, tol_rel_change: 0.0 };
        let report = deconv_rl_from(&y, &h, &Shape::new(vec![3]).unwrap(), &cfg, Some(&x0)).unwrap();
        for (a, b) in report.estimate.vectorize().iter().zip([2., 3., 5.]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(report.iterations_run, 1);
    }

    #[test]
    fn zero_pixels_stay_zero() {
        let h = Kernel::from_vec(vec![3], vec![0.2, 0.6, 0.2]).unwrap();
        let y = t(&[6], &[0.5, 2., 3., 1., 4., 0.3]);
        let x0 = t(&[4], &[1., 0., 1., 1.]);
        let cfg = RlConfig { max_iters: 50, tol_rel_change: 0.0 };
        let report = deconv_rl_from(&y, &h, &Shape::new(vec![4]).unwrap(), &cfg, Some(&x0)).unwrap();
        assert_eq!(report.estimate.at(&[1]).unwrap(), 0.0);
        assert!(report.estimate.min_value() >= 0.0);
    }

    #[test]
    fn negative_observations_clamped_and_counted() {
        let h = Kernel::from_vec(vec![3], vec![1., 2., 1.]).unwrap();
        let y = t(&[5], &[-1., 2., 3., -0.5, 1.]);
        let report = deconv_rl(&y, &h, &Shape::new(vec![3]).unwrap(), &RlConfig::default()).unwrap();
        assert_eq!(report.clamped_observations, 2);
        assert!(report.estimate.min_value() >= 0.0);
        // Unit-sum kernel with positive taps: flux of clamped data is kept.
        assert!((report.estimate.sum() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn divergence_trace_is_nonincreasing() {
        let h = Kernel::from_vec(vec![3, 3], vec![1., 2., 1., 2., 4., 2., 1., 2., 1.]).unwrap();
        let y = Tensor::from_fn(Shape::new(vec![6, 6]).unwrap(), |i| ((i[0] * 5 + i[1] * 3) % 7) as f64);
        let cfg = RlConfig { max_iters: 100, tol_rel_change: 0.0 };
        let report = deconv_rl(&y, &h, &Shape::new(vec![4, 4]).unwrap(), &cfg).unwrap();
        let mut prev = report.initial_objective;
        for &f in &report.objective_trace {
            assert!(f <= prev * (1.0 + 1e-12));
            prev = f;
        }
    }

    #[test]
    fn rejects_bad_kernels() {
        let y = t(&[3], &[1., 1., 1.]);
        let xs = Shape::new(vec![1]).unwrap();
        let neg = Kernel::from_vec(vec![3], vec![1., -1., 1.]).unwrap();
        assert!(matches!(
            deconv_rl(&y, &neg, &xs, &RlConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
        let zero = Kernel::from_vec(vec![3], vec![0., 0., 0.]).unwrap();
        assert!(matches!(deconv_rl(&y, &zero, &xs, &RlConfig::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn all_zero_data_is_immediately_converged() {
        let y = t(&[3], &[0., -1., 0.]);
        let h = Kernel::from_vec(vec![3], vec![1., 1., 1.]).unwrap();
        let report = deconv_rl(&y, &h, &Shape::new(vec![1]).unwrap(), &RlConfig::default()).unwrap();
        assert_eq!(report.estimate.vectorize(), &[0.]);
        assert_eq!(report.stop_reason, StopReason::Converged);
    }
}
