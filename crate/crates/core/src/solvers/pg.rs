use std::time::Instant;

use super::{
    check_problem, complementarity, estimate_step, half_squared_misfit, DeconvConfig, DeconvReport,
    StepSize, StopReason,
};
use crate::convolution::{adjoint_apply, conv_full, Kernel};
use crate::error::{shape_err, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

/// Nonnegative least-squares deconvolution by projected gradient descent,
/// started from `max(A^T y, 0)`.
pub fn deconv_pg<T: Real>(
    y: &Tensor<T>,
    h: &Kernel<T>,
    x_shape: &Shape,
    cfg: &DeconvConfig,
) -> Result<DeconvReport<T>> {
    deconv_pg_from(y, h, x_shape, cfg, None)
}

/// [`deconv_pg`] with an explicit starting point, which is projected onto
/// the nonnegative orthant first.
pub fn deconv_pg_from<T: Real>(
    y: &Tensor<T>,
    h: &Kernel<T>,
    x_shape: &Shape,
    cfg: &DeconvConfig,
    initial: Option<&Tensor<T>>,
) -> Result<DeconvReport<T>> {
    cfg.validate()?;
    check_problem(y, h, x_shape)?;
    let started = Instant::now();

    // A^T y is fixed for the whole run.
    let aty = adjoint_apply(y, h, x_shape)?;
    let mut x = match initial {
        Some(x0) if x0.shape() != x_shape => {
            return shape_err(format!("initial estimate {} for shape {x_shape}", x0.shape()))
        }
        Some(x0) => x0.clamp_below_zero(),
        None => aty.clamp_below_zero(),
    };
    let step = match cfg.initial_step {
        StepSize::Auto => estimate_step(h, x_shape, cfg.power_iters)?,
        StepSize::Fixed(s) => T::of(s),
    };
    let shrink = T::of(cfg.backtrack_factor);
    let tol = T::of(cfg.tol_rel_objective);

    let mut ax = conv_full(&x, h)?;
    let mut f = half_squared_misfit(&ax, y)?;
    let mut grad = adjoint_apply(&ax, h, x_shape)?.sub(&aty)?;
    let initial_objective = f;

    let mut objective_trace = Vec::new();
    let mut kkt_trace = Vec::new();
    let mut stop_reason = StopReason::MaxIters;
    // A line search that fails once the objective has dropped below rounding
    // resolution of its starting value has nothing left to find.
    let floor = initial_objective * T::epsilon();
    let exhausted = |f: T| if f <= floor { StopReason::Converged } else { StopReason::Stalled };

    'outer: while objective_trace.len() < cfg.max_iters {
        if f == T::zero() {
            stop_reason = StopReason::Converged;
            break;
        }
        let mut delta = step;
        let mut accepted = None;
        for attempt in 0..=cfg.max_backtracks {
            let candidate = x.zip_with(&grad, |xi, gi| (xi - delta * gi).max(T::zero()))?;
            if candidate == x {
                // The projected step does not move: at full step length this is
                // a fixed point of the projected gradient map.
                stop_reason = if attempt == 0 { StopReason::Converged } else { exhausted(f) };
                break 'outer;
            }
            let a_candidate = conv_full(&candidate, h)?;
            let f_candidate = half_squared_misfit(&a_candidate, y)?;
            if f_candidate < f {
                accepted = Some((candidate, a_candidate, f_candidate));
                break;
            }
            delta = delta * shrink;
        }
        let Some((next, a_next, f_next)) = accepted else {
            stop_reason = exhausted(f);
            break;
        };

        let rel_decrease = (f - f_next) / f;
        x = next;
        ax = a_next;
        f = f_next;
        grad = adjoint_apply(&ax, h, x_shape)?.sub(&aty)?;
        objective_trace.push(f);
        kkt_trace.push(complementarity(&x, &grad));

        if rel_decrease < tol || f == T::zero() {
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
        step_size: Some(step),
        clamped_observations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::conv_full;
    use crate::error::Error;
    use crate::solvers::kkt_residual;

    fn t(extents: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(extents.to_vec()).unwrap(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_solves_immediately() {
        let y = t(&[4], &[1.5, -2., 0., 3.]);
        let h = Kernel::delta(1).unwrap();
        let report = deconv_pg(&y, &h, y.shape(), &DeconvConfig::default()).unwrap();
        assert_eq!(report.estimate.vectorize(), &[1.5, 0., 0., 3.]);
        assert_eq!(report.stop_reason, StopReason::Converged);
        assert!(report.iterations_run <= 1);
        assert_eq!(report.step_size, Some(1.0));
    }

    #[test]
    fn identity_kernel_from_other_start_takes_one_step() {
        let y = t(&[4], &[1.5, -2., 0., 3.]);
        let h = Kernel::delta(1).unwrap();
        let x0 = t(&[4], &[1., 1., 1., 1.]);
        let cfg = DeconvConfig::default();
        let report = deconv_pg_from(&y, &h, y.shape(), &cfg, Some(&x0)).unwrap();
        assert_eq!(report.estimate.vectorize(), &[1.5, 0., 0., 3.]);
        assert_eq!(report.iterations_run, 1);
        assert_eq!(report.stop_reason, StopReason::Converged);
    }

    #[test]
    fn shifted_delta_recovers_truth() {
        let truth = t(&[3], &[0., 4., 0.]);
        let h = Kernel::from_vec(vec![3], vec![0., 1., 0.]).unwrap();
        let y = conv_full(&truth, &h).unwrap();
        assert_eq!(y.vectorize(), &[0., 0., 4., 0., 0.]);
        let report = deconv_pg(&y, &h, truth.shape(), &DeconvConfig::default()).unwrap();
        for (a, b) in report.estimate.vectorize().iter().zip(truth.vectorize()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn negative_data_gives_zero_estimate() {
        let y = t(&[5], &[-1., -0.5, -2., -1., -3.]);
        let h = Kernel::from_vec(vec![3], vec![0.2, 0.5, 0.3]).unwrap();
        let xs = Shape::new(vec![3]).unwrap();
        let report = deconv_pg(&y, &h, &xs, &DeconvConfig::default()).unwrap();
        assert_eq!(report.estimate.vectorize(), &[0., 0., 0.]);
        assert_eq!(report.stop_reason, StopReason::Converged);
        assert_eq!(kkt_residual(&report.estimate, &y, &h).unwrap(), 0.0);
    }

    #[test]
    fn trace_is_strictly_decreasing_and_feasible() {
        let truth = t(&[6], &[0., 3., 0., 1., 0., 2.]);
        let h = Kernel::from_vec(vec![3], vec![0.3, 0.5, 0.2]).unwrap();
        let mut y = conv_full(&truth, &h).unwrap();
        y = y.zip_with(&t(&[8], &[0.1, -0.2, 0.05, 0.0, 0.3, -0.1, 0.0, 0.2]), |a, b| a + b).unwrap();
        let cfg = DeconvConfig { tol_rel_objective: 0.0, max_iters: 200, ..Default::default() };
        let report = deconv_pg(&y, &h, truth.shape(), &cfg).unwrap();
        let mut prev = report.initial_objective;
        for &f in &report.objective_trace {
            assert!(f < prev);
            prev = f;
        }
        assert!(report.estimate.min_value() >= 0.0);
        assert_eq!(report.kkt_trace.len(), report.iterations_run);
    }

    #[test]
    fn fixed_oversized_step_backtracks() {
        let truth = t(&[4], &[1., 0., 2., 1.]);
        let h = Kernel::from_vec(vec![3], vec![1., 2., 1.]).unwrap();
        let y = conv_full(&truth, &h).unwrap();
        let cfg = DeconvConfig {
            initial_step: StepSize::Fixed(10.0),
            max_iters: 2000,
            tol_rel_objective: 0.0,
            ..Default::default()
        };
        let report = deconv_pg(&y, &h, truth.shape(), &cfg).unwrap();
        assert!(report.final_objective() < 1e-3 * report.initial_objective);
    }

    #[test]
    fn errors() {
        let h = Kernel::from_vec(vec![3], vec![1., 2., 1.]).unwrap();
        let xs = Shape::new(vec![4]).unwrap();
        let y = t(&[5], &[0.; 5]);
        assert!(matches!(deconv_pg(&y, &h, &xs, &DeconvConfig::default()), Err(Error::Shape(_))));
        let zero = Kernel::from_vec(vec![3], vec![0., 0., 0.]).unwrap();
        let y = t(&[6], &[1.; 6]);
        assert!(matches!(
            deconv_pg(&y, &zero, &xs, &DeconvConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn trace_csv_has_one_row_per_iteration() {
        let truth = t(&[5], &[0., 3., 0., 1., 2.]);
        let h = Kernel::from_vec(vec![3], vec![0.25, 0.5, 0.25]).unwrap();
        let y = conv_full(&truth, &h).unwrap();
        let cfg = DeconvConfig { max_iters: 17, tol_rel_objective: 0.0, ..Default::default() };
        let report = deconv_pg(&y, &h, truth.shape(), &cfg).unwrap();
        let mut buf = Vec::new();
        report.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,objective,kkt"));
        assert_eq!(lines.count(), report.iterations_run);
    }

    #[test]
    fn exhausting_exact_data_counts_as_converged() {
        let truth = t(&[6], &[1., 4., 2., 0., 3., 5.]);
        let h = Kernel::from_vec(vec![3], vec![0.1, 0.8, 0.1]).unwrap();
        let y = conv_full(&truth, &h).unwrap();
        let cfg = DeconvConfig { max_iters: 5000, tol_rel_objective: 0.0, ..Default::default() };
        let report = deconv_pg(&y, &h, truth.shape(), &cfg).unwrap();
        assert_eq!(report.stop_reason, StopReason::Converged);
        assert!(report.iterations_run < 5000);
        assert!(report.final_objective() <= report.initial_objective * f64::EPSILON);
    }
}
