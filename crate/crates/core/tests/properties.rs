//! Operator identities checked against independent constructions.

use ndconv::explicit::build_matrix;
use ndconv::{
    adjoint_apply, conv_full, flip, normal_gradient, objective, Kernel, Rational, Shape, Tensor,
};
use proptest::prelude::*;

fn shape_strategy(max_ndim: usize, max_extent: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=max_extent, 1..=max_ndim)
}

fn tensor_strategy(extents: Vec<usize>) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = extents.iter().product();
    prop::collection::vec(-1.0f64..1.0, n)
        .prop_map(move |data| Tensor::from_vec(Shape::new(extents.clone()).unwrap(), data).unwrap())
}

/// Input, kernel (radii <= 2) and an observation-space tensor of matching
/// dimensionality.
fn problem_strategy(max_ndim: usize) -> impl Strategy<Value = (Tensor<f64>, Kernel<f64>, Tensor<f64>)> {
    shape_strategy(max_ndim, 5)
        .prop_flat_map(|x_ext| {
            let ndim = x_ext.len();
            (Just(x_ext), prop::collection::vec(0usize..=2, ndim))
        })
        .prop_flat_map(|(x_ext, radii)| {
            let h_ext: Vec<usize> = radii.iter().map(|p| 2 * p + 1).collect();
            let y_ext: Vec<usize> = x_ext.iter().zip(&h_ext).map(|(d, k)| d + k - 1).collect();
            (tensor_strategy(x_ext), tensor_strategy(h_ext), tensor_strategy(y_ext))
        })
        .prop_map(|(x, h, y)| (x, Kernel::new(h).unwrap(), y))
}

/// Entry-by-entry construction: `A[s][k] = h(s - k)` when every coordinate
/// difference lies in the kernel support.
fn direct_matrix(h: &Kernel<f64>, x_shape: &Shape) -> Vec<Vec<f64>> {
    let out_ext: Vec<usize> = x_shape
        .extents()
        .iter()
        .zip(h.shape().extents())
        .map(|(d, k)| d + k - 1)
        .collect();
    let out_shape = Shape::new(out_ext).unwrap();
    (0..out_shape.len())
        .map(|r| {
            let s = out_shape.unflatten(r);
            (0..x_shape.len())
                .map(|c| {
                    let k = x_shape.unflatten(c);
                    let offset: Option<Vec<usize>> = s
                        .iter()
                        .zip(&k)
                        .zip(h.shape().extents())
                        .map(|((&si, &ki), &hk)| si.checked_sub(ki).filter(|&d| d < hk))
                        .collect();
                    offset.map_or(0.0, |o| h.tensor().at(&o).unwrap())
                })
                .collect()
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn devectorize_inverts_vectorize(t in shape_strategy(4, 4).prop_flat_map(tensor_strategy)) {
        let back = Tensor::devectorize(t.vectorize().to_vec(), t.shape().clone()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn at_agrees_with_vectorize(t in shape_strategy(4, 4).prop_flat_map(tensor_strategy)) {
        for flat in 0..t.len() {
            let idx = t.shape().unflatten(flat);
            prop_assert_eq!(t.shape().flat_index(&idx).unwrap(), flat);
            prop_assert_eq!(t.at(&idx).unwrap(), t.vectorize()[flat]);
        }
    }

    #[test]
    fn full_shape_law((x, h, _y) in problem_strategy(4)) {
        let out = conv_full(&x, &h).unwrap();
        for axis in 0..x.ndim() {
            prop_assert_eq!(
                out.shape().extent(axis),
                x.shape().extent(axis) + 2 * h.radii()[axis]
            );
        }
        let back = adjoint_apply(&out, &h, x.shape()).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
    }

    #[test]
    fn convolution_is_linear(
        (a, h, _y) in problem_strategy(3),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let b = Tensor::from_fn(a.shape().clone(), |i| {
            let mix = i.iter().fold(seed, |acc, &v| acc.wrapping_mul(6364136223846793005).wrapping_add(v as u64 + 1));
            (mix >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        let combo = a.scale(alpha).add(&b.scale(beta)).unwrap();
        let lhs = conv_full(&combo, &h).unwrap();
        let rhs = conv_full(&a, &h).unwrap().scale(alpha).add(&conv_full(&b, &h).unwrap().scale(beta)).unwrap();
        prop_assert!(max_abs_diff(lhs.vectorize(), rhs.vectorize()) < 1e-12);
    }

    #[test]
    fn flip_is_an_involution((_x, h, _y) in problem_strategy(4)) {
        prop_assert_eq!(flip(&flip(&h)), h);
    }

    #[test]
    fn conv_matches_block_toeplitz((x, h, _y) in problem_strategy(3)) {
        let a = build_matrix(&h, x.shape()).unwrap();
        let via_matrix = a.matvec(x.vectorize()).unwrap();
        let via_conv = conv_full(&x, &h).unwrap();
        prop_assert!(max_abs_diff(via_conv.vectorize(), &via_matrix) <= 1e-12);
    }

    #[test]
    fn adjoint_matches_transpose((x, h, y) in problem_strategy(3)) {
        let a = build_matrix(&h, x.shape()).unwrap();
        let via_matrix = a.transpose_matvec(y.vectorize()).unwrap();
        let via_conv = adjoint_apply(&y, &h, x.shape()).unwrap();
        prop_assert!(max_abs_diff(via_conv.vectorize(), &via_matrix) <= 1e-12);
    }

    #[test]
    fn adjoint_identity((x, h, y) in problem_strategy(3)) {
        let ax = conv_full(&x, &h).unwrap();
        let aty = adjoint_apply(&y, &h, x.shape()).unwrap();
        let lhs = ax.dot(&y).unwrap();
        let rhs = x.dot(&aty).unwrap();
        let scale = ax.norm() * y.norm() + x.norm() * aty.norm();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn recursive_matrix_matches_direct_index((x, h, _y) in problem_strategy(3)) {
        let a = build_matrix(&h, x.shape()).unwrap();
        let direct = direct_matrix(&h, x.shape());
        prop_assert_eq!(direct.len(), a.rows());
        for (r, row) in direct.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                prop_assert_eq!(a.entry(r, c), v);
            }
        }
    }

    #[test]
    fn columns_sum_to_kernel_mass((x, h, _y) in problem_strategy(3)) {
        let a = build_matrix(&h, x.shape()).unwrap();
        let mass = h.sum();
        for s in a.column_sums() {
            prop_assert!((s - mass).abs() <= 1e-12);
        }
    }

    #[test]
    fn normal_operator_composition((x, h, _y) in problem_strategy(3)) {
        let a = build_matrix(&h, x.shape()).unwrap();
        let ata_x = a.transpose_matvec(&a.matvec(x.vectorize()).unwrap()).unwrap();
        let via_conv = adjoint_apply(&conv_full(&x, &h).unwrap(), &h, x.shape()).unwrap();
        prop_assert!(max_abs_diff(via_conv.vectorize(), &ata_x) <= 1e-12);
    }
}

fn rational_tensor(extents: &[usize], seed: i64) -> Tensor<Rational> {
    let mut state = seed;
    Tensor::from_fn(Shape::new(extents.to_vec()).unwrap(), |_| {
        state = (state * 1103515245 + 12345) % 2147483648;
        Rational::new(state % 19 - 9, state % 7 + 1)
    })
}

#[test]
fn exact_rational_identities() {
    let cases: &[(&[usize], &[usize])] = &[
        (&[4], &[3]),
        (&[1], &[5]),
        (&[3, 2], &[3, 5]),
        (&[2, 3, 2], &[3, 1, 3]),
        (&[5, 5], &[5, 5]),
    ];
    for (i, &(x_ext, h_ext)) in cases.iter().enumerate() {
        let seed = 17 + i as i64;
        let x = rational_tensor(x_ext, seed);
        let h = Kernel::new(rational_tensor(h_ext, seed * 3)).unwrap();
        let a = build_matrix(&h, x.shape()).unwrap();
        let ax = conv_full(&x, &h).unwrap();
        assert_eq!(ax.vectorize(), a.matvec(x.vectorize()).unwrap().as_slice());

        let y = rational_tensor(ax.shape().extents(), seed * 7);
        let aty = adjoint_apply(&y, &h, x.shape()).unwrap();
        assert_eq!(aty.vectorize(), a.transpose_matvec(y.vectorize()).unwrap().as_slice());
        assert_eq!(ax.dot(&y).unwrap(), x.dot(&aty).unwrap());
    }
}

#[test]
fn f32_instantiation_tracks_f64() {
    let x64 = Tensor::from_fn(Shape::new(vec![6, 5]).unwrap(), |i| (i[0] as f64 - 2.5) * 0.3 + i[1] as f64 * 0.1);
    let h64 = Kernel::new(Tensor::from_fn(Shape::new(vec![3, 3]).unwrap(), |i| 1.0 / (1 + i[0] + i[1]) as f64)).unwrap();
    let x32 = x64.convert(|v| v as f32);
    let h32 = Kernel::new(h64.tensor().convert(|v| v as f32)).unwrap();
    let y64 = conv_full(&x64, &h64).unwrap();
    let y32 = conv_full(&x32, &h32).unwrap();
    for (a, b) in y64.vectorize().iter().zip(y32.vectorize()) {
        assert!((a - *b as f64).abs() < 1e-5);
    }
}

/// Central differences of the objective, one coordinate at a time.
fn finite_difference_gradient(x: &Tensor<f64>, y: &Tensor<f64>, h: &Kernel<f64>, eps: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut plus = x.vectorize().to_vec();
            let mut minus = plus.clone();
            plus[i] += eps;
            minus[i] -= eps;
            let plus = Tensor::from_vec(x.shape().clone(), plus).unwrap();
            let minus = Tensor::from_vec(x.shape().clone(), minus).unwrap();
            (objective(&plus, y, h).unwrap() - objective(&minus, y, h).unwrap()) / (2.0 * eps)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_central_differences(
        x in tensor_strategy(vec![4, 4]),
        h in tensor_strategy(vec![3, 3]),
        y in tensor_strategy(vec![6, 6]),
    ) {
        let h = Kernel::new(h).unwrap();
        let g = normal_gradient(&x, &y, &h).unwrap();
        let fd = finite_difference_gradient(&x, &y, &h, 1e-4);
        let err: f64 = g.vectorize().iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let rel = err / g.norm().max(1e-12);
        prop_assert!(rel < 1e-6, "relative error {}", rel);
    }
}
