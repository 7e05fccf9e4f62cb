use proptest::prelude::*;
use sfdm_core::transforms::{dct2_forward, dft_forward, inverse, transform_2d};
use sfdm_core::{Coeffs, Shape, Signal, TransformKind};

fn signal(shape: Shape, seed: &[f64]) -> Signal {
    let values = (0..shape.len())
        .map(|i| seed[i % seed.len()] * (1.0 + (i / seed.len()) as f64 * 0.1))
        .collect();
    Signal::new(shape, values).unwrap()
}

fn any_shape() -> impl Strategy<Value = Shape> {
    prop_oneof![
        (1usize..200).prop_map(Shape::d1),
        (1usize..16, 1usize..16).prop_map(|(r, c)| Shape::d2(r, c))
    ]
}

fn kinds() -> impl Strategy<Value = TransformKind> {
    prop_oneof![Just(TransformKind::Dct2), Just(TransformKind::Dft)]
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn inverse_undoes_forward(shape in any_shape(), kind in kinds(), seed in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let x = signal(shape, &seed);
        let back = inverse(&transform_2d(&x, kind).unwrap()).unwrap();
        prop_assert!(max_abs_diff(back.values(), x.values()) < 1e-10);
    }

    #[test]
    fn transforms_preserve_energy(shape in any_shape(), kind in kinds(), seed in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let x = signal(shape, &seed);
        let spec = transform_2d(&x, kind).unwrap();
        prop_assert!((spec.norm() - x.norm()).abs() <= 1e-10 * x.norm().max(1.0));
    }

    #[test]
    fn transforms_are_linear(n in 1usize..64, kind in kinds(), a in -3.0f64..3.0, s1 in prop::collection::vec(-1.0f64..1.0, 64), s2 in prop::collection::vec(-1.0f64..1.0, 64)) {
        let x = Signal::d1(s1[..n].to_vec()).unwrap();
        let y = Signal::d1(s2[..n].to_vec()).unwrap();
        let z = Signal::d1(s1[..n].iter().zip(&s2[..n]).map(|(p, q)| a * p + q).collect()).unwrap();
        let (fx, fy, fz) = (transform_2d(&x, kind).unwrap(), transform_2d(&y, kind).unwrap(), transform_2d(&z, kind).unwrap());
        match (fx.coeffs(), fy.coeffs(), fz.coeffs()) {
            (Coeffs::Real(p), Coeffs::Real(q), Coeffs::Real(r)) => {
                for i in 0..n {
                    prop_assert!((a * p[i] + q[i] - r[i]).abs() < 1e-10);
                }
            }
            (Coeffs::Complex(p), Coeffs::Complex(q), Coeffs::Complex(r)) => {
                for i in 0..n {
                    prop_assert!((p[i] * a + q[i] - r[i]).norm() < 1e-10);
                }
            }
            _ => prop_assert!(false, "coefficient types differ"),
        }
    }

    #[test]
    fn real_signals_have_hermitian_spectra(rows in 1usize..10, cols in 1usize..10, seed in prop::collection::vec(-2.0f64..2.0, 1..20)) {
        let shape = Shape::d2(rows, cols);
        let spec = dft_forward(&signal(shape, &seed)).unwrap();
        let c = spec.complex().unwrap();
        for k in 0..shape.len() {
            prop_assert!((c[shape.mirror(k)] - c[k].conj()).norm() < 1e-10);
        }
    }
}

#[test]
fn fast_dct_matches_the_definition() {
    for n in [1, 2, 3, 5, 8, 17, 31, 64] {
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let fast = dct2_forward(&Signal::d1(x.clone()).unwrap()).unwrap();
        // orthonormal DCT-II summed directly
        let slow: Vec<f64> = (0..n)
            .map(|k| {
                let s = if k == 0 {
                    (1.0 / n as f64).sqrt()
                } else {
                    (2.0 / n as f64).sqrt()
                };
                s * (0..n)
                    .map(|j| {
                        x[j] * (std::f64::consts::PI * (2 * j + 1) as f64 * k as f64
                            / (2 * n) as f64)
                            .cos()
                    })
                    .sum::<f64>()
            })
            .collect();
        assert!(max_abs_diff(fast.real().unwrap(), &slow) < 1e-10, "n = {n}");
    }
}
