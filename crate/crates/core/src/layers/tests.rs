use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::rng::Stream;
use crate::transforms::reference::{dct2_matrix, dft_matrix, matvec_complex, matvec_real};
use crate::transforms::{dct2_forward, dft_forward, dft_inverse_complex, Coeffs, Spectrum};

fn random_signal(shape: Shape, seed: u64) -> Signal {
    let mut rng = Stream::new(seed, 0);
    Signal::new(
        shape,
        (0..shape.len()).map(|_| rng.standard_normal()).collect(),
    )
    .unwrap()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

fn linear_arch(
    wiring: Wiring,
    transform: TransformKind,
    depth: usize,
    mixing: Mixing,
) -> Architecture {
    Architecture {
        wiring,
        transform,
        depth,
        width: 1,
        in_channels: 1,
        out_channels: 1,
        mixing,
        activation: Activation::None,
        bias: false,
        residual: false,
    }
}

fn identity_layer<C: Coef>(m: usize) -> KSpaceLayer<C> {
    let mut layer = KSpaceLayer::zeros(Mixing::PerMode, 1, 1, m, false, Activation::None);
    layer.weights_mut().fill(C::from_re(1.0));
    layer
}

#[test]
fn truncate_gathers_in_selector_order() {
    let shape = Shape::d1(4);
    let x = Spectrum::new(
        TransformKind::Dct2,
        shape,
        Coeffs::Real(vec![1.0, 2.0, 3.0, 4.0]),
    )
    .unwrap();
    let s = ModeSelector::new(shape, vec![0, 2]).unwrap();
    assert_eq!(truncate(&x, &s).unwrap(), Coeffs::Real(vec![1.0, 3.0]));
    let full = ModeSelector::identity(shape);
    assert_eq!(truncate(&x, &full).unwrap(), x.coeffs().clone());
}

#[test]
fn selector_rejects_bad_indices() {
    let shape = Shape::d1(4);
    assert!(ModeSelector::new(shape, vec![4]).is_err());
    assert!(ModeSelector::new(shape, vec![1, 1]).is_err());
    assert!(ModeSelector::new(shape, vec![]).is_err());
    assert!(ModeSelector::from_pairs(Shape::d2(2, 2), &[(2, 0)]).is_err());
}

#[test]
fn embed_then_truncate_round_trips_and_disjoint_is_zero() {
    let shape = Shape::d1(6);
    let s = ModeSelector::new(shape, vec![4, 1, 2]).unwrap();
    let z = Coeffs::Real(vec![7.0, -1.0, 0.5]);
    let spec = embed(&z, &s).unwrap();
    assert_eq!(truncate(&spec, &s).unwrap(), z);
    let other = ModeSelector::new(shape, vec![0, 3, 5]).unwrap();
    assert_eq!(truncate(&spec, &other).unwrap(), Coeffs::Real(vec![0.0; 3]));
    assert!(embed(&Coeffs::Real(vec![1.0]), &s).is_err());
}

#[test]
fn truncate_embed_matches_projection_matrix() {
    for n in 1..=16 {
        let shape = Shape::d1(n);
        let mut rng = Stream::new(n as u64, 1);
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        idx.truncate(1 + rng.below(n as u64) as usize);
        let s = ModeSelector::new(shape, idx.clone()).unwrap();
        // explicit S_m (m x N), then S_m^T S_m
        let mut sm = vec![0.0; idx.len() * n];
        for (r, &i) in idx.iter().enumerate() {
            sm[r * n + i] = 1.0;
        }
        let mut proj = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                proj[a * n + b] = (0..idx.len()).map(|r| sm[r * n + a] * sm[r * n + b]).sum();
            }
        }
        let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let spec = Spectrum::new(TransformKind::Dct2, shape, Coeffs::Real(x.clone())).unwrap();
        let got = embed(&truncate(&spec, &s).unwrap(), &s).unwrap();
        assert_eq!(got.real().unwrap(), matvec_real(&proj, &x).as_slice());
    }
}

#[test]
fn truncation_is_idempotent() {
    let shape = Shape::d2(4, 5);
    let s = ModeSelector::new(shape, vec![0, 3, 7, 11, 19]).unwrap();
    let x = dct2_forward(&random_signal(shape, 3)).unwrap();
    let once = embed(&truncate(&x, &s).unwrap(), &s).unwrap();
    let twice = embed(&truncate(&once, &s).unwrap(), &s).unwrap();
    assert_eq!(once, twice);
}

/// Explicit `N x N` matrix `S_m^T A S_m` for dense `A`.
fn block_matrix(n: usize, idx: &[usize], a: &[f64]) -> Vec<f64> {
    let m = idx.len();
    let mut out = vec![0.0; n * n];
    for r in 0..m {
        for c in 0..m {
            out[idx[r] * n + idx[c]] = a[r * m + c];
        }
    }
    out
}

#[test]
fn composed_block_map_matches_explicit_matrix() {
    let (n, m) = (8, 3);
    let shape = Shape::d1(n);
    let sel = ModeSelector::new(shape, vec![0, 1, 2]).unwrap();
    let mut rng = Stream::new(11, 0);
    let a: Vec<f64> = (0..m * m).map(|_| rng.standard_normal()).collect();
    let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
    let layer =
        KSpaceLayer::new(Mixing::Dense, 1, 1, m, a.clone(), None, Activation::None).unwrap();
    let z = sel.gather(&x);
    let composed = sel.scatter(&layer.apply(&z));
    let explicit = matvec_real(&block_matrix(n, sel.indices(), &a), &x);
    assert!(rel(&composed, &explicit) < 1e-12);
    assert!(composed[m..n].iter().all(|&v| v == 0.0));
}

#[test]
fn identity_layer_full_spectrum_is_identity() {
    for kind in [TransformKind::Dct2, TransformKind::Dft] {
        let shape = Shape::d2(6, 8);
        let x = random_signal(shape, 5);
        let sel = ModeSelector::full(kind, shape);
        let y = match kind {
            TransformKind::Dct2 => {
                fdm_layer_forward(&x, &identity_layer::<f64>(sel.m()), &sel, None)
            }
            TransformKind::Dft => {
                fdm_layer_forward(&x, &identity_layer::<Complex64>(sel.m()), &sel, None)
            }
        }
        .unwrap();
        assert!(rel(y.values(), x.values()) < 1e-12, "{kind:?}");
    }
}

#[test]
fn residual_only_layer_is_identity() {
    let shape = Shape::d1(16);
    let x = random_signal(shape, 6);
    let sel = ModeSelector::identity(shape);
    let zero = KSpaceLayer::<f64>::zeros(Mixing::Dense, 1, 1, 16, false, Activation::None);
    let y = fdm_layer_forward(&x, &zero, &sel, Some(1.0)).unwrap();
    assert!(rel(y.values(), x.values()) < 1e-15);
}

#[test]
fn dct_layer_matches_dense_matrix_pipeline() {
    for n in [4, 8, 13, 16] {
        let m = n / 2;
        let shape = Shape::d1(n);
        let mut rng = Stream::new(n as u64, 2);
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        idx.truncate(m);
        let sel = ModeSelector::new(shape, idx.clone()).unwrap();
        let a: Vec<f64> = (0..m * m).map(|_| rng.standard_normal()).collect();
        let g = 0.3;
        let layer =
            KSpaceLayer::new(Mixing::Dense, 1, 1, m, a.clone(), None, Activation::None).unwrap();
        let x = random_signal(shape, n as u64 + 100);
        let got = fdm_layer_forward(&x, &layer, &sel, Some(g)).unwrap();
        // W^T (S^T A S) W x + g x
        let w = dct2_matrix(n);
        let wx = matvec_real(&w, x.values());
        let bx = matvec_real(&block_matrix(n, &idx, &a), &wx);
        let mut wt = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                wt[c * n + r] = w[r * n + c];
            }
        }
        let want: Vec<f64> = matvec_real(&wt, &bx)
            .iter()
            .zip(x.values())
            .map(|(y, x)| y + g * x)
            .collect();
        assert!(rel(got.values(), &want) < 1e-9, "n={n}");
    }
}

#[test]
fn dft_layer_matches_dense_matrix_pipeline() {
    for n in [4, 7, 8, 16] {
        let shape = Shape::d1(n);
        // nonnegative frequencies up to and including Nyquist
        let idx: Vec<usize> = (0..=n / 2).collect();
        let m = idx.len();
        let sel = ModeSelector::new(shape, idx.clone()).unwrap();
        let mut rng = Stream::new(n as u64, 3);
        let a: Vec<Complex64> = (0..m * m)
            .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()))
            .collect();
        let layer =
            KSpaceLayer::new(Mixing::Dense, 1, 1, m, a.clone(), None, Activation::None).unwrap();
        let x = random_signal(shape, n as u64 + 200);
        let got = fdm_layer_forward(&x, &layer, &sel, None).unwrap();

        let w = dft_matrix(n);
        let xc: Vec<Complex64> = x.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let spec = matvec_complex(&w, &xc);
        let z: Vec<Complex64> = idx.iter().map(|&i| spec[i]).collect();
        let u: Vec<Complex64> = (0..m)
            .map(|r| (0..m).map(|c| a[r * m + c] * z[c]).sum())
            .collect();
        let mut full = vec![Complex64::default(); n];
        for (r, &i) in idx.iter().enumerate() {
            let mirror = (n - i) % n;
            if mirror == i {
                full[i] = Complex64::new(u[r].re, 0.0);
            } else {
                full[i] = u[r];
                full[mirror] = u[r].conj();
            }
        }
        let wh: Vec<Complex64> = (0..n * n).map(|p| w[(p % n) * n + p / n].conj()).collect();
        let y = matvec_complex(&wh, &full);
        let imag = y.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        assert!(imag < 1e-9, "n={n}: oracle not real");
        let want: Vec<f64> = y.iter().map(|v| v.re).collect();
        assert!(rel(got.values(), &want) < 1e-9, "n={n}");
    }
}

#[test]
fn dft_embedding_leaves_no_imaginary_residue() {
    let shape = Shape::d2(8, 6);
    let mut rng = Stream::new(9, 0);
    let pairs: Vec<(usize, usize)> = vec![
        (0, 0),
        (0, 1),
        (0, 3),
        (1, 0),
        (1, 2),
        (4, 3),
        (7, 1),
        (4, 0),
    ];
    let sel = ModeSelector::from_pairs(shape, &pairs).unwrap();
    assert!(sel.is_hermitian_valid());
    let z = Coeffs::Complex(
        (0..sel.m())
            .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()))
            .collect(),
    );
    let spec = embed(&z, &sel).unwrap();
    let y = dft_inverse_complex(&spec).unwrap();
    let imag = y.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    assert!(imag < 1e-9, "{imag}");
}

#[test]
fn dft_rejects_selectors_holding_both_partners() {
    let shape = Shape::d1(8);
    let sel = ModeSelector::new(shape, vec![1, 7]).unwrap();
    assert!(!sel.is_hermitian_valid());
    let layer = identity_layer::<Complex64>(2);
    let x = random_signal(shape, 1);
    assert!(fdm_layer_forward(&x, &layer, &sel, None).is_err());
}

#[test]
fn t1_identity_depth1_returns_truncated_spectrum() {
    let shape = Shape::d1(32);
    let sel = ModeSelector::new(shape, (0..10).collect()).unwrap();
    let model = SpectralModel::new(
        Wiring::T1,
        sel.clone(),
        vec![identity_layer::<f64>(10)],
        vec![],
    )
    .unwrap();
    let x = random_signal(shape, 4);
    let y = t1_forward(&x, &model).unwrap();
    let want = truncate(&dct2_forward(&x).unwrap(), &sel).unwrap();
    assert_eq!(Coeffs::Real(y), want);
}

#[test]
fn t1_prediction_is_selected_mode_filter() {
    let shape = Shape::d2(8, 8);
    let x = random_signal(shape, 8);
    for kind in [TransformKind::Dct2, TransformKind::Dft] {
        let pairs: Vec<(usize, usize)> = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
        let sel = ModeSelector::from_pairs(shape, &pairs).unwrap();
        let (y, spec) = match kind {
            TransformKind::Dct2 => {
                let model = SpectralModel::new(
                    Wiring::T1,
                    sel.clone(),
                    vec![identity_layer::<f64>(9)],
                    vec![],
                )
                .unwrap();
                (
                    t1_predict_signal(&x, &model).unwrap(),
                    dct2_forward(&x).unwrap(),
                )
            }
            TransformKind::Dft => {
                let model = SpectralModel::new(
                    Wiring::T1,
                    sel.clone(),
                    vec![identity_layer::<Complex64>(9)],
                    vec![],
                )
                .unwrap();
                (
                    t1_predict_signal(&x, &model).unwrap(),
                    dft_forward(&x).unwrap(),
                )
            }
        };
        let filtered =
            crate::transforms::inverse(&embed(&truncate(&spec, &sel).unwrap(), &sel).unwrap())
                .unwrap();
        assert!(rel(y.values(), filtered.values()) < 1e-12, "{kind:?}");
        assert!(y.norm() <= x.norm() + 1e-12);
    }
}

#[test]
fn zero_padding_has_minimal_norm_among_completions() {
    let shape = Shape::d1(16);
    let sel = ModeSelector::new(shape, (0..5).collect()).unwrap();
    let model =
        SpectralModel::new(Wiring::T1, sel, vec![identity_layer::<f64>(5)], vec![]).unwrap();
    let x = random_signal(shape, 10);
    let y = t1_predict_signal(&x, &model).unwrap();
    let spec = dct2_forward(&x).unwrap();
    let mut rng = Stream::new(10, 1);
    for _ in 0..20 {
        let mut c = spec.real().unwrap().to_vec();
        for v in c.iter_mut().skip(5) {
            *v = rng.standard_normal();
        }
        let completion = Spectrum::new(TransformKind::Dct2, shape, Coeffs::Real(c)).unwrap();
        assert!(y.norm() <= completion.norm() + 1e-12);
    }
}

#[test]
fn full_spectrum_t1_equals_fdm_layer_in_kspace() {
    let shape = Shape::d1(12);
    let sel = ModeSelector::identity(shape);
    let mut model = SpectralModel::<f64>::build(
        &linear_arch(Wiring::T1, TransformKind::Dct2, 1, Mixing::Dense),
        sel.clone(),
        InitPolicy::Vp,
        3,
    )
    .unwrap();
    model.layers_mut()[0].activation = Activation::None;
    let x = random_signal(shape, 12);
    let k = t1_forward(&x, &model).unwrap();
    let n = fdm_layer_forward(&x, &model.layers()[0], &sel, None).unwrap();
    let kn = dct2_forward(&n).unwrap();
    assert!(rel(&k, kn.real().unwrap()) < 1e-12);
}

#[test]
fn depth1_fno_equals_t1_prediction() {
    let shape = Shape::d2(8, 8);
    let x = random_signal(shape, 13);
    let pairs: Vec<(usize, usize)> = vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 3)];
    let sel = ModeSelector::from_pairs(shape, &pairs).unwrap();
    for kind in [TransformKind::Dct2, TransformKind::Dft] {
        let t1 = AnyModel::build(
            &linear_arch(Wiring::T1, kind, 1, Mixing::Dense),
            sel.clone(),
            InitPolicy::Vp,
            4,
        )
        .unwrap();
        let fno = AnyModel::build(
            &linear_arch(Wiring::FnoStyle, kind, 1, Mixing::Dense),
            sel.clone(),
            InitPolicy::Vp,
            4,
        )
        .unwrap();
        assert_eq!(t1.flat_params(), fno.flat_params());
        let a = t1.predict(x.values()).unwrap();
        let b = fno.predict(x.values()).unwrap();
        assert!(rel(&a, &b) < 1e-12, "{kind:?}");
    }
}

#[test]
fn identity_fno_stack_is_identity() {
    let shape = Shape::d1(20);
    let sel = ModeSelector::identity(shape);
    let layers = (0..4).map(|_| identity_layer::<f64>(20)).collect();
    let model = SpectralModel::new(Wiring::FnoStyle, sel, layers, vec![]).unwrap();
    let x = random_signal(shape, 14);
    let y = fno_stack_forward(&x, &model).unwrap();
    assert!(rel(y.values(), x.values()) < 1e-12);
}

#[test]
fn transform_counts_follow_wiring() {
    let shape = Shape::d2(16, 16);
    let sel = ModeSelector::from_pairs(shape, &[(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
    for kind in [TransformKind::Dct2, TransformKind::Dft] {
        for d in 1..=8 {
            let mut arch = linear_arch(Wiring::T1, kind, d, Mixing::PerMode);
            arch.width = 3;
            arch.activation = Activation::Gelu;
            let t1 = AnyModel::build(&arch, sel.clone(), InitPolicy::Vp, 1).unwrap();
            assert_eq!(t1.count_transforms(false).unwrap(), (1, 0));
            assert_eq!(t1.count_transforms(true).unwrap(), (1, 1));
            arch.wiring = Wiring::FnoStyle;
            arch.residual = true;
            let fno = AnyModel::build(&arch, sel.clone(), InitPolicy::Vp, 1).unwrap();
            assert_eq!(fno.count_transforms(true).unwrap(), (d, d));
        }
    }
}

#[test]
fn wiring_mismatch_is_rejected() {
    let shape = Shape::d1(8);
    let sel = ModeSelector::identity(shape);
    let t1 = SpectralModel::new(
        Wiring::T1,
        sel.clone(),
        vec![identity_layer::<f64>(8)],
        vec![],
    )
    .unwrap();
    let x = random_signal(shape, 1);
    assert!(fno_stack_forward(&x, &t1).is_err());
    let fno = SpectralModel::new(
        Wiring::FnoStyle,
        sel.clone(),
        vec![identity_layer::<f64>(8)],
        vec![],
    )
    .unwrap();
    assert!(t1_forward(&x, &fno).is_err());
    assert!(SpectralModel::new(
        Wiring::T1,
        sel,
        vec![identity_layer::<f64>(8)],
        vec![vec![1.0]]
    )
    .is_err());
    assert!(
        SpectralModel::<f64>::new(Wiring::T1, ModeSelector::identity(shape), vec![], vec![])
            .is_err()
    );
}

#[test]
fn vp_init_targets_truncating_layers_only() {
    let shape = Shape::d1(256);
    let sel = ModeSelector::new(shape, (0..16).collect()).unwrap();
    let mut arch = linear_arch(Wiring::T1, TransformKind::Dct2, 3, Mixing::Dense);
    arch.width = 8;
    let var = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
    let t1 = SpectralModel::<f64>::build(&arch, sel.clone(), InitPolicy::Vp, 2).unwrap();
    let v0 = var(t1.layers()[0].weights());
    assert!((v0 / (256.0 / 256.0) - 1.0).abs() < 0.1, "{v0}");
    let v1 = var(t1.layers()[1].weights());
    assert!((v1 * (8.0 * 16.0) - 1.0).abs() < 0.1, "{v1}");
    arch.wiring = Wiring::FnoStyle;
    let fno = SpectralModel::<f64>::build(&arch, sel, InitPolicy::Vp, 2).unwrap();
    let v1 = var(fno.layers()[1].weights());
    assert!((v1 * 8.0 - 1.0).abs() < 0.1, "{v1}");
}

#[test]
fn init_is_deterministic() {
    let shape = Shape::d2(8, 8);
    let sel = ModeSelector::hermitian_full(shape);
    let mut arch = linear_arch(Wiring::FnoStyle, TransformKind::Dft, 2, Mixing::PerMode);
    arch.residual = true;
    arch.bias = true;
    let a = AnyModel::build(&arch, sel.clone(), InitPolicy::Xavier, 42).unwrap();
    let b = AnyModel::build(&arch, sel.clone(), InitPolicy::Xavier, 42).unwrap();
    let c = AnyModel::build(&arch, sel, InitPolicy::Xavier, 43).unwrap();
    assert_eq!(a.flat_params(), b.flat_params());
    assert_ne!(a.flat_params(), c.flat_params());
}

#[test]
fn checkpoint_round_trips() {
    let shape = Shape::d2(6, 10);
    let sel = ModeSelector::from_pairs(shape, &[(0, 0), (0, 2), (1, 1), (5, 3)]).unwrap();
    for kind in [TransformKind::Dct2, TransformKind::Dft] {
        for wiring in [Wiring::T1, Wiring::FnoStyle] {
            let arch = Architecture {
                wiring,
                transform: kind,
                depth: 3,
                width: 5,
                in_channels: 2,
                out_channels: 1,
                mixing: Mixing::PerMode,
                activation: Activation::Gelu,
                bias: true,
                residual: wiring == Wiring::FnoStyle,
            };
            let model = AnyModel::build(&arch, sel.clone(), InitPolicy::Vp, 9).unwrap();
            let mut bytes = Vec::new();
            write_checkpoint(&model, &mut bytes).unwrap();
            assert_eq!(&bytes[..4], b"SFDM");
            let back = read_checkpoint(bytes.as_slice()).unwrap();
            let mut again = Vec::new();
            write_checkpoint(&back, &mut again).unwrap();
            assert_eq!(bytes, again);
            let x: Vec<f64> = (0..2 * shape.len()).map(|i| (i as f64).sin()).collect();
            assert_eq!(model.predict(&x).unwrap(), back.predict(&x).unwrap());
        }
    }
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let sel = ModeSelector::identity(Shape::d1(8));
    let model = AnyModel::build(
        &linear_arch(Wiring::T1, TransformKind::Dct2, 1, Mixing::Dense),
        sel,
        InitPolicy::Vp,
        1,
    )
    .unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&model, &mut bytes).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(read_checkpoint(bad.as_slice()).is_err());
    assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    let mut long = bytes.clone();
    long.extend_from_slice(&[0; 8]);
    assert!(read_checkpoint(long.as_slice()).is_err());
}

#[test]
fn param_set_flatten_round_trips() {
    let shape = Shape::d1(16);
    let sel = ModeSelector::hermitian_full(shape);
    let mut arch = linear_arch(Wiring::FnoStyle, TransformKind::Dft, 2, Mixing::Dense);
    arch.width = 3;
    arch.bias = true;
    arch.residual = true;
    let model = SpectralModel::<Complex64>::build(&arch, sel, InitPolicy::Vp, 5).unwrap();
    let p = model.params();
    let flat = p.flatten();
    assert_eq!(flat.len(), p.len_flat());
    let mut q = p.zeros_like();
    q.load_flat(&flat).unwrap();
    assert_eq!(p, q);
    assert!(q.load_flat(&flat[1..]).is_err());
}

proptest! {
    #[test]
    fn embed_truncate_identity_on_reduced(values in prop::collection::vec(-1e3f64..1e3, 1..12), seed in 0u64..1000) {
        let m = values.len();
        let n = m + 5;
        let shape = Shape::d1(n);
        let mut idx: Vec<usize> = (0..n).collect();
        Stream::new(seed, 0).shuffle(&mut idx);
        idx.truncate(m);
        let s = ModeSelector::new(shape, idx).unwrap();
        let z = Coeffs::Real(values);
        prop_assert_eq!(truncate(&embed(&z, &s).unwrap(), &s).unwrap(), z);
    }
}
