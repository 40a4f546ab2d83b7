use photocore_sim::bf16::is_bf16_exact;
use photocore_sim::noise::NoiseSource;
use photocore_sim::photocore::{photocore_gemm, Bypass, PhotocoreConfig};
use photocore_sim::tensor::Matrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-4.0f32..4.0, rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn operands() -> impl Strategy<Value = (Matrix, Matrix, usize)> {
    (1usize..12, 1usize..12, 1usize..6, prop::sample::select(vec![2usize, 4, 8]))
        .prop_flat_map(|(r, k, c, n)| (matrix(r, k), matrix(k, c), Just(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bypass_all_tracks_float_product((w, x, n) in operands()) {
        let y = photocore_gemm(&w, &x, &PhotocoreConfig::ideal(n), &NoiseSource::new(0), 0).unwrap();
        let r = w.matmul(&x).unwrap();
        let scale = w.data().iter().fold(0.0f32, |m, v| m.max(v.abs()))
            * x.data().iter().fold(0.0f32, |m, v| m.max(v.abs()))
            * w.cols() as f32;
        for (a, b) in y.data().iter().zip(r.data()) {
            prop_assert!((a - b).abs() <= 1e-2 * scale.max(1e-6));
        }
    }

    #[test]
    fn outputs_are_bf16_and_bounded((w, x, n) in operands(), gain in prop::sample::select(vec![1.0, 4.0, 16.0]), seed in 0u64..100) {
        let cfg = PhotocoreConfig { tile_size: n, gain, rng_seed: seed, ..Default::default() };
        let y = photocore_gemm(&w, &x, &cfg, &NoiseSource::new(seed), 1).unwrap();
        let k_tiles = w.cols().div_ceil(n) as f32;
        // Each tile contributes at most n * sw * sx / G (the ADC full scale).
        let bound = k_tiles * n as f32 * 4.0 * 4.0 / gain as f32 * 1.01;
        for v in y.data() {
            prop_assert!(is_bf16_exact(*v));
            prop_assert!(v.abs() <= bound);
        }
        prop_assert_eq!(y, photocore_gemm(&w, &x, &cfg, &NoiseSource::new(seed), 1).unwrap());
    }

    #[test]
    fn scaling_inputs_by_powers_of_two_is_equivariant((w, x, n) in operands(), shift in -4i32..4) {
        let cfg = PhotocoreConfig { tile_size: n, ..Default::default() }.with_sigma(0.0).with_bypass(Bypass::None);
        let s = 2f32.powi(shift);
        let xs = Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) * s);
        let a = photocore_gemm(&w, &x, &cfg, &NoiseSource::new(0), 0).unwrap();
        let b = photocore_gemm(&w, &xs, &cfg, &NoiseSource::new(0), 0).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert_eq!(p * s, *q);
        }
    }
}
