mod common;

use common::{azimuthal_oracle, rng, uniform};
use freqgan::objectives::azimuthal_integral;
use freqgan::tensor::Tensor;
use rand::Rng;

#[test]
fn constant_4x4_profile_is_one_ring() {
    let t = Tensor::full(vec![4, 4], 2.5);
    assert_eq!(azimuthal_integral(&t, None).unwrap(), vec![2.5]);
}

#[test]
fn bitwise_equal_to_ring_oracle_on_exact_inputs() {
    // small integers keep every partial sum exact, so both summation orders
    // give the same bits
    let mut r = rng(21);
    for h in 4..=33 {
        for w in 4..=33 {
            let data: Vec<f64> = (0..h * w).map(|_| r.random_range(0..1000) as f64).collect();
            let t = Tensor::new(vec![h, w], data.clone()).unwrap();
            let got = azimuthal_integral(&t, None).unwrap();
            let want = azimuthal_oracle(&data, h, w);
            assert_eq!(got.len(), want.len(), "{h}x{w}");
            for (a, b) in got.iter().zip(&want) {
                assert_eq!(a.to_bits(), b.to_bits(), "{h}x{w}");
            }
        }
    }
}

#[test]
fn close_to_ring_oracle_on_random_magnitudes() {
    let mut r = rng(22);
    for (h, w) in [(4, 9), (16, 16), (33, 20)] {
        let t = uniform(&mut r, &[h, w], 0.0, 5.0);
        let got = azimuthal_integral(&t, None).unwrap();
        let want = azimuthal_oracle(t.data(), h, w);
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn scales_linearly_and_rejects_negatives() {
    let mut r = rng(23);
    let t = uniform(&mut r, &[12, 12], 0.0, 1.0);
    let p = azimuthal_integral(&t, None).unwrap();
    let q = azimuthal_integral(&t.map(|v| 4.0 * v), None).unwrap();
    for (a, b) in p.iter().zip(&q) {
        assert!((4.0 * a - b).abs() < 1e-12);
    }
    assert!(azimuthal_integral(&t.map(|v| v - 0.5), None).is_err());
}

#[test]
fn tiny_planes_follow_the_same_rings() {
    for (h, w) in [(1, 1), (2, 2), (3, 3), (1, 3)] {
        assert!(azimuthal_integral(&Tensor::full(vec![h, w], 1.0), None).unwrap().is_empty());
    }
    for h in 1..4 {
        for w in 1..12 {
            let data: Vec<f64> = (0..h * w).map(|k| (k * 7 % 5) as f64).collect();
            let t = Tensor::new(vec![h, w], data.clone()).unwrap();
            assert_eq!(azimuthal_integral(&t, None).unwrap(), azimuthal_oracle(&data, h, w));
        }
    }
}
