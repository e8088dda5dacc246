mod common;

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use common::{rng, uniform};
use freqgan::analysis::{
    fake_detection_probe, frequency_gap, mean_spectrum, normalize_maps, sfa_delta,
    sfa_sensitivity_map, ProbeConfig, ProbeDomain,
};
use freqgan::data::{load_dataset, DatasetDescriptor};
use freqgan::models::{Architecture, GanModel};
use freqgan::tensor::Tensor;

#[test]
fn sfa_delta_matches_its_cosine_form() {
    let eps = 10.0 / 255.0;
    for h in [1, 2, 5, 8, 16] {
        for u in 0..h {
            for v in 0..h {
                let d = sfa_delta(u, v, eps, h).unwrap();
                assert!(d.imag_residue < 1e-10);
                for i in 0..h {
                    for k in 0..h {
                        let theta = 2.0 * PI * ((u * i + v * k) % h) as f64 / h as f64;
                        let want = 2.0 * SQRT_2 * eps * (theta - FRAC_PI_4).cos();
                        assert!((d.values.data()[i * h + k] - want).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn sfa_delta_small_cases() {
    let eps = 0.1;
    let d = sfa_delta(0, 0, eps, 4).unwrap();
    assert!(d.values.data().iter().all(|&x| (x - 2.0 * eps).abs() < 1e-15));
    let d = sfa_delta(1, 1, eps, 2).unwrap();
    let want = [2.0 * eps, -2.0 * eps, -2.0 * eps, 2.0 * eps];
    for (a, b) in d.values.data().iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(sfa_delta(4, 0, eps, 4).is_err());
}

#[test]
fn sfa_delta_mirror_pairs_are_reflections() {
    // delta(H-u, H-v) is delta(u, v) read at (-i, -k) mod H
    for h in [3, 4, 7] {
        for u in 0..h {
            for v in 0..h {
                let a = sfa_delta(u, v, 1.0, h).unwrap().values;
                let b = sfa_delta((h - u) % h, (h - v) % h, 1.0, h).unwrap().values;
                for i in 0..h {
                    for k in 0..h {
                        let r = ((h - i) % h) * h + (h - k) % h;
                        assert!((b.data()[i * h + k] - a.data()[r]).abs() < 1e-12);
                    }
                }
            }
        }
    }
    // the unreflected pairs differ, e.g. H = 4, (1, 0) at i = 1
    let a = sfa_delta(1, 0, 1.0, 4).unwrap().values;
    let b = sfa_delta(3, 0, 1.0, 4).unwrap().values;
    assert!((a.data()[4] - 2.0).abs() < 1e-12 && (b.data()[4] + 2.0).abs() < 1e-12);
}

fn tiny_model(seed: u64) -> GanModel {
    let arch = Architecture {
        latent_dim: 4,
        base_channels: 2,
        ..Architecture::default()
    };
    GanModel::init(arch, seed).unwrap()
}

#[test]
fn sensitivity_map_matches_direct_evaluation() {
    let model = tiny_model(3);
    let mut r = rng(30);
    let images = uniform(&mut r, &[5, 3, 16, 16], -1.0, 1.0);
    let eps = 10.0 / 255.0;
    let map = sfa_sensitivity_map(&model, &images, eps).unwrap();
    assert_eq!(map.values.len(), 256);
    let base = model.discriminate(&images).unwrap();
    for (u, v) in [(0, 0), (3, 11), (8, 8), (15, 1)] {
        let d = sfa_delta(u, v, eps, 16).unwrap().values;
        let mut x = images.clone();
        for (j, px) in x.data_mut().iter_mut().enumerate() {
            *px += 2.0 * d.data()[j % 256];
        }
        let att = model.discriminate(&x).unwrap();
        let want: f64 =
            base.data().iter().zip(att.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 5.0;
        assert!((map.get(u, v) - want).abs() < 1e-15);
    }
    assert!(map.values.iter().all(|&v| v >= 0.0));
}

#[test]
fn zero_epsilon_and_blind_discriminators_give_zero_maps() {
    let mut model = tiny_model(4);
    let mut r = rng(31);
    let images = uniform(&mut r, &[3, 3, 16, 16], -1.0, 1.0);
    let map = sfa_sensitivity_map(&model, &images, 0.0).unwrap();
    assert!(map.values.iter().all(|&v| v == 0.0));
    for t in model.disc.tensors.iter_mut() {
        *t = Tensor::zeros(t.shape().to_vec());
    }
    let map = sfa_sensitivity_map(&model, &images, 10.0 / 255.0).unwrap();
    assert!(map.values.iter().all(|&v| v == 0.0));
    assert!(sfa_sensitivity_map(&model, &Tensor::zeros(vec![1, 3, 16, 8]), 0.1).is_err());
}

#[test]
fn maps_share_one_normalization() {
    let model = tiny_model(5);
    let mut r = rng(32);
    let images = uniform(&mut r, &[2, 3, 16, 16], -1.0, 1.0);
    let a = sfa_sensitivity_map(&model, &images, 5.0 / 255.0).unwrap();
    let b = sfa_sensitivity_map(&model, &images, 20.0 / 255.0).unwrap();
    let m = a.max().max(b.max());
    let n = normalize_maps(&[a.clone(), b.clone()]);
    assert!(n.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
    assert!((n[0][7] - a.values[7] / m).abs() < 1e-15);
    assert!((n[1][7] - b.values[7] / m).abs() < 1e-15);
}

#[test]
fn gap_examples_and_symmetry() {
    let real = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let fake = Tensor::zeros(vec![1, 1, 2, 2]);
    let g = frequency_gap(&real, &fake, None).unwrap();
    assert!((g.all_band_gap - 0.5).abs() < 1e-12);
    assert_eq!(g.lower_band_gap, None);

    let mut r = rng(33);
    let a = uniform(&mut r, &[6, 3, 8, 8], -1.0, 1.0);
    let b = uniform(&mut r, &[4, 3, 8, 8], -1.0, 1.0);
    assert_eq!(frequency_gap(&a, &a, Some(0.5)).unwrap().all_band_gap, 0.0);
    let ab = frequency_gap(&a, &b, Some(1.0)).unwrap();
    let ba = frequency_gap(&b, &a, Some(1.0)).unwrap();
    assert_eq!(ab.all_band_gap, ba.all_band_gap);
    assert_eq!(ab.lower_band_gap, Some(ab.all_band_gap));
    let low = frequency_gap(&a, &b, Some(0.3)).unwrap().lower_band_gap.unwrap();
    assert!(low < ab.all_band_gap);
    assert!(frequency_gap(&a, &Tensor::zeros(vec![2, 3, 4, 4]), None).is_err());
}

#[test]
fn mean_spectrum_of_constants_and_permutations() {
    let c = -0.4;
    let set = Tensor::full(vec![3, 2, 8, 8], c);
    let s = mean_spectrum(&set).unwrap();
    for (k, &v) in s.values.data().iter().enumerate() {
        let want = if k == 0 { 8.0 * c.abs() } else { 0.0 };
        assert!((v - want).abs() < 1e-12);
    }
    assert!((s.display.data()[0] - (8.0 * c.abs()).ln_1p()).abs() < 1e-12);

    let mut r = rng(34);
    let a = uniform(&mut r, &[5, 3, 8, 8], -1.0, 1.0);
    let perm = a.select0(&[3, 0, 4, 2, 1]).unwrap();
    let (p, q) = (mean_spectrum(&a).unwrap(), mean_spectrum(&perm).unwrap());
    assert!(p.values.max_abs_diff(&q.values) < 1e-12);
}

fn textures(seed: u64, count: usize) -> Tensor {
    load_dataset(&DatasetDescriptor {
        seed,
        count,
        ..DatasetDescriptor::default()
    })
    .unwrap()
}

#[test]
fn probe_on_separable_and_scaled_sets() {
    let real = textures(1, 60);
    let fake = real.map(|v| v + 0.5);
    let cfg = ProbeConfig::default();
    for domain in [ProbeDomain::Spatial, ProbeDomain::Frequency] {
        let a = fake_detection_probe(&real, &fake, domain, 3, &cfg).unwrap();
        assert!(a.train_accuracy >= 0.99, "{domain:?} {a:?}");
        let b = fake_detection_probe(&real, &fake, domain, 3, &cfg).unwrap();
        assert_eq!(a, b);
    }
    let mixed = textures(2, 60);
    let base = fake_detection_probe(&real, &mixed, ProbeDomain::Frequency, 4, &cfg).unwrap();
    let scaled = fake_detection_probe(
        &real.map(|v| 3.0 * v),
        &mixed.map(|v| 3.0 * v),
        ProbeDomain::Frequency,
        4,
        &cfg,
    )
    .unwrap();
    assert_eq!(base.train_accuracy, scaled.train_accuracy);
    assert_eq!(base.test_accuracy, scaled.test_accuracy);
    assert!(fake_detection_probe(&real, &textures(3, 10), ProbeDomain::Spatial, 0, &cfg).is_err());
}
