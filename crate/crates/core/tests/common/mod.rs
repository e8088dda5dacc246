//! Independent reference implementations used by the integration tests.
//! Everything here is written from the defining formulas with plain loops,
//! without touching the library's matrices or kernels.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use freqgan::tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn alpha(u: usize) -> f64 {
    if u == 0 {
        std::f64::consts::FRAC_1_SQRT_2
    } else {
        1.0
    }
}

/// Direct double sum of the 2-D DCT-II for one `H x W` plane. For square
/// planes the scale is `2 a(u) a(v) / H`; rectangular planes use
/// `sqrt(2/H) sqrt(2/W) a(u) a(v)`.
pub fn brute_dct2(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let mut s = 0.0;
            for i in 0..h {
                for j in 0..w {
                    s += x[i * w + j]
                        * ((2 * i + 1) as f64 * u as f64 * PI / (2 * h) as f64).cos()
                        * ((2 * j + 1) as f64 * v as f64 * PI / (2 * w) as f64).cos();
                }
            }
            out[u * w + v] = (2.0 / h as f64).sqrt() * (2.0 / w as f64).sqrt() * alpha(u) * alpha(v) * s;
        }
    }
    out
}

pub fn brute_idct2(c: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut s = 0.0;
            for u in 0..h {
                for v in 0..w {
                    s += alpha(u)
                        * alpha(v)
                        * c[u * w + v]
                        * ((2 * i + 1) as f64 * u as f64 * PI / (2 * h) as f64).cos()
                        * ((2 * j + 1) as f64 * v as f64 * PI / (2 * w) as f64).cos();
                }
            }
            out[i * w + j] = (2.0 / h as f64).sqrt() * (2.0 / w as f64).sqrt() * s;
        }
    }
    out
}

/// Unnormalised DFT `sum x(i,j) exp(-2 pi j (u i / H + v j / W))` as (re, im).
pub fn brute_dft2(x: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..h {
                for j in 0..w {
                    let t = -2.0 * PI * ((u * i) as f64 / h as f64 + (v * j) as f64 / w as f64);
                    a += x[i * w + j] * t.cos();
                    b += x[i * w + j] * t.sin();
                }
            }
            re[u * w + v] = a;
            im[u * w + v] = b;
        }
    }
    (re, im)
}

/// Ring means by integer radius about `((H-1)/2, (W-1)/2)`, grouping pixels
/// directly by `floor(r)`; the smallest and largest radius groups are left
/// out.
pub fn azimuthal_oracle(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (cx, cy) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut groups: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for i in 0..h {
        for j in 0..w {
            let r = (i as f64 - cx).hypot(j as f64 - cy) as i64;
            let e = groups.entry(r).or_insert((0.0, 0));
            e.0 += x[i * w + j];
            e.1 += 1;
        }
    }
    let n = groups.len();
    groups
        .values()
        .enumerate()
        .filter(|(k, _)| *k != 0 && *k + 1 != n)
        .map(|(_, (s, c))| s / *c as f64)
        .collect()
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)` (0 when both vanish).
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Compare the tape gradient of `build(inputs)` with respect to input `which`
/// against central differences with step `1e-4`. Returns the relative error.
pub fn check_gradient(
    inputs: &[Tensor],
    which: usize,
    build: &dyn Fn(&mut Graph, &[Var]) -> Var,
) -> f64 {
    let eval = |ins: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).item().unwrap()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .enumerate()
        .map(|(k, t)| if k == which { g.param(t.clone()) } else { g.constant(t.clone()) })
        .collect();
    let out = build(&mut g, &vars);
    let analytic = g.backward(out).unwrap().wrt(vars[which]);

    let step = 1e-4;
    let mut numeric = Vec::with_capacity(inputs[which].numel());
    for k in 0..inputs[which].numel() {
        let mut plus = inputs.to_vec();
        plus[which].data_mut()[k] += step;
        let mut minus = inputs.to_vec();
        minus[which].data_mut()[k] -= step;
        numeric.push((eval(&plus) - eval(&minus)) / (2.0 * step));
    }
    rel_err(analytic.data(), &numeric)
}

fn signed(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    uniform(rng, shape, -1.0, 1.0).map(|v| v.signum() * (lo + (hi - lo) * v.abs()))
}

fn plus_noise(rng: &mut ChaCha8Rng, base: &Tensor, n: usize, amp: f64) -> Tensor {
    let items: Vec<Tensor> = (0..n)
        .map(|_| {
            let noise = uniform(rng, base.shape(), -amp, amp);
            Tensor::new(base.shape().to_vec(), base.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect())
                .unwrap()
        })
        .collect();
    Tensor::stack(&items).unwrap()
}

/// Random real/fake batches whose compared statistics stay well away from
/// zero and from each other, so `|.|` in MAE and MKL is smooth at the scale
/// of the finite-difference step.
fn kink_free_batches(
    rng: &mut ChaCha8Rng,
    transform: freqgan::objectives::MatchTransform,
    h: usize,
    w: usize,
) -> (Tensor, Tensor) {
    use freqgan::objectives::MatchTransform;
    use freqgan::spectral::{idct2, SpectrumReal};
    let shape = [2, h, w];
    match transform {
        MatchTransform::Pixel | MatchTransform::Dct => {
            let p = signed(rng, &shape, 0.5, 1.0);
            let p = if transform == MatchTransform::Dct { idct2(&SpectrumReal(p)).unwrap() } else { p };
            let neg = p.map(|v| -v);
            (plus_noise(rng, &p, 4, 0.01), plus_noise(rng, &neg, 3, 0.01))
        }
        MatchTransform::Dft => {
            // an impulse gives a flat spectrum; small additions keep every
            // magnitude near 1 (real) or 2 (fake)
            let with_impulse = |rng: &mut ChaCha8Rng, a: f64| {
                let mut t = uniform(rng, &shape, -0.005, 0.005);
                t.data_mut()[0] += a;
                t.data_mut()[h * w] += a;
                t
            };
            let pr = with_impulse(rng, 1.0);
            let pf = with_impulse(rng, 2.0);
            (plus_noise(rng, &pr, 4, 0.002), plus_noise(rng, &pf, 3, 0.002))
        }
    }
}

fn drop_logits(
    g: &mut Graph,
    drop: &freqgan::spectral::FDrop,
    x: Var,
    w: Var,
) -> Var {
    let n = g.shape(x)[0];
    let d = drop.apply(g, x).unwrap();
    let flat = g.reshape(d, &[n, g.shape(w)[0]]).unwrap();
    let l = g.matmul(flat, w).unwrap();
    g.reshape(l, &[n]).unwrap()
}

/// Relative gradient error for every loss on small random instances
/// (images at most 8x8, batches at most 4), keyed by a readable name.
pub fn loss_gradient_cases() -> Vec<(String, f64)> {
    use freqgan::analysis::probe_loss;
    use freqgan::objectives::{
        discriminator_loss, discriminator_loss_logits, generator_loss_adv,
        generator_loss_adv_logits, FMatch, MatchDistance, MatchVariant, SpectralReg,
    };
    use freqgan::spectral::FDrop;

    let mut out = Vec::new();
    let mut r = rng(1);

    let p_real = uniform(&mut r, &[4], 0.05, 0.95);
    let p_fake = uniform(&mut r, &[3], 0.05, 0.95);
    let d = |g: &mut Graph, v: &[Var]| discriminator_loss(g, v[0], v[1]).unwrap();
    out.push(("discriminator loss / real".into(), check_gradient(&[p_real.clone(), p_fake.clone()], 0, &d)));
    out.push(("discriminator loss / fake".into(), check_gradient(&[p_real, p_fake.clone()], 1, &d)));
    out.push((
        "generator loss".into(),
        check_gradient(&[p_fake], 0, &|g, v| generator_loss_adv(g, v[0]).unwrap()),
    ));

    let l_real = uniform(&mut r, &[4], -4.0, 4.0);
    let l_fake = uniform(&mut r, &[4], -4.0, 4.0);
    let d = |g: &mut Graph, v: &[Var]| discriminator_loss_logits(g, v[0], v[1]).unwrap();
    out.push(("discriminator logit loss / real".into(), check_gradient(&[l_real.clone(), l_fake.clone()], 0, &d)));
    out.push(("discriminator logit loss / fake".into(), check_gradient(&[l_real, l_fake.clone()], 1, &d)));
    out.push((
        "generator logit loss".into(),
        check_gradient(&[l_fake], 0, &|g, v| generator_loss_adv_logits(g, v[0]).unwrap()),
    ));

    for (h, w) in [(8, 8), (5, 7)] {
        let real = uniform(&mut r, &[4, 2, h, w], -1.0, 1.0);
        let fake = uniform(&mut r, &[3, 2, h, w], -1.0, 1.0);
        for variant in MatchVariant::all() {
            let (real, fake) = match variant.distance {
                MatchDistance::Mae | MatchDistance::Mkl => kink_free_batches(&mut r, variant.transform, h, w),
                _ => (real.clone(), fake.clone()),
            };
            let fm = FMatch::new(variant, h, w).unwrap();
            let f = |g: &mut Graph, v: &[Var]| fm.loss(g, v[0], v[1]).unwrap();
            out.push((
                format!("f-match {}/{} {h}x{w}", variant.transform, variant.distance),
                check_gradient(&[real.clone(), fake.clone()], 1, &f),
            ));
        }
    }

    for size in [4, 8] {
        let real = uniform(&mut r, &[3, 3, size, size], -1.0, 1.0);
        let fake = uniform(&mut r, &[2, 3, size, size], -1.0, 1.0);
        let sr = SpectralReg::new(size).unwrap();
        let f = |g: &mut Graph, v: &[Var]| sr.loss(g, v[0], v[1]).unwrap();
        out.push((format!("spectral regularizer {size}x{size}"), check_gradient(&[real, fake], 1, &f)));
    }

    // F-Drop in front of a linear discriminator head, with and without F-Match
    let (c, s) = (2, 8);
    let real = uniform(&mut r, &[3, c, s, s], -1.0, 1.0);
    let fake = uniform(&mut r, &[3, c, s, s], -1.0, 1.0);
    let weight = uniform(&mut r, &[c * s * s, 1], -0.3, 0.3);
    let drop = FDrop::new(0.6, s, s).unwrap();
    let fm = FMatch::new(MatchVariant::default(), s, s).unwrap();
    let d_loss = |g: &mut Graph, v: &[Var]| {
        let lr = drop_logits(g, &drop, v[0], v[2]);
        let lf = drop_logits(g, &drop, v[1], v[2]);
        discriminator_loss_logits(g, lr, lf).unwrap()
    };
    let inputs = [real, fake, weight];
    out.push(("dropped discriminator loss / weights".into(), check_gradient(&inputs, 2, &d_loss)));
    out.push(("dropped discriminator loss / real".into(), check_gradient(&inputs, 0, &d_loss)));
    let g_loss = |g: &mut Graph, v: &[Var]| {
        let lf = drop_logits(g, &drop, v[1], v[2]);
        let adv = generator_loss_adv_logits(g, lf).unwrap();
        let m = fm.loss(g, v[0], v[1]).unwrap();
        let m = g.scale(m, 0.5);
        g.add(adv, m).unwrap()
    };
    out.push(("dropped generator loss + f-match / fake".into(), check_gradient(&inputs, 1, &g_loss)));

    let features = uniform(&mut r, &[4, 6], -2.0, 2.0);
    let weight = uniform(&mut r, &[6, 1], -0.5, 0.5);
    let bias = uniform(&mut r, &[1], -0.5, 0.5);
    let labels = Tensor::new(vec![4], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let f = |g: &mut Graph, v: &[Var]| probe_loss(g, v[0], v[1], v[2], v[3]).unwrap();
    let inputs = [features, weight, bias, labels];
    out.push(("probe loss / weight".into(), check_gradient(&inputs, 1, &f)));
    out.push(("probe loss / bias".into(), check_gradient(&inputs, 2, &f)));
    out.push(("probe loss / features".into(), check_gradient(&inputs, 0, &f)));
    out
}
