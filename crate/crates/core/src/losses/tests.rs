use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autograd::gradcheck;
use crate::domain::encode_labels;
use crate::networks::{seg_discriminator, ArchConfig, Bound, RefinementNet};

fn rand_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    Image::new(h, w, (0..h * w * 3).map(|_| rng.gen::<f32>()).collect()).unwrap()
}

fn rand_soft(rng: &mut ChaCha8Rng, h: usize, w: usize, k: usize) -> SoftLabelMap {
    let mut data = Vec::new();
    for _ in 0..h * w {
        let raw: Vec<f32> = (0..k).map(|_| rng.gen::<f32>() + 0.01).collect();
        let s: f32 = raw.iter().sum();
        data.extend(raw.iter().map(|v| v / s));
    }
    SoftLabelMap::new(h, w, k, data).unwrap()
}

fn rand_labels(rng: &mut ChaCha8Rng, h: usize, w: usize, k: usize) -> LabelMap {
    LabelMap::new(h, w, k, (0..h * w).map(|_| rng.gen_range(0..k as u8)).collect()).unwrap()
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

#[test]
fn refinement_perfect_and_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gt = rand_labels(&mut rng, 8, 8, 4);
    let onehot = encode_labels(&gt, 4).unwrap();
    assert!(refinement_loss(&onehot, &gt).unwrap() <= 1e-6);
    let uniform = SoftLabelMap::new(8, 8, 4, vec![0.25; 8 * 8 * 4]).unwrap();
    let v = refinement_loss(&uniform, &gt).unwrap();
    assert!((v - 4f64.ln()).abs() < 1e-6);
}

#[test]
fn refinement_matches_pixel_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = rand_soft(&mut rng, 8, 8, 5);
    let gt = rand_labels(&mut rng, 8, 8, 5);
    let mut acc = 0.0;
    for h in 0..8 {
        for w in 0..8 {
            let p = s.get(h, w, gt.get(h, w) as usize) as f64;
            acc -= p.max(CE_EPS).ln();
        }
    }
    let oracle = acc / 64.0;
    assert!((refinement_loss(&s, &gt).unwrap() - oracle).abs() < 1e-6);
    let wrong = rand_labels(&mut rng, 8, 8, 4);
    assert!(matches!(refinement_loss(&s, &wrong), Err(Error::ShapeMismatch(_))));
}

#[test]
fn least_squares_fixed_points() {
    let ones = Tensor::full([4, 4], 1.0f32);
    let zeros = Tensor::zeros([4, 4]);
    assert_eq!(ls_adversarial_losses(&ones, &zeros).unwrap(), (0.0, 1.0));
    assert_eq!(ls_adversarial_losses(&zeros, &ones).unwrap(), (2.0, 0.0));
}

#[test]
fn least_squares_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let real = Tensor::new([4, 4], (0..16).map(|_| rng.gen_range(-2.0..2.0f32)).collect());
    let fake = Tensor::new([4, 4], (0..16).map(|_| rng.gen_range(-2.0..2.0f32)).collect());
    let (mut d, mut gl) = (0.0f64, 0.0f64);
    for i in 0..16 {
        let (r, f) = (real.data()[i] as f64, fake.data()[i] as f64);
        d += (r - 1.0).powi(2) / 16.0 + f * f / 16.0;
        gl += (f - 1.0).powi(2) / 16.0;
    }
    let (a, b) = ls_adversarial_losses(&real, &fake).unwrap();
    assert!((a - d).abs() < 1e-7 && (b - gl).abs() < 1e-7);
    let mut bad = real.clone();
    bad.data_mut()[3] = f32::NAN;
    assert!(matches!(ls_adversarial_losses(&bad, &fake), Err(Error::Numeric(_))));
}

#[test]
fn log_form_matches_cross_entropy() {
    let mut g = Graph::<f64>::new();
    let r = g.constant(Tensor::new([2], vec![0.3, -1.2]));
    let f = g.constant(Tensor::new([2], vec![0.7, 2.0]));
    let d = adversarial_d(&mut g, AdversarialForm::Log, r, f);
    let gl = adversarial_g(&mut g, AdversarialForm::Log, f);
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let d_ref = -(sig(0.3).ln() + sig(-1.2).ln()) / 2.0 - ((1.0 - sig(0.7)).ln() + (1.0 - sig(2.0)).ln()) / 2.0;
    let g_ref = -(sig(0.7).ln() + sig(2.0).ln()) / 2.0;
    assert!((g.value(d).item() - d_ref).abs() < 1e-12);
    assert!((g.value(gl).item() - g_ref).abs() < 1e-12);
}

#[test]
fn l1_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = rand_image(&mut rng, 8, 8);
    assert_eq!(l1_loss(&a, &a).unwrap(), 0.0);
    let lo = Image::filled(8, 8, 0.25).unwrap();
    let hi = Image::filled(8, 8, 0.5).unwrap();
    assert!((l1_loss(&lo, &hi).unwrap() - 0.25).abs() < 1e-7);
    let b = rand_image(&mut rng, 8, 8);
    let mut acc = 0.0;
    for h in 0..8 {
        for w in 0..8 {
            for c in 0..3 {
                acc += (a.get(h, w, c) as f64 - b.get(h, w, c) as f64).abs();
            }
        }
    }
    assert!((l1_loss(&a, &b).unwrap() - acc / 192.0).abs() < 1e-7);
    let c = rand_image(&mut rng, 8, 16);
    assert!(matches!(l1_loss(&a, &c), Err(Error::ShapeMismatch(_))));
}

fn naive_conv(img: &Image, w: &Tensor<f32>) -> Vec<f64> {
    let (o, _, k, _) = w.dims4();
    let (hh, ww) = (img.height(), img.width());
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; o * hh * ww];
    for oc in 0..o {
        for y in 0..hh {
            for x in 0..ww {
                let mut acc = 0.0f64;
                for c in 0..3 {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = y as isize + ky as isize - pad;
                            let ix = x as isize + kx as isize - pad;
                            if iy < 0 || ix < 0 || iy >= hh as isize || ix >= ww as isize {
                                continue;
                            }
                            let wv = w.data()[((oc * 3 + c) * k + ky) * k + kx] as f64;
                            acc += wv * img.get(iy as usize, ix as usize, c) as f64;
                        }
                    }
                }
                out[(oc * hh + y) * ww + x] = acc;
            }
        }
    }
    out
}

#[test]
fn perceptual_single_layer_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = Tensor::new([4, 3, 3, 3], (0..108).map(|_| rng.gen_range(-0.5..0.5f32)).collect());
    let f = FeatureExtractor::single_layer(w.clone());
    let a = rand_image(&mut rng, 8, 8);
    let b = rand_image(&mut rng, 8, 8);
    let fa = naive_conv(&a, &w);
    let fb = naive_conv(&b, &w);
    let oracle = fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum::<f64>() / fa.len() as f64;
    let v = perceptual_loss(&f, &a, &b).unwrap();
    assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
    assert_eq!(perceptual_loss(&f, &a, &a).unwrap(), 0.0);
    assert_eq!(v, perceptual_loss(&f, &b, &a).unwrap());
}

#[test]
fn style_identity_and_black_probe() {
    let f = FeatureExtractor::default_pyramid();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = rand_image(&mut rng, 16, 16);
    assert_eq!(style_loss(&f, &a, &a).unwrap(), 0.0);
    let black = Image::filled(16, 16, 0.0).unwrap();
    assert_eq!(style_loss(&f, &black, &black).unwrap(), 0.0);
    assert!(style_loss(&f, &a, &black).unwrap() > 0.0);
    assert!(perceptual_loss(&f, &a, &black).unwrap() > 0.0);
}

#[test]
fn gram_of_two_channel_two_by_two() {
    let feats = [1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 2.0, 0.0];
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::new([1, 2, 2, 2], feats.to_vec()));
    let gm = g.gram(x);
    let f0 = &feats[..4];
    let f1 = &feats[4..];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / 8.0;
    let hand = [dot(f0, f0), dot(f0, f1), dot(f1, f0), dot(f1, f1)];
    for (v, h) in g.value(gm).data().iter().zip(hand) {
        assert!((v - h).abs() < 1e-7);
    }
    let c = 3.0;
    let xs = g.constant(Tensor::new([1, 2, 2, 2], feats.iter().map(|v| v * c).collect()));
    let gs = g.gram(xs);
    for (s, v) in g.value(gs).data().iter().zip(g.value(gm).data()) {
        assert!((s - c * c * v).abs() < 1e-12);
    }
}

#[test]
fn tv_variants() {
    let flat = Image::filled(8, 8, 0.4).unwrap();
    assert_eq!(tv_loss(&flat, TvVariant::Conventional).unwrap(), 0.0);
    assert_eq!(tv_loss(&flat, TvVariant::Literal).unwrap(), 0.0);
    let ramp = Image::from_fn(8, 8, |h, w, _| (h + w) as f32 / 16.0).unwrap();
    assert!(tv_loss(&ramp, TvVariant::Literal).unwrap().abs() < 1e-9);
    assert!(tv_loss(&ramp, TvVariant::Conventional).unwrap() > 0.1);
}

#[test]
fn tv_conventional_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let img = rand_image(&mut rng, 8, 8);
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for h in 0..8 {
        for w in 0..8 {
            for c in 0..3 {
                if w + 1 < 8 {
                    sx += (img.get(h, w + 1, c) as f64 - img.get(h, w, c) as f64).abs();
                }
                if h + 1 < 8 {
                    sy += (img.get(h + 1, w, c) as f64 - img.get(h, w, c) as f64).abs();
                }
            }
        }
    }
    let oracle = sx / (8.0 * 7.0 * 3.0) + sy / (7.0 * 8.0 * 3.0);
    assert!((tv_loss(&img, TvVariant::Conventional).unwrap() - oracle).abs() < 1e-7);
}

#[test]
fn totals() {
    let w0 = LossWeights {
        lambda_ref: 0.0,
        ..LossWeights::default()
    };
    assert_eq!(total_g1_loss(&w0, 0.7, 3.0), 0.7);
    assert_eq!(total_g1_loss(&LossWeights::default(), 1.0, 0.5), 6.0);
    let zero = LossWeights {
        lambda_ref: 0.0,
        lambda_l1: 0.0,
        lambda_adv: 0.0,
        lambda_perc: 0.0,
        lambda_style: 0.0,
        tv_weight: 0.0,
    };
    assert_eq!(total_g2_loss(&zero, 0.1, 0.2, 0.3, 0.4, 0.5), 0.0);
    let unit = LossWeights {
        lambda_ref: 1.0,
        lambda_l1: 1.0,
        lambda_adv: 1.0,
        lambda_perc: 1.0,
        lambda_style: 1.0,
        tv_weight: 1.0,
    };
    assert!((total_g2_loss(&unit, 0.1, 0.2, 0.3, 0.4, 0.5) - 1.5).abs() < 1e-12);
    assert!(LossWeights {
        tv_weight: -1.0,
        ..unit
    }
    .validate()
    .is_err());
}

#[test]
fn report_flags_non_finite_terms() {
    let mut r = LossReport {
        l1: Some(0.1),
        ..Default::default()
    };
    assert!(r.all_finite());
    r.style = Some(f64::NAN);
    assert!(!r.all_finite());
    assert_eq!(r.non_finite_terms(), vec!["style"]);
}

/// Central differences with step 1e-4 on a small double-precision input;
/// base points within reach of a kink are redrawn.
fn assert_term_gradient(shapes: &[&[usize]], seed: u64, f: impl Fn(&mut Graph<f64>, &[Var]) -> Var) {
    let step = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let inputs: Vec<_> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
        let r = gradcheck::check(&inputs, step, &f);
        if !r.is_smooth(step) {
            continue;
        }
        assert!(r.max_rel_error < 1e-3, "relative error {}", r.max_rel_error);
        return;
    }
    panic!("no smooth base point");
}

#[test]
fn term_gradients_match_finite_differences() {
    assert_term_gradient(&[&[1, 3, 4, 4]], 10, |g, v| {
        let p = g.softmax_channels(v[0]);
        refinement(g, p, &[0, 1, 2, 1, 0, 0, 2, 2, 1, 1, 0, 2, 2, 1, 0, 1])
    });
    for form in [AdversarialForm::LeastSquares, AdversarialForm::Log] {
        assert_term_gradient(&[&[1, 1, 4, 4], &[1, 1, 4, 4]], 11, move |g, v| adversarial_d(g, form, v[0], v[1]));
        assert_term_gradient(&[&[1, 1, 4, 4]], 12, move |g, v| adversarial_g(g, form, v[0]));
    }
    assert_term_gradient(&[&[1, 3, 4, 4], &[1, 3, 4, 4]], 13, |g, v| l1(g, v[0], v[1]));
    for variant in [TvVariant::Conventional, TvVariant::Literal] {
        assert_term_gradient(&[&[1, 3, 4, 4]], 14, move |g, v| tv(g, v[0], variant));
    }
    let f = FeatureExtractor::random_pyramid(&[3, 4], 15);
    assert_term_gradient(&[&[1, 3, 4, 4], &[1, 3, 4, 4]], 16, |g, v| {
        let fa = f.forward(g, v[0]);
        let fb = f.forward(g, v[1]);
        perceptual(g, &fa, &fb)
    });
    assert_term_gradient(&[&[1, 3, 4, 4], &[1, 3, 4, 4]], 17, |g, v| {
        let fa = f.forward(g, v[0]);
        let fb = f.forward(g, v[1]);
        style(g, &fa, &fb)
    });
}

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        gen_width: 2,
        gen_levels: 2,
        disc_width: 2,
        d2_spectral_norm: false,
    }
}

#[test]
fn g1_total_gradient_matches_finite_differences() {
    let k = 2;
    let weights = LossWeights::default();
    let step = 3e-6;
    for seed in 0..20u64 {
        let g1 = RefinementNet::new(k, &tiny_arch(), 20 + seed);
        let d1 = seg_discriminator(k, &tiny_arch(), 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22 + seed);
        let s_d = rand_soft(&mut rng, 16, 16, k);
        let i_d = rand_image(&mut rng, 16, 16);
        let gt = rand_labels(&mut rng, 16, 16, k);
        let params: Vec<Tensor<f64>> = g1.net.params().tensors().iter().map(|t| t.cast()).collect();
        let r = gradcheck::check(&params, step, |g, vars| {
            let p = Bound::from_vars(vars.to_vec());
            let s = g.constant(s_d.to_chw().cast().reshape([1, k, 16, 16]));
            let x = g.constant(i_d.to_chw().cast().reshape([1, 3, 16, 16]));
            let out = g1.forward(g, &p, s, x);
            let pd = d1.params().bind(g, false);
            let (dw, _) = d1.weights(g, &pd);
            let pair = g.concat(&[out, x]);
            let score = d1.apply(g, &dw, pair);
            let adv = adversarial_g(g, AdversarialForm::LeastSquares, score);
            let re = refinement(g, out, &gt.indices());
            weighted_g1(g, &weights, adv, re)
        });
        if r.is_smooth(step) {
            assert!(r.max_rel_error < 1e-3, "relative error {}", r.max_rel_error);
            return;
        }
    }
    panic!("no smooth base point");
}

#[test]
fn g2_total_gradient_on_a_three_parameter_generator() {
    // I_r = sigmoid(conv1x1(z)) with one weight per output channel.
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let z = rand_tensor(&mut rng, &[1, 1, 8, 8]);
    let gt = rand_tensor(&mut rng, &[1, 3, 8, 8]).map(|v| 0.5 + 0.4 * v);
    let d2 = crate::networks::img_discriminator(&tiny_arch(), 31);
    let f = FeatureExtractor::random_pyramid(&[3, 4], 32);
    let unit = LossWeights {
        lambda_ref: 1.0,
        lambda_l1: 2.0,
        lambda_adv: 0.5,
        lambda_perc: 3.0,
        lambda_style: 40.0,
        tv_weight: 1.5,
    };
    let step = 1e-5;
    let mut found = false;
    for _ in 0..50 {
        let theta = rand_tensor(&mut rng, &[3, 1, 1, 1]);
        let r = gradcheck::check(&[theta], step, |g, v| {
            let zv = g.constant(z.clone());
            let y = g.conv2d(zv, v[0], None, 1, 0);
            let i_r = g.sigmoid(y);
            let gv = g.constant(gt.clone());
            let up = g.upsample2x(i_r);
            let pd = d2.params().bind(g, false);
            let (dw, _) = d2.weights(g, &pd);
            let score = d2.apply(g, &dw, up);
            let fa = f.forward(g, gv);
            let fb = f.forward(g, i_r);
            let terms = G2Terms {
                l1: l1(g, i_r, gv),
                adv: adversarial_g(g, AdversarialForm::LeastSquares, score),
                perc: perceptual(g, &fa, &fb),
                style: style(g, &fa, &fb),
                tv: tv(g, i_r, TvVariant::Conventional),
            };
            weighted_g2(g, &unit, &terms)
        });
        if r.is_smooth(step) {
            assert!(r.max_rel_error < 1e-3, "relative error {}", r.max_rel_error);
            found = true;
            break;
        }
    }
    assert!(found, "no smooth base point");
}

#[test]
fn every_g1_and_g2_parameter_receives_gradient() {
    let k = 3;
    let arch = ArchConfig {
        gen_width: 4,
        gen_levels: 3,
        disc_width: 4,
        d2_spectral_norm: false,
    };
    let g1 = RefinementNet::new(k, &arch, 40);
    let g2 = crate::networks::RestorationNet::new(k, &arch, 41);
    let d1 = seg_discriminator(k, &arch, 42);
    let d2 = crate::networks::img_discriminator(&arch, 43);
    let f = FeatureExtractor::default_pyramid();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let side = 32;
    let s_d: Vec<_> = (0..2).map(|_| rand_soft(&mut rng, side, side, k)).collect();
    let i_d: Vec<_> = (0..2).map(|_| rand_image(&mut rng, side, side)).collect();
    let i_gt: Vec<_> = (0..2).map(|_| rand_image(&mut rng, side, side)).collect();
    let gt: Vec<_> = (0..2).map(|_| rand_labels(&mut rng, side, side, k)).collect();
    let w = LossWeights::default();

    let mut g = Graph::<f32>::new();
    let p1 = g1.net.params().bind(&mut g, true);
    let p2 = g2.net.params().bind(&mut g, true);
    let s = g.constant(crate::networks::soft_to_tensor(&s_d.iter().collect::<Vec<_>>()).unwrap());
    let x = g.constant(crate::networks::images_to_tensor(&i_d.iter().collect::<Vec<_>>()).unwrap());
    let y = g.constant(crate::networks::images_to_tensor(&i_gt.iter().collect::<Vec<_>>()).unwrap());
    let s_r = g1.forward(&mut g, &p1, s, x);
    let pd1 = d1.params().bind(&mut g, false);
    let (dw1, _) = d1.weights(&mut g, &pd1);
    let pair = g.concat(&[s_r, x]);
    let sc1 = d1.apply(&mut g, &dw1, pair);
    let adv1 = adversarial_g(&mut g, AdversarialForm::LeastSquares, sc1);
    let labels = crate::networks::label_indices(&gt.iter().collect::<Vec<_>>());
    let re = refinement(&mut g, s_r, &labels);
    let l_g1 = weighted_g1(&mut g, &w, adv1, re);
    let i_r = g2.forward(&mut g, &p2, s_r, x);
    let pd2 = d2.params().bind(&mut g, false);
    let (dw2, _) = d2.weights(&mut g, &pd2);
    let sc2 = d2.apply(&mut g, &dw2, i_r);
    let fa = f.forward(&mut g, y);
    let fb = f.forward(&mut g, i_r);
    let terms = G2Terms {
        l1: l1(&mut g, i_r, y),
        adv: adversarial_g(&mut g, AdversarialForm::LeastSquares, sc2),
        perc: perceptual(&mut g, &fa, &fb),
        style: style(&mut g, &fa, &fb),
        tv: tv(&mut g, i_r, TvVariant::Conventional),
    };
    let l_g2 = weighted_g2(&mut g, &w, &terms);

    let grads1 = g.backward(l_g1);
    for (name, t) in g1.net.params().names().iter().zip(p1.grads(&grads1, g1.net.params())) {
        assert!(t.data().iter().any(|v| *v != 0.0), "G1 parameter {name} has zero gradient");
    }
    let grads2 = g.backward(l_g2);
    for (name, t) in g2.net.params().names().iter().zip(p2.grads(&grads2, g2.net.params())) {
        assert!(t.data().iter().any(|v| *v != 0.0), "G2 parameter {name} has zero gradient");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn terms_are_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_image(&mut rng, 8, 8);
        let b = rand_image(&mut rng, 8, 8);
        let f = FeatureExtractor::random_pyramid(&[3, 4], 1);
        prop_assert!(l1_loss(&a, &b).unwrap() >= 0.0);
        prop_assert!(perceptual_loss(&f, &a, &b).unwrap() >= 0.0);
        prop_assert!(style_loss(&f, &a, &b).unwrap() >= 0.0);
        prop_assert!(tv_loss(&a, TvVariant::Conventional).unwrap() >= 0.0);
        prop_assert!(tv_loss(&a, TvVariant::Literal).unwrap() >= 0.0);
        let s = rand_soft(&mut rng, 8, 8, 3);
        let l = rand_labels(&mut rng, 8, 8, 3);
        prop_assert!(refinement_loss(&s, &l).unwrap() >= 0.0);
        let real = Tensor::new([4, 4], (0..16).map(|_| rng.gen_range(-3.0..3.0f32)).collect());
        let fake = Tensor::new([4, 4], (0..16).map(|_| rng.gen_range(-3.0..3.0f32)).collect());
        let (d, gl) = ls_adversarial_losses(&real, &fake).unwrap();
        prop_assert!(d >= 0.0 && gl >= 0.0);
    }

    #[test]
    fn identical_inputs_zero_the_reconstruction_terms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_image(&mut rng, 8, 8);
        let f = FeatureExtractor::random_pyramid(&[3, 4], 2);
        prop_assert_eq!(l1_loss(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(perceptual_loss(&f, &a, &a).unwrap(), 0.0);
        prop_assert_eq!(style_loss(&f, &a, &a).unwrap(), 0.0);
        let l = rand_labels(&mut rng, 8, 8, 3);
        prop_assert!(refinement_loss(&encode_labels(&l, 3).unwrap(), &l).unwrap() <= 1e-6);
    }
}
