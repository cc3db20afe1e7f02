use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::domain::{SoftLabelMap, SIMPLEX_TOLERANCE};

fn small_arch() -> ArchConfig {
    ArchConfig {
        gen_width: 4,
        gen_levels: 3,
        disc_width: 4,
        d2_spectral_norm: false,
    }
}

fn random_image(rng: &mut ChaCha8Rng, side: usize) -> Image {
    Image::new(side, side, (0..side * side * 3).map(|_| rng.gen::<f32>()).collect()).unwrap()
}

fn random_soft(rng: &mut ChaCha8Rng, side: usize, k: usize) -> SoftLabelMap {
    let mut data = Vec::with_capacity(side * side * k);
    for _ in 0..side * side {
        let raw: Vec<f32> = (0..k).map(|_| rng.gen::<f32>() + 0.05).collect();
        let s: f32 = raw.iter().sum();
        data.extend(raw.iter().map(|v| v / s));
    }
    SoftLabelMap::new(side, side, k, data).unwrap()
}

#[test]
fn refine_outputs_a_simplex_of_the_input_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g1 = RefinementNet::new(4, &small_arch(), 7);
    let s = random_soft(&mut rng, 16, 4);
    let img = random_image(&mut rng, 16);
    let out = refine(&g1, &s, &img).unwrap();
    assert_eq!((out.height(), out.width(), out.num_classes()), (16, 16, 4));
    for px in out.data().chunks(4) {
        assert!((px.iter().sum::<f32>() - 1.0).abs() < SIMPLEX_TOLERANCE);
    }
}

#[test]
fn refine_rejects_class_mismatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g1 = RefinementNet::new(4, &small_arch(), 7);
    let s = random_soft(&mut rng, 16, 3);
    let img = random_image(&mut rng, 16);
    assert!(matches!(refine(&g1, &s, &img), Err(Error::ShapeMismatch(_))));
}

#[test]
fn restore_is_bounded_and_shape_preserving() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g2 = RestorationNet::new(4, &small_arch(), 8);
    let s = random_soft(&mut rng, 16, 4);
    let img = random_image(&mut rng, 16);
    let out = restore(&g2, &s, &img).unwrap();
    assert!(out.same_size(&img));
    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let bad = random_image(&mut rng, 8);
    assert!(restore(&g2, &s, &bad).is_err());
}

#[test]
fn generators_are_fully_convolutional() {
    let arch = ArchConfig {
        gen_levels: 4,
        ..small_arch()
    };
    let g2 = RestorationNet::new(3, &arch, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for side in [64, 128] {
        let s = random_soft(&mut rng, side, 3);
        let img = random_image(&mut rng, side);
        let out = restore(&g2, &s, &img).unwrap();
        assert_eq!((out.height(), out.width()), (side, side));
    }
}

#[test]
fn restoration_output_depends_on_segmentation() {
    let g2 = RestorationNet::new(3, &small_arch(), 10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_soft(&mut rng, 16, 3);
    let img = random_image(&mut rng, 16);
    let mut g = Graph::<f64>::new();
    let p = g2.net.params().bind(&mut g, false);
    let sv = g.param(soft_to_tensor(&[&s]).unwrap().cast());
    let x = g.constant(images_to_tensor(&[&img]).unwrap().cast());
    let out = g2.forward(&mut g, &p, sv, x);
    let loss = g.mean(out);
    let grads = g.backward(loss);
    let ds = grads.get(sv).unwrap();
    assert!(ds.data().iter().any(|v| *v != 0.0));
}

#[test]
fn discriminator_maps_64_to_4x4_and_is_deterministic() {
    let d = seg_discriminator(4, &small_arch(), 11);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let data: Vec<f32> = (0..7 * 64 * 64).map(|_| rng.gen()).collect();
    let x = Tensor::new([7, 64, 64], data);
    let a = discriminate(&d, &x).unwrap();
    let b = discriminate(&d, &x).unwrap();
    assert_eq!(a.shape(), &[4, 4]);
    assert_eq!(a, b);
    assert!(a.all_finite());
    assert_eq!(PatchDiscriminator::output_side(64), 4);
    let wrong = Tensor::new([3, 64, 64], vec![0.0; 3 * 64 * 64]);
    assert!(matches!(discriminate(&d, &wrong), Err(Error::ShapeMismatch(_))));
}

#[test]
fn spectral_norms_stay_bounded_through_training() {
    let mut d = seg_discriminator(2, &small_arch(), 12);
    let mut opt = Adam::new(d.params(), 1e-3, (0.5, 0.999));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let mut g = Graph::<f32>::new();
        let p = d.params().bind(&mut g, true);
        let (w, u) = d.weights(&mut g, &p);
        d.set_sn_state(u);
        let data: Vec<f32> = (0..2 * 5 * 32 * 32).map(|_| rng.gen()).collect();
        let x = g.constant(Tensor::new([2, 5, 32, 32], data));
        let s = d.apply(&mut g, &w, x);
        let sq = g.square(s);
        let loss = g.mean(sq);
        let grads = g.backward(loss);
        let gs = p.grads(&grads, d.params());
        opt.update(d.params_mut(), &gs);
    }
    for sigma in d.effective_spectral_norms(500) {
        assert!(sigma <= 1.0 + 1e-2, "effective spectral norm {sigma}");
    }
}

#[test]
fn unnormalized_discriminator_has_no_power_state() {
    let d = img_discriminator(&small_arch(), 13);
    assert!(d.sn_state().is_empty());
    let sn = img_discriminator(
        &ArchConfig {
            d2_spectral_norm: true,
            ..small_arch()
        },
        13,
    );
    assert_eq!(sn.sn_state().len(), DISC_BLOCKS + 1);
}

#[test]
fn feature_pyramid_is_deterministic_and_shrinks() {
    let f = FeatureExtractor::default_pyramid();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = random_image(&mut rng, 32);
    let a = extract_features(&f, &img).unwrap();
    let b = extract_features(&f, &img).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), DEFAULT_PYRAMID_WIDTHS.len());
    for pair in a.windows(2) {
        assert!(pair[1].shape()[1] < pair[0].shape()[1]);
    }
    let deep = FeatureExtractor::random_pyramid(&[2, 2, 2, 2, 2], 3);
    assert_eq!(deep.min_side(), 16);
    let small = random_image(&mut rng, 8);
    assert!(matches!(extract_features(&deep, &small), Err(Error::ShapeMismatch(_))));
}

#[test]
fn taps_are_taken_before_the_activation() {
    let f = FeatureExtractor::random_pyramid(&[4, 4], 21);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let img = random_image(&mut rng, 8);
    let taps = extract_features(&f, &img).unwrap();
    let w0 = f.params().get(0);
    // Naive zero-padded 3x3 convolution as the oracle for the first tap.
    let chw = img.to_chw();
    let mut negatives = 0;
    for o in 0..4 {
        for y in 0..8 {
            for x in 0..8 {
                let mut acc = 0.0f64;
                for c in 0..3 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (iy, ix) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                            if iy < 0 || ix < 0 || iy >= 8 || ix >= 8 {
                                continue;
                            }
                            let v = chw.data()[(c * 8 + iy as usize) * 8 + ix as usize] as f64;
                            acc += v * w0.data()[((o * 3 + c) * 3 + ky) * 3 + kx] as f64;
                        }
                    }
                }
                let tapped = taps[0].data()[(o * 8 + y) * 8 + x] as f64;
                assert!((tapped - acc).abs() < 1e-5);
                if acc < 0.0 {
                    negatives += 1;
                    assert!(tapped < 0.0);
                }
            }
        }
    }
    assert!(negatives > 0, "probe never drove a pre-activation negative");
}

#[test]
fn frozen_extractor_gets_no_gradient() {
    let f = FeatureExtractor::default_pyramid();
    let before = f.params().checksum();
    let mut g = Graph::<f32>::new();
    let x = g.param(Tensor::full([1, 3, 16, 16], 0.3));
    let taps = f.forward(&mut g, x);
    let m = g.mean(taps[2]);
    let grads = g.backward(m);
    assert!(grads.get(x).is_some());
    assert_eq!(f.params().checksum(), before);
}

#[test]
fn segmenter_predicts_valid_labels() {
    let seg = Segmenter::new(4, 4, 3, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let img = random_image(&mut rng, 16);
    let l = seg.segment(&img).unwrap();
    assert_eq!(l.num_classes(), 4);
    assert!(l.data().iter().all(|&c| c < 4));
}
