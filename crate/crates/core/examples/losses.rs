//! Loss terms on concrete tensors, and a finite-difference check of their
//! gradients.
//!
//! cargo run --example losses

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segrestore::autograd::{gradcheck, Graph, Tensor};
use segrestore::losses::{self, TvVariant};
use segrestore::networks::FeatureExtractor;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let image = |rng: &mut ChaCha8Rng| Tensor::new(vec![1, 3, 8, 8], (0..192).map(|_| rng.gen::<f64>()).collect());
    let (restored, target) = (image(&mut rng), image(&mut rng));
    let features = FeatureExtractor::random_pyramid(&[4, 8], 3);

    let mut g = Graph::<f64>::new();
    let r = g.constant(restored.clone());
    let t = g.constant(target.clone());
    let fr = features.forward(&mut g, r);
    let ft = features.forward(&mut g, t);
    let terms = [
        ("l1", losses::l1(&mut g, r, t)),
        ("perceptual", losses::perceptual(&mut g, &ft, &fr)),
        ("style", losses::style(&mut g, &ft, &fr)),
        ("tv conventional", losses::tv(&mut g, r, TvVariant::Conventional)),
        ("tv literal", losses::tv(&mut g, r, TvVariant::Literal)),
    ];
    for (name, v) in terms {
        println!("{name:<16} {:.6}", g.value(v).data()[0]);
    }

    let small = Tensor::new(vec![1, 3, 4, 4], (0..48).map(|_| rng.gen::<f64>()).collect());
    let target = target.clone();
    let check = gradcheck::check(&[small], 1e-4, |g, v| {
        let t = g.constant(Tensor::new(vec![1, 3, 4, 4], target.data()[..48].to_vec()));
        let fa = features.forward(g, t);
        let fb = features.forward(g, v[0]);
        let p = losses::perceptual(g, &fa, &fb);
        let s = losses::style(g, &fa, &fb);
        g.add(p, s)
    });
    println!(
        "perceptual + style gradient: max relative error {:.2e} over {} elements",
        check.max_rel_error, check.elements
    );
}
