#![allow(dead_code)]

use janeeye::activations::ActivationKind;
use janeeye::network::{Dims, LayerSpec, ModelConfig};
use janeeye::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small random model ending in pool + fc with two outputs.
pub fn random_model(r: &mut ChaCha8Rng) -> ModelConfig {
    let acts = ActivationKind::ALL;
    let mut c = r.gen_range(1..=4);
    let (mut h, mut w) = (r.gen_range(4..=14), r.gen_range(4..=14));
    let input = Dims::new(c, h, w);
    let mut layers = Vec::new();
    for i in 0..r.gen_range(1..=2) {
        let k = [1, 3, 5, 7][r.gen_range(0..4)];
        let stride = r.gen_range(1..=2);
        let pad = k / 2;
        let cout = r.gen_range(1..=10);
        layers.push(LayerSpec::conv(&format!("conv{i}"), k, c, cout, stride, pad, acts[r.gen_range(0..4)]));
        h = (h + 2 * pad - k) / stride + 1;
        w = (w + 2 * pad - k) / stride + 1;
        c = cout;
    }
    if r.gen_bool(0.5) {
        let mut g = LayerSpec::gmlp("gmlp", c);
        g.activation = acts[r.gen_range(0..4)];
        layers.push(g);
    }
    if r.gen_bool(0.7) {
        let hidden = r.gen_range(1..=9);
        layers.push(LayerSpec::convjanet("janet", [1, 3, 5][r.gen_range(0..3)], c, hidden));
        c = hidden;
    }
    layers.push(LayerSpec::global_max_pool("pool", c));
    layers.push(LayerSpec::fully_connected("fc", c, 2));
    let _ = (h, w);
    ModelConfig { input, layers, output_dim: 2, output_scale: 1.0, sensor_scale: 1.0, formats: Default::default() }
}

/// Event-count frames: positive, negative and their difference.
pub fn random_frames(r: &mut ChaCha8Rng, d: Dims, n: usize, density: f64) -> Vec<Tensor<i32>> {
    (0..n)
        .map(|_| {
            let mut t = Tensor::<i32>::zeros(d.channels, d.height, d.width);
            for v in t.data.iter_mut() {
                if r.gen_bool(density) {
                    *v = r.gen_range(-3..=6);
                }
            }
            if d.channels >= 3 {
                for y in 0..d.height {
                    for x in 0..d.width {
                        let (p, q) = (t.get(0, y, x).abs(), t.get(1, y, x).abs());
                        t.set(0, y, x, p);
                        t.set(1, y, x, q);
                        t.set(2, y, x, p - q);
                    }
                }
            }
            t
        })
        .collect()
}
