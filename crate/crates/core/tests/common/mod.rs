#![allow(dead_code)]

use duoflow::diffengine::Tensor;
use duoflow::duomodel::AttentionWeights;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect())
        .unwrap()
}

/// Scalar triple loop: per head, explicit exp / sum over keys.
pub fn oracle(q_in: &Tensor, kv_in: &Tensor, w: &AttentionWeights, heads: usize) -> Tensor {
    let d = q_in.cols();
    let dh = d / heads;
    let proj = |x: &Tensor, m: &Tensor| {
        let mut out = Tensor::zeros(&[x.rows(), d]);
        for i in 0..x.rows() {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += x.get(i, k) * m.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    };
    let q = proj(q_in, &w.q);
    let k = proj(kv_in, &w.k);
    let v = proj(kv_in, &w.v);
    let mut cat = Tensor::zeros(&[q_in.rows(), d]);
    for h in 0..heads {
        for i in 0..q.rows() {
            let logits: Vec<f64> = (0..k.rows())
                .map(|j| {
                    let mut s = 0.0;
                    for c in h * dh..(h + 1) * dh {
                        s += q.get(i, c) * k.get(j, c);
                    }
                    s / (dh as f64).sqrt()
                })
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in h * dh..(h + 1) * dh {
                let mut s = 0.0;
                for j in 0..k.rows() {
                    s += e[j] / z * v.get(j, c);
                }
                cat.set(i, c, s);
            }
        }
    }
    proj(&cat, &w.o)
}

pub fn random_weights(rng: &mut ChaCha8Rng, d: usize) -> AttentionWeights {
    AttentionWeights {
        q: random(rng, d, d),
        k: random(rng, d, d),
        v: random(rng, d, d),
        o: random(rng, d, d),
    }
}

/// Worst deviation of `vis_attention` and `phy_attention` from [`oracle`]
/// over `cases` random small configurations.
pub fn attention_oracle_deviation(seed: u64, cases: usize) -> f64 {
    use duoflow::duomodel::{phy_attention, vis_attention};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let heads = [1, 2, 4][rng.random_range(0..3)];
        let d = heads * rng.random_range(1..=8 / heads);
        let nv = rng.random_range(1..=4);
        let nz = rng.random_range(1..=4);
        let hv = random(&mut rng, nv, d);
        let hz = random(&mut rng, nz, d);
        let wv = random_weights(&mut rng, d);
        let wz = random_weights(&mut rng, d);
        let a = vis_attention(&hv, &hz, &wv, heads).unwrap();
        worst = worst.max(a.max_abs_diff(&oracle(&hv, &hz, &wv, heads)));
        let b = phy_attention(&hz, &hv, &wz, heads).unwrap();
        worst = worst.max(b.max_abs_diff(&oracle(&hz, &hv, &wz, heads)));
    }
    worst
}
