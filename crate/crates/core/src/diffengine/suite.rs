use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check, EngineError, Graph, Tensor, Var};

type OpFn = fn(&mut Graph, &[Var]) -> Result<Var, EngineError>;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("positive extents")
}

/// Every primitive with the shapes of its inputs. The last input of each
/// entry is a weight matrix `w` shaped like the op's output; the checked
/// scalar is `Σ op(..) ⊙ w`, so upstream gradients are not all ones.
fn cases() -> Vec<(&'static str, Vec<(usize, usize)>, OpFn)> {
    fn weigh(g: &mut Graph, y: Var, w: Var) -> Result<Var, EngineError> {
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    }
    vec![
        ("matmul", vec![(3, 4), (4, 2), (3, 2)], |g, v| {
            let y = g.matmul(v[0], v[1])?;
            weigh(g, y, v[2])
        }),
        ("matmul_t", vec![(3, 4), (2, 4), (3, 2)], |g, v| {
            let y = g.matmul_t(v[0], v[1])?;
            weigh(g, y, v[2])
        }),
        ("transpose", vec![(3, 2), (2, 3)], |g, v| {
            let y = g.transpose(v[0]);
            weigh(g, y, v[1])
        }),
        ("add", vec![(2, 3), (2, 3), (2, 3)], |g, v| {
            let y = g.add(v[0], v[1])?;
            weigh(g, y, v[2])
        }),
        ("sub", vec![(2, 3), (2, 3), (2, 3)], |g, v| {
            let y = g.sub(v[0], v[1])?;
            weigh(g, y, v[2])
        }),
        ("mul", vec![(2, 3), (2, 3), (2, 3)], |g, v| {
            let y = g.mul(v[0], v[1])?;
            weigh(g, y, v[2])
        }),
        ("add_row", vec![(3, 4), (1, 4), (3, 4)], |g, v| {
            let y = g.add_row(v[0], v[1])?;
            weigh(g, y, v[2])
        }),
        ("scale", vec![(2, 3), (2, 3)], |g, v| {
            let y = g.scale(v[0], -1.7);
            weigh(g, y, v[1])
        }),
        ("add_scalar", vec![(2, 3), (2, 3)], |g, v| {
            let y = g.add_scalar(v[0], 0.3);
            let y = g.mul(y, y)?;
            weigh(g, y, v[1])
        }),
        ("softmax_rows", vec![(3, 5), (3, 5)], |g, v| {
            let y = g.softmax_rows(v[0])?;
            weigh(g, y, v[1])
        }),
        ("layer_norm", vec![(3, 5), (1, 5), (1, 5), (3, 5)], |g, v| {
            let y = g.layer_norm(v[0], Some(v[1]), Some(v[2]), 1e-5)?;
            weigh(g, y, v[3])
        }),
        ("silu", vec![(3, 4), (3, 4)], |g, v| {
            let y = g.silu(v[0]);
            weigh(g, y, v[1])
        }),
        ("gelu", vec![(3, 4), (3, 4)], |g, v| {
            let y = g.gelu(v[0]);
            weigh(g, y, v[1])
        }),
        ("slice_cols", vec![(3, 5), (3, 2)], |g, v| {
            let y = g.slice_cols(v[0], 2, 2)?;
            weigh(g, y, v[1])
        }),
        ("concat_cols", vec![(2, 2), (2, 3), (2, 5)], |g, v| {
            let y = g.concat_cols(&[v[0], v[1]])?;
            weigh(g, y, v[2])
        }),
        ("slice_rows", vec![(5, 3), (2, 3)], |g, v| {
            let y = g.slice_rows(v[0], 1, 2)?;
            weigh(g, y, v[1])
        }),
        ("concat_rows", vec![(2, 3), (1, 3), (3, 3)], |g, v| {
            let y = g.concat_rows(&[v[0], v[1]])?;
            weigh(g, y, v[2])
        }),
        ("gather_rows", vec![(3, 2), (5, 2)], |g, v| {
            let y = g.gather_rows(v[0], &[2, 0, 2, 1, 2])?;
            weigh(g, y, v[1])
        }),
        ("sum", vec![(2, 3)], |g, v| {
            let y = g.mul(v[0], v[0])?;
            Ok(g.sum(y))
        }),
        ("mean", vec![(2, 3)], |g, v| {
            let y = g.mul(v[0], v[0])?;
            Ok(g.mean(y))
        }),
    ]
}

/// Names of the primitives covered by [`primitive_grad_errors`].
pub fn primitive_names() -> Vec<&'static str> {
    cases().into_iter().map(|c| c.0).collect()
}

/// Worst central-difference error per primitive over `seeds` random draws.
pub fn primitive_grad_errors(seeds: std::ops::Range<u64>, step: f64) -> Result<Vec<(&'static str, f64)>, EngineError> {
    let mut out = Vec::new();
    for (name, shapes, f) in cases() {
        let mut worst = 0.0f64;
        for seed in seeds.clone() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs: Vec<Tensor> = shapes.iter().map(|&(r, c)| random(&mut rng, r, c)).collect();
            worst = worst.max(grad_check(f, &inputs, step)?);
        }
        out.push((name, worst));
    }
    Ok(out)
}
