use csipred_autograd::gradcheck::{check, GradCheckConfig};
use csipred_autograd::{Graph, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Reduces an arbitrary output to a scalar with fixed random weights so that
/// every output element contributes a distinct gradient.
fn project(g: &mut Graph<f64>, y: Var) -> Result<Var> {
    let w = rand_tensor(g.shape(y), 999);
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    Ok(g.sum_all(p))
}

fn assert_grad<F>(inputs: Vec<Tensor<f64>>, f: F)
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let report = check(&inputs, GradCheckConfig::default(), |g, v| {
        let y = f(g, v)?;
        project(g, y)
    })
    .unwrap();
    assert!(report.rel_error < TOL, "relative error {report:?}");
    assert!(report.probed > 0);
}

#[test]
fn broadcast_arithmetic() {
    assert_grad(vec![rand_tensor(&[2, 3, 4], 1), rand_tensor(&[3, 1], 2)], |g, v| {
        let a = g.add(v[0], v[1])?;
        let b = g.mul(a, v[1])?;
        let c = g.sub(b, v[0])?;
        let d = g.add_scalar(v[1], 3.0);
        g.div(c, d)
    });
}

#[test]
fn unary_functions() {
    assert_grad(vec![rand_tensor(&[5, 7], 3)], |g, v| {
        let parts = [
            g.exp(v[0]),
            g.tanh(v[0]),
            g.sigmoid(v[0]),
            g.silu(v[0]),
            g.gelu(v[0]),
            g.sqr(v[0]),
        ];
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = g.add(acc, *p)?;
        }
        let pos = g.add_scalar(parts[5], 0.5);
        let l = g.log(pos);
        let s = g.sqrt(pos);
        let acc = g.add(acc, l)?;
        g.add(acc, s)
    });
}

#[test]
fn shape_ops() {
    assert_grad(vec![rand_tensor(&[2, 3, 4], 4), rand_tensor(&[2, 2, 4], 5)], |g, v| {
        let c = g.cat(&[v[0], v[1]], 1)?;
        let p = g.permute(c, &[2, 0, 1])?;
        let n = g.narrow(p, 2, 1, 3)?;
        let r = g.reshape(n, &[4, 6])?;
        let t = g.transpose(r, 0, 1)?;
        g.select0(t, &[0, 2, 2, 5])
    });
}

#[test]
fn reductions() {
    assert_grad(vec![rand_tensor(&[3, 4, 5], 6)], |g, v| {
        let a = g.sum_axis(v[0], 1)?;
        let b = g.mean_axis(v[0], 2)?;
        let prod = g.matmul(b, a)?;
        let m = g.mean_all(v[0]);
        g.mul(prod, m)
    });
}

#[test]
fn matmul_batched_and_shared() {
    assert_grad(
        vec![
            rand_tensor(&[2, 3, 4], 7),
            rand_tensor(&[2, 4, 5], 8),
            rand_tensor(&[5, 2], 9),
        ],
        |g, v| {
            let a = g.matmul(v[0], v[1])?;
            g.matmul(a, v[2])
        },
    );
}

#[test]
fn linear_with_bias() {
    assert_grad(
        vec![
            rand_tensor(&[2, 3, 4], 10),
            rand_tensor(&[6, 4], 11),
            rand_tensor(&[6], 12),
        ],
        |g, v| g.linear(v[0], v[1], Some(v[2])),
    );
}

#[test]
fn conv2d_strided_padded() {
    assert_grad(
        vec![
            rand_tensor(&[2, 3, 6, 5], 13),
            rand_tensor(&[4, 3, 3, 3], 14),
            rand_tensor(&[4], 15),
        ],
        |g, v| g.conv2d(v[0], v[1], Some(v[2]), 2, 1),
    );
}

#[test]
fn conv2d_pointwise() {
    assert_grad(
        vec![rand_tensor(&[2, 3, 4, 4], 16), rand_tensor(&[5, 3, 1, 1], 17)],
        |g, v| g.conv2d(v[0], v[1], None, 1, 0),
    );
}

#[test]
fn conv3d() {
    assert_grad(
        vec![
            rand_tensor(&[1, 2, 3, 4, 4], 18),
            rand_tensor(&[3, 2, 3, 3, 3], 19),
            rand_tensor(&[3], 20),
        ],
        |g, v| g.conv3d(v[0], v[1], Some(v[2]), [1, 1, 1], [1, 1, 1]),
    );
}

#[test]
fn pool_and_upsample() {
    assert_grad(vec![rand_tensor(&[2, 2, 3, 4, 4], 21)], |g, v| {
        let p = g.maxpool2(v[0])?;
        let u = g.upsample2(p)?;
        g.mul(u, v[0])
    });
}

#[test]
fn group_norm_affine() {
    assert_grad(
        vec![
            rand_tensor(&[2, 4, 3, 3], 22),
            rand_tensor(&[4], 23),
            rand_tensor(&[4], 24),
        ],
        |g, v| g.group_norm(v[0], 2, Some((v[1], v[2])), 1e-5),
    );
}

#[test]
fn layer_norm_plain_and_affine() {
    assert_grad(
        vec![
            rand_tensor(&[3, 2, 6], 25),
            rand_tensor(&[6], 26),
            rand_tensor(&[6], 27),
        ],
        |g, v| {
            let a = g.layer_norm(v[0], None, 1e-6)?;
            let b = g.layer_norm(v[0], Some((v[1], v[2])), 1e-6)?;
            g.mul(a, b)
        },
    );
}

#[test]
fn softmax_last_axis() {
    assert_grad(vec![rand_tensor(&[2, 3, 5], 28)], |g, v| g.softmax(v[0]));
}

#[test]
fn losses() {
    // Entries are kept away from the Huber kink by construction of the seeds;
    // a probe landing exactly on |r| = delta would be non-differentiable.
    assert_grad(vec![rand_tensor(&[4, 5], 29), rand_tensor(&[4, 5], 30)], |g, v| {
        let h = g.huber(v[0], v[1], 0.7)?;
        let m = g.mse(v[0], v[1])?;
        g.add(h, m)
    });
}

#[test]
fn lstm_cell_update() {
    assert_grad(
        vec![rand_tensor(&[2, 8, 3, 3], 31), rand_tensor(&[2, 2, 3, 3], 32)],
        |g, v| {
            let (h, c) = g.lstm_cell(v[0], v[1])?;
            let hc = g.mul(h, c)?;
            g.add(hc, h)
        },
    );
}

#[test]
fn dropout_uses_fixed_mask() {
    let keep: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
    assert_grad(vec![rand_tensor(&[3, 4], 33)], move |g, v| {
        g.dropout_with_mask(v[0], &keep, 0.25)
    });
}

#[test]
fn flop_counter_counts_macs_twice() {
    let mut g = Graph::<f32>::new();
    let a = g.constant(Tensor::zeros(vec![3, 4]));
    let w = g.constant(Tensor::zeros(vec![5, 4]));
    g.linear(a, w, None).unwrap();
    assert_eq!(g.flops(), 2 * 3 * 4 * 5);
    let x = g.constant(Tensor::zeros(vec![1, 2, 4, 4]));
    let k = g.constant(Tensor::zeros(vec![3, 2, 3, 3]));
    g.conv2d(x, k, None, 1, 1).unwrap();
    assert_eq!(g.flops(), 2 * 3 * 4 * 5 + 2 * 3 * 18 * 16);
}

#[test]
fn shape_errors_are_reported() {
    let mut g = Graph::<f32>::new();
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![4, 5]));
    assert!(g.matmul(a, b).is_err());
    assert!(g.add(a, b).is_err());
    assert!(g.group_norm(a, 2, None, 1e-5).is_err());
}
