use std::rc::Rc;

use leo_twin_tensor::gradcheck::{check_scalar, check_tensor};
use leo_twin_tensor::{conv2d, group_norm, layer_norm, upsample_nearest, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

fn rand_param(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::param((0..n).map(|_| rng.random_range(lo..hi)).collect(), shape).unwrap()
}

/// 100 points per activation, kept away from the kink at 0.
fn smooth_points(rng: &mut ChaCha8Rng) -> Tensor {
    let v = (0..100)
        .map(|_| {
            let x: f64 = rng.random_range(0.05..4.0);
            if rng.random_bool(0.5) {
                x
            } else {
                -x
            }
        })
        .collect();
    Tensor::param(v, &[100]).unwrap()
}

#[test]
fn activations_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    type Act = fn(&Tensor) -> leo_twin_tensor::Result<Tensor>;
    let acts: [(&str, Act); 6] = [
        ("silu", |t| t.silu()),
        ("elu", |t| t.elu()),
        ("leaky_relu", |t| t.leaky_relu(0.2)),
        ("sigmoid", |t| t.sigmoid()),
        ("tanh", |t| t.tanh()),
        ("relu", |t| t.relu()),
    ];
    for (name, f) in acts {
        let x = smooth_points(&mut rng);
        let r = check_tensor(&[x], |xs| f(&xs[0]), &mut rng).unwrap();
        assert!(r.max_rel_error < TOL, "{name}: {}", r.max_rel_error);
    }
    let x = rand_param(&mut rng, &[4, 5, 3], -2.0, 2.0);
    for axis in 0..3 {
        let r = check_tensor(&[x.clone()], |xs| xs[0].softmax(axis), &mut rng).unwrap();
        assert!(r.max_rel_error < TOL, "softmax axis {axis}: {}", r.max_rel_error);
    }
}

#[test]
fn random_five_op_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let a = rand_param(&mut rng, &[3, 4], -1.0, 1.0);
        let b = rand_param(&mut rng, &[4, 2], -1.0, 1.0);
        let c = rand_param(&mut rng, &[2], 0.5, 1.5);
        let r = check_scalar(&[a, b, c], |xs| {
            let h = xs[0].matmul(&xs[1])?;
            let h = h.mul(&xs[2])?;
            let h = h.tanh()?;
            let h = Tensor::concat(&[&h, &xs[0].slice(1, 0, 2)?], 0)?;
            h.square()?.mean()
        })
        .unwrap();
        assert!(r.max_rel_error < TOL, "{}", r.max_rel_error);
    }
}

#[test]
fn elementwise_and_shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = rand_param(&mut rng, &[2, 3, 4], 0.5, 2.0);
    let b = rand_param(&mut rng, &[3, 1], 0.5, 2.0);
    let checks: Vec<(&str, Box<dyn Fn(&[Tensor]) -> leo_twin_tensor::Result<Tensor>>)> = vec![
        ("add", Box::new(|x| x[0].add(&x[1]))),
        ("sub", Box::new(|x| x[0].sub(&x[1]))),
        ("mul", Box::new(|x| x[0].mul(&x[1]))),
        ("div", Box::new(|x| x[0].div(&x[1]))),
        ("exp", Box::new(|x| x[0].scale(0.3)?.exp())),
        ("ln", Box::new(|x| x[0].ln())),
        ("sqrt", Box::new(|x| x[0].sqrt())),
        ("powi", Box::new(|x| x[0].powi(3))),
        ("abs", Box::new(|x| x[0].abs())),
        ("permute", Box::new(|x| x[0].permute(&[2, 0, 1]))),
        ("transpose", Box::new(|x| x[0].transpose())),
        ("reshape", Box::new(|x| x[0].reshape(&[6, 4]))),
        ("sum_axis", Box::new(|x| x[0].sum_axis(1, false))),
        ("mean_axis", Box::new(|x| x[0].mean_axis(2, true))),
        ("broadcast_to", Box::new(|x| x[1].broadcast_to(&[2, 3, 4]))),
        ("matmul_batched", Box::new(|x| x[0].matmul(&x[0].transpose()?))),
        (
            "matmul_shared",
            Box::new(|x| x[0].matmul(&x[0].slice(0, 0, 1)?.reshape(&[3, 4])?.transpose()?)),
        ),
    ];
    for (name, f) in checks {
        let r = check_tensor(&[a.clone(), b.clone()], |xs| f(xs), &mut rng).unwrap();
        assert!(r.max_rel_error < TOL, "{name}: {}", r.max_rel_error);
    }
}

#[test]
fn gather_scatter_and_segment_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = rand_param(&mut rng, &[5, 3], -1.0, 1.0);
    let idx = Rc::new(vec![0, 2, 2, 4, 1, 0]);
    let r = check_tensor(&[x.clone()], |xs| xs[0].index_select(idx.clone()), &mut rng).unwrap();
    assert!(r.max_rel_error < TOL);
    let rows = rand_param(&mut rng, &[6, 3], -1.0, 1.0);
    let r = check_tensor(&[rows], |xs| xs[0].index_add(idx.clone(), 5), &mut rng).unwrap();
    assert!(r.max_rel_error < TOL);
    let s = rand_param(&mut rng, &[6], -2.0, 2.0);
    let seg = Rc::new(vec![0, 1, 1, 0, 2, 2]);
    let r = check_tensor(&[s], |xs| xs[0].segment_softmax(seg.clone(), 3), &mut rng).unwrap();
    assert!(r.max_rel_error < TOL);
}

#[test]
fn conv_on_small_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = rand_param(&mut rng, &[1, 2, 4, 4], -1.0, 1.0);
    let w = rand_param(&mut rng, &[3, 2, 3, 3], -1.0, 1.0);
    let b = rand_param(&mut rng, &[3], -1.0, 1.0);
    for stride in [1, 2] {
        let r = check_tensor(
            &[x.clone(), w.clone(), b.clone()],
            |xs| conv2d(&xs[0], &xs[1], Some(&xs[2]), stride, 1),
            &mut rng,
        )
        .unwrap();
        assert!(r.max_rel_error < TOL, "stride {stride}: {}", r.max_rel_error);
    }
    let r = check_tensor(&[x], |xs| upsample_nearest(&xs[0], 2), &mut rng).unwrap();
    assert!(r.max_rel_error < TOL);
}

#[test]
fn normalization_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = rand_param(&mut rng, &[2, 8, 3, 3], -2.0, 2.0);
    let g = rand_param(&mut rng, &[8], 0.5, 1.5);
    let b = rand_param(&mut rng, &[8], -0.5, 0.5);
    let r = check_tensor(&[x, g, b], |xs| group_norm(&xs[0], 4, &xs[1], &xs[2], 1e-5), &mut rng).unwrap();
    assert!(r.max_rel_error < TOL, "group_norm: {}", r.max_rel_error);

    let x = rand_param(&mut rng, &[3, 4, 6], -2.0, 2.0);
    let g = rand_param(&mut rng, &[6], 0.5, 1.5);
    let b = rand_param(&mut rng, &[6], -0.5, 0.5);
    let r = check_tensor(&[x, g, b], |xs| layer_norm(&xs[0], &xs[1], &xs[2], 1e-5), &mut rng).unwrap();
    assert!(r.max_rel_error < TOL, "layer_norm: {}", r.max_rel_error);
}
