use leo_twin_tensor::{cosine_anneal, Init, OptimState, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quadratic_run(mut opt: OptimState, steps: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let w = store
        .create("w", &[1], Init::Constant { value: 5.0 }, &mut rng)
        .unwrap();
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        store.zero_grad();
        w.add_scalar(-1.5)
            .unwrap()
            .square()
            .unwrap()
            .sum()
            .unwrap()
            .backward()
            .unwrap();
        opt.step(store.params()).unwrap();
        trace.push(w.item());
    }
    trace
}

#[test]
fn adam_converges_on_quadratic() {
    let trace = quadratic_run(OptimState::adam(0.1), 500);
    let last = *trace.last().unwrap();
    assert!((last - 1.5).abs() < 1e-6, "final iterate {last}");
}

#[test]
fn adamw_without_decay_equals_adam() {
    assert_eq!(
        quadratic_run(OptimState::adam(0.05), 100),
        quadratic_run(OptimState::adamw(0.05, 0.0), 100)
    );
}

#[test]
fn adamw_decay_shrinks_toward_zero() {
    let plain = quadratic_run(OptimState::adam(0.05), 300);
    let decayed = quadratic_run(OptimState::adamw(0.05, 0.5), 300);
    assert!(decayed.last().unwrap() < plain.last().unwrap());
}

#[test]
fn cosine_is_monotone_between_endpoints() {
    let lrs: Vec<f64> = (0..=250).map(|e| cosine_anneal(1e-3, 250, 1e-6, e)).collect();
    assert_eq!(lrs[0], 1e-3);
    assert!((lrs[250] - 1e-6).abs() < 1e-18);
    assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(cosine_anneal(1e-3, 250, 1e-6, 400), lrs[250]);
}
