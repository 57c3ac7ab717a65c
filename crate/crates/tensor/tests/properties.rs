use leo_twin_tensor::{broadcast_shapes, Tensor};
use proptest::prelude::*;

proptest! {
    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-30.0f64..30.0, 1..40)) {
        let n = v.len();
        let y = Tensor::new(v, &[n]).unwrap().softmax(0).unwrap().to_vec();
        prop_assert!(y.iter().all(|p| *p >= 0.0));
        prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let v: Vec<f64> = (0..rows * cols).map(|i| ((i as u64 ^ seed) % 97) as f64 * 0.1 - 4.0).collect();
        let y = Tensor::new(v, &[rows, cols]).unwrap().softmax(1).unwrap().to_vec();
        for r in y.chunks(cols) {
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn broadcast_is_commutative(a in prop::collection::vec(1usize..4, 0..4), b in prop::collection::vec(1usize..4, 0..4)) {
        prop_assert_eq!(broadcast_shapes(&a, &b), broadcast_shapes(&b, &a));
    }

    #[test]
    fn gradients_accumulate_additively(v in prop::collection::vec(-3.0f64..3.0, 1..10)) {
        let n = v.len();
        let x = Tensor::param(v.clone(), &[n]).unwrap();
        x.square().unwrap().sum().unwrap().backward().unwrap();
        x.square().unwrap().sum().unwrap().backward().unwrap();
        let g = x.grad().unwrap();
        for (gi, vi) in g.iter().zip(&v) {
            prop_assert!((gi - 4.0 * vi).abs() < 1e-12);
        }
    }
}
