use leo_twin_tensor::checkpoint::{load, read_header, save};
use leo_twin_tensor::{Linear, ParamStore, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model(seed: u64, d_out: usize) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    Linear::new(&mut store, "fc1", 4, 3, true, &mut rng).unwrap();
    Linear::new(&mut store, "fc2", 3, d_out, true, &mut rng).unwrap();
    store
}

#[test]
fn roundtrip_restores_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let a = model(1, 2);
    save(&path, &a, 42, 7).unwrap();
    let b = model(2, 2);
    let header = load(&path, &b).unwrap();
    assert_eq!((header.seed, header.step), (42, 7));
    for (pa, pb) in a.params().iter().zip(b.params()) {
        assert_eq!(pa.tensor.to_vec(), pb.tensor.to_vec());
    }
    let h = read_header(&path).unwrap();
    assert_eq!(h.params.len(), 4);
    assert_eq!(h.params[0].name, "fc1.weight");
    assert_eq!(h.params[0].shape, vec![4, 3]);
}

#[test]
fn shape_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save(&path, &model(1, 2), 0, 0).unwrap();
    assert!(matches!(load(&path, &model(1, 5)), Err(TensorError::Checkpoint(_))));
}
