use memprobe::autoencoder::{Activation, FcArchitecture, TiedAutoencoder};
use memprobe::io::{
    load_dataset, load_model, read_mask, read_tensor, save_model, write_mask, write_pnm,
    write_tensor,
};
use memprobe::numerics::{Rng, Vector};
use memprobe::{mse_loss, AutoencoderModel, ErasureMask, Geometry, Model};

fn images(n: usize, d: usize, seed: u64) -> Vec<Vector> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| Vector::from_fn(d, |_| rng.uniform()))
        .collect()
}

#[test]
fn model_reload_preserves_loss() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(5);
    let arch = FcArchitecture::mirrored(16, 4, 4, Activation::Prelu { slope: 0.2 }).unwrap();
    let deep = Model::Deep(AutoencoderModel::new_fc(&arch, &mut rng).unwrap());
    let tied = Model::Tied(
        TiedAutoencoder::random(16, 8, Activation::Softplus { beta: 2.0 }, &mut rng).unwrap(),
    );
    let data = images(3, 16, 6);
    for (i, model) in [deep, tied].into_iter().enumerate() {
        let path = dir.path().join(format!("m{i}.bin"));
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        let (a, b) = (
            mse_loss(&model, &data).unwrap(),
            mse_loss(&back, &data).unwrap(),
        );
        assert!((a - b).abs() <= 1e-15);
    }
}

#[test]
fn tensor_and_mask_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new(3, 4, 2).unwrap();
    let data = images(5, g.len(), 7);
    let path = dir.path().join("nested/x.mprb");
    write_tensor(&path, g, &data).unwrap();
    assert_eq!(read_tensor(&path).unwrap(), (g, data));

    let mask = ErasureMask::new(vec![true, false, false, true, true]);
    let mpath = dir.path().join("m.txt");
    write_mask(&mpath, &mask).unwrap();
    assert_eq!(read_mask(&mpath).unwrap(), mask);
}

#[test]
fn dataset_directory_with_limit() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new(4, 5, 1).unwrap();
    for i in 0..6 {
        let px: Vec<f64> = (0..g.len()).map(|k| ((k + i) % 5) as f64 / 4.0).collect();
        write_pnm(&dir.path().join(format!("img{i}.pgm")), g, &px).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();

    let all = load_dataset(dir.path(), Some(g), None, 0).unwrap();
    assert_eq!(all.len(), 6);
    assert!(all.iter().all(|r| r.geometry == g));
    assert!(all
        .iter()
        .flat_map(|r| r.data.iter())
        .all(|&v| (0.0..=1.0).contains(&v)));

    let a = load_dataset(dir.path(), None, Some(3), 9).unwrap();
    let b = load_dataset(dir.path(), None, Some(3), 9).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a, b);
    let ids: Vec<&str> = a.iter().map(|r| r.sample_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);

    let wrong = Geometry::new(5, 4, 1).unwrap();
    assert!(load_dataset(dir.path(), Some(wrong), None, 0).is_err());
}

#[test]
fn empty_dataset_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_dataset(dir.path(), None, None, 0).is_err());
}
