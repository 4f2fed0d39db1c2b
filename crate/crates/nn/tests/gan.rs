use std::path::Path;

use proptest::prelude::*;
use tilesynth_core::geodata::synth_grid_city;
use tilesynth_core::image::RgbImage;
use tilesynth_core::raster::{build_dataset, DatasetOptions, Split};
use tilesynth_core::rng::SplitMix64;
use tilesynth_core::xyz::{list_tiles, tile_path};
use tilesynth_core::TileId;
use tilesynth_nn::gan::data::TrainingPair;
use tilesynth_nn::gan::*;
use tilesynth_nn::loss::bce_with_logits;
use tilesynth_nn::{Module, Tensor};

fn random_pair(seed: u64, r: usize) -> TrainingPair {
    let mut rng = SplitMix64::new(seed);
    TrainingPair {
        tile: TileId::new(10, seed, 0).unwrap(),
        input: Tensor::uniform(&[1, 3, r, r], -1.0, 1.0, &mut rng),
        target: Tensor::uniform(&[1, 3, r, r], -1.0, 1.0, &mut rng),
    }
}

fn tiny_session(seed: u64) -> TrainSession {
    let cfg = TrainConfig { seed, epochs: 1, ..TrainConfig::default() };
    TrainSession::new(&GeneratorConfig::tiny(), &DiscriminatorConfig::tiny(), &cfg).unwrap()
}

#[test]
fn parameter_count_matches_layer_by_layer_sum() {
    let cfg = GeneratorConfig { base_width: 8, n_res_blocks: 2, resolution: 32, ..GeneratorConfig::default() };
    let g = build_generator(&cfg, 0).unwrap();
    let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
    let norm = |c: usize| 2 * c;
    let expected = conv(3, 8, 7) + norm(8)
        + conv(8, 16, 3) + norm(16)
        + conv(16, 32, 3) + norm(32)
        + 2 * (2 * (conv(32, 32, 3) + norm(32)))
        + conv(32, 16, 4) + norm(16)
        + conv(16, 8, 4) + norm(8)
        + conv(8, 3, 7);
    assert_eq!(expected, 1184 + 16 + 1168 + 32 + 4640 + 64 + 2 * 2 * (9248 + 64) + 8208 + 32 + 2056 + 16 + 1179);
    assert_eq!(g.param_count(), expected);
}

#[test]
fn full_resolution_shapes() {
    let cfg = GeneratorConfig { base_width: 4, ..GeneratorConfig::default() };
    assert_eq!(cfg.n_res_blocks, 9);
    let mut g = build_generator(&cfg, 1).unwrap();
    let x = Tensor::uniform(&[1, 3, 256, 256], -1.0, 1.0, &mut SplitMix64::new(2));
    let y = g.forward(&x).unwrap();
    assert_eq!(y.shape(), &[1, 3, 256, 256]);

    let default = build_discriminator(&DiscriminatorConfig::default(), 0).unwrap();
    assert_eq!(receptive_field(&default.config), 70);
    let mut d = build_discriminator(&DiscriminatorConfig::tiny(), 0).unwrap();
    let logits = d.forward(&d.pair(&x, &y).unwrap()).unwrap();
    assert_eq!(logits.shape(), &[1, 1, 30, 30]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generator_preserves_shape_and_range(w in 4usize..9, blocks in 1usize..3, quarter in 2usize..7, seed in any::<u64>()) {
        let cfg = GeneratorConfig { base_width: w, n_res_blocks: blocks, resolution: 4 * quarter, ..GeneratorConfig::default() };
        let mut g = build_generator(&cfg, seed).unwrap();
        let x = Tensor::uniform(&[1, 3, cfg.resolution, cfg.resolution], -1.0, 1.0, &mut SplitMix64::new(seed));
        let y = g.forward(&x).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        prop_assert!(y.data().iter().all(|v| *v > -1.0 && *v < 1.0));
    }
}

#[test]
fn generator_step_reduces_l1_on_its_pair() {
    let p = random_pair(11, 64);
    for seed in [1, 2, 3] {
        let cfg = TrainConfig { seed, lr: 1e-4, ..TrainConfig::default() };
        let mut s = TrainSession::new(&GeneratorConfig::tiny(), &DiscriminatorConfig::tiny(), &cfg).unwrap();
        let before = s.generator_step(&p.input, &p.target).unwrap().l1;
        let after = s.generator_objective(&p.input, &p.target).unwrap().l1;
        assert!(after < before, "seed {seed}: {after} !< {before}");
    }
}

#[test]
fn zero_lambda_leaves_only_the_adversarial_term() {
    let cfg = TrainConfig { lambda_l1: 0.0, ..TrainConfig::default() };
    let mut s = TrainSession::new(&GeneratorConfig::tiny(), &DiscriminatorConfig::tiny(), &cfg).unwrap();
    let p = random_pair(3, 64);
    let loss = s.generator_objective(&p.input, &p.target).unwrap();
    assert!(loss.l1 > 0.0);
    assert_eq!(loss.total, loss.adversarial);

    let fake = s.state.generator.forward(&p.input).unwrap();
    let d = &mut s.state.discriminator;
    let logits = d.forward(&d.pair(&p.input, &fake).unwrap()).unwrap();
    assert_eq!(loss.adversarial, bce_with_logits(&logits, 1.0).0);
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let pairs: Vec<_> = (0..3).map(|i| random_pair(i, 64)).collect();
    let run = || {
        let mut s = tiny_session(9);
        s.run_epoch(&pairs).unwrap();
        s.state
    };
    let a = run();
    let b = run();
    let bytes = a.to_bytes().unwrap();
    assert_eq!(bytes, b.to_bytes().unwrap());
    assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.tsck");
    a.save(&path).unwrap();
    let mut loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.to_bytes().unwrap(), bytes);
    assert_eq!(loaded.epoch, 1);
    assert_eq!(loaded.history, a.history);
    assert_eq!(loaded.opt_g.moments, a.opt_g.moments);
    let mut original = a.generator.clone();
    let x = &pairs[0].input;
    assert_eq!(original.forward(x).unwrap().data(), loaded.generator.forward(x).unwrap().data());

    // Resuming continues exactly where an uninterrupted run would be.
    let mut two = tiny_session(9);
    two.run_epoch(&pairs).unwrap();
    two.run_epoch(&pairs).unwrap();
    let mut resumed = TrainSession::from_checkpoint(loaded);
    resumed.run_epoch(&pairs).unwrap();
    assert_eq!(resumed.state.to_bytes().unwrap(), two.state.to_bytes().unwrap());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let bytes = tiny_session(1).state.to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&bytes).is_ok());
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Checkpoint::from_bytes(&extra).is_err());
}

#[test]
fn non_finite_loss_aborts_with_position() {
    let mut s = tiny_session(1);
    let last = s.state.generator.param_names().pop().unwrap();
    assert!(last.ends_with(".bias"));
    s.state.generator.visit_params_mut("", &mut |name, p| {
        if name == last {
            p.data_mut()[0] = f32::NAN;
        }
    });
    let err = s.run_epoch(&[random_pair(1, 64)]).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, GanError::NonFinite { epoch: 1, step: 1, .. }), "{msg}");
    assert!(msg.contains("epoch 1, step 1"), "{msg}");
}

fn small_dataset(dir: &Path, tile_px: u32) -> tilesynth_core::raster::DatasetManifest {
    let city = synth_grid_city(3, 3, 5);
    let opts = DatasetOptions { zoom: 17, min_building_px: 0, tile_px, seed: 2, ..Default::default() };
    build_dataset(&city, &opts, dir).unwrap()
}

#[test]
fn train_writes_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_dataset(&dir.path().join("data"), 128);
    let out = dir.path().join("run");
    let cfg = TrainConfig { epochs: 2, checkpoint_every: 1, seed: 4, ..TrainConfig::default() };
    let gen = GeneratorConfig { resolution: 32, base_width: 4, n_res_blocks: 1, ..GeneratorConfig::default() };
    let ckpt = train(&m, &gen, &DiscriminatorConfig::tiny(), &cfg, Some(&out)).unwrap();
    assert_eq!(ckpt.epoch, 2);
    let log = std::fs::read_to_string(out.join(LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.starts_with(LOG_HEADER));
    assert_eq!(Checkpoint::load(&out.join(CHECKPOINT_FILE)).unwrap().to_bytes().unwrap(), ckpt.to_bytes().unwrap());

    // A resolution that does not divide the tile size is rejected up front.
    let odd = GeneratorConfig { resolution: 48, ..gen.clone() };
    assert!(matches!(train(&m, &odd, &DiscriminatorConfig::tiny(), &cfg, None), Err(GanError::Config(_))));
}

#[test]
fn unpaired_and_empty_datasets_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = small_dataset(dir.path(), 64);
    let gen = GeneratorConfig::tiny();
    let t = m.split_tiles(Split::Train)[0];
    std::fs::remove_file(tile_path(&m.target_dir(), t)).unwrap();
    let err = train(&m, &gen, &DiscriminatorConfig::tiny(), &TrainConfig::default(), None).unwrap_err();
    assert!(matches!(&err, GanError::Unpaired(missing) if missing == &vec![format!("target {t}")]), "{err}");
    assert!(err.is_validation());

    m.tiles.retain(|t| t.split == Split::Test);
    let err = train(&m, &gen, &DiscriminatorConfig::tiny(), &TrainConfig::default(), None).unwrap_err();
    assert!(matches!(err, GanError::EmptyDataset(_)));
}

#[test]
fn generate_maps_tiles_one_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_dataset(&dir.path().join("data"), 128);
    let gen = GeneratorConfig { resolution: 32, base_width: 4, n_res_blocks: 1, ..GeneratorConfig::default() };
    let g = build_generator(&gen, 3).unwrap();
    let inputs = list_tiles(&m.input_dir());

    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    let r1 = generate(&g, &m.input_dir(), &o1, None).unwrap();
    let r2 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| generate(&g, &m.input_dir(), &o2, None)).unwrap();
    assert!(r1.errors.is_empty());
    assert_eq!(r1, r2);
    let outputs = list_tiles(&o1);
    assert_eq!(outputs.iter().map(|o| o.0).collect::<Vec<_>>(), inputs.iter().map(|i| i.0).collect::<Vec<_>>());
    for ((_, a), (_, b)) in outputs.iter().zip(list_tiles(&o2)) {
        let bytes = std::fs::read(a).unwrap();
        assert_eq!(bytes, std::fs::read(&b).unwrap());
        assert_eq!(RgbImage::load_png(a).unwrap().width(), 128);
    }

    let only = &[inputs[0].0];
    let r = generate(&g, &m.input_dir(), &dir.path().join("one"), Some(only)).unwrap();
    assert_eq!(r.written, only.to_vec());

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let r = generate(&g, &empty, &dir.path().join("none"), None).unwrap();
    assert_eq!(r, GenerateReport::default());
    assert!(list_tiles(&dir.path().join("none")).is_empty());

    // A tile of the wrong size fails on its own; the rest still get written.
    let mixed = dir.path().join("mixed");
    for (t, p) in &inputs[..2] {
        std::fs::create_dir_all(tile_path(&mixed, *t).parent().unwrap()).unwrap();
        std::fs::copy(p, tile_path(&mixed, *t)).unwrap();
    }
    RgbImage::filled(40, 40, [0, 0, 0]).save_png(&tile_path(&mixed, inputs[0].0)).unwrap();
    let r = generate(&g, &mixed, &dir.path().join("mixed_out"), None).unwrap();
    assert_eq!(r.written, vec![inputs[1].0]);
    assert_eq!(r.errors.len(), 1);
    assert_eq!(r.errors[0].0, inputs[0].0);
}
