use convboost_core::backbone::{
    AdamState, Backbone, Cnn, CnnArchitecture, ConvLayer, Mode, ModelParams, PredictionScores,
};
use convboost_core::batch::FrameBatch;
use convboost_core::data::{generate_synthetic, DatasetBundle, SyntheticSpec, WindowConfig};
use convboost_core::ensemble::{
    compress_average, compress_params, fuse_predict, fuse_scores, select_top_m, train_convboost,
    train_convboost_into, BoosterSwitches, EnsembleSelection, EpochModel, EpochModelStore, SelectionMode,
    TrainRunConfig,
};
use convboost_core::model_file;
use convboost_core::rng::RngStream;
use convboost_core::sampling::frame_split;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn data() -> DatasetBundle {
    let spec = SyntheticSpec {
        num_classes: 3,
        channels: 3,
        sampling_rate: 20.0,
        segment_lengths: vec![60, 40, 40],
        class_weights: vec![0.5, 0.25, 0.25],
        noise_std: 0.3,
        null_amplitude: 0.3,
        random_phase: true,
        min_frequency: 1.0,
        max_frequency: 4.0,
        sequence_length: 400,
        train_sequences: 2,
        validation_sequences: 1,
        test_sequences: 1,
    };
    generate_synthetic(&spec, 17).unwrap().normalized().unwrap().0
}

fn config(epochs: usize, boosters: BoosterSwitches) -> TrainRunConfig {
    let mut cfg = TrainRunConfig::new(WindowConfig::new(1.0, 0.5).unwrap(), 99);
    cfg.epochs = epochs;
    cfg.batch_size = 16;
    cfg.ensemble_size = epochs.min(2);
    cfg.boosters = boosters;
    cfg.architecture = CnnArchitecture {
        conv_layers: vec![
            ConvLayer {
                feature_maps: 4,
                kernel_size: 3
            };
            2
        ],
        pool_size: 2,
        fc_layers: vec![8],
        dropout_rate: 0.5,
        group_norm_groups: Some(2),
    };
    cfg
}

fn bits(p: &ModelParams) -> Vec<u64> {
    p.flat_view().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn store_holds_one_snapshot_per_epoch() {
    let store = train_convboost(&data(), &config(3, BoosterSwitches::convboost())).unwrap();
    let epochs: Vec<usize> = store.records().iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, vec![1, 2, 3]);
    assert!(store.records().iter().all(|r| (0.0..=1.0).contains(&r.validation_f1)));
    assert!(store.records().iter().all(|r| r.train_loss.is_finite()));
}

#[test]
fn training_is_deterministic() {
    let mut boosters = BoosterSwitches::convboost();
    boosters.r_frame_star = true;
    boosters.scaling = true;
    let cfg = config(2, boosters);
    let a = train_convboost(&data(), &cfg).unwrap();
    let b = train_convboost(&data(), &cfg).unwrap();
    assert_eq!(a.records(), b.records());
    for e in 1..=2 {
        assert_eq!(bits(&a.load(e).unwrap()), bits(&b.load(e).unwrap()));
    }
    let mut other = cfg.clone();
    other.seed += 1;
    let c = train_convboost(&data(), &other).unwrap();
    assert_ne!(bits(&a.load(2).unwrap()), bits(&c.load(2).unwrap()));
}

#[test]
fn boosters_off_single_epoch_matches_scripted_loop() {
    let data = data();
    let cfg = config(1, BoosterSwitches::off());
    let store = train_convboost(&data, &cfg).unwrap();

    let cnn = Cnn::new(cfg.cnn_config(&data).unwrap()).unwrap();
    let root = RngStream::new(cfg.seed);
    let mut params = cnn.init_params(&mut root.derive("init", 0)).unwrap();
    let mut adam = AdamState::new(params.flat_view().len(), cfg.learning_rate);
    let frames = frame_split(&data.train, &cfg.window).unwrap();
    let epoch = root.derive("epoch", 1);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.shuffle(&mut epoch.derive("shuffle", 0));
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let batch = FrameBatch::from_frames(chunk.iter().map(|&i| &frames.frames[i]), frames.length, frames.channels).unwrap();
        let mut dropout = epoch.derive("batch", b as u64).derive("dropout", 0);
        let (_, grad) = cnn.cross_entropy_gradient(&params, &batch, &mut dropout).unwrap();
        adam.update(params.flat_view_mut(), &grad).unwrap();
    }

    let trained = store.load(1).unwrap();
    let diff = trained
        .flat_view()
        .iter()
        .zip(params.flat_view())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff <= 1e-12, "max parameter difference {diff}");
}

#[test]
fn disk_store_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = data();
    let cfg = config(2, BoosterSwitches::convboost());
    let mut disk = EpochModelStore::create(dir.path(), "abc", cfg.seed).unwrap();
    train_convboost_into(&data, &cfg, &mut disk).unwrap();
    let memory = train_convboost(&data, &cfg).unwrap();
    let reopened = EpochModelStore::open(dir.path()).unwrap();
    assert_eq!(reopened.records(), memory.records());
    assert_eq!((reopened.config_hash(), reopened.seed()), ("abc", cfg.seed));
    for e in 1..=2 {
        assert_eq!(bits(&reopened.load(e).unwrap()), bits(&memory.load(e).unwrap()));
        assert!(EpochModelStore::snapshot_path(dir.path(), e).exists());
    }
    assert!(EpochModelStore::create(dir.path(), "abc", 0).is_err());
}

#[test]
fn divergence_is_reported_with_position() {
    let mut cfg = config(1, BoosterSwitches::off());
    cfg.learning_rate = 1e300;
    cfg.batch_size = 4;
    match train_convboost(&data(), &cfg) {
        Err(convboost_core::Error::Divergence { epoch, batch, .. }) => {
            assert_eq!(epoch, 1);
            assert!(batch > 0);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn invalid_run_configs() {
    let mut cfg = config(2, BoosterSwitches::convboost());
    cfg.ensemble_size = 3;
    assert!(train_convboost(&data(), &cfg).is_err());
    let mut cfg = config(2, BoosterSwitches::off());
    cfg.boosters.r_frame_star = true;
    assert!(train_convboost(&data(), &cfg).is_err());
    let mut cfg = config(2, BoosterSwitches::convboost());
    cfg.batch_size = 0;
    assert!(train_convboost(&data(), &cfg).is_err());
}

fn trained_store() -> (DatasetBundle, EpochModelStore) {
    let data = data();
    let store = train_convboost(&data, &config(4, BoosterSwitches::convboost())).unwrap();
    (data, store)
}

#[test]
fn single_member_fusion_is_evaluate() {
    let (data, store) = trained_store();
    let test = frame_split(&data.test, &WindowConfig::new(1.0, 0.5).unwrap()).unwrap();
    let sel = select_top_m(&store, 1).unwrap();
    let fused = fuse_predict(&store, &sel, &test).unwrap();
    let params = store.load(sel.epochs[0]).unwrap();
    let direct = Cnn::new(params.config().clone()).unwrap().evaluate(&params, &test).unwrap();
    assert_eq!(fused.predictions, direct.predictions);
    for (a, b) in fused.scores.iter().zip(&direct.scores) {
        assert!(a.0.iter().zip(&b.0).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn fusion_of_identical_members_and_permutations() {
    let (data, store) = trained_store();
    let test = frame_split(&data.test, &WindowConfig::new(1.0, 0.5).unwrap()).unwrap();
    let same = EnsembleSelection {
        epochs: vec![2, 2, 2],
        mode: SelectionMode::Ensemble,
    };
    let fused = fuse_predict(&store, &same, &test).unwrap();
    let single = fuse_predict(&store, &EnsembleSelection { epochs: vec![2], mode: SelectionMode::SingleBest }, &test).unwrap();
    for (a, b) in fused.scores.iter().zip(&single.scores) {
        assert!(a.0.iter().zip(&b.0).all(|(x, y)| (x - y).abs() <= 1e-12));
    }
    let forward = EnsembleSelection { epochs: vec![1, 2, 3, 4], mode: SelectionMode::Ensemble };
    let backward = EnsembleSelection { epochs: vec![4, 2, 3, 1], mode: SelectionMode::Ensemble };
    assert_eq!(
        fuse_predict(&store, &forward, &test).unwrap(),
        fuse_predict(&store, &backward, &test).unwrap()
    );
    for s in fuse_predict(&store, &forward, &test).unwrap().scores {
        assert!((s.0.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    let missing = EnsembleSelection { epochs: vec![9], mode: SelectionMode::Ensemble };
    assert!(fuse_predict(&store, &missing, &test).is_err());
}

fn rational(x: f64) -> BigRational {
    BigRational::from_f64(x).unwrap()
}

fn ulp(x: f64) -> f64 {
    (x.next_up() - x).abs().max((x - x.next_down()).abs())
}

#[test]
fn compression_matches_exact_mean_within_one_ulp() {
    let (_, store) = trained_store();
    let sel = select_top_m(&store, 4).unwrap();
    let avg = compress_average(&store, &sel).unwrap();
    let members: Vec<ModelParams> = sel.epochs.iter().map(|&e| store.load(e).unwrap()).collect();
    let m = BigRational::from_integer(BigInt::from(members.len()));
    for i in 0..avg.flat_view().len() {
        let exact = members.iter().map(|p| rational(p.flat_view()[i])).fold(BigRational::from_integer(BigInt::from(0)), |a, b| a + b) / &m;
        let got = avg.flat_view()[i];
        let err = (rational(got) - exact).abs();
        assert!(err <= rational(ulp(got)), "parameter {i}");
    }
    // usable by evaluate
    let cnn = Cnn::new(avg.config().clone()).unwrap();
    let frame = vec![0.1; avg.config().input_length * avg.config().input_channels];
    let scores = cnn.forward(&avg, &frame, Mode::Eval, &mut RngStream::new(0)).unwrap();
    assert!((scores[0].0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn compression_of_identical_models_is_identity_and_order_free() {
    let (_, store) = trained_store();
    let one = store.load(3).unwrap();
    let avg = compress_params(&vec![one.clone(); 5]).unwrap();
    assert_eq!(bits(&avg), bits(&one));
    let sel = EnsembleSelection { epochs: vec![1, 2, 3, 4], mode: SelectionMode::Compressed };
    let rev = EnsembleSelection { epochs: vec![4, 3, 2, 1], mode: SelectionMode::Compressed };
    assert_eq!(
        bits(&compress_average(&store, &sel).unwrap()),
        bits(&compress_average(&store, &rev).unwrap())
    );
}

#[test]
fn compressed_file_is_one_mth_of_the_selection() {
    let (_, store) = trained_store();
    let dir = tempfile::tempdir().unwrap();
    let sel = select_top_m(&store, 4).unwrap();
    let mut selection_bytes = 0;
    for &e in &sel.epochs {
        selection_bytes += model_file::encode(&store.load(e).unwrap()).len();
    }
    let path = dir.path().join("compressed.cvb");
    model_file::save(&compress_average(&store, &sel).unwrap(), &path).unwrap();
    let compressed = std::fs::metadata(&path).unwrap().len() as usize;
    assert_eq!(compressed * 4, selection_bytes);
}

#[test]
fn r_frame_star_doubles_frames_per_step() {
    use convboost_core::augment::{mixup_batch, r_frame_star, MixupConfig};
    let data = data();
    let cfg = config(1, BoosterSwitches::convboost());
    let cnn = Cnn::new(cfg.cnn_config(&data).unwrap()).unwrap();
    let params = cnn.init_params(&mut RngStream::new(0)).unwrap();
    let frames = frame_split(&data.train, &cfg.window).unwrap();
    let batch = FrameBatch::from_frames(frames.frames.iter().take(32), frames.length, frames.channels).unwrap();
    let mut rng = RngStream::new(4);
    let base = mixup_batch(&batch, &MixupConfig::default(), &mut rng).unwrap();
    let extra = r_frame_star(&batch, &MixupConfig::default(), &mut rng).unwrap();
    assert_eq!(base.len() + extra.len(), 64);
    let mut no_dropout = cfg.architecture.clone();
    no_dropout.dropout_rate = 0.0;
    let plain = Cnn::new(convboost_core::backbone::CnnConfig::new(no_dropout, frames.length, frames.channels, 3).unwrap()).unwrap();
    let p = ModelParams::from_flat(plain.config().clone(), params.flat_view().to_vec()).unwrap();
    let d = RngStream::new(0);
    let (both, _) = plain.loss_and_gradient(&p, &[base.clone(), extra.clone()], &mut d.clone()).unwrap();
    let (l1, _) = plain.loss_and_gradient(&p, &[base], &mut d.clone()).unwrap();
    let (l2, _) = plain.loss_and_gradient(&p, &[extra], &mut d.clone()).unwrap();
    assert!((both - (l1 + l2) / 2.0).abs() < 1e-12);
}

fn store_with_scores(f1: &[f64]) -> EpochModelStore {
    let cfg = config(1, BoosterSwitches::off());
    let cnn_cfg = convboost_core::backbone::CnnConfig::new(cfg.architecture, 20, 2, 3).unwrap();
    let params = ModelParams::init(&cnn_cfg, &mut RngStream::new(0)).unwrap();
    let mut store = EpochModelStore::in_memory("", 0);
    for (i, &f) in f1.iter().enumerate() {
        store
            .push(EpochModel {
                epoch: i + 1,
                params: params.clone(),
                validation_f1: f,
                train_loss: 0.0,
            })
            .unwrap();
    }
    store
}

proptest! {
    #[test]
    fn selection_is_weakly_decreasing(f1 in prop::collection::vec(0u8..=10, 1..20), m_seed in 0usize..100) {
        let f1: Vec<f64> = f1.into_iter().map(|v| v as f64 / 10.0).collect();
        let store = store_with_scores(&f1);
        let m = 1 + m_seed % f1.len();
        let sel = select_top_m(&store, m).unwrap();
        prop_assert_eq!(sel.epochs.len(), m);
        let scores: Vec<f64> = sel.epochs.iter().map(|&e| f1[e - 1]).collect();
        prop_assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        let mut sorted = sel.epochs.clone();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), m);
        // nothing left out scores higher than the weakest selected member
        let weakest = *scores.last().unwrap();
        for e in 1..=f1.len() {
            if !sel.epochs.contains(&e) {
                prop_assert!(f1[e - 1] <= weakest);
            }
        }
    }

    #[test]
    fn fused_scores_are_distributions(seed in any::<u64>(), m in 1usize..6, classes in 2usize..6) {
        let mut rng = RngStream::new(seed);
        let members: Vec<Vec<PredictionScores>> = (0..m)
            .map(|_| {
                let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.0..1.0)).collect();
                let total: f64 = raw.iter().sum();
                vec![PredictionScores(raw.iter().map(|v| v / total).collect())]
            })
            .collect();
        let fused = fuse_scores(&members).unwrap();
        prop_assert!((fused[0].0.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(fused[0].0.iter().all(|&p| p >= 0.0));
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(fuse_scores(&shuffled).unwrap(), fused);
    }
}
