use patterncraft_core::autoencoder::{AeConfig, AeDataset, AeError, AutoencoderModel, Provenance};
use patterncraft_core::level::{Chunk, LabelVocabulary, LabeledChunk, LevelGrid};
use patterncraft_core::nn::Tensor;
use patterncraft_core::Autoencoder;

fn stair_chunk() -> Chunk {
    let mut g = LevelGrid::empty(8, 8).unwrap();
    for x in 0..8 {
        g.set(x, 7, Some(0));
    }
    for step in 0..4 {
        for y in (6 - step)..7 {
            g.set(3 + step, y, Some(6));
        }
    }
    g.set(1, 2, Some(11));
    Chunk::from_grid(&g).unwrap()
}

fn flat_chunk(coin_col: usize) -> Chunk {
    let mut g = LevelGrid::empty(8, 8).unwrap();
    for x in 0..8 {
        g.set(x, 7, Some(0));
    }
    g.set(coin_col, 4, Some(11));
    Chunk::from_grid(&g).unwrap()
}

fn structure_error(pred: &[f32], truth: &Chunk) -> usize {
    let t: Vec<f32> = truth.to_dense();
    pred.iter().zip(&t).filter(|(p, t)| (**p >= 0.5) != (**t >= 0.5)).count()
}

fn quick(n_labels: usize, seed: u64, max_epochs: usize) -> AeConfig {
    let mut c = AeConfig::new(n_labels, seed);
    c.convergence.max_epochs = max_epochs;
    c
}

#[test]
fn memorizes_a_single_labelled_chunk() {
    let vocab = LabelVocabulary::new(["stairs", "coins"]).unwrap();
    let mut m = Autoencoder::build(quick(2, 0, 400), Some(&vocab)).unwrap();
    let ex = vec![LabeledChunk::new(stair_chunk(), Some(0)); 8];
    let summary = m.train(&AeDataset::from_chunks(&ex)).unwrap();
    assert!(m.log().iter().all(|l| l.is_finite()));
    assert_eq!(m.log().len(), summary.epochs);

    let r = m.reconstruct(&stair_chunk(), Some(0)).unwrap();
    assert!(r.structure.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(structure_error(r.structure.data(), &stair_chunk()), 0, "after {} epochs", summary.epochs);

    let g = m.generate(&stair_chunk(), 0, 0.5).unwrap();
    assert_eq!(g.predicted_labels.len(), 2);
    assert_eq!(g.predicted_labels[0].0, "stairs");
    assert!(g.predicted_labels.windows(2).all(|w| w[0].1 >= w[1].1));
    assert_eq!(Chunk::from_grid(&g.grid).unwrap(), stair_chunk());
}

fn shifted_stairs(x0: usize, coin: Option<usize>) -> Chunk {
    let mut g = LevelGrid::empty(8, 8).unwrap();
    for x in 0..8 {
        g.set(x, 7, Some(0));
    }
    for step in 0..4 {
        if x0 + step < 8 {
            for y in (6 - step)..7 {
                g.set(x0 + step, y, Some(6));
            }
        }
    }
    if let Some(c) = coin {
        g.set(c, 2, Some(11));
    }
    Chunk::from_grid(&g).unwrap()
}

#[test]
fn reconstructs_a_small_varied_set() {
    let vocab = LabelVocabulary::new(["stairs", "coins"]).unwrap();
    let mut ex: Vec<LabeledChunk> = (0..8).map(|i| LabeledChunk::new(flat_chunk(i), Some(1))).collect();
    for i in 0..5 {
        ex.push(LabeledChunk::new(shifted_stairs(i, Some((i + 3) % 8)), Some(0)));
        ex.push(LabeledChunk::new(shifted_stairs(i, None), Some(0)));
    }
    let mut m = Autoencoder::build(quick(2, 3, 400), Some(&vocab)).unwrap();
    m.train(&AeDataset::from_chunks(&ex)).unwrap();
    let wrong: usize = ex
        .iter()
        .map(|e| structure_error(m.reconstruct(&e.chunk, e.label).unwrap().structure.data(), &e.chunk))
        .sum();
    assert!(wrong <= 2, "{wrong} cells wrong");
}

#[test]
fn generate_rejects_unknown_labels() {
    let vocab = LabelVocabulary::new(["stairs"]).unwrap();
    let mut m = Autoencoder::build(quick(1, 1, 1), Some(&vocab)).unwrap();
    m.train(&AeDataset::from_chunks(&[LabeledChunk::new(flat_chunk(2), Some(0))])).unwrap();
    assert!(matches!(m.generate(&flat_chunk(2), 1, 0.5), Err(AeError::UnknownLabel(_))));
    assert!(matches!(m.generate_named(&flat_chunk(2), "pipes", 0.5), Err(AeError::UnknownLabel(_))));

    let mut unlabelled = Autoencoder::build(quick(0, 1, 1), None).unwrap();
    unlabelled.train(&AeDataset::from_chunks(&[LabeledChunk::new(flat_chunk(2), None)])).unwrap();
    assert!(matches!(unlabelled.generate(&flat_chunk(2), 0, 0.5), Err(AeError::UnknownLabel(_))));
}

#[test]
fn training_rejects_empty_data_and_is_deterministic() {
    let mut m = Autoencoder::build(quick(0, 1, 3), None).unwrap();
    let empty = AeDataset::<f32>::new(Tensor::zeros(&[0, 8, 8, 30]), vec![]).unwrap();
    assert!(matches!(m.train(&empty), Err(AeError::EmptyDataset)));

    let data: Vec<LabeledChunk> = (0..20).map(|i| LabeledChunk::new(flat_chunk(i % 8), None)).collect();
    let data = AeDataset::from_chunks(&data);
    let run = || {
        let mut m = Autoencoder::build(quick(0, 42, 6), None).unwrap();
        m.train(&data).unwrap();
        m
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log(), b.log());
    assert_eq!(a.params(), b.params());
    let mut running_min = f64::INFINITY;
    for l in a.log() {
        running_min = running_min.min(*l);
    }
    assert!(running_min <= a.log()[0]);
}

#[test]
fn convergence_rule_stops_before_the_cap() {
    let mut c = quick(0, 3, 2000);
    c.convergence.rel_tol = 0.5;
    c.convergence.patience = 2;
    let mut m = Autoencoder::build(c, None).unwrap();
    let s = m.train(&AeDataset::from_chunks(&[LabeledChunk::new(flat_chunk(1), None)])).unwrap();
    assert_eq!(s.stop, patterncraft_core::autoencoder::StopReason::Converged);
    assert!(s.epochs < 2000);
}

fn trained_parent() -> Autoencoder {
    let mut parent = Autoencoder::build(quick(0, 9, 15), None).unwrap();
    let data: Vec<LabeledChunk> =
        (0..16).map(|i| LabeledChunk::new(if i % 2 == 0 { flat_chunk(i % 8) } else { stair_chunk() }, None)).collect();
    parent.train(&AeDataset::from_chunks(&data)).unwrap();
    parent
}

#[test]
fn transfer_copies_parent_blocks() {
    let parent = trained_parent();
    let vocab = LabelVocabulary::new(["a", "b", "c"]).unwrap();
    let child = Autoencoder::transfer(&parent, AeConfig::new(3, 77), Some(&vocab)).unwrap();
    assert_eq!(child.encoder().params(), parent.encoder().params());
    assert_eq!(child.decoder().params(), parent.decoder().params());
    assert_eq!(child.provenance(), &Provenance::Transfer { parent: parent.id() });
    assert!(!child.is_trained());

    let (pw, cw) = (parent.fc_in().params()[0].data(), child.fc_in().params()[0].data());
    assert_eq!(&cw[..512 * 512], pw);
    assert_eq!(child.fc_in().params()[0].shape(), &[515, 512]);
    let extra = &cw[512 * 512..];
    let std = (extra.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / extra.len() as f64).sqrt();
    assert!((std - 0.01).abs() < 0.001, "{std}");

    let (pw, cw) = (parent.fc_out().params()[0].data(), child.fc_out().params()[0].data());
    for r in 0..512 {
        assert_eq!(&cw[r * 515..r * 515 + 512], &pw[r * 512..(r + 1) * 512]);
    }
    let bias = child.fc_out().params()[1].data();
    assert_eq!(&bias[..512], parent.fc_out().params()[1].data());
    assert_eq!(&bias[512..], &[0.0, 0.0, 0.0]);
}

#[test]
fn transfer_barely_perturbs_structure_output() {
    let parent = trained_parent();
    let vocab = LabelVocabulary::new(["a", "b", "c"]).unwrap();
    let child = Autoencoder::transfer(&parent, AeConfig::new(3, 77), Some(&vocab)).unwrap();
    let probe: Vec<LabeledChunk> = (0..8).map(|i| LabeledChunk::new(flat_chunk(i), None)).collect();
    let probe = AeDataset::<f32>::from_chunks(&probe);
    let (parent_out, _) = parent.infer_batch(&probe.inputs, &probe.labels).unwrap();
    let mean_abs = |a: &Tensor<f32>, b: &Tensor<f32>| {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len() as f64
    };
    let (zero_labels, _) = child.infer_batch(&probe.inputs, &probe.labels).unwrap();
    assert!(mean_abs(&parent_out, &zero_labels) < 0.05);
    let labelled: Vec<Option<usize>> = (0..8).map(|i| Some(i % 3)).collect();
    let (one_hot, _) = child.infer_batch(&probe.inputs, &labelled).unwrap();
    let d = mean_abs(&parent_out, &one_hot);
    println!("mean |Δ| with one-hot labels: {d:.2e}");
    assert!(d < 0.05);
}

#[test]
fn transfer_preconditions() {
    let vocab = LabelVocabulary::new(["a"]).unwrap();
    let untrained = Autoencoder::build(quick(0, 1, 1), None).unwrap();
    assert!(matches!(
        Autoencoder::transfer(&untrained, AeConfig::new(1, 0), Some(&vocab)),
        Err(AeError::IncompatibleParent(_))
    ));
    let parent = trained_parent();
    let mut wider = AeConfig::new(1, 0);
    wider.filters = [16, 32];
    assert!(matches!(Autoencoder::transfer(&parent, wider, Some(&vocab)), Err(AeError::IncompatibleParent(_))));
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let parent = trained_parent();
    let path = dir.path().join("parent.weights");
    parent.save(&path).unwrap();
    let back = Autoencoder::load(&path, None).unwrap();
    assert_eq!(back.params(), parent.params());
    assert_eq!(back.log(), parent.log());
    assert_eq!(back.id(), parent.id());

    let vocab = LabelVocabulary::new(["a", "b"]).unwrap();
    assert!(matches!(Autoencoder::load(&path, Some(&vocab)), Err(AeError::VocabularyMismatch { .. })));

    // a labelled architecture cannot read the label-free weights directly
    let mut manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("parent.json")).unwrap()).unwrap();
    manifest["config"]["n_labels"] = 2.into();
    manifest["vocabulary"] = serde_json::json!(["a", "b"]);
    std::fs::write(dir.path().join("parent.json"), manifest.to_string()).unwrap();
    assert!(Autoencoder::load(&path, None).is_err());

    let child = Autoencoder::transfer_from_file(&path, AeConfig::new(2, 5), Some(&vocab)).unwrap();
    assert_eq!(child.encoder().params(), parent.encoder().params());
}

#[test]
fn f64_model_builds_and_trains() {
    let mut m = AutoencoderModel::<f64>::build(quick(0, 2, 2), None).unwrap();
    m.train(&AeDataset::from_chunks(&[LabeledChunk::new(flat_chunk(3), None)])).unwrap();
    assert_eq!(m.log().len(), 2);
}
