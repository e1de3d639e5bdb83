use patterncraft_core::forest::ForestConfig;
use patterncraft_eval::config::{ExperimentKind, GeneratorSettings, Variant};
use patterncraft_eval::corpus::{make_synthetic_corpus, Corpus, CorpusSpec};
use patterncraft_eval::experiments::{
    classifier_examples, plan_for, positive_plan, run_classifier_experiment, run_experiments, run_generator_variants,
    ClassifierSettings, ParentCache, FOREST, STRUCTURE_ERROR, TEST_ACCURACY, TRAIN_ACCURACY,
};
use patterncraft_eval::{EvalError, ExperimentConfig, ExperimentReport};

fn small(seed: u64) -> Corpus {
    make_synthetic_corpus(&CorpusSpec::named("small").unwrap(), seed).unwrap()
}

fn quick() -> GeneratorSettings {
    GeneratorSettings { max_epochs: 3, no_labels_max_epochs: 3, transfer_max_epochs: 3, ..GeneratorSettings::default() }
}

#[test]
fn classifier_report_is_consistent() {
    let corpus = small(1);
    let examples = classifier_examples(&corpus, 1).unwrap();
    let plan = plan_for(&examples, corpus.vocabulary.len(), 3, 1).unwrap();
    let settings = ClassifierSettings { forest: ForestConfig { forest_size: 20, ..ForestConfig::default() }, cnn: None };
    let r = run_classifier_experiment(&examples, &corpus.vocabulary, &plan, &settings, 1).unwrap();
    let row = r.row(FOREST).unwrap();
    assert_eq!(row.column(TEST_ACCURACY).unwrap().values.len(), 3);
    for name in [TRAIN_ACCURACY, TEST_ACCURACY] {
        assert!(row.column(name).unwrap().values.iter().all(|a| (0.0..=1.0).contains(a)));
    }
    assert!(r.recompute_error() < 1e-9);
    assert!(r.table_round_trips());
    assert_eq!(ExperimentReport::from_json(&r.to_json()).unwrap(), r);
}

#[test]
fn single_class_is_insufficient() {
    let corpus = small(2);
    let examples: Vec<_> = classifier_examples(&corpus, 2).unwrap().into_iter().filter(|e| e.label == Some(0)).collect();
    let plan = plan_for(&examples, corpus.vocabulary.len(), 3, 2).unwrap();
    let err = run_classifier_experiment(&examples, &corpus.vocabulary, &plan, &ClassifierSettings::default(), 2);
    assert!(matches!(err, Err(EvalError::InsufficientData(_))));
}

#[test]
fn without_hand_labels_full_is_no_labels() {
    let corpus = small(3);
    let (_, plan) = positive_plan(&corpus, 3, 3).unwrap();
    let settings = GeneratorSettings { hand_fraction: 0.0, ..quick() };
    let run = run_generator_variants(
        &corpus,
        &plan,
        &settings,
        &ForestConfig::default(),
        &[Variant::NoLabels, Variant::Full],
        3,
        &mut ParentCache::default(),
    )
    .unwrap();
    let r = run.generator_report().unwrap();
    let full = &r.row("full").unwrap().column(STRUCTURE_ERROR).unwrap().values;
    let none = &r.row("no-labels").unwrap().column(STRUCTURE_ERROR).unwrap().values;
    assert_eq!(full, none);
    assert!(full.iter().all(|e| (0.0..=1920.0).contains(e)));
    assert!(!r.warnings.is_empty());
}

#[test]
fn transfer_report_carries_epoch_ratios() {
    let corpus = small(4);
    let (positives, plan) = positive_plan(&corpus, 3, 4).unwrap();
    let run = run_generator_variants(&corpus, &plan, &quick(), &ForestConfig::default(), &Variant::ALL, 4, &mut ParentCache::default())
        .unwrap();
    let generator = run.generator_report().unwrap();
    let transfer = run.transfer_report().unwrap();
    let names = |r: &ExperimentReport| r.rows.iter().map(|r| r.variant.clone()).collect::<Vec<_>>();
    assert_eq!(names(&generator), ["no-labels", "no-auto-tag", "full"]);
    assert_eq!(names(&transfer), ["no-labels", "transfer-no-auto", "transfer-with-auto", "full"]);
    for row in &transfer.rows {
        assert_eq!(row.column(STRUCTURE_ERROR).unwrap().values.len(), positives.len());
    }
    let ratio = transfer.facts["epoch-ratio/transfer-no-auto"];
    assert!(ratio > 0.0 && ratio.is_finite());
    assert!(generator.comparison("full", "no-auto-tag").is_some());
    assert!(transfer.facts["hand-labels-min"] >= 1.0);
}

#[test]
fn experiment_runs_repeat_exactly() {
    let config = ExperimentConfig {
        corpus: patterncraft_eval::config::CorpusSource::Named("small".into()),
        seed: 6,
        experiments: vec![ExperimentKind::Classifier, ExperimentKind::Generator],
        variants: Variant::GENERATOR.to_vec(),
        generator: quick(),
        ..ExperimentConfig::default()
    };
    let run = || -> Vec<ExperimentReport> {
        run_experiments(&config, None, &mut |_| {}).unwrap().iter().map(ExperimentReport::without_timings).collect()
    };
    let a = run();
    assert_eq!(a.len(), 2);
    assert_eq!(a, run());
    assert_eq!(a[0].experiment, "classifier");
    assert_eq!(a[1].experiment, "generator");
}

#[test]
fn stored_corpora_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small(9);
    assert!(corpus.verify().is_empty());
    corpus.write(dir.path()).unwrap();
    let back = Corpus::read(dir.path()).unwrap();
    assert_eq!(back, corpus);

    let config: ExperimentConfig =
        ExperimentConfig::from_json(r#"{"corpus": {"path": "stored"}, "experiments": ["classifier"], "draws": 3}"#).unwrap();
    let parent = tempfile::tempdir().unwrap();
    corpus.write(&parent.path().join("stored")).unwrap();
    // a stored corpus is the same for every draw, so it runs once
    let reports = run_experiments(&config, Some(parent.path()), &mut |_| {}).unwrap();
    assert_eq!(reports.len(), 1);
}
