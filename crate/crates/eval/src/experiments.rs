//! The three experiments: forest vs CNN classification accuracy, the
//! generator variants, and weight transfer.
//!
//! Generator protocol, per fold over the oracle positives:
//! held-out positives are the test chunks; a stratified `hand_fraction` of
//! the remaining positives are the hand labels; the forest is fit on the
//! hand labels plus sampled negatives and auto-labels every level. No
//! training window of any variant overlaps a test window.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use patterncraft_core::autoencoder::TrainSummary;
use patterncraft_core::forest::{autolabel, ForestConfig, ForestModel};
use patterncraft_core::level::{
    annotations_to_examples, default_negative_count, sample_negatives, sample_negatives_avoiding, Chunk,
    ChunkOrigin, LabelVocabulary, LabeledChunk, Level, Rect, CHUNK_SIZE,
};
use patterncraft_core::Autoencoder;
use patterncraft_core::autoencoder::AeDataset;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cnn::{CnnClassifier, CnnConfig};
use crate::config::{ExperimentConfig, ExperimentKind, GeneratorSettings, Variant};
use crate::corpus::Corpus;
use crate::folds::FoldPlan;
use crate::metrics::structure_error_dense;
use crate::report::{Column, Comparison, ExperimentReport, Row};
use crate::stats::wilcoxon_signed_rank;
use crate::EvalError;

pub const STRUCTURE_ERROR: &str = "structure-error";
pub const FOLD_ERROR: &str = "fold-error";
pub const EPOCHS: &str = "epochs";
pub const SECONDS: &str = "seconds";
pub const TRAIN_ACCURACY: &str = "train-accuracy";
pub const TEST_ACCURACY: &str = "test-accuracy";
pub const FOREST: &str = "random-forest";
pub const CNN: &str = "cnn-baseline";

/// Sub-seed for `(fold, stream)` so that every model in a run has its own
/// reproducible randomness.
pub fn derive_seed(seed: u64, fold: usize, stream: u64) -> u64 {
    let mut z = seed ^ (fold as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const S_FOLDS: u64 = 1;
const S_NEGATIVES: u64 = 2;
const S_FOREST: u64 = 3;
const S_CNN: u64 = 4;
const S_HAND: u64 = 5;

fn variant_stream(v: Variant) -> u64 {
    16 + v as u64
}

fn window_of(example: &LabeledChunk) -> Result<(String, Rect), EvalError> {
    example
        .window()
        .map(|(l, r)| (l.to_string(), r))
        .ok_or_else(|| EvalError::InsufficientData("example chunk has no level origin".into()))
}

fn overlaps(windows: &[(String, Rect)], level: &str, rect: &Rect) -> bool {
    windows.iter().any(|(l, r)| l == level && r.intersects(rect))
}

fn class_of(e: &LabeledChunk, n_labels: usize) -> usize {
    e.class_index(n_labels)
}

// ---------------------------------------------------------------------------
// classifier

/// Oracle positives plus the default number of "none" windows, drawn away
/// from every annotation.
pub fn classifier_examples(corpus: &Corpus, seed: u64) -> Result<Vec<LabeledChunk>, EvalError> {
    let mut examples = corpus.examples()?;
    let count = default_negative_count(&examples, corpus.vocabulary.len());
    let negatives = sample_negatives(&corpus.levels, &corpus.annotations, count, derive_seed(seed, 0, S_NEGATIVES));
    examples.extend(negatives.examples);
    Ok(examples)
}

/// Stratified plan over `examples` by class.
pub fn plan_for(examples: &[LabeledChunk], n_labels: usize, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    let classes: Vec<usize> = examples.iter().map(|e| class_of(e, n_labels)).collect();
    FoldPlan::new(&classes, k, derive_seed(seed, 0, S_FOLDS))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSettings {
    pub forest: ForestConfig,
    /// `None` skips the CNN baseline.
    pub cnn: Option<CnnConfig>,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self { forest: ForestConfig::default(), cnn: Some(CnnConfig::default()) }
    }
}

fn pick(examples: &[LabeledChunk], idx: &[usize]) -> Vec<LabeledChunk> {
    idx.iter().map(|&i| examples[i].clone()).collect()
}

/// Train and test accuracy of the forest and the CNN baseline on every fold.
pub fn run_classifier_experiment(
    examples: &[LabeledChunk],
    vocabulary: &LabelVocabulary,
    plan: &FoldPlan,
    settings: &ClassifierSettings,
    seed: u64,
) -> Result<ExperimentReport, EvalError> {
    let started = Instant::now();
    let n = vocabulary.len();
    let classes: BTreeSet<usize> = examples.iter().map(|e| class_of(e, n)).collect();
    if classes.len() < 2 {
        return Err(EvalError::InsufficientData(format!("{} class(es); at least 2 needed", classes.len())));
    }
    if plan.folds.iter().map(|f| f.train.len() + f.test.len()).any(|len| len != examples.len()) {
        return Err(EvalError::InsufficientData("fold plan does not cover the examples".into()));
    }
    let mut warnings = Vec::new();
    if !plan.stratified {
        warnings.push("some class has fewer members than folds; folds are not stratified".into());
    }
    let mut rf = [vec![], vec![], vec![]];
    let mut cnn = [vec![], vec![], vec![], vec![]];
    for (f, fold) in plan.folds.iter().enumerate() {
        let (train, test) = (pick(examples, &fold.train), pick(examples, &fold.test));
        let t = Instant::now();
        let model = ForestModel::fit(&train, vocabulary, settings.forest, derive_seed(seed, f, S_FOREST))?;
        rf[0].push(model.accuracy(&train));
        rf[1].push(model.accuracy(&test));
        rf[2].push(t.elapsed().as_secs_f64());
        if let Some(cfg) = &settings.cnn {
            let t = Instant::now();
            let mut net = CnnClassifier::<f32>::new(cfg.clone(), n, derive_seed(seed, f, S_CNN))?;
            let epochs = net.fit(&train, derive_seed(seed, f, S_CNN + 100))?;
            cnn[0].push(net.accuracy(&train)?);
            cnn[1].push(net.accuracy(&test)?);
            cnn[2].push(t.elapsed().as_secs_f64());
            cnn[3].push(epochs as f64);
        }
    }
    let [rf_train, rf_test, rf_secs] = rf;
    let mut rows = vec![Row {
        variant: FOREST.into(),
        columns: vec![Column::new(TRAIN_ACCURACY, rf_train), Column::new(TEST_ACCURACY, rf_test), Column::new(SECONDS, rf_secs)],
    }];
    if settings.cnn.is_some() {
        let [train, test, secs, epochs] = cnn;
        rows.push(Row {
            variant: CNN.into(),
            columns: vec![
                Column::new(TRAIN_ACCURACY, train),
                Column::new(TEST_ACCURACY, test),
                Column::new(SECONDS, secs),
                Column::new(EPOCHS, epochs),
            ],
        });
    }
    let mut facts = BTreeMap::new();
    facts.insert("examples".into(), examples.len() as f64);
    facts.insert("classes".into(), classes.len() as f64);
    Ok(ExperimentReport {
        experiment: "classifier".into(),
        seed,
        folds: plan.k,
        stratified: plan.stratified,
        rows,
        comparisons: Vec::new(),
        facts,
        warnings,
        seconds: started.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// generator variants

/// What one fold fed the variants.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldData {
    pub hand: Vec<LabeledChunk>,
    pub auto: Vec<LabeledChunk>,
    pub windows: Vec<LabeledChunk>,
    /// Share of auto examples whose window meets an oracle instance of the
    /// same label.
    pub auto_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VariantResult {
    /// Indexed like the corpus positives; each is filled by its test fold.
    pub errors: Vec<f64>,
    pub fold_errors: Vec<f64>,
    pub epochs: Vec<f64>,
    pub seconds: Vec<f64>,
    pub final_loss: Vec<f64>,
}

/// Everything a generator or transfer report is assembled from.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub seed: u64,
    pub plan: FoldPlan,
    pub results: BTreeMap<Variant, VariantResult>,
    pub folds: Vec<FoldData>,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

/// Trained label-free models per fold, reusable across runs that share the
/// corpus, plan, seed and window settings.
#[derive(Debug, Default)]
pub struct ParentCache {
    key: Option<String>,
    models: BTreeMap<usize, (Autoencoder, TrainSummary, f64)>,
}

fn cache_key(corpus: &Corpus, plan: &FoldPlan, settings: &GeneratorSettings, seed: u64) -> String {
    let levels: Vec<String> = corpus.levels.iter().map(|l| l.grid.content_hash()).collect();
    format!(
        "{}|{:?}|{seed}|{}|{}|{}|{}|{}|{}",
        levels.join(","),
        plan.folds,
        settings.window_stride,
        settings.no_labels_max_epochs,
        settings.rel_tol,
        settings.patience,
        settings.batch_size,
        settings.lr
    )
}

/// Positives of the corpus with a plan stratified by label.
pub fn positive_plan(corpus: &Corpus, k: usize, seed: u64) -> Result<(Vec<LabeledChunk>, FoldPlan), EvalError> {
    let positives = corpus.examples()?;
    if corpus.vocabulary.len() < 2 {
        return Err(EvalError::InsufficientData("generator experiments need at least 2 labels".into()));
    }
    let plan = plan_for(&positives, corpus.vocabulary.len(), k, seed)?;
    Ok((positives, plan))
}

/// Stratified sample of `pool` (indices into `examples`): `fraction` of
/// each label rounded, at least one per label when the fraction is positive.
fn sample_hand(examples: &[LabeledChunk], pool: &[usize], fraction: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if fraction <= 0.0 {
        return Vec::new();
    }
    let mut by_label: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for &i in pool {
        by_label.entry(examples[i].label).or_default().push(i);
    }
    let mut out = Vec::new();
    for (_, mut group) in by_label {
        group.shuffle(rng);
        let take = ((fraction * group.len() as f64).round() as usize).clamp(1, group.len());
        out.extend_from_slice(&group[..take]);
    }
    out.sort_unstable();
    out
}

/// Column-stride windows along the top and bottom of every level that miss
/// all of `avoid`.
fn label_free_windows(levels: &[Level], stride: usize, avoid: &[(String, Rect)]) -> Result<Vec<LabeledChunk>, EvalError> {
    let mut out = Vec::new();
    for level in levels {
        let (w, h) = (level.grid.width(), level.grid.height());
        if w < CHUNK_SIZE || h < CHUNK_SIZE {
            continue;
        }
        let mut xs: Vec<usize> = (0..=w - CHUNK_SIZE).step_by(stride).collect();
        if xs.last() != Some(&(w - CHUNK_SIZE)) {
            xs.push(w - CHUNK_SIZE);
        }
        let mut ys = vec![0, h - CHUNK_SIZE];
        ys.dedup();
        for &y in &ys {
            for &x in &xs {
                if !overlaps(avoid, &level.id, &Rect::window(x, y)) {
                    out.push(LabeledChunk::new(Chunk::encode_from(level, x, y)?, None));
                }
            }
        }
    }
    Ok(out)
}

fn train_model(
    mut model: Autoencoder,
    data: &[LabeledChunk],
) -> Result<(Autoencoder, TrainSummary), EvalError> {
    if data.is_empty() {
        return Err(EvalError::InsufficientData("variant has no training chunks".into()));
    }
    let summary = model.train(&AeDataset::from_chunks(data))?;
    Ok((model, summary))
}

/// Per-chunk structure error of `model` on `test`, conditioned on the true
/// label when the model has labels.
fn evaluate(model: &Autoencoder, test: &[LabeledChunk]) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::with_capacity(test.len());
    for part in test.chunks(128) {
        let data = AeDataset::<f32>::from_chunks(part);
        let labels = if model.n_labels() == 0 { vec![None; part.len()] } else { data.labels.clone() };
        let (y, _) = model.infer_batch(&data.inputs, &labels)?;
        for i in 0..part.len() {
            out.push(structure_error_dense(y.item(i), data.inputs.item(i))? as f64);
        }
    }
    Ok(out)
}

fn fold_data(
    corpus: &Corpus,
    positives: &[LabeledChunk],
    fold: &crate::folds::Fold,
    settings: &GeneratorSettings,
    forest: &ForestConfig,
    need_auto: bool,
    seed: u64,
    f: usize,
) -> Result<(FoldData, Vec<(String, Rect)>), EvalError> {
    let test_windows: Vec<(String, Rect)> = fold.test.iter().map(|&i| window_of(&positives[i])).collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, f, S_HAND));
    let hand_idx = sample_hand(positives, &fold.train, settings.hand_fraction, &mut rng);
    let hand = pick(positives, &hand_idx);
    let windows = label_free_windows(&corpus.levels, settings.window_stride, &test_windows)?;

    let (mut auto, mut auto_precision) = (Vec::new(), f64::NAN);
    if need_auto && !hand.is_empty() {
        let mut avoid: Vec<(String, Rect)> = corpus.annotations.iter().map(|a| (a.level.clone(), a.rect())).collect();
        avoid.extend(test_windows.iter().cloned());
        let count = (settings.negatives_per_hand * hand.len() as f64).ceil() as usize;
        let negatives = sample_negatives_avoiding(&corpus.levels, &avoid, count, derive_seed(seed, f, S_NEGATIVES));
        let mut train = hand.clone();
        train.extend(negatives.examples);
        let model = ForestModel::fit(&train, &corpus.vocabulary, *forest, derive_seed(seed, f, S_FOREST))?;
        let annotations = autolabel(&model, &corpus.levels, settings.autolabel_stride);
        let mut seen: BTreeSet<(String, usize, usize)> =
            hand.iter().filter_map(|e| e.chunk.origin.as_ref().map(|o| (o.level.clone(), o.x, o.y))).collect();
        for e in annotations_to_examples(&annotations, &corpus.levels, &corpus.vocabulary)? {
            let ChunkOrigin { level, x, y } = e.chunk.origin.clone().expect("examples carry origins");
            if overlaps(&test_windows, &level, &Rect::window(x, y)) || !seen.insert((level, x, y)) {
                continue;
            }
            auto.push(e);
        }
        let hits = auto
            .iter()
            .filter(|e| {
                let (level, rect) = e.window().expect("origin set");
                let name = e.label.and_then(|l| corpus.vocabulary.name(l));
                corpus.annotations.iter().any(|a| a.level == level && Some(a.label.as_str()) == name && a.rect().intersects(&rect))
            })
            .count();
        auto_precision = if auto.is_empty() { 0.0 } else { hits as f64 / auto.len() as f64 };
    }
    Ok((FoldData { hand, auto, windows, auto_precision }, test_windows))
}

/// Train and evaluate `variants` on every fold. The label-free model is
/// trained whenever a transfer variant needs it as parent.
pub fn run_generator_variants(
    corpus: &Corpus,
    plan: &FoldPlan,
    settings: &GeneratorSettings,
    forest: &ForestConfig,
    variants: &[Variant],
    seed: u64,
    cache: &mut ParentCache,
) -> Result<VariantRun, EvalError> {
    settings.validate()?;
    let started = Instant::now();
    let positives = corpus.examples()?;
    if plan.folds.iter().map(|f| f.train.len() + f.test.len()).any(|len| len != positives.len()) {
        return Err(EvalError::InsufficientData("fold plan does not cover the positives".into()));
    }
    let key = cache_key(corpus, plan, settings, seed);
    if cache.key.as_deref() != Some(key.as_str()) {
        *cache = ParentCache { key: Some(key), models: BTreeMap::new() };
    }
    let n = corpus.vocabulary.len();
    let wanted: BTreeSet<Variant> = variants.iter().copied().collect();
    let need_parent = wanted.iter().any(|v| v.is_transfer() || *v == Variant::NoLabels);
    let need_auto = wanted.contains(&Variant::Full) || wanted.contains(&Variant::TransferWithAuto);
    let mut results: BTreeMap<Variant, VariantResult> = wanted
        .iter()
        .map(|v| (*v, VariantResult { errors: vec![f64::NAN; positives.len()], ..Default::default() }))
        .collect();
    let mut folds = Vec::new();
    let mut warnings = Vec::new();

    for (f, fold) in plan.folds.iter().enumerate() {
        let (data, _) = fold_data(corpus, &positives, fold, settings, forest, need_auto, seed, f)?;
        let test = pick(&positives, &fold.test);
        let no_labels_cfg = |s: &GeneratorSettings| s.ae_config(0, derive_seed(seed, f, variant_stream(Variant::NoLabels)), s.no_labels_max_epochs);

        let mut record = |v: Variant, model: &Autoencoder, summary: &TrainSummary, seconds: f64| -> Result<(), EvalError> {
            let Some(r) = results.get_mut(&v) else { return Ok(()) };
            let errors = evaluate(model, &test)?;
            for (&i, e) in fold.test.iter().zip(&errors) {
                r.errors[i] = *e;
            }
            r.fold_errors.push(errors.iter().sum::<f64>() / errors.len().max(1) as f64);
            r.epochs.push(summary.epochs as f64);
            r.seconds.push(seconds);
            r.final_loss.push(summary.final_loss);
            Ok(())
        };

        if need_parent && !cache.models.contains_key(&f) {
            let t = Instant::now();
            let (model, summary) = train_model(Autoencoder::build(no_labels_cfg(settings), None)?, &data.windows)?;
            cache.models.insert(f, (model, summary, t.elapsed().as_secs_f64()));
        }
        if let Some((parent, summary, secs)) = cache.models.get(&f) {
            record(Variant::NoLabels, parent, summary, *secs)?;
        }

        for v in [Variant::NoAutoTag, Variant::Full, Variant::TransferNoAuto, Variant::TransferWithAuto] {
            if !wanted.contains(&v) {
                continue;
            }
            let t = Instant::now();
            let mut train: Vec<LabeledChunk> = data.hand.clone();
            if matches!(v, Variant::Full | Variant::TransferWithAuto) {
                train.extend(data.auto.iter().cloned());
            }
            let variant_seed = derive_seed(seed, f, variant_stream(v));
            let (model, summary) = if data.hand.is_empty() {
                // Without hand labels nothing can be conditioned on: every
                // labelled variant reduces to the label-free one.
                if f == 0 {
                    warnings.push(format!("no hand labels; {} trains like no-labels", v.name()));
                }
                train_model(Autoencoder::build(no_labels_cfg(settings), None)?, &data.windows)?
            } else if v.is_transfer() {
                let (parent, _, _) = cache.models.get(&f).expect("parent trained above");
                let cfg = settings.ae_config(n, variant_seed, settings.transfer_max_epochs);
                train_model(Autoencoder::transfer(parent, cfg, Some(&corpus.vocabulary))?, &train)?
            } else {
                let cfg = settings.ae_config(n, variant_seed, settings.max_epochs);
                train_model(Autoencoder::build(cfg, Some(&corpus.vocabulary))?, &train)?
            };
            record(v, &model, &summary, t.elapsed().as_secs_f64())?;
        }
        folds.push(data);
    }
    Ok(VariantRun { seed, plan: plan.clone(), results, folds, warnings, seconds: started.elapsed().as_secs_f64() })
}

impl VariantRun {
    fn report(&self, experiment: &str, order: &[Variant], pairs: &[(Variant, Variant)]) -> Result<ExperimentReport, EvalError> {
        let mut rows = Vec::new();
        for v in order {
            let Some(r) = self.results.get(v) else { continue };
            rows.push(Row {
                variant: v.name().into(),
                columns: vec![
                    Column::new(STRUCTURE_ERROR, r.errors.clone()),
                    Column::new(FOLD_ERROR, r.fold_errors.clone()),
                    Column::new(EPOCHS, r.epochs.clone()),
                    Column::new(SECONDS, r.seconds.clone()),
                ],
            });
        }
        let mut comparisons = Vec::new();
        for (a, b) in pairs {
            if let (Some(ra), Some(rb)) = (self.results.get(a), self.results.get(b)) {
                comparisons.push(Comparison {
                    a: a.name().into(),
                    b: b.name().into(),
                    column: STRUCTURE_ERROR.into(),
                    test: "wilcoxon-signed-rank".into(),
                    result: wilcoxon_signed_rank(&ra.errors, &rb.errors)?,
                });
            }
        }
        let mut facts = BTreeMap::new();
        let stat = |xs: Vec<f64>| -> (f64, f64) {
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            (min, xs.iter().sum::<f64>() / xs.len().max(1) as f64)
        };
        let (hand_min, hand_mean) = stat(self.folds.iter().map(|d| d.hand.len() as f64).collect());
        facts.insert("hand-labels-min".into(), hand_min);
        facts.insert("hand-labels-mean".into(), hand_mean);
        facts.insert("auto-examples-mean".into(), stat(self.folds.iter().map(|d| d.auto.len() as f64).collect()).1);
        let precisions: Vec<f64> = self.folds.iter().map(|d| d.auto_precision).filter(|p| !p.is_nan()).collect();
        if !precisions.is_empty() {
            facts.insert("auto-precision-mean".into(), stat(precisions).1);
        }
        facts.insert("label-free-windows-mean".into(), stat(self.folds.iter().map(|d| d.windows.len() as f64).collect()).1);
        if let Some(full) = self.results.get(&Variant::Full) {
            let full_epochs = full.epochs.iter().sum::<f64>();
            for v in [Variant::TransferNoAuto, Variant::TransferWithAuto] {
                if let Some(r) = self.results.get(&v).filter(|_| order.contains(&v)) {
                    facts.insert(format!("epoch-ratio/{}", v.name()), r.epochs.iter().sum::<f64>() / full_epochs);
                }
            }
        }
        Ok(ExperimentReport {
            experiment: experiment.into(),
            seed: self.seed,
            folds: self.plan.k,
            stratified: self.plan.stratified,
            rows,
            comparisons,
            facts,
            warnings: self.warnings.clone(),
            seconds: self.seconds,
        })
    }

    /// Rows no-labels, no-auto-tag, full; full compared with the others.
    pub fn generator_report(&self) -> Result<ExperimentReport, EvalError> {
        self.report(
            "generator",
            &Variant::GENERATOR,
            &[(Variant::Full, Variant::NoAutoTag), (Variant::Full, Variant::NoLabels)],
        )
    }

    /// Rows no-labels, transfer-no-auto, transfer-with-auto, full, with the
    /// transfer/from-scratch epoch ratios among the facts.
    pub fn transfer_report(&self) -> Result<ExperimentReport, EvalError> {
        self.report(
            "transfer",
            &Variant::TRANSFER,
            &[
                (Variant::TransferWithAuto, Variant::TransferNoAuto),
                (Variant::Full, Variant::TransferWithAuto),
                (Variant::TransferWithAuto, Variant::NoLabels),
            ],
        )
    }
}

pub fn run_generator_experiment(
    corpus: &Corpus,
    plan: &FoldPlan,
    settings: &GeneratorSettings,
    forest: &ForestConfig,
    seed: u64,
) -> Result<ExperimentReport, EvalError> {
    run_generator_variants(corpus, plan, settings, forest, &Variant::GENERATOR, seed, &mut ParentCache::default())?
        .generator_report()
}

pub fn run_transfer_experiment(
    corpus: &Corpus,
    plan: &FoldPlan,
    settings: &GeneratorSettings,
    forest: &ForestConfig,
    seed: u64,
) -> Result<ExperimentReport, EvalError> {
    run_generator_variants(corpus, plan, settings, forest, &Variant::TRANSFER, seed, &mut ParentCache::default())?
        .transfer_report()
}

/// Run everything `config` asks for over each corpus draw. Reports come
/// back in draw order, classifier before generator before transfer.
pub fn run_experiments(
    config: &ExperimentConfig,
    base_dir: Option<&Path>,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<ExperimentReport>, EvalError> {
    config.validate()?;
    let mut reports = Vec::new();
    let draws = if config.corpus.is_synthetic() { config.draws } else { 1 };
    for draw in 0..draws {
        let seed = config.seed + draw as u64;
        let corpus = config.corpus.load(seed, base_dir)?;
        if config.experiments.contains(&ExperimentKind::Classifier) {
            progress(&format!("draw {draw}: classifier"));
            let examples = classifier_examples(&corpus, seed)?;
            let plan = plan_for(&examples, corpus.vocabulary.len(), config.folds, seed)?;
            let settings = ClassifierSettings { forest: config.forest, cnn: Some(config.cnn.clone()) };
            reports.push(run_classifier_experiment(&examples, &corpus.vocabulary, &plan, &settings, seed)?);
        }
        let generator = config.experiments.contains(&ExperimentKind::Generator);
        let transfer = config.experiments.contains(&ExperimentKind::Transfer);
        if generator || transfer {
            let mut variants = Vec::new();
            if generator {
                variants.extend(config.variants_among(&Variant::GENERATOR));
            }
            if transfer {
                variants.extend(config.variants_among(&Variant::TRANSFER));
            }
            progress(&format!("draw {draw}: generator variants {variants:?}"));
            let (_, plan) = positive_plan(&corpus, config.folds, seed)?;
            let run = run_generator_variants(
                &corpus,
                &plan,
                &config.generator,
                &config.forest,
                &variants,
                seed,
                &mut ParentCache::default(),
            )?;
            if generator {
                reports.push(run.generator_report()?);
            }
            if transfer {
                reports.push(run.transfer_report()?);
            }
        }
    }
    Ok(reports)
}
