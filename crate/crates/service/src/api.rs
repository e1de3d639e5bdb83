use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use patterncraft_core::forest::{autolabel_detailed, ForestModel};
use patterncraft_core::level::{annotations_to_examples, Chunk, LabelVocabulary, LevelGrid, PatternAnnotation, Rect};
use patterncraft_core::Autoencoder;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{ApiError, ApiResult};
use crate::jobs::{self, Commit, JobKind, ProgressSink};
use crate::pipeline::{ae_config, classifier_examples, parent_windows};
use crate::session::{
    valid_id, ClassifierMeta, ClassifierModel, GeneratorMeta, GeneratorMode, GeneratorModel, Origin, Session,
    StoredAnnotation, WindowRef,
};
use crate::AppState;

type JsonResponse = ApiResult<(StatusCode, Json<Value>)>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{sid}", get(get_session))
        .route("/sessions/{sid}/levels", post(post_level).get(list_levels))
        .route("/sessions/{sid}/levels/{lid}", get(get_level))
        .route("/sessions/{sid}/vocabulary", get(get_vocabulary).put(put_vocabulary))
        .route("/sessions/{sid}/annotations", get(get_annotations).post(post_annotations))
        .route("/sessions/{sid}/classifier/train", post(train_classifier))
        .route("/sessions/{sid}/classifier/feedback", post(feedback))
        .route("/sessions/{sid}/classifier/predict", post(predict))
        .route("/sessions/{sid}/autolabel", post(autolabel))
        .route("/sessions/{sid}/generator/train", post(train_generator))
        .route("/sessions/{sid}/generate", post(generate))
        .route("/sessions/{sid}/jobs", get(list_jobs))
        .route("/sessions/{sid}/jobs/{jid}", get(get_job))
        .route("/sessions/{sid}/metrics", get(metrics))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint") })
        .with_state(state)
}

/// Bodies are parsed by hand so malformed JSON gets the common error shape.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    serde_json::from_slice(text).map_err(|e| ApiError::bad_request("InvalidRequest", e.to_string()))
}

fn ok(value: Value) -> JsonResponse {
    Ok((StatusCode::OK, Json(value)))
}

fn accepted(job: jobs::Job) -> JsonResponse {
    Ok((StatusCode::ACCEPTED, Json(serde_json::to_value(job)?)))
}

fn vocabulary_json(v: &LabelVocabulary) -> Value {
    json!({ "labels": v.names(), "hash": v.hash() })
}

/// The model's vocabulary must be the session's current one.
fn guard_vocabulary(model: &LabelVocabulary, session: &LabelVocabulary) -> ApiResult<()> {
    if model.hash() != session.hash() {
        return Err(ApiError::precondition(
            "VocabularyMismatch",
            "the model was trained under a different vocabulary; retrain it",
        )
        .with_detail(json!({ "model": model.hash(), "session": session.hash() })));
    }
    Ok(())
}

fn require_classifier(s: &Session) -> ApiResult<Arc<ClassifierModel>> {
    let c = s
        .classifier
        .clone()
        .ok_or_else(|| ApiError::precondition("MissingModel", "train the classifier first"))?;
    guard_vocabulary(&c.forest.vocabulary, &s.vocabulary)?;
    Ok(c)
}

fn window_chunk(s: &Session, level: &str, x: usize, y: usize) -> ApiResult<Chunk> {
    Ok(Chunk::encode_from(s.level(level)?, x, y)?)
}

fn label_index(vocabulary: &LabelVocabulary, label: &str) -> ApiResult<Option<usize>> {
    if label == patterncraft_core::level::NONE_LABEL {
        return Ok(None);
    }
    vocabulary
        .index_of(label)
        .map(Some)
        .ok_or_else(|| ApiError::bad_request("UnknownLabel", format!("unknown label {label:?}")))
}

// ---- sessions, levels, vocabulary, annotations ----

async fn create_session(State(app): State<AppState>) -> JsonResponse {
    let id = app.create_session()?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn get_session(State(app): State<AppState>, Path(sid): Path<String>) -> JsonResponse {
    let handle = app.session(&sid)?;
    let s = handle.lock();
    ok(json!({
        "id": s.id,
        "levels": s.levels.keys().collect::<Vec<_>>(),
        "vocabulary": vocabulary_json(&s.vocabulary),
        "annotations": s.annotations.len(),
        "jobs": s.jobs.values().collect::<Vec<_>>(),
    }))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Tiles {
    Text(String),
    Rows(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelUpload {
    /// Replaces the level with this id when given; defaults to an id
    /// derived from the content.
    id: Option<String>,
    tiles: Tiles,
}

async fn post_level(State(app): State<AppState>, Path(sid): Path<String>, bytes: Bytes) -> JsonResponse {
    let req: LevelUpload = body(&bytes)?;
    let text = match req.tiles {
        Tiles::Text(t) => t,
        Tiles::Rows(rows) => rows.join("\n"),
    };
    let grid = LevelGrid::parse(&text)?;
    let hash = grid.content_hash();
    let id = req.id.unwrap_or_else(|| format!("lvl-{}", &hash[..12]));
    if !valid_id(&id) {
        return Err(ApiError::bad_request("InvalidId", format!("level id {id:?} must be 1-64 of [A-Za-z0-9_-]")));
    }
    let handle = app.session(&sid)?;
    let mut s = handle.lock();
    let deduplicated = s.levels.get(&id).is_some_and(|l| l.grid == grid);
    if !deduplicated {
        let (w, h) = (grid.width(), grid.height());
        let fits = |r: Rect| r.x + r.w <= w && r.y + r.h <= h;
        let clash: Vec<&str> = s
            .annotations
            .iter()
            .filter(|a| a.annotation.level == id && !fits(a.annotation.rect()))
            .map(|a| a.id.as_str())
            .collect();
        if !clash.is_empty() || s.negatives.iter().any(|n| n.level == id && !fits(n.rect())) {
            return Err(ApiError::conflict("LevelConflict", "the new level is too small for existing annotations")
                .with_detail(json!({ "annotations": clash })));
        }
        s.levels.insert(id.clone(), patterncraft_core::level::Level::new(id.clone(), grid.clone()));
        s.save_level(&id)?;
    }
    ok(json!({
        "id": id,
        "content_hash": hash,
        "width": grid.width(),
        "height": grid.height(),
        "deduplicated": deduplicated,
    }))
}

async fn list_levels(State(app): State<AppState>, Path(sid): Path<String>) -> JsonResponse {
    let handle = app.session(&sid)?;
    let s = handle.lock();
    let levels: Vec<Value> = s
        .levels
        .values()
        .map(|l| json!({ "id": l.id, "content_hash": l.grid.content_hash(), "width": l.grid.width(), "height": l.grid.height() }))
        .collect();
    ok(json!({ "levels": levels }))
}

async fn get_level(State(app): State<AppState>, Path((sid, lid)): Path<(String, String)>) -> JsonResponse {
    let handle = app.session(&sid)?;
    let s = handle.lock();
    let l = s.levels.get(&lid).ok_or_else(|| ApiError::not_found("level", &lid))?;
    ok(json!({ "id": l.id, "content_hash": l.grid.content_hash(), "tiles": l.grid.rows() }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabularyUpload {
    labels: Vec<String>,
}

async fn get_vocabulary(State(app): State<AppState>, Path(sid): Path<String>) -> JsonResponse {
    let handle = app.session(&sid)?;
    let s = handle.lock();
    ok(vocabulary_json(&s.vocabulary))
}

async fn put_vocabulary(State(app): State<AppState>, Path(sid): Path<String>, bytes: Bytes) -> JsonResponse {
    let req: VocabularyUpload = body(&bytes)?;
    let vocabulary = LabelVocabulary::new(req.labels)?;
    let handle = app.session(&sid)?;
    let mut s = handle.lock();
    let removed: Vec<String> =
        s.labels_in_use().into_iter().filter(|l| vocabulary.index_of(l).is_none()).collect();
    if !removed.is_empty() {
        return Err(ApiError::conflict("VocabularyConflict", "labels still in use cannot be removed")
            .with_detail(json!({ "labels": removed })));
    }
    s.vocabulary = vocabulary;
    s.save_vocabulary()?;
    ok(vocabulary_json(&s.vocabulary))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnnotationUpload {
    Many { annotations: Vec<PatternAnnotation> },
    One(PatternAnnotation),
}

async fn get_annotations(State(app): State<AppState>, Path(sid): Path<String>) -> JsonResponse {
    let handle = app.session(&sid)?;
    let s = handle.lock();
    ok(json!({ "annotations": s.annotations }))
}

async fn post_annotations(State(app): State<AppState>, Path(sid): Path<String>, bytes: Bytes) -> JsonResponse {
    let list = match body::<AnnotationUpload>(&bytes)? {
        AnnotationUpload::Many { annotations } => annotations,
        AnnotationUpload::One(a) => vec![a],
    };
    let handle = app.session(&sid)?;
    let mut s = handle.lock();
    // Validate everything before storing anything.
    for a in &list {
        a.validate(s.level(&a.level)?, &s.vocabulary)?;
    }
    let stored: Vec<StoredAnnotation> = list.into_iter().map(|a| s.add_hand_annotation(a)).collect();
    s.commit_counters()?;
    s.save_annotations()?;
    ok(json!({ "annotations": stored }))
}

// ---- classifier ----

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct SeedRequest {
    seed: u64,
}

async fn train_classifier(State(app): State<AppState>, Path(sid): Path<String>, bytes: Bytes) -> JsonResponse {
    let req: SeedRequest = body(&bytes)?;
    let forest_config = app.config().training.forest;
    let handle = app.session(&sid)?;
    let mut s = handle.lock();
    if let Some(active) = s.active_job() {
        return Err(ApiError::conflict("JobConflict", format!("job {} is still running", active.id)));
    }
    let levels = s.level_list();
    let examples =
        classifier_examples(&levels, &s.vocabulary, &s.hand_annotations(), &s.all_annotations(), &s.negatives, req.seed)?;
    let n = s.vocabulary.len();
    let mut classes: Vec<usize> = examples.iter().map(|e| e.class_index(n)).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ApiError::precondition(
            "InsufficientData",
            "training needs at least two classes; annotate patterns on the uploaded levels",
        )
        .with_detail(json!({ "examples": examples.len() })));
    }
    let vocabulary = s.vocabulary.clone();
    let job = jobs::start(&mut s, &handle, app.permits(), JobKind::Classifier, move |progress: &ProgressSink| {
        progress.update(|p| p.stage = Some("fit".into()));
        let forest = ForestModel::fit(&examples, &vocabulary, forest_config, req.seed)?;
        let train_accuracy = forest.accuracy(&examples);
        progress.update(|p| p.trees = forest.trees().len());
        let meta = ClassifierMeta {
            seed: req.seed,
            examples: examples.len(),
            train_accuracy,
            vocabulary_hash: vocabulary.hash(),
            updates: 0,
        };
        let commit: Commit = Box::new(move |s: &mut Session| {
            let result = json!({ "trees": forest.trees().len(), "examples": meta.examples, "train_accuracy": train_accuracy });
            s.set_classifier(ClassifierModel { forest, meta })?;
            Ok(result)
        });
        Ok(commit)
    })?;
    accepted(job)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    level: String,
    x: usize,
    y: usize,
    /// A vocabulary label, or "none".
    label: String,
}

async fn feedback(State(app): State<AppState>, Path(sid): Path<String>, bytes: Bytes) -> JsonResponse {
    let req: FeedbackRequest = body(&bytes)?;
    let handle = app.session(&sid)?;
    let mut s = handle.lock();
    let classifier = require_classifier(&s)?;
    let label = label_index(&s.vocabulary, &req.label)?;
    let chunk = window_chunk(&s, &req.level, req.x, req.y)?;
    let levels = s.level_list();
    let all = classifier_examples(
        &levels,
        &s.vocabulary,
        &s.hand_annotations(),
        &s.all_annotations(),
        &s.negatives,
        classifier.meta.seed,
    )?;
    let example = patterncraft_core::level::LabeledChunk::new(chunk, label);
    let job = jobs::start(&mut s, &handle, app.permits(), JobKind::Feedback, move |progress: &ProgressSink| {
        let outcome = classifier.forest.incremental_update(std::slice::from_ref(&example), &all)?;
        let unchanged = outcome.unchanged();
        progress.update(|p| p.trees = outcome.replaced.len());
        let commit: Commit = Box::new(move |s: &mut Session| {
            let predicted = outcome.model.predict(&example.chunk).label;
            let replaced = outcome.replaced.clone();
            if !unchanged {
                let meta = ClassifierMeta { updates: classifier.meta.updates + 1, ..classifier.meta.clone() };
                s.set_classifier(ClassifierModel { forest: outcome.model, meta })?;
            }
            let window = WindowRef { level: req.level.clone(), x: req.x, y: req.y };
            let annotation = record_feedback(s, window, label.map(|_| req.label.clone()))?;
            Ok(json!({
                "unchanged": unchanged,
                "replaced": replaced,
                "predicted": predicted.and_then(|i| s.vocabulary.name(i)).unwrap_or(patterncraft_core::level::NONE_LABEL),
                "annotation": annotation,
            }))
        });
        Ok(commit)
    })?;
    accepted(job)
}

/// Store a correction: a hand annotation on the window, or a designer
/// negative for "none". Auto annotations it contradicts are dropped.
fn record_feedback(s: &mut Session, window: WindowRef, label: Option<String>) -> ApiResult<Option<String>> {
    let rect = window.rect();
    let on_window = |a: &StoredAnnotation| a.annotation.level == window.level && a.annotation.rect().intersects(&rect);
    s.annotations.retain(|a| {
        !(a.origin == Origin::Auto && on_window(a) && label.as_deref() != Some(a.annotation.label.as_str()))
    });
    let id = match label {
        Some(label) => {
            s.negatives.retain(|n| n != &window);
            let stored = s.add_hand_annotation(PatternAnnotation::new(window.level.clone(), rect, label));
            Some(stored.id)
        }
        None => {
            if !s.negatives.contains(&window) {
                s.negatives.push(window);
            }
            None
        }
    };
    s.commit_counters()?;
    s.save_annotations()?;
    s.save_negatives()?;
    Ok(id)
}

#[derive(Deserialize, Serialize)]
struct Position {
    x: usize,
    y: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictRequest {
    level: String,
    windows: Vec<Position>,
}

async fn predict(State(app): State<AppState>, Path(sid): Path<String>, bytes: Bytes) -> JsonResponse {
    let req: PredictRequest = body(&bytes)?;
    let handle = app.session(&sid)?;
    let (classifier, chunks) = {
        let s = handle.lock();
        let c = require_classifier(&s)?;
        let chunks = req.windows.iter().map(|p| window_chunk(&s, &req.level, p.x, p.y)).collect::<ApiResult<Vec<_>>>()?;
        (c, chunks)
    };
    let forest = &classifier.forest;
    let predictions: Vec<Value> = req
        .windows
        .iter()
        .zip(forest.predict_many(&chunks.iter().collect::<Vec<_>>()))
        .map(|(p, pred)| {
            json!({
                "x": p.x,
                "y": p.y,
                "label": pred.label.and_then(|i| forest.vocabulary.name(i)).unwrap_or(patterncraft_core::level::NONE_LABEL),
                "confidence": pred.confidence(),
                "votes": pred.votes,
            })
        })
        .collect();
    ok(json!({ "predictions": predictions }))
}

// ---- autolabel ----

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct AutolabelRequest {
    stride: Option<usize>,
}

async fn autolabel(State(app): State<AppState>, Path(sid): Path<String>, bytes: Bytes) -> JsonResponse {
    let req: AutolabelRequest = body(&bytes)?;
    let stride = req.stride.unwrap_or(app.config().training.autolabel_stride);
    if stride == 0 {
        return Err(ApiError::bad_request("InvalidRequest", "stride must be positive"));
    }
    let handle = app.session(&sid)?;
    let mut s = handle.lock();
    let classifier = require_classifier(&s)?;
    let levels = s.level_list();
    let job = jobs::start(&mut s, &handle, app.permits(), JobKind::Autolabel, move |_: &ProgressSink| {
        let found = autolabel_detailed(&classifier.forest, &levels, stride);
        let commit: Commit = Box::new(move |s: &mut Session| {
            let before = s.annotations.len();
            s.annotations.retain(|a| a.origin == Origin::Hand);
            let removed = before - s.annotations.len();
            let mut added = 0;
            for auto in found {
                if s.annotations.iter().any(|a| a.annotation == auto.annotation) {
                    continue;
                }
                let id = s.next_annotation_id();
                s.annotations.push(StoredAnnotation {
                    id,
                    annotation: auto.annotation,
                    origin: Origin::Auto,
                    confidence: Some(auto.confidence),
                });
                added += 1;
            }
            s.commit_counters()?;
            s.save_annotations()?;
            Ok(json!({ "added": added, "replaced": removed, "stride": stride }))
        });
        Ok(commit)
    })?;
    accepted(job)
}

// ---- generator ----

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct GeneratorRequest {
    seed: u64,
    max_epochs: Option<usize>,
    parent_max_epochs: Option<usize>,
}

fn train_model(
    model: &mut Autoencoder,
    examples: &[patterncraft_core::level::LabeledChunk],
    stage: &str,
    progress: &ProgressSink,
) -> ApiResult<patterncraft_core::autoencoder::TrainSummary> {
    let max = model.config().convergence.max_epochs;
    progress.update(|p| {
        p.stage = Some(stage.into());
        p.epoch = 0;
        p.max_epochs = max;
        p.loss = None;
    });
    let data = patterncraft_core::autoencoder::AeDataset::from_chunks(examples);
    let mut epochs = 0;
    Ok(model.train_with(&data, |_, loss| {
        epochs += 1;
        progress.update(|p| {
            p.epoch = epochs;
            p.loss = Some(loss);
        });
        true
    })?)
}

async fn train_generator(
    State(app): State<AppState>,
    Path(sid): Path<String>,
    Query(query): Query<HashMap<String, String>>,
    bytes: Bytes,
) -> JsonResponse {
    let mode = match query.get("mode").map(String::as_str).unwrap_or("full") {
        "full" => GeneratorMode::Full,
        "transfer" => GeneratorMode::Transfer,
        other => return Err(ApiError::bad_request("InvalidRequest", format!("mode {other:?} is not full or transfer"))),
    };
    let req: GeneratorRequest = body(&bytes)?;
    let defaults = app.config().training.clone();
    let max_epochs = req.max_epochs.unwrap_or(defaults.max_epochs);
    let parent_max_epochs = req.parent_max_epochs.unwrap_or(defaults.parent_max_epochs);
    if max_epochs == 0 || parent_max_epochs == 0 {
        return Err(ApiError::bad_request("InvalidRequest", "epoch caps must be positive"));
    }
    let handle = app.session(&sid)?;
    let mut s = handle.lock();
    if let Some(active) = s.active_job() {
        return Err(ApiError::conflict("JobConflict", format!("job {} is still running", active.id)));
    }
    let levels = s.level_list();
    let vocabulary = s.vocabulary.clone();
    let examples = annotations_to_examples(&s.all_annotations(), &levels, &vocabulary)?;
    if examples.is_empty() {
        return Err(ApiError::precondition("InsufficientData", "the generator needs annotated examples"));
    }
    let level_hashes = s.level_hashes();
    // A stored parent is reused while the level set is unchanged.
    let parent = s.parent.clone().filter(|p| p.meta.levels == level_hashes);
    let parent_data = match (mode, &parent) {
        (GeneratorMode::Transfer, None) => Some(parent_windows(&levels, defaults.parent_stride)?),
        _ => None,
    };
    let kind = if mode == GeneratorMode::Full { JobKind::GeneratorFull } else { JobKind::GeneratorTransfer };
    let job = jobs::start(&mut s, &handle, app.permits(), kind, move |progress: &ProgressSink| {
        let n = vocabulary.len();
        let config = ae_config(n, req.seed, max_epochs);
        let mut new_parent = None;
        let mut model = match mode {
            GeneratorMode::Transfer => {
                let parent = match (parent, parent_data) {
                    (Some(p), _) => p,
                    (None, Some(windows)) => {
                        let mut m = Autoencoder::build(ae_config(0, req.seed, parent_max_epochs), None)?;
                        let summary = train_model(&mut m, &windows, "parent", progress)?;
                        let meta = GeneratorMeta {
                            mode: GeneratorMode::Parent,
                            model_id: m.id(),
                            seed: req.seed,
                            epochs: summary.epochs,
                            final_loss: summary.final_loss,
                            examples: windows.len(),
                            vocabulary_hash: None,
                            levels: level_hashes.clone(),
                            parent: None,
                        };
                        let p = Arc::new(GeneratorModel { model: m, meta });
                        new_parent = Some(p.clone());
                        p
                    }
                    (None, None) => unreachable!("parent data is prepared whenever no parent is stored"),
                };
                let child = Autoencoder::transfer(&parent.model, config, Some(&vocabulary))?;
                (child, Some(parent))
            }
            _ => (Autoencoder::build(config, Some(&vocabulary))?, None),
        };
        let stage = if mode == GeneratorMode::Transfer { "fine-tune" } else { "train" };
        let summary = train_model(&mut model.0, &examples, stage, progress)?;
        let (model, parent) = model;
        let meta = GeneratorMeta {
            mode,
            model_id: model.id(),
            seed: req.seed,
            epochs: summary.epochs,
            final_loss: summary.final_loss,
            examples: examples.len(),
            vocabulary_hash: Some(vocabulary.hash()),
            levels: level_hashes,
            parent: parent.as_ref().map(|p| p.meta.model_id.clone()),
        };
        let commit: Commit = Box::new(move |s: &mut Session| {
            let parent_json = parent.as_ref().map(|p| {
                json!({ "model_id": p.meta.model_id, "epochs": p.meta.epochs, "trained_now": new_parent.is_some() })
            });
            if let Some(p) = new_parent {
                s.set_generator(p)?;
            }
            let result = json!({
                "mode": mode,
                "model_id": meta.model_id,
                "epochs": summary.epochs,
                "final_loss": summary.final_loss,
                "stop": summary.stop,
                "seconds": summary.seconds,
                "examples": meta.examples,
                "parent": parent_json,
            });
            s.set_generator(Arc::new(GeneratorModel { model, meta }))?;
            Ok(result)
        });
        Ok(commit)
    })?;
    accepted(job)
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateRequest {
    level: String,
    x: usize,
    y: usize,
    label: String,
    #[serde(default = "default_threshold")]
    threshold: f64,
}

async fn generate(State(app): State<AppState>, Path(sid): Path<String>, bytes: Bytes) -> JsonResponse {
    let req: GenerateRequest = body(&bytes)?;
    let handle = app.session(&sid)?;
    let (generator, chunk) = {
        let s = handle.lock();
        let g = s.generator.clone().ok_or_else(|| {
            ApiError::precondition("MissingModel", "train the generator first").with_detail(json!({ "missing": "generator" }))
        })?;
        match g.model.vocabulary() {
            Some(v) => guard_vocabulary(v, &s.vocabulary)?,
            None => return Err(ApiError::precondition("MissingModel", "the stored generator has no label vocabulary")),
        }
        (g.clone(), window_chunk(&s, &req.level, req.x, req.y)?)
    };
    if req.label == patterncraft_core::level::NONE_LABEL {
        return Err(ApiError::bad_request("UnknownLabel", "generation needs a pattern label"));
    }
    let generation = generator.model.generate_named(&chunk, &req.label, req.threshold)?;
    let predicted: Vec<Value> =
        generation.predicted_labels.iter().map(|(label, strength)| json!({ "label": label, "strength": strength })).collect();
    ok(json!({
        "level": req.level,
        "x": req.x,
        "y": req.y,
        "label": req.label,
        "tiles": generation.grid.rows(),
        "predicted_labels": predicted,
        "label_head": generation.label_head,
        "model_id": generator.meta.model_id,
    }))
}

// ---- jobs and metrics ----

async fn list_jobs(State(app): State<AppState>, Path(sid): Path<String>) -> JsonResponse {
    let handle = app.session(&sid)?;
    let s = handle.lock();
    ok(json!({ "jobs": s.jobs.values().collect::<Vec<_>>() }))
}

async fn get_job(State(app): State<AppState>, Path((sid, jid)): Path<(String, String)>) -> JsonResponse {
    let handle = app.session(&sid)?;
    let s = handle.lock();
    let job = s.jobs.get(&jid).ok_or_else(|| ApiError::not_found("job", &jid))?;
    ok(serde_json::to_value(job)?)
}

fn generator_json(g: &Option<Arc<GeneratorModel>>, vocabulary: &LabelVocabulary) -> Value {
    g.as_ref().map_or(Value::Null, |g| {
        let mut v = serde_json::to_value(&g.meta).unwrap_or(Value::Null);
        if let Some(hash) = &g.meta.vocabulary_hash {
            v["stale"] = json!(hash != &vocabulary.hash());
        }
        v
    })
}

async fn metrics(State(app): State<AppState>, Path(sid): Path<String>) -> JsonResponse {
    let handle = app.session(&sid)?;
    let s = handle.lock();
    let hand = s.annotations.iter().filter(|a| a.origin == Origin::Hand).count();
    let count = |state: jobs::JobState| s.jobs.values().filter(|j| j.state == state).count();
    let classifier = s.classifier.as_ref().map_or(Value::Null, |c| {
        json!({
            "trees": c.forest.trees().len(),
            "seed": c.meta.seed,
            "examples": c.meta.examples,
            "train_accuracy": c.meta.train_accuracy,
            "updates": c.meta.updates,
            "vocabulary_hash": c.meta.vocabulary_hash,
            "stale": c.forest.vocabulary.hash() != s.vocabulary.hash(),
        })
    });
    ok(json!({
        "levels": s.levels.len(),
        "vocabulary": vocabulary_json(&s.vocabulary),
        "annotations": { "hand": hand, "auto": s.annotations.len() - hand },
        "negatives": s.negatives.len(),
        "classifier": classifier,
        "parent": generator_json(&s.parent, &s.vocabulary),
        "generator": generator_json(&s.generator, &s.vocabulary),
        "jobs": {
            "queued": count(jobs::JobState::Queued),
            "running": count(jobs::JobState::Running),
            "done": count(jobs::JobState::Done),
            "failed": count(jobs::JobState::Failed),
        },
    }))
}
