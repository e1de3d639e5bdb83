//! Session state and its on-disk layout.
//!
//! ```text
//! <data-dir>/sessions/<id>/
//!     session.json          counters
//!     levels/<level>.lvl    text format
//!     vocabulary.json
//!     annotations.json      hand and auto annotations
//!     negatives.json        windows the designer marked as "none"
//!     jobs.json
//!     models/classifier.json, classifier-meta.json
//!     models/parent.weights, parent.json, parent-meta.json
//!     models/generator.weights, generator.json, generator-meta.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use patterncraft_core::forest::ForestModel;
use patterncraft_core::level::{LabelVocabulary, Level, LevelGrid, PatternAnnotation, Rect};
use patterncraft_core::Autoencoder;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::jobs::{Job, JobState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Hand,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAnnotation {
    pub id: String,
    #[serde(flatten)]
    pub annotation: PatternAnnotation,
    pub origin: Origin,
    /// Vote share of the winning label, auto annotations only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRef {
    pub level: String,
    pub x: usize,
    pub y: usize,
}

impl WindowRef {
    pub fn rect(&self) -> Rect {
        Rect::window(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub seed: u64,
    pub examples: usize,
    pub train_accuracy: f64,
    pub vocabulary_hash: String,
    /// Feedback updates applied since the last full fit.
    pub updates: usize,
}

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub forest: ForestModel,
    pub meta: ClassifierMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorMode {
    /// The label-free parent.
    Parent,
    Full,
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub mode: GeneratorMode,
    pub model_id: String,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
    pub examples: usize,
    pub vocabulary_hash: Option<String>,
    /// Content hashes of the levels a parent was trained on.
    #[serde(default)]
    pub levels: Vec<String>,
    #[serde(default)]
    pub parent: Option<String>,
}

#[derive(Debug)]
pub struct GeneratorModel {
    pub model: Autoencoder,
    pub meta: GeneratorMeta,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Counters {
    id: String,
    next_annotation: u64,
    next_job: u64,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub dir: PathBuf,
    pub levels: BTreeMap<String, Level>,
    pub vocabulary: LabelVocabulary,
    pub annotations: Vec<StoredAnnotation>,
    pub negatives: Vec<WindowRef>,
    pub classifier: Option<Arc<ClassifierModel>>,
    pub parent: Option<Arc<GeneratorModel>>,
    pub generator: Option<Arc<GeneratorModel>>,
    pub jobs: BTreeMap<String, Job>,
    next_annotation: u64,
    next_job: u64,
}

/// Write through a temporary file so a crash never leaves half a file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> ApiResult<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    Ok(write_atomic(path, &text)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> ApiResult<Option<T>> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Level and session ids double as file names.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Session {
    pub fn create(dir: PathBuf, id: String) -> ApiResult<Self> {
        fs::create_dir_all(dir.join("levels"))?;
        fs::create_dir_all(dir.join("models"))?;
        let s = Session {
            id,
            dir,
            levels: BTreeMap::new(),
            vocabulary: LabelVocabulary::new(Vec::<String>::new())?,
            annotations: Vec::new(),
            negatives: Vec::new(),
            classifier: None,
            parent: None,
            generator: None,
            jobs: BTreeMap::new(),
            next_annotation: 1,
            next_job: 1,
        };
        s.save_counters()?;
        s.save_vocabulary()?;
        s.save_annotations()?;
        s.save_negatives()?;
        s.save_jobs()?;
        Ok(s)
    }

    /// Reload a session directory. Jobs that were queued or running when the
    /// process stopped are marked failed.
    pub fn open(dir: PathBuf) -> ApiResult<Self> {
        let counters: Counters = read_json(&dir.join("session.json"))?
            .ok_or_else(|| ApiError::internal(format!("{} has no session.json", dir.display())))?;
        let mut levels = BTreeMap::new();
        for entry in fs::read_dir(dir.join("levels"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "lvl") {
                let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                let grid = LevelGrid::parse(&fs::read_to_string(&path)?)?;
                levels.insert(id.clone(), Level::new(id, grid));
            }
        }
        let names: Vec<String> = read_json(&dir.join("vocabulary.json"))?.unwrap_or_default();
        let vocabulary = LabelVocabulary::new(names)?;
        let models = dir.join("models");
        let classifier = match read_json::<ClassifierMeta>(&models.join("classifier-meta.json"))? {
            Some(meta) => {
                let forest = ForestModel::load(&models.join("classifier.json"), None)?;
                Some(Arc::new(ClassifierModel { forest, meta }))
            }
            None => None,
        };
        let mut s = Session {
            id: counters.id,
            levels,
            vocabulary,
            annotations: read_json(&dir.join("annotations.json"))?.unwrap_or_default(),
            negatives: read_json(&dir.join("negatives.json"))?.unwrap_or_default(),
            classifier,
            parent: load_generator(&models, "parent")?.map(Arc::new),
            generator: load_generator(&models, "generator")?.map(Arc::new),
            jobs: read_json(&dir.join("jobs.json"))?.unwrap_or_default(),
            next_annotation: counters.next_annotation,
            next_job: counters.next_job,
            dir,
        };
        let mut interrupted = false;
        for job in s.jobs.values_mut() {
            if matches!(job.state, JobState::Queued | JobState::Running) {
                job.fail(ApiError::internal("interrupted by a service restart").body);
                interrupted = true;
            }
        }
        if interrupted {
            s.save_jobs()?;
        }
        Ok(s)
    }

    fn save_counters(&self) -> ApiResult<()> {
        let c = Counters { id: self.id.clone(), next_annotation: self.next_annotation, next_job: self.next_job };
        write_json(&self.dir.join("session.json"), &c)
    }

    pub fn save_level(&self, id: &str) -> ApiResult<()> {
        let level = &self.levels[id];
        Ok(write_atomic(&self.dir.join("levels").join(format!("{id}.lvl")), level.grid.to_text().as_bytes())?)
    }

    pub fn save_vocabulary(&self) -> ApiResult<()> {
        write_json(&self.dir.join("vocabulary.json"), &self.vocabulary.names())
    }

    pub fn save_annotations(&self) -> ApiResult<()> {
        write_json(&self.dir.join("annotations.json"), &self.annotations)
    }

    pub fn save_negatives(&self) -> ApiResult<()> {
        write_json(&self.dir.join("negatives.json"), &self.negatives)
    }

    pub fn save_jobs(&self) -> ApiResult<()> {
        write_json(&self.dir.join("jobs.json"), &self.jobs)
    }

    pub fn set_classifier(&mut self, model: ClassifierModel) -> ApiResult<()> {
        let models = self.dir.join("models");
        write_atomic(&models.join("classifier.json"), model.forest.to_json().as_bytes())?;
        write_json(&models.join("classifier-meta.json"), &model.meta)?;
        self.classifier = Some(Arc::new(model));
        Ok(())
    }

    pub fn set_generator(&mut self, model: Arc<GeneratorModel>) -> ApiResult<()> {
        let stem = if model.meta.mode == GeneratorMode::Parent { "parent" } else { "generator" };
        let models = self.dir.join("models");
        // Save under a temporary stem, then move both files into place.
        let tmp = models.join(format!("{stem}-tmp.weights"));
        model.model.save(&tmp)?;
        fs::rename(&tmp, models.join(format!("{stem}.weights")))?;
        fs::rename(tmp.with_extension("json"), models.join(format!("{stem}.json")))?;
        write_json(&models.join(format!("{stem}-meta.json")), &model.meta)?;
        let model = Some(model);
        if stem == "parent" {
            self.parent = model;
        } else {
            self.generator = model;
        }
        Ok(())
    }

    pub fn level(&self, id: &str) -> ApiResult<&Level> {
        self.levels.get(id).ok_or_else(|| ApiError::bad_request("UnknownLevel", format!("unknown level {id:?}")))
    }

    /// Levels in id order.
    pub fn level_list(&self) -> Vec<Level> {
        self.levels.values().cloned().collect()
    }

    pub fn hand_annotations(&self) -> Vec<PatternAnnotation> {
        self.annotations.iter().filter(|a| a.origin == Origin::Hand).map(|a| a.annotation.clone()).collect()
    }

    pub fn all_annotations(&self) -> Vec<PatternAnnotation> {
        self.annotations.iter().map(|a| a.annotation.clone()).collect()
    }

    /// Add a hand annotation. An identical auto annotation is promoted in
    /// place and an identical hand annotation is returned as is.
    pub fn add_hand_annotation(&mut self, annotation: PatternAnnotation) -> StoredAnnotation {
        if let Some(existing) = self.annotations.iter_mut().find(|a| a.annotation == annotation) {
            existing.origin = Origin::Hand;
            existing.confidence = None;
            return existing.clone();
        }
        let stored = StoredAnnotation { id: self.next_annotation_id(), annotation, origin: Origin::Hand, confidence: None };
        self.annotations.push(stored.clone());
        stored
    }

    pub fn next_annotation_id(&mut self) -> String {
        let id = format!("a-{:06}", self.next_annotation);
        self.next_annotation += 1;
        id
    }

    pub fn next_job_id(&mut self) -> String {
        let id = format!("j-{:04}", self.next_job);
        self.next_job += 1;
        id
    }

    /// Persist counters after ids were handed out.
    pub fn commit_counters(&self) -> ApiResult<()> {
        self.save_counters()
    }

    pub fn active_job(&self) -> Option<&Job> {
        self.jobs.values().find(|j| matches!(j.state, JobState::Queued | JobState::Running))
    }

    /// Labels some annotation still refers to.
    pub fn labels_in_use(&self) -> Vec<String> {
        let mut used: Vec<String> = self.annotations.iter().map(|a| a.annotation.label.clone()).collect();
        used.sort();
        used.dedup();
        used
    }

    /// Sorted content hashes of every level.
    pub fn level_hashes(&self) -> Vec<String> {
        let mut h: Vec<String> = self.levels.values().map(|l| l.grid.content_hash()).collect();
        h.sort();
        h
    }
}

fn load_generator(models: &Path, stem: &str) -> ApiResult<Option<GeneratorModel>> {
    let Some(meta) = read_json::<GeneratorMeta>(&models.join(format!("{stem}-meta.json")))? else {
        return Ok(None);
    };
    let model = Autoencoder::load(&models.join(format!("{stem}.weights")), None)?;
    Ok(Some(GeneratorModel { model, meta }))
}
