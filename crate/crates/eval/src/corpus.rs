//! Rule-generated levels with ground-truth pattern annotations.
//!
//! Levels are 14 tiles high with two rows of ground. Pattern instances and
//! distractor pieces are laid out left to right, separated by at least
//! [`MIN_SPACING`] columns of bare ground so that no two pieces can combine
//! into something a rule predicate would accept.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use patterncraft_core::level::tiles::ids;
use patterncraft_core::level::{
    annotations_to_examples, LabelVocabulary, LabeledChunk, Level, LevelGrid, PatternAnnotation, Rect,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::EvalError;

pub const LEVEL_HEIGHT: usize = 14;
/// Top row of the two ground rows.
pub const GROUND_ROW: usize = 12;
/// First air row above the ground.
const FLOOR: usize = GROUND_ROW - 1;
pub const MIN_SPACING: usize = 4;
const MARGIN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    Staircase,
    Gap,
    EnemyPair,
    Pipe,
    CoinArc,
    PlatformRun,
}

const ARC_3: [usize; 3] = [0, 1, 0];
const ARC_4: [usize; 4] = [0, 1, 1, 0];
const ARC_5: [usize; 5] = [0, 1, 2, 1, 0];

fn arc(width: usize) -> Option<&'static [usize]> {
    match width {
        3 => Some(&ARC_3),
        4 => Some(&ARC_4),
        5 => Some(&ARC_5),
        _ => None,
    }
}

fn is_pair_enemy(t: Option<u8>) -> bool {
    matches!(t, Some(ids::GOOMBA | ids::KOOPA))
}

impl PatternKind {
    pub const ALL: [PatternKind; 6] = [
        PatternKind::Staircase,
        PatternKind::Gap,
        PatternKind::EnemyPair,
        PatternKind::Pipe,
        PatternKind::CoinArc,
        PatternKind::PlatformRun,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Staircase => "staircase",
            PatternKind::Gap => "gap",
            PatternKind::EnemyPair => "enemy-pair",
            PatternKind::Pipe => "pipe",
            PatternKind::CoinArc => "coin-arc",
            PatternKind::PlatformRun => "platform-run",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Does `rect` on `grid` hold exactly one instance of this pattern?
    pub fn check(self, grid: &LevelGrid, rect: Rect) -> bool {
        if rect.w == 0 || rect.h == 0 || rect.x + rect.w > grid.width() || rect.y + rect.h > grid.height() {
            return false;
        }
        let at = |x: usize, y: usize| grid.get(x, y);
        let right = rect.x + rect.w;
        let outside = |x: isize, y: usize| -> Option<u8> {
            if x < 0 || x as usize >= grid.width() {
                None
            } else {
                at(x as usize, y)
            }
        };
        match self {
            PatternKind::Staircase => {
                let s = rect.w;
                if !(3..=5).contains(&s) || rect.h != s || rect.y + s != GROUND_ROW || grid.height() <= GROUND_ROW {
                    return false;
                }
                let mut heights = Vec::with_capacity(s);
                for x in rect.x..right {
                    if at(x, GROUND_ROW) != Some(ids::GROUND) {
                        return false;
                    }
                    let h = (rect.y..GROUND_ROW).rev().take_while(|&y| at(x, y) == Some(ids::SOLID_BLOCK)).count();
                    if (rect.y..GROUND_ROW - h).any(|y| at(x, y).is_some()) {
                        return false;
                    }
                    heights.push(h);
                }
                let up: Vec<usize> = (1..=s).collect();
                let down: Vec<usize> = (1..=s).rev().collect();
                let bounded = outside(rect.x as isize - 1, FLOOR) != Some(ids::SOLID_BLOCK)
                    && outside(right as isize, FLOOR) != Some(ids::SOLID_BLOCK);
                bounded && (heights == up || heights == down)
            }
            PatternKind::Gap => {
                if rect.y + 4 != grid.height() || rect.h != 4 || !(4..=6).contains(&rect.w) {
                    return false;
                }
                let edge_ok = |x: usize| {
                    at(x, GROUND_ROW) == Some(ids::GROUND)
                        && at(x, GROUND_ROW + 1) == Some(ids::GROUND)
                        && at(x, rect.y).is_none()
                        && at(x, rect.y + 1).is_none()
                };
                edge_ok(rect.x)
                    && edge_ok(right - 1)
                    && (rect.x + 1..right - 1).all(|x| (rect.y..rect.y + 4).all(|y| at(x, y).is_none()))
            }
            PatternKind::EnemyPair => {
                if rect.h != 1 || rect.y != FLOOR || !(2..=4).contains(&rect.w) {
                    return false;
                }
                let ends = is_pair_enemy(at(rect.x, FLOOR)) && is_pair_enemy(at(right - 1, FLOOR));
                let standing = at(rect.x, GROUND_ROW).is_some() && at(right - 1, GROUND_ROW).is_some();
                let inner_empty = (rect.x + 1..right - 1).all(|x| at(x, FLOOR).is_none());
                let isolated = (1..=3).all(|d| {
                    !is_pair_enemy(outside(rect.x as isize - d, FLOOR))
                        && !is_pair_enemy(outside((right - 1) as isize + d, FLOOR))
                });
                ends && standing && inner_empty && isolated
            }
            PatternKind::Pipe => {
                if rect.w != 2 || !(2..=4).contains(&rect.h) || rect.y + rect.h != GROUND_ROW {
                    return false;
                }
                let top = at(rect.x, rect.y) == Some(ids::PIPE_TOP_LEFT) && at(rect.x + 1, rect.y) == Some(ids::PIPE_TOP_RIGHT);
                let body = (rect.y + 1..GROUND_ROW)
                    .all(|y| at(rect.x, y) == Some(ids::PIPE_BODY_LEFT) && at(rect.x + 1, y) == Some(ids::PIPE_BODY_RIGHT));
                let capped = rect.y == 0 || (at(rect.x, rect.y - 1).is_none() && at(rect.x + 1, rect.y - 1).is_none());
                top && body && capped
            }
            PatternKind::CoinArc => {
                let Some(profile) = arc(rect.w) else { return false };
                let peak = *profile.iter().max().expect("non-empty");
                if rect.h != peak + 1 {
                    return false;
                }
                let bottom = rect.y + peak;
                for (i, off) in profile.iter().enumerate() {
                    let x = rect.x + i;
                    for y in rect.y..rect.y + rect.h {
                        let want = if y == bottom - off { Some(ids::COIN) } else { None };
                        if at(x, y) != want {
                            return false;
                        }
                    }
                }
                // one row of margin above and below keeps a sub-arc of a wider arc out
                let rows = rect.y.saturating_sub(1)..=rect.y + rect.h;
                let no_coin = |x: isize| rows.clone().all(|y| outside(x, y) != Some(ids::COIN));
                no_coin(rect.x as isize - 1) && no_coin(right as isize)
            }
            PatternKind::PlatformRun => {
                if rect.h != 1 || !(3..=6).contains(&rect.w) {
                    return false;
                }
                (rect.x..right).all(|x| at(x, rect.y) == Some(ids::PLATFORM))
                    && outside(rect.x as isize - 1, rect.y) != Some(ids::PLATFORM)
                    && outside(right as isize, rect.y) != Some(ids::PLATFORM)
            }
        }
    }

    /// Every rectangle on `grid` that [`check`](Self::check) accepts.
    pub fn find_all(self, grid: &LevelGrid) -> Vec<Rect> {
        let (w, h) = (grid.width(), grid.height());
        let mut shapes: Vec<(usize, usize, usize)> = Vec::new(); // (width, height, y)
        match self {
            PatternKind::Staircase => {
                shapes.extend((3..=5).filter(|s| *s < GROUND_ROW).map(|s| (s, s, GROUND_ROW - s)));
            }
            PatternKind::Gap => {
                if h >= 4 {
                    shapes.extend((4..=6).map(|gw| (gw, 4, h - 4)));
                }
            }
            PatternKind::EnemyPair => shapes.extend((2..=4).map(|pw| (pw, 1, FLOOR))),
            PatternKind::Pipe => shapes.extend((2..=4).map(|ph| (2, ph, GROUND_ROW - ph))),
            PatternKind::CoinArc => {
                for aw in 3..=5 {
                    let ah = arc(aw).map_or(0, |p| p.iter().max().copied().unwrap_or(0) + 1);
                    shapes.extend((0..=h.saturating_sub(ah)).map(|y| (aw, ah, y)));
                }
            }
            PatternKind::PlatformRun => {
                for pw in 3..=6 {
                    shapes.extend((0..h).map(|y| (pw, 1, y)));
                }
            }
        }
        let mut out = Vec::new();
        for (sw, sh, y) in shapes {
            if y + sh > h || sw > w {
                continue;
            }
            for x in 0..=w - sw {
                let r = Rect::new(x, y, sw, sh);
                if self.check(grid, r) {
                    out.push(r);
                }
            }
        }
        out.sort_by_key(|r| (r.x, r.y, r.w, r.h));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternTarget {
    pub kind: PatternKind,
    pub per_level: usize,
}

/// What to generate. Pattern kinds not listed may still show up as
/// unlabeled distractor structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub levels: usize,
    pub width: usize,
    pub patterns: Vec<PatternTarget>,
    pub distractors_per_level: usize,
    pub clouds_per_level: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            levels: 20,
            width: 200,
            patterns: [PatternKind::Staircase, PatternKind::Gap, PatternKind::EnemyPair]
                .into_iter()
                .map(|kind| PatternTarget { kind, per_level: 2 })
                .collect(),
            distractors_per_level: 8,
            clouds_per_level: 4,
        }
    }
}

impl CorpusSpec {
    /// `"default"`, `"small"` or `"all-patterns"`.
    pub fn named(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "small" => Some(Self {
                levels: 6,
                width: 96,
                patterns: Self::default().patterns.into_iter().map(|p| PatternTarget { per_level: 1, ..p }).collect(),
                distractors_per_level: 3,
                clouds_per_level: 2,
            }),
            "all-patterns" => Some(Self {
                patterns: PatternKind::ALL.into_iter().map(|kind| PatternTarget { kind, per_level: 1 }).collect(),
                ..Self::default()
            }),
            _ => None,
        }
    }

    pub fn vocabulary(&self) -> LabelVocabulary {
        LabelVocabulary::new(self.patterns.iter().map(|p| p.kind.name())).expect("pattern names are distinct")
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let invalid = |m: String| Err(EvalError::InvalidSpec(m));
        if self.levels == 0 {
            return invalid("at least one level is required".into());
        }
        if self.width < 8 {
            return invalid(format!("width {} is below 8", self.width));
        }
        let kinds: BTreeSet<PatternKind> = self.patterns.iter().map(|p| p.kind).collect();
        if kinds.len() != self.patterns.len() {
            return invalid("a pattern kind is listed twice".into());
        }
        // widest footprint of every piece, plus spacing
        let pieces: usize = self.patterns.iter().map(|p| p.per_level).sum::<usize>()
            + if self.patterns.is_empty() { 0 } else { self.distractors_per_level };
        let need = 2 * MARGIN + pieces * (6 + MIN_SPACING);
        if pieces > 0 && need > self.width {
            return invalid(format!("{pieces} pieces per level need width ≥ {need}, got {}", self.width));
        }
        Ok(())
    }
}

/// Something placed on the ground line: its footprint and how to draw it.
#[derive(Debug, Clone, Copy)]
enum Piece {
    Pattern(PatternKind, usize, bool),
    LoneEnemy(u8),
    BlockColumn(usize),
    BlockRow(u8, usize),
    Bush(usize),
    Hill,
    Cannon,
    LoneCoin(usize),
}

impl Piece {
    fn random_pattern(kind: PatternKind, rng: &mut ChaCha8Rng) -> Piece {
        let size = match kind {
            PatternKind::Staircase => rng.gen_range(3..=4),
            PatternKind::Gap => rng.gen_range(2..=4),
            PatternKind::EnemyPair => rng.gen_range(1..=3),
            PatternKind::Pipe => rng.gen_range(2..=4),
            PatternKind::CoinArc => rng.gen_range(3..=5),
            PatternKind::PlatformRun => rng.gen_range(3..=6),
        };
        Piece::Pattern(kind, size, rng.gen_bool(0.5))
    }

    fn random_distractor(inactive: &[PatternKind], rng: &mut ChaCha8Rng) -> Piece {
        let neutral = 7;
        let pick = rng.gen_range(0..neutral + inactive.len());
        match pick {
            0 => Piece::LoneEnemy([ids::GOOMBA, ids::KOOPA, ids::HAMMER_BRO][rng.gen_range(0..3)]),
            1 => Piece::BlockColumn(rng.gen_range(1..=2)),
            2 => {
                let tile = [ids::BRICK, ids::QUESTION_COIN, ids::QUESTION_POWERUP][rng.gen_range(0..3)];
                Piece::BlockRow(tile, rng.gen_range(1..=4))
            }
            3 => Piece::Bush(rng.gen_range(0..=2)),
            4 => Piece::Hill,
            5 => Piece::Cannon,
            6 => Piece::LoneCoin(rng.gen_range(7..=8)),
            k => Piece::random_pattern(inactive[k - neutral], rng),
        }
    }

    fn width(self) -> usize {
        match self {
            Piece::Pattern(kind, size, _) => match kind {
                PatternKind::EnemyPair => size + 1,
                PatternKind::Pipe => 2,
                _ => size,
            },
            Piece::BlockRow(_, n) => n,
            Piece::Bush(middle) => middle + 2,
            Piece::Hill => 3,
            Piece::LoneEnemy(_) | Piece::BlockColumn(_) | Piece::Cannon | Piece::LoneCoin(_) => 1,
        }
    }

    /// Draw at column `x`; returns the annotation rectangle for patterns.
    fn draw(self, grid: &mut LevelGrid, x: usize, rng: &mut ChaCha8Rng) -> Option<(PatternKind, Rect)> {
        match self {
            Piece::Pattern(kind, size, flip) => {
                let rect = match kind {
                    PatternKind::Staircase => {
                        for i in 0..size {
                            let h = if flip { size - i } else { i + 1 };
                            for y in GROUND_ROW - h..GROUND_ROW {
                                grid.set(x + i, y, Some(ids::SOLID_BLOCK));
                            }
                        }
                        Rect::new(x, GROUND_ROW - size, size, size)
                    }
                    PatternKind::Gap => {
                        for i in 0..size {
                            grid.set(x + i, GROUND_ROW, None);
                            grid.set(x + i, GROUND_ROW + 1, None);
                        }
                        Rect::new(x - 1, GROUND_ROW - 2, size + 2, 4)
                    }
                    PatternKind::EnemyPair => {
                        let pick = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { ids::GOOMBA } else { ids::KOOPA };
                        grid.set(x, FLOOR, Some(pick(rng)));
                        grid.set(x + size, FLOOR, Some(pick(rng)));
                        Rect::new(x, FLOOR, size + 1, 1)
                    }
                    PatternKind::Pipe => {
                        let top = GROUND_ROW - size;
                        grid.set(x, top, Some(ids::PIPE_TOP_LEFT));
                        grid.set(x + 1, top, Some(ids::PIPE_TOP_RIGHT));
                        for y in top + 1..GROUND_ROW {
                            grid.set(x, y, Some(ids::PIPE_BODY_LEFT));
                            grid.set(x + 1, y, Some(ids::PIPE_BODY_RIGHT));
                        }
                        Rect::new(x, top, 2, size)
                    }
                    PatternKind::CoinArc => {
                        let profile = arc(size).expect("arc widths are 3..=5");
                        let peak = *profile.iter().max().expect("non-empty");
                        let bottom = 8;
                        for (i, off) in profile.iter().enumerate() {
                            grid.set(x + i, bottom - off, Some(ids::COIN));
                        }
                        Rect::new(x, bottom - peak, size, peak + 1)
                    }
                    PatternKind::PlatformRun => {
                        let row = if flip { 7 } else { 8 };
                        for i in 0..size {
                            grid.set(x + i, row, Some(ids::PLATFORM));
                        }
                        Rect::new(x, row, size, 1)
                    }
                };
                return Some((kind, rect));
            }
            Piece::LoneEnemy(t) => grid.set(x, FLOOR, Some(t)),
            Piece::BlockColumn(h) => {
                for y in GROUND_ROW - h..GROUND_ROW {
                    grid.set(x, y, Some(ids::SOLID_BLOCK));
                }
            }
            Piece::BlockRow(t, n) => {
                for i in 0..n {
                    grid.set(x + i, 8, Some(t));
                }
            }
            Piece::Bush(middle) => {
                grid.set(x, FLOOR, Some(ids::BUSH_LEFT));
                for i in 0..middle {
                    grid.set(x + 1 + i, FLOOR, Some(ids::BUSH_MIDDLE));
                }
                grid.set(x + middle + 1, FLOOR, Some(ids::BUSH_RIGHT));
            }
            Piece::Hill => {
                for i in 0..3 {
                    grid.set(x + i, FLOOR, Some(ids::HILL_SIDE));
                }
                grid.set(x + 1, FLOOR - 1, Some(ids::HILL_TOP));
            }
            Piece::Cannon => {
                grid.set(x, FLOOR - 1, Some(ids::CANNON_TOP));
                grid.set(x, FLOOR, Some(ids::CANNON_BASE));
            }
            Piece::LoneCoin(row) => grid.set(x, row, Some(ids::COIN)),
        }
        None
    }
}

fn draw_cloud(grid: &mut LevelGrid, rng: &mut ChaCha8Rng) {
    let middle = rng.gen_range(0..=2);
    let w = middle + 2;
    let x = rng.gen_range(0..=grid.width() - w);
    let y = rng.gen_range(1..=4);
    grid.set(x, y, Some(ids::CLOUD_LEFT));
    for i in 0..middle {
        grid.set(x + 1 + i, y, Some(ids::CLOUD_MIDDLE));
    }
    grid.set(x + w - 1, y, Some(ids::CLOUD_RIGHT));
}

/// Levels plus the oracle's annotation of every pattern instance in them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub spec: Option<CorpusSpec>,
    pub seed: Option<u64>,
    pub vocabulary: LabelVocabulary,
    pub levels: Vec<Level>,
    pub annotations: Vec<PatternAnnotation>,
}

pub fn make_synthetic_corpus(spec: &CorpusSpec, seed: u64) -> Result<Corpus, EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let active: BTreeSet<PatternKind> = spec.patterns.iter().map(|p| p.kind).collect();
    let inactive: Vec<PatternKind> = PatternKind::ALL.into_iter().filter(|k| !active.contains(k)).collect();
    let mut levels = Vec::with_capacity(spec.levels);
    let mut annotations = Vec::new();
    for li in 0..spec.levels {
        let id = format!("level-{li:02}");
        let mut grid = LevelGrid::empty(spec.width, LEVEL_HEIGHT)?;
        for x in 0..spec.width {
            grid.set(x, GROUND_ROW, Some(ids::GROUND));
            grid.set(x, GROUND_ROW + 1, Some(ids::GROUND));
        }
        let mut pieces: Vec<Piece> = Vec::new();
        for target in &spec.patterns {
            pieces.extend((0..target.per_level).map(|_| Piece::random_pattern(target.kind, &mut rng)));
        }
        // With nothing to find there is nothing to distract from: flat levels.
        if !spec.patterns.is_empty() {
            pieces.extend((0..spec.distractors_per_level).map(|_| Piece::random_distractor(&inactive, &mut rng)));
        }
        pieces.shuffle(&mut rng);

        if !pieces.is_empty() {
            let used: usize = pieces.iter().map(|p| p.width()).sum::<usize>() + MIN_SPACING * (pieces.len() - 1);
            let slack = spec.width - 2 * MARGIN - used;
            // split the slack over the gaps between pieces and both ends
            let weights: Vec<f64> = (0..=pieces.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
            let extra: Vec<usize> = weights.iter().map(|w| ((w / total) * slack as f64).floor() as usize).collect();
            let mut x = MARGIN + extra[0];
            for (i, piece) in pieces.iter().enumerate() {
                if let Some((kind, rect)) = piece.draw(&mut grid, x, &mut rng) {
                    if active.contains(&kind) {
                        annotations.push(PatternAnnotation::new(id.clone(), rect, kind.name()));
                    }
                }
                x += piece.width() + MIN_SPACING + extra[i + 1];
            }
            for _ in 0..spec.clouds_per_level {
                draw_cloud(&mut grid, &mut rng);
            }
        }
        levels.push(Level::new(id, grid));
    }
    Ok(Corpus { spec: Some(spec.clone()), seed: Some(seed), vocabulary: spec.vocabulary(), levels, annotations })
}

impl Corpus {
    /// One labeled chunk per annotation window, each with its origin.
    pub fn examples(&self) -> Result<Vec<LabeledChunk>, EvalError> {
        Ok(annotations_to_examples(&self.annotations, &self.levels, &self.vocabulary)?)
    }

    pub fn level(&self, id: &str) -> Option<&Level> {
        self.levels.iter().find(|l| l.id == id)
    }

    /// Oracle self-check: annotations whose region fails its rule, and rule
    /// instances of a vocabulary pattern that nobody annotated.
    pub fn verify(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for ann in &self.annotations {
            let ok = match (PatternKind::from_name(&ann.label), self.level(&ann.level)) {
                (Some(kind), Some(level)) => kind.check(&level.grid, ann.rect()),
                _ => false,
            };
            if !ok {
                problems.push(format!("{} {:?} on {} fails its rule", ann.label, ann.rect(), ann.level));
            }
        }
        for name in self.vocabulary.names() {
            let Some(kind) = PatternKind::from_name(name) else { continue };
            for level in &self.levels {
                let annotated: BTreeSet<(usize, usize, usize, usize)> = self
                    .annotations
                    .iter()
                    .filter(|a| a.level == level.id && a.label == *name)
                    .map(|a| (a.x, a.y, a.w, a.h))
                    .collect();
                for r in kind.find_all(&level.grid) {
                    if !annotated.contains(&(r.x, r.y, r.w, r.h)) {
                        problems.push(format!("unannotated {name} {r:?} on {}", level.id));
                    }
                }
            }
        }
        problems
    }

    /// `levels/<id>.lvl`, `annotations.json`, `vocabulary.json` and, for
    /// generated corpora, `corpus.json` with the spec and seed.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        fs::create_dir_all(dir.join("levels"))?;
        for level in &self.levels {
            fs::write(dir.join("levels").join(format!("{}.lvl", level.id)), level.grid.to_text())?;
        }
        fs::write(dir.join("annotations.json"), serde_json::to_string_pretty(&self.annotations)? + "\n")?;
        fs::write(dir.join("vocabulary.json"), serde_json::to_string_pretty(&self.vocabulary)? + "\n")?;
        if let (Some(spec), Some(seed)) = (&self.spec, self.seed) {
            let meta = serde_json::json!({ "spec": spec, "seed": seed });
            fs::write(dir.join("corpus.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, EvalError> {
        let mut paths: Vec<_> = fs::read_dir(dir.join("levels"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "lvl"))
            .collect();
        paths.sort();
        let mut levels = Vec::with_capacity(paths.len());
        for p in paths {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            levels.push(Level::new(id, LevelGrid::parse(&fs::read_to_string(&p)?)?));
        }
        let annotations: Vec<PatternAnnotation> = serde_json::from_str(&fs::read_to_string(dir.join("annotations.json"))?)?;
        let vocabulary: LabelVocabulary = serde_json::from_str(&fs::read_to_string(dir.join("vocabulary.json"))?)?;
        let (mut spec, mut seed) = (None, None);
        if let Ok(text) = fs::read_to_string(dir.join("corpus.json")) {
            let meta: serde_json::Value = serde_json::from_str(&text)?;
            spec = serde_json::from_value(meta["spec"].clone()).ok();
            seed = meta["seed"].as_u64();
        }
        let corpus = Corpus { spec, seed, vocabulary, levels, annotations };
        for ann in &corpus.annotations {
            let level = corpus.level(&ann.level).ok_or_else(|| {
                EvalError::InvalidSpec(format!("annotation refers to unknown level {:?}", ann.level))
            })?;
            ann.validate(level, &corpus.vocabulary)?;
        }
        Ok(corpus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&str]) -> LevelGrid {
        LevelGrid::parse(&rows.join("\n")).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in PatternKind::ALL {
            assert_eq!(PatternKind::from_name(k.name()), Some(k));
        }
        assert_eq!(PatternKind::from_name("none"), None);
    }

    #[test]
    fn flat_levels_without_patterns() {
        let spec = CorpusSpec { patterns: vec![], ..CorpusSpec::default() };
        let c = make_synthetic_corpus(&spec, 3).unwrap();
        assert!(c.annotations.is_empty());
        assert!(c.vocabulary.is_empty());
        for l in &c.levels {
            for y in 0..LEVEL_HEIGHT {
                for x in 0..l.grid.width() {
                    let want = if y >= GROUND_ROW { Some(ids::GROUND) } else { None };
                    assert_eq!(l.grid.get(x, y), want);
                }
            }
        }
    }

    #[test]
    fn default_corpus_is_consistent() {
        let c = make_synthetic_corpus(&CorpusSpec::default(), 1).unwrap();
        assert_eq!(c.levels.len(), 20);
        assert_eq!(c.annotations.len(), 120);
        assert_eq!(c.verify(), Vec::<String>::new());
        assert!(c.levels.iter().all(|l| l.grid.width() == 200 && l.grid.height() == LEVEL_HEIGHT));
    }

    #[test]
    fn every_kind_is_found_exactly() {
        for seed in 0..4 {
            let c = make_synthetic_corpus(&CorpusSpec::named("all-patterns").unwrap(), seed).unwrap();
            assert_eq!(c.annotations.len(), 6 * 20);
            assert_eq!(c.verify(), Vec::<String>::new(), "seed {seed}");
        }
    }

    #[test]
    fn too_narrow_is_rejected() {
        let spec = CorpusSpec { width: 40, ..CorpusSpec::default() };
        assert!(matches!(make_synthetic_corpus(&spec, 0), Err(EvalError::InvalidSpec(_))));
        let twice = CorpusSpec {
            patterns: vec![PatternTarget { kind: PatternKind::Gap, per_level: 1 }; 2],
            ..CorpusSpec::default()
        };
        assert!(twice.validate().is_err());
    }

    /// 14-row level from its bottom rows; everything above is sky.
    fn level(bottom: &[&str]) -> LevelGrid {
        let w = bottom[0].len();
        let mut rows = vec!["-".repeat(w); LEVEL_HEIGHT - bottom.len()];
        rows.extend(bottom.iter().map(|r| r.to_string()));
        grid(&rows.iter().map(String::as_str).collect::<Vec<_>>())
    }

    #[test]
    fn staircase_rule() {
        let g = level(&["----S-----", "---SS-----", "--SSS-----", "##########", "##########"]);
        assert!(PatternKind::Staircase.check(&g, Rect::new(2, 9, 3, 3)));
        assert!(!PatternKind::Staircase.check(&g, Rect::new(3, 10, 2, 2)));
        assert_eq!(PatternKind::Staircase.find_all(&g), vec![Rect::new(2, 9, 3, 3)]);
        // a taller fourth column extends it; the 3-wide prefix is no longer maximal
        let g = level(&["-----S----", "----SS----", "---SSS----", "--SSSS----", "##########", "##########"]);
        assert_eq!(PatternKind::Staircase.find_all(&g), vec![Rect::new(2, 8, 4, 4)]);
        let down = level(&["--S-------", "--SS------", "--SSS-----", "##########", "##########"]);
        assert_eq!(PatternKind::Staircase.find_all(&down), vec![Rect::new(2, 9, 3, 3)]);
    }

    #[test]
    fn gap_pipe_and_arc_rules() {
        let g = level(&["----------", "----------", "##---#####", "##---#####"]);
        assert_eq!(PatternKind::Gap.find_all(&g), vec![Rect::new(1, 10, 5, 4)]);
        let g = level(&["---[]-----", "---<>-----", "---<>-----", "##########", "##########"]);
        assert_eq!(PatternKind::Pipe.find_all(&g), vec![Rect::new(3, 9, 2, 3)]);
        let g = level(&["--o-------", "-o-o------", "----------", "----------", "----------", "##########", "##########"]);
        assert_eq!(PatternKind::CoinArc.find_all(&g), vec![Rect::new(1, 7, 3, 2)]);
        let g = level(&["-====-===-", "----------", "##########", "##########"]);
        assert_eq!(PatternKind::PlatformRun.find_all(&g), vec![Rect::new(1, 10, 4, 1), Rect::new(6, 10, 3, 1)]);
    }

    #[test]
    fn enemy_pairs_must_be_isolated() {
        let g = level(&["-g-k----g-", "##########", "##########"]);
        assert_eq!(PatternKind::EnemyPair.find_all(&g), vec![Rect::new(1, FLOOR, 3, 1)]);
        // a third enemy within reach makes the pair ambiguous
        let g = level(&["-g-k-g----", "##########", "##########"]);
        assert!(PatternKind::EnemyPair.find_all(&g).is_empty());
        // hammer bros do not count
        let g = level(&["-h-k------", "##########", "##########"]);
        assert!(PatternKind::EnemyPair.find_all(&g).is_empty());
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = CorpusSpec::named("small").unwrap();
        let (a, b) = (make_synthetic_corpus(&spec, 9).unwrap(), make_synthetic_corpus(&spec, 9).unwrap());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_ne!(a, make_synthetic_corpus(&spec, 10).unwrap());
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = make_synthetic_corpus(&CorpusSpec::named("small").unwrap(), 2).unwrap();
        c.write(dir.path()).unwrap();
        assert_eq!(Corpus::read(dir.path()).unwrap(), c);
    }
}
