use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::LevelError;

/// Number of tile classes in the registry; the depth of a one-hot chunk.
pub const NUM_TILE_CLASSES: usize = 30;

/// Glyph reserved for an empty cell.
pub const EMPTY_GLYPH: char = '-';

const BUILTIN_REGISTRY: &str = include_str!("../../data/tiles.v1.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileClass {
    pub id: u8,
    pub glyph: char,
    pub name: String,
}

/// The 30-class tile alphabet. Ids are a bijection onto `0..30`.
#[derive(Debug, Clone)]
pub struct TileRegistry {
    classes: Vec<TileClass>,
    by_glyph: HashMap<char, u8>,
}

impl TileRegistry {
    /// Parse a registry from its JSON list form and check its invariants.
    pub fn from_json(text: &str) -> Result<Self, LevelError> {
        let mut classes: Vec<TileClass> =
            serde_json::from_str(text).map_err(|e| LevelError::Registry(e.to_string()))?;
        if classes.len() != NUM_TILE_CLASSES {
            return Err(LevelError::Registry(format!(
                "expected {NUM_TILE_CLASSES} classes, found {}",
                classes.len()
            )));
        }
        classes.sort_by_key(|c| c.id);
        let mut by_glyph = HashMap::new();
        for (i, class) in classes.iter().enumerate() {
            if class.id as usize != i {
                return Err(LevelError::Registry(format!("ids are not 0..{NUM_TILE_CLASSES}")));
            }
            if class.glyph == EMPTY_GLYPH || class.glyph.is_whitespace() || class.glyph.is_control() {
                return Err(LevelError::Registry(format!("invalid glyph {:?}", class.glyph)));
            }
            if by_glyph.insert(class.glyph, class.id).is_some() {
                return Err(LevelError::Registry(format!("duplicate glyph {:?}", class.glyph)));
            }
        }
        Ok(Self { classes, by_glyph })
    }

    /// The registry shipped with the crate.
    pub fn builtin() -> &'static TileRegistry {
        static REGISTRY: OnceLock<TileRegistry> = OnceLock::new();
        REGISTRY.get_or_init(|| {
            TileRegistry::from_json(BUILTIN_REGISTRY).expect("builtin tile registry is valid")
        })
    }

    pub fn builtin_json() -> &'static str {
        BUILTIN_REGISTRY
    }

    pub fn classes(&self) -> &[TileClass] {
        &self.classes
    }

    pub fn class_of(&self, glyph: char) -> Option<u8> {
        self.by_glyph.get(&glyph).copied()
    }

    pub fn glyph(&self, id: u8) -> char {
        self.classes[id as usize].glyph
    }

    pub fn by_name(&self, name: &str) -> Option<u8> {
        self.classes.iter().find(|c| c.name == name).map(|c| c.id)
    }
}

/// Well-known ids in the builtin registry, used by the synthetic corpus
/// and by tests.
pub mod ids {
    pub const GROUND: u8 = 0;
    pub const BRICK: u8 = 1;
    pub const QUESTION_COIN: u8 = 2;
    pub const QUESTION_POWERUP: u8 = 3;
    pub const HIDDEN_BLOCK: u8 = 4;
    pub const USED_BLOCK: u8 = 5;
    pub const SOLID_BLOCK: u8 = 6;
    pub const PIPE_TOP_LEFT: u8 = 7;
    pub const PIPE_TOP_RIGHT: u8 = 8;
    pub const PIPE_BODY_LEFT: u8 = 9;
    pub const PIPE_BODY_RIGHT: u8 = 10;
    pub const COIN: u8 = 11;
    pub const GOOMBA: u8 = 12;
    pub const KOOPA: u8 = 13;
    pub const PIRANHA_PLANT: u8 = 14;
    pub const HAMMER_BRO: u8 = 15;
    pub const BULLET_BILL: u8 = 16;
    pub const CANNON_TOP: u8 = 17;
    pub const CANNON_BASE: u8 = 18;
    pub const PLATFORM: u8 = 19;
    pub const BUSH_LEFT: u8 = 20;
    pub const BUSH_MIDDLE: u8 = 21;
    pub const BUSH_RIGHT: u8 = 22;
    pub const CLOUD_LEFT: u8 = 23;
    pub const CLOUD_MIDDLE: u8 = 24;
    pub const CLOUD_RIGHT: u8 = 25;
    pub const HILL_TOP: u8 = 26;
    pub const HILL_SIDE: u8 = 27;
    pub const FLAGPOLE_TOP: u8 = 28;
    pub const FLAGPOLE_POLE: u8 = 29;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_registry_has_thirty_unique_classes() {
        let reg = TileRegistry::builtin();
        assert_eq!(reg.classes().len(), NUM_TILE_CLASSES);
        for (i, c) in reg.classes().iter().enumerate() {
            assert_eq!(c.id as usize, i);
            assert_eq!(reg.class_of(c.glyph), Some(c.id));
            assert_ne!(c.glyph, EMPTY_GLYPH);
        }
        assert_eq!(reg.by_name("goomba"), Some(ids::GOOMBA));
        assert_eq!(reg.by_name("flagpole-pole"), Some(ids::FLAGPOLE_POLE));
    }

    #[test]
    fn duplicate_glyph_is_rejected() {
        let mut list: Vec<TileClass> = serde_json::from_str(TileRegistry::builtin_json()).unwrap();
        list[1].glyph = list[0].glyph;
        let err = TileRegistry::from_json(&serde_json::to_string(&list).unwrap()).unwrap_err();
        assert!(matches!(err, LevelError::Registry(_)));
    }

    #[test]
    fn empty_glyph_cannot_be_registered() {
        let mut list: Vec<TileClass> = serde_json::from_str(TileRegistry::builtin_json()).unwrap();
        list[3].glyph = EMPTY_GLYPH;
        assert!(TileRegistry::from_json(&serde_json::to_string(&list).unwrap()).is_err());
    }
}
