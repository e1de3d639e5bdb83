use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tiles::{TileRegistry, EMPTY_GLYPH, NUM_TILE_CLASSES};
use super::{LevelError, CHUNK_SIZE};

/// A rectangular tile level. Cells are stored row-major, top row first;
/// `None` is an empty tile.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelGrid {
    width: usize,
    height: usize,
    cells: Vec<Option<u8>>,
}

impl LevelGrid {
    /// An all-empty grid. Both dimensions must be at least 8.
    pub fn empty(width: usize, height: usize) -> Result<Self, LevelError> {
        Self::from_cells(width, height, vec![None; width * height])
    }

    pub fn from_cells(width: usize, height: usize, cells: Vec<Option<u8>>) -> Result<Self, LevelError> {
        if width < CHUNK_SIZE || height < CHUNK_SIZE {
            return Err(LevelError::TooSmall { width, height });
        }
        if cells.len() != width * height {
            return Err(LevelError::RaggedRows { row: cells.len() / width.max(1) });
        }
        if let Some(pos) = cells.iter().position(|c| matches!(c, Some(id) if *id as usize >= NUM_TILE_CLASSES)) {
            return Err(LevelError::UnknownClass { x: pos % width, y: pos / width });
        }
        Ok(Self { width, height, cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Option<u8> {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, tile: Option<u8>) {
        debug_assert!(tile.is_none_or(|t| (t as usize) < NUM_TILE_CLASSES));
        self.cells[y * self.width + x] = tile;
    }

    pub fn cells(&self) -> &[Option<u8>] {
        &self.cells
    }

    /// Copy of the `w×h` window at `(x, y)`. Used for 8×8 views.
    pub fn window(&self, x: usize, y: usize, w: usize, h: usize) -> Result<LevelGrid, LevelError> {
        if x + w > self.width || y + h > self.height {
            return Err(LevelError::OutOfBounds { x, y });
        }
        let mut cells = Vec::with_capacity(w * h);
        for row in y..y + h {
            cells.extend_from_slice(&self.cells[row * self.width + x..row * self.width + x + w]);
        }
        LevelGrid::from_cells(w, h, cells)
    }

    /// Overwrite the region starting at `(x, y)` with `patch`.
    pub fn paste(&mut self, x: usize, y: usize, patch: &LevelGrid) -> Result<(), LevelError> {
        if x + patch.width > self.width || y + patch.height > self.height {
            return Err(LevelError::OutOfBounds { x, y });
        }
        for row in 0..patch.height {
            for col in 0..patch.width {
                self.set(x + col, y + row, patch.get(col, row));
            }
        }
        Ok(())
    }

    /// Parse the text level format against the builtin registry.
    pub fn parse(text: &str) -> Result<Self, LevelError> {
        Self::parse_with(text, TileRegistry::builtin())
    }

    pub fn parse_with(text: &str, registry: &TileRegistry) -> Result<Self, LevelError> {
        let rows: Vec<&str> = text
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .collect();
        let rows: &[&str] = match rows.iter().rposition(|r| !r.is_empty()) {
            Some(last) => &rows[..=last],
            None => &[],
        };
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut cells = Vec::with_capacity(width * rows.len());
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(LevelError::RaggedRows { row: y });
            }
            for (x, ch) in row.chars().enumerate() {
                if ch == EMPTY_GLYPH {
                    cells.push(None);
                } else {
                    let id = registry.class_of(ch).ok_or(LevelError::UnknownGlyph { x, y, glyph: ch })?;
                    cells.push(Some(id));
                }
            }
        }
        Self::from_cells(width, rows.len(), cells)
    }

    /// Render in the text level format: one line per row, newline-terminated.
    pub fn to_text(&self) -> String {
        self.to_text_with(TileRegistry::builtin())
    }

    pub fn to_text_with(&self, registry: &TileRegistry) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in self.cells.chunks(self.width) {
            out.extend(row.iter().map(|c| c.map_or(EMPTY_GLYPH, |id| registry.glyph(id))));
            out.push('\n');
        }
        out
    }

    pub fn rows(&self) -> Vec<String> {
        self.to_text().lines().map(str::to_owned).collect()
    }

    /// Hex SHA-256 of the text form; identical content gives identical hashes.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

impl fmt::Display for LevelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// A grid with the id annotations use to refer to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub id: String,
    pub grid: LevelGrid,
}

impl Level {
    pub fn new(id: impl Into<String>, grid: LevelGrid) -> Self {
        Self { id: id.into(), grid }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::level::tiles::ids;
    use proptest::prelude::*;

    #[test]
    fn all_empty_rows_parse_to_empty_grid() {
        let text = "--------\n".repeat(8);
        let grid = LevelGrid::parse(&text).unwrap();
        assert_eq!((grid.width(), grid.height()), (8, 8));
        assert!(grid.cells().iter().all(Option::is_none));
    }

    #[test]
    fn glyph_maps_to_cell() {
        let reg = TileRegistry::builtin();
        let glyph = reg.glyph(5);
        let mut rows = vec!["--------".to_string(); 8];
        rows[2] = format!("---{glyph}----");
        let grid = LevelGrid::parse(&rows.join("\n")).unwrap();
        assert_eq!(grid.get(3, 2), Some(5));
        assert_eq!(grid.get(2, 2), None);
    }

    #[test]
    fn unknown_glyph_is_reported_with_position() {
        let mut rows = vec!["--------".to_string(); 8];
        rows[4] = "-----~--".into();
        let err = LevelGrid::parse(&rows.join("\n")).unwrap_err();
        assert_eq!(err, LevelError::UnknownGlyph { x: 5, y: 4, glyph: '~' });
    }

    #[test]
    fn ragged_and_small_inputs_are_rejected() {
        let mut rows = vec!["--------".to_string(); 8];
        rows[6] = "-------".into();
        assert_eq!(LevelGrid::parse(&rows.join("\n")).unwrap_err(), LevelError::RaggedRows { row: 6 });
        let small = "-------\n".repeat(8);
        assert!(matches!(LevelGrid::parse(&small), Err(LevelError::TooSmall { .. })));
        assert!(matches!(LevelGrid::parse(""), Err(LevelError::TooSmall { .. })));
    }

    #[test]
    fn crlf_and_trailing_blank_lines_are_accepted() {
        let text = "########\r\n".repeat(8) + "\n\n";
        let grid = LevelGrid::parse(&text).unwrap();
        assert_eq!(grid.height(), 8);
        assert!(grid.cells().iter().all(|c| *c == Some(ids::GROUND)));
    }

    #[test]
    fn window_and_paste_are_inverse() {
        let mut grid = LevelGrid::empty(12, 10).unwrap();
        grid.set(5, 5, Some(ids::COIN));
        let win = grid.window(4, 2, 8, 8).unwrap();
        assert_eq!(win.get(1, 3), Some(ids::COIN));
        let mut other = LevelGrid::empty(12, 10).unwrap();
        other.paste(4, 2, &win).unwrap();
        assert_eq!(other, grid);
        assert!(grid.window(5, 3, 8, 8).is_err());
    }

    fn arb_grid() -> impl Strategy<Value = LevelGrid> {
        (8usize..20, 8usize..16).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::option::of(0u8..30), w * h)
                .prop_map(move |cells| LevelGrid::from_cells(w, h, cells).unwrap())
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(grid in arb_grid()) {
            let back = LevelGrid::parse(&grid.to_text()).unwrap();
            prop_assert_eq!(back, grid);
        }
    }
}
