use serde::{Deserialize, Serialize};

use super::grid::LevelGrid;
use super::tiles::NUM_TILE_CLASSES;
use super::{LevelError, CHUNK_FEATURES, CHUNK_SIZE};

/// Where a chunk was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkOrigin {
    pub level: String,
    pub x: usize,
    pub y: usize,
}

/// An 8×8 window, one-hot encoded over the 30 tile classes.
///
/// The tensor is stored as the 64 tile ids it encodes, so each
/// `(row, col)` fiber holds at most one 1 by construction. Feature
/// `(r, c, k)` lives at flat index `(r * 8 + c) * 30 + k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chunk {
    tiles: Vec<Option<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<ChunkOrigin>,
}

#[inline]
pub fn feature_index(row: usize, col: usize, class: usize) -> usize {
    (row * CHUNK_SIZE + col) * NUM_TILE_CLASSES + class
}

impl Chunk {
    /// One-hot encode the 8×8 window whose top-left cell is `(x, y)`.
    pub fn encode(grid: &LevelGrid, x: usize, y: usize) -> Result<Self, LevelError> {
        if x + CHUNK_SIZE > grid.width() || y + CHUNK_SIZE > grid.height() {
            return Err(LevelError::OutOfBounds { x, y });
        }
        let mut tiles = Vec::with_capacity(CHUNK_SIZE * CHUNK_SIZE);
        for r in 0..CHUNK_SIZE {
            for c in 0..CHUNK_SIZE {
                tiles.push(grid.get(x + c, y + r));
            }
        }
        Ok(Self { tiles, origin: None })
    }

    pub fn encode_from(level: &super::Level, x: usize, y: usize) -> Result<Self, LevelError> {
        let mut chunk = Self::encode(&level.grid, x, y)?;
        chunk.origin = Some(ChunkOrigin { level: level.id.clone(), x, y });
        Ok(chunk)
    }

    /// Build from an 8×8 grid.
    pub fn from_grid(grid: &LevelGrid) -> Result<Self, LevelError> {
        if grid.width() != CHUNK_SIZE || grid.height() != CHUNK_SIZE {
            return Err(LevelError::OutOfBounds { x: grid.width(), y: grid.height() });
        }
        Self::encode(grid, 0, 0)
    }

    /// Build from a dense binary tensor; rejects fibers with more than one 1.
    pub fn from_dense<T: num_traits::Float>(data: &[T]) -> Result<Self, LevelError> {
        if data.len() != CHUNK_FEATURES {
            return Err(LevelError::FeatureCount(data.len()));
        }
        let mut tiles = Vec::with_capacity(CHUNK_SIZE * CHUNK_SIZE);
        for (cell, fiber) in data.chunks(NUM_TILE_CLASSES).enumerate() {
            let mut hot = None;
            for (k, v) in fiber.iter().enumerate() {
                if *v == T::one() {
                    if hot.is_some() {
                        return Err(LevelError::NotOneHot { cell });
                    }
                    hot = Some(k as u8);
                } else if *v != T::zero() {
                    return Err(LevelError::NotOneHot { cell });
                }
            }
            tiles.push(hot);
        }
        Ok(Self { tiles, origin: None })
    }

    pub fn with_origin(mut self, origin: ChunkOrigin) -> Self {
        self.origin = Some(origin);
        self
    }

    /// Tile at local `(col, row)`.
    pub fn tile(&self, col: usize, row: usize) -> Option<u8> {
        self.tiles[row * CHUNK_SIZE + col]
    }

    pub fn tiles(&self) -> &[Option<u8>] {
        &self.tiles
    }

    #[inline]
    pub fn feature(&self, index: usize) -> bool {
        let cell = index / NUM_TILE_CLASSES;
        self.tiles[cell] == Some((index % NUM_TILE_CLASSES) as u8)
    }

    /// Flat indices of the set features, ascending.
    pub fn active_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.tiles
            .iter()
            .enumerate()
            .filter_map(|(cell, t)| t.map(|k| cell * NUM_TILE_CLASSES + k as usize))
    }

    /// The 1920-value dense tensor in `(row, col, class)` order.
    pub fn to_dense<T: num_traits::Float>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); CHUNK_FEATURES];
        self.write_dense(&mut out);
        out
    }

    pub fn write_dense<T: num_traits::Float>(&self, out: &mut [T]) {
        assert_eq!(out.len(), CHUNK_FEATURES);
        out.iter_mut().for_each(|v| *v = T::zero());
        for idx in self.active_features() {
            out[idx] = T::one();
        }
    }

    pub fn to_grid(&self) -> LevelGrid {
        LevelGrid::from_cells(CHUNK_SIZE, CHUNK_SIZE, self.tiles.clone()).expect("8×8 chunk is a valid grid")
    }

    pub fn non_empty(&self) -> usize {
        self.tiles.iter().filter(|t| t.is_some()).count()
    }
}

/// Turn a real-valued 8×8×30 tensor back into tiles: a cell is empty when
/// its largest class value is below `threshold`, otherwise it takes the
/// argmax class (lowest id on ties).
pub fn decode_chunk<T: num_traits::Float>(data: &[T], threshold: T) -> Result<LevelGrid, LevelError> {
    if data.len() != CHUNK_FEATURES {
        return Err(LevelError::FeatureCount(data.len()));
    }
    let cells = data
        .chunks(NUM_TILE_CLASSES)
        .map(|fiber| {
            let mut best = 0usize;
            for k in 1..fiber.len() {
                if fiber[k] > fiber[best] {
                    best = k;
                }
            }
            if fiber[best] < threshold {
                None
            } else {
                Some(best as u8)
            }
        })
        .collect();
    LevelGrid::from_cells(CHUNK_SIZE, CHUNK_SIZE, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_window_encodes_to_zeros() {
        let grid = LevelGrid::empty(10, 9).unwrap();
        let chunk = Chunk::encode(&grid, 1, 1).unwrap();
        let dense: Vec<f64> = chunk.to_dense();
        assert_eq!(dense.len(), 1920);
        assert!(dense.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_tile_sets_exactly_one_feature() {
        let mut grid = LevelGrid::empty(12, 12).unwrap();
        grid.set(3, 4, Some(7));
        let chunk = Chunk::encode(&grid, 3, 4).unwrap();
        let dense: Vec<f32> = chunk.to_dense();
        assert_eq!(dense.iter().filter(|v| **v == 1.0).count(), 1);
        assert_eq!(dense[feature_index(0, 0, 7)], 1.0);
        assert!(chunk.feature(7));
    }

    #[test]
    fn window_out_of_bounds_is_an_error() {
        let grid = LevelGrid::empty(10, 8).unwrap();
        assert!(Chunk::encode(&grid, 2, 0).is_ok());
        assert_eq!(Chunk::encode(&grid, 3, 0).unwrap_err(), LevelError::OutOfBounds { x: 3, y: 0 });
        assert!(Chunk::encode(&grid, 0, 1).is_err());
    }

    #[test]
    fn decode_thresholds_and_argmax() {
        let mut data = vec![0.0f64; 1920];
        for k in 0..30 {
            data[feature_index(0, 0, k)] = 0.2;
        }
        data[feature_index(0, 1, 3)] = 0.9;
        data[feature_index(0, 1, 4)] = 0.6;
        data[feature_index(0, 2, 5)] = 0.7;
        data[feature_index(0, 2, 9)] = 0.7;
        let grid = decode_chunk(&data, 0.5).unwrap();
        assert_eq!(grid.get(0, 0), None);
        assert_eq!(grid.get(1, 0), Some(3));
        assert_eq!(grid.get(2, 0), Some(5));
    }

    #[test]
    fn from_dense_rejects_two_hot_fiber() {
        let mut data = vec![0.0f32; 1920];
        data[0] = 1.0;
        data[1] = 1.0;
        assert_eq!(Chunk::from_dense(&data).unwrap_err(), LevelError::NotOneHot { cell: 0 });
    }

    fn arb_grid() -> impl Strategy<Value = LevelGrid> {
        (8usize..14, 8usize..14).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::option::of(0u8..30), w * h)
                .prop_map(move |cells| LevelGrid::from_cells(w, h, cells).unwrap())
        })
    }

    proptest! {
        #[test]
        fn encoding_is_one_hot_and_decodes_back(grid in arb_grid(), t in 0.01f64..0.99, sx in 0usize..7, sy in 0usize..7) {
            let x = sx.min(grid.width() - 8);
            let y = sy.min(grid.height() - 8);
            let chunk = Chunk::encode(&grid, x, y).unwrap();
            let dense: Vec<f64> = chunk.to_dense();
            for (cell, fiber) in dense.chunks(30).enumerate() {
                let ones = fiber.iter().filter(|v| **v == 1.0).count();
                prop_assert!(ones <= 1);
                prop_assert_eq!(ones == 0, chunk.tiles()[cell].is_none());
            }
            prop_assert_eq!(Chunk::from_dense(&dense).unwrap(), chunk);
            prop_assert_eq!(decode_chunk(&dense, t).unwrap(), grid.window(x, y, 8, 8).unwrap());
        }
    }
}
