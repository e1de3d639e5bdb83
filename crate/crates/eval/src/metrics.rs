use num_traits::Float;
use patterncraft_core::level::{Chunk, CHUNK_FEATURES};
use serde::{Deserialize, Serialize};

use crate::EvalError;

/// Count of features whose 0.5-binarized prediction disagrees with the
/// binary ground truth; at most 1920.
pub fn structure_error_dense<T: Float>(pred: &[T], truth: &[T]) -> Result<usize, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::ShapeMismatch { expected: truth.len(), found: pred.len() });
    }
    let half = T::from(0.5).expect("representable");
    let mut wrong = 0;
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        if *t != T::zero() && *t != T::one() {
            return Err(EvalError::NonBinaryTruth(i));
        }
        if (*p >= half) != (*t == T::one()) {
            wrong += 1;
        }
    }
    Ok(wrong)
}

pub fn structure_error<T: Float>(pred: &[T], truth: &Chunk) -> Result<usize, EvalError> {
    if pred.len() != CHUNK_FEATURES {
        return Err(EvalError::ShapeMismatch { expected: CHUNK_FEATURES, found: pred.len() });
    }
    let half = T::from(0.5).expect("representable");
    Ok(pred.iter().enumerate().filter(|(i, p)| (**p >= half) != truth.feature(*i)).count())
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for n ≤ 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use patterncraft_core::level::{LevelGrid, NUM_TILE_CLASSES};
    use proptest::prelude::*;

    fn chunk_with(k: usize) -> Chunk {
        let mut g = LevelGrid::empty(8, 8).unwrap();
        for i in 0..k {
            g.set(i % 8, i / 8, Some((i % NUM_TILE_CLASSES) as u8));
        }
        Chunk::from_grid(&g).unwrap()
    }

    #[test]
    fn hand_cases() {
        let truth = chunk_with(13);
        let dense: Vec<f64> = truth.to_dense();
        assert_eq!(structure_error(&dense, &truth).unwrap(), 0);
        assert_eq!(structure_error(&vec![0.0f32; 1920], &truth).unwrap(), 13);
        assert_eq!(structure_error(&vec![1.0f64; 1920], &chunk_with(0)).unwrap(), 1920);
        assert_eq!(structure_error_dense(&[0.49, 0.5, 0.2], &[1.0, 1.0, 0.0]).unwrap(), 1);
        assert!(matches!(structure_error(&[0.0f32; 5], &truth), Err(EvalError::ShapeMismatch { .. })));
        assert!(matches!(structure_error_dense(&[0.0], &[0.5]), Err(EvalError::NonBinaryTruth(0))));
    }

    #[test]
    fn mean_std_by_hand() {
        let m = MeanStd::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m.mean, 5.0);
        assert!((m.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(MeanStd::of(&[3.0]).std, 0.0);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in proptest::collection::vec(any::<bool>(), 1920), b in proptest::collection::vec(any::<bool>(), 1920)) {
            let fa: Vec<f32> = a.iter().map(|&x| f32::from(u8::from(x))).collect();
            let fb: Vec<f32> = b.iter().map(|&x| f32::from(u8::from(x))).collect();
            let ab = structure_error_dense(&fa, &fb).unwrap();
            prop_assert_eq!(ab, structure_error_dense(&fb, &fa).unwrap());
            prop_assert!(ab <= 1920);
        }
    }
}
