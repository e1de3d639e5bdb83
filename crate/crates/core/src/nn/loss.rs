use super::{NnError, Tensor};
use crate::scalar::Scalar;

fn check<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch { expected: pred.shape().to_vec(), found: target.shape().to_vec() });
    }
    Ok(())
}

/// Mean squared error over every element, accumulated in `f64`.
pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64, NnError> {
    check(pred, target)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p.as_f64() - t.as_f64();
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// d(mse)/d(pred).
pub fn mse_grad<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    check(pred, target)?;
    let scale = T::from_f64_lossy(2.0 / pred.len().max(1) as f64);
    let data = pred.data().iter().zip(target.data()).map(|(p, t)| (*p - *t) * scale).collect();
    Tensor::from_vec(pred.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let ones = Tensor::<f64>::full(&[2, 3], 1.0);
        let zeros = Tensor::<f64>::zeros(&[2, 3]);
        assert_eq!(mse(&ones, &ones).unwrap(), 0.0);
        assert_eq!(mse(&ones, &zeros).unwrap(), 1.0);
        let p = Tensor::from_vec(&[2], vec![0.0f64, 1.0]).unwrap();
        let t = Tensor::from_vec(&[2], vec![1.0f64, 1.0]).unwrap();
        assert_eq!(mse(&p, &t).unwrap(), 0.5);
        assert!(mse(&p, &ones).is_err());
        assert!(mse_grad(&ones, &ones).unwrap().data().iter().all(|g| *g == 0.0));
    }
}
