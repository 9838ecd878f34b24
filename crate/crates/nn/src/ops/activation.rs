use crate::error::Result;
use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape(), data).expect("shape preserved")
}

/// Gradient of [`relu`] given its output `y` (zero at and below the kink).
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    dy.expect_shape("relu_backward", y.shape())?;
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(y.shape(), data)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| logistic(v)).collect();
    Tensor::new(x.shape(), data).expect("shape preserved")
}

/// Kept strictly inside `(0, 1)`: for `|v|` beyond ~37 the exact value
/// rounds to 0 or 1 in f64.
fn logistic(v: f64) -> f64 {
    let s = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Gradient of [`sigmoid`] given its output `y`.
pub fn sigmoid_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    dy.expect_shape("sigmoid_backward", y.shape())?;
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&s, &g)| g * s * (1.0 - s))
        .collect();
    Tensor::new(y.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::new(&[2], vec![-3.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
    }

    #[test]
    fn sigmoid_stays_in_open_interval_for_moderate_inputs() {
        let x = Tensor::new(&[3], vec![-30.0, 0.0, 30.0]).unwrap();
        let y = sigmoid(&x);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(y.data()[1], 0.5);
    }
}
