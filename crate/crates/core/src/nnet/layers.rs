use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// Affine layer `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// Uniform in `+-gain/sqrt(fan_in)` for weights and biases.
    pub fn init(fan_in: usize, fan_out: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let bound = gain / (fan_in as f64).sqrt();
        let mut d = Dense::zeros(fan_in, fan_out);
        d.weight
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-bound..=bound));
        d.bias
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-bound..=bound));
        d
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.weight.dim()
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Returns `(dW, db, dx)` for upstream gradient `dy`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>) -> (Dense, Array2<f64>) {
        let dx = dy.dot(&self.weight.t());
        (self.backward_params(x, dy), dx)
    }

    /// Parameter gradient only; skips the input gradient.
    pub fn backward_params(&self, x: &Array2<f64>, dy: &Array2<f64>) -> Dense {
        // A product with a transposed operand may come back column-major.
        let weight = x.t().dot(dy);
        let weight = if weight.is_standard_layout() {
            weight
        } else {
            weight.as_standard_layout().into_owned()
        };
        Dense {
            weight,
            bias: dy.sum_axis(Axis(0)),
        }
    }

    pub fn params(&self) -> [&[f64]; 2] {
        [
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

pub fn relu(x: Array2<f64>) -> Array2<f64> {
    x.mapv_into(|v| v.max(0.0))
}

/// Zeroes `dy` wherever the forward activation was clamped.
pub fn relu_backward(activated: &Array2<f64>, mut dy: Array2<f64>) -> Array2<f64> {
    ndarray::Zip::from(&mut dy)
        .and(activated)
        .for_each(|d, &a| {
            if a <= 0.0 {
                *d = 0.0;
            }
        });
    dy
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn squared_loss_gradient_matches_closed_form() {
        // L = sum((x W - y)^2), no bias contribution since b = 0.
        let layer = Dense {
            weight: array![[0.5, -1.0], [2.0, 0.25], [-0.75, 1.5]],
            bias: array![0.0, 0.0],
        };
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]];
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let resid = layer.forward(&x) - &y;
        let (grad, _) = layer.backward(&x, &(&resid * 2.0));
        let closed = x.t().dot(&resid) * 2.0;
        assert_eq!(grad.weight, closed);
        assert_eq!(grad.bias, resid.sum_axis(Axis(0)) * 2.0);
    }
}
