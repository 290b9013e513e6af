use rand::Rng as _;

use crate::numeric::Tensor;
use crate::rng::Rng;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`, times `scale`.
pub fn glorot(rng: &mut Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize, scale: f64) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() * scale;
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape, data).expect("init shape")
}

/// Extra factor on covariate weights so they start as a mild perturbation.
pub fn covariate_scale(d: usize) -> f64 {
    1.0 / (d.max(1) as f64).sqrt()
}
