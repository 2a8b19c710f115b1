use graphcl_autodiff::{Real, Tensor};
use rand::Rng;

/// Uniform in `±√(6 / (fan_in + fan_out))`.
pub fn glorot<S: Real>(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<S> {
    glorot_shaped(vec![fan_in, fan_out], fan_in, fan_out, rng)
}

pub fn glorot_shaped<S: Real>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| S::of(rng.gen_range(-limit..=limit))).collect();
    Tensor::new(shape, data).expect("length matches shape")
}
