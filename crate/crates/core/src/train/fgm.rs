//! Fast Gradient Method perturbation of embedding outputs.

use crate::encoder::Scalar;

/// `emb + ε · g / (‖g‖₂ + 1e-12)` for one example.
pub fn fgm_perturb<T: Scalar>(embeddings: &[T], grad: &[T], epsilon: f64) -> Vec<T> {
    let norm = grad.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    let k = epsilon / (norm + 1e-12);
    embeddings
        .iter()
        .zip(grad)
        .map(|(&e, &g)| e + T::of(k * g.as_f64()))
        .collect()
}
