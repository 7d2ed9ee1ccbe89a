use crate::autodiff::Float;

/// Joint L2 norm over every gradient, accumulated in f64.
pub fn global_norm<T: Float>(grads: &[Vec<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Scales all gradients by `max_norm / norm` when the joint norm exceeds
/// `max_norm`. Returns `(norm_before, scale)`.
pub fn clip_global_norm<T: Float>(grads: &mut [Vec<T>], max_norm: f64) -> (f64, f64) {
    let norm = global_norm(grads);
    if norm <= max_norm || norm == 0.0 {
        return (norm, 1.0);
    }
    let scale = max_norm / norm;
    let s = T::of(scale);
    for g in grads.iter_mut() {
        g.iter_mut().for_each(|v| *v *= s);
    }
    (norm, scale)
}
