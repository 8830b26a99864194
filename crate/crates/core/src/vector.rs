//! Small dense-vector helpers shared across modules.

/// Dot product accumulated in `f64`.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn l2_norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

/// Scale `v` to unit length. Returns `false` (leaving `v` untouched) when the
/// norm is zero or not finite.
pub fn normalize(v: &mut [f32]) -> bool {
    let norm = l2_norm(v);
    if !(norm.is_finite() && norm > 0.0) {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    true
}

/// Cosine similarity; `None` if either side has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_rejects_zero() {
        let mut v = vec![0.0f32; 3];
        assert!(!normalize(&mut v));
        assert_eq!(v, vec![0.0; 3]);
    }

    #[test]
    fn cosine_of_orthogonal_is_zero() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]), Some(0.0));
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 2.0]), None);
    }
}
