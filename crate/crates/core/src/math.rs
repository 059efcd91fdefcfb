//! Transcendental functions routed through `libm` so that every platform
//! computes bit-identical model outputs.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Softmax over `logits`, skipping indices where `mask` is true (they get 0).
pub fn masked_softmax(logits: &[f64], masked: impl Fn(usize) -> bool) -> Vec<f64> {
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| !masked(*i))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &v)| if masked(i) { 0.0 } else { exp(v - max) })
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Euclidean distance between two equal-length vectors.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_normalised_and_respects_mask() {
        let p = masked_softmax(&[1.0, 2.0, 3.0, 1000.0], |i| i == 3);
        assert_eq!(p[3], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[2] > p[1] && p[1] > p[0]);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for x in [-30.0, -2.5, 0.0, 0.7, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
