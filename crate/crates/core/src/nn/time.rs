use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// `[t, sin(2π·1·t), cos(2π·1·t), sin(2π·2·t), cos(2π·2·t), …]`, length `k + 1`.
///
/// Frequencies double per pair, so `k` must be even.
pub fn time_features(t: f64, k: usize) -> Result<Vec<f64>> {
    if !k.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "time feature count must be even, got {k}"
        )));
    }
    let mut out = Vec::with_capacity(k + 1);
    out.push(t);
    for j in 0..k / 2 {
        let w = TAU * (1u64 << j) as f64 * t;
        out.push(w.sin());
        out.push(w.cos());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_values() {
        let f = time_features(0.0, 8).unwrap();
        assert_eq!(f.len(), 9);
        assert_eq!(f[0], 0.0);
        for pair in f[1..].chunks(2) {
            assert_eq!(pair, [0.0, 1.0]);
        }
    }

    #[test]
    fn endpoints_differ_only_in_raw_channel() {
        let a = time_features(0.0, 8).unwrap();
        let b = time_features(1.0, 8).unwrap();
        assert_eq!(b[0], 1.0);
        for (x, y) in a[1..].iter().zip(&b[1..]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn k4_matches_formula() {
        let t = 0.3;
        let f = time_features(t, 4).unwrap();
        let pi = std::f64::consts::PI;
        let want = [
            t,
            (2.0 * pi * t).sin(),
            (2.0 * pi * t).cos(),
            (4.0 * pi * t).sin(),
            (4.0 * pi * t).cos(),
        ];
        for (a, b) in f.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn odd_k_rejected() {
        assert!(time_features(0.5, 3).is_err());
    }
}
