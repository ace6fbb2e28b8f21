//! Structural similarity between panoramic signatures.
//!
//! Windowed SSIM over the circular depth profile, scaled by the fraction
//! of rays whose appearance labels agree.

use crate::error::{NavError, Result};
use crate::world::ObservationSignature;

const C1: f64 = 1e-4;
const C2: f64 = 9e-4;
const WINDOW: usize = 5;

/// Similarity in `[0, 1]`; symmetric, and exactly 1 for identical inputs.
pub fn similarity(a: &ObservationSignature, b: &ObservationSignature) -> Result<f64> {
    if a.depth.len() != b.depth.len() || a.appearance.len() != b.appearance.len() {
        return Err(NavError::LengthMismatch(a.depth.len(), b.depth.len()));
    }
    if a.depth.len() != a.appearance.len() {
        return Err(NavError::LengthMismatch(a.depth.len(), a.appearance.len()));
    }
    let n = a.depth.len();
    if n == 0 {
        return Ok(1.0);
    }
    if a == b {
        return Ok(1.0);
    }
    let agree = a
        .appearance
        .iter()
        .zip(&b.appearance)
        .filter(|(x, y)| x == y)
        .count() as f64
        / n as f64;
    if agree == 0.0 {
        return Ok(0.0);
    }
    Ok((ssim_1d(&a.depth, &b.depth) * agree).clamp(0.0, 1.0))
}

/// Mean structural similarity over circular windows of the two profiles.
pub fn ssim_1d(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let w = WINDOW.min(n);
    let half = w / 2;
    let mut total = 0.0;
    for center in 0..n {
        let idx = |k: usize| (center + n + k - half) % n;
        let (mut ma, mut mb) = (0.0, 0.0);
        for k in 0..w {
            ma += a[idx(k)];
            mb += b[idx(k)];
        }
        ma /= w as f64;
        mb /= w as f64;
        let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
        for k in 0..w {
            let da = a[idx(k)] - ma;
            let db = b[idx(k)] - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
        }
        va /= w as f64;
        vb /= w as f64;
        cov /= w as f64;
        let num = (2.0 * ma * mb + C1) * (2.0 * cov + C2);
        let den = (ma * ma + mb * mb + C1) * (va + vb + C2);
        total += num / den;
    }
    total / n as f64
}
