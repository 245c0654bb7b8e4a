//! Error metrics and rate fitting.

use manifold_pde::{Error, Result};
use ndarray::ArrayView1;

/// `max_i |u_true_i − u_est_i|`.
pub fn linf_error(u_true: ArrayView1<f64>, u_est: ArrayView1<f64>) -> Result<f64> {
    if u_true.len() != u_est.len() {
        return Err(Error::DimensionMismatch(format!(
            "truth has {} entries, estimate {}",
            u_true.len(),
            u_est.len()
        )));
    }
    Ok(u_true
        .iter()
        .zip(u_est)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `max_i |u_est_i − u_ref_i| / |u_ref_i|` over the nonzero reference entries.
pub fn relative_difference(u_ref: ArrayView1<f64>, u_est: ArrayView1<f64>) -> Result<f64> {
    if u_ref.len() != u_est.len() {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} entries, estimate {}",
            u_ref.len(),
            u_est.len()
        )));
    }
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for (r, e) in u_ref.iter().zip(u_est) {
        if *r == 0.0 {
            skipped += 1;
            continue;
        }
        worst = worst.max((e - r).abs() / r.abs());
    }
    if skipped == u_ref.len() {
        return Err(Error::InvalidParameter("reference vector is identically zero".into()));
    }
    if skipped > 0 {
        log::warn!("relative difference skipped {skipped} zero reference entries");
    }
    Ok(worst)
}

/// Least-squares slope of `log(err)` against `log(n)`. `None` with fewer than
/// two usable points.
pub fn fit_slope(n: &[f64], err: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = n
        .iter()
        .zip(err)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 || pts.len() != n.len() {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
