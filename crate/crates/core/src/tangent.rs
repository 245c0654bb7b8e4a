//! Tangent-space projections from local SVD of neighbor differences.
//!
//! The second-order estimator regresses the curvature term out of the
//! difference vectors before taking the SVD. Hessian components are indexed by
//! the upper triangle `(a, b)`, `a ≤ b`, enumerated row-major:
//! `(0,0), (0,1), …, (0,d−1), (1,1), …`. Diagonal entries enter the design
//! matrix with coefficient 1 and off-diagonal ones with coefficient 2.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{NeighborTable, PointCloud};
use crate::linalg::{leading_projector, thin_svd};

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentOrder {
    First,
    Second,
}

impl std::str::FromStr for TangentOrder {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "1" | "first" => Ok(TangentOrder::First),
            "2" | "second" => Ok(TangentOrder::Second),
            other => Err(format!("unknown tangent order `{other}`")),
        }
    }
}

/// Per-point tangent projections `P̂_i`, stored as an `N × n × n` array.
#[derive(Debug, Clone)]
pub struct ProjectionField {
    pub matrices: Array3<f64>,
    pub order: TangentOrder,
    /// Points where the second-order regression was ill-conditioned and the
    /// first-order projection was used instead.
    pub fallback: Vec<bool>,
}

impl ProjectionField {
    pub fn len(&self) -> usize {
        self.matrices.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrices.len_of(Axis(1))
    }

    pub fn get(&self, i: usize) -> ArrayView2<'_, f64> {
        self.matrices.index_axis(Axis(0), i)
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }

    /// Frobenius distance to a reference projection at every point.
    pub fn errors_against<F>(&self, exact: F) -> Vec<f64>
    where
        F: Fn(usize) -> Array2<f64>,
    {
        (0..self.len())
            .map(|i| {
                let e = exact(i);
                self.get(i)
                    .iter()
                    .zip(e.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// One line per point: `index,fallback[,error]`.
    pub fn write_diagnostics(&self, path: &Path, errors: Option<&[f64]>) -> Result<()> {
        let mut out = String::from(if errors.is_some() {
            "index,fallback,projection_error\n"
        } else {
            "index,fallback\n"
        });
        for i in 0..self.len() {
            write!(out, "{i},{}", self.fallback[i] as u8).unwrap();
            if let Some(e) = errors {
                write!(out, ",{:.16e}", e[i]).unwrap();
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn check_inputs(cloud: &PointCloud, neighbors: &NeighborTable, d: usize, min_k: usize) -> Result<()> {
    if neighbors.len() != cloud.len() {
        return Err(Error::DimensionMismatch(format!(
            "neighbor table has {} rows for {} points",
            neighbors.len(),
            cloud.len()
        )));
    }
    if d == 0 || d >= cloud.ambient_dim() {
        return Err(Error::InvalidParameter(format!(
            "intrinsic dimension {d} must lie in 1..{}",
            cloud.ambient_dim()
        )));
    }
    let usable = neighbors.k() - neighbors.include_self as usize;
    if usable < min_k {
        return Err(Error::InvalidParameter(format!(
            "{usable} neighbors per point, need more than {}",
            min_k - 1
        )));
    }
    Ok(())
}

/// `n × k` matrix of difference vectors `y_j − x_i`, self excluded.
fn difference_matrix(cloud: &PointCloud, neighbors: &NeighborTable, i: usize) -> Array2<f64> {
    let x = cloud.point(i);
    let cols: Vec<usize> = neighbors.row(i).iter().copied().filter(|&j| j != i).collect();
    Array2::from_shape_fn((cloud.ambient_dim(), cols.len()), |(m, c)| {
        cloud.point(cols[c])[m] - x[m]
    })
}

/// Leading left singular vectors of `diffs` after checking that `d` of them
/// are numerically nonzero.
fn leading_frame(diffs: ArrayView2<f64>, d: usize, index: usize) -> Result<Array2<f64>> {
    let (u, sv, _) = thin_svd(diffs)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&v| v > RANK_TOLERANCE * smax).count();
    if smax == 0.0 || rank < d {
        return Err(Error::DegenerateNeighborhood { index, rank, dim: d });
    }
    Ok(u.slice(s![.., ..d]).to_owned())
}

fn assemble(
    n_points: usize,
    n: usize,
    order: TangentOrder,
    per_point: Vec<Result<(Array2<f64>, bool)>>,
) -> Result<ProjectionField> {
    let mut matrices = Array3::zeros((n_points, n, n));
    let mut fallback = vec![false; n_points];
    for (i, r) in per_point.into_iter().enumerate() {
        let (p, fb) = r?;
        matrices.index_axis_mut(Axis(0), i).assign(&p);
        fallback[i] = fb;
    }
    Ok(ProjectionField {
        matrices,
        order,
        fallback,
    })
}

pub fn estimate_tangent_first_order(
    cloud: &PointCloud,
    neighbors: &NeighborTable,
    d: usize,
) -> Result<ProjectionField> {
    check_inputs(cloud, neighbors, d, d + 1)?;
    let per_point: Vec<_> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let diffs = difference_matrix(cloud, neighbors, i);
            let frame = leading_frame(diffs.view(), d, i)?;
            Ok((leading_projector(frame.view(), d), false))
        })
        .collect();
    assemble(cloud.len(), cloud.ambient_dim(), TangentOrder::First, per_point)
}

/// Row-major upper-triangular index pairs of a `d × d` symmetric matrix.
pub fn hessian_index_map(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect()
}

pub fn estimate_tangent_second_order(
    cloud: &PointCloud,
    neighbors: &NeighborTable,
    d: usize,
) -> Result<ProjectionField> {
    let n_hess = d * (d + 1) / 2;
    check_inputs(cloud, neighbors, d, n_hess.max(d) + 1)?;
    let pairs = hessian_index_map(d);
    let per_point: Vec<_> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let diffs = difference_matrix(cloud, neighbors, i);
            let frame = leading_frame(diffs.view(), d, i)?;
            let k = diffs.ncols();
            // Tangential coordinates, k × d.
            let coords = diffs.t().dot(&frame);
            let design = Array2::from_shape_fn((k, n_hess), |(row, p)| {
                let (a, b) = pairs[p];
                let w = if a == b { 1.0 } else { 2.0 };
                w * coords[[row, a]] * coords[[row, b]]
            });
            let (u, sv, vt) = thin_svd(design.view())?;
            let smax = sv.first().copied().unwrap_or(0.0);
            if smax == 0.0 || sv.iter().any(|&v| v <= RANK_TOLERANCE * smax) {
                log::debug!("point {i}: curvature regression rank deficient, using first order");
                return Ok((leading_projector(frame.view(), d), true));
            }
            // Least-squares Hessian estimate Y = V Σ⁻¹ Uᵀ (2 Dᵀ), D_h × n.
            let mut proj = u.t().dot(&diffs.t());
            for (mut row, &v) in proj.rows_mut().into_iter().zip(sv.iter()) {
                row *= 2.0 / v;
            }
            let hess = vt.t().dot(&proj);
            // 2R̃ᵀ = 2D − (C̃ Ỹ)ᵀ
            let residual = &diffs * 2.0 - &design.dot(&hess).t();
            let corrected = leading_frame(residual.view(), d, i)?;
            Ok((leading_projector(corrected.view(), d), false))
        })
        .collect();
    assemble(cloud.len(), cloud.ambient_dim(), TangentOrder::Second, per_point)
}

pub fn estimate_tangent(
    cloud: &PointCloud,
    neighbors: &NeighborTable,
    d: usize,
    order: TangentOrder,
) -> Result<ProjectionField> {
    match order {
        TangentOrder::First => estimate_tangent_first_order(cloud, neighbors, d),
        TangentOrder::Second => estimate_tangent_second_order(cloud, neighbors, d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{knn, sample_ellipse};
    use ndarray::array;

    #[test]
    fn collinear_points_give_exact_line_projection() {
        let cloud = PointCloud::new(array![[0.0, 0.0], [1.0, 2.0], [3.0, 6.0]], 1).unwrap();
        let nb = knn(&cloud, 2, false).unwrap();
        let field = estimate_tangent_first_order(&cloud, &nb, 1).unwrap();
        let exact = array![[0.2, 0.4], [0.4, 0.8]];
        for i in 0..3 {
            for (a, b) in field.get(i).iter().zip(exact.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn index_map_is_row_major() {
        assert_eq!(hessian_index_map(1), vec![(0, 0)]);
        assert_eq!(hessian_index_map(2), vec![(0, 0), (0, 1), (1, 1)]);
        assert_eq!(hessian_index_map(3).len(), 6);
        assert_eq!(hessian_index_map(3)[3], (1, 1));
    }

    #[test]
    fn too_few_neighbors_rejected() {
        let s = sample_ellipse(50, 2.0, 1).unwrap();
        let nb = knn(&s.cloud, 1, false).unwrap();
        assert!(estimate_tangent_first_order(&s.cloud, &nb, 1).is_err());
        assert!(estimate_tangent_second_order(&s.cloud, &nb, 1).is_err());
    }

    #[test]
    fn second_order_beats_first_order_on_circle() {
        let s = sample_ellipse(1600, 1.0, 4).unwrap();
        let nb = knn(&s.cloud, 40, false).unwrap();
        let f1 = estimate_tangent_first_order(&s.cloud, &nb, 1).unwrap();
        let f2 = estimate_tangent_second_order(&s.cloud, &nb, 1).unwrap();
        let e1 = f1.errors_against(|i| s.tangent_projection(i));
        let e2 = f2.errors_against(|i| s.tangent_projection(i));
        let better = e1.iter().zip(&e2).filter(|(a, b)| b < a).count();
        assert!(better as f64 >= 0.95 * 1600.0, "{better}");
        assert_eq!(f2.fallback_count(), 0);
    }
}
