//! Kernel matrices, regularized inversion and interpolant evaluation.
//!
//! The polyharmonic kernel is always paired with a degree-one polynomial tail
//! `{1, x¹, …, xⁿ}` in ambient coordinates, giving the bordered system
//! `[[Φ, Π], [Πᵀ, 0]]` of size `N + n + 1`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray::parallel::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::kernel::KernelSpec;
use crate::linalg::{symmetric_eigen, EigenSelection, LuFactor};

/// Default pseudo-inverse threshold for global kernels.
pub const DEFAULT_PINV_TAU: f64 = 1e-6;

/// Default ridge for `N` points: `1e-6 / N`.
pub fn default_ridge(n_points: usize) -> f64 {
    1e-6 / n_points as f64
}

#[inline]
fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `K[i, j] = φ(‖a_i − b_j‖)` for two point sets.
pub fn cross_kernel(a: ArrayView2<f64>, b: ArrayView2<f64>, kernel: &KernelSpec<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let ai = a.row(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = kernel.value(distance(ai, b.row(j)));
            }
        });
    out
}

/// Polynomial tail `[1, x¹, …, xⁿ]`, one row per point.
pub fn polynomial_block(points: ArrayView2<f64>) -> Array2<f64> {
    let (m, n) = points.dim();
    let mut p = Array2::ones((m, n + 1));
    p.slice_mut(s![.., 1..]).assign(&points);
    p
}

/// Interpolation matrix of `cloud`, bordered with the polynomial block for
/// the polyharmonic kernel. Exactly symmetric: the lower triangle is mirrored.
pub fn kernel_matrix(cloud: &PointCloud, kernel: &KernelSpec<f64>) -> Array2<f64> {
    let n_points = cloud.len();
    let tail = if kernel.has_polynomial_tail() {
        cloud.ambient_dim() + 1
    } else {
        0
    };
    let size = n_points + tail;
    let pts = cloud.points();
    let mut phi = Array2::zeros((size, size));
    phi.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .take(n_points)
        .for_each(|(i, mut row)| {
            for j in 0..n_points {
                let (a, b) = if j <= i { (i, j) } else { (j, i) };
                row[j] = kernel.value(distance(pts.row(a), pts.row(b)));
            }
        });
    if tail > 0 {
        let p = polynomial_block(pts);
        phi.slice_mut(s![..n_points, n_points..]).assign(&p);
        phi.slice_mut(s![n_points.., ..n_points]).assign(&p.t());
    }
    phi
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InverseMethod {
    /// Eigenvalues with `|λ| ≤ tau` are discarded.
    Pinv { tau: f64 },
    /// Solves with `Φ + σ I` (the ridge touches only the kernel block of a
    /// bordered system).
    Ridge { sigma: f64 },
}

impl Default for InverseMethod {
    fn default() -> Self {
        InverseMethod::Pinv {
            tau: DEFAULT_PINV_TAU,
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    /// `Φ⁺ = V diag(1/λ) Vᵀ` over the retained pairs.
    Spectral { values: Array1<f64>, vectors: Array2<f64> },
    Lu(LuFactor),
}

/// A regularized inverse of a symmetric (possibly bordered) kernel matrix.
#[derive(Debug, Clone)]
pub struct RegularizedInverse {
    method: InverseMethod,
    size: usize,
    /// Size of the kernel block; the remainder is the polynomial border.
    kernel_size: usize,
    repr: Repr,
}

/// Regularized inverse of a symmetric matrix. `kernel_size` marks where the
/// kernel block ends (`matrix.nrows()` unless bordered).
pub fn regularized_inverse(
    matrix: ArrayView2<f64>,
    kernel_size: usize,
    method: InverseMethod,
) -> Result<RegularizedInverse> {
    let size = matrix.nrows();
    if matrix.ncols() != size || kernel_size > size {
        return Err(Error::DimensionMismatch(format!(
            "regularized inverse of a {}x{} matrix with kernel block {kernel_size}",
            size,
            matrix.ncols()
        )));
    }
    let repr = match method {
        InverseMethod::Pinv { tau } => {
            if !(tau >= 0.0) {
                return Err(Error::InvalidParameter(format!("Pinv threshold {tau} must be >= 0")));
            }
            let eig = symmetric_eigen(matrix, EigenSelection::MagnitudeAbove(tau))?;
            Repr::Spectral {
                values: eig.values,
                vectors: eig.vectors,
            }
        }
        InverseMethod::Ridge { sigma } => {
            if !(sigma > 0.0) {
                return Err(Error::InvalidParameter(format!("ridge {sigma} must be > 0")));
            }
            let mut a = matrix.to_owned();
            for i in 0..kernel_size {
                a[[i, i]] += sigma;
            }
            Repr::Lu(LuFactor::new(a.view())?)
        }
    };
    Ok(RegularizedInverse {
        method,
        size,
        kernel_size,
        repr,
    })
}

impl RegularizedInverse {
    /// Convenience constructor from a cloud and kernel.
    pub fn for_cloud(cloud: &PointCloud, kernel: &KernelSpec<f64>, method: InverseMethod) -> Result<Self> {
        let phi = kernel_matrix(cloud, kernel);
        regularized_inverse(phi.view(), cloud.len(), method)
    }

    pub fn method(&self) -> InverseMethod {
        self.method
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    /// Number of retained eigenpairs (Pinv only).
    pub fn effective_rank(&self) -> Option<usize> {
        match &self.repr {
            Repr::Spectral { values, .. } => Some(values.len()),
            Repr::Lu(_) => None,
        }
    }

    /// Retained eigenvalues and eigenvectors (Pinv only).
    pub fn spectral_factors(&self) -> Option<(ArrayView1<'_, f64>, ArrayView2<'_, f64>)> {
        match &self.repr {
            Repr::Spectral { values, vectors } => Some((values.view(), vectors.view())),
            Repr::Lu(_) => None,
        }
    }

    /// `log(λ_max / λ_min)` over the retained magnitudes (Pinv only).
    pub fn log_condition(&self) -> Option<f64> {
        let (values, _) = self.spectral_factors()?;
        let mags = values.iter().map(|v| v.abs());
        let max = mags.clone().fold(0.0, f64::max);
        let min = mags.fold(f64::INFINITY, f64::min);
        (max > 0.0).then(|| (max / min).ln())
    }

    pub fn apply(&self, b: ArrayView1<f64>) -> Result<Array1<f64>> {
        let x = self.apply_mat(b.insert_axis(Axis(1)))?;
        Ok(x.column(0).to_owned())
    }

    /// `Φ⁻¹ B` for a block of columns.
    pub fn apply_mat(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        if b.nrows() != self.size {
            return Err(Error::DimensionMismatch(format!(
                "inverse of size {} applied to {} rows",
                self.size,
                b.nrows()
            )));
        }
        match &self.repr {
            Repr::Spectral { values, vectors } => {
                let mut proj = vectors.t().dot(&b);
                for (mut row, &v) in proj.rows_mut().into_iter().zip(values) {
                    row /= v;
                }
                Ok(vectors.dot(&proj))
            }
            Repr::Lu(lu) => lu.solve_mat(b),
        }
    }

    /// `B Φ⁻¹` for a block of rows (uses the symmetry of `Φ`).
    pub fn right_apply(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.apply_mat(b.t())?.reversed_axes())
    }
}

/// Interpolation coefficients for one or more value columns (`N × m`),
/// including polynomial coefficients for a bordered inverse.
pub fn interpolation_coefficients(inverse: &RegularizedInverse, values: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = inverse.kernel_size();
    if values.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {n} interpolation nodes",
            values.nrows()
        )));
    }
    if inverse.size() == n {
        return inverse.apply_mat(values);
    }
    let mut rhs = Array2::zeros((inverse.size(), values.ncols()));
    rhs.slice_mut(s![..n, ..]).assign(&values);
    inverse.apply_mat(rhs.view())
}

/// Evaluates `Σ_j c_j φ(‖x − x_j‖)` (plus the polynomial tail when bordered)
/// at every query point, for each column of `values`.
pub fn rbf_interpolant_eval_many(
    train: &PointCloud,
    kernel: &KernelSpec<f64>,
    inverse: &RegularizedInverse,
    values: ArrayView2<f64>,
    query: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if query.ncols() != train.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "query points have dimension {}, training cloud {}",
            query.ncols(),
            train.ambient_dim()
        )));
    }
    if inverse.kernel_size() != train.len() {
        return Err(Error::DimensionMismatch(format!(
            "inverse built for {} nodes, training cloud has {}",
            inverse.kernel_size(),
            train.len()
        )));
    }
    let n = train.len();
    let cross = cross_kernel(query, train.points(), kernel);
    let poly = (inverse.size() > n).then(|| polynomial_block(query));
    // Fixed-width zero-padded blocks: a column's result then does not depend
    // on how many other columns were passed, so truncated bases stay
    // bitwise consistent with their untruncated source.
    let mut out = Array2::zeros((query.nrows(), values.ncols()));
    for start in (0..values.ncols()).step_by(EVAL_BLOCK) {
        let width = EVAL_BLOCK.min(values.ncols() - start);
        let mut block = Array2::zeros((values.nrows(), EVAL_BLOCK));
        block.slice_mut(s![.., ..width]).assign(&values.slice(s![.., start..start + width]));
        let coeffs = interpolation_coefficients(inverse, block.view())?;
        let mut part = cross.dot(&coeffs.slice(s![..n, ..]));
        if let Some(p) = &poly {
            part += &p.dot(&coeffs.slice(s![n.., ..]));
        }
        out.slice_mut(s![.., start..start + width]).assign(&part.slice(s![.., ..width]));
    }
    Ok(out)
}

const EVAL_BLOCK: usize = 16;

pub fn rbf_interpolant_eval(
    train: &PointCloud,
    kernel: &KernelSpec<f64>,
    inverse: &RegularizedInverse,
    values: ArrayView1<f64>,
    query: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    let out = rbf_interpolant_eval_many(train, kernel, inverse, values.insert_axis(Axis(1)), query)?;
    Ok(out.column(0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_inverse_quadratic() {
        let cloud = PointCloud::new(array![[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]], 1).unwrap();
        let phi = kernel_matrix(&cloud, &KernelSpec::inverse_quadratic(1.0));
        assert_eq!(phi[[0, 1]], 0.5);
        assert_eq!(phi[[1, 0]], 0.5);
        assert_eq!(phi[[2, 2]], 1.0);
    }

    #[test]
    fn bordered_shape_for_polyharmonic() {
        let cloud = PointCloud::new(array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]], 1).unwrap();
        let phi = kernel_matrix(&cloud, &KernelSpec::polyharmonic());
        assert_eq!(phi.dim(), (6, 6));
        assert_eq!(phi[[1, 0]], 1.0);
        assert_eq!(phi[[2, 1]], 5f64.sqrt().powi(3));
        assert_eq!(phi[[0, 3]], 1.0);
        assert_eq!(phi[[5, 2]], 2.0);
        assert_eq!(phi.slice(s![3.., 3..]).sum(), 0.0);
        assert_eq!(phi, phi.t());
    }

    #[test]
    fn pinv_truncation_rule() {
        let eye = Array2::<f64>::eye(4);
        let inv = regularized_inverse(eye.view(), 4, InverseMethod::default()).unwrap();
        assert_eq!(inv.effective_rank(), Some(4));
        let x = inv.apply(array![1.0, 2.0, 3.0, 4.0].view()).unwrap();
        assert_eq!(x, array![1.0, 2.0, 3.0, 4.0]);

        let d = array![[1.0, 0.0], [0.0, 1e-8]];
        let inv = regularized_inverse(d.view(), 2, InverseMethod::Pinv { tau: 1e-6 }).unwrap();
        assert_eq!(inv.effective_rank(), Some(1));
        let m = inv.apply_mat(Array2::eye(2).view()).unwrap();
        assert!((m[[0, 0]] - 1.0).abs() < 1e-15);
        assert!(m[[1, 1]].abs() < 1e-15 && m[[0, 1]].abs() < 1e-15);
    }

    #[test]
    fn ridge_rejects_nonpositive_sigma() {
        let eye = Array2::<f64>::eye(3);
        assert!(regularized_inverse(eye.view(), 3, InverseMethod::Ridge { sigma: 0.0 }).is_err());
        let inv = regularized_inverse(eye.view(), 3, InverseMethod::Ridge { sigma: 1.0 }).unwrap();
        let x = inv.apply(array![2.0, 4.0, 6.0].view()).unwrap();
        assert!((&x - &array![1.0, 2.0, 3.0]).iter().all(|v| v.abs() < 1e-15));
        assert_eq!(inv.effective_rank(), None);
    }
}
