//! Data-driven eigenbases: the symmetric RBF Laplacian and the
//! variable-bandwidth diffusion-maps (VBDM) Laplacian.
//!
//! Every basis has `K` columns: the exact trivial pair `(0, 1)` first, then
//! the `K − 1` smallest retained nontrivial pairs, ascending. Columns are
//! normalized in `L²(μ_N)`, i.e. `(1/N) φᵀφ = 1`, and the entry of largest
//! magnitude in each column is made positive.
//!
//! The VBDM matrix is stored with its sign flipped relative to the usual
//! generator `P⁻²(D⁻¹K − I)/ε`, so that both sources have non-negative
//! spectra consistent with `Δ = −div grad`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::geometry::{knn, PointCloud};
use crate::linalg::{symmetric_eigen, EigenSelection};
use crate::kernel::KernelSpec;
use crate::operators::SymmetricOperator;
use crate::rbf::{rbf_interpolant_eval_many, RegularizedInverse};
use crate::sparse::CsrMatrix;

/// Eigenvalues at or below this are treated as numerically trivial.
pub const DEFAULT_TAU_EIG: f64 = 1e-4;

/// Eigenpairs computed per VBDM solve, at least.
pub const VBDM_EIGEN_BLOCK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisSource {
    Srbf,
    Vbdm,
}

#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub eigenvalues: Array1<f64>,
    /// `N × K`, column `k` is the `k`-th eigenvector.
    pub vectors: Array2<f64>,
    pub source: BasisSource,
}

impl EigenBasis {
    /// Number of modes `K`, the constant mode included.
    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    /// The leading `k` modes.
    pub fn truncate(&self, k: usize) -> Result<EigenBasis> {
        if k == 0 || k > self.modes() {
            return Err(Error::InsufficientSpectrum {
                available: self.modes(),
                requested: k,
            });
        }
        Ok(EigenBasis {
            eigenvalues: self.eigenvalues.slice(s![..k]).to_owned(),
            vectors: self.vectors.slice(s![.., ..k]).to_owned(),
            source: self.source,
        })
    }

    /// Replaces the vectors (e.g. after transfer to another cloud), keeping
    /// the eigenvalues, then renormalizes the nontrivial columns.
    pub fn with_vectors(&self, vectors: Array2<f64>) -> Result<EigenBasis> {
        if vectors.ncols() != self.modes() {
            return Err(Error::DimensionMismatch(format!(
                "{} vectors for {} eigenvalues",
                vectors.ncols(),
                self.modes()
            )));
        }
        let mut vectors = vectors;
        vectors.column_mut(0).fill(1.0);
        normalize_columns(&mut vectors);
        Ok(EigenBasis {
            eigenvalues: self.eigenvalues.clone(),
            vectors,
            source: self.source,
        })
    }

    /// `max_{j≠k} |(1/N) φ_jᵀ φ_k|`.
    pub fn max_off_diagonal_gram(&self) -> f64 {
        let n = self.len() as f64;
        let gram = self.vectors.t().dot(&self.vectors) / n;
        let mut worst: f64 = 0.0;
        for ((i, j), v) in gram.indexed_iter() {
            if i != j {
                worst = worst.max(v.abs());
            }
        }
        worst
    }
}

/// Moves a basis to another cloud by evaluating the RBF interpolant of each
/// eigenvector at the new nodes, then resets the constant mode and
/// renormalizes.
pub fn transfer_basis(
    basis: &EigenBasis,
    train: &PointCloud,
    kernel: &KernelSpec<f64>,
    inverse: &RegularizedInverse,
    target: &PointCloud,
) -> Result<EigenBasis> {
    if basis.len() != train.len() {
        return Err(Error::DimensionMismatch(format!(
            "basis on {} points, training cloud has {}",
            basis.len(),
            train.len()
        )));
    }
    let moved = rbf_interpolant_eval_many(train, kernel, inverse, basis.vectors.view(), target.points())?;
    basis.with_vectors(moved)
}

/// Scales every column to `(1/N)‖φ‖² = 1` and makes its largest-magnitude
/// entry positive.
pub fn normalize_columns(vectors: &mut Array2<f64>) {
    let n = vectors.nrows() as f64;
    for mut col in vectors.axis_iter_mut(Axis(1)) {
        let norm = (col.dot(&col) / n).sqrt();
        if norm > 0.0 {
            col /= norm;
        }
        let mut pivot = 0.0f64;
        for &v in col.iter() {
            if v.abs() > pivot.abs() {
                pivot = v;
            }
        }
        if pivot < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

fn assemble_basis(
    n_points: usize,
    values: ArrayView1<f64>,
    vectors: ArrayView2<f64>,
    source: BasisSource,
) -> EigenBasis {
    let k = values.len() + 1;
    let mut eigenvalues = Array1::zeros(k);
    eigenvalues.slice_mut(s![1..]).assign(&values);
    let mut basis = Array2::zeros((n_points, k));
    basis.column_mut(0).fill(1.0);
    basis.slice_mut(s![.., 1..]).assign(&vectors);
    normalize_columns(&mut basis);
    EigenBasis {
        eigenvalues,
        vectors: basis,
        source,
    }
}

/// Leading basis of the symmetric RBF Laplacian.
///
/// The `rank_bound` eigenpairs of largest magnitude are computed, those with
/// `λ ≤ tau_eig` dropped, and the `k − 1` smallest survivors kept.
pub fn eigensolve_srbf(
    op: &SymmetricOperator,
    k: usize,
    rank_bound: usize,
    tau_eig: f64,
) -> Result<EigenBasis> {
    let n = op.dim();
    if k == 0 || k >= rank_bound || rank_bound > n {
        return Err(Error::InvalidParameter(format!(
            "need 0 < K < rank bound <= N, got K = {k}, rank bound = {rank_bound}, N = {n}"
        )));
    }
    let (values, vectors) = match op {
        SymmetricOperator::Dense(a) => {
            let eig = symmetric_eigen(a.view(), EigenSelection::LargestMagnitude(rank_bound))?;
            (eig.values, eig.vectors)
        }
        SymmetricOperator::Factored { basis, core } => {
            // Nonzero spectrum of V C Vᵀ is that of C; eigenvectors lift by V.
            let r = core.nrows().min(rank_bound);
            let eig = symmetric_eigen(core.view(), EigenSelection::LargestMagnitude(r))?;
            let lifted = basis.dot(&eig.vectors);
            (eig.values, lifted)
        }
    };
    let keep: Vec<usize> = (0..values.len()).filter(|&j| values[j] > tau_eig).collect();
    if keep.len() < k - 1 {
        return Err(Error::InsufficientSpectrum {
            available: keep.len() + 1,
            requested: k,
        });
    }
    let chosen = &keep[..k - 1];
    let vals = values.select(Axis(0), chosen);
    let vecs = vectors.select(Axis(1), chosen);
    Ok(assemble_basis(n, vals.view(), vecs.view(), BasisSource::Srbf))
}

/// Outcome of the bandwidth search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonTuning {
    pub epsilon: f64,
    /// Largest value of `d log T / d log ε` on the grid.
    pub max_slope: f64,
    /// True when the profile was flat and the median heuristic was used.
    pub fallback: bool,
}

/// Chooses `ε` from `ε = 2^l`, `l ∈ {−30, −29.9, …, 10}`, maximizing the
/// discrete slope of `log T(ε)` with `T(ε) = (1/N²) Σ exp(−pre / (factor·ε))`.
///
/// `pre` holds the scaled squared distances `‖x_i − x_j‖² / (ρ_i ρ_j)` of all
/// retained pairs.
pub fn auto_tune_epsilon(pre: &[f64], n_points: usize, factor: f64) -> Result<EpsilonTuning> {
    if pre.is_empty() || n_points == 0 {
        return Err(Error::InvalidParameter("empty distance set for bandwidth tuning".into()));
    }
    let grid: Vec<f64> = (0..=400).map(|i| (-30.0 + 0.1 * i as f64).exp2()).collect();
    let norm = (n_points as f64).powi(2);
    let log_t: Vec<f64> = grid
        .iter()
        .map(|&eps| {
            let scale = 1.0 / (factor * eps);
            (pre.iter().map(|&p| (-p * scale).exp()).sum::<f64>() / norm).ln()
        })
        .collect();
    let dlog_eps = 0.1 * std::f64::consts::LN_2;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for i in 0..grid.len() - 1 {
        let slope = (log_t[i + 1] - log_t[i]) / dlog_eps;
        if slope.is_finite() && slope > best.0 {
            best = (slope, i);
        }
    }
    if !(best.0 > 1e-6) {
        let mut sorted: Vec<f64> = pre.iter().copied().filter(|&p| p > 0.0).collect();
        sorted.sort_by(f64::total_cmp);
        let median = sorted.get(sorted.len() / 2).copied().unwrap_or(1.0);
        log::warn!("bandwidth profile is flat; using median heuristic");
        return Ok(EpsilonTuning {
            epsilon: median / factor,
            max_slope: best.0.max(0.0),
            fallback: true,
        });
    }
    Ok(EpsilonTuning {
        epsilon: grid[best.1],
        max_slope: best.0,
        fallback: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VbdmParams {
    /// Kernel neighbors per point, the point itself included.
    pub k1: usize,
    /// Neighbors used for the initial bandwidth `ρ_0`.
    pub k2: usize,
    pub intrinsic_dim: usize,
}

impl VbdmParams {
    /// Right-normalization exponent `−d/4 + 1/2`.
    pub fn alpha(&self) -> f64 {
        -(self.intrinsic_dim as f64) / 4.0 + 0.5
    }

    /// Bandwidth exponent on the density.
    pub fn beta(&self) -> f64 {
        -0.5
    }
}

/// Negated VBDM Laplacian plus what is needed for its symmetric eigensolve.
#[derive(Debug, Clone)]
pub struct VbdmOperator {
    /// `−P⁻²(D⁻¹K_α − I)/ε`, rows summing to zero.
    pub matrix: CsrMatrix,
    pub epsilon: EpsilonTuning,
    pub epsilon0: EpsilonTuning,
    pub rho: Array1<f64>,
    pub params: VbdmParams,
    /// Symmetric normalized kernel `K_α` (union pattern).
    kernel_alpha: CsrMatrix,
    /// `P² D`, the similarity weights.
    similarity: Array1<f64>,
}

impl VbdmOperator {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row sums of the matrix before negation.
    pub fn generator_row_sums(&self) -> Array1<f64> {
        // off-diagonals first, in the order the diagonal was formed from
        Array1::from_shape_fn(self.len(), |i| {
            let (cols, vals) = self.matrix.row(i);
            let off: f64 = cols.iter().zip(vals).filter(|(&j, _)| j != i).map(|(_, v)| v).sum();
            -(off + self.matrix.get(i, i))
        })
    }

    /// Dense symmetric matrix similar to [`VbdmOperator::matrix`]:
    /// `S^{1/2} L S^{-1/2} = (P⁻² − S^{-1/2} K_α S^{-1/2}) / ε`, `S = P² D`.
    pub fn symmetric_form(&self) -> Array2<f64> {
        let n = self.len();
        let eps = self.epsilon.epsilon;
        let inv_sqrt = self.similarity.mapv(|v| 1.0 / v.sqrt());
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            let (cols, vals) = self.kernel_alpha.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                a[[i, j]] = -inv_sqrt[i] * v * inv_sqrt[j] / eps;
            }
            a[[i, i]] += 1.0 / (self.rho[i] * self.rho[i] * eps);
        }
        crate::linalg::symmetrize_in_place(&mut a);
        a
    }
}

/// Builds the variable-bandwidth diffusion-maps Laplacian.
pub fn vbdm_build(cloud: &PointCloud, params: VbdmParams) -> Result<VbdmOperator> {
    let n = cloud.len();
    let VbdmParams { k1, k2, intrinsic_dim: d } = params;
    if !(2 <= k2 && k2 < k1 && k1 < n) {
        return Err(Error::InvalidParameter(format!(
            "VBDM needs 2 <= k2 < k1 < N, got k2 = {k2}, k1 = {k1}, N = {n}"
        )));
    }
    let table = knn(cloud, k1, true)?;
    let dist2 = table.distances.mapv(|v| v * v);
    let dim = d as i32;

    // Initial bandwidth from the k2 nearest neighbors (self excluded).
    let rho0 = Array1::from_shape_fn(n, |i| {
        (dist2.slice(s![i, 1..k2]).sum() / (k2 - 1) as f64).sqrt()
    });
    if let Some(i) = rho0.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::NonPositiveDensity(i));
    }
    let pre0: Vec<f64> = (0..n)
        .flat_map(|i| {
            let row = table.row(i);
            let (dist2, rho0) = (&dist2, &rho0);
            (0..k1).map(move |c| dist2[[i, c]] / (rho0[i] * rho0[row[c]]))
        })
        .collect();
    let epsilon0 = auto_tune_epsilon(&pre0, n, 2.0)?;
    let density = Array1::from_shape_fn(n, |i| {
        let s: f64 = pre0[i * k1..(i + 1) * k1]
            .iter()
            .map(|&p| (-p / (2.0 * epsilon0.epsilon)).exp())
            .sum();
        s / rho0[i].powi(dim)
    });
    if let Some(i) = density.iter().position(|&q| !(q > 0.0 && q.is_finite())) {
        return Err(Error::NonPositiveDensity(i));
    }
    let rho = density.mapv(|q| q.powf(params.beta()));

    let pre: Vec<f64> = (0..n)
        .flat_map(|i| {
            let row = table.row(i);
            let (dist2, rho) = (&dist2, &rho);
            (0..k1).map(move |c| dist2[[i, c]] / (rho[i] * rho[row[c]]))
        })
        .collect();
    let epsilon = auto_tune_epsilon(&pre, n, 4.0)?;
    let eps = epsilon.epsilon;

    // Kernel on the kNN pattern, symmetrized by max over the union pattern.
    let kernel_rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            table
                .row(i)
                .iter()
                .enumerate()
                .map(|(c, &j)| (j, (-pre[i * k1 + c] / (4.0 * eps)).exp()))
                .collect()
        })
        .collect();
    let kernel = symmetrize_max(n, kernel_rows)?;

    let q_rho = Array1::from_shape_fn(n, |i| {
        kernel.row(i).1.iter().sum::<f64>() / rho[i].powi(dim)
    });
    if let Some(i) = q_rho.iter().position(|&q| !(q > 0.0 && q.is_finite())) {
        return Err(Error::NonPositiveDensity(i));
    }
    let weight = q_rho.mapv(|q| q.powf(-params.alpha()));
    let alpha_rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let (cols, vals) = kernel.row(i);
            cols.iter()
                .zip(vals)
                .map(|(&j, &v)| (j, v * weight[i] * weight[j]))
                .collect()
        })
        .collect();
    let kernel_alpha = CsrMatrix::from_rows(n, alpha_rows)?;
    let row_sum = Array1::from_shape_fn(n, |i| kernel_alpha.row(i).1.iter().sum::<f64>());

    // Negated generator; the diagonal is set so every row sums to zero.
    let lap_rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let scale = 1.0 / (rho[i] * rho[i] * eps * row_sum[i]);
            let (cols, vals) = kernel_alpha.row(i);
            let mut row: Vec<(usize, f64)> = cols
                .iter()
                .zip(vals)
                .filter(|(&j, _)| j != i)
                .map(|(&j, &v)| (j, -v * scale))
                .collect();
            let diag = -row.iter().map(|&(_, v)| v).sum::<f64>();
            row.push((i, diag));
            row
        })
        .collect();
    let matrix = CsrMatrix::from_rows(n, lap_rows)?;
    let similarity = Array1::from_shape_fn(n, |i| rho[i] * rho[i] * row_sum[i]);
    Ok(VbdmOperator {
        matrix,
        epsilon,
        epsilon0,
        rho,
        params,
        kernel_alpha,
        similarity,
    })
}

fn symmetrize_max(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<CsrMatrix> {
    let a = CsrMatrix::from_rows(n, rows)?;
    let at = a.transpose();
    let merged = (0..n)
        .map(|i| {
            let (c1, v1) = a.row(i);
            let (c2, v2) = at.row(i);
            let mut out: Vec<(usize, f64)> = Vec::with_capacity(c1.len() + c2.len());
            let (mut p, mut q) = (0, 0);
            while p < c1.len() || q < c2.len() {
                if q == c2.len() || (p < c1.len() && c1[p] < c2[q]) {
                    out.push((c1[p], v1[p]));
                    p += 1;
                } else if p == c1.len() || c2[q] < c1[p] {
                    out.push((c2[q], v2[q]));
                    q += 1;
                } else {
                    out.push((c1[p], v1[p].max(v2[q])));
                    p += 1;
                    q += 1;
                }
            }
            out
        })
        .collect();
    CsrMatrix::from_rows(n, merged)
}

/// Leading basis of the VBDM Laplacian through its symmetric similarity form.
pub fn eigensolve_vbdm(op: &VbdmOperator, k: usize) -> Result<EigenBasis> {
    let n = op.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("need 0 < K < N, got K = {k}, N = {n}")));
    }
    let sym = op.symmetric_form();
    // A K-independent request keeps the leading vectors identical whatever K
    // is asked for; index-range solves otherwise differ in the last bits.
    let count = k.max(VBDM_EIGEN_BLOCK).min(n);
    let eig = symmetric_eigen(sym.view(), EigenSelection::Smallest(count))?;
    if eig.values.len() < k {
        return Err(Error::InsufficientSpectrum {
            available: eig.values.len(),
            requested: k,
        });
    }
    // The smallest pair is the constant mode; the rest lift by S^{-1/2}.
    let inv_sqrt = op.similarity.mapv(|v| 1.0 / v.sqrt());
    let mut vecs = eig.vectors.slice(s![.., 1..k]).to_owned();
    for (mut row, &w) in vecs.rows_mut().into_iter().zip(inv_sqrt.iter()) {
        row *= w;
    }
    let vals = eig.values.slice(s![1..k]).to_owned();
    Ok(assemble_basis(n, vals.view(), vecs.view(), BasisSource::Vbdm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_ellipse;
    use ndarray::array;

    #[test]
    fn normalization_and_sign() {
        let mut v = array![[1.0, -3.0], [1.0, 1.0], [1.0, 0.0]];
        normalize_columns(&mut v);
        assert!((v.column(1).dot(&v.column(1)) / 3.0 - 1.0).abs() < 1e-15);
        assert!(v[[0, 1]] > 0.0);
        assert_eq!(v.column(0), Array1::from_elem(3, 1.0));
    }

    #[test]
    fn epsilon_scales_with_squared_distances() {
        let s = sample_ellipse(400, 2.0, 2).unwrap();
        let pre: Vec<f64> = (0..400)
            .flat_map(|i| (0..400).map(move |j| (i, j)))
            .map(|(i, j)| s.cloud.squared_distance(i, j))
            .collect();
        let a = auto_tune_epsilon(&pre, 400, 2.0).unwrap();
        let scaled: Vec<f64> = pre.iter().map(|p| 4.0 * p).collect();
        let b = auto_tune_epsilon(&scaled, 400, 2.0).unwrap();
        assert!(!a.fallback && !b.fallback);
        assert!((b.epsilon / a.epsilon - 4.0).abs() < 1e-9, "{} {}", a.epsilon, b.epsilon);
    }

    #[test]
    fn flat_profile_falls_back() {
        let t = auto_tune_epsilon(&[0.0; 16], 4, 2.0).unwrap();
        assert!(t.fallback);
    }

    #[test]
    fn vbdm_rows_sum_to_zero() {
        let s = sample_ellipse(400, 2.0, 3).unwrap();
        let op = vbdm_build(
            &s.cloud,
            VbdmParams {
                k1: 30,
                k2: 15,
                intrinsic_dim: 1,
            },
        )
        .unwrap();
        assert!(op.generator_row_sums().iter().all(|v| v.abs() < 1e-12));
        assert!(op.rho.iter().all(|&r| r > 0.0));
        assert_eq!(op.params.alpha(), 0.25);
    }
}
