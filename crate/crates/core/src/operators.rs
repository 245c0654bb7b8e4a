//! Discrete surface gradients and Laplacians.
//!
//! Sign convention: `Δ = −div grad`, so both Laplacians have non-negative
//! spectra in exact arithmetic. `G_ℓ` is the `ℓ`-th ambient component of the
//! tangential gradient; `Δ^RBF = −Σ_ℓ G_ℓ G_ℓ` and `Δ^SRBF = Σ_ℓ G_ℓᵀ G_ℓ`.
//!
//! With a pseudo-inverse `Φ⁺ = V diag(1/λ) Vᵀ` the global gradients are kept
//! in factored form `G_ℓ = L_ℓ Vᵀ` with `L_ℓ = B_ℓ V diag(1/λ)`, which keeps
//! every product at `O(N² r)` and lets the symmetric Laplacian be expressed
//! through an `r × r` core. Products use BLAS `dgemm`, whose reduction order is
//! fixed for a given thread count, so results are reproducible run to run.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{knn, PointCloud};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::linalg::{symmetrize_in_place, LuFactor};
use crate::rbf::{kernel_matrix, polynomial_block, regularized_inverse, InverseMethod, RegularizedInverse};
use crate::sparse::CsrMatrix;
use crate::tangent::ProjectionField;

/// Largest `N` for which dense global operators are built.
pub const DENSE_CAPACITY: usize = 32768;

const ROW_BLOCK: usize = 256;

/// An `N × N` operator in one of three storage forms.
#[derive(Debug, Clone)]
pub enum OpMatrix {
    Dense(Array2<f64>),
    /// `left · rightᵀ`
    LowRank { left: Array2<f64>, right: Arc<Array2<f64>> },
    Sparse(CsrMatrix),
}

impl OpMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            OpMatrix::Dense(a) => a.nrows(),
            OpMatrix::LowRank { left, .. } => left.nrows(),
            OpMatrix::Sparse(a) => a.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            OpMatrix::Dense(a) => a.ncols(),
            OpMatrix::LowRank { right, .. } => right.nrows(),
            OpMatrix::Sparse(a) => a.ncols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, OpMatrix::Sparse(_))
    }

    pub fn dot_vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            OpMatrix::Dense(a) => a.dot(&x),
            OpMatrix::LowRank { left, right } => left.dot(&right.t().dot(&x)),
            OpMatrix::Sparse(a) => a.dot_vec(x),
        }
    }

    pub fn dot_mat(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            OpMatrix::Dense(a) => a.dot(&x),
            OpMatrix::LowRank { left, right } => left.dot(&right.t().dot(&x)),
            OpMatrix::Sparse(a) => a.dot_mat(x),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            OpMatrix::Dense(a) => a.clone(),
            OpMatrix::LowRank { left, right } => left.dot(&right.t()),
            OpMatrix::Sparse(a) => a.to_dense(),
        }
    }

    /// `self · other`, staying factored or sparse where possible.
    pub fn compose(&self, other: &OpMatrix) -> OpMatrix {
        match (self, other) {
            (OpMatrix::Sparse(a), OpMatrix::Sparse(b)) => OpMatrix::Sparse(a.dot_sparse(b)),
            (_, OpMatrix::LowRank { left, right }) => OpMatrix::LowRank {
                left: self.dot_mat(left.view()),
                right: Arc::clone(right),
            },
            (_, OpMatrix::Dense(b)) => OpMatrix::Dense(self.dot_mat(b.view())),
            (_, OpMatrix::Sparse(b)) => {
                // A·S = (Sᵀ Aᵀ)ᵀ
                let at = self.to_dense().reversed_axes();
                OpMatrix::Dense(b.transpose().dot_mat(at.view()).reversed_axes())
            }
        }
    }

    /// `Σ_k alpha_k · terms_k`.
    pub fn linear_combination(terms: &[(f64, OpMatrix)]) -> OpMatrix {
        let all_sparse = terms.iter().all(|(_, t)| t.is_sparse());
        if all_sparse {
            let mut acc: Option<CsrMatrix> = None;
            for (alpha, t) in terms {
                let OpMatrix::Sparse(m) = t else { unreachable!() };
                acc = Some(match acc {
                    None => m.scale_rows(Array1::from_elem(m.nrows(), *alpha).view()),
                    Some(a) => a.add_scaled(*alpha, m),
                });
            }
            return OpMatrix::Sparse(acc.expect("at least one term"));
        }
        if let Some(OpMatrix::LowRank { right, .. }) = terms.first().map(|t| &t.1) {
            let shared = terms.iter().all(|(_, t)| {
                matches!(t, OpMatrix::LowRank { right: r, .. } if Arc::ptr_eq(r, right))
            });
            if shared {
                let mut left = Array2::zeros(terms[0].1.lowrank_left().dim());
                for (alpha, t) in terms {
                    left.scaled_add(*alpha, t.lowrank_left());
                }
                return OpMatrix::LowRank {
                    left,
                    right: Arc::clone(right),
                };
            }
        }
        let n = terms[0].1.nrows();
        let mut acc = Array2::zeros((n, terms[0].1.ncols()));
        for (alpha, t) in terms {
            acc.scaled_add(*alpha, &t.to_dense());
        }
        OpMatrix::Dense(acc)
    }

    fn lowrank_left(&self) -> &Array2<f64> {
        match self {
            OpMatrix::LowRank { left, .. } => left,
            _ => panic!("not a low-rank operator"),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        match self {
            OpMatrix::Sparse(a) => a.max_abs(),
            _ => self.to_dense().iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// `diag(d) · self + diag(e)` as a dense or sparse matrix.
    pub fn scale_rows_add_diagonal(&self, d: ArrayView1<f64>, e: ArrayView1<f64>) -> OpMatrix {
        match self {
            OpMatrix::Sparse(a) => OpMatrix::Sparse(a.scale_rows(d).add_diagonal(e)),
            _ => {
                let mut m = self.to_dense();
                for (i, mut row) in m.rows_mut().into_iter().enumerate() {
                    row *= d[i];
                    row[i] += e[i];
                }
                OpMatrix::Dense(m)
            }
        }
    }
}

/// The symmetric Laplacian, dense or as `V C Vᵀ` with orthonormal `V`.
#[derive(Debug, Clone)]
pub enum SymmetricOperator {
    Dense(Array2<f64>),
    Factored { basis: Arc<Array2<f64>>, core: Array2<f64> },
}

impl SymmetricOperator {
    pub fn dim(&self) -> usize {
        match self {
            SymmetricOperator::Dense(a) => a.nrows(),
            SymmetricOperator::Factored { basis, .. } => basis.nrows(),
        }
    }

    pub fn dot_vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            SymmetricOperator::Dense(a) => a.dot(&x),
            SymmetricOperator::Factored { basis, core } => basis.dot(&core.dot(&basis.t().dot(&x))),
        }
    }

    /// Dense matrix, exactly symmetric.
    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            SymmetricOperator::Dense(a) => a.clone(),
            SymmetricOperator::Factored { basis, core } => {
                let mut a = basis.dot(&core.dot(&basis.t()));
                symmetrize_in_place(&mut a);
                a
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Global {
        kernel: KernelSpec<f64>,
        inverse: InverseMethod,
        effective_rank: Option<usize>,
    },
    Fd {
        kernel: KernelSpec<f64>,
        stencil: usize,
        ridge: f64,
    },
}

/// Gradients and the pointwise Laplacian on one cloud.
#[derive(Debug, Clone)]
pub struct DiffOps {
    pub gradients: Vec<OpMatrix>,
    pub laplacian_pointwise: OpMatrix,
    pub provenance: Provenance,
}

impl DiffOps {
    pub fn len(&self) -> usize {
        self.laplacian_pointwise.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.gradients.len()
    }

    pub fn laplacian_symmetric(&self) -> SymmetricOperator {
        laplacian_symmetric(&self.gradients)
    }

    /// `G_ℓ v` for every component.
    pub fn gradient_of(&self, v: ArrayView1<f64>) -> Vec<Array1<f64>> {
        self.gradients.iter().map(|g| g.dot_vec(v)).collect()
    }
}

fn check_capacity(n: usize) -> Result<()> {
    if n > DENSE_CAPACITY {
        Err(Error::Capacity {
            n,
            limit: DENSE_CAPACITY,
        })
    } else {
        Ok(())
    }
}

fn check_projection(cloud: &PointCloud, proj: &ProjectionField) -> Result<()> {
    if proj.len() != cloud.len() || proj.ambient_dim() != cloud.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "projection field has {} points in R^{}, cloud has {} in R^{}",
            proj.len(),
            proj.ambient_dim(),
            cloud.len(),
            cloud.ambient_dim()
        )));
    }
    Ok(())
}

/// Rows `rows` of `B_ℓ` for every `ℓ`:
/// `B_ℓ[i, j] = P̂_i[ℓ, :] · ∇φ(x_i − x_j)`.
fn gradient_kernel_rows(
    cloud: &PointCloud,
    kernel: &KernelSpec<f64>,
    proj: &ProjectionField,
    rows: std::ops::Range<usize>,
) -> Vec<Array2<f64>> {
    let n = cloud.ambient_dim();
    let n_points = cloud.len();
    let pts = cloud.points();
    let mut blocks = vec![Array2::zeros((rows.len(), n_points)); n];
    let mut diff = vec![0.0; n];
    let mut pdiff = vec![0.0; n];
    for (bi, i) in rows.enumerate() {
        let p = proj.get(i);
        let xi = pts.row(i);
        for j in 0..n_points {
            let xj = pts.row(j);
            let mut r2 = 0.0;
            for m in 0..n {
                diff[m] = xi[m] - xj[m];
                r2 += diff[m] * diff[m];
            }
            let scale = kernel.derivative_over_r(r2.sqrt());
            for l in 0..n {
                let mut acc = 0.0;
                for m in 0..n {
                    acc += p[[l, m]] * diff[m];
                }
                pdiff[l] = acc;
            }
            for l in 0..n {
                blocks[l][[bi, j]] = scale * pdiff[l];
            }
        }
    }
    blocks
}

/// Global gradient matrices `G_ℓ = B_ℓ Φ⁻¹`, factored for a pseudo-inverse
/// and dense for a ridge inverse.
pub fn gradient_matrices(
    cloud: &PointCloud,
    kernel: &KernelSpec<f64>,
    inverse: &RegularizedInverse,
    proj: &ProjectionField,
) -> Result<Vec<OpMatrix>> {
    if kernel.family == KernelFamily::PolyharmonicCubic {
        return Err(Error::NonDifferentiableKernel(
            "the polyharmonic spline is reserved for local stencils",
        ));
    }
    check_capacity(cloud.len())?;
    check_projection(cloud, proj)?;
    if inverse.size() != cloud.len() {
        return Err(Error::DimensionMismatch(format!(
            "inverse of size {} for {} points",
            inverse.size(),
            cloud.len()
        )));
    }
    let n = cloud.ambient_dim();
    let n_points = cloud.len();
    let starts: Vec<usize> = (0..n_points).step_by(ROW_BLOCK).collect();
    match inverse.spectral_factors() {
        Some((values, vectors)) => {
            let rank = values.len();
            let right = Arc::new(vectors.to_owned());
            let inv_values = values.mapv(|v| 1.0 / v);
            let mut lefts = vec![Array2::zeros((n_points, rank)); n];
            let computed: Vec<Vec<Array2<f64>>> = starts
                .par_iter()
                .map(|&start| {
                    let end = (start + ROW_BLOCK).min(n_points);
                    gradient_kernel_rows(cloud, kernel, proj, start..end)
                        .into_iter()
                        .map(|b| b.dot(&vectors) * &inv_values)
                        .collect()
                })
                .collect();
            for (&start, blocks) in starts.iter().zip(computed) {
                for (l, b) in blocks.into_iter().enumerate() {
                    lefts[l].slice_mut(s![start..start + b.nrows(), ..]).assign(&b);
                }
            }
            Ok(lefts
                .into_iter()
                .map(|left| OpMatrix::LowRank {
                    left,
                    right: Arc::clone(&right),
                })
                .collect())
        }
        None => {
            let b = gradient_kernel_rows(cloud, kernel, proj, 0..n_points);
            b.into_iter()
                .map(|bl| Ok(OpMatrix::Dense(inverse.right_apply(bl.view())?)))
                .collect()
        }
    }
}

/// `Δ^RBF = −Σ_ℓ G_ℓ G_ℓ`.
pub fn laplacian_nonsymmetric(gradients: &[OpMatrix]) -> OpMatrix {
    let terms: Vec<(f64, OpMatrix)> = gradients.iter().map(|g| (-1.0, g.compose(g))).collect();
    OpMatrix::linear_combination(&terms)
}

/// `Δ^SRBF = Σ_ℓ G_ℓᵀ G_ℓ`, exactly symmetric.
pub fn laplacian_symmetric(gradients: &[OpMatrix]) -> SymmetricOperator {
    if let Some(OpMatrix::LowRank { right, .. }) = gradients.first() {
        let rank = right.ncols();
        let mut core = Array2::zeros((rank, rank));
        for g in gradients {
            let left = g.lowrank_left();
            core += &left.t().dot(left);
        }
        symmetrize_in_place(&mut core);
        return SymmetricOperator::Factored {
            basis: Arc::clone(right),
            core,
        };
    }
    let n = gradients[0].nrows();
    let mut acc = Array2::zeros((n, n));
    for g in gradients {
        let d = g.to_dense();
        acc += &d.t().dot(&d);
    }
    symmetrize_in_place(&mut acc);
    SymmetricOperator::Dense(acc)
}

/// Gradients and pointwise Laplacian from a global kernel, together with the
/// regularized inverse used (its effective rank bounds the eigensolve).
pub fn global_operators(
    cloud: &PointCloud,
    kernel: &KernelSpec<f64>,
    method: InverseMethod,
    proj: &ProjectionField,
) -> Result<(DiffOps, RegularizedInverse)> {
    if kernel.family == KernelFamily::PolyharmonicCubic {
        return Err(Error::NonDifferentiableKernel(
            "the polyharmonic spline is reserved for local stencils",
        ));
    }
    check_capacity(cloud.len())?;
    let inverse = {
        let phi = kernel_matrix(cloud, kernel);
        regularized_inverse(phi.view(), cloud.len(), method)?
    };
    let gradients = gradient_matrices(cloud, kernel, &inverse, proj)?;
    let laplacian_pointwise = laplacian_nonsymmetric(&gradients);
    let ops = DiffOps {
        gradients,
        laplacian_pointwise,
        provenance: Provenance::Global {
            kernel: *kernel,
            inverse: method,
            effective_rank: inverse.effective_rank(),
        },
    };
    Ok((ops, inverse))
}

/// Weights of one stencil: Laplacian row and one gradient row per ambient
/// component, in stencil order.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilWeights {
    pub laplacian: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
}

/// Local operator weights at `stencil[0]` from the gradient chain restricted
/// to the stencil. The polyharmonic kernel uses the bordered system with a
/// linear tail; `ridge` is added to the kernel block.
pub fn rbf_fd_weights(
    stencil: &[usize],
    cloud: &PointCloud,
    kernel: &KernelSpec<f64>,
    proj: &ProjectionField,
    ridge: f64,
) -> Result<StencilWeights> {
    let k = stencil.len();
    let n = cloud.ambient_dim();
    let center = *stencil.first().ok_or_else(|| Error::InvalidParameter("empty stencil".into()))?;
    let tail = if kernel.has_polynomial_tail() { n + 1 } else { 0 };
    if kernel.has_polynomial_tail() && k <= n + 1 {
        return Err(Error::InvalidParameter(format!(
            "polyharmonic stencil needs more than {} nodes, got {k}",
            n + 1
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge {ridge} must be >= 0")));
    }
    let size = k + tail;
    let local = cloud.points().select(Axis(0), stencil);
    let mut a = Array2::zeros((size, size));
    for i in 0..k {
        for j in 0..k {
            let r = local
                .row(i)
                .iter()
                .zip(local.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            a[[i, j]] = kernel.value(r);
        }
        a[[i, i]] += ridge;
    }
    if tail > 0 {
        // Centered at the stencil center; the linear span is unchanged.
        let centered = &local - &local.row(0);
        let p = polynomial_block(centered.view());
        a.slice_mut(s![..k, k..]).assign(&p);
        a.slice_mut(s![k.., ..k]).assign(&p.t());
    }
    let lu = LuFactor::with_min_rcond(a.view(), 0.0).map_err(|_| Error::SingularStencil { index: center })?;

    // Augmented gradient rows B^aug_ℓ[a, :] for every stencil node a.
    let mut baug = vec![Array2::<f64>::zeros((k, size)); n];
    let mut diff = vec![0.0; n];
    for ai in 0..k {
        let p = proj.get(stencil[ai]);
        for bj in 0..k {
            let mut r2 = 0.0;
            for m in 0..n {
                diff[m] = local[[ai, m]] - local[[bj, m]];
                r2 += diff[m] * diff[m];
            }
            let scale = kernel.derivative_over_r(r2.sqrt());
            for l in 0..n {
                let acc: f64 = (0..n).map(|m| p[[l, m]] * diff[m]).sum();
                baug[l][[ai, bj]] = scale * acc;
            }
        }
        if tail > 0 {
            for l in 0..n {
                for m in 0..n {
                    baug[l][[ai, k + 1 + m]] = p[[l, m]];
                }
            }
        }
    }
    let mut rhs = Array2::zeros((size, n));
    for l in 0..n {
        rhs.column_mut(l).assign(&baug[l].row(0));
    }
    let g0 = lu.solve_mat(rhs.view()).map_err(|_| Error::SingularStencil { index: center })?;
    let mut combined = Array1::<f64>::zeros(size);
    for l in 0..n {
        let weights = g0.slice(s![..k, l]);
        combined += &baug[l].t().dot(&weights);
    }
    let lap = lu.solve(combined.view()).map_err(|_| Error::SingularStencil { index: center })?;
    let check_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    let laplacian: Vec<f64> = lap.iter().take(k).map(|v| -v).collect();
    let gradients: Vec<Vec<f64>> = (0..n).map(|l| g0.slice(s![..k, l]).to_vec()).collect();
    if !check_finite(&laplacian) || !gradients.iter().all(|g| check_finite(g)) {
        return Err(Error::SingularStencil { index: center });
    }
    Ok(StencilWeights {
        laplacian,
        gradients,
    })
}

/// Default stencil size: 21 for the polyharmonic spline, `⌈2√N⌉` otherwise.
pub fn default_stencil_size(family: KernelFamily, n_points: usize) -> usize {
    match family {
        KernelFamily::PolyharmonicCubic => 21,
        _ => (2.0 * (n_points as f64).sqrt()).ceil() as usize,
    }
}

/// Sparse gradients and Laplacian from per-point stencils of the `stencil`
/// nearest neighbors (the center included).
pub fn rbf_fd_operator(
    cloud: &PointCloud,
    kernel: &KernelSpec<f64>,
    stencil: usize,
    proj: &ProjectionField,
    ridge: f64,
) -> Result<DiffOps> {
    check_projection(cloud, proj)?;
    let table = knn(cloud, stencil, true)?;
    let rows: Vec<StencilWeights> = (0..cloud.len())
        .into_par_iter()
        .map(|i| rbf_fd_weights(table.row(i), cloud, kernel, proj, ridge))
        .collect::<Result<_>>()?;
    let n = cloud.ambient_dim();
    let n_points = cloud.len();
    let sparse = |pick: &dyn Fn(&StencilWeights) -> &[f64]| -> Result<CsrMatrix> {
        let entries = rows
            .iter()
            .enumerate()
            .map(|(i, w)| table.row(i).iter().copied().zip(pick(w).iter().copied()).collect())
            .collect();
        CsrMatrix::from_rows(n_points, entries)
    };
    let laplacian_pointwise = OpMatrix::Sparse(sparse(&|w| &w.laplacian)?);
    let gradients = (0..n)
        .map(|l| sparse(&|w| &w.gradients[l]).map(OpMatrix::Sparse))
        .collect::<Result<_>>()?;
    Ok(DiffOps {
        gradients,
        laplacian_pointwise,
        provenance: Provenance::Fd {
            kernel: *kernel,
            stencil,
            ridge,
        },
    })
}

/// Text dump: a `# N n kind` header then one row per line.
pub fn write_operator_text(path: &Path, op: &OpMatrix, ambient_dim: usize, kind: &str) -> Result<()> {
    let dense = op.to_dense();
    let mut out = format!("# {} {} {}\n", dense.nrows(), ambient_dim, kind);
    for row in dense.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a dump written by [`write_operator_text`]: `(matrix, n, kind)`.
pub fn read_operator_text(path: &Path) -> Result<(Array2<f64>, usize, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let fields: Vec<&str> = header.trim_start_matches('#').split_whitespace().collect();
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if fields.len() != 3 {
        return Err(bad("header must be `# N n kind`"));
    }
    let n_rows: usize = fields[0].parse().map_err(|_| bad("bad N"))?;
    let ambient: usize = fields[1].parse().map_err(|_| bad("bad n"))?;
    let mut data = Vec::with_capacity(n_rows * n_rows);
    for line in lines {
        for tok in line.split_whitespace() {
            data.push(tok.parse::<f64>().map_err(|_| bad("bad entry"))?);
        }
    }
    let m = Array2::from_shape_vec((n_rows, data.len() / n_rows.max(1)), data).map_err(|_| bad("ragged rows"))?;
    Ok((m, ambient, fields[2].to_string()))
}
