//! Solvers for `−div(κ grad u) + c u = f` on a point cloud.
//!
//! The spectral (Galerkin) path splits into an offline stage that depends only
//! on the basis, the operators and `c`, and an online stage per `κ`:
//!
//! ```text
//! Ã = A1 + (1/N) Φ̃ᵀ diag(κ) W − (1/N) Σ_ℓ Φ̃ᵀ diag(G_ℓ κ) H_ℓ
//! b̃ = (1/N) Φ̃ᵀ f
//! ```
//!
//! with `W = Δ Φ̃`, `H_ℓ = G_ℓ Φ̃` and `A1 = (1/N) Φ̃ᵀ diag(c) Φ̃`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::LuFactor;
use crate::operators::{DiffOps, OpMatrix};
use crate::sparse::solve_sparse;
use crate::spectra::{BasisSource, EigenBasis, VbdmOperator};

/// Largest Galerkin system handled.
pub const MAX_MODES: usize = 512;

const MAGIC: &[u8; 8] = b"MPDEOFFL";
const FORMAT_VERSION: u64 = 1;

/// `κ`-independent Galerkin data.
#[derive(Debug, Clone)]
pub struct OfflineTensors {
    pub basis: EigenBasis,
    /// `Δ Φ̃`, `N × K`.
    pub w: Array2<f64>,
    /// `G_ℓ Φ̃`, one `N × K` matrix per ambient component.
    pub h: Vec<Array2<f64>>,
    /// `(1/N) Φ̃ᵀ diag(c) Φ̃`.
    pub a1: Array2<f64>,
    pub c_vec: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub coeffs: Array1<f64>,
    /// `Φ̃ · coeffs`
    pub values: Array1<f64>,
    pub system: Array2<f64>,
    pub rhs: Array1<f64>,
    /// `‖Ã Ũ − b̃‖₂`
    pub residual: f64,
}

fn check_len(what: &str, v: ArrayView1<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch(format!("{what} has length {}, expected {n}", v.len())));
    }
    Ok(())
}

fn check_positive(what: &str, v: ArrayView1<f64>) -> Result<()> {
    if let Some(i) = v.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter(format!("{what}[{i}] = {} must be positive", v[i])));
    }
    Ok(())
}

pub fn galerkin_offline(basis: &EigenBasis, ops: &DiffOps, c: ArrayView1<f64>) -> Result<OfflineTensors> {
    let n = basis.len();
    if ops.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "basis on {n} points, operators on {}",
            ops.len()
        )));
    }
    check_len("c", c, n)?;
    if basis.modes() > MAX_MODES {
        return Err(Error::InvalidParameter(format!(
            "{} modes exceed the limit of {MAX_MODES}",
            basis.modes()
        )));
    }
    let phi = basis.vectors.view();
    let w = ops.laplacian_pointwise.dot_mat(phi);
    let h = ops.gradients.iter().map(|g| g.dot_mat(phi)).collect();
    let a1 = weighted_gram(phi, c, phi);
    Ok(OfflineTensors {
        basis: basis.clone(),
        w,
        h,
        a1,
        c_vec: c.to_owned(),
    })
}

/// `(1/N) Aᵀ diag(d) B`
fn weighted_gram(a: ArrayView2<f64>, d: ArrayView1<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows() as f64;
    let mut db = b.to_owned();
    for (mut row, &w) in db.rows_mut().into_iter().zip(d) {
        row *= w;
    }
    a.t().dot(&db) / n
}

impl OfflineTensors {
    pub fn modes(&self) -> usize {
        self.basis.modes()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// The same tensors restricted to the leading `k` modes.
    pub fn truncate(&self, k: usize) -> Result<OfflineTensors> {
        Ok(OfflineTensors {
            basis: self.basis.truncate(k)?,
            w: self.w.slice(s![.., ..k]).to_owned(),
            h: self.h.iter().map(|m| m.slice(s![.., ..k]).to_owned()).collect(),
            a1: self.a1.slice(s![..k, ..k]).to_owned(),
            c_vec: self.c_vec.clone(),
        })
    }

    /// Versioned little-endian binary: magic, version, N, K, n, source, then
    /// eigenvalues, vectors, W, each H_ℓ, A1 and c, all row-major.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (n, k, amb) = (self.len(), self.modes(), self.h.len());
        let mut buf = Vec::with_capacity(8 * (6 + k + (2 + amb) * n * k + k * k + n));
        buf.extend_from_slice(MAGIC);
        for v in [FORMAT_VERSION, n as u64, k as u64, amb as u64] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let source: u64 = match self.basis.source {
            BasisSource::Srbf => 0,
            BasisSource::Vbdm => 1,
        };
        buf.extend_from_slice(&source.to_le_bytes());
        let mut put = |it: &mut dyn Iterator<Item = f64>| {
            for v in it {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        };
        put(&mut self.basis.eigenvalues.iter().copied());
        put(&mut self.basis.vectors.iter().copied());
        put(&mut self.w.iter().copied());
        for m in &self.h {
            put(&mut m.iter().copied());
        }
        put(&mut self.a1.iter().copied());
        put(&mut self.c_vec.iter().copied());
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<OfflineTensors> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 48 || &bytes[..8] != MAGIC {
            return Err(Error::Format(format!("{} is not an offline tensor file", path.display())));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
        let (version, n, k, amb, source) = (
            word(0),
            word(1) as usize,
            word(2) as usize,
            word(3) as usize,
            word(4),
        );
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let expected = 48 + 8 * (k + (2 + amb) * n * k + k * k + n);
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} bytes for N = {n}, K = {k}, n = {amb}, found {}",
                bytes.len()
            )));
        }
        let mut offset = 48;
        let mut take = |count: usize| -> Vec<f64> {
            let out = bytes[offset..offset + 8 * count]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset += 8 * count;
            out
        };
        let shape = |r: usize, c: usize, v: Vec<f64>| Array2::from_shape_vec((r, c), v).expect("sized");
        let eigenvalues = Array1::from(take(k));
        let vectors = shape(n, k, take(n * k));
        let w = shape(n, k, take(n * k));
        let h = (0..amb).map(|_| shape(n, k, take(n * k))).collect();
        let a1 = shape(k, k, take(k * k));
        let c_vec = Array1::from(take(n));
        let source = match source {
            0 => BasisSource::Srbf,
            1 => BasisSource::Vbdm,
            other => return Err(Error::Format(format!("unknown basis source {other}"))),
        };
        Ok(OfflineTensors {
            basis: EigenBasis {
                eigenvalues,
                vectors,
                source,
            },
            w,
            h,
            a1,
            c_vec,
        })
    }
}

/// Assembles and solves the `K × K` Galerkin system for one `κ` and `f`.
pub fn galerkin_online(
    off: &OfflineTensors,
    kappa: ArrayView1<f64>,
    f: ArrayView1<f64>,
    ops: &DiffOps,
) -> Result<SpectralSolution> {
    let n = off.len();
    check_len("kappa", kappa, n)?;
    check_len("f", f, n)?;
    check_positive("kappa", kappa)?;
    if ops.ambient_dim() != off.h.len() || ops.len() != n {
        return Err(Error::DimensionMismatch(
            "operators do not match the offline tensors".into(),
        ));
    }
    let phi = off.basis.vectors.view();
    let mut system = off.a1.clone();
    system += &weighted_gram(phi, kappa, off.w.view());
    for (g, h) in ops.gradients.iter().zip(&off.h) {
        let gk = g.dot_vec(kappa);
        system -= &weighted_gram(phi, gk.view(), h.view());
    }
    let rhs = phi.t().dot(&f) / n as f64;
    let lu = LuFactor::new(system.view())?;
    let coeffs = lu.solve(rhs.view())?;
    let r = system.dot(&coeffs) - &rhs;
    let residual = r.dot(&r).sqrt();
    let values = phi.dot(&coeffs);
    Ok(SpectralSolution {
        coeffs,
        values,
        system,
        rhs,
        residual,
    })
}

/// `−Σ_ℓ diag(G_ℓ κ) G_ℓ + diag(κ) Δ + diag(c)`, kept sparse for sparse
/// operators and dense otherwise.
pub fn assemble_pointwise_operator(ops: &DiffOps, kappa: ArrayView1<f64>, c: ArrayView1<f64>) -> OpMatrix {
    let mut terms: Vec<(f64, OpMatrix)> = Vec::with_capacity(ops.ambient_dim() + 1);
    for g in &ops.gradients {
        let gk = g.dot_vec(kappa);
        terms.push((-1.0, scale_rows(g, gk.view())));
    }
    terms.push((1.0, scale_rows(&ops.laplacian_pointwise, kappa)));
    let combined = OpMatrix::linear_combination(&terms);
    let ones = Array1::ones(kappa.len());
    combined.scale_rows_add_diagonal(ones.view(), c)
}

fn scale_rows(op: &OpMatrix, d: ArrayView1<f64>) -> OpMatrix {
    match op {
        OpMatrix::Dense(a) => {
            let mut m = a.clone();
            for (mut row, &w) in m.rows_mut().into_iter().zip(d) {
                row *= w;
            }
            OpMatrix::Dense(m)
        }
        OpMatrix::LowRank { left, right } => {
            let mut l = left.clone();
            for (mut row, &w) in l.rows_mut().into_iter().zip(d) {
                row *= w;
            }
            OpMatrix::LowRank {
                left: l,
                right: right.clone(),
            }
        }
        OpMatrix::Sparse(a) => OpMatrix::Sparse(a.scale_rows(d)),
    }
}

fn solve_assembled(op: OpMatrix, f: ArrayView1<f64>) -> Result<Array1<f64>> {
    match op {
        OpMatrix::Sparse(a) => solve_sparse(&a, f),
        other => {
            let dense = match other {
                OpMatrix::Dense(a) => a,
                lr => lr.to_dense(),
            };
            LuFactor::new(dense.view())?.solve(f)
        }
    }
}

fn check_pointwise_inputs(n: usize, kappa: ArrayView1<f64>, c: ArrayView1<f64>, f: ArrayView1<f64>) -> Result<()> {
    check_len("kappa", kappa, n)?;
    check_len("c", c, n)?;
    check_len("f", f, n)?;
    check_positive("kappa", kappa)?;
    check_positive("c", c)
}

/// Pointwise collocation with the global operators, dense LU.
pub fn solve_direct_rbf(
    ops: &DiffOps,
    kappa: ArrayView1<f64>,
    c: ArrayView1<f64>,
    f: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_pointwise_inputs(ops.len(), kappa, c, f)?;
    solve_assembled(assemble_pointwise_operator(ops, kappa, c), f)
}

/// Pointwise collocation with sparse stencil operators.
pub fn solve_direct_rbf_fd(
    fd_ops: &DiffOps,
    kappa: ArrayView1<f64>,
    c: ArrayView1<f64>,
    f: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_pointwise_inputs(fd_ops.len(), kappa, c, f)?;
    solve_assembled(assemble_pointwise_operator(fd_ops, kappa, c), f)
}

/// Galerkin solve with a global basis and stencil operators.
pub fn solve_spectral_rbf_fd(
    basis: &EigenBasis,
    fd_ops: &DiffOps,
    kappa: ArrayView1<f64>,
    f: ArrayView1<f64>,
    c: ArrayView1<f64>,
) -> Result<SpectralSolution> {
    let off = galerkin_offline(basis, fd_ops, c)?;
    galerkin_online(&off, kappa, f, fd_ops)
}

/// `diag(√κ) L diag(√κ) − diag(√κ ⊙ L√κ) + diag(c)` with the VBDM Laplacian
/// `L`, solved sparsely.
pub fn solve_vbdm_direct(
    vb: &VbdmOperator,
    kappa: ArrayView1<f64>,
    c: ArrayView1<f64>,
    f: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let n = vb.len();
    check_pointwise_inputs(n, kappa, c, f)?;
    let root = kappa.mapv(f64::sqrt);
    let l_root = vb.matrix.dot_vec(root.view());
    let rows = (0..n)
        .map(|i| {
            let (cols, vals) = vb.matrix.row(i);
            let mut row: Vec<(usize, f64)> = cols
                .iter()
                .zip(vals)
                .map(|(&j, &v)| (j, root[i] * v * root[j]))
                .collect();
            row.push((i, c[i] - root[i] * l_root[i]));
            row
        })
        .collect();
    let a = crate::sparse::CsrMatrix::from_rows(n, rows)?;
    solve_sparse(&a, f)
}

/// Galerkin solve with a VBDM basis and global RBF operators.
pub fn solve_vbdm_rbf(
    basis: &EigenBasis,
    ops: &DiffOps,
    kappa: ArrayView1<f64>,
    c: ArrayView1<f64>,
    f: ArrayView1<f64>,
) -> Result<SpectralSolution> {
    let off = galerkin_offline(basis, ops, c)?;
    galerkin_online(&off, kappa, f, ops)
}
