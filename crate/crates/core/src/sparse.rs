//! Compressed sparse row matrices and an ILU(0)-preconditioned BiCGSTAB solver
//! with a dense LU fallback.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::LuFactor;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Columns are sorted and
    /// duplicates summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if c >= ncols {
                    return Err(Error::DimensionMismatch(format!(
                        "column {c} out of range for {ncols} columns"
                    )));
                }
                if last == Some(c) {
                    *data.last_mut().expect("previous entry") += v;
                } else {
                    indices.push(c);
                    data.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn dot_vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.ncols, "sparse matvec dimension");
        Array1::from_shape_fn(self.nrows, |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
        })
    }

    pub fn dot_mat(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.ncols, "sparse matmat dimension");
        let mut out = Array2::zeros((self.nrows, x.ncols()));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut orow = out.row_mut(i);
            for (&c, &v) in cols.iter().zip(vals) {
                orow.scaled_add(v, &x.row(c));
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                rows[c].push((i, v));
            }
        }
        CsrMatrix::from_rows(self.nrows, rows).expect("transpose stays in range")
    }

    /// Sparse product `self · other`.
    pub fn dot_sparse(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows, "sparse product dimension");
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            let mut touched = Vec::new();
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (c2, v2) = other.row(k);
                for (&j, &b) in c2.iter().zip(v2) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            rows.push(touched.iter().map(|&j| (j, acc[j])).collect());
        }
        CsrMatrix::from_rows(other.ncols, rows).expect("product stays in range")
    }

    /// `self + alpha · other` on the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let rows = (0..self.nrows)
            .map(|i| {
                let (c1, v1) = self.row(i);
                let (c2, v2) = other.row(i);
                c1.iter()
                    .copied()
                    .zip(v1.iter().copied())
                    .chain(c2.iter().copied().zip(v2.iter().map(|v| alpha * v)))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(self.ncols, rows).expect("sum stays in range")
    }

    /// `diag(d) · self`.
    pub fn scale_rows(&self, d: ArrayView1<f64>) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for v in &mut out.data[self.indptr[i]..self.indptr[i + 1]] {
                *v *= d[i];
            }
        }
        out
    }

    /// `self + diag(d)`; the diagonal is inserted into the pattern if absent.
    pub fn add_diagonal(&self, d: ArrayView1<f64>) -> CsrMatrix {
        let rows = (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                let mut r: Vec<(usize, f64)> = c.iter().copied().zip(v.iter().copied()).collect();
                r.push((i, d[i]));
                r
            })
            .collect();
        CsrMatrix::from_rows(self.ncols, rows).expect("diagonal stays in range")
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out[[i, c]] = v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Incomplete LU with zero fill on the pattern of `a`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let mut lu = a.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            let (cols, _) = lu.row(i);
            let p = cols
                .binary_search(&i)
                .map_err(|_| Error::SolverBreakdown(format!("row {i} has no diagonal entry")))?;
            diag_pos[i] = lu.indptr[i] + p;
        }
        let mut col_pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.indptr[i], lu.indptr[i + 1]);
            for p in start..end {
                col_pos[lu.indices[p]] = p;
            }
            for p in start..end {
                let k = lu.indices[p];
                if k >= i {
                    break;
                }
                let pivot = lu.data[diag_pos[k]];
                if pivot == 0.0 {
                    return Err(Error::SolverBreakdown(format!("zero ILU pivot at row {k}")));
                }
                let factor = lu.data[p] / pivot;
                lu.data[p] = factor;
                for q in diag_pos[k] + 1..lu.indptr[k + 1] {
                    let j = lu.indices[q];
                    let target = col_pos[j];
                    if target != usize::MAX && target >= start && target < end {
                        lu.data[target] -= factor * lu.data[q];
                    }
                }
            }
            for p in start..end {
                col_pos[lu.indices[p]] = usize::MAX;
            }
            if lu.data[diag_pos[i]] == 0.0 {
                return Err(Error::SolverBreakdown(format!("zero ILU pivot at row {i}")));
            }
        }
        Ok(Ilu0 { lu, diag_pos })
    }

    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = b.len();
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for p in self.lu.indptr[i]..self.diag_pos[i] {
                s -= self.lu.data[p] * x[self.lu.indices[p]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in self.diag_pos[i] + 1..self.lu.indptr[i + 1] {
                s -= self.lu.data[p] * x[self.lu.indices[p]];
            }
            x[i] = s / self.lu.data[self.diag_pos[i]];
        }
        x
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterativeOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        IterativeOptions {
            rel_tol: 1e-12,
            max_iter: 2000,
        }
    }
}

/// Right-preconditioned BiCGSTAB. Returns the iterate and the number of
/// iterations, or a breakdown error.
pub fn bicgstab(
    a: &CsrMatrix,
    b: ArrayView1<f64>,
    precond: &Ilu0,
    opts: IterativeOptions,
) -> Result<(Array1<f64>, usize)> {
    let n = b.len();
    let bnorm = b.dot(&b).sqrt();
    let mut x = Array1::zeros(n);
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_owned();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = Array1::zeros(n);
    let mut p = Array1::zeros(n);
    for it in 1..=opts.max_iter {
        let rho_new = r0.dot(&r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(Error::SolverBreakdown(format!("BiCGSTAB rho breakdown at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p = &r + &((&p - &(&v * omega)) * beta);
        let phat = precond.solve(&p);
        v = a.dot_vec(phat.view());
        let denom = r0.dot(&v);
        if denom == 0.0 {
            return Err(Error::SolverBreakdown(format!("BiCGSTAB alpha breakdown at iteration {it}")));
        }
        alpha = rho / denom;
        let s = &r - &(&v * alpha);
        if s.dot(&s).sqrt() <= opts.rel_tol * bnorm {
            x.scaled_add(alpha, &phat);
            return Ok((x, it));
        }
        let shat = precond.solve(&s);
        let t = a.dot_vec(shat.view());
        let tt = t.dot(&t);
        if tt == 0.0 {
            return Err(Error::SolverBreakdown(format!("BiCGSTAB omega breakdown at iteration {it}")));
        }
        omega = t.dot(&s) / tt;
        x.scaled_add(alpha, &phat);
        x.scaled_add(omega, &shat);
        r = &s - &(&t * omega);
        if r.dot(&r).sqrt() <= opts.rel_tol * bnorm {
            return Ok((x, it));
        }
        if omega == 0.0 {
            return Err(Error::SolverBreakdown(format!("BiCGSTAB stagnated at iteration {it}")));
        }
    }
    Err(Error::SolverBreakdown(format!(
        "BiCGSTAB did not reach {:e} in {} iterations",
        opts.rel_tol, opts.max_iter
    )))
}

/// Iterative solve with a dense LU fallback when the iteration breaks down.
pub fn solve_sparse(a: &CsrMatrix, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let iterative = Ilu0::new(a).and_then(|m| bicgstab(a, b, &m, IterativeOptions::default()));
    match iterative {
        Ok((x, _)) => Ok(x),
        Err(e) => {
            log::warn!("sparse iterative solve failed ({e}); using dense LU");
            LuFactor::new(a.to_dense().view())?.solve(b)
        }
    }
}
