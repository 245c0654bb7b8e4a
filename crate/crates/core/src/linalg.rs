//! Thin LAPACK layer: selective symmetric eigensolver, LU with condition
//! estimates, and small SVD helpers.
//!
//! All routines are single-call deterministic for a fixed input and a fixed
//! BLAS thread count.

use std::ops::Range;
use std::os::raw::{c_char, c_int};

use lapack_sys as lapack;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};
use ndarray_linalg::SVD;

use crate::error::{Error, Result};

const LOWER: *const c_char = b"L\0".as_ptr() as *const c_char;

/// Which eigenpairs of a symmetric matrix to compute.
#[derive(Debug, Clone, PartialEq)]
pub enum EigenSelection {
    All,
    /// Ascending index range into the sorted spectrum.
    Indices(Range<usize>),
    /// The `k` smallest (algebraic) eigenvalues.
    Smallest(usize),
    /// The `r` eigenvalues of largest magnitude.
    LargestMagnitude(usize),
    /// Every eigenvalue with `|λ| > tau`.
    MagnitudeAbove(f64),
}

/// Eigenpairs sorted by ascending eigenvalue; column `j` of `vectors` belongs
/// to `values[j]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

fn to_int(n: usize) -> Result<c_int> {
    c_int::try_from(n).map_err(|_| Error::Capacity {
        n,
        limit: c_int::MAX as usize,
    })
}

fn check(routine: &'static str, info: c_int) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Lapack { routine, info })
    }
}

/// Column-major copy of a square matrix.
fn fortran_buffer(a: ArrayView2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut out = vec![0.0; n * a.ncols()];
    for ((i, j), v) in a.indexed_iter() {
        out[j * n + i] = *v;
    }
    out
}

fn from_fortran(rows: usize, cols: usize, data: Vec<f64>) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols).f(), data)
        .expect("buffer matches shape")
        .as_standard_layout()
        .into_owned()
}

/// Split an ascending spectrum into at most two contiguous index ranges
/// (a prefix of negative values and a suffix of positive ones).
fn selection_ranges(sorted: &[f64], sel: &EigenSelection) -> Vec<Range<usize>> {
    let n = sorted.len();
    let ranges = match *sel {
        EigenSelection::All => vec![0..n],
        EigenSelection::Indices(ref r) => vec![r.start.min(n)..r.end.min(n)],
        EigenSelection::Smallest(k) => vec![0..k.min(n)],
        EigenSelection::LargestMagnitude(r) => {
            let (mut lo, mut hi) = (0usize, n);
            for _ in 0..r.min(n) {
                if sorted[lo].abs() > sorted[hi - 1].abs() {
                    lo += 1;
                } else {
                    hi -= 1;
                }
            }
            vec![0..lo, hi..n]
        }
        EigenSelection::MagnitudeAbove(tau) => {
            let lo = sorted.iter().take_while(|&&v| v < -tau).count();
            let hi = n - sorted.iter().rev().take_while(|&&v| v > tau).count();
            vec![0..lo, hi.max(lo)..n]
        }
    };
    ranges.into_iter().filter(|r| !r.is_empty()).collect()
}

/// Selected eigenpairs of a symmetric matrix.
///
/// The matrix is reduced to tridiagonal form once (`dsytrd`); all
/// eigenvalues come from `dsterf`, the requested eigenvectors from MRRR
/// (`dstemr`) followed by back-transformation (`dormtr`). Only the lower
/// triangle is referenced.
pub fn symmetric_eigen(a: ArrayView2<f64>, sel: EigenSelection) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "symmetric eigensolve needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }
    if n == 1 {
        let keep = !selection_ranges(&[a[[0, 0]]], &sel).is_empty();
        return Ok(if keep {
            SymmetricEigen {
                values: Array1::from_elem(1, a[[0, 0]]),
                vectors: Array2::ones((1, 1)),
            }
        } else {
            SymmetricEigen {
                values: Array1::zeros(0),
                vectors: Array2::zeros((1, 0)),
            }
        });
    }

    let ni = to_int(n)?;
    let mut buf = fortran_buffer(a);
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    let mut tau = vec![0.0; n - 1];
    let mut info: c_int = 0;

    unsafe {
        let mut query = 0.0;
        lapack::dsytrd_(
            LOWER,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            diag.as_mut_ptr(),
            off.as_mut_ptr(),
            tau.as_mut_ptr(),
            &mut query,
            &-1,
            &mut info,
        );
        check("dsytrd", info)?;
        let lwork = (query as usize).max(1);
        let mut work = vec![0.0; lwork];
        lapack::dsytrd_(
            LOWER,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            diag.as_mut_ptr(),
            off.as_mut_ptr(),
            tau.as_mut_ptr(),
            work.as_mut_ptr(),
            &to_int(lwork)?,
            &mut info,
        );
        check("dsytrd", info)?;
    }

    let mut all = diag.clone();
    {
        let mut e = off.clone();
        unsafe { lapack::dsterf_(&ni, all.as_mut_ptr(), e.as_mut_ptr(), &mut info) };
        check("dsterf", info)?;
    }
    let ranges = selection_ranges(&all, &sel);
    let total: usize = ranges.iter().map(|r| r.len()).sum();
    if total == 0 {
        return Ok(SymmetricEigen {
            values: Array1::zeros(0),
            vectors: Array2::zeros((n, 0)),
        });
    }

    let mut values = Vec::with_capacity(total);
    let mut z = vec![0.0; n * total];
    let mut col = 0usize;
    for r in &ranges {
        let cnt = r.len();
        let mut d = diag.clone();
        let mut e = off.clone();
        let mut w = vec![0.0; n];
        let mut found: c_int = 0;
        let mut isuppz = vec![0 as c_int; 2 * cnt.max(1)];
        let mut tryrac: c_int = 1;
        let (il, iu) = (to_int(r.start + 1)?, to_int(r.end)?);
        let nzc = to_int(cnt)?;
        let zslice = &mut z[col * n..(col + cnt) * n];
        unsafe {
            let mut wq = 0.0;
            let mut iwq: c_int = 0;
            lapack::dstemr_(
                b"V\0".as_ptr() as _,
                b"I\0".as_ptr() as _,
                &ni,
                d.as_mut_ptr(),
                e.as_mut_ptr(),
                &0.0,
                &0.0,
                &il,
                &iu,
                &mut found,
                w.as_mut_ptr(),
                zslice.as_mut_ptr(),
                &ni,
                &nzc,
                isuppz.as_mut_ptr(),
                &mut tryrac,
                &mut wq,
                &-1,
                &mut iwq,
                &-1,
                &mut info,
            );
            check("dstemr", info)?;
            let lwork = (wq as usize).max(1);
            let liwork = (iwq as usize).max(1);
            let mut work = vec![0.0; lwork];
            let mut iwork = vec![0 as c_int; liwork];
            lapack::dstemr_(
                b"V\0".as_ptr() as _,
                b"I\0".as_ptr() as _,
                &ni,
                d.as_mut_ptr(),
                e.as_mut_ptr(),
                &0.0,
                &0.0,
                &il,
                &iu,
                &mut found,
                w.as_mut_ptr(),
                zslice.as_mut_ptr(),
                &ni,
                &nzc,
                isuppz.as_mut_ptr(),
                &mut tryrac,
                work.as_mut_ptr(),
                &to_int(lwork)?,
                iwork.as_mut_ptr(),
                &to_int(liwork)?,
                &mut info,
            );
            check("dstemr", info)?;
        }
        if found as usize != cnt {
            return Err(Error::Lapack {
                routine: "dstemr",
                info: -1000 - found,
            });
        }
        values.extend_from_slice(&w[..cnt]);
        col += cnt;
    }

    let cols = to_int(total)?;
    unsafe {
        let mut query = 0.0;
        lapack::dormtr_(
            b"L\0".as_ptr() as _,
            LOWER,
            b"N\0".as_ptr() as _,
            &ni,
            &cols,
            buf.as_ptr(),
            &ni,
            tau.as_ptr(),
            z.as_mut_ptr(),
            &ni,
            &mut query,
            &-1,
            &mut info,
        );
        check("dormtr", info)?;
        let lwork = (query as usize).max(1);
        let mut work = vec![0.0; lwork];
        lapack::dormtr_(
            b"L\0".as_ptr() as _,
            LOWER,
            b"N\0".as_ptr() as _,
            &ni,
            &cols,
            buf.as_ptr(),
            &ni,
            tau.as_ptr(),
            z.as_mut_ptr(),
            &ni,
            work.as_mut_ptr(),
            &to_int(lwork)?,
            &mut info,
        );
        check("dormtr", info)?;
    }

    Ok(SymmetricEigen {
        values: Array1::from(values),
        vectors: from_fortran(n, total, z),
    })
}

/// All eigenvalues of a symmetric matrix, ascending, without vectors.
pub fn symmetric_eigenvalues(a: ArrayView2<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Array1::zeros(0));
    }
    if n == 1 {
        return Ok(Array1::from_elem(1, a[[0, 0]]));
    }
    let ni = to_int(n)?;
    let mut buf = fortran_buffer(a);
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    let mut tau = vec![0.0; n - 1];
    let mut info: c_int = 0;
    unsafe {
        let mut query = 0.0;
        lapack::dsytrd_(
            LOWER,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            diag.as_mut_ptr(),
            off.as_mut_ptr(),
            tau.as_mut_ptr(),
            &mut query,
            &-1,
            &mut info,
        );
        check("dsytrd", info)?;
        let lwork = (query as usize).max(1);
        let mut work = vec![0.0; lwork];
        lapack::dsytrd_(
            LOWER,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            diag.as_mut_ptr(),
            off.as_mut_ptr(),
            tau.as_mut_ptr(),
            work.as_mut_ptr(),
            &to_int(lwork)?,
            &mut info,
        );
        check("dsytrd", info)?;
        lapack::dsterf_(&ni, diag.as_mut_ptr(), off.as_mut_ptr(), &mut info);
        check("dsterf", info)?;
    }
    Ok(Array1::from(diag))
}

/// LU factorization with partial pivoting (`dgetrf`) of a general square
/// matrix, kept in column-major storage.
#[derive(Debug, Clone)]
pub struct LuFactor {
    n: usize,
    lu: Vec<f64>,
    pivots: Vec<c_int>,
    rcond: f64,
}

impl LuFactor {
    /// Factorizes `a`; fails with [`Error::SingularSystem`] when a zero pivot
    /// appears or the 1-norm condition estimate drops below machine epsilon.
    pub fn new(a: ArrayView2<f64>) -> Result<Self> {
        Self::with_min_rcond(a, f64::EPSILON)
    }

    /// Like [`LuFactor::new`] but only rejects condition estimates at or
    /// below `min_rcond`; `0.0` accepts anything without an exact zero pivot.
    pub fn with_min_rcond(a: ArrayView2<f64>, min_rcond: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let ni = to_int(n)?;
        let mut lu = fortran_buffer(a);
        let mut pivots = vec![0 as c_int; n];
        let mut info: c_int = 0;
        if n == 0 {
            return Ok(LuFactor {
                n,
                lu,
                pivots,
                rcond: 1.0,
            });
        }
        let mut work = vec![0.0; 4 * n];
        let mut iwork = vec![0 as c_int; n];
        let anorm = unsafe {
            lapack::dlange_(
                b"1\0".as_ptr() as _,
                &ni,
                &ni,
                lu.as_ptr(),
                &ni,
                work.as_mut_ptr(),
            )
        };
        unsafe { lapack::dgetrf_(&ni, &ni, lu.as_mut_ptr(), &ni, pivots.as_mut_ptr(), &mut info) };
        if info > 0 {
            return Err(Error::SingularSystem { rcond: 0.0 });
        }
        check("dgetrf", info)?;
        let mut rcond = 0.0;
        unsafe {
            lapack::dgecon_(
                b"1\0".as_ptr() as _,
                &ni,
                lu.as_ptr(),
                &ni,
                &anorm,
                &mut rcond,
                work.as_mut_ptr(),
                iwork.as_mut_ptr(),
                &mut info,
            )
        };
        check("dgecon", info)?;
        if !(rcond > min_rcond) {
            return Err(Error::SingularSystem { rcond });
        }
        Ok(LuFactor {
            n,
            lu,
            pivots,
            rcond,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Reciprocal condition number estimate in the 1-norm.
    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Result<Array1<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has length {}, system is {}",
                b.len(),
                self.n
            )));
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x, 1)?;
        Ok(Array1::from(x))
    }

    /// Solves `A X = B` for a block of right-hand sides.
    pub fn solve_mat(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        if b.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, system is {}",
                b.nrows(),
                self.n
            )));
        }
        let m = b.ncols();
        let mut x = fortran_buffer(b);
        self.solve_in_place(&mut x, m)?;
        Ok(from_fortran(self.n, m, x))
    }

    fn solve_in_place(&self, x: &mut [f64], nrhs: usize) -> Result<()> {
        if self.n == 0 || nrhs == 0 {
            return Ok(());
        }
        let ni = to_int(self.n)?;
        let mut info: c_int = 0;
        unsafe {
            lapack::dgetrs_(
                b"N\0".as_ptr() as _,
                &ni,
                &to_int(nrhs)?,
                self.lu.as_ptr(),
                &ni,
                self.pivots.as_ptr(),
                x.as_mut_ptr(),
                &ni,
                &mut info,
            )
        };
        check("dgetrs", info)
    }
}

/// Thin SVD `a = U diag(s) Vᵀ` of a small dense matrix; `u` is `m×r`,
/// `vt` is `r×n` with `r = min(m, n)`, singular values descending.
pub fn thin_svd(a: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (m, n) = a.dim();
    let r = m.min(n);
    let owned = a.as_standard_layout().into_owned();
    let (u, s, vt) = owned.svd(true, true)?;
    let u = u.expect("requested U");
    let vt = vt.expect("requested Vt");
    Ok((
        u.slice(s![.., ..r]).to_owned(),
        s,
        vt.slice(s![..r, ..]).to_owned(),
    ))
}

/// `U_d U_dᵀ` for the leading `d` columns of `u`; symmetric bit for bit.
pub fn leading_projector(u: ArrayView2<f64>, d: usize) -> Array2<f64> {
    let n = u.nrows();
    let mut p = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..=a {
            let mut acc = 0.0;
            for m in 0..d {
                acc += u[[a, m]] * u[[b, m]];
            }
            p[[a, b]] = acc;
            p[[b, a]] = acc;
        }
    }
    p
}

/// Replace `a` by `(a + aᵀ)/2`, leaving it exactly symmetric.
pub fn symmetrize_in_place(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5);
        symmetrize_in_place(&mut a);
        a
    }

    #[test]
    fn full_eigen_reconstructs_matrix() {
        let a = random_symmetric(40, 1);
        let eig = symmetric_eigen(a.view(), EigenSelection::All).unwrap();
        let recon = eig.vectors.dot(&Array2::from_diag(&eig.values)).dot(&eig.vectors.t());
        let err = (&recon - &a).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12, "{err}");
        let gram = eig.vectors.t().dot(&eig.vectors);
        let orth = (&gram - &Array2::<f64>::eye(40)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(orth < 1e-12);
    }

    #[test]
    fn partial_selections_agree_with_full_spectrum() {
        let a = random_symmetric(60, 7);
        let full = symmetric_eigenvalues(a.view()).unwrap();
        let low = symmetric_eigen(a.view(), EigenSelection::Smallest(5)).unwrap();
        for k in 0..5 {
            assert!((low.values[k] - full[k]).abs() < 1e-12);
            let v = low.vectors.column(k);
            let resid = a.dot(&v) - &v * low.values[k];
            assert!(resid.iter().all(|r| r.abs() < 1e-10));
        }
        let big = symmetric_eigen(a.view(), EigenSelection::LargestMagnitude(7)).unwrap();
        let mut mags: Vec<f64> = full.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut got: Vec<f64> = big.values.iter().map(|v| v.abs()).collect();
        got.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (g, m) in got.iter().zip(&mags) {
            assert!((g - m).abs() < 1e-12);
        }
    }

    #[test]
    fn magnitude_threshold_drops_small_values() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 1e-8, 0.0], [0.0, 0.0, -2.0]];
        let eig = symmetric_eigen(a.view(), EigenSelection::MagnitudeAbove(1e-6)).unwrap();
        assert_eq!(eig.values.len(), 2);
        assert!((eig.values[0] + 2.0).abs() < 1e-15);
        assert!((eig.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lu_solves_and_flags_singular() {
        let a = array![[4.0, 1.0], [2.0, 3.0]];
        let lu = LuFactor::new(a.view()).unwrap();
        let x = lu.solve(array![1.0, 2.0].view()).unwrap();
        let r = a.dot(&x) - array![1.0, 2.0];
        assert!(r.iter().all(|v| v.abs() < 1e-14));
        let singular = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(matches!(
            LuFactor::new(singular.view()),
            Err(Error::SingularSystem { .. })
        ));
    }
}
