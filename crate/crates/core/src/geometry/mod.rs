//! Point clouds, analytic test manifolds, text ingestion, and exact k-nearest
//! neighbors.
//!
//! Samples are reproducible across platforms: intrinsic parameters are drawn
//! from `ChaCha8Rng::seed_from_u64(seed)` as `2π · U`, where `U` is the
//! 53-bit uniform double produced by `rand`'s standard distribution. Points are
//! generated in order, one parameter tuple per point (`θ` then `φ` on the
//! torus). Parameters are uniform in chart coordinates, which on the torus is
//! not the uniform surface measure.

mod io;
mod knn;
pub mod manifold;

use std::cmp::Ordering;
use std::f64::consts::TAU;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use io::{load_point_cloud, write_point_cloud};
pub use knn::{knn, NeighborTable};
pub use manifold::{Ellipse, Torus};

/// `N` distinct points in `R^n` sampled from a `d`-dimensional manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Array2<f64>,
    intrinsic_dim: usize,
}

impl PointCloud {
    pub fn new(points: Array2<f64>, intrinsic_dim: usize) -> Result<Self> {
        let (n_points, ambient) = points.dim();
        if ambient < 2 {
            return Err(Error::InvalidParameter(format!(
                "ambient dimension must be at least 2, got {ambient}"
            )));
        }
        if intrinsic_dim == 0 || intrinsic_dim >= ambient {
            return Err(Error::InvalidParameter(format!(
                "intrinsic dimension {intrinsic_dim} must lie in 1..{ambient}"
            )));
        }
        if n_points < intrinsic_dim + 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least {} points for d = {intrinsic_dim}, got {n_points}",
                intrinsic_dim + 2
            )));
        }
        if let Some(((i, _), _)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        if let Some((first, second)) = find_duplicate(points.view()) {
            return Err(Error::DuplicatePoint { first, second });
        }
        Ok(PointCloud {
            points,
            intrinsic_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    #[inline]
    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.points
            .row(i)
            .iter()
            .zip(self.points.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

fn find_duplicate(points: ArrayView2<f64>) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.nrows()).collect();
    let cmp = |a: &usize, b: &usize| -> Ordering {
        for (x, y) in points.row(*a).iter().zip(points.row(*b)) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        a.cmp(b)
    };
    order.sort_by(cmp);
    order.windows(2).find_map(|w| {
        (points.row(w[0]) == points.row(w[1])).then(|| (w[0].min(w[1]), w[0].max(w[1])))
    })
}

/// Which analytic manifold a sample came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticShape {
    Ellipse { a: f64 },
    Torus { major: f64, minor: f64 },
}

impl AnalyticShape {
    /// Exact tangent projection at the given intrinsic parameters.
    pub fn tangent_projection(&self, params: &[f64]) -> Array2<f64> {
        match *self {
            AnalyticShape::Ellipse { a } => {
                let t = Ellipse::new(a).unit_tangent(params[0]);
                Array2::from_shape_fn((2, 2), |(i, j)| t[i] * t[j])
            }
            AnalyticShape::Torus { major, minor } => {
                let f = Torus::new(major, minor).tangent_frame(params[0], params[1]);
                Array2::from_shape_fn((3, 3), |(i, j)| f[0][i] * f[0][j] + f[1][i] * f[1][j])
            }
        }
    }
}

/// A cloud sampled from an analytic manifold together with the manufactured
/// solution restricted to it.
#[derive(Debug, Clone)]
pub struct ManifoldSample {
    pub shape: AnalyticShape,
    pub cloud: PointCloud,
    /// Intrinsic parameters, one row per point (`θ` or `(θ, φ)`), radians.
    pub params: Array2<f64>,
    pub truth_u: Array1<f64>,
    pub kappa: Array1<f64>,
    pub c_field: Array1<f64>,
    pub forcing_f: Array1<f64>,
}

impl ManifoldSample {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn tangent_projection(&self, i: usize) -> Array2<f64> {
        self.shape
            .tangent_projection(self.params.row(i).as_slice().expect("row-major params"))
    }
}

/// `N` i.i.d. uniform angles on the ellipse `(cos θ, a sin θ)`.
pub fn sample_ellipse(n_points: usize, a: f64, seed: u64) -> Result<ManifoldSample> {
    if n_points < 4 {
        return Err(Error::InvalidParameter(format!(
            "ellipse sample needs N >= 4, got {n_points}"
        )));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("ellipse axis a = {a} must be positive")));
    }
    let ellipse = Ellipse::new(a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..n_points).map(|_| TAU * rng.random::<f64>()).collect();
    let points = Array2::from_shape_fn((n_points, 2), |(i, m)| ellipse.embed(theta[i])[m]);
    let params = Array2::from_shape_vec((n_points, 1), theta.clone()).expect("shape");
    let field = |f: &dyn Fn(f64) -> f64| theta.iter().map(|&t| f(t)).collect::<Array1<f64>>();
    Ok(ManifoldSample {
        shape: AnalyticShape::Ellipse { a },
        cloud: PointCloud::new(points, 1)?,
        truth_u: field(&|t| ellipse.solution(t)),
        kappa: field(&|t| ellipse.kappa(t)),
        c_field: field(&|t| ellipse.reaction(t)),
        forcing_f: field(&|t| ellipse.forcing(t)),
        params,
    })
}

/// `N` i.i.d. uniform `(θ, φ)` pairs on the torus of radii `R > r > 0`.
pub fn sample_torus(n_points: usize, major: f64, minor: f64, seed: u64) -> Result<ManifoldSample> {
    if n_points < 6 {
        return Err(Error::InvalidParameter(format!(
            "torus sample needs N >= 6, got {n_points}"
        )));
    }
    if !(minor > 0.0 && minor < major && major.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "torus radii must satisfy 0 < r < R, got R = {major}, r = {minor}"
        )));
    }
    let torus = Torus::new(major, minor);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Array2::zeros((n_points, 2));
    for i in 0..n_points {
        params[[i, 0]] = TAU * rng.random::<f64>();
        params[[i, 1]] = TAU * rng.random::<f64>();
    }
    let points = Array2::from_shape_fn((n_points, 3), |(i, m)| {
        torus.embed(params[[i, 0]], params[[i, 1]])[m]
    });
    let field = |f: &dyn Fn(f64, f64) -> f64| {
        params
            .rows()
            .into_iter()
            .map(|row| f(row[0], row[1]))
            .collect::<Array1<f64>>()
    };
    Ok(ManifoldSample {
        shape: AnalyticShape::Torus { major, minor },
        cloud: PointCloud::new(points, 2)?,
        truth_u: field(&|t, p| torus.solution(t, p)),
        kappa: field(&|t, p| torus.kappa(t, p)),
        c_field: field(&|t, p| torus.reaction(t, p)),
        forcing_f: field(&|t, p| torus.forcing(t, p)),
        params,
    })
}

/// `⌈√N⌉`, the default neighborhood size for tangent estimation.
pub fn default_tangent_neighbors(n_points: usize) -> usize {
    (n_points as f64).sqrt().ceil() as usize
}
