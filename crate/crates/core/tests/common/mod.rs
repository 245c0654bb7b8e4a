#![allow(dead_code)]

use std::f64::consts::TAU;

use manifold_pde::geometry::{knn, PointCloud};
use manifold_pde::tangent::{estimate_tangent_second_order, ProjectionField};
use ndarray::{Array1, Array2, Array3};

/// `n` equispaced points on the circle of radius `r`, with their angles.
pub fn circle_grid(n: usize, r: f64) -> (PointCloud, Array1<f64>) {
    let theta = Array1::from_shape_fn(n, |i| TAU * i as f64 / n as f64);
    let pts = Array2::from_shape_fn((n, 2), |(i, m)| {
        if m == 0 { r * theta[i].cos() } else { r * theta[i].sin() }
    });
    (PointCloud::new(pts, 1).unwrap(), theta)
}

/// Exact tangent projections of the unit circle at the given angles.
pub fn circle_projection(theta: &Array1<f64>) -> ProjectionField {
    let n = theta.len();
    let matrices = Array3::from_shape_fn((n, 2, 2), |(i, a, b)| {
        let t = [-theta[i].sin(), theta[i].cos()];
        t[a] * t[b]
    });
    ProjectionField {
        matrices,
        order: manifold_pde::tangent::TangentOrder::Second,
        fallback: vec![false; n],
    }
}

pub fn estimated_projection(cloud: &PointCloud) -> ProjectionField {
    let k = manifold_pde::geometry::default_tangent_neighbors(cloud.len());
    let nb = knn(cloud, k, false).unwrap();
    estimate_tangent_second_order(cloud, &nb, cloud.intrinsic_dim()).unwrap()
}

pub fn linf(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Exact projections of an analytic sample.
pub fn projection_from(s: &manifold_pde::geometry::ManifoldSample) -> ProjectionField {
    let n = s.len();
    let amb = s.cloud.ambient_dim();
    let mut matrices = Array3::zeros((n, amb, amb));
    for i in 0..n {
        matrices.index_axis_mut(ndarray::Axis(0), i).assign(&s.tangent_projection(i));
    }
    ProjectionField {
        matrices,
        order: manifold_pde::tangent::TangentOrder::Second,
        fallback: vec![false; n],
    }
}
