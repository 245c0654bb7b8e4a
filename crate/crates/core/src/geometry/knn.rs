use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::PointCloud;

/// Exact neighbor lists, ascending by distance with ties broken by index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    pub indices: Array2<usize>,
    pub distances: Array2<f64>,
    pub include_self: bool,
}

impl NeighborTable {
    pub fn len(&self) -> usize {
        self.indices.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.nrows() == 0
    }

    pub fn k(&self) -> usize {
        self.indices.ncols()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        self.indices
            .row(i)
            .to_slice()
            .expect("neighbor table is row-major")
    }
}

/// Brute-force search, parallel over query points. With `include_self` the
/// point itself is the first entry and counts toward `k`.
pub fn knn(cloud: &PointCloud, k: usize, include_self: bool) -> Result<NeighborTable> {
    let n = cloud.len();
    let limit = if include_self { n } else { n - 1 };
    if k == 0 || k > limit {
        return Err(Error::InvalidParameter(format!(
            "k = {k} neighbors requested from {n} points (include_self = {include_self})"
        )));
    }
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| include_self || j != i)
                .map(|j| (cloud.squared_distance(i, j), j))
                .collect();
            // Self has distance exactly 0 and the smallest index among
            // zero-distance points since points are distinct.
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.sort_unstable_by(cmp);
            cand.into_iter().map(|(d2, j)| (j, d2.sqrt())).unzip()
        })
        .collect();
    let mut indices = Array2::zeros((n, k));
    let mut distances = Array2::zeros((n, k));
    for (i, (idx, dist)) in rows.into_iter().enumerate() {
        for c in 0..k {
            indices[[i, c]] = idx[c];
            distances[[i, c]] = dist[c];
        }
    }
    Ok(NeighborTable {
        indices,
        distances,
        include_self,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn collinear_points() {
        let cloud = PointCloud::new(array![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]], 1).unwrap();
        let t = knn(&cloud, 1, false).unwrap();
        assert_eq!(t.indices.column(0).to_vec(), vec![1, 0, 1]);
        let s = knn(&cloud, 2, true).unwrap();
        for i in 0..3 {
            assert_eq!(s.indices[[i, 0]], i);
            assert_eq!(s.distances[[i, 0]], 0.0);
        }
        assert!(knn(&cloud, 3, false).is_err());
        assert!(knn(&cloud, 3, true).is_ok());
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let cloud =
            PointCloud::new(array![[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]], 1).unwrap();
        let t = knn(&cloud, 2, false).unwrap();
        assert_eq!(t.row(0), &[1, 2]);
    }
}
