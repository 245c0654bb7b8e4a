//! Plain-text point clouds: one point per line, coordinates separated by
//! whitespace or commas, `#` starts a comment.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

use super::PointCloud;

pub fn load_point_cloud(path: &Path, ambient_dim: usize, intrinsic_dim: usize) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut coords = Vec::new();
    let mut rows = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        if fields.len() != ambient_dim {
            return Err(parse_err(format!(
                "expected {ambient_dim} coordinates, found {}",
                fields.len()
            )));
        }
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(format!("`{f}` is not a real number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("`{f}` is not finite")));
            }
            coords.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyCloud(path.to_path_buf()));
    }
    let points = Array2::from_shape_vec((rows, ambient_dim), coords).expect("row-major shape");
    PointCloud::new(points, intrinsic_dim)
}

/// Writes shortest round-trip decimal representations, so loading the file
/// reproduces the coordinates bit for bit.
pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * cloud.ambient_dim() * 24);
    out.push_str(&format!(
        "# {} points, ambient dimension {}, intrinsic dimension {}\n",
        cloud.len(),
        cloud.ambient_dim(),
        cloud.intrinsic_dim()
    ));
    for row in cloud.points().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
