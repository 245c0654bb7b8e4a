//! Radial kernels.

use std::fmt;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    /// `φ_s(r) = 1 / (1 + (s r)²)`
    InverseQuadratic,
    /// `φ_s(r) = (1 + s r) e^{-s r}`
    Matern,
    /// `φ(r) = r³` with a degree-one polynomial tail in ambient coordinates.
    PolyharmonicCubic,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::InverseQuadratic => "inverse-quadratic",
            KernelFamily::Matern => "matern",
            KernelFamily::PolyharmonicCubic => "phs3",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iq" | "inverse-quadratic" | "inverse_quadratic" => Ok(KernelFamily::InverseQuadratic),
            "matern" => Ok(KernelFamily::Matern),
            "phs" | "phs3" | "polyharmonic" => Ok(KernelFamily::PolyharmonicCubic),
            other => Err(format!("unknown kernel family `{other}`")),
        }
    }
}

/// A radial kernel with its shape parameter. The shape is ignored by the
/// polyharmonic spline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub family: KernelFamily,
    pub shape: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn inverse_quadratic(shape: T) -> Self {
        KernelSpec {
            family: KernelFamily::InverseQuadratic,
            shape,
        }
    }

    pub fn matern(shape: T) -> Self {
        KernelSpec {
            family: KernelFamily::Matern,
            shape,
        }
    }

    pub fn polyharmonic() -> Self {
        KernelSpec {
            family: KernelFamily::PolyharmonicCubic,
            shape: T::one(),
        }
    }

    /// True when interpolation needs the bordered system with a linear tail.
    pub fn has_polynomial_tail(&self) -> bool {
        self.family == KernelFamily::PolyharmonicCubic
    }

    #[inline]
    pub fn value(&self, r: T) -> T {
        let s = self.shape;
        match self.family {
            KernelFamily::InverseQuadratic => {
                let sr = s * r;
                T::one() / (T::one() + sr * sr)
            }
            KernelFamily::Matern => {
                let sr = s * r;
                (T::one() + sr) * (-sr).exp()
            }
            KernelFamily::PolyharmonicCubic => r * r * r,
        }
    }

    /// `φ'(r) / r`, finite at `r = 0` for every supported family, so that the
    /// ambient gradient of `x ↦ φ(‖x − y‖)` is `(φ'(r)/r) (x − y)`.
    #[inline]
    pub fn derivative_over_r(&self, r: T) -> T {
        let s = self.shape;
        match self.family {
            KernelFamily::InverseQuadratic => {
                let q = T::one() + s * s * r * r;
                -(T::lit(2.0) * s * s) / (q * q)
            }
            KernelFamily::Matern => -(s * s) * (-(s * r)).exp(),
            KernelFamily::PolyharmonicCubic => T::lit(3.0) * r,
        }
    }

    /// Ambient gradient of `x ↦ φ(‖x − y‖)` given `diff = x − y`.
    #[inline]
    pub fn gradient(&self, diff: &[T], out: &mut [T]) {
        let r = diff.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        let scale = self.derivative_over_r(r);
        for (o, &d) in out.iter_mut().zip(diff) {
            *o = scale * d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let iq = KernelSpec::inverse_quadratic(1.0f64);
        assert_eq!(iq.value(0.0), 1.0);
        assert_eq!(iq.value(1.0), 0.5);
        let m = KernelSpec::matern(2.5f64);
        assert_eq!(m.value(0.0), 1.0);
        let mut prev = 1.0;
        for i in 1..200 {
            let v = m.value(i as f64 * 0.05);
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(m.value(60.0) < 1e-60);
        assert_eq!(KernelSpec::<f64>::polyharmonic().value(2.0), 8.0);
    }

    #[test]
    fn gradients_match_central_differences() {
        let y = [0.3, -0.2, 0.5];
        let x = [1.1, 0.4, -0.7];
        let h = 1e-6;
        for spec in [
            KernelSpec::inverse_quadratic(1.2f64),
            KernelSpec::matern(2.5),
            KernelSpec::polyharmonic(),
        ] {
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let mut g = [0.0; 3];
            spec.gradient(&diff, &mut g);
            for m in 0..3 {
                let f = |t: f64| {
                    let mut d = diff.clone();
                    d[m] += t;
                    spec.value(d.iter().map(|v| v * v).sum::<f64>().sqrt())
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                assert!((fd - g[m]).abs() < 1e-7, "{:?} m={m}: {fd} vs {}", spec.family, g[m]);
            }
        }
    }

    #[test]
    fn inverse_quadratic_gradient_formula() {
        // -2 s² (x - y) / (1 + s² r²)²
        let s = 1.7f64;
        let diff = [0.4, -0.3];
        let r2: f64 = 0.25;
        let mut g = [0.0; 2];
        KernelSpec::inverse_quadratic(s).gradient(&diff, &mut g);
        for m in 0..2 {
            let expect = -2.0 * s * s * diff[m] / (1.0 + s * s * r2).powi(2);
            assert!((g[m] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn single_precision_kernel() {
        let k = KernelSpec::inverse_quadratic(1.0f32);
        assert_eq!(k.value(1.0), 0.5f32);
    }
}
