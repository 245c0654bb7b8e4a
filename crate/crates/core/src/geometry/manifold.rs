//! Closed-form test manifolds: embedding, metric, and the manufactured
//! solution with its forcing.
//!
//! Both manifolds use `u`, `κ`, `c = 1` fixed by construction; the forcing
//! `f = -div_g(κ grad_g u) + c u` is written out by hand in chart
//! coordinates.

use crate::scalar::Scalar;

/// Ellipse `θ ↦ (cos θ, a sin θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse<T> {
    pub a: T,
}

impl<T: Scalar> Ellipse<T> {
    pub fn new(a: T) -> Self {
        Ellipse { a }
    }

    pub fn embed(&self, theta: T) -> [T; 2] {
        [theta.cos(), self.a * theta.sin()]
    }

    /// Metric determinant `|g| = sin²θ + a² cos²θ`.
    pub fn metric_det(&self, theta: T) -> T {
        let (s, c) = theta.sin_cos();
        s * s + self.a * self.a * c * c
    }

    /// Unit tangent `(-sin θ, a cos θ)/‖·‖`.
    pub fn unit_tangent(&self, theta: T) -> [T; 2] {
        let (s, c) = theta.sin_cos();
        let norm = self.metric_det(theta).sqrt();
        [-s / norm, self.a * c / norm]
    }

    pub fn solution(&self, theta: T) -> T {
        let s = theta.sin();
        s * s
    }

    pub fn kappa(&self, theta: T) -> T {
        let s = theta.sin();
        T::lit(1.1) + s * s
    }

    pub fn reaction(&self, _theta: T) -> T {
        T::one()
    }

    /// `f = -|g|^{-1/2} ∂_θ(κ |g|^{1/2} g^{11} ∂_θ u) + c u` with `g^{11} = 1/|g|`.
    pub fn forcing(&self, theta: T) -> T {
        let two = T::lit(2.0);
        let s = theta.sin();
        let (s2, c2) = (two * theta).sin_cos();
        let g = self.metric_det(theta);
        let dg = (T::one() - self.a * self.a) * s2;
        let u = s * s;
        let du = s2;
        let ddu = two * c2;
        let kappa = T::lit(1.1) + s * s;
        let dkappa = s2;
        // flux = κ g^{-1/2} u'
        let dflux_over_sqrtg = dkappa * du / g - kappa * dg * du / (two * g * g) + kappa * ddu / g;
        -dflux_over_sqrtg + self.reaction(theta) * u
    }
}

/// Torus `(θ, φ) ↦ ((R + r cos θ) cos φ, (R + r cos θ) sin φ, r sin θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Torus<T> {
    pub major: T,
    pub minor: T,
}

impl<T: Scalar> Torus<T> {
    pub fn new(major: T, minor: T) -> Self {
        Torus { major, minor }
    }

    pub fn embed(&self, theta: T, phi: T) -> [T; 3] {
        let w = self.major + self.minor * theta.cos();
        [w * phi.cos(), w * phi.sin(), self.minor * theta.sin()]
    }

    /// `|g| = r² (R + r cos θ)²`.
    pub fn metric_det(&self, theta: T) -> T {
        let w = self.major + self.minor * theta.cos();
        self.minor * self.minor * w * w
    }

    /// Orthonormal tangent frame `(∂_θ ι / r, ∂_φ ι / (R + r cos θ))`.
    pub fn tangent_frame(&self, theta: T, phi: T) -> [[T; 3]; 2] {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        [[-st * cp, -st * sp, ct], [-sp, cp, T::zero()]]
    }

    pub fn solution(&self, theta: T, phi: T) -> T {
        phi.sin() * theta.sin()
    }

    pub fn kappa(&self, theta: T, phi: T) -> T {
        let (st, cp) = (theta.sin(), phi.cos());
        T::lit(1.1) + st * st * cp * cp
    }

    pub fn reaction(&self, _theta: T, _phi: T) -> T {
        T::one()
    }

    /// `f = -|g|^{-1/2}[∂_θ(κ |g|^{1/2} g^{11} u_θ) + ∂_φ(κ |g|^{1/2} g^{22} u_φ)] + c u`
    /// with `g^{11} = 1/r²`, `g^{22} = (R + r cos θ)^{-2}`.
    pub fn forcing(&self, theta: T, phi: T) -> T {
        let two = T::lit(2.0);
        let r = self.minor;
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let w = self.major + r * ct;
        let dw = -r * st;

        let u = sp * st;
        let u_t = sp * ct;
        let u_tt = -sp * st;
        let u_p = cp * st;
        let u_pp = -sp * st;

        let kappa = T::lit(1.1) + st * st * cp * cp;
        let kappa_t = two * st * ct * cp * cp;
        let kappa_p = -two * st * st * cp * sp;

        // ∂_θ(κ W u_θ) / (r² W) + ∂_φ(κ u_φ) / W²
        let theta_part = (kappa_t * w * u_t + kappa * dw * u_t + kappa * w * u_tt) / (r * r * w);
        let phi_part = (kappa_p * u_p + kappa * u_pp) / (w * w);
        -(theta_part + phi_part) + self.reaction(theta, phi) * u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Centered-difference evaluation of the divergence-form operator on the
    /// ellipse, built only from `|g|`, `κ`, and `u`.
    fn ellipse_fd(e: &Ellipse<f64>, t: f64, h: f64) -> f64 {
        let flux = |t: f64| {
            let du = (e.solution(t + h) - e.solution(t - h)) / (2.0 * h);
            e.kappa(t) * e.metric_det(t).sqrt() / e.metric_det(t) * du
        };
        let dflux = (flux(t + h) - flux(t - h)) / (2.0 * h);
        -dflux / e.metric_det(t).sqrt() + e.reaction(t) * e.solution(t)
    }

    fn torus_fd(tr: &Torus<f64>, t: f64, p: f64, h: f64) -> f64 {
        let sqrt_g = |t: f64| tr.metric_det(t).sqrt();
        let r = tr.minor;
        let w = |t: f64| tr.major + r * t.cos();
        let flux_t = |t: f64, p: f64| {
            let du = (tr.solution(t + h, p) - tr.solution(t - h, p)) / (2.0 * h);
            tr.kappa(t, p) * sqrt_g(t) / (r * r) * du
        };
        let flux_p = |t: f64, p: f64| {
            let du = (tr.solution(t, p + h) - tr.solution(t, p - h)) / (2.0 * h);
            tr.kappa(t, p) * sqrt_g(t) / (w(t) * w(t)) * du
        };
        let div = (flux_t(t + h, p) - flux_t(t - h, p)) / (2.0 * h)
            + (flux_p(t, p + h) - flux_p(t, p - h)) / (2.0 * h);
        -div / sqrt_g(t) + tr.solution(t, p)
    }

    #[test]
    fn ellipse_values_at_chart_origin() {
        let e = Ellipse::new(2.0f64);
        assert_eq!(e.metric_det(0.0), 4.0);
        assert_eq!(e.embed(0.0), [1.0, 0.0]);
        assert_eq!(e.solution(0.0), 0.0);
    }

    #[test]
    fn ellipse_forcing_matches_finite_differences() {
        let e = Ellipse::new(2.0f64);
        for i in 0..400 {
            let t = i as f64 * std::f64::consts::TAU / 400.0 + 0.0123;
            let exact = e.forcing(t);
            let fd = ellipse_fd(&e, t, 1e-5);
            let scale = exact.abs().max(1.0);
            assert!((exact - fd).abs() / scale < 1e-6, "θ={t}: {exact} vs {fd}");
        }
    }

    #[test]
    fn torus_values_at_chart_origin() {
        let t = Torus::new(2.0f64, 1.0);
        assert_eq!(t.embed(0.0, 0.0), [3.0, 0.0, 0.0]);
        assert_eq!(t.solution(0.0, 0.0), 0.0);
    }

    #[test]
    fn torus_forcing_matches_finite_differences() {
        let tr = Torus::new(2.0f64, 1.0);
        for i in 0..40 {
            for j in 0..40 {
                let t = i as f64 * std::f64::consts::TAU / 40.0 + 0.017;
                let p = j as f64 * std::f64::consts::TAU / 40.0 + 0.031;
                let exact = tr.forcing(t, p);
                let fd = torus_fd(&tr, t, p, 1e-5);
                let scale = exact.abs().max(1.0);
                assert!((exact - fd).abs() / scale < 1e-6, "({t},{p}): {exact} vs {fd}");
            }
        }
    }

    #[test]
    fn torus_frame_is_orthonormal_and_tangent() {
        let tr = Torus::new(2.0f64, 1.0);
        let (t, p) = (0.7, 2.1);
        let [a, b] = tr.tangent_frame(t, p);
        let dot = |x: &[f64; 3], y: &[f64; 3]| x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>();
        assert!((dot(&a, &a) - 1.0).abs() < 1e-15);
        assert!((dot(&b, &b) - 1.0).abs() < 1e-15);
        assert!(dot(&a, &b).abs() < 1e-15);
        let h = 1e-6;
        let x1 = tr.embed(t + h, p);
        let x0 = tr.embed(t - h, p);
        let d: Vec<f64> = x1.iter().zip(&x0).map(|(u, v)| (u - v) / (2.0 * h * tr.minor)).collect();
        for m in 0..3 {
            assert!((d[m] - a[m]).abs() < 1e-8);
        }
    }
}
