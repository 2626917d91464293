//! Exact formulas on balls.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::quad::{integrate, integrate_sphere, QuadOpts};
use crate::specialfn::{
    beta_fn, c_ns, digamma_unchecked, inc_beta_reg_unchecked, kappa_ns, sphere_area, tau_ns, torsion_coeff,
};

/// The ball `B_r(0) ⊂ R^N` together with an order `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallProblem {
    pub dim: usize,
    pub r: f64,
    pub s: f64,
}

/// Value of the `s`-derivative of the torsion function. `at_boundary` is set
/// when `|x| ≥ r`, where the value is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub value: f64,
    pub at_boundary: bool,
}

impl BallProblem {
    pub fn new(dim: usize, r: f64, s: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("dimension must be at least 2"));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid(format!("radius must be positive, got {r}")));
        }
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::invalid(format!("order s must lie in (0, 1], got {s}")));
        }
        Ok(BallProblem { dim, r, s })
    }

    /// `u_s(x) = γ_{N,s}(r² − |x|²)_+^s`.
    pub fn torsion(&self, x: &Point) -> f64 {
        let q = self.r * self.r - x.norm2();
        if q <= 0.0 {
            0.0
        } else {
            torsion_coeff(self.dim, self.s) * q.powf(self.s)
        }
    }

    /// `∂_s u_s(x) = u_s(x)[ln(r² − |x|²) − (2 ln 2 + ψ(N/2+s) + ψ(s+1))]`.
    pub fn torsion_s_derivative(&self, x: &Point) -> Derivative {
        let q = self.r * self.r - x.norm2();
        if q <= 0.0 {
            return Derivative {
                value: 0.0,
                at_boundary: true,
            };
        }
        let bracket = q.ln()
            - (2.0 * std::f64::consts::LN_2
                + digamma_unchecked(0.5 * self.dim as f64 + self.s)
                + digamma_unchecked(self.s + 1.0));
        Derivative {
            value: self.torsion(x) * bracket,
            at_boundary: false,
        }
    }

    /// `sup G_s 1 = γ_{N,s} r^{2s}`, attained at the centre.
    pub fn norm(&self) -> f64 {
        torsion_coeff(self.dim, self.s) * self.r.powf(2.0 * self.s)
    }

    /// `∫ u_s = γ_{N,s} |S^{N−1}| r^{N+2s} B(N/2, s+1) / 2`.
    pub fn torsion_mass(&self) -> f64 {
        let n = self.dim as f64;
        torsion_coeff(self.dim, self.s) * sphere_area(self.dim) * self.r.powf(n + 2.0 * self.s)
            * beta_fn(0.5 * n, self.s + 1.0)
            * 0.5
    }

    /// `w_s(x) = −c_{N,s} ∫_{B_r} u_s(y) |x−y|^{−N−2s} dy` for `|x| > r`.
    ///
    /// After angular integration the integrand is radial; the `(r²−ρ²)^s`
    /// edge is removed by `ρ = r − r·w^{1/s}`.
    pub fn exterior_flux_w(&self, x: &Point, tol: f64) -> Result<f64> {
        let a = x.norm();
        if a <= self.r {
            return Err(Error::NotExterior(*x));
        }
        let (n, s, r) = (self.dim, self.s, self.r);
        let gamma = torsion_coeff(n, s);
        let opts = QuadOpts::tol(tol).with_rel(1e-10).with_pieces(4).with_max_intervals(2000);
        let v = integrate(
            |w: f64| {
                if w <= 0.0 {
                    return 0.0;
                }
                let rho = r - r * w.powf(1.0 / s);
                // (r²−ρ²)^s dρ = r^s (r+ρ)^s w^{1/s} (r/s) dw
                let weight = r.powf(s) * (r + rho).powf(s) * w.powf(1.0 / s) * r / s;
                gamma * weight * rho.powi(n as i32 - 1) * shell_kernel(n, s, a, rho, tol)
            },
            0.0,
            1.0,
            opts,
        );
        if !v.converged {
            return Err(Error::QuadratureCap { tol, estimate: v.error });
        }
        Ok(-c_ns(n, s) * v.value)
    }
}

/// `∫_{S^{N−1}} |x − ρω|^{−N−2s} dω` for `|x| = a`.
fn shell_kernel(n: usize, s: f64, a: f64, rho: f64, tol: f64) -> f64 {
    let p = -0.5 * (n as f64 + 2.0 * s);
    let d0 = (a - rho) * (a - rho);
    let f = |phi: f64| {
        // a² + ρ² − 2aρ cos φ written to avoid cancellation near φ = 0
        let sh = (0.5 * phi).sin();
        (d0 + 4.0 * a * rho * sh * sh).powf(p) * phi.sin().powi(n as i32 - 2)
    };
    let scale = d0.powf(p);
    let width = ((a - rho) / (a + rho)).max(1e-12);
    let breaks = [width, 4.0 * width, 16.0 * width];
    let v = crate::quad::integrate_with_breaks(
        &mut { f },
        0.0,
        PI,
        &breaks,
        QuadOpts::tol(1e-3 * tol * scale).with_rel(1e-11).with_max_intervals(400),
    );
    sphere_area(n - 1) * v.value
}

/// `F_s(z) = κ_{N,s} |z|^{2s−N}`.
pub fn fundamental_solution(dim: usize, s: f64, z: &Point) -> Result<f64> {
    let r = z.norm();
    if r == 0.0 {
        return Err(Error::Singular("fundamental solution at z = 0".into()));
    }
    Ok(kappa_ns(dim, s) * r.powf(2.0 * s - dim as f64))
}

/// Poisson kernel of the unit ball,
/// `P_s(x,z) = τ_{N,s} (1−|x|²)^s/(|z|²−1)^s |x−z|^{−N}`.
pub fn ball_poisson_kernel(dim: usize, s: f64, x: &Point, z: &Point) -> Result<f64> {
    let x2 = x.norm2();
    let z2 = z.norm2();
    if x2 >= 1.0 {
        return Err(Error::OutsideDomain(*x));
    }
    if z2 <= 1.0 {
        return Err(Error::NotExterior(*z));
    }
    Ok(tau_ns(dim, s) * ((1.0 - x2) / (z2 - 1.0)).powf(s) * x.dist(z).powi(-(dim as i32)))
}

/// `v_{r,z}(x) = γ_{N,s} (|x−z|² − r²)_+^s / |x−z|^N`.
pub fn exterior_barrier(dim: usize, s: f64, r: f64, center: &Point, x: &Point) -> f64 {
    let d2 = (*x - *center).norm2();
    let q = d2 - r * r;
    if q <= 0.0 {
        0.0
    } else {
        torsion_coeff(dim, s) * q.powf(s) / d2.powf(0.5 * dim as f64)
    }
}

/// Green function of the unit ball,
/// `G_s(x,y) = κ_{N,s} |x−y|^{2s−N} I_{q/(1+q)}(s, N/2 − s)` with
/// `q = (1−|x|²)(1−|y|²)/|x−y|²` and `I` the regularised incomplete beta
/// function. Requires `s < N/2`.
pub fn ball_green_function(dim: usize, s: f64, x: &Point, y: &Point) -> Result<f64> {
    let d2 = (*x - *y).norm2();
    if d2 == 0.0 {
        return Err(Error::Singular("ball Green function at x = y".into()));
    }
    let b = 0.5 * dim as f64 - s;
    if !(s > 0.0 && b > 0.0) {
        return Err(Error::invalid("ball Green function needs 0 < s < N/2"));
    }
    let qx = 1.0 - x.norm2();
    let qy = 1.0 - y.norm2();
    if qx <= 0.0 || qy <= 0.0 {
        return Ok(0.0);
    }
    let q = qx * qy / d2;
    Ok(kappa_ns(dim, s) * d2.powf(s - 0.5 * dim as f64) * inc_beta_reg_unchecked(s, b, q / (1.0 + q)))
}

/// Green function of `B_R(0)`: `R^{2s−N} G_s(x/R, y/R)`.
pub fn ball_green_function_r(dim: usize, s: f64, radius: f64, x: &Point, y: &Point) -> Result<f64> {
    let k = 1.0 / radius;
    Ok(radius.powf(2.0 * s - dim as f64) * ball_green_function(dim, s, &(*x * k), &(*y * k))?)
}

/// `[G_s g](x) = ∫_{B_R} G_s(x,y) g(y) dy` by quadrature in polar coordinates
/// around `x`. Along each ray the substitution `t = b·v^{1/(2s)}` absorbs the
/// `|x−y|^{2s−N}` singularity.
pub fn ball_green_apply(
    dim: usize,
    s: f64,
    radius: f64,
    g: &dyn Fn(&Point) -> f64,
    x: &Point,
    tol: f64,
) -> Result<f64> {
    let x2 = x.norm2();
    if x2 >= radius * radius {
        return Err(Error::OutsideDomain(*x));
    }
    let kappa = kappa_ns(dim, s);
    let b = 0.5 * dim as f64 - s;
    let mut ok = true;
    let r = integrate_sphere(
        dim,
        |th| {
            let p = x.dot(&th);
            let len = -p + (p * p + radius * radius - x2).sqrt();
            let inner = integrate(
                |v: f64| {
                    let t = len * v.powf(0.5 / s);
                    let y = *x + th * t;
                    let qx = (radius * radius - x2) / (radius * radius);
                    let qy = (radius * radius - y.norm2()).max(0.0) / (radius * radius);
                    if t == 0.0 {
                        return g(&y);
                    }
                    let m = qx * qy * radius * radius;
                    inc_beta_reg_unchecked(s, b, m / (m + t * t)) * g(&y)
                },
                0.0,
                1.0,
                QuadOpts::tol(0.05 * tol).with_rel(1e-9).with_pieces(2).with_max_intervals(300),
            );
            ok &= inner.converged;
            kappa * len.powf(2.0 * s) / (2.0 * s) * inner.value
        },
        &[],
        QuadOpts::tol(tol).with_rel(1e-10).with_pieces(8).with_max_intervals(2000),
    );
    if !(r.converged && ok) {
        return Err(Error::QuadratureCap { tol, estimate: r.error });
    }
    Ok(r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfn::{c_n, r_n, EULER_GAMMA};

    #[test]
    fn torsion_examples() {
        let bp = BallProblem::new(2, 1.0, 0.5).unwrap();
        assert!((bp.torsion(&Point::ORIGIN) - 2.0 / PI).abs() < 1e-14);
        assert_eq!(bp.torsion(&Point::new2(1.0, 0.0)), 0.0);
        let bp1 = BallProblem::new(2, 1.0, 1.0).unwrap();
        assert!((bp1.torsion(&Point::new2(0.5, 0.0)) - 0.75 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_examples() {
        let bp = BallProblem::new(2, 1.0, 0.5).unwrap();
        let psi32 = 2.0 - EULER_GAMMA - 2.0 * std::f64::consts::LN_2;
        let expect = 2.0 / PI * (0.0 - (2.0 * std::f64::consts::LN_2 + 2.0 * psi32));
        let d = bp.torsion_s_derivative(&Point::ORIGIN);
        assert!((d.value - expect).abs() < 1e-13 && !d.at_boundary);
        assert!(bp.torsion_s_derivative(&Point::new2(1.0, 0.0)).at_boundary);
        let small = BallProblem::new(2, r_n(2), 1e-12).unwrap();
        assert!(small.torsion_s_derivative(&Point::ORIGIN).value.abs() < 1e-10);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let x = Point::new2(0.3, 0.2);
        for &s in &[0.2, 0.5, 0.8] {
            let h = 1e-4;
            let u = |s| BallProblem::new(2, 1.3, s).unwrap().torsion(&x);
            let fd = (u(s + h) - u(s - h)) / (2.0 * h);
            let d = BallProblem::new(2, 1.3, s).unwrap().torsion_s_derivative(&x).value;
            assert!((fd - d).abs() < 1e-7, "s={s}");
        }
    }

    #[test]
    fn fundamental_solution_examples() {
        let z = Point::new2(1.0, 0.0);
        assert!((fundamental_solution(2, 0.5, &z).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let a = fundamental_solution(3, 0.3, &Point::new3(0.2, 0.1, 0.4)).unwrap();
        let b = fundamental_solution(3, 0.3, &Point::new3(0.6, 0.3, 1.2)).unwrap();
        assert!((b - 3f64.powf(0.6 - 3.0) * a).abs() < 1e-13 * a);
        assert!(fundamental_solution(2, 0.5, &Point::ORIGIN).is_err());
        assert!((kappa_ns(2, 1e-4) / 1e-4 - c_n(2)).abs() < 1e-3);
    }

    #[test]
    fn poisson_kernel_value_and_mass() {
        let z = Point::new2(2.0, 0.0);
        let v = ball_poisson_kernel(2, 0.5, &Point::ORIGIN, &z).unwrap();
        assert!((v - 1.0 / (PI * PI) / 3f64.sqrt() / 4.0).abs() < 1e-15);
        for &s in &[0.25, 0.5, 0.75] {
            // radial mass: |S| ∫_1^∞ τ (ρ²−1)^{-s} ρ^{-1} dρ = |S| τ/2 ∫_0^1 (1−u)^{-s} u^{s-1} du,
            // with both endpoint singularities removed by power substitutions
            let opts = QuadOpts::tol(1e-13);
            let left = integrate(|v: f64| (1.0 - v.powf(1.0 / s)).powf(-s) / s, 0.0, 0.5f64.powf(s), opts);
            let right = integrate(
                |w: f64| (1.0 - w.powf(1.0 / (1.0 - s))).powf(s - 1.0) / (1.0 - s),
                0.0,
                0.5f64.powf(1.0 - s),
                opts,
            );
            let m = left.value + right.value;
            let mass = sphere_area(2) * tau_ns(2, s) * 0.5 * m;
            assert!((mass - 1.0).abs() < 1e-6, "s={s} mass={mass}");
        }
        assert!(ball_poisson_kernel(2, 0.5, &Point::new2(1.0, 0.0), &z).is_err());
    }

    #[test]
    fn barrier_is_kelvin_transform_of_torsion() {
        let s = 0.4;
        let bp = BallProblem::new(2, 1.0, s).unwrap();
        for &(a, b) in &[(1.5, 0.2), (-3.0, 2.0), (0.1, -1.1)] {
            let x = Point::new2(a, b);
            let r2 = x.norm2();
            let kelvin = r2.powf(s - 1.0) * bp.torsion(&(x * (1.0 / r2)));
            let v = exterior_barrier(2, s, 1.0, &Point::ORIGIN, &x);
            assert!((v - kelvin).abs() < 1e-12);
        }
        assert_eq!(exterior_barrier(2, s, 1.0, &Point::ORIGIN, &Point::new2(0.0, 1.0)), 0.0);
    }

    #[test]
    fn green_function_properties() {
        let x = Point::new2(0.3, -0.2);
        let y = Point::new2(-0.5, 0.4);
        for &s in &[0.25, 0.5, 0.75] {
            let g1 = ball_green_function(2, s, &x, &y).unwrap();
            let g2 = ball_green_function(2, s, &y, &x).unwrap();
            assert!((g1 - g2).abs() < 1e-12 * g1);
            assert!(g1 > 0.0 && g1 <= fundamental_solution(2, s, &(x - y)).unwrap());
        }
        assert!(ball_green_function(2, 0.5, &x, &x).is_err());
    }

    #[test]
    fn green_reproduces_torsion() {
        for &(s, x) in &[(0.5, Point::ORIGIN), (0.3, Point::new2(0.4, 0.3)), (0.75, Point::new2(-0.6, 0.0))] {
            let v = ball_green_apply(2, s, 1.0, &|_| 1.0, &x, 1e-7).unwrap();
            let u = BallProblem::new(2, 1.0, s).unwrap().torsion(&x);
            assert!((v - u).abs() < 1e-5, "s={s} {v} vs {u}");
        }
        let v = ball_green_apply(2, 0.5, 2.0, &|_| 1.0, &Point::new2(0.5, 0.5), 1e-7).unwrap();
        let u = BallProblem::new(2, 2.0, 0.5).unwrap().torsion(&Point::new2(0.5, 0.5));
        assert!((v - u).abs() < 1e-5);
    }

    #[test]
    fn flux_sign_and_far_field() {
        for &s in &[0.25, 0.5, 0.75] {
            let bp = BallProblem::new(2, 1.0, s).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for &a in &[1.05, 1.2, 1.5, 2.0, 4.0] {
                let w = bp.exterior_flux_w(&Point::new2(a, 0.0), 1e-10).unwrap();
                assert!(w < 0.0);
                assert!(w > prev, "|w| must decrease along rays");
                prev = w;
            }
            let limit = c_ns(2, s) * bp.torsion_mass();
            for &a in &[10.0, 20.0] {
                let w = bp.exterior_flux_w(&Point::new2(0.0, a), 1e-12).unwrap();
                let ratio = w.abs() * a.powf(2.0 + 2.0 * s) / limit;
                assert!((ratio - 1.0).abs() < 0.02, "s={s} a={a} ratio={ratio}");
            }
        }
        let bp = BallProblem::new(2, 1.0, 0.5).unwrap();
        assert!(bp.exterior_flux_w(&Point::new2(0.5, 0.0), 1e-8).is_err());
    }
}
