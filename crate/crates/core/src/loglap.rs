//! Logarithmic Laplacian of trivially extended fields and the geometry
//! functional `h_Ω`.
//!
//! Everything is computed in polar coordinates around the evaluation point.
//! Along a direction `θ` the domain is a finite union of intervals
//! `[0, b_0] ∪ [a_1, b_1] ∪ …` of the ray parameter, so
//!
//! `h_Ω(x) = c_N ∫_S ( −ln b_0 − Σ_k ln(b_k/a_k) ) dθ`,
//!
//! and the difference-quotient part of `L_Δ` is a one-dimensional integral of
//! `(f(x) − f(x+tθ))/t` over the same intervals.

use std::cell::Cell;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::domain::{subtract_intervals, Domain, Intervals, Shape};
use crate::error::{Error, Result};
use crate::field::{GridField, ScalarField};
use crate::geometry::Point;
use crate::par;
use crate::quad::{integrate, integrate_sphere, QuadOpts};
use crate::specialfn::{c_n, rho_n};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LoglapOpts {
    /// Absolute tolerance of the outer (angular) quadrature.
    pub tol: f64,
    pub max_intervals: usize,
}

impl LoglapOpts {
    pub fn new(tol: f64) -> Self {
        LoglapOpts {
            tol,
            max_intervals: 4000,
        }
    }

    /// 1e-3 on voxel masks, 1e-6 elsewhere.
    pub fn for_domain(dom: &Domain) -> Self {
        match dom.shape() {
            Shape::Voxel(_) => LoglapOpts::new(1e-3),
            _ => LoglapOpts::new(1e-6),
        }
    }
}

/// A quadrature result with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub value: f64,
    pub error: f64,
}

/// `E_Ω f`: a source on `Ω̄`, extended by zero.
pub struct ExtendedField<'a> {
    pub dom: &'a Domain,
    pub f: &'a dyn ScalarField,
}

impl<'a> ExtendedField<'a> {
    pub fn new(dom: &'a Domain, f: &'a dyn ScalarField) -> Self {
        ExtendedField { dom, f }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        if self.dom.contains(x) {
            self.f.eval(x)
        } else {
            0.0
        }
    }
}

/// Azimuthal angles in `[0, 2π)` at which the ray structure seen from `x`
/// changes (planar domains only): box corners, tangents to union members and
/// their pairwise intersections.
pub fn kink_angles(dom: &Domain, x: &Point) -> Vec<f64> {
    if dom.dim() != 2 {
        return Vec::new();
    }
    let angle = |p: Point| {
        let d = p - *x;
        d[1].atan2(d[0]).rem_euclid(TAU)
    };
    let mut out = Vec::new();
    match dom.shape() {
        Shape::Box { lo, hi } => {
            for &(a, b) in &[(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])] {
                out.push(angle(Point::new2(a, b)));
            }
        }
        Shape::UnionOfBalls(balls) => {
            for (i, (c, r)) in balls.iter().enumerate() {
                let d = x.dist(c);
                if d > *r {
                    let base = angle(*c);
                    let half = (r / d).asin();
                    out.push((base + half).rem_euclid(TAU));
                    out.push((base - half).rem_euclid(TAU));
                }
                for (c2, r2) in &balls[i + 1..] {
                    let dd = c.dist(c2);
                    if dd >= r + r2 || dd <= (r - r2).abs() || dd == 0.0 {
                        continue;
                    }
                    let a = (r * r - r2 * r2 + dd * dd) / (2.0 * dd);
                    let h = (r * r - a * a).max(0.0).sqrt();
                    let u = (*c2 - *c) * (1.0 / dd);
                    let mid = *c + u * a;
                    let perp = Point::new2(-u[1], u[0]);
                    out.push(angle(mid + perp * h));
                    out.push(angle(mid - perp * h));
                }
            }
        }
        _ => {}
    }
    out
}

fn ensure_inside(dom: &Domain, x: &Point) -> Result<()> {
    if dom.contains(x) {
        Ok(())
    } else {
        Err(Error::OutsideDomain(*x))
    }
}

fn sphere_opts(opts: &LoglapOpts) -> QuadOpts {
    QuadOpts::tol(opts.tol)
        .with_pieces(8)
        .with_max_intervals(opts.max_intervals)
}

fn finish(r: crate::quad::QuadResult<f64>, inner_ok: bool, scale: f64, tol: f64) -> Result<Evaluated> {
    let error = r.error * scale;
    if !(r.converged && inner_ok) {
        return Err(Error::QuadratureCap { tol, estimate: error });
    }
    Ok(Evaluated {
        value: r.value * scale,
        error,
    })
}

/// `−ln b_0 − Σ_k ln(b_k/a_k)` for the intervals of a ray starting inside.
fn log_ray_weight(ivs: &Intervals) -> f64 {
    let mut g = 0.0;
    for (k, &(a, b)) in ivs.iter().enumerate() {
        g -= if k == 0 { b.ln() } else { (b / a).ln() };
    }
    g
}

/// `h_Ω(x)` at an interior point.
pub fn h_omega(dom: &Domain, x: &Point, opts: &LoglapOpts) -> Result<Evaluated> {
    ensure_inside(dom, x)?;
    let cn = c_n(dom.dim());
    let r = integrate_sphere(
        dom.dim(),
        |th| log_ray_weight(&dom.ray_intervals(x, &th)),
        &kink_angles(dom, x),
        QuadOpts::tol(opts.tol / cn).with_pieces(8).with_max_intervals(opts.max_intervals),
    );
    finish(r, true, cn, opts.tol)
}

/// `h_{B_R(c)}(x) = −ln(R² − |x−c|²)`.
pub fn h_ball(radius: f64, center: &Point, x: &Point) -> f64 {
    -(radius * radius - (*x - *center).norm2()).ln()
}

/// `h_Ω` on the interior lattice and its minimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HField {
    pub grid: GridField,
    pub h0: f64,
    pub argmin: Point,
    pub lattice_spacing: f64,
}

/// Lattice infimum `h_0(Ω)`.
pub fn h_zero(dom: &Domain, lattice_spacing: f64, opts: &LoglapOpts) -> Result<HField> {
    if !(lattice_spacing > 0.0) {
        return Err(Error::invalid("lattice spacing must be positive"));
    }
    let pts = dom.lattice(lattice_spacing);
    if pts.is_empty() {
        return Err(Error::Resolution { found: 0, required: 1 });
    }
    let vals: Result<Vec<f64>> = par::map_slice(&pts, |p| h_omega(dom, p, opts).map(|e| e.value))
        .into_iter()
        .collect();
    let grid = GridField::new(dom.dim(), lattice_spacing, pts, vals?);
    let (argmin, h0) = grid.argmin().expect("nonempty lattice");
    Ok(HField {
        grid,
        h0,
        argmin,
        lattice_spacing,
    })
}

/// `[L_Δ E_Ω f](x)` for an interior point `x`:
/// `c_N ∫_Ω (f(x)−f(y))/|x−y|^N dy + (h_Ω(x) + ρ_N) f(x)`.
pub fn loglap_extended(field: &ExtendedField, x: &Point, opts: &LoglapOpts) -> Result<Evaluated> {
    let dom = field.dom;
    ensure_inside(dom, x)?;
    let dim = dom.dim();
    let cn = c_n(dim);
    let fx = field.f.eval(x);
    let constant = field.f.constant_value().is_some();
    let inner_ok = Cell::new(true);
    let area = if dim == 2 { TAU } else { 4.0 * PI };
    let inner_opts = QuadOpts::tol(0.1 * opts.tol / (cn * area)).with_max_intervals(400);
    let r = integrate_sphere(
        dim,
        |th| {
            let ivs = dom.ray_intervals(x, &th);
            let mut g = fx * log_ray_weight(&ivs);
            if !constant {
                for &(a, b) in &ivs {
                    let q = integrate(|t: f64| (fx - field.f.eval(&(*x + th * t))) / t, a, b, inner_opts);
                    if !q.converged {
                        inner_ok.set(false);
                    }
                    g += q.value;
                }
            }
            g
        },
        &kink_angles(dom, x),
        QuadOpts::tol(opts.tol / cn).with_pieces(8).with_max_intervals(opts.max_intervals),
    );
    let mut out = finish(r, inner_ok.get(), cn, opts.tol)?;
    out.value += rho_n(dim) * fx;
    Ok(out)
}

/// `c_N ∫_A f(y)/|x−y|^N dy` where, along each ray from `x`, `A` is given by
/// `ivs(θ)` and `x ∉ A`.
fn ray_potential(
    dim: usize,
    x: &Point,
    f: &dyn ScalarField,
    ivs: impl Fn(&Point) -> Intervals,
    breaks: &[f64],
    opts: &LoglapOpts,
) -> Result<Evaluated> {
    let cn = c_n(dim);
    let inner_ok = Cell::new(true);
    let area = if dim == 2 { TAU } else { 4.0 * PI };
    let inner_opts = QuadOpts::tol(0.1 * opts.tol / (cn * area)).with_max_intervals(400);
    let constant = f.constant_value();
    let r = integrate_sphere(
        dim,
        |th| {
            let mut g = 0.0;
            for (a, b) in ivs(&th) {
                g += match constant {
                    Some(c) => c * (b / a).ln(),
                    None => {
                        let q = integrate(|t: f64| f.eval(&(*x + th * t)) / t, a, b, inner_opts);
                        if !q.converged {
                            inner_ok.set(false);
                        }
                        q.value
                    }
                };
            }
            g
        },
        breaks,
        sphere_opts(&LoglapOpts { tol: opts.tol / cn, ..*opts }),
    );
    finish(r, inner_ok.get(), cn, opts.tol)
}

/// Terms of the domain-inclusion identity at `x ∈ Ω' ⊂ Ω`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InclusionReport {
    /// `[L_Δ E_{Ω'} f − L_Δ E_Ω f](x)`
    pub difference: f64,
    /// `c_N ∫_{Ω∖Ω'} f(y)/|x−y|^N dy`
    pub annulus: f64,
    pub residual: f64,
    /// Sum of the quadrature error estimates of the three terms.
    pub tolerance: f64,
}

/// Evaluates `[L_Δ E_{Ω'} f − L_Δ E_Ω f](x) − c_N ∫_{Ω∖Ω'} f/|x−y|^N` with
/// three independent quadratures.
pub fn inclusion_identity_residual(
    outer: &Domain,
    sub: &Domain,
    f: &dyn ScalarField,
    x: &Point,
    opts: &LoglapOpts,
) -> Result<InclusionReport> {
    sub.check_subset_of(outer, 4096, 0x5eed)?;
    ensure_inside(sub, x)?;
    let inner_val = loglap_extended(&ExtendedField::new(sub, f), x, opts)?;
    let outer_val = loglap_extended(&ExtendedField::new(outer, f), x, opts)?;
    let mut breaks = kink_angles(outer, x);
    breaks.extend(kink_angles(sub, x));
    let ann = ray_potential(
        outer.dim(),
        x,
        f,
        |th| subtract_intervals(&outer.ray_intervals(x, th), &sub.ray_intervals(x, th)),
        &breaks,
        opts,
    )?;
    let difference = inner_val.value - outer_val.value;
    Ok(InclusionReport {
        difference,
        annulus: ann.value,
        residual: difference - ann.value,
        tolerance: inner_val.error + outer_val.error + ann.error,
    })
}

/// Principal-value form of `L_Δ φ(x)` for a compactly supported Hölder `φ`
/// with `supp φ ⊂ B_R(x)`:
/// `c_N ∫_{B_1(x)} (φ(x)−φ(y))/|x−y|^N − c_N ∫_{B_1(x)^c} φ(y)/|x−y|^N + ρ_N φ(x)`,
/// with the near integral symmetrised over `±θ`.
pub fn loglap_pv(dim: usize, phi: &dyn ScalarField, x: &Point, support_radius: f64, opts: &LoglapOpts) -> Result<Evaluated> {
    let cn = c_n(dim);
    let px = phi.eval(x);
    let inner_ok = Cell::new(true);
    let area = if dim == 2 { TAU } else { 4.0 * PI };
    let inner_opts = QuadOpts::tol(0.05 * opts.tol / (cn * area))
        .with_pieces(4)
        .with_max_intervals(800);
    let r = integrate_sphere(
        dim,
        |th| {
            let near = integrate(
                |t: f64| (2.0 * px - phi.eval(&(*x + th * t)) - phi.eval(&(*x - th * t))) / t,
                0.0,
                1.0,
                inner_opts,
            );
            let mut g = 0.5 * near.value;
            let mut ok = near.converged;
            if support_radius > 1.0 {
                let far = integrate(|t: f64| phi.eval(&(*x + th * t)) / t, 1.0, support_radius, inner_opts);
                ok &= far.converged;
                g -= far.value;
            }
            if !ok {
                inner_ok.set(false);
            }
            g
        },
        &[],
        QuadOpts::tol(opts.tol / cn).with_pieces(8).with_max_intervals(opts.max_intervals),
    );
    let mut out = finish(r, inner_ok.get(), cn, opts.tol)?;
    out.value += rho_n(dim) * px;
    Ok(out)
}
