//! Bounds on `‖G_s‖ = sup_Ω G_s 1`, the monotonicity certifier and the
//! elementary integral inequality behind the regularity estimates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{lattice_points, Domain, Shape};
use crate::error::{Error, Result};
use crate::field::{check_nonnegative, ScalarField};
use crate::geometry::Point;
use crate::loglap::{h_omega, h_zero, loglap_extended, ExtendedField, LoglapOpts};
use crate::par;
use crate::quad::{integrate, QuadOpts};
use crate::specialfn::{r_n, rho_n, torsion_coeff, unit_ball_volume};
use crate::wos::{solve_green, WosConfig};

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::invalid(format!("bounds need s in [0, 1], got {s}")))
    }
}

/// `‖G_s‖` on `B_r`: `γ_{N,s} r^{2s}`.
pub fn exact_ball_norm(dim: usize, s: f64, r: f64) -> Result<f64> {
    check_s(s)?;
    if !(r > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    Ok(torsion_coeff(dim, s) * r.powf(2.0 * s))
}

/// `(1/2N)(|Ω|/|B_1|)^{2/N}`.
pub fn talenti_bound(dom: &Domain) -> f64 {
    let n = dom.dim() as f64;
    (dom.volume() / unit_ball_volume(dom.dim())).powf(2.0 / n) / (2.0 * n)
}

/// `e^{−s(h_0 + ρ_N)}`.
pub fn bound_from_h0(dim: usize, s: f64, h0: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        (-s * (h0 + rho_n(dim))).exp()
    }
}

/// `h_0(Ω) = inf h_Ω`: lattice minimum at spacing `diam/32`, polished by a
/// compass search around the best node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct H0Estimate {
    pub h0: f64,
    pub argmin: Point,
    pub lattice_spacing: f64,
}

pub fn estimate_h0(dom: &Domain, lattice_spacing: f64) -> Result<H0Estimate> {
    let opts = LoglapOpts::for_domain(dom);
    let field = h_zero(dom, lattice_spacing, &opts)?;
    let (mut best, mut x) = (field.h0, field.argmin);
    let mut step = 0.5 * lattice_spacing;
    while step > lattice_spacing / 64.0 {
        let mut moved = false;
        for k in 0..dom.dim() {
            for sign in [-1.0, 1.0] {
                let mut y = x;
                y[k] += sign * step;
                if !dom.contains(&y) {
                    continue;
                }
                if let Ok(v) = h_omega(dom, &y, &opts) {
                    if v.value < best {
                        best = v.value;
                        x = y;
                        moved = true;
                    }
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok(H0Estimate {
        h0: best,
        argmin: x,
        lattice_spacing,
    })
}

/// `e^{−s(h_0(Ω) + ρ_N)}` with `h_0` from [`estimate_h0`] at spacing `diam/32`.
pub fn norm_bound_h0(dom: &Domain, s: f64) -> Result<f64> {
    check_s(s)?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let h0 = estimate_h0(dom, dom.diameter() / 32.0)?;
    Ok(bound_from_h0(dom.dim(), s, h0.h0))
}

/// `e^{−sρ_N} d_r^{2s/N} (|Ω|/|B_1| + r^N(1 − d_r))^{2s/N}`.
pub fn density_bound(dim: usize, s: f64, volume: f64, r: f64, d_r: f64) -> f64 {
    let n = dim as f64;
    let inner = d_r * (volume / unit_ball_volume(dim) + r.powi(dim as i32) * (1.0 - d_r));
    (-s * rho_n(dim)).exp() * inner.powf(2.0 * s / n)
}

/// The density bound with `d_r` sampled on a lattice of spacing `diam/64`.
pub fn norm_bound_density(dom: &Domain, s: f64, r: f64) -> Result<f64> {
    check_s(s)?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let rep = dom.relative_density(r, dom.diameter() / 64.0)?;
    Ok(density_bound(dom.dim(), s, dom.volume(), r, rep.d_r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormValue {
    pub value: f64,
    pub stderr: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityRow {
    pub r: f64,
    pub d_r: f64,
    /// One bound per entry of `s_grid`.
    pub bounds: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub dim: usize,
    pub s_grid: Vec<f64>,
    /// `None` where no estimate is available (`s = 1` off balls).
    pub exact_or_mc_norm: Vec<Option<NormValue>>,
    pub h0: f64,
    pub bound_h0: Vec<f64>,
    pub bound_density: Vec<DensityRow>,
    /// The `s = 1` bound of Talenti.
    pub talenti: f64,
    pub ordering_violations: usize,
    /// Slack allowed in the ordering checks.
    pub tolerance: f64,
}

impl BoundReport {
    /// One row per `s`: `s,norm,norm_stderr,provenance,bound_h0,density_r=…,talenti`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,norm,norm_stderr,provenance,bound_h0");
        for row in &self.bound_density {
            let _ = write!(out, ",density_r={}", row.r);
        }
        out.push_str(",talenti\n");
        for (i, s) in self.s_grid.iter().enumerate() {
            let _ = write!(out, "{s},");
            match &self.exact_or_mc_norm[i] {
                Some(n) => {
                    let tag = match n.provenance {
                        Provenance::ClosedForm => "closed_form",
                        Provenance::MonteCarlo => "mc",
                    };
                    let _ = write!(out, "{},{},{tag}", n.value, n.stderr);
                }
                None => out.push_str(",,"),
            }
            let _ = write!(out, ",{}", self.bound_h0[i]);
            for row in &self.bound_density {
                let _ = write!(out, ",{}", row.bounds[i]);
            }
            let _ = writeln!(out, ",{}", self.talenti);
        }
        out
    }
}

/// Norm values and bounds over `s_grid`, with density bounds for each
/// radius in `radii`. Off balls the norm is the larger walk-on-spheres
/// estimate of `G_s 1` at the `h_0` minimiser and at the domain centre.
pub fn bound_report(dom: &Domain, s_grid: &[f64], radii: &[f64], cfg: &WosConfig) -> Result<BoundReport> {
    for &s in s_grid {
        check_s(s)?;
    }
    let dim = dom.dim();
    let tolerance = 1e-3;
    let h0 = estimate_h0(dom, dom.diameter() / 32.0)?;
    let volume = dom.volume();
    let one = crate::field::FieldSpec::constant(1.0);
    let ball_radius = match dom.shape() {
        Shape::Ball { radius, .. } => Some(*radius),
        _ => None,
    };
    let mut norms = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let v = if let Some(r) = ball_radius {
            Some(NormValue {
                value: exact_ball_norm(dim, s, r)?,
                stderr: 0.0,
                provenance: Provenance::ClosedForm,
            })
        } else if s == 0.0 {
            Some(NormValue {
                value: 1.0,
                stderr: 0.0,
                provenance: Provenance::ClosedForm,
            })
        } else if s < 1.0 {
            let mut best: Option<NormValue> = None;
            for p in [h0.argmin, dom.center()] {
                if !dom.contains(&p) {
                    continue;
                }
                let e = solve_green(dom, &one, s, &p, cfg)?;
                if best.as_ref().is_none_or(|b| e.value > b.value) {
                    best = Some(NormValue {
                        value: e.value,
                        stderr: e.stderr,
                        provenance: Provenance::MonteCarlo,
                    });
                }
            }
            best
        } else {
            None
        };
        norms.push(v);
    }
    let bound_h0: Vec<f64> = s_grid.iter().map(|&s| bound_from_h0(dim, s, h0.h0)).collect();
    let mut density = Vec::new();
    for &r in radii {
        let rep = dom.relative_density(r, dom.diameter() / 64.0)?;
        density.push(DensityRow {
            r,
            d_r: rep.d_r,
            bounds: s_grid.iter().map(|&s| density_bound(dim, s, volume, r, rep.d_r)).collect(),
        });
    }
    let mut violations = 0;
    for (i, n) in norms.iter().enumerate() {
        if let Some(n) = n {
            if n.value > bound_h0[i] + 3.0 * n.stderr + tolerance {
                violations += 1;
            }
        }
        violations += density
            .iter()
            .filter(|row| bound_h0[i] > row.bounds[i] + tolerance)
            .count();
    }
    Ok(BoundReport {
        dim,
        s_grid: s_grid.to_vec(),
        exact_or_mc_norm: norms,
        h0: h0.h0,
        bound_h0,
        bound_density: density,
        talenti: talenti_bound(dom),
        ordering_violations: violations,
        tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    MonotoneDecreasing,
    NotCertified,
    Counterexample,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub point: Point,
    /// `[L_Δ E_Ω f]` at `point`.
    pub value: f64,
}

/// `Ω ⊂ B_radius(center)` with `radius ≤ r_N`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Inclusion {
    pub center: Point,
    pub radius: f64,
    pub r_n: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub inclusion: Option<Inclusion>,
    pub lattice_spacing: f64,
    pub tol: f64,
    pub evaluated: usize,
    /// Lattice points closer than one spacing to `∂Ω`, left out.
    pub excluded: usize,
    /// Points where the quadrature hit its cap.
    pub failed: usize,
    pub min_value: Option<f64>,
}

impl Certificate {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("verdict,witness,value,min_value,lattice_spacing,tol,evaluated,excluded,failed\n");
        let verdict = serde_json::to_value(self.verdict).expect("enum serialises");
        let (w, v) = match &self.witness {
            Some(w) => {
                let c: Vec<String> = w.point.0.iter().map(|x| x.to_string()).collect();
                (c.join(" "), w.value.to_string())
            }
            None => (String::new(), String::new()),
        };
        let min = self.min_value.map(|m| m.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{w},{v},{min},{},{},{},{},{}",
            verdict.as_str().unwrap_or(""),
            self.lattice_spacing,
            self.tol,
            self.evaluated,
            self.excluded,
            self.failed
        );
        out
    }
}

/// Smallest enclosing radius about one of a few candidate centres.
fn inclusion_ball(dom: &Domain) -> Inclusion {
    let (lo, hi) = dom.bounding_box();
    let mut centers = vec![dom.center(), (lo + hi) * 0.5];
    centers.extend(lattice_points(dom.dim(), &lo, &hi, dom.diameter() / 8.0));
    let rn = r_n(dom.dim());
    centers
        .into_iter()
        .map(|c| Inclusion {
            center: c,
            radius: dom.max_distance_from(&c),
            r_n: rn,
        })
        .min_by(|a, b| a.radius.total_cmp(&b.radius))
        .expect("at least one centre")
}

/// Checks `L_Δ E_Ω f ≥ −tol` on the interior lattice, which makes
/// `s ↦ G_s f` pointwise decreasing. Constant positive `f` on a domain
/// inside a ball of radius `r_N` is certified without quadrature.
pub fn certify_monotonicity(dom: &Domain, f: &dyn ScalarField, lattice_spacing: f64, tol: f64) -> Result<Certificate> {
    if !(lattice_spacing > 0.0) || !(tol >= 0.0) {
        return Err(Error::invalid("lattice spacing must be positive and tol nonnegative"));
    }
    let pts = dom.lattice(lattice_spacing);
    check_nonnegative(f, &pts)?;
    let mut cert = Certificate {
        verdict: Verdict::MonotoneDecreasing,
        witness: None,
        inclusion: None,
        lattice_spacing,
        tol,
        evaluated: 0,
        excluded: 0,
        failed: 0,
        min_value: None,
    };
    if f.constant_value() == Some(0.0) {
        return Ok(cert);
    }
    if f.constant_value().is_some() {
        let inc = inclusion_ball(dom);
        if inc.radius <= inc.r_n {
            cert.inclusion = Some(inc);
            return Ok(cert);
        }
    }
    let (inner, excluded): (Vec<Point>, Vec<Point>) =
        pts.into_iter().partition(|p| dom.boundary_distance(p) >= lattice_spacing);
    cert.excluded = excluded.len();
    if inner.is_empty() {
        cert.verdict = Verdict::NotCertified;
        return Ok(cert);
    }
    let opts = LoglapOpts::for_domain(dom);
    let ext = ExtendedField::new(dom, f);
    let vals = par::map_slice(&inner, |p| loglap_extended(&ext, p, &opts));
    let mut best: Option<(Point, f64)> = None;
    for (p, v) in inner.iter().zip(vals) {
        match v {
            Ok(e) => {
                cert.evaluated += 1;
                if best.is_none_or(|b| e.value < b.1) {
                    best = Some((*p, e.value));
                }
            }
            Err(e) if e.is_numerical() => cert.failed += 1,
            Err(e) => return Err(e),
        }
    }
    let Some((p, m)) = best else {
        cert.verdict = Verdict::NotCertified;
        return Ok(cert);
    };
    cert.min_value = Some(m);
    if m < -tol {
        cert.verdict = Verdict::Counterexample;
        cert.witness = Some(Witness { point: p, value: m });
    } else if cert.failed > 0 {
        cert.verdict = Verdict::NotCertified;
    }
    Ok(cert)
}

fn check_kappa_args(a: f64, lambda: f64, c: f64) -> Result<()> {
    if !(a < 1.0 && lambda < 1.0 && c > 0.0 && c <= 1.0) {
        return Err(Error::invalid(format!(
            "need a, lambda < 1 and c in (0, 1], got a={a}, lambda={lambda}, c={c}"
        )));
    }
    Ok(())
}

/// Upper bound `κ(a, λ, c)` for `∫_0^1 t^{−a}(c+t)^{λ−1} dt`.
pub fn kappa_estimate(a: f64, lambda: f64, c: f64) -> Result<f64> {
    check_kappa_args(a, lambda, c)?;
    let log_branch = 1.0 / (1.0 - a) + c.ln().abs();
    Ok(if lambda > a {
        (1.0 / (lambda - a)).min(log_branch)
    } else if lambda < a {
        c.powf(lambda - a) * ((1.0 - lambda) / ((1.0 - a) * (a - lambda))).min(log_branch)
    } else {
        log_branch
    })
}

/// `∫_0^1 t^{−a}(c+t)^{λ−1} dt`, with `t = v^{1/(1−a)}` removing the
/// singularity at 0.
pub fn basic_integral(a: f64, lambda: f64, c: f64) -> Result<f64> {
    check_kappa_args(a, lambda, c)?;
    let p = 1.0 / (1.0 - a);
    let g = |v: f64| (c + v.powf(p)).powf(lambda - 1.0) * p;
    let r = integrate(g, 0.0, 1.0, QuadOpts::tol(1e-14).with_rel(1e-12).with_max_intervals(4000));
    if !r.converged {
        return Err(Error::QuadratureCap {
            tol: 1e-14,
            estimate: r.error,
        });
    }
    Ok(r.value)
}

/// True iff the integral is at most `κ(a, λ, c) + quad_tol`.
pub fn verify_basic_estimate(a: f64, lambda: f64, c: f64, quad_tol: f64) -> Result<bool> {
    Ok(basic_integral(a, lambda, c)? <= kappa_estimate(a, lambda, c)? + quad_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa_estimate(0.0, 0.0, 1.0).unwrap(), 1.0);
        assert!((basic_integral(0.0, 0.0, 1.0).unwrap() - 2f64.ln()).abs() < 1e-13);
        assert!(verify_basic_estimate(0.5, 0.75, 0.1, 1e-10).unwrap());
        assert!(kappa_estimate(1.0, 0.0, 0.5).is_err());
        assert!(kappa_estimate(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn basic_integral_closed_form() {
        // a = 0, λ = 1/2: 2(√(1+c) − √c)
        let c: f64 = 0.3;
        let exact = 2.0 * ((1.0 + c).sqrt() - c.sqrt());
        assert!((basic_integral(0.0, 0.5, c).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn talenti_on_balls() {
        let b1 = Domain::centered_ball(2, 1.0).unwrap();
        let b2 = Domain::centered_ball(2, 2.0).unwrap();
        assert!((talenti_bound(&b1) - 0.25).abs() < 1e-12);
        assert!((talenti_bound(&b2) - 1.0).abs() < 1e-12);
        assert!((exact_ball_norm(2, 1.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn h0_bound_on_ball() {
        let b = Domain::centered_ball(2, 1.0).unwrap();
        assert_eq!(norm_bound_h0(&b, 0.0).unwrap(), 1.0);
        let v = norm_bound_h0(&b, 1.0).unwrap();
        assert!((v - (-rho_n(2)).exp()).abs() < 1e-6, "{v}");
        let r = 0.5;
        let b = Domain::centered_ball(2, r).unwrap();
        let v = norm_bound_h0(&b, 0.5).unwrap();
        assert!((v - r * (-0.5 * rho_n(2)).exp()).abs() < 1e-6);
    }

    #[test]
    fn certifier_fast_path_and_counterexample() {
        let rn = r_n(2);
        let one = FieldSpec::constant(1.0);
        let b = Domain::centered_ball(2, rn).unwrap();
        let c = certify_monotonicity(&b, &one, 2.0 * rn / 64.0, 1e-4).unwrap();
        assert_eq!(c.verdict, Verdict::MonotoneDecreasing);
        assert!(c.inclusion.is_some());
        let b = Domain::centered_ball(2, 1.2 * rn).unwrap();
        let h = 2.4 * rn / 16.0;
        let c = certify_monotonicity(&b, &one, h, 1e-4).unwrap();
        assert_eq!(c.verdict, Verdict::Counterexample);
        let w = c.witness.unwrap();
        assert!(w.point.norm() <= h);
        assert!((w.value + 2.0 * 1.2f64.ln()).abs() < 1e-5);
        let zero = FieldSpec::constant(0.0);
        assert_eq!(certify_monotonicity(&b, &zero, h, 1e-4).unwrap().verdict, Verdict::MonotoneDecreasing);
    }

    #[test]
    fn certifier_rejects_negative_source() {
        let b = Domain::centered_ball(2, 1.0).unwrap();
        let f = |x: &Point| x[0];
        assert!(matches!(
            certify_monotonicity(&b, &f, 0.25, 1e-4),
            Err(Error::NegativeSource { .. })
        ));
    }
}
