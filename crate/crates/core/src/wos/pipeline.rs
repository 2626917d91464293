//! Nested estimators built on the flux tables: the exterior flux, the
//! decomposition `G_s f = F_s ∗ (E_Ω f − Q_s f)` and the `s`-derivative of
//! `G_s f`.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Shape};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::Point;
use crate::loglap::{kink_angles, loglap_extended, ExtendedField, LoglapOpts};
use crate::quad::{integrate, integrate_sphere, QuadOpts};
use crate::specialfn::kappa_ns;

use super::tables::{graded_left, FluxTables, SourceTable, R8};
use super::{check_truncation, mix, solve_green, Estimate, Moments, SourceRule, Walker, WosConfig, REPLICATES};

fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("order s must lie in (0, 1), got {s}")))
    }
}

fn voxel_note(dom: &Domain, est: &mut Estimate) {
    if matches!(dom.shape(), Shape::Voxel(_)) {
        est.notes
            .push("voxel boundary: the derivative formula assumes a C² boundary".into());
    }
}

/// Estimates `Q_s f(x) = −(−Δ)^s[G_s f](x) = c_{N,s} ∫_Ω u(y)|x−y|^{−N−2s} dy`
/// at an exterior point; `u` is tabulated by walk-on-spheres.
pub fn solve_flux_q(dom: &Domain, f: &dyn ScalarField, s: f64, x: &Point, cfg: &WosConfig) -> Result<Estimate> {
    cfg.validate()?;
    check_order(s)?;
    if dom.contains(x) || dom.boundary_distance(x) <= 0.0 {
        return Err(Error::NotExterior(*x));
    }
    if f.constant_value() == Some(0.0) {
        return Ok(Estimate::exact(0.0, cfg));
    }
    let t = FluxTables::estimate(dom, f, s, cfg)?;
    check_truncation(t.truncated, t.walks)?;
    let q = t.q_direct(x)?;
    let mut est = Estimate::from_replicates(&q.0, t.walks, t.truncated, cfg);
    voxel_note(dom, &mut est);
    Ok(est)
}

/// The three terms of `G_s f = F_s ∗ E_Ω f − F_s ∗ Q_s f` at an interior point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// `F_s ∗ E_Ω f`, by quadrature.
    pub direct: f64,
    /// `F_s ∗ Q_s f`, tabulated flux.
    pub flux: f64,
    pub flux_stderr: f64,
    /// `G_s f` by walk-on-spheres.
    pub green: Estimate,
    pub residual: f64,
    pub stderr: f64,
}

/// `κ_{N,s} ∫_Ω f(y)|x−y|^{2s−N} dy`.
pub fn convolve_extended(dom: &Domain, f: &dyn ScalarField, s: f64, x: &Point) -> Result<f64> {
    let inner = QuadOpts::tol(1e-13).with_rel(1e-10).with_max_intervals(400);
    let e = 2.0 * s - 1.0;
    let r = integrate_sphere(
        dom.dim(),
        |th| {
            let g = |t: f64| f.eval(&(*x + th * t)) * t.powf(e);
            dom.ray_intervals(x, &th)
                .into_iter()
                .map(|(a, b)| {
                    if a == 0.0 {
                        graded_left(g, a, b, e, inner).0
                    } else {
                        integrate(g, a, b, inner).value
                    }
                })
                .sum::<f64>()
        },
        &kink_angles(dom, x),
        QuadOpts::tol(1e-10).with_rel(1e-9).with_pieces(8).with_max_intervals(2000),
    );
    if !r.converged {
        return Err(Error::QuadratureCap {
            tol: 1e-10,
            estimate: r.error,
        });
    }
    Ok(kappa_ns(dom.dim(), s) * r.value)
}

/// Residual `F_s ∗ (E_Ω f − Q_s f) − G_s f` at `x ∈ Ω`, with the combined
/// standard error of the flux and walk estimates.
pub fn decomposition_residual(
    dom: &Domain,
    f: &dyn ScalarField,
    s: f64,
    x: &Point,
    cfg: &WosConfig,
) -> Result<DecompositionReport> {
    cfg.validate()?;
    check_order(s)?;
    if !dom.contains(x) {
        return Err(Error::OutsideDomain(*x));
    }
    if f.constant_value() == Some(0.0) {
        return Ok(DecompositionReport {
            direct: 0.0,
            flux: 0.0,
            flux_stderr: 0.0,
            green: Estimate::exact(0.0, cfg),
            residual: 0.0,
            stderr: 0.0,
        });
    }
    let direct = convolve_extended(dom, f, s, x)?;
    let t = FluxTables::estimate(dom, f, s, cfg)?;
    check_truncation(t.truncated, t.walks)?;
    let b = t.convolve_q(x);
    let green = solve_green(dom, f, s, x, &cfg.with_seed(mix(cfg.seed, 0x0067_7265_656e)))?;
    let residual = direct - b.mean() - green.value;
    let stderr = (b.stderr().powi(2) + green.stderr.powi(2)).sqrt();
    Ok(DecompositionReport {
        direct,
        flux: b.mean(),
        flux_stderr: b.stderr(),
        green,
        residual,
        stderr,
    })
}

/// Estimates `v_s(x) = ∂_s[G_s f](x) = G_s(L_Δ Q_s f − L_Δ E_Ω f)(x)`.
///
/// The source is tabulated on the interior nodes once per replicate; walk
/// batch `j` reads replicate `j`, so the spread of the batch means carries
/// both the table and the walk error.
pub fn derivative_pipeline(dom: &Domain, f: &dyn ScalarField, s: f64, x: &Point, cfg: &WosConfig) -> Result<Estimate> {
    let mut v = derivative_pipeline_many(dom, f, s, std::slice::from_ref(x), cfg)?;
    let mut est = v.remove(0);
    est.seed = cfg.seed;
    Ok(est)
}

/// [`derivative_pipeline`] at several points sharing one set of tables;
/// point `k` walks with seed `mix(cfg.seed, k)`.
pub fn derivative_pipeline_many(
    dom: &Domain,
    f: &dyn ScalarField,
    s: f64,
    points: &[Point],
    cfg: &WosConfig,
) -> Result<Vec<Estimate>> {
    cfg.validate()?;
    check_order(s)?;
    if let Some(x) = points.iter().find(|x| !dom.contains(x)) {
        return Err(Error::OutsideDomain(*x));
    }
    if f.constant_value() == Some(0.0) {
        return Ok(points.iter().map(|_| Estimate::exact(0.0, cfg)).collect());
    }
    let t = FluxTables::estimate(dom, f, s, cfg)?;
    check_truncation(t.truncated, t.walks)?;
    let opts = LoglapOpts::for_domain(dom);
    let ext = ExtendedField::new(dom, f);
    let capped = AtomicUsize::new(0);
    let source = SourceTable::new(dom, s, t.grid.clone(), |y| {
        let le = match loglap_extended(&ext, y, &opts) {
            Ok(v) => v.value,
            Err(Error::QuadratureCap { estimate, .. }) => {
                capped.fetch_add(1, Ordering::Relaxed);
                estimate
            }
            Err(e) => return Err(e),
        };
        Ok(t.loglap_q(y) - R8::splat(le))
    })?;
    let capped = capped.into_inner();

    let walk_cfg = cfg.nested().with_rule(SourceRule::GreenSample);
    let walker = Walker::new(dom, s, &walk_cfg)?;
    let per = (cfg.samples / REPLICATES as u64).max(1);
    let n = per * REPLICATES as u64;
    points
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let seed = mix(mix(cfg.seed, 0x0064_6572_6976), k as u64);
            let batches: Vec<Moments> = (0..REPLICATES)
                .map(|j| walker.run(x, &|y: &Point| source.eval(y, j), seed, j as u64 * per, per))
                .collect();
            let truncated = batches.iter().map(|m| m.truncated).sum::<u64>();
            check_truncation(truncated, n)?;
            let means: Vec<f64> = batches.iter().map(|m| m.mean).collect();
            let mut est = Estimate::from_replicates(&means, n, truncated, cfg);
            est.seed = seed;
            if capped > 0 {
                est.notes.push(format!(
                    "log-Laplacian quadrature hit its refinement cap at {capped} table nodes near the boundary"
                ));
            }
            voxel_note(dom, &mut est);
            Ok(est)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;

    #[test]
    fn zero_source_gives_zero() {
        let dom = Domain::centered_ball(2, 1.0).unwrap();
        let f = FieldSpec::constant(0.0);
        let cfg = WosConfig::default();
        assert_eq!(derivative_pipeline(&dom, &f, 0.5, &Point::ORIGIN, &cfg).unwrap().value, 0.0);
        assert_eq!(decomposition_residual(&dom, &f, 0.5, &Point::ORIGIN, &cfg).unwrap().residual, 0.0);
    }

    #[test]
    fn direct_convolution_of_one_on_ball() {
        // F_s ∗ 1_{B_1} at 0 = κ |S| / (2s)
        let dom = Domain::centered_ball(2, 1.0).unwrap();
        let s = 0.5;
        let v = convolve_extended(&dom, &FieldSpec::constant(1.0), s, &Point::ORIGIN).unwrap();
        let exact = kappa_ns(2, s) * std::f64::consts::TAU / (2.0 * s);
        assert!((v - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn flux_rejects_interior_point() {
        let dom = Domain::centered_ball(2, 1.0).unwrap();
        let r = solve_flux_q(&dom, &FieldSpec::constant(1.0), 0.5, &Point::ORIGIN, &WosConfig::default());
        assert!(r.is_err());
    }
}
