use std::fmt::Write as _;

use fracgreen::bounds::{bound_report, certify_monotonicity};
use fracgreen::closedform::BallProblem;
use fracgreen::domain::{lattice_points, Shape};
use fracgreen::loglap::{h_zero, LoglapOpts};
use fracgreen::specialfn::rho_n;
use fracgreen::wos::{derivative_pipeline_many, solve_green_many};
use fracgreen::{Domain, Point};
use serde::Serialize;

use crate::output::{csv_document, emit, json_document, per_order, sibling};
use crate::spec::{Command, RunSpec};
use crate::CliError;

pub fn dispatch(spec: &RunSpec) -> Result<(), CliError> {
    spec.f.validate()?;
    spec.wos.validate()?;
    let dom = spec.domain.build()?;
    match spec.command {
        Command::Torsion => torsion(spec, &dom),
        Command::Hfield => hfield(spec, &dom),
        Command::Bounds => bounds(spec, &dom),
        Command::Certify => certify(spec, &dom),
        Command::Solve => solve(spec, &dom),
        Command::Derivative => derivative(spec, &dom),
    }
}

fn coords_header(dim: usize) -> String {
    (1..=dim).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",")
}

fn write_coords(out: &mut String, p: &Point, dim: usize) {
    for k in 0..dim {
        let _ = write!(out, "{},", p[k]);
    }
}

/// Rows `x, u_s(x), v_s(x)` on the lattice covering the closed ball.
pub fn torsion_csv(dom: &Domain, s: f64, spacing: f64) -> Result<String, CliError> {
    let (center, r) = match dom.shape() {
        Shape::Ball { center, radius } => (*center, *radius),
        _ => return Err(CliError::Validation("torsion is available on balls only".into())),
    };
    let dim = dom.dim();
    let ball = BallProblem::new(dim, r, s)?;
    let (lo, hi) = dom.bounding_box();
    let mut out = format!("{},u,v\n", coords_header(dim));
    for p in lattice_points(dim, &lo, &hi, spacing) {
        let y = p - center;
        write_coords(&mut out, &p, dim);
        let _ = writeln!(out, "{},{}", ball.torsion(&y), ball.torsion_s_derivative(&y).value);
    }
    Ok(out)
}

fn torsion(spec: &RunSpec, dom: &Domain) -> Result<(), CliError> {
    let h = spec.spacing()?;
    if spec.s.is_empty() {
        return Err(CliError::Validation("torsion needs at least one order s".into()));
    }
    if spec.s.len() > 1 && spec.output.is_none() {
        return Err(CliError::Validation("an s-grid needs --output; one file is written per s".into()));
    }
    for &s in &spec.s {
        let text = csv_document(spec, &torsion_csv(dom, s, h)?);
        let path = match &spec.output {
            Some(p) if spec.s.len() > 1 => Some(per_order(p, s)),
            other => other.clone(),
        };
        emit(path.as_deref(), &text)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct HSummary {
    h_0: f64,
    rho_n: f64,
    h_0_plus_rho_n: f64,
    argmin: Vec<f64>,
    lattice_spacing: f64,
    lattice_points: usize,
}

fn hfield(spec: &RunSpec, dom: &Domain) -> Result<(), CliError> {
    let h = spec.spacing()?;
    let field = h_zero(dom, h, &LoglapOpts::for_domain(dom))?;
    let rho = rho_n(dom.dim());
    let summary = HSummary {
        h_0: field.h0,
        rho_n: rho,
        h_0_plus_rho_n: field.h0 + rho,
        argmin: field.argmin.coords(dom.dim()).to_vec(),
        lattice_spacing: h,
        lattice_points: field.grid.len(),
    };
    let csv = csv_document(spec, &field.grid.to_csv_string());
    let json = json_document(spec, &summary);
    match &spec.output {
        Some(p) => {
            emit(Some(p), &csv)?;
            emit(Some(&sibling(p, "json")), &json)
        }
        None => {
            emit(None, &csv)?;
            emit(None, &json)
        }
    }
}

fn bounds(spec: &RunSpec, dom: &Domain) -> Result<(), CliError> {
    if spec.s.is_empty() {
        return Err(CliError::Validation("bounds needs an s-grid".into()));
    }
    let report = bound_report(dom, &spec.s, &spec.radii, &spec.wos)?;
    emit(spec.output.as_deref(), &json_document(spec, &report))?;
    if let Some(p) = &spec.output {
        emit(Some(&sibling(p, "csv")), &csv_document(spec, &report.to_csv()))?;
    }
    Ok(())
}

fn certify(spec: &RunSpec, dom: &Domain) -> Result<(), CliError> {
    let h = spec.spacing()?;
    let cert = certify_monotonicity(dom, &spec.f, h, spec.tol)?;
    emit(spec.output.as_deref(), &json_document(spec, &cert))
}

fn solve(spec: &RunSpec, dom: &Domain) -> Result<(), CliError> {
    let s = spec.single_s()?;
    let points = spec.eval_points(dom.dim())?;
    if points.is_empty() && spec.lattice_spacing.is_none() {
        return Err(CliError::Validation("solve needs --point or --lattice-spacing".into()));
    }
    let est = solve_green_many(dom, &spec.f, s, &points, &spec.wos)?;
    emit(spec.output.as_deref(), &json_document(spec, &est))?;
    if spec.lattice_spacing.is_some() {
        let h = spec.spacing()?;
        let lattice = dom.lattice(h);
        let dim = dom.dim();
        let mut body = format!("{},value,stderr\n", coords_header(dim));
        let grid_cfg = spec.wos.with_seed(spec.wos.seed ^ 0x6c61_7474);
        for (p, e) in lattice.iter().zip(solve_green_many(dom, &spec.f, s, &lattice, &grid_cfg)?) {
            write_coords(&mut body, p, dim);
            let _ = writeln!(body, "{},{}", e.value, e.stderr);
        }
        let path = spec.output.as_ref().map(|p| sibling(p, "csv"));
        emit(path.as_deref(), &csv_document(spec, &body))?;
    }
    Ok(())
}

fn derivative(spec: &RunSpec, dom: &Domain) -> Result<(), CliError> {
    let s = spec.single_s()?;
    let points = spec.eval_points(dom.dim())?;
    if points.is_empty() {
        return Err(CliError::Validation("derivative needs at least one --point".into()));
    }
    let est = derivative_pipeline_many(dom, &spec.f, s, &points, &spec.wos)?;
    emit(spec.output.as_deref(), &json_document(spec, &est))
}
