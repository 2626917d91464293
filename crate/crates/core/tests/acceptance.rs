//! Acceptance run: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::time::Instant;

use fracgreen::bounds::{
    certify_monotonicity, estimate_h0, exact_ball_norm, norm_bound_density, talenti_bound, verify_basic_estimate,
    Verdict,
};
use fracgreen::closedform::{ball_green_apply, BallProblem};
use fracgreen::loglap::{h_omega, inclusion_identity_residual, LoglapOpts};
use fracgreen::quad::{integrate, QuadOpts};
use fracgreen::specialfn::{digamma, r_n, rho_n};
use fracgreen::wos::{decomposition_residual, derivative_pipeline, solve_green, walk_rng, ExitSampler, WosConfig};
use fracgreen::{Domain, FieldSpec, Point, VoxelMask};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn one() -> FieldSpec {
    FieldSpec::constant(1.0)
}

fn disk(r: f64) -> Domain {
    Domain::centered_ball(2, r).unwrap()
}

fn torsion_oracle() -> Outcome {
    let dom = disk(1.0);
    let cfg = WosConfig {
        eps_shell: 1e-6,
        ..WosConfig::default().with_samples(1_000_000).with_seed(101)
    };
    let mut ok = true;
    let mut worst = String::new();
    let mut slowest = 0.0f64;
    for s in [0.25, 0.5, 0.75] {
        let b = BallProblem::new(2, 1.0, s).unwrap();
        for x in [Point::ORIGIN, Point::new2(0.5, 0.0)] {
            let t0 = Instant::now();
            let e = solve_green(&dom, &one(), s, &x, &cfg).unwrap();
            let secs = t0.elapsed().as_secs_f64();
            slowest = slowest.max(secs);
            let exact = b.torsion(&x);
            let err = (e.value - exact).abs();
            let good = err <= 3.0 * e.stderr && e.stderr <= 1e-3 && secs <= 120.0;
            if !good {
                ok = false;
                worst.push_str(&format!(
                    " [s={s} x=({},{}) est={} exact={exact} stderr={}]",
                    x[0], x[1], e.value, e.stderr
                ));
            }
        }
    }
    outcome(ok, format!("6 points, eps_shell 1e-6, slowest {slowest:.2}s{worst}"))
}

fn derivative_formula() -> Outcome {
    let dom = disk(1.0);
    let s = 0.5;
    let exact = BallProblem::new(2, 1.0, s).unwrap().torsion_s_derivative(&Point::ORIGIN).value;
    let cfg = WosConfig::default().with_samples(200_000).with_seed(202);
    let v = derivative_pipeline(&dom, &one(), s, &Point::ORIGIN, &cfg).unwrap();
    let tol = (3.0 * v.stderr).max(0.02 * exact.abs());
    let pipe_ok = (v.value - exact).abs() <= tol;
    let h = 0.02;
    let fd_cfg = WosConfig::default().with_samples(1_000_000).with_seed(203);
    let up = solve_green(&dom, &one(), s + h, &Point::ORIGIN, &fd_cfg).unwrap();
    let dn = solve_green(&dom, &one(), s - h, &Point::ORIGIN, &fd_cfg).unwrap();
    let fd = (up.value - dn.value) / (2.0 * h);
    let fd_ok = (fd - v.value).abs() <= 0.05 * v.value.abs();
    outcome(
        pipe_ok && fd_ok,
        format!(
            "pipeline {:.6} ± {:.6}, closed form {exact:.6}, finite difference {fd:.6}",
            v.value, v.stderr
        ),
    )
}

fn monotonicity_sharpness() -> Outcome {
    let rn = r_n(2);
    let inside = disk(rn);
    let c1 = certify_monotonicity(&inside, &one(), inside.diameter() / 64.0, 1e-4).unwrap();
    let outside = disk(1.1 * rn);
    let spacing = outside.diameter() / 64.0;
    let c2 = certify_monotonicity(&outside, &one(), spacing, 1e-4).unwrap();
    let witness_ok = c2
        .witness
        .as_ref()
        .is_some_and(|w| w.point.norm() <= spacing);
    let certs_ok = c1.verdict == Verdict::MonotoneDecreasing && c2.verdict == Verdict::Counterexample && witness_ok;

    let mut radii: Vec<f64> = vec![0.9 * rn, rn, 1.1 * rn];
    radii.extend((0..20).map(|k| 0.2 * 15f64.powf(k as f64 / 19.0)));
    let mut disagreements = 0;
    let mut cells = 0;
    for &r in &radii {
        for k in 1..=19 {
            let s = 0.05 * k as f64;
            let b = BallProblem::new(2, r, s).unwrap();
            // sup of v_s over the ball, sampled radially
            let sup = (0..=200)
                .map(|i| b.torsion_s_derivative(&Point::new2(r * i as f64 / 201.0, 0.0)).value)
                .fold(f64::NEG_INFINITY, f64::max);
            let decreasing = sup <= 0.0;
            let analytic = 2.0 * r.ln() <= 2.0 * 2f64.ln() + digamma(1.0 + s).unwrap() + digamma(s + 1.0).unwrap();
            cells += 1;
            if decreasing != analytic {
                disagreements += 1;
            }
        }
    }
    outcome(
        certs_ok && disagreements == 0,
        format!(
            "B_rN {:?}, B_1.1rN {:?} witness {:?}; sign grid {disagreements}/{cells} disagreements",
            c1.verdict,
            c2.verdict,
            c2.witness.as_ref().map(|w| w.point.coords(2).to_vec())
        ),
    )
}

fn bound_sandwich() -> Outcome {
    let mut bad = Vec::new();
    for r in [0.5, 1.0, r_n(2)] {
        let dom = disk(r);
        let h0 = estimate_h0(&dom, dom.diameter() / 32.0).unwrap().h0;
        for k in 1..=9 {
            let s = 0.1 * k as f64;
            let exact = exact_ball_norm(2, s, r).unwrap();
            let mid = (-s * (h0 + rho_n(2))).exp();
            let dens = norm_bound_density(&dom, s, r).unwrap();
            if !(exact <= mid && mid <= dens + 1e-3) {
                bad.push(format!("r={r} s={s}: {exact} {mid} {dens}"));
            }
        }
    }
    let b1 = disk(1.0);
    let tal = talenti_bound(&b1);
    let exact = exact_ball_norm(2, 1.0, 1.0).unwrap();
    let tal_ok = (tal - 0.25).abs() <= 1e-12 && (exact - 0.25).abs() <= 1e-12;
    outcome(
        bad.is_empty() && tal_ok,
        format!("27 sandwich checks, {} violations {:?}; Talenti {tal}, exact {exact}", bad.len(), bad),
    )
}

fn thin_domain() -> Outcome {
    let dom = Domain::cuboid(2, Point::new2(0.0, 0.0), Point::new2(1.0, 0.05)).unwrap();
    let density = norm_bound_density(&dom, 1.0, 0.5).unwrap();
    let tal = talenti_bound(&dom);
    outcome(density < tal, format!("density bound {density:.6} vs Talenti {tal:.6}"))
}

fn inclusion_identity() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let bump = FieldSpec::RadialBump {
        center: vec![0.1, 0.0],
        radius: 0.8,
        height: 1.0,
    };
    let mut check = |name: &str, outer: &Domain, sub: &Domain, x: Point, f: &FieldSpec, limit: f64| {
        let rep = inclusion_identity_residual(outer, sub, f, &x, &LoglapOpts::for_domain(outer)).unwrap();
        ok &= rep.residual.abs() <= limit;
        lines.push(format!("{name} {:.2e}", rep.residual.abs()));
        rep
    };
    let outer = disk(1.0);
    let sub = Domain::ball(2, Point::new2(0.1, 0.0), 0.6).unwrap();
    check("balls", &outer, &sub, Point::new2(0.2, 0.1), &one(), 1e-5);
    check("balls/bump", &outer, &sub, Point::new2(0.2, 0.1), &bump, 1e-5);
    let bo = Domain::cuboid(2, Point::new2(0.0, 0.0), Point::new2(1.0, 1.0)).unwrap();
    let bs = Domain::cuboid(2, Point::new2(0.2, 0.1), Point::new2(0.8, 0.9)).unwrap();
    check("boxes", &bo, &bs, Point::new2(0.5, 0.5), &one(), 1e-5);
    check("boxes/bump", &bo, &bs, Point::new2(0.4, 0.3), &bump, 1e-5);
    let vo = VoxelMask::rasterize(&outer, 1.0 / 32.0, 2).unwrap();
    let vs = vo.erode(0.25).unwrap();
    check(
        "voxels",
        &Domain::voxel(vo),
        &Domain::voxel(vs),
        Point::new2(1.0 / 64.0, 1.0 / 64.0),
        &one(),
        1e-2,
    );
    let ann = check("annulus", &outer, &disk(0.5), Point::ORIGIN, &one(), 1e-5);
    let ann_ok = (ann.annulus - 2.0 * 2f64.ln()).abs() <= 1e-6 && (ann.difference - 2.0 * 2f64.ln()).abs() <= 1e-6;
    outcome(
        ok && ann_ok,
        format!("{}; annulus {} vs 2 ln 2", lines.join(", "), ann.annulus),
    )
}

/// `ln γ_{N,s}` from an independent log-gamma.
fn ln_gamma_coeff(n: usize, s: f64) -> f64 {
    let h = n as f64 / 2.0;
    ln_gamma(h) - s * 4f64.ln() - ln_gamma(h + s) - ln_gamma(1.0 + s)
}

fn small_order_limits() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in [0.5f64, 1.0, 2.0] {
        let target = 2.0 * r.ln() - rho_n(2);
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&s| {
                let lu = ln_gamma_coeff(2, s) + 2.0 * s * r.ln();
                (lu.exp_m1() / s - target).abs()
            })
            .collect();
        let q1 = errs[0] / errs[1];
        let q2 = errs[1] / errs[2];
        ok &= (5.0..=20.0).contains(&q1) && (5.0..=20.0).contains(&q2);
        parts.push(format!("r={r}: ratios {q1:.3}, {q2:.3}"));
    }

    // 0 ≤ u_s(x) ≤ f(x) − ∫_0^s G_t[L_Δ E f](x) dt on B_{r_N}
    let rn = r_n(2);
    let loglap_one = |y: &Point| -(rn * rn - y.norm2()).max(1e-300).ln() + rho_n(2);
    let mut worst = f64::NEG_INFINITY;
    for x in [Point::ORIGIN, Point::new2(0.5 * rn, 0.0)] {
        for s in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let q = integrate(
                |t: f64| ball_green_apply(2, t, rn, &loglap_one, &x, 1e-9).unwrap(),
                0.0,
                s,
                QuadOpts::tol(1e-7).with_max_intervals(200),
            );
            let rhs = 1.0 - q.value;
            let u = BallProblem::new(2, rn, s).unwrap().torsion(&x);
            worst = worst.max(u - rhs);
            ok &= u >= 0.0 && u <= rhs + 1e-3;
        }
    }
    parts.push(format!("integral estimate max excess {worst:.3e}"));
    outcome(ok, parts.join("; "))
}

fn decomposition() -> Outcome {
    let cfg = WosConfig::default().with_samples(200_000).with_seed(808);
    let rep = decomposition_residual(&disk(1.0), &one(), 0.5, &Point::ORIGIN, &cfg).unwrap();
    outcome(
        rep.residual.abs() <= 3.0 * rep.stderr + 1e-3,
        format!(
            "direct {:.6}, flux {:.6}, green {:.6}, residual {:.3e} (stderr {:.3e})",
            rep.direct, rep.flux, rep.green.value, rep.residual, rep.stderr
        ),
    )
}

fn exit_law() -> Outcome {
    let n = 100_000;
    let crit = 1.6276 / (n as f64).sqrt();
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, s) in [0.25, 0.5, 0.75].into_iter().enumerate() {
        let sampler = ExitSampler::new(2, s).unwrap();
        let mut rng = walk_rng(909, k as u64);
        let mut radii: Vec<f64> = (0..n).map(|_| sampler.radius_factor(&mut rng)).collect();
        radii.sort_by(f64::total_cmp);
        // P(R ≤ t) = I_{1−1/t²}(1−s, s), from the radial Poisson kernel (t²−1)^{−s}/t
        let law = Beta::new(1.0 - s, s).unwrap();
        let mut d = 0.0f64;
        for (i, &t) in radii.iter().enumerate() {
            let f = law.cdf(1.0 - 1.0 / (t * t));
            d = d.max(f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f);
        }
        ok &= d < crit;
        parts.push(format!("s={s}: D={d:.5}"));
    }
    outcome(ok, format!("{} (critical {crit:.5})", parts.join(", ")))
}

fn domain_limits() -> Outcome {
    let ball = disk(1.0);
    let opts = LoglapOpts::new(1e-9);
    let s = 0.5;
    let cfg = WosConfig::default().with_samples(1_000_000).with_seed(1010);
    let mut hs = Vec::new();
    let mut us = Vec::new();
    let mut last_stderr = 0.0;
    for n in 1..=10 {
        let dom = ball.inner_approximation(n).unwrap();
        hs.push(h_omega(&dom, &Point::ORIGIN, &opts).unwrap().value);
        let e = solve_green(&dom, &one(), s, &Point::ORIGIN, &cfg).unwrap();
        us.push(e.value);
        last_stderr = e.stderr;
    }
    let h_monotone = hs.windows(2).all(|w| w[1] <= w[0]);
    let h_close = hs[9].abs() <= 1e-4;
    let u_monotone = us.windows(2).all(|w| w[1] >= w[0]);
    let full = solve_green(&ball, &one(), s, &Point::ORIGIN, &cfg).unwrap();
    let u_close = (us[9] - full.value).abs() <= 3.0 * (last_stderr.powi(2) + full.stderr.powi(2)).sqrt();
    outcome(
        h_monotone && h_close && u_monotone && u_close,
        format!(
            "h decreasing {h_monotone}, h(n=10) {:.3e}; G_s 1 nondecreasing {u_monotone}, n=10 {} ± {last_stderr:.1e} vs ball {} ± {:.1e}",
            hs[9], us[9], full.value, full.stderr
        ),
    )
}

fn basic_estimate_sweep() -> Outcome {
    let grid = [-0.5, 0.0, 0.25, 0.5, 0.75];
    let mut failed = Vec::new();
    for &a in &grid {
        for &l in &grid {
            for c in [1.0, 0.1, 0.01] {
                if !verify_basic_estimate(a, l, c, 1e-10).unwrap() {
                    failed.push((a, l, c));
                }
            }
        }
    }
    outcome(failed.is_empty(), format!("75 cases, failures {failed:?}"))
}

fn special_functions() -> Outcome {
    // ψ at any non-integer argument via the recurrence
    fn psi(x: f64) -> f64 {
        if x > 0.0 {
            digamma(x).unwrap()
        } else {
            psi(x + 1.0) - 1.0 / x
        }
    }
    let mut worst_rec = 0.0f64;
    let mut worst_ref = 0.0f64;
    let mut x = 0.1;
    while x <= 50.0 {
        let a = digamma(x + 1.0).unwrap();
        let b = digamma(x).unwrap() + 1.0 / x;
        worst_rec = worst_rec.max((a - b).abs() / a.abs().max(1.0));
        if (x - x.round()).abs() > 0.05 {
            let lhs = psi(1.0 - x) - psi(x);
            let rhs = PI / (PI * x).tan();
            worst_ref = worst_ref.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
        x += 0.0973;
    }
    let worst_rn = (2..=10)
        .map(|n| (2.0 * r_n(n).ln() - rho_n(n)).abs())
        .fold(0.0, f64::max);
    outcome(
        worst_rec <= 1e-12 && worst_ref <= 1e-12 && worst_rn <= 1e-14,
        format!("recurrence {worst_rec:.1e}, reflection {worst_ref:.1e}, 2 ln r_N − ρ_N {worst_rn:.1e}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("torsion oracle", torsion_oracle),
        ("derivative formula", derivative_formula),
        ("monotonicity sharpness", monotonicity_sharpness),
        ("bound sandwich", bound_sandwich),
        ("thin domain", thin_domain),
        ("inclusion identity", inclusion_identity),
        ("small-order limits", small_order_limits),
        ("decomposition", decomposition),
        ("exit law", exit_law),
        ("domain limits", domain_limits),
        ("basic estimate sweep", basic_estimate_sweep),
        ("special functions", special_functions),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = run();
        if !o.pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
