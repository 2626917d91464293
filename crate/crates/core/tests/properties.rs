use fracgreen::bounds::{bound_from_h0, density_bound, exact_ball_norm, kappa_estimate, basic_integral};
use fracgreen::closedform::BallProblem;
use fracgreen::loglap::{h_ball, h_omega, LoglapOpts};
use fracgreen::specialfn::{digamma, r_n, rho_n, torsion_coeff};
use fracgreen::wos::{sample_exit, solve_green, walk_rng, WosConfig};
use fracgreen::{par, Domain, FieldSpec, Point};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_cfg(seed: u64) -> WosConfig {
    WosConfig::default().with_samples(2_000).with_seed(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exit_points_scale_and_translate(cx in -2.0..2.0f64, cy in -2.0..2.0f64, rho in 0.01..5.0f64,
                                       s in 0.05..0.95f64, seed in any::<u64>()) {
        let c = Point::new2(cx, cy);
        let z = sample_exit(2, s, &c, rho, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let z0 = sample_exit(2, s, &Point::ORIGIN, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let expect = c + z0 * rho;
        prop_assert!(z.dist(&expect) <= 1e-12 * (1.0 + expect.norm()));
        prop_assert!(z.dist(&c) >= rho * (1.0 - 1e-12));
    }

    #[test]
    fn closed_form_torsion_is_bounded_by_its_norm(r in 0.1..3.0f64, s in 0.01..1.0f64, t in 0.0..1.2f64) {
        let b = BallProblem::new(2, r, s).unwrap();
        let u = b.torsion(&Point::new2(t * r, 0.0));
        prop_assert!(u >= 0.0);
        prop_assert!(u <= b.norm() * (1.0 + 1e-12));
        if t >= 1.0 {
            prop_assert_eq!(u, 0.0);
        }
    }

    #[test]
    fn h0_bound_dominates_exact_ball_norm(r in 0.1..3.0f64, s in 0.01..1.0f64, dim in 2usize..4) {
        // on B_r, h_0 = −2 ln r, attained at the centre
        let exact = exact_ball_norm(dim, s, r).unwrap();
        let bound = bound_from_h0(dim, s, -2.0 * r.ln());
        prop_assert!(exact <= bound * (1.0 + 1e-12));
        prop_assert!((exact - torsion_coeff(dim, s) * r.powf(2.0 * s)).abs() <= 1e-12 * exact);
    }

    #[test]
    fn full_density_reduces_to_volume_bound(s in 0.01..1.0f64, vol in 0.1..10.0f64, r in 0.1..2.0f64) {
        let b = density_bound(2, s, vol, r, 1.0);
        let v = (-s * rho_n(2)).exp() * (vol / std::f64::consts::PI).powf(s);
        prop_assert!((b - v).abs() <= 1e-12 * v);
    }

    #[test]
    fn digamma_recurrence(x in 0.1..50.0f64) {
        let lhs = digamma(x + 1.0).unwrap();
        let rhs = digamma(x).unwrap() + 1.0 / x;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn basic_estimate_holds(a in -2.0..0.95f64, lambda in -2.0..0.95f64, c in 1e-4..1.0f64) {
        let i = basic_integral(a, lambda, c).unwrap();
        let k = kappa_estimate(a, lambda, c).unwrap();
        prop_assert!(i <= k + 1e-9, "a={a} lambda={lambda} c={c}: {i} > {k}");
    }

    #[test]
    fn erosion_is_monotone(w in 0.5..2.0f64, h in 0.5..2.0f64, r1 in 0.0..0.2f64, r2 in 0.0..0.2f64) {
        let dom = Domain::cuboid(2, Point::new2(0.0, 0.0), Point::new2(w, h)).unwrap();
        let (small, large) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
        let a = dom.erode(small).unwrap();
        let b = dom.erode(large).unwrap();
        prop_assert!(a.check_subset_of(&b, 200, 1).is_ok());
        prop_assert!(b.check_subset_of(&dom, 200, 2).is_ok());
    }

    #[test]
    fn h_decreases_as_the_domain_grows(x in 0.2..0.8f64, y in 0.1..0.4f64, grow in 0.05..1.0f64) {
        let small = Domain::cuboid(2, Point::new2(0.0, 0.0), Point::new2(1.0, 0.5)).unwrap();
        let big = Domain::cuboid(2, Point::new2(-grow, 0.0), Point::new2(1.0, 0.5 + grow)).unwrap();
        let p = Point::new2(x, y);
        let opts = LoglapOpts::new(1e-8);
        let hs = h_omega(&small, &p, &opts).unwrap().value;
        let hb = h_omega(&big, &p, &opts).unwrap().value;
        prop_assert!(hs >= hb - 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn walk_estimates_preserve_order(a in 0.0..2.0f64, b in 0.0..2.0f64, px in -0.5..0.5f64, seed in any::<u64>()) {
        // common random numbers: f ≤ g pointwise gives an ordered estimate
        let dom = Domain::centered_ball(2, 1.0).unwrap();
        let f = FieldSpec::constant(a.min(b));
        let g = FieldSpec::constant(a.max(b));
        let x = Point::new2(px, 0.1);
        let cfg = small_cfg(seed);
        let uf = solve_green(&dom, &f, 0.5, &x, &cfg).unwrap().value;
        let ug = solve_green(&dom, &g, 0.5, &x, &cfg).unwrap().value;
        prop_assert!(uf <= ug + 1e-12);
        prop_assert!(uf >= 0.0);
    }

    #[test]
    fn walk_estimates_scale_linearly(c in 0.1..5.0f64, seed in any::<u64>()) {
        let dom = Domain::cuboid(2, Point::new2(0.0, 0.0), Point::new2(1.0, 0.5)).unwrap();
        let x = Point::new2(0.3, 0.2);
        let cfg = small_cfg(seed);
        let u1 = solve_green(&dom, &FieldSpec::constant(1.0), 0.4, &x, &cfg).unwrap().value;
        let uc = solve_green(&dom, &FieldSpec::constant(c), 0.4, &x, &cfg).unwrap().value;
        prop_assert!((uc - c * u1).abs() <= 1e-12 * uc.abs().max(1.0));
    }
}

#[test]
fn exit_directions_are_isotropic() {
    let mut rng = walk_rng(11, 0);
    let n = 40_000;
    let (mut sx, mut sy) = (0.0, 0.0);
    for _ in 0..n {
        let z = sample_exit(2, 0.5, &Point::ORIGIN, 1.0, &mut rng).unwrap();
        let r = z.norm();
        sx += z[0] / r;
        sy += z[1] / r;
    }
    // each mean has standard deviation 1/√(2n)
    let tol = 4.0 / (2.0 * n as f64).sqrt();
    assert!((sx / n as f64).abs() < tol);
    assert!((sy / n as f64).abs() < tol);
}

#[test]
fn seeds_reproduce_and_threads_do_not_matter() {
    let dom = Domain::cuboid(2, Point::new2(0.0, 0.0), Point::new2(1.0, 0.3)).unwrap();
    let f = FieldSpec::RadialBump {
        center: vec![0.4, 0.15],
        radius: 0.3,
        height: 1.0,
    };
    let x = Point::new2(0.45, 0.1);
    let cfg = WosConfig::default().with_samples(30_000).with_seed(3);
    let a = solve_green(&dom, &f, 0.6, &x, &cfg).unwrap();
    let b = solve_green(&dom, &f, 0.6, &x, &cfg).unwrap();
    assert_eq!(a, b);
    par::force_sequential(true);
    let c = solve_green(&dom, &f, 0.6, &x, &cfg).unwrap();
    par::force_sequential(false);
    assert_eq!(a.value.to_bits(), c.value.to_bits());
    assert_eq!(a.stderr.to_bits(), c.stderr.to_bits());
    let d = solve_green(&dom, &f, 0.6, &x, &cfg.with_seed(4)).unwrap();
    assert_ne!(a.value, d.value);
}

#[test]
fn solution_decays_at_the_boundary() {
    let dom = Domain::centered_ball(2, 1.0).unwrap();
    let f = FieldSpec::constant(1.0);
    let cfg = WosConfig::default().with_samples(20_000).with_seed(8);
    for s in [0.25, 0.5, 0.75] {
        let b = BallProblem::new(2, 1.0, s).unwrap();
        let x = Point::new2(0.99, 0.0);
        let near = solve_green(&dom, &f, s, &x, &cfg).unwrap();
        assert!((near.value - b.torsion(&x)).abs() < 4.0 * near.stderr + 2e-3, "s={s}: {near:?}");
        assert!(near.value < 0.5 * b.norm());
        // inside the absorbing shell the estimate is zero
        let shell = solve_green(&dom, &f, s, &Point::new2(0.9995, 0.0), &cfg).unwrap();
        assert_eq!(shell.value, 0.0);
    }
}

#[test]
fn h_matches_balls_and_critical_radius() {
    let opts = LoglapOpts::new(1e-9);
    for r in [0.5, 1.0, 2.0] {
        let dom = Domain::centered_ball(2, r).unwrap();
        let x = Point::new2(0.3 * r, -0.2 * r);
        let h = h_omega(&dom, &x, &opts).unwrap().value;
        assert!((h - h_ball(r, &Point::ORIGIN, &x)).abs() < 1e-7);
    }
    for n in 2..=3 {
        let dom = Domain::centered_ball(n, r_n(n)).unwrap();
        let h = h_omega(&dom, &Point::ORIGIN, &opts).unwrap().value;
        assert!((h + rho_n(n)).abs() < 1e-7);
    }
}
