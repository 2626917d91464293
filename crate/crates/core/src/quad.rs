//! Adaptive Gauss–Kronrod quadrature on intervals and unit spheres.
//!
//! The integrator is generic over [`QuadValue`] so that several replicate
//! integrands sharing one set of nodes can be integrated in a single pass.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use crate::geometry::{polar2, spherical3, Point};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// 7-point Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Values that can be integrated: scalars or fixed-size replicate vectors.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    /// Size used for error control.
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

/// `R` values integrated against the same nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reps<const R: usize>(pub [f64; R]);

impl<const R: usize> Reps<R> {
    pub fn splat(v: f64) -> Self {
        Reps([v; R])
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / R as f64
    }

    /// Standard error of the mean across replicates.
    pub fn stderr(&self) -> f64 {
        if R < 2 {
            return 0.0;
        }
        let m = self.mean();
        let var = self.0.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (R as f64 - 1.0);
        (var / R as f64).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.0;
        for v in &mut out {
            *v = f(*v);
        }
        Reps(out)
    }
}

impl<const R: usize> Add for Reps<R> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        for i in 0..R {
            self.0[i] += o.0[i];
        }
        self
    }
}

impl<const R: usize> Sub for Reps<R> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        for i in 0..R {
            self.0[i] -= o.0[i];
        }
        self
    }
}

impl<const R: usize> Mul<f64> for Reps<R> {
    type Output = Self;
    fn mul(mut self, k: f64) -> Self {
        for v in &mut self.0 {
            *v *= k;
        }
        self
    }
}

impl<const R: usize> QuadValue for Reps<R> {
    fn zero() -> Self {
        Reps([0.0; R])
    }
    fn magnitude(&self) -> f64 {
        self.mean().abs()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Number of equal pieces the range is cut into before adapting.
    pub initial_pieces: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_intervals: 400,
            initial_pieces: 1,
        }
    }
}

impl QuadOpts {
    pub fn tol(abs_tol: f64) -> Self {
        QuadOpts {
            abs_tol,
            rel_tol: 0.0,
            ..Default::default()
        }
    }

    pub fn with_pieces(mut self, n: usize) -> Self {
        self.initial_pieces = n.max(1);
        self
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }

    pub fn with_rel(mut self, rel: f64) -> Self {
        self.rel_tol = rel;
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<V> {
    pub value: V,
    pub error: f64,
    pub converged: bool,
    pub evals: usize,
}

/// One Gauss–Kronrod 7/15 panel: (Kronrod value, |K − G|).
pub fn gk15<V: QuadValue>(f: &mut impl FnMut(f64) -> V, a: f64, b: f64) -> (V, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        let s = f1 + f2;
        k = k + s * WGK[j];
        if j % 2 == 1 {
            g = g + s * WG[j / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).magnitude())
}

/// Adaptive bisection on `[a, b]`, always splitting the panel with the largest
/// error estimate.
pub fn integrate<V: QuadValue>(mut f: impl FnMut(f64) -> V, a: f64, b: f64, opts: QuadOpts) -> QuadResult<V> {
    integrate_with_breaks(&mut f, a, b, &[], opts)
}

/// As [`integrate`], with extra initial cut points (kinks of the integrand).
pub fn integrate_with_breaks<V: QuadValue>(
    f: &mut impl FnMut(f64) -> V,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOpts,
) -> QuadResult<V> {
    if a == b {
        return QuadResult {
            value: V::zero(),
            error: 0.0,
            converged: true,
            evals: 0,
        };
    }
    let mut cuts: Vec<f64> = Vec::with_capacity(opts.initial_pieces + breaks.len() + 1);
    let n = opts.initial_pieces.max(1);
    for i in 0..=n {
        cuts.push(a + (b - a) * i as f64 / n as f64);
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    cuts.extend(breaks.iter().copied().filter(|&t| t > lo && t < hi));
    if a < b {
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    } else {
        cuts.sort_by(|x, y| y.partial_cmp(x).unwrap());
    }
    cuts.dedup();

    let mut panels: Vec<(f64, f64, V, f64)> = Vec::with_capacity(opts.max_intervals + 4);
    for w in cuts.windows(2) {
        let (v, e) = gk15(f, w[0], w[1]);
        panels.push((w[0], w[1], v, e));
    }
    let mut evals = 15 * panels.len();
    loop {
        let mut total = V::zero();
        let mut err = 0.0;
        let mut worst = 0;
        for (i, p) in panels.iter().enumerate() {
            total = total + p.2;
            err += p.3;
            if p.3 > panels[worst].3 {
                worst = i;
            }
        }
        let target = opts.abs_tol.max(opts.rel_tol * total.magnitude());
        if err <= target || panels.len() >= opts.max_intervals {
            return QuadResult {
                value: total,
                error: err,
                converged: err <= target,
                evals,
            };
        }
        let (pa, pb, _, _) = panels[worst];
        let mid = 0.5 * (pa + pb);
        if mid == pa || mid == pb {
            // panel below floating-point resolution
            return QuadResult {
                value: total,
                error: err,
                converged: false,
                evals,
            };
        }
        let (v1, e1) = gk15(f, pa, mid);
        let (v2, e2) = gk15(f, mid, pb);
        evals += 30;
        panels[worst] = (pa, mid, v1, e1);
        panels.push((mid, pb, v2, e2));
    }
}

/// Fixed 5-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre5(mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189_1,
        0.478_628_670_499_366_5,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
    ];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    h * X.iter().zip(W).map(|(x, w)| w * f(c + h * x)).sum::<f64>()
}

/// Integral over the unit sphere `S^{dim-1}` (dim 2 or 3) with respect to
/// surface measure. `breaks` are azimuthal kink angles in `[0, 2π]`.
pub fn integrate_sphere<V: QuadValue>(
    dim: usize,
    mut f: impl FnMut(Point) -> V,
    breaks: &[f64],
    opts: QuadOpts,
) -> QuadResult<V> {
    match dim {
        2 => integrate_with_breaks(&mut |a: f64| f(polar2(a)), 0.0, 2.0 * PI, breaks, opts),
        3 => {
            let inner_opts = QuadOpts {
                abs_tol: opts.abs_tol / (4.0 * PI),
                rel_tol: opts.rel_tol,
                max_intervals: opts.max_intervals,
                initial_pieces: 4,
            };
            let mut ok = true;
            let mut evals = 0;
            let mut inner_err = 0.0;
            let outer = integrate_with_breaks(
                &mut |phi: f64| {
                    let r = integrate(|z: f64| f(spherical3(phi, z)), -1.0, 1.0, inner_opts);
                    ok &= r.converged;
                    evals += r.evals;
                    inner_err = f64::max(inner_err, r.error);
                    r.value
                },
                0.0,
                2.0 * PI,
                breaks,
                QuadOpts {
                    initial_pieces: opts.initial_pieces.max(4),
                    ..opts
                },
            );
            QuadResult {
                value: outer.value,
                error: outer.error + 2.0 * PI * inner_err,
                converged: outer.converged && ok,
                evals: outer.evals + evals,
            }
        }
        _ => panic!("sphere quadrature supports dimension 2 or 3 only"),
    }
}
