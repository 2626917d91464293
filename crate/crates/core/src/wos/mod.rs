//! Walk-on-spheres estimators for the Green operator of `(-Δ)^s`.
//!
//! A walk starts at `x`, repeatedly inscribes the ball `B_ρ(x_k)` with
//! `ρ = shrink·δ_Ω(x_k)`, credits the expected source collected inside that
//! ball and jumps to an exit point drawn from the ball's Poisson kernel seen
//! from its centre. It stops once it lands outside `Ω` or within the
//! absorbing shell `δ_Ω < eps_shell·diam Ω`.
//!
//! Each walk owns a ChaCha8 stream keyed by `(seed, walk index)`, and walks are
//! grouped in fixed-size chunks merged by a fixed binary tree, so results do
//! not depend on the number of worker threads.

mod pipeline;
mod tables;

pub use pipeline::{
    convolve_extended, decomposition_residual, derivative_pipeline, derivative_pipeline_many, solve_flux_q,
    DecompositionReport,
};
pub use tables::{FluxTables, TableGrid, REPLICATES};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{random_direction, Point};
use crate::par;
use crate::specialfn::{inc_beta_reg_unchecked, torsion_coeff};

/// Walks per work chunk; fixed so that chunking never depends on thread count.
const CHUNK: u64 = 2048;

/// How each step credits the source inside the step ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceRule {
    /// `f(x_k)·γ_{N,s}ρ^{2s}`: exact for constant sources.
    #[default]
    Center,
    /// `f(Y)·γ_{N,s}ρ^{2s}` with `Y` drawn from the normalised Green function
    /// of the step ball; unbiased for bounded or mildly singular sources.
    GreenSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WosConfig {
    pub samples: u64,
    pub max_steps: u32,
    /// Absorption distance as a fraction of `diam Ω`.
    pub eps_shell: f64,
    pub seed: u64,
    pub shrink: f64,
    pub rule: SourceRule,
    /// Walks per node of the interior table in nested estimators.
    pub node_samples: u64,
    /// Absorption distance (fraction of `diam Ω`) for the walks inside the
    /// nested estimators, whose integrands are sensitive to `u` near `∂Ω`.
    pub node_eps_shell: f64,
    /// Table spacing as a fraction of `diam Ω`.
    pub table_spacing: f64,
}

impl Default for WosConfig {
    fn default() -> Self {
        WosConfig {
            samples: 100_000,
            max_steps: 10_000,
            eps_shell: 1e-3,
            seed: 0,
            shrink: 1.0,
            rule: SourceRule::Center,
            node_samples: 16_000,
            node_eps_shell: 1e-8,
            table_spacing: 1.0 / 16.0,
        }
    }
}

impl WosConfig {
    pub fn with_samples(mut self, n: u64) -> Self {
        self.samples = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_rule(mut self, rule: SourceRule) -> Self {
        self.rule = rule;
        self
    }

    /// The configuration used by walks inside nested estimators.
    pub fn nested(&self) -> Self {
        WosConfig {
            eps_shell: self.node_eps_shell,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::invalid("samples must be at least 1"));
        }
        if self.max_steps < 1 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        if !(self.eps_shell > 0.0 && self.eps_shell < 0.1) {
            return Err(Error::invalid(format!("eps_shell must lie in (0, 0.1), got {}", self.eps_shell)));
        }
        if !(self.shrink > 0.0 && self.shrink <= 1.0) {
            return Err(Error::invalid(format!("shrink must lie in (0, 1], got {}", self.shrink)));
        }
        if !(self.node_eps_shell > 0.0 && self.node_eps_shell < 0.1) {
            return Err(Error::invalid("node_eps_shell must lie in (0, 0.1)"));
        }
        if self.node_samples < REPLICATES as u64 {
            return Err(Error::invalid("node_samples must cover every replicate"));
        }
        if !(self.table_spacing > 0.0 && self.table_spacing <= 0.5) {
            return Err(Error::invalid("table_spacing must lie in (0, 0.5]"));
        }
        Ok(())
    }
}

/// Monte Carlo result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    pub truncated: u64,
    pub seed: u64,
    pub config: WosConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Estimate {
    pub fn truncated_fraction(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.truncated as f64 / self.n as f64
        }
    }

    pub(crate) fn exact(value: f64, cfg: &WosConfig) -> Self {
        Estimate {
            value,
            stderr: 0.0,
            n: cfg.samples,
            truncated: 0,
            seed: cfg.seed,
            config: *cfg,
            notes: Vec::new(),
        }
    }

    /// Mean and standard error across independent replicate values.
    pub(crate) fn from_replicates(reps: &[f64], n: u64, truncated: u64, cfg: &WosConfig) -> Self {
        let k = reps.len() as f64;
        let mean = reps.iter().sum::<f64>() / k;
        let var = reps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        Estimate {
            value: mean,
            stderr: (var / k).sqrt(),
            n,
            truncated,
            seed: cfg.seed,
            config: *cfg,
            notes: Vec::new(),
        }
    }
}

/// Running moments, merged pairwise (Chan et al.).
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
    pub truncated: u64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(a: &Moments, b: &Moments) -> Moments {
        if a.n == 0 {
            return *b;
        }
        if b.n == 0 {
            return *a;
        }
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        Moments {
            n,
            mean: a.mean + d * b.n as f64 / n as f64,
            m2: a.m2 + b.m2 + d * d * (a.n as f64) * (b.n as f64) / n as f64,
            truncated: a.truncated + b.truncated,
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        }
    }
}

/// splitmix64 finaliser, used to derive independent stream keys.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream of walk `index` under `seed`.
pub fn walk_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sampler of the exit point of the `2s`-stable process from the centre of a
/// ball: with `B ~ Beta(s, 1−s)` the exit radius is `ρ/√B`, with density
/// proportional to `(R² − ρ²)^{−s}/R` on `(ρ, ∞)`.
#[derive(Debug, Clone)]
pub struct ExitSampler {
    dim: usize,
    beta: Beta<f64>,
}

impl ExitSampler {
    pub fn new(dim: usize, s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::invalid(format!("exit law needs s in (0, 1), got {s}")));
        }
        let beta = Beta::new(s, 1.0 - s).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(ExitSampler { dim, beta })
    }

    /// Exit radius divided by the ball radius.
    pub fn radius_factor<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let b: f64 = self.beta.sample(rng);
            if b > 0.0 {
                return 1.0 / b.sqrt();
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, center: &Point, rho: f64, rng: &mut R) -> Point {
        let k = self.radius_factor(rng);
        let dir = random_direction(self.dim, rng);
        *center + dir * (rho * k)
    }
}

/// One exit point from `B_ρ(center)`.
pub fn sample_exit<R: Rng + ?Sized>(dim: usize, s: f64, center: &Point, rho: f64, rng: &mut R) -> Result<Point> {
    if !(rho > 0.0) {
        return Err(Error::invalid("ball radius must be positive"));
    }
    Ok(ExitSampler::new(dim, s)?.sample(center, rho, rng))
}

/// Sampler of `|Y|` for `Y` with density `G_{B_1}(0, y)/γ_{N,s}`:
/// proposals `U^{1/(2s)}` accepted with probability `I_{1−r²}(s, N/2 − s)`.
#[derive(Debug, Clone, Copy)]
pub struct GreenRadius {
    s: f64,
    b: f64,
}

impl GreenRadius {
    pub fn new(dim: usize, s: f64) -> Self {
        GreenRadius {
            s,
            b: 0.5 * dim as f64 - s,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            let r = u.powf(0.5 / self.s);
            let v: f64 = rng.random();
            if v < inc_beta_reg_unchecked(self.s, self.b, 1.0 - r * r) {
                return r;
            }
        }
    }

    /// Radial CDF `P(|Y| ≤ r)` by quadrature, for testing.
    pub fn cdf(&self, dim: usize, r: f64) -> f64 {
        use crate::quad::{integrate, QuadOpts};
        let s = self.s;
        let b = self.b;
        // density ∝ r^{2s−1} I_{1−r²}; substitute r = v^{1/(2s)}
        let f = |v: f64| inc_beta_reg_unchecked(s, b, 1.0 - v.powf(1.0 / s));
        let opts = QuadOpts::tol(1e-12).with_max_intervals(2000);
        let num = integrate(f, 0.0, r.powf(2.0 * s), opts).value;
        let den = integrate(f, 0.0, 1.0, opts).value;
        let _ = dim;
        num / den
    }
}

/// A configured walker on a fixed domain and order.
pub(crate) struct Walker<'a> {
    dom: &'a Domain,
    dim: usize,
    gamma: f64,
    two_s: f64,
    eps_abs: f64,
    shrink: f64,
    max_steps: u32,
    rule: SourceRule,
    exit: ExitSampler,
    green: GreenRadius,
}

pub(crate) struct WalkOutcome {
    pub value: f64,
    pub truncated: bool,
}

impl<'a> Walker<'a> {
    pub fn new(dom: &'a Domain, s: f64, cfg: &WosConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Walker {
            dom,
            dim: dom.dim(),
            gamma: torsion_coeff(dom.dim(), s),
            two_s: 2.0 * s,
            eps_abs: cfg.eps_shell * dom.diameter(),
            shrink: cfg.shrink,
            max_steps: cfg.max_steps,
            rule: cfg.rule,
            exit: ExitSampler::new(dom.dim(), s)?,
            green: GreenRadius::new(dom.dim(), s),
        })
    }

    pub fn walk<R: Rng + ?Sized>(&self, x0: &Point, f: &dyn Fn(&Point) -> f64, rng: &mut R) -> WalkOutcome {
        let mut x = *x0;
        let mut acc = 0.0;
        for _ in 0..self.max_steps {
            let delta = self.dom.boundary_distance(&x);
            if delta < self.eps_abs {
                return WalkOutcome {
                    value: acc,
                    truncated: false,
                };
            }
            let rho = self.shrink * delta;
            let mass = self.gamma * rho.powf(self.two_s);
            acc += mass
                * match self.rule {
                    SourceRule::Center => f(&x),
                    SourceRule::GreenSample => {
                        let r = self.green.sample(rng);
                        let dir = random_direction(self.dim, rng);
                        f(&(x + dir * (rho * r)))
                    }
                };
            x = self.exit.sample(&x, rho, rng);
            if !self.dom.contains(&x) {
                return WalkOutcome {
                    value: acc,
                    truncated: false,
                };
            }
        }
        WalkOutcome {
            value: acc,
            truncated: true,
        }
    }

    /// Moments of `count` walks on the calling thread.
    pub fn run_sequential(&self, x0: &Point, f: &dyn Fn(&Point) -> f64, seed: u64, first: u64, count: u64) -> Moments {
        let mut m = Moments::default();
        for i in first..first + count {
            let mut rng = walk_rng(seed, i);
            let out = self.walk(x0, f, &mut rng);
            m.push(out.value);
            if out.truncated {
                m.truncated += 1;
            }
        }
        m
    }

    /// Moments of `count` walks from `x0`, walk indices `first..first+count`.
    pub fn run(&self, x0: &Point, f: &(dyn Fn(&Point) -> f64 + Sync), seed: u64, first: u64, count: u64) -> Moments {
        let chunks = count.div_ceil(CHUNK);
        let parts = par::map_indexed(chunks as usize, |c| {
            let lo = first + c as u64 * CHUNK;
            let hi = (lo + CHUNK).min(first + count);
            let mut m = Moments::default();
            for i in lo..hi {
                let mut rng = walk_rng(seed, i);
                let out = self.walk(x0, f, &mut rng);
                m.push(out.value);
                if out.truncated {
                    m.truncated += 1;
                }
            }
            m
        });
        par::tree_reduce(&parts, &Moments::merge).unwrap_or_default()
    }
}

pub(crate) fn check_truncation(truncated: u64, total: u64) -> Result<()> {
    if truncated * 100 > total {
        Err(Error::ExcessiveTruncation { truncated, total })
    } else {
        Ok(())
    }
}

/// Estimates `[G_s f](x)`.
pub fn solve_green(dom: &Domain, f: &dyn ScalarField, s: f64, x: &Point, cfg: &WosConfig) -> Result<Estimate> {
    cfg.validate()?;
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid(format!("order s must lie in (0, 1), got {s}")));
    }
    if !dom.contains(x) {
        return Err(Error::OutsideDomain(*x));
    }
    if f.constant_value() == Some(0.0) {
        return Ok(Estimate::exact(0.0, cfg));
    }
    let walker = Walker::new(dom, s, cfg)?;
    let m = walker.run(x, &|p: &Point| f.eval(p), cfg.seed, 0, cfg.samples);
    check_truncation(m.truncated, m.n)?;
    let mut est = Estimate {
        value: m.mean,
        stderr: m.stderr(),
        n: m.n,
        truncated: m.truncated,
        seed: cfg.seed,
        config: *cfg,
        notes: Vec::new(),
    };
    if matches!(dom.shape(), crate::domain::Shape::Voxel(_)) {
        est.notes.push("voxel boundary: distances accurate to one cell".into());
    }
    Ok(est)
}

/// `solve_green` over a set of points, sharing one configuration.
pub fn solve_green_many(
    dom: &Domain,
    f: &dyn ScalarField,
    s: f64,
    points: &[Point],
    cfg: &WosConfig,
) -> Result<Vec<Estimate>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| solve_green(dom, f, s, p, &cfg.with_seed(mix(cfg.seed, i as u64))))
        .collect()
}
