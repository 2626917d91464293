//! Tabulated fields for the nested estimators.
//!
//! One regular grid covers `Ω` plus a margin. Interior nodes hold
//! `u/δ^s` (the Green solution divided by its boundary behaviour), exterior
//! nodes hold `Q·δ^s` (the exterior flux times the inverse of its blow-up),
//! so both interpolate smoothly up to `∂Ω`. Every value is a vector of
//! independent replicates, which the deterministic quadratures downstream
//! carry along unchanged; the spread across replicates is the Monte Carlo
//! error of the whole chain.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};

use crate::domain::{complement_intervals, Domain};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::Point;
use crate::par;
use crate::quad::{integrate, integrate_sphere, QuadOpts, QuadValue, Reps};
use crate::specialfn::{c_n, c_ns, kappa_ns};

use super::{mix, Walker, WosConfig};

pub const REPLICATES: usize = 8;
pub type R8 = Reps<REPLICATES>;

/// Relative tolerance of the table quadratures.
const TABLE_TOL: f64 = 1e-5;

/// Regular grid `lo + h·i`.
#[derive(Debug, Clone)]
pub struct TableGrid {
    pub dim: usize,
    pub lo: Point,
    pub h: f64,
    pub n: [usize; 3],
}

impl TableGrid {
    /// Grid over the bounding box of `dom` grown by `margin` on every side.
    pub fn covering(dom: &Domain, h: f64, margin: f64) -> Self {
        let (lo, hi) = dom.bounding_box();
        let dim = dom.dim();
        let mut n = [1usize; 3];
        let mut start = lo;
        for k in 0..dim {
            let span = hi[k] - lo[k] + 2.0 * margin;
            let cells = (span / h).ceil() as usize;
            n[k] = cells + 1;
            // centre the grid on the box
            start[k] = 0.5 * (lo[k] + hi[k]) - 0.5 * cells as f64 * h;
        }
        TableGrid { dim, lo: start, h, n }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, flat: usize) -> Point {
        let k = flat % self.n[2];
        let j = (flat / self.n[2]) % self.n[1];
        let i = flat / (self.n[1] * self.n[2]);
        let mut p = self.lo;
        p[0] += i as f64 * self.h;
        p[1] += j as f64 * self.h;
        if self.dim == 3 {
            p[2] += k as f64 * self.h;
        }
        p
    }

    fn flat(&self, i: [usize; 3]) -> usize {
        (i[0] * self.n[1] + i[1]) * self.n[2] + i[2]
    }

    pub fn inside(&self, y: &Point) -> bool {
        (0..self.dim).all(|k| {
            let t = (y[k] - self.lo[k]) / self.h;
            t >= 0.0 && t <= (self.n[k] - 1) as f64
        })
    }

    /// Multilinear interpolation using only the corners that carry a value,
    /// with weights renormalised over them.
    pub fn interp<V: QuadValue>(&self, vals: &[Option<V>], y: &Point) -> Option<V> {
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for k in 0..self.dim {
            let t = (y[k] - self.lo[k]) / self.h;
            let i = (t.floor() as i64).clamp(0, self.n[k] as i64 - 2) as usize;
            base[k] = i;
            frac[k] = (t - i as f64).clamp(0.0, 1.0);
        }
        let corners = 1usize << self.dim;
        let mut acc = V::zero();
        let mut wsum = 0.0;
        for c in 0..corners {
            let mut idx = base;
            let mut w = 1.0;
            for k in 0..self.dim {
                if c >> k & 1 == 1 {
                    idx[k] += 1;
                    w *= frac[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w == 0.0 {
                continue;
            }
            if let Some(v) = vals[self.flat(idx)] {
                acc = acc + v * w;
                wsum += w;
            }
        }
        if wsum > 1e-9 {
            Some(acc * (1.0 / wsum))
        } else {
            None
        }
    }

    /// Valued nodes within `radius` of `y`, with weights `(1 − (d/radius)²)²`.
    fn neighbours<V>(&self, vals: &[Option<V>], y: &Point, radius: f64) -> Vec<(usize, f64)> {
        let reach = (radius / self.h).ceil() as i64;
        let mut c = [0i64; 3];
        for k in 0..self.dim {
            c[k] = ((y[k] - self.lo[k]) / self.h).round() as i64;
        }
        let kz = if self.dim == 3 { reach } else { 0 };
        let mut out = Vec::new();
        for di in -reach..=reach {
            for dj in -reach..=reach {
                for dk in -kz..=kz {
                    let idx = [c[0] + di, c[1] + dj, c[2] + dk];
                    if (0..self.dim).any(|k| idx[k] < 0 || idx[k] >= self.n[k] as i64) {
                        continue;
                    }
                    let f = self.flat([idx[0] as usize, idx[1] as usize, idx[2] as usize]);
                    if vals[f].is_some() {
                        let q = (self.node(f).dist(y) / radius).powi(2);
                        if q < 1.0 {
                            out.push((f, (1.0 - q).powi(2)));
                        }
                    }
                }
            }
        }
        out
    }

    /// Index of the nearest node satisfying `keep` within `reach` cells.
    fn nearest_index(&self, keep: impl Fn(usize) -> bool, y: &Point, reach: i64) -> Option<usize> {
        let mut c = [0i64; 3];
        for k in 0..self.dim {
            c[k] = ((y[k] - self.lo[k]) / self.h).round() as i64;
        }
        let mut best: Option<(f64, usize)> = None;
        let kz = if self.dim == 3 { reach } else { 0 };
        for di in -reach..=reach {
            for dj in -reach..=reach {
                for dk in -kz..=kz {
                    let idx = [c[0] + di, c[1] + dj, c[2] + dk];
                    if (0..self.dim).any(|k| idx[k] < 0 || idx[k] >= self.n[k] as i64) {
                        continue;
                    }
                    let f = self.flat([idx[0] as usize, idx[1] as usize, idx[2] as usize]);
                    if keep(f) {
                        let d = self.node(f).dist(y);
                        if best.is_none_or(|b| d < b.0) {
                            best = Some((d, f));
                        }
                    }
                }
            }
        }
        best.map(|b| b.1)
    }

    /// Value at the nearest node that carries one, searching outward up to
    /// `reach` cells.
    pub fn nearest<V: QuadValue>(&self, vals: &[Option<V>], y: &Point, reach: i64) -> Option<V> {
        self.nearest_index(|i| vals[i].is_some(), y, reach).and_then(|i| vals[i])
    }
}

/// Columns of the local least-squares models of a [`LocalTable`].
#[derive(Debug, Clone, Copy)]
pub enum Basis {
    /// `1, ξ, ξ⊗ξ`.
    Quadratic,
    /// `1, ξ, ξ⊗ξ, (δ/h)^e`, for fields with a `δ^e` term at the boundary.
    Edge(f64),
}

const MAX_COLS: usize = 11;

impl Basis {
    /// Columns at offset `xi` (in cells) and boundary distance `delta`
    /// (in cells); `rank` 2 is the full basis, 1 affine, 0 constant.
    fn columns(&self, dim: usize, rank: u8, xi: &[f64; 3], delta: f64) -> ([f64; MAX_COLS], usize) {
        let mut c = [0.0; MAX_COLS];
        c[0] = 1.0;
        let mut m = 1;
        if rank == 0 {
            return (c, m);
        }
        for k in 0..dim {
            c[m] = xi[k];
            m += 1;
        }
        if rank == 1 {
            return (c, m);
        }
        for i in 0..dim {
            for j in i..dim {
                c[m] = xi[i] * xi[j];
                m += 1;
            }
        }
        if let Basis::Edge(e) = *self {
            c[m] = delta.powf(e);
            m += 1;
        }
        (c, m)
    }
}

/// Node values turned into local weighted least-squares models, one per
/// node, blended with multilinear weights. Nodes without a value but
/// within two cells of valued ones receive an extrapolating model.
#[derive(Debug, Clone)]
pub struct LocalTable<V> {
    grid: TableGrid,
    basis: Basis,
    rank: Vec<u8>,
    models: Vec<Option<[V; MAX_COLS]>>,
}

impl<V: QuadValue + Send + Sync> LocalTable<V> {
    /// `delta[i]` is the boundary distance of node `i`.
    pub fn new(grid: &TableGrid, vals: &[Option<V>], delta: &[f64], basis: Basis) -> Self {
        let h = grid.h;
        let fitted = par::map_indexed(grid.len(), |i| {
            let node = grid.node(i);
            if vals[i].is_none() && grid.nearest(vals, &node, 2).is_none() {
                return None;
            }
            for (radius, rank) in [(2.5, 2u8), (3.5, 2), (3.5, 1), (3.5, 0)] {
                let pts = grid.neighbours(vals, &node, radius * h);
                let (_, m) = basis.columns(grid.dim, rank, &[0.0; 3], 1.0);
                if pts.len() < 2 * m && rank > 0 {
                    continue;
                }
                if pts.is_empty() {
                    break;
                }
                let rows: Vec<([f64; MAX_COLS], f64, V)> = pts
                    .iter()
                    .map(|&(j, w)| {
                        let p = grid.node(j);
                        let mut xi = [0.0; 3];
                        for k in 0..grid.dim {
                            xi[k] = (p[k] - node[k]) / h;
                        }
                        (basis.columns(grid.dim, rank, &xi, delta[j] / h).0, w, vals[j].unwrap())
                    })
                    .collect();
                let mut gram = DMatrix::<f64>::zeros(m, m);
                for (r, w, _) in &rows {
                    for a in 0..m {
                        for b in 0..m {
                            gram[(a, b)] += w * r[a] * r[b];
                        }
                    }
                }
                let Some(chol) = gram.cholesky() else { continue };
                let mut coef = [V::zero(); MAX_COLS];
                let mut worst: f64 = 0.0;
                for (r, w, v) in &rows {
                    let l = chol.solve(&DVector::from_column_slice(&r[..m]));
                    worst = worst.max(l[0].abs() * w);
                    for k in 0..m {
                        coef[k] = coef[k] + *v * (w * l[k]);
                    }
                }
                // near-singular stencils on one side of the boundary
                if worst > 1e3 {
                    continue;
                }
                return Some((coef, rank));
            }
            None
        });
        let mut rank = vec![0; grid.len()];
        let models = fitted
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                f.map(|(c, r)| {
                    rank[i] = r;
                    c
                })
            })
            .collect();
        LocalTable {
            grid: grid.clone(),
            basis,
            rank,
            models,
        }
    }

    fn eval_model(&self, i: usize, y: &Point, delta: f64) -> Option<V> {
        let c = self.models[i].as_ref()?;
        let node = self.grid.node(i);
        let mut xi = [0.0; 3];
        for k in 0..self.grid.dim {
            xi[k] = (y[k] - node[k]) / self.grid.h;
        }
        let (cols, m) = self.basis.columns(self.grid.dim, self.rank[i], &xi, delta / self.grid.h);
        Some((0..m).fold(V::zero(), |acc, k| acc + c[k] * cols[k]))
    }

    /// Value at `y`, whose boundary distance is `delta`.
    pub fn eval(&self, y: &Point, delta: f64) -> Option<V> {
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for k in 0..g.dim {
            let t = (y[k] - g.lo[k]) / g.h;
            let i = (t.floor() as i64).clamp(0, g.n[k] as i64 - 2) as usize;
            base[k] = i;
            frac[k] = (t - i as f64).clamp(0.0, 1.0);
        }
        let mut acc = V::zero();
        let mut wsum = 0.0;
        for c in 0..1usize << g.dim {
            let mut idx = base;
            let mut w = 1.0;
            for k in 0..g.dim {
                if c >> k & 1 == 1 {
                    idx[k] += 1;
                    w *= frac[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w == 0.0 {
                continue;
            }
            if let Some(v) = self.eval_model(g.flat(idx), y, delta) {
                acc = acc + v * w;
                wsum += w;
            }
        }
        if wsum > 1e-9 {
            return Some(acc * (1.0 / wsum));
        }
        let i = g.nearest_index(|i| self.models[i].is_some(), y, 3)?;
        self.eval_model(i, y, delta)
    }
}

/// `∫_a^b f(t) dt` for `f` behaving like `(t−a)^e` at the left end, using
/// `t = a + (b−a) v^{1/(1+e)}`.
pub(crate) fn graded_left<V: QuadValue>(mut f: impl FnMut(f64) -> V, a: f64, b: f64, e: f64, opts: QuadOpts) -> (V, bool) {
    let p = 1.0 / (1.0 + e);
    let len = b - a;
    let r = integrate(
        |v: f64| {
            if v <= 0.0 {
                return V::zero();
            }
            let t = a + len * v.powf(p);
            f(t) * (len * p * v.powf(p - 1.0))
        },
        0.0,
        1.0,
        opts,
    );
    (r.value, r.converged)
}

/// As [`graded_left`], for an endpoint behaviour `(b−t)^e` at the right end.
pub(crate) fn graded_right<V: QuadValue>(mut f: impl FnMut(f64) -> V, a: f64, b: f64, e: f64, opts: QuadOpts) -> (V, bool) {
    let p = 1.0 / (1.0 + e);
    let len = b - a;
    let r = integrate(
        |v: f64| {
            if v <= 0.0 {
                return V::zero();
            }
            let t = b - len * v.powf(p);
            f(t) * (len * p * v.powf(p - 1.0))
        },
        0.0,
        1.0,
        opts,
    );
    (r.value, r.converged)
}

/// `∫_a^b` with endpoint behaviour `|t−end|^e` at both ends.
pub(crate) fn graded_both<V: QuadValue>(mut f: impl FnMut(f64) -> V, a: f64, b: f64, e: f64, opts: QuadOpts) -> (V, bool) {
    let m = 0.5 * (a + b);
    let (l, ok1) = graded_left(&mut f, a, m, e, opts);
    let (r, ok2) = graded_right(&mut f, m, b, e, opts);
    (l + r, ok1 && ok2)
}

/// Interior values `u = G_s f`, exterior flux `Q = −(−Δ)^s u` and the
/// integrals of `Q` needed by the derivative and decomposition formulas.
pub struct FluxTables<'a> {
    pub dom: &'a Domain,
    pub s: f64,
    pub grid: TableGrid,
    phi: LocalTable<R8>,
    psi: LocalTable<R8>,
    mass: R8,
    centroid: Point,
    /// Normalised second moment of `u` about the centroid.
    spread: [[f64; 3]; 3],
    /// Length scale of the far-field decay of `Q`.
    scale: f64,
    pub tol: f64,
    /// Walks spent on the interior table and how many hit the step cap.
    pub walks: u64,
    pub truncated: u64,
}

impl<'a> FluxTables<'a> {
    /// Interior nodes `δ(y) > 0`, `y ∈ Ω`; other nodes are exterior when
    /// `δ(y) > 0`.
    fn classify(dom: &Domain, grid: &TableGrid) -> Vec<(bool, bool)> {
        (0..grid.len())
            .map(|i| {
                let p = grid.node(i);
                let d = dom.boundary_distance(&p);
                let inside = dom.contains(&p);
                (inside && d > 0.0, !inside && d > 0.0)
            })
            .collect()
    }

    /// Tables for a known interior field `u` (replicated).
    pub fn from_u(dom: &'a Domain, s: f64, spacing: f64, u: impl Fn(&Point) -> R8 + Sync) -> Result<Self> {
        Self::build(dom, s, spacing, |grid, kinds| {
            let phi = par::map_indexed(grid.len(), |i| {
                if !kinds[i].0 {
                    return None;
                }
                let p = grid.node(i);
                let d = dom.boundary_distance(&p);
                Some(u(&p) * d.powf(-s))
            });
            Ok((phi, 0, 0))
        })
    }

    /// Tables for `u = G_s f`, estimated by walk-on-spheres at the interior
    /// nodes with `cfg.node_samples` walks each, split into replicates.
    pub fn estimate(dom: &'a Domain, f: &dyn ScalarField, s: f64, cfg: &WosConfig) -> Result<Self> {
        cfg.validate()?;
        let walker = Walker::new(dom, s, &cfg.nested())?;
        let per = cfg.node_samples / REPLICATES as u64;
        let spacing = cfg.table_spacing * dom.diameter();
        Self::build(dom, s, spacing, |grid, kinds| {
            let nodes: Vec<usize> = (0..grid.len()).filter(|&i| kinds[i].0).collect();
            let vals = par::map_slice(&nodes, |&i| {
                let p = grid.node(i);
                let seed = mix(cfg.seed ^ 0x0074_6162_6c65, i as u64);
                let mut r = R8::zero();
                let mut trunc = 0;
                for j in 0..REPLICATES {
                    let m = walker.run_sequential(&p, &|y: &Point| f.eval(y), seed, j as u64 * per, per);
                    r.0[j] = m.mean;
                    trunc += m.truncated;
                }
                let d = dom.boundary_distance(&p);
                (r * d.powf(-s), trunc)
            });
            let mut phi = vec![None; grid.len()];
            let mut truncated = 0;
            for (&i, (v, t)) in nodes.iter().zip(vals) {
                phi[i] = Some(v);
                truncated += t;
            }
            Ok((phi, nodes.len() as u64 * per * REPLICATES as u64, truncated))
        })
    }

    fn build(
        dom: &'a Domain,
        s: f64,
        spacing: f64,
        interior: impl FnOnce(&TableGrid, &[(bool, bool)]) -> Result<(Vec<Option<R8>>, u64, u64)>,
    ) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::invalid("order s must lie in (0, 1)"));
        }
        let grid = TableGrid::covering(dom, spacing, 0.5 * dom.diameter());
        let kinds = Self::classify(dom, &grid);
        if !kinds.iter().any(|k| k.0) {
            return Err(Error::Resolution { found: 0, required: 1 });
        }
        let (phi, walks, truncated) = interior(&grid, &kinds)?;
        let delta = par::map_indexed(grid.len(), |i| dom.boundary_distance(&grid.node(i)));
        let phi = LocalTable::new(&grid, &phi, &delta, Basis::Quadratic);
        let psi = LocalTable::new(&grid, &vec![None; grid.len()], &delta, Basis::Edge(s));
        let mut t = FluxTables {
            dom,
            s,
            grid,
            phi,
            psi,
            mass: R8::zero(),
            centroid: dom.center(),
            spread: [[0.0; 3]; 3],
            scale: 0.5 * dom.diameter(),
            tol: TABLE_TOL,
            walks,
            truncated,
        };
        let (mass, first, second) = t.moments()?;
        t.mass = mass;
        let mm = mass.mean();
        if mm != 0.0 {
            let d = first * (1.0 / mm);
            t.centroid = t.centroid + d;
            for i in 0..3 {
                for j in 0..3 {
                    t.spread[i][j] = second[i][j] / mm - d[i] * d[j];
                }
            }
        }
        let psi = par::map_indexed(t.grid.len(), |i| {
            if !kinds[i].1 {
                return Ok(None);
            }
            let z = t.grid.node(i);
            Ok(Some(t.q_direct(&z)? * t.flux_weight(delta[i])))
        });
        let psi = psi.into_iter().collect::<Result<Vec<_>>>()?;
        t.psi = LocalTable::new(&t.grid, &psi, &delta, Basis::Edge(s));
        Ok(t)
    }

    /// `∫ u` (replicated), and the first and second moments of the
    /// replicate mean about the domain centre.
    fn moments(&self) -> Result<(R8, Point, [[f64; 3]; 3])> {
        let c = self.dom.center();
        let dim = self.grid.dim;
        let s = self.s;
        let inner = QuadOpts::tol(1e-12).with_rel(1e-8).with_max_intervals(300);
        let outer = QuadOpts::tol(1e-12).with_rel(1e-7).with_pieces(8).with_max_intervals(400);
        let radial = |th: &Point, pow: i32| {
            let mut acc = R8::zero();
            for (a, b) in self.dom.ray_intervals(&c, th) {
                let f = |t: f64| self.u(&(c + *th * t)) * t.powi(pow);
                acc = acc
                    + if a == 0.0 {
                        graded_right(f, a, b, s, inner).0
                    } else {
                        graded_both(f, a, b, s, inner).0
                    };
            }
            acc
        };
        let mass = integrate_sphere(dim, |th| radial(&th, dim as i32 - 1), &[], outer).value;
        let first = integrate_sphere(
            dim,
            |th| {
                let m = radial(&th, dim as i32).mean();
                Reps([m * th[0], m * th[1], m * th[2]])
            },
            &[],
            outer,
        )
        .value;
        let second = integrate_sphere(
            dim,
            |th| {
                let m = radial(&th, dim as i32 + 1).mean();
                let mut r = [0.0; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        r[3 * i + j] = m * th[i] * th[j];
                    }
                }
                Reps(r)
            },
            &[],
            outer,
        )
        .value;
        let mut m2 = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m2[i][j] = second.0[3 * i + j];
            }
        }
        Ok((mass, Point(first.0), m2))
    }

    /// Interpolated `u` (zero outside `Ω`).
    pub fn u(&self, y: &Point) -> R8 {
        if !self.dom.contains(y) {
            return R8::zero();
        }
        let d = self.dom.boundary_distance(y);
        let phi = self
            .phi
            .eval(y, d)
            .unwrap_or_else(R8::zero);
        phi * d.powf(self.s)
    }

    /// `Q(z) = c_{N,s} ∫_Ω u(y)|z−y|^{−N−2s} dy` by direct quadrature.
    pub fn q_direct(&self, z: &Point) -> Result<R8> {
        let s = self.s;
        let cns = c_ns(self.grid.dim, s);
        let inner = QuadOpts::tol(1e-12).with_rel(0.1 * self.tol).with_max_intervals(200);
        let r = integrate_sphere(
            self.grid.dim,
            |th| {
                let mut acc = R8::zero();
                for (a, b) in self.dom.ray_intervals(z, &th) {
                    acc = acc + graded_both(|t: f64| self.u(&(*z + th * t)) * t.powf(-1.0 - 2.0 * s), a, b, s, inner).0;
                }
                acc
            },
            &crate::loglap::kink_angles(self.dom, z),
            QuadOpts::tol(1e-12).with_rel(self.tol).with_pieces(16).with_max_intervals(600),
        );
        Ok(r.value * cns)
    }

    /// `δ^s (1 + δ/L)^{N+s}`: removes both the boundary blow-up and the
    /// far-field decay of `Q`.
    fn flux_weight(&self, d: f64) -> f64 {
        d.powf(self.s) * (1.0 + d / self.scale).powf(self.grid.dim as f64 + self.s)
    }

    /// Tabulated `Q(z)` for `z ∉ Ω̄`; a quadrupole expansion beyond the table.
    pub fn q(&self, z: &Point) -> R8 {
        if self.dom.contains(z) {
            return R8::zero();
        }
        if self.grid.inside(z) {
            return self.tabulated(z);
        }
        let far = self.multipole(z);
        // match the multipole to the table where the ray from the centroid
        // leaves the grid; the mismatch decays like R^{-4}
        let d = *z - self.centroid;
        let mut lam = f64::INFINITY;
        for k in 0..self.grid.dim {
            let hi = self.grid.lo[k] + (self.grid.n[k] - 1) as f64 * self.grid.h;
            let bound = if d[k] > 0.0 { hi - self.grid.h } else { self.grid.lo[k] + self.grid.h };
            if d[k] != 0.0 {
                lam = lam.min((bound - self.centroid[k]) / d[k]);
            }
        }
        let edge = self.centroid + d * lam;
        if !(lam > 0.0 && lam < 1.0) || self.dom.contains(&edge) {
            return far;
        }
        let (tab, est) = (self.tabulated(&edge).mean(), self.multipole(&edge).mean());
        if !(est > 0.0 && tab.is_finite()) {
            return far;
        }
        far * (1.0 + (tab / est - 1.0) * lam.powi(4))
    }

    fn tabulated(&self, z: &Point) -> R8 {
        let d = self.dom.boundary_distance(z);
        if d <= 0.0 {
            return R8::zero();
        }
        let psi = self.psi.eval(z, d).unwrap_or_else(R8::zero);
        psi * (1.0 / self.flux_weight(d))
    }

    /// Monopole plus quadrupole of `c_{N,s} ∫ u(y)|z−y|^{−N−2s} dy` about
    /// the centroid.
    fn multipole(&self, z: &Point) -> R8 {
        let d = *z - self.centroid;
        let r2 = d.norm2();
        let p = self.grid.dim as f64 + 2.0 * self.s;
        let mut along = 0.0;
        let mut trace = 0.0;
        for i in 0..self.grid.dim {
            trace += self.spread[i][i];
            for j in 0..self.grid.dim {
                along += d[i] * self.spread[i][j] * d[j];
            }
        }
        let corr = 1.0 + (0.5 * p * (p + 2.0) * along / r2 - 0.5 * p * trace) / r2;
        self.mass * (c_ns(self.grid.dim, self.s) * r2.powf(-0.5 * p) * corr)
    }

    /// `∫_{R^N∖Ω} Q(y+tθ) K(t) dt dθ` over the exterior pieces of the rays
    /// from an interior point `y`; `K(t) = t^{p}` with the tail handled by
    /// `t = T/w`.
    fn exterior_ray_integral(&self, y: &Point, p: f64) -> R8 {
        let s = self.s;
        let diam = self.dom.diameter();
        let inner = QuadOpts::tol(1e-12).with_rel(0.1 * self.tol).with_max_intervals(200);
        let r = integrate_sphere(
            self.grid.dim,
            |th| {
                let ivs = self.dom.ray_intervals(y, &th);
                let f = |t: f64| self.q(&(*y + th * t)) * t.powf(p);
                let mut acc = R8::zero();
                for (a, b) in complement_intervals(&ivs) {
                    if b.is_finite() {
                        acc = acc + graded_both(f, a, b, -s, inner).0;
                    } else {
                        let t_far = a + diam;
                        acc = acc + graded_left(f, a, t_far, -s, inner).0;
                        let tail = integrate(
                            |w: f64| {
                                if w <= 0.0 {
                                    return R8::zero();
                                }
                                let t = t_far / w;
                                f(t) * (t_far / (w * w))
                            },
                            0.0,
                            1.0,
                            inner,
                        );
                        acc = acc + tail.value;
                    }
                }
                acc
            },
            &crate::loglap::kink_angles(self.dom, y),
            QuadOpts::tol(1e-12).with_rel(self.tol).with_pieces(16).with_max_intervals(600),
        );
        r.value
    }

    /// `[L_Δ Q](y) = −c_N ∫_{R^N∖Ω} Q(z)|y−z|^{−N} dz` for `y ∈ Ω`.
    pub fn loglap_q(&self, y: &Point) -> R8 {
        self.exterior_ray_integral(y, -1.0) * (-c_n(self.grid.dim))
    }

    /// `[F_s ∗ (Q 1_{R^N∖Ω})](x)` for `x ∈ Ω`.
    pub fn convolve_q(&self, x: &Point) -> R8 {
        // polar measure t^{N−1} dt against |x−z|^{2s−N}
        self.exterior_ray_integral(x, 2.0 * self.s - 1.0) * kappa_ns(self.grid.dim, self.s)
    }

    /// Interior nodes of the table.
    pub fn interior_nodes(&self) -> Vec<Point> {
        (0..self.grid.len())
            .map(|i| self.grid.node(i))
            .filter(|p| self.dom.contains(p) && self.dom.boundary_distance(p) > 0.0)
            .collect()
    }

    pub fn sphere_measure(&self) -> f64 {
        if self.grid.dim == 2 {
            TAU
        } else {
            4.0 * PI
        }
    }
}

/// Replicated interior table of a field `g` stored as `g·δ^s`.
pub(crate) struct SourceTable<'a> {
    dom: &'a Domain,
    s: f64,
    chi: LocalTable<R8>,
}

impl<'a> SourceTable<'a> {
    pub fn new(dom: &'a Domain, s: f64, grid: TableGrid, g: impl Fn(&Point) -> Result<R8> + Sync) -> Result<Self> {
        let chi = par::map_indexed(grid.len(), |i| {
            let p = grid.node(i);
            if !dom.contains(&p) {
                return Ok(None);
            }
            let d = dom.boundary_distance(&p);
            if d <= 0.0 {
                return Ok(None);
            }
            Ok(Some(g(&p)? * d.powf(s)))
        });
        let chi = chi.into_iter().collect::<Result<Vec<_>>>()?;
        let delta = par::map_indexed(grid.len(), |i| dom.boundary_distance(&grid.node(i)));
        let chi = LocalTable::new(&grid, &chi, &delta, Basis::Edge(s));
        Ok(SourceTable { dom, s, chi })
    }

    pub fn eval(&self, y: &Point, rep: usize) -> f64 {
        if !self.dom.contains(y) {
            return 0.0;
        }
        let d = self.dom.boundary_distance(y);
        if d <= 0.0 {
            return 0.0;
        }
        let chi = self
            .chi
            .eval(y, d)
            .unwrap_or_else(R8::zero);
        chi.0[rep] * d.powf(-self.s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_interp_is_exact_for_affine() {
        let dom = Domain::centered_ball(2, 1.0).unwrap();
        let g = TableGrid::covering(&dom, 0.1, 0.2);
        let vals: Vec<Option<f64>> = (0..g.len()).map(|i| Some(2.0 * g.node(i)[0] - g.node(i)[1])).collect();
        let y = Point::new2(0.123, -0.456);
        assert!((g.interp(&vals, &y).unwrap() - (0.246 + 0.456)).abs() < 1e-12);
    }

    #[test]
    fn graded_rules_integrate_endpoint_powers() {
        let opts = QuadOpts::tol(1e-13).with_rel(1e-12);
        let (v, _) = graded_left(|t: f64| t.powf(-0.7), 0.0, 1.0, -0.7, opts);
        assert!((v - 1.0 / 0.3).abs() < 1e-10);
        let (v, _) = graded_both(|t: f64| (t * (1.0 - t)).powf(0.4), 0.0, 1.0, 0.4, opts);
        let exact = crate::specialfn::beta_fn(1.4, 1.4);
        assert!((v - exact).abs() < 1e-10);
    }
}
