//! Bounded open sets in `R^2` / `R^3`.
//!
//! A [`Domain`] answers membership, boundary-distance and ray queries. Ray
//! queries (the intervals of `t ≥ 0` with `x + t·dir ∈ Ω`) are exact for every
//! shape, including voxel masks, and carry most of the quadrature elsewhere in
//! the crate: in polar coordinates centred at `x`, an integral over `Ω` becomes
//! an integral over directions of one-dimensional integrals over these
//! intervals.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::par;
use crate::quad::{integrate, QuadOpts};
use crate::specialfn::unit_ball_volume;

/// Intervals `[a, b]` of the ray parameter, sorted and disjoint.
pub type Intervals = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub enum Shape {
    Ball { center: Point, radius: f64 },
    Box { lo: Point, hi: Point },
    UnionOfBalls(Vec<(Point, f64)>),
    Voxel(VoxelMask),
}

#[derive(Debug, Clone)]
pub struct Domain {
    dim: usize,
    shape: Shape,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::invalid(format!("geometry supports dimension 2 or 3, got {dim}")))
    }
}

impl Domain {
    pub fn ball(dim: usize, center: Point, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Domain {
            dim,
            shape: Shape::Ball { center, radius },
        })
    }

    /// Ball of radius `r` centred at the origin.
    pub fn centered_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(dim, Point::ORIGIN, radius)
    }

    pub fn cuboid(dim: usize, lo: Point, hi: Point) -> Result<Self> {
        check_dim(dim)?;
        for k in 0..dim {
            if !(hi[k] > lo[k]) {
                return Err(Error::invalid(format!("box has empty extent along axis {k}")));
            }
        }
        Ok(Domain {
            dim,
            shape: Shape::Box { lo, hi },
        })
    }

    pub fn union_of_balls(dim: usize, balls: Vec<(Point, f64)>) -> Result<Self> {
        check_dim(dim)?;
        if balls.is_empty() || balls.iter().any(|b| !(b.1 > 0.0)) {
            return Err(Error::invalid("union needs at least one ball of positive radius"));
        }
        Ok(Domain {
            dim,
            shape: Shape::UnionOfBalls(balls),
        })
    }

    pub fn voxel(mask: VoxelMask) -> Self {
        Domain {
            dim: mask.dim,
            shape: Shape::Voxel(mask),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Membership in the open set.
    pub fn contains(&self, x: &Point) -> bool {
        match &self.shape {
            Shape::Ball { center, radius } => (*x - *center).norm2() < radius * radius,
            Shape::Box { lo, hi } => (0..self.dim).all(|k| x[k] > lo[k] && x[k] < hi[k]),
            Shape::UnionOfBalls(balls) => balls.iter().any(|(c, r)| (*x - *c).norm2() < r * r),
            Shape::Voxel(m) => m.occupied_at(x),
        }
    }

    /// `dist(x, ∂Ω)`.
    ///
    /// Exact for balls and boxes and outside a union of balls; inside a union
    /// it returns the largest inscribed distance of a single member ball, a
    /// lower bound. Voxel masks are accurate to about one cell.
    pub fn boundary_distance(&self, x: &Point) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => ((*x - *center).norm() - radius).abs(),
            Shape::Box { lo, hi } => {
                if self.contains(x) {
                    (0..self.dim)
                        .map(|k| (x[k] - lo[k]).min(hi[k] - x[k]))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    let inside_closed = (0..self.dim).all(|k| x[k] >= lo[k] && x[k] <= hi[k]);
                    if inside_closed {
                        0.0
                    } else {
                        (0..self.dim)
                            .map(|k| {
                                let d = (lo[k] - x[k]).max(x[k] - hi[k]).max(0.0);
                                d * d
                            })
                            .sum::<f64>()
                            .sqrt()
                    }
                }
            }
            Shape::UnionOfBalls(balls) => {
                let inside = balls
                    .iter()
                    .map(|(c, r)| r - (*x - *c).norm())
                    .fold(f64::NEG_INFINITY, f64::max);
                if inside > 0.0 {
                    inside
                } else {
                    -inside
                }
            }
            Shape::Voxel(m) => m.boundary_distance(x),
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let mut lo = *center;
                let mut hi = *center;
                for k in 0..self.dim {
                    lo[k] -= radius;
                    hi[k] += radius;
                }
                (lo, hi)
            }
            Shape::Box { lo, hi } => (*lo, *hi),
            Shape::UnionOfBalls(balls) => {
                let mut lo = Point([f64::INFINITY; 3]);
                let mut hi = Point([f64::NEG_INFINITY; 3]);
                for (c, r) in balls {
                    for k in 0..self.dim {
                        lo[k] = lo[k].min(c[k] - r);
                        hi[k] = hi[k].max(c[k] + r);
                    }
                }
                for k in self.dim..3 {
                    lo[k] = 0.0;
                    hi[k] = 0.0;
                }
                (lo, hi)
            }
            Shape::Voxel(m) => m.occupied_bounds(),
        }
    }

    pub fn center(&self) -> Point {
        let (lo, hi) = self.bounding_box();
        (lo + hi) * 0.5
    }

    /// Diameter; for voxel masks and unions the diagonal of the bounding box
    /// is used where no cheaper exact value exists.
    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::UnionOfBalls(balls) => {
                let mut d: f64 = 0.0;
                for (i, (ci, ri)) in balls.iter().enumerate() {
                    d = d.max(2.0 * ri);
                    for (cj, rj) in &balls[i + 1..] {
                        d = d.max(ci.dist(cj) + ri + rj);
                    }
                }
                d
            }
            _ => {
                let (lo, hi) = self.bounding_box();
                (hi - lo).norm()
            }
        }
    }

    /// `sup_{y ∈ Ω} |y − c|`.
    pub fn max_distance_from(&self, c: &Point) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => c.dist(center) + radius,
            Shape::Box { lo, hi } => (0..self.dim)
                .map(|k| {
                    let d = (c[k] - lo[k]).abs().max((hi[k] - c[k]).abs());
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            Shape::UnionOfBalls(balls) => balls
                .iter()
                .map(|(b, r)| c.dist(b) + r)
                .fold(0.0, f64::max),
            Shape::Voxel(m) => m.max_distance_from(c),
        }
    }

    /// Lebesgue measure `|Ω|`.
    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => unit_ball_volume(self.dim) * radius.powi(self.dim as i32),
            Shape::Box { lo, hi } => (0..self.dim).map(|k| hi[k] - lo[k]).product(),
            Shape::Voxel(m) => m.count_occupied() as f64 * m.spacing.powi(self.dim as i32),
            Shape::UnionOfBalls(_) => {
                let (lo, hi) = self.bounding_box();
                self.section_measure(&lo, &hi)
            }
        }
    }

    /// Measure of `Ω ∩ [lo, hi]` via chord integration along the last axis.
    fn section_measure(&self, lo: &Point, hi: &Point) -> f64 {
        let last = self.dim - 1;
        let dir = Point::axis(self.dim, last);
        let len = hi[last] - lo[last];
        let chord = |mut base: Point| {
            base[last] = lo[last];
            clipped_length(&self.ray_intervals(&base, &dir), 0.0, len)
        };
        let opts = QuadOpts::tol(1e-9).with_rel(1e-9).with_pieces(16).with_max_intervals(4000);
        if self.dim == 2 {
            integrate(|u| chord(Point::new2(u, 0.0)), lo[0], hi[0], opts).value
        } else {
            integrate(
                |u| integrate(|v| chord(Point::new3(u, v, 0.0)), lo[1], hi[1], opts).value,
                lo[0],
                hi[0],
                opts,
            )
            .value
        }
    }

    /// Sorted disjoint intervals of `t ≥ 0` with `x + t·dir ∈ Ω`; `dir` must be
    /// a unit vector. When `x ∈ Ω` the first interval starts at 0.
    pub fn ray_intervals(&self, x: &Point, dir: &Point) -> Intervals {
        match &self.shape {
            Shape::Ball { center, radius } => ball_chord(x, dir, center, *radius)
                .map(|iv| vec![iv])
                .unwrap_or_default(),
            Shape::Box { lo, hi } => box_chord(self.dim, x, dir, lo, hi)
                .map(|iv| vec![iv])
                .unwrap_or_default(),
            Shape::UnionOfBalls(balls) => {
                let mut ivs: Intervals = balls
                    .iter()
                    .filter_map(|(c, r)| ball_chord(x, dir, c, *r))
                    .collect();
                merge_intervals(&mut ivs);
                ivs
            }
            Shape::Voxel(m) => m.ray_intervals(x, dir),
        }
    }

    /// Regular lattice with the given spacing, aligned on the bounding-box
    /// centre, restricted to interior points.
    pub fn lattice(&self, spacing: f64) -> Vec<Point> {
        let (lo, hi) = self.bounding_box();
        lattice_points(self.dim, &lo, &hi, spacing)
            .into_iter()
            .filter(|p| self.contains(p))
            .collect()
    }

    /// Erosion `{x ∈ Ω : dist(x, ∂Ω) > radius}`, represented in the same
    /// family of shapes. A union of balls erodes member-wise, which yields a
    /// subset of the true erosion.
    pub fn erode(&self, radius: f64) -> Result<Domain> {
        if !(radius >= 0.0) {
            return Err(Error::invalid("erosion radius must be nonnegative"));
        }
        let shape = match &self.shape {
            Shape::Ball { center, radius: r } => {
                if *r <= radius {
                    return Err(Error::EmptyErosion { radius });
                }
                Shape::Ball {
                    center: *center,
                    radius: r - radius,
                }
            }
            Shape::Box { lo, hi } => {
                let mut l = *lo;
                let mut h = *hi;
                for k in 0..self.dim {
                    l[k] += radius;
                    h[k] -= radius;
                    if h[k] <= l[k] {
                        return Err(Error::EmptyErosion { radius });
                    }
                }
                Shape::Box { lo: l, hi: h }
            }
            Shape::UnionOfBalls(balls) => {
                let kept: Vec<_> = balls
                    .iter()
                    .filter(|b| b.1 > radius)
                    .map(|(c, r)| (*c, r - radius))
                    .collect();
                if kept.is_empty() {
                    return Err(Error::EmptyErosion { radius });
                }
                Shape::UnionOfBalls(kept)
            }
            Shape::Voxel(m) => Shape::Voxel(m.erode(radius)?),
        };
        Ok(Domain { dim: self.dim, shape })
    }

    /// `n`-th member of the nested inner approximation: the erosion by
    /// `2^{-n} diam(Ω) / 4`.
    pub fn inner_approximation(&self, n: u32) -> Result<Domain> {
        if n < 1 {
            return Err(Error::invalid("inner approximation index starts at 1"));
        }
        self.erode(self.diameter() * 0.25 * 0.5f64.powi(n as i32))
    }

    /// Checks `self ⊂ other` on `samples` uniform points of `self`'s bounding
    /// box plus its lattice at 1/32 of the diameter.
    pub fn check_subset_of(&self, other: &Domain, samples: usize, seed: u64) -> Result<()> {
        let (lo, hi) = self.bounding_box();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = self.lattice(self.diameter() / 32.0);
        for p in lattice.iter() {
            if !other.contains(p) {
                return Err(Error::SubsetViolation(*p));
            }
        }
        for _ in 0..samples {
            let mut p = Point::ORIGIN;
            for k in 0..self.dim {
                p[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
            }
            if self.contains(&p) && !other.contains(&p) {
                return Err(Error::SubsetViolation(p));
            }
        }
        Ok(())
    }

    /// `|B_r(x) ∩ Ω|`, integrating chord lengths along the last axis with
    /// adaptive quadrature over the remaining coordinates.
    pub fn ball_intersection_measure(&self, x: &Point, r: f64) -> f64 {
        let last = self.dim - 1;
        let dir = Point::axis(self.dim, last);
        let opts = QuadOpts::tol(1e-9 * r.powi(self.dim as i32))
            .with_rel(1e-7)
            .with_pieces(8)
            .with_max_intervals(2000);
        let chord = |base_offset: Point, half: f64| {
            if half <= 0.0 {
                return 0.0;
            }
            let mut base = *x + base_offset;
            base[last] -= half;
            clipped_length(&self.ray_intervals(&base, &dir), 0.0, 2.0 * half)
        };
        if self.dim == 2 {
            integrate(
                |u| chord(Point::new2(u, 0.0), (r * r - u * u).max(0.0).sqrt()),
                -r,
                r,
                opts,
            )
            .value
        } else {
            integrate(
                |u| {
                    let w = (r * r - u * u).max(0.0).sqrt();
                    integrate(
                        |v| chord(Point::new3(u, v, 0.0), (w * w - v * v).max(0.0).sqrt()),
                        -w,
                        w,
                        QuadOpts { initial_pieces: 4, ..opts },
                    )
                    .value
                },
                -r,
                r,
                opts,
            )
            .value
        }
    }

    /// Relative `r`-density `sup_x |B_r(x) ∩ Ω| / |B_r|` over the interior
    /// lattice of the given spacing.
    pub fn relative_density(&self, r: f64, lattice_spacing: f64) -> Result<DensityReport> {
        if !(r > 0.0) || !(lattice_spacing > 0.0) {
            return Err(Error::invalid("radius and lattice spacing must be positive"));
        }
        let pts = self.lattice(lattice_spacing);
        if pts.len() < 10 {
            return Err(Error::Resolution {
                found: pts.len(),
                required: 10,
            });
        }
        let full = unit_ball_volume(self.dim) * r.powi(self.dim as i32);
        let dens = par::map_slice(&pts, |p| (self.ball_intersection_measure(p, r) / full).min(1.0));
        let (imax, dmax) = dens
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
        Ok(DensityReport {
            r,
            d_r: dmax,
            argmax_point: pts[imax],
            lattice_spacing,
            points: pts.len(),
        })
    }
}

/// Result of [`Domain::relative_density`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityReport {
    pub r: f64,
    pub d_r: f64,
    pub argmax_point: Point,
    pub lattice_spacing: f64,
    pub points: usize,
}

/// Lattice `c + k·spacing` covering `[lo, hi]`, `c` the box centre.
pub fn lattice_points(dim: usize, lo: &Point, hi: &Point, spacing: f64) -> Vec<Point> {
    let c = (*lo + *hi) * 0.5;
    let mut counts = [0i64; 3];
    for k in 0..dim {
        counts[k] = ((hi[k] - lo[k]) * 0.5 / spacing).floor() as i64;
    }
    let mut out = Vec::new();
    let kz = if dim == 3 { counts[2] } else { 0 };
    for i in -counts[0]..=counts[0] {
        for j in -counts[1]..=counts[1] {
            for l in -kz..=kz {
                let mut p = c;
                p[0] += i as f64 * spacing;
                p[1] += j as f64 * spacing;
                if dim == 3 {
                    p[2] += l as f64 * spacing;
                }
                out.push(p);
            }
        }
    }
    out
}

/// Total length of `ivs ∩ [a, b]`.
pub fn clipped_length(ivs: &Intervals, a: f64, b: f64) -> f64 {
    ivs.iter()
        .map(|&(lo, hi)| (hi.min(b) - lo.max(a)).max(0.0))
        .sum()
}

/// Set difference `a ∖ b` of sorted disjoint interval lists.
pub fn subtract_intervals(a: &Intervals, b: &Intervals) -> Intervals {
    let mut out = Vec::new();
    for &(lo, hi) in a {
        let mut start = lo;
        for &(blo, bhi) in b {
            if bhi <= start || blo >= hi {
                continue;
            }
            if blo > start {
                out.push((start, blo));
            }
            start = start.max(bhi);
            if start >= hi {
                break;
            }
        }
        if start < hi {
            out.push((start, hi));
        }
    }
    out
}

/// Complement of sorted disjoint intervals within `[0, ∞)`; the last piece
/// has `f64::INFINITY` as upper end.
pub fn complement_intervals(a: &Intervals) -> Intervals {
    let mut out = Vec::new();
    let mut start = 0.0;
    for &(lo, hi) in a {
        if lo > start {
            out.push((start, lo));
        }
        start = hi;
    }
    out.push((start, f64::INFINITY));
    out
}

fn merge_intervals(ivs: &mut Intervals) {
    ivs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Intervals = Vec::with_capacity(ivs.len());
    for &(lo, hi) in ivs.iter() {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    *ivs = merged;
}

fn ball_chord(x: &Point, dir: &Point, c: &Point, r: f64) -> Option<(f64, f64)> {
    let rel = *x - *c;
    let b = rel.dot(dir);
    let q = rel.norm2() - r * r;
    let disc = b * b - q;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t2 = -b + sq;
    if t2 <= 0.0 {
        return None;
    }
    // stable form of the smaller root
    let t1 = if b > 0.0 { -b - sq } else { q / (-b + sq) };
    Some((t1.max(0.0), t2))
}

fn box_chord(dim: usize, x: &Point, dir: &Point, lo: &Point, hi: &Point) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for k in 0..dim {
        if dir[k] == 0.0 {
            if !(x[k] > lo[k] && x[k] < hi[k]) {
                return None;
            }
        } else {
            let a = (lo[k] - x[k]) / dir[k];
            let b = (hi[k] - x[k]) / dir[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    if t1 > t0 {
        Some((t0, t1))
    } else {
        None
    }
}

/// On-disk header of a voxel mask.
///
/// The occupancy file holds one byte per cell (0 = empty, 1 = occupied) in
/// row-major order: the last axis varies fastest, so cell `(i, j, k)` of a
/// mask with `dims = [nx, ny, nz]` is byte `(i·ny + j)·nz + k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoxelHeader {
    pub dim: usize,
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub dims: Vec<usize>,
    /// Occupancy file, relative to the header's directory.
    pub data_file: String,
}

/// Occupancy grid with cells `[origin + i·h, origin + (i+1)·h)`.
#[derive(Debug, Clone)]
pub struct VoxelMask {
    dim: usize,
    origin: Point,
    spacing: f64,
    dims: [usize; 3],
    occ: Vec<bool>,
    // transforms on the grid padded by one empty layer per axis
    pdims: [usize; 3],
    near_empty: Vec<u32>,
    near_occ: Vec<u32>,
}

impl VoxelMask {
    /// `dims` has `dim` entries; `occ` is row-major with the last axis fastest.
    pub fn new(dim: usize, origin: Point, spacing: f64, dims: &[usize], occ: Vec<bool>) -> Result<Self> {
        check_dim(dim)?;
        if dims.len() != dim || dims.contains(&0) {
            return Err(Error::invalid("voxel dims must have one positive entry per axis"));
        }
        if !(spacing > 0.0) {
            return Err(Error::invalid("voxel spacing must be positive"));
        }
        let mut d = [1usize; 3];
        d[..dim].copy_from_slice(dims);
        if occ.len() != d[0] * d[1] * d[2] {
            return Err(Error::invalid(format!(
                "voxel data has {} cells, expected {}",
                occ.len(),
                d[0] * d[1] * d[2]
            )));
        }
        if !occ.iter().any(|&b| b) {
            return Err(Error::invalid("voxel mask has no occupied cell"));
        }
        let mut pdims = [1usize; 3];
        for k in 0..dim {
            pdims[k] = d[k] + 2;
        }
        let mut m = VoxelMask {
            dim,
            origin,
            spacing,
            dims: d,
            occ,
            pdims,
            near_empty: Vec::new(),
            near_occ: Vec::new(),
        };
        let padded_occ: Vec<bool> = (0..pdims[0] * pdims[1] * pdims[2])
            .map(|p| m.padded_occupied(m.unflatten_padded(p)))
            .collect();
        m.near_empty = feature_transform(&pdims, dim, &padded_occ.iter().map(|&o| !o).collect::<Vec<_>>());
        m.near_occ = feature_transform(&pdims, dim, &padded_occ);
        Ok(m)
    }

    /// Rasterises a domain: a cell is occupied when its centre is inside.
    pub fn rasterize(dom: &Domain, spacing: f64, margin_cells: usize) -> Result<Self> {
        let (lo, hi) = dom.bounding_box();
        let dim = dom.dim();
        let mut origin = lo;
        let mut dims = vec![0usize; dim];
        for k in 0..dim {
            origin[k] = lo[k] - margin_cells as f64 * spacing;
            dims[k] = ((hi[k] - origin[k]) / spacing).ceil() as usize + margin_cells;
        }
        let mut d = [1usize; 3];
        d[..dim].copy_from_slice(&dims);
        let mut occ = Vec::with_capacity(d[0] * d[1] * d[2]);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for l in 0..d[2] {
                    let mut c = origin;
                    c[0] += (i as f64 + 0.5) * spacing;
                    c[1] += (j as f64 + 0.5) * spacing;
                    if dim == 3 {
                        c[2] += (l as f64 + 0.5) * spacing;
                    }
                    occ.push(dom.contains(&c));
                }
            }
        }
        VoxelMask::new(dim, origin, spacing, &dims, occ)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.dim]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occ
    }

    pub fn count_occupied(&self) -> usize {
        self.occ.iter().filter(|&&b| b).count()
    }

    fn flat(&self, i: [usize; 3]) -> usize {
        (i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]
    }

    pub fn is_occupied(&self, i: [usize; 3]) -> bool {
        self.occ[self.flat(i)]
    }

    fn unflatten_padded(&self, p: usize) -> [usize; 3] {
        let k = p % self.pdims[2];
        let j = (p / self.pdims[2]) % self.pdims[1];
        let i = p / (self.pdims[1] * self.pdims[2]);
        [i, j, k]
    }

    fn flat_padded(&self, p: [usize; 3]) -> usize {
        (p[0] * self.pdims[1] + p[1]) * self.pdims[2] + p[2]
    }

    fn padded_occupied(&self, p: [usize; 3]) -> bool {
        let mut i = [0usize; 3];
        for k in 0..self.dim {
            if p[k] == 0 || p[k] > self.dims[k] {
                return false;
            }
            i[k] = p[k] - 1;
        }
        self.is_occupied(i)
    }

    /// Signed cell coordinates of `x` (unpadded).
    fn cell_of(&self, x: &Point) -> [i64; 3] {
        let mut c = [0i64; 3];
        for k in 0..self.dim {
            c[k] = ((x[k] - self.origin[k]) / self.spacing).floor() as i64;
        }
        c
    }

    fn in_grid(&self, c: &[i64; 3]) -> bool {
        (0..self.dim).all(|k| c[k] >= 0 && (c[k] as usize) < self.dims[k])
    }

    pub fn occupied_at(&self, x: &Point) -> bool {
        let c = self.cell_of(x);
        if !self.in_grid(&c) {
            return false;
        }
        self.is_occupied([c[0] as usize, c[1] as usize, c[2] as usize])
    }

    /// Distance from `x` to the cell box of padded index `p`.
    fn dist_to_padded_cell(&self, x: &Point, p: [usize; 3]) -> f64 {
        let mut d2 = 0.0;
        for k in 0..self.dim {
            let lo = self.origin[k] + (p[k] as f64 - 1.0) * self.spacing;
            let hi = lo + self.spacing;
            let d = (lo - x[k]).max(x[k] - hi).max(0.0);
            d2 += d * d;
        }
        d2.sqrt()
    }

    fn boundary_distance(&self, x: &Point) -> f64 {
        let c = self.cell_of(x);
        let mut p = [0usize; 3];
        for k in 0..self.dim {
            p[k] = (c[k] + 1).clamp(0, self.pdims[k] as i64 - 1) as usize;
        }
        let idx = self.flat_padded(p);
        let inside = self.in_grid(&c) && self.padded_occupied(p);
        let site = if inside { self.near_empty[idx] } else { self.near_occ[idx] };
        self.dist_to_padded_cell(x, self.unflatten_padded(site as usize))
    }

    fn occupied_bounds(&self) -> (Point, Point) {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for i in 0..self.dims[0] {
            for j in 0..self.dims[1] {
                for l in 0..self.dims[2] {
                    if self.is_occupied([i, j, l]) {
                        let idx = [i, j, l];
                        for k in 0..3 {
                            lo[k] = lo[k].min(idx[k]);
                            hi[k] = hi[k].max(idx[k] + 1);
                        }
                    }
                }
            }
        }
        let mut plo = Point::ORIGIN;
        let mut phi = Point::ORIGIN;
        for k in 0..self.dim {
            plo[k] = self.origin[k] + lo[k] as f64 * self.spacing;
            phi[k] = self.origin[k] + hi[k] as f64 * self.spacing;
        }
        (plo, phi)
    }

    fn max_distance_from(&self, c: &Point) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.dims[0] {
            for j in 0..self.dims[1] {
                for l in 0..self.dims[2] {
                    if !self.is_occupied([i, j, l]) {
                        continue;
                    }
                    let idx = [i, j, l];
                    let mut d2 = 0.0;
                    for k in 0..self.dim {
                        let lo = self.origin[k] + idx[k] as f64 * self.spacing;
                        let far = (c[k] - lo).abs().max((lo + self.spacing - c[k]).abs());
                        d2 += far * far;
                    }
                    best = best.max(d2.sqrt());
                }
            }
        }
        best
    }

    /// Erosion in the cell-centre metric: a cell survives when every empty
    /// cell centre (the padding layer included) is farther than
    /// `radius + h/2` from its own centre.
    pub fn erode(&self, radius: f64) -> Result<VoxelMask> {
        let thr = radius + 0.5 * self.spacing;
        let mut occ = self.occ.clone();
        for i in 0..self.dims[0] {
            for j in 0..self.dims[1] {
                for l in 0..self.dims[2] {
                    let f = self.flat([i, j, l]);
                    if !occ[f] {
                        continue;
                    }
                    let p = [i + 1, j + 1, if self.dim == 3 { l + 1 } else { 0 }];
                    let site = self.unflatten_padded(self.near_empty[self.flat_padded(p)] as usize);
                    let mut d2 = 0.0;
                    for k in 0..self.dim {
                        let d = (site[k] as f64 - p[k] as f64) * self.spacing;
                        d2 += d * d;
                    }
                    if d2.sqrt() <= thr {
                        occ[f] = false;
                    }
                }
            }
        }
        if !occ.iter().any(|&b| b) {
            return Err(Error::EmptyErosion { radius });
        }
        VoxelMask::new(self.dim, self.origin, self.spacing, self.dims(), occ)
    }

    fn ray_intervals(&self, x: &Point, dir: &Point) -> Intervals {
        let h = self.spacing;
        let lo = self.origin;
        let mut hi = self.origin;
        for k in 0..self.dim {
            hi[k] += self.dims[k] as f64 * h;
        }
        // slab test against the whole grid, allowing starts on its boundary
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for k in 0..self.dim {
            if dir[k] == 0.0 {
                if x[k] < lo[k] || x[k] >= hi[k] {
                    return Vec::new();
                }
            } else {
                let a = (lo[k] - x[k]) / dir[k];
                let b = (hi[k] - x[k]) / dir[k];
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t1 <= t0 {
            return Vec::new();
        }
        let start = *x + *dir * t0;
        let mut cell = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for k in 0..self.dim {
            let mut c = ((start[k] - self.origin[k]) / h).floor() as i64;
            if t0 > 0.0 && dir[k] != 0.0 {
                // entering through a face: pick the cell on the inner side
                let face = if dir[k] > 0.0 { lo[k] } else { hi[k] };
                if ((start[k] - face) / h).abs() < 1e-9 {
                    c = if dir[k] > 0.0 { 0 } else { self.dims[k] as i64 - 1 };
                }
            }
            cell[k] = c.clamp(0, self.dims[k] as i64 - 1);
            if dir[k] > 0.0 {
                step[k] = 1;
                let next = self.origin[k] + (cell[k] + 1) as f64 * h;
                t_max[k] = (next - x[k]) / dir[k];
                t_delta[k] = h / dir[k];
            } else if dir[k] < 0.0 {
                step[k] = -1;
                let next = self.origin[k] + cell[k] as f64 * h;
                t_max[k] = (next - x[k]) / dir[k];
                t_delta[k] = -h / dir[k];
            }
        }
        let mut out: Intervals = Vec::new();
        let mut t = t0;
        loop {
            let (axis, t_next) = (0..self.dim)
                .map(|k| (k, t_max[k]))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            let t_end = t_next.min(t1);
            if t_end > t
                && self.is_occupied([cell[0] as usize, cell[1] as usize, cell[2] as usize])
            {
                match out.last_mut() {
                    Some(last) if (last.1 - t).abs() <= 1e-12 * (1.0 + t.abs()) => last.1 = t_end,
                    _ => out.push((t, t_end)),
                }
            }
            if t_next >= t1 {
                break;
            }
            t = t_next;
            cell[axis] += step[axis];
            if cell[axis] < 0 || cell[axis] >= self.dims[axis] as i64 {
                break;
            }
            t_max[axis] += t_delta[axis];
        }
        out
    }

    pub fn header(&self, data_file: &str) -> VoxelHeader {
        VoxelHeader {
            dim: self.dim,
            origin: self.origin.coords(self.dim).to_vec(),
            spacing: self.spacing,
            dims: self.dims().to_vec(),
            data_file: data_file.to_string(),
        }
    }

    /// Writes the JSON header and the occupancy bytes next to it.
    pub fn save(&self, header_path: &Path, data_file: &str) -> Result<()> {
        let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
        fs::write(dir.join(data_file), self.occ.iter().map(|&b| b as u8).collect::<Vec<u8>>())?;
        fs::write(header_path, serde_json::to_string_pretty(&self.header(data_file))?)?;
        Ok(())
    }

    pub fn load(header_path: &Path) -> Result<Self> {
        let header: VoxelHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
        let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
        let bytes = fs::read(dir.join(&header.data_file))?;
        if bytes.iter().any(|&b| b > 1) {
            return Err(Error::invalid("voxel data must contain only 0/1 bytes"));
        }
        if header.origin.len() != header.dim {
            return Err(Error::invalid("voxel origin length must equal dim"));
        }
        VoxelMask::new(
            header.dim,
            Point::from_slice(&header.origin),
            header.spacing,
            &header.dims,
            bytes.into_iter().map(|b| b == 1).collect(),
        )
    }
}

/// Nearest-site feature transform (Felzenszwalb–Huttenlocher, one separable
/// pass per axis). Returns, for every cell, the flat index of the nearest cell
/// with `site == true` in the Euclidean cell-centre metric.
fn feature_transform(dims: &[usize; 3], dim: usize, site: &[bool]) -> Vec<u32> {
    let n = dims[0] * dims[1] * dims[2];
    let mut dist = vec![f64::INFINITY; n];
    let mut near = vec![u32::MAX; n];
    for i in 0..n {
        if site[i] {
            dist[i] = 0.0;
            near[i] = i as u32;
        }
    }
    let strides = [dims[1] * dims[2], dims[2], 1];
    for axis in 0..dim {
        let len = dims[axis];
        let stride = strides[axis];
        let mut f = vec![0.0; len];
        let mut lab = vec![0u32; len];
        for base in 0..n {
            // visit each line once, from its first cell
            let coord = (base / stride) % len;
            if coord != 0 {
                continue;
            }
            for q in 0..len {
                f[q] = dist[base + q * stride];
                lab[q] = near[base + q * stride];
            }
            let (d, l) = lower_envelope(&f, &lab);
            for q in 0..len {
                dist[base + q * stride] = d[q];
                near[base + q * stride] = l[q];
            }
        }
    }
    near
}

fn lower_envelope(f: &[f64], lab: &[u32]) -> (Vec<f64>, Vec<u32>) {
    let n = f.len();
    let mut d = vec![f64::INFINITY; n];
    let mut l = vec![u32::MAX; n];
    let finite: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if finite.is_empty() {
        return (d, l);
    }
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = finite[0];
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for &q in &finite[1..] {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: q dominates everywhere
                v[0] = q;
                z[1] = f64::INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
            }
            break;
        }
    }
    let mut j = 0;
    for q in 0..n {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
        l[q] = lab[p];
    }
    (d, l)
}

/// Serializable description of a domain, as accepted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainSpec {
    Ball(BallSpec),
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Union(Vec<BallSpec>),
    /// Path of a voxel header file.
    Voxel(String),
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        match self {
            DomainSpec::Ball(b) => Domain::ball(b.center.len(), Point::from_slice(&b.center), b.radius),
            DomainSpec::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::invalid("box corners must have equal length"));
                }
                Domain::cuboid(lo.len(), Point::from_slice(lo), Point::from_slice(hi))
            }
            DomainSpec::Union(balls) => {
                let dim = balls.first().map(|b| b.center.len()).unwrap_or(0);
                if balls.iter().any(|b| b.center.len() != dim) {
                    return Err(Error::invalid("union members must share a dimension"));
                }
                Domain::union_of_balls(
                    dim,
                    balls.iter().map(|b| (Point::from_slice(&b.center), b.radius)).collect(),
                )
            }
            DomainSpec::Voxel(path) => Ok(Domain::voxel(VoxelMask::load(Path::new(path))?)),
        }
    }
}
