//! Points in `R^2` / `R^3` and a few helpers on them.
//!
//! A [`Point`] always stores three coordinates; planar problems leave the third
//! at zero, so norms and dot products need no dimension argument.

use std::f64::consts::PI;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub const ORIGIN: Point = Point([0.0; 3]);

    pub fn new2(x: f64, y: f64) -> Self {
        Point([x, y, 0.0])
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Point([x, y, z])
    }

    /// Builds a point from up to three coordinates.
    pub fn from_slice(c: &[f64]) -> Self {
        assert!(c.len() <= 3, "at most three coordinates supported");
        let mut p = [0.0; 3];
        p[..c.len()].copy_from_slice(c);
        Point(p)
    }

    pub fn coords(&self, dim: usize) -> &[f64] {
        &self.0[..dim]
    }

    pub fn dot(&self, o: &Point) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn dist(&self, o: &Point) -> f64 {
        (*self - *o).norm()
    }

    pub fn axis(dim: usize, k: usize) -> Point {
        debug_assert!(k < dim);
        let mut p = [0.0; 3];
        p[k] = 1.0;
        Point(p)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point([self.0[0] * k, self.0[1] * k, self.0[2] * k])
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        self * -1.0
    }
}

impl Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Point {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Uniformly distributed direction on `S^{dim-1}`, consuming exactly two
/// uniforms so that runs at different parameters stay coupled.
pub fn random_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Point {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    match dim {
        2 => {
            let a = 2.0 * PI * u;
            Point::new2(a.cos(), a.sin())
        }
        3 => {
            let z = 2.0 * v - 1.0;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let a = 2.0 * PI * u;
            Point::new3(r * a.cos(), r * a.sin(), z)
        }
        _ => panic!("directions only supported for dimension 2 or 3"),
    }
}

/// Direction on the unit circle at angle `a`.
pub fn polar2(a: f64) -> Point {
    Point::new2(a.cos(), a.sin())
}

/// Direction on the unit sphere with azimuth `phi` and height `z = cos θ`.
pub fn spherical3(phi: f64, z: f64) -> Point {
    let r = (1.0 - z * z).max(0.0).sqrt();
    Point::new3(r * phi.cos(), r * phi.sin(), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn arithmetic() {
        let a = Point::new2(1.0, 2.0);
        let b = Point::new2(0.5, -1.0);
        assert_eq!(a + b, Point::new2(1.5, 1.0));
        assert_eq!(a - b, Point::new2(0.5, 3.0));
        assert_eq!(a * 2.0, Point::new2(2.0, 4.0));
        assert!((Point::new3(1.0, 2.0, 2.0).norm() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn directions_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in [2, 3] {
            for _ in 0..100 {
                let d = random_direction(dim, &mut rng);
                assert!((d.norm() - 1.0).abs() < 1e-12);
                if dim == 2 {
                    assert_eq!(d[2], 0.0);
                }
            }
        }
    }
}
