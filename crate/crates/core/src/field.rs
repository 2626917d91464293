//! Source functions and lattice-valued results.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::geometry::Point;

/// A function on `Ω̄`, evaluable pointwise.
pub trait ScalarField: Sync + Send {
    fn eval(&self, x: &Point) -> f64;

    /// `Some(c)` if the field is the constant `c`; lets solvers skip work.
    fn constant_value(&self) -> Option<f64> {
        None
    }
}

impl<F> ScalarField for F
where
    F: Fn(&Point) -> f64 + Sync + Send,
{
    fn eval(&self, x: &Point) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    /// Exponent per coordinate; missing entries are zero.
    pub powers: Vec<u32>,
}

/// Built-in source functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FieldSpec {
    Const { value: f64 },
    Polynomial { terms: Vec<Monomial> },
    /// `height · exp(1 − 1/(1 − |x−c|²/R²))` inside `B_R(c)`, zero outside.
    RadialBump { center: Vec<f64>, radius: f64, height: f64 },
}

impl FieldSpec {
    pub fn constant(value: f64) -> Self {
        FieldSpec::Const { value }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FieldSpec::Const { value } if !value.is_finite() => Err(Error::invalid("constant must be finite")),
            FieldSpec::Polynomial { terms } if terms.iter().any(|t| t.powers.len() > 3 || !t.coeff.is_finite()) => {
                Err(Error::invalid("polynomial terms need finite coefficients and at most 3 powers"))
            }
            FieldSpec::RadialBump { radius, center, .. } if !(*radius > 0.0) || center.len() > 3 => {
                Err(Error::invalid("bump radius must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// A Hölder exponent valid on bounded sets.
    pub fn holder_exponent(&self) -> f64 {
        1.0
    }
}

impl ScalarField for FieldSpec {
    fn eval(&self, x: &Point) -> f64 {
        match self {
            FieldSpec::Const { value } => *value,
            FieldSpec::Polynomial { terms } => terms
                .iter()
                .map(|t| {
                    t.powers
                        .iter()
                        .enumerate()
                        .fold(t.coeff, |acc, (k, &p)| acc * x[k].powi(p as i32))
                })
                .sum(),
            FieldSpec::RadialBump { center, radius, height } => {
                let q = (*x - Point::from_slice(center)).norm2() / (radius * radius);
                if q < 1.0 {
                    height * (1.0 - 1.0 / (1.0 - q)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn constant_value(&self) -> Option<f64> {
        match self {
            FieldSpec::Const { value } => Some(*value),
            _ => None,
        }
    }
}

/// Largest observed ratio `|f(x)−f(y)| / (C|x−y|^α)` over random pairs of
/// points of `dom`; an error is returned when it exceeds 1.
pub fn holder_spot_check(
    f: &dyn ScalarField,
    dom: &Domain,
    alpha: f64,
    c: f64,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let (lo, hi) = dom.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| loop {
        let mut p = Point::ORIGIN;
        for k in 0..dom.dim() {
            p[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
        }
        if dom.contains(&p) {
            return p;
        }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = sample(&mut rng);
        let y = sample(&mut rng);
        let d = x.dist(&y);
        if d == 0.0 {
            continue;
        }
        let ratio = (f.eval(&x) - f.eval(&y)).abs() / (c * d.powf(alpha));
        if ratio > 1.0 {
            return Err(Error::invalid(format!(
                "declared Hölder bound violated between {x:?} and {y:?} (ratio {ratio})"
            )));
        }
        worst = worst.max(ratio);
    }
    Ok(worst)
}

/// Errors on the first point where `f < 0`.
pub fn check_nonnegative(f: &dyn ScalarField, points: &[Point]) -> Result<()> {
    for p in points {
        let v = f.eval(p);
        if v < 0.0 {
            return Err(Error::NegativeSource { at: *p, value: v });
        }
    }
    Ok(())
}

/// Values of a scalar quantity on a point lattice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridField {
    pub dim: usize,
    pub spacing: f64,
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(dim: usize, spacing: f64, points: Vec<Point>, values: Vec<f64>) -> Self {
        assert_eq!(points.len(), values.len());
        GridField {
            dim,
            spacing,
            points,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest value and its location; ties resolve to the first point.
    pub fn argmin(&self) -> Option<(Point, f64)> {
        self.values
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                Some((_, b)) if b <= v => best,
                _ => Some((i, v)),
            })
            .map(|(i, v)| (self.points[i], v))
    }

    pub fn argmax(&self) -> Option<(Point, f64)> {
        self.values
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((i, v)),
            })
            .map(|(i, v)| (self.points[i], v))
    }

    /// CSV with header `x1,..,xN,value`; floats use the shortest
    /// representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        for (p, v) in self.points.iter().zip(&self.values) {
            for k in 0..self.dim {
                write!(w, "{},", p[k])?;
            }
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_evaluate() {
        let p = FieldSpec::Polynomial {
            terms: vec![
                Monomial { coeff: 1.0, powers: vec![2] },
                Monomial { coeff: 1.0, powers: vec![0, 2] },
            ],
        };
        assert_eq!(p.eval(&Point::new2(1.0, 2.0)), 5.0);
        let b = FieldSpec::RadialBump {
            center: vec![0.0, 0.0],
            radius: 1.0,
            height: 2.0,
        };
        assert_eq!(b.eval(&Point::ORIGIN), 2.0);
        assert_eq!(b.eval(&Point::new2(1.0, 0.0)), 0.0);
        assert_eq!(FieldSpec::constant(3.0).constant_value(), Some(3.0));
    }

    #[test]
    fn spec_json_roundtrip() {
        let f = FieldSpec::RadialBump {
            center: vec![0.1, 0.2],
            radius: 0.5,
            height: 1.0,
        };
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<FieldSpec>(&s).unwrap(), f);
    }

    #[test]
    fn csv_roundtrips_floats() {
        let g = GridField::new(
            2,
            0.1,
            vec![Point::new2(0.1, -1e-300), Point::new2(1.0 / 3.0, 2.0)],
            vec![std::f64::consts::PI, -0.0],
        );
        let csv = g.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x1,x2,value"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|t| t.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1, -1e-300, std::f64::consts::PI]);
        assert!(!csv.contains('\r'));
        assert_eq!(g.argmin().unwrap().1, -0.0);
    }

    #[test]
    fn holder_check_rejects_bad_constant() {
        let dom = Domain::centered_ball(2, 1.0).unwrap();
        let f = |x: &Point| x[0];
        assert!(holder_spot_check(&f, &dom, 1.0, 1.0, 200, 3).is_ok());
        assert!(holder_spot_check(&f, &dom, 1.0, 0.1, 200, 3).is_err());
    }
}
