//! Finite atomic measures on R^d and the test functions integrated against them.

use crate::error::{Error, Result};
use crate::space::{Point, Rect};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassAtom {
    pub position: Point,
    pub mass: f64,
}

/// `Σ mass_i δ_{position_i}`; every mass is positive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<MassAtom>,
}

impl DiscreteMeasure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_atoms(atoms: Vec<MassAtom>) -> Result<Self> {
        if let Some(a) = atoms.iter().find(|a| !(a.mass > 0.0) || !a.mass.is_finite()) {
            return Err(Error::Validation(format!("atom mass must be positive, got {}", a.mass)));
        }
        Ok(DiscreteMeasure { atoms })
    }

    pub(crate) fn push_unchecked(&mut self, position: Point, mass: f64) {
        self.atoms.push(MassAtom { position, mass });
    }

    pub fn atoms(&self) -> &[MassAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `⟨X, 1⟩`, summed in atom order.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }
}

/// Supported integrands for `⟨X, f⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    One,
    /// Indicator of `{x : x[axis] > threshold}` (or `<` when `upper` is false).
    HalfPlane { axis: usize, threshold: f64, upper: bool },
    /// Indicator of a closed-open rectangle in the first two coordinates.
    Rectangle(Rect),
    /// `exp(-|x - center|² / (2 h²))`.
    GaussianBump { center: Point, bandwidth: f64 },
}

impl TestFunction {
    /// Parses `one`, `half:x>0`, `half:y<1.5`, `rect:x0:y0:x1:y1`,
    /// `gauss:cx:cy:h`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::config("test_function", format!("`{s}`: {why}"));
        let s = s.trim();
        if s == "one" || s == "1" {
            return Ok(TestFunction::One);
        }
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("unknown test function"))?;
        let nums = |r: &str| -> Result<Vec<f64>> {
            r.split(':')
                .map(|t| t.trim().parse::<f64>().map_err(|e| bad(&e.to_string())))
                .collect()
        };
        match kind {
            "half" => {
                let (axis_ch, upper, thr) = if let Some((a, t)) = rest.split_once('>') {
                    (a, true, t)
                } else if let Some((a, t)) = rest.split_once('<') {
                    (a, false, t)
                } else {
                    return Err(bad("expected axis>value or axis<value"));
                };
                let axis = match axis_ch.trim() {
                    "x" => 0,
                    "y" => 1,
                    "z" => 2,
                    _ => return Err(bad("axis must be x, y or z")),
                };
                let threshold = thr.trim().parse().map_err(|e: std::num::ParseFloatError| bad(&e.to_string()))?;
                Ok(TestFunction::HalfPlane { axis, threshold, upper })
            }
            "rect" => {
                let v = nums(rest)?;
                if v.len() != 4 {
                    return Err(bad("expected rect:x0:y0:x1:y1"));
                }
                Ok(TestFunction::Rectangle(Rect::new(v[0], v[1], v[2], v[3])?))
            }
            "gauss" => {
                let v = nums(rest)?;
                if v.len() != 3 || !(v[2] > 0.0) {
                    return Err(bad("expected gauss:cx:cy:h with h > 0"));
                }
                Ok(TestFunction::GaussianBump {
                    center: [v[0], v[1], 0.0],
                    bandwidth: v[2],
                })
            }
            _ => Err(bad("unknown test function")),
        }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        match *self {
            TestFunction::One => 1.0,
            TestFunction::HalfPlane { axis, threshold, upper } => {
                let inside = if upper { p[axis] > threshold } else { p[axis] < threshold };
                if inside { 1.0 } else { 0.0 }
            }
            TestFunction::Rectangle(r) => {
                if r.contains(p) { 1.0 } else { 0.0 }
            }
            TestFunction::GaussianBump { center, bandwidth } => {
                let d2: f64 = (0..3).map(|i| (p[i] - center[i]).powi(2)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }
}

/// `⟨X, f⟩ = Σ mass_i f(position_i)`.
pub fn integrate_test_function(measure: &DiscreteMeasure, f: &TestFunction) -> f64 {
    match f {
        TestFunction::One => measure.total_mass(),
        _ => measure.atoms.iter().map(|a| a.mass * f.eval(&a.position)).sum(),
    }
}
