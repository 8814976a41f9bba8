//! Continuous-state branching numerics.
//!
//! A mechanism `φ(z) = b z + c z² + Σ w_i (e^{-z y_i} - 1 + z y_i)` determines
//! the Laplace exponent through `dv/dt = -φ(v)`, `v_0 = μ`, and
//! `E exp(-μ Y_t^x) = exp(-x v_t(μ))`.

use crate::error::{Error, Result};
use crate::galton_watson::Criticality;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingMechanism {
    b: f64,
    c: f64,
    atoms: Vec<Atom>,
}

impl BranchingMechanism {
    pub fn new(b: f64, c: f64, atoms: Vec<Atom>) -> Result<Self> {
        if !b.is_finite() {
            return Err(Error::domain("b", format!("must be finite, got {b}")));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::domain("c", format!("must be finite and ≥ 0, got {c}")));
        }
        for a in &atoms {
            if !(a.weight > 0.0 && a.size > 0.0) || !a.weight.is_finite() || !a.size.is_finite() {
                return Err(Error::domain(
                    "atoms",
                    format!("weights and jump sizes must be positive, got {}:{}", a.weight, a.size),
                ));
            }
        }
        Ok(BranchingMechanism { b, c, atoms })
    }

    /// `φ(z) = c z²`.
    pub fn quadratic(c: f64) -> Result<Self> {
        Self::new(0.0, c, Vec::new())
    }

    /// Parses `w:y,w:y,...`; an empty string means no atoms.
    pub fn parse_atoms(s: &str) -> Result<Vec<Atom>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                let (w, y) = t
                    .split_once(':')
                    .ok_or_else(|| Error::config("atoms", format!("`{t}`: expected w:y")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::config("atoms", format!("`{t}`: {e}")))
                };
                Ok(Atom {
                    weight: parse(w)?,
                    size: parse(y)?,
                })
            })
            .collect()
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_quadratic(&self) -> bool {
        self.b == 0.0 && self.atoms.is_empty()
    }

    /// Classified by the direction of the mean `x e^{-bt}`: `b < 0` grows.
    pub fn criticality(&self) -> Criticality {
        if self.b < 0.0 {
            Criticality::Supercritical
        } else if self.b > 0.0 {
            Criticality::Subcritical
        } else {
            Criticality::Critical
        }
    }

    pub fn phi(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(Error::domain("z", format!("φ is defined for z ≥ 0, got {z}")));
        }
        Ok(self.phi_raw(z))
    }

    #[inline]
    fn phi_raw(&self, z: f64) -> f64 {
        let jumps: f64 = self
            .atoms
            .iter()
            .map(|a| a.weight * ((-z * a.size).exp_m1() + z * a.size))
            .sum();
        self.b * z + self.c * z * z + jumps
    }
}

pub fn phi_eval(mech: &BranchingMechanism, z: f64) -> Result<f64> {
    mech.phi(z)
}

fn check_v_args(mu: f64, t: f64, tol: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::domain("laplace_mu", format!("must be positive, got {mu}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain("t", format!("must be ≥ 0, got {t}")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tol", format!("must be positive, got {tol}")));
    }
    Ok(())
}

/// Laplace exponent `v_t(μ)`. Purely quadratic mechanisms use the closed
/// form `μ / (1 + c t μ)`; everything else goes through [`integrate_v`].
pub fn solve_v(mech: &BranchingMechanism, laplace_mu: f64, t: f64, tol: f64) -> Result<f64> {
    check_v_args(laplace_mu, t, tol)?;
    if t == 0.0 {
        return Ok(laplace_mu);
    }
    if mech.is_quadratic() {
        return Ok(laplace_mu / (1.0 + mech.c * t * laplace_mu));
    }
    integrate_v(mech, laplace_mu, t, tol)
}

// Dormand–Prince 5(4) tableau. The ODE is autonomous, so the node
// coefficients c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `dv/dt = -φ(v)` from `v_0 = μ` with adaptive Dormand–Prince
/// steps. The per-step error estimate is held below `tol/100` in a mixed
/// absolute/relative norm; the result is clamped to `[0, ∞)`.
pub fn integrate_v(mech: &BranchingMechanism, laplace_mu: f64, t_end: f64, tol: f64) -> Result<f64> {
    check_v_args(laplace_mu, t_end, tol)?;
    let f = |v: f64| -mech.phi_raw(v);
    let local_tol = tol * 1e-2;

    let mut t = 0.0;
    let mut v = laplace_mu;
    let mut k1 = f(v);
    let mut h = if k1 == 0.0 {
        t_end
    } else {
        (0.01 * (local_tol + local_tol * v.abs()) / k1.abs()).powf(0.2).min(t_end)
    };
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        let k2 = f(v + h * A21 * k1);
        let k3 = f(v + h * (A31 * k1 + A32 * k2));
        let k4 = f(v + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(v + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        let k6 = f(v + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        let v_new = v + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
        let k7 = f(v_new);
        let err_abs = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let scale = local_tol * (1.0 + v.abs().max(v_new.abs()));
        let err = (err_abs / scale).abs();

        if err <= 1.0 && v_new.is_finite() {
            t += h;
            if v_new <= 0.0 {
                return Ok(0.0);
            }
            v = v_new;
            k1 = k7;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= if v_new.is_finite() { factor } else { 0.2 };
        if h < 1e-15 * t_end.max(1.0) && t < t_end {
            return Err(Error::Numeric {
                t,
                v,
                reason: "integrator step size underflow".into(),
            });
        }
    }
    Ok(v.max(0.0))
}

/// `E exp(-μ Y_t^x) = exp(-x v_t(μ))`.
pub fn laplace_functional(
    mech: &BranchingMechanism,
    x: f64,
    laplace_mu: f64,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain("x", format!("must be ≥ 0, got {x}")));
    }
    Ok((-x * solve_v(mech, laplace_mu, t, tol)?).exp())
}

/// `E Y_t^x = x e^{-bt}`.
pub fn mean_csbp(mech: &BranchingMechanism, x: f64, t: f64) -> Result<f64> {
    if !(x >= 0.0) || !(t >= 0.0) {
        return Err(Error::domain("x/t", format!("need x ≥ 0 and t ≥ 0, got {x}, {t}")));
    }
    Ok(x * (-mech.b * t).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FellerPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl FellerPath {
    /// Value at a grid time, if `t` is (within 1e-9) one of the path's times.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let i = self.times.partition_point(|s| *s < t - 1e-9);
        self.times
            .get(i)
            .filter(|s| (**s - t).abs() <= 1e-9)
            .map(|_| self.values[i])
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("paths are never empty")
    }
}

/// Euler–Maruyama path of `dY = -b Y dt + sqrt(2 c Y) dB` with full
/// truncation at zero. Zero is absorbing.
pub fn simulate_feller_path(
    c: f64,
    b: f64,
    x0: f64,
    t_end: f64,
    dt: f64,
    stream: &mut RngStream,
) -> Result<FellerPath> {
    if !(c > 0.0) || !b.is_finite() || !(x0 >= 0.0) || !(dt > 0.0) || !(dt <= t_end) {
        return Err(Error::domain(
            "feller",
            format!("need c > 0, x0 ≥ 0, 0 < dt ≤ t_end; got c={c}, x0={x0}, dt={dt}, t_end={t_end}"),
        ));
    }
    let ratio = t_end / dt;
    let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round() as usize
    } else {
        ratio.ceil() as usize
    };
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    times.push(0.0);
    values.push(x0);
    let mut y = x0;
    for i in 1..=steps {
        let t = if i == steps { t_end } else { i as f64 * dt };
        let h = t - times[i - 1];
        if y > 0.0 {
            let g = stream.standard_normal();
            y = (y - b * y * h + (2.0 * c * y * h).sqrt() * g).max(0.0);
        }
        times.push(t);
        values.push(y);
    }
    Ok(FellerPath { times, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_stream;
    use std::f64::consts::LN_2;

    fn rk4_oracle(mech: &BranchingMechanism, mu: f64, t: f64, dt: f64) -> f64 {
        let f = |v: f64| -mech.phi(v.max(0.0)).unwrap();
        let n = (t / dt).round() as usize;
        let mut v = mu;
        for _ in 0..n {
            let k1 = f(v);
            let k2 = f(v + 0.5 * dt * k1);
            let k3 = f(v + 0.5 * dt * k2);
            let k4 = f(v + dt * k3);
            v += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        v
    }

    #[test]
    fn phi_examples() {
        let m = BranchingMechanism::new(1.0, 2.0, vec![]).unwrap();
        assert_eq!(m.phi(0.0).unwrap(), 0.0);
        assert_eq!(m.phi(3.0).unwrap(), 21.0);
        let j = BranchingMechanism::new(0.0, 0.0, vec![Atom { weight: 1.0, size: 1.0 }]).unwrap();
        assert!((j.phi(1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(j.phi(0.0).unwrap(), 0.0);
        assert!(m.phi(-1.0).is_err());
    }

    #[test]
    fn mechanism_validation_and_parsing() {
        assert!(BranchingMechanism::new(0.0, -1.0, vec![]).is_err());
        assert!(BranchingMechanism::new(0.0, 1.0, vec![Atom { weight: 0.0, size: 1.0 }]).is_err());
        let atoms = BranchingMechanism::parse_atoms("1:2, 0.5:3").unwrap();
        assert_eq!(atoms, vec![Atom { weight: 1.0, size: 2.0 }, Atom { weight: 0.5, size: 3.0 }]);
        assert!(BranchingMechanism::parse_atoms("").unwrap().is_empty());
        assert!(BranchingMechanism::parse_atoms("1-2").is_err());
    }

    #[test]
    fn criticality_follows_mean_direction() {
        let mk = |b| BranchingMechanism::new(b, 1.0, vec![]).unwrap();
        assert_eq!(mk(0.0).criticality(), Criticality::Critical);
        assert_eq!(mk(0.5).criticality(), Criticality::Subcritical);
        assert_eq!(mk(-0.5).criticality(), Criticality::Supercritical);
    }

    #[test]
    fn v_at_time_zero_is_mu() {
        let m = BranchingMechanism::new(0.3, 1.0, vec![Atom { weight: 1.0, size: 1.0 }]).unwrap();
        assert_eq!(solve_v(&m, 2.5, 0.0, 1e-8).unwrap(), 2.5);
    }

    #[test]
    fn quadratic_closed_form_and_rk4_oracle() {
        let m = BranchingMechanism::quadratic(1.0).unwrap();
        assert_eq!(solve_v(&m, 1.0, 1.0, 1e-8).unwrap(), 0.5);
        let oracle = rk4_oracle(&m, 1.0, 1.0, 1e-4);
        assert!((oracle - 0.5).abs() < 1e-8);
        assert!((integrate_v(&m, 1.0, 1.0, 1e-8).unwrap() - 0.5).abs() <= 1e-8);
    }

    #[test]
    fn linear_mechanism_decays_exponentially() {
        let m = BranchingMechanism::new(LN_2, 0.0, vec![]).unwrap();
        assert!((solve_v(&m, 1.0, 1.0, 1e-10).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn jump_mechanism_matches_rk4() {
        let m = BranchingMechanism::new(
            -0.2,
            0.5,
            vec![Atom { weight: 2.0, size: 0.5 }, Atom { weight: 0.3, size: 4.0 }],
        )
        .unwrap();
        for (mu, t) in [(0.5, 1.0), (3.0, 2.0), (10.0, 0.5)] {
            let a = solve_v(&m, mu, t, 1e-9).unwrap();
            let b = rk4_oracle(&m, mu, t, 1e-4);
            assert!((a - b).abs() < 1e-8, "mu={mu} t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn v_monotone_in_t_for_nonnegative_phi() {
        let m = BranchingMechanism::new(0.3, 1.0, vec![Atom { weight: 1.0, size: 2.0 }]).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let v = solve_v(&m, 4.0, i as f64 * 0.2, 1e-9).unwrap();
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn laplace_and_mean_examples() {
        let m = BranchingMechanism::quadratic(1.0).unwrap();
        assert_eq!(laplace_functional(&m, 0.0, 1.0, 1.0, 1e-8).unwrap(), 1.0);
        let l = laplace_functional(&m, 2.0, 1.0, 1.0, 1e-8).unwrap();
        assert!((l - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(mean_csbp(&m, 3.0, 7.0).unwrap(), 3.0);
        assert_eq!(mean_csbp(&m, 0.0, 7.0).unwrap(), 0.0);
        let lin = BranchingMechanism::new(LN_2, 1.0, vec![]).unwrap();
        assert!((mean_csbp(&lin, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_v_arguments() {
        let m = BranchingMechanism::quadratic(1.0).unwrap();
        assert!(solve_v(&m, 0.0, 1.0, 1e-8).is_err());
        assert!(solve_v(&m, 1.0, -1.0, 1e-8).is_err());
        assert!(solve_v(&m, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn feller_path_from_zero_stays_zero() {
        let mut s = make_stream(0, 0);
        let p = simulate_feller_path(1.0, 0.0, 0.0, 1.0, 1e-2, &mut s).unwrap();
        assert_eq!(p.times.len(), 101);
        assert!(p.values.iter().all(|v| *v == 0.0));
        assert_eq!(p.value_at(0.5), Some(0.0));
        assert_eq!(p.value_at(0.505), None);
    }

    #[test]
    fn feller_path_is_absorbed() {
        let mut s = make_stream(1, 0);
        for _ in 0..200 {
            let p = simulate_feller_path(1.0, 0.5, 0.2, 2.0, 1e-2, &mut s).unwrap();
            assert!(p.values.iter().all(|v| *v >= 0.0));
            if let Some(i) = p.values.iter().position(|v| *v == 0.0) {
                assert!(p.values[i..].iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn feller_path_grid_handles_uneven_end() {
        let mut s = make_stream(1, 0);
        let p = simulate_feller_path(1.0, 0.0, 1.0, 1.0, 0.3, &mut s).unwrap();
        assert_eq!(p.times, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        assert!(simulate_feller_path(1.0, 0.0, 1.0, 1.0, 2.0, &mut s).is_err());
        assert!(simulate_feller_path(0.0, 0.0, 1.0, 1.0, 0.1, &mut s).is_err());
    }
}
