//! Discrete-generation branching: offspring laws, count trajectories,
//! genealogy trees and extinction probabilities.

use num_rational::Ratio;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Largest population a trajectory may hold (2^63).
pub const MAX_POPULATION: u128 = 1 << 63;

/// Trees are materialized node by node; beyond this size they are refused.
pub const MAX_TREE_GENERATION: u64 = 10_000_000;

/// Populations at or above this size are treated as having escaped
/// extinction when running to absorption.
pub const ESCAPE_POPULATION: u64 = 1 << 60;

/// Populations at or below this size draw offspring individually.
const INDIVIDUAL_DRAW_LIMIT: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

impl std::fmt::Display for Criticality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criticality::Subcritical => "subcritical",
            Criticality::Critical => "critical",
            Criticality::Supercritical => "supercritical",
        })
    }
}

/// Trichotomy on the mean offspring number. Floating-point means within
/// 1e-12 of one are critical.
pub fn classify_criticality(zeta: f64) -> Criticality {
    if (zeta - 1.0).abs() < 1e-12 {
        Criticality::Critical
    } else if zeta < 1.0 {
        Criticality::Subcritical
    } else {
        Criticality::Supercritical
    }
}

/// Finite-support offspring distribution `P(Z = k) = probabilities[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
    mean: f64,
    exact_mean: Option<Ratio<i128>>,
}

impl OffspringLaw {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::domain("offspring", "empty offspring law"));
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::domain("offspring", format!("probability {p} is not in [0, 1]")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain("offspring", format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self::build(probabilities, None))
    }

    /// Law given as exact rationals; the mean and criticality are exact.
    pub fn from_rationals(probabilities: &[Ratio<i128>]) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::domain("offspring", "empty offspring law"));
        }
        let zero = Ratio::from_integer(0);
        if let Some(p) = probabilities.iter().find(|p| **p < zero) {
            return Err(Error::domain("offspring", format!("negative probability {p}")));
        }
        let total: Ratio<i128> = probabilities.iter().copied().sum();
        if total != Ratio::from_integer(1) {
            return Err(Error::domain("offspring", format!("probabilities sum to {total}, not 1")));
        }
        let exact_mean = probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| p * Ratio::from_integer(k as i128))
            .sum();
        let floats = probabilities.iter().map(ratio_to_f64).collect();
        Ok(Self::build(floats, Some(exact_mean)))
    }

    /// Parses a comma-separated list `p0,p1,...`. Entries written as
    /// integers, fractions `a/b` or plain decimals are read exactly.
    pub fn parse(s: &str) -> Result<Self> {
        let items: Vec<&str> = s.split(',').map(str::trim).collect();
        let exact: Option<Vec<Ratio<i128>>> = items.iter().map(|t| parse_rational(t)).collect();
        match exact {
            Some(r) => Self::from_rationals(&r),
            None => {
                let floats = items
                    .iter()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|e| Error::config("offspring", format!("`{t}`: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::new(floats)
            }
        }
    }

    fn build(probabilities: Vec<f64>, exact_mean: Option<Ratio<i128>>) -> Self {
        let mean = match exact_mean {
            Some(r) => ratio_to_f64(&r),
            None => probabilities
                .iter()
                .enumerate()
                .map(|(k, p)| k as f64 * p)
                .sum(),
        };
        let mut acc = 0.0;
        let cumulative = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        OffspringLaw {
            probabilities,
            cumulative,
            mean,
            exact_mean,
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Mean offspring number ζ.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn exact_mean(&self) -> Option<Ratio<i128>> {
        self.exact_mean
    }

    pub fn max_offspring(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn criticality(&self) -> Criticality {
        match self.exact_mean {
            Some(m) => match m.cmp(&Ratio::from_integer(1)) {
                std::cmp::Ordering::Less => Criticality::Subcritical,
                std::cmp::Ordering::Equal => Criticality::Critical,
                std::cmp::Ordering::Greater => Criticality::Supercritical,
            },
            None => classify_criticality(self.mean),
        }
    }

    /// `g(s) = Σ p_k s^k`, by Horner's rule.
    pub fn generating_function(&self, s: f64) -> f64 {
        self.probabilities.iter().rev().fold(0.0, |acc, p| acc * s + p)
    }

    fn draw_one(&self, stream: &mut RngStream) -> u64 {
        let u = stream.uniform();
        let k = self.cumulative.partition_point(|c| *c <= u);
        // `u` can exceed the last cumulative value by rounding.
        k.min(self.max_offspring()) as u64
    }

    /// Total offspring of `n` independent individuals.
    fn draw_total(&self, n: u64, stream: &mut RngStream) -> u128 {
        if n <= INDIVIDUAL_DRAW_LIMIT {
            return (0..n).map(|_| self.draw_one(stream) as u128).sum();
        }
        // Multinomial split of the n individuals across offspring classes.
        let mut remaining = n;
        let mut remaining_p = 1.0;
        let mut total: u128 = 0;
        for (k, p) in self.probabilities.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let n_k = if k == self.max_offspring() || *p >= remaining_p {
                remaining
            } else if *p <= 0.0 {
                0
            } else {
                let q = (p / remaining_p).clamp(0.0, 1.0);
                Binomial::new(remaining, q)
                    .expect("binomial parameters are in range")
                    .sample(stream)
            };
            total += k as u128 * n_k as u128;
            remaining -= n_k;
            remaining_p -= p;
        }
        total
    }
}

fn ratio_to_f64(r: &Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn parse_rational(s: &str) -> Option<Ratio<i128>> {
    if let Some((a, b)) = s.split_once('/') {
        let num: i128 = a.trim().parse().ok()?;
        let den: i128 = b.trim().parse().ok()?;
        return (den != 0).then(|| Ratio::new(num, den));
    }
    match s.split_once('.') {
        None => s.parse::<i128>().ok().map(Ratio::from_integer),
        Some((int, frac)) => {
            if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) || int.starts_with('-') {
                return None;
            }
            let int: i128 = if int.is_empty() { 0 } else { int.parse().ok()? };
            let scale = 10i128.pow(frac.len() as u32);
            let frac: i128 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
            Some(Ratio::new(int * scale + frac, scale))
        }
    }
}

/// Population per generation, `counts[m] = N_m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GwTrajectory {
    pub counts: Vec<u64>,
}

impl GwTrajectory {
    pub fn is_absorbed(&self) -> bool {
        match self.counts.iter().position(|&c| c == 0) {
            Some(first_zero) => self.counts[first_zero..].iter().all(|&c| c == 0),
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenealogyNode {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub generation: u32,
    /// `None` for the last simulated generation, whose offspring were not drawn.
    pub offspring_count: Option<u32>,
}

/// Nodes are stored in generation order, and within a generation in the
/// order of their parents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenealogyTree {
    pub nodes: Vec<GenealogyNode>,
}

impl GenealogyTree {
    pub fn roots(&self) -> impl Iterator<Item = &GenealogyNode> {
        self.nodes.iter().filter(|n| n.parent_id.is_none())
    }

    pub fn generation_sizes(&self) -> Vec<u64> {
        let mut sizes = Vec::new();
        for n in &self.nodes {
            let g = n.generation as usize;
            if sizes.len() <= g {
                sizes.resize(g + 1, 0);
            }
            sizes[g] += 1;
        }
        sizes
    }

    /// Nodes that died without offspring.
    pub fn leaves(&self) -> impl Iterator<Item = &GenealogyNode> {
        self.nodes.iter().filter(|n| n.offspring_count == Some(0))
    }
}

/// Simulates `N_0 = n0, ..., N_{m_max}` under `law`.
pub fn simulate_counts(
    law: &OffspringLaw,
    n0: u64,
    m_max: usize,
    stream: &mut RngStream,
    record_tree: bool,
) -> Result<(GwTrajectory, Option<GenealogyTree>)> {
    if n0 == 0 {
        return Err(Error::domain("n0", "initial population must be at least 1"));
    }
    if record_tree {
        let (traj, tree) = simulate_with_tree(law, n0, m_max, stream)?;
        return Ok((traj, Some(tree)));
    }
    let mut counts = Vec::with_capacity(m_max + 1);
    counts.push(n0);
    let mut current = n0;
    for _ in 0..m_max {
        let next = if current == 0 { 0 } else { law.draw_total(current, stream) };
        if next > MAX_POPULATION {
            return Err(Error::PopulationOverflow {
                count: next,
                cap: MAX_POPULATION,
            });
        }
        current = next as u64;
        counts.push(current);
    }
    Ok((GwTrajectory { counts }, None))
}

fn simulate_with_tree(
    law: &OffspringLaw,
    n0: u64,
    m_max: usize,
    stream: &mut RngStream,
) -> Result<(GwTrajectory, GenealogyTree)> {
    if n0 > MAX_TREE_GENERATION {
        return Err(Error::PopulationOverflow {
            count: n0 as u128,
            cap: MAX_TREE_GENERATION as u128,
        });
    }
    let mut nodes: Vec<GenealogyNode> = (0..n0)
        .map(|id| GenealogyNode {
            id,
            parent_id: None,
            generation: 0,
            offspring_count: None,
        })
        .collect();
    let mut counts = vec![n0];
    let mut generation_start = 0usize;
    for m in 0..m_max {
        let generation_end = nodes.len();
        let mut born = 0u64;
        for idx in generation_start..generation_end {
            let z = law.draw_one(stream);
            born += z;
            if born > MAX_TREE_GENERATION {
                return Err(Error::PopulationOverflow {
                    count: born as u128,
                    cap: MAX_TREE_GENERATION as u128,
                });
            }
            nodes[idx].offspring_count = Some(z as u32);
            let parent = nodes[idx].id;
            for _ in 0..z {
                let id = nodes.len() as u64;
                nodes.push(GenealogyNode {
                    id,
                    parent_id: Some(parent),
                    generation: (m + 1) as u32,
                    offspring_count: None,
                });
            }
        }
        counts.push(born);
        generation_start = generation_end;
    }
    Ok((GwTrajectory { counts }, GenealogyTree { nodes }))
}

/// `E N_m = ζ^m` for a single progenitor.
pub fn mean_population(law: &OffspringLaw, m: u32) -> f64 {
    law.mean().powi(m as i32)
}

/// Smallest root of `g(s) = s` on `[0, 1]`.
///
/// Sub- and critical laws return exactly 1. Otherwise `s ← g(s)` is iterated
/// from 0 until successive iterates differ by less than `tol`; the iteration
/// is monotone and cannot overshoot the smallest fixed point.
pub fn extinction_probability(law: &OffspringLaw, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::domain("tol", format!("must be positive, got {tol}")));
    }
    if law.criticality() != Criticality::Supercritical {
        return Ok(1.0);
    }
    let mut s = 0.0;
    loop {
        let next = law.generating_function(s);
        if (next - s).abs() < tol {
            return Ok(next);
        }
        s = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtinctionOutcome {
    /// First generation with no individuals.
    Extinct { generation: usize },
    /// Still alive at the last simulated generation.
    Alive { count: u64 },
    /// Reached `ESCAPE_POPULATION` individuals at `generation`; later
    /// extinction has probability below `q^(2^60)`.
    Escaped { generation: usize },
}

impl ExtinctionOutcome {
    pub fn is_extinct(&self) -> bool {
        matches!(self, ExtinctionOutcome::Extinct { .. })
    }
}

/// Runs counts until extinction or generation `m_max` without storing the
/// trajectory. Supercritical lines that blow up are stopped early.
pub fn run_to_extinction(
    law: &OffspringLaw,
    n0: u64,
    m_max: usize,
    stream: &mut RngStream,
) -> Result<ExtinctionOutcome> {
    if n0 == 0 {
        return Err(Error::domain("n0", "initial population must be at least 1"));
    }
    let mut current = n0;
    for m in 1..=m_max {
        let next = law.draw_total(current, stream);
        if next == 0 {
            return Ok(ExtinctionOutcome::Extinct { generation: m });
        }
        if next >= ESCAPE_POPULATION as u128 {
            return Ok(ExtinctionOutcome::Escaped { generation: m });
        }
        current = next as u64;
    }
    Ok(ExtinctionOutcome::Alive { count: current })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_stream;

    fn law(s: &str) -> OffspringLaw {
        OffspringLaw::parse(s).unwrap()
    }

    #[test]
    fn deterministic_doubling() {
        let mut s = make_stream(0, 0);
        let (t, _) = simulate_counts(&law("0,0,1"), 1, 3, &mut s, false).unwrap();
        assert_eq!(t.counts, vec![1, 2, 4, 8]);
        // Large populations go through the multinomial path.
        let (t, _) = simulate_counts(&law("0,0,1"), 1, 10, &mut s, false).unwrap();
        assert_eq!(t.counts.last(), Some(&1024));
    }

    #[test]
    fn immediate_extinction_is_absorbing() {
        let mut s = make_stream(0, 0);
        let (t, _) = simulate_counts(&law("1"), 5, 2, &mut s, false).unwrap();
        assert_eq!(t.counts, vec![5, 0, 0]);
        assert!(t.is_absorbed());
    }

    #[test]
    fn zero_initial_population_rejected() {
        let mut s = make_stream(0, 0);
        assert!(simulate_counts(&law("1/2,0,1/2"), 0, 2, &mut s, false).is_err());
    }

    #[test]
    fn overflow_past_two_to_the_63() {
        let mut s = make_stream(0, 0);
        let err = simulate_counts(&law("0,0,1"), 1, 64, &mut s, false).unwrap_err();
        assert!(matches!(err, Error::PopulationOverflow { .. }));
        assert!(err.to_string().contains("superprocess"));
        let (t, _) = simulate_counts(&law("0,0,1"), 1, 63, &mut s, false).unwrap();
        assert_eq!(t.counts[63], 1 << 63);
    }

    #[test]
    fn mean_population_powers() {
        assert_eq!(mean_population(&law("0,0,1"), 3), 8.0);
        assert_eq!(mean_population(&law("1/2,0,1/2"), 17), 1.0);
        assert_eq!(mean_population(&law("0.5,0.5"), 4), 0.0625);
    }

    #[test]
    fn criticality_trichotomy() {
        assert_eq!(classify_criticality(1.0), Criticality::Critical);
        assert_eq!(classify_criticality(0.99), Criticality::Subcritical);
        assert_eq!(classify_criticality(1.5), Criticality::Supercritical);
        assert_eq!(classify_criticality(1.0 + 1e-13), Criticality::Critical);
        // 0.1 + 0.2 + ... rounding never matters for exact laws.
        let l = law("0.3,0.4,0.3");
        assert_eq!(l.exact_mean(), Some(Ratio::from_integer(1)));
        assert_eq!(l.criticality(), Criticality::Critical);
        assert_eq!(law("1/3,1/3,1/3").criticality(), Criticality::Critical);
        assert_eq!(law("1e-1,0.9").criticality(), Criticality::Subcritical);
    }

    #[test]
    fn law_validation() {
        assert!(OffspringLaw::parse("0.5,0.6").is_err());
        assert!(OffspringLaw::parse("-0.5,1.5").is_err());
        assert!(OffspringLaw::parse("abc").is_err());
        assert!(OffspringLaw::new(vec![]).is_err());
        assert!(OffspringLaw::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn extinction_probabilities() {
        assert_eq!(extinction_probability(&law("1/2,0,1/2"), 1e-12).unwrap(), 1.0);
        assert_eq!(extinction_probability(&law("0.6,0,0.4"), 1e-12).unwrap(), 1.0);
        assert_eq!(extinction_probability(&law("0,0,1"), 1e-12).unwrap(), 0.0);
        assert!(extinction_probability(&law("0,0,1"), 0.0).is_err());
    }

    #[test]
    fn extinction_probability_matches_fixed_point_oracle() {
        // Oracle: 200 iterations of g(s) = 1/3 + (2/3) s^2 from 0.
        let mut s = 0.0f64;
        for _ in 0..200 {
            s = 1.0 / 3.0 + 2.0 / 3.0 * s * s;
        }
        assert!((s - 0.5).abs() < 1e-12);
        let tol = 1e-10;
        let q = extinction_probability(&law("1/3,0,2/3"), tol).unwrap();
        assert!((q - s).abs() <= 1e-9, "q = {q}");
    }

    #[test]
    fn tree_matches_counts() {
        let mut s = make_stream(9, 0);
        for _ in 0..50 {
            let (t, tree) = simulate_counts(&law("1/4,1/4,1/4,1/4"), 3, 8, &mut s, true).unwrap();
            let tree = tree.unwrap();
            let sizes = tree.generation_sizes();
            for (m, c) in t.counts.iter().enumerate() {
                assert_eq!(sizes.get(m).copied().unwrap_or(0), *c);
            }
            assert_eq!(tree.roots().count(), 3);
            assert!(t.is_absorbed());
            for leaf in tree.leaves() {
                assert!(tree.nodes.iter().all(|n| n.parent_id != Some(leaf.id)));
            }
        }
    }

    #[test]
    fn run_to_extinction_outcomes() {
        let mut s = make_stream(0, 0);
        assert_eq!(
            run_to_extinction(&law("1"), 4, 10, &mut s).unwrap(),
            ExtinctionOutcome::Extinct { generation: 1 }
        );
        assert!(matches!(
            run_to_extinction(&law("0,0,1"), 1, 100, &mut s).unwrap(),
            ExtinctionOutcome::Escaped { generation: 60 }
        ));
        assert_eq!(
            run_to_extinction(&law("0,1"), 2, 10, &mut s).unwrap(),
            ExtinctionOutcome::Alive { count: 2 }
        );
    }
}
