//! Mass-rescaled branching Brownian motion approximating super Brownian motion.
//!
//! With rescaling index `k`, each site of initial mass `x` starts
//! `round(k x)` particles, every particle has mass `1/β_k = 1/k`, and birth
//! and death rates are both raised by `c k`. The total mass then converges to
//! the Feller diffusion with mechanism `φ(z) = c z²` (plus any baseline drift).

use crate::bbm::{advance, init_population_at, AdvanceOptions, Environment, Particle, PopulationState};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::raster::RasterGrid;
use crate::rng::RngStream;
use crate::space::{Point, Rect};

pub use crate::bbm::{snapshot_measure, total_mass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescalingSchedule {
    pub k: u32,
    pub beta: f64,
    pub rate_multiplier: f64,
}

impl RescalingSchedule {
    /// `β_k = k`, rates multiplied by `k`.
    pub fn feller(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("k", "rescaling index must be ≥ 1"));
        }
        Ok(RescalingSchedule {
            k,
            beta: k as f64,
            rate_multiplier: k as f64,
        })
    }

    /// Particle count for an initial site of mass `mass`.
    pub fn initial_count(&self, mass: f64) -> u64 {
        (self.beta * mass).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResamplePolicy {
    /// Resample down to this many particles when the count exceeds it.
    pub target: usize,
    /// Check interval.
    pub every: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescaledRun {
    pub k: u32,
    /// Quadratic branching coefficient of the limit.
    pub c: f64,
    /// Initial measure as `(site, mass)` pairs.
    pub initial: Vec<(Point, f64)>,
    /// Baseline fields; the rescaled critical rates are added on top.
    pub env: Environment,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    pub resample: Option<ResamplePolicy>,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassSnapshot {
    pub time: f64,
    pub measure: DiscreteMeasure,
    /// Total mass `W`; always equal to `measure.total_mass()`.
    pub mass: f64,
}

fn record(state: Option<&PopulationState>, time: f64, beta: f64) -> Result<MassSnapshot> {
    let measure = match state {
        Some(s) => snapshot_measure(s, beta)?,
        None => DiscreteMeasure::new(),
    };
    let mass = measure.total_mass();
    Ok(MassSnapshot { time, measure, mass })
}

/// Runs the `k`-th approximation and records `(time, X_t^k, W_t^k)` at each
/// snapshot time in `[0, t_end]`.
pub fn rescaled_run(run: &RescaledRun, stream: &mut RngStream) -> Result<Vec<MassSnapshot>> {
    let schedule = RescalingSchedule::feller(run.k)?;
    if !(run.c >= 0.0) || !run.c.is_finite() {
        return Err(Error::domain("c", format!("must be ≥ 0, got {}", run.c)));
    }
    if !(run.t_end >= 0.0) {
        return Err(Error::domain("t_end", format!("must be ≥ 0, got {}", run.t_end)));
    }
    if let Some((_, m)) = run.initial.iter().find(|(_, m)| !(*m >= 0.0)) {
        return Err(Error::domain("x_init", format!("initial mass must be ≥ 0, got {m}")));
    }
    if let Some(p) = &run.resample {
        if p.target == 0 || !(p.every > 0.0) {
            return Err(Error::domain("resample", "target ≥ 1 and interval > 0 required"));
        }
    }
    let extra = run.c * schedule.rate_multiplier;
    let env = run.env.with_extra_rates(extra, extra)?;
    let sites: Vec<(Point, u64)> = run
        .initial
        .iter()
        .map(|(p, m)| (*p, schedule.initial_count(*m)))
        .filter(|(_, n)| *n > 0)
        .collect();

    let mut snapshots: Vec<f64> = run.snapshots.iter().copied().filter(|t| *t >= 0.0 && *t <= run.t_end).collect();
    snapshots.sort_by(f64::total_cmp);
    snapshots.dedup();

    let mut state = match sites.is_empty() {
        true => None,
        false => Some(init_population_at(&sites, &env)?),
    };

    // Boundaries: snapshots, resampling checks and the end time.
    let mut boundaries = snapshots.clone();
    if let Some(p) = &run.resample {
        let mut i = 1u64;
        while (i as f64) * p.every <= run.t_end {
            boundaries.push(i as f64 * p.every);
            i += 1;
        }
    }
    boundaries.push(run.t_end);
    boundaries.sort_by(f64::total_cmp);
    boundaries.dedup();

    let opts = AdvanceOptions {
        cap: run.cap,
        ..Default::default()
    };
    let mut out = Vec::with_capacity(snapshots.len());
    let mut next_snapshot = 0;
    let mut next_resample = 1u64;
    for t in boundaries {
        if let Some(s) = state.as_mut() {
            advance(s, &env, t, stream, &opts, &mut ())?;
            if let Some(p) = &run.resample {
                if t >= next_resample as f64 * p.every {
                    while next_resample as f64 * p.every <= t {
                        next_resample += 1;
                    }
                    resample(s, p.target, stream)?;
                }
            }
        }
        if snapshots.get(next_snapshot) == Some(&t) {
            out.push(record(state.as_ref(), t, schedule.beta)?);
            next_snapshot += 1;
        }
    }
    Ok(out)
}

/// Systematic resampling by weight down to `target_count` particles.
///
/// No-op when the population is already at most `target_count`. Otherwise
/// survivors are chosen with a single uniform offset over the cumulative
/// weights and each gets weight `M / target_count`, where `M` is the total
/// weight; the last survivor absorbs the rounding so that the sequential sum
/// of the new weights equals `M` exactly.
pub fn resample(state: &mut PopulationState, target_count: usize, stream: &mut RngStream) -> Result<()> {
    if target_count == 0 {
        return Err(Error::domain("target_count", "must be ≥ 1"));
    }
    let alive = state.alive();
    let n = alive.len();
    if n <= target_count {
        return Ok(());
    }
    let total: f64 = alive.iter().map(|p| p.weight).sum();
    let step = total / target_count as f64;
    let offset = stream.uniform();

    let mut chosen: Vec<Particle> = Vec::with_capacity(target_count);
    let mut next_id = state.next_id();
    let mut last_picked: Option<usize> = None;
    let mut j = 0;
    let mut cumulative = alive[0].weight;
    for m in 0..target_count {
        let threshold = (m as f64 + offset) * step;
        while cumulative <= threshold && j + 1 < n {
            j += 1;
            cumulative += alive[j].weight;
        }
        let mut p = alive[j].clone();
        if last_picked == Some(j) {
            p.parent_id = Some(p.id);
            p.id = next_id;
            p.birth_time = state.time();
            next_id += 1;
        }
        last_picked = Some(j);
        p.weight = step;
        chosen.push(p);
    }
    let head: f64 = chosen[..target_count - 1].iter().map(|p| p.weight).sum();
    // Sterbenz: total/2 ≤ head ≤ 2 total, so the subtraction is exact.
    let last = if target_count == 1 { total } else { total - head };
    chosen[target_count - 1].weight = last;
    state.set_next_id(next_id);
    state.replace_alive(chosen);
    Ok(())
}

/// Occupation density: each cell holds (mass in cell) / (cell area). Returns
/// the grid and the mass of atoms falling outside the window.
pub fn density_grid(measure: &DiscreteMeasure, window: Rect, cellsize: f64) -> Result<(RasterGrid, f64)> {
    let mut grid = RasterGrid::new(window, cellsize, 0.0)?;
    let mut outside = 0.0;
    for a in measure.atoms() {
        match grid.locate(a.position[0], a.position[1]) {
            Some((r, c)) if window.contains(&a.position) => {
                let v = grid.get(r, c);
                grid.set(r, c, v + a.mass);
            }
            _ => outside += a.mass,
        }
    }
    for r in 0..grid.nrows() {
        for c in 0..grid.ncols() {
            let area = grid.cell_area(r, c);
            let v = grid.get(r, c);
            grid.set(r, c, v / area);
        }
    }
    Ok((grid, outside))
}
