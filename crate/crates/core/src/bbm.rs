//! Continuous-time branching Brownian motion in R^d.
//!
//! Every alive particle carries an exponential event clock of rate
//! `λ_max + μ_max`. A proposed event at position `x` is a birth with
//! probability `λ(x) / (λ_max + μ_max)`, a death with probability
//! `μ(x) / (λ_max + μ_max)` and is otherwise discarded (thinning). On a birth
//! the parent keeps its identity and one child appears at the same position.
//!
//! Positions are updated lazily: a particle is moved only when it is touched
//! by an event or when the whole population is synchronized (snapshots,
//! monitor ticks, end of the run). Each move draws one Gaussian increment
//! with the diffusion coefficient frozen at the start of the segment.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::raster::RasterGrid;
use crate::rng::RngStream;
use crate::space::{norm, Point};

pub const DEFAULT_POPULATION_CAP: usize = 10_000_000;

/// A spatial rate or diffusion field.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Constant(f64),
    /// Piecewise constant per cell; `background` outside the raster and on
    /// nodata cells.
    Raster { grid: RasterGrid, background: f64 },
}

impl Field {
    #[inline]
    pub fn value_at(&self, p: &Point) -> f64 {
        match self {
            Field::Constant(v) => *v,
            Field::Raster { grid, background } => grid.sample(p[0], p[1]).unwrap_or(*background),
        }
    }

    pub fn max_value(&self) -> f64 {
        match self {
            Field::Constant(v) => *v,
            Field::Raster { grid, background } => grid
                .values()
                .iter()
                .filter(|v| **v != grid.nodata())
                .fold(*background, |m, v| m.max(*v)),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let check = |v: f64, at: String| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} field has invalid value {v} {at}")))
            }
        };
        match self {
            Field::Constant(v) => check(*v, String::new()),
            Field::Raster { grid, background } => {
                check(*background, "(background)".into())?;
                for row in 0..grid.nrows() {
                    for col in 0..grid.ncols() {
                        let v = grid.get(row, col);
                        if v != grid.nodata() {
                            check(v, format!("at row {}, column {}", row + 1, col + 1))?;
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// The same field plus a constant.
    pub fn shifted(&self, delta: f64) -> Field {
        match self {
            Field::Constant(v) => Field::Constant(v + delta),
            Field::Raster { grid, background } => {
                let mut grid = grid.clone();
                let nodata = grid.nodata();
                for v in grid.values_mut().iter_mut().filter(|v| **v != nodata) {
                    *v += delta;
                }
                Field::Raster {
                    grid,
                    background: background + delta,
                }
            }
        }
    }
}

/// Birth, death and diffusion fields with their global upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    dim: usize,
    birth: Field,
    death: Field,
    sigma: Field,
    birth_max: f64,
    death_max: f64,
    sigma_max: f64,
}

impl Environment {
    pub fn new(dim: usize, birth: Field, death: Field, sigma: Field) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::domain("dim", format!("dimension must be 1..=3, got {dim}")));
        }
        birth.validate("lambda")?;
        death.validate("mu")?;
        sigma.validate("sigma")?;
        Ok(Environment {
            dim,
            birth_max: birth.max_value(),
            death_max: death.max_value(),
            sigma_max: sigma.max_value(),
            birth,
            death,
            sigma,
        })
    }

    pub fn constant(dim: usize, birth_rate: f64, death_rate: f64, sigma: f64) -> Result<Self> {
        Self::new(
            dim,
            Field::Constant(birth_rate),
            Field::Constant(death_rate),
            Field::Constant(sigma),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn birth(&self) -> &Field {
        &self.birth
    }

    pub fn death(&self) -> &Field {
        &self.death
    }

    pub fn sigma(&self) -> &Field {
        &self.sigma
    }

    pub fn birth_max(&self) -> f64 {
        self.birth_max
    }

    pub fn death_max(&self) -> f64 {
        self.death_max
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Adds `birth_delta` and `death_delta` to the rate fields everywhere.
    pub fn with_extra_rates(&self, birth_delta: f64, death_delta: f64) -> Result<Self> {
        Self::new(
            self.dim,
            self.birth.shifted(birth_delta),
            self.death.shifted(death_delta),
            self.sigma.clone(),
        )
    }
}

/// Where an environment comes from: background constants, optionally
/// overridden per field by ASCII grids `<prefix>lambda.asc`,
/// `<prefix>mu.asc` and `<prefix>sigma.asc`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub dim: usize,
    pub birth_rate: f64,
    pub death_rate: f64,
    pub sigma: f64,
    pub raster_prefix: Option<PathBuf>,
}

fn raster_path(prefix: &Path, field: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!("{field}.asc"));
    PathBuf::from(s)
}

pub fn load_environment(spec: &EnvironmentSpec) -> Result<Environment> {
    for (name, v) in [("lambda", spec.birth_rate), ("mu", spec.death_rate), ("sigma", spec.sigma)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Validation(format!("{name} must be a finite value ≥ 0, got {v}")));
        }
    }
    let mut fields = [
        Field::Constant(spec.birth_rate),
        Field::Constant(spec.death_rate),
        Field::Constant(spec.sigma),
    ];
    if let Some(prefix) = &spec.raster_prefix {
        let mut found = 0;
        for (slot, name) in fields.iter_mut().zip(["lambda", "mu", "sigma"]) {
            let path = raster_path(prefix, name);
            if path.exists() {
                let background = match slot {
                    Field::Constant(v) => *v,
                    Field::Raster { .. } => unreachable!(),
                };
                *slot = Field::Raster {
                    grid: RasterGrid::read_ascii(&path)?,
                    background,
                };
                found += 1;
            }
        }
        if found == 0 {
            return Err(Error::config(
                "env",
                format!("no {0}lambda.asc, {0}mu.asc or {0}sigma.asc found", prefix.display()),
            ));
        }
    }
    let [birth, death, sigma] = fields;
    Environment::new(spec.dim, birth, death, sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub birth_time: f64,
    pub position: Point,
    pub weight: f64,
    /// Time at which `position` was last brought up to date.
    pub(crate) clock: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    time: f64,
    dim: usize,
    alive: Vec<Particle>,
    next_id: u64,
    initial_count: u64,
    total_births: u64,
    total_deaths: u64,
    total_pruned: u64,
}

impl PopulationState {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alive(&self) -> &[Particle] {
        &self.alive
    }

    pub fn len(&self) -> usize {
        self.alive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alive.is_empty()
    }

    pub fn initial_count(&self) -> u64 {
        self.initial_count
    }

    pub fn total_births(&self) -> u64 {
        self.total_births
    }

    pub fn total_deaths(&self) -> u64 {
        self.total_deaths
    }

    /// Particles removed by resampling or front truncation.
    pub fn total_pruned(&self) -> u64 {
        self.total_pruned
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Sum of particle weights in storage order.
    pub fn total_weight(&self) -> f64 {
        self.alive.iter().map(|p| p.weight).sum()
    }

    pub(crate) fn set_next_id(&mut self, next_id: u64) {
        self.next_id = next_id;
    }

    /// `alive = N_0 + births - deaths - pruned`.
    pub fn count_identity_holds(&self) -> bool {
        self.alive.len() as u64 + self.total_deaths + self.total_pruned
            == self.initial_count + self.total_births
    }

    /// Largest distance of an alive particle from the origin.
    pub fn max_norm(&self) -> Option<f64> {
        self.alive.iter().map(|p| norm(&p.position)).reduce(f64::max)
    }

    /// Replaces the alive set (used by resampling). Removed particles are
    /// counted as pruned; `replacement` must not be larger than the current set.
    pub(crate) fn replace_alive(&mut self, replacement: Vec<Particle>) {
        debug_assert!(replacement.len() <= self.alive.len());
        self.total_pruned += (self.alive.len() - replacement.len()) as u64;
        self.alive = replacement;
    }
}

/// `n0` unit-weight particles at `origin`, time 0.
pub fn init_population(n0: u64, origin: Point, env: &Environment) -> Result<PopulationState> {
    init_population_at(&[(origin, n0)], env)
}

/// Unit-weight particles at several sites, `(site, count)`.
pub fn init_population_at(sites: &[(Point, u64)], env: &Environment) -> Result<PopulationState> {
    let n0: u64 = sites.iter().map(|(_, n)| n).sum();
    if n0 == 0 {
        return Err(Error::domain("n0", "initial population must be at least 1"));
    }
    let mut alive = Vec::with_capacity(n0 as usize);
    for (site, count) in sites {
        if site.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("origin", format!("non-finite position {site:?}")));
        }
        for _ in 0..*count {
            alive.push(Particle {
                id: alive.len() as u64,
                parent_id: None,
                birth_time: 0.0,
                position: *site,
                weight: 1.0,
                clock: 0.0,
            });
        }
    }
    Ok(PopulationState {
        time: 0.0,
        dim: env.dim(),
        next_id: n0,
        alive,
        initial_count: n0,
        total_births: 0,
        total_deaths: 0,
        total_pruned: 0,
    })
}

/// One particle per `(site, weight)` pair, time 0.
pub fn init_weighted(particles: &[(Point, f64)], env: &Environment) -> Result<PopulationState> {
    let mut state = init_population_at(&particles.iter().map(|(p, _)| (*p, 1)).collect::<Vec<_>>(), env)?;
    for (p, (_, w)) in state.alive.iter_mut().zip(particles) {
        if !(*w > 0.0) || !w.is_finite() {
            return Err(Error::domain("weight", format!("must be positive and finite, got {w}")));
        }
        p.weight = *w;
    }
    Ok(state)
}

/// One particle's Brownian move between two touches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub from: Point,
    pub to: Point,
    pub sigma: f64,
}

/// Hooks into a run. Observers only read the state.
pub trait Observer {
    /// At each configured snapshot time, with every particle up to date.
    fn on_snapshot(&mut self, _state: &PopulationState) {}

    /// Whether `on_segment` should be called at all.
    fn wants_segments(&self) -> bool {
        false
    }

    /// Every Brownian segment of every particle, in the order they are drawn.
    fn on_segment(&mut self, _segment: &Segment, _stream: &mut RngStream) {}

    /// At every synchronization point (snapshot, monitor tick, end). Returning
    /// `true` ends the run early.
    fn should_stop(&mut self, _state: &PopulationState) -> bool {
        false
    }
}

impl Observer for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvanceOptions {
    /// Times at which observers receive `on_snapshot`, ascending.
    pub snapshots: Vec<f64>,
    /// Hard cap on the number of alive particles.
    pub cap: usize,
    /// Synchronize the whole population on the grid `k · monitor_step`.
    pub monitor_step: Option<f64>,
    /// At every synchronization point keep only this many particles, those
    /// farthest from the origin. Only meaningful for front statistics.
    pub front_truncation: Option<usize>,
}

impl Default for AdvanceOptions {
    fn default() -> Self {
        AdvanceOptions {
            snapshots: Vec::new(),
            cap: DEFAULT_POPULATION_CAP,
            monitor_step: None,
            front_truncation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ReachedUntil,
    Observer,
}

struct Mover<'a> {
    env: &'a Environment,
    dim: usize,
    segments: bool,
}

impl Mover<'_> {
    #[inline]
    fn bring_up_to_date(
        &self,
        p: &mut Particle,
        now: f64,
        stream: &mut RngStream,
        observer: &mut dyn Observer,
    ) {
        let dt = now - p.clock;
        if dt <= 0.0 {
            return;
        }
        let t0 = p.clock;
        p.clock = now;
        let sigma = self.env.sigma.value_at(&p.position);
        let from = p.position;
        if sigma > 0.0 {
            let step = stream.gaussian_step_unchecked(sigma * dt.sqrt(), self.dim);
            for (x, s) in p.position.iter_mut().zip(step) {
                *x += s;
            }
        }
        if self.segments {
            observer.on_segment(
                &Segment {
                    t0,
                    t1: now,
                    from,
                    to: p.position,
                    sigma,
                },
                stream,
            );
        }
    }
}

/// Runs the particle system from `state.time()` to `until`.
///
/// Returns early, with `state.time()` at the stopping point, when an
/// observer asks to stop. Fails with a population overflow when the alive
/// count exceeds `opts.cap`.
pub fn advance(
    state: &mut PopulationState,
    env: &Environment,
    until: f64,
    stream: &mut RngStream,
    opts: &AdvanceOptions,
    observer: &mut dyn Observer,
) -> Result<StopReason> {
    if !(until >= state.time) {
        return Err(Error::domain("until", format!("{until} is before current time {}", state.time)));
    }
    if let Some(step) = opts.monitor_step {
        if !(step > 0.0) {
            return Err(Error::domain("monitor_step", format!("must be positive, got {step}")));
        }
    }
    let mover = Mover {
        env,
        dim: state.dim,
        segments: observer.wants_segments(),
    };
    let rate_bound = env.birth_max + env.death_max;
    let mut snapshot_idx = opts.snapshots.partition_point(|s| *s <= state.time);
    let mut tick_idx = opts
        .monitor_step
        .map(|step| (state.time / step).floor() as u64 + 1)
        .unwrap_or(u64::MAX);

    loop {
        let next_snapshot = opts.snapshots.get(snapshot_idx).copied().unwrap_or(f64::INFINITY);
        let next_tick = opts
            .monitor_step
            .map(|step| tick_idx as f64 * step)
            .unwrap_or(f64::INFINITY);
        let next_sync = until.min(next_snapshot).min(next_tick);

        let n = state.alive.len();
        let total_rate = n as f64 * rate_bound;
        let wait = if total_rate > 0.0 {
            stream.unit_exponential() / total_rate
        } else {
            f64::INFINITY
        };

        if state.time + wait >= next_sync {
            // Exponential clocks are memoryless, so discarding `wait` is exact.
            state.time = next_sync;
            for p in state.alive.iter_mut() {
                mover.bring_up_to_date(p, next_sync, stream, observer);
            }
            if next_sync == next_tick {
                tick_idx += 1;
            }
            if let Some(keep) = opts.front_truncation {
                truncate_to_front(state, keep);
            }
            if next_sync == next_snapshot {
                while opts.snapshots.get(snapshot_idx).is_some_and(|s| *s <= next_sync) {
                    snapshot_idx += 1;
                }
                observer.on_snapshot(state);
            }
            if observer.should_stop(state) {
                return Ok(StopReason::Observer);
            }
            if next_sync >= until {
                return Ok(StopReason::ReachedUntil);
            }
            continue;
        }

        state.time += wait;
        let now = state.time;
        let i = stream.index(n);
        mover.bring_up_to_date(&mut state.alive[i], now, stream, observer);
        let u = stream.uniform() * rate_bound;
        let position = state.alive[i].position;
        let birth = env.birth.value_at(&position);
        if u < birth {
            let parent = &state.alive[i];
            let child = Particle {
                id: state.next_id,
                parent_id: Some(parent.id),
                birth_time: now,
                position,
                weight: parent.weight,
                clock: now,
            };
            state.next_id += 1;
            state.total_births += 1;
            state.alive.push(child);
            if state.alive.len() > opts.cap {
                return Err(Error::PopulationOverflow {
                    count: state.alive.len() as u128,
                    cap: opts.cap as u128,
                });
            }
        } else if u < birth + env.death.value_at(&position) {
            state.alive.swap_remove(i);
            state.total_deaths += 1;
        }
        debug_assert!(state.count_identity_holds());
    }
}

fn truncate_to_front(state: &mut PopulationState, keep: usize) {
    if state.alive.len() <= keep {
        return;
    }
    if keep == 0 {
        state.replace_alive(Vec::new());
        return;
    }
    state
        .alive
        .select_nth_unstable_by(keep - 1, |a, b| norm(&b.position).total_cmp(&norm(&a.position)));
    let removed = state.alive.len() - keep;
    state.alive.truncate(keep);
    state.total_pruned += removed as u64;
}

/// `X = (1/β) Σ_j weight_j δ_{x_j}`.
pub fn snapshot_measure(state: &PopulationState, beta: f64) -> Result<DiscreteMeasure> {
    check_beta(beta)?;
    let mut m = DiscreteMeasure::new();
    for p in &state.alive {
        m.push_unchecked(p.position, p.weight / beta);
    }
    Ok(m)
}

/// `W = (1/β) Σ_j weight_j`, accumulated in the same order as
/// [`snapshot_measure`] so that `⟨X, 1⟩ == W` bit for bit.
pub fn total_mass(state: &PopulationState, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(state.alive.iter().map(|p| p.weight / beta).sum())
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("beta", format!("must be positive, got {beta}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_stream;
    use crate::space::{Rect, ORIGIN};
    use crate::stats::Summary;

    fn run(env: &Environment, n0: u64, t: f64, stream: &mut RngStream) -> PopulationState {
        let mut s = init_population(n0, ORIGIN, env).unwrap();
        advance(&mut s, env, t, stream, &AdvanceOptions::default(), &mut ()).unwrap();
        s
    }

    #[test]
    fn constant_environment() {
        let env = Environment::constant(2, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(env.birth().value_at(&[123.0, -4.0, 0.0]), 2.0);
        assert_eq!((env.birth_max(), env.death_max(), env.sigma_max()), (2.0, 1.0, 1.0));
        assert!(Environment::constant(2, -1.0, 1.0, 1.0).is_err());
        assert!(Environment::constant(4, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn raster_lake_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("city_");
        std::fs::write(
            raster_path(&prefix, "lambda"),
            "ncols 4\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata_value -9999\n2 0 0 2\n2 0 0 2\n",
        )
        .unwrap();
        let spec = EnvironmentSpec {
            dim: 2,
            birth_rate: 2.0,
            death_rate: 1.0,
            sigma: 1.0,
            raster_prefix: Some(prefix.clone()),
        };
        let env = load_environment(&spec).unwrap();
        assert_eq!(env.birth().value_at(&[1.5, 0.5, 0.0]), 0.0);
        assert_eq!(env.birth().value_at(&[2.9, 1.9, 0.0]), 0.0);
        assert_eq!(env.birth().value_at(&[0.5, 0.5, 0.0]), 2.0);
        assert_eq!(env.birth().value_at(&[-10.0, 0.5, 0.0]), 2.0);
        assert_eq!(env.death().value_at(&[1.5, 0.5, 0.0]), 1.0);

        std::fs::write(
            raster_path(&prefix, "mu"),
            "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n-1\n",
        )
        .unwrap();
        assert!(matches!(load_environment(&spec), Err(Error::Validation(_))));

        let missing = EnvironmentSpec {
            raster_prefix: Some(dir.path().join("nothing_")),
            ..spec
        };
        assert!(matches!(load_environment(&missing), Err(Error::Config { .. })));
    }

    #[test]
    fn init_population_examples() {
        let env = Environment::constant(2, 1.0, 1.0, 1.0).unwrap();
        let s = init_population(3, ORIGIN, &env).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.time(), 0.0);
        assert!(s.alive().iter().all(|p| p.position == ORIGIN && p.weight == 1.0));
        let s = init_population(1, ORIGIN, &env).unwrap();
        assert_eq!((s.total_births(), s.total_deaths(), s.total_pruned()), (0, 0, 0));
        assert!(init_population(0, ORIGIN, &env).is_err());
    }

    #[test]
    fn advance_rejects_going_backwards() {
        let env = Environment::constant(2, 1.0, 1.0, 1.0).unwrap();
        let mut s = init_population(1, ORIGIN, &env).unwrap();
        let mut st = make_stream(0, 0);
        advance(&mut s, &env, 1.0, &mut st, &AdvanceOptions::default(), &mut ()).unwrap();
        assert!(advance(&mut s, &env, 0.5, &mut st, &AdvanceOptions::default(), &mut ()).is_err());
    }

    #[test]
    fn pure_diffusion_keeps_count_and_has_unit_variance() {
        let env = Environment::constant(2, 0.0, 0.0, 1.0).unwrap();
        let mut sx = Summary::new();
        let mut sy = Summary::new();
        for r in 0..20_000 {
            let mut st = make_stream(0, r);
            let s = run(&env, 1, 1.0, &mut st);
            assert_eq!(s.len(), 1);
            sx.push(s.alive()[0].position[0]);
            sy.push(s.alive()[0].position[1]);
        }
        // Var of the sample variance of a normal is 2σ⁴/(n-1).
        let se_var = (2.0f64 / 19_999.0).sqrt();
        assert!((sx.variance() - 1.0).abs() < 3.0 * se_var, "{}", sx.variance());
        assert!((sy.variance() - 1.0).abs() < 3.0 * se_var, "{}", sy.variance());
        assert!(sx.mean().abs() < 3.0 * sx.std_error());
    }

    #[test]
    fn yule_process_mean() {
        let env = Environment::constant(2, 1.0, 0.0, 0.0).unwrap();
        let mut counts = Summary::new();
        for r in 0..10_000 {
            let mut st = make_stream(2, r);
            let s = run(&env, 1, 2.0, &mut st);
            assert!(s.alive().iter().all(|p| p.position == ORIGIN));
            assert!(s.count_identity_holds());
            counts.push(s.len() as f64);
        }
        let expect = 2.0f64.exp();
        assert!((counts.mean() - expect).abs() < 3.0 * counts.std_error(), "{}", counts.mean());
    }

    #[test]
    fn critical_mass_is_preserved_in_mean() {
        let env = Environment::constant(2, 1.0, 1.0, 1.0).unwrap();
        let mut mass = Summary::new();
        for r in 0..2_000 {
            let mut st = make_stream(3, r);
            let s = run(&env, 100, 1.0, &mut st);
            assert!(s.count_identity_holds());
            mass.push(total_mass(&s, 100.0).unwrap());
        }
        assert!((mass.mean() - 1.0).abs() < 3.0 * mass.std_error(), "{}", mass.mean());
    }

    #[test]
    fn children_record_lineage() {
        let env = Environment::constant(2, 3.0, 0.0, 1.0).unwrap();
        let mut st = make_stream(4, 0);
        let s = run(&env, 1, 1.0, &mut st);
        assert!(s.len() > 1);
        let mut ids: Vec<u64> = s.alive().iter().map(|p| p.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), s.len());
        for p in s.alive() {
            match p.parent_id {
                None => assert_eq!(p.id, 0),
                Some(parent) => {
                    assert!(parent < p.id);
                    assert!(p.birth_time > 0.0 && p.birth_time <= 1.0);
                }
            }
        }
    }

    #[test]
    fn population_cap_overflows() {
        let env = Environment::constant(2, 5.0, 0.0, 0.0).unwrap();
        let mut s = init_population(1, ORIGIN, &env).unwrap();
        let mut st = make_stream(0, 0);
        let opts = AdvanceOptions {
            cap: 100,
            ..Default::default()
        };
        let err = advance(&mut s, &env, 10.0, &mut st, &opts, &mut ()).unwrap_err();
        assert!(matches!(err, Error::PopulationOverflow { cap: 100, .. }));
        assert!(err.to_string().contains("superprocess"));
    }

    #[test]
    fn thinning_blocks_births_where_rate_is_zero() {
        // lambda = 2 on x > 0, 0 on x < 0; no motion.
        let mut grid = RasterGrid::new(Rect::new(-10.0, -10.0, 10.0, 10.0).unwrap(), 10.0, 0.0).unwrap();
        grid.set(0, 1, 2.0);
        grid.set(1, 1, 2.0);
        let env = Environment::new(
            2,
            Field::Raster { grid, background: 0.0 },
            Field::Constant(0.0),
            Field::Constant(0.0),
        )
        .unwrap();
        let mut right = Summary::new();
        for r in 0..4_000 {
            let mut st = make_stream(5, r);
            let mut left = init_population(1, [-1.0, 0.0, 0.0], &env).unwrap();
            advance(&mut left, &env, 1.0, &mut st, &AdvanceOptions::default(), &mut ()).unwrap();
            assert_eq!(left.total_births(), 0);
            let mut rs = init_population(1, [1.0, 0.0, 0.0], &env).unwrap();
            advance(&mut rs, &env, 0.5, &mut st, &AdvanceOptions::default(), &mut ()).unwrap();
            right.push(rs.len() as f64);
        }
        // Yule at rate 2 for t = 0.5: E N = e.
        let expect = 1.0f64.exp();
        assert!((right.mean() - expect).abs() < 3.0 * right.std_error(), "{}", right.mean());
    }

    #[test]
    fn front_truncation_keeps_farthest() {
        let env = Environment::constant(2, 2.0, 0.0, 1.0).unwrap();
        let mut s = init_population(1, ORIGIN, &env).unwrap();
        let mut st = make_stream(6, 0);
        let opts = AdvanceOptions {
            monitor_step: Some(0.5),
            front_truncation: Some(50),
            ..Default::default()
        };
        advance(&mut s, &env, 5.0, &mut st, &opts, &mut ()).unwrap();
        assert!(s.len() <= 50);
        assert!(s.total_pruned() > 0);
        assert!(s.count_identity_holds());
    }

    #[test]
    fn measure_and_mass_agree() {
        let env = Environment::constant(2, 1.0, 1.0, 1.0).unwrap();
        let s = init_population(5, ORIGIN, &env).unwrap();
        let m = snapshot_measure(&s, 10.0).unwrap();
        assert_eq!(m.len(), 5);
        assert!(m.atoms().iter().all(|a| a.mass == 0.1));
        assert_eq!(total_mass(&s, 10.0).unwrap(), m.total_mass());
        assert!((m.total_mass() - 0.5).abs() < 1e-15);
        assert_eq!(total_mass(&init_population(7, ORIGIN, &env).unwrap(), 1.0).unwrap(), 7.0);
        assert!(snapshot_measure(&s, 0.0).is_err());
    }

    struct Snapshots(Vec<(f64, usize)>);

    impl Observer for Snapshots {
        fn on_snapshot(&mut self, state: &PopulationState) {
            assert!(state.alive().iter().all(|p| p.clock == state.time()));
            self.0.push((state.time(), state.len()));
        }
    }

    #[test]
    fn snapshots_fire_in_order_including_after_extinction() {
        let env = Environment::constant(2, 0.0, 5.0, 1.0).unwrap();
        let mut s = init_population(2, ORIGIN, &env).unwrap();
        let mut st = make_stream(7, 0);
        let opts = AdvanceOptions {
            snapshots: vec![0.5, 1.0, 20.0],
            ..Default::default()
        };
        let mut obs = Snapshots(Vec::new());
        advance(&mut s, &env, 20.0, &mut st, &opts, &mut obs).unwrap();
        let times: Vec<f64> = obs.0.iter().map(|(t, _)| *t).collect();
        assert_eq!(times, vec![0.5, 1.0, 20.0]);
        assert_eq!(obs.0[2].1, 0);
    }
}
