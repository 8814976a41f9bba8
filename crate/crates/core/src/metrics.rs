//! Dissemination metrics: ball coverage, uncovered zones, re-coverage delays,
//! first-passage times and front speed.

use std::collections::HashMap;

use crate::bbm::{advance, init_population, AdvanceOptions, Environment, Observer, PopulationState, Segment};
use crate::error::{Error, Result};
use crate::raster::RasterGrid;
use crate::rng::RngStream;
use crate::space::{dist2_xy, norm, Point, Rect, ORIGIN};
use crate::stats::{quantile_sorted, Summary};

/// Set of device positions hashed into square buckets of side `r`.
struct SpatialHash<'a> {
    inv_bucket: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    points: &'a [Point],
}

impl<'a> SpatialHash<'a> {
    fn new(points: &'a [Point], bucket: f64) -> Self {
        let inv_bucket = 1.0 / bucket;
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(inv_bucket, p[0], p[1])).or_default().push(i);
        }
        SpatialHash {
            inv_bucket,
            buckets,
            points,
        }
    }

    #[inline]
    fn key(inv_bucket: f64, x: f64, y: f64) -> (i64, i64) {
        ((x * inv_bucket).floor() as i64, (y * inv_bucket).floor() as i64)
    }

    /// Any point within distance `r` of `(x, y)`? Valid for `r ≤ bucket`.
    fn any_within(&self, x: f64, y: f64, r2: f64) -> bool {
        let (bx, by) = Self::key(self.inv_bucket, x, y);
        let q = [x, y, 0.0];
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.buckets.get(&(bx + dx, by + dy)) {
                    if ids.iter().any(|&i| dist2_xy(&self.points[i], &q) <= r2) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Warning text when cells are too coarse for the coverage radius.
pub fn coarse_cell_warning(r: f64, cellsize: f64) -> Option<String> {
    (cellsize > r / 2.0).then(|| format!("cellsize {cellsize} exceeds r/2 = {}; coverage will be coarse", r / 2.0))
}

/// 0/1 raster: a cell is covered iff its center lies within distance `r` of
/// some device. Masses are ignored.
pub fn coverage_raster(devices: &[Point], r: f64, window: Rect, cellsize: f64) -> Result<RasterGrid> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain("r", format!("coverage radius must be positive, got {r}")));
    }
    let window = Rect::new(window.x0, window.y0, window.x1, window.y1)?;
    let mut grid = RasterGrid::new(window, cellsize, 0.0)?;
    let hash = SpatialHash::new(devices, r);
    let r2 = r * r;
    for row in 0..grid.nrows() {
        for col in 0..grid.ncols() {
            let (x, y) = grid.cell_center(row, col);
            if hash.any_within(x, y, r2) {
                grid.set(row, col, 1.0);
            }
        }
    }
    Ok(grid)
}

pub fn positions(state: &PopulationState) -> Vec<Point> {
    state.alive().iter().map(|p| p.position).collect()
}

/// Fraction of covered cells, counting whole cells only (partial boundary
/// cells are ignored unless there are no whole cells).
pub fn coverage_fraction(raster: &RasterGrid) -> f64 {
    let mut total = 0usize;
    let mut covered = 0usize;
    let whole_exists = !raster.is_partial(0, 0);
    for row in 0..raster.nrows() {
        for col in 0..raster.ncols() {
            if whole_exists && raster.is_partial(row, col) {
                continue;
            }
            total += 1;
            if raster.get(row, col) > 0.0 {
                covered += 1;
            }
        }
    }
    covered as f64 / total as f64
}

/// A 4-connected set of uncovered cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub cells: Vec<(usize, usize)>,
    pub area: f64,
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Zone {
    pub fn area_cells(&self) -> usize {
        self.cells.len()
    }
}

/// Connected components of uncovered (zero) whole cells under
/// 4-connectivity, largest first.
pub fn uncovered_zones(raster: &RasterGrid) -> Vec<Zone> {
    let (nrows, ncols) = (raster.nrows(), raster.ncols());
    let whole_exists = !raster.is_partial(0, 0);
    let open = |r: usize, c: usize| raster.get(r, c) <= 0.0 && !(whole_exists && raster.is_partial(r, c));
    let mut seen = vec![false; nrows * ncols];
    let mut zones = Vec::new();
    let mut stack = Vec::new();
    for start in 0..nrows * ncols {
        let (r0, c0) = (start / ncols, start % ncols);
        if seen[start] || !open(r0, c0) {
            continue;
        }
        seen[start] = true;
        stack.push((r0, c0));
        let mut cells = Vec::new();
        while let Some((r, c)) = stack.pop() {
            cells.push((r, c));
            let mut visit = |rr: usize, cc: usize| {
                let idx = rr * ncols + cc;
                if !seen[idx] && open(rr, cc) {
                    seen[idx] = true;
                    stack.push((rr, cc));
                }
            };
            if r > 0 {
                visit(r - 1, c);
            }
            if r + 1 < nrows {
                visit(r + 1, c);
            }
            if c > 0 {
                visit(r, c - 1);
            }
            if c + 1 < ncols {
                visit(r, c + 1);
            }
        }
        cells.sort_unstable();
        let mut zone = Zone {
            cells: Vec::new(),
            area: 0.0,
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for &(r, c) in &cells {
            let rect = raster.cell_rect(r, c);
            zone.area += rect.area();
            zone.min_x = zone.min_x.min(rect.x0);
            zone.min_y = zone.min_y.min(rect.y0);
            zone.max_x = zone.max_x.max(rect.x1);
            zone.max_y = zone.max_y.max(rect.y1);
        }
        zone.cells = cells;
        zones.push(zone);
    }
    zones.sort_by_key(|z| std::cmp::Reverse(z.cells.len()));
    zones
}

/// Coverage rasters over time with per-cell first and last coverage times.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSeries {
    pub times: Vec<f64>,
    pub covered_fraction: Vec<f64>,
    pub first_covered: Vec<Option<f64>>,
    pub last_covered: Vec<Option<f64>>,
    rasters: Vec<RasterGrid>,
}

fn check_series(series: &[(f64, RasterGrid)]) -> Result<()> {
    let Some((_, first)) = series.first() else {
        return Err(Error::GeometryMismatch("empty raster series".into()));
    };
    for w in series.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::GeometryMismatch(format!(
                "times must increase, got {} then {}",
                w[0].0, w[1].0
            )));
        }
    }
    if let Some((t, _)) = series.iter().find(|(_, g)| !g.same_geometry(first)) {
        return Err(Error::GeometryMismatch(format!("raster at t={t} differs from the first")));
    }
    Ok(())
}

impl CoverageSeries {
    pub fn new(series: Vec<(f64, RasterGrid)>) -> Result<Self> {
        check_series(&series)?;
        let n = series[0].1.len();
        let mut first_covered = vec![None; n];
        let mut last_covered = vec![None; n];
        let mut times = Vec::with_capacity(series.len());
        let mut covered_fraction = Vec::with_capacity(series.len());
        let mut rasters = Vec::with_capacity(series.len());
        for (t, g) in series {
            for (i, v) in g.values().iter().enumerate() {
                if *v > 0.0 {
                    first_covered[i].get_or_insert(t);
                    last_covered[i] = Some(t);
                }
            }
            times.push(t);
            covered_fraction.push(coverage_fraction(&g));
            rasters.push(g);
        }
        Ok(CoverageSeries {
            times,
            covered_fraction,
            first_covered,
            last_covered,
            rasters,
        })
    }

    pub fn rasters(&self) -> &[RasterGrid] {
        &self.rasters
    }

    /// Cells covered at least once over the horizon.
    pub fn ever_covered(&self) -> RasterGrid {
        let mut g = self.rasters[0].like(0.0);
        for (v, first) in g.values_mut().iter_mut().zip(&self.first_covered) {
            if first.is_some() {
                *v = 1.0;
            }
        }
        g
    }

    /// Zones never covered during the simulated horizon.
    pub fn never_reached_zones(&self) -> Vec<Zone> {
        uncovered_zones(&self.ever_covered())
    }
}

/// Delay until `cell` is covered again after `t0`: zero if covered at the
/// reference raster (the last one at or before `t0`), `None` if it stays
/// uncovered until the last raster.
pub fn recoverage_delay(series: &[(f64, RasterGrid)], cell: (usize, usize), t0: f64) -> Result<Option<f64>> {
    check_series(series)?;
    let (row, col) = cell;
    let g0 = &series[0].1;
    if row >= g0.nrows() || col >= g0.ncols() {
        return Err(Error::GeometryMismatch(format!("cell {cell:?} outside the raster")));
    }
    let reference = series.partition_point(|(t, _)| *t <= t0);
    if reference == 0 {
        return Err(Error::GeometryMismatch(format!("no raster at or before t0 = {t0}")));
    }
    if series[reference - 1].1.get(row, col) > 0.0 {
        return Ok(Some(0.0));
    }
    Ok(series[reference..]
        .iter()
        .find(|(_, g)| g.get(row, col) > 0.0)
        .map(|(t, _)| t - t0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoverageStats {
    pub reference_time: f64,
    pub deadline: f64,
    pub uncovered_at_reference: usize,
    pub recovered_within_deadline: usize,
    /// Delays of the cells uncovered at the reference time; `None` = never.
    pub delays: Vec<((usize, usize), Option<f64>)>,
}

impl RecoverageStats {
    /// Empirical probability that an uncovered cell is covered again within
    /// the deadline; `None` when no cell was uncovered.
    pub fn probability(&self) -> Option<f64> {
        (self.uncovered_at_reference > 0)
            .then(|| self.recovered_within_deadline as f64 / self.uncovered_at_reference as f64)
    }
}

/// Re-coverage delays of every cell uncovered at `t0`.
pub fn recoverage_stats(series: &[(f64, RasterGrid)], t0: f64, deadline: f64) -> Result<RecoverageStats> {
    check_series(series)?;
    let g0 = &series[0].1;
    let mut stats = RecoverageStats {
        reference_time: t0,
        deadline,
        uncovered_at_reference: 0,
        recovered_within_deadline: 0,
        delays: Vec::new(),
    };
    for row in 0..g0.nrows() {
        for col in 0..g0.ncols() {
            let d = recoverage_delay(series, (row, col), t0)?;
            if d == Some(0.0) {
                continue;
            }
            stats.uncovered_at_reference += 1;
            if d.is_some_and(|d| d <= deadline) {
                stats.recovered_within_deadline += 1;
            }
            stats.delays.push(((row, col), d));
        }
    }
    Ok(stats)
}

/// Records, per radius, the first time any particle reaches distance `R`
/// from the origin.
///
/// Crossings between the sampled endpoints of a Brownian segment are
/// detected with the Brownian-bridge exit probability of the tangent half
/// space, `exp(-2 (R - r0)(R - r1) / (σ² Δt))`.
#[derive(Debug, Clone)]
pub struct PassageRecorder {
    radii: Vec<f64>,
    best: Vec<Option<f64>>,
    max_norm: f64,
    last_sync: f64,
}

/// First-passage record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageRun {
    /// `times[i]` is `T(radii[i])`; `None` when censored.
    pub times: Vec<Option<f64>>,
    /// Population alive when the run ended.
    pub survived: bool,
    pub end_time: f64,
    /// Largest distance seen at sampled positions.
    pub max_norm: f64,
}

impl PassageRecorder {
    pub fn new(radii: &[f64]) -> Result<Self> {
        if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("radii", "radii must be positive and strictly increasing"));
        }
        Ok(PassageRecorder {
            radii: radii.to_vec(),
            best: vec![None; radii.len()],
            max_norm: 0.0,
            last_sync: 0.0,
        })
    }

    /// Registers the initial positions.
    pub fn start(&mut self, state: &PopulationState) {
        self.last_sync = state.time();
        for p in state.alive() {
            let r = norm(&p.position);
            self.max_norm = self.max_norm.max(r);
            for (radius, best) in self.radii.iter().zip(self.best.iter_mut()) {
                if *radius <= r {
                    *best = Some(state.time());
                }
            }
        }
    }

    fn offer(&mut self, i: usize, t: f64) {
        let slot = &mut self.best[i];
        if slot.is_none_or(|b| t < b) {
            *slot = Some(t);
        }
    }

    pub fn finish(mut self, state: &PopulationState) -> PassageRun {
        // A larger sphere cannot be reached before a smaller one.
        for i in 1..self.best.len() {
            if let (Some(prev), Some(cur)) = (self.best[i - 1], self.best[i]) {
                self.best[i] = Some(cur.max(prev));
            }
        }
        PassageRun {
            times: self.best,
            survived: !state.is_empty(),
            end_time: state.time(),
            max_norm: self.max_norm,
        }
    }
}

impl Observer for PassageRecorder {
    fn wants_segments(&self) -> bool {
        true
    }

    fn on_segment(&mut self, seg: &Segment, stream: &mut RngStream) {
        let r0 = norm(&seg.from);
        let r1 = norm(&seg.to);
        self.max_norm = self.max_norm.max(r1);
        let n = self.radii.len();
        let mut i = self.radii.partition_point(|r| *r <= r0);
        let dt = seg.t1 - seg.t0;
        while i < n && self.radii[i] <= r1 {
            let frac = (self.radii[i] - r0) / (r1 - r0);
            self.offer(i, seg.t0 + frac * dt);
            i += 1;
        }
        if i == n || !(seg.sigma > 0.0) || !(dt > 0.0) {
            return;
        }
        let var = seg.sigma * seg.sigma * dt;
        let bridge = |radius: f64| (-2.0 * (radius - r0) * (radius - r1) / var).exp();
        if bridge(self.radii[i]) < 1e-12 {
            return;
        }
        let u = stream.uniform();
        let mid = seg.t0 + 0.5 * dt;
        while i < n && u < bridge(self.radii[i]) {
            self.offer(i, mid);
            i += 1;
        }
    }

    fn should_stop(&mut self, state: &PopulationState) -> bool {
        self.last_sync = state.time();
        self.best.iter().all(|b| b.is_some_and(|t| t <= self.last_sync))
    }
}

/// Options for [`run_passage`].
#[derive(Debug, Clone, PartialEq)]
pub struct PassageOptions {
    pub n0: u64,
    pub horizon: f64,
    /// Synchronization step; bounds the length of Brownian segments.
    pub monitor_step: f64,
    pub front_truncation: Option<usize>,
    pub cap: usize,
}

/// One branching Brownian run from the origin, recording first-passage times.
/// Stops early once every radius has been reached.
pub fn run_passage(
    env: &Environment,
    radii: &[f64],
    opts: &PassageOptions,
    stream: &mut RngStream,
) -> Result<PassageRun> {
    let mut recorder = PassageRecorder::new(radii)?;
    let mut state = init_population(opts.n0, ORIGIN, env)?;
    recorder.start(&state);
    let advance_opts = AdvanceOptions {
        snapshots: Vec::new(),
        cap: opts.cap,
        monitor_step: Some(opts.monitor_step),
        front_truncation: opts.front_truncation,
    };
    advance(&mut state, env, opts.horizon, stream, &advance_opts, &mut recorder)?;
    Ok(recorder.finish(&state))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassageRow {
    pub radius: f64,
    pub n_uncensored: usize,
    pub n_censored: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub q90: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassageTable {
    pub rows: Vec<PassageRow>,
    pub n_runs: usize,
    pub n_survived: usize,
}

impl PassageTable {
    pub fn survival_fraction(&self) -> f64 {
        if self.n_runs == 0 {
            0.0
        } else {
            self.n_survived as f64 / self.n_runs as f64
        }
    }
}

/// Per-radius passage statistics. Censored runs (never reached `R`) are
/// counted but never enter the mean or quantiles.
pub fn first_passage_times(runs: &[PassageRun], radii: &[f64]) -> Result<PassageTable> {
    if let Some(bad) = runs.iter().find(|r| r.times.len() != radii.len()) {
        return Err(Error::Validation(format!(
            "run has {} passage times for {} radii",
            bad.times.len(),
            radii.len()
        )));
    }
    let rows = radii
        .iter()
        .enumerate()
        .map(|(i, &radius)| {
            let mut reached: Vec<f64> = runs.iter().filter_map(|r| r.times[i]).collect();
            reached.sort_by(f64::total_cmp);
            let summary: Summary = reached.iter().copied().collect();
            PassageRow {
                radius,
                n_uncensored: reached.len(),
                n_censored: runs.len() - reached.len(),
                mean: (!reached.is_empty()).then(|| summary.mean()),
                median: quantile_sorted(&reached, 0.5),
                q90: quantile_sorted(&reached, 0.9),
            }
        })
        .collect();
    Ok(PassageTable {
        rows,
        n_runs: runs.len(),
        n_survived: runs.iter().filter(|r| r.survived).count(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontSpeed {
    pub speed: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub radii_used: Vec<f64>,
}

pub const MIN_SURVIVAL_FRACTION: f64 = 0.1;

/// Slope of the least-squares line `R ≈ a + v · median T(R)` over the larger
/// half of the reached radii (at least three).
///
/// `None` when fewer than 10% of runs survive or fewer than three radii were
/// reached. When runs survive but no radius is ever reached the front is
/// stationary and the speed is 0.
pub fn front_speed_estimate(table: &PassageTable) -> Option<FrontSpeed> {
    if table.survival_fraction() < MIN_SURVIVAL_FRACTION {
        return None;
    }
    let reached: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter_map(|r| r.median.map(|m| (m, r.radius)))
        .collect();
    if reached.is_empty() {
        return Some(FrontSpeed {
            speed: 0.0,
            intercept: 0.0,
            r_squared: 1.0,
            radii_used: Vec::new(),
        });
    }
    if reached.len() < 3 {
        return None;
    }
    let take = reached.len().div_ceil(2).max(3);
    let pts = &reached[reached.len() - take..];
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mr = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let str_: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mr)).sum();
    let srr: f64 = pts.iter().map(|p| (p.1 - mr).powi(2)).sum();
    if stt <= 0.0 {
        return None;
    }
    let speed = str_ / stt;
    Some(FrontSpeed {
        speed,
        intercept: mr - speed * mt,
        r_squared: if srr > 0.0 { str_ * str_ / (stt * srr) } else { 1.0 },
        radii_used: pts.iter().map(|p| p.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_stream;

    fn window100() -> Rect {
        Rect::new(-50.0, -50.0, 50.0, 50.0).unwrap()
    }

    #[test]
    fn no_devices_no_coverage() {
        let g = coverage_raster(&[], 5.0, window100(), 1.0).unwrap();
        assert_eq!(coverage_fraction(&g), 0.0);
    }

    #[test]
    fn huge_radius_covers_everything() {
        let g = coverage_raster(&[[3.0, -2.0, 0.0]], 1000.0, window100(), 2.0).unwrap();
        assert_eq!(coverage_fraction(&g), 1.0);
        assert!(uncovered_zones(&g).is_empty());
    }

    #[test]
    fn disk_area_fraction() {
        let g = coverage_raster(&[ORIGIN], 10.0, window100(), 0.25).unwrap();
        let expect = std::f64::consts::PI * 100.0 / 10_000.0;
        let got = coverage_fraction(&g);
        assert!((got - expect).abs() <= 0.01 * expect, "{got} vs {expect}");
    }

    #[test]
    fn degenerate_window_and_radius() {
        let w = Rect { x0: 0.0, y0: 0.0, x1: 0.0, y1: 1.0 };
        assert!(matches!(coverage_raster(&[ORIGIN], 1.0, w, 0.1), Err(Error::Config { .. })));
        assert!(coverage_raster(&[ORIGIN], 0.0, window100(), 0.1).is_err());
        assert!(coarse_cell_warning(1.0, 0.6).is_some());
        assert!(coarse_cell_warning(1.0, 0.5).is_none());
    }

    fn grid5(covered: &[(usize, usize)]) -> RasterGrid {
        let mut g = RasterGrid::new(Rect::new(0.0, 0.0, 5.0, 5.0).unwrap(), 1.0, 0.0).unwrap();
        for &(r, c) in covered {
            g.set(r, c, 1.0);
        }
        g
    }

    #[test]
    fn plus_shape_leaves_four_zones() {
        let plus: Vec<(usize, usize)> = (0..5).flat_map(|i| [(2, i), (i, 2)]).collect();
        let zones = uncovered_zones(&grid5(&plus));
        assert_eq!(zones.len(), 4);
        assert!(zones.iter().all(|z| z.area_cells() == 4 && z.area == 4.0));
        assert_eq!((zones[0].min_x, zones[0].min_y, zones[0].max_x, zones[0].max_y), (0.0, 3.0, 2.0, 5.0));
    }

    #[test]
    fn all_zero_is_one_zone_and_checkerboard_is_half() {
        let zones = uncovered_zones(&grid5(&[]));
        assert_eq!(zones.len(), 1);
        assert_eq!(zones[0].area_cells(), 25);
        let mut g = RasterGrid::new(Rect::new(0.0, 0.0, 4.0, 4.0).unwrap(), 1.0, 0.0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                g.set(r, c, ((r + c) % 2) as f64);
            }
        }
        assert_eq!(coverage_fraction(&g), 0.5);
        assert_eq!(uncovered_zones(&g).len(), 8);
    }

    #[test]
    fn recoverage_delays() {
        let covered = grid5(&[(0, 0)]);
        let empty = grid5(&[]);
        let series = vec![(0.0, empty.clone()), (1.0, empty.clone()), (2.5, covered.clone())];
        assert_eq!(recoverage_delay(&series, (0, 0), 0.0).unwrap(), Some(2.5));
        assert_eq!(recoverage_delay(&series, (0, 0), 2.5).unwrap(), Some(0.0));
        assert_eq!(recoverage_delay(&series, (1, 1), 0.0).unwrap(), None);
        let stats = recoverage_stats(&series, 0.0, 3.0).unwrap();
        assert_eq!(stats.uncovered_at_reference, 25);
        assert_eq!(stats.recovered_within_deadline, 1);
        assert_eq!(stats.probability(), Some(0.04));

        let other = RasterGrid::new(Rect::new(0.0, 0.0, 5.0, 5.0).unwrap(), 0.5, 0.0).unwrap();
        assert!(matches!(
            recoverage_delay(&[(0.0, empty.clone()), (1.0, other)], (0, 0), 0.0),
            Err(Error::GeometryMismatch(_))
        ));
        assert!(recoverage_delay(&[(1.0, empty.clone()), (0.5, empty)], (0, 0), 0.0).is_err());
    }

    #[test]
    fn coverage_series_tracks_first_and_last() {
        let series = vec![(0.0, grid5(&[(0, 0)])), (1.0, grid5(&[(0, 0), (1, 1)])), (2.0, grid5(&[(1, 1)]))];
        let cs = CoverageSeries::new(series).unwrap();
        assert_eq!(cs.covered_fraction, vec![0.04, 0.08, 0.04]);
        assert_eq!(cs.first_covered[0], Some(0.0));
        assert_eq!(cs.last_covered[0], Some(1.0));
        assert_eq!(cs.first_covered[6], Some(1.0));
        assert_eq!(cs.never_reached_zones()[0].area_cells(), 23);
    }

    #[test]
    fn static_particle_never_reaches_anything() {
        let env = Environment::constant(2, 0.0, 0.0, 0.0).unwrap();
        let opts = PassageOptions {
            n0: 1,
            horizon: 10.0,
            monitor_step: 0.5,
            front_truncation: None,
            cap: 1000,
        };
        let run = run_passage(&env, &[0.5, 1.0], &opts, &mut make_stream(0, 0)).unwrap();
        assert_eq!(run.times, vec![None, None]);
        assert!(run.survived);
        let table = first_passage_times(&[run], &[0.5, 1.0]).unwrap();
        assert!(table.rows.iter().all(|r| r.n_censored == 1 && r.mean.is_none()));
        let speed = front_speed_estimate(&table).unwrap();
        assert_eq!(speed.speed, 0.0);
    }

    #[test]
    fn extinct_runs_give_no_speed() {
        let env = Environment::constant(2, 0.0, 50.0, 1.0).unwrap();
        let opts = PassageOptions {
            n0: 1,
            horizon: 5.0,
            monitor_step: 0.1,
            front_truncation: None,
            cap: 1000,
        };
        let radii = [5.0, 6.0, 7.0];
        let runs: Vec<PassageRun> = (0..20)
            .map(|r| run_passage(&env, &radii, &opts, &mut make_stream(1, r)).unwrap())
            .collect();
        let table = first_passage_times(&runs, &radii).unwrap();
        assert_eq!(table.n_survived, 0);
        assert!(front_speed_estimate(&table).is_none());
    }

    #[test]
    fn passage_times_are_monotone_and_censoring_reconciles() {
        let env = Environment::constant(2, 1.0, 1.0, 1.0).unwrap();
        let radii = [0.5, 1.0, 1.5, 2.0, 3.0];
        let opts = PassageOptions {
            n0: 1,
            horizon: 3.0,
            monitor_step: 0.01,
            front_truncation: None,
            cap: 100_000,
        };
        let runs: Vec<PassageRun> = (0..300)
            .map(|r| run_passage(&env, &radii, &opts, &mut make_stream(2, r)).unwrap())
            .collect();
        for run in &runs {
            let reached: Vec<f64> = run.times.iter().flatten().copied().collect();
            assert!(reached.windows(2).all(|w| w[0] <= w[1]));
            // Censoring is a suffix: once a radius is missed so are all larger ones.
            if let Some(first_none) = run.times.iter().position(Option::is_none) {
                assert!(run.times[first_none..].iter().all(Option::is_none));
            }
        }
        let table = first_passage_times(&runs, &radii).unwrap();
        for row in &table.rows {
            assert_eq!(row.n_censored + row.n_uncensored, 300);
        }
        assert!(table.rows.windows(2).all(|w| w[0].n_uncensored >= w[1].n_uncensored));
    }

    #[test]
    fn front_speed_fit_on_synthetic_table() {
        let rows = (1..=10)
            .map(|i| PassageRow {
                radius: i as f64,
                n_uncensored: 5,
                n_censored: 0,
                mean: Some(i as f64 / 2.0),
                median: Some(i as f64 / 2.0 + 0.1),
                q90: None,
            })
            .collect();
        let table = PassageTable { rows, n_runs: 5, n_survived: 5 };
        let fit = front_speed_estimate(&table).unwrap();
        assert!((fit.speed - 2.0).abs() < 1e-12);
        assert_eq!(fit.radii_used, vec![6.0, 7.0, 8.0, 9.0, 10.0]);
    }

    #[test]
    fn radii_validation() {
        assert!(PassageRecorder::new(&[1.0, 1.0]).is_err());
        assert!(PassageRecorder::new(&[0.0, 1.0]).is_err());
        assert!(PassageRecorder::new(&[]).is_ok());
    }
}
