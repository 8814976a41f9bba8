//! Experiment orchestration for the `disseminate` command line.

pub mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bbm::{
    advance, init_population, load_environment, AdvanceOptions, EnvironmentSpec, PopulationState,
    DEFAULT_POPULATION_CAP,
};
use crate::csbp::{self, Atom, BranchingMechanism};
use crate::error::{Error, Result};
use crate::galton_watson::{simulate_counts, GenealogyTree, OffspringLaw};
use crate::metrics::{
    coarse_cell_warning, coverage_raster, first_passage_times, front_speed_estimate, recoverage_stats,
    uncovered_zones, CoverageSeries, PassageRun,
};
use crate::raster::RasterGrid;
use crate::rng::make_stream;
use crate::space::{norm, Point, Rect, ORIGIN};
use crate::superprocess::{density_grid, rescaled_run, MassSnapshot, ResamplePolicy, RescaledRun};

pub use config::{parse_config, CommonArgs, ExperimentConfig, FlagSections, Mode};
use config::{BbmSection, CsbpSection, GwSection, MetricsSection, SbmSection};
use output::{fmt_f64, Outputs};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "disseminate", version, about = "Branching and superprocess simulation of message dissemination")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Galton–Watson generation counts
    #[command(allow_negative_numbers = true)]
    Gw(ModeArgs<GwSection>),
    /// Continuous-state branching: v_t, Laplace functional, mean or Feller paths
    #[command(allow_negative_numbers = true)]
    Csbp(ModeArgs<CsbpSection>),
    /// Branching Brownian motion snapshots and mass
    #[command(allow_negative_numbers = true)]
    Bbm(ModeArgs<BbmSection>),
    /// Rescaled particle approximation of super-Brownian motion
    #[command(allow_negative_numbers = true)]
    Sbm(ModeArgs<SbmSection>),
    /// Coverage, zones, re-coverage and first-passage metrics of a snapshot file
    #[command(allow_negative_numbers = true)]
    Metrics(ModeArgs<MetricsSection>),
    /// Branching Brownian motion followed by metrics on its snapshots
    #[command(allow_negative_numbers = true)]
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct ModeArgs<S: Args> {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub section: S,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub bbm: BbmSection,
    #[command(flatten)]
    pub metrics: MetricsSection,
}

impl Cli {
    /// Merges flags with the config file they point to.
    pub fn into_config(self) -> Result<ExperimentConfig> {
        let mut flags = FlagSections::default();
        let (mode, common) = match self.command {
            Command::Gw(a) => {
                flags.gw = a.section;
                (Mode::Gw, a.common)
            }
            Command::Csbp(a) => {
                flags.csbp = a.section;
                (Mode::Csbp, a.common)
            }
            Command::Bbm(a) => {
                flags.bbm = a.section;
                (Mode::Bbm, a.common)
            }
            Command::Sbm(a) => {
                flags.sbm = a.section;
                (Mode::Sbm, a.common)
            }
            Command::Metrics(a) => {
                flags.metrics = a.section;
                (Mode::Metrics, a.common)
            }
            Command::Pipeline(a) => {
                flags.bbm = a.bbm;
                flags.metrics = a.metrics;
                (Mode::Pipeline, a.common)
            }
        };
        let text = config::read_config_file(&common)?;
        parse_config(mode, &common, flags, text)
    }
}

/// Files written by a run, in the order they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

/// Runs an experiment and writes its outputs and manifest. On error nothing
/// is left behind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?;
    let mut out = Outputs::new(&cfg.out_prefix);
    let mut summary = Vec::new();
    pool.install(|| -> Result<()> {
        match cfg.mode {
            Mode::Gw => run_gw(cfg, &mut out, &mut summary),
            Mode::Csbp => run_csbp(cfg, &mut out, &mut summary),
            Mode::Bbm => run_bbm(cfg, &mut out, &mut summary).map(|_| ()),
            Mode::Sbm => run_sbm(cfg, &mut out, &mut summary),
            Mode::Metrics => {
                let path = cfg.metrics.input.clone().expect("validated");
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                run_metrics(cfg, &text, &path.display().to_string(), &mut out, &mut summary)
            }
            Mode::Pipeline => {
                let snapshots = run_bbm(cfg, &mut out, &mut summary)?;
                run_metrics(cfg, &snapshots, "pipeline snapshots", &mut out, &mut summary)
            }
        }
    })?;
    out.add("manifest.toml", manifest(cfg, &out.names()));
    let files = out.commit()?;
    Ok(RunReport { files, summary })
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    mode: &'static str,
    seed: u64,
    config_sha256: String,
    outputs: &'a [String],
    /// Effective configuration; usable as `--config` to reproduce the run.
    config: &'a ExperimentConfig,
}

fn manifest(cfg: &ExperimentConfig, outputs: &[String]) -> String {
    let config_sha256 = Sha256::digest(cfg.canonical().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let m = Manifest {
        version: VERSION,
        mode: cfg.mode.name(),
        seed: cfg.seed,
        config_sha256,
        outputs,
        config: cfg,
    };
    toml::to_string(&m).expect("manifest serializes")
}

/// Runs `f` for every replication on the pool, results ordered by replication.
fn per_replication<T: Send>(cfg: &ExperimentConfig, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..cfg.replications).into_par_iter().map(f).collect()
}

fn parse_list<T>(key: &'static str, s: &str, item: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| item(t.trim()).ok_or_else(|| Error::config(key, format!("cannot parse `{t}`"))))
        .collect()
}

fn run_gw(cfg: &ExperimentConfig, out: &mut Outputs, summary: &mut Vec<String>) -> Result<()> {
    let s = &cfg.gw;
    let law = OffspringLaw::parse(s.offspring.as_deref().expect("validated"))
        .map_err(|e| cfg.key_error(Some("gw"), "offspring", e.to_string()))?;
    let n0 = s.n0.unwrap_or(1);
    let generations = s.generations.unwrap_or(10);
    let tree = s.tree.unwrap_or(false);
    let runs = per_replication(cfg, |rep| {
        simulate_counts(&law, n0, generations, &mut make_stream(cfg.seed, rep), tree)
    })?;
    let mut counts = String::from("replication,generation,count\n");
    for (rep, (traj, _)) in runs.iter().enumerate() {
        for (m, n) in traj.counts.iter().enumerate() {
            counts.push_str(&format!("{rep},{m},{n}\n"));
        }
    }
    match &s.out {
        Some(path) => out.add_path(path.clone(), counts),
        None => out.add("gw.csv", counts),
    }
    if tree {
        let mut csv = String::from("replication,id,parent_id,generation,offspring_count\n");
        for (rep, (_, t)) in runs.iter().enumerate() {
            let t: &GenealogyTree = t.as_ref().expect("requested");
            for node in &t.nodes {
                csv.push_str(&format!(
                    "{rep},{},{},{},{}\n",
                    node.id,
                    node.parent_id.map(|p| p.to_string()).unwrap_or_default(),
                    node.generation,
                    node.offspring_count.map(|c| c.to_string()).unwrap_or_default()
                ));
            }
        }
        out.add("gw_tree.csv", csv);
    }
    summary.push(format!("offspring mean {} ({})", law.mean(), law.criticality()));
    let extinct = runs.iter().filter(|(t, _)| t.is_absorbed()).count();
    summary.push(format!("{extinct}/{} replications extinct by generation {generations}", runs.len()));
    Ok(())
}

fn run_csbp(cfg: &ExperimentConfig, out: &mut Outputs, summary: &mut Vec<String>) -> Result<()> {
    let s = &cfg.csbp;
    let atoms: Vec<Atom> = match &s.atoms {
        Some(a) => BranchingMechanism::parse_atoms(a).map_err(|e| cfg.key_error(Some("csbp"), "atoms", e.to_string()))?,
        None => Vec::new(),
    };
    let b = s.b.unwrap_or(0.0);
    let c = s.c.unwrap_or(0.0);
    let mech = BranchingMechanism::new(b, c, atoms)?;
    let x0 = s.x0.unwrap_or(1.0);
    let mu = s.mu.unwrap_or(1.0);
    let t = s.t.unwrap_or(1.0);
    let tol = s.tol.unwrap_or(1e-8);
    let mode = s.mode.as_deref().unwrap_or("v");
    summary.push(format!("branching mechanism is {}", mech.criticality()));
    if mode == "path" {
        let dt = s.dt.unwrap_or(t / 1000.0);
        let paths = per_replication(cfg, |rep| {
            csbp::simulate_feller_path(c, b, x0, t, dt, &mut make_stream(cfg.seed, rep))
        })?;
        let mut csv = String::from("replication,t,Y\n");
        for (rep, p) in paths.iter().enumerate() {
            for (ti, yi) in p.times.iter().zip(&p.values) {
                csv.push_str(&format!("{rep},{},{}\n", fmt_f64(*ti), fmt_f64(*yi)));
            }
        }
        let absorbed = paths.iter().filter(|p| p.last() == 0.0).count();
        summary.push(format!("{absorbed}/{} paths absorbed by t={t}", paths.len()));
        out.add("csbp.csv", csv);
        return Ok(());
    }
    let grid: Vec<f64> = match s.dt {
        Some(dt) => {
            let n = (t / dt - 1e-9).ceil().max(0.0) as usize;
            (0..=n).map(|i| (i as f64 * dt).min(t)).collect()
        }
        None => vec![t],
    };
    let mut csv = String::from("t,value\n");
    for ti in grid {
        let value = match mode {
            "v" => csbp::solve_v(&mech, mu, ti, tol)?,
            "laplace" => csbp::laplace_functional(&mech, x0, mu, ti, tol)?,
            _ => csbp::mean_csbp(&mech, x0, ti)?,
        };
        csv.push_str(&format!("{},{}\n", fmt_f64(ti), fmt_f64(value)));
    }
    out.add("csbp.csv", csv);
    Ok(())
}

fn snapshot_times(requested: Option<&[f64]>, t_end: f64) -> Vec<f64> {
    let mut times = requested.map(<[f64]>::to_vec).unwrap_or_else(|| vec![t_end]);
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Runs the bbm section and returns the snapshot CSV text.
fn run_bbm(cfg: &ExperimentConfig, out: &mut Outputs, summary: &mut Vec<String>) -> Result<String> {
    let s = &cfg.bbm;
    let env = load_environment(&EnvironmentSpec {
        dim: 2,
        birth_rate: s.lambda.expect("validated"),
        death_rate: s.mu.expect("validated"),
        sigma: s.sigma.expect("validated"),
        raster_prefix: s.env.clone(),
    })?;
    let t_end = s.t_end.expect("validated");
    let times = snapshot_times(s.snapshots.as_deref(), t_end);
    let n0 = s.n0.unwrap_or(1);
    let opts = AdvanceOptions {
        snapshots: times.iter().copied().filter(|t| *t > 0.0).collect(),
        cap: s.cap.unwrap_or(DEFAULT_POPULATION_CAP),
        ..Default::default()
    };

    struct Recorder {
        rows: String,
        mass: Vec<(f64, f64)>,
    }
    impl Recorder {
        fn take(&mut self, rep: u64, state: &PopulationState) {
            let t = fmt_f64(state.time());
            for p in state.alive() {
                self.rows.push_str(&format!(
                    "{rep},{t},{},{},{},{},{}\n",
                    p.id,
                    p.parent_id.map(|x| x.to_string()).unwrap_or_default(),
                    fmt_f64(p.position[0]),
                    fmt_f64(p.position[1]),
                    fmt_f64(p.weight)
                ));
            }
            self.mass.push((state.time(), state.total_weight()));
        }
    }
    struct Obs<'a> {
        rep: u64,
        rec: &'a mut Recorder,
    }
    impl crate::bbm::Observer for Obs<'_> {
        fn on_snapshot(&mut self, state: &PopulationState) {
            self.rec.take(self.rep, state);
        }
    }

    let runs = per_replication(cfg, |rep| {
        let mut stream = make_stream(cfg.seed, rep);
        let mut state = init_population(n0, ORIGIN, &env)?;
        let mut rec = Recorder {
            rows: String::new(),
            mass: Vec::new(),
        };
        if times.first() == Some(&0.0) {
            rec.take(rep, &state);
        }
        advance(&mut state, &env, t_end, &mut stream, &opts, &mut Obs { rep, rec: &mut rec })?;
        Ok((rec, state.len()))
    })?;
    let mut snapshots = String::from("replication,time,particle_id,parent_id,x,y,weight\n");
    let mut mass = String::from("replication,time,W\n");
    let mut alive = 0;
    for (rep, (rec, n)) in runs.iter().enumerate() {
        snapshots.push_str(&rec.rows);
        for (t, w) in &rec.mass {
            mass.push_str(&format!("{rep},{},{}\n", fmt_f64(*t), fmt_f64(*w)));
        }
        alive += (*n > 0) as usize;
    }
    summary.push(format!("{alive}/{} replications alive at t={t_end}", runs.len()));
    out.add("snapshots.csv", snapshots.clone());
    out.add("mass.csv", mass);
    Ok(snapshots)
}

fn parse_init_atoms(s: &str) -> Result<Vec<(Point, f64)>> {
    parse_list("sbm.init_atoms", s, |t| {
        let v: Vec<f64> = t.split(':').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
        (v.len() == 3).then(|| ([v[0], v[1], 0.0], v[2]))
    })
}

fn run_sbm(cfg: &ExperimentConfig, out: &mut Outputs, summary: &mut Vec<String>) -> Result<()> {
    let s = &cfg.sbm;
    let mut initial = match &s.init_atoms {
        Some(a) => parse_init_atoms(a)?,
        None => Vec::new(),
    };
    if s.x_init.is_some() || initial.is_empty() {
        initial.push((ORIGIN, s.x_init.unwrap_or(1.0)));
    }
    let t_end = s.t_end.expect("validated");
    let window = s.window.as_deref().map(Rect::parse).transpose()?;
    let cellsize = s.cellsize.unwrap_or(1.0);
    let run = RescaledRun {
        k: s.k.expect("validated"),
        c: s.c.unwrap_or(1.0),
        initial,
        env: crate::bbm::Environment::constant(2, 0.0, 0.0, s.sigma.unwrap_or(1.0))?,
        t_end,
        snapshots: snapshot_times(s.snapshots.as_deref(), t_end),
        resample: s.resample_target.map(|target| ResamplePolicy {
            target,
            every: s.resample_every.unwrap_or(t_end / 100.0).max(f64::MIN_POSITIVE),
        }),
        cap: s.cap.unwrap_or(DEFAULT_POPULATION_CAP),
    };
    let runs: Vec<Vec<MassSnapshot>> = per_replication(cfg, |rep| rescaled_run(&run, &mut make_stream(cfg.seed, rep)))?;
    let mut mass = String::from("replication,time,W\n");
    for (rep, snaps) in runs.iter().enumerate() {
        for snap in snaps {
            mass.push_str(&format!("{rep},{},{}\n", fmt_f64(snap.time), fmt_f64(snap.mass)));
        }
        let mut dump = String::from("time,x,y,mass\n");
        for snap in snaps {
            let t = fmt_f64(snap.time);
            for a in snap.measure.atoms() {
                dump.push_str(&format!(
                    "{t},{},{},{}\n",
                    fmt_f64(a.position[0]),
                    fmt_f64(a.position[1]),
                    fmt_f64(a.mass)
                ));
            }
        }
        out.add(&format!("measure_r{rep}.csv"), dump);
        if let Some(w) = window {
            for (i, snap) in snaps.iter().enumerate() {
                let (grid, outside) = density_grid(&snap.measure, w, cellsize)?;
                if outside > 0.0 && i + 1 == snaps.len() {
                    summary.push(format!("replication {rep}: mass {outside} outside the raster window"));
                }
                out.add(&format!("density_r{rep}_s{i}.asc"), grid.to_ascii());
            }
        }
    }
    out.add("mass.csv", mass);
    if let Some(last) = runs.first().and_then(|r| r.last()) {
        summary.push(format!("replication 0: W={} at t={}", last.mass, last.time));
    }
    Ok(())
}

/// Positions per replication and time, read from a snapshot CSV or a measure
/// dump (which counts as replication 0).
struct PositionTable {
    times: Vec<f64>,
    by_rep: BTreeMap<u64, Vec<(f64, Vec<Point>)>>,
}

impl PositionTable {
    fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let (rep_col, t_col, x_col, y_col) = match header.join(",").as_str() {
            "replication,time,particle_id,parent_id,x,y,weight" => (Some(0), 1, 4, 5),
            "time,x,y,mass" => (None, 0, 1, 2),
            other => {
                return Err(Error::config(
                    "metrics.input",
                    format!("{origin}: unrecognised header `{other}`"),
                ))
            }
        };
        let mut rows: BTreeMap<u64, Vec<(f64, Point)>> = BTreeMap::new();
        let mut times = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let field = |c: usize| -> Result<f64> {
                rec.get(c).and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                    Error::config("metrics.input", format!("{origin}: bad value on data row {}", i + 1))
                })
            };
            let rep = match rep_col {
                Some(c) => field(c)? as u64,
                None => 0,
            };
            let t = field(t_col)?;
            rows.entry(rep).or_default().push((t, [field(x_col)?, field(y_col)?, 0.0]));
            times.push(t);
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let by_rep = rows
            .into_iter()
            .map(|(rep, pts)| {
                let mut grouped: Vec<(f64, Vec<Point>)> = Vec::new();
                for (t, p) in pts {
                    match grouped.iter_mut().find(|(gt, _)| *gt == t) {
                        Some((_, v)) => v.push(p),
                        None => grouped.push((t, vec![p])),
                    }
                }
                grouped.sort_by(|a, b| a.0.total_cmp(&b.0));
                (rep, grouped)
            })
            .collect();
        Ok(PositionTable { times, by_rep })
    }

    fn positions(&self, rep: u64, t: f64) -> &[Point] {
        self.by_rep
            .get(&rep)
            .and_then(|g| g.iter().find(|(gt, _)| *gt == t))
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }
}

fn run_metrics(
    cfg: &ExperimentConfig,
    input: &str,
    origin: &str,
    out: &mut Outputs,
    summary: &mut Vec<String>,
) -> Result<()> {
    let s = &cfg.metrics;
    let table = PositionTable::parse(input, origin)?;
    if table.times.is_empty() {
        return Err(Error::Validation(format!("{origin}: no snapshot rows")));
    }
    let r = s.r.unwrap_or(1.0);
    let window = Rect::parse(s.window.as_deref().expect("validated"))
        .map_err(|e| cfg.key_error(Some("metrics"), "window", e.to_string()))?;
    let cellsize = s.cellsize.unwrap_or(r / 2.0);
    if let Some(w) = coarse_cell_warning(r, cellsize) {
        summary.push(format!("warning: {w}"));
    }
    let rep = s.replication.unwrap_or(0);

    let rasters: Vec<(f64, RasterGrid)> = table
        .times
        .par_iter()
        .map(|&t| coverage_raster(table.positions(rep, t), r, window, cellsize).map(|g| (t, g)))
        .collect::<Result<_>>()?;
    let series = CoverageSeries::new(rasters.clone())?;
    let mut coverage = String::from("time,covered_fraction\n");
    for (t, f) in series.times.iter().zip(&series.covered_fraction) {
        coverage.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*f)));
    }
    out.add("coverage.csv", coverage);
    for (i, (_, g)) in rasters.iter().enumerate() {
        out.add(&format!("coverage_s{i}.asc"), g.to_ascii());
    }
    let (last_t, last) = rasters.last().expect("non-empty");
    let zones = uncovered_zones(last);
    let mut zcsv = String::from("zone_id,area_cells,min_x,min_y,max_x,max_y\n");
    for (id, z) in zones.iter().enumerate() {
        zcsv.push_str(&format!(
            "{id},{},{},{},{},{}\n",
            z.area_cells(),
            fmt_f64(z.min_x),
            fmt_f64(z.min_y),
            fmt_f64(z.max_x),
            fmt_f64(z.max_y)
        ));
    }
    out.add("zones.csv", zcsv);
    summary.push(format!(
        "replication {rep}: covered fraction {} and {} uncovered zones at t={last_t}",
        series.covered_fraction.last().expect("non-empty"),
        zones.len()
    ));

    if let Some(deadline) = s.deadline {
        let t0 = s.reference_time.unwrap_or(table.times[0]);
        let stats = recoverage_stats(&rasters, t0, deadline)?;
        let mut csv = String::from("reference_time,deadline,uncovered_cells,recovered_within_deadline,probability\n");
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(t0),
            fmt_f64(deadline),
            stats.uncovered_at_reference,
            stats.recovered_within_deadline,
            stats.probability().map(fmt_f64).unwrap_or_default()
        ));
        out.add("recoverage.csv", csv);
    }

    if let Some(radii) = &s.radii {
        let t_last = *table.times.last().expect("non-empty");
        let runs: Vec<PassageRun> = table
            .by_rep
            .values()
            .map(|groups| {
                let times = radii
                    .iter()
                    .map(|&radius| {
                        groups
                            .iter()
                            .find(|(_, pts)| pts.iter().any(|p| norm(p) >= radius))
                            .map(|(t, _)| *t)
                    })
                    .collect();
                PassageRun {
                    times,
                    survived: groups.last().is_some_and(|(t, _)| *t == t_last),
                    end_time: t_last,
                    max_norm: groups
                        .iter()
                        .flat_map(|(_, pts)| pts.iter().map(norm))
                        .fold(0.0, f64::max),
                }
            })
            .collect();
        let passage = first_passage_times(&runs, radii)?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut csv = String::from("radius,n_uncensored,n_censored,mean,median,q90\n");
        for row in &passage.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_f64(row.radius),
                row.n_uncensored,
                row.n_censored,
                opt(row.mean),
                opt(row.median),
                opt(row.q90)
            ));
        }
        out.add("passage.csv", csv);
        match front_speed_estimate(&passage) {
            Some(f) => summary.push(format!("front speed {} (R² {})", f.speed, f.r_squared)),
            None => summary.push("front speed undetermined".to_string()),
        }
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = cli.into_config().and_then(|cfg| {
        let report = run_experiment(&cfg)?;
        if !cfg.quiet {
            for line in &report.summary {
                println!("{line}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

