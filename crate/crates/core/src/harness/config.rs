//! Experiment configuration: TOML file sections overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declares a config section usable both as TOML table and as clap flags.
/// Every field is optional so that flag values can be overlaid on file values.
macro_rules! section {
    ($(#[$sm:meta])* $name:ident { $( $(#[$m:meta])* $f:ident : $t:ty ),* $(,)? }) => {
        $(#[$sm])*
        #[derive(Debug, Clone, Default, PartialEq, Args, Deserialize, Serialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $( $(#[$m])* #[serde(skip_serializing_if = "Option::is_none")] pub $f: Option<$t>, )*
        }

        impl $name {
            /// Values set in `self` win over those in `base`.
            pub fn overlay(self, base: Self) -> Self {
                Self { $( $f: self.$f.or(base.$f), )* }
            }
        }
    };
}

section!(
    /// Galton–Watson counts.
    GwSection {
        /// Offspring probabilities p0,p1,... (fractions allowed, e.g. 1/4,0,3/4)
        #[arg(long)]
        offspring: String,
        /// Initial population [default: 1]
        #[arg(long)]
        n0: u64,
        /// Number of generations to simulate [default: 10]
        #[arg(long)]
        generations: usize,
        /// Also write the genealogy tree CSV [default: false]
        #[arg(long)]
        tree: bool,
        /// Path of the counts CSV [default: <out-prefix>gw.csv]
        #[arg(long)]
        out: PathBuf,
    }
);

section!(
    /// Continuous-state branching.
    CsbpSection {
        /// Linear coefficient b of the branching mechanism [default: 0]
        #[arg(long)]
        b: f64,
        /// Quadratic coefficient c [default: 0]
        #[arg(long)]
        c: f64,
        /// Jump atoms as weight:size pairs, comma separated [default: none]
        #[arg(long)]
        atoms: String,
        /// Initial mass [default: 1]
        #[arg(long)]
        x0: f64,
        /// Laplace argument [default: 1]
        #[arg(long)]
        mu: f64,
        /// Horizon [default: 1]
        #[arg(long)]
        t: f64,
        /// Output grid step; also the Euler step of `path` mode [default: t, or t/1000 for path]
        #[arg(long)]
        dt: f64,
        /// One of v, laplace, mean, path [default: v]
        #[arg(long)]
        mode: String,
        /// Local error tolerance of the ODE solver [default: 1e-8]
        #[arg(long)]
        tol: f64,
    }
);

section!(
    /// Branching Brownian motion.
    BbmSection {
        /// Birth rate, or background birth rate with --env [required]
        #[arg(long)]
        lambda: f64,
        /// Death rate [required]
        #[arg(long)]
        mu: f64,
        /// Diffusion coefficient [required]
        #[arg(long)]
        sigma: f64,
        /// Initial particles at the origin [default: 1]
        #[arg(long)]
        n0: u64,
        /// Horizon [required]
        #[arg(long)]
        t_end: f64,
        /// Snapshot times, comma separated [default: t-end]
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<f64>,
        /// Raster prefix: reads <prefix>lambda.asc, <prefix>mu.asc, <prefix>sigma.asc when present
        #[arg(long)]
        env: PathBuf,
        /// Maximum number of alive particles [default: 10000000]
        #[arg(long)]
        cap: usize,
    }
);

section!(
    /// Rescaled particle systems converging to super-Brownian motion.
    SbmSection {
        /// Rescaling index [required]
        #[arg(long)]
        k: u32,
        /// Quadratic branching coefficient of the limit [default: 1]
        #[arg(long)]
        c: f64,
        /// Initial mass placed at the origin [default: 1 unless --init-atoms]
        #[arg(long)]
        x_init: f64,
        /// Initial atoms as x:y:mass triples, comma separated
        #[arg(long, allow_hyphen_values = true)]
        init_atoms: String,
        /// Spatial motion coefficient [default: 1]
        #[arg(long)]
        sigma: f64,
        /// Resample down to this many particles when exceeded [default: off]
        #[arg(long)]
        resample_target: usize,
        /// Resampling check interval [default: t-end / 100]
        #[arg(long)]
        resample_every: f64,
        /// Horizon [required]
        #[arg(long)]
        t_end: f64,
        /// Snapshot times, comma separated [default: t-end]
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<f64>,
        /// Density raster window x0:y0:x1:y1 [default: no rasters]
        #[arg(long, allow_hyphen_values = true)]
        window: String,
        /// Density raster cell size [default: 1]
        #[arg(long)]
        cellsize: f64,
        /// Maximum number of alive particles [default: 10000000]
        #[arg(long)]
        cap: usize,
    }
);

section!(
    /// Coverage, zones, re-coverage and first passage.
    MetricsSection {
        /// Snapshot CSV or measure dump [required, except in pipeline mode]
        #[arg(long = "in")]
        input: PathBuf,
        /// Coverage radius [default: 1]
        #[arg(long)]
        r: f64,
        /// Raster window x0:y0:x1:y1 [required]
        #[arg(long, allow_hyphen_values = true)]
        window: String,
        /// Raster cell size [default: r/2]
        #[arg(long)]
        cellsize: f64,
        /// Radii for first-passage times, comma separated, increasing
        #[arg(long, value_delimiter = ',')]
        radii: Vec<f64>,
        /// Re-coverage deadline; enables the re-coverage report
        #[arg(long)]
        deadline: f64,
        /// Reference time of the re-coverage report [default: first snapshot]
        #[arg(long)]
        reference_time: f64,
        /// Replication analysed for coverage and zones [default: 0]
        #[arg(long)]
        replication: u64,
    }
);

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct CommonArgs {
    /// TOML config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of independent replications [default: 1]
    #[arg(long)]
    pub replications: Option<u64>,
    /// Worker threads [default: available cores]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Prefix of every output path [default: disseminate_]
    #[arg(long)]
    pub out_prefix: Option<String>,
    /// Suppress the summary on stdout
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Gw,
    Csbp,
    Bbm,
    Sbm,
    Metrics,
    Pipeline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Gw => "gw",
            Mode::Csbp => "csbp",
            Mode::Bbm => "bbm",
            Mode::Sbm => "sbm",
            Mode::Metrics => "metrics",
            Mode::Pipeline => "pipeline",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<String>,
    seed: Option<u64>,
    replications: Option<u64>,
    workers: Option<usize>,
    out_prefix: Option<String>,
    #[serde(default)]
    gw: GwSection,
    #[serde(default)]
    csbp: CsbpSection,
    #[serde(default)]
    bbm: BbmSection,
    #[serde(default)]
    sbm: SbmSection,
    #[serde(default)]
    metrics: MetricsSection,
}

/// Fully merged configuration. Output location, worker count and verbosity
/// are excluded from serialization because they never change results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub replications: u64,
    #[serde(skip)]
    pub out_prefix: String,
    #[serde(skip_serializing_if = "is_default")]
    pub gw: GwSection,
    #[serde(skip_serializing_if = "is_default")]
    pub csbp: CsbpSection,
    #[serde(skip_serializing_if = "is_default")]
    pub bbm: BbmSection,
    #[serde(skip_serializing_if = "is_default")]
    pub sbm: SbmSection,
    #[serde(skip_serializing_if = "is_default")]
    pub metrics: MetricsSection,
    #[serde(skip)]
    pub workers: Option<usize>,
    #[serde(skip)]
    pub quiet: bool,
    /// Text of the config file, kept for locating keys in error messages.
    #[serde(skip)]
    source: Option<String>,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// Flag values for each section, as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct FlagSections {
    pub gw: GwSection,
    pub csbp: CsbpSection,
    pub bbm: BbmSection,
    pub sbm: SbmSection,
    pub metrics: MetricsSection,
}

/// 1-based line of `key` inside `[section]` (or at top level when `section`
/// is `None`).
pub fn key_line(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.split(']').next()) {
            current = Some(name.trim().to_string());
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some((k, _)) = t.split_once('=') {
            if k.trim().trim_matches('"') == key {
                return Some(i + 1);
            }
        }
    }
    None
}

fn toml_error(text: &str, err: toml::de::Error) -> Error {
    let line = err.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let msg = err.message().to_string();
    let key = msg
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
        .map(str::to_string)
        .or_else(|| {
            let l = text.lines().nth(line? - 1)?;
            Some(l.split_once('=')?.0.trim().to_string())
        })
        .unwrap_or_else(|| "<file>".to_string());
    Error::Config {
        key,
        line,
        reason: msg,
    }
}

/// Reads and merges a config. `file_text` is the content of `--config`, if any.
pub fn parse_config(
    mode: Mode,
    common: &CommonArgs,
    flags: FlagSections,
    file_text: Option<String>,
) -> Result<ExperimentConfig> {
    let file: FileConfig = match &file_text {
        Some(text) => toml::from_str(text).map_err(|e| toml_error(text, e))?,
        None => FileConfig::default(),
    };
    if let Some(m) = &file.mode {
        if m != mode.name() {
            return Err(Error::Config {
                key: "mode".into(),
                line: file_text.as_deref().and_then(|t| key_line(t, None, "mode")),
                reason: format!("file is for `{m}` but the subcommand is `{}`", mode.name()),
            });
        }
    }
    let cfg = ExperimentConfig {
        mode,
        seed: common.seed.or(file.seed).unwrap_or(0),
        replications: common.replications.or(file.replications).unwrap_or(1),
        out_prefix: common
            .out_prefix
            .clone()
            .or(file.out_prefix)
            .unwrap_or_else(|| "disseminate_".to_string()),
        gw: flags.gw.overlay(file.gw),
        csbp: flags.csbp.overlay(file.csbp),
        bbm: flags.bbm.overlay(file.bbm),
        sbm: flags.sbm.overlay(file.sbm),
        metrics: flags.metrics.overlay(file.metrics),
        workers: common.workers.or(file.workers),
        quiet: common.quiet,
        source: file_text,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads the file named by `--config`, if any.
pub fn read_config_file(common: &CommonArgs) -> Result<Option<String>> {
    common
        .config
        .as_deref()
        .map(|p: &Path| {
            std::fs::read_to_string(p).map_err(|e| Error::config("config", format!("cannot read {}: {e}", p.display())))
        })
        .transpose()
}

impl ExperimentConfig {
    /// Config error for `section.key`, with its file line when known.
    pub fn key_error(&self, section: Option<&str>, key: &str, reason: impl Into<String>) -> Error {
        let name = match section {
            Some(s) => format!("{s}.{key}"),
            None => key.to_string(),
        };
        Error::Config {
            key: name,
            line: self.source.as_deref().and_then(|t| key_line(t, section, key)),
            reason: reason.into(),
        }
    }

    fn require<T: Copy>(&self, section: &str, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| self.key_error(Some(section), key, "required but not set"))
    }

    fn check(&self, section: &str, key: &str, ok: bool, reason: impl Into<String>) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(self.key_error(Some(section), key, reason))
        }
    }

    /// Domain checks performed before anything runs.
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(self.key_error(None, "replications", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(self.key_error(None, "workers", "must be at least 1"));
        }
        let nonneg = |v: Option<f64>| v.is_none_or(|v| v >= 0.0 && v.is_finite());
        let pos = |v: Option<f64>| v.is_none_or(|v| v > 0.0 && v.is_finite());
        match self.mode {
            Mode::Gw => {
                let s = &self.gw;
                self.check("gw", "offspring", s.offspring.is_some(), "required but not set")?;
                self.check("gw", "n0", s.n0 != Some(0), "must be at least 1")?;
            }
            Mode::Csbp => {
                let s = &self.csbp;
                self.check("csbp", "b", s.b.is_none_or(f64::is_finite), "must be finite")?;
                self.check("csbp", "c", nonneg(s.c), "must be ≥ 0")?;
                self.check("csbp", "x0", nonneg(s.x0), "must be ≥ 0")?;
                self.check("csbp", "mu", nonneg(s.mu), "must be ≥ 0")?;
                self.check("csbp", "t", nonneg(s.t), "must be ≥ 0")?;
                self.check("csbp", "dt", pos(s.dt), "must be > 0")?;
                self.check("csbp", "tol", pos(s.tol), "must be > 0")?;
                let mode = s.mode.as_deref().unwrap_or("v");
                self.check(
                    "csbp",
                    "mode",
                    matches!(mode, "v" | "laplace" | "mean" | "path"),
                    format!("`{mode}` is not one of v, laplace, mean, path"),
                )?;
                if mode == "path" {
                    self.check("csbp", "c", s.c.is_some_and(|c| c > 0.0), "path mode needs c > 0")?;
                    self.check("csbp", "atoms", s.atoms.is_none(), "path mode supports the quadratic mechanism only")?;
                }
            }
            Mode::Bbm => self.validate_bbm()?,
            Mode::Sbm => {
                let s = &self.sbm;
                let k = self.require("sbm", "k", s.k)?;
                self.check("sbm", "k", k >= 1, "must be at least 1")?;
                self.require("sbm", "t_end", s.t_end)?;
                self.check("sbm", "t_end", nonneg(s.t_end), "must be ≥ 0")?;
                self.check("sbm", "c", nonneg(s.c), "must be ≥ 0")?;
                self.check("sbm", "sigma", nonneg(s.sigma), "must be ≥ 0")?;
                self.check("sbm", "x_init", nonneg(s.x_init), "must be ≥ 0")?;
                self.check("sbm", "cellsize", pos(s.cellsize), "must be > 0")?;
                self.check("sbm", "resample_every", pos(s.resample_every), "must be > 0")?;
                self.check("sbm", "resample_target", s.resample_target != Some(0), "must be at least 1")?;
                self.check_times("sbm", s.snapshots.as_deref(), s.t_end)?;
            }
            Mode::Metrics => {
                self.check("metrics", "input", self.metrics.input.is_some(), "required but not set")?;
                self.validate_metrics()?;
            }
            Mode::Pipeline => {
                self.validate_bbm()?;
                self.validate_metrics()?;
            }
        }
        Ok(())
    }

    fn validate_bbm(&self) -> Result<()> {
        let s = &self.bbm;
        for (key, v) in [("lambda", s.lambda), ("mu", s.mu), ("sigma", s.sigma), ("t_end", s.t_end)] {
            let v = self.require("bbm", key, v)?;
            self.check("bbm", key, v >= 0.0 && v.is_finite(), format!("must be a finite value ≥ 0, got {v}"))?;
        }
        self.check("bbm", "n0", s.n0 != Some(0), "must be at least 1")?;
        self.check("bbm", "cap", s.cap != Some(0), "must be at least 1")?;
        self.check_times("bbm", s.snapshots.as_deref(), s.t_end)
    }

    fn check_times(&self, section: &str, times: Option<&[f64]>, t_end: Option<f64>) -> Result<()> {
        let Some(times) = times else { return Ok(()) };
        let t_end = t_end.unwrap_or(f64::INFINITY);
        self.check(
            section,
            "snapshots",
            times.iter().all(|t| *t >= 0.0 && *t <= t_end),
            format!("times must lie in [0, {t_end}]"),
        )
    }

    fn validate_metrics(&self) -> Result<()> {
        let s = &self.metrics;
        self.check("metrics", "r", s.r.is_none_or(|r| r > 0.0 && r.is_finite()), "must be > 0")?;
        self.check("metrics", "cellsize", s.cellsize.is_none_or(|c| c > 0.0 && c.is_finite()), "must be > 0")?;
        self.check("metrics", "deadline", s.deadline.is_none_or(|d| d >= 0.0), "must be ≥ 0")?;
        self.check("metrics", "window", s.window.is_some(), "required but not set")?;
        if let Some(radii) = &s.radii {
            self.check(
                "metrics",
                "radii",
                radii.iter().all(|r| *r > 0.0) && radii.windows(2).all(|w| w[1] > w[0]),
                "must be positive and strictly increasing",
            )?;
        }
        Ok(())
    }

    /// Canonical TOML text of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
