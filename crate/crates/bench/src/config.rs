//! Benchmark configuration: CLI flags, an optional TOML file, and the
//! validated [`BenchConfig`] built from both (flags win).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use grabp::{ProbabilityCriterion, StoppingCriterion};
use serde::{Deserialize, Serialize};

use crate::BenchError;

pub const DEFAULT_TRIALS: usize = 10;
pub const DEFAULT_RANDOM_BLOCKS: usize = 10;
pub const DEFAULT_LP_BLOCKS: usize = 5;
pub const DEFAULT_LP_GAP: f64 = 1e-3;

/// Problem source. Written `random-dense:MxN`, `random-sparse:MxN`,
/// `mtx:PATH` or `lp:PATH`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InstanceSpec {
    RandomDense { m: usize, n: usize },
    RandomSparse { m: usize, n: usize },
    Mtx(PathBuf),
    Lp(PathBuf),
}

impl InstanceSpec {
    pub fn is_random(&self) -> bool {
        matches!(self, InstanceSpec::RandomDense { .. } | InstanceSpec::RandomSparse { .. })
    }
}

impl fmt::Display for InstanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceSpec::RandomDense { m, n } => write!(f, "random-dense:{m}x{n}"),
            InstanceSpec::RandomSparse { m, n } => write!(f, "random-sparse:{m}x{n}"),
            InstanceSpec::Mtx(p) => write!(f, "mtx:{}", p.display()),
            InstanceSpec::Lp(p) => write!(f, "lp:{}", p.display()),
        }
    }
}

impl FromStr for InstanceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("expected KIND:ARGS, got `{s}`"))?;
        let dims = |rest: &str| -> Result<(usize, usize), String> {
            let (m, n) = rest
                .split_once(['x', 'X'])
                .ok_or_else(|| format!("expected MxN, got `{rest}`"))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| format!("bad dimension `{v}`"))
            };
            Ok((parse(m)?, parse(n)?))
        };
        match kind {
            "random-dense" => dims(rest).map(|(m, n)| InstanceSpec::RandomDense { m, n }),
            "random-sparse" => dims(rest).map(|(m, n)| InstanceSpec::RandomSparse { m, n }),
            "mtx" if !rest.is_empty() => Ok(InstanceSpec::Mtx(rest.into())),
            "lp" if !rest.is_empty() => Ok(InstanceSpec::Lp(rest.into())),
            _ => Err(format!("unknown instance `{s}`")),
        }
    }
}

impl TryFrom<String> for InstanceSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<InstanceSpec> for String {
    fn from(spec: InstanceSpec) -> String {
        spec.to_string()
    }
}

/// Block count: a number, or `norm2` for `ceil(||A||_2^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockCount {
    Fixed(usize),
    Norm2,
}

impl fmt::Display for BlockCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockCount::Fixed(t) => write!(f, "{t}"),
            BlockCount::Norm2 => f.write_str("norm2"),
        }
    }
}

impl FromStr for BlockCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "norm2" {
            return Ok(BlockCount::Norm2);
        }
        s.parse()
            .map(BlockCount::Fixed)
            .map_err(|_| format!("expected a block count or `norm2`, got `{s}`"))
    }
}

impl Serialize for BlockCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BlockCount::Fixed(t) => s.serialize_u64(*t as u64),
            BlockCount::Norm2 => s.serialize_str("norm2"),
        }
    }
}

impl<'de> Deserialize<'de> for BlockCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(BlockCount::Fixed(t)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Rp,
    Skm,
    GrabpC,
    GrabpA,
    Gskm,
    Paskm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    Pnorm,
    TwoNormPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Solver with its own parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum SolverSpec {
    Rp,
    Skm { beta: Option<usize>, delta: f64 },
    /// Constant stepsize `alpha_scale / zeta`.
    GrabpC { alpha_scale: f64 },
    GrabpA { w: f64 },
    Gskm { beta: Option<usize>, delta: f64 },
    Paskm { beta: Option<usize>, delta: f64 },
}

impl SolverSpec {
    pub fn label(&self) -> &'static str {
        match self {
            SolverSpec::Rp => "rp",
            SolverSpec::Skm { .. } => "skm",
            SolverSpec::GrabpC { .. } => "grabp-c",
            SolverSpec::GrabpA { .. } => "grabp-a",
            SolverSpec::Gskm { .. } => "gskm",
            SolverSpec::Paskm { .. } => "paskm",
        }
    }

    pub fn uses_blocks(&self) -> bool {
        matches!(self, SolverSpec::GrabpC { .. } | SolverSpec::GrabpA { .. })
    }
}

/// Flags shared by `run` and `sweep`. The same fields may be given in a TOML
/// file passed with `--config`, with the flag names in snake case.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// TOML file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// random-dense:MxN | random-sparse:MxN | mtx:PATH | lp:PATH
    #[arg(long)]
    pub instance: Option<InstanceSpec>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    /// Constant stepsize is alpha_scale / zeta (grabp-c).
    #[arg(long)]
    pub alpha_scale: Option<f64>,
    /// Adaptive stepsize weight in (0, 2) (grabp-a).
    #[arg(long)]
    pub w: Option<f64>,
    /// Sample size for skm; defaults to the column count.
    #[arg(long)]
    pub beta: Option<usize>,
    /// Relaxation for skm, in (0, 2).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of blocks, or `norm2`.
    #[arg(long)]
    pub t: Option<BlockCount>,
    /// Independent trials (default 10).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop when RES falls to this value (default 1e-8).
    #[arg(long)]
    pub res_tol: Option<f64>,
    /// Stop when the largest residual entry falls to this fraction of its starting value (LP default 1e-3).
    #[arg(long)]
    pub gap_tol: Option<f64>,
    /// Iteration cap per trial.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Per-trial wall-clock cap in seconds.
    #[arg(long)]
    pub wall_clock: Option<f64>,
    /// Write per-iteration RES to a companion file.
    #[arg(long)]
    pub history: bool,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Greedy threshold weight in [0, 1] (default 0.5).
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub criterion: Option<CriterionKind>,
    /// Exponent of the probability criterion.
    #[arg(long)]
    pub exponent: Option<f64>,
    /// Reuse the first trial's random instance for every trial.
    #[arg(long)]
    pub fix_instance: bool,
    /// Trials run in parallel.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory for the final iterate of each trial.
    #[arg(long)]
    pub dump_solution: Option<PathBuf>,
    /// Record the distance to the feasible set in the history (small problems only).
    #[arg(long)]
    pub track_distance: bool,
    /// Report path; defaults to stdout, or to $GRABP_BENCH_OUT_DIR when set.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl RunArgs {
    /// Fills unset fields from `file`.
    pub fn merge(self, file: RunArgs) -> RunArgs {
        RunArgs {
            config: self.config,
            instance: self.instance.or(file.instance),
            solver: self.solver.or(file.solver),
            alpha_scale: self.alpha_scale.or(file.alpha_scale),
            w: self.w.or(file.w),
            beta: self.beta.or(file.beta),
            delta: self.delta.or(file.delta),
            t: self.t.or(file.t),
            trials: self.trials.or(file.trials),
            seed: self.seed.or(file.seed),
            res_tol: self.res_tol.or(file.res_tol),
            gap_tol: self.gap_tol.or(file.gap_tol),
            max_iters: self.max_iters.or(file.max_iters),
            wall_clock: self.wall_clock.or(file.wall_clock),
            history: self.history || file.history,
            format: self.format.or(file.format),
            theta: self.theta.or(file.theta),
            criterion: self.criterion.or(file.criterion),
            exponent: self.exponent.or(file.exponent),
            fix_instance: self.fix_instance || file.fix_instance,
            jobs: self.jobs.or(file.jobs),
            dump_solution: self.dump_solution.or(file.dump_solution),
            track_distance: self.track_distance || file.track_distance,
            output: self.output.or(file.output),
        }
    }
}

pub fn read_config_file(path: &Path) -> Result<RunArgs, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| BenchError::ConfigFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Fully resolved and validated benchmark settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub instance: InstanceSpec,
    pub solver: SolverSpec,
    pub blocks: BlockCount,
    pub trials: usize,
    pub seed: u64,
    pub stopping: StoppingCriterion,
    pub history: bool,
    pub format: OutputFormat,
    pub theta: f64,
    pub criterion: ProbabilityCriterion,
    pub fix_instance: bool,
    pub jobs: usize,
    pub dump_solution: Option<PathBuf>,
    pub track_distance: bool,
    pub output: Option<PathBuf>,
}

fn usage(field: &'static str, message: impl Into<String>) -> BenchError {
    BenchError::Usage {
        field,
        message: message.into(),
    }
}

fn open_interval(field: &'static str, v: f64, hi: f64) -> Result<f64, BenchError> {
    if v > 0.0 && v < hi {
        Ok(v)
    } else {
        Err(usage(field, format!("{v} is outside the range (0, {hi})")))
    }
}

impl BenchConfig {
    /// Reads `--config` if given, merges it under the flags and validates.
    pub fn from_args(args: RunArgs) -> Result<Self, BenchError> {
        let args = match &args.config {
            Some(path) => {
                let file = read_config_file(path)?;
                args.merge(file)
            }
            None => args,
        };
        Self::resolve(args)
    }

    pub fn resolve(args: RunArgs) -> Result<Self, BenchError> {
        let instance = args.instance.ok_or_else(|| usage("instance", "required"))?;
        let delta = args.delta.map(|d| open_interval("delta", d, 2.0)).transpose()?;
        if args.beta == Some(0) {
            return Err(usage("beta", "must be at least 1"));
        }
        let solver = match args.solver.unwrap_or(SolverKind::GrabpA) {
            SolverKind::Rp => SolverSpec::Rp,
            SolverKind::Skm => SolverSpec::Skm {
                beta: args.beta,
                delta: delta.unwrap_or(1.0),
            },
            SolverKind::GrabpC => SolverSpec::GrabpC {
                alpha_scale: open_interval("alpha_scale", args.alpha_scale.unwrap_or(1.0), 2.0)?,
            },
            SolverKind::GrabpA => SolverSpec::GrabpA {
                w: open_interval("w", args.w.unwrap_or(1.0), 2.0)?,
            },
            SolverKind::Gskm => SolverSpec::Gskm {
                beta: args.beta,
                delta: delta.unwrap_or(1.0),
            },
            SolverKind::Paskm => SolverSpec::Paskm {
                beta: args.beta,
                delta: delta.unwrap_or(1.0),
            },
        };
        let blocks = args.t.unwrap_or(match instance {
            InstanceSpec::Mtx(_) => BlockCount::Norm2,
            InstanceSpec::Lp(_) => BlockCount::Fixed(DEFAULT_LP_BLOCKS),
            _ => BlockCount::Fixed(DEFAULT_RANDOM_BLOCKS),
        });
        if blocks == BlockCount::Fixed(0) {
            return Err(usage("t", "must be at least 1"));
        }
        if let (BlockCount::Fixed(t), InstanceSpec::RandomDense { m, .. } | InstanceSpec::RandomSparse { m, .. }) =
            (blocks, &instance)
        {
            if t > *m {
                return Err(usage("t", format!("{t} blocks exceed the {m} rows")));
            }
        }
        let trials = args.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(usage("trials", "must be at least 1"));
        }
        let jobs = args.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(usage("jobs", "must be at least 1"));
        }
        let theta = args.theta.unwrap_or(grabp::selection::DEFAULT_THETA);
        if !(0.0..=1.0).contains(&theta) {
            return Err(usage("theta", format!("{theta} is outside [0, 1]")));
        }
        let exponent = args.exponent.unwrap_or(2.0);
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(usage("exponent", format!("{exponent} must be positive")));
        }
        let criterion = match args.criterion.unwrap_or(CriterionKind::Pnorm) {
            CriterionKind::Pnorm => ProbabilityCriterion::PNorm { p: exponent },
            CriterionKind::TwoNormPower => ProbabilityCriterion::TwoNormPower { mu: exponent },
        };
        let lp = matches!(instance, InstanceSpec::Lp(_));
        let defaults = StoppingCriterion::default();
        let stopping = StoppingCriterion {
            res_tol: args.res_tol.or(if lp { None } else { defaults.res_tol }),
            gap_tol: args.gap_tol.or(if lp { Some(DEFAULT_LP_GAP) } else { None }),
            max_iters: args.max_iters,
            wall_clock: args.wall_clock.or(defaults.wall_clock),
        };
        stopping
            .validate()
            .map_err(|e| usage("stopping", e.to_string()))?;
        Ok(BenchConfig {
            instance,
            solver,
            blocks,
            trials,
            seed: args.seed.unwrap_or(0),
            stopping,
            history: args.history,
            format: args.format.unwrap_or_default(),
            theta,
            criterion,
            fix_instance: args.fix_instance,
            jobs,
            dump_solution: args.dump_solution,
            track_distance: args.track_distance,
            output: args.output,
        })
    }
}
