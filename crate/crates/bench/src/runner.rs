//! Multi-trial runs and block-count sweeps.

use std::path::PathBuf;

use grabp::problem::{problem_with_synthetic_rhs, random_dense_problem, random_sparse_problem, read_matrix_market};
use grabp::solvers::{GskmParams, HistoryRecord, PaskmParams};
use grabp::{
    linalg, FeasibilityProblem, GrabpConfig, LpInstance, Method, Provenance, RowMatrix, RunOptions, SkmParams,
    StepsizeSpec, StopReason,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BenchConfig, BlockCount, InstanceSpec, SolverSpec};
use crate::BenchError;

pub const SCHEMA_VERSION: u32 = 1;

/// Projection tolerance used when distances are tracked.
pub const DISTANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    /// Resolved block count; absent for the row-action solvers.
    pub t: Option<usize>,
    pub iterations: usize,
    pub seconds: f64,
    pub terminal_res: f64,
    pub res_absolute: bool,
    pub stop_reason: StopReason,
    #[serde(skip)]
    pub history: Option<Vec<HistoryRecord>>,
    #[serde(skip)]
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub trials: usize,
    pub mean_iterations: f64,
    pub mean_seconds: f64,
    pub median_iterations: f64,
    pub forced_trials: usize,
}

impl Aggregates {
    pub fn from_trials(trials: &[TrialRecord]) -> Self {
        let count = trials.len();
        let nf = count as f64;
        let mut its: Vec<usize> = trials.iter().map(|t| t.iterations).collect();
        its.sort_unstable();
        let median = match count {
            0 => f64::NAN,
            c if c % 2 == 1 => its[c / 2] as f64,
            c => (its[c / 2 - 1] + its[c / 2]) as f64 / 2.0,
        };
        Aggregates {
            trials: count,
            mean_iterations: trials.iter().map(|t| t.iterations as f64).sum::<f64>() / nf,
            mean_seconds: trials.iter().map(|t| t.seconds).sum::<f64>() / nf,
            median_iterations: median,
            forced_trials: trials.iter().filter(|t| t.stop_reason.is_forced()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub solver: String,
    pub instance: String,
    pub config: BenchConfig,
    pub trials: Vec<TrialRecord>,
    pub aggregates: Aggregates,
}

impl BenchReport {
    pub fn any_forced(&self) -> bool {
        self.aggregates.forced_trials > 0
    }
}

/// An instance source with any file contents loaded.
#[derive(Debug, Clone)]
pub enum PreparedInstance {
    Random { sparse: bool, m: usize, n: usize },
    Matrix { a: RowMatrix, path: PathBuf },
    Lp { problem: FeasibilityProblem },
}

impl PreparedInstance {
    pub fn load(spec: &InstanceSpec) -> Result<Self, BenchError> {
        Ok(match spec {
            InstanceSpec::RandomDense { m, n } => PreparedInstance::Random {
                sparse: false,
                m: *m,
                n: *n,
            },
            InstanceSpec::RandomSparse { m, n } => PreparedInstance::Random {
                sparse: true,
                m: *m,
                n: *n,
            },
            InstanceSpec::Mtx(path) => PreparedInstance::Matrix {
                a: read_matrix_market(path)?,
                path: path.clone(),
            },
            InstanceSpec::Lp(path) => {
                let lp = LpInstance::read(path)?;
                let stacked = grabp::problem::lp_to_feasibility(&lp)?.with_source(path.clone());
                for d in &stacked.dropped {
                    info!("lp: dropped {:?}", d);
                }
                PreparedInstance::Lp {
                    problem: stacked.problem,
                }
            }
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            PreparedInstance::Random { m, n, .. } => (*m, *n),
            PreparedInstance::Matrix { a, .. } => (a.nrows(), a.ncols()),
            PreparedInstance::Lp { problem } => (problem.nrows(), problem.ncols()),
        }
    }

    /// Random specs draw a whole new instance from `seed`; matrix files get a
    /// new right-hand side; LP instances are fixed.
    pub fn problem(&self, seed: u64) -> Result<FeasibilityProblem, BenchError> {
        Ok(match self {
            PreparedInstance::Random { sparse: false, m, n } => random_dense_problem(*m, *n, seed)?,
            PreparedInstance::Random { sparse: true, m, n } => random_sparse_problem(*m, *n, seed)?,
            PreparedInstance::Matrix { a, path } => problem_with_synthetic_rhs(
                a.clone(),
                seed,
                Provenance::MatrixMarket {
                    path: path.clone(),
                    rhs_seed: Some(seed),
                },
            )?,
            PreparedInstance::Lp { problem } => problem.clone(),
        })
    }
}

/// `ceil(||A||_2^2)`, at least 1.
pub fn norm2_blocks(a: &RowMatrix) -> usize {
    let s = a.spectral_norm_sq(linalg::DEFAULT_SPECTRAL_REL_TOL).value;
    (s.ceil() as usize).max(1)
}

fn resolve_blocks(blocks: BlockCount, a: &RowMatrix) -> Result<usize, BenchError> {
    let t = match blocks {
        BlockCount::Fixed(t) => t,
        BlockCount::Norm2 => norm2_blocks(a),
    };
    if t == 0 || t > a.nrows() {
        return Err(BenchError::Usage {
            field: "t",
            message: format!("{t} blocks for {} rows", a.nrows()),
        });
    }
    Ok(t)
}

fn method_for(config: &BenchConfig, t: usize) -> Method {
    let grabp = |stepsize| {
        Method::Grabp(GrabpConfig {
            blocks: t,
            theta: config.theta,
            criterion: config.criterion,
            stepsize,
        })
    };
    match config.solver {
        SolverSpec::Rp => Method::Rp,
        SolverSpec::Skm { beta, delta } => Method::Skm(SkmParams { beta, delta }),
        SolverSpec::GrabpC { alpha_scale } => grabp(StepsizeSpec::ConstantScaled { scale: alpha_scale }),
        SolverSpec::GrabpA { w } => grabp(StepsizeSpec::Adaptive { w }),
        SolverSpec::Gskm { beta, delta } => Method::Gskm(GskmParams {
            beta,
            delta,
            momentum: 0.0,
        }),
        SolverSpec::Paskm { beta, delta } => Method::Paskm(PaskmParams {
            beta,
            delta,
            momentum: 0.0,
            variant: 2,
        }),
    }
}

/// Trial `i` runs the solver with seed `config.seed + i`. Random instances
/// are drawn from the same seed unless `fix_instance` pins them to
/// `config.seed`.
pub fn run_trial(
    config: &BenchConfig,
    instance: &PreparedInstance,
    trial: usize,
) -> Result<TrialRecord, BenchError> {
    let seed = config.seed.wrapping_add(trial as u64);
    let instance_seed = if config.fix_instance { config.seed } else { seed };
    let problem = instance.problem(instance_seed)?;
    let t = if config.solver.uses_blocks() {
        Some(resolve_blocks(config.blocks, problem.a())?)
    } else {
        None
    };
    let method = method_for(config, t.unwrap_or(1));
    let options = RunOptions {
        record_history: config.history,
        track_distance: config.track_distance.then_some(DISTANCE_TOL),
        x0: None,
    };
    let report = grabp::run(&problem, &method, &config.stopping, seed, &options)?;
    if report.stop_reason.is_forced() {
        warn!("trial {trial} hit the wall-clock cap after {} iterations", report.iterations);
    }
    Ok(TrialRecord {
        trial,
        seed,
        m: problem.nrows(),
        n: problem.ncols(),
        t,
        iterations: report.iterations,
        seconds: report.wall_seconds,
        terminal_res: report.terminal_res,
        res_absolute: report.res_absolute,
        stop_reason: report.stop_reason,
        history: report.history,
        x: report.x,
    })
}

pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    let instance = PreparedInstance::load(&config.instance)?;
    run_prepared(config, &instance)
}

pub fn run_prepared(config: &BenchConfig, instance: &PreparedInstance) -> Result<BenchReport, BenchError> {
    if let BlockCount::Fixed(t) = config.blocks {
        let (m, _) = instance.dims();
        if config.solver.uses_blocks() && t > m {
            return Err(BenchError::Usage {
                field: "t",
                message: format!("{t} blocks exceed the {m} rows"),
            });
        }
    }
    let trials: Vec<TrialRecord> = if config.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| BenchError::Usage {
                field: "jobs",
                message: e.to_string(),
            })?;
        pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|i| run_trial(config, instance, i))
                .collect::<Result<_, _>>()
        })?
    } else {
        (0..config.trials)
            .map(|i| run_trial(config, instance, i))
            .collect::<Result<_, _>>()?
    };
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        solver: config.solver.label().to_string(),
        instance: config.instance.to_string(),
        config: config.clone(),
        aggregates: Aggregates::from_trials(&trials),
        trials,
    })
}

/// One report per block count, all sharing the base seed. Counts above the
/// row count are skipped with a warning.
pub fn block_sweep(template: &BenchConfig, t_list: &[BlockCount]) -> Result<Vec<BenchReport>, BenchError> {
    let instance = PreparedInstance::load(&template.instance)?;
    let (m, _) = instance.dims();
    let mut reports = Vec::with_capacity(t_list.len());
    for &blocks in t_list {
        if let BlockCount::Fixed(t) = blocks {
            if t == 0 || t > m {
                warn!("skipping t = {t}: the instance has {m} rows");
                continue;
            }
        }
        let config = BenchConfig {
            blocks,
            ..template.clone()
        };
        reports.push(run_prepared(&config, &instance)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{OutputFormat, SolverSpec};
    use grabp::{ProbabilityCriterion, StoppingCriterion};

    pub(crate) fn small_config(solver: SolverSpec) -> BenchConfig {
        BenchConfig {
            instance: InstanceSpec::RandomDense { m: 60, n: 6 },
            solver,
            blocks: BlockCount::Fixed(4),
            trials: 3,
            seed: 5,
            stopping: StoppingCriterion::default(),
            history: true,
            format: OutputFormat::Csv,
            theta: 0.5,
            criterion: ProbabilityCriterion::default(),
            fix_instance: false,
            jobs: 1,
            dump_solution: None,
            track_distance: false,
            output: None,
        }
    }

    #[test]
    fn aggregates_are_means() {
        let r = run_benchmark(&small_config(SolverSpec::GrabpA { w: 1.95 })).unwrap();
        assert_eq!(r.trials.len(), 3);
        let mean = r.trials.iter().map(|t| t.iterations as f64).sum::<f64>() / 3.0;
        assert_eq!(r.aggregates.mean_iterations, mean);
        assert_eq!(r.trials.iter().map(|t| t.seed).collect::<Vec<_>>(), vec![5, 6, 7]);
        assert!(r.trials.iter().all(|t| t.t == Some(4)));
    }

    #[test]
    fn reports_are_deterministic_and_parallel_safe() {
        let c = small_config(SolverSpec::Rp);
        let a = run_benchmark(&c).unwrap();
        let b = run_benchmark(&BenchConfig { jobs: 3, ..c }).unwrap();
        let key = |r: &BenchReport| {
            r.trials
                .iter()
                .map(|t| (t.iterations, t.terminal_res, t.x.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn fixed_instance_shares_the_matrix() {
        let c = BenchConfig {
            fix_instance: true,
            ..small_config(SolverSpec::GrabpC { alpha_scale: 1.0 })
        };
        let inst = PreparedInstance::load(&c.instance).unwrap();
        let a = inst.problem(c.seed).unwrap();
        let r = run_benchmark(&c).unwrap();
        // trial 0 under fix_instance and without it use the same instance
        let r0 = run_trial(&BenchConfig { fix_instance: false, ..c.clone() }, &inst, 0).unwrap();
        assert_eq!(r.trials[0].x, r0.x);
        assert_eq!(a.nrows(), r.trials[2].m);
    }

    #[test]
    fn sweep_skips_oversized_block_counts() {
        let c = small_config(SolverSpec::GrabpA { w: 1.0 });
        let reports = block_sweep(&c, &[BlockCount::Fixed(2), BlockCount::Fixed(100), BlockCount::Fixed(6)]).unwrap();
        assert_eq!(reports.len(), 2);
        let single = block_sweep(&c, &[BlockCount::Fixed(4)]).unwrap();
        let direct = run_benchmark(&c).unwrap();
        let its = |r: &BenchReport| r.trials.iter().map(|t| t.iterations).collect::<Vec<_>>();
        assert_eq!(its(&single[0]), its(&direct));
    }

    #[test]
    fn unimplemented_solver_is_an_error() {
        let c = small_config(SolverSpec::Gskm { beta: None, delta: 1.0 });
        assert!(matches!(run_benchmark(&c), Err(BenchError::Solver(_))));
    }
}
