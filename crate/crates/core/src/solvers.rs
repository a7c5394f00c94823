//! Iterative kernels for `Ax <= b` and the run loop around them.
//!
//! * [`Grabp`]: greedy randomized average block projection with a constant
//!   or adaptive extrapolated stepsize.
//! * [`RandomizedProjection`]: one halfspace per step, rows drawn with
//!   probability proportional to their squared norm.
//! * [`Skm`]: sampling Kaczmarz–Motzkin.
//! * [`gskm_step`], [`paskm_step`]: parameter records only.

use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, Projector};
use crate::linalg::{self, ColumnIndex, LinalgError, RowMatrix};
use crate::problem::FeasibilityProblem;
use crate::rng::{seeded, SolverRng, Stream};
use crate::selection::{self, Partition, ProbabilityCriterion, SelectionError, DEFAULT_THETA};

/// Largest `m * m` for which Gram columns are cached by the row-action methods.
pub const GRAM_CACHE_ENTRIES: usize = 1 << 22;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("{0} is not implemented")]
    Unimplemented(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Resolved stepsize rule together with the `zeta` it was checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepsizePolicy {
    /// Fixed `alpha` with `0 < alpha * zeta < 2`.
    Constant { alpha: f64, zeta: f64 },
    /// `alpha_k = w ||r_+||^2 ||A_I||_F^2 / ||A_I^T r_+||^2` with `0 < w < 2`.
    Adaptive { w: f64, zeta: f64 },
}

impl StepsizePolicy {
    pub fn constant(alpha: f64, zeta: f64) -> Result<Self, SolverError> {
        let p = StepsizePolicy::Constant { alpha, zeta };
        p.validate().map(|_| p)
    }

    pub fn adaptive(w: f64, zeta: f64) -> Result<Self, SolverError> {
        let p = StepsizePolicy::Adaptive { w, zeta };
        p.validate().map(|_| p)
    }

    pub fn zeta(&self) -> f64 {
        match *self {
            StepsizePolicy::Constant { zeta, .. } | StepsizePolicy::Adaptive { zeta, .. } => zeta,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let zeta = self.zeta();
        if !(zeta > 0.0 && zeta <= 1.0 + 1e-12) {
            return Err(SolverError::InvalidConfig(format!("zeta {zeta} outside (0, 1]")));
        }
        match *self {
            StepsizePolicy::Constant { alpha, zeta } => {
                let s = alpha * zeta;
                if s > 0.0 && s < 2.0 {
                    Ok(())
                } else {
                    Err(SolverError::InvalidConfig(format!(
                        "alpha must lie in (0, 2/zeta) = (0, {}), got {alpha}",
                        2.0 / zeta
                    )))
                }
            }
            StepsizePolicy::Adaptive { w, .. } => {
                if w > 0.0 && w < 2.0 {
                    Ok(())
                } else {
                    Err(SolverError::InvalidConfig(format!("w must lie in (0, 2), got {w}")))
                }
            }
        }
    }
}

/// Stepsize as configured, before `zeta` is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepsizeSpec {
    /// `alpha = scale / zeta`.
    ConstantScaled { scale: f64 },
    Constant { alpha: f64 },
    Adaptive { w: f64 },
}

impl StepsizeSpec {
    pub fn resolve(&self, zeta: f64) -> Result<StepsizePolicy, SolverError> {
        match *self {
            StepsizeSpec::ConstantScaled { scale } => StepsizePolicy::constant(scale / zeta, zeta),
            StepsizeSpec::Constant { alpha } => StepsizePolicy::constant(alpha, zeta),
            StepsizeSpec::Adaptive { w } => StepsizePolicy::adaptive(w, zeta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrabpConfig {
    /// Number of blocks.
    pub blocks: usize,
    pub theta: f64,
    pub criterion: ProbabilityCriterion,
    pub stepsize: StepsizeSpec,
}

impl GrabpConfig {
    pub fn new(blocks: usize, stepsize: StepsizeSpec) -> Self {
        GrabpConfig {
            blocks,
            theta: DEFAULT_THETA,
            criterion: ProbabilityCriterion::default(),
            stepsize,
        }
    }
}

/// Sampling Kaczmarz–Motzkin parameters. `beta = None` means `n`, clamped to
/// `[1, m]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkmParams {
    pub beta: Option<usize>,
    pub delta: f64,
}

impl Default for SkmParams {
    fn default() -> Self {
        SkmParams { beta: None, delta: 1.0 }
    }
}

impl SkmParams {
    pub fn sample_size(&self, m: usize, n: usize) -> usize {
        self.beta.unwrap_or(n).clamp(1, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GskmParams {
    pub beta: Option<usize>,
    pub delta: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaskmParams {
    pub beta: Option<usize>,
    pub delta: f64,
    pub momentum: f64,
    pub variant: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Rp,
    Skm(SkmParams),
    Grabp(GrabpConfig),
    Gskm(GskmParams),
    Paskm(PaskmParams),
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Rp => "rp",
            Method::Skm(_) => "skm",
            Method::Grabp(c) => match c.stepsize {
                StepsizeSpec::Adaptive { .. } => "grabp-a",
                _ => "grabp-c",
            },
            Method::Gskm(_) => "gskm",
            Method::Paskm(_) => "paskm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub res: f64,
    pub distance: Option<f64>,
}

/// Iterate, counter, cached residual `Ax - b`, generator and history.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub k: usize,
    pub residual: Vec<f64>,
    pub rng: SolverRng,
    pub history: Option<Vec<HistoryRecord>>,
}

impl SolverState {
    pub fn new(problem: &FeasibilityProblem, x: Vec<f64>, rng: SolverRng) -> Result<Self, SolverError> {
        let residual = problem.residual(&x)?;
        Ok(SolverState {
            x,
            k: 0,
            residual,
            rng,
            history: None,
        })
    }

    /// Recomputes the cached residual from `x`.
    pub fn refresh(&mut self, problem: &FeasibilityProblem) {
        problem
            .a()
            .residual_into(&self.x, problem.b(), &mut self.residual)
            .expect("state dimensions fixed at construction");
    }
}

/// `||(Ax - b)_+|| / ||b||`, or the absolute violation when `b = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Res {
    pub value: f64,
    pub absolute: bool,
}

pub fn res(problem: &FeasibilityProblem, x: &[f64]) -> Result<Res, SolverError> {
    Ok(res_from_residual(problem, &problem.residual(x)?))
}

fn res_from_residual(problem: &FeasibilityProblem, residual: &[f64]) -> Res {
    let viol = linalg::positive_sum_of_squares(residual).sqrt();
    if problem.b_norm() > 0.0 {
        Res {
            value: viol / problem.b_norm(),
            absolute: false,
        }
    } else {
        Res {
            value: viol,
            absolute: true,
        }
    }
}

/// `max(Ax - b) / max(Ax0 - b)`; `None` when `x0` already has no violated row.
pub fn gap_ratio(problem: &FeasibilityProblem, x: &[f64], x0: &[f64]) -> Result<Option<f64>, SolverError> {
    let base = max_entry(&problem.residual(x0)?);
    if base <= 0.0 {
        return Ok(None);
    }
    Ok(Some(max_entry(&problem.residual(x)?) / base))
}

fn max_entry(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// How the row-action methods keep `Ax - b` current after `x -= s a_i`.
#[derive(Debug)]
enum ResidualUpdate {
    /// Lazily filled columns of `A A^T`.
    Gram(Vec<Option<Box<[f64]>>>),
    Columns(ColumnIndex),
    Full,
}

#[derive(Debug)]
struct ResidualTracker {
    update: ResidualUpdate,
    since_refresh: usize,
    refresh_every: usize,
    row_buf: Vec<f64>,
}

impl ResidualTracker {
    fn new(a: &RowMatrix) -> Self {
        let m = a.nrows();
        let update = if a.is_sparse() {
            ResidualUpdate::Columns(a.columns())
        } else if m.saturating_mul(m) <= GRAM_CACHE_ENTRIES {
            ResidualUpdate::Gram(vec![None; m])
        } else {
            ResidualUpdate::Full
        };
        ResidualTracker {
            update,
            since_refresh: 0,
            refresh_every: m.max(1),
            row_buf: vec![0.0; a.ncols()],
        }
    }

    fn is_exact(&self) -> bool {
        matches!(self.update, ResidualUpdate::Full)
    }

    /// Accounts for `x -= s a_i`, which has already been applied to `state.x`.
    fn apply(&mut self, problem: &FeasibilityProblem, state: &mut SolverState, i: usize, s: f64) {
        self.since_refresh += 1;
        if self.since_refresh >= self.refresh_every || matches!(self.update, ResidualUpdate::Full) {
            self.since_refresh = 0;
            state.refresh(problem);
            return;
        }
        let a = problem.a();
        match &mut self.update {
            ResidualUpdate::Gram(cols) => {
                let col = cols[i].get_or_insert_with(|| {
                    self.row_buf.iter_mut().for_each(|v| *v = 0.0);
                    a.row(i).axpy(1.0, &mut self.row_buf);
                    (0..a.nrows()).map(|k| a.row(k).dot(&self.row_buf)).collect()
                });
                state.residual.iter_mut().zip(col.iter()).for_each(|(r, g)| *r -= s * g);
            }
            ResidualUpdate::Columns(cols) => {
                a.row(i).for_each(|j, v| cols.axpy_column(j, -s * v, &mut state.residual));
            }
            ResidualUpdate::Full => unreachable!(),
        }
    }
}

/// Randomized projection onto one halfspace per step.
#[derive(Debug)]
pub struct RandomizedProjection {
    rows: WeightedIndex<f64>,
    tracker: ResidualTracker,
}

impl RandomizedProjection {
    pub fn new(problem: &FeasibilityProblem) -> Result<Self, SolverError> {
        let rows = WeightedIndex::new(problem.a().row_norms_sq().iter().copied())
            .map_err(|e| SolverError::InvalidConfig(e.to_string()))?;
        Ok(RandomizedProjection {
            rows,
            tracker: ResidualTracker::new(problem.a()),
        })
    }

    /// Returns the drawn row.
    pub fn step(&mut self, problem: &FeasibilityProblem, state: &mut SolverState) -> usize {
        let i = self.rows.sample(&mut state.rng);
        project_row(problem, state, &mut self.tracker, i, 1.0);
        i
    }
}

/// `x -= relax * (a_i x - b_i)_+ / ||a_i||^2 * a_i`.
fn project_row(
    problem: &FeasibilityProblem,
    state: &mut SolverState,
    tracker: &mut ResidualTracker,
    i: usize,
    relax: f64,
) {
    let a = problem.a();
    let row = a.row(i);
    let r = row.dot(&state.x) - problem.b()[i];
    if r <= 0.0 {
        return;
    }
    let s = relax * r / a.row_norm_sq(i);
    row.axpy(-s, &mut state.x);
    tracker.apply(problem, state, i, s);
}

/// Sampling Kaczmarz–Motzkin: among `beta` rows drawn uniformly without
/// replacement, project onto the one with the largest normalized violation
/// `(a_i x - b_i)_+ / ||a_i||`, relaxed by `delta`.
#[derive(Debug)]
pub struct Skm {
    beta: usize,
    delta: f64,
    perm: Vec<usize>,
    tracker: ResidualTracker,
}

impl Skm {
    pub fn new(problem: &FeasibilityProblem, params: SkmParams) -> Result<Self, SolverError> {
        if !(params.delta > 0.0 && params.delta < 2.0) {
            return Err(SolverError::InvalidConfig(format!(
                "delta must lie in (0, 2), got {}",
                params.delta
            )));
        }
        let m = problem.nrows();
        if let Some(b) = params.beta {
            if b == 0 || b > m {
                return Err(SolverError::InvalidConfig(format!("beta must lie in [1, {m}], got {b}")));
            }
        }
        Ok(Skm {
            beta: params.sample_size(m, problem.ncols()),
            delta: params.delta,
            perm: (0..m).collect(),
            tracker: ResidualTracker::new(problem.a()),
        })
    }

    pub fn sample_size(&self) -> usize {
        self.beta
    }

    /// Returns the selected row, or `None` when no sampled row is violated.
    pub fn step(&mut self, problem: &FeasibilityProblem, state: &mut SolverState) -> Option<usize> {
        let m = self.perm.len();
        for k in 0..self.beta {
            let j = state.rng.random_range(k..m);
            self.perm.swap(k, j);
        }
        let a = problem.a();
        let mut best: Option<(usize, f64)> = None;
        for &i in &self.perm[..self.beta] {
            let r = state.residual[i];
            if r > 0.0 {
                let score = r / a.row_norm_sq(i).sqrt();
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((i, score));
                }
            }
        }
        let (i, _) = best?;
        project_row(problem, state, &mut self.tracker, i, self.delta);
        Some(i)
    }
}

/// Quantities of one greedy block step.
#[derive(Debug, Clone, PartialEq)]
pub struct GrabpStep {
    pub block: usize,
    pub alpha: f64,
    /// `||(A_I x - b_I)_+||^2 / ||A_I||_F^2` for the chosen block at the old iterate.
    pub block_term: f64,
    pub epsilon: f64,
    pub admitted: usize,
}

/// Greedy randomized average block projection.
#[derive(Debug, Clone)]
pub struct Grabp {
    partition: Partition,
    policy: StepsizePolicy,
    theta: f64,
    criterion: ProbabilityCriterion,
    block_residual: Vec<f64>,
    direction: Vec<f64>,
}

impl Grabp {
    /// Draws the partition from `rng`, then computes `zeta`.
    pub fn new<R: Rng + ?Sized>(
        problem: &FeasibilityProblem,
        config: &GrabpConfig,
        rng: &mut R,
    ) -> Result<Self, SolverError> {
        let partition = Partition::random(problem.a(), config.blocks, rng)?;
        Self::with_partition(problem, partition, config.theta, config.criterion, config.stepsize)
    }

    pub fn with_partition(
        problem: &FeasibilityProblem,
        partition: Partition,
        theta: f64,
        criterion: ProbabilityCriterion,
        stepsize: StepsizeSpec,
    ) -> Result<Self, SolverError> {
        if partition.nrows() != problem.nrows() {
            return Err(SolverError::InvalidConfig("partition does not match the matrix".into()));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(SelectionError::InvalidTheta(theta).into());
        }
        criterion.validate()?;
        let policy = stepsize.resolve(analysis::zeta(problem.a(), &partition))?;
        Ok(Grabp {
            partition,
            policy,
            theta,
            criterion,
            block_residual: Vec::new(),
            direction: vec![0.0; problem.ncols()],
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn policy(&self) -> &StepsizePolicy {
        &self.policy
    }

    pub fn zeta(&self) -> f64 {
        self.policy.zeta()
    }

    /// One iteration from `state.x`, which must not be feasible.
    /// `state.residual` must be current on entry and is current on return.
    pub fn step(&mut self, problem: &FeasibilityProblem, state: &mut SolverState) -> Result<GrabpStep, SolverError> {
        let a = problem.a();
        let sel = selection::greedy_select(a, &self.partition, &state.residual, self.theta, self.criterion)?;
        let chosen = selection::sample_block(&sel.probabilities, &mut state.rng);
        let block = &self.partition.blocks()[chosen];

        self.block_residual.clear();
        self.block_residual
            .extend(block.rows().iter().map(|&i| state.residual[i].max(0.0)));
        let residual_sq = linalg::sum_of_squares(&self.block_residual);
        if !(residual_sq > 0.0) {
            return Err(SolverError::Internal(format!(
                "selected block {chosen} has no violated row"
            )));
        }
        let view = block.view(a);
        view.transpose_apply_into(&self.block_residual, &mut self.direction)?;
        let frob = block.frob_sq();
        let alpha = match self.policy {
            StepsizePolicy::Constant { alpha, .. } => alpha,
            StepsizePolicy::Adaptive { w, .. } if block.len() == 1 => w,
            StepsizePolicy::Adaptive { w, .. } => {
                w * residual_sq * frob / linalg::sum_of_squares(&self.direction)
            }
        };
        let scale = alpha / frob;
        state.x.iter_mut().zip(&self.direction).for_each(|(x, d)| *x -= scale * d);
        state.refresh(problem);
        Ok(GrabpStep {
            block: chosen,
            alpha,
            block_term: residual_sq / frob,
            epsilon: sel.epsilon,
            admitted: sel.admitted.len(),
        })
    }
}

pub fn gskm_step(
    _problem: &FeasibilityProblem,
    _state: &mut SolverState,
    _params: &GskmParams,
) -> Result<(), SolverError> {
    Err(SolverError::Unimplemented("generalized sampling Kaczmarz-Motzkin"))
}

pub fn paskm_step(
    _problem: &FeasibilityProblem,
    _state: &mut SolverState,
    _params: &PaskmParams,
) -> Result<(), SolverError> {
    Err(SolverError::Unimplemented("probably accelerated sampling Kaczmarz-Motzkin"))
}

/// Stopping bounds; the first one hit ends the run. A run also stops as soon
/// as the iterate is feasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingCriterion {
    pub res_tol: Option<f64>,
    /// Tolerance on `max(Ax - b) / max(Ax0 - b)`.
    pub gap_tol: Option<f64>,
    pub max_iters: Option<usize>,
    /// Seconds, checked between iterations.
    pub wall_clock: Option<f64>,
}

impl Default for StoppingCriterion {
    fn default() -> Self {
        StoppingCriterion {
            res_tol: Some(1e-8),
            gap_tol: None,
            max_iters: None,
            wall_clock: Some(50.0),
        }
    }
}

impl StoppingCriterion {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.res_tol.is_none() && self.gap_tol.is_none() && self.max_iters.is_none() && self.wall_clock.is_none() {
            return Err(SolverError::InvalidConfig("no stopping bound set".into()));
        }
        for (name, v) in [("res_tol", self.res_tol), ("gap_tol", self.gap_tol), ("wall_clock", self.wall_clock)] {
            if let Some(v) = v {
                if !(v >= 0.0) || v.is_nan() {
                    return Err(SolverError::InvalidConfig(format!("{name} must be nonnegative, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Feasible,
    ResTolerance,
    GapTolerance,
    MaxIterations,
    /// Forced stop by the wall-clock cap.
    WallClock,
}

impl StopReason {
    pub fn is_forced(&self) -> bool {
        matches!(self, StopReason::WallClock)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Feasible => "feasible",
            StopReason::ResTolerance => "res-tolerance",
            StopReason::GapTolerance => "gap-tolerance",
            StopReason::MaxIterations => "max-iterations",
            StopReason::WallClock => "wall-clock",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub record_history: bool,
    /// Adds the distance to `S` to each history record, computed with the
    /// projection oracle at this tolerance. Only practical for small problems.
    pub track_distance: Option<f64>,
    /// Starting point; zero when absent.
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub seed: u64,
    pub iterations: usize,
    /// Solve loop only, including partition and `zeta` setup.
    pub wall_seconds: f64,
    /// Recomputed from the returned iterate.
    pub terminal_res: f64,
    /// `true` when `||b|| = 0` and `terminal_res` is the absolute violation.
    pub res_absolute: bool,
    pub stop_reason: StopReason,
    pub x: Vec<f64>,
    pub history: Option<Vec<HistoryRecord>>,
}

enum Kernel {
    Rp(RandomizedProjection),
    Skm(Skm),
    Grabp(Grabp),
}

impl Kernel {
    fn exact_residual(&self) -> bool {
        match self {
            Kernel::Rp(k) => k.tracker.is_exact(),
            Kernel::Skm(k) => k.tracker.is_exact(),
            Kernel::Grabp(_) => true,
        }
    }

    fn step(&mut self, problem: &FeasibilityProblem, state: &mut SolverState) -> Result<(), SolverError> {
        match self {
            Kernel::Rp(k) => {
                k.step(problem, state);
            }
            Kernel::Skm(k) => {
                k.step(problem, state);
            }
            Kernel::Grabp(k) => {
                k.step(problem, state)?;
            }
        }
        Ok(())
    }
}

/// Runs `method` from `options.x0` (or zero) until a stopping rule fires.
///
/// All randomness comes from the solver stream of `seed`; for GRABP the
/// partition is drawn first. Checks run in the order feasibility / RES, gap,
/// iteration count, wall clock.
pub fn run(
    problem: &FeasibilityProblem,
    method: &Method,
    stopping: &StoppingCriterion,
    seed: u64,
    options: &RunOptions,
) -> Result<RunReport, SolverError> {
    stopping.validate()?;
    let n = problem.ncols();
    let x0 = match &options.x0 {
        Some(x) if x.len() != n => {
            return Err(LinalgError::DimensionMismatch {
                what: "x0",
                expected: n,
                actual: x.len(),
            }
            .into())
        }
        Some(x) => x.clone(),
        None => vec![0.0; n],
    };
    let start = Instant::now();
    let mut rng = seeded(seed, Stream::Solver);
    let mut kernel = match method {
        Method::Rp => Kernel::Rp(RandomizedProjection::new(problem)?),
        Method::Skm(p) => Kernel::Skm(Skm::new(problem, *p)?),
        Method::Grabp(c) => Kernel::Grabp(Grabp::new(problem, c, &mut rng)?),
        Method::Gskm(p) => {
            let mut state = SolverState::new(problem, x0, rng)?;
            gskm_step(problem, &mut state, p)?;
            unreachable!()
        }
        Method::Paskm(p) => {
            let mut state = SolverState::new(problem, x0, rng)?;
            paskm_step(problem, &mut state, p)?;
            unreachable!()
        }
    };
    let mut state = SolverState::new(problem, x0, rng)?;
    let gap_base = max_entry(&state.residual);
    let mut projector = options.track_distance.map(|_| Projector::new(problem));
    if options.record_history {
        state.history = Some(Vec::new());
    }

    let check = |state: &SolverState| -> Option<StopReason> {
        let r = res_from_residual(problem, &state.residual);
        if r.value == 0.0 {
            return Some(StopReason::Feasible);
        }
        if stopping.res_tol.is_some_and(|tol| r.value <= tol) {
            return Some(StopReason::ResTolerance);
        }
        if let Some(tol) = stopping.gap_tol {
            if gap_base <= 0.0 || max_entry(&state.residual) / gap_base <= tol {
                return Some(StopReason::GapTolerance);
            }
        }
        None
    };

    let reason = loop {
        let mut reason = check(&state);
        if reason.is_some() && !kernel.exact_residual() {
            state.refresh(problem);
            reason = check(&state);
        }
        if reason.is_none() {
            if stopping.max_iters.is_some_and(|k| state.k >= k) {
                reason = Some(StopReason::MaxIterations);
            } else if stopping.wall_clock.is_some_and(|cap| start.elapsed().as_secs_f64() >= cap) {
                reason = Some(StopReason::WallClock);
            }
        }
        if let Some(history) = state.history.as_mut() {
            let distance = match (&mut projector, options.track_distance) {
                (Some(p), Some(tol)) => Some(p.distance(&state.x, tol)?),
                _ => None,
            };
            history.push(HistoryRecord {
                iteration: state.k,
                res: res_from_residual(problem, &state.residual).value,
                distance,
            });
        }
        if let Some(r) = reason {
            break r;
        }
        kernel.step(problem, &mut state)?;
        state.k += 1;
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    state.refresh(problem);
    let terminal = res_from_residual(problem, &state.residual);
    Ok(RunReport {
        method: method.label().to_string(),
        seed,
        iterations: state.k,
        wall_seconds,
        terminal_res: terminal.value,
        res_absolute: terminal.absolute,
        stop_reason: reason,
        x: state.x,
        history: state.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::distance_to_s;
    use crate::problem::{random_dense_problem, random_sparse_problem, Provenance};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn problem(rows: &[Vec<f64>], b: &[f64]) -> FeasibilityProblem {
        FeasibilityProblem::new(RowMatrix::from_rows(rows).unwrap(), b.to_vec(), Provenance::Custom).unwrap()
    }

    fn state(p: &FeasibilityProblem, x: Vec<f64>, seed: u64) -> SolverState {
        SolverState::new(p, x, seeded(seed, Stream::Solver)).unwrap()
    }

    #[test]
    fn res_and_gap_examples() {
        let p = problem(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 1.0]);
        let r = res(&p, &[2.0, 0.0]).unwrap();
        assert!((r.value - 1.0 / 2f64.sqrt()).abs() < 1e-15 && !r.absolute);
        assert_eq!(res(&p, &[0.0, 0.0]).unwrap().value, 0.0);
        let scaled = problem(&[vec![3.0, 0.0], vec![0.0, 3.0]], &[3.0, 3.0]);
        assert!((res(&scaled, &[2.0, 0.0]).unwrap().value - r.value).abs() < 1e-15);

        let z = problem(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]);
        assert!(res(&z, &[1.0, 0.0]).unwrap().absolute);
        assert_eq!(gap_ratio(&z, &[1.0, 0.5], &[2.0, 1.0]).unwrap(), Some(0.5));
        assert_eq!(gap_ratio(&z, &[2.0, 1.0], &[2.0, 1.0]).unwrap(), Some(1.0));
        assert!(gap_ratio(&z, &[-1.0, -1.0], &[2.0, 1.0]).unwrap().unwrap() <= 0.0);
        assert_eq!(gap_ratio(&z, &[1.0, 1.0], &[-1.0, 0.0]).unwrap(), None);
    }

    #[test]
    fn rp_projects_onto_halfplane() {
        let p = problem(&[vec![1.0, 0.0]], &[0.0]);
        let mut kernel = RandomizedProjection::new(&p).unwrap();
        let mut s = state(&p, vec![3.0, 7.0], 1);
        kernel.step(&p, &mut s);
        assert_eq!(s.x, vec![0.0, 7.0]);
        kernel.step(&p, &mut s);
        assert_eq!(s.x, vec![0.0, 7.0]);
    }

    #[test]
    fn rp_row_satisfied_after_step() {
        let p = random_dense_problem(30, 6, 2).unwrap();
        let mut kernel = RandomizedProjection::new(&p).unwrap();
        let mut s = state(&p, vec![5.0; 6], 2);
        for _ in 0..200 {
            let i = kernel.step(&p, &mut s);
            let r = p.a().row(i).dot(&s.x) - p.b()[i];
            assert!(r <= 1e-12 * (1.0 + p.b()[i].abs()));
            let exact = p.residual(&s.x).unwrap();
            assert!(exact.iter().zip(&s.residual).all(|(u, v)| (u - v).abs() <= 1e-10));
        }
    }

    #[test]
    fn tracker_modes_agree_with_exact_residual() {
        let sparse = random_sparse_problem(300, 40, 4).unwrap();
        let mut kernel = Skm::new(&sparse, SkmParams::default()).unwrap();
        let mut s = state(&sparse, vec![2.0; 40], 4);
        for _ in 0..500 {
            kernel.step(&sparse, &mut s);
        }
        let exact = sparse.residual(&s.x).unwrap();
        assert!(exact.iter().zip(&s.residual).all(|(u, v)| (u - v).abs() <= 1e-10));
    }

    #[test]
    fn skm_full_sample_is_motzkin() {
        // one violated row; full sample must pick it and match the RP projection
        let p = problem(&[vec![1.0, 1.0], vec![2.0, -1.0], vec![0.0, 1.0]], &[1.0, 10.0, 10.0]);
        let mut skm = Skm::new(&p, SkmParams { beta: Some(3), delta: 1.0 }).unwrap();
        let mut s = state(&p, vec![2.0, 2.0], 0);
        assert_eq!(skm.step(&p, &mut s), Some(0));
        // rp oracle on row 0: x - (4 - 1)/2 * (1, 1)
        assert_eq!(s.x, vec![0.5, 0.5]);
        assert_eq!(skm.step(&p, &mut s), None);
        assert_eq!(s.x, vec![0.5, 0.5]);
    }

    #[test]
    fn skm_rejects_bad_params() {
        let p = random_dense_problem(10, 3, 0).unwrap();
        assert!(Skm::new(&p, SkmParams { beta: Some(0), delta: 1.0 }).is_err());
        assert!(Skm::new(&p, SkmParams { beta: Some(11), delta: 1.0 }).is_err());
        assert!(Skm::new(&p, SkmParams { beta: None, delta: 2.0 }).is_err());
        assert_eq!(Skm::new(&p, SkmParams::default()).unwrap().sample_size(), 3);
    }

    #[test]
    fn single_block_constant_one_is_average_projection() {
        let p = random_dense_problem(8, 3, 5).unwrap();
        let part = Partition::whole(p.a());
        let mut g = Grabp::with_partition(
            &p,
            part,
            DEFAULT_THETA,
            ProbabilityCriterion::default(),
            StepsizeSpec::Constant { alpha: 1.0 },
        )
        .unwrap();
        let x0 = vec![4.0, -3.0, 2.0];
        let mut s = state(&p, x0.clone(), 5);
        g.step(&p, &mut s).unwrap();
        let r = linalg::positive_part(&p.residual(&x0).unwrap());
        let mut atr = vec![0.0; 3];
        p.a().transpose_apply_into(&r, &mut atr).unwrap();
        let f = p.a().frob_sq();
        for j in 0..3 {
            assert!((s.x[j] - (x0[j] - atr[j] / f)).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_adaptive_is_scaled_rp() {
        let p = random_dense_problem(12, 4, 6).unwrap();
        let mut g = Grabp::with_partition(
            &p,
            Partition::singletons(p.a()),
            DEFAULT_THETA,
            ProbabilityCriterion::default(),
            StepsizeSpec::Adaptive { w: 1.5 },
        )
        .unwrap();
        let mut s = state(&p, vec![3.0; 4], 6);
        for _ in 0..20 {
            if linalg::positive_sum_of_squares(&s.residual) == 0.0 {
                break;
            }
            let before = s.x.clone();
            let info = g.step(&p, &mut s).unwrap();
            assert_eq!(info.alpha, 1.5);
            let i = g.partition().blocks()[info.block].rows()[0];
            let row = p.a().row(i);
            let r = row.dot(&before) - p.b()[i];
            let mut oracle = before.clone();
            row.axpy(-1.5 * r / p.a().row_norm_sq(i), &mut oracle);
            assert!(oracle.iter().zip(&s.x).all(|(u, v)| (u - v).abs() <= 1e-12));
        }
    }

    #[test]
    fn stepsize_validation() {
        assert!(StepsizePolicy::adaptive(2.5, 0.5).is_err());
        assert!(StepsizePolicy::adaptive(0.0, 0.5).is_err());
        assert!(StepsizePolicy::constant(4.0, 0.5).is_err());
        assert!(StepsizePolicy::constant(3.9, 0.5).is_ok());
        assert!(StoppingCriterion {
            res_tol: None,
            gap_tol: None,
            max_iters: None,
            wall_clock: None
        }
        .validate()
        .is_err());
    }

    #[test]
    fn stubs_report_unimplemented() {
        let p = random_dense_problem(5, 2, 0).unwrap();
        let mut s = state(&p, vec![0.0; 2], 0);
        let g = GskmParams { beta: Some(2), delta: 1.0, momentum: 0.3 };
        assert!(matches!(gskm_step(&p, &mut s, &g), Err(SolverError::Unimplemented(_))));
        let q = PaskmParams { beta: None, delta: 1.0, momentum: 0.5, variant: 2 };
        assert!(matches!(paskm_step(&p, &mut s, &q), Err(SolverError::Unimplemented(_))));
        let err = run(&p, &Method::Gskm(g), &StoppingCriterion::default(), 0, &RunOptions::default());
        assert!(matches!(err, Err(SolverError::Unimplemented(_))));
        for m in [Method::Gskm(g), Method::Paskm(q), Method::Skm(SkmParams::default())] {
            let text = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<Method>(&text).unwrap(), m);
        }
    }

    #[test]
    fn feasible_start_takes_no_steps() {
        let p = random_dense_problem(20, 4, 9).unwrap();
        let x0 = p.certificate().unwrap().to_vec();
        for method in [
            Method::Rp,
            Method::Skm(SkmParams::default()),
            Method::Grabp(GrabpConfig::new(4, StepsizeSpec::Adaptive { w: 1.0 })),
        ] {
            let opts = RunOptions {
                record_history: true,
                x0: Some(x0.clone()),
                ..Default::default()
            };
            let rep = run(&p, &method, &StoppingCriterion::default(), 1, &opts).unwrap();
            assert_eq!(rep.iterations, 0);
            assert_eq!(rep.stop_reason, StopReason::Feasible);
            assert_eq!(rep.history.unwrap().len(), 1);
        }
    }

    #[test]
    fn runs_reach_tolerance_and_are_deterministic() {
        let p = random_dense_problem(200, 20, 3).unwrap();
        let stop = StoppingCriterion::default();
        for method in [
            Method::Rp,
            Method::Skm(SkmParams::default()),
            Method::Grabp(GrabpConfig::new(10, StepsizeSpec::Adaptive { w: 1.95 })),
            Method::Grabp(GrabpConfig::new(10, StepsizeSpec::ConstantScaled { scale: 1.95 })),
        ] {
            let opts = RunOptions {
                record_history: true,
                ..Default::default()
            };
            let a = run(&p, &method, &stop, 17, &opts).unwrap();
            let b = run(&p, &method, &stop, 17, &opts).unwrap();
            assert!(matches!(a.stop_reason, StopReason::ResTolerance | StopReason::Feasible), "{}", method.label());
            assert!(res(&p, &a.x).unwrap().value <= 1e-8);
            assert_eq!(a.terminal_res, res(&p, &a.x).unwrap().value);
            assert_eq!((a.iterations, &a.x, a.terminal_res), (b.iterations, &b.x, b.terminal_res));
            let h = a.history.unwrap();
            assert_eq!(h.len(), a.iterations + 1);
            assert!(h.iter().enumerate().all(|(k, r)| r.iteration == k));
        }
    }

    #[test]
    fn iteration_and_wall_caps() {
        let p = random_dense_problem(100, 10, 1).unwrap();
        let stop = StoppingCriterion {
            res_tol: Some(0.0),
            gap_tol: None,
            max_iters: Some(7),
            wall_clock: None,
        };
        let rep = run(&p, &Method::Rp, &stop, 0, &RunOptions::default()).unwrap();
        assert_eq!((rep.iterations, rep.stop_reason), (7, StopReason::MaxIterations));
        let stop = StoppingCriterion {
            res_tol: Some(0.0),
            gap_tol: None,
            max_iters: None,
            wall_clock: Some(0.0),
        };
        let rep = run(&p, &Method::Rp, &stop, 0, &RunOptions::default()).unwrap();
        assert!(rep.stop_reason.is_forced());
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn gap_rule_fires() {
        let p = random_dense_problem(60, 6, 2).unwrap();
        let stop = StoppingCriterion {
            res_tol: None,
            gap_tol: Some(1e-3),
            max_iters: Some(100_000),
            wall_clock: None,
        };
        let opts = RunOptions {
            x0: Some(vec![10.0; 6]),
            ..Default::default()
        };
        let rep = run(&p, &Method::Rp, &stop, 3, &opts).unwrap();
        assert!(matches!(rep.stop_reason, StopReason::GapTolerance | StopReason::Feasible));
        let g = gap_ratio(&p, &rep.x, &[10.0; 6]).unwrap().unwrap();
        assert!(g <= 1e-3);
    }

    #[test]
    fn history_tracks_distance() {
        let p = random_dense_problem(20, 5, 12).unwrap();
        let opts = RunOptions {
            record_history: true,
            track_distance: Some(1e-10),
            x0: Some(vec![3.0; 5]),
        };
        let stop = StoppingCriterion {
            max_iters: Some(30),
            ..Default::default()
        };
        let method = Method::Grabp(GrabpConfig::new(4, StepsizeSpec::ConstantScaled { scale: 1.0 }));
        let rep = run(&p, &method, &stop, 2, &opts).unwrap();
        let h = rep.history.unwrap();
        assert_eq!(h[0].distance.unwrap(), distance_to_s(&p, &[3.0; 5], 1e-10).unwrap());
        for pair in h.windows(2) {
            let (d0, d1) = (pair[0].distance.unwrap(), pair[1].distance.unwrap());
            assert!(d1 * d1 <= d0 * d0 + 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn adaptive_step_at_least_w(seed in any::<u64>(), t in 1usize..6, w in 0.05f64..1.95) {
            let p = random_dense_problem(30, 5, seed).unwrap();
            let cfg = GrabpConfig::new(t, StepsizeSpec::Adaptive { w });
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut g = Grabp::new(&p, &cfg, &mut rng).unwrap();
            let mut s = SolverState::new(&p, vec![4.0; 5], rng).unwrap();
            for _ in 0..20 {
                if linalg::positive_sum_of_squares(&s.residual) == 0.0 {
                    break;
                }
                let info = g.step(&p, &mut s).unwrap();
                prop_assert!(info.alpha >= w * (1.0 - 1e-12));
            }
        }
    }
}
