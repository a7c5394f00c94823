//! Reference quantities for checking the solvers: the Euclidean projection
//! onto `S = {x : Ax <= b}`, Hoffman-constant estimates, the block overshoot
//! ratio `zeta`, and theoretical versus fitted contraction factors.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, RowMatrix};
use crate::problem::FeasibilityProblem;
use crate::rng::{seeded, Stream};
use crate::selection::Partition;
use crate::solvers::StepsizePolicy;

pub const DEFAULT_MAX_SWEEPS: usize = 100_000;

/// Radii of the Hoffman sampling clouds, relative to the certificate norm.
pub const HOFFMAN_RADII: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("projection did not settle after {sweeps} sweeps (last sweep moved {last_move:e})")]
    SweepCap {
        sweeps: usize,
        last_move: f64,
        iterate: Vec<f64>,
    },
    #[error("every sampled point was feasible")]
    NoInfeasibleSample,
    #[error("problem too large for exhaustive enumeration ({m}x{n})")]
    TooLarge { m: usize, n: usize },
    #[error("history needs at least 3 positive entries, got {0}")]
    ShortHistory(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `max_i sigma_max^2(A_{I_i}) / ||A_{I_i}||_F^2` over the blocks.
pub fn zeta(a: &RowMatrix, partition: &Partition) -> f64 {
    partition
        .blocks()
        .iter()
        .map(|blk| blk.view(a).spectral_norm_sq().value / blk.frob_sq())
        .fold(0.0, f64::max)
}

/// Projection onto `S` by Dykstra's method over the halfspaces.
///
/// For halfspaces the Dykstra correction vectors are scalar multiples of the
/// row normals, so only one dual per row is stored. The duals persist between
/// calls and seed the next projection, which is valid for any nonnegative
/// start and much faster for nearby points.
///
/// After the sweeps settle, the rows with positive duals are taken as the
/// active set and the projection is re-solved exactly on them. The exact
/// point is kept only if it passes the optimality conditions.
///
/// Sweeps can stop moving while the iterate is still infeasible (many nearly
/// dependent rows). On such a stall the QP is handed to a dual active-set
/// solver before sweeping on.
#[derive(Debug, Clone)]
pub struct Projector<'a> {
    problem: &'a FeasibilityProblem,
    duals: Vec<f64>,
    max_sweeps: usize,
}

impl<'a> Projector<'a> {
    pub fn new(problem: &'a FeasibilityProblem) -> Self {
        Projector {
            problem,
            duals: vec![0.0; problem.nrows()],
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }

    pub fn with_max_sweeps(mut self, max_sweeps: usize) -> Self {
        self.max_sweeps = max_sweeps;
        self
    }

    pub fn duals(&self) -> &[f64] {
        &self.duals
    }

    pub fn project(&mut self, x: &[f64], tol: f64) -> Result<Vec<f64>, AnalysisError> {
        let a = self.problem.a();
        let b = self.problem.b();
        if x.len() != a.ncols() {
            return Err(LinalgError::DimensionMismatch {
                what: "point",
                expected: a.ncols(),
                actual: x.len(),
            }
            .into());
        }
        let norms = a.row_norms_sq();
        let mut y = x.to_vec();
        for (i, &c) in self.duals.iter().enumerate() {
            if c != 0.0 {
                a.row(i).axpy(-c, &mut y);
            }
        }
        let mut start = y.clone();
        let mut last_move = f64::INFINITY;
        let mut settled = false;
        let mut direct_tried = false;
        for _ in 0..self.max_sweeps {
            for i in 0..a.nrows() {
                let row = a.row(i);
                let c = self.duals[i];
                let lifted = row.dot(&y) + c * norms[i] - b[i];
                let c_new = (lifted / norms[i]).max(0.0);
                if c_new != c {
                    row.axpy(c - c_new, &mut y);
                    self.duals[i] = c_new;
                }
            }
            last_move = y
                .iter()
                .zip(&start)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            if last_move < tol && violation(a, b, &y) < tol {
                settled = true;
                break;
            }
            if last_move < tol && !direct_tried {
                // Stalled short of feasibility: solve the QP directly.
                direct_tried = true;
                if let Some(p) = self.polish(x, tol).or_else(|| self.dual_active_set(x, tol)) {
                    return Ok(p);
                }
            }
            start.copy_from_slice(&y);
        }
        if !settled {
            return Err(AnalysisError::SweepCap {
                sweeps: self.max_sweeps,
                last_move,
                iterate: y,
            });
        }
        // Small sweep moves do not certify optimality; prefer a verified point.
        Ok(self
            .polish(x, tol)
            .or_else(|| self.dual_active_set(x, tol))
            .unwrap_or(y))
    }

    pub fn distance(&mut self, x: &[f64], tol: f64) -> Result<f64, AnalysisError> {
        let p = self.project(x, tol)?;
        Ok(x.iter().zip(&p).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt())
    }

    /// Dual active-set solve of `min ||y - x||^2 / 2` s.t. `Ay <= b`
    /// (Goldfarb-Idnani with identity Hessian). Starts from `y = x`, adds the
    /// most violated row each round and drops rows whose multiplier would turn
    /// negative. On success the multipliers replace the stored duals.
    fn dual_active_set(&mut self, x: &[f64], tol: f64) -> Option<Vec<f64>> {
        let a = self.problem.a();
        let b = self.problem.b();
        let (m, n) = (a.nrows(), a.ncols());
        let norms = a.row_norms_sq();
        let mut y = x.to_vec();
        let mut active: Vec<usize> = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut mu: Vec<f64> = Vec::new();
        for _ in 0..4 * (m + n) {
            let r = a.residual(&y, b).ok()?;
            let next = (0..m)
                .filter(|&i| r[i] > tol)
                .max_by(|&i, &j| (r[i] / norms[i].sqrt()).total_cmp(&(r[j] / norms[j].sqrt())));
            let Some(p) = next else {
                let mut duals = vec![0.0; m];
                for (&i, &v) in active.iter().zip(&mu) {
                    duals[i] = v;
                }
                self.duals = duals;
                return Some(y);
            };
            if active.contains(&p) {
                return None;
            }
            let ap = a.row(p).to_dense(n);
            let mut mu_p = 0.0;
            loop {
                let k = active.len();
                let (r_dual, z) = if k == 0 {
                    (DVector::zeros(0), ap.clone())
                } else {
                    let gram = DMatrix::from_fn(k, k, |i, j| linalg::dot(&rows[i], &rows[j]));
                    let rhs = DVector::from_fn(k, |i, _| linalg::dot(&rows[i], &ap));
                    let r_dual = gram.cholesky()?.solve(&rhs);
                    let mut z = ap.clone();
                    for (row, &c) in rows.iter().zip(r_dual.iter()) {
                        z.iter_mut().zip(row).for_each(|(zi, ri)| *zi -= c * ri);
                    }
                    (r_dual, z)
                };
                let zz = linalg::dot(&z, &ap);
                let slack = linalg::dot(&ap, &y) - b[p];
                let full = if zz > 1e-14 * norms[p] { slack / zz } else { f64::INFINITY };
                let (partial, blocking) = r_dual
                    .iter()
                    .enumerate()
                    .filter(|(_, &rj)| rj > 0.0)
                    .map(|(j, &rj)| (mu[j] / rj, j))
                    .fold((f64::INFINITY, usize::MAX), |acc, c| if c.0 < acc.0 { c } else { acc });
                let step = full.min(partial);
                if !step.is_finite() {
                    return None;
                }
                if full.is_finite() {
                    y.iter_mut().zip(&z).for_each(|(yi, zi)| *yi -= step * zi);
                }
                mu.iter_mut().zip(r_dual.iter()).for_each(|(mj, rj)| *mj -= step * rj);
                mu_p += step;
                if full <= partial {
                    active.push(p);
                    rows.push(ap);
                    mu.push(mu_p);
                    break;
                }
                active.remove(blocking);
                rows.remove(blocking);
                mu.remove(blocking);
            }
        }
        None
    }

    fn polish(&self, x: &[f64], tol: f64) -> Option<Vec<f64>> {
        let a = self.problem.a();
        let b = self.problem.b();
        let active: Vec<usize> = (0..a.nrows()).filter(|&i| self.duals[i] > 0.0).collect();
        if active.is_empty() {
            return (violation(a, b, x) < tol).then(|| x.to_vec());
        }
        if active.len() > a.ncols() {
            return None;
        }
        let n = a.ncols();
        let rows: Vec<Vec<f64>> = active.iter().map(|&i| a.row(i).to_dense(n)).collect();
        let k = active.len();
        let gram = DMatrix::from_fn(k, k, |p, q| linalg::dot(&rows[p], &rows[q]));
        let rhs = DVector::from_fn(k, |p, _| linalg::dot(&rows[p], x) - b[active[p]]);
        let mu = gram.cholesky()?.solve(&rhs);
        let scale = mu.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
        if mu.iter().any(|&v| v < -1e-12 * scale) {
            return None;
        }
        let mut y = x.to_vec();
        for (p, row) in rows.iter().enumerate() {
            y.iter_mut().zip(row).for_each(|(yi, ri)| *yi -= mu[p] * ri);
        }
        let r = a.residual(&y, b).ok()?;
        r.iter().all(|&v| v <= tol).then_some(y)
    }
}

fn violation(a: &RowMatrix, b: &[f64], y: &[f64]) -> f64 {
    let r = a.residual(y, b).expect("dimensions checked");
    linalg::positive_sum_of_squares(&r).sqrt()
}

/// `P_S(x)` from a cold start.
pub fn project_onto_s(problem: &FeasibilityProblem, x: &[f64], tol: f64) -> Result<Vec<f64>, AnalysisError> {
    Projector::new(problem).project(x, tol)
}

/// `||x - P_S(x)||_2`.
pub fn distance_to_s(problem: &FeasibilityProblem, x: &[f64], tol: f64) -> Result<f64, AnalysisError> {
    Projector::new(problem).distance(x, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoffmanEstimate {
    /// `max dist(x, S) / ||(Ax - b)_+||` over the samples.
    pub value: f64,
    /// The sample attaining the maximum.
    pub argmax: Vec<f64>,
    /// `dist(argmax, S)` and `||(A argmax - b)_+||`.
    pub distance: f64,
    pub violation: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Empirical lower bound on the Hoffman constant of `S`.
///
/// Sample `s` is `c + r_s g` with `c` a point of `S` (the stored certificate,
/// or the projection of the origin), `g ~ N(0, I/n)` and `r_s` cycling through
/// [`HOFFMAN_RADII`] times `||c||`. Samples are drawn in sequence from one
/// seeded stream, so a larger `sample_count` extends the same sample list.
pub fn hoffman_lower_bound(
    problem: &FeasibilityProblem,
    sample_count: usize,
    seed: u64,
    tol: f64,
) -> Result<HoffmanEstimate, AnalysisError> {
    let n = problem.ncols();
    let mut projector = Projector::new(problem);
    let center = match problem.certificate() {
        Some(c) => c.to_vec(),
        None => projector.project(&vec![0.0; n], tol)?,
    };
    let base = match linalg::norm2(&center) {
        r if r > 0.0 => r,
        _ => 1.0,
    };
    let mut rng = seeded(seed, Stream::Hoffman);
    let spread = 1.0 / (n as f64).sqrt();
    let mut best: Option<HoffmanEstimate> = None;
    let mut skipped = 0;
    for s in 0..sample_count {
        let radius = HOFFMAN_RADII[s % HOFFMAN_RADII.len()] * base;
        let x: Vec<f64> = center
            .iter()
            .map(|&c| {
                let g: f64 = StandardNormal.sample(&mut rng);
                c + radius * spread * g
            })
            .collect();
        let viol = problem.violation(&x)?;
        if viol == 0.0 {
            skipped += 1;
            continue;
        }
        let dist = projector.distance(&x, tol)?;
        let ratio = dist / viol;
        if best.as_ref().is_none_or(|e| ratio > e.value) {
            best = Some(HoffmanEstimate {
                value: ratio,
                argmax: x,
                distance: dist,
                violation: viol,
                used: 0,
                skipped: 0,
            });
        }
    }
    let mut est = best.ok_or(AnalysisError::NoInfeasibleSample)?;
    est.used = sample_count - skipped;
    est.skipped = skipped;
    Ok(est)
}

/// Hoffman constant bound `max_J 1 / sigma_min(A_J)` over every row subset
/// `J` whose submatrix has full row rank. Exhaustive, so limited to
/// `m <= 12`, `n <= 4`.
pub fn hoffman_upper_bound(a: &RowMatrix) -> Result<f64, AnalysisError> {
    let (m, n) = (a.nrows(), a.ncols());
    if m > 12 || n > 4 {
        return Err(AnalysisError::TooLarge { m, n });
    }
    let dense = a.to_dense_values();
    let mut best = 0.0_f64;
    for mask in 1u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        if rows.len() > n {
            continue;
        }
        let sub = DMatrix::from_fn(rows.len(), n, |p, j| dense[rows[p] * n + j]);
        let sv = sub.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if smin > 1e-12 * smax.max(1.0) {
            best = best.max(1.0 / smin);
        }
    }
    Ok(best)
}

/// Bound on the expected per-step contraction of `dist^2`,
/// `1 - gain / (L^2 ||A||_F^2)`, with `hoffman` in place of `L`.
///
/// Since an estimate from below makes the factor smaller than the true one,
/// observed rates may legitimately exceed it; comparisons need slack.
pub fn theoretical_factor(
    policy: &StepsizePolicy,
    hoffman: f64,
    frob_sq: f64,
) -> Result<f64, AnalysisError> {
    policy
        .validate()
        .map_err(|e| AnalysisError::InvalidParameter(e.to_string()))?;
    if !(hoffman > 0.0 && hoffman.is_finite()) || !(frob_sq > 0.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "hoffman {hoffman}, frob_sq {frob_sq}"
        )));
    }
    let zeta = policy.zeta();
    let gain = match *policy {
        StepsizePolicy::Constant { alpha, .. } => 2.0 * alpha - alpha * alpha * zeta,
        StepsizePolicy::Adaptive { w, .. } => (2.0 * w - w * w) / zeta,
    };
    let factor = 1.0 - gain / (hoffman * hoffman * frob_sq);
    Ok(factor.clamp(0.0, 1.0))
}

/// Per-step ratio from a least-squares fit of `ln(dist^2)` against the step
/// index. The history is cut at its first nonpositive entry.
pub fn empirical_factor(dist_sq: &[f64]) -> Result<f64, AnalysisError> {
    let len = dist_sq.iter().position(|&v| v <= 0.0).unwrap_or(dist_sq.len());
    if len < 3 {
        return Err(AnalysisError::ShortHistory(len));
    }
    let ys: Vec<f64> = dist_sq[..len].iter().map(|v| v.ln()).collect();
    let nf = len as f64;
    let x_mean = (nf - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = k as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    Ok((sxy / sxx).exp())
}

/// Summary of the rate quantities for one instance and stepsize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceAnalysis {
    pub zeta: f64,
    pub hoffman_lower: f64,
    pub frob_sq: f64,
    pub theoretical_factor: f64,
    pub empirical_factor: Option<f64>,
}

impl ConvergenceAnalysis {
    pub fn new(
        problem: &FeasibilityProblem,
        policy: &StepsizePolicy,
        hoffman_samples: usize,
        seed: u64,
        dist_sq_history: Option<&[f64]>,
    ) -> Result<Self, AnalysisError> {
        let hoffman = hoffman_lower_bound(problem, hoffman_samples, seed, 1e-10)?.value;
        let frob_sq = problem.a().frob_sq();
        Ok(ConvergenceAnalysis {
            zeta: policy.zeta(),
            hoffman_lower: hoffman,
            frob_sq,
            theoretical_factor: theoretical_factor(policy, hoffman, frob_sq)?,
            empirical_factor: dist_sq_history.map(empirical_factor).transpose()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_dense, random_dense_problem, Provenance};
    use crate::selection::random_index_sets;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(rows: &[Vec<f64>], b: &[f64]) -> FeasibilityProblem {
        FeasibilityProblem::new(RowMatrix::from_rows(rows).unwrap(), b.to_vec(), Provenance::Custom).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn zeta_examples() {
        let a = generate_dense(12, 4, 1).unwrap();
        assert_eq!(zeta(&a, &Partition::singletons(&a)), 1.0);
        let eye = RowMatrix::from_rows(&(0..5).map(|i| (0..5).map(|j| f64::from(u8::from(i == j))).collect()).collect::<Vec<_>>()).unwrap();
        assert!((zeta(&eye, &Partition::whole(&eye)) - 0.2).abs() < 1e-14);
    }

    #[test]
    fn zeta_matches_eigensolver() {
        let a = generate_dense(30, 5, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sets = random_index_sets(30, 3, &mut rng).unwrap();
        let part = Partition::from_index_sets(&a, sets.clone()).unwrap();
        let dense = a.to_dense_values();
        let oracle = sets
            .iter()
            .map(|rows| {
                let sub = DMatrix::from_fn(rows.len(), 5, |p, j| dense[rows[p] * 5 + j]);
                let eig = SymmetricEigen::new(sub.transpose() * &sub);
                eig.eigenvalues.max() / sub.norm_squared()
            })
            .fold(0.0, f64::max);
        assert!((zeta(&a, &part) - oracle).abs() <= 1e-8 * oracle);
    }

    #[test]
    fn projection_closed_forms() {
        let p = problem(&[vec![1.0, 2.0]], &[1.0]);
        let x = [3.0, 4.0];
        // (a.x - b) / ||a||^2 = 10 / 5
        let y = project_onto_s(&p, &x, 1e-12).unwrap();
        assert!(close(&y, &[1.0, 0.0], 1e-12));
        let inside = [-1.0, 0.5];
        assert!(close(&project_onto_s(&p, &inside, 1e-12).unwrap(), &inside, 1e-12));

        let h = problem(&[vec![1.0, 0.0]], &[0.0]);
        assert!((distance_to_s(&h, &[3.0, 5.0], 1e-12).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(distance_to_s(&h, &[-3.0, 5.0], 1e-12).unwrap(), 0.0);
    }

    /// Nearest feasible point among the interior candidate, edge projections
    /// and vertices of a triangle.
    fn triangle_oracle(rows: &[[f64; 2]; 3], b: &[f64; 3], x: [f64; 2]) -> [f64; 2] {
        let feasible = |p: [f64; 2]| (0..3).all(|i| rows[i][0] * p[0] + rows[i][1] * p[1] <= b[i] + 1e-12);
        let mut candidates = vec![x];
        for i in 0..3 {
            let a = rows[i];
            let s = (a[0] * x[0] + a[1] * x[1] - b[i]) / (a[0] * a[0] + a[1] * a[1]);
            candidates.push([x[0] - s * a[0], x[1] - s * a[1]]);
            for j in i + 1..3 {
                let c = rows[j];
                let det = a[0] * c[1] - a[1] * c[0];
                candidates.push([(b[i] * c[1] - a[1] * b[j]) / det, (a[0] * b[j] - b[i] * c[0]) / det]);
            }
        }
        candidates
            .into_iter()
            .filter(|&p| feasible(p))
            .min_by(|p, q| {
                let dp = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
                let dq = (q[0] - x[0]).powi(2) + (q[1] - x[1]).powi(2);
                dp.total_cmp(&dq)
            })
            .unwrap()
    }

    #[test]
    fn triangle_matches_active_set_enumeration() {
        // x >= 0, y >= 0, x + y <= 1
        let rows = [[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]];
        let b = [0.0, 0.0, 1.0];
        let p = problem(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), &b);
        let tol = 1e-10;
        for x in [[1.5, -0.3], [-0.2, -0.1], [2.0, 2.0], [0.8, 0.9], [-1.0, 0.4], [0.2, 0.3]] {
            let oracle = triangle_oracle(&rows, &b, x);
            let y = project_onto_s(&p, &x, tol).unwrap();
            assert!(close(&y, &oracle, 2.0 * tol), "{x:?}: {y:?} vs {oracle:?}");
            let d_oracle = ((oracle[0] - x[0]).powi(2) + (oracle[1] - x[1]).powi(2)).sqrt();
            assert!((distance_to_s(&p, &x, tol).unwrap() - d_oracle).abs() <= 2.0 * tol);
        }
        // (1.5, -0.3) lands on the vertex (1, 0)
        assert!(close(&project_onto_s(&p, &[1.5, -0.3], tol).unwrap(), &[1.0, 0.0], 1e-12));
    }

    /// Nearest feasible point among the projections onto every affine set
    /// `{A_J y = b_J}` with `|J| <= n` and `A_J` of full row rank.
    fn enumerated_projection(p: &FeasibilityProblem, x: &[f64]) -> Vec<f64> {
        let (m, n) = (p.nrows(), p.ncols());
        let dense = p.a().to_dense_values();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << m) {
            let rows: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
            if rows.len() > n {
                continue;
            }
            let aj = DMatrix::from_fn(rows.len(), n, |r, j| dense[rows[r] * n + j]);
            let xv = DVector::from_column_slice(x);
            let rhs = &aj * &xv - DVector::from_fn(rows.len(), |r, _| p.b()[rows[r]]);
            let Some(chol) = (&aj * aj.transpose()).cholesky() else { continue };
            let y = xv - aj.transpose() * chol.solve(&rhs);
            if p.violation(y.as_slice()).unwrap() > 1e-9 {
                continue;
            }
            let d = (&y - DVector::from_column_slice(x)).norm();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, y.as_slice().to_vec()));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn both_routes_match_enumeration() {
        let tol = 1e-10;
        for seed in 0..20 {
            let p = random_dense_problem(10, 3, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-20.0..20.0)).collect();
            let oracle = enumerated_projection(&p, &x);
            let swept = project_onto_s(&p, &x, tol).unwrap();
            let direct = Projector::new(&p).dual_active_set(&x, tol).unwrap();
            assert!(close(&direct, &oracle, 1e-8), "seed {seed}: {direct:?} vs {oracle:?}");
            assert!(close(&swept, &oracle, 1e-8), "seed {seed}: {swept:?} vs {oracle:?}");
        }
    }

    #[test]
    fn far_points_satisfy_kkt_on_tall_instance() {
        let p = random_dense_problem(200, 20, 2024).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut projector = Projector::new(&p);
        for _ in 0..10 {
            let x: Vec<f64> = (0..20).map(|_| rng.random_range(-30.0..30.0)).collect();
            let y = projector.project(&x, 1e-10).unwrap();
            assert!(p.violation(&y).unwrap() < 1e-10);
            // x - y = A^T mu with mu >= 0 supported on tight rows
            let r = p.residual(&y).unwrap();
            let mut aty = vec![0.0; 20];
            for (i, &mu) in projector.duals().iter().enumerate() {
                assert!(mu >= 0.0);
                if mu > 0.0 {
                    assert!(r[i].abs() < 1e-8, "row {i} has dual {mu} and residual {}", r[i]);
                    p.a().row(i).axpy(mu, &mut aty);
                }
            }
            let gap: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u - v).collect();
            assert!(close(&gap, &aty, 1e-7 * (1.0 + linalg::norm2(&gap))));
        }
    }

    #[test]
    fn sweep_cap_reports_iterate() {
        let p = random_dense_problem(40, 6, 3).unwrap();
        let x = vec![50.0; 6];
        match Projector::new(&p).with_max_sweeps(1).project(&x, 1e-14) {
            Err(AnalysisError::SweepCap { sweeps: 1, iterate, .. }) => assert_eq!(iterate.len(), 6),
            other => panic!("expected sweep cap, got {other:?}"),
        }
    }

    #[test]
    fn hoffman_single_halfspace() {
        let p = problem(&[vec![3.0, 4.0]], &[1.0]).with_certificate(vec![0.0, 0.0]).unwrap();
        let est = hoffman_lower_bound(&p, 30, 7, 1e-12).unwrap();
        assert!((est.value - 0.2).abs() < 1e-12);
    }

    #[test]
    fn hoffman_orthant() {
        // x1 <= 0, x2 <= 0 with unit rows: dist = ||(x)_+|| = violation exactly
        let p = problem(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0])
            .with_certificate(vec![-1.0, -1.0])
            .unwrap();
        let est = hoffman_lower_bound(&p, 60, 3, 1e-12).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
        assert!((est.distance - est.violation).abs() < 1e-12);
    }

    #[test]
    fn hoffman_estimate_is_monotone_and_below_bound() {
        let p = random_dense_problem(10, 3, 11).unwrap();
        let small = hoffman_lower_bound(&p, 40, 5, 1e-11).unwrap();
        let large = hoffman_lower_bound(&p, 80, 5, 1e-11).unwrap();
        assert!(large.value >= small.value);
        let upper = hoffman_upper_bound(p.a()).unwrap();
        assert!(large.value <= upper * (1.0 + 1e-9), "{} > {upper}", large.value);
        // the maximizing sample satisfies the Hoffman inequality with the estimate
        assert!(large.distance <= (large.value + 1e-9) * large.violation);
    }

    #[test]
    fn factor_examples() {
        let zeta = 0.4;
        let (l, f) = (2.0, 50.0);
        let best = 1.0 - 1.0 / (zeta * l * l * f);
        let c = theoretical_factor(&StepsizePolicy::constant(1.0 / zeta, zeta).unwrap(), l, f).unwrap();
        let w = theoretical_factor(&StepsizePolicy::adaptive(1.0, zeta).unwrap(), l, f).unwrap();
        assert!((c - best).abs() < 1e-15 && (w - best).abs() < 1e-15);
        for s in [0.3, 0.9, 1.1, 1.9] {
            let other = theoretical_factor(&StepsizePolicy::constant(s / zeta, zeta).unwrap(), l, f).unwrap();
            assert!(other > best);
        }
        let edge = theoretical_factor(&StepsizePolicy::constant(1e-9 / zeta, zeta).unwrap(), l, f).unwrap();
        assert!(1.0 - edge < 1e-9);
        let edge = theoretical_factor(&StepsizePolicy::constant((2.0 - 1e-9) / zeta, zeta).unwrap(), l, f).unwrap();
        assert!(1.0 - edge < 1e-9);
        assert!(StepsizePolicy::constant(2.0 / zeta, zeta).is_err());
    }

    #[test]
    fn empirical_factor_examples() {
        let geo: Vec<f64> = (0..40).map(|k| 3.0 * 0.9_f64.powi(k)).collect();
        assert!((empirical_factor(&geo).unwrap() - 0.9).abs() < 1e-12);
        assert!((empirical_factor(&[2.0; 10]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(empirical_factor(&[1.0, 0.5, 0.0, 0.1]), Err(AnalysisError::ShortHistory(2)));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noisy: Vec<f64> = (0..100)
            .map(|k| 0.8_f64.powi(k) * (1.0 + rng.random_range(-0.05..0.05)))
            .collect();
        // hand least-squares fit of ln values
        let ys: Vec<f64> = noisy.iter().map(|v| v.ln()).collect();
        let xb = 49.5;
        let yb = ys.iter().sum::<f64>() / 100.0;
        let num: f64 = ys.iter().enumerate().map(|(k, y)| (k as f64 - xb) * (y - yb)).sum();
        let den: f64 = (0..100).map(|k| (k as f64 - xb).powi(2)).sum();
        let oracle = (num / den).exp();
        let fitted = empirical_factor(&noisy).unwrap();
        assert!((fitted - oracle).abs() < 1e-12);
        assert!((fitted - 0.8).abs() < 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn projection_is_feasible_and_optimal(seed in any::<u64>()) {
            let p = random_dense_problem(15, 4, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..20.0)).collect();
            let tol = 1e-10;
            let y = project_onto_s(&p, &x, tol).unwrap();
            prop_assert!(p.violation(&y).unwrap() < tol);
            // obtuse-angle test against random feasible points
            let cert = p.certificate().unwrap();
            let dir: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u - v).collect();
            let to_cert: Vec<f64> = cert.iter().zip(&y).map(|(u, v)| u - v).collect();
            prop_assert!(linalg::dot(&dir, &to_cert) <= 1e-8 * (1.0 + linalg::norm2(&dir) * linalg::norm2(&to_cert)));
        }
    }
}
