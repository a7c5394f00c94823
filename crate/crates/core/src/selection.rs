//! Row partitioning and the greedy block selection rule.
//!
//! At an iterate `x` with residual `r = Ax - b`, every block `I_i` gets the
//! score `||(r_{I_i})_+||^2 / ||A_{I_i}||_F^2`. The threshold
//!
//! ```text
//! eps = theta * max_i score_i / ||r_+||^2 + (1 - theta) / ||A||_F^2
//! ```
//!
//! admits the blocks with `score_i >= eps * ||r_+||^2`, and the next block is
//! drawn among the admitted ones with weights given by a
//! [`ProbabilityCriterion`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Block, BlockView, CompensatedSum, LinalgError, RowMatrix};

pub const DEFAULT_THETA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("cannot split {m} rows into {t} nonempty blocks")]
    BlockCount { t: usize, m: usize },
    #[error("not a partition: {0}")]
    NotAPartition(String),
    #[error("theta must lie in [0, 1], got {0}")]
    InvalidTheta(f64),
    #[error("probability exponent must be positive and finite, got {0}")]
    InvalidExponent(f64),
    #[error("iterate is already feasible; no block to select")]
    AlreadyFeasible,
    #[error("admitted blocks carry zero total weight")]
    ZeroWeight,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Disjoint cover `{I_1, ..., I_t}` of the row indices.
#[derive(Debug, Clone)]
pub struct Partition {
    nrows: usize,
    blocks: Vec<Block>,
}

/// Uniform permutation by Fisher–Yates, then contiguous slices
/// `(floor((i-1) m / t), floor(i m / t)]` of it.
///
/// Draws `rng.random_range(0..=k)` for `k = m-1, ..., 1`, in that order.
pub fn random_index_sets<R: Rng + ?Sized>(
    m: usize,
    t: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, SelectionError> {
    if t == 0 || t > m {
        return Err(SelectionError::BlockCount { t, m });
    }
    let mut perm: Vec<usize> = (0..m).collect();
    for k in (1..m).rev() {
        let j = rng.random_range(0..=k);
        perm.swap(k, j);
    }
    Ok((0..t)
        .map(|i| perm[i * m / t..(i + 1) * m / t].to_vec())
        .collect())
}

impl Partition {
    /// Random balanced partition into `t` blocks.
    pub fn random<R: Rng + ?Sized>(a: &RowMatrix, t: usize, rng: &mut R) -> Result<Self, SelectionError> {
        let sets = random_index_sets(a.nrows(), t, rng)?;
        Self::from_index_sets(a, sets)
    }

    pub fn from_index_sets(a: &RowMatrix, sets: Vec<Vec<usize>>) -> Result<Self, SelectionError> {
        let m = a.nrows();
        if sets.is_empty() {
            return Err(SelectionError::NotAPartition("no blocks".into()));
        }
        let mut seen = vec![false; m];
        for set in &sets {
            if set.is_empty() {
                return Err(SelectionError::NotAPartition("empty block".into()));
            }
            for &i in set {
                if i >= m {
                    return Err(SelectionError::NotAPartition(format!("row {i} out of range")));
                }
                if seen[i] {
                    return Err(SelectionError::NotAPartition(format!("row {i} in two blocks")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(SelectionError::NotAPartition(format!("row {i} not covered")));
        }
        let blocks = sets
            .into_iter()
            .map(|rows| Block::new(a, rows))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Partition { nrows: m, blocks })
    }

    /// One block per row.
    pub fn singletons(a: &RowMatrix) -> Self {
        Self::from_index_sets(a, (0..a.nrows()).map(|i| vec![i]).collect())
            .expect("singletons cover the rows")
    }

    /// A single block holding every row.
    pub fn whole(a: &RowMatrix) -> Self {
        Self::from_index_sets(a, vec![(0..a.nrows()).collect()]).expect("one block covers the rows")
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn view<'a>(&'a self, a: &'a RowMatrix, i: usize) -> BlockView<'a> {
        self.blocks[i].view(a)
    }
}

/// Weight rule for drawing an admitted block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ProbabilityCriterion {
    /// Weight `||r_+||_p^p`.
    PNorm { p: f64 },
    /// Weight `||r_+||_2^mu`.
    TwoNormPower { mu: f64 },
}

impl Default for ProbabilityCriterion {
    fn default() -> Self {
        ProbabilityCriterion::PNorm { p: 2.0 }
    }
}

impl ProbabilityCriterion {
    pub fn validate(&self) -> Result<(), SelectionError> {
        let e = match *self {
            ProbabilityCriterion::PNorm { p } => p,
            ProbabilityCriterion::TwoNormPower { mu } => mu,
        };
        if e > 0.0 && e.is_finite() {
            Ok(())
        } else {
            Err(SelectionError::InvalidExponent(e))
        }
    }

    /// Weight of a block from its residual; negative entries are clipped.
    pub fn weight(&self, residual: &[f64]) -> f64 {
        let mut acc = CompensatedSum::new();
        match *self {
            ProbabilityCriterion::PNorm { p } => {
                for &r in residual {
                    if r > 0.0 {
                        acc.add(if p == 2.0 { r * r } else { r.powf(p) });
                    }
                }
                acc.value()
            }
            ProbabilityCriterion::TwoNormPower { mu } => {
                for &r in residual {
                    if r > 0.0 {
                        acc.add(r * r);
                    }
                }
                let sq = acc.value();
                if mu == 2.0 {
                    sq
                } else {
                    sq.powf(mu / 2.0)
                }
            }
        }
    }
}

/// `eps = theta * max(scores) / total + (1 - theta) / frob_total`.
pub fn compute_epsilon(
    block_scores: &[f64],
    total_residual_sq: f64,
    frob_sq_total: f64,
    theta: f64,
) -> Result<f64, SelectionError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(SelectionError::InvalidTheta(theta));
    }
    if !(total_residual_sq > 0.0) {
        return Err(SelectionError::AlreadyFeasible);
    }
    let max = block_scores.iter().cloned().fold(0.0_f64, f64::max);
    Ok(theta * max / total_residual_sq + (1.0 - theta) / frob_sq_total)
}

/// Index of the first maximal score.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Blocks with `score >= eps * total`, ascending. The argmax block is always
/// included, so the set is never empty even under round-off.
pub fn greedy_index_set(block_scores: &[f64], epsilon: f64, total_residual_sq: f64) -> Vec<usize> {
    let threshold = epsilon * total_residual_sq;
    let best = argmax(block_scores);
    block_scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s >= threshold || i == best)
        .map(|(i, _)| i)
        .collect()
}

/// Normalizes `weights` over `admitted`; zero elsewhere.
pub fn block_probabilities(weights: &[f64], admitted: &[usize]) -> Result<Vec<f64>, SelectionError> {
    let mut acc = CompensatedSum::new();
    admitted.iter().for_each(|&i| acc.add(weights[i]));
    let total = acc.value();
    if !(total > 0.0) || !total.is_finite() {
        return Err(SelectionError::ZeroWeight);
    }
    let mut p = vec![0.0; weights.len()];
    for &i in admitted {
        p[i] = weights[i] / total;
    }
    Ok(p)
}

/// Inverse-CDF draw from one uniform variate.
pub fn sample_block<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last = i;
            if u < cum {
                return i;
            }
        }
    }
    last
}

/// Everything computed by steps 2-4 of one greedy block iteration.
#[derive(Debug, Clone)]
pub struct GreedySelection {
    pub theta: f64,
    pub criterion: ProbabilityCriterion,
    /// `||(r_{I_i})_+||^2` per block.
    pub block_residual_sq: Vec<f64>,
    /// `||(r_{I_i})_+||^2 / ||A_{I_i}||_F^2` per block.
    pub block_scores: Vec<f64>,
    /// `||r_+||^2`.
    pub total_residual_sq: f64,
    pub epsilon: f64,
    pub argmax: usize,
    /// Admitted blocks `U_k`, ascending.
    pub admitted: Vec<usize>,
    /// Length `t`, zero outside `admitted`.
    pub probabilities: Vec<f64>,
}

/// Scores the blocks against a full residual `r = Ax - b` and builds the
/// sampling distribution.
pub fn greedy_select(
    a: &RowMatrix,
    partition: &Partition,
    residual: &[f64],
    theta: f64,
    criterion: ProbabilityCriterion,
) -> Result<GreedySelection, SelectionError> {
    if residual.len() != a.nrows() {
        return Err(LinalgError::DimensionMismatch {
            what: "residual",
            expected: a.nrows(),
            actual: residual.len(),
        }
        .into());
    }
    criterion.validate()?;
    let t = partition.len();
    let mut block_residual_sq = Vec::with_capacity(t);
    let mut block_scores = Vec::with_capacity(t);
    let mut total = CompensatedSum::new();
    let mut scratch = Vec::new();
    for block in partition.blocks() {
        let mut acc = CompensatedSum::new();
        for &i in block.rows() {
            let r = residual[i];
            if r > 0.0 {
                acc.add(r * r);
            }
        }
        let sq = acc.value();
        total.add(sq);
        block_residual_sq.push(sq);
        block_scores.push(sq / block.frob_sq());
    }
    let total_residual_sq = total.value();
    let epsilon = compute_epsilon(&block_scores, total_residual_sq, a.frob_sq(), theta)?;
    let admitted = greedy_index_set(&block_scores, epsilon, total_residual_sq);
    let mut weights = vec![0.0; t];
    for &i in &admitted {
        scratch.clear();
        scratch.extend(partition.blocks()[i].rows().iter().map(|&j| residual[j]));
        weights[i] = criterion.weight(&scratch);
    }
    let probabilities = block_probabilities(&weights, &admitted)?;
    Ok(GreedySelection {
        theta,
        criterion,
        block_residual_sq,
        argmax: argmax(&block_scores),
        block_scores,
        total_residual_sq,
        epsilon,
        admitted,
        probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::generate_dense;
    use crate::rng::{seeded, Stream};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn partition_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = random_index_sets(5, 1, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        let mut all = one[0].clone();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);

        let five = random_index_sets(5, 5, &mut rng).unwrap();
        assert!(five.iter().all(|b| b.len() == 1));
        let mut flat: Vec<usize> = five.concat();
        flat.sort();
        assert_eq!(flat, vec![0, 1, 2, 3, 4]);

        // floor(i*10/3) differences: 3, 3, 4 for i = 1, 2, 3
        let sizes: Vec<usize> = random_index_sets(10, 3, &mut rng).unwrap().iter().map(Vec::len).collect();
        let oracle: Vec<usize> = (1..=3).map(|i| (i * 10) / 3 - ((i - 1) * 10) / 3).collect();
        assert_eq!(sizes, oracle);
        assert_eq!(sizes, vec![3, 3, 4]);

        assert!(matches!(
            random_index_sets(3, 4, &mut rng),
            Err(SelectionError::BlockCount { t: 4, m: 3 })
        ));
    }

    #[test]
    fn epsilon_examples() {
        // single block: max score equals total / frob
        let eps = compute_epsilon(&[2.0 / 8.0], 2.0, 8.0, 0.5).unwrap();
        assert!((eps - 1.0 / 8.0).abs() < 1e-15);
        let eps = compute_epsilon(&[0.9, 0.1], 1.0, 4.0, 0.0).unwrap();
        assert_eq!(eps, 0.25);
        let eps = compute_epsilon(&[0.5, 0.2, 0.1], 1.0, 10.0, 0.5).unwrap();
        assert!((eps - 0.3).abs() < 1e-15);
        assert_eq!(
            compute_epsilon(&[0.0], 0.0, 1.0, 0.5),
            Err(SelectionError::AlreadyFeasible)
        );
        assert_eq!(
            compute_epsilon(&[0.1], 1.0, 1.0, 1.5),
            Err(SelectionError::InvalidTheta(1.5))
        );
    }

    #[test]
    fn index_set_examples() {
        assert_eq!(greedy_index_set(&[0.25], 0.125, 2.0), vec![0]);
        assert_eq!(greedy_index_set(&[0.5, 0.2, 0.1], 0.3, 1.0), vec![0]);
        // four equal blocks, block Frobenius 2.5, block residual 0.5
        let eps = compute_epsilon(&[0.2; 4], 2.0, 10.0, 0.5).unwrap();
        assert_eq!(greedy_index_set(&[0.2; 4], eps, 2.0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn probability_examples() {
        assert_eq!(block_probabilities(&[0.0, 3.0, 0.0], &[1]).unwrap(), vec![0.0, 1.0, 0.0]);
        // two blocks with 2-norms 2 and 1, weight ||r||^2
        let c = ProbabilityCriterion::TwoNormPower { mu: 2.0 };
        let w = [c.weight(&[2.0, -1.0]), c.weight(&[0.6, 0.8])];
        let p = block_probabilities(&w, &[0, 1]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15 && (p[1] - 0.2).abs() < 1e-15);
        assert_eq!(block_probabilities(&[0.0, 0.0], &[0, 1]), Err(SelectionError::ZeroWeight));
    }

    #[test]
    fn pnorm_two_matches_two_norm_power_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let blocks: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let admitted: Vec<usize> = (0..6).filter(|&i| blocks[i].iter().any(|&v| v > 0.0)).collect();
            let wp: Vec<f64> = blocks.iter().map(|b| ProbabilityCriterion::PNorm { p: 2.0 }.weight(b)).collect();
            let wm: Vec<f64> = blocks
                .iter()
                .map(|b| ProbabilityCriterion::TwoNormPower { mu: 2.0 }.weight(b))
                .collect();
            let pp = block_probabilities(&wp, &admitted).unwrap();
            let pm = block_probabilities(&wm, &admitted).unwrap();
            for (x, y) in pp.iter().zip(&pm) {
                assert!((x - y).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_block(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
        let draws = 100_000;
        let hits = (0..draws).filter(|_| sample_block(&[0.5, 0.5], &mut rng) == 0).count();
        assert!((hits as f64 / draws as f64 - 0.5).abs() < 0.01);
        let seq = |s| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            (0..50).map(|_| sample_block(&[0.2, 0.3, 0.5], &mut r)).collect::<Vec<_>>()
        };
        assert_eq!(seq(9), seq(9));
    }

    #[test]
    fn invalid_partitions_rejected() {
        let a = generate_dense(4, 2, 0).unwrap();
        assert!(Partition::from_index_sets(&a, vec![vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(Partition::from_index_sets(&a, vec![vec![0, 1], vec![2]]).is_err());
        assert!(Partition::from_index_sets(&a, vec![vec![0, 1, 2, 3], vec![]]).is_err());
        assert_eq!(Partition::singletons(&a).len(), 4);
        assert_eq!(Partition::whole(&a).len(), 1);
    }

    #[test]
    fn greedy_selection_single_block() {
        let a = generate_dense(6, 3, 2).unwrap();
        let p = Partition::whole(&a);
        let r = vec![1.0, -1.0, 2.0, 0.5, -3.0, 0.0];
        let sel = greedy_select(&a, &p, &r, 0.5, ProbabilityCriterion::default()).unwrap();
        assert!((sel.epsilon - 1.0 / a.frob_sq()).abs() < 1e-15);
        assert_eq!(sel.admitted, vec![0]);
        assert_eq!(sel.probabilities, vec![1.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn partition_is_balanced_cover(m in 1usize..200, t_frac in 0.0f64..1.0, seed in any::<u64>()) {
            let t = 1 + ((m - 1) as f64 * t_frac) as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sets = random_index_sets(m, t, &mut rng).unwrap();
            prop_assert_eq!(sets.len(), t);
            let sizes: Vec<usize> = sets.iter().map(Vec::len).collect();
            let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
            prop_assert!(lo >= 1 && hi - lo <= 1);
            let mut flat = sets.concat();
            flat.sort();
            prop_assert_eq!(flat, (0..m).collect::<Vec<_>>());
        }

        #[test]
        fn greedy_invariants(seed in any::<u64>(), t in 1usize..9, theta in 0.0f64..=1.0) {
            let a = generate_dense(24, 4, seed).unwrap();
            let mut rng = seeded(seed, Stream::Solver);
            let part = Partition::random(&a, t, &mut rng).unwrap();
            let r: Vec<f64> = (0..24).map(|_| StandardNormal.sample(&mut rng)).collect();
            prop_assume!(r.iter().any(|&v| v > 0.0));
            let sel = greedy_select(&a, &part, &r, theta, ProbabilityCriterion::TwoNormPower { mu: 1.5 }).unwrap();
            prop_assert!(sel.epsilon * a.frob_sq() >= 1.0 - 1e-12);
            prop_assert!(sel.admitted.contains(&sel.argmax));
            let floor = sel.total_residual_sq / a.frob_sq();
            for &i in &sel.admitted {
                prop_assert!(sel.block_scores[i] >= floor * (1.0 - 1e-12));
            }
            let sum: f64 = sel.probabilities.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-14);
            for (i, &p) in sel.probabilities.iter().enumerate() {
                prop_assert_eq!(p > 0.0, sel.admitted.contains(&i));
            }
        }
    }
}
