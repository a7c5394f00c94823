use grabp::analysis::{zeta, Projector};
use grabp::problem::random_dense_problem;
use grabp::rng::{seeded, Stream};
use grabp::solvers::{Grabp, GrabpConfig, SolverState, StepsizePolicy, StepsizeSpec};
use grabp::linalg::positive_sum_of_squares;
use proptest::prelude::*;

fn check_steps(seed: u64, t: usize, stepsize: StepsizeSpec) -> Result<(), TestCaseError> {
    let p = random_dense_problem(20, 5, seed).unwrap();
    let mut rng = seeded(seed, Stream::Solver);
    let mut kernel = Grabp::new(&p, &GrabpConfig::new(t, stepsize), &mut rng).unwrap();
    prop_assert!((kernel.zeta() - zeta(p.a(), kernel.partition())).abs() == 0.0);
    let gain = match *kernel.policy() {
        StepsizePolicy::Constant { alpha, zeta } => 2.0 * alpha - alpha * alpha * zeta,
        StepsizePolicy::Adaptive { w, zeta } => (2.0 * w - w * w) / zeta,
    };
    let x0: Vec<f64> = p.certificate().unwrap().iter().map(|c| c + 4.0).collect();
    let mut state = SolverState::new(&p, x0, rng).unwrap();
    let mut oracle = Projector::new(&p);
    let mut dist = oracle.distance(&state.x, 1e-10).unwrap();
    for _ in 0..40 {
        if positive_sum_of_squares(&state.residual) == 0.0 {
            break;
        }
        let info = kernel.step(&p, &mut state).unwrap();
        let next = oracle.distance(&state.x, 1e-10).unwrap();
        prop_assert!(next * next <= dist * dist - gain * info.block_term + 1e-8);
        prop_assert!(next * next <= dist * dist + 1e-9);
        dist = next;
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constant_stepsize_contracts(seed in any::<u64>(), t in 1usize..8, scale in 0.1f64..1.95) {
        check_steps(seed, t, StepsizeSpec::ConstantScaled { scale })?;
    }

    #[test]
    fn adaptive_stepsize_contracts(seed in any::<u64>(), t in 1usize..8, w in 0.1f64..1.95) {
        check_steps(seed, t, StepsizeSpec::Adaptive { w })?;
    }
}
