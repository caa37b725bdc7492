mod common;

use proptest::prelude::*;
use sparse_vote::linalg::dot;
use sparse_vote::omp::Termination;
use sparse_vote::{l0_oracle, omp_solve, residual_norm, StoppingRule};

use common::{gaussian_dictionary, residual_invariants, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_invariants_hold(seed in any::<u64>(), m in 2usize..16, p in 1usize..24, k in 1usize..8) {
        let mut r = rng(seed);
        let a = gaussian_dictionary(&mut r, m, p);
        let y: Vec<f64> = gaussian_dictionary(&mut r, m, 1).col(0).to_vec();
        let code = omp_solve(&a, &y, StoppingRule::ExactSparsity(k)).unwrap();
        let (increase, corr) = residual_invariants(&a, &y, &code);
        prop_assert!(increase <= 1e-9);
        prop_assert!(corr <= 1e-8);
        prop_assert!(code.support.len() <= k.min(m).min(p));
        prop_assert_eq!(code.residual_norms.len(), code.iterations + 1);
        let refit = residual_norm(&a, &code.coeffs, &y).unwrap();
        prop_assert!((refit - code.final_residual_norm).abs() <= 1e-9);
    }

    #[test]
    fn first_pick_is_the_largest_correlation(seed in any::<u64>(), m in 2usize..12, p in 2usize..20) {
        let mut r = rng(seed);
        let a = gaussian_dictionary(&mut r, m, p);
        let y: Vec<f64> = gaussian_dictionary(&mut r, m, 1).col(0).to_vec();
        let code = omp_solve(&a, &y, StoppingRule::ExactSparsity(1)).unwrap();
        let mut best = 0;
        for j in 1..p {
            if dot(a.col(j), &y).abs() > dot(a.col(best), &y).abs() {
                best = j;
            }
        }
        prop_assert_eq!(code.support, vec![best]);
    }

    #[test]
    fn spanning_dictionary_reaches_zero_residual(seed in any::<u64>(), m in 1usize..10, extra in 0usize..6) {
        let mut r = rng(seed);
        let a = gaussian_dictionary(&mut r, m, m + extra);
        let y: Vec<f64> = gaussian_dictionary(&mut r, m, 1).col(0).to_vec();
        let code = omp_solve(&a, &y, StoppingRule::noiseless()).unwrap();
        prop_assert!(code.final_residual_norm <= 1e-8);
        prop_assert_eq!(code.termination, Termination::Rule);
    }

    #[test]
    fn oracle_is_never_worse(seed in any::<u64>(), m in 3usize..8, p in 3usize..10, k in 1usize..4) {
        let mut r = rng(seed);
        let a = gaussian_dictionary(&mut r, m, p);
        let y: Vec<f64> = gaussian_dictionary(&mut r, m, 1).col(0).to_vec();
        let greedy = omp_solve(&a, &y, StoppingRule::ExactSparsity(k)).unwrap();
        // eps 0 forces the oracle to its best support of size k
        let best = l0_oracle(&a, &y, k.min(m).min(p), 0.0).unwrap();
        prop_assert!(best.final_residual_norm <= greedy.final_residual_norm + 1e-9);
    }
}
