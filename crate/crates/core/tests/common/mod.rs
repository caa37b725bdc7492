#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sparse_vote::linalg::{dot, normalize_l2};
use sparse_vote::omp::exact_recovery_coefficient;
use sparse_vote::{Mat, SparseCode};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian entries, columns scaled to unit norm.
pub fn gaussian_dictionary(rng: &mut ChaCha8Rng, m: usize, p: usize) -> Mat {
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|_| {
            let raw: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
            normalize_l2(&raw)
        })
        .collect();
    Mat::from_columns(&cols).unwrap()
}

pub struct Planted {
    pub dictionary: Mat,
    pub support: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub signal: Vec<f64>,
    pub recovery_coefficient: f64,
}

/// Draws a Gaussian dictionary and a `k`-sparse signal whose support meets
/// the exact recovery condition. Coefficients are `+-U(1, 2)`.
pub fn planted_instance(rng: &mut ChaCha8Rng, m: usize, p: usize, k: usize) -> Planted {
    loop {
        let dictionary = gaussian_dictionary(rng, m, p);
        for _ in 0..50 {
            let mut support: Vec<usize> = sample(rng, p, k).into_vec();
            support.sort_unstable();
            let erc = exact_recovery_coefficient(&dictionary, &support).unwrap();
            if erc >= 1.0 {
                continue;
            }
            let mut coeffs = vec![0.0; p];
            for &j in &support {
                let mag: f64 = rng.random_range(1.0..2.0);
                coeffs[j] = if rng.random::<bool>() { mag } else { -mag };
            }
            let signal = dictionary.mul_vec(&coeffs).unwrap();
            return Planted {
                dictionary,
                support,
                coeffs,
                signal,
                recovery_coefficient: erc,
            };
        }
    }
}

pub fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

/// Worst violations of the OMP residual invariants for one solve:
/// (largest increase between consecutive residual norms,
///  largest |<psi_i, r>| over selected atoms with r = y - A coeffs).
pub fn residual_invariants(a: &Mat, y: &[f64], code: &SparseCode) -> (f64, f64) {
    let increase = code
        .residual_norms
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let fit = a.mul_vec(&code.coeffs).unwrap();
    let r: Vec<f64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
    let corr = code
        .support
        .iter()
        .map(|&j| dot(a.col(j), &r).abs())
        .fold(0.0, f64::max);
    (increase, corr)
}
