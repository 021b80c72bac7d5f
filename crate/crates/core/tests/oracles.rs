//! Library estimators against brute-force references on tie-rich fixtures.

mod common;

use common::oracle;
use ordpat::estimators::{estimate_awopd, estimate_p, estimate_q, estimate_q_marginals};
use ordpat::longrun::{awopd_longrun, gamma2_q, longrun_cov_matrix, longrun_variance, KernelConfig, LongRunEstimates};
use ordpat::metrics::{PatternMetric, WeightFunction};
use ordpat::patterns::{pattern_of, pattern_sequence};
use ordpat::{Order, PairedSeries};

const TOL: f64 = 1e-12;

fn cases() -> Vec<(u64, usize, usize, f64)> {
    let mut v = Vec::new();
    for h in 1..=3 {
        for (seed, n, grid) in [(1, 7, 0.5), (2, 40, 0.25), (3, 120, 0.1), (4, 300, 0.05)] {
            v.push((seed + 10 * h as u64, n, h, grid));
        }
    }
    v
}

fn close(a: f64, b: f64, what: &str) {
    assert!((a - b).abs() <= TOL * b.abs().max(1.0), "{what}: library {a} vs oracle {b}");
}

#[test]
fn patterns_and_ranks_match_enumeration() {
    for h in 1..=4 {
        let ranks = oracle::Ranks::new(h);
        let (x, _) = oracle::fixture(h as u64, 200, 0.3);
        let seq = pattern_sequence(&x, Order::new(h).unwrap()).unwrap();
        let naive = oracle::naive_ranks(&x, h, &ranks);
        assert_eq!(seq.indices().iter().map(|&v| v as usize).collect::<Vec<_>>(), naive);
        for i in 0..x.len() - h {
            assert_eq!(pattern_of(&x[i..=i + h]).unwrap().as_slice(), oracle::naive_pattern(&x[i..=i + h]).as_slice());
        }
    }
}

#[test]
fn point_estimates() {
    for (seed, n, h, grid) in cases() {
        let (x, y) = oracle::fixture(seed, n, grid);
        let s = PairedSeries::new(x.clone(), y.clone()).unwrap();
        let o = Order::new(h).unwrap();
        close(estimate_p(&s, o).unwrap(), oracle::p_hat(&x, &y, h), "p_hat");
        close(estimate_q(&s, o).unwrap(), oracle::q_hat(&x, &y, h), "q_hat");
        let ranks = oracle::Ranks::new(h);
        let lib = estimate_q_marginals(&x, o).unwrap();
        for (a, b) in lib.iter().zip(oracle::marginal(&x, h, &ranks)) {
            close(*a, b, "q_x");
        }
    }
}

#[test]
fn sigma2_matches_double_sum() {
    let cfg = KernelConfig::default();
    for (seed, n, h, grid) in cases() {
        let (x, y) = oracle::fixture(seed, n, grid);
        let s = PairedSeries::new(x.clone(), y.clone()).unwrap();
        let o = Order::new(h).unwrap();
        let lr = LongRunEstimates::compute(&s, o, &cfg, None).unwrap();
        close(lr.sigma2, oracle::sigma2(&x, &y, h), "sigma2");
    }
}

#[test]
fn covariance_matrix_and_gamma2() {
    let cfg = KernelConfig::default();
    for (seed, n, h, grid) in cases() {
        let (x, y) = oracle::fixture(seed, n, grid);
        let s = PairedSeries::new(x.clone(), y.clone()).unwrap();
        let o = Order::new(h).unwrap();
        let lib = longrun_cov_matrix(&s, o, &cfg).unwrap();
        let naive = oracle::cov_matrix(&x, &y, h);
        assert_eq!(lib.nrows(), naive.len());
        assert_eq!(lib.nrows(), 2 * o.pattern_count());
        let lr = LongRunEstimates::compute(&s, o, &cfg, None).unwrap();
        let flat = lr.sigma_matrix.unwrap();
        let d = naive.len();
        for a in 0..d {
            for c in 0..d {
                close(lib[(a, c)], naive[a][c], "Sigma entry");
                close(flat[a * d + c], naive[a][c], "row-major Sigma entry");
            }
        }
        let g = oracle::gamma2(&x, &y, h);
        close(gamma2_q(&s, o, &cfg).unwrap(), g, "gamma2");
        close(lr.gamma2_q.unwrap(), g, "gamma2 (bundle)");
    }
}

#[test]
fn weighted_estimates() {
    let cfg = KernelConfig::default();
    let (d, w) = (PatternMetric::L1, WeightFunction::l1_step());
    for (seed, n, h, grid) in cases() {
        let (x, y) = oracle::fixture(seed, n, grid);
        let s = PairedSeries::new(x.clone(), y.clone()).unwrap();
        let o = Order::new(h).unwrap();
        let est = estimate_awopd(&s, o, &d, &w).unwrap();
        let (value, cmp, d_hat) = oracle::awopd(&x, &y, h);
        close(est.awopd_value, value, "awopd value");
        close(est.comparison_value, cmp, "comparison value");
        close(est.d_hat, d_hat, "d_hat");
        let lr = awopd_longrun(&s, o, &d, &w, &cfg).unwrap();
        close(lr.a_hat, oracle::awopd_a(&x, &y, h), "a_hat");
        close(lr.gamma2.unwrap(), oracle::awopd_gamma2(&x, &y, h), "awopd gamma2");
        let bundle = LongRunEstimates::compute(&s, o, &cfg, Some((&d, &w))).unwrap();
        assert_eq!(bundle.awopd_a, Some(lr.a_hat));
        assert_eq!(bundle.awopd_gamma2, lr.gamma2);
    }
}

#[test]
fn longrun_variance_matches_double_sum() {
    let (x, _) = oracle::fixture(99, 250, 1e-6);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let z: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let lib = longrun_variance(&z, z.len() + 3, &KernelConfig::default()).unwrap();
    close(lib.value, oracle::longrun(&z, z.len() + 3), "longrun variance");
}
