//! Kernel estimators of long-run variances and covariance matrices.
//!
//! For a demeaned summand series `z_1, ..., z_m` the estimate is
//!
//! ```text
//! (1/n) * sum_{i,j} k((i - j) / b_n) * z_i * z_j
//! ```
//!
//! with the observation count `n = m + h` as divisor. Only lags inside the
//! kernel support are visited, so the cost is `O(m * b_n)`. The matrix versions
//! apply the same sum to vectors of demeaned pattern indicators.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{PairPatterns, PairedSeries};
use crate::metrics::{PairWeights, PatternMetric, WeightFunction};
use crate::patterns::Order;

/// Largest order for the `2 (h+1)!`-dimensional matrix estimates, without override.
pub const MATRIX_MAX_ORDER: usize = 4;

/// Symmetric kernel with `k(0) = 1`.
#[derive(Clone)]
pub enum Kernel {
    /// `k(x) = (1 - |x|)` on `[-1, 1]`, zero outside.
    Bartlett,
    /// User kernel, assumed zero for `|x| >= support`.
    Custom { name: String, f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, support: f64 },
}

impl Kernel {
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: f64,
    ) -> Result<Self> {
        let name = name.into();
        if !(support.is_finite() && support > 0.0) {
            return Err(Error::invalid(format!("kernel `{name}` needs a positive finite support")));
        }
        if f(0.0) != 1.0 {
            return Err(Error::invalid(format!("kernel `{name}` must equal 1 at 0")));
        }
        for i in 1..=64 {
            let x = support * i as f64 / 64.0;
            let (a, b) = (f(x), f(-x));
            if a != b || !(0.0..=1.0).contains(&a) {
                return Err(Error::invalid(format!("kernel `{name}` must be symmetric with values in [0, 1]")));
            }
        }
        Ok(Kernel::Custom { name, f: Arc::new(f), support })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Kernel::Bartlett => (1.0 - x.abs()).max(0.0),
            Kernel::Custom { f, support, .. } => {
                if x.abs() >= *support {
                    0.0
                } else {
                    f(x)
                }
            }
        }
    }

    fn support(&self) -> f64 {
        match self {
            Kernel::Bartlett => 1.0,
            Kernel::Custom { support, .. } => *support,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Kernel::Bartlett => "bartlett",
            Kernel::Custom { name, .. } => name,
        }
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bandwidth `b_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Natural logarithm of the number of observations.
    LogN,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    /// Lifts the `h <= 4` guard on matrix-valued estimates.
    pub allow_large_dimension: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { kernel: Kernel::Bartlett, bandwidth: Bandwidth::LogN, allow_large_dimension: false }
    }
}

impl KernelConfig {
    pub fn with_bandwidth(bandwidth: f64) -> Self {
        KernelConfig { bandwidth: Bandwidth::Fixed(bandwidth), ..Default::default() }
    }

    /// `b_n` for `n` observations.
    pub fn bandwidth_for(&self, n: usize) -> Result<f64> {
        let b = match self.bandwidth {
            Bandwidth::LogN => (n as f64).ln(),
            Bandwidth::Fixed(b) => b,
        };
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {b} for n = {n}")));
        }
        Ok(b)
    }

    // (lag, weight) pairs with nonzero weight for lags 1..m
    fn lag_weights(&self, m: usize, b: f64) -> Vec<(usize, f64)> {
        let reach = self.kernel.support() * b;
        (1..m)
            .take_while(|&l| (l as f64) < reach)
            .map(|l| (l, self.kernel.eval(l as f64 / b)))
            .filter(|&(_, w)| w != 0.0)
            .collect()
    }

    fn check_dimension(&self, h: Order) -> Result<()> {
        if h.get() > MATRIX_MAX_ORDER && !self.allow_large_dimension {
            return Err(Error::DimensionGuard { h: h.get(), limit: MATRIX_MAX_ORDER });
        }
        Ok(())
    }
}

/// A long-run variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongRunVariance {
    pub value: f64,
    /// The raw sum was negative (possible only for non-Bartlett kernels) and was clamped to 0.
    pub clamped: bool,
    pub bandwidth: f64,
}

/// Kernel long-run variance of the demeaned series `z` with divisor `n`.
pub fn longrun_variance(z: &[f64], n: usize, cfg: &KernelConfig) -> Result<LongRunVariance> {
    let m = z.len();
    if m < 2 {
        return Err(Error::invalid(format!("long-run variance needs at least 2 summands, got {m}")));
    }
    if n < m {
        return Err(Error::invalid(format!("divisor n = {n} is smaller than the {m} summands")));
    }
    let b = cfg.bandwidth_for(n)?;
    let mut total: f64 = z.iter().map(|v| v * v).sum();
    for (lag, w) in cfg.lag_weights(m, b) {
        let cross: f64 = z.iter().zip(&z[lag..]).map(|(a, c)| a * c).sum();
        total += 2.0 * w * cross;
    }
    let raw = total / n as f64;
    Ok(LongRunVariance { value: raw.max(0.0), clamped: raw < 0.0, bandwidth: b })
}

// (1/n) sum_{i,j} k((i-j)/b) (u_i - mean)(u_j - mean)^T for sparse rows u_i with K nonzeros.
//
// With A = {0..m-l} and B = {l..m} the lag-l block is
//   sum_i u_i u_{i+l}^T - (sum_A u) mean^T - mean (sum_B u)^T + (m-l) mean mean^T,
// so only the first term touches every row.
fn kernel_outer_sum<const K: usize>(
    rows: &[[(usize, f64); K]],
    mean: &DVector<f64>,
    n: usize,
    cfg: &KernelConfig,
) -> Result<DMatrix<f64>> {
    let m = rows.len();
    let dim = mean.len();
    let b = cfg.bandwidth_for(n)?;

    let mut total_u = DVector::<f64>::zeros(dim);
    for row in rows {
        for &(a, v) in row {
            total_u[a] += v;
        }
    }

    let lag_block = |lag: usize| -> DMatrix<f64> {
        let mut g = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..m - lag {
            for &(a, va) in &rows[i] {
                for &(c, vc) in &rows[i + lag] {
                    g[(a, c)] += va * vc;
                }
            }
        }
        // sum over A excludes the last `lag` rows, sum over B excludes the first `lag` rows
        let mut sum_a = total_u.clone();
        for row in &rows[m - lag..] {
            for &(a, v) in row {
                sum_a[a] -= v;
            }
        }
        let mut sum_b = total_u.clone();
        for row in &rows[..lag] {
            for &(a, v) in row {
                sum_b[a] -= v;
            }
        }
        g -= &sum_a * mean.transpose();
        g -= mean * sum_b.transpose();
        g += (m - lag) as f64 * (mean * mean.transpose());
        g
    };

    let mut sigma = lag_block(0);
    for (lag, w) in cfg.lag_weights(m, b) {
        let g = lag_block(lag);
        sigma += w * (&g + g.transpose());
    }
    sigma /= n as f64;
    Ok(sigma)
}

/// Kernel covariance matrix of the demeaned indicator vectors
/// `V_i = ((1{x window i = pi} - q_x(pi))_pi, (1{y window i = pi} - q_y(pi))_pi)`.
///
/// The result has size `2 (h+1)!`; x patterns come first.
pub fn longrun_cov_matrix(s: &PairedSeries, h: Order, cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    cfg.check_dimension(h)?;
    cov_matrix_from_patterns(&PairPatterns::new(s, h)?, cfg)
}

pub(crate) fn cov_matrix_from_patterns(pp: &PairPatterns, cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    cfg.check_dimension(pp.h())?;
    let count = pp.h().pattern_count();
    let (qx, qy) = pp.marginals();
    let mean = DVector::from_iterator(2 * count, qx.into_iter().chain(qy));
    let rows: Vec<[(usize, f64); 2]> = pp
        .x()
        .indices()
        .iter()
        .zip(pp.y().indices())
        .map(|(&a, &b)| [(a as usize, 1.0), (count + b as usize, 1.0)])
        .collect();
    kernel_outer_sum(&rows, &mean, pp.n(), cfg)
}

/// Long-run variance estimate of `q_hat`: the quadratic form of the covariance
/// matrix with the gradient `(q_y, q_x)`.
pub fn gamma2_q(s: &PairedSeries, h: Order, cfg: &KernelConfig) -> Result<f64> {
    cfg.check_dimension(h)?;
    gamma2_from_patterns(&PairPatterns::new(s, h)?, cfg)
}

pub(crate) fn gamma2_from_patterns(pp: &PairPatterns, cfg: &KernelConfig) -> Result<f64> {
    let sigma = cov_matrix_from_patterns(pp, cfg)?;
    let (qx, qy) = pp.marginals();
    let grad = DVector::from_iterator(sigma.nrows(), qy.into_iter().chain(qx));
    Ok(grad.dot(&(&sigma * &grad)))
}

/// Long-run quantities of the weighted dependence estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AwopdLongRun {
    /// Long-run variance of the weight series.
    pub a_hat: f64,
    pub a_clamped: bool,
    /// Delta-method variance of `d_hat`; absent above the dimension guard.
    pub gamma2: Option<f64>,
}

/// `a_hat` for the weight series `w(d(., .))` and, within the dimension guard,
/// `gamma2 = alpha' Sigma alpha` from the `(2 (h+1)! + 1)`-dimensional kernel matrix.
pub fn awopd_longrun(
    s: &PairedSeries,
    h: Order,
    d: &PatternMetric,
    w: &WeightFunction,
    cfg: &KernelConfig,
) -> Result<AwopdLongRun> {
    let pp = PairPatterns::new(s, h)?;
    let pw = PairWeights::new(d, w, h)?;
    awopd_longrun_from_patterns(&pp, &pw, cfg)
}

pub(crate) fn awopd_longrun_from_patterns(
    pp: &PairPatterns,
    pw: &PairWeights<'_>,
    cfg: &KernelConfig,
) -> Result<AwopdLongRun> {
    let n = pp.n();
    let weights = pp.weight_series(pw);
    let mean_w = weights.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = weights.iter().map(|v| v - mean_w).collect();
    let a = longrun_variance(&z, n, cfg)?;

    let gamma2 = if pp.h().get() <= MATRIX_MAX_ORDER || cfg.allow_large_dimension {
        let sigma = awopd_matrix(pp, &weights, mean_w, cfg)?;
        let alpha = awopd_gradient(pp, pw);
        Some(alpha.dot(&(&sigma * &alpha)))
    } else {
        None
    };
    Ok(AwopdLongRun { a_hat: a.value, a_clamped: a.clamped, gamma2 })
}

// Kernel matrix of (w_i - mean_w, x indicators - q_x, y indicators - q_y).
pub(crate) fn awopd_matrix(
    pp: &PairPatterns,
    weights: &[f64],
    mean_w: f64,
    cfg: &KernelConfig,
) -> Result<DMatrix<f64>> {
    let count = pp.h().pattern_count();
    let (qx, qy) = pp.marginals();
    let mean = DVector::from_iterator(1 + 2 * count, std::iter::once(mean_w).chain(qx).chain(qy));
    let rows: Vec<[(usize, f64); 3]> = pp
        .x()
        .indices()
        .iter()
        .zip(pp.y().indices())
        .zip(weights)
        .map(|((&a, &b), &wv)| [(0, wv), (1 + a as usize, 1.0), (1 + count + b as usize, 1.0)])
        .collect();
    kernel_outer_sum(&rows, &mean, pp.n(), cfg)
}

// (1, -(sum_sigma w(pi, sigma) q_y(sigma))_pi, -(sum_sigma w(sigma, pi) q_x(sigma))_pi)
pub(crate) fn awopd_gradient(pp: &PairPatterns, pw: &PairWeights<'_>) -> DVector<f64> {
    let count = pw.pattern_count();
    let (qx, qy) = pp.marginals();
    let support_x: Vec<usize> = (0..count).filter(|&i| qx[i] != 0.0).collect();
    let support_y: Vec<usize> = (0..count).filter(|&i| qy[i] != 0.0).collect();
    let mut alpha = DVector::<f64>::zeros(1 + 2 * count);
    alpha[0] = 1.0;
    for pi in 0..count {
        alpha[1 + pi] = -support_y.iter().map(|&sg| pw.weight(pi, sg) * qy[sg]).sum::<f64>();
        alpha[1 + count + pi] = -support_x.iter().map(|&sg| pw.weight(sg, pi) * qx[sg]).sum::<f64>();
    }
    alpha
}

/// Every long-run quantity for one series pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRunEstimates {
    /// Long-run variance of the coincidence indicators.
    pub sigma2: f64,
    /// Row-major `2 (h+1)!` square covariance matrix, within the dimension guard.
    pub sigma_matrix: Option<Vec<f64>>,
    pub gamma2_q: Option<f64>,
    pub awopd_a: Option<f64>,
    pub awopd_gamma2: Option<f64>,
}

impl LongRunEstimates {
    pub fn compute(
        s: &PairedSeries,
        h: Order,
        cfg: &KernelConfig,
        awopd: Option<(&PatternMetric, &WeightFunction)>,
    ) -> Result<Self> {
        let pp = PairPatterns::new(s, h)?;
        let p = pp.p_hat();
        let z: Vec<f64> = pp.coincidence_indicators().iter().map(|v| v - p).collect();
        let sigma2 = longrun_variance(&z, pp.n(), cfg)?.value;
        let within = h.get() <= MATRIX_MAX_ORDER || cfg.allow_large_dimension;
        let (sigma_matrix, gamma2_q) = if within {
            let m = cov_matrix_from_patterns(&pp, cfg)?;
            let (qx, qy) = pp.marginals();
            let g = DVector::from_iterator(m.nrows(), qy.into_iter().chain(qx));
            let g2 = g.dot(&(&m * &g));
            (Some(m.transpose().as_slice().to_vec()), Some(g2))
        } else {
            (None, None)
        };
        let (awopd_a, awopd_gamma2) = match awopd {
            Some((d, w)) => {
                let pw = PairWeights::new(d, w, h)?;
                let lr = awopd_longrun_from_patterns(&pp, &pw, cfg)?;
                (Some(lr.a_hat), lr.gamma2)
            }
            None => (None, None),
        };
        Ok(LongRunEstimates { sigma2, sigma_matrix, gamma2_q, awopd_a, awopd_gamma2 })
    }
}
