//! Point estimators of ordinal pattern dependence.
//!
//! All frequency estimators divide window counts by the number of observations
//! `n`, not by the number of windows `n - h`. The AWOPD-value and comparison
//! value are the exception: they are counts, and the comparison value uses
//! pattern frequencies renormalized to sum to one so that it reads as the
//! expected weight sum under independence.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::longrun::{self, KernelConfig};
use crate::metrics::{PairWeights, PatternMetric, WeightFunction};
use crate::patterns::{pattern_sequence, Order, PatternSequence};

/// Two equal-length series of finite values, optionally labelled by timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSeries {
    x: Vec<f64>,
    y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamps: Option<Vec<String>>,
}

impl PairedSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::build(x, y, None)
    }

    pub fn with_timestamps(x: Vec<f64>, y: Vec<f64>, timestamps: Vec<String>) -> Result<Self> {
        Self::build(x, y, Some(timestamps))
    }

    fn build(x: Vec<f64>, y: Vec<f64>, timestamps: Option<Vec<String>>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid(format!("series lengths differ ({} vs {})", x.len(), y.len())));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != x.len() {
                return Err(Error::invalid(format!("{} timestamps for {} observations", ts.len(), x.len())));
            }
        }
        for (name, v) in [("x", &x), ("y", &y)] {
            if let Some(i) = v.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite value {} in {name} at position {i}", v[i])));
            }
        }
        Ok(PairedSeries { x, y, timestamps })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(X, -Y)`, which turns reflected coincidences into coincidences.
    pub fn negated_y(&self) -> PairedSeries {
        PairedSeries { x: self.x.clone(), y: self.y.iter().map(|v| -v).collect(), timestamps: self.timestamps.clone() }
    }

    /// `(Y, X)`.
    pub fn swapped(&self) -> PairedSeries {
        PairedSeries { x: self.y.clone(), y: self.x.clone(), timestamps: self.timestamps.clone() }
    }

    /// Observations `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Result<PairedSeries> {
        let end = start
            .checked_add(len)
            .filter(|&e| e <= self.len())
            .ok_or_else(|| Error::invalid(format!("slice {start}+{len} exceeds series length {}", self.len())))?;
        Ok(PairedSeries {
            x: self.x[start..end].to_vec(),
            y: self.y[start..end].to_vec(),
            timestamps: self.timestamps.as_ref().map(|t| t[start..end].to_vec()),
        })
    }
}

/// Pattern sequences of both series, the input to every estimator.
#[derive(Debug, Clone)]
pub struct PairPatterns {
    n: usize,
    x: PatternSequence,
    y: PatternSequence,
}

impl PairPatterns {
    pub fn new(s: &PairedSeries, h: Order) -> Result<Self> {
        Ok(PairPatterns { n: s.len(), x: pattern_sequence(s.x(), h)?, y: pattern_sequence(s.y(), h)? })
    }

    /// Number of observations `n` (windows number `n - h`).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> Order {
        self.x.h()
    }

    pub fn windows(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &PatternSequence {
        &self.x
    }

    pub fn y(&self) -> &PatternSequence {
        &self.y
    }

    /// 1.0 where the two windows share a pattern, 0.0 elsewhere.
    pub fn coincidence_indicators(&self) -> Vec<f64> {
        self.x.indices().iter().zip(self.y.indices()).map(|(a, b)| if a == b { 1.0 } else { 0.0 }).collect()
    }

    pub fn coincidences(&self) -> usize {
        self.x.indices().iter().zip(self.y.indices()).filter(|(a, b)| a == b).count()
    }

    pub fn p_hat(&self) -> f64 {
        self.coincidences() as f64 / self.n as f64
    }

    /// `(q_x, q_y)` with denominator `n`.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        (frequencies(&self.x, self.n), frequencies(&self.y, self.n))
    }

    pub fn q_hat(&self) -> f64 {
        let (qx, qy) = self.marginals();
        inner_product(&qx, &qy)
    }

    /// `w(d(pattern of x window i, pattern of y window i))` for every window.
    pub(crate) fn weight_series(&self, pw: &PairWeights<'_>) -> Vec<f64> {
        self.x.indices().iter().zip(self.y.indices()).map(|(&a, &b)| pw.weight(a as usize, b as usize)).collect()
    }
}

fn frequencies(seq: &PatternSequence, n: usize) -> Vec<f64> {
    let denom = n as f64;
    seq.counts().into_iter().map(|c| c as f64 / denom).collect()
}

// Sums over the support of `a` only, in index order.
fn inner_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).filter(|(&u, _)| u != 0.0).map(|(u, v)| u * v).sum()
}

/// Share of windows with coincident patterns, `#coincidences / n`.
pub fn estimate_p(s: &PairedSeries, h: Order) -> Result<f64> {
    Ok(PairPatterns::new(s, h)?.p_hat())
}

/// Pattern frequencies of one series, `#windows with pattern / n`, indexed by pattern.
pub fn estimate_q_marginals(series: &[f64], h: Order) -> Result<Vec<f64>> {
    Ok(frequencies(&pattern_sequence(series, h)?, series.len()))
}

/// `sum_pi q_x(pi) q_y(pi)`.
pub fn estimate_q(s: &PairedSeries, h: Order) -> Result<f64> {
    let qx = estimate_q_marginals(s.x(), h)?;
    let qy = estimate_q_marginals(s.y(), h)?;
    Ok(inner_product(&qx, &qy))
}

/// Reflected coincidences: `estimate_p` on `(X, -Y)`.
pub fn estimate_r(s: &PairedSeries, h: Order) -> Result<f64> {
    estimate_p(&s.negated_y(), h)
}

/// `estimate_q` on `(X, -Y)`.
pub fn estimate_s(s: &PairedSeries, h: Order) -> Result<f64> {
    estimate_q(&s.negated_y(), h)
}

/// Standardized coefficient `((p-q)/(1-q))^+ - ((r-s)/(1-s))^+`.
///
/// When `q = 1` the first term is 1, and when `s = 1` the second term is 1;
/// these are the degenerate cases of single-pattern series.
pub fn ord_coefficient(p: f64, q: f64, r: f64, s: f64) -> Result<f64> {
    for (name, v) in [("p", p), ("q", q), ("r", r), ("s", s)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} = {v} is outside [0, 1]")));
        }
    }
    let term = |a: f64, b: f64| if b == 1.0 { 1.0 } else { ((a - b) / (1.0 - b)).max(0.0) };
    Ok((term(p, q) - term(r, s)).clamp(-1.0, 1.0))
}

/// Sum of `w(d(.,.))` over the `n - h` window pairs.
pub fn awopd_value(s: &PairedSeries, h: Order, d: &PatternMetric, w: &WeightFunction) -> Result<f64> {
    Ok(estimate_awopd(s, h, d, w)?.awopd_value)
}

/// `(n - h) * sum_{pi, sigma} w(d(pi, sigma)) q_x(pi) q_y(sigma)` with frequencies summing to one.
pub fn comparison_value(s: &PairedSeries, h: Order, d: &PatternMetric, w: &WeightFunction) -> Result<f64> {
    Ok(estimate_awopd(s, h, d, w)?.comparison_value)
}

/// Weighted dependence estimates for one (metric, weight) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwopdEstimate {
    pub h: usize,
    pub n: usize,
    pub metric: String,
    pub weight: String,
    /// Unnormalized weight sum over window pairs.
    pub awopd_value: f64,
    /// Expected weight sum under independence, from frequencies summing to one.
    pub comparison_value: f64,
    /// Always `"probability"`: the comparison value's marginals are renormalized.
    pub comparison_normalization: String,
    /// Weight mean minus its independence benchmark, both with denominator `n`.
    pub d_hat: f64,
    /// Number of exactly coincident window pairs.
    pub coincidences: usize,
    /// Expected number of coincidences under independence.
    pub classical_comparison: f64,
}

pub fn estimate_awopd(s: &PairedSeries, h: Order, d: &PatternMetric, w: &WeightFunction) -> Result<AwopdEstimate> {
    let pp = PairPatterns::new(s, h)?;
    let pw = PairWeights::new(d, w, h)?;
    Ok(awopd_from_patterns(&pp, &pw, d, w))
}

pub(crate) fn awopd_from_patterns(
    pp: &PairPatterns,
    pw: &PairWeights<'_>,
    d: &PatternMetric,
    w: &WeightFunction,
) -> AwopdEstimate {
    let n = pp.n() as f64;
    let windows = pp.windows() as f64;
    let weights = pp.weight_series(pw);
    let awopd_value: f64 = weights.iter().sum();

    let cx = pp.x().counts();
    let cy = pp.y().counts();
    let support_x: Vec<usize> = (0..cx.len()).filter(|&i| cx[i] > 0).collect();
    let support_y: Vec<usize> = (0..cy.len()).filter(|&i| cy[i] > 0).collect();

    // independence benchmark sum_{pi,sigma} w q_x(pi) q_y(sigma) for a given denominator
    let benchmark = |denom: f64| -> f64 {
        let mut total = 0.0;
        for &i in &support_x {
            let inner: f64 = support_y.iter().map(|&j| pw.weight(i, j) * (cy[j] as f64 / denom)).sum();
            total += (cx[i] as f64 / denom) * inner;
        }
        total
    };
    let d_hat = awopd_value / n - benchmark(n);
    let comparison_value = windows * benchmark(windows);

    let qx: Vec<f64> = cx.iter().map(|&c| c as f64 / windows).collect();
    let qy: Vec<f64> = cy.iter().map(|&c| c as f64 / windows).collect();

    AwopdEstimate {
        h: pp.h().get(),
        n: pp.n(),
        metric: d.name().to_string(),
        weight: w.name(),
        awopd_value,
        comparison_value,
        comparison_normalization: "probability".into(),
        d_hat,
        coincidences: pp.coincidences(),
        classical_comparison: windows * inner_product(&qx, &qy),
    }
}

/// A symmetric confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// All classical dependence estimates of one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceEstimates {
    pub h: usize,
    pub n: usize,
    pub p_hat: f64,
    pub q_hat: f64,
    pub r_hat: f64,
    pub s_hat: f64,
    pub ord_hat: f64,
    pub q_x: Vec<f64>,
    pub q_y: Vec<f64>,
    /// `sigma_hat / sqrt(n)`; absent when the long-run variance is degenerate.
    pub se_p: Option<f64>,
    /// `gamma_hat / sqrt(n)`; absent above the matrix dimension guard.
    pub se_q: Option<f64>,
    pub level: f64,
    pub ci_p: Option<Interval>,
    pub ci_q: Option<Interval>,
}

impl DependenceEstimates {
    /// Point estimates, plus standard errors and `1 - level` confidence intervals
    /// when `kernel` is given.
    pub fn compute(s: &PairedSeries, h: Order, kernel: Option<&KernelConfig>, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::invalid(format!("level {level} must lie in (0, 1)")));
        }
        let pp = PairPatterns::new(s, h)?;
        let reflected = PairPatterns::new(&s.negated_y(), h)?;
        let (q_x, q_y) = pp.marginals();
        let p_hat = pp.p_hat();
        let q_hat = inner_product(&q_x, &q_y);
        let r_hat = reflected.p_hat();
        let s_hat = reflected.q_hat();
        let ord_hat = ord_coefficient(p_hat, q_hat, r_hat, s_hat)?;

        let n = s.len();
        let sqrt_n = (n as f64).sqrt();
        let (mut se_p, mut se_q) = (None, None);
        if let Some(cfg) = kernel {
            let z: Vec<f64> = pp.coincidence_indicators().iter().map(|v| v - p_hat).collect();
            if z.len() >= 2 {
                let var = longrun::longrun_variance(&z, n, cfg)?;
                if var.value > 0.0 {
                    se_p = Some(var.value.sqrt() / sqrt_n);
                }
            }
            if h.get() <= longrun::MATRIX_MAX_ORDER || cfg.allow_large_dimension {
                let g2 = longrun::gamma2_from_patterns(&pp, cfg)?;
                se_q = Some(g2.max(0.0).sqrt() / sqrt_n);
            }
        }
        let z = Normal::standard().inverse_cdf(1.0 - level / 2.0);
        let interval = |est: f64, se: Option<f64>| se.map(|se| Interval { lower: est - z * se, upper: est + z * se });
        Ok(DependenceEstimates {
            h: h.get(),
            n,
            p_hat,
            q_hat,
            r_hat,
            s_hat,
            ord_hat,
            ci_p: interval(p_hat, se_p),
            ci_q: interval(q_hat, se_q),
            q_x,
            q_y,
            se_p,
            se_q,
            level,
        })
    }
}
