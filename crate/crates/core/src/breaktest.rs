//! CUSUM tests for a change in the level of (weighted) ordinal pattern dependence.
//!
//! The summand series is the coincidence indicator (classical test) or the
//! weight series `w(d(., .))` (weighted test). Its demeaned partial sums are
//! scaled by `sqrt(n)` and by the square root of the kernel long-run variance;
//! under the null of no change the maximum absolute value converges to the
//! supremum of a Brownian bridge, whose law is the Kolmogorov distribution.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{PairPatterns, PairedSeries};
use crate::longrun::{longrun_variance, KernelConfig};
use crate::metrics::{PairWeights, PatternMetric, WeightFunction};
use crate::patterns::Order;

/// The Kolmogorov distribution, evaluated by truncated series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovDist {
    truncation: usize,
}

impl Default for KolmogorovDist {
    fn default() -> Self {
        KolmogorovDist { truncation: 100 }
    }
}

impl KolmogorovDist {
    pub fn new(truncation: usize) -> Result<Self> {
        if truncation < 10 {
            return Err(Error::invalid(format!("truncation must be at least 10, got {truncation}")));
        }
        Ok(KolmogorovDist { truncation })
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn cdf(&self, x: f64) -> f64 {
        kolmogorov_cdf(x, self)
    }

    pub fn quantile(&self, alpha: f64) -> f64 {
        kolmogorov_quantile(alpha, self)
    }
}

// Below this point the alternating series converges slowly; the equivalent
// theta-function form converges fast there.
const SERIES_SWITCH: f64 = 1.0;

/// `K(x) = 1 - 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2)` for `x > 0`, 0 otherwise.
///
/// For `x < 1` the identical expression
/// `sqrt(2 pi) / x * sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 x^2))` is summed instead.
pub fn kolmogorov_cdf(x: f64, dist: &KolmogorovDist) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    let value = if x < SERIES_SWITCH {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut sum = 0.0;
        for k in 1..=dist.truncation {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * pi2 / (8.0 * x * x)).exp();
            sum += term;
            if term == 0.0 {
                break;
            }
        }
        (2.0 * std::f64::consts::PI).sqrt() / x * sum
    } else {
        let mut sum = 0.0;
        for k in 1..=dist.truncation {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term == 0.0 {
                break;
            }
        }
        1.0 - 2.0 * sum
    };
    value.clamp(0.0, 1.0)
}

/// Upper-`alpha` quantile: the `x` with `K(x) = 1 - alpha`, by bisection on `[0.1, 5]`.
pub fn kolmogorov_quantile(alpha: f64, dist: &KolmogorovDist) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.1f64, 5.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid, dist) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Whether the statistic maximizes absolute or signed partial sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CusumForm {
    #[default]
    Absolute,
    /// Signed partial sums; detects only upward shifts of the early segment.
    OneSided,
}

#[derive(Debug, Clone)]
pub struct BreakTestConfig {
    pub kernel: KernelConfig,
    pub level: f64,
    pub form: CusumForm,
    pub kolmogorov: KolmogorovDist,
}

impl Default for BreakTestConfig {
    fn default() -> Self {
        BreakTestConfig {
            kernel: KernelConfig::default(),
            level: 0.05,
            form: CusumForm::Absolute,
            kolmogorov: KolmogorovDist::default(),
        }
    }
}

impl BreakTestConfig {
    pub fn with_level(level: f64) -> Self {
        BreakTestConfig { level, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakTestResult {
    pub n: usize,
    pub h: usize,
    /// Studentized statistic, the maximum of `trajectory`.
    pub statistic: f64,
    /// Un-studentized statistic `max_k |S_k| / sqrt(n)`.
    pub raw_statistic: f64,
    /// Square root of the long-run variance used for studentization.
    pub scale: f64,
    /// `|S_k| / (sqrt(n) * scale)` for `k = 1..=n-h` (signed for the one-sided form).
    pub trajectory: Vec<f64>,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    /// 1-based window index at which the trajectory peaks.
    pub argmax_k: usize,
    pub level: f64,
    pub form: CusumForm,
}

impl BreakTestResult {
    /// CSV with header `k,value,critical_value`, one row per window.
    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "value", "critical_value"])?;
        for (i, v) in self.trajectory.iter().enumerate() {
            w.write_record([(i + 1).to_string(), v.to_string(), self.critical_value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON object with the trajectory and test metadata.
    pub fn trajectory_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc {
            critical_value: f64,
            level: f64,
            statistic: f64,
            argmax_k: usize,
            trajectory: Vec<Point>,
        }
        #[derive(Serialize)]
        struct Point {
            k: usize,
            value: f64,
        }
        let doc = Doc {
            critical_value: self.critical_value,
            level: self.level,
            statistic: self.statistic,
            argmax_k: self.argmax_k,
            trajectory: self.trajectory.iter().enumerate().map(|(i, &value)| Point { k: i + 1, value }).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }
}

/// `|sum_{i<=k} (z_i - mean)| / (sqrt(n) * scale)` for `k = 1..=m`.
pub fn cusum_trajectory(z: &[f64], mean: f64, n: usize, scale: f64) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::invalid("CUSUM trajectory needs at least one summand"));
    }
    if scale == 0.0 {
        return Err(Error::DegenerateVariance { reason: "scale is zero".into(), raw_statistic: None });
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let denom = (n as f64).sqrt() * scale;
    Ok(partial_sums(z, mean).into_iter().map(|s| s.abs() / denom).collect())
}

fn partial_sums(z: &[f64], mean: f64) -> Vec<f64> {
    let mut acc = 0.0;
    z.iter()
        .map(|v| {
            acc += v - mean;
            acc
        })
        .collect()
}

/// Un-studentized `T_n = max_k |sum_{i<=k} (1{coincidence_i} - p_hat)| / sqrt(n)`.
pub fn raw_t_statistic(s: &PairedSeries, h: Order) -> Result<f64> {
    let pp = PairPatterns::new(s, h)?;
    let z = pp.coincidence_indicators();
    let mean = z.iter().sum::<f64>() / pp.n() as f64;
    Ok(raw_from_sums(&partial_sums(&z, mean), pp.n()))
}

fn raw_from_sums(sums: &[f64], n: usize) -> f64 {
    sums.iter().fold(0.0f64, |m, s| m.max(s.abs())) / (n as f64).sqrt()
}

/// Test for a change in the coincidence probability.
pub fn t_statistic(s: &PairedSeries, h: Order, cfg: &BreakTestConfig) -> Result<BreakTestResult> {
    let pp = PairPatterns::new(s, h)?;
    cusum_test(&pp.coincidence_indicators(), pp.n(), h, cfg)
}

/// Test for a change in the mean weight `w(d(., .))` of window pairs.
pub fn w_statistic(
    s: &PairedSeries,
    h: Order,
    d: &PatternMetric,
    w: &WeightFunction,
    cfg: &BreakTestConfig,
) -> Result<BreakTestResult> {
    let pp = PairPatterns::new(s, h)?;
    let pw = PairWeights::new(d, w, h)?;
    cusum_test(&pp.weight_series(&pw), pp.n(), h, cfg)
}

// Shared by both tests; the weight series of the discrete metric with the
// indicator weight equals the coincidence indicators, so the results agree exactly.
pub(crate) fn cusum_test(summands: &[f64], n: usize, h: Order, cfg: &BreakTestConfig) -> Result<BreakTestResult> {
    let m = summands.len();
    if m < 2 {
        return Err(Error::invalid(format!("CUSUM test needs n > h + 1 (got n = {n}, h = {h})")));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::invalid(format!("level {} must lie in (0, 1)", cfg.level)));
    }
    let mean = summands.iter().sum::<f64>() / n as f64;
    let sums = partial_sums(summands, mean);
    let raw = raw_from_sums(&sums, n);

    if summands.iter().all(|&v| v == summands[0]) {
        return Err(Error::DegenerateVariance {
            reason: "the summand series is constant".into(),
            raw_statistic: Some(raw),
        });
    }
    let z: Vec<f64> = summands.iter().map(|v| v - mean).collect();
    let var = longrun_variance(&z, n, &cfg.kernel)?;
    if var.value <= 0.0 {
        return Err(Error::DegenerateVariance {
            reason: format!("long-run variance estimate is {}", var.value),
            raw_statistic: Some(raw),
        });
    }
    let scale = var.value.sqrt();
    let denom = (n as f64).sqrt() * scale;
    let trajectory: Vec<f64> = match cfg.form {
        CusumForm::Absolute => sums.iter().map(|s| s.abs() / denom).collect(),
        CusumForm::OneSided => sums.iter().map(|s| s / denom).collect(),
    };
    let (argmax, peak) =
        trajectory
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let statistic = peak.max(0.0);
    let critical_value = kolmogorov_quantile(cfg.level, &cfg.kolmogorov);
    let p_value = 1.0 - kolmogorov_cdf(statistic, &cfg.kolmogorov);
    Ok(BreakTestResult {
        n,
        h: h.get(),
        statistic,
        raw_statistic: raw,
        scale,
        trajectory,
        critical_value,
        p_value,
        reject: statistic >= critical_value,
        argmax_k: argmax + 1,
        level: cfg.level,
        form: cfg.form,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: usize) -> Order {
        Order::new(v).unwrap()
    }

    #[test]
    fn kolmogorov_values() {
        let k = KolmogorovDist::default();
        assert!((kolmogorov_cdf(1.36, &k) - 0.9505).abs() < 1e-4);
        assert_eq!(kolmogorov_cdf(0.0, &k), 0.0);
        assert_eq!(kolmogorov_cdf(-1.0, &k), 0.0);
        assert!((kolmogorov_cdf(0.5, &k) - 0.0361).abs() < 1e-4);
        let q = kolmogorov_quantile(0.05, &k);
        assert!((q - 1.358).abs() < 1e-3);
        assert!((kolmogorov_quantile(0.5, &k) - 0.8276).abs() < 1e-4);
        for a in [0.01, 0.05, 0.1] {
            assert!((kolmogorov_cdf(kolmogorov_quantile(a, &k), &k) - (1.0 - a)).abs() < 1e-8);
        }
        assert!(KolmogorovDist::new(5).is_err());
    }

    #[test]
    fn both_series_forms_agree_near_switch() {
        // evaluate the two representations on either side of the switch point
        let k = KolmogorovDist::default();
        let left = kolmogorov_cdf(SERIES_SWITCH - 1e-9, &k);
        let right = kolmogorov_cdf(SERIES_SWITCH, &k);
        assert!((left - right).abs() < 1e-8);
    }

    #[test]
    fn cdf_is_monotone() {
        let k = KolmogorovDist::default();
        let mut prev = 0.0;
        for i in 1..=600 {
            let v = kolmogorov_cdf(i as f64 * 0.005, &k);
            assert!(v >= prev);
            prev = v;
        }
        assert!((1.0 - prev - 2.0 * (-18.0f64).exp()).abs() < 1e-12);
        assert!(kolmogorov_cdf(0.05, &k) < 1e-30);
    }

    #[test]
    fn trajectory_examples() {
        let t = cusum_trajectory(&[1.0, 1.0, 0.0], 0.75, 4, 1.0).unwrap();
        assert_eq!(t, vec![0.125, 0.25, 0.125]);
        assert_eq!(cusum_trajectory(&[0.3; 5], 0.3, 5, 2.0).unwrap(), vec![0.0; 5]);
        assert!(matches!(cusum_trajectory(&[1.0], 0.5, 2, 0.0), Err(Error::DegenerateVariance { .. })));
    }

    #[test]
    fn identical_series_are_degenerate() {
        let x: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64).collect();
        let s = PairedSeries::new(x.clone(), x).unwrap();
        let raw = raw_t_statistic(&s, h(2)).unwrap();
        assert!((raw - 98.0 * 2.0 / (100.0 * 10.0)).abs() < 1e-12);
        match t_statistic(&s, h(2), &BreakTestConfig::default()) {
            Err(Error::DegenerateVariance { raw_statistic: Some(r), .. }) => assert!((r - 0.196).abs() < 1e-12),
            other => panic!("expected degenerate variance, got {other:?}"),
        }
    }

    #[test]
    fn running_example_raw_statistic() {
        let s = PairedSeries::new(vec![1.0, 2.0, 3.0, 2.0], vec![2.0, 3.0, 4.0, 1.0]).unwrap();
        assert_eq!(raw_t_statistic(&s, h(1)).unwrap(), 0.375);
    }

    #[test]
    fn result_invariants() {
        let x: Vec<f64> = (0..300).map(|i| ((i * 7919) % 211) as f64).collect();
        let y: Vec<f64> = (0..300).map(|i| ((i * 104729) % 197) as f64 + if i > 150 { 0.0 } else { x[i] }).collect();
        let s = PairedSeries::new(x, y).unwrap();
        let r = t_statistic(&s, h(2), &BreakTestConfig::default()).unwrap();
        assert_eq!(r.trajectory.len(), 298);
        assert!(r.trajectory.iter().all(|&v| v >= 0.0));
        assert_eq!(r.statistic, r.trajectory.iter().cloned().fold(0.0, f64::max));
        assert_eq!(r.statistic, r.trajectory[r.argmax_k - 1]);
        assert!((r.statistic * r.scale - r.raw_statistic).abs() < 1e-12);
        assert_eq!(r.reject, r.statistic >= r.critical_value);
        assert!((r.p_value - (1.0 - kolmogorov_cdf(r.statistic, &KolmogorovDist::default()))).abs() < 1e-15);

        let one = BreakTestConfig { form: CusumForm::OneSided, ..Default::default() };
        let r1 = t_statistic(&s, h(2), &one).unwrap();
        assert!(r1.statistic <= r.statistic);

        let w = w_statistic(
            &s,
            h(2),
            &PatternMetric::Discrete,
            &WeightFunction::IndicatorAtZero,
            &BreakTestConfig::default(),
        )
        .unwrap();
        assert_eq!(w, r);

        let mut buf = Vec::new();
        r.write_trajectory_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,value,critical_value\n1,"));
        assert_eq!(text.lines().count(), 299);
        let json: serde_json::Value = serde_json::from_str(&r.trajectory_json().unwrap()).unwrap();
        assert_eq!(json["trajectory"].as_array().unwrap().len(), 298);
    }

    #[test]
    fn too_short_and_bad_level() {
        let s = PairedSeries::new(vec![1.0, 2.0, 0.0], vec![1.0, 0.0, 2.0]).unwrap();
        assert!(t_statistic(&s, h(2), &BreakTestConfig::default()).is_err());
        let s = PairedSeries::new(vec![1.0, 2.0, 0.0, 3.0], vec![1.0, 0.0, 2.0, 3.0]).unwrap();
        assert!(t_statistic(&s, h(1), &BreakTestConfig::with_level(1.0)).is_err());
    }

    #[test]
    fn constant_weight_series_is_degenerate() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..50).map(|i| -(i as f64)).collect();
        let s = PairedSeries::new(x, y).unwrap();
        let r = w_statistic(&s, h(2), &PatternMetric::L1, &WeightFunction::l1_step(), &BreakTestConfig::default());
        assert!(matches!(r, Err(Error::DegenerateVariance { .. })));
    }
}
