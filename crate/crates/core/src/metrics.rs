//! Pseudo-metrics on patterns and decreasing weights on their distances.
//!
//! A (metric, weight) pair defines a flavor of weighted ordinal pattern
//! dependence: window pairs whose patterns lie at distance `d` contribute
//! `w(d)`. The discrete metric with the indicator weight recovers plain
//! pattern coincidence.
//!
//! Distance documents are JSON:
//!
//! ```json
//! {
//!   "h": 2,
//!   "metric": "l1",
//!   "distances": [[0, 2, ...], ...],
//!   "weights": { "0": 1.0, "2": 0.75, "4": 0.5 }
//! }
//! ```
//!
//! `metric` names a built-in (`discrete`, `l1`, `chaos`) and `distances` gives
//! a full `(h+1)! x (h+1)!` table indexed by lexicographic pattern index; at
//! most one of the two may appear. `weights` maps distance values to weights
//! and every unlisted distance gets weight 0.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patterns::{all_patterns, factorial, unrank, Order, Pattern};

/// Largest order for which user distance tables are accepted.
pub const TABLE_MAX_ORDER: usize = 5;
/// Orders up to this get an exhaustive triangle-inequality check.
const EXHAUSTIVE_TRIANGLE_MAX_ORDER: usize = 4;
const SAMPLED_TRIANGLES: usize = 1_000_000;
const DISTANCE_TOL: f64 = 1e-9;

/// A pseudo-metric on the patterns of one order.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternMetric {
    /// 0 for equal patterns, 1 otherwise.
    Discrete,
    /// Sum of absolute entrywise differences of the two permutations.
    L1,
    /// `|c(a) - c(b)|` where `c` is the l1 distance to the nearer monotone pattern.
    Chaos,
    Table(DistanceTable),
}

impl PatternMetric {
    pub fn name(&self) -> &'static str {
        match self {
            PatternMetric::Discrete => "discrete",
            PatternMetric::L1 => "l1",
            PatternMetric::Chaos => "chaos",
            PatternMetric::Table(_) => "table",
        }
    }

    /// Parses a built-in metric name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "discrete" => Ok(PatternMetric::Discrete),
            "l1" => Ok(PatternMetric::L1),
            "chaos" => Ok(PatternMetric::Chaos),
            other => Err(Error::invalid(format!("unknown metric `{other}` (expected discrete, l1 or chaos)"))),
        }
    }

    pub fn distance(&self, a: &Pattern, b: &Pattern) -> Result<f64> {
        same_order(a, b)?;
        match self {
            PatternMetric::Discrete => Ok(discrete(a, b)),
            PatternMetric::L1 => Ok(l1(a.as_slice(), b.as_slice())),
            PatternMetric::Chaos => Ok((chaos(a.as_slice()) - chaos(b.as_slice())).abs()),
            PatternMetric::Table(t) => {
                if t.h != a.h() {
                    return Err(Error::invalid(format!(
                        "distance table is for h = {}, patterns have h = {}",
                        t.h,
                        a.h()
                    )));
                }
                Ok(t.get(a.index().value() as usize, b.index().value() as usize))
            }
        }
    }

    /// Sorted set of distances the metric takes on patterns of order `h`.
    pub fn attained_distances(&self, h: Order) -> Result<Vec<f64>> {
        let hh = h.get();
        let mut values: Vec<f64> = match self {
            PatternMetric::Discrete => vec![0.0, 1.0],
            // The l1 distance on permutations of m elements takes every even value up to floor(m^2 / 2).
            PatternMetric::L1 => {
                let m = hh + 1;
                (0..=m * m / 2).step_by(2).map(|d| d as f64).collect()
            }
            PatternMetric::Chaos => {
                let mut scores: Vec<f64> = all_patterns(hh).map(|p| chaos(p.as_slice())).collect();
                scores.sort_by(f64::total_cmp);
                scores.dedup();
                let mut diffs = Vec::new();
                for a in &scores {
                    for b in &scores {
                        diffs.push((a - b).abs());
                    }
                }
                diffs
            }
            PatternMetric::Table(t) => {
                t.check_order(h)?;
                t.values.clone()
            }
        };
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| (*a - *b).abs() <= DISTANCE_TOL);
        Ok(values)
    }

    fn check_order(&self, h: Order) -> Result<()> {
        match self {
            PatternMetric::Table(t) => t.check_order(h),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PatternMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn same_order(a: &Pattern, b: &Pattern) -> Result<()> {
    if a.h() != b.h() {
        return Err(Error::invalid(format!("patterns have different orders ({} and {})", a.h(), b.h())));
    }
    Ok(())
}

fn discrete(a: &Pattern, b: &Pattern) -> f64 {
    if a == b {
        0.0
    } else {
        1.0
    }
}

fn l1(a: &[u8], b: &[u8]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as i32 - y as i32).unsigned_abs()).sum::<u32>() as f64
}

fn chaos(p: &[u8]) -> f64 {
    let h = p.len() as i32 - 1;
    let (mut up, mut down) = (0u32, 0u32);
    for (j, &r) in p.iter().enumerate() {
        up += (r as i32 - j as i32).unsigned_abs();
        down += (r as i32 - (h - j as i32)).unsigned_abs();
    }
    up.min(down) as f64
}

/// Discrete metric.
pub fn d_discrete(a: &Pattern, b: &Pattern) -> Result<f64> {
    same_order(a, b)?;
    Ok(discrete(a, b))
}

/// l1 distance between the permutation vectors.
pub fn d_l1(a: &Pattern, b: &Pattern) -> Result<f64> {
    same_order(a, b)?;
    Ok(l1(a.as_slice(), b.as_slice()))
}

/// Distance from `p` to the nearer of `(0, ..., h)` and `(h, ..., 0)` in l1.
pub fn chaos_score(p: &Pattern) -> f64 {
    chaos(p.as_slice())
}

/// Chaos pseudo-metric `|c(a) - c(b)|`.
pub fn d_chaos(a: &Pattern, b: &Pattern) -> Result<f64> {
    same_order(a, b)?;
    Ok((chaos(a.as_slice()) - chaos(b.as_slice())).abs())
}

/// A validated user-supplied distance table over pattern indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    h: usize,
    size: usize,
    values: Vec<f64>,
}

impl DistanceTable {
    /// Builds a table from `rows[i][j] = d(pattern i, pattern j)` and checks the
    /// pseudo-metric axioms: zero diagonal, nonnegativity, symmetry and the
    /// triangle inequality (all triples for h <= 4, a fixed random sample of
    /// triples for h = 5).
    pub fn new(h: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if h == 0 || h > TABLE_MAX_ORDER {
            return Err(Error::invalid(format!("distance tables support 1 <= h <= {TABLE_MAX_ORDER}, got {h}")));
        }
        let size = factorial(h + 1);
        if rows.len() != size || rows.iter().any(|r| r.len() != size) {
            return Err(Error::invalid(format!("distance table for h = {h} must be {size} x {size}")));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        let t = DistanceTable { h, size, values };
        t.validate()?;
        Ok(t)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn h(&self) -> usize {
        self.h
    }

    fn check_order(&self, h: Order) -> Result<()> {
        if self.h != h.get() {
            return Err(Error::invalid(format!("distance table is for h = {}, analysis uses h = {h}", self.h)));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let n = self.size;
        for i in 0..n {
            for j in 0..n {
                let d = self.get(i, j);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::invalid(format!("distance ({i}, {j}) = {d} is not a nonnegative number")));
                }
                if i == j && d != 0.0 {
                    return Err(Error::invalid(format!("distance ({i}, {i}) must be 0, got {d}")));
                }
                if d != self.get(j, i) {
                    return Err(Error::invalid(format!("distance table is not symmetric at ({i}, {j})")));
                }
            }
        }
        let violates = |a: usize, b: usize, c: usize| self.get(a, b) + self.get(b, c) < self.get(a, c) - DISTANCE_TOL;
        if self.h <= EXHAUSTIVE_TRIANGLE_MAX_ORDER {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        if violates(a, b, c) {
                            return Err(Error::invalid(format!("triangle inequality fails for ({a}, {b}, {c})")));
                        }
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x7472_6961_6e67_6c65);
            for _ in 0..SAMPLED_TRIANGLES {
                let (a, b, c) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
                if violates(a, b, c) {
                    return Err(Error::invalid(format!("triangle inequality fails for ({a}, {b}, {c})")));
                }
            }
        }
        Ok(())
    }
}

/// A weight on distances: `w(0) = 1`, values in `[0, 1]`, decreasing.
#[derive(Clone)]
pub enum WeightFunction {
    /// 1 at distance 0, 0 elsewhere.
    IndicatorAtZero,
    StepTable(StepWeights),
    Custom(CustomWeight),
}

impl WeightFunction {
    /// `1{0} + 0.75 1{2} + 0.5 1{4} + 0.25 1{6}`, meant for the l1 metric.
    pub fn l1_step() -> Self {
        WeightFunction::StepTable(
            StepWeights::new(vec![(0.0, 1.0), (2.0, 0.75), (4.0, 0.5), (6.0, 0.25)]).expect("valid preset"),
        )
    }

    /// Parses a preset name: `indicator` or `l1-step`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "indicator" => Ok(WeightFunction::IndicatorAtZero),
            "l1-step" => Ok(WeightFunction::l1_step()),
            other => Err(Error::invalid(format!("unknown weight preset `{other}` (expected indicator or l1-step)"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            WeightFunction::IndicatorAtZero => "indicator".into(),
            WeightFunction::StepTable(s) => {
                let parts: Vec<String> = s.steps.iter().map(|(d, w)| format!("{d}:{w}")).collect();
                format!("steps[{}]", parts.join(","))
            }
            WeightFunction::Custom(c) => c.name.clone(),
        }
    }

    pub fn eval(&self, dist: f64) -> f64 {
        match self {
            WeightFunction::IndicatorAtZero => {
                if dist.abs() <= DISTANCE_TOL {
                    1.0
                } else {
                    0.0
                }
            }
            WeightFunction::StepTable(s) => s.eval(dist),
            WeightFunction::Custom(c) => (c.f)(dist),
        }
    }

    /// Checks that the weight is nonincreasing on `distances` (sorted ascending).
    pub fn check_monotone_on(&self, distances: &[f64]) -> Result<()> {
        let mut prev = f64::INFINITY;
        for &d in distances {
            let w = self.eval(d);
            if w > prev + DISTANCE_TOL {
                return Err(Error::invalid(format!(
                    "weight {} increases to {w} at distance {d} on the attained distance set",
                    self.name()
                )));
            }
            prev = w;
        }
        Ok(())
    }
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Weights at listed distances; unlisted distances weigh 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWeights {
    steps: Vec<(f64, f64)>,
}

impl StepWeights {
    pub fn new(mut steps: Vec<(f64, f64)>) -> Result<Self> {
        steps.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(d, w) in &steps {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::invalid(format!("weight table distance {d} must be nonnegative")));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid(format!("weight {w} at distance {d} is outside [0, 1]")));
            }
        }
        if steps.windows(2).any(|p| p[1].0 - p[0].0 <= DISTANCE_TOL) {
            return Err(Error::invalid("weight table lists a distance twice"));
        }
        match steps.first() {
            Some(&(d, w)) if d == 0.0 && w == 1.0 => {}
            _ => return Err(Error::invalid("weight table must map distance 0 to 1")),
        }
        if steps.windows(2).any(|p| p[1].1 > p[0].1) {
            return Err(Error::invalid("weights must decrease with distance"));
        }
        Ok(StepWeights { steps })
    }

    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    fn eval(&self, dist: f64) -> f64 {
        self.steps.iter().find(|(d, _)| (d - dist).abs() <= DISTANCE_TOL).map_or(0.0, |&(_, w)| w)
    }
}

/// A weight given by a closure.
#[derive(Clone)]
pub struct CustomWeight {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CustomWeight {
    /// Wraps `f`, checking `w(0) = 1` and that `f` is decreasing with values in
    /// `[0, 1]` on `attained` (the distances the intended metric takes).
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        attained: &[f64],
    ) -> Result<Self> {
        let name = name.into();
        if f(0.0) != 1.0 {
            return Err(Error::invalid(format!("weight `{name}` must equal 1 at distance 0")));
        }
        let mut sorted = attained.to_vec();
        sorted.sort_by(f64::total_cmp);
        for &d in &sorted {
            let w = f(d);
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid(format!("weight `{name}` is {w} at distance {d}, outside [0, 1]")));
            }
        }
        let w = CustomWeight { name, f: Arc::new(f) };
        WeightFunction::Custom(w.clone()).check_monotone_on(&sorted)?;
        Ok(w)
    }
}

/// `w(dist)`.
pub fn weight_eval(w: &WeightFunction, dist: f64) -> f64 {
    w.eval(dist)
}

/// Metric and weight evaluated on pattern indices of one order.
///
/// Weights are cached per pattern pair for small orders; larger orders
/// evaluate the metric on demand from a pattern lookup table.
pub(crate) struct PairWeights<'a> {
    metric: &'a PatternMetric,
    weight: &'a WeightFunction,
    h: usize,
    count: usize,
    patterns: Vec<u8>,
    chaos: Vec<f64>,
    dense: Option<Vec<f64>>,
}

const DENSE_MAX_PATTERNS: usize = 720;

impl<'a> PairWeights<'a> {
    pub(crate) fn new(metric: &'a PatternMetric, weight: &'a WeightFunction, h: Order) -> Result<Self> {
        metric.check_order(h)?;
        weight.check_monotone_on(&metric.attained_distances(h)?)?;
        let hh = h.get();
        let count = h.pattern_count();
        let mut patterns = Vec::with_capacity(count * (hh + 1));
        for p in all_patterns(hh) {
            patterns.extend_from_slice(p.as_slice());
        }
        let chaos = if matches!(metric, PatternMetric::Chaos) {
            patterns.chunks(hh + 1).map(chaos).collect()
        } else {
            Vec::new()
        };
        let mut pw = PairWeights { metric, weight, h: hh, count, patterns, chaos, dense: None };
        if count <= DENSE_MAX_PATTERNS {
            let mut dense = vec![0.0; count * count];
            for i in 0..count {
                for j in 0..count {
                    dense[i * count + j] = pw.compute(i, j);
                }
            }
            pw.dense = Some(dense);
        }
        Ok(pw)
    }

    fn pattern(&self, i: usize) -> &[u8] {
        &self.patterns[i * (self.h + 1)..(i + 1) * (self.h + 1)]
    }

    pub(crate) fn distance(&self, i: usize, j: usize) -> f64 {
        match self.metric {
            PatternMetric::Discrete => f64::from(u8::from(i != j)),
            PatternMetric::L1 => l1(self.pattern(i), self.pattern(j)),
            PatternMetric::Chaos => (self.chaos[i] - self.chaos[j]).abs(),
            PatternMetric::Table(t) => t.get(i, j),
        }
    }

    fn compute(&self, i: usize, j: usize) -> f64 {
        self.weight.eval(self.distance(i, j))
    }

    pub(crate) fn pattern_count(&self) -> usize {
        self.count
    }

    /// `w(d(pattern i, pattern j))`.
    pub(crate) fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.dense {
            Some(d) => d[i * self.count + j],
            None => self.compute(i, j),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MetricDocumentRaw {
    h: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distances: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<BTreeMap<String, f64>>,
}

/// Contents of a metric/weight JSON document.
#[derive(Debug, Clone)]
pub struct MetricDocument {
    pub h: usize,
    pub metric: Option<PatternMetric>,
    pub weight: Option<WeightFunction>,
}

impl MetricDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MetricDocumentRaw = serde_json::from_str(text)?;
        let metric = match (raw.metric, raw.distances) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid("metric document may give `metric` or `distances`, not both"))
            }
            (Some(name), None) => Some(PatternMetric::from_name(&name)?),
            (None, Some(rows)) => Some(PatternMetric::Table(DistanceTable::new(raw.h, rows)?)),
            (None, None) => None,
        };
        let weight = match raw.weights {
            Some(map) => {
                let mut steps = Vec::with_capacity(map.len());
                for (k, w) in map {
                    let d: f64 =
                        k.trim().parse().map_err(|_| Error::invalid(format!("weight key `{k}` is not a number")))?;
                    steps.push((d, w));
                }
                Some(WeightFunction::StepTable(StepWeights::new(steps)?))
            }
            None => None,
        };
        let h = Order::with_override(raw.h)?;
        if let (Some(m), Some(w)) = (&metric, &weight) {
            w.check_monotone_on(&m.attained_distances(h)?)?;
        }
        Ok(MetricDocument { h: raw.h, metric, weight })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Serializes a full distance table for `metric` at order `h` (h <= 5).
pub fn distance_table_json(metric: &PatternMetric, h: Order) -> Result<String> {
    let hh = h.get();
    if hh > TABLE_MAX_ORDER {
        return Err(Error::invalid(format!("distance tables support h <= {TABLE_MAX_ORDER}")));
    }
    let patterns: Vec<Pattern> = all_patterns(hh).collect();
    let mut rows = Vec::with_capacity(patterns.len());
    for a in &patterns {
        rows.push(patterns.iter().map(|b| metric.distance(a, b)).collect::<Result<Vec<f64>>>()?);
    }
    let raw = MetricDocumentRaw { h: hh, metric: None, distances: Some(rows), weights: None };
    Ok(serde_json::to_string(&raw)?)
}

/// Pattern for a dense index, for callers holding raw indices.
pub fn pattern_at(index: u32, h: Order) -> Result<Pattern> {
    unrank(index, h.get())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pat(v: &[u8]) -> Pattern {
        Pattern::new(v.to_vec()).unwrap()
    }

    #[test]
    fn discrete_examples() {
        assert_eq!(d_discrete(&pat(&[0, 1, 2]), &pat(&[0, 1, 2])).unwrap(), 0.0);
        assert_eq!(d_discrete(&pat(&[0, 1, 2]), &pat(&[2, 1, 0])).unwrap(), 1.0);
        assert!(d_discrete(&pat(&[0, 1]), &pat(&[0, 1, 2])).is_err());
    }

    #[test]
    fn discrete_with_indicator_is_coincidence() {
        let w = WeightFunction::IndicatorAtZero;
        for a in all_patterns(2) {
            for b in all_patterns(2) {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_eq!(w.eval(d_discrete(&a, &b).unwrap()), expect);
            }
        }
    }

    #[test]
    fn l1_examples() {
        assert_eq!(d_l1(&pat(&[2, 1, 5, 4, 0, 6, 3]), &pat(&[2, 1, 4, 5, 0, 6, 3])).unwrap(), 2.0);
        assert_eq!(d_l1(&pat(&[1, 3, 2, 0, 4]), &pat(&[3, 1, 2, 4, 0])).unwrap(), 12.0);
        for p in all_patterns(3) {
            assert_eq!(d_l1(&p, &p).unwrap(), 0.0);
        }
        assert!(d_l1(&pat(&[1, 0]), &pat(&[0, 1, 2])).is_err());
    }

    #[test]
    fn chaos_examples() {
        assert_eq!(chaos_score(&pat(&[5, 4, 3, 2, 1, 0])), 0.0);
        assert_eq!(chaos_score(&pat(&[0, 1, 2, 3, 4, 5])), 0.0);
        assert_eq!(chaos_score(&pat(&[1, 3, 5, 2, 4, 0])), 10.0);
        assert_eq!(d_chaos(&pat(&[0, 1, 2, 3, 4, 5]), &pat(&[5, 4, 3, 2, 1, 0])).unwrap(), 0.0);
        assert_eq!(d_chaos(&pat(&[1, 3, 5, 2, 4, 0]), &pat(&[5, 4, 3, 2, 1, 0])).unwrap(), 10.0);
        for p in all_patterns(3) {
            assert_eq!(d_chaos(&p, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn step_weight_examples() {
        let w = WeightFunction::l1_step();
        assert_eq!(weight_eval(&w, 2.0), 0.75);
        assert_eq!(weight_eval(&w, 0.0), 1.0);
        assert_eq!(weight_eval(&w, 8.0), 0.0);
        assert_eq!(weight_eval(&WeightFunction::IndicatorAtZero, 0.0), 1.0);
    }

    #[test]
    fn step_weight_validation() {
        assert!(StepWeights::new(vec![(0.0, 0.9)]).is_err());
        assert!(StepWeights::new(vec![(0.0, 1.0), (2.0, 1.5)]).is_err());
        assert!(StepWeights::new(vec![(0.0, 1.0), (2.0, 0.3), (4.0, 0.5)]).is_err());
        assert!(StepWeights::new(vec![(0.0, 1.0), (-2.0, 0.3)]).is_err());
        assert!(StepWeights::new(vec![(2.0, 0.5), (0.0, 1.0)]).is_ok());
    }

    #[test]
    fn gap_in_step_table_is_not_monotone_on_l1() {
        let w = WeightFunction::StepTable(StepWeights::new(vec![(0.0, 1.0), (4.0, 0.5)]).unwrap());
        let h = Order::new(2).unwrap();
        assert!(w.check_monotone_on(&PatternMetric::L1.attained_distances(h).unwrap()).is_err());
        assert!(PairWeights::new(&PatternMetric::L1, &w, h).is_err());
    }

    #[test]
    fn custom_weight_checks() {
        let attained = [0.0, 2.0, 4.0];
        assert!(CustomWeight::new("exp", |d: f64| (-d).exp(), &attained).is_ok());
        assert!(CustomWeight::new("bad0", |_d: f64| 0.5, &attained).is_err());
        assert!(CustomWeight::new("up", |d: f64| if d == 0.0 { 1.0 } else { d / 4.0 }, &attained).is_err());
    }

    #[test]
    fn l1_attained_set_matches_enumeration() {
        for h in 1..=4 {
            let ps: Vec<Pattern> = all_patterns(h).collect();
            let mut seen: Vec<f64> = Vec::new();
            for a in &ps {
                for b in &ps {
                    seen.push(d_l1(a, b).unwrap());
                }
            }
            seen.sort_by(f64::total_cmp);
            seen.dedup();
            assert_eq!(seen, PatternMetric::L1.attained_distances(Order::new(h).unwrap()).unwrap());
        }
    }

    #[test]
    fn l1_distances_are_even() {
        for h in 1..=4 {
            let ps: Vec<Pattern> = all_patterns(h).collect();
            for a in &ps {
                for b in &ps {
                    assert_eq!(d_l1(a, b).unwrap() as u32 % 2, 0);
                }
            }
        }
    }

    fn check_axioms(metric: &PatternMetric, h: usize) {
        let ps: Vec<Pattern> = all_patterns(h).collect();
        for a in &ps {
            assert_eq!(metric.distance(a, a).unwrap(), 0.0);
            for b in &ps {
                let ab = metric.distance(a, b).unwrap();
                assert!(ab >= 0.0);
                assert_eq!(ab, metric.distance(b, a).unwrap());
                for c in &ps {
                    assert!(ab + metric.distance(b, c).unwrap() >= metric.distance(a, c).unwrap());
                }
            }
        }
    }

    #[test]
    fn builtin_axioms_exhaustive() {
        for h in 1..=3 {
            for m in [PatternMetric::Discrete, PatternMetric::L1, PatternMetric::Chaos] {
                check_axioms(&m, h);
            }
        }
    }

    #[test]
    fn builtin_axioms_sampled_h4() {
        let ps: Vec<Pattern> = all_patterns(4).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in [PatternMetric::Discrete, PatternMetric::L1, PatternMetric::Chaos] {
            for _ in 0..20_000 {
                let a = &ps[rng.random_range(0..ps.len())];
                let b = &ps[rng.random_range(0..ps.len())];
                let c = &ps[rng.random_range(0..ps.len())];
                let ab = m.distance(a, b).unwrap();
                assert_eq!(ab, m.distance(b, a).unwrap());
                assert!(ab + m.distance(b, c).unwrap() >= m.distance(a, c).unwrap());
            }
        }
    }

    #[test]
    fn chaos_is_not_a_metric() {
        let h = 3;
        let a = Pattern::identity(h);
        let b = Pattern::reversed_identity(h);
        assert_ne!(a, b);
        assert_eq!(d_chaos(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn table_round_trip_and_validation() {
        let h = Order::new(2).unwrap();
        let json = distance_table_json(&PatternMetric::L1, h).unwrap();
        let doc = MetricDocument::from_json(&json).unwrap();
        let table = doc.metric.unwrap();
        for a in all_patterns(2) {
            for b in all_patterns(2) {
                assert_eq!(table.distance(&a, &b).unwrap(), d_l1(&a, &b).unwrap());
            }
        }

        let mut rows = vec![vec![1.0; 6]; 6];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        assert!(DistanceTable::new(2, rows.clone()).is_ok());
        rows[0][1] = 5.0;
        rows[1][0] = 5.0;
        assert!(DistanceTable::new(2, rows.clone()).is_err(), "triangle violation");
        rows[1][0] = 1.0;
        assert!(DistanceTable::new(2, rows).is_err(), "asymmetric");
        assert!(DistanceTable::new(2, vec![vec![0.0; 5]; 5]).is_err());
    }

    #[test]
    fn document_with_weights() {
        let doc = MetricDocument::from_json(
            r#"{"h": 6, "metric": "l1", "weights": {"0": 1.0, "2": 0.75, "4": 0.5, "6": 0.25}}"#,
        )
        .unwrap();
        let w = doc.weight.unwrap();
        assert_eq!(w.eval(4.0), 0.5);
        assert_eq!(w.eval(8.0), 0.0);
        assert!(MetricDocument::from_json(r#"{"h": 2, "weights": {"0": 0.5}}"#).is_err());
        assert!(MetricDocument::from_json(r#"{"h": 2, "metric": "l1", "weights": {"0": 1.0, "4": 0.5}}"#).is_err());
    }

    #[test]
    fn pair_weights_agree_with_metric() {
        for (h, metric) in
            [(2, PatternMetric::L1), (3, PatternMetric::Chaos), (6, PatternMetric::L1), (2, PatternMetric::Discrete)]
        {
            let order = Order::new(h).unwrap();
            let w = WeightFunction::l1_step();
            let w = if matches!(metric, PatternMetric::Discrete) { WeightFunction::IndicatorAtZero } else { w };
            let pw = PairWeights::new(&metric, &w, order).unwrap();
            let count = order.pattern_count();
            for (i, j) in [(0, 0), (0, count - 1), (count / 3, count / 2), (count - 1, 1)] {
                let a = pattern_at(i as u32, order).unwrap();
                let b = pattern_at(j as u32, order).unwrap();
                assert_eq!(pw.weight(i, j), w.eval(metric.distance(&a, &b).unwrap()));
            }
        }
    }
}
