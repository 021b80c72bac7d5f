//! Monte Carlo generators and experiment drivers.
//!
//! Pairs of AR(1) series `X_t = phi X_{t-1} + e_t`, `Y_t = phi Y_{t-1} + eta_t`
//! are coupled through their innovations, `eta_t = rho e_t + sqrt(1 - rho^2) e'_t`
//! with `e`, `e'` independent draws of one innovation law. For heavy-tailed laws
//! `rho` is a mixing weight, not a correlation, so experiments are specified by
//! the coincidence probability `p` and `rho` is found by [`calibrate_rho`].
//!
//! Randomness comes from ChaCha8. A single path seeded with `seed` uses stream 0;
//! replication `r` of study cell `c` uses the master seed with stream
//! `(c << 32) | r`, so study results do not depend on the worker count.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::breaktest::{cusum_test, kolmogorov_cdf, BreakTestConfig, KolmogorovDist};
use crate::error::{Error, Result};
use crate::estimators::{estimate_awopd, PairPatterns, PairedSeries};
use crate::longrun::{longrun_variance, KernelConfig};
use crate::metrics::{PatternMetric, WeightFunction};
use crate::patterns::Order;

/// Environment variable capping the worker count of [`run_study`].
pub const THREADS_ENV: &str = "ORDPAT_THREADS";

/// Calibration table shipped with the crate.
pub const BUNDLED_CALIBRATION: &str = include_str!("../data/calibration.csv");

/// Innovation law of the AR(1) recursions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Innovation {
    Gaussian,
    StudentT(f64),
    Cauchy,
}

impl Innovation {
    fn sampler(&self) -> Result<Sampler> {
        Ok(match *self {
            Innovation::Gaussian => Sampler::Gaussian,
            Innovation::StudentT(df) => {
                Sampler::StudentT(StudentT::new(df).map_err(|e| Error::invalid(format!("student_t({df}): {e}")))?)
            }
            Innovation::Cauchy => Sampler::Cauchy(Cauchy::new(0.0, 1.0).expect("standard Cauchy")),
        })
    }
}

impl fmt::Display for Innovation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Innovation::Gaussian => write!(f, "gaussian"),
            Innovation::StudentT(df) => write!(f, "student_t({df})"),
            Innovation::Cauchy => write!(f, "cauchy"),
        }
    }
}

impl FromStr for Innovation {
    type Err = Error;

    /// Accepts `gaussian`/`normal`, `cauchy`, `student_t(df)`, and `student_t` (df 2).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "gaussian" | "normal" => return Ok(Innovation::Gaussian),
            "cauchy" => return Ok(Innovation::Cauchy),
            "student_t" | "t" => return Ok(Innovation::StudentT(2.0)),
            _ => {}
        }
        let df = s
            .strip_prefix("student_t(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|d| d.parse::<f64>().ok())
            .ok_or_else(|| Error::invalid(format!("unknown innovation law `{s}`")))?;
        if !(df.is_finite() && df > 0.0) {
            return Err(Error::invalid(format!("degrees of freedom must be positive, got {df}")));
        }
        Ok(Innovation::StudentT(df))
    }
}

impl TryFrom<String> for Innovation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Innovation> for String {
    fn from(i: Innovation) -> String {
        i.to_string()
    }
}

enum Sampler {
    Gaussian,
    StudentT(StudentT<f64>),
    Cauchy(Cauchy<f64>),
}

impl Sampler {
    #[inline]
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Gaussian => rng.sample(StandardNormal),
            Sampler::StudentT(d) => d.sample(rng),
            Sampler::Cauchy(d) => d.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1PairConfig {
    pub phi: f64,
    pub rho: f64,
    pub innovation: Innovation,
    pub n: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub seed: u64,
}

fn default_burn_in() -> usize {
    1000
}

impl Ar1PairConfig {
    pub fn new(phi: f64, rho: f64, innovation: Innovation, n: usize, seed: u64) -> Self {
        Ar1PairConfig { phi, rho, innovation, n, burn_in: default_burn_in(), seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::invalid(format!("phi must lie in (-1, 1), got {}", self.phi)));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::invalid(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        if self.n == 0 {
            return Err(Error::invalid("series length must be positive"));
        }
        self.innovation.sampler().map(|_| ())
    }
}

/// A change of the innovation coupling (and optionally of `phi`) at `change_at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakSpec {
    /// 1-based index of the first observation generated by the post-break regime.
    pub change_at: usize,
    pub post_rho: f64,
    #[serde(default)]
    pub post_phi: Option<f64>,
}

/// Generates a coupled AR(1) pair of length `cfg.n`, discarding `cfg.burn_in` leading values.
pub fn gen_ar1_pair(cfg: &Ar1PairConfig) -> Result<PairedSeries> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    generate(cfg, None, &mut rng)
}

/// Like [`gen_ar1_pair`] with a regime change; the AR state carries over the break.
pub fn gen_with_break(cfg: &Ar1PairConfig, spec: &BreakSpec) -> Result<PairedSeries> {
    cfg.validate()?;
    validate_break(cfg, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    generate(cfg, Some(spec), &mut rng)
}

fn validate_break(cfg: &Ar1PairConfig, spec: &BreakSpec) -> Result<()> {
    if !(spec.change_at > 1 && spec.change_at <= cfg.n) {
        return Err(Error::invalid(format!("change_at must lie in (1, {}], got {}", cfg.n, spec.change_at)));
    }
    if !(spec.post_rho.abs() <= 1.0) {
        return Err(Error::invalid(format!("post-break rho must lie in [-1, 1], got {}", spec.post_rho)));
    }
    if let Some(phi) = spec.post_phi {
        if !(phi.abs() < 1.0) {
            return Err(Error::invalid(format!("post-break phi must lie in (-1, 1), got {phi}")));
        }
    }
    Ok(())
}

fn generate(cfg: &Ar1PairConfig, spec: Option<&BreakSpec>, rng: &mut ChaCha8Rng) -> Result<PairedSeries> {
    let sampler = cfg.innovation.sampler()?;
    let mut x = Vec::with_capacity(cfg.n);
    let mut y = Vec::with_capacity(cfg.n);
    let (mut xs, mut ys) = (0.0f64, 0.0f64);
    let coupling = |rho: f64| (rho, (1.0 - rho * rho).max(0.0).sqrt());
    let pre = coupling(cfg.rho);
    let post = spec.map(|s| (coupling(s.post_rho), s.post_phi.unwrap_or(cfg.phi)));
    for t in 0..cfg.burn_in + cfg.n {
        let ((a, b), phi) = match (post, spec) {
            (Some((c, phi)), Some(s)) if t + 1 >= cfg.burn_in + s.change_at => (c, phi),
            _ => (pre, cfg.phi),
        };
        // both draws always happen so that paths stay aligned across couplings
        let e = sampler.draw(rng);
        let e2 = sampler.draw(rng);
        xs = phi * xs + e;
        ys = phi * ys + (a * e + b * e2);
        if t >= cfg.burn_in {
            x.push(xs);
            y.push(ys);
        }
    }
    PairedSeries::new(x, y)
}

/// Tuning of [`calibrate_rho_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Windows per evaluation of `p(rho)`.
    pub windows: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { windows: 1_000_000, tolerance: 5e-4, seed: 0x0bd3_5eed, max_iterations: 60 }
    }
}

/// One row of the calibration table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub phi: f64,
    pub innovation: Innovation,
    pub h: usize,
    pub target_p: f64,
    pub rho: f64,
    pub achieved_p: f64,
    /// Monte Carlo standard error of `achieved_p` (kernel long-run variance).
    pub se: f64,
    pub windows: usize,
    pub seed: u64,
}

/// Monte Carlo estimate of the coincidence probability `p` for coupling `rho`:
/// the coincidence count divided by the number of windows.
pub fn coincidence_probability(
    phi: f64,
    rho: f64,
    innovation: Innovation,
    h: Order,
    windows: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let cfg = Ar1PairConfig::new(phi, rho, innovation, windows + h.get(), seed);
    let s = gen_ar1_pair(&cfg)?;
    let pp = PairPatterns::new(&s, h)?;
    let ind = pp.coincidence_indicators();
    let p = pp.coincidences() as f64 / windows as f64;
    let z: Vec<f64> = ind.iter().map(|v| v - p).collect();
    let var = longrun_variance(&z, windows, &KernelConfig::default())?;
    Ok((p, (var.value / windows as f64).sqrt()))
}

/// Finds `rho` in `[0, 1]` whose coincidence probability matches `target_p`.
pub fn calibrate_rho(phi: f64, innovation: Innovation, h: Order, target_p: f64) -> Result<Calibration> {
    calibrate_rho_with(phi, innovation, h, target_p, &CalibrationOptions::default())
}

/// Bisection on `rho` with common random numbers across evaluations.
pub fn calibrate_rho_with(
    phi: f64,
    innovation: Innovation,
    h: Order,
    target_p: f64,
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    if opts.windows < 2 || !(opts.tolerance > 0.0) {
        return Err(Error::invalid("calibration needs at least two windows and a positive tolerance"));
    }
    let eval = |rho: f64| coincidence_probability(phi, rho, innovation, h, opts.windows, opts.seed);
    let row = |rho: f64, (p, se): (f64, f64)| Calibration {
        phi,
        innovation,
        h: h.get(),
        target_p,
        rho,
        achieved_p: p,
        se,
        windows: opts.windows,
        seed: opts.seed,
    };
    let hi = eval(1.0)?;
    if (hi.0 - target_p).abs() < opts.tolerance {
        return Ok(row(1.0, hi));
    }
    let lo = eval(0.0)?;
    if (lo.0 - target_p).abs() < opts.tolerance {
        return Ok(row(0.0, lo));
    }
    if !(target_p > lo.0 && target_p < hi.0) {
        return Err(Error::OutOfRange { target: target_p, low: lo.0, high: hi.0 });
    }
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut best = (f64::INFINITY, 0.0, lo);
    for _ in 0..opts.max_iterations {
        let mid = 0.5 * (a + b);
        let r = eval(mid)?;
        let err = (r.0 - target_p).abs();
        if err < best.0 {
            best = (err, mid, r);
        }
        if err < opts.tolerance {
            return Ok(row(mid, r));
        }
        if r.0 < target_p {
            a = mid;
        } else {
            b = mid;
        }
    }
    // the Monte Carlo p is a step function of rho; settle for the closest point
    Ok(row(best.1, best.2))
}

const CALIBRATION_HEADER: &str = "# ordpat calibration table, format 1";

/// Persisted `(phi, innovation, h, target p) -> rho` calibrations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationTable {
    rows: Vec<Calibration>,
}

impl CalibrationTable {
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_CALIBRATION.as_bytes()).expect("bundled calibration table parses")
    }

    pub fn rows(&self) -> &[Calibration] {
        &self.rows
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<Calibration>, _>>()?;
        Ok(CalibrationTable { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn to_writer<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CALIBRATION_HEADER}")?;
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_writer(std::fs::File::create(path)?)
    }

    pub fn lookup(&self, phi: f64, innovation: Innovation, h: usize, target_p: f64) -> Option<&Calibration> {
        self.rows.iter().find(|r| {
            (r.phi - phi).abs() < 1e-12
                && r.innovation == innovation
                && r.h == h
                && (r.target_p - target_p).abs() < 1e-12
        })
    }

    /// Inserts `row`, replacing an entry with the same key.
    pub fn upsert(&mut self, row: Calibration) {
        match self.rows.iter().position(|r| {
            (r.phi - row.phi).abs() < 1e-12
                && r.innovation == row.innovation
                && r.h == row.h
                && (r.target_p - row.target_p).abs() < 1e-12
        }) {
            Some(i) => self.rows[i] = row,
            None => self.rows.push(row),
        }
    }
}

/// How a study fixes the dependence between the two series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Rho(f64),
    /// Coincidence probability, mapped to `rho` via the calibration table.
    TargetP(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    /// Rejection rate without a break, plus a KS check of the statistic.
    NullSize,
    /// Rejection rate for a grid of post-break couplings at one break position.
    PowerCurve,
    /// Rejection rate over sample sizes, break fractions and innovation laws.
    PowerTable,
    /// Distribution of `sqrt(n) (p_hat - p) / sigma_hat` against N(0, 1).
    CltCheck,
}

impl FromStr for StudyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "null_size" => Ok(StudyKind::NullSize),
            "power_curve" => Ok(StudyKind::PowerCurve),
            "power_table" => Ok(StudyKind::PowerTable),
            "clt_check" => Ok(StudyKind::CltCheck),
            _ => Err(Error::invalid(format!("unknown study kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyParams {
    pub kind: StudyKind,
    pub replications: usize,
    pub h: usize,
    pub level: f64,
    pub phi: f64,
    pub innovations: Vec<Innovation>,
    pub ns: Vec<usize>,
    pub pre: Coupling,
    /// Post-break couplings; the power table uses the first entry.
    #[serde(default)]
    pub post: Vec<Coupling>,
    /// Breaks sit after `round(n * fraction)` observations.
    #[serde(default)]
    pub break_fractions: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Keep the per-replication statistics in the report.
    #[serde(default)]
    pub keep_samples: bool,
}

impl StudyParams {
    /// Independent i.i.d. Gaussian pairs, n = 1000, h = 2.
    pub fn null_size_default() -> Self {
        StudyParams {
            kind: StudyKind::NullSize,
            replications: 1000,
            h: 2,
            level: 0.05,
            phi: 0.0,
            innovations: vec![Innovation::Gaussian],
            ns: vec![1000],
            pre: Coupling::Rho(0.0),
            post: vec![],
            break_fractions: vec![],
            seed: 1,
            burn_in: default_burn_in(),
            keep_samples: false,
        }
    }

    /// Correlated AR(1) with phi = 0.1 and p = 0.6353.
    pub fn clt_default() -> Self {
        StudyParams { kind: StudyKind::CltCheck, phi: 0.1, pre: Coupling::TargetP(0.6353), ..Self::null_size_default() }
    }

    /// phi = 0.2, p = 0.6353 before a break after half the data, a grid of post-break p.
    pub fn power_curve_default() -> Self {
        StudyParams {
            kind: StudyKind::PowerCurve,
            phi: 0.2,
            pre: Coupling::TargetP(0.6353),
            post: [0.6353, 0.6, 0.5378, 0.5, 0.45, 0.4].into_iter().map(Coupling::TargetP).collect(),
            break_fractions: vec![0.5],
            ..Self::null_size_default()
        }
    }

    /// phi = 0.2, p from 0.635 to 0.437, three laws, three sizes, breaks at 1/4, 1/3, 1/2.
    pub fn power_table_default() -> Self {
        StudyParams {
            kind: StudyKind::PowerTable,
            phi: 0.2,
            innovations: vec![Innovation::Gaussian, Innovation::StudentT(2.0), Innovation::Cauchy],
            ns: vec![500, 1000, 2000],
            pre: Coupling::TargetP(0.635),
            post: vec![Coupling::TargetP(0.437)],
            break_fractions: vec![0.25, 1.0 / 3.0, 0.5],
            ..Self::null_size_default()
        }
    }

    pub fn default_for(kind: StudyKind) -> Self {
        match kind {
            StudyKind::NullSize => Self::null_size_default(),
            StudyKind::CltCheck => Self::clt_default(),
            StudyKind::PowerCurve => Self::power_curve_default(),
            StudyKind::PowerTable => Self::power_table_default(),
        }
    }

    fn validate(&self) -> Result<()> {
        Order::new(self.h)?;
        if self.replications == 0 {
            return Err(Error::invalid("replications must be positive"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!("level {} must lie in (0, 1)", self.level)));
        }
        if !(self.phi.abs() < 1.0) {
            return Err(Error::invalid(format!("phi must lie in (-1, 1), got {}", self.phi)));
        }
        if self.innovations.is_empty() || self.ns.is_empty() {
            return Err(Error::invalid("a study needs at least one innovation law and one sample size"));
        }
        if let Some(&n) = self.ns.iter().find(|&&n| n <= self.h + 2) {
            return Err(Error::invalid(format!("sample size {n} is too small for h = {}", self.h)));
        }
        let needs_break = matches!(self.kind, StudyKind::PowerCurve | StudyKind::PowerTable);
        if needs_break {
            if self.post.is_empty() || self.break_fractions.is_empty() {
                return Err(Error::invalid("power studies need post-break couplings and break fractions"));
            }
            if self.break_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
                return Err(Error::invalid("break fractions must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// One cell of a study report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub n: usize,
    pub innovation: Innovation,
    /// Number of pre-break observations.
    pub break_at: Option<usize>,
    pub p_pre: Option<f64>,
    pub p_post: Option<f64>,
    pub rho_pre: f64,
    pub rho_post: Option<f64>,
    pub replications: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub se: f64,
    /// Replications whose statistic was undefined (counted as non-rejections).
    pub degenerate: usize,
    pub sample_mean: f64,
    pub sample_sd: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub runtime_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub version: String,
    pub params: StudyParams,
    pub cells: Vec<StudyCell>,
}

impl StudyReport {
    /// Equality ignoring wall-clock runtimes.
    pub fn same_results(&self, other: &StudyReport) -> bool {
        let strip =
            |r: &StudyReport| r.cells.iter().map(|c| StudyCell { runtime_s: 0.0, ..c.clone() }).collect::<Vec<_>>();
        self.params == other.params && strip(self) == strip(other)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "kind",
            "n",
            "innovation",
            "break_at",
            "p_pre",
            "p_post",
            "rho_pre",
            "rho_post",
            "replications",
            "rejections",
            "rate",
            "se",
            "degenerate",
            "sample_mean",
            "sample_sd",
            "ks_statistic",
            "ks_p_value",
            "runtime_s",
        ])?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let kind = serde_json::to_value(self.params.kind)?.as_str().unwrap_or_default().to_string();
        for c in &self.cells {
            wtr.write_record([
                kind.clone(),
                c.n.to_string(),
                c.innovation.to_string(),
                c.break_at.map(|b| b.to_string()).unwrap_or_default(),
                opt(c.p_pre),
                opt(c.p_post),
                c.rho_pre.to_string(),
                opt(c.rho_post),
                c.replications.to_string(),
                c.rejections.to_string(),
                c.rate.to_string(),
                c.se.to_string(),
                c.degenerate.to_string(),
                c.sample_mean.to_string(),
                c.sample_sd.to_string(),
                c.ks_statistic.to_string(),
                c.ks_p_value.to_string(),
                format!("{:.3}", c.runtime_s),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic p-value with Stephens' small-sample correction.
    pub p_value: f64,
}

pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / m - f).max(f - i as f64 / m);
    }
    let rm = m.sqrt();
    let p = 1.0 - kolmogorov_cdf((rm + 0.12 + 0.11 / rm) * d, &KolmogorovDist::default());
    KsResult { statistic: d, p_value: p.clamp(0.0, 1.0) }
}

struct CellPlan {
    n: usize,
    innovation: Innovation,
    break_at: Option<usize>,
    p_pre: Option<f64>,
    p_post: Option<f64>,
    rho_pre: f64,
    rho_post: Option<f64>,
}

fn resolve(
    c: Coupling,
    phi: f64,
    innovation: Innovation,
    h: Order,
    table: &CalibrationTable,
) -> Result<(f64, Option<f64>)> {
    match c {
        Coupling::Rho(rho) => Ok((rho, None)),
        Coupling::TargetP(p) => {
            let row = match table.lookup(phi, innovation, h.get(), p) {
                Some(r) => *r,
                None => calibrate_rho(phi, innovation, h, p)?,
            };
            Ok((row.rho, Some(p)))
        }
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&t| t > 0) {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// Runs a Monte Carlo study. Couplings given as target `p` are resolved through
/// `table`, calibrating on the fly when an entry is missing.
pub fn run_study(params: &StudyParams, table: &CalibrationTable) -> Result<StudyReport> {
    params.validate()?;
    let h = Order::new(params.h)?;
    let mut plans = Vec::new();
    for &n in &params.ns {
        for &innovation in &params.innovations {
            let (rho_pre, p_pre) = resolve(params.pre, params.phi, innovation, h, table)?;
            let base = CellPlan { n, innovation, break_at: None, p_pre, p_post: None, rho_pre, rho_post: None };
            match params.kind {
                StudyKind::NullSize | StudyKind::CltCheck => plans.push(base),
                StudyKind::PowerCurve => {
                    let at = (n as f64 * params.break_fractions[0]).round() as usize;
                    for &c in &params.post {
                        let (rho_post, p_post) = resolve(c, params.phi, innovation, h, table)?;
                        plans.push(CellPlan { break_at: Some(at), p_post, rho_post: Some(rho_post), ..base });
                    }
                }
                StudyKind::PowerTable => {
                    let (rho_post, p_post) = resolve(params.post[0], params.phi, innovation, h, table)?;
                    for &f in &params.break_fractions {
                        let at = (n as f64 * f).round() as usize;
                        plans.push(CellPlan { break_at: Some(at), p_post, rho_post: Some(rho_post), ..base });
                    }
                }
            }
        }
    }
    if params.kind == StudyKind::CltCheck && plans.iter().any(|p| p.p_pre.is_none()) {
        return Err(Error::invalid("the CLT check needs the pre coupling given as a target p"));
    }
    if let Some(p) = plans.iter().find(|p| p.break_at.is_some_and(|b| b < 1 || b >= p.n)) {
        return Err(Error::invalid(format!("break after {:?} observations is outside (0, {})", p.break_at, p.n)));
    }

    let pool = worker_pool()?;
    let bt = BreakTestConfig { level: params.level, ..Default::default() };
    let cells = plans
        .iter()
        .enumerate()
        .map(|(ci, plan)| {
            let start = Instant::now();
            let cfg = Ar1PairConfig {
                phi: params.phi,
                rho: plan.rho_pre,
                innovation: plan.innovation,
                n: plan.n,
                burn_in: params.burn_in,
                seed: params.seed,
            };
            let spec = plan.break_at.map(|b| BreakSpec {
                change_at: b + 1,
                post_rho: plan.rho_post.unwrap_or(plan.rho_pre),
                post_phi: None,
            });
            let outcomes: Vec<Option<f64>> = pool.install(|| {
                (0..params.replications)
                    .into_par_iter()
                    .map(|r| {
                        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                        rng.set_stream(((ci as u64) << 32) | r as u64);
                        let s = generate(&cfg, spec.as_ref(), &mut rng)?;
                        replicate(params.kind, &s, h, &bt, plan.p_pre)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            Ok(summarize(params, plan, &outcomes, &bt, start))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyReport { version: env!("CARGO_PKG_VERSION").to_string(), params: params.clone(), cells })
}

// The studentized statistic of one replication, or None if it is undefined.
fn replicate(kind: StudyKind, s: &PairedSeries, h: Order, bt: &BreakTestConfig, p: Option<f64>) -> Result<Option<f64>> {
    let pp = PairPatterns::new(s, h)?;
    let ind = pp.coincidence_indicators();
    let n = pp.n();
    match kind {
        StudyKind::CltCheck => {
            let p_hat = pp.p_hat();
            let z: Vec<f64> = ind.iter().map(|v| v - p_hat).collect();
            let var = longrun_variance(&z, n, &bt.kernel)?;
            if var.value <= 0.0 {
                return Ok(None);
            }
            let p = p.expect("checked by run_study");
            Ok(Some((n as f64).sqrt() * (p_hat - p) / var.value.sqrt()))
        }
        _ => match cusum_test(&ind, n, h, bt) {
            Ok(r) => Ok(Some(r.statistic)),
            Err(Error::DegenerateVariance { .. }) => Ok(None),
            Err(e) => Err(e),
        },
    }
}

fn summarize(
    params: &StudyParams,
    plan: &CellPlan,
    outcomes: &[Option<f64>],
    bt: &BreakTestConfig,
    start: Instant,
) -> StudyCell {
    let stats: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let degenerate = outcomes.len() - stats.len();
    let reps = params.replications;
    let (rejections, ks) = match params.kind {
        StudyKind::CltCheck => {
            let normal = Normal::standard();
            (0, ks_test(&stats, |x| normal.cdf(x)))
        }
        _ => {
            let crit = crate::breaktest::kolmogorov_quantile(params.level, &bt.kolmogorov);
            let rej = stats.iter().filter(|&&s| s >= crit).count();
            (rej, ks_test(&stats, |x| kolmogorov_cdf(x, &bt.kolmogorov)))
        }
    };
    let rate = rejections as f64 / reps as f64;
    let k = stats.len().max(1) as f64;
    let mean = stats.iter().sum::<f64>() / k;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    StudyCell {
        n: plan.n,
        innovation: plan.innovation,
        break_at: plan.break_at,
        p_pre: plan.p_pre,
        p_post: plan.p_post,
        rho_pre: plan.rho_pre,
        rho_post: plan.rho_post,
        replications: reps,
        rejections,
        rate,
        se: (rate * (1.0 - rate) / reps as f64).sqrt(),
        degenerate,
        sample_mean: mean,
        sample_sd: var.sqrt(),
        ks_statistic: ks.statistic,
        ks_p_value: ks.p_value,
        runtime_s: start.elapsed().as_secs_f64(),
        samples: params.keep_samples.then_some(stats),
    }
}

/// Summary of the noisy-overlay robustness experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyOverlayReport {
    pub replications: usize,
    /// Variance of the added noise: the sample variance of `X`.
    pub noise_variance: f64,
    /// Replications without a single coincident pattern.
    pub zero_coincidences: usize,
    pub awopd_mean: f64,
    pub awopd_sd: f64,
    pub comparison_mean: f64,
    pub comparison_sd: f64,
    pub seed: u64,
}

/// Adds i.i.d. Gaussian noise with the variance of `X` to `X` and recomputes the
/// weighted dependence values against the unchanged `Y`.
pub fn noisy_overlay(
    s: &PairedSeries,
    h: Order,
    d: &PatternMetric,
    w: &WeightFunction,
    replications: usize,
    seed: u64,
) -> Result<NoisyOverlayReport> {
    if replications == 0 {
        return Err(Error::invalid("replications must be positive"));
    }
    let x = s.x();
    let m = x.len() as f64;
    if x.len() < 2 {
        return Err(Error::invalid("noise variance needs at least two observations"));
    }
    let mean = x.iter().sum::<f64>() / m;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let sd = var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut aw, mut cmp, mut zero) = (Vec::new(), Vec::new(), 0);
    for _ in 0..replications {
        let noisy: Vec<f64> = x.iter().map(|v| v + sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let e = estimate_awopd(&PairedSeries::new(noisy, s.y().to_vec())?, h, d, w)?;
        if e.coincidences == 0 {
            zero += 1;
        }
        aw.push(e.awopd_value);
        cmp.push(e.comparison_value);
    }
    let (am, asd) = mean_sd(&aw);
    let (cm, csd) = mean_sd(&cmp);
    Ok(NoisyOverlayReport {
        replications,
        noise_variance: var,
        zero_coincidences: zero,
        awopd_mean: am,
        awopd_sd: asd,
        comparison_mean: cm,
        comparison_sd: csd,
        seed,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}
