//! `ordpat` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 degenerate statistic.

mod args;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use ordpat::breaktest::{t_statistic, w_statistic, BreakTestConfig, CusumForm};
use ordpat::dataio::{self, AlignPolicy, CsvOptions};
use ordpat::estimators::{estimate_awopd, DependenceEstimates};
use ordpat::longrun::{Bandwidth, Kernel, KernelConfig};
use ordpat::metrics::{MetricDocument, PatternMetric, WeightFunction};
use ordpat::simulate::{
    self, Ar1PairConfig, BreakSpec, CalibrationOptions, CalibrationTable, Coupling, Innovation, StudyKind, StudyParams,
};
use ordpat::{Order, PairedSeries};
use serde::Serialize;
use serde_json::{json, Value};

use args::{Cli, Command, Common, ConfigFile, Format, Input};
use output::Rendered;

/// A failed run and its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Lib(ordpat::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        use ordpat::Error as E;
        match self {
            Failure::Usage(_) => 1,
            Failure::Lib(E::DegenerateVariance { .. }) => 3,
            Failure::Lib(E::DimensionGuard { .. } | E::OutOfRange { .. }) => 1,
            Failure::Lib(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Lib(ordpat::Error::DegenerateVariance { reason, raw_statistic: Some(r) }) => {
                format!("degenerate variance: {reason} (un-studentized statistic {r})")
            }
            Failure::Lib(e) => e.to_string(),
        }
    }
}

impl From<ordpat::Error> for Failure {
    fn from(e: ordpat::Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

/// Fully resolved shared options, echoed in every JSON report.
#[derive(Debug, Clone, Serialize)]
struct Resolved {
    h: usize,
    level: f64,
    kernel: String,
    bandwidth: String,
    metric: String,
    weight: String,
    seed: u64,
    format: Format,
    out: Option<PathBuf>,
    large_order: bool,
    allow_large_dimension: bool,
    #[serde(skip)]
    order: Order,
    #[serde(skip)]
    kernel_cfg: KernelConfig,
    #[serde(skip)]
    metric_fn: PatternMetric,
    #[serde(skip)]
    weight_fn: WeightFunction,
}

impl Resolved {
    fn is_classical(&self) -> bool {
        matches!(self.metric_fn, PatternMetric::Discrete) && matches!(self.weight_fn, WeightFunction::IndicatorAtZero)
    }

    fn break_config(&self, form: CusumForm) -> BreakTestConfig {
        BreakTestConfig { kernel: self.kernel_cfg.clone(), level: self.level, form, ..Default::default() }
    }
}

fn load_config(common: &mut Common, input: Option<&mut Input>) -> CliResult<Option<Value>> {
    let Some(path) = common.config.clone() else { return Ok(None) };
    let text = std::fs::read_to_string(&path)?;
    let file: ConfigFile = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    common.merge(&file.common);
    if let Some(input) = input {
        input.merge(&file.input);
    }
    Ok(file.study)
}

fn parzen(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        1.0 - 6.0 * a * a + 6.0 * a * a * a
    } else if a <= 1.0 {
        2.0 * (1.0 - a).powi(3)
    } else {
        0.0
    }
}

fn resolve(c: &Common) -> CliResult<Resolved> {
    let h = c.h.unwrap_or(2);
    let large_order = c.large_order.unwrap_or(false);
    let order = if large_order { Order::with_override(h) } else { Order::new(h) }.map_err(|e| usage(e.to_string()))?;
    let level = c.level.unwrap_or(0.05);
    if !(level > 0.0 && level < 1.0) {
        return Err(usage(format!("--level must lie in (0, 1), got {level}")));
    }
    let kernel_name = c.kernel.clone().unwrap_or_else(|| "bartlett".into());
    let kernel = match kernel_name.as_str() {
        "bartlett" => Kernel::Bartlett,
        "parzen" => Kernel::custom("parzen", parzen, 1.0).expect("valid kernel"),
        other => return Err(usage(format!("unknown kernel `{other}` (expected bartlett or parzen)"))),
    };
    let bw = c.bandwidth.clone().unwrap_or_else(|| "log".into());
    let bandwidth = match bw.as_str() {
        "log" | "ln" => Bandwidth::LogN,
        s => match s.parse::<f64>() {
            Ok(b) if b.is_finite() && b > 0.0 => Bandwidth::Fixed(b),
            _ => return Err(usage(format!("--bandwidth must be `log` or a positive number, got `{s}`"))),
        },
    };
    let allow_large_dimension = c.allow_large_dimension.unwrap_or(false);
    let kernel_cfg = KernelConfig { kernel, bandwidth, allow_large_dimension };

    let metric = c.metric.clone().unwrap_or_else(|| "discrete".into());
    let metric_fn = match PatternMetric::from_name(&metric) {
        Ok(m) => m,
        Err(_) => {
            let doc = load_document(&metric, h)?;
            doc.metric.ok_or_else(|| usage(format!("{metric} defines no metric")))?
        }
    };
    let weight = c.weight.clone().unwrap_or_else(|| "indicator".into());
    let weight_fn = match WeightFunction::from_name(&weight) {
        Ok(w) => w,
        Err(_) => {
            let doc = load_document(&weight, h)?;
            doc.weight.ok_or_else(|| usage(format!("{weight} defines no weights")))?
        }
    };
    let attained = metric_fn.attained_distances(order).map_err(|e| usage(e.to_string()))?;
    weight_fn.check_monotone_on(&attained).map_err(|e| usage(e.to_string()))?;

    Ok(Resolved {
        h,
        level,
        kernel: kernel_name,
        bandwidth: bw,
        metric,
        weight,
        seed: c.seed.unwrap_or(1),
        format: c.format.unwrap_or(Format::Table),
        out: c.out.clone(),
        large_order,
        allow_large_dimension,
        order,
        kernel_cfg,
        metric_fn,
        weight_fn,
    })
}

fn load_document(spec: &str, h: usize) -> CliResult<MetricDocument> {
    let path = Path::new(spec);
    if !path.exists() {
        return Err(usage(format!("`{spec}` is neither a preset nor an existing file")));
    }
    let doc = MetricDocument::load(path).map_err(|e| usage(format!("{spec}: {e}")))?;
    if doc.h != h {
        return Err(usage(format!("{spec} is for h = {}, but --h is {h}", doc.h)));
    }
    Ok(doc)
}

/// The loaded series with a record of how it was obtained.
#[derive(Debug, Serialize)]
struct InputInfo {
    source: Value,
    n: usize,
    dropped_x: usize,
    dropped_y: usize,
    negate_y: bool,
    first: Option<String>,
    last: Option<String>,
}

fn open(p: &Path) -> CliResult<std::fs::File> {
    std::fs::File::open(p)
        .map_err(|e| Failure::Lib(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())).into()))
}

fn parse_date(s: &str) -> CliResult<dataio::NaiveDate> {
    dataio::parse_date(s).ok_or_else(|| usage(format!("`{s}` is not an ISO date (YYYY-MM-DD)")))
}

fn load_input(i: &Input) -> CliResult<(PairedSeries, InputInfo)> {
    let delimiter = match i.delimiter.unwrap_or(',') {
        c if c.is_ascii() => c as u8,
        c => return Err(usage(format!("delimiter `{c}` must be a single ASCII character"))),
    };
    let (mut s, dropped_x, dropped_y, source) = match (&i.pair, &i.x_file, &i.y_file) {
        (Some(p), None, None) => {
            let (xc, yc) = (i.x_col.as_deref().unwrap_or("x"), i.y_col.as_deref().unwrap_or("y"));
            let dc = i.date_col.as_deref().unwrap_or("date");
            let s = dataio::read_pair_csv_columns(open(p)?, xc, yc, dc, delimiter)?;
            (s, 0, 0, json!({ "pair": p, "x_col": xc, "y_col": yc }))
        }
        (None, Some(xf), Some(yf)) => {
            let opts = CsvOptions {
                date_column: i.date_col.clone().unwrap_or_else(|| "Date".into()),
                value_column: i.value_col.clone().unwrap_or_else(|| "Close".into()),
                sort: true,
                delimiter,
            };
            open(xf)?;
            open(yf)?;
            let a = dataio::load_csv(xf, &opts)?;
            let b = dataio::load_csv(yf, &opts)?;
            let al = dataio::align(&a, &b, AlignPolicy::InnerJoin)?;
            let src = json!({ "x_file": xf, "y_file": yf, "date_col": opts.date_column, "value_col": opts.value_column, "align": "inner_join" });
            (al.series, al.dropped_x, al.dropped_y, src)
        }
        _ => return Err(usage("give either --pair or both --x-file and --y-file")),
    };
    let start = i.start.as_deref().map(parse_date).transpose()?;
    let end = i.end.as_deref().map(parse_date).transpose()?;
    match (start, end, i.count) {
        (Some(st), None, Some(c)) => s = dataio::select_from(&s, st, c)?,
        (None, None, Some(c)) => s = s.slice(0, c)?,
        (st, en, None) if st.is_some() || en.is_some() => s = dataio::select_range(&s, st, en)?,
        (_, Some(_), Some(_)) => return Err(usage("--end and --count are mutually exclusive")),
        _ => {}
    }
    let negate_y = i.negate_y.unwrap_or(false);
    if negate_y {
        s = s.negated_y();
    }
    let ts = s.timestamps().map(|t| t.to_vec());
    let info = InputInfo {
        source,
        n: s.len(),
        dropped_x,
        dropped_y,
        negate_y,
        first: ts.as_ref().and_then(|t| t.first().cloned()),
        last: ts.as_ref().and_then(|t| t.last().cloned()),
    };
    Ok((s, info))
}

fn envelope(command: &str, r: &Resolved, input: Option<&InputInfo>, extra: Value, results: Value) -> Value {
    let mut config = serde_json::to_value(r).expect("serializable config");
    if let Some(i) = input {
        config["input"] = serde_json::to_value(i).expect("serializable input");
    }
    if let (Value::Object(c), Value::Object(e)) = (&mut config, extra) {
        c.extend(e);
    }
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": r.seed,
        "config": config,
        "results": results,
    })
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Analyze(mut a) => {
            load_config(&mut a.common, Some(&mut a.input))?;
            let r = resolve(&a.common)?;
            let (s, info) = load_input(&a.input)?;
            let est = DependenceEstimates::compute(&s, r.order, Some(&r.kernel_cfg), r.level)?;
            let results = serde_json::to_value(&est).expect("serializable");
            output::emit(&r, "analyze", &Rendered::record(envelope("analyze", &r, Some(&info), json!({}), results)))?;
            Ok(0)
        }
        Command::Breaktest(mut a) => {
            load_config(&mut a.common, Some(&mut a.input))?;
            let r = resolve(&a.common)?;
            let (s, info) = load_input(&a.input)?;
            let form = if a.one_sided { CusumForm::OneSided } else { CusumForm::Absolute };
            let cfg = r.break_config(form);
            let (test, res) = if r.is_classical() {
                ("T", t_statistic(&s, r.order, &cfg)?)
            } else {
                ("W", w_statistic(&s, r.order, &r.metric_fn, &r.weight_fn, &cfg)?)
            };
            let traj_path = a.trajectory.clone().or_else(|| r.out.as_ref().map(|o| o.join("trajectory.csv")));
            if let Some(p) = &traj_path {
                output::ensure_parent(p)?;
                res.write_trajectory_csv(std::fs::File::create(p)?)?;
            }
            let mut results = serde_json::to_value(&res).expect("serializable");
            results["test"] = json!(test);
            let extra = json!({ "one_sided": a.one_sided, "trajectory_file": traj_path });
            output::emit(&r, "breaktest", &Rendered::record(envelope("breaktest", &r, Some(&info), extra, results)))?;
            Ok(0)
        }
        Command::Awopd(mut a) => {
            load_config(&mut a.common, Some(&mut a.input))?;
            let r = resolve(&a.common)?;
            let (s, info) = load_input(&a.input)?;
            let est = estimate_awopd(&s, r.order, &r.metric_fn, &r.weight_fn)?;
            let mut results = json!({ "estimate": est });
            let mut code = 0;
            if !a.no_test {
                match w_statistic(&s, r.order, &r.metric_fn, &r.weight_fn, &r.break_config(CusumForm::Absolute)) {
                    Ok(t) => results["break_test"] = serde_json::to_value(&t).expect("serializable"),
                    Err(e @ ordpat::Error::DegenerateVariance { .. }) => {
                        let f = Failure::Lib(e);
                        eprintln!("warning: break test not available: {}", f.message());
                        results["break_test_error"] = json!(f.message());
                        code = f.code();
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if let Some(reps) = a.noisy_overlay {
                let rep = simulate::noisy_overlay(&s, r.order, &r.metric_fn, &r.weight_fn, reps, r.seed)?;
                results["noisy_overlay"] = serde_json::to_value(&rep).expect("serializable");
            }
            let extra = json!({ "break_test": !a.no_test, "noisy_overlay": a.noisy_overlay });
            output::emit(&r, "awopd", &Rendered::record(envelope("awopd", &r, Some(&info), extra, results)))?;
            Ok(code)
        }
        Command::Simulate(a) => run_study(a, "simulate", StudyKind::NullSize),
        Command::Power(a) => run_study(a, "power", StudyKind::PowerTable),
        Command::Calibrate(mut a) => {
            load_config(&mut a.common, None)?;
            let r = resolve(&a.common)?;
            let innovation: Innovation = a.innovation.parse().map_err(|e: ordpat::Error| usage(e.to_string()))?;
            let opts = CalibrationOptions {
                windows: a.windows,
                tolerance: a.tolerance,
                seed: a.common.seed.unwrap_or(CalibrationOptions::default().seed),
                ..Default::default()
            };
            let row = simulate::calibrate_rho_with(a.phi, innovation, r.order, a.target, &opts)?;
            let table_path = a.table.clone().or_else(|| r.out.as_ref().map(|o| o.join("calibration.csv")));
            if let Some(p) = &table_path {
                let mut table = if p.exists() { CalibrationTable::load(p)? } else { CalibrationTable::default() };
                table.upsert(row);
                output::ensure_parent(p)?;
                table.save(p)?;
            }
            let mut r = r;
            r.seed = opts.seed;
            let extra = json!({ "phi": a.phi, "innovation": innovation, "target": a.target, "options": opts, "table": table_path });
            let results = serde_json::to_value(row).expect("serializable");
            output::emit(&r, "calibrate", &Rendered::record(envelope("calibrate", &r, None, extra, results)))?;
            Ok(0)
        }
        Command::Generate(mut a) => {
            load_config(&mut a.common, None)?;
            let r = resolve(&a.common)?;
            let innovation: Innovation = a.innovation.parse().map_err(|e: ordpat::Error| usage(e.to_string()))?;
            let cfg = Ar1PairConfig { phi: a.phi, rho: a.rho, innovation, n: a.n, burn_in: a.burn_in, seed: r.seed };
            let s = match (a.change_at, a.post_rho) {
                (Some(change_at), Some(post_rho)) => {
                    simulate::gen_with_break(&cfg, &BreakSpec { change_at, post_rho, post_phi: a.post_phi })
                }
                _ => simulate::gen_ar1_pair(&cfg),
            }
            .map_err(|e| usage(e.to_string()))?;
            output::emit_pair(&r, &s)?;
            Ok(0)
        }
    }
}

fn run_study(mut a: args::StudyArgs, command: &str, default_kind: StudyKind) -> CliResult<u8> {
    let study_cfg = load_config(&mut a.common, None)?;
    let kind = match &a.kind {
        Some(k) => k.parse::<StudyKind>().map_err(|e| usage(e.to_string()))?,
        None => match study_cfg.as_ref().and_then(|v| v.get("kind")).cloned() {
            Some(v) => serde_json::from_value(v).map_err(|e| usage(format!("study kind: {e}")))?,
            None => default_kind,
        },
    };
    let mut params = StudyParams::default_for(kind);
    if let Some(Value::Object(over)) = study_cfg {
        let mut base = serde_json::to_value(&params).expect("serializable");
        if let Value::Object(b) = &mut base {
            b.extend(over);
        }
        params = serde_json::from_value(base).map_err(|e| usage(format!("study config: {e}")))?;
    }
    // flags override the config file
    if let Some(h) = a.common.h {
        params.h = h;
    }
    if let Some(l) = a.common.level {
        params.level = l;
    }
    if let Some(s) = a.common.seed {
        params.seed = s;
    }
    a.common.h = Some(params.h);
    a.common.level = Some(params.level);
    a.common.seed = Some(params.seed);
    let r = resolve(&a.common)?;
    if r.kernel != "bartlett" || r.bandwidth != "log" || !r.is_classical() {
        return Err(usage("studies use the Bartlett kernel with b = ln n and the classical test"));
    }
    if let Some(v) = a.replications {
        params.replications = v;
    }
    if !a.ns.is_empty() {
        params.ns = a.ns.clone();
    }
    if let Some(v) = a.phi {
        params.phi = v;
    }
    if !a.innovations.is_empty() {
        params.innovations = a
            .innovations
            .iter()
            .map(|s| s.parse::<Innovation>())
            .collect::<Result<_, _>>()
            .map_err(|e| usage(e.to_string()))?;
    }
    if let Some(p) = a.pre_p {
        params.pre = Coupling::TargetP(p);
    }
    if let Some(rho) = a.pre_rho {
        params.pre = Coupling::Rho(rho);
    }
    if !a.post_p.is_empty() {
        params.post = a.post_p.iter().map(|&p| Coupling::TargetP(p)).collect();
    }
    if !a.post_rho.is_empty() {
        params.post = a.post_rho.iter().map(|&p| Coupling::Rho(p)).collect();
    }
    if !a.break_fractions.is_empty() {
        params.break_fractions = a.break_fractions.clone();
    }
    if let Some(b) = a.burn_in {
        params.burn_in = b;
    }
    params.keep_samples |= a.keep_samples;
    let table = match &a.calibration {
        Some(p) => CalibrationTable::load(p)?,
        None => CalibrationTable::bundled(),
    };
    let report = simulate::run_study(&params, &table).map_err(|e| match e {
        ordpat::Error::InvalidInput(m) => usage(m),
        e => Failure::Lib(e),
    })?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let extra = json!({ "study": params, "calibration": a.calibration });
    let results = serde_json::to_value(&report.cells).expect("serializable");
    let rendered =
        Rendered::tabular(envelope(command, &r, None, extra, results), String::from_utf8(csv).expect("utf-8 csv"));
    output::emit(&r, command, &rendered)?;
    Ok(0)
}
