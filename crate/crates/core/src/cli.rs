//! The `hrstat` command line.
//!
//! Settings are merged from defaults, an optional `--config` file of
//! `key = value` lines and command-line flags, in that order. Every report
//! embeds the resolved settings and the seed; the thread count is left out
//! so reports do not depend on it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{HrError, Result};
use crate::hr::{hr_estimate, HrConfig, HrEstimateDoc};
use crate::io::{load_csv, load_labels, normalize_key, parse_config, screen_genes, split_by_label};
use crate::location::{run_tests, Calibration, Method, TestConfig};
use crate::qda::{hrqda_train, metrics, ConfusionCounts, QdaConfig, QdaModel, QdaModelDoc};
use crate::rng::DEFAULT_SEED;
use crate::sim::experiments::{run_experiment, Experiment, SimSpec};
use crate::sim::generate::{DistSpec, Family};
use crate::DataMatrix;

pub const THREADS_ENV: &str = "HRSTAT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hrstat", version, about = "Robust high-dimensional location tests and discriminant analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the HR location and scatter estimator.
    Estimate(Flags),
    /// One-sample location tests of H0: mu = 0.
    Test(Flags),
    /// Train a discriminant rule on labelled data.
    QdaTrain(Flags),
    /// Classify rows with a trained rule.
    QdaPredict(Flags),
    /// Run a Monte-Carlo experiment.
    Simulate(Flags),
}

#[derive(Debug, Args, Default)]
pub struct Flags {
    /// Input CSV, observations in rows.
    #[arg(long)]
    pub input: Option<String>,
    /// Label file (one 1 or 2 per line), or `last` for a final label column.
    #[arg(long)]
    pub labels: Option<String>,
    /// Trained rule for qda-predict.
    #[arg(long)]
    pub model: Option<String>,
    /// Comma-separated methods, or `all`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long = "lambda-c1")]
    pub lambda_c1: Option<String>,
    #[arg(long = "lambda-c2")]
    pub lambda_c2: Option<String>,
    #[arg(long)]
    pub bandwidth: Option<String>,
    #[arg(long = "boot-m")]
    pub boot_m: Option<String>,
    #[arg(long)]
    pub reps: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub threads: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    /// `json` or `csv`.
    #[arg(long)]
    pub format: Option<String>,
    /// File of `key = value` settings; flags take precedence.
    #[arg(long)]
    pub config: Option<String>,
    /// Named simulation preset, e.g. `table1-modelI-normal-p120`.
    #[arg(long)]
    pub preset: Option<String>,
    /// `bootstrap` or `asymptotic`.
    #[arg(long)]
    pub calibration: Option<String>,
    /// Input CSV starts with a header row.
    #[arg(long)]
    pub header: bool,
}

const GENERAL_KEYS: &[&str] = &["input", "out", "format", "seed", "threads", "header"];
const HR_KEYS: &[&str] = &["bandwidth", "lambda_c1", "lambda_c2", "lambda", "tol", "max_iter"];
const TEST_KEYS: &[&str] = &["method", "alpha", "boot_m", "calibration"];
const QDA_KEYS: &[&str] = &["labels", "fixed_c", "screen"];
const SIM_KEYS: &[&str] = &[
    "preset",
    "experiment",
    "cov_model",
    "dist",
    "n",
    "p",
    "reps",
    "kappa",
    "s_grid",
    "n_null",
    "scale_norm",
    "mu2_shift",
];

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Test(_) => "test",
            Command::QdaTrain(_) => "qda-train",
            Command::QdaPredict(_) => "qda-predict",
            Command::Simulate(_) => "simulate",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Estimate(f) | Command::Test(f) | Command::QdaTrain(f) | Command::QdaPredict(f) | Command::Simulate(f) => f,
        }
    }

    fn allowed_keys(&self) -> Vec<&'static str> {
        let mut keys = GENERAL_KEYS.to_vec();
        match self {
            Command::Estimate(_) => keys.extend(HR_KEYS),
            Command::Test(_) => keys.extend(HR_KEYS.iter().chain(TEST_KEYS)),
            Command::QdaTrain(_) => keys.extend(HR_KEYS.iter().chain(QDA_KEYS)),
            Command::QdaPredict(_) => keys.extend(["labels", "model"]),
            Command::Simulate(_) => keys.extend(HR_KEYS.iter().chain(TEST_KEYS).chain(SIM_KEYS).chain(&["fixed_c"])),
        }
        keys
    }
}

/// Merged settings for one invocation.
struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn resolve(cmd: &Command) -> Result<Self> {
        let f = cmd.flags();
        let mut values = match &f.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| HrError::Config(format!("cannot read config file {path}: {e}")))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        let flags = [
            ("input", &f.input),
            ("labels", &f.labels),
            ("model", &f.model),
            ("method", &f.method),
            ("alpha", &f.alpha),
            ("lambda_c1", &f.lambda_c1),
            ("lambda_c2", &f.lambda_c2),
            ("bandwidth", &f.bandwidth),
            ("boot_m", &f.boot_m),
            ("reps", &f.reps),
            ("seed", &f.seed),
            ("threads", &f.threads),
            ("out", &f.out),
            ("format", &f.format),
            ("preset", &f.preset),
            ("calibration", &f.calibration),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                values.insert(k.to_string(), v.clone());
            }
        }
        if f.header {
            values.insert("header".into(), "true".into());
        }
        let allowed = cmd.allowed_keys();
        for k in values.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(HrError::Config(format!("setting '{k}' does not apply to {}", cmd.name())));
            }
        }
        Ok(Settings { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(&normalize_key(key)) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| HrError::Config(format!("invalid value '{v}' for {key}"))),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.str(key).ok_or_else(|| HrError::Config(format!("missing required setting --{}", key.replace('_', "-"))))
    }

    fn seed(&self) -> Result<u64> {
        self.get_or("seed", DEFAULT_SEED)
    }

    fn header(&self) -> Result<bool> {
        self.get_or("header", false)
    }

    fn format(&self, default: &str) -> Result<String> {
        let f = self.str("format").unwrap_or(default).to_ascii_lowercase();
        match f.as_str() {
            "json" | "csv" => Ok(f),
            _ => Err(HrError::Config(format!("unknown format '{f}' (expected json or csv)"))),
        }
    }

    fn hr_config(&self) -> Result<HrConfig> {
        let d = HrConfig::default();
        let cfg = HrConfig {
            bandwidth: self.get_or("bandwidth", d.bandwidth)?,
            tol: self.get_or("tol", d.tol)?,
            max_iter: self.get_or("max_iter", d.max_iter)?,
            lambda: self.get("lambda")?,
            lambda_c1: self.get_or("lambda_c1", d.lambda_c1)?,
            lambda_c2: self.get_or("lambda_c2", d.lambda_c2)?,
            ..d
        };
        if !(cfg.tol > 0.0) || !(cfg.lambda_c1 > 0.0) || cfg.lambda.is_some_and(|l| !(l > 0.0)) {
            return Err(HrError::Config("tol, lambda and lambda_c1 must be positive".into()));
        }
        Ok(cfg)
    }

    fn test_config(&self, mut base: TestConfig) -> Result<TestConfig> {
        base.hr = self.hr_config()?;
        base.alpha = self.get_or("alpha", base.alpha)?;
        base.boot_m = self.get_or("boot_m", base.boot_m)?;
        if let Some(c) = self.str("calibration") {
            base.calibration = c.parse()?;
        }
        if !(base.alpha > 0.0 && base.alpha <= 1.0) {
            return Err(HrError::Config(format!("alpha must lie in (0, 1], got {}", base.alpha)));
        }
        if base.calibration == Calibration::Bootstrap && base.boot_m < 2 {
            return Err(HrError::Config("boot_m must be at least 2".into()));
        }
        Ok(base)
    }

    fn methods(&self, default: &[Method]) -> Result<Vec<Method>> {
        match self.str("method") {
            None => Ok(default.to_vec()),
            Some(s) if s.eq_ignore_ascii_case("all") => Ok(Method::ALL.to_vec()),
            Some(s) => s.split(',').map(|m| m.parse()).collect(),
        }
    }

    fn threads(&self) -> Result<Option<usize>> {
        let raw = match self.str("threads") {
            Some(v) => Some(v.to_string()),
            None => std::env::var(THREADS_ENV).ok().filter(|v| !v.trim().is_empty()),
        };
        match raw {
            None => Ok(None),
            Some(v) => match v.trim().parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Some(k)),
                _ => Err(HrError::Config(format!("thread count must be a positive integer, got '{v}'"))),
            },
        }
    }

    fn echo(&self) -> Value {
        let mut m = serde_json::Map::new();
        for (k, v) in &self.values {
            if k != "threads" {
                m.insert(k.clone(), Value::String(v.clone()));
            }
        }
        Value::Object(m)
    }
}

fn load_input(s: &Settings, label_column: bool) -> Result<crate::io::Dataset> {
    let path = s.require("input")?;
    load_csv(Path::new(path), s.header()?, label_column)
}

/// Loads data plus labels from `--labels FILE` or a final label column.
fn load_labelled(s: &Settings, default_last: bool) -> Result<(DataMatrix, Option<Vec<u8>>)> {
    match s.str("labels") {
        Some("last") => {
            let d = load_input(s, true)?;
            Ok((d.x, d.labels))
        }
        Some(path) => {
            let d = load_input(s, false)?;
            let labels = load_labels(Path::new(path))?;
            if labels.len() != d.x.nrows() {
                return Err(HrError::Dimension(format!(
                    "{} labels for {} rows",
                    labels.len(),
                    d.x.nrows()
                )));
            }
            Ok((d.x, Some(labels)))
        }
        None if default_last => {
            let d = load_input(s, true)?;
            Ok((d.x, d.labels))
        }
        None => Ok((load_input(s, false)?.x, None)),
    }
}

fn emit(s: &Settings, body: &[u8]) -> Result<()> {
    match s.str("out") {
        Some(path) => std::fs::write(PathBuf::from(path), body)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn csv_only_json(s: &Settings, cmd: &str) -> Result<()> {
    if s.format("json")? != "json" {
        return Err(HrError::Config(format!("{cmd} writes JSON only")));
    }
    Ok(())
}

fn cmd_estimate(s: &Settings) -> Result<Vec<u8>> {
    csv_only_json(s, "estimate")?;
    let x = load_input(s, false)?.x;
    let cfg = s.hr_config()?;
    let est = hr_estimate(&x, &cfg)?;
    json_bytes(&json!({
        "command": "estimate",
        "config": s.echo(),
        "seed": s.seed()?,
        "hr": cfg,
        "n": x.nrows(),
        "estimate": HrEstimateDoc::from(&est),
    }))
}

fn cmd_test(s: &Settings) -> Result<Vec<u8>> {
    let format = s.format("json")?;
    let x = load_input(s, false)?.x;
    let cfg = s.test_config(TestConfig::default())?;
    let methods = s.methods(&Method::ALL)?;
    let seed = s.seed()?;
    let suite = run_tests(&x, &cfg, seed)?;
    let reports: Vec<_> = methods.iter().map(|&m| suite.report(m).clone()).collect();
    if format == "csv" {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "statistic", "p_value", "reject", "calibration"])?;
        for r in &reports {
            w.write_record([
                r.method.name().to_string(),
                r.statistic.to_string(),
                r.p_value.to_string(),
                r.alpha_reject.map(|b| b.to_string()).unwrap_or_default(),
                format!("{:?}", r.calibration).to_ascii_lowercase(),
            ])?;
        }
        let mut out = config_comment(s)?;
        out.extend(w.into_inner().map_err(|e| HrError::Io(e.into_error()))?);
        return Ok(out);
    }
    json_bytes(&json!({
        "command": "test",
        "config": s.echo(),
        "seed": seed,
        "test": cfg,
        "reports": reports,
        "diagnostics": suite.diagnostics,
    }))
}

fn config_comment(s: &Settings) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "# seed = {}", s.seed()?)?;
    if let Value::Object(m) = s.echo() {
        for (k, v) in m {
            writeln!(out, "# {k} = {}", v.as_str().unwrap_or_default())?;
        }
    }
    Ok(out)
}

fn cmd_qda_train(s: &Settings) -> Result<Vec<u8>> {
    csv_only_json(s, "qda-train")?;
    let (x, labels) = load_labelled(s, true)?;
    let labels = labels.ok_or_else(|| HrError::Config("qda-train needs labels".into()))?;
    let (x1, x2) = split_by_label(&x, &labels)?;
    let screen: Option<f64> = s.get("screen")?;
    let columns = match screen {
        Some(t) => {
            let sc = screen_genes(&x1, &x2, t)?;
            if sc.kept.len() < 2 {
                return Err(HrError::Degenerate(format!("screening kept {} columns", sc.kept.len())));
            }
            Some(sc.kept)
        }
        None => None,
    };
    let select = |m: &DataMatrix| match &columns {
        Some(c) => m.select_columns(c.iter()),
        None => m.clone(),
    };
    let cfg = QdaConfig {
        hr: s.hr_config()?,
        fixed_c: s.get("fixed_c")?,
        ..QdaConfig::default()
    };
    let model = hrqda_train(&select(&x1), &select(&x2), &cfg)?;
    let pred = model.predict(&select(&x))?;
    let counts = ConfusionCounts::from_labels(&labels, &pred)?;
    json_bytes(&json!({
        "command": "qda-train",
        "config": s.echo(),
        "seed": s.seed()?,
        "qda": cfg,
        "columns": columns,
        "model": model.to_doc(),
        "training_counts": counts,
        "training_metrics": metrics(&counts)?,
    }))
}

fn cmd_qda_predict(s: &Settings) -> Result<Vec<u8>> {
    let format = s.format("json")?;
    let doc_text = std::fs::read_to_string(s.require("model")?)?;
    let doc: Value = serde_json::from_str(&doc_text)?;
    let model_doc: QdaModelDoc = serde_json::from_value(doc.get("model").cloned().unwrap_or(doc.clone()))?;
    let model = QdaModel::from_doc(&model_doc)?;
    let columns: Option<Vec<usize>> = match doc.get("columns") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v.clone())?),
    };
    let (x, labels) = load_labelled(s, false)?;
    let x = match &columns {
        Some(c) => {
            if c.iter().any(|&j| j >= x.ncols()) {
                return Err(HrError::Dimension("input has fewer columns than the trained rule selects".into()));
            }
            x.select_columns(c.iter())
        }
        None => x,
    };
    let disc: Vec<f64> = x.row_iter().map(|r| model.discriminant(&r.transpose())).collect::<Result<_>>()?;
    let pred: Vec<u8> = disc.iter().map(|&d| if d >= 0.0 { 1 } else { 2 }).collect();
    let scored = match &labels {
        Some(l) => {
            let c = ConfusionCounts::from_labels(l, &pred)?;
            Some((c, metrics(&c)?))
        }
        None => None,
    };
    if format == "csv" {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row", "label", "discriminant"])?;
        for (i, (p, d)) in pred.iter().zip(&disc).enumerate() {
            w.write_record([(i + 1).to_string(), p.to_string(), d.to_string()])?;
        }
        let mut out = config_comment(s)?;
        out.extend(w.into_inner().map_err(|e| HrError::Io(e.into_error()))?);
        return Ok(out);
    }
    json_bytes(&json!({
        "command": "qda-predict",
        "config": s.echo(),
        "seed": s.seed()?,
        "predictions": pred,
        "discriminants": disc,
        "counts": scored.as_ref().map(|x| x.0),
        "metrics": scored.as_ref().map(|x| x.1.clone()),
    }))
}

fn sim_spec(s: &Settings) -> Result<SimSpec> {
    let seed = s.seed()?;
    let mut spec = match s.str("preset") {
        Some(name) => SimSpec::preset(name, seed)?,
        None => {
            let experiment: Experiment = s.require("experiment")?.parse()?;
            let model = s.require("cov_model")?;
            let dist: Family = s.require("dist")?.parse()?;
            SimSpec::new(experiment, model, dist, s.get_or("p", 120)?, seed)?
        }
    };
    if let Some(d) = s.str("dist") {
        spec.dist = d.parse()?;
        spec.scale_norm = DistSpec::for_family(spec.dist).scale_norm;
        spec.kappa = crate::sim::experiments::default_kappa(spec.dist);
    }
    if let Some(m) = s.str("cov_model") {
        spec.model = m.to_string();
    }
    if let Some(p) = s.get::<usize>("p")? {
        if p != spec.p {
            spec.p = p;
            spec.s_grid.retain(|&v| v < p);
            spec.s_grid.push(p);
        }
    }
    spec.n = s.get_or("n", spec.n)?;
    spec.reps = s.get_or("reps", spec.reps)?;
    spec.kappa = s.get_or("kappa", spec.kappa)?;
    spec.n_null = s.get_or("n_null", spec.n_null)?;
    spec.scale_norm = s.get_or("scale_norm", spec.scale_norm)?;
    spec.mu2_shift = s.get_or("mu2_shift", spec.mu2_shift)?;
    spec.alpha = s.get_or("alpha", spec.alpha)?;
    if let Some(g) = s.str("s_grid") {
        spec.s_grid = g
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| HrError::Config(format!("invalid sparsity level '{v}'"))))
            .collect::<Result<_>>()?;
    }
    spec.methods = s.methods(&spec.methods)?;
    spec.test = s.test_config(spec.test.clone())?;
    spec.qda.hr = spec.test.hr.clone();
    spec.qda.fixed_c = s.get("fixed_c")?;
    spec.validate()?;
    Ok(spec)
}

fn cmd_simulate(s: &Settings) -> Result<Vec<u8>> {
    let format = s.format("csv")?;
    let spec = sim_spec(s)?;
    let report = run_experiment(&spec)?;
    if format == "csv" {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        Ok(buf)
    } else {
        json_bytes(&report)
    }
}

fn dispatch(cmd: &Command, s: &Settings) -> Result<Vec<u8>> {
    match cmd {
        Command::Estimate(_) => cmd_estimate(s),
        Command::Test(_) => cmd_test(s),
        Command::QdaTrain(_) => cmd_qda_train(s),
        Command::QdaPredict(_) => cmd_qda_predict(s),
        Command::Simulate(_) => cmd_simulate(s),
    }
}

/// Runs a parsed command and writes its report.
pub fn execute(cli: &Cli) -> Result<()> {
    let settings = Settings::resolve(&cli.command)?;
    let threads = settings.threads()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| HrError::Config(format!("cannot start worker threads: {e}")))?;
    let body = pool.install(|| dispatch(&cli.command, &settings))?;
    emit(&settings, &body)
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hrstat: {} error: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
