//! Monte-Carlo drivers for size, size-corrected power and classification.
//!
//! Replication `r` of block `b` draws from stream `(b << 32) | 2r` of the run
//! seed; a failed replication is redrawn once from stream `(b << 32) | 2r+1`
//! and then dropped. Block 0 holds null or training replications, block
//! `k + 1` the alternatives for the `k`-th sparsity level. Replications run
//! in parallel and are reduced in index order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HrError, Result};
use crate::linalg::SpdMatrix;
use crate::location::{rejects, run_tests, Calibration, Method, TestConfig, TestSuite};
use crate::qda::{hrqda_train, ConfusionCounts, QdaConfig};
use crate::rng::{child_seed, substream};
use crate::sim::generate::{alt_mean, gen_elliptical_with, DistSpec, Family};
use crate::sim::models::{make_cov, make_qda_cov, CovModel, QdaCovModel};

/// Largest tolerated share of dropped replications in a valid cell.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Size,
    Power,
    Qda,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Size => "size",
            Experiment::Power => "power",
            Experiment::Qda => "qda",
        })
    }
}

impl FromStr for Experiment {
    type Err = HrError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "size" => Ok(Experiment::Size),
            "power" => Ok(Experiment::Power),
            "qda" => Ok(Experiment::Qda),
            _ => Err(HrError::Config(format!("unknown experiment '{s}'"))),
        }
    }
}

/// Complete description of a simulation run; echoed into every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec {
    pub experiment: Experiment,
    /// `I`–`IV` for the tests, `QI`–`QIII` for discriminant analysis.
    pub model: String,
    pub dist: Family,
    pub scale_norm: f64,
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub kappa: f64,
    pub s_grid: Vec<usize>,
    pub n_null: usize,
    /// Class 2 mean is this value times the all-ones vector.
    pub mu2_shift: f64,
    pub seed: u64,
    pub test: TestConfig,
    pub qda: QdaConfig,
}

/// Signal strength used for the power curves of each family.
pub fn default_kappa(family: Family) -> f64 {
    match family {
        Family::Normal => 2.0,
        Family::StudentT3 => 1.5,
        Family::MixtureNormal => 0.6,
    }
}

fn default_s_grid(p: usize) -> Vec<usize> {
    let mut g: Vec<usize> = [1, 2, 5, 10, 20, 40, 60, 80, 100].into_iter().filter(|&s| s < p).collect();
    g.push(p);
    g
}

impl SimSpec {
    pub fn new(experiment: Experiment, model: &str, dist: Family, p: usize, seed: u64) -> Result<Self> {
        let spec = DistSpec::for_family(dist);
        let (reps, methods) = match experiment {
            Experiment::Size => (1000, vec![Method::Max, Method::Sum, Method::Cc1, Method::Cc3]),
            Experiment::Power => (300, Method::ALL.to_vec()),
            Experiment::Qda => (50, Vec::new()),
        };
        let mut test = TestConfig::default();
        if experiment == Experiment::Power {
            test.calibration = Calibration::Asymptotic;
        }
        let s = SimSpec {
            experiment,
            model: model.to_string(),
            dist,
            scale_norm: spec.scale_norm,
            n: 100,
            p,
            alpha: 0.05,
            reps,
            methods,
            kappa: default_kappa(dist),
            s_grid: default_s_grid(p),
            n_null: 2000,
            mu2_shift: 0.1,
            seed,
            test,
            qda: QdaConfig::default(),
        };
        s.check_model()?;
        Ok(s)
    }

    /// Presets named `table1-model<M>-<dist>-p<P>` (size),
    /// `fig1-model<M>-<dist>-p<P>` (power) and `table2-qda<M>-<dist>-p<P>`
    /// (classification), e.g. `table1-modelI-normal-p120`.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let bad = || HrError::Config(format!("unknown preset '{name}'"));
        let parts: Vec<&str> = name.split('-').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let p: usize = parts[3].strip_prefix('p').and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let dist: Family = parts[2].parse().map_err(|_| bad())?;
        let (experiment, model) = match (parts[0], parts[1]) {
            ("table1", m) => (Experiment::Size, m.strip_prefix("model").ok_or_else(bad)?.to_string()),
            ("fig1", m) => (Experiment::Power, m.strip_prefix("model").ok_or_else(bad)?.to_string()),
            ("table2", m) => (Experiment::Qda, format!("Q{}", m.strip_prefix("qda").ok_or_else(bad)?)),
            _ => return Err(bad()),
        };
        SimSpec::new(experiment, &model, dist, p, seed)
    }

    fn dist_spec(&self) -> DistSpec {
        DistSpec {
            family: self.dist,
            scale_norm: self.scale_norm,
        }
    }

    fn check_model(&self) -> Result<()> {
        match self.experiment {
            Experiment::Qda => self.model.parse::<QdaCovModel>().map(|_| ()),
            _ => self.model.parse::<CovModel>().map(|_| ()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.check_model()?;
        let cfg = |m: String| Err(HrError::Config(m));
        if !(self.scale_norm > 0.0) {
            return cfg(format!("scale_norm must be positive, got {}", self.scale_norm));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return cfg(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.n < 4 || self.p < 2 {
            return cfg(format!("need n >= 4 and p >= 2, got n = {}, p = {}", self.n, self.p));
        }
        match self.experiment {
            Experiment::Size if self.reps < 100 => cfg(format!("size runs need reps >= 100, got {}", self.reps)),
            Experiment::Power if self.n_null < 500 => cfg(format!("power runs need n_null >= 500, got {}", self.n_null)),
            Experiment::Power if self.reps == 0 || self.s_grid.is_empty() => cfg("power runs need reps and a sparsity grid".into()),
            Experiment::Power if self.s_grid.iter().any(|&s| s == 0 || s > self.p) => {
                cfg(format!("sparsity levels must lie in 1..={}", self.p))
            }
            Experiment::Qda if self.reps == 0 => cfg("qda runs need reps >= 1".into()),
            Experiment::Size | Experiment::Power if self.methods.is_empty() => cfg("no methods selected".into()),
            _ => Ok(()),
        }
    }
}

/// One CSV row: a method in a cell, or one sparsity level of a power curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimRow {
    pub model: String,
    pub dist: String,
    pub n: usize,
    pub p: usize,
    pub method: String,
    /// Rejection rate, power or mean accuracy.
    pub rate: f64,
    pub mc_se: f64,
    pub n_reps: usize,
    pub n_failed: usize,
    pub s: Option<usize>,
    pub kappa: Option<f64>,
    pub critical_value: Option<f64>,
    pub sd: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub spec: SimSpec,
    pub rows: Vec<SimRow>,
    pub valid: bool,
    pub n_failed: usize,
    pub n_retried: usize,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "model",
    "dist",
    "n",
    "p",
    "method",
    "rate",
    "mc_se",
    "n_reps",
    "n_failed",
    "s",
    "kappa",
    "critical_value",
    "sd",
    "valid",
];

impl SimReport {
    /// Writes `# key = value` lines for the resolved spec, then the table.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let echo = serde_json::to_value(&self.spec)?;
        if let serde_json::Value::Object(map) = echo {
            for (k, v) in map {
                writeln!(out, "# {k} = {v}")?;
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.dist.clone(),
                r.n.to_string(),
                r.p.to_string(),
                r.method.clone(),
                r.rate.to_string(),
                r.mc_se.to_string(),
                r.n_reps.to_string(),
                r.n_failed.to_string(),
                r.s.map(|s| s.to_string()).unwrap_or_default(),
                opt(r.kappa),
                opt(r.critical_value),
                opt(r.sd),
                r.valid.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn row(&self, method: &str, s: Option<usize>) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.method == method && r.s == s)
    }
}

pub fn binomial_se(rate: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (rate * (1.0 - rate) / n as f64).sqrt()
}

fn rep_stream(seed: u64, block: u64, rep: usize, retry: bool) -> ChaCha8Rng {
    substream(seed, (block << 32) | (2 * rep as u64 + retry as u64))
}

/// Runs `f` on the first draw of each replication and once more on a fresh
/// stream after a failure. Returns outcomes in replication order with a
/// retry flag.
fn replicate<T: Send>(
    seed: u64,
    block: u64,
    reps: usize,
    f: impl Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
) -> Vec<(Option<T>, bool)> {
    (0..reps)
        .into_par_iter()
        .map(|r| match f(&mut rep_stream(seed, block, r, false)) {
            Ok(v) => (Some(v), false),
            Err(_) => (f(&mut rep_stream(seed, block, r, true)).ok(), true),
        })
        .collect()
}

fn failure_counts<T>(out: &[(Option<T>, bool)]) -> (usize, usize) {
    (out.iter().filter(|o| o.0.is_none()).count(), out.iter().filter(|o| o.1).count())
}

fn cell_valid(failed: usize, reps: usize) -> bool {
    reps > 0 && (failed as f64) <= MAX_FAILURE_SHARE * reps as f64
}

struct Setting {
    root: DMatrix<f64>,
    root_spd: SpdMatrix,
    dist: DistSpec,
}

fn test_setting(spec: &SimSpec) -> Result<Setting> {
    let model: CovModel = spec.model.parse()?;
    let pair = make_cov(model, spec.p)?;
    let root_spd = pair.sigma.sqrt();
    Ok(Setting {
        root: root_spd.as_matrix().clone(),
        root_spd,
        dist: spec.dist_spec(),
    })
}

fn one_test(spec: &SimSpec, setting: &Setting, mu: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<TestSuite> {
    let x = gen_elliptical_with(&setting.dist, mu, &setting.root, spec.n, rng);
    let boot_seed = child_seed(rng);
    run_tests(&x, &spec.test, boot_seed)
}

/// Per-replication output of a null run, methods in [`Method::ALL`] order.
#[derive(Debug, Clone)]
pub struct NullReplicate {
    pub statistics: [f64; 7],
    pub p_values: [f64; 7],
}

impl NullReplicate {
    fn from_suite(suite: &TestSuite) -> Self {
        let mut statistics = [0.0; 7];
        let mut p_values = [0.0; 7];
        for (k, m) in Method::ALL.into_iter().enumerate() {
            let r = suite.report(m);
            statistics[k] = r.statistic;
            p_values[k] = r.p_value;
        }
        NullReplicate { statistics, p_values }
    }

    pub fn statistic(&self, m: Method) -> f64 {
        self.statistics[method_index(m)]
    }

    pub fn p_value(&self, m: Method) -> f64 {
        self.p_values[method_index(m)]
    }
}

fn method_index(m: Method) -> usize {
    Method::ALL.iter().position(|&x| x == m).expect("method is listed")
}

/// A size run together with the raw per-replication results.
#[derive(Debug, Clone)]
pub struct SizeRun {
    pub report: SimReport,
    /// `None` for replications dropped after the retry.
    pub replicates: Vec<Option<NullReplicate>>,
}

/// Empirical size under `H₀: μ = 0` for every selected method.
pub fn size_experiment(spec: &SimSpec) -> Result<SizeRun> {
    if spec.experiment != Experiment::Size {
        return Err(HrError::Config("size_experiment needs a size spec".into()));
    }
    spec.validate()?;
    let setting = test_setting(spec)?;
    let zero = DVector::zeros(spec.p);
    let out = replicate(spec.seed, 0, spec.reps, |rng| {
        one_test(spec, &setting, &zero, rng).map(|s| NullReplicate::from_suite(&s))
    });
    let (failed, retried) = failure_counts(&out);
    let valid = cell_valid(failed, spec.reps);
    let replicates: Vec<Option<NullReplicate>> = out.into_iter().map(|o| o.0).collect();
    let ok: Vec<&NullReplicate> = replicates.iter().flatten().collect();
    let rows = spec
        .methods
        .iter()
        .map(|&m| {
            let hits = ok.iter().filter(|r| rejects(r.p_value(m), spec.alpha)).count();
            let rate = if ok.is_empty() { f64::NAN } else { hits as f64 / ok.len() as f64 };
            SimRow {
                model: spec.model.clone(),
                dist: spec.dist.to_string(),
                n: spec.n,
                p: spec.p,
                method: m.name().into(),
                rate,
                mc_se: binomial_se(rate, ok.len()),
                n_reps: spec.reps,
                n_failed: failed,
                s: None,
                kappa: None,
                critical_value: None,
                sd: None,
                valid,
            }
        })
        .collect();
    Ok(SizeRun {
        report: SimReport {
            spec: spec.clone(),
            rows,
            valid,
            n_failed: failed,
            n_retried: retried,
        },
        replicates,
    })
}

/// Upper empirical `(1 − α)` quantile: the `⌈(1 − α) N⌉`-th order statistic.
pub fn empirical_critical_value(null: &[f64], alpha: f64) -> Result<f64> {
    if null.is_empty() {
        return Err(HrError::Calibration("no null statistics".into()));
    }
    let mut v = null.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((1.0 - alpha) * v.len() as f64).ceil() as usize;
    Ok(v[k.clamp(1, v.len()) - 1])
}

/// Size-corrected power: critical values come from `n_null` null
/// replications of the same model, and power is the share of alternative
/// replications whose statistic exceeds them.
pub fn power_experiment(spec: &SimSpec) -> Result<SimReport> {
    if spec.experiment != Experiment::Power {
        return Err(HrError::Config("power_experiment needs a power spec".into()));
    }
    spec.validate()?;
    let setting = test_setting(spec)?;
    let zero = DVector::zeros(spec.p);
    let stats = |suite: TestSuite| -> Vec<f64> { spec.methods.iter().map(|&m| suite.report(m).statistic).collect() };

    let null = replicate(spec.seed, 0, spec.n_null, |rng| one_test(spec, &setting, &zero, rng).map(stats));
    let (null_failed, mut retried) = failure_counts(&null);
    let null_ok: Vec<&Vec<f64>> = null.iter().filter_map(|o| o.0.as_ref()).collect();
    let null_valid = cell_valid(null_failed, spec.n_null);
    let critical: Vec<f64> = (0..spec.methods.len())
        .map(|k| empirical_critical_value(&null_ok.iter().map(|v| v[k]).collect::<Vec<_>>(), spec.alpha))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut failed_total = null_failed;
    let mut valid_all = null_valid;
    for (b, &s) in spec.s_grid.iter().enumerate() {
        let mu = alt_mean(spec.kappa, s, spec.n, spec.p, &setting.root_spd)?;
        let alt = replicate(spec.seed, b as u64 + 1, spec.reps, |rng| one_test(spec, &setting, &mu, rng).map(stats));
        let (failed, r) = failure_counts(&alt);
        retried += r;
        failed_total += failed;
        let valid = null_valid && cell_valid(failed, spec.reps);
        valid_all &= valid;
        let ok: Vec<&Vec<f64>> = alt.iter().filter_map(|o| o.0.as_ref()).collect();
        for (k, &m) in spec.methods.iter().enumerate() {
            let hits = ok.iter().filter(|v| v[k] > critical[k]).count();
            let rate = if ok.is_empty() { f64::NAN } else { hits as f64 / ok.len() as f64 };
            rows.push(SimRow {
                model: spec.model.clone(),
                dist: spec.dist.to_string(),
                n: spec.n,
                p: spec.p,
                method: m.name().into(),
                rate,
                mc_se: binomial_se(rate, ok.len()),
                n_reps: spec.reps,
                n_failed: failed,
                s: Some(s),
                kappa: Some(spec.kappa),
                critical_value: Some(critical[k]),
                sd: None,
                valid,
            });
        }
    }
    Ok(SimReport {
        spec: spec.clone(),
        rows,
        valid: valid_all,
        n_failed: failed_total,
        n_retried: retried,
    })
}

/// Outcome of one train/test split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QdaReplicate {
    pub accuracy: f64,
    pub counts: ConfusionCounts,
    pub c_hat: f64,
}

/// A classification run with per-replication outcomes.
#[derive(Debug, Clone)]
pub struct QdaRun {
    pub report: SimReport,
    pub replicates: Vec<Option<QdaReplicate>>,
}

/// Test accuracy of HRQDA with `n` training and `n` test points per class.
pub fn qda_experiment(spec: &SimSpec) -> Result<QdaRun> {
    if spec.experiment != Experiment::Qda {
        return Err(HrError::Config("qda_experiment needs a qda spec".into()));
    }
    spec.validate()?;
    let model: QdaCovModel = spec.model.parse()?;
    let (c1, c2) = make_qda_cov(model, spec.p)?;
    let r1 = c1.sigma.sqrt().into_inner();
    let r2 = c2.sigma.sqrt().into_inner();
    let mu1 = DVector::zeros(spec.p);
    let mu2 = DVector::from_element(spec.p, spec.mu2_shift);
    let dist = spec.dist_spec();
    let n = spec.n;
    let out = replicate(spec.seed, 0, spec.reps, |rng| {
        let train1 = gen_elliptical_with(&dist, &mu1, &r1, n, rng);
        let train2 = gen_elliptical_with(&dist, &mu2, &r2, n, rng);
        let test1 = gen_elliptical_with(&dist, &mu1, &r1, n, rng);
        let test2 = gen_elliptical_with(&dist, &mu2, &r2, n, rng);
        let rule = hrqda_train(&train1, &train2, &spec.qda)?;
        let mut truth = vec![1u8; n];
        truth.extend(std::iter::repeat_n(2u8, n));
        let mut pred = rule.predict(&test1)?;
        pred.extend(rule.predict(&test2)?);
        let counts = ConfusionCounts::from_labels(&truth, &pred)?;
        Ok(QdaReplicate {
            accuracy: (counts.tp + counts.tn) as f64 / counts.total() as f64,
            counts,
            c_hat: rule.c_hat,
        })
    });
    let (failed, retried) = failure_counts(&out);
    let valid = cell_valid(failed, spec.reps);
    let replicates: Vec<Option<QdaReplicate>> = out.into_iter().map(|o| o.0).collect();
    let acc: Vec<f64> = replicates.iter().flatten().map(|r| r.accuracy).collect();
    let k = acc.len() as f64;
    let mean = acc.iter().sum::<f64>() / k;
    let sd = if acc.len() > 1 {
        (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let row = SimRow {
        model: spec.model.clone(),
        dist: spec.dist.to_string(),
        n,
        p: spec.p,
        method: "hrqda".into(),
        rate: mean,
        mc_se: sd / k.sqrt(),
        n_reps: spec.reps,
        n_failed: failed,
        s: None,
        kappa: None,
        critical_value: None,
        sd: Some(sd),
        valid,
    };
    Ok(QdaRun {
        report: SimReport {
            spec: spec.clone(),
            rows: vec![row],
            valid,
            n_failed: failed,
            n_retried: retried,
        },
        replicates,
    })
}

pub fn run_experiment(spec: &SimSpec) -> Result<SimReport> {
    match spec.experiment {
        Experiment::Size => size_experiment(spec).map(|r| r.report),
        Experiment::Power => power_experiment(spec),
        Experiment::Qda => qda_experiment(spec).map(|r| r.report),
    }
}
