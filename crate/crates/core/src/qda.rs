//! Robust quadratic discriminant analysis on HR estimates.
//!
//! Each class is fitted with [`hr_estimate`]. Its scatter precision is turned
//! into a covariance precision with `Ω̃_k = p / t̂r(Ξ_k) · Ω̂_k`, and a point is
//! assigned to class 1 when
//!
//! `Δ̂(x) = (x−μ̂₂)ᵀΩ̃₂(x−μ̂₂) − (x−μ̂₁)ᵀΩ̃₁(x−μ̂₁) ≥ ĉ · (log|Ω̃₂| − log|Ω̃₁|)`.
//!
//! `c = 0` is the Mahalanobis-distance rule and `c = 1` plain QDA.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HrError, Result};
use crate::hr::{hr_estimate, row_major, HrConfig};
use crate::linalg::{SpdMatrix, SymMatrix};
use crate::DataMatrix;

pub const TRACE_FLOOR: f64 = 1e-12;
pub const MODEL_FORMAT: &str = "hrstat-qda";
pub const MODEL_VERSION: u32 = 1;

/// `{0, 0.05, …, 2}`.
pub fn default_c_grid() -> Vec<f64> {
    (0..=40).map(|k| k as f64 / 20.0).collect()
}

/// Trace of the unbiased sample covariance,
/// `(n−1)⁻¹ Σ X_lᵀX_l − n(n−1)⁻¹ X̄ᵀX̄`, floored at [`TRACE_FLOOR`].
pub fn trace_hat(x: &DataMatrix) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(HrError::Domain(format!("trace_hat needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let sum_sq: f64 = x.iter().map(|v| v * v).sum();
    let mean = x.row_mean();
    let t = sum_sq / (nf - 1.0) - nf / (nf - 1.0) * mean.norm_squared();
    Ok(t.max(TRACE_FLOOR))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QdaConfig {
    pub hr: HrConfig,
    pub c_grid: Vec<f64>,
    /// Skips the grid search and uses this cutoff.
    pub fixed_c: Option<f64>,
}

impl Default for QdaConfig {
    fn default() -> Self {
        QdaConfig {
            hr: HrConfig::default(),
            c_grid: default_c_grid(),
            fixed_c: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassFit {
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    pub psd_projections: usize,
    pub trace_hat: f64,
}

#[derive(Debug, Clone)]
pub struct QdaModel {
    pub mu1: DVector<f64>,
    pub mu2: DVector<f64>,
    pub omega_tilde1: SpdMatrix,
    pub omega_tilde2: SpdMatrix,
    /// `log|Ω̃₂| − log|Ω̃₁|`.
    pub logdet_ratio: f64,
    pub c_hat: f64,
    /// `"grid"` or `"fixed"`.
    pub c_method: String,
    pub train_diag: Vec<ClassFit>,
}

impl QdaModel {
    /// Builds a rule from known parameters.
    pub fn from_parameters(
        mu1: DVector<f64>,
        mu2: DVector<f64>,
        omega1: SpdMatrix,
        omega2: SpdMatrix,
        c: f64,
    ) -> Result<Self> {
        let p = mu1.len();
        if mu2.len() != p || omega1.dim() != p || omega2.dim() != p {
            return Err(HrError::Dimension("class parameters disagree in dimension".into()));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(HrError::Domain(format!("cutoff must be a finite nonnegative number, got {c}")));
        }
        let logdet_ratio = omega2.log_det() - omega1.log_det();
        Ok(QdaModel {
            mu1,
            mu2,
            omega_tilde1: omega1,
            omega_tilde2: omega2,
            logdet_ratio,
            c_hat: c,
            c_method: "fixed".into(),
            train_diag: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu1.len()
    }

    /// `Δ̂(x)` without the cutoff.
    pub fn quadratic_gap(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(HrError::Domain(format!(
                "query has length {}, model dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        let d2 = x - &self.mu2;
        let d1 = x - &self.mu1;
        Ok(self.omega_tilde2.quad_form(&d2) - self.omega_tilde1.quad_form(&d1))
    }

    /// `Δ̂(x) − ĉ ς̂`; nonnegative means class 1.
    pub fn discriminant(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.quadratic_gap(x)? - self.c_hat * self.logdet_ratio)
    }

    pub fn classify(&self, x: &DVector<f64>) -> Result<u8> {
        Ok(if self.discriminant(x)? >= 0.0 { 1 } else { 2 })
    }

    pub fn predict(&self, x: &DataMatrix) -> Result<Vec<u8>> {
        x.row_iter().map(|r| self.classify(&r.transpose())).collect()
    }

    fn gaps(&self, x: &DataMatrix) -> Result<Vec<f64>> {
        x.row_iter().map(|r| self.quadratic_gap(&r.transpose())).collect()
    }

    pub fn to_doc(&self) -> QdaModelDoc {
        QdaModelDoc {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            p: self.dim(),
            mu1: self.mu1.as_slice().to_vec(),
            mu2: self.mu2.as_slice().to_vec(),
            omega_tilde1: row_major(self.omega_tilde1.as_matrix()),
            omega_tilde2: row_major(self.omega_tilde2.as_matrix()),
            logdet_ratio: self.logdet_ratio,
            c_hat: self.c_hat,
            c_method: self.c_method.clone(),
            train_diag: self.train_diag.clone(),
        }
    }

    pub fn from_doc(doc: &QdaModelDoc) -> Result<Self> {
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(HrError::Contract(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        let p = doc.p;
        let matrix = |v: &[f64]| -> Result<SpdMatrix> {
            if v.len() != p * p {
                return Err(HrError::Dimension("precision matrix has the wrong size".into()));
            }
            SpdMatrix::new(SymMatrix::new(DMatrix::from_row_slice(p, p, v))?)
        };
        if doc.mu1.len() != p || doc.mu2.len() != p {
            return Err(HrError::Dimension("mean vector has the wrong length".into()));
        }
        if !(doc.c_hat >= 0.0) || !doc.logdet_ratio.is_finite() {
            return Err(HrError::Contract("model cutoff or log-determinant ratio is invalid".into()));
        }
        Ok(QdaModel {
            mu1: DVector::from_vec(doc.mu1.clone()),
            mu2: DVector::from_vec(doc.mu2.clone()),
            omega_tilde1: matrix(&doc.omega_tilde1)?,
            omega_tilde2: matrix(&doc.omega_tilde2)?,
            logdet_ratio: doc.logdet_ratio,
            c_hat: doc.c_hat,
            c_method: doc.c_method.clone(),
            train_diag: doc.train_diag.clone(),
        })
    }
}

/// Versioned JSON form of a [`QdaModel`], matrices row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QdaModelDoc {
    pub format: String,
    pub version: u32,
    pub p: usize,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub omega_tilde1: Vec<f64>,
    pub omega_tilde2: Vec<f64>,
    pub logdet_ratio: f64,
    pub c_hat: f64,
    pub c_method: String,
    pub train_diag: Vec<ClassFit>,
}

/// Grid value minimizing the balanced training error of
/// `Δ̂ ≥ c ς̂`; ties go to the smallest `c`.
pub fn estimate_c(gaps1: &[f64], gaps2: &[f64], logdet_ratio: f64, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() || grid.iter().any(|c| !(*c >= 0.0)) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(HrError::Contract("cutoff grid must be nonempty, nonnegative and sorted".into()));
    }
    if gaps1.is_empty() || gaps2.is_empty() {
        return Err(HrError::Contract("both classes need training points".into()));
    }
    let error = |c: f64| {
        let t = c * logdet_ratio;
        let miss1 = gaps1.iter().filter(|&&d| d < t).count() as f64 / gaps1.len() as f64;
        let miss2 = gaps2.iter().filter(|&&d| d >= t).count() as f64 / gaps2.len() as f64;
        (miss1 + miss2) / 2.0
    };
    let mut best = (grid[0], error(grid[0]));
    for &c in &grid[1..] {
        let e = error(c);
        if e < best.1 {
            best = (c, e);
        }
    }
    Ok(best.0)
}

fn fit_class(x: &DataMatrix, cfg: &HrConfig, class: u8) -> Result<(DVector<f64>, SpdMatrix, ClassFit)> {
    let tag = |e: HrError| e.context(&format!("class {class}"));
    if x.nrows() < 3 {
        return Err(HrError::Dimension(format!("class {class} needs at least 3 observations")));
    }
    let est = hr_estimate(x, cfg).map_err(tag)?;
    let tr = trace_hat(x).map_err(tag)?;
    let omega = est.omega.scaled(x.ncols() as f64 / tr);
    let fit = ClassFit {
        n: x.nrows(),
        iterations: est.iterations,
        converged: est.converged,
        psd_projections: est.psd_projections,
        trace_hat: tr,
    };
    Ok((est.mu, omega, fit))
}

pub fn hrqda_train(x1: &DataMatrix, x2: &DataMatrix, config: &QdaConfig) -> Result<QdaModel> {
    if x1.ncols() != x2.ncols() {
        return Err(HrError::Dimension(format!(
            "classes have {} and {} columns",
            x1.ncols(),
            x2.ncols()
        )));
    }
    let (first, second) = rayon::join(|| fit_class(x1, &config.hr, 1), || fit_class(x2, &config.hr, 2));
    let (mu1, omega1, fit1) = first?;
    let (mu2, omega2, fit2) = second?;
    let mut model = QdaModel::from_parameters(mu1, mu2, omega1, omega2, 0.0)?;
    model.train_diag = vec![fit1, fit2];
    match config.fixed_c {
        Some(c) => {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(HrError::Config(format!("fixed cutoff must be nonnegative, got {c}")));
            }
            model.c_hat = c;
        }
        None => {
            model.c_hat = estimate_c(&model.gaps(x1)?, &model.gaps(x2)?, model.logdet_ratio, &config.c_grid)?;
            model.c_method = "grid".into();
        }
    }
    Ok(model)
}

/// Confusion table with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_labels(truth: &[u8], predicted: &[u8]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(HrError::Dimension("label vectors differ in length".into()));
        }
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (1, 1) => c.tp += 1,
                (2, 2) => c.tn += 1,
                (2, 1) => c.fp += 1,
                (1, 2) => c.fn_ += 1,
                _ => return Err(HrError::Domain(format!("labels must be 1 or 2, got ({t}, {p})"))),
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub spec: f64,
    pub sens: f64,
    pub mcc: f64,
    /// Metrics whose denominator was zero and were set to 0.
    pub zero_denominator: Vec<String>,
}

pub fn metrics(c: &ConfusionCounts) -> Result<Metrics> {
    if c.total() == 0 {
        return Err(HrError::Domain("confusion table is empty".into()));
    }
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let mut flags = Vec::new();
    let mut ratio = |num: f64, den: f64, name: &str| {
        if den > 0.0 {
            num / den
        } else {
            flags.push(name.to_string());
            0.0
        }
    };
    let acc = ratio(tp + tn, tp + tn + fp + fn_, "acc");
    let spec = ratio(tn, tn + fp, "spec");
    let sens = ratio(tp, tp + fn_, "sens");
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio(tp * tn - fp * fn_, den, "mcc").clamp(-1.0, 1.0);
    Ok(Metrics {
        acc,
        spec,
        sens,
        mcc,
        zero_denominator: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::generate::{gen_elliptical, DistSpec};
    use crate::sim::models::{make_qda_cov, QdaCovModel};
    use proptest::prelude::*;

    #[test]
    fn trace_hat_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        assert_eq!(trace_hat(&x).unwrap(), 2.0);
        let same = DMatrix::from_element(5, 3, 1.7);
        assert_eq!(trace_hat(&same).unwrap(), TRACE_FLOOR);
        assert!(trace_hat(&DMatrix::zeros(1, 3)).is_err());
        let g = gen_elliptical(&DistSpec::normal(), &DVector::zeros(50), &SpdMatrix::identity(50), 10_000, 1).unwrap();
        assert!((trace_hat(&g).unwrap() - 50.0).abs() < 1.5);
    }

    proptest! {
        #[test]
        fn trace_hat_matches_explicit_covariance(
            vals in proptest::collection::vec(-5.0f64..5.0, 24),
            shift in -10.0f64..10.0,
        ) {
            let x = DMatrix::from_row_slice(6, 4, &vals).add_scalar(shift);
            let mean = x.row_mean();
            let mut c = x.clone();
            for mut row in c.row_iter_mut() {
                row -= &mean;
            }
            let cov = c.transpose() * &c / 5.0;
            let t = trace_hat(&x).unwrap();
            prop_assert!((t - cov.trace().max(TRACE_FLOOR)).abs() < 1e-10 * (1.0 + cov.trace()));
        }

        #[test]
        fn mcc_is_bounded(tp in 0u64..50, tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let c = ConfusionCounts { tp, tn, fp, fn_ };
            prop_assume!(c.total() > 0);
            let m = metrics(&c).unwrap();
            prop_assert!((-1.0..=1.0).contains(&m.mcc));
            prop_assert!((0.0..=1.0).contains(&m.acc));
            if m.mcc == 1.0 {
                prop_assert!(fp == 0 && fn_ == 0);
            }
        }
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionCounts { tp: 50, tn: 50, fp: 0, fn_: 0 }).unwrap();
        assert_eq!((m.acc, m.spec, m.sens, m.mcc), (1.0, 1.0, 1.0, 1.0));
        let m = metrics(&ConfusionCounts { tp: 7, tn: 7, fp: 7, fn_: 7 }).unwrap();
        assert_eq!(m.mcc, 0.0);
        assert!(m.zero_denominator.is_empty());
        let m = metrics(&ConfusionCounts { tp: 3, tn: 0, fp: 0, fn_: 1 }).unwrap();
        assert_eq!(m.spec, 0.0);
        assert_eq!(m.mcc, 0.0);
        assert_eq!(m.zero_denominator, vec!["spec".to_string(), "mcc".to_string()]);
        assert!(metrics(&ConfusionCounts::default()).is_err());
        let c = ConfusionCounts::from_labels(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, tn: 1, fp: 1, fn_: 1 });
        assert!(ConfusionCounts::from_labels(&[3], &[1]).is_err());
    }

    #[test]
    fn hand_discriminant() {
        let m = QdaModel::from_parameters(
            DVector::zeros(2),
            DVector::from_vec(vec![2.0, 0.0]),
            SpdMatrix::identity(2),
            SpdMatrix::identity(2),
            1.0,
        )
        .unwrap();
        assert_eq!(m.logdet_ratio, 0.0);
        assert_eq!(m.discriminant(&DVector::zeros(2)).unwrap(), 4.0);
        assert_eq!(m.classify(&DVector::zeros(2)).unwrap(), 1);
        assert_eq!(m.classify(&DVector::from_vec(vec![2.0, 0.0])).unwrap(), 2);
        assert_eq!(m.classify(&DVector::from_vec(vec![1.0, 5.0])).unwrap(), 1);
        assert!(matches!(m.discriminant(&DVector::zeros(3)), Err(HrError::Domain(_))));
    }

    #[test]
    fn cutoff_search() {
        let grid = default_c_grid();
        assert_eq!(grid.len(), 41);
        assert_eq!(grid[40], 2.0);
        assert_eq!(estimate_c(&[1.0, -1.0], &[0.5], 0.0, &grid).unwrap(), 0.0);
        // with ς = 1 the threshold equals c; class 1 gaps sit at 1.0 and
        // class 2 gaps sit just below it, so only c in (0.96, 1.0] separates
        let c = estimate_c(&[1.0, 1.2, 3.0], &[0.96, 0.5, -2.0], 1.0, &grid).unwrap();
        assert_eq!(c, 1.0);
        assert!(estimate_c(&[1.0], &[0.0], 1.0, &[]).is_err());
        assert!(estimate_c(&[1.0], &[0.0], 1.0, &[1.0, 0.5]).is_err());
    }

    fn sample(model: QdaCovModel, spec: DistSpec, p: usize, n: usize, seed: u64) -> (DataMatrix, DataMatrix) {
        let (a, b) = make_qda_cov(model, p).unwrap();
        let x1 = gen_elliptical(&spec, &DVector::zeros(p), &a.sigma, n, seed).unwrap();
        let x2 = gen_elliptical(&spec, &DVector::from_element(p, 0.1), &b.sigma, n, seed + 1000).unwrap();
        (x1, x2)
    }

    #[test]
    fn identical_classes() {
        let (x1, _) = sample(QdaCovModel::QI, DistSpec::normal(), 20, 40, 3);
        let m = hrqda_train(&x1, &x1, &QdaConfig::default()).unwrap();
        assert_eq!(m.logdet_ratio, 0.0);
        assert_eq!(m.c_hat, 0.0);
        for r in x1.row_iter() {
            let x = r.transpose();
            assert_eq!(m.quadratic_gap(&x).unwrap(), 0.0);
            assert_eq!(m.classify(&x).unwrap(), 1);
        }
    }

    #[test]
    fn label_swap_flips_decisions() {
        let (x1, x2) = sample(QdaCovModel::QII, DistSpec::normal(), 15, 40, 4);
        let cfg = QdaConfig {
            fixed_c: Some(1.0),
            ..QdaConfig::default()
        };
        let a = hrqda_train(&x1, &x2, &cfg).unwrap();
        let b = hrqda_train(&x2, &x1, &cfg).unwrap();
        let (q, _) = sample(QdaCovModel::QII, DistSpec::normal(), 15, 100, 5);
        for r in q.row_iter() {
            let x = r.transpose();
            let da = a.discriminant(&x).unwrap();
            let db = b.discriminant(&x).unwrap();
            assert!((da + db).abs() < 1e-8 * (1.0 + da.abs()));
            if da.abs() > 1e-6 {
                assert_ne!(a.classify(&x).unwrap(), b.classify(&x).unwrap());
            }
        }
    }

    #[test]
    fn common_scaling_keeps_labels() {
        let (x1, x2) = sample(QdaCovModel::QI, DistSpec::student_t3(), 12, 40, 6);
        let a = hrqda_train(&x1, &x2, &QdaConfig::default()).unwrap();
        let b = hrqda_train(&(&x1 * 2.0), &(&x2 * 2.0), &QdaConfig::default()).unwrap();
        assert_eq!(a.c_hat, b.c_hat);
        let (q, _) = sample(QdaCovModel::QI, DistSpec::student_t3(), 12, 100, 7);
        assert_eq!(a.predict(&q).unwrap(), b.predict(&(&q * 2.0)).unwrap());
    }

    fn gaussian_log_density(x: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
        let chol = sigma.clone().cholesky().unwrap();
        let d = x - mu;
        let z = chol.l().solve_lower_triangular(&d).unwrap();
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        -0.5 * (z.norm_squared() + log_det)
    }

    #[test]
    fn known_parameters_match_bayes_rule() {
        let p = 10;
        let (a, b) = make_qda_cov(QdaCovModel::QII, p).unwrap();
        let mu1 = DVector::zeros(p);
        let mu2 = DVector::from_element(p, 0.1);
        let rule = QdaModel::from_parameters(mu1.clone(), mu2.clone(), a.omega.clone(), b.omega.clone(), 1.0).unwrap();
        let t1 = gen_elliptical(&DistSpec::normal(), &mu1, &a.sigma, 5000, 8).unwrap();
        let t2 = gen_elliptical(&DistSpec::normal(), &mu2, &b.sigma, 5000, 9).unwrap();
        let mut err_rule = 0usize;
        let mut err_bayes = 0usize;
        for (data, label) in [(&t1, 1u8), (&t2, 2u8)] {
            for r in data.row_iter() {
                let x = r.transpose();
                let l1 = gaussian_log_density(&x, &mu1, a.sigma.as_matrix());
                let l2 = gaussian_log_density(&x, &mu2, b.sigma.as_matrix());
                let bayes = if l1 >= l2 { 1 } else { 2 };
                err_bayes += (bayes != label) as usize;
                err_rule += (rule.classify(&x).unwrap() != label) as usize;
            }
        }
        let diff = (err_rule as f64 - err_bayes as f64).abs() / 10_000.0;
        assert!(diff < 0.01, "{err_rule} vs {err_bayes}");
    }

    #[test]
    fn model_document_round_trip() {
        let (x1, x2) = sample(QdaCovModel::QIII, DistSpec::normal(), 8, 30, 10);
        let m = hrqda_train(&x1, &x2, &QdaConfig::default()).unwrap();
        let json = serde_json::to_string(&m.to_doc()).unwrap();
        let back = QdaModel::from_doc(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(m.predict(&x1).unwrap(), back.predict(&x1).unwrap());
        assert_eq!(back.c_method, "grid");
        let mut doc = m.to_doc();
        doc.version = 99;
        assert!(QdaModel::from_doc(&doc).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = DMatrix::<f64>::zeros(5, 3);
        let b = DMatrix::<f64>::zeros(5, 4);
        assert!(matches!(hrqda_train(&a, &b, &QdaConfig::default()), Err(HrError::Dimension(_))));
    }
}
