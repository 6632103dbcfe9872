//! Covariance and precision models used in the simulations.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HrError, Result};
use crate::linalg::{SpdMatrix, SymMatrix};

/// One-sample models.
///
/// * `I`: `Σ = (0.6^{|i−j|})`
/// * `II`: `Σ = 0.5 I + 0.5 11ᵀ`
/// * `III`: `Ω = (0.6^{|i−j|})`, `Σ = Ω⁻¹`
/// * `IV`: banded `Ω` with diagonal 2 and off-diagonals 0.8, 0.4, 0.4, 0.2
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CovModel {
    I,
    II,
    III,
    IV,
}

/// Two-class models for discriminant analysis.
///
/// * `QI`: `Σ₁ = (0.6^{|i−j|})`, `Σ₂ = I`
/// * `QII`: `Σ₁ = (0.6^{|i−j|})`, `Σ₂ = 0.5 I + 0.5 11ᵀ`
/// * `QIII`: `Σ₁ = Ω₁⁻¹` with `Ω₁ = (0.6^{|i−j|})`, `Σ₂ = Ω₁`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QdaCovModel {
    QI,
    QII,
    QIII,
}

#[derive(Debug, Clone)]
pub struct CovPair {
    pub sigma: SpdMatrix,
    pub omega: SpdMatrix,
}

impl CovPair {
    fn from_sigma(sigma: DMatrix<f64>) -> Result<Self> {
        let sigma = SpdMatrix::new(SymMatrix::new(sigma)?).map_err(model_error)?;
        let omega = sigma.inverse();
        Ok(CovPair { sigma, omega })
    }

    fn from_omega(omega: DMatrix<f64>) -> Result<Self> {
        let omega = SpdMatrix::new(SymMatrix::new(omega)?).map_err(model_error)?;
        let sigma = omega.inverse();
        Ok(CovPair { sigma, omega })
    }
}

fn model_error(e: HrError) -> HrError {
    HrError::Model(format!("model matrix is not positive definite: {e}"))
}

fn ar1(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

fn compound(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.5 })
}

fn model_iv_omega(p: usize) -> DMatrix<f64> {
    const BAND: [f64; 5] = [2.0, 0.8, 0.4, 0.4, 0.2];
    DMatrix::from_fn(p, p, |i, j| BAND.get(i.abs_diff(j)).copied().unwrap_or(0.0))
}

pub fn make_cov(model: CovModel, p: usize) -> Result<CovPair> {
    if p < 2 {
        return Err(HrError::Model(format!("covariance models need p >= 2, got {p}")));
    }
    match model {
        CovModel::I => CovPair::from_sigma(ar1(p, 0.6)),
        CovModel::II => CovPair::from_sigma(compound(p)),
        CovModel::III => CovPair::from_omega(ar1(p, 0.6)),
        CovModel::IV => {
            if p < 6 {
                return Err(HrError::Model(format!("Model IV needs p >= 6, got {p}")));
            }
            CovPair::from_omega(model_iv_omega(p))
        }
    }
}

/// Class 1 and class 2 scatter for a discriminant model.
pub fn make_qda_cov(model: QdaCovModel, p: usize) -> Result<(CovPair, CovPair)> {
    if p < 2 {
        return Err(HrError::Model(format!("covariance models need p >= 2, got {p}")));
    }
    match model {
        QdaCovModel::QI => Ok((CovPair::from_sigma(ar1(p, 0.6))?, CovPair::from_sigma(DMatrix::identity(p, p))?)),
        QdaCovModel::QII => Ok((CovPair::from_sigma(ar1(p, 0.6))?, CovPair::from_sigma(compound(p))?)),
        QdaCovModel::QIII => Ok((CovPair::from_omega(ar1(p, 0.6))?, CovPair::from_sigma(ar1(p, 0.6))?)),
    }
}

impl fmt::Display for CovModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovModel::I => "I",
            CovModel::II => "II",
            CovModel::III => "III",
            CovModel::IV => "IV",
        })
    }
}

impl FromStr for CovModel {
    type Err = HrError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(CovModel::I),
            "II" | "2" => Ok(CovModel::II),
            "III" | "3" => Ok(CovModel::III),
            "IV" | "4" => Ok(CovModel::IV),
            _ => Err(HrError::Config(format!("unknown covariance model '{s}'"))),
        }
    }
}

impl fmt::Display for QdaCovModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QdaCovModel::QI => "QI",
            QdaCovModel::QII => "QII",
            QdaCovModel::QIII => "QIII",
        })
    }
}

impl FromStr for QdaCovModel {
    type Err = HrError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "QI" | "I" => Ok(QdaCovModel::QI),
            "QII" | "II" => Ok(QdaCovModel::QII),
            "QIII" | "III" => Ok(QdaCovModel::QIII),
            _ => Err(HrError::Config(format!("unknown QDA covariance model '{s}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_i_and_ii_entries() {
        let m = make_cov(CovModel::I, 3).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.36, 0.6, 1.0, 0.6, 0.36, 0.6, 1.0]);
        assert!((m.sigma.as_matrix() - want).amax() < 1e-15);
        let m = make_cov(CovModel::II, 2).unwrap();
        assert_eq!(m.sigma.as_matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
    }

    #[test]
    fn model_iii_inverts_model_i() {
        let one = make_cov(CovModel::I, 3).unwrap();
        let three = make_cov(CovModel::III, 3).unwrap();
        let oracle = one.sigma.as_matrix().clone().try_inverse().unwrap();
        assert!((three.sigma.as_matrix() - oracle).amax() < 1e-10);
        let prod = three.sigma.as_matrix() * one.sigma.as_matrix();
        assert!((prod - DMatrix::identity(3, 3)).amax() < 1e-10);
        let big_one = make_cov(CovModel::I, 40).unwrap();
        let big_three = make_cov(CovModel::III, 40).unwrap();
        let prod = big_three.sigma.as_matrix() * big_one.sigma.as_matrix();
        assert!((prod - DMatrix::identity(40, 40)).amax() < 1e-8);
    }

    #[test]
    fn model_iv_band() {
        let m = make_cov(CovModel::IV, 8).unwrap();
        let o = m.omega.as_matrix();
        for i in 0..8usize {
            for j in 0..8 {
                let want = match i.abs_diff(j) {
                    0 => 2.0,
                    1 => 0.8,
                    2 | 3 => 0.4,
                    4 => 0.2,
                    _ => 0.0,
                };
                assert_eq!(o[(i, j)], want);
            }
        }
        let prod = m.sigma.as_matrix() * o;
        assert!((prod - DMatrix::identity(8, 8)).amax() < 1e-8);
        assert!(matches!(make_cov(CovModel::IV, 5), Err(HrError::Model(_))));
        for p in [120, 240] {
            assert!(make_cov(CovModel::IV, p).is_ok());
        }
    }

    #[test]
    fn every_model_is_consistent() {
        for model in [CovModel::I, CovModel::II, CovModel::III, CovModel::IV] {
            let m = make_cov(model, 30).unwrap();
            let prod = m.sigma.as_matrix() * m.omega.as_matrix();
            assert!((prod - DMatrix::identity(30, 30)).amax() < 1e-8, "{model}");
        }
        for model in [QdaCovModel::QI, QdaCovModel::QII, QdaCovModel::QIII] {
            let (a, b) = make_qda_cov(model, 30).unwrap();
            for m in [a, b] {
                let prod = m.sigma.as_matrix() * m.omega.as_matrix();
                assert!((prod - DMatrix::identity(30, 30)).amax() < 1e-8, "{model}");
            }
        }
    }

    #[test]
    fn qda_model_iii_pairs_inverse_matrices() {
        let (a, b) = make_qda_cov(QdaCovModel::QIII, 10).unwrap();
        assert!((a.omega.as_matrix() - b.sigma.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn names_parse() {
        assert_eq!("iii".parse::<CovModel>().unwrap(), CovModel::III);
        assert_eq!("QII".parse::<QdaCovModel>().unwrap(), QdaCovModel::QII);
        assert!("V".parse::<CovModel>().is_err());
    }
}
