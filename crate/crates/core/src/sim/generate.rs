//! Elliptical data generators.
//!
//! Draw order per call: all `n × p` standard normals row by row, then the
//! family's per-row radial draws (three normals per row for `t₃`, one
//! uniform per row for the mixture). The stochastic part is
//! `radial_i · (Σ^{1/2} z_i) / scale_norm`; the location is added afterwards.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HrError, Result};
use crate::linalg::SpdMatrix;
use crate::rng::{standard_normal_rows, substream};
use crate::DataMatrix;

/// Inflation of the contaminating mixture component.
pub const MIXTURE_KAPPA: f64 = 10.0;
/// Weight of the uncontaminated mixture component.
pub const MIXTURE_GAMMA: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "normal")]
    Normal,
    #[serde(rename = "t3")]
    StudentT3,
    #[serde(rename = "mixture")]
    MixtureNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistSpec {
    pub family: Family,
    pub scale_norm: f64,
}

impl DistSpec {
    pub fn normal() -> Self {
        DistSpec {
            family: Family::Normal,
            scale_norm: 1.0,
        }
    }

    /// `t(μ, Σ, 3)/√3`, unit marginal variance when `Σ` has unit diagonal.
    pub fn student_t3() -> Self {
        DistSpec {
            family: Family::StudentT3,
            scale_norm: 3f64.sqrt(),
        }
    }

    /// `MN(μ, Σ, 10, 0.8)/√20.8`, unit marginal variance.
    pub fn mixture() -> Self {
        DistSpec {
            family: Family::MixtureNormal,
            scale_norm: (MIXTURE_GAMMA + (1.0 - MIXTURE_GAMMA) * MIXTURE_KAPPA.powi(2)).sqrt(),
        }
    }

    /// The mixture divided by `√22.8` instead of its exact standard deviation.
    pub fn mixture_scale_22_8() -> Self {
        DistSpec {
            family: Family::MixtureNormal,
            scale_norm: 22.8f64.sqrt(),
        }
    }

    pub fn for_family(family: Family) -> Self {
        match family {
            Family::Normal => DistSpec::normal(),
            Family::StudentT3 => DistSpec::student_t3(),
            Family::MixtureNormal => DistSpec::mixture(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Normal => "normal",
            Family::StudentT3 => "t3",
            Family::MixtureNormal => "mixture",
        })
    }
}

impl FromStr for Family {
    type Err = HrError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Family::Normal),
            "t3" | "t" | "student" => Ok(Family::StudentT3),
            "mixture" | "mn" => Ok(Family::MixtureNormal),
            _ => Err(HrError::Config(format!("unknown distribution family '{s}'"))),
        }
    }
}

fn radial_factors(spec: &DistSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| match spec.family {
            Family::Normal => 1.0,
            Family::StudentT3 => {
                let w: f64 = (0..3)
                    .map(|_| {
                        let g: f64 = rng.sample(StandardNormal);
                        g * g
                    })
                    .sum();
                1.0 / (w / 3.0).sqrt()
            }
            Family::MixtureNormal => {
                if rng.random::<f64>() < MIXTURE_GAMMA {
                    1.0
                } else {
                    MIXTURE_KAPPA
                }
            }
        })
        .collect()
}

/// Draws `n` rows from the family with location `mu` and scatter given by
/// its symmetric square root.
pub fn gen_elliptical_with(
    spec: &DistSpec,
    mu: &DVector<f64>,
    sigma_sqrt: &DMatrix<f64>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> DataMatrix {
    let p = mu.len();
    let z = standard_normal_rows(n, p, rng);
    let radial = radial_factors(spec, n, rng);
    let mut x = z * sigma_sqrt;
    for (i, r) in radial.iter().enumerate() {
        let f = r / spec.scale_norm;
        for j in 0..p {
            x[(i, j)] = x[(i, j)] * f + mu[j];
        }
    }
    x
}

pub fn gen_elliptical(spec: &DistSpec, mu: &DVector<f64>, sigma: &SpdMatrix, n: usize, seed: u64) -> Result<DataMatrix> {
    if sigma.dim() != mu.len() {
        return Err(HrError::Dimension(format!(
            "location has length {}, scatter is {}x{}",
            mu.len(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    if !(spec.scale_norm > 0.0) {
        return Err(HrError::Contract("scale_norm must be positive".into()));
    }
    let root = sigma.sqrt().into_inner();
    Ok(gen_elliptical_with(spec, mu, &root, n, &mut substream(seed, 0)))
}

/// `κ √(log p/(n s)) Σ^{1/2} (1_s, 0)ᵀ`.
pub fn alt_mean(kappa: f64, s: usize, n: usize, p: usize, sigma_sqrt: &SpdMatrix) -> Result<DVector<f64>> {
    if s < 1 || s > p {
        return Err(HrError::Domain(format!("sparsity s must lie in 1..={p}, got {s}")));
    }
    if !(kappa >= 0.0) {
        return Err(HrError::Domain(format!("kappa must be nonnegative, got {kappa}")));
    }
    if sigma_sqrt.dim() != p {
        return Err(HrError::Dimension("alt_mean: scatter root has the wrong dimension".into()));
    }
    let scale = kappa * ((p as f64).ln() / (n as f64 * s as f64)).sqrt();
    let root = sigma_sqrt.as_matrix();
    let mut mu = DVector::zeros(p);
    for k in 0..s {
        mu += root.column(k);
    }
    Ok(mu * scale)
}
