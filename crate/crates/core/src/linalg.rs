//! Dense symmetric-matrix kernels.
//!
//! Everything here works on small dense matrices (p up to a few hundred).
//! [`SymMatrix`] is a validated symmetric matrix; [`SpdMatrix`] additionally
//! carries its eigendecomposition, so square roots, inverses and
//! log-determinants are cheap once it has been built.

use nalgebra::{DMatrix, DVector};

use crate::error::{HrError, Result};

/// Relative tolerance used when validating symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative eigenvalue floor; the absolute floor is this times `trace / dim`.
pub const EPS_PD_RELATIVE: f64 = 1e-8;

/// A dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates squareness and symmetry (to [`SYMMETRY_TOL`] relative to the
    /// largest entry) and stores the exactly symmetrized matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(HrError::Contract(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(HrError::Contract("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(HrError::Contract(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self::symmetrize(m))
    }

    /// Replaces `m` by `(m + mᵀ) / 2` without validation.
    pub fn symmetrize(mut m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrize needs a square matrix");
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }

    /// `trace / dim` scaled eigenvalue floor used by default.
    pub fn default_eps_pd(&self) -> f64 {
        let mean_diag = self.trace() / self.dim() as f64;
        EPS_PD_RELATIVE * mean_diag.abs().max(f64::MIN_POSITIVE)
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        let mut out = scaled * self.vectors.transpose();
        // exact symmetry
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    fn mapped(&self, f: impl Fn(f64) -> f64) -> SymEigen {
        SymEigen {
            values: self.values.map(f),
            vectors: self.vectors.clone(),
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
pub fn sym_eigen(m: &SymMatrix) -> SymEigen {
    let eig = m.0.clone().symmetric_eigen();
    let n = m.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymEigen { values, vectors }
}

/// A symmetric positive definite matrix together with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    eigen: SymEigen,
}

impl SpdMatrix {
    /// Builds an SPD matrix, failing with [`HrError::Singular`] when the
    /// smallest eigenvalue is below the default scale-relative floor.
    pub fn new(m: SymMatrix) -> Result<Self> {
        let eps = m.default_eps_pd();
        Self::with_floor(m, eps)
    }

    /// As [`SpdMatrix::new`] with an explicit absolute eigenvalue floor.
    pub fn with_floor(m: SymMatrix, eps_pd: f64) -> Result<Self> {
        let eigen = sym_eigen(&m);
        let min = eigen.values[eigen.values.len() - 1];
        if !(min >= eps_pd) || min <= 0.0 {
            return Err(HrError::Singular {
                min_eigenvalue: min,
                floor: eps_pd,
            });
        }
        Ok(SpdMatrix {
            matrix: m.into_inner(),
            eigen,
        })
    }

    fn from_eigen(eigen: SymEigen) -> Self {
        let matrix = eigen.reconstruct_with(|l| l);
        SpdMatrix { matrix, eigen }
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix {
            matrix: DMatrix::identity(dim, dim),
            eigen: SymEigen {
                values: DVector::from_element(dim, 1.0),
                vectors: DMatrix::identity(dim, dim),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn eigen(&self) -> &SymEigen {
        &self.eigen
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen.values[self.eigen.values.len() - 1]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen.values[0]
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix(self.matrix.clone())
    }

    /// Symmetric square root; shares the eigenvectors of `self`.
    pub fn sqrt(&self) -> SpdMatrix {
        SpdMatrix::from_eigen(self.eigen.mapped(f64::sqrt))
    }

    /// Symmetric inverse square root.
    pub fn inv_sqrt(&self) -> SpdMatrix {
        SpdMatrix::from_eigen(self.eigen.mapped(|l| 1.0 / l.sqrt()))
    }

    pub fn inverse(&self) -> SpdMatrix {
        SpdMatrix::from_eigen(self.eigen.mapped(|l| 1.0 / l))
    }

    /// Multiplies by a positive scalar.
    pub fn scaled(&self, c: f64) -> SpdMatrix {
        assert!(c > 0.0, "SPD scaling factor must be positive");
        SpdMatrix {
            matrix: &self.matrix * c,
            eigen: self.eigen.mapped(|l| l * c),
        }
    }

    pub fn log_det(&self) -> f64 {
        self.eigen.values.iter().map(|l| l.ln()).sum()
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.matrix * x))
    }
}

/// Symmetric square root of an SPD matrix.
///
/// Fails when the smallest eigenvalue lies below the default floor; run
/// [`psd_project`] first for matrices that may be near-singular.
pub fn sym_sqrt(m: &SpdMatrix) -> Result<SpdMatrix> {
    let floor = EPS_PD_RELATIVE * (m.trace() / m.dim() as f64);
    if m.min_eigenvalue() < floor {
        return Err(HrError::Singular {
            min_eigenvalue: m.min_eigenvalue(),
            floor,
        });
    }
    Ok(m.sqrt())
}

/// Banding operator: keeps entries with `|i - j| <= h`, zeroes the rest.
pub fn band(m: &SymMatrix, h: usize) -> SymMatrix {
    let n = m.dim();
    let mut out = m.0.clone();
    for j in 0..n {
        for i in 0..n {
            if i.abs_diff(j) > h {
                out[(i, j)] = 0.0;
            }
        }
    }
    SymMatrix(out)
}

/// Clamps eigenvalues at `eps_pd`, keeping eigenvectors.
///
/// Matrices that already have every eigenvalue `>= eps_pd` are returned
/// entry-for-entry unchanged.
pub fn psd_project(m: &SymMatrix, eps_pd: f64) -> SpdMatrix {
    assert!(eps_pd > 0.0, "eps_pd must be positive");
    let eigen = sym_eigen(m);
    if eigen.values[eigen.values.len() - 1] >= eps_pd {
        return SpdMatrix {
            matrix: m.0.clone(),
            eigen,
        };
    }
    SpdMatrix::from_eigen(eigen.mapped(|l| l.max(eps_pd)))
}

/// Sum of log-eigenvalues.
pub fn log_det(m: &SpdMatrix) -> f64 {
    m.log_det()
}

/// Relative Frobenius distance `‖a - b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
