//! Density operators with validated physicality and a JSON-compatible
//! serialization (`dim` plus row-major `[re, im]` entries).

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const EIGEN_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityRecord {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl DensityMatrix {
    /// Validates Hermiticity, positivity and unit trace.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        check_square(&matrix)?;
        let dim = matrix.nrows();
        for i in 0..dim {
            for j in 0..dim {
                let d = (matrix[(i, j)] - matrix[(j, i)].conj()).norm();
                if d > HERMITIAN_TOL {
                    return Err(Error::InvalidDensity(format!(
                        "not Hermitian at ({i},{j}): deviation {d:e}"
                    )));
                }
            }
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensity(format!("trace {trace} != 1")));
        }
        let rho = Self { matrix };
        let min = rho.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -EIGEN_TOL {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    /// Hermitian-symmetrizes and divides by the trace. Returns the state and
    /// the original trace (the conditional weight).
    pub fn from_unnormalized(matrix: DMatrix<C64>) -> Result<(Self, f64)> {
        check_square(&matrix)?;
        let herm = (&matrix + matrix.adjoint()).scale(0.5);
        let weight = herm.trace().re;
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidDensity(format!("non-positive trace {weight}")));
        }
        Ok((Self::new(herm.unscale(weight))?, weight))
    }

    pub fn from_pure(amplitudes: &[C64]) -> Result<Self> {
        let v = DVector::from_column_slice(amplitudes);
        let n2 = v.norm_squared();
        if n2 == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let v = v.unscale(n2.sqrt());
        Self::new(&v * v.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim).unscale(dim as f64),
        }
    }

    pub fn from_matrix4(m: &Matrix4<C64>) -> Result<Self> {
        Self::new(DMatrix::from_iterator(4, 4, m.iter().cloned()))
    }

    /// Convex combination; weights are renormalized.
    pub fn mix(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts.first().ok_or(Error::ZeroWeights)?;
        let dim = first.1.dim();
        let mut acc = DMatrix::zeros(dim, dim);
        let mut total = 0.0;
        for (w, rho) in parts {
            if *w < 0.0 {
                return Err(Error::NegativeWeight(*w));
            }
            if rho.dim() != dim {
                return Err(Error::Dimension { expected: dim, found: rho.dim() });
            }
            acc += rho.matrix.scale(*w);
            total += w;
        }
        if total == 0.0 {
            return Err(Error::ZeroWeights);
        }
        Self::new(acc.unscale(total))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.matrix[(i, j)]
    }

    pub fn to_matrix4(&self) -> Result<Matrix4<C64>> {
        if self.dim() != 4 {
            return Err(Error::Dimension { expected: 4, found: self.dim() });
        }
        Ok(Matrix4::from_iterator(self.matrix.iter().cloned()))
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn to_record(&self) -> DensityRecord {
        let dim = self.dim();
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                let z = self.matrix[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        DensityRecord { dim, entries }
    }

    pub fn from_record(record: &DensityRecord) -> Result<Self> {
        let dim = record.dim;
        if record.entries.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                found: record.entries.len(),
            });
        }
        let m = DMatrix::from_fn(dim, dim, |i, j| {
            let [re, im] = record.entries[i * dim + j];
            C64::new(re, im)
        });
        Self::new(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(text)?)
    }
}

fn check_square(m: &DMatrix<C64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension { expected: m.nrows(), found: m.ncols() });
    }
    Ok(())
}
