//! Incremental weighted ridge statistics.
//!
//! A [`RidgeStats`] holds the gram matrix `A = λI + Σ w·x xᵀ`, the moment
//! vector `b = Σ w·r·x`, a cached inverse and a cached log-determinant.
//! Single-sample updates maintain the inverse with the Sherman–Morrison
//! identity; merges of accumulated [`DeltaStats`] recompute both caches from a
//! Cholesky factorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the unit-norm bound for contexts.
pub const NORM_SLACK: f64 = 1e-9;

/// Rank-1 updates allowed between refactorizations, per dimension.
const REFACTOR_PER_DIM: usize = 10;

/// Gram/moment pair with cached inverse and log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeStats {
    dim: usize,
    gram: DMatrix<f64>,
    moment: DVector<f64>,
    gram_inv: DMatrix<f64>,
    log_det: f64,
    updates_since_factor: usize,
}

/// Statistics accumulated locally since the last synchronization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats {
    dim: usize,
    dgram: DMatrix<f64>,
    dmoment: DVector<f64>,
    num_updates: u64,
}

pub(crate) fn check_vector(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericInput(format!("vector entry {i} is {}", x[i])));
    }
    Ok(())
}

fn check_sample(x: &[f64], r: f64, weight: f64, dim: usize) -> Result<()> {
    check_vector(x, dim)?;
    if !r.is_finite() {
        return Err(Error::NumericInput(format!("reward is {r}")));
    }
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "update weight must be positive and finite, got {weight}"
        )));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1.0 + NORM_SLACK {
        return Err(Error::InvalidArgument(format!(
            "context norm {norm} exceeds 1"
        )));
    }
    Ok(())
}

fn quad_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for j in 0..d {
        let col = m.column(j);
        let mut s = 0.0;
        for i in 0..d {
            s += col[i] * x[i];
        }
        acc += s * x[j];
    }
    acc
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Inverse and log-determinant of a symmetric positive definite matrix.
fn factorize(gram: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let chol = Cholesky::<f64, Dyn>::new(gram.clone())
        .ok_or_else(|| Error::NumericInput("gram matrix is not positive definite".into()))?;
    let log_det = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>();
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok((inv, log_det))
}

fn log_det_spd(m: DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::<f64, Dyn>::new(m)
        .ok_or_else(|| Error::NumericInput("matrix is not positive definite".into()))?;
    Ok(2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>())
}

impl RidgeStats {
    /// Identity-initialized statistics (`A = I`, `b = 0`).
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_lambda(dim, 1.0)
    }

    /// Statistics initialized to `A = λI`, `b = 0`.
    pub fn with_lambda(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(
                "dimension must be at least 1".into(),
            ));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ridge lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            dim,
            gram: DMatrix::identity(dim, dim) * lambda,
            moment: DVector::zeros(dim),
            gram_inv: DMatrix::identity(dim, dim) / lambda,
            log_det: dim as f64 * lambda.ln(),
            updates_since_factor: 0,
        })
    }

    /// Rebuilds statistics from a raw gram/moment pair, factorizing the gram.
    pub fn from_parts(gram: DMatrix<f64>, moment: DVector<f64>) -> Result<Self> {
        let dim = gram.nrows();
        if dim == 0 || gram.ncols() != dim {
            return Err(Error::InvalidDimension(format!(
                "gram must be square and non-empty, got {}x{}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if moment.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: moment.len(),
            });
        }
        if gram.iter().chain(moment.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericInput("non-finite statistics".into()));
        }
        let (gram_inv, log_det) = factorize(&gram)?;
        Ok(Self {
            dim,
            gram,
            moment,
            gram_inv,
            log_det,
            updates_since_factor: 0,
        })
    }

    /// Reassembles statistics with caches taken as given (message decoding).
    pub(crate) fn from_raw_parts(
        gram: DMatrix<f64>,
        moment: DVector<f64>,
        gram_inv: DMatrix<f64>,
        log_det: f64,
    ) -> Self {
        Self {
            dim: gram.nrows(),
            gram,
            moment,
            gram_inv,
            log_det,
            updates_since_factor: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Adds `weight·x xᵀ` to the gram and `weight·r·x` to the moment.
    pub fn update(&mut self, x: &[f64], r: f64, weight: f64) -> Result<()> {
        check_sample(x, r, weight, self.dim)?;
        let d = self.dim;
        let u = &self.gram_inv * DVector::from_column_slice(x);
        let q = x
            .iter()
            .zip(u.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .max(0.0);
        let denom = 1.0 + weight * q;
        for j in 0..d {
            for i in 0..d {
                self.gram[(i, j)] += weight * x[i] * x[j];
                self.gram_inv[(i, j)] -= weight * u[i] * u[j] / denom;
            }
            self.moment[j] += weight * r * x[j];
        }
        symmetrize(&mut self.gram_inv);
        self.log_det += (weight * q).ln_1p();
        self.updates_since_factor += 1;
        if self.updates_since_factor > REFACTOR_PER_DIM * d {
            self.refactor()?;
        }
        Ok(())
    }

    /// Adds an accumulated delta and refactorizes.
    pub fn merge(&mut self, delta: &DeltaStats) -> Result<()> {
        self.add_delta(delta)?;
        self.refactor()
    }

    /// Adds a delta without refreshing the caches; callers must `refactor`.
    pub(crate) fn add_delta(&mut self, delta: &DeltaStats) -> Result<()> {
        if delta.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: delta.dim,
            });
        }
        self.gram += &delta.dgram;
        self.moment += &delta.dmoment;
        Ok(())
    }

    pub(crate) fn refactor(&mut self) -> Result<()> {
        let (inv, log_det) = factorize(&self.gram)?;
        self.gram_inv = inv;
        self.log_det = log_det;
        self.updates_since_factor = 0;
        Ok(())
    }

    /// `‖x‖_{A⁻¹} = √(xᵀA⁻¹x)`.
    pub fn weighted_norm(&self, x: &[f64]) -> Result<f64> {
        check_vector(x, self.dim)?;
        Ok(quad_form(&self.gram_inv, x).max(0.0).sqrt())
    }

    /// Ridge estimate `A⁻¹ b`.
    pub fn theta(&self) -> DVector<f64> {
        &self.gram_inv * &self.moment
    }

    /// `ln det(A + ΔA) − ln det(A)`, clamped at zero.
    pub fn log_det_ratio(&self, delta: &DeltaStats) -> Result<f64> {
        if delta.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: delta.dim,
            });
        }
        if delta.gram_is_zero() {
            return Ok(0.0);
        }
        let after = log_det_spd(&self.gram + &delta.dgram)?;
        let before = log_det_spd(self.gram.clone())?;
        Ok((after - before).max(0.0))
    }
}

impl DeltaStats {
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(
                "dimension must be at least 1".into(),
            ));
        }
        Ok(Self {
            dim,
            dgram: DMatrix::zeros(dim, dim),
            dmoment: DVector::zeros(dim),
            num_updates: 0,
        })
    }

    /// Builds a delta from raw parts; `dgram` must be symmetric.
    pub fn from_parts(
        dgram: DMatrix<f64>,
        dmoment: DVector<f64>,
        num_updates: u64,
    ) -> Result<Self> {
        let dim = dgram.nrows();
        if dim == 0 || dgram.ncols() != dim {
            return Err(Error::InvalidDimension("delta gram must be square".into()));
        }
        if dmoment.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: dmoment.len(),
            });
        }
        if dgram.iter().chain(dmoment.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericInput("non-finite delta".into()));
        }
        Ok(Self {
            dim,
            dgram,
            dmoment,
            num_updates,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dgram(&self) -> &DMatrix<f64> {
        &self.dgram
    }

    pub fn dmoment(&self) -> &DVector<f64> {
        &self.dmoment
    }

    pub fn num_updates(&self) -> u64 {
        self.num_updates
    }

    pub fn add(&mut self, x: &[f64], r: f64, weight: f64) -> Result<()> {
        check_sample(x, r, weight, self.dim)?;
        let d = self.dim;
        for j in 0..d {
            for i in 0..d {
                self.dgram[(i, j)] += weight * x[i] * x[j];
            }
            self.dmoment[j] += weight * r * x[j];
        }
        self.num_updates += 1;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.dgram.fill(0.0);
        self.dmoment.fill(0.0);
        self.num_updates = 0;
    }

    pub fn gram_is_zero(&self) -> bool {
        self.num_updates == 0 || self.dgram.iter().all(|v| *v == 0.0)
    }
}
