use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::Covariance;
use crate::error::{Error, Result};
use crate::geometry::{lag_triple, SpaceTimePoint};

/// Symmetric covariance matrix over a list of space-time points.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Smallest eigenvalue divided by the largest.
    pub fn relative_min_eigenvalue(&self) -> f64 {
        let eig = SymmetricEigen::new(self.values.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if max <= 0.0 {
            return if min == 0.0 { 0.0 } else { f64::NEG_INFINITY };
        }
        min / max
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Entry `(i, j)` is `C(lag(p_i, p_j)) + τ²·1{i = j}`.
pub fn gram<K: Covariance + ?Sized>(
    kernel: &K,
    points: &[SpaceTimePoint],
    nugget: f64,
) -> Result<GramMatrix> {
    if points.is_empty() {
        return Err(Error::InvalidInput("gram matrix needs at least one point".into()));
    }
    if !(nugget >= 0.0 && nugget.is_finite()) {
        return Err(Error::invalid_param("tau2", nugget, "must be >= 0"));
    }
    let n = points.len();
    for p in points {
        if !(p.t.is_finite() && p.coord.x.is_finite() && p.coord.y.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite point {p:?}")));
        }
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..=i)
                .map(|j| kernel.covariance(&lag_triple(&points[i], &points[j])))
                .collect()
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
            m[(j, i)] = *v;
        }
        m[(i, i)] += nugget;
    }
    Ok(GramMatrix { values: m })
}
