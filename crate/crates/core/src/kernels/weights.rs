use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::DiagonalKernel;
use crate::error::{Result, SveError};

/// Default cap on the number of entries of a dense `N×N` table.
pub const DEFAULT_DENSE_CAP: usize = 1 << 26;

/// Cell integrals of each kernel component on a uniform fine grid.
///
/// On a uniform grid the drift weight of cell `[s_j, s_{j+1}]` for target
/// `t_k` depends only on the lag `r = k − j`, so each component stores the
/// Toeplitz generator `w[r] = ∫_{(r−1)δ}^{rδ} φ(u) du` for `r = 1..=N`
/// (`w[0] = 0`). The stochastic weight is the cell average `w[r]/δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub n: usize,
    pub refinement: usize,
    pub fine_steps: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Full weights per component.
    pub full: Vec<Vec<f64>>,
    /// Weights of the unit power `u^{H−1/2}` (without `c_i`).
    pub unit_power: Vec<Vec<f64>>,
    /// Weights of the perturbation `φ̂_i`.
    pub perturbation: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
}

impl WeightTable {
    pub fn dim(&self) -> usize {
        self.full.len()
    }

    /// `∫_{s_j}^{s_{j+1}} φ_i(t_k − s) ds`, zero unless `j < k`.
    pub fn drift_weight(&self, i: usize, k: usize, j: usize) -> f64 {
        if j < k {
            self.full[i][k - j]
        } else {
            0.0
        }
    }

    /// Cell-averaged kernel value used against `ΔW_j`.
    pub fn stoch_weight(&self, i: usize, k: usize, j: usize) -> f64 {
        self.drift_weight(i, k, j) / self.dt
    }

    /// Materialises the lower-triangular drift table of component `i`.
    pub fn dense_drift(&self, i: usize, cap: usize) -> Result<Array2<f64>> {
        let size = self.fine_steps + 1;
        if size.saturating_mul(size) > cap {
            return Err(SveError::TableTooLarge { steps: size, cap });
        }
        Ok(Array2::from_shape_fn((size, size), |(k, j)| self.drift_weight(i, k, j)))
    }
}

/// Precomputes the cell integrals for `n` coarse steps refined `refinement` times on `[0, T]`.
///
/// The power part uses the closed-form antiderivative; the perturbation
/// uses its closed form where one exists and 8-point Gauss–Legendre otherwise.
pub fn build_weight_table(kernel: &DiagonalKernel, n: usize, refinement: usize, horizon: f64) -> Result<WeightTable> {
    if n == 0 || refinement == 0 {
        return Err(SveError::Contract("weight table needs n >= 1 and M >= 1".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SveError::Contract(format!("horizon T = {horizon} must be positive")));
    }
    let fine_steps = n
        .checked_mul(refinement)
        .filter(|&s| s < u32::MAX as usize)
        .ok_or_else(|| SveError::Contract("n·M overflows the fine grid index".into()))?;
    let dt = horizon / fine_steps as f64;
    let mut full = Vec::with_capacity(kernel.dim());
    let mut unit_power = Vec::with_capacity(kernel.dim());
    let mut perturbation = Vec::with_capacity(kernel.dim());
    for comp in &kernel.components {
        let mut w = vec![0.0; fine_steps + 1];
        let mut p = vec![0.0; fine_steps + 1];
        let mut q = vec![0.0; fine_steps + 1];
        for r in 1..=fine_steps {
            let a = (r - 1) as f64 * dt;
            let b = r as f64 * dt;
            p[r] = comp.unit_power_integral(a, b);
            q[r] = comp.perturbation_integral(a, b);
            w[r] = comp.c * p[r] + q[r];
        }
        if let Some(r) = w.iter().position(|v| !v.is_finite()) {
            return Err(SveError::Domain(format!("non-finite kernel weight at lag {r}")));
        }
        full.push(w);
        unit_power.push(p);
        perturbation.push(q);
    }
    Ok(WeightTable {
        n,
        refinement,
        fine_steps,
        horizon,
        dt,
        full,
        unit_power,
        perturbation,
        coefficients: kernel.components.iter().map(|c| c.c).collect(),
    })
}
