use serde::{Deserialize, Serialize};

use super::KernelComponent;
use crate::error::{Result, SveError};

/// A real path sampled at increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(SveError::Contract(format!(
                "path has {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SveError::Contract("path times must be strictly increasing".into()));
        }
        Ok(Self { times, values })
    }

    /// Samples on `t_k = k·dt`, `k = 0..values.len()`.
    pub fn uniform(dt: f64, values: Vec<f64>) -> Self {
        let times = (0..values.len()).map(|k| k as f64 * dt).collect();
        Self { times, values }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(dt: f64, steps: usize, f: F) -> Self {
        Self::uniform(dt, (0..=steps).map(|k| f(k as f64 * dt)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 || self.times[0] != 0.0 {
            return None;
        }
        let dt = self.times[1];
        let uniform = self
            .times
            .iter()
            .enumerate()
            .all(|(k, &t)| (t - k as f64 * dt).abs() <= 1e-12 * dt.max(t));
        uniform.then_some(dt)
    }
}

/// `J_φ f(t) = φ(t) f(t) − ∫_0^t φ′(t−s)(f(t) − f(s)) ds` on the sample grid.
///
/// For the piecewise-linear interpolant `f̄` of the samples, integration by
/// parts turns `J_φ f̄` into `Σ_j (Δf_j/δ)·∫_{s_j}^{s_{j+1}} φ(t_k − s) ds`,
/// and those cell integrals are exact for the power part.
pub fn jphi_apply(component: &KernelComponent, f: &SampledPath) -> Result<SampledPath> {
    let dt = f
        .uniform_step()
        .ok_or_else(|| SveError::Contract("J_phi needs a uniform grid starting at t = 0".into()))?;
    if f.values[0] != 0.0 {
        return Err(SveError::Contract(format!("J_phi needs f(0) = 0, got {}", f.values[0])));
    }
    let steps = f.len() - 1;
    let cells: Vec<f64> = (1..=steps)
        .map(|r| component.integral((r - 1) as f64 * dt, r as f64 * dt))
        .collect();
    let slopes: Vec<f64> = f.values.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    let mut out = vec![0.0; f.len()];
    for (k, o) in out.iter_mut().enumerate().skip(1) {
        *o = (0..k).map(|j| cells[k - j - 1] * slopes[j]).sum();
    }
    Ok(SampledPath { times: f.times.clone(), values: out })
}

/// `max_{s<t} |f(t) − f(s)| / (t − s)^λ` over all sample pairs.
pub fn holder_quotient(path: &SampledPath, lambda: f64) -> Result<f64> {
    if path.len() < 2 {
        return Err(SveError::Contract("Hölder quotient needs at least two samples".into()));
    }
    let mut best: f64 = 0.0;
    for i in 0..path.len() {
        for j in i + 1..path.len() {
            let q = (path.values[j] - path.values[i]).abs() / (path.times[j] - path.times[i]).powf(lambda);
            best = best.max(q);
        }
    }
    Ok(best)
}
