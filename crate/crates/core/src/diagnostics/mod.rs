//! Monte Carlo studies of the scheme, its error and the limit equation.
//!
//! Paths are simulated in parallel and reduced in path order with pairwise
//! summation, so reports do not depend on the number of worker threads.

mod holder;
mod limit_law;
mod psi_study;
mod qv;
mod rate;

pub use holder::{holder_scaling_study, HolderReport};
pub use limit_law::{limit_law_compare, ComponentLaw, KsCheck, LimitLawReport, LimitLawSettings};
pub use psi_study::{psi_vanishing_study, PsiPoint, PsiStudyReport};
pub use qv::{qv_convergence, qv_path, QvPathEstimate, QvPoint, QvReport};
pub use rate::{rate_study, RatePoint, RateReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::SingularCellMode;
use crate::error::{Result, SveError};
use crate::stats::pairwise_sum;

/// Common ensemble parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub horizon: f64,
    /// Fine steps per coarse step (`M`).
    pub refinement: usize,
    pub paths: usize,
    pub master_seed: u64,
    /// Index of the first path; ensembles that must be independent use disjoint ranges.
    #[serde(default)]
    pub first_path: u64,
    #[serde(default)]
    pub mode: SingularCellMode,
}

impl EnsembleSettings {
    pub fn new(horizon: f64, refinement: usize, paths: usize, master_seed: u64) -> Self {
        Self { horizon, refinement, paths, master_seed, first_path: 0, mode: SingularCellMode::CellAverage }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SveError::Contract(format!("horizon T = {} must be positive", self.horizon)));
        }
        if self.refinement == 0 || self.paths == 0 {
            return Err(SveError::Contract("refinement and paths must be positive".into()));
        }
        Ok(())
    }
}

/// Evaluates `f` on path indices `first..first+count` in parallel, keeping index order.
pub fn run_ensemble<T, F>(first: u64, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(|i| f(first + i)).collect()
}

const BATCH: usize = 256;

/// Reduces `f` over paths `first..first+count` with an associative `combine`.
///
/// Paths are processed in batches of fixed size; each batch is combined
/// pairwise and batch results are folded in order, so memory stays bounded
/// and the result is independent of the thread count.
pub fn ensemble_reduce<T, F, C>(first: u64, count: usize, f: F, combine: C) -> Result<Option<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
    C: Fn(T, T) -> T,
{
    let mut total = None;
    for start in (0..count).step_by(BATCH) {
        let size = BATCH.min(count - start);
        let batch = run_ensemble(first + start as u64, size, &f)?;
        if let Some(sum) = pairwise_combine(batch, &combine) {
            total = Some(match total {
                Some(t) => combine(t, sum),
                None => sum,
            });
        }
    }
    Ok(total)
}

/// Combines items in a fixed balanced-tree order.
pub fn pairwise_combine<T>(mut items: Vec<T>, combine: impl Fn(T, T) -> T) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => combine(a, b),
                None => a,
            });
        }
        items = next;
    }
    items.pop()
}

/// Entry-wise sum of equally long vectors in a fixed pairwise order.
pub fn pairwise_sum_vectors(items: Vec<Vec<f64>>) -> Vec<f64> {
    pairwise_combine(items, add_vectors).unwrap_or_default()
}

pub(crate) fn add_vectors(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
    a
}

/// Per-entry mean and standard error over paths of equally long vectors.
pub(crate) fn entrywise_mean_se(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = samples.first().map_or(0, Vec::len);
    let count = samples.len() as f64;
    let mut mean = vec![0.0; len];
    let mut se = vec![0.0; len];
    for e in 0..len {
        let col: Vec<f64> = samples.iter().map(|s| s[e]).collect();
        let m = pairwise_sum(&col) / count;
        let dev: Vec<f64> = col.iter().map(|x| (x - m) * (x - m)).collect();
        mean[e] = m;
        se[e] = if samples.len() > 1 { (pairwise_sum(&dev) / (count - 1.0) / count).sqrt() } else { 0.0 };
    }
    (mean, se)
}

/// Index of the grid point `t` on a grid of `steps` cells over `[0, T]`, if it is one.
pub(crate) fn grid_index(t: f64, horizon: f64, steps: usize) -> Option<usize> {
    let x = t / horizon * steps as f64;
    let k = x.round();
    ((x - k).abs() <= 1e-9 * x.abs().max(1.0) && k >= 0.0 && k <= steps as f64).then_some(k as usize)
}

pub(crate) fn check_sequence(ns: &[usize], min_len: usize) -> Result<()> {
    if ns.len() < min_len {
        return Err(SveError::Contract(format!("n sequence needs at least {min_len} entries")));
    }
    if ns.contains(&0) || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SveError::Contract("n sequence must be positive and strictly increasing".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_reduction_is_exact_on_integers() {
        let items: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, 1.0]).collect();
        assert_eq!(pairwise_sum_vectors(items), vec![21.0, 7.0]);
    }

    #[test]
    fn grid_index_detects_off_grid_times() {
        assert_eq!(grid_index(0.5, 1.0, 16), Some(8));
        assert_eq!(grid_index(0.3, 1.0, 16), None);
        assert_eq!(grid_index(1.0, 2.0, 3), None);
    }
}
