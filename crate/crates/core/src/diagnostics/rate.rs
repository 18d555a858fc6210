use serde::{Deserialize, Serialize};

use super::{check_sequence, run_ensemble, EnsembleSettings};
use crate::engine::{DiagonalKernel, ModelSpec, SchemeSolver};
use crate::error::{Result, SveError};
use crate::paths::SeedSpec;
use crate::stats::{loglog_fit, mean_estimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    /// Ensemble mean of `sup_t |X_t − X̂_t|` over the fine grid (Euclidean norm).
    pub sup_mean: f64,
    pub sup_std_error: f64,
    /// Ensemble mean of `|X_T − X̂_T|`.
    pub terminal_mean: f64,
    pub terminal_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub h: f64,
    pub refinement: usize,
    pub paths: usize,
    pub points: Vec<RatePoint>,
    /// Least-squares slope of `log E sup|X − X̂|` against `log n`.
    pub slope: Option<f64>,
    pub slope_std_error: Option<f64>,
    /// Approximate 95% interval for the slope.
    pub slope_ci95: Option<(f64, f64)>,
    pub terminal_slope: Option<f64>,
    pub target_slope: f64,
    pub tolerance: f64,
    /// Relative size `M^{−H}` of the error of the fine-grid proxy for `X`.
    pub proxy_bias_bound: f64,
    /// Every measured error is exactly zero; the slope is undefined.
    pub exact_zero: bool,
    pub warnings: Vec<String>,
}

impl RateReport {
    pub fn passed(&self) -> bool {
        self.exact_zero || self.slope.is_some_and(|s| (s - self.target_slope).abs() <= self.tolerance)
    }
}

/// Strong-error regression of the coarse scheme against the fine proxy.
pub fn rate_study(
    model: &ModelSpec,
    kernel: &DiagonalKernel,
    n_sequence: &[usize],
    settings: &EnsembleSettings,
    tolerance: f64,
) -> Result<RateReport> {
    settings.validate()?;
    check_sequence(n_sequence, 4)?;
    if settings.refinement < 16 {
        return Err(SveError::Contract(format!("rate study needs M ≥ 16, got {}", settings.refinement)));
    }
    let h = kernel.h;
    let proxy_bias_bound = (settings.refinement as f64).powf(-h);
    let mut warnings = Vec::new();
    if proxy_bias_bound > 0.33 {
        warnings.push(format!(
            "proxy bias M^-H = {proxy_bias_bound:.3} exceeds 0.33; the fitted slope is biased towards 0"
        ));
    }
    let ratios: Vec<f64> = n_sequence.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    if ratios.iter().any(|r| (r - ratios[0]).abs() > 1e-12 * ratios[0]) {
        warnings.push("n sequence is not geometric".into());
    }
    let mut points = Vec::with_capacity(n_sequence.len());
    for &n in n_sequence {
        let solver = SchemeSolver::new(model, kernel, n, settings.refinement, settings.horizon)?.with_mode(settings.mode);
        let samples = run_ensemble(settings.first_path, settings.paths, |p| {
            let run = solver.coupled(SeedSpec::driving(settings.master_seed, p))?;
            let (x, y) = (&run.reference.states, &run.coarse.states);
            let mut sup: f64 = 0.0;
            let mut last = 0.0;
            for (rx, ry) in x.rows().into_iter().zip(y.rows()) {
                last = rx.iter().zip(ry.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                sup = sup.max(last);
            }
            Ok((sup, last))
        })?;
        let sup: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let term: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let (s, t) = (mean_estimate(&sup), mean_estimate(&term));
        points.push(RatePoint {
            n,
            sup_mean: s.mean,
            sup_std_error: s.std_error,
            terminal_mean: t.mean,
            terminal_std_error: t.std_error,
        });
    }
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let sups: Vec<f64> = points.iter().map(|p| p.sup_mean).collect();
    let terms: Vec<f64> = points.iter().map(|p| p.terminal_mean).collect();
    let exact_zero = sups.iter().all(|&v| v == 0.0);
    let fit = loglog_fit(&ns, &sups);
    if fit.is_none() && !exact_zero {
        warnings.push("some errors vanish exactly; slope not fitted".into());
    }
    Ok(RateReport {
        h,
        refinement: settings.refinement,
        paths: settings.paths,
        points,
        slope: fit.map(|f| f.slope),
        slope_std_error: fit.map(|f| f.slope_std_error),
        slope_ci95: fit.map(|f| (f.slope - 1.96 * f.slope_std_error, f.slope + 1.96 * f.slope_std_error)),
        terminal_slope: loglog_fit(&ns, &terms).map(|f| f.slope),
        target_slope: -h,
        tolerance,
        proxy_bias_bound,
        exact_zero,
        warnings,
    })
}
