use serde::{Deserialize, Serialize};

use super::{add_vectors, ensemble_reduce, EnsembleSettings};
use crate::engine::{DiagonalKernel, ModelSpec, SchemeSolver};
use crate::error::{Result, SveError};
use crate::paths::SeedSpec;
use crate::stats::loglog_fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub h: f64,
    pub p: u32,
    pub n: usize,
    pub refinement: usize,
    pub paths: usize,
    /// Lags `|t − s|` in time units (dyadic multiples of the fine step).
    pub lags: Vec<f64>,
    /// `E|X̂_t − X̂_s|^p`, averaged over paths and start points.
    pub moments: Vec<f64>,
    pub slope: Option<f64>,
    pub slope_std_error: Option<f64>,
    /// `H·p`.
    pub target_slope: f64,
    /// `H·p − 0.15·p`.
    pub threshold: f64,
    pub warnings: Vec<String>,
}

impl HolderReport {
    pub fn passed(&self) -> bool {
        self.slope.is_some_and(|s| s >= self.threshold)
    }
}

/// Log-log regression of increment moments of the coarse scheme against the lag.
pub fn holder_scaling_study(
    model: &ModelSpec,
    kernel: &DiagonalKernel,
    n: usize,
    settings: &EnsembleSettings,
    p: u32,
) -> Result<HolderReport> {
    settings.validate()?;
    if p != 2 && p != 4 {
        return Err(SveError::Contract(format!("moment order p = {p} must be 2 or 4")));
    }
    let solver = SchemeSolver::new(model, kernel, n, settings.refinement, settings.horizon)?.with_mode(settings.mode);
    let fine = solver.fine_steps();
    let lag_steps: Vec<usize> = (0..).map(|a| 1usize << a).take_while(|&l| 4 * l <= fine).collect();
    if lag_steps.len() < 2 {
        return Err(SveError::Contract(format!("{fine} fine steps leave fewer than two dyadic lags")));
    }
    let mut warnings = Vec::new();
    let span = *lag_steps.last().expect("nonempty") as f64;
    if span < 100.0 {
        warnings.push(format!("lags span only {span} fine steps, less than two decades"));
    }
    let sums = ensemble_reduce(
        settings.first_path,
        settings.paths,
        |path| {
            let w = solver.brownian(SeedSpec::driving(settings.master_seed, path))?;
            let x = solver.euler(&w)?.states;
            Ok(lag_steps
                .iter()
                .map(|&lag| {
                    let mut s = 0.0;
                    for k in 0..=fine - lag {
                        let sq: f64 = x.row(k + lag).iter().zip(x.row(k).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                        s += sq.powi(p as i32 / 2);
                    }
                    s / (fine - lag + 1) as f64
                })
                .collect::<Vec<f64>>())
        },
        add_vectors,
    )?
    .unwrap_or_default();
    let dt = settings.horizon / fine as f64;
    let lags: Vec<f64> = lag_steps.iter().map(|&l| l as f64 * dt).collect();
    let moments: Vec<f64> = sums.iter().map(|s| s / settings.paths as f64).collect();
    let fit = loglog_fit(&lags, &moments);
    let pf = f64::from(p);
    Ok(HolderReport {
        h: kernel.h,
        p,
        n,
        refinement: settings.refinement,
        paths: settings.paths,
        lags,
        moments,
        slope: fit.map(|f| f.slope),
        slope_std_error: fit.map(|f| f.slope_std_error),
        target_slope: kernel.h * pf,
        threshold: (kernel.h - 0.15) * pf,
        warnings,
    })
}
