use serde::{Deserialize, Serialize};

use super::{grid_index, run_ensemble};
use crate::engine::{kappa, DiagonalKernel, LimitSolver, ModelSpec, SchemeSolver, SingularCellMode};
use crate::error::{Result, SveError};
use crate::paths::{generate_brownian, SeedSpec, StreamTag};
use crate::stats::{covariance_matrix, ks_threshold_5pct, ks_two_sample, mean_estimate, relative_frobenius, variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLawSettings {
    pub n: usize,
    pub refinement: usize,
    pub horizon: f64,
    pub paths_scheme: usize,
    pub paths_limit: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub first_path: u64,
    /// Marginal comparison time; must be a coarse grid point.
    pub t: f64,
    /// Fine steps of the limit solver; defaults to `n·M`.
    #[serde(default)]
    pub limit_steps: Option<usize>,
    #[serde(default)]
    pub mode: SingularCellMode,
    /// Allowed relative difference of the marginal variances.
    pub variance_tolerance: f64,
}

impl LimitLawSettings {
    pub fn new(n: usize, refinement: usize, paths_scheme: usize, paths_limit: usize, master_seed: u64) -> Self {
        Self {
            n,
            refinement,
            horizon: 1.0,
            paths_scheme,
            paths_limit,
            master_seed,
            first_path: 0,
            t: 1.0,
            limit_steps: None,
            mode: SingularCellMode::CellAverage,
            variance_tolerance: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsCheck {
    pub statistic: f64,
    pub threshold: f64,
    pub below_threshold: bool,
}

impl KsCheck {
    fn new(a: &[f64], b: &[f64]) -> Self {
        let statistic = ks_two_sample(a, b);
        let threshold = ks_threshold_5pct(a.len(), b.len());
        Self { statistic, threshold, below_threshold: statistic <= threshold }
    }
}

/// Marginal comparison of one component at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentLaw {
    pub component: usize,
    pub scheme_mean: f64,
    pub scheme_mean_std_error: f64,
    pub limit_mean: f64,
    pub limit_mean_std_error: f64,
    pub scheme_variance: f64,
    pub limit_variance: f64,
    /// `|Var U^n − Var U| / Var U`; absolute difference when `Var U = 0`.
    pub variance_relative_difference: f64,
    pub ks: KsCheck,
    pub scheme_split_half: KsCheck,
    pub limit_split_half: KsCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLawReport {
    pub n: usize,
    pub refinement: usize,
    pub limit_steps: usize,
    pub h: f64,
    pub kappa: f64,
    pub t: f64,
    pub paths_scheme: usize,
    pub paths_limit: usize,
    /// Disjoint path-index ranges `[start, end)` of the two ensembles.
    pub scheme_path_range: (u64, u64),
    pub limit_path_range: (u64, u64),
    pub components: Vec<ComponentLaw>,
    /// Times at which the joint covariance is compared.
    pub covariance_times: Vec<f64>,
    pub scheme_covariance: Vec<f64>,
    pub limit_covariance: Vec<f64>,
    pub covariance_relative_frobenius: f64,
    pub variance_tolerance: f64,
    /// Terminal-marginal samples, kept for histogram plots.
    pub scheme_samples: Vec<Vec<f64>>,
    pub limit_samples: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl LimitLawReport {
    fn within(c: &ComponentLaw, tol: f64) -> bool {
        c.variance_relative_difference <= tol || (c.scheme_variance == 0.0 && c.limit_variance == 0.0)
    }

    pub fn variance_passed(&self) -> bool {
        self.components.iter().all(|c| Self::within(c, self.variance_tolerance))
    }

    /// Split-half KS of both ensembles below the 5% threshold.
    pub fn calibration_passed(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.scheme_split_half.below_threshold && c.limit_split_half.below_threshold)
    }

    pub fn passed(&self) -> bool {
        self.variance_passed() && self.calibration_passed()
    }
}

fn split_half(xs: &[f64]) -> KsCheck {
    let half = xs.len() / 2;
    if half == 0 {
        return KsCheck { statistic: 0.0, threshold: f64::INFINITY, below_threshold: true };
    }
    KsCheck::new(&xs[..half], &xs[half..])
}

pub fn limit_law_compare(model: &ModelSpec, kernel: &DiagonalKernel, s: &LimitLawSettings) -> Result<LimitLawReport> {
    if s.paths_scheme < 2 || s.paths_limit < 2 {
        return Err(SveError::Contract("both ensembles need at least two paths".into()));
    }
    let mut warnings = Vec::new();
    if s.paths_scheme < 500 || s.paths_limit < 500 {
        warnings.push(format!(
            "ensembles of {} and {} paths are below 500; KS thresholds are rough",
            s.paths_scheme, s.paths_limit
        ));
    }
    let (d, m) = (model.d, model.m);
    let fine = s.n * s.refinement;
    let limit_steps = s.limit_steps.unwrap_or(fine);
    let cov_times = vec![s.horizon / 4.0, s.horizon / 2.0, s.horizon];
    let locate = |steps: usize, what: &str| -> Result<Vec<usize>> {
        std::iter::once(s.t)
            .chain(cov_times.iter().copied())
            .map(|t| {
                grid_index(t, s.horizon, steps)
                    .ok_or_else(|| SveError::Contract(format!("t = {t} is not on the {what} grid of {steps} steps")))
            })
            .collect()
    };
    let coarse_idx = locate(s.n, "coarse")?;
    let limit_idx = locate(limit_steps, "limit")?;

    let h = kernel.h;
    let kap = kappa(h)?;
    let scheme = SchemeSolver::new(model, kernel, s.n, s.refinement, s.horizon)?.with_mode(s.mode);
    let scheme_range = (s.first_path, s.first_path + s.paths_scheme as u64);
    let scheme_rows = run_ensemble(scheme_range.0, s.paths_scheme, |p| {
        let run = scheme.coupled(SeedSpec::driving(s.master_seed, p))?;
        Ok(coarse_idx.iter().flat_map(|&q| run.error.values.row(q).to_vec()).collect::<Vec<f64>>())
    })?;

    let x_solver = SchemeSolver::new(model, kernel, limit_steps, 1, s.horizon)?;
    let u_solver = LimitSolver::new(model, kernel, limit_steps, s.horizon)?;
    let limit_range = (scheme_range.1, scheme_range.1 + s.paths_limit as u64);
    let limit_rows = run_ensemble(limit_range.0, s.paths_limit, |p| {
        let w = x_solver.brownian(SeedSpec::driving(s.master_seed, p))?;
        let x = x_solver.reference(&w)?;
        let b = generate_brownian(SeedSpec::new(s.master_seed, p, StreamTag::LimitB), m * m, limit_steps, s.horizon)?;
        let u = u_solver.solve(&x, &w, &b, kap)?;
        Ok(limit_idx.iter().flat_map(|&k| u.states.row(k).to_vec()).collect::<Vec<f64>>())
    })?;

    let column = |rows: &[Vec<f64>], c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let components = (0..d)
        .map(|i| {
            let a = column(&scheme_rows, i);
            let b = column(&limit_rows, i);
            let (ea, eb) = (mean_estimate(&a), mean_estimate(&b));
            let (va, vb) = (variance(&a), variance(&b));
            ComponentLaw {
                component: i,
                scheme_mean: ea.mean,
                scheme_mean_std_error: ea.std_error,
                limit_mean: eb.mean,
                limit_mean_std_error: eb.std_error,
                scheme_variance: va,
                limit_variance: vb,
                variance_relative_difference: if vb == 0.0 { (va - vb).abs() } else { ((va - vb) / vb).abs() },
                ks: KsCheck::new(&a, &b),
                scheme_split_half: split_half(&a),
                limit_split_half: split_half(&b),
            }
        })
        .collect();
    let tail = |rows: &[Vec<f64>]| rows.iter().map(|r| r[d..].to_vec()).collect::<Vec<_>>();
    let scheme_covariance = covariance_matrix(&tail(&scheme_rows));
    let limit_covariance = covariance_matrix(&tail(&limit_rows));
    let head = |rows: &[Vec<f64>]| rows.iter().map(|r| r[..d].to_vec()).collect::<Vec<_>>();
    Ok(LimitLawReport {
        n: s.n,
        refinement: s.refinement,
        limit_steps,
        h,
        kappa: kap,
        t: s.t,
        paths_scheme: s.paths_scheme,
        paths_limit: s.paths_limit,
        scheme_path_range: scheme_range,
        limit_path_range: limit_range,
        components,
        covariance_times: cov_times,
        covariance_relative_frobenius: relative_frobenius(&scheme_covariance, &limit_covariance),
        scheme_covariance,
        limit_covariance,
        variance_tolerance: s.variance_tolerance,
        scheme_samples: head(&scheme_rows),
        limit_samples: head(&limit_rows),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{DiffusionField, DriftField};

    #[test]
    fn constant_coefficients_give_zero_ensembles() {
        let model = ModelSpec::constant(vec![0.0], 1, vec![0.4], vec![1.5]);
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.4).unwrap();
        let r = limit_law_compare(&model, &kernel, &LimitLawSettings::new(8, 4, 20, 20, 1)).unwrap();
        let c = &r.components[0];
        assert_eq!((c.scheme_variance, c.limit_variance, c.ks.statistic), (0.0, 0.0, 0.0));
        assert_eq!(r.covariance_relative_frobenius, 0.0);
        assert!(r.passed());
        assert_eq!(r.scheme_path_range.1, r.limit_path_range.0);
    }

    #[test]
    fn constant_sigma_has_no_limit_forcing() {
        let model = ModelSpec::new(
            vec![0.0],
            1,
            DriftField::Tanh { a: vec![1.0] },
            DiffusionField::Constant { sigma: vec![1.0] },
        );
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.5).unwrap();
        let small = limit_law_compare(&model, &kernel, &LimitLawSettings::new(4, 4, 200, 10, 3)).unwrap();
        let large = limit_law_compare(&model, &kernel, &LimitLawSettings::new(16, 4, 200, 10, 3)).unwrap();
        assert_eq!(small.components[0].limit_variance, 0.0);
        assert!(large.components[0].scheme_variance < small.components[0].scheme_variance);
    }

    #[test]
    fn time_grid_is_checked() {
        let model = ModelSpec::scalar_affine_trig(0.0, 2.0, 1.0);
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.5).unwrap();
        let s = LimitLawSettings { t: 0.3, ..LimitLawSettings::new(8, 2, 4, 4, 0) };
        assert!(limit_law_compare(&model, &kernel, &s).is_err());
        let s = LimitLawSettings::new(2, 2, 4, 4, 0);
        assert!(limit_law_compare(&model, &kernel, &s).is_err());
    }
}
