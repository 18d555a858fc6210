use serde::{Deserialize, Serialize};

use super::{check_sequence, entrywise_mean_se, grid_index, run_ensemble, EnsembleSettings};
use crate::engine::{kappa, DiagonalKernel, ModelSpec, SchemePath, SchemeSolver};
use crate::error::{Result, SveError};
use crate::paths::SeedSpec;
use crate::stats::is_symmetric_psd;

/// Single-path quantities at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct QvPathEstimate {
    /// `n^{2H} ∫_0^t ΔX̂^{k1} ΔX̂^{k2} ds`, row-major `d×d`.
    pub covariation: Vec<f64>,
    /// `n^H ∫_0^t ΔX̂^k ds`, i.e. `⟨V^{n,k,j}, W^j⟩_t`.
    pub cross: Vec<f64>,
}

/// Integrals of `ΔX̂_s = X̂_s − X̂_{[ns]/n}` up to fine index `t_index`.
///
/// Each coarse cell is integrated by the trapezoid rule with the left limit
/// `X̂_{q+M} − X̂_q` at its right end, which is exact for piecewise-linear
/// interpolation of `ΔX̂` inside the cell.
pub fn qv_path(coarse: &SchemePath, n: usize, h: f64, t_index: usize) -> Result<QvPathEstimate> {
    let fine = coarse.fine_steps();
    if n == 0 || !fine.is_multiple_of(n) || t_index > fine || !t_index.is_multiple_of(fine / n) {
        return Err(SveError::Contract("QV time must be a coarse grid point".into()));
    }
    let refinement = fine / n;
    let d = coarse.states.ncols();
    let dt = coarse.times[1] - coarse.times[0];
    let mut cov = vec![0.0; d * d];
    let mut cross = vec![0.0; d];
    let mut left = vec![0.0; d];
    let mut right = vec![0.0; d];
    for i in 0..t_index {
        let q = (i / refinement) * refinement;
        for k in 0..d {
            left[k] = coarse.states[[i, k]] - coarse.states[[q, k]];
            right[k] = coarse.states[[i + 1, k]] - coarse.states[[q, k]];
            cross[k] += 0.5 * (left[k] + right[k]);
        }
        for a in 0..d {
            for b in a..d {
                cov[a * d + b] += 0.5 * (left[a] * left[b] + right[a] * right[b]);
            }
        }
    }
    let nh = (n as f64).powf(h);
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] * dt * nh * nh;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    cross.iter_mut().for_each(|c| *c *= dt * nh);
    Ok(QvPathEstimate { covariation: cov, cross })
}

/// `κ² c_{k1} c_{k2} Σ_l ∫_0^t σ^{k1}_l(X_s) σ^{k2}_l(X_s) ds` along one path (trapezoid rule).
fn qv_theory_path(model: &ModelSpec, coef: &[f64], kap: f64, reference: &SchemePath, t_index: usize) -> Vec<f64> {
    let (d, m) = (model.d, model.m);
    let dt = reference.times[1] - reference.times[0];
    let mut sig = vec![0.0; d * m];
    let mut out = vec![0.0; d * d];
    let mut prev = vec![0.0; d * d];
    for i in 0..=t_index {
        let x = reference.states.row(i).to_vec();
        model.diffusion(&x, &mut sig);
        let mut cur = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                cur[a * d + b] = (0..m).map(|l| sig[a * m + l] * sig[b * m + l]).sum();
            }
        }
        if i > 0 {
            for e in 0..d * d {
                out[e] += 0.5 * (prev[e] + cur[e]) * dt;
            }
        }
        prev = cur;
    }
    for a in 0..d {
        for b in 0..d {
            out[a * d + b] *= kap * kap * coef[a] * coef[b];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvPoint {
    pub n: usize,
    pub estimate: Vec<f64>,
    pub estimate_std_error: Vec<f64>,
    pub theory: Vec<f64>,
    pub theory_std_error: Vec<f64>,
    /// Standard error of the paired difference estimate − theory.
    pub difference_std_error: Vec<f64>,
    /// `|estimate − theory| / |theory|`; `None` where the theory vanishes.
    pub relative_error: Vec<Option<f64>>,
    /// Each entry within `max(rel_tol·|theory|, 3·SE)`.
    pub within_tolerance: bool,
    pub psd: bool,
    /// Mean of `|⟨V^{n,k,j}, W^j⟩_t|` per component.
    pub cross_l1: Vec<f64>,
    pub cross_l1_std_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvReport {
    pub d: usize,
    pub h: f64,
    pub kappa: f64,
    pub t: f64,
    pub refinement: usize,
    pub paths: usize,
    pub rel_tol: f64,
    pub points: Vec<QvPoint>,
    /// Cross-variation L¹ norm at the last `n` below the first, per component.
    pub cross_decreasing: bool,
    pub warnings: Vec<String>,
}

impl QvReport {
    /// Relative error of entry `(0,0)` at the largest `n`.
    pub fn headline_relative_error(&self) -> Option<f64> {
        self.points.last().and_then(|p| p.relative_error[0])
    }

    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.within_tolerance && p.psd)
    }
}

pub fn qv_convergence(
    model: &ModelSpec,
    kernel: &DiagonalKernel,
    n_sequence: &[usize],
    settings: &EnsembleSettings,
    t: f64,
    rel_tol: f64,
) -> Result<QvReport> {
    settings.validate()?;
    check_sequence(n_sequence, 1)?;
    let h = kernel.h;
    let kap = kappa(h)?;
    let d = model.d;
    let mut warnings = Vec::new();
    if settings.paths < 100 {
        warnings.push(format!("only {} paths; Monte Carlo error may dominate", settings.paths));
    }
    let mut points = Vec::new();
    for &n in n_sequence {
        let solver = SchemeSolver::new(model, kernel, n, settings.refinement, settings.horizon)?.with_mode(settings.mode);
        let t_index = grid_index(t, settings.horizon, n)
            .ok_or_else(|| SveError::Contract(format!("t = {t} is not a coarse grid point for n = {n}")))?
            * settings.refinement;
        let coef = solver.table().coefficients.clone();
        let samples = run_ensemble(settings.first_path, settings.paths, |p| {
            let run = solver.coupled(SeedSpec::driving(settings.master_seed, p))?;
            let est = qv_path(&run.coarse, n, h, t_index)?;
            let theory = qv_theory_path(model, &coef, kap, &run.reference, t_index);
            Ok((est, theory))
        })?;
        let est: Vec<Vec<f64>> = samples.iter().map(|(e, _)| e.covariation.clone()).collect();
        let th: Vec<Vec<f64>> = samples.iter().map(|(_, t)| t.clone()).collect();
        let diff: Vec<Vec<f64>> = est.iter().zip(&th).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
        let cross: Vec<Vec<f64>> = samples.iter().map(|(e, _)| e.cross.iter().map(|c| c.abs()).collect()).collect();
        let (estimate, estimate_std_error) = entrywise_mean_se(&est);
        let (theory, theory_std_error) = entrywise_mean_se(&th);
        let (_, difference_std_error) = entrywise_mean_se(&diff);
        let (cross_l1, cross_l1_std_error) = entrywise_mean_se(&cross);
        let relative_error: Vec<Option<f64>> = estimate
            .iter()
            .zip(&theory)
            .map(|(e, t)| (*t != 0.0).then(|| ((e - t) / t).abs()))
            .collect();
        let within_tolerance = (0..d * d).all(|e| {
            let gap = (estimate[e] - theory[e]).abs();
            gap <= (rel_tol * theory[e].abs()).max(3.0 * difference_std_error[e])
        });
        let psd = is_symmetric_psd(&estimate, d, 1e-12);
        points.push(QvPoint {
            n,
            estimate,
            estimate_std_error,
            theory,
            theory_std_error,
            difference_std_error,
            relative_error,
            within_tolerance,
            psd,
            cross_l1,
            cross_l1_std_error,
        });
    }
    let cross_decreasing = match (points.first(), points.last()) {
        (Some(a), Some(b)) if points.len() > 1 => {
            a.cross_l1.iter().zip(&b.cross_l1).all(|(x, y)| y < x || (*x == 0.0 && *y == 0.0))
        }
        _ => false,
    };
    Ok(QvReport {
        d,
        h,
        kappa: kap,
        t,
        refinement: settings.refinement,
        paths: settings.paths,
        rel_tol,
        points,
        cross_decreasing,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::DiffusionField;

    #[test]
    fn brownian_expectation_is_one_half() {
        let model = ModelSpec::constant(vec![0.0], 1, vec![0.0], vec![1.0]);
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.5).unwrap();
        let settings = EnsembleSettings::new(1.0, 4, 400, 1);
        let r = qv_convergence(&model, &kernel, &[8, 32], &settings, 1.0, 0.1).unwrap();
        for p in &r.points {
            assert!((p.theory[0] - 0.5).abs() < 1e-14);
            assert!((p.estimate[0] - 0.5).abs() < 4.0 * p.estimate_std_error[0], "{p:?}");
        }
        assert!(r.passed());
    }

    #[test]
    fn zero_diffusion_gives_zero() {
        let model = ModelSpec::constant(vec![1.0], 1, vec![0.0], vec![0.0]);
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.3).unwrap();
        let r = qv_convergence(&model, &kernel, &[4], &EnsembleSettings::new(1.0, 4, 10, 1), 1.0, 0.1).unwrap();
        assert_eq!(r.points[0].theory, vec![0.0]);
        assert_eq!(r.points[0].estimate, vec![0.0]);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn scaling_sigma_by_two_scales_by_four() {
        let kernel = DiagonalKernel::fractional(2, 1.0, 0.4).unwrap();
        let base = ModelSpec::constant(vec![0.0, 0.0], 2, vec![0.0, 0.0], vec![1.0, 0.3, -0.2, 0.8]);
        let scaled = ModelSpec { diffusion: DiffusionField::Constant { sigma: vec![2.0, 0.6, -0.4, 1.6] }, ..base.clone() };
        let s = EnsembleSettings::new(1.0, 4, 20, 9);
        let a = qv_convergence(&base, &kernel, &[8], &s, 1.0, 0.1).unwrap();
        let b = qv_convergence(&scaled, &kernel, &[8], &s, 1.0, 0.1).unwrap();
        for e in 0..4 {
            assert!((4.0 * a.points[0].estimate[e] - b.points[0].estimate[e]).abs() < 1e-10);
            assert!((4.0 * a.points[0].theory[e] - b.points[0].theory[e]).abs() < 1e-12);
        }
        let p = &a.points[0];
        assert_eq!(p.estimate[1], p.estimate[2]);
        assert!(p.psd);
    }

    #[test]
    fn time_must_be_on_the_coarse_grid() {
        let model = ModelSpec::scalar_affine_trig(0.0, 2.0, 1.0);
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.5).unwrap();
        assert!(qv_convergence(&model, &kernel, &[4], &EnsembleSettings::new(1.0, 2, 4, 0), 0.3, 0.1).is_err());
    }
}
