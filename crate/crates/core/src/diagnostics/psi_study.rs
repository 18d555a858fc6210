use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{add_vectors, check_sequence, ensemble_reduce, EnsembleSettings};
use crate::engine::{psi_decompose_with_table, DiagonalKernel, ModelSpec, SchemeSolver};
use crate::error::{Result, SveError};
use crate::paths::SeedSpec;
use crate::stats::loglog_fit;

const TERMS: [&str; 5] = ["psi1", "psi2", "psi5", "psi6", "psi3_plus_psi4"];

/// `n^H max_s ‖ψ_s‖_{L²}` for one term across the `n` sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiPoint {
    pub term: String,
    pub values: Vec<f64>,
    pub slope: Option<f64>,
    /// Decay order from the vanishing argument; `None` for the non-vanishing noise term.
    pub theoretical_slope: Option<f64>,
    pub all_zero: bool,
    pub strictly_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiStudyReport {
    pub h: f64,
    pub h_bar: f64,
    pub h_hat: f64,
    pub n_sequence: Vec<usize>,
    pub refinement: usize,
    pub paths: usize,
    pub terms: Vec<PsiPoint>,
    /// Largest pathwise deviation of the six-term sum from `X̂_s − X̂_{[ns]/n}`.
    pub max_identity_residual: f64,
    pub identity_tolerance: f64,
    pub warnings: Vec<String>,
}

impl PsiStudyReport {
    pub fn term(&self, name: &str) -> Option<&PsiPoint> {
        self.terms.iter().find(|t| t.term == name)
    }

    /// Identity within tolerance and every vanishing term zero or strictly decreasing.
    pub fn passed(&self) -> bool {
        self.max_identity_residual <= self.identity_tolerance
            && self
                .terms
                .iter()
                .filter(|t| t.theoretical_slope.is_some())
                .all(|t| t.all_zero || t.strictly_decreasing)
    }
}

/// Squared component norm of `Σ_j a[k, i, j]` for each fine time `k`.
fn squared_norms(out: &mut [f64], arrays: &[&Array3<f64>]) {
    let (len, d, m) = arrays[0].dim();
    for k in 0..len {
        let mut s = 0.0;
        for i in 0..d {
            let mut v = 0.0;
            for a in arrays {
                for j in 0..m {
                    v += a[[k, i, j]];
                }
            }
            s += v * v;
        }
        out[k] = s;
    }
}

pub fn psi_vanishing_study(
    model: &ModelSpec,
    kernel: &DiagonalKernel,
    n_sequence: &[usize],
    settings: &EnsembleSettings,
    identity_tolerance: f64,
) -> Result<PsiStudyReport> {
    settings.validate()?;
    check_sequence(n_sequence, 2)?;
    let h = kernel.h;
    let h_hat = kernel.components.iter().map(|c| c.hurst_hat).fold(f64::INFINITY, f64::min);
    let mut warnings = Vec::new();
    if !kernel.has_perturbation() {
        warnings.push("kernel has no perturbation; psi5 and psi6 vanish identically".into());
    }
    let mut stats = vec![Vec::with_capacity(n_sequence.len()); TERMS.len()];
    let mut max_identity_residual: f64 = 0.0;
    for &n in n_sequence {
        let solver = SchemeSolver::new(model, kernel, n, settings.refinement, settings.horizon)?.with_mode(settings.mode);
        let len = solver.fine_steps() + 1;
        let reduced = ensemble_reduce(
            settings.first_path,
            settings.paths,
            |p| {
                let w = solver.brownian(SeedSpec::driving(settings.master_seed, p))?;
                let coarse = solver.euler(&w)?;
                let psi = psi_decompose_with_table(model, kernel, solver.table(), &coarse, &w, n)?;
                let mut sq = vec![0.0; TERMS.len() * len];
                let drift = |a: &ndarray::Array2<f64>| a.clone().insert_axis(ndarray::Axis(2));
                let (p1, p2) = (drift(&psi.psi1), drift(&psi.psi2));
                squared_norms(&mut sq[..len], &[&p1]);
                squared_norms(&mut sq[len..2 * len], &[&p2]);
                squared_norms(&mut sq[2 * len..3 * len], &[&psi.psi5]);
                squared_norms(&mut sq[3 * len..4 * len], &[&psi.psi6]);
                squared_norms(&mut sq[4 * len..], &[&psi.psi3, &psi.psi4]);
                Ok((sq, psi.identity_residual(&coarse)))
            },
            |(a, ra), (b, rb)| (add_vectors(a, b), ra.max(rb)),
        )?
        .ok_or_else(|| SveError::Contract("empty ensemble".into()))?;
        let (sums, residual) = reduced;
        max_identity_residual = max_identity_residual.max(residual);
        let scale = (n as f64).powf(h);
        for (t, chunk) in sums.chunks(len).enumerate() {
            let worst = chunk.iter().fold(0.0f64, |m, s| m.max(*s));
            stats[t].push(scale * (worst / settings.paths as f64).sqrt());
        }
    }
    let h_bar = kernel.h_bar();
    let orders = [Some(h - h_bar), Some(-0.5), Some(h - h_hat), Some(h - h_hat), None];
    let ns: Vec<f64> = n_sequence.iter().map(|&n| n as f64).collect();
    let terms = TERMS
        .iter()
        .zip(stats)
        .zip(orders)
        .map(|((name, values), theoretical_slope)| PsiPoint {
            term: (*name).to_string(),
            slope: loglog_fit(&ns, &values).map(|f| f.slope),
            theoretical_slope,
            all_zero: values.iter().all(|&v| v == 0.0),
            strictly_decreasing: values.windows(2).all(|w| w[1] < w[0]),
            values,
        })
        .collect();
    Ok(PsiStudyReport {
        h,
        h_bar,
        h_hat,
        n_sequence: n_sequence.to_vec(),
        refinement: settings.refinement,
        paths: settings.paths,
        terms,
        max_identity_residual,
        identity_tolerance,
        warnings,
    })
}
