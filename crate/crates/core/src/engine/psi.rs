use ndarray::{Array2, Array3};

use super::convolve::convolve_known;
use super::model::ModelSpec;
use super::scheme::{SchemeKind, SchemePath, SingularCellMode};
use crate::error::{Result, SveError};
use crate::kernels::{build_weight_table, DiagonalKernel, WeightTable};
use crate::paths::{BrownianGrid, SingularCellFactor};

/// Split of `X̂_s − X̂_{[ns]/n}` into drift terms (ψ₁, ψ₂), power-part noise
/// terms (ψ₃, ψ₄) and perturbation noise terms (ψ₅, ψ₆).
///
/// Odd terms collect cells before the current coarse time, even terms the
/// cells inside the current coarse interval. Arrays are indexed by fine
/// time, component and (for the noise terms) Brownian coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiDecomposition {
    pub n: usize,
    pub refinement: usize,
    pub psi1: Array2<f64>,
    pub psi2: Array2<f64>,
    pub psi3: Array3<f64>,
    pub psi4: Array3<f64>,
    pub psi5: Array3<f64>,
    pub psi6: Array3<f64>,
}

impl PsiDecomposition {
    /// `ψ₁ + ψ₂ + Σ_j (ψ₃ + ψ₄ + ψ₅ + ψ₆)` per fine time and component.
    pub fn total(&self) -> Array2<f64> {
        let mut out = &self.psi1 + &self.psi2;
        let (len, d, m) = self.psi3.dim();
        for k in 0..len {
            for i in 0..d {
                for j in 0..m {
                    out[[k, i]] += self.psi3[[k, i, j]] + self.psi4[[k, i, j]] + self.psi5[[k, i, j]] + self.psi6[[k, i, j]];
                }
            }
        }
        out
    }

    /// Largest deviation of [`Self::total`] from `X̂_s − X̂_{[ns]/n}`.
    pub fn identity_residual(&self, coarse: &SchemePath) -> f64 {
        let total = self.total();
        let mut worst: f64 = 0.0;
        for k in 0..total.nrows() {
            let q = (k / self.refinement) * self.refinement;
            for i in 0..total.ncols() {
                let lhs = coarse.states[[k, i]] - coarse.states[[q, i]];
                worst = worst.max((lhs - total[[k, i]]).abs());
            }
        }
        worst
    }
}

pub fn psi_decompose(
    model: &ModelSpec,
    kernel: &DiagonalKernel,
    coarse: &SchemePath,
    w: &BrownianGrid,
    n: usize,
) -> Result<PsiDecomposition> {
    let fine = coarse.fine_steps();
    if n == 0 || !fine.is_multiple_of(n) {
        return Err(SveError::Contract(format!("fine grid of {fine} steps is not a refinement of n = {n}")));
    }
    let table = build_weight_table(kernel, n, fine / n, w.horizon)?;
    psi_decompose_with_table(model, kernel, &table, coarse, w, n)
}

/// As [`psi_decompose`] with a weight table built for the same `(kernel, n, M, T)`.
pub fn psi_decompose_with_table(
    model: &ModelSpec,
    kernel: &DiagonalKernel,
    table: &WeightTable,
    coarse: &SchemePath,
    w: &BrownianGrid,
    n: usize,
) -> Result<PsiDecomposition> {
    let fine = coarse.fine_steps();
    if coarse.scheme != (SchemeKind::CoarseFrozen { n }) {
        return Err(SveError::Contract(format!("ψ needs a path of the coarse scheme with n = {n}")));
    }
    if w.n_steps != fine || w.m != model.m || coarse.states.ncols() != kernel.dim() || model.d != kernel.dim() {
        return Err(SveError::Contract("ψ inputs disagree on grid or dimensions".into()));
    }
    if table.fine_steps != fine || table.n != n {
        return Err(SveError::Contract("weight table does not match the path grid".into()));
    }
    let refinement = fine / n;
    let (d, m) = (model.d, model.m);
    let dt = table.dt;
    let len = fine + 1;

    let mut b_frozen = vec![0.0; fine * d];
    let mut s_frozen = vec![0.0; fine * d * m];
    for q in (0..fine).step_by(refinement) {
        let x = coarse.states.row(q).to_vec();
        let mut b = vec![0.0; d];
        let mut s = vec![0.0; d * m];
        model.drift(&x, &mut b);
        model.diffusion(&x, &mut s);
        for j in q..q + refinement {
            b_frozen[j * d..(j + 1) * d].copy_from_slice(&b);
            s_frozen[j * d * m..(j + 1) * d * m].copy_from_slice(&s);
        }
    }
    let floor = |k: usize| (k / refinement) * refinement;
    let exact = if coarse.mode == SingularCellMode::Exact {
        let aux = w
            .auxiliary
            .as_ref()
            .ok_or_else(|| SveError::Contract("exact-mode path needs the auxiliary normals".into()))?;
        Some((aux, SingularCellFactor::new(kernel.h, dt)?.l22))
    } else {
        None
    };

    let mut psi1 = Array2::zeros((len, d));
    let mut psi2 = Array2::zeros((len, d));
    let mut psi3 = Array3::zeros((len, d, m));
    let mut psi4 = Array3::zeros((len, d, m));
    let mut psi5 = Array3::zeros((len, d, m));
    let mut psi6 = Array3::zeros((len, d, m));

    for i in 0..d {
        let full = &table.full[i];
        let power = &table.unit_power[i];
        let pert = &table.perturbation[i];
        let c = table.coefficients[i];

        let b: Vec<f64> = (0..fine).map(|j| b_frozen[j * d + i]).collect();
        let conv_b = convolve_known(full, &b);
        let mut cum = vec![0.0; len];
        for r in 1..len {
            cum[r] = cum[r - 1] + full[r];
        }
        for k in 0..len {
            let q = floor(k);
            if k == q {
                continue;
            }
            let local = b[q] * cum[k - q];
            psi2[[k, i]] = local;
            psi1[[k, i]] = conv_b[k] - local - conv_b[q];
        }

        for l in 0..m {
            let sig: Vec<f64> = (0..fine).map(|j| s_frozen[(j * d + i) * m + l]).collect();
            let noise: Vec<f64> = (0..fine).map(|j| sig[j] * w.increments[[j, l]] / dt).collect();
            let conv_p = convolve_known(power, &noise);
            let conv_q = convolve_known(pert, &noise);
            let corr = |k: usize| match &exact {
                Some((aux, l22)) if k > 0 => c * sig[k - 1] * l22 * aux[[k - 1, l]],
                _ => 0.0,
            };
            for k in 0..len {
                let q = floor(k);
                if k == q {
                    continue;
                }
                let (mut loc_p, mut loc_q) = (0.0, 0.0);
                for j in q..k {
                    loc_p += power[k - j] * noise[j];
                    loc_q += pert[k - j] * noise[j];
                }
                psi4[[k, i, l]] = c * loc_p + corr(k);
                psi3[[k, i, l]] = c * (conv_p[k] - loc_p - conv_p[q]) - corr(q);
                psi6[[k, i, l]] = loc_q;
                psi5[[k, i, l]] = conv_q[k] - loc_q - conv_q[q];
            }
        }
    }
    Ok(PsiDecomposition { n, refinement, psi1, psi2, psi3, psi4, psi5, psi6 })
}
