use ndarray::{Array2, ArrayView2};
use statrs::function::gamma::gamma;

use super::convolve::{Stepper, VolterraConvolver};
use super::model::ModelSpec;
use super::scheme::{SchemeKind, SchemePath, SingularCellMode};
use crate::error::{Result, SveError};
use crate::kernels::{build_weight_table, DiagonalKernel, WeightTable};
use crate::paths::BrownianGrid;

/// `Γ(H+1/2) / √(Γ(2H+2) sin πH)`.
pub fn kappa(h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(SveError::Domain(format!("kappa needs H in (0,1), got {h}")));
    }
    Ok(gamma(h + 0.5) / (gamma(2.0 * h + 2.0) * (std::f64::consts::PI * h).sin()).sqrt())
}

struct LimitStepper<'a> {
    model: &'a ModelSpec,
    x: ArrayView2<'a, f64>,
    dw: ArrayView2<'a, f64>,
    db: ArrayView2<'a, f64>,
    coef: &'a [f64],
    kappa: f64,
    inv_dt: f64,
    sigma: Vec<f64>,
    jb: Vec<f64>,
    js: Vec<f64>,
}

impl Stepper for LimitStepper<'_> {
    fn step(&mut self, k: usize, states: &[f64], input: &mut [f64], _next: &mut [f64]) {
        let (d, m) = (self.model.d, self.model.m);
        let x = self.x.row(k).to_vec();
        let u = &states[k * d..(k + 1) * d];
        self.model.diffusion(&x, &mut self.sigma);
        self.model.drift_jacobian(&x, &mut self.jb);
        self.model.diffusion_jacobian(&x, &mut self.js);
        for i in 0..d {
            let mut drift = 0.0;
            let mut noise = 0.0;
            let mut forcing = 0.0;
            for kk in 0..d {
                drift += u[kk] * self.jb[i * d + kk];
                for j in 0..m {
                    let ds = self.js[(i * m + j) * d + kk];
                    noise += u[kk] * ds * self.dw[[k, j]];
                    if ds != 0.0 {
                        let mut s = 0.0;
                        for l in 0..m {
                            s += self.sigma[kk * m + l] * self.db[[k, l * m + j]];
                        }
                        forcing += self.coef[kk] * ds * s;
                    }
                }
            }
            input[i] = drift + (noise - self.kappa * forcing) * self.inv_dt;
        }
    }
}

/// Explicit scheme for the linear limit equation on a fixed fine grid.
#[derive(Debug)]
pub struct LimitSolver {
    pub model: ModelSpec,
    pub kernel: DiagonalKernel,
    pub steps: usize,
    pub horizon: f64,
    table: WeightTable,
    conv: VolterraConvolver,
}

impl LimitSolver {
    pub fn new(model: &ModelSpec, kernel: &DiagonalKernel, steps: usize, horizon: f64) -> Result<Self> {
        model.validate(true)?;
        if model.d != kernel.dim() {
            return Err(SveError::Contract("model and kernel dimensions differ".into()));
        }
        let table = build_weight_table(kernel, steps, 1, horizon)?;
        let conv = VolterraConvolver::new(&table.full, steps + 1)?;
        Ok(Self { model: model.clone(), kernel: kernel.clone(), steps, horizon, table, conv })
    }

    /// `x` is a reference path, `w` its driving noise and `b` an independent
    /// `m²`-dimensional noise with coordinate `l·m + j` for `B^{l,j}`.
    pub fn solve(&self, x: &SchemePath, w: &BrownianGrid, b: &BrownianGrid, kappa: f64) -> Result<SchemePath> {
        let (d, m) = (self.model.d, self.model.m);
        if x.fine_steps() != self.steps || w.n_steps != self.steps || b.n_steps != self.steps {
            return Err(SveError::Contract("limit inputs must share the solver grid".into()));
        }
        if w.m != m || b.m != m * m || x.states.ncols() != d {
            return Err(SveError::Contract(format!("limit needs W with m = {m} and B with m² = {}", m * m)));
        }
        let mut stepper = LimitStepper {
            model: &self.model,
            x: x.states.view(),
            dw: w.increments.view(),
            db: b.increments.view(),
            coef: &self.table.coefficients,
            kappa,
            inv_dt: 1.0 / self.table.dt,
            sigma: vec![0.0; d * m],
            jb: vec![0.0; d * d],
            js: vec![0.0; d * m * d],
        };
        let states = self.conv.run(&vec![0.0; d], &mut stepper)?;
        Ok(SchemePath {
            times: x.times.clone(),
            states: Array2::from_shape_vec((self.steps + 1, d), states).expect("shape matches"),
            scheme: SchemeKind::Limit,
            mode: SingularCellMode::CellAverage,
            seed: b.seed,
        })
    }
}

pub fn limit_solve(
    model: &ModelSpec,
    kernel: &DiagonalKernel,
    x: &SchemePath,
    w: &BrownianGrid,
    b: &BrownianGrid,
    kappa: f64,
) -> Result<SchemePath> {
    LimitSolver::new(model, kernel, x.fine_steps(), w.horizon)?.solve(x, w, b, kappa)
}
