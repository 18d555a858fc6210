use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::convolve::{Stepper, VolterraConvolver};
use super::model::ModelSpec;
use crate::error::{Result, SveError};
use crate::kernels::{build_weight_table, DiagonalKernel, WeightTable};
use crate::paths::{generate_brownian, BrownianGrid, SeedSpec, SingularCellFactor};

/// Treatment of the stochastic integral over the most recent fine cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularCellMode {
    /// Cell-averaged kernel against `ΔW` everywhere.
    #[default]
    CellAverage,
    /// Joint Gaussian simulation of the power-part integral over the last cell.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    CoarseFrozen { n: usize },
    FineReference,
    /// Solution of the limit equation for the rescaled error.
    Limit,
}

/// States on the fine grid, `(N+1)×d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemePath {
    pub times: Vec<f64>,
    pub states: Array2<f64>,
    pub scheme: SchemeKind,
    pub mode: SingularCellMode,
    pub seed: Option<SeedSpec>,
}

impl SchemePath {
    pub fn fine_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.states.row(self.fine_steps()).to_vec()
    }
}

/// `U^n = n^H (X − X̂)` at the coarse times, `(n+1)×d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPath {
    pub times: Vec<f64>,
    pub values: Array2<f64>,
    pub n: usize,
    pub refinement: usize,
    pub h: f64,
}

impl ErrorPath {
    pub fn from_paths(reference: &SchemePath, coarse: &SchemePath, n: usize, h: f64) -> Result<Self> {
        let fine = reference.fine_steps();
        if coarse.fine_steps() != fine || n == 0 || !fine.is_multiple_of(n) {
            return Err(SveError::Contract("reference and coarse paths live on different grids".into()));
        }
        let refinement = fine / n;
        let d = reference.states.ncols();
        let scale = (n as f64).powf(h);
        let mut values = Array2::zeros((n + 1, d));
        for q in 0..=n {
            for i in 0..d {
                let k = q * refinement;
                values[[q, i]] = scale * (reference.states[[k, i]] - coarse.states[[k, i]]);
            }
        }
        let times = (0..=n).map(|q| reference.times[q * refinement]).collect();
        Ok(Self { times, values, n, refinement, h })
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.values.row(self.n).to_vec()
    }
}

/// Reference path, coarse path and their rescaled difference on one Brownian path.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub brownian: BrownianGrid,
    pub reference: SchemePath,
    pub coarse: SchemePath,
    pub error: ErrorPath,
}

struct FrozenStepper<'a> {
    model: &'a ModelSpec,
    freeze: usize,
    dw: ArrayView2<'a, f64>,
    aux: Option<ArrayView2<'a, f64>>,
    inv_dt: f64,
    exact: Option<(&'a [f64], f64)>,
    b: Vec<f64>,
    sigma: Vec<f64>,
}

impl Stepper for FrozenStepper<'_> {
    fn step(&mut self, k: usize, states: &[f64], input: &mut [f64], next: &mut [f64]) {
        let (d, m) = (self.model.d, self.model.m);
        if k.is_multiple_of(self.freeze) {
            let x = &states[k * d..(k + 1) * d];
            self.model.drift(x, &mut self.b);
            self.model.diffusion(x, &mut self.sigma);
        }
        for i in 0..d {
            let mut noise = 0.0;
            for l in 0..m {
                noise += self.sigma[i * m + l] * self.dw[[k, l]];
            }
            input[i] = self.b[i] + noise * self.inv_dt;
        }
        if let (Some((coef, l22)), Some(aux)) = (self.exact, self.aux.as_ref()) {
            for i in 0..d {
                let mut s = 0.0;
                for l in 0..m {
                    s += self.sigma[i * m + l] * aux[[k, l]];
                }
                next[i] = coef[i] * l22 * s;
            }
        }
    }
}

/// Shared precomputation for all paths of one `(model, kernel, n, M, T)` setting.
#[derive(Debug)]
pub struct SchemeSolver {
    pub model: ModelSpec,
    pub kernel: DiagonalKernel,
    pub n: usize,
    pub refinement: usize,
    pub horizon: f64,
    pub mode: SingularCellMode,
    table: WeightTable,
    conv: VolterraConvolver,
    cell: SingularCellFactor,
}

impl SchemeSolver {
    pub fn new(model: &ModelSpec, kernel: &DiagonalKernel, n: usize, refinement: usize, horizon: f64) -> Result<Self> {
        model.validate(true)?;
        if model.d != kernel.dim() {
            return Err(SveError::Contract(format!(
                "model has d = {} but the kernel has {} components",
                model.d,
                kernel.dim()
            )));
        }
        let table = build_weight_table(kernel, n, refinement, horizon)?;
        let conv = VolterraConvolver::new(&table.full, table.fine_steps + 1)?;
        let cell = SingularCellFactor::new(kernel.h, table.dt)?;
        Ok(Self {
            model: model.clone(),
            kernel: kernel.clone(),
            n,
            refinement,
            horizon,
            mode: SingularCellMode::CellAverage,
            table,
            conv,
            cell,
        })
    }

    pub fn with_mode(mut self, mode: SingularCellMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn fine_steps(&self) -> usize {
        self.table.fine_steps
    }

    pub fn table(&self) -> &WeightTable {
        &self.table
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.fine_steps()).map(|k| k as f64 * self.table.dt).collect()
    }

    fn check_grid(&self, w: &BrownianGrid) -> Result<()> {
        if w.m != self.model.m || w.n_steps != self.fine_steps() {
            return Err(SveError::Contract(format!(
                "Brownian grid is {}×{}, solver expects {}×{}",
                w.n_steps,
                w.m,
                self.fine_steps(),
                self.model.m
            )));
        }
        if (w.horizon - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(SveError::Contract("Brownian grid horizon differs from the solver".into()));
        }
        if self.mode == SingularCellMode::Exact && w.auxiliary.is_none() {
            return Err(SveError::Contract("exact singular-cell mode needs the auxiliary normals".into()));
        }
        Ok(())
    }

    /// Runs the scheme with coefficients frozen every `freeze` fine steps.
    pub fn solve_frozen(&self, w: &BrownianGrid, freeze: usize) -> Result<Array2<f64>> {
        self.check_grid(w)?;
        if freeze == 0 || !self.fine_steps().is_multiple_of(freeze) {
            return Err(SveError::Contract(format!("freeze interval {freeze} does not divide N")));
        }
        let (d, m) = (self.model.d, self.model.m);
        let coef = &self.table.coefficients;
        let mut stepper = FrozenStepper {
            model: &self.model,
            freeze,
            dw: w.increments.view(),
            aux: w.auxiliary.as_ref().map(|a| a.view()),
            inv_dt: 1.0 / self.table.dt,
            exact: (self.mode == SingularCellMode::Exact).then_some((coef.as_slice(), self.cell.l22)),
            b: vec![0.0; d],
            sigma: vec![0.0; d * m],
        };
        let states = self.conv.run(&self.model.x0, &mut stepper)?;
        Ok(Array2::from_shape_vec((self.fine_steps() + 1, d), states).expect("shape matches"))
    }

    /// Coefficients frozen at the coarse times `[ns]/n`.
    pub fn euler(&self, w: &BrownianGrid) -> Result<SchemePath> {
        Ok(SchemePath {
            times: self.times(),
            states: self.solve_frozen(w, self.refinement)?,
            scheme: SchemeKind::CoarseFrozen { n: self.n },
            mode: self.mode,
            seed: w.seed,
        })
    }

    /// Coefficients frozen at every fine time.
    pub fn reference(&self, w: &BrownianGrid) -> Result<SchemePath> {
        Ok(SchemePath {
            times: self.times(),
            states: self.solve_frozen(w, 1)?,
            scheme: SchemeKind::FineReference,
            mode: self.mode,
            seed: w.seed,
        })
    }

    pub fn brownian(&self, seed: SeedSpec) -> Result<BrownianGrid> {
        generate_brownian(seed, self.model.m, self.fine_steps(), self.horizon)
    }

    pub fn coupled(&self, seed: SeedSpec) -> Result<CoupledRun> {
        let brownian = self.brownian(seed)?;
        let reference = self.reference(&brownian)?;
        let coarse = self.euler(&brownian)?;
        let error = ErrorPath::from_paths(&reference, &coarse, self.n, self.kernel.h)?;
        Ok(CoupledRun { brownian, reference, coarse, error })
    }
}

fn refinement_of(w: &BrownianGrid, n: usize) -> Result<usize> {
    if n == 0 || !w.n_steps.is_multiple_of(n) {
        return Err(SveError::Contract(format!("n = {n} does not divide N = {}", w.n_steps)));
    }
    Ok(w.n_steps / n)
}

/// Frozen-coefficient scheme with `n` coarse steps on the grid of `w`.
pub fn euler_solve(model: &ModelSpec, kernel: &DiagonalKernel, w: &BrownianGrid, n: usize) -> Result<SchemePath> {
    let m = refinement_of(w, n)?;
    SchemeSolver::new(model, kernel, n, m, w.horizon)?.euler(w)
}

/// Fine-grid proxy of the exact solution on the grid of `w`.
pub fn reference_solve(model: &ModelSpec, kernel: &DiagonalKernel, w: &BrownianGrid) -> Result<SchemePath> {
    SchemeSolver::new(model, kernel, w.n_steps, 1, w.horizon)?.reference(w)
}

/// `n^H (X_proxy − X̂)` at the coarse times for one Brownian path with `N = n·M`.
pub fn coupled_error(
    model: &ModelSpec,
    kernel: &DiagonalKernel,
    seed: SeedSpec,
    n: usize,
    refinement: usize,
    horizon: f64,
) -> Result<ErrorPath> {
    Ok(SchemeSolver::new(model, kernel, n, refinement, horizon)?.coupled(seed)?.error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::model::{DiffusionField, DriftField};
    use crate::kernels::KernelComponent;

    #[test]
    fn brownian_case_is_cumulative_sum() {
        let model = ModelSpec::constant(vec![0.5], 1, vec![0.0], vec![1.0]);
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.5).unwrap();
        let w = generate_brownian(SeedSpec::driving(1, 0), 1, 256, 1.0).unwrap();
        let path = euler_solve(&model, &kernel, &w, 16).unwrap();
        let cum = w.cumulative();
        for k in 0..=256 {
            assert!((path.states[[k, 0]] - 0.5 - cum[[k, 0]]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_drift_is_exact() {
        let mu = 0.7;
        let model = ModelSpec::constant(vec![1.0], 1, vec![mu], vec![0.0]);
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.3).unwrap();
        let w = generate_brownian(SeedSpec::driving(1, 0), 1, 1000, 2.0).unwrap();
        let path = euler_solve(&model, &kernel, &w, 10).unwrap();
        for (k, t) in path.times.iter().enumerate() {
            let want = 1.0 + mu * t.powf(0.8) / 0.8;
            assert!((path.states[[k, 0]] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_brute_force_double_loop() {
        let model = ModelSpec::scalar_affine_trig(0.2, 2.0, 1.0);
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.4).unwrap();
        let (n, m) = (4usize, 2usize);
        let w = generate_brownian(SeedSpec::driving(17, 3), 1, n * m, 1.0).unwrap();
        let path = euler_solve(&model, &kernel, &w, n).unwrap();
        let dt = 1.0 / (n * m) as f64;
        let phi_cell = |a: f64, b: f64| (b.powf(0.9) - a.powf(0.9)) / 0.9;
        let mut x = vec![0.2f64; n * m + 1];
        for k in 1..=n * m {
            let tk = k as f64 * dt;
            let mut s = 0.2;
            for j in 0..k {
                let q = (j / m) * m;
                let sig = 2.0 + x[q].sin();
                let wgt = phi_cell(tk - (j + 1) as f64 * dt, tk - j as f64 * dt);
                s += sig * wgt / dt * w.increments[[j, 0]];
            }
            x[k] = s;
        }
        for k in 0..=n * m {
            assert!((path.states[[k, 0]] - x[k]).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn constant_coefficients_cancel_exactly() {
        let model = ModelSpec::constant(vec![0.0, 1.0], 2, vec![0.3, -1.0], vec![1.0, 0.5, -0.2, 2.0]);
        let kernel = DiagonalKernel::with_alpha(
            vec![KernelComponent::tempered(1.5, 0.3, 2.0).unwrap(), KernelComponent::fractional(0.5, 0.3).unwrap()],
            0.2,
        )
        .unwrap();
        let e = coupled_error(&model, &kernel, SeedSpec::driving(4, 0), 8, 4, 1.0).unwrap();
        assert!(e.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn euler_with_fine_freezing_equals_reference() {
        let model = ModelSpec::new(
            vec![0.3],
            1,
            DriftField::Tanh { a: vec![1.0] },
            DiffusionField::AffineTrig { a: vec![2.0], b: vec![1.0] },
        );
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.3).unwrap();
        let w = generate_brownian(SeedSpec::driving(8, 1), 1, 128, 1.0).unwrap();
        let a = euler_solve(&model, &kernel, &w, 128).unwrap();
        let b = reference_solve(&model, &kernel, &w).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn exact_mode_needs_auxiliary_normals() {
        let model = ModelSpec::scalar_affine_trig(0.0, 2.0, 1.0);
        let kernel = DiagonalKernel::fractional(1, 1.0, 0.3).unwrap();
        let solver = SchemeSolver::new(&model, &kernel, 4, 4, 1.0).unwrap().with_mode(SingularCellMode::Exact);
        let fine = generate_brownian(SeedSpec::driving(1, 0), 1, 16, 1.0).unwrap();
        let exact = solver.euler(&fine).unwrap();
        let averaged = SchemeSolver::new(&model, &kernel, 4, 4, 1.0).unwrap().euler(&fine).unwrap();
        assert_ne!(exact.states, averaged.states);
        let mut stripped = fine.clone();
        stripped.auxiliary = None;
        assert!(solver.euler(&stripped).is_err());
    }
}
