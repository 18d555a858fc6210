use serde::{Deserialize, Serialize};

use crate::error::{Result, SveError};

/// Drift families `b: R^d → R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DriftField {
    Zero,
    /// `b_i = mu_i`
    Constant { mu: Vec<f64> },
    /// `b_i = a_i tanh(x_i)`
    Tanh { a: Vec<f64> },
    /// `b_i = a_i + b_i sin(x_i)`
    AffineTrig { a: Vec<f64>, b: Vec<f64> },
    /// `b_i = a_i x_i`; derivative bounded but growth unbounded.
    Linear { a: Vec<f64> },
    /// Log-price / log-variance drift of the local-stochastic volatility example.
    RoughVol(RoughVolParams),
}

/// Diffusion families `σ: R^d → R^{d×m}`, parameters row-major `d×m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DiffusionField {
    Zero,
    /// `σ_ij = s_ij`
    Constant { sigma: Vec<f64> },
    /// `σ_ij = a_ij tanh(x_i)`
    Tanh { a: Vec<f64> },
    /// `σ_ij = a_ij + b_ij sin(x_i)`
    AffineTrig { a: Vec<f64>, b: Vec<f64> },
    /// `σ_ij = a_ij x_i`
    Linear { a: Vec<f64> },
    RoughVol(RoughVolParams),
}

/// Two-factor model with `d = m = 2`: `x_1` is a log-price, `x_2` a log-variance
/// factor and `s(y) = v0 (1 + β tanh y)` is the instantaneous volatility.
///
/// ```text
/// b_1 = −s(x_2)²/2          σ_1 = (ρ s(x_2), √(1−ρ²) s(x_2))
/// b_2 = −k tanh(x_2)        σ_2 = (η, 0)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoughVolParams {
    pub v0: f64,
    pub beta: f64,
    pub rho: f64,
    pub eta: f64,
    pub k: f64,
}

impl RoughVolParams {
    fn vol(&self, y: f64) -> (f64, f64) {
        let t = y.tanh();
        (self.v0 * (1.0 + self.beta * t), self.v0 * self.beta * (1.0 - t * t))
    }

    fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0) || !(self.beta.abs() < 1.0) || !(self.rho.abs() <= 1.0) {
            return Err(SveError::Domain("rough_vol needs v0 > 0, |beta| < 1 and |rho| <= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub d: usize,
    pub m: usize,
    pub x0: Vec<f64>,
    pub drift: DriftField,
    pub diffusion: DiffusionField,
}

fn check_len(what: &str, v: &[f64], expect: usize) -> Result<()> {
    if v.len() != expect {
        return Err(SveError::Contract(format!("{what} has {} entries, expected {expect}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SveError::Contract(format!("{what} has non-finite entries")));
    }
    Ok(())
}

impl ModelSpec {
    pub fn new(x0: Vec<f64>, m: usize, drift: DriftField, diffusion: DiffusionField) -> Self {
        Self { d: x0.len(), m, x0, drift, diffusion }
    }

    /// One-dimensional model with `σ(x) = a + b sin x` and zero drift.
    pub fn scalar_affine_trig(x0: f64, a: f64, b: f64) -> Self {
        Self::new(vec![x0], 1, DriftField::Zero, DiffusionField::AffineTrig { a: vec![a], b: vec![b] })
    }

    pub fn constant(x0: Vec<f64>, m: usize, mu: Vec<f64>, sigma: Vec<f64>) -> Self {
        Self::new(x0, m, DriftField::Constant { mu }, DiffusionField::Constant { sigma })
    }

    pub fn rough_volatility(x0: [f64; 2], params: RoughVolParams) -> Self {
        Self::new(x0.to_vec(), 2, DriftField::RoughVol(params), DiffusionField::RoughVol(params))
    }

    /// Whether the linear family (unbounded growth) is used anywhere.
    pub fn is_unbounded(&self) -> bool {
        matches!(self.drift, DriftField::Linear { .. }) || matches!(self.diffusion, DiffusionField::Linear { .. })
    }

    /// Whether `b` and `σ` do not depend on the state.
    pub fn is_state_independent(&self) -> bool {
        matches!(self.drift, DriftField::Zero | DriftField::Constant { .. })
            && matches!(self.diffusion, DiffusionField::Zero | DiffusionField::Constant { .. })
    }

    pub fn validate(&self, allow_unbounded: bool) -> Result<()> {
        let (d, m) = (self.d, self.m);
        if d == 0 || m == 0 {
            return Err(SveError::Contract("model needs d >= 1 and m >= 1".into()));
        }
        check_len("x0", &self.x0, d)?;
        match &self.drift {
            DriftField::Zero => {}
            DriftField::Constant { mu } => check_len("drift.mu", mu, d)?,
            DriftField::Tanh { a } | DriftField::Linear { a } => check_len("drift.a", a, d)?,
            DriftField::AffineTrig { a, b } => {
                check_len("drift.a", a, d)?;
                check_len("drift.b", b, d)?;
            }
            DriftField::RoughVol(p) => {
                if d != 2 || m != 2 {
                    return Err(SveError::Contract("rough_vol drift needs d = m = 2".into()));
                }
                p.validate()?;
            }
        }
        match &self.diffusion {
            DiffusionField::Zero => {}
            DiffusionField::Constant { sigma } => check_len("diffusion.sigma", sigma, d * m)?,
            DiffusionField::Tanh { a } | DiffusionField::Linear { a } => check_len("diffusion.a", a, d * m)?,
            DiffusionField::AffineTrig { a, b } => {
                check_len("diffusion.a", a, d * m)?;
                check_len("diffusion.b", b, d * m)?;
            }
            DiffusionField::RoughVol(p) => {
                if d != 2 || m != 2 {
                    return Err(SveError::Contract("rough_vol diffusion needs d = m = 2".into()));
                }
                p.validate()?;
            }
        }
        if self.is_unbounded() && !allow_unbounded {
            return Err(SveError::Contract(
                "the linear family has unbounded growth; enable allow_unbounded to use it".into(),
            ));
        }
        Ok(())
    }

    /// `out[i] = b_i(x)`.
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            DriftField::Zero => out.fill(0.0),
            DriftField::Constant { mu } => out.copy_from_slice(mu),
            DriftField::Tanh { a } => {
                for i in 0..self.d {
                    out[i] = a[i] * x[i].tanh();
                }
            }
            DriftField::AffineTrig { a, b } => {
                for i in 0..self.d {
                    out[i] = a[i] + b[i] * x[i].sin();
                }
            }
            DriftField::Linear { a } => {
                for i in 0..self.d {
                    out[i] = a[i] * x[i];
                }
            }
            DriftField::RoughVol(p) => {
                let (s, _) = p.vol(x[1]);
                out[0] = -0.5 * s * s;
                out[1] = -p.k * x[1].tanh();
            }
        }
    }

    /// `out[i*m + j] = σ_ij(x)`.
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        let m = self.m;
        match &self.diffusion {
            DiffusionField::Zero => out.fill(0.0),
            DiffusionField::Constant { sigma } => out.copy_from_slice(sigma),
            DiffusionField::Tanh { a } => {
                for i in 0..self.d {
                    let t = x[i].tanh();
                    for j in 0..m {
                        out[i * m + j] = a[i * m + j] * t;
                    }
                }
            }
            DiffusionField::AffineTrig { a, b } => {
                for i in 0..self.d {
                    let s = x[i].sin();
                    for j in 0..m {
                        out[i * m + j] = a[i * m + j] + b[i * m + j] * s;
                    }
                }
            }
            DiffusionField::Linear { a } => {
                for i in 0..self.d {
                    for j in 0..m {
                        out[i * m + j] = a[i * m + j] * x[i];
                    }
                }
            }
            DiffusionField::RoughVol(p) => {
                let (s, _) = p.vol(x[1]);
                out[0] = p.rho * s;
                out[1] = (1.0 - p.rho * p.rho).sqrt() * s;
                out[2] = p.eta;
                out[3] = 0.0;
            }
        }
    }

    /// `out[i*d + k] = ∂_k b_i(x)`.
    pub fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        out.fill(0.0);
        match &self.drift {
            DriftField::Zero | DriftField::Constant { .. } => {}
            DriftField::Tanh { a } => {
                for i in 0..d {
                    let t = x[i].tanh();
                    out[i * d + i] = a[i] * (1.0 - t * t);
                }
            }
            DriftField::AffineTrig { b, .. } => {
                for i in 0..d {
                    out[i * d + i] = b[i] * x[i].cos();
                }
            }
            DriftField::Linear { a } => {
                for i in 0..d {
                    out[i * d + i] = a[i];
                }
            }
            DriftField::RoughVol(p) => {
                let (s, ds) = p.vol(x[1]);
                let t = x[1].tanh();
                out[1] = -s * ds;
                out[3] = -p.k * (1.0 - t * t);
            }
        }
    }

    /// `out[(i*m + j)*d + k] = ∂_k σ_ij(x)`.
    pub fn diffusion_jacobian(&self, x: &[f64], out: &mut [f64]) {
        let (d, m) = (self.d, self.m);
        out.fill(0.0);
        match &self.diffusion {
            DiffusionField::Zero | DiffusionField::Constant { .. } => {}
            DiffusionField::Tanh { a } => {
                for i in 0..d {
                    let t = x[i].tanh();
                    for j in 0..m {
                        out[(i * m + j) * d + i] = a[i * m + j] * (1.0 - t * t);
                    }
                }
            }
            DiffusionField::AffineTrig { b, .. } => {
                for i in 0..d {
                    let c = x[i].cos();
                    for j in 0..m {
                        out[(i * m + j) * d + i] = b[i * m + j] * c;
                    }
                }
            }
            DiffusionField::Linear { a } => {
                for i in 0..d {
                    for j in 0..m {
                        out[(i * m + j) * d + i] = a[i * m + j];
                    }
                }
            }
            DiffusionField::RoughVol(p) => {
                let (_, ds) = p.vol(x[1]);
                // σ_11, σ_12 depend on x_2 only
                out[1] = p.rho * ds;
                out[d + 1] = (1.0 - p.rho * p.rho).sqrt() * ds;
            }
        }
    }
}
