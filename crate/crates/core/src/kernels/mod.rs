//! Diagonal Volterra kernels `φ = diag(φ_1, …, φ_d)` with components of the
//! form `φ_i(u) = c_i u^{H−1/2} + φ̂_i(u)`.

mod admissibility;
mod jphi;
mod weights;

pub use admissibility::{
    check_admissibility, kernel_order_report, AdmissibilityReport, ComponentAdmissibility,
    GeometricGrid, OrderQuantity, OrderReport,
};
pub use jphi::{holder_quotient, jphi_apply, SampledPath};
pub use weights::{build_weight_table, WeightTable, DEFAULT_DENSE_CAP};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SveError};
use crate::quadrature::gauss_legendre_8;

/// Upper bound used for the claimed order of smooth perturbations.
pub const HURST_HAT_CAP: f64 = 1.0 - 1e-6;

/// The perturbation `φ̂` of a kernel component.
///
/// `Tempered` and `Power` scale with nothing but their own parameters except
/// that the tempered factor multiplies the singular coefficient: the full
/// component is `c·e^{−λu}·u^{H−1/2}`. `AffineFactor` describes the full
/// component `(a + b·u)·u^{H−1/2}` and therefore forces `c = a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Perturbation {
    Zero,
    Tempered { lambda: f64 },
    AffineFactor { a: f64, b: f64 },
    /// `coef · u^{exponent − 1/2}`.
    Power { coef: f64, exponent: f64 },
}

impl Perturbation {
    fn natural_order(&self, h: f64) -> f64 {
        match *self {
            Perturbation::Zero | Perturbation::Tempered { .. } | Perturbation::AffineFactor { .. } => {
                (h + 1.0).min(HURST_HAT_CAP)
            }
            Perturbation::Power { exponent, .. } => exponent.min(HURST_HAT_CAP),
        }
    }
}

/// One diagonal entry `φ_i` of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelComponent {
    pub c: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub perturbation: Perturbation,
    /// Claimed order `Ĥ` of the perturbation.
    pub hurst_hat: f64,
}

impl KernelComponent {
    pub fn new(c: f64, h: f64, perturbation: Perturbation) -> Result<Self> {
        let hurst_hat = perturbation.natural_order(h);
        Self::with_hurst_hat(c, h, perturbation, hurst_hat)
    }

    pub fn with_hurst_hat(c: f64, h: f64, perturbation: Perturbation, hurst_hat: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(SveError::Domain(format!("H = {h} is outside (0, 1)")));
        }
        if !c.is_finite() || !hurst_hat.is_finite() {
            return Err(SveError::Domain("kernel parameters must be finite".into()));
        }
        match perturbation {
            Perturbation::Tempered { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                return Err(SveError::Domain(format!("tempered kernel needs lambda > 0, got {lambda}")));
            }
            Perturbation::AffineFactor { a, b } => {
                if !a.is_finite() || !b.is_finite() {
                    return Err(SveError::Domain("affine factor parameters must be finite".into()));
                }
                if (a - c).abs() > 1e-15 * a.abs().max(1.0) {
                    return Err(SveError::Domain(format!(
                        "affine_factor component (a + b u) u^(H-1/2) has c = a; got c = {c}, a = {a}"
                    )));
                }
            }
            Perturbation::Power { coef, exponent }
                if (!coef.is_finite() || !(exponent > -0.5 + 1e-12) || !exponent.is_finite()) => {
                    return Err(SveError::Domain(format!(
                        "power perturbation needs an integrable exponent > -1/2, got {exponent}"
                    )));
                }
            _ => {}
        }
        Ok(Self { c, h, perturbation, hurst_hat })
    }

    /// `u^{H−1/2}`, the unit singular power.
    pub fn fractional(c: f64, h: f64) -> Result<Self> {
        Self::new(c, h, Perturbation::Zero)
    }

    pub fn tempered(c: f64, h: f64, lambda: f64) -> Result<Self> {
        Self::new(c, h, Perturbation::Tempered { lambda })
    }

    pub fn affine_factor(a: f64, b: f64, h: f64) -> Result<Self> {
        Self::new(a, h, Perturbation::AffineFactor { a, b })
    }

    /// Exponent `H − 1/2` of the singular power.
    pub fn power_exponent(&self) -> f64 {
        self.h - 0.5
    }

    /// `c·u^{H−1/2}`.
    pub fn power_part(&self, u: f64) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        self.c * u.powf(self.h - 0.5)
    }

    /// `φ̂(u)`.
    pub fn perturbation(&self, u: f64) -> f64 {
        let e = self.h - 0.5;
        match self.perturbation {
            Perturbation::Zero => 0.0,
            Perturbation::Tempered { lambda } => self.c * (-lambda * u).exp_m1() * u.powf(e),
            Perturbation::AffineFactor { b, .. } => b * u.powf(self.h + 0.5),
            Perturbation::Power { coef, exponent } => coef * u.powf(exponent - 0.5),
        }
    }

    /// `φ̂′(u)`.
    pub fn perturbation_derivative(&self, u: f64) -> f64 {
        let e = self.h - 0.5;
        match self.perturbation {
            Perturbation::Zero => 0.0,
            Perturbation::Tempered { lambda } => {
                let decay = (-lambda * u).exp();
                self.c * u.powf(e - 1.0) * (-lambda * u * decay + e * (-lambda * u).exp_m1())
            }
            Perturbation::AffineFactor { b, .. } => b * (self.h + 0.5) * u.powf(self.h - 0.5),
            Perturbation::Power { coef, exponent } => coef * (exponent - 0.5) * u.powf(exponent - 1.5),
        }
    }

    /// `φ(u)` without the domain check.
    pub fn value(&self, u: f64) -> f64 {
        match self.perturbation {
            // multiplicative forms evaluate without cancellation
            Perturbation::Tempered { lambda } => self.c * (-lambda * u).exp() * u.powf(self.h - 0.5),
            Perturbation::AffineFactor { a, b } => (a + b * u) * u.powf(self.h - 0.5),
            _ => self.power_part(u) + self.perturbation(u),
        }
    }

    /// `φ′(u)`.
    pub fn derivative(&self, u: f64) -> f64 {
        let power = if self.c == 0.0 { 0.0 } else { self.c * (self.h - 0.5) * u.powf(self.h - 1.5) };
        power + self.perturbation_derivative(u)
    }

    /// `u^{1/2−H}·φ(u)` written so that no singular factors cancel.
    pub fn scaled_value(&self, u: f64) -> f64 {
        match self.perturbation {
            Perturbation::Zero => self.c,
            Perturbation::Tempered { lambda } => self.c * (-lambda * u).exp(),
            Perturbation::AffineFactor { a, b } => a + b * u,
            Perturbation::Power { coef, exponent } => self.c + coef * u.powf(exponent - self.h),
        }
    }

    /// `∫_a^b φ̂` for `0 ≤ a < b`.
    pub fn perturbation_integral(&self, a: f64, b: f64) -> f64 {
        match self.perturbation {
            Perturbation::Zero => 0.0,
            Perturbation::AffineFactor { b: slope, .. } => {
                let p = self.h + 1.5;
                slope * (b.powf(p) - a.powf(p)) / p
            }
            Perturbation::Power { coef, exponent } => {
                let p = exponent + 0.5;
                coef * (b.powf(p) - a.powf(p)) / p
            }
            Perturbation::Tempered { .. } => {
                if a == 0.0 {
                    // grade the cell touching the origin: u = b·t², du = 2bt dt
                    gauss_legendre_8(|t| self.perturbation(b * t * t) * 2.0 * b * t, 0.0, 1.0)
                } else {
                    gauss_legendre_8(|u| self.perturbation(u), a, b)
                }
            }
        }
    }

    /// `∫_a^b u^{H−1/2} du` for the unit power, accurate for narrow cells far from 0.
    pub fn unit_power_integral(&self, a: f64, b: f64) -> f64 {
        let p = self.h + 0.5;
        if a == 0.0 {
            return b.powf(p) / p;
        }
        // b^p − a^p = a^p·expm1(p·ln(b/a))
        a.powf(p) * (p * ((b - a) / a).ln_1p()).exp_m1() / p
    }

    /// `∫_a^b φ` for `0 ≤ a < b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.c * self.unit_power_integral(a, b) + self.perturbation_integral(a, b)
    }

    fn has_perturbation(&self) -> bool {
        !matches!(self.perturbation, Perturbation::Zero)
    }
}

/// `eval_kernel`: `φ(u) = c·u^{H−1/2} + φ̂(u)` for `u > 0`.
pub fn eval_kernel(component: &KernelComponent, u: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(SveError::Domain(format!("kernel evaluated at u = {u}; needs u > 0")));
    }
    Ok(component.value(u))
}

/// Both routes to `c = lim_{u↓0} u^{1/2−H} φ(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub value: f64,
    pub closed_form: Option<f64>,
    pub extrapolated: f64,
}

/// Agreement required between the closed form and the extrapolated limit.
pub const COEFFICIENT_AGREEMENT: f64 = 1e-6;

/// Extracts the singular coefficient of a component.
///
/// The extrapolated route evaluates `u^{1/2−H} φ(u)` on `u = T·2^{−k}`,
/// `k = 10..=40`, and applies two-point Richardson steps `2e_{k+1} − e_k`.
/// The sequence is declared divergent when, over the last ten steps, the
/// estimates grow in magnitude and their increments do not shrink.
pub fn singular_coefficient(component: &KernelComponent, horizon: f64) -> Result<CoefficientEstimate> {
    let closed_form = closed_form_coefficient(component);
    let half = 0.5 - component.h;
    let samples: Vec<f64> = (10..=40)
        .map(|k| {
            let u = horizon * 2f64.powi(-k);
            u.powf(half) * component.value(u)
        })
        .collect();
    let richardson: Vec<f64> = samples.windows(2).map(|w| 2.0 * w[1] - w[0]).collect();
    if richardson.iter().any(|r| !r.is_finite()) {
        return Err(SveError::NonAdmissible("singular coefficient extrapolation is not finite".into()));
    }
    let tail = &richardson[richardson.len() - 11..];
    let growing = tail.windows(2).all(|w| w[1].abs() > w[0].abs());
    let increments: Vec<f64> = tail.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let not_shrinking = increments.windows(2).all(|w| w[1] >= w[0]);
    let last = *tail.last().expect("tail is non-empty");
    let last_step = *increments.last().expect("increments are non-empty");
    if growing && not_shrinking && last_step > COEFFICIENT_AGREEMENT * last.abs().max(1.0) {
        return Err(SveError::NonAdmissible(format!(
            "u^(1/2-H) phi(u) diverges as u -> 0 (last extrapolates {:.6e}, {:.6e})",
            tail[tail.len() - 2],
            last
        )));
    }
    if let Some(cf) = closed_form {
        if (cf - last).abs() > COEFFICIENT_AGREEMENT * cf.abs().max(1.0) {
            return Err(SveError::NonAdmissible(format!(
                "closed-form coefficient {cf} and extrapolated limit {last} disagree"
            )));
        }
    }
    Ok(CoefficientEstimate { value: closed_form.unwrap_or(last), closed_form, extrapolated: last })
}

fn closed_form_coefficient(component: &KernelComponent) -> Option<f64> {
    match component.perturbation {
        Perturbation::Zero | Perturbation::Tempered { .. } | Perturbation::AffineFactor { .. } => Some(component.c),
        Perturbation::Power { coef, exponent } => {
            let gap = exponent - component.h;
            if gap > 0.0 {
                Some(component.c)
            } else if gap == 0.0 {
                Some(component.c + coef)
            } else if coef == 0.0 {
                Some(component.c)
            } else {
                None
            }
        }
    }
}

/// The kernel `diag(φ_1, …, φ_d)` together with the Hölder-loss exponent α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalKernel {
    pub components: Vec<KernelComponent>,
    #[serde(rename = "H")]
    pub h: f64,
    pub alpha: f64,
}

impl DiagonalKernel {
    /// Builds a kernel with `α = (1/2 − H) ∨ 0`.
    pub fn new(components: Vec<KernelComponent>) -> Result<Self> {
        let h = components
            .first()
            .map(|c| c.h)
            .ok_or_else(|| SveError::Domain("kernel needs at least one component".into()))?;
        Self::with_alpha(components, (0.5 - h).max(0.0))
    }

    pub fn with_alpha(components: Vec<KernelComponent>, alpha: f64) -> Result<Self> {
        let h = components
            .first()
            .map(|c| c.h)
            .ok_or_else(|| SveError::Domain("kernel needs at least one component".into()))?;
        if let Some((i, c)) = components.iter().enumerate().find(|(_, c)| c.h != h) {
            return Err(SveError::Domain(format!(
                "component {i} has H = {} but the kernel shares H = {h}",
                c.h
            )));
        }
        let floor = (0.5 - h).max(0.0);
        if !(alpha >= floor && alpha < 0.5) {
            return Err(SveError::Domain(format!("alpha = {alpha} must lie in [{floor}, 1/2)")));
        }
        Ok(Self { components, h, alpha })
    }

    /// `d` copies of `c·u^{H−1/2}`.
    pub fn fractional(d: usize, c: f64, h: f64) -> Result<Self> {
        Self::new(vec![KernelComponent::fractional(c, h)?; d])
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// `H̄ = H/2 + 1/2`.
    pub fn h_bar(&self) -> f64 {
        0.5 * self.h + 0.5
    }

    pub fn has_perturbation(&self) -> bool {
        self.components.iter().any(KernelComponent::has_perturbation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let frac = KernelComponent::fractional(1.0, 0.3).unwrap();
        assert_eq!(eval_kernel(&frac, 1.0).unwrap(), 1.0);
        let flat = KernelComponent::fractional(1.0, 0.5).unwrap();
        assert_eq!(eval_kernel(&flat, 0.25).unwrap(), 1.0);
        // mpmath: e^{-1}·0.5^{-0.2}
        let tempered = KernelComponent::tempered(1.0, 0.3, 2.0).unwrap();
        let v = eval_kernel(&tempered, 0.5).unwrap();
        assert!((v - 0.422_582_508_910_864_3).abs() < 1e-15);
    }

    #[test]
    fn eval_rejects_non_positive_arguments() {
        let frac = KernelComponent::fractional(1.0, 0.3).unwrap();
        assert!(matches!(eval_kernel(&frac, 0.0), Err(SveError::Domain(_))));
        assert!(matches!(eval_kernel(&frac, -1.0), Err(SveError::Domain(_))));
    }

    #[test]
    fn decomposition_identity_holds_on_a_log_grid() {
        let comps = [
            KernelComponent::fractional(1.3, 0.3).unwrap(),
            KernelComponent::tempered(0.7, 0.4, 1.5).unwrap(),
            KernelComponent::affine_factor(2.0, -0.5, 0.7).unwrap(),
            KernelComponent::new(0.5, 0.2, Perturbation::Power { coef: 1.0, exponent: 0.5 }).unwrap(),
        ];
        for comp in comps {
            for k in 0..60 {
                let u = 10f64.powf(-9.0 + 0.15 * k as f64);
                let full = eval_kernel(&comp, u).unwrap();
                let split = comp.power_part(u) + comp.perturbation(u);
                assert!((full - split).abs() <= 1e-12 * full.abs(), "{comp:?} u={u}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let comps = [
            KernelComponent::tempered(0.7, 0.4, 1.5).unwrap(),
            KernelComponent::affine_factor(2.0, -0.5, 0.7).unwrap(),
            KernelComponent::new(0.0, 0.2, Perturbation::Power { coef: 1.5, exponent: 0.9 }).unwrap(),
        ];
        for comp in comps {
            for &u in &[0.01, 0.1, 0.5, 0.9] {
                let h = 1e-6 * u;
                let fd = (comp.value(u + h) - comp.value(u - h)) / (2.0 * h);
                assert!((fd - comp.derivative(u)).abs() < 1e-6 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn affine_factor_requires_matching_coefficient() {
        let err = KernelComponent::new(1.0, 0.3, Perturbation::AffineFactor { a: 2.0, b: 1.0 }).unwrap_err();
        assert!(matches!(err, SveError::Domain(_)));
    }

    #[test]
    fn claimed_order_is_capped_below_one() {
        let t = KernelComponent::tempered(1.0, 0.4, 1.0).unwrap();
        assert_eq!(t.hurst_hat, HURST_HAT_CAP);
        let t = KernelComponent::tempered(1.0, 1e-3, 1.0).unwrap();
        assert!((t.hurst_hat - 1.001f64.min(HURST_HAT_CAP)).abs() < 1e-15);
    }

    #[test]
    fn singular_coefficient_examples() {
        let frac = KernelComponent::fractional(1.0, 0.3).unwrap();
        assert!((singular_coefficient(&frac, 1.0).unwrap().value - 1.0).abs() < 1e-12);
        let tempered = KernelComponent::tempered(1.0, 0.3, 3.0).unwrap();
        let est = singular_coefficient(&tempered, 1.0).unwrap();
        assert!((est.extrapolated - 1.0).abs() < 1e-6);
        // mpmath: 1/Γ(0.8)
        let scaled = KernelComponent::fractional(1.0 / statrs::function::gamma::gamma(0.8), 0.3).unwrap();
        let est = singular_coefficient(&scaled, 1.0).unwrap();
        assert!((est.value - 0.858_937_019_224_667_5).abs() < 1e-6);
        assert!((est.extrapolated - 0.858_937_019_224_667_5).abs() < 1e-6);
    }

    #[test]
    fn singular_coefficient_detects_divergence() {
        // u^{-0.49} declared with H = 0.3
        let bad = KernelComponent::new(0.0, 0.3, Perturbation::Power { coef: 1.0, exponent: 0.01 }).unwrap();
        assert!(matches!(singular_coefficient(&bad, 1.0), Err(SveError::NonAdmissible(_))));
    }

    #[test]
    fn kernel_shares_h_and_bounds_alpha() {
        let a = KernelComponent::fractional(1.0, 0.3).unwrap();
        let b = KernelComponent::fractional(1.0, 0.4).unwrap();
        assert!(DiagonalKernel::new(vec![a, b]).is_err());
        let k = DiagonalKernel::new(vec![a, a]).unwrap();
        assert!((k.alpha - 0.2).abs() < 1e-15);
        assert!(DiagonalKernel::with_alpha(vec![a], 0.1).is_err());
        assert!(DiagonalKernel::with_alpha(vec![a], 0.5).is_err());
    }

    #[test]
    fn kernel_json_shape() {
        let json = r#"{"c":1.0,"H":0.3,"perturbation":{"family":"tempered","lambda":2.0},"hurst_hat":0.9}"#;
        let comp: KernelComponent = serde_json::from_str(json).unwrap();
        assert_eq!(comp.perturbation, Perturbation::Tempered { lambda: 2.0 });
    }
}
