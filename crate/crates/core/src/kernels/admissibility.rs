//! Numerical evidence for the kernel condition: perturbation orders,
//! Lipschitz continuity of `u^{1/2−H} φ(u)` near the origin, and the
//! asymptotic orders of the kernel integrals that drive the moment bounds.

use serde::{Deserialize, Serialize};

use super::{singular_coefficient, DiagonalKernel, KernelComponent, Perturbation};
use crate::error::{Result, SveError};
use crate::quadrature::{Integrator, Singularities};
use crate::stats::least_squares_slope;

/// Logarithmically spaced points `lo · (hi/lo)^{k/(points−1)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GeometricGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && points >= 2) {
            return Err(SveError::Contract(format!(
                "geometric grid needs 0 < lo < hi and at least 2 points (lo={lo}, hi={hi}, points={points})"
            )));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn values(&self) -> Vec<f64> {
        let ratio = (self.hi / self.lo).ln();
        (0..self.points)
            .map(|k| {
                if k + 1 == self.points {
                    self.hi
                } else {
                    self.lo * (ratio * k as f64 / (self.points - 1) as f64).exp()
                }
            })
            .collect()
    }

    pub fn decades(&self) -> f64 {
        (self.hi / self.lo).log10()
    }

    /// Eight decades below `0.1·T` with ten points per decade.
    pub fn default_for_admissibility(horizon: f64) -> Self {
        Self { lo: 1e-9 * horizon, hi: 0.1 * horizon, points: 81 }
    }

    /// Three decades of `h` below `0.1·T`.
    pub fn default_for_orders(horizon: f64) -> Self {
        Self { lo: 1e-4 * horizon, hi: 0.1 * horizon, points: 10 }
    }
}

/// Slopes at or above this are read as a bounded difference quotient.
const LIPSCHITZ_SLOPE_FLOOR: f64 = -0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentAdmissibility {
    pub index: usize,
    pub hurst_hat: f64,
    pub hurst_hat_valid: bool,
    pub coefficient: Option<f64>,
    pub coefficient_extrapolated: Option<f64>,
    /// `None` when the perturbation vanishes identically.
    pub perturbation_slope: Option<f64>,
    pub perturbation_threshold: f64,
    pub derivative_slope: Option<f64>,
    pub derivative_threshold: f64,
    /// Log-log slope of the difference quotients of `u^{1/2−H} φ(u)` on the finest half of the grid.
    pub lipschitz_slope: Option<f64>,
    pub max_difference_quotient: f64,
    pub lipschitz: bool,
    pub admissible: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub h: f64,
    pub alpha: f64,
    pub grid: GeometricGrid,
    pub tolerance: f64,
    pub components: Vec<ComponentAdmissibility>,
    pub admissible: bool,
}

/// Checks every component of `kernel` on `grid` (a subset of `(0, T]`).
pub fn check_admissibility(
    kernel: &DiagonalKernel,
    grid: &GeometricGrid,
    tol: f64,
    horizon: f64,
) -> Result<AdmissibilityReport> {
    if grid.points < 8 || grid.decades() < 1.0 {
        return Err(SveError::Contract(format!(
            "admissibility grid needs at least 8 points over at least one decade (got {} points, {:.2} decades)",
            grid.points,
            grid.decades()
        )));
    }
    if grid.hi > horizon {
        return Err(SveError::Contract(format!("grid upper end {} exceeds T = {horizon}", grid.hi)));
    }
    let us = grid.values();
    let components: Vec<ComponentAdmissibility> = kernel
        .components
        .iter()
        .enumerate()
        .map(|(index, comp)| check_component(index, comp, &us, tol, horizon))
        .collect();
    let admissible = components.iter().all(|c| c.admissible);
    Ok(AdmissibilityReport { h: kernel.h, alpha: kernel.alpha, grid: *grid, tolerance: tol, components, admissible })
}

fn check_component(index: usize, comp: &KernelComponent, us: &[f64], tol: f64, horizon: f64) -> ComponentAdmissibility {
    let mut failures = Vec::new();
    let hurst_hat_valid = comp.hurst_hat > comp.h && comp.hurst_hat < 1.0;
    if !hurst_hat_valid {
        failures.push(format!("claimed order {} is not in (H, 1) = ({}, 1)", comp.hurst_hat, comp.h));
    }

    let (coefficient, coefficient_extrapolated) = match singular_coefficient(comp, horizon) {
        Ok(est) => (Some(est.value), Some(est.extrapolated)),
        Err(e) => {
            failures.push(e.to_string());
            (None, None)
        }
    };

    let perturbation_threshold = comp.hurst_hat - 0.5;
    let perturbation_slope = magnitude_slope(us, |u| comp.perturbation(u));
    if let Some(s) = perturbation_slope {
        if !(s >= perturbation_threshold - tol) {
            failures.push(format!("perturbation slope {s:.4} below {perturbation_threshold:.4}"));
        }
    }
    let derivative_threshold = comp.hurst_hat - 1.5;
    let derivative_slope = magnitude_slope(us, |u| comp.perturbation_derivative(u));
    if let Some(s) = derivative_slope {
        if !(s >= derivative_threshold - tol) {
            failures.push(format!("perturbation derivative slope {s:.4} below {derivative_threshold:.4}"));
        }
    }

    let scaled: Vec<f64> = us.iter().map(|&u| comp.scaled_value(u)).collect();
    let quotients: Vec<(f64, f64)> = us
        .windows(2)
        .zip(scaled.windows(2))
        .map(|(u, g)| ((u[0] * u[1]).sqrt(), (g[1] - g[0]).abs() / (u[1] - u[0])))
        .collect();
    let max_difference_quotient = quotients.iter().map(|q| q.1).fold(0.0, f64::max);
    let finest = &quotients[..quotients.len().div_ceil(2)];
    let positive: Vec<(f64, f64)> = finest.iter().copied().filter(|q| q.1 > 0.0 && q.1.is_finite()).collect();
    let lipschitz_slope = if positive.len() >= 2 {
        let xs: Vec<f64> = positive.iter().map(|q| q.0.ln()).collect();
        let ys: Vec<f64> = positive.iter().map(|q| q.1.ln()).collect();
        least_squares_slope(&xs, &ys)
    } else {
        None
    };
    let lipschitz = max_difference_quotient.is_finite()
        && match lipschitz_slope {
            Some(s) => s >= LIPSCHITZ_SLOPE_FLOOR,
            None => true,
        };
    if !lipschitz {
        failures.push(format!(
            "u^(1/2-H) phi(u) is not Lipschitz near 0 (difference-quotient slope {:?})",
            lipschitz_slope
        ));
    }

    ComponentAdmissibility {
        index,
        hurst_hat: comp.hurst_hat,
        hurst_hat_valid,
        coefficient,
        coefficient_extrapolated,
        perturbation_slope,
        perturbation_threshold,
        derivative_slope,
        derivative_threshold,
        lipschitz_slope,
        max_difference_quotient,
        lipschitz,
        admissible: failures.is_empty(),
        failures,
    }
}

/// Least-squares slope of `log|f(u)|` against `log u`, or `None` if `f` vanishes on the grid.
fn magnitude_slope<F: Fn(f64) -> f64>(us: &[f64], f: F) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = us
        .iter()
        .filter_map(|&u| {
            let v = f(u).abs();
            (v > 0.0 && v.is_finite()).then(|| (u.ln(), v.ln()))
        })
        .unzip();
    least_squares_slope(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderQuantity {
    pub name: String,
    pub values: Vec<f64>,
    pub slope: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentOrders {
    pub index: usize,
    pub quantities: Vec<OrderQuantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub h: f64,
    pub h_bar: f64,
    pub h_grid: Vec<f64>,
    pub tolerance: f64,
    pub components: Vec<ComponentOrders>,
    pub pass: bool,
}

impl OrderReport {
    pub fn quantity(&self, component: usize, name: &str) -> Option<&OrderQuantity> {
        self.components.get(component)?.quantities.iter().find(|q| q.name == name)
    }
}

/// Evaluates the kernel integrals of the moment estimates over `h_grid` and
/// compares their log-log slopes with the orders `H+1/2, H̄, H, H` (full kernel)
/// and `Ĥ, Ĥ` (perturbation).
pub fn kernel_order_report(
    kernel: &DiagonalKernel,
    h_grid: &GeometricGrid,
    horizon: f64,
    tol: f64,
) -> Result<OrderReport> {
    if h_grid.hi > 0.5 * horizon {
        return Err(SveError::Contract(format!("h grid must lie in (0, T/2]; upper end is {}", h_grid.hi)));
    }
    let hs = h_grid.values();
    let quad = Integrator { abs_tol: 1e-14, rel_tol: 1e-10, max_intervals: 4000 };
    let h_bar = kernel.h_bar();
    let mut components = Vec::with_capacity(kernel.dim());
    for (index, comp) in kernel.components.iter().enumerate() {
        let beta = full_exponent(comp);
        let beta_hat = perturbation_exponent(comp);
        let full = |u: f64| comp.value(u);
        let hat = |u: f64| comp.perturbation(u);

        let mut quantities = Vec::new();
        let specs: [(&str, f64); 4] = [
            ("int_abs_phi_0_h", kernel.h + 0.5),
            ("int_abs_increment", h_bar),
            ("l2_phi_0_h", kernel.h),
            ("l2_increment", kernel.h),
        ];
        let mut values = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for &h in &hs {
            values[0].push(
                quad.integrate_singular(|u| full(u).abs(), 0.0, h, singular_hint(beta))?.value,
            );
            values[1].push(
                quad.integrate_singular(|t| (full(t + h) - full(t)).abs(), 0.0, horizon, singular_hint(beta))?
                    .value,
            );
            values[2].push(
                quad.integrate_singular(|u| full(u).powi(2), 0.0, h, singular_hint(2.0 * beta))?
                    .value
                    .sqrt(),
            );
            values[3].push(
                quad.integrate_singular(|t| (full(t + h) - full(t)).powi(2), 0.0, horizon, singular_hint(2.0 * beta))?
                    .value
                    .sqrt(),
            );
        }
        for ((name, threshold), vals) in specs.iter().zip(values) {
            quantities.push(order_quantity(name, &hs, vals, *threshold, tol));
        }

        if !matches!(comp.perturbation, Perturbation::Zero) {
            let mut v5 = Vec::new();
            let mut v6 = Vec::new();
            for &h in &hs {
                v5.push(
                    quad.integrate_singular(|u| hat(u).powi(2), 0.0, h, singular_hint(2.0 * beta_hat))?
                        .value
                        .sqrt(),
                );
                v6.push(
                    quad.integrate_singular(
                        |t| (hat(t + h) - hat(t)).powi(2),
                        0.0,
                        horizon,
                        singular_hint(2.0 * beta_hat),
                    )?
                    .value
                    .sqrt(),
                );
            }
            quantities.push(order_quantity("l2_perturbation_0_h", &hs, v5, comp.hurst_hat, tol));
            quantities.push(order_quantity("l2_perturbation_increment", &hs, v6, comp.hurst_hat, tol));
        }
        components.push(ComponentOrders { index, quantities });
    }
    let pass = components.iter().all(|c| c.quantities.iter().all(|q| q.pass));
    Ok(OrderReport { h: kernel.h, h_bar, h_grid: hs, tolerance: tol, components, pass })
}

fn order_quantity(name: &str, hs: &[f64], values: Vec<f64>, threshold: f64, tol: f64) -> OrderQuantity {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let slope = if values.iter().all(|v| *v > 0.0) {
        least_squares_slope(&xs, &ys).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    // An identically vanishing quantity satisfies every order bound.
    let pass = values.iter().all(|v| *v == 0.0) || slope >= threshold - tol;
    OrderQuantity { name: name.to_string(), values, slope, threshold, pass }
}

/// Leading exponent of `φ` at the origin.
fn full_exponent(comp: &KernelComponent) -> f64 {
    let power = if comp.c != 0.0 { comp.h - 0.5 } else { f64::INFINITY };
    power.min(perturbation_exponent(comp))
}

fn perturbation_exponent(comp: &KernelComponent) -> f64 {
    match comp.perturbation {
        Perturbation::Zero => f64::INFINITY,
        Perturbation::Tempered { .. } | Perturbation::AffineFactor { .. } => comp.h + 0.5,
        Perturbation::Power { exponent, .. } => exponent - 0.5,
    }
}

fn singular_hint(exponent: f64) -> Singularities {
    if exponent < 0.0 {
        Singularities::left(exponent)
    } else {
        Singularities::NONE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractional_kernel_is_admissible() {
        let k = DiagonalKernel::fractional(2, 1.0, 0.3).unwrap();
        let grid = GeometricGrid::default_for_admissibility(1.0);
        let rep = check_admissibility(&k, &grid, 0.05, 1.0).unwrap();
        assert!(rep.admissible, "{rep:?}");
        let c = &rep.components[0];
        assert!(c.perturbation_slope.is_none());
        assert_eq!(c.max_difference_quotient, 0.0);
        assert!(c.lipschitz);
    }

    #[test]
    fn tempered_kernel_is_admissible_with_expected_slope() {
        let k = DiagonalKernel::new(vec![KernelComponent::tempered(1.0, 0.3, 1.0).unwrap()]).unwrap();
        // numpy polyfit of log|(e^{-u}-1)u^{-0.2}| on logspace(-6,-1,200)
        let grid = GeometricGrid::new(1e-6, 1e-1, 200).unwrap();
        let rep = check_admissibility(&k, &grid, 0.05, 1.0).unwrap();
        assert!(rep.admissible, "{rep:?}");
        let slope = rep.components[0].perturbation_slope.unwrap();
        assert!((slope - 0.798_101_488_490_051).abs() < 1e-9, "{slope}");
    }

    #[test]
    fn inconsistent_kernel_is_rejected() {
        let bad = KernelComponent::new(0.0, 0.3, Perturbation::Power { coef: 1.0, exponent: 0.01 }).unwrap();
        let k = DiagonalKernel::new(vec![bad]).unwrap();
        let rep = check_admissibility(&k, &GeometricGrid::default_for_admissibility(1.0), 0.05, 1.0).unwrap();
        assert!(!rep.admissible);
        let c = &rep.components[0];
        assert!(c.coefficient.is_none());
        assert!(!c.lipschitz);
    }

    #[test]
    fn grid_must_span_enough_points() {
        let k = DiagonalKernel::fractional(1, 1.0, 0.3).unwrap();
        let grid = GeometricGrid::new(1e-3, 1e-1, 4).unwrap();
        assert!(check_admissibility(&k, &grid, 0.05, 1.0).is_err());
    }

    #[test]
    fn fractional_order_slopes_are_exact_for_the_local_integrals() {
        let k = DiagonalKernel::fractional(1, 1.0, 0.3).unwrap();
        let grid = GeometricGrid::default_for_orders(1.0);
        let rep = kernel_order_report(&k, &grid, 1.0, 0.05).unwrap();
        assert!(rep.pass, "{rep:?}");
        let q1 = rep.quantity(0, "int_abs_phi_0_h").unwrap();
        assert!((q1.slope - 0.8).abs() < 1e-9);
        for (h, v) in rep.h_grid.iter().zip(&q1.values) {
            assert!((v - h.powf(0.8) / 0.8).abs() < 1e-10 * v);
        }
        let q3 = rep.quantity(0, "l2_phi_0_h").unwrap();
        assert!((q3.slope - 0.3).abs() < 1e-9);
        for (h, v) in rep.h_grid.iter().zip(&q3.values) {
            assert!((v - h.powf(0.3) / 0.6f64.sqrt()).abs() < 1e-9 * v);
        }
    }

    #[test]
    fn order_slopes_are_invariant_under_scaling() {
        let grid = GeometricGrid::default_for_orders(1.0);
        let k1 = DiagonalKernel::new(vec![KernelComponent::tempered(1.0, 0.4, 1.0).unwrap()]).unwrap();
        let k2 = DiagonalKernel::new(vec![KernelComponent::tempered(2.0, 0.4, 1.0).unwrap()]).unwrap();
        let r1 = kernel_order_report(&k1, &grid, 1.0, 0.05).unwrap();
        let r2 = kernel_order_report(&k2, &grid, 1.0, 0.05).unwrap();
        for (a, b) in r1.components[0].quantities.iter().zip(&r2.components[0].quantities) {
            assert!((a.slope - b.slope).abs() < 1e-8, "{} {} {}", a.name, a.slope, b.slope);
        }
    }

    #[test]
    fn constant_kernel_increments_vanish_and_pass() {
        let k = DiagonalKernel::fractional(1, 1.0, 0.5).unwrap();
        let rep = kernel_order_report(&k, &GeometricGrid::default_for_orders(1.0), 1.0, 0.05).unwrap();
        let inc = rep.quantity(0, "l2_increment").unwrap();
        assert!(inc.values.iter().all(|v| *v == 0.0));
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn h_grid_must_stay_below_half_horizon() {
        let k = DiagonalKernel::fractional(1, 1.0, 0.3).unwrap();
        let grid = GeometricGrid::new(0.1, 0.9, 5).unwrap();
        assert!(matches!(kernel_order_report(&k, &grid, 1.0, 0.05), Err(SveError::Contract(_))));
    }
}
