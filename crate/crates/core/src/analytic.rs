//! Quadrature checks of the auxiliary power-difference integrals.
//!
//! ```text
//! A_n(v,s) = ∫_0^{[nv]} ((z+ns−[nv])^α − (z+[ns]−[nv])^α)((z+nv−[nv])^α − z^α) dz
//! B_n(v,s) = ∫_0^{nv−[nv]} |(z+ns−nv)^α − (z+[ns]−nv)^α| z^α dz
//! ```
//!
//! with envelopes `∫_0^∞ ((x+1)^α − x^α)² dx` and `∫_0^1 |(z+1)^α − z^α| z^α dz`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SveError};
use crate::quadrature::{pow_diff, Integrator, Singularities};
use crate::rng::{key_from_seed, uniform_pair};

fn integrator() -> Integrator {
    Integrator { abs_tol: 1e-13, rel_tol: 1e-11, max_intervals: 4000 }
}

/// `|y^α − x^α| ≤ |(y−y')^α − (x−x')^α|`; `None` when the preconditions fail.
pub fn prea_check(alpha: f64, x: f64, y: f64, x_prime: f64, y_prime: f64) -> Option<bool> {
    let admissible = alpha < 1.0 && 0.0 < x && x < y && y_prime <= x_prime && 0.0 <= x_prime && x_prime < x;
    if !admissible {
        return None;
    }
    let lhs = pow_diff(y, x, alpha).abs();
    let rhs = pow_diff(y - y_prime, x - x_prime, alpha).abs();
    Some(lhs <= rhs + 1e-12 * (1.0 + rhs))
}

/// Outcome of a randomized search for violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreaReport {
    pub tuples: usize,
    pub skipped: usize,
    pub violations: usize,
    pub first_violation: Option<[f64; 5]>,
}

/// Draws `count` admissible tuples with `α ∈ (−1/2, 1)` and log-uniform `x`, `y − x`.
pub fn prea_random(count: usize, seed: u64) -> PreaReport {
    let key = key_from_seed(seed);
    let mut report = PreaReport { tuples: 0, skipped: 0, violations: 0, first_violation: None };
    for i in 0..count {
        let c = i as u32;
        let [u0, u1] = uniform_pair([c, 0, 0, 0], key);
        let [u2, u3] = uniform_pair([c, 1, 0, 0], key);
        let [u4, _] = uniform_pair([c, 2, 0, 0], key);
        let alpha = -0.5 + 1.5 * u0;
        let x = 10f64.powf(-3.0 + 6.0 * u1);
        let y = x + 10f64.powf(-3.0 + 6.0 * u2);
        let x_prime = x * (1.0 - u3);
        let y_prime = x_prime - 10f64.powf(-3.0 + 6.0 * u4) * u3;
        match prea_check(alpha, x, y, x_prime, y_prime) {
            None => report.skipped += 1,
            Some(ok) => {
                report.tuples += 1;
                if !ok {
                    report.violations += 1;
                    report.first_violation.get_or_insert([alpha, x, y, x_prime, y_prime]);
                }
            }
        }
    }
    report
}

/// One evaluation point of the auxiliary integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureCase {
    pub alpha: f64,
    pub v: f64,
    pub s: f64,
    pub n: usize,
}

impl QuadratureCase {
    pub fn new(alpha: f64, v: f64, s: f64, n: usize) -> Result<Self> {
        if !(alpha > -0.5 && alpha < 0.5) {
            return Err(SveError::Domain(format!("alpha = {alpha} must lie in (-1/2, 1/2)")));
        }
        if !(0.0 <= v && v <= s && s.is_finite()) || n == 0 {
            return Err(SveError::Domain(format!("need 0 <= v <= s and n >= 1, got v = {v}, s = {s}, n = {n}")));
        }
        Ok(Self { alpha, v, s, n })
    }

    fn scaled(&self) -> (f64, f64, f64, f64) {
        let nv = self.n as f64 * self.v;
        let ns = self.n as f64 * self.s;
        (nv, ns, nv.floor(), ns.floor())
    }

    /// `n·v ≤ [n·s]`, required for `B_n`.
    pub fn b_admissible(&self) -> bool {
        let (nv, _, _, fs) = self.scaled();
        nv <= fs
    }
}

fn left_hint(exponent: f64) -> Singularities {
    if exponent < 0.0 {
        Singularities::left(exponent)
    } else {
        Singularities::NONE
    }
}

/// Sums `f` over `[0, 1]` (graded at 0) and dyadic pieces of `[1, upper]`.
fn split_integral<F: Fn(f64) -> f64>(f: F, upper: f64, hint: Singularities) -> Result<f64> {
    let q = integrator();
    let first = upper.min(1.0);
    let mut total = q.integrate_singular(&f, 0.0, first, hint)?.value;
    let mut a = first;
    while a < upper {
        let b = (2.0 * a).min(upper);
        total += q.integrate(&f, a, b)?.value;
        a = b;
    }
    Ok(total)
}

/// `A_n(v,s)` in the substituted variable `z = [nv] − nu`.
pub fn a_n(case: &QuadratureCase) -> Result<f64> {
    let (nv, ns, fv, fs) = case.scaled();
    let a = case.alpha;
    if fv == 0.0 || a == 0.0 {
        return Ok(0.0);
    }
    let f = |z: f64| pow_diff(z + ns - fv, z + fs - fv, a) * pow_diff(z + nv - fv, z, a);
    split_integral(f, fv, left_hint(a.min(2.0 * a)))
}

/// `A_n(v,s)` in the original variable `u`, with the singular end handled in local coordinates.
pub fn a_n_u_form(case: &QuadratureCase) -> Result<f64> {
    let (_, _, fv, fs) = case.scaled();
    let (a, n, v, s) = (case.alpha, case.n as f64, case.v, case.s);
    if fv == 0.0 || a == 0.0 {
        return Ok(0.0);
    }
    let end = fv / n;
    // r = [nv]/n − u
    let g = |r: f64| pow_diff(s - end + r, (fs - fv) / n + r, a) * pow_diff(v - end + r, r, a);
    let q = integrator();
    let mid = 0.5 * end;
    let near = q.integrate_singular(g, 0.0, mid.min(1.0 / n), left_hint(a.min(2.0 * a)))?.value;
    let mut far = 0.0;
    let mut lo = mid.min(1.0 / n);
    while lo < end {
        let hi = (2.0 * lo).min(end);
        far += q.integrate(g, lo, hi)?.value;
        lo = hi;
    }
    Ok(n.powf(2.0 * a + 1.0) * (near + far))
}

/// `B_n(v,s)` in the substituted variable `z = n(v − u)`.
pub fn b_n(case: &QuadratureCase) -> Result<f64> {
    if !case.b_admissible() {
        return Err(SveError::Domain(format!(
            "B_n needs n·v <= [n·s]; got n = {}, v = {}, s = {}",
            case.n, case.v, case.s
        )));
    }
    let (nv, ns, fv, fs) = case.scaled();
    let a = case.alpha;
    let upper = nv - fv;
    if upper == 0.0 || a == 0.0 {
        return Ok(0.0);
    }
    let f = |z: f64| pow_diff(z + ns - nv, z + fs - nv, a).abs() * z.powf(a);
    integrator().integrate_singular(f, 0.0, upper, left_hint(a.min(2.0 * a))).map(|e| e.value)
}

/// `B_n(v,s)` in the original variable `u`, singular end in local coordinates `r = v − u`.
pub fn b_n_u_form(case: &QuadratureCase) -> Result<f64> {
    if !case.b_admissible() {
        return Err(SveError::Domain("B_n needs n·v <= [n·s]".into()));
    }
    let (nv, _, fv, fs) = case.scaled();
    let (a, n, v, s) = (case.alpha, case.n as f64, case.v, case.s);
    let len = (nv - fv) / n;
    if len == 0.0 || a == 0.0 {
        return Ok(0.0);
    }
    let g = |r: f64| pow_diff(s - v + r, fs / n - v + r, a).abs() * r.powf(a);
    let value = integrator().integrate_singular(g, 0.0, len, left_hint(a.min(2.0 * a)))?.value;
    Ok(n.powf(2.0 * a + 1.0) * value)
}

pub fn a_n_values(alpha: f64, v: f64, s: f64, ns: &[usize]) -> Result<Vec<f64>> {
    ns.iter().map(|&n| a_n(&QuadratureCase::new(alpha, v, s, n)?)).collect()
}

pub fn b_n_values(alpha: f64, v: f64, s: f64, ns: &[usize]) -> Result<Vec<f64>> {
    ns.iter().map(|&n| b_n(&QuadratureCase::new(alpha, v, s, n)?)).collect()
}

/// `∫_0^∞ ((x+1)^α − x^α)² dx`.
pub fn envelope_a(alpha: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let f = |x: f64| pow_diff(x + 1.0, x, alpha).powi(2);
    let cut = 2f64.powi(40);
    let body = split_integral(f, cut, left_hint(2.0 * alpha))?;
    // ((x+1)^α − x^α)² = α² x^{2α−2} (1 + (α−1)/x + O(x^{−2}))
    let tail = alpha * alpha * (cut.powf(2.0 * alpha - 1.0) / (1.0 - 2.0 * alpha) - cut.powf(2.0 * alpha - 2.0) / 2.0);
    Ok(body + tail)
}

/// `∫_0^1 |(z+1)^α − z^α| z^α dz`.
pub fn envelope_b(alpha: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let f = |z: f64| pow_diff(z + 1.0, z, alpha).abs() * z.powf(alpha);
    integrator().integrate_singular(f, 0.0, 1.0, left_hint(2.0 * alpha)).map(|e| e.value)
}

/// Sequence of one integral for fixed `(α, v, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceCheck {
    pub alpha: f64,
    pub v: f64,
    pub s: f64,
    pub ns: Vec<usize>,
    pub values: Vec<f64>,
    pub envelope: f64,
    pub nonnegative: bool,
    pub dominated: bool,
    pub decreasing: bool,
}

impl SequenceCheck {
    fn new(alpha: f64, v: f64, s: f64, ns: &[usize], values: Vec<f64>, envelope: f64) -> Self {
        let nonnegative = values.iter().all(|x| *x >= 0.0);
        let dominated = values.iter().all(|x| *x <= envelope);
        let decreasing = values.iter().all(|x| *x == 0.0) || values.windows(2).all(|w| w[1] < w[0]);
        Self { alpha, v, s, ns: ns.to_vec(), values, envelope, nonnegative, dominated, decreasing }
    }

    pub fn passed(&self) -> bool {
        self.nonnegative && self.dominated && self.decreasing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub prea: PreaReport,
    pub a_checks: Vec<SequenceCheck>,
    pub b_checks: Vec<SequenceCheck>,
}

impl AppendixReport {
    pub fn passed(&self) -> bool {
        self.prea.violations == 0
            && self.a_checks.iter().all(SequenceCheck::passed)
            && self.b_checks.iter().all(SequenceCheck::passed)
    }
}

/// Grid and sample sizes of the appendix suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixSettings {
    pub alphas: Vec<f64>,
    pub vs: Vec<f64>,
    pub ss: Vec<f64>,
    pub ns: Vec<usize>,
    pub prea_tuples: usize,
    pub seed: u64,
}

impl Default for AppendixSettings {
    /// Fractions with denominator 12 keep `{n v}` and `{n s}` fixed along powers of 4.
    fn default() -> Self {
        Self {
            alphas: vec![-0.3, -0.1, 0.1, 0.3],
            vs: vec![1.0 / 3.0, 5.0 / 12.0, 7.0 / 12.0],
            ss: vec![2.0 / 3.0, 5.0 / 6.0, 11.0 / 12.0],
            ns: vec![16, 64, 256, 1024, 4096],
            prea_tuples: 100_000,
            seed: 0x5eed,
        }
    }
}

pub fn appendix_suite(settings: &AppendixSettings) -> Result<AppendixReport> {
    let prea = prea_random(settings.prea_tuples, settings.seed);
    let mut a_checks = Vec::new();
    let mut b_checks = Vec::new();
    for &alpha in &settings.alphas {
        let env_a = envelope_a(alpha)?;
        let env_b = envelope_b(alpha)?;
        for &v in &settings.vs {
            for &s in &settings.ss {
                if v > s {
                    continue;
                }
                let a = a_n_values(alpha, v, s, &settings.ns)?;
                a_checks.push(SequenceCheck::new(alpha, v, s, &settings.ns, a, env_a));
                let b = b_n_values(alpha, v, s, &settings.ns)?;
                b_checks.push(SequenceCheck::new(alpha, v, s, &settings.ns, b, env_b));
            }
        }
    }
    Ok(AppendixReport { prea, a_checks, b_checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn prea_examples() {
        assert_eq!(prea_check(0.5, 1.0, 4.0, 0.5, 0.25), Some(true));
        assert_eq!(prea_check(0.0, 1.0, 4.0, 0.5, 0.25), Some(true));
        assert_eq!(prea_check(0.5, 4.0, 1.0, 0.5, 0.25), None);
        let r = prea_random(20_000, 1);
        assert_eq!(r.violations, 0);
        assert_eq!(r.skipped, 0);
    }

    #[test]
    fn values_match_high_precision_oracle() {
        let c = |a, v, s, n| QuadratureCase::new(a, v, s, n).unwrap();
        assert!(rel(a_n(&c(-0.3, 1.0 / 3.0, 2.0 / 3.0, 16)).unwrap(), 0.009_065_075_871_489_814) < 1e-8);
        let ex = a_n_values(0.3, 0.4, 0.9, &[4, 16, 64, 256]).unwrap();
        let want = [0.022_861_716_698_863_645, 0.011_022_343_124_067_655, 0.016_483_799_833_921_87, 0.004_887_689_439_148_861];
        for (x, y) in ex.iter().zip(want) {
            assert!(rel(*x, y) < 1e-8);
        }
        assert!(rel(a_n(&c(0.1, 5.0 / 12.0, 5.0 / 6.0, 1024)).unwrap(), 8.161_900_686_931_102e-5) < 1e-7);
        let b = b_n_values(-0.3, 0.35, 0.8, &[8, 32, 128]).unwrap();
        let want = [0.026_692_305_900_127_606, 0.002_652_962_561_061_017, 0.000_752_391_173_600_493_7];
        for (x, y) in b.iter().zip(want) {
            assert!(rel(*x, y) < 1e-8, "{x} vs {y}");
        }
        assert!(rel(b_n(&c(0.3, 7.0 / 12.0, 11.0 / 12.0, 64)).unwrap(), 0.004_350_972_147_526_713) < 1e-8);
    }

    #[test]
    fn envelopes_match_oracle() {
        let want = [
            (-0.3, 0.730_836_306_271_554_3, 1.200_554_932_865_408),
            (-0.1, 0.039_195_193_028_651_53, 0.178_760_800_633_166_56),
            (0.1, 0.030_383_278_633_844_12, 0.113_328_052_996_578_86),
            (0.3, 0.333_517_108_293_507_5, 0.251_950_749_095_481_4),
        ];
        for (a, ea, eb) in want {
            assert!(rel(envelope_a(a).unwrap(), ea) < 1e-8, "A envelope at {a}");
            assert!(rel(envelope_b(a).unwrap(), eb) < 1e-8, "B envelope at {a}");
        }
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(a_n_values(0.0, 0.3, 0.7, &[4, 16]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(b_n(&QuadratureCase::new(0.2, 0.25, 0.7, 8).unwrap()).unwrap(), 0.0);
        assert_eq!(b_n(&QuadratureCase::new(0.0, 0.3, 0.7, 8).unwrap()).unwrap(), 0.0);
        assert!(b_n(&QuadratureCase::new(0.2, 0.5, 0.55, 3).unwrap()).is_err());
        assert!(QuadratureCase::new(0.6, 0.1, 0.2, 4).is_err());
    }

    #[test]
    fn substitution_forms_agree() {
        for (a, v, s, n) in [(-0.3, 0.37, 0.81, 50), (0.2, 0.55, 0.6, 333), (-0.45, 0.1, 0.95, 17)] {
            let case = QuadratureCase::new(a, v, s, n).unwrap();
            assert!(rel(a_n(&case).unwrap(), a_n_u_form(&case).unwrap()) < 1e-6, "A at {case:?}");
            if case.b_admissible() {
                assert!(rel(b_n(&case).unwrap(), b_n_u_form(&case).unwrap()) < 1e-6, "B at {case:?}");
            }
        }
    }
}
