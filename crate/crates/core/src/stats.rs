//! Deterministic reductions and small statistical tests.
//!
//! All sums go through [`pairwise_sum`] so results do not depend on how an
//! ensemble was produced, only on the order of its entries.

use serde::{Deserialize, Serialize};

/// Fixed-shape pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

pub fn mean_estimate(xs: &[f64]) -> MeanEstimate {
    let se = if xs.len() < 2 { f64::NAN } else { (variance(xs) / xs.len() as f64).sqrt() };
    MeanEstimate { mean: mean(xs), std_error: se, samples: xs.len() }
}

/// Ordinary least-squares line with the slope's standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return None;
    }
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    let sxy: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let sxx = pairwise_sum(&sxx);
    if sxx <= 0.0 {
        return None;
    }
    let slope = pairwise_sum(&sxy) / sxx;
    let intercept = my - slope * mx;
    let slope_std_error = if xs.len() > 2 {
        let res: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .collect();
        (pairwise_sum(&res) / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit { slope, intercept, slope_std_error })
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    linear_fit(xs, ys).map(|f| f.slope)
}

/// Slope of `log y` against `log x`; `None` if any value is non-positive.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Large-sample 5% critical value of the two-sample KS statistic.
pub fn ks_threshold_5pct(na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    1.358 * ((na + nb) / (na * nb)).sqrt()
}

/// Jarque–Bera statistic and its asymptotic χ²₂ p-value.
pub fn jarque_bera(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let pow = |p: i32| {
        let v: Vec<f64> = xs.iter().map(|x| (x - m).powi(p)).collect();
        pairwise_sum(&v) / n
    };
    let m2 = pow(2);
    let skew = pow(3) / m2.powf(1.5);
    let kurt = pow(4) / (m2 * m2);
    let jb = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    (jb, (-jb / 2.0).exp())
}

/// Sample covariance matrix of row vectors, row-major `d×d`.
pub fn covariance_matrix(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.first().map_or(0, Vec::len);
    let mut out = vec![0.0; d * d];
    if rows.len() < 2 {
        return vec![f64::NAN; d * d];
    }
    let means: Vec<f64> = (0..d)
        .map(|a| mean(&rows.iter().map(|r| r[a]).collect::<Vec<_>>()))
        .collect();
    for a in 0..d {
        for b in a..d {
            let prods: Vec<f64> = rows.iter().map(|r| (r[a] - means[a]) * (r[b] - means[b])).collect();
            let v = pairwise_sum(&prods) / (rows.len() - 1) as f64;
            out[a * d + b] = v;
            out[b * d + a] = v;
        }
    }
    out
}

/// `‖A − B‖_F / ‖B‖_F`, or the absolute distance when `B = 0`.
pub fn relative_frobenius(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Symmetric positive semidefiniteness of a row-major `d×d` matrix, up to `tol·max|a_ii|`.
pub fn is_symmetric_psd(a: &[f64], d: usize, tol: f64) -> bool {
    if a.len() != d * d {
        return false;
    }
    for i in 0..d {
        for j in 0..i {
            if a[i * d + j] != a[j * d + i] {
                return false;
            }
        }
    }
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let jitter = tol * scale;
    // Cholesky of A + jitter·I
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = a[i * d + i] + jitter - s;
                if v < 0.0 {
                    return false;
                }
                l[i * d + i] = v.sqrt();
            } else if l[j * d + j] > 0.0 {
                l[i * d + j] = (a[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn exact_line_is_recovered() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 3.0).abs() < 1e-14);
        assert!(f.slope_std_error < 1e-12);
        assert!(least_squares_slope(&[1.0], &[2.0]).is_none());
        assert!(loglog_fit(&[1.0, 2.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn ks_statistic_basics() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
        assert!((ks_threshold_5pct(100, 100) - 1.358 * 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn jarque_bera_of_symmetric_flat_sample() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let (jb, p) = jarque_bera(&xs);
        // uniform: skew 0, kurtosis 1.8
        assert!((jb - 1000.0 / 24.0 * 1.44).abs() < 0.5);
        assert!(p < 1e-10);
    }

    #[test]
    fn psd_detection() {
        assert!(is_symmetric_psd(&[2.0, 1.0, 1.0, 2.0], 2, 1e-12));
        assert!(is_symmetric_psd(&[1.0, 1.0, 1.0, 1.0], 2, 1e-12));
        assert!(!is_symmetric_psd(&[1.0, 2.0, 2.0, 1.0], 2, 1e-12));
        assert!(!is_symmetric_psd(&[1.0, 0.5, 0.4, 1.0], 2, 1e-12));
    }

    #[test]
    fn covariance_of_perfectly_correlated_rows() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let c = covariance_matrix(&rows);
        assert!((c[1] - 2.0 * c[0]).abs() < 1e-12);
        assert!((c[3] - 4.0 * c[0]).abs() < 1e-12);
        assert!(relative_frobenius(&c, &c) == 0.0);
    }
}
