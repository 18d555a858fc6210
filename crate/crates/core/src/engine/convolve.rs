//! Online and offline discrete Volterra convolutions.
//!
//! The solvers need `acc_c[k] = Σ_{j<k} w_c[k−j] g_c[j]`, where `g[j]` is only
//! known once the state at index `j` is final. [`VolterraConvolver`] runs
//! this recursion in `O(N log² N)`: the index range is halved recursively,
//! the left half is solved first, and its contribution to the right half is
//! added by one circular FFT of the block length (lags stay in `1..L`, so no
//! wrap-around occurs). Small blocks are summed directly.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SveError};

const LEAF: usize = 32;

/// Per-step callback of an online convolution.
pub trait Stepper {
    /// Called once `states[k]` is final (`states` holds rows `0..=k`, row-major
    /// with one column per channel). Writes the convolution input `g[k]` into
    /// `input` and any additive term for `states[k+1]` into `next_correction`
    /// (zero-filled on entry).
    fn step(&mut self, k: usize, states: &[f64], input: &mut [f64], next_correction: &mut [f64]);
}

struct Level {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    spectra: Vec<Vec<Complex<f64>>>,
}

/// Precomputed FFT plans and kernel spectra for a fixed set of kernels.
pub struct VolterraConvolver {
    len: usize,
    size: usize,
    kernels: Vec<Vec<f64>>,
    levels: Vec<Option<Level>>,
}

impl std::fmt::Debug for VolterraConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VolterraConvolver")
            .field("len", &self.len)
            .field("size", &self.size)
            .field("channels", &self.kernels.len())
            .finish()
    }
}

impl VolterraConvolver {
    /// `kernels[c][r]` is the weight at lag `r`; entries at lag 0 are ignored.
    /// Produces states at indices `0..len`.
    pub fn new(kernels: &[Vec<f64>], len: usize) -> Result<Self> {
        if kernels.is_empty() || len == 0 {
            return Err(SveError::Contract("convolver needs at least one channel and one index".into()));
        }
        if let Some(c) = kernels.iter().position(|w| w.len() < len) {
            return Err(SveError::Contract(format!("kernel {c} is shorter than {len} lags")));
        }
        let size = len.next_power_of_two().max(1);
        let padded: Vec<Vec<f64>> = kernels
            .iter()
            .map(|w| {
                let mut p = vec![0.0; size];
                p[1..len].copy_from_slice(&w[1..len]);
                p
            })
            .collect();
        let mut planner = FftPlanner::new();
        let mut levels = Vec::new();
        let mut block = 1usize;
        while block <= size {
            if block > LEAF {
                let fft = planner.plan_fft_forward(block);
                let ifft = planner.plan_fft_inverse(block);
                let spectra = padded
                    .iter()
                    .map(|w| {
                        let mut buf: Vec<Complex<f64>> = w[..block].iter().map(|&x| Complex::new(x, 0.0)).collect();
                        fft.process(&mut buf);
                        buf
                    })
                    .collect();
                levels.push(Some(Level { fft, ifft, spectra }));
            } else {
                levels.push(None);
            }
            block *= 2;
        }
        Ok(Self { len, size, kernels: padded, levels })
    }

    pub fn channels(&self) -> usize {
        self.kernels.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Runs `states[k] = base + acc[k] + correction[k]` for `k = 0..len`.
    ///
    /// Returns the states row-major `len × channels`, or a divergence error at
    /// the first non-finite entry.
    pub fn run<S: Stepper>(&self, base: &[f64], stepper: &mut S) -> Result<Vec<f64>> {
        let d = self.channels();
        if base.len() != d {
            return Err(SveError::Contract(format!("base has {} entries, expected {d}", base.len())));
        }
        let mut work = Work {
            acc: vec![0.0; d * self.size],
            g: vec![0.0; d * self.size],
            states: vec![0.0; d * self.len],
            pending: vec![0.0; d],
            input: vec![0.0; d],
            next: vec![0.0; d],
            buf: vec![Complex::new(0.0, 0.0); self.size],
            scratch: Vec::new(),
            base: base.to_vec(),
            diverged: None,
        };
        self.solve(0, self.size, &mut work, stepper);
        match work.diverged {
            Some((index, component)) => Err(SveError::Divergence { index, component }),
            None => Ok(work.states),
        }
    }

    fn solve<S: Stepper>(&self, lo: usize, hi: usize, w: &mut Work, stepper: &mut S) {
        if lo >= self.len || w.diverged.is_some() {
            return;
        }
        if hi - lo <= LEAF {
            self.leaf(lo, hi, w, stepper);
            return;
        }
        let mid = (lo + hi) / 2;
        self.solve(lo, mid, w, stepper);
        if mid < self.len && w.diverged.is_none() {
            self.cross(lo, mid, hi, w);
            self.solve(mid, hi, w, stepper);
        }
    }

    fn leaf<S: Stepper>(&self, lo: usize, hi: usize, w: &mut Work, stepper: &mut S) {
        let d = self.channels();
        let size = self.size;
        for k in lo..hi.min(self.len) {
            for c in 0..d {
                let kern = &self.kernels[c];
                let g = &w.g[c * size..];
                let mut s = 0.0;
                for j in lo..k {
                    s += kern[k - j] * g[j];
                }
                w.acc[c * size + k] += s;
                let x = w.base[c] + w.acc[c * size + k] + w.pending[c];
                if !x.is_finite() {
                    w.diverged = Some((k, c));
                    return;
                }
                w.states[k * d + c] = x;
            }
            if k + 1 < self.len {
                w.input.fill(0.0);
                w.next.fill(0.0);
                stepper.step(k, &w.states[..(k + 1) * d], &mut w.input, &mut w.next);
                for c in 0..d {
                    w.g[c * size + k] = w.input[c];
                }
                w.pending.copy_from_slice(&w.next);
            }
        }
    }

    fn cross(&self, lo: usize, mid: usize, hi: usize, w: &mut Work) {
        let block = hi - lo;
        let half = mid - lo;
        let level = self.levels[block.trailing_zeros() as usize]
            .as_ref()
            .expect("FFT level exists above the leaf size");
        let scale = 1.0 / block as f64;
        let top = hi.min(self.len);
        for c in 0..self.channels() {
            let g = &w.g[c * self.size..];
            let buf = &mut w.buf[..block];
            for (p, b) in buf.iter_mut().enumerate() {
                *b = if p < half { Complex::new(g[lo + p], 0.0) } else { Complex::new(0.0, 0.0) };
            }
            let need = level.fft.get_inplace_scratch_len().max(level.ifft.get_inplace_scratch_len());
            if w.scratch.len() < need {
                w.scratch.resize(need, Complex::new(0.0, 0.0));
            }
            level.fft.process_with_scratch(buf, &mut w.scratch[..need]);
            for (b, s) in buf.iter_mut().zip(&level.spectra[c]) {
                *b *= s;
            }
            level.ifft.process_with_scratch(buf, &mut w.scratch[..need]);
            let acc = &mut w.acc[c * self.size..];
            for k in mid..top {
                acc[k] += buf[k - lo].re * scale;
            }
        }
    }
}

struct Work {
    acc: Vec<f64>,
    g: Vec<f64>,
    states: Vec<f64>,
    pending: Vec<f64>,
    input: Vec<f64>,
    next: Vec<f64>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    base: Vec<f64>,
    diverged: Option<(usize, usize)>,
}

/// `out[k] = Σ_{j<k} w[k−j] g[j]` for `k = 0..g.len()+1`, by one zero-padded FFT.
pub fn convolve_known(w: &[f64], g: &[f64]) -> Vec<f64> {
    let len = g.len() + 1;
    assert!(w.len() >= len, "kernel shorter than the sequence");
    if len <= 64 {
        return (0..len).map(|k| (0..k).map(|j| w[k - j] * g[j]).sum()).collect();
    }
    let size = (2 * len).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);
    let mut a = vec![Complex::new(0.0, 0.0); size];
    let mut b = vec![Complex::new(0.0, 0.0); size];
    for r in 1..len {
        a[r] = Complex::new(w[r], 0.0);
    }
    for (j, &x) in g.iter().enumerate() {
        b[j] = Complex::new(x, 0.0);
    }
    fft.process(&mut a);
    fft.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    ifft.process(&mut a);
    let scale = 1.0 / size as f64;
    (0..len).map(|k| if k == 0 { 0.0 } else { a[k].re * scale }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        a: f64,
        forcing: Vec<f64>,
    }

    impl Stepper for Linear {
        fn step(&mut self, k: usize, states: &[f64], input: &mut [f64], _next: &mut [f64]) {
            input[0] = self.a * states[k] + self.forcing[k];
        }
    }

    fn direct(w: &[f64], base: f64, a: f64, forcing: &[f64], len: usize) -> Vec<f64> {
        let mut x = vec![0.0; len];
        let mut g = vec![0.0; len];
        for k in 0..len {
            x[k] = base + (0..k).map(|j| w[k - j] * g[j]).sum::<f64>();
            g[k] = a * x[k] + forcing[k];
        }
        x
    }

    #[test]
    fn online_matches_direct_recursion() {
        for len in [1usize, 5, 33, 64, 100, 513, 1000] {
            let w: Vec<f64> = (0..len).map(|r| if r == 0 { 0.0 } else { (r as f64).powf(-0.3) * 0.01 }).collect();
            let forcing: Vec<f64> = (0..len).map(|k| ((k * 7919) % 13) as f64 / 13.0 - 0.5).collect();
            let conv = VolterraConvolver::new(std::slice::from_ref(&w), len).unwrap();
            let got = conv.run(&[1.0], &mut Linear { a: -0.4, forcing: forcing.clone() }).unwrap();
            let want = direct(&w, 1.0, -0.4, &forcing, len);
            for k in 0..len {
                assert!((got[k] - want[k]).abs() < 1e-12 * want[k].abs().max(1.0), "len {len}, k {k}");
            }
        }
    }

    #[test]
    fn offline_matches_direct_sum() {
        let w: Vec<f64> = (0..300).map(|r| 1.0 / (1.0 + r as f64)).collect();
        let g: Vec<f64> = (0..299).map(|j| (j as f64 * 0.1).sin()).collect();
        let got = convolve_known(&w, &g);
        for k in 0..300 {
            let want: f64 = (0..k).map(|j| w[k - j] * g[j]).sum();
            assert!((got[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let len = 200;
        let w = vec![1.0; len];
        let conv = VolterraConvolver::new(&[w], len).unwrap();
        let err = conv.run(&[1.0], &mut Linear { a: 1e300, forcing: vec![0.0; len] }).unwrap_err();
        assert!(matches!(err, SveError::Divergence { component: 0, .. }));
    }
}
