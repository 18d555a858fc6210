use ndarray::Array3;

use super::scheme::SchemePath;
use crate::error::{Result, SveError};
use crate::paths::BrownianGrid;

/// `V^{k,j}_t = n^H Σ_{cells < t} (X̂^k_{s_i} − X̂^k_{[ns_i]/n}) ΔW^j_i`, left-point Itô sums.
///
/// Returned as `(N+1)×d×m`.
pub fn v_process(coarse: &SchemePath, w: &BrownianGrid, n: usize, h: f64) -> Result<Array3<f64>> {
    let fine = coarse.fine_steps();
    if w.n_steps != fine || n == 0 || !fine.is_multiple_of(n) {
        return Err(SveError::Contract("V process needs a shared fine grid with M·n = N".into()));
    }
    let refinement = fine / n;
    let d = coarse.states.ncols();
    let m = w.m;
    let scale = (n as f64).powf(h);
    let mut v = Array3::zeros((fine + 1, d, m));
    for i in 0..fine {
        let q = (i / refinement) * refinement;
        for k in 0..d {
            let delta = coarse.states[[i, k]] - coarse.states[[q, k]];
            for j in 0..m {
                v[[i + 1, k, j]] = v[[i, k, j]] + scale * delta * w.increments[[i, j]];
            }
        }
    }
    Ok(v)
}
