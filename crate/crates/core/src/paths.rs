//! Reproducible Brownian increments on uniform grids.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SveError};
use crate::rng::{key_from_seed, normal_pair};

/// Independent random streams used by the simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamTag {
    DrivingW,
    LimitB,
}

impl StreamTag {
    fn code(self) -> u32 {
        match self {
            StreamTag::DrivingW => 0,
            StreamTag::LimitB => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub path_index: u64,
    pub stream_tag: StreamTag,
}

impl SeedSpec {
    pub fn new(master_seed: u64, path_index: u64, stream_tag: StreamTag) -> Self {
        Self { master_seed, path_index, stream_tag }
    }

    pub fn driving(master_seed: u64, path_index: u64) -> Self {
        Self::new(master_seed, path_index, StreamTag::DrivingW)
    }

    pub fn with_tag(self, stream_tag: StreamTag) -> Self {
        Self { stream_tag, ..self }
    }

    /// Two standard normals for `(cell, component)`.
    pub fn normals(&self, cell: u32, component: u32) -> [f64; 2] {
        let counter = [
            cell,
            component | (self.stream_tag.code() << 24),
            self.path_index as u32,
            (self.path_index >> 32) as u32,
        ];
        normal_pair(counter, key_from_seed(self.master_seed))
    }
}

/// `N×m` Brownian increments on `[0, T]`.
///
/// `auxiliary` holds the second normal of each Box–Muller pair; it drives
/// the exact singular-cell integrals and is absent after aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    pub m: usize,
    pub n_steps: usize,
    pub horizon: f64,
    pub increments: Array2<f64>,
    pub auxiliary: Option<Array2<f64>>,
    pub seed: Option<SeedSpec>,
}

impl BrownianGrid {
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Brownian values at the grid times, `(N+1)×m`.
    pub fn cumulative(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_steps + 1, self.m));
        for k in 0..self.n_steps {
            for l in 0..self.m {
                out[[k + 1, l]] = out[[k, l]] + self.increments[[k, l]];
            }
        }
        out
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.cumulative().row(self.n_steps).to_vec()
    }
}

/// Generates `N×m` Gaussian increments with variance `T/N`.
pub fn generate_brownian(seed: SeedSpec, m: usize, n_steps: usize, horizon: f64) -> Result<BrownianGrid> {
    if n_steps == 0 || m == 0 {
        return Err(SveError::Contract("Brownian grid needs N >= 1 and m >= 1".into()));
    }
    if n_steps > u32::MAX as usize || m >= 1 << 24 {
        return Err(SveError::Contract("Brownian grid exceeds the counter layout".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SveError::Contract(format!("horizon T = {horizon} must be positive")));
    }
    let scale = (horizon / n_steps as f64).sqrt();
    let mut increments = Array2::zeros((n_steps, m));
    let mut auxiliary = Array2::zeros((n_steps, m));
    for k in 0..n_steps {
        for l in 0..m {
            let [z1, z2] = seed.normals(k as u32, l as u32);
            increments[[k, l]] = scale * z1;
            auxiliary[[k, l]] = z2;
        }
    }
    Ok(BrownianGrid { m, n_steps, horizon, increments, auxiliary: Some(auxiliary), seed: Some(seed) })
}

/// Sums consecutive blocks of `refinement` fine increments.
pub fn aggregate(fine: &BrownianGrid, refinement: usize) -> Result<BrownianGrid> {
    if refinement == 0 || !fine.n_steps.is_multiple_of(refinement) {
        return Err(SveError::Contract(format!(
            "M = {refinement} does not divide N = {}",
            fine.n_steps
        )));
    }
    let n = fine.n_steps / refinement;
    let mut increments = Array2::zeros((n, fine.m));
    for (q, block) in fine.increments.axis_chunks_iter(Axis(0), refinement).enumerate() {
        for l in 0..fine.m {
            increments[[q, l]] = block.column(l).iter().sum();
        }
    }
    Ok(BrownianGrid {
        m: fine.m,
        n_steps: n,
        horizon: fine.horizon,
        increments,
        auxiliary: if refinement == 1 { fine.auxiliary.clone() } else { None },
        seed: fine.seed,
    })
}

/// Covariance factor of `(ΔW, ∫_0^δ (δ−u)^{H−1/2} dW_u)` over one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularCellFactor {
    pub l11: f64,
    pub l21: f64,
    pub l22: f64,
}

impl SingularCellFactor {
    pub fn new(h: f64, delta: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) || !(delta > 0.0) {
            return Err(SveError::Domain(format!("singular cell needs H in (0,1) and delta > 0, got {h}, {delta}")));
        }
        let var_w = delta;
        let var_i = delta.powf(2.0 * h) / (2.0 * h);
        let cov = delta.powf(h + 0.5) / (h + 0.5);
        let l11 = var_w.sqrt();
        let l21 = cov / l11;
        let schur = var_i - l21 * l21;
        // (H+1/2)² ≥ 2H with equality only at H = 1/2
        assert!(schur >= -1e-14 * var_i, "singular-cell covariance is not positive semidefinite");
        Ok(Self { l11, l21, l22: schur.max(0.0).sqrt() })
    }
}

/// Jointly Gaussian `(ΔW, I)` over a singular cell from two standard normals.
pub fn singular_cell_pair(normals: [f64; 2], h: f64, delta: f64) -> Result<(f64, f64)> {
    let f = SingularCellFactor::new(h, delta)?;
    Ok((f.l11 * normals[0], f.l21 * normals[0] + f.l22 * normals[1]))
}

const DUMP_MAGIC: &[u8; 4] = b"SVEW";
pub const DUMP_HEADER_LEN: usize = 32;

/// Little-endian dump: 32-byte header (magic, m: u32, N: u64, T: f64, 8 reserved bytes), then `N×m` f64 row-major.
pub fn encode_dump(grid: &BrownianGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(DUMP_HEADER_LEN + 8 * grid.increments.len());
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&(grid.m as u32).to_le_bytes());
    out.extend_from_slice(&(grid.n_steps as u64).to_le_bytes());
    out.extend_from_slice(&grid.horizon.to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    for v in grid.increments.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dump(bytes: &[u8]) -> Result<BrownianGrid> {
    if bytes.len() < DUMP_HEADER_LEN || &bytes[..4] != DUMP_MAGIC {
        return Err(SveError::Contract("not a Brownian dump (bad header)".into()));
    }
    let m = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let n_steps = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let horizon = f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let body = &bytes[DUMP_HEADER_LEN..];
    if body.len() != 8 * m * n_steps {
        return Err(SveError::Contract(format!(
            "dump body has {} bytes, expected {}",
            body.len(),
            8 * m * n_steps
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let increments = Array2::from_shape_vec((n_steps, m), values)
        .map_err(|e| SveError::Contract(e.to_string()))?;
    Ok(BrownianGrid { m, n_steps, horizon, increments, auxiliary: None, seed: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{jarque_bera, mean, pairwise_sum, variance};

    #[test]
    fn same_seed_is_bitwise_identical() {
        let s = SeedSpec::driving(42, 3);
        let a = generate_brownian(s, 2, 100, 1.0).unwrap();
        let b = generate_brownian(s, 2, 100, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 20_000;
        let a = generate_brownian(SeedSpec::driving(1, 0), 1, n, 1.0).unwrap();
        let b = generate_brownian(SeedSpec::driving(1, 1), 1, n, 1.0).unwrap();
        let c = generate_brownian(SeedSpec::new(1, 0, StreamTag::LimitB), 1, n, 1.0).unwrap();
        for other in [&b, &c] {
            let x = a.increments.column(0).to_vec();
            let y = other.increments.column(0).to_vec();
            let (mx, my) = (mean(&x), mean(&y));
            let cov: Vec<f64> = x.iter().zip(&y).map(|(p, q)| (p - mx) * (q - my)).collect();
            let corr = pairwise_sum(&cov) / (n as f64 - 1.0) / (variance(&x) * variance(&y)).sqrt();
            assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
        }
    }

    #[test]
    fn single_step_variance_over_seeds() {
        let t = 2.0;
        let xs: Vec<f64> = (0..100_000)
            .map(|i| generate_brownian(SeedSpec::driving(9, i), 1, 1, t).unwrap().increments[[0, 0]])
            .collect();
        assert!((variance(&xs) / t - 1.0).abs() < 0.03);
    }

    #[test]
    fn increments_look_gaussian() {
        let g = generate_brownian(SeedSpec::driving(5, 0), 4, 250_000, 1.0).unwrap();
        let xs: Vec<f64> = g.increments.iter().copied().collect();
        let (_, p) = jarque_bera(&xs);
        assert!(p > 1e-3, "p = {p}");
        let se = (2.0 / xs.len() as f64).sqrt() * g.dt();
        assert!((variance(&xs) - g.dt()).abs() < 5.0 * se);
    }

    #[test]
    fn aggregation_examples() {
        let g = generate_brownian(SeedSpec::driving(3, 0), 2, 8, 1.0).unwrap();
        assert_eq!(aggregate(&g, 1).unwrap().increments, g.increments);
        let one = aggregate(&g, 8).unwrap();
        assert_eq!(one.increments[[0, 1]], g.increments.column(1).iter().sum::<f64>());
        let four = aggregate(&g, 4).unwrap();
        assert_eq!(four.increments[[0, 0]], (0..4).map(|k| g.increments[[k, 0]]).sum::<f64>());
        assert!(matches!(aggregate(&g, 3), Err(SveError::Contract(_))));
    }

    #[test]
    fn singular_cell_moments() {
        let f = SingularCellFactor::new(0.5, 0.3).unwrap();
        assert!(f.l22.abs() < 1e-7);
        let (dw, i) = singular_cell_pair([0.7, -1.1], 0.5, 0.3).unwrap();
        assert!((dw - i).abs() < 1e-7);
        let f = SingularCellFactor::new(0.3, 1.0).unwrap();
        assert!((f.l11 * f.l21 - 1.0 / 0.8).abs() < 1e-14);
        assert!((f.l21 * f.l21 + f.l22 * f.l22 - 1.0 / 0.6).abs() < 1e-14);
        assert!(SingularCellFactor::new(1.2, 1.0).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let g = generate_brownian(SeedSpec::driving(11, 2), 3, 17, 1.5).unwrap();
        let bytes = encode_dump(&g);
        assert_eq!(bytes.len(), 32 + 8 * 3 * 17);
        assert_eq!(&bytes[..4], b"SVEW");
        let back = decode_dump(&bytes).unwrap();
        assert_eq!(back.increments, g.increments);
        assert_eq!((back.m, back.n_steps, back.horizon), (3, 17, 1.5));
        assert!(decode_dump(&bytes[..40]).is_err());
    }
}
