//! Counter-based Philox4x32-10 generator.
//!
//! Every draw is a pure function of `(key, counter)`, so any Brownian cell
//! can be produced independently of all others.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Ten Philox rounds on one 128-bit counter block.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, ctr[0]);
        let (hi1, lo1) = mulhilo(M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// Uniform on `(0, 1]` with 53 random bits.
#[inline]
fn open_unit(hi: u32, lo: u32) -> f64 {
    let bits = (u64::from(hi >> 5) << 26) | u64::from(lo >> 6);
    (bits as f64 + 1.0) * (1.0 / 9_007_199_254_740_992.0)
}

/// Two independent uniforms on `(0, 1]` from one counter block.
pub fn uniform_pair(counter: [u32; 4], key: [u32; 2]) -> [f64; 2] {
    let r = philox4x32_10(counter, key);
    [open_unit(r[0], r[1]), open_unit(r[2], r[3])]
}

/// Two independent standard normals from one counter block (Box–Muller).
pub fn normal_pair(counter: [u32; 4], key: [u32; 2]) -> [f64; 2] {
    let [u1, u2] = uniform_pair(counter, key);
    let radius = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    [radius * c, radius * s]
}

/// Splits a 64-bit seed into a Philox key.
pub fn key_from_seed(seed: u64) -> [u32; 2] {
    [seed as u32, (seed >> 32) as u32]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_answer_vectors() {
        assert_eq!(philox4x32_10([0; 4], [0; 2]), [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]);
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10([0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344], [0xa409_3822, 0x299f_31d0]),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn unit_interval_bounds() {
        assert!(open_unit(0, 0) > 0.0);
        assert_eq!(open_unit(u32::MAX, u32::MAX), 1.0);
    }

    #[test]
    fn normals_have_unit_moments() {
        let key = key_from_seed(7);
        let n = 200_000u32;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for i in 0..n {
            for z in normal_pair([i, 0, 0, 0], key) {
                s1 += z;
                s2 += z * z;
            }
        }
        let m = s1 / (2 * n) as f64;
        let v = s2 / (2 * n) as f64 - m * m;
        assert!(m.abs() < 5.0 / (2.0 * n as f64).sqrt());
        assert!((v - 1.0).abs() < 0.01);
    }
}
