//! Size accounting for clustered models.
//!
//! A clustered layer costs `ceil(log2 K)` bits per `b x b` block, the
//! codebook costs `b*b*K*wordlength` bits once, and unclustered weights keep
//! their full wordlength. The headline ratio ignores the codebook and raw
//! layers: `b*b*wordlength / ceil(log2 K)`.

use serde::Serialize;

/// `max(1, ceil(log2 K))`. K = 1 still spends one bit per block so the
/// stream stays decodable.
pub fn bits_per_index(k: usize) -> u32 {
    if k <= 2 {
        1
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}

pub fn codebook_bits(k: usize, b: usize, wordlength: u32) -> u64 {
    (b * b) as u64 * k as u64 * wordlength as u64
}

pub fn codebook_bytes(k: usize, b: usize, wordlength: u32) -> u64 {
    codebook_bits(k, b, wordlength).div_ceil(8)
}

pub fn theoretical_cr(k: usize, b: usize, wordlength: u32) -> f64 {
    (b * b) as f64 * wordlength as f64 / bits_per_index(k) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrBreakdown {
    pub theoretical_cr: f64,
    /// Whole compressed model: indices + codebook + raw weights.
    pub compressed_bits: u64,
    pub codebook_bits: u64,
    pub index_bits: u64,
    pub raw_bits: u64,
    /// Uncompressed size of the same weights, `(P_compressed + P_raw) * wordlength`.
    pub original_bits: u64,
}

/// Size of the clustered model in bits given `p_compressed` clustered weights
/// and `p_raw` weights left unclustered.
pub fn compute_cr(p_compressed: usize, p_raw: usize, k: usize, b: usize, wordlength: u32) -> CrBreakdown {
    let bits = bits_per_index(k) as u64;
    let index_bits = (p_compressed as u64 * bits).div_ceil((b * b) as u64);
    let codebook_bits = codebook_bits(k, b, wordlength);
    let raw_bits = p_raw as u64 * wordlength as u64;
    CrBreakdown {
        theoretical_cr: theoretical_cr(k, b, wordlength),
        compressed_bits: index_bits + codebook_bits + raw_bits,
        codebook_bits,
        index_bits,
        raw_bits,
        original_bits: (p_compressed + p_raw) as u64 * wordlength as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_widths() {
        let table = [(1, 1), (2, 1), (3, 2), (4, 2), (5, 3), (16, 4), (17, 5), (32, 5), (50, 6), (256, 8), (257, 9)];
        for (k, bits) in table {
            assert_eq!(bits_per_index(k), bits, "K = {k}");
        }
    }

    #[test]
    fn headline_ratios() {
        assert_eq!(theoretical_cr(256, 4, 32), 64.0);
        assert_eq!(theoretical_cr(16, 4, 32), 128.0);
        assert_eq!(theoretical_cr(256, 1, 32), 4.0);
        assert_eq!(theoretical_cr(32, 4, 32), 102.4);
    }

    #[test]
    fn codebook_term() {
        assert_eq!(codebook_bits(50, 4, 32), 25_600);
        assert_eq!(codebook_bytes(50, 4, 32), 3_200);
        assert_eq!(codebook_bytes(32, 4, 32), 2_048);
    }

    #[test]
    fn full_size() {
        // 512x512 layer, K = 16: 16384 blocks * 4 bits + 16 legos * 16 * 32 bits
        let cr = compute_cr(262_144, 0, 16, 4, 32);
        assert_eq!(cr.index_bits, 65_536);
        assert_eq!(cr.codebook_bits, 8_192);
        assert_eq!(cr.compressed_bits, 73_728);
        let cr = compute_cr(16, 640, 2, 4, 32);
        assert_eq!(cr.compressed_bits, 1 + 2 * 16 * 32 + 640 * 32);
    }

    #[test]
    fn monotone_in_bits_and_quadratic_in_b() {
        let mut prev = f64::INFINITY;
        for k in 1..=1024 {
            let cr = theoretical_cr(k, 4, 32);
            assert!(cr <= prev);
            prev = cr;
        }
        for b in 1..=16 {
            for k in [2, 7, 50, 256] {
                assert_eq!(theoretical_cr(k, 2 * b, 32) / theoretical_cr(k, b, 32), 4.0);
            }
        }
    }
}
