//! Shared inputs for the criterion benches.

use walkcast_core::synth::{synthesize, SynthKind};
use walkcast_core::{DatasetSplit, Matrix};

/// Deterministic pseudo-random matrix with entries in [-1, 1).
pub fn filled(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let data = (0..rows * cols)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

/// Noise series split 80/20 on week boundaries.
pub fn noise_split(days: usize) -> DatasetSplit {
    let records = synthesize(SynthKind::Noise, days, 0);
    let cut = days * 4 / 5 / 5 * 5;
    DatasetSplit::from_partitions(records[..cut].to_vec(), records[cut..].to_vec()).expect("valid split")
}
