use std::collections::BTreeSet;

use itertools::Itertools;

use super::ObservationError;
use crate::linalg::{ensure_binary, DenseMatrix, LinalgError};

/// Largest side accepted by [`enumerate_pattern_classes`].
pub const MAX_ENUMERATION_DIM: usize = 4;

type Bits = Vec<u8>;

fn to_bits(mask: &DenseMatrix) -> Bits {
    mask.as_slice()
        .iter()
        .map(|&x| u8::from(x == 1.0))
        .collect()
}

fn from_bits(d: usize, bits: &[u8]) -> DenseMatrix {
    DenseMatrix::from_fn(d, d, |i, j| f64::from(bits[i * d + j]))
}

fn transpose_bits(d: usize, bits: &[u8]) -> Bits {
    (0..d * d).map(|k| bits[(k % d) * d + k / d]).collect()
}

/// For a fixed row order, sorting the columns (as top-to-bottom words)
/// ascending gives the row-major lexicographic minimum over all column orders.
fn sort_columns(d: usize, bits: &[u8]) -> Bits {
    let mut cols: Vec<Vec<u8>> = (0..d)
        .map(|j| (0..d).map(|i| bits[i * d + j]).collect())
        .collect();
    cols.sort();
    (0..d * d).map(|k| cols[k % d][k / d]).collect()
}

fn canonical_bits(d: usize, bits: &[u8]) -> Bits {
    let views = [bits.to_vec(), transpose_bits(d, bits)];
    let mut best: Option<Bits> = None;
    for view in &views {
        for perm in (0..d).permutations(d) {
            let permuted: Bits = (0..d * d).map(|k| view[perm[k / d] * d + k % d]).collect();
            let cand = sort_columns(d, &permuted);
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        }
    }
    best.unwrap_or_default()
}

/// Row-major lexicographic minimum of the orbit of `mask` under row
/// permutations, column permutations and transposition.
pub fn canonical_pattern(mask: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if !mask.is_square() {
        return Err(LinalgError::NotSquare(mask.rows(), mask.cols()));
    }
    ensure_binary(mask)?;
    let d = mask.rows();
    Ok(from_bits(d, &canonical_bits(d, &to_bits(mask))))
}

/// Every distinct image of `mask` under the symmetry group, sorted.
pub fn orbit(mask: &DenseMatrix) -> Result<Vec<DenseMatrix>, LinalgError> {
    if !mask.is_square() {
        return Err(LinalgError::NotSquare(mask.rows(), mask.cols()));
    }
    ensure_binary(mask)?;
    let d = mask.rows();
    let bits = to_bits(mask);
    let mut seen = BTreeSet::new();
    for view in [bits.clone(), transpose_bits(d, &bits)] {
        for rp in (0..d).permutations(d) {
            for cp in (0..d).permutations(d) {
                let img: Bits = (0..d * d)
                    .map(|k| view[rp[k / d] * d + cp[k % d]])
                    .collect();
                seen.insert(img);
            }
        }
    }
    Ok(seen.iter().map(|b| from_bits(d, b)).collect())
}

/// One canonical representative per equivalence class of d x d masks with
/// exactly `n` observations, in ascending row-major order.
pub fn enumerate_pattern_classes(d: usize, n: usize) -> Result<Vec<DenseMatrix>, ObservationError> {
    if d > MAX_ENUMERATION_DIM {
        return Err(ObservationError::DimensionTooLarge {
            d,
            max: MAX_ENUMERATION_DIM,
        });
    }
    if n == 0 || n > d * d {
        return Err(ObservationError::InvalidSampleSize { n, max: d * d });
    }
    let mut classes = BTreeSet::new();
    for pos in (0..d * d).combinations(n) {
        let mut bits = vec![0u8; d * d];
        for p in pos {
            bits[p] = 1;
        }
        classes.insert(canonical_bits(d, &bits));
    }
    Ok(classes.iter().map(|b| from_bits(d, b)).collect())
}
