use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ExperimentError;
use crate::linalg::DenseMatrix;
use crate::observation::{classify_connectivity, ConnectivityClass, IncompleteMatrix};

/// Attempts allowed when drawing a mask of a prescribed connectivity class.
const MAX_MASK_DRAWS: usize = 1_000_000;

fn check_params(d: usize, r: usize, n: usize) -> Result<(), ExperimentError> {
    if d == 0 || r == 0 || r >= d {
        return Err(ExperimentError::InvalidParameters(format!(
            "need 1 <= r < d, got d = {d}, r = {r}"
        )));
    }
    if n == 0 || n > d * d {
        return Err(ExperimentError::InvalidParameters(format!(
            "need 1 <= n <= {}, got n = {n}",
            d * d
        )));
    }
    Ok(())
}

fn gaussian_low_rank<R: Rng>(d: usize, r: usize, rng: &mut R) -> DenseMatrix {
    let x = DenseMatrix::from_fn(d, r, |_, _| rng.sample(StandardNormal));
    let y = DenseMatrix::from_fn(d, r, |_, _| rng.sample(StandardNormal));
    x.mul_transpose(&y).expect("conformant factors")
}

fn uniform_mask<R: Rng>(d: usize, n: usize, rng: &mut R) -> DenseMatrix {
    let mut mask = DenseMatrix::zeros(d, d);
    for p in sample(rng, d * d, n) {
        mask[(p / d, p % d)] = 1.0;
    }
    mask
}

fn assemble<R: Rng>(
    d: usize,
    r: usize,
    mask: &DenseMatrix,
    rng: &mut R,
) -> Result<IncompleteMatrix, ExperimentError> {
    loop {
        let truth = gaussian_low_rank(d, r, rng);
        let has_zero = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .any(|(i, j)| mask[(i, j)] != 0.0 && truth[(i, j)] == 0.0);
        if !has_zero {
            return Ok(IncompleteMatrix::new(truth, mask.clone())?);
        }
    }
}

/// `M* = X Y^T` with standard Gaussian `d x r` factors, observed at `n`
/// distinct uniformly drawn positions. Deterministic in `seed`.
pub fn generate_random_instance(
    d: usize,
    r: usize,
    n: usize,
    seed: u64,
) -> Result<IncompleteMatrix, ExperimentError> {
    check_params(d, r, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = uniform_mask(d, n, &mut rng);
    assemble(d, r, &mask, &mut rng)
}

/// As [`generate_random_instance`], with the mask drawn by rejection
/// sampling conditioned on its connectivity class.
pub fn sample_instance_with_class(
    d: usize,
    r: usize,
    n: usize,
    class: ConnectivityClass,
    seed: u64,
) -> Result<IncompleteMatrix, ExperimentError> {
    check_params(d, r, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_MASK_DRAWS {
        let mask = uniform_mask(d, n, &mut rng);
        let probe = IncompleteMatrix::new(mask.clone(), mask.clone())?;
        if classify_connectivity(&probe)? == class {
            return assemble(d, r, &mask, &mut rng);
        }
    }
    Err(ExperimentError::InvalidParameters(format!(
        "no {class} mask with d = {d}, n = {n} found in {MAX_MASK_DRAWS} draws"
    )))
}
