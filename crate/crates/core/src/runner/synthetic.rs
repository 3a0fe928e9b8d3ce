//! Sparse-model synthetic signals `Y = D_true X_true`.

use nalgebra::DMatrix;
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::imaging::PatchMatrix;
use crate::rng::{stream_rng, Stream};
use crate::sparse_coding::Dictionary;

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dictionary: Dictionary,
    /// Dense `atoms × q` code matrix with exactly `k` nonzeros per column.
    pub codes: DMatrix<f64>,
    pub signals: PatchMatrix,
}

/// Gaussian unit-norm dictionary and `k`-sparse Gaussian codes.
pub fn generate(m: usize, atoms: usize, q: usize, k: usize, seed: u64) -> Result<SyntheticData> {
    if m == 0 || atoms == 0 || q == 0 {
        return Err(Error::InvalidArgument(
            "synthetic dimensions must be positive".into(),
        ));
    }
    if k == 0 || k > atoms {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={atoms}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Synthetic);
    let raw = DMatrix::from_fn(m, atoms, |_, _| StandardNormal.sample(&mut rng));
    let dictionary = Dictionary::normalized(raw)?;
    let mut codes = DMatrix::zeros(atoms, q);
    for col in 0..q {
        for row in index::sample(&mut rng, atoms, k) {
            codes[(row, col)] = StandardNormal.sample(&mut rng);
        }
    }
    let signals = PatchMatrix::new(dictionary.matrix() * &codes);
    Ok(SyntheticData {
        dictionary,
        codes,
        signals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_sparsity_and_determinism() {
        let a = generate(8, 12, 30, 3, 5).unwrap();
        assert_eq!(a.signals.data.shape(), (8, 30));
        for c in 0..30 {
            assert_eq!(a.codes.column(c).iter().filter(|v| **v != 0.0).count(), 3);
        }
        let b = generate(8, 12, 30, 3, 5).unwrap();
        assert_eq!(a.signals, b.signals);
        assert_ne!(generate(8, 12, 30, 3, 6).unwrap().signals, a.signals);
        assert!(generate(8, 12, 30, 13, 5).is_err());
    }
}
