use rand::Rng;

use crate::error::{Error, Result};

/// Inverted dropout: each entry is zeroed with probability `eta`, survivors
/// are scaled by `1 / (1 − eta)`. Returns the masked values and the mask of
/// scale factors. `eta = 0` is the identity and draws nothing.
pub fn apply_dropout<R: Rng + ?Sized>(values: &[f64], eta: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mask = dropout_mask(values.len(), eta, rng)?;
    let out = values.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((out, mask))
}

pub fn dropout_mask<R: Rng + ?Sized>(len: usize, eta: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("dropout rate {eta} outside [0, 1)")));
    }
    if eta == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - eta);
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < eta { 0.0 } else { keep })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = [1.0, -2.0, 3.5];
        let (out, mask) = apply_dropout(&v, 0.0, &mut rng).unwrap();
        assert_eq!(out, v);
        assert_eq!(mask, [1.0; 3]);
        assert!(apply_dropout(&v, 1.0, &mut rng).is_err());
        assert!(apply_dropout(&v, -0.1, &mut rng).is_err());
    }

    #[test]
    fn expectation_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = [2.0; 8];
        let mut sum = [0.0; 8];
        let draws = 100_000;
        for _ in 0..draws {
            let (out, _) = apply_dropout(&v, 0.3, &mut rng).unwrap();
            for (s, o) in sum.iter_mut().zip(out) {
                *s += o;
            }
        }
        for s in sum {
            assert!((s / draws as f64 - 2.0).abs() < 0.02);
        }
    }

    #[test]
    fn drop_fraction_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mask = dropout_mask(1_000_000, 0.5, &mut rng).unwrap();
        let zeros = mask.iter().filter(|&&m| m == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.5).abs() < 0.002, "{zeros}");
    }
}
