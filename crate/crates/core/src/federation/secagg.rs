//! Simulated secure aggregation: fixed-point quantisation plus pairwise
//! additive masks that cancel in the sum.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag, SimRng};

/// Fixed-point scale, `2^20`.
pub const FIXED_POINT_SCALE: f64 = 1_048_576.0;

pub fn quantize(x: f64) -> i64 {
    (x * FIXED_POINT_SCALE).round() as i64
}

pub fn dequantize(v: i64) -> f64 {
    v as f64 / FIXED_POINT_SCALE
}

/// Shared pair seeds for one round's participants.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskScheme {
    pair_seeds: BTreeMap<(usize, usize), u64>,
    participants: Vec<usize>,
}

impl MaskScheme {
    pub fn new(participants: &[usize], seed: u64, round: u64) -> Self {
        let mut p = participants.to_vec();
        p.sort_unstable();
        p.dedup();
        let mut pair_seeds = BTreeMap::new();
        for (a, &i) in p.iter().enumerate() {
            for &j in &p[a + 1..] {
                pair_seeds.insert((i, j), derive_seed(seed, &[tag::MASK, round, i as u64, j as u64]));
            }
        }
        Self {
            pair_seeds,
            participants: p,
        }
    }

    pub fn participants(&self) -> &[usize] {
        &self.participants
    }

    /// Drops the shared seed of one pair (simulates a failed key agreement).
    pub fn forget_pair(&mut self, i: usize, j: usize) {
        self.pair_seeds.remove(&(i.min(j), i.max(j)));
    }

    /// Mask that client `i` adds for its pair with `j`; the mask at `j` is its negation.
    pub fn pair_mask(&self, i: usize, j: usize, len: usize) -> Result<Vec<i64>> {
        let seed = *self
            .pair_seeds
            .get(&(i.min(j), i.max(j)))
            .ok_or_else(|| Error::invalid(format!("no shared mask seed for clients {i} and {j}")))?;
        let mut rng = SimRng::seed_from_u64(seed);
        let sign_flip = i > j;
        Ok((0..len)
            .map(|_| {
                let m = rng.next_u64() as i64;
                if sign_flip {
                    m.wrapping_neg()
                } else {
                    m
                }
            })
            .collect())
    }
}

/// Quantises `payload` and adds the client's pairwise masks (wrapping arithmetic).
pub fn mask_update(payload: &[f64], client: usize, scheme: &MaskScheme) -> Result<Vec<i64>> {
    if !scheme.participants.contains(&client) {
        return Err(Error::invalid(format!("client {client} is not a participant of the mask scheme")));
    }
    let mut out: Vec<i64> = payload.iter().map(|&x| quantize(x)).collect();
    for &j in &scheme.participants {
        if j == client {
            continue;
        }
        for (o, m) in out.iter_mut().zip(scheme.pair_mask(client, j, payload.len())?) {
            *o = o.wrapping_add(m);
        }
    }
    Ok(out)
}

/// Wrapping sum of masked vectors: the masks cancel, leaving the sum of the
/// quantised payloads.
pub fn unmask_sum(masked: &[Vec<i64>]) -> Result<Vec<i64>> {
    let first = masked.first().ok_or_else(|| Error::Insufficient("no masked updates to sum".into()))?;
    let mut sum = vec![0i64; first.len()];
    for m in masked {
        if m.len() != sum.len() {
            return Err(Error::dim("masked update length", sum.len(), m.len()));
        }
        for (s, v) in sum.iter_mut().zip(m) {
            *s = s.wrapping_add(*v);
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_clients_cancel() {
        let s = MaskScheme::new(&[3, 8], 1, 0);
        let a = mask_update(&[0.5, -1.25], 3, &s).unwrap();
        let b = mask_update(&[2.0, 0.125], 8, &s).unwrap();
        assert_ne!(a, vec![quantize(0.5), quantize(-1.25)]);
        let sum = unmask_sum(&[a, b]).unwrap();
        assert_eq!(sum, vec![quantize(0.5) + quantize(2.0), quantize(-1.25) + quantize(0.125)]);
    }

    #[test]
    fn quantisation_error_is_bounded() {
        for &x in &[0.1, -3.3333333, 1e-9, 123.456789] {
            assert!((dequantize(quantize(x)) - x).abs() <= 0.5 / FIXED_POINT_SCALE);
        }
    }

    #[test]
    fn pair_masks_are_negations() {
        let s = MaskScheme::new(&[0, 1, 2], 9, 4);
        let m01 = s.pair_mask(0, 1, 5).unwrap();
        let m10 = s.pair_mask(1, 0, 5).unwrap();
        assert!(m01.iter().zip(&m10).all(|(a, b)| a.wrapping_add(*b) == 0));
    }

    #[test]
    fn missing_pair_seed_is_an_error() {
        let mut s = MaskScheme::new(&[0, 1, 2], 9, 4);
        s.forget_pair(2, 1);
        assert!(mask_update(&[1.0], 1, &s).is_err());
        assert!(mask_update(&[1.0], 0, &s).is_ok());
        assert!(mask_update(&[1.0], 7, &s).is_err());
    }
}
