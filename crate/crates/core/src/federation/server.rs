//! Server-side state, participation sampling, marker aggregation and the
//! update wire format.

use rand::Rng;

use super::secagg::{dequantize, mask_update, unmask_sum, MaskScheme};
use crate::error::{Error, Result};
use crate::markers::Polarity;
use crate::rng::rng_for;

/// Each client joins independently with probability `q`.
pub fn sample_participants(n_clients: usize, q: f64, seed: u64, round: u64) -> Vec<usize> {
    let mut rng = rng_for(seed, &[crate::rng::tag::PARTICIPATION, round]);
    (0..n_clients).filter(|_| rng.random::<f64>() < q).collect()
}

/// One client's contribution: expected markers and aggregation weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    pub weight: f64,
    pub payload: Vec<f64>,
}

/// What actually crosses the wire: client id, weight and the masked,
/// fixed-point `weight * payload`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedUpdate {
    pub client: usize,
    pub weight: f64,
    pub masked: Vec<i64>,
}

impl MaskedUpdate {
    pub fn from_update(u: &ClientUpdate, scheme: &MaskScheme) -> Result<Self> {
        let weighted: Vec<f64> = u.payload.iter().map(|x| u.weight * x).collect();
        Ok(Self {
            client: u.client,
            weight: u.weight,
            masked: mask_update(&weighted, u.client, scheme)?,
        })
    }

    /// Little-endian: `u32` id, `f64` weight, `u32` length, `i64` entries.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(wire_bytes(self.masked.len()));
        out.extend((self.client as u32).to_le_bytes());
        out.extend(self.weight.to_le_bytes());
        out.extend((self.masked.len() as u32).to_le_bytes());
        for v in &self.masked {
            out.extend(v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::invalid("truncated masked update");
        let u32_at = |o: usize| -> Result<u32> {
            Ok(u32::from_le_bytes(bytes.get(o..o + 4).ok_or_else(bad)?.try_into().expect("4 bytes")))
        };
        let client = u32_at(0)? as usize;
        let weight = f64::from_le_bytes(bytes.get(4..12).ok_or_else(bad)?.try_into().expect("8 bytes"));
        let len = u32_at(12)? as usize;
        if bytes.len() != wire_bytes(len) {
            return Err(bad());
        }
        let masked = (0..len)
            .map(|k| i64::from_le_bytes(bytes[16 + 8 * k..24 + 8 * k].try_into().expect("8 bytes")))
            .collect();
        Ok(Self { client, weight, masked })
    }
}

/// Serialized size of one update with `n_markers` entries.
pub fn wire_bytes(n_markers: usize) -> usize {
    4 + 8 + 4 + 8 * n_markers
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub markers: Vec<f64>,
    pub polarity: Vec<Polarity>,
    pub round: u64,
    /// `M_t` after every round, starting with `M_0`.
    pub history: Vec<Vec<f64>>,
    /// `||M_{t+1} - M_t||` per aggregation.
    pub update_norms: Vec<f64>,
}

impl ServerState {
    pub fn new(markers: Vec<f64>, polarity: Vec<Polarity>) -> Result<Self> {
        if markers.len() != polarity.len() {
            return Err(Error::dim("server marker polarity", markers.len(), polarity.len()));
        }
        let markers: Vec<f64> = markers.into_iter().map(|m| m.max(0.0)).collect();
        Ok(Self {
            history: vec![markers.clone()],
            markers,
            polarity,
            round: 0,
            update_norms: Vec::new(),
        })
    }

    /// Installs `next` as `M_{t+1}`.
    pub fn advance(&mut self, next: Vec<f64>) {
        let norm = next.iter().zip(&self.markers).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        self.update_norms.push(norm);
        self.markers = next;
        self.round += 1;
        self.history.push(self.markers.clone());
    }

    /// Records a round without an aggregation (no participants).
    pub fn skip(&mut self) {
        self.update_norms.push(0.0);
        self.round += 1;
        self.history.push(self.markers.clone());
    }

    pub fn polyak(&self) -> Vec<f64> {
        let burn_in = self.history.len() / 5;
        polyak_average(&self.history, burn_in)
    }
}

/// `M_t + sum_k w_k (payload_k - M_t) / sum_k w_k`, projected to be nonnegative.
pub fn aggregate_markers(current: &[f64], updates: &[ClientUpdate]) -> Result<Vec<f64>> {
    if updates.is_empty() {
        return Err(Error::Insufficient("aggregation needs at least one update".into()));
    }
    let total: f64 = updates.iter().map(|u| u.weight).sum();
    if !(total > 0.0) || updates.iter().any(|u| u.weight < 0.0) {
        return Err(Error::invalid("aggregation weights must be nonnegative with a positive sum"));
    }
    let mut next = current.to_vec();
    for u in updates {
        if u.payload.len() != current.len() {
            return Err(Error::dim("update payload", current.len(), u.payload.len()));
        }
        for (n, (p, c)) in next.iter_mut().zip(u.payload.iter().zip(current)) {
            *n += u.weight * (p - c) / total;
        }
    }
    Ok(next.into_iter().map(|m| m.max(0.0)).collect())
}

/// The same rule evaluated from masked fixed-point uploads: the server only
/// sees `sum_k w_k payload_k` and `sum_k w_k`.
pub fn aggregate_masked(current: &[f64], updates: &[MaskedUpdate]) -> Result<Vec<f64>> {
    let total: f64 = updates.iter().map(|u| u.weight).sum();
    if !(total > 0.0) {
        return Err(Error::invalid("aggregation weights must have a positive sum"));
    }
    let masked: Vec<Vec<i64>> = updates.iter().map(|u| u.masked.clone()).collect();
    let sum = unmask_sum(&masked)?;
    if sum.len() != current.len() {
        return Err(Error::dim("masked payload", current.len(), sum.len()));
    }
    Ok(sum
        .iter()
        .zip(current)
        .map(|(&s, &c)| (c + (dequantize(s) - total * c) / total).max(0.0))
        .collect())
}

/// Arithmetic mean of the iterates from index `burn_in` on.
pub fn polyak_average(history: &[Vec<f64>], burn_in: usize) -> Vec<f64> {
    let tail = &history[burn_in.min(history.len().saturating_sub(1))..];
    let dim = tail.first().map_or(0, Vec::len);
    let mut avg = vec![0.0; dim];
    for h in tail {
        for (a, v) in avg.iter_mut().zip(h) {
            *a += v / tail.len() as f64;
        }
    }
    avg
}
