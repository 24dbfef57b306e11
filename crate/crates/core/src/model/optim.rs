//! Adam, global-norm clipping and Gaussian noise over flat parameter blocks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::SimRng;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update. Block shapes must stay the same across calls.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient block counts differ");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (b, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "block {b} length mismatch");
            let (m, v) = (&mut self.m[b], &mut self.v[b]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let step = self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                p[i] -= step;
            }
        }
    }
}

pub fn global_norm(blocks: &[&[f64]]) -> f64 {
    blocks.iter().flat_map(|b| b.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales all blocks jointly to norm at most `c`; returns the norm before clipping.
pub fn clip_global(blocks: Vec<&mut [f64]>, c: f64) -> f64 {
    let norm = blocks.iter().flat_map(|b| b.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > c {
        let s = c / norm;
        for b in blocks {
            b.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

/// Adds independent `N(0, std^2)` noise to every entry.
pub fn add_gaussian_noise(blocks: Vec<&mut [f64]>, std: f64, rng: &mut SimRng) {
    if std == 0.0 {
        return;
    }
    for b in blocks {
        for x in b.iter_mut() {
            *x += std * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.3, -4.0, 0.0];
        let mut opt = Adam::new(0.1);
        opt.step(vec![&mut p[..]], vec![&g[..]]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 1.9).abs() < 1e-6);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        let orig = vec![0.123456789, -7.5, 1e-300];
        let mut p = orig.clone();
        let mut opt = Adam::new(0.0);
        for _ in 0..3 {
            opt.step(vec![&mut p[..]], vec![&[1.0, -1.0, 5.0][..]]);
        }
        assert_eq!(p, orig);
    }

    #[test]
    fn clipping_and_noise() {
        let mut a = vec![3.0, 0.0];
        let mut b = vec![4.0];
        let n = clip_global(vec![&mut a[..], &mut b[..]], 1.0);
        assert_eq!(n, 5.0);
        assert!((global_norm(&[&a, &b]) - 1.0).abs() < 1e-15);
        let mut c = vec![0.1, 0.2];
        clip_global(vec![&mut c[..]], 1.0);
        assert_eq!(c, vec![0.1, 0.2]);
        let mut z = vec![0.0; 3];
        add_gaussian_noise(vec![&mut z[..]], 0.0, &mut rng_for(1, &[]));
        assert_eq!(z, vec![0.0; 3]);
    }
}
