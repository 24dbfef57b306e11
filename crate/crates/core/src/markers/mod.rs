//! Scalar marker prototypes in the embedding-distance space, their Gaussian
//! posterior and mixture prior, and the client objective built on them.

mod assign;
mod kl;
pub mod objective;
mod table;

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::stats;

pub use assign::{link_prob, link_prob_grad, soft_assign, LinkGrad, LINK_EPS};
pub use kl::{kl_estimate, kl_noise, kl_posterior_prior, kl_with_grad, KlEstimate, KlGrad};
pub use objective::{client_objective, client_objective_grad, LossBundle, LossWeights, ObjectiveBatch, ObjectiveGrads};
pub use table::{parse_posterior_table, write_posterior_table};

/// Floor on initial marker variances.
pub const VAR_FLOOR: f64 = 1e-4;
/// Floor on fitted prior component variances.
pub const PRIOR_VAR_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }

    pub fn from_sign(s: f64) -> Result<Self> {
        if s > 0.0 {
            Ok(Polarity::Positive)
        } else if s < 0.0 {
            Ok(Polarity::Negative)
        } else {
            Err(Error::invalid("polarity sign must be nonzero"))
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "+",
            Polarity::Negative => "-",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSet {
    pub locations: Vec<f64>,
    pub polarity: Vec<Polarity>,
    pub sigma_kern: f64,
}

impl MarkerSet {
    pub fn new(locations: Vec<f64>, polarity: Vec<Polarity>, sigma_kern: f64) -> Result<Self> {
        let m = Self {
            locations,
            polarity,
            sigma_kern,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn count(&self, p: Polarity) -> usize {
        self.polarity.iter().filter(|&&q| q == p).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.locations.len() != self.polarity.len() {
            return Err(Error::dim("marker polarity", self.locations.len(), self.polarity.len()));
        }
        if !(self.sigma_kern > 0.0 && self.sigma_kern.is_finite()) {
            return Err(Error::invalid("sigma_kern must be positive"));
        }
        if let Some(x) = self.locations.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::invalid(format!("marker location {x} is not a finite nonnegative value")));
        }
        Ok(())
    }
}

/// Mean-field Gaussian posterior, one factor per marker. Variances are
/// stored as logs so gradient steps keep them positive.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerPosterior {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
    pub polarity: Vec<Polarity>,
}

impl MarkerPosterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn variance(&self, e: usize) -> f64 {
        self.log_var[e].exp()
    }

    pub fn project(&mut self) {
        for m in &mut self.mean {
            *m = m.max(0.0);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mean.len();
        if self.log_var.len() != n {
            return Err(Error::dim("posterior log-variance", n, self.log_var.len()));
        }
        if self.polarity.len() != n {
            return Err(Error::dim("posterior polarity", n, self.polarity.len()));
        }
        if self.mean.iter().chain(&self.log_var).any(|x| !x.is_finite()) {
            return Err(Error::invalid("posterior parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorComponent {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

/// Gaussian mixture shared by every marker coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerPrior {
    pub components: Vec<PriorComponent>,
}

impl MarkerPrior {
    pub fn new(components: Vec<PriorComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("prior needs at least one component"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 || components.iter().any(|c| !(c.weight >= 0.0)) {
            return Err(Error::invalid(format!("prior weights must be nonnegative and sum to 1 (got {total})")));
        }
        if components.iter().any(|c| !(c.var > 0.0 && c.mean.is_finite())) {
            return Err(Error::invalid("prior variances must be positive and means finite"));
        }
        Ok(Self { components })
    }

    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![PriorComponent { weight: 1.0, mean, var }])
    }

    fn component_logs(&self, x: f64) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.weight.ln() - 0.5 * (2.0 * std::f64::consts::PI * c.var).ln() - (x - c.mean).powi(2) / (2.0 * c.var)
            })
            .collect()
    }

    pub fn log_density(&self, x: f64) -> f64 {
        stats::logsumexp(&self.component_logs(x))
    }

    /// `(log s(x), d log s / dx)`.
    pub fn log_density_grad(&self, x: f64) -> (f64, f64) {
        let logs = self.component_logs(x);
        let lse = stats::logsumexp(&logs);
        let d = self
            .components
            .iter()
            .zip(&logs)
            .map(|(c, l)| (l - lse).exp() * (-(x - c.mean) / c.var))
            .sum();
        (lse, d)
    }

    /// One component per polarity present: weight by marker count, mean and
    /// variance of that polarity's locations, variance floored.
    pub fn fit(locations: &[f64], polarity: &[Polarity]) -> Result<Self> {
        if locations.len() != polarity.len() {
            return Err(Error::dim("prior fit polarity", locations.len(), polarity.len()));
        }
        let mut comps = Vec::new();
        for p in [Polarity::Positive, Polarity::Negative] {
            let xs: Vec<f64> = locations.iter().zip(polarity).filter(|(_, q)| **q == p).map(|(x, _)| *x).collect();
            if xs.is_empty() {
                continue;
            }
            comps.push(PriorComponent {
                weight: xs.len() as f64 / locations.len() as f64,
                mean: stats::mean(&xs),
                var: stats::sample_std(&xs).powi(2).max(PRIOR_VAR_FLOOR),
            });
        }
        Self::new(comps)
    }
}

/// Marker counts per polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkerCounts {
    pub positive: usize,
    pub negative: usize,
}

impl Default for MarkerCounts {
    fn default() -> Self {
        Self { positive: 8, negative: 8 }
    }
}

fn quantile_markers(dists: &[f64], count: usize, what: &str) -> Result<(Vec<f64>, f64)> {
    if count == 0 {
        return Ok((Vec::new(), VAR_FLOOR));
    }
    if dists.is_empty() {
        return Err(Error::Insufficient(format!("no {what} distances to initialise markers from")));
    }
    if dists.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::invalid(format!("{what} distances must be finite and nonnegative")));
    }
    let mut sorted = dists.to_vec();
    sorted.sort_by(f64::total_cmp);
    let locs = (0..count)
        .map(|e| stats::quantile_sorted(&sorted, (e as f64 + 0.5) / count as f64))
        .collect();
    let var = (stats::sample_std(dists) / count as f64).powi(2).max(VAR_FLOOR);
    Ok((locs, var))
}

/// Markers at evenly spaced (midpoint) quantiles of the positive and negative
/// pair distances. The posterior starts at those locations with variance
/// `(std / count)^2`, floored.
pub fn init_markers(
    pos_dists: &[f64],
    neg_dists: &[f64],
    counts: MarkerCounts,
    sigma_kern: f64,
) -> Result<(MarkerSet, MarkerPosterior)> {
    let (pos, pos_var) = quantile_markers(pos_dists, counts.positive, "positive")?;
    let (neg, neg_var) = quantile_markers(neg_dists, counts.negative, "negative")?;
    let mut polarity = vec![Polarity::Positive; pos.len()];
    polarity.extend(vec![Polarity::Negative; neg.len()]);
    let mut log_var = vec![pos_var.ln(); pos.len()];
    log_var.extend(vec![neg_var.ln(); neg.len()]);
    let locations: Vec<f64> = pos.into_iter().chain(neg).collect();
    let set = MarkerSet::new(locations.clone(), polarity.clone(), sigma_kern)?;
    Ok((
        set,
        MarkerPosterior {
            mean: locations,
            log_var,
            polarity,
        },
    ))
}

/// Reparameterised locations `max(0, mu + sqrt(v) xi)` for given noise.
pub fn markers_from_noise(q: &MarkerPosterior, xi: &[f64], sigma_kern: f64) -> Result<MarkerSet> {
    if xi.len() != q.len() {
        return Err(Error::dim("marker noise", q.len(), xi.len()));
    }
    let locations = (0..q.len())
        .map(|e| (q.mean[e] + q.variance(e).sqrt() * xi[e]).max(0.0))
        .collect();
    MarkerSet::new(locations, q.polarity.clone(), sigma_kern)
}

pub fn sample_markers(q: &MarkerPosterior, sigma_kern: f64, seed: u64) -> Result<MarkerSet> {
    let mut rng = rng_for(seed, &[]);
    let xi: Vec<f64> = (0..q.len()).map(|_| rng.sample(StandardNormal)).collect();
    markers_from_noise(q, &xi, sigma_kern)
}

/// Posterior means projected to be nonnegative: the statistic a client shares.
pub fn expected_markers(q: &MarkerPosterior) -> Vec<f64> {
    q.mean.iter().map(|m| m.max(0.0)).collect()
}

pub fn expected_marker_set(q: &MarkerPosterior, sigma_kern: f64) -> Result<MarkerSet> {
    MarkerSet::new(expected_markers(q), q.polarity.clone(), sigma_kern)
}
