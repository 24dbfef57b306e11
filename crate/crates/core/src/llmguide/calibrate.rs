//! Temperature scaling, reliability metrics and threshold admission.

use super::{confidence, Proposal, ProposalSlice};
use crate::error::{Error, Result};

pub const ECE_BINS: usize = 15;
pub const TAU_SWEEP: [f64; 4] = [0.6, 0.7, 0.8, 0.9];

const LOG_T_RANGE: (f64, f64) = (-3.0, 3.0);
const GOLDEN_ITERS: usize = 100;
const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationModel {
    pub temperature: f64,
    pub tau: f64,
}

impl CalibrationModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid("tau must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Mean negative log-likelihood of outcomes under temperature `t`.
pub fn temperature_nll(logits: &[f64], alternatives: &[usize], outcomes: &[bool], t: f64) -> f64 {
    let mut total = 0.0;
    for ((&r, &k), &y) in logits.iter().zip(alternatives).zip(outcomes) {
        let c = confidence(r, k, t).clamp(PROB_EPS, 1.0 - PROB_EPS);
        total -= if y { c.ln() } else { (1.0 - c).ln() };
    }
    total / logits.len() as f64
}

/// Temperature minimising the NLL, by golden-section search over
/// `log T` in `[-3, 3]`. Never returns a temperature worse than `T = 1`.
pub fn fit_temperature_with(logits: &[f64], alternatives: &[usize], outcomes: &[bool]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Insufficient("temperature fit needs a nonempty validation slice".into()));
    }
    if logits.len() != outcomes.len() || logits.len() != alternatives.len() {
        return Err(Error::dim("temperature fit outcomes", logits.len(), outcomes.len()));
    }
    if outcomes.iter().all(|&y| y) || outcomes.iter().all(|&y| !y) {
        return Err(Error::Insufficient("temperature fit needs both outcomes in the validation slice".into()));
    }
    let f = |log_t: f64| temperature_nll(logits, alternatives, outcomes, log_t.exp());
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = LOG_T_RANGE;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let best = 0.5 * (lo + hi);
    Ok(if f(best) <= f(0.0) { best.exp() } else { 1.0 })
}

/// Binary (sigmoid) temperature fit.
pub fn fit_temperature(val_logits: &[f64], val_labels: &[bool]) -> Result<f64> {
    fit_temperature_with(val_logits, &vec![1; val_logits.len()], val_labels)
}

/// Expected calibration error over `n_bins` equal-width bins, right-closed
/// (`(lo, hi]`, with 0 falling into the first bin).
pub fn ece(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<f64> {
    if confidences.is_empty() {
        return Err(Error::Insufficient("ECE of an empty set".into()));
    }
    if confidences.len() != correct.len() {
        return Err(Error::dim("ECE outcomes", confidences.len(), correct.len()));
    }
    if n_bins == 0 {
        return Err(Error::invalid("ECE needs at least one bin"));
    }
    let mut count = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut acc_sum = vec![0.0; n_bins];
    for (&c, &y) in confidences.iter().zip(correct) {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::invalid(format!("confidence {c} outside [0, 1]")));
        }
        let b = (0..n_bins).find(|&b| c <= (b + 1) as f64 / n_bins as f64).unwrap_or(n_bins - 1);
        count[b] += 1;
        conf_sum[b] += c;
        acc_sum[b] += if y { 1.0 } else { 0.0 };
    }
    let n = confidences.len() as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (count[b] as f64 / n) * (acc_sum[b] / count[b] as f64 - conf_sum[b] / count[b] as f64).abs())
        .sum())
}

pub fn brier(confidences: &[f64], outcomes: &[bool]) -> Result<f64> {
    if confidences.is_empty() {
        return Err(Error::Insufficient("Brier score of an empty set".into()));
    }
    if confidences.len() != outcomes.len() {
        return Err(Error::dim("Brier outcomes", confidences.len(), outcomes.len()));
    }
    Ok(confidences
        .iter()
        .zip(outcomes)
        .map(|(&p, &y)| (p - if y { 1.0 } else { 0.0 }).powi(2))
        .sum::<f64>()
        / confidences.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissionReport {
    pub tau: f64,
    pub candidates: usize,
    pub accepted: usize,
    /// Fraction of accepted proposals that are correct (`NaN` when none accepted).
    pub precision: f64,
}

/// Recomputes confidences with the model's temperature and accepts exactly
/// the admission-slice proposals with confidence `>= tau`.
pub fn admit(proposals: &mut [Proposal], cal: &CalibrationModel) -> Result<AdmissionReport> {
    cal.validate()?;
    let (mut candidates, mut accepted, mut correct) = (0, 0, 0);
    for p in proposals.iter_mut() {
        p.confidence = p.confidence_at(cal.temperature);
        p.accepted = p.slice == ProposalSlice::Admission && p.confidence >= cal.tau;
        if p.slice == ProposalSlice::Admission {
            candidates += 1;
        }
        if p.accepted {
            accepted += 1;
            correct += p.correct as usize;
        }
    }
    Ok(AdmissionReport {
        tau: cal.tau,
        candidates,
        accepted,
        precision: if accepted > 0 { correct as f64 / accepted as f64 } else { f64::NAN },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmguide::{ProposalKind, Target};
    use crate::rng::rng_for;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Logits whose sigmoid is the true probability of the outcome.
    fn calibrated_sample(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = rng_for(seed, &[]);
        let mut logits = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let z: f64 = 1.5 * rng.sample::<f64, _>(StandardNormal);
            logits.push(z);
            labels.push(rng.random::<f64>() < 1.0 / (1.0 + (-z).exp()));
        }
        (logits, labels)
    }

    fn scan_oracle(logits: &[f64], labels: &[bool]) -> f64 {
        let alts = vec![1; logits.len()];
        (0..=600)
            .map(|i| (-3.0 + i as f64 * 0.01).exp())
            .min_by(|&a, &b| {
                temperature_nll(logits, &alts, labels, a).total_cmp(&temperature_nll(logits, &alts, labels, b))
            })
            .unwrap()
    }

    #[test]
    fn calibrated_logits_need_no_temperature() {
        let (l, y) = calibrated_sample(10_000, 1);
        let t = fit_temperature(&l, &y).unwrap();
        assert!((0.9..=1.1).contains(&t), "{t}");
        assert!((t / scan_oracle(&l, &y) - 1.0).abs() < 0.01);
    }

    #[test]
    fn doubled_logits_recover_two() {
        let (l, y) = calibrated_sample(20_000, 2);
        let l2: Vec<f64> = l.iter().map(|x| 2.0 * x).collect();
        let t = fit_temperature(&l2, &y).unwrap();
        assert!((t - 2.0).abs() < 0.2, "{t}");
        let alts = vec![1; l2.len()];
        assert!(temperature_nll(&l2, &alts, &y, t) <= temperature_nll(&l2, &alts, &y, 1.0));
        assert!(fit_temperature(&[1.0, 2.0], &[true, true]).is_err());
        assert!(fit_temperature(&[], &[]).is_err());
    }

    #[test]
    fn ece_fixtures() {
        assert_eq!(ece(&[1.0, 1.0, 1.0], &[true, true, true], 15).unwrap(), 0.0);
        assert!((ece(&[1.0, 1.0], &[true, false], 15).unwrap() - 0.5).abs() < 1e-15);
        assert!(ece(&[], &[], 15).is_err());
    }

    /// Independent binning: every bin scanned with explicit `(lo, hi]` bounds.
    fn ece_brute(conf: &[f64], ok: &[bool], bins: usize) -> f64 {
        let mut total = 0.0;
        for b in 0..bins {
            let lo = b as f64 / bins as f64;
            let hi = (b + 1) as f64 / bins as f64;
            let members: Vec<usize> =
                (0..conf.len()).filter(|&i| (conf[i] > lo || (b == 0 && conf[i] == 0.0)) && conf[i] <= hi).collect();
            if members.is_empty() {
                continue;
            }
            let acc = members.iter().filter(|&&i| ok[i]).count() as f64 / members.len() as f64;
            let c = members.iter().map(|&i| conf[i]).sum::<f64>() / members.len() as f64;
            total += members.len() as f64 / conf.len() as f64 * (acc - c).abs();
        }
        total
    }

    #[test]
    fn ece_boundaries_match_brute_force() {
        let conf: Vec<f64> = (0..=15).map(|b| b as f64 / 15.0).chain([0.5, 0.9, 0.33]).collect();
        let ok: Vec<bool> = (0..conf.len()).map(|i| i % 3 != 0).collect();
        let got = ece(&conf, &ok, 15).unwrap();
        assert!((got - ece_brute(&conf, &ok, 15)).abs() < 1e-12);
    }

    #[test]
    fn brier_fixtures() {
        assert_eq!(brier(&[1.0, 0.0], &[true, false]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5; 4], &[true, false, false, true]).unwrap(), 0.25);
        let b = brier(&[0.9, 0.2, 0.6, 0.4], &[true, false, false, true]).unwrap();
        assert!((b - (0.01 + 0.04 + 0.36 + 0.36) / 4.0).abs() < 1e-15);
    }

    fn proposal(raw: f64, correct: bool) -> Proposal {
        Proposal {
            kind: ProposalKind::Edge,
            target: Target::Pair(0, 1),
            payload: None,
            raw_logit: raw,
            alternatives: 1,
            confidence: 0.0,
            accepted: false,
            slice: ProposalSlice::Admission,
            correct,
        }
    }

    #[test]
    fn admission_limits_and_monotonicity() {
        let mut ps: Vec<Proposal> = (0..50).map(|i| proposal(-5.0 + 0.2 * i as f64, i % 2 == 0)).collect();
        let all = admit(&mut ps, &CalibrationModel { temperature: 1.0, tau: 0.0 }).unwrap();
        assert_eq!(all.accepted, 50);
        let none = admit(&mut ps, &CalibrationModel { temperature: 1.0, tau: 1.0 }).unwrap();
        assert_eq!(none.accepted, 0);
        let mut last = usize::MAX;
        for tau in TAU_SWEEP {
            let r = admit(&mut ps, &CalibrationModel { temperature: 2.0, tau }).unwrap();
            assert!(r.accepted <= last);
            assert!(ps.iter().all(|p| !p.accepted || p.confidence >= tau));
            last = r.accepted;
        }
        ps[0].slice = ProposalSlice::Calibration;
        let r = admit(&mut ps, &CalibrationModel { temperature: 1.0, tau: 0.0 }).unwrap();
        assert_eq!((r.candidates, r.accepted), (49, 49));
    }
}
