//! Candidate distributions over the product space, empirical estimates and
//! the confidence sets used by the optimistic learners.

use std::io::Read;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Candidate, CandidateSpace, RENORMALIZE_TOLERANCE};
use crate::error::{Error, Result};

/// Tolerance on `Σ_x p(x) = 1`.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// A dense probability table over the flat indices of a [`CandidateSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJoint", into = "RawJoint")]
pub struct JointDistribution {
    space: CandidateSpace,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawJoint {
    space: CandidateSpace,
    probabilities: Vec<f64>,
}

impl TryFrom<RawJoint> for JointDistribution {
    type Error = Error;
    fn try_from(raw: RawJoint) -> Result<Self> {
        let space = CandidateSpace::with_names(
            raw.space.domain_sizes().to_vec(),
            raw.space.feature_names().to_vec(),
        )?;
        JointDistribution::new(space, raw.probabilities)
    }
}

impl From<JointDistribution> for RawJoint {
    fn from(p: JointDistribution) -> Self {
        RawJoint { space: p.space, probabilities: p.probabilities }
    }
}

impl JointDistribution {
    pub fn new(space: CandidateSpace, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != space.size() {
            return Err(Error::ShapeMismatch(format!(
                "{} probabilities for a space of {} cells",
                probabilities.len(),
                space.size()
            )));
        }
        if let Some(k) = probabilities.iter().position(|p| !(p.is_finite() && (0.0..=1.0).contains(p))) {
            return Err(Error::InvalidParameter(format!(
                "probability {} at index {k} is outside [0, 1]",
                probabilities[k]
            )));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!("probabilities sum to {sum}, expected 1")));
        }
        let mut acc = 0.0;
        let cumulative = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(JointDistribution { space, probabilities, cumulative })
    }

    pub fn uniform(space: CandidateSpace) -> Self {
        let n = space.size();
        Self::new(space, vec![1.0 / n as f64; n]).expect("uniform distribution is valid")
    }

    pub fn point_mass(space: CandidateSpace, index: usize) -> Result<Self> {
        if index >= space.size() {
            return Err(Error::InvalidParameter(format!("index {index} outside the space")));
        }
        let mut probabilities = vec![0.0; space.size()];
        probabilities[index] = 1.0;
        Self::new(space, probabilities)
    }

    /// Joint distribution of independent features, `p(x) = ∏_i m_i[x^i]`.
    ///
    /// Marginals whose sum is off by at most [`RENORMALIZE_TOLERANCE`] are
    /// rescaled with a warning; larger deviations are rejected.
    pub fn from_marginals(space: CandidateSpace, marginals: &[Vec<f64>]) -> Result<Self> {
        if marginals.len() != space.num_features() {
            return Err(Error::ShapeMismatch(format!(
                "{} marginals for {} features",
                marginals.len(),
                space.num_features()
            )));
        }
        let marginals: Vec<Vec<f64>> = marginals
            .iter()
            .enumerate()
            .map(|(i, m)| normalize_marginal(i, &space.feature_names()[i], m, space.domain_size(i)))
            .collect::<Result<_>>()?;
        let mut probabilities: Vec<f64> = (0..space.size())
            .map(|k| (0..space.num_features()).map(|i| marginals[i][space.feature_value(k, i)]).product())
            .collect();
        // absorb rounding so the sum is exactly representable as 1 within tolerance
        let sum: f64 = probabilities.iter().sum();
        probabilities.iter_mut().for_each(|p| *p /= sum);
        Self::new(space, probabilities)
    }

    /// Reads an explicit joint table: header row, then one row per cell with
    /// the 1-based feature values followed by the probability. Cells not
    /// listed get probability zero.
    pub fn from_csv_reader<R: Read>(space: CandidateSpace, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let d = space.num_features();
        let mut probabilities = vec![0.0; space.size()];
        let mut seen = vec![false; space.size()];
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != d + 1 {
                return Err(Error::Parse(format!(
                    "row {}: expected {} columns, found {}",
                    line + 2,
                    d + 1,
                    record.len()
                )));
            }
            let values: Vec<usize> = record
                .iter()
                .take(d)
                .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(format!("row {}: {e}", line + 2))))
                .collect::<Result<_>>()?;
            let candidate = Candidate::from_one_based(&space, &values)
                .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?;
            let p: f64 = record[d]
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?;
            let k = space.encode(&candidate);
            if seen[k] {
                return Err(Error::Parse(format!("row {}: duplicate cell {candidate}", line + 2)));
            }
            seen[k] = true;
            probabilities[k] = p;
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
                return Err(Error::Parse(format!("joint table sums to {sum}, expected 1")));
            }
            warn!("joint table sums to {sum}; renormalizing");
            probabilities.iter_mut().for_each(|p| *p /= sum);
        }
        Self::new(space, probabilities)
    }

    pub fn space(&self) -> &CandidateSpace {
        &self.space
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probabilities[index]
    }

    /// Flat indices with positive probability.
    pub fn support(&self) -> Vec<usize> {
        (0..self.probabilities.len()).filter(|&k| self.probabilities[k] > 0.0).collect()
    }

    pub fn strictly_positive(&self) -> bool {
        self.probabilities.iter().all(|&p| p > 0.0)
    }

    /// `P[x^i = j]` for every `j`.
    pub fn marginal(&self, feature: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.space.domain_size(feature)];
        for (k, &p) in self.probabilities.iter().enumerate() {
            out[self.space.feature_value(k, feature)] += p;
        }
        out
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty space");
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u);
        // u < total so k is in range except for pathological rounding
        k.min(self.probabilities.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Candidate {
        self.space.decode(self.sample_index(rng))
    }
}

fn normalize_marginal(feature: usize, name: &str, m: &[f64], size: usize) -> Result<Vec<f64>> {
    if m.len() != size {
        return Err(Error::BadMarginal {
            feature,
            reason: format!("{} entries for a domain of size {size}", m.len()),
        });
    }
    if let Some(v) = m.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::BadMarginal { feature, reason: format!("entry {v} is negative or not finite") });
    }
    let sum: f64 = m.iter().sum();
    if (sum - 1.0).abs() <= PROBABILITY_SUM_TOLERANCE {
        return Ok(m.to_vec());
    }
    if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
        return Err(Error::BadMarginal { feature, reason: format!("entries sum to {sum}") });
    }
    warn!("marginal of feature `{name}` sums to {sum}; renormalizing");
    Ok(m.iter().map(|v| v / sum).collect())
}

/// Bayes-rule correction from population proportions to proportions among
/// volunteers: `P[x^i=j | volunteer] ∝ P[volunteer | x^i=j] · P[x^i=j]`.
pub fn bayes_adjust(population_marginal: &[f64], volunteer_rates: &[f64]) -> Result<Vec<f64>> {
    if population_marginal.len() != volunteer_rates.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} population entries vs {} volunteer rates",
            population_marginal.len(),
            volunteer_rates.len()
        )));
    }
    if population_marginal.iter().chain(volunteer_rates).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::DegenerateInput("negative or non-finite entry".into()));
    }
    let joint: Vec<f64> = population_marginal.iter().zip(volunteer_rates).map(|(p, r)| p * r).collect();
    let evidence: f64 = joint.iter().sum();
    if evidence <= 0.0 {
        return Err(Error::DegenerateInput("volunteering probability is zero".into()));
    }
    Ok(joint.into_iter().map(|v| v / evidence).collect())
}

/// Visit counts `n_t(x)` and their total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalEstimate {
    counts: Vec<u64>,
    total: u64,
}

impl EmpiricalEstimate {
    pub fn new(space_size: usize) -> Self {
        EmpiricalEstimate { counts: vec![0; space_size], total: 0 }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        EmpiricalEstimate { counts, total }
    }

    pub fn record(&mut self, index: usize) {
        self.counts[index] += 1;
        self.total += 1;
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn space_size(&self) -> usize {
        self.counts.len()
    }

    /// `p̂(x) = n(x) / total`.
    pub fn p_hat(&self) -> Result<Vec<f64>> {
        if self.total == 0 {
            return Err(Error::NoSamples);
        }
        let t = self.total as f64;
        Ok(self.counts.iter().map(|&n| n as f64 / t).collect())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level δ = {delta} outside (0, 1)")));
    }
    Ok(())
}

/// Radius of the ℓ1 ball around `p̂` built from `n = estimate.total` samples
/// (so the episode starts at `τ = n + 1`):
///
/// `β = sqrt( 2|X| · ln(6|X| · τ(τ−1) / δ) / (τ−1) )`.
pub fn l1_radius(estimate: &EmpiricalEstimate, delta: f64, space_size: usize) -> Result<f64> {
    check_delta(delta)?;
    let n = estimate.total();
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let n = n as f64;
    let x = space_size as f64;
    let log_term = (6.0 * x * (n + 1.0) * n / delta).ln();
    Ok((2.0 * x * log_term / n).sqrt())
}

/// Constants of the empirical Bernstein half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinConstants {
    pub b1: f64,
    pub b2: f64,
}

impl Default for BernsteinConstants {
    fn default() -> Self {
        BernsteinConstants { b1: std::f64::consts::SQRT_2, b2: 7.0 / 3.0 }
    }
}

/// Per-cell empirical Bernstein intervals `[p̂(x) − w(x), p̂(x) + w(x)] ∩ [0, 1]`
/// with
///
/// `w(x) = B1·sqrt(σ̂²(x)·L / n) + B2·L / n`, `L = ln(6|X|τ/δ)`,
/// `σ̂²(x) = p̂(x)(1 − p̂(x))`, `n = τ − 1 = estimate.total`.
///
/// `horizon` is the run length the δ budget was split over; the episode
/// start `τ` may not exceed it.
pub fn bernstein_intervals(
    estimate: &EmpiricalEstimate,
    delta: f64,
    space_size: usize,
    horizon: u64,
    constants: BernsteinConstants,
) -> Result<Vec<(f64, f64)>> {
    check_delta(delta)?;
    let n = estimate.total();
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let tau = n + 1;
    if horizon < tau {
        return Err(Error::InvalidParameter(format!(
            "episode start {tau} is beyond the horizon {horizon}"
        )));
    }
    let log_term = (6.0 * space_size as f64 * tau as f64 / delta).ln();
    let denom = (n as f64).max(1.0);
    let p_hat = estimate.p_hat()?;
    Ok(p_hat
        .into_iter()
        .map(|p| {
            let variance = p * (1.0 - p);
            let w = constants.b1 * (variance * log_term / denom).sqrt() + constants.b2 * log_term / denom;
            ((p - w).max(0.0), (p + w).min(1.0))
        })
        .collect())
}

/// Plausible distributions around the empirical estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ConfidenceSet {
    /// `{q : ‖q − p̂‖₁ ≤ radius}`.
    L1Ball { center: Vec<f64>, radius: f64, delta: f64, episode_start: u64 },
    /// `{q : lower(x) ≤ q(x) ≤ upper(x) ∀x}`.
    BernsteinBox { center: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, delta: f64, episode_start: u64 },
}

impl ConfidenceSet {
    pub fn l1(estimate: &EmpiricalEstimate, delta: f64) -> Result<Self> {
        let radius = l1_radius(estimate, delta, estimate.space_size())?;
        Ok(ConfidenceSet::L1Ball {
            center: estimate.p_hat()?,
            radius,
            delta,
            episode_start: estimate.total() + 1,
        })
    }

    pub fn bernstein(
        estimate: &EmpiricalEstimate,
        delta: f64,
        horizon: u64,
        constants: BernsteinConstants,
    ) -> Result<Self> {
        let intervals = bernstein_intervals(estimate, delta, estimate.space_size(), horizon, constants)?;
        let (lower, upper) = intervals.into_iter().unzip();
        Ok(ConfidenceSet::BernsteinBox {
            center: estimate.p_hat()?,
            lower,
            upper,
            delta,
            episode_start: estimate.total() + 1,
        })
    }

    pub fn center(&self) -> &[f64] {
        match self {
            ConfidenceSet::L1Ball { center, .. } | ConfidenceSet::BernsteinBox { center, .. } => center,
        }
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        match self {
            ConfidenceSet::L1Ball { center, radius, .. } => {
                q.len() == center.len()
                    && q.iter().zip(center).map(|(a, b)| (a - b).abs()).sum::<f64>() <= *radius
            }
            ConfidenceSet::BernsteinBox { lower, upper, .. } => {
                q.len() == lower.len()
                    && q.iter().zip(lower.iter().zip(upper)).all(|(v, (lo, hi))| lo <= v && v <= hi)
            }
        }
    }
}
