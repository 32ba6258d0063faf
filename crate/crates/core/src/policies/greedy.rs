use crate::domain::{Candidate, CandidateSpace, TargetProfile};
use crate::error::{Error, Result};

use super::Decision;

/// Quota-based greedy selection with slack `epsilon`.
///
/// A candidate is accepted when, for every feature `i`, the count of its
/// value `x^i` plus one stays within `ceil(rho * K) + epsilon * K / (D_i - 1)`.
#[derive(Debug, Clone)]
pub struct GreedyState {
    epsilon: f64,
    k: usize,
    quotas: Vec<Vec<f64>>,
    counts: Vec<Vec<usize>>,
    accepted: usize,
}

/// `ceil` that treats values within 1e-9 of an integer as that integer, so
/// `0.3 * 10` gives 3 rather than 4.
fn robust_ceil(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 {
        r
    } else {
        v.ceil()
    }
}

impl GreedyState {
    pub fn new(space: &CandidateSpace, target: &TargetProfile, k: usize, epsilon: f64) -> Result<Self> {
        target.check_space(space)?;
        if k == 0 {
            return Err(Error::InvalidParameter("committee size K must be at least 1".into()));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        let kf = k as f64;
        let quotas = target
            .per_feature()
            .iter()
            .map(|rho| {
                let slack = epsilon * kf / (rho.len() - 1) as f64;
                rho.iter().map(|r| robust_ceil(r * kf) + slack).collect()
            })
            .collect();
        let counts = space.domain_sizes().iter().map(|&d| vec![0; d]).collect();
        Ok(Self { epsilon, k, quotas, counts, accepted: 0 })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn quota(&self, feature: usize, value: usize) -> f64 {
        self.quotas[feature][value]
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn is_full(&self) -> bool {
        self.accepted >= self.k
    }

    /// Whether accepting `candidate` keeps every count within its quota.
    /// Only the cells matching the candidate's values change.
    pub fn admits(&self, candidate: &Candidate) -> bool {
        candidate
            .values()
            .iter()
            .enumerate()
            .all(|(i, &j)| (self.counts[i][j] + 1) as f64 <= self.quotas[i][j] + 1e-9)
    }

    pub fn step(&mut self, candidate: &Candidate) -> Result<Decision> {
        if self.is_full() {
            return Err(Error::CommitteeFull(self.k));
        }
        if !self.admits(candidate) {
            return Ok(Decision::Reject);
        }
        for (i, &j) in candidate.values().iter().enumerate() {
            self.counts[i][j] += 1;
        }
        self.accepted += 1;
        debug_assert!(self
            .counts
            .iter()
            .zip(&self.quotas)
            .all(|(c, q)| c.iter().zip(q).all(|(&n, &b)| n as f64 <= b + 1e-9)));
        Ok(Decision::Accept)
    }
}
