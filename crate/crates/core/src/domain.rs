//! Candidate space, target profiles, committees and the ℓ∞ representation loss.
//!
//! Feature values are 0-based everywhere inside the library. User-facing I/O
//! (CSV tables, traces meant for humans) uses 1-based values; the conversion
//! happens at the boundary via [`Candidate::from_one_based`] and
//! [`Candidate::to_one_based`].
//!
//! Candidates are identified with a flat index in `[0, |X|)` using a
//! mixed-radix encoding where the last feature varies fastest.

use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported product space.
pub const MAX_SPACE_SIZE: usize = 1 << 31;

/// Tolerance on the per-feature sum of a target vector.
pub const TARGET_SUM_TOLERANCE: f64 = 1e-9;

/// Per-feature sums that deviate by at most this much are renormalized on
/// load (with a warning) instead of rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 5e-3;

/// The product space `X = X_1 × … × X_d` of categorical features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSpace {
    domain_sizes: Vec<usize>,
    feature_names: Vec<String>,
    #[serde(skip)]
    size: usize,
}

impl CandidateSpace {
    pub fn new(domain_sizes: Vec<usize>) -> Result<Self> {
        let names = (0..domain_sizes.len()).map(|i| format!("f{}", i + 1)).collect();
        Self::with_names(domain_sizes, names)
    }

    pub fn with_names(domain_sizes: Vec<usize>, feature_names: Vec<String>) -> Result<Self> {
        if domain_sizes.is_empty() {
            return Err(Error::InvalidSpace("at least one feature is required".into()));
        }
        if feature_names.len() != domain_sizes.len() {
            return Err(Error::InvalidSpace(format!(
                "{} feature names for {} features",
                feature_names.len(),
                domain_sizes.len()
            )));
        }
        let mut size: usize = 1;
        for (i, &d) in domain_sizes.iter().enumerate() {
            if d < 2 {
                return Err(Error::InvalidSpace(format!(
                    "feature `{}` has domain size {d}; at least 2 values are required",
                    feature_names[i]
                )));
            }
            size = size
                .checked_mul(d)
                .filter(|&s| s <= MAX_SPACE_SIZE)
                .ok_or_else(|| Error::InvalidSpace("product space exceeds 2^31 cells".into()))?;
        }
        Ok(CandidateSpace { domain_sizes, feature_names, size })
    }

    /// Number of features `d`.
    pub fn num_features(&self) -> usize {
        self.domain_sizes.len()
    }

    pub fn domain_sizes(&self) -> &[usize] {
        &self.domain_sizes
    }

    pub fn domain_size(&self, feature: usize) -> usize {
        self.domain_sizes[feature]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// `|X|`, the number of distinct candidates.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn max_domain_size(&self) -> usize {
        self.domain_sizes.iter().copied().max().unwrap_or(0)
    }

    /// `d̃ = Σ_i (D_i − 1)`, the number of independent proportionality
    /// constraints.
    pub fn d_tilde(&self) -> usize {
        self.domain_sizes.iter().map(|d| d - 1).sum()
    }

    /// Flat index of a candidate.
    pub fn encode(&self, candidate: &Candidate) -> usize {
        debug_assert_eq!(candidate.values.len(), self.domain_sizes.len());
        candidate
            .values
            .iter()
            .zip(&self.domain_sizes)
            .fold(0, |acc, (&v, &d)| acc * d + v)
    }

    pub fn decode(&self, mut index: usize) -> Candidate {
        debug_assert!(index < self.size);
        let mut values = vec![0; self.domain_sizes.len()];
        for (slot, &d) in values.iter_mut().zip(&self.domain_sizes).rev() {
            *slot = index % d;
            index /= d;
        }
        Candidate { values }
    }

    /// Value of `feature` for the candidate at `index`, without allocating.
    pub fn feature_value(&self, index: usize, feature: usize) -> usize {
        let stride: usize = self.domain_sizes[feature + 1..].iter().product();
        (index / stride) % self.domain_sizes[feature]
    }

    /// All candidates in flat-index order.
    pub fn candidates(&self) -> impl Iterator<Item = Candidate> + '_ {
        (0..self.size).map(move |k| self.decode(k))
    }

    /// Stable 64-bit fingerprint (FNV-1a over the domain sizes), used to
    /// detect policies loaded against the wrong space.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for &d in &self.domain_sizes {
            for byte in (d as u64).to_le_bytes() {
                hash ^= u64::from(byte);
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        }
        hash
    }

    fn check_same(&self, sizes: &[usize]) -> Result<()> {
        if self.domain_sizes != sizes {
            return Err(Error::ShapeMismatch(format!(
                "domain sizes {:?} vs {:?}",
                self.domain_sizes, sizes
            )));
        }
        Ok(())
    }
}

/// A characteristic vector with 0-based feature values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    values: Vec<usize>,
}

impl Candidate {
    pub fn new(space: &CandidateSpace, values: Vec<usize>) -> Result<Self> {
        if values.len() != space.num_features() {
            return Err(Error::InvalidCandidate(format!(
                "{} values for {} features",
                values.len(),
                space.num_features()
            )));
        }
        for (i, (&v, &d)) in values.iter().zip(space.domain_sizes()).enumerate() {
            if v >= d {
                return Err(Error::InvalidCandidate(format!(
                    "feature {} value {v} outside [0, {d})",
                    i + 1
                )));
            }
        }
        Ok(Candidate { values })
    }

    /// Builds a candidate from 1-based values as used in files and on the
    /// command line.
    pub fn from_one_based(space: &CandidateSpace, values: &[usize]) -> Result<Self> {
        if values.contains(&0) {
            return Err(Error::InvalidCandidate("feature values are 1-based".into()));
        }
        Self::new(space, values.iter().map(|v| v - 1).collect())
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.values.iter().map(|v| v + 1).collect()
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn value(&self, feature: usize) -> usize {
        self.values[feature]
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_one_based().iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Desired per-feature proportions `ρ^i`, each strictly inside the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetProfile {
    per_feature: Vec<Vec<f64>>,
}

impl TargetProfile {
    pub fn new(space: &CandidateSpace, per_feature: Vec<Vec<f64>>) -> Result<Self> {
        if per_feature.len() != space.num_features() {
            return Err(Error::ShapeMismatch(format!(
                "{} target vectors for {} features",
                per_feature.len(),
                space.num_features()
            )));
        }
        for (i, rho) in per_feature.iter().enumerate() {
            let name = &space.feature_names()[i];
            check_target_vector(name, rho, space.domain_size(i))?;
            let sum: f64 = rho.iter().sum();
            if (sum - 1.0).abs() > TARGET_SUM_TOLERANCE {
                return Err(Error::InvalidTarget {
                    feature: name.clone(),
                    reason: format!("entries sum to {sum}, expected 1"),
                });
            }
        }
        Ok(TargetProfile { per_feature })
    }

    /// Like [`TargetProfile::new`] but rescales vectors whose sum is within
    /// [`RENORMALIZE_TOLERANCE`] of 1, logging a warning for each.
    pub fn normalized(space: &CandidateSpace, mut per_feature: Vec<Vec<f64>>) -> Result<Self> {
        for (i, rho) in per_feature.iter_mut().enumerate() {
            let name = space.feature_names().get(i).cloned().unwrap_or_default();
            let sum: f64 = rho.iter().sum();
            if (sum - 1.0).abs() > TARGET_SUM_TOLERANCE {
                if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
                    return Err(Error::InvalidTarget {
                        feature: name,
                        reason: format!("entries sum to {sum}, expected 1"),
                    });
                }
                warn!("target for feature `{name}` sums to {sum}; renormalizing");
                rho.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Self::new(space, per_feature)
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.per_feature[i]
    }

    pub fn get(&self, feature: usize, value: usize) -> f64 {
        self.per_feature[feature][value]
    }

    pub fn per_feature(&self) -> &[Vec<f64>] {
        &self.per_feature
    }

    pub fn num_features(&self) -> usize {
        self.per_feature.len()
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        self.per_feature.iter().map(Vec::len).collect()
    }

    pub fn d_tilde(&self) -> usize {
        self.per_feature.iter().map(|r| r.len() - 1).sum()
    }

    pub fn check_space(&self, space: &CandidateSpace) -> Result<()> {
        space.check_same(&self.domain_sizes())
    }
}

fn check_target_vector(name: &str, rho: &[f64], size: usize) -> Result<()> {
    if rho.len() != size {
        return Err(Error::InvalidTarget {
            feature: name.to_string(),
            reason: format!("{} entries for a domain of size {size}", rho.len()),
        });
    }
    if let Some(v) = rho.iter().find(|v| !(v.is_finite() && **v > 0.0 && **v < 1.0)) {
        return Err(Error::InvalidTarget {
            feature: name.to_string(),
            reason: format!("entry {v} is not strictly inside (0, 1)"),
        });
    }
    Ok(())
}

/// A multiset of accepted candidates with incrementally maintained per-cell
/// counts `N_j^i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    domain_sizes: Vec<usize>,
    members: Vec<Candidate>,
    counts: Vec<Vec<usize>>,
}

impl Committee {
    pub fn new(space: &CandidateSpace) -> Self {
        Committee {
            domain_sizes: space.domain_sizes().to_vec(),
            members: Vec::new(),
            counts: space.domain_sizes().iter().map(|&d| vec![0; d]).collect(),
        }
    }

    pub fn from_members(space: &CandidateSpace, members: impl IntoIterator<Item = Candidate>) -> Self {
        let mut committee = Self::new(space);
        for m in members {
            committee.add(m);
        }
        committee
    }

    pub fn add(&mut self, candidate: Candidate) {
        for (i, &v) in candidate.values.iter().enumerate() {
            self.counts[i][v] += 1;
        }
        self.members.push(candidate);
    }

    /// Removes one occurrence of `candidate`; returns whether it was present.
    pub fn remove(&mut self, candidate: &Candidate) -> bool {
        match self.members.iter().position(|m| m == candidate) {
            Some(pos) => {
                let removed = self.members.swap_remove(pos);
                for (i, &v) in removed.values.iter().enumerate() {
                    self.counts[i][v] -= 1;
                }
                true
            }
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Candidate] {
        &self.members
    }

    /// `N_j^i`: number of members whose feature `i` equals `j`.
    pub fn count(&self, feature: usize, value: usize) -> usize {
        self.counts[feature][value]
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    /// Counts recomputed from scratch from the member list.
    pub fn recount(&self) -> Vec<Vec<usize>> {
        let mut counts: Vec<Vec<usize>> = self.domain_sizes.iter().map(|&d| vec![0; d]).collect();
        for m in &self.members {
            for (i, &v) in m.values.iter().enumerate() {
                counts[i][v] += 1;
            }
        }
        counts
    }
}

/// Realized per-feature proportions `λ^i` of a committee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationProfile {
    per_feature: Vec<Vec<f64>>,
}

impl RepresentationProfile {
    pub fn new(per_feature: Vec<Vec<f64>>) -> Self {
        RepresentationProfile { per_feature }
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.per_feature[i]
    }

    pub fn per_feature(&self) -> &[Vec<f64>] {
        &self.per_feature
    }
}

/// `λ_j^i(C) = N_j^i / |C|`.
pub fn representation_profile(
    committee: &Committee,
    space: &CandidateSpace,
) -> Result<RepresentationProfile> {
    space.check_same(&committee.domain_sizes)?;
    if committee.is_empty() {
        return Err(Error::EmptyCommittee);
    }
    let size = committee.len() as f64;
    let per_feature = committee
        .counts
        .iter()
        .map(|row| row.iter().map(|&n| n as f64 / size).collect())
        .collect();
    Ok(RepresentationProfile { per_feature })
}

/// `max_{i,j} |λ_j^i − ρ_j^i|` over every cell, including the last value of
/// each feature.
pub fn representation_loss(profile: &RepresentationProfile, target: &TargetProfile) -> Result<f64> {
    max_deviation(profile.per_feature(), target.per_feature(), false)
}

/// Same as [`representation_loss`] but restricted to `j < D_i − 1`, the
/// cells the proportionality constraints are written on.
pub fn restricted_representation_loss(
    profile: &RepresentationProfile,
    target: &TargetProfile,
) -> Result<f64> {
    max_deviation(profile.per_feature(), target.per_feature(), true)
}

/// ℓ∞ distance between two profiles of the same shape.
pub fn profile_distance(a: &RepresentationProfile, b: &RepresentationProfile) -> Result<f64> {
    max_deviation(a.per_feature(), b.per_feature(), false)
}

fn max_deviation(a: &[Vec<f64>], b: &[Vec<f64>], skip_last: bool) -> Result<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::ShapeMismatch("profile and target shapes differ".into()));
    }
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let cells = if skip_last { x.len() - 1 } else { x.len() };
        for j in 0..cells {
            worst = worst.max((x[j] - y[j]).abs());
        }
    }
    Ok(worst)
}

/// On-disk description of a space with its targets:
/// `{"features":[{"name":"gender","size":2,"target":[0.507,0.493]}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDefinition {
    pub features: Vec<FeatureDefinition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDefinition {
    pub name: String,
    pub size: usize,
    pub target: Vec<f64>,
}

impl ProblemDefinition {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_parts(space: &CandidateSpace, target: &TargetProfile) -> Self {
        let features = space
            .feature_names()
            .iter()
            .zip(space.domain_sizes())
            .zip(target.per_feature())
            .map(|((name, &size), rho)| FeatureDefinition {
                name: name.clone(),
                size,
                target: rho.clone(),
            })
            .collect();
        ProblemDefinition { features }
    }

    /// Validates and builds the space and target profile. Target vectors
    /// summing to within [`RENORMALIZE_TOLERANCE`] of one are rescaled.
    pub fn build(&self) -> Result<(CandidateSpace, TargetProfile)> {
        let space = CandidateSpace::with_names(
            self.features.iter().map(|f| f.size).collect(),
            self.features.iter().map(|f| f.name.clone()).collect(),
        )?;
        let target =
            TargetProfile::normalized(&space, self.features.iter().map(|f| f.target.clone()).collect())?;
        Ok((space, target))
    }
}
