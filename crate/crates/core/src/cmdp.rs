//! Occupation-measure linear programs for the committee CMDP.
//!
//! States are candidates `x`, actions are reject (`a = 0`) and accept
//! (`a = 1`), the reward is `1{a = 1}` and the transition kernel ignores the
//! current state: `P(x' | x, a) = p(x')`. The flow constraints therefore
//! collapse to `μ(x,0) + μ(x,1) = p(x)` and the proportionality constraints
//! read
//!
//! ```text
//! Σ_x μ(x,1) · (1{x^i = j} − ρ_j^i) = 0      for every i and j < D_i − 1.
//! ```
//!
//! The last value of each feature is left out; its constraint is the negated
//! sum of the others.
//!
//! Variable layout shared by every builder: `μ(x,a)` lives at `2x + a`; the
//! ℓ1 builder appends `β(x)` at `2|X| + x`.

use serde::{Deserialize, Serialize};

use crate::distribution::{ConfidenceSet, JointDistribution};
use crate::domain::{CandidateSpace, TargetProfile};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus};

/// Column of `μ(x, a)`.
pub fn mu_index(x: usize, accept: bool) -> usize {
    2 * x + usize::from(accept)
}

/// Column of `β(x)` in the ℓ1 extended program.
pub fn beta_index(space_size: usize, x: usize) -> usize {
    2 * space_size + x
}

/// Accept probabilities indexed by flat candidate index.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    space: CandidateSpace,
    accept_prob: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(space: CandidateSpace, accept_prob: Vec<f64>) -> Result<Self> {
        if accept_prob.len() != space.size() {
            return Err(Error::ShapeMismatch(format!(
                "{} accept probabilities for {} candidates",
                accept_prob.len(),
                space.size()
            )));
        }
        if let Some(v) = accept_prob.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("accept probability {v} outside [0, 1]")));
        }
        Ok(StationaryPolicy { space, accept_prob })
    }

    pub fn accept_all(space: CandidateSpace) -> Self {
        let n = space.size();
        StationaryPolicy { space, accept_prob: vec![1.0; n] }
    }

    pub fn reject_all(space: CandidateSpace) -> Self {
        let n = space.size();
        StationaryPolicy { space, accept_prob: vec![0.0; n] }
    }

    pub fn space(&self) -> &CandidateSpace {
        &self.space
    }

    pub fn accept_prob(&self, x: usize) -> f64 {
        self.accept_prob[x]
    }

    pub fn accept_probs(&self) -> &[f64] {
        &self.accept_prob
    }

    /// Long-run selection rate `g = Σ_x p(x) π(x)`.
    pub fn gain(&self, p: &JointDistribution) -> f64 {
        gain(self, p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PolicyFile {
            domain_sizes: self.space.domain_sizes().to_vec(),
            fingerprint: self.space.fingerprint(),
            accept_prob: self.accept_prob.clone(),
        })
        .expect("policy serializes")
    }

    /// Loads a policy written by [`StationaryPolicy::to_json`], refusing it
    /// if it was computed for a different space.
    pub fn from_json(text: &str, space: &CandidateSpace) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(text)?;
        if file.fingerprint != space.fingerprint() || file.domain_sizes != space.domain_sizes() {
            return Err(Error::ShapeMismatch(format!(
                "policy was computed for domain sizes {:?}, not {:?}",
                file.domain_sizes,
                space.domain_sizes()
            )));
        }
        Self::new(space.clone(), file.accept_prob)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    domain_sizes: Vec<usize>,
    fingerprint: u64,
    accept_prob: Vec<f64>,
}

/// `Σ_x p(x) · π(x)`, the probability that a fresh candidate is accepted.
pub fn gain(policy: &StationaryPolicy, p: &JointDistribution) -> f64 {
    policy
        .accept_prob
        .iter()
        .zip(p.probabilities())
        .map(|(a, q)| a * q)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// State-action frequencies `μ(x, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationMeasure {
    mu: Vec<f64>,
}

impl OccupationMeasure {
    /// Takes the `2|X|` leading entries of an LP solution.
    pub fn from_lp_values(space_size: usize, values: &[f64]) -> Result<Self> {
        if values.len() < 2 * space_size {
            return Err(Error::ShapeMismatch(format!(
                "{} LP values for {} occupation entries",
                values.len(),
                2 * space_size
            )));
        }
        Ok(OccupationMeasure { mu: values[..2 * space_size].iter().map(|v| v.max(0.0)).collect() })
    }

    /// `μ(x,1) = p(x)·π(x)`, `μ(x,0) = p(x)·(1 − π(x))`.
    pub fn from_policy(policy: &StationaryPolicy, p: &JointDistribution) -> Self {
        let mu = p
            .probabilities()
            .iter()
            .zip(policy.accept_probs())
            .flat_map(|(q, a)| [q * (1.0 - a), q * a])
            .collect();
        OccupationMeasure { mu }
    }

    pub fn space_size(&self) -> usize {
        self.mu.len() / 2
    }

    pub fn get(&self, x: usize, accept: bool) -> f64 {
        self.mu[mu_index(x, accept)]
    }

    /// `μ(x) = μ(x,0) + μ(x,1)`.
    pub fn state_mass(&self, x: usize) -> f64 {
        self.get(x, false) + self.get(x, true)
    }

    /// Total accept mass `Σ_x μ(x,1)`.
    pub fn accept_mass(&self) -> f64 {
        (0..self.space_size()).map(|x| self.get(x, true)).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.mu
    }
}

/// Denominators below this are treated as zero-probability states.
const ZERO_STATE_MASS: f64 = 1e-14;

/// `π(x) = μ(x,1) / (μ(x,0) + μ(x,1))`, with `π(x) = 1/2` on states of zero
/// mass.
pub fn extract_policy(mu: &OccupationMeasure, space: &CandidateSpace) -> Result<StationaryPolicy> {
    if mu.space_size() != space.size() {
        return Err(Error::ShapeMismatch(format!(
            "occupation measure over {} states for a space of {}",
            mu.space_size(),
            space.size()
        )));
    }
    let accept_prob = (0..space.size())
        .map(|x| {
            let mass = mu.state_mass(x);
            if mass <= ZERO_STATE_MASS {
                0.5
            } else {
                (mu.get(x, true) / mass).clamp(0.0, 1.0)
            }
        })
        .collect();
    StationaryPolicy::new(space.clone(), accept_prob)
}

/// Rows `Σ_x μ(x,1)·(1{x^i=j} − ρ_j^i) = 0` for `j < D_i − 1`.
fn add_representation_rows(lp: &mut LinearProgram, space: &CandidateSpace, target: &TargetProfile) {
    let width = lp.num_vars();
    for i in 0..space.num_features() {
        for j in 0..space.domain_size(i) - 1 {
            let rho = target.get(i, j);
            let mut row = vec![0.0; width];
            for x in 0..space.size() {
                let indicator = if space.feature_value(x, i) == j { 1.0 } else { 0.0 };
                row[mu_index(x, true)] = indicator - rho;
            }
            lp.add_eq(row, 0.0);
        }
    }
}

fn base_program(space: &CandidateSpace, extra_vars: usize) -> LinearProgram {
    let n = space.size();
    let width = 2 * n + extra_vars;
    let mut objective = vec![0.0; width];
    for x in 0..n {
        objective[mu_index(x, true)] = 1.0;
    }
    let mut lp = LinearProgram::new(width).maximize(objective);
    let mut total = vec![0.0; width];
    total[..2 * n].iter_mut().for_each(|v| *v = 1.0);
    lp.add_eq(total, 1.0);
    lp
}

/// The occupation-measure program for a known distribution `p`.
///
/// Fails with [`Error::NotStrictlyPositive`] when `p` has an empty cell; use
/// [`build_known_p_lp_unchecked`] to build it anyway.
pub fn build_known_p_lp(p: &JointDistribution, target: &TargetProfile) -> Result<LinearProgram> {
    if let Some(x) = p.probabilities().iter().position(|&q| q <= 0.0) {
        return Err(Error::NotStrictlyPositive(x));
    }
    build_known_p_lp_unchecked(p, target)
}

pub fn build_known_p_lp_unchecked(p: &JointDistribution, target: &TargetProfile) -> Result<LinearProgram> {
    let space = p.space();
    target.check_space(space)?;
    let mut lp = base_program(space, 0);
    let width = lp.num_vars();
    for (x, &q) in p.probabilities().iter().enumerate() {
        let mut row = vec![0.0; width];
        row[mu_index(x, false)] = 1.0;
        row[mu_index(x, true)] = 1.0;
        lp.add_eq(row, q);
    }
    add_representation_rows(&mut lp, space, target);
    Ok(lp)
}

/// Optimistic program over the ℓ1 ball `{p̃ : ‖p̃ − p̂‖₁ ≤ β_l}`:
///
/// ```text
/// max Σ_x μ(x,1)
/// s.t. μ ≥ 0, β ≥ 0, Σ μ = 1
///      p̂(x) − β(x) ≤ μ(x,0) + μ(x,1) ≤ p̂(x) + β(x)
///      Σ_x β(x) ≤ β_l
///      proportionality rows
/// ```
pub fn build_extended_lp_l1(
    space: &CandidateSpace,
    set: &ConfidenceSet,
    target: &TargetProfile,
) -> Result<LinearProgram> {
    let ConfidenceSet::L1Ball { center, radius, .. } = set else {
        return Err(Error::InvalidParameter("expected an ℓ1 confidence ball".into()));
    };
    target.check_space(space)?;
    let n = space.size();
    if center.len() != n {
        return Err(Error::ShapeMismatch(format!("center over {} cells for |X| = {n}", center.len())));
    }
    let mut lp = base_program(space, n);
    let width = lp.num_vars();
    for (x, &c) in center.iter().enumerate() {
        let mut upper = vec![0.0; width];
        upper[mu_index(x, false)] = 1.0;
        upper[mu_index(x, true)] = 1.0;
        upper[beta_index(n, x)] = -1.0;
        lp.add_le(upper, c);

        let mut lower = vec![0.0; width];
        lower[mu_index(x, false)] = -1.0;
        lower[mu_index(x, true)] = -1.0;
        lower[beta_index(n, x)] = -1.0;
        lp.add_le(lower, -c);
    }
    let mut budget = vec![0.0; width];
    budget[2 * n..].iter_mut().for_each(|v| *v = 1.0);
    lp.add_le(budget, *radius);
    add_representation_rows(&mut lp, space, target);
    Ok(lp)
}

/// Optimistic program over the box `lower(x) ≤ p̃(x) ≤ upper(x)`.
pub fn build_extended_lp_bernstein(
    space: &CandidateSpace,
    set: &ConfidenceSet,
    target: &TargetProfile,
) -> Result<LinearProgram> {
    let ConfidenceSet::BernsteinBox { lower, upper, .. } = set else {
        return Err(Error::InvalidParameter("expected a Bernstein confidence box".into()));
    };
    target.check_space(space)?;
    let n = space.size();
    if lower.len() != n || upper.len() != n {
        return Err(Error::ShapeMismatch(format!("box over {} cells for |X| = {n}", lower.len())));
    }
    let mut lp = base_program(space, 0);
    let width = lp.num_vars();
    for x in 0..n {
        let mut row = vec![0.0; width];
        row[mu_index(x, false)] = 1.0;
        row[mu_index(x, true)] = 1.0;
        lp.add_le(row.clone(), upper[x]);
        lp.add_ge(row, lower[x]);
    }
    add_representation_rows(&mut lp, space, target);
    Ok(lp)
}

/// Builds the extended program matching the kind of `set`.
pub fn build_extended_lp(
    space: &CandidateSpace,
    set: &ConfidenceSet,
    target: &TargetProfile,
) -> Result<LinearProgram> {
    match set {
        ConfidenceSet::L1Ball { .. } => build_extended_lp_l1(space, set, target),
        ConfidenceSet::BernsteinBox { .. } => build_extended_lp_bernstein(space, set, target),
    }
}

/// Optimal policy and its measure for some occupation-measure program.
#[derive(Debug, Clone)]
pub struct CmdpSolution {
    pub measure: OccupationMeasure,
    pub policy: StationaryPolicy,
    /// LP objective, i.e. the gain under the program's own distribution.
    pub objective: f64,
}

/// Solves an occupation-measure program and extracts its policy.
/// Infeasible or unbounded programs surface as [`Error::NumericalFailure`]
/// since none of the builders can produce them for valid inputs.
pub fn solve_program(space: &CandidateSpace, program: &LinearProgram) -> Result<CmdpSolution> {
    let solution = lp::solve(program)?;
    if solution.status != LpStatus::Optimal {
        return Err(Error::NumericalFailure(format!("occupation program is {:?}", solution.status)));
    }
    let measure = OccupationMeasure::from_lp_values(space.size(), &solution.values)?;
    let policy = extract_policy(&measure, space)?;
    Ok(CmdpSolution { measure, policy, objective: solution.objective_value })
}

/// The optimal stationary policy when `p` is known.
pub fn solve_known_p(p: &JointDistribution, target: &TargetProfile) -> Result<CmdpSolution> {
    solve_program(p.space(), &build_known_p_lp(p, target)?)
}
