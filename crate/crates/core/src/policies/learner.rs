use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::{build_extended_lp, solve_program, StationaryPolicy};
use crate::distribution::{BernsteinConstants, ConfidenceSet, EmpiricalEstimate};
use crate::domain::{CandidateSpace, TargetProfile};
use crate::error::{Error, Result};

use super::Decision;

/// Shape of the confidence set the learner plans against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerVariant {
    L1,
    Bernstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub variant: LearnerVariant,
    pub delta: f64,
    #[serde(default)]
    pub constants: BernsteinConstants,
}

impl LearnerConfig {
    pub fn l1(delta: f64) -> Self {
        LearnerConfig { variant: LearnerVariant::L1, delta, constants: BernsteinConstants::default() }
    }

    pub fn bernstein(delta: f64) -> Self {
        LearnerConfig { variant: LearnerVariant::Bernstein, delta, constants: BernsteinConstants::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.constants.b1 > 0.0 && self.constants.b2 > 0.0) {
            return Err(Error::InvalidParameter("Bernstein constants must be positive".into()));
        }
        Ok(())
    }
}

/// Optimistic learner with doubling episodes.
///
/// Episode `l` starts at `τ_l` with a snapshot of the visit counts and ends
/// after the first step `t` at which `n_t(x_t) ≥ max(1, 2·n_{τ_l−1}(x_t))`.
/// The next step then re-plans on a fresh confidence set.
#[derive(Debug, Clone)]
pub struct LearnerState {
    space: CandidateSpace,
    target: TargetProfile,
    config: LearnerConfig,
    horizon: u64,
    counts: EmpiricalEstimate,
    snapshot: Vec<u64>,
    episode: usize,
    episode_start: u64,
    t: u64,
    policy: StationaryPolicy,
    replan_pending: bool,
    fallbacks: usize,
}

impl LearnerState {
    /// `horizon` bounds the run length; the Bernstein variant checks its
    /// episode starts against it.
    pub fn new(space: &CandidateSpace, target: &TargetProfile, config: LearnerConfig, horizon: u64) -> Result<Self> {
        config.validate()?;
        target.check_space(space)?;
        Ok(LearnerState {
            space: space.clone(),
            target: target.clone(),
            config,
            horizon: horizon.max(1),
            counts: EmpiricalEstimate::new(space.size()),
            snapshot: vec![0; space.size()],
            episode: 1,
            episode_start: 1,
            t: 0,
            policy: StationaryPolicy::accept_all(space.clone()),
            replan_pending: false,
            fallbacks: 0,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    /// Current episode index, starting at 1.
    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn episode_start(&self) -> u64 {
        self.episode_start
    }

    /// Steps taken so far.
    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn counts(&self) -> &EmpiricalEstimate {
        &self.counts
    }

    pub fn snapshot(&self) -> &[u64] {
        &self.snapshot
    }

    pub fn policy(&self) -> &StationaryPolicy {
        &self.policy
    }

    /// Episodes whose program failed and kept the previous policy.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    /// Observes candidate `x`, re-planning first if the previous step closed
    /// an episode. Returns the decision and the acceptance probability used.
    pub fn step<R: Rng + ?Sized>(&mut self, x: usize, rng: &mut R) -> (Decision, f64) {
        self.t += 1;
        if self.replan_pending {
            self.start_episode();
        }
        self.counts.record(x);
        let prob = self.policy.accept_prob(x);
        let decision = Decision::draw(prob, rng);
        let n = self.counts.count(x);
        if n >= (2 * self.snapshot[x]).max(1) {
            self.replan_pending = true;
        }
        (decision, prob)
    }

    fn start_episode(&mut self) {
        self.replan_pending = false;
        self.episode += 1;
        self.episode_start = self.t;
        self.snapshot.copy_from_slice(self.counts.counts());
        match self.plan() {
            Ok(policy) => self.policy = policy,
            Err(e) => {
                self.fallbacks += 1;
                warn!("episode {} keeps the previous policy: {e}", self.episode);
            }
        }
    }

    fn plan(&self) -> Result<StationaryPolicy> {
        let set = match self.config.variant {
            LearnerVariant::L1 => ConfidenceSet::l1(&self.counts, self.config.delta)?,
            LearnerVariant::Bernstein => {
                ConfidenceSet::bernstein(&self.counts, self.config.delta, self.horizon, self.config.constants)?
            }
        };
        let program = build_extended_lp(&self.space, &set, &self.target)?;
        let solution = solve_program(&self.space, &program)?;
        debug!(
            "episode {} at t = {}: optimistic gain {:.4}",
            self.episode, self.episode_start, solution.objective
        );
        Ok(solution.policy)
    }
}
