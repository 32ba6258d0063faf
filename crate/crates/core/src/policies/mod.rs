//! Online decision strategies, each a step function over the candidate
//! stream.

mod greedy;
mod learner;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::{solve_known_p, StationaryPolicy};
use crate::distribution::{BernsteinConstants, JointDistribution};
use crate::domain::{Candidate, CandidateSpace, TargetProfile};
use crate::error::{Error, Result};

pub use greedy::GreedyState;
pub use learner::{LearnerConfig, LearnerState, LearnerVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    /// Accepts with probability `prob`. Draws one uniform even when `prob`
    /// is 0 or 1 so the decision stream stays aligned across policies.
    pub fn draw<R: Rng + ?Sized>(prob: f64, rng: &mut R) -> Decision {
        let u: f64 = rng.random();
        if u < prob {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }

    pub fn is_accept(self) -> bool {
        self == Decision::Accept
    }
}

/// Runs a fixed stationary policy.
pub fn stationary_step<R: Rng + ?Sized>(policy: &StationaryPolicy, x: usize, rng: &mut R) -> Decision {
    Decision::draw(policy.accept_prob(x), rng)
}

/// A strategy as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum StrategySpec {
    #[serde(rename = "greedy")]
    Greedy { epsilon: f64 },
    #[serde(rename = "cmdp")]
    Cmdp {},
    #[serde(rename = "rlcmdp")]
    RlCmdp { delta: f64 },
    #[serde(rename = "rlcmdp-b")]
    RlCmdpBernstein {
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constants: Option<BernsteinConstants>,
    },
}

impl StrategySpec {
    pub fn name(&self) -> &'static str {
        match self {
            StrategySpec::Greedy { .. } => "greedy",
            StrategySpec::Cmdp {} => "cmdp",
            StrategySpec::RlCmdp { .. } => "rlcmdp",
            StrategySpec::RlCmdpBernstein { .. } => "rlcmdp-b",
        }
    }

    /// Resolves into a runnable strategy; `cmdp` solves the known-`p`
    /// program here, once for all trials.
    pub fn resolve(&self, p: &JointDistribution, target: &TargetProfile) -> Result<Strategy> {
        match *self {
            StrategySpec::Greedy { epsilon } => {
                if !(epsilon >= 0.0 && epsilon.is_finite()) {
                    return Err(Error::InvalidParameter(format!("greedy epsilon must be >= 0, got {epsilon}")));
                }
                Ok(Strategy::Greedy { epsilon })
            }
            StrategySpec::Cmdp {} => Ok(Strategy::Stationary {
                name: "cmdp".into(),
                policy: solve_known_p(p, target)?.policy,
            }),
            StrategySpec::RlCmdp { delta } => {
                let config = LearnerConfig::l1(delta);
                config.validate()?;
                Ok(Strategy::Learner(config))
            }
            StrategySpec::RlCmdpBernstein { delta, constants } => {
                let config = LearnerConfig {
                    constants: constants.unwrap_or_default(),
                    ..LearnerConfig::bernstein(delta)
                };
                config.validate()?;
                Ok(Strategy::Learner(config))
            }
        }
    }
}

/// A strategy ready to start trials.
#[derive(Debug, Clone)]
pub enum Strategy {
    Greedy { epsilon: f64 },
    Stationary { name: String, policy: StationaryPolicy },
    Learner(LearnerConfig),
}

impl Strategy {
    pub fn stationary(name: impl Into<String>, policy: StationaryPolicy) -> Self {
        Strategy::Stationary { name: name.into(), policy }
    }

    pub fn name(&self) -> &str {
        match self {
            Strategy::Greedy { .. } => "greedy",
            Strategy::Stationary { name, .. } => name,
            Strategy::Learner(c) => match c.variant {
                LearnerVariant::L1 => "rlcmdp",
                LearnerVariant::Bernstein => "rlcmdp-b",
            },
        }
    }

    /// Fresh per-trial state. `k` sizes the greedy quotas; `horizon` bounds
    /// the learner's run.
    pub fn start(&self, space: &CandidateSpace, target: &TargetProfile, k: usize, horizon: u64) -> Result<Agent> {
        Ok(match self {
            Strategy::Greedy { epsilon } => Agent::Greedy(GreedyState::new(space, target, k, *epsilon)?),
            Strategy::Stationary { policy, .. } => {
                if policy.space() != space {
                    return Err(Error::ShapeMismatch("policy was built for another candidate space".into()));
                }
                Agent::Stationary(policy.clone())
            }
            Strategy::Learner(config) => Agent::Learner(Box::new(LearnerState::new(space, target, *config, horizon)?)),
        })
    }
}

/// Per-trial mutable strategy state.
#[derive(Debug, Clone)]
pub enum Agent {
    Greedy(GreedyState),
    Stationary(StationaryPolicy),
    Learner(Box<LearnerState>),
}

/// What one step decided and why.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub decision: Decision,
    pub accept_prob: f64,
    /// Episode index for learners, 0 otherwise.
    pub episode: usize,
}

impl Agent {
    /// `x` is the flat index of `candidate`. Randomised strategies draw from
    /// `rng`; greedy draws nothing.
    pub fn step<R: Rng + ?Sized>(&mut self, x: usize, candidate: &Candidate, rng: &mut R) -> Result<StepOutcome> {
        match self {
            Agent::Greedy(g) => {
                let decision = g.step(candidate)?;
                let accept_prob = if decision.is_accept() { 1.0 } else { 0.0 };
                Ok(StepOutcome { decision, accept_prob, episode: 0 })
            }
            Agent::Stationary(policy) => {
                let accept_prob = policy.accept_prob(x);
                Ok(StepOutcome { decision: Decision::draw(accept_prob, rng), accept_prob, episode: 0 })
            }
            Agent::Learner(l) => {
                let (decision, accept_prob) = l.step(x, rng);
                Ok(StepOutcome { decision, accept_prob, episode: l.episode() })
            }
        }
    }

    pub fn episodes(&self) -> Option<usize> {
        match self {
            Agent::Learner(l) => Some(l.episode()),
            _ => None,
        }
    }
}

/// One line of the audit log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub candidate: usize,
    pub episode: usize,
    pub accept_prob: f64,
    pub decision: Decision,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: std::io::Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn appendix() -> (JointDistribution, TargetProfile) {
        let space = CandidateSpace::new(vec![2, 2]).unwrap();
        let p = JointDistribution::new(space.clone(), vec![1.0 / 3.0, 0.25, 0.25, 1.0 / 6.0]).unwrap();
        let target = TargetProfile::new(&space, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        (p, target)
    }

    #[test]
    fn stationary_extremes() {
        let space = CandidateSpace::new(vec![2]).unwrap();
        let policy = StationaryPolicy::new(space, vec![1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(stationary_step(&policy, 0, &mut rng), Decision::Accept);
            assert_eq!(stationary_step(&policy, 1, &mut rng), Decision::Reject);
        }
    }

    #[test]
    fn cmdp_policy_accepts_ms_half_the_time() {
        let (p, target) = appendix();
        let strategy = StrategySpec::Cmdp {}.resolve(&p, &target).unwrap();
        let Strategy::Stationary { policy, .. } = &strategy else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let hits = (0..n).filter(|_| stationary_step(policy, 0, &mut rng).is_accept()).count();
        assert!((hits as f64 / n as f64 - 0.5).abs() <= 0.01);
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"[{"kind":"greedy","epsilon":0.05},{"kind":"cmdp"},{"kind":"rlcmdp","delta":0.1},{"kind":"rlcmdp-b","delta":0.1}]"#;
        let specs: Vec<StrategySpec> = serde_json::from_str(text).unwrap();
        assert_eq!(specs.iter().map(|s| s.name()).collect::<Vec<_>>(), ["greedy", "cmdp", "rlcmdp", "rlcmdp-b"]);
        let again: Vec<StrategySpec> = serde_json::from_str(&serde_json::to_string(&specs).unwrap()).unwrap();
        assert_eq!(specs, again);
        assert!(serde_json::from_str::<StrategySpec>(r#"{"kind":"greedy"}"#).is_err());
        assert!(serde_json::from_str::<StrategySpec>(r#"{"kind":"greedy","epsilon":0.1,"k":3}"#).is_err());
    }

    #[test]
    fn resolve_validates_parameters() {
        let (p, target) = appendix();
        assert!(StrategySpec::Greedy { epsilon: -1.0 }.resolve(&p, &target).is_err());
        assert!(StrategySpec::RlCmdp { delta: 2.0 }.resolve(&p, &target).is_err());
        let s = StrategySpec::RlCmdpBernstein { delta: 0.1, constants: None }.resolve(&p, &target).unwrap();
        assert_eq!(s.name(), "rlcmdp-b");
    }

    #[test]
    fn trace_csv_round_trip() {
        let rows = vec![
            TraceRow { t: 1, candidate: 3, episode: 1, accept_prob: 1.0, decision: Decision::Accept },
            TraceRow { t: 2, candidate: 0, episode: 2, accept_prob: 0.5, decision: Decision::Reject },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,candidate,episode,accept_prob,decision\n1,3,1,1.0,accept\n"));
        assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), rows);
    }
}
