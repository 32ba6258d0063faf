//! Experiment configuration files and K-sweeps over several strategies.
//!
//! ```json
//! {
//!   "problem": {"features": [{"name": "gender", "size": 2, "target": [0.5, 0.5]}]},
//!   "distribution": {"kind": "marginals", "marginals": [[0.4, 0.6]]},
//!   "strategies": [{"kind": "greedy", "epsilon": 0.05}, {"kind": "cmdp"}],
//!   "k": [50, 100],
//!   "trials": 50,
//!   "seed": 0
//! }
//! ```
//!
//! `problem` may be omitted for the embedded dataset, whose own targets are
//! then used.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::brexit;
use crate::distribution::{bayes_adjust, JointDistribution};
use crate::domain::{CandidateSpace, ProblemDefinition, TargetProfile};
use crate::error::{Error, Result};
use crate::policies::StrategySpec;
use crate::simulator::{run_trials, summarize, SweepRow, TrialOptions, TrialRecord, TrialRow, DEFAULT_T_MAX};

/// Where candidates come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum DistributionSource {
    /// Independent features. With `volunteer_rates`, `marginals` are
    /// population shares and are turned into volunteer shares by Bayes' rule.
    #[serde(rename = "marginals")]
    Marginals {
        marginals: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        volunteer_rates: Option<Vec<Vec<f64>>>,
    },
    /// Explicit joint table; relative paths resolve against the config file.
    #[serde(rename = "joint-csv")]
    JointCsv { path: PathBuf },
    /// A dataset shipped with the crate, optionally restricted to some
    /// features.
    #[serde(rename = "embedded")]
    Embedded {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    /// One row per (strategy, K).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
    /// One row per trial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_trials() -> usize {
    1
}

fn default_t_max() -> u64 {
    DEFAULT_T_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemDefinition>,
    pub distribution: DistributionSource,
    pub strategies: Vec<StrategySpec>,
    pub k: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Trial `n` of every (strategy, K) uses seed `seed + n`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t_max")]
    pub t_max: u64,
    #[serde(default)]
    pub output: OutputPaths,
}

/// Everything a trial needs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub space: CandidateSpace,
    pub target: TargetProfile,
    pub p: JointDistribution,
}

fn field_error(field: &str, e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("config field `{field}`: {e}"))
}

impl ExperimentConfig {
    /// Six-feature embedded dataset, CMDP only.
    pub fn brexit_default() -> Self {
        ExperimentConfig {
            problem: None,
            distribution: DistributionSource::Embedded { name: "brexit".into(), features: None },
            strategies: vec![StrategySpec::Cmdp {}],
            k: vec![200],
            trials: 1,
            seed: 0,
            t_max: DEFAULT_T_MAX,
            output: OutputPaths::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Structural checks that do not need the distribution.
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(field_error("strategies", "at least one strategy is required"));
        }
        for (n, s) in self.strategies.iter().enumerate() {
            let ok = match *s {
                StrategySpec::Greedy { epsilon } => epsilon.is_finite() && epsilon >= 0.0,
                StrategySpec::Cmdp {} => true,
                StrategySpec::RlCmdp { delta } | StrategySpec::RlCmdpBernstein { delta, .. } => {
                    delta > 0.0 && delta < 1.0
                }
            };
            if !ok {
                return Err(field_error(&format!("strategies[{n}]"), format!("bad parameters for `{}`", s.name())));
            }
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(field_error("k", "need at least one committee size, each >= 1"));
        }
        if self.trials == 0 {
            return Err(field_error("trials", "must be >= 1"));
        }
        if self.t_max == 0 {
            return Err(field_error("t_max", "must be >= 1"));
        }
        if let Some(problem) = &self.problem {
            problem.build().map_err(|e| field_error("problem", e))?;
        }
        if !matches!(self.distribution, DistributionSource::Embedded { .. }) && self.problem.is_none() {
            return Err(field_error("problem", "required unless the distribution is embedded"));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|n| self.seed.wrapping_add(n)).collect()
    }

    /// Builds space, targets and distribution. `base_dir` anchors relative
    /// paths.
    pub fn instance(&self, base_dir: &Path) -> Result<Instance> {
        match &self.distribution {
            DistributionSource::Embedded { name, features } => {
                if name != "brexit" {
                    return Err(field_error("distribution.name", format!("unknown embedded dataset `{name}`")));
                }
                let names: Vec<&str> = match features {
                    Some(f) => f.iter().map(String::as_str).collect(),
                    None => brexit::FEATURES.iter().map(|f| f.name).collect(),
                };
                let b = brexit::subset(&names).map_err(|e| field_error("distribution.features", e))?;
                let target = match &self.problem {
                    None => b.target,
                    Some(problem) => {
                        let (space, target) = problem.build().map_err(|e| field_error("problem", e))?;
                        if space.domain_sizes() != b.space.domain_sizes() {
                            return Err(field_error("problem", "feature sizes differ from the embedded dataset"));
                        }
                        target
                    }
                };
                Ok(Instance { space: b.space, target, p: b.joint })
            }
            DistributionSource::Marginals { marginals, volunteer_rates } => {
                let (space, target) = self.problem_parts()?;
                let marginals = match volunteer_rates {
                    None => marginals.clone(),
                    Some(rates) => {
                        if rates.len() != marginals.len() {
                            return Err(field_error("distribution.volunteer_rates", "one row per feature expected"));
                        }
                        marginals
                            .iter()
                            .zip(rates)
                            .enumerate()
                            .map(|(i, (m, r))| {
                                bayes_adjust(m, r)
                                    .map_err(|e| field_error(&format!("distribution.volunteer_rates[{i}]"), e))
                            })
                            .collect::<Result<_>>()?
                    }
                };
                let p = JointDistribution::from_marginals(space.clone(), &marginals)
                    .map_err(|e| field_error("distribution.marginals", e))?;
                Ok(Instance { space, target, p })
            }
            DistributionSource::JointCsv { path } => {
                let (space, target) = self.problem_parts()?;
                let path = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let file = std::fs::File::open(&path)
                    .map_err(|e| field_error("distribution.path", format!("{}: {e}", path.display())))?;
                let p = JointDistribution::from_csv_reader(space.clone(), file)
                    .map_err(|e| field_error("distribution.path", e))?;
                Ok(Instance { space, target, p })
            }
        }
    }

    fn problem_parts(&self) -> Result<(CandidateSpace, TargetProfile)> {
        self.problem
            .as_ref()
            .ok_or_else(|| field_error("problem", "required unless the distribution is embedded"))?
            .build()
            .map_err(|e| field_error("problem", e))
    }
}

/// Per-trial records and their aggregation, in config order.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub trials: Vec<TrialRecord>,
    pub rows: Vec<SweepRow>,
}

/// Runs every strategy at every K. Failing trials are logged and counted;
/// the sweep carries on.
pub fn run_sweep(config: &ExperimentConfig, instance: &Instance) -> Result<SweepResult> {
    let options = TrialOptions { t_max: config.t_max, record_trace: false };
    let seeds = config.seeds();
    let mut trials = Vec::new();
    let mut rows = Vec::new();
    for spec in &config.strategies {
        let strategy = spec.resolve(&instance.p, &instance.target)?;
        for &k in &config.k {
            let mut records = Vec::with_capacity(seeds.len());
            let mut failed = 0;
            for (seed, result) in seeds.iter().zip(run_trials(&strategy, &instance.p, &instance.target, k, &seeds, &options)) {
                match result {
                    Ok(r) => records.push(r),
                    Err(e) => {
                        failed += 1;
                        warn!("{} K={k} seed {seed}: {e}", strategy.name());
                    }
                }
            }
            let flat: Vec<TrialRow> = records.iter().map(TrialRow::from).collect();
            rows.push(summarize(strategy.name(), k, &flat, failed));
            trials.extend(records);
        }
    }
    Ok(SweepResult { trials, rows })
}
