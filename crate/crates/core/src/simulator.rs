//! Seeded Monte-Carlo trials: stream candidates from `p`, apply a strategy,
//! stop at `K` acceptances or at a horizon, and record sample complexity,
//! representation loss and regret.
//!
//! Each trial owns two ChaCha8 streams derived from its seed, one for the
//! candidates and one for the strategy's coin flips, so changing the
//! strategy never changes the candidate sequence.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmdp::StationaryPolicy;
use crate::distribution::JointDistribution;
use crate::domain::{
    representation_loss, representation_profile, restricted_representation_loss, CandidateSpace, Committee,
    RepresentationProfile, TargetProfile,
};
use crate::error::{Error, Result};
use crate::policies::{Strategy, TraceRow};

pub const DEFAULT_T_MAX: u64 = 10_000_000;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PANELFORGE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOptions {
    /// Safety valve on the number of screened candidates.
    pub t_max: u64,
    pub record_trace: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions { t_max: DEFAULT_T_MAX, record_trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    TimedOut,
}

/// Outcome of one run until `K` acceptances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub strategy: String,
    pub seed: u64,
    pub k: usize,
    /// Candidates screened, the last accepted one included.
    pub tau: u64,
    pub accepted: usize,
    pub rejected: u64,
    /// Loss over every cell; `None` for an empty committee.
    pub loss: Option<f64>,
    /// Loss over the cells `j < D_i − 1` only.
    pub restricted_loss: Option<f64>,
    pub status: TrialStatus,
    /// Episodes used by a learner.
    pub episodes: Option<usize>,
    pub committee: Committee,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

impl TrialRecord {
    pub fn cell_counts(&self) -> &[Vec<usize>] {
        self.committee.counts()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn trial_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let candidates = ChaCha8Rng::seed_from_u64(seed);
    let mut decisions = ChaCha8Rng::seed_from_u64(seed);
    decisions.set_stream(1);
    (candidates, decisions)
}

fn losses(committee: &Committee, space: &CandidateSpace, target: &TargetProfile) -> Result<(Option<f64>, Option<f64>)> {
    if committee.is_empty() {
        return Ok((None, None));
    }
    let profile = representation_profile(committee, space)?;
    Ok((
        Some(representation_loss(&profile, target)?),
        Some(restricted_representation_loss(&profile, target)?),
    ))
}

#[allow(clippy::too_many_arguments)]
fn run_stream(
    strategy: &Strategy,
    space: &CandidateSpace,
    target: &TargetProfile,
    k: usize,
    seed: u64,
    options: &TrialOptions,
    mut next_candidate: impl FnMut() -> Option<usize>,
    decisions: &mut ChaCha8Rng,
) -> Result<TrialRecord> {
    if k == 0 {
        return Err(Error::InvalidParameter("committee size K must be at least 1".into()));
    }
    target.check_space(space)?;
    let mut agent = strategy.start(space, target, k, options.t_max)?;
    let mut committee = Committee::new(space);
    let mut trace = options.record_trace.then(Vec::new);
    let mut t = 0u64;
    let mut rejected = 0u64;
    let mut status = TrialStatus::Completed;
    while committee.len() < k {
        if t >= options.t_max {
            status = TrialStatus::TimedOut;
            break;
        }
        let Some(x) = next_candidate() else {
            status = TrialStatus::TimedOut;
            break;
        };
        t += 1;
        let candidate = space.decode(x);
        let outcome = agent.step(x, &candidate, decisions)?;
        if let Some(rows) = trace.as_mut() {
            rows.push(TraceRow {
                t,
                candidate: x,
                episode: outcome.episode,
                accept_prob: outcome.accept_prob,
                decision: outcome.decision,
            });
        }
        if outcome.decision.is_accept() {
            committee.add(candidate);
        } else {
            rejected += 1;
        }
    }
    debug_assert_eq!(t, committee.len() as u64 + rejected);
    let (loss, restricted_loss) = losses(&committee, space, target)?;
    Ok(TrialRecord {
        strategy: strategy.name().to_string(),
        seed,
        k,
        tau: t,
        accepted: committee.len(),
        rejected,
        loss,
        restricted_loss,
        status,
        episodes: agent.episodes(),
        committee,
        trace,
    })
}

/// Screens candidates drawn from `p` until `K` are accepted or `t_max`
/// candidates have been seen.
pub fn run_until_k(
    strategy: &Strategy,
    p: &JointDistribution,
    target: &TargetProfile,
    k: usize,
    seed: u64,
    options: &TrialOptions,
) -> Result<TrialRecord> {
    let (mut candidates, mut decisions) = trial_rngs(seed);
    run_stream(
        strategy,
        p.space(),
        target,
        k,
        seed,
        options,
        || Some(p.sample_index(&mut candidates)),
        &mut decisions,
    )
}

/// Like [`run_until_k`] but on a fixed candidate stream (flat indices), for
/// replaying logged runs. Running out of stream counts as a time-out.
pub fn replay_until_k(
    strategy: &Strategy,
    space: &CandidateSpace,
    target: &TargetProfile,
    k: usize,
    seed: u64,
    stream: &[usize],
    options: &TrialOptions,
) -> Result<TrialRecord> {
    if let Some(&bad) = stream.iter().find(|&&x| x >= space.size()) {
        return Err(Error::InvalidCandidate(format!("flat index {bad} outside a space of {}", space.size())));
    }
    let (_, mut decisions) = trial_rngs(seed);
    let mut it = stream.iter().copied();
    run_stream(strategy, space, target, k, seed, options, || it.next(), &mut decisions)
}

/// Seeded trials in parallel; results come back in the order of `seeds`.
pub fn run_trials(
    strategy: &Strategy,
    p: &JointDistribution,
    target: &TargetProfile,
    k: usize,
    seeds: &[u64],
    options: &TrialOptions,
) -> Vec<Result<TrialRecord>> {
    seeds.par_iter().map(|&seed| run_until_k(strategy, p, target, k, seed, options)).collect()
}

/// Progress of a fixed-horizon run at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub accepted: u64,
    pub regret: f64,
    pub constraint_cost: f64,
    pub loss: Option<f64>,
}

/// Outcome of one fixed-horizon run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub strategy: String,
    pub seed: u64,
    pub horizon: u64,
    pub g_star: f64,
    /// `N(T)`.
    pub accepted: u64,
    /// `R(T) = g*·T − N(T)`.
    pub regret: f64,
    /// `Rc(T) = max_{i, j < D_i − 1} |N_j^i(T) − ρ_j^i·N(T)|`.
    pub constraint_cost: f64,
    pub loss: Option<f64>,
    pub restricted_loss: Option<f64>,
    pub episodes: Option<usize>,
    pub cell_counts: Vec<Vec<u64>>,
    /// At `t = 1, 2, 4, …` and at `T`.
    pub checkpoints: Vec<Checkpoint>,
}

fn constraint_cost(counts: &[Vec<u64>], accepted: u64, target: &TargetProfile) -> f64 {
    let n = accepted as f64;
    let mut worst: f64 = 0.0;
    for (row, rho) in counts.iter().zip(target.per_feature()) {
        for j in 0..row.len() - 1 {
            worst = worst.max((row[j] as f64 - rho[j] * n).abs());
        }
    }
    worst
}

fn count_losses(counts: &[Vec<u64>], accepted: u64, target: &TargetProfile) -> Result<(Option<f64>, Option<f64>)> {
    if accepted == 0 {
        return Ok((None, None));
    }
    let n = accepted as f64;
    let profile =
        RepresentationProfile::new(counts.iter().map(|row| row.iter().map(|&c| c as f64 / n).collect()).collect());
    Ok((
        Some(representation_loss(&profile, target)?),
        Some(restricted_representation_loss(&profile, target)?),
    ))
}

/// Runs exactly `T` steps with no committee-size stop. Greedy quotas are
/// sized for `K = T`.
pub fn run_horizon(
    strategy: &Strategy,
    p: &JointDistribution,
    target: &TargetProfile,
    horizon: u64,
    g_star: f64,
    seed: u64,
) -> Result<RegretRecord> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon T must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&g_star) {
        return Err(Error::InvalidParameter(format!("g* = {g_star} outside [0, 1]")));
    }
    let space = p.space();
    target.check_space(space)?;
    let k = usize::try_from(horizon).map_err(|_| Error::InvalidParameter("horizon too large".into()))?;
    let mut agent = strategy.start(space, target, k, horizon)?;
    let (mut candidates, mut decisions) = trial_rngs(seed);
    let mut counts: Vec<Vec<u64>> = space.domain_sizes().iter().map(|&d| vec![0; d]).collect();
    let mut accepted = 0u64;
    let mut checkpoints = Vec::new();
    let mut next_checkpoint = 1u64;
    for t in 1..=horizon {
        let x = p.sample_index(&mut candidates);
        let candidate = space.decode(x);
        if agent.step(x, &candidate, &mut decisions)?.decision.is_accept() {
            accepted += 1;
            for (i, &j) in candidate.values().iter().enumerate() {
                counts[i][j] += 1;
            }
        }
        if t == next_checkpoint || t == horizon {
            checkpoints.push(Checkpoint {
                t,
                accepted,
                regret: g_star * t as f64 - accepted as f64,
                constraint_cost: constraint_cost(&counts, accepted, target),
                loss: count_losses(&counts, accepted, target)?.0,
            });
            if t == next_checkpoint {
                next_checkpoint = next_checkpoint.saturating_mul(2);
            }
        }
    }
    let (loss, restricted_loss) = count_losses(&counts, accepted, target)?;
    Ok(RegretRecord {
        strategy: strategy.name().to_string(),
        seed,
        horizon,
        g_star,
        accepted,
        regret: g_star * horizon as f64 - accepted as f64,
        constraint_cost: constraint_cost(&counts, accepted, target),
        loss,
        restricted_loss,
        episodes: agent.episodes(),
        cell_counts: counts,
        checkpoints,
    })
}

/// Empirical law of `τ` for a stationary policy next to the negative
/// binomial closed form `K/g`, `K(1 − g)/g²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSummary {
    pub trials: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub gain: f64,
    pub closed_form_mean: f64,
    pub closed_form_variance: f64,
}

/// Trials use seeds `seed, seed + 1, …`.
pub fn estimate_tau_distribution(
    policy: &StationaryPolicy,
    p: &JointDistribution,
    k: usize,
    n_trials: usize,
    seed: u64,
) -> Result<TauSummary> {
    let g = policy.gain(p);
    if g <= 0.0 {
        return Err(Error::ZeroGain);
    }
    if n_trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    // Targets are irrelevant to a stationary policy; any valid profile does.
    let space = p.space();
    let uniform: Vec<Vec<f64>> = space.domain_sizes().iter().map(|&d| vec![1.0 / d as f64; d]).collect();
    let target = TargetProfile::new(space, uniform)?;
    let strategy = Strategy::stationary("stationary", policy.clone());
    let seeds: Vec<u64> = (0..n_trials as u64).map(|i| seed.wrapping_add(i)).collect();
    let taus: Vec<f64> = run_trials(&strategy, p, &target, k, &seeds, &TrialOptions::default())
        .into_iter()
        .map(|r| {
            let r = r?;
            match r.status {
                TrialStatus::Completed => Ok(r.tau as f64),
                TrialStatus::TimedOut => Err(Error::NumericalFailure(format!("trial {} timed out", r.seed))),
            }
        })
        .collect::<Result<_>>()?;
    let n = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let variance = if taus.len() > 1 { taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let kf = k as f64;
    Ok(TauSummary {
        trials: taus.len(),
        mean,
        variance,
        gain: g,
        closed_form_mean: kf / g,
        closed_form_variance: kf * (1.0 - g) / (g * g),
    })
}

/// Flat view of a [`TrialRecord`]; column order is frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub strategy: String,
    pub k: usize,
    pub seed: u64,
    pub tau: u64,
    pub loss: Option<f64>,
    pub status: TrialStatus,
    pub accepted: usize,
    pub rejected: u64,
    pub restricted_loss: Option<f64>,
    pub episodes: Option<usize>,
}

impl From<&TrialRecord> for TrialRow {
    fn from(r: &TrialRecord) -> Self {
        TrialRow {
            strategy: r.strategy.clone(),
            k: r.k,
            seed: r.seed,
            tau: r.tau,
            loss: r.loss,
            status: r.status,
            accepted: r.accepted,
            rejected: r.rejected,
            restricted_loss: r.restricted_loss,
            episodes: r.episodes,
        }
    }
}

pub fn write_trials_csv<W: Write>(records: &[TrialRecord], writer: W) -> Result<()> {
    write_csv(records.iter().map(TrialRow::from), writer)
}

pub fn read_trials_csv<R: Read>(reader: R) -> Result<Vec<TrialRow>> {
    read_csv(reader)
}

/// One aggregated line per (strategy, K). Means skip timed-out trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: String,
    pub k: usize,
    pub trials: usize,
    pub completed: usize,
    pub timed_out: usize,
    /// Trials that ended in an error rather than a record.
    pub failed: usize,
    pub mean_tau: Option<f64>,
    pub mean_loss: Option<f64>,
    pub frac_timed_out: f64,
}

/// Folds rows in seed order, so the result does not depend on how the
/// trials were scheduled.
pub fn summarize(strategy: &str, k: usize, rows: &[TrialRow], failed: usize) -> SweepRow {
    let mut sorted: Vec<&TrialRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.seed);
    let mut completed = 0usize;
    let mut tau_sum = 0.0;
    let mut loss_sum = 0.0;
    for r in &sorted {
        if r.status == TrialStatus::Completed {
            completed += 1;
            tau_sum += r.tau as f64;
            loss_sum += r.loss.unwrap_or(0.0);
        }
    }
    let trials = rows.len() + failed;
    let timed_out = rows.len() - completed;
    SweepRow {
        strategy: strategy.to_string(),
        k,
        trials,
        completed,
        timed_out,
        failed,
        mean_tau: (completed > 0).then(|| tau_sum / completed as f64),
        mean_loss: (completed > 0).then(|| loss_sum / completed as f64),
        frac_timed_out: if trials == 0 { 0.0 } else { timed_out as f64 / trials as f64 },
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    write_csv(rows.iter(), writer)
}

pub fn read_sweep_csv<R: Read>(reader: R) -> Result<Vec<SweepRow>> {
    read_csv(reader)
}

/// Flat view of a [`RegretRecord`] without its checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub strategy: String,
    pub seed: u64,
    pub horizon: u64,
    pub g_star: f64,
    pub accepted: u64,
    pub regret: f64,
    pub constraint_cost: f64,
    pub loss: Option<f64>,
    pub restricted_loss: Option<f64>,
    pub episodes: Option<usize>,
}

impl From<&RegretRecord> for RegretRow {
    fn from(r: &RegretRecord) -> Self {
        RegretRow {
            strategy: r.strategy.clone(),
            seed: r.seed,
            horizon: r.horizon,
            g_star: r.g_star,
            accepted: r.accepted,
            regret: r.regret,
            constraint_cost: r.constraint_cost,
            loss: r.loss,
            restricted_loss: r.restricted_loss,
            episodes: r.episodes,
        }
    }
}

pub fn write_regret_csv<W: Write>(records: &[RegretRecord], writer: W) -> Result<()> {
    write_csv(records.iter().map(RegretRow::from), writer)
}

#[derive(Serialize)]
struct CheckpointRow<'a> {
    strategy: &'a str,
    seed: u64,
    t: u64,
    accepted: u64,
    regret: f64,
    constraint_cost: f64,
    loss: Option<f64>,
}

/// Every checkpoint of every record, one row each.
pub fn write_checkpoints_csv<W: Write>(records: &[RegretRecord], writer: W) -> Result<()> {
    write_csv(
        records.iter().flat_map(|r| {
            r.checkpoints.iter().map(move |c| CheckpointRow {
                strategy: &r.strategy,
                seed: r.seed,
                t: c.t,
                accepted: c.accepted,
                regret: c.regret,
                constraint_cost: c.constraint_cost,
                loss: c.loss,
            })
        }),
        writer,
    )
}

/// Pretty JSON array of any record type, newline-terminated.
pub fn rows_to_json<T: Serialize>(rows: &[T]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)? + "\n")
}

fn write_csv<T: Serialize, W: Write>(rows: impl IntoIterator<Item = T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: serde::de::DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader).deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Worker pool sized by `PANELFORGE_THREADS`, or `None` when unset.
pub fn thread_pool_from_env() -> Result<Option<rayon::ThreadPool>> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidParameter(format!("cannot build a pool of {threads} threads: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::StrategySpec;

    fn appendix() -> (JointDistribution, TargetProfile) {
        let space = CandidateSpace::new(vec![2, 2]).unwrap();
        let p = JointDistribution::new(space.clone(), vec![1.0 / 3.0, 0.25, 0.25, 1.0 / 6.0]).unwrap();
        let target = TargetProfile::new(&space, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        (p, target)
    }

    #[test]
    fn accept_all_stops_at_k() {
        let (p, target) = appendix();
        let s = Strategy::stationary("all", StationaryPolicy::accept_all(p.space().clone()));
        let r = run_until_k(&s, &p, &target, 25, 9, &TrialOptions::default()).unwrap();
        assert_eq!(r.tau, 25);
        assert_eq!(r.rejected, 0);
        assert_eq!(r.status, TrialStatus::Completed);
        assert_eq!(r.committee.len(), 25);
    }

    #[test]
    fn reject_all_times_out() {
        let (p, target) = appendix();
        let s = Strategy::stationary("none", StationaryPolicy::reject_all(p.space().clone()));
        let opts = TrialOptions { t_max: 50, record_trace: false };
        let r = run_until_k(&s, &p, &target, 3, 0, &opts).unwrap();
        assert_eq!(r.status, TrialStatus::TimedOut);
        assert_eq!(r.tau, 50);
        assert_eq!(r.loss, None);
    }

    #[test]
    fn reject_all_regret_is_full() {
        let (p, target) = appendix();
        let s = Strategy::stationary("none", StationaryPolicy::reject_all(p.space().clone()));
        let r = run_horizon(&s, &p, &target, 100, 5.0 / 6.0, 4).unwrap();
        assert_eq!(r.accepted, 0);
        assert!((r.regret - 500.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.constraint_cost, 0.0);
        let ts: Vec<u64> = r.checkpoints.iter().map(|c| c.t).collect();
        assert_eq!(ts, vec![1, 2, 4, 8, 16, 32, 64, 100]);
    }

    #[test]
    fn zero_gain_rejected() {
        let (p, _) = appendix();
        let policy = StationaryPolicy::reject_all(p.space().clone());
        assert!(matches!(estimate_tau_distribution(&policy, &p, 3, 10, 0), Err(Error::ZeroGain)));
    }

    #[test]
    fn trace_matches_record() {
        let (p, target) = appendix();
        let s = StrategySpec::RlCmdp { delta: 0.1 }.resolve(&p, &target).unwrap();
        let opts = TrialOptions { record_trace: true, ..TrialOptions::default() };
        let r = run_until_k(&s, &p, &target, 30, 2, &opts).unwrap();
        let trace = r.trace.as_ref().unwrap();
        assert_eq!(trace.len() as u64, r.tau);
        assert_eq!(trace.iter().filter(|row| row.decision.is_accept()).count(), 30);
        assert_eq!(trace.last().unwrap().episode, r.episodes.unwrap());
    }

    #[test]
    fn summary_skips_timeouts() {
        let row = |seed, tau, status| TrialRow {
            strategy: "greedy".into(),
            k: 4,
            seed,
            tau,
            loss: Some(0.25),
            status,
            accepted: 4,
            rejected: tau - 4,
            restricted_loss: Some(0.25),
            episodes: None,
        };
        let rows = vec![row(2, 10, TrialStatus::Completed), row(1, 6, TrialStatus::Completed), row(3, 99, TrialStatus::TimedOut)];
        let s = summarize("greedy", 4, &rows, 0);
        assert_eq!(s.completed, 2);
        assert_eq!(s.mean_tau, Some(8.0));
        assert!((s.frac_timed_out - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_header_is_frozen() {
        let (p, target) = appendix();
        let s = Strategy::stationary("cmdp", StationaryPolicy::accept_all(p.space().clone()));
        let r = run_until_k(&s, &p, &target, 2, 0, &TrialOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("strategy,k,seed,tau,loss,status,accepted,rejected,restricted_loss,episodes\n"));
        assert_eq!(read_trials_csv(buf.as_slice()).unwrap(), vec![TrialRow::from(&r)]);
    }
}
