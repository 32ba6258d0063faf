//! Fixtures shared by the acceptance suite: the small worked instances,
//! a random-instance generator and a few statistics helpers.

use std::io::Write;

use panelforge::distribution::JointDistribution;
use panelforge::domain::{CandidateSpace, TargetProfile};
use rand::Rng;

/// Gender × age space; flat order MS, MJ, FS, FJ.
pub fn gender_age() -> CandidateSpace {
    CandidateSpace::with_names(vec![2, 2], vec!["gender".into(), "age".into()]).unwrap()
}

/// `p = {MS: 1/3, MJ: 1/4, FS: 1/4, FJ: 1/6}` with balanced targets. The
/// optimal policy accepts MS with probability 1/2, the rest always, for a
/// gain of 5/6.
pub fn balanced_instance() -> (JointDistribution, TargetProfile) {
    let space = gender_age();
    let p = JointDistribution::new(space.clone(), vec![1.0 / 3.0, 0.25, 0.25, 1.0 / 6.0]).unwrap();
    let target = TargetProfile::new(&space, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    (p, target)
}

/// `p = {MS: 1/2 − e, MJ: 1/4, FS: 1/4, FJ: e}`, gender targets (1/2, 1/2),
/// age targets (3/4, 1/4), on which greedy with no slack can get stuck
/// waiting for the rare FJ.
pub fn rare_cell_instance(e: f64) -> (JointDistribution, TargetProfile) {
    let space = gender_age();
    let p = JointDistribution::new(space.clone(), vec![0.5 - e, 0.25, 0.25, e]).unwrap();
    let target = TargetProfile::new(&space, vec![vec![0.5, 0.5], vec![0.75, 0.25]]).unwrap();
    (p, target)
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// A random strictly positive instance with `|X| ≤ 16`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> (JointDistribution, TargetProfile) {
    let shapes: [&[usize]; 7] = [&[2], &[4], &[2, 2], &[2, 3], &[3, 3], &[2, 2, 2], &[2, 2, 4]];
    let sizes = shapes[rng.random_range(0..shapes.len())].to_vec();
    let space = CandidateSpace::new(sizes.clone()).unwrap();
    let p = JointDistribution::new(space.clone(), random_simplex(rng, space.size(), 0.05)).unwrap();
    let target = TargetProfile::new(&space, sizes.iter().map(|&d| random_simplex(rng, d, 0.2)).collect()).unwrap();
    (p, target)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Coefficient of determination of the least-squares line through the
/// points.
pub fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

/// Prints one verdict line straight to stdout so it shows even when the
/// test harness captures output.
pub fn report(criterion: u32, title: &str, passed: bool, detail: &str) -> bool {
    report_labelled(&format!("criterion {criterion:>2}"), title, passed, detail)
}

/// Same line format for checks outside the numbered list.
pub fn report_labelled(label: &str, title: &str, passed: bool, detail: &str) -> bool {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[acceptance] {label} {verdict}: {title} ({detail})");
    let _ = out.flush();
    passed
}
