//! Occupation-measure programs checked against oracles that do not go
//! through the simplex code: grid search, exhaustive vertex enumeration and
//! algebraic identities.

use panelforge::cmdp::{
    build_extended_lp, build_known_p_lp, extract_policy, solve_known_p, solve_program, OccupationMeasure,
    StationaryPolicy,
};
use panelforge::distribution::{ConfidenceSet, JointDistribution};
use panelforge::domain::{CandidateSpace, TargetProfile};
use panelforge::lp::{solve, LpStatus};
use proptest::prelude::*;

fn gender_age() -> CandidateSpace {
    CandidateSpace::new(vec![2, 2]).unwrap()
}

fn balanced(space: &CandidateSpace) -> TargetProfile {
    TargetProfile::new(space, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
}

/// Best gain on a 2x2 instance by grid search. With `a_x = p(x)·π(x)`, the
/// two proportionality equations fix `a_1, a_2` once `a_0, a_3` are chosen,
/// so only the accept probabilities of cells 0 and 3 are gridded, then the
/// grid is refined around the best point.
fn grid_oracle(p: &[f64], rho_g: f64, rho_a: f64) -> f64 {
    let r = rho_g / (1.0 - rho_g);
    let s = rho_a / (1.0 - rho_a);
    let value = |pi0: f64, pi3: f64| -> Option<f64> {
        let a0 = p[0] * pi0;
        let a3 = p[3] * pi3;
        let a2 = (s * (r + 1.0) * a3 - (s + 1.0) * a0) / (1.0 - s * r);
        let a1 = r * a2 + r * a3 - a0;
        let ok = |a: f64, cap: f64| a >= -1e-12 && a <= cap + 1e-12;
        (ok(a1, p[1]) && ok(a2, p[2])).then_some(a0 + a1 + a2 + a3)
    };
    let mut best = (0.0, 0.5, 0.5);
    let mut lo = (0.0, 0.0);
    let mut width = 1.0;
    for _ in 0..4 {
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let pi0 = (lo.0 + width * i as f64 / steps as f64).clamp(0.0, 1.0);
                let pi3 = (lo.1 + width * j as f64 / steps as f64).clamp(0.0, 1.0);
                if let Some(v) = value(pi0, pi3) {
                    if v > best.0 {
                        best = (v, pi0, pi3);
                    }
                }
            }
        }
        width /= 20.0;
        lo = (best.1 - width / 2.0, best.2 - width / 2.0);
    }
    best.0
}

fn simplex4() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 4).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn known_p_optimum_matches_grid(p in simplex4(), rho_g in 0.2f64..0.8, rho_a in 0.2f64..0.8) {
        prop_assume!((rho_g / (1.0 - rho_g)) * (rho_a / (1.0 - rho_a)) < 0.95
            || (rho_g / (1.0 - rho_g)) * (rho_a / (1.0 - rho_a)) > 1.05);
        let space = gender_age();
        let dist = JointDistribution::new(space.clone(), p.clone()).unwrap();
        let target = TargetProfile::new(&space, vec![vec![rho_g, 1.0 - rho_g], vec![rho_a, 1.0 - rho_a]]).unwrap();
        let lp = solve_known_p(&dist, &target).unwrap().objective;
        let grid = grid_oracle(&p, rho_g, rho_a);
        prop_assert!(lp >= grid - 1e-9, "lp {lp} below grid {grid}");
        prop_assert!(lp - grid <= 1e-3, "lp {lp} vs grid {grid}");
    }

    #[test]
    fn accepted_candidates_match_targets(p in simplex4(), rho_g in 0.1f64..0.9, rho_a in 0.1f64..0.9) {
        let space = gender_age();
        let dist = JointDistribution::new(space.clone(), p).unwrap();
        let target = TargetProfile::new(&space, vec![vec![rho_g, 1.0 - rho_g], vec![rho_a, 1.0 - rho_a]]).unwrap();
        let sol = solve_known_p(&dist, &target).unwrap();
        let g = sol.measure.accept_mass();
        prop_assert!(g > 0.0);
        for i in 0..2 {
            for j in 0..2 {
                let share: f64 = (0..4)
                    .filter(|&x| space.feature_value(x, i) == j)
                    .map(|x| sol.measure.get(x, true))
                    .sum::<f64>() / g;
                prop_assert!((share - target.get(i, j)).abs() <= 1e-7, "feature {i} value {j}: {share}");
            }
        }
        for x in 0..4 {
            prop_assert!((sol.measure.state_mass(x) - dist.prob(x)).abs() <= 1e-7);
        }
    }

    #[test]
    fn extraction_inverts_policy_measure(p in simplex4(), pi in prop::collection::vec(0.0f64..=1.0, 4)) {
        let space = gender_age();
        let dist = JointDistribution::new(space.clone(), p).unwrap();
        let policy = StationaryPolicy::new(space.clone(), pi.clone()).unwrap();
        let back = extract_policy(&OccupationMeasure::from_policy(&policy, &dist), &space).unwrap();
        for (a, b) in back.accept_probs().iter().zip(&pi) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn objective_scaling_keeps_policy(p in simplex4(), scale in prop::sample::select(vec![0.5, 3.0, 1000.0])) {
        let space = gender_age();
        let dist = JointDistribution::new(space.clone(), p).unwrap();
        let target = TargetProfile::new(&space, vec![vec![0.4, 0.6], vec![0.55, 0.45]]).unwrap();
        let lp = build_known_p_lp(&dist, &target).unwrap();
        let mut scaled = lp.clone();
        scaled.objective.iter_mut().for_each(|c| *c *= scale);
        let a = solve_program(&space, &lp).unwrap();
        let b = solve_program(&space, &scaled).unwrap();
        prop_assert!((b.objective - scale * a.objective).abs() <= 1e-9 * scale.max(1.0));
        for (x, y) in a.policy.accept_probs().iter().zip(b.policy.accept_probs()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn zero_radius_ball_is_known_p(p in simplex4(), rho_g in 0.1f64..0.9, rho_a in 0.1f64..0.9) {
        let space = gender_age();
        let dist = JointDistribution::new(space.clone(), p.clone()).unwrap();
        let target = TargetProfile::new(&space, vec![vec![rho_g, 1.0 - rho_g], vec![rho_a, 1.0 - rho_a]]).unwrap();
        let known = solve_known_p(&dist, &target).unwrap().objective;
        let set = ConfidenceSet::L1Ball { center: p, radius: 0.0, delta: 0.1, episode_start: 1 };
        let ext = solve_program(&space, &build_extended_lp(&space, &set, &target).unwrap()).unwrap().objective;
        prop_assert!((known - ext).abs() <= 1e-9);
    }

    #[test]
    fn balls_around_truth_are_optimistic(p in simplex4(), noise in simplex4(), mix in 0.0f64..0.5, slack in 0.0f64..0.3) {
        let space = gender_age();
        let dist = JointDistribution::new(space.clone(), p.clone()).unwrap();
        let target = balanced(&space);
        let center: Vec<f64> = p.iter().zip(&noise).map(|(a, b)| (1.0 - mix) * a + mix * b).collect();
        let radius = center.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum::<f64>() + slack;
        let set = ConfidenceSet::L1Ball { center, radius, delta: 0.1, episode_start: 1 };
        prop_assert!(set.contains(&p));
        let known = solve_known_p(&dist, &target).unwrap().objective;
        let ext = solve_program(&space, &build_extended_lp(&space, &set, &target).unwrap()).unwrap().objective;
        prop_assert!(ext >= known - 1e-9, "{ext} < {known}");
    }
}

/// Small dense solve by Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    let pivot_row = a[col].clone();
                    for (v, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                        *v -= f * p;
                    }
                    b[row] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut with_last = combinations(n - 1, k - 1);
    with_last.iter_mut().for_each(|c| c.push(n - 1));
    let mut out = combinations(n - 1, k);
    out.extend(with_last);
    out
}

/// Max of `Σ_x μ(x,1)` over the box-constrained program on the 2x2 space
/// with balanced targets, by visiting every basic solution. `None` when no
/// vertex is feasible.
fn vertex_oracle(lower: &[f64], upper: &[f64]) -> Option<f64> {
    // variables μ(x,a) at 2x + a; gender M = cells 0,1; age S = cells 0,2
    let mut eq: Vec<(Vec<f64>, f64)> = vec![(vec![1.0; 8], 0.0)];
    eq[0].1 = 1.0;
    let mut gender = vec![0.0; 8];
    let mut age = vec![0.0; 8];
    for x in 0..4 {
        gender[2 * x + 1] = if x < 2 { 0.5 } else { -0.5 };
        age[2 * x + 1] = if x % 2 == 0 { 0.5 } else { -0.5 };
    }
    eq.push((gender, 0.0));
    eq.push((age, 0.0));
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    for x in 0..4 {
        let mut row = vec![0.0; 8];
        row[2 * x] = 1.0;
        row[2 * x + 1] = 1.0;
        ineq.push((row.clone(), upper[x]));
        ineq.push((row.iter().map(|v| -v).collect(), -lower[x]));
    }
    for v in 0..8 {
        let mut row = vec![0.0; 8];
        row[v] = -1.0;
        ineq.push((row, 0.0));
    }
    let mut best: Option<f64> = None;
    for active in combinations(ineq.len(), 5) {
        let mut a: Vec<Vec<f64>> = eq.iter().map(|(r, _)| r.clone()).collect();
        let mut b: Vec<f64> = eq.iter().map(|(_, v)| *v).collect();
        for &k in &active {
            a.push(ineq[k].0.clone());
            b.push(ineq[k].1);
        }
        let Some(x) = solve_square(a, b) else { continue };
        let feasible = ineq.iter().all(|(r, h)| r.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>() <= h + 1e-9)
            && eq.iter().all(|(r, h)| (r.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>() - h).abs() <= 1e-9);
        if feasible {
            let gain = (0..4).map(|s| x[2 * s + 1]).sum::<f64>();
            best = Some(best.map_or(gain, |g: f64| g.max(gain)));
        }
    }
    best
}

fn box_program_optimum(lower: &[f64], upper: &[f64]) -> Option<f64> {
    let space = gender_age();
    let set = ConfidenceSet::BernsteinBox {
        center: vec![0.25; 4],
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        delta: 0.1,
        episode_start: 1,
    };
    let lp = build_extended_lp(&space, &set, &balanced(&space)).unwrap();
    let sol = solve(&lp).unwrap();
    match sol.status {
        LpStatus::Optimal => Some(sol.objective_value),
        LpStatus::Infeasible => None,
        LpStatus::Unbounded => panic!("bounded program reported unbounded"),
    }
}

#[test]
fn pinned_cell_box_matches_vertex_enumeration() {
    let cases: [(&[f64], &[f64]); 5] = [
        // FJ pinned to zero: only FS can carry the female share
        (&[0.2, 0.1, 0.2, 0.0], &[0.5, 0.4, 0.5, 0.0]),
        // MJ and FJ pinned: nobody young, only rejecting everyone is representative
        (&[0.2, 0.0, 0.5, 0.0], &[0.5, 0.0, 0.8, 0.0]),
        // uppers cannot reach total mass one
        (&[0.0, 0.0, 0.0, 0.0], &[0.2, 0.2, 0.2, 0.0]),
        (&[0.0; 4], &[1.0; 4]),
        (&[0.3, 0.2, 0.2, 0.1], &[0.4, 0.3, 0.3, 0.2]),
    ];
    for (lower, upper) in cases {
        let oracle = vertex_oracle(lower, upper);
        let lp = box_program_optimum(lower, upper);
        match (oracle, lp) {
            (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-9, "{lower:?} {upper:?}: oracle {a} lp {b}"),
            (None, None) => {}
            other => panic!("{lower:?} {upper:?}: feasibility disagrees {other:?}"),
        }
    }
    assert!((box_program_optimum(&[0.2, 0.1, 0.2, 0.0], &[0.5, 0.4, 0.5, 0.0]).unwrap() - 0.8).abs() < 1e-9);
    assert!(box_program_optimum(&[0.2, 0.0, 0.5, 0.0], &[0.5, 0.0, 0.8, 0.0]).unwrap().abs() < 1e-9);
    assert!(box_program_optimum(&[0.0; 4], &[0.2, 0.2, 0.2, 0.0]).is_none());
}

#[test]
fn unchecked_zero_cell_program_still_solves() {
    let space = gender_age();
    let p = JointDistribution::new(space.clone(), vec![0.5, 0.25, 0.25, 0.0]).unwrap();
    assert!(build_known_p_lp(&p, &balanced(&space)).is_err());
    let lp = panelforge::cmdp::build_known_p_lp_unchecked(&p, &balanced(&space)).unwrap();
    let sol = solve_program(&space, &lp).unwrap();
    // FS must be matched by MJ, and MS cannot be balanced by any FJ
    assert!((sol.objective - 0.5).abs() < 1e-9);
    assert_eq!(sol.policy.accept_prob(3), 0.5);
}

/// Few samples on the 384-cell space: the ball covers the whole simplex, so
/// some distribution matches the targets exactly and accepting everyone is
/// optimal. These programs are massively degenerate.
#[test]
fn wide_balls_on_the_full_brexit_space_reach_one() {
    use panelforge::brexit;
    use panelforge::distribution::EmpiricalEstimate;
    use rand::SeedableRng;

    let inst = brexit::instance().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut est = EmpiricalEstimate::new(inst.space.size());
    for n in [1, 10, 40] {
        while est.total() < n {
            est.record(inst.joint.sample_index(&mut rng));
        }
        let set = ConfidenceSet::l1(&est, 0.1).unwrap();
        let ConfidenceSet::L1Ball { radius, .. } = set else { unreachable!() };
        assert!(radius >= 2.0);
        let sol = solve_program(&inst.space, &build_extended_lp(&inst.space, &set, &inst.target).unwrap()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9, "n = {n}: {}", sol.objective);
    }
}
