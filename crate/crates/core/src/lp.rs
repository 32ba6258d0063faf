//! Dense linear programs and a two-phase tableau simplex.
//!
//! Problems are stated as
//!
//! ```text
//! maximize    c·x
//! subject to  A_eq x  = b_eq
//!             A_ub x <= b_ub
//!             lower <= x <= upper
//! ```
//!
//! with `lower` defaulting to 0 and `upper` to +∞. Bounds may be infinite in
//! either direction. Sizes here are small (up to about a thousand rows), so
//! the solver keeps a full dense tableau. Pricing is Dantzig's with a
//! two-pass ratio test that prefers large pivots. A run of degenerate
//! pivots perturbs the right-hand sides; the true values are put back at
//! the end and repaired with dual simplex pivots. A second run switches to
//! Bland's rule, so cycling cannot occur.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and limits of the simplex solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Smallest tableau entry accepted as a pivot, and the reduced-cost
    /// threshold for an improving column.
    pub pivot_tolerance: f64,
    /// Phase-one residual above which the problem is declared infeasible.
    pub feasibility_tolerance: f64,
    /// Maximum violation of any original constraint tolerated in a returned
    /// optimal point.
    pub verify_tolerance: f64,
    /// Consecutive degenerate pivots before perturbing, and again before
    /// switching to Bland's rule.
    pub degenerate_streak: usize,
    pub max_pivots: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            pivot_tolerance: 1e-9,
            feasibility_tolerance: 1e-8,
            verify_tolerance: 1e-7,
            degenerate_streak: 32,
            max_pivots: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; empty unless `status` is `Optimal`.
    pub values: Vec<f64>,
    /// Objective value; NaN unless `status` is `Optimal`.
    pub objective_value: f64,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> Self {
        LpSolution { status, values: Vec::new(), objective_value: f64::NAN }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// A maximization problem in dense form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ub_matrix: Vec<Vec<f64>>,
    pub ub_rhs: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Option<Vec<f64>>,
}

impl LinearProgram {
    /// An empty problem over `num_vars` non-negative variables with a zero
    /// objective.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            eq_matrix: Vec::new(),
            eq_rhs: Vec::new(),
            ub_matrix: Vec::new(),
            ub_rhs: Vec::new(),
            var_lower: vec![0.0; num_vars],
            var_upper: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn maximize(mut self, objective: Vec<f64>) -> Self {
        assert_eq!(objective.len(), self.num_vars(), "objective width");
        self.objective = objective;
        self
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_matrix.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.ub_matrix.push(row);
        self.ub_rhs.push(rhs);
    }

    /// `row·x >= rhs`, stored as `−row·x <= −rhs`.
    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.add_le(row.into_iter().map(|v| -v).collect(), -rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.var_lower[var] = lower;
        let n = self.num_vars();
        self.var_upper.get_or_insert_with(|| vec![f64::INFINITY; n])[var] = upper;
    }

    pub fn upper(&self, var: usize) -> f64 {
        self.var_upper.as_ref().map_or(f64::INFINITY, |u| u[var])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let bad = |what: &str| Err(Error::InvalidParameter(format!("malformed LP: {what}")));
        if self.eq_matrix.len() != self.eq_rhs.len() || self.ub_matrix.len() != self.ub_rhs.len() {
            return bad("row count differs from right-hand side length");
        }
        if self.eq_matrix.iter().chain(&self.ub_matrix).any(|r| r.len() != n) {
            return bad("constraint row width differs from variable count");
        }
        if self.var_lower.len() != n || self.var_upper.as_ref().is_some_and(|u| u.len() != n) {
            return bad("bound vector length differs from variable count");
        }
        let finite = self
            .objective
            .iter()
            .chain(self.eq_matrix.iter().flatten())
            .chain(self.ub_matrix.iter().flatten())
            .chain(&self.eq_rhs)
            .chain(&self.ub_rhs)
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite coefficient");
        }
        if self.var_lower.iter().any(|&l| l.is_nan() || l == f64::INFINITY)
            || (0..n).any(|j| self.upper(j).is_nan() || self.upper(j) == f64::NEG_INFINITY)
        {
            return bad("invalid variable bound");
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        let eq = self.eq_matrix.iter().zip(&self.eq_rhs).map(|(r, b)| (dot(r) - b).abs());
        let ub = self.ub_matrix.iter().zip(&self.ub_rhs).map(|(r, b)| (dot(r) - b).max(0.0));
        let bounds = x
            .iter()
            .enumerate()
            .map(|(j, &v)| (self.var_lower[j] - v).max(v - self.upper(j)).max(0.0));
        eq.chain(ub).chain(bounds).fold(0.0, f64::max)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Plain-text dump for cross-checking with external solvers:
    ///
    /// ```text
    /// vars <n>
    /// max <c_1> … <c_n>
    /// eq <a_1> … <a_n> = <b>
    /// le <a_1> … <a_n> <= <b>
    /// bound <j> <lower> <upper>      (only for non-default bounds)
    /// ```
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "vars {}", self.num_vars());
        let _ = writeln!(out, "max {}", join(&self.objective));
        for (row, b) in self.eq_matrix.iter().zip(&self.eq_rhs) {
            let _ = writeln!(out, "eq {} = {b:e}", join(row));
        }
        for (row, b) in self.ub_matrix.iter().zip(&self.ub_rhs) {
            let _ = writeln!(out, "le {} <= {b:e}", join(row));
        }
        for j in 0..self.num_vars() {
            let (lo, hi) = (self.var_lower[j], self.upper(j));
            if lo != 0.0 || hi != f64::INFINITY {
                let _ = writeln!(out, "bound {j} {lo:e} {hi:e}");
            }
        }
        out
    }
}

/// Solves with default options.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    solve_with(lp, &SolverOptions::default())
}

pub fn solve_with(lp: &LinearProgram, options: &SolverOptions) -> Result<LpSolution> {
    lp.validate()?;
    let standard = StandardForm::from_lp(lp);
    let mut tableau = Tableau::new(&standard, options);

    if !tableau.phase_one()? {
        return Ok(LpSolution::without_point(LpStatus::Infeasible));
    }
    if !tableau.phase_two(&standard.cost)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded));
    }

    let y = tableau.primal();
    let values = standard.recover(&y);
    let violation = lp.max_violation(&values);
    if violation > options.verify_tolerance {
        return Err(Error::NumericalFailure(format!(
            "optimal basis violates constraints by {violation:e}"
        )));
    }
    let objective_value = lp.objective_at(&values);
    Ok(LpSolution { status: LpStatus::Optimal, values, objective_value })
}

/// How an original variable is expressed in the non-negative columns.
#[derive(Debug, Clone)]
enum VarMap {
    /// `x = offset + y`
    Shifted { col: usize, offset: f64 },
    /// `x = offset − y`
    Mirrored { col: usize, offset: f64 },
    /// `x = y⁺ − y⁻`
    Free { pos: usize, neg: usize },
}

/// `max cost·y  s.t.  rows (=, <=) rhs, y >= 0`.
struct StandardForm {
    map: Vec<VarMap>,
    cost: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Whether the row is an inequality (gets a slack column).
    is_le: Vec<bool>,
}

impl StandardForm {
    fn from_lp(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let mut map = Vec::with_capacity(n);
        let mut cols = 0;
        for j in 0..n {
            let (lo, hi) = (lp.var_lower[j], lp.upper(j));
            let m = if lo.is_finite() {
                VarMap::Shifted { col: cols, offset: lo }
            } else if hi.is_finite() {
                VarMap::Mirrored { col: cols, offset: hi }
            } else {
                cols += 1;
                VarMap::Free { pos: cols - 1, neg: cols }
            };
            cols += 1;
            map.push(m);
        }

        let translate = |row: &[f64]| -> (Vec<f64>, f64) {
            let mut out = vec![0.0; cols];
            let mut shift = 0.0;
            for (j, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                match map[j] {
                    VarMap::Shifted { col, offset } => {
                        out[col] += a;
                        shift += a * offset;
                    }
                    VarMap::Mirrored { col, offset } => {
                        out[col] -= a;
                        shift += a * offset;
                    }
                    VarMap::Free { pos, neg } => {
                        out[pos] += a;
                        out[neg] -= a;
                    }
                }
            }
            (out, shift)
        };

        let (cost, _) = translate(&lp.objective);
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        let mut is_le = Vec::new();
        for (row, b) in lp.eq_matrix.iter().zip(&lp.eq_rhs) {
            let (r, s) = translate(row);
            rows.push(r);
            rhs.push(b - s);
            is_le.push(false);
        }
        for (row, b) in lp.ub_matrix.iter().zip(&lp.ub_rhs) {
            let (r, s) = translate(row);
            rows.push(r);
            rhs.push(b - s);
            is_le.push(true);
        }
        // the remaining finite side of each bound becomes an explicit row
        for (j, m) in map.iter().enumerate() {
            let (lo, hi) = (lp.var_lower[j], lp.upper(j));
            if let VarMap::Shifted { col, .. } = *m {
                if hi.is_finite() {
                    let mut r = vec![0.0; cols];
                    r[col] = 1.0;
                    rows.push(r);
                    rhs.push(hi - lo);
                    is_le.push(true);
                }
            }
        }
        StandardForm { map, cost, rows, rhs, is_le }
    }

    fn recover(&self, y: &[f64]) -> Vec<f64> {
        self.map
            .iter()
            .map(|m| match *m {
                VarMap::Shifted { col, offset } => offset + y[col],
                VarMap::Mirrored { col, offset } => offset - y[col],
                VarMap::Free { pos, neg } => y[pos] - y[neg],
            })
            .collect()
    }
}

struct Tableau<'a> {
    options: &'a SolverOptions,
    /// Row-major `(m + 1) × (width + 1)`; the last row holds reduced costs
    /// and the last column the right-hand side.
    data: Vec<f64>,
    m: usize,
    width: usize,
    structural: usize,
    /// First artificial column; columns at or beyond it never re-enter
    /// after phase one.
    first_artificial: usize,
    basis: Vec<usize>,
    active: Vec<bool>,
    pivots: usize,
    /// Column that held the identity for each row at the start; its
    /// current entries form the basis inverse.
    unit_cols: Vec<usize>,
    /// Right-hand side after the sign normalisation, before any pivot.
    rhs0: Vec<f64>,
    /// Cost vector of the running phase.
    cost: Vec<f64>,
    /// Whether the right-hand sides currently carry a perturbation.
    perturbed: bool,
}

impl<'a> Tableau<'a> {
    fn new(sf: &StandardForm, options: &'a SolverOptions) -> Self {
        let m = sf.rows.len();
        let structural = sf.cost.len();
        let slacks = sf.is_le.iter().filter(|&&b| b).count();
        // rows needing an artificial: equalities, and inequalities with negative rhs
        let needs_art: Vec<bool> = sf
            .is_le
            .iter()
            .zip(&sf.rhs)
            .map(|(&le, &b)| !le || b < 0.0)
            .collect();
        let artificials = needs_art.iter().filter(|&&b| b).count();
        let first_artificial = structural + slacks;
        let width = first_artificial + artificials;
        let stride = width + 1;

        let mut data = vec![0.0; (m + 1) * stride];
        let mut basis = vec![0; m];
        let mut slack_col = structural;
        let mut art_col = first_artificial;
        for i in 0..m {
            let sign = if sf.rhs[i] < 0.0 { -1.0 } else { 1.0 };
            let row = &mut data[i * stride..(i + 1) * stride];
            for (dst, &a) in row.iter_mut().zip(&sf.rows[i]) {
                *dst = sign * a;
            }
            row[width] = sign * sf.rhs[i];
            if sf.is_le[i] {
                row[slack_col] = sign;
                if !needs_art[i] {
                    basis[i] = slack_col;
                }
                slack_col += 1;
            }
            if needs_art[i] {
                row[art_col] = 1.0;
                basis[i] = art_col;
                art_col += 1;
            }
        }

        let rhs0 = (0..m).map(|i| data[i * stride + width]).collect();
        Tableau {
            options,
            data,
            m,
            width,
            structural,
            first_artificial,
            unit_cols: basis.clone(),
            basis,
            active: vec![true; m],
            pivots: 0,
            rhs0,
            cost: Vec::new(),
            perturbed: false,
        }
    }

    fn stride(&self) -> usize {
        self.width + 1
    }

    fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.stride() + col]
    }

    fn rhs(&self, row: usize) -> f64 {
        self.at(row, self.width)
    }

    fn cost_row_mut(&mut self) -> &mut [f64] {
        let s = self.stride();
        let m = self.m;
        &mut self.data[m * s..(m + 1) * s]
    }

    /// Loads reduced costs for `max cost·y` given the current basis.
    fn load_costs(&mut self, cost: &[f64]) {
        let s = self.stride();
        let m = self.m;
        let mut z = vec![0.0; s];
        z[..cost.len()].copy_from_slice(cost);
        for i in 0..m {
            if !self.active[i] {
                continue;
            }
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for (zj, &a) in z.iter_mut().zip(&self.data[i * s..(i + 1) * s]) {
                    *zj -= cb * a;
                }
            }
        }
        // the rhs slot of the cost row holds −(objective value)
        self.cost_row_mut().copy_from_slice(&z);
        self.cost = cost.to_vec();
    }

    /// Shifts every right-hand side up by a small, row-dependent amount so
    /// that no two ratios tie at zero.
    fn perturb(&mut self) {
        let s = self.stride();
        let scale = self.rhs0.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
        for i in (0..self.m).filter(|&i| self.active[i]) {
            let spread = (i as f64 * 0.618_033_988_749_895).fract();
            self.data[i * s + self.width] += 1e-7 * scale * (1.0 + spread);
        }
        self.perturbed = true;
    }

    /// Puts back the true right-hand sides `B⁻¹ b` and the objective.
    fn restore_rhs(&mut self) {
        let s = self.stride();
        for r in (0..self.m).filter(|&r| self.active[r]) {
            let row = &self.data[r * s..(r + 1) * s];
            let v: f64 = self
                .unit_cols
                .iter()
                .zip(&self.rhs0)
                .filter(|&(_, &b)| b != 0.0)
                .map(|(&c, &b)| row[c] * b)
                .sum();
            self.data[r * s + self.width] = v;
        }
        let objective: f64 = (0..self.m)
            .filter(|&i| self.active[i])
            .map(|i| self.cost.get(self.basis[i]).copied().unwrap_or(0.0) * self.rhs(i))
            .sum();
        self.data[self.m * s + self.width] = -objective;
        self.perturbed = false;
    }

    /// Dual simplex pivots from a basis with no improving column until the
    /// basic values are non-negative again.
    fn dual_cleanup(&mut self, limit: usize) -> Result<()> {
        let s = self.stride();
        let tol = self.options.pivot_tolerance;
        loop {
            if self.pivots > self.options.max_pivots {
                return Err(Error::NumericalFailure(format!("pivot limit {} exceeded", self.options.max_pivots)));
            }
            let leaving = (0..self.m)
                .filter(|&i| self.active[i] && self.rhs(i) < -1e-12)
                .min_by(|&a, &b| self.rhs(a).total_cmp(&self.rhs(b)));
            let Some(row) = leaving else {
                for i in (0..self.m).filter(|&i| self.active[i]) {
                    self.data[i * s + self.width] = self.rhs(i).max(0.0);
                }
                return Ok(());
            };
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..limit {
                let a = self.at(row, j);
                if a < -tol {
                    let ratio = self.at(self.m, j).min(0.0) / a;
                    if entering.is_none_or(|(_, best)| ratio < best) {
                        entering = Some((j, ratio));
                    }
                }
            }
            let Some((col, _)) = entering else {
                return Err(Error::NumericalFailure(format!(
                    "basic value {:e} cannot be repaired after removing the perturbation",
                    self.rhs(row)
                )));
            };
            self.pivot(row, col);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let s = self.stride();
        let p = self.at(row, col);
        {
            let r = &mut self.data[row * s..(row + 1) * s];
            r.iter_mut().for_each(|v| *v /= p);
            r[col] = 1.0;
        }
        // rows are mostly sparse, so only touch the pivot row's non-zeros
        let nonzero: Vec<(usize, f64)> = self.data[row * s..(row + 1) * s]
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v != 0.0 && j != col)
            .map(|(j, &v)| (j, v))
            .collect();
        for i in 0..=self.m {
            if i == row || (i < self.m && !self.active[i]) {
                continue;
            }
            let factor = self.data[i * s + col];
            if factor == 0.0 {
                continue;
            }
            let r = &mut self.data[i * s..(i + 1) * s];
            for &(j, pv) in &nonzero {
                r[j] -= factor * pv;
            }
            r[col] = 0.0;
            if i < self.m && r[s - 1] < 0.0 && r[s - 1] > -self.options.feasibility_tolerance {
                r[s - 1] = 0.0;
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Exact minimum ratio, ties to the lowest basic column index.
    fn ratio_test_bland(&self, col: usize) -> Option<(usize, f64)> {
        let tol = self.options.pivot_tolerance;
        let mut leaving: Option<(usize, f64)> = None;
        for i in (0..self.m).filter(|&i| self.active[i]) {
            let a = self.at(i, col);
            if a > tol {
                let ratio = self.rhs(i).max(0.0) / a;
                let better = match leaving {
                    None => true,
                    Some((r, best)) => {
                        ratio < best - 1e-12 * best.abs().max(1.0)
                            || (ratio <= best + 1e-12 * best.abs().max(1.0) && self.basis[i] < self.basis[r])
                    }
                };
                if better {
                    leaving = Some((i, ratio));
                }
            }
        }
        leaving
    }

    /// Two-pass ratio test: bound the step with the right-hand sides
    /// relaxed by the feasibility tolerance, then take the largest pivot
    /// among rows within that bound.
    fn ratio_test_harris(&self, col: usize) -> Option<(usize, f64)> {
        let tol = self.options.pivot_tolerance;
        let relax = self.options.feasibility_tolerance;
        let rows = || (0..self.m).filter(|&i| self.active[i] && self.at(i, col) > tol);
        let bound = rows()
            .map(|i| (self.rhs(i).max(0.0) + relax) / self.at(i, col))
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        let mut leaving: Option<(usize, f64, f64)> = None;
        for i in rows() {
            let a = self.at(i, col);
            let ratio = self.rhs(i).max(0.0) / a;
            if ratio > bound {
                continue;
            }
            let better = match leaving {
                None => true,
                Some((r, _, best_a)) => a > best_a || (a == best_a && self.basis[i] < self.basis[r]),
            };
            if better {
                leaving = Some((i, ratio, a));
            }
        }
        leaving.map(|(i, ratio, _)| (i, ratio))
    }

    /// Runs simplex iterations on the loaded cost row over columns
    /// `[0, limit)` until no column improves, or until the objective
    /// reaches `target`. Returns `false` if the objective is unbounded.
    fn iterate(&mut self, limit: usize, target: Option<f64>) -> Result<bool> {
        let bounded = self.primal_loop(limit, target)?;
        if bounded && self.perturbed {
            self.restore_rhs();
            self.dual_cleanup(limit)?;
        }
        self.perturbed = false;
        Ok(bounded)
    }

    /// Primal simplex with Dantzig pricing. A run of degenerate pivots
    /// first triggers a right-hand-side perturbation, then Bland's rule for
    /// good. The early stop at `target` is off while perturbed, since the
    /// clean-up needs an optimal basis.
    fn primal_loop(&mut self, limit: usize, target: Option<f64>) -> Result<bool> {
        let tol = self.options.pivot_tolerance;
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if self.pivots > self.options.max_pivots {
                return Err(Error::NumericalFailure(format!(
                    "pivot limit {} exceeded",
                    self.options.max_pivots
                )));
            }
            if let Some(t) = target.filter(|_| !self.perturbed) {
                // the rhs slot of the cost row holds the negated objective
                if -self.data[self.m * self.stride() + self.width] >= t {
                    return Ok(true);
                }
            }
            if degenerate >= self.options.degenerate_streak {
                if !self.perturbed {
                    self.perturb();
                    degenerate = 0;
                } else {
                    bland = true;
                }
            }
            let entering = {
                let costs = &self.data[self.m * self.stride()..self.m * self.stride() + limit];
                if bland {
                    costs.iter().position(|&d| d > tol)
                } else {
                    let mut best: Option<(usize, f64)> = None;
                    for (j, &d) in costs.iter().enumerate() {
                        if d > tol && best.is_none_or(|(_, b)| d > b) {
                            best = Some((j, d));
                        }
                    }
                    best.map(|(j, _)| j)
                }
            };
            let Some(col) = entering else {
                return Ok(true);
            };

            let leaving = if bland { self.ratio_test_bland(col) } else { self.ratio_test_harris(col) };
            let Some((row, ratio)) = leaving else {
                return Ok(false);
            };
            if ratio <= tol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
        }
    }

    /// Minimizes the sum of artificials. Returns whether a feasible basis
    /// was found.
    fn phase_one(&mut self) -> Result<bool> {
        if self.first_artificial == self.width {
            return Ok(true);
        }
        let mut cost = vec![0.0; self.width];
        cost[self.first_artificial..].iter_mut().for_each(|c| *c = -1.0);
        self.load_costs(&cost);
        let scale = (0..self.m).map(|i| self.rhs(i).abs()).fold(1.0, f64::max);
        let threshold = self.options.feasibility_tolerance * scale;
        // a zero sum of artificials is optimal; stop there instead of
        // pivoting through the degenerate vertices around it
        let bounded = self.iterate(self.width, Some(-threshold))?;
        debug_assert!(bounded, "phase one objective is bounded by zero");

        // sum of artificial values at the phase-one optimum
        let residual = self.data[self.m * self.stride() + self.width];
        if residual.abs() > threshold {
            return Ok(false);
        }

        // drive basic artificials (at zero level) out, or retire their rows
        for i in 0..self.m {
            if self.basis[i] < self.first_artificial {
                continue;
            }
            let best = (0..self.first_artificial)
                .map(|j| (j, self.at(i, j).abs()))
                .fold(None::<(usize, f64)>, |acc, (j, a)| match acc {
                    Some((_, b)) if b >= a => acc,
                    _ => Some((j, a)),
                });
            match best {
                Some((j, a)) if a > self.options.pivot_tolerance => self.pivot(i, j),
                _ => self.active[i] = false,
            }
        }
        Ok(true)
    }

    fn phase_two(&mut self, cost: &[f64]) -> Result<bool> {
        let mut full = vec![0.0; self.width];
        full[..cost.len()].copy_from_slice(cost);
        self.load_costs(&full);
        self.iterate(self.first_artificial, None)
    }

    fn primal(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.structural];
        for i in 0..self.m {
            if self.active[i] && self.basis[i] < self.structural {
                y[self.basis[i]] = self.rhs(i).max(0.0);
            }
        }
        y
    }
}
