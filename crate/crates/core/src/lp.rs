//! Dense linear programming.
//!
//! [`solve_lp`] is a two-phase primal simplex on a dense tableau with
//! implicit variable bounds (nonbasic columns sit at either bound and may
//! flip without a pivot). Entering columns are priced by largest reduced
//! cost; after a run of degenerate pivots the solver switches to Bland's
//! smallest-index rule until progress resumes. All ties break by lowest
//! index, so identical inputs always yield the same vertex.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min c·x + constant` subject to row constraints and per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constant: f64,
    constraints: Vec<Constraint>,
    bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// `n` variables, zero objective, all variables in `[0, +inf)`.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            constant: 0.0,
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn set_objective_vector(&mut self, c: Vec<f64>) -> Result<()> {
        if c.len() != self.num_vars() {
            return Err(Error::LengthMismatch {
                what: "objective",
                left: c.len(),
                right: self.num_vars(),
            });
        }
        self.objective = c;
        Ok(())
    }

    /// Constant term added to every objective value.
    pub fn set_constant(&mut self, c: f64) {
        self.constant = c;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Result<()> {
        if coeffs.len() != self.num_vars() {
            return Err(Error::LengthMismatch {
                what: "constraint coefficients",
                left: coeffs.len(),
                right: self.num_vars(),
            });
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        Ok(())
    }

    /// Adds a row given as `(variable, coefficient)` pairs; repeated
    /// variables accumulate.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.objective.iter().any(|v| !v.is_finite()) || !self.constant.is_finite() {
            return Err(Error::invalid("objective has a non-finite coefficient"));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::LengthMismatch {
                    what: "constraint coefficients",
                    left: c.coeffs.len(),
                    right: n,
                });
            }
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return Err(Error::invalid(format!(
                    "constraint {i} has a non-finite entry"
                )));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::invalid(format!("variable {j} has invalid bounds")));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.constant + dot(&self.objective, x)
    }

    /// Largest violation of any row or bound at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| {
            let lhs = dot(&c.coeffs, x);
            match c.relation {
                Relation::Le => (lhs - c.rhs).max(0.0),
                Relation::Ge => (c.rhs - lhs).max(0.0),
                Relation::Eq => (lhs - c.rhs).abs(),
            }
        });
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    /// Plain-text dump, one constraint per line, for cross-checking with
    /// other solvers.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# min c.x + constant")?;
        writeln!(
            w,
            "vars {} rows {}",
            self.num_vars(),
            self.num_constraints()
        )?;
        writeln!(w, "constant {}", self.constant)?;
        write!(w, "obj")?;
        for c in &self.objective {
            write!(w, " {c}")?;
        }
        writeln!(w)?;
        for (j, (lo, hi)) in self.bounds.iter().enumerate() {
            writeln!(w, "bound {j} {lo} {hi}")?;
        }
        for (i, c) in self.constraints.iter().enumerate() {
            write!(w, "row {i} {} {} :", c.relation, c.rhs)?;
            for (j, a) in c.coeffs.iter().enumerate() {
                if *a != 0.0 {
                    write!(w, " {j}:{a}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Optimal point; empty unless `status` is optimal.
    pub solution: Vec<f64>,
    /// Objective at `solution`; `-inf` when unbounded, `+inf` when infeasible.
    pub objective: f64,
    pub iterations: usize,
}

impl LpOutcome {
    fn without_solution(status: LpStatus, iterations: usize) -> Self {
        let objective = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self {
            status,
            solution: Vec::new(),
            objective,
            iterations,
        }
    }

    /// Converts non-optimal statuses into errors.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            LpStatus::Infeasible => Err(Error::Infeasible),
            LpStatus::Unbounded => {
                Err(Error::Unbounded("objective decreases without limit".into()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Absolute primal feasibility tolerance.
    pub feasibility_tol: f64,
    /// Smallest pivot magnitude accepted in the ratio test.
    pub pivot_tol: f64,
    /// Reduced-cost threshold for optimality.
    pub optimality_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_switch: usize,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            pivot_tol: 1e-7,
            optimality_tol: 1e-9,
            degenerate_switch: 50,
            max_iterations: 200_000,
        }
    }
}

pub fn solve_lp(p: &LinearProgram) -> Result<LpOutcome> {
    solve_lp_with(p, &SolverOptions::default())
}

pub fn solve_lp_with(p: &LinearProgram, opts: &SolverOptions) -> Result<LpOutcome> {
    p.validate()?;
    let Some(sf) = StandardForm::build(p) else {
        return Ok(LpOutcome::without_solution(LpStatus::Infeasible, 0));
    };
    let mut tab = Tableau::new(&sf, *opts);

    tab.phase_one_costs();
    match tab.run()? {
        RunEnd::Optimal => {}
        RunEnd::Unbounded => {
            return Err(Error::Solver("phase one reported an unbounded ray".into()));
        }
    }
    if tab.artificial_infeasibility() > opts.feasibility_tol {
        return Ok(LpOutcome::without_solution(
            LpStatus::Infeasible,
            tab.iterations,
        ));
    }
    tab.drive_out_artificials();

    tab.phase_two_costs(&sf.cost);
    if let RunEnd::Unbounded = tab.run()? {
        return Ok(LpOutcome::without_solution(
            LpStatus::Unbounded,
            tab.iterations,
        ));
    }

    let xs = tab.refined_values(&sf);
    let solution = sf.recover(&xs);
    let violation = p.max_violation(&solution);
    if violation > opts.feasibility_tol {
        return Err(Error::Solver(format!(
            "numerical trouble: optimal point violates constraints by {violation:e}"
        )));
    }
    Ok(LpOutcome {
        status: LpStatus::Optimal,
        objective: p.evaluate(&solution),
        solution,
        iterations: tab.iterations,
    })
}

/// How an original variable maps onto nonnegative standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lower + col
    Shift { col: usize, lower: f64 },
    /// x = upper - col
    Mirror { col: usize, upper: f64 },
    /// x = pos - neg
    Split { pos: usize, neg: usize },
}

/// `A x = b`, `b >= 0`, `0 <= x <= upper`.
struct StandardForm {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    /// Column usable as the initial basic variable of each row, if any.
    initial_basic: Vec<Option<usize>>,
    maps: Vec<VarMap>,
}

impl StandardForm {
    /// Returns `None` when some variable has `lower > upper`.
    fn build(p: &LinearProgram) -> Option<Self> {
        let mut maps = Vec::with_capacity(p.num_vars());
        let mut upper = Vec::new();
        let mut cost = Vec::new();
        for (j, &(lo, hi)) in p.bounds.iter().enumerate() {
            if lo > hi {
                return None;
            }
            let c = p.objective[j];
            let col = upper.len();
            if lo.is_finite() {
                maps.push(VarMap::Shift { col, lower: lo });
                upper.push(hi - lo);
                cost.push(c);
            } else if hi.is_finite() {
                maps.push(VarMap::Mirror { col, upper: hi });
                upper.push(f64::INFINITY);
                cost.push(-c);
            } else {
                maps.push(VarMap::Split {
                    pos: col,
                    neg: col + 1,
                });
                upper.extend([f64::INFINITY, f64::INFINITY]);
                cost.extend([c, -c]);
            }
        }
        let structural = upper.len();
        let slacks = p
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let rows = p.num_constraints();
        let cols = structural + slacks;
        upper.extend(std::iter::repeat_n(f64::INFINITY, slacks));
        cost.extend(std::iter::repeat_n(0.0, slacks));

        let mut a = vec![0.0; rows * cols];
        let mut b = vec![0.0; rows];
        let mut initial_basic = vec![None; rows];
        let mut slack = structural;
        for (i, con) in p.constraints.iter().enumerate() {
            let row = &mut a[i * cols..(i + 1) * cols];
            let mut rhs = con.rhs;
            for (j, &coef) in con.coeffs.iter().enumerate() {
                if coef == 0.0 {
                    continue;
                }
                match maps[j] {
                    VarMap::Shift { col, lower } => {
                        row[col] += coef;
                        rhs -= coef * lower;
                    }
                    VarMap::Mirror { col, upper } => {
                        row[col] -= coef;
                        rhs -= coef * upper;
                    }
                    VarMap::Split { pos, neg } => {
                        row[pos] += coef;
                        row[neg] -= coef;
                    }
                }
            }
            let slack_col = match con.relation {
                Relation::Le => {
                    row[slack] = 1.0;
                    slack += 1;
                    Some(slack - 1)
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    Some(slack - 1)
                }
                Relation::Eq => None,
            };
            if rhs < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
            }
            initial_basic[i] = slack_col.filter(|&s| row[s] == 1.0);
            b[i] = rhs;
        }
        Some(Self {
            rows,
            cols,
            a,
            b,
            upper,
            cost,
            initial_basic,
            maps,
        })
    }

    fn recover(&self, xs: &[f64]) -> Vec<f64> {
        self.maps
            .iter()
            .map(|m| match *m {
                VarMap::Shift { col, lower } => lower + xs[col],
                VarMap::Mirror { col, upper } => upper - xs[col],
                VarMap::Split { pos, neg } => xs[pos] - xs[neg],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ColState {
    Basic,
    AtLower,
    AtUpper,
}

/// Basic variable of a row: a real column or the row's artificial.
#[derive(Debug, Clone, Copy, PartialEq)]
enum BasicVar {
    Column(usize),
    Artificial,
}

enum RunEnd {
    Optimal,
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// B^-1 A, row-major; artificial columns are never stored.
    t: Vec<f64>,
    /// Values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<BasicVar>,
    state: Vec<ColState>,
    upper: Vec<f64>,
    /// Upper bound of a basic artificial (infinite in phase one, zero after).
    artificial_upper: f64,
    reduced: Vec<f64>,
    opts: SolverOptions,
    iterations: usize,
    pivot_row: Vec<f64>,
    pivot_nz: Vec<usize>,
}

impl Tableau {
    fn new(sf: &StandardForm, opts: SolverOptions) -> Self {
        let mut state = vec![ColState::AtLower; sf.cols];
        let basis = sf
            .initial_basic
            .iter()
            .map(|ib| match ib {
                Some(c) => {
                    state[*c] = ColState::Basic;
                    BasicVar::Column(*c)
                }
                None => BasicVar::Artificial,
            })
            .collect();
        Self {
            rows: sf.rows,
            cols: sf.cols,
            t: sf.a.clone(),
            beta: sf.b.clone(),
            basis,
            state,
            upper: sf.upper.clone(),
            artificial_upper: f64::INFINITY,
            reduced: vec![0.0; sf.cols],
            opts,
            iterations: 0,
            pivot_row: vec![0.0; sf.cols],
            pivot_nz: Vec::with_capacity(sf.cols),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.cols..(i + 1) * self.cols]
    }

    fn phase_one_costs(&mut self) {
        self.reduced.iter_mut().for_each(|d| *d = 0.0);
        for i in 0..self.rows {
            if self.basis[i] == BasicVar::Artificial {
                let (t, cols) = (&self.t, self.cols);
                for (d, a) in self.reduced.iter_mut().zip(&t[i * cols..(i + 1) * cols]) {
                    *d -= a;
                }
            }
        }
        self.zero_basic_reduced();
    }

    fn phase_two_costs(&mut self, cost: &[f64]) {
        self.artificial_upper = 0.0;
        self.reduced.copy_from_slice(cost);
        for i in 0..self.rows {
            if let BasicVar::Column(c) = self.basis[i] {
                let cb = cost[c];
                if cb != 0.0 {
                    let (t, cols) = (&self.t, self.cols);
                    for (d, a) in self.reduced.iter_mut().zip(&t[i * cols..(i + 1) * cols]) {
                        *d -= cb * a;
                    }
                }
            }
        }
        self.zero_basic_reduced();
    }

    fn zero_basic_reduced(&mut self) {
        for (d, s) in self.reduced.iter_mut().zip(&self.state) {
            if *s == ColState::Basic {
                *d = 0.0;
            }
        }
    }

    fn artificial_infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.beta)
            .filter(|(bv, _)| **bv == BasicVar::Artificial)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }

    fn basic_upper(&self, i: usize) -> f64 {
        match self.basis[i] {
            BasicVar::Column(c) => self.upper[c],
            BasicVar::Artificial => self.artificial_upper,
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            ColState::AtUpper => self.upper[j],
            _ => 0.0,
        }
    }

    fn choose_entering(&self, bland: bool) -> Option<usize> {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols {
            let d = self.reduced[j];
            let gain = match self.state[j] {
                ColState::Basic => continue,
                _ if self.upper[j] == 0.0 => continue,
                ColState::AtLower if d < -tol => -d,
                ColState::AtUpper if d > tol => d,
                _ => continue,
            };
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Runs simplex iterations with the current cost row until optimal or
    /// unbounded.
    fn run(&mut self) -> Result<RunEnd> {
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::Solver(format!(
                    "iteration limit {} reached",
                    self.opts.max_iterations
                )));
            }
            let bland = degenerate_run >= self.opts.degenerate_switch;
            let Some(j) = self.choose_entering(bland) else {
                return Ok(RunEnd::Optimal);
            };
            self.iterations += 1;
            let increasing = self.state[j] == ColState::AtLower;
            let sigma = if increasing { 1.0 } else { -1.0 };

            let (leave, theta, leave_alpha) = self.ratio_test(j, sigma, bland);
            let flip = self.upper[j];
            if flip.is_infinite() && leave.is_none() {
                return Ok(RunEnd::Unbounded);
            }

            if theta < 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            if flip <= theta {
                // Bound flip: entering column moves to its other bound.
                for i in 0..self.rows {
                    let alpha = self.t[i * self.cols + j];
                    if alpha != 0.0 {
                        self.beta[i] -= sigma * alpha * flip;
                    }
                }
                self.state[j] = if increasing {
                    ColState::AtUpper
                } else {
                    ColState::AtLower
                };
                degenerate_run = 0;
                continue;
            }

            let r = leave.expect("leaving row exists when no flip");
            let entering_value = self.nonbasic_value(j) + sigma * theta;
            for i in 0..self.rows {
                let alpha = self.t[i * self.cols + j];
                if alpha != 0.0 {
                    self.beta[i] -= sigma * alpha * theta;
                }
            }
            let rate_r = -sigma * leave_alpha;
            if let BasicVar::Column(c) = self.basis[r] {
                self.state[c] = if rate_r < 0.0 {
                    ColState::AtLower
                } else {
                    ColState::AtUpper
                };
            }
            self.pivot(r, j);
            self.beta[r] = entering_value;
        }
    }

    /// Step length along column `j` limited by a row's bound, or `None` when
    /// the row does not restrict the step. `slack` relaxes the bound.
    fn row_limit(&self, i: usize, alpha: f64, sigma: f64, slack: f64) -> Option<f64> {
        let rate = -sigma * alpha;
        if rate < 0.0 {
            Some((self.beta[i] + slack).max(0.0) / -rate)
        } else {
            let ub = self.basic_upper(i);
            if ub.is_infinite() {
                return None;
            }
            Some((ub - self.beta[i] + slack).max(0.0) / rate)
        }
    }

    /// Leaving row, step length and pivot element for entering column `j`.
    ///
    /// Harris two-pass test: the first pass finds the longest step allowed
    /// with bounds relaxed by the feasibility tolerance, the second picks the
    /// largest pivot among rows blocking within that step. Under Bland's rule
    /// ties go to the lowest basic index instead.
    fn ratio_test(&self, j: usize, sigma: f64, bland: bool) -> (Option<usize>, f64, f64) {
        let found = self.ratio_test_with(j, sigma, bland, self.opts.pivot_tol);
        if found.0.is_some() {
            return found;
        }
        // Small entries may still block; only call the ray unbounded when
        // nothing above rounding noise does.
        self.ratio_test_with(j, sigma, bland, 1e-11)
    }

    fn ratio_test_with(
        &self,
        j: usize,
        sigma: f64,
        bland: bool,
        tol: f64,
    ) -> (Option<usize>, f64, f64) {
        let column = |i: usize| self.t[i * self.cols + j];
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let alpha = column(i);
                if alpha.abs() <= tol {
                    continue;
                }
                let Some(limit) = self.row_limit(i, alpha, sigma, 0.0) else {
                    continue;
                };
                let better = match best {
                    None => true,
                    Some((r, theta)) => {
                        limit < theta - 1e-12
                            || (limit <= theta + 1e-12 && self.basic_index(i) < self.basic_index(r))
                    }
                };
                if better {
                    best = Some((i, limit));
                }
            }
            return match best {
                Some((r, theta)) => (Some(r), theta, column(r)),
                None => (None, f64::INFINITY, 0.0),
            };
        }
        let relax = self.opts.feasibility_tol;
        let mut bound = f64::INFINITY;
        for i in 0..self.rows {
            let alpha = column(i);
            if alpha.abs() > tol {
                if let Some(limit) = self.row_limit(i, alpha, sigma, relax) {
                    bound = bound.min(limit);
                }
            }
        }
        if bound.is_infinite() {
            return (None, f64::INFINITY, 0.0);
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let alpha = column(i);
            if alpha.abs() <= tol {
                continue;
            }
            let Some(limit) = self.row_limit(i, alpha, sigma, 0.0) else {
                continue;
            };
            if limit <= bound && best.is_none_or(|(_, a)| alpha.abs() > a) {
                best = Some((i, alpha.abs()));
            }
        }
        let (r, _) = best.expect("the row attaining the relaxed bound qualifies");
        let theta = self
            .row_limit(r, column(r), sigma, 0.0)
            .expect("bounded row");
        (Some(r), theta, column(r))
    }

    /// Index used for Bland tie-breaking; artificials rank after all columns.
    fn basic_index(&self, i: usize) -> usize {
        match self.basis[i] {
            BasicVar::Column(c) => c,
            BasicVar::Artificial => self.cols + i,
        }
    }

    /// Makes column `j` basic in row `r`, updating the tableau and cost row.
    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.t[r * cols + j];
        self.pivot_nz.clear();
        for k in 0..cols {
            let v = self.t[r * cols + k] * inv;
            self.t[r * cols + k] = v;
            self.pivot_row[k] = v;
            if v != 0.0 {
                self.pivot_nz.push(k);
            }
        }
        self.t[r * cols + j] = 1.0;
        self.pivot_row[j] = 1.0;
        let sparse = self.pivot_nz.len() * 3 < cols;
        let prow = &self.pivot_row;
        let nz = &self.pivot_nz;
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let row = &mut self.t[i * cols..(i + 1) * cols];
            let f = row[j];
            if f == 0.0 {
                continue;
            }
            if sparse {
                for &k in nz {
                    row[k] -= f * prow[k];
                }
            } else {
                for (x, p) in row.iter_mut().zip(prow) {
                    *x -= f * p;
                }
            }
            row[j] = 0.0;
        }
        let f = self.reduced[j];
        if f != 0.0 {
            for &k in nz {
                self.reduced[k] -= f * prow[k];
            }
        }
        self.reduced[j] = 0.0;
        self.basis[r] = BasicVar::Column(j);
        self.state[j] = ColState::Basic;
    }

    /// Pivots zero-valued artificials out of the basis where possible.
    /// Rows with no usable column are redundant and keep their artificial
    /// pinned at zero.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.rows {
            if self.basis[r] != BasicVar::Artificial {
                continue;
            }
            let row = self.row(r);
            let mut best: Option<(usize, f64)> = None;
            for (j, &a) in row.iter().enumerate() {
                if self.state[j] == ColState::Basic || a.abs() <= 1e-7 {
                    continue;
                }
                if best.is_none_or(|(_, m)| a.abs() > m) {
                    best = Some((j, a.abs()));
                }
            }
            if let Some((j, _)) = best {
                let value = self.nonbasic_value(j);
                self.pivot(r, j);
                self.beta[r] = value;
            }
        }
    }

    /// Column values at the final basis, with basic values recomputed from
    /// the original rows to shed accumulated pivoting error.
    fn refined_values(&self, sf: &StandardForm) -> Vec<f64> {
        let mut xs: Vec<f64> = (0..self.cols).map(|j| self.nonbasic_value(j)).collect();
        for (i, bv) in self.basis.iter().enumerate() {
            if let BasicVar::Column(c) = bv {
                xs[*c] = self.beta[i];
            }
        }
        let m = self.rows;
        if m == 0 {
            return xs;
        }
        let mut rhs = DVector::from_column_slice(&sf.b);
        for j in 0..self.cols {
            if self.state[j] != ColState::Basic && xs[j] != 0.0 {
                for i in 0..m {
                    rhs[i] -= sf.a[i * sf.cols + j] * xs[j];
                }
            }
        }
        let basis = DMatrix::from_fn(m, m, |i, k| match self.basis[k] {
            BasicVar::Column(c) => sf.a[i * sf.cols + c],
            BasicVar::Artificial => {
                if i == k {
                    1.0
                } else {
                    0.0
                }
            }
        });
        if let Some(sol) = basis.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                for (k, bv) in self.basis.iter().enumerate() {
                    if let BasicVar::Column(c) = bv {
                        xs[*c] = sol[k];
                    }
                }
            }
        }
        for (x, &ub) in xs.iter_mut().zip(&self.upper) {
            *x = x.clamp(0.0, ub);
        }
        xs
    }
}
