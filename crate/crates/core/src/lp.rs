//! Dense two-phase simplex for small linear programs.
//!
//! Solves `max cᵀx` subject to row constraints (`≤`, `≥`, `=`) and `x ≥ 0`.
//! Every row gets an artificial column, so the final tableau carries `B⁻¹`
//! in those columns and the row duals `y = c_Bᵀ B⁻¹` come for free.
//! Pricing is Dantzig's rule; after a run of degenerate pivots it switches to
//! Bland's rule, which cannot cycle.

use log::warn;

use crate::error::{invalid, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual value per constraint, in insertion order. For a `≤` row of a
    /// maximization the dual is nonnegative.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
    /// Iteration cap hit even under Bland's rule.
    Stalled,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Self {
        Self {
            num_vars: objective.len(),
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Result<()> {
        if coeffs.len() != self.num_vars {
            return Err(invalid(format!(
                "constraint has {} coefficients for {} variables",
                coeffs.len(),
                self.num_vars
            )));
        }
        if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("non-finite constraint data"));
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        Ok(())
    }

    /// Largest violation of the constraints and of `x ≥ 0` at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    m: usize,
    n: usize,
    num_slack: usize,
    width: usize,
    // m constraint rows then the objective row; last column is the rhs
    cells: Vec<f64>,
    basis: Vec<usize>,
    flipped: Vec<bool>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.constraints.len();
        let n = lp.num_vars;
        let num_slack = lp
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let width = n + num_slack + m + 1;
        let mut cells = vec![0.0; (m + 1) * width];
        let mut flipped = vec![false; m];
        let mut slack = n;
        for (i, c) in lp.constraints.iter().enumerate() {
            let sign = if c.rhs < 0.0 { -1.0 } else { 1.0 };
            flipped[i] = sign < 0.0;
            let row = &mut cells[i * width..(i + 1) * width];
            for (j, a) in c.coeffs.iter().enumerate() {
                row[j] = sign * a;
            }
            match c.relation {
                Relation::Le => {
                    row[slack] = sign;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -sign;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            row[n + num_slack + i] = 1.0;
            row[width - 1] = sign * c.rhs;
        }
        let basis = (0..m).map(|i| n + num_slack + i).collect();
        Self {
            m,
            n,
            num_slack,
            width,
            cells,
            basis,
            flipped,
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn first_artificial(&self) -> usize {
        self.n + self.num_slack
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.first_artificial() && j < self.width - 1
    }

    /// Loads `z_j − c_j` for the cost vector over all columns.
    fn set_objective(&mut self, costs: &[f64]) {
        let obj = self.m * self.width;
        for j in 0..self.width {
            let mut z = 0.0;
            for i in 0..self.m {
                z += costs[self.basis[i]] * self.at(i, j);
            }
            let cj = if j < self.width - 1 { costs[j] } else { 0.0 };
            self.cells[obj + j] = z - cj;
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.at(row, col);
        for j in 0..w {
            self.cells[row * w + j] /= p;
        }
        for i in 0..=self.m {
            if i == row {
                continue;
            }
            let f = self.at(i, col);
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                let delta = f * self.cells[row * w + j];
                self.cells[i * w + j] -= delta;
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations on the loaded objective. Returns `None` when
    /// unbounded, `Some(false)` when the iteration cap is hit.
    fn optimize(&mut self, allow_artificial: bool) -> Option<bool> {
        let obj = self.m * self.width;
        let max_iters = 200 * (self.m + self.width) + 1000;
        let mut degenerate_run = 0usize;
        let bland_after = 10 * (self.m + 1);
        for _ in 0..max_iters {
            let bland = degenerate_run > bland_after;
            let mut enter = None;
            let mut best = -FEAS_TOL;
            for j in 0..self.width - 1 {
                if !allow_artificial && self.is_artificial(j) {
                    continue;
                }
                let rc = self.cells[obj + j];
                if rc < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(col) = enter else {
                return Some(true);
            };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.at(i, col);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    let better = ratio < best_ratio - 1e-12
                        || (ratio <= best_ratio + 1e-12
                            && leave.is_some_and(|l| self.basis[i] < self.basis[l]));
                    if better {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let row = leave?;
            if best_ratio.abs() <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, col);
        }
        Some(false)
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        let total = self.width - 1;
        // phase 1: maximize −Σ artificials
        let mut phase1 = vec![0.0; total];
        for j in self.first_artificial()..total {
            phase1[j] = -1.0;
        }
        self.set_objective(&phase1);
        match self.optimize(true) {
            None => return LpOutcome::Stalled,
            Some(false) => {
                warn!("simplex phase 1 hit its iteration cap");
                return LpOutcome::Stalled;
            }
            Some(true) => {}
        }
        let infeasibility: f64 = (0..self.m)
            .filter(|&i| self.is_artificial(self.basis[i]))
            .map(|i| self.rhs(i))
            .sum();
        let scale = 1.0
            + lp.constraints
                .iter()
                .map(|c| c.rhs.abs())
                .fold(0.0, f64::max);
        if infeasibility > FEAS_TOL * scale {
            return LpOutcome::Infeasible;
        }
        // drive zero-level artificials out of the basis where possible
        for i in 0..self.m {
            if !self.is_artificial(self.basis[i]) {
                continue;
            }
            if let Some(j) = (0..self.first_artificial()).find(|&j| self.at(i, j).abs() > 1e-9) {
                self.pivot(i, j);
            }
        }

        let mut phase2 = vec![0.0; total];
        phase2[..self.n].copy_from_slice(&lp.objective);
        self.set_objective(&phase2);
        match self.optimize(false) {
            None => return LpOutcome::Unbounded,
            Some(false) => {
                warn!("simplex phase 2 hit its iteration cap");
                return LpOutcome::Stalled;
            }
            Some(true) => {}
        }

        let mut x = vec![0.0; self.n];
        for i in 0..self.m {
            if self.basis[i] < self.n {
                x[self.basis[i]] = self.rhs(i).max(0.0);
            }
        }
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let first_art = self.first_artificial();
        let duals = (0..self.m)
            .map(|k| {
                let y: f64 = (0..self.m)
                    .map(|i| phase2[self.basis[i]] * self.at(i, first_art + k))
                    .sum();
                if self.flipped[k] {
                    -y
                } else {
                    y
                }
            })
            .collect();
        LpOutcome::Optimal(LpSolution {
            x,
            objective,
            duals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::maximize(vec![3.0, 5.0]);
        lp.add(vec![1.0, 0.0], Relation::Le, 4.0).unwrap();
        lp.add(vec![0.0, 2.0], Relation::Le, 12.0).unwrap();
        lp.add(vec![3.0, 2.0], Relation::Le, 18.0).unwrap();
        let sol = lp.solve().optimal().unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9 && (sol.x[1] - 6.0).abs() < 1e-9);
        // shadow prices (0, 3/2, 1)
        assert!(sol.duals[0].abs() < 1e-9);
        assert!((sol.duals[1] - 1.5).abs() < 1e-9);
        assert!((sol.duals[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + y, x + y = 1, x ≥ 0.3, y ≤ 0.5
        let mut lp = LinearProgram::maximize(vec![1.0, 2.0]);
        lp.add(vec![1.0, 1.0], Relation::Eq, 1.0).unwrap();
        lp.add(vec![1.0, 0.0], Relation::Ge, 0.3).unwrap();
        lp.add(vec![0.0, 1.0], Relation::Le, 0.5).unwrap();
        let sol = lp.solve().optimal().unwrap();
        assert!((sol.objective - 1.5).abs() < 1e-9);
        assert!(lp.max_violation(&sol.x) < 1e-9);
    }

    #[test]
    fn negative_rhs_and_infeasible() {
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.add(vec![1.0], Relation::Le, -1.0).unwrap();
        assert!(matches!(lp.solve(), LpOutcome::Infeasible));

        let mut ok = LinearProgram::maximize(vec![-1.0]);
        ok.add(vec![-1.0], Relation::Le, -2.0).unwrap();
        let sol = ok.solve().optimal().unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        assert!((sol.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded() {
        let mut lp = LinearProgram::maximize(vec![1.0, 0.0]);
        lp.add(vec![0.0, 1.0], Relation::Le, 1.0).unwrap();
        assert!(matches!(lp.solve(), LpOutcome::Unbounded));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example for textbook Dantzig pricing.
        let mut lp = LinearProgram::maximize(vec![0.75, -150.0, 0.02, -6.0]);
        lp.add(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0).unwrap();
        lp.add(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0).unwrap();
        lp.add(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0).unwrap();
        let sol = lp.solve().optimal().unwrap();
        assert!((sol.objective - 0.05).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut lp = LinearProgram::maximize(vec![1.0, 1.0]);
        assert!(lp.add(vec![1.0], Relation::Le, 1.0).is_err());
    }
}
