//! Dense two-phase simplex for small linear programs.
//!
//! Problems are stated as `A x (<=|=|>=) b` with `x >= 0`. Pivoting follows
//! Bland's rule, so the method terminates on degenerate problems; at the sizes
//! used here (tens of rows and columns) a dense tableau is both simple and
//! accurate to roughly machine precision.

const PIVOT_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug)]
struct Row {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    num_vars: usize,
    rows: Vec<Row>,
    /// Phase-one objective above this value means infeasible.
    feasibility_tol: f64,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            rows: Vec::new(),
            feasibility_tol: 1e-10,
        }
    }

    pub fn with_feasibility_tol(mut self, tol: f64) -> Self {
        self.feasibility_tol = tol;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars, "constraint width mismatch");
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn minimize(&self, objective: &[f64]) -> LpOutcome {
        Tableau::solve(self, objective)
    }

    pub fn maximize(&self, objective: &[f64]) -> LpOutcome {
        let neg: Vec<f64> = objective.iter().map(|v| -v).collect();
        match Tableau::solve(self, &neg) {
            LpOutcome::Optimal { value, x } => LpOutcome::Optimal { value: -value, x },
            other => other,
        }
    }

    /// Any point of the feasible polytope.
    pub fn feasible_point(&self) -> Option<Vec<f64>> {
        match Tableau::solve(self, &vec![0.0; self.num_vars]) {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }

    /// Largest violation of any constraint at `x` (negative entries count too).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |w, &v| w.max(-v));
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is the rhs.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Columns that may enter the basis.
    allowed: Vec<bool>,
    cols: usize,
}

impl Tableau {
    fn solve(lp: &LinearProgram, objective: &[f64]) -> LpOutcome {
        let n = lp.num_vars;
        let m = lp.rows.len();
        let mut slack_count = 0;
        let mut art_count = 0;
        for row in &lp.rows {
            let rel = normalized_relation(row);
            match rel {
                Relation::Le => slack_count += 1,
                Relation::Ge => {
                    slack_count += 1;
                    art_count += 1;
                }
                Relation::Eq => art_count += 1,
            }
        }
        let cols = n + slack_count + art_count;
        let art_start = n + slack_count;
        let mut a = vec![vec![0.0; cols + 1]; m + 1];
        let mut basis = vec![0usize; m];
        let (mut next_slack, mut next_art) = (n, art_start);
        for (i, row) in lp.rows.iter().enumerate() {
            let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                a[i][j] = sign * row.coeffs[j];
            }
            a[i][cols] = sign * row.rhs;
            match normalized_relation(row) {
                Relation::Le => {
                    a[i][next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    a[i][next_slack] = -1.0;
                    next_slack += 1;
                    a[i][next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    a[i][next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }

        let mut t = Tableau {
            a,
            basis,
            allowed: vec![true; cols],
            cols,
        };

        // Phase one: minimise the sum of artificials.
        if art_count > 0 {
            let obj: Vec<f64> = (0..cols)
                .map(|j| if j >= art_start { 1.0 } else { 0.0 })
                .collect();
            t.set_objective(&obj);
            if !t.run() {
                // phase one is bounded below by zero
                unreachable!("phase one cannot be unbounded");
            }
            let infeasibility = -t.a[m][cols];
            if infeasibility > lp.feasibility_tol {
                return LpOutcome::Infeasible;
            }
            for j in art_start..cols {
                t.allowed[j] = false;
            }
            t.drive_out_artificials(art_start);
        }

        // Phase two.
        let mut obj = vec![0.0; cols];
        obj[..n].copy_from_slice(objective);
        t.set_objective(&obj);
        if !t.run() {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![0.0; n];
        for (i, &b) in t.basis.iter().enumerate() {
            if b < n {
                x[b] = t.a[i][cols].max(0.0);
            }
        }
        let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpOutcome::Optimal { value, x }
    }

    fn set_objective(&mut self, obj: &[f64]) {
        let m = self.basis.len();
        let cols = self.cols;
        let mut row = vec![0.0; cols + 1];
        row[..cols].copy_from_slice(obj);
        for i in 0..m {
            let cb = obj[self.basis[i]];
            if cb != 0.0 {
                for j in 0..=cols {
                    row[j] -= cb * self.a[i][j];
                }
            }
        }
        self.a[m] = row;
    }

    /// Runs simplex iterations; returns `false` when unbounded.
    fn run(&mut self) -> bool {
        let m = self.basis.len();
        let cols = self.cols;
        for _ in 0..MAX_PIVOTS {
            // Bland: lowest-index column with negative reduced cost.
            let entering = (0..cols).find(|&j| self.allowed[j] && self.a[m][j] < -PIVOT_TOL);
            let Some(e) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let coef = self.a[i][e];
                if coef > PIVOT_TOL {
                    let ratio = self.a[i][cols] / coef;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14
                                || ((ratio - lr).abs() <= 1e-14 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((l, _)) = leave else { return false };
            self.pivot(l, e);
        }
        panic!("simplex exceeded {MAX_PIVOTS} pivots");
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let cols = self.cols;
        let p = self.a[row][col];
        for j in 0..=cols {
            self.a[row][j] /= p;
        }
        self.a[row][col] = 1.0;
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for j in 0..=cols {
                    r[j] -= f * pivot_row[j];
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    fn drive_out_artificials(&mut self, art_start: usize) {
        let mut i = 0;
        while i < self.basis.len() {
            if self.basis[i] >= art_start {
                let candidate = (0..art_start).find(|&j| self.a[i][j].abs() > 1e-9);
                match candidate {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        // redundant row
                        self.a.remove(i);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }
}

fn normalized_relation(row: &Row) -> Relation {
    if row.rhs < 0.0 {
        match row.relation {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        }
    } else {
        row.relation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimum(out: LpOutcome) -> (f64, Vec<f64>) {
        match out {
            LpOutcome::Optimal { value, x } => (value, x),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let mut lp = LinearProgram::new(2);
        lp.add(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add(vec![3.0, 2.0], Relation::Le, 18.0);
        let (v, x) = optimum(lp.maximize(&[3.0, 5.0]));
        assert!((v - 36.0).abs() < 1e-12);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y, x + y = 1, x >= 0.3, y >= 0.2 -> 1
        let mut lp = LinearProgram::new(2);
        lp.add(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add(vec![1.0, 0.0], Relation::Ge, 0.3);
        lp.add(vec![0.0, 1.0], Relation::Ge, 0.2);
        let (v, _) = optimum(lp.minimize(&[1.0, 1.0]));
        assert!((v - 1.0).abs() < 1e-12);
        let (v, x) = optimum(lp.maximize(&[1.0, 0.0]));
        assert!((v - 0.8).abs() < 1e-12);
        assert!(lp.max_violation(&x) < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(3);
        lp.add(vec![1.0, 1.0, 1.0], Relation::Eq, 1.0);
        lp.add(vec![2.0, 2.0, 2.0], Relation::Eq, 2.0);
        lp.add(vec![1.0, 0.0, 0.0], Relation::Eq, 0.25);
        let (v, _) = optimum(lp.maximize(&[0.0, 1.0, 0.0]));
        assert!((v - 0.75).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add(vec![1.0], Relation::Ge, 2.0);
        lp.add(vec![1.0], Relation::Le, 1.0);
        assert_eq!(lp.minimize(&[1.0]), LpOutcome::Infeasible);
        assert!(lp.feasible_point().is_none());

        let mut lp = LinearProgram::new(2);
        lp.add(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(lp.maximize(&[1.0, 0.0]), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_rhs_is_flipped() {
        // -x <= -0.5  <=>  x >= 0.5
        let mut lp = LinearProgram::new(1);
        lp.add(vec![-1.0], Relation::Le, -0.5);
        lp.add(vec![1.0], Relation::Le, 2.0);
        let (v, _) = optimum(lp.minimize(&[1.0]));
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example (Beale); Bland's rule must terminate.
        let mut lp = LinearProgram::new(4);
        lp.add(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        lp.add(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        lp.add(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let (v, _) = optimum(lp.minimize(&[-0.75, 150.0, -0.02, 6.0]));
        assert!((v + 0.05).abs() < 1e-12);
    }
}
