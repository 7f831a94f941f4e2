//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `min c'x  s.t.  A x = b, x >= 0` for the small dense problems
//! that arise from characteristic functions. Pivoting is fully
//! deterministic: the entering column is the lowest index with a negative
//! reduced cost and ratio-test ties go to the lowest basic variable.
//! Artificial columns stay in the tableau so the optimal duals can be read
//! off `c_B' B^{-1}` at the end.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("problem is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("pivot limit {0} exhausted; last basis {1:?}")]
    IterationLimit(usize, Vec<usize>),
    #[error("malformed problem: {0}")]
    Shape(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Optimal multipliers `y` with `A'y <= c` and `b'y = c'x`.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

struct Tableau {
    m: usize,
    vars: usize,
    width: usize,
    /// `(m + 1) x width`, last row the reduced costs, last column the rhs.
    cells: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
    limit: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.width + c]
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.at(row, col);
        for c in 0..w {
            self.cells[row * w + c] /= p;
        }
        let pivot_row: Vec<f64> = self.cells[row * w..(row + 1) * w].to_vec();
        for r in 0..=self.m {
            if r == row {
                continue;
            }
            let f = self.cells[r * w + col];
            if f != 0.0 {
                for c in 0..w {
                    self.cells[r * w + c] -= f * pivot_row[c];
                }
                self.cells[r * w + col] = 0.0;
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Loads the objective row for costs `c` (length `width - 1`).
    fn price(&mut self, c: &[f64]) {
        let w = self.width;
        let m = self.m;
        for j in 0..w {
            let mut d = if j < w - 1 { c[j] } else { 0.0 };
            for r in 0..m {
                d -= c[self.basis[r]] * self.at(r, j);
            }
            self.cells[m * w + j] = d;
        }
    }

    /// Runs Bland pivots over entering columns `< allowed`.
    fn optimize(&mut self, allowed: usize) -> Result<(), LpError> {
        let m = self.m;
        loop {
            let entering = (0..allowed).find(|&j| self.at(m, j) < -COST_TOL);
            let Some(col) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let a = self.at(r, col);
                if a > PIVOT_TOL {
                    let ratio = self.at(r, self.rhs_col()) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - 1e-14 || (ratio <= bv + 1e-14 && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else { return Err(LpError::Unbounded) };
            if self.pivots >= self.limit {
                return Err(LpError::IterationLimit(self.limit, self.basis.clone()));
            }
            self.pivot(row, col);
        }
    }
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let m = self.rows.len();
        let vars = self.objective.len();
        if self.rhs.len() != m || self.rows.iter().any(|r| r.len() != vars) {
            return Err(LpError::Shape(format!("{m} rows, {vars} variables, {} rhs entries", self.rhs.len())));
        }
        let width = vars + m + 1;
        let mut cells = vec![0.0; (m + 1) * width];
        let mut sign = vec![1.0; m];
        for r in 0..m {
            sign[r] = if self.rhs[r] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..vars {
                cells[r * width + j] = sign[r] * self.rows[r][j];
            }
            cells[r * width + vars + r] = 1.0;
            cells[r * width + width - 1] = sign[r] * self.rhs[r];
        }
        let mut t = Tableau {
            m,
            vars,
            width,
            cells,
            basis: (vars..vars + m).collect(),
            pivots: 0,
            limit: 50_000 + 200 * (m + vars),
        };

        // Phase one: minimize the artificial sum.
        let mut phase_one = vec![0.0; vars + m];
        phase_one[vars..].iter_mut().for_each(|c| *c = 1.0);
        t.price(&phase_one);
        t.optimize(vars + m)?;
        let scale = 1.0 + self.rhs.iter().map(|b| b.abs()).fold(0.0, f64::max);
        let residual = -t.at(m, t.rhs_col());
        if residual > 1e-9 * scale {
            return Err(LpError::Infeasible(residual));
        }
        // Pivot remaining artificials out where a structural column allows;
        // rows with none are redundant and keep a zero-level artificial.
        for r in 0..m {
            if t.basis[r] >= vars {
                if let Some(col) = (0..vars).find(|&j| t.at(r, j).abs() > 1e-9) {
                    t.pivot(r, col);
                }
            }
        }

        // Phase two on the structural columns only.
        let mut costs = self.objective.clone();
        costs.extend(std::iter::repeat_n(0.0, m));
        t.price(&costs);
        t.optimize(vars)?;

        let mut x = vec![0.0; vars];
        for r in 0..m {
            if t.basis[r] < vars {
                x[t.basis[r]] = t.at(r, t.rhs_col());
            }
        }
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let duals = (0..m)
            .map(|i| sign[i] * (0..m).map(|r| costs[t.basis[r]] * t.at(r, t.vars + i)).sum::<f64>())
            .collect();
        Ok(LpSolution { x, objective, duals, pivots: t.pivots })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_standard_form() {
        // min -x1 - 2x2 s.t. x1 + x2 + s1 = 4, x1 + 3x2 + s2 = 6.
        let lp = LinearProgram {
            objective: vec![-1.0, -2.0, 0.0, 0.0],
            rows: vec![vec![1.0, 1.0, 1.0, 0.0], vec![1.0, 3.0, 0.0, 1.0]],
            rhs: vec![4.0, 6.0],
        };
        let s = lp.solve().unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.objective + 5.0).abs() < 1e-12);
        let dual_obj: f64 = s.duals.iter().zip(&lp.rhs).map(|(y, b)| y * b).sum();
        assert!((dual_obj - s.objective).abs() < 1e-12);
        for j in 0..4 {
            let aty: f64 = (0..2).map(|i| lp.rows[i][j] * s.duals[i]).sum();
            assert!(aty <= lp.objective[j] + 1e-12);
        }
    }

    #[test]
    fn negative_rhs_and_duals() {
        // min x1 + x2 s.t. -x1 - x2 + s = -2  (i.e. x1 + x2 >= 2).
        let lp = LinearProgram {
            objective: vec![1.0, 1.0, 0.0],
            rows: vec![vec![-1.0, -1.0, 1.0]],
            rhs: vec![-2.0],
        };
        let s = lp.solve().unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
        assert!((s.duals[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let infeasible = LinearProgram { objective: vec![1.0], rows: vec![vec![1.0], vec![1.0]], rhs: vec![1.0, 2.0] };
        assert!(matches!(infeasible.solve(), Err(LpError::Infeasible(_))));
        let unbounded = LinearProgram { objective: vec![-1.0, 0.0], rows: vec![vec![1.0, -1.0]], rhs: vec![0.0] };
        assert_eq!(unbounded.solve(), Err(LpError::Unbounded));
    }

    #[test]
    fn redundant_rows() {
        let lp = LinearProgram {
            objective: vec![1.0, 2.0],
            rows: vec![vec![1.0, 1.0], vec![2.0, 2.0]],
            rhs: vec![1.0, 2.0],
        };
        let s = lp.solve().unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example, which cycles under the textbook largest-coefficient rule.
        let lp = LinearProgram {
            objective: vec![-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0],
            rows: vec![
                vec![0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
                vec![0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            ],
            rhs: vec![0.0, 0.0, 1.0],
        };
        let s = lp.solve().unwrap();
        assert!((s.objective + 0.05).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let lp = LinearProgram { objective: vec![1.0], rows: vec![vec![1.0, 2.0]], rhs: vec![1.0] };
        assert!(matches!(lp.solve(), Err(LpError::Shape(_))));
    }
}
