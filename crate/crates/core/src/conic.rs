//! Small builder over the Clarabel interior-point solver.
//!
//! Constraints are written as `a·x + s = b` with the slack `s` in a cone;
//! rows of one cone are added together. The builder only supports linear
//! objectives, which is all the beamforming and power problems need.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::error::{Error, Result};

/// One constraint row: sparse coefficients `a` and right-hand side `b`.
pub type Row = (Vec<(usize, f64)>, f64);

#[derive(Debug, Clone)]
pub struct ConicProgram {
    columns: usize,
    objective: Vec<f64>,
    rows_i: Vec<usize>,
    rows_j: Vec<usize>,
    values: Vec<f64>,
    rhs: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Optimal,
    Infeasible,
    Failed,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub outcome: Outcome,
    pub status: String,
    pub x: Vec<f64>,
    pub objective: f64,
}

impl ConicProgram {
    pub fn new(columns: usize) -> Self {
        Self {
            columns,
            objective: vec![0.0; columns],
            rows_i: Vec::new(),
            rows_j: Vec::new(),
            values: Vec::new(),
            rhs: Vec::new(),
            cones: Vec::new(),
        }
    }

    /// Minimize `Σ c_j x_j`.
    pub fn minimize(&mut self, column: usize, coefficient: f64) {
        self.objective[column] += coefficient;
    }

    fn push_rows(&mut self, rows: Vec<Row>) -> usize {
        let count = rows.len();
        for (coefficients, b) in rows {
            let i = self.rhs.len();
            for (j, v) in coefficients {
                debug_assert!(j < self.columns);
                if v != 0.0 {
                    self.rows_i.push(i);
                    self.rows_j.push(j);
                    self.values.push(v);
                }
            }
            self.rhs.push(b);
        }
        count
    }

    /// `b - a·x = 0` for every row.
    pub fn equal(&mut self, rows: Vec<Row>) {
        let n = self.push_rows(rows);
        self.cones.push(SupportedConeT::ZeroConeT(n));
    }

    /// `b - a·x >= 0` for every row.
    pub fn nonneg(&mut self, rows: Vec<Row>) {
        let n = self.push_rows(rows);
        if n > 0 {
            self.cones.push(SupportedConeT::NonnegativeConeT(n));
        }
    }

    /// `(b - a·x)` lies in the second-order cone `s₀ >= ‖s₁..‖`.
    pub fn second_order(&mut self, rows: Vec<Row>) {
        let n = self.push_rows(rows);
        self.cones.push(SupportedConeT::SecondOrderConeT(n));
    }

    /// Three rows `(u, v, w)` with `v·exp(u/v) <= w`.
    pub fn exponential(&mut self, rows: [Row; 3]) {
        self.push_rows(rows.into());
        self.cones.push(SupportedConeT::ExponentialConeT());
    }

    pub fn solve(&self, tolerance: f64) -> Result<ConicSolution> {
        let n = self.columns;
        let m = self.rhs.len();
        let p = CscMatrix::zeros((n, n));
        let a = CscMatrix::new_from_triplets(m, n, self.rows_i.clone(), self.rows_j.clone(), self.values.clone());
        let settings = DefaultSettings {
            verbose: false,
            max_iter: 200,
            tol_gap_abs: tolerance,
            tol_gap_rel: tolerance,
            tol_feas: tolerance,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &self.objective, &a, &self.rhs, &self.cones, settings)
            .map_err(|e| Error::Solver(format!("conic setup failed: {e}")))?;
        solver.solve();
        let solution = &solver.solution;
        let outcome = match solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Outcome::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Outcome::Infeasible,
            _ => Outcome::Failed,
        };
        Ok(ConicSolution {
            outcome,
            status: format!("{:?}", solution.status),
            x: solution.x.clone(),
            objective: solution.obj_val,
        })
    }
}
