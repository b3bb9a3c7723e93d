//! Bounded Levenberg-Marquardt with Marquardt diagonal scaling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A least-squares problem `min ½‖r(x)‖²` over a box.
pub trait LeastSquares {
    /// Residual vector, or `None` where the model cannot be evaluated.
    fn residuals(&self, x: &DVector<f64>) -> Option<DVector<f64>>;
    /// Jacobian at `x` given the residuals there.
    fn jacobian(&self, x: &DVector<f64>, r: &DVector<f64>) -> Option<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSettings {
    /// Stop when `‖Jᵀr‖∞ ≤ gradient_tol · max(1, cost)`.
    pub gradient_tol: f64,
    /// Stop when `‖δ‖ ≤ step_tol · (‖x‖ + step_tol)`.
    pub step_tol: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tol: f64,
    pub max_iterations: usize,
    pub initial_damping: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings { gradient_tol: 1e-10, step_tol: 1e-10, cost_tol: 1e-12, max_iterations: 200, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    GradientTolerance,
    StepTolerance,
    CostTolerance,
    /// Damping saturated without finding a lower cost.
    NoFurtherImprovement,
    MaxIterations,
    /// The model could not be evaluated at the starting point.
    InvalidStart,
}

impl FitStatus {
    pub fn converged(self) -> bool {
        !matches!(self, FitStatus::MaxIterations | FitStatus::InvalidStart)
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: DVector<f64>,
    pub residuals: DVector<f64>,
    pub cost: f64,
    pub status: FitStatus,
    pub iterations: usize,
    pub evaluations: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

fn cost_of(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

fn clamp(x: &mut DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

pub fn minimize(
    problem: &impl LeastSquares,
    x0: DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    settings: &LmSettings,
) -> LmOutcome {
    let mut x = x0;
    clamp(&mut x, lower, upper);
    let mut evaluations = 1;
    let Some(mut r) = problem.residuals(&x) else {
        return LmOutcome {
            residuals: DVector::zeros(0),
            x,
            cost: f64::INFINITY,
            status: FitStatus::InvalidStart,
            iterations: 0,
            evaluations,
            cost_history: Vec::new(),
        };
    };
    let mut cost = cost_of(&r);
    let mut history = vec![cost];
    let mut lambda = settings.initial_damping;
    let n = x.len();

    for iter in 0..settings.max_iterations {
        let Some(j) = problem.jacobian(&x, &r) else {
            return LmOutcome { x, residuals: r, cost, status: FitStatus::NoFurtherImprovement, iterations: iter, evaluations, cost_history: history };
        };
        evaluations += 2 * n;
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * &r;

        // Projected gradient: components pushing against an active bound vanish.
        let pg = (0..n)
            .map(|i| {
                let outward = (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0);
                if outward {
                    0.0
                } else {
                    g[i].abs()
                }
            })
            .fold(0.0, f64::max);
        if pg <= settings.gradient_tol * cost.max(1.0) {
            return LmOutcome { x, residuals: r, cost, status: FitStatus::GradientTolerance, iterations: iter, evaluations, cost_history: history };
        }

        // Bound-active coordinates are held fixed for this step.
        let active: Vec<bool> =
            (0..n).map(|i| (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)).collect();
        let diag_floor = a.diagonal().max() * 1e-12 + f64::MIN_POSITIVE;
        loop {
            let mut damped = a.clone();
            let mut rhs = -&g;
            for i in 0..n {
                damped[(i, i)] += lambda * a[(i, i)].max(diag_floor);
                if active[i] {
                    damped.row_mut(i).fill(0.0);
                    damped.column_mut(i).fill(0.0);
                    damped[(i, i)] = 1.0;
                    rhs[i] = 0.0;
                }
            }
            let step = damped.cholesky().map(|c| c.solve(&rhs));
            let Some(step) = step else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    return LmOutcome { x, residuals: r, cost, status: FitStatus::NoFurtherImprovement, iterations: iter, evaluations, cost_history: history };
                }
                continue;
            };
            let mut trial = &x + &step;
            clamp(&mut trial, lower, upper);
            let actual = &trial - &x;
            evaluations += 1;
            let candidate = problem.residuals(&trial).map(|rt| (cost_of(&rt), rt));
            match candidate {
                Some((c, rt)) if c < cost => {
                    let drop = (cost - c) / cost.max(f64::MIN_POSITIVE);
                    x = trial;
                    r = rt;
                    cost = c;
                    history.push(cost);
                    lambda = (lambda / 3.0).max(1e-12);
                    if actual.norm() <= settings.step_tol * (x.norm() + settings.step_tol) {
                        return LmOutcome { x, residuals: r, cost, status: FitStatus::StepTolerance, iterations: iter + 1, evaluations, cost_history: history };
                    }
                    if drop <= settings.cost_tol {
                        return LmOutcome { x, residuals: r, cost, status: FitStatus::CostTolerance, iterations: iter + 1, evaluations, cost_history: history };
                    }
                    break;
                }
                _ => {
                    lambda *= 4.0;
                    if lambda > 1e16 || actual.norm() <= settings.step_tol * (x.norm() + settings.step_tol) * 1e-3 {
                        return LmOutcome { x, residuals: r, cost, status: FitStatus::NoFurtherImprovement, iterations: iter + 1, evaluations, cost_history: history };
                    }
                }
            }
        }
    }
    LmOutcome {
        x,
        residuals: r,
        cost,
        status: FitStatus::MaxIterations,
        iterations: settings.max_iterations,
        evaluations,
        cost_history: history,
    }
}
