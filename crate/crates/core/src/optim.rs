//! Dense Levenberg–Marquardt for small and medium least-squares problems.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Damping beyond which an unsolvable system is reported as singular.
const MAX_DAMPING: f64 = 1e10;
const STALL_DAMPING: f64 = 1e32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("residuals are not finite at the starting point")]
    NonFiniteResidual,
    #[error("damped normal equations stay singular up to λ = {lambda:e}")]
    SingularNormalEquations { lambda: f64 },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A least-squares problem `min ½‖r(x)‖²`.
pub trait NlsProblem {
    fn num_params(&self) -> usize;
    fn num_residuals(&self) -> usize;
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian `∂r/∂x` (m × n). The default falls back to central differences.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// `(JᵀJ, Jᵀr)` assembled directly, for problems whose Jacobian is
    /// mostly zeros. Takes precedence over [`NlsProblem::jacobian`].
    fn normal_equations(&self, _x: &DVector<f64>, _r: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step ends the solve.
    pub cost_tolerance: f64,
    /// Step norm, relative to the parameter norm, below which the solve ends.
    pub step_tolerance: f64,
    /// Gradient norm `‖Jᵀr‖` below which the solve ends.
    pub gradient_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            max_iterations: 100,
            cost_tolerance: 1e-10,
            step_tolerance: 1e-12,
            gradient_tolerance: 1e-12,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let positive = [self.initial_damping, self.damping_up, self.damping_down, self.cost_tolerance, self.step_tolerance];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(OptimError::InvalidConfig("damping and tolerances must be positive"));
        }
        if !(self.gradient_tolerance >= 0.0 && self.gradient_tolerance.is_finite()) {
            return Err(OptimError::InvalidConfig("gradient_tolerance must be non-negative"));
        }
        if !(self.damping_up > 1.0 && self.damping_down < 1.0) {
            return Err(OptimError::InvalidConfig("need damping_up > 1 > damping_down"));
        }
        if self.max_iterations == 0 {
            return Err(OptimError::InvalidConfig("max_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CostTolerance,
    StepTolerance,
    GradientTolerance,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: DVector<f64>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

pub fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Central-difference Jacobian with steps `eps·max(1, |x_j|)`.
pub fn numeric_jacobian<P: NlsProblem + ?Sized>(problem: &P, x: &DVector<f64>, eps: f64) -> Result<DMatrix<f64>, OptimError> {
    let (m, n) = (problem.num_residuals(), problem.num_params());
    check_len(x.len(), n)?;
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let h = eps * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fwd = problem.residuals(&xp);
        xp[j] = x[j] - h;
        let bwd = problem.residuals(&xp);
        xp[j] = x[j];
        check_len(fwd.len(), m)?;
        check_len(bwd.len(), m)?;
        if !all_finite(&fwd) || !all_finite(&bwd) {
            return Err(OptimError::NonFiniteResidual);
        }
        jac.set_column(j, &((fwd - bwd) / (2.0 * h)));
    }
    Ok(jac)
}

pub fn levenberg_marquardt<P: NlsProblem + ?Sized>(problem: &P, x0: &DVector<f64>, cfg: &LmConfig) -> Result<LmReport, OptimError> {
    cfg.validate()?;
    let n = problem.num_params();
    check_len(x0.len(), n)?;
    let mut x = x0.clone();
    let mut r = problem.residuals(&x);
    check_len(r.len(), problem.num_residuals())?;
    if !all_finite(&r) {
        return Err(OptimError::NonFiniteResidual);
    }
    let initial_cost = cost(&r);
    let mut current = initial_cost;
    let mut history = vec![current];
    let mut lambda = cfg.initial_damping;

    for iter in 1..=cfg.max_iterations {
        if current == 0.0 {
            return Ok(report(x, initial_cost, current, iter - 1, Termination::CostTolerance, history));
        }
        let (jtj, jtr) = normal_equations(problem, &x, &r)?;
        if jtr.norm() <= cfg.gradient_tolerance {
            return Ok(report(x, initial_cost, current, iter - 1, Termination::GradientTolerance, history));
        }
        let diag = damping_diagonal(&jtj);
        loop {
            let mut damped = jtj.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * diag[i];
            }
            let Some(chol) = damped.cholesky() else {
                if lambda >= MAX_DAMPING {
                    return Err(OptimError::SingularNormalEquations { lambda });
                }
                lambda *= cfg.damping_up;
                continue;
            };
            let step = -chol.solve(&jtr);
            if step.norm() <= cfg.step_tolerance * (x.norm() + cfg.step_tolerance) {
                return Ok(report(x, initial_cost, current, iter, Termination::StepTolerance, history));
            }
            let trial = &x + &step;
            let r_trial = problem.residuals(&trial);
            let c_trial = cost(&r_trial);
            if c_trial.is_finite() && c_trial < current {
                let decrease = (current - c_trial) / current;
                x = trial;
                r = r_trial;
                current = c_trial;
                history.push(current);
                lambda = (lambda * cfg.damping_down).max(f64::MIN_POSITIVE);
                if decrease < cfg.cost_tolerance {
                    return Ok(report(x, initial_cost, current, iter, Termination::CostTolerance, history));
                }
                break;
            }
            lambda *= cfg.damping_up;
            if lambda > STALL_DAMPING {
                // no descent left at any step length we can represent
                return Ok(report(x, initial_cost, current, iter, Termination::StepTolerance, history));
            }
        }
    }
    Ok(report(x, initial_cost, current, cfg.max_iterations, Termination::MaxIterations, history))
}

fn report(params: DVector<f64>, initial_cost: f64, final_cost: f64, iterations: usize, termination: Termination, cost_history: Vec<f64>) -> LmReport {
    LmReport { params, initial_cost, final_cost, iterations, termination, cost_history }
}

fn normal_equations<P: NlsProblem + ?Sized>(problem: &P, x: &DVector<f64>, r: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>), OptimError> {
    if let Some((jtj, jtr)) = problem.normal_equations(x, r) {
        return Ok((jtj, jtr));
    }
    let jac = match problem.jacobian(x) {
        Some(j) => j,
        None => numeric_jacobian(problem, x, 1e-6)?,
    };
    if !jac.iter().all(|v| v.is_finite()) {
        return Err(OptimError::NonFiniteResidual);
    }
    Ok((jac.tr_mul(&jac), jac.tr_mul(r)))
}

/// Marquardt scaling `diag(JᵀJ)`, floored so untouched parameters still get damped.
fn damping_diagonal(jtj: &DMatrix<f64>) -> DVector<f64> {
    let n = jtj.nrows();
    let mean = (0..n).map(|i| jtj[(i, i)]).sum::<f64>() / n.max(1) as f64;
    let floor = if mean > 0.0 { 1e-9 * mean } else { 1.0 };
    DVector::from_iterator(n, (0..n).map(|i| jtj[(i, i)].max(floor)))
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn check_len(got: usize, expected: usize) -> Result<(), OptimError> {
    if got == expected {
        Ok(())
    } else {
        Err(OptimError::DimensionMismatch { expected, got })
    }
}

/// Adapts a closure into an [`NlsProblem`].
pub struct FnProblem<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F: Fn(&DVector<f64>) -> DVector<f64>> FnProblem<F> {
    pub fn new(n: usize, m: usize, f: F) -> Self {
        Self { n, m, f }
    }
}

impl<F: Fn(&DVector<f64>) -> DVector<f64>> NlsProblem for FnProblem<F> {
    fn num_params(&self) -> usize {
        self.n
    }

    fn num_residuals(&self) -> usize {
        self.m
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
}
