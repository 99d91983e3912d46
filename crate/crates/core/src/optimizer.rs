//! Deterministic constrained minimization shared by all three planners.
//!
//! Inequality-constrained problems (feasible iff g_j(z) >= 0) are solved
//! with an augmented Lagrangian outer loop,
//!
//!   L(z; lambda, rho) = f(z) + sum_j (rho/2) max(0, lambda_j/rho - g_j(z))^2,
//!
//! multiplier update lambda_j <- max(0, lambda_j - rho g_j(z)), and a
//! gradient-descent inner loop with Barzilai-Borwein step seeding and
//! monotone Armijo backtracking. Gradients default to central finite
//! differences; callers may supply analytic gradients (checked in the
//! test suite via [`check_gradient`]).

use crate::error::{Error, Result};

/// Solver parameters; part of the config file schema (`[solver]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Inner convergence threshold on the max-abs gradient component.
    pub tol_grad: f64,
    /// Outer convergence threshold on the max constraint violation.
    pub tol_constraint: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    /// Central difference step for fallback gradients.
    pub fd_step: f64,
    /// Seed forwarded to Monte Carlo oracles; the solver itself is
    /// deterministic and never draws randomness.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 30,
            max_inner_iters: 2000,
            tol_grad: 1e-4,
            tol_constraint: 1e-6,
            penalty_init: 500.0,
            penalty_growth: 5.0,
            fd_step: 1e-5,
            seed: 42,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol_grad <= 0.0 || self.tol_constraint <= 0.0 || self.fd_step <= 0.0 {
            return Err(Error::Validation("solver tolerances must be positive".into()));
        }
        if self.penalty_growth <= 1.0 {
            return Err(Error::Validation("penalty_growth must exceed 1".into()));
        }
        if self.penalty_init <= 0.0 {
            return Err(Error::Validation("penalty_init must be positive".into()));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::Validation("iteration budgets must be positive".into()));
        }
        Ok(())
    }
}

/// One inequality constraint g(z) >= 0 with an optional sparse analytic
/// gradient (written as (index, partial) pairs into the provided buffer).
pub struct Constraint<'a> {
    pub eval: Box<dyn Fn(&[f64]) -> f64 + 'a>,
    pub grad: Option<Box<dyn Fn(&[f64], &mut Vec<(usize, f64)>) + 'a>>,
}

impl<'a> Constraint<'a> {
    pub fn new(eval: impl Fn(&[f64]) -> f64 + 'a) -> Self {
        Self {
            eval: Box::new(eval),
            grad: None,
        }
    }

    pub fn with_grad(
        eval: impl Fn(&[f64]) -> f64 + 'a,
        grad: impl Fn(&[f64], &mut Vec<(usize, f64)>) + 'a,
    ) -> Self {
        Self {
            eval: Box::new(eval),
            grad: Some(Box::new(grad)),
        }
    }
}

/// A smooth inequality-constrained minimization problem.
pub struct NlpProblem<'a> {
    pub dim: usize,
    pub objective: Box<dyn Fn(&[f64]) -> f64 + 'a>,
    /// Dense analytic objective gradient (optional).
    pub objective_grad: Option<Box<dyn Fn(&[f64], &mut [f64]) + 'a>>,
    pub constraints: Vec<Constraint<'a>>,
    pub initial_point: Vec<f64>,
}

/// Outcome of a solve; bitwise identical across repeated runs with the
/// same inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub objective_value: f64,
    /// max_j max(0, -g_j(solution)), re-evaluated at the returned point.
    pub max_violation: f64,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub converged: bool,
    /// Max violation after each outer iteration, for diagnostics.
    pub violation_history: Vec<f64>,
}

struct AugmentedLagrangian<'p, 'a> {
    problem: &'p NlpProblem<'a>,
    lambda: Vec<f64>,
    rho: f64,
    fd_step: f64,
}

impl AugmentedLagrangian<'_, '_> {
    fn value(&self, z: &[f64]) -> f64 {
        let mut v = (self.problem.objective)(z);
        for (j, c) in self.problem.constraints.iter().enumerate() {
            let g = (c.eval)(z);
            let slack = (self.lambda[j] / self.rho - g).max(0.0);
            v += 0.5 * self.rho * slack * slack;
        }
        v
    }

    /// Gradient of the AL; falls back to central differences of the whole
    /// AL when any piece lacks an analytic gradient.
    fn gradient(&self, z: &[f64], out: &mut [f64], buf: &mut Vec<(usize, f64)>) -> Result<()> {
        let analytic = self.problem.objective_grad.is_some()
            && self.problem.constraints.iter().all(|c| c.grad.is_some());
        if !analytic {
            let fd = gradient_fd(|x| self.value(x), z, self.fd_step)?;
            out.copy_from_slice(&fd);
            return Ok(());
        }
        (self.problem.objective_grad.as_ref().unwrap())(z, out);
        for (j, c) in self.problem.constraints.iter().enumerate() {
            let g = (c.eval)(z);
            let mult = (self.lambda[j] - self.rho * g).max(0.0);
            if mult > 0.0 {
                buf.clear();
                (c.grad.as_ref().unwrap())(z, buf);
                for &(idx, partial) in buf.iter() {
                    out[idx] -= mult * partial;
                }
            }
        }
        Ok(())
    }
}

/// Minimizes the problem's objective subject to g_j(z) >= 0.
///
/// Deterministic for fixed inputs; exhausting the iteration budget is not
/// an error (the best iterate is returned with `converged = false`), but a
/// non-finite objective, constraint, or gradient at an accepted iterate is.
pub fn solve(problem: &NlpProblem, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    if problem.dim == 0 || problem.initial_point.len() != problem.dim {
        return Err(Error::Contract(format!(
            "initial point length {} does not match problem dimension {}",
            problem.initial_point.len(),
            problem.dim
        )));
    }

    let mut z = problem.initial_point.clone();
    check_finite((problem.objective)(&z), &z, "objective at initial point")?;
    for c in &problem.constraints {
        check_finite((c.eval)(&z), &z, "constraint at initial point")?;
    }

    let mut al = AugmentedLagrangian {
        problem,
        lambda: vec![0.0; problem.constraints.len()],
        rho: cfg.penalty_init,
        fd_step: cfg.fd_step,
    };

    let trace = std::env::var_os("PACENAV_SOLVER_TRACE").is_some();
    let mut inner_total = 0usize;
    let mut outer_done = 0usize;
    let mut converged = false;
    let mut prev_violation = f64::INFINITY;
    let mut violation_history = Vec::with_capacity(cfg.max_outer_iters);

    for outer in 0..cfg.max_outer_iters {
        // forcing sequence: solve early subproblems loosely
        let inner_tol = (1e-2 * 0.1f64.powi(outer as i32)).max(cfg.tol_grad);
        let (iters, grad_norm) = inner_descent(&al, &mut z, inner_tol, cfg.max_inner_iters)?;
        inner_total += iters;
        outer_done = outer + 1;

        let mut violation = 0.0f64;
        let mut worst = usize::MAX;
        for (j, c) in problem.constraints.iter().enumerate() {
            let g = (c.eval)(&z);
            check_finite(g, &z, "constraint during multiplier update")?;
            if -g > violation {
                violation = -g;
                worst = j;
            }
            al.lambda[j] = (al.lambda[j] - al.rho * g).max(0.0);
        }
        violation_history.push(violation);
        if trace {
            eprintln!(
                "solver: outer {outer:2} rho {:9.2e} viol {violation:9.2e} (worst {worst}) \
                 gnorm {grad_norm:9.2e} inner {iters}",
                al.rho
            );
        }

        if violation <= cfg.tol_constraint && grad_norm <= cfg.tol_grad {
            converged = true;
            break;
        }
        // grow the penalty only while genuinely infeasible and stalled
        if violation > cfg.tol_constraint && violation > 0.25 * prev_violation {
            al.rho = (al.rho * cfg.penalty_growth).min(1e8);
        }
        prev_violation = violation;
    }

    let mut max_violation = 0.0f64;
    for c in &problem.constraints {
        max_violation = max_violation.max(-(c.eval)(&z).min(0.0));
    }
    Ok(SolveReport {
        objective_value: (problem.objective)(&z),
        solution: z,
        max_violation,
        outer_iters: outer_done,
        inner_iters_total: inner_total,
        converged,
        violation_history,
    })
}

/// Monotone gradient descent with BB1 step seeding and Armijo backtracking.
/// Returns (iterations, final max-abs gradient component).
fn inner_descent(
    al: &AugmentedLagrangian,
    z: &mut Vec<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<(usize, f64)> {
    const ARMIJO_C: f64 = 1e-4;
    let dim = z.len();
    let mut grad = vec![0.0; dim];
    let mut buf: Vec<(usize, f64)> = Vec::new();
    let mut value = al.value(z);
    check_finite(value, z, "augmented Lagrangian at inner start")?;
    al.gradient(z, &mut grad, &mut buf)?;
    check_grad_finite(&grad, z)?;

    let mut step = 1.0 / grad.iter().map(|g| g.abs()).fold(1.0, f64::max);
    let mut iters = 0usize;
    while iters < max_iters {
        let gnorm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if gnorm <= tol {
            return Ok((iters, gnorm));
        }
        let gsq: f64 = grad.iter().map(|g| g * g).sum();

        let mut t = step.clamp(1e-12, 1e4);
        let mut trial = vec![0.0; dim];
        let mut trial_value = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..dim {
                trial[i] = z[i] - t * grad[i];
            }
            let v = al.value(&trial);
            // strict decrease required: the Armijo margin can round to
            // zero at tiny steps, which must not count as progress
            if v.is_finite() && v < value && v <= value - ARMIJO_C * t * gsq {
                trial_value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no productive step exists at this scale; treat as converged
            // to the achievable precision
            return Ok((iters, gnorm));
        }

        let mut new_grad = vec![0.0; dim];
        al.gradient(&trial, &mut new_grad, &mut buf)?;
        check_grad_finite(&new_grad, &trial)?;

        // BB1 step from the accepted displacement
        let mut sty = 0.0;
        let mut sts = 0.0;
        for i in 0..dim {
            let s = trial[i] - z[i];
            let y = new_grad[i] - grad[i];
            sty += s * y;
            sts += s * s;
        }
        step = if sty > 1e-300 { sts / sty } else { 2.0 * t };

        *z = trial;
        value = trial_value;
        grad = new_grad;
        iters += 1;
    }
    let gnorm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
    Ok((iters, gnorm))
}

fn check_finite(v: f64, z: &[f64], what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericalFailure {
            reason: format!("non-finite {what}"),
            iterate: z.to_vec(),
        })
    }
}

fn check_grad_finite(g: &[f64], z: &[f64]) -> Result<()> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure {
            reason: "non-finite gradient".into(),
            iterate: z.to_vec(),
        })
    }
}

/// Central-difference gradient: component i is
/// (f(z + h e_i) - f(z - h e_i)) / (2 h).
pub fn gradient_fd(f: impl Fn(&[f64]) -> f64, z: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; z.len()];
    let mut probe = z.to_vec();
    for i in 0..z.len() {
        probe[i] = z[i] + h;
        let hi = f(&probe);
        probe[i] = z[i] - h;
        let lo = f(&probe);
        probe[i] = z[i];
        if !(hi.is_finite() && lo.is_finite()) {
            return Err(Error::NumericalFailure {
                reason: format!("non-finite finite-difference probe in component {i}"),
                iterate: z.to_vec(),
            });
        }
        out[i] = (hi - lo) / (2.0 * h);
    }
    Ok(out)
}

/// Compares an analytic gradient against central differences; returns the
/// max per-component relative error with denominator max(1, |fd_i|).
pub fn check_gradient(
    f: impl Fn(&[f64]) -> f64,
    grad_f: impl Fn(&[f64]) -> Vec<f64>,
    z: &[f64],
    h: f64,
) -> Result<f64> {
    let fd = gradient_fd(f, z, h)?;
    let analytic = grad_f(z);
    if analytic.len() != fd.len() {
        return Err(Error::Contract(format!(
            "gradient length {} does not match dimension {}",
            analytic.len(),
            fd.len()
        )));
    }
    Ok(analytic
        .iter()
        .zip(&fd)
        .map(|(a, d)| (a - d).abs() / d.abs().max(1.0))
        .fold(0.0, f64::max))
}
