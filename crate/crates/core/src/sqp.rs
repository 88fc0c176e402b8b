//! Box-constrained SQP: damped BFGS Hessian model, box-QP subproblem solved
//! by a primal active-set method, backtracking Armijo line search, and hard
//! iteration and wall-clock budgets.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::math::{cholesky_in_place, cholesky_solve, clamp, sqrt};

/// A smooth objective over a box.
pub trait NlpProblem {
    fn dim(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn objective(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64], grad: &mut [f64]);

    /// Objective and gradient together; override when they share work.
    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        self.gradient(u, grad);
        self.objective(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBudget {
    pub max_iterations: usize,
    /// Seconds. Checked before each iteration and each line-search trial.
    pub max_wall_time: f64,
    /// Stop when `‖x − P(x − ∇f)‖` falls below this.
    pub gradient_tol: f64,
    pub step_tol: f64,
    /// Stop when three accepted steps in a row each lower the cost by less
    /// than this fraction.
    pub cost_tol: f64,
    /// Keep every accepted iterate in the result.
    pub record_trace: bool,
}

impl Default for SolverBudget {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            max_wall_time: 0.005,
            gradient_tol: 1e-9,
            step_tol: 1e-12,
            cost_tol: 1e-12,
            record_trace: false,
        }
    }
}

impl SolverBudget {
    pub fn iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            max_wall_time: f64::INFINITY,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationBudget,
    TimeBudget,
    /// The line search could not lower the cost along a descent direction.
    Stalled,
    /// A callback returned NaN or infinity.
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub cost: f64,
    pub projected_gradient: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub wall_time: f64,
    pub projected_gradient: f64,
    pub termination: Termination,
    pub trace: Vec<TracePoint>,
}

/// `‖x − P(x − g)‖₂`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        let d = x[i] - clamp(x[i] - g[i], lo[i], hi[i]);
        s += d * d;
    }
    sqrt(s)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

fn sym_mul(b: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = dot(&b[i * n..(i + 1) * n], x);
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Minimizes `gᵀd + ½ dᵀBd` subject to `lo ≤ d ≤ hi` (with `lo ≤ 0 ≤ hi`)
/// by a primal active-set method. `b` must be symmetric positive definite.
/// Returns `None` if a reduced Hessian is not positive definite.
pub fn box_qp(b: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let mut d = vec![0.0; n];
    let mut ws = vec![Bound::Free; n];
    // Start with the bounds that are already tight and that the gradient
    // pushes against.
    for i in 0..n {
        if hi[i] - lo[i] <= 0.0 {
            ws[i] = Bound::Lower;
            d[i] = lo[i];
        } else if lo[i] >= 0.0 && g[i] > 0.0 {
            ws[i] = Bound::Lower;
            d[i] = lo[i];
        } else if hi[i] <= 0.0 && g[i] < 0.0 {
            ws[i] = Bound::Upper;
            d[i] = hi[i];
        }
    }
    let mut free = Vec::with_capacity(n);
    let mut mat = Vec::with_capacity(n * n);
    let mut rhs = Vec::with_capacity(n);
    let mut bd = vec![0.0; n];
    for _ in 0..(4 * n + 10) {
        free.clear();
        free.extend((0..n).filter(|&i| ws[i] == Bound::Free));
        let m = free.len();
        // Unconstrained minimizer over the free variables.
        let mut target = d.clone();
        if m > 0 {
            mat.clear();
            for &i in &free {
                for &j in &free {
                    mat.push(b[i * n + j]);
                }
            }
            rhs.clear();
            for &i in &free {
                let mut r = -g[i];
                for j in 0..n {
                    if ws[j] != Bound::Free {
                        r -= b[i * n + j] * d[j];
                    }
                }
                rhs.push(r);
            }
            if !cholesky_in_place(&mut mat, m) {
                return None;
            }
            cholesky_solve(&mat, m, &mut rhs);
            for (k, &i) in free.iter().enumerate() {
                target[i] = rhs[k];
            }
        }
        // Longest feasible step toward the target.
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let step = target[i] - d[i];
            if step > 0.0 && d[i] + step > hi[i] {
                let a = (hi[i] - d[i]) / step;
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, Bound::Upper));
                }
            } else if step < 0.0 && d[i] + step < lo[i] {
                let a = (lo[i] - d[i]) / step;
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, Bound::Lower));
                }
            }
        }
        for &i in &free {
            d[i] += alpha * (target[i] - d[i]);
        }
        if let Some((i, side)) = blocking {
            ws[i] = side;
            d[i] = if side == Bound::Upper { hi[i] } else { lo[i] };
            continue;
        }
        // At the subspace minimizer: check the multipliers of the working set.
        sym_mul(b, n, &d, &mut bd);
        let mut worst = 0.0;
        let mut release = None;
        for i in 0..n {
            let grad_i = g[i] + bd[i];
            let violation = match ws[i] {
                Bound::Lower if hi[i] > lo[i] => -grad_i,
                Bound::Upper if hi[i] > lo[i] => grad_i,
                _ => 0.0,
            };
            if violation > worst {
                worst = violation;
                release = Some(i);
            }
        }
        match release {
            Some(i) if worst > 1e-14 => ws[i] = Bound::Free,
            _ => break,
        }
    }
    for i in 0..n {
        d[i] = clamp(d[i], lo[i], hi[i]);
    }
    Some(d)
}

fn reset_identity(b: &mut [f64], n: usize) {
    b.fill(0.0);
    for i in 0..n {
        b[i * n + i] = 1.0;
    }
}

/// Powell-damped BFGS update of `b` with step `s` and gradient change `y`.
fn bfgs_update(b: &mut [f64], n: usize, s: &[f64], y: &[f64], bs: &mut [f64]) {
    sym_mul(b, n, s, bs);
    let sbs = dot(s, bs);
    let sy = dot(s, y);
    if !(sbs > 1e-300) || !sy.is_finite() {
        return;
    }
    let theta = if sy >= 0.2 * sbs {
        1.0
    } else {
        0.8 * sbs / (sbs - sy)
    };
    let r: Vec<f64> = (0..n).map(|i| theta * y[i] + (1.0 - theta) * bs[i]).collect();
    let sr = dot(s, &r);
    if !(sr > 1e-300) {
        return;
    }
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] += r[i] * r[j] / sr - bs[i] * bs[j] / sbs;
        }
    }
}

/// Minimizes `problem` from `u_init` (projected onto the box).
///
/// Every iterate is feasible and the cost never increases; on any budget
/// expiry the last accepted iterate is returned.
pub fn sqp_solve<P, C>(problem: &P, u_init: &[f64], budget: &SolverBudget, clock: &C) -> SolverResult
where
    P: NlpProblem + ?Sized,
    C: Clock + ?Sized,
{
    let start = clock.now();
    let elapsed = || clock.now() - start;
    let n = problem.dim();
    let (lo, hi) = (problem.lower(), problem.upper());
    let mut x: Vec<f64> = (0..n).map(|i| clamp(u_init[i], lo[i], hi[i])).collect();
    let mut g = vec![0.0; n];
    let mut evaluations = 0;

    let result = |x: Vec<f64>, cost, initial_cost, iterations, evaluations, pg, termination, trace| SolverResult {
        x,
        cost,
        initial_cost,
        iterations,
        evaluations,
        wall_time: elapsed(),
        projected_gradient: pg,
        termination,
        trace,
    };

    if !(budget.max_wall_time > 0.0) {
        let f = problem.objective(&x);
        return result(x, f, f, 0, 1, f64::NAN, Termination::TimeBudget, Vec::new());
    }

    let mut f = problem.value_and_gradient(&x, &mut g);
    evaluations += 1;
    let f0 = f;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return result(x, f, f0, 0, evaluations, f64::NAN, Termination::NonFinite, Vec::new());
    }
    let mut trace = Vec::new();
    let mut pg = projected_gradient_norm(&x, &g, lo, hi);
    if budget.record_trace {
        trace.push(TracePoint {
            iteration: 0,
            cost: f,
            projected_gradient: pg,
            x: x.clone(),
        });
    }

    let mut b = vec![0.0; n * n];
    reset_identity(&mut b, n);
    let mut scaled = false;
    let mut dlo = vec![0.0; n];
    let mut dhi = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut bs = vec![0.0; n];
    let mut iterations = 0;
    // Consecutive accepted steps with negligible decrease.
    let mut flat = 0;

    let termination = loop {
        if pg < budget.gradient_tol {
            break Termination::Converged;
        }
        if iterations >= budget.max_iterations {
            break Termination::IterationBudget;
        }
        if elapsed() >= budget.max_wall_time {
            break Termination::TimeBudget;
        }
        for i in 0..n {
            dlo[i] = lo[i] - x[i];
            dhi[i] = hi[i] - x[i];
        }
        let mut d = box_qp(&b, &g, &dlo, &dhi);
        let mut slope = d.as_ref().map_or(f64::NAN, |d| dot(&g, d));
        if !(slope < 0.0) {
            reset_identity(&mut b, n);
            scaled = false;
            d = box_qp(&b, &g, &dlo, &dhi);
            slope = d.as_ref().map_or(f64::NAN, |d| dot(&g, d));
        }
        let Some(d) = d else {
            break Termination::Stalled;
        };
        if norm(&d) < budget.step_tol {
            break Termination::Converged;
        }
        if !(slope < 0.0) {
            break Termination::Stalled;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        let mut timed_out = false;
        for _ in 0..40 {
            if elapsed() >= budget.max_wall_time {
                timed_out = true;
                break;
            }
            for i in 0..n {
                trial[i] = clamp(x[i] + alpha * d[i], lo[i], hi[i]);
            }
            let ft = problem.objective(&trial);
            evaluations += 1;
            if ft.is_finite() && ft <= f + 1e-4 * alpha * slope {
                accepted = Some(ft);
                break;
            }
            alpha *= 0.5;
        }
        let Some(ft) = accepted else {
            break if timed_out { Termination::TimeBudget } else { Termination::Stalled };
        };

        let f_new = problem.value_and_gradient(&trial, &mut g_new);
        evaluations += 1;
        if !f_new.is_finite() || g_new.iter().any(|v| !v.is_finite()) {
            break Termination::NonFinite;
        }
        debug_assert!((f_new - ft).abs() <= 1e-9 * (1.0 + ft.abs()));
        for i in 0..n {
            s[i] = trial[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        if !scaled {
            let sy = dot(&s, &y);
            let yy = dot(&y, &y);
            if sy > 0.0 && yy > 0.0 {
                reset_identity(&mut b, n);
                let k = yy / sy;
                for i in 0..n {
                    b[i * n + i] = k;
                }
                scaled = true;
            }
        }
        bfgs_update(&mut b, n, &s, &y, &mut bs);
        let decrease = f - f_new;
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_new);
        f = f_new;
        iterations += 1;
        pg = projected_gradient_norm(&x, &g, lo, hi);
        if budget.record_trace {
            trace.push(TracePoint {
                iteration: iterations,
                cost: f,
                projected_gradient: pg,
                x: x.clone(),
            });
        }
        if decrease <= budget.cost_tol * f.abs().max(f64::MIN_POSITIVE) {
            flat += 1;
            if flat >= 3 {
                break Termination::Converged;
            }
        } else {
            flat = 0;
        }
    };

    result(x, f, f0, iterations, evaluations, pg, termination, trace)
}
