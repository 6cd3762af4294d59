//! Solver for the continuous relaxation: an augmented-Lagrangian outer
//! loop over inequality constraints with a projected quasi-Newton inner
//! minimization. Gradients come from central finite differences, so the
//! objective only has to be evaluable, not differentiable in closed
//! form.

/// Box bounds, one entry per variable.
#[derive(Debug, Clone)]
pub(crate) struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    fn clamp(&self, x: &mut [f64]) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SolveOptions {
    pub outer_max: usize,
    pub inner_max: usize,
    /// Target infinity norm of the projected gradient.
    pub grad_tol: f64,
    /// Maximum allowed constraint violation.
    pub constraint_tol: f64,
    /// Relative step for central finite differences.
    pub fd_rel_step: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            outer_max: 40,
            inner_max: 500,
            grad_tol: 1e-10,
            constraint_tol: 1e-8,
            fd_rel_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
}

/// Augmented-Lagrangian term for one inequality `g <= 0` with
/// multiplier `lambda` and penalty `rho`.
fn al_penalty(g: f64, lambda: f64, rho: f64) -> f64 {
    let t = (lambda + rho * g).max(0.0);
    (t * t - lambda * lambda) / (2.0 * rho)
}

/// Minimize `objective` subject to `constraints(x)[j] <= 0` and box
/// bounds. Infinite or NaN objective values are treated as rejected
/// points, so the objective may simply blow up outside its domain.
pub(crate) fn minimize(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    constraints: &mut dyn FnMut(&[f64], &mut [f64]),
    n_constraints: usize,
    x0: &[f64],
    bounds: &Bounds,
    opts: &SolveOptions,
) -> Solution {
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);

    let mut lambda = vec![0.0f64; n_constraints];
    let mut rho = 10.0f64;
    let mut g = vec![0.0f64; n_constraints];
    let mut best = Solution {
        x: x.clone(),
        objective: f64::INFINITY,
        max_violation: f64::INFINITY,
    };
    let mut prev_violation = f64::INFINITY;

    for _outer in 0..opts.outer_max {
        let mut eval = |x: &[f64], g: &mut Vec<f64>| -> f64 {
            let f = objective(x);
            if !f.is_finite() {
                return f64::INFINITY;
            }
            constraints(x, g);
            let mut total = f;
            for j in 0..n_constraints {
                total += al_penalty(g[j], lambda[j], rho);
            }
            total
        };
        let inner_ok = inner_minimize(&mut eval, &mut x, bounds, opts, &mut g);

        let f = objective(&x);
        constraints(&x, &mut g);
        let violation = g.iter().fold(0.0f64, |acc, &v| acc.max(v.max(0.0)));

        if violation <= opts.constraint_tol && f < best.objective {
            best = Solution {
                x: x.clone(),
                objective: f,
                max_violation: violation,
            };
        }
        if violation <= opts.constraint_tol && inner_ok {
            break;
        }

        for j in 0..n_constraints {
            lambda[j] = (lambda[j] + rho * g[j]).max(0.0);
        }
        if violation > 0.25 * prev_violation {
            rho = (rho * 5.0).min(1e8);
        }
        prev_violation = violation;
    }

    if best.objective.is_infinite() {
        // never reached feasibility; report the final iterate honestly
        let f = objective(&x);
        constraints(&x, &mut g);
        let violation = g.iter().fold(0.0f64, |acc, &v| acc.max(v.max(0.0)));
        best = Solution {
            x,
            objective: f,
            max_violation: violation,
        };
    }
    best
}

/// Projected BFGS descent on one augmented-Lagrangian subproblem.
/// Returns true when the projected gradient met the tolerance (or the
/// iterate stopped moving at working precision).
fn inner_minimize(
    eval: &mut dyn FnMut(&[f64], &mut Vec<f64>) -> f64,
    x: &mut Vec<f64>,
    bounds: &Bounds,
    opts: &SolveOptions,
    scratch_g: &mut Vec<f64>,
) -> bool {
    let dim = x.len();
    let mut hinv = identity(dim);
    let mut scaled_h0 = false;
    let mut fx = eval(x, scratch_g);
    let mut grad = fd_gradient(eval, x, fx, opts.fd_rel_step, scratch_g);

    for _iter in 0..opts.inner_max {
        let pg = projected_gradient_norm(x, &grad, bounds);
        if pg <= opts.grad_tol {
            return true;
        }

        let mut dir = neg_mul(&hinv, &grad);
        let descent: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        let mut steepest = false;
        if !descent.is_finite() || descent >= 0.0 {
            hinv = identity(dim);
            scaled_h0 = false;
            for (d, g) in dir.iter_mut().zip(&grad) {
                *d = -g;
            }
            steepest = true;
        }

        let mut accepted = line_search(eval, x, &dir, &grad, fx, bounds, scratch_g);
        if accepted.is_none() && !steepest {
            // quasi-Newton direction exhausted; fall back to steepest
            // descent with a fresh Hessian before giving up
            hinv = identity(dim);
            scaled_h0 = false;
            let dir: Vec<f64> = grad.iter().map(|g| -g).collect();
            accepted = line_search(eval, x, &dir, &grad, fx, bounds, scratch_g);
        }
        let Some((x_new, f_new)) = accepted else {
            // no downhill step at working precision
            return true;
        };

        let g_new = fd_gradient(eval, &x_new, f_new, opts.fd_rel_step, scratch_g);
        let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm = s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

        if sy > 1e-12 * norm2(&s) * norm2(&y) {
            if !scaled_h0 {
                // Shanno scaling of the initial inverse Hessian; this
                // matters because lengths and counts live on very
                // different scales
                let yy: f64 = y.iter().map(|v| v * v).sum();
                if yy > 0.0 {
                    let scale = sy / yy;
                    for i in 0..dim {
                        hinv[i * dim + i] = scale;
                    }
                }
                scaled_h0 = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }

        *x = x_new;
        fx = f_new;
        grad = g_new;
        if s_norm < 1e-14 {
            return true;
        }
    }
    projected_gradient_norm(x, &grad, bounds) <= opts.grad_tol * 100.0
}

/// Backtracking Armijo search along `dir`, projecting every trial onto
/// the box.
fn line_search(
    eval: &mut dyn FnMut(&[f64], &mut Vec<f64>) -> f64,
    x: &[f64],
    dir: &[f64],
    grad: &[f64],
    fx: f64,
    bounds: &Bounds,
    scratch_g: &mut Vec<f64>,
) -> Option<(Vec<f64>, f64)> {
    let mut alpha = 1.0f64;
    for _ in 0..60 {
        let mut x_try: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + alpha * di).collect();
        bounds.clamp(&mut x_try);
        let actual_step: f64 = x_try
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if actual_step == 0.0 {
            return None;
        }
        let f_try = eval(&x_try, scratch_g);
        let slope: f64 = grad
            .iter()
            .zip(x_try.iter().zip(x))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        if f_try.is_finite() && f_try <= fx + 1e-4 * slope.min(0.0) {
            return Some((x_try, f_try));
        }
        alpha *= 0.5;
    }
    None
}

fn fd_gradient(
    eval: &mut dyn FnMut(&[f64], &mut Vec<f64>) -> f64,
    x: &[f64],
    fx: f64,
    rel_step: f64,
    scratch_g: &mut Vec<f64>,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let f_plus = eval(&probe, scratch_g);
        probe[i] = x[i] - h;
        let f_minus = eval(&probe, scratch_g);
        probe[i] = x[i];
        grad[i] = if f_plus.is_finite() && f_minus.is_finite() {
            (f_plus - f_minus) / (2.0 * h)
        } else if f_plus.is_finite() {
            (f_plus - fx) / h
        } else if f_minus.is_finite() {
            (fx - f_minus) / h
        } else {
            0.0
        };
    }
    grad
}

fn projected_gradient_norm(x: &[f64], grad: &[f64], bounds: &Bounds) -> f64 {
    let mut norm = 0.0f64;
    for i in 0..x.len() {
        let moved = (x[i] - grad[i]).clamp(bounds.lo[i], bounds.hi[i]);
        norm = norm.max((x[i] - moved).abs());
    }
    norm
}

fn identity(dim: usize) -> Vec<f64> {
    let mut h = vec![0.0; dim * dim];
    for i in 0..dim {
        h[i * dim + i] = 1.0;
    }
    h
}

fn neg_mul(h: &[f64], g: &[f64]) -> Vec<f64> {
    let dim = g.len();
    let mut out = vec![0.0; dim];
    for i in 0..dim {
        let row = &h[i * dim..(i + 1) * dim];
        out[i] = -row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
    }
    out
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Standard inverse-Hessian BFGS update.
fn bfgs_update(hinv: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let dim = s.len();
    let rho = 1.0 / sy;
    // hy = H y
    let mut hy = vec![0.0; dim];
    for i in 0..dim {
        hy[i] = hinv[i * dim..(i + 1) * dim]
            .iter()
            .zip(y)
            .map(|(a, b)| a * b)
            .sum();
    }
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    let c = rho * rho * yhy + rho;
    for i in 0..dim {
        for j in 0..dim {
            hinv[i * dim + j] +=
                c * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(
        mut f: impl FnMut(&[f64]) -> f64,
        mut cons: impl FnMut(&[f64], &mut [f64]),
        ncons: usize,
        x0: &[f64],
        bounds: Bounds,
    ) -> Solution {
        minimize(
            &mut f,
            &mut cons,
            ncons,
            x0,
            &bounds,
            &SolveOptions::default(),
        )
    }

    #[test]
    fn unconstrained_quadratic() {
        let sol = solve(
            |x| (x[0] - 2.0).powi(2) + 3.0 * (x[1] + 1.0).powi(2),
            |_, _| {},
            0,
            &[0.0, 0.0],
            Bounds {
                lo: vec![-10.0, -10.0],
                hi: vec![10.0, 10.0],
            },
        );
        assert!((sol.x[0] - 2.0).abs() < 1e-6, "{:?}", sol.x);
        assert!((sol.x[1] + 1.0).abs() < 1e-6, "{:?}", sol.x);
    }

    #[test]
    fn bound_active_at_solution() {
        let sol = solve(
            |x| (x[0] + 5.0).powi(2),
            |_, _| {},
            0,
            &[3.0],
            Bounds {
                lo: vec![1.0],
                hi: vec![10.0],
            },
        );
        assert!((sol.x[0] - 1.0).abs() < 1e-8, "{:?}", sol.x);
    }

    #[test]
    fn inequality_constraint_becomes_active() {
        // minimize x^2 + y^2 subject to x + y >= 1
        let sol = solve(
            |x| x[0] * x[0] + x[1] * x[1],
            |x, g| g[0] = 1.0 - x[0] - x[1],
            1,
            &[2.0, 2.0],
            Bounds {
                lo: vec![-10.0, -10.0],
                hi: vec![10.0, 10.0],
            },
        );
        assert!(sol.max_violation < 1e-7, "{sol:?}");
        assert!((sol.x[0] - 0.5).abs() < 1e-4, "{:?}", sol.x);
        assert!((sol.x[1] - 0.5).abs() < 1e-4, "{:?}", sol.x);
    }

    #[test]
    fn rosenbrock_under_budget_constraint() {
        // classic curved valley plus a linear budget
        let sol = solve(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            |x, g| g[0] = x[0] + x[1] - 1.5,
            1,
            &[-1.0, 2.0],
            Bounds {
                lo: vec![-5.0, -5.0],
                hi: vec![5.0, 5.0],
            },
        );
        assert!(sol.max_violation < 1e-7);
        // the solution hugs the x + y = 1.5 line near (0.9, 0.6)
        assert!(sol.objective < 0.1, "{sol:?}");
        assert!(sol.x[0] + sol.x[1] <= 1.5 + 1e-6);
    }

    #[test]
    fn infeasible_start_recovers() {
        let sol = solve(
            |x| x.iter().sum::<f64>(),
            |x, g| g[0] = 4.0 - x[0] - x[1],
            1,
            &[0.0, 0.0],
            Bounds {
                lo: vec![0.0, 0.0],
                hi: vec![10.0, 10.0],
            },
        );
        assert!(sol.max_violation < 1e-7, "{sol:?}");
        assert!((sol.x[0] + sol.x[1] - 4.0).abs() < 1e-5, "{:?}", sol.x);
    }
}
