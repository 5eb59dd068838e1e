//! Non-negatively constrained concave quadratic programs
//! `max bᵀλ − ½ λᵀHλ` subject to `λ ≥ 0`.
//!
//! Every max-margin dual in this crate has this form, with `b` the margin
//! targets and `H` a PSD Gram-like matrix. The solver checks the warm start
//! first, then tries an active-set polish, and only falls back to
//! accelerated projected gradient (with periodic polishing) when needed.

use crate::linalg::{dot, solve_spd, Matrix};

#[derive(Clone, Debug)]
pub struct NonnegQp {
    pub h: Matrix,
    pub b: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub active_tol: f64,
    pub polish_every: usize,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub lambda: Vec<f64>,
    /// Gradient iterations plus active-set steps.
    pub iterations: usize,
    /// Sup-norm of the natural residual `λ − max(0, λ + ∇)`.
    pub kkt_residual: f64,
    /// Largest `|∇_i|` over duals above the active tolerance.
    pub complementarity: f64,
    /// `λᵀHλ − bᵀλ`: primal minus dual objective for the recovered primal point.
    pub duality_gap: f64,
    pub objective: f64,
    /// Largest constraint violation `max(0, b − Hλ)`.
    pub infeasibility: f64,
}

#[derive(Clone, Debug)]
pub enum QpFailure {
    /// The dual is unbounded or primal infeasibility persists.
    Diverged,
    Stalled(QpSolution),
}

impl NonnegQp {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn hmul(&self, v: &[f64]) -> Vec<f64> {
        self.h.matvec(v).expect("square system")
    }

    /// Gradient of the maximized objective: `b − Hλ`.
    fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        let hl = self.hmul(lambda);
        self.b.iter().zip(&hl).map(|(b, h)| b - h).collect()
    }

    pub fn evaluate(&self, lambda: &[f64], active_tol: f64) -> QpSolution {
        let hl = self.hmul(lambda);
        let quad = dot(lambda, &hl);
        let lin = dot(&self.b, lambda);
        let mut kkt = 0.0f64;
        let mut comp = 0.0f64;
        let mut infeas = 0.0f64;
        for i in 0..self.dim() {
            let g = self.b[i] - hl[i];
            kkt = kkt.max((lambda[i] - (lambda[i] + g).max(0.0)).abs());
            if lambda[i] > active_tol {
                comp = comp.max(g.abs());
            }
            infeas = infeas.max(g);
        }
        QpSolution {
            lambda: lambda.to_vec(),
            iterations: 0,
            kkt_residual: kkt,
            complementarity: comp,
            duality_gap: quad - lin,
            objective: lin - 0.5 * quad,
            infeasibility: infeas,
        }
    }

    /// Largest eigenvalue of `H` by power iteration, padded slightly.
    fn lipschitz(&self) -> f64 {
        let n = self.dim();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let mut est = 0.0;
        for _ in 0..100 {
            let w = self.hmul(&v);
            let nw = dot(&w, &w).sqrt();
            if nw == 0.0 {
                return 1.0;
            }
            let next = nw / dot(&v, &v).sqrt();
            v = w.iter().map(|x| x / nw).collect();
            if (next - est).abs() <= 1e-6 * next {
                est = next;
                break;
            }
            est = next;
        }
        // Power iteration underestimates; the trace bounds from above.
        let trace: f64 = (0..n).map(|i| self.h[(i, i)]).sum();
        (1.05 * est).min(trace).max(est)
    }

    /// Lawson–Hanson active-set iterations started from a non-negative point.
    /// Returns `None` when a reduced system is inconsistent (unbounded dual)
    /// or the step budget runs out.
    pub fn active_set(&self, start: &[f64], tol: f64, max_steps: usize) -> Option<(Vec<f64>, usize)> {
        let n = self.dim();
        let mut lambda: Vec<f64> = start.iter().map(|v| v.max(0.0)).collect();
        let mut in_p: Vec<bool> = lambda.iter().map(|&v| v > 0.0).collect();
        let block_rounds = 4;
        for step in 0..max_steps {
            self.inner_solve(&mut lambda, &mut in_p)?;
            let g = self.gradient(&lambda);
            let mut violators: Vec<usize> = (0..n).filter(|&i| !in_p[i] && g[i] > tol).collect();
            if violators.is_empty() {
                return Some((lambda, step));
            }
            if step >= block_rounds {
                let best = violators
                    .iter()
                    .copied()
                    .fold(violators[0], |a, i| if g[i] > g[a] { i } else { a });
                violators = vec![best];
            }
            for i in violators {
                in_p[i] = true;
            }
        }
        None
    }

    /// Moves `λ` to the minimizer on the face spanned by the passive set,
    /// stepping back and shrinking the set whenever a coordinate would go
    /// non-positive.
    fn inner_solve(&self, lambda: &mut [f64], in_p: &mut [bool]) -> Option<()> {
        let n = self.dim();
        let b_norm = self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..=n {
            let idx: Vec<usize> = (0..n).filter(|&i| in_p[i]).collect();
            if idx.is_empty() {
                lambda.iter_mut().for_each(|v| *v = 0.0);
                return Some(());
            }
            let h_pp = self.h.select(&idx, &idx);
            let b_p: Vec<f64> = idx.iter().map(|&i| self.b[i]).collect();
            let z = solve_spd(&h_pp, &b_p).ok()?;
            let r = h_pp.matvec(&z).ok()?;
            let resid = r.iter().zip(&b_p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if !resid.is_finite() || resid > 1e-6 * (1.0 + b_norm) {
                return None;
            }
            if z.iter().all(|&v| v > 0.0) {
                lambda.iter_mut().for_each(|v| *v = 0.0);
                for (&i, &v) in idx.iter().zip(&z) {
                    lambda[i] = v;
                }
                return Some(());
            }
            let mut alpha = 1.0f64;
            let mut blocking = idx[0];
            for (&i, &zi) in idx.iter().zip(&z) {
                if zi <= 0.0 {
                    let denom = lambda[i] - zi;
                    let a = if denom > 0.0 { lambda[i] / denom } else { 0.0 };
                    if a < alpha {
                        alpha = a;
                        blocking = i;
                    }
                }
            }
            let scale = idx.iter().fold(0.0f64, |m, &i| m.max(lambda[i]));
            for (&i, &zi) in idx.iter().zip(&z) {
                lambda[i] += alpha * (zi - lambda[i]);
                if i == blocking || lambda[i] <= 1e-14 * scale {
                    lambda[i] = 0.0;
                    in_p[i] = false;
                }
            }
        }
        None
    }

    /// Full solve from a warm start.
    pub fn solve(&self, warm: &[f64], opts: &QpOptions) -> Result<QpSolution, QpFailure> {
        let n = self.dim();
        let lambda: Vec<f64> = warm.iter().map(|v| v.max(0.0)).collect();
        if n == 0 {
            return Ok(self.evaluate(&lambda, opts.active_tol));
        }
        let first = self.evaluate(&lambda, opts.active_tol);
        if first.kkt_residual <= opts.tol {
            return Ok(first);
        }
        let max_steps = 3 * n + 10;
        if let Some((polished, steps)) = self.active_set(&lambda, opts.tol, max_steps) {
            let mut sol = self.evaluate(&polished, opts.active_tol);
            if sol.kkt_residual <= opts.tol {
                sol.iterations = steps;
                return Ok(sol);
            }
        }
        self.accelerated(lambda, opts, first)
    }

    /// FISTA with gradient-based adaptive restart on `½λᵀHλ − bᵀλ`.
    fn accelerated(&self, start: Vec<f64>, opts: &QpOptions, first: QpSolution) -> Result<QpSolution, QpFailure> {
        let n = self.dim();
        let step = 1.0 / self.lipschitz();
        let mut lambda = start;
        let mut y = lambda.clone();
        let mut t = 1.0f64;
        let mut best = first;
        let mut extra_steps = 0;
        let check_every = 10;
        for it in 1..=opts.max_iters {
            let hy = self.hmul(&y);
            let next: Vec<f64> = (0..n)
                .map(|i| (y[i] - step * (hy[i] - self.b[i])).max(0.0))
                .collect();
            // Restart when the step opposes the gradient direction.
            let restart: f64 = (0..n)
                .map(|i| (hy[i] - self.b[i]) * (next[i] - lambda[i]))
                .sum();
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if restart > 0.0 {
                t = 1.0;
                y = next.clone();
            } else {
                let mom = (t - 1.0) / t_next;
                y = (0..n).map(|i| next[i] + mom * (next[i] - lambda[i])).collect();
                t = t_next;
            }
            lambda = next;

            if it % check_every == 0 || it == opts.max_iters {
                let mut sol = self.evaluate(&lambda, opts.active_tol);
                sol.iterations = it + extra_steps;
                if !sol.objective.is_finite() || sol.objective > 1e12 {
                    return Err(QpFailure::Diverged);
                }
                if sol.kkt_residual <= opts.tol {
                    return Ok(sol);
                }
                if sol.kkt_residual < best.kkt_residual {
                    best = sol;
                }
            }
            if opts.polish_every > 0 && it % opts.polish_every == 0 {
                if let Some((polished, steps)) = self.active_set(&lambda, opts.tol, 3 * n + 10) {
                    extra_steps += steps;
                    let mut sol = self.evaluate(&polished, opts.active_tol);
                    sol.iterations = it + extra_steps;
                    if sol.kkt_residual <= opts.tol {
                        return Ok(sol);
                    }
                    if sol.kkt_residual < best.kkt_residual {
                        best = sol;
                    }
                }
            }
        }
        let last = self.evaluate(&lambda, opts.active_tol);
        if last.infeasibility > 1e-2 && best.infeasibility > 1e-2 {
            return Err(QpFailure::Diverged);
        }
        best.iterations = opts.max_iters + extra_steps;
        Err(QpFailure::Stalled(best))
    }
}
