//! Projected limited-memory quasi-Newton descent.
//!
//! Minimizes a smooth objective over a convex set given by a projection
//! operator (boxes plus one simplex here). Search directions come from an
//! L-BFGS two-loop recursion; steps follow the projection arc
//! `x(s) = P(x + s d)` with an Armijo acceptance test, falling back to
//! projected steepest descent when the quasi-Newton direction is unusable.
//! Objective evaluations may fail (a shooting simulation can blow up for bad
//! parameters); failures are treated as infinite values and backtracked over.

use crate::error::{Error, Result};

/// Projection onto the feasible set.
pub trait Feasible {
    fn project(&self, x: &mut [f64]);

    /// Gradient reduced to the locally free subspace: components blocked by
    /// an active bound are zeroed and any linear-constraint block is
    /// projected onto its tangent space. The default keeps the gradient
    /// as-is, which is correct for unconstrained and interior problems.
    fn reduced_gradient(&self, _x: &[f64], g: &[f64]) -> Vec<f64> {
        g.to_vec()
    }
}

#[derive(Debug, Clone)]
pub struct PqnOptions {
    /// L-BFGS memory (pair count).
    pub memory: usize,
    pub max_iter: usize,
    /// Threshold on the projected-gradient infinity norm.
    pub opt_tol: f64,
    /// Armijo slope fraction.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for PqnOptions {
    fn default() -> Self {
        PqnOptions {
            memory: 10,
            max_iter: 500,
            opt_tol: 1e-6,
            armijo: 1e-4,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationCap,
    LineSearchFailure,
}

/// One accepted iterate.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iter: usize,
    pub value: f64,
    pub pg_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct PqnResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub pg_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub log: Vec<IterRecord>,
}

/// Projected-gradient optimality measure `|| x - P(x - g) ||_inf`.
fn projected_gradient_norm(x: &[f64], g: &[f64], feasible: &dyn Feasible) -> f64 {
    let mut trial: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - gi).collect();
    feasible.project(&mut trial);
    x.iter()
        .zip(&trial)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

struct LbfgsMemory {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
    cap: usize,
}

impl LbfgsMemory {
    fn new(cap: usize) -> Self {
        LbfgsMemory {
            s: Vec::new(),
            y: Vec::new(),
            rho: Vec::new(),
            cap,
        }
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sn: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let yn: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        // curvature guard
        if sy <= 1e-12 * sn * yn || !sy.is_finite() {
            return;
        }
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.rho.push(1.0 / sy);
        self.s.push(s);
        self.y.push(y);
    }

    /// Two-loop recursion: d = -H g.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let a: f64 = self.rho[i] * self.s[i].iter().zip(&q).map(|(s, q)| s * q).sum::<f64>();
            alpha[i] = a;
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= a * yj;
            }
        }
        if k > 0 {
            let last = k - 1;
            let yy: f64 = self.y[last].iter().map(|v| v * v).sum();
            let gamma = 1.0 / (self.rho[last] * yy);
            for qj in q.iter_mut() {
                *qj *= gamma;
            }
        }
        for i in 0..k {
            let b: f64 = self.rho[i] * self.y[i].iter().zip(&q).map(|(y, q)| y * q).sum::<f64>();
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - b) * sj;
            }
        }
        for qj in q.iter_mut() {
            *qj = -*qj;
        }
        q
    }
}

/// Minimize with projected L-BFGS. `value` evaluates the objective alone
/// (used inside the line search); `value_grad` also returns the gradient.
/// `None` from either signals a failed evaluation.
pub fn minimize<V, VG>(
    x0: &[f64],
    feasible: &dyn Feasible,
    mut value: V,
    mut value_grad: VG,
    options: &PqnOptions,
) -> Result<PqnResult>
where
    V: FnMut(&[f64]) -> Option<f64>,
    VG: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    feasible.project(&mut x);
    let mut f = value(&x)
        .ok_or_else(|| Error::Domain("objective evaluation failed at the initial point".into()))?;
    let mut g = value_grad(&x)
        .ok_or_else(|| Error::Domain("gradient evaluation failed at the initial point".into()))?
        .1;

    let mut memory = LbfgsMemory::new(options.memory.max(1));
    let mut log = Vec::new();
    let mut last_step = 0.0;

    for iter in 0..=options.max_iter {
        let pg_norm = projected_gradient_norm(&x, &g, feasible);
        log.push(IterRecord {
            iter,
            value: f,
            pg_norm,
            step: last_step,
        });
        if pg_norm <= options.opt_tol {
            return Ok(PqnResult {
                x,
                value: f,
                gradient: g,
                pg_norm,
                iterations: iter,
                termination: Termination::Converged,
                log,
            });
        }
        if iter == options.max_iter {
            break;
        }

        let reduced = feasible.reduced_gradient(&x, &g);
        let mut accepted = None;
        'directions: for fallback in 0..2 {
            let d: Vec<f64> = if fallback == 0 && !memory.s.is_empty() {
                memory.direction(&reduced)
            } else {
                // projected-gradient displacement P(x - g) - x: a feasible
                // descent direction whenever one exists
                let mut trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi).collect();
                feasible.project(&mut trial);
                trial.iter().zip(&x).map(|(t, xi)| t - xi).collect()
            };
            // cap the first trial so no component moves by more than half its
            // own magnitude; wild quasi-Newton steps along flat directions
            // would otherwise jump onto far-away plateaus
            let overshoot = x
                .iter()
                .zip(&d)
                .map(|(xi, di)| di.abs() / xi.abs().max(1.0))
                .fold(0.0, f64::max);
            let mut step = if overshoot > 0.5 {
                0.5 / overshoot
            } else {
                1.0
            };
            for _ in 0..options.max_backtracks {
                let mut xc: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
                feasible.project(&mut xc);
                let dirder: f64 = g
                    .iter()
                    .zip(xc.iter().zip(&x))
                    .map(|(gi, (c, xi))| gi * (c - xi))
                    .sum();
                if dirder < 0.0 {
                    if let Some(fc) = value(&xc) {
                        if fc.is_finite() && fc <= f + options.armijo * dirder {
                            accepted = Some((xc, fc, step));
                            break 'directions;
                        }
                    }
                }
                step *= 0.5;
                // steps this small only ever "accept" evaluation noise
                if step < 1e-12 {
                    break;
                }
            }
        }

        let Some((xc, fc, step)) = accepted else {
            return Ok(PqnResult {
                x,
                value: f,
                gradient: g,
                pg_norm,
                iterations: iter,
                termination: Termination::LineSearchFailure,
                log,
            });
        };

        // The objective value is bookkept from the line-search route so the
        // accepted sequence is exactly monotone; value_grad may integrate a
        // slightly different (augmented) system and is used for the gradient.
        let Some((_, gc)) = value_grad(&xc) else {
            return Ok(PqnResult {
                x,
                value: f,
                gradient: g,
                pg_norm,
                iterations: iter,
                termination: Termination::LineSearchFailure,
                log,
            });
        };
        // secant pair in the reduced space the directions are built in
        let reduced_new = feasible.reduced_gradient(&xc, &gc);
        let s_vec: Vec<f64> = xc.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y_vec: Vec<f64> = reduced_new
            .iter()
            .zip(&reduced)
            .map(|(a, b)| a - b)
            .collect();
        memory.push(s_vec, y_vec);
        x = xc;
        f = fc;
        g = gc;
        last_step = step;
    }

    let pg_norm = projected_gradient_norm(&x, &g, feasible);
    Ok(PqnResult {
        x,
        value: f,
        gradient: g,
        pg_norm,
        iterations: options.max_iter,
        termination: Termination::IterationCap,
        log,
    })
}

/// Euclidean projection of `c` onto `{ lo <= c <= hi, sum c = target }` by
/// bisection on the dual variable of the sum constraint.
pub fn project_box_simplex(c: &mut [f64], lo: &[f64], hi: &[f64], target: f64) -> Result<()> {
    let n = c.len();
    assert_eq!(lo.len(), n);
    assert_eq!(hi.len(), n);
    let sum_lo: f64 = lo.iter().sum();
    let sum_hi: f64 = hi.iter().sum();
    if sum_lo > target + 1e-12 || sum_hi < target - 1e-12 {
        return Err(Error::Infeasible(format!(
            "box-simplex set is empty: sum(lo) = {sum_lo}, sum(hi) = {sum_hi}, target = {target}"
        )));
    }
    let eval = |lambda: f64, c: &[f64]| -> f64 {
        c.iter()
            .zip(lo.iter().zip(hi))
            .map(|(ci, (l, h))| (ci - lambda).clamp(*l, *h))
            .sum()
    };
    // expanding bracket: g is nonincreasing in lambda
    let mut a = -1.0;
    let mut b = 1.0;
    let spread = c.iter().fold(0.0f64, |m, v| m.max(v.abs())) + target.abs() + 1.0;
    a *= spread;
    b *= spread;
    for _ in 0..200 {
        if eval(a, c) >= target {
            break;
        }
        a *= 2.0;
    }
    for _ in 0..200 {
        if eval(b, c) <= target {
            break;
        }
        b *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if eval(mid, c) >= target {
            a = mid;
        } else {
            b = mid;
        }
        if (b - a) <= f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
            break;
        }
    }
    let lambda = 0.5 * (a + b);
    for (ci, (l, h)) in c.iter_mut().zip(lo.iter().zip(hi)) {
        *ci = (*ci - lambda).clamp(*l, *h);
    }
    // spread the last roundoff over the strictly interior components
    let gap = target - c.iter().sum::<f64>();
    if gap != 0.0 {
        let free: Vec<usize> = (0..n)
            .filter(|&i| c[i] > lo[i] + 1e-12 && c[i] < hi[i] - 1e-12)
            .collect();
        if !free.is_empty() {
            let share = gap / free.len() as f64;
            for i in free {
                c[i] += share;
            }
        }
    }
    Ok(())
}
