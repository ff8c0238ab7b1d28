//! Implicit initial value problem integrator.
//!
//! The default method is TR-BDF2: one trapezoidal stage followed by a BDF2
//! stage, sharing a single Newton matrix `W = I - d h J` with
//! `d = 1 - sqrt(2)/2`. The method is L-stable and second order, with an
//! embedded third-order companion for the error estimate. Steps always land
//! exactly on the requested output times, so no dense output or interpolation
//! is involved. A fixed-step implicit Euler mode is kept for cross-checking
//! the reference delay simulator.

use crate::error::{Error, Result};
use crate::linalg::{Lu, Mat};

/// gamma = 2 - sqrt(2)
const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
/// Implicit coefficient, equal for both stages: d = 1 - sqrt(2)/2
const D: f64 = 1.0 - std::f64::consts::SQRT_2 / 2.0;
/// Quadrature weight on f_n and f_gamma in the BDF2 stage: w = sqrt(2)/4
const W_STAGE: f64 = std::f64::consts::SQRT_2 / 4.0;

/// b - bhat, the weights of the embedded error estimate.
const E1: f64 = (std::f64::consts::SQRT_2 - 1.0) / 3.0;
const E2: f64 = -1.0 / 3.0;
const E3: f64 = (2.0 - std::f64::consts::SQRT_2) / 3.0;

/// Local error target as a fraction of the configured tolerance. A
/// second-order method takes many steps, so per-step errors must sit well
/// below the tolerance for the accumulated error to land near it.
const ERR_SAFETY: f64 = 0.01;

/// An ODE system that can factor its own Newton matrix `W = I - gamma J`.
///
/// Structured systems (the linear chain) supply a specialized factorization;
/// small dense systems can use [`DenseOde`].
pub trait ImplicitOde {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Factor `W = I - gamma * J(t, y)`.
    fn factor(&self, t: f64, y: &[f64], gamma: f64) -> Result<Box<dyn NewtonFactor + '_>>;
}

/// A factored Newton matrix.
pub trait NewtonFactor {
    fn solve_in_place(&self, v: &mut [f64]);
}

/// Dense-Jacobian adapter for small systems.
pub struct DenseOde<F, J> {
    pub dim: usize,
    pub f: F,
    pub jac: J,
}

impl<F, J> ImplicitOde for DenseOde<F, J>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
    J: Fn(f64, &[f64], &mut Mat) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.f)(t, y, dy);
        Ok(())
    }

    fn factor(&self, t: f64, y: &[f64], gamma: f64) -> Result<Box<dyn NewtonFactor + '_>> {
        let n = self.dim;
        let mut j = Mat::zeros(n, n);
        (self.jac)(t, y, &mut j);
        let mut w = Mat::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                w[(r, c)] = -gamma * j[(r, c)];
            }
            w[(r, r)] += 1.0;
        }
        Ok(Box::new(DenseFactor {
            lu: Lu::factor(&w)?,
        }))
    }
}

struct DenseFactor {
    lu: Lu,
}

impl NewtonFactor for DenseFactor {
    fn solve_in_place(&self, v: &mut [f64]) {
        self.lu.solve_in_place(v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    TrBdf2,
    /// First order, fixed step only.
    ImplicitEuler,
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    /// Newton convergence threshold in the error-weighted norm.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub initial_step: Option<f64>,
    pub method: Method,
    /// Disables step-size control and marches with this step.
    pub fixed_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_step: f64::INFINITY,
            newton_tol: 0.03,
            newton_max_iter: 12,
            initial_step: None,
            method: Method::TrBdf2,
            fixed_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tol(tol: f64) -> Self {
        IntegratorConfig {
            abs_tol: tol,
            rel_tol: tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::Config(
                "integrator tolerances must be positive".into(),
            ));
        }
        if self.method == Method::ImplicitEuler && self.fixed_step.is_none() {
            return Err(Error::Config(
                "implicit Euler is fixed-step only; set fixed_step".into(),
            ));
        }
        if let Some(h) = self.fixed_step {
            if !(h > 0.0) {
                return Err(Error::Config("fixed_step must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_iterations: usize,
    pub factorizations: usize,
}

/// States recorded exactly at the requested output times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

impl Trajectory {
    /// CSV with header `t,x_1,...,x_n`.
    pub fn write_csv<Wr: std::io::Write>(&self, mut w: Wr) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        write!(w, "t")?;
        for i in 1..=n {
            write!(w, ",x_{i}")?;
        }
        writeln!(w)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{}", crate::model::fmt_f64(*t))?;
            for v in s {
                write!(w, ",{}", crate::model::fmt_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrate from `t0` to `tf`, invoking `observe` at every output time.
///
/// `output_times` must be strictly increasing and inside `[t0, tf]`. If `t0`
/// itself is requested the initial state is reported without a step.
pub fn integrate_with<S: ImplicitOde + ?Sized, Obs: FnMut(usize, f64, &[f64])>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    tf: f64,
    output_times: &[f64],
    config: &IntegratorConfig,
    mut observe: Obs,
) -> Result<StepStats> {
    config.validate()?;
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state has length {}, system dimension is {n}",
            y0.len()
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("initial state must be finite".into()));
    }
    if tf < t0 {
        return Err(Error::Config("tf must not precede t0".into()));
    }
    if output_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("output times must strictly increase".into()));
    }
    if let (Some(first), Some(last)) = (output_times.first(), output_times.last()) {
        if *first < t0 || *last > tf {
            return Err(Error::Config("output times must lie in [t0, tf]".into()));
        }
    }

    let mut stepper = Stepper::new(sys, y0.to_vec(), t0, config)?;
    let mut out_idx = 0;
    if output_times.first() == Some(&t0) {
        observe(0, t0, &stepper.y);
        out_idx = 1;
    }
    let mut targets: Vec<f64> = output_times[out_idx..].to_vec();
    if targets.last().copied().unwrap_or(t0) < tf {
        targets.push(tf);
    }
    for target in targets {
        stepper.advance_to(target)?;
        if out_idx < output_times.len() && output_times[out_idx] == target {
            observe(out_idx, target, &stepper.y);
            out_idx += 1;
        }
    }
    Ok(stepper.stats)
}

/// Integrate and collect the states at the output times.
pub fn integrate<S: ImplicitOde + ?Sized>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    tf: f64,
    output_times: &[f64],
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut times = Vec::with_capacity(output_times.len());
    let mut states = Vec::with_capacity(output_times.len());
    let stats = integrate_with(sys, y0, t0, tf, output_times, config, |_, t, y| {
        times.push(t);
        states.push(y.to_vec());
    })?;
    Ok(Trajectory {
        times,
        states,
        stats,
    })
}

struct Stepper<'a, S: ImplicitOde + ?Sized> {
    sys: &'a S,
    t: f64,
    y: Vec<f64>,
    f_cur: Vec<f64>,
    h: f64,
    config: &'a IntegratorConfig,
    stats: StepStats,
    factor: Option<Box<dyn NewtonFactor + 'a>>,
    gamma_factored: f64,
    scratch: Scratch,
}

struct Scratch {
    y1: Vec<f64>,
    y2: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    base: Vec<f64>,
    delta: Vec<f64>,
    est: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            y1: vec![0.0; n],
            y2: vec![0.0; n],
            f1: vec![0.0; n],
            f2: vec![0.0; n],
            base: vec![0.0; n],
            delta: vec![0.0; n],
            est: vec![0.0; n],
        }
    }
}

enum StageOutcome {
    Converged,
    Failed,
}

impl<'a, S: ImplicitOde + ?Sized> Stepper<'a, S> {
    fn new(sys: &'a S, y0: Vec<f64>, t0: f64, config: &'a IntegratorConfig) -> Result<Self> {
        let n = sys.dim();
        let mut f_cur = vec![0.0; n];
        sys.rhs(t0, &y0, &mut f_cur)?;
        Ok(Stepper {
            sys,
            t: t0,
            y: y0,
            f_cur,
            h: 0.0,
            config,
            stats: StepStats::default(),
            factor: None,
            gamma_factored: f64::NAN,
            scratch: Scratch::new(n),
        })
    }

    fn weight(&self, i: usize) -> f64 {
        (self.config.abs_tol + self.config.rel_tol * self.y[i].abs()) * ERR_SAFETY
    }

    fn wrms(&self, v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let s: f64 = v
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let w = x / self.weight(i);
                w * w
            })
            .sum();
        (s / n).sqrt()
    }

    fn advance_to(&mut self, target: f64) -> Result<()> {
        if let Some(h_fixed) = self.config.fixed_step {
            while self.t < target {
                let remaining = target - self.t;
                if remaining < 1e-12 * h_fixed {
                    self.t = target;
                    break;
                }
                let h = h_fixed.min(remaining);
                let lands = h == remaining;
                self.fixed_step(h)?;
                if lands {
                    self.t = target;
                }
            }
            return Ok(());
        }
        if self.h == 0.0 {
            self.h = self.initial_step(target);
        }
        while self.t < target {
            let remaining = target - self.t;
            let h = self.h.min(remaining).min(self.config.max_step);
            if h < 16.0 * f64::EPSILON * self.t.abs() || h < 1e-290 {
                return Err(Error::Integration {
                    t: self.t,
                    reason: "step size underflow".into(),
                });
            }
            let lands = h == remaining;
            match self.try_step(h)? {
                Some(err_norm) if err_norm <= 1.0 => {
                    // accept
                    self.t = if lands { target } else { self.t + h };
                    std::mem::swap(&mut self.y, &mut self.scratch.y2);
                    self.f_cur.copy_from_slice(&self.scratch.f2);
                    self.stats.accepted += 1;
                    let grow = if err_norm == 0.0 {
                        5.0
                    } else {
                        (0.9 * err_norm.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
                    };
                    self.h = h * grow;
                }
                Some(err_norm) => {
                    self.stats.rejected += 1;
                    let shrink = (0.9 * err_norm.powf(-1.0 / 3.0)).clamp(0.1, 0.5);
                    self.h = h * shrink;
                }
                None => {
                    // Newton failure with a fresh Jacobian: halve the step
                    self.stats.rejected += 1;
                    self.h = 0.5 * h;
                }
            }
        }
        Ok(())
    }

    fn initial_step(&self, target: f64) -> f64 {
        let span = target - self.t;
        let d0 = self.wrms(&self.y);
        let d1 = self.wrms(&self.f_cur);
        let guess = if d0 > 0.0 && d1 > 0.0 {
            0.01 * d0 / d1
        } else {
            1e-6 * span
        };
        self.config
            .initial_step
            .unwrap_or(guess)
            .min(span)
            .min(self.config.max_step)
    }

    /// One adaptive TR-BDF2 attempt: Some(err_norm) if both stages converged,
    /// None after an unrecoverable Newton failure (step must shrink).
    fn try_step(&mut self, h: f64) -> Result<Option<f64>> {
        self.ensure_factor(D * h, false)?;

        // TR stage at t + gamma h: Y1 = y + d h (f_n + f(Y1))
        for i in 0..self.y.len() {
            self.scratch.base[i] = self.y[i] + D * h * self.f_cur[i];
            self.scratch.y1[i] = self.y[i] + GAMMA * h * self.f_cur[i]; // predictor
        }
        let t1 = self.t + GAMMA * h;
        match self.solve_stage(t1, D * h, StageKind::Tr)? {
            StageOutcome::Failed => return Ok(None),
            StageOutcome::Converged => {}
        }
        self.sys.rhs(t1, &self.scratch.y1, &mut self.scratch.f1)?;

        // BDF2 stage at t + h: Y2 = y + h (w f_n + w f1 + d f(Y2))
        for i in 0..self.y.len() {
            self.scratch.base[i] = self.y[i] + h * W_STAGE * (self.f_cur[i] + self.scratch.f1[i]);
            // extrapolated predictor through (t, y) and (t + gamma h, y1)
            self.scratch.y2[i] =
                self.scratch.y1[i] + (1.0 - GAMMA) / GAMMA * (self.scratch.y1[i] - self.y[i]);
        }
        let t2 = self.t + h;
        match self.solve_stage(t2, D * h, StageKind::Bdf2)? {
            StageOutcome::Failed => return Ok(None),
            StageOutcome::Converged => {}
        }
        self.sys.rhs(t2, &self.scratch.y2, &mut self.scratch.f2)?;

        // embedded error estimate, filtered through W
        for i in 0..self.y.len() {
            self.scratch.est[i] =
                h * (E1 * self.f_cur[i] + E2 * self.scratch.f1[i] + E3 * self.scratch.f2[i]);
        }
        if self.scratch.est.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        self.factor
            .as_ref()
            .expect("factor exists")
            .solve_in_place(&mut self.scratch.est);
        Ok(Some(self.wrms(&self.scratch.est)))
    }

    /// Newton iteration on Y = base + coeff f(ts, Y); the iterate lives in
    /// scratch.y1 (TR) or scratch.y2 (BDF2). Retries once with a fresh
    /// factorization before giving up.
    fn solve_stage(&mut self, ts: f64, coeff: f64, kind: StageKind) -> Result<StageOutcome> {
        for attempt in 0..2 {
            match self.newton(ts, coeff, kind)? {
                StageOutcome::Converged => return Ok(StageOutcome::Converged),
                StageOutcome::Failed if attempt == 0 => {
                    // retry with a Jacobian evaluated at the current iterate
                    let iterate = match kind {
                        StageKind::Tr => self.scratch.y1.clone(),
                        StageKind::Bdf2 => self.scratch.y2.clone(),
                    };
                    self.refactor_at(ts, &iterate, coeff)?;
                }
                StageOutcome::Failed => return Ok(StageOutcome::Failed),
            }
        }
        Ok(StageOutcome::Failed)
    }

    fn newton(&mut self, ts: f64, coeff: f64, kind: StageKind) -> Result<StageOutcome> {
        let n = self.y.len();
        let mut prev_norm = f64::INFINITY;
        for it in 0..self.config.newton_max_iter {
            self.stats.newton_iterations += 1;
            {
                let yk = match kind {
                    StageKind::Tr => &self.scratch.y1,
                    StageKind::Bdf2 => &self.scratch.y2,
                };
                if yk.iter().any(|v| !v.is_finite()) {
                    return Ok(StageOutcome::Failed);
                }
                if self.sys.rhs(ts, yk, &mut self.scratch.delta).is_err() {
                    return Ok(StageOutcome::Failed);
                }
                let delta = &mut self.scratch.delta;
                for i in 0..n {
                    // residual: -(Y - base - coeff f)
                    delta[i] = self.scratch.base[i] + coeff * delta[i] - yk[i];
                }
            }
            self.factor
                .as_ref()
                .expect("factor exists")
                .solve_in_place(&mut self.scratch.delta);
            let norm = self.wrms(&self.scratch.delta);
            if !norm.is_finite() {
                return Ok(StageOutcome::Failed);
            }
            let yk = match kind {
                StageKind::Tr => &mut self.scratch.y1,
                StageKind::Bdf2 => &mut self.scratch.y2,
            };
            for i in 0..n {
                yk[i] += self.scratch.delta[i];
            }
            // convergence on the Newton update, with rate safeguard
            let rate = norm / prev_norm;
            if norm <= self.config.newton_tol && (it == 0 || rate < 1.0) {
                return Ok(StageOutcome::Converged);
            }
            if it > 0 && rate > 2.0 {
                return Ok(StageOutcome::Failed);
            }
            prev_norm = norm;
        }
        Ok(StageOutcome::Failed)
    }

    fn ensure_factor(&mut self, gamma: f64, force: bool) -> Result<()> {
        let stale =
            force || self.factor.is_none() || (gamma / self.gamma_factored - 1.0).abs() > 0.2;
        if stale {
            self.refactor_at(self.t, &self.y.clone(), gamma)?;
        }
        Ok(())
    }

    fn refactor_at(&mut self, t: f64, y: &[f64], gamma: f64) -> Result<()> {
        self.factor = None;
        self.factor = Some(self.sys.factor(t, y, gamma)?);
        self.gamma_factored = gamma;
        self.stats.factorizations += 1;
        Ok(())
    }

    /// One fixed step of the configured method (no error control).
    fn fixed_step(&mut self, h: f64) -> Result<()> {
        match self.config.method {
            Method::ImplicitEuler => {
                self.ensure_factor(h, false)?;
                for i in 0..self.y.len() {
                    self.scratch.base[i] = self.y[i];
                    self.scratch.y1[i] = self.y[i] + h * self.f_cur[i];
                }
                let ts = self.t + h;
                match self.solve_stage(ts, h, StageKind::Tr)? {
                    StageOutcome::Converged => {}
                    StageOutcome::Failed => {
                        return Err(Error::Newton {
                            step: self.stats.accepted,
                            reason: format!("implicit Euler stage at t = {ts}"),
                        })
                    }
                }
                self.t = ts;
                let y1 = self.scratch.y1.clone();
                self.y.copy_from_slice(&y1);
                self.sys.rhs(self.t, &self.y, &mut self.f_cur)?;
                self.stats.accepted += 1;
                Ok(())
            }
            Method::TrBdf2 => match self.try_step(h)? {
                Some(_) => {
                    self.t += h;
                    std::mem::swap(&mut self.y, &mut self.scratch.y2);
                    self.f_cur.copy_from_slice(&self.scratch.f2);
                    self.stats.accepted += 1;
                    Ok(())
                }
                None => Err(Error::Newton {
                    step: self.stats.accepted,
                    reason: format!("fixed TR-BDF2 step at t = {}", self.t),
                }),
            },
        }
    }
}

#[derive(Clone, Copy)]
enum StageKind {
    Tr,
    Bdf2,
}

/// Measured convergence order from fixed-step runs at dt, dt/2, dt/4 against
/// an exact solution: the mean of the two dyadic log2 error ratios.
pub fn convergence_order<S: ImplicitOde + ?Sized, E: Fn(f64) -> Vec<f64>>(
    sys: &S,
    y0: &[f64],
    t0: f64,
    tf: f64,
    exact: E,
    dt: f64,
    method: Method,
) -> Result<f64> {
    let mut errors = Vec::new();
    for k in 0..3 {
        let h = dt / 2f64.powi(k);
        let config = IntegratorConfig {
            method,
            fixed_step: Some(h),
            ..Default::default()
        };
        let traj = integrate(sys, y0, t0, tf, &[tf], &config)?;
        let reference = exact(tf);
        let err = traj.states[0]
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    if errors.iter().any(|e| *e == 0.0) {
        return Ok(f64::INFINITY);
    }
    let r1 = (errors[0] / errors[1]).log2();
    let r2 = (errors[1] / errors[2]).log2();
    Ok(0.5 * (r1 + r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(
    ) -> DenseOde<impl Fn(f64, &[f64], &mut [f64]) + Sync, impl Fn(f64, &[f64], &mut Mat) + Sync>
    {
        DenseOde {
            dim: 1,
            f: |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0],
            jac: |_t: f64, _y: &[f64], j: &mut Mat| j[(0, 0)] = -1.0,
        }
    }

    #[test]
    fn linear_decay() {
        let sys = decay();
        let config = IntegratorConfig::default();
        let traj = integrate(&sys, &[1.0], 0.0, 1.0, &[0.5, 1.0], &config).unwrap();
        assert_eq!(traj.times, vec![0.5, 1.0]);
        let expected = (-1.0f64).exp();
        assert!(
            (traj.states[1][0] - expected).abs() < 10.0 * 1e-8,
            "got {}, want {expected}",
            traj.states[1][0]
        );
    }

    #[test]
    fn stiff_relaxation() {
        // y' = lambda (cos t - y): particular solution
        // y_p = (lambda^2 cos t + lambda sin t) / (1 + lambda^2)
        let lambda = 1e4;
        let sys = DenseOde {
            dim: 1,
            f: move |t: f64, y: &[f64], dy: &mut [f64]| dy[0] = lambda * (t.cos() - y[0]),
            jac: move |_t: f64, _y: &[f64], j: &mut Mat| j[(0, 0)] = -lambda,
        };
        let yp = |t: f64| (lambda * lambda * t.cos() + lambda * t.sin()) / (1.0 + lambda * lambda);
        let y0 = 0.0;
        let tf = 2.0;
        let exact = yp(tf) + (y0 - yp(0.0)) * (-lambda * tf).exp();
        let config = IntegratorConfig::default();
        let traj = integrate(&sys, &[y0], 0.0, tf, &[tf], &config).unwrap();
        assert!(
            (traj.states[0][0] - exact).abs() < 100.0 * 1e-8,
            "got {}, want {exact}",
            traj.states[0][0]
        );
    }

    #[test]
    fn orders_of_accuracy() {
        let sys = decay();
        let exact = |t: f64| vec![(-t).exp()];
        let order = convergence_order(&sys, &[1.0], 0.0, 1.0, exact, 0.1, Method::TrBdf2).unwrap();
        assert!((order - 2.0).abs() < 0.2, "TR-BDF2 order {order}");
        let order =
            convergence_order(&sys, &[1.0], 0.0, 1.0, exact, 0.1, Method::ImplicitEuler).unwrap();
        assert!((order - 1.0).abs() < 0.2, "implicit Euler order {order}");
    }

    #[test]
    fn zero_rhs_is_exact() {
        let sys = DenseOde {
            dim: 2,
            f: |_t: f64, _y: &[f64], dy: &mut [f64]| dy.fill(0.0),
            jac: |_t: f64, _y: &[f64], j: &mut Mat| j.fill(0.0),
        };
        let config = IntegratorConfig {
            fixed_step: Some(0.37),
            ..Default::default()
        };
        let traj = integrate(&sys, &[4.0, -1.0], 0.0, 5.0, &[5.0], &config).unwrap();
        assert_eq!(traj.states[0], vec![4.0, -1.0]);
    }

    #[test]
    fn outputs_hit_exactly() {
        let sys = decay();
        let config = IntegratorConfig::default();
        let outputs: Vec<f64> = (1..=7).map(|i| i as f64 * 0.137).collect();
        let traj = integrate(&sys, &[1.0], 0.0, 1.0, &outputs, &config).unwrap();
        assert_eq!(traj.times, outputs);
    }

    #[test]
    fn deterministic() {
        let sys = decay();
        let config = IntegratorConfig::default();
        let a = integrate(&sys, &[1.0], 0.0, 3.0, &[1.0, 2.0, 3.0], &config).unwrap();
        let b = integrate(&sys, &[1.0], 0.0, 3.0, &[1.0, 2.0, 3.0], &config).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn euler_requires_fixed_step() {
        let config = IntegratorConfig {
            method: Method::ImplicitEuler,
            ..Default::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn implicit_euler_scalar_step() {
        // y' = -y: one implicit Euler step gives y1 = y0 / (1 + h)
        let sys = decay();
        let h = 0.25;
        let config = IntegratorConfig {
            method: Method::ImplicitEuler,
            fixed_step: Some(h),
            ..Default::default()
        };
        let traj = integrate(&sys, &[1.0], 0.0, h, &[h], &config).unwrap();
        assert!((traj.states[0][0] - 1.0 / (1.0 + h)).abs() < 1e-12);
    }
}
