//! Reference simulator for the original delay system.
//!
//! Fixed-step implicit Euler with the distributed delay discretized by a
//! right rectangle rule over a truncated memory horizon:
//!
//! ```text
//! x_{n+1} = x_n + f(x_{n+1}, z_{n+1}, p) dt
//! z_{n+1} = sum_{j=0}^{N_h - 1} alpha(j dt) r_{n-j+1} dt
//! r_{n+1} = h(x_{n+1}, p)
//! ```
//!
//! The truncated discrete kernel `alpha(j dt) dt` is rescaled to unit mass
//! so that a constant history is an exact fixed point of the scheme.
//!
//! The j = 0 rectangle couples `z_{n+1}` to the unknown `x_{n+1}`, which
//! shows up in the Newton Jacobian as `alpha(0) h_x dt`. Point delays are
//! simulated by a lagged history lookup with the delay snapped to the step
//! grid. Used to synthesize measurement data from true kernels; the
//! estimator never sees this code path.

use crate::error::{Error, Result};
use crate::exec;
use crate::ivp::Trajectory;
use crate::kernels::Kernel;
use crate::linalg::{Lu, Mat};
use crate::model::{MeasurementSeries, Model};

#[derive(Debug, Clone)]
pub struct DdeSimConfig {
    /// Fixed step size.
    pub dt: f64,
    /// Memory horizon; must be an integer multiple of `dt`.
    pub horizon: f64,
    /// Infinity-norm tolerance on the implicit Euler residual.
    pub residual_tol: f64,
    pub max_newton_iter: usize,
}

impl DdeSimConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        DdeSimConfig {
            dt,
            horizon,
            residual_tol: 1e-12,
            max_newton_iter: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config("memory horizon must be positive".into()));
        }
        let ratio = self.horizon / self.dt;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "horizon/dt = {ratio} must be an integer"
            )));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::Config("residual tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Number of rectangles in the truncated convolution.
    pub fn n_history(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Per-component history of the delayed quantity r, pre-filled with the
/// constant initial value and grown forward in time.
pub struct HistoryBuffer {
    /// `lanes[i][base + m]` = component i of r at step m (m may be negative
    /// down to -base during the pre-history).
    lanes: Vec<Vec<f64>>,
    base: usize,
}

impl HistoryBuffer {
    pub fn new(r0: &[f64], n_history: usize, capacity_steps: usize) -> Self {
        let base = n_history;
        let lanes = r0
            .iter()
            .map(|&v| {
                let mut lane = Vec::with_capacity(base + capacity_steps + 2);
                lane.resize(base + 1, v); // r_m = r_0 for m <= 0
                lane
            })
            .collect();
        HistoryBuffer { lanes, base }
    }

    pub fn push(&mut self, r: &[f64]) {
        for (lane, &v) in self.lanes.iter_mut().zip(r) {
            lane.push(v);
        }
    }

    /// r at step index m (negative m reads the constant pre-history).
    pub fn at(&self, m: isize, out: &mut [f64]) {
        let idx = (self.base as isize + m) as usize;
        for (o, lane) in out.iter_mut().zip(&self.lanes) {
            *o = lane[idx];
        }
    }

    /// Convolution tail `sum_{j=1}^{N_h-1} w_j r_{n+1-j}` for the step from
    /// n to n+1; `w_rev` holds `[w_{N_h-1}, ..., w_1]`.
    fn tail(&self, n: usize, w_rev: &[f64], out: &mut [f64]) {
        let n_h = w_rev.len() + 1;
        let hi = self.base + n + 1; // exclusive: slice ends at r_n
        let lo = hi - (n_h - 1);
        for (o, lane) in out.iter_mut().zip(&self.lanes) {
            *o = exec::dot(w_rev, &lane[lo..hi]);
        }
    }
}

enum DelayMode {
    /// Rectangle-rule convolution: `w0 = alpha(0) dt`, reversed tail weights.
    Convolution { w0: f64, w_rev: Vec<f64> },
    /// Point delay as a lagged lookup, `lag = round(tau/dt)` steps.
    Lagged { lag: usize },
}

/// Reference simulation with constant pre-history `x(t) = x0` for t <= t0.
///
/// Samples every `sample_stride` steps (including step 0), returning the
/// measurements and the state trajectory at those times.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with_params(
    model: &dyn Model,
    kernel: &Kernel,
    x0: &[f64],
    p: &[f64],
    t0: f64,
    n_steps: usize,
    sample_stride: usize,
    config: &DdeSimConfig,
) -> Result<(MeasurementSeries, Trajectory)> {
    config.validate()?;
    let dims = model.dims();
    if x0.len() != dims.n_x || p.len() != dims.n_p {
        return Err(Error::Dimension(
            "state or parameter length mismatch".into(),
        ));
    }
    if sample_stride == 0 || n_steps % sample_stride != 0 {
        return Err(Error::Config(
            "sample_stride must divide the step count".into(),
        ));
    }
    let dt = config.dt;
    let n_h = config.n_history();

    let mode = match kernel {
        Kernel::Point(pd) => {
            let lag = (pd.tau / dt).round() as usize;
            if lag > n_h {
                return Err(Error::Config(format!(
                    "point delay {} exceeds the memory horizon {}",
                    pd.tau, config.horizon
                )));
            }
            DelayMode::Lagged { lag }
        }
        _ => {
            let grid: Vec<f64> = (0..n_h).map(|j| j as f64 * dt).collect();
            let mut w: Vec<f64> = match kernel {
                Kernel::FoldedNormal(k) => k.pdf_grid(&grid),
                Kernel::Erlang(k) => k.pdf_grid(&grid),
                Kernel::Point(_) => unreachable!(),
            }
            .iter()
            .map(|v| v * dt)
            .collect();
            // normalize the truncated discrete kernel to unit mass so a
            // constant history is an exact fixed point of the scheme
            let mass: f64 = w.iter().sum();
            if !(mass > 0.0) {
                return Err(Error::Config(
                    "kernel carries no mass inside the memory horizon".into(),
                ));
            }
            for v in &mut w {
                *v /= mass;
            }
            let w0 = w[0];
            let w_rev: Vec<f64> = w[1..].iter().rev().copied().collect();
            DelayMode::Convolution { w0, w_rev }
        }
    };

    let mut r0 = vec![0.0; dims.n_z];
    model.h(t0, x0, p, &mut r0);
    let mut history = HistoryBuffer::new(&r0, n_h, n_steps);

    let mut x = x0.to_vec();
    let mut tail = vec![0.0; dims.n_z];
    let mut z = vec![0.0; dims.n_z];
    let mut r = r0.clone();
    let mut fx_buf = Mat::zeros(dims.n_x, dims.n_x);
    let mut fz_buf = Mat::zeros(dims.n_x, dims.n_z);
    let mut hx_buf = Mat::zeros(dims.n_z, dims.n_x);
    let mut fval = vec![0.0; dims.n_x];
    let mut resid = vec![0.0; dims.n_x];

    let n_samples = n_steps / sample_stride + 1;
    let mut times = Vec::with_capacity(n_samples);
    let mut measurements = Vec::with_capacity(n_samples);
    let mut traj_states = Vec::with_capacity(n_samples);
    let mut record = |t: f64, x: &[f64]| -> Result<()> {
        let mut y = vec![0.0; dims.n_y];
        model.g(t, x, p, &mut y)?;
        times.push(t);
        measurements.push(y);
        traj_states.push(x.to_vec());
        Ok(())
    };
    record(t0, &x)?;

    for n in 0..n_steps {
        let t_next = t0 + (n as f64 + 1.0) * dt;
        // z_{n+1} split into the known tail and the implicit j = 0 term
        let w0 = match &mode {
            DelayMode::Convolution { w0, w_rev } => {
                history.tail(n, w_rev, &mut tail);
                *w0
            }
            DelayMode::Lagged { lag } => {
                if *lag == 0 {
                    tail.fill(0.0);
                    1.0
                } else {
                    history.at(n as isize + 1 - *lag as isize, &mut tail);
                    0.0
                }
            }
        };

        // predictor: explicit Euler with the previous delayed value
        model.h(t_next, &x, p, &mut r);
        for i in 0..dims.n_z {
            z[i] = tail[i] + w0 * r[i];
        }
        model.f(t_next, &x, &z, p, &mut fval);
        let x_prev = x.clone();
        for i in 0..dims.n_x {
            x[i] += dt * fval[i];
        }

        let mut converged = false;
        for _ in 0..config.max_newton_iter {
            model.h(t_next, &x, p, &mut r);
            for i in 0..dims.n_z {
                z[i] = tail[i] + w0 * r[i];
            }
            model.f(t_next, &x, &z, p, &mut fval);
            // residual weighted by the state magnitude: an absolute floor
            // below |x| * eps is not representable once states grow large
            let mut norm = 0.0_f64;
            for i in 0..dims.n_x {
                resid[i] = x[i] - x_prev[i] - dt * fval[i];
                norm = norm.max(resid[i].abs() / x[i].abs().max(1.0));
            }
            if norm <= config.residual_tol {
                converged = true;
                break;
            }
            // J = I - (f_x + w0 f_z h_x) dt
            model.f_x(t_next, &x, &z, p, &mut fx_buf);
            model.f_z(t_next, &x, &z, p, &mut fz_buf);
            model.h_x(t_next, &x, p, &mut hx_buf);
            let mut jac = Mat::zeros(dims.n_x, dims.n_x);
            for i in 0..dims.n_x {
                for j in 0..dims.n_x {
                    let mut coupling = 0.0;
                    if w0 != 0.0 {
                        for k in 0..dims.n_z {
                            coupling += fz_buf[(i, k)] * hx_buf[(k, j)];
                        }
                    }
                    jac[(i, j)] = -dt * (fx_buf[(i, j)] + w0 * coupling);
                }
                jac[(i, i)] += 1.0;
            }
            let lu = Lu::factor(&jac)?;
            lu.solve_in_place(&mut resid);
            for i in 0..dims.n_x {
                x[i] -= resid[i];
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Newton {
                    step: n,
                    reason: "iterate diverged to non-finite values".into(),
                });
            }
        }
        if !converged {
            return Err(Error::Newton {
                step: n,
                reason: format!(
                    "residual above {} after {} iterations",
                    config.residual_tol, config.max_newton_iter
                ),
            });
        }

        model.h(t_next, &x, p, &mut r);
        history.push(&r);
        if (n + 1) % sample_stride == 0 {
            record(t_next, &x)?;
        }
    }

    let series = MeasurementSeries::new(times.clone(), measurements)?;
    let traj = Trajectory {
        times,
        states: traj_states,
        stats: Default::default(),
    };
    Ok((series, traj))
}
