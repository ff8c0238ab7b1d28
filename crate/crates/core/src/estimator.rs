//! Single-shooting least-squares estimation of the kernel parameters, model
//! parameters, and initial state.
//!
//! The decision vector is `theta = [p; c_0..c_M, a; x0]`. Evaluating the
//! objective embeds a full initial value problem solve: build the augmented
//! system for the candidate kernel, initialize the chain at steady state,
//! integrate to the measurement times, and sum the squared residuals. The
//! gradient comes from the forward sensitivity system. The weights live on a
//! box-constrained simplex and everything else in boxes, so iterates are kept
//! feasible by projection inside a quasi-Newton descent.

use crate::error::{Error, Result};
use crate::ivp::{integrate_with, IntegratorConfig};
use crate::kernels::{ErlangMixture, Kernel};
use crate::lct::AugmentedSystem;
use crate::model::{MeasurementSeries, Model, ThetaLayout};
use crate::optimize::{self, minimize, Feasible, IterRecord, PqnOptions, PqnResult, Termination};
use crate::sens::SensitivitySystem;

/// Componentwise bounds on theta; infinities mean unbounded.
#[derive(Debug, Clone)]
pub struct ThetaBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ThetaBounds {
    /// Unbounded except for a positive floor on the rate.
    pub fn unbounded(layout: ThetaLayout) -> Self {
        let mut b = ThetaBounds {
            lower: vec![f64::NEG_INFINITY; layout.len()],
            upper: vec![f64::INFINITY; layout.len()],
        };
        b.lower[layout.a_index()] = 1e-6;
        b
    }

    pub fn validate(&self, layout: ThetaLayout) -> Result<()> {
        if self.lower.len() != layout.len() || self.upper.len() != layout.len() {
            return Err(Error::Dimension(
                "bounds do not match the theta layout".into(),
            ));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| l > u || l.is_nan() || u.is_nan())
        {
            return Err(Error::Config("lower bound exceeds upper bound".into()));
        }
        if self.lower[layout.a_index()] <= 0.0 {
            return Err(Error::Config(
                "the rate needs a positive lower bound".into(),
            ));
        }
        Ok(())
    }
}

/// One estimation task for a fixed kernel order M.
pub struct EstimationProblem<'a> {
    pub model: &'a dyn Model,
    pub order: usize,
    pub measurements: MeasurementSeries,
    pub bounds: ThetaBounds,
    pub theta0: Vec<f64>,
    /// Objective scale factor applied to both the value and the gradient.
    pub scale: f64,
    /// Threshold on the projected-gradient infinity norm.
    pub opt_tol: f64,
    pub max_iter: usize,
    pub lbfgs_memory: usize,
    pub ivp: IntegratorConfig,
}

impl<'a> EstimationProblem<'a> {
    pub fn new(
        model: &'a dyn Model,
        order: usize,
        measurements: MeasurementSeries,
        theta0: Vec<f64>,
    ) -> Result<Self> {
        let dims = model.dims();
        let layout = ThetaLayout::new(dims.n_p, order, dims.n_x);
        if theta0.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "initial guess has length {}, layout expects {}",
                theta0.len(),
                layout.len()
            )));
        }
        if measurements.n_y() != dims.n_y {
            return Err(Error::Dimension(format!(
                "measurements have {} channels, model produces {}",
                measurements.n_y(),
                dims.n_y
            )));
        }
        Ok(EstimationProblem {
            model,
            order,
            measurements,
            bounds: ThetaBounds::unbounded(layout),
            theta0,
            scale: 1.0,
            opt_tol: 1e-6,
            max_iter: 500,
            lbfgs_memory: 10,
            ivp: IntegratorConfig::default(),
        })
    }

    pub fn layout(&self) -> ThetaLayout {
        let dims = self.model.dims();
        ThetaLayout::new(dims.n_p, self.order, dims.n_x)
    }

    fn split_theta<'t>(&self, theta: &'t [f64]) -> (&'t [f64], &'t [f64], f64, &'t [f64]) {
        let layout = self.layout();
        let p = &theta[layout.p_range()];
        let c = &theta[layout.c_range()];
        let a = theta[layout.a_index()];
        let x0 = &theta[layout.x0_range()];
        (p, c, a, x0)
    }

    /// The shooting objective `scale * 1/2 sum_k ||y_k - yhat_k||^2` with the
    /// residuals and predicted measurements.
    pub fn objective(&self, theta: &[f64]) -> Result<ObjectiveValue> {
        let (p, c, a, x0) = self.split_theta(theta);
        let aug = AugmentedSystem::new(self.model, a, c.to_vec(), p.to_vec())?;
        let times = self.measurements.times();
        let t0 = times[0];
        let y0 = aug.initial_state(t0, x0);
        let model = self.model;
        let n_y = model.dims().n_y;
        let mut sum_sq = 0.0;
        let mut predicted = Vec::with_capacity(times.len());
        let mut failure: Option<Error> = None;
        integrate_with(
            &aug,
            &y0,
            t0,
            *times.last().unwrap(),
            times,
            &self.ivp,
            |k, t, y| {
                if failure.is_some() {
                    return;
                }
                let mut yhat = vec![0.0; n_y];
                match model.g(t, &y[..model.dims().n_x], p, &mut yhat) {
                    Ok(()) => {
                        let meas = &self.measurements.values()[k];
                        for (m, v) in meas.iter().zip(&yhat) {
                            sum_sq += (m - v) * (m - v);
                        }
                        predicted.push(yhat);
                    }
                    Err(e) => failure = Some(e),
                }
            },
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(ObjectiveValue {
            value: self.scale * 0.5 * sum_sq,
            predicted,
        })
    }

    /// Objective and gradient via the forward sensitivity system; the
    /// gradient is accumulated on the fly at each sample time.
    pub fn objective_with_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let layout = self.layout();
        let (p, c, a, x0) = self.split_theta(theta);
        let aug = AugmentedSystem::new(self.model, a, c.to_vec(), p.to_vec())?;
        let sys = SensitivitySystem::new(aug, layout)?;
        let times = self.measurements.times();
        let t0 = times[0];
        let y0 = sys.initial_state(t0, x0);
        let mut sum_sq = 0.0;
        let mut grad = vec![0.0; layout.len()];
        let mut failure: Option<Error> = None;
        integrate_with(
            &sys,
            &y0,
            t0,
            *times.last().unwrap(),
            times,
            &self.ivp,
            |k, t, y| {
                if failure.is_some() {
                    return;
                }
                match sys.measurement_sensitivities(t, y) {
                    Ok((yhat, s_y)) => {
                        let meas = &self.measurements.values()[k];
                        for (r, (m, v)) in meas.iter().zip(&yhat).enumerate() {
                            let res = m - v;
                            sum_sq += res * res;
                            for i in 0..layout.len() {
                                grad[i] -= self.scale * res * s_y[(r, i)];
                            }
                        }
                    }
                    Err(e) => failure = Some(e),
                }
            },
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((self.scale * 0.5 * sum_sq, grad))
    }

    /// Projection onto the feasible set: boxes everywhere, and the weight
    /// block additionally restricted to its simplex slice.
    pub fn project(&self, theta: &mut [f64]) -> Result<()> {
        let layout = self.layout();
        self.bounds.validate(layout)?;
        for i in 0..theta.len() {
            theta[i] = theta[i].clamp(self.bounds.lower[i], self.bounds.upper[i]);
        }
        let c_range = layout.c_range();
        let lo = &self.bounds.lower[c_range.clone()];
        let hi = &self.bounds.upper[c_range.clone()];
        optimize::project_box_simplex(&mut theta[c_range], lo, hi, 1.0)
    }

    /// Solve the projected NLP from the (projected) initial guess.
    pub fn solve(&self) -> Result<EstimationResult> {
        let layout = self.layout();
        self.bounds.validate(layout)?;
        let mut theta0 = self.theta0.clone();
        self.project(&mut theta0)?;

        let feasible = Projector { problem: self };
        let options = PqnOptions {
            memory: self.lbfgs_memory,
            max_iter: self.max_iter,
            opt_tol: self.opt_tol,
            ..Default::default()
        };
        let outcome: PqnResult = minimize(
            &theta0,
            &feasible,
            |theta| self.objective(theta).ok().map(|o| o.value),
            |theta| self.objective_with_gradient(theta).ok(),
            &options,
        )?;

        let fitted = self.objective(&outcome.x)?;
        let (p, c, a, x0) = self.split_theta(&outcome.x);
        let mixture = ErlangMixture::normalized(a, c.to_vec())?;
        let times = self.measurements.times().to_vec();
        Ok(EstimationResult {
            theta: outcome.x.clone(),
            p: p.to_vec(),
            x0: x0.to_vec(),
            mixture,
            objective: outcome.value,
            pg_norm: outcome.pg_norm,
            iterations: outcome.iterations,
            termination: outcome.termination,
            log: outcome.log,
            fitted: MeasurementSeries::new(times, fitted.predicted)?,
        })
    }
}

struct Projector<'a, 'b> {
    problem: &'b EstimationProblem<'a>,
}

impl Feasible for Projector<'_, '_> {
    fn project(&self, x: &mut [f64]) {
        self.problem
            .project(x)
            .expect("bounds were validated before solving");
    }

    /// Two-metric reduction: zero the gradient on bound-blocked components
    /// and project the weight block onto the tangent of its simplex slice,
    /// so the quasi-Newton direction is built in the locally free subspace.
    fn reduced_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let layout = self.problem.layout();
        let lower = &self.problem.bounds.lower;
        let upper = &self.problem.bounds.upper;
        let eps = |v: f64| 1e-10 * v.abs().max(1.0);
        let blocked = |i: usize, slope: f64| {
            (x[i] <= lower[i] + eps(x[i]) && slope > 0.0)
                || (x[i] >= upper[i] - eps(x[i]) && slope < 0.0)
        };

        let mut rg = g.to_vec();
        for i in 0..rg.len() {
            if layout.c_range().contains(&i) {
                continue;
            }
            if blocked(i, g[i]) {
                rg[i] = 0.0;
            }
        }
        // weight block: alternate tangent projection (subtract the mean over
        // the free weights) with bound blocking until the free set settles
        let c_range = layout.c_range();
        let mut free: Vec<usize> = c_range.clone().collect();
        for _ in 0..1 + layout.n_c() {
            if free.is_empty() {
                break;
            }
            let mean: f64 = free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64;
            let still_free: Vec<usize> = free
                .iter()
                .copied()
                .filter(|&i| !blocked(i, g[i] - mean))
                .collect();
            if still_free.len() == free.len() {
                break;
            }
            free = still_free;
        }
        for i in c_range {
            rg[i] = 0.0;
        }
        if !free.is_empty() {
            let mean: f64 = free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64;
            for &i in &free {
                rg[i] = g[i] - mean;
            }
        }
        rg
    }
}

/// Objective value with the predicted measurements.
pub struct ObjectiveValue {
    pub value: f64,
    pub predicted: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub x0: Vec<f64>,
    pub mixture: ErlangMixture,
    pub objective: f64,
    pub pg_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub log: Vec<IterRecord>,
    /// Predicted measurements at the sample times for the returned estimate.
    pub fitted: MeasurementSeries,
}

/// Solve several problems (an M-sweep); under the `parallel` feature the
/// solves run on the rayon pool, in input order either way.
pub fn solve_sweep(problems: &[EstimationProblem<'_>]) -> Vec<Result<EstimationResult>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        problems.par_iter().map(|p| p.solve()).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        problems.iter().map(|p| p.solve()).collect()
    }
}

/// Kernel recovery metrics against a known true kernel.
#[derive(Debug, Clone)]
pub struct KernelErrorReport {
    /// Largest absolute PDF difference on the grid; absent for point delays.
    pub max_abs: Option<f64>,
    /// L2 norm of the PDF difference on the grid; absent for point delays.
    pub l2: Option<f64>,
    pub mean_estimated: f64,
    pub mean_true: f64,
    pub mean_abs_error: f64,
}

pub fn kernel_error_report(
    estimated: &ErlangMixture,
    true_kernel: &Kernel,
    grid: &[f64],
) -> KernelErrorReport {
    let mean_estimated = estimated.mean();
    let mean_true = true_kernel.mean();
    let (max_abs, l2) = match true_kernel {
        Kernel::Point(_) => (None, None),
        _ => {
            let est = estimated.pdf_grid(grid);
            let truth: Vec<f64> = grid
                .iter()
                .map(|&t| true_kernel.pdf(t).expect("non-point kernel has a density"))
                .collect();
            let mut max_abs = 0.0_f64;
            let mut sq = 0.0;
            for (k, (e, t)) in est.iter().zip(&truth).enumerate() {
                let d = (e - t).abs();
                max_abs = max_abs.max(d);
                let w = if k == 0 || k == grid.len() - 1 {
                    0.5
                } else {
                    1.0
                };
                let dx = if grid.len() > 1 {
                    grid[1] - grid[0]
                } else {
                    1.0
                };
                sq += w * d * d * dx;
            }
            (Some(max_abs), Some(sq.sqrt()))
        }
    };
    KernelErrorReport {
        max_abs,
        l2,
        mean_estimated,
        mean_true,
        mean_abs_error: (mean_estimated - mean_true).abs(),
    }
}
