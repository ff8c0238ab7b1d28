//! Experiment configuration: JSON schema, validation, and construction of
//! core objects from it.

use anyhow::{bail, Context};
use delayid::kernels::Kernel;
use delayid::model::ThetaLayout;
use delayid::models::{LinearModel, LogisticModel, ReactorModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelChoice,
    /// True kernel used for data generation.
    pub kernel: Kernel,
    pub data: DataConfig,
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub validate: ValidateConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelChoice {
    Logistic(LogisticParams),
    Reactor(ReactorParams),
    Linear { n: usize },
}

/// Logistic model constants; defaults are the reference parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub a1: f64,
    pub a2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub k_bar: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        let m = LogisticModel::default();
        LogisticParams {
            a1: m.a1,
            a2: m.a2,
            omega1: m.omega1,
            omega2: m.omega2,
            k_bar: m.k_bar,
        }
    }
}

/// Reactor model constants; defaults are the reference parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactorParams {
    pub lambda: [f64; 6],
    pub beta_i: [f64; 6],
    pub beta: f64,
    pub generation_time: f64,
    pub heat_ratio: f64,
    pub tau_core: f64,
    pub tau_loop: f64,
}

impl Default for ReactorParams {
    fn default() -> Self {
        let m = ReactorModel::default();
        ReactorParams {
            lambda: m.lambda,
            beta_i: m.beta_i,
            beta: m.beta,
            generation_time: m.generation_time,
            heat_ratio: m.heat_ratio,
            tau_core: m.tau_core,
            tau_loop: m.tau_loop,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    /// Simulation step of the reference simulator.
    pub dt: f64,
    /// Memory horizon in steps (so it is an exact multiple of dt).
    pub horizon_steps: usize,
    pub n_steps: usize,
    /// Measurements every this many steps, including step 0.
    pub sample_stride: usize,
    #[serde(default)]
    pub t0: f64,
    pub true_p: Vec<f64>,
    pub true_x0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationConfig {
    /// Kernel orders M to estimate, swept in sequence.
    pub orders: Vec<usize>,
    pub scale: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
    pub ivp_tol: f64,
    /// When set, integrate shooting problems with this fixed step instead of
    /// adaptive stepping (smooth objective, predictable cost).
    #[serde(default)]
    pub ivp_fixed_step: Option<f64>,
    pub guess: GuessConfig,
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub kernel_grid_max: Option<f64>,
    #[serde(default = "default_grid_points")]
    pub kernel_grid_points: usize,
}

fn default_grid_points() -> usize {
    400
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuessConfig {
    pub a: f64,
    /// "uniform" (1/(M+1) each), "top" (all weight on the highest order), or
    /// an explicit weight vector of length M+1.
    pub c: WeightGuess,
    pub p: Vec<f64>,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightGuess {
    Named(String),
    Explicit(Vec<f64>),
}

/// Bound pairs use `null` for an unbounded side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub a_min: f64,
    #[serde(default)]
    pub p: Vec<(Option<f64>, Option<f64>)>,
    #[serde(default)]
    pub x0: Vec<(Option<f64>, Option<f64>)>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Additive Gaussian standard deviation per measurement channel.
    #[serde(default)]
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateConfig {
    pub grad_tol: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { grad_tol: 1e-4 }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).context("parsing experiment config")?;
        config.validated()
    }

    pub fn validated(self) -> anyhow::Result<Self> {
        let dims = self.build_model().dims();
        if let Err(e) = self.kernel.validate() {
            bail!("kernel: {e}");
        }
        if !(self.data.dt > 0.0) {
            bail!("data.dt: must be positive");
        }
        if self.data.n_steps == 0 {
            bail!("data.n_steps: simulation window must not be empty");
        }
        if self.data.horizon_steps == 0 {
            bail!("data.horizon_steps: must be positive");
        }
        if self.data.sample_stride == 0 || self.data.n_steps % self.data.sample_stride != 0 {
            bail!("data.sample_stride: must divide data.n_steps");
        }
        if self.data.true_p.len() != dims.n_p {
            bail!(
                "data.true_p: expected {} parameter(s), got {}",
                dims.n_p,
                self.data.true_p.len()
            );
        }
        if self.data.true_x0.len() != dims.n_x {
            bail!(
                "data.true_x0: expected {} state(s), got {}",
                dims.n_x,
                self.data.true_x0.len()
            );
        }
        if self.estimation.orders.is_empty() {
            bail!("estimation.orders: need at least one kernel order");
        }
        if !(self.estimation.scale > 0.0) {
            bail!("estimation.scale: must be positive");
        }
        if !(self.estimation.opt_tol > 0.0) {
            bail!("estimation.opt_tol: must be positive");
        }
        if !(self.estimation.ivp_tol > 0.0) {
            bail!("estimation.ivp_tol: must be positive");
        }
        if let Some(h) = self.estimation.ivp_fixed_step {
            if !(h > 0.0) {
                bail!("estimation.ivp_fixed_step: must be positive");
            }
        }
        if !(self.estimation.bounds.a_min > 0.0) {
            bail!("estimation.bounds.a_min: the rate needs a positive lower bound");
        }
        if self.estimation.guess.p.len() != dims.n_p {
            bail!("estimation.guess.p: expected {} parameter(s)", dims.n_p);
        }
        if self.estimation.guess.x0.len() != dims.n_x {
            bail!("estimation.guess.x0: expected {} state(s)", dims.n_x);
        }
        if let WeightGuess::Named(name) = &self.estimation.guess.c {
            if name != "uniform" && name != "top" {
                bail!("estimation.guess.c: unknown weight guess {name:?}");
            }
        }
        if !self.estimation.bounds.p.is_empty() && self.estimation.bounds.p.len() != dims.n_p {
            bail!("estimation.bounds.p: expected {} pair(s)", dims.n_p);
        }
        if !self.estimation.bounds.x0.is_empty() && self.estimation.bounds.x0.len() != dims.n_x {
            bail!("estimation.bounds.x0: expected {} pair(s)", dims.n_x);
        }
        if !self.noise.std.is_empty() && self.noise.std.len() != dims.n_y {
            bail!(
                "noise.std: expected {} channel(s), got {}",
                dims.n_y,
                self.noise.std.len()
            );
        }
        if self.noise.std.iter().any(|s| *s < 0.0) {
            bail!("noise.std: standard deviations must be nonnegative");
        }
        Ok(self)
    }

    pub fn build_model(&self) -> Box<dyn delayid::model::Model> {
        match &self.model {
            ModelChoice::Logistic(p) => Box::new(LogisticModel {
                a1: p.a1,
                a2: p.a2,
                omega1: p.omega1,
                omega2: p.omega2,
                k_bar: p.k_bar,
            }),
            ModelChoice::Reactor(p) => Box::new(ReactorModel {
                lambda: p.lambda,
                beta_i: p.beta_i,
                beta: p.beta,
                generation_time: p.generation_time,
                heat_ratio: p.heat_ratio,
                tau_core: p.tau_core,
                tau_loop: p.tau_loop,
            }),
            ModelChoice::Linear { n } => Box::new(LinearModel::new(*n)),
        }
    }

    /// Initial decision vector for one kernel order.
    pub fn initial_theta(&self, order: usize) -> Vec<f64> {
        let guess = &self.estimation.guess;
        let mut theta = guess.p.clone();
        match &guess.c {
            WeightGuess::Named(name) if name == "top" => {
                theta.extend(std::iter::repeat(1e-8).take(order));
                theta.push(1.0);
            }
            WeightGuess::Named(_) => {
                theta.extend(std::iter::repeat(1.0 / (order as f64 + 1.0)).take(order + 1));
            }
            WeightGuess::Explicit(c) => {
                for m in 0..=order {
                    theta.push(c.get(m).copied().unwrap_or(0.0));
                }
            }
        }
        theta.push(guess.a);
        theta.extend_from_slice(&guess.x0);
        theta
    }

    /// Bounds for one kernel order: weights in [0, inf), the rate floored at
    /// `a_min`, and the configured boxes elsewhere.
    pub fn bounds_for(&self, order: usize, layout: ThetaLayout) -> delayid::estimator::ThetaBounds {
        let mut bounds = delayid::estimator::ThetaBounds::unbounded(layout);
        for (k, pair) in self.estimation.bounds.p.iter().enumerate() {
            bounds.lower[k] = pair.0.unwrap_or(f64::NEG_INFINITY);
            bounds.upper[k] = pair.1.unwrap_or(f64::INFINITY);
        }
        for i in layout.c_range() {
            bounds.lower[i] = 0.0;
        }
        bounds.lower[layout.a_index()] = self.estimation.bounds.a_min;
        let x0_start = layout.x0_range().start;
        for (k, pair) in self.estimation.bounds.x0.iter().enumerate() {
            bounds.lower[x0_start + k] = pair.0.unwrap_or(f64::NEG_INFINITY);
            bounds.upper[x0_start + k] = pair.1.unwrap_or(f64::INFINITY);
        }
        let _ = order;
        bounds
    }

    pub fn sim_config(&self) -> delayid::ddesim::DdeSimConfig {
        delayid::ddesim::DdeSimConfig::new(
            self.data.dt,
            self.data.horizon_steps as f64 * self.data.dt,
        )
    }

    pub fn n_samples(&self) -> usize {
        self.data.n_steps / self.data.sample_stride + 1
    }
}
