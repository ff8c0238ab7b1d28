//! Point reactor kinetics of a molten salt reactor with external fuel
//! circulation and temperature reactivity feedback.
//!
//! States are the six delayed neutron precursor group concentrations, the
//! neutron concentration, and the reactivity:
//!
//! ```text
//! dC_i/dt = (delta_i Ctilde_i - C_i) / tau_c + beta_i C_n / Lambda - lambda_i C_i
//! dC_n/dt = sum_i lambda_i C_i + (rho - beta) C_n / Lambda
//! drho/dt = -kappa H C_n
//! ```
//!
//! The delayed quantities `Ctilde_i` are the kernel-weighted precursor
//! histories; `delta_i = exp(-lambda_i tau_ell)` accounts for decay during
//! the average external residence time. Concentrations span several orders
//! of magnitude, so measurements are logarithmic; the reactivity is not
//! measured. The reactivity proportionality `kappa` is the estimated model
//! parameter.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{Dims, Model};

pub const GROUPS: usize = 6;

#[derive(Debug, Clone)]
pub struct ReactorModel {
    /// Precursor decay constants [1/s].
    pub lambda: [f64; GROUPS],
    /// Delayed neutron fractions per group.
    pub beta_i: [f64; GROUPS],
    /// Total delayed neutron fraction.
    pub beta: f64,
    /// Mean neutron generation time [s].
    pub generation_time: f64,
    /// Power-to-heat-capacity ratio H [K cm^3 / s].
    pub heat_ratio: f64,
    /// Fuel residence time in the core [s]; the dilution rate is its inverse.
    pub tau_core: f64,
    /// Average time spent outside the core [s].
    pub tau_loop: f64,
}

impl Default for ReactorModel {
    fn default() -> Self {
        ReactorModel {
            lambda: [0.0124, 0.0305, 0.1110, 0.3010, 1.1300, 3.0000],
            beta_i: [0.00021, 0.00141, 0.00127, 0.00255, 0.00074, 0.00027],
            beta: 0.0065,
            generation_time: 5e-5,
            heat_ratio: 0.05,
            tau_core: 0.5,
            tau_loop: 3.5,
        }
    }
}

impl ReactorModel {
    /// Decay factor over the external loop, per group.
    pub fn decay_factors(&self) -> [f64; GROUPS] {
        let mut d = [0.0; GROUPS];
        for i in 0..GROUPS {
            d[i] = (-self.lambda[i] * self.tau_loop).exp();
        }
        d
    }

    /// Reactivity proportionality constant from the reference parameter set [1/K].
    pub fn nominal_kappa() -> f64 {
        5e-5
    }

    /// Reference initial state: unit concentrations, reactivity 1.5 beta.
    pub fn nominal_x0(&self) -> Vec<f64> {
        let mut x0 = vec![1.0; GROUPS + 1];
        x0.push(1.5 * self.beta);
        x0
    }
}

impl Model for ReactorModel {
    fn dims(&self) -> Dims {
        Dims {
            n_x: GROUPS + 2,
            n_z: GROUPS,
            n_y: GROUPS + 1,
            n_p: 1,
        }
    }

    fn f(&self, _t: f64, x: &[f64], z: &[f64], p: &[f64], out: &mut [f64]) {
        let delta = self.decay_factors();
        let c_n = x[GROUPS];
        let rho = x[GROUPS + 1];
        let dilution = 1.0 / self.tau_core;
        let mut emission = 0.0;
        for i in 0..GROUPS {
            out[i] = (delta[i] * z[i] - x[i]) * dilution
                + self.beta_i[i] * c_n / self.generation_time
                - self.lambda[i] * x[i];
            emission += self.lambda[i] * x[i];
        }
        out[GROUPS] = emission + (rho - self.beta) * c_n / self.generation_time;
        out[GROUPS + 1] = -p[0] * self.heat_ratio * c_n;
    }

    fn h(&self, _t: f64, x: &[f64], _p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&x[..GROUPS]);
    }

    fn g(&self, _t: f64, x: &[f64], _p: &[f64], out: &mut [f64]) -> Result<()> {
        for i in 0..=GROUPS {
            if x[i] <= 0.0 {
                return Err(Error::Domain(format!(
                    "log measurement of nonpositive concentration {} at index {i}",
                    x[i]
                )));
            }
            out[i] = x[i].ln();
        }
        Ok(())
    }

    fn f_x(&self, _t: f64, x: &[f64], _z: &[f64], p: &[f64], out: &mut Mat) {
        out.fill(0.0);
        let c_n = x[GROUPS];
        let rho = x[GROUPS + 1];
        let dilution = 1.0 / self.tau_core;
        for i in 0..GROUPS {
            out[(i, i)] = -dilution - self.lambda[i];
            out[(i, GROUPS)] = self.beta_i[i] / self.generation_time;
            out[(GROUPS, i)] = self.lambda[i];
        }
        out[(GROUPS, GROUPS)] = (rho - self.beta) / self.generation_time;
        out[(GROUPS, GROUPS + 1)] = c_n / self.generation_time;
        out[(GROUPS + 1, GROUPS)] = -p[0] * self.heat_ratio;
    }

    fn f_z(&self, _t: f64, _x: &[f64], _z: &[f64], _p: &[f64], out: &mut Mat) {
        out.fill(0.0);
        let delta = self.decay_factors();
        let dilution = 1.0 / self.tau_core;
        for i in 0..GROUPS {
            out[(i, i)] = delta[i] * dilution;
        }
    }

    fn f_p(&self, _t: f64, x: &[f64], _z: &[f64], _p: &[f64], out: &mut Mat) {
        out.fill(0.0);
        out[(GROUPS + 1, 0)] = -self.heat_ratio * x[GROUPS];
    }

    fn h_x(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) {
        out.fill(0.0);
        for i in 0..GROUPS {
            out[(i, i)] = 1.0;
        }
    }

    fn h_p(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) {
        out.fill(0.0);
    }

    fn g_x(&self, _t: f64, x: &[f64], _p: &[f64], out: &mut Mat) -> Result<()> {
        out.fill(0.0);
        for i in 0..=GROUPS {
            if x[i] <= 0.0 {
                return Err(Error::Domain(format!(
                    "log measurement of nonpositive concentration {} at index {i}",
                    x[i]
                )));
            }
            out[(i, i)] = 1.0 / x[i];
        }
        Ok(())
    }

    fn g_p(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }

    fn param_names(&self) -> Vec<String> {
        vec!["kappa".into()]
    }

    fn state_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=GROUPS).map(|i| format!("C_{i}")).collect();
        names.push("C_n".into());
        names.push("rho".into());
        names
    }
}
