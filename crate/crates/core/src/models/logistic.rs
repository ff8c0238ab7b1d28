//! Delayed logistic growth with a time-varying carrying capacity.
//!
//! ```text
//! dN/dt = kappa N(t) (1 - Ntilde(t) / K(t))
//! K(t)  = (1 + A1 sin(2 pi w1 t) + A2 sin(2 pi w2 t)) Kbar
//! ```
//!
//! where `Ntilde` is the delayed population density. The growth rate `kappa`
//! is the single estimated model parameter; times are in months.

use std::f64::consts::TAU;

use crate::error::Result;
use crate::linalg::Mat;
use crate::model::{Dims, Model};

#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub a1: f64,
    pub a2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub k_bar: f64,
}

impl Default for LogisticModel {
    fn default() -> Self {
        LogisticModel {
            a1: 0.01,
            a2: 0.005,
            omega1: 1.0 / 12.0,
            omega2: 1.0,
            k_bar: 1.0,
        }
    }
}

impl LogisticModel {
    /// Constant carrying capacity K(t) = k_bar.
    pub fn with_constant_capacity(k_bar: f64) -> Self {
        LogisticModel {
            a1: 0.0,
            a2: 0.0,
            omega1: 0.0,
            omega2: 0.0,
            k_bar,
        }
    }

    pub fn capacity(&self, t: f64) -> f64 {
        (1.0 + self.a1 * (TAU * self.omega1 * t).sin() + self.a2 * (TAU * self.omega2 * t).sin())
            * self.k_bar
    }

    /// Growth rate from the reference parameter set.
    pub fn nominal_growth_rate() -> f64 {
        4.0
    }

    /// Initial density from the reference parameter set.
    pub fn nominal_initial_density() -> f64 {
        0.9
    }
}

impl Model for LogisticModel {
    fn dims(&self) -> Dims {
        Dims {
            n_x: 1,
            n_z: 1,
            n_y: 1,
            n_p: 1,
        }
    }

    fn f(&self, t: f64, x: &[f64], z: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = p[0] * x[0] * (1.0 - z[0] / self.capacity(t));
    }

    fn h(&self, _t: f64, x: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = x[0];
    }

    fn g(&self, _t: f64, x: &[f64], _p: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = x[0];
        Ok(())
    }

    fn f_x(&self, t: f64, _x: &[f64], z: &[f64], p: &[f64], out: &mut Mat) {
        out[(0, 0)] = p[0] * (1.0 - z[0] / self.capacity(t));
    }

    fn f_z(&self, t: f64, x: &[f64], _z: &[f64], p: &[f64], out: &mut Mat) {
        out[(0, 0)] = -p[0] * x[0] / self.capacity(t);
    }

    fn f_p(&self, t: f64, x: &[f64], z: &[f64], _p: &[f64], out: &mut Mat) {
        out[(0, 0)] = x[0] * (1.0 - z[0] / self.capacity(t));
    }

    fn h_x(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) {
        out[(0, 0)] = 1.0;
    }

    fn h_p(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) {
        out[(0, 0)] = 0.0;
    }

    fn g_x(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) -> Result<()> {
        out[(0, 0)] = 1.0;
        Ok(())
    }

    fn g_p(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) -> Result<()> {
        out[(0, 0)] = 0.0;
        Ok(())
    }

    fn param_names(&self) -> Vec<String> {
        vec!["kappa".into()]
    }

    fn state_names(&self) -> Vec<String> {
        vec!["N".into()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_jacobians;

    #[test]
    fn extinction_is_a_fixed_point() {
        let m = LogisticModel::default();
        let mut out = [f64::NAN];
        m.f(3.7, &[0.0], &[0.4], &[4.0], &mut out);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn carrying_capacity_equilibrium() {
        let m = LogisticModel::with_constant_capacity(1.0);
        let mut out = [f64::NAN];
        m.f(11.0, &[1.0], &[1.0], &[4.0], &mut out);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn growth_at_reference_point() {
        // K(0) = Kbar = 1 because sin(0) = 0
        let m = LogisticModel::default();
        let mut out = [f64::NAN];
        m.f(0.0, &[0.9], &[0.9], &[4.0], &mut out);
        assert!((out[0] - 0.36).abs() < 1e-15);
    }

    #[test]
    fn capacity_stays_positive() {
        let m = LogisticModel::default();
        for i in 0..2400 {
            let t = i as f64 * 0.01;
            assert!(m.capacity(t) > 0.9);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let m = LogisticModel::default();
        let report = check_jacobians(&m, 0.4, &[0.9], &[0.85], &[4.0], 1e-5).unwrap();
        assert!(report.pass(), "max error {}", report.max_error());
    }
}
