//! Linear validation model `dx/dt = -x + z`, `h = g = identity`.
//!
//! The augmented system stays linear for any mixture kernel, so trajectories
//! and their parameter derivatives have matrix-exponential closed forms.

use crate::error::Result;
use crate::linalg::Mat;
use crate::model::{Dims, Model};

#[derive(Debug, Clone)]
pub struct LinearModel {
    pub n: usize,
}

impl LinearModel {
    pub fn new(n: usize) -> Self {
        LinearModel { n }
    }
}

impl Model for LinearModel {
    fn dims(&self) -> Dims {
        Dims {
            n_x: self.n,
            n_z: self.n,
            n_y: self.n,
            n_p: 0,
        }
    }

    fn f(&self, _t: f64, x: &[f64], z: &[f64], _p: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = -x[i] + z[i];
        }
    }

    fn h(&self, _t: f64, x: &[f64], _p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn g(&self, _t: f64, x: &[f64], _p: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(x);
        Ok(())
    }

    fn f_x(&self, _t: f64, _x: &[f64], _z: &[f64], _p: &[f64], out: &mut Mat) {
        out.fill(0.0);
        for i in 0..self.n {
            out[(i, i)] = -1.0;
        }
    }

    fn f_z(&self, _t: f64, _x: &[f64], _z: &[f64], _p: &[f64], out: &mut Mat) {
        out.fill(0.0);
        for i in 0..self.n {
            out[(i, i)] = 1.0;
        }
    }

    fn f_p(&self, _t: f64, _x: &[f64], _z: &[f64], _p: &[f64], out: &mut Mat) {
        out.fill(0.0);
    }

    fn h_x(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) {
        out.fill(0.0);
        for i in 0..self.n {
            out[(i, i)] = 1.0;
        }
    }

    fn h_p(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) {
        out.fill(0.0);
    }

    fn g_x(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) -> Result<()> {
        out.fill(0.0);
        for i in 0..self.n {
            out[(i, i)] = 1.0;
        }
        Ok(())
    }

    fn g_p(&self, _t: f64, _x: &[f64], _p: &[f64], out: &mut Mat) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }

    fn state_names(&self) -> Vec<String> {
        (0..self.n).map(|i| format!("x_{i}")).collect()
    }
}
