//! Forward sensitivities of the augmented system.
//!
//! For each decision-vector component the sensitivity column
//! `S_i = [S_x_i; S_Z_i]` obeys the variational equations
//!
//! ```text
//! dS_x_i/dt = f_x S_x_i + f_z S_z_i + df/dtheta_i
//! dS_Z_i/dt = (dA/dtheta_i) Z + A S_Z_i + (dB/dtheta_i) rhat + B S_r_i
//! S_z_i     = (dC/dtheta_i) Z + C S_Z_i
//! S_r_i     = h_x S_x_i + dh/dtheta_i
//! ```
//!
//! A, B, C are linear in the kernel parameters, so their derivatives are the
//! constant structural matrices: only `dC/dc_m` (a block selector) and
//! `dA/da`, `dB/da` (the unit-rate chain) survive. The columns share the
//! state's Jacobian blocks, so the combined state-plus-sensitivity system
//! reuses one chain factorization per Newton matrix, applied blockwise.
//! Columns are independent given the state and are evaluated in parallel
//! under the `parallel` feature; results are bitwise identical either way
//! because every column writes only its own slice.

use crate::error::{Error, Result};
use crate::exec;
use crate::ivp::{ImplicitOde, NewtonFactor};
use crate::lct::{steady_state_z0, AugmentedSystem, ChainFactor};
use crate::linalg::Mat;
use crate::model::ThetaLayout;

/// Which decision component a sensitivity column tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Component {
    Param(usize),
    Weight(usize),
    Rate,
    Initial(usize),
}

/// The augmented system together with all its sensitivity columns, packed as
/// `[state | S_1 | ... | S_n_theta]`.
pub struct SensitivitySystem<'a> {
    aug: AugmentedSystem<'a>,
    layout: ThetaLayout,
    components: Vec<Component>,
}

impl<'a> SensitivitySystem<'a> {
    pub fn new(aug: AugmentedSystem<'a>, layout: ThetaLayout) -> Result<Self> {
        let dims = aug.model().dims();
        if layout.n_p != dims.n_p || layout.n_x != dims.n_x {
            return Err(Error::Dimension(
                "theta layout does not match the model dimensions".into(),
            ));
        }
        if layout.order != aug.lct().order() {
            return Err(Error::Dimension(
                "theta layout order does not match the kernel order".into(),
            ));
        }
        let mut components = Vec::with_capacity(layout.len());
        for i in 0..layout.n_p {
            components.push(Component::Param(i));
        }
        for m in 0..layout.n_c() {
            components.push(Component::Weight(m));
        }
        components.push(Component::Rate);
        for j in 0..layout.n_x {
            components.push(Component::Initial(j));
        }
        Ok(SensitivitySystem {
            aug,
            layout,
            components,
        })
    }

    pub fn augmented(&self) -> &AugmentedSystem<'a> {
        &self.aug
    }

    pub fn layout(&self) -> ThetaLayout {
        self.layout
    }

    pub fn n_aug(&self) -> usize {
        self.aug.dim()
    }

    pub fn n_theta(&self) -> usize {
        self.layout.len()
    }

    /// Combined initial state: steady-state chain plus the initial
    /// sensitivities. `S_x` starts as identity columns for the initial-state
    /// block and zero otherwise; `S_Z` starts as stacked `h_x` / `h_p`
    /// columns; the kernel-parameter columns start exactly at zero because
    /// the steady-state chain initializer does not depend on them.
    pub fn initial_state(&self, t0: f64, x0: &[f64]) -> Vec<f64> {
        let n_aug = self.n_aug();
        let n_x = self.aug.n_x();
        let n_z = self.aug.n_z();
        let model = self.aug.model();
        let p = self.aug.params();
        let order = self.layout.order;

        let mut y = Vec::with_capacity(n_aug * (1 + self.n_theta()));
        y.extend_from_slice(x0);
        y.extend(steady_state_z0(model, t0, x0, p, order));

        let mut h_x = Mat::zeros(n_z, n_x);
        model.h_x(t0, x0, p, &mut h_x);
        let mut h_p = Mat::zeros(n_z, model.dims().n_p);
        model.h_p(t0, x0, p, &mut h_p);

        for comp in &self.components {
            let mut col = vec![0.0; n_aug];
            match comp {
                Component::Param(ip) => {
                    for m in 0..=order {
                        for i in 0..n_z {
                            col[n_x + m * n_z + i] = h_p[(i, *ip)];
                        }
                    }
                }
                Component::Weight(_) | Component::Rate => {}
                Component::Initial(j) => {
                    col[*j] = 1.0;
                    for m in 0..=order {
                        for i in 0..n_z {
                            col[n_x + m * n_z + i] = h_x[(i, *j)];
                        }
                    }
                }
            }
            y.extend(col);
        }
        y
    }

    fn rhs_impl(&self, t: f64, y: &[f64], dy: &mut [f64], parallel: Option<bool>) -> Result<()> {
        let n_aug = self.n_aug();
        let n_x = self.aug.n_x();
        let n_z = self.aug.n_z();
        let n_p = self.layout.n_p;
        let model = self.aug.model();
        let p = self.aug.params();
        let lct = self.aug.lct();
        let a = lct.rate();

        let state = &y[..n_aug];
        let x = &state[..n_x];
        let chain = &state[n_x..];
        let zeff = self.aug.effective_z(state);
        let mut rhat = vec![0.0; n_z];
        model.h(t, x, p, &mut rhat);

        // state block
        model.f(t, x, &zeff, p, &mut dy[..n_x]);
        lct.apply_a(chain, &mut dy[n_x..n_aug]);
        lct.apply_b_add(&rhat, &mut dy[n_x..n_aug]);

        // shared Jacobian blocks
        let mut f_x = Mat::zeros(n_x, n_x);
        model.f_x(t, x, &zeff, p, &mut f_x);
        let mut f_z = Mat::zeros(n_x, n_z);
        model.f_z(t, x, &zeff, p, &mut f_z);
        let mut f_p = Mat::zeros(n_x, n_p);
        model.f_p(t, x, &zeff, p, &mut f_p);
        let mut h_x = Mat::zeros(n_z, n_x);
        model.h_x(t, x, p, &mut h_x);
        let mut h_p = Mat::zeros(n_z, n_p);
        model.h_p(t, x, p, &mut h_p);

        let components = &self.components;
        let column = |i: usize, out: &mut [f64]| {
            let comp = components[i];
            let s = &y[n_aug * (1 + i)..n_aug * (2 + i)];
            let s_x = &s[..n_x];
            let s_chain = &s[n_x..];

            // S_z = C S_Z (+ Z_m for a weight component)
            let mut s_z = vec![0.0; n_z];
            lct.apply_c(s_chain, &mut s_z);
            if let Component::Weight(m) = comp {
                for i in 0..n_z {
                    s_z[i] += chain[m * n_z + i];
                }
            }

            // dS_x = f_x S_x + f_z S_z (+ f_p column)
            for r in 0..n_x {
                let mut acc = 0.0;
                for j in 0..n_x {
                    acc += f_x[(r, j)] * s_x[j];
                }
                for j in 0..n_z {
                    acc += f_z[(r, j)] * s_z[j];
                }
                if let Component::Param(ip) = comp {
                    acc += f_p[(r, ip)];
                }
                out[r] = acc;
            }

            // S_r = h_x S_x (+ h_p column)
            let mut s_r = vec![0.0; n_z];
            for r in 0..n_z {
                let mut acc = 0.0;
                for j in 0..n_x {
                    acc += h_x[(r, j)] * s_x[j];
                }
                if let Component::Param(ip) = comp {
                    acc += h_p[(r, ip)];
                }
                s_r[r] = acc;
            }

            // dS_Z = A S_Z + B S_r (+ rate terms)
            lct.apply_a(s_chain, &mut out[n_x..]);
            for i in 0..n_z {
                out[n_x + i] += a * s_r[i];
            }
            if comp == Component::Rate {
                // (dA/da) Z + (dB/da) rhat: the unit-rate chain applied to Z
                // plus rhat entering the first block
                for i in 0..n_z {
                    out[n_x + i] += rhat[i] - chain[i];
                }
                for m in 1..=self.layout.order {
                    for i in 0..n_z {
                        out[n_x + m * n_z + i] += chain[(m - 1) * n_z + i] - chain[m * n_z + i];
                    }
                }
            }
        };

        let sens_out = &mut dy[n_aug..];
        match parallel {
            Some(false) => exec::for_chunks_mut_seq(sens_out, n_aug, column),
            #[cfg(feature = "parallel")]
            Some(true) => exec::for_chunks_mut_par(sens_out, n_aug, column),
            #[cfg(not(feature = "parallel"))]
            Some(true) => exec::for_chunks_mut_seq(sens_out, n_aug, column),
            None => exec::for_chunks_mut(sens_out, n_aug, column),
        }
        Ok(())
    }

    /// Sequential column evaluation, kept callable for benchmarks.
    pub fn rhs_seq(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.rhs_impl(t, y, dy, Some(false))
    }

    #[cfg(feature = "parallel")]
    pub fn rhs_par(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.rhs_impl(t, y, dy, Some(true))
    }

    /// Predicted measurement and its sensitivity columns at one sample time:
    /// `S_y_i = g_x S_x_i + dg/dtheta_i`, the direct term being nonzero only
    /// for model-parameter components.
    pub fn measurement_sensitivities(&self, t: f64, y: &[f64]) -> Result<(Vec<f64>, Mat)> {
        let n_aug = self.n_aug();
        let n_x = self.aug.n_x();
        let model = self.aug.model();
        let p = self.aug.params();
        let n_y = model.dims().n_y;
        let x = &y[..n_x];

        let mut yhat = vec![0.0; n_y];
        model.g(t, x, p, &mut yhat)?;
        let mut g_x = Mat::zeros(n_y, n_x);
        model.g_x(t, x, p, &mut g_x)?;
        let mut g_p = Mat::zeros(n_y, self.layout.n_p);
        model.g_p(t, x, p, &mut g_p)?;

        let mut s_y = Mat::zeros(n_y, self.n_theta());
        for (i, comp) in self.components.iter().enumerate() {
            let s_x = &y[n_aug * (1 + i)..n_aug * (1 + i) + n_x];
            for r in 0..n_y {
                let mut acc = 0.0;
                for j in 0..n_x {
                    acc += g_x[(r, j)] * s_x[j];
                }
                if let Component::Param(ip) = comp {
                    acc += g_p[(r, *ip)];
                }
                s_y[(r, i)] = acc;
            }
        }
        Ok((yhat, s_y))
    }
}

impl ImplicitOde for SensitivitySystem<'_> {
    fn dim(&self) -> usize {
        self.n_aug() * (1 + self.n_theta())
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.rhs_impl(t, y, dy, None)
    }

    fn factor(&self, t: f64, y: &[f64], gamma: f64) -> Result<Box<dyn NewtonFactor + '_>> {
        let core = self.aug.factor_core(t, &y[..self.n_aug()], gamma)?;
        Ok(Box::new(BlockFactor {
            core,
            n_aug: self.n_aug(),
        }))
    }
}

/// One chain factorization applied to the state block and every sensitivity
/// column; the variational equations share the state's Jacobian, and the
/// neglected cross-coupling only affects the Newton iteration path, not the
/// converged stage values.
struct BlockFactor {
    core: ChainFactor,
    n_aug: usize,
}

impl NewtonFactor for BlockFactor {
    fn solve_in_place(&self, v: &mut [f64]) {
        exec::for_chunks_mut(v, self.n_aug, |_, chunk| self.core.solve_block(chunk));
    }
}

/// Gradient of the scaled least-squares objective,
/// `dpsi/dtheta_i = -scale * sum_k (y_k - yhat_k)^T S_y_i(t_k)`.
pub fn objective_gradient(
    residuals: &[Vec<f64>],
    sensitivities: &[Mat],
    scale: f64,
) -> Result<Vec<f64>> {
    if residuals.len() != sensitivities.len() {
        return Err(Error::Dimension(format!(
            "{} residuals but {} sensitivity matrices",
            residuals.len(),
            sensitivities.len()
        )));
    }
    let n_theta = sensitivities.first().map_or(0, |s| s.cols());
    let mut grad = vec![0.0; n_theta];
    for (res, s_y) in residuals.iter().zip(sensitivities) {
        if res.len() != s_y.rows() {
            return Err(Error::Dimension(
                "residual and sensitivity dimensions differ".into(),
            ));
        }
        for i in 0..n_theta {
            let mut acc = 0.0;
            for r in 0..res.len() {
                acc += res[r] * s_y[(r, i)];
            }
            grad[i] -= scale * acc;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ivp::{integrate, IntegratorConfig};
    use crate::models::{LinearModel, LogisticModel, ReactorModel};

    fn logistic_sens(order: usize, a: f64, c: Vec<f64>) -> SensitivitySystem<'static> {
        let model: &'static LogisticModel = Box::leak(Box::new(LogisticModel::default()));
        let aug = AugmentedSystem::new(model, a, c, vec![4.0]).unwrap();
        SensitivitySystem::new(aug, ThetaLayout::new(1, order, 1)).unwrap()
    }

    #[test]
    fn initial_chain_sensitivity_wrt_initial_state() {
        // logistic M = 1: dZ0/dN0 = [1, 1] because h is the identity
        let sys = logistic_sens(1, 10.0, vec![0.5, 0.5]);
        let y = sys.initial_state(0.0, &[0.9]);
        let n_aug = sys.n_aug();
        // theta = [kappa, c0, c1, a, N0]; the N0 column is the last
        let col = &y[n_aug * 5..n_aug * 6];
        assert_eq!(col, &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn initial_kernel_sensitivities_are_zero() {
        let sys = logistic_sens(1, 10.0, vec![0.5, 0.5]);
        let y = sys.initial_state(0.0, &[0.9]);
        let n_aug = sys.n_aug();
        // c0, c1, a columns (indices 1..4) start at exactly zero
        for i in 1..4 {
            let col = &y[n_aug * (1 + i)..n_aug * (2 + i)];
            assert!(col.iter().all(|v| *v == 0.0), "column {i}: {col:?}");
        }
    }

    #[test]
    fn initial_reactor_neutron_column_untouched_by_chain() {
        // h selects C_1..C_6, so dZ0/dC_n0 = 0
        let model = ReactorModel::default();
        let aug = AugmentedSystem::new(&model, 10.0, vec![1.0], vec![5e-5]).unwrap();
        let sys = SensitivitySystem::new(aug, ThetaLayout::new(1, 0, 8)).unwrap();
        let y = sys.initial_state(0.0, &model.nominal_x0());
        let n_aug = sys.n_aug();
        // theta = [kappa, c0, a, C_1..C_6, C_n, rho]; C_n is component index 9
        let col = &y[n_aug * 10..n_aug * 11];
        assert_eq!(col[6], 1.0); // S_x for C_n itself
        assert!(col[8..].iter().all(|v| *v == 0.0)); // chain untouched
    }

    #[test]
    fn initial_state_column_is_homogeneous_variational_equation() {
        // for an x0 component there are no direct terms, so dS/dt = J S
        let model = LinearModel::new(1);
        let aug = AugmentedSystem::new(&model, 3.0, vec![0.4, 0.6], vec![]).unwrap();
        let sys = SensitivitySystem::new(aug, ThetaLayout::new(0, 1, 1)).unwrap();
        let n_aug = sys.n_aug();
        let mut y = vec![0.0; sys.dim()];
        y[..n_aug].copy_from_slice(&[0.7, 0.3, 0.5]);
        // x0 column is the last component (index 3)
        let s = [0.2, -0.1, 0.4];
        y[n_aug * 4..n_aug * 5].copy_from_slice(&s);
        let mut dy = vec![0.0; sys.dim()];
        sys.rhs(0.0, &y, &mut dy).unwrap();
        let jac = sys.augmented().dense_jacobian(0.0, &y[..n_aug]);
        let mut js = vec![0.0; n_aug];
        jac.matvec(&s, &mut js);
        for (got, want) in dy[n_aug * 4..n_aug * 5].iter().zip(&js) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn weight_column_adds_only_block_selection() {
        // for theta_i = c_m with S = 0 the only contribution is
        // f_z Z_m entering dS_x
        let sys = logistic_sens(1, 10.0, vec![0.5, 0.5]);
        let n_aug = sys.n_aug();
        let mut y = vec![0.0; sys.dim()];
        y[..n_aug].copy_from_slice(&[0.9, 0.8, 0.7]);
        let mut dy = vec![0.0; sys.dim()];
        sys.rhs(0.0, &y, &mut dy).unwrap();
        // c0 column (index 1): dS_x = f_z * Z_0, chain part zero
        let kappa = 4.0;
        let f_z = -kappa * 0.9 / 1.0;
        let col = &dy[n_aug * 2..n_aug * 3];
        assert!((col[0] - f_z * 0.8).abs() < 1e-14);
        assert_eq!(&col[1..], &[0.0, 0.0]);
        // c1 column (index 2): dS_x = f_z * Z_1
        let col = &dy[n_aug * 3..n_aug * 4];
        assert!((col[0] - f_z * 0.7).abs() < 1e-14);
    }

    #[test]
    fn rate_column_matches_structural_derivative() {
        let sys = logistic_sens(1, 10.0, vec![0.5, 0.5]);
        let n_aug = sys.n_aug();
        let mut y = vec![0.0; sys.dim()];
        y[..n_aug].copy_from_slice(&[0.9, 0.8, 0.7]);
        let mut dy = vec![0.0; sys.dim()];
        sys.rhs(0.0, &y, &mut dy).unwrap();
        // a column (index 3) with S = 0: (dA/da) Z + (dB/da) rhat
        let col = &dy[n_aug * 4..n_aug * 5];
        assert_eq!(col[0], 0.0);
        assert!((col[1] - (0.9 - 0.8)).abs() < 1e-14);
        assert!((col[2] - (0.8 - 0.7)).abs() < 1e-14);
    }

    #[test]
    fn measurement_sensitivity_identity_model() {
        let sys = logistic_sens(1, 10.0, vec![0.5, 0.5]);
        let y = sys.initial_state(0.0, &[0.9]);
        let (yhat, s_y) = sys.measurement_sensitivities(0.0, &y).unwrap();
        assert_eq!(yhat, vec![0.9]);
        // g = identity: S_y = S_x; only the N0 column is nonzero initially
        assert_eq!(s_y[(0, 4)], 1.0);
        for i in 0..4 {
            assert_eq!(s_y[(0, i)], 0.0);
        }
    }

    #[test]
    fn measurement_sensitivity_log_model() {
        // g = log C: S_y = S_x / C componentwise over the measured states
        let model = ReactorModel::default();
        let aug = AugmentedSystem::new(&model, 10.0, vec![1.0], vec![5e-5]).unwrap();
        let sys = SensitivitySystem::new(aug, ThetaLayout::new(1, 0, 8)).unwrap();
        let n_aug = sys.n_aug();
        let mut y = vec![0.0; sys.dim()];
        let state = [2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 4.0, 0.001];
        y[..8].copy_from_slice(&state);
        // give the kappa column (index 0) a known S_x
        let s_x = [0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 1.2, 0.0];
        y[n_aug..n_aug + 8].copy_from_slice(&s_x);
        let (_, s_y) = sys.measurement_sensitivities(0.0, &y).unwrap();
        assert!((s_y[(0, 0)] - 0.6 / 2.0).abs() < 1e-15);
        assert!((s_y[(6, 0)] - 1.2 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn trajectory_sensitivities_match_finite_differences() {
        // simulate yhat(t_k) for perturbed theta and compare central
        // differences against the integrated sensitivities
        let order = 2;
        let a = 8.0;
        let c = vec![0.3, 0.3, 0.4];
        let model = LogisticModel::default();
        let layout = ThetaLayout::new(1, order, 1);
        let theta: Vec<f64> = [vec![4.0], c.clone(), vec![a], vec![0.9]].concat();
        let samples: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
        let config = IntegratorConfig::with_tol(1e-11);

        let simulate = |theta: &[f64]| -> Vec<f64> {
            let (p, q, x0) = layout.unpack(theta).unwrap();
            let (cw, aw) = q.split_at(layout.n_c());
            let aug = AugmentedSystem::new(&model, aw[0], cw.to_vec(), p.to_vec()).unwrap();
            let y0 = aug.initial_state(0.0, x0);
            let traj =
                integrate(&aug, &y0, 0.0, *samples.last().unwrap(), &samples, &config).unwrap();
            traj.states.iter().map(|s| s[0]).collect()
        };

        // integrated sensitivities
        let aug = AugmentedSystem::new(&model, a, c, vec![4.0]).unwrap();
        let sys = SensitivitySystem::new(aug, layout).unwrap();
        let y0 = sys.initial_state(0.0, &[0.9]);
        let mut sens_rows: Vec<Vec<f64>> = Vec::new();
        integrate(&sys, &y0, 0.0, *samples.last().unwrap(), &samples, &config)
            .unwrap()
            .states
            .iter()
            .for_each(|y| {
                let (_, s_y) = sys.measurement_sensitivities(0.0, y).unwrap();
                sens_rows.push((0..layout.len()).map(|i| s_y[(0, i)]).collect());
            });

        for i in 0..layout.len() {
            let h = 1e-6 * theta[i].abs().max(1.0);
            let mut tp = theta.clone();
            tp[i] += h;
            let hi = simulate(&tp);
            tp[i] = theta[i] - h;
            let lo = simulate(&tp);
            for (k, (yh, yl)) in hi.iter().zip(&lo).enumerate() {
                let fd = (yh - yl) / (2.0 * h);
                let an = sens_rows[k][i];
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(1.0),
                    "component {i} sample {k}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn expm_oracle_linear_model() {
        // fully linear augmented system: y(t) = expm(L t) y0, so the
        // x0-derivatives are expm(L t) columns and the kernel-parameter
        // derivatives come from the block-triangular exponential
        // expm([[L, dL]; [0, L]]).
        let model = LinearModel::new(1);
        let a = 2.0;
        let c = vec![0.3, 0.7];
        let aug = AugmentedSystem::new(&model, a, c.clone(), vec![]).unwrap();
        let layout = ThetaLayout::new(0, 1, 1);
        let sys = SensitivitySystem::new(aug, layout).unwrap();
        let x0 = [0.8];
        let y0 = sys.initial_state(0.0, &x0);
        let tf = 1.3;
        let config = IntegratorConfig::with_tol(1e-11);
        let traj = integrate(&sys, &y0, 0.0, tf, &[tf], &config).unwrap();
        let yf = &traj.states[0];
        let n_aug = 3;

        // L for [x, z0, z1]: dx = -x + c0 z0 + c1 z1; dz0 = a(x - z0); dz1 = a(z0 - z1)
        let l = [[-1.0, c[0], c[1]], [a, -a, 0.0], [0.0, a, -a]];
        let y0_state = [x0[0], x0[0], x0[0]];

        // state against expm
        let eyl = expm3(&l, tf);
        for r in 0..3 {
            let want: f64 = (0..3).map(|j| eyl[r][j] * y0_state[j]).sum();
            assert!((yf[r] - want).abs() < 1e-8, "state {r}");
        }

        // x0 column: expm(L t) [1, 1, 1]
        let col = &yf[n_aug * 4..n_aug * 5];
        for r in 0..3 {
            let want: f64 = (0..3).map(|j| eyl[r][j]).sum();
            assert!((col[r] - want).abs() < 1e-7, "x0 sensitivity {r}");
        }

        // rate column via the block exponential with dL/da
        let dl_da = [[0.0, 0.0, 0.0], [1.0, -1.0, 0.0], [0.0, 1.0, -1.0]];
        let want = block_sensitivity(&l, &dl_da, &y0_state, tf);
        let col = &yf[n_aug * 3..n_aug * 4];
        for r in 0..3 {
            assert!((col[r] - want[r]).abs() < 1e-7, "rate sensitivity {r}");
        }

        // c0 column via dL/dc0
        let dl_dc0 = [[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let want = block_sensitivity(&l, &dl_dc0, &y0_state, tf);
        let col = &yf[n_aug..n_aug * 2];
        for r in 0..3 {
            assert!((col[r] - want[r]).abs() < 1e-7, "c0 sensitivity {r}");
        }
    }

    /// dY/dtheta(t) = top-right block of expm([[L, dL];[0, L]] t) applied to y0.
    fn block_sensitivity(l: &[[f64; 3]; 3], dl: &[[f64; 3]; 3], y0: &[f64; 3], t: f64) -> [f64; 3] {
        let mut big = [[0.0; 6]; 6];
        for r in 0..3 {
            for cidx in 0..3 {
                big[r][cidx] = l[r][cidx];
                big[r][cidx + 3] = dl[r][cidx];
                big[r + 3][cidx + 3] = l[r][cidx];
            }
        }
        let e = expm_series::<6>(&big, t);
        let mut out = [0.0; 3];
        for r in 0..3 {
            for j in 0..3 {
                out[r] += e[r][j + 3] * y0[j];
            }
        }
        out
    }

    fn expm3(l: &[[f64; 3]; 3], t: f64) -> [[f64; 3]; 3] {
        expm_series::<3>(l, t)
    }

    /// Scaling-and-squaring Taylor series matrix exponential (test oracle).
    fn expm_series<const N: usize>(m: &[[f64; N]; N], t: f64) -> [[f64; N]; N] {
        let norm: f64 = m
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
            * t.abs();
        let squarings = norm.log2().ceil().max(0.0) as u32 + 4;
        let scale = t / 2f64.powi(squarings as i32);

        let mut term = identity::<N>();
        let mut sum = identity::<N>();
        for k in 1..30 {
            term = matmul(&term, m);
            for row in term.iter_mut() {
                for v in row.iter_mut() {
                    *v *= scale / k as f64;
                }
            }
            for r in 0..N {
                for c in 0..N {
                    sum[r][c] += term[r][c];
                }
            }
        }
        for _ in 0..squarings {
            sum = matmul(&sum, &sum);
        }
        sum
    }

    fn identity<const N: usize>() -> [[f64; N]; N] {
        let mut e = [[0.0; N]; N];
        for (i, row) in e.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        e
    }

    fn matmul<const N: usize>(a: &[[f64; N]; N], b: &[[f64; N]; N]) -> [[f64; N]; N] {
        let mut out = [[0.0; N]; N];
        for r in 0..N {
            for k in 0..N {
                let v = a[r][k];
                if v != 0.0 {
                    for c in 0..N {
                        out[r][c] += v * b[k][c];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn gradient_of_zero_residuals_is_zero() {
        let s = Mat::from_rows(&[&[1.0, 2.0, 3.0]]);
        let grad = objective_gradient(&[vec![0.0]], &[s], 1e6).unwrap();
        assert_eq!(grad, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn gradient_single_scalar_measurement() {
        // residual r and sensitivity s give -r s
        let s = Mat::from_rows(&[&[0.4]]);
        let grad = objective_gradient(&[vec![2.5]], &[s], 1.0).unwrap();
        assert!((grad[0] + 2.5 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn gradient_rejects_grid_mismatch() {
        let s = Mat::from_rows(&[&[0.4]]);
        assert!(objective_gradient(&[vec![1.0], vec![2.0]], &[s], 1.0).is_err());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_columns_bitwise_match_sequential() {
        let sys = logistic_sens(6, 12.0, vec![1.0 / 7.0; 7]);
        let y = sys.initial_state(0.0, &[0.9]);
        let mut dy_seq = vec![0.0; sys.dim()];
        sys.rhs_seq(0.2, &y, &mut dy_seq).unwrap();
        let mut dy_par = vec![0.0; sys.dim()];
        sys.rhs_par(0.2, &y, &mut dy_par).unwrap();
        assert_eq!(dy_seq, dy_par);
    }
}
