//! Numerical validation suite: Jacobian checks, gradient consistency, chain
//! equivalence, kernel-weight convergence, and integrator orders. Used as a
//! release gate; each check prints one pass/fail line and everything lands in
//! a JSON report.

use std::path::Path;

use delayid::estimator::EstimationProblem;
use delayid::ivp::{self, integrate, IntegratorConfig, Method};
use delayid::kernels::{
    tijms_weights, ErlangMixture, FoldedNormalMixture, FoldedNormalTerm, Kernel,
};
use delayid::lct::{AugmentedSystem, LctMatrices};
use delayid::linalg::Mat;
use delayid::model::{check_jacobians, MeasurementSeries};
use delayid::models::{LogisticModel, ReactorModel};
use delayid::quad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::report;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Measured quantity the threshold applies to.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, value: f64, threshold: f64, detail: String) -> Check {
    Check {
        name: name.into(),
        pass: value <= threshold,
        value,
        threshold,
        detail,
    }
}

fn logistic_kernel() -> FoldedNormalMixture {
    FoldedNormalMixture::new(vec![
        FoldedNormalTerm {
            weight: 0.5,
            location: 0.35,
            scale: 0.06,
        },
        FoldedNormalTerm {
            weight: 0.5,
            location: 0.45,
            scale: 0.12,
        },
    ])
    .expect("reference kernel is valid")
}

/// Run every check; write `validation.json` under `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> anyhow::Result<bool> {
    std::fs::create_dir_all(out)?;
    let mut checks = Vec::new();

    checks.push(jacobians_logistic());
    checks.push(jacobians_reactor());
    checks.push(gradient_fd(config.validate.grad_tol));
    checks.push(lct_equivalence());
    checks.push(tijms_convergence());
    checks.push(integrator_order(
        Method::TrBdf2,
        2.0,
        "integrator_order_trbdf2",
    ));
    checks.push(integrator_order(
        Method::ImplicitEuler,
        1.0,
        "integrator_order_euler",
    ));
    checks.push(ddesim_order());
    checks.push(kernel_normalization());
    checks.push(steady_state_chain());

    for c in &checks {
        println!(
            "{} {}: {} = {:.3e} (threshold {:.3e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail,
            c.value,
            c.threshold
        );
    }
    let pass = checks.iter().all(|c| c.pass);
    report::write_json(
        &out.join("validation.json"),
        &ValidationReport { pass, checks },
    )?;
    Ok(pass)
}

fn jacobians_logistic() -> Check {
    let model = LogisticModel::default();
    let report = check_jacobians(&model, 0.4, &[0.9], &[0.85], &[4.0], 1e-5)
        .expect("logistic jacobian check");
    check(
        "logistic_jacobians",
        report.max_error(),
        1e-5,
        "max relative deviation from central differences".into(),
    )
}

fn jacobians_reactor() -> Check {
    let model = ReactorModel::default();
    let x = [1.0, 0.9, 1.1, 1.3, 0.7, 1.2, 2.0, 0.005];
    let z = [0.9, 1.0, 1.1, 0.8, 1.2, 1.0];
    let report =
        check_jacobians(&model, 0.0, &x, &z, &[5e-5], 1e-5).expect("reactor jacobian check");
    check(
        "reactor_jacobians",
        report.max_error(),
        1e-5,
        "max relative deviation from central differences".into(),
    )
}

/// Analytic objective gradient against central finite differences on a small
/// logistic problem, in fixed-step mode so both routes see one smooth map.
fn gradient_fd(tol: f64) -> Check {
    let model = LogisticModel::default();
    let truth = ErlangMixture::new(8.0, vec![0.3, 0.4, 0.3]).expect("valid mixture");
    let aug = AugmentedSystem::with_mixture(&model, &truth, vec![4.0]).expect("augmented system");
    let y0 = aug.initial_state(0.0, &[0.9]);
    let times: Vec<f64> = (0..=30).map(|k| k as f64 / 30.0).collect();
    let traj = integrate(
        &aug,
        &y0,
        0.0,
        1.0,
        &times[1..],
        &IntegratorConfig::with_tol(1e-11),
    )
    .expect("data generation");
    let mut values = vec![vec![0.9]];
    values.extend(traj.states.iter().map(|s| vec![s[0]]));
    let data = MeasurementSeries::new(times, values).expect("series");

    let mut problem = EstimationProblem::new(&model, 2, data, vec![0.0; 6]).expect("problem");
    problem.ivp = IntegratorConfig {
        fixed_step: Some(2e-3),
        ..Default::default()
    };
    let theta = vec![3.6, 0.25, 0.45, 0.3, 9.0, 0.85];
    let (_, grad) = problem
        .objective_with_gradient(&theta)
        .expect("gradient evaluation");
    let mut worst = 0.0_f64;
    for i in 0..theta.len() {
        let h = 1e-6 * theta[i].abs().max(1.0);
        let mut tp = theta.clone();
        tp[i] = theta[i] + h;
        let hi = problem.objective(&tp).expect("objective").value;
        tp[i] = theta[i] - h;
        let lo = problem.objective(&tp).expect("objective").value;
        let fd = (hi - lo) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(1e-8));
    }
    check(
        "gradient_fd",
        worst,
        tol,
        "max relative gradient deviation over theta components".into(),
    )
}

/// The chain output must match trapezoidal quadrature of the kernel
/// convolution over the simulated trajectory.
fn lct_equivalence() -> Check {
    let model = LogisticModel::default();
    let mixture = ErlangMixture::new(8.0, vec![0.1, 0.2, 0.3, 0.4]).expect("valid mixture");
    let sys = AugmentedSystem::with_mixture(&model, &mixture, vec![4.0]).expect("augmented");
    let y0 = sys.initial_state(0.0, &[0.9]);
    let n_out = 800;
    let dt_out = 0.0025;
    let outputs: Vec<f64> = (1..=n_out).map(|i| i as f64 * dt_out).collect();
    let traj = integrate(
        &sys,
        &y0,
        0.0,
        *outputs.last().unwrap(),
        &outputs,
        &IntegratorConfig::with_tol(1e-10),
    )
    .expect("chain integration");
    let mut rhat = vec![0.9];
    rhat.extend(traj.states.iter().map(|s| s[0]));
    let mut times = vec![0.0];
    times.extend(&traj.times);
    let idx = n_out - 1;
    let t = times[idx + 1];
    let mut conv = 0.0;
    for k in 0..=idx {
        let left = mixture.pdf(t - times[k]) * rhat[k];
        let right = mixture.pdf(t - times[k + 1]) * rhat[k + 1];
        conv += 0.5 * (left + right) * (times[k + 1] - times[k]);
    }
    conv += rhat[0] * (1.0 - mixture.cdf(t));
    let zhat = sys.effective_z(&traj.states[idx])[0];
    check(
        "lct_equivalence",
        ((zhat - conv) / conv).abs(),
        1e-4,
        format!("relative chain-vs-quadrature deviation at t = {t}"),
    )
}

/// The approximate cumulative kernel must improve monotonically as the
/// construction grid refines.
fn tijms_convergence() -> Check {
    let kernel = logistic_kernel();
    let grid: Vec<f64> = (0..=300).map(|i| i as f64 * 0.01).collect();
    let mut errors = Vec::new();
    for dt in [0.2_f64, 0.1, 0.05] {
        let order = (2.0 / dt).ceil() as usize;
        let k = tijms_weights(|t| kernel.cdf(t), dt, order).expect("weights");
        let err = grid
            .iter()
            .map(|&t| (k.cdf(t) - kernel.cdf(t)).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let monotone = errors[1] < errors[0] && errors[2] < errors[1];
    Check {
        name: "tijms_convergence".into(),
        pass: monotone,
        value: errors[2] / errors[0],
        threshold: 1.0,
        detail: format!("max-grid CDF errors {errors:?} must strictly decrease"),
    }
}

fn integrator_order(method: Method, expected: f64, name: &str) -> Check {
    let sys = ivp::DenseOde {
        dim: 1,
        f: |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0],
        jac: |_t: f64, _y: &[f64], j: &mut Mat| j[(0, 0)] = -1.0,
    };
    let order = ivp::convergence_order(&sys, &[1.0], 0.0, 1.0, |t| vec![(-t).exp()], 0.1, method)
        .expect("convergence order");
    check(
        name,
        (order - expected).abs(),
        0.2,
        format!("measured order {order:.3} against {expected}"),
    )
}

fn ddesim_order() -> Check {
    let model = LogisticModel::default();
    let kernel = Kernel::FoldedNormal(logistic_kernel());
    let steps = 256;
    let run = |refine: usize| {
        let dt = 0.01 / refine as f64;
        let config = delayid::ddesim::DdeSimConfig::new(dt, 2.56);
        let (series, _) = delayid::ddesim::simulate_with_params(
            &model,
            &kernel,
            &[0.9],
            &[4.0],
            0.0,
            steps * refine,
            steps * refine,
            &config,
        )
        .expect("reference simulation");
        series.values().last().unwrap()[0]
    };
    // dyadic difference ratio over dt, dt/2, dt/4
    let (x1, x2, x4) = (run(1), run(2), run(4));
    let order = ((x1 - x2).abs() / (x2 - x4).abs()).log2();
    check(
        "ddesim_order",
        (order - 1.0).abs(),
        0.2,
        format!("measured order {order:.3} against 1"),
    )
}

fn kernel_normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let order = rng.gen_range(0..=60usize);
        let a = rng.gen_range(0.1..50.0);
        let raw: Vec<f64> = (0..=order).map(|_| rng.gen_range(1e-3..1.0)).collect();
        let k = ErlangMixture::normalized(a, raw).expect("mixture");
        let hi = 40.0 * (order as f64 + 1.0) / a;
        let mass = quad::integrate(|t| k.pdf(t), 0.0, hi, 1e-11);
        worst = worst.max((mass - 1.0).abs());
    }
    check(
        "kernel_normalization",
        worst,
        1e-8,
        "max |integral - 1| over random mixtures".into(),
    )
}

fn steady_state_chain() -> Check {
    let model = ReactorModel::default();
    let lct = LctMatrices::new(25.0, vec![0.25; 4], 6).expect("chain");
    let z0 = delayid::lct::steady_state_z0(&model, 0.0, &model.nominal_x0(), &[5e-5], 3);
    let mut rhat = vec![0.0; 6];
    use delayid::model::Model;
    model.h(0.0, &model.nominal_x0(), &[5e-5], &mut rhat);
    let mut dz = vec![0.0; 24];
    lct.apply_a(&z0, &mut dz);
    lct.apply_b_add(&rhat, &mut dz);
    let worst = dz.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    check(
        "steady_state_chain",
        worst,
        1e-12,
        "max |A Z0 + B rhat| at the steady-state initializer".into(),
    )
}
