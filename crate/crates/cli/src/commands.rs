//! The generate / estimate / sweep commands.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::Context;
use delayid::ddesim;
use delayid::estimator::{self, EstimationProblem};
use delayid::ivp::IntegratorConfig;
use delayid::kernels::Kernel;
use delayid::model::{MeasurementSeries, ThetaLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::report::{self, SummaryRow, TruthInfo};

/// Synthesize measurements from the configured true kernel and write the
/// data artifacts (measurements, truth metadata, trajectory, kernel curve).
pub fn generate(config: &ExperimentConfig, out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    let seed = seed.unwrap_or(config.seed);
    let model = config.build_model();
    let sim = config.sim_config();
    let (mut series, trajectory) = ddesim::simulate_with_params(
        model.as_ref(),
        &config.kernel,
        &config.data.true_x0,
        &config.data.true_p,
        config.data.t0,
        config.data.n_steps,
        config.data.sample_stride,
        &sim,
    )
    .context("reference simulation")?;

    anyhow::ensure!(
        series.len() == config.n_samples(),
        "internal error: {} samples produced, {} expected",
        series.len(),
        config.n_samples()
    );
    if config.noise.std.iter().any(|s| *s > 0.0) {
        series = add_noise(&series, &config.noise.std, seed)?;
    }

    report::write_json(&out.join("config.json"), config)?;
    report::write_json(
        &out.join("truth.json"),
        &TruthInfo {
            kernel: config.kernel.clone(),
            true_p: config.data.true_p.clone(),
            true_x0: config.data.true_x0.clone(),
            seed,
            noise_std: config.noise.std.clone(),
        },
    )?;
    series.write_csv(BufWriter::new(File::create(out.join("measurements.csv"))?))?;
    trajectory.write_csv(BufWriter::new(File::create(out.join("trajectory.csv"))?))?;
    if let Some(grid_max) = kernel_grid_max(config, &config.kernel) {
        let grid = linspace(0.0, grid_max, config.estimation.kernel_grid_points);
        let pdf: Vec<f64> = grid
            .iter()
            .map(|&t| config.kernel.pdf(t).unwrap_or(0.0))
            .collect();
        report::write_kernel_curve(&out.join("kernel_true.csv"), &grid, &pdf)?;
    }
    println!(
        "generated {} samples over [{}, {}] into {}",
        series.len(),
        series.times()[0],
        series.times().last().unwrap(),
        out.display()
    );
    Ok(())
}

fn kernel_grid_max(config: &ExperimentConfig, kernel: &Kernel) -> Option<f64> {
    match kernel {
        Kernel::Point(_) => None, // no pointwise density to plot
        _ => Some(
            config
                .estimation
                .kernel_grid_max
                .unwrap_or(5.0 * kernel.mean()),
        ),
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn add_noise(
    series: &MeasurementSeries,
    std: &[f64],
    seed: u64,
) -> anyhow::Result<MeasurementSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || -> f64 {
        // Box-Muller on open-interval uniforms
        loop {
            let u: f64 = rng.gen();
            if u > 0.0 {
                let v: f64 = rng.gen();
                return (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos();
            }
        }
    };
    let values = series
        .values()
        .iter()
        .map(|y| {
            y.iter()
                .zip(std)
                .map(|(v, s)| v + s * gauss())
                .collect::<Vec<f64>>()
        })
        .collect();
    Ok(MeasurementSeries::new(series.times().to_vec(), values)?)
}

/// Run the estimation sweep over the configured kernel orders.
pub fn estimate(config: &ExperimentConfig, data: &Path, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    let measurements = MeasurementSeries::read_csv(BufReader::new(
        File::open(data.join("measurements.csv"))
            .with_context(|| format!("opening {}/measurements.csv", data.display()))?,
    ))?;
    let truth: Option<TruthInfo> = match File::open(data.join("truth.json")) {
        Ok(f) => Some(serde_json::from_reader(BufReader::new(f))?),
        Err(_) => None,
    };

    let model = config.build_model();
    let dims = model.dims();
    let est = &config.estimation;

    let problems: Vec<EstimationProblem> = est
        .orders
        .iter()
        .map(|&order| {
            let layout = ThetaLayout::new(dims.n_p, order, dims.n_x);
            let mut problem = EstimationProblem::new(
                model.as_ref(),
                order,
                measurements.clone(),
                config.initial_theta(order),
            )?;
            problem.bounds = config.bounds_for(order, layout);
            problem.scale = est.scale;
            problem.opt_tol = est.opt_tol;
            problem.max_iter = est.max_iter;
            problem.ivp = IntegratorConfig {
                fixed_step: est.ivp_fixed_step,
                ..IntegratorConfig::with_tol(est.ivp_tol)
            };
            Ok(problem)
        })
        .collect::<anyhow::Result<_>>()?;

    let outcomes = estimator::solve_sweep(&problems);

    let param_names = model.param_names();
    let state_names = model.state_names();
    let mut rows = Vec::new();
    for (&order, outcome) in est.orders.iter().zip(&outcomes) {
        match outcome {
            Ok(result) => {
                let subdir = out.join(format!("m{order:03}"));
                fs::create_dir_all(&subdir)?;
                let grid_max = est.kernel_grid_max.unwrap_or(5.0 * result.mixture.mean());
                let grid = linspace(0.0, grid_max, est.kernel_grid_points);
                let kernel_error = truth
                    .as_ref()
                    .map(|t| estimator::kernel_error_report(&result.mixture, &t.kernel, &grid));
                report::write_json(
                    &subdir.join("result.json"),
                    &report::result_json(
                        order,
                        result,
                        &param_names,
                        &state_names,
                        kernel_error.as_ref(),
                    ),
                )?;
                report::write_iteration_log(&subdir.join("iterations.csv"), result)?;
                report::write_coefficients(&subdir.join("coefficients.csv"), result)?;
                report::write_kernel_curve(
                    &subdir.join("kernel_est.csv"),
                    &grid,
                    &result.mixture.pdf_grid(&grid),
                )?;
                result
                    .fitted
                    .write_csv(BufWriter::new(File::create(subdir.join("fit.csv"))?))?;
                println!(
                    "M = {order}: {} after {} iterations, objective {:.6e}, pg {:.3e}",
                    report::termination_label(result.termination),
                    result.iterations,
                    result.objective,
                    result.pg_norm
                );
                rows.push(SummaryRow {
                    order,
                    outcome: report::termination_label(result.termination).into(),
                    iterations: Some(result.iterations),
                    objective: Some(result.objective),
                    pg_norm: Some(result.pg_norm),
                    a: Some(result.mixture.rate()),
                    tau_hat: Some(result.mixture.mean()),
                    kernel_max_abs: kernel_error.as_ref().and_then(|k| k.max_abs),
                    kernel_l2: kernel_error.as_ref().and_then(|k| k.l2),
                    mean_abs_error: kernel_error.as_ref().map(|k| k.mean_abs_error),
                    p: result.p.clone(),
                    x0: result.x0.clone(),
                });
            }
            Err(e) => {
                // keep sweeping; the failure is recorded in the summary
                println!("M = {order}: failed: {e}");
                rows.push(SummaryRow {
                    order,
                    outcome: format!("error: {e}"),
                    iterations: None,
                    objective: None,
                    pg_norm: None,
                    a: None,
                    tau_hat: None,
                    kernel_max_abs: None,
                    kernel_l2: None,
                    mean_abs_error: None,
                    p: Vec::new(),
                    x0: Vec::new(),
                });
            }
        }
    }
    report::write_summary(&out.join("summary.csv"), &rows, &param_names, &state_names)?;
    println!("summary written to {}", out.join("summary.csv").display());
    Ok(())
}

/// Generate into `<out>/data` and estimate into `<out>`.
pub fn sweep(config: &ExperimentConfig, out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    let data_dir = out.join("data");
    generate(config, &data_dir, seed)?;
    estimate(config, &data_dir, out)
}
