//! Built-in experiment presets. Desk variants finish in minutes; paper
//! variants reproduce the full-scale study setups.

use crate::config::*;
use delayid::kernels::{FoldedNormalMixture, FoldedNormalTerm, Kernel, PointDelay};

/// Days per month used to express the day-based sampling of the logistic
/// experiments in month units (365.25 / 12).
pub const MONTH_DAYS: f64 = 30.4375;

/// Simulation steps per day in the logistic experiments.
const STEPS_PER_DAY: usize = 150;

pub const PRESET_NAMES: &[&str] = &[
    "logistic-distributed-desk",
    "logistic-distributed-paper",
    "logistic-absolute-desk",
    "logistic-absolute-paper",
    "reactor-desk",
    "reactor-paper",
];

pub fn by_name(name: &str) -> anyhow::Result<ExperimentConfig> {
    let config = match name {
        "logistic-distributed-desk" => logistic(false, false),
        "logistic-distributed-paper" => logistic(false, true),
        "logistic-absolute-desk" => logistic(true, false),
        "logistic-absolute-paper" => logistic(true, true),
        "reactor-desk" => reactor(false),
        "reactor-paper" => reactor(true),
        other => anyhow::bail!(
            "unknown preset {other:?}; available: {}",
            PRESET_NAMES.join(", ")
        ),
    };
    config.validated()
}

/// Upgrade a desk preset name to its paper-scale sibling.
pub fn paper_scale_name(name: &str) -> String {
    match name {
        "logistic-distributed-desk" => "logistic-distributed-paper".into(),
        "logistic-absolute-desk" => "logistic-absolute-paper".into(),
        "reactor-desk" => "reactor-paper".into(),
        other => other.into(),
    }
}

fn logistic_kernel() -> Kernel {
    Kernel::FoldedNormal(
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
        .expect("reference kernel is valid"),
    )
}

fn logistic(absolute: bool, paper: bool) -> ExperimentConfig {
    let dt = 1.0 / (STEPS_PER_DAY as f64 * MONTH_DAYS);
    let days = if paper { 730 } else { 365 };
    // paper horizon: 24 months; desk: 60 days, well past the kernel support
    let horizon_steps = if paper {
        (24.0 * MONTH_DAYS * STEPS_PER_DAY as f64).round() as usize
    } else {
        60 * STEPS_PER_DAY
    };
    let kernel = if absolute {
        Kernel::Point(PointDelay { tau: 0.35 })
    } else {
        logistic_kernel()
    };
    ExperimentConfig {
        model: ModelChoice::Logistic(LogisticParams::default()),
        kernel,
        data: DataConfig {
            dt,
            horizon_steps,
            n_steps: days * STEPS_PER_DAY,
            sample_stride: STEPS_PER_DAY,
            t0: 0.0,
            true_p: vec![4.0],
            true_x0: vec![0.9],
        },
        estimation: EstimationConfig {
            orders: if paper {
                vec![0, 10, 20, 30, 40, 50]
            } else {
                vec![0, 20]
            },
            scale: if absolute { 1e5 } else { 1e6 },
            opt_tol: if absolute { 1e-4 } else { 1e-3 },
            max_iter: 500,
            ivp_tol: 1e-8,
            // an eighth of the daily sample spacing
            ivp_fixed_step: Some(1.0 / (8.0 * MONTH_DAYS)),
            guess: GuessConfig {
                a: 20.0,
                c: WeightGuess::Named("uniform".into()),
                p: vec![3.0],
                x0: vec![0.7],
            },
            bounds: BoundsConfig {
                a_min: 0.5,
                p: vec![(Some(0.0), Some(10.0))],
                x0: vec![(Some(0.0), Some(10.0))],
            },
            kernel_grid_max: Some(1.5),
            kernel_grid_points: 400,
        },
        noise: NoiseConfig::default(),
        seed: 0,
        validate: ValidateConfig::default(),
    }
}

fn reactor(paper: bool) -> ExperimentConfig {
    let beta = ReactorParams::default().beta;
    let mut x0_bounds: Vec<(Option<f64>, Option<f64>)> = vec![(Some(0.0), None); 7];
    x0_bounds.push((None, None)); // reactivity is a free sign
    ExperimentConfig {
        model: ModelChoice::Reactor(ReactorParams::default()),
        kernel: Kernel::FoldedNormal(
            FoldedNormalMixture::new(vec![
                FoldedNormalTerm {
                    weight: 0.6,
                    location: 2.5,
                    scale: 0.5,
                },
                FoldedNormalTerm {
                    weight: 0.4,
                    location: 5.0,
                    scale: 1.0,
                },
            ])
            .expect("reference kernel is valid"),
        ),
        data: DataConfig {
            dt: 1e-3,
            // the desk variant watches the first 10 s; the kernel mass beyond
            // a 10 s horizon is ~1e-7 and is renormalized away
            horizon_steps: if paper { 25_000 } else { 10_000 },
            n_steps: if paper { 25_000 } else { 10_000 },
            sample_stride: 10,
            t0: 0.0,
            true_p: vec![5e-5],
            true_x0: vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5 * beta],
        },
        estimation: EstimationConfig {
            orders: if paper { vec![70] } else { vec![10] },
            scale: 10.0,
            opt_tol: 1e-5,
            max_iter: if paper { 500 } else { 250 },
            ivp_tol: 1e-8,
            ivp_fixed_step: Some(if paper { 1.25e-3 } else { 2.5e-3 }),
            guess: GuessConfig {
                a: 25.0,
                c: WeightGuess::Named("top".into()),
                p: vec![4e-5],
                x0: vec![10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, beta],
            },
            bounds: BoundsConfig {
                a_min: 7.5,
                p: vec![(Some(0.0), Some(1e-4))],
                x0: x0_bounds,
            },
            kernel_grid_max: Some(10.0),
            kernel_grid_points: 400,
        },
        noise: NoiseConfig::default(),
        seed: 0,
        validate: ValidateConfig::default(),
    }
}
