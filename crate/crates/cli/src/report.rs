//! Output artifacts: JSON summaries and CSV tables.
//!
//! Every number written here is copied from a result object; nothing is
//! recomputed at write time. Floats carry 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use delayid::estimator::{EstimationResult, KernelErrorReport};
use delayid::kernels::Kernel;
use delayid::model::fmt_f64;
use delayid::optimize::Termination;
use serde::{Deserialize, Serialize};

pub fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::IterationCap => "iteration_cap",
        Termination::LineSearchFailure => "line_search_failure",
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Ground-truth metadata stored alongside generated data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthInfo {
    pub kernel: Kernel,
    pub true_p: Vec<f64>,
    pub true_x0: Vec<f64>,
    pub seed: u64,
    pub noise_std: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct KernelErrorJson {
    pub max_abs: Option<f64>,
    pub l2: Option<f64>,
    pub mean_estimated: f64,
    pub mean_true: f64,
    pub mean_abs_error: f64,
}

impl From<&KernelErrorReport> for KernelErrorJson {
    fn from(r: &KernelErrorReport) -> Self {
        KernelErrorJson {
            max_abs: r.max_abs,
            l2: r.l2,
            mean_estimated: r.mean_estimated,
            mean_true: r.mean_true,
            mean_abs_error: r.mean_abs_error,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ResultJson {
    pub order: usize,
    pub termination: String,
    pub iterations: usize,
    pub objective: f64,
    pub pg_norm: f64,
    pub a: f64,
    pub c: Vec<f64>,
    /// Mean of the estimated kernel, the point-delay estimate.
    pub tau_hat: f64,
    pub param_names: Vec<String>,
    pub p: Vec<f64>,
    pub state_names: Vec<String>,
    pub x0: Vec<f64>,
    pub kernel_error: Option<KernelErrorJson>,
}

pub fn result_json(
    order: usize,
    result: &EstimationResult,
    param_names: &[String],
    state_names: &[String],
    kernel_error: Option<&KernelErrorReport>,
) -> ResultJson {
    ResultJson {
        order,
        termination: termination_label(result.termination).into(),
        iterations: result.iterations,
        objective: result.objective,
        pg_norm: result.pg_norm,
        a: result.mixture.rate(),
        c: result.mixture.weights().to_vec(),
        tau_hat: result.mixture.mean(),
        param_names: param_names.to_vec(),
        p: result.p.clone(),
        state_names: state_names.to_vec(),
        x0: result.x0.clone(),
        kernel_error: kernel_error.map(KernelErrorJson::from),
    }
}

pub fn write_iteration_log(path: &Path, result: &EstimationResult) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iter,objective,pg_norm,step")?;
    for rec in &result.log {
        writeln!(
            w,
            "{},{},{},{}",
            rec.iter,
            fmt_f64(rec.value),
            fmt_f64(rec.pg_norm),
            fmt_f64(rec.step)
        )?;
    }
    Ok(())
}

pub fn write_coefficients(path: &Path, result: &EstimationResult) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "m,c")?;
    for (m, c) in result.mixture.weights().iter().enumerate() {
        writeln!(w, "{},{}", m, fmt_f64(*c))?;
    }
    Ok(())
}

/// Two-column kernel curve `t,pdf`.
pub fn write_kernel_curve(path: &Path, grid: &[f64], pdf: &[f64]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,pdf")?;
    for (t, v) in grid.iter().zip(pdf) {
        writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(*v))?;
    }
    Ok(())
}

/// One sweep summary row per kernel order.
pub struct SummaryRow {
    pub order: usize,
    pub outcome: String,
    pub iterations: Option<usize>,
    pub objective: Option<f64>,
    pub pg_norm: Option<f64>,
    pub a: Option<f64>,
    pub tau_hat: Option<f64>,
    pub kernel_max_abs: Option<f64>,
    pub kernel_l2: Option<f64>,
    pub mean_abs_error: Option<f64>,
    pub p: Vec<f64>,
    pub x0: Vec<f64>,
}

pub fn write_summary(
    path: &Path,
    rows: &[SummaryRow],
    param_names: &[String],
    state_names: &[String],
) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "order,outcome,iterations,objective,pg_norm,a,tau_hat,kernel_max_abs,kernel_l2,mean_abs_error"
    )?;
    for name in param_names {
        write!(w, ",{name}")?;
    }
    for name in state_names {
        write!(w, ",{name}_0")?;
    }
    writeln!(w)?;
    let opt_u = |v: &Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    let opt_f = |v: &Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for row in rows {
        write!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            row.order,
            row.outcome,
            opt_u(&row.iterations),
            opt_f(&row.objective),
            opt_f(&row.pg_norm),
            opt_f(&row.a),
            opt_f(&row.tau_hat),
            opt_f(&row.kernel_max_abs),
            opt_f(&row.kernel_l2),
            opt_f(&row.mean_abs_error),
        )?;
        for v in &row.p {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        for v in &row.x0 {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}
