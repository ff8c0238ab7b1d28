//! Delay kernels.
//!
//! Two families of "true" kernels (folded-normal mixtures and point delays)
//! and the mixed-Erlang family used to approximate them. The Erlang PDF of
//! order m+1 with rate a is
//!
//! ```text
//! alpha_m(t) = b_m t^m exp(-a t),   b_m = a^(m+1) / m!
//! ```
//!
//! and a mixture `sum_m c_m alpha_m` with `sum_m c_m = 1` integrates to one.
//! Weights for a target cumulative kernel beta are built with the Tijms
//! construction `c_m = beta(t_{m+1}) - beta(t_m)`, `a = 1/dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Standard normal CDF, accurate in both tails.
pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// ln(m!) via the log-gamma function.
fn ln_factorial(m: usize) -> f64 {
    libm::lgamma(m as f64 + 1.0)
}

/// Erlang PDF of order `m + 1` with rate `a`, evaluated at `t`.
///
/// Computed in log space for m > 0 so that large orders (M of a few hundred)
/// do not overflow `a^(m+1)/m!`.
pub fn erlang_pdf(m: usize, a: f64, t: f64) -> Result<f64> {
    check_rate_time(a, t)?;
    Ok(erlang_pdf_unchecked(m, a, t))
}

pub(crate) fn erlang_pdf_unchecked(m: usize, a: f64, t: f64) -> f64 {
    if m == 0 {
        return a * (-a * t).exp();
    }
    if t == 0.0 {
        return 0.0;
    }
    let log_b = (m as f64 + 1.0) * a.ln() - ln_factorial(m);
    (log_b + m as f64 * t.ln() - a * t).exp()
}

/// Erlang CDF of order `m + 1` with rate `a`: `1 - (1/a) sum_{n<=m} alpha_n(t)`,
/// clamped to [0, 1] against roundoff.
pub fn erlang_cdf(m: usize, a: f64, t: f64) -> Result<f64> {
    check_rate_time(a, t)?;
    let mut tail = 0.0;
    for n in 0..=m {
        tail += erlang_pdf_unchecked(n, a, t);
    }
    Ok((1.0 - tail / a).clamp(0.0, 1.0))
}

fn check_rate_time(a: f64, t: f64) -> Result<()> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("rate must be positive, got {a}")));
    }
    if t < 0.0 {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    Ok(())
}

/// Mixed-Erlang kernel: weights `c[m]` on Erlang orders m+1, shared rate `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErlangMixture {
    a: f64,
    c: Vec<f64>,
}

impl ErlangMixture {
    /// Build a mixture whose weights already sum to one (within 1e-12).
    pub fn new(a: f64, c: Vec<f64>) -> Result<Self> {
        let k = ErlangMixture { a, c };
        k.validate()?;
        Ok(k)
    }

    /// Build a mixture from nonnegative raw weights, rescaling them to sum to one.
    pub fn normalized(a: f64, raw: Vec<f64>) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::Domain("raw weights sum to zero".into()));
        }
        let c = raw.iter().map(|w| w / sum).collect();
        ErlangMixture::new(a, c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::Domain(format!(
                "rate must be positive, got {}",
                self.a
            )));
        }
        if self.c.is_empty() {
            return Err(Error::Dimension("mixture needs at least one weight".into()));
        }
        if self.c.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Domain("mixture weights must be nonnegative".into()));
        }
        let sum: f64 = self.c.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "mixture weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// Highest Erlang index M (the mixture has M+1 components).
    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn rate(&self) -> f64 {
        self.a
    }

    pub fn weights(&self) -> &[f64] {
        &self.c
    }

    /// `sum_m c_m alpha_m(t)`.
    pub fn pdf(&self, t: f64) -> f64 {
        let log_b = self.log_normalizers();
        self.pdf_with(&log_b, t)
    }

    /// PDF on a grid; the per-order normalizers are computed once.
    pub fn pdf_grid(&self, ts: &[f64]) -> Vec<f64> {
        let log_b = self.log_normalizers();
        exec::map_grid(ts, |t| self.pdf_with(&log_b, t))
    }

    /// Sequential grid evaluation, kept callable for benchmarks.
    pub fn pdf_grid_seq(&self, ts: &[f64]) -> Vec<f64> {
        let log_b = self.log_normalizers();
        exec::map_grid_seq(ts, |t| self.pdf_with(&log_b, t))
    }

    #[cfg(feature = "parallel")]
    pub fn pdf_grid_par(&self, ts: &[f64]) -> Vec<f64> {
        let log_b = self.log_normalizers();
        exec::map_grid_par(ts, |t| self.pdf_with(&log_b, t))
    }

    fn log_normalizers(&self) -> Vec<f64> {
        let ln_a = self.a.ln();
        (0..self.c.len())
            .map(|m| (m as f64 + 1.0) * ln_a - ln_factorial(m))
            .collect()
    }

    fn pdf_with(&self, log_b: &[f64], t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        if t == 0.0 {
            // only the order-1 component has mass at zero
            return self.c[0] * self.a;
        }
        let ln_t = t.ln();
        let at = self.a * t;
        let mut acc = 0.0;
        for (m, (&w, &lb)) in self.c.iter().zip(log_b).enumerate() {
            if w != 0.0 {
                acc += w * (lb + m as f64 * ln_t - at).exp();
            }
        }
        acc
    }

    /// `sum_m c_m beta_m(t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        // reuse the partial sums of erlang_cdf: beta_m = 1 - (1/a) sum_{n<=m} alpha_n
        let mut acc = 0.0;
        let mut partial = 0.0;
        for (m, &w) in self.c.iter().enumerate() {
            partial += erlang_pdf_unchecked(m, self.a, t);
            acc += w * (1.0 - partial / self.a).clamp(0.0, 1.0);
        }
        acc.clamp(0.0, 1.0)
    }

    /// Mean `(1/a) sum_m c_m (m+1)`.
    pub fn mean(&self) -> f64 {
        let s: f64 = self
            .c
            .iter()
            .enumerate()
            .map(|(m, w)| w * (m as f64 + 1.0))
            .sum();
        s / self.a
    }

    /// Smallest grid time beyond which the PDF stays below `eps`.
    pub fn memory_horizon(&self, eps: f64) -> Result<f64> {
        let m = self.order() as f64;
        let step = 0.1 / self.a;
        let end = 40.0 * (m + 1.0) / self.a;
        let log_b = self.log_normalizers();
        horizon_scan(|t| self.pdf_with(&log_b, t), step, end, eps)
    }
}

/// One folded-normal component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldedNormalTerm {
    pub weight: f64,
    pub location: f64,
    pub scale: f64,
}

impl FoldedNormalTerm {
    fn pdf(&self, t: f64) -> f64 {
        let u = (t - self.location) / self.scale;
        let v = (t + self.location) / self.scale;
        ((-0.5 * u * u).exp() + (-0.5 * v * v).exp()) / (SQRT_2PI * self.scale)
    }

    fn cdf(&self, t: f64) -> f64 {
        let u = (t - self.location) / self.scale;
        let v = (t + self.location) / self.scale;
        (std_normal_cdf(u) + std_normal_cdf(v) - 1.0).clamp(0.0, 1.0)
    }

    fn mean(&self) -> f64 {
        let r = self.location / self.scale;
        self.location * libm::erf(r / std::f64::consts::SQRT_2)
            + self.scale * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * r * r).exp()
    }
}

/// Mixture of folded normal densities on [0, inf).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedNormalMixture {
    pub terms: Vec<FoldedNormalTerm>,
}

impl FoldedNormalMixture {
    pub fn new(terms: Vec<FoldedNormalTerm>) -> Result<Self> {
        let k = FoldedNormalMixture { terms };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Dimension("mixture needs at least one term".into()));
        }
        for t in &self.terms {
            if !(t.scale > 0.0) {
                return Err(Error::Domain(format!(
                    "scale must be positive, got {}",
                    t.scale
                )));
            }
            if t.weight < 0.0 {
                return Err(Error::Domain(format!(
                    "weight must be nonnegative, got {}",
                    t.weight
                )));
            }
        }
        let sum: f64 = self.terms.iter().map(|t| t.weight).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "folded-normal weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.terms.iter().map(|c| c.weight * c.pdf(t)).sum()
    }

    pub fn pdf_grid(&self, ts: &[f64]) -> Vec<f64> {
        exec::map_grid(ts, |t| self.pdf(t))
    }

    /// Cumulative kernel via the error-function closed form.
    pub fn cdf(&self, t: f64) -> f64 {
        let v: f64 = self.terms.iter().map(|c| c.weight * c.cdf(t)).sum();
        v.clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.terms.iter().map(|c| c.weight * c.mean()).sum()
    }

    /// Smallest grid-searched horizon with `pdf(t) < eps` for all later times.
    ///
    /// Scans with step `sigma_min / 10` out to `mu_max + 12 sigma_max` and
    /// verifies that the tail is monotonically decreasing past the horizon.
    pub fn memory_horizon(&self, eps: f64) -> Result<f64> {
        let sigma_min = self
            .terms
            .iter()
            .map(|t| t.scale)
            .fold(f64::INFINITY, f64::min);
        let sigma_max = self.terms.iter().map(|t| t.scale).fold(0.0, f64::max);
        let mu_max = self
            .terms
            .iter()
            .map(|t| t.location.abs())
            .fold(0.0, f64::max);
        let step = sigma_min / 10.0;
        let end = mu_max + 12.0 * sigma_max;
        horizon_scan(|t| self.pdf(t), step, end, eps)
    }
}

fn horizon_scan<F: Fn(f64) -> f64>(pdf: F, step: f64, end: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain("threshold must be positive".into()));
    }
    let n = (end / step).ceil() as usize;
    let values: Vec<f64> = (1..=n).map(|i| pdf(i as f64 * step)).collect();
    let last_exceed = values.iter().rposition(|v| *v >= eps);
    let horizon_idx = match last_exceed {
        None => 0, // threshold above the whole curve: smallest positive grid point
        Some(i) if i + 1 >= n => {
            return Err(Error::Domain(
                "threshold not reached within the scan range".into(),
            ));
        }
        Some(i) => i + 1,
    };
    if values[horizon_idx..].iter().any(|v| *v >= eps) {
        return Err(Error::Domain(
            "threshold not reached within the scan range".into(),
        ));
    }
    // certify the tail: nonincreasing past both the horizon and the global peak
    let peak = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    for w in values[horizon_idx.max(peak)..].windows(2) {
        if w[1] > w[0] + 1e-15 {
            return Err(Error::Domain(
                "kernel tail is not monotonically decreasing past the horizon".into(),
            ));
        }
    }
    Ok((horizon_idx + 1) as f64 * step)
}

/// Point (absolute) delay `z(t) = r(t - tau)`; a Dirac kernel, so it is never
/// evaluated pointwise and is handled by the reference simulator via a lagged
/// history lookup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointDelay {
    pub tau: f64,
}

impl PointDelay {
    pub fn new(tau: f64) -> Result<Self> {
        if tau < 0.0 {
            return Err(Error::Domain(format!(
                "delay must be nonnegative, got {tau}"
            )));
        }
        Ok(PointDelay { tau })
    }
}

/// Any kernel the toolkit can generate data from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    FoldedNormal(FoldedNormalMixture),
    Erlang(ErlangMixture),
    Point(PointDelay),
}

impl Kernel {
    /// Pointwise density; `None` for a point delay.
    pub fn pdf(&self, t: f64) -> Option<f64> {
        match self {
            Kernel::FoldedNormal(k) => Some(k.pdf(t)),
            Kernel::Erlang(k) => Some(k.pdf(t)),
            Kernel::Point(_) => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Kernel::FoldedNormal(k) => k.mean(),
            Kernel::Erlang(k) => k.mean(),
            Kernel::Point(k) => k.tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::FoldedNormal(k) => k.validate(),
            Kernel::Erlang(k) => k.validate(),
            Kernel::Point(k) => PointDelay::new(k.tau).map(|_| ()),
        }
    }
}

/// Raw Tijms increments `beta((m+1) dt) - beta(m dt)` for m = 0..=M.
pub fn tijms_raw_weights<F: Fn(f64) -> f64>(beta: F, dt: f64, order: usize) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let mut prev = beta(0.0);
    let mut raw = Vec::with_capacity(order + 1);
    for m in 0..=order {
        let next = beta((m as f64 + 1.0) * dt);
        let inc = next - prev;
        if inc < -1e-12 {
            return Err(Error::Domain(format!(
                "cumulative kernel decreases on [{}, {}]",
                m as f64 * dt,
                (m as f64 + 1.0) * dt
            )));
        }
        raw.push(inc.max(0.0));
        prev = next;
    }
    Ok(raw)
}

/// Tijms weight construction: `c_m = beta(t_{m+1}) - beta(t_m)` with
/// `a = 1/dt`, renormalized so the weights sum to one (the raw increments
/// only sum to `beta((M+1) dt)`).
pub fn tijms_weights<F: Fn(f64) -> f64>(beta: F, dt: f64, order: usize) -> Result<ErlangMixture> {
    let raw = tijms_raw_weights(beta, dt, order)?;
    ErlangMixture::normalized(1.0 / dt, raw)
}
