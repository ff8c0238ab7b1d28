//! Contract for a delay system.
//!
//! A model supplies the right-hand side `f(t, x, z, p)`, the delay function
//! `h(t, x, p)` feeding the convolution, the measurement function
//! `g(t, x, p)`, and their analytic Jacobians. All evaluators must be pure so
//! a single instance can serve concurrent simulations.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Problem dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_x: usize,
    pub n_z: usize,
    pub n_y: usize,
    pub n_p: usize,
}

/// A delay system with analytic Jacobians.
///
/// Evaluators take explicit time even though the estimation theory is written
/// for autonomous systems; time-varying inputs (a seasonal carrying capacity,
/// say) do not change the sensitivity equations because the decision vector
/// never multiplies `t`.
pub trait Model: Send + Sync {
    fn dims(&self) -> Dims;

    /// dx/dt = f(t, x, z, p)
    fn f(&self, t: f64, x: &[f64], z: &[f64], p: &[f64], out: &mut [f64]);
    /// r = h(t, x, p), the delayed quantity
    fn h(&self, t: f64, x: &[f64], p: &[f64], out: &mut [f64]);
    /// y = g(t, x, p)
    fn g(&self, t: f64, x: &[f64], p: &[f64], out: &mut [f64]) -> Result<()>;

    fn f_x(&self, t: f64, x: &[f64], z: &[f64], p: &[f64], out: &mut Mat);
    fn f_z(&self, t: f64, x: &[f64], z: &[f64], p: &[f64], out: &mut Mat);
    fn f_p(&self, t: f64, x: &[f64], z: &[f64], p: &[f64], out: &mut Mat);
    fn h_x(&self, t: f64, x: &[f64], p: &[f64], out: &mut Mat);
    fn h_p(&self, t: f64, x: &[f64], p: &[f64], out: &mut Mat);
    fn g_x(&self, t: f64, x: &[f64], p: &[f64], out: &mut Mat) -> Result<()>;
    fn g_p(&self, t: f64, x: &[f64], p: &[f64], out: &mut Mat) -> Result<()>;

    fn param_names(&self) -> Vec<String> {
        (0..self.dims().n_p).map(|i| format!("p_{i}")).collect()
    }

    fn state_names(&self) -> Vec<String> {
        (0..self.dims().n_x).map(|i| format!("x_{i}")).collect()
    }
}

/// Discrete-time measurements: strictly increasing times, one y-vector each.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl MeasurementSeries {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} times but {} measurement vectors",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::Dimension("empty measurement series".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(
                "measurement times must strictly increase".into(),
            ));
        }
        let n_y = values[0].len();
        if values.iter().any(|v| v.len() != n_y) {
            return Err(Error::Dimension("ragged measurement vectors".into()));
        }
        Ok(MeasurementSeries { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_y(&self) -> usize {
        self.values[0].len()
    }

    /// Header row `t,y_1,...,y_n`, then one row per sample at full precision.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t")?;
        for i in 1..=self.n_y() {
            write!(w, ",y_{i}")?;
        }
        writeln!(w)?;
        for (t, y) in self.times.iter().zip(&self.values) {
            write!(w, "{}", fmt_f64(*t))?;
            for v in y {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 {
                continue; // header
            }
            let mut fields = line.split(',');
            let t = parse_field(fields.next(), lineno)?;
            let row: Vec<f64> = fields
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::Parse(format!("bad float {s:?} on line {}", lineno + 1))
                    })
                })
                .collect::<Result<_>>()?;
            times.push(t);
            values.push(row);
        }
        MeasurementSeries::new(times, values)
    }
}

fn parse_field(s: Option<&str>, lineno: usize) -> Result<f64> {
    s.ok_or_else(|| Error::Parse(format!("empty line {}", lineno + 1)))?
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad float on line {}", lineno + 1)))
}

/// Format with 17 significant digits so values round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Layout of the decision vector `theta = [p; c_0..c_M, a; x0]`.
///
/// The simplex block (the c-weights) is kept contiguous so projections stay
/// simple; `a` sits at the end of the q-block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaLayout {
    pub n_p: usize,
    /// Highest Erlang index M; the q-block has M+2 entries.
    pub order: usize,
    pub n_x: usize,
}

impl ThetaLayout {
    pub fn new(n_p: usize, order: usize, n_x: usize) -> Self {
        ThetaLayout { n_p, order, n_x }
    }

    pub fn n_c(&self) -> usize {
        self.order + 1
    }

    pub fn n_q(&self) -> usize {
        self.order + 2
    }

    pub fn len(&self) -> usize {
        self.n_p + self.n_q() + self.n_x
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn p_range(&self) -> std::ops::Range<usize> {
        0..self.n_p
    }

    pub fn c_range(&self) -> std::ops::Range<usize> {
        self.n_p..self.n_p + self.n_c()
    }

    pub fn a_index(&self) -> usize {
        self.n_p + self.n_c()
    }

    pub fn x0_range(&self) -> std::ops::Range<usize> {
        self.n_p + self.n_q()..self.len()
    }

    /// Constraint vector `w`: ones on the c-slots, zero elsewhere (and in
    /// particular zero on the a-slot), so `w . theta = sum_m c_m`.
    pub fn simplex_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        for i in self.c_range() {
            w[i] = 1.0;
        }
        w
    }

    pub fn pack(&self, p: &[f64], q: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.n_p || q.len() != self.n_q() || x0.len() != self.n_x {
            return Err(Error::Dimension(format!(
                "pack expects blocks ({}, {}, {}), got ({}, {}, {})",
                self.n_p,
                self.n_q(),
                self.n_x,
                p.len(),
                q.len(),
                x0.len()
            )));
        }
        let mut theta = Vec::with_capacity(self.len());
        theta.extend_from_slice(p);
        theta.extend_from_slice(q);
        theta.extend_from_slice(x0);
        Ok(theta)
    }

    pub fn unpack<'a>(&self, theta: &'a [f64]) -> Result<(&'a [f64], &'a [f64], &'a [f64])> {
        if theta.len() != self.len() {
            return Err(Error::Dimension(format!(
                "theta has length {}, layout expects {}",
                theta.len(),
                self.len()
            )));
        }
        let (p, rest) = theta.split_at(self.n_p);
        let (q, x0) = rest.split_at(self.n_q());
        Ok((p, q, x0))
    }
}

/// Finite-difference verification of one Jacobian.
#[derive(Debug, Clone)]
pub struct JacobianCheck {
    pub name: &'static str,
    pub max_error: f64,
    pub pass: bool,
}

/// Report from [`check_jacobians`].
#[derive(Debug, Clone)]
pub struct JacobianReport {
    pub checks: Vec<JacobianCheck>,
    pub tol: f64,
}

impl JacobianReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn max_error(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.max_error))
    }
}

fn fd_step(v: f64) -> f64 {
    1e-6_f64.max(1e-6 * v.abs())
}

/// Compare every analytic Jacobian of `model` against central finite
/// differences of its evaluator at the given point. Errors are relative to
/// `max(1, |entry|)`.
pub fn check_jacobians(
    model: &dyn Model,
    t: f64,
    x: &[f64],
    z: &[f64],
    p: &[f64],
    tol: f64,
) -> Result<JacobianReport> {
    let d = model.dims();
    let mut checks = Vec::new();

    // helper: central difference of an evaluator w.r.t. one input vector
    let fd_matrix = |eval: &dyn Fn(&[f64], &mut [f64]), arg: &[f64], rows: usize| -> Mat {
        let mut out = Mat::zeros(rows, arg.len());
        let mut lo = vec![0.0; rows];
        let mut hi = vec![0.0; rows];
        let mut pert = arg.to_vec();
        for j in 0..arg.len() {
            let h = fd_step(arg[j]);
            pert[j] = arg[j] + h;
            eval(&pert, &mut hi);
            pert[j] = arg[j] - h;
            eval(&pert, &mut lo);
            pert[j] = arg[j];
            for i in 0..rows {
                out[(i, j)] = (hi[i] - lo[i]) / (2.0 * h);
            }
        }
        out
    };

    let compare = |name: &'static str, analytic: &Mat, fd: &Mat| -> JacobianCheck {
        let mut max_error = 0.0_f64;
        for i in 0..analytic.rows() {
            for j in 0..analytic.cols() {
                let a = analytic[(i, j)];
                let f = fd[(i, j)];
                max_error = max_error.max((a - f).abs() / a.abs().max(1.0));
            }
        }
        JacobianCheck {
            name,
            max_error,
            pass: max_error <= tol,
        }
    };

    // f w.r.t. x, z, p
    let mut an = Mat::zeros(d.n_x, d.n_x);
    model.f_x(t, x, z, p, &mut an);
    let fd = fd_matrix(&|v, out| model.f(t, v, z, p, out), x, d.n_x);
    checks.push(compare("f_x", &an, &fd));

    let mut an = Mat::zeros(d.n_x, d.n_z);
    model.f_z(t, x, z, p, &mut an);
    let fd = fd_matrix(&|v, out| model.f(t, x, v, p, out), z, d.n_x);
    checks.push(compare("f_z", &an, &fd));

    let mut an = Mat::zeros(d.n_x, d.n_p);
    model.f_p(t, x, z, p, &mut an);
    let fd = fd_matrix(&|v, out| model.f(t, x, z, v, out), p, d.n_x);
    checks.push(compare("f_p", &an, &fd));

    // h w.r.t. x, p
    let mut an = Mat::zeros(d.n_z, d.n_x);
    model.h_x(t, x, p, &mut an);
    let fd = fd_matrix(&|v, out| model.h(t, v, p, out), x, d.n_z);
    checks.push(compare("h_x", &an, &fd));

    let mut an = Mat::zeros(d.n_z, d.n_p);
    model.h_p(t, x, p, &mut an);
    let fd = fd_matrix(&|v, out| model.h(t, x, v, out), p, d.n_z);
    checks.push(compare("h_p", &an, &fd));

    // g w.r.t. x, p
    let mut an = Mat::zeros(d.n_y, d.n_x);
    model.g_x(t, x, p, &mut an)?;
    let fd = fd_matrix(
        &|v, out| {
            model
                .g(t, v, p, out)
                .expect("g failed inside finite-difference check")
        },
        x,
        d.n_y,
    );
    checks.push(compare("g_x", &an, &fd));

    let mut an = Mat::zeros(d.n_y, d.n_p);
    model.g_p(t, x, p, &mut an)?;
    let fd = fd_matrix(
        &|v, out| {
            model
                .g(t, x, v, out)
                .expect("g failed inside finite-difference check")
        },
        p,
        d.n_y,
    );
    checks.push(compare("g_p", &an, &fd));

    Ok(JacobianReport { checks, tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// f = -x (no delay coupling), h = x, g = x.
    pub(crate) struct DecayModel;

    impl Model for DecayModel {
        fn dims(&self) -> Dims {
            Dims {
                n_x: 1,
                n_z: 1,
                n_y: 1,
                n_p: 1,
            }
        }
        fn f(&self, _t: f64, x: &[f64], _z: &[f64], _p: &[f64], out: &mut [f64]) {
            out[0] = -x[0];
        }
        fn h(&self, _t: f64, x: &[f64], _p: &[f64], out: &mut [f64]) {
            out[0] = x[0];
        }
        fn g(&self, _t: f64, x: &[f64], _p: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = x[0];
            Ok(())
        }
        fn f_x(&self, _t: f64, _x: &[f64], _z: &[f64], _p: &[f64], out: &mut Mat) {
            out[(0, 0)] = -1.0;
        }
        fn f_z(&self, _t: f64, _x: &[f64], _z: &[f64], _p: &[f64], out: &mut Mat) {
            out[(0, 0)] = 0.0;
        }
        fn f_p(&self, _t: f64, _x: &[f64], _z: &[f64], _p: &[f64], out: &mut Mat) {
            out[(0, 0)] = 0.0;
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
    }

    /// DecayModel with a deliberately wrong f_x entry.
    struct BrokenModel;

    impl Model for BrokenModel {
        fn dims(&self) -> Dims {
            DecayModel.dims()
        }
        fn f(&self, t: f64, x: &[f64], z: &[f64], p: &[f64], out: &mut [f64]) {
            DecayModel.f(t, x, z, p, out);
        }
        fn h(&self, t: f64, x: &[f64], p: &[f64], out: &mut [f64]) {
            DecayModel.h(t, x, p, out);
        }
        fn g(&self, t: f64, x: &[f64], p: &[f64], out: &mut [f64]) -> Result<()> {
            DecayModel.g(t, x, p, out)
        }
        fn f_x(&self, _t: f64, _x: &[f64], _z: &[f64], _p: &[f64], out: &mut Mat) {
            out[(0, 0)] = -0.5; // wrong on purpose
        }
        fn f_z(&self, t: f64, x: &[f64], z: &[f64], p: &[f64], out: &mut Mat) {
            DecayModel.f_z(t, x, z, p, out);
        }
        fn f_p(&self, t: f64, x: &[f64], z: &[f64], p: &[f64], out: &mut Mat) {
            DecayModel.f_p(t, x, z, p, out);
        }
        fn h_x(&self, t: f64, x: &[f64], p: &[f64], out: &mut Mat) {
            DecayModel.h_x(t, x, p, out);
        }
        fn h_p(&self, t: f64, x: &[f64], p: &[f64], out: &mut Mat) {
            DecayModel.h_p(t, x, p, out);
        }
        fn g_x(&self, t: f64, x: &[f64], p: &[f64], out: &mut Mat) -> Result<()> {
            DecayModel.g_x(t, x, p, out)
        }
        fn g_p(&self, t: f64, x: &[f64], p: &[f64], out: &mut Mat) -> Result<()> {
            DecayModel.g_p(t, x, p, out)
        }
    }

    #[test]
    fn linear_model_jacobians_exact() {
        let report = check_jacobians(&DecayModel, 0.0, &[0.7], &[0.7], &[1.0], 1e-5).unwrap();
        assert!(report.pass());
        let f_x = report.checks.iter().find(|c| c.name == "f_x").unwrap();
        assert!(f_x.max_error < 1e-9, "f_x error {}", f_x.max_error);
    }

    #[test]
    fn corrupted_jacobian_fails() {
        let report = check_jacobians(&BrokenModel, 0.0, &[0.7], &[0.7], &[1.0], 1e-5).unwrap();
        assert!(!report.pass());
        let f_x = report.checks.iter().find(|c| c.name == "f_x").unwrap();
        assert!(!f_x.pass);
    }

    #[test]
    fn theta_pack_concatenates() {
        // logistic with M = 0: theta = [kappa, c_0, a, N_0]
        let layout = ThetaLayout::new(1, 0, 1);
        let theta = layout.pack(&[4.0], &[1.0, 20.0], &[0.9]).unwrap();
        assert_eq!(theta, vec![4.0, 1.0, 20.0, 0.9]);
        let (p, q, x0) = layout.unpack(&theta).unwrap();
        assert_eq!(p, &[4.0]);
        assert_eq!(q, &[1.0, 20.0]);
        assert_eq!(x0, &[0.9]);
    }

    #[test]
    fn theta_pack_rejects_bad_lengths() {
        let layout = ThetaLayout::new(1, 0, 1);
        assert!(layout.pack(&[4.0, 5.0], &[1.0, 20.0], &[0.9]).is_err());
        assert!(layout.unpack(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn simplex_weights_pattern() {
        // n_p = 3, M = 2, n_x = 1: ones only on the three c-slots
        let layout = ThetaLayout::new(3, 2, 1);
        assert_eq!(
            layout.simplex_weights(),
            vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]
        );
        assert_eq!(layout.a_index(), 6);
    }

    #[test]
    fn measurement_series_roundtrip() {
        let series = MeasurementSeries::new(
            vec![0.0, 0.5, 1.0],
            vec![vec![1.0, -2.0], vec![0.1, 0.2], vec![1e-17, 3.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let back = MeasurementSeries::read_csv(buf.as_slice()).unwrap();
        assert_eq!(series, back);
    }

    #[test]
    fn measurement_series_requires_increasing_times() {
        assert!(MeasurementSeries::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(MeasurementSeries::new(vec![1.0, 0.5], vec![vec![1.0], vec![1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn theta_roundtrip_is_identity(
            p in proptest::collection::vec(-10.0..10.0f64, 0..4),
            c in proptest::collection::vec(0.0..1.0f64, 1..8),
            a in 0.1..50.0f64,
            x0 in proptest::collection::vec(-10.0..10.0f64, 1..4),
        ) {
            let layout = ThetaLayout::new(p.len(), c.len() - 1, x0.len());
            let mut q = c.clone();
            q.push(a);
            let theta = layout.pack(&p, &q, &x0).unwrap();
            prop_assert_eq!(theta.len(), layout.len());
            let (p2, q2, x02) = layout.unpack(&theta).unwrap();
            prop_assert_eq!(p2, &p[..]);
            prop_assert_eq!(q2, &q[..]);
            prop_assert_eq!(x02, &x0[..]);
            // w . theta = sum of c
            let w = layout.simplex_weights();
            let dot: f64 = w.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let csum: f64 = c.iter().sum();
            prop_assert!((dot - csum).abs() < 1e-12);
        }
    }
}
