use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::diffusion::sample_grid;
use super::interval::{Interval, Side};
use crate::error::{Error, Result};

/// A payoff that is C² between finitely many kinks. One-sided derivatives at
/// a kink are the limits from the corresponding side.
pub trait PiecewiseSmooth: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn deriv(&self, x: f64, side: Side) -> f64;
    fn deriv2(&self, x: f64, side: Side) -> f64;
}

/// Natural cubic spline through `(xs, ys)`, restarted at every kink so that
/// derivatives may jump there, and extended linearly beyond the table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots, one-sided at kinks: `m_left[i]` is used on the
    /// segment ending at `xs[i]`, `m_right[i]` on the segment starting there.
    m_left: Vec<f64>,
    m_right: Vec<f64>,
}

impl TableSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, kinks: &[f64]) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidPayoff("table needs at least two points and equal lengths".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPayoff("table abscissae must be strictly increasing".into()));
        }
        let n = xs.len();
        let mut breaks = vec![0];
        for &k in kinks {
            match xs.iter().position(|&x| x == k) {
                Some(i) if i > 0 && i < n - 1 => breaks.push(i),
                Some(_) => {}
                None => return Err(Error::InvalidPayoff(format!("kink {k} is not a table abscissa"))),
            }
        }
        breaks.push(n - 1);
        breaks.sort_unstable();
        breaks.dedup();
        let mut m_left = vec![0.0; n];
        let mut m_right = vec![0.0; n];
        for w in breaks.windows(2) {
            let m = natural_second_derivatives(&xs[w[0]..=w[1]], &ys[w[0]..=w[1]]);
            for (j, mj) in m.iter().enumerate() {
                let i = w[0] + j;
                if j > 0 {
                    m_left[i] = *mj;
                }
                if i < w[1] {
                    m_right[i] = *mj;
                }
            }
        }
        Ok(Self { xs, ys, m_left, m_right })
    }

    fn segment(&self, x: f64, side: Side) -> Option<usize> {
        let n = self.xs.len();
        if x < self.xs[0] || (x == self.xs[0] && side == Side::Left) {
            return None;
        }
        if x > self.xs[n - 1] || (x == self.xs[n - 1] && side == Side::Right) {
            return None;
        }
        let i = self.xs.partition_point(|&k| k < x);
        // i is the first knot ≥ x
        let seg = if i < n && self.xs[i] == x {
            match side {
                Side::Left => i - 1,
                Side::Right => i,
            }
        } else {
            i - 1
        };
        Some(seg.min(n - 2))
    }

    /// Value and the first two derivatives on segment `i`.
    fn eval_segment(&self, i: usize, x: f64) -> (f64, f64, f64) {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.m_right[i], self.m_left[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let d2 = a * m0 + b * m1;
        (v, d, d2)
    }

    fn eval(&self, x: f64, side: Side) -> (f64, f64, f64) {
        let n = self.xs.len();
        match self.segment(x, side) {
            Some(i) => self.eval_segment(i, x),
            None if x <= self.xs[0] => {
                let (y, d, _) = self.eval_segment(0, self.xs[0]);
                (y + d * (x - self.xs[0]), d, 0.0)
            }
            None => {
                let (y, d, _) = self.eval_segment(n - 2, self.xs[n - 1]);
                (y + d * (x - self.xs[n - 1]), d, 0.0)
            }
        }
    }
}

fn natural_second_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations.
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    let mut upper = vec![0.0; k];
    for j in 0..k {
        let i = j + 1;
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        diag[j] = 2.0 * (h0 + h1);
        upper[j] = h1;
        rhs[j] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
    }
    for j in 1..k {
        let lower = xs[j + 1] - xs[j];
        let w = lower / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for j in (0..k - 1).rev() {
        m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
    }
    m
}

impl PiecewiseSmooth for TableSpline {
    fn value(&self, x: f64) -> f64 {
        self.eval(x, Side::Right).0
    }
    fn deriv(&self, x: f64, side: Side) -> f64 {
        self.eval(x, side).1
    }
    fn deriv2(&self, x: f64, side: Side) -> f64 {
        self.eval(x, side).2
    }
}

#[derive(Clone)]
pub enum PayoffKind {
    /// `(K - x)^+`
    Put { strike: f64 },
    /// `x ∧ K`
    CappedIdentity { cap: f64 },
    CustomTable(TableSpline),
    Function(Arc<dyn PiecewiseSmooth>),
}

impl fmt::Debug for PayoffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoffKind::Put { strike } => write!(f, "Put {{ strike: {strike} }}"),
            PayoffKind::CappedIdentity { cap } => write!(f, "CappedIdentity {{ cap: {cap} }}"),
            PayoffKind::CustomTable(t) => write!(f, "CustomTable({} knots)", t.xs.len()),
            PayoffKind::Function(_) => write!(f, "Function"),
        }
    }
}

/// Non-negative payoff with its kink set and the declared well-posedness exponent.
#[derive(Debug, Clone)]
pub struct PayoffSpec {
    kind: PayoffKind,
    kinks: Vec<f64>,
    zeta: Option<f64>,
    label: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PayoffSummary {
    pub label: String,
    pub kinks: Vec<f64>,
    pub zeta: Option<f64>,
}

const MIN_KINK_SPACING: f64 = 1e-12;

impl PayoffSpec {
    pub fn put(strike: f64) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::InvalidPayoff(format!("strike must be positive, got {strike}")));
        }
        Ok(Self { kind: PayoffKind::Put { strike }, kinks: vec![strike], zeta: None, label: format!("(K - x)^+, K={strike}") })
    }

    pub fn capped_identity(cap: f64) -> Result<Self> {
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(Error::InvalidPayoff(format!("cap must be positive, got {cap}")));
        }
        Ok(Self { kind: PayoffKind::CappedIdentity { cap }, kinks: vec![cap], zeta: None, label: format!("x ∧ K, K={cap}") })
    }

    pub fn table(xs: Vec<f64>, ys: Vec<f64>, kinks: Vec<f64>) -> Result<Self> {
        if ys.iter().any(|y| !(*y >= 0.0)) {
            return Err(Error::InvalidPayoff("table values must be non-negative".into()));
        }
        let spline = TableSpline::new(xs, ys, &kinks)?;
        Self::from_parts(PayoffKind::CustomTable(spline), kinks, "custom table".into())
    }

    pub fn function(f: Arc<dyn PiecewiseSmooth>, kinks: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        Self::from_parts(PayoffKind::Function(f), kinks, label.into())
    }

    fn from_parts(kind: PayoffKind, mut kinks: Vec<f64>, label: String) -> Result<Self> {
        kinks.sort_by(f64::total_cmp);
        if kinks.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidPayoff("kinks must be finite".into()));
        }
        if kinks.windows(2).any(|w| w[1] - w[0] < MIN_KINK_SPACING) {
            return Err(Error::InvalidPayoff("kinks must be distinct".into()));
        }
        Ok(Self { kind, kinks, zeta: None, label })
    }

    pub fn with_zeta(mut self, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0) {
            return Err(Error::InvalidPayoff(format!("ζ must be positive, got {zeta}")));
        }
        self.zeta = Some(zeta);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Checks non-negativity and continuity across kinks inside `domain`.
    pub fn validate(&self, domain: &Interval) -> Result<()> {
        for x in sample_grid(domain, 401) {
            let v = self.value(x);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidPayoff(format!("f({x}) = {v} is not a finite non-negative value")));
            }
        }
        for &k in self.kinks.iter().filter(|k| domain.contains(**k)) {
            let h = 1e-7 * (1.0 + k.abs());
            let jump = (self.value(k - h) - self.value(k + h)).abs();
            let slope = self.deriv(k, Side::Left).abs().max(self.deriv(k, Side::Right).abs());
            if jump > 4.0 * h * slope + 1e-9 * (1.0 + self.value(k).abs()) {
                return Err(Error::InvalidPayoff(format!("payoff is discontinuous at kink {k}")));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &PayoffKind {
        &self.kind
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn zeta(&self) -> Option<f64> {
        self.zeta
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_kink(&self, x: f64) -> bool {
        self.kinks.iter().any(|&k| k == x)
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            PayoffKind::Put { strike } => (strike - x).max(0.0),
            PayoffKind::CappedIdentity { cap } => x.min(*cap),
            PayoffKind::CustomTable(t) => t.value(x),
            PayoffKind::Function(f) => f.value(x),
        }
    }

    pub fn deriv(&self, x: f64, side: Side) -> f64 {
        match &self.kind {
            PayoffKind::Put { strike } => {
                if below(x, *strike, side) {
                    -1.0
                } else {
                    0.0
                }
            }
            PayoffKind::CappedIdentity { cap } => {
                if below(x, *cap, side) {
                    1.0
                } else {
                    0.0
                }
            }
            PayoffKind::CustomTable(t) => t.deriv(x, side),
            PayoffKind::Function(f) => f.deriv(x, side),
        }
    }

    pub fn deriv2(&self, x: f64, side: Side) -> f64 {
        match &self.kind {
            PayoffKind::Put { .. } | PayoffKind::CappedIdentity { .. } => 0.0,
            PayoffKind::CustomTable(t) => t.deriv2(x, side),
            PayoffKind::Function(f) => f.deriv2(x, side),
        }
    }

    pub fn summary(&self) -> PayoffSummary {
        PayoffSummary { label: self.label.clone(), kinks: self.kinks.clone(), zeta: self.zeta }
    }
}

/// Whether the one-sided neighbourhood of `x` lies below the breakpoint `k`.
fn below(x: f64, k: f64, side: Side) -> bool {
    match side {
        Side::Left => x <= k,
        Side::Right => x < k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_one_sided_derivatives() {
        let p = PayoffSpec::put(1.0).unwrap();
        assert_eq!(p.value(0.25), 0.75);
        assert_eq!(p.deriv(1.0, Side::Left), -1.0);
        assert_eq!(p.deriv(1.0, Side::Right), 0.0);
        assert_eq!(p.deriv(0.5, Side::Right), -1.0);
        assert!(p.validate(&Interval::positive_half_line()).is_ok());
    }

    #[test]
    fn capped_identity() {
        let p = PayoffSpec::capped_identity(2.0).unwrap();
        assert_eq!(p.value(3.0), 2.0);
        assert_eq!(p.deriv(2.0, Side::Left), 1.0);
        assert_eq!(p.deriv(2.0, Side::Right), 0.0);
    }

    #[test]
    fn spline_reproduces_cubic_free_data_and_kink() {
        // |x - 1| sampled on a grid with a kink at 1
        let xs: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x - 1.0f64).abs()).collect();
        let p = PayoffSpec::table(xs, ys, vec![1.0]).unwrap();
        assert!((p.value(0.55) - 0.45).abs() < 1e-12);
        assert!((p.deriv(1.0, Side::Left) + 1.0).abs() < 1e-12);
        assert!((p.deriv(1.0, Side::Right) - 1.0).abs() < 1e-12);
        assert!((p.value(3.0) - 2.0).abs() < 1e-12);
        assert!(p.validate(&Interval::real_line()).is_ok());
    }

    #[test]
    fn spline_interpolates_smooth_function() {
        let xs: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + x.sin()).collect();
        let t = TableSpline::new(xs.clone(), ys.clone(), &[]).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((t.value(*x) - y).abs() < 1e-14);
        }
        assert!((t.value(1.025) - (1.0 + 1.025f64.sin())).abs() < 1e-5);
        let h = 1e-6;
        let fd = (t.value(0.7 + h) - t.value(0.7 - h)) / (2.0 * h);
        assert!((t.deriv(0.7, Side::Right) - fd).abs() < 1e-7);
    }

    #[test]
    fn rejects_negative_or_bad_kinks() {
        assert!(PayoffSpec::table(vec![0.0, 1.0], vec![1.0, -1.0], vec![]).is_err());
        assert!(PayoffSpec::table(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0], vec![0.5]).is_err());
        assert!(PayoffSpec::put(0.0).is_err());
    }
}
