use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::interval::Interval;
use crate::error::{Error, Result};

/// A state-dependent coefficient `x ↦ c(x)`.
#[derive(Clone)]
pub enum Coefficient {
    /// `Σ c_k x^k`, lowest order first.
    Polynomial(Vec<f64>),
    /// `offset + amplitude · sin(frequency · x + phase)`.
    Sine { offset: f64, amplitude: f64, frequency: f64, phase: f64 },
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Coefficient::Polynomial(vec![c])
    }

    pub fn linear(slope: f64) -> Self {
        Coefficient::Polynomial(vec![0.0, slope])
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck),
            Coefficient::Sine { offset, amplitude, frequency, phase } => {
                offset + amplitude * (frequency * x + phase).sin()
            }
            Coefficient::Function(f) => f(x),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Coefficient::Polynomial(c) => format!("polynomial {c:?}"),
            Coefficient::Sine { offset, amplitude, frequency, phase } => {
                format!("{offset} + {amplitude} sin({frequency} x + {phase})")
            }
            Coefficient::Function(_) => "callable".into(),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

#[derive(Debug, Clone)]
pub enum DiffusionKind {
    BrownianMotion { mu: f64, sigma: f64 },
    /// `dX = μX dt + σX dW` on `(0, ∞)`.
    GeometricBrownianMotion { mu: f64, sigma: f64 },
    Custom { mu: Coefficient, sigma: Coefficient },
}

/// Time-homogeneous one-dimensional diffusion `dX = μ(X)dt + σ(X)dW` on an open interval.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    kind: DiffusionKind,
    domain: Interval,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffusionSummary {
    pub kind: String,
    pub mu: String,
    pub sigma: String,
    pub domain: String,
}

const VALIDATION_POINTS: usize = 401;
const DEFAULT_LIPSCHITZ_BOUND: f64 = 1e6;

impl DiffusionSpec {
    pub fn brownian(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(DiffusionKind::BrownianMotion { mu, sigma }, Interval::real_line())
    }

    pub fn geometric(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(DiffusionKind::GeometricBrownianMotion { mu, sigma }, Interval::positive_half_line())
    }

    pub fn custom(mu: Coefficient, sigma: Coefficient, domain: Interval) -> Result<Self> {
        Self::new(DiffusionKind::Custom { mu, sigma }, domain)
    }

    pub fn new(kind: DiffusionKind, domain: Interval) -> Result<Self> {
        if domain.lower_closed || domain.upper_closed || domain.is_point() {
            return Err(Error::InvalidDiffusion(format!("state space {domain} must be a non-empty open interval")));
        }
        match &kind {
            DiffusionKind::BrownianMotion { mu, sigma } | DiffusionKind::GeometricBrownianMotion { mu, sigma } => {
                if !mu.is_finite() || !sigma.is_finite() || *sigma == 0.0 {
                    return Err(Error::InvalidDiffusion(format!("need finite μ and σ ≠ 0, got μ={mu}, σ={sigma}")));
                }
            }
            DiffusionKind::Custom { .. } => {}
        }
        if let DiffusionKind::GeometricBrownianMotion { .. } = kind {
            if domain != Interval::positive_half_line() {
                return Err(Error::InvalidDiffusion("geometric Brownian motion lives on (0, +inf)".into()));
            }
        }
        let mut spec = Self { kind, domain, warnings: Vec::new() };
        spec.warnings = spec.validate(DEFAULT_LIPSCHITZ_BOUND)?;
        Ok(spec)
    }

    /// Checks finiteness and non-degeneracy on a sample grid and returns
    /// Lipschitz warnings for difference quotients above `bound`.
    pub fn validate(&self, bound: f64) -> Result<Vec<String>> {
        let grid = sample_grid(&self.domain, VALIDATION_POINTS);
        let mut warnings = Vec::new();
        for &x in &grid {
            let (m, s) = (self.mu(x), self.sigma(x));
            if !m.is_finite() || !s.is_finite() {
                return Err(Error::InvalidDiffusion(format!("non-finite coefficient at x={x}")));
            }
            if !(s * s > 0.0) {
                return Err(Error::InvalidDiffusion(format!("σ(x)² = 0 at x={x}")));
            }
        }
        for w in grid.windows(2) {
            let dx = w[1] - w[0];
            let qm = (self.mu(w[1]) - self.mu(w[0])).abs() / dx;
            let qs = (self.sigma(w[1]) - self.sigma(w[0])).abs() / dx;
            if qm > bound || qs > bound {
                warnings.push(format!(
                    "difference quotient {:.3e} exceeds Lipschitz bound {bound:e} on [{}, {}]",
                    qm.max(qs),
                    w[0],
                    w[1]
                ));
            }
        }
        Ok(warnings)
    }

    pub fn kind(&self) -> &DiffusionKind {
        &self.kind
    }

    pub fn domain(&self) -> &Interval {
        &self.domain
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn mu(&self, x: f64) -> f64 {
        match &self.kind {
            DiffusionKind::BrownianMotion { mu, .. } => *mu,
            DiffusionKind::GeometricBrownianMotion { mu, .. } => mu * x,
            DiffusionKind::Custom { mu, .. } => mu.eval(x),
        }
    }

    pub fn sigma(&self, x: f64) -> f64 {
        match &self.kind {
            DiffusionKind::BrownianMotion { sigma, .. } => *sigma,
            DiffusionKind::GeometricBrownianMotion { sigma, .. } => sigma * x,
            DiffusionKind::Custom { sigma, .. } => sigma.eval(x),
        }
    }

    pub fn sigma2(&self, x: f64) -> f64 {
        let s = self.sigma(x);
        s * s
    }

    /// The same dynamics expressed as a `Custom` diffusion, which routes
    /// resolvent computations through the numerical solver.
    pub fn as_custom(&self) -> Self {
        let kind = match &self.kind {
            DiffusionKind::BrownianMotion { mu, sigma } => DiffusionKind::Custom {
                mu: Coefficient::constant(*mu),
                sigma: Coefficient::constant(*sigma),
            },
            DiffusionKind::GeometricBrownianMotion { mu, sigma } => DiffusionKind::Custom {
                mu: Coefficient::linear(*mu),
                sigma: Coefficient::linear(*sigma),
            },
            k @ DiffusionKind::Custom { .. } => k.clone(),
        };
        Self { kind, domain: self.domain, warnings: self.warnings.clone() }
    }

    pub fn summary(&self) -> DiffusionSummary {
        let (kind, mu, sigma) = match &self.kind {
            DiffusionKind::BrownianMotion { mu, sigma } => ("brownian_motion", mu.to_string(), sigma.to_string()),
            DiffusionKind::GeometricBrownianMotion { mu, sigma } => {
                ("geometric_brownian_motion", mu.to_string(), sigma.to_string())
            }
            DiffusionKind::Custom { mu, sigma } => ("custom", mu.describe(), sigma.describe()),
        };
        DiffusionSummary { kind: kind.into(), mu, sigma, domain: self.domain.to_string() }
    }
}

/// Interior sample points of an open interval. Infinite ends are sampled
/// out to a fixed scale; the positive half line is sampled geometrically.
pub fn sample_grid(domain: &Interval, n: usize) -> Vec<f64> {
    let (lo, hi) = (domain.lower, domain.upper);
    let n = n.max(2);
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (1..=n).map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64).collect(),
        (false, false) => (0..n).map(|i| -50.0 + 100.0 * i as f64 / (n - 1) as f64).collect(),
        (true, false) if lo == 0.0 => (0..n).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / (n - 1) as f64)).collect(),
        (true, false) => (1..=n).map(|i| lo + 100.0 * i as f64 / n as f64).collect(),
        (false, true) => (1..=n).map(|i| hi - 100.0 * i as f64 / n as f64).rev().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_evaluate() {
        let p = Coefficient::Polynomial(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.eval(2.0), 17.0);
        let s = Coefficient::Sine { offset: 0.0, amplitude: 1.0, frequency: 1.0, phase: 0.0 };
        assert!((s.eval(1.0) - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn gbm_coefficients_scale_with_state() {
        let d = DiffusionSpec::geometric(0.1, 0.3).unwrap();
        assert!((d.mu(2.0) - 0.2).abs() < 1e-15);
        assert!((d.sigma2(2.0) - 0.36).abs() < 1e-15);
        let c = d.as_custom();
        assert!((c.mu(2.0) - 0.2).abs() < 1e-15);
        assert!((c.sigma(2.0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn degenerate_volatility_rejected() {
        let r = DiffusionSpec::custom(
            Coefficient::constant(0.0),
            Coefficient::Polynomial(vec![0.0, 1.0]),
            Interval::real_line(),
        );
        assert!(r.is_err());
        assert!(DiffusionSpec::brownian(0.0, 0.0).is_err());
        assert!(DiffusionSpec::new(
            DiffusionKind::BrownianMotion { mu: 0.0, sigma: 1.0 },
            Interval::closed(0.0, 1.0).unwrap()
        )
        .is_err());
    }

    #[test]
    fn steep_coefficients_warn() {
        let d = DiffusionSpec::custom(
            Coefficient::Polynomial(vec![0.0, 0.0, 0.0, 1.0]),
            Coefficient::constant(1.0),
            Interval::real_line(),
        )
        .unwrap();
        assert!(d.validate(10.0).unwrap().len() > 0);
        assert!(d.warnings().is_empty());
    }
}
