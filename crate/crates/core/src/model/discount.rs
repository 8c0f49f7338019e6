use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// One node of a discrete mixing measure: `δ(t) ≈ Σ weight · exp(-rate · t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixNode {
    pub rate: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscountKind {
    Exponential { rate: f64 },
    Hyperbolic { beta: f64 },
    /// `(1 + βt)^{-γ/β}`; `γ = β` gives the hyperbolic case.
    GeneralizedHyperbolic { beta: f64, gamma: f64 },
    PseudoExponential { weights: Vec<f64>, rates: Vec<f64> },
    WeightedMixture { nodes: Vec<MixNode> },
}

/// How the continuous Gamma mixing measure of the hyperbolic families is
/// discretized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MixingRule {
    /// Composite Gauss–Legendre on geometrically graded panels.
    Graded { order: usize },
    /// Generalized Gauss–Laguerre against the Gamma density.
    GaussLaguerre { nodes: usize },
}

impl Default for MixingRule {
    fn default() -> Self {
        MixingRule::Graded { order: 18 }
    }
}

/// A discount function together with its mixing-measure representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountSpec {
    kind: DiscountKind,
    rule: MixingRule,
    nodes: Vec<MixNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubadditivityReport {
    /// Minimum over the grid of `δ(t+s) - δ(t)δ(s)`.
    pub min_gap: f64,
    pub at: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeInequalityReport {
    /// Minimum of `δ'(t) - δ(t)δ'(0)`.
    pub min_derivative_margin: f64,
    pub derivative_at: f64,
    /// Minimum of `|δ'(0)| t - (1 - δ(t))`.
    pub min_linear_margin: f64,
    pub linear_at: f64,
}

impl DerivativeInequalityReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.min_derivative_margin >= -slack && self.min_linear_margin >= -slack
    }
}

fn check_weights(weights: &[f64], rates: &[f64]) -> Result<()> {
    if weights.is_empty() || weights.len() != rates.len() {
        return Err(Error::InvalidDiscount("weights and rates must be non-empty and of equal length".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidDiscount("weights must be non-negative".into()));
    }
    if rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::InvalidDiscount("rates must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDiscount(format!("weights sum to {total}, expected 1")));
    }
    if !weights.iter().zip(rates).any(|(w, r)| *w > 0.0 && *r > 0.0) {
        return Err(Error::InvalidDiscount("discount must satisfy δ(t) < 1 for t > 0".into()));
    }
    Ok(())
}

impl DiscountSpec {
    pub fn new(kind: DiscountKind) -> Result<Self> {
        Self::with_rule(kind, MixingRule::default())
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(DiscountKind::Exponential { rate })
    }

    pub fn hyperbolic(beta: f64) -> Result<Self> {
        Self::new(DiscountKind::Hyperbolic { beta })
    }

    pub fn generalized_hyperbolic(beta: f64, gamma: f64) -> Result<Self> {
        Self::new(DiscountKind::GeneralizedHyperbolic { beta, gamma })
    }

    pub fn with_rule(kind: DiscountKind, rule: MixingRule) -> Result<Self> {
        let nodes = match &kind {
            DiscountKind::Exponential { rate } => {
                if !(*rate > 0.0) || !rate.is_finite() {
                    return Err(Error::InvalidDiscount(format!("exponential rate must be positive, got {rate}")));
                }
                vec![MixNode { rate: *rate, weight: 1.0 }]
            }
            DiscountKind::Hyperbolic { beta } => gamma_nodes(*beta, *beta, rule)?,
            DiscountKind::GeneralizedHyperbolic { beta, gamma } => gamma_nodes(*beta, *gamma, rule)?,
            DiscountKind::PseudoExponential { weights, rates } => {
                check_weights(weights, rates)?;
                weights
                    .iter()
                    .zip(rates)
                    .map(|(&weight, &rate)| MixNode { rate, weight })
                    .collect()
            }
            DiscountKind::WeightedMixture { nodes } => {
                let w: Vec<f64> = nodes.iter().map(|n| n.weight).collect();
                let r: Vec<f64> = nodes.iter().map(|n| n.rate).collect();
                check_weights(&w, &r)?;
                nodes.clone()
            }
        };
        Ok(Self { kind, rule, nodes })
    }

    pub fn kind(&self) -> &DiscountKind {
        &self.kind
    }

    pub fn rule(&self) -> MixingRule {
        self.rule
    }

    /// Quadrature nodes of the mixing measure; weights sum to one.
    pub fn nodes(&self) -> &[MixNode] {
        &self.nodes
    }

    pub fn delta(&self, t: f64) -> f64 {
        match &self.kind {
            DiscountKind::Exponential { rate } => (-rate * t).exp(),
            DiscountKind::Hyperbolic { beta } => 1.0 / (1.0 + beta * t),
            DiscountKind::GeneralizedHyperbolic { beta, gamma } => (1.0 + beta * t).powf(-gamma / beta),
            DiscountKind::PseudoExponential { .. } | DiscountKind::WeightedMixture { .. } => self.mixture_delta(t),
        }
    }

    pub fn delta_prime(&self, t: f64) -> f64 {
        match &self.kind {
            DiscountKind::Exponential { rate } => -rate * (-rate * t).exp(),
            DiscountKind::Hyperbolic { beta } => -beta / (1.0 + beta * t).powi(2),
            DiscountKind::GeneralizedHyperbolic { beta, gamma } => {
                -gamma * (1.0 + beta * t).powf(-gamma / beta - 1.0)
            }
            DiscountKind::PseudoExponential { .. } | DiscountKind::WeightedMixture { .. } => {
                -self.nodes.iter().map(|n| n.weight * n.rate * (-n.rate * t).exp()).sum::<f64>()
            }
        }
    }

    /// Right derivative at zero; equals minus the first moment of the mixing measure.
    pub fn delta_prime_zero(&self) -> f64 {
        self.delta_prime(0.0)
    }

    /// `Σ w_i exp(-r_i t)` from the quadrature nodes.
    pub fn mixture_delta(&self, t: f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * (-n.rate * t).exp()).sum()
    }

    /// Minimum of `δ(t+s) - δ(t)δ(s)` over the grid.
    pub fn check_log_subadditive(&self, grid: &[(f64, f64)]) -> SubadditivityReport {
        grid.iter().fold(
            SubadditivityReport { min_gap: f64::INFINITY, at: (f64::NAN, f64::NAN) },
            |acc, &(s, t)| {
                let gap = self.delta(t + s) - self.delta(t) * self.delta(s);
                if gap < acc.min_gap {
                    SubadditivityReport { min_gap: gap, at: (s, t) }
                } else {
                    acc
                }
            },
        )
    }

    /// Worst margins of `δ'(t) ≥ δ(t)δ'(0)` and `1 - δ(t) ≤ |δ'(0)| t`.
    pub fn derivative_inequalities(&self, tgrid: &[f64]) -> DerivativeInequalityReport {
        let d0 = self.delta_prime_zero();
        let mut rep = DerivativeInequalityReport {
            min_derivative_margin: f64::INFINITY,
            derivative_at: f64::NAN,
            min_linear_margin: f64::INFINITY,
            linear_at: f64::NAN,
        };
        for &t in tgrid {
            let m1 = self.delta_prime(t) - self.delta(t) * d0;
            if m1 < rep.min_derivative_margin {
                rep.min_derivative_margin = m1;
                rep.derivative_at = t;
            }
            let m2 = d0.abs() * t - (1.0 - self.delta(t));
            if m2 < rep.min_linear_margin {
                rep.min_linear_margin = m2;
                rep.linear_at = t;
            }
        }
        rep
    }

    /// Largest relative deviation between the node mixture and `δ` on a grid.
    pub fn mixture_error(&self, tgrid: &[f64]) -> f64 {
        tgrid
            .iter()
            .map(|&t| {
                let d = self.delta(t);
                (self.mixture_delta(t) - d).abs() / d
            })
            .fold(0.0, f64::max)
    }

    /// Finite-node analogue of the weighted-discount regularity condition:
    /// `t^{-1/2} Σ w r (1 - e^{-rt})` evaluated on a decreasing t-grid.
    pub fn weight_regularity_profile(&self, tgrid: &[f64]) -> Vec<(f64, f64)> {
        tgrid
            .iter()
            .map(|&t| {
                let s: f64 = self
                    .nodes
                    .iter()
                    .map(|n| n.weight * n.rate * -(-n.rate * t).exp_m1())
                    .sum();
                (t, s / t.sqrt())
            })
            .collect()
    }

    pub fn label(&self) -> String {
        match &self.kind {
            DiscountKind::Exponential { rate } => format!("exp(-{rate} t)"),
            DiscountKind::Hyperbolic { beta } => format!("1/(1+{beta} t)"),
            DiscountKind::GeneralizedHyperbolic { beta, gamma } => format!("(1+{beta} t)^(-{gamma}/{beta})"),
            DiscountKind::PseudoExponential { weights, .. } => format!("pseudo-exponential ({} terms)", weights.len()),
            DiscountKind::WeightedMixture { nodes } => format!("weighted mixture ({} nodes)", nodes.len()),
        }
    }
}

/// Mixing nodes for `(1+βt)^{-γ/β}`: the mixing law of the rate is Gamma
/// with shape `γ/β` and scale `β`.
fn gamma_nodes(beta: f64, gamma: f64, rule: MixingRule) -> Result<Vec<MixNode>> {
    if !(beta > 0.0) || !beta.is_finite() || !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidDiscount(format!(
            "hyperbolic parameters must be positive, got beta={beta}, gamma={gamma}"
        )));
    }
    let shape = gamma / beta;
    let (s, w) = match rule {
        MixingRule::Graded { order } => {
            if order < 2 {
                return Err(Error::InvalidDiscount("graded rule needs order ≥ 2".into()));
            }
            quad::graded_gamma_rule(shape, order)
        }
        MixingRule::GaussLaguerre { nodes } => {
            if nodes == 0 {
                return Err(Error::InvalidDiscount("Gauss–Laguerre rule needs at least one node".into()));
            }
            quad::gauss_laguerre(nodes, shape - 1.0)
        }
    };
    Ok(s.into_iter()
        .zip(w)
        .map(|(s, weight)| MixNode { rate: beta * s, weight })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tgrid() -> Vec<f64> {
        let mut g = vec![0.0, 1e-6, 1e-4, 1e-2];
        g.extend((1..=100).map(|k| k as f64));
        g
    }

    #[test]
    fn exponential_is_multiplicative() {
        let d = DiscountSpec::exponential(0.3).unwrap();
        let grid: Vec<(f64, f64)> = (0..10).flat_map(|i| (0..10).map(move |j| (i as f64, j as f64 * 0.5))).collect();
        let rep = d.check_log_subadditive(&grid);
        assert!(rep.min_gap.abs() < 1e-15);
        let di = d.derivative_inequalities(&tgrid());
        assert!(di.min_derivative_margin.abs() < 1e-15);
        assert!(di.holds(1e-12));
    }

    #[test]
    fn hyperbolic_gap_at_one_one() {
        let d = DiscountSpec::hyperbolic(1.0).unwrap();
        let rep = d.check_log_subadditive(&[(1.0, 1.0)]);
        assert!((rep.min_gap - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn hyperbolic_linear_bound_example() {
        let d = DiscountSpec::hyperbolic(2.0).unwrap();
        assert!((1.0 - d.delta(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.delta_prime_zero(), -2.0);
        let rep = d.derivative_inequalities(&[1.0]);
        assert!((rep.min_linear_margin - (2.0 - 2.0 / 3.0)).abs() < 1e-15);
        // δ'(1) = -2/9, δ(1)δ'(0) = -2/3
        assert!((rep.min_derivative_margin - (-2.0 / 9.0 + 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn builtin_mixtures_reproduce_delta() {
        let specs = [
            DiscountSpec::exponential(0.7).unwrap(),
            DiscountSpec::hyperbolic(0.5).unwrap(),
            DiscountSpec::hyperbolic(0.1).unwrap(),
            DiscountSpec::generalized_hyperbolic(1.0, 2.0).unwrap(),
            DiscountSpec::generalized_hyperbolic(1.0, 0.5).unwrap(),
            DiscountSpec::new(DiscountKind::PseudoExponential { weights: vec![0.3, 0.7], rates: vec![0.1, 1.0] })
                .unwrap(),
        ];
        for d in &specs {
            assert!(d.mixture_error(&tgrid()) < 1e-8, "{}: {}", d.label(), d.mixture_error(&tgrid()));
            let w: f64 = d.nodes().iter().map(|n| n.weight).sum();
            assert!((w - 1.0).abs() < 1e-12);
            let m1: f64 = d.nodes().iter().map(|n| n.weight * n.rate).sum();
            assert!((m1 + d.delta_prime_zero()).abs() < 1e-9 * d.delta_prime_zero().abs());
        }
    }

    #[test]
    fn generalized_hyperbolic_with_gamma_equal_beta_is_hyperbolic() {
        let g = DiscountSpec::generalized_hyperbolic(0.4, 0.4).unwrap();
        let h = DiscountSpec::hyperbolic(0.4).unwrap();
        for t in [0.0, 0.5, 3.0, 40.0] {
            assert!((g.delta(t) - h.delta(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DiscountSpec::exponential(0.0).is_err());
        assert!(DiscountSpec::hyperbolic(-1.0).is_err());
        assert!(DiscountSpec::new(DiscountKind::PseudoExponential { weights: vec![0.5], rates: vec![1.0] }).is_err());
        assert!(DiscountSpec::new(DiscountKind::WeightedMixture { nodes: vec![MixNode { rate: 0.0, weight: 1.0 }] })
            .is_err());
    }

    #[test]
    fn gauss_laguerre_rule_is_available() {
        let d = DiscountSpec::with_rule(DiscountKind::Hyperbolic { beta: 1.0 }, MixingRule::GaussLaguerre { nodes: 64 })
            .unwrap();
        assert_eq!(d.nodes().len(), 64);
        assert!(d.mixture_error(&[0.0, 0.5, 1.0, 2.0]) < 1e-8);
    }

    #[test]
    fn regularity_profile_vanishes() {
        let d = DiscountSpec::generalized_hyperbolic(1.0, 2.0).unwrap();
        let prof = d.weight_regularity_profile(&[1e-2, 1e-4, 1e-6]);
        assert!(prof[2].1 < prof[1].1 && prof[1].1 < prof[0].1);
        assert!(prof[2].1 < 1e-2);
    }
}
