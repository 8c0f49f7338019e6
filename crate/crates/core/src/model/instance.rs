use serde::Serialize;

use super::diffusion::{DiffusionSpec, DiffusionSummary};
use super::discount::DiscountSpec;
use super::payoff::{PayoffSpec, PayoffSummary};
use crate::error::{Error, Result};

/// Diffusion, discount and payoff bundled together. Immutable once built.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    diffusion: DiffusionSpec,
    discount: DiscountSpec,
    payoff: PayoffSpec,
    label: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceSummary {
    pub label: String,
    pub diffusion: DiffusionSummary,
    pub discount: String,
    pub payoff: PayoffSummary,
    pub mixing_nodes: usize,
    pub assumptions: Vec<String>,
}

impl ProblemInstance {
    pub fn new(
        diffusion: DiffusionSpec,
        discount: DiscountSpec,
        payoff: PayoffSpec,
        label: impl Into<String>,
    ) -> Result<Self> {
        payoff.validate(diffusion.domain())?;
        let domain = diffusion.domain();
        if let Some(k) = payoff.kinks().iter().find(|k| !domain.closure_contains(**k)) {
            return Err(Error::InvalidPayoff(format!("kink {k} lies outside the state space {domain}")));
        }
        Ok(Self { diffusion, discount, payoff, label: label.into() })
    }

    pub fn diffusion(&self) -> &DiffusionSpec {
        &self.diffusion
    }

    pub fn discount(&self) -> &DiscountSpec {
        &self.discount
    }

    pub fn payoff(&self) -> &PayoffSpec {
        &self.payoff
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Copy with a different diffusion representation (e.g. forced numerical path).
    pub fn with_diffusion(&self, diffusion: DiffusionSpec) -> Result<Self> {
        Self::new(diffusion, self.discount.clone(), self.payoff.clone(), self.label.clone())
    }

    pub fn with_discount(&self, discount: DiscountSpec) -> Self {
        Self { discount, ..self.clone() }
    }

    pub fn summary(&self) -> InstanceSummary {
        let mut assumptions = vec![
            "integrability of the discounted payoff: assumed, not verified".to_string(),
            "Lipschitz coefficients: spot-checked on a sample grid".to_string(),
            "value at an unbounded continuation end: decaying solution selected".to_string(),
        ];
        assumptions.extend(self.diffusion.warnings().iter().cloned());
        InstanceSummary {
            label: self.label.clone(),
            diffusion: self.diffusion.summary(),
            discount: self.discount.label(),
            payoff: self.payoff.summary(),
            mixing_nodes: self.discount.nodes().len(),
            assumptions,
        }
    }
}
