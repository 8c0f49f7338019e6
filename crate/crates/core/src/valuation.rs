//! Discount-weighted values `J(x,S)`, `V(t,x,S)`, their one-sided spatial
//! derivatives and the generator `𝓛V(0,x±,S)`, obtained by mixing resolvent
//! values over the nodes of the discount's mixing measure.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{MixNode, ProblemInstance, Side, StoppingRegion};
use crate::resolvent::{ComponentSolution, ResolventKernel, SolverSettings};

/// Precomputed mixture of resolvent solutions for one instance and region.
#[derive(Debug, Clone)]
pub struct ValueEvaluator {
    kernel: ResolventKernel,
    nodes: Vec<MixNode>,
    /// `solutions[g][i]`: component `g` at mixing rate `nodes[i].rate`.
    solutions: Vec<Vec<ComponentSolution>>,
    delta_prime_zero: f64,
}

impl ValueEvaluator {
    pub fn new(instance: &ProblemInstance, region: &StoppingRegion, settings: SolverSettings) -> Result<Self> {
        Self::from_kernel(ResolventKernel::new(instance, region, settings)?)
    }

    pub fn from_kernel(kernel: ResolventKernel) -> Result<Self> {
        let nodes = kernel.instance().discount().nodes().to_vec();
        let solutions = (0..kernel.gaps().len())
            .map(|g| {
                nodes
                    .par_iter()
                    .map(|n| kernel.component(g, n.rate))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let delta_prime_zero = kernel.instance().discount().delta_prime_zero();
        if !delta_prime_zero.is_finite() {
            return Err(Error::InvalidDiscount("δ'(0) must be finite".into()));
        }
        Ok(Self { kernel, nodes, solutions, delta_prime_zero })
    }

    pub fn kernel(&self) -> &ResolventKernel {
        &self.kernel
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.kernel.instance()
    }

    pub fn region(&self) -> &StoppingRegion {
        self.kernel.region()
    }

    pub fn nodes(&self) -> &[MixNode] {
        &self.nodes
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        let d = self.instance().diffusion().domain();
        if d.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { x, domain: d.to_string() })
        }
    }

    /// `Σ_i w_i e^{-r_i t} (v, v_x, v_xx)(x)` on component `g`.
    fn mix(&self, g: usize, x: f64, t: f64) -> (f64, f64, f64) {
        let mut acc = (0.0, 0.0, 0.0);
        for (n, sol) in self.nodes.iter().zip(&self.solutions[g]) {
            let w = if t == 0.0 { n.weight } else { n.weight * (-n.rate * t).exp() };
            let (v, vx, vxx) = sol.eval(x);
            acc.0 += w * v;
            acc.1 += w * vx;
            acc.2 += w * vxx;
        }
        acc
    }

    /// `J(x,S) = E^x[δ(ρ_S) f(X_{ρ_S})]`.
    pub fn value_j(&self, x: f64) -> Result<f64> {
        self.value_v(0.0, x)
    }

    /// `V(t,x,S) = E^x[δ(t + ρ_S) f(X_{ρ_S})]`.
    pub fn value_v(&self, t: f64, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        if !(t >= 0.0) {
            return Err(Error::Parameter(format!("time must be non-negative, got {t}")));
        }
        match self.kernel.gap_index(x) {
            Some(g) => Ok(self.mix(g, x, t).0),
            None => Ok(self.instance().discount().delta(t) * self.instance().payoff().value(x)),
        }
    }

    /// `V_x(0, x±, S)`.
    pub fn vx_onesided(&self, x: f64, side: Side) -> Result<f64> {
        self.vx_at(0.0, x, side)
    }

    /// `V_x(t, x±, S)`.
    pub fn vx_at(&self, t: f64, x: f64, side: Side) -> Result<f64> {
        self.check_domain(x)?;
        match self.kernel.side_gap_index(x, side) {
            Some(g) => Ok(self.mix(g, x, t).1),
            None => Ok(self.instance().discount().delta(t) * self.instance().payoff().deriv(x, side)),
        }
    }

    /// `V_xx(0, x±, S)`.
    pub fn vxx_onesided(&self, x: f64, side: Side) -> Result<f64> {
        self.check_domain(x)?;
        match self.kernel.side_gap_index(x, side) {
            Some(g) => Ok(self.mix(g, x, 0.0).2),
            None => Ok(self.instance().payoff().deriv2(x, side)),
        }
    }

    /// `𝓛V(0, x±, S)`; zero when the one-sided neighbourhood lies in S^c.
    pub fn generator_lv(&self, x: f64, side: Side) -> Result<f64> {
        self.check_domain(x)?;
        if self.region().side_in_complement(x, side) {
            return Ok(0.0);
        }
        let inst = self.instance();
        let (f, d) = (inst.payoff(), inst.diffusion());
        Ok(self.delta_prime_zero * f.value(x)
            + d.mu(x) * f.deriv(x, side)
            + 0.5 * d.sigma2(x) * f.deriv2(x, side))
    }

    /// Generator applied to the mixed continuation solution, for diagnostics:
    /// `Σ w_i (-r_i v_i + μ v_i' + ½σ² v_i'')` at a point of S^c.
    pub fn generator_residual(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let Some(g) = self.kernel.gap_index(x) else {
            return Ok(0.0);
        };
        let d = self.instance().diffusion();
        let (m, s2) = (d.mu(x), d.sigma2(x));
        Ok(self
            .nodes
            .iter()
            .zip(&self.solutions[g])
            .map(|(n, sol)| {
                let (v, vx, vxx) = sol.eval(x);
                n.weight * (-n.rate * v + m * vx + 0.5 * s2 * vxx)
            })
            .sum())
    }

    /// `J(x,S) - f(x)`.
    pub fn continuation_gap(&self, x: f64) -> Result<f64> {
        Ok(self.value_j(x)? - self.instance().payoff().value(x))
    }

    pub fn delta_prime_zero(&self) -> f64 {
        self.delta_prime_zero
    }
}

pub fn value_j(e: &ValueEvaluator, x: f64) -> Result<f64> {
    e.value_j(x)
}

pub fn value_v(e: &ValueEvaluator, t: f64, x: f64) -> Result<f64> {
    e.value_v(t, x)
}

pub fn vx_onesided(e: &ValueEvaluator, x: f64, side: Side) -> Result<f64> {
    e.vx_onesided(x, side)
}

pub fn generator_lv(e: &ValueEvaluator, x: f64, side: Side) -> Result<f64> {
    e.generator_lv(x, side)
}

pub fn continuation_gap(e: &ValueEvaluator, x: f64) -> Result<f64> {
    e.continuation_gap(x)
}
