//! JSON problem configuration with dotted-path overrides.
//!
//! ```json
//! {
//!   "diffusion": {"kind": "geometric_brownian_motion", "mu": 0.05, "sigma": 0.3},
//!   "discount": {"kind": "hyperbolic", "params": {"beta": 0.1}},
//!   "payoff": {"kind": "put", "params": {"K": 1.0}},
//!   "region": {"pieces": [["0", 0.58]]}
//! }
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::equilibrium::{CheckSettings, ThresholdFamily};
use crate::error::{Error, Result};
use crate::mc::SimConfig;
use crate::model::{
    parse_interval, Coefficient, DiffusionKind, DiffusionSpec, DiscountKind, DiscountSpec, Interval, MixNode,
    MixingRule, PayoffSpec, ProblemInstance, StoppingRegion,
};
use crate::model::interval::parse_endpoint;
use crate::resolvent::SolverSettings;

/// A number, or one of the sentinels `"-inf"`, `"+inf"`, `"inf"`, or a numeric string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Number(f64),
    Text(String),
}

impl Bound {
    pub fn value(&self) -> Result<f64> {
        match self {
            Bound::Number(v) => Ok(*v),
            Bound::Text(s) => parse_endpoint(s)
                .or_else(|| (s.trim() == "0").then_some(0.0))
                .ok_or_else(|| Error::Config(format!("bad bound {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientConfig {
    Constant(f64),
    /// Polynomial coefficients, lowest order first.
    Polynomial(Vec<f64>),
    Sine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl CoefficientConfig {
    fn constant(&self) -> Result<f64> {
        match self {
            CoefficientConfig::Constant(v) => Ok(*v),
            _ => Err(Error::Config("Brownian and geometric Brownian coefficients must be numbers".into())),
        }
    }

    fn coefficient(&self) -> Coefficient {
        match self {
            CoefficientConfig::Constant(v) => Coefficient::constant(*v),
            CoefficientConfig::Polynomial(c) => Coefficient::Polynomial(c.clone()),
            CoefficientConfig::Sine { offset, amplitude, frequency, phase } => Coefficient::Sine {
                offset: *offset,
                amplitude: *amplitude,
                frequency: *frequency,
                phase: *phase,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionName {
    #[serde(alias = "bm")]
    BrownianMotion,
    #[serde(alias = "gbm")]
    GeometricBrownianMotion,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    pub kind: DiffusionName,
    pub mu: CoefficientConfig,
    pub sigma: CoefficientConfig,
    /// Open state space `(lo, hi)`; defaults to the natural one of the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[Bound; 2]>,
}

impl DiffusionConfig {
    pub fn build(&self) -> Result<DiffusionSpec> {
        let domain = match &self.domain {
            Some([lo, hi]) => Some(Interval::new(lo.value()?, hi.value()?, false, false)?),
            None => None,
        };
        match self.kind {
            DiffusionName::BrownianMotion => {
                let kind = DiffusionKind::BrownianMotion { mu: self.mu.constant()?, sigma: self.sigma.constant()? };
                DiffusionSpec::new(kind, domain.unwrap_or_else(Interval::real_line))
            }
            DiffusionName::GeometricBrownianMotion => {
                let kind =
                    DiffusionKind::GeometricBrownianMotion { mu: self.mu.constant()?, sigma: self.sigma.constant()? };
                DiffusionSpec::new(kind, domain.unwrap_or_else(Interval::positive_half_line))
            }
            DiffusionName::Custom => DiffusionSpec::custom(
                self.mu.coefficient(),
                self.sigma.coefficient(),
                domain.unwrap_or_else(Interval::real_line),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountName {
    Exponential,
    Hyperbolic,
    GeneralizedHyperbolic,
    PseudoExponential,
    WeightedMixture,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountConfig {
    pub kind: DiscountName,
    #[serde(default)]
    pub params: DiscountParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<MixingRule>,
}

fn need(v: Option<f64>, name: &str, kind: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("discount kind {kind} needs params.{name}")))
}

impl DiscountConfig {
    pub fn build(&self) -> Result<DiscountSpec> {
        let p = &self.params;
        let kind = match self.kind {
            DiscountName::Exponential => DiscountKind::Exponential { rate: need(p.rate, "rate", "exponential")? },
            DiscountName::Hyperbolic => DiscountKind::Hyperbolic { beta: need(p.beta, "beta", "hyperbolic")? },
            DiscountName::GeneralizedHyperbolic => DiscountKind::GeneralizedHyperbolic {
                beta: need(p.beta, "beta", "generalized_hyperbolic")?,
                gamma: need(p.gamma, "gamma", "generalized_hyperbolic")?,
            },
            DiscountName::PseudoExponential | DiscountName::WeightedMixture => {
                let (Some(w), Some(r)) = (&p.weights, &p.rates) else {
                    return Err(Error::Config("mixture discounts need params.weights and params.rates".into()));
                };
                if self.kind == DiscountName::PseudoExponential {
                    DiscountKind::PseudoExponential { weights: w.clone(), rates: r.clone() }
                } else {
                    if w.len() != r.len() {
                        return Err(Error::Config("weights and rates must have equal length".into()));
                    }
                    let nodes = w.iter().zip(r).map(|(&weight, &rate)| MixNode { rate, weight }).collect();
                    DiscountKind::WeightedMixture { nodes }
                }
            }
        };
        match self.rule {
            Some(rule) => DiscountSpec::with_rule(kind, rule),
            None => DiscountSpec::new(kind),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffName {
    Put,
    CappedIdentity,
    CustomTable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffParams {
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ys: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub kind: PayoffName,
    #[serde(default)]
    pub params: PayoffParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinks: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
}

impl PayoffConfig {
    pub fn build(&self) -> Result<PayoffSpec> {
        let k = || self.params.k.ok_or_else(|| Error::Config("payoff needs params.K".into()));
        let spec = match self.kind {
            PayoffName::Put => PayoffSpec::put(k()?)?,
            PayoffName::CappedIdentity => PayoffSpec::capped_identity(k()?)?,
            PayoffName::CustomTable => {
                let (Some(xs), Some(ys)) = (&self.params.xs, &self.params.ys) else {
                    return Err(Error::Config("custom_table needs params.xs and params.ys".into()));
                };
                PayoffSpec::table(xs.clone(), ys.clone(), self.kinks.clone().unwrap_or_default())?
            }
        };
        match self.zeta {
            Some(z) => spec.with_zeta(z),
            None => Ok(spec),
        }
    }
}

/// A closed piece `[lo, hi]` (ends at the boundary of the state space are
/// dropped), or an interval string such as `"(0, 0.58]"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PieceConfig {
    Pair([Bound; 2]),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub pieces: Vec<PieceConfig>,
}

impl RegionConfig {
    pub fn build(&self, domain: Interval) -> Result<StoppingRegion> {
        let pieces = self
            .pieces
            .iter()
            .map(|p| match p {
                PieceConfig::Text(s) => parse_interval(s),
                PieceConfig::Pair([lo, hi]) => {
                    let (lo, hi) = (lo.value()?, hi.value()?);
                    Interval::new(lo, hi, lo > domain.lower, hi < domain.upper)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        StoppingRegion::normalize(domain, &pieces)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub family: ThresholdFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
}

/// One simulation check of the `mc-check` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum McCheck {
    /// Simulated `J(x,S)` against the analytic value; needs `region`.
    Value { x: f64 },
    /// `D(ε)` at a point of S over a delay grid; needs `region`.
    Deviation { x: f64, eps: Vec<f64> },
    /// `E[L^{x0}_{ε∧τ}]/√ε` against `√(2/π)|σ(x0)|`.
    LocalTime { x0: f64, h: f64, eps: f64 },
    /// `P(τ_{B(x0,h)} ≤ ε)`.
    SmallTimeExit { x0: f64, h: f64, eps: f64 },
    /// `P(X_t > x0)` against `1/2`.
    HalfProbability { x0: f64, t: f64 },
    /// Exit-time and local-time ratios against `1/σ²(x0)` and `σ²(x0)/(1+|r|)`.
    ExitRatios { x0: f64, h: f64, r: f64 },
    /// `E|X_ε - x0 - μ(x0)ε - σ(x0)W_ε| / ε`.
    DriftRemainder { x0: f64, eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub diffusion: DiffusionConfig,
    pub discount: DiscountConfig,
    pub payoff: PayoffConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionConfig>,
    #[serde(default)]
    pub valuation: CheckSettings,
    #[serde(default)]
    pub resolvent: SolverSettings,
    #[serde(default)]
    pub mc: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mc_checks: Vec<McCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `text`, applies `key=value` overrides and deserializes.
    pub fn load(text: &str, overrides: &[String]) -> Result<Self> {
        let mut v: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Self::from_value(v)
    }

    pub fn instance(&self) -> Result<ProblemInstance> {
        ProblemInstance::new(
            self.diffusion.build()?,
            self.discount.build()?,
            self.payoff.build()?,
            self.label.clone().unwrap_or_else(|| "config".into()),
        )
    }

    pub fn region(&self, instance: &ProblemInstance) -> Result<StoppingRegion> {
        let r = self.region.as_ref().ok_or_else(|| Error::Config("missing `region`".into()))?;
        r.build(*instance.diffusion().domain())
    }
}

/// Sets `a.b.c = value` in a JSON document. The value is parsed as JSON when
/// possible and kept as a string otherwise; missing objects are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key {path:?}")));
    }
    let mut cur = doc;
    for k in &keys[..keys.len() - 1] {
        let obj = cur.as_object_mut().ok_or_else(|| Error::Config(format!("override {path:?} crosses a non-object")))?;
        cur = obj.entry(k.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur.as_object_mut().ok_or_else(|| Error::Config(format!("override {path:?} crosses a non-object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PUT: &str = r#"{
        "diffusion": {"kind": "geometric_brownian_motion", "mu": 0.05, "sigma": 0.3},
        "discount": {"kind": "hyperbolic", "params": {"beta": 0.1}},
        "payoff": {"kind": "put", "params": {"K": 1.0}},
        "region": {"pieces": [["0", 0.5]]}
    }"#;

    #[test]
    fn loads_put_problem() {
        let c = ProblemConfig::from_json(PUT).unwrap();
        let inst = c.instance().unwrap();
        let s = c.region(&inst).unwrap();
        assert_eq!(s.describe(), vec!["(0, 0.5]".to_string()]);
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let c = ProblemConfig::load(PUT, &["valuation.tol_eq=1e-6".into(), "mc.paths=500".into()]).unwrap();
        assert_eq!(c.valuation.tol_eq, 1e-6);
        assert_eq!(c.mc.paths, 500);
        assert!(ProblemConfig::load(PUT, &["valuation.bogus=1".into()]).is_err());
        assert!(ProblemConfig::load(PUT, &["nokey".into()]).is_err());
    }

    #[test]
    fn missing_discount_is_config_error() {
        let mut v: Value = serde_json::from_str(PUT).unwrap();
        v.as_object_mut().unwrap().remove("discount");
        assert!(matches!(ProblemConfig::from_value(v), Err(Error::Config(_))));
    }

    #[test]
    fn open_pieces_rejected() {
        let c = ProblemConfig::load(PUT, &[r#"region.pieces=["(0.2, 1)", "(1, 2)"]"#.into()]).unwrap();
        let inst = c.instance().unwrap();
        assert!(matches!(c.region(&inst), Err(Error::OpenPiece(_))));
    }

    #[test]
    fn custom_coefficients() {
        let text = r#"{
            "diffusion": {"kind": "custom", "mu": {"amplitude": 1.0}, "sigma": [1.0], "domain": ["-inf", "+inf"]},
            "discount": {"kind": "exponential", "params": {"rate": 0.5}},
            "payoff": {"kind": "custom_table", "params": {"xs": [-60, -1, 0, 1, 60], "ys": [1, 1, 2, 1, 1]}, "kinks": [-1, 0, 1]}
        }"#;
        let inst = ProblemConfig::from_json(text).unwrap().instance().unwrap();
        assert!((inst.diffusion().mu(1.0) - 1f64.sin()).abs() < 1e-15);
    }
}
