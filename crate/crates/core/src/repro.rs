//! The three worked examples: builders with their candidate regions and the
//! verdicts they are known to have, and a runner that checks each candidate
//! analytically and by simulation.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    self, check_condition_abcd, classify, lambda_nu, profile, profile_grid, type2_mild_condition, CheckSettings,
    DeviationWitness, EquilibriumReport, ProfileRow, StrongVerdict, ThresholdFamily, Verdicts,
};
use crate::error::{Error, Result};
use crate::mc::{self, McEstimate, SimConfig};
use crate::model::diffusion::sample_grid;
use crate::model::{
    DiffusionSpec, DiscountSpec, Interval, PayoffSpec, PiecewiseSmooth, ProblemInstance, Side, StoppingRegion,
};
use crate::resolvent::SolverSettings;
use crate::valuation::ValueEvaluator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleId {
    /// Brownian motion, two stopping points: a strong equilibrium need not be optimal.
    Ex61,
    /// Geometric Brownian motion, capped payoff: a weak equilibrium need not be strong.
    Ex62,
    /// Geometric Brownian motion, put payoff: all three notions.
    Ex63,
}

impl ExampleId {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', '.'], "").as_str() {
            "ex61" | "61" => Ok(Self::Ex61),
            "ex62" | "62" => Ok(Self::Ex62),
            "ex63" | "63" => Ok(Self::Ex63),
            _ => Err(Error::Config(format!("unknown example '{s}' (expected ex61, ex62 or ex63)"))),
        }
    }

    pub fn all() -> [Self; 3] {
        [Self::Ex61, Self::Ex62, Self::Ex63]
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ex61 => "ex61",
            Self::Ex62 => "ex62",
            Self::Ex63 => "ex63",
        }
    }
}

/// Known verdicts of a candidate; `None` means the verdict is not asserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub mild: Option<bool>,
    pub weak: Option<bool>,
    pub strong: Option<bool>,
    /// Pointwise dominance over the other mild candidates of the same example.
    pub optimal: Option<bool>,
    pub reason: String,
}

impl Expected {
    fn new(mild: Option<bool>, weak: Option<bool>, strong: Option<bool>, optimal: Option<bool>, reason: &str) -> Self {
        Self { mild, weak, strong, optimal, reason: reason.into() }
    }
}

/// Simulated `D(ε)` probe at a point of S.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationProbe {
    pub x: f64,
    pub epsilons: Vec<f64>,
    /// `true`: every `D(ε)` must be positive with `z ≥ 3` (a witness against strongness).
    /// `false`: every `D(ε)` must be `≤ 3 SE`.
    pub expect_positive: bool,
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub label: String,
    pub region: StoppingRegion,
    pub expected: Expected,
    /// Point of S^c where the simulated value is compared with `J`.
    pub value_probe: Option<f64>,
    pub deviation_probe: Option<DeviationProbe>,
}

#[derive(Debug, Clone)]
pub struct ExampleCase {
    pub id: ExampleId,
    pub instance: ProblemInstance,
    pub candidates: Vec<Candidate>,
    pub parameters: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    /// Ray family whose solved threshold must equal the given value.
    pub threshold: Option<(ThresholdFamily, f64)>,
}

/// Payoff built from the values of the one- and two-point regions:
/// `J_ab/(1+(a-x))` left of `a`, `J_ab/(1+(x-a)(b-x))` on `(a, b]`, `J_b/(1+(x-b))` right of `b`.
struct TwoPointPayoff {
    a: f64,
    b: f64,
    j_ab: ValueEvaluator,
    j_b: ValueEvaluator,
}

impl TwoPointPayoff {
    fn piece(&self, x: f64, side: Side) -> usize {
        let (below_a, below_b) = match side {
            Side::Left => (x <= self.a, x <= self.b),
            Side::Right => (x < self.a, x < self.b),
        };
        if below_a {
            0
        } else if below_b {
            1
        } else {
            2
        }
    }

    /// `(g, g', g'')` of the denominator on piece `p`.
    fn denom(&self, p: usize, x: f64) -> (f64, f64, f64) {
        let (a, b) = (self.a, self.b);
        match p {
            0 => (1.0 + (a - x), -1.0, 0.0),
            1 => (1.0 + (x - a) * (b - x), a + b - 2.0 * x, -2.0),
            _ => (1.0 + (x - b), 1.0, 0.0),
        }
    }

    fn numer(&self, p: usize, x: f64, side: Side) -> (f64, f64, f64) {
        let e = if p == 2 { &self.j_b } else { &self.j_ab };
        let j = e.value_j(x).unwrap_or(f64::NAN);
        let jx = e.vx_onesided(x, side).unwrap_or(f64::NAN);
        let jxx = e.vxx_onesided(x, side).unwrap_or(f64::NAN);
        (j, jx, jxx)
    }
}

impl PiecewiseSmooth for TwoPointPayoff {
    fn value(&self, x: f64) -> f64 {
        let p = self.piece(x, Side::Left);
        let e = if p == 2 { &self.j_b } else { &self.j_ab };
        e.value_j(x).unwrap_or(f64::NAN) / self.denom(p, x).0
    }

    fn deriv(&self, x: f64, side: Side) -> f64 {
        let p = self.piece(x, side);
        let (g, g1, _) = self.denom(p, x);
        let (j, j1, _) = self.numer(p, x, side);
        (j1 * g - j * g1) / (g * g)
    }

    fn deriv2(&self, x: f64, side: Side) -> f64 {
        let p = self.piece(x, side);
        let (g, g1, g2) = self.denom(p, x);
        let (j, j1, j2) = self.numer(p, x, side);
        j2 / g - 2.0 * j1 * g1 / (g * g) - j * g2 / (g * g) + 2.0 * j * g1 * g1 / (g * g * g)
    }
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Brownian motion with hyperbolic discount `1/(1+βt)` and the two-point payoff
/// with `f(a) = c`, `f(b) = d`.
pub fn build_example_61(beta: f64, a: f64, b: f64, c: f64, d: f64) -> Result<ExampleCase> {
    let cond = check_condition_abcd(beta, a, b, c, d)?;
    if !cond.satisfied {
        return Err(Error::Parameter(format!(
            "c/d = {:.4} must lie strictly between {:.4} and {:.4}",
            cond.ratio, cond.lhs, cond.rhs
        )));
    }
    let real = Interval::real_line();
    let diffusion = DiffusionSpec::brownian(0.0, 1.0)?;
    let discount = DiscountSpec::hyperbolic(beta)?;
    let aux_payoff = PayoffSpec::table(vec![a - 1.0, a, b, b + 1.0], vec![c, c, d, d], vec![a, b])?;
    let aux = ProblemInstance::new(diffusion.clone(), discount.clone(), aux_payoff, "two-point boundary data")?;
    let settings = SolverSettings::default();
    let s_b = StoppingRegion::points(real, &[b])?;
    let s_ab = StoppingRegion::points(real, &[a, b])?;
    let j_b = ValueEvaluator::new(&aux, &s_b, settings)?;
    let j_ab = ValueEvaluator::new(&aux, &s_ab, settings)?;
    let j_b_at_a = j_b.value_j(a)?;
    if !(c < j_b_at_a) {
        return Err(Error::Parameter(format!("need c < J_b(a) = {j_b_at_a:.6}, got c = {c}")));
    }
    let f = Arc::new(TwoPointPayoff { a, b, j_ab, j_b });
    let payoff = PayoffSpec::function(f, vec![a, b], format!("two-point payoff, f(a)={c}, f(b)={d}"))?;
    let instance = ProblemInstance::new(diffusion, discount, payoff, "ex61")?;
    let mid = 0.5 * (a + b);
    let candidates = vec![
        Candidate {
            label: "{b}".into(),
            region: s_b,
            expected: Expected::new(
                Some(true),
                Some(true),
                Some(true),
                Some(true),
                "b is the global maximum of f and f < J_b off b; the value kinks strictly at b",
            ),
            value_probe: Some(mid),
            deviation_probe: Some(DeviationProbe { x: b, epsilons: vec![1e-3, 4e-3, 1.6e-2], expect_positive: false }),
        },
        Candidate {
            label: "{a, b}".into(),
            region: s_ab,
            expected: Expected::new(
                Some(true),
                Some(true),
                Some(true),
                Some(false),
                "f < J_ab off {a, b}; strict derivative jumps at a (lower sandwich bound) and at b; J_ab < J_b below b",
            ),
            value_probe: Some(mid),
            deviation_probe: Some(DeviationProbe { x: a, epsilons: vec![1e-3, 4e-3, 1.6e-2], expect_positive: false }),
        },
        Candidate {
            label: "R".into(),
            region: StoppingRegion::full(real),
            expected: Expected::new(Some(true), None, None, Some(false), "stopping everywhere is trivially mild"),
            value_probe: None,
            deviation_probe: None,
        },
        Candidate {
            label: "{a}".into(),
            region: StoppingRegion::points(real, &[a])?,
            expected: Expected::new(
                Some(false),
                Some(false),
                Some(false),
                None,
                "every mild equilibrium contains the maximizer b",
            ),
            value_probe: None,
            deviation_probe: None,
        },
    ];
    Ok(ExampleCase {
        id: ExampleId::Ex61,
        instance,
        candidates,
        parameters: params(&[("beta", beta), ("a", a), ("b", b), ("c", c), ("d", d)]),
        notes: vec![
            format!(
                "sandwich condition: {:.6} < c/d = {:.6} < {:.6}",
                cond.lhs, cond.ratio, cond.rhs
            ),
            format!("J_b(a) = {j_b_at_a:.6} > c"),
            "β = 1/2 reproduces the sandwich endpoints 0.3952 and 0.4544 for b - a = 1".into(),
            "optimality is checked against the listed candidates only".into(),
        ],
        threshold: None,
    })
}

/// Geometric Brownian motion with `μ = β`, hyperbolic discount and `f(x) = x ∧ K`.
pub fn build_example_62(mu: f64, sigma: f64, strike: f64) -> Result<ExampleCase> {
    if !(mu > 0.0 && sigma > 0.0 && strike > 0.0) {
        return Err(Error::Parameter(format!("need μ, σ, K > 0, got μ={mu}, σ={sigma}, K={strike}")));
    }
    let instance = ProblemInstance::new(
        DiffusionSpec::geometric(mu, sigma)?,
        DiscountSpec::hyperbolic(mu)?,
        PayoffSpec::capped_identity(strike)?,
        "ex62",
    )?;
    let domain = Interval::positive_half_line();
    let candidates = vec![
        Candidate {
            label: "(0, inf)".into(),
            region: StoppingRegion::full(domain),
            expected: Expected::new(
                Some(true),
                Some(true),
                Some(false),
                Some(false),
                "generator vanishes below K and the kink at K has a positive jump, but delaying below K pays (1 + μ²ε²/2 + o(ε²))x",
            ),
            value_probe: None,
            deviation_probe: Some(DeviationProbe {
                x: 0.5 * strike,
                epsilons: vec![0.25, 0.5, 1.0],
                expect_positive: true,
            }),
        },
        Candidate {
            label: "[K, inf)".into(),
            region: StoppingRegion::right_ray(domain, strike)?,
            expected: Expected::new(
                Some(true),
                Some(true),
                Some(true),
                Some(true),
                "generator equals -βK < 0 on [K, inf), so the strictness set is the whole region",
            ),
            value_probe: Some(0.7 * strike),
            deviation_probe: Some(DeviationProbe { x: strike, epsilons: vec![1e-3, 4e-3, 1.6e-2], expect_positive: false }),
        },
        Candidate {
            label: "[2K, inf)".into(),
            region: StoppingRegion::right_ray(domain, 2.0 * strike)?,
            expected: Expected::new(Some(false), Some(false), Some(false), None, "J < K = f on (K, 2K)"),
            value_probe: None,
            deviation_probe: None,
        },
    ];
    Ok(ExampleCase {
        id: ExampleId::Ex62,
        instance,
        candidates,
        parameters: params(&[("mu", mu), ("beta", mu), ("sigma", sigma), ("K", strike)]),
        notes: vec![
            "the deviation witness for (0, inf) uses ε ∈ {0.25, 0.5, 1}: at these parameters D(ε) ≈ μ²ε²x/2 is below simulation noise for ε ≤ 0.016".into(),
        ],
        threshold: Some((ThresholdFamily::RightRay, strike)),
    })
}

/// Geometric Brownian motion with hyperbolic discount and the put payoff `(K - x)^+`.
pub fn build_example_63(mu: f64, sigma: f64, beta: f64, strike: f64) -> Result<ExampleCase> {
    if !(sigma > 0.0 && beta > 0.0 && strike > 0.0 && mu >= 0.0) {
        return Err(Error::Parameter(format!(
            "need σ, β, K > 0 and μ ≥ 0, got μ={mu}, σ={sigma}, β={beta}, K={strike}"
        )));
    }
    let instance = ProblemInstance::new(
        DiffusionSpec::geometric(mu, sigma)?,
        DiscountSpec::hyperbolic(beta)?,
        PayoffSpec::put(strike)?,
        "ex63",
    )?;
    let (lambda, nu) = lambda_nu(mu, sigma, beta);
    let a_star = lambda * strike / (1.0 + lambda);
    let domain = Interval::positive_half_line();
    let ray = |a: f64| StoppingRegion::left_ray(domain, a);
    let two = |a: f64, b: f64| {
        StoppingRegion::normalize(domain, &[Interval::new(0.0, a, false, true)?, Interval::new(b, f64::INFINITY, true, false)?])
    };
    let type2 = |a: f64, b: f64| -> Result<Candidate> {
        let margin = type2_mild_condition(mu, sigma, beta, strike, a, b);
        let mild = margin >= 0.0;
        Ok(Candidate {
            label: format!("(0, {a:.4}] ∪ [{b:.4}, inf)"),
            region: two(a, b)?,
            expected: Expected::new(
                Some(mild),
                Some(false),
                Some(false),
                if mild { Some(false) } else { None },
                &format!(
                    "two-piece region: mild iff J'(a+) + 1 ≥ 0 (here {margin:.4e}); smooth fit fails at b since V_x(b-) < 0 = V_x(b+)"
                ),
            ),
            value_probe: Some(0.5 * (a + b)),
            deviation_probe: None,
        })
    };
    let candidates = vec![
        Candidate {
            label: "(0, a*]".into(),
            region: ray(a_star)?,
            expected: Expected::new(
                Some(true),
                Some(true),
                Some(true),
                Some(true),
                "the smallest mild ray; smooth fit holds at a* and the generator is negative on (0, a*]",
            ),
            value_probe: Some(0.5 * (a_star + strike)),
            deviation_probe: Some(DeviationProbe { x: a_star, epsilons: vec![1e-3, 4e-3, 1.6e-2], expect_positive: false }),
        },
        Candidate {
            label: "(0, 0.9 a*]".into(),
            region: ray(0.9 * a_star)?,
            expected: Expected::new(Some(false), Some(false), Some(false), None, "a ray is mild iff a ≥ a*"),
            value_probe: None,
            deviation_probe: None,
        },
        Candidate {
            label: "(0, (a* + K)/2]".into(),
            region: ray(0.5 * (a_star + strike))?,
            expected: Expected::new(
                Some(true),
                Some(false),
                Some(false),
                Some(false),
                "mild since a ≥ a*; smooth fit fails for a ≠ a*",
            ),
            value_probe: Some(0.25 * a_star + 0.75 * strike),
            deviation_probe: None,
        },
        Candidate {
            label: "(0, K]".into(),
            region: ray(strike)?,
            expected: Expected::new(Some(true), Some(false), Some(false), Some(false), "mild; derivative jump -1 at the kink K"),
            value_probe: Some(1.5 * strike),
            deviation_probe: None,
        },
        Candidate {
            label: "(0, inf)".into(),
            region: StoppingRegion::full(domain),
            expected: Expected::new(Some(true), Some(false), Some(false), Some(false), "trivially mild; derivative jump -1 at K"),
            value_probe: None,
            deviation_probe: None,
        },
        type2(0.98 * strike, 1.05 * strike)?,
        type2(0.3 * strike, 1.2 * strike)?,
    ];
    Ok(ExampleCase {
        id: ExampleId::Ex63,
        instance,
        candidates,
        parameters: params(&[
            ("mu", mu),
            ("sigma", sigma),
            ("beta", beta),
            ("K", strike),
            ("lambda", lambda),
            ("nu", nu),
            ("a_star", a_star),
        ]),
        notes: vec![format!("a* = λK/(1+λ) = {a_star:.10} with λ = {lambda:.10}, ν = {nu:.6}")],
        threshold: Some((ThresholdFamily::LeftRay, a_star)),
    })
}

/// Default parameters for each example.
pub fn build_default(id: ExampleId) -> Result<ExampleCase> {
    match id {
        ExampleId::Ex61 => build_example_61(0.5, 0.0, 1.0, 0.42, 1.0),
        ExampleId::Ex62 => build_example_62(0.1, 0.3, 1.0),
        ExampleId::Ex63 => build_example_63(0.05, 0.3, 0.1, 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub check: CheckSettings,
    pub solver: SolverSettings,
    pub mc: SimConfig,
    pub mc_enabled: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { check: CheckSettings::default(), solver: SolverSettings::default(), mc: SimConfig::default(), mc_enabled: true }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum McComparison {
    /// Simulated `J(x,S)` against the analytic value.
    Value { x: f64, analytic: f64, estimate: McEstimate, agrees: bool },
    /// Simulated `D(ε)` at a point of S.
    Deviation { x: f64, epsilon: f64, estimate: McEstimate, expect_positive: bool, agrees: bool },
}

impl McComparison {
    pub fn agrees(&self) -> bool {
        match self {
            McComparison::Value { agrees, .. } | McComparison::Deviation { agrees, .. } => *agrees,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateOutcome {
    pub label: String,
    pub region: Vec<String>,
    pub expected: Expected,
    pub observed: Verdicts,
    pub optimal_within_tested: Option<bool>,
    pub matches: bool,
    pub mismatches: Vec<String>,
    pub mc: Vec<McComparison>,
    pub report: EquilibriumReport,
    #[serde(skip)]
    pub profile: Vec<ProfileRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdCheck {
    pub family: ThresholdFamily,
    pub expected: f64,
    pub solved: f64,
    pub error: f64,
    pub smooth_fit_residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleReport {
    pub id: ExampleId,
    pub parameters: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub candidates: Vec<CandidateOutcome>,
    pub threshold: Option<ThresholdCheck>,
    pub all_match: bool,
}

fn compare(name: &str, expected: Option<bool>, observed: bool, out: &mut Vec<String>) {
    if let Some(e) = expected {
        if e != observed {
            out.push(format!("{name}: expected {e}, observed {observed}"));
        }
    }
}

fn mc_checks(case: &ExampleCase, cand: &Candidate, e: &ValueEvaluator, cfg: &RunConfig) -> Result<Vec<McComparison>> {
    let mut out = Vec::new();
    if let Some(x) = cand.value_probe {
        if !cand.region.is_member(x) {
            let analytic = e.value_j(x)?;
            let estimate = mc::estimate_j(&case.instance, &cand.region, x, &cfg.mc)?;
            let agrees = estimate.agrees_with(analytic, 3.0, 0.0) && estimate.valid();
            out.push(McComparison::Value { x, analytic, estimate, agrees });
        }
    }
    if let Some(p) = &cand.deviation_probe {
        let sim = cfg.mc.with_antithetic(true);
        for pt in mc::deviation_sweep(&case.instance, &cand.region, p.x, &p.epsilons, &sim)? {
            let est = pt.estimate;
            let agrees = if p.expect_positive {
                est.mean > 0.0 && est.z() >= 3.0
            } else {
                est.mean <= 3.0 * est.std_error
            } && est.valid();
            out.push(McComparison::Deviation {
                x: p.x,
                epsilon: pt.epsilon,
                estimate: est,
                expect_positive: p.expect_positive,
                agrees,
            });
        }
    }
    Ok(out)
}

/// `J(·,A) ≥ J(·,B)` on a grid for every other mild candidate `B`.
fn dominates(a: &ValueEvaluator, others: &[&ValueEvaluator], grid: &[f64], tol: f64) -> Result<bool> {
    for &x in grid {
        let ja = a.value_j(x)?;
        for b in others {
            if ja < b.value_j(x)? - tol * (1.0 + ja.abs()) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Classifies every candidate, compares with the known verdicts and runs the
/// simulation cross-checks.
pub fn run_example(case: &ExampleCase, cfg: &RunConfig) -> Result<ExampleReport> {
    let mut evaluators = Vec::with_capacity(case.candidates.len());
    let mut reports = Vec::with_capacity(case.candidates.len());
    for cand in &case.candidates {
        let e = ValueEvaluator::new(&case.instance, &cand.region, cfg.solver)?;
        reports.push(classify(&e, &cfg.check)?);
        evaluators.push(e);
    }
    let domain = case.instance.diffusion().domain();
    let mut grid = sample_grid(domain, 200);
    grid.extend(case.instance.payoff().kinks().iter().copied().filter(|k| domain.contains(*k)));
    for c in &case.candidates {
        grid.extend(c.region.boundary_points().iter().map(|b| b.x).filter(|x| domain.contains(*x)));
    }
    let mild_idx: Vec<usize> = (0..reports.len()).filter(|&i| reports[i].verdicts.mild).collect();

    let mut outcomes = Vec::with_capacity(case.candidates.len());
    for (i, cand) in case.candidates.iter().enumerate() {
        let mut report = reports[i].clone();
        let e = &evaluators[i];
        let mc = if cfg.mc_enabled { mc_checks(case, cand, e, cfg)? } else { Vec::new() };
        if let Some(p) = &cand.deviation_probe {
            if p.expect_positive {
                let devs: Vec<&McEstimate> = mc
                    .iter()
                    .filter_map(|m| match m {
                        McComparison::Deviation { estimate, .. } => Some(estimate),
                        _ => None,
                    })
                    .collect();
                if !devs.is_empty() && devs.iter().all(|d| d.mean > 0.0 && d.z() >= 3.0) {
                    let (eps, d) = mc
                        .iter()
                        .filter_map(|m| match m {
                            McComparison::Deviation { epsilon, estimate, .. } => Some((*epsilon, estimate)),
                            _ => None,
                        })
                        .next()
                        .expect("non-empty");
                    report.add_deviation_witness(DeviationWitness {
                        x: p.x,
                        epsilon: eps,
                        mean: d.mean,
                        std_error: d.std_error,
                        z: d.z(),
                    });
                }
            }
        }
        let optimal_within_tested = if report.verdicts.mild {
            let others: Vec<&ValueEvaluator> = mild_idx.iter().filter(|&&j| j != i).map(|&j| &evaluators[j]).collect();
            Some(dominates(e, &others, &grid, cfg.check.tol_eq)?)
        } else {
            None
        };
        let mut mismatches = Vec::new();
        let v = report.verdicts;
        compare("mild", cand.expected.mild, v.mild, &mut mismatches);
        compare("weak", cand.expected.weak, v.weak, &mut mismatches);
        compare("strong", cand.expected.strong, v.strong == StrongVerdict::CertifiedStrong, &mut mismatches);
        if let (Some(ex), Some(ob)) = (cand.expected.optimal, optimal_within_tested) {
            compare("optimal within tested", Some(ex), ob, &mut mismatches);
        }
        for m in mc.iter().filter(|m| !m.agrees()) {
            mismatches.push(format!("simulation disagrees: {}", serde_json::to_string(m).unwrap_or_default()));
        }
        let xs = profile_grid(e, 64);
        outcomes.push(CandidateOutcome {
            label: cand.label.clone(),
            region: cand.region.describe(),
            expected: cand.expected.clone(),
            observed: report.verdicts,
            optimal_within_tested,
            matches: mismatches.is_empty(),
            mismatches,
            mc,
            profile: profile(e, &xs)?,
            report,
        });
    }

    let threshold = match case.threshold {
        Some((family, expected)) => {
            let res = equilibrium::find_threshold_equilibrium(&case.instance, family, None, cfg.solver, cfg.check)?;
            let solved = res.parameters[0];
            let error = (solved - expected).abs();
            let scale = expected.abs().max(1.0);
            Some(ThresholdCheck {
                family,
                expected,
                solved,
                error,
                smooth_fit_residual: res.smooth_fit_residual,
                passed: error <= 1e-8 * scale,
            })
        }
        None => None,
    };
    let all_match = outcomes.iter().all(|o| o.matches) && threshold.as_ref().map_or(true, |t| t.passed);
    Ok(ExampleReport {
        id: case.id,
        parameters: case.parameters.clone(),
        notes: case.notes.clone(),
        candidates: outcomes,
        threshold,
        all_match,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sandwich_violation_rejected() {
        assert!(matches!(build_example_61(0.5, 0.0, 1.0, 0.3, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(build_example_61(0.5, 0.0, 1.0, 0.46, 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn two_point_payoff_hits_boundary_data() {
        let case = build_default(ExampleId::Ex61).unwrap();
        let f = case.instance.payoff();
        assert!((f.value(0.0) - 0.42).abs() < 1e-12);
        assert!((f.value(1.0) - 1.0).abs() < 1e-12);
        let l = f.value(1.0 - 1e-7);
        let r = f.value(1.0 + 1e-7);
        assert!((l - 1.0).abs() < 1e-5 && (r - 1.0).abs() < 1e-5);
    }

    #[test]
    fn parameter_guards() {
        assert!(build_example_62(0.0, 0.3, 1.0).is_err());
        assert!(build_example_63(-0.1, 0.3, 0.1, 1.0).is_err());
        assert_eq!(ExampleId::parse("Ex-63").unwrap(), ExampleId::Ex63);
    }

    #[test]
    fn ex63_verdicts_without_simulation() {
        let case = build_default(ExampleId::Ex63).unwrap();
        let cfg = RunConfig { mc_enabled: false, ..RunConfig::default() };
        let rep = run_example(&case, &cfg).unwrap();
        for c in &rep.candidates {
            assert!(c.matches, "{}: {:?}", c.label, c.mismatches);
        }
        assert!(rep.threshold.unwrap().passed);
    }
}
