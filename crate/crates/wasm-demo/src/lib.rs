//! Browser bindings: the sandwich condition for the two-point example, the
//! put threshold under hyperbolic discounting and classification of a put ray.
//! Every function returns a JSON string; errors come back as `{"error": ...}`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use eqstop::equilibrium::{self, CheckSettings, ThresholdFamily};
use eqstop::model::{DiffusionSpec, DiscountSpec, PayoffSpec, ProblemInstance, StoppingRegion};
use eqstop::resolvent::SolverSettings;
use eqstop::valuation::ValueEvaluator;

fn to_json<T: Serialize>(r: eqstop::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn put_instance(mu: f64, sigma: f64, beta: f64, strike: f64) -> eqstop::Result<ProblemInstance> {
    ProblemInstance::new(
        DiffusionSpec::geometric(mu, sigma)?,
        DiscountSpec::hyperbolic(beta)?,
        PayoffSpec::put(strike)?,
        "put",
    )
}

/// LHS, RHS and verdict of the sandwich condition for `(a, b, c, d)`.
#[wasm_bindgen]
pub fn sandwich_check(beta: f64, a: f64, b: f64, c: f64, d: f64) -> String {
    to_json(equilibrium::check_condition_abcd(beta, a, b, c, d))
}

#[derive(Serialize)]
struct PutThreshold {
    threshold: f64,
    closed_form: f64,
    lambda: f64,
    nu: f64,
    smooth_fit_residual: f64,
    evaluations: usize,
}

/// Smooth-fit threshold of the put ray next to the closed form `λK/(1+λ)`.
#[wasm_bindgen]
pub fn put_threshold(mu: f64, sigma: f64, beta: f64, strike: f64) -> String {
    to_json((|| {
        let inst = put_instance(mu, sigma, beta, strike)?;
        let res = equilibrium::find_threshold_equilibrium(
            &inst,
            ThresholdFamily::LeftRay,
            None,
            SolverSettings::default(),
            CheckSettings::default(),
        )?;
        let (lambda, nu) = equilibrium::lambda_nu(mu, sigma, beta);
        Ok(PutThreshold {
            threshold: res.parameters[0],
            closed_form: lambda * strike / (1.0 + lambda),
            lambda,
            nu,
            smooth_fit_residual: res.smooth_fit_residual,
            evaluations: res.evaluations,
        })
    })())
}

#[derive(Serialize)]
struct RayClassification {
    mild: bool,
    weak: bool,
    strong: bool,
    smooth_fit_residual: f64,
    min_gap: Option<f64>,
    /// `[x, f, J]` on a grid over `(0, 2K]` for plotting.
    curve: Vec<[f64; 3]>,
}

/// Verdicts for the stopping region `(0, a]` and the value curve to draw.
#[wasm_bindgen]
pub fn classify_put_ray(mu: f64, sigma: f64, beta: f64, strike: f64, a: f64) -> String {
    to_json((|| {
        let inst = put_instance(mu, sigma, beta, strike)?;
        let region = StoppingRegion::left_ray(*inst.diffusion().domain(), a)?;
        let e = ValueEvaluator::new(&inst, &region, SolverSettings::default())?;
        let report = equilibrium::classify(&e, &CheckSettings::default())?;
        let n = 200;
        let curve = (1..=n)
            .map(|i| {
                let x = 2.0 * strike * i as f64 / n as f64;
                Ok([x, inst.payoff().value(x), e.value_j(x)?])
            })
            .collect::<eqstop::Result<Vec<_>>>()?;
        Ok(RayClassification {
            mild: report.verdicts.mild,
            weak: report.verdicts.weak,
            strong: report.verdicts.strong.is_strong(),
            smooth_fit_residual: equilibrium::smooth_fit_residual(&e, a)?,
            min_gap: report.witnesses.continuation.map(|w| w.value),
            curve,
        })
    })())
}
