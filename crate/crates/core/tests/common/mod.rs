//! Property checks shared by the property suite and the acceptance runner.
#![allow(dead_code)]

use eqstop::equilibrium::{self, CheckSettings, StrongVerdict, ThresholdFamily};
use eqstop::model::{
    DiffusionSpec, DiscountKind, DiscountSpec, Interval, MixNode, PayoffSpec, ProblemInstance, Side, StoppingRegion,
};
use eqstop::resolvent::SolverSettings;
use eqstop::valuation::ValueEvaluator;

pub fn builtin_discounts() -> Vec<DiscountSpec> {
    vec![
        DiscountSpec::exponential(0.2).unwrap(),
        DiscountSpec::hyperbolic(0.1).unwrap(),
        DiscountSpec::hyperbolic(1.0).unwrap(),
        DiscountSpec::generalized_hyperbolic(0.5, 0.2).unwrap(),
        DiscountSpec::generalized_hyperbolic(0.2, 0.6).unwrap(),
        DiscountSpec::new(DiscountKind::PseudoExponential { weights: vec![0.3, 0.7], rates: vec![0.05, 0.5] }).unwrap(),
        DiscountSpec::new(DiscountKind::WeightedMixture {
            nodes: vec![
                MixNode { rate: 0.01, weight: 0.2 },
                MixNode { rate: 0.3, weight: 0.5 },
                MixNode { rate: 4.0, weight: 0.3 },
            ],
        })
        .unwrap(),
    ]
}

/// `n` times spread geometrically over `[1e-6, 100]`, plus 0.
pub fn time_grid(n: usize) -> Vec<f64> {
    let mut ts = vec![0.0];
    ts.extend((0..n - 1).map(|i| 1e-6 * 1e8f64.powf(i as f64 / (n - 2) as f64)));
    ts
}

/// 32 × 32 = 1024 pairs.
pub fn pair_grid() -> Vec<(f64, f64)> {
    let ts = time_grid(32);
    ts.iter().flat_map(|&s| ts.iter().map(move |&t| (s, t))).collect()
}

/// Log sub-additivity on the pair grid and `δ'(t) ≥ δ(t)δ'(0)`, `1 - δ(t) ≤ |δ'(0)|t` on a time grid.
pub fn check_discount(d: &DiscountSpec) -> Result<(), String> {
    let slack = 1e-12;
    let sub = d.check_log_subadditive(&pair_grid());
    if sub.min_gap < -slack {
        return Err(format!("{}: δ(t+s) - δ(t)δ(s) = {:e} at {:?}", d.label(), sub.min_gap, sub.at));
    }
    let der = d.derivative_inequalities(&time_grid(1000));
    if !der.holds(slack) {
        return Err(format!("{}: derivative inequalities fail: {der:?}", d.label()));
    }
    Ok(())
}

pub struct RandomCase {
    pub name: String,
    pub instance: ProblemInstance,
    pub region: StoppingRegion,
}

fn lerp(u: f64, lo: f64, hi: f64) -> f64 {
    lo + u * (hi - lo)
}

/// Random instance and region from uniforms in `[0,1)`. Families: put rays on
/// GBM, capped-identity rays on GBM, solved put thresholds, and pieces of a
/// tent payoff on Brownian motion.
pub fn random_case(family: u8, u: [f64; 5]) -> RandomCase {
    let beta = lerp(u[2], 0.05, 0.3);
    let disc = DiscountSpec::hyperbolic(beta).unwrap();
    match family % 4 {
        0 | 2 => {
            let (mu, sigma, k) = (lerp(u[0], 0.0, 0.1), lerp(u[1], 0.15, 0.5), lerp(u[3], 0.5, 2.0));
            let inst = ProblemInstance::new(
                DiffusionSpec::geometric(mu, sigma).unwrap(),
                disc,
                PayoffSpec::put(k).unwrap(),
                "put",
            )
            .unwrap();
            let a = if family % 4 == 0 {
                k * lerp(u[4], 0.3, 1.2)
            } else {
                equilibrium::find_threshold_equilibrium(
                    &inst,
                    ThresholdFamily::LeftRay,
                    None,
                    SolverSettings::default(),
                    CheckSettings::default(),
                )
                .unwrap()
                .parameters[0]
            };
            let region = StoppingRegion::left_ray(*inst.diffusion().domain(), a).unwrap();
            RandomCase { name: format!("put μ={mu:.3} σ={sigma:.3} β={beta:.3} K={k:.3} a={a:.4}"), instance: inst, region }
        }
        1 => {
            let (mu, sigma, k) = (lerp(u[0], -0.1, 0.3), lerp(u[1], 0.1, 0.5), lerp(u[3], 0.5, 2.0));
            let inst = ProblemInstance::new(
                DiffusionSpec::geometric(mu, sigma).unwrap(),
                disc,
                PayoffSpec::capped_identity(k).unwrap(),
                "capped",
            )
            .unwrap();
            let b = k * lerp(u[4], 0.8, 2.5);
            let region = StoppingRegion::right_ray(*inst.diffusion().domain(), b).unwrap();
            RandomCase { name: format!("capped μ={mu:.3} σ={sigma:.3} β={beta:.3} K={k:.3} b={b:.4}"), instance: inst, region }
        }
        _ => {
            let (mu, sigma) = (lerp(u[0], -0.2, 0.2), lerp(u[1], 0.5, 1.5));
            let payoff = PayoffSpec::table(
                vec![-60.0, -2.0, -1.0, 0.0, 1.0, 2.0, 60.0],
                vec![0.2, 0.2, 0.5, 1.0, 0.5, 0.2, 0.2],
                vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            )
            .unwrap();
            let inst = ProblemInstance::new(DiffusionSpec::brownian(mu, sigma).unwrap(), disc, payoff, "tent").unwrap();
            let lo = lerp(u[3], -2.0, 1.0);
            let hi = if u[4] < 0.3 { lo } else { lo + lerp(u[4], 0.0, 1.0) };
            let domain = *inst.diffusion().domain();
            let region = StoppingRegion::normalize(domain, &[Interval::closed(lo, hi).unwrap()]).unwrap();
            RandomCase { name: format!("tent μ={mu:.3} σ={sigma:.3} β={beta:.3} S=[{lo:.3},{hi:.3}]"), instance: inst, region }
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CaseSummary {
    pub certified: bool,
    pub boundary_points: usize,
}

/// Pasting at every boundary point, `J = f` on S, the verdict hierarchy and,
/// for certified regions, `𝔖` recomputed on `𝔖_S` returns the same set.
pub fn check_case(c: &RandomCase) -> Result<CaseSummary, String> {
    let err = |e: eqstop::Error| format!("{}: {e}", c.name);
    let settings = CheckSettings::default();
    let e = ValueEvaluator::new(&c.instance, &c.region, SolverSettings::default()).map_err(err)?;
    let f = c.instance.payoff();
    let bps = c.region.boundary_points();
    for bp in &bps {
        let x = bp.x;
        for (side, dir) in [(Side::Left, -1.0), (Side::Right, 1.0)] {
            if !c.region.side_in_complement(x, side) {
                continue;
            }
            let y = x + dir * 1e-10 * (1.0 + x.abs());
            if !c.instance.diffusion().domain().contains(y) {
                continue;
            }
            let gap = (e.value_j(y).map_err(err)? - f.value(x)).abs();
            if gap > 1e-8 {
                return Err(format!("{}: pasting off by {gap:e} at {x} ({side:?})", c.name));
            }
        }
    }
    for p in c.region.pieces() {
        for x in [p.lower, 0.5 * (p.lower + p.upper), p.upper] {
            if x.is_finite() && c.region.is_member(x) && e.value_j(x).map_err(err)? != f.value(x) {
                return Err(format!("{}: J != f at {x} in S", c.name));
            }
        }
    }
    let rep = equilibrium::classify(&e, &settings).map_err(err)?;
    let v = rep.verdicts;
    if (v.strong.is_strong() && !v.weak) || (v.weak && !v.mild) {
        return Err(format!("{}: verdict hierarchy broken: {v:?}", c.name));
    }
    let certified = v.strong == StrongVerdict::CertifiedStrong;
    if certified {
        let first = equilibrium::compute_fraktur_s(&e, &settings).map_err(err)?;
        // 𝔖_S = S here, so S is rebuilt from its own description and 𝔖 applied again
        let pieces: Vec<Interval> =
            c.region.describe().iter().map(|s| eqstop::model::parse_interval(s).unwrap()).collect();
        let again = StoppingRegion::normalize(*c.region.domain(), &pieces).map_err(err)?;
        let e2 = ValueEvaluator::new(&c.instance, &again, SolverSettings::default()).map_err(err)?;
        let second = equilibrium::compute_fraktur_s(&e2, &settings).map_err(err)?;
        if !second.equals_region || second.intervals != first.intervals {
            return Err(format!("{}: 𝔖 not idempotent: {:?} vs {:?}", c.name, first.intervals, second.intervals));
        }
    }
    Ok(CaseSummary { certified, boundary_points: bps.len() })
}
