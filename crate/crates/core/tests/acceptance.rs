//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eqstop::equilibrium::{self, CheckSettings, ThresholdFamily};
use eqstop::mc::{self, SimConfig};
use eqstop::model::{DiffusionSpec, DiscountSpec, PayoffSpec, ProblemInstance, Side, StoppingRegion};
use eqstop::repro::{self, ExampleId, RunConfig};
use eqstop::resolvent::{ResolventKernel, SolverSettings};
use eqstop::valuation::ValueEvaluator;

type Check = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn within(label: &str, got: f64, want: f64, tol: f64) -> Result<String, String> {
    let err = (got - want).abs();
    let line = format!("{label}={got:.10} (target {want:.10}, |err|={err:.2e}, tol {tol:.0e})");
    if err <= tol {
        Ok(line)
    } else {
        Err(line)
    }
}

fn join(parts: Vec<Result<String, String>>) -> Check {
    let ok = parts.iter().all(|p| p.is_ok());
    let text = parts.into_iter().map(|p| p.unwrap_or_else(|e| format!("FAILED {e}"))).collect::<Vec<_>>().join("; ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn e<T>(r: eqstop::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn put_instance(mu: f64, sigma: f64, disc: DiscountSpec, strike: f64) -> ProblemInstance {
    ProblemInstance::new(DiffusionSpec::geometric(mu, sigma).unwrap(), disc, PayoffSpec::put(strike).unwrap(), "put")
        .unwrap()
}

fn c1_sandwich() -> Check {
    let c = e(equilibrium::check_condition_abcd(0.5, 0.0, 1.0, 0.42, 1.0))?;
    // ∫e^{-s-√s} ds = 2∫u e^{-u²-u} du = 1 - ½ e^{1/4} √π erfc(1/2)
    let closed = 1.0 - 0.5 * 0.25f64.exp() * std::f64::consts::PI.sqrt() * statrs::function::erf::erfc(0.5);
    join(vec![
        within("LHS", c.lhs, 0.3952, 5e-4),
        within("RHS", c.rhs, 0.4544, 5e-4),
        within("RHS vs erfc form", c.rhs, closed, 1e-10),
    ])
}

fn c2_put_threshold() -> Check {
    let (mu, sigma, beta, k) = (0.05, 0.3, 0.1, 1.0);
    let inst = put_instance(mu, sigma, DiscountSpec::hyperbolic(beta).unwrap(), k);
    let res = e(equilibrium::find_threshold_equilibrium(
        &inst,
        ThresholdFamily::LeftRay,
        None,
        SolverSettings::default(),
        CheckSettings::default(),
    ))?;
    let (lambda, _) = equilibrium::lambda_nu(mu, sigma, beta);
    let a = res.parameters[0];
    let ev = e(ValueEvaluator::new(&inst, &res.stopping_region, SolverSettings::default()))?;
    let resid = e(equilibrium::smooth_fit_residual(&ev, a))?;
    join(vec![within("a*", a, lambda * k / (1.0 + lambda), 1e-8), within("smooth-fit residual", resid, 0.0, 1e-7)])
}

fn c3_exponential_put() -> Check {
    let (mu, sigma, r, k) = (0.05, 0.3, 0.1, 1.0);
    let inst = put_instance(mu, sigma, DiscountSpec::exponential(r).unwrap(), k);
    let res = e(equilibrium::find_threshold_equilibrium(
        &inst,
        ThresholdFamily::LeftRay,
        None,
        SolverSettings::default(),
        CheckSettings::default(),
    ))?;
    let s2 = sigma * sigma;
    let nu = mu / s2 - 0.5;
    let theta = nu + (nu * nu + 2.0 * r / s2).sqrt();
    within("threshold", res.parameters[0], k * theta / (1.0 + theta), 1e-8)
}

fn c4_verdict_matrix() -> Check {
    let cfg = RunConfig::default();
    let mut total = 0;
    let mut parts = Vec::new();
    for id in ExampleId::all() {
        let case = e(repro::build_default(id))?;
        let rep = e(repro::run_example(&case, &cfg))?;
        total += rep.candidates.len();
        let mismatched: Vec<String> = rep
            .candidates
            .iter()
            .filter(|c| !c.matches)
            .map(|c| format!("{} {:?}", c.label, c.mismatches))
            .collect();
        let mc_checks: usize = rep.candidates.iter().map(|c| c.mc.len()).sum();
        let line = format!("{}: {} candidates, {mc_checks} simulation checks", id.name(), rep.candidates.len());
        parts.push(if rep.all_match { Ok(line) } else { Err(format!("{line}, mismatches {mismatched:?}")) });
    }
    parts.push(if total >= 12 { Ok(format!("{total} regions")) } else { Err(format!("only {total} regions")) });
    join(parts)
}

fn c5_deviation_oracle() -> Check {
    let case = e(repro::build_example_62(1.0, 0.1, 1.0))?;
    let inst = &case.instance;
    let k = 1.0;
    let domain = *inst.diffusion().domain();
    let cfg = SimConfig::default().with_paths(200_000).with_antithetic(true);
    let eps = [1e-3, 4e-3, 1.6e-2];
    let mut parts = Vec::new();
    let full = StoppingRegion::full(domain);
    for p in e(mc::deviation_sweep(inst, &full, 0.5 * k, &eps, &cfg))? {
        let est = &p.estimate;
        let line = format!("(0,inf) x=K/2 eps={}: D={:.3e} z={:.1}", p.epsilon, est.mean, est.z());
        parts.push(if est.mean > 0.0 && est.z() >= 3.0 && est.valid() { Ok(line) } else { Err(line) });
    }
    let ray = e(StoppingRegion::right_ray(domain, k))?;
    for x in [k, 2.0 * k] {
        for p in e(mc::deviation_sweep(inst, &ray, x, &eps, &cfg))? {
            let est = &p.estimate;
            let line = format!("[K,inf) x={x} eps={}: D={:.3e} se={:.1e}", p.epsilon, est.mean, est.std_error);
            parts.push(if est.mean <= 3.0 * est.std_error && est.valid() { Ok(line) } else { Err(line) });
        }
    }
    join(parts)
}

fn bm_instance() -> ProblemInstance {
    ProblemInstance::new(
        DiffusionSpec::brownian(0.0, 1.0).unwrap(),
        DiscountSpec::hyperbolic(0.1).unwrap(),
        PayoffSpec::table(vec![-1.0, 1.0], vec![1.0, 1.0], vec![]).unwrap(),
        "bm",
    )
    .unwrap()
}

fn c6_local_time() -> Check {
    let cfg = SimConfig::default().with_paths(1_000_000);
    let est = e(mc::estimate_local_time(&bm_instance(), 0.0, 1.0, 1e-3, &cfg))?;
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let line = format!("E[L]/sqrt(eps)={:.5} se={:.5} target {target:.5} |z|={:.2}", est.mean, est.std_error,
        (est.mean - target).abs() / est.std_error);
    if est.agrees_with(target, 3.0, 0.0) && est.std_error <= 0.01 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn c7_exit_ratios() -> Check {
    let inst = bm_instance();
    let cfg = SimConfig::default().with_paths(100_000);
    let mut parts = Vec::new();
    for r in [0.0, 0.5, -0.5] {
        let res = e(mc::exit_time_and_localtime_ratio(&inst, 0.0, 0.05, r, &cfg))?;
        let lt_target = 1.0 / (1.0 + r.abs());
        let l1 = format!("r={r}: exit {:.4}±{:.4}", res.exit_time.mean, res.exit_time.std_error);
        let l2 = format!("r={r}: local {:.4}±{:.4} (target {lt_target:.4})", res.local_time.mean, res.local_time.std_error);
        parts.push(if res.exit_time.agrees_with(1.0, 3.0, 0.05) { Ok(l1) } else { Err(l1) });
        parts.push(if res.local_time.agrees_with(lt_target, 3.0, 0.05) { Ok(l2) } else { Err(l2) });
    }
    join(parts)
}

/// Adaptive Simpson on `[a, b]`.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// `∫₀^∞ e^{-s} g(s) ds` with `s = u²` on `u ∈ [0, 8]`.
fn laplace_mean<G: Fn(f64) -> f64>(g: G) -> f64 {
    simpson(&|u: f64| 2.0 * u * (-u * u).exp() * g(u * u), 0.0, 8.0, 1e-13)
}

fn c8_resolvent() -> Check {
    let mut parts = Vec::new();
    let settings = SolverSettings::default();

    // closed form against collocation on the same coefficients
    let bm = ProblemInstance::new(
        DiffusionSpec::brownian(0.1, 0.8).unwrap(),
        DiscountSpec::hyperbolic(0.5).unwrap(),
        PayoffSpec::table(vec![-60.0, -1.0, 0.0, 2.0, 60.0], vec![0.3, 0.3, 0.8, 0.5, 0.5], vec![-1.0, 0.0, 2.0]).unwrap(),
        "bm",
    )
    .unwrap();
    let bm_region = e(StoppingRegion::points(*bm.diffusion().domain(), &[0.0, 2.0]))?;
    let gbm = put_instance(0.05, 0.3, DiscountSpec::hyperbolic(0.1).unwrap(), 1.0);
    let gbm_region = e(StoppingRegion::normalize(
        *gbm.diffusion().domain(),
        &[eqstop::model::parse_interval("(0, 0.5]").unwrap(), eqstop::model::parse_interval("[1.5, +inf)").unwrap()],
    ))?;
    let gbm_ray = e(StoppingRegion::left_ray(*gbm.diffusion().domain(), 0.6))?;
    for (name, inst, region, xs) in [
        ("BM", &bm, &bm_region, vec![-3.0, -0.5, 0.3, 1.0, 1.7, 2.5, 6.0]),
        ("GBM", &gbm, &gbm_region, vec![0.55, 0.8, 1.0, 1.2, 1.45]),
        ("GBM ray", &gbm, &gbm_ray, vec![0.65, 0.9, 1.5, 3.0, 8.0]),
    ] {
        let custom = ProblemInstance::new(
            inst.diffusion().as_custom(),
            inst.discount().clone(),
            inst.payoff().clone(),
            "custom",
        )
        .unwrap();
        let closed = e(ResolventKernel::new(inst, region, settings))?;
        let colloc = e(ResolventKernel::new(&custom, &StoppingRegion::normalize(*custom.diffusion().domain(), region.pieces()).unwrap(), settings))?;
        // errors are measured against the size of the boundary data; pointwise
        // ratios are also reported where the value is not negligible
        let scale = region.boundary_points().iter().map(|bp| inst.payoff().value(bp.x).abs()).fold(0.0, f64::max);
        let (mut worst, mut pointwise): (f64, f64) = (0.0, 0.0);
        for &r in &[0.01, 0.1, 1.0, 5.0] {
            for &x in &xs {
                let (a, b) = (e(closed.value(x, r))?, e(colloc.value(x, r)).map_err(|m| format!("{name} r={r} x={x}: {m}"))?);
                worst = worst.max((a - b).abs() / scale);
                if a.abs() >= 1e-6 * scale {
                    pointwise = pointwise.max((a - b).abs() / a.abs());
                }
            }
        }
        let line = format!("{name} closed vs BVP max rel {worst:.2e} (pointwise {pointwise:.2e})");
        parts.push(if worst <= 1e-7 { Ok(line) } else { Err(line) });
    }

    // J against direct quadrature of the two-point formulas
    let case = e(repro::build_default(ExampleId::Ex61))?;
    let (beta, a, b, c, d) = (0.5, 0.0, 1.0, 0.42, 1.0);
    let dom = *case.instance.diffusion().domain();
    let jb = e(ValueEvaluator::new(&case.instance, &e(StoppingRegion::points(dom, &[b]))?, SolverSettings::default()))?;
    let jab = e(ValueEvaluator::new(&case.instance, &e(StoppingRegion::points(dom, &[a, b]))?, SolverSettings::default()))?;
    let k = |s: f64| (2.0 * beta * s).sqrt();
    let mut worst: f64 = 0.0;
    for &x in &[-2.0, -0.5, 0.2, 0.5, 0.8, 1.3, 3.0] {
        let want_b = d * laplace_mean(|s| (-(x - b).abs() * k(s)).exp());
        let want_ab = if x < a {
            c * laplace_mean(|s| (-(x - a).abs() * k(s)).exp())
        } else if x <= b {
            laplace_mean(|s| {
                let (l, ks) = (b - a, k(s));
                if ks == 0.0 {
                    (c * (b - x) + d * (x - a)) / l
                } else {
                    (c * ((b - x) * ks).sinh() + d * ((x - a) * ks).sinh()) / (l * ks).sinh()
                }
            })
        } else {
            want_b
        };
        worst = worst.max((e(jb.value_j(x))? - want_b).abs() / want_b);
        worst = worst.max((e(jab.value_j(x))? - want_ab).abs() / want_ab);
    }
    let line = format!("J vs quadrature max rel {worst:.2e}");
    parts.push(if worst <= 1e-6 { Ok(line) } else { Err(line) });

    // one-sided derivatives against Richardson-extrapolated central differences
    let mut worst: f64 = 0.0;
    let ev_bm = e(ValueEvaluator::new(&bm, &bm_region, SolverSettings::default()))?;
    let ev_gbm = e(ValueEvaluator::new(&gbm, &gbm_region, SolverSettings::default()))?;
    for (ev, xs) in [(&ev_bm, vec![-1.5, 0.5, 1.0, 1.5, 3.0]), (&ev_gbm, vec![0.6, 0.9, 1.3])] {
        for &x in &xs {
            let j = |y: f64| ev.value_j(y).unwrap();
            let h = 1e-3 * (1.0 + f64::abs(x));
            let cd = |h: f64| (j(x + h) - j(x - h)) / (2.0 * h);
            let rich = (4.0 * cd(h / 2.0) - cd(h)) / 3.0;
            let an = e(ev.vx_onesided(x, Side::Right))?;
            worst = worst.max((an - rich).abs() / an.abs().max(1e-3));
        }
    }
    let line = format!("V_x vs Richardson max rel {worst:.2e}");
    parts.push(if worst <= 1e-5 { Ok(line) } else { Err(line) });
    join(parts)
}

fn c9_properties() -> Check {
    let mut parts = Vec::new();
    let discounts = common::builtin_discounts();
    let bad: Vec<String> = discounts.iter().filter_map(|d| common::check_discount(d).err()).collect();
    parts.push(if bad.is_empty() {
        Ok(format!("{} discounts × {} pairs", discounts.len(), common::pair_grid().len()))
    } else {
        Err(bad.join(" | "))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_97);
    let mut certified = 0;
    let mut failures = Vec::new();
    for i in 0..50u8 {
        let u: [f64; 5] = std::array::from_fn(|_| rng.random::<f64>());
        match common::check_case(&common::random_case(i % 4, u)) {
            Ok(s) => certified += s.certified as usize,
            Err(msg) => failures.push(msg),
        }
    }
    parts.push(if failures.is_empty() {
        Ok(format!("50 random instances ({certified} certified strong)"))
    } else {
        Err(failures.join(" | "))
    });
    join(parts)
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "sandwich endpoints", budget: Duration::from_secs(1), run: c1_sandwich },
        Criterion { id: 2, name: "put threshold under hyperbolic discount", budget: Duration::from_secs(5), run: c2_put_threshold },
        Criterion { id: 3, name: "perpetual put under exponential discount", budget: Duration::from_secs(5), run: c3_exponential_put },
        Criterion { id: 4, name: "verdict matrix", budget: Duration::from_secs(120), run: c4_verdict_matrix },
        Criterion { id: 5, name: "deviation oracle", budget: Duration::from_secs(60), run: c5_deviation_oracle },
        Criterion { id: 6, name: "local-time constant", budget: Duration::from_secs(120), run: c6_local_time },
        Criterion { id: 7, name: "exit-time and local-time ratios", budget: Duration::from_secs(120), run: c7_exit_ratios },
        Criterion { id: 8, name: "resolvent correctness", budget: Duration::from_secs(30), run: c8_resolvent },
        Criterion { id: 9, name: "property suites", budget: Duration::from_secs(60), run: c9_properties },
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let t = Instant::now();
        let res = (c.run)();
        let dt = t.elapsed();
        let in_time = dt <= c.budget;
        let (ok, detail) = match res {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let timing = format!("{:.2}s of {}s", dt.as_secs_f64(), c.budget.as_secs());
        let timing = if in_time { timing } else { format!("{timing} OVER BUDGET") };
        println!("[{}] {}. {} ({timing}): {detail}", if ok { "PASS" } else { "FAIL" }, c.id, c.name);
        failed += !ok as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
