//! Monte Carlo estimators used as an independent check on the analytic side:
//! first-entry values, ε-delayed deviations, local time and small-time
//! asymptotics.
//!
//! Every path (or antithetic pair) draws from its own ChaCha8 stream, indexed
//! by path number, so results do not depend on how rayon schedules the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiffusionKind, DiffusionSpec, Gap, GapEnd, ProblemInstance, StoppingRegion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact Gaussian steps for Brownian and geometric Brownian motion
    /// (in log space), Euler–Maruyama otherwise.
    Exact,
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalTimeEstimator {
    /// Discrete Itô–Tanaka: `|X_n - a| - |X_0 - a| - Σ sgn(X_i - a) ΔX_i`.
    Tanaka,
    /// `(1/2k) ∫ 1{|X_s - a| ≤ k} σ²(X_s) ds`.
    Occupation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub step: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Half-width of the occupation band; `None` picks `max(3σ(x0)√step, 1e-4)`.
    pub band: Option<f64>,
    pub antithetic: bool,
    pub local_time: LocalTimeEstimator,
    /// Lengthen steps while the path is far from every stopping boundary
    /// (exact schemes only).
    pub adaptive: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            horizon: 1e5,
            paths: 100_000,
            seed: 0x5eed_2024,
            scheme: Scheme::Exact,
            band: None,
            antithetic: false,
            local_time: LocalTimeEstimator::Tanaka,
            adaptive: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::SimConfig(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::SimConfig(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.paths < 100 {
            return Err(Error::SimConfig(format!("need at least 100 paths, got {}", self.paths)));
        }
        if let Some(k) = self.band {
            if !(k > 0.0) {
                return Err(Error::SimConfig(format!("band must be positive, got {k}")));
            }
        }
        Ok(())
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    fn samples(&self) -> usize {
        if self.antithetic {
            self.paths.div_ceil(2)
        } else {
            self.paths
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub target: String,
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
    /// Fraction of paths that reached the horizon without entering S.
    pub censored_fraction: f64,
    /// `censored_fraction · δ(horizon)`: bound on the discount weight dropped by censoring.
    pub censored_mass: f64,
    /// Paths killed at a finite end of the state space.
    pub domain_exits: usize,
    pub warnings: Vec<String>,
}

impl McEstimate {
    pub fn z(&self) -> f64 {
        if self.std_error > 0.0 {
            self.mean / self.std_error
        } else if self.mean == 0.0 {
            0.0
        } else {
            self.mean.signum() * f64::INFINITY
        }
    }

    /// `|mean - value| ≤ k·SE + allowance`.
    pub fn agrees_with(&self, value: f64, k: f64, allowance: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error + allowance
    }

    /// Whether the censored mass is within the 1e-3 budget.
    pub fn valid(&self) -> bool {
        self.censored_mass <= 1e-3
    }

    fn scaled(mut self, c: f64) -> Self {
        self.mean *= c;
        self.std_error *= c.abs();
        self
    }
}

/// Pairwise summation; fixed split points make the result independent of thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = if xs.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs `path(rng, sign)` once per path, or on both signs of each antithetic
/// pair, and returns the per-sample values in path order.
fn run_paths<T, F>(cfg: &SimConfig, path: F) -> Vec<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, f64) -> T + Sync,
{
    (0..cfg.samples())
        .into_par_iter()
        .map(|i| {
            if cfg.antithetic {
                let mut r1 = stream(cfg.seed, i);
                let mut r2 = r1.clone();
                vec![path(&mut r1, 1.0), path(&mut r2, -1.0)]
            } else {
                vec![path(&mut stream(cfg.seed, i), 1.0)]
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Coord {
    /// `y = x`, exact steps `y + m h + s √h z`.
    Linear { m: f64, s: f64 },
    /// `y = ln x`, exact steps with `m = μ - σ²/2`.
    Log { m: f64, s: f64 },
    /// `y = x`, Euler–Maruyama.
    Euler,
}

/// Path stepping in a coordinate where the chosen scheme is simplest.
struct Stepper<'a> {
    diffusion: &'a DiffusionSpec,
    coord: Coord,
}

impl<'a> Stepper<'a> {
    fn new(diffusion: &'a DiffusionSpec, scheme: Scheme) -> Self {
        let coord = match (scheme, diffusion.kind()) {
            (Scheme::Exact, DiffusionKind::BrownianMotion { mu, sigma }) => Coord::Linear { m: *mu, s: sigma.abs() },
            (Scheme::Exact, DiffusionKind::GeometricBrownianMotion { mu, sigma }) => {
                Coord::Log { m: mu - 0.5 * sigma * sigma, s: sigma.abs() }
            }
            _ => Coord::Euler,
        };
        Self { diffusion, coord }
    }

    fn exact(&self) -> bool {
        !matches!(self.coord, Coord::Euler)
    }

    fn to_y(&self, x: f64) -> f64 {
        match self.coord {
            Coord::Log { .. } => x.ln(),
            _ => x,
        }
    }

    fn to_x(&self, y: f64) -> f64 {
        match self.coord {
            Coord::Log { .. } => y.exp(),
            _ => y,
        }
    }

    /// Drift and volatility in the `y` coordinate at `y`.
    fn local(&self, y: f64) -> (f64, f64) {
        match self.coord {
            Coord::Linear { m, s } | Coord::Log { m, s } => (m, s),
            Coord::Euler => (self.diffusion.mu(y), self.diffusion.sigma(y).abs()),
        }
    }

    fn step(&self, y: f64, h: f64, z: f64) -> f64 {
        let (m, s) = self.local(y);
        y + m * h + s * h.sqrt() * z
    }
}

/// End of a path started in S^c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PathOutcome {
    Entered { time: f64, x: f64 },
    /// Killed at a finite end of the state space.
    Exited { time: f64 },
    /// Reached the horizon.
    Censored,
    /// The continuation component has no stopping end; S is never reached.
    Never,
}

fn draw(rng: &mut ChaCha8Rng, sign: f64) -> (f64, f64) {
    let z: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    (sign * z, u)
}

/// Probability that a Brownian bridge from `y0` to `y1` over time `h` with
/// volatility `s` touches `b`, given both ends on the same side.
fn bridge_hit(y0: f64, y1: f64, b: f64, s: f64, h: f64) -> f64 {
    if !b.is_finite() {
        return 0.0;
    }
    (-2.0 * (y0 - b) * (y1 - b) / (s * s * h)).exp()
}

struct EntryWalk<'a> {
    stepper: Stepper<'a>,
    cfg: SimConfig,
}

impl<'a> EntryWalk<'a> {
    fn end_outcome(end: GapEnd, time: f64) -> PathOutcome {
        match end {
            GapEnd::Stop(b) => PathOutcome::Entered { time, x: b },
            GapEnd::DomainEnd(_) => PathOutcome::Exited { time },
        }
    }

    /// First entry into S after `t0` from `x0` in the component `gap`.
    fn run(&self, gap: &Gap, x0: f64, t0: f64, rng: &mut ChaCha8Rng, sign: f64) -> PathOutcome {
        let st = &self.stepper;
        let (lo_end, hi_end) = (gap.left, gap.right);
        let live = |e: &GapEnd| e.is_stop() || e.position().is_finite();
        if !live(&lo_end) && !live(&hi_end) {
            return PathOutcome::Never;
        }
        let lo = if live(&lo_end) { st.to_y(lo_end.position()) } else { f64::NEG_INFINITY };
        let hi = if live(&hi_end) { st.to_y(hi_end.position()) } else { f64::INFINITY };
        let horizon = self.cfg.horizon;
        let mut y = st.to_y(x0);
        let mut t = t0;
        while t < horizon {
            let (m, s) = st.local(y);
            let mut h = self.cfg.step;
            if self.cfg.adaptive && st.exact() {
                let dist = (y - lo).min(hi - y);
                let far = (dist * dist / (25.0 * s * s)).min(if m != 0.0 { 0.5 * dist / m.abs() } else { f64::INFINITY });
                h = h.max(far.min(0.1 * (1.0 + t)));
            }
            h = h.min(horizon - t).max(f64::MIN_POSITIVE);
            let (z, u) = draw(rng, sign);
            let y1 = st.step(y, h, z);
            if y1 <= lo {
                return Self::end_outcome(lo_end, t + h * (y - lo) / (y - y1));
            }
            if y1 >= hi {
                return Self::end_outcome(hi_end, t + h * (hi - y) / (y1 - y));
            }
            let p_lo = bridge_hit(y, y1, lo, s, h);
            let p_hi = bridge_hit(y, y1, hi, s, h);
            if u < p_lo {
                return Self::end_outcome(lo_end, t + 0.5 * h);
            }
            if u < p_lo + p_hi {
                return Self::end_outcome(hi_end, t + 0.5 * h);
            }
            y = y1;
            t += h;
        }
        PathOutcome::Censored
    }
}

fn check_point(instance: &ProblemInstance, x: f64) -> Result<()> {
    let d = instance.diffusion().domain();
    if d.contains(x) {
        Ok(())
    } else {
        Err(Error::OutOfDomain { x, domain: d.to_string() })
    }
}

fn first_entry_from(
    walk: &EntryWalk,
    region: &StoppingRegion,
    gaps: &[Gap],
    x: f64,
    t0: f64,
    rng: &mut ChaCha8Rng,
    sign: f64,
) -> PathOutcome {
    if !region.domain().contains(x) {
        return PathOutcome::Exited { time: t0 };
    }
    match gaps.iter().find(|g| g.contains(x)) {
        None => PathOutcome::Entered { time: t0, x },
        Some(g) => walk.run(g, x, t0, rng, sign),
    }
}

/// Sample of first-entry outcomes `(ρ_S, X_{ρ_S})` from `x0`.
pub fn simulate_first_entry(
    instance: &ProblemInstance,
    region: &StoppingRegion,
    x0: f64,
    cfg: &SimConfig,
) -> Result<Vec<PathOutcome>> {
    cfg.validate()?;
    check_point(instance, x0)?;
    region.ensure_admissible()?;
    let walk = EntryWalk { stepper: Stepper::new(instance.diffusion(), cfg.scheme), cfg: *cfg };
    let gaps = region.gaps();
    let out = run_paths(cfg, |rng, sign| first_entry_from(&walk, region, &gaps, x0, 0.0, rng, sign));
    Ok(out.into_iter().flatten().collect())
}

fn payoff_estimate(
    instance: &ProblemInstance,
    outcomes: Vec<Vec<PathOutcome>>,
    offset: f64,
    target: String,
    cfg: &SimConfig,
) -> McEstimate {
    let disc = instance.discount();
    let f = instance.payoff();
    let mut censored = 0usize;
    let mut exits = 0usize;
    let mut total = 0usize;
    let samples: Vec<f64> = outcomes
        .iter()
        .map(|group| {
            let vals: Vec<f64> = group
                .iter()
                .map(|o| match *o {
                    PathOutcome::Entered { time, x } => disc.delta(time) * f.value(x),
                    _ => 0.0,
                })
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64 - offset
        })
        .collect();
    for o in outcomes.iter().flatten() {
        total += 1;
        match o {
            PathOutcome::Censored => censored += 1,
            PathOutcome::Exited { .. } => exits += 1,
            _ => {}
        }
    }
    let (mean, std_error) = mean_se(&samples);
    let censored_fraction = censored as f64 / total as f64;
    let censored_mass = censored_fraction * disc.delta(cfg.horizon);
    let mut warnings = Vec::new();
    if censored_fraction > 1e-3 {
        warnings.push(format!(
            "{:.3}% of paths reached the horizon {}; censored mass {:.2e}",
            100.0 * censored_fraction,
            cfg.horizon,
            censored_mass
        ));
    }
    McEstimate {
        target,
        mean,
        std_error,
        n: total,
        seed: cfg.seed,
        censored_fraction,
        censored_mass,
        domain_exits: exits,
        warnings,
    }
}

/// Estimate of `J(x0, S) = E[δ(ρ_S) f(X_{ρ_S})]`; censored and killed paths pay 0.
pub fn estimate_j(instance: &ProblemInstance, region: &StoppingRegion, x0: f64, cfg: &SimConfig) -> Result<McEstimate> {
    cfg.validate()?;
    check_point(instance, x0)?;
    region.ensure_admissible()?;
    let walk = EntryWalk { stepper: Stepper::new(instance.diffusion(), cfg.scheme), cfg: *cfg };
    let gaps = region.gaps();
    let out = run_paths(cfg, |rng, sign| first_entry_from(&walk, region, &gaps, x0, 0.0, rng, sign));
    Ok(payoff_estimate(instance, out, 0.0, format!("J({x0}, S)"), cfg))
}

/// Advances `x` by time `eps` without any stopping; `None` if the path is killed.
fn free_run(st: &Stepper, x: f64, eps: f64, step: f64, rng: &mut ChaCha8Rng, sign: f64) -> Option<f64> {
    let domain = st.diffusion.domain();
    if st.exact() {
        let (z, _) = draw(rng, sign);
        let x1 = st.to_x(st.step(st.to_y(x), eps, z));
        return domain.contains(x1).then_some(x1);
    }
    let n = (eps / step).ceil().max(1.0) as usize;
    let h = eps / n as f64;
    let mut y = x;
    for _ in 0..n {
        let (z, _) = draw(rng, sign);
        y = st.step(y, h, z);
        if !domain.contains(y) {
            return None;
        }
    }
    Some(y)
}

/// Estimate of `D(ε) = E[δ(ρ^ε_S) f(X_{ρ^ε_S})] - f(x)` with `ρ^ε_S = inf{t ≥ ε : X_t ∈ S}`.
pub fn estimate_deviation(
    instance: &ProblemInstance,
    region: &StoppingRegion,
    x: f64,
    eps: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    check_point(instance, x)?;
    region.ensure_admissible()?;
    if !region.is_member(x) {
        return Err(Error::Parameter(format!("deviation needs x in S, got {x}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("ε must be positive, got {eps}")));
    }
    let stepper = Stepper::new(instance.diffusion(), cfg.scheme);
    let walk = EntryWalk { stepper: Stepper::new(instance.diffusion(), cfg.scheme), cfg: *cfg };
    let gaps = region.gaps();
    let out = run_paths(cfg, |rng, sign| match free_run(&stepper, x, eps, cfg.step, rng, sign) {
        None => PathOutcome::Exited { time: eps },
        Some(xe) => first_entry_from(&walk, region, &gaps, xe, eps, rng, sign),
    });
    let fx = instance.payoff().value(x);
    Ok(payoff_estimate(instance, out, fx, format!("D({eps}) at x={x}"), cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationPoint {
    pub epsilon: f64,
    pub estimate: McEstimate,
    /// `D(ε)/ε`
    pub ratio: f64,
    pub ratio_se: f64,
}

/// `D(ε)` and `D(ε)/ε` over a grid of delays, each with an independent seed offset.
pub fn deviation_sweep(
    instance: &ProblemInstance,
    region: &StoppingRegion,
    x: f64,
    eps: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<DeviationPoint>> {
    eps.iter()
        .enumerate()
        .map(|(i, &e)| {
            let c = cfg.with_seed(cfg.seed.wrapping_add(i as u64));
            let estimate = estimate_deviation(instance, region, x, e, &c)?;
            Ok(DeviationPoint { epsilon: e, ratio: estimate.mean / e, ratio_se: estimate.std_error / e, estimate })
        })
        .collect()
}

fn plain_estimate(target: String, samples: &[f64], cfg: &SimConfig) -> McEstimate {
    let (mean, std_error) = mean_se(samples);
    McEstimate {
        target,
        mean,
        std_error,
        n: cfg.paths,
        seed: cfg.seed,
        censored_fraction: 0.0,
        censored_mass: 0.0,
        domain_exits: 0,
        warnings: Vec::new(),
    }
}

fn group_means(groups: Vec<Vec<f64>>) -> Vec<f64> {
    groups.into_iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect()
}

/// Result of a path run inside the ball `B(x0, h)`.
#[derive(Debug, Clone, Copy)]
struct BallRun {
    /// Exit time, or the time limit if the ball was not left.
    tau: f64,
    exited: bool,
    /// Local time at `x0` accumulated up to `tau`, weighted by `weight(t)`.
    local_time: f64,
}

/// Simulates in `x` coordinates from `start` until `limit` or exit from
/// `(x0 - h, x0 + h)`, with Brownian-bridge exit detection.
#[allow(clippy::too_many_arguments)]
fn ball_run(
    st: &Stepper,
    x0: f64,
    start: f64,
    h: f64,
    limit: f64,
    step: f64,
    estimator: LocalTimeEstimator,
    band: f64,
    weight: &dyn Fn(f64) -> f64,
    rng: &mut ChaCha8Rng,
    sign: f64,
) -> BallRun {
    let (lo, hi) = (st.to_y(x0 - h), st.to_y(x0 + h));
    let mut y = st.to_y(start);
    let mut t = 0.0;
    let mut lt = 0.0;
    let tanaka = |a: f64, b: f64| {
        let s0 = if a > x0 {
            1.0
        } else if a < x0 {
            -1.0
        } else {
            0.0
        };
        (b - x0).abs() - (a - x0).abs() - s0 * (b - a)
    };
    while t < limit {
        let dt = step.min(limit - t);
        let (_, s) = st.local(y);
        let (z, u) = draw(rng, sign);
        let y1 = st.step(y, dt, z);
        let (xa, mut xb) = (st.to_x(y), st.to_x(y1));
        let mut exit_at = None;
        if y1 <= lo || y1 >= hi {
            let b = if y1 <= lo { lo } else { hi };
            exit_at = Some(t + dt * (b - y) / (y1 - y));
            xb = st.to_x(b);
        } else {
            let p_lo = bridge_hit(y, y1, lo, s, dt);
            let p_hi = bridge_hit(y, y1, hi, s, dt);
            if u < p_lo + p_hi {
                exit_at = Some(t + 0.5 * dt);
                xb = st.to_x(if u < p_lo { lo } else { hi });
            }
        }
        match estimator {
            LocalTimeEstimator::Tanaka => lt += weight(t) * tanaka(xa, xb),
            LocalTimeEstimator::Occupation => {
                if (xa - x0).abs() <= band {
                    let span = exit_at.map_or(dt, |te| te - t);
                    lt += weight(t) * st.diffusion.sigma2(xa) * span / (2.0 * band);
                }
            }
        }
        if let Some(te) = exit_at {
            return BallRun { tau: te, exited: true, local_time: lt };
        }
        y = y1;
        t += dt;
    }
    BallRun { tau: limit, exited: false, local_time: lt }
}

fn default_band(instance: &ProblemInstance, x0: f64, step: f64, cfg: &SimConfig) -> f64 {
    cfg.band.unwrap_or_else(|| (3.0 * instance.diffusion().sigma(x0).abs() * step.sqrt()).max(1e-4))
}

/// Estimate of `E[L^{x0}_{ε ∧ τ}] / √ε` with `τ` the exit time of `B(x0, h)`.
pub fn estimate_local_time(instance: &ProblemInstance, x0: f64, h: f64, eps: f64, cfg: &SimConfig) -> Result<McEstimate> {
    cfg.validate()?;
    check_point(instance, x0)?;
    if !(h > 0.0 && eps > 0.0) {
        return Err(Error::Parameter(format!("need h > 0 and ε > 0, got h={h}, ε={eps}")));
    }
    let step = cfg.step.min(eps / 64.0);
    let band = default_band(instance, x0, step, cfg);
    let st = Stepper::new(instance.diffusion(), cfg.scheme);
    let one = |_: f64| 1.0;
    let out = run_paths(cfg, |rng, sign| {
        ball_run(&st, x0, x0, h, eps, step, cfg.local_time, band, &one, rng, sign).local_time
    });
    let name = match cfg.local_time {
        LocalTimeEstimator::Tanaka => "tanaka",
        LocalTimeEstimator::Occupation => "occupation",
    };
    let est = plain_estimate(format!("E[L^{x0}_(ε∧τ)]/√ε, ε={eps}, h={h} ({name})"), &group_means(out), cfg);
    Ok(est.scaled(1.0 / eps.sqrt()))
}

/// Estimate of `P(τ_{B(x0,h)} ≤ ε)`.
pub fn small_time_exit_prob(instance: &ProblemInstance, x0: f64, h: f64, eps: f64, cfg: &SimConfig) -> Result<McEstimate> {
    cfg.validate()?;
    check_point(instance, x0)?;
    if !(h > 0.0 && eps > 0.0) {
        return Err(Error::Parameter(format!("need h > 0 and ε > 0, got h={h}, ε={eps}")));
    }
    let step = cfg.step.min(eps / 64.0);
    let st = Stepper::new(instance.diffusion(), cfg.scheme);
    let one = |_: f64| 1.0;
    let out = run_paths(cfg, |rng, sign| {
        let run = ball_run(&st, x0, x0, h, eps, step, LocalTimeEstimator::Tanaka, 1.0, &one, rng, sign);
        if run.exited {
            1.0
        } else {
            0.0
        }
    });
    Ok(plain_estimate(format!("P(τ_B({x0},{h}) ≤ {eps})"), &group_means(out), cfg))
}

/// Estimate of `P(X_t > x0)`.
pub fn half_probability(instance: &ProblemInstance, x0: f64, t: f64, cfg: &SimConfig) -> Result<McEstimate> {
    cfg.validate()?;
    check_point(instance, x0)?;
    if !(t > 0.0) {
        return Err(Error::Parameter(format!("t must be positive, got {t}")));
    }
    let st = Stepper::new(instance.diffusion(), cfg.scheme);
    let out = run_paths(cfg, |rng, sign| match free_run(&st, x0, t, cfg.step.min(t / 16.0), rng, sign) {
        Some(x) if x > x0 => 1.0,
        _ => 0.0,
    });
    Ok(plain_estimate(format!("P(X_{t} > {x0})"), &group_means(out), cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRatios {
    /// `E^{x0+rh}[τ] / ((1-r²)h²)`, limit `1/σ²(x0)`.
    pub exit_time: McEstimate,
    /// `h·E[∫₀^τ δ(t) dL^{x0}_t] / E[τ]`, limit `σ²(x0)/(1+|r|)`.
    pub local_time: McEstimate,
    /// Paths still inside the ball at the horizon.
    pub unexited: usize,
}

/// Exit-time and discounted local-time ratios for the ball `B(x0, h)` started at `x0 + r h`.
pub fn exit_time_and_localtime_ratio(
    instance: &ProblemInstance,
    x0: f64,
    h: f64,
    r: f64,
    cfg: &SimConfig,
) -> Result<ExitRatios> {
    cfg.validate()?;
    check_point(instance, x0)?;
    if !(h > 0.0) || !(r.abs() < 1.0) {
        return Err(Error::Parameter(format!("need h > 0 and |r| < 1, got h={h}, r={r}")));
    }
    let step = cfg.step.min(h * h / 1000.0);
    let band = default_band(instance, x0, step, cfg);
    let st = Stepper::new(instance.diffusion(), cfg.scheme);
    let disc = instance.discount();
    let weight = |t: f64| disc.delta(t);
    let start = x0 + r * h;
    let runs = run_paths(cfg, |rng, sign| {
        ball_run(&st, x0, start, h, cfg.horizon, step, cfg.local_time, band, &weight, rng, sign)
    });
    let unexited = runs.iter().flatten().filter(|b| !b.exited).count();
    let taus: Vec<f64> = runs.iter().map(|g| g.iter().map(|b| b.tau).sum::<f64>() / g.len() as f64).collect();
    let lts: Vec<f64> = runs.iter().map(|g| g.iter().map(|b| b.local_time).sum::<f64>() / g.len() as f64).collect();
    let scale = (1.0 - r * r) * h * h;
    let exit_time = plain_estimate(format!("E[τ]/((1-r²)h²), h={h}, r={r}"), &taus, cfg).scaled(1.0 / scale);
    let (mt, _) = mean_se(&taus);
    let (ml, _) = mean_se(&lts);
    let ratio = h * ml / mt;
    // delta method for a ratio of means
    let lin: Vec<f64> = taus.iter().zip(&lts).map(|(t, l)| (h * l - ratio * t) / mt).collect();
    let (_, se) = mean_se(&lin);
    let mut local_time = plain_estimate(format!("h·E[∫δ dL]/E[τ], h={h}, r={r}"), &lin, cfg);
    local_time.mean = ratio;
    local_time.std_error = se;
    Ok(ExitRatios { exit_time, local_time, unexited })
}

/// Estimate of `E|X_ε - x0 - μ(x0)ε - σ(x0)W_ε|` for the Euler path and its
/// frozen-coefficient companion driven by the same noise.
pub fn drift_remainder_check(instance: &ProblemInstance, x0: f64, eps: f64, cfg: &SimConfig) -> Result<McEstimate> {
    cfg.validate()?;
    check_point(instance, x0)?;
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("ε must be positive, got {eps}")));
    }
    let d = instance.diffusion();
    let n = (eps / cfg.step.min(eps / 16.0)).ceil() as usize;
    let dt = eps / n as f64;
    let (m0, s0) = (d.mu(x0), d.sigma(x0));
    let out = run_paths(cfg, |rng, sign| {
        let mut x = x0;
        let mut w = 0.0;
        for _ in 0..n {
            let z: f64 = sign * rng.sample::<f64, _>(StandardNormal);
            let dw = dt.sqrt() * z;
            x += d.mu(x) * dt + d.sigma(x) * dw;
            w += dw;
        }
        (x - x0 - m0 * eps - s0 * w).abs()
    });
    Ok(plain_estimate(format!("E|X̄_{eps}| at x0={x0}"), &group_means(out), cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiscountSpec, Interval, PayoffSpec};

    fn bm(discount: DiscountSpec) -> ProblemInstance {
        ProblemInstance::new(
            DiffusionSpec::brownian(0.0, 1.0).unwrap(),
            discount,
            PayoffSpec::table(vec![-1.0, 1.0], vec![1.0, 1.0], vec![]).unwrap(),
            "bm",
        )
        .unwrap()
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn start_in_region_enters_immediately() {
        let inst = bm(DiscountSpec::exponential(0.5).unwrap());
        let s = StoppingRegion::left_ray(Interval::real_line(), 0.0).unwrap();
        let out = simulate_first_entry(&inst, &s, -1.0, &SimConfig::default().with_paths(200)).unwrap();
        assert!(out.iter().all(|o| *o == PathOutcome::Entered { time: 0.0, x: -1.0 }));
    }

    #[test]
    fn laplace_transform_of_hitting_time() {
        // E[e^{-rρ}] for BM hitting 0 from 1 is e^{-√(2r)}
        let inst = bm(DiscountSpec::exponential(0.5).unwrap());
        let s = StoppingRegion::points(Interval::real_line(), &[0.0]).unwrap();
        let est = estimate_j(&inst, &s, 1.0, &SimConfig::default().with_paths(20_000)).unwrap();
        assert!(est.agrees_with((-1f64).exp(), 3.0, 2e-3), "{est:?}");
    }

    #[test]
    fn same_seed_same_bits() {
        let inst = bm(DiscountSpec::hyperbolic(0.5).unwrap());
        let s = StoppingRegion::points(Interval::real_line(), &[1.0]).unwrap();
        let cfg = SimConfig::default().with_paths(500).with_antithetic(true);
        let a = estimate_j(&inst, &s, 0.2, &cfg).unwrap();
        let b = estimate_j(&inst, &s, 0.2, &cfg).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn deep_interior_deviation_is_pure_discounting() {
        let inst = bm(DiscountSpec::hyperbolic(0.5).unwrap());
        let s = StoppingRegion::full(Interval::real_line());
        let est = estimate_deviation(&inst, &s, -5.0, 1e-3, &SimConfig::default().with_paths(1000)).unwrap();
        let expect = (1.0 / (1.0 + 0.5e-3) - 1.0) * inst.payoff().value(-5.0);
        assert!((est.mean - expect).abs() < 1e-3);
    }

    #[test]
    fn constant_coefficients_have_no_drift_remainder() {
        let inst = bm(DiscountSpec::exponential(1.0).unwrap());
        let est = drift_remainder_check(&inst, 0.3, 1e-2, &SimConfig::default().with_paths(200)).unwrap();
        assert!(est.mean < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().with_paths(10).validate().is_err());
        assert!(SimConfig::default().with_step(0.0).validate().is_err());
    }
}
