//! Mild, weak and strong equilibrium checks for a stopping region, the strictness
//! set `𝔖_S`, smooth-fit residuals and threshold searches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::diffusion::sample_grid;
use crate::model::instance::InstanceSummary;
use crate::model::{Gap, Interval, ProblemInstance, Side, StoppingRegion};
use crate::quad;
use crate::resolvent::SolverSettings;
use crate::valuation::ValueEvaluator;

/// Grid densities and tolerances of the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSettings {
    /// Sample points per continuation component for the mild condition.
    pub grid_points: usize,
    /// Sample points per piece of S for the generator condition and `𝔖_S`.
    pub interior_points: usize,
    /// A "≥ 0" condition passes when the value is ≥ `-tol_eq · (1 + scale)`.
    pub tol_eq: f64,
    /// A strict "> 0" condition requires a value > `tol_strict · (1 + scale)`.
    pub tol_strict: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self { grid_points: 257, interior_points: 129, tol_eq: 1e-7, tol_strict: 1e-6 }
    }
}

/// A point and the value of the condition there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub holds: bool,
    /// Worst point found; `None` when there was nothing to check.
    pub worst: Option<Witness>,
    pub points_checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakCheck {
    pub holds: bool,
    /// `J ≥ f` on S^c.
    pub continuation: ConditionCheck,
    /// `V_x(0,x-) ≥ V_x(0,x+)` at boundary points and kinks in S.
    pub derivative_jump: ConditionCheck,
    /// `𝓛V(0,x-) ∨ 𝓛V(0,x+) ≤ 0` on S.
    pub generator: ConditionCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongVerdict {
    CertifiedStrong,
    NotCertified,
    NotStrongWitnessed,
}

impl StrongVerdict {
    pub fn is_strong(self) -> bool {
        self == StrongVerdict::CertifiedStrong
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrakturPoint {
    pub x: f64,
    /// `𝓛V(0,x-) ∧ 𝓛V(0,x+)`
    pub generator_min: f64,
    /// `V_x(0,x-) - V_x(0,x+)`
    pub derivative_jump: f64,
    pub generator_clause: bool,
    pub derivative_clause: bool,
}

impl FrakturPoint {
    pub fn qualifies(&self) -> bool {
        self.generator_clause || self.derivative_clause
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrakturSet {
    /// Maximal runs of qualifying sample points, as closed intervals `[lo, hi]`.
    pub intervals: Vec<[f64; 2]>,
    /// Whether every sampled point of S qualifies, i.e. `𝔖_S = S` at the sampled resolution.
    pub equals_region: bool,
    /// Sampled points of S outside `𝔖_S`.
    pub excluded: Vec<f64>,
    /// Excluded points whose best clause is positive but below the strict tolerance.
    pub indeterminate: Vec<f64>,
    pub points: Vec<FrakturPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongCheck {
    pub verdict: StrongVerdict,
    pub weak: bool,
    pub fraktur: FrakturSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothFit {
    pub x: f64,
    pub residual: f64,
    pub payoff_differentiable: bool,
}

fn geom(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let r = (hi / lo).ln();
    (0..n).map(|i| lo * (r * i as f64 / (n - 1) as f64).exp()).collect()
}

fn length_scale(x: f64) -> f64 {
    1.0_f64.max(x.abs())
}

/// Sample points inside a continuation component, clustered geometrically
/// towards its finite ends.
pub fn component_samples(gap: &Gap, n: usize) -> Vec<f64> {
    let (a, b) = (gap.left.position(), gap.right.position());
    let mut xs = match (a.is_finite(), b.is_finite()) {
        (true, true) => {
            let half = 0.5 * (b - a);
            let d = geom(1e-6, 1.0, n / 2 + 1);
            let mut v: Vec<f64> = d.iter().map(|t| a + half * t).collect();
            v.extend(d.iter().map(|t| b - half * t));
            v
        }
        (true, false) => geom(1e-6, 1e3, n).into_iter().map(|t| a + length_scale(a) * t).collect(),
        (false, true) => geom(1e-6, 1e3, n).into_iter().map(|t| b - length_scale(b) * t).collect(),
        (false, false) => sample_grid(&gap.as_interval(), n),
    };
    xs.retain(|x| gap.contains(*x));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Sample points inside a piece of S (its closure intersected with the state space).
pub fn piece_samples(piece: &Interval, domain: &Interval, n: usize) -> Vec<f64> {
    let (a, b) = (piece.lower, piece.upper);
    let mut xs = if piece.is_point() {
        vec![a]
    } else {
        match (a.is_finite(), b.is_finite()) {
            (true, true) if !piece.lower_closed && a == 0.0 => geom(1e-8 * b, b, n),
            (true, true) => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1).max(1) as f64).collect(),
            (true, false) => {
                let mut v = vec![a];
                v.extend(geom(1e-6, 1e3, n - 1).into_iter().map(|t| a + length_scale(a) * t));
                v
            }
            (false, true) => {
                let mut v = vec![b];
                v.extend(geom(1e-6, 1e3, n - 1).into_iter().map(|t| b - length_scale(b) * t));
                v
            }
            (false, false) => sample_grid(domain, n),
        }
    };
    xs.retain(|x| piece.contains(*x) && domain.contains(*x));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimum of `J - f` over S^c from a grid plus golden-section refinement per component.
pub fn min_continuation_gap(e: &ValueEvaluator, settings: &CheckSettings) -> Result<Option<Witness>> {
    let mut worst: Option<Witness> = None;
    let payoff = e.instance().payoff();
    for gap in e.kernel().gaps() {
        let mut xs = component_samples(gap, settings.grid_points);
        xs.extend(payoff.kinks().iter().copied().filter(|k| gap.contains(*k)));
        xs.sort_by(f64::total_cmp);
        if xs.is_empty() {
            continue;
        }
        let vals = xs.iter().map(|&x| e.continuation_gap(x)).collect::<Result<Vec<_>>>()?;
        let (i, _) = vals
            .iter()
            .enumerate()
            .min_by(|p, q| p.1.total_cmp(q.1))
            .expect("non-empty sample");
        let mut best = Witness { x: xs[i], value: vals[i] };
        let lo = if i > 0 { xs[i - 1] } else { 0.5 * (gap.left.position().max(xs[0] - 1.0) + xs[0]) };
        let hi = if i + 1 < xs.len() {
            xs[i + 1]
        } else {
            0.5 * (gap.right.position().min(xs[i] + 1.0) + xs[i])
        };
        if hi > lo && gap.contains(lo) && gap.contains(hi) {
            let (x, v) = golden_min(|x| e.continuation_gap(x).unwrap_or(f64::INFINITY), lo, hi, 60);
            if v < best.value {
                best = Witness { x, value: v };
            }
        }
        if worst.map_or(true, |w| best.value < w.value) {
            worst = Some(best);
        }
    }
    Ok(worst)
}

fn tol_scale(e: &ValueEvaluator, x: f64) -> f64 {
    1.0 + e.instance().payoff().value(x).abs()
}

/// Definition of a mild equilibrium: `J(x,S) ≥ f(x)` off S.
pub fn check_mild(e: &ValueEvaluator, settings: &CheckSettings) -> Result<ConditionCheck> {
    e.region().ensure_admissible()?;
    let worst = min_continuation_gap(e, settings)?;
    let holds = worst.map_or(true, |w| w.value >= -settings.tol_eq * tol_scale(e, w.x));
    let points_checked = e.kernel().gaps().len() * settings.grid_points;
    Ok(ConditionCheck { holds, worst, points_checked })
}

/// Boundary points of S together with payoff kinks lying in S.
fn jump_points(e: &ValueEvaluator) -> Vec<f64> {
    let region = e.region();
    let mut xs: Vec<f64> = region.boundary_points().iter().map(|b| b.x).collect();
    xs.extend(e.instance().payoff().kinks().iter().copied().filter(|&k| region.is_member(k)));
    xs.retain(|x| region.domain().contains(*x));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Points of S used for the generator condition and for `𝔖_S`.
fn region_samples(e: &ValueEvaluator, settings: &CheckSettings) -> Vec<f64> {
    let region = e.region();
    let mut xs = jump_points(e);
    for p in region.pieces() {
        xs.extend(piece_samples(p, region.domain(), settings.interior_points));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

pub fn derivative_jump(e: &ValueEvaluator, x: f64) -> Result<f64> {
    Ok(e.vx_onesided(x, Side::Left)? - e.vx_onesided(x, Side::Right)?)
}

/// `V_x(0,x-,S) - V_x(0,x+,S)` at a boundary point of S.
pub fn smooth_fit_residual(e: &ValueEvaluator, x: f64) -> Result<f64> {
    if !e.region().domain().contains(x) || !e.region().is_boundary(x) {
        return Err(Error::NotBoundaryPoint(x));
    }
    derivative_jump(e, x)
}

pub fn smooth_fit_table(e: &ValueEvaluator) -> Result<Vec<SmoothFit>> {
    let payoff = e.instance().payoff();
    e.region()
        .boundary_points()
        .iter()
        .filter(|b| e.region().domain().contains(b.x))
        .map(|b| {
            Ok(SmoothFit {
                x: b.x,
                residual: derivative_jump(e, b.x)?,
                payoff_differentiable: !payoff.is_kink(b.x),
            })
        })
        .collect()
}

/// Weak-equilibrium characterization: continuation, derivative-jump and generator conditions.
pub fn check_weak(e: &ValueEvaluator, settings: &CheckSettings) -> Result<WeakCheck> {
    let continuation = check_mild(e, settings)?;

    let mut jump_worst: Option<Witness> = None;
    let jp = jump_points(e);
    let mut jump_ok = true;
    for &x in &jp {
        let (l, r) = (e.vx_onesided(x, Side::Left)?, e.vx_onesided(x, Side::Right)?);
        let v = l - r;
        if v < -settings.tol_eq * (1.0 + l.abs() + r.abs()) {
            jump_ok = false;
        }
        if jump_worst.map_or(true, |w| v < w.value) {
            jump_worst = Some(Witness { x, value: v });
        }
    }

    let mut gen_worst: Option<Witness> = None;
    let rs = region_samples(e, settings);
    let mut gen_ok = true;
    for &x in &rs {
        let v = e.generator_lv(x, Side::Left)?.max(e.generator_lv(x, Side::Right)?);
        if v > settings.tol_eq * tol_scale(e, x) {
            gen_ok = false;
        }
        if gen_worst.map_or(true, |w| v > w.value) {
            gen_worst = Some(Witness { x, value: v });
        }
    }

    let derivative_jump = ConditionCheck { holds: jump_ok, worst: jump_worst, points_checked: jp.len() };
    let generator = ConditionCheck { holds: gen_ok, worst: gen_worst, points_checked: rs.len() };
    Ok(WeakCheck {
        holds: continuation.holds && derivative_jump.holds && generator.holds,
        continuation,
        derivative_jump,
        generator,
    })
}

/// Sampled description of `𝔖_S`, the points of S where one of the weak
/// conditions holds strictly.
pub fn compute_fraktur_s(e: &ValueEvaluator, settings: &CheckSettings) -> Result<FrakturSet> {
    e.region().ensure_admissible()?;
    let xs = region_samples(e, settings);
    let mut points = Vec::with_capacity(xs.len());
    let mut indeterminate = Vec::new();
    for &x in &xs {
        let gmin = e.generator_lv(x, Side::Left)?.min(e.generator_lv(x, Side::Right)?);
        let (l, r) = (e.vx_onesided(x, Side::Left)?, e.vx_onesided(x, Side::Right)?);
        let jump = l - r;
        let fscale = tol_scale(e, x);
        let jscale = 1.0 + l.abs() + r.abs();
        let p = FrakturPoint {
            x,
            generator_min: gmin,
            derivative_jump: jump,
            generator_clause: gmin < -settings.tol_strict * fscale,
            derivative_clause: jump > settings.tol_strict * jscale,
        };
        if !p.qualifies() && (-gmin > settings.tol_eq * fscale || jump > settings.tol_eq * jscale) {
            indeterminate.push(x);
        }
        points.push(p);
    }
    let mut intervals: Vec<[f64; 2]> = Vec::new();
    let mut run: Option<[f64; 2]> = None;
    let region = e.region();
    for (i, p) in points.iter().enumerate() {
        let same_piece = i > 0 && {
            let prev = points[i - 1].x;
            region.pieces().iter().any(|pc| pc.closure_contains(prev) && pc.closure_contains(p.x))
        };
        if p.qualifies() {
            run = match run {
                Some([lo, _]) if same_piece && points[i - 1].qualifies() => Some([lo, p.x]),
                Some(r) => {
                    intervals.push(r);
                    Some([p.x, p.x])
                }
                None => Some([p.x, p.x]),
            };
        } else if let Some(r) = run.take() {
            intervals.push(r);
        }
    }
    if let Some(r) = run {
        intervals.push(r);
    }
    let excluded: Vec<f64> = points.iter().filter(|p| !p.qualifies()).map(|p| p.x).collect();
    Ok(FrakturSet { intervals, equals_region: excluded.is_empty() && !points.is_empty(), excluded, indeterminate, points })
}

/// Sufficient strong-equilibrium certificate: weak and `S = 𝔖_S`.
pub fn check_strong_sufficient(e: &ValueEvaluator, settings: &CheckSettings) -> Result<StrongCheck> {
    let weak = check_weak(e, settings)?.holds;
    let fraktur = compute_fraktur_s(e, settings)?;
    let verdict = if weak && fraktur.equals_region {
        StrongVerdict::CertifiedStrong
    } else {
        StrongVerdict::NotCertified
    };
    Ok(StrongCheck { verdict, weak, fraktur })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdicts {
    pub mild: bool,
    pub weak: bool,
    pub strong: StrongVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witnesses {
    pub continuation: Option<Witness>,
    pub derivative_jump: Option<Witness>,
    pub generator: Option<Witness>,
    pub outside_fraktur: Vec<f64>,
    pub deviation: Option<DeviationWitness>,
}

/// Simulated profitable deviation that upgrades "not certified" to "not strong, witnessed".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationWitness {
    pub x: f64,
    pub epsilon: f64,
    pub mean: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrakturSummary {
    pub intervals: Vec<[f64; 2]>,
    pub equals_region: bool,
    pub closure_equals_region: bool,
    pub excluded: Vec<f64>,
    pub indeterminate: Vec<f64>,
    pub generator_clause_points: usize,
    pub derivative_clause_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub tol_eq: f64,
    pub tol_strict: f64,
    pub grid_points: usize,
    pub interior_points: usize,
    pub resolvent_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub region: Vec<String>,
    pub instance: InstanceSummary,
    pub verdicts: Verdicts,
    pub witnesses: Witnesses,
    pub smooth_fit: Vec<SmoothFit>,
    #[serde(rename = "fraktur_S")]
    pub fraktur_s: FrakturSummary,
    pub tolerances: Tolerances,
    pub assumption_notes: Vec<String>,
}

impl EquilibriumReport {
    /// Records a significant simulated deviation; only affects regions not certified strong.
    pub fn add_deviation_witness(&mut self, w: DeviationWitness) {
        if self.verdicts.strong == StrongVerdict::NotCertified && w.z >= 3.0 {
            self.verdicts.strong = StrongVerdict::NotStrongWitnessed;
            self.witnesses.deviation = Some(w);
        }
    }
}

pub fn classify(e: &ValueEvaluator, settings: &CheckSettings) -> Result<EquilibriumReport> {
    let weak = check_weak(e, settings)?;
    let fraktur = compute_fraktur_s(e, settings)?;
    let strong = if weak.holds && fraktur.equals_region {
        StrongVerdict::CertifiedStrong
    } else {
        StrongVerdict::NotCertified
    };
    // The closure of 𝔖_S equals S when excluded points are only isolated
    // sample points surrounded by qualifying ones.
    let closure_equals_region = fraktur.equals_region
        || fraktur.points.windows(3).all(|w| w[1].qualifies() || (w[0].qualifies() && w[2].qualifies()))
            && fraktur.points.first().map_or(false, |p| p.qualifies())
            && fraktur.points.last().map_or(false, |p| p.qualifies());
    let mut notes = vec![
        "mild condition checked on a per-component grid with golden-section refinement".to_string(),
        "strong verdict is a sufficient certificate (S = 𝔖_S), not a decision procedure".to_string(),
    ];
    for sf in smooth_fit_table(e)? {
        if !sf.payoff_differentiable {
            notes.push(format!("payoff has a kink at boundary point {}; smooth fit not required there", sf.x));
        }
    }
    let wr = e.instance().discount().weight_regularity_profile(&[1e-2, 1e-4, 1e-6, 1e-8]);
    let decays = wr.windows(2).all(|p| p[1].1 <= p[0].1) && wr.last().map_or(false, |p| p.1 < 1e-2);
    notes.push(format!(
        "finite-node weight regularity t^(-1/2) Σ w r (1 - e^(-rt)) at t = 1e-8: {:.3e} ({})",
        wr.last().map_or(f64::NAN, |p| p.1),
        if decays { "decaying" } else { "not decaying" }
    ));
    let summary = FrakturSummary {
        intervals: fraktur.intervals.clone(),
        equals_region: fraktur.equals_region,
        closure_equals_region,
        excluded: fraktur.excluded.clone(),
        indeterminate: fraktur.indeterminate.clone(),
        generator_clause_points: fraktur.points.iter().filter(|p| p.generator_clause).count(),
        derivative_clause_points: fraktur.points.iter().filter(|p| p.derivative_clause).count(),
    };
    Ok(EquilibriumReport {
        region: e.region().describe(),
        instance: e.instance().summary(),
        verdicts: Verdicts { mild: weak.continuation.holds, weak: weak.holds, strong },
        witnesses: Witnesses {
            continuation: weak.continuation.worst,
            derivative_jump: weak.derivative_jump.worst,
            generator: weak.generator.worst,
            outside_fraktur: fraktur.excluded.iter().copied().take(32).collect(),
            deviation: None,
        },
        smooth_fit: smooth_fit_table(e)?,
        fraktur_s: summary,
        tolerances: Tolerances {
            tol_eq: settings.tol_eq,
            tol_strict: settings.tol_strict,
            grid_points: settings.grid_points,
            interior_points: settings.interior_points,
            resolvent_tol: e.kernel().settings().tol,
        },
        assumption_notes: notes,
    })
}

/// One row of the per-point condition table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileRow {
    pub x: f64,
    pub f: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub gap: f64,
    pub vx_left: f64,
    pub vx_right: f64,
    pub lv_left: f64,
    pub lv_right: f64,
}

pub fn profile(e: &ValueEvaluator, xs: &[f64]) -> Result<Vec<ProfileRow>> {
    xs.iter()
        .map(|&x| {
            let j = e.value_j(x)?;
            let f = e.instance().payoff().value(x);
            Ok(ProfileRow {
                x,
                f,
                j,
                gap: j - f,
                vx_left: e.vx_onesided(x, Side::Left)?,
                vx_right: e.vx_onesided(x, Side::Right)?,
                lv_left: e.generator_lv(x, Side::Left)?,
                lv_right: e.generator_lv(x, Side::Right)?,
            })
        })
        .collect()
}

/// Default plotting grid: samples of S^c and S plus boundary points and kinks.
pub fn profile_grid(e: &ValueEvaluator, per_component: usize) -> Vec<f64> {
    let mut xs = Vec::new();
    for g in e.kernel().gaps() {
        xs.extend(component_samples(g, per_component));
    }
    let region = e.region();
    for p in region.pieces() {
        xs.extend(piece_samples(p, region.domain(), per_component));
    }
    xs.extend(jump_points(e));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

pub fn profile_csv(rows: &[ProfileRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

/// Families of regions parameterized by one or two thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdFamily {
    /// `(inf 𝕏, a]`
    LeftRay,
    /// `[b, sup 𝕏)`
    RightRay,
    /// `{c}` with `c` a payoff kink
    Point,
    /// `{c1, c2}` with `c1 < c2` payoff kinks
    TwoPoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdResult {
    pub family: ThresholdFamily,
    pub parameters: Vec<f64>,
    pub region: Vec<String>,
    #[serde(skip)]
    pub stopping_region: StoppingRegion,
    /// Smooth-fit residual at the solved threshold(s).
    pub smooth_fit_residual: f64,
    pub bracket: Option<(f64, f64)>,
    pub evaluations: usize,
    pub weak: bool,
    pub mild: bool,
    pub note: String,
}

const ROOT_TOL: f64 = 1e-12;

fn ray(domain: Interval, family: ThresholdFamily, p: f64) -> Result<StoppingRegion> {
    match family {
        ThresholdFamily::LeftRay => StoppingRegion::left_ray(domain, p),
        ThresholdFamily::RightRay => StoppingRegion::right_ray(domain, p),
        _ => unreachable!("ray families only"),
    }
}

/// Smooth-fit residual `V_x(0,p-) - V_x(0,p+)` of the ray with threshold `p`.
pub fn ray_residual(
    instance: &ProblemInstance,
    family: ThresholdFamily,
    p: f64,
    solver: &SolverSettings,
) -> Result<f64> {
    let region = ray(*instance.diffusion().domain(), family, p)?;
    let e = ValueEvaluator::new(instance, &region, *solver)?;
    derivative_jump(&e, p)
}

fn scan_grid(instance: &ProblemInstance) -> Vec<f64> {
    let domain = instance.diffusion().domain();
    let mut xs = sample_grid(domain, 400);
    xs.extend(instance.payoff().kinks().iter().copied().filter(|k| domain.contains(*k)));
    for &k in instance.payoff().kinks() {
        for f in [0.5, 0.9, 0.99, 1.01, 1.1, 2.0] {
            if domain.contains(k * f) {
                xs.push(k * f);
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Smallest mild equilibrium within a threshold family, located by the smooth-fit
/// residual (ray families) or by scanning payoff kinks (point families).
pub fn find_threshold_equilibrium(
    instance: &ProblemInstance,
    family: ThresholdFamily,
    bracket: Option<(f64, f64)>,
    solver: SolverSettings,
    settings: CheckSettings,
) -> Result<ThresholdResult> {
    match family {
        ThresholdFamily::LeftRay | ThresholdFamily::RightRay => {
            solve_ray(instance, family, bracket, solver, settings)
        }
        ThresholdFamily::Point | ThresholdFamily::TwoPoint => scan_points(instance, family, solver, settings),
    }
}

fn strict_sign(v: f64) -> i32 {
    if v > 1e-13 {
        1
    } else if v < -1e-13 {
        -1
    } else {
        0
    }
}

fn solve_ray(
    instance: &ProblemInstance,
    family: ThresholdFamily,
    bracket: Option<(f64, f64)>,
    solver: SolverSettings,
    settings: CheckSettings,
) -> Result<ThresholdResult> {
    let mut evals = 0usize;
    let mut phi = |p: f64| -> Result<f64> {
        evals += 1;
        ray_residual(instance, family, p, &solver)
    };
    let (lo, hi) = match bracket {
        Some((lo, hi)) => {
            let (fl, fh) = (phi(lo)?, phi(hi)?);
            if strict_sign(fl) * strict_sign(fh) >= 0 {
                return Err(Error::NoBracket { lo, hi });
            }
            (lo, hi)
        }
        None => {
            let mut grid = scan_grid(instance);
            // Scan from the end of the state space that the ray grows away from.
            if family == ThresholdFamily::RightRay {
                grid.reverse();
            }
            let mut found = None;
            let mut prev: Option<(f64, i32)> = None;
            for &p in &grid {
                let s = strict_sign(phi(p)?);
                if s == 0 {
                    continue;
                }
                if let Some((q, sq)) = prev {
                    if sq != s {
                        found = Some(if q < p { (q, p) } else { (p, q) });
                        break;
                    }
                }
                prev = Some((p, s));
            }
            let first = grid.first().copied().unwrap_or(f64::NAN);
            let last = grid.last().copied().unwrap_or(f64::NAN);
            found.ok_or(Error::NoBracket { lo: first.min(last), hi: first.max(last) })?
        }
    };
    let failure = std::cell::RefCell::new(None);
    let f = |p: f64| match ray_residual(instance, family, p, &solver) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let mut conv = roots::SimpleConvergency { eps: ROOT_TOL * length_scale(hi), max_iter: 200 };
    let root = roots::find_root_brent(lo, hi, &f, &mut conv);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let mut p = root.map_err(|_| Error::NoBracket { lo, hi })?;
    // Brent may stop at either side of a jump; bisect to the tolerance directly if so.
    let (mut a, mut b) = (lo, hi);
    let sa = strict_sign(ray_residual(instance, family, a, &solver)?);
    if strict_sign(ray_residual(instance, family, p, &solver)?) != 0 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if b - a <= ROOT_TOL * length_scale(b) {
                break;
            }
            let sm = strict_sign(ray_residual(instance, family, m, &solver)?);
            if sm == 0 {
                a = m;
                b = m;
                break;
            }
            if sm == sa {
                a = m;
            } else {
                b = m;
            }
        }
        p = 0.5 * (a + b);
    }
    let region = ray(*instance.diffusion().domain(), family, p)?;
    let e = ValueEvaluator::new(instance, &region, solver)?;
    let residual = derivative_jump(&e, p)?;
    let weak = check_weak(&e, &settings)?;
    let note = if instance.payoff().kinks().iter().any(|k| (k - p).abs() <= 1e-9 * length_scale(p)) {
        "threshold sits at a payoff kink: residual jumps sign there rather than vanishing".to_string()
    } else {
        "smooth-fit root".to_string()
    };
    Ok(ThresholdResult {
        family,
        parameters: vec![p],
        region: region.describe(),
        stopping_region: region,
        smooth_fit_residual: residual,
        bracket: Some((lo, hi)),
        evaluations: evals,
        weak: weak.holds,
        mild: weak.continuation.holds,
        note,
    })
}

fn scan_points(
    instance: &ProblemInstance,
    family: ThresholdFamily,
    solver: SolverSettings,
    settings: CheckSettings,
) -> Result<ThresholdResult> {
    let domain = *instance.diffusion().domain();
    let kinks: Vec<f64> = instance.payoff().kinks().iter().copied().filter(|k| domain.contains(*k)).collect();
    let candidates: Vec<Vec<f64>> = match family {
        ThresholdFamily::Point => kinks.iter().map(|&k| vec![k]).collect(),
        _ => {
            let mut v = Vec::new();
            for i in 0..kinks.len() {
                for j in i + 1..kinks.len() {
                    v.push(vec![kinks[i], kinks[j]]);
                }
            }
            v
        }
    };
    let mut best: Option<(Vec<f64>, StoppingRegion, f64)> = None;
    for c in &candidates {
        let region = StoppingRegion::points(domain, c)?;
        let e = ValueEvaluator::new(instance, &region, solver)?;
        let mild = check_mild(&e, &settings)?;
        if !mild.holds {
            continue;
        }
        let margin = mild.worst.map_or(f64::INFINITY, |w| w.value);
        if best.as_ref().map_or(true, |b| margin > b.2) {
            best = Some((c.clone(), region, margin));
        }
    }
    let (params, region, _) = best.ok_or(Error::NoBracket {
        lo: kinks.first().copied().unwrap_or(f64::NAN),
        hi: kinks.last().copied().unwrap_or(f64::NAN),
    })?;
    let e = ValueEvaluator::new(instance, &region, solver)?;
    let weak = check_weak(&e, &settings)?;
    let residual = params.iter().map(|&p| derivative_jump(&e, p)).collect::<Result<Vec<_>>>()?;
    Ok(ThresholdResult {
        family,
        parameters: params,
        region: region.describe(),
        stopping_region: region,
        smooth_fit_residual: residual.into_iter().fold(f64::INFINITY, f64::min),
        bracket: None,
        evaluations: candidates.len(),
        weak: weak.holds,
        mild: weak.continuation.holds,
        note: "mild candidate with the largest continuation margin among payoff-kink point sets".into(),
    })
}

/// `(λ, ν)` for the put on geometric Brownian motion under hyperbolic discounting:
/// `ν = μ/σ² - ½`, `λ = ∫₀^∞ e^{-s} (√(ν² + 2βs/σ²) + ν) ds`.
pub fn lambda_nu(mu: f64, sigma: f64, beta: f64) -> (f64, f64) {
    let nu = mu / (sigma * sigma) - 0.5;
    let s2 = sigma * sigma;
    let lam = quad::integrate_to_infinity(
        |s| (-s).exp() * ((nu * nu + 2.0 * beta * s / s2).sqrt() + nu),
        0.0,
        1e-14,
        1e-12,
    )
    .value;
    (lam, nu)
}

/// `J'(a+, (0,a] ∪ [b,∞)) + 1` for the put on geometric Brownian motion under
/// hyperbolic discounting; the region is mild iff the value is ≥ 0.
pub fn type2_mild_condition(mu: f64, sigma: f64, beta: f64, strike: f64, a: f64, b: f64) -> f64 {
    let nu = mu / (sigma * sigma) - 0.5;
    let s2 = sigma * sigma;
    let l = (b / a).ln();
    let integrand = |s: f64| {
        let k = (nu * nu + 2.0 * beta * s / s2).sqrt();
        // ((b/a)^k + (a/b)^k) / ((b/a)^k - (a/b)^k) = coth(k ln(b/a))
        let coth = if k * l > 20.0 { 1.0 } else { 1.0 / (k * l).tanh() };
        (-s).exp() * (nu / a + k / a * coth)
    };
    let int = quad::integrate_to_infinity(integrand, 0.0, 1e-14, 1e-12).value;
    -(strike - a) * int + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbcdCondition {
    pub lhs: f64,
    pub ratio: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Sandwich condition on `c/d` for the two-point Brownian example under
/// hyperbolic discounting.
pub fn check_condition_abcd(beta: f64, a: f64, b: f64, c: f64, d: f64) -> Result<AbcdCondition> {
    if !(a < b) || !(0.0 < c && c < d) || !(beta > 0.0) {
        return Err(Error::Parameter(format!("need a < b, 0 < c < d, β > 0; got a={a}, b={b}, c={c}, d={d}, β={beta}")));
    }
    let l = b - a;
    // s = u² smooths the √s behaviour at the origin
    let w = |u: f64| (2.0 * beta).sqrt() * u;
    let num = quad::integrate_to_infinity(
        |u| {
            let z = w(u) * l;
            let ratio = if z < 1e-8 { 1.0 / l } else { w(u) / z.sinh() };
            2.0 * u * (-u * u).exp() * ratio
        },
        0.0,
        1e-15,
        1e-12,
    )
    .value;
    let coth_int = quad::integrate_to_infinity(
        |u| {
            let z = w(u) * l;
            let v = if z < 1e-8 { 1.0 / l } else { w(u) / z.tanh() };
            2.0 * u * (-u * u).exp() * v
        },
        0.0,
        1e-15,
        1e-12,
    )
    .value;
    let lhs = num / ((std::f64::consts::PI * beta / 2.0).sqrt() + coth_int);
    let rhs = quad::integrate_to_infinity(|u| 2.0 * u * (-(u * u) - l * w(u)).exp(), 0.0, 1e-15, 1e-12).value;
    let ratio = c / d;
    Ok(AbcdCondition { lhs, ratio, rhs, satisfied: lhs < ratio && ratio < rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionSpec, DiscountSpec, PayoffSpec};

    fn put_instance() -> ProblemInstance {
        ProblemInstance::new(
            DiffusionSpec::geometric(0.05, 0.3).unwrap(),
            DiscountSpec::hyperbolic(0.1).unwrap(),
            PayoffSpec::put(1.0).unwrap(),
            "put",
        )
        .unwrap()
    }

    #[test]
    fn lambda_closed_form_when_nu_vanishes() {
        let sigma: f64 = 0.4;
        let beta: f64 = 0.3;
        let (lam, nu) = lambda_nu(0.5 * sigma * sigma, sigma, beta);
        assert!(nu.abs() < 1e-15);
        let exact = (2.0 * beta).sqrt() / sigma * std::f64::consts::PI.sqrt() / 2.0;
        assert!((lam - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn left_ray_threshold_matches_lambda() {
        let inst = put_instance();
        let res = find_threshold_equilibrium(
            &inst,
            ThresholdFamily::LeftRay,
            None,
            SolverSettings::default(),
            CheckSettings::default(),
        )
        .unwrap();
        let (lam, _) = lambda_nu(0.05, 0.3, 0.1);
        let a_star = lam / (1.0 + lam);
        assert!((res.parameters[0] - a_star).abs() < 1e-8, "{} vs {}", res.parameters[0], a_star);
        assert!(res.smooth_fit_residual.abs() < 1e-7);
        assert!(res.weak);
    }

    #[test]
    fn type2_condition_positive_for_a_above_strike() {
        assert!(type2_mild_condition(0.05, 0.3, 0.1, 1.0, 1.2, 2.0) >= 1.0);
        assert!(type2_mild_condition(0.05, 0.3, 0.1, 1.0, 0.999, 1.1) > 0.0);
    }

    #[test]
    fn mild_and_weak_checks_on_put_rays() {
        let inst = put_instance();
        let (lam, _) = lambda_nu(0.05, 0.3, 0.1);
        let a_star = lam / (1.0 + lam);
        let domain = *inst.diffusion().domain();
        let st = CheckSettings::default();
        let e = ValueEvaluator::new(&inst, &StoppingRegion::left_ray(domain, 0.9 * a_star).unwrap(), SolverSettings::default()).unwrap();
        assert!(!check_mild(&e, &st).unwrap().holds);
        let e = ValueEvaluator::new(&inst, &StoppingRegion::left_ray(domain, a_star).unwrap(), SolverSettings::default()).unwrap();
        let strong = check_strong_sufficient(&e, &st).unwrap();
        assert_eq!(strong.verdict, StrongVerdict::CertifiedStrong);
        let e = ValueEvaluator::new(&inst, &StoppingRegion::left_ray(domain, 0.5 * (a_star + 1.0)).unwrap(), SolverSettings::default()).unwrap();
        let w = check_weak(&e, &st).unwrap();
        assert!(w.continuation.holds && !w.holds);
        assert!(smooth_fit_residual(&e, 0.3).is_err());
    }

    #[test]
    fn abcd_sandwich_values() {
        let c = check_condition_abcd(0.5, 0.0, 1.0, 0.42, 1.0).unwrap();
        assert!((c.lhs - 0.3952).abs() < 5e-4, "{}", c.lhs);
        assert!((c.rhs - 0.4544).abs() < 5e-4, "{}", c.rhs);
        assert!(c.satisfied);
        assert!(!check_condition_abcd(0.5, 0.0, 1.0, 0.3, 1.0).unwrap().satisfied);
    }
}
