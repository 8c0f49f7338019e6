//! Exponentially discounted first-entry values `v(x, r, S) = E^x[e^{-r ρ_S} f(X_{ρ_S})]`.
//!
//! On each component of the continuation set, `v` solves `-r v + μ v' + ½σ² v'' = 0`
//! with `v = f` at stopping ends. At an unbounded end the decaying solution is used;
//! a finite open end of the state space is treated as killing (value 0).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiffusionKind, DiffusionSpec, Gap, GapEnd, Interval, PayoffSpec, ProblemInstance, Side, StoppingRegion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Relative tolerance on the off-grid equation residual.
    pub tol: f64,
    /// Initial number of collocation intervals.
    pub nodes: usize,
    pub max_nodes: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-8, nodes: 128, max_nodes: 1024 }
    }
}

/// Closed form for constant coefficients in a coordinate `y` with drift `m` and volatility `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpKernel {
    m: f64,
    s2: f64,
    r: f64,
    c: f64,
    theta: f64,
    /// `(y_a, v(y_a))` for a finite left end, `None` for an unbounded one.
    left: Option<(f64, f64)>,
    right: Option<(f64, f64)>,
}

impl ExpKernel {
    pub fn new(m: f64, s: f64, r: f64, left: Option<(f64, f64)>, right: Option<(f64, f64)>) -> Self {
        let s2 = s * s;
        let c = m / s2;
        let theta = (m * m + 2.0 * r * s2).sqrt() / s2;
        Self { m, s2, r, c, theta, left, right }
    }

    /// Value and the first two derivatives in `y`.
    pub fn eval(&self, y: f64) -> (f64, f64, f64) {
        let (c, th) = (self.c, self.theta);
        let (v, vy) = match (self.left, self.right) {
            (Some((ya, fa)), Some((yb, fb))) => {
                let l = yb - ya;
                let u = (y - ya).clamp(0.0, l);
                if th == 0.0 {
                    (fa + (fb - fa) * u / l, (fb - fa) / l)
                } else {
                    let d = -(-2.0 * th * l).exp_m1();
                    let ea = (-2.0 * th * (l - u)).exp();
                    let eb = (-2.0 * th * u).exp();
                    let ga = (-(c + th) * u).exp() / d;
                    let gb = ((c - th) * (l - u)).exp() / d;
                    let pa = ga * -(-2.0 * th * (l - u)).exp_m1();
                    let pb = gb * -(-2.0 * th * u).exp_m1();
                    let da = ga * (-c * (1.0 - ea) - th * (1.0 + ea));
                    let db = gb * (-c * (1.0 - eb) + th * (1.0 + eb));
                    (fa * pa + fb * pb, fa * da + fb * db)
                }
            }
            (Some((ya, fa)), None) => {
                let k = -c - th;
                let v = if fa == 0.0 { 0.0 } else { fa * (k * (y - ya).max(0.0)).exp() };
                (v, k * v)
            }
            (None, Some((yb, fb))) => {
                let k = th - c;
                let v = if fb == 0.0 { 0.0 } else { fb * (k * (y - yb).min(0.0)).exp() };
                (v, k * v)
            }
            (None, None) => (0.0, 0.0),
        };
        let vyy = 2.0 * (self.r * v - self.m * vy) / self.s2;
        (v, vy, vyy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bc {
    Dirichlet(f64),
    /// `u_x = w u`
    Robin(f64),
}

/// Coordinate map `x(q)` used by the collocation solver.
#[derive(Debug, Clone, Copy, PartialEq)]
enum QMap {
    Linear,
    /// `x = x0 + dir · ell · (e^q - 1)`
    Exp { x0: f64, dir: f64, ell: f64 },
}

impl QMap {
    fn x(&self, q: f64) -> f64 {
        match *self {
            QMap::Linear => q,
            QMap::Exp { x0, dir, ell } => x0 + dir * ell * q.exp_m1(),
        }
    }
    fn q(&self, x: f64) -> f64 {
        match *self {
            QMap::Linear => x,
            QMap::Exp { x0, dir, ell } => (dir * (x - x0) / ell).ln_1p(),
        }
    }
    /// `(x'(q), x''(q)/x'(q))`
    fn jac(&self, q: f64) -> (f64, f64) {
        match *self {
            QMap::Linear => (1.0, 0.0),
            QMap::Exp { dir, ell, .. } => (dir * ell * q.exp(), 1.0),
        }
    }
}

/// Chebyshev representation of a component solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebSolution {
    map: QMap,
    q0: f64,
    q1: f64,
    coeffs: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    /// Exponential continuation `u(x_T) e^{w (x - x_T)}` beyond a truncation point.
    tail: Option<(f64, f64)>,
    nodes: usize,
    residual: f64,
    truncation_change: f64,
    resolved: bool,
}

impl ChebSolution {
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Off-grid relative equation residual.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Change observed when the truncation of an unbounded end was doubled (0 for bounded components).
    pub fn truncation_change(&self) -> f64 {
        self.truncation_change
    }

    fn in_q(&self, q: f64) -> (f64, f64, f64) {
        let h = 0.5 * (self.q1 - self.q0);
        let t = ((q - self.q0) / h - 1.0).clamp(-1.0, 1.0);
        let u = clenshaw(&self.coeffs, t);
        let ut = clenshaw(&self.d1, t);
        let utt = clenshaw(&self.d2, t);
        (u, ut / h, utt / (h * h))
    }

    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        if let Some((xt, w)) = self.tail {
            let beyond = match self.map {
                QMap::Exp { dir, .. } => dir * (x - xt) > 0.0,
                QMap::Linear => false,
            };
            if beyond {
                let (ut, _, _) = self.in_q(self.q1);
                let v = ut * (w * (x - xt)).exp();
                return (v, w * v, w * w * v);
            }
        }
        let q = self.map.q(x);
        let (u, uq, uqq) = self.in_q(q);
        let (xp, ratio) = self.map.jac(q);
        let ux = uq / xp;
        let uxx = (uqq - ratio * uq) / (xp * xp);
        (u, ux, uxx)
    }
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c.first().copied().unwrap_or(0.0)
}

fn cheb_derivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n];
    for k in (1..n).rev() {
        let next = if k + 1 < n { d[k + 1] } else { 0.0 };
        d[k - 1] = next + 2.0 * k as f64 * c[k];
    }
    d[0] *= 0.5;
    d.truncate(n - 1);
    d
}

/// Chebyshev coefficients from values at `cos(πj/N)`, `j = 0..=N`.
fn cheb_coeffs(vals: &[f64]) -> Vec<f64> {
    let n = vals.len() - 1;
    let nf = n as f64;
    (0..=n)
        .map(|k| {
            let mut s = 0.0;
            for (j, v) in vals.iter().enumerate() {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                s += w * v * (std::f64::consts::PI * (j * k % (2 * n)) as f64 / nf).cos();
            }
            let scale = if k == 0 || k == n { 1.0 / nf } else { 2.0 / nf };
            s * scale
        })
        .collect()
}

/// Drops trailing coefficients at rounding level. Returns the kept series and
/// whether the series had visibly converged before truncation.
fn chop(mut c: Vec<f64>) -> (Vec<f64>, bool) {
    let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if cmax == 0.0 {
        return (vec![0.0], true);
    }
    let floor = 64.0 * f64::EPSILON * cmax;
    let n = c.len();
    let tail_len = (n / 16).max(4).min(n);
    let resolved = c[n - tail_len..].iter().all(|v| v.abs() <= 1e3 * floor);
    while c.len() > 1 && c.last().map_or(false, |v| v.abs() <= floor) {
        c.pop();
    }
    (c, resolved)
}

fn cheb_matrix(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let nf = n as f64;
    let t: Vec<f64> = (0..=n).map(|j| (std::f64::consts::PI * j as f64 / nf).cos()).collect();
    let cw = |j: usize| if j == 0 || j == n { 2.0 } else { 1.0 };
    let mut d = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..=n {
        let mut row = 0.0;
        for j in 0..=n {
            if i != j {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let v = cw(i) / cw(j) * sign / (t[i] - t[j]);
                d[(i, j)] = v;
                row += v;
            }
        }
        d[(i, i)] = -row;
    }
    (t, d)
}

fn collocate(
    diff: &DiffusionSpec,
    map: QMap,
    q0: f64,
    q1: f64,
    r: f64,
    lo: Bc,
    hi: Bc,
    n: usize,
) -> Result<ChebSolution> {
    let (t, dt) = cheb_matrix(n);
    let h = 0.5 * (q1 - q0);
    let dq = &dt / h;
    let dq2 = &dq * &dq;
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for i in 1..n {
        let q = q0 + h * (t[i] + 1.0);
        let x = map.x(q);
        let (xp, ratio) = map.jac(q);
        let a2 = 0.5 * diff.sigma2(x);
        let a1 = diff.mu(x) * xp - a2 * ratio;
        let a0 = -r * xp * xp;
        let scale = 1.0 / (a2.abs() / (h * h) + a1.abs() / h + a0.abs());
        for j in 0..=n {
            a[(i, j)] = scale * (a2 * dq2[(i, j)] + a1 * dq[(i, j)]);
        }
        a[(i, i)] += scale * a0;
    }
    for (row, bc, q) in [(0usize, hi, q1), (n, lo, q0)] {
        match bc {
            Bc::Dirichlet(v) => {
                a[(row, row)] = 1.0;
                b[row] = v;
            }
            Bc::Robin(w) => {
                let (xp, _) = map.jac(q);
                let scale = 1.0 / (1.0 / h + (w * xp).abs());
                for j in 0..=n {
                    a[(row, j)] = scale * dq[(row, j)];
                }
                a[(row, row)] -= scale * w * xp;
            }
        }
    }
    let u = a
        .lu()
        .solve(&b)
        .ok_or(Error::Solver { residual: f64::INFINITY, nodes: n })?;
    let (coeffs, resolved) = chop(cheb_coeffs(u.as_slice()));
    let d1 = cheb_derivative(&coeffs);
    let d2 = cheb_derivative(&d1);
    let mut sol = ChebSolution {
        map,
        q0,
        q1,
        coeffs,
        d1,
        d2,
        tail: None,
        nodes: n,
        residual: 0.0,
        truncation_change: 0.0,
        resolved: false,
    };
    // Off-grid residual at the Chebyshev midpoints.
    let mut worst = 0.0f64;
    let mut size = 0.0f64;
    for j in 0..n {
        let tj = (std::f64::consts::PI * (j as f64 + 0.5) / n as f64).cos();
        let q = q0 + h * (tj + 1.0);
        let x = map.x(q);
        let (u, ux, uxx) = sol.eval_interior(q);
        let t2 = 0.5 * diff.sigma2(x) * uxx;
        let t1 = diff.mu(x) * ux;
        let t0 = r * u;
        // operator magnitude on the local length scale guards against u'' ≈ 0
        let len = match map {
            QMap::Linear => h,
            QMap::Exp { ell, .. } => ell * q.exp(),
        };
        let op = 0.5 * diff.sigma2(x) / (len * len) + diff.mu(x).abs() / len + r;
        worst = worst.max((t2 + t1 - t0).abs());
        size = size.max(t2.abs() + t1.abs() + t0.abs()).max(op * u.abs());
    }
    sol.residual = if size > 0.0 { worst / size } else { 0.0 };
    sol.resolved = resolved;
    Ok(sol)
}

impl ChebSolution {
    fn eval_interior(&self, q: f64) -> (f64, f64, f64) {
        let (u, uq, uqq) = self.in_q(q);
        let (xp, ratio) = self.map.jac(q);
        (u, uq / xp, (uqq - ratio * uq) / (xp * xp))
    }
}

fn refine(
    diff: &DiffusionSpec,
    map: QMap,
    q0: f64,
    q1: f64,
    r: f64,
    lo: Bc,
    hi: Bc,
    settings: &SolverSettings,
) -> Result<ChebSolution> {
    let solve = |n: usize| collocate(diff, map, q0, q1, r, lo, hi, n);
    let mut n = settings.nodes.max(8);
    let mut sol = solve(n)?;
    while !sol.resolved {
        if n * 2 > settings.max_nodes {
            return Err(Error::Solver { residual: sol.residual, nodes: n });
        }
        n *= 2;
        sol = solve(n)?;
    }
    if sol.residual <= settings.tol {
        return Ok(sol);
    }
    // Resolved but above tolerance: differentiation round-off grows like n⁴, so
    // coarser grids that still resolve the series can do better than finer ones.
    let mut best = sol;
    for grow in [false, true] {
        let mut m = if grow { n * 2 } else { n / 2 };
        while (8..=settings.max_nodes).contains(&m) {
            let s = solve(m)?;
            if !s.resolved || s.residual >= best.residual {
                break;
            }
            best = s;
            if best.residual <= settings.tol {
                return Ok(best);
            }
            m = if grow { m * 2 } else { m / 2 };
        }
    }
    Err(Error::Solver { residual: best.residual, nodes: best.nodes })
}

/// Decaying root of the frozen-coefficient characteristic equation at `x`,
/// towards `+∞` (`dir = 1`) or `-∞` (`dir = -1`).
fn decay_root(diff: &DiffusionSpec, x: f64, r: f64, dir: f64) -> f64 {
    let (m, s2) = (diff.mu(x), diff.sigma2(x));
    let disc = (m * m + 2.0 * r * s2).sqrt();
    if dir > 0.0 {
        (-m - disc) / s2
    } else {
        (-m + disc) / s2
    }
}

/// Solves `-r u + μ u' + ½σ² u'' = 0` on an open component with the given end values.
/// Values attached to infinite ends are ignored; the decaying solution is selected there.
pub fn solve_component_bvp(
    diff: &DiffusionSpec,
    component: &Interval,
    boundary_values: (f64, f64),
    r: f64,
    settings: &SolverSettings,
) -> Result<ChebSolution> {
    if !(r >= 0.0) {
        return Err(Error::Parameter(format!("rate must be non-negative, got {r}")));
    }
    let (l, h) = (component.lower, component.upper);
    match (l.is_finite(), h.is_finite()) {
        (true, true) => refine(
            diff,
            QMap::Linear,
            l,
            h,
            r,
            Bc::Dirichlet(boundary_values.0),
            Bc::Dirichlet(boundary_values.1),
            settings,
        ),
        (true, false) => solve_half_line(diff, l, boundary_values.0, 1.0, r, settings),
        (false, true) => solve_half_line(diff, h, boundary_values.1, -1.0, r, settings),
        (false, false) => Err(Error::Parameter("component without a finite end has value 0".into())),
    }
}

fn solve_half_line(
    diff: &DiffusionSpec,
    x0: f64,
    v0: f64,
    dir: f64,
    r: f64,
    settings: &SolverSettings,
) -> Result<ChebSolution> {
    let w0 = decay_root(diff, x0, r, dir).abs();
    let scale = 1.0 + x0.abs();
    let ell = if w0 > 0.0 { 1.0 / w0 } else { scale };
    let map = QMap::Exp { x0, dir, ell };
    let mut s_max = 41f64.ln();
    let solve = |s_max: f64| -> Result<ChebSolution> {
        let xt = map.x(s_max);
        let w = decay_root(diff, xt, r, dir);
        let mut sol = refine(diff, map, 0.0, s_max, r, Bc::Dirichlet(v0), Bc::Robin(w), settings)?;
        sol.tail = Some((xt, w));
        Ok(sol)
    };
    let mut prev = solve(s_max)?;
    let probes: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0].iter().map(|k| x0 + dir * ell * k).collect();
    for _ in 0..5 {
        // a tail already below tolerance at the truncation point cannot move the solution
        let vmax = probes.iter().map(|&x| prev.eval(x).0.abs()).fold(v0.abs(), f64::max);
        let tail = prev.eval(map.x(s_max)).0.abs();
        if vmax > 0.0 && tail <= 1e-3 * settings.tol * vmax {
            prev.truncation_change = tail / vmax;
            return Ok(prev);
        }
        s_max *= 2.0;
        let next = solve(s_max)?;
        let vmax = probes.iter().map(|&x| next.eval(x).0.abs()).fold(v0.abs(), f64::max);
        let dv = probes.iter().map(|&x| (next.eval(x).0 - prev.eval(x).0).abs()).fold(0.0, f64::max);
        let dslope = (next.eval(x0).1 - prev.eval(x0).1).abs();
        let slope_scale = next.eval(x0).1.abs() + vmax / ell;
        let change = (dv / vmax.max(f64::MIN_POSITIVE)).max(dslope / slope_scale.max(f64::MIN_POSITIVE));
        prev = next;
        prev.truncation_change = change;
        if change <= settings.tol || vmax == 0.0 {
            return Ok(prev);
        }
    }
    Err(Error::Solver { residual: prev.truncation_change, nodes: prev.nodes })
}

/// Per-component, per-rate solution.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentSolution {
    /// Constant-coefficient closed form in `y = x` (Brownian motion) or `y = ln x` (geometric).
    Closed { kernel: ExpKernel, log_coordinate: bool },
    Collocation(ChebSolution),
    Zero,
}

impl ComponentSolution {
    /// Value and first two spatial derivatives at `x` (closure of the component).
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match self {
            ComponentSolution::Closed { kernel, log_coordinate: false } => kernel.eval(x),
            ComponentSolution::Closed { kernel, log_coordinate: true } => {
                let (v, vy, vyy) = kernel.eval(x.ln());
                (v, vy / x, (vyy - vy) / (x * x))
            }
            ComponentSolution::Collocation(c) => c.eval(x),
            ComponentSolution::Zero => (0.0, 0.0, 0.0),
        }
    }
}

/// End condition of a continuation component: the stopping value, or `None` for an unbounded end.
fn end_value(end: GapEnd, payoff: &PayoffSpec) -> Option<f64> {
    match end {
        GapEnd::Stop(a) => Some(payoff.value(a)),
        GapEnd::DomainEnd(e) if e.is_finite() => Some(0.0),
        GapEnd::DomainEnd(_) => None,
    }
}

/// Solution of one continuation component at rate `r`, by closed form where available.
pub fn solve_gap(
    diff: &DiffusionSpec,
    payoff: &PayoffSpec,
    gap: &Gap,
    r: f64,
    settings: &SolverSettings,
) -> Result<ComponentSolution> {
    let lv = end_value(gap.left, payoff);
    let rv = end_value(gap.right, payoff);
    let (a, b) = (gap.left.position(), gap.right.position());
    match diff.kind() {
        DiffusionKind::BrownianMotion { mu, sigma } => Ok(ComponentSolution::Closed {
            kernel: ExpKernel::new(*mu, *sigma, r, lv.map(|v| (a, v)), rv.map(|v| (b, v))),
            log_coordinate: false,
        }),
        DiffusionKind::GeometricBrownianMotion { mu, sigma } => {
            let log_end = |x: f64, v: Option<f64>| v.filter(|_| x > 0.0 && x.is_finite()).map(|v| (x.ln(), v));
            Ok(ComponentSolution::Closed {
                kernel: ExpKernel::new(mu - 0.5 * sigma * sigma, *sigma, r, log_end(a, lv), log_end(b, rv)),
                log_coordinate: true,
            })
        }
        DiffusionKind::Custom { .. } => {
            let (lo, hi) = (lv.unwrap_or(0.0), rv.unwrap_or(0.0));
            match (lv, rv) {
                (None, None) => Ok(ComponentSolution::Zero),
                (Some(0.0), None) | (None, Some(0.0)) => Ok(ComponentSolution::Zero),
                (Some(x), Some(y)) if x == 0.0 && y == 0.0 => Ok(ComponentSolution::Zero),
                _ => solve_component_bvp(diff, &gap.as_interval(), (lo, hi), r, settings)
                    .map(ComponentSolution::Collocation),
            }
        }
    }
}

/// Evaluator of `v(x, r, S)` and its one-sided derivatives for a fixed instance and region.
#[derive(Debug, Clone)]
pub struct ResolventKernel {
    instance: ProblemInstance,
    region: StoppingRegion,
    gaps: Vec<Gap>,
    settings: SolverSettings,
}

impl ResolventKernel {
    pub fn new(instance: &ProblemInstance, region: &StoppingRegion, settings: SolverSettings) -> Result<Self> {
        region.ensure_admissible()?;
        if region.domain() != instance.diffusion().domain() {
            return Err(Error::Parameter(format!(
                "region lives on {} but the diffusion on {}",
                region.domain(),
                instance.diffusion().domain()
            )));
        }
        Ok(Self { instance: instance.clone(), region: region.clone(), gaps: region.gaps(), settings })
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn region(&self) -> &StoppingRegion {
        &self.region
    }

    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        let d = self.instance.diffusion().domain();
        if d.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { x, domain: d.to_string() })
        }
    }

    /// Index of the continuation component containing `x` in its interior.
    pub fn gap_index(&self, x: f64) -> Option<usize> {
        self.gaps.iter().position(|g| g.contains(x))
    }

    /// Index of the component adjacent to `x` on `side`, when that side is in S^c.
    pub fn side_gap_index(&self, x: f64, side: Side) -> Option<usize> {
        if !self.region.side_in_complement(x, side) {
            return None;
        }
        self.gaps.iter().position(|g| match side {
            Side::Left => x > g.left.position() && x <= g.right.position(),
            Side::Right => x >= g.left.position() && x < g.right.position(),
        })
    }

    pub fn component(&self, gap: usize, r: f64) -> Result<ComponentSolution> {
        solve_gap(self.instance.diffusion(), self.instance.payoff(), &self.gaps[gap], r, &self.settings)
    }

    pub fn value(&self, x: f64, r: f64) -> Result<f64> {
        self.check_domain(x)?;
        match self.gap_index(x) {
            Some(g) => Ok(self.component(g, r)?.eval(x).0),
            None => Ok(self.instance.payoff().value(x)),
        }
    }

    pub fn dx(&self, x: f64, side: Side, r: f64) -> Result<f64> {
        self.check_domain(x)?;
        match self.side_gap_index(x, side) {
            Some(g) => Ok(self.component(g, r)?.eval(x).1),
            None => Ok(self.instance.payoff().deriv(x, side)),
        }
    }
}

pub fn resolvent_value(k: &ResolventKernel, x: f64, r: f64) -> Result<f64> {
    k.value(x, r)
}

pub fn resolvent_dx(k: &ResolventKernel, x: f64, side: Side, r: f64) -> Result<f64> {
    k.dx(x, side, r)
}
