//! Quadrature rules: Gauss–Legendre, generalized Gauss–Laguerre and a
//! globally adaptive Gauss–Kronrod (7/15) integrator for finite and
//! semi-infinite ranges.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    (resk * h, ((resk - resg) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> QuadResult {
    const MAX_SEGMENTS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, err: e });
    let mut total = v;
    let mut total_err = e;
    let mut evals = 15;
    while total_err > abs_tol.max(rel_tol * total.abs()) && heap.len() < MAX_SEGMENTS {
        let seg = heap.pop().expect("non-empty heap");
        let m = 0.5 * (seg.a + seg.b);
        if m <= seg.a || m >= seg.b {
            heap.push(seg);
            break;
        }
        let (v1, e1) = gk15(&f, seg.a, m);
        let (v2, e2) = gk15(&f, m, seg.b);
        evals += 30;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.err;
        heap.push(Segment { a: seg.a, b: m, value: v1, err: e1 });
        heap.push(Segment { a: m, b: seg.b, value: v2, err: e2 });
    }
    // re-sum to limit cancellation drift from the incremental updates
    let (value, abs_error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.err));
    QuadResult { value, abs_error, evaluations: evals }
}

/// Adaptive integration over `[a, ∞)` through the map `s = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> QuadResult {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t;
        let v = f(a + t / u) / (u * u);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "need at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Generalized Gauss–Laguerre rule for the weight `s^alpha e^{-s}` on
/// `[0, ∞)`, computed with the Golub–Welsch eigenvalue method. Weights are
/// normalized to sum to one, i.e. the rule integrates against the
/// Gamma(alpha + 1) probability density.
pub fn gauss_laguerre(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0 && alpha > -1.0);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = 2.0 * i as f64 + alpha + 1.0;
        if i + 1 < n {
            let b = ((i as f64 + 1.0) * (i as f64 + 1.0 + alpha)).sqrt();
            jac[(i, i + 1)] = b;
            jac[(i + 1, i)] = b;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let nodes = pairs.iter().map(|p| p.0).collect();
    let weights = pairs.iter().map(|p| p.1 / total).collect();
    (nodes, weights)
}

/// Composite Gauss–Legendre rule for the Gamma(shape) probability density
/// `s^{shape-1} e^{-s} / Γ(shape)`, on panels graded geometrically towards
/// zero (where the integrands of interest behave like powers of `sqrt(s)`)
/// and of bounded width further out.
pub fn graded_gamma_rule(shape: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(shape > 0.0 && order > 1);
    const RATIO: f64 = 0.2;
    const MASS_CUT: f64 = 1e-17;
    let alpha = shape - 1.0;
    let ln_norm = ln_gamma(shape);
    let density = |s: f64| (alpha * s.ln() - s - ln_norm).exp();
    let (gx, gw) = gauss_legendre(order);

    // Mode-centred unit: panels of width ≤ 2 around the bulk, geometric grading
    // below `unit`.
    let unit = 1.0_f64.max(alpha.max(0.0) * 0.25);
    let mut breaks = vec![];
    // lower geometric part: choose depth so that the mass below is negligible
    let mut lo = unit;
    let mut depth = 0;
    loop {
        breaks.push(lo);
        lo *= RATIO;
        depth += 1;
        let mass_below = (shape * lo.ln() - ln_gamma(shape + 1.0)).exp();
        if mass_below < MASS_CUT || depth > 400 {
            break;
        }
    }
    breaks.push(lo);
    breaks.reverse();
    let floor = lo;
    // upper part
    let width = 2.0;
    let mut hi = unit;
    loop {
        // tail bound for s ≥ hi: density(hi) * (1 + shape/hi) roughly; stop when tiny
        let tail = density(hi) * (1.0 + alpha.max(0.0) / hi.max(1.0)) * 2.0;
        if tail < MASS_CUT && hi > alpha.max(0.0) + 1.0 {
            break;
        }
        hi += width;
        breaks.push(hi);
    }

    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    // mass on [0, floor] lumped at its mean
    let floor_mass = (shape * floor.ln() - ln_gamma(shape + 1.0)).exp();
    if floor_mass > 0.0 {
        nodes.push(floor * shape / (shape + 1.0));
        weights.push(floor_mass);
    }
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        for (x, w) in gx.iter().zip(&gw) {
            let s = c + h * x;
            nodes.push(s);
            weights.push(w * h * density(s));
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (nodes, weights)
}
