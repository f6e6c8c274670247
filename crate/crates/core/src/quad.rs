//! Gauss–Legendre rules and adaptive quadrature on intervals and rectangles.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of the `m`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Lagrange weights extrapolating the node interpolant to -1 and +1.
    ext_lo: Vec<f64>,
    ext_hi: Vec<f64>,
}

fn lagrange_at(nodes: &[f64], t: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|i| {
            let mut l = 1.0;
            for (j, &xj) in nodes.iter().enumerate() {
                if j != i {
                    l *= (t - xj) / (nodes[i] - xj);
                }
            }
            l
        })
        .collect()
}

fn rule(m: usize) -> &'static Rule {
    static R5: OnceLock<Rule> = OnceLock::new();
    static R6: OnceLock<Rule> = OnceLock::new();
    static R10: OnceLock<Rule> = OnceLock::new();
    static R20: OnceLock<Rule> = OnceLock::new();
    let cell = match m {
        5 => &R5,
        6 => &R6,
        10 => &R10,
        20 => &R20,
        _ => unreachable!("unsupported rule size"),
    };
    cell.get_or_init(|| {
        let (nodes, weights) = gauss_legendre(m);
        let ext_lo = lagrange_at(&nodes, -1.0);
        let ext_hi = lagrange_at(&nodes, 1.0);
        Rule {
            nodes,
            weights,
            ext_lo,
            ext_hi,
        }
    })
}

/// Fixed 20-point Gauss–Legendre integral of `f` over [a, b].
pub fn gauss20<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    fixed_1d(f, a, b, rule(20))
}

fn fixed_1d<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, r: &Rule) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in r.nodes.iter().zip(&r.weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Integral estimate and error indicator on one interval.
///
/// The value is the 20-point rule; the indicator is the larger of its
/// difference from the 10-point rule and an endpoint guard: the interval
/// width times the mismatch between `f` at a finite endpoint and the 10-node
/// interpolant extrapolated there. A kink or jump between the outermost node
/// and the endpoint is invisible to both Gauss rules but shows up in the guard.
fn estimate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let r10 = rule(10);
    let (mut g10, mut lo, mut hi) = (0.0, 0.0, 0.0);
    for i in 0..r10.nodes.len() {
        let v = f(mid + half * r10.nodes[i]);
        g10 += r10.weights[i] * v;
        lo += r10.ext_lo[i] * v;
        hi += r10.ext_hi[i] * v;
    }
    let g20 = fixed_1d(f, a, b, rule(20));
    let g10 = g10 * half;
    let mut mismatch: f64 = 0.0;
    for (end, ext) in [(a, lo), (b, hi)] {
        let v = f(end);
        if v.is_finite() {
            mismatch = mismatch.max((v - ext).abs());
        }
    }
    let err = (g20 - g10).abs().max(mismatch * (b - a));
    Piece {
        a,
        b,
        value: g20,
        err: if err.is_nan() { f64::INFINITY } else { err },
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err).then(other.a.total_cmp(&self.a))
    }
}

const MAX_PIECES: usize = 4000;

/// Globally adaptive Gauss–Legendre integral of `f` over [a, b] with absolute tolerance `tol`.
///
/// The interval with the largest error indicator is bisected until the
/// indicators sum to at most `tol`. `f` is also evaluated at subinterval
/// endpoints; non-finite values there are ignored by the guard, so
/// integrable endpoint singularities are allowed.
pub fn adaptive_1d<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    use std::collections::BinaryHeap;
    let mut heap = BinaryHeap::new();
    let first = estimate(f, a, b);
    let mut total = first.err;
    heap.push(first);
    let mut steps = 0usize;
    while total > tol && heap.len() < MAX_PIECES {
        if steps % 64 == 0 && total <= 64.0 * f64::EPSILON * heap.iter().map(|p| p.value.abs()).sum::<f64>() {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            heap.push(worst);
            break;
        }
        let (l, r) = (estimate(f, worst.a, m), estimate(f, m, worst.b));
        total += l.err + r.err - worst.err;
        heap.push(l);
        heap.push(r);
        steps += 1;
        if steps % 64 == 0 {
            total = heap.iter().map(|p| p.err).sum();
        }
    }
    let mut pieces = heap.into_vec();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    let achieved: f64 = pieces.iter().map(|p| p.err).sum();
    let value: f64 = pieces.iter().map(|p| p.value).sum();
    // tolerances below the rounding level of the result cannot be met
    let floor = 64.0 * f64::EPSILON * pieces.iter().map(|p| p.value.abs()).sum::<f64>();
    if achieved > tol.max(floor) || !value.is_finite() {
        return Err(Error::Quadrature {
            achieved,
            requested: tol,
        });
    }
    Ok(value)
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    fn split(&self) -> [Rect; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Rect { x0: self.x0, x1: xm, y0: self.y0, y1: ym },
            Rect { x0: xm, x1: self.x1, y0: self.y0, y1: ym },
            Rect { x0: self.x0, x1: xm, y0: ym, y1: self.y1 },
            Rect { x0: xm, x1: self.x1, y0: ym, y1: self.y1 },
        ]
    }
}

fn tensor_mean<F: Fn(f64, f64) -> f64>(f: &F, c: &Rect, r: &Rule) -> f64 {
    let hx = 0.5 * (c.x1 - c.x0);
    let mx = 0.5 * (c.x0 + c.x1);
    let hy = 0.5 * (c.y1 - c.y0);
    let my = 0.5 * (c.y0 + c.y1);
    let mut acc = 0.0;
    for (xi, wi) in r.nodes.iter().zip(&r.weights) {
        let x = mx + hx * xi;
        let mut row = 0.0;
        for (yj, wj) in r.nodes.iter().zip(&r.weights) {
            row += wj * f(x, my + hy * yj);
        }
        acc += wi * row;
    }
    acc * 0.25
}

/// Adaptive tensor Gauss–Legendre mean of `f` over `rect`.
///
/// `tol` bounds the absolute error of the mean; a cell is accepted once its
/// 6×6 estimate and the sum of its four children agree to `tol`. Subdivision
/// stops at `max_depth` levels, in which case the accumulated discrepancy is
/// reported as a quadrature error.
pub fn adaptive_mean_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    rect: Rect,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    let r = rule(6);
    let whole = tensor_mean(f, &rect, r);
    let mut achieved = 0.0;
    let v = recurse_2d(f, rect, whole, tol, 0, max_depth, r, 1.0, &mut achieved);
    if achieved > tol {
        return Err(Error::Quadrature {
            achieved,
            requested: tol,
        });
    }
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn recurse_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    rect: Rect,
    whole: f64,
    tol: f64,
    depth: u32,
    max_depth: u32,
    r: &Rule,
    weight: f64,
    achieved: &mut f64,
) -> f64 {
    let kids = rect.split();
    let means = kids.map(|k| tensor_mean(f, &k, r));
    let refined = 0.25 * means.iter().sum::<f64>();
    let err = (refined - whole).abs();
    if err <= tol {
        return refined;
    }
    if depth >= max_depth {
        *achieved += weight * err;
        return refined;
    }
    let mut acc = 0.0;
    for (k, m) in kids.iter().zip(means) {
        acc += recurse_2d(f, *k, m, tol, depth + 1, max_depth, r, 0.25 * weight, achieved);
    }
    0.25 * acc
}

/// Mean of `f` over `rect` by nested adaptive 1-D rules.
///
/// Slower than [`adaptive_mean_2d`] on smooth integrands but robust to kinks
/// along curves, where tensor subdivision refines without bound.
pub fn nested_mean_2d<F: Fn(f64, f64) -> f64>(f: &F, rect: Rect, tol: f64) -> Result<f64> {
    let wx = rect.x1 - rect.x0;
    let wy = rect.y1 - rect.y0;
    let failure = std::cell::Cell::new(None);
    let slice = |x: f64| match adaptive_1d(&|y| f(x, y), rect.y0, rect.y1, 0.5 * tol * wy) {
        Ok(v) => v / wy,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    let v = adaptive_1d(&slice, rect.x0, rect.x1, 0.5 * tol * wx)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(v / wx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_polynomials_exactly() {
        for m in [6usize, 10, 20] {
            let (x, w) = gauss_legendre(m);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            // degree 2m-1 is exact
            let deg = 2 * m - 2;
            let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((v - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13, "m={m}");
        }
    }

    #[test]
    fn adaptive_1d_handles_endpoint_singularity() {
        let v = adaptive_1d(&|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_2d_mean_of_kink() {
        let f = |x: f64, y: f64| 1.0 - x.max(y);
        let rect = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        let v = adaptive_mean_2d(&f, rect, 1e-10, 20).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn nested_mean_of_curved_kink() {
        let f = |x: f64, y: f64| (x * y).min(0.5);
        let rect = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        let v = nested_mean_2d(&f, rect, 1e-10).unwrap();
        // for x < 1/2: x/2; for x >= 1/2: y* = 1/(2x), ∫ = x y*²/2 + (1 - y*)/2
        let oracle = adaptive_1d(
            &|x: f64| {
                if x < 0.5 {
                    0.5 * x
                } else {
                    let ys = 0.5 / x;
                    0.5 * x * ys * ys + 0.5 * (1.0 - ys)
                }
            },
            0.0,
            1.0,
            1e-13,
        )
        .unwrap();
        assert!((v - oracle).abs() < 1e-9, "{v} vs {oracle}");
    }
}
