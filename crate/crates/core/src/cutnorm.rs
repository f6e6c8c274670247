//! Cut norms of signed step graphons and the permutation cut distance.
//!
//! For a step graphon the supremum over measurable `S, T` is attained on unions
//! of partition cells, so everything reduces to index sets: with cell values
//! `w_jk` the cut norm is `max_{S,T} |Σ_{j∈S, k∈T} w_jk| / n²`. For fixed `S` the
//! best `T` keeps the columns whose partial sums have the chosen sign.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::graphon::{Graphon, StepGraphon};
use crate::rng;

/// Largest size handled by subset enumeration.
pub const EXACT_MAX_N: usize = 30;
/// Largest size handled by exhaustive permutation search.
pub const PERMUTATION_MAX_N: usize = 10;
pub const DEFAULT_RESTARTS: usize = 64;
/// Number of leading indices fixed per parallel chunk of the enumeration.
const CHUNK_BITS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutNormResult {
    /// Attained by `witness`.
    pub lower: f64,
    /// Certified: `max(Σ w⁺, Σ w⁻) / n²` unless exact.
    pub upper: f64,
    pub exact: bool,
    /// `(S, T)`, zero-based cell indices.
    pub witness: (Vec<usize>, Vec<usize>),
    /// Best `sup_{f,g ∈ {±1}} ∫∫ W f g` found; within `[‖W‖□, 4‖W‖□]` when optimal.
    pub bilinear: Option<f64>,
}

/// `|Σ_{S×T} w| / n²`.
pub fn evaluate(w: &StepGraphon, s: &[usize], t: &[usize]) -> f64 {
    let n = w.n() as f64;
    let mut acc = 0.0;
    for &j in s {
        let row = w.row(j);
        for &k in t {
            acc += row[k];
        }
    }
    acc.abs() / (n * n)
}

fn sign_split_bound(w: &StepGraphon) -> f64 {
    let (mut pos, mut neg) = (0.0, 0.0);
    for &v in w.values() {
        if v > 0.0 {
            pos += v;
        } else {
            neg -= v;
        }
    }
    let n = w.n() as f64;
    pos.max(neg) / (n * n)
}

/// Best `T` for column sums `c`: positive part or negative part, whichever is larger.
fn best_columns(c: &[f64]) -> (f64, bool) {
    let (mut pos, mut neg) = (0.0, 0.0);
    for &v in c {
        if v > 0.0 {
            pos += v;
        } else {
            neg -= v;
        }
    }
    if pos >= neg {
        (pos, true)
    } else {
        (neg, false)
    }
}

fn columns_with_sign(c: &[f64], positive: bool) -> Vec<usize> {
    (0..c.len()).filter(|&k| if positive { c[k] > 0.0 } else { c[k] < 0.0 }).collect()
}

fn finish(w: &StepGraphon, s: Vec<usize>) -> (f64, Vec<usize>, Vec<usize>) {
    let n = w.n();
    let mut c = vec![0.0; n];
    for &j in &s {
        for (ck, v) in c.iter_mut().zip(w.row(j)) {
            *ck += v;
        }
    }
    let (_, positive) = best_columns(&c);
    let t = columns_with_sign(&c, positive);
    (evaluate(w, &s, &t), s, t)
}

/// Exact cut norm by Gray-code enumeration of `S`; cost `2ⁿ·n`.
pub fn cut_norm_exact(w: &StepGraphon) -> Result<CutNormResult> {
    let n = w.n();
    if n > EXACT_MAX_N {
        return Err(Error::Size { n, limit: EXACT_MAX_N });
    }
    let high = n.min(CHUNK_BITS);
    let low = n - high;
    // chunk `h` fixes indices low..n to the bits of h; Gray code runs over 0..low
    let best = (0..1usize << high)
        .into_par_iter()
        .map(|h| {
            let mut c = vec![0.0; n];
            for b in 0..high {
                if h >> b & 1 == 1 {
                    for (ck, v) in c.iter_mut().zip(w.row(low + b)) {
                        *ck += v;
                    }
                }
            }
            let mut members = h << low;
            let (mut best, mut arg) = (best_columns(&c).0, members);
            for g in 1..1usize << low {
                let bit = g.trailing_zeros() as usize;
                let sign = if members >> bit & 1 == 1 { -1.0 } else { 1.0 };
                members ^= 1 << bit;
                for (ck, v) in c.iter_mut().zip(w.row(bit)) {
                    *ck += sign * v;
                }
                let v = best_columns(&c).0;
                if v > best {
                    best = v;
                    arg = members;
                }
            }
            (best, arg)
        })
        .reduce_with(|a, b| if b.0 > a.0 { b } else { a })
        .unwrap_or((0.0, 0));
    let s: Vec<usize> = (0..n).filter(|&j| best.1 >> j & 1 == 1).collect();
    let (value, s, t) = finish(w, s);
    Ok(CutNormResult {
        lower: value,
        upper: value,
        exact: true,
        witness: (s, t),
        bilinear: None,
    })
}

/// Alternating best responses from `s` until neither side changes.
///
/// At a fixed point every single-index flip of `S` or `T` is non-improving,
/// since each side is a best response to the other.
fn ascend(w: &StepGraphon, mut in_s: Vec<bool>, positive: bool) -> (f64, Vec<bool>) {
    let n = w.n();
    let sigma = if positive { 1.0 } else { -1.0 };
    let mut c = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut last = f64::NEG_INFINITY;
    loop {
        c.iter_mut().for_each(|v| *v = 0.0);
        for j in (0..n).filter(|&j| in_s[j]) {
            for (ck, v) in c.iter_mut().zip(w.row(j)) {
                *ck += v;
            }
        }
        let in_t: Vec<bool> = c.iter().map(|&v| sigma * v > 0.0).collect();
        for (j, rj) in r.iter_mut().enumerate() {
            let row = w.row(j);
            *rj = (0..n).filter(|&k| in_t[k]).map(|k| row[k]).sum();
        }
        let next: Vec<bool> = r.iter().map(|&v| sigma * v > 0.0).collect();
        let value: f64 = r.iter().map(|&v| (sigma * v).max(0.0)).sum();
        if next == in_s || value <= last {
            let keep = if value <= last { in_s } else { next };
            return (last.max(value), keep);
        }
        last = value;
        in_s = next;
    }
}

/// `max_{f,g ∈ {±1}ⁿ} Σ w_jk f_j g_k / n²` by alternating sign updates.
fn bilinear_ascent(w: &StepGraphon, mut g: Vec<f64>) -> f64 {
    let n = w.n();
    let mut best = f64::NEG_INFINITY;
    loop {
        let wg: Vec<f64> = (0..n).map(|j| w.row(j).iter().zip(&g).map(|(a, b)| a * b).sum()).collect();
        let f: Vec<f64> = wg.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let value: f64 = wg.iter().map(|v| v.abs()).sum();
        if value <= best {
            return best / (n * n) as f64;
        }
        best = value;
        // W is symmetric, so the column update is the same map applied to f
        g = f;
    }
}

/// Lower bound from random-restart alternating ascent, certified upper bound from the sign split.
pub fn cut_norm_heuristic(w: &StepGraphon, restarts: usize, seed: u64) -> CutNormResult {
    let n = w.n();
    let starts: Vec<Vec<bool>> = std::iter::once(vec![true; n])
        .chain((0..restarts as u64).map(|q| {
            let mut r = rng::stream(seed, "cutnorm", q);
            (0..n).map(|_| r.random::<bool>()).collect()
        }))
        .collect();
    let best = starts
        .par_iter()
        .enumerate()
        .flat_map_iter(|(q, s)| [true, false].map(|pos| (q, ascend(w, s.clone(), pos))))
        .map(|(_, (v, s))| (v, s))
        .reduce_with(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one start");
    let s: Vec<usize> = (0..n).filter(|&j| best.1[j]).collect();
    let (value, s, t) = finish(w, s);
    let bilinear = starts
        .par_iter()
        .map(|s| bilinear_ascent(w, s.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()))
        .reduce_with(f64::max)
        .unwrap_or(0.0);
    let upper = sign_split_bound(w);
    CutNormResult {
        lower: value,
        upper,
        exact: false,
        witness: (s, t),
        bilinear: Some(bilinear),
    }
}

/// Exact when `n ≤ exact_limit`, heuristic otherwise.
pub fn cut_norm(w: &StepGraphon, exact_limit: usize, seed: u64) -> CutNormResult {
    if w.n() <= exact_limit.min(EXACT_MAX_N) {
        cut_norm_exact(w).expect("size checked")
    } else {
        cut_norm_heuristic(w, DEFAULT_RESTARTS, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutDistance {
    pub value: f64,
    /// `W` relabeled by `permutation` minimizes the distance: `W^φ_jk = W_{φ(j)φ(k)}`.
    pub permutation: Vec<usize>,
    pub exact: bool,
}

/// `min_φ ‖U − W^φ‖□` over vertex relabelings.
pub fn cut_distance_permutation(u: &StepGraphon, w: &StepGraphon, require_exact: bool) -> Result<CutDistance> {
    let n = u.n();
    if w.n() != n {
        return Err(Error::Dimension { expected: n, got: w.n() });
    }
    let seed = 0;
    let start = aligned_by_degree(u, w);
    let (best_perm, best) = local_swaps(u, w, start, seed);
    if n <= PERMUTATION_MAX_N {
        let mut state = SearchState {
            u,
            w,
            best: best_perm.clone(),
            best_value: cut_norm_exact(&u.sub(&w.permuted(&best_perm))?)?.lower,
        };
        let mut perm = Vec::with_capacity(n);
        let mut used = vec![false; n];
        state.branch(&mut perm, &mut used)?;
        return Ok(CutDistance {
            value: state.best_value,
            permutation: state.best,
            exact: true,
        });
    }
    if require_exact {
        return Err(Error::Size {
            n,
            limit: PERMUTATION_MAX_N,
        });
    }
    Ok(CutDistance {
        value: best,
        permutation: best_perm,
        exact: false,
    })
}

struct SearchState<'a> {
    u: &'a StepGraphon,
    w: &'a StepGraphon,
    best: Vec<usize>,
    best_value: f64,
}

impl SearchState<'_> {
    /// Depth-first over `φ(0), φ(1), …`; the exact cut norm of the assigned
    /// principal block is a lower bound for every completion.
    fn branch(&mut self, perm: &mut Vec<usize>, used: &mut [bool]) -> Result<()> {
        let n = self.u.n();
        let m = perm.len();
        if m > 0 {
            let block = StepGraphon::from_upper(m, |a, b| self.u.get(a, b) - self.w.get(perm[a], perm[b]));
            // the block lives on cells of size 1/n, not 1/m
            let scale = (m * m) as f64 / (n * n) as f64;
            let bound = cut_norm_exact(&block)?.lower * scale;
            if bound >= self.best_value {
                return Ok(());
            }
            if m == n {
                self.best_value = bound;
                self.best = perm.clone();
                return Ok(());
            }
        }
        for x in 0..n {
            if !used[x] {
                used[x] = true;
                perm.push(x);
                self.branch(perm, used)?;
                perm.pop();
                used[x] = false;
            }
        }
        Ok(())
    }
}

fn aligned_by_degree(u: &StepGraphon, w: &StepGraphon) -> Vec<usize> {
    let n = u.n();
    let deg = |g: &StepGraphon| -> Vec<f64> { (0..n).map(|j| g.row(j).iter().sum()).collect() };
    let (du, dw) = (deg(u), deg(w));
    let mut ou: Vec<usize> = (0..n).collect();
    let mut ow: Vec<usize> = (0..n).collect();
    ou.sort_by(|&a, &b| du[a].total_cmp(&du[b]).then(a.cmp(&b)));
    ow.sort_by(|&a, &b| dw[a].total_cmp(&dw[b]).then(a.cmp(&b)));
    let mut perm = vec![0; n];
    for (a, b) in ou.into_iter().zip(ow) {
        perm[a] = b;
    }
    perm
}

fn heuristic_distance(u: &StepGraphon, w: &StepGraphon, perm: &[usize], seed: u64) -> f64 {
    let d = StepGraphon::from_upper(u.n(), |a, b| u.get(a, b) - w.get(perm[a], perm[b]));
    if u.n() <= 12 {
        cut_norm_exact(&d).expect("size checked").lower
    } else {
        cut_norm_heuristic(&d, 8, seed).lower
    }
}

/// First-improvement pairwise swaps, bounded number of passes.
fn local_swaps(u: &StepGraphon, w: &StepGraphon, mut perm: Vec<usize>, seed: u64) -> (Vec<usize>, f64) {
    let n = u.n();
    let mut best = heuristic_distance(u, w, &perm, seed);
    for _ in 0..4 {
        let mut improved = false;
        for a in 0..n {
            for b in a + 1..n {
                if best == 0.0 {
                    return (perm, best);
                }
                perm.swap(a, b);
                let v = heuristic_distance(u, w, &perm, seed);
                if v < best {
                    best = v;
                    improved = true;
                } else {
                    perm.swap(a, b);
                }
            }
        }
        if !improved {
            break;
        }
    }
    (perm, best)
}

fn step_pieces(g: &Graphon, m: usize, t: f64) -> Result<StepGraphon> {
    match g.at(t)? {
        Graphon::Step(s) => s.refine(m),
        other => other.cell_average_grid(0.0, m),
    }
}

/// `∫₀ᵀ ‖P_m W_n(t) − P_m W(t)‖□ dt` with both kernels averaged onto the partition of size `m`.
///
/// Both arguments are piecewise constant in time, so the integrand is constant
/// between consecutive switch times and the integral is a finite sum.
pub fn time_integrated_cut_distance(wn: &Graphon, w: &Graphon, horizon: f64, m: usize, seed: u64) -> Result<f64> {
    if m == 0 {
        return Err(param("m", "must be at least 1"));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(param("horizon", format!("{horizon} must be nonnegative")));
    }
    let mut cuts: Vec<f64> = wn.switch_times().into_iter().chain(w.switch_times()).filter(|&t| t > 0.0 && t < horizon).collect();
    cuts.push(0.0);
    cuts.push(horizon);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for win in cuts.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let d = step_pieces(wn, m, a)?.sub(&step_pieces(w, m, a)?)?;
        total += (b - a) * cut_norm(&d, 12, seed).lower;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::Segment;
    use proptest::prelude::{prop_assert, proptest};

    fn random_signed(n: usize, seed: u64) -> StepGraphon {
        let mut r = rng::stream(seed, "test-signed", 0);
        StepGraphon::from_upper(n, |_, _| r.random::<f64>() * 2.0 - 1.0)
    }

    /// Brute force over all `(S, T)` pairs.
    fn brute_force(w: &StepGraphon) -> f64 {
        let n = w.n();
        let mut best = 0.0f64;
        for s in 0..1usize << n {
            for t in 0..1usize << n {
                let mut acc = 0.0;
                for j in (0..n).filter(|j| s >> j & 1 == 1) {
                    for k in (0..n).filter(|k| t >> k & 1 == 1) {
                        acc += w.get(j, k);
                    }
                }
                best = best.max(acc.abs());
            }
        }
        best / (n * n) as f64
    }

    #[test]
    fn two_by_two_checkerboard() {
        let w = StepGraphon::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let r = cut_norm_exact(&w).unwrap();
        assert_eq!(r.lower, 0.25);
        assert!(r.exact && r.lower == r.upper);
        assert_eq!(evaluate(&w, &r.witness.0, &r.witness.1), 0.25);
        assert_eq!(r.witness.0.len(), 1);
        assert_eq!(r.witness.0, r.witness.1);
        assert_eq!(brute_force(&w), 0.25);
    }

    #[test]
    fn zero_and_nonnegative() {
        assert_eq!(cut_norm_exact(&StepGraphon::zeros(5)).unwrap().lower, 0.0);
        let g = Graphon::uniform_attachment().cell_average_grid(0.0, 9).unwrap();
        let e = cut_norm_exact(&g).unwrap();
        let h = cut_norm_heuristic(&g, 4, 1);
        assert!((e.lower - g.l1()).abs() <= 1e-12);
        assert!((h.lower - g.l1()).abs() <= 1e-12 && (h.upper - g.l1()).abs() <= 1e-12);
    }

    #[test]
    fn exact_matches_brute_force() {
        for seed in 0..20 {
            let w = random_signed(5, seed);
            let e = cut_norm_exact(&w).unwrap();
            assert!((e.lower - brute_force(&w)).abs() <= 1e-14);
            assert!((evaluate(&w, &e.witness.0, &e.witness.1) - e.lower).abs() <= 1e-14);
        }
    }

    #[test]
    fn chunked_enumeration_matches_small_cases() {
        // n > CHUNK_BITS exercises the parallel split
        let w = random_signed(9, 3);
        let e = cut_norm_exact(&w).unwrap();
        let h = cut_norm_heuristic(&w, 64, 0);
        assert!(h.lower <= e.lower + 1e-15 && e.lower <= h.upper);
        assert!(matches!(cut_norm_exact(&StepGraphon::zeros(31)), Err(Error::Size { .. })));
    }

    #[test]
    fn heuristic_against_exact_on_random_instances() {
        let mut hits = 0;
        for seed in 0..200 {
            let w = random_signed(12, seed);
            let e = cut_norm_exact(&w).unwrap();
            let h = cut_norm_heuristic(&w, DEFAULT_RESTARTS, seed);
            assert!(h.lower <= e.lower + 1e-14);
            assert!(e.lower <= h.upper);
            let b = h.bilinear.unwrap();
            assert!(b <= 4.0 * e.lower + 1e-12 && b >= e.lower - 1e-12, "{b} vs {}", e.lower);
            hits += usize::from((h.lower - e.lower).abs() <= 1e-12);
        }
        assert!(hits >= 190, "{hits}");
    }

    #[test]
    fn sign_and_scale() {
        let w = random_signed(10, 9);
        let neg = w.scaled(-1.0);
        let (a, b) = (cut_norm_heuristic(&w, 16, 4), cut_norm_heuristic(&neg, 16, 4));
        assert_eq!(a.lower, b.lower);
        let e = cut_norm_exact(&w).unwrap().lower;
        assert!((cut_norm_exact(&w.scaled(2.5)).unwrap().lower - 2.5 * e).abs() <= 1e-14);
        let c = cut_norm_heuristic(&w.scaled(3.0), 16, 4).lower;
        assert!((c - 3.0 * a.lower).abs() <= 1e-14);
    }

    #[test]
    fn distance_recovers_relabelings() {
        let u = random_signed(6, 1);
        assert_eq!(cut_distance_permutation(&u, &u, true).unwrap().value, 0.0);
        let perm = [1, 0, 2, 3, 4, 5];
        let w = u.permuted(&perm);
        let d = cut_distance_permutation(&u, &w, true).unwrap();
        assert!(d.value <= 1e-15, "{d:?}");
        assert_eq!(u.sub(&w.permuted(&d.permutation)).unwrap().sup_abs(), 0.0);

        let b = crate::graphs::bipartite(8, 0.5).unwrap().step_graphon();
        let rev: Vec<usize> = (0..8).rev().collect();
        let d = cut_distance_permutation(&b, &b.permuted(&rev), true).unwrap();
        assert!(d.exact && d.value == 0.0);
    }

    #[test]
    fn distance_is_at_most_identity_alignment() {
        let u = random_signed(7, 2);
        let w = random_signed(7, 5);
        let d = cut_distance_permutation(&u, &w, true).unwrap();
        let id = cut_norm_exact(&u.sub(&w).unwrap()).unwrap().lower;
        assert!(d.value <= id + 1e-15 && d.value > 0.0);
        let check = cut_norm_exact(&u.sub(&w.permuted(&d.permutation)).unwrap()).unwrap().lower;
        assert!((check - d.value).abs() <= 1e-15);
        assert!(cut_distance_permutation(&random_signed(11, 0), &random_signed(11, 1), true).is_err());
        assert!(!cut_distance_permutation(&random_signed(11, 0), &random_signed(11, 1), false).unwrap().exact);
    }

    #[test]
    fn time_integrated_distance() {
        let ua = Graphon::uniform_attachment();
        let g8 = Graphon::step(ua.cell_average_grid(0.0, 8).unwrap()).unwrap();
        assert_eq!(time_integrated_cut_distance(&g8, &g8, 5.0, 16, 0).unwrap(), 0.0);
        let vals: Vec<f64> = [8, 32, 128]
            .iter()
            .map(|&n| {
                let gn = Graphon::step(ua.cell_average_grid(0.0, n).unwrap()).unwrap();
                time_integrated_cut_distance(&gn, &ua, 2.0, 256, 0).unwrap()
            })
            .collect();
        assert!(vals.windows(2).all(|v| v[1] < v[0]), "{vals:?}");
        let stat = time_integrated_cut_distance(&g8, &ua, 3.0, 16, 0).unwrap();
        let once = time_integrated_cut_distance(&g8, &ua, 1.0, 16, 0).unwrap();
        assert!((stat - 3.0 * once).abs() <= 1e-14);

        let sched = Graphon::schedule(
            vec![
                Segment { start: 0.0, graphon: ua.clone() },
                Segment { start: 1.0, graphon: g8.clone() },
            ],
            4.0,
        )
        .unwrap();
        let v = time_integrated_cut_distance(&sched, &ua, 4.0, 16, 0).unwrap();
        assert!((v - 3.0 * once).abs() <= 1e-14, "{v} vs {}", 3.0 * once);
        assert!(matches!(time_integrated_cut_distance(&g8, &ua, 1.0, 12, 0), Err(Error::Partition { .. })));
    }

    proptest! {
        #[test]
        fn sandwich_holds(seed in 0u64..1000, n in 1usize..9) {
            let w = random_signed(n, seed);
            let e = cut_norm_exact(&w).unwrap();
            let h = cut_norm_heuristic(&w, 8, seed);
            prop_assert!(h.lower <= e.lower + 1e-14 && e.lower <= h.upper + 1e-14);
            prop_assert!((evaluate(&w, &h.witness.0, &h.witness.1) - h.lower).abs() <= 1e-14);
        }
    }
}
