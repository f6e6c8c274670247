//! Adjacency matrices sampled from a graphon: Galerkin cell averages and the
//! W-random families built on one sorted draw of latent points.
//!
//! Pair outcomes come from the keyed stream of their row: the draw for pair
//! `j < k` is the `(k - j - 1)`-th value of stream `j`, so any fill order gives
//! the same matrix.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{param, Error, Result};
use crate::graphon::{Graphon, TrimMode};
use crate::graphs::{AdjacencyMatrix, Provenance};
use crate::rng;

/// Sorted latent positions of the vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoints {
    pub x: Vec<f64>,
    pub seed: u64,
}

impl SamplePoints {
    pub fn draw(n: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, "points", 0);
        let mut x: Vec<f64> = (0..n).map(|_| rng::open_unit(&mut r)).collect();
        x.sort_by(f64::total_cmp);
        Self { x, seed }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    Galerkin,
    WeightedRandom,
    BernoulliRandom,
    ScaledSparse { alpha: f64 },
    TrimmedWeighted { alpha: f64 },
    AveragedRandom { alpha: f64 },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Galerkin => "galerkin",
            Scheme::WeightedRandom => "weighted_random",
            Scheme::BernoulliRandom => "bernoulli_random",
            Scheme::ScaledSparse { .. } => "scaled_sparse",
            Scheme::TrimmedWeighted { .. } => "trimmed_weighted",
            Scheme::AveragedRandom { .. } => "averaged_random",
        }
    }

    pub fn is_random(&self) -> bool {
        !matches!(self, Scheme::Galerkin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerSpec {
    pub scheme: Scheme,
    pub seed: u64,
}

impl SamplerSpec {
    /// Matrix at size `n`; `t` selects the active kernel for Galerkin sampling.
    pub fn sample(&self, w: &Graphon, t: f64, n: usize) -> Result<AdjacencyMatrix> {
        match self.scheme {
            Scheme::Galerkin => galerkin(w, t, n),
            Scheme::WeightedRandom => weighted_random(w, n, self.seed),
            Scheme::BernoulliRandom => bernoulli_random(w, n, self.seed),
            Scheme::ScaledSparse { alpha } => scaled_sparse(w, n, alpha, self.seed),
            Scheme::TrimmedWeighted { alpha } => trimmed_weighted(w, n, alpha, self.seed),
            Scheme::AveragedRandom { alpha } => averaged_random(w, n, alpha, self.seed),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(param("n", "must be at least 1"));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(param("alpha", format!("{alpha} not in (0, 1)")));
    }
    Ok(())
}

fn check_static(w: &Graphon, op: &'static str) -> Result<()> {
    if w.is_time_dependent() {
        return Err(Error::TimeDependent(op));
    }
    Ok(())
}

/// Symmetric fill of the strict upper triangle, one keyed stream per row.
fn fill_pairs<F>(n: usize, seed: u64, tag: &str, diag: impl Fn(usize) -> f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, usize, &mut ChaCha8Rng) -> Result<f64>,
{
    let mut w = vec![0.0; n * n];
    for j in 0..n {
        w[j * n + j] = diag(j);
        let mut r = rng::stream(seed, tag, j as u64);
        for k in j + 1..n {
            let v = f(j, k, &mut r)?;
            w[j * n + k] = v;
            w[k * n + j] = v;
        }
    }
    Ok(w)
}

/// `A_jk = ⟨W(t)⟩` over cell `(j, k)`.
pub fn galerkin(w: &Graphon, t: f64, n: usize) -> Result<AdjacencyMatrix> {
    check_n(n)?;
    let grid = w.cell_average_grid(t, n)?;
    let meta = Provenance::new("galerkin", json!({ "graphon": w.kind_name(), "n": n, "t": t }), None);
    Ok(AdjacencyMatrix::from_parts(n, grid.into_values(), meta))
}

/// `A_jk = W(x_j, x_k)` including the diagonal.
pub fn weighted_random(w: &Graphon, n: usize, seed: u64) -> Result<AdjacencyMatrix> {
    check_n(n)?;
    check_static(w, "weighted_random")?;
    let pts = SamplePoints::draw(n, seed);
    let x = &pts.x;
    let values = fill_pairs(n, seed, "weighted_random", |j| w.kernel(x[j], x[j]), |j, k, _| Ok(w.kernel(x[j], x[k])))?;
    let meta = Provenance::new("weighted_random", json!({ "graphon": w.kind_name(), "n": n }), Some(seed));
    Ok(AdjacencyMatrix::from_parts(n, values, meta))
}

/// Independent `Bernoulli(W(x_j, x_k))` edges, zero diagonal.
pub fn bernoulli_random(w: &Graphon, n: usize, seed: u64) -> Result<AdjacencyMatrix> {
    check_n(n)?;
    check_static(w, "bernoulli_random")?;
    let pts = SamplePoints::draw(n, seed);
    let x = &pts.x;
    let values = fill_pairs(n, seed, "bernoulli_random", |_| 0.0, |j, k, r| {
        let p = w.kernel(x[j], x[k]);
        if p > 1.0 {
            return Err(Error::Range { j, k, value: p });
        }
        Ok(if rng::open_unit(r) < p { 1.0 } else { 0.0 })
    })?;
    let meta = Provenance::new("bernoulli_random", json!({ "graphon": w.kind_name(), "n": n }), Some(seed));
    Ok(AdjacencyMatrix::from_parts(n, values, meta))
}

/// `A_jk = n^α` with probability `min{1, n^{-α} W(x_j, x_k)}`, zero diagonal.
pub fn scaled_sparse(w: &Graphon, n: usize, alpha: f64, seed: u64) -> Result<AdjacencyMatrix> {
    check_n(n)?;
    check_alpha(alpha)?;
    check_static(w, "scaled_sparse")?;
    let pts = SamplePoints::draw(n, seed);
    let x = &pts.x;
    let na = (n as f64).powf(alpha);
    let values = fill_pairs(n, seed, "scaled_sparse", |_| 0.0, |j, k, r| {
        let p = (w.kernel(x[j], x[k]) / na).min(1.0);
        Ok(if rng::open_unit(r) < p { na } else { 0.0 })
    })?;
    let meta = Provenance::new("scaled_sparse", json!({ "graphon": w.kind_name(), "n": n, "alpha": alpha }), Some(seed));
    Ok(AdjacencyMatrix::from_parts(n, values, meta))
}

/// `A_jk = min{n^α, W(x_j, x_k)}` on the points drawn from `seed`.
pub fn trimmed_weighted(w: &Graphon, n: usize, alpha: f64, seed: u64) -> Result<AdjacencyMatrix> {
    check_n(n)?;
    check_alpha(alpha)?;
    check_static(w, "trimmed_weighted")?;
    let pts = SamplePoints::draw(n, seed);
    let x = &pts.x;
    let na = (n as f64).powf(alpha);
    let cap = |a: f64, b: f64| na.min(w.kernel(a, b));
    let values = fill_pairs(n, seed, "trimmed_weighted", |j| cap(x[j], x[j]), |j, k, _| Ok(cap(x[j], x[k])))?;
    let meta = Provenance::new("trimmed_weighted", json!({ "graphon": w.kind_name(), "n": n, "alpha": alpha }), Some(seed));
    Ok(AdjacencyMatrix::from_parts(n, values, meta))
}

/// `A_jk = n^α` with probability `⟨min{1, n^{-α} W}⟩` over cell `(j, k)`, zero diagonal.
pub fn averaged_random(w: &Graphon, n: usize, alpha: f64, seed: u64) -> Result<AdjacencyMatrix> {
    check_n(n)?;
    check_alpha(alpha)?;
    check_static(w, "averaged_random")?;
    let p = w.trim(n, alpha, TrimMode::Density)?.cell_average_grid(0.0, n)?;
    let na = (n as f64).powf(alpha);
    let values = fill_pairs(n, seed, "averaged_random", |_| 0.0, |j, k, r| {
        Ok(if rng::open_unit(r) < p.get(j, k) { na } else { 0.0 })
    })?;
    let meta = Provenance::new("averaged_random", json!({ "graphon": w.kind_name(), "n": n, "alpha": alpha }), Some(seed));
    Ok(AdjacencyMatrix::from_parts(n, values, meta))
}

/// `Ā_jk = n^α ⟨min{1, n^{-α} W}⟩` over cell `(j, k)`, diagonal included.
pub fn averaged_model_matrix(w: &Graphon, n: usize, alpha: f64) -> Result<AdjacencyMatrix> {
    check_n(n)?;
    check_alpha(alpha)?;
    let na = (n as f64).powf(alpha);
    let p = w.trim(n, alpha, TrimMode::Density)?.cell_average_grid(0.0, n)?;
    let meta = Provenance::new("averaged_model", json!({ "graphon": w.kind_name(), "n": n, "alpha": alpha }), None);
    Ok(AdjacencyMatrix::from_parts(n, p.scaled(na).into_values(), meta))
}
