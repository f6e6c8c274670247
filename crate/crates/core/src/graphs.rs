//! Dense adjacency matrices and the deterministic and classical random graph families.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{param, Error, Result};
use crate::graphon::StepGraphon;
use crate::rng;

/// Where a matrix came from; serialized next to exported matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(generator: &str, params: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            generator: generator.to_string(),
            params,
            seed,
        }
    }
}

/// Symmetric nonnegative `n × n` weight matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    weights: Vec<f64>,
    pub meta: Provenance,
}

impl AdjacencyMatrix {
    pub fn new(n: usize, weights: Vec<f64>, meta: Provenance) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                got: weights.len(),
            });
        }
        for j in 0..n {
            for k in j..n {
                let v = weights[j * n + k];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(param("weights", format!("entry ({j}, {k}) = {v} is not a finite nonnegative weight")));
                }
                if v != weights[k * n + j] {
                    return Err(param("weights", format!("asymmetric entry at ({j}, {k})")));
                }
            }
        }
        Ok(Self { n, weights, meta })
    }

    /// Trusted constructor for generators that fill the matrix symmetrically.
    pub(crate) fn from_parts(n: usize, weights: Vec<f64>, meta: Provenance) -> Self {
        debug_assert_eq!(weights.len(), n * n);
        Self { n, weights, meta }
    }

    pub fn from_step(s: &StepGraphon, meta: Provenance) -> Result<Self> {
        Self::new(s.n(), s.values().to_vec(), meta)
    }

    pub fn empty(n: usize) -> Self {
        Self::from_parts(n, vec![0.0; n * n], Provenance::new("empty", json!({ "n": n }), None))
    }

    pub fn complete(n: usize) -> Self {
        let mut w = vec![1.0; n * n];
        for j in 0..n {
            w[j * n + j] = 0.0;
        }
        Self::from_parts(n, w, Provenance::new("complete", json!({ "n": n }), None))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.weights[j * self.n + k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.n..(j + 1) * self.n]
    }

    /// Weighted degrees `d_j = Σ_k A_jk`.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.row(j).iter().sum()).collect()
    }

    /// Number of unordered pairs `j < k` with a nonzero weight.
    pub fn edge_count(&self) -> usize {
        let mut c = 0;
        for j in 0..self.n {
            for k in j + 1..self.n {
                if self.get(j, k) != 0.0 {
                    c += 1;
                }
            }
        }
        c
    }

    /// Weights in {0, 1} and an empty diagonal.
    pub fn is_simple(&self) -> bool {
        (0..self.n).all(|j| self.get(j, j) == 0.0) && self.weights.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// The step graphon taking value `A_jk` on cell `(j, k)`.
    pub fn step_graphon(&self) -> StepGraphon {
        StepGraphon::from_upper(self.n, |j, k| self.get(j, k))
    }
}

/// Complete bipartite graph on `C₁ = {0, …, ⌊nθ⌋ - 1}` and its complement.
pub fn bipartite(n: usize, theta: f64) -> Result<AdjacencyMatrix> {
    if n < 2 {
        return Err(param("n", "bipartite graph needs at least two vertices"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(param("theta", format!("{theta} not in (0, 1)")));
    }
    let m = (n as f64 * theta + 1e-9).floor() as usize;
    if m == 0 || m >= n {
        return Err(Error::DegeneratePartition(format!(
            "floor({n}·{theta}) = {m} leaves a side empty"
        )));
    }
    let mut w = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            if (j < m) != (k < m) {
                w[j * n + k] = 1.0;
            }
        }
    }
    Ok(AdjacencyMatrix::from_parts(
        n,
        w,
        Provenance::new("bipartite", json!({ "n": n, "theta": theta }), None),
    ))
}

/// Vertex ranges of the blocks cut at `⌊σ_k n⌋`.
pub fn block_ranges(n: usize, breaks: &[f64]) -> Result<Vec<std::ops::Range<usize>>> {
    let mut cuts = vec![0usize];
    for &s in breaks {
        if !(s > 0.0 && s < 1.0) {
            return Err(param("sigma", format!("{s} not in (0, 1)")));
        }
        cuts.push((s * n as f64 + 1e-9).floor() as usize);
    }
    cuts.push(n);
    let mut out = Vec::with_capacity(cuts.len() - 1);
    for w in cuts.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::DegeneratePartition(format!(
                "block [{}, {}) is empty at n = {n}",
                w[0], w[1]
            )));
        }
        out.push(w[0]..w[1]);
    }
    Ok(out)
}

/// Complete blocks joined by one bridge from the last vertex of each block to
/// the first vertex of the next.
pub fn weakly_connected_blocks(n: usize, breaks: &[f64]) -> Result<AdjacencyMatrix> {
    if n == 0 {
        return Err(param("n", "must be at least 1"));
    }
    let blocks = block_ranges(n, breaks)?;
    let mut w = vec![0.0; n * n];
    for b in &blocks {
        for j in b.clone() {
            for k in b.clone() {
                if j != k {
                    w[j * n + k] = 1.0;
                }
            }
        }
    }
    for pair in blocks.windows(2) {
        let (a, b) = (pair[0].end - 1, pair[1].start);
        w[a * n + b] = 1.0;
        w[b * n + a] = 1.0;
    }
    Ok(AdjacencyMatrix::from_parts(
        n,
        w,
        Provenance::new("weakly_connected_blocks", json!({ "n": n, "sigma": breaks }), None),
    ))
}

/// `G(n, p)`: independent Bernoulli(p) edges. Row `j` draws its pairs `k > j`
/// from its own keyed stream.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<AdjacencyMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(param("p", format!("{p} not in [0, 1]")));
    }
    let mut w = vec![0.0; n * n];
    for j in 0..n {
        let mut r = rng::stream(seed, "erdos_renyi", j as u64);
        for k in j + 1..n {
            if rng::open_unit(&mut r) < p {
                w[j * n + k] = 1.0;
                w[k * n + j] = 1.0;
            }
        }
    }
    Ok(AdjacencyMatrix::from_parts(
        n,
        w,
        Provenance::new("erdos_renyi", json!({ "n": n, "p": p }), Some(seed)),
    ))
}

fn ring_distance(n: usize, j: usize, k: usize) -> usize {
    let d = j.abs_diff(k);
    d.min(n - d)
}

/// Neighbour count for a ring graph specified by a radius: `k = ⌊r n⌋ + 1`,
/// so that `dist < k` keeps every vertex within distance `r n`.
pub fn k_from_radius(n: usize, r: f64) -> usize {
    (r * n as f64 + 1e-9).floor() as usize + 1
}

fn check_ring(n: usize, k: usize) -> Result<()> {
    if k < 1 || 2 * k >= n {
        return Err(param("k", format!("need 1 <= k < n/2, got k = {k}, n = {n}")));
    }
    Ok(())
}

/// Ring lattice: `j ~ l` iff `dist(j, l) < k` on the cycle.
pub fn k_nearest_ring(n: usize, k: usize) -> Result<AdjacencyMatrix> {
    check_ring(n, k)?;
    let mut w = vec![0.0; n * n];
    for j in 0..n {
        for l in 0..n {
            if j != l && ring_distance(n, j, l) < k {
                w[j * n + l] = 1.0;
            }
        }
    }
    Ok(AdjacencyMatrix::from_parts(
        n,
        w,
        Provenance::new("k_nearest_ring", json!({ "n": n, "k": k }), None),
    ))
}

const REWIRE_ATTEMPTS: usize = 100;

/// Watts–Strogatz rewiring of the `k`-nearest ring.
///
/// Ring edges `(j, j + d mod n)` are visited for `j` ascending and
/// `d = 1..k-1`. With probability `p_rewire` the far endpoint is detached and
/// replaced by a uniform vertex that is neither `j`, a current neighbour of
/// `j`, nor the old endpoint.
pub fn watts_strogatz(n: usize, k: usize, p_rewire: f64, seed: u64) -> Result<AdjacencyMatrix> {
    Ok(watts_strogatz_counted(n, k, p_rewire, seed)?.0)
}

/// Uniform vertex other than `j` and `far` that is not adjacent to `j`, by rejection.
fn rewire_target<R: Rng>(a: &AdjacencyMatrix, j: usize, far: usize, r: &mut R) -> Result<usize> {
    let n = a.n;
    for _ in 0..REWIRE_ATTEMPTS {
        let t = r.random_range(0..n);
        if t != j && t != far && a.weights[j * n + t] == 0.0 {
            return Ok(t);
        }
    }
    Err(Error::RewireExhausted {
        j,
        k: far,
        attempts: REWIRE_ATTEMPTS,
    })
}

pub(crate) fn watts_strogatz_counted(n: usize, k: usize, p_rewire: f64, seed: u64) -> Result<(AdjacencyMatrix, usize)> {
    if !(0.0..=1.0).contains(&p_rewire) {
        return Err(param("p_rewire", format!("{p_rewire} not in [0, 1]")));
    }
    let mut a = k_nearest_ring(n, k)?;
    let mut r = rng::stream(seed, "watts_strogatz", 0);
    let mut rewired = 0;
    for j in 0..n {
        for d in 1..k {
            let far = (j + d) % n;
            if rng::open_unit(&mut r) >= p_rewire {
                continue;
            }
            let t = rewire_target(&a, j, far, &mut r)?;
            a.weights[j * n + far] = 0.0;
            a.weights[far * n + j] = 0.0;
            a.weights[j * n + t] = 1.0;
            a.weights[t * n + j] = 1.0;
            rewired += 1;
        }
    }
    a.meta = Provenance::new(
        "watts_strogatz",
        json!({ "n": n, "k": k, "p_rewire": p_rewire }),
        Some(seed),
    );
    Ok((a, rewired))
}
