//! Graphons: symmetric kernels on the unit square.
//!
//! A [`Graphon`] is one of the closed-form families below, a [`StepGraphon`]
//! on a uniform partition, a pointwise trim `min{level, scale·W}` of another
//! graphon, or a right-continuous [`Schedule`] of static graphons in time.

use crate::error::{param, Error, Result};
use crate::quad::{self, Rect};

/// Sample points are kept inside `[EPS, 1 - EPS]`.
pub const EPS: f64 = 1e-12;

const CELL_TOL: f64 = 1e-10;
const FINE_TOL: f64 = 1e-12;

/// Value that is either finite or known to diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Finite(f64),
    Divergent,
}

impl Bound {
    pub fn finite(self) -> Option<f64> {
        match self {
            Bound::Finite(v) => Some(v),
            Bound::Divergent => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Inf,
}

impl Norm {
    pub fn name(&self) -> &'static str {
        match self {
            Norm::L1 => "L1",
            Norm::L2 => "L2",
            Norm::Inf => "Linf",
        }
    }
}

/// How [`Graphon::trim`] caps a kernel at size `n` with exponent `α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrimMode {
    /// `min{n^α, W}`
    Level,
    /// `min{1, n^{-α} W}`
    Density,
}

/// Piecewise-constant kernel on the uniform partition of size `n`.
///
/// Values are stored row-major. Entries may be signed; graphons built from a
/// step graphon additionally require nonnegative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGraphon {
    n: usize,
    values: Vec<f64>,
}

impl StepGraphon {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(param("n", "step graphon needs at least one cell"));
        }
        if values.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                got: values.len(),
            });
        }
        for j in 0..n {
            for k in 0..n {
                let v = values[j * n + k];
                if !v.is_finite() {
                    return Err(param("values", format!("non-finite entry at ({j}, {k})")));
                }
                if v != values[k * n + j] {
                    return Err(param("values", format!("asymmetric entry at ({j}, {k})")));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(n, values)
    }

    /// Builds the symmetric grid from `f(j, k)` evaluated for `j <= k`.
    pub fn from_upper<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Self {
        let mut values = vec![0.0; n * n];
        for j in 0..n {
            for k in j..n {
                let v = f(j, k);
                values[j * n + k] = v;
                values[k * n + j] = v;
            }
        }
        Self { n, values }
    }

    pub fn try_from_upper<F: FnMut(usize, usize) -> Result<f64>>(n: usize, mut f: F) -> Result<Self> {
        let mut values = vec![0.0; n * n];
        for j in 0..n {
            for k in j..n {
                let v = f(j, k)?;
                values[j * n + k] = v;
                values[k * n + j] = v;
            }
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.n + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn l1(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.abs()).sum();
        s / (self.n * self.n) as f64
    }

    pub fn l2(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s / (self.n * self.n) as f64).sqrt()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Signed difference `self - other` on a common partition.
    pub fn sub(&self, other: &StepGraphon) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(Self {
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// The same step function on the finer partition of size `m`.
    pub fn refine(&self, m: usize) -> Result<Self> {
        if m == 0 || m % self.n != 0 {
            return Err(Error::Partition {
                coarse: self.n,
                fine: m,
            });
        }
        let f = m / self.n;
        Ok(Self::from_upper(m, |j, k| self.get(j / f, k / f)))
    }

    /// Relabels vertices: entry `(j, k)` of the result is entry `(perm[j], perm[k])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                values[j * n + k] = self.get(perm[j], perm[k]);
            }
        }
        Self { n, values }
    }

    fn index(&self, x: f64) -> usize {
        ((x * self.n as f64) as usize).min(self.n - 1)
    }

    /// Fractions of cell `j` of the size-`n` partition covered by each step cell.
    ///
    /// Computed in integer units of `1/(n·self.n)` so that nested partitions
    /// give weights of exactly one.
    fn overlap(&self, n: usize, j: usize) -> Vec<(usize, f64)> {
        let (lo, hi) = (j * self.n, (j + 1) * self.n);
        let first = lo / n;
        let last = (hi - 1) / n;
        (first..=last)
            .filter_map(|a| {
                let (alo, ahi) = (a * n, (a + 1) * n);
                let len = hi.min(ahi).saturating_sub(lo.max(alo));
                (len > 0).then(|| (a, len as f64 / self.n as f64))
            })
            .collect()
    }

    fn cell_mean(&self, n: usize, j: usize, k: usize) -> f64 {
        if n == self.n {
            return self.get(j, k);
        }
        let wx = self.overlap(n, j);
        let wy = self.overlap(n, k);
        let mut acc = 0.0;
        for &(a, fa) in &wx {
            let mut row = 0.0;
            for &(b, fb) in &wy {
                row += fb * self.get(a, b);
            }
            acc += fa * row;
        }
        acc
    }
}

/// One segment of a [`Schedule`]: `graphon` is active on `[start, next start)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub graphon: Graphon,
}

/// Right-continuous piecewise-constant sequence of static graphons up to `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    segments: Vec<Segment>,
    horizon: f64,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>, horizon: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(param("segments", "schedule needs at least one segment"));
        }
        for w in segments.windows(2) {
            if !(w[1].start > w[0].start) {
                return Err(param("segments", "switch times must be strictly increasing"));
            }
        }
        for s in &segments {
            if !s.start.is_finite() {
                return Err(param("segments", "non-finite switch time"));
            }
            if s.graphon.is_time_dependent() {
                return Err(param("segments", "nested schedules are not supported"));
            }
        }
        let last = segments.last().map(|s| s.start).unwrap_or(0.0);
        if !(horizon > last) {
            return Err(param("horizon", "must exceed the last switch time"));
        }
        Ok(Self { segments, horizon })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn start(&self) -> f64 {
        self.segments[0].start
    }

    /// Index of the segment active at `t`.
    ///
    /// Times within a relative `1e-9` of a switch count as the switch itself,
    /// so grid points computed as `k·dt` land on the new segment.
    pub fn active_index(&self, t: f64) -> Result<usize> {
        let slack = 1e-9 * self.horizon.abs().max(1.0);
        if !(t >= self.start() - slack && t <= self.horizon + slack) {
            return Err(Error::Schedule {
                t,
                start: self.start(),
                end: self.horizon,
            });
        }
        let idx = self
            .segments
            .iter()
            .rposition(|s| t >= s.start - slack)
            .unwrap_or(0);
        Ok(idx)
    }

    pub fn active(&self, t: f64) -> Result<&Graphon> {
        Ok(&self.segments[self.active_index(t)?].graphon)
    }
}

/// A graphon. Construct through the checked constructors.
#[derive(Debug, Clone, PartialEq)]
pub enum Graphon {
    Constant { p: f64 },
    Bipartite { theta: f64 },
    BlockDiagonal { breaks: Vec<f64> },
    KNearestRing { r: f64 },
    SmallWorld { p: f64, r: f64 },
    UniformAttachment,
    PreferentialAttachment { c: f64 },
    PowerLaw { nu: f64 },
    SumPowerLaw { mu: f64 },
    Step(StepGraphon),
    /// `min{level, scale·inner}`
    Trim { inner: Box<Graphon>, level: f64, scale: f64 },
    Schedule(Schedule),
}

fn open_unit_param(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(param(name, format!("{v} not in (0, 1)")))
    }
}

impl Graphon {
    pub fn constant(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(param("p", format!("{p} not in [0, 1]")));
        }
        Ok(Graphon::Constant { p })
    }

    pub fn bipartite(theta: f64) -> Result<Self> {
        open_unit_param("theta", theta)?;
        Ok(Graphon::Bipartite { theta })
    }

    pub fn block_diagonal(breaks: Vec<f64>) -> Result<Self> {
        for &s in &breaks {
            open_unit_param("sigma", s)?;
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(param("sigma", "breakpoints must be strictly increasing"));
        }
        Ok(Graphon::BlockDiagonal { breaks })
    }

    /// Breakpoints `k/m`, `k = 1..m-1`, for `m` equal blocks.
    pub fn equal_blocks(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(param("blocks", "need at least one block"));
        }
        Self::block_diagonal((1..m).map(|k| k as f64 / m as f64).collect())
    }

    pub fn k_nearest_ring(r: f64) -> Result<Self> {
        open_unit_param("r", r)?;
        Ok(Graphon::KNearestRing { r })
    }

    pub fn small_world(p: f64, r: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return Err(param("p", format!("{p} not in [0, 0.5]")));
        }
        open_unit_param("r", r)?;
        Ok(Graphon::SmallWorld { p, r })
    }

    pub fn uniform_attachment() -> Self {
        Graphon::UniformAttachment
    }

    pub fn preferential_attachment(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(param("c", format!("{c} must be positive")));
        }
        Ok(Graphon::PreferentialAttachment { c })
    }

    pub fn power_law(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu < 0.5) {
            return Err(param("nu", format!("{nu} not in (0, 1/2)")));
        }
        Ok(Graphon::PowerLaw { nu })
    }

    pub fn sum_power_law(mu: f64) -> Result<Self> {
        open_unit_param("mu", mu)?;
        Ok(Graphon::SumPowerLaw { mu })
    }

    pub fn step(s: StepGraphon) -> Result<Self> {
        if s.values.iter().any(|&v| v < 0.0) {
            return Err(param("values", "graphon entries must be nonnegative"));
        }
        Ok(Graphon::Step(s))
    }

    pub fn schedule(segments: Vec<Segment>, horizon: f64) -> Result<Self> {
        Ok(Graphon::Schedule(Schedule::new(segments, horizon)?))
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Graphon::Schedule(_))
    }

    /// Switch times strictly inside the schedule, empty for static graphons.
    pub fn switch_times(&self) -> Vec<f64> {
        match self {
            Graphon::Schedule(s) => s.segments.iter().skip(1).map(|g| g.start).collect(),
            _ => Vec::new(),
        }
    }

    /// The static graphon active at time `t`.
    pub fn at(&self, t: f64) -> Result<&Graphon> {
        match self {
            Graphon::Schedule(s) => s.active(t),
            g => Ok(g),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Graphon::Constant { .. } => "constant",
            Graphon::Bipartite { .. } => "bipartite",
            Graphon::BlockDiagonal { .. } => "block_diagonal",
            Graphon::KNearestRing { .. } => "k_nearest_ring",
            Graphon::SmallWorld { .. } => "small_world",
            Graphon::UniformAttachment => "uniform_attachment",
            Graphon::PreferentialAttachment { .. } => "preferential_attachment",
            Graphon::PowerLaw { .. } => "power_law",
            Graphon::SumPowerLaw { .. } => "sum_power_law",
            Graphon::Step(_) => "step",
            Graphon::Trim { .. } => "trim",
            Graphon::Schedule(_) => "schedule",
        }
    }

    /// `d_ν = (1 - 2ν)²`
    pub fn power_law_normalizer(nu: f64) -> f64 {
        (1.0 - 2.0 * nu).powi(2)
    }

    /// `d_μ` with `∬ d_μ (x + y)^{-μ} = 1`.
    pub fn sum_power_law_normalizer(mu: f64) -> f64 {
        1.0 / sum_power_integral(mu)
    }

    /// `W(t, x, y)` for `x, y ∈ [0, 1]`.
    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::Domain { x, y });
        }
        let g = self.at(t)?;
        if g.singular_at(x, y) {
            return Err(Error::Domain { x, y });
        }
        Ok(g.kernel(x, y))
    }

    fn singular_at(&self, x: f64, y: f64) -> bool {
        match self {
            Graphon::PowerLaw { .. } | Graphon::PreferentialAttachment { .. } => x == 0.0 || y == 0.0,
            Graphon::SumPowerLaw { .. } => x + y == 0.0,
            Graphon::Trim { inner, .. } => inner.singular_at(x, y),
            _ => false,
        }
    }

    /// Static kernel at an interior point; no checks.
    pub(crate) fn kernel(&self, x: f64, y: f64) -> f64 {
        match self {
            Graphon::Constant { p } => *p,
            Graphon::Bipartite { theta } => {
                if (x < *theta) != (y < *theta) {
                    1.0
                } else {
                    0.0
                }
            }
            Graphon::BlockDiagonal { breaks } => {
                let bx = breaks.partition_point(|&s| s <= x);
                let by = breaks.partition_point(|&s| s <= y);
                if bx == by {
                    1.0
                } else {
                    0.0
                }
            }
            Graphon::KNearestRing { r } => ring_indicator(*r, x, y),
            Graphon::SmallWorld { p, r } => p + (1.0 - 2.0 * p) * ring_indicator(*r, x, y),
            Graphon::UniformAttachment => 1.0 - x.max(y),
            Graphon::PreferentialAttachment { c } => -(-c * (x.ln() * y.ln())).exp_m1(),
            Graphon::PowerLaw { nu } => Self::power_law_normalizer(*nu) * (x * y).powf(-nu),
            Graphon::SumPowerLaw { mu } => Self::sum_power_law_normalizer(*mu) * (x + y).powf(-mu),
            Graphon::Step(s) => s.get(s.index(x), s.index(y)),
            Graphon::Trim { inner, level, scale } => level.min(scale * inner.kernel(x, y)),
            Graphon::Schedule(s) => s.segments[0].graphon.kernel(x, y),
        }
    }

    /// Supremum of the static kernel.
    pub fn sup(&self) -> Bound {
        match self {
            Graphon::Constant { p } => Bound::Finite(*p),
            Graphon::Bipartite { .. } | Graphon::BlockDiagonal { .. } | Graphon::KNearestRing { .. } => {
                Bound::Finite(1.0)
            }
            Graphon::SmallWorld { p, .. } => Bound::Finite(1.0 - p),
            Graphon::UniformAttachment | Graphon::PreferentialAttachment { .. } => Bound::Finite(1.0),
            Graphon::PowerLaw { .. } | Graphon::SumPowerLaw { .. } => Bound::Divergent,
            Graphon::Step(s) => Bound::Finite(s.sup_abs()),
            Graphon::Trim { inner, level, scale } => match inner.sup() {
                Bound::Finite(v) => Bound::Finite(level.min(scale * v)),
                Bound::Divergent => Bound::Finite(*level),
            },
            Graphon::Schedule(s) => {
                let mut m = 0.0f64;
                for seg in &s.segments {
                    match seg.graphon.sup() {
                        Bound::Finite(v) => m = m.max(v),
                        Bound::Divergent => return Bound::Divergent,
                    }
                }
                Bound::Finite(m)
            }
        }
    }

    /// Pointwise cap: level-trim `min{n^α, W}` or density-trim `min{1, n^{-α} W}`.
    pub fn trim(&self, n: usize, alpha: f64, mode: TrimMode) -> Result<Graphon> {
        if n == 0 {
            return Err(param("n", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(param("alpha", format!("{alpha} not in [0, 1)")));
        }
        let na = (n as f64).powf(alpha);
        Ok(match mode {
            TrimMode::Level => self.capped(na, 1.0),
            TrimMode::Density => self.capped(1.0, 1.0 / na),
        })
    }

    /// `min{level, scale·W}` with nested caps and trivial cases folded.
    pub fn capped(&self, level: f64, scale: f64) -> Graphon {
        match self {
            Graphon::Constant { p } => Graphon::Constant {
                p: level.min(scale * p),
            },
            Graphon::Trim {
                inner,
                level: l,
                scale: s,
            } => inner.capped(level.min(scale * l), scale * s),
            Graphon::Step(st) => Graphon::Step(st.map(|v| level.min(scale * v))),
            Graphon::Schedule(sc) => Graphon::Schedule(Schedule {
                segments: sc
                    .segments
                    .iter()
                    .map(|seg| Segment {
                        start: seg.start,
                        graphon: seg.graphon.capped(level, scale),
                    })
                    .collect(),
                horizon: sc.horizon,
            }),
            g => {
                if scale == 1.0 && matches!(g.sup(), Bound::Finite(v) if v <= level) {
                    g.clone()
                } else {
                    Graphon::Trim {
                        inner: Box::new(g.clone()),
                        level,
                        scale,
                    }
                }
            }
        }
    }

    /// Mean of `W(t, ·, ·)` over cell `(j, k)` of the uniform partition of size `n`.
    pub fn cell_average(&self, t: f64, n: usize, j: usize, k: usize) -> Result<f64> {
        if n == 0 {
            return Err(param("n", "must be at least 1"));
        }
        if j >= n || k >= n {
            return Err(param("cell", format!("({j}, {k}) outside partition of size {n}")));
        }
        self.at(t)?.cell_mean(n, j, k)
    }

    /// All cell averages at size `n` as a step graphon.
    pub fn cell_average_grid(&self, t: f64, n: usize) -> Result<StepGraphon> {
        if n == 0 {
            return Err(param("n", "must be at least 1"));
        }
        let g = self.at(t)?;
        let h = 1.0 / n as f64;
        match g {
            Graphon::PowerLaw { nu } => {
                let d = Self::power_law_normalizer(*nu);
                let m: Vec<f64> = (0..n).map(|j| mean_pow(j as f64 * h, h, *nu)).collect();
                Ok(StepGraphon::from_upper(n, |j, k| d * m[j] * m[k]))
            }
            Graphon::SumPowerLaw { .. } => {
                let diag = (0..2 * n - 1)
                    .map(|s| g.cell_mean(n, s.min(n - 1), s - s.min(n - 1)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(StepGraphon::from_upper(n, |j, k| diag[j + k]))
            }
            Graphon::Trim { inner, .. } if matches!(**inner, Graphon::SumPowerLaw { .. }) => {
                let diag = (0..2 * n - 1)
                    .map(|s| g.cell_mean(n, s.min(n - 1), s - s.min(n - 1)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(StepGraphon::from_upper(n, |j, k| diag[j + k]))
            }
            Graphon::KNearestRing { .. } | Graphon::SmallWorld { .. } => {
                let band = (0..n).map(|d| g.cell_mean(n, d, 0)).collect::<Result<Vec<_>>>()?;
                Ok(StepGraphon::from_upper(n, |j, k| band[k - j]))
            }
            _ => StepGraphon::try_from_upper(n, |j, k| g.cell_mean(n, j, k)),
        }
    }

    fn cell_mean(&self, n: usize, j: usize, k: usize) -> Result<f64> {
        // every kernel is symmetric; fixing the order makes the averages symmetric bit for bit
        let (j, k) = (j.min(k), j.max(k));
        let h = 1.0 / n as f64;
        if let Some((v0, v1)) = self.two_values() {
            return Ok(v0 + (v1 - v0) * self.support_mean(n, j, k));
        }
        Ok(match self {
            Graphon::Constant { p } => *p,
            Graphon::UniformAttachment => {
                if j == k {
                    1.0 - (j as f64 * h + 2.0 * h / 3.0)
                } else {
                    1.0 - (j.max(k) as f64 + 0.5) * h
                }
            }
            Graphon::PreferentialAttachment { c } => preferential_cell_mean(*c, n, j, k)?,
            Graphon::PowerLaw { nu } => {
                Self::power_law_normalizer(*nu) * mean_pow(j as f64 * h, h, *nu) * mean_pow(k as f64 * h, h, *nu)
            }
            Graphon::SumPowerLaw { mu } => {
                let u0 = (j + k) as f64 * h;
                Self::sum_power_law_normalizer(*mu) * triangular_pow_mean(u0, h, *mu, f64::INFINITY, 1.0)
            }
            Graphon::Step(s) => s.cell_mean(n, j, k),
            Graphon::Trim { inner, level, scale } => trim_cell_mean(inner, *level, *scale, n, j, k)?,
            Graphon::Schedule(_) => return Err(Error::TimeDependent("cell average without a time")),
            Graphon::Bipartite { .. }
            | Graphon::BlockDiagonal { .. }
            | Graphon::KNearestRing { .. }
            | Graphon::SmallWorld { .. } => unreachable!("handled as two-valued"),
        })
    }

    /// Off-support and on-support values of the two-valued kinds.
    fn two_values(&self) -> Option<(f64, f64)> {
        match self {
            Graphon::Bipartite { .. } | Graphon::BlockDiagonal { .. } | Graphon::KNearestRing { .. } => {
                Some((0.0, 1.0))
            }
            Graphon::SmallWorld { p, .. } => Some((*p, 1.0 - p)),
            _ => None,
        }
    }

    /// Mean of the support indicator over cell `(j, k)`.
    fn support_mean(&self, n: usize, j: usize, k: usize) -> f64 {
        let nf = n as f64;
        let frac = |s: f64, i: usize| (s * nf - i as f64).clamp(0.0, 1.0);
        match self {
            Graphon::Bipartite { theta } => {
                let fx = frac(*theta, j);
                let fy = frac(*theta, k);
                fx * (1.0 - fy) + (1.0 - fx) * fy
            }
            Graphon::BlockDiagonal { breaks } => {
                let mut acc = 0.0;
                let mut lo = 0.0;
                for hi in breaks.iter().copied().chain(std::iter::once(1.0)) {
                    let ox = frac(hi, j) - frac(lo, j);
                    let oy = frac(hi, k) - frac(lo, k);
                    acc += ox * oy;
                    lo = hi;
                }
                acc
            }
            Graphon::KNearestRing { r } | Graphon::SmallWorld { r, .. } => {
                ring_cell_mean(*r, n, j, k)
            }
            _ => unreachable!(),
        }
    }

    /// Measure of the support of a two-valued kind.
    fn support_measure(&self) -> f64 {
        match self {
            Graphon::Bipartite { theta } => 2.0 * theta * (1.0 - theta),
            Graphon::BlockDiagonal { breaks } => {
                let mut acc = 0.0;
                let mut lo = 0.0;
                for hi in breaks.iter().copied().chain(std::iter::once(1.0)) {
                    acc += (hi - lo) * (hi - lo);
                    lo = hi;
                }
                acc
            }
            Graphon::KNearestRing { r } | Graphon::SmallWorld { r, .. } => (2.0 * r).min(1.0),
            _ => unreachable!(),
        }
    }

    /// Measure of the support slice `{y : K(x, y) = 1}` of a two-valued kind.
    fn support_slice(&self, x: f64) -> f64 {
        match self {
            Graphon::Bipartite { theta } => {
                if x < *theta {
                    1.0 - theta
                } else {
                    *theta
                }
            }
            Graphon::BlockDiagonal { breaks } => {
                let b = breaks.partition_point(|&s| s <= x);
                let lo = if b == 0 { 0.0 } else { breaks[b - 1] };
                let hi = breaks.get(b).copied().unwrap_or(1.0);
                hi - lo
            }
            Graphon::KNearestRing { r } | Graphon::SmallWorld { r, .. } => (2.0 * r).min(1.0),
            _ => unreachable!(),
        }
    }

    /// Degree `∫₀¹ W(t, x, y) dy` at `x ∈ (0, 1)`.
    pub fn degree_function(&self, t: f64, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain { x, y: f64::NAN });
        }
        self.at(t)?.degree(x)
    }

    fn degree(&self, x: f64) -> Result<f64> {
        if let Some((v0, v1)) = self.two_values() {
            return Ok(v0 + (v1 - v0) * self.support_slice(x));
        }
        Ok(match self {
            Graphon::Constant { p } => *p,
            Graphon::UniformAttachment => 0.5 * (1.0 - x * x),
            Graphon::PreferentialAttachment { c } => {
                let q = -c * x.ln();
                q / (1.0 + q)
            }
            Graphon::PowerLaw { nu } => Self::power_law_normalizer(*nu) * x.powf(-nu) / (1.0 - nu),
            Graphon::SumPowerLaw { mu } => {
                Self::sum_power_law_normalizer(*mu) * ((x + 1.0).powf(1.0 - mu) - x.powf(1.0 - mu)) / (1.0 - mu)
            }
            Graphon::Step(s) => s.row(s.index(x)).iter().sum::<f64>() / s.n as f64,
            Graphon::Trim { inner, level, scale } => trim_degree(inner, *level, *scale, x)?,
            Graphon::Schedule(_) => return Err(Error::TimeDependent("degree without a time")),
            _ => unreachable!("handled as two-valued"),
        })
    }

    /// Supremum of the degree over the midpoints of a `grid`-point partition
    /// and the clamped endpoints `EPS`, `1 - EPS`.
    pub fn degree_sup(&self, t: f64, grid: usize) -> Result<Bound> {
        if grid < 2 {
            return Err(param("grid", "must be at least 2"));
        }
        let g = self.at(t)?;
        if matches!(g, Graphon::PowerLaw { .. }) {
            return Ok(Bound::Divergent);
        }
        let mut m = g.degree(EPS)?.max(g.degree(1.0 - EPS)?);
        for q in 0..grid {
            m = m.max(g.degree((q as f64 + 0.5) / grid as f64)?);
        }
        Ok(Bound::Finite(m))
    }

    /// `‖W(t)‖_p`. Exact where a closed form exists; otherwise the midpoint
    /// rule on a `grid × grid` partition.
    pub fn lp_norm(&self, t: f64, p: Norm, grid: usize) -> Result<Bound> {
        if grid < 2 {
            return Err(param("grid", "must be at least 2"));
        }
        let g = self.at(t)?;
        if p == Norm::Inf {
            return Ok(g.sup());
        }
        let (l1, l2sq) = match g {
            Graphon::Constant { p } => (*p, p * p),
            Graphon::Bipartite { .. }
            | Graphon::BlockDiagonal { .. }
            | Graphon::KNearestRing { .. }
            | Graphon::SmallWorld { .. } => {
                let (v0, v1) = g.two_values().unwrap();
                let m = g.support_measure();
                (v0 * (1.0 - m) + v1 * m, v0 * v0 * (1.0 - m) + v1 * v1 * m)
            }
            Graphon::UniformAttachment => (1.0 / 3.0, 1.0 / 6.0),
            Graphon::PreferentialAttachment { c } => {
                let l1 = quad::adaptive_1d(
                    &|x: f64| {
                        let q = -c * x.ln();
                        q / (1.0 + q)
                    },
                    0.0,
                    1.0,
                    FINE_TOL,
                )?;
                let l2 = quad::adaptive_1d(
                    &|x: f64| {
                        let q = -c * x.ln();
                        1.0 - 2.0 / (1.0 + q) + 1.0 / (1.0 + 2.0 * q)
                    },
                    0.0,
                    1.0,
                    FINE_TOL,
                )?;
                (l1, l2)
            }
            Graphon::PowerLaw { nu } => {
                let d = Self::power_law_normalizer(*nu);
                (d / (1.0 - nu).powi(2), d * d / (1.0 - 2.0 * nu).powi(2))
            }
            Graphon::SumPowerLaw { mu } => {
                let d = Self::sum_power_law_normalizer(*mu);
                (d * sum_power_integral(*mu), d * d * sum_power_integral(2.0 * mu))
            }
            Graphon::Step(s) => (s.l1(), s.l2().powi(2)),
            Graphon::Trim { inner, level, scale } => match inner.two_values() {
                Some((v0, v1)) => {
                    let (a, b) = (level.min(scale * v0), level.min(scale * v1));
                    let m = inner.support_measure();
                    (a * (1.0 - m) + b * m, a * a * (1.0 - m) + b * b * m)
                }
                None => midpoint_norms(g, grid),
            },
            Graphon::Schedule(_) => unreachable!("resolved by at()"),
        };
        Ok(Bound::Finite(match p {
            Norm::L1 => l1,
            Norm::L2 => l2sq.sqrt(),
            Norm::Inf => unreachable!(),
        }))
    }
}

fn midpoint_norms(g: &Graphon, grid: usize) -> (f64, f64) {
    let h = 1.0 / grid as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for a in 0..grid {
        let x = (a as f64 + 0.5) * h;
        for b in 0..grid {
            let v = g.kernel(x, (b as f64 + 0.5) * h);
            s1 += v.abs();
            s2 += v * v;
        }
    }
    let cells = (grid * grid) as f64;
    (s1 / cells, s2 / cells)
}

fn ring_indicator(r: f64, x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    if d.min(1.0 - d) <= r {
        1.0
    } else {
        0.0
    }
}

/// CDF of the triangular law centred at `c` with half-width `h`.
fn triangular_cdf(u: f64, c: f64, h: f64) -> f64 {
    let z = (u - c) / h;
    if z <= -1.0 {
        0.0
    } else if z <= 0.0 {
        0.5 * (1.0 + z) * (1.0 + z)
    } else if z < 1.0 {
        1.0 - 0.5 * (1.0 - z) * (1.0 - z)
    } else {
        1.0
    }
}

/// Mean of the ring indicator over a square cell: `u = x - y` is triangular on the cell.
fn ring_cell_mean(r: f64, n: usize, j: usize, k: usize) -> f64 {
    if r >= 0.5 {
        return 1.0;
    }
    let h = 1.0 / n as f64;
    let c = (j as f64 - k as f64) * h;
    let f = |u: f64| triangular_cdf(u, c, h);
    (f(r) - f(-r)) + (1.0 - f(1.0 - r)) + f(r - 1.0)
}

/// Mean of `x^{-ν}` over `[a, a + h]`.
fn mean_pow(a: f64, h: f64, nu: f64) -> f64 {
    let e = 1.0 - nu;
    if a == 0.0 {
        h.powf(-nu) / e
    } else {
        // b^e - a^e without cancellation
        a.powf(e) * (e * (h / a).ln_1p()).exp_m1() / (e * h)
    }
}

/// `∫_lo^hi (a + b u) u^{-μ} du`.
fn lin_pow(a: f64, b: f64, lo: f64, hi: f64, mu: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo > 2.0 * (hi - lo) {
        quad::gauss20(&|u: f64| (a + b * u) * u.powf(-mu), lo, hi)
    } else {
        let anti = |u: f64| a * u.powf(1.0 - mu) / (1.0 - mu) + b * u.powf(2.0 - mu) / (2.0 - mu);
        anti(hi) - anti(lo)
    }
}

/// Mean over a square cell with `x + y ∈ [u0, u0 + 2h]` of `min{cap, scale·u^{-μ}}`.
fn triangular_pow_mean(u0: f64, h: f64, mu: f64, cap: f64, scale: f64) -> f64 {
    let c = u0 + h;
    let end = u0 + 2.0 * h;
    let h2 = h * h;
    // below u_star the cap binds
    let u_star = if cap.is_finite() {
        (scale / cap).powf(1.0 / mu)
    } else {
        0.0
    };
    let mut acc = 0.0;
    for (lo, hi, a, b) in [(u0, c, -u0 / h2, 1.0 / h2), (c, end, end / h2, -1.0 / h2)] {
        let split = u_star.clamp(lo, hi);
        if split > lo {
            // ∫ (a + b u) du
            acc += cap * (a * (split - lo) + 0.5 * b * (split * split - lo * lo));
        }
        acc += scale * lin_pow(a, b, split, hi, mu);
    }
    acc
}

/// `∬_{[0,1]²} (x + y)^{-q} dx dy`.
fn sum_power_integral(q: f64) -> f64 {
    let delta = q - 1.0;
    if delta == 0.0 {
        2.0 * std::f64::consts::LN_2
    } else {
        // (2^{2-q} - 2) / ((1 - q)(2 - q)) with q = 1 + δ
        2.0 * (-delta * std::f64::consts::LN_2).exp_m1() / (-delta * (1.0 - delta))
    }
}

fn preferential_cell_mean(c: f64, n: usize, j: usize, k: usize) -> Result<f64> {
    let h = 1.0 / n as f64;
    let (x0, x1) = (j as f64 * h, (j + 1) as f64 * h);
    let (y0, y1) = (k as f64 * h, (k + 1) as f64 * h);
    // inner: mean over y of exp(-c ln x ln y) = y^q, q = -c ln x
    let inner = |x: f64| {
        let q1 = 1.0 - c * x.ln();
        (y1.powf(q1) - y0.powf(q1)) / (q1 * h)
    };
    let s = quad::adaptive_1d(&inner, x0, x1, CELL_TOL * h)?;
    Ok(1.0 - s / h)
}

fn trim_cell_mean(inner: &Graphon, level: f64, scale: f64, n: usize, j: usize, k: usize) -> Result<f64> {
    let phi = |v: f64| level.min(scale * v);
    if let Some((v0, v1)) = inner.two_values() {
        let (a, b) = (phi(v0), phi(v1));
        return Ok(a + (b - a) * inner.support_mean(n, j, k));
    }
    let h = 1.0 / n as f64;
    match inner {
        Graphon::Constant { p } => Ok(phi(*p)),
        Graphon::Step(s) => Ok(Graphon::Step(s.map(phi)).cell_mean(n, j, k)?),
        Graphon::PowerLaw { nu } => power_law_trim_mean(*nu, level, scale, n, j, k),
        Graphon::SumPowerLaw { mu } => {
            let d = Graphon::sum_power_law_normalizer(*mu);
            Ok(triangular_pow_mean((j + k) as f64 * h, h, *mu, level, scale * d))
        }
        _ => {
            if let Bound::Finite(s) = inner.sup() {
                if scale * s <= level {
                    return Ok(scale * inner.cell_mean(n, j, k)?);
                }
            }
            let rect = Rect {
                x0: j as f64 * h,
                x1: (j + 1) as f64 * h,
                y0: k as f64 * h,
                y1: (k + 1) as f64 * h,
            };
            quad::nested_mean_2d(&|x, y| level.min(scale * inner.kernel(x, y)), rect, CELL_TOL)
        }
    }
}

fn power_law_trim_mean(nu: f64, level: f64, scale: f64, n: usize, j: usize, k: usize) -> Result<f64> {
    let h = 1.0 / n as f64;
    let sd = scale * Graphon::power_law_normalizer(nu);
    if sd == 0.0 {
        return Ok(0.0);
    }
    let (x0, x1) = (j as f64 * h, (j + 1) as f64 * h);
    let (y0, y1) = (k as f64 * h, (k + 1) as f64 * h);
    let e = 1.0 - nu;
    // the cap binds where x·y <= kappa
    let kappa = (sd / level).powf(1.0 / nu);
    let slice = |x: f64| {
        let lo = (kappa / x).clamp(y0, y1);
        level * (lo - y0) + sd * x.powf(-nu) * (y1.powf(e) - lo.powf(e)) / e
    };
    let mut cuts = vec![x0];
    for c in [kappa / y1, if y0 > 0.0 { kappa / y0 } else { f64::INFINITY }] {
        if c > x0 && c < x1 {
            cuts.push(c);
        }
    }
    cuts.push(x1);
    let tol = CELL_TOL * h * h / cuts.len() as f64;
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        acc += quad::adaptive_1d(&slice, w[0], w[1], tol)?;
    }
    Ok(acc / (h * h))
}

fn trim_degree(inner: &Graphon, level: f64, scale: f64, x: f64) -> Result<f64> {
    let phi = |v: f64| level.min(scale * v);
    if let Some((v0, v1)) = inner.two_values() {
        let (a, b) = (phi(v0), phi(v1));
        return Ok(a + (b - a) * inner.support_slice(x));
    }
    match inner {
        Graphon::Constant { p } => Ok(phi(*p)),
        Graphon::Step(s) => Ok(s.row(s.index(x)).iter().map(|&v| phi(v)).sum::<f64>() / s.n as f64),
        Graphon::PowerLaw { nu } => {
            let sd = scale * Graphon::power_law_normalizer(*nu);
            let e = 1.0 - nu;
            let kappa = (sd / level).powf(1.0 / nu);
            let lo = (kappa / x).min(1.0);
            Ok(level * lo + sd * x.powf(-nu) * (1.0 - lo.powf(e)) / e)
        }
        _ => {
            if let Bound::Finite(s) = inner.sup() {
                if scale * s <= level {
                    return Ok(scale * inner.degree(x)?);
                }
            }
            quad::adaptive_1d(&|y: f64| level.min(scale * inner.kernel(x, y)), 0.0, 1.0, FINE_TOL)
        }
    }
}
