//! Networked SIR right-hand sides and fixed-step explicit Runge–Kutta integration.
//!
//! For node `j` with force `f_j = (1/n) Σ_k A_jk β_k i_k`:
//! `ds_j = -s_j f_j`, `di_j = s_j f_j - γ_j i_j`, `dr_j = γ_j i_j`.
//! The self-interaction variant adds `β_j s_j i_j` to the infection term.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::graphs::AdjacencyMatrix;

pub use crate::sampling::averaged_model_matrix;

/// Admissible initial data: components within this of the simplex.
const SUM_TOL: f64 = 1e-12;
/// Relative slack when locating switch times.
const SWITCH_SLACK: f64 = 1e-9;
/// Rows per parallel chunk in the force evaluation.
const PAR_ROWS: usize = 64;
const PAR_MIN_N: usize = 512;

/// Per-node compartments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirState {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl SirState {
    /// Validated state: equal lengths, entries in `[0, 1]`, `s + i + r = 1`.
    pub fn new(s: Vec<f64>, i: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let n = s.len();
        if i.len() != n || r.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: if i.len() != n { i.len() } else { r.len() },
            });
        }
        for node in 0..n {
            let (a, b, c) = (s[node], i[node], r[node]);
            if ![a, b, c].iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(Error::InitialData {
                    node,
                    reason: format!("({a}, {b}, {c}) outside [0, 1]"),
                });
            }
            if (a + b + c - 1.0).abs() > SUM_TOL {
                return Err(Error::InitialData {
                    node,
                    reason: format!("s + i + r = {}", a + b + c),
                });
            }
        }
        Ok(Self { s, i, r })
    }

    /// `s = 1 - i`, `r = 0`.
    pub fn from_infected(i: Vec<f64>) -> Result<Self> {
        let s = i.iter().map(|v| 1.0 - v).collect();
        let r = vec![0.0; i.len()];
        Self::new(s, i, r)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            s: vec![0.0; n],
            i: vec![0.0; n],
            r: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn max_sum_violation(&self) -> f64 {
        (0..self.n())
            .map(|j| (self.s[j] + self.i[j] + self.r[j] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(3 * self.n());
        y.extend_from_slice(&self.s);
        y.extend_from_slice(&self.i);
        y.extend_from_slice(&self.r);
        y
    }

    fn from_flat(y: &[f64]) -> Self {
        let n = y.len() / 3;
        Self {
            s: y[..n].to_vec(),
            i: y[n..2 * n].to_vec(),
            r: y[2 * n..].to_vec(),
        }
    }
}

fn locate(starts: &[f64], t: f64) -> usize {
    let slack = SWITCH_SLACK * t.abs().max(1.0);
    starts.partition_point(|&s| s <= t + slack).saturating_sub(1)
}

fn check_starts(starts: &[f64]) -> Result<()> {
    if starts.is_empty() {
        return Err(param("segments", "at least one segment required"));
    }
    if !starts.iter().all(|s| s.is_finite()) || starts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(param("segments", "start times must be finite and strictly increasing"));
    }
    Ok(())
}

/// Spatial profile of a rate on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(f64),
    /// `a + b·x`.
    Linear { a: f64, b: f64 },
    /// `value` on `[lo, hi)`, zero elsewhere.
    Interval { lo: f64, hi: f64, value: f64 },
    /// Step function on a uniform partition of size `len`.
    Cells(Vec<f64>),
}

impl Profile {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Profile::Constant(v) => v.is_finite() && *v >= 0.0,
            Profile::Linear { a, b } => a.is_finite() && b.is_finite() && *a >= 0.0 && a + b >= 0.0,
            Profile::Interval { lo, hi, value } => {
                value.is_finite() && *value >= 0.0 && 0.0 <= *lo && lo < hi && *hi <= 1.0
            }
            Profile::Cells(v) => !v.is_empty() && v.iter().all(|x| x.is_finite() && *x >= 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(param("rate", format!("{self:?} is not a bounded nonnegative profile")))
        }
    }

    /// Cell means on the uniform partition of size `n`.
    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn cell_means(&self, n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        match self {
            Profile::Constant(v) => vec![*v; n],
            Profile::Linear { a, b } => (0..n).map(|j| a + b * (j as f64 + 0.5) * h).collect(),
            Profile::Interval { lo, hi, value } => (0..n)
                .map(|j| {
                    let (x0, x1) = (j as f64 * h, (j + 1) as f64 * h);
                    let overlap = (x1.min(*hi) - x0.max(*lo)).max(0.0);
                    if overlap >= h * (1.0 - 1e-12) {
                        *value
                    } else {
                        value * overlap * n as f64
                    }
                })
                .collect(),
            Profile::Cells(v) => {
                let m = v.len();
                if m == n {
                    return v.clone();
                }
                // overlap of [j/n, (j+1)/n) with [q/m, (q+1)/m), in units of 1/(nm)
                (0..n)
                    .map(|j| {
                        let (lo, hi) = (j * m, (j + 1) * m);
                        let mut acc = 0.0;
                        for (q, vq) in v.iter().enumerate().take(hi.div_ceil(n)).skip(lo / n) {
                            let w = hi.min((q + 1) * n).saturating_sub(lo.max(q * n));
                            acc += w as f64 * vq;
                        }
                        acc / m as f64
                    })
                    .collect()
            }
        }
    }
}

/// Rate field on `[0, T] × [0, 1]`, piecewise constant in time and right-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct RateField {
    segments: Vec<(f64, Profile)>,
}

impl RateField {
    pub fn constant(v: f64) -> Result<Self> {
        Self::schedule(vec![(0.0, Profile::Constant(v))])
    }

    pub fn profile(p: Profile) -> Result<Self> {
        Self::schedule(vec![(0.0, p)])
    }

    pub fn schedule(segments: Vec<(f64, Profile)>) -> Result<Self> {
        let starts: Vec<f64> = segments.iter().map(|s| s.0).collect();
        check_starts(&starts)?;
        for (_, p) in &segments {
            p.validate()?;
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[(f64, Profile)] {
        &self.segments
    }
}

/// Per-node rates `β_j(t)`, `γ_j(t)`, piecewise constant in time.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    n: usize,
    starts: Vec<f64>,
    beta: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
}

impl CoefficientField {
    pub fn constant(n: usize, beta: f64, gamma: f64) -> Result<Self> {
        Self::new(n, vec![0.0], vec![vec![beta; n]], vec![vec![gamma; n]])
    }

    pub fn new(n: usize, starts: Vec<f64>, beta: Vec<Vec<f64>>, gamma: Vec<Vec<f64>>) -> Result<Self> {
        check_starts(&starts)?;
        if beta.len() != starts.len() || gamma.len() != starts.len() {
            return Err(Error::Dimension {
                expected: starts.len(),
                got: beta.len().min(gamma.len()),
            });
        }
        for v in beta.iter().chain(&gamma) {
            if v.len() != n {
                return Err(Error::Dimension { expected: n, got: v.len() });
            }
            if !v.iter().all(|x| x.is_finite() && *x >= 0.0) {
                return Err(param("coefficients", "rates must be finite and nonnegative"));
            }
        }
        Ok(Self { n, starts, beta, gamma })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.starts
    }

    /// `(β(t), γ(t))` per node.
    pub fn at(&self, t: f64) -> (&[f64], &[f64]) {
        let q = locate(&self.starts, t);
        (&self.beta[q], &self.gamma[q])
    }
}

/// Cell averages of `β` and `γ` on the uniform partition of size `n`.
pub fn coefficient_averages(beta: &RateField, gamma: &RateField, n: usize) -> Result<CoefficientField> {
    if n == 0 {
        return Err(param("n", "must be at least 1"));
    }
    let mut starts: Vec<f64> = beta.segments.iter().chain(&gamma.segments).map(|s| s.0).collect();
    starts.sort_by(f64::total_cmp);
    starts.dedup();
    let pick = |f: &RateField, t: f64| {
        let fs: Vec<f64> = f.segments.iter().map(|s| s.0).collect();
        f.segments[locate(&fs, t)].1.cell_means(n)
    };
    let b = starts.iter().map(|&t| pick(beta, t)).collect();
    let g = starts.iter().map(|&t| pick(gamma, t)).collect();
    CoefficientField::new(n, starts, b, g)
}

/// Coupling matrix, possibly switching in time (right-continuous).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    starts: Vec<f64>,
    matrices: Vec<AdjacencyMatrix>,
}

impl Network {
    pub fn fixed(a: AdjacencyMatrix) -> Self {
        Self {
            starts: vec![0.0],
            matrices: vec![a],
        }
    }

    pub fn scheduled(segments: Vec<(f64, AdjacencyMatrix)>) -> Result<Self> {
        let starts: Vec<f64> = segments.iter().map(|s| s.0).collect();
        check_starts(&starts)?;
        let n = segments[0].1.n();
        if let Some((_, a)) = segments.iter().find(|s| s.1.n() != n) {
            return Err(Error::Dimension { expected: n, got: a.n() });
        }
        Ok(Self {
            starts,
            matrices: segments.into_iter().map(|s| s.1).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.matrices[0].n()
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.starts
    }

    pub fn matrices(&self) -> &[AdjacencyMatrix] {
        &self.matrices
    }

    pub fn at(&self, t: f64) -> &AdjacencyMatrix {
        &self.matrices[locate(&self.starts, t)]
    }
}

impl From<AdjacencyMatrix> for Network {
    fn from(a: AdjacencyMatrix) -> Self {
        Self::fixed(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsKind {
    Standard,
    SelfInteraction,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() / 4 * 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Reusable buffers for one right-hand side evaluation.
struct Workspace {
    weighted: Vec<f64>,
    force: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            weighted: vec![0.0; n],
            force: vec![0.0; n],
        }
    }
}

/// Writes the derivative of `y = [s | i | r]` into `out`.
fn eval_rhs(kind: RhsKind, a: &AdjacencyMatrix, beta: &[f64], gamma: &[f64], y: &[f64], out: &mut [f64], ws: &mut Workspace) {
    let n = a.n();
    let (s, rest) = y.split_at(n);
    let i = &rest[..n];
    for ((w, b), x) in ws.weighted.iter_mut().zip(beta).zip(i) {
        *w = b * x;
    }
    let inv_n = 1.0 / n as f64;
    let weighted = &ws.weighted;
    let row_force = |j: usize| dot(a.row(j), weighted) * inv_n;
    if n >= PAR_MIN_N {
        ws.force.par_chunks_mut(PAR_ROWS).enumerate().for_each(|(c, chunk)| {
            for (q, f) in chunk.iter_mut().enumerate() {
                *f = row_force(c * PAR_ROWS + q);
            }
        });
    } else {
        for (j, f) in ws.force.iter_mut().enumerate() {
            *f = row_force(j);
        }
    }
    if kind == RhsKind::SelfInteraction {
        for (f, w) in ws.force.iter_mut().zip(weighted) {
            *f += w;
        }
    }
    let (ds, rest) = out.split_at_mut(n);
    let (di, dr) = rest.split_at_mut(n);
    for j in 0..n {
        let inf = s[j] * ws.force[j];
        let rec = gamma[j] * i[j];
        ds[j] = -inf;
        di[j] = inf - rec;
        dr[j] = rec;
    }
}

fn rhs(kind: RhsKind, state: &SirState, a: &AdjacencyMatrix, coeff: &CoefficientField, t: f64) -> Result<SirState> {
    let n = state.n();
    if a.n() != n || state.i.len() != n || state.r.len() != n {
        return Err(Error::Dimension { expected: n, got: a.n() });
    }
    if coeff.n() != n {
        return Err(Error::Dimension { expected: n, got: coeff.n() });
    }
    let (beta, gamma) = coeff.at(t);
    let mut out = vec![0.0; 3 * n];
    eval_rhs(kind, a, beta, gamma, &state.to_flat(), &mut out, &mut Workspace::new(n));
    Ok(SirState::from_flat(&out))
}

/// Derivative of the networked system at time `t`.
pub fn rhs_standard(state: &SirState, a: &AdjacencyMatrix, coeff: &CoefficientField, t: f64) -> Result<SirState> {
    rhs(RhsKind::Standard, state, a, coeff, t)
}

/// Derivative with the unscaled self-interaction term `β_j s_j i_j`.
pub fn rhs_self_interaction(state: &SirState, a: &AdjacencyMatrix, coeff: &CoefficientField, t: f64) -> Result<SirState> {
    rhs(RhsKind::SelfInteraction, state, a, coeff, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    #[serde(rename = "dopri8")]
    DoPri8,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::DoPri8 => "dopri8",
        }
    }

    pub fn order(&self) -> u32 {
        match self {
            Method::Rk4 => 4,
            Method::DoPri8 => 8,
        }
    }

    fn tableau(&self) -> Tableau {
        match self {
            Method::Rk4 => Tableau {
                a: RK4_A,
                b: &RK4_B,
                c: &RK4_C,
            },
            Method::DoPri8 => Tableau {
                a: DOP853_A,
                b: &DOP853_B,
                c: &DOP853_C,
            },
        }
    }
}

struct Tableau {
    a: &'static [&'static [f64]],
    b: &'static [f64],
    c: &'static [f64],
}

const RK4_A: &[&[f64]] = &[&[], &[0.5], &[0.0, 0.5], &[0.0, 0.0, 1.0]];
const RK4_B: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
const RK4_C: [f64; 4] = [0.0, 0.5, 0.5, 1.0];

// Dormand–Prince 8(5,3), eighth-order solution only.
const DOP853_A: &[&[f64]] = &[
    &[],
    &[5.260_015_195_876_773E-2],
    &[1.972_505_698_453_79E-2, 5.917_517_095_361_37E-2],
    &[2.958_758_547_680_685E-2, 0.0, 8.876_275_643_042_054E-2],
    &[2.413_651_341_592_667E-1, 0.0, -8.845_494_793_282_861E-1, 9.248_340_032_617_92E-1],
    &[3.703_703_703_703_703_5E-2, 0.0, 0.0, 1.708_286_087_294_738_6E-1, 1.254_676_875_668_224_2E-1],
    &[3.7109375E-2, 0.0, 0.0, 1.702_522_110_195_440_5E-1, 6.021_653_898_045_596E-2, -1.7578125E-2],
    &[3.709_200_011_850_479E-2, 0.0, 0.0, 1.703_839_257_122_399_8E-1, 1.072_620_304_463_732_8E-1, -1.531_943_774_862_440_2E-2, 8.273_789_163_814_023E-3],
    &[6.241_109_587_160_757E-1, 0.0, 0.0, -3.360_892_629_446_941_4, -8.682_193_468_417_26E-1, 2.759_209_969_944_671E1, 2.015_406_755_047_789_4E1, -4.348_988_418_106_996E1],
    &[4.776_625_364_382_643_4E-1, 0.0, 0.0, -2.488_114_619_971_667_7, -5.902_908_268_368_43E-1, 2.123_005_144_818_119_3E1, 1.527_923_363_288_242_3E1, -3.328_821_096_898_486E1, -2.033_120_170_850_862_7E-2],
    &[-9.371_424_300_859_873E-1, 0.0, 0.0, 5.186_372_428_844_064, 1.091_437_348_996_729_5, -8.149_787_010_746_927, -1.852_006_565_999_696E1, 2.273_948_709_935_050_5E1, 2.493_605_552_679_652_3, -3.046_764_471_898_219_6],
    &[2.273_310_147_516_538, 0.0, 0.0, -1.053_449_546_673_725E1, -2.000_872_058_224_862_5, -1.795_893_186_311_88E1, 2.794_888_452_941_996E1, -2.858_998_277_135_023_5, -8.872_856_933_530_63, 1.236_056_717_579_430_3E1, 6.433_927_460_157_636E-1],
];
const DOP853_B: [f64; 12] = [
    5.429_373_411_656_876_5E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_409,
    1.891_517_899_314_500_3,
    -5.801_203_960_010_585,
    3.111_643_669_578_199E-1,
    -1.521_609_496_625_161E-1,
    2.013_654_008_040_303_4E-1,
    4.471_061_572_777_259E-2,
];
const DOP853_C: [f64; 12] = [
    0.0,
    5.260_015_195_876_773E-2,
    7.890_022_793_815_16E-2,
    1.183_503_419_072_274E-1,
    2.816_496_580_927_726E-1,
    3.333_333_333_333_333E-1,
    0.25,
    3.076_923_076_923_077E-1,
    6.512_820_512_820_513E-1,
    0.6,
    8.571_428_571_428_571E-1,
    1.0,
];

/// Fixed-step integration settings; a final partial step reaches `horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub method: Method,
    pub dt: f64,
    pub horizon: f64,
    /// Store every `thin`-th step (the final state is always stored).
    #[serde(default = "default_thin")]
    pub thin: usize,
}

fn default_thin() -> usize {
    1
}

impl IntegratorSpec {
    pub fn new(method: Method, dt: f64, horizon: f64) -> Self {
        Self {
            method,
            dt,
            horizon,
            thin: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(param("dt", format!("{} must be positive", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(param("horizon", format!("{} must be nonnegative", self.horizon)));
        }
        if self.thin == 0 {
            return Err(param("thin", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps; `horizon / dt` within `1e-9` of an integer counts as exact.
    pub fn steps(&self) -> usize {
        let q = self.horizon / self.dt;
        let r = q.round();
        if (q - r).abs() <= 1e-9 * r.max(1.0) {
            r as usize
        } else {
            q.ceil() as usize
        }
    }

    /// Grid time of step `k`.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps() {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }
}

/// Invariant monitoring over every step, stored or not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    /// `max |s + i + r - 1|` over nodes and steps.
    pub max_sum_violation: f64,
    pub min_value: f64,
    pub max_value: f64,
    /// Largest per-step increase of any `s_j`.
    pub max_s_increase: f64,
    /// Largest per-step decrease of any `r_j`.
    pub max_r_decrease: f64,
}

impl Diagnostics {
    fn start(y: &[f64], n: usize) -> Self {
        let mut d = Self {
            steps: 0,
            max_sum_violation: 0.0,
            min_value: f64::INFINITY,
            max_value: f64::NEG_INFINITY,
            max_s_increase: 0.0,
            max_r_decrease: 0.0,
        };
        d.observe(y, y, n);
        d
    }

    fn observe(&mut self, prev: &[f64], y: &[f64], n: usize) {
        for j in 0..n {
            let (s, i, r) = (y[j], y[n + j], y[2 * n + j]);
            self.max_sum_violation = self.max_sum_violation.max((s + i + r - 1.0).abs());
            self.min_value = self.min_value.min(s.min(i).min(r));
            self.max_value = self.max_value.max(s.max(i).max(r));
            self.max_s_increase = self.max_s_increase.max(s - prev[j]);
            self.max_r_decrease = self.max_r_decrease.max(prev[2 * n + j] - r);
        }
    }

    /// Worst case of two runs.
    pub fn merge(&mut self, o: &Diagnostics) {
        self.steps = self.steps.max(o.steps);
        self.max_sum_violation = self.max_sum_violation.max(o.max_sum_violation);
        self.min_value = self.min_value.min(o.min_value);
        self.max_value = self.max_value.max(o.max_value);
        self.max_s_increase = self.max_s_increase.max(o.max_s_increase);
        self.max_r_decrease = self.max_r_decrease.max(o.max_r_decrease);
    }

    /// All states within `[-tol, 1 + tol]`.
    pub fn in_bounds(&self, tol: f64) -> bool {
        self.min_value >= -tol && self.max_value <= 1.0 + tol
    }

    /// `s` nonincreasing and `r` nondecreasing up to `tol` per step.
    pub fn monotone(&self, tol: f64) -> bool {
        self.max_s_increase <= tol && self.max_r_decrease <= tol
    }
}

/// Stored states on the (thinned) time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SirTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<SirState>,
    pub diagnostics: Diagnostics,
    pub fingerprint: String,
}

impl SirTrajectory {
    pub fn n(&self) -> usize {
        self.states.first().map_or(0, SirState::n)
    }

    pub fn last(&self) -> &SirState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Spatial mean of the infected share at each stored time.
    pub fn mean_infected(&self) -> Vec<f64> {
        self.states.iter().map(|st| st.i.iter().sum::<f64>() / st.n() as f64).collect()
    }

    /// Stored time at which the mean infected share peaks (earliest on ties).
    pub fn peak_time(&self) -> f64 {
        let m = self.mean_infected();
        let mut best = 0;
        for (q, v) in m.iter().enumerate() {
            if *v > m[best] {
                best = q;
            }
        }
        self.times[best]
    }
}

/// Integrates from `t = 0` to the horizon with a fixed step.
pub fn integrate(
    spec: &IntegratorSpec,
    kind: RhsKind,
    network: &Network,
    coeff: &CoefficientField,
    initial: &SirState,
) -> Result<SirTrajectory> {
    spec.validate()?;
    let n = initial.n();
    if network.n() != n {
        return Err(Error::Dimension { expected: n, got: network.n() });
    }
    if coeff.n() != n {
        return Err(Error::Dimension { expected: n, got: coeff.n() });
    }
    SirState::new(initial.s.clone(), initial.i.clone(), initial.r.clone())?;

    let tab = spec.method.tableau();
    let stages = tab.b.len();
    let steps = spec.steps();
    let mut y = initial.to_flat();
    let mut next = vec![0.0; 3 * n];
    let mut stage = vec![0.0; 3 * n];
    let mut k = vec![vec![0.0; 3 * n]; stages];
    let mut ws = Workspace::new(n);
    let mut diag = Diagnostics::start(&y, n);
    let mut times = vec![0.0];
    let mut states = vec![initial.clone()];

    for step in 0..steps {
        let t = spec.time(step);
        let h = spec.time(step + 1) - t;
        for q in 0..stages {
            stage.copy_from_slice(&y);
            for (p, &a) in tab.a[q].iter().enumerate() {
                if a != 0.0 {
                    let ha = h * a;
                    for (z, kp) in stage.iter_mut().zip(&k[p]) {
                        *z += ha * kp;
                    }
                }
            }
            let tq = t + tab.c[q] * h;
            let (beta, gamma) = coeff.at(tq);
            let (done, rest) = k.split_at_mut(q);
            let _ = done;
            eval_rhs(kind, network.at(tq), beta, gamma, &stage, &mut rest[0], &mut ws);
        }
        for (m, nx) in next.iter_mut().enumerate() {
            let mut incr = 0.0;
            for (kq, &b) in k.iter().zip(tab.b) {
                if b != 0.0 {
                    incr += b * kq[m];
                }
            }
            *nx = y[m] + h * incr;
        }
        let t_next = spec.time(step + 1);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: step + 1, t: t_next });
        }
        diag.observe(&y, &next, n);
        std::mem::swap(&mut y, &mut next);
        if (step + 1) % spec.thin == 0 || step + 1 == steps {
            times.push(t_next);
            states.push(SirState::from_flat(&y));
        }
    }
    diag.steps = steps;
    Ok(SirTrajectory {
        dt: spec.dt,
        times,
        states,
        diagnostics: diag,
        fingerprint: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::Provenance;

    fn matrix(n: usize, w: Vec<f64>) -> AdjacencyMatrix {
        AdjacencyMatrix::new(n, w, Provenance::new("test", serde_json::Value::Null, None)).unwrap()
    }

    fn ones(n: usize) -> AdjacencyMatrix {
        matrix(n, vec![1.0; n * n])
    }

    /// Scalar SIR `s' = -βsi`, `i' = βsi - γi` by classical RK4.
    fn scalar_sir(beta: f64, gamma: f64, i0: f64, dt: f64, t_end: f64, samples: &[f64]) -> Vec<(f64, f64)> {
        let f = |s: f64, i: f64| (-beta * s * i, beta * s * i - gamma * i);
        let (mut s, mut i, mut t) = (1.0 - i0, i0, 0.0);
        let mut out = Vec::new();
        let mut next = 0;
        let steps = (t_end / dt).round() as usize;
        for step in 0..=steps {
            while next < samples.len() && (samples[next] - t).abs() < 0.5 * dt {
                out.push((s, i));
                next += 1;
            }
            if step == steps {
                break;
            }
            let (a1, b1) = f(s, i);
            let (a2, b2) = f(s + 0.5 * dt * a1, i + 0.5 * dt * b1);
            let (a3, b3) = f(s + 0.5 * dt * a2, i + 0.5 * dt * b2);
            let (a4, b4) = f(s + dt * a3, i + dt * b3);
            s += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            i += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
            t = (step + 1) as f64 * dt;
        }
        out
    }

    #[test]
    fn state_validation() {
        assert!(SirState::new(vec![0.5], vec![0.5], vec![0.0]).is_ok());
        assert!(matches!(SirState::new(vec![0.5], vec![0.6], vec![0.0]), Err(Error::InitialData { node: 0, .. })));
        assert!(matches!(SirState::new(vec![1.1, 0.0], vec![-0.1, 1.0], vec![0.0, 0.0]), Err(Error::InitialData { node: 0, .. })));
        assert!(matches!(SirState::new(vec![1.0], vec![0.0, 0.0], vec![0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn isolated_node_decays() {
        let st = SirState::new(vec![0.7], vec![0.3], vec![0.0]).unwrap();
        let c = CoefficientField::constant(1, 2.0, 0.5).unwrap();
        let d = rhs_standard(&st, &AdjacencyMatrix::empty(1), &c, 0.0).unwrap();
        assert_eq!((d.s[0], d.i[0], d.r[0]), (0.0, -0.15, 0.15));
    }

    #[test]
    fn two_node_substitution() {
        let st = SirState::new(vec![1.0, 0.5], vec![0.0, 0.5], vec![0.0, 0.0]).unwrap();
        let c = CoefficientField::constant(2, 1.0, 0.1).unwrap();
        let d = rhs_standard(&st, &matrix(2, vec![0.0, 1.0, 1.0, 0.0]), &c, 0.0).unwrap();
        assert_eq!(d.s[0], -0.25);
        for j in 0..2 {
            assert!((d.s[j] + d.i[j] + d.r[j]).abs() <= 1e-17);
        }
    }

    #[test]
    fn homogeneous_rhs_matches_scalar() {
        let n = 9;
        let st = SirState::from_infected(vec![0.2; n]).unwrap();
        let c = CoefficientField::constant(n, 1.26, 1.0 / 7.0).unwrap();
        let d = rhs_standard(&st, &ones(n), &c, 0.0).unwrap();
        let (ds, di) = (-1.26 * 0.8 * 0.2, 1.26 * 0.8 * 0.2 - 0.2 / 7.0);
        for j in 0..n {
            assert!((d.s[j] - ds).abs() < 1e-15 && (d.i[j] - di).abs() < 1e-15);
        }
    }

    #[test]
    fn self_interaction_adds_diagonal_term() {
        let st = SirState::new(vec![0.6], vec![0.4], vec![0.0]).unwrap();
        let c = CoefficientField::constant(1, 1.0, 0.0).unwrap();
        let d = rhs_self_interaction(&st, &AdjacencyMatrix::empty(1), &c, 0.0).unwrap();
        assert_eq!(d.s[0], -0.6 * 0.4);
        let zero = SirState::from_infected(vec![0.0; 3]).unwrap();
        let c3 = CoefficientField::constant(3, 1.0, 0.2).unwrap();
        let d = rhs_self_interaction(&zero, &ones(3), &c3, 0.0).unwrap();
        assert!(d.s.iter().chain(&d.i).chain(&d.r).all(|&v| v == 0.0));

        let n = 6;
        let st = SirState::from_infected((0..n).map(|j| 0.1 * j as f64).collect()).unwrap();
        let a = crate::sampling::galerkin(&crate::Graphon::uniform_attachment(), 0.0, n).unwrap();
        let beta: Vec<f64> = (0..n).map(|j| 1.0 + j as f64).collect();
        let c = CoefficientField::new(n, vec![0.0], vec![beta.clone()], vec![vec![0.3; n]]).unwrap();
        let d0 = rhs_standard(&st, &a, &c, 0.0).unwrap();
        let d1 = rhs_self_interaction(&st, &a, &c, 0.0).unwrap();
        for j in 0..n {
            let term = beta[j] * st.s[j] * st.i[j];
            assert!((d0.s[j] - d1.s[j] - term).abs() <= 1e-15);
            assert!((d1.i[j] - d0.i[j] - term).abs() <= 1e-15);
            assert_eq!(d0.r[j], d1.r[j]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let st = SirState::from_infected(vec![0.1; 3]).unwrap();
        let c = CoefficientField::constant(3, 1.0, 0.1).unwrap();
        assert!(matches!(rhs_standard(&st, &ones(4), &c, 0.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn tableaux_are_consistent() {
        for m in [Method::Rk4, Method::DoPri8] {
            let t = m.tableau();
            assert!((t.b.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for (row, c) in t.a.iter().zip(t.c) {
                assert!((row.iter().sum::<f64>() - c).abs() < 1e-13, "{m:?}");
            }
        }
    }

    #[test]
    fn pure_decay_is_exponential() {
        let n = 4;
        let i0 = vec![0.1, 0.3, 0.5, 0.9];
        let st = SirState::from_infected(i0.clone()).unwrap();
        let gamma = 1.0 / 7.0;
        let c = CoefficientField::constant(n, 0.0, gamma).unwrap();
        for m in [Method::Rk4, Method::DoPri8] {
            let tr = integrate(&IntegratorSpec::new(m, 0.01, 50.0), RhsKind::Standard, &ones(n).into(), &c, &st).unwrap();
            assert_eq!(tr.times.len(), 5001);
            let mut worst = 0.0f64;
            for (t, s) in tr.times.iter().zip(&tr.states) {
                for j in 0..n {
                    worst = worst.max((s.i[j] - i0[j] * (-gamma * t).exp()).abs());
                }
            }
            assert!(worst <= 1e-10, "{m:?} {worst}");
        }
    }

    #[test]
    fn homogeneous_matches_fine_scalar_reference() {
        let n = 8;
        let (beta, gamma) = (1.26, 1.0 / 7.0);
        let st = SirState::from_infected(vec![0.01; n]).unwrap();
        let c = CoefficientField::constant(n, beta, gamma).unwrap();
        let samples: Vec<f64> = (0..=40).map(|k| k as f64).collect();
        let reference = scalar_sir(beta, gamma, 0.01, 1e-4, 40.0, &samples);
        let spec = IntegratorSpec {
            thin: 100,
            ..IntegratorSpec::new(Method::DoPri8, 0.01, 40.0)
        };
        let tr = integrate(&spec, RhsKind::Standard, &ones(n).into(), &c, &st).unwrap();
        assert_eq!(tr.times.len(), samples.len());
        for (state, (s, i)) in tr.states.iter().zip(&reference) {
            for j in 0..n {
                assert!((state.s[j] - s).abs() < 1e-9 && (state.i[j] - i).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rk4_order_on_scalar_problem() {
        let n = 2;
        let st = SirState::from_infected(vec![0.01; n]).unwrap();
        let c = CoefficientField::constant(n, 1.26, 1.0 / 7.0).unwrap();
        let reference = integrate(&IntegratorSpec::new(Method::DoPri8, 0.01, 20.0), RhsKind::Standard, &ones(n).into(), &c, &st).unwrap();
        let err = |dt: f64| {
            let tr = integrate(&IntegratorSpec::new(Method::Rk4, dt, 20.0), RhsKind::Standard, &ones(n).into(), &c, &st).unwrap();
            (tr.last().i[0] - reference.last().i[0]).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((12.0..=20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn last_step_is_shortened_and_thinning_keeps_final_state() {
        let spec = IntegratorSpec {
            thin: 4,
            ..IntegratorSpec::new(Method::Rk4, 0.3, 1.0)
        };
        assert_eq!(spec.steps(), 4);
        let st = SirState::from_infected(vec![0.5]).unwrap();
        let c = CoefficientField::constant(1, 0.0, 1.0).unwrap();
        let tr = integrate(&spec, RhsKind::Standard, &AdjacencyMatrix::empty(1).into(), &c, &st).unwrap();
        assert_eq!(tr.times, vec![0.0, 1.0]);
        assert!((tr.last().i[0] - 0.5 * (-1.0f64).exp()).abs() < 1e-4);
        assert_eq!(IntegratorSpec::new(Method::Rk4, 0.01, 275.0).steps(), 27500);
        assert_eq!(IntegratorSpec::new(Method::Rk4, 0.1, 0.0).steps(), 0);
    }

    #[test]
    fn invariants_hold_on_a_heterogeneous_network() {
        let n = 50;
        let a = crate::sampling::galerkin(&crate::Graphon::preferential_attachment(0.1).unwrap(), 0.0, n).unwrap();
        let mut i0 = vec![0.0; n];
        i0[0] = 0.2;
        let st = SirState::from_infected(i0).unwrap();
        let c = CoefficientField::constant(n, 3.0, 1.0 / 7.0).unwrap();
        for m in [Method::Rk4, Method::DoPri8] {
            let tr = integrate(&IntegratorSpec::new(m, 0.05, 60.0), RhsKind::Standard, &a.clone().into(), &c, &st).unwrap();
            let d = tr.diagnostics;
            assert!(d.max_sum_violation <= 1e-12, "{d:?}");
            assert!(d.in_bounds(1e-9) && d.monotone(1e-12), "{d:?}");
        }
    }

    #[test]
    fn deterministic_across_thread_pools() {
        let n = 600;
        let a = crate::sampling::galerkin(&crate::Graphon::uniform_attachment(), 0.0, n).unwrap();
        let st = SirState::from_infected((0..n).map(|j| if j % 7 == 0 { 0.05 } else { 0.0 }).collect()).unwrap();
        let c = CoefficientField::constant(n, 2.0, 0.2).unwrap();
        let spec = IntegratorSpec::new(Method::Rk4, 0.1, 2.0);
        let net: Network = a.into();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| integrate(&spec, RhsKind::Standard, &net, &c, &st).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn divergence_is_reported() {
        let st = SirState::from_infected(vec![0.5, 0.5]).unwrap();
        let c = CoefficientField::constant(2, 1e200, 0.0).unwrap();
        let a = matrix(2, vec![1e200; 4]);
        let r = integrate(&IntegratorSpec::new(Method::Rk4, 1.0, 5.0), RhsKind::Standard, &a.into(), &c, &st);
        assert!(matches!(r, Err(Error::Divergence { step: 1, .. })), "{r:?}");
    }

    #[test]
    fn coefficient_averages_of_profiles() {
        let c = coefficient_averages(&RateField::constant(1.26).unwrap(), &RateField::constant(1.0 / 7.0).unwrap(), 5).unwrap();
        assert_eq!(c.at(3.0), (&[1.26; 5][..], &[1.0 / 7.0; 5][..]));
        let lin = RateField::profile(Profile::Linear { a: 0.0, b: 1.0 }).unwrap();
        let c = coefficient_averages(&lin, &RateField::constant(0.1).unwrap(), 2).unwrap();
        assert_eq!(c.at(0.0).0, &[0.25, 0.75]);
        let cells = Profile::Cells(vec![1.0, 3.0]);
        assert_eq!(cells.cell_means(4), vec![1.0, 1.0, 3.0, 3.0]);
        assert_eq!(Profile::Cells(vec![1.0, 3.0, 5.0, 7.0]).cell_means(2), vec![2.0, 6.0]);
        assert!((Profile::Cells(vec![0.0, 3.0]).cell_means(3)[1] - 1.5).abs() < 1e-15);
        let iv = Profile::Interval { lo: 0.0, hi: 0.25, value: 0.01 };
        assert_eq!(iv.cell_means(8), vec![0.01, 0.01, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((iv.cell_means(2)[0] - 0.005).abs() < 1e-18);
    }

    #[test]
    fn doubling_schedule_steps_at_switch() {
        let beta = RateField::schedule(vec![(0.0, Profile::Constant(1.89)), (80.0, Profile::Constant(3.78))]).unwrap();
        let c = coefficient_averages(&beta, &RateField::constant(1.0 / 7.0).unwrap(), 3).unwrap();
        assert_eq!(c.at(79.99).0, &[1.89; 3]);
        assert_eq!(c.at(80.0).0, &[3.78; 3]);
        assert_eq!(c.at(80.0 - 1e-12).0, &[3.78; 3]);
        assert_eq!(c.at(200.0).1, &[1.0 / 7.0; 3]);
        assert!(RateField::constant(-1.0).is_err());
    }

    #[test]
    fn scheduled_network_switches_right_continuously() {
        let n = 3;
        let net = Network::scheduled(vec![(0.0, AdjacencyMatrix::empty(n)), (1.0, ones(n))]).unwrap();
        assert_eq!(net.at(0.999).weights(), AdjacencyMatrix::empty(n).weights());
        assert_eq!(net.at(1.0).weights(), ones(n).weights());
        assert!(Network::scheduled(vec![(0.0, ones(2)), (1.0, ones(3))]).is_err());
        // the last stage of the step ending at the switch already sees the new matrix
        let st = SirState::from_infected(vec![0.5, 0.0, 0.0]).unwrap();
        let c = CoefficientField::constant(n, 1.0, 0.0).unwrap();
        let tr = integrate(&IntegratorSpec::new(Method::Rk4, 0.1, 2.0), RhsKind::Standard, &net, &c, &st).unwrap();
        assert_eq!(tr.states[9].i[1], 0.0);
        assert!(tr.states[10].i[1] > 0.0);
        assert!(tr.last().i[1] > 0.0);
    }
}
