//! Scenario files: TOML with one table per concern; unknown keys are errors.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use graphon_sir::sir::{IntegratorSpec, RhsKind};
use graphon_sir::Norm;
use serde::{Deserialize, Deserializer, Serialize};

/// A real written as a number or as a fraction string such as `"1/7"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Number(pub f64);

impl<'de> Deserialize<'de> for Number {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Number(v as f64)),
            Raw::Float(v) => Ok(Number(v)),
            Raw::Text(s) => parse_fraction(&s).map(Number).map_err(serde::de::Error::custom),
        }
    }
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let bad = || format!("`{s}` is neither a number nor a fraction `a/b`");
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            if b == 0.0 {
                return Err(bad());
            }
            Ok(a / b)
        }
        None => s.trim().parse().map_err(|_| bad()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Constant,
    Bipartite,
    BlockDiagonal,
    EqualBlocks,
    KNearestRing,
    SmallWorld,
    UniformAttachment,
    PreferentialAttachment,
    PowerLaw,
    SumPowerLaw,
    Step,
    Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimModeName {
    Level,
    Density,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrimConfig {
    pub alpha: f64,
    pub mode: TrimModeName,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GraphonConfig {
    pub kind: Kind,
    pub p: Option<f64>,
    pub theta: Option<Number>,
    pub breaks: Option<Vec<f64>>,
    pub blocks: Option<usize>,
    pub r: Option<f64>,
    pub c: Option<f64>,
    pub nu: Option<f64>,
    pub mu: Option<f64>,
    /// Step graphon CSV, relative to the scenario file.
    pub file: Option<PathBuf>,
    /// Inline step graphon rows.
    pub values: Option<Vec<Vec<f64>>>,
    pub trim: Option<TrimConfig>,
    /// End of the last segment; defaults to the integration horizon.
    pub horizon: Option<f64>,
    pub segments: Option<Vec<SegmentConfig>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub start: f64,
    pub graphon: GraphonConfig,
    /// Overrides the scenario sampler for this segment.
    pub sampler: Option<SamplerConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Galerkin,
    WeightedRandom,
    BernoulliRandom,
    ScaledSparse,
    TrimmedWeighted,
    AveragedRandom,
    /// Deterministic averaged-model matrix `n^α ⟨min{1, n^{-α} W}⟩`.
    AveragedModel,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub scheme: SchemeName,
    pub alpha: Option<f64>,
    /// Defaults to a child of the master seed.
    pub seed: Option<u64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeName::Galerkin,
            alpha: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum RateConfig {
    Value(Number),
    /// `[[t0, v0], [t1, v1], ...]`, right-continuous.
    Schedule { schedule: Vec<(f64, Number)> },
    /// `a + b·x`.
    Linear { linear: (f64, f64) },
    /// Step profile on a uniform partition.
    Cells { cells: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub beta: RateConfig,
    pub gamma: RateConfig,
    #[serde(default = "default_rhs")]
    pub rhs: RhsKind,
}

fn default_rhs() -> RhsKind {
    RhsKind::Standard
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    FirstVertex,
    LastVertex,
    MiddleVertex,
    AllVertices,
    Explicit,
    Constant,
    Interval,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub pattern: Pattern,
    /// Infected share for the presets.
    pub epsilon: Option<f64>,
    /// Explicit infected shares, one per vertex.
    pub values: Option<Vec<f64>>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; `--out` takes precedence.
    pub dir: Option<PathBuf>,
    /// File name prefix; defaults to the scenario name.
    pub prefix: Option<String>,
    #[serde(default = "yes")]
    pub trajectory_csv: bool,
    #[serde(default = "yes")]
    pub trajectory_binary: bool,
    #[serde(default = "yes")]
    pub degrees: bool,
    #[serde(default)]
    pub matrix: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            prefix: None,
            trajectory_csv: true,
            trajectory_binary: true,
            degrees: true,
            matrix: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub ns: Vec<usize>,
    pub n_ref: usize,
    pub norm: Norm,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MontecarloConfig {
    /// Defaults to `n / 2`.
    pub replicas: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CutnormConfig {
    /// Step graphon CSV; without it the sampled graph is compared with the Galerkin average.
    pub input: Option<PathBuf>,
    /// Second step graphon CSV: report the permutation cut distance.
    pub against: Option<PathBuf>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_exact_limit")]
    pub exact_limit: usize,
}

fn default_restarts() -> usize {
    graphon_sir::cutnorm::DEFAULT_RESTARTS
}

fn default_exact_limit() -> usize {
    16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ErdosRenyi,
    KNearestRing,
    WattsStrogatz,
    Bipartite,
    WeaklyConnectedBlocks,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    /// Graph size; defaults to the scenario `n`.
    pub n: Option<usize>,
    /// Classical family; without it the graph is sampled from `[graphon]`.
    pub family: Option<Family>,
    pub p: Option<f64>,
    pub k: Option<usize>,
    pub p_rewire: Option<f64>,
    pub theta: Option<Number>,
    pub breaks: Option<Vec<f64>>,
    /// One graph per value of a scalar `[graphon]` parameter.
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    P,
    Theta,
    R,
    C,
    Nu,
    Mu,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl GraphonConfig {
    /// Copy with one scalar parameter replaced.
    pub fn with(&self, param: SweepParam, v: f64) -> Self {
        let mut c = self.clone();
        match param {
            SweepParam::P => c.p = Some(v),
            SweepParam::Theta => c.theta = Some(Number(v)),
            SweepParam::R => c.r = Some(v),
            SweepParam::C => c.c = Some(v),
            SweepParam::Nu => c.nu = Some(v),
            SweepParam::Mu => c.mu = Some(v),
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub n: Option<usize>,
    pub graphon: Option<GraphonConfig>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub coefficients: Option<CoefficientsConfig>,
    pub initial: Option<InitialConfig>,
    pub integrator: Option<IntegratorSpec>,
    #[serde(default)]
    pub output: OutputConfig,
    pub study: Option<StudyConfig>,
    pub montecarlo: Option<MontecarloConfig>,
    pub cutnorm: Option<CutnormConfig>,
    pub generate: Option<GenerateConfig>,
}

/// A parsed scenario with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub base: PathBuf,
    pub path: PathBuf,
    pub text: String,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

pub fn parse(text: &str) -> Result<Scenario> {
    let s: Scenario = toml::from_str(text)?;
    if s.name.is_empty() || s.name.contains(['/', '\\']) {
        bail!("scenario name must be a nonempty file-name-safe string");
    }
    Ok(s)
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded {
        scenario,
        base,
        path: path.to_path_buf(),
        text,
    })
}
