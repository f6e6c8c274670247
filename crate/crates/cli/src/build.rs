//! Translation of scenario tables into library objects.

use std::fs::File;
use std::io::BufReader;

use anyhow::{anyhow, bail, Context, Result};
use graphon_sir::analysis::Setup;
use graphon_sir::graphon::Segment;
use graphon_sir::sampling::{Scheme, SamplerSpec};
use graphon_sir::sir::{averaged_model_matrix, Profile, RateField};
use graphon_sir::{graphs, io, rng, AdjacencyMatrix, Graphon, Network, StepGraphon, TrimMode};

use crate::config::{
    Family, GraphonConfig, InitialConfig, Kind, Loaded, Pattern, RateConfig, SamplerConfig, SchemeName, TrimModeName,
};

/// Seeds handed out during a run, keyed by role.
pub type SeedLog = std::collections::BTreeMap<String, u64>;

fn need<T: Copy>(v: Option<T>, kind: Kind, key: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("graphon kind {kind:?} needs `{key}`"))
}

/// Kernel described by a `[graphon]` table; `horizon` closes a schedule.
pub fn graphon(cfg: &GraphonConfig, loaded: &Loaded, horizon: f64) -> Result<Graphon> {
    let k = cfg.kind;
    let w = match k {
        Kind::Constant => Graphon::constant(need(cfg.p, k, "p")?)?,
        Kind::Bipartite => Graphon::bipartite(need(cfg.theta, k, "theta")?.0)?,
        Kind::BlockDiagonal => {
            Graphon::block_diagonal(cfg.breaks.clone().ok_or_else(|| anyhow!("block_diagonal needs `breaks`"))?)?
        }
        Kind::EqualBlocks => Graphon::equal_blocks(need(cfg.blocks, k, "blocks")?)?,
        Kind::KNearestRing => Graphon::k_nearest_ring(need(cfg.r, k, "r")?)?,
        Kind::SmallWorld => Graphon::small_world(need(cfg.p, k, "p")?, need(cfg.r, k, "r")?)?,
        Kind::UniformAttachment => Graphon::uniform_attachment(),
        Kind::PreferentialAttachment => Graphon::preferential_attachment(need(cfg.c, k, "c")?)?,
        Kind::PowerLaw => Graphon::power_law(need(cfg.nu, k, "nu")?)?,
        Kind::SumPowerLaw => Graphon::sum_power_law(need(cfg.mu, k, "mu")?)?,
        Kind::Step => {
            let s = match (&cfg.file, &cfg.values) {
                (Some(f), None) => read_step(loaded, f)?,
                (None, Some(rows)) => StepGraphon::from_rows(rows)?,
                _ => bail!("step graphon needs exactly one of `file` and `values`"),
            };
            Graphon::step(s)?
        }
        Kind::Schedule => {
            let segs = cfg.segments.as_ref().ok_or_else(|| anyhow!("schedule needs `segments`"))?;
            let segments = segs
                .iter()
                .map(|s| {
                    Ok(Segment {
                        start: s.start,
                        graphon: graphon(&s.graphon, loaded, horizon)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Graphon::schedule(segments, cfg.horizon.unwrap_or(horizon))?
        }
    };
    if k != Kind::Schedule && cfg.segments.is_some() {
        bail!("`segments` is only valid for kind = \"schedule\"");
    }
    Ok(w)
}

pub fn read_step(loaded: &Loaded, f: &std::path::Path) -> Result<StepGraphon> {
    let path = loaded.resolve(f);
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    io::read_step_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// Applies a `trim` entry at size `n`.
pub fn trimmed(cfg: &GraphonConfig, w: Graphon, n: usize) -> Result<Graphon> {
    match &cfg.trim {
        None => Ok(w),
        Some(t) => {
            let mode = match t.mode {
                TrimModeName::Level => TrimMode::Level,
                TrimModeName::Density => TrimMode::Density,
            };
            Ok(w.trim(n, t.alpha, mode)?)
        }
    }
}

fn alpha(cfg: &SamplerConfig) -> Result<f64> {
    cfg.alpha.ok_or_else(|| anyhow!("sampler scheme {:?} needs `alpha`", cfg.scheme))
}

/// Library scheme, or `None` for the averaged-model matrix.
pub fn scheme(cfg: &SamplerConfig) -> Result<Option<Scheme>> {
    let needs_alpha = matches!(
        cfg.scheme,
        SchemeName::ScaledSparse | SchemeName::TrimmedWeighted | SchemeName::AveragedRandom | SchemeName::AveragedModel
    );
    if !needs_alpha && cfg.alpha.is_some() {
        bail!("sampler scheme {:?} takes no `alpha`", cfg.scheme);
    }
    Ok(Some(match cfg.scheme {
        SchemeName::Galerkin => Scheme::Galerkin,
        SchemeName::WeightedRandom => Scheme::WeightedRandom,
        SchemeName::BernoulliRandom => Scheme::BernoulliRandom,
        SchemeName::ScaledSparse => Scheme::ScaledSparse { alpha: alpha(cfg)? },
        SchemeName::TrimmedWeighted => Scheme::TrimmedWeighted { alpha: alpha(cfg)? },
        SchemeName::AveragedRandom => Scheme::AveragedRandom { alpha: alpha(cfg)? },
        SchemeName::AveragedModel => return Ok(None),
    }))
}

fn sample_one(
    cfg: &SamplerConfig,
    w: &Graphon,
    t: f64,
    n: usize,
    role: &str,
    master: u64,
    seeds: &mut SeedLog,
) -> Result<AdjacencyMatrix> {
    match scheme(cfg)? {
        None => Ok(averaged_model_matrix(w.at(t)?, n, alpha(cfg)?)?),
        Some(Scheme::Galerkin) => Ok(graphon_sir::sampling::galerkin(w, t, n)?),
        Some(s) => {
            let seed = cfg.seed.unwrap_or_else(|| rng::child_seed(master, role));
            seeds.insert(role.to_string(), seed);
            Ok(SamplerSpec { scheme: s, seed }.sample(w.at(t)?, 0.0, n)?)
        }
    }
}

/// Coupling network at size `n`. Schedules are sampled segment by segment,
/// each with its own sampler override and seed.
pub fn network(
    cfg: &GraphonConfig,
    w: &Graphon,
    sampler: &SamplerConfig,
    n: usize,
    master: u64,
    role: &str,
    seeds: &mut SeedLog,
) -> Result<Network> {
    match w {
        Graphon::Schedule(s) => {
            let segs = cfg.segments.as_ref().expect("schedule built from segments");
            let parts = s
                .segments()
                .iter()
                .zip(segs)
                .enumerate()
                .map(|(q, (seg, sc))| {
                    let smp = sc.sampler.as_ref().unwrap_or(sampler);
                    let kernel = trimmed(&sc.graphon, seg.graphon.clone(), n)?;
                    let a = sample_one(smp, &kernel, 0.0, n, &format!("segment/{q}"), master, seeds)?;
                    Ok((seg.start, a))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Network::scheduled(parts)?)
        }
        _ => {
            let kernel = trimmed(cfg, w.clone(), n)?;
            Ok(Network::fixed(sample_one(sampler, &kernel, 0.0, n, role, master, seeds)?))
        }
    }
}

fn profile(r: &RateConfig) -> Result<Vec<(f64, Profile)>> {
    Ok(match r {
        RateConfig::Value(v) => vec![(0.0, Profile::Constant(v.0))],
        RateConfig::Schedule { schedule } => schedule.iter().map(|(t, v)| (*t, Profile::Constant(v.0))).collect(),
        RateConfig::Linear { linear } => vec![(
            0.0,
            Profile::Linear {
                a: linear.0,
                b: linear.1,
            },
        )],
        RateConfig::Cells { cells } => vec![(0.0, Profile::Cells(cells.clone()))],
    })
}

pub fn rate(r: &RateConfig) -> Result<RateField> {
    Ok(RateField::schedule(profile(r)?)?)
}

/// Initial infected profile. Vertex presets depend on `n` and are rejected
/// when `n_free` is set (runs at several sizes must share one profile).
pub fn infected(cfg: &InitialConfig, n: usize, n_free: bool) -> Result<Profile> {
    let eps = || cfg.epsilon.ok_or_else(|| anyhow!("initial pattern {:?} needs `epsilon`", cfg.pattern));
    let vertex = |j: usize| -> Result<Profile> {
        if n_free {
            bail!("initial pattern {:?} depends on n; use `interval`, `constant` or `explicit`", cfg.pattern);
        }
        let mut v = vec![0.0; n];
        v[j] = eps()?;
        Ok(Profile::Cells(v))
    };
    if n == 0 {
        bail!("n must be positive");
    }
    let p = match cfg.pattern {
        Pattern::FirstVertex => vertex(0)?,
        Pattern::LastVertex => vertex(n - 1)?,
        Pattern::MiddleVertex => vertex(n / 2)?,
        Pattern::AllVertices | Pattern::Constant => Profile::Constant(eps()?),
        Pattern::Explicit => {
            let v = cfg.values.clone().ok_or_else(|| anyhow!("explicit initial data needs `values`"))?;
            if !n_free && v.len() != n {
                bail!("explicit initial data has {} values for n = {n}", v.len());
            }
            Profile::Cells(v)
        }
        Pattern::Interval => Profile::Interval {
            lo: cfg.lo.ok_or_else(|| anyhow!("interval initial data needs `lo`"))?,
            hi: cfg.hi.ok_or_else(|| anyhow!("interval initial data needs `hi`"))?,
            value: eps()?,
        },
    };
    if let Profile::Cells(v) = &p {
        if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
            bail!("initial infected shares must lie in [0, 1]");
        }
    }
    Ok(p.validated()?)
}

/// Everything but the graph, for the scenario at size `n`.
pub fn setup(loaded: &Loaded, n: usize, n_free: bool) -> Result<Setup> {
    let s = &loaded.scenario;
    let coeff = s.coefficients.as_ref().ok_or_else(|| anyhow!("scenario has no [coefficients] table"))?;
    let init = s.initial.as_ref().ok_or_else(|| anyhow!("scenario has no [initial] table"))?;
    let integrator = s.integrator.ok_or_else(|| anyhow!("scenario has no [integrator] table"))?;
    integrator.validate()?;
    Ok(Setup {
        integrator,
        kind: coeff.rhs,
        beta: rate(&coeff.beta)?,
        gamma: rate(&coeff.gamma)?,
        infected: infected(init, n, n_free)?,
    })
}

pub fn size(loaded: &Loaded) -> Result<usize> {
    match loaded.scenario.n {
        Some(n) if n > 0 => Ok(n),
        _ => bail!("scenario needs a positive `n`"),
    }
}

/// Graphon of the scenario; schedules close at the integration horizon.
pub fn scenario_graphon(loaded: &Loaded) -> Result<(GraphonConfig, Graphon)> {
    let s = &loaded.scenario;
    let cfg = s.graphon.clone().ok_or_else(|| anyhow!("scenario has no [graphon] table"))?;
    let horizon = s.integrator.map(|i| i.horizon).unwrap_or(1.0);
    let w = graphon(&cfg, loaded, horizon)?;
    Ok((cfg, w))
}

/// Classical graph families of the `[generate]` table.
pub fn family(
    f: Family,
    g: &crate::config::GenerateConfig,
    n: usize,
    master: u64,
    seeds: &mut SeedLog,
) -> Result<AdjacencyMatrix> {
    let mut seed = |role: &str| {
        let s = rng::child_seed(master, role);
        seeds.insert(role.to_string(), s);
        s
    };
    let get = |v: Option<f64>, key: &str| v.ok_or_else(|| anyhow!("family {f:?} needs `{key}`"));
    let k = || g.k.ok_or_else(|| anyhow!("family {f:?} needs `k`"));
    Ok(match f {
        Family::ErdosRenyi => graphs::erdos_renyi(n, get(g.p, "p")?, seed("generate"))?,
        Family::KNearestRing => graphs::k_nearest_ring(n, k()?)?,
        Family::WattsStrogatz => graphs::watts_strogatz(n, k()?, get(g.p_rewire, "p_rewire")?, seed("generate"))?,
        Family::Bipartite => graphs::bipartite(n, get(g.theta.map(|t| t.0), "theta")?)?,
        Family::WeaklyConnectedBlocks => {
            graphs::weakly_connected_blocks(n, g.breaks.as_deref().ok_or_else(|| anyhow!("family needs `breaks`"))?)?
        }
    })
}
