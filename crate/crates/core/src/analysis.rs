//! Step-function error norms, convergence studies against a fine Galerkin
//! reference, Montecarlo ensembles over random graphs, and weak-* pairings.

use std::f64::consts::PI;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::graphon::{Graphon, Norm};
use crate::rng;
use crate::sampling::{self, SamplerSpec, Scheme};
use crate::sir::{
    coefficient_averages, integrate, CoefficientField, Diagnostics, IntegratorSpec, Network, Profile, RateField, RhsKind,
    SirState, SirTrajectory,
};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `‖u − v‖_p` of the step functions of two vectors on their common refinement.
///
/// Without `refine` the partitions must nest (one length divides the other).
pub fn step_embed_norm(u: &[f64], v: &[f64], p: Norm, refine: bool) -> Result<f64> {
    let (n, m) = (u.len(), v.len());
    if n == 0 || m == 0 {
        return Err(param("vector", "must be nonempty"));
    }
    let fine = n / gcd(n, m) * m;
    if !refine && fine != n.max(m) {
        return Err(Error::Partition {
            coarse: n.min(m),
            fine: n.max(m),
        });
    }
    let (fu, fv) = (fine / n, fine / m);
    let d = |q: usize| (u[q / fu] - v[q / fv]).abs();
    Ok(match p {
        Norm::L1 => (0..fine).map(d).sum::<f64>() / fine as f64,
        Norm::L2 => ((0..fine).map(|q| d(q).powi(2)).sum::<f64>() / fine as f64).sqrt(),
        Norm::Inf => (0..fine).map(d).fold(0.0, f64::max),
    })
}

/// Everything besides the graph that defines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub integrator: IntegratorSpec,
    pub kind: RhsKind,
    pub beta: RateField,
    pub gamma: RateField,
    /// Initial infected share; `s = 1 - i`, `r = 0`.
    pub infected: Profile,
}

impl Setup {
    pub fn initial(&self, n: usize) -> Result<SirState> {
        SirState::from_infected(self.infected.cell_means(n))
    }

    pub fn coefficients(&self, n: usize) -> Result<CoefficientField> {
        coefficient_averages(&self.beta, &self.gamma, n)
    }

    pub fn run(&self, network: &Network) -> Result<SirTrajectory> {
        let n = network.n();
        integrate(&self.integrator, self.kind, network, &self.coefficients(n)?, &self.initial(n)?)
    }
}

/// Coupling matrices for `W` at size `n`; time-dependent kernels are sampled per segment.
pub fn build_network(w: &Graphon, sampler: &SamplerSpec, n: usize) -> Result<Network> {
    if !w.is_time_dependent() {
        return Ok(Network::fixed(sampler.sample(w, 0.0, n)?));
    }
    if sampler.scheme.is_random() {
        return Err(Error::TimeDependent(sampler.scheme.name()));
    }
    let starts: Vec<f64> = match w {
        Graphon::Schedule(s) => s.segments().iter().map(|seg| seg.start).collect(),
        _ => vec![0.0],
    };
    let segments = starts
        .iter()
        .map(|&t| Ok((t, sampling::galerkin(w, t, n)?)))
        .collect::<Result<Vec<_>>>()?;
    Network::scheduled(segments)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub scheme: String,
    pub n: usize,
    pub norm: Norm,
    pub n_ref: usize,
    pub sup_error: f64,
    /// Error at each stored time, summed over `s`, `i`, `r`.
    pub series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub reference: Diagnostics,
    pub reports: Vec<ErrorReport>,
}

impl Study {
    pub fn strictly_decreasing(&self) -> bool {
        self.reports.windows(2).all(|w| w[1].sup_error < w[0].sup_error)
    }

    pub fn error(&self, n: usize) -> Option<f64> {
        self.reports.iter().find(|r| r.n == n).map(|r| r.sup_error)
    }
}

/// `sup_t Σ_{s,i,r} ‖x_n(t) − x_ref(t)‖_p` over the shared stored times.
pub fn trajectory_error(states: &[SirState], reference: &SirTrajectory, p: Norm) -> Result<Vec<f64>> {
    if states.len() != reference.states.len() {
        return Err(Error::Dimension {
            expected: reference.states.len(),
            got: states.len(),
        });
    }
    states
        .iter()
        .zip(&reference.states)
        .map(|(a, b)| {
            Ok(step_embed_norm(&a.s, &b.s, p, true)?
                + step_embed_norm(&a.i, &b.i, p, true)?
                + step_embed_norm(&a.r, &b.r, p, true)?)
        })
        .collect()
}

/// Errors of the `sampler` runs at each `n` against the Galerkin run at `n_ref`.
///
/// Random schemes are averaged over `n/2` replicas (at least one) seeded from `sampler.seed`.
pub fn convergence_study(
    w: &Graphon,
    sampler: &SamplerSpec,
    ns: &[usize],
    n_ref: usize,
    norm: Norm,
    setup: &Setup,
) -> Result<Study> {
    let max_n = ns.iter().copied().max().ok_or_else(|| param("ns", "must be nonempty"))?;
    if n_ref < 4 * max_n {
        return Err(param("n_ref", format!("{n_ref} is below 4 × max(ns) = {}", 4 * max_n)));
    }
    let galerkin = SamplerSpec {
        scheme: Scheme::Galerkin,
        seed: 0,
    };
    let reference = setup.run(&build_network(w, &galerkin, n_ref)?)?;
    let reports = ns
        .iter()
        .map(|&n| {
            let states = if sampler.scheme.is_random() {
                let seed = rng::child_seed(sampler.seed, &format!("study/{n}"));
                montecarlo(w, sampler.scheme, n, (n / 2).max(1), seed, setup)?.mean
            } else {
                setup.run(&build_network(w, sampler, n)?)?.states
            };
            let series = trajectory_error(&states, &reference, norm)?;
            Ok(ErrorReport {
                scheme: sampler.scheme.name().to_string(),
                n,
                norm,
                n_ref,
                sup_error: series.iter().copied().fold(0.0, f64::max),
                series,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Study {
        reference: reference.diagnostics,
        reports,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MontecarloEnsemble {
    pub n: usize,
    pub seeds: Vec<u64>,
    /// Replica indices dropped after a divergence, with the reason.
    pub excluded: Vec<(usize, String)>,
    pub times: Vec<f64>,
    pub mean: Vec<SirState>,
    /// Sample variance across replicas (zero for a single replica).
    pub variance: Vec<SirState>,
    /// Worst invariant diagnostics over the included replicas.
    pub diagnostics: Diagnostics,
}

impl MontecarloEnsemble {
    pub fn used(&self) -> usize {
        self.seeds.len() - self.excluded.len()
    }

    pub fn mean_trajectory(&self) -> SirTrajectory {
        SirTrajectory {
            dt: 0.0,
            times: self.times.clone(),
            states: self.mean.clone(),
            diagnostics: self.diagnostics,
            fingerprint: String::new(),
        }
    }
}

/// Seed of replica `q` under master seed `master`.
pub fn replica_seed(master: u64, q: usize) -> u64 {
    rng::child_seed(master, &format!("replica/{q}"))
}

fn flatten(states: &[SirState]) -> Vec<f64> {
    let mut out = Vec::new();
    for st in states {
        out.extend_from_slice(&st.s);
        out.extend_from_slice(&st.i);
        out.extend_from_slice(&st.r);
    }
    out
}

fn unflatten(y: &[f64], n: usize) -> Vec<SirState> {
    y.chunks(3 * n)
        .map(|c| SirState {
            s: c[..n].to_vec(),
            i: c[n..2 * n].to_vec(),
            r: c[2 * n..].to_vec(),
        })
        .collect()
}

/// `replicas` independent random graphs, one integration each, pointwise mean and variance.
///
/// Replicas run in parallel batches; the running mean and variance are
/// updated in replica order, so results do not depend on the thread count.
pub fn montecarlo(
    w: &Graphon,
    scheme: Scheme,
    n: usize,
    replicas: usize,
    master_seed: u64,
    setup: &Setup,
) -> Result<MontecarloEnsemble> {
    if replicas == 0 {
        return Err(param("replicas", "must be at least 1"));
    }
    if !scheme.is_random() {
        return Err(param("scheme", "Montecarlo averaging needs a random scheme"));
    }
    let seeds: Vec<u64> = (0..replicas).map(|q| replica_seed(master_seed, q)).collect();
    let coeff = setup.coefficients(n)?;
    let initial = setup.initial(n)?;
    let batch = 2 * rayon::current_num_threads().max(1);
    let (mut count, mut mean, mut m2) = (0usize, Vec::new(), Vec::new());
    let mut times = Vec::new();
    let mut excluded = Vec::new();
    let mut diagnostics: Option<Diagnostics> = None;
    for start in (0..replicas).step_by(batch) {
        let end = (start + batch).min(replicas);
        let runs: Vec<Result<SirTrajectory>> = (start..end)
            .into_par_iter()
            .map(|q| {
                let a = SamplerSpec { scheme, seed: seeds[q] }.sample(w, 0.0, n)?;
                integrate(&setup.integrator, setup.kind, &Network::fixed(a), &coeff, &initial)
            })
            .collect();
        for (q, run) in (start..end).zip(runs) {
            let tr = match run {
                Ok(tr) => tr,
                Err(e @ Error::Divergence { .. }) => {
                    excluded.push((q, e.to_string()));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let y = flatten(&tr.states);
            if count == 0 {
                mean = vec![0.0; y.len()];
                m2 = vec![0.0; y.len()];
                times = tr.times.clone();
            }
            count += 1;
            for ((mu, s2), x) in mean.iter_mut().zip(m2.iter_mut()).zip(&y) {
                let d = x - *mu;
                *mu += d / count as f64;
                *s2 += d * (x - *mu);
            }
            match diagnostics.as_mut() {
                Some(d) => d.merge(&tr.diagnostics),
                None => diagnostics = Some(tr.diagnostics),
            }
        }
    }
    let diagnostics = diagnostics.ok_or_else(|| param("replicas", "every replica diverged"))?;
    let var: Vec<f64> = m2.iter().map(|v| if count > 1 { v / (count - 1) as f64 } else { 0.0 }).collect();
    Ok(MontecarloEnsemble {
        n,
        seeds,
        excluded,
        times,
        mean: unflatten(&mean, n),
        variance: unflatten(&var, n),
        diagnostics,
    })
}

/// Test functions `φ(t, x) = a(x)·b(t)` for weak-* pairings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// `1`
    One,
    /// `x`
    X,
    /// `sin(2πx)·t/T`
    SinT,
    /// `x·sin(2πx)·t/T`
    XSinT,
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(TestFunction::One),
            "x" => Ok(TestFunction::X),
            "sin_t" => Ok(TestFunction::SinT),
            "x_sin_t" => Ok(TestFunction::XSinT),
            other => Err(Error::UnknownTestFunction(other.to_string())),
        }
    }
}

impl TestFunction {
    pub const ALL: [TestFunction; 4] = [TestFunction::One, TestFunction::X, TestFunction::SinT, TestFunction::XSinT];

    /// `∫_{x0}^{x1} a(x) dx` in closed form.
    fn space_integral(&self, x0: f64, x1: f64) -> f64 {
        let w = 2.0 * PI;
        let anti_sin = |x: f64| -(w * x).cos() / w;
        let anti_x_sin = |x: f64| -x * (w * x).cos() / w + (w * x).sin() / (w * w);
        match self {
            TestFunction::One => x1 - x0,
            TestFunction::X => 0.5 * (x1 * x1 - x0 * x0),
            TestFunction::SinT => anti_sin(x1) - anti_sin(x0),
            TestFunction::XSinT => anti_x_sin(x1) - anti_x_sin(x0),
        }
    }

    fn time_factor(&self, t: f64, horizon: f64) -> f64 {
        match self {
            TestFunction::One | TestFunction::X => 1.0,
            TestFunction::SinT | TestFunction::XSinT => t / horizon,
        }
    }
}

/// Composite Simpson on runs of equal spacing, trapezoid on a leftover interval.
fn time_quadrature(t: &[f64], f: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut q = 0;
    while q + 1 < t.len() {
        let h = t[q + 1] - t[q];
        let equal_next = q + 2 < t.len() && ((t[q + 2] - t[q + 1]) - h).abs() <= 1e-9 * h.abs().max(1e-300);
        if equal_next {
            total += h / 3.0 * (f[q] + 4.0 * f[q + 1] + f[q + 2]);
            q += 2;
        } else {
            total += 0.5 * h * (f[q] + f[q + 1]);
            q += 1;
        }
    }
    total
}

/// `∫₀ᵀ ∫₀¹ iⁿ(t, x) φ(t, x) dx dt`: exact in `x` per cell, Simpson in `t` over the stored times up to `T`.
pub fn weak_star_pairing(traj: &SirTrajectory, phi: TestFunction, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(param("horizon", format!("{horizon} must be positive")));
    }
    let n = traj.n();
    let h = 1.0 / n as f64;
    let weights: Vec<f64> = (0..n).map(|j| phi.space_integral(j as f64 * h, (j + 1) as f64 * h)).collect();
    let keep = traj.times.partition_point(|&t| t <= horizon * (1.0 + 1e-12));
    if keep < 2 {
        return Err(param("horizon", "needs at least two stored times"));
    }
    let values: Vec<f64> = traj.times[..keep]
        .iter()
        .zip(&traj.states)
        .map(|(&t, st)| phi.time_factor(t, horizon) * st.i.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    Ok(time_quadrature(&traj.times[..keep], &values))
}
