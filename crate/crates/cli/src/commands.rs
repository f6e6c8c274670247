//! The five subcommands. Each writes its files plus one manifest listing them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use graphon_sir::analysis;
use graphon_sir::cutnorm::{self, CutNormResult};
use graphon_sir::graphs::Provenance;
use graphon_sir::sampling::SamplerSpec;
use graphon_sir::sir::{integrate, Diagnostics, SirTrajectory};
use graphon_sir::{io, rng, AdjacencyMatrix, Graphon, Network};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::build::{self, SeedLog};
use crate::config::{self, Loaded};
use crate::manifest::{self, Manifest, Outputs};

/// Global flags shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    /// Overrides the scenario master seed.
    pub seed: Option<u64>,
    /// Overrides `[output] dir`.
    pub out: Option<PathBuf>,
}

/// Result of one command: the manifest and where it was written.
#[derive(Debug, Clone)]
pub struct Report {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
}

struct Run {
    loaded: Loaded,
    master: u64,
    out: Outputs,
    started: Instant,
    seeds: SeedLog,
    command: &'static str,
}

impl Run {
    fn start(command: &'static str, opts: &Options) -> Result<Self> {
        let loaded = config::load(&opts.config)?;
        let master = opts.seed.unwrap_or(loaded.scenario.seed);
        let dir = match (&opts.out, &loaded.scenario.output.dir) {
            (Some(d), _) => d.clone(),
            (None, Some(d)) => loaded.resolve(d),
            (None, None) => PathBuf::from("out"),
        };
        let prefix = loaded.scenario.output.prefix.clone().unwrap_or_else(|| loaded.scenario.name.clone());
        let out = Outputs::new(&dir, &prefix)?;
        Ok(Self {
            loaded,
            master,
            out,
            started: Instant::now(),
            seeds: SeedLog::new(),
            command,
        })
    }

    fn params(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(&self.loaded.scenario)?)
    }

    /// Seed and parameters; identical across reruns with the same inputs.
    fn fingerprint(&self) -> Result<String> {
        let text = serde_json::to_string(&self.params()?)?;
        Ok(manifest::sha256_hex(format!("{text}\n{}", self.master).as_bytes()))
    }

    fn finish(
        self,
        n: Option<usize>,
        diagnostics: Option<Diagnostics>,
        replica_seeds: Vec<u64>,
        summary: serde_json::Value,
    ) -> Result<Report> {
        let m = Manifest {
            format: manifest::FORMAT.to_string(),
            tool: "gsir".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.to_string(),
            scenario: self.loaded.scenario.name.clone(),
            config_path: self.loaded.path.display().to_string(),
            config_sha256: manifest::sha256_hex(self.loaded.text.as_bytes()),
            master_seed: self.master,
            seeds: self.seeds.clone(),
            replica_seeds,
            n,
            params: self.params()?,
            diagnostics,
            max_invariant_violation: diagnostics.map(|d| d.max_sum_violation),
            summary,
            outputs: Vec::new(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            created_unix: manifest::now_unix(),
        };
        let manifest_path = self.out.finish(m.clone())?;
        let manifest = read_manifest(&manifest_path)?;
        Ok(Report { manifest_path, manifest })
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_trajectory(out: &mut Outputs, tag: &str, traj: &SirTrajectory, csv: bool, binary: bool) -> Result<()> {
    if csv {
        out.write(&format!("{tag}trajectory.csv"), "trajectory_csv", |w| {
            io::write_trajectory_csv(w, &traj.times, &traj.states)
        })?;
    }
    if binary {
        out.write(&format!("{tag}trajectory.bin"), "trajectory_binary", |w| io::write_trajectory_binary(w, traj))?;
    }
    Ok(())
}

fn write_matrix(out: &mut Outputs, tag: &str, a: &AdjacencyMatrix, degrees: bool, matrix: bool) -> Result<()> {
    if degrees {
        out.write(&format!("{tag}degrees.csv"), "degrees_csv", |w| io::write_degrees_csv(w, &a.degrees()))?;
    }
    if matrix {
        out.write(&format!("{tag}step.csv"), "step_csv", |w| io::write_step_csv(w, &a.step_graphon()))?;
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Builds and integrates a scenario; returns the trajectory, the network and the seeds used.
pub fn trajectory(loaded: &Loaded, master: u64) -> Result<(SirTrajectory, Network, SeedLog)> {
    let mut seeds = SeedLog::new();
    let n = build::size(loaded)?;
    let (gcfg, w) = build::scenario_graphon(loaded)?;
    let network = build::network(&gcfg, &w, &loaded.scenario.sampler, n, master, "sampler", &mut seeds)?;
    let setup = build::setup(loaded, n, false)?;
    let traj = integrate(
        &setup.integrator,
        setup.kind,
        &network,
        &setup.coefficients(n)?,
        &setup.initial(n)?,
    )?;
    Ok((traj, network, seeds))
}

pub fn simulate(opts: &Options) -> Result<Report> {
    let mut run = Run::start("simulate", opts)?;
    let n = build::size(&run.loaded)?;
    let (mut traj, network, seeds) = trajectory(&run.loaded, run.master)?;
    run.seeds = seeds;
    traj.fingerprint = run.fingerprint()?;

    let o = run.loaded.scenario.output.clone();
    write_trajectory(&mut run.out, "", &traj, o.trajectory_csv, o.trajectory_binary)?;
    let mats = network.matrices();
    for (q, a) in mats.iter().enumerate() {
        let tag = if mats.len() == 1 { String::new() } else { format!("segment{q}_") };
        write_matrix(&mut run.out, &tag, a, o.degrees, o.matrix)?;
    }
    let last = traj.last();
    let summary = json!({
        "fingerprint": traj.fingerprint,
        "peak_time": traj.peak_time(),
        "peak_mean_infected": traj.mean_infected().into_iter().fold(0.0, f64::max),
        "final_mean": {"s": mean(&last.s), "i": mean(&last.i), "r": mean(&last.r)},
        "switch_times": network.switch_times(),
        "stored_times": traj.times.len(),
    });
    let d = traj.diagnostics;
    run.finish(Some(n), Some(d), Vec::new(), summary)
}

pub fn converge(opts: &Options) -> Result<Report> {
    let mut run = Run::start("converge", opts)?;
    let study = run
        .loaded
        .scenario
        .study
        .clone()
        .ok_or_else(|| anyhow!("converge needs a [study] table"))?;
    let (gcfg, w) = build::scenario_graphon(&run.loaded)?;
    if gcfg.trim.is_some() {
        bail!("converge does not take a trimmed graphon; use a trimmed sampler scheme");
    }
    let scfg = run.loaded.scenario.sampler.clone();
    let scheme = build::scheme(&scfg)?.ok_or_else(|| anyhow!("converge does not support the averaged model"))?;
    let seed = scfg.seed.unwrap_or_else(|| rng::child_seed(run.master, "study"));
    if scheme.is_random() {
        run.seeds.insert("study".to_string(), seed);
    }
    let setup = build::setup(&run.loaded, study.n_ref, true)?;
    let result = analysis::convergence_study(
        &w,
        &SamplerSpec { scheme, seed },
        &study.ns,
        study.n_ref,
        study.norm,
        &setup,
    )?;
    run.out.write("errors.csv", "errors_csv", |wr| io::write_errors_csv(wr, &result.reports))?;
    let errors: Vec<_> = result.reports.iter().map(|r| json!({"n": r.n, "sup_error": r.sup_error})).collect();
    let summary = json!({
        "scheme": scheme.name(),
        "norm": study.norm.name(),
        "n_ref": study.n_ref,
        "strictly_decreasing": result.strictly_decreasing(),
        "errors": errors,
    });
    run.finish(Some(study.n_ref), Some(result.reference), Vec::new(), summary)
}

pub fn montecarlo(opts: &Options) -> Result<Report> {
    let mut run = Run::start("montecarlo", opts)?;
    let n = build::size(&run.loaded)?;
    let (gcfg, w) = build::scenario_graphon(&run.loaded)?;
    let w = build::trimmed(&gcfg, w, n)?;
    let scfg = run.loaded.scenario.sampler.clone();
    let scheme = build::scheme(&scfg)?
        .filter(|s| s.is_random())
        .ok_or_else(|| anyhow!("montecarlo needs a random sampler scheme"))?;
    let replicas = run
        .loaded
        .scenario
        .montecarlo
        .as_ref()
        .and_then(|m| m.replicas)
        .unwrap_or((n / 2).max(1));
    let seed = scfg.seed.unwrap_or_else(|| rng::child_seed(run.master, "montecarlo"));
    run.seeds.insert("montecarlo".to_string(), seed);
    let setup = build::setup(&run.loaded, n, false)?;
    let ens = analysis::montecarlo(&w, scheme, n, replicas, seed, &setup)?;
    if ens.used() == 0 {
        bail!("every replica diverged");
    }
    let mut traj = ens.mean_trajectory();
    traj.dt = setup.integrator.dt;
    let o = run.loaded.scenario.output.clone();
    write_trajectory(&mut run.out, "mean_", &traj, o.trajectory_csv, o.trajectory_binary)?;
    run.out.write("variance.csv", "variance_csv", |wr| {
        io::write_variance_csv(wr, &ens.times, &ens.variance)
    })?;
    let excluded: Vec<_> = ens.excluded.iter().map(|(q, why)| json!({"replica": q, "reason": why})).collect();
    let summary = json!({
        "scheme": scheme.name(),
        "replicas": replicas,
        "used": ens.used(),
        "excluded": excluded,
        "peak_time": traj.peak_time(),
    });
    run.finish(Some(n), Some(ens.diagnostics), ens.seeds.clone(), summary)
}

/// JSON written by `cutnorm`; `exact` is the exact cut norm when it was computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutNormOutput {
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
    pub exact: Option<f64>,
    pub witness: (Vec<usize>, Vec<usize>),
    pub bilinear: Option<f64>,
    /// Permutation cut distance against a second graphon.
    pub distance: Option<cutnorm::CutDistance>,
}

impl CutNormOutput {
    fn new(n: usize, r: CutNormResult) -> Self {
        Self {
            n,
            lower: r.lower,
            upper: r.upper,
            exact: r.exact.then_some(r.lower),
            witness: r.witness,
            bilinear: r.bilinear,
            distance: None,
        }
    }
}

pub fn cutnorm_cmd(opts: &Options) -> Result<Report> {
    let mut run = Run::start("cutnorm", opts)?;
    let cfg = run.loaded.scenario.cutnorm.clone().unwrap_or(config::CutnormConfig {
        input: None,
        against: None,
        restarts: cutnorm::DEFAULT_RESTARTS,
        exact_limit: 16,
    });
    let seed = rng::child_seed(run.master, "cutnorm");
    run.seeds.insert("cutnorm".to_string(), seed);
    let (target, source) = match &cfg.input {
        Some(f) => (build::read_step(&run.loaded, f)?, json!({"input": f})),
        None => {
            let n = build::size(&run.loaded)?;
            let (gcfg, w) = build::scenario_graphon(&run.loaded)?;
            if w.is_time_dependent() {
                bail!("cutnorm compares static graphons");
            }
            let w = build::trimmed(&gcfg, w, n)?;
            let scfg = run.loaded.scenario.sampler.clone();
            let a = build::network(&gcfg, &w, &scfg, n, run.master, "sampler", &mut run.seeds)?;
            let g = graphon_sir::sampling::galerkin(&w, 0.0, n)?;
            let diff = a.matrices()[0].step_graphon().sub(&g.step_graphon())?;
            (diff, json!({"sampled_minus_galerkin": scfg.scheme}))
        }
    };
    let n = target.n();
    let mut res = if n <= cfg.exact_limit.min(cutnorm::EXACT_MAX_N) {
        CutNormOutput::new(n, cutnorm::cut_norm_exact(&target)?)
    } else {
        CutNormOutput::new(n, cutnorm::cut_norm_heuristic(&target, cfg.restarts, seed))
    };
    if let Some(f) = &cfg.against {
        let other = build::read_step(&run.loaded, f)?;
        res.distance = Some(cutnorm::cut_distance_permutation(&target, &other, false)?);
    }
    run.out.write("cutnorm.json", "cutnorm_json", |w| io::write_json(w, &res))?;
    let summary = json!({"source": source, "lower": res.lower, "upper": res.upper, "exact": res.exact});
    run.finish(Some(n), None, Vec::new(), summary)
}

struct Job {
    tag: String,
    value: Option<f64>,
    matrix: AdjacencyMatrix,
    seeds: SeedLog,
}

/// Adds the graphon table to the sampler's provenance record.
fn with_graphon(mut a: AdjacencyMatrix, graphon: serde_json::Value) -> AdjacencyMatrix {
    let m = &a.meta;
    a.meta = Provenance::new(&m.generator, json!({"sampler": m.params, "graphon": graphon}), m.seed);
    a
}

pub fn generate(opts: &Options) -> Result<Report> {
    let mut run = Run::start("generate", opts)?;
    let gen = run.loaded.scenario.generate.clone().unwrap_or(config::GenerateConfig {
        n: None,
        family: None,
        p: None,
        k: None,
        p_rewire: None,
        theta: None,
        breaks: None,
        sweep: None,
    });
    let n = match gen.n {
        Some(n) if n > 0 => n,
        Some(_) => bail!("`generate.n` must be positive"),
        None => build::size(&run.loaded)?,
    };
    let master = run.master;
    let jobs: Vec<Job> = match (gen.family, &gen.sweep) {
        (Some(f), None) => {
            let mut seeds = SeedLog::new();
            let a = build::family(f, &gen, n, master, &mut seeds)?;
            vec![Job {
                tag: "graph_".to_string(),
                value: None,
                matrix: a,
                seeds,
            }]
        }
        (Some(_), Some(_)) => bail!("`sweep` applies to graphon sampling, not to `family`"),
        (None, sweep) => {
            let gcfg = run
                .loaded
                .scenario
                .graphon
                .clone()
                .ok_or_else(|| anyhow!("generate needs `family` or a [graphon] table"))?;
            let points: Vec<(String, Option<f64>, config::GraphonConfig)> = match sweep {
                None => vec![("graph_".to_string(), None, gcfg)],
                Some(s) => s
                    .values
                    .iter()
                    .enumerate()
                    .map(|(q, &v)| (format!("sweep{q}_"), Some(v), gcfg.with(s.param, v)))
                    .collect(),
            };
            let scfg = run.loaded.scenario.sampler.clone();
            let loaded = &run.loaded;
            points
                .into_par_iter()
                .map(|(tag, value, cfg)| {
                    let w: Graphon = build::graphon(&cfg, loaded, 1.0)?;
                    if w.is_time_dependent() {
                        bail!("generate samples static graphons");
                    }
                    let mut seeds = SeedLog::new();
                    let role = match value {
                        None => "sampler".to_string(),
                        Some(_) => format!("{}sampler", tag.replace('_', "/")),
                    };
                    let net: Network = build::network(&cfg, &w, &scfg, n, master, &role, &mut seeds)?;
                    let graph = with_graphon(net.matrices()[0].clone(), serde_json::to_value(&cfg)?);
                    Ok(Job {
                        tag,
                        value,
                        matrix: graph,
                        seeds,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mut listed = Vec::new();
    for job in &jobs {
        let a = &job.matrix;
        run.out.write(&format!("{}adjacency.csv", job.tag), "adjacency_csv", |w| io::write_adjacency_csv(w, a))?;
        run.out.write(&format!("{}edges.txt", job.tag), "edge_list", |w| io::write_edge_list(w, a))?;
        run.out.write(&format!("{}degrees.csv", job.tag), "degrees_csv", |w| {
            io::write_degrees_csv(w, &a.degrees())
        })?;
        run.out.write(&format!("{}provenance.json", job.tag), "provenance_json", |w| io::write_json(w, &a.meta))?;
        run.seeds.extend(job.seeds.clone());
        listed.push(json!({
            "tag": job.tag,
            "value": job.value,
            "edges": a.edge_count(),
            "simple": a.is_simple(),
        }));
    }
    run.finish(Some(n), None, Vec::new(), json!({"graphs": listed}))
}
