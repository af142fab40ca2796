//! Experiment files and the commands behind the `dapo` binary: single runs
//! with repetitions, hyperparameter sweeps, algorithm comparisons, lemma
//! verification and MDP generation. Commands write files and return a
//! summary; printing is left to the caller.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::approx::LossKind;
use crate::engine::{execute, ActorMode, CriticConfig, DapoConfig, FunctionConfig, IterationLog, StepSchedule};
use crate::error::{Error, Result};
use crate::mdp::{gridworld, random_mdp, read_mdp, write_mdp, Policy, StateDistribution, TabularMdp};
use crate::mirror::MirrorKind;
use crate::rng::split_seed;
use crate::theory::{run_campaign, FuzzOptions, FuzzReport, Lemma};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum MdpSource {
    /// Dirichlet transitions and uniform costs.
    Random { n_states: usize, n_actions: usize, gamma: f64, seed: Option<u64> },
    /// `size × size` grid; the seed places the goal.
    Gridworld { size: usize, slip: f64, gamma: f64, seed: Option<u64> },
    /// An MDP JSON file; relative paths resolve against the config file.
    File { path: PathBuf },
}

impl MdpSource {
    /// Builds the MDP; `seed` is used when the source does not fix its own.
    pub fn build(&self, seed: u64, base_dir: Option<&Path>) -> Result<TabularMdp> {
        let as_config = |e: Error| match e {
            Error::Domain(m) | Error::Config(m) => Error::Config(format!("[mdp] {m}")),
            other => other,
        };
        match self {
            MdpSource::Random { n_states, n_actions, gamma, seed: s } => {
                random_mdp(*n_states, *n_actions, *gamma, s.unwrap_or(seed)).map_err(as_config)
            }
            MdpSource::Gridworld { size, slip, gamma, seed: s } => {
                gridworld(*size, *slip, *gamma, s.unwrap_or(seed)).map_err(as_config)
            }
            MdpSource::File { path } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                read_mdp(&full).map_err(|e| match e {
                    Error::Io(io) => Error::Config(format!("[mdp] cannot read {}: {io}", full.display())),
                    other => as_config(other),
                })
            }
        }
    }

    /// The same source with its seed replaced (files are unaffected).
    pub fn with_seed(&self, seed: u64) -> MdpSource {
        let mut out = self.clone();
        match &mut out {
            MdpSource::Random { seed: s, .. } | MdpSource::Gridworld { seed: s, .. } => *s = Some(seed),
            MdpSource::File { .. } => {}
        }
        out
    }
}

/// Value lists; the sweep runs their cartesian product. `eta` sets the
/// constant step or the geometric `eta0`; `lr` and `m` (actor steps) need an
/// SGD actor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Vec<LossKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub algorithms: Vec<LossKind>,
    /// Actor SGD steps per iteration.
    #[serde(default = "default_m")]
    pub m: Vec<usize>,
    /// MDP seeds; every algorithm runs on the same MDPs.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_m() -> Vec<usize> {
    vec![1, 10]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn one() -> usize {
    1
}

fn tabular() -> FunctionConfig {
    FunctionConfig::Tabular
}

fn exact_critic() -> CriticConfig {
    CriticConfig::Exact
}

fn exact_actor() -> ActorMode {
    ActorMode::Exact
}

/// A full experiment file: the run configuration plus MDP source, output
/// directory, repetitions and optional sweep/compare tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; repetition `r` runs with `split_seed(seed, r)`.
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    pub algorithm: LossKind,
    pub iterations: usize,
    #[serde(default)]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror: Option<MirrorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vartheta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Flat `[s * A + a]` probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_policy: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub mdp: MdpSource,
    pub schedule: StepSchedule,
    #[serde(default = "tabular")]
    pub function: FunctionConfig,
    #[serde(default = "exact_critic")]
    pub critic: CriticConfig,
    #[serde(default = "exact_actor")]
    pub actor: ActorMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSpec>,
    /// Directory of the file the config came from.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("serializable config")
    }

    pub fn build_mdp(&self) -> Result<TabularMdp> {
        self.mdp.build(self.seed, self.base_dir.as_deref())
    }

    /// Engine configuration for one run with the given seed.
    pub fn to_dapo(&self, mdp: &TabularMdp, seed: u64) -> Result<DapoConfig> {
        let dist = |name: &str, v: &Option<Vec<f64>>| -> Result<Option<StateDistribution>> {
            v.as_ref()
                .map(|w| StateDistribution::new(w.clone()).map_err(|e| Error::Config(format!("{name}: {e}"))))
                .transpose()
        };
        let initial_policy = self
            .initial_policy
            .as_ref()
            .map(|p| {
                Policy::new(mdp.n_states(), mdp.n_actions(), p.clone())
                    .map_err(|e| Error::Config(format!("initial_policy: {e}")))
            })
            .transpose()?;
        let cfg = DapoConfig {
            algorithm: self.algorithm,
            mirror: self.mirror,
            function: self.function.clone(),
            schedule: self.schedule,
            critic: self.critic,
            actor: self.actor.clone(),
            iterations: self.iterations,
            tau: self.tau,
            rho: dist("rho", &self.rho)?,
            vartheta: self.vartheta,
            weights: dist("weights", &self.weights)?,
            initial_policy,
            seed,
        };
        cfg.validate(mdp)?;
        Ok(cfg)
    }

    pub fn repetition_seeds(&self) -> Vec<u64> {
        (0..self.repetitions as u64).map(|r| split_seed(self.seed, r)).collect()
    }
}

/// Per-iteration mean and 95% t-interval of the value gap across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub repetitions: usize,
    pub seeds: Vec<u64>,
    pub k: Vec<usize>,
    pub mean: Vec<f64>,
    /// `None` with a single repetition.
    pub ci95_half_width: Vec<Option<f64>>,
    pub ci95_low: Vec<Option<f64>>,
    pub ci95_high: Vec<Option<f64>>,
}

impl Aggregate {
    pub fn from_logs(seeds: &[u64], logs: &[IterationLog]) -> Self {
        let r = logs.len();
        let rows = logs.iter().map(|l| l.records.len()).min().unwrap_or(0);
        let t = (r > 1)
            .then(|| StudentsT::new(0.0, 1.0, (r - 1) as f64).expect("positive degrees of freedom").inverse_cdf(0.975));
        let mut agg = Aggregate {
            repetitions: r,
            seeds: seeds.to_vec(),
            k: Vec::with_capacity(rows),
            mean: Vec::with_capacity(rows),
            ci95_half_width: Vec::with_capacity(rows),
            ci95_low: Vec::with_capacity(rows),
            ci95_high: Vec::with_capacity(rows),
        };
        for i in 0..rows {
            let xs: Vec<f64> = logs.iter().map(|l| l.records[i].value_gap).collect();
            let (mean, hw) = mean_ci(&xs, t);
            agg.k.push(logs[0].records[i].k);
            agg.mean.push(mean);
            agg.ci95_half_width.push(hw);
            agg.ci95_low.push(hw.map(|h| mean - h));
            agg.ci95_high.push(hw.map(|h| mean + h));
        }
        agg
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_half_width(&self) -> Option<f64> {
        self.ci95_half_width.last().copied().flatten()
    }
}

fn mean_ci(xs: &[f64], t: Option<f64>) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let hw = t.map(|t| {
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        t * (var / n).sqrt()
    });
    (mean, hw)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub csv_files: Vec<PathBuf>,
    pub aggregate: Aggregate,
    pub logs: Vec<IterationLog>,
}

/// `repetitions` seeded runs. Writes `run_<r>.csv`, `run_<r>.json` and
/// `aggregate.json` into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let mdp = cfg.build_mdp()?;
    let seeds = cfg.repetition_seeds();
    let configs: Vec<DapoConfig> = seeds.iter().map(|&s| cfg.to_dapo(&mdp, s)).collect::<Result<_>>()?;
    let logs: Vec<IterationLog> = configs.par_iter().map(|c| execute(&mdp, c)).collect::<Result<_>>()?;
    create_dir(out)?;
    let mut csv_files = Vec::with_capacity(logs.len());
    for (r, (log, c)) in logs.iter().zip(&configs).enumerate() {
        let csv = out.join(format!("run_{r:03}.csv"));
        log.write_csv(&csv)?;
        fs::write(out.join(format!("run_{r:03}.json")), log.to_json(c))?;
        csv_files.push(csv);
    }
    let aggregate = Aggregate::from_logs(&seeds, &logs);
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a ExperimentConfig,
        #[serde(flatten)]
        aggregate: &'a Aggregate,
    }
    let doc = serde_json::to_string_pretty(&Doc { config: cfg, aggregate: &aggregate }).expect("serializable");
    fs::write(out.join("aggregate.json"), doc)?;
    Ok(RunOutcome { csv_files, aggregate, logs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub algorithm: LossKind,
    pub eta: Option<f64>,
    pub lr: Option<f64>,
    pub m: Option<usize>,
    pub dir: PathBuf,
    /// Final-gap mean and CI half-width, or the failure message.
    pub result: std::result::Result<(f64, Option<f64>), String>,
}

pub const SWEEP_HEADER: &str = "point,algorithm,eta,lr,m,status,final_gap_mean,final_gap_ci95,message";

fn opt_field<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub config: ExperimentConfig,
    pub eta: Option<f64>,
    pub lr: Option<f64>,
    pub m: Option<usize>,
}

/// Grid points of the sweep, checked before anything runs.
pub fn sweep_grid(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| Error::config("sweep needs a [sweep] table"))?;
    let lists = [
        ("algorithm", spec.algorithm.as_ref().map(Vec::len)),
        ("eta", spec.eta.as_ref().map(Vec::len)),
        ("lr", spec.lr.as_ref().map(Vec::len)),
        ("m", spec.m.as_ref().map(Vec::len)),
    ];
    if lists.iter().all(|(_, l)| l.is_none()) {
        return Err(Error::config("[sweep] lists no values"));
    }
    if let Some((name, _)) = lists.iter().find(|(_, l)| *l == Some(0)) {
        return Err(Error::config(format!("[sweep] {name} is an empty list")));
    }
    if (spec.lr.is_some() || spec.m.is_some()) && !matches!(cfg.actor, ActorMode::Sgd { .. }) {
        return Err(Error::config("sweeping lr or m needs an sgd actor"));
    }
    let algs = spec.algorithm.clone().map(|v| v.into_iter().map(Some).collect()).unwrap_or(vec![None]);
    let etas = spec.eta.clone().map(|v| v.into_iter().map(Some).collect()).unwrap_or(vec![None]);
    let lrs = spec.lr.clone().map(|v| v.into_iter().map(Some).collect()).unwrap_or(vec![None]);
    let ms = spec.m.clone().map(|v| v.into_iter().map(Some).collect()).unwrap_or(vec![None]);
    let mut points = Vec::new();
    for alg in &algs {
        for eta in &etas {
            for lr in &lrs {
                for m in &ms {
                    let mut c = cfg.clone();
                    c.sweep = None;
                    if let Some(a) = alg {
                        c.algorithm = *a;
                    }
                    if let Some(e) = eta {
                        c.schedule = match c.schedule {
                            StepSchedule::Constant { .. } => StepSchedule::Constant { eta: *e },
                            StepSchedule::Geometric { ratio, .. } => StepSchedule::Geometric { eta0: *e, ratio },
                        };
                    }
                    if let ActorMode::Sgd { steps, lr: l, .. } = &mut c.actor {
                        if let Some(v) = lr {
                            *l = *v;
                        }
                        if let Some(v) = m {
                            *steps = *v;
                        }
                    }
                    points.push(GridPoint { index: points.len(), config: c, eta: *eta, lr: *lr, m: *m });
                }
            }
        }
    }
    Ok(points)
}

/// Runs every grid point into `out/pNNN/` and writes `out/summary.csv`. A
/// failing point is recorded and the sweep continues.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SweepPoint>> {
    let grid = sweep_grid(cfg)?;
    create_dir(out)?;
    let points: Vec<SweepPoint> = grid
        .into_par_iter()
        .map(|p| {
            let dir = out.join(format!("p{:03}", p.index));
            let result = cmd_run(&p.config, &dir)
                .map(|o| (o.aggregate.final_mean(), o.aggregate.final_half_width()))
                .map_err(|e| e.to_string());
            SweepPoint { index: p.index, algorithm: p.config.algorithm, eta: p.eta, lr: p.lr, m: p.m, dir, result }
        })
        .collect();
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for p in &points {
        let (status, mean, hw, msg) = match &p.result {
            Ok((mean, hw)) => {
                ("ok", format!("{mean:.16e}"), hw.map(|h| format!("{h:.16e}")).unwrap_or_default(), String::new())
            }
            Err(e) => ("failed", String::new(), String::new(), e.replace([',', '\n'], ";")),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{status},{mean},{hw},{msg}",
            p.index,
            p.algorithm,
            opt_field(p.eta),
            opt_field(p.lr),
            opt_field(p.m)
        );
    }
    fs::write(out.join("summary.csv"), csv)?;
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRun {
    pub algorithm: LossKind,
    pub m: usize,
    pub seed: u64,
    pub final_gap: f64,
    pub file: PathBuf,
}

pub const COMPARE_HEADER: &str = "algorithm,m,seed,k,value_gap";

/// Every listed algorithm on the same seeded MDPs for each actor step count
/// `m`. Writes `runs/<alg>_m<m>_seed<seed>.csv`, the long-format
/// `compare.csv` and `compare_summary.csv` (median and mean final gap).
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CompareRun>> {
    let spec = cfg.compare.as_ref().ok_or_else(|| Error::config("compare needs a [compare] table"))?;
    if spec.algorithms.len() < 2 {
        return Err(Error::config("[compare] needs at least two algorithms"));
    }
    if spec.m.is_empty() || spec.seeds.is_empty() {
        return Err(Error::config("[compare] m and seeds must be non-empty"));
    }
    let ActorMode::Sgd { lr, batch, .. } = cfg.actor else {
        return Err(Error::config("compare needs an sgd actor"));
    };
    let mut jobs = Vec::new();
    for &alg in &spec.algorithms {
        for &m in &spec.m {
            for &seed in &spec.seeds {
                jobs.push((alg, m, seed));
            }
        }
    }
    // build and validate everything before running
    let prepared: Vec<(LossKind, usize, u64, TabularMdp, DapoConfig)> = jobs
        .into_iter()
        .map(|(alg, m, seed)| {
            let mut c = cfg.clone();
            c.algorithm = alg;
            c.mirror = None;
            c.actor = ActorMode::Sgd { steps: m, lr, batch };
            let mdp = cfg.mdp.with_seed(seed).build(seed, cfg.base_dir.as_deref())?;
            let d = c.to_dapo(&mdp, split_seed(cfg.seed, seed))?;
            Ok((alg, m, seed, mdp, d))
        })
        .collect::<Result<_>>()?;
    let runs_dir = out.join("runs");
    create_dir(&runs_dir)?;
    let logs: Vec<IterationLog> =
        prepared.par_iter().map(|(_, _, _, mdp, d)| execute(mdp, d)).collect::<Result<_>>()?;
    let mut long = String::from(COMPARE_HEADER);
    long.push('\n');
    let mut runs = Vec::with_capacity(logs.len());
    for ((alg, m, seed, _, _), log) in prepared.iter().zip(&logs) {
        let file = runs_dir.join(format!("{alg}_m{m}_seed{seed}.csv"));
        log.write_csv(&file)?;
        for r in &log.records {
            let _ = writeln!(long, "{alg},{m},{seed},{},{:.16e}", r.k, r.value_gap);
        }
        runs.push(CompareRun { algorithm: *alg, m: *m, seed: *seed, final_gap: log.final_gap(), file });
    }
    fs::write(out.join("compare.csv"), long)?;
    let mut summary = String::from("algorithm,m,median_final_gap,mean_final_gap\n");
    for &alg in &spec.algorithms {
        for &m in &spec.m {
            let gaps: Vec<f64> = runs.iter().filter(|r| r.algorithm == alg && r.m == m).map(|r| r.final_gap).collect();
            let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
            let _ = writeln!(summary, "{alg},{m},{:.16e},{mean:.16e}", median(&gaps));
        }
    }
    fs::write(out.join("compare_summary.csv"), summary)?;
    Ok(runs)
}

/// Median final gap of one algorithm and step count in a comparison.
pub fn median_final_gap(runs: &[CompareRun], algorithm: LossKind, m: usize) -> f64 {
    let gaps: Vec<f64> = runs.iter().filter(|r| r.algorithm == algorithm && r.m == m).map(|r| r.final_gap).collect();
    median(&gaps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Overrides each campaign's default size.
    pub samples: Option<usize>,
    pub seed: u64,
    /// Fault injection for testing the harness; zero in normal use.
    pub bregman_offset: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub reports: Vec<FuzzReport>,
    /// Witness files written for failing campaigns.
    pub witnesses: Vec<PathBuf>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(FuzzReport::passed)
    }
}

/// Parses `all` or a single lemma key.
pub fn lemma_selection(selector: &str) -> Result<Vec<Lemma>> {
    if selector == "all" {
        Ok(Lemma::ALL.to_vec())
    } else {
        Ok(vec![selector.parse()?])
    }
}

/// Runs the selected fuzz campaigns; each failing one leaves
/// `witness_<lemma>.json` in `out`.
pub fn cmd_verify(selector: &str, opts: &VerifyOptions, out: &Path) -> Result<VerifyOutcome> {
    let lemmas = lemma_selection(selector)?;
    let mut reports = Vec::with_capacity(lemmas.len());
    let mut witnesses = Vec::new();
    for lemma in lemmas {
        let fuzz = FuzzOptions {
            samples: opts.samples.unwrap_or(lemma.default_samples()),
            seed: opts.seed,
            bregman_offset: opts.bregman_offset,
        };
        let report = run_campaign(lemma, &fuzz)?;
        if let Some(w) = &report.witness {
            create_dir(out)?;
            let path = out.join(format!("witness_{lemma}.json"));
            fs::write(&path, w.to_json())?;
            witnesses.push(path);
        }
        reports.push(report);
    }
    Ok(VerifyOutcome { reports, witnesses })
}

/// Only the `[mdp]` table of an experiment file, for `gen-mdp`.
#[derive(Debug, Clone, Deserialize)]
struct MdpOnly {
    mdp: MdpSource,
    #[serde(default)]
    seed: u64,
}

/// Reads the `[mdp]` table of `config` and writes the MDP as JSON.
pub fn cmd_gen_mdp(config: &Path, seed: Option<u64>, path: &Path) -> Result<TabularMdp> {
    let text =
        fs::read_to_string(config).map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
    let doc: MdpOnly = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    let source = match seed {
        Some(s) => doc.mdp.with_seed(s),
        None => doc.mdp,
    };
    let mdp = source.build(seed.unwrap_or(doc.seed), config.parent())?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_mdp(&mdp, path)?;
    Ok(mdp)
}
