//! Experiment configuration, scenario drivers and artifact emission.

mod output;
mod validate;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{run_pure_consensus, t_epsilon, ConsensusTrace, EnsembleState, Network, OperatorConfig};
use crate::error::{Error, Result};
use crate::graph::{metropolis_weights, NetworkConfig};
use crate::objectives::{
    generate_partial_quadratic, generate_strongly_convex, identity_fixture, PartialQuadraticParams, QuadraticEnsemble,
    StronglyConvexParams,
};
use crate::optimizers::{self, Algorithm, MetricRow, OptimizerConfig, RunRecord, Stamp};
use crate::rng::stream;

pub use output::{file_stem, read_record, render_svg, write_csv, write_record, write_svg, write_table, Curve};
pub use validate::{run_validation, Check, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    PureConsensus,
    Optimize,
    Sweep,
    ReproduceFig3,
    ReproduceFig4,
    Validate,
}

/// Distribution of every initial coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitDist {
    Uniform { a: f64, b: f64 },
    ChiSquared { k: u32 },
}

impl InitDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitDist::Uniform { a, b } if !(a.is_finite() && b.is_finite() && a < b) => {
                Err(Error::Config(format!("uniform init needs a < b, got ({a}, {b})")))
            }
            InitDist::ChiSquared { k: 0 } => Err(Error::Config("chi_squared init needs k > 0".into())),
            _ => Ok(()),
        }
    }
}

/// n x d initial ensemble, deterministic in `seed`. Chi-squared draws are
/// sums of k squared standard normals.
pub fn sample_initial(dist: &InitDist, n: usize, d: usize, seed: u64) -> Result<EnsembleState> {
    dist.validate()?;
    let mut rng = stream(seed, &[0x494e4954]);
    let mut x = EnsembleState::zeros(n, d);
    for v in x.as_mut_slice() {
        *v = match *dist {
            InitDist::Uniform { a, b } => rng.random_range(a..b),
            InitDist::ChiSquared { k } => (0..k)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    z * z
                })
                .sum(),
        };
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    PartialQuadratic(PartialQuadraticParams),
    StronglyConvex(StronglyConvexParams),
    /// Q = I on every neighborhood, b repeated.
    Fixture { block: usize, b: f64 },
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::PartialQuadratic(PartialQuadraticParams::default())
    }
}

impl ProblemConfig {
    pub fn build(&self, net: &Network, seed: u64) -> Result<QuadraticEnsemble> {
        match self {
            ProblemConfig::PartialQuadratic(p) => generate_partial_quadratic(&net.graph, p, seed),
            ProblemConfig::StronglyConvex(p) => {
                if p.n != net.n() {
                    return Err(Error::Config(format!(
                        "problem has n = {} but the network has {} nodes",
                        p.n,
                        net.n()
                    )));
                }
                generate_strongly_convex(p, seed)
            }
            ProblemConfig::Fixture { block, b } => identity_fixture(&net.graph, *block, *b),
        }
    }
}

fn default_init() -> InitDist {
    InitDist::ChiSquared { k: 5 }
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_ks() -> Vec<u32> {
    vec![5, 25, 100]
}
fn default_optimizer() -> OptimizerConfig {
    OptimizerConfig::new(Algorithm::Next)
}

/// Pure-consensus settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSettings {
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "default_cap")]
    pub max_iters: usize,
    /// Stop once V[t]/V[0] drops to this; 0 runs the full cap.
    #[serde(default)]
    pub stop_ratio: f64,
    /// Thresholds for the T_eps report; empty skips it.
    #[serde(default)]
    pub t_epsilon: Vec<f64>,
}

fn one() -> usize {
    1
}
fn default_cap() -> usize {
    5000
}

impl Default for ConsensusSettings {
    fn default() -> Self {
        ConsensusSettings {
            dim: 1,
            max_iters: default_cap(),
            stop_ratio: 0.0,
            t_epsilon: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Filled in from the CLI subcommand when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    /// Fixed instance seed; by default every run seed draws its own instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_seed: Option<u64>,
    #[serde(default = "default_init")]
    pub init: InitDist,
    /// Explicit initial rows, overriding `init` (pure consensus only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Schemes for pure consensus and sweeps; figure presets fill their own.
    #[serde(default)]
    pub operators: Vec<OperatorConfig>,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub consensus: ConsensusSettings,
    /// chi-squared parameters for the figure presets.
    #[serde(default = "default_ks")]
    pub ks: Vec<u32>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.initial.is_none() {
            self.init.validate()?;
        }
        if self.ks.contains(&0) {
            return Err(Error::Config("chi_squared k must be positive".into()));
        }
        for op in &self.operators {
            op.build().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.optimizer.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.network.build().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Shift every seed so the list starts at `base`.
    pub fn with_base_seed(mut self, base: u64) -> Self {
        let first = self.seeds.first().copied().unwrap_or(0);
        for s in &mut self.seeds {
            *s = base.wrapping_add(s.wrapping_sub(first));
        }
        self
    }
}

/// Scheme list plotted in both figure presets.
pub fn figure_schemes() -> Vec<OperatorConfig> {
    let mut v: Vec<OperatorConfig> = [-3.0, -1.0, 1.0, 2.0, 5.0].iter().map(|&p| OperatorConfig::PwMean { p }).collect();
    v.push(OperatorConfig::Max {});
    v.push(OperatorConfig::Min {});
    v.push(OperatorConfig::GradHull {
        delta: 0.9,
        grad_sign: Default::default(),
    });
    v.push(OperatorConfig::GradCube {
        delta: 0.9,
        grad_sign: Default::default(),
    });
    v
}

/// Everything that determines one optimizer run; hashed into the record stamp.
#[derive(Debug, Clone, Serialize)]
struct RunSpec<'a> {
    network: &'a NetworkConfig,
    problem: &'a ProblemConfig,
    problem_seed: u64,
    init: InitDist,
    optimizer: &'a OptimizerConfig,
    seed: u64,
}

#[derive(Debug, Clone)]
struct Job {
    label: String,
    optimizer: OptimizerConfig,
    init: InitDist,
    seed: u64,
    json: PathBuf,
    csv: PathBuf,
}

/// Rows of a T_eps report: one per (scheme, eps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TEpsilonRow {
    pub scheme: String,
    pub eps: f64,
    /// `None` marks a censored seed (no hit within `cap`).
    pub per_seed: Vec<Option<usize>>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub censored: usize,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TEpsilonComparison {
    pub eps: f64,
    pub p: f64,
    pub median_t1: Option<f64>,
    pub median_tp: Option<f64>,
    /// True when T_{eps,1} > T_{eps,p} on the medians.
    pub linear_slower: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TEpsilonReport {
    pub rows: Vec<TEpsilonRow>,
    pub comparisons: Vec<TEpsilonComparison>,
}

/// Quantile with censored entries treated as +infinity; `None` when the
/// quantile itself is censored.
fn censored_quantile(v: &[Option<usize>], q: f64) -> Option<f64> {
    let mut s: Vec<f64> = v.iter().map(|x| x.map_or(f64::INFINITY, |t| t as f64)).collect();
    if s.is_empty() {
        return None;
    }
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let val = s[lo] + (s[hi] - s[lo]) * (pos - lo as f64);
    let val = if lo == hi { s[lo] } else { val };
    val.is_finite().then_some(val)
}

/// Median with linear interpolation between the middle pair.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// T_eps for every (scheme, seed, eps); each seed runs to the smallest eps
/// or the cap.
pub fn t_epsilon_report(
    net: &Network,
    operators: &[OperatorConfig],
    init: &InitDist,
    dim: usize,
    seeds: &[u64],
    eps: &[f64],
    cap: usize,
) -> Result<TEpsilonReport> {
    if eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::Config("t_epsilon thresholds must lie in (0, 1)".into()));
    }
    let stop = eps.iter().copied().fold(f64::INFINITY, f64::min);
    let jobs: Vec<(usize, u64)> = (0..operators.len()).flat_map(|o| seeds.iter().map(move |&s| (o, s))).collect();
    let traces: Vec<Result<ConsensusTrace>> = pool().install(|| {
        jobs.par_iter()
            .map(|&(o, s)| {
                let x0 = sample_initial(init, net.n(), dim, s)?;
                run_pure_consensus(net, &x0, &operators[o].build()?, cap, stop, s)
            })
            .collect()
    });
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = vec![];
    for (o, op) in operators.iter().enumerate() {
        for &e in eps {
            let per_seed: Vec<Option<usize>> = traces[o * seeds.len()..(o + 1) * seeds.len()]
                .iter()
                .map(|tr| t_epsilon(tr, e))
                .collect();
            rows.push(TEpsilonRow {
                scheme: op.label(),
                eps: e,
                censored: per_seed.iter().filter(|x| x.is_none()).count(),
                median: censored_quantile(&per_seed, 0.5),
                q1: censored_quantile(&per_seed, 0.25),
                q3: censored_quantile(&per_seed, 0.75),
                per_seed,
                cap,
            });
        }
    }
    let mut comparisons = vec![];
    let pw = |p: f64| operators.iter().position(|o| *o == OperatorConfig::PwMean { p });
    let linear = pw(1.0).or_else(|| operators.iter().position(|o| *o == OperatorConfig::Linear {}));
    if let Some(l) = linear {
        for (o, op) in operators.iter().enumerate() {
            let OperatorConfig::PwMean { p } = *op else { continue };
            if p == 1.0 {
                continue;
            }
            for (k, &e) in eps.iter().enumerate() {
                let m1 = rows[l * eps.len() + k].median;
                let mp = rows[o * eps.len() + k].median;
                comparisons.push(TEpsilonComparison {
                    eps: e,
                    p,
                    median_t1: m1,
                    median_tp: mp,
                    linear_slower: match (m1, mp) {
                        (Some(a), Some(b)) => a > b,
                        (None, Some(_)) => true,
                        _ => false,
                    },
                });
            }
        }
    }
    Ok(TEpsilonReport { rows, comparisons })
}

/// Thread pool bounded by `NCL_THREADS` when set.
pub fn pool() -> rayon::ThreadPool {
    let threads = std::env::var("NCL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().expect("thread pool builds")
}

/// Median curve of one scheme over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianSeries {
    pub scheme: String,
    pub t: Vec<usize>,
    pub gap_rel: Vec<f64>,
    pub dev_total: Vec<f64>,
    pub span: Vec<f64>,
}

impl MedianSeries {
    pub fn from_records(scheme: &str, records: &[&RunRecord]) -> Self {
        let mut by_t: BTreeMap<usize, Vec<&MetricRow>> = BTreeMap::new();
        for r in records {
            for m in &r.metrics {
                by_t.entry(m.t).or_default().push(m);
            }
        }
        let mut s = MedianSeries {
            scheme: scheme.to_string(),
            t: vec![],
            gap_rel: vec![],
            dev_total: vec![],
            span: vec![],
        };
        for (t, rows) in by_t {
            s.t.push(t);
            s.gap_rel.push(median(&rows.iter().map(|m| m.gap_rel).collect::<Vec<_>>()));
            s.dev_total.push(median(&rows.iter().map(|m| m.dev_total).collect::<Vec<_>>()));
            s.span.push(median(&rows.iter().map(|m| m.span).collect::<Vec<_>>()));
        }
        s
    }

    pub fn value_at(&self, metric: Metric, t: usize) -> Option<f64> {
        let k = self.t.iter().position(|&x| x == t)?;
        Some(match metric {
            Metric::GapRel => self.gap_rel[k],
            Metric::DevTotal => self.dev_total[k],
            Metric::Span => self.span[k],
        })
    }

    fn curve(&self, metric: Metric) -> Curve {
        let ys = match metric {
            Metric::GapRel => &self.gap_rel,
            Metric::DevTotal => &self.dev_total,
            Metric::Span => &self.span,
        };
        Curve {
            label: self.scheme.clone(),
            points: self.t.iter().zip(ys).map(|(&t, &y)| (t as f64, y)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    GapRel,
    DevTotal,
    Span,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::GapRel => "gap_rel",
            Metric::DevTotal => "dev_total",
            Metric::Span => "span",
        }
    }
}

/// A group of runs over seeds that share one scheme, plus their medians.
#[derive(Debug, Clone)]
pub struct SweepGroup {
    pub name: String,
    pub medians: Vec<MedianSeries>,
}

impl SweepGroup {
    pub fn scheme(&self, label: &str) -> Option<&MedianSeries> {
        self.medians.iter().find(|m| m.scheme == label)
    }
}

/// Everything a scenario produced.
#[derive(Debug, Default)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub traces: Vec<ConsensusTrace>,
    pub groups: Vec<SweepGroup>,
    pub t_epsilon: Option<TEpsilonReport>,
    pub validation: Option<ValidationReport>,
    pub files: Vec<PathBuf>,
    /// Runs loaded from existing records instead of recomputed.
    pub resumed: usize,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.validation.as_ref().is_none_or(|v| v.passed())
    }
}

/// Options that are not part of the experiment's identity.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub resume: bool,
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let scenario = cfg
        .scenario
        .ok_or_else(|| Error::Config("no scenario given".into()))?;
    match scenario {
        Scenario::PureConsensus => pure_consensus(cfg, opts),
        Scenario::Optimize => {
            let op = cfg.optimizer.clone();
            let label = match op.algorithm {
                Algorithm::Next => op.consensus.label(),
                other => serde_json::to_value(other).unwrap().as_str().unwrap_or("run").to_string(),
            };
            sweep(cfg, opts, "optimize", &[(label, op)], cfg.init, Metric::GapRel)
        }
        Scenario::Sweep => {
            let ops = if cfg.operators.is_empty() {
                vec![cfg.optimizer.consensus.clone()]
            } else {
                cfg.operators.clone()
            };
            let variants = scheme_variants(&cfg.optimizer, &ops);
            sweep(cfg, opts, "sweep", &variants, cfg.init, Metric::GapRel)
        }
        Scenario::ReproduceFig3 | Scenario::ReproduceFig4 => {
            let (fig, metric) = if scenario == Scenario::ReproduceFig3 {
                ("fig3", Metric::GapRel)
            } else {
                ("fig4", Metric::DevTotal)
            };
            let ops = if cfg.operators.is_empty() {
                figure_schemes()
            } else {
                cfg.operators.clone()
            };
            let mut base = cfg.optimizer.clone();
            base.algorithm = Algorithm::Next;
            let variants = scheme_variants(&base, &ops);
            let mut all = ExperimentOutput::default();
            for &k in &cfg.ks {
                let part = sweep(cfg, opts, &format!("{fig}_k{k}"), &variants, InitDist::ChiSquared { k }, metric)?;
                all.records.extend(part.records);
                all.groups.extend(part.groups);
                all.files.extend(part.files);
                all.resumed += part.resumed;
            }
            Ok(all)
        }
        Scenario::Validate => {
            let report = run_validation();
            let mut out = ExperimentOutput::default();
            let json = opts.out.join("validate.json");
            output::write_text(&json, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            let csv = opts.out.join("validate.csv");
            let rows: Vec<Vec<String>> = report
                .checks
                .iter()
                .map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()])
                .collect();
            write_table(&csv, &["check", "passed", "detail"], &rows)?;
            out.files = vec![json, csv];
            out.validation = Some(report);
            Ok(out)
        }
    }
}

fn scheme_variants(base: &OptimizerConfig, ops: &[OperatorConfig]) -> Vec<(String, OptimizerConfig)> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    ops.iter()
        .map(|op| {
            let mut label = op.label();
            let count = seen.entry(label.clone()).or_insert(0);
            *count += 1;
            if *count > 1 {
                label = format!("{label}#{count}");
            }
            let mut c = base.clone();
            c.consensus = op.clone();
            (label, c)
        })
        .collect()
}

fn network(cfg: &ExperimentConfig) -> Result<Network> {
    let (g, w) = cfg.network.build()?;
    Network::new(g, w)
}

fn pure_consensus(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let net = network(cfg)?;
    let ops = if cfg.operators.is_empty() {
        vec![OperatorConfig::Linear {}, OperatorConfig::Max {}]
    } else {
        cfg.operators.clone()
    };
    let settings = &cfg.consensus;
    let seed = cfg.seeds[0];
    let x0 = match &cfg.initial {
        Some(rows) => EnsembleState::from_rows(rows).map_err(|e| Error::Config(e.to_string()))?,
        None => sample_initial(&cfg.init, net.n(), settings.dim, seed)?,
    };
    if x0.n() != net.n() {
        return Err(Error::Config(format!("initial has {} rows for {} nodes", x0.n(), net.n())));
    }
    let traces: Vec<Result<ConsensusTrace>> = pool().install(|| {
        ops.par_iter()
            .map(|op| run_pure_consensus(&net, &x0, &op.build()?, settings.max_iters, settings.stop_ratio, seed))
            .collect()
    });
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = ExperimentOutput::default();
    let dir = opts.out.join("consensus");
    let mut curves = vec![];
    for (op, tr) in ops.iter().zip(&traces) {
        let stem = file_stem(&op.label());
        let csv = dir.join(format!("{stem}.csv"));
        output::write_text(&csv, &tr.to_csv())?;
        let json = dir.join(format!("{stem}.json"));
        let v = serde_json::to_value(tr)?;
        output::write_text(&json, &(serde_json::to_string_pretty(&v)? + "\n"))?;
        out.files.extend([csv, json]);
        curves.push(Curve {
            label: op.label(),
            points: tr.v_ratio.iter().enumerate().map(|(t, &r)| (t as f64, r)).collect(),
        });
    }
    let svg = opts.out.join("consensus.svg");
    write_svg("Pure consensus", "iteration", "V[t] / V[0]", &curves, &svg)?;
    out.files.push(svg);
    if !settings.t_epsilon.is_empty() {
        let report = t_epsilon_report(
            &net,
            &ops,
            &cfg.init,
            settings.dim,
            &cfg.seeds,
            &settings.t_epsilon,
            settings.max_iters,
        )?;
        let fmt = |v: Option<f64>| v.map_or("censored".to_string(), |x| x.to_string());
        let rows: Vec<Vec<String>> = report
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.scheme.clone(),
                    r.eps.to_string(),
                    fmt(r.median),
                    fmt(r.q1),
                    fmt(r.q3),
                    r.censored.to_string(),
                    r.cap.to_string(),
                ]
            })
            .collect();
        let path = opts.out.join("t_epsilon.csv");
        write_table(&path, &["scheme", "eps", "median", "q1", "q3", "censored", "cap"], &rows)?;
        out.files.push(path);
        let json = opts.out.join("t_epsilon.json");
        output::write_text(&json, &(serde_json::to_string_pretty(&serde_json::to_value(&report)?)? + "\n"))?;
        out.files.push(json);
        out.t_epsilon = Some(report);
    }
    out.traces = traces;
    Ok(out)
}

fn run_job(cfg: &ExperimentConfig, net: &Network, job: &Job) -> Result<RunRecord> {
    let problem_seed = cfg.problem_seed.unwrap_or(job.seed);
    let spec = RunSpec {
        network: &cfg.network,
        problem: &cfg.problem,
        problem_seed,
        init: job.init,
        optimizer: &job.optimizer,
        seed: job.seed,
    };
    let spec = serde_json::to_value(&spec)?;
    let stamp = Stamp::for_config(&spec, job.seed);
    let obj = cfg.problem.build(net, problem_seed)?;
    let x0 = sample_initial(&job.init, net.n(), obj_dim(&obj), job.seed)?;
    let wy = metropolis_weights(&net.graph);
    let mut rec = optimizers::run(&job.optimizer, &obj, net, &wy, &x0, job.seed)?;
    rec.label = job.label.clone();
    rec.config = spec;
    rec.stamp = stamp;
    Ok(rec)
}

fn obj_dim(obj: &QuadraticEnsemble) -> usize {
    use crate::objectives::Objective;
    obj.dim()
}

fn expected_stamp(cfg: &ExperimentConfig, job: &Job) -> Result<Stamp> {
    let spec = RunSpec {
        network: &cfg.network,
        problem: &cfg.problem,
        problem_seed: cfg.problem_seed.unwrap_or(job.seed),
        init: job.init,
        optimizer: &job.optimizer,
        seed: job.seed,
    };
    Ok(Stamp::for_config(&serde_json::to_value(&spec)?, job.seed))
}

/// Every (variant, seed) run, medians per variant, one aggregate CSV and one SVG.
fn sweep(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    name: &str,
    variants: &[(String, OptimizerConfig)],
    init: InitDist,
    metric: Metric,
) -> Result<ExperimentOutput> {
    let net = network(cfg)?;
    let dir = opts.out.join(name);
    let jobs: Vec<Job> = variants
        .iter()
        .flat_map(|(label, oc)| {
            cfg.seeds.iter().map(|&seed| {
                let stem = format!("{}_seed{seed}", file_stem(label));
                Job {
                    label: label.clone(),
                    optimizer: oc.clone(),
                    init,
                    seed,
                    json: dir.join("runs").join(format!("{stem}.json")),
                    csv: dir.join("runs").join(format!("{stem}.csv")),
                }
            })
        })
        .collect();

    // Reuse matching records under --resume.
    let mut reused: Vec<Option<RunRecord>> = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let hit = if opts.resume && job.json.exists() {
            let want = expected_stamp(cfg, job)?;
            read_record(&job.json).ok().filter(|r| r.stamp == want)
        } else {
            None
        };
        reused.push(hit);
    }
    let resumed = reused.iter().filter(|r| r.is_some()).count();
    let computed: Vec<Result<RunRecord>> = pool().install(|| {
        jobs.par_iter()
            .zip(reused.into_par_iter())
            .map(|(job, hit)| match hit {
                Some(r) => Ok(r),
                None => run_job(cfg, &net, job),
            })
            .collect()
    });
    let records = computed.into_iter().collect::<Result<Vec<_>>>()?;

    let mut out = ExperimentOutput {
        resumed,
        ..Default::default()
    };
    for (job, rec) in jobs.iter().zip(&records) {
        write_csv(&rec.metrics, &job.csv)?;
        write_record(rec, &job.json)?;
        out.files.extend([job.csv.clone(), job.json.clone()]);
    }
    let medians: Vec<MedianSeries> = variants
        .iter()
        .map(|(label, _)| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| &r.label == label).collect();
            MedianSeries::from_records(label, &rs)
        })
        .collect();
    let mut rows = vec![];
    for m in &medians {
        for k in 0..m.t.len() {
            rows.push(vec![
                m.scheme.clone(),
                m.t[k].to_string(),
                m.gap_rel[k].to_string(),
                m.dev_total[k].to_string(),
                m.span[k].to_string(),
            ]);
        }
    }
    let agg = opts.out.join(format!("{name}_median.csv"));
    write_table(&agg, &["scheme", "t", "gap_rel", "dev_total", "span"], &rows)?;
    let svg = opts.out.join(format!("{name}.svg"));
    let curves: Vec<Curve> = medians.iter().map(|m| m.curve(metric)).collect();
    let title = format!("{name}: median {} over {} seeds", metric.name(), cfg.seeds.len());
    write_svg(&title, "iteration", metric.name(), &curves, &svg)?;
    out.files.extend([agg, svg]);
    out.groups.push(SweepGroup {
        name: name.to_string(),
        medians,
    });
    out.records = records;
    Ok(out)
}
