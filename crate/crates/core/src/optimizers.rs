//! DGD and NEXT engines. Every engine runs one sequential trajectory and
//! returns a [`RunRecord`] with per-iteration metrics.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::consensus::{linear_step, ConsensusOperator, EnsembleState, Network, OperatorConfig, StepContext};
use crate::error::{Error, Result};
use crate::graph::{validate_weights, WeightMatrix};
use crate::objectives::{surrogate_argmin, Objective};
use crate::transforms::{Transform, TransformSchedule};

pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Step size alpha[t].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// a * (t + 1)^(-b)
    PowerDecay { a: f64, b: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::PowerDecay { a: 0.8, b: 0.53 }
    }
}

impl StepSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::PowerDecay { a, b } => a * ((t + 1) as f64).powf(-b),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { alpha } => alpha > 0.0 && alpha.is_finite(),
            StepSchedule::PowerDecay { a, b } => a > 0.0 && a.is_finite() && b >= 0.0 && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid step schedule {self:?}")))
        }
    }

    /// Diminishing and non-summable, as NEXT needs.
    pub fn is_diminishing(&self) -> bool {
        matches!(*self, StepSchedule::PowerDecay { b, .. } if b > 0.5 && b <= 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dgd,
    DgdTransform,
    DgdTrack,
    Next,
}

/// Where plain DGD applies its gradient step relative to mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DgdForm {
    /// x_i <- sum_j W_ij x_j - alpha grad f_i(x_i)
    #[default]
    CombineThenAdapt,
    /// x_i <- sum_j W_ij (x_j - alpha grad f_j(x_j)), the order the
    /// transformed variant uses.
    AdaptThenCombine,
}

fn default_tau() -> f64 {
    100.0
}
fn default_iters() -> usize {
    5000
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn linear() -> OperatorConfig {
    OperatorConfig::Linear {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    /// Consensus operator on x (NEXT only).
    #[serde(default = "linear")]
    pub consensus: OperatorConfig,
    /// Transform for dgd_transform.
    #[serde(default)]
    pub transform: Transform,
    #[serde(default)]
    pub dgd_form: DgdForm,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "one")]
    pub metric_every: usize,
    #[serde(default = "one")]
    pub consensus_rounds: usize,
    /// Lift components in [0, 1e-12) before positive-domain transforms.
    #[serde(default = "yes")]
    pub clamp_floor: bool,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        OptimizerConfig {
            algorithm,
            consensus: linear(),
            transform: Transform::Identity,
            dgd_form: DgdForm::default(),
            schedule: StepSchedule::default(),
            tau: default_tau(),
            iters: default_iters(),
            metric_every: 1,
            consensus_rounds: 1,
            clamp_floor: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.tau > 0.0) {
            return Err(Error::Parameter("tau must be positive".into()));
        }
        if self.metric_every == 0 || self.consensus_rounds == 0 {
            return Err(Error::Parameter("metric_every and consensus_rounds must be at least 1".into()));
        }
        self.transform.validated()?;
        self.consensus.build()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: usize,
    /// |F(x_a) - F*| / |F*|
    pub gap_rel: f64,
    /// sum_i |x_i^i - (x*)^i|^2 over own blocks
    pub dev_total: f64,
    pub span: f64,
    /// |mean(y) - mean(grad f_i(x_i))|_inf for tracking engines
    pub y_residual: f64,
    pub alpha: f64,
    /// F(mean x) - F*
    pub gap_mean: f64,
    /// |mean x - x*|^2
    pub dist_mean: f64,
    /// sum_i |x_i - mean x|^2
    pub dev_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub x_a: Vec<f64>,
    #[serde(rename = "F")]
    pub f: f64,
    pub x_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub version: String,
    pub config_hash: String,
}

impl Stamp {
    pub fn for_config(config: &serde_json::Value, seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(config).expect("json value serializes"));
        h.update(seed.to_le_bytes());
        Stamp {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: hex::encode(h.finalize()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: serde_json::Value,
    pub seed: u64,
    pub iters: usize,
    pub label: String,
    pub metrics: Vec<MetricRow>,
    #[serde(rename = "final")]
    pub final_state: FinalState,
    pub clamp_events: usize,
    pub fallbacks: usize,
    /// Set for engines without a convergence proof.
    pub empirical_only: bool,
    pub stamp: Stamp,
    /// Node copies at the last iterate.
    pub x_final: EnsembleState,
}

impl RunRecord {
    pub fn last(&self) -> &MetricRow {
        self.metrics.last().expect("records hold at least the initial row")
    }

    /// Row at iteration t, if recorded.
    pub fn at(&self, t: usize) -> Option<&MetricRow> {
        self.metrics.iter().find(|r| r.t == t)
    }

    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("record serializes");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: RunRecord = serde_json::from_str(s)?;
        if rec.metrics.is_empty() {
            return Err(Error::Config("run record has no metric rows".into()));
        }
        Ok(rec)
    }
}

/// Own-block assembly x_a, or the mean when no node owns coordinates.
pub fn assemble_xa(obj: &dyn Objective, x: &EnsembleState) -> Vec<f64> {
    let mean = x.mean_row();
    match obj.owned(0) {
        None => mean,
        Some(_) => {
            let mut xa = vec![0.0; obj.dim()];
            for i in 0..obj.n() {
                let r = obj.owned(i).expect("ownership is all or nothing");
                xa[r.clone()].copy_from_slice(&x.row(i)[r]);
            }
            xa
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn metric_row(obj: &dyn Objective, x: &EnsembleState, t: usize, alpha: f64, y_residual: f64) -> MetricRow {
    let (xs, fs) = obj.optimum();
    let xa = assemble_xa(obj, x);
    let mean = x.mean_row();
    let gap = (obj.total_value(&xa) - fs).abs();
    let gap_rel = if fs.abs() > 1e-300 { gap / fs.abs() } else { gap };
    let dev_total = (0..obj.n())
        .map(|i| match obj.owned(i) {
            Some(r) => sq_dist(&x.row(i)[r.clone()], &xs[r]),
            None => sq_dist(x.row(i), xs),
        })
        .sum();
    MetricRow {
        t,
        gap_rel,
        dev_total,
        span: x.span(),
        y_residual,
        alpha,
        gap_mean: obj.total_value(&mean) - fs,
        dist_mean: sq_dist(&mean, xs),
        dev_mean: (0..x.n()).map(|i| sq_dist(x.row(i), &mean)).sum(),
    }
}

fn gradients(obj: &dyn Objective, x: &EnsembleState) -> EnsembleState {
    let mut g = EnsembleState::zeros(x.n(), x.dim());
    for i in 0..x.n() {
        obj.gradient(i, x.row(i), g.row_mut(i));
    }
    g
}

fn tracking_residual(y: &EnsembleState, g: &EnsembleState) -> f64 {
    y.mean_row()
        .iter()
        .zip(g.mean_row())
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

fn guard(x: &EnsembleState, t: usize) -> Result<()> {
    let norm = x.sup_norm();
    if !x.is_finite() || norm > DIVERGENCE_GUARD {
        return Err(Error::Diverged { t, norm });
    }
    Ok(())
}

fn check_problem(obj: &dyn Objective, net: &Network, x0: &EnsembleState) -> Result<()> {
    if obj.n() != net.n() || x0.n() != net.n() {
        return Err(Error::Dimension {
            expected: net.n(),
            found: x0.n(),
        });
    }
    if x0.dim() != obj.dim() {
        return Err(Error::Dimension {
            expected: obj.dim(),
            found: x0.dim(),
        });
    }
    if obj.optimum().0.len() != obj.dim() {
        return Err(Error::Parameter("objective has no computed optimum".into()));
    }
    Ok(())
}

fn require_doubly_stochastic(w: &WeightMatrix, net: &Network, what: &str) -> Result<()> {
    let rep = validate_weights(w, &net.graph)?;
    if !rep.support_ok || !w.is_doubly_stochastic() {
        return Err(Error::Parameter(format!("{what} must be doubly stochastic on the graph")));
    }
    Ok(())
}

struct Recorder<'a> {
    obj: &'a dyn Objective,
    every: usize,
    iters: usize,
    rows: Vec<MetricRow>,
}

impl Recorder<'_> {
    fn maybe(&mut self, x: &EnsembleState, t: usize, alpha: f64, y_res: f64) {
        if t % self.every == 0 || t == self.iters {
            self.rows.push(metric_row(self.obj, x, t, alpha, y_res));
        }
    }
}

struct Outcome {
    x: EnsembleState,
    rows: Vec<MetricRow>,
    clamp_events: usize,
    fallbacks: usize,
}

fn finish(cfg: &OptimizerConfig, obj: &dyn Objective, seed: u64, label: String, out: Outcome, empirical_only: bool) -> RunRecord {
    let config = serde_json::to_value(cfg).expect("config serializes");
    let stamp = Stamp::for_config(&config, seed);
    let xa = assemble_xa(obj, &out.x);
    RunRecord {
        config,
        seed,
        iters: cfg.iters,
        label,
        metrics: out.rows,
        final_state: FinalState {
            f: obj.total_value(&xa),
            x_a: xa,
            x_mean: out.x.mean_row(),
        },
        clamp_events: out.clamp_events,
        fallbacks: out.fallbacks,
        empirical_only,
        stamp,
        x_final: out.x,
    }
}

/// Plain DGD on W = net.weights.
pub fn dgd_run(cfg: &OptimizerConfig, obj: &dyn Objective, net: &Network, x0: &EnsembleState, seed: u64) -> Result<RunRecord> {
    cfg.validate()?;
    check_problem(obj, net, x0)?;
    require_doubly_stochastic(&net.weights, net, "DGD weight matrix")?;
    let out = dgd_loop(cfg, obj, net, x0, None, seed)?;
    let label = format!("dgd[{}]", serde_json::to_value(cfg.dgd_form).unwrap().as_str().unwrap_or(""));
    Ok(finish(cfg, obj, seed, label, out, false))
}

/// DGD with the gradient step taken inside the transform.
pub fn dgd_transform_run(
    cfg: &OptimizerConfig,
    obj: &dyn Objective,
    net: &Network,
    schedule: &TransformSchedule,
    x0: &EnsembleState,
    seed: u64,
) -> Result<RunRecord> {
    cfg.validate()?;
    check_problem(obj, net, x0)?;
    require_doubly_stochastic(&net.weights, net, "DGD weight matrix")?;
    let out = dgd_loop(cfg, obj, net, x0, Some(schedule), seed)?;
    let label = format!("dgd_transform[{}]", schedule.default_transform());
    Ok(finish(cfg, obj, seed, label, out, false))
}

fn dgd_loop(
    cfg: &OptimizerConfig,
    obj: &dyn Objective,
    net: &Network,
    x0: &EnsembleState,
    schedule: Option<&TransformSchedule>,
    seed: u64,
) -> Result<Outcome> {
    let mut rec = Recorder {
        obj,
        every: cfg.metric_every,
        iters: cfg.iters,
        rows: vec![],
    };
    let mut x = x0.clone();
    let mut clamp_events = 0;
    let op = schedule.map(|s| ConsensusOperator::Transform(s.clone()));
    for t in 0..cfg.iters {
        let alpha = cfg.schedule.at(t);
        rec.maybe(&x, t, alpha, 0.0);
        let g = gradients(obj, &x);
        let descend = |x: &EnsembleState| {
            let mut v = x.clone();
            for (a, b) in v.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a -= alpha * b;
            }
            v
        };
        x = match (&op, cfg.dgd_form) {
            (Some(op), _) => {
                let ctx = StepContext {
                    t,
                    seed,
                    direction: None,
                    clamp_floor: cfg.clamp_floor,
                };
                let out = op.apply(net, &descend(&x), &ctx)?;
                clamp_events += out.clamp_events;
                out.x
            }
            (None, DgdForm::AdaptThenCombine) => linear_step(&net.weights, &descend(&x))?,
            (None, DgdForm::CombineThenAdapt) => {
                let mut mixed = linear_step(&net.weights, &x)?;
                for (a, b) in mixed.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *a -= alpha * b;
                }
                mixed
            }
        };
        guard(&x, t + 1)?;
    }
    rec.maybe(&x, cfg.iters, cfg.schedule.at(cfg.iters), 0.0);
    Ok(Outcome {
        x,
        rows: rec.rows,
        clamp_events,
        fallbacks: 0,
    })
}

/// DGD with gradient tracking: x mixes with the row-stochastic `net.weights`,
/// the tracker with the doubly stochastic `wy`.
pub fn dgd_track_run(
    cfg: &OptimizerConfig,
    obj: &dyn Objective,
    net: &Network,
    wy: &WeightMatrix,
    x0: &EnsembleState,
    seed: u64,
) -> Result<RunRecord> {
    cfg.validate()?;
    check_problem(obj, net, x0)?;
    require_doubly_stochastic(wy, net, "tracker matrix")?;
    let rep = validate_weights(&net.weights, &net.graph)?;
    if !rep.support_ok || !rep.row_stochastic {
        return Err(Error::Parameter("x matrix must be row stochastic on the graph".into()));
    }
    let mut rec = Recorder {
        obj,
        every: cfg.metric_every,
        iters: cfg.iters,
        rows: vec![],
    };
    let mut x = x0.clone();
    let mut g = gradients(obj, &x);
    let mut y = g.clone();
    for t in 0..cfg.iters {
        let alpha = cfg.schedule.at(t);
        rec.maybe(&x, t, alpha, tracking_residual(&y, &g));
        let mut next = linear_step(&net.weights, &x)?;
        for (a, b) in next.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *a -= alpha * b;
        }
        guard(&next, t + 1)?;
        let g_new = gradients(obj, &next);
        let mut y_new = linear_step(wy, &y)?;
        for ((a, gn), go) in y_new.as_mut_slice().iter_mut().zip(g_new.as_slice()).zip(g.as_slice()) {
            *a += gn - go;
        }
        x = next;
        y = y_new;
        g = g_new;
    }
    rec.maybe(&x, cfg.iters, cfg.schedule.at(cfg.iters), tracking_residual(&y, &g));
    let out = Outcome {
        x,
        rows: rec.rows,
        clamp_events: 0,
        fallbacks: 0,
    };
    Ok(finish(cfg, obj, seed, "dgd_track".into(), out, true))
}

/// NEXT with an arbitrary consensus operator on x and linear tracking on y.
pub fn next_run(
    cfg: &OptimizerConfig,
    obj: &dyn Objective,
    net: &Network,
    op: &ConsensusOperator,
    wy: &WeightMatrix,
    x0: &EnsembleState,
    seed: u64,
) -> Result<RunRecord> {
    cfg.validate()?;
    op.validate()?;
    check_problem(obj, net, x0)?;
    require_doubly_stochastic(wy, net, "tracker matrix")?;
    let k = obj.constraint();
    if let Some(i) = (0..x0.n()).find(|&i| !k.contains(x0.row(i))) {
        return Err(Error::Parameter(format!("initial point of node {} lies outside K", i + 1)));
    }
    let n = x0.n() as f64;
    let mut rec = Recorder {
        obj,
        every: cfg.metric_every,
        iters: cfg.iters,
        rows: vec![],
    };
    let mut x = x0.clone();
    let mut g = gradients(obj, &x);
    let mut y = g.clone();
    let mut pi = EnsembleState::zeros(x.n(), x.dim());
    for ((p, yv), gv) in pi.as_mut_slice().iter_mut().zip(y.as_slice()).zip(g.as_slice()) {
        *p = n * yv - gv;
    }
    let (mut clamp_events, mut fallbacks) = (0, 0);
    let clamp = cfg.clamp_floor && op.requires_positive();
    for t in 0..cfg.iters {
        let alpha = cfg.schedule.at(t);
        rec.maybe(&x, t, alpha, tracking_residual(&y, &g));
        let mut z = EnsembleState::zeros(x.n(), x.dim());
        for i in 0..x.n() {
            let xt = surrogate_argmin(x.row(i), g.row(i), pi.row(i), cfg.tau, k)?;
            for ((zv, xv), tv) in z.row_mut(i).iter_mut().zip(x.row(i)).zip(&xt) {
                *zv = xv + alpha * (tv - xv);
            }
        }
        let mut next = z;
        for _ in 0..cfg.consensus_rounds {
            let ctx = StepContext {
                t,
                seed,
                direction: Some(&y),
                clamp_floor: clamp,
            };
            let out = op.apply(net, &next, &ctx)?;
            clamp_events += out.clamp_events;
            fallbacks += out.fallbacks;
            next = out.x;
        }
        guard(&next, t + 1)?;
        let g_new = gradients(obj, &next);
        let mut y_new = linear_step(wy, &y)?;
        for ((a, gn), go) in y_new.as_mut_slice().iter_mut().zip(g_new.as_slice()).zip(g.as_slice()) {
            *a += gn - go;
        }
        for ((p, yv), gv) in pi.as_mut_slice().iter_mut().zip(y_new.as_slice()).zip(g_new.as_slice()) {
            *p = n * yv - gv;
        }
        x = next;
        y = y_new;
        g = g_new;
    }
    rec.maybe(&x, cfg.iters, cfg.schedule.at(cfg.iters), tracking_residual(&y, &g));
    let out = Outcome {
        x,
        rows: rec.rows,
        clamp_events,
        fallbacks,
    };
    Ok(finish(cfg, obj, seed, op.label(), out, false))
}

/// Dispatch on `cfg.algorithm`; NEXT builds its operator from the config.
pub fn run(
    cfg: &OptimizerConfig,
    obj: &dyn Objective,
    net: &Network,
    wy: &WeightMatrix,
    x0: &EnsembleState,
    seed: u64,
) -> Result<RunRecord> {
    match cfg.algorithm {
        Algorithm::Dgd => dgd_run(cfg, obj, net, x0, seed),
        Algorithm::DgdTransform => {
            dgd_transform_run(cfg, obj, net, &TransformSchedule::uniform(cfg.transform.validated()?), x0, seed)
        }
        Algorithm::DgdTrack => dgd_track_run(cfg, obj, net, wy, x0, seed),
        Algorithm::Next => next_run(cfg, obj, net, &cfg.consensus.build()?, wy, x0, seed),
    }
}
