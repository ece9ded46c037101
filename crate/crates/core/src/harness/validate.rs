//! Self-check suite behind `ncl validate`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::{
    consensus_limit, linear_step, run_pure_consensus, ConsensusOperator, EnsembleState, HullSelector, Network,
    OperatorConfig, StepContext,
};
use crate::error::Result;
use crate::graph::{build_topology, metropolis_weights, Topology, WeightMatrix};
use crate::objectives::{generate_partial_quadratic, PartialQuadraticParams, QuadraticEnsemble};
use crate::optimizers::{dgd_run, dgd_transform_run, next_run, Algorithm, DgdForm, OptimizerConfig, RunRecord, StepSchedule};
use crate::rng::stream;
use crate::transforms::{Transform, TransformSchedule};

use super::{figure_schemes, sample_initial, ExperimentConfig, InitDist};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

/// Count of random (W, v) pairs, W row stochastic with entries in
/// [theta, 1 - theta], that break sp(Wv) <= (1 - 2 theta) sp(v).
pub fn span_contraction_violations(cases: usize, theta: f64, seed: u64) -> Result<usize> {
    let mut rng = stream(seed, &[0x4232]);
    let n_max = ((1.0 / theta).floor() as usize).clamp(2, 12);
    let mut bad = 0;
    for _ in 0..cases {
        let n = rng.random_range(2..=n_max);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|r| theta + (1.0 - n as f64 * theta) * r / s).collect()
            })
            .collect();
        let w = WeightMatrix::from_rows(rows)?;
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let x = EnsembleState::from_rows(&v.iter().map(|&a| vec![a]).collect::<Vec<_>>())?;
        let (sp, spw) = (x.span(), linear_step(&w, &x)?.span());
        if spw > (1.0 - 2.0 * theta) * sp + 1e-12 * sp.max(1.0) {
            bad += 1;
        }
    }
    Ok(bad)
}

fn ring5() -> Result<Network> {
    let g = build_topology(&Topology::Ring(5))?;
    let w = WeightMatrix::neighborhood_uniform(&g, 0.6, 0.2)?;
    Network::new(g, w)
}

fn example_step(op: ConsensusOperator, expect: [f64; 5], ratio: f64) -> Result<(bool, String)> {
    let net = ring5()?;
    let x0 = EnsembleState::from_rows(&[7.0, 2.0, 12.0, 2.0, 7.0].map(|v| vec![v]))?;
    let tr = run_pure_consensus(&net, &x0, &op, 1, 0.0, 0)?;
    let got = tr.final_state.column(0);
    let ok = got.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-12) && (tr.v_ratio[1] - ratio).abs() < 1e-15;
    Ok((ok, format!("x[1] = {got:?}, V ratio = {}", tr.v_ratio[1])))
}

fn same_bits(a: &RunRecord, b: &RunRecord) -> bool {
    a.x_final.as_slice().iter().zip(b.x_final.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn wrap19_problem(seed: u64) -> Result<(Network, QuadraticEnsemble, EnsembleState)> {
    let g = build_topology(&Topology::Wrap19)?;
    let w = metropolis_weights(&g);
    let obj = generate_partial_quadratic(&g, &PartialQuadraticParams::default(), seed)?;
    let x0 = sample_initial(&InitDist::ChiSquared { k: 5 }, 19, 38, seed)?;
    Ok((Network::new(g, w)?, obj, x0))
}

fn degeneracy_chain() -> Result<(bool, String)> {
    let (net, obj, x0) = wrap19_problem(1)?;
    let cfg = OptimizerConfig {
        iters: 100,
        ..OptimizerConfig::new(Algorithm::Next)
    };
    let wy = &net.weights;
    let base = next_run(&cfg, &obj, &net, &ConsensusOperator::Linear, wy, &x0, 0)?;
    let p1 = TransformSchedule::uniform(Transform::power(1.0)?);
    let variants = [
        ("transform identity", ConsensusOperator::Transform(TransformSchedule::identity())),
        ("transform p=1", ConsensusOperator::Transform(p1.clone())),
        (
            "hull with weight selector",
            ConsensusOperator::Hull {
                delta: 0.9,
                selector: HullSelector::Weights(net.weights.clone()),
                transform: TransformSchedule::identity(),
            },
        ),
    ];
    let mut failed = vec![];
    for (name, op) in variants {
        if !same_bits(&base, &next_run(&cfg, &obj, &net, &op, wy, &x0, 0)?) {
            failed.push(name.to_string());
        }
    }
    // Transformed hull with identity transforms is the plain hull.
    let hull = |t: TransformSchedule| ConsensusOperator::Hull {
        delta: 0.9,
        selector: HullSelector::Dirichlet,
        transform: t,
    };
    let a = next_run(&cfg, &obj, &net, &hull(TransformSchedule::identity()), wy, &x0, 3)?;
    let b = next_run(&cfg, &obj, &net, &hull(p1.clone()), wy, &x0, 3)?;
    if !same_bits(&a, &b) {
        failed.push("hull p=1".into());
    }
    let dgd = OptimizerConfig {
        iters: 100,
        schedule: StepSchedule::Constant { alpha: 1e-3 },
        dgd_form: DgdForm::AdaptThenCombine,
        ..OptimizerConfig::new(Algorithm::Dgd)
    };
    let plain = dgd_run(&dgd, &obj, &net, &x0, 0)?;
    for s in [TransformSchedule::identity(), p1] {
        if !same_bits(&plain, &dgd_transform_run(&dgd, &obj, &net, &s, &x0, 0)?) {
            failed.push(format!("dgd_transform {}", s.default_transform()));
        }
    }
    Ok((failed.is_empty(), if failed.is_empty() { "bitwise equal over 100 iterations".into() } else { format!("differs: {failed:?}") }))
}

fn tracking_identity() -> Result<(bool, String)> {
    let (net, obj, x0) = wrap19_problem(2)?;
    let cfg = OptimizerConfig {
        iters: 60,
        ..OptimizerConfig::new(Algorithm::Next)
    };
    let mut worst = 0.0f64;
    for op in [ConsensusOperator::Max, ConsensusOperator::PwMean(-3.0), ConsensusOperator::Linear] {
        let rec = next_run(&cfg, &obj, &net, &op, &net.weights, &x0, 0)?;
        worst = rec.metrics.iter().fold(worst, |m, r| m.max(r.y_residual));
    }
    Ok((worst <= 1e-9, format!("max tracking residual {worst:e}")))
}

fn quasi_mean_limits() -> Result<(bool, String)> {
    let g = build_topology(&Topology::Wrap19)?;
    let net = Network::new(g.clone(), metropolis_weights(&g))?;
    let x0 = sample_initial(&InitDist::Uniform { a: 1.0, b: 10.0 }, 19, 2, 5)?;
    let mut worst = 0.0f64;
    for p in [-3.0, -1.0, 0.0, 2.0, 5.0] {
        let op = ConsensusOperator::PwMean(p);
        let limit = consensus_limit(&x0, &op)?;
        let mut x = x0.clone();
        for t in 0..5000 {
            if x.span() < 1e-10 {
                break;
            }
            let ctx = StepContext {
                t,
                ..Default::default()
            };
            x = op.apply(&net, &x, &ctx)?.x;
        }
        for i in 0..x.n() {
            for (a, b) in x.row(i).iter().zip(&limit) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok((worst <= 1e-8, format!("max deviation from closed-form limit {worst:e}")))
}

fn round_trips() -> Result<(bool, String)> {
    let mut failed = vec![];
    let mut rng = stream(9, &[0x5254]);
    for k in -20..=20 {
        let t = Transform::power(k as f64 * 0.5)?;
        for _ in 0..20 {
            let x: f64 = rng.random_range(0.5..10.0);
            let back = t.inverse(t.forward(x));
            if (back - x).abs() > 1e-10 * x {
                failed.push(format!("{t} at {x}"));
                break;
            }
        }
    }
    for op in figure_schemes().into_iter().chain([OperatorConfig::Linear {}]) {
        let s = serde_json::to_string(&op)?;
        if OperatorConfig::from_json(&s)? != op {
            failed.push(s);
        }
    }
    let cfg = ExperimentConfig::default();
    if serde_json::from_str::<ExperimentConfig>(&serde_json::to_string(&cfg)?)? != cfg {
        failed.push("experiment config".into());
    }
    let (net, obj, x0) = wrap19_problem(4)?;
    if QuadraticEnsemble::from_json(&obj.to_json())?.to_json() != obj.to_json() {
        failed.push("instance spec".into());
    }
    let rec = next_run(
        &OptimizerConfig {
            iters: 5,
            ..OptimizerConfig::new(Algorithm::Next)
        },
        &obj,
        &net,
        &ConsensusOperator::Max,
        &net.weights,
        &x0,
        0,
    )?;
    if RunRecord::from_json(&rec.to_json())? != rec {
        failed.push("run record".into());
    }
    Ok((failed.is_empty(), if failed.is_empty() { "all round trips exact".into() } else { format!("failed: {failed:?}") }))
}

/// Run every self-check; never panics, failures land in the report.
pub fn run_validation() -> ValidationReport {
    let checks = vec![
        check("example_linear_step", || {
            example_step(ConsensusOperator::Linear, [6.0, 5.0, 8.0, 5.0, 6.0], 3.0 / 35.0)
        }),
        check("example_max_step", || example_step(ConsensusOperator::Max, [7.0, 12.0, 12.0, 12.0, 7.0], 0.2)),
        check("span_contraction_fuzz", || {
            let bad: usize = [0.05, 0.2]
                .iter()
                .map(|&th| span_contraction_violations(1000, th, 17))
                .sum::<Result<usize>>()?;
            Ok((bad == 0, format!("{bad} violations in 2000 cases")))
        }),
        check("quasi_mean_limits", quasi_mean_limits),
        check("round_trips", round_trips),
        check("degeneracy_chain", degeneracy_chain),
        check("tracking_identity", tracking_identity),
    ];
    ValidationReport { checks }
}
