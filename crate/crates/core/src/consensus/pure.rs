use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::Transform;

use super::{ConsensusOperator, EnsembleState, Network, StepContext};

/// Closed-form consensus value of a scheme started from `x0`.
///
/// Mean-type schemes assume a doubly stochastic W. Selector-driven schemes
/// have path-dependent limits and are rejected.
pub fn consensus_limit(x0: &EnsembleState, op: &ConsensusOperator) -> Result<Vec<f64>> {
    let quasi_mean = |phi: Transform| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x0.dim());
        for l in 0..x0.dim() {
            let col = phi.apply(&x0.column(l))?;
            let m = col.iter().sum::<f64>() / x0.n() as f64;
            out.push(phi.inverse(m));
        }
        Ok(out)
    };
    match op {
        ConsensusOperator::Linear => Ok(x0.mean_row()),
        ConsensusOperator::Transform(s) if s.is_uniform() => quasi_mean(s.default_transform()),
        ConsensusOperator::PwMean(p) => quasi_mean(Transform::power(*p)?),
        ConsensusOperator::Max => Ok((0..x0.dim())
            .map(|l| x0.column(l).into_iter().fold(f64::NEG_INFINITY, f64::max))
            .collect()),
        ConsensusOperator::Min => Ok((0..x0.dim())
            .map(|l| x0.column(l).into_iter().fold(f64::INFINITY, f64::min))
            .collect()),
        other => Err(Error::Unsupported(format!(
            "no closed-form consensus limit for {}",
            other.label()
        ))),
    }
}

/// Per-iteration summary of a pure-consensus run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusTrace {
    pub scheme: String,
    /// Reference point for V[t]; `None` means each V[t] is taken about the
    /// current row mean.
    pub limit: Option<Vec<f64>>,
    pub span: Vec<f64>,
    pub variance: Vec<f64>,
    pub v_ratio: Vec<f64>,
    pub final_state: EnsembleState,
}

fn variance_about(x: &EnsembleState, c: &[f64]) -> f64 {
    (0..x.n())
        .map(|i| x.row(i).iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

impl ConsensusTrace {
    pub fn iterations(&self) -> usize {
        self.span.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,span,V_ratio\n");
        for (t, (sp, r)) in self.span.iter().zip(&self.v_ratio).enumerate() {
            let _ = writeln!(s, "{t},{sp:e},{r:e}");
        }
        s
    }
}

/// Iterate `op` from `x0` until V[t]/V[0] <= eps or `max_iters` steps.
/// Pass eps = 0 to run the full budget.
pub fn run_pure_consensus(
    net: &Network,
    x0: &EnsembleState,
    op: &ConsensusOperator,
    max_iters: usize,
    eps: f64,
    seed: u64,
) -> Result<ConsensusTrace> {
    op.validate()?;
    if op.needs_direction() {
        return Err(Error::Unsupported(format!(
            "{} needs a gradient tracker; run it inside an optimizer",
            op.label()
        )));
    }
    let limit = consensus_limit(x0, op).ok();
    let v = |x: &EnsembleState| match &limit {
        Some(c) => variance_about(x, c),
        None => variance_about(x, &x.mean_row()),
    };
    let v0 = v(x0);
    let ratio = |vt: f64| if v0 > 0.0 { vt / v0 } else { 0.0 };
    let mut trace = ConsensusTrace {
        scheme: op.label(),
        limit: limit.clone(),
        span: vec![x0.span()],
        variance: vec![v0],
        v_ratio: vec![ratio(v0)],
        final_state: x0.clone(),
    };
    let mut x = x0.clone();
    for t in 0..max_iters {
        if *trace.v_ratio.last().unwrap() <= eps {
            break;
        }
        let ctx = StepContext {
            t,
            seed,
            direction: None,
            clamp_floor: false,
        };
        x = op.apply(net, &x, &ctx)?.x;
        let vt = v(&x);
        trace.span.push(x.span());
        trace.variance.push(vt);
        trace.v_ratio.push(ratio(vt));
    }
    trace.final_state = x;
    Ok(trace)
}

/// First t with V[t]/V[0] <= eps; `None` when the trace never gets there.
pub fn t_epsilon(trace: &ConsensusTrace, eps: f64) -> Option<usize> {
    trace.v_ratio.iter().position(|&r| r <= eps)
}
