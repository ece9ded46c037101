//! Consensus operators: maps that drive an ensemble of per-node copies onto
//! the plane where all copies agree.
//!
//! Every operator here is a pure function of (state, weights, seed). Random
//! selectors derive their stream from `(seed, t, node)` so a step can be
//! replayed in isolation.
//!
//! The unshrunk `max`/`min` operators are exact neighborhood extrema. The
//! convergence theory only covers their shrunk versions; they are kept for
//! experiment parity.

mod config;
mod gradient;
mod hull;
mod pure;

pub use config::{HullSelectorKind, OperatorConfig};
pub use gradient::{gradient_oriented_select, hull_distance, GradSelection, HullKind};
pub use hull::{cube_hull, shrunk_cube_select, shrunk_hull_select, AxisBox, CubeChoice, HullChoice};
pub use pure::{consensus_limit, run_pure_consensus, t_epsilon, ConsensusTrace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, WeightMatrix};
use crate::transforms::{clamp_to_floor, ScheduleSite, Transform, TransformSchedule};

/// Stacked per-node copies: row `i` is node `i`'s vector in R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnsemble")]
pub struct EnsembleState {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawEnsemble {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl TryFrom<RawEnsemble> for EnsembleState {
    type Error = String;

    fn try_from(r: RawEnsemble) -> std::result::Result<Self, String> {
        if r.n.checked_mul(r.d) != Some(r.data.len()) {
            return Err(format!("ensemble data has {} values, expected {} x {}", r.data.len(), r.n, r.d));
        }
        Ok(EnsembleState {
            n: r.n,
            d: r.d,
            data: r.data,
        })
    }
}

impl EnsembleState {
    pub fn zeros(n: usize, d: usize) -> Self {
        EnsembleState {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Parameter("ensemble needs at least one node".into()));
        }
        let d = rows[0].len();
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter("ensemble entries must be finite".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(EnsembleState { n, d, data })
    }

    /// One-dimensional ensemble from a column of node values.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        Self::from_rows(&rows)
    }

    /// Every node holds `x`.
    pub fn constant(n: usize, x: &[f64]) -> Self {
        let mut data = Vec::with_capacity(n * x.len());
        for _ in 0..n {
            data.extend_from_slice(x);
        }
        EnsembleState { n, d: x.len(), data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.data[i * self.d + l]
    }

    /// Dimension slice X_l across nodes.
    pub fn column(&self, l: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, l)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn mean_row(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for i in 0..self.n {
            for (acc, v) in m.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.n as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        m
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// max_i x_il - min_i x_il for dimension `l`.
    pub fn dim_range(&self, l: usize) -> f64 {
        let (lo, hi) = (0..self.n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = self.get(i, l);
            (lo.min(v), hi.max(v))
        });
        hi - lo
    }

    /// sp(X) = d * max_l (max_i x_il - min_i x_il).
    pub fn span(&self) -> f64 {
        let widest = (0..self.d).map(|l| self.dim_range(l)).fold(0.0, f64::max);
        self.d as f64 * widest
    }

    pub fn on_consensus_plane(&self) -> bool {
        self.span() == 0.0
    }
}

/// Free-function form of [`EnsembleState::span`].
pub fn span(x: &EnsembleState) -> f64 {
    x.span()
}

/// Communication graph with its averaging matrix.
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: Graph,
    pub weights: WeightMatrix,
}

impl Network {
    pub fn new(graph: Graph, weights: WeightMatrix) -> Result<Self> {
        if graph.n() != weights.n() {
            return Err(Error::Dimension {
                expected: graph.n(),
                found: weights.n(),
            });
        }
        Ok(Network { graph, weights })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

/// Sign applied to the tracker before it is used as the preferred direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradSign {
    /// Align with -y (descent direction).
    #[default]
    Negative,
    /// Align with +y, literally as the listing's argmax reads.
    Positive,
}

impl GradSign {
    pub fn factor(self) -> f64 {
        match self {
            GradSign::Negative => -1.0,
            GradSign::Positive => 1.0,
        }
    }
}

/// Free-portion selector of the shrunk convex hull, per node.
#[derive(Debug, Clone)]
pub enum HullSelector {
    /// Vertex centroid of the shrunk hull.
    Uniform,
    /// Dirichlet(1) draw for the free portion.
    Dirichlet,
    /// Final weights taken from row i of the matrix; every entry on Nb(i)
    /// must clear the (1 - delta) / |Nb(i)| floor.
    Weights(WeightMatrix),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubeSelector {
    /// Uniform draw from the shrunk box.
    Uniform,
    Center,
    /// Node's own pre-consensus value clamped into the shrunk box.
    Own,
}

#[derive(Debug, Clone)]
pub enum ConsensusOperator {
    Linear,
    Transform(TransformSchedule),
    PwMean(f64),
    Max,
    Min,
    Hull {
        delta: f64,
        selector: HullSelector,
        transform: TransformSchedule,
    },
    CubeHull {
        delta: f64,
        selector: CubeSelector,
    },
    GradHull {
        delta: f64,
        sign: GradSign,
    },
    GradCube {
        delta: f64,
        sign: GradSign,
    },
}

/// Per-step inputs besides the state.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepContext<'a> {
    pub t: usize,
    pub seed: u64,
    /// Tracker rows used as the preferred direction by gradient-oriented
    /// operators.
    pub direction: Option<&'a EnsembleState>,
    /// Lift components in [0, 1e-12) before positive-domain transforms.
    pub clamp_floor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x: EnsembleState,
    pub clamp_events: usize,
    pub fallbacks: usize,
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("delta must lie in [0, 1), got {delta}")))
    }
}

fn check_shape(w: &WeightMatrix, z: &EnsembleState) -> Result<()> {
    if w.n() != z.n() {
        return Err(Error::Dimension {
            expected: w.n(),
            found: z.n(),
        });
    }
    Ok(())
}

/// Row-wise W * Z. Accumulates over the support of each row in ascending
/// column order; the transform and hull kernels use the same order, which is
/// what makes their degenerate cases bit-identical to this one.
pub fn linear_step(w: &WeightMatrix, z: &EnsembleState) -> Result<EnsembleState> {
    check_shape(w, z)?;
    let mut out = EnsembleState::zeros(z.n(), z.dim());
    for i in 0..z.n() {
        let row = out.row_mut(i);
        for &j in w.support(i) {
            let wij = w.get(i, j);
            for (acc, v) in row.iter_mut().zip(z.row(j)) {
                *acc += wij * v;
            }
        }
    }
    Ok(out)
}

/// x_i = phi_{i,t}^-1( sum_j W_ij phi_{i,t}(z_j) ), element-wise.
pub fn transform_step(
    w: &WeightMatrix,
    z: &EnsembleState,
    schedule: &TransformSchedule,
    t: usize,
) -> Result<EnsembleState> {
    transform_step_inner(w, z, schedule, t, false).map(|(x, _)| x)
}

fn transform_step_inner(
    w: &WeightMatrix,
    z: &EnsembleState,
    schedule: &TransformSchedule,
    t: usize,
    clamp: bool,
) -> Result<(EnsembleState, usize)> {
    check_shape(w, z)?;
    if schedule.is_identity() {
        return Ok((linear_step(w, z)?, 0));
    }
    let (n, d) = (z.n(), z.dim());
    let mut src = z.clone();
    let clamp_events = if clamp && schedule.requires_positive() {
        clamp_to_floor(src.as_mut_slice())
    } else {
        0
    };
    let mut out = EnsembleState::zeros(n, d);
    if schedule.is_uniform() {
        let phi = schedule.default_transform();
        let mut mapped = src.clone();
        for j in 0..n {
            for (l, v) in mapped.row_mut(j).iter_mut().enumerate() {
                if !phi.in_domain(*v) {
                    return Err(domain_error(l, *v, j, t));
                }
                *v = phi.forward(*v);
            }
        }
        for i in 0..n {
            let row = out.row_mut(i);
            for &j in w.support(i) {
                let wij = w.get(i, j);
                for (acc, v) in row.iter_mut().zip(mapped.row(j)) {
                    *acc += wij * v;
                }
            }
            for v in row.iter_mut() {
                *v = phi.inverse(*v);
            }
        }
    } else {
        for i in 0..n {
            for l in 0..d {
                let phi = schedule.at(ScheduleSite { node: i, t, dim: l });
                let mut acc = 0.0;
                for &j in w.support(i) {
                    let v = src.get(j, l);
                    if !phi.in_domain(v) {
                        return Err(domain_error(l, v, j, t));
                    }
                    acc += w.get(i, j) * phi.forward(v);
                }
                out.row_mut(i)[l] = phi.inverse(acc);
            }
        }
    }
    Ok((out, clamp_events))
}

fn domain_error(dim: usize, value: f64, node: usize, t: usize) -> Error {
    Error::Domain {
        index: dim,
        value,
        site: None,
    }
    .at_site(node, t)
}

/// Weighted power mean (sum_j W_ij z_j^p)^(1/p); p = 0 is the geometric mean.
pub fn pw_mean_step(w: &WeightMatrix, z: &EnsembleState, p: f64) -> Result<EnsembleState> {
    let phi = Transform::power(p)?;
    transform_step(w, z, &TransformSchedule::uniform(phi), 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extreme {
    Max,
    Min,
}

/// Component-wise neighborhood extremum over Nb(i).
pub fn extreme_step(z: &EnsembleState, g: &Graph, mode: Extreme) -> Result<EnsembleState> {
    if g.n() != z.n() {
        return Err(Error::Dimension {
            expected: g.n(),
            found: z.n(),
        });
    }
    let mut out = EnsembleState::zeros(z.n(), z.dim());
    for i in 0..z.n() {
        let nb = g.closed_neighborhood(i);
        for l in 0..z.dim() {
            let vals = nb.iter().map(|&j| z.get(j, l));
            out.row_mut(i)[l] = match mode {
                Extreme::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                Extreme::Min => vals.fold(f64::INFINITY, f64::min),
            };
        }
    }
    Ok(out)
}

impl ConsensusOperator {
    pub fn validate(&self) -> Result<()> {
        match self {
            ConsensusOperator::PwMean(p) => Transform::power(*p).map(|_| ()),
            ConsensusOperator::Hull { delta, .. }
            | ConsensusOperator::CubeHull { delta, .. }
            | ConsensusOperator::GradHull { delta, .. }
            | ConsensusOperator::GradCube { delta, .. } => check_delta(*delta),
            _ => Ok(()),
        }
    }

    /// Whether the operator needs a positive state.
    pub fn requires_positive(&self) -> bool {
        match self {
            ConsensusOperator::Transform(s) => s.requires_positive(),
            ConsensusOperator::PwMean(_) => true,
            ConsensusOperator::Hull { transform, .. } => transform.requires_positive(),
            _ => false,
        }
    }

    pub fn needs_direction(&self) -> bool {
        matches!(self, ConsensusOperator::GradHull { .. } | ConsensusOperator::GradCube { .. })
    }

    pub fn label(&self) -> String {
        match self {
            ConsensusOperator::Linear => "linear".into(),
            ConsensusOperator::Transform(s) => format!("transform[{}]", s.default_transform()),
            ConsensusOperator::PwMean(p) => format!("p={p}"),
            ConsensusOperator::Max => "max".into(),
            ConsensusOperator::Min => "min".into(),
            ConsensusOperator::Hull { transform, .. } if !transform.is_identity() => {
                format!("hull[{}]", transform.default_transform())
            }
            ConsensusOperator::Hull { .. } => "hull".into(),
            ConsensusOperator::CubeHull { .. } => "cube_hull".into(),
            ConsensusOperator::GradHull { .. } => "grad_hull".into(),
            ConsensusOperator::GradCube { .. } => "grad_cube".into(),
        }
    }

    /// One consensus application to the pre-consensus ensemble `z`.
    pub fn apply(&self, net: &Network, z: &EnsembleState, ctx: &StepContext) -> Result<StepOutcome> {
        self.validate()?;
        check_shape(&net.weights, z)?;
        let plain = |x: EnsembleState| StepOutcome {
            x,
            clamp_events: 0,
            fallbacks: 0,
        };
        match self {
            ConsensusOperator::Linear => linear_step(&net.weights, z).map(plain),
            ConsensusOperator::Transform(s) => {
                let (x, clamp_events) = transform_step_inner(&net.weights, z, s, ctx.t, ctx.clamp_floor)?;
                Ok(StepOutcome {
                    x,
                    clamp_events,
                    fallbacks: 0,
                })
            }
            ConsensusOperator::PwMean(p) => {
                let s = TransformSchedule::uniform(Transform::power(*p)?);
                let (x, clamp_events) = transform_step_inner(&net.weights, z, &s, ctx.t, ctx.clamp_floor)?;
                Ok(StepOutcome {
                    x,
                    clamp_events,
                    fallbacks: 0,
                })
            }
            ConsensusOperator::Max => extreme_step(z, &net.graph, Extreme::Max).map(plain),
            ConsensusOperator::Min => extreme_step(z, &net.graph, Extreme::Min).map(plain),
            ConsensusOperator::Hull {
                delta,
                selector,
                transform,
            } => hull_step(net, z, *delta, selector, transform, ctx),
            ConsensusOperator::CubeHull { delta, selector } => cube_step(net, z, *delta, *selector, ctx).map(plain),
            ConsensusOperator::GradHull { delta, sign } => grad_step(net, z, *delta, HullKind::Convex, *sign, ctx),
            ConsensusOperator::GradCube { delta, sign } => grad_step(net, z, *delta, HullKind::Cube, *sign, ctx),
        }
    }
}

fn neighborhood_points(z: &EnsembleState, nb: &[usize]) -> Vec<Vec<f64>> {
    nb.iter().map(|&j| z.row(j).to_vec()).collect()
}

fn hull_step(
    net: &Network,
    z: &EnsembleState,
    delta: f64,
    selector: &HullSelector,
    schedule: &TransformSchedule,
    ctx: &StepContext,
) -> Result<StepOutcome> {
    let (n, d) = (z.n(), z.dim());
    let mut src = z.clone();
    let clamp_events = if ctx.clamp_floor && schedule.requires_positive() {
        clamp_to_floor(src.as_mut_slice())
    } else {
        0
    };
    let mut out = EnsembleState::zeros(n, d);
    for i in 0..n {
        let nb = net.graph.closed_neighborhood(i);
        let mut pts = neighborhood_points(&src, nb);
        if !schedule.is_identity() {
            for (&j, p) in nb.iter().zip(pts.iter_mut()) {
                for (l, v) in p.iter_mut().enumerate() {
                    let phi = schedule.at(ScheduleSite { node: i, t: ctx.t, dim: l });
                    if !phi.in_domain(*v) {
                        return Err(domain_error(l, *v, j, ctx.t));
                    }
                    *v = phi.forward(*v);
                }
            }
        }
        let supplied;
        let choice = match selector {
            HullSelector::Uniform => HullChoice::Uniform,
            HullSelector::Dirichlet => HullChoice::Dirichlet(crate::rng::mix(ctx.seed, &[ctx.t as u64, i as u64, 0x4855])),
            HullSelector::Weights(m) => {
                if m.n() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        found: m.n(),
                    });
                }
                if let Some(&j) = m.support(i).iter().find(|j| nb.binary_search(j).is_err()) {
                    return Err(Error::SupportViolation { row: i, col: j });
                }
                supplied = nb.iter().map(|&j| m.get(i, j)).collect::<Vec<_>>();
                HullChoice::Weights(&supplied)
            }
        };
        let (mut x, _) = shrunk_hull_select(&pts, delta, choice)?;
        if !schedule.is_identity() {
            for (l, v) in x.iter_mut().enumerate() {
                *v = schedule.at(ScheduleSite { node: i, t: ctx.t, dim: l }).inverse(*v);
            }
        }
        out.row_mut(i).copy_from_slice(&x);
    }
    Ok(StepOutcome {
        x: out,
        clamp_events,
        fallbacks: 0,
    })
}

fn cube_step(
    net: &Network,
    z: &EnsembleState,
    delta: f64,
    selector: CubeSelector,
    ctx: &StepContext,
) -> Result<EnsembleState> {
    let mut out = EnsembleState::zeros(z.n(), z.dim());
    for i in 0..z.n() {
        let pts = neighborhood_points(z, net.graph.closed_neighborhood(i));
        let choice = match selector {
            CubeSelector::Uniform => CubeChoice::Uniform(crate::rng::mix(ctx.seed, &[ctx.t as u64, i as u64, 0x4342])),
            CubeSelector::Center => CubeChoice::Center,
            CubeSelector::Own => CubeChoice::Clamp(z.row(i)),
        };
        let x = shrunk_cube_select(&pts, delta, choice)?;
        out.row_mut(i).copy_from_slice(&x);
    }
    Ok(out)
}

fn grad_step(
    net: &Network,
    z: &EnsembleState,
    delta: f64,
    kind: HullKind,
    sign: GradSign,
    ctx: &StepContext,
) -> Result<StepOutcome> {
    let dir_state = ctx
        .direction
        .ok_or_else(|| Error::Parameter("gradient-oriented consensus needs a direction".into()))?;
    if dir_state.n() != z.n() || dir_state.dim() != z.dim() {
        return Err(Error::Dimension {
            expected: z.dim(),
            found: dir_state.dim(),
        });
    }
    let mut out = EnsembleState::zeros(z.n(), z.dim());
    let mut fallbacks = 0;
    for i in 0..z.n() {
        let pts = neighborhood_points(z, net.graph.closed_neighborhood(i));
        let dir: Vec<f64> = dir_state.row(i).iter().map(|v| sign.factor() * v).collect();
        let sel = gradient_oriented_select(&pts, delta, kind, z.row(i), &dir)?;
        fallbacks += usize::from(sel.fallback);
        out.row_mut(i).copy_from_slice(&sel.x);
    }
    Ok(StepOutcome {
        x: out,
        clamp_events: 0,
        fallbacks,
    })
}

/// Uniform sample of an ensemble from U(lo, hi).
#[cfg(test)]
pub(crate) fn uniform_ensemble(n: usize, d: usize, lo: f64, hi: f64, seed: u64) -> EnsembleState {
    use rand::Rng;
    let stream = crate::rng::stream;
    let mut rng = stream(seed, &[0x554e]);
    let mut x = EnsembleState::zeros(n, d);
    for v in x.as_mut_slice() {
        *v = rng.random_range(lo..hi);
    }
    x
}
