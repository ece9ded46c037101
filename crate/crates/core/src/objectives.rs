//! Sum-of-quadratics objectives F(x) = sum_i f_i(x) with
//! f_i(x) = 1/2 x_S^T Q_i x_S + b_i^T x_S, where x_S picks the coordinates
//! node i depends on.
//!
//! The experiment family draws Q_i = M_i^T M_i with M_i over the stacked
//! blocks of the node's closed neighborhood, so each f_i only sees its
//! neighbors' variables.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::AxisBox;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::stream;

pub const STRONG_CONVEXITY_GATE: f64 = 1e-8;
pub const MAX_RESAMPLES: usize = 32;
pub const MAX_CONDITION: f64 = 1e12;
/// The aggregate Hessian is dense.
pub const MAX_DIM: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintSet {
    #[default]
    AllSpace,
    NonnegativeOrthant,
}

impl ConstraintSet {
    pub fn project(&self, x: &mut [f64]) {
        if let ConstraintSet::NonnegativeOrthant = self {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ConstraintSet::AllSpace => true,
            ConstraintSet::NonnegativeOrthant => x.iter().all(|&v| v >= 0.0),
        }
    }
}

/// Per-node smooth objective with a known aggregate optimum.
pub trait Objective: Send + Sync {
    fn n(&self) -> usize;
    fn dim(&self) -> usize;
    fn value(&self, i: usize, x: &[f64]) -> f64;
    /// Writes grad f_i(x) into `out` (length `dim`).
    fn gradient(&self, i: usize, x: &[f64], out: &mut [f64]);
    fn constraint(&self) -> ConstraintSet;
    /// Coordinates node i owns; `None` when every node shares the full vector.
    fn owned(&self, i: usize) -> Option<std::ops::Range<usize>>;
    /// (x*, F*) of the aggregate problem.
    fn optimum(&self) -> (&[f64], f64);

    fn total_value(&self, x: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.value(i, x)).sum()
    }

    fn total_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        let mut buf = vec![0.0; self.dim()];
        for i in 0..self.n() {
            self.gradient(i, x, &mut buf);
            g.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
        }
        g
    }
}

/// One node's quadratic over the coordinates `idx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeQuadratic {
    pub idx: Vec<usize>,
    /// Q_i, row-major, `idx.len()` square.
    pub q: Vec<f64>,
    pub b: Vec<f64>,
    /// Factor M_i with Q_i = M_i^T M_i when the instance was drawn that way.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<f64>>,
}

impl NodeQuadratic {
    pub fn from_factor(idx: Vec<usize>, m: &DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        let k = idx.len();
        if m.ncols() != k || b.len() != k {
            return Err(Error::Dimension {
                expected: k,
                found: m.ncols(),
            });
        }
        let q = m.transpose() * m;
        Ok(NodeQuadratic {
            idx,
            q: row_major(&q),
            b,
            m: Some(row_major(m)),
        })
    }

    pub fn from_hessian(idx: Vec<usize>, q: &DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        let k = idx.len();
        if q.nrows() != k || q.ncols() != k || b.len() != k {
            return Err(Error::Dimension {
                expected: k,
                found: q.nrows(),
            });
        }
        let sym = (q + q.transpose()) * 0.5;
        Ok(NodeQuadratic {
            idx,
            q: row_major(&sym),
            b,
            m: None,
        })
    }

    fn k(&self) -> usize {
        self.idx.len()
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.k(), self.k(), &self.q)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let k = self.k();
        let mut v = 0.0;
        for r in 0..k {
            let xr = x[self.idx[r]];
            let row = &self.q[r * k..(r + 1) * k];
            let qx: f64 = row.iter().zip(&self.idx).map(|(q, &c)| q * x[c]).sum();
            v += xr * (0.5 * qx + self.b[r]);
        }
        v
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let k = self.k();
        for r in 0..k {
            let row = &self.q[r * k..(r + 1) * k];
            let qx: f64 = row.iter().zip(&self.idx).map(|(q, &c)| q * x[c]).sum();
            out[self.idx[r]] += qx + self.b[r];
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            v.push(m[(r, c)]);
        }
    }
    v
}

/// Serializable description; the aggregate and optimum are recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub n: usize,
    pub dim: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub block: Option<usize>,
    #[serde(default)]
    pub constraint: ConstraintSet,
    pub nodes: Vec<NodeQuadratic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_star: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct QuadraticEnsemble {
    n: usize,
    dim: usize,
    /// Own-block width; node i owns [i*block, (i+1)*block).
    block: Option<usize>,
    constraint: ConstraintSet,
    nodes: Vec<NodeQuadratic>,
    a: DMatrix<f64>,
    c: DVector<f64>,
    x_star: Vec<f64>,
    f_star: f64,
    lambda_min: f64,
    lambda_max: f64,
    seed: Option<u64>,
    resamples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Gradient bound over the region.
    pub b: f64,
    /// Gradient Lipschitz constant max_i lambda_max(Q_i).
    pub l_f: f64,
    /// Strong convexity lambda_min(A) / n.
    pub nu: f64,
}

fn aggregate(dim: usize, nodes: &[NodeQuadratic]) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = DMatrix::zeros(dim, dim);
    let mut c = DVector::zeros(dim);
    for nd in nodes {
        let k = nd.k();
        for r in 0..k {
            c[nd.idx[r]] += nd.b[r];
            for s in 0..k {
                a[(nd.idx[r], nd.idx[s])] += nd.q[r * k + s];
            }
        }
    }
    (a, c)
}

fn extreme_eigs(a: &DMatrix<f64>) -> (f64, f64) {
    let ev = a.clone().symmetric_eigen().eigenvalues;
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

impl QuadraticEnsemble {
    /// Assemble from per-node pieces and solve for the optimum.
    pub fn new(n: usize, dim: usize, nodes: Vec<NodeQuadratic>, constraint: ConstraintSet, block: Option<usize>) -> Result<Self> {
        if nodes.len() != n || n == 0 {
            return Err(Error::Dimension {
                expected: n,
                found: nodes.len(),
            });
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Parameter(format!("dimension must lie in 1..={MAX_DIM}, got {dim}")));
        }
        for nd in &nodes {
            let k = nd.k();
            if nd.q.len() != k * k || nd.b.len() != k {
                return Err(Error::Dimension {
                    expected: k * k,
                    found: nd.q.len(),
                });
            }
            if let Some(&bad) = nd.idx.iter().find(|&&c| c >= dim) {
                return Err(Error::Parameter(format!("coordinate {bad} outside dimension {dim}")));
            }
            if nd.q.iter().chain(&nd.b).any(|v| !v.is_finite()) {
                return Err(Error::Parameter("objective data must be finite".into()));
            }
        }
        if let Some(bk) = block {
            if bk == 0 || bk * n != dim {
                return Err(Error::Parameter(format!("block {bk} does not tile dimension {dim} over {n} nodes")));
            }
        }
        let (a, c) = aggregate(dim, &nodes);
        let (lambda_min, lambda_max) = extreme_eigs(&a);
        let mut q = QuadraticEnsemble {
            n,
            dim,
            block,
            constraint,
            nodes,
            a,
            c,
            x_star: vec![],
            f_star: 0.0,
            lambda_min,
            lambda_max,
            seed: None,
            resamples: 0,
        };
        if lambda_min > STRONG_CONVEXITY_GATE {
            let (x, f) = q.solve()?;
            q.x_star = x;
            q.f_star = f;
        }
        Ok(q)
    }

    fn solve(&self) -> Result<(Vec<f64>, f64)> {
        let cond = self.lambda_max / self.lambda_min;
        if !(self.lambda_min > STRONG_CONVEXITY_GATE) || !(cond <= MAX_CONDITION) {
            return Err(Error::IllConditioned(cond));
        }
        let chol = self
            .a
            .clone()
            .cholesky()
            .ok_or(Error::IllConditioned(cond))?;
        let x = chol.solve(&(-&self.c));
        let resid = (&self.a * &x + &self.c).norm();
        if resid > 1e-8 * self.c.norm().max(1.0) {
            return Err(Error::IllConditioned(cond));
        }
        let xs: Vec<f64> = x.iter().copied().collect();
        let f = self.aggregate_value(&xs);
        Ok((xs, f))
    }

    /// (x*, F*) with x* solving A x = -c.
    pub fn exact_optimum(&self) -> Result<(Vec<f64>, f64)> {
        self.solve()
    }

    pub fn from_spec(spec: InstanceSpec) -> Result<Self> {
        let mut q = Self::new(spec.n, spec.dim, spec.nodes, spec.constraint, spec.block)?;
        q.seed = spec.seed;
        Ok(q)
    }

    pub fn to_spec(&self) -> InstanceSpec {
        InstanceSpec {
            n: self.n,
            dim: self.dim,
            seed: self.seed,
            block: self.block,
            constraint: self.constraint,
            nodes: self.nodes.clone(),
            x_star: (!self.x_star.is_empty()).then(|| self.x_star.clone()),
            f_star: (!self.x_star.is_empty()).then_some(self.f_star),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_spec(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("instance serializes")
    }

    pub fn with_constraint(mut self, k: ConstraintSet) -> Self {
        self.constraint = k;
        self
    }

    pub fn nodes(&self) -> &[NodeQuadratic] {
        &self.nodes
    }

    pub fn aggregate_hessian(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn aggregate_linear(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    pub fn block(&self) -> Option<usize> {
        self.block
    }

    pub fn is_strongly_convex(&self) -> bool {
        self.lambda_min > STRONG_CONVEXITY_GATE
    }

    /// Whether x* lies in the nonnegative orthant.
    pub fn optimum_is_nonnegative(&self) -> bool {
        self.x_star.iter().all(|&v| v >= 0.0)
    }

    /// F through the aggregate: 1/2 x^T A x + c^T x.
    pub fn aggregate_value(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.a * &xv)) + self.c.dot(&xv)
    }

    pub fn constants(&self, region: &AxisBox) -> Result<Constants> {
        if region.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: region.dim(),
            });
        }
        let mut l_f = 0.0f64;
        let mut b = 0.0f64;
        for nd in &self.nodes {
            l_f = l_f.max(extreme_eigs(&nd.hessian()).1);
            let k = nd.k();
            let mut sq = 0.0;
            for r in 0..k {
                let (mut lo, mut hi) = (nd.b[r], nd.b[r]);
                for s in 0..k {
                    let qv = nd.q[r * k + s];
                    if qv == 0.0 {
                        continue;
                    }
                    let (xl, xh) = (region.lo[nd.idx[s]], region.hi[nd.idx[s]]);
                    if !xl.is_finite() || !xh.is_finite() {
                        return Err(Error::Parameter("gradient bound needs a bounded region".into()));
                    }
                    let (p, q) = (qv * xl, qv * xh);
                    lo += p.min(q);
                    hi += p.max(q);
                }
                let m = lo.abs().max(hi.abs());
                sq += m * m;
            }
            b = b.max(sq.sqrt());
        }
        Ok(Constants {
            b,
            l_f,
            nu: self.lambda_min / self.n as f64,
        })
    }
}

impl Objective for QuadraticEnsemble {
    fn n(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.nodes[i].value(x)
    }

    fn gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.nodes[i].gradient_into(x, out);
    }

    fn constraint(&self) -> ConstraintSet {
        self.constraint
    }

    fn owned(&self, i: usize) -> Option<std::ops::Range<usize>> {
        self.block.map(|b| i * b..(i + 1) * b)
    }

    fn optimum(&self) -> (&[f64], f64) {
        (&self.x_star, self.f_star)
    }
}

/// Coordinates of the stacked closed-neighborhood blocks of node i.
pub fn neighborhood_coords(g: &Graph, i: usize, block: usize) -> Vec<usize> {
    g.closed_neighborhood(i)
        .iter()
        .flat_map(|&j| (j * block)..((j + 1) * block))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialQuadraticParams {
    pub block: usize,
    #[serde(default = "default_m_range")]
    pub m_range: (f64, f64),
    #[serde(default = "default_b_range")]
    pub b_range: (f64, f64),
    /// One (M, b) draw reused by every node.
    #[serde(default)]
    pub shared_mb: bool,
}

fn default_m_range() -> (f64, f64) {
    (-1.0, 1.0)
}

fn default_b_range() -> (f64, f64) {
    (-150.0, -50.0)
}

impl Default for PartialQuadraticParams {
    fn default() -> Self {
        PartialQuadraticParams {
            block: 2,
            m_range: default_m_range(),
            b_range: default_b_range(),
            shared_mb: false,
        }
    }
}

/// Partial-dependency quadratic over `g`: node i sees its closed
/// neighborhood's blocks in ascending node order. Redraws (advancing the
/// stream) until the aggregate is strongly convex.
pub fn generate_partial_quadratic(g: &Graph, params: &PartialQuadraticParams, seed: u64) -> Result<QuadraticEnsemble> {
    let d = params.block;
    if d == 0 {
        return Err(Error::Parameter("block width must be at least 1".into()));
    }
    let (mlo, mhi) = params.m_range;
    let (blo, bhi) = params.b_range;
    if !(mlo < mhi) || !(blo < bhi) {
        return Err(Error::Parameter("draw ranges need lo < hi".into()));
    }
    let n = g.n();
    if params.shared_mb && (0..n).any(|i| g.degree(i) != g.degree(0)) {
        return Err(Error::Parameter("shared M, b needs a regular graph".into()));
    }
    for attempt in 0..MAX_RESAMPLES {
        let draw = |node: u64, k: usize| {
            let mut rng = stream(seed, &[attempt as u64, node, 0x5051]);
            let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(mlo..mhi));
            let b: Vec<f64> = (0..k).map(|_| rng.random_range(blo..bhi)).collect();
            (m, b)
        };
        let shared = params.shared_mb.then(|| draw(u64::MAX, (g.degree(0) + 1) * d));
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let idx = neighborhood_coords(g, i, d);
            let (m, b) = shared.clone().unwrap_or_else(|| draw(i as u64, idx.len()));
            nodes.push(NodeQuadratic::from_factor(idx, &m, b)?);
        }
        let mut q = QuadraticEnsemble::new(n, n * d, nodes, ConstraintSet::NonnegativeOrthant, Some(d))?;
        if q.is_strongly_convex() {
            q.seed = Some(seed);
            q.resamples = attempt;
            return Ok(q);
        }
    }
    Err(Error::NotStronglyConvex(MAX_RESAMPLES))
}

/// Random orthogonal matrix from the QR factor of a Gaussian draw.
fn random_orthogonal(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    g.qr().q()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StronglyConvexParams {
    pub n: usize,
    pub dim: usize,
    /// Eigenvalues of each Q_i are drawn from this range.
    pub eig_range: (f64, f64),
    /// Each f_i is minimized at a point drawn from this box.
    pub center_range: (f64, f64),
}

impl Default for StronglyConvexParams {
    fn default() -> Self {
        StronglyConvexParams {
            n: 5,
            dim: 4,
            eig_range: (5.0, 20.0),
            center_range: (5.0, 10.0),
        }
    }
}

/// Instance where every f_i depends on the whole vector and is strongly
/// convex: f_i(x) = 1/2 (x - c_i)^T Q_i (x - c_i) up to a constant.
pub fn generate_strongly_convex(params: &StronglyConvexParams, seed: u64) -> Result<QuadraticEnsemble> {
    let StronglyConvexParams {
        n,
        dim,
        eig_range: (elo, ehi),
        center_range: (clo, chi),
    } = *params;
    if n == 0 || dim == 0 || !(0.0 < elo && elo <= ehi) || !(clo <= chi) {
        return Err(Error::Parameter("invalid strongly convex instance parameters".into()));
    }
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream(seed, &[i as u64, 0x5343]);
        let u = random_orthogonal(dim, &mut rng);
        let eig = DVector::from_fn(dim, |_, _| if ehi > elo { rng.random_range(elo..ehi) } else { elo });
        let q = &u * DMatrix::from_diagonal(&eig) * u.transpose();
        let center = DVector::from_fn(dim, |_, _| if chi > clo { rng.random_range(clo..chi) } else { clo });
        let b: Vec<f64> = (-(&q * center)).iter().copied().collect();
        nodes.push(NodeQuadratic::from_hessian((0..dim).collect(), &q, b)?);
    }
    let mut q = QuadraticEnsemble::new(n, dim, nodes, ConstraintSet::AllSpace, None)?;
    q.seed = Some(seed);
    Ok(q)
}

/// Node i holds 1/2 |x|^2 + b^T x over its full copy (or its closed
/// neighborhood's blocks on sparse graphs); used as a fixture.
pub fn identity_fixture(g: &Graph, block: usize, b: f64) -> Result<QuadraticEnsemble> {
    let n = g.n();
    let nodes = (0..n)
        .map(|i| {
            let idx = neighborhood_coords(g, i, block);
            let k = idx.len();
            NodeQuadratic::from_hessian(idx, &DMatrix::identity(k, k), vec![b; k])
        })
        .collect::<Result<Vec<_>>>()?;
    QuadraticEnsemble::new(n, n * block, nodes, ConstraintSet::AllSpace, Some(block))
}

/// Exact minimizer of the linearized surrogate
/// f_i(x_i) + g^T (x - x_i) + pi^T (x - x_i) + tau/2 |x - x_i|^2 over K.
pub fn surrogate_argmin(x_i: &[f64], grad: &[f64], pi: &[f64], tau: f64, k: ConstraintSet) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!("tau must be positive, got {tau}")));
    }
    let mut x: Vec<f64> = x_i
        .iter()
        .zip(grad.iter().zip(pi))
        .map(|(x, (g, p))| x - (g + p) / tau)
        .collect();
    k.project(&mut x);
    Ok(x)
}

/// Gradient of the surrogate at x (anchored at x_i), for consistency checks.
pub fn surrogate_gradient(x: &[f64], x_i: &[f64], grad: &[f64], tau: f64) -> Vec<f64> {
    x.iter()
        .zip(x_i)
        .zip(grad)
        .map(|((x, a), g)| g + tau * (x - a))
        .collect()
}

/// min over `samples` random y in K intersected with `region` of
/// grad F(x)^T (y - x). Nonnegative values mean no sampled feasible
/// direction decreases F to first order.
pub fn stationarity_probe(obj: &dyn Objective, x: &[f64], region: &AxisBox, samples: usize, seed: u64) -> Result<f64> {
    if region.dim() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: region.dim(),
        });
    }
    let mut bx = region.clone();
    if obj.constraint() == ConstraintSet::NonnegativeOrthant {
        bx.lo.iter_mut().for_each(|v| *v = v.max(0.0));
        bx.hi.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let g = obj.total_gradient(x);
    let mut rng = stream(seed, &[0x5354]);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let s: f64 = (0..x.len())
            .map(|l| {
                let y = if bx.hi[l] > bx.lo[l] {
                    rng.random_range(bx.lo[l]..bx.hi[l])
                } else {
                    bx.lo[l]
                };
                g[l] * (y - x[l])
            })
            .sum();
        worst = worst.min(s);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_topology, Topology};

    fn wrap19_instance(seed: u64) -> QuadraticEnsemble {
        let g = build_topology(&Topology::Wrap19).unwrap();
        generate_partial_quadratic(&g, &PartialQuadraticParams::default(), seed).unwrap()
    }

    #[test]
    fn wrap19_shapes() {
        let q = wrap19_instance(1);
        assert_eq!(q.dim(), 38);
        assert_eq!(q.aggregate_hessian().nrows(), 38);
        for nd in q.nodes() {
            assert_eq!(nd.idx.len(), 14);
            assert_eq!(nd.m.as_ref().unwrap().len(), 196);
            assert!(nd.b.iter().all(|&b| (-150.0..-50.0).contains(&b)));
        }
        assert!(q.is_strongly_convex());
        let (x, f) = q.optimum();
        let g = q.total_gradient(x);
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-8 * q.aggregate_linear().norm());
        assert!((q.total_value(x) - f).abs() < 1e-8 * f.abs());
    }

    #[test]
    fn ring3_identity_bowl() {
        let g = build_topology(&Topology::Ring(3)).unwrap();
        let q = identity_fixture(&g, 1, 0.0).unwrap();
        let (x, f) = q.optimum();
        assert!(x.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(f, 0.0);
    }

    #[test]
    fn optimum_mean_band_over_seeds() {
        let means: Vec<f64> = (0..20)
            .map(|s| {
                let q = wrap19_instance(100 + s);
                q.optimum().0.iter().sum::<f64>() / 38.0
            })
            .collect();
        let avg = means.iter().sum::<f64>() / 20.0;
        assert!((10.0..=40.0).contains(&avg), "{avg}");
    }

    #[test]
    fn small_fixture_optima() {
        let eye = NodeQuadratic::from_hessian(vec![0, 1], &DMatrix::identity(2, 2), vec![-1.0, -1.0]).unwrap();
        let q = QuadraticEnsemble::new(1, 2, vec![eye], ConstraintSet::AllSpace, None).unwrap();
        assert_eq!(q.exact_optimum().unwrap().0, vec![1.0, 1.0]);
        let diag = NodeQuadratic::from_hessian(vec![0, 1], &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])), vec![-2.0, -2.0]).unwrap();
        let q = QuadraticEnsemble::new(1, 2, vec![diag], ConstraintSet::AllSpace, None).unwrap();
        let x = q.exact_optimum().unwrap().0;
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_aggregate_is_rejected() {
        let nd = NodeQuadratic::from_hessian(vec![0, 1], &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])), vec![0.0, 0.0]).unwrap();
        let q = QuadraticEnsemble::new(1, 2, vec![nd], ConstraintSet::AllSpace, None).unwrap();
        assert!(!q.is_strongly_convex());
        assert!(matches!(q.exact_optimum(), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn optimum_beats_random_probes() {
        let q = wrap19_instance(3);
        let (x, f) = q.optimum();
        let mut rng = stream(9, &[]);
        for _ in 0..1000 {
            let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-5.0..5.0)).collect();
            assert!(q.total_value(&y) >= f);
        }
    }

    #[test]
    fn constants_on_fixture() {
        let g = build_topology(&Topology::Complete(3)).unwrap();
        let q = identity_fixture(&g, 1, 0.0).unwrap();
        let r = AxisBox::new(vec![-1.0; 3], vec![1.0; 3]).unwrap();
        let c = q.constants(&r).unwrap();
        assert!((c.b - 3f64.sqrt()).abs() < 1e-14);
        assert!((c.l_f - 1.0).abs() < 1e-12);
        assert!((c.nu - 1.0).abs() < 1e-12);
        let unb = AxisBox {
            lo: vec![f64::NEG_INFINITY; 3],
            hi: vec![1.0; 3],
        };
        assert!(q.constants(&unb).is_err());
    }

    #[test]
    fn lipschitz_probe_respects_bound() {
        let q = wrap19_instance(4);
        let r = AxisBox::new(vec![0.0; 38], vec![50.0; 38]).unwrap();
        let c = q.constants(&r).unwrap();
        let mut rng = stream(5, &[]);
        let (mut ga, mut gb) = (vec![0.0; 38], vec![0.0; 38]);
        for _ in 0..1000 {
            let i = rng.random_range(0..19);
            let x: Vec<f64> = (0..38).map(|_| rng.random_range(0.0..50.0)).collect();
            let y: Vec<f64> = (0..38).map(|_| rng.random_range(0.0..50.0)).collect();
            q.gradient(i, &x, &mut ga);
            q.gradient(i, &y, &mut gb);
            let num: f64 = ga.iter().zip(&gb).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let den: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(num <= c.l_f * den * (1.0 + 1e-12));
            assert!(ga.iter().map(|v| v * v).sum::<f64>().sqrt() <= c.b * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let q = wrap19_instance(5);
        let mut rng = stream(6, &[]);
        let mut g = vec![0.0; 38];
        for i in 0..19 {
            for _ in 0..100 {
                let x: Vec<f64> = (0..38).map(|_| rng.random_range(0.0..40.0)).collect();
                q.gradient(i, &x, &mut g);
                let l = rng.random_range(0..38);
                let h = 1e-5;
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[l] += h;
                xm[l] -= h;
                let fd = (q.value(i, &xp) - q.value(i, &xm)) / (2.0 * h);
                assert!((fd - g[l]).abs() <= 1e-5 * g[l].abs().max(1.0), "{fd} vs {}", g[l]);
            }
        }
    }

    #[test]
    fn node_sum_matches_aggregate_and_is_convex() {
        let q = wrap19_instance(7);
        let mut rng = stream(8, &[]);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..38).map(|_| rng.random_range(-10.0..60.0)).collect();
            let y: Vec<f64> = (0..38).map(|_| rng.random_range(-10.0..60.0)).collect();
            let fx = q.total_value(&x);
            assert!((fx - q.aggregate_value(&x)).abs() <= 1e-10 * fx.abs().max(1.0));
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            assert!(q.total_value(&mid) <= 0.5 * (fx + q.total_value(&y)) + 1e-9 * fx.abs());
        }
    }

    #[test]
    fn resampling_is_seed_deterministic() {
        let a = wrap19_instance(11);
        let b = wrap19_instance(11);
        assert_eq!(a.to_json(), b.to_json());
        let c = QuadraticEnsemble::from_json(&a.to_json()).unwrap();
        assert_eq!(c.optimum().0, a.optimum().0);
    }

    #[test]
    fn shared_draw_repeats_across_nodes() {
        let g = build_topology(&Topology::Wrap19).unwrap();
        let p = PartialQuadraticParams {
            shared_mb: true,
            ..Default::default()
        };
        let q = generate_partial_quadratic(&g, &p, 2).unwrap();
        assert_eq!(q.nodes()[0].q, q.nodes()[5].q);
        assert_eq!(q.nodes()[0].b, q.nodes()[5].b);
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(surrogate_argmin(&[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], 100.0, ConstraintSet::AllSpace).unwrap(), vec![1.0, 2.0]);
        let x = surrogate_argmin(&[0.0, 0.0], &[10.0, 0.0], &[0.0, 0.0], 100.0, ConstraintSet::AllSpace).unwrap();
        assert!((x[0] + 0.1).abs() < 1e-15 && x[1] == 0.0);
        let x = surrogate_argmin(&[0.0, 0.0], &[10.0, -10.0], &[0.0, 0.0], 100.0, ConstraintSet::NonnegativeOrthant).unwrap();
        assert!(x[0] == 0.0 && (x[1] - 0.1).abs() < 1e-15);
        assert!(surrogate_argmin(&[0.0], &[0.0], &[0.0], 0.0, ConstraintSet::AllSpace).is_err());
    }

    #[test]
    fn surrogate_gradient_consistency() {
        let q = wrap19_instance(9);
        let mut rng = stream(10, &[]);
        let mut g = vec![0.0; 38];
        for i in 0..19 {
            let x: Vec<f64> = (0..38).map(|_| rng.random_range(0.0..40.0)).collect();
            q.gradient(i, &x, &mut g);
            let sg = surrogate_gradient(&x, &x, &g, 100.0);
            assert!(sg.iter().zip(&g).all(|(a, b)| (a - b).abs() <= 1e-12));
        }
    }

    #[test]
    fn strongly_convex_generator() {
        let q = generate_strongly_convex(&StronglyConvexParams::default(), 3).unwrap();
        for nd in q.nodes() {
            let (lo, hi) = extreme_eigs(&nd.hessian());
            assert!(lo >= 5.0 - 1e-9 && hi <= 20.0 + 1e-9);
        }
        assert!(q.optimum().0.iter().all(|&v| (5.0..=10.0).contains(&v)));
    }

    #[test]
    fn stationarity_probe_at_optimum_is_nonnegative() {
        let q = generate_strongly_convex(&StronglyConvexParams::default(), 4).unwrap();
        let x = q.optimum().0.to_vec();
        let r = AxisBox::new(vec![0.0; 4], vec![20.0; 4]).unwrap();
        assert!(stationarity_probe(&q, &x, &r, 1000, 1).unwrap() > -1e-9);
        let off: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        assert!(stationarity_probe(&q, &off, &r, 1000, 1).unwrap() < 0.0);
    }
}
