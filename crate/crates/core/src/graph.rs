//! Communication topologies and averaging matrices.
//!
//! Node indices are 0-based everywhere in the library and 1-based in every
//! file format (edge lists in configs, diagnostics in error messages).

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Offsets of the 19-cell hexagonal wrap-around, written as a circulant on
/// Z/19. Multiplication by 8 is the 60-degree rotation (8^2 - 8 + 1 = 57 =
/// 3 * 19), so the six neighbors +-1, +-7, +-8 are the six hexagonal cells
/// around each site of a radius-2 cluster tiled over a torus.
const WRAP19_OFFSETS: [usize; 3] = [1, 7, 8];

/// Shape of a communication graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    Wrap19,
    Ring(usize),
    Complete(usize),
    /// Node count and 0-based undirected edges.
    Custom(usize, Vec<(usize, usize)>),
}

/// Connected simple undirected graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    closed: Vec<Vec<usize>>,
}

/// Weight matrices are dense, so node counts are capped well below what
/// would exhaust memory.
pub const MAX_NODES: usize = 4096;

impl Graph {
    /// Builds a graph from 0-based edges, rejecting self-loops, out-of-range
    /// endpoints and disconnected results. Duplicate edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Topology("graph needs at least one node".into()));
        }
        if n > MAX_NODES {
            return Err(Error::Topology(format!("{n} nodes exceeds the limit of {MAX_NODES}")));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            for v in [a, b] {
                if v >= n {
                    return Err(Error::NodeOutOfRange { node: v, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        let closed = neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                let mut c = nb.clone();
                c.push(i);
                c.sort_unstable();
                c
            })
            .collect();
        let g = Graph {
            n,
            edges,
            neighbors,
            closed,
        };
        g.check_connected()?;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// N(i), ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Nb(i) = N(i) with i itself, ascending.
    pub fn closed_neighborhood(&self, i: usize) -> &[usize] {
        &self.closed[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn check_connected(&self) -> Result<()> {
        match self.bfs(0).iter().position(Option::is_none) {
            Some(to) => Err(Error::Disconnected { from: 0, to }),
            None => Ok(()),
        }
    }

    /// Largest shortest-path hop count over all node pairs.
    pub fn diameter(&self) -> Result<usize> {
        let mut best = 0;
        for s in 0..self.n {
            for (t, d) in self.bfs(s).into_iter().enumerate() {
                match d {
                    Some(d) => best = best.max(d),
                    None => return Err(Error::Disconnected { from: s, to: t }),
                }
            }
        }
        Ok(best)
    }
}

pub fn build_topology(kind: &Topology) -> Result<Graph> {
    if let Topology::Ring(n) | Topology::Complete(n) | Topology::Custom(n, _) = kind {
        if *n > MAX_NODES {
            return Err(Error::Topology(format!("{n} nodes exceeds the limit of {MAX_NODES}")));
        }
    }
    match kind {
        Topology::Wrap19 => {
            let n = 19;
            let mut edges = Vec::new();
            for i in 0..n {
                for off in WRAP19_OFFSETS {
                    edges.push((i, (i + off) % n));
                }
            }
            Graph::from_edges(n, &edges)
        }
        Topology::Ring(n) => {
            if *n < 2 {
                return Err(Error::Topology(format!("ring needs n >= 2, got {n}")));
            }
            let edges: Vec<_> = (0..*n).map(|i| (i, (i + 1) % n)).collect();
            Graph::from_edges(*n, &edges)
        }
        Topology::Complete(n) => {
            if *n < 2 {
                return Err(Error::Topology(format!("complete graph needs n >= 2, got {n}")));
            }
            let mut edges = Vec::new();
            for i in 0..*n {
                for j in i + 1..*n {
                    edges.push((i, j));
                }
            }
            Graph::from_edges(*n, &edges)
        }
        Topology::Custom(n, edges) => Graph::from_edges(*n, edges),
    }
}

/// Dense row-major averaging matrix with cached support and stochasticity
/// metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
    support: Vec<Vec<usize>>,
    theta: f64,
    row_stochastic: bool,
    column_stochastic: bool,
    symmetric: bool,
}

const STOCHASTIC_TOL: f64 = 1e-12;

impl WeightMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Parameter("empty weight matrix".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for r in &rows {
            if r.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: r.len(),
                });
            }
            if let Some(v) = r.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Parameter(format!(
                    "weights must be finite and nonnegative, got {v}"
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self::from_data(n, data))
    }

    fn from_data(n: usize, data: Vec<f64>) -> Self {
        let support: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| data[i * n + j] != 0.0).collect())
            .collect();
        let theta = data
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min);
        let row_stochastic = (0..n)
            .all(|i| (data[i * n..(i + 1) * n].iter().sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL);
        let column_stochastic = (0..n)
            .all(|j| ((0..n).map(|i| data[i * n + j]).sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL);
        let symmetric = (0..n).all(|i| (0..i).all(|j| data[i * n + j] == data[j * n + i]));
        WeightMatrix {
            n,
            data,
            support,
            theta,
            row_stochastic,
            column_stochastic,
            symmetric,
        }
    }

    /// Every off-diagonal supported entry equals `edge`, every diagonal entry
    /// equals `self_weight`.
    pub fn neighborhood_uniform(g: &Graph, self_weight: f64, edge: f64) -> Result<Self> {
        let n = g.n();
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = self_weight;
            for &j in g.neighbors(i) {
                row[j] = edge;
            }
        }
        Self::from_rows(rows)
    }

    /// (1/n) 1 1^T.
    pub fn uniform(n: usize) -> Self {
        Self::from_data(n, vec![1.0 / n as f64; n * n])
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::from_data(n, data)
    }

    /// Row-stochastic matrix on Nb(i) whose entries are at least
    /// `(1 - delta) / |Nb(i)|`: the floor part plus a Dirichlet(1) draw
    /// scaled by `delta`. Column sums are generally not 1.
    pub fn random_row_stochastic(g: &Graph, delta: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Parameter(format!("delta must lie in [0, 1), got {delta}")));
        }
        let n = g.n();
        let mut rng = stream(seed, &[0x5157]);
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            let nb = g.closed_neighborhood(i);
            let m = nb.len() as f64;
            let draws: Vec<f64> = nb
                .iter()
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = draws.iter().sum();
            for (&j, e) in nb.iter().zip(&draws) {
                row[j] = (1.0 - delta) / m + delta * e / total;
            }
            // absorb rounding so the row sums to one
            let s: f64 = row.iter().sum();
            row[i] += 1.0 - s;
        }
        Self::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Column indices with a nonzero weight in row `i`, ascending.
    pub fn support(&self, i: usize) -> &[usize] {
        &self.support[i]
    }

    /// Smallest nonzero entry.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn is_row_stochastic(&self) -> bool {
        self.row_stochastic
    }

    pub fn is_column_stochastic(&self) -> bool {
        self.column_stochastic
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.row_stochastic && self.column_stochastic
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Matrix power W^k as a fresh matrix.
    pub fn power(&self, k: usize) -> WeightMatrix {
        let n = self.n;
        let mut acc = WeightMatrix::identity(n).data;
        for _ in 0..k {
            let mut next = vec![0.0; n * n];
            for i in 0..n {
                for l in 0..n {
                    let a = acc[i * n + l];
                    if a != 0.0 {
                        for j in 0..n {
                            next[i * n + j] += a * self.data[l * n + j];
                        }
                    }
                }
            }
            acc = next;
        }
        Self::from_data(n, acc)
    }

    /// ||W - (1/n) 1 1^T||_2 by power iteration on (W - J)^T (W - J).
    pub fn spectral_deviation(&self) -> f64 {
        let n = self.n;
        let inv = 1.0 / n as f64;
        let mut b = vec![0.0; n * n];
        // D = W - J; B = D^T D
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += (self.data[k * n + i] - inv) * (self.data[k * n + j] - inv);
                }
                b[i * n + j] = s;
            }
        }
        let mut rng = stream(0x5eed, &[n as u64]);
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.5).collect();
        let mut lambda = 0.0;
        for _ in 0..200_000 {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let w: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| b[i * n + j] * v[j]).sum())
                .collect();
            let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
            let converged = (next - lambda).abs() <= 1e-12 * next.abs().max(1e-300);
            lambda = next;
            v = w;
            if converged {
                break;
            }
        }
        lambda.max(0.0).sqrt()
    }
}

/// Metropolis-style weights W_ij = [1{i=j}(dbar - d_i) + 1{i!=j}] / dbar on
/// Nb(i), where dbar = max degree + 1. Symmetric by construction.
pub fn metropolis_weights(g: &Graph) -> WeightMatrix {
    let n = g.n();
    let dbar = (g.max_degree() + 1) as f64;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = (dbar - g.degree(i) as f64) / dbar;
        for &j in g.neighbors(i) {
            data[i * n + j] = 1.0 / dbar;
        }
    }
    WeightMatrix::from_data(n, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticityReport {
    pub row_sums: Vec<f64>,
    pub column_sums: Vec<f64>,
    pub row_stochastic: bool,
    pub column_stochastic: bool,
    pub support_ok: bool,
    /// First out-of-support entry, 0-based.
    pub support_violation: Option<(usize, usize)>,
    pub theta: f64,
    pub symmetric: bool,
    pub spectral_deviation: f64,
}

impl StochasticityReport {
    /// Fatal problems only: support violations, rows not summing to one, or
    /// no contraction towards the average. Column sums are informational.
    pub fn is_valid(&self) -> bool {
        self.support_ok && self.row_stochastic && self.spectral_deviation < 1.0 - 1e-12
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.row_stochastic && self.column_stochastic
    }
}

pub fn validate_weights(w: &WeightMatrix, g: &Graph) -> Result<StochasticityReport> {
    if w.n() != g.n() {
        return Err(Error::Dimension {
            expected: g.n(),
            found: w.n(),
        });
    }
    let n = w.n();
    let row_sums: Vec<f64> = (0..n).map(|i| w.row(i).iter().sum()).collect();
    let column_sums: Vec<f64> = (0..n).map(|j| (0..n).map(|i| w.get(i, j)).sum()).collect();
    let support_violation = (0..n).find_map(|i| {
        w.support(i)
            .iter()
            .find(|&&j| j != i && !g.is_adjacent(i, j))
            .map(|&j| (i, j))
    });
    Ok(StochasticityReport {
        row_stochastic: w.is_row_stochastic(),
        column_stochastic: w.is_column_stochastic(),
        row_sums,
        column_sums,
        support_ok: support_violation.is_none(),
        support_violation,
        theta: w.theta(),
        symmetric: w.is_symmetric(),
        spectral_deviation: w.spectral_deviation(),
    })
}

// ---------------------------------------------------------------------------
// Config surface
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Wrap19,
    Ring,
    Complete,
    Custom,
}

/// How the averaging matrix is derived from the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    /// `"metropolis"`
    Named(String),
    /// `{"self": 0.6, "edge": 0.2}`
    Neighborhood {
        #[serde(rename = "self")]
        self_weight: f64,
        edge: f64,
    },
    /// `{"matrix": [[...], ...]}`
    Matrix { matrix: Vec<Vec<f64>> },
}

/// `{"topology":"ring","n":5,"weights":{"self":0.6,"edge":0.2}}`; custom edge
/// lists are arrays of 1-based pairs under `"edges"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub topology: TopologyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightSpec>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            topology: TopologyKind::Wrap19,
            n: None,
            edges: None,
            weights: None,
        }
    }
}

impl NetworkConfig {
    pub fn topology(&self) -> Result<Topology> {
        let need_n = || {
            self.n
                .ok_or_else(|| Error::Config(format!("topology {:?} requires \"n\"", self.topology)))
        };
        Ok(match self.topology {
            TopologyKind::Wrap19 => Topology::Wrap19,
            TopologyKind::Ring => Topology::Ring(need_n()?),
            TopologyKind::Complete => Topology::Complete(need_n()?),
            TopologyKind::Custom => {
                let n = need_n()?;
                let raw = self
                    .edges
                    .as_ref()
                    .ok_or_else(|| Error::Config("custom topology requires \"edges\"".into()))?;
                let mut edges = Vec::with_capacity(raw.len());
                for &[a, b] in raw {
                    if a == 0 || b == 0 {
                        return Err(Error::Config("edge endpoints are 1-based".into()));
                    }
                    edges.push((a - 1, b - 1));
                }
                Topology::Custom(n, edges)
            }
        })
    }

    pub fn build(&self) -> Result<(Graph, WeightMatrix)> {
        let g = build_topology(&self.topology()?)?;
        let w = match &self.weights {
            None => metropolis_weights(&g),
            Some(WeightSpec::Named(name)) if name == "metropolis" => metropolis_weights(&g),
            Some(WeightSpec::Named(name)) => {
                return Err(Error::Config(format!("unknown weight scheme {name:?}")))
            }
            Some(WeightSpec::Neighborhood { self_weight, edge }) => {
                WeightMatrix::neighborhood_uniform(&g, *self_weight, *edge)?
            }
            Some(WeightSpec::Matrix { matrix }) => WeightMatrix::from_rows(matrix.clone())?,
        };
        let report = validate_weights(&w, &g)?;
        if let Some((row, col)) = report.support_violation {
            return Err(Error::SupportViolation { row, col });
        }
        if !report.row_stochastic {
            return Err(Error::Config("weight rows must sum to one".into()));
        }
        Ok((g, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floyd_warshall(g: &Graph) -> usize {
        let n = g.n();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for i in 0..n {
            d[i][i] = 0;
            for &j in g.neighbors(i) {
                d[i][j] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                }
            }
        }
        d.iter().flatten().copied().max().unwrap()
    }

    #[test]
    fn ring5_edges() {
        let g = build_topology(&Topology::Ring(5)).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 4), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(g.diameter().unwrap(), 2);
    }

    #[test]
    fn complete_graphs() {
        let g = build_topology(&Topology::Complete(2)).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.diameter().unwrap(), 1);
        assert_eq!(build_topology(&Topology::Complete(4)).unwrap().diameter().unwrap(), 1);
    }

    #[test]
    fn wrap19_is_six_regular_and_connected() {
        let g = build_topology(&Topology::Wrap19).unwrap();
        assert_eq!(g.n(), 19);
        assert_eq!(g.edges().len(), 19 * 6 / 2);
        assert!((0..19).all(|i| g.degree(i) == 6));
        for &(a, b) in g.edges() {
            assert!(g.is_adjacent(a, b) && g.is_adjacent(b, a));
        }
        // regression constant: all-pairs BFS on the shipped table
        assert_eq!(g.diameter().unwrap(), 2);
    }

    #[test]
    fn diameter_matches_floyd_warshall() {
        for t in [
            Topology::Wrap19,
            Topology::Ring(2),
            Topology::Ring(5),
            Topology::Ring(12),
            Topology::Complete(6),
            Topology::Custom(5, vec![(0, 1), (1, 2), (1, 3), (3, 4)]),
        ] {
            let g = build_topology(&t).unwrap();
            assert_eq!(g.diameter().unwrap(), floyd_warshall(&g), "{t:?}");
        }
    }

    #[test]
    fn rejects_bad_custom_graphs() {
        assert!(matches!(
            build_topology(&Topology::Custom(4, vec![(0, 1), (2, 3)])),
            Err(Error::Disconnected { .. })
        ));
        assert!(matches!(
            build_topology(&Topology::Custom(3, vec![(0, 1), (1, 1), (1, 2)])),
            Err(Error::SelfLoop(1))
        ));
        assert!(matches!(
            build_topology(&Topology::Custom(3, vec![(0, 5)])),
            Err(Error::NodeOutOfRange { node: 5, n: 3 })
        ));
        assert!(build_topology(&Topology::Ring(1)).is_err());
    }

    #[test]
    fn metropolis_on_regular_graphs() {
        let g = build_topology(&Topology::Wrap19).unwrap();
        let w = metropolis_weights(&g);
        for i in 0..19 {
            for j in 0..19 {
                let expect = if g.closed_neighborhood(i).contains(&j) { 1.0 / 7.0 } else { 0.0 };
                assert_eq!(w.get(i, j), expect);
            }
        }
        let r = validate_weights(&w, &g).unwrap();
        assert!(r.is_valid() && r.is_doubly_stochastic() && r.symmetric);
        assert!(r.spectral_deviation < 1.0);

        let g3 = build_topology(&Topology::Ring(3)).unwrap();
        let w3 = metropolis_weights(&g3);
        assert!(w3.rows().iter().flatten().all(|&v| v == 1.0 / 3.0));
    }

    #[test]
    fn metropolis_irregular_is_symmetric_doubly_stochastic() {
        let g = build_topology(&Topology::Custom(
            6,
            vec![(0, 1), (0, 2), (0, 3), (3, 4), (4, 5), (1, 2)],
        ))
        .unwrap();
        let w = metropolis_weights(&g);
        assert!(w.is_symmetric());
        assert!(w.is_doubly_stochastic());
        assert!((0..6).all(|i| w.get(i, i) > 0.0));
    }

    #[test]
    fn example_ring_override_is_doubly_stochastic() {
        let g = build_topology(&Topology::Ring(5)).unwrap();
        let w = WeightMatrix::neighborhood_uniform(&g, 0.6, 0.2).unwrap();
        let r = validate_weights(&w, &g).unwrap();
        assert!(r.is_valid());
        assert!(r.is_doubly_stochastic());
        assert_eq!(r.theta, 0.2);
    }

    #[test]
    fn identity_has_unit_deviation_and_is_invalid() {
        let g = build_topology(&Topology::Ring(5)).unwrap();
        let r = validate_weights(&WeightMatrix::identity(5), &g).unwrap();
        assert!((r.spectral_deviation - 1.0).abs() < 1e-10);
        assert!(!r.is_valid());
    }

    #[test]
    fn row_stochastic_floor_matrix_reports_columns() {
        let g = build_topology(&Topology::Wrap19).unwrap();
        let w = WeightMatrix::random_row_stochastic(&g, 0.5, 11).unwrap();
        let r = validate_weights(&w, &g).unwrap();
        assert!(r.row_stochastic);
        assert!(!r.column_stochastic);
        assert!(r.is_valid());
        for i in 0..19 {
            for &j in g.closed_neighborhood(i) {
                assert!(w.get(i, j) >= 0.5 / 7.0 - 1e-15);
            }
        }
    }

    #[test]
    fn support_violation_is_flagged() {
        let g = build_topology(&Topology::Ring(5)).unwrap();
        let w = WeightMatrix::uniform(5);
        let r = validate_weights(&w, &g).unwrap();
        assert!(!r.support_ok);
        assert!(!r.is_valid());
        assert_eq!(r.support_violation, Some((0, 2)));
    }

    #[test]
    fn spectral_deviation_matches_svd() {
        for t in [Topology::Wrap19, Topology::Ring(5), Topology::Ring(8), Topology::Complete(4)] {
            let g = build_topology(&t).unwrap();
            for w in [
                metropolis_weights(&g),
                WeightMatrix::random_row_stochastic(&g, 0.9, 3).unwrap(),
            ] {
                let n = g.n();
                let d = nalgebra::DMatrix::from_fn(n, n, |i, j| w.get(i, j) - 1.0 / n as f64);
                let sigma = d.singular_values().max();
                assert!((w.spectral_deviation() - sigma).abs() < 1e-8, "{t:?}");
            }
        }
    }

    #[test]
    fn config_parses_and_builds() {
        let cfg: NetworkConfig =
            serde_json::from_str(r#"{"topology":"ring","n":5,"weights":{"self":0.6,"edge":0.2}}"#)
                .unwrap();
        let (g, w) = cfg.build().unwrap();
        assert_eq!(g.n(), 5);
        assert_eq!(w.get(0, 0), 0.6);

        let cfg: NetworkConfig =
            serde_json::from_str(r#"{"topology":"custom","n":3,"edges":[[1,2],[2,3]]}"#).unwrap();
        let (g, w) = cfg.build().unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(w.is_doubly_stochastic());

        let bad: NetworkConfig =
            serde_json::from_str(r#"{"topology":"custom","n":3,"edges":[[0,2]]}"#).unwrap();
        assert!(bad.build().is_err());
        let outside: NetworkConfig = serde_json::from_str(
            r#"{"topology":"ring","n":4,"weights":{"matrix":[[0.5,0,0.5,0],[0,1,0,0],[0.5,0,0.5,0],[0,0,0,1]]}}"#,
        )
        .unwrap();
        assert!(matches!(outside.build(), Err(Error::SupportViolation { row: 0, col: 2 })));
    }
}
