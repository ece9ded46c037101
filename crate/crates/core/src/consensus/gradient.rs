//! Gradient-oriented selection: the point x of a shrunk hull H whose step
//! x - z best aligns with a preferred direction.
//!
//! The cosine over H is maximized along the projection of the direction onto
//! the cone K = cone(H - z), so the solver projects onto K (NNLS for the
//! convex hull, a one-dimensional piecewise quadratic for the box) and then
//! walks that ray to its exit from H. When the projection vanishes (the
//! direction lies in the polar cone) every feasible step points away from the
//! direction and a projected-ascent refinement on the weights finds the least
//! bad one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::check_delta;
use super::hull::{combine, cube_hull, AxisBox};

const STEP_FLOOR: f64 = 1e-12;
const MAX_BASES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullKind {
    Convex,
    Cube,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradSelection {
    pub x: Vec<f64>,
    /// cos(direction, x - z); 0 when the fallback fired.
    pub cosine: f64,
    /// Convex weights over the input points (convex hull only).
    pub weights: Option<Vec<f64>>,
    /// Set when the best step was shorter than 1e-12 and the shrunk centroid
    /// was returned instead.
    pub fallback: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine(dir: &[f64], v: &[f64]) -> f64 {
    let (nd, nv) = (norm(dir), norm(v));
    if nd == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot(dir, v) / (nd * nv)).clamp(-1.0, 1.0)
}

pub fn gradient_oriented_select(
    points: &[Vec<f64>],
    delta: f64,
    kind: HullKind,
    z: &[f64],
    direction: &[f64],
) -> Result<GradSelection> {
    check_delta(delta)?;
    let m = points.len();
    if m == 0 {
        return Err(Error::EmptyPointSet);
    }
    let d = z.len();
    if direction.len() != d {
        return Err(Error::Dimension {
            expected: d,
            found: direction.len(),
        });
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            found: p.len(),
        });
    }
    if direction.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("direction and z must be finite".into()));
    }
    match kind {
        HullKind::Convex => select_convex(points, delta, z, direction),
        HullKind::Cube => select_cube(points, delta, z, direction),
    }
}

fn finish(x: Vec<f64>, z: &[f64], dir: &[f64], weights: Option<Vec<f64>>, fallback: impl FnOnce() -> GradSelection) -> GradSelection {
    let step: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
    if norm(&step) < STEP_FLOOR || norm(dir) == 0.0 {
        return fallback();
    }
    GradSelection {
        cosine: cosine(dir, &step),
        x,
        weights,
        fallback: false,
    }
}

// ---- convex hull ----

fn select_convex(points: &[Vec<f64>], delta: f64, z: &[f64], dir: &[f64]) -> Result<GradSelection> {
    let (m, d) = (points.len(), z.len());
    let floor = (1.0 - delta) / m as f64;
    let fallback = || GradSelection {
        x: combine(points, &vec![1.0 / m as f64; m]),
        cosine: 0.0,
        weights: Some(vec![1.0 / m as f64; m]),
        fallback: true,
    };
    if norm(dir) == 0.0 {
        return Ok(fallback());
    }
    let centroid = combine(points, &vec![1.0 / m as f64; m]);
    // Generators of K: shrunk vertices relative to z.
    let gen = DMatrix::from_fn(d, m, |l, j| centroid[l] + delta * (points[j][l] - centroid[l]) - z[l]);
    let dvec = DVector::from_column_slice(dir);

    let mu = nnls(&gen, &dvec);
    let mut u = &gen * &mu;
    let dir_norm = dvec.norm();
    if u.norm() <= 1e-12 * dir_norm || u.dot(&dvec) <= 1e-14 * dir_norm * u.norm() {
        match polar_simplex(&gen, &dvec) {
            Some(w) => u = &gen * DVector::from_vec(w),
            None => return Ok(fallback()),
        }
    }
    let Some(mu) = farthest_on_ray(&gen, &u) else {
        return Ok(fallback());
    };
    let total: f64 = mu.iter().sum();
    let weights: Vec<f64> = mu.iter().map(|v| floor + delta * v / total).collect();
    let x = combine(points, &weights);
    Ok(finish(x, z, dir, Some(weights), fallback))
}

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().svd(true, true).solve(b, 1e-13).ok()
}

fn columns(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])])
}

/// Lawson-Hanson non-negative least squares: argmin |A x - b| over x >= 0.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())) * b.norm().max(1.0);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE) * (n.max(a.nrows()) as f64);
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let Some(j) = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&p, &q| w[p].total_cmp(&w[q])) else {
            break;
        };
        passive[j] = true;
        for _ in 0..(3 * n + 10) {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let Some(s_p) = lstsq(&columns(a, &idx), b) else {
                return x;
            };
            let mut s = DVector::zeros(n);
            for (k, &i) in idx.iter().enumerate() {
                s[i] = s_p[k];
            }
            if idx.iter().all(|&i| s[i] > 0.0) {
                x = s;
                break;
            }
            let alpha = idx
                .iter()
                .filter(|&&i| s[i] <= 0.0)
                .map(|&i| x[i] / (x[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * alpha;
            for &i in &idx {
                if x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}

fn rank(a: &DMatrix<f64>) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    sv.iter().filter(|&&s| s > 1e-10 * top.max(f64::MIN_POSITIVE)).count()
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// min sum(mu) subject to G mu = u, mu >= 0. The farthest point of the hull
/// along u is then z + u / sum(mu). Basic solutions are enumerated, which is
/// exact for the small neighborhoods this runs on.
fn farthest_on_ray(g: &DMatrix<f64>, u: &DVector<f64>) -> Option<DVector<f64>> {
    let m = g.ncols();
    let un = u.norm();
    if un == 0.0 {
        return None;
    }
    let feasible = |mu: &DVector<f64>| {
        mu.iter().all(|&v| v >= -1e-12 * mu.amax().max(1.0)) && (g * mu - u).norm() <= 1e-9 * un
    };
    let mut best = nnls(g, u);
    if !feasible(&best) {
        best = DVector::zeros(m);
        best[0] = f64::INFINITY;
    }
    let r = rank(g);
    if r == m {
        if let Some(mu) = lstsq(g, u) {
            if feasible(&mu) {
                best = mu;
            }
        }
    } else if r > 0 && binomial(m, r) <= MAX_BASES {
        let mut idx: Vec<usize> = (0..r).collect();
        loop {
            let sub = columns(g, &idx);
            if rank(&sub) == r {
                if let Some(s) = lstsq(&sub, u) {
                    let mut mu = DVector::zeros(m);
                    for (k, &i) in idx.iter().enumerate() {
                        mu[i] = s[k];
                    }
                    if feasible(&mu) && mu.sum() < best.sum() {
                        best = mu;
                    }
                }
            }
            // next combination in lexicographic order
            let Some(pos) = (0..r).rev().find(|&k| idx[k] < m - r + k) else {
                break;
            };
            idx[pos] += 1;
            for k in pos + 1..r {
                idx[k] = idx[k - 1] + 1;
            }
        }
    }
    if !best.iter().all(|v| v.is_finite()) {
        return None;
    }
    best.iter_mut().for_each(|v| *v = v.max(0.0));
    (best.sum() > 0.0).then_some(best)
}

/// Projected gradient ascent of f(v) = cos(dir, v) with step doubling and
/// halving. `project` maps back onto the feasible set.
fn ascend(
    start: Vec<f64>,
    eval: impl Fn(&[f64]) -> (f64, Vec<f64>),
    project: impl Fn(&[f64]) -> Vec<f64>,
) -> (Vec<f64>, f64) {
    let mut w = start;
    let (mut f, mut grad) = eval(&w);
    let mut eta = 1.0;
    for _ in 0..5000 {
        let mut improved = false;
        while eta > 1e-14 {
            let cand: Vec<f64> = project(&w.iter().zip(&grad).map(|(a, g)| a + eta * g).collect::<Vec<_>>());
            let (fc, gc) = eval(&cand);
            if fc > f + 1e-15 {
                improved = fc - f > 1e-13;
                w = cand;
                f = fc;
                grad = gc;
                eta *= 2.0;
                break;
            }
            eta *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (w, f)
}

fn cos_and_grad(dir: &DVector<f64>, v: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
    let (nd, nv) = (dir.norm(), v.norm());
    if nv <= 1e-300 {
        return None;
    }
    let c = dir.dot(v) / (nd * nv);
    // d cos / dv
    let g = dir / (nd * nv) - v * (c / (nv * nv));
    Some((c, g))
}

/// Best weights on the simplex when every generator points away from `dir`.
/// The cosine is quasi-convex on the polar side, so the optimum sits on an
/// extreme ray of the cone, i.e. on a single generator.
fn polar_simplex(g: &DMatrix<f64>, dir: &DVector<f64>) -> Option<Vec<f64>> {
    let m = g.ncols();
    let (_, _, j) = (0..m)
        .filter_map(|j| {
            let col = g.column(j).into_owned();
            cos_and_grad(dir, &col).map(|(c, _)| (c, col.norm(), j))
        })
        .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))?;
    let mut e = vec![0.0; m];
    e[j] = 1.0;
    Some(e)
}

// ---- cube hull ----

fn select_cube(points: &[Vec<f64>], delta: f64, z: &[f64], dir: &[f64]) -> Result<GradSelection> {
    let bx = cube_hull(points)?.shrink(delta);
    let fallback = || GradSelection {
        x: bx.center(),
        cosine: 0.0,
        weights: None,
        fallback: true,
    };
    if norm(dir) == 0.0 {
        return Ok(fallback());
    }
    let a: Vec<f64> = bx.lo.iter().zip(z).map(|(lo, z)| lo - z).collect();
    let b: Vec<f64> = bx.hi.iter().zip(z).map(|(hi, z)| hi - z).collect();
    let s = cone_scale(dir, &a, &b);
    let mut u: Vec<f64> = (0..dir.len()).map(|l| dir[l].clamp(s * a[l], s * b[l])).collect();
    let dn = norm(dir);
    if s <= 0.0 || norm(&u) <= 1e-12 * dn || dot(&u, dir) <= 1e-14 * dn * norm(&u) {
        u = polar_box(dir, &a, &b);
    }
    let exit = (0..u.len())
        .filter_map(|l| match u[l] {
            v if v > 0.0 => Some(b[l] / v),
            v if v < 0.0 => Some(a[l] / v),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    if !exit.is_finite() || exit <= 0.0 {
        return Ok(fallback());
    }
    let x = bx.clamp(&z.iter().zip(&u).map(|(z, u)| z + exit * u).collect::<Vec<_>>());
    Ok(finish(x, z, dir, None, fallback))
}

fn psi(dir: &[f64], a: &[f64], b: &[f64], s: f64) -> f64 {
    (0..dir.len())
        .map(|l| {
            let e = (s * a[l] - dir[l]).max(dir[l] - s * b[l]).max(0.0);
            e * e
        })
        .sum()
}

/// argmin over s >= 0 of sum_l dist(dir_l, [s a_l, s b_l])^2. The objective
/// is convex and piecewise quadratic, so breakpoints plus per-piece
/// stationary points cover every candidate minimizer.
fn cone_scale(dir: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut brk = vec![0.0];
    for l in 0..dir.len() {
        for c in [a[l], b[l]] {
            if c != 0.0 {
                let r = dir[l] / c;
                if r.is_finite() && r > 0.0 {
                    brk.push(r);
                }
            }
        }
    }
    brk.sort_by(f64::total_cmp);
    brk.dedup();
    let mut cands = brk.clone();
    for k in 0..brk.len() {
        let lo = brk[k];
        let hi = brk.get(k + 1).copied().unwrap_or(f64::INFINITY);
        let mid = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 };
        let (mut num, mut den) = (0.0, 0.0);
        for l in 0..dir.len() {
            let c = if dir[l] < mid * a[l] {
                a[l]
            } else if dir[l] > mid * b[l] {
                b[l]
            } else {
                continue;
            };
            num += c * dir[l];
            den += c * c;
        }
        if den > 0.0 {
            cands.push((num / den).clamp(lo, hi));
        } else if hi.is_finite() {
            cands.push(mid);
        } else {
            cands.push(lo + 1.0);
        }
    }
    cands
        .into_iter()
        .map(|s| (psi(dir, a, b, s), s))
        .min_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)))
        .map(|(_, s)| s)
        .unwrap_or(0.0)
}

/// Best step direction inside the box [a, b] (relative to z) when the
/// preferred direction is in the polar cone.
fn polar_box(dir: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let bx = AxisBox {
        lo: a.to_vec(),
        hi: b.to_vec(),
    };
    let dv = DVector::from_column_slice(dir);
    let eval = |v: &[f64]| match cos_and_grad(&dv, &DVector::from_column_slice(v)) {
        Some((c, g)) => (c, g.iter().copied().collect()),
        None => (-2.0, vec![0.0; v.len()]),
    };
    let greedy: Vec<f64> = (0..dir.len())
        .map(|l| {
            if dir[l] > 0.0 {
                b[l]
            } else if dir[l] < 0.0 {
                a[l]
            } else if a[l].abs() < b[l].abs() {
                a[l]
            } else {
                b[l]
            }
        })
        .collect();
    let cos = |v: &[f64]| eval(v).0;
    // Same quasi-convexity argument as the simplex: a box vertex is optimal.
    let d = dir.len();
    if d <= 16 {
        let mut best = (f64::NEG_INFINITY, greedy.clone());
        for mask in 0u32..(1 << d) {
            let v: Vec<f64> = (0..d).map(|l| if mask >> l & 1 == 1 { b[l] } else { a[l] }).collect();
            let c = cos(&v);
            if c > best.0 {
                best = (c, v);
            }
        }
        return best.1;
    }
    // Flip one coordinate at a time until no flip helps.
    let mut v = greedy;
    let mut f = cos(&v);
    loop {
        let mut moved = false;
        for l in 0..d {
            let old = v[l];
            v[l] = if old == a[l] { b[l] } else { a[l] };
            let c = cos(&v);
            if c > f + 1e-15 {
                f = c;
                moved = true;
            } else {
                v[l] = old;
            }
        }
        if !moved {
            break;
        }
    }
    let nearest = bx.clamp(&vec![0.0; d]);
    [v, nearest, bx.center()]
        .into_iter()
        .map(|s| ascend(s, eval, |v| bx.clamp(v)))
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(v, _)| v)
        .unwrap_or_default()
}

/// Distance from `x` to the delta-shrunk convex hull of `points`.
///
/// Exact for up to 12 points (every support set is tried through its KKT
/// system); larger sets fall back to an NNLS fit with the affine constraint
/// as a heavy row, which gives an upper bound.
pub fn hull_distance(points: &[Vec<f64>], delta: f64, x: &[f64]) -> Result<f64> {
    check_delta(delta)?;
    let m = points.len();
    if m == 0 {
        return Err(Error::EmptyPointSet);
    }
    let d = x.len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            found: p.len(),
        });
    }
    let centroid = combine(points, &vec![1.0 / m as f64; m]);
    // shrunk vertices relative to x
    let rel: Vec<Vec<f64>> = points
        .iter()
        .map(|p| (0..d).map(|l| centroid[l] + delta * (p[l] - centroid[l]) - x[l]).collect())
        .collect();
    let dist = |w: &[f64]| norm(&combine(&rel, w));
    let mut best = rel.iter().map(|r| norm(r)).fold(f64::INFINITY, f64::min);
    if m <= 12 {
        for mask in 1u32..(1 << m) {
            let supp: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).collect();
            if supp.len() < 2 || supp.len() > d + 1 {
                continue;
            }
            if let Some(w) = simplex_kkt(&rel, &supp) {
                best = best.min(dist(&w));
            }
        }
        return Ok(best);
    }
    let scale = rel.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
    let beta = 1e4 * scale;
    let a = DMatrix::from_fn(d + 1, m, |r, j| if r < d { rel[j][r] } else { beta });
    let mut target = DVector::zeros(d + 1);
    target[d] = beta;
    let lam = nnls(&a, &target);
    let total = lam.sum();
    if total > 0.0 {
        let w: Vec<f64> = lam.iter().map(|v| v / total).collect();
        best = best.min(dist(&w));
    }
    Ok(best)
}

/// Minimizer of |sum_j w_j r_j| over the affine hull of the support, when it
/// has nonnegative weights.
fn simplex_kkt(rel: &[Vec<f64>], supp: &[usize]) -> Option<Vec<f64>> {
    let k = supp.len();
    let kkt = DMatrix::from_fn(k + 1, k + 1, |r, c| match (r < k, c < k) {
        (true, true) => dot(&rel[supp[r]], &rel[supp[c]]),
        (false, false) => 0.0,
        _ => 1.0,
    });
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = lstsq(&kkt, &rhs)?;
    if sol.iter().take(k).any(|&v| v < -1e-12) || (sol.iter().take(k).sum::<f64>() - 1.0).abs() > 1e-9 {
        return None;
    }
    let mut w = vec![0.0; rel.len()];
    for (r, &j) in supp.iter().enumerate() {
        w[j] = sol[r].max(0.0);
    }
    Some(w)
}
