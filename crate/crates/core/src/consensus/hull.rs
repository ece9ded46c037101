use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

use super::check_delta;

const WEIGHT_TOL: f64 = 1e-9;

/// How the free delta-portion of the shrunk-hull weights is chosen.
#[derive(Debug, Clone, Copy)]
pub enum HullChoice<'a> {
    /// lambda = 1/m, the vertex centroid.
    Uniform,
    /// lambda ~ Dirichlet(1, ..., 1) from the given seed.
    Dirichlet(u64),
    /// Caller-supplied lambda on the simplex.
    Portion(&'a [f64]),
    /// Caller-supplied final weights; each must clear the floor.
    Weights(&'a [f64]),
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let first = points.first().ok_or(Error::EmptyPointSet)?;
    let d = first.len();
    for p in points {
        if p.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: p.len(),
            });
        }
    }
    Ok(d)
}

pub(crate) fn dirichlet(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[0x4449]);
    let mut lam: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = lam.iter().sum();
    lam.iter_mut().for_each(|v| *v /= s);
    lam
}

/// Weighted sum in index order; the order matters for bitwise agreement with
/// the linear kernel.
pub(crate) fn combine(points: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; points[0].len()];
    for (p, &wj) in points.iter().zip(w) {
        for (acc, v) in x.iter_mut().zip(p) {
            *acc += wj * v;
        }
    }
    x
}

/// Pick a point of the delta-shrunk convex hull. Returns the point and its
/// convex weights, every one of which is at least (1 - delta) / m.
pub fn shrunk_hull_select(points: &[Vec<f64>], delta: f64, choice: HullChoice) -> Result<(Vec<f64>, Vec<f64>)> {
    check_delta(delta)?;
    check_points(points)?;
    let m = points.len();
    let floor = (1.0 - delta) / m as f64;
    let from_portion = |lam: &[f64]| lam.iter().map(|l| floor + delta * l).collect::<Vec<_>>();
    let w = match choice {
        HullChoice::Uniform => vec![1.0 / m as f64; m],
        HullChoice::Dirichlet(seed) => from_portion(&dirichlet(m, seed)),
        HullChoice::Portion(lam) => {
            if lam.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    found: lam.len(),
                });
            }
            let s: f64 = lam.iter().sum();
            if lam.iter().any(|&l| !(l >= 0.0)) || (s - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::Parameter("hull portion must lie on the simplex".into()));
            }
            from_portion(lam)
        }
        HullChoice::Weights(w) => {
            if w.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    found: w.len(),
                });
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::Parameter(format!("hull weights sum to {s}, not 1")));
            }
            if let Some(k) = w.iter().position(|&v| !(v >= floor - 1e-12)) {
                return Err(Error::Parameter(format!(
                    "hull weight {} = {} is below the floor {floor}",
                    k + 1,
                    w[k]
                )));
            }
            w.to_vec()
        }
    };
    Ok((combine(points, &w), w))
}

/// Axis-aligned box [lo_l, hi_l] per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::Parameter("box needs lo <= hi in every dimension".into()));
        }
        Ok(AxisBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn halfwidth(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (b - a)).collect()
    }

    /// Contract about the center by `delta`.
    pub fn shrink(&self, delta: f64) -> AxisBox {
        let (c, h) = (self.center(), self.halfwidth());
        let lo = c.iter().zip(&h).map(|(c, h)| c - delta * h).collect();
        let hi = c.iter().zip(&h).map(|(c, h)| c + delta * h).collect();
        AxisBox { lo, hi }
    }

    /// Grow each side by `frac` of its width. Flat sides grow by `frac` of
    /// the coordinate magnitude (at least `frac`).
    pub fn pad(&self, frac: f64) -> AxisBox {
        let margin = |a: f64, b: f64| {
            let w = b - a;
            frac * if w > 0.0 { w } else { a.abs().max(1.0) }
        };
        let lo = self.lo.iter().zip(&self.hi).map(|(&a, &b)| a - margin(a, b)).collect();
        let hi = self.lo.iter().zip(&self.hi).map(|(&a, &b)| b + margin(a, b)).collect();
        AxisBox { lo, hi }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *v >= a - tol && *v <= b + tol)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (a, b))| v.clamp(*a, *b))
            .collect()
    }

    /// Extend by another box so the result covers both.
    pub fn union(&self, other: &AxisBox) -> AxisBox {
        AxisBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }
}

/// Smallest axis-aligned box containing every point.
pub fn cube_hull(points: &[Vec<f64>]) -> Result<AxisBox> {
    let d = check_points(points)?;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for l in 0..d {
            lo[l] = lo[l].min(p[l]);
            hi[l] = hi[l].max(p[l]);
        }
    }
    Ok(AxisBox { lo, hi })
}

#[derive(Debug, Clone, Copy)]
pub enum CubeChoice<'a> {
    Uniform(u64),
    Center,
    Clamp(&'a [f64]),
}

/// Pick a point of the delta-shrunk cube hull.
pub fn shrunk_cube_select(points: &[Vec<f64>], delta: f64, choice: CubeChoice) -> Result<Vec<f64>> {
    check_delta(delta)?;
    let b = cube_hull(points)?.shrink(delta);
    Ok(match choice {
        CubeChoice::Center => b.center(),
        CubeChoice::Clamp(p) => {
            if p.len() != b.dim() {
                return Err(Error::Dimension {
                    expected: b.dim(),
                    found: p.len(),
                });
            }
            b.clamp(p)
        }
        CubeChoice::Uniform(seed) => {
            let mut rng = stream(seed, &[0x4255]);
            b.lo
                .iter()
                .zip(&b.hi)
                .map(|(&a, &c)| if c > a { rng.random_range(a..=c) } else { a })
                .collect()
        }
    })
}
