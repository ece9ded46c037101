//! Element-wise strictly monotone bijections used by nonlinear consensus.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to components before a positive-domain transform when
/// the caller asks for it (iterates projected onto the nonnegative orthant can
/// land exactly on zero).
pub const POSITIVE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    Identity,
    /// x -> x^p on the positive half-line, p finite and nonzero.
    Power { p: f64 },
    /// x -> ln x, the p -> 0 member of the power family.
    Log,
}

impl Default for Transform {
    fn default() -> Self {
        Transform::Identity
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Identity => write!(f, "identity"),
            Transform::Power { p } => write!(f, "power({p})"),
            Transform::Log => write!(f, "log"),
        }
    }
}

impl Transform {
    /// Power transform with `p = 0` mapped onto [`Transform::Log`].
    pub fn power(p: f64) -> Result<Self> {
        if !p.is_finite() {
            return Err(Error::Parameter(format!("power exponent must be finite, got {p}")));
        }
        Ok(if p == 0.0 {
            Transform::Log
        } else {
            Transform::Power { p }
        })
    }

    /// Re-validates a deserialized value (serde accepts any `p`).
    pub fn validated(self) -> Result<Self> {
        match self {
            Transform::Power { p } => Transform::power(p),
            other => Ok(other),
        }
    }

    /// Whether the transform is only defined on (0, inf).
    pub fn positive_domain(&self) -> bool {
        match self {
            Transform::Identity => false,
            Transform::Power { p } => *p != 1.0,
            Transform::Log => true,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Transform::Identity)
    }

    pub fn in_domain(&self, x: f64) -> bool {
        x.is_finite() && (!self.positive_domain() || x > 0.0)
    }

    /// Forward map, no domain check.
    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => x,
            Transform::Power { p } if p == 1.0 => x,
            Transform::Power { p } => x.powf(p),
            Transform::Log => x.ln(),
        }
    }

    /// Inverse map, no domain check.
    #[inline]
    pub fn inverse(&self, y: f64) -> f64 {
        match *self {
            Transform::Identity => y,
            Transform::Power { p } if p == 1.0 => y,
            Transform::Power { p } => y.powf(1.0 / p),
            Transform::Log => y.exp(),
        }
    }

    /// Whether the transform reverses order.
    pub fn decreasing(&self) -> bool {
        matches!(self, Transform::Power { p } if *p < 0.0)
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => 1.0,
            Transform::Power { p } => p * x.powf(p - 1.0),
            Transform::Log => 1.0 / x,
        }
    }

    /// (L+, L-): sup |phi'| over `[a, b]` and sup |(phi^-1)'| over the image
    /// of `[a, b]`. Closed form: |phi'| is monotone on the positive
    /// half-line for every shipped family, so both suprema sit at endpoints.
    pub fn lipschitz_bounds(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        if !(a.is_finite() && b.is_finite()) || a > b {
            return Err(Error::Parameter(format!("invalid interval [{a}, {b}]")));
        }
        if self.is_identity() {
            return Ok((1.0, 1.0));
        }
        if a <= 0.0 && !matches!(self, Transform::Power { p } if *p == 1.0) {
            return Err(Error::Parameter(format!(
                "interval [{a}, {b}] touches the singularity of {self} at 0"
            )));
        }
        let da = self.derivative(a).abs();
        let db = self.derivative(b).abs();
        Ok((da.max(db), (1.0 / da).max(1.0 / db)))
    }

    fn check(&self, index: usize, x: f64) -> Result<()> {
        if self.in_domain(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                index,
                value: x,
                site: None,
            })
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        v.iter()
            .enumerate()
            .map(|(i, &x)| self.check(i, x).map(|_| self.forward(x)))
            .collect()
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        v.iter()
            .enumerate()
            .map(|(i, &y)| {
                let ok = match self {
                    Transform::Power { .. } => y.is_finite() && y > 0.0,
                    _ => y.is_finite(),
                };
                if ok {
                    Ok(self.inverse(y))
                } else {
                    Err(Error::Domain {
                        index: i,
                        value: y,
                        site: None,
                    })
                }
            })
            .collect()
    }
}

/// Lift components in `[0, POSITIVE_FLOOR)` onto the floor. Returns the number
/// of components moved; negative or non-finite values are left for the
/// domain check to reject.
pub fn clamp_to_floor(v: &mut [f64]) -> usize {
    let mut moved = 0;
    for x in v.iter_mut() {
        if *x >= 0.0 && *x < POSITIVE_FLOOR {
            *x = POSITIVE_FLOOR;
            moved += 1;
        }
    }
    moved
}

/// Where a schedule is being queried: agent, iteration, dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleSite {
    pub node: usize,
    pub t: usize,
    pub dim: usize,
}

type Hook = Arc<dyn Fn(ScheduleSite) -> Transform + Send + Sync>;

/// Assignment (i, t, l) -> transform. Uniform unless an override hook is set;
/// the hook must be a pure function of its argument.
#[derive(Clone)]
pub struct TransformSchedule {
    default: Transform,
    hook: Option<Hook>,
}

impl fmt::Debug for TransformSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformSchedule")
            .field("default", &self.default)
            .field("hook", &self.hook.is_some())
            .finish()
    }
}

impl TransformSchedule {
    pub fn uniform(t: Transform) -> Self {
        TransformSchedule {
            default: t,
            hook: None,
        }
    }

    pub fn identity() -> Self {
        Self::uniform(Transform::Identity)
    }

    pub fn with_hook(default: Transform, hook: impl Fn(ScheduleSite) -> Transform + Send + Sync + 'static) -> Self {
        TransformSchedule {
            default,
            hook: Some(Arc::new(hook)),
        }
    }

    pub fn default_transform(&self) -> Transform {
        self.default
    }

    pub fn is_uniform(&self) -> bool {
        self.hook.is_none()
    }

    pub fn is_identity(&self) -> bool {
        self.hook.is_none() && self.default.is_identity()
    }

    pub fn requires_positive(&self) -> bool {
        self.hook.is_some() || self.default.positive_domain()
    }

    #[inline]
    pub fn at(&self, site: ScheduleSite) -> Transform {
        match &self.hook {
            Some(h) => h(site),
            None => self.default,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn shipped_examples() {
        let sq = Transform::power(2.0).unwrap();
        assert_eq!(sq.forward(3.0), 9.0);
        assert_eq!(sq.inverse(9.0), 3.0);
        assert_eq!(Transform::Log.forward(1.0), 0.0);
        assert_eq!(Transform::Log.inverse(0.0), 1.0);
        assert_eq!(Transform::power(-1.0).unwrap().forward(4.0), 0.25);
        assert_eq!(Transform::power(0.0).unwrap(), Transform::Log);
        assert!(Transform::power(f64::NAN).is_err());
        assert!(Transform::power(f64::INFINITY).is_err());
    }

    #[test]
    fn vector_maps() {
        let cube = Transform::power(3.0).unwrap();
        assert_eq!(cube.apply(&[1.0, 2.0]).unwrap(), vec![1.0, 8.0]);
        let sq = Transform::power(2.0).unwrap();
        let back = sq.apply_inverse(&sq.apply(&[0.5, 7.0]).unwrap()).unwrap();
        assert!((back[0] - 0.5).abs() <= 1e-10 * 0.5);
        assert!((back[1] - 7.0).abs() <= 1e-10 * 7.0);
        match sq.apply(&[-1.0]) {
            Err(Error::Domain { index: 0, .. }) => {}
            other => panic!("expected domain error, got {other:?}"),
        }
        match Transform::Log.apply(&[1.0, 0.0]) {
            Err(Error::Domain { index: 1, .. }) => {}
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn lipschitz_closed_forms() {
        assert_eq!(Transform::Identity.lipschitz_bounds(1.0, 10.0).unwrap(), (1.0, 1.0));
        let (lp, lm) = Transform::power(2.0).unwrap().lipschitz_bounds(1.0, 3.0).unwrap();
        assert_eq!((lp, lm), (6.0, 0.5));
        let (lp, lm) = Transform::Log.lipschitz_bounds(1.0, std::f64::consts::E).unwrap();
        assert!((lp - 1.0).abs() < 1e-15);
        assert!((lm - std::f64::consts::E).abs() < 1e-15);
        assert!(Transform::power(0.5).unwrap().lipschitz_bounds(0.0, 1.0).is_err());
        assert!(Transform::power(3.0).unwrap().lipschitz_bounds(0.0, 1.0).is_err());
    }

    #[test]
    fn lipschitz_bounds_dominate_sampled_slopes() {
        let mut rng = crate::rng::stream(3, &[]);
        for t in [Transform::power(-3.0).unwrap(), Transform::power(0.5).unwrap(), Transform::Log] {
            let (a, b) = (0.5, 4.0);
            let (lp, lm) = t.lipschitz_bounds(a, b).unwrap();
            for _ in 0..1000 {
                let x = rng.random_range(a..b);
                let y = rng.random_range(a..b);
                if (x - y).abs() < 1e-9 {
                    continue;
                }
                let (fx, fy) = (t.forward(x), t.forward(y));
                assert!((fx - fy).abs() <= lp * (x - y).abs() * (1.0 + 1e-12));
                assert!((x - y).abs() <= lm * (fx - fy).abs() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn power_one_matches_identity_bitwise() {
        let one = Transform::power(1.0).unwrap();
        let mut rng = crate::rng::stream(5, &[]);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(1e-6..1e6);
            assert_eq!(one.forward(x).to_bits(), x.to_bits());
            assert_eq!(one.inverse(x).to_bits(), x.to_bits());
        }
    }

    #[test]
    fn monotone_on_random_pairs() {
        let mut rng = crate::rng::stream(9, &[]);
        for t in [
            Transform::Identity,
            Transform::Log,
            Transform::power(2.0).unwrap(),
            Transform::power(5.0).unwrap(),
            Transform::power(-1.0).unwrap(),
            Transform::power(-3.0).unwrap(),
        ] {
            for _ in 0..1000 {
                let x: f64 = rng.random_range(1e-3..1e3);
                let y: f64 = x * rng.random_range(1.0001..3.0);
                let (fx, fy) = (t.forward(x), t.forward(y));
                if t.decreasing() {
                    assert!(fx > fy, "{t} {x} {y}");
                } else {
                    assert!(fx < fy, "{t} {x} {y}");
                }
            }
        }
    }

    #[test]
    fn floor_clamp() {
        let mut v = [0.0, 1e-13, -1.0, 2.0];
        assert_eq!(clamp_to_floor(&mut v), 2);
        assert_eq!(v, [POSITIVE_FLOOR, POSITIVE_FLOOR, -1.0, 2.0]);
    }

    #[test]
    fn config_syntax() {
        let t: Transform = serde_json::from_str(r#"{"kind":"power","p":5}"#).unwrap();
        assert_eq!(t, Transform::Power { p: 5.0 });
        let t: Transform = serde_json::from_str(r#"{"kind":"log"}"#).unwrap();
        assert_eq!(t, Transform::Log);
        let zero: Transform = serde_json::from_str(r#"{"kind":"power","p":0}"#).unwrap();
        assert_eq!(zero.validated().unwrap(), Transform::Log);
    }

    #[test]
    fn hook_schedule_is_consulted() {
        let s = TransformSchedule::with_hook(Transform::Identity, |site| {
            if site.node == 0 {
                Transform::Log
            } else {
                Transform::Identity
            }
        });
        assert!(!s.is_uniform());
        assert_eq!(s.at(ScheduleSite { node: 0, t: 3, dim: 1 }), Transform::Log);
        assert_eq!(s.at(ScheduleSite { node: 2, t: 3, dim: 1 }), Transform::Identity);
    }

    proptest! {
        #[test]
        fn round_trip_relative_error(x in 1e-6f64..1e6, p in prop::sample::select(vec![-3.0, -1.0, 0.5, 2.0, 5.0])) {
            for t in [Transform::power(p).unwrap(), Transform::Log] {
                let back = t.inverse(t.forward(x));
                prop_assert!((back - x).abs() <= 1e-10 * x, "{} {} {}", t, x, back);
            }
        }
    }
}
