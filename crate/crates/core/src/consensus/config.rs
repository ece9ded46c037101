use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::transforms::{Transform, TransformSchedule};

use super::{ConsensusOperator, CubeSelector, GradSign, HullSelector};

fn default_delta() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HullSelectorKind {
    #[default]
    Uniform,
    Dirichlet,
}

fn default_cube_selector() -> CubeSelector {
    CubeSelector::Center
}

/// JSON form of a consensus operator, e.g. `{"consensus":"pw_mean","p":5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "consensus", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Linear {},
    Transform {
        transform: Transform,
    },
    PwMean {
        p: f64,
    },
    Max {},
    Min {},
    Hull {
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        selector: HullSelectorKind,
        #[serde(default)]
        transform: Transform,
    },
    CubeHull {
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_cube_selector")]
        selector: CubeSelector,
    },
    GradHull {
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        grad_sign: GradSign,
    },
    GradCube {
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        grad_sign: GradSign,
    },
}

impl OperatorConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: OperatorConfig = serde_json::from_str(s)?;
        cfg.build()?;
        Ok(cfg)
    }

    pub fn build(&self) -> Result<ConsensusOperator> {
        let op = match self {
            OperatorConfig::Linear {} => ConsensusOperator::Linear,
            OperatorConfig::Transform { transform } => {
                ConsensusOperator::Transform(TransformSchedule::uniform(transform.validated()?))
            }
            OperatorConfig::PwMean { p } => ConsensusOperator::PwMean(*p),
            OperatorConfig::Max {} => ConsensusOperator::Max,
            OperatorConfig::Min {} => ConsensusOperator::Min,
            OperatorConfig::Hull {
                delta,
                selector,
                transform,
            } => ConsensusOperator::Hull {
                delta: *delta,
                selector: match selector {
                    HullSelectorKind::Uniform => HullSelector::Uniform,
                    HullSelectorKind::Dirichlet => HullSelector::Dirichlet,
                },
                transform: TransformSchedule::uniform(transform.validated()?),
            },
            OperatorConfig::CubeHull { delta, selector } => ConsensusOperator::CubeHull {
                delta: *delta,
                selector: *selector,
            },
            OperatorConfig::GradHull { delta, grad_sign } => ConsensusOperator::GradHull {
                delta: *delta,
                sign: *grad_sign,
            },
            OperatorConfig::GradCube { delta, grad_sign } => ConsensusOperator::GradCube {
                delta: *delta,
                sign: *grad_sign,
            },
        };
        op.validate()?;
        Ok(op)
    }

    /// Short scheme name used in CSV columns and plot legends.
    pub fn label(&self) -> String {
        match self {
            OperatorConfig::PwMean { p } => format!("p={p}"),
            other => other.build().map(|op| op.label()).unwrap_or_else(|_| "invalid".into()),
        }
    }
}
