use crate::config::Config;
use crate::error::{validation, Result};

/// Diagonal matrices are stored as their diagonal.
#[derive(Clone, Debug, PartialEq)]
pub enum RegularizerSpec {
    None,
    /// `r - a^T M a` on every stored reward.
    RewardAction(Vec<f64>),
    /// `lambda * ||theta||^2` added to the actor loss.
    PolicyWeightL2(f64),
    /// `mean_s m(s)^T M m(s)` added to the actor loss, `m` the mean action.
    PolicyOutput(Vec<f64>),
}

/// Racing defaults for the 2-d action `[d_rate, delta_rate]`.
const RACE_REWARD_DIAG: [f64; 2] = [0.005, 0.001];
const RACE_OUTPUT_DIAG: [f64; 2] = [50.0, 10.0];
const DEFAULT_WEIGHT_LAMBDA: f64 = 1e-4;

impl RegularizerSpec {
    pub const NAMES: [&'static str; 4] = ["none", "reward", "weight", "output"];

    /// Builds a spec from a short name and an optional value. A single value
    /// is broadcast over all action dimensions. Without a value the racing
    /// defaults apply (only for 2-d actions).
    pub fn parse(name: &str, value: Option<&str>, action_dim: usize) -> Result<Self> {
        let values: Option<Vec<f64>> = value
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| validation(format!("bad regularizer value `{x}`")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let diag = |default: [f64; 2]| -> Result<Vec<f64>> {
            match &values {
                Some(v) if v.len() == 1 => Ok(vec![v[0]; action_dim]),
                Some(v) if v.len() == action_dim => Ok(v.clone()),
                Some(v) => Err(validation(format!(
                    "regularizer needs 1 or {action_dim} values, got {}",
                    v.len()
                ))),
                None if action_dim == 2 => Ok(default.to_vec()),
                None => Err(validation(
                    "regularizer value required for this action dimension",
                )),
            }
        };
        let spec = match name {
            "none" => RegularizerSpec::None,
            "reward" => RegularizerSpec::RewardAction(diag(RACE_REWARD_DIAG)?),
            "output" => RegularizerSpec::PolicyOutput(diag(RACE_OUTPUT_DIAG)?),
            "weight" => match &values {
                None => RegularizerSpec::PolicyWeightL2(DEFAULT_WEIGHT_LAMBDA),
                Some(v) if v.len() == 1 => RegularizerSpec::PolicyWeightL2(v[0]),
                Some(_) => return Err(validation("weight regularizer takes one value")),
            },
            other => {
                return Err(validation(format!(
                    "unknown regularizer `{other}` (expected one of: {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            RegularizerSpec::None => true,
            RegularizerSpec::RewardAction(m) | RegularizerSpec::PolicyOutput(m) => {
                m.iter().all(|v| *v >= 0.0 && v.is_finite())
            }
            RegularizerSpec::PolicyWeightL2(l) => *l >= 0.0 && l.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(validation(
                "regularizer entries must be finite and non-negative",
            ))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegularizerSpec::None => "none",
            RegularizerSpec::RewardAction(_) => "reward",
            RegularizerSpec::PolicyWeightL2(_) => "weight",
            RegularizerSpec::PolicyOutput(_) => "output",
        }
    }

    /// Value string accepted by [`RegularizerSpec::parse`].
    pub fn value_string(&self) -> String {
        match self {
            RegularizerSpec::None => String::new(),
            RegularizerSpec::PolicyWeightL2(l) => l.to_string(),
            RegularizerSpec::RewardAction(m) | RegularizerSpec::PolicyOutput(m) => m
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        }
    }

    /// Rewrites a matrix given in physical action units for normalized
    /// actions `a_phys = scale * a`.
    pub fn physical_to_normalized(&self, scale: &[f64]) -> Self {
        let conv = |m: &[f64]| m.iter().zip(scale).map(|(v, s)| v * s * s).collect();
        match self {
            RegularizerSpec::RewardAction(m) => RegularizerSpec::RewardAction(conv(m)),
            RegularizerSpec::PolicyOutput(m) => RegularizerSpec::PolicyOutput(conv(m)),
            other => other.clone(),
        }
    }

    /// Reads `reg.kind` and `reg.value`.
    pub fn from_config(cfg: &Config, action_dim: usize) -> Result<Self> {
        Self::parse(
            cfg.raw("reg.kind").unwrap_or("none"),
            cfg.raw("reg.value").filter(|v| !v.is_empty()),
            action_dim,
        )
    }

    pub fn write_config(&self, cfg: &mut Config) {
        cfg.set("reg.kind", self.name());
        cfg.set("reg.value", self.value_string());
    }
}

/// `a^T diag(m) a`.
pub fn quad_form(m: &[f64], a: &[f64]) -> f64 {
    m.iter().zip(a).map(|(m, a)| m * a * a).sum()
}

pub fn reward_shape(reward: f64, action: &[f64], reg: &RegularizerSpec) -> f64 {
    match reg {
        RegularizerSpec::RewardAction(m) => reward - quad_form(m, action),
        _ => reward,
    }
}

/// Action value of the output-regularized problem: `Q(s, a) - a^T M a`.
pub fn regularized_q(q: f64, action: &[f64], m: &[f64]) -> f64 {
    q - quad_form(m, action)
}
