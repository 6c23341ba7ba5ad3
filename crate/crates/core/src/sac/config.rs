use crate::config::Config;
use crate::error::{validation, Result};

/// Entropy coefficient handling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaMode {
    /// Learned `log alpha`, starting from `initial`.
    Auto {
        initial: f64,
    },
    Fixed(f64),
}

/// Action distribution used before learning starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WarmupAction {
    /// Independent uniform draws in `[-1, 1]`.
    Uniform,
    /// Ornstein-Uhlenbeck process `x += -theta x + sigma z`, clipped to `[-1, 1]`.
    Correlated { theta: f64, sigma: f64 },
}

/// Units the regularizer matrices refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegUnits {
    Normalized,
    Physical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SacConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub gamma: f64,
    pub tau: f64,
    pub alpha: AlphaMode,
    /// `None` means `-action_dim`.
    pub target_entropy: Option<f64>,
    /// Environment steps between update rounds.
    pub train_freq: usize,
    /// Gradient steps per update round.
    pub gradient_steps: usize,
    pub warmup_steps: usize,
    pub warmup_action: WarmupAction,
    pub hidden: Vec<usize>,
    pub reg_units: RegUnits,
    /// Steps between evaluation rollouts (0 disables).
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Steps between checkpoint files (0 writes only the final one).
    pub checkpoint_interval: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            lr: 3e-4,
            batch_size: 512,
            buffer_capacity: 1_000_000,
            gamma: 0.99,
            tau: 0.005,
            alpha: AlphaMode::Auto { initial: 1.0 },
            target_entropy: None,
            train_freq: 1,
            gradient_steps: 1,
            warmup_steps: 10_000,
            warmup_action: WarmupAction::Uniform,
            hidden: vec![256, 256],
            reg_units: RegUnits::Normalized,
            eval_interval: 0,
            eval_episodes: 5,
            checkpoint_interval: 0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(validation(format!(
                "sac.gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(validation(format!(
                "sac.tau must be in (0, 1], got {}",
                self.tau
            )));
        }
        if !(self.lr > 0.0) {
            return Err(validation("sac.lr must be positive"));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(validation(format!(
                "need 0 < batch_size <= buffer_capacity (got {} and {})",
                self.batch_size, self.buffer_capacity
            )));
        }
        if self.train_freq == 0 {
            return Err(validation("sac.train_freq must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(validation(
                "sac.hidden needs at least one non-zero layer width",
            ));
        }
        match self.alpha {
            AlphaMode::Auto { initial } if !(initial > 0.0 && initial.is_finite()) => {
                return Err(validation("initial entropy coefficient must be positive"))
            }
            AlphaMode::Fixed(a) if !(a >= 0.0 && a.is_finite()) => {
                return Err(validation("fixed entropy coefficient must be non-negative"))
            }
            _ => {}
        }
        if let WarmupAction::Correlated { theta, sigma } = self.warmup_action {
            if !(theta >= 0.0 && theta <= 1.0 && sigma >= 0.0) {
                return Err(validation(
                    "sac.ou_theta must be in [0, 1] and sac.ou_sigma >= 0",
                ));
            }
        }
        Ok(())
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = SacConfig::default();
        let alpha_init = cfg.get_or("sac.alpha_init", 1.0)?;
        let alpha = match cfg.raw("sac.alpha") {
            None | Some("auto") => AlphaMode::Auto {
                initial: alpha_init,
            },
            Some(v) => AlphaMode::Fixed(v.parse().map_err(|_| {
                validation(format!("sac.alpha: expected `auto` or a number, got `{v}`"))
            })?),
        };
        let warmup_action = match cfg.raw("sac.warmup_action").unwrap_or("uniform") {
            "uniform" => WarmupAction::Uniform,
            "ou" => WarmupAction::Correlated {
                theta: cfg.get_or("sac.ou_theta", 0.05)?,
                sigma: cfg.get_or("sac.ou_sigma", 0.3)?,
            },
            other => {
                return Err(validation(format!(
                    "sac.warmup_action: expected uniform or ou, got `{other}`"
                )))
            }
        };
        let hidden = match cfg.get_list("sac.hidden")? {
            Some(v) => v
                .into_iter()
                .map(|x| {
                    if x >= 1.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(validation(format!("sac.hidden: bad layer width {x}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            None => d.hidden.clone(),
        };
        let reg_units = match cfg.raw("sac.reg_units").unwrap_or("normalized") {
            "normalized" => RegUnits::Normalized,
            "physical" => RegUnits::Physical,
            other => {
                return Err(validation(format!(
                    "sac.reg_units: expected normalized or physical, got `{other}`"
                )))
            }
        };
        let out = SacConfig {
            lr: cfg.get_or("sac.lr", d.lr)?,
            batch_size: cfg.get_or("sac.batch_size", d.batch_size)?,
            buffer_capacity: cfg.get_or("sac.buffer_capacity", d.buffer_capacity)?,
            gamma: cfg.get_or("sac.gamma", d.gamma)?,
            tau: cfg.get_or("sac.tau", d.tau)?,
            alpha,
            target_entropy: cfg.get("sac.target_entropy")?,
            train_freq: cfg.get_or("sac.train_freq", d.train_freq)?,
            gradient_steps: cfg.get_or("sac.gradient_steps", d.gradient_steps)?,
            warmup_steps: cfg.get_or("sac.warmup_steps", d.warmup_steps)?,
            warmup_action,
            hidden,
            reg_units,
            eval_interval: cfg.get_or("sac.eval_interval", d.eval_interval)?,
            eval_episodes: cfg.get_or("sac.eval_episodes", d.eval_episodes)?,
            checkpoint_interval: cfg.get_or("sac.checkpoint_interval", d.checkpoint_interval)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn write_config(&self, cfg: &mut Config) {
        cfg.set("sac.lr", self.lr.to_string());
        cfg.set("sac.batch_size", self.batch_size.to_string());
        cfg.set("sac.buffer_capacity", self.buffer_capacity.to_string());
        cfg.set("sac.gamma", self.gamma.to_string());
        cfg.set("sac.tau", self.tau.to_string());
        match self.alpha {
            AlphaMode::Auto { initial } => {
                cfg.set("sac.alpha", "auto");
                cfg.set("sac.alpha_init", initial.to_string());
            }
            AlphaMode::Fixed(a) => cfg.set("sac.alpha", a.to_string()),
        }
        if let Some(t) = self.target_entropy {
            cfg.set("sac.target_entropy", t.to_string());
        }
        cfg.set("sac.train_freq", self.train_freq.to_string());
        cfg.set("sac.gradient_steps", self.gradient_steps.to_string());
        cfg.set("sac.warmup_steps", self.warmup_steps.to_string());
        match self.warmup_action {
            WarmupAction::Uniform => cfg.set("sac.warmup_action", "uniform"),
            WarmupAction::Correlated { theta, sigma } => {
                cfg.set("sac.warmup_action", "ou");
                cfg.set("sac.ou_theta", theta.to_string());
                cfg.set("sac.ou_sigma", sigma.to_string());
            }
        }
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        cfg.set("sac.hidden", hidden.join(","));
        cfg.set(
            "sac.reg_units",
            match self.reg_units {
                RegUnits::Normalized => "normalized",
                RegUnits::Physical => "physical",
            },
        );
        cfg.set("sac.eval_interval", self.eval_interval.to_string());
        cfg.set("sac.eval_episodes", self.eval_episodes.to_string());
        cfg.set(
            "sac.checkpoint_interval",
            self.checkpoint_interval.to_string(),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_config() {
        let mut c = Config::new();
        let mut s = SacConfig::default();
        s.hidden = vec![64, 32];
        s.alpha = AlphaMode::Fixed(0.1);
        s.warmup_action = WarmupAction::Correlated {
            theta: 0.1,
            sigma: 0.5,
        };
        s.target_entropy = Some(-3.0);
        s.write_config(&mut c);
        assert_eq!(SacConfig::from_config(&c).unwrap(), s);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = Config::new();
        c.set("sac.gamma", "1.0");
        assert!(SacConfig::from_config(&c).is_err());
        c.set("sac.gamma", "0");
        c.set("sac.alpha", "0");
        assert!(SacConfig::from_config(&c).is_ok());
        c.set("sac.alpha", "-0.1");
        assert!(SacConfig::from_config(&c).is_err());
        let mut c = Config::new();
        c.set("sac.batch_size", "10");
        c.set("sac.buffer_capacity", "5");
        assert!(SacConfig::from_config(&c).is_err());
    }
}
