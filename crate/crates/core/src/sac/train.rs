use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::nn::GaussianPolicy;
use crate::sac::{
    reward_shape, RegUnits, RegularizerSpec, ReplayBuffer, SacAgent, SacConfig, Transition,
    UpdateStats, WarmupAction,
};

pub const LOG_CSV_HEADER: &str =
    "step,episode_return,episode_length,critic_loss,actor_loss,alpha,buffer_size";

/// One row per finished training episode. Losses are those of the most
/// recent update (zero before learning starts).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub episode_return: f64,
    pub episode_length: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub buffer_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRow {
    pub step: usize,
    pub mean_return: f64,
    pub mean_length: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub agent: SacAgent,
    pub log: Vec<LogRow>,
    pub evals: Vec<EvalRow>,
    /// Set when a numeric failure stopped training early; `agent` then holds
    /// the last parameters that passed the finiteness checks.
    pub aborted: Option<String>,
    pub faults: usize,
    pub steps: usize,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = format!("{LOG_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            r.episode_return,
            r.episode_length,
            r.critic_loss,
            r.actor_loss,
            r.alpha,
            r.buffer_size
        );
    }
    out
}

fn eval_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("step,mean_return,mean_length\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.step, r.mean_return, r.mean_length);
    }
    out
}

/// One evaluation episode.
#[derive(Clone, Debug, Default)]
pub struct Rollout {
    pub total_reward: f64,
    pub length: usize,
    /// Actions in the environment's own units.
    pub actions: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
    pub done: bool,
}

pub fn rollout<R: Rng + ?Sized>(
    env: &mut dyn Environment,
    policy: &GaussianPolicy,
    deterministic: bool,
    max_steps: usize,
    rng: &mut R,
) -> Result<Rollout> {
    let mut obs = env.reset();
    let mut out = Rollout {
        observations: vec![obs.clone()],
        ..Rollout::default()
    };
    for _ in 0..max_steps {
        let a = if deterministic {
            policy.mean_action(&obs)?
        } else {
            policy.sample_action(&obs, rng)?.0
        };
        let r = env.step(&a);
        out.total_reward += r.reward;
        out.length += 1;
        out.actions.push(env.physical_action(&a));
        out.observations.push(r.obs.clone());
        obs = r.obs;
        if r.done {
            out.done = true;
            break;
        }
    }
    Ok(out)
}

/// Regularizer rewritten for normalized actions.
pub(crate) fn normalized_reg(
    env: &dyn Environment,
    cfg: &SacConfig,
    reg: &RegularizerSpec,
) -> RegularizerSpec {
    match cfg.reg_units {
        RegUnits::Normalized => reg.clone(),
        RegUnits::Physical => {
            let scale = env.physical_action(&vec![1.0; env.action_dim()]);
            reg.physical_to_normalized(&scale)
        }
    }
}

/// Runs SAC on `env` for `total_steps` environment steps.
///
/// Files written under `out_dir` when given: `train_log.csv`,
/// `eval_log.csv`, `checkpoint_final.bin` and `checkpoint_<step>.bin` at the
/// configured cadence.
pub fn train(
    env: &mut dyn Environment,
    mut eval_env: Option<&mut dyn Environment>,
    cfg: &SacConfig,
    reg: &RegularizerSpec,
    total_steps: usize,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let reg_n = normalized_reg(env, cfg, reg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let act_dim = env.action_dim();
    let agent = SacAgent::new(env.obs_dim(), act_dim, cfg, &reg_n, &mut rng)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, env.obs_dim(), act_dim)?;
    let mut out = TrainOutcome {
        agent,
        log: Vec::new(),
        evals: Vec::new(),
        aborted: None,
        faults: 0,
        steps: 0,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let horizon = env.max_episode_steps();
    let mut last = UpdateStats {
        alpha: out.agent.alpha(),
        ..UpdateStats::default()
    };
    let mut ou = vec![0.0; act_dim];
    let mut obs = if total_steps > 0 {
        env.reset()
    } else {
        Vec::new()
    };
    let (mut ep_return, mut ep_len) = (0.0, 0usize);

    'outer: for step in 1..=total_steps {
        let action = if step <= cfg.warmup_steps {
            match cfg.warmup_action {
                WarmupAction::Uniform => (0..act_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
                WarmupAction::Correlated { theta, sigma } => {
                    for x in ou.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *x = (*x - theta * *x + sigma * z).clamp(-1.0, 1.0);
                    }
                    ou.clone()
                }
            }
        } else {
            out.agent.act(&obs, false, &mut rng)?
        };
        let r = env.step(&action);
        out.steps = step;
        ep_return += r.reward;
        ep_len += 1;
        let truncated = !r.done && ep_len >= horizon;
        if r.fault {
            out.faults += 1;
        } else {
            buffer.push(&Transition {
                obs: std::mem::take(&mut obs),
                action: action.clone(),
                reward: reward_shape(r.reward, &action, &reg_n),
                next_obs: r.obs.clone(),
                done: r.done,
                truncated,
            })?;
        }
        obs = r.obs;
        if r.done || truncated {
            out.log.push(LogRow {
                step,
                episode_return: ep_return,
                episode_length: ep_len,
                critic_loss: last.critic_loss,
                actor_loss: last.actor_loss,
                alpha: last.alpha,
                buffer_size: buffer.len(),
            });
            obs = env.reset();
            ou.iter_mut().for_each(|x| *x = 0.0);
            ep_return = 0.0;
            ep_len = 0;
        }

        if step > cfg.warmup_steps && step % cfg.train_freq == 0 && buffer.len() >= cfg.batch_size {
            for _ in 0..cfg.gradient_steps {
                let batch = buffer.sample(cfg.batch_size, &mut rng)?;
                match out.agent.update(&batch, &mut rng) {
                    Ok(s) => last = s,
                    Err(Error::Numeric(msg)) => {
                        out.aborted = Some(format!("step {step}: {msg}"));
                        break 'outer;
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        if cfg.eval_interval > 0 && step % cfg.eval_interval == 0 {
            if let Some(ev) = eval_env.as_deref_mut() {
                let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ step as u64);
                let (mut ret, mut len) = (0.0, 0.0);
                let horizon = ev.max_episode_steps();
                for _ in 0..cfg.eval_episodes.max(1) {
                    let ro = rollout(ev, &out.agent.policy, true, horizon, &mut eval_rng)?;
                    ret += ro.total_reward;
                    len += ro.length as f64;
                }
                let k = cfg.eval_episodes.max(1) as f64;
                out.evals.push(EvalRow {
                    step,
                    mean_return: ret / k,
                    mean_length: len / k,
                });
            }
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 {
                out.agent
                    .to_checkpoint()
                    .save(&dir.join(format!("checkpoint_{step}.bin")))?;
            }
        }
    }

    if let Some(dir) = out_dir {
        out.agent
            .to_checkpoint()
            .save(&dir.join("checkpoint_final.bin"))?;
        std::fs::write(dir.join("train_log.csv"), log_csv(&out.log))?;
        std::fs::write(dir.join("eval_log.csv"), eval_csv(&out.evals))?;
    }
    Ok(out)
}
