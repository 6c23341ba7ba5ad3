use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{validation, Error, Result};
use crate::nn::{standard_normal, AdamState, Checkpoint, GaussianPolicy, Mlp, ScalarAdam};
use crate::sac::{AlphaMode, Batch, RegularizerSpec, SacConfig};

/// Critic loss `0.5 * (mse(Q1, y) + mse(Q2, y))` and its gradients.
#[derive(Clone, Debug)]
pub struct CriticEval {
    pub loss: f64,
    pub targets: Array1<f64>,
    pub q1_grads: Mlp,
    pub q2_grads: Mlp,
}

/// Actor loss (including the regularizer penalty) and its gradient.
#[derive(Clone, Debug)]
pub struct ActorEval {
    pub loss: f64,
    /// Regularizer contribution contained in `loss`.
    pub penalty: f64,
    pub grads: Mlp,
    pub log_probs: Array1<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct SacAgent {
    pub policy: GaussianPolicy,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    policy_opt: AdamState,
    q1_opt: AdamState,
    q2_opt: AdamState,
    alpha_opt: ScalarAdam,
    cfg: SacConfig,
    /// Regularizer expressed for normalized actions.
    reg: RegularizerSpec,
    target_entropy: f64,
    updates: u64,
}

fn q_input<'a>(obs: ArrayView2<'a, f64>, actions: ArrayView2<'a, f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs, actions]).expect("same row count")
}

fn check_finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what} is not finite")))
    }
}

impl SacAgent {
    /// Fresh networks; `reg` must already be in normalized action units.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        cfg: &SacConfig,
        reg: &RegularizerSpec,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let policy = GaussianPolicy::new(obs_dim, &cfg.hidden, vec![1.0; action_dim], rng);
        let mut sizes = vec![obs_dim + action_dim];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(1);
        let q1 = Mlp::new(&sizes, rng);
        let q2 = Mlp::new(&sizes, rng);
        Self::assemble(policy, q1.clone(), q2.clone(), q1, q2, None, cfg, reg)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        policy: GaussianPolicy,
        q1: Mlp,
        q2: Mlp,
        q1_target: Mlp,
        q2_target: Mlp,
        log_alpha: Option<f64>,
        cfg: &SacConfig,
        reg: &RegularizerSpec,
    ) -> Result<Self> {
        reg.validate()?;
        let a = policy.action_dim();
        if let RegularizerSpec::RewardAction(m) | RegularizerSpec::PolicyOutput(m) = reg {
            if m.len() != a {
                return Err(validation(format!(
                    "regularizer has {} diagonal entries for a {a}-d action",
                    m.len()
                )));
            }
        }
        let expected_q_in = policy.obs_dim() + a;
        for q in [&q1, &q2, &q1_target, &q2_target] {
            if q.input_dim() != expected_q_in || q.output_dim() != 1 {
                return Err(validation("critic shape does not match the policy"));
            }
        }
        let log_alpha = match cfg.alpha {
            AlphaMode::Fixed(v) => v.ln(),
            AlphaMode::Auto { initial } => log_alpha.unwrap_or(initial.ln()),
        };
        Ok(SacAgent {
            policy_opt: AdamState::new(policy.net()),
            q1_opt: AdamState::new(&q1),
            q2_opt: AdamState::new(&q2),
            alpha_opt: ScalarAdam::default(),
            target_entropy: cfg.target_entropy.unwrap_or(-(a as f64)),
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
            cfg: cfg.clone(),
            reg: reg.clone(),
            updates: 0,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn regularizer(&self) -> &RegularizerSpec {
        &self.reg
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    /// Gradient updates performed so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.action_dim()
    }

    /// Normalized action; the mean action when `deterministic`.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        deterministic: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if deterministic {
            self.policy.mean_action(obs)
        } else {
            Ok(self.policy.sample_action(obs, rng)?.0)
        }
    }

    /// Critic loss with targets `y = r + gamma (1 - done)(min Q'(s', a') - alpha log pi(a'|s'))`,
    /// `a'` drawn with the given standard-normal noise.
    pub fn critic_loss(&self, batch: &Batch, next_noise: ArrayView2<f64>) -> Result<CriticEval> {
        let n = batch.len();
        let alpha = self.alpha();
        let next = self
            .policy
            .sample_with_noise(batch.next_obs.view(), next_noise)?;
        let tin = q_input(batch.next_obs.view(), next.actions.view());
        let t1 = self.q1_target.forward_batch(tin.view())?;
        let t2 = self.q2_target.forward_batch(tin.view())?;
        let mut targets = Array1::zeros(n);
        for i in 0..n {
            let soft = t1[[i, 0]].min(t2[[i, 0]]) - alpha * next.log_probs[i];
            targets[i] = batch.rewards[i] + self.cfg.gamma * (1.0 - batch.dones[i]) * soft;
        }
        let qin = q_input(batch.obs.view(), batch.actions.view());
        let (q1, c1) = self.q1.forward_cached(qin.view())?;
        let (q2, c2) = self.q2.forward_cached(qin.view())?;
        let mut d1 = Array2::zeros((n, 1));
        let mut d2 = Array2::zeros((n, 1));
        let (mut l1, mut l2) = (0.0, 0.0);
        for i in 0..n {
            let e1 = q1[[i, 0]] - targets[i];
            let e2 = q2[[i, 0]] - targets[i];
            l1 += e1 * e1;
            l2 += e2 * e2;
            d1[[i, 0]] = e1 / n as f64;
            d2[[i, 0]] = e2 / n as f64;
        }
        let loss = check_finite("critic loss", 0.5 * (l1 + l2) / n as f64)?;
        let (q1_grads, _) = self.q1.backward(&c1, d1.view())?;
        let (q2_grads, _) = self.q2.backward(&c2, d2.view())?;
        Ok(CriticEval {
            loss,
            targets,
            q1_grads,
            q2_grads,
        })
    }

    /// Actor loss `mean(alpha log pi(a|s) - min Q(s, a))` plus the regularizer.
    pub fn actor_loss(&self, batch: &Batch, noise: ArrayView2<f64>) -> Result<ActorEval> {
        let n = batch.len();
        let a = self.action_dim();
        let od = self.obs_dim();
        let alpha = self.alpha();
        let sample = self.policy.sample_with_noise(batch.obs.view(), noise)?;
        let qin = q_input(batch.obs.view(), sample.actions.view());
        let (q1, c1) = self.q1.forward_cached(qin.view())?;
        let (q2, c2) = self.q2.forward_cached(qin.view())?;
        let inv = 1.0 / n as f64;
        let mut u1 = Array2::zeros((n, 1));
        let mut u2 = Array2::zeros((n, 1));
        let mut base = 0.0;
        for i in 0..n {
            let (v1, v2) = (q1[[i, 0]], q2[[i, 0]]);
            base += alpha * sample.log_probs[i] - v1.min(v2);
            if v1 <= v2 {
                u1[[i, 0]] = -inv;
            } else {
                u2[[i, 0]] = -inv;
            }
        }
        base *= inv;
        let g1 = self.q1.backward_input(&c1, u1.view())?;
        let g2 = self.q2.backward_input(&c2, u2.view())?;
        let d_actions = &g1.slice(s![.., od..od + a]) + &g2.slice(s![.., od..od + a]);
        let d_log_probs = Array1::from_elem(n, alpha * inv);

        let mut penalty = 0.0;
        let mut d_mean = None;
        if let RegularizerSpec::PolicyOutput(m) = &self.reg {
            let mut dm = Array2::zeros((n, a));
            for i in 0..n {
                for j in 0..a {
                    let v = sample.mean_actions[[i, j]];
                    penalty += m[j] * v * v;
                    dm[[i, j]] = 2.0 * m[j] * v * inv;
                }
            }
            penalty *= inv;
            d_mean = Some(dm);
        }
        let mut grads = self.policy.backward(
            &sample,
            d_actions.view(),
            d_log_probs.view(),
            d_mean.as_ref().map(|d| d.view()),
        )?;
        if let RegularizerSpec::PolicyWeightL2(lambda) = &self.reg {
            penalty += lambda * self.policy.net().squared_norm();
            grads.add_scaled(self.policy.net(), 2.0 * lambda);
        }
        let loss = check_finite("actor loss", base + penalty)?;
        Ok(ActorEval {
            loss,
            penalty,
            grads,
            log_probs: sample.log_probs,
        })
    }

    /// d/d(log alpha) of `mean(-log alpha (log pi + target))`.
    pub fn entropy_gradient(&self, log_probs: &Array1<f64>) -> f64 {
        -log_probs
            .iter()
            .map(|lp| lp + self.target_entropy)
            .sum::<f64>()
            / log_probs.len() as f64
    }

    /// One gradient step on `log alpha` (auto mode only).
    pub fn entropy_tune(&mut self, log_probs: &Array1<f64>) -> Result<()> {
        if let AlphaMode::Auto { .. } = self.cfg.alpha {
            let g = self.entropy_gradient(log_probs);
            self.alpha_opt.step(&mut self.log_alpha, g, self.cfg.lr)?;
        }
        Ok(())
    }

    /// Critic step, actor step (against the updated critics), entropy step,
    /// then Polyak averaging of the targets.
    pub fn update_with_noise(
        &mut self,
        batch: &Batch,
        next_noise: ArrayView2<f64>,
        noise: ArrayView2<f64>,
    ) -> Result<UpdateStats> {
        let lr = self.cfg.lr;
        let critic = self.critic_loss(batch, next_noise)?;
        if !(critic.q1_grads.all_finite() && critic.q2_grads.all_finite()) {
            return Err(Error::Numeric("non-finite critic gradient".into()));
        }
        self.q1_opt.step(&mut self.q1, &critic.q1_grads, lr)?;
        self.q2_opt.step(&mut self.q2, &critic.q2_grads, lr)?;
        let actor = self.actor_loss(batch, noise)?;
        self.policy_opt
            .step(self.policy.net_mut(), &actor.grads, lr)?;
        self.entropy_tune(&actor.log_probs)?;
        soft_update(&mut self.q1_target, &self.q1, self.cfg.tau);
        soft_update(&mut self.q2_target, &self.q2, self.cfg.tau);
        if !(self.policy.net().all_finite() && self.q1.all_finite() && self.q2.all_finite()) {
            return Err(Error::Numeric("parameters became non-finite".into()));
        }
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss: critic.loss,
            actor_loss: actor.loss,
            alpha: self.alpha(),
        })
    }

    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateStats> {
        let shape = (batch.len(), self.action_dim());
        let next_noise = standard_normal(shape, rng);
        let noise = standard_normal(shape, rng);
        self.update_with_noise(batch, next_noise.view(), noise.view())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut scalars = vec![("log_alpha".to_string(), self.log_alpha)];
        for (i, s) in self.policy.action_scale().iter().enumerate() {
            scalars.push((format!("action_scale.{i}"), *s));
        }
        Checkpoint {
            nets: vec![
                ("policy".into(), self.policy.net().clone()),
                ("q1".into(), self.q1.clone()),
                ("q2".into(), self.q2.clone()),
                ("q1_target".into(), self.q1_target.clone()),
                ("q2_target".into(), self.q2_target.clone()),
            ],
            scalars,
        }
    }

    /// Restores networks and `log alpha`; optimizer moments start fresh.
    pub fn from_checkpoint(
        ck: &Checkpoint,
        cfg: &SacConfig,
        reg: &RegularizerSpec,
    ) -> Result<Self> {
        let policy = policy_from_checkpoint(ck)?;
        let net = |name: &str| {
            ck.net(name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint has no `{name}` network")))
        };
        let mut agent = Self::assemble(
            policy,
            net("q1")?,
            net("q2")?,
            net("q1_target")?,
            net("q2_target")?,
            ck.scalar("log_alpha"),
            cfg,
            reg,
        )?;
        agent.cfg.hidden =
            agent.policy.net().sizes()[1..agent.policy.net().sizes().len() - 1].to_vec();
        Ok(agent)
    }
}

/// The policy stored in a checkpoint.
pub fn policy_from_checkpoint(ck: &Checkpoint) -> Result<GaussianPolicy> {
    let net = ck
        .net("policy")
        .cloned()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no `policy` network".into()))?;
    let a = net.output_dim() / 2;
    let scale = (0..a)
        .map(|i| ck.scalar(&format!("action_scale.{i}")).unwrap_or(1.0))
        .collect();
    GaussianPolicy::from_parts(net, scale)
}

/// `target <- (1 - tau) target + tau source`.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) {
    for (t, s) in target.blocks_mut().zip(source.blocks()) {
        for (a, b) in t.iter_mut().zip(s) {
            *a = (1.0 - tau) * *a + tau * b;
        }
    }
}
