#![allow(dead_code)]

use ndarray::{Array1, Array2};
use racesac_core::nn::{standard_normal, GaussianPolicy, Mlp};
use racesac_core::sac::{AlphaMode, Batch};
use racesac_core::{RegularizerSpec, SacAgent, SacConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn flat(net: &Mlp) -> Vec<f64> {
    net.blocks().flatten().copied().collect()
}

/// Copy of `net` with flattened parameter `i` shifted by `d`.
pub fn shifted(net: &Mlp, i: usize, d: f64) -> Mlp {
    let mut out = net.clone();
    let mut k = 0;
    for block in out.blocks_mut() {
        if i < k + block.len() {
            block[i - k] += d;
            break;
        }
        k += block.len();
    }
    out
}

/// Largest relative error between `grads` and central differences of `loss`
/// around `net`.
pub fn check_net(net: &Mlp, grads: &Mlp, loss: impl Fn(&Mlp) -> f64) -> f64 {
    let g = flat(grads);
    assert_eq!(g.len(), net.num_params());
    (0..g.len())
        .map(|i| {
            let numeric = (loss(&shifted(net, i, H)) - loss(&shifted(net, i, -H))) / (2.0 * H);
            rel_err(g[i], numeric)
        })
        .fold(0.0, f64::max)
}

pub fn uniform(shape: (usize, usize), lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| r.gen_range(lo..hi))
}

/// MLP with a random upstream gradient: loss is `sum(U * f(X))`.
pub fn mlp_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let depth = r.gen_range(1..4);
    let mut sizes = vec![r.gen_range(1..6)];
    for _ in 0..depth {
        sizes.push(r.gen_range(2..8));
    }
    sizes.push(r.gen_range(1..4));
    let net = Mlp::new(&sizes, &mut r);
    let n = r.gen_range(1..6);
    let x = uniform((n, sizes[0]), -2.0, 2.0, &mut r);
    let u = uniform((n, *sizes.last().unwrap()), -1.0, 1.0, &mut r);
    let loss = |m: &Mlp| (&m.forward_batch(x.view()).unwrap() * &u).sum();
    let (_, cache) = net.forward_cached(x.view()).unwrap();
    let (grads, dx) = net.backward(&cache, u.view()).unwrap();
    let mut worst = check_net(&net, &grads, loss);
    for idx in 0..x.len() {
        let bump = |d: f64| {
            let mut xs = x.clone();
            *xs.iter_mut().nth(idx).unwrap() += d;
            (&net.forward_batch(xs.view()).unwrap() * &u).sum()
        };
        let numeric = (bump(H) - bump(-H)) / (2.0 * H);
        worst = worst.max(rel_err(*dx.iter().nth(idx).unwrap(), numeric));
    }
    worst
}

/// Policy with loss `sum(w * log_prob) + sum(c * actions) + sum(e * mean_actions)`.
pub fn log_prob_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (obs, act) = (r.gen_range(1..5), r.gen_range(1..3));
    let scale: Vec<f64> = (0..act).map(|_| r.gen_range(0.5..3.0)).collect();
    let policy = GaussianPolicy::new(obs, &[6, 5], scale.clone(), &mut r);
    let n = 4;
    let x = uniform((n, obs), -1.5, 1.5, &mut r);
    let z = standard_normal((n, act), &mut r);
    let w = Array1::from_shape_fn(n, |_| r.gen_range(-1.0..1.0));
    let c = uniform((n, act), -1.0, 1.0, &mut r);
    let e = uniform((n, act), -1.0, 1.0, &mut r);
    let loss = |m: &Mlp| {
        let p = GaussianPolicy::from_parts(m.clone(), scale.clone()).unwrap();
        let s = p.sample_with_noise(x.view(), z.view()).unwrap();
        (&s.log_probs * &w).sum() + (&s.actions * &c).sum() + (&s.mean_actions * &e).sum()
    };
    let s = policy.sample_with_noise(x.view(), z.view()).unwrap();
    let grads = policy
        .backward(&s, c.view(), w.view(), Some(e.view()))
        .unwrap();
    check_net(policy.net(), &grads, loss)
}

fn small_agent(seed: u64, reg: &RegularizerSpec) -> (SacAgent, Batch, ChaCha8Rng) {
    let mut r = rng(seed);
    let (obs, act) = (3, 2);
    let cfg = SacConfig {
        hidden: vec![7, 6],
        alpha: AlphaMode::Auto { initial: 0.3 },
        ..SacConfig::default()
    };
    let mut agent = SacAgent::new(obs, act, &cfg, reg, &mut r).unwrap();
    // distinct targets so the critic targets are not a function of the online nets
    agent.q1_target = Mlp::new(&[obs + act, 7, 6, 1], &mut r);
    agent.q2_target = Mlp::new(&[obs + act, 7, 6, 1], &mut r);
    let n = 5;
    let batch = Batch {
        obs: uniform((n, obs), -1.0, 1.0, &mut r),
        actions: uniform((n, act), -0.9, 0.9, &mut r),
        rewards: Array1::from_shape_fn(n, |_| r.gen_range(-1.0..1.0)),
        next_obs: uniform((n, obs), -1.0, 1.0, &mut r),
        dones: Array1::from_shape_fn(n, |i| if i == 2 { 1.0 } else { 0.0 }),
    };
    (agent, batch, r)
}

/// Both critic gradients of the twin squared-error loss.
pub fn critic_instance(seed: u64) -> f64 {
    let (agent, batch, mut r) = small_agent(seed, &RegularizerSpec::None);
    let nz = standard_normal((batch.len(), 2), &mut r);
    let eval = agent.critic_loss(&batch, nz.view()).unwrap();
    let e1 = check_net(&agent.q1, &eval.q1_grads, |m| {
        let mut a = agent.clone();
        a.q1 = m.clone();
        a.critic_loss(&batch, nz.view()).unwrap().loss
    });
    let e2 = check_net(&agent.q2, &eval.q2_grads, |m| {
        let mut a = agent.clone();
        a.q2 = m.clone();
        a.critic_loss(&batch, nz.view()).unwrap().loss
    });
    e1.max(e2)
}

/// Actor loss including the regularizer, plus the entropy temperature gradient.
pub fn actor_instance(seed: u64, reg: &RegularizerSpec) -> f64 {
    let (agent, batch, mut r) = small_agent(seed, reg);
    let z = standard_normal((batch.len(), 2), &mut r);
    let eval = agent.actor_loss(&batch, z.view()).unwrap();
    let err = check_net(agent.policy.net(), &eval.grads, |m| {
        let mut a = agent.clone();
        *a.policy.net_mut() = m.clone();
        a.actor_loss(&batch, z.view()).unwrap().loss
    });
    let temp_loss = |la: f64| {
        -eval
            .log_probs
            .iter()
            .map(|lp| la * (lp + agent.target_entropy()))
            .sum::<f64>()
            / eval.log_probs.len() as f64
    };
    let numeric = (temp_loss(agent.log_alpha + H) - temp_loss(agent.log_alpha - H)) / (2.0 * H);
    err.max(rel_err(agent.entropy_gradient(&eval.log_probs), numeric))
}

pub fn regularizers() -> Vec<RegularizerSpec> {
    vec![
        RegularizerSpec::None,
        RegularizerSpec::RewardAction(vec![0.005, 0.001]),
        RegularizerSpec::PolicyWeightL2(1e-2),
        RegularizerSpec::PolicyOutput(vec![50.0, 10.0]),
    ]
}

/// Every gradient instance: (label, max relative error).
pub fn all_gradient_instances() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for s in 0..20 {
        out.push((format!("mlp {s}"), mlp_instance(100 + s)));
    }
    for s in 0..5 {
        out.push((format!("log_prob {s}"), log_prob_instance(200 + s)));
        out.push((format!("critic {s}"), critic_instance(300 + s)));
    }
    for reg in regularizers() {
        for s in 0..3 {
            out.push((
                format!("actor {} {s}", reg.name()),
                actor_instance(400 + s, &reg),
            ));
        }
    }
    out
}
