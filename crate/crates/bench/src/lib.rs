//! Fixtures shared by the criterion benches.

use std::sync::Arc;

use racesac_core::sac::ReplayBuffer;
use racesac_core::{Environment, RaceConfig, RaceEnv, Track, TrackKind, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn race_track() -> Arc<Track> {
    Arc::new(Track::generate(TrackKind::PaperLike, 1.0, 0.2, 0.02).expect("built-in layout"))
}

pub fn race_env(seed: u64) -> RaceEnv {
    RaceEnv::new(race_track(), RaceConfig::default(), seed).expect("default config")
}

/// Replay buffer filled with `n` uniformly random race transitions.
pub fn random_buffer(n: usize, seed: u64) -> ReplayBuffer {
    let mut env = race_env(seed);
    let mut r = rng(seed);
    let mut buf = ReplayBuffer::new(n, env.obs_dim(), env.action_dim()).expect("capacity");
    let mut obs = env.reset();
    let mut t = 0;
    while buf.len() < n {
        let action: Vec<f64> = (0..env.action_dim())
            .map(|_| r.gen_range(-1.0..1.0))
            .collect();
        let s = env.step(&action);
        t += 1;
        let truncated = t >= env.max_episode_steps();
        if s.fault {
            obs = env.reset();
            t = 0;
            continue;
        }
        buf.push(&Transition {
            obs: obs.clone(),
            action,
            reward: s.reward,
            next_obs: s.obs.clone(),
            done: s.done,
            truncated,
        })
        .expect("finite");
        if s.done || truncated {
            obs = env.reset();
            t = 0;
        } else {
            obs = s.obs;
        }
    }
    buf
}
