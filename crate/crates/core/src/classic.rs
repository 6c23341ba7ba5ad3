//! Pendulum and continuous Mountain Car, following the standard public
//! definitions (`Pendulum-v0`, `MountainCarContinuous-v0`), plus the
//! regularizer sweep over them.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvStep, Environment};
use crate::error::{validation, Error, Result};
use crate::metrics::derivative_rms;
use crate::sac::{rollout, train, AlphaMode, RegularizerSpec, SacConfig, WarmupAction};

pub mod pendulum {
    pub const G: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const DT: f64 = 0.05;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const HORIZON: usize = 200;
}

pub mod mountain_car {
    pub const MIN_POSITION: f64 = -1.2;
    pub const MAX_POSITION: f64 = 0.6;
    pub const MAX_SPEED: f64 = 0.07;
    pub const GOAL_POSITION: f64 = 0.45;
    pub const POWER: f64 = 0.0015;
    pub const HORIZON: usize = 999;
}

/// Wraps an angle into `[-pi, pi)`.
fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

/// Pure transition: returns the next state and the reward `-cost`.
pub fn pendulum_step(s: PendulumState, torque: f64) -> (PendulumState, f64) {
    use pendulum::*;
    let u = torque.clamp(-MAX_TORQUE, MAX_TORQUE);
    let cost = angle_normalize(s.theta).powi(2) + 0.1 * s.theta_dot.powi(2) + 0.001 * u * u;
    let new_dot = s.theta_dot
        + (-3.0 * G / (2.0 * LENGTH) * (s.theta + PI).sin() + 3.0 / (MASS * LENGTH * LENGTH) * u)
            * DT;
    let new_theta = s.theta + new_dot * DT;
    (
        PendulumState {
            theta: new_theta,
            theta_dot: new_dot.clamp(-MAX_SPEED, MAX_SPEED),
        },
        -cost,
    )
}

#[derive(Clone, Debug)]
pub struct PendulumEnv {
    pub state: PendulumState,
    rng: ChaCha8Rng,
}

impl PendulumEnv {
    pub fn new(seed: u64) -> Self {
        PendulumEnv {
            state: PendulumState {
                theta: 0.0,
                theta_dot: 0.0,
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![
            self.state.theta.cos(),
            self.state.theta.sin(),
            self.state.theta_dot,
        ]
    }
}

impl Environment for PendulumEnv {
    fn obs_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn dt(&self) -> f64 {
        pendulum::DT
    }

    fn max_episode_steps(&self) -> usize {
        pendulum::HORIZON
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = PendulumState {
            theta: self.rng.gen_range(-PI..=PI),
            theta_dot: self.rng.gen_range(-1.0..=1.0),
        };
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        let (next, reward) = pendulum_step(self.state, action[0] * pendulum::MAX_TORQUE);
        self.state = next;
        EnvStep {
            obs: self.obs(),
            reward,
            done: false,
            fault: false,
        }
    }

    fn physical_action(&self, action: &[f64]) -> Vec<f64> {
        vec![action[0].clamp(-1.0, 1.0) * pendulum::MAX_TORQUE]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

/// Pure transition: next state, reward and the goal flag.
pub fn mountain_car_step(s: MountainCarState, action: f64) -> (MountainCarState, f64, bool) {
    use mountain_car::*;
    let force = action.clamp(-1.0, 1.0);
    let mut velocity = s.velocity + force * POWER - 0.0025 * (3.0 * s.position).cos();
    velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
    let position = (s.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
    if position == MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    let done = position >= GOAL_POSITION && velocity >= 0.0;
    let mut reward = if done { 100.0 } else { 0.0 };
    reward -= 0.1 * force * force;
    (MountainCarState { position, velocity }, reward, done)
}

#[derive(Clone, Debug)]
pub struct MountainCarEnv {
    pub state: MountainCarState,
    rng: ChaCha8Rng,
}

impl MountainCarEnv {
    pub fn new(seed: u64) -> Self {
        MountainCarEnv {
            state: MountainCarState {
                position: -0.5,
                velocity: 0.0,
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.state.position, self.state.velocity]
    }
}

impl Environment for MountainCarEnv {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    /// The task has no physical time step; one step counts as one unit.
    fn dt(&self) -> f64 {
        1.0
    }

    fn max_episode_steps(&self) -> usize {
        mountain_car::HORIZON
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = MountainCarState {
            position: self.rng.gen_range(-0.6..-0.4),
            velocity: 0.0,
        };
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        let (next, reward, done) = mountain_car_step(self.state, action[0]);
        self.state = next;
        EnvStep {
            obs: self.obs(),
            reward,
            done,
            fault: false,
        }
    }

    fn physical_action(&self, action: &[f64]) -> Vec<f64> {
        vec![action[0].clamp(-1.0, 1.0)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchKind {
    Pendulum,
    MountainCar,
}

impl std::str::FromStr for BenchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(BenchKind::Pendulum),
            "mountaincar" | "mountain_car" => Ok(BenchKind::MountainCar),
            other => Err(validation(format!(
                "unknown benchmark `{other}` (expected pendulum or mountaincar)"
            ))),
        }
    }
}

impl std::fmt::Display for BenchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchKind::Pendulum => "pendulum",
            BenchKind::MountainCar => "mountaincar",
        })
    }
}

impl BenchKind {
    pub fn make(self, seed: u64) -> Box<dyn Environment> {
        match self {
            BenchKind::Pendulum => Box::new(PendulumEnv::new(seed)),
            BenchKind::MountainCar => Box::new(MountainCarEnv::new(seed)),
        }
    }

    /// Per-task training settings (smaller than the racing defaults).
    pub fn default_sac(self) -> SacConfig {
        match self {
            BenchKind::Pendulum => SacConfig {
                lr: 1e-3,
                batch_size: 256,
                buffer_capacity: 100_000,
                warmup_steps: 1_000,
                hidden: vec![64, 64],
                ..SacConfig::default()
            },
            BenchKind::MountainCar => SacConfig {
                lr: 3e-4,
                batch_size: 512,
                buffer_capacity: 50_000,
                gamma: 0.9999,
                tau: 0.01,
                alpha: AlphaMode::Fixed(0.1),
                train_freq: 32,
                gradient_steps: 32,
                warmup_steps: 10_000,
                warmup_action: WarmupAction::Correlated {
                    theta: 0.05,
                    sigma: 0.3,
                },
                hidden: vec![64, 64],
                ..SacConfig::default()
            },
        }
    }

    /// Mean evaluation return below which a cell counts as not learned.
    pub fn fail_threshold(self) -> f64 {
        match self {
            BenchKind::Pendulum => -400.0,
            BenchKind::MountainCar => 0.0,
        }
    }

    /// Regularizer values of the published grid.
    pub fn grid() -> Vec<RegularizerSpec> {
        let mut g = vec![RegularizerSpec::None];
        g.extend([1.0, 5.0, 10.0, 50.0].map(|v| RegularizerSpec::PolicyOutput(vec![v])));
        g.extend([0.1, 0.2, 1.0, 2.0].map(|v| RegularizerSpec::RewardAction(vec![v])));
        g.extend([1e-7, 1e-5, 1e-4, 1e-3].map(RegularizerSpec::PolicyWeightL2));
        g
    }
}

/// Evaluation of one trained policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellSeed {
    pub seed: u64,
    pub avg_reward: f64,
    pub avg_adot_rms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub env: BenchKind,
    pub reg: RegularizerSpec,
    pub seeds: Vec<CellSeed>,
    pub avg_reward: f64,
    pub avg_adot_rms: f64,
    pub learned: bool,
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub env: BenchKind,
    pub cells: Vec<RegularizerSpec>,
    pub steps: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub sac: SacConfig,
    pub fail_threshold: f64,
}

impl SweepSpec {
    pub fn new(env: BenchKind, cells: Vec<RegularizerSpec>, seeds: Vec<u64>) -> Self {
        SweepSpec {
            env,
            cells,
            steps: 60_000,
            eval_episodes: 100,
            seeds,
            sac: env.default_sac(),
            fail_threshold: env.fail_threshold(),
        }
    }
}

/// Trains one policy and evaluates it with the mean action.
pub fn train_and_evaluate(
    env: BenchKind,
    sac: &SacConfig,
    reg: &RegularizerSpec,
    steps: usize,
    eval_episodes: usize,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<CellSeed> {
    let mut train_env = env.make(seed);
    let outcome = train(train_env.as_mut(), None, sac, reg, steps, seed, out_dir)?;
    if let Some(msg) = outcome.aborted {
        return Err(Error::Numeric(msg));
    }
    let mut eval_env = env.make(seed.wrapping_add(1_000_003));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = eval_env.dt();
    let horizon = eval_env.max_episode_steps();
    let (mut ret, mut adot) = (0.0, 0.0);
    for _ in 0..eval_episodes {
        let ro = rollout(
            eval_env.as_mut(),
            &outcome.agent.policy,
            true,
            horizon,
            &mut rng,
        )?;
        ret += ro.total_reward;
        let a: Vec<f64> = ro.actions.iter().map(|a| a[0]).collect();
        adot += derivative_rms(&a, dt);
    }
    let k = eval_episodes.max(1) as f64;
    Ok(CellSeed {
        seed,
        avg_reward: ret / k,
        avg_adot_rms: adot / k,
    })
}

/// Trains and evaluates every (regularizer, seed) cell.
pub fn run_sweep(spec: &SweepSpec, out_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for reg in &spec.cells {
        let mut seeds = Vec::new();
        for &seed in &spec.seeds {
            let cell_dir = out_dir.map(|d| {
                d.join(format!(
                    "{}_{}_{}_seed{seed}",
                    spec.env,
                    reg.name(),
                    reg.value_string()
                ))
            });
            let r = train_and_evaluate(
                spec.env,
                &spec.sac,
                reg,
                spec.steps,
                spec.eval_episodes,
                seed,
                cell_dir.as_deref(),
            );
            match r {
                Ok(c) => seeds.push(c),
                Err(Error::Numeric(_)) => seeds.push(CellSeed {
                    seed,
                    avg_reward: f64::NAN,
                    avg_adot_rms: f64::NAN,
                }),
                Err(e) => return Err(e),
            }
        }
        let k = seeds.len().max(1) as f64;
        let avg_reward = seeds.iter().map(|c| c.avg_reward).sum::<f64>() / k;
        let avg_adot_rms = seeds.iter().map(|c| c.avg_adot_rms).sum::<f64>() / k;
        rows.push(SweepRow {
            env: spec.env,
            reg: reg.clone(),
            learned: avg_reward.is_finite() && avg_reward >= spec.fail_threshold,
            seeds,
            avg_reward,
            avg_adot_rms,
        });
    }
    Ok(rows)
}

/// One line per cell; averages are `-` for cells that did not learn.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let n_seeds = rows.iter().map(|r| r.seeds.len()).max().unwrap_or(0);
    let mut out = String::from("env,reg,value,avg_reward,avg_adot_rms");
    for i in 0..n_seeds {
        let _ = write!(out, ",seed{i},reward_seed{i},adot_seed{i}");
    }
    out.push('\n');
    for r in rows {
        let (rew, adot) = if r.learned {
            (r.avg_reward.to_string(), r.avg_adot_rms.to_string())
        } else {
            ("-".to_string(), "-".to_string())
        };
        let _ = write!(
            out,
            "{},{},{},{rew},{adot}",
            r.env,
            r.reg.name(),
            r.reg.value_string()
        );
        for c in &r.seeds {
            let _ = write!(out, ",{},{},{}", c.seed, c.avg_reward, c.avg_adot_rms);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_pendulum_is_a_fixed_point() {
        let (s, r) = pendulum_step(
            PendulumState {
                theta: 0.0,
                theta_dot: 0.0,
            },
            0.0,
        );
        assert_eq!(r, 0.0);
        assert!(s.theta.abs() < 1e-15 && s.theta_dot.abs() < 1e-14);
    }

    #[test]
    fn pendulum_speed_is_clipped() {
        let (s, r) = pendulum_step(
            PendulumState {
                theta: PI / 2.0,
                theta_dot: 7.99,
            },
            5.0,
        );
        assert_eq!(s.theta_dot, 8.0);
        assert!(r < 0.0);
        assert!((r + ((PI / 2.0).powi(2) + 0.1 * 7.99f64.powi(2) + 0.001 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn mountain_car_goal_and_left_wall() {
        let (s, r, done) = mountain_car_step(
            MountainCarState {
                position: 0.44,
                velocity: 0.05,
            },
            0.5,
        );
        assert!(done && s.position >= 0.45);
        assert!((r - (100.0 - 0.025)).abs() < 1e-12);
        let (s, _, done) = mountain_car_step(
            MountainCarState {
                position: -1.19,
                velocity: -0.07,
            },
            -1.0,
        );
        assert!(!done);
        assert_eq!(s.position, -1.2);
        assert_eq!(s.velocity, 0.0);
    }

    #[test]
    fn grid_has_thirteen_cells() {
        assert_eq!(BenchKind::grid().len(), 13);
    }

    #[test]
    fn csv_marks_failed_cells() {
        let rows = vec![SweepRow {
            env: BenchKind::MountainCar,
            reg: RegularizerSpec::RewardAction(vec![0.2]),
            seeds: vec![CellSeed {
                seed: 0,
                avg_reward: -3.0,
                avg_adot_rms: 0.5,
            }],
            avg_reward: -3.0,
            avg_adot_rms: 0.5,
            learned: false,
        }];
        let csv = sweep_csv(&rows);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("mountaincar,reward,0.2,-,-,0,-3,0.5"));
    }
}
