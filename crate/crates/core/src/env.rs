//! The racing MDP on top of the track and vehicle models.
//!
//! State `s = [p, n, mu, vx, vy, omega, d, delta]`, action
//! `a = [d_rate, delta_rate]`. The physical inputs are integrated from the
//! rates and clipped, so the policy can only change them at a bounded rate.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::{validation, Result};
use crate::sac::{SacConfig, Transition};
use crate::track::{wrap_angle, FrenetPose, Track, TrackKind, DEFAULT_MAX_SPACING};
use crate::vehicle::{
    ellipse_violation, integrate_step_with_forces, BodyState, NoiseSpec, Perturbation,
    PhysicalInputs, VehicleParams, DEFAULT_DT, DUTY_MAX, DUTY_MIN, STEER_MAX,
};

/// Duty-rate bound [1/s].
pub const D_RATE_MAX: f64 = 17.5;
/// Steering-rate bound [rad/s].
pub const DELTA_RATE_MAX: f64 = 3.5;
/// Per-step cap on episode length used during training.
pub const DEFAULT_MAX_STEPS: usize = 600;
/// Integration substeps per control step (1 ms Euler steps at 100 Hz).
pub const DEFAULT_SUBSTEPS: usize = 10;

/// Interface shared by the racing MDP and the classic-control benchmarks.
/// Actions are normalized to `[-1, 1]` per dimension.
pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Control period [s].
    fn dt(&self) -> f64;
    /// Time-limit used by the trainer (truncation, not termination).
    fn max_episode_steps(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> EnvStep;
    /// Maps a normalized action to the env's own units.
    fn physical_action(&self, action: &[f64]) -> Vec<f64>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// The simulator produced non-finite values; the episode is over.
    pub fault: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MdpState {
    pub p: f64,
    pub n: f64,
    pub mu: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    pub d: f64,
    pub delta: f64,
}

impl MdpState {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.p, self.n, self.mu, self.vx, self.vy, self.omega, self.d, self.delta,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        MdpState {
            p: a[0],
            n: a[1],
            mu: a[2],
            vx: a[3],
            vy: a[4],
            omega: a[5],
            d: a[6],
            delta: a[7],
        }
    }

    pub fn inputs(&self) -> PhysicalInputs {
        PhysicalInputs {
            d: self.d,
            delta: self.delta,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Cartesian body state for this curvilinear state.
    pub fn to_body(&self, track: &Track) -> Result<BodyState> {
        let (x, y, psi) = track.frenet_to_cartesian(&FrenetPose {
            p: self.p,
            n: self.n,
            mu: self.mu,
        })?;
        Ok(BodyState {
            x,
            y,
            psi,
            vx: self.vx,
            vy: self.vy,
            omega: self.omega,
        })
    }
}

/// Input rates `[d_rate, delta_rate]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Action {
    pub d_rate: f64,
    pub delta_rate: f64,
}

impl Action {
    pub fn clipped(self) -> Self {
        Action {
            d_rate: self.d_rate.clamp(-D_RATE_MAX, D_RATE_MAX),
            delta_rate: self.delta_rate.clamp(-DELTA_RATE_MAX, DELTA_RATE_MAX),
        }
    }

    pub fn from_normalized(a: &[f64]) -> Self {
        Action {
            d_rate: a[0] * D_RATE_MAX,
            delta_rate: a[1] * DELTA_RATE_MAX,
        }
    }

    pub fn to_normalized(self) -> [f64; 2] {
        [self.d_rate / D_RATE_MAX, self.delta_rate / DELTA_RATE_MAX]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardConfig {
    /// Penalty for constraint-violating steps.
    pub c: f64,
    /// Distance [m] subtracted from the half width for the soft constraint.
    pub safety_margin: f64,
    pub dt: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            c: 0.01,
            safety_margin: 0.02,
            dt: DEFAULT_DT,
        }
    }
}

/// Ranges of the randomized initial state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResetSpec {
    /// Fraction of `w/2 - margin` used as the lateral range.
    pub n_fraction: f64,
    pub mu_max: f64,
    pub vx_min: f64,
    pub vx_max: f64,
}

impl Default for ResetSpec {
    fn default() -> Self {
        ResetSpec {
            n_fraction: 0.75,
            mu_max: 0.3,
            vx_min: 0.5,
            vx_max: 2.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct StepInfo {
    pub track_violation: bool,
    pub ellipse_violation: bool,
    pub terminated_off_track: bool,
    pub lap_completed: bool,
    pub fault: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: MdpState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Fixed observation scaling. `p / L, n / n_scale, mu / pi, vx / v_scale,
/// vy / v_scale, omega / omega_scale, d, delta / STEER_MAX`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObsScaling {
    pub length: f64,
    pub n_scale: f64,
    pub v_scale: f64,
    pub omega_scale: f64,
}

impl ObsScaling {
    pub fn for_track(track: &Track) -> Self {
        ObsScaling {
            length: track.length(),
            n_scale: track.max_half_width(),
            v_scale: 5.0,
            omega_scale: 10.0,
        }
    }

    fn factors(&self) -> [f64; 8] {
        [
            self.length,
            self.n_scale,
            PI,
            self.v_scale,
            self.v_scale,
            self.omega_scale,
            1.0,
            STEER_MAX,
        ]
    }

    pub fn observe(&self, s: &MdpState) -> Vec<f64> {
        s.to_array()
            .iter()
            .zip(self.factors())
            .map(|(v, f)| v / f)
            .collect()
    }

    pub fn unobserve(&self, obs: &[f64]) -> MdpState {
        let f = self.factors();
        let mut a = [0.0; 8];
        for i in 0..8 {
            a[i] = obs[i] * f[i];
        }
        MdpState::from_array(a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RaceConfig {
    pub params: VehicleParams,
    pub noise: NoiseSpec,
    /// Model randomization on/off.
    pub randomize: bool,
    /// Draw one perturbation per episode instead of one per step.
    pub noise_per_episode: bool,
    pub reward: RewardConfig,
    pub reset: ResetSpec,
    pub max_steps: usize,
    /// Euler substeps per control period. Single 10 ms steps are unstable
    /// for this car below about 1.5 m/s.
    pub substeps: usize,
}

impl Default for RaceConfig {
    fn default() -> Self {
        RaceConfig {
            params: VehicleParams::default(),
            noise: NoiseSpec::default(),
            randomize: true,
            noise_per_episode: false,
            reward: RewardConfig::default(),
            reset: ResetSpec::default(),
            max_steps: DEFAULT_MAX_STEPS,
            substeps: DEFAULT_SUBSTEPS,
        }
    }
}

impl RaceConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.noise.validate()?;
        let r = &self.reward;
        if !(r.c > 0.0) || !(r.safety_margin >= 0.0) || !(r.dt > 0.0) {
            return Err(validation("reward needs c > 0, safety_margin >= 0, dt > 0"));
        }
        let z = &self.reset;
        if !(0.0..=1.0).contains(&z.n_fraction)
            || !(z.mu_max >= 0.0)
            || !(z.vx_min >= 0.0 && z.vx_min <= z.vx_max)
        {
            return Err(validation("reset ranges out of bounds"));
        }
        if self.max_steps == 0 {
            return Err(validation("env.max_steps must be positive"));
        }
        if self.substeps == 0 {
            return Err(validation("env.substeps must be positive"));
        }
        Ok(())
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = RaceConfig::default();
        let out = RaceConfig {
            params: VehicleParams::from_config(cfg)?,
            noise: NoiseSpec::from_config(cfg)?,
            randomize: cfg.get_or("env.randomize", d.randomize)?,
            noise_per_episode: cfg.get_or("env.noise_per_episode", d.noise_per_episode)?,
            reward: RewardConfig {
                c: cfg.get_or("env.c", d.reward.c)?,
                safety_margin: cfg.get_or("env.safety_margin", d.reward.safety_margin)?,
                dt: cfg.get_or("env.dt", d.reward.dt)?,
            },
            reset: ResetSpec {
                n_fraction: cfg.get_or("reset.n_fraction", d.reset.n_fraction)?,
                mu_max: cfg.get_or("reset.mu_max", d.reset.mu_max)?,
                vx_min: cfg.get_or("reset.vx_min", d.reset.vx_min)?,
                vx_max: cfg.get_or("reset.vx_max", d.reset.vx_max)?,
            },
            max_steps: cfg.get_or("env.max_steps", d.max_steps)?,
            substeps: cfg.get_or("env.substeps", d.substeps)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn write_config(&self, cfg: &mut Config) {
        self.params.write_config(cfg);
        cfg.set("noise.vx", self.noise.vx.to_string());
        cfg.set("noise.vy", self.noise.vy.to_string());
        cfg.set("noise.omega", self.noise.omega.to_string());
        cfg.set("env.randomize", self.randomize.to_string());
        cfg.set("env.noise_per_episode", self.noise_per_episode.to_string());
        cfg.set("env.c", self.reward.c.to_string());
        cfg.set("env.safety_margin", self.reward.safety_margin.to_string());
        cfg.set("env.dt", self.reward.dt.to_string());
        cfg.set("reset.n_fraction", self.reset.n_fraction.to_string());
        cfg.set("reset.mu_max", self.reset.mu_max.to_string());
        cfg.set("reset.vx_min", self.reset.vx_min.to_string());
        cfg.set("reset.vx_max", self.reset.vx_max.to_string());
        cfg.set("env.max_steps", self.max_steps.to_string());
        cfg.set("env.substeps", self.substeps.to_string());
    }
}

/// Track selection: `track.file` if present, else a generated layout from
/// `track.kind`, `track.scale`, `track.half_width`.
pub fn track_from_config(cfg: &Config) -> Result<Track> {
    if let Some(path) = cfg.raw("track.file") {
        return Track::load(std::path::Path::new(path));
    }
    let kind: TrackKind = cfg.get_or("track.kind", TrackKind::PaperLike)?;
    let scale = cfg.get_or("track.scale", 1.0)?;
    let hw = cfg.get_or("track.half_width", 0.2)?;
    let ds = cfg.get_or("track.ds", DEFAULT_MAX_SPACING)?;
    Track::generate(kind, scale, hw, ds)
}

pub fn write_track_config(cfg: &mut Config) {
    cfg.set_default("track.kind", "paper_like");
    cfg.set_default("track.scale", "1");
    cfg.set_default("track.half_width", "0.2");
    cfg.set_default("track.ds", DEFAULT_MAX_SPACING.to_string());
}

/// Soft constraint: `|n| > w/2 - margin`.
pub fn track_violation(track: &Track, s: &MdpState, reward: &RewardConfig) -> bool {
    s.n.abs() > track.half_width_at(s.p) - reward.safety_margin
}

/// One MDP transition. Pure given the perturbation `eps`.
pub fn step(
    track: &Track,
    state: &MdpState,
    action: Action,
    cfg: &RaceConfig,
    eps: &Perturbation,
) -> StepResult {
    let a = action.clipped();
    let dt = cfg.reward.dt;
    let d = (state.d + a.d_rate * dt).clamp(DUTY_MIN, DUTY_MAX);
    let delta = (state.delta + a.delta_rate * dt).clamp(-STEER_MAX, STEER_MAX);
    let inputs = PhysicalInputs { d, delta };

    let fault = |s: MdpState| StepResult {
        next_state: s,
        reward: -cfg.reward.c,
        done: true,
        info: StepInfo {
            fault: true,
            ..StepInfo::default()
        },
    };

    let body = match state.to_body(track) {
        Ok(b) => b,
        Err(_) => return fault(*state),
    };
    // one perturbation per control step, held over the substeps
    let h = dt / cfg.substeps as f64;
    let mut next_body = body;
    let mut ellipse = false;
    for _ in 0..cfg.substeps {
        match integrate_step_with_forces(&next_body, &inputs, &cfg.params, h, eps) {
            Ok((b, f)) => {
                ellipse |= ellipse_violation(&f, &cfg.params);
                next_body = b;
            }
            Err(_) => return fault(*state),
        }
    }
    let proj = track.cartesian_to_frenet(next_body.x, next_body.y, next_body.psi, Some(state.p));
    let next = MdpState {
        p: proj.pose.p,
        n: proj.pose.n,
        mu: proj.pose.mu,
        vx: next_body.vx,
        vy: next_body.vy,
        omega: next_body.omega,
        d,
        delta,
    };
    if !next.is_finite() {
        return fault(next);
    }

    let progress = track.progress_delta(next.p, state.p);
    let info = StepInfo {
        track_violation: track_violation(track, &next, &cfg.reward),
        ellipse_violation: ellipse,
        terminated_off_track: next.n.abs() > track.width_at(next.p),
        lap_completed: progress > 0.0 && next.p < state.p,
        fault: false,
    };
    let reward = if info.track_violation || info.ellipse_violation {
        -cfg.reward.c
    } else {
        progress
    };
    StepResult {
        next_state: next,
        reward,
        done: info.terminated_off_track,
        info,
    }
}

/// Rejection-samples a start state satisfying both constraints.
pub fn reset<R: Rng + ?Sized>(track: &Track, cfg: &RaceConfig, rng: &mut R) -> MdpState {
    let spec = &cfg.reset;
    loop {
        let p = track.wrap_progress(rng.gen_range(0.0..track.length()));
        let band = (spec.n_fraction * (track.half_width_at(p) - cfg.reward.safety_margin)).max(0.0);
        let n = if band > 0.0 {
            rng.gen_range(-band..=band)
        } else {
            0.0
        };
        let mu = if spec.mu_max > 0.0 {
            rng.gen_range(-spec.mu_max..=spec.mu_max)
        } else {
            0.0
        };
        let vx = if spec.vx_max > spec.vx_min {
            rng.gen_range(spec.vx_min..spec.vx_max)
        } else {
            spec.vx_min
        };
        let s = MdpState {
            p,
            n,
            mu,
            vx,
            ..MdpState::default()
        };
        if track_violation(track, &s, &cfg.reward) {
            continue;
        }
        let Ok(body) = s.to_body(track) else { continue };
        let forces = crate::vehicle::tire_and_drive_forces(&body, &s.inputs(), &cfg.params);
        if ellipse_violation(&forces, &cfg.params) {
            continue;
        }
        return s;
    }
}

/// SAC settings for desk-scale racing runs: smaller networks and batches
/// than the library defaults.
pub fn race_sac_defaults() -> SacConfig {
    SacConfig {
        hidden: vec![64, 64],
        batch_size: 256,
        warmup_steps: 10_000,
        ..SacConfig::default()
    }
}

/// Stateful wrapper owning its RNG (resets and model noise).
#[derive(Clone, Debug)]
pub struct RaceEnv {
    track: Arc<Track>,
    cfg: RaceConfig,
    scaling: ObsScaling,
    rng: ChaCha8Rng,
    state: MdpState,
    episode_eps: Perturbation,
}

impl RaceEnv {
    pub fn new(track: Arc<Track>, cfg: RaceConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let scaling = ObsScaling::for_track(&track);
        let mut env = RaceEnv {
            track,
            cfg,
            scaling,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: MdpState::default(),
            episode_eps: Perturbation::ZERO,
        };
        env.reset();
        Ok(env)
    }

    pub fn track(&self) -> &Track {
        &self.track
    }

    pub fn shared_track(&self) -> Arc<Track> {
        Arc::clone(&self.track)
    }

    pub fn config(&self) -> &RaceConfig {
        &self.cfg
    }

    pub fn scaling(&self) -> &ObsScaling {
        &self.scaling
    }

    pub fn state(&self) -> &MdpState {
        &self.state
    }

    pub fn set_state(&mut self, s: MdpState) {
        self.state = s;
    }

    pub fn observe(&self) -> Vec<f64> {
        self.scaling.observe(&self.state)
    }

    fn draw_eps(&mut self) -> Perturbation {
        if !self.cfg.randomize {
            Perturbation::ZERO
        } else if self.cfg.noise_per_episode {
            self.episode_eps
        } else {
            self.cfg.noise.sample(&mut self.rng)
        }
    }

    pub fn step_action(&mut self, action: Action) -> StepResult {
        let eps = self.draw_eps();
        let r = step(&self.track, &self.state, action, &self.cfg, &eps);
        self.state = r.next_state;
        r
    }
}

impl Environment for RaceEnv {
    fn obs_dim(&self) -> usize {
        8
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn dt(&self) -> f64 {
        self.cfg.reward.dt
    }

    fn max_episode_steps(&self) -> usize {
        self.cfg.max_steps
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = reset(&self.track, &self.cfg, &mut self.rng);
        if self.cfg.randomize && self.cfg.noise_per_episode {
            self.episode_eps = self.cfg.noise.sample(&mut self.rng);
        }
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        let r = self.step_action(Action::from_normalized(action));
        EnvStep {
            obs: self.observe(),
            reward: r.reward,
            done: r.done,
            fault: r.info.fault,
        }
    }

    fn physical_action(&self, action: &[f64]) -> Vec<f64> {
        let a = Action::from_normalized(action).clipped();
        vec![a.d_rate, a.delta_rate]
    }
}

/// One rollout: transitions plus the visited observations (first entry is
/// the reset observation).
#[derive(Clone, Debug, Default)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub observations: Vec<Vec<f64>>,
    pub total_reward: f64,
    pub fault: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Resets `env` and runs `policy` (normalized actions) for at most
/// `max_steps` steps. The last transition is marked `truncated` when the cap
/// ends the episode and `done` when the env terminated it.
pub fn run_episode<E, P>(env: &mut E, mut policy: P, max_steps: usize) -> Result<Episode>
where
    E: Environment + ?Sized,
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut obs = env.reset();
    let mut ep = Episode {
        observations: vec![obs.clone()],
        ..Episode::default()
    };
    for t in 0..max_steps {
        let action = policy(&obs)?;
        let r = env.step(&action);
        ep.total_reward += r.reward;
        let truncated = !r.done && t + 1 == max_steps;
        ep.transitions.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: r.reward,
            next_obs: r.obs.clone(),
            done: r.done,
            truncated,
        });
        ep.observations.push(r.obs.clone());
        obs = r.obs;
        if r.done {
            ep.fault = r.fault;
            break;
        }
    }
    Ok(ep)
}

pub const EPISODE_CSV_HEADER: &str = "t,p,n,mu,vx,vy,omega,d,delta,d_rate,delta_rate,reward,track_violation,ellipse_violation,off_track,lap,fault";

/// One CSV row per step: `t` is the time at the end of the step.
pub fn episode_csv(rows: &[(MdpState, Action, StepResult)], dt: f64) -> String {
    let mut out = String::from(EPISODE_CSV_HEADER);
    out.push('\n');
    for (i, (_, a, r)) in rows.iter().enumerate() {
        let s = &r.next_state;
        let f = &r.info;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            (i + 1) as f64 * dt,
            s.p,
            s.n,
            s.mu,
            s.vx,
            s.vy,
            s.omega,
            s.d,
            s.delta,
            a.d_rate,
            a.delta_rate,
            r.reward,
            f.track_violation as u8,
            f.ellipse_violation as u8,
            f.terminated_off_track as u8,
            f.lap_completed as u8,
            f.fault as u8
        );
    }
    out
}

/// Wraps `mu` into `(-pi, pi]` and `p` into `[0, L)`.
pub fn canonical(track: &Track, s: &MdpState) -> MdpState {
    MdpState {
        p: track.wrap_progress(s.p),
        mu: wrap_angle(s.mu),
        ..*s
    }
}
