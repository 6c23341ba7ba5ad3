use std::sync::Arc;

use parking_lot::{Condvar, Mutex, RwLock};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{snapshot_version, PlantSpec, PolicySnapshot, RefineConfig, RefineWindow};
use crate::env::{Environment, MdpState, RaceConfig, RaceEnv};
use crate::error::{validation, Error, Result};
use crate::metrics::WALL_THRESHOLD;
use crate::nn::{Checkpoint, GaussianPolicy};
use crate::sac::{
    normalized_reg, reward_shape, Batch, RegularizerSpec, ReplayBuffer, SacAgent, Transition,
};
use crate::track::Track;
use crate::vehicle::NoiseSpec;

/// `plant_steps` control ticks for every `updates` learner updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub plant_steps: usize,
    pub updates: usize,
}

impl Schedule {
    pub fn new(plant_steps: usize, updates: usize) -> Result<Self> {
        if plant_steps == 0 {
            return Err(validation(
                "schedule needs at least one plant step per cycle",
            ));
        }
        Ok(Schedule {
            plant_steps,
            updates,
        })
    }

    /// Smallest integer cycle with the given rate ratio (rates resolved to
    /// 1 mHz).
    pub fn from_rates(control_hz: f64, learner_hz: f64) -> Result<Self> {
        if !(control_hz > 0.0 && learner_hz > 0.0) {
            return Err(validation("rates must be positive"));
        }
        let a = (control_hz * 1000.0).round() as u64;
        let b = (learner_hz * 1000.0).round() as u64;
        let g = gcd(a, b).max(1);
        Schedule::new((a / g) as usize, (b / g) as usize)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    /// Final agent; on a learner failure, the state at the last publication.
    pub checkpoint: Checkpoint,
    pub log: Vec<RefineWindow>,
    pub plant_steps: usize,
    pub transitions_pushed: u64,
    pub faults: usize,
    pub buffer_len: usize,
    pub updates: u64,
    pub final_version: u64,
    /// Snapshot reads by the plant, each checksum-verified.
    pub handoffs: u64,
    pub halted: Option<String>,
}

/// Online lap timing on the plant. The lap in progress when driving starts
/// (or resumes after a reset) is not timed.
#[derive(Clone, Debug)]
struct LapClock {
    dt: f64,
    length: f64,
    t: f64,
    unwrapped: f64,
    next_level: f64,
    last_crossing: Option<f64>,
    violation_steps: usize,
    laps: Vec<(f64, f64)>,
    dnf: usize,
}

impl LapClock {
    fn new(track: &Track, dt: f64, start: &MdpState) -> Self {
        let mut c = LapClock {
            dt,
            length: track.length(),
            t: 0.0,
            unwrapped: 0.0,
            next_level: 0.0,
            last_crossing: None,
            violation_steps: 0,
            laps: Vec::new(),
            dnf: 0,
        };
        c.restart(start);
        c
    }

    fn restart(&mut self, s: &MdpState) {
        self.unwrapped = s.p;
        self.next_level = (s.p / self.length).floor() + 1.0;
        self.last_crossing = None;
        self.violation_steps = 0;
    }

    fn step(&mut self, track: &Track, prev: &MdpState, next: &MdpState) {
        let before = self.unwrapped;
        self.unwrapped += track.progress_delta(next.p, prev.p);
        if track.half_width_at(next.p) - next.n.abs() < WALL_THRESHOLD {
            self.violation_steps += 1;
        }
        let t0 = self.t;
        self.t += self.dt;
        let target = self.next_level * self.length;
        if self.unwrapped >= target && self.unwrapped > before {
            let tc = t0 + self.dt * (target - before) / (self.unwrapped - before);
            if let Some(prev_tc) = self.last_crossing {
                self.laps
                    .push((tc - prev_tc, self.violation_steps as f64 * self.dt));
            }
            self.last_crossing = Some(tc);
            self.violation_steps = 0;
            self.next_level += 1.0;
        }
    }

    fn off_track(&mut self, reset_to: &MdpState) {
        self.dnf += 1;
        self.restart(reset_to);
    }

    /// Laps and DNFs since the previous call.
    fn drain(&mut self) -> (Vec<(f64, f64)>, usize) {
        let dnf = std::mem::take(&mut self.dnf);
        (std::mem::take(&mut self.laps), dnf)
    }
}

struct Plant {
    env: RaceEnv,
    rng: ChaCha8Rng,
    obs: Vec<f64>,
    stochastic: bool,
    reg: RegularizerSpec,
    clock: LapClock,
    steps: usize,
    faults: usize,
    pushed: u64,
    last_version: u64,
    handoffs: u64,
}

impl Plant {
    fn new(
        track: Arc<Track>,
        race: &RaceConfig,
        plant: &PlantSpec,
        cfg: &RefineConfig,
        reg: RegularizerSpec,
    ) -> Result<Self> {
        let mut rc = race.clone();
        rc.params = plant.params;
        rc.randomize = plant.noise.is_some();
        rc.noise = plant.noise.unwrap_or(NoiseSpec::ZERO);
        rc.reward.dt = 1.0 / plant.control_hz;
        let mut env = RaceEnv::new(track, rc, cfg.seed ^ 0x5eed_91a7)?;
        let obs = env.reset();
        let clock = LapClock::new(env.track(), env.dt(), env.state());
        Ok(Plant {
            env,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(2).wrapping_add(1)),
            obs,
            stochastic: cfg.stochastic,
            reg,
            clock,
            steps: 0,
            faults: 0,
            pushed: 0,
            last_version: 0,
            handoffs: 0,
        })
    }

    /// Verifies the snapshot it is handed, then drives one control tick.
    /// Returns the transition to store, if any.
    fn tick(&mut self, snap: &PolicySnapshot) -> Result<Option<Transition>> {
        snap.verify()?;
        self.handoffs += 1;
        if snap.version() < self.last_version {
            return Err(Error::Domain(format!(
                "snapshot version went backwards: {} after {}",
                snap.version(),
                self.last_version
            )));
        }
        self.last_version = snap.version();
        let action = act(snap.policy(), &self.obs, self.stochastic, &mut self.rng)?;
        let prev = *self.env.state();
        let r = self.env.step(&action);
        self.steps += 1;
        if r.fault {
            self.faults += 1;
            self.obs = self.env.reset();
            self.clock.restart(self.env.state());
            return Ok(None);
        }
        let next = *self.env.state();
        let t = Transition {
            obs: std::mem::take(&mut self.obs),
            reward: reward_shape(r.reward, &action, &self.reg),
            action,
            next_obs: r.obs.clone(),
            done: r.done,
            truncated: false,
        };
        if r.done {
            self.obs = self.env.reset();
            self.clock.off_track(self.env.state());
        } else {
            self.clock.step(self.env.track(), &prev, &next);
            self.obs = r.obs;
        }
        self.pushed += 1;
        Ok(Some(t))
    }

    fn window_row(&mut self, window: usize, buffer_size: usize, updates: u64) -> RefineWindow {
        let (laps, dnf) = self.clock.drain();
        let n = laps.len();
        let mean =
            |f: fn(&(f64, f64)) -> f64| (n > 0).then(|| laps.iter().map(f).sum::<f64>() / n as f64);
        RefineWindow {
            window,
            plant_steps: self.steps,
            laps: n,
            dnf,
            mean_lap_time: mean(|l| l.0),
            mean_violation_time: mean(|l| l.1),
            version: self.last_version,
            buffer_size,
            updates,
        }
    }
}

fn act(
    policy: &GaussianPolicy,
    obs: &[f64],
    stochastic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if stochastic {
        Ok(policy.sample_action(obs, rng)?.0)
    } else {
        policy.mean_action(obs)
    }
}

struct Learner {
    agent: SacAgent,
    rng: ChaCha8Rng,
    publish_every: u64,
    last_good: Checkpoint,
    halted: Option<String>,
}

impl Learner {
    fn new(ck: &Checkpoint, cfg: &RefineConfig, reg: &RegularizerSpec) -> Result<Self> {
        let agent = SacAgent::from_checkpoint(ck, &cfg.sac, reg)?;
        let last_good = agent.to_checkpoint();
        Ok(Learner {
            agent,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(2).wrapping_add(2)),
            publish_every: cfg.publish_every,
            last_good,
            halted: None,
        })
    }

    fn initial_snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::new(self.agent.policy.clone(), 1, 0)
    }

    /// One SAC update; returns a snapshot when one is due.
    fn learn(&mut self, batch: &Batch) -> Result<Option<PolicySnapshot>> {
        match self.agent.update(batch, &mut self.rng) {
            Ok(_) => {}
            Err(Error::Numeric(msg)) => {
                self.halted = Some(format!("update {}: {msg}", self.agent.updates() + 1));
                return Ok(None);
            }
            Err(e) => return Err(e),
        }
        let u = self.agent.updates();
        if u % self.publish_every != 0 {
            return Ok(None);
        }
        self.last_good = self.agent.to_checkpoint();
        Ok(Some(PolicySnapshot::new(
            self.agent.policy.clone(),
            snapshot_version(u, self.publish_every),
            u,
        )))
    }

    fn finish(self) -> (Checkpoint, u64, Option<String>) {
        let ck = match self.halted {
            Some(_) => self.last_good,
            None => self.agent.to_checkpoint(),
        };
        let updates = self.agent.updates();
        (ck, updates, self.halted)
    }
}

fn prepare(
    ck: &Checkpoint,
    track: &Arc<Track>,
    race: &RaceConfig,
    plant: &PlantSpec,
    cfg: &RefineConfig,
) -> Result<(Plant, Learner, ReplayBuffer)> {
    cfg.validate()?;
    plant.validate()?;
    let probe = RaceEnv::new(Arc::clone(track), race.clone(), 0)?;
    let reg = normalized_reg(&probe, &cfg.sac, &cfg.reg);
    let learner = Learner::new(ck, cfg, &reg)?;
    let p = Plant::new(Arc::clone(track), race, plant, cfg, reg)?;
    let buffer = ReplayBuffer::new(cfg.sac.buffer_capacity, p.env.obs_dim(), p.env.action_dim())?;
    Ok((p, learner, buffer))
}

fn learn_threshold(cfg: &RefineConfig) -> usize {
    cfg.warmup.max(cfg.sac.batch_size).max(1)
}

/// Single-threaded refinement following `schedule` exactly: every cycle
/// drives `plant_steps` ticks, then runs `updates` learner updates once the
/// buffer holds enough data. Bit-reproducible under a fixed seed.
pub fn deterministic_refine(
    ck: &Checkpoint,
    track: Arc<Track>,
    race: &RaceConfig,
    plant: &PlantSpec,
    cfg: &RefineConfig,
    schedule: Schedule,
) -> Result<RefineOutcome> {
    let (mut p, mut learner, mut buffer) = prepare(ck, &track, race, plant, cfg)?;
    let mut snap = learner.initial_snapshot();
    let mut log = Vec::new();
    let threshold = learn_threshold(cfg);
    while p.steps < cfg.steps {
        for _ in 0..schedule.plant_steps {
            if p.steps >= cfg.steps {
                break;
            }
            if let Some(t) = p.tick(&snap)? {
                buffer.push(&t)?;
            }
            if p.steps % cfg.window == 0 {
                log.push(p.window_row(log.len(), buffer.len(), learner.agent.updates()));
            }
        }
        if !cfg.learner_enabled || learner.halted.is_some() || buffer.len() < threshold {
            continue;
        }
        for _ in 0..schedule.updates {
            let batch = buffer.sample(cfg.sac.batch_size, &mut learner.rng)?;
            if let Some(s) = learner.learn(&batch)? {
                snap = s;
            }
            if learner.halted.is_some() {
                break;
            }
        }
    }
    if p.steps % cfg.window != 0 {
        log.push(p.window_row(log.len(), buffer.len(), learner.agent.updates()));
    }
    let final_version = snap.version();
    let (checkpoint, updates, halted) = learner.finish();
    Ok(RefineOutcome {
        checkpoint,
        log,
        plant_steps: p.steps,
        transitions_pushed: p.pushed,
        faults: p.faults,
        buffer_len: buffer.len(),
        updates,
        final_version,
        handoffs: p.handoffs,
        halted,
    })
}

/// Progress counters shared by the two loops.
#[derive(Debug, Default)]
struct Clock {
    plant_steps: usize,
    /// Plant step at which the buffer first held enough data to learn.
    learn_start: Option<usize>,
    updates: u64,
    plant_done: bool,
    learner_done: bool,
}

struct Shared {
    buffer: RwLock<ReplayBuffer>,
    snapshot: RwLock<Arc<PolicySnapshot>>,
    clock: Mutex<Clock>,
    tick: Condvar,
}

/// Concurrent refinement: the calling thread runs the plant loop, a second
/// thread runs the learner. Both are paced by a virtual clock in plant
/// steps: the learner may not exceed the plant-to-learner rate ratio, and
/// the plant may run at most `slack_cycles` cycles ahead of the learner.
pub fn refine(
    ck: &Checkpoint,
    track: Arc<Track>,
    race: &RaceConfig,
    plant: &PlantSpec,
    cfg: &RefineConfig,
) -> Result<RefineOutcome> {
    if cfg.slack_cycles == 0 {
        return Err(validation("refine.slack_cycles must be at least 1"));
    }
    let schedule = Schedule::from_rates(plant.control_hz, plant.learner_hz)?;
    let (k, u) = (schedule.plant_steps, schedule.updates);
    let (mut p, mut learner, buffer) = prepare(ck, &track, race, plant, cfg)?;
    let shared = Shared {
        buffer: RwLock::new(buffer),
        snapshot: RwLock::new(Arc::new(learner.initial_snapshot())),
        clock: Mutex::new(Clock {
            learner_done: !cfg.learner_enabled || u == 0,
            ..Clock::default()
        }),
        tick: Condvar::new(),
    };
    let threshold = learn_threshold(cfg);
    let batch_size = cfg.sac.batch_size;
    let slack = cfg.slack_cycles;

    let (plant_result, learner) = std::thread::scope(|scope| {
        let shared = &shared;
        let handle = scope.spawn(move || -> Result<Learner> {
            loop {
                {
                    let mut c = shared.clock.lock();
                    loop {
                        if c.learner_done {
                            return Ok(learner);
                        }
                        if c.plant_done {
                            c.learner_done = true;
                            return Ok(learner);
                        }
                        if let Some(s) = c.learn_start {
                            if (c.updates as usize + 1) * k <= (c.plant_steps - s) * u {
                                break;
                            }
                        }
                        shared.tick.wait(&mut c);
                    }
                }
                let batch = {
                    let buf = shared.buffer.read();
                    buf.sample(batch_size, &mut learner.rng)
                };
                let outcome = batch.and_then(|b| learner.learn(&b));
                let mut c = shared.clock.lock();
                match outcome {
                    Ok(snap) => {
                        if let Some(s) = snap {
                            *shared.snapshot.write() = Arc::new(s);
                        }
                        c.updates = learner.agent.updates();
                        if learner.halted.is_some() {
                            c.learner_done = true;
                        }
                    }
                    Err(e) => {
                        c.learner_done = true;
                        shared.tick.notify_all();
                        return Err(e);
                    }
                }
                shared.tick.notify_all();
                if c.learner_done {
                    return Ok(learner);
                }
            }
        });

        let mut log = Vec::new();
        let mut run = || -> Result<()> {
            while p.steps < cfg.steps {
                {
                    let mut c = shared.clock.lock();
                    while !c.learner_done {
                        match c.learn_start {
                            Some(s)
                                if (c.plant_steps - s) * u
                                    >= (c.updates as usize + slack * u) * k =>
                            {
                                shared.tick.wait(&mut c);
                            }
                            _ => break,
                        }
                    }
                }
                let snap = Arc::clone(&shared.snapshot.read());
                let t = p.tick(&snap)?;
                let len = {
                    let mut buf = shared.buffer.write();
                    if let Some(t) = t {
                        buf.push(&t)?;
                    }
                    buf.len()
                };
                let updates = {
                    let mut c = shared.clock.lock();
                    c.plant_steps = p.steps;
                    if c.learn_start.is_none() && len >= threshold {
                        c.learn_start = Some(p.steps);
                    }
                    shared.tick.notify_all();
                    c.updates
                };
                if p.steps % cfg.window == 0 {
                    log.push(p.window_row(log.len(), len, updates));
                }
            }
            Ok(())
        };
        let r = run();
        {
            let mut c = shared.clock.lock();
            c.plant_done = true;
            shared.tick.notify_all();
        }
        let learner = handle.join().expect("learner thread panicked");
        (r.map(|_| log), learner)
    });
    let mut log = plant_result?;
    let learner = learner?;
    let buffer_len = shared.buffer.read().len();
    if p.steps % cfg.window != 0 {
        log.push(p.window_row(log.len(), buffer_len, learner.agent.updates()));
    }
    let final_version = shared.snapshot.read().version();
    let (checkpoint, updates, halted) = learner.finish();
    Ok(RefineOutcome {
        checkpoint,
        log,
        plant_steps: p.steps,
        transitions_pushed: p.pushed,
        faults: p.faults,
        buffer_len,
        updates,
        final_version,
        handoffs: p.handoffs,
        halted,
    })
}
