//! Online policy refinement against a stand-in "real car".
//!
//! The plant is a second simulator whose tire and drivetrain parameters are
//! perturbed away from the training model. A plant loop drives it with the
//! latest published policy snapshot and appends every step to a shared
//! replay buffer; a learner consumes that buffer and publishes a new
//! snapshot every `publish_every` updates.

mod run;
pub mod transport;

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::{validation, Error, Result};
use crate::nn::GaussianPolicy;
use crate::sac::{RegularizerSpec, SacConfig};
use crate::vehicle::{NoiseSpec, VehicleParams};

pub use run::{deterministic_refine, refine, RefineOutcome, Schedule};

/// Immutable policy published by the learner. The checksum covers every
/// parameter plus the version fields and is re-verified on each read.
#[derive(Clone, Debug)]
pub struct PolicySnapshot {
    policy: GaussianPolicy,
    version: u64,
    born_at_update: u64,
    checksum: u32,
}

impl PolicySnapshot {
    pub fn new(policy: GaussianPolicy, version: u64, born_at_update: u64) -> Self {
        let checksum = snapshot_checksum(&policy, version, born_at_update);
        PolicySnapshot {
            policy,
            version,
            born_at_update,
            checksum,
        }
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn born_at_update(&self) -> u64 {
        self.born_at_update
    }

    pub fn checksum(&self) -> u32 {
        self.checksum
    }

    pub fn verify(&self) -> Result<()> {
        let c = snapshot_checksum(&self.policy, self.version, self.born_at_update);
        if c != self.checksum {
            return Err(Error::Checkpoint(format!(
                "snapshot v{} checksum mismatch: stored {:08x}, computed {c:08x}",
                self.version, self.checksum
            )));
        }
        Ok(())
    }
}

fn snapshot_checksum(policy: &GaussianPolicy, version: u64, born_at_update: u64) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&version.to_le_bytes());
    h.update(&born_at_update.to_le_bytes());
    for block in policy.net().blocks() {
        for v in block {
            h.update(&v.to_le_bytes());
        }
    }
    for s in policy.action_scale() {
        h.update(&s.to_le_bytes());
    }
    h.finalize()
}

/// Version published after `updates` learner updates.
pub fn snapshot_version(updates: u64, publish_every: u64) -> u64 {
    1 + updates / publish_every.max(1)
}

/// Parameters that `make_plant` may scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlantParam {
    FrontB,
    FrontC,
    FrontD,
    RearB,
    RearC,
    RearD,
    Cm1,
    Cm2,
}

impl PlantParam {
    pub const ALL: [PlantParam; 8] = [
        PlantParam::FrontB,
        PlantParam::FrontC,
        PlantParam::FrontD,
        PlantParam::RearB,
        PlantParam::RearC,
        PlantParam::RearD,
        PlantParam::Cm1,
        PlantParam::Cm2,
    ];

    fn slot(self, p: &mut VehicleParams) -> &mut f64 {
        match self {
            PlantParam::FrontB => &mut p.front.b,
            PlantParam::FrontC => &mut p.front.c,
            PlantParam::FrontD => &mut p.front.d,
            PlantParam::RearB => &mut p.rear.b,
            PlantParam::RearC => &mut p.rear.c,
            PlantParam::RearD => &mut p.rear.d,
            PlantParam::Cm1 => &mut p.cm1,
            PlantParam::Cm2 => &mut p.cm2,
        }
    }
}

/// How the plant departs from the training model.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    /// Each parameter is scaled by `1 +/- magnitude` with a seeded random sign.
    pub magnitude: f64,
    /// Explicit fractions applied after the random ones, e.g. `(RearD, -0.2)`.
    pub fixed: Vec<(PlantParam, f64)>,
}

impl Perturbation {
    pub fn none() -> Self {
        Perturbation {
            magnitude: 0.0,
            fixed: Vec::new(),
        }
    }

    pub fn uniform(magnitude: f64) -> Self {
        Perturbation {
            magnitude,
            fixed: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantSpec {
    pub params: VehicleParams,
    /// Model noise on the plant; `None` drives it noiselessly.
    pub noise: Option<NoiseSpec>,
    /// Control rate [Hz].
    pub control_hz: f64,
    /// Learner update cap [Hz].
    pub learner_hz: f64,
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        for (name, v) in [
            ("control_hz", self.control_hz),
            ("learner_hz", self.learner_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(validation(format!(
                    "refine.{name} must be positive, got {v}"
                )));
            }
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        Ok(())
    }
}

pub fn make_plant(base: &VehicleParams, perturb: &Perturbation, seed: u64) -> Result<PlantSpec> {
    let check = |f: f64| {
        if !(f.abs() <= 0.5) {
            return Err(validation(format!("plant perturbation {f} outside +/-50%")));
        }
        Ok(())
    };
    check(perturb.magnitude)?;
    let mut params = *base;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if perturb.magnitude > 0.0 {
        for p in PlantParam::ALL {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            *p.slot(&mut params) *= 1.0 + sign * perturb.magnitude;
        }
    }
    for &(p, f) in &perturb.fixed {
        check(f)?;
        *p.slot(&mut params) *= 1.0 + f;
    }
    let spec = PlantSpec {
        params,
        noise: None,
        control_hz: 100.0,
        learner_hz: 40.0,
    };
    spec.validate()?;
    Ok(spec)
}

/// Knobs of a refinement run.
#[derive(Clone, Debug)]
pub struct RefineConfig {
    pub sac: SacConfig,
    pub reg: RegularizerSpec,
    /// Plant steps to drive.
    pub steps: usize,
    /// Plant steps per log window.
    pub window: usize,
    pub publish_every: u64,
    /// Sample from the policy on the plant; the mean action otherwise.
    pub stochastic: bool,
    pub learner_enabled: bool,
    /// Transitions required before the learner starts.
    pub warmup: usize,
    /// How many schedule cycles the plant may run ahead of the learner.
    pub slack_cycles: usize,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            sac: SacConfig::default(),
            reg: RegularizerSpec::None,
            steps: 50_000,
            window: 6_000,
            publish_every: 100,
            stochastic: true,
            learner_enabled: true,
            warmup: 1_000,
            slack_cycles: 4,
            seed: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sac.validate()?;
        self.reg.validate()?;
        if self.window == 0 {
            return Err(validation("refine.window must be positive"));
        }
        if self.publish_every == 0 {
            return Err(validation("refine.publish_every must be positive"));
        }
        Ok(())
    }

    /// Reads `refine.*` keys; SAC and regularizer settings come from their
    /// own sections.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = RefineConfig::default();
        let r = RefineConfig {
            sac: SacConfig::from_config(cfg)?,
            reg: RegularizerSpec::from_config(cfg, 2)?,
            steps: cfg.get_or("refine.steps", d.steps)?,
            window: cfg.get_or("refine.window", d.window)?,
            publish_every: cfg.get_or("refine.publish_every", d.publish_every)?,
            stochastic: cfg.get_or("refine.stochastic", d.stochastic)?,
            learner_enabled: cfg.get_or("refine.learner", d.learner_enabled)?,
            warmup: cfg.get_or("refine.warmup", d.warmup)?,
            slack_cycles: cfg.get_or("refine.slack_cycles", d.slack_cycles)?,
            seed: cfg.get_or("seed", d.seed)?,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn write_config(&self, cfg: &mut Config) {
        self.sac.write_config(cfg);
        self.reg.write_config(cfg);
        cfg.set("refine.steps", self.steps.to_string());
        cfg.set("refine.window", self.window.to_string());
        cfg.set("refine.publish_every", self.publish_every.to_string());
        cfg.set("refine.stochastic", self.stochastic.to_string());
        cfg.set("refine.learner", self.learner_enabled.to_string());
        cfg.set("refine.warmup", self.warmup.to_string());
        cfg.set("refine.slack_cycles", self.slack_cycles.to_string());
        cfg.set("seed", self.seed.to_string());
    }
}

/// One row of the refinement log.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineWindow {
    pub window: usize,
    /// Plant steps driven by the end of the window.
    pub plant_steps: usize,
    pub laps: usize,
    pub dnf: usize,
    pub mean_lap_time: Option<f64>,
    pub mean_violation_time: Option<f64>,
    /// Snapshot driving the plant at the end of the window.
    pub version: u64,
    pub buffer_size: usize,
    pub updates: u64,
}

pub const REFINE_CSV_HEADER: &str =
    "window,plant_steps,laps,dnf,mean_lap_time,mean_violation_time,version,buffer_size,updates";

pub fn refine_csv(rows: &[RefineWindow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
    let mut out = format!("{REFINE_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.window,
            r.plant_steps,
            r.laps,
            r.dnf,
            opt(r.mean_lap_time),
            opt(r.mean_violation_time),
            r.version,
            r.buffer_size,
            r.updates
        );
    }
    out
}

/// Mean lap time over the first and last `fraction` of windows that
/// recorded laps.
pub fn lap_time_trend(rows: &[RefineWindow], fraction: f64) -> Option<(f64, f64)> {
    let timed: Vec<(f64, usize)> = rows
        .iter()
        .filter_map(|r| r.mean_lap_time.map(|t| (t, r.laps)))
        .collect();
    if timed.len() < 2 {
        return None;
    }
    let k = ((timed.len() as f64 * fraction).ceil() as usize).clamp(1, timed.len() / 2);
    let mean = |xs: &[(f64, usize)]| {
        let n: usize = xs.iter().map(|x| x.1).sum();
        xs.iter().map(|x| x.0 * x.1 as f64).sum::<f64>() / n as f64
    };
    Some((mean(&timed[..k]), mean(&timed[timed.len() - k..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_perturbation_is_identity() {
        let base = VehicleParams::default();
        let p = make_plant(&base, &Perturbation::none(), 3).unwrap();
        assert_eq!(p.params, base);
    }

    #[test]
    fn fixed_fraction_scales_directly() {
        let base = VehicleParams::default();
        let spec = Perturbation {
            magnitude: 0.0,
            fixed: vec![(PlantParam::RearD, -0.2)],
        };
        let p = make_plant(&base, &spec, 0).unwrap();
        assert!((p.params.rear.d - 0.8 * base.rear.d).abs() < 1e-15);
        assert_eq!(p.params.front, base.front);
    }

    #[test]
    fn seeded_plants_repeat() {
        let base = VehicleParams::default();
        let a = make_plant(&base, &Perturbation::uniform(0.2), 11).unwrap();
        let b = make_plant(&base, &Perturbation::uniform(0.2), 11).unwrap();
        assert_eq!(a, b);
        for (x, y) in [(a.params.front.d, base.front.d), (a.params.cm1, base.cm1)] {
            assert!(((x / y) - 1.0).abs() > 0.19);
        }
    }

    #[test]
    fn out_of_range_perturbation_rejected() {
        let base = VehicleParams::default();
        assert!(make_plant(&base, &Perturbation::uniform(0.6), 0).is_err());
        let spec = Perturbation {
            magnitude: 0.0,
            fixed: vec![(PlantParam::Cm1, -0.7)],
        };
        assert!(make_plant(&base, &spec, 0).is_err());
    }

    #[test]
    fn tampered_snapshot_fails_verification() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pol = GaussianPolicy::new(4, &[8], vec![1.0, 1.0], &mut rng);
        let snap = PolicySnapshot::new(pol, 3, 200);
        snap.verify().unwrap();
        let mut torn = snap.clone();
        torn.policy.net_mut().layers_mut()[0].weight[[1, 2]] += 1e-12;
        assert!(torn.verify().is_err());
        let mut relabelled = snap;
        relabelled.version = 4;
        assert!(relabelled.verify().is_err());
    }

    #[test]
    fn version_counting() {
        assert_eq!(snapshot_version(0, 100), 1);
        assert_eq!(snapshot_version(99, 100), 1);
        assert_eq!(snapshot_version(100, 100), 2);
        assert_eq!(snapshot_version(1234, 100), 13);
    }
}
