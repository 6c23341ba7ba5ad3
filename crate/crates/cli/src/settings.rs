//! Configuration layering: defaults, then `--config FILE`, then flags and
//! `--set` overrides.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::Path;

use racesac_core::classic::BenchKind;
use racesac_core::config::Config;
use racesac_core::env::{race_sac_defaults, write_track_config};
use racesac_core::refine::RefineConfig;
use racesac_core::{RaceConfig, RegularizerSpec};

use crate::Common;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration: exit code 1.
    Usage(String),
    /// Anything failing after the configuration resolved: exit code 2.
    Runtime(String),
}

pub fn usage(e: impl Display) -> Failure {
    Failure::Usage(e.to_string())
}

pub fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Keys that have no default but may be set.
const OPTIONAL_KEYS: [&str; 8] = [
    "track.file",
    "sac.target_entropy",
    "sac.alpha_init",
    "sac.ou_theta",
    "sac.ou_sigma",
    "reg.value",
    "eval.checkpoint",
    "refine.init",
];

pub struct Layers {
    file: Option<Config>,
    overrides: Config,
}

impl Layers {
    /// `flags` are `(key, value)` pairs from typed command-line options;
    /// `--set` entries are applied after them.
    pub fn new(common: &Common, flags: Vec<(&str, Option<String>)>) -> Result<Self, Failure> {
        let file = match &common.config {
            Some(p) => Some(load_config(p)?),
            None => None,
        };
        let mut overrides = Config::new();
        if let Some(seed) = common.seed {
            overrides.set("seed", seed.to_string());
        }
        for (k, v) in flags {
            if let Some(v) = v {
                overrides.set(k, v);
            }
        }
        for entry in &common.set {
            let (k, v) = entry
                .split_once('=')
                .ok_or_else(|| usage(format!("override `{entry}` is not of the form key=value")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(usage(format!("override `{entry}` has an empty key")));
            }
            overrides.set(k, v.trim());
        }
        Ok(Layers { file, overrides })
    }

    /// Value of `key` from the overrides or the file, ignoring defaults.
    pub fn peek(&self, key: &str) -> Option<String> {
        self.overrides
            .raw(key)
            .or_else(|| self.file.as_ref().and_then(|f| f.raw(key)))
            .map(str::to_string)
    }

    pub fn resolve(&self, defaults: Config) -> Result<Config, Failure> {
        let mut cfg = defaults;
        if let Some(f) = &self.file {
            cfg.merge(f);
        }
        cfg.merge(&self.overrides);
        let known = known_keys();
        let unknown: Vec<&str> = cfg.keys().filter(|k| !known.contains(*k)).collect();
        if !unknown.is_empty() {
            return Err(usage(format!(
                "unknown config key(s): {}",
                unknown.join(", ")
            )));
        }
        Ok(cfg)
    }
}

fn load_config(p: &Path) -> Result<Config, Failure> {
    if !p.exists() {
        return Err(runtime(format!("config file {} not found", p.display())));
    }
    Config::load(p).map_err(|e| match e {
        racesac_core::Error::Io(io) => runtime(format!("{}: {io}", p.display())),
        other => usage(other),
    })
}

pub fn race_defaults(cfg: &mut Config) {
    RaceConfig::default().write_config(cfg);
    write_track_config(cfg);
}

pub fn train_defaults(env: &str) -> Result<Config, Failure> {
    let mut cfg = Config::new();
    cfg.set("seed", "0");
    cfg.set("run.env", env);
    RegularizerSpec::None.write_config(&mut cfg);
    match env {
        "race" => {
            race_defaults(&mut cfg);
            race_sac_defaults().write_config(&mut cfg);
            cfg.set("run.steps", "2000000");
        }
        other => {
            let kind: BenchKind = other
                .parse()
                .map_err(|e| usage(format!("{e}; `--env` takes race, pendulum or mountaincar")))?;
            kind.default_sac().write_config(&mut cfg);
            cfg.set("run.steps", "60000");
        }
    }
    Ok(cfg)
}

pub fn eval_defaults() -> Config {
    let mut cfg = Config::new();
    cfg.set("seed", "0");
    race_defaults(&mut cfg);
    cfg.set("eval.laps", "10");
    cfg.set("eval.deterministic", "true");
    cfg.set("eval.step_budget", "60000");
    cfg
}

pub fn refine_defaults() -> Config {
    let mut cfg = Config::new();
    race_defaults(&mut cfg);
    RefineConfig {
        sac: race_sac_defaults(),
        reg: RegularizerSpec::PolicyOutput(vec![50.0, 10.0]),
        ..RefineConfig::default()
    }
    .write_config(&mut cfg);
    cfg.set("refine.perturb", "0.2");
    cfg.set("refine.deterministic", "false");
    cfg.set("refine.control_hz", "100");
    cfg.set("refine.learner_hz", "40");
    cfg.set("refine.plant_noise", "false");
    cfg
}

pub fn bench_defaults(env: &str) -> Result<Config, Failure> {
    let kind: BenchKind = env.parse().map_err(usage)?;
    let mut cfg = Config::new();
    cfg.set("seed", "0");
    cfg.set("bench.env", env);
    cfg.set("bench.seeds", "3");
    cfg.set("bench.steps", "60000");
    cfg.set("bench.episodes", "100");
    cfg.set("bench.grid", "false");
    RegularizerSpec::None.write_config(&mut cfg);
    kind.default_sac().write_config(&mut cfg);
    Ok(cfg)
}

/// Every key any command understands.
fn known_keys() -> BTreeSet<String> {
    let mut all = Config::new();
    for env in ["race", "pendulum", "mountaincar"] {
        if let Ok(c) = train_defaults(env) {
            all.merge(&c);
        }
    }
    all.merge(&eval_defaults());
    all.merge(&refine_defaults());
    if let Ok(c) = bench_defaults("pendulum") {
        all.merge(&c);
    }
    let mut keys: BTreeSet<String> = all.keys().map(str::to_string).collect();
    keys.extend(OPTIONAL_KEYS.iter().map(|k| k.to_string()));
    keys
}

/// Writes the resolved configuration as `config.txt` in `dir`.
pub fn write_resolved(dir: &Path, cfg: &Config) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let path = dir.join("config.txt");
    std::fs::write(&path, cfg.to_string()).map_err(|e| runtime(format!("{}: {e}", path.display())))
}
