use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use racesac_core::classic::{run_sweep, sweep_csv, BenchKind, SweepSpec};
use racesac_core::config::Config;
use racesac_core::env::track_from_config;
use racesac_core::metrics::{evaluate_policy, format_table, EvalOptions};
use racesac_core::nn::Checkpoint;
use racesac_core::refine::{
    deterministic_refine, make_plant, refine as run_refine, refine_csv, Perturbation, RefineConfig,
    Schedule,
};
use racesac_core::sac::{policy_from_checkpoint, train as run_train};
use racesac_core::{
    Environment, RaceConfig, RaceEnv, RegularizerSpec, SacConfig, Track, TrackKind,
};

use crate::settings::{
    bench_defaults, eval_defaults, refine_defaults, runtime, train_defaults, usage, write_resolved,
    Failure, Layers,
};
use crate::{BenchArgs, EvalArgs, RefineArgs, TrackGenArgs, TrackInfoArgs, TrainArgs};

/// Errors while interpreting a resolved configuration: I/O problems are
/// runtime failures, anything else is a usage error.
fn cfg_err(e: racesac_core::Error) -> Failure {
    match e {
        racesac_core::Error::Io(_) => runtime(e),
        other => usage(other),
    }
}

fn get<T: FromStr>(cfg: &Config, key: &str) -> Result<T, Failure>
where
    T::Err: std::fmt::Display,
{
    cfg.get::<T>(key)
        .map_err(usage)?
        .ok_or_else(|| usage(format!("missing config key `{key}`")))
}

fn load_track(cfg: &Config) -> Result<Arc<Track>, Failure> {
    if let Some(p) = cfg.raw("track.file") {
        if !Path::new(p).exists() {
            return Err(runtime(format!("track file {p} not found")));
        }
    }
    track_from_config(cfg).map(Arc::new).map_err(cfg_err)
}

fn load_checkpoint(path: &str) -> Result<Checkpoint, Failure> {
    let p = Path::new(path);
    if !p.exists() {
        return Err(runtime(format!("checkpoint {path} not found")));
    }
    Checkpoint::load(p).map_err(|e| runtime(format!("{path}: {e}")))
}

fn out_dir(given: &Option<PathBuf>, fallback: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    let layers = Layers::new(
        &a.common,
        vec![
            ("run.env", a.env),
            ("reg.kind", a.reg),
            ("reg.value", a.value),
            ("run.steps", a.steps.map(|s| s.to_string())),
        ],
    )?;
    let env_name = layers.peek("run.env").unwrap_or_else(|| "race".into());
    let cfg = layers.resolve(train_defaults(&env_name)?)?;
    let seed: u64 = get(&cfg, "seed")?;
    let steps: usize = get(&cfg, "run.steps")?;
    let sac = SacConfig::from_config(&cfg).map_err(usage)?;
    let out = out_dir(&a.common.out, "runs/train");

    let (mut env, mut eval_env): (Box<dyn Environment>, Box<dyn Environment>) =
        if env_name == "race" {
            let race = RaceConfig::from_config(&cfg).map_err(usage)?;
            let track = load_track(&cfg)?;
            (
                Box::new(RaceEnv::new(Arc::clone(&track), race.clone(), seed).map_err(usage)?),
                Box::new(RaceEnv::new(track, race, seed.wrapping_add(1)).map_err(usage)?),
            )
        } else {
            let kind: BenchKind = env_name.parse().map_err(usage)?;
            (kind.make(seed), kind.make(seed.wrapping_add(1)))
        };
    let reg = RegularizerSpec::from_config(&cfg, env.action_dim()).map_err(usage)?;
    write_resolved(&out, &cfg)?;

    let outcome = run_train(
        env.as_mut(),
        Some(eval_env.as_mut()),
        &sac,
        &reg,
        steps,
        seed,
        Some(&out),
    )
    .map_err(runtime)?;
    println!(
        "trained {} steps on {env_name} with regularizer {} {}: {} episodes, {} faults",
        outcome.steps,
        reg.name(),
        reg.value_string(),
        outcome.log.len(),
        outcome.faults
    );
    if let Some(last) = outcome.log.last() {
        println!(
            "last episode: return {:.3}, length {}",
            last.episode_return, last.episode_length
        );
    }
    println!("outputs in {}", out.display());
    match outcome.aborted {
        Some(msg) => Err(runtime(format!(
            "training aborted at {msg}; last finite parameters saved"
        ))),
        None => Ok(()),
    }
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let layers = Layers::new(
        &a.common,
        vec![
            (
                "eval.checkpoint",
                a.checkpoint.map(|p| p.display().to_string()),
            ),
            ("eval.laps", a.laps.map(|n| n.to_string())),
            (
                "eval.deterministic",
                a.stochastic.then(|| "false".to_string()),
            ),
            ("eval.step_budget", a.budget.map(|n| n.to_string())),
        ],
    )?;
    let cfg = layers.resolve(eval_defaults())?;
    let ck_path = cfg
        .raw("eval.checkpoint")
        .ok_or_else(|| usage("eval needs --checkpoint"))?
        .to_string();
    let opts = EvalOptions {
        n_laps: get(&cfg, "eval.laps")?,
        deterministic: get(&cfg, "eval.deterministic")?,
        seed: get(&cfg, "seed")?,
        step_budget: get(&cfg, "eval.step_budget")?,
    };
    let race = RaceConfig::from_config(&cfg).map_err(usage)?;
    let track = load_track(&cfg)?;
    let ck = load_checkpoint(&ck_path)?;
    let policy = policy_from_checkpoint(&ck).map_err(runtime)?;
    let out = out_dir(&a.common.out, "runs/eval");
    write_resolved(&out, &cfg)?;

    let report = evaluate_policy(&policy, track, &race, &opts).map_err(runtime)?;
    let label = Path::new(&ck_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "policy".into());
    print!(
        "{}",
        format_table(&[(label.as_str(), report.aggregate.as_ref())])
    );
    println!(
        "laps {} / {}, DNF {}, consecutive clean laps {}, steps {}",
        report.laps.len(),
        opts.n_laps,
        report.dnf,
        report.consecutive_laps,
        report.steps
    );
    write_file(&out.join("eval.csv"), &report.csv())?;
    println!("per-lap CSV in {}", out.join("eval.csv").display());
    Ok(())
}

pub fn refine(a: RefineArgs) -> Result<(), Failure> {
    let layers = Layers::new(
        &a.common,
        vec![
            ("refine.init", a.init.map(|p| p.display().to_string())),
            ("refine.perturb", a.perturb.map(|v| v.to_string())),
            ("refine.steps", a.steps.map(|v| v.to_string())),
            (
                "refine.deterministic",
                a.deterministic.then(|| "true".to_string()),
            ),
            ("reg.kind", a.reg),
            ("reg.value", a.value),
        ],
    )?;
    let cfg = layers.resolve(refine_defaults())?;
    let init = cfg
        .raw("refine.init")
        .ok_or_else(|| usage("refine needs --init CHECKPOINT"))?
        .to_string();
    let rc = RefineConfig::from_config(&cfg).map_err(usage)?;
    let race = RaceConfig::from_config(&cfg).map_err(usage)?;
    let perturb: f64 = get(&cfg, "refine.perturb")?;
    let mut plant =
        make_plant(&race.params, &Perturbation::uniform(perturb), rc.seed).map_err(usage)?;
    plant.control_hz = get(&cfg, "refine.control_hz")?;
    plant.learner_hz = get(&cfg, "refine.learner_hz")?;
    if get::<bool>(&cfg, "refine.plant_noise")? {
        plant.noise = Some(race.noise);
    }
    plant.validate().map_err(usage)?;
    let deterministic: bool = get(&cfg, "refine.deterministic")?;
    let track = load_track(&cfg)?;
    let ck = load_checkpoint(&init)?;
    let out = out_dir(&a.common.out, "runs/refine");
    write_resolved(&out, &cfg)?;

    let outcome = if deterministic {
        let schedule = Schedule::from_rates(plant.control_hz, plant.learner_hz).map_err(usage)?;
        deterministic_refine(&ck, track, &race, &plant, &rc, schedule)
    } else {
        run_refine(&ck, track, &race, &plant, &rc)
    }
    .map_err(runtime)?;
    let csv = refine_csv(&outcome.log);
    write_file(&out.join("refine_log.csv"), &csv)?;
    outcome
        .checkpoint
        .save(&out.join("checkpoint_final.bin"))
        .map_err(runtime)?;
    print!("{csv}");
    println!(
        "plant steps {}, transitions {}, updates {}, final snapshot v{}",
        outcome.plant_steps, outcome.transitions_pushed, outcome.updates, outcome.final_version
    );
    if let Some(msg) = &outcome.halted {
        eprintln!("warning: learner halted ({msg}); the plant kept driving the last snapshot");
    }
    println!("outputs in {}", out.display());
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<(), Failure> {
    let layers = Layers::new(
        &a.common,
        vec![
            ("bench.env", a.env),
            ("reg.kind", a.reg),
            ("reg.value", a.value),
            ("bench.grid", a.grid.then(|| "true".to_string())),
            ("bench.seeds", a.seeds.map(|v| v.to_string())),
            ("bench.steps", a.steps.map(|v| v.to_string())),
            ("bench.episodes", a.episodes.map(|v| v.to_string())),
        ],
    )?;
    let env_name = layers
        .peek("bench.env")
        .unwrap_or_else(|| "pendulum".into());
    let cfg = layers.resolve(bench_defaults(&env_name)?)?;
    let kind: BenchKind = env_name.parse().map_err(usage)?;
    let base: u64 = get(&cfg, "seed")?;
    let n_seeds: usize = get(&cfg, "bench.seeds")?;
    if n_seeds == 0 {
        return Err(usage("bench.seeds must be at least 1"));
    }
    let cells = if get::<bool>(&cfg, "bench.grid")? {
        BenchKind::grid()
    } else {
        vec![RegularizerSpec::from_config(&cfg, 1).map_err(usage)?]
    };
    let spec = SweepSpec {
        cells,
        steps: get(&cfg, "bench.steps")?,
        eval_episodes: get(&cfg, "bench.episodes")?,
        sac: SacConfig::from_config(&cfg).map_err(usage)?,
        ..SweepSpec::new(kind, Vec::new(), (base..base + n_seeds as u64).collect())
    };
    let out = out_dir(&a.common.out, "runs/bench");
    write_resolved(&out, &cfg)?;
    let rows = run_sweep(&spec, Some(&out)).map_err(runtime)?;
    let csv = sweep_csv(&rows);
    write_file(&out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn generated(kind: &str, scale: f64, half_width: f64, ds: f64) -> Result<Track, Failure> {
    let kind: TrackKind = kind.parse().map_err(usage)?;
    Track::generate(kind, scale, half_width, ds).map_err(usage)
}

pub fn track_gen(a: TrackGenArgs) -> Result<(), Failure> {
    let track = generated(&a.kind, a.scale, a.half_width, a.ds)?;
    match a.out {
        Some(p) => {
            track.save(&p).map_err(runtime)?;
            println!(
                "wrote {} ({} samples, length {:.3} m)",
                p.display(),
                track.num_samples(),
                track.length()
            );
        }
        None => print!("{}", track.to_csv()),
    }
    Ok(())
}

pub fn track_info(a: TrackInfoArgs) -> Result<(), Failure> {
    let track = match &a.file {
        Some(p) => {
            if !p.exists() {
                return Err(runtime(format!("track file {} not found", p.display())));
            }
            Track::load(p).map_err(cfg_err)?
        }
        None => generated(
            &a.kind,
            a.scale,
            a.half_width,
            racesac_core::track::DEFAULT_MAX_SPACING,
        )?,
    };
    let n = track.num_samples();
    let widths: Vec<f64> = (0..n).map(|i| 2.0 * track.sample(i).2).collect();
    let mean_w = widths.iter().sum::<f64>() / n as f64;
    let max_k = track
        .sample_curvatures()
        .iter()
        .fold(0.0f64, |m, k| m.max(k.abs()));
    println!("length        {:.4} m", track.length());
    println!("samples       {n}");
    println!(
        "turns         {} curvature sign changes",
        track.curvature_sign_changes(1e-3)
    );
    println!("max |kappa|   {max_k:.4} 1/m");
    println!(
        "width         min {:.4} m, mean {:.4} m, max {:.4} m",
        2.0 * track.min_half_width(),
        mean_w,
        2.0 * track.max_half_width()
    );
    Ok(())
}
