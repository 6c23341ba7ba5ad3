//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! The race training criterion takes hours on one core and only runs when
//! `RACESAC_ACCEPT_RACE=1` is set.

mod common;

use std::sync::Arc;
use std::time::Instant;

use racesac_core::classic::{train_and_evaluate, BenchKind};
use racesac_core::env::{step, DELTA_RATE_MAX, D_RATE_MAX};
use racesac_core::metrics::{evaluate_policy, EvalOptions};
use racesac_core::refine::{
    deterministic_refine, lap_time_trend, make_plant, refine, snapshot_version,
    Perturbation as PlantPerturbation, RefineConfig, Schedule,
};
use racesac_core::sac::{log_csv, regularized_q, train, ReplayBuffer};
use racesac_core::track::{wrap_angle, FrenetPose};
use racesac_core::vehicle::{
    dynamics_rhs, estimate_forces_from_log, integrate_step, randomized_rhs, tire_and_drive_forces,
    NoiseSpec, Perturbation, VelocityMask, DUTY_MAX, DUTY_MIN, STEER_MAX,
};
use racesac_core::{
    Action, BodyState, Environment, MdpState, PhysicalInputs, RaceConfig, RaceEnv, RegularizerSpec,
    SacAgent, SacConfig, Track, TrackKind, Transition, VehicleParams,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::*;

/// `None` means the criterion was not run.
type Verdict = Option<bool>;

fn report(n: usize, ok: bool, detail: String, t: Instant) -> Verdict {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!(
        "criterion {n:>2}: {tag}  {detail}  [{:.1}s]",
        t.elapsed().as_secs_f64()
    );
    Some(ok)
}

fn majority(flags: &[bool]) -> bool {
    flags.iter().filter(|f| **f).count() * 3 >= flags.len() * 2
}

fn c1_gradients() -> Verdict {
    let t = Instant::now();
    let all = all_gradient_instances();
    let (worst_name, worst) = all
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n, e)| (n.clone(), *e))
        .unwrap();
    let ok = all.len() >= 20 && worst < TOL && t.elapsed().as_secs() < 60;
    report(
        1,
        ok,
        format!(
            "{} instances, worst relative error {worst:.1e} ({worst_name})",
            all.len()
        ),
        t,
    )
}

fn c2_frenet() -> Verdict {
    let t = Instant::now();
    let mut r = rng(2);
    let (mut worst_pos, mut worst_ang) = (0.0f64, 0.0f64);
    for kind in [TrackKind::Circle, TrackKind::Oval, TrackKind::PaperLike] {
        let track = Track::generate(kind, 1.0, 0.2, 0.01).unwrap();
        for _ in 0..1000 {
            let p = r.gen_range(0.0..track.length());
            let pose = FrenetPose {
                p,
                n: r.gen_range(-1.0..1.0) * track.half_width_at(p),
                mu: r.gen_range(-3.1..3.1),
            };
            let (x, y, psi) = track.frenet_to_cartesian(&pose).unwrap();
            let back = track.cartesian_to_frenet(x, y, psi, None).pose;
            let (x2, y2, _) = track.frenet_to_cartesian(&back).unwrap();
            worst_pos = worst_pos
                .max((x2 - x).hypot(y2 - y))
                .max(track.progress_delta(back.p, pose.p).abs())
                .max((back.n - pose.n).abs());
            worst_ang = worst_ang.max(wrap_angle(back.mu - pose.mu).abs());
        }
    }
    let ok = worst_pos < 1e-6 && worst_ang < 1e-6;
    report(
        2,
        ok,
        format!("3000 poses, worst {worst_pos:.1e} m / {worst_ang:.1e} rad"),
        t,
    )
}

fn random_buffer(n: usize, r: &mut ChaCha8Rng) -> ReplayBuffer {
    let mut buf = ReplayBuffer::new(n, 3, 2).unwrap();
    for i in 0..n {
        buf.push(&Transition {
            obs: (0..3).map(|_| r.gen_range(-1.0..1.0)).collect(),
            action: (0..2).map(|_| r.gen_range(-1.0..1.0)).collect(),
            reward: r.gen_range(-1.0..1.0),
            next_obs: (0..3).map(|_| r.gen_range(-1.0..1.0)).collect(),
            done: i % 17 == 0,
            truncated: false,
        })
        .unwrap();
    }
    buf
}

fn agent_updates(reg: &RegularizerSpec) -> Vec<u8> {
    let cfg = SacConfig {
        hidden: vec![16, 16],
        batch_size: 32,
        ..SacConfig::default()
    };
    let mut r = rng(31);
    let buf = random_buffer(500, &mut r);
    let mut agent = SacAgent::new(3, 2, &cfg, reg, &mut r).unwrap();
    for _ in 0..40 {
        let batch = buf.sample(32, &mut r).unwrap();
        agent.update(&batch, &mut r).unwrap();
    }
    agent.to_checkpoint().to_bytes()
}

fn pendulum_run(reg: &RegularizerSpec) -> (Vec<u8>, String) {
    let cfg = SacConfig {
        hidden: vec![16, 16],
        batch_size: 32,
        warmup_steps: 200,
        ..BenchKind::Pendulum.default_sac()
    };
    let mut env = BenchKind::Pendulum.make(4);
    let out = train(env.as_mut(), None, &cfg, reg, 600, 4, None).unwrap();
    let log = log_csv(&out.log);
    (out.agent.to_checkpoint().to_bytes(), log)
}

fn c3_q_m_identity() -> Verdict {
    let t = Instant::now();
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let critic = racesac_core::nn::Mlp::new(&[5, 12, 12, 1], &mut r);
        let s: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..2).map(|_| r.gen_range(-1.0..1.0)).collect();
        let m: Vec<f64> = (0..2).map(|_| r.gen_range(0.0..100.0)).collect();
        let input: Vec<f64> = s.iter().chain(&a).copied().collect();
        let q = critic.forward(&input).unwrap()[0];
        let direct = -(m[0] * a[0] * a[0] + m[1] * a[1] * a[1]) + q;
        worst = worst.max((regularized_q(q, &a, &m) - direct).abs() / (1.0 + direct.abs()));
    }
    let base = agent_updates(&RegularizerSpec::None);
    let zeros = [
        RegularizerSpec::PolicyOutput(vec![0.0, 0.0]),
        RegularizerSpec::PolicyWeightL2(0.0),
        RegularizerSpec::RewardAction(vec![0.0, 0.0]),
    ];
    let agents_equal = zeros.iter().all(|z| agent_updates(z) == base);
    let (base_ck, base_log) = pendulum_run(&RegularizerSpec::None);
    let trains_equal = [
        RegularizerSpec::PolicyOutput(vec![0.0]),
        RegularizerSpec::PolicyWeightL2(0.0),
        RegularizerSpec::RewardAction(vec![0.0]),
    ]
    .iter()
    .all(|z| pendulum_run(z) == (base_ck.clone(), base_log.clone()));
    let ok = worst <= 4.0 * f64::EPSILON && agents_equal && trains_equal;
    report(
        3,
        ok,
        format!(
            "identity worst {worst:.1e}; zero regularizers bit-identical: updates {agents_equal}, training {trains_equal}"
        ),
        t,
    )
}

/// A state on the oval's first straight, which runs from p = 0 to 2 m.
fn straight_state(n: f64, vx: f64) -> MdpState {
    MdpState {
        p: 0.5,
        n,
        vx,
        d: 0.4,
        ..MdpState::default()
    }
}

/// Steering feedback around the curvature feedforward, constant duty.
fn follow(track: &Track, s: &MdpState, duty: f64, dt: f64) -> Action {
    let target =
        (track.curvature_at(s.p) * 0.062 - 4.0 * s.n - 1.5 * s.mu).clamp(-STEER_MAX, STEER_MAX);
    Action {
        d_rate: (duty - s.d) / dt,
        delta_rate: (target - s.delta) / dt,
    }
    .clipped()
}

fn c4_rewards() -> Verdict {
    let t = Instant::now();
    let oval = Track::generate(TrackKind::Oval, 1.0, 0.2, 0.01).unwrap();
    let cfg = RaceConfig {
        randomize: false,
        ..RaceConfig::default()
    };
    let zero = Perturbation::ZERO;
    let mut notes = Vec::new();

    let s = straight_state(0.0, 3.0);
    let r = step(&oval, &s, Action::default(), &cfg, &zero);
    let dp = oval.progress_delta(r.next_state.p, s.p);
    let progress_ok = r.reward == dp && (dp - 0.03).abs() < 1e-3 && !r.done;
    notes.push(format!("progress step {:.4} -> reward {:.4}", dp, r.reward));

    let edge = oval.half_width_at(0.5) - cfg.reward.safety_margin + 0.01;
    let r = step(
        &oval,
        &straight_state(edge, 1.0),
        Action::default(),
        &cfg,
        &zero,
    );
    let violation_ok = r.reward == -0.01 && !r.done && r.info.track_violation;

    let beyond = 2.0 * oval.half_width_at(0.5) + 0.01;
    let r = step(
        &oval,
        &straight_state(beyond, 1.0),
        Action::default(),
        &cfg,
        &zero,
    );
    let done_ok = r.done && r.info.terminated_off_track;

    let track = Arc::new(Track::generate(TrackKind::PaperLike, 1.0, 0.2, 0.02).unwrap());
    let mut env = RaceEnv::new(Arc::clone(&track), RaceConfig::default(), 4).unwrap();
    let mut r4 = rng(4);
    let mut rates_ok = true;
    env.reset();
    for _ in 0..10_000 {
        let before = *env.state();
        let a = [r4.gen_range(-1.5..1.5), r4.gen_range(-1.5..1.5)];
        let st = env.step(&a);
        let after = *env.state();
        rates_ok &= (after.d - before.d).abs() <= D_RATE_MAX * 0.01 + 1e-12
            && (after.delta - before.delta).abs() <= DELTA_RATE_MAX * 0.01 + 1e-12
            && (DUTY_MIN..=DUTY_MAX).contains(&after.d)
            && after.delta.abs() <= STEER_MAX;
        if st.done || st.fault {
            env.reset();
        }
    }

    // one lap of a steering controller; rewards sum to L plus the overshoot
    let mut s = MdpState {
        p: 1.0,
        vx: 1.0,
        d: 0.3,
        ..MdpState::default()
    };
    let start = s.p;
    let (mut sum, mut penalties, mut travelled) = (0.0, 0, 0.0);
    for _ in 0..20_000 {
        let r = step(&track, &s, follow(&track, &s, 0.3, 0.01), &cfg, &zero);
        if r.info.track_violation || r.info.ellipse_violation {
            penalties += 1;
        } else {
            sum += r.reward;
        }
        travelled += track.progress_delta(r.next_state.p, s.p);
        s = r.next_state;
        if travelled >= track.length() || r.done {
            break;
        }
    }
    let overshoot = track.progress_delta(s.p, start);
    let lap_err = (sum - (track.length() + overshoot)).abs();
    let lap_ok = penalties == 0 && travelled >= track.length() && lap_err < 1e-6;
    notes.push(format!(
        "lap sum error {lap_err:.1e} m over L = {:.4}",
        track.length()
    ));

    let ok = progress_ok && violation_ok && done_ok && rates_ok && lap_ok;
    report(
        4,
        ok,
        format!(
            "progress {progress_ok}, violation {violation_ok}, off-track {done_ok}, rate limits {rates_ok}, lap {lap_ok}; {}",
            notes.join("; ")
        ),
        t,
    )
}

fn c5_envelope() -> Verdict {
    let t = Instant::now();
    let params = VehicleParams::default();
    let noise = NoiseSpec::default();
    let mut r = rng(5);
    let mut inside = true;
    let mut identical = true;
    for _ in 0..100_000 {
        let s = BodyState {
            psi: r.gen_range(-3.0..3.0),
            vx: r.gen_range(0.0..4.0),
            vy: r.gen_range(-0.5..0.5),
            omega: r.gen_range(-5.0..5.0),
            ..BodyState::default()
        };
        let u = PhysicalInputs {
            d: r.gen_range(DUTY_MIN..DUTY_MAX),
            delta: r.gen_range(-STEER_MAX..STEER_MAX),
        };
        let nominal = dynamics_rhs(&s, &u, &params);
        let eps = noise.sample(&mut r);
        let k = randomized_rhs(&nominal, &eps, VelocityMask::ALL);
        let within = |v: f64, nom: f64, b: f64| {
            let (a, c) = (nom * (1.0 - b), nom * (1.0 + b));
            v >= a.min(c) && v <= a.max(c)
        };
        inside &= within(k.vx, nominal.vx, noise.vx)
            && within(k.vy, nominal.vy, noise.vy)
            && within(k.omega, nominal.omega, noise.omega)
            && k.x == nominal.x
            && k.y == nominal.y
            && k.psi == nominal.psi;
        let quiet = NoiseSpec::ZERO.sample(&mut r);
        identical &= randomized_rhs(&nominal, &quiet, VelocityMask::ALL) == nominal;
    }
    report(
        5,
        inside && identical,
        format!("1e5 samples inside envelope {inside}, zero noise nominal {identical}"),
        t,
    )
}

fn criterion_bench(
    kind: BenchKind,
    reg: &RegularizerSpec,
    seeds: &[u64],
) -> Vec<racesac_core::classic::CellSeed> {
    seeds
        .iter()
        .map(|&s| train_and_evaluate(kind, &kind.default_sac(), reg, 60_000, 100, s, None).unwrap())
        .collect()
}

const SEEDS: [u64; 3] = [0, 1, 2];

fn c6_c7_pendulum() -> (Verdict, Verdict) {
    let t = Instant::now();
    let vanilla = criterion_bench(BenchKind::Pendulum, &RegularizerSpec::None, &SEEDS);
    let rets: Vec<String> = vanilla
        .iter()
        .map(|c| format!("{:.0}", c.avg_reward))
        .collect();
    let c6 = report(
        6,
        majority(
            &vanilla
                .iter()
                .map(|c| c.avg_reward >= -200.0)
                .collect::<Vec<_>>(),
        ),
        format!(
            "vanilla returns {} (need >= -200 in 2 of 3)",
            rets.join(", ")
        ),
        t,
    );
    let t = Instant::now();
    let smooth = criterion_bench(
        BenchKind::Pendulum,
        &RegularizerSpec::PolicyOutput(vec![5.0]),
        &SEEDS,
    );
    let flags: Vec<bool> = vanilla
        .iter()
        .zip(&smooth)
        .map(|(v, s)| s.avg_adot_rms < 0.5 * v.avg_adot_rms && s.avg_reward >= -250.0)
        .collect();
    let cells: Vec<String> = vanilla
        .iter()
        .zip(&smooth)
        .map(|(v, s)| {
            format!(
                "adot {:.2} vs {:.2}, return {:.0}",
                s.avg_adot_rms, v.avg_adot_rms, s.avg_reward
            )
        })
        .collect();
    let c7 = report(
        7,
        majority(&flags),
        format!("output(5) vs vanilla: {}", cells.join("; ")),
        t,
    );
    (c6, c7)
}

fn c8_mountain_car() -> Verdict {
    let t = Instant::now();
    let cells = criterion_bench(
        BenchKind::MountainCar,
        &RegularizerSpec::PolicyWeightL2(1e-4),
        &SEEDS,
    );
    let rets: Vec<String> = cells
        .iter()
        .map(|c| format!("{:.1}", c.avg_reward))
        .collect();
    report(
        8,
        majority(
            &cells
                .iter()
                .map(|c| c.avg_reward >= 90.0)
                .collect::<Vec<_>>(),
        ),
        format!(
            "weight(1e-4) returns {} (need >= 90 in 2 of 3)",
            rets.join(", ")
        ),
        t,
    )
}

fn race_track() -> Arc<Track> {
    Arc::new(Track::generate(TrackKind::PaperLike, 1.0, 0.2, 0.02).unwrap())
}

/// Trains on the paper-like track with randomization on and drives ten
/// evaluation laps with the mean action.
fn race_policy(
    reg: &RegularizerSpec,
    sac: &SacConfig,
    steps: usize,
    seed: u64,
) -> racesac_core::metrics::EvalReport {
    let track = race_track();
    let cfg = RaceConfig::default();
    let mut env = RaceEnv::new(Arc::clone(&track), cfg.clone(), seed).unwrap();
    let out = train(&mut env, None, sac, reg, steps, seed, None).unwrap();
    evaluate_policy(&out.agent.policy, track, &cfg, &EvalOptions::default()).unwrap()
}

fn c9_race() -> Verdict {
    if std::env::var("RACESAC_ACCEPT_RACE").as_deref() != Ok("1") {
        println!("criterion  9: NOT RUN  two 2e6-step race trainings; set RACESAC_ACCEPT_RACE=1");
        return None;
    }
    let t = Instant::now();
    let sac = racesac_core::env::race_sac_defaults();
    let out = race_policy(
        &RegularizerSpec::PolicyOutput(vec![50.0, 10.0]),
        &sac,
        2_000_000,
        0,
    );
    let van = race_policy(&RegularizerSpec::None, &sac, 2_000_000, 0);
    let dd = |r: &racesac_core::metrics::EvalReport| r.aggregate.map(|a| a.d_ddot_rms);
    let clean = out.clean(10);
    let smoother = match (dd(&out), dd(&van)) {
        (Some(a), Some(b)) => a < b,
        _ => false,
    };
    report(
        9,
        clean && smoother,
        format!(
            "output-reg laps {} dnf {}, d_ddot_rms {:?} vs vanilla {:?} (vanilla laps {})",
            out.consecutive_laps,
            out.dnf,
            dd(&out),
            dd(&van),
            van.consecutive_laps
        ),
        t,
    )
}

fn c10_refine() -> Verdict {
    let t = Instant::now();
    let track = race_track();
    let race = RaceConfig::default();
    let sac = SacConfig {
        hidden: vec![32, 32],
        batch_size: 64,
        buffer_capacity: 20_000,
        ..SacConfig::default()
    };
    let reg = RegularizerSpec::PolicyOutput(vec![50.0, 10.0]);
    let fresh = SacAgent::new(8, 2, &sac, &reg, &mut rng(10))
        .unwrap()
        .to_checkpoint();
    let plant = make_plant(&race.params, &PlantPerturbation::uniform(0.2), 10).unwrap();
    let cfg = RefineConfig {
        sac: sac.clone(),
        reg: reg.clone(),
        steps: 20_000,
        window: 2_000,
        warmup: 500,
        seed: 10,
        ..RefineConfig::default()
    };

    let det = deterministic_refine(
        &fresh,
        Arc::clone(&track),
        &race,
        &plant,
        &cfg,
        Schedule::new(5, 2).unwrap(),
    )
    .unwrap();
    let conserved = det.transitions_pushed as usize + det.faults == det.plant_steps
        && det.buffer_len == (det.transitions_pushed as usize).min(sac.buffer_capacity);
    let versioned = det.final_version == snapshot_version(det.updates, 100)
        && det.final_version == 1 + det.updates / 100
        && det.log.windows(2).all(|w| w[0].version <= w[1].version);

    let threaded_cfg = RefineConfig {
        steps: 100_000,
        window: 10_000,
        ..cfg.clone()
    };
    let live = refine(&fresh, Arc::clone(&track), &race, &plant, &threaded_cfg).unwrap();
    let atomic = live.handoffs >= 100_000 && live.halted.is_none();

    let trend = directional_refine();
    let improved = majority(
        &trend
            .iter()
            .map(|x| matches!(x, Some((a, b)) if b <= a))
            .collect::<Vec<_>>(),
    );
    let trend_txt: Vec<String> = trend
        .iter()
        .map(|x| match x {
            Some((a, b)) => format!("{a:.2}s -> {b:.2}s"),
            None => "no laps".into(),
        })
        .collect();
    report(
        10,
        conserved && versioned && atomic && improved,
        format!(
            "conserved {conserved}, versions {versioned} ({} updates -> v{}), {} verified handoffs, lap time first/last 10%: {}",
            det.updates,
            det.final_version,
            live.handoffs,
            trend_txt.join(", ")
        ),
        t,
    )
}

/// Output regularizer used for the refinement checkpoint. The race default
/// diag(50, 10) collapses the mean rates to zero and never completes a lap.
const REFINE_M: [f64; 2] = [0.5, 0.1];
const PRETRAIN_STEPS: usize = 200_000;
const REFINE_STEPS: usize = 100_000;

/// Mean lap time over the first and last tenth of a refinement run on a
/// 20%-perturbed plant, one entry per seed.
fn directional_refine() -> Vec<Option<(f64, f64)>> {
    let track = race_track();
    let race = RaceConfig::default();
    let sac = racesac_core::env::race_sac_defaults();
    let reg = RegularizerSpec::PolicyOutput(REFINE_M.to_vec());
    let mut env = RaceEnv::new(Arc::clone(&track), race.clone(), 0).unwrap();
    let pre = train(&mut env, None, &sac, &reg, PRETRAIN_STEPS, 0, None).unwrap();
    let ck = pre.agent.to_checkpoint();
    SEEDS
        .iter()
        .map(|&seed| {
            let plant = make_plant(&race.params, &PlantPerturbation::uniform(0.2), seed).unwrap();
            let cfg = RefineConfig {
                sac: sac.clone(),
                reg: reg.clone(),
                steps: REFINE_STEPS,
                window: REFINE_STEPS / 20,
                seed,
                ..RefineConfig::default()
            };
            let out = deterministic_refine(
                &ck,
                Arc::clone(&track),
                &race,
                &plant,
                &cfg,
                Schedule::new(5, 2).unwrap(),
            )
            .unwrap();
            lap_time_trend(&out.log, 0.1)
        })
        .collect()
}

fn c11_force_inversion() -> Verdict {
    let t = Instant::now();
    let params = VehicleParams::default();
    let noise = NoiseSpec::default();
    let mut r = rng(11);
    // 100 Hz log of 1 ms Euler substeps under smooth inputs
    let log = |noisy: bool, r: &mut ChaCha8Rng| {
        let mut s = BodyState {
            vx: 1.5,
            ..BodyState::default()
        };
        let (mut states, mut inputs) = (Vec::new(), Vec::new());
        for i in 0..800 {
            let tt = i as f64 * 0.01;
            let u = PhysicalInputs {
                d: 0.45 + 0.1 * (std::f64::consts::TAU * 0.5 * tt).sin(),
                delta: 0.2 * (std::f64::consts::TAU * 0.3 * tt).sin(),
            };
            states.push(s);
            inputs.push(u);
            let eps = if noisy {
                noise.sample(r)
            } else {
                Perturbation::ZERO
            };
            for _ in 0..10 {
                s = integrate_step(&s, &u, &params, 0.001, &eps).unwrap();
            }
        }
        (states, inputs)
    };
    let residual_sd = |states: &[BodyState], inputs: &[PhysicalInputs]| {
        let est = estimate_forces_from_log(states, inputs, &params, 0.01).unwrap();
        let res: Vec<f64> = est[1..est.len() - 1]
            .iter()
            .map(|f| f.fy_front - params.front.force(f.alpha_front))
            .collect();
        let mean = res.iter().sum::<f64>() / res.len() as f64;
        (res.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / res.len() as f64).sqrt()
    };

    let (states, inputs) = log(false, &mut r);
    let est = estimate_forces_from_log(&states, &inputs, &params, 0.01).unwrap();
    let (mut err, mut norm) = (0.0, 0.0);
    for i in 1..states.len() - 1 {
        let f = tire_and_drive_forces(&states[i], &inputs[i], &params);
        for (a, b) in [
            (est[i].fy_front, f.fy_front),
            (est[i].fy_rear, f.fy_rear),
            (est[i].fx, f.fx),
        ] {
            err += (a - b).powi(2);
            norm += b * b;
        }
    }
    let rel_rms = (err / norm).sqrt();
    let clean_sd = residual_sd(&states, &inputs);
    let (ns, ni) = log(true, &mut r);
    let noisy_sd = residual_sd(&ns, &ni);
    let ok = rel_rms < 0.01 && noisy_sd >= 3.0 * clean_sd;
    report(
        11,
        ok,
        format!(
            "noiseless relative RMS {:.2}%, front scatter sd {noisy_sd:.4} N noisy vs {clean_sd:.4} N clean ({:.0}x)",
            100.0 * rel_rms,
            noisy_sd / clean_sd
        ),
        t,
    )
}

/// `RACESAC_ACCEPT_ONLY=4,11` restricts the run to the listed criteria.
fn selected() -> Option<Vec<usize>> {
    let list = std::env::var("RACESAC_ACCEPT_ONLY").ok()?;
    Some(
        list.split(',')
            .filter_map(|x| x.trim().parse().ok())
            .collect(),
    )
}

fn main() {
    let only = selected();
    let wanted = |n: usize| only.as_ref().is_none_or(|l| l.contains(&n));
    let mut verdicts: Vec<Verdict> = Vec::new();
    let quick: [(usize, fn() -> Verdict); 5] = [
        (1, c1_gradients),
        (2, c2_frenet),
        (3, c3_q_m_identity),
        (4, c4_rewards),
        (5, c5_envelope),
    ];
    for (n, f) in quick {
        if wanted(n) {
            verdicts.push(f());
        }
    }
    if wanted(6) || wanted(7) {
        let (c6, c7) = c6_c7_pendulum();
        verdicts.extend([c6, c7]);
    }
    let rest: [(usize, fn() -> Verdict); 4] = [
        (8, c8_mountain_car),
        (9, c9_race),
        (10, c10_refine),
        (11, c11_force_inversion),
    ];
    for (n, f) in rest {
        if wanted(n) {
            verdicts.push(f());
        }
    }
    let failed = verdicts.iter().filter(|v| **v == Some(false)).count();
    let skipped = verdicts.iter().filter(|v| v.is_none()).count();
    println!(
        "acceptance: {} passed, {failed} failed, {skipped} not run",
        verdicts.len() - failed - skipped
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
