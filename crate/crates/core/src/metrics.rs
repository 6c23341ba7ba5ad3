//! Lap timing, wall-proximity time and RMS smoothness of the inputs.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{Environment, MdpState, RaceConfig, RaceEnv};
use crate::error::{validation, Result};
use crate::nn::GaussianPolicy;
use crate::track::Track;

/// Distance to the wall [m] below which time counts as a violation.
pub const WALL_THRESHOLD: f64 = 0.02;

/// One completed lap. Boundaries are fractional sample indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lap {
    pub start: f64,
    pub end: f64,
    pub time: f64,
}

/// Upward crossings of the start line. Each crossing of the next multiple of
/// `L` by the unwrapped progress closes a lap; driving backwards over the
/// line and forward again does not count twice.
pub fn detect_laps(states: &[MdpState], track: &Track, dt: f64) -> Vec<Lap> {
    if states.len() < 2 {
        return Vec::new();
    }
    let l = track.length();
    let mut s = states[0].p;
    let mut next_level = (s / l).floor() + 1.0;
    let mut crossings = Vec::new();
    for i in 0..states.len() - 1 {
        let ds = track.progress_delta(states[i + 1].p, states[i].p);
        let s_next = s + ds;
        let line = next_level * l;
        if s < line && s_next >= line {
            crossings.push(i as f64 + (line - s) / ds);
            next_level += 1.0;
        }
        s = s_next;
    }
    crossings
        .windows(2)
        .map(|w| Lap {
            start: w[0],
            end: w[1],
            time: (w[1] - w[0]) * dt,
        })
        .collect()
}

/// Overlap of sample `i`'s hold interval `[i, i+1)` with `[start, end]`.
fn hold_weight(i: usize, start: f64, end: f64) -> f64 {
    let lo = (i as f64).max(start);
    let hi = (i as f64 + 1.0).min(end);
    (hi - lo).max(0.0)
}

/// Time [s] within the lap spent closer than `threshold` to the wall.
pub fn violation_time(
    states: &[MdpState],
    track: &Track,
    lap: &Lap,
    threshold: f64,
    dt: f64,
) -> f64 {
    let first = lap.start.floor().max(0.0) as usize;
    let last = (lap.end.ceil() as usize).min(states.len());
    let mut t = 0.0;
    for (i, s) in states.iter().enumerate().take(last).skip(first) {
        if track.half_width_at(s.p) - s.n.abs() < threshold {
            t += hold_weight(i, lap.start, lap.end) * dt;
        }
    }
    t
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut acc, mut n) = (0.0, 0usize);
    for x in xs {
        acc += x * x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (acc / n as f64).sqrt()
    }
}

/// RMS of the first difference quotient `(x[i+1] - x[i]) / dt`.
pub fn derivative_rms(xs: &[f64], dt: f64) -> f64 {
    rms(xs.windows(2).map(|w| (w[1] - w[0]) / dt))
}

/// RMS of the second difference quotient `(x[i+1] - 2 x[i] + x[i-1]) / dt^2`.
pub fn second_derivative_rms(xs: &[f64], dt: f64) -> f64 {
    rms(xs
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]) / (dt * dt)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Smoothness {
    pub d_rms: f64,
    pub delta_rms: f64,
    pub d_dot_rms: f64,
    pub delta_dot_rms: f64,
    pub d_ddot_rms: f64,
    pub delta_ddot_rms: f64,
}

/// Six RMS values of the duty and steering series sampled every `dt`.
pub fn smoothness(d: &[f64], delta: &[f64], dt: f64) -> Result<Smoothness> {
    if d.len() < 3 || delta.len() < 3 {
        return Err(validation(format!(
            "smoothness needs at least 3 samples, got {} and {}",
            d.len(),
            delta.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(validation("smoothness needs dt > 0"));
    }
    Ok(Smoothness {
        d_rms: rms(d.iter().copied()),
        delta_rms: rms(delta.iter().copied()),
        d_dot_rms: derivative_rms(d, dt),
        delta_dot_rms: derivative_rms(delta, dt),
        d_ddot_rms: second_derivative_rms(d, dt),
        delta_ddot_rms: second_derivative_rms(delta, dt),
    })
}

/// Per-lap metrics, SI units.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    pub lap_time: f64,
    pub violation_time: f64,
    pub d_rms: f64,
    pub delta_rms: f64,
    pub d_dot_rms: f64,
    pub delta_dot_rms: f64,
    pub d_ddot_rms: f64,
    pub delta_ddot_rms: f64,
}

impl MetricsRecord {
    pub const FIELDS: [&'static str; 8] = [
        "lap_time",
        "violation_time",
        "d_rms",
        "delta_rms",
        "d_dot_rms",
        "delta_dot_rms",
        "d_ddot_rms",
        "delta_ddot_rms",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.lap_time,
            self.violation_time,
            self.d_rms,
            self.delta_rms,
            self.d_dot_rms,
            self.delta_dot_rms,
            self.d_ddot_rms,
            self.delta_ddot_rms,
        ]
    }

    fn from_values(v: [f64; 8]) -> Self {
        MetricsRecord {
            lap_time: v[0],
            violation_time: v[1],
            d_rms: v[2],
            delta_rms: v[3],
            d_dot_rms: v[4],
            delta_dot_rms: v[5],
            d_ddot_rms: v[6],
            delta_ddot_rms: v[7],
        }
    }

    pub fn mean(records: &[MetricsRecord]) -> Option<MetricsRecord> {
        if records.is_empty() {
            return None;
        }
        let mut acc = [0.0; 8];
        for r in records {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        Some(Self::from_values(acc.map(|a| a / records.len() as f64)))
    }
}

/// Metrics of every complete lap in a trajectory.
pub fn lap_metrics(states: &[MdpState], track: &Track, dt: f64) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::new();
    for lap in detect_laps(states, track, dt) {
        let first = lap.start.ceil() as usize;
        let last = (lap.end.floor() as usize).min(states.len() - 1);
        let d: Vec<f64> = states[first..=last].iter().map(|s| s.d).collect();
        let delta: Vec<f64> = states[first..=last].iter().map(|s| s.delta).collect();
        let sm = smoothness(&d, &delta, dt)?;
        out.push(MetricsRecord {
            lap_time: lap.time,
            violation_time: violation_time(states, track, &lap, WALL_THRESHOLD, dt),
            d_rms: sm.d_rms,
            delta_rms: sm.delta_rms,
            d_dot_rms: sm.d_dot_rms,
            delta_dot_rms: sm.delta_dot_rms,
            d_ddot_rms: sm.d_ddot_rms,
            delta_ddot_rms: sm.delta_ddot_rms,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub n_laps: usize,
    pub deterministic: bool,
    pub seed: u64,
    /// Hard cap on simulated steps.
    pub step_budget: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            n_laps: 10,
            deterministic: true,
            seed: 0,
            step_budget: 60_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub laps: Vec<MetricsRecord>,
    /// Off-track terminations.
    pub dnf: usize,
    /// Laps completed before the first off-track termination.
    pub consecutive_laps: usize,
    pub aggregate: Option<MetricsRecord>,
    pub steps: usize,
}

impl EvalReport {
    /// True when the requested number of laps was driven without leaving the track.
    pub fn clean(&self, n_laps: usize) -> bool {
        self.dnf == 0 && self.laps.len() >= n_laps
    }

    pub fn csv(&self) -> String {
        let mut out = format!("lap,{},dnf\n", MetricsRecord::FIELDS.join(","));
        let row = |out: &mut String, label: String, r: &MetricsRecord, dnf: usize| {
            let vals: Vec<String> = r.values().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{label},{},{dnf}", vals.join(","));
        };
        for (i, r) in self.laps.iter().enumerate() {
            row(&mut out, (i + 1).to_string(), r, 0);
        }
        match &self.aggregate {
            Some(a) => row(&mut out, "mean".into(), a, self.dnf),
            None => {
                let _ = writeln!(out, "mean,{},{}", vec!["-"; 8].join(","), self.dnf);
            }
        }
        out
    }
}

/// Drives the policy continuously (no episode cap) until `n_laps` laps are
/// complete or the step budget runs out. An off-track termination counts as
/// a DNF, drops the unfinished lap and restarts from a fresh reset.
pub fn evaluate_policy(
    policy: &GaussianPolicy,
    track: Arc<Track>,
    cfg: &RaceConfig,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let mut env = RaceEnv::new(Arc::clone(&track), cfg.clone(), opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let dt = cfg.reward.dt;
    let mut report = EvalReport {
        laps: Vec::new(),
        dnf: 0,
        consecutive_laps: 0,
        aggregate: None,
        steps: 0,
    };
    let mut segment = vec![*env.state()];
    let mut obs = env.observe();
    let flush = |segment: &[MdpState], report: &mut EvalReport| -> Result<()> {
        report.laps.extend(lap_metrics(segment, &track, dt)?);
        Ok(())
    };
    // Unwrapped progress of the current segment and line crossings so far.
    let l = track.length();
    let mut unwrapped = segment[0].p;
    let mut next_level = (unwrapped / l).floor() + 1.0;
    let mut crossings = 0usize;
    while report.steps < opts.step_budget {
        let a = if opts.deterministic {
            policy.mean_action(&obs)?
        } else {
            policy.sample_action(&obs, &mut rng)?.0
        };
        let prev_p = env.state().p;
        let r = env.step(&a);
        report.steps += 1;
        segment.push(*env.state());
        obs = r.obs;
        if r.done {
            flush(&segment, &mut report)?;
            if report.dnf == 0 {
                report.consecutive_laps = report.laps.len();
            }
            report.dnf += 1;
            obs = env.reset();
            segment = vec![*env.state()];
            unwrapped = segment[0].p;
            next_level = (unwrapped / l).floor() + 1.0;
            crossings = 0;
            continue;
        }
        unwrapped += track.progress_delta(env.state().p, prev_p);
        if unwrapped >= next_level * l {
            next_level += 1.0;
            crossings += 1;
            if report.laps.len() + crossings.saturating_sub(1) >= opts.n_laps {
                break;
            }
        }
    }
    flush(&segment, &mut report)?;
    if report.dnf == 0 {
        report.consecutive_laps = report.laps.len();
    }
    report.laps.truncate(opts.n_laps);
    report.aggregate = MetricsRecord::mean(&report.laps);
    Ok(report)
}

/// Presentation scaling of each field in the text table.
const TABLE_ROWS: [(&str, f64); 8] = [
    ("Lap time [s]", 1.0),
    ("Constraint viol. [s x 1e-2]", 1e-2),
    ("d_rms [1e-1]", 1e-1),
    ("delta_rms [rad x 1e-1]", 1e-1),
    ("d_dot_rms [1/s]", 1.0),
    ("delta_dot_rms [rad/s]", 1.0),
    ("d_ddot_rms [1/s^2 x 1e1]", 1e1),
    ("delta_ddot_rms [rad/s^2 x 1e1]", 1e1),
];

/// Text table with one column per labelled record; values are divided by
/// the unit scale shown in the row name.
pub fn format_table(columns: &[(&str, Option<&MetricsRecord>)]) -> String {
    let mut out = format!("{:<32}", "");
    for (label, _) in columns {
        let _ = write!(out, "{label:>12}");
    }
    out.push('\n');
    for (row, (name, scale)) in TABLE_ROWS.iter().enumerate() {
        let _ = write!(out, "{name:<32}");
        for (_, rec) in columns {
            match rec {
                Some(r) => {
                    let _ = write!(out, "{:>12.1}", r.values()[row] / scale);
                }
                None => {
                    let _ = write!(out, "{:>12}", "DNF");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::TrackKind;
    use std::f64::consts::TAU;

    const DT: f64 = 0.01;

    fn ring() -> Track {
        Track::generate(TrackKind::Circle, 18.0 / TAU, 0.2, 0.01).unwrap()
    }

    /// Constant-speed pieces along the centerline, starting at `p0`.
    fn drive(track: &Track, p0: f64, pieces: &[(f64, usize)]) -> Vec<MdpState> {
        let mut s = p0;
        let mut out = vec![MdpState {
            p: p0,
            vx: pieces[0].0,
            ..MdpState::default()
        }];
        for &(v, n) in pieces {
            for _ in 0..n {
                s += v * DT;
                out.push(MdpState {
                    p: track.wrap_progress(s),
                    vx: v,
                    ..MdpState::default()
                });
            }
        }
        out
    }

    #[test]
    fn constant_speed_lap_time() {
        let t = ring();
        assert!((t.length() - 18.0).abs() < 1e-3);
        let states = drive(&t, 0.5, &[(2.0, 3000)]);
        let laps = detect_laps(&states, &t, DT);
        assert_eq!(laps.len(), 2);
        for lap in &laps {
            assert!((lap.time - t.length() / 2.0).abs() < 0.01);
        }
    }

    #[test]
    fn partial_lap_is_dropped_and_speeds_differ() {
        let t = ring();
        let l = t.length();
        // reach the line, one lap at 2 m/s, one at 3 m/s, then half a lap
        let to_line = ((l - 1.0) / (2.0 * DT)).round() as usize;
        let lap2 = (l / (2.0 * DT)).round() as usize;
        let lap3 = (l / (3.0 * DT)).round() as usize;
        let states = drive(&t, 1.0, &[(2.0, to_line + lap2), (3.0, lap3 + lap3 / 2)]);
        let laps = detect_laps(&states, &t, DT);
        assert_eq!(laps.len(), 2);
        assert!((laps[0].time - l / 2.0).abs() < 0.02, "{:?}", laps);
        assert!((laps[1].time - l / 3.0).abs() < 0.02, "{:?}", laps);
    }

    #[test]
    fn no_complete_lap_means_no_laps() {
        let t = ring();
        assert!(detect_laps(&drive(&t, 0.5, &[(2.0, 100)]), &t, DT).is_empty());
        assert!(detect_laps(&[], &t, DT).is_empty());
    }

    #[test]
    fn violation_time_counts_pinned_steps() {
        let t = ring();
        let mut states = drive(&t, 0.5, &[(2.0, 2000)]);
        let laps = detect_laps(&states, &t, DT);
        assert_eq!(laps.len(), 1);
        assert_eq!(
            violation_time(&states, &t, &laps[0], WALL_THRESHOLD, DT),
            0.0
        );
        let first = laps[0].start.ceil() as usize + 10;
        for s in &mut states[first..first + 150] {
            s.n = 0.2;
        }
        let v = violation_time(&states, &t, &laps[0], WALL_THRESHOLD, DT);
        assert!((v - 1.5).abs() < 1e-9, "{v}");
        // hand count: 1.9 cm from the wall counts, 2.1 cm does not
        states[first + 300].n = 0.181;
        states[first + 301].n = -0.179;
        let v = violation_time(&states, &t, &laps[0], WALL_THRESHOLD, DT);
        assert!((v - 1.51).abs() < 1e-9, "{v}");
        assert!(v <= laps[0].time);
    }

    #[test]
    fn smoothness_of_constant_input() {
        let d = vec![0.4; 50];
        let s = smoothness(&d, &vec![-0.1; 50], DT).unwrap();
        assert!((s.d_rms - 0.4).abs() < 1e-15);
        assert!((s.delta_rms - 0.1).abs() < 1e-15);
        assert_eq!(s.d_dot_rms, 0.0);
        assert_eq!(s.d_ddot_rms, 0.0);
    }

    #[test]
    fn smoothness_of_sinusoid() {
        let (a, f) = (0.3, 1.0);
        let d: Vec<f64> = (0..=1000)
            .map(|i| a * (TAU * f * i as f64 * DT).sin())
            .collect();
        let s = smoothness(&d, &d, DT).unwrap();
        let expect = a * TAU * f / 2f64.sqrt();
        assert!((s.d_dot_rms / expect - 1.0).abs() < 0.01);
        let expect2 = a * (TAU * f).powi(2) / 2f64.sqrt();
        assert!((s.d_ddot_rms / expect2 - 1.0).abs() < 0.01);
        assert!((s.d_rms - a / 2f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn alternating_input_is_worst_case_jitter() {
        let a = 0.05;
        let d: Vec<f64> = (0..101).map(|i| if i % 2 == 0 { a } else { -a }).collect();
        let s = smoothness(&d, &d, DT).unwrap();
        assert!((s.d_dot_rms - 2.0 * a / DT).abs() < 1e-9);
    }

    #[test]
    fn offsets_only_move_the_level() {
        let d: Vec<f64> = (0..200).map(|i| (i as f64 * 0.07).sin() * 0.2).collect();
        let shifted: Vec<f64> = d.iter().map(|x| x + 0.5).collect();
        let a = smoothness(&d, &d, DT).unwrap();
        let b = smoothness(&shifted, &d, DT).unwrap();
        assert!((a.d_dot_rms - b.d_dot_rms).abs() < 1e-9);
        assert!((a.d_ddot_rms - b.d_ddot_rms).abs() < 1e-6);
        assert!(a.d_rms != b.d_rms);
    }

    #[test]
    fn short_series_rejected() {
        assert!(smoothness(&[0.0, 1.0], &[0.0, 1.0], DT).is_err());
    }

    #[test]
    fn untrained_policy_is_reproducible_and_not_clean() {
        let track = Arc::new(Track::generate(TrackKind::PaperLike, 1.0, 0.2, 0.02).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pol = GaussianPolicy::new(8, &[16], vec![1.0, 1.0], &mut rng);
        let cfg = RaceConfig::default();
        let opts = EvalOptions {
            n_laps: 2,
            step_budget: 4000,
            ..EvalOptions::default()
        };
        let a = evaluate_policy(&pol, Arc::clone(&track), &cfg, &opts).unwrap();
        let b = evaluate_policy(&pol, track, &cfg, &opts).unwrap();
        assert_eq!(a.csv(), b.csv());
        assert!(!a.clean(2));
        assert!(a.steps <= 4000);
    }
}
