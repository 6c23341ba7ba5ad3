//! Closed-track centerline geometry and Cartesian <-> curvilinear transforms.
//!
//! The centerline is stored as a closed polyline with a cumulative arclength
//! table. Positions are piecewise linear between samples; the tangent heading
//! comes from a three-point quadratic fit at every sample and is interpolated
//! linearly in between, so the lateral normal varies continuously along the
//! track. Lateral deviation `n` is positive to the left of travel.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{validation, Error, Result};

/// Default maximum spacing between consecutive centerline samples [m].
pub const DEFAULT_MAX_SPACING: f64 = 0.02;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Track-relative pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrenetPose {
    /// Progress along the centerline [m], in `[0, L)`.
    pub p: f64,
    /// Signed lateral deviation [m], positive left.
    pub n: f64,
    /// Heading relative to the centerline tangent [rad], in `(-pi, pi]`.
    pub mu: f64,
}

/// Result of projecting a Cartesian pose onto the track.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub pose: FrenetPose,
    /// Set when the point lies outside `2 * half_width + FAR_MARGIN`.
    pub far: bool,
}

/// Extra band beyond twice the half width before a projection is flagged far.
pub const FAR_MARGIN: f64 = 0.05;

/// Half-window [m] of the hint-based local nearest-point search.
const LOCAL_WINDOW: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrackKind {
    /// Circle of radius `scale`, counter-clockwise, starting at `(scale, 0)`.
    Circle,
    /// Two straights of length `2 * scale` joined by semicircles of radius `scale`.
    Oval,
    /// 18 m closed layout with 14 curvature sign changes; `scale` multiplies its size.
    PaperLike,
}

impl std::str::FromStr for TrackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(TrackKind::Circle),
            "oval" => Ok(TrackKind::Oval),
            "paper_like" | "paper-like" => Ok(TrackKind::PaperLike),
            other => Err(validation(format!(
                "unknown track kind `{other}` (expected circle, oval, paper_like)"
            ))),
        }
    }
}

impl std::fmt::Display for TrackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrackKind::Circle => "circle",
            TrackKind::Oval => "oval",
            TrackKind::PaperLike => "paper_like",
        })
    }
}

/// Closed centerline with width profile. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    xs: Vec<f64>,
    ys: Vec<f64>,
    half_widths: Vec<f64>,
    arclength: Vec<f64>,
    heading: Vec<f64>,
    curvature: Vec<f64>,
    length: f64,
}

impl Track {
    /// Builds a track from an ordered, closed-or-closable list of
    /// `(x, y, half_width)` samples.
    ///
    /// A final sample within 1e-9 m of the first is treated as an explicit
    /// closure. Otherwise the closing chord is added, unless it is longer than
    /// 1 cm and longer than every listed chord, which indicates an open curve.
    pub fn from_samples(samples: &[(f64, f64, f64)], max_spacing: f64) -> Result<Self> {
        if !(max_spacing > 0.0) {
            return Err(validation("max spacing must be positive"));
        }
        let mut pts: Vec<(f64, f64, f64)> = Vec::with_capacity(samples.len());
        for &(x, y, hw) in samples {
            if !(x.is_finite() && y.is_finite() && hw.is_finite()) {
                return Err(validation("non-finite track sample"));
            }
            if hw <= 0.0 {
                return Err(validation(format!("half width must be positive, got {hw}")));
            }
            if let Some(&(px, py, _)) = pts.last() {
                if (x - px).hypot(y - py) < 1e-12 {
                    continue;
                }
            }
            pts.push((x, y, hw));
        }
        if pts.len() >= 2 {
            let (fx, fy, _) = pts[0];
            let (lx, ly, _) = pts[pts.len() - 1];
            if (lx - fx).hypot(ly - fy) <= 1e-9 {
                pts.pop();
            }
        }
        if pts.len() < 3 {
            return Err(validation(
                "a closed track needs at least 3 distinct samples",
            ));
        }
        let longest_chord = pts
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .fold(0.0_f64, f64::max);
        let (fx, fy, _) = pts[0];
        let (lx, ly, _) = pts[pts.len() - 1];
        let gap = (lx - fx).hypot(ly - fy);
        if gap > 0.01 && gap > longest_chord * (1.0 + 1e-9) {
            return Err(validation(format!(
                "open loop: endpoints are {gap:.4} m apart"
            )));
        }

        // Subdivide long chords, then close with an exact copy of the first sample.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut hws = Vec::new();
        let m = pts.len();
        for i in 0..m {
            let a = pts[i];
            let b = pts[(i + 1) % m];
            let len = (b.0 - a.0).hypot(b.1 - a.1);
            let pieces = (len / max_spacing).ceil().max(1.0) as usize;
            for k in 0..pieces {
                let t = k as f64 / pieces as f64;
                xs.push(a.0 + t * (b.0 - a.0));
                ys.push(a.1 + t * (b.1 - a.1));
                hws.push(a.2 + t * (b.2 - a.2));
            }
        }
        xs.push(xs[0]);
        ys.push(ys[0]);
        hws.push(hws[0]);
        Ok(Self::with_tables(xs, ys, hws))
    }

    fn with_tables(xs: Vec<f64>, ys: Vec<f64>, half_widths: Vec<f64>) -> Self {
        let n = xs.len();
        let mut arclength = Vec::with_capacity(n);
        arclength.push(0.0);
        for i in 1..n {
            let d = (xs[i] - xs[i - 1]).hypot(ys[i] - ys[i - 1]);
            arclength.push(arclength[i - 1] + d);
        }
        let length = arclength[n - 1];
        let unique = n - 1;

        let mut heading = vec![0.0; n];
        for i in 0..unique {
            let prev = if i == 0 { unique - 1 } else { i - 1 };
            let next = i + 1;
            let h1 = if i == 0 {
                length - arclength[prev]
            } else {
                arclength[i] - arclength[prev]
            };
            let h2 = arclength[next] - arclength[i];
            // Derivative of the quadratic through the three neighbours.
            let cp = -h2 / (h1 * (h1 + h2));
            let ci = (h2 - h1) / (h1 * h2);
            let cn = h1 / (h2 * (h1 + h2));
            let dx = cp * xs[prev] + ci * xs[i] + cn * xs[next];
            let dy = cp * ys[prev] + ci * ys[i] + cn * ys[next];
            heading[i] = dy.atan2(dx);
        }
        heading[unique] = heading[0];

        let mut curvature = vec![0.0; n];
        for i in 0..unique {
            let prev = if i == 0 { unique - 1 } else { i - 1 };
            let next = if i + 1 == unique { 0 } else { i + 1 };
            let span = if i == 0 {
                arclength[1] + length - arclength[prev]
            } else {
                arclength[i + 1] - arclength[prev]
            };
            curvature[i] = wrap_angle(heading[next] - heading[prev]) / span;
        }
        curvature[unique] = curvature[0];

        Track {
            xs,
            ys,
            half_widths,
            arclength,
            heading,
            curvature,
            length,
        }
    }

    /// Generates one of the built-in layouts with constant half width.
    pub fn generate(kind: TrackKind, scale: f64, half_width: f64, ds: f64) -> Result<Self> {
        if !(scale > 0.0 && half_width > 0.0 && ds > 0.0) {
            return Err(validation(format!(
                "generate_track needs positive scale, half_width, ds (got {scale}, {half_width}, {ds})"
            )));
        }
        let pts: Vec<(f64, f64)> = match kind {
            TrackKind::Circle => {
                let r = scale;
                let mut n = (TAU * r / ds).ceil() as usize;
                n = n.div_ceil(4) * 4;
                (0..n)
                    .map(|k| {
                        let a = TAU * k as f64 / n as f64;
                        (r * a.cos(), r * a.sin())
                    })
                    .collect()
            }
            TrackKind::Oval => {
                let r = scale;
                let straight = 2.0 * scale;
                let mut pts = Vec::new();
                let ns = (straight / ds).ceil() as usize;
                let na = (PI * r / ds).ceil() as usize;
                for k in 0..ns {
                    pts.push((straight * k as f64 / ns as f64, 0.0));
                }
                for k in 0..na {
                    let a = -PI / 2.0 + PI * k as f64 / na as f64;
                    pts.push((straight + r * a.cos(), r + r * a.sin()));
                }
                for k in 0..ns {
                    pts.push((straight - straight * k as f64 / ns as f64, 2.0 * r));
                }
                for k in 0..na {
                    let a = PI / 2.0 + PI * k as f64 / na as f64;
                    pts.push((r * a.cos(), r + r * a.sin()));
                }
                pts
            }
            TrackKind::PaperLike => paper_like_points(18.0 * scale, ds),
        };
        let samples: Vec<(f64, f64, f64)> =
            pts.into_iter().map(|(x, y)| (x, y, half_width)).collect();
        Self::from_samples(&samples, ds.max(1e-9) * (1.0 + 1e-9))
    }

    /// Reads the `x,y,half_width` CSV format.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_spacing(path, DEFAULT_MAX_SPACING)
    }

    pub fn load_with_spacing(path: &Path, max_spacing: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text, path, max_spacing)
    }

    pub fn parse_csv(text: &str, origin: &Path, max_spacing: f64) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim().replace(' ', "") == "x,y,half_width" => {}
            Some((_, h)) => {
                return Err(parse_err(
                    1,
                    format!("expected header `x,y,half_width`, got `{h}`"),
                ))
            }
            None => return Err(parse_err(1, "empty file".into())),
        }
        let mut samples = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(parse_err(
                    idx + 1,
                    format!("expected 3 fields, got {}", fields.len()),
                ));
            }
            let mut vals = [0.0; 3];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f
                    .parse::<f64>()
                    .map_err(|_| parse_err(idx + 1, format!("not a number: `{f}`")))?;
            }
            samples.push((vals[0], vals[1], vals[2]));
        }
        Self::from_samples(&samples, max_spacing)
    }

    /// CSV text of the distinct samples (the closing duplicate is omitted).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,half_width\n");
        for i in 0..self.num_samples() {
            let _ = writeln!(out, "{},{},{}", self.xs[i], self.ys[i], self.half_widths[i]);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of distinct samples.
    pub fn num_samples(&self) -> usize {
        self.xs.len() - 1
    }

    /// Sample `i` as `(x, y, half_width)`; `i == num_samples()` is the closing copy.
    pub fn sample(&self, i: usize) -> (f64, f64, f64) {
        (self.xs[i], self.ys[i], self.half_widths[i])
    }

    pub fn arclength(&self) -> &[f64] {
        &self.arclength
    }

    pub fn max_half_width(&self) -> f64 {
        self.half_widths.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_half_width(&self) -> f64 {
        self.half_widths
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Wraps an arbitrary progress value into `[0, L)`.
    pub fn wrap_progress(&self, p: f64) -> f64 {
        let w = p.rem_euclid(self.length);
        if w >= self.length {
            0.0
        } else {
            w
        }
    }

    /// Signed progress increment from `p_prev` to `p_next`, in `(-L/2, L/2]`.
    pub fn progress_delta(&self, p_next: f64, p_prev: f64) -> f64 {
        let d = (p_next - p_prev).rem_euclid(self.length);
        if d > 0.5 * self.length {
            d - self.length
        } else {
            d
        }
    }

    /// Segment index and fraction for a (wrapped) progress value.
    fn locate(&self, p: f64) -> (usize, f64) {
        let p = self.wrap_progress(p);
        let idx = self.arclength.partition_point(|&s| s <= p);
        let i = idx.saturating_sub(1).min(self.xs.len() - 2);
        let span = self.arclength[i + 1] - self.arclength[i];
        (i, ((p - self.arclength[i]) / span).clamp(0.0, 1.0))
    }

    /// Centerline point at progress `p`.
    pub fn position_at(&self, p: f64) -> (f64, f64) {
        let (i, t) = self.locate(p);
        (
            self.xs[i] + t * (self.xs[i + 1] - self.xs[i]),
            self.ys[i] + t * (self.ys[i + 1] - self.ys[i]),
        )
    }

    /// Tangent heading at progress `p`.
    pub fn heading_at(&self, p: f64) -> f64 {
        let (i, t) = self.locate(p);
        wrap_angle(self.heading[i] + t * wrap_angle(self.heading[i + 1] - self.heading[i]))
    }

    pub fn curvature_at(&self, p: f64) -> f64 {
        let (i, t) = self.locate(p);
        self.curvature[i] + t * (self.curvature[i + 1] - self.curvature[i])
    }

    pub fn half_width_at(&self, p: f64) -> f64 {
        let (i, t) = self.locate(p);
        self.half_widths[i] + t * (self.half_widths[i + 1] - self.half_widths[i])
    }

    /// Full track width `2 * half_width` at `p`.
    pub fn width_at(&self, p: f64) -> f64 {
        2.0 * self.half_width_at(p)
    }

    /// Curvature at every distinct sample.
    pub fn sample_curvatures(&self) -> &[f64] {
        &self.curvature[..self.num_samples()]
    }

    /// Number of sign changes of curvature around the loop, ignoring
    /// near-straight samples with `|kappa| < min_abs`.
    pub fn curvature_sign_changes(&self, min_abs: f64) -> usize {
        let signs: Vec<f64> = self
            .sample_curvatures()
            .iter()
            .filter(|k| k.abs() >= min_abs)
            .map(|k| k.signum())
            .collect();
        if signs.is_empty() {
            return 0;
        }
        let mut changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        if signs[0] != signs[signs.len() - 1] {
            changes += 1;
        }
        changes
    }

    /// Maps a curvilinear pose to Cartesian `(x, y, psi)`.
    pub fn frenet_to_cartesian(&self, pose: &FrenetPose) -> Result<(f64, f64, f64)> {
        let kappa = self.curvature_at(pose.p);
        if (pose.n * kappa).abs() >= 1.0 {
            return Err(Error::Domain(format!(
                "lateral offset {} folds over at curvature {}",
                pose.n, kappa
            )));
        }
        let (cx, cy) = self.position_at(pose.p);
        let theta = self.heading_at(pose.p);
        Ok((
            cx - pose.n * theta.sin(),
            cy + pose.n * theta.cos(),
            wrap_angle(theta + pose.mu),
        ))
    }

    /// Projects a Cartesian pose onto the centerline.
    ///
    /// With a hint the search is confined to `hint +- 0.5 m` and falls back to
    /// a global scan when nothing in the window is within the far band.
    pub fn cartesian_to_frenet(&self, x: f64, y: f64, psi: f64, hint: Option<f64>) -> Projection {
        let far_band = 2.0 * self.max_half_width() + FAR_MARGIN;
        let nearest = hint
            .and_then(|h| {
                let (best, dist) = self.nearest_sample_local(x, y, h);
                (dist <= far_band).then_some(best)
            })
            .unwrap_or_else(|| self.nearest_sample_global(x, y).0);
        let p = self.refine_projection(x, y, nearest);
        let (cx, cy) = self.position_at(p);
        let theta = self.heading_at(p);
        let n = -(x - cx) * theta.sin() + (y - cy) * theta.cos();
        let far = n.abs() > 2.0 * self.half_width_at(p) + FAR_MARGIN;
        Projection {
            pose: FrenetPose {
                p,
                n,
                mu: wrap_angle(psi - theta),
            },
            far,
        }
    }

    fn nearest_sample_global(&self, x: f64, y: f64) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.num_samples() {
            let d = (self.xs[i] - x).hypot(self.ys[i] - y);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    fn nearest_sample_local(&self, x: f64, y: f64, hint: f64) -> (usize, f64) {
        let m = self.num_samples();
        let (start, _) = self.locate(hint - LOCAL_WINDOW);
        let (end, _) = self.locate(hint + LOCAL_WINDOW);
        let count = if end >= start {
            end - start
        } else {
            end + m - start
        } + 2;
        let mut best = (start, f64::INFINITY);
        for k in 0..count.min(m) {
            let i = (start + k) % m;
            let d = (self.xs[i] - x).hypot(self.ys[i] - y);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Orthogonality residual `(X - c(p)) . T(p)`; decreasing in `p` near a root.
    fn tangential_residual(&self, x: f64, y: f64, p: f64) -> f64 {
        let (cx, cy) = self.position_at(p);
        let theta = self.heading_at(p);
        (x - cx) * theta.cos() + (y - cy) * theta.sin()
    }

    fn refine_projection(&self, x: f64, y: f64, sample: usize) -> f64 {
        let m = self.num_samples();
        let base = self.arclength[sample];
        for reach in 1..=6usize {
            let lo_idx = (sample + m * reach - reach) % m;
            let hi_idx = (sample + reach) % m;
            let mut lo = self.arclength[lo_idx];
            let mut hi = self.arclength[hi_idx];
            if lo > base {
                lo -= self.length;
            }
            if hi <= base && reach > 0 {
                hi += self.length;
            }
            let f_lo = self.tangential_residual(x, y, lo);
            let f_hi = self.tangential_residual(x, y, hi);
            if f_lo >= 0.0 && f_hi <= 0.0 {
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.tangential_residual(x, y, mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return self.wrap_progress(0.5 * (lo + hi));
            }
        }
        // No bracket (point far off the track): fall back to the nearest
        // point on the adjacent chords.
        let mut best = (base, f64::INFINITY);
        for seg in [(sample + m - 1) % m, sample] {
            let (ax, ay) = (self.xs[seg], self.ys[seg]);
            let (bx, by) = (self.xs[seg + 1], self.ys[seg + 1]);
            let (dx, dy) = (bx - ax, by - ay);
            let t = (((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            let d = (ax + t * dx - x).hypot(ay + t * dy - y);
            if d < best.1 {
                let s0 = self.arclength[seg];
                best = (s0 + t * (self.arclength[seg + 1] - s0), d);
            }
        }
        self.wrap_progress(best.0)
    }
}

/// Dense polar flower-oval rescaled to `length`, resampled at `ds`.
fn paper_like_points(length: f64, ds: f64) -> Vec<(f64, f64)> {
    const R0: f64 = 2.5;
    const LOBE: f64 = 0.15;
    const LOBES: f64 = 7.0;
    const OVAL: f64 = 0.4;
    let dense = 200_000;
    let mut pts = Vec::with_capacity(dense + 1);
    for k in 0..=dense {
        let phi = TAU * k as f64 / dense as f64;
        let r = R0 + LOBE * (LOBES * phi).sin() + OVAL * (2.0 * phi).cos();
        pts.push((r * phi.cos(), r * phi.sin()));
    }
    let mut cum = vec![0.0; pts.len()];
    for i in 1..pts.len() {
        cum[i] = cum[i - 1] + (pts[i].0 - pts[i - 1].0).hypot(pts[i].1 - pts[i - 1].1);
    }
    let total = cum[cum.len() - 1];
    let k = length / total;
    let count = (length / ds).ceil() as usize;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for s in 0..count {
        let target = total * s as f64 / count as f64;
        while cum[j + 1] < target {
            j += 1;
        }
        let t = (target - cum[j]) / (cum[j + 1] - cum[j]);
        out.push((
            k * (pts[j].0 + t * (pts[j + 1].0 - pts[j].0)),
            k * (pts[j].1 + t * (pts[j + 1].1 - pts[j].1)),
        ));
    }
    out
}
