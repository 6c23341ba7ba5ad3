//! Dynamic bicycle model with Pacejka lateral tire forces, a duty-cycle
//! drivetrain and multiplicative randomization of the velocity dynamics.
//!
//! Body-frame equations:
//!
//! ```text
//! x'  = vx cos(psi) - vy sin(psi)
//! y'  = vx sin(psi) + vy cos(psi)
//! psi' = omega
//! vx' = (Fx - Fyf sin(delta) + m vy omega) / m
//! vy' = (Fyr + Fyf cos(delta) - m vx omega) / m
//! omega' = (Fyf lf cos(delta) - Fyr lr) / Iz
//! ```

use rand::Rng;

use crate::config::Config;
use crate::error::{validation, Error, Result};
use crate::track::wrap_angle;

/// Duty cycle bounds.
pub const DUTY_MIN: f64 = -0.2;
pub const DUTY_MAX: f64 = 1.0;
/// Steering angle bound [rad].
pub const STEER_MAX: f64 = 0.35;
/// Lower bound on `vx` used inside the slip-angle computation only [m/s].
pub const SLIP_VELOCITY_FLOOR: f64 = 0.05;
/// Simulation step [s] (100 Hz).
pub const DEFAULT_DT: f64 = 0.01;

/// Magic-formula coefficients for one axle: `F = D sin(C atan(B alpha))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pacejka {
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Pacejka {
    pub fn force(&self, alpha: f64) -> f64 {
        self.d * (self.c * (self.b * alpha).atan()).sin()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleParams {
    /// Mass [kg].
    pub m: f64,
    /// Yaw inertia [kg m^2].
    pub iz: f64,
    /// CoG to front axle [m].
    pub lf: f64,
    /// CoG to rear axle [m].
    pub lr: f64,
    pub front: Pacejka,
    pub rear: Pacejka,
    /// Motor gain [N].
    pub cm1: f64,
    /// Motor back-EMF loss [N s/m].
    pub cm2: f64,
    /// Rolling resistance [N].
    pub cr0: f64,
    /// Drag [N s^2/m^2].
    pub cr2: f64,
    /// Longitudinal weight in the friction ellipse.
    pub p_long: f64,
    /// Radius factor of the friction ellipse.
    pub p_ellipse: f64,
}

impl Default for VehicleParams {
    /// 1:43 scale car (41 g).
    fn default() -> Self {
        VehicleParams {
            m: 0.041,
            iz: 27.8e-6,
            lf: 0.029,
            lr: 0.033,
            front: Pacejka {
                b: 2.579,
                c: 1.2,
                d: 0.192,
            },
            rear: Pacejka {
                b: 3.3852,
                c: 1.2691,
                d: 0.1737,
            },
            cm1: 0.287,
            cm2: 0.0545,
            cr0: 0.0518,
            cr2: 0.00035,
            p_long: 0.9,
            p_ellipse: 0.95,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("iz", self.iz),
            ("lf", self.lf),
            ("lr", self.lr),
            ("df", self.front.d),
            ("dr", self.rear.d),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(validation(format!(
                    "vehicle.{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("bf", self.front.b),
            ("cf", self.front.c),
            ("br", self.rear.b),
            ("cr", self.rear.c),
            ("cm1", self.cm1),
            ("cm2", self.cm2),
            ("cr0", self.cr0),
            ("cr2", self.cr2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(validation(format!(
                    "vehicle.{name} must be non-negative, got {v}"
                )));
            }
        }
        for (name, v) in [("p_long", self.p_long), ("p_ellipse", self.p_ellipse)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(validation(format!(
                    "vehicle.{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Reads overrides from keys under `vehicle.`:
    /// `m, iz, lf, lr, bf, cf, df, br, cr, dr, cm1, cm2, cr0, cr2, p_long, p_ellipse`.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let c = cfg.section("vehicle");
        let d = VehicleParams::default();
        let p = VehicleParams {
            m: c.get_or("m", d.m)?,
            iz: c.get_or("iz", d.iz)?,
            lf: c.get_or("lf", d.lf)?,
            lr: c.get_or("lr", d.lr)?,
            front: Pacejka {
                b: c.get_or("bf", d.front.b)?,
                c: c.get_or("cf", d.front.c)?,
                d: c.get_or("df", d.front.d)?,
            },
            rear: Pacejka {
                b: c.get_or("br", d.rear.b)?,
                c: c.get_or("cr", d.rear.c)?,
                d: c.get_or("dr", d.rear.d)?,
            },
            cm1: c.get_or("cm1", d.cm1)?,
            cm2: c.get_or("cm2", d.cm2)?,
            cr0: c.get_or("cr0", d.cr0)?,
            cr2: c.get_or("cr2", d.cr2)?,
            p_long: c.get_or("p_long", d.p_long)?,
            p_ellipse: c.get_or("p_ellipse", d.p_ellipse)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn write_config(&self, cfg: &mut Config) {
        let entries = [
            ("m", self.m),
            ("iz", self.iz),
            ("lf", self.lf),
            ("lr", self.lr),
            ("bf", self.front.b),
            ("cf", self.front.c),
            ("df", self.front.d),
            ("br", self.rear.b),
            ("cr", self.rear.c),
            ("dr", self.rear.d),
            ("cm1", self.cm1),
            ("cm2", self.cm2),
            ("cr0", self.cr0),
            ("cr2", self.cr2),
            ("p_long", self.p_long),
            ("p_ellipse", self.p_ellipse),
        ];
        for (k, v) in entries {
            cfg.set(&format!("vehicle.{k}"), v.to_string());
        }
    }
}

/// Uniform half-widths of the multiplicative velocity-derivative noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            vx: 1.5,
            vy: 2.5,
            omega: 2.0,
        }
    }
}

impl NoiseSpec {
    pub const ZERO: NoiseSpec = NoiseSpec {
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.vx < 0.0 || self.vy < 0.0 || self.omega < 0.0 {
            return Err(validation("noise bounds must be non-negative"));
        }
        Ok(())
    }

    /// Reads `noise.vx`, `noise.vy`, `noise.omega`.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = NoiseSpec::default();
        let n = NoiseSpec {
            vx: cfg.get_or("noise.vx", d.vx)?,
            vy: cfg.get_or("noise.vy", d.vy)?,
            omega: cfg.get_or("noise.omega", d.omega)?,
        };
        n.validate()?;
        Ok(n)
    }

    /// Draws one perturbation; a zero bound yields exactly zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Perturbation {
        let mut draw = |bound: f64| {
            if bound > 0.0 {
                rng.gen_range(-bound..=bound)
            } else {
                0.0
            }
        };
        Perturbation {
            vx: draw(self.vx),
            vy: draw(self.vy),
            omega: draw(self.omega),
        }
    }
}

/// One sampled multiplicative error `eps` per velocity state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Perturbation {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Perturbation {
    pub const ZERO: Perturbation = Perturbation {
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };
}

/// Which velocity derivatives receive the perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VelocityMask {
    pub vx: bool,
    pub vy: bool,
    pub omega: bool,
}

impl VelocityMask {
    pub const ALL: VelocityMask = VelocityMask {
        vx: true,
        vy: true,
        omega: true,
    };
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BodyState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    /// Body-frame longitudinal velocity [m/s].
    pub vx: f64,
    /// Body-frame lateral velocity [m/s].
    pub vy: f64,
    /// Yaw rate [rad/s].
    pub omega: f64,
}

impl BodyState {
    pub fn kinetic_energy(&self, params: &VehicleParams) -> f64 {
        0.5 * params.m * (self.vx * self.vx + self.vy * self.vy)
            + 0.5 * params.iz * self.omega * self.omega
    }

    fn is_finite(&self) -> bool {
        [self.x, self.y, self.psi, self.vx, self.vy, self.omega]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Time derivative of a [`BodyState`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BodyDerivative {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhysicalInputs {
    /// Motor duty cycle.
    pub d: f64,
    /// Steering angle [rad].
    pub delta: f64,
}

impl PhysicalInputs {
    pub fn clipped(self) -> Self {
        PhysicalInputs {
            d: self.d.clamp(DUTY_MIN, DUTY_MAX),
            delta: self.delta.clamp(-STEER_MAX, STEER_MAX),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TireForces {
    pub fy_front: f64,
    pub fy_rear: f64,
    /// Net longitudinal drivetrain force [N].
    pub fx: f64,
    pub alpha_front: f64,
    pub alpha_rear: f64,
}

/// Front and rear slip angles.
pub fn slip_angles(state: &BodyState, delta: f64, params: &VehicleParams) -> (f64, f64) {
    let vx = state.vx.max(SLIP_VELOCITY_FLOOR);
    let alpha_f = -(state.omega * params.lf + state.vy).atan2(vx) + delta;
    let alpha_r = (state.omega * params.lr - state.vy).atan2(vx);
    (alpha_f, alpha_r)
}

pub fn tire_and_drive_forces(
    state: &BodyState,
    inputs: &PhysicalInputs,
    params: &VehicleParams,
) -> TireForces {
    let (alpha_f, alpha_r) = slip_angles(state, inputs.delta, params);
    let fx = (params.cm1 - params.cm2 * state.vx) * inputs.d
        - params.cr0
        - params.cr2 * state.vx * state.vx;
    TireForces {
        fy_front: params.front.force(alpha_f),
        fy_rear: params.rear.force(alpha_r),
        fx,
        alpha_front: alpha_f,
        alpha_rear: alpha_r,
    }
}

fn rhs_with_forces(
    state: &BodyState,
    inputs: &PhysicalInputs,
    params: &VehicleParams,
    f: &TireForces,
) -> BodyDerivative {
    let (sin_psi, cos_psi) = state.psi.sin_cos();
    let (sin_d, cos_d) = inputs.delta.sin_cos();
    BodyDerivative {
        x: state.vx * cos_psi - state.vy * sin_psi,
        y: state.vx * sin_psi + state.vy * cos_psi,
        psi: state.omega,
        vx: (f.fx - f.fy_front * sin_d + params.m * state.vy * state.omega) / params.m,
        vy: (f.fy_rear + f.fy_front * cos_d - params.m * state.vx * state.omega) / params.m,
        omega: (f.fy_front * params.lf * cos_d - f.fy_rear * params.lr) / params.iz,
    }
}

pub fn dynamics_rhs(
    state: &BodyState,
    inputs: &PhysicalInputs,
    params: &VehicleParams,
) -> BodyDerivative {
    let f = tire_and_drive_forces(state, inputs, params);
    rhs_with_forces(state, inputs, params, &f)
}

/// Multiplies the masked velocity derivatives by `1 + eps`; kinematic rows
/// are returned unchanged.
pub fn randomized_rhs(
    nominal: &BodyDerivative,
    eps: &Perturbation,
    which: VelocityMask,
) -> BodyDerivative {
    let mut out = *nominal;
    if which.vx {
        out.vx = nominal.vx * (1.0 + eps.vx);
    }
    if which.vy {
        out.vy = nominal.vy * (1.0 + eps.vy);
    }
    if which.omega {
        out.omega = nominal.omega * (1.0 + eps.omega);
    }
    out
}

fn advance(state: &BodyState, k: &BodyDerivative, h: f64) -> BodyState {
    BodyState {
        x: state.x + h * k.x,
        y: state.y + h * k.y,
        psi: state.psi + h * k.psi,
        vx: state.vx + h * k.vx,
        vy: state.vy + h * k.vy,
        omega: state.omega + h * k.omega,
    }
}

fn finish(mut s: BodyState) -> Result<BodyState> {
    if !s.is_finite() {
        return Err(Error::Numeric(format!("non-finite vehicle state {s:?}")));
    }
    s.psi = wrap_angle(s.psi);
    s.vx = s.vx.max(0.0);
    Ok(s)
}

/// One explicit Euler step with the perturbation applied to the velocity rows.
/// Also returns the tire forces acting during the step.
pub fn integrate_step_with_forces(
    state: &BodyState,
    inputs: &PhysicalInputs,
    params: &VehicleParams,
    dt: f64,
    eps: &Perturbation,
) -> Result<(BodyState, TireForces)> {
    if !(dt > 0.0) {
        return Err(validation(format!("dt must be positive, got {dt}")));
    }
    let forces = tire_and_drive_forces(state, inputs, params);
    let nominal = rhs_with_forces(state, inputs, params, &forces);
    let k = randomized_rhs(&nominal, eps, VelocityMask::ALL);
    Ok((finish(advance(state, &k, dt))?, forces))
}

pub fn integrate_step(
    state: &BodyState,
    inputs: &PhysicalInputs,
    params: &VehicleParams,
    dt: f64,
    eps: &Perturbation,
) -> Result<BodyState> {
    integrate_step_with_forces(state, inputs, params, dt, eps).map(|(s, _)| s)
}

/// Classical RK4 step of the nominal model (reference integrator).
pub fn integrate_step_rk4(
    state: &BodyState,
    inputs: &PhysicalInputs,
    params: &VehicleParams,
    dt: f64,
) -> Result<BodyState> {
    if !(dt > 0.0) {
        return Err(validation(format!("dt must be positive, got {dt}")));
    }
    let k1 = dynamics_rhs(state, inputs, params);
    let k2 = dynamics_rhs(&advance(state, &k1, 0.5 * dt), inputs, params);
    let k3 = dynamics_rhs(&advance(state, &k2, 0.5 * dt), inputs, params);
    let k4 = dynamics_rhs(&advance(state, &k3, dt), inputs, params);
    let k = BodyDerivative {
        x: (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x) / 6.0,
        y: (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y) / 6.0,
        psi: (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi) / 6.0,
        vx: (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx) / 6.0,
        vy: (k1.vy + 2.0 * k2.vy + 2.0 * k3.vy + k4.vy) / 6.0,
        omega: (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega) / 6.0,
    };
    finish(advance(state, &k, dt))
}

/// True when the rear tire leaves the friction ellipse
/// `Fyr^2 + (p_long Fx)^2 <= (p_ellipse Dr)^2`.
pub fn ellipse_violation(forces: &TireForces, params: &VehicleParams) -> bool {
    let lhs = forces.fy_rear * forces.fy_rear + (params.p_long * forces.fx).powi(2);
    lhs > (params.p_ellipse * params.rear.d).powi(2)
}

/// Recovers tire forces from a logged state/input sequence by inverting the
/// three velocity equations. Accelerations use central differences (one-sided
/// at the ends). `inputs[i]` is the input applied from sample `i` to `i + 1`.
pub fn estimate_forces_from_log(
    states: &[BodyState],
    inputs: &[PhysicalInputs],
    params: &VehicleParams,
    dt: f64,
) -> Result<Vec<TireForces>> {
    if states.len() < 3 {
        return Err(validation(format!(
            "force estimation needs at least 3 samples, got {}",
            states.len()
        )));
    }
    if inputs.len() != states.len() {
        return Err(validation("state and input logs differ in length"));
    }
    let n = states.len();
    let deriv = |f: fn(&BodyState) -> f64, i: usize| -> f64 {
        if i == 0 {
            (f(&states[1]) - f(&states[0])) / dt
        } else if i == n - 1 {
            (f(&states[n - 1]) - f(&states[n - 2])) / dt
        } else {
            (f(&states[i + 1]) - f(&states[i - 1])) / (2.0 * dt)
        }
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let s = &states[i];
        let delta = inputs[i].delta;
        let (sin_d, cos_d) = delta.sin_cos();
        let ax = deriv(|s| s.vx, i);
        let ay = deriv(|s| s.vy, i);
        let aw = deriv(|s| s.omega, i);
        let lateral = params.m * (ay + s.vx * s.omega);
        let yaw = params.iz * aw;
        let fy_front = (yaw + lateral * params.lr) / (cos_d * (params.lf + params.lr));
        let fy_rear = lateral - fy_front * cos_d;
        let fx = params.m * (ax - s.vy * s.omega) + fy_front * sin_d;
        let (alpha_f, alpha_r) = slip_angles(s, delta, params);
        out.push(TireForces {
            fy_front,
            fy_rear,
            fx,
            alpha_front: alpha_f,
            alpha_rear: alpha_r,
        });
    }
    Ok(out)
}
