use serde::{Deserialize, Serialize};

use crate::math::{UnitQuat, Vector3};
use crate::real::{real, Real};

/// Rigid-body state: position, velocity, attitude, body rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State<T> {
    /// World position (m).
    pub p: Vector3<T>,
    /// World velocity (m/s).
    pub v: Vector3<T>,
    /// Body-to-world attitude.
    pub q: UnitQuat<T>,
    /// Angular velocity, body frame (rad/s).
    pub w: Vector3<T>,
}

impl<T: Real> State<T> {
    pub fn at_rest(p: Vector3<T>) -> Self {
        Self {
            p,
            v: Vector3::zero(),
            q: UnitQuat::identity(),
            w: Vector3::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite() && self.q.is_finite() && self.w.is_finite()
    }

    pub fn cast<U: Real>(self) -> State<U> {
        State {
            p: self.p.cast(),
            v: self.v.cast(),
            q: self.q.cast(),
            w: self.w.cast(),
        }
    }
}

/// Low-level command: collective thrust plus body-rate setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command<T> {
    /// Collective thrust along body z (N).
    pub thrust: T,
    /// Commanded angular velocity, body frame (rad/s).
    pub body_rates: Vector3<T>,
}

impl<T: Real> Command<T> {
    pub fn new(thrust: T, body_rates: Vector3<T>) -> Self {
        Self { thrust, body_rates }
    }

    /// Steady-hover command for the given vehicle.
    pub fn hover(params: &VehicleParams<T>) -> Self {
        Self {
            thrust: params.hover_thrust(),
            body_rates: Vector3::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.thrust.is_finite() && self.body_rates.is_finite()
    }

    pub fn cast<U: Real>(self) -> Command<U> {
        Command {
            thrust: U::of(self.thrust.to_f64()),
            body_rates: self.body_rates.cast(),
        }
    }
}

/// Actuation envelope applied to every command before use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandLimits<T> {
    pub thrust_min: T,
    pub thrust_max: T,
    pub rate_xy_max: T,
    pub rate_z_max: T,
}

impl<T: Real> Default for CommandLimits<T> {
    fn default() -> Self {
        Self {
            thrust_min: real(0.46),
            thrust_max: real(20.6),
            rate_xy_max: real(10.0),
            rate_z_max: real(2.0),
        }
    }
}

/// How the plant turns a body-rate setpoint into actual rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateTracking<T> {
    /// First-order lag toward the setpoint with the given bandwidth (1/s),
    /// a surrogate for the low-level rate loop.
    FirstOrder { gain: T },
    /// Rates follow the setpoint instantly.
    Perfect,
}

impl<T: Real> Default for RateTracking<T> {
    fn default() -> Self {
        Self::FirstOrder { gain: real(50.0) }
    }
}

/// Physical vehicle description plus command limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams<T> {
    /// Mass (kg).
    pub mass: T,
    /// Rotor arm length (m). Kept for completeness; thrust allocation is not
    /// modeled, so this does not enter the dynamics.
    pub arm_length: T,
    /// Rotor torque constant (m). Unused for the same reason as arm_length.
    pub torque_const: T,
    /// Principal moments of inertia (kg·m²).
    pub inertia_diag: Vector3<T>,
    /// Collision-box extents L, W, H (m).
    pub dims: Vector3<T>,
    /// Linear body-frame drag coefficients, diagonal of D.
    pub drag_diag: Vector3<T>,
    /// Gravity vector (m/s²).
    pub gravity: Vector3<T>,
    pub limits: CommandLimits<T>,
    pub rate_tracking: RateTracking<T>,
}

impl<T: Real> Default for VehicleParams<T> {
    fn default() -> Self {
        Self {
            mass: real(1.21),
            arm_length: real(0.15),
            torque_const: real(0.012),
            inertia_diag: Vector3::new(real(7.06e-3), real(7.06e-3), real(13.6e-3)),
            dims: Vector3::new(real(0.35), real(0.35), real(0.215)),
            drag_diag: Vector3::new(real(0.28), real(0.35), real(0.7)),
            gravity: Vector3::new(T::zero(), T::zero(), real(-9.81)),
            limits: CommandLimits::default(),
            rate_tracking: RateTracking::default(),
        }
    }
}

impl<T: Real> VehicleParams<T> {
    /// Magnitude of gravitational acceleration (m/s²).
    pub fn g_mag(&self) -> T {
        self.gravity.norm()
    }

    /// Thrust balancing gravity for a level attitude (N).
    pub fn hover_thrust(&self) -> T {
        self.mass * self.g_mag()
    }

    // `!(x > 0)` rather than `x <= 0`: NaN must fail validation too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mass > T::zero()) {
            return Err("mass must be positive".into());
        }
        if !(self.inertia_diag.x > T::zero()
            && self.inertia_diag.y > T::zero()
            && self.inertia_diag.z > T::zero())
        {
            return Err("inertia components must be positive".into());
        }
        if !(self.dims.x > T::zero() && self.dims.y > T::zero() && self.dims.z > T::zero()) {
            return Err("dims must be positive".into());
        }
        if self.drag_diag.x < T::zero() || self.drag_diag.y < T::zero() || self.drag_diag.z < T::zero()
        {
            return Err("drag coefficients must be non-negative".into());
        }
        if !(self.limits.thrust_min <= self.limits.thrust_max) {
            return Err("thrust limits inverted".into());
        }
        Ok(())
    }
}
