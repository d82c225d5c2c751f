//! Sampling-based model-predictive flight control with geometric rollouts
//! and depth-image collision avoidance, plus the simulation world used to
//! exercise it (quadrotor dynamics, procedural forests, a depth renderer,
//! and closed-loop benchmark runners).

pub mod dynamics;
pub mod engine;
pub mod math;
pub mod perception;
pub mod real;
pub mod rngstream;
pub mod schedule;
pub mod se3;
pub mod sim;
pub mod trajectory;
pub mod types;

pub use engine::{GmppiConfig, GmppiController, GmppiError, IterationDiagnostics};
pub use real::Real;

/// Default scalar for the simulator and benchmarks.
pub type Vec3 = math::Vector3<f64>;
pub type Quat = math::UnitQuat<f64>;
pub type State = types::State<f64>;
pub type Command = types::Command<f64>;
pub type VehicleParams = types::VehicleParams<f64>;

/// Single-precision variants for embedded-style builds.
pub type Vec3f = math::Vector3<f32>;
pub type Quatf = math::UnitQuat<f32>;
pub type Statef = types::State<f32>;
pub type Commandf = types::Command<f32>;
pub type VehicleParamsf = types::VehicleParams<f32>;
