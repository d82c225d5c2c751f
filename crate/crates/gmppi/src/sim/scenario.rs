//! Whole-experiment configuration: one schema covering the vehicle, the
//! controller, the camera, the reference trajectory, the forest, and the
//! loop settings. Unknown keys are rejected so sweep typos fail loudly.

use serde::{Deserialize, Serialize};

use crate::engine::GmppiConfig;
use crate::perception::CameraModel;
use crate::sim::forest::Rect;
use crate::trajectory::ReferenceTrajectory;
use crate::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    /// Trees per square meter.
    pub density: f64,
    pub bounds: Rect,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            density: 1.0 / 25.0,
            bounds: Rect {
                min: [0.0, -15.0],
                max: [40.0, 15.0],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Control period (s); the simulation advances in these steps.
    pub dt: f64,
    /// Depth capture rate (Hz); frames are reused between captures.
    pub camera_hz: f64,
    /// Depth sensor range (m).
    pub sensor_range: f64,
    /// Extra simulated time after the reference ends (s).
    pub settle_time: f64,
    /// Distance from the reference that counts as divergence (m).
    pub divergence_radius: f64,
    /// Final-position tolerance for goal-reaching success (m).
    pub goal_tolerance: f64,
    /// Box multiplier for the ground-truth collision arbiter. 1 = the
    /// physical vehicle; the planner's safety margin is separate.
    pub ground_truth_epsilon: f64,
    /// Master seed for the controller's random streams.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            camera_hz: 30.0,
            sensor_range: 13.0,
            settle_time: 2.0,
            divergence_radius: 100.0,
            goal_tolerance: 2.0,
            ground_truth_epsilon: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub vehicle: VehicleParams,
    pub controller: GmppiConfig<f64>,
    pub camera: CameraModel,
    pub trajectory: ReferenceTrajectory,
    pub forest: ForestConfig,
    pub run: RunConfig,
}

impl ScenarioConfig {
    // `!(x > 0)` rather than `x <= 0`: NaN must fail validation too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), String> {
        self.vehicle.validate()?;
        self.controller.validate().map_err(|e| e.to_string())?;
        self.camera.validate()?;
        if !(self.run.dt > 0.0) {
            return Err("run.dt must be positive".into());
        }
        if !(self.run.camera_hz > 0.0) {
            return Err("run.camera_hz must be positive".into());
        }
        if !(self.run.sensor_range > 0.0) {
            return Err("run.sensor_range must be positive".into());
        }
        if !(self.forest.density > 0.0) {
            return Err("forest.density must be positive".into());
        }
        Ok(())
    }
}

/// Camera tilt (degrees, optical axis pitched up) as a function of flight
/// speed, interpolated linearly between the calibrated rows and clamped at
/// the ends.
pub fn tilt_for_speed(speed: f64) -> f64 {
    const TABLE: [(f64, f64); 8] = [
        (3.0, 8.0),
        (5.0, 10.0),
        (7.0, 16.0),
        (9.0, 22.0),
        (10.0, 22.0),
        (11.0, 27.0),
        (12.0, 27.0),
        (13.0, 30.0),
    ];
    if speed <= TABLE[0].0 {
        return TABLE[0].1;
    }
    for w in TABLE.windows(2) {
        let (s0, t0) = w[0];
        let (s1, t1) = w[1];
        if speed <= s1 {
            return t0 + (t1 - t0) * (speed - s0) / (s1 - s0);
        }
    }
    TABLE[TABLE.len() - 1].1
}
