//! Analytic reference trajectories with closed-form derivatives up to jerk.
//!
//! Every kind yields C³ position curves, so reference jerk is exact rather
//! than finite-differenced, and heading is the horizontal velocity direction
//! wherever that is defined.

use serde::{Deserialize, Serialize};

use crate::Vec3;

/// One sampled reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajPoint {
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
    pub j: Vec3,
    /// Unit horizontal heading direction.
    pub heading: Vec3,
}

fn default_duration() -> f64 {
    10.0
}
fn default_altitude() -> f64 {
    1.5
}
fn default_half_len_x() -> f64 {
    7.5
}
fn default_half_len_y() -> f64 {
    3.75
}
fn default_peak_speed() -> f64 {
    8.0
}
fn default_laps() -> f64 {
    1.0
}
fn default_ring_radius() -> f64 {
    5.0
}
fn default_roll_radius() -> f64 {
    3.0
}
fn default_pen_dist() -> f64 {
    5.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_theta_span() -> f64 {
    6.0 * std::f64::consts::PI
}
fn default_hypo_speed() -> f64 {
    5.0
}
fn default_line_speed() -> f64 {
    5.0
}
fn zero_vec() -> Vec3 {
    Vec3::zero()
}
fn default_line_end() -> Vec3 {
    Vec3::new(40.0, 0.0, 0.0)
}

/// Reference trajectory selector, config-facing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceTrajectory {
    Hover {
        #[serde(default = "zero_vec")]
        position: Vec3,
        /// Yaw of the reference heading, degrees from +x.
        #[serde(default)]
        heading_deg: f64,
        #[serde(default = "default_duration")]
        duration: f64,
    },
    /// Lissajous figure-8: x = A·sin(ωt), y = B·sin(2ωt) around a center.
    Figure8 {
        #[serde(default = "zero_vec")]
        center: Vec3,
        #[serde(default = "default_half_len_x")]
        half_len_x: f64,
        #[serde(default = "default_half_len_y")]
        half_len_y: f64,
        #[serde(default = "default_peak_speed")]
        peak_speed: f64,
        #[serde(default = "default_laps")]
        laps: f64,
        #[serde(default = "default_altitude")]
        altitude: f64,
    },
    /// Standard hypotrochoid traced at constant parameter rate; degenerates
    /// to a circle of radius ring−roll when pen_dist = 0.
    Hypotrochoid {
        #[serde(default = "zero_vec")]
        center: Vec3,
        #[serde(default = "default_ring_radius")]
        ring_radius: f64,
        #[serde(default = "default_roll_radius")]
        roll_radius: f64,
        #[serde(default = "default_pen_dist")]
        pen_dist: f64,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default = "default_hypo_speed")]
        peak_speed: f64,
        /// Parameter span of one lap; 6π closes the default 5:3 curve.
        #[serde(default = "default_theta_span")]
        theta_span: f64,
        #[serde(default = "default_laps")]
        laps: f64,
        #[serde(default = "default_altitude")]
        altitude: f64,
    },
    Line {
        #[serde(default = "zero_vec")]
        start: Vec3,
        #[serde(default = "default_line_end")]
        end: Vec3,
        #[serde(default = "default_line_speed")]
        speed: f64,
    },
}

fn heading_from_yaw(yaw_deg: f64) -> Vec3 {
    let r = yaw_deg.to_radians();
    Vec3::new(r.cos(), r.sin(), 0.0)
}

fn heading_from_velocity(v: Vec3, fallback: Vec3) -> Vec3 {
    v.horizontal()
        .normalized(1e-6)
        .unwrap_or(fallback)
}

impl Default for ReferenceTrajectory {
    fn default() -> Self {
        Self::Hover {
            position: Vec3::new(0.0, 0.0, 1.5),
            heading_deg: 0.0,
            duration: default_duration(),
        }
    }
}

impl ReferenceTrajectory {
    /// Angular rate of the curve parameter, chosen so the top speed along
    /// the curve equals the configured peak speed.
    fn parameter_rate(&self) -> f64 {
        match *self {
            ReferenceTrajectory::Figure8 {
                half_len_x,
                half_len_y,
                peak_speed,
                ..
            } => {
                // ‖v‖ is maximal where both cosines hit 1 simultaneously.
                let denom = (half_len_x.powi(2) + 4.0 * half_len_y.powi(2)).sqrt();
                peak_speed / denom.max(1e-9)
            }
            ReferenceTrajectory::Hypotrochoid {
                ring_radius,
                roll_radius,
                pen_dist,
                scale,
                peak_speed,
                ..
            } => {
                // ‖dp/dθ‖² = a² + (dc)² − 2adc·cos((1+c)θ), maximal at a+dc.
                let a = scale * (ring_radius - roll_radius);
                let c = (ring_radius - roll_radius) / roll_radius;
                let d = scale * pen_dist;
                peak_speed / (a.abs() + (d * c).abs()).max(1e-9)
            }
            _ => 0.0,
        }
    }

    pub fn duration(&self) -> f64 {
        match *self {
            ReferenceTrajectory::Hover { duration, .. } => duration,
            ReferenceTrajectory::Figure8 { laps, .. } => {
                laps * 2.0 * std::f64::consts::PI / self.parameter_rate()
            }
            ReferenceTrajectory::Hypotrochoid {
                theta_span, laps, ..
            } => laps * theta_span / self.parameter_rate(),
            ReferenceTrajectory::Line { start, end, speed } => {
                (end - start).norm() / speed.max(1e-9)
            }
        }
    }

    /// Samples the trajectory, clamping `t` into the span. The flag reports
    /// whether clamping occurred; a clamped sample is a hover at the
    /// endpoint (derivatives zeroed, heading kept).
    pub fn sample_checked(&self, t: f64) -> (TrajPoint, bool) {
        let dur = self.duration();
        let tc = t.clamp(0.0, dur);
        let clamped = tc != t;
        let mut pt = self.sample_raw(tc);
        if clamped {
            pt.v = Vec3::zero();
            pt.a = Vec3::zero();
            pt.j = Vec3::zero();
        }
        (pt, clamped)
    }

    /// Samples with silent clamping into the span.
    pub fn sample(&self, t: f64) -> TrajPoint {
        self.sample_checked(t).0
    }

    pub fn end_position(&self) -> Vec3 {
        self.sample(self.duration()).p
    }

    fn sample_raw(&self, t: f64) -> TrajPoint {
        match *self {
            ReferenceTrajectory::Hover {
                position,
                heading_deg,
                ..
            } => TrajPoint {
                p: position,
                v: Vec3::zero(),
                a: Vec3::zero(),
                j: Vec3::zero(),
                heading: heading_from_yaw(heading_deg),
            },
            ReferenceTrajectory::Figure8 {
                center,
                half_len_x,
                half_len_y,
                altitude,
                ..
            } => {
                let w = self.parameter_rate();
                let (s1, c1) = (w * t).sin_cos();
                let (s2, c2) = (2.0 * w * t).sin_cos();
                let (ax, ay) = (half_len_x, half_len_y);
                let p = center + Vec3::new(ax * s1, ay * s2, altitude);
                let v = Vec3::new(ax * w * c1, 2.0 * ay * w * c2, 0.0);
                let a = Vec3::new(-ax * w.powi(2) * s1, -4.0 * ay * w.powi(2) * s2, 0.0);
                let j = Vec3::new(-ax * w.powi(3) * c1, -8.0 * ay * w.powi(3) * c2, 0.0);
                TrajPoint {
                    p,
                    v,
                    a,
                    j,
                    heading: heading_from_velocity(v, Vec3::unit_x()),
                }
            }
            ReferenceTrajectory::Hypotrochoid {
                center,
                ring_radius,
                roll_radius,
                pen_dist,
                scale,
                altitude,
                ..
            } => {
                let om = self.parameter_rate();
                let a = scale * (ring_radius - roll_radius);
                let c = (ring_radius - roll_radius) / roll_radius;
                let d = scale * pen_dist;
                let th = om * t;
                let (s1, c1) = th.sin_cos();
                let (sc, cc) = (c * th).sin_cos();
                let p = center + Vec3::new(a * c1 + d * cc, a * s1 - d * sc, altitude);
                let v = Vec3::new(
                    om * (-a * s1 - d * c * sc),
                    om * (a * c1 - d * c * cc),
                    0.0,
                );
                let acc = Vec3::new(
                    om.powi(2) * (-a * c1 - d * c.powi(2) * cc),
                    om.powi(2) * (-a * s1 + d * c.powi(2) * sc),
                    0.0,
                );
                let j = Vec3::new(
                    om.powi(3) * (a * s1 + d * c.powi(3) * sc),
                    om.powi(3) * (-a * c1 + d * c.powi(3) * cc),
                    0.0,
                );
                TrajPoint {
                    p,
                    v,
                    a: acc,
                    j,
                    heading: heading_from_velocity(v, Vec3::unit_x()),
                }
            }
            ReferenceTrajectory::Line { start, end, speed } => {
                let dir = (end - start).normalized(1e-9).unwrap_or(Vec3::unit_x());
                let p = start + dir * (speed * t);
                let v = dir * speed;
                TrajPoint {
                    p,
                    v,
                    a: Vec3::zero(),
                    j: Vec3::zero(),
                    heading: heading_from_velocity(v, Vec3::unit_x()),
                }
            }
        }
    }
}
