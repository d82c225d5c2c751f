//! Run summaries computed from the closed-loop log.

use serde::{Deserialize, Serialize};

use crate::math::heading_angle_error;
use crate::{Command, State, Vec3};

/// One control step of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub state: State,
    pub command: Command,
    pub ref_p: Vec3,
    pub ref_heading: f64,
}

/// Full record of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    /// Control period between rows (s).
    pub dt: f64,
    pub success: bool,
    /// Worst ground-truth clearance to any tree (m); None without a forest.
    pub min_clearance: Option<f64>,
    /// Populated when the run ended abnormally.
    pub failure: Option<String>,
}

pub const CSV_HEADER: &str = "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,thrust,wcx,wcy,wcz,ref_px,ref_py,ref_pz,ref_heading";

impl RunLog {
    /// Serializes the log in the frozen column layout, one row per step.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 220 + 256);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let s = &r.state;
            let u = &r.command;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.t,
                s.p.x,
                s.p.y,
                s.p.z,
                s.v.x,
                s.v.y,
                s.v.z,
                s.q.w,
                s.q.x,
                s.q.y,
                s.q.z,
                s.w.x,
                s.w.y,
                s.w.z,
                u.thrust,
                u.body_rates.x,
                u.body_rates.y,
                u.body_rates.z,
                r.ref_p.x,
                r.ref_p.y,
                r.ref_p.z,
                r.ref_heading,
            ));
        }
        out
    }
}

/// Summary quantities of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub pos_rmse: f64,
    pub heading_rmse: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    pub success: bool,
    pub min_clearance: Option<f64>,
    pub iterations: usize,
}

/// Window-5 median filter, shrinking at the edges.
fn median5(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            let mut w: Vec<f64> = xs[lo..hi].to_vec();
            w.sort_by(|a, b| a.partial_cmp(b).unwrap());
            w[w.len() / 2]
        })
        .collect()
}

/// Position and heading RMSE over all samples, plus speed/acceleration
/// maxima. Acceleration comes from finite differences of the logged
/// velocity, median-filtered over 5 samples to suppress single-step
/// actuator transients.
pub fn compute_metrics(log: &RunLog) -> RunMetrics {
    assert!(!log.rows.is_empty(), "cannot summarize an empty log");
    let n = log.rows.len() as f64;
    let mut pos_sq = 0.0;
    let mut head_sq = 0.0;
    let mut max_speed: f64 = 0.0;
    for r in &log.rows {
        pos_sq += (r.state.p - r.ref_p).norm_squared();
        let h_ref = Vec3::new(r.ref_heading.cos(), r.ref_heading.sin(), 0.0);
        let (err, _) = heading_angle_error(r.state.q, h_ref);
        head_sq += err * err;
        max_speed = max_speed.max(r.state.v.norm());
    }
    let accel_norms: Vec<f64> = log
        .rows
        .windows(2)
        .map(|w| ((w[1].state.v - w[0].state.v) / log.dt).norm())
        .collect();
    let max_accel = median5(&accel_norms).into_iter().fold(0.0, f64::max);
    RunMetrics {
        pos_rmse: (pos_sq / n).sqrt(),
        heading_rmse: (head_sq / n).sqrt(),
        max_speed,
        max_accel,
        success: log.success,
        min_clearance: log.min_clearance,
        iterations: log.rows.len(),
    }
}
