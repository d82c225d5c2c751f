//! Closed-loop simulation: controller in the loop with the rigid-body
//! integrator, depth frames captured at sensor rate and reused between
//! captures, ground-truth collision arbitration against the forest, and
//! the frozen-format run log.

use crate::dynamics::rk4_step;
use crate::engine::{GmppiController, IterationDiagnostics};
use crate::perception::{BodyPose, DepthFrame};
use crate::se3::{flat_reference, se3_command};
use crate::sim::forest::{box_forest_clearance, Forest};
use crate::sim::metrics::{compute_metrics, LogRow, RunLog, RunMetrics};
use crate::sim::render::render_depth;
use crate::sim::scenario::ScenarioConfig;
use crate::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Gmppi,
    /// Geometric tracking baseline at the unperturbed base gains; ignores
    /// the depth sensor.
    Se3,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub metrics: RunMetrics,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// Runs one closed-loop flight and summarizes it. The vehicle starts on
/// the reference (flat state at t = 0), so tracking metrics measure the
/// controller rather than an initial-transient recovery.
pub fn run_closed_loop(
    cfg: &ScenarioConfig,
    kind: ControllerKind,
    forest: Option<&Forest>,
) -> RunOutcome {
    let params = cfg.vehicle;
    let traj = &cfg.trajectory;
    let dt = cfg.run.dt;
    let duration = traj.duration() + cfg.run.settle_time;
    let steps = (duration / dt).ceil() as usize;
    let capture_interval = 1.0 / cfg.run.camera_hz;

    let (r0, _) = flat_reference(traj, 0.0, &params);
    let mut x = State {
        p: r0.p_ref,
        v: r0.v_ref,
        q: r0.q_ref,
        w: r0.w_ref,
    };

    let mut controller = match kind {
        ControllerKind::Gmppi => Some(
            GmppiController::new(cfg.controller, params, cfg.run.seed)
                .expect("validated config"),
        ),
        ControllerKind::Se3 => None,
    };

    let mut frame: Option<DepthFrame> = None;
    let mut captures = 0u64;
    let mut rows = Vec::with_capacity(steps);
    let mut diagnostics = Vec::new();
    let mut min_clearance: Option<f64> = forest.map(|_| f64::INFINITY);
    let mut failure: Option<String> = None;

    for i in 0..steps {
        let t = i as f64 * dt;

        if controller.is_some() {
            let due = t + 1e-9 >= captures as f64 * capture_interval;
            if due || frame.is_none() {
                let pose = BodyPose { p: x.p, q: x.q };
                frame = Some(match forest {
                    Some(f) => render_depth(&pose, &cfg.camera, f, cfg.run.sensor_range),
                    None => DepthFrame::empty(cfg.camera, pose, cfg.run.sensor_range),
                });
                captures += 1;
            }
        }

        let u = match controller.as_mut() {
            Some(ctrl) => {
                let provider = |dt_rel: f64| flat_reference(traj, t + dt_rel, &params).0;
                match ctrl.step(&x, &provider, frame.as_ref().expect("captured above")) {
                    Ok((u, diag)) => {
                        diagnostics.push(diag);
                        u
                    }
                    Err(e) => {
                        failure = Some(format!("controller: {e}"));
                        break;
                    }
                }
            }
            None => {
                let (r, _) = flat_reference(traj, t, &params);
                se3_command(&x, &r, &cfg.controller.base_gains, &params)
            }
        };

        let ref_pt = traj.sample(t);
        rows.push(LogRow {
            t,
            state: x,
            command: u,
            ref_p: ref_pt.p,
            ref_heading: ref_pt.heading.y.atan2(ref_pt.heading.x),
        });

        if let (Some(f), Some(mc)) = (forest, min_clearance.as_mut()) {
            let c = box_forest_clearance(x.p, params.dims, cfg.run.ground_truth_epsilon, f);
            *mc = mc.min(c);
            if c <= 0.0 {
                failure = Some("collision".into());
                break;
            }
        }
        if !x.p.is_finite() || (x.p - ref_pt.p).norm() > cfg.run.divergence_radius {
            failure = Some("divergence".into());
            break;
        }

        x = rk4_step(&x, &u, dt, &params);
    }

    let reached_goal = rows
        .last()
        .map(|r| (r.state.p - traj.end_position()).norm() <= cfg.run.goal_tolerance)
        .unwrap_or(false);
    let success = failure.is_none() && reached_goal;
    if failure.is_none() && !reached_goal {
        failure = Some("goal not reached".into());
    }

    let log = RunLog {
        rows,
        dt,
        success,
        min_clearance,
        failure,
    };
    let metrics = compute_metrics(&log);
    RunOutcome {
        log,
        metrics,
        diagnostics,
    }
}
