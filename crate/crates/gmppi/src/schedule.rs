//! Per-step schedules driving the rollout engine: dynamic timestep
//! multipliers sized to the sensor horizon, mid-rollout-peaked command
//! noise, and stage-dependent cost coefficients.

use serde::{Deserialize, Serialize};

use crate::real::{real, Real};
use crate::types::Command;

/// Tuning for the dynamic-timestep rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimestepParams<T> {
    /// Base control period (s).
    pub dt0: T,
    /// Rollout length N.
    pub n_steps: usize,
    /// Count M of leading steps pinned to `n_near`.
    pub near_steps: usize,
    pub n_near: T,
    pub n_max: T,
    /// Floor on the average speed entering the far-step rule (m/s).
    pub v_min: T,
    /// Cap on the spatial rollout length (m).
    pub horizon_cap: T,
}

impl<T: Real> Default for TimestepParams<T> {
    fn default() -> Self {
        Self {
            dt0: real(0.01),
            n_steps: 30,
            near_steps: 10,
            n_near: T::one(),
            n_max: real(20.0),
            v_min: real(0.5),
            horizon_cap: real(10.0),
        }
    }
}

/// Per-step timestep multipliers: near steps at `n_near`, far steps sized
/// so the rollout covers the sensor horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepSchedule<T> {
    pub n: Vec<T>,
    pub dt0: T,
}

impl<T: Real> TimestepSchedule<T> {
    pub fn dts(&self) -> Vec<T> {
        self.n.iter().map(|&m| m * self.dt0).collect()
    }

    /// Step start times: t_j = Σ_{i<j} n_i·dt0, length N.
    pub fn start_times(&self) -> Vec<T> {
        let mut t = T::zero();
        self.n
            .iter()
            .map(|&m| {
                let s = t;
                t += m * self.dt0;
                s
            })
            .collect()
    }

    pub fn total_time(&self) -> T {
        self.n.iter().map(|&m| m * self.dt0).sum()
    }
}

/// Sizes the far-step multiplier so Σ n_j·dt0·v equals the usable sensor
/// horizon (range capped by the rollout length limit), with floors on
/// speed and multiplier to keep the rule bounded. `const_dt` equalizes all
/// multipliers while preserving the same target horizon.
pub fn compute_timesteps<T: Real>(
    v_avg_nom: T,
    sensor_range: T,
    p: &TimestepParams<T>,
    const_dt: bool,
) -> TimestepSchedule<T> {
    let s = sensor_range.min(p.horizon_cap);
    let v = v_avg_nom.max(p.v_min);
    let total_steps = s / (v * p.dt0);
    let n_steps = p.n_steps;
    let m = p.near_steps.min(n_steps);

    let n = if const_dt {
        let n_eq = (total_steps / real(n_steps as f64))
            .max(T::one())
            .min(p.n_max);
        vec![n_eq; n_steps]
    } else {
        let far_count = real((n_steps - m) as f64);
        let near_sum = p.n_near * real(m as f64);
        let n_far = if n_steps > m {
            ((total_steps - near_sum) / far_count)
                .max(p.n_near)
                .min(p.n_max)
        } else {
            p.n_near
        };
        let mut n = vec![p.n_near; n_steps];
        n[m..].fill(n_far);
        n
    };
    TimestepSchedule { n, dt0: p.dt0 }
}

/// Command sequence with explicit per-command durations, used to carry the
/// previous nominal plan across schedule changes.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedCommands<T> {
    pub commands: Vec<Command<T>>,
    pub dts: Vec<T>,
}

impl<T: Real> TimedCommands<T> {
    pub fn new(commands: Vec<Command<T>>, dts: Vec<T>) -> Self {
        assert_eq!(commands.len(), dts.len());
        Self { commands, dts }
    }

    pub fn uniform(commands: Vec<Command<T>>, dt: T) -> Self {
        let dts = vec![dt; commands.len()];
        Self { commands, dts }
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    /// Consumes `dt` from the front of the timeline (the part of the plan
    /// that has already been executed).
    pub fn advance(&mut self, mut dt: T) {
        while dt > T::zero() && !self.commands.is_empty() {
            if self.dts[0] > dt {
                self.dts[0] -= dt;
                break;
            }
            dt -= self.dts[0];
            self.commands.remove(0);
            self.dts.remove(0);
        }
    }
}

/// Zero-order-hold resampling of a timed command sequence onto a schedule
/// grid: each output step takes the command active at its start time, with
/// the last command extended past the input horizon.
pub fn resample_commands<T: Real>(
    seq: &TimedCommands<T>,
    sched: &TimestepSchedule<T>,
) -> Vec<Command<T>> {
    assert!(!seq.is_empty(), "cannot resample an empty command sequence");
    let mut knots = Vec::with_capacity(seq.dts.len());
    let mut t = T::zero();
    for &dt in &seq.dts {
        knots.push(t);
        t += dt;
    }
    // Knots within a sliver of a query time count as started: cumulative
    // sums of the two grids may disagree in the last bits even where the
    // grids align by construction. Step durations are >= dt0, so the
    // sliver can never skip a whole step.
    let tol = sched.dt0 * real(1e-6);
    sched
        .start_times()
        .into_iter()
        .map(|tj| {
            let idx = knots.partition_point(|&k| k <= tj + tol);
            seq.commands[idx.saturating_sub(1).min(seq.commands.len() - 1)]
        })
        .collect()
}

/// Piecewise-linear noise profile: quiet near steps, a mid-rollout peak,
/// and a tapered tail. Yaw rate carries no noise anywhere (yaw is steered
/// deterministically).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseScheduleConfig<T> {
    /// Peak thrust noise (N).
    pub sigma_thrust: T,
    /// Peak roll/pitch rate noise (rad/s).
    pub sigma_rate: T,
    /// Fraction of the peak applied to the near steps.
    pub near_frac: T,
    /// Fraction of the peak left at the final step.
    pub end_frac: T,
}

impl<T: Real> Default for NoiseScheduleConfig<T> {
    fn default() -> Self {
        Self {
            sigma_thrust: real(2.0),
            sigma_rate: real(2.0),
            near_frac: real(0.2),
            end_frac: real(0.5),
        }
    }
}

/// Per-step noise standard deviations (thrust, roll rate, pitch rate).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<T> {
    pub sigma: Vec<(T, T, T)>,
}

impl<T: Real> NoiseScheduleConfig<T> {
    /// Shape factor in [near_frac, 1] for step j of an N-step rollout with
    /// M near steps: flat before M, rising to 1 at the midpoint of the far
    /// block, falling to end_frac at the last step.
    fn shape(&self, j: usize, n_steps: usize, near_steps: usize) -> T {
        let m = near_steps.min(n_steps);
        if j < m {
            return self.near_frac;
        }
        let peak_j = m + (n_steps - m) / 2;
        if j <= peak_j {
            if peak_j == m {
                return T::one();
            }
            let f = real::<T>((j - m) as f64) / real((peak_j - m) as f64);
            self.near_frac + (T::one() - self.near_frac) * f
        } else {
            let last = n_steps - 1;
            if last == peak_j {
                return T::one();
            }
            let f = real::<T>((j - peak_j) as f64) / real((last - peak_j) as f64);
            T::one() + (self.end_frac - T::one()) * f
        }
    }

    pub fn build(&self, n_steps: usize, near_steps: usize) -> NoiseSchedule<T> {
        let sigma = (0..n_steps)
            .map(|j| {
                let s = self.shape(j, n_steps, near_steps);
                (self.sigma_thrust * s, self.sigma_rate * s, self.sigma_rate * s)
            })
            .collect();
        NoiseSchedule { sigma }
    }
}

impl<T: Real> NoiseSchedule<T> {
    /// Constant schedule at the per-component mean, for the flat-schedule
    /// ablation.
    pub fn flattened(&self) -> Self {
        let n = real::<T>(self.sigma.len() as f64);
        let sum = self.sigma.iter().fold(
            (T::zero(), T::zero(), T::zero()),
            |acc, &(a, b, c)| (acc.0 + a, acc.1 + b, acc.2 + c),
        );
        NoiseSchedule {
            sigma: vec![(sum.0 / n, sum.1 / n, sum.2 / n); self.sigma.len()],
        }
    }
}

/// Stage cost coefficients for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostCoeffs<T> {
    pub pos: T,
    pub vel: T,
    pub att: T,
    pub rate: T,
    pub jerk: T,
    pub nominal_dev: T,
    pub obstacle: T,
}

/// Linear start→end profiles for the stage-dependent coefficients;
/// tracking terms tighten early, velocity/effort terms grow toward the
/// horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostScheduleConfig<T> {
    pub pos_start: T,
    pub pos_end: T,
    pub vel_start: T,
    pub vel_end: T,
    pub att_start: T,
    pub att_end: T,
    pub rate_start: T,
    pub rate_end: T,
    pub jerk: T,
    pub nominal_dev: T,
    pub obstacle: T,
    /// Reference-jerk multiplier below which excess jerk is free.
    pub jerk_tolerance: T,
}

impl<T: Real> Default for CostScheduleConfig<T> {
    fn default() -> Self {
        Self {
            pos_start: real(4.0),
            pos_end: real(1.0),
            vel_start: real(1.0),
            vel_end: real(2.0),
            att_start: real(2.0),
            att_end: real(0.5),
            rate_start: real(0.5),
            rate_end: real(0.1),
            jerk: real(0.02),
            nominal_dev: real(0.3),
            obstacle: real(1000.0),
            jerk_tolerance: real(1.4),
        }
    }
}

/// Per-step cost coefficients plus the jerk tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSchedule<T> {
    pub coeffs: Vec<CostCoeffs<T>>,
    pub jerk_tolerance: T,
}

impl<T: Real> CostScheduleConfig<T> {
    pub fn build(&self, n_steps: usize) -> CostSchedule<T> {
        let lerp = |a: T, b: T, f: T| a + (b - a) * f;
        let denom = real::<T>(((n_steps - 1).max(1)) as f64);
        let coeffs = (0..n_steps)
            .map(|j| {
                let f = real::<T>(j as f64) / denom;
                CostCoeffs {
                    pos: lerp(self.pos_start, self.pos_end, f),
                    vel: lerp(self.vel_start, self.vel_end, f),
                    att: lerp(self.att_start, self.att_end, f),
                    rate: lerp(self.rate_start, self.rate_end, f),
                    jerk: self.jerk,
                    nominal_dev: self.nominal_dev,
                    obstacle: self.obstacle,
                }
            })
            .collect();
        CostSchedule {
            coeffs,
            jerk_tolerance: self.jerk_tolerance,
        }
    }
}

impl<T: Real> CostSchedule<T> {
    /// Constant schedule at per-coefficient means (obstacle and jerk
    /// settings kept), for the flat-schedule ablation.
    pub fn flattened(&self) -> Self {
        let n = real::<T>(self.coeffs.len() as f64);
        let mut sum = CostCoeffs {
            pos: T::zero(),
            vel: T::zero(),
            att: T::zero(),
            rate: T::zero(),
            jerk: T::zero(),
            nominal_dev: T::zero(),
            obstacle: T::zero(),
        };
        for c in &self.coeffs {
            sum.pos += c.pos;
            sum.vel += c.vel;
            sum.att += c.att;
            sum.rate += c.rate;
            sum.jerk += c.jerk;
            sum.nominal_dev += c.nominal_dev;
            sum.obstacle += c.obstacle;
        }
        let mean = CostCoeffs {
            pos: sum.pos / n,
            vel: sum.vel / n,
            att: sum.att / n,
            rate: sum.rate / n,
            jerk: sum.jerk / n,
            nominal_dev: sum.nominal_dev / n,
            obstacle: sum.obstacle / n,
        };
        CostSchedule {
            coeffs: vec![mean; self.coeffs.len()],
            jerk_tolerance: self.jerk_tolerance,
        }
    }
}
