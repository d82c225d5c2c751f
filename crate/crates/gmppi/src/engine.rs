//! The sampling-based MPC engine: each control period it resamples the
//! previous plan onto a fresh timestep schedule, simulates K command
//! rollouts in parallel (a geometric block driven by a perturbed-gain
//! SE(3) controller plus noise-perturbed random rollouts), scores them
//! against the reference, the depth frame, and the nominal path, and
//! softmax-averages their commands into the next plan.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{clamp_command, rk4_step, rollout_open_loop};
use crate::math::{heading_angle_error, quat_distance, Vector3};
use crate::perception::{state_collision_count, CollisionBoxParams, DepthFrame};
use crate::real::{real, Real};
use crate::rngstream::rollout_rng;
use crate::schedule::{
    compute_timesteps, resample_commands, CostSchedule, CostScheduleConfig, NoiseSchedule,
    NoiseScheduleConfig, TimedCommands, TimestepParams, TimestepSchedule,
};
use crate::se3::{perturb_gains, se3_command, FlatReferencePoint, GainSigma, Se3Gains};
use crate::types::{Command, CommandLimits, State, VehicleParams};

#[derive(Debug, Error)]
pub enum GmppiError {
    #[error("non-finite state estimate")]
    NonFiniteState,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Feature switches isolating individual mechanisms for comparison runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    /// Replace the geometric rollouts with plain random ones.
    pub no_se3: bool,
    /// Equalize all timestep multipliers.
    pub const_dt: bool,
    /// Flatten the noise and cost schedules to their means.
    pub const_noise_cost: bool,
}

/// Engine tuning. Defaults follow the controller parameter table; schedule
/// shapes and the gain covariance are unpublished and tuned here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    default,
    bound(
        serialize = "T: Real + Serialize",
        deserialize = "T: Real + Deserialize<'de>"
    )
)]
pub struct GmppiConfig<T> {
    /// Total rollouts per iteration K.
    pub k_rollouts: usize,
    /// Leading block of geometric rollouts; kept a multiple of 32 for
    /// warp-style batch layouts.
    pub k_se3: usize,
    /// Softmax temperature λ.
    pub lambda: T,
    /// Proportional yaw steering gain toward the reference heading.
    pub yaw_gain: T,
    pub base_gains: Se3Gains<T>,
    pub gain_sigma: GainSigma<T>,
    pub timesteps: TimestepParams<T>,
    pub noise: NoiseScheduleConfig<T>,
    pub costs: CostScheduleConfig<T>,
    /// Collision-box safety multiplier ε.
    pub box_epsilon: T,
    /// Assumed obstacle depth d_a (m).
    pub assumed_depth: T,
    pub ablation: AblationFlags,
}

impl<T: Real> Default for GmppiConfig<T> {
    fn default() -> Self {
        Self {
            k_rollouts: 768,
            k_se3: 32,
            lambda: real(30.0),
            yaw_gain: real(2.0),
            base_gains: Se3Gains::default(),
            gain_sigma: GainSigma::default(),
            timesteps: TimestepParams::default(),
            noise: NoiseScheduleConfig::default(),
            costs: CostScheduleConfig::default(),
            box_epsilon: real(1.2),
            assumed_depth: real(2.0),
            ablation: AblationFlags::default(),
        }
    }
}

impl<T: Real> GmppiConfig<T> {
    // `!(x > 0)` rather than `x <= 0`: NaN must fail validation too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), GmppiError> {
        let err = |m: &str| Err(GmppiError::InvalidConfig(m.into()));
        if self.k_rollouts == 0 {
            return err("k_rollouts must be positive");
        }
        if self.k_se3 > self.k_rollouts {
            return err("k_se3 cannot exceed k_rollouts");
        }
        if !self.k_se3.is_multiple_of(32) {
            return err("k_se3 must be a multiple of 32");
        }
        if self.k_rollouts >= (1 << 16) {
            return err("k_rollouts must fit the rollout stream index");
        }
        if !(self.lambda > T::zero()) {
            return err("lambda must be positive");
        }
        if self.timesteps.n_steps < 2 {
            return err("rollouts need at least two steps");
        }
        if self.timesteps.near_steps == 0 || self.timesteps.near_steps >= self.timesteps.n_steps {
            return err("near step count must be in [1, n_steps)");
        }
        if !(self.timesteps.dt0 > T::zero()) {
            return err("dt0 must be positive");
        }
        if !(self.box_epsilon > T::one()) {
            return err("box_epsilon must exceed 1");
        }
        if !(self.assumed_depth > T::zero()) {
            return err("assumed_depth must be positive");
        }
        Ok(())
    }
}

/// Reference lookup over the rollout horizon; `dt` is seconds from now.
pub trait ReferenceProvider<T>: Sync {
    fn at(&self, dt: T) -> FlatReferencePoint<T>;
}

impl<T, F> ReferenceProvider<T> for F
where
    F: Fn(T) -> FlatReferencePoint<T> + Sync,
{
    fn at(&self, dt: T) -> FlatReferencePoint<T> {
        self(dt)
    }
}

/// All rollouts of one iteration, commands and states contiguous per
/// rollout.
#[derive(Debug, Clone)]
pub struct RolloutBatch<T> {
    pub k: usize,
    pub n: usize,
    pub commands: Vec<Command<T>>,
    pub states: Vec<State<T>>,
    pub costs: Vec<T>,
    pub weights: Vec<T>,
    pub collided: Vec<bool>,
}

impl<T: Real> RolloutBatch<T> {
    pub fn commands_of(&self, k: usize) -> &[Command<T>] {
        &self.commands[k * self.n..(k + 1) * self.n]
    }

    pub fn states_of(&self, k: usize) -> &[State<T>] {
        let stride = self.n + 1;
        &self.states[k * stride..(k + 1) * stride]
    }
}

/// Per-term cost sums of one rollout.
#[derive(Debug, Clone, Copy)]
pub struct CostTerms<T> {
    pub pos: T,
    pub vel: T,
    pub att: T,
    pub rate: T,
    pub jerk: T,
    pub nominal_dev: T,
    pub obstacle: T,
}

impl<T: Real> Default for CostTerms<T> {
    fn default() -> Self {
        Self {
            pos: T::zero(),
            vel: T::zero(),
            att: T::zero(),
            rate: T::zero(),
            jerk: T::zero(),
            nominal_dev: T::zero(),
            obstacle: T::zero(),
        }
    }
}

impl<T: Real> CostTerms<T> {
    pub fn total(&self) -> T {
        self.pos + self.vel + self.att + self.rate + self.jerk + self.nominal_dev + self.obstacle
    }
}

/// One rollout's score plus whether it touched assumed-occupied space.
#[derive(Debug, Clone, Copy)]
pub struct RolloutScore<T> {
    pub terms: CostTerms<T>,
    pub collided: bool,
}

/// One sampled rollout: N commands and the N+1 states they chain through.
pub type Rollout<T> = (Vec<Command<T>>, Vec<State<T>>);

/// Noise-perturbed rollout: additive Gaussian thrust/roll/pitch noise on
/// the nominal plan, yaw steered deterministically toward the reference
/// heading, commands clamped, states chained by the integrator.
#[allow(clippy::too_many_arguments)]
pub fn generate_random_rollout<T: Real, R: Rng>(
    x0: &State<T>,
    u_nom: &[Command<T>],
    dts: &[T],
    noise: &NoiseSchedule<T>,
    refs: &[FlatReferencePoint<T>],
    yaw_gain: T,
    params: &VehicleParams<T>,
    rng: &mut R,
) -> Rollout<T> {
    let n = u_nom.len();
    debug_assert_eq!(dts.len(), n);
    debug_assert_eq!(refs.len(), n + 1);
    let mut commands = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n + 1);
    states.push(*x0);
    let mut x = *x0;
    for j in 0..n {
        let (s_f, s_wx, s_wy) = noise.sigma[j];
        let d_f: f64 = rng.sample(StandardNormal);
        let d_wx: f64 = rng.sample(StandardNormal);
        let d_wy: f64 = rng.sample(StandardNormal);
        let (angle, _) = heading_angle_error(x.q, refs[j].h_ref);
        let u = clamp_command(
            Command {
                thrust: u_nom[j].thrust + s_f * T::of(d_f),
                body_rates: Vector3::new(
                    u_nom[j].body_rates.x + s_wx * T::of(d_wx),
                    u_nom[j].body_rates.y + s_wy * T::of(d_wy),
                    yaw_gain * angle + refs[j].w_ref.z,
                ),
            },
            &params.limits,
        );
        x = rk4_step(&x, &u, dts[j], params);
        commands.push(u);
        states.push(x);
    }
    (commands, states)
}

/// Geometric rollout: a gain-perturbed SE(3) controller closed over the
/// rollout's own simulated states. Commands come whole from the control
/// law (no additive noise, no yaw override).
#[allow(clippy::too_many_arguments)]
pub fn generate_se3_rollout<T: Real, R: Rng>(
    x0: &State<T>,
    base: &Se3Gains<T>,
    sigma: &GainSigma<T>,
    dts: &[T],
    refs: &[FlatReferencePoint<T>],
    params: &VehicleParams<T>,
    rng: &mut R,
    perturb: bool,
) -> Rollout<T> {
    let gains = if perturb {
        perturb_gains(base, sigma, rng)
    } else {
        *base
    };
    let n = dts.len();
    let mut commands = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n + 1);
    states.push(*x0);
    let mut x = *x0;
    for j in 0..n {
        let u = se3_command(&x, &refs[j], &gains, params);
        x = rk4_step(&x, &u, dts[j], params);
        commands.push(u);
        states.push(x);
    }
    (commands, states)
}

/// Seven-term stage cost summed over the rollout: tracking errors in
/// position/velocity/attitude/rates, excess jerk over a tolerance band
/// around the reference jerk, deviation from the nominal path, and the
/// horizon-weighted collision count (earlier collisions cost more).
pub fn rollout_cost<T: Real>(
    states: &[State<T>],
    dts: &[T],
    refs: &[FlatReferencePoint<T>],
    nominal_positions: &[Vector3<T>],
    frame: &DepthFrame,
    bx: &CollisionBoxParams,
    costs: &CostSchedule<T>,
) -> RolloutScore<T> {
    let n = dts.len();
    debug_assert_eq!(states.len(), n + 1);
    debug_assert_eq!(refs.len(), n + 1);
    debug_assert_eq!(nominal_positions.len(), n + 1);
    debug_assert_eq!(costs.coeffs.len(), n);

    let mut terms = CostTerms::default();
    let mut collided = false;
    let mut prev_accel: Option<Vector3<T>> = None;
    for j in 0..n {
        let x = &states[j + 1];
        let r = &refs[j + 1];
        let c = &costs.coeffs[j];

        terms.pos += c.pos * (x.p - r.p_ref).norm();
        terms.vel += c.vel * (x.v - r.v_ref).norm();
        terms.att += c.att * quat_distance(x.q, r.q_ref);
        terms.rate += c.rate * (x.w - r.w_ref).norm();
        terms.nominal_dev += c.nominal_dev * (x.p - nominal_positions[j + 1]).norm();

        let accel = (states[j + 1].v - states[j].v) / dts[j];
        if let Some(prev) = prev_accel {
            let half: T = real(0.5);
            let jerk = (accel - prev) / (half * (dts[j] + dts[j - 1]));
            let excess = (jerk.norm() - costs.jerk_tolerance * r.j_ref.norm()).max(T::zero());
            terms.jerk += c.jerk * excess;
        }
        prev_accel = Some(accel);

        let hits = state_collision_count(x.p.cast(), frame, bx);
        if hits > 0 {
            collided = true;
            terms.obstacle += c.obstacle * real((n - j) as f64) * real(hits as f64);
        }
    }
    RolloutScore { terms, collided }
}

/// Softmax weights over costs, anchored at the minimum for numerical
/// stability: w_k ∝ exp(−(C_k − min C)/λ), normalized to sum 1.
pub fn weights_from_costs<T: Real>(costs: &[T], lambda: T) -> Vec<T> {
    assert!(!costs.is_empty());
    let rho = costs.iter().copied().fold(T::infinity(), T::min);
    let mut weights: Vec<T> = costs
        .iter()
        .map(|&c| (-(c - rho) / lambda).exp())
        .collect();
    let total: T = weights.iter().copied().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Weighted per-step average of the rollout commands, clamped.
pub fn update_nominal<T: Real>(batch: &RolloutBatch<T>, limits: &CommandLimits<T>) -> Vec<Command<T>> {
    let mut out = vec![
        Command {
            thrust: T::zero(),
            body_rates: Vector3::zero(),
        };
        batch.n
    ];
    for k in 0..batch.k {
        let w = batch.weights[k];
        for (acc, u) in out.iter_mut().zip(batch.commands_of(k)) {
            acc.thrust += w * u.thrust;
            acc.body_rates += u.body_rates * w;
        }
    }
    for u in &mut out {
        *u = clamp_command(*u, limits);
    }
    out
}

/// Per-phase wall-clock spent inside one iteration (ns).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub schedule_ns: u64,
    pub resample_ns: u64,
    pub reference_ns: u64,
    pub nominal_ns: u64,
    pub rollouts_ns: u64,
    pub cost_ns: u64,
    pub weights_ns: u64,
    pub update_ns: u64,
    pub total_ns: u64,
}

/// Mean per-term cost over the batch.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CostTermMeans {
    pub pos: f64,
    pub vel: f64,
    pub att: f64,
    pub rate: f64,
    pub jerk: f64,
    pub nominal_dev: f64,
    pub obstacle: f64,
}

/// One iteration's health record, serialized as a JSON line per iteration.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: u64,
    pub k_rollouts: usize,
    pub k_se3: usize,
    pub n_far: f64,
    pub min_cost: f64,
    pub mean_cost: f64,
    pub max_cost: f64,
    /// Fraction of rollouts that touched assumed-occupied space.
    pub collision_fraction: f64,
    /// Total softmax weight carried by those rollouts.
    pub weight_on_colliding: f64,
    pub cost_means: CostTermMeans,
    pub timings: PhaseTimings,
}

/// Stateful controller: owns the nominal plan, the schedule inputs carried
/// between iterations, and the iteration counter that keys the random
/// streams.
pub struct GmppiController<T> {
    cfg: GmppiConfig<T>,
    params: VehicleParams<T>,
    noise: NoiseSchedule<T>,
    costs: CostSchedule<T>,
    nominal: TimedCommands<T>,
    v_avg: T,
    iteration: u64,
    master_seed: u64,
}

impl<T: Real> GmppiController<T> {
    pub fn new(
        cfg: GmppiConfig<T>,
        params: VehicleParams<T>,
        master_seed: u64,
    ) -> Result<Self, GmppiError> {
        cfg.validate()?;
        params.validate().map_err(GmppiError::InvalidConfig)?;
        let n = cfg.timesteps.n_steps;
        let mut noise = cfg.noise.build(n, cfg.timesteps.near_steps);
        let mut costs = cfg.costs.build(n);
        if cfg.ablation.const_noise_cost {
            noise = noise.flattened();
            costs = costs.flattened();
        }
        Ok(Self {
            cfg,
            params,
            noise,
            costs,
            nominal: TimedCommands::new(Vec::new(), Vec::new()),
            v_avg: T::zero(),
            iteration: 0,
            master_seed,
        })
    }

    pub fn config(&self) -> &GmppiConfig<T> {
        &self.cfg
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Discards the current plan (the next step replans from hover).
    pub fn reset(&mut self) {
        self.nominal = TimedCommands::new(Vec::new(), Vec::new());
        self.v_avg = T::zero();
    }

    /// Runs one full iteration and returns the command to execute now.
    pub fn step(
        &mut self,
        x: &State<T>,
        reference: &dyn ReferenceProvider<T>,
        frame: &DepthFrame,
    ) -> Result<(Command<T>, IterationDiagnostics), GmppiError> {
        if !x.is_finite() {
            return Err(GmppiError::NonFiniteState);
        }
        let t_start = Instant::now();
        let n = self.cfg.timesteps.n_steps;

        let t0 = Instant::now();
        let sched = compute_timesteps(
            self.v_avg,
            T::of(frame.range),
            &self.cfg.timesteps,
            self.cfg.ablation.const_dt,
        );
        let dts = sched.dts();
        let schedule_ns = t0.elapsed().as_nanos() as u64;

        let t0 = Instant::now();
        if self.nominal.is_empty() {
            self.nominal =
                TimedCommands::uniform(vec![Command::hover(&self.params); n], self.cfg.timesteps.dt0);
        }
        let u_nom = resample_commands(&self.nominal, &sched);
        let resample_ns = t0.elapsed().as_nanos() as u64;

        let t0 = Instant::now();
        let mut refs = Vec::with_capacity(n + 1);
        let mut t_acc = T::zero();
        refs.push(reference.at(T::zero()));
        for &dt in &dts {
            t_acc += dt;
            refs.push(reference.at(t_acc));
        }
        let reference_ns = t0.elapsed().as_nanos() as u64;

        let t0 = Instant::now();
        let nominal_states = rollout_open_loop(x, &u_nom, &dts, &self.params);
        let nominal_positions: Vec<Vector3<T>> = nominal_states.iter().map(|s| s.p).collect();
        let v_next = nominal_states.iter().map(|s| s.v.norm()).sum::<T>()
            / real((nominal_states.len()) as f64);
        let nominal_ns = t0.elapsed().as_nanos() as u64;

        let k = self.cfg.k_rollouts;
        let k_se3 = if self.cfg.ablation.no_se3 {
            0
        } else {
            self.cfg.k_se3
        };

        let t0 = Instant::now();
        let (master, iter) = (self.master_seed, self.iteration);
        let cfg = &self.cfg;
        let params = &self.params;
        let noise = &self.noise;
        let refs_ref = &refs;
        let u_nom_ref = &u_nom;
        let dts_ref = &dts;
        let rollouts: Vec<Rollout<T>> = (0..k)
            .into_par_iter()
            .map(|ki| {
                let mut rng = rollout_rng(master, iter, ki as u64);
                if ki < k_se3 {
                    generate_se3_rollout(
                        x,
                        &cfg.base_gains,
                        &cfg.gain_sigma,
                        dts_ref,
                        refs_ref,
                        params,
                        &mut rng,
                        ki != 0,
                    )
                } else {
                    generate_random_rollout(
                        x,
                        u_nom_ref,
                        dts_ref,
                        noise,
                        refs_ref,
                        cfg.yaw_gain,
                        params,
                        &mut rng,
                    )
                }
            })
            .collect();
        let rollouts_ns = t0.elapsed().as_nanos() as u64;

        let t0 = Instant::now();
        let bx = CollisionBoxParams {
            l: self.params.dims.x.to_f64(),
            w: self.params.dims.y.to_f64(),
            h: self.params.dims.z.to_f64(),
            epsilon: self.cfg.box_epsilon.to_f64(),
            d_a: self.cfg.assumed_depth.to_f64(),
        };
        let nom_pos = &nominal_positions;
        let costs_sched = &self.costs;
        let scores: Vec<RolloutScore<T>> = rollouts
            .par_iter()
            .map(|(_, states)| {
                rollout_cost(states, dts_ref, refs_ref, nom_pos, frame, &bx, costs_sched)
            })
            .collect();
        let cost_ns = t0.elapsed().as_nanos() as u64;

        let t0 = Instant::now();
        let cost_totals: Vec<T> = scores.iter().map(|s| s.terms.total()).collect();
        let weights = weights_from_costs(&cost_totals, self.cfg.lambda);
        let weights_ns = t0.elapsed().as_nanos() as u64;

        let t0 = Instant::now();
        let mut batch = RolloutBatch {
            k,
            n,
            commands: Vec::with_capacity(k * n),
            states: Vec::with_capacity(k * (n + 1)),
            costs: cost_totals,
            weights,
            collided: scores.iter().map(|s| s.collided).collect(),
        };
        for (cmds, states) in &rollouts {
            batch.commands.extend_from_slice(cmds);
            batch.states.extend_from_slice(states);
        }
        let new_nominal = update_nominal(&batch, &self.params.limits);
        let out = new_nominal[0];
        self.nominal = TimedCommands::new(new_nominal, dts.clone());
        self.nominal.advance(self.cfg.timesteps.dt0);
        self.v_avg = v_next;
        self.iteration += 1;
        let update_ns = t0.elapsed().as_nanos() as u64;

        let kf = k as f64;
        let mut means = CostTermMeans::default();
        let mut min_c = f64::INFINITY;
        let mut max_c = f64::NEG_INFINITY;
        let mut sum_c = 0.0;
        let mut weight_on_colliding = 0.0;
        let mut collided_count = 0usize;
        for (i, s) in scores.iter().enumerate() {
            let c = batch.costs[i].to_f64();
            min_c = min_c.min(c);
            max_c = max_c.max(c);
            sum_c += c;
            means.pos += s.terms.pos.to_f64() / kf;
            means.vel += s.terms.vel.to_f64() / kf;
            means.att += s.terms.att.to_f64() / kf;
            means.rate += s.terms.rate.to_f64() / kf;
            means.jerk += s.terms.jerk.to_f64() / kf;
            means.nominal_dev += s.terms.nominal_dev.to_f64() / kf;
            means.obstacle += s.terms.obstacle.to_f64() / kf;
            if s.collided {
                collided_count += 1;
                weight_on_colliding += batch.weights[i].to_f64();
            }
        }

        let diag = IterationDiagnostics {
            iteration: iter,
            k_rollouts: k,
            k_se3,
            n_far: sched.n.last().map(|m| Real::to_f64(*m)).unwrap_or(1.0),
            min_cost: min_c,
            mean_cost: sum_c / kf,
            max_cost: max_c,
            collision_fraction: collided_count as f64 / kf,
            weight_on_colliding,
            cost_means: means,
            timings: PhaseTimings {
                schedule_ns,
                resample_ns,
                reference_ns,
                nominal_ns,
                rollouts_ns,
                cost_ns,
                weights_ns,
                update_ns,
                total_ns: t_start.elapsed().as_nanos() as u64,
            },
        };
        Ok((out, diag))
    }
}

/// Schedule handle for tests and benchmarks that need the same grid the
/// controller would compute.
pub fn schedule_for<T: Real>(
    v_avg: T,
    sensor_range: T,
    cfg: &GmppiConfig<T>,
) -> TimestepSchedule<T> {
    compute_timesteps(v_avg, sensor_range, &cfg.timesteps, cfg.ablation.const_dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{BodyPose, CameraModel};
    use crate::Quat;

    type V = Vector3<f64>;

    fn empty_frame() -> DepthFrame {
        DepthFrame::empty(
            CameraModel::default(),
            BodyPose {
                p: V::zero(),
                q: Quat::identity(),
            },
            13.0,
        )
    }

    fn hover_provider(p: V) -> impl Fn(f64) -> FlatReferencePoint<f64> + Sync {
        move |_dt| FlatReferencePoint::hover_at(p)
    }

    #[test]
    fn softmax_matches_closed_form_pair() {
        let lambda = 7.3;
        let w = weights_from_costs(&[0.0, lambda * 2.0f64.ln()], lambda);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let costs = [3.0, 9.0, 1.5, 4.2, 100.0];
        let shifted: Vec<f64> = costs.iter().map(|c| c + 1234.5).collect();
        let w1 = weights_from_costs(&costs, 5.0);
        let w2 = weights_from_costs(&shifted, 5.0);
        for (a, b) in w1.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((w1.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w1.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn softmax_equal_costs_are_uniform_and_cold_limit_picks_argmin() {
        let w = weights_from_costs(&[4.0f64; 6], 2.0);
        for v in &w {
            assert_eq!(*v, 1.0 / 6.0);
        }
        // Ties at the minimum split uniformly as λ → 0.
        let w = weights_from_costs(&[5.0f64, 5.0, 9.0], 1e-9);
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
        assert!(w[2] < 1e-12);
    }

    #[test]
    fn softmax_survives_huge_cost_spreads() {
        let w = weights_from_costs(&[0.0f64, 1e9], 10.0);
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!(w[1] >= 0.0 && w[1] < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn tiny_batch(commands: Vec<Command<f64>>, k: usize, n: usize, weights: Vec<f64>) -> RolloutBatch<f64> {
        RolloutBatch {
            k,
            n,
            commands,
            states: vec![State::at_rest(V::zero()); k * (n + 1)],
            costs: vec![0.0; k],
            weights,
            collided: vec![false; k],
        }
    }

    #[test]
    fn nominal_update_averages_commands() {
        let c = |t: f64| Command::new(t, V::zero());
        let batch = tiny_batch(vec![c(10.0), c(12.0)], 2, 1, vec![0.5, 0.5]);
        let out = update_nominal(&batch, &CommandLimits::default());
        assert_eq!(out.len(), 1);
        assert!((out[0].thrust - 11.0).abs() < 1e-15);

        // Single rollout passes through (clamped).
        let batch = tiny_batch(vec![c(11.0), c(12.5)], 1, 2, vec![1.0]);
        let out = update_nominal(&batch, &CommandLimits::default());
        assert_eq!(out[0].thrust, 11.0);
        assert_eq!(out[1].thrust, 12.5);

        // Averages outside the envelope clamp.
        let batch = tiny_batch(vec![c(25.0), c(24.0)], 2, 1, vec![0.5, 0.5]);
        let out = update_nominal(&batch, &CommandLimits::default());
        assert_eq!(out[0].thrust, 20.6);
    }

    #[test]
    fn zero_noise_rollout_reproduces_the_nominal_plan() {
        let params = VehicleParams::default();
        let cfg = GmppiConfig::<f64>::default();
        let sched = schedule_for(1.0, 13.0, &cfg);
        let dts = sched.dts();
        let n = dts.len();
        let u_nom = vec![Command::hover(&params); n];
        let refs: Vec<_> = (0..=n)
            .map(|_| FlatReferencePoint::hover_at(V::new(0.0, 0.0, 1.5)))
            .collect();
        let zero_noise = NoiseSchedule {
            sigma: vec![(0.0, 0.0, 0.0); n],
        };
        let x0 = State::at_rest(V::new(0.0, 0.0, 1.5));
        let mut rng = rollout_rng(1, 0, 0);
        let (cmds, states) = generate_random_rollout(
            &x0, &u_nom, &dts, &zero_noise, &refs, 2.0, &params, &mut rng,
        );
        let expected = rollout_open_loop(&x0, &u_nom, &dts, &params);
        assert_eq!(states, expected);
        assert_eq!(cmds, u_nom);
    }

    #[test]
    fn noise_stds_match_the_schedule() {
        let params = VehicleParams::default();
        let n = 2;
        let dts = vec![0.01; n];
        let u_nom = vec![Command::hover(&params); n];
        let refs: Vec<_> = (0..=n)
            .map(|_| FlatReferencePoint::hover_at(V::zero()))
            .collect();
        let noise = NoiseSchedule {
            sigma: vec![(1.5, 0.8, 0.8); n],
        };
        let x0 = State::at_rest(V::zero());
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let draws = 50_000;
        for i in 0..draws {
            let mut rng = rollout_rng(9, 0, i);
            let (cmds, _) = generate_random_rollout(
                &x0, &u_nom, &dts, &noise, &refs, 2.0, &params, &mut rng,
            );
            let d = cmds[0].thrust - u_nom[0].thrust;
            sum += d;
            sum_sq += d * d;
        }
        let nf = draws as f64;
        let std = (sum_sq / nf - (sum / nf).powi(2)).sqrt();
        assert!(
            (std - 1.5).abs() < 0.02 * 1.5,
            "empirical thrust noise std {std}"
        );
    }

    #[test]
    fn se3_rollout_tracks_hover_from_offset() {
        let params = VehicleParams::default();
        let target = V::new(0.0, 0.0, 2.0);
        let n = 60;
        let dts = vec![0.05; n];
        let refs: Vec<_> = (0..=n)
            .map(|_| FlatReferencePoint::hover_at(target))
            .collect();
        let x0 = State::at_rest(target + V::new(0.5, 0.0, 0.0));
        let mut rng = rollout_rng(2, 0, 0);
        let (_, states) = generate_se3_rollout(
            &x0,
            &Se3Gains::default(),
            &GainSigma::default(),
            &dts,
            &refs,
            &params,
            &mut rng,
            false,
        );
        let initial = (x0.p - target).norm();
        let final_err = (states.last().unwrap().p - target).norm();
        assert!(
            final_err < 0.3 * initial,
            "final {final_err} vs initial {initial}"
        );

        // On-reference start stays on reference.
        let x0 = State::at_rest(target);
        let mut rng = rollout_rng(2, 0, 1);
        let (_, states) = generate_se3_rollout(
            &x0,
            &Se3Gains::default(),
            &GainSigma::default(),
            &dts,
            &refs,
            &params,
            &mut rng,
            false,
        );
        for s in &states {
            assert!((s.p - target).norm() < 1e-6);
        }
    }

    #[test]
    fn distinct_se3_rollouts_draw_distinct_gains() {
        let params = VehicleParams::default();
        let n = 2;
        let dts = vec![0.01; n];
        let refs: Vec<_> = (0..=n)
            .map(|_| FlatReferencePoint::hover_at(V::new(1.0, 0.0, 1.0)))
            .collect();
        let x0 = State::at_rest(V::zero());
        let mut first_commands = Vec::new();
        for k in 0..32 {
            let mut rng = rollout_rng(5, 0, k);
            let (cmds, _) = generate_se3_rollout(
                &x0,
                &Se3Gains::default(),
                &GainSigma::default(),
                &dts,
                &refs,
                &params,
                &mut rng,
                true,
            );
            first_commands.push(cmds[0]);
        }
        let distinct = first_commands
            .iter()
            .map(|c| format!("{:?}", c))
            .collect::<std::collections::HashSet<_>>()
            .len();
        assert_eq!(distinct, 32);
    }

    #[test]
    fn cost_is_zero_on_reference_and_isolates_position_error() {
        let n = 30;
        let dts = vec![0.01; n];
        let refs: Vec<_> = (0..=n)
            .map(|_| FlatReferencePoint::hover_at(V::new(0.0, 0.0, 1.5)))
            .collect();
        let on_ref: Vec<State<f64>> = (0..=n)
            .map(|_| State::at_rest(V::new(0.0, 0.0, 1.5)))
            .collect();
        let nominal: Vec<V> = on_ref.iter().map(|s| s.p).collect();
        let frame = empty_frame();
        let bx = CollisionBoxParams::from_vehicle(&VehicleParams::default(), 1.2, 2.0);
        let costs = CostScheduleConfig::<f64>::default().build(n);
        let score = rollout_cost(&on_ref, &dts, &refs, &nominal, &frame, &bx, &costs);
        assert_eq!(score.terms.total(), 0.0);
        assert!(!score.collided);

        // One state displaced 1 m at evaluation step j: only c_p(j)·1 and
        // the nominal-deviation term react (jerk stays zero because
        // velocities are untouched).
        let j = 7;
        let mut states = on_ref.clone();
        states[j + 1].p.x += 1.0;
        let score = rollout_cost(&states, &dts, &refs, &nominal, &frame, &bx, &costs);
        let expected = costs.coeffs[j].pos + costs.coeffs[j].nominal_dev;
        assert!((score.terms.total() - expected).abs() < 1e-12);
    }

    #[test]
    fn first_step_collision_carries_full_horizon_weight() {
        let n = 30;
        let dts = vec![0.01; n];
        let refs: Vec<_> = (0..=n)
            .map(|_| FlatReferencePoint::hover_at(V::new(3.5, 0.0, 0.0)))
            .collect();
        // All states sit fully inside a wall's assumed-occupied interval;
        // count the first evaluated state's contribution alone.
        let cam = CameraModel::default();
        let depths = vec![3.0f32; cam.width * cam.height];
        let frame = DepthFrame::new(
            depths,
            cam,
            BodyPose {
                p: V::zero(),
                q: Quat::identity(),
            },
            13.0,
        );
        let bx = CollisionBoxParams::from_vehicle(&VehicleParams::default(), 1.2, 2.0);
        let cfg = CostScheduleConfig::<f64> {
            pos_start: 0.0,
            pos_end: 0.0,
            att_start: 0.0,
            att_end: 0.0,
            ..Default::default()
        };
        let costs = cfg.build(n);
        let states: Vec<State<f64>> = (0..=n)
            .map(|_| State::at_rest(V::new(4.0, 0.0, 0.0)))
            .collect();
        let nominal: Vec<V> = states.iter().map(|s| s.p).collect();
        // Zero out every step after the first by truncating: compare full
        // cost against the same rollout with the collision removed from
        // step 0 only — the difference is 1000·N·9.
        let score_all = rollout_cost(&states, &dts, &refs, &nominal, &frame, &bx, &costs);
        let empty = empty_frame();
        let score_none = rollout_cost(&states, &dts, &refs, &nominal, &empty, &bx, &costs);
        let per_step: f64 = (1..=n).map(|j| 1000.0 * j as f64 * 9.0).sum();
        assert!((score_all.terms.obstacle - score_none.terms.obstacle - per_step).abs() < 1e-9);
        assert!(score_all.collided);
        // First evaluated step alone contributes 1000·30·9.
        let first_term = 1000.0 * 30.0 * 9.0;
        assert_eq!(first_term, 270000.0);
    }

    #[test]
    fn controller_holds_hover_near_equilibrium() {
        let cfg = GmppiConfig::<f64>::default();
        let params = VehicleParams::default();
        let mut ctrl = GmppiController::new(cfg, params, 12).unwrap();
        let x = State::at_rest(V::new(0.0, 0.0, 1.5));
        let provider = hover_provider(V::new(0.0, 0.0, 1.5));
        let frame = empty_frame();
        let (u, diag) = ctrl.step(&x, &provider, &frame).unwrap();
        let hover = params.hover_thrust();
        assert!(
            (u.thrust - hover).abs() < 0.05 * hover,
            "thrust {} vs hover {hover}",
            u.thrust
        );
        assert!(u.body_rates.norm() < 0.05, "rates {:?}", u.body_rates);
        assert_eq!(diag.collision_fraction, 0.0);
        assert_eq!(diag.k_se3, 32);
    }

    #[test]
    fn zero_noise_no_se3_iteration_fixes_the_nominal() {
        let mut cfg = GmppiConfig::<f64>::default();
        cfg.ablation.no_se3 = true;
        cfg.noise.sigma_thrust = 0.0;
        cfg.noise.sigma_rate = 0.0;
        cfg.k_rollouts = 64;
        let params = VehicleParams::default();
        let mut ctrl = GmppiController::new(cfg, params, 3).unwrap();
        let x = State::at_rest(V::new(0.0, 0.0, 1.5));
        let provider = hover_provider(V::new(0.0, 0.0, 1.5));
        let frame = empty_frame();
        let hover = Command::hover(&params);
        for _ in 0..3 {
            let (u, _) = ctrl.step(&x, &provider, &frame).unwrap();
            assert!((u.thrust - hover.thrust).abs() < 1e-12);
            assert!(u.body_rates.norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite_state_and_bad_config() {
        let cfg = GmppiConfig::<f64>::default();
        let params = VehicleParams::default();
        let mut ctrl = GmppiController::new(cfg, params, 1).unwrap();
        let mut x = State::at_rest(V::zero());
        x.p.x = f64::NAN;
        let provider = hover_provider(V::zero());
        let frame = empty_frame();
        assert!(matches!(
            ctrl.step(&x, &provider, &frame),
            Err(GmppiError::NonFiniteState)
        ));

        let bad = GmppiConfig::<f64> {
            k_se3: 33,
            ..Default::default()
        };
        assert!(GmppiController::new(bad, params, 1).is_err());
        let bad = GmppiConfig::<f64> {
            lambda: 0.0,
            ..Default::default()
        };
        assert!(GmppiController::new(bad, params, 1).is_err());
    }

    #[test]
    fn wall_ahead_strips_weight_from_colliding_rollouts() {
        let cfg = GmppiConfig::<f64>::default();
        let params = VehicleParams::default();
        let mut ctrl = GmppiController::new(cfg, params, 21).unwrap();

        // Flying at 5 m/s straight at a wall 4 m ahead.
        let mut x = State::at_rest(V::new(0.0, 0.0, 1.5));
        x.v = V::new(5.0, 0.0, 0.0);
        let cam = CameraModel::default();
        let mut depths = vec![0.0f32; cam.width * cam.height];
        for v in 0..cam.height {
            for u in 0..cam.width {
                let rx = (u as f64 - cam.cx) / cam.fx;
                let ry = (v as f64 - cam.cy) / cam.fy;
                depths[v * cam.width + u] = (4.0 * (rx * rx + ry * ry + 1.0).sqrt()) as f32;
            }
        }
        let frame = DepthFrame::new(
            depths,
            cam,
            BodyPose {
                p: x.p,
                q: x.q,
            },
            13.0,
        );
        let line = move |dt: f64| {
            let mut r = FlatReferencePoint::hover_at(V::new(5.0 * dt.min(4.0), 0.0, 1.5));
            r.v_ref = V::new(5.0, 0.0, 0.0);
            r
        };
        let (_, diag) = ctrl.step(&x, &line, &frame).unwrap();
        assert!(
            diag.collision_fraction > 0.3,
            "scenario should drive many rollouts into the wall (got {})",
            diag.collision_fraction
        );
        assert!(
            diag.weight_on_colliding < 0.01,
            "colliding rollouts keep weight {}",
            diag.weight_on_colliding
        );
    }

    #[test]
    fn iterations_are_bit_identical_across_thread_counts() {
        let run = |threads: usize| -> Vec<Command<f64>> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let cfg = GmppiConfig::<f64> {
                    k_rollouts: 128,
                    k_se3: 32,
                    ..Default::default()
                };
                let params = VehicleParams::default();
                let mut ctrl = GmppiController::new(cfg, params, 33).unwrap();
                let provider = hover_provider(V::new(0.0, 0.0, 1.5));
                let frame = empty_frame();
                let mut x = State::at_rest(V::new(0.3, -0.2, 1.0));
                let mut outs = Vec::new();
                for _ in 0..5 {
                    let (u, _) = ctrl.step(&x, &provider, &frame).unwrap();
                    x = rk4_step(&x, &u, 0.01, &params);
                    outs.push(u);
                }
                outs
            })
        };
        let a = run(1);
        let b = run(4);
        let c = run(8);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}
