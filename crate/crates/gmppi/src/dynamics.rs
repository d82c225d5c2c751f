//! Quadrotor plant: thrust + linear body drag + gravity, quaternion attitude
//! kinematics, and a first-order surrogate for the low-level rate loop,
//! integrated with classical RK4.

use crate::math::Vector3;
use crate::real::{real, Real};
use crate::types::{Command, CommandLimits, RateTracking, State, VehicleParams};

/// Time derivative of `State`. The quaternion rate is a raw (non-unit)
/// quaternion, scalar part first.
#[derive(Debug, Clone, Copy)]
pub struct StateDerivative<T> {
    pub dp: Vector3<T>,
    pub dv: Vector3<T>,
    pub dq_w: T,
    pub dq_vec: Vector3<T>,
    pub dw: Vector3<T>,
}

/// Clamps every command channel to its actuation interval. Idempotent.
pub fn clamp_command<T: Real>(u: Command<T>, limits: &CommandLimits<T>) -> Command<T> {
    Command {
        thrust: u.thrust.max(limits.thrust_min).min(limits.thrust_max),
        body_rates: Vector3::new(
            u.body_rates.x.max(-limits.rate_xy_max).min(limits.rate_xy_max),
            u.body_rates.y.max(-limits.rate_xy_max).min(limits.rate_xy_max),
            u.body_rates.z.max(-limits.rate_z_max).min(limits.rate_z_max),
        ),
    }
}

/// Continuous dynamics: ṗ = v; v̇ = (1/m)·R(q)([0,0,F]ᵀ − D·R(q)ᵀv) + g;
/// q̇ = ½ q ⊙ [0, ω]; ω̇ per the configured rate-tracking mode.
///
/// Commands are taken as given; clamping is the caller's responsibility.
pub fn state_derivative<T: Real>(
    x: &State<T>,
    u: &Command<T>,
    p: &VehicleParams<T>,
) -> StateDerivative<T> {
    let v_body = x.q.rotate_inverse(x.v);
    let thrust_body = Vector3::new(T::zero(), T::zero(), u.thrust);
    let force_body = thrust_body - v_body.scale_by(p.drag_diag);
    let dv = x.q.rotate(force_body) / p.mass + p.gravity;

    let half: T = real(0.5);
    let (qw, qx, qy, qz) = (x.q.w, x.q.x, x.q.y, x.q.z);
    let w = x.w;
    let dq_w = -half * (qx * w.x + qy * w.y + qz * w.z);
    let dq_vec = Vector3::new(
        half * (qw * w.x + qy * w.z - qz * w.y),
        half * (qw * w.y + qz * w.x - qx * w.z),
        half * (qw * w.z + qx * w.y - qy * w.x),
    );

    let dw = match p.rate_tracking {
        RateTracking::FirstOrder { gain } => {
            let j = p.inertia_diag;
            let jw = w.scale_by(j);
            let gyro = w.cross(jw);
            (u.body_rates - w) * gain
                - Vector3::new(gyro.x / j.x, gyro.y / j.y, gyro.z / j.z)
        }
        // Rates are pinned to the setpoint by the integrator instead.
        RateTracking::Perfect => Vector3::zero(),
    };

    StateDerivative {
        dp: x.v,
        dv,
        dq_w,
        dq_vec,
        dw,
    }
}

fn add_scaled<T: Real>(x: &State<T>, d: &StateDerivative<T>, h: T) -> State<T> {
    let q = crate::math::UnitQuat {
        w: x.q.w + d.dq_w * h,
        x: x.q.x + d.dq_vec.x * h,
        y: x.q.y + d.dq_vec.y * h,
        z: x.q.z + d.dq_vec.z * h,
    }
    .normalized();
    State {
        p: x.p + d.dp * h,
        v: x.v + d.dv * h,
        q,
        w: x.w + d.dw * h,
    }
}

fn rk4_single<T: Real>(x: &State<T>, u: &Command<T>, dt: T, p: &VehicleParams<T>) -> State<T> {
    let half = dt * real(0.5);
    let k1 = state_derivative(x, u, p);
    let x2 = add_scaled(x, &k1, half);
    let k2 = state_derivative(&x2, u, p);
    let x3 = add_scaled(x, &k2, half);
    let k3 = state_derivative(&x3, u, p);
    let x4 = add_scaled(x, &k3, dt);
    let k4 = state_derivative(&x4, u, p);

    let two: T = real(2.0);
    let sixth = dt / real(6.0);
    let combined = StateDerivative {
        dp: k1.dp + (k2.dp + k3.dp) * two + k4.dp,
        dv: k1.dv + (k2.dv + k3.dv) * two + k4.dv,
        dq_w: k1.dq_w + (k2.dq_w + k3.dq_w) * two + k4.dq_w,
        dq_vec: k1.dq_vec + (k2.dq_vec + k3.dq_vec) * two + k4.dq_vec,
        dw: k1.dw + (k2.dw + k3.dw) * two + k4.dw,
    };
    add_scaled(x, &combined, sixth)
}

/// Substep count keeping RK4 inside its stability region for the rate-loop
/// pole and the per-step rotation small enough for the linearized
/// quaternion staging.
fn substeps<T: Real>(x: &State<T>, u: &Command<T>, dt: T, p: &VehicleParams<T>) -> usize {
    let mut need = T::one();
    if let RateTracking::FirstOrder { gain } = p.rate_tracking {
        need = need.max(dt * gain / real(2.0));
    }
    let rot = x.w.norm().max(u.body_rates.norm()) * dt / real(0.5);
    need = need.max(rot);
    let n = need.ceil().to_f64() as usize;
    n.max(1)
}

/// Advances the state by `dt` under a zero-order-hold command.
///
/// Internally splits the step when `dt` is large relative to the rate-loop
/// bandwidth or the commanded rotation; a single step is used at the base
/// control period.
pub fn rk4_step<T: Real>(x: &State<T>, u: &Command<T>, dt: T, p: &VehicleParams<T>) -> State<T> {
    let mut x = *x;
    if matches!(p.rate_tracking, RateTracking::Perfect) {
        x.w = u.body_rates;
    }
    let n = substeps(&x, u, dt, p);
    let h = dt / real(n as f64);
    for _ in 0..n {
        x = rk4_single(&x, u, h, p);
    }
    x
}

/// Forward-integrates one command sequence with per-step durations.
/// Returns N+1 states including the initial one.
pub fn rollout_open_loop<T: Real>(
    x0: &State<T>,
    us: &[Command<T>],
    dts: &[T],
    p: &VehicleParams<T>,
) -> Vec<State<T>> {
    assert_eq!(us.len(), dts.len());
    let mut out = Vec::with_capacity(us.len() + 1);
    out.push(*x0);
    let mut x = *x0;
    for (u, &dt) in us.iter().zip(dts) {
        x = rk4_step(&x, u, dt, p);
        out.push(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::UnitQuat;
    use proptest::prelude::*;

    fn params() -> VehicleParams<f64> {
        VehicleParams::default()
    }

    fn zero_cmd() -> Command<f64> {
        Command::new(0.0, Vector3::zero())
    }

    #[test]
    fn hover_is_an_equilibrium_of_the_derivative() {
        let p = params();
        let x = State::at_rest(Vector3::zero());
        let d = state_derivative(&x, &Command::hover(&p), &p);
        assert!(d.dv.norm() < 1e-9);
        assert_eq!(d.dp, Vector3::zero());
        assert_eq!(d.dw, Vector3::zero());
    }

    #[test]
    fn free_fall_acceleration_is_gravity() {
        let p = params();
        let x = State::at_rest(Vector3::zero());
        let d = state_derivative(&x, &zero_cmd(), &p);
        assert_eq!(d.dv, Vector3::new(0.0, 0.0, -9.81));
    }

    #[test]
    fn drag_deceleration_matches_hand_evaluation() {
        let p = params();
        let mut x = State::at_rest(Vector3::zero());
        x.v = Vector3::new(1.0, 0.0, 0.0);
        let d = state_derivative(&x, &zero_cmd(), &p);
        assert!((d.dv.x - (-0.28 / 1.21)).abs() < 1e-15);
        assert_eq!(d.dv.y, 0.0);
        assert!((d.dv.z - (-9.81)).abs() < 1e-15);
    }

    #[test]
    fn hover_is_a_fixed_point_of_rk4() {
        let p = params();
        let x0 = State::at_rest(Vector3::new(1.0, -2.0, 3.0));
        let x1 = rk4_step(&x0, &Command::hover(&p), 0.01, &p);
        assert!((x1.p - x0.p).norm() < 1e-9);
        assert!(x1.v.norm() < 1e-9);
        assert!(crate::math::quat_distance(x1.q, x0.q) < 1e-18);
        assert!(x1.w.norm() < 1e-9);
    }

    #[test]
    fn free_fall_one_second_matches_constant_acceleration() {
        let mut p = params();
        p.drag_diag = Vector3::zero();
        let mut x = State::at_rest(Vector3::zero());
        for _ in 0..100 {
            x = rk4_step(&x, &zero_cmd(), 0.01, &p);
        }
        assert!((x.p.z - (-4.905)).abs() < 1e-9);
        assert!((x.v.z - (-9.81)).abs() < 1e-9);
    }

    #[test]
    fn step_halving_shows_fourth_order_convergence() {
        let p = params();
        let mut x0 = State::at_rest(Vector3::zero());
        x0.v = Vector3::new(1.0, -0.5, 0.3);
        x0.q = UnitQuat::from_axis_angle(Vector3::new(0.2, 1.0, -0.3), 0.4);
        x0.w = Vector3::new(1.5, -2.0, 0.8);
        let u = Command::new(13.0, Vector3::new(2.0, -1.0, 0.5));

        let total = 0.08;
        let run = |h: f64| {
            let n = (total / h).round() as usize;
            let mut x = x0;
            for _ in 0..n {
                x = rk4_step(&x, &u, h, &p);
            }
            x
        };
        let diff = |a: &State<f64>, b: &State<f64>| {
            ((a.p - b.p).norm_squared()
                + (a.v - b.v).norm_squared()
                + (a.w - b.w).norm_squared())
            .sqrt()
        };
        let xa = run(0.008);
        let xb = run(0.004);
        let xc = run(0.002);
        let order = (diff(&xa, &xb) / diff(&xb, &xc)).log2();
        assert!(
            (order - 4.0).abs() < 0.3,
            "observed convergence order {order}"
        );
    }

    #[test]
    fn clamp_matches_limit_table() {
        let lim = CommandLimits::<f64>::default();
        let c = clamp_command(Command::new(25.0, Vector3::new(12.0, -12.0, 3.0)), &lim);
        assert_eq!(c.thrust, 20.6);
        assert_eq!(c.body_rates, Vector3::new(10.0, -10.0, 2.0));

        let interior = Command::new(11.87, Vector3::zero());
        assert_eq!(clamp_command(interior, &lim), interior);

        let again = clamp_command(c, &lim);
        assert_eq!(again, c);
    }

    #[test]
    fn ballistic_energy_is_conserved_without_thrust_and_drag() {
        let mut p = params();
        p.drag_diag = Vector3::zero();
        let mut x = State::at_rest(Vector3::zero());
        x.v = Vector3::new(3.0, 1.0, 4.0);
        x.w = Vector3::new(1.0, -0.7, 0.4);
        let energy = |x: &State<f64>| 0.5 * p.mass * x.v.norm_squared() + p.mass * 9.81 * x.p.z;
        let e0 = energy(&x);
        for _ in 0..1000 {
            x = rk4_step(&x, &zero_cmd(), 0.001, &p);
        }
        assert!(((energy(&x) - e0) / e0.abs()).abs() < 1e-6);
    }

    #[test]
    fn perfect_rate_tracking_pins_rates_to_the_command() {
        let mut p = params();
        p.rate_tracking = RateTracking::Perfect;
        let x = State::at_rest(Vector3::zero());
        let u = Command::new(11.8701, Vector3::new(0.3, -0.2, 0.1));
        let x1 = rk4_step(&x, &u, 0.01, &p);
        assert_eq!(x1.w, u.body_rates);
    }

    #[test]
    fn long_steps_stay_stable_under_the_rate_loop() {
        // dt·gain = 10 is far outside the single-step RK4 stability region;
        // the internal split must keep the rates bounded and converging.
        let p = params();
        let mut x = State::at_rest(Vector3::zero());
        let u = Command::new(11.8701, Vector3::new(1.0, 0.0, 0.0));
        for _ in 0..10 {
            x = rk4_step(&x, &u, 0.2, &p);
            assert!(x.is_finite());
            assert!(x.w.norm() < 12.0);
        }
        assert!((x.w.x - 1.0).abs() < 0.05);
    }

    #[test]
    fn open_loop_rollout_chains_single_steps() {
        let p = params();
        let mut x0 = State::at_rest(Vector3::zero());
        x0.v = Vector3::new(0.5, 0.0, 0.0);
        let us = vec![
            Command::new(12.0, Vector3::new(0.1, 0.0, 0.0)),
            Command::new(11.0, Vector3::new(0.0, 0.2, 0.0)),
            Command::new(11.5, Vector3::new(0.0, 0.0, -0.1)),
        ];
        let dts = vec![0.01, 0.02, 0.01];
        let states = rollout_open_loop(&x0, &us, &dts, &p);
        assert_eq!(states.len(), 4);
        let mut x = x0;
        for (i, (u, &dt)) in us.iter().zip(&dts).enumerate() {
            x = rk4_step(&x, u, dt, &p);
            assert_eq!(states[i + 1], x);
        }

        assert_eq!(rollout_open_loop(&x0, &[], &[], &p), vec![x0]);

        let hover = vec![Command::hover(&p); 50];
        let dts = vec![0.01; 50];
        let x0 = State::at_rest(Vector3::new(0.0, 0.0, 1.5));
        for s in rollout_open_loop(&x0, &hover, &dts, &p) {
            assert!((s.p - x0.p).norm() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(
            thrust in -5.0f64..30.0,
            rates in prop::array::uniform3(-15.0f64..15.0),
        ) {
            let lim = CommandLimits::<f64>::default();
            let once = clamp_command(Command::new(thrust, rates.into()), &lim);
            prop_assert_eq!(clamp_command(once, &lim), once);
            prop_assert!(once.thrust >= lim.thrust_min && once.thrust <= lim.thrust_max);
            prop_assert!(once.body_rates.x.abs() <= lim.rate_xy_max);
            prop_assert!(once.body_rates.z.abs() <= lim.rate_z_max);
        }

        #[test]
        fn drag_never_adds_kinetic_energy(
            v in prop::array::uniform3(-10.0f64..10.0),
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in -3.0f64..3.0,
        ) {
            prop_assume!(Vector3::from(axis).norm() > 1e-3);
            let mut p = params();
            p.gravity = Vector3::zero();
            let mut x = State::at_rest(Vector3::zero());
            x.v = v.into();
            x.q = UnitQuat::from_axis_angle(axis.into(), angle);
            let d = state_derivative(&x, &zero_cmd(), &p);
            prop_assert!(x.v.dot(d.dv) <= 1e-12);
        }

        #[test]
        fn attitude_stays_unit_over_many_steps(
            rates in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let p = params();
            let mut x = State::at_rest(Vector3::zero());
            let u = Command::new(11.8701, rates.into());
            for _ in 0..200 {
                x = rk4_step(&x, &u, 0.01, &p);
            }
            prop_assert!((x.q.norm() - 1.0).abs() < 1e-9);
        }
    }
}
