//! Geometric tracking controller on SE(3), emitting collective thrust plus
//! body rates. Used standalone as a baseline and, with perturbed gains,
//! to seed the geometric rollouts.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::clamp_command;
use crate::math::{UnitQuat, Vector3, DEGENERACY_EPS};
use crate::real::{real, Real};
use crate::trajectory::ReferenceTrajectory;
use crate::types::{Command, State, VehicleParams};

/// Diagonal feedback gains, xy/z split per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Se3Gains<T> {
    pub kp_xy: T,
    pub kp_z: T,
    pub kv_xy: T,
    pub kv_z: T,
    pub kr_xy: T,
    pub kr_z: T,
}

impl<T: Real> Default for Se3Gains<T> {
    fn default() -> Self {
        Self {
            kp_xy: real(6.0),
            kp_z: real(15.0),
            kv_xy: real(4.0),
            kv_z: real(8.0),
            kr_xy: real(5.0),
            kr_z: real(5.0),
        }
    }
}

impl<T: Real> Se3Gains<T> {
    fn as_array(self) -> [T; 6] {
        [self.kp_xy, self.kp_z, self.kv_xy, self.kv_z, self.kr_xy, self.kr_z]
    }

    fn from_array(a: [T; 6]) -> Self {
        Self {
            kp_xy: a[0],
            kp_z: a[1],
            kv_xy: a[2],
            kv_z: a[3],
            kr_xy: a[4],
            kr_z: a[5],
        }
    }

    pub fn cast<U: Real>(self) -> Se3Gains<U> {
        Se3Gains::from_array(self.as_array().map(|g| U::of(g.to_f64())))
    }
}

/// Per-gain perturbation scale for the geometric rollouts. Defaults to 10%
/// of each base gain; the original tuning is unpublished, so these are
/// config knobs rather than fixed constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainSigma<T> {
    pub kp_xy: T,
    pub kp_z: T,
    pub kv_xy: T,
    pub kv_z: T,
    pub kr_xy: T,
    pub kr_z: T,
}

impl<T: Real> Default for GainSigma<T> {
    fn default() -> Self {
        Self {
            kp_xy: real(0.6),
            kp_z: real(1.5),
            kv_xy: real(0.4),
            kv_z: real(0.8),
            kr_xy: real(0.5),
            kr_z: real(0.5),
        }
    }
}

impl<T: Real> GainSigma<T> {
    fn as_array(self) -> [T; 6] {
        [self.kp_xy, self.kp_z, self.kv_xy, self.kv_z, self.kr_xy, self.kr_z]
    }

    pub fn cast<U: Real>(self) -> GainSigma<U> {
        let a = self.as_array().map(|g| U::of(g.to_f64()));
        GainSigma {
            kp_xy: a[0],
            kp_z: a[1],
            kv_xy: a[2],
            kv_z: a[3],
            kr_xy: a[4],
            kr_z: a[5],
        }
    }
}

/// Flat reference sample: position chain up to jerk, heading, and the
/// attitude/rate pair implied by differential flatness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatReferencePoint<T> {
    pub p_ref: Vector3<T>,
    pub v_ref: Vector3<T>,
    pub a_ref: Vector3<T>,
    pub j_ref: Vector3<T>,
    /// Unit horizontal heading.
    pub h_ref: Vector3<T>,
    pub q_ref: UnitQuat<T>,
    pub w_ref: Vector3<T>,
}

impl<T: Real> FlatReferencePoint<T> {
    pub fn hover_at(p: Vector3<T>) -> Self {
        Self {
            p_ref: p,
            v_ref: Vector3::zero(),
            a_ref: Vector3::zero(),
            j_ref: Vector3::zero(),
            h_ref: Vector3::unit_x(),
            q_ref: UnitQuat::identity(),
            w_ref: Vector3::zero(),
        }
    }

    pub fn cast<U: Real>(self) -> FlatReferencePoint<U> {
        FlatReferencePoint {
            p_ref: self.p_ref.cast(),
            v_ref: self.v_ref.cast(),
            a_ref: self.a_ref.cast(),
            j_ref: self.j_ref.cast(),
            h_ref: self.h_ref.cast(),
            q_ref: self.q_ref.cast(),
            w_ref: self.w_ref.cast(),
        }
    }
}

/// Desired-attitude triad from a thrust direction and a heading: body z
/// along `z_d`, body x as the heading orthogonalized against z.
/// Falls back to the current attitude's heading when the two are parallel.
fn attitude_from_thrust_and_heading<T: Real>(
    z_d: Vector3<T>,
    h_ref: Vector3<T>,
    current: UnitQuat<T>,
) -> (Vector3<T>, Vector3<T>, Vector3<T>) {
    let eps = real(DEGENERACY_EPS);
    let pick = |h: Vector3<T>| -> Option<Vector3<T>> {
        if z_d.cross(h).norm() < eps {
            return None;
        }
        (h - z_d * h.dot(z_d)).normalized(eps)
    };
    let x_d = pick(h_ref)
        .or_else(|| pick(current.heading()))
        .unwrap_or_else(|| {
            // Thrust axis horizontal and aligned with every candidate
            // heading; any orthogonal axis is as good as another.
            pick(Vector3::unit_x()).unwrap_or_else(Vector3::unit_y)
        });
    let y_d = z_d.cross(x_d);
    (x_d, y_d, z_d)
}

/// Geometric tracking law: PD force in the world frame mapped to collective
/// thrust along the current body z, rotation error from the vee map, body
/// rates from attitude feedback plus the reference rates. Output is clamped.
pub fn se3_command<T: Real>(
    x: &State<T>,
    r: &FlatReferencePoint<T>,
    k: &Se3Gains<T>,
    p: &VehicleParams<T>,
) -> Command<T> {
    let e_p = x.p - r.p_ref;
    let e_v = x.v - r.v_ref;
    let fb = Vector3::new(
        -k.kp_xy * e_p.x - k.kv_xy * e_v.x,
        -k.kp_xy * e_p.y - k.kv_xy * e_v.y,
        -k.kp_z * e_p.z - k.kv_z * e_v.z,
    );
    let f_des = fb + Vector3::new(T::zero(), T::zero(), p.mass * p.g_mag()) + r.a_ref * p.mass;

    let (b1, b2, b3) = x.q.axes();
    let thrust = f_des.dot(b3);

    let body_rates = match f_des.normalized(real(1e-6)) {
        None => r.w_ref,
        Some(z_d) => {
            let (d1, d2, d3) = attitude_from_thrust_and_heading(z_d, r.h_ref, x.q);
            let half: T = real(0.5);
            // e_R = ½(R_dᵀR − RᵀR_d)ᵛ expanded over the two triads.
            let e_r = Vector3::new(
                half * (d3.dot(b2) - d2.dot(b3)),
                half * (d1.dot(b3) - d3.dot(b1)),
                half * (d2.dot(b1) - d1.dot(b2)),
            );
            Vector3::new(
                -k.kr_xy * e_r.x,
                -k.kr_xy * e_r.y,
                -k.kr_z * e_r.z,
            ) + r.w_ref
        }
    };

    clamp_command(Command { thrust, body_rates }, &p.limits)
}

/// Adds zero-mean Gaussian noise to each gain, clamping negatives to zero.
/// Always consumes six draws so parallel streams stay aligned for any sigma.
pub fn perturb_gains<T: Real, R: Rng + ?Sized>(
    base: &Se3Gains<T>,
    sigma: &GainSigma<T>,
    rng: &mut R,
) -> Se3Gains<T> {
    let b = base.as_array();
    let s = sigma.as_array();
    let mut out = [T::zero(); 6];
    for i in 0..6 {
        let n: f64 = rng.sample(StandardNormal);
        out[i] = (b[i] + s[i] * T::of(n)).max(T::zero());
    }
    Se3Gains::from_array(out)
}

fn flat_attitude(a_ref: Vec3f64, h_ref: Vec3f64, g_mag: f64) -> UnitQuat<f64> {
    let thrust_dir = (a_ref + Vec3f64::new(0.0, 0.0, g_mag))
        .normalized(1e-9)
        .unwrap_or_else(Vec3f64::unit_z);
    let (x_d, y_d, z_d) =
        attitude_from_thrust_and_heading(thrust_dir, h_ref, UnitQuat::identity());
    UnitQuat::from_axes(x_d, y_d, z_d)
}

type Vec3f64 = Vector3<f64>;

/// Converts a trajectory sample at time `t` into the full flat reference:
/// attitude from the thrust direction (drag ignored) and heading, body
/// rates by a symmetric finite difference of that attitude. The flag
/// reports out-of-span clamping (the sample degrades to an endpoint hover).
pub fn flat_reference(
    traj: &ReferenceTrajectory,
    t: f64,
    p: &VehicleParams<f64>,
) -> (FlatReferencePoint<f64>, bool) {
    let (pt, clamped) = traj.sample_checked(t);
    let g = p.g_mag();
    let q_ref = flat_attitude(pt.a, pt.heading, g);

    let w_ref = if clamped {
        Vector3::zero()
    } else {
        let h = 1e-3;
        let dur = traj.duration();
        let (tm, tp) = ((t - h).max(0.0), (t + h).min(dur));
        let at = |tt: f64| {
            let s = traj.sample(tt);
            flat_attitude(s.a, s.heading, g)
        };
        let mut qm = at(tm);
        let mut qp = at(tp);
        // Keep both endpoints on q_ref's cover sheet before differencing.
        if qm.dot(q_ref) < 0.0 {
            qm = UnitQuat { w: -qm.w, x: -qm.x, y: -qm.y, z: -qm.z };
        }
        if qp.dot(q_ref) < 0.0 {
            qp = UnitQuat { w: -qp.w, x: -qp.x, y: -qp.y, z: -qp.z };
        }
        let inv_dt = 1.0 / (tp - tm);
        let dq = UnitQuat {
            w: (qp.w - qm.w) * inv_dt,
            x: (qp.x - qm.x) * inv_dt,
            y: (qp.y - qm.y) * inv_dt,
            z: (qp.z - qm.z) * inv_dt,
        };
        // ω_body = 2·vec(q̄ ⊙ q̇)
        q_ref.conjugate().hamilton(dq).vector_part() * 2.0
    };

    (
        FlatReferencePoint {
            p_ref: pt.p,
            v_ref: pt.v,
            a_ref: pt.a,
            j_ref: pt.j,
            h_ref: pt.heading,
            q_ref,
            w_ref,
        },
        clamped,
    )
}
