use serde::{Deserialize, Serialize};

use super::vec3::Vector3;
use crate::real::{real, Real};

/// Projections shorter than this are treated as directionless.
pub const DEGENERACY_EPS: f64 = 1e-6;

/// Unit quaternion, scalar-first, Hamilton convention, body-to-world rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> UnitQuat<T> {
    #[inline]
    pub fn identity() -> Self {
        Self {
            w: T::one(),
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    /// Builds the quaternion from raw components and renormalizes.
    #[inline]
    pub fn from_components(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }.normalized()
    }

    pub fn from_axis_angle(axis: Vector3<T>, angle: T) -> Self {
        let axis = axis.normalized(real(DEGENERACY_EPS)).unwrap_or_else(Vector3::unit_z);
        let half = angle * real(0.5);
        let (s, c) = (half.sin(), half.cos());
        Self {
            w: c,
            x: axis.x * s,
            y: axis.y * s,
            z: axis.z * s,
        }
    }

    /// Quaternion for the rotation matrix with the given orthonormal columns.
    ///
    /// Shepperd's method: pick the largest diagonal pivot so the divisor
    /// never degenerates.
    pub fn from_axes(ax: Vector3<T>, ay: Vector3<T>, az: Vector3<T>) -> Self {
        // Rotation matrix entries, column-major axes.
        let (m00, m01, m02) = (ax.x, ay.x, az.x);
        let (m10, m11, m12) = (ax.y, ay.y, az.y);
        let (m20, m21, m22) = (ax.z, ay.z, az.z);
        let quarter: T = real(0.25);
        let trace = m00 + m11 + m22;
        let (w, x, y, z);
        if trace > T::zero() {
            let s = (trace + T::one()).sqrt() * real(2.0);
            w = quarter * s;
            x = (m21 - m12) / s;
            y = (m02 - m20) / s;
            z = (m10 - m01) / s;
        } else if m00 > m11 && m00 > m22 {
            let s = (T::one() + m00 - m11 - m22).sqrt() * real(2.0);
            w = (m21 - m12) / s;
            x = quarter * s;
            y = (m01 + m10) / s;
            z = (m02 + m20) / s;
        } else if m11 > m22 {
            let s = (T::one() + m11 - m00 - m22).sqrt() * real(2.0);
            w = (m02 - m20) / s;
            x = (m01 + m10) / s;
            y = quarter * s;
            z = (m12 + m21) / s;
        } else {
            let s = (T::one() + m22 - m00 - m11).sqrt() * real(2.0);
            w = (m10 - m01) / s;
            x = (m02 + m20) / s;
            y = (m12 + m21) / s;
            z = quarter * s;
        }
        Self { w, x, y, z }.normalized()
    }

    #[inline]
    pub fn vector_part(self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn norm(self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    #[inline]
    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    #[inline]
    pub fn conjugate(self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    #[inline]
    pub fn dot(self, rhs: Self) -> T {
        self.w * rhs.w + self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    /// Hamilton product `self ⊙ rhs`.
    #[inline]
    pub fn hamilton(self, rhs: Self) -> Self {
        Self {
            w: self.w * rhs.w - self.x * rhs.x - self.y * rhs.y - self.z * rhs.z,
            x: self.w * rhs.x + self.x * rhs.w + self.y * rhs.z - self.z * rhs.y,
            y: self.w * rhs.y - self.x * rhs.z + self.y * rhs.w + self.z * rhs.x,
            z: self.w * rhs.z + self.x * rhs.y - self.y * rhs.x + self.z * rhs.w,
        }
    }

    /// Rotates `v` by this quaternion: `R(q)·v`.
    #[inline]
    pub fn rotate(self, v: Vector3<T>) -> Vector3<T> {
        let u = self.vector_part();
        let t = u.cross(v) * real(2.0);
        v + t * self.w + u.cross(t)
    }

    /// Rotates `v` by the inverse rotation: `R(q)ᵀ·v`.
    #[inline]
    pub fn rotate_inverse(self, v: Vector3<T>) -> Vector3<T> {
        self.conjugate().rotate(v)
    }

    /// Body axes expressed in the world frame (columns of `R(q)`).
    #[inline]
    pub fn axes(self) -> (Vector3<T>, Vector3<T>, Vector3<T>) {
        (
            self.rotate(Vector3::unit_x()),
            self.rotate(Vector3::unit_y()),
            self.rotate(Vector3::unit_z()),
        )
    }

    /// Body x-axis projected onto the horizontal plane (the heading vector).
    #[inline]
    pub fn heading(self) -> Vector3<T> {
        self.rotate(Vector3::unit_x()).horizontal()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn cast<U: Real>(self) -> UnitQuat<U> {
        UnitQuat {
            w: U::of(self.w.to_f64()),
            x: U::of(self.x.to_f64()),
            y: U::of(self.y.to_f64()),
            z: U::of(self.z.to_f64()),
        }
    }
}

/// Advances the attitude kinematics `q̇ = ½ q ⊙ [0, ω]` over `dt` for a
/// body-frame rate `ω` held constant, via the quaternion exponential
/// `q ⊙ exp([0, ω·dt/2])`, then renormalizes.
pub fn quat_step<T: Real>(q: UnitQuat<T>, w: Vector3<T>, dt: T) -> UnitQuat<T> {
    let half = w * (dt * real(0.5));
    let angle = half.norm();
    // sin(a)/a with a series fallback near zero.
    let k = if angle > real(1e-8) {
        angle.sin() / angle
    } else {
        T::one() - angle * angle / real(6.0)
    };
    let exp = UnitQuat {
        w: angle.cos(),
        x: half.x * k,
        y: half.y * k,
        z: half.z * k,
    };
    q.hamilton(exp).normalized()
}

/// Orientation difference `1 − ⟨q1, q2⟩²`, in `[0, 1]`, invariant under the
/// quaternion double cover.
#[inline]
pub fn quat_distance<T: Real>(q1: UnitQuat<T>, q2: UnitQuat<T>) -> T {
    let d = q1.dot(q2);
    (T::one() - d * d).max(T::zero())
}

/// Signed angle from the attitude's heading to `h_ref`, in `(−π, π]`,
/// measured about +z. The second value flags degeneracy (near-vertical
/// body-x or a vanishing `h_ref` projection), in which case the angle is 0.
pub fn heading_angle_error<T: Real>(q: UnitQuat<T>, h_ref: Vector3<T>) -> (T, bool) {
    let eps = real(DEGENERACY_EPS);
    let h = q.heading();
    let r = h_ref.horizontal();
    if h.norm() < eps || r.norm() < eps {
        return (T::zero(), true);
    }
    let cross_z = h.x * r.y - h.y * r.x;
    let dot = h.x * r.x + h.y * r.y;
    (cross_z.atan2(dot), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rot_z(angle: f64) -> UnitQuat<f64> {
        UnitQuat::from_axis_angle(Vector3::unit_z(), angle)
    }

    #[test]
    fn rotate_identity_is_noop() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(UnitQuat::identity().rotate(v), v);
    }

    #[test]
    fn rotate_half_turn_about_z_flips_x() {
        let v = rot_z(std::f64::consts::PI).rotate(Vector3::unit_x());
        assert!((v.x - (-1.0)).abs() < 1e-12);
        assert!(v.y.abs() < 1e-12);
        assert!(v.z.abs() < 1e-12);
    }

    #[test]
    fn rotate_quarter_turn_about_z_sends_x_to_y() {
        // q = (√2/2, 0, 0, √2/2)
        let q = rot_z(std::f64::consts::FRAC_PI_2);
        assert!((q.w - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((q.z - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let v = q.rotate(Vector3::unit_x());
        assert!(v.x.abs() < 1e-12);
        assert!((v.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_with_zero_rate_is_identity() {
        let q = quat_step(UnitQuat::<f64>::identity(), Vector3::zero(), 0.01);
        assert_eq!(q, UnitQuat::identity());
    }

    #[test]
    fn step_matches_axis_angle_closed_form() {
        // π rad about z over one second lands on q = (0, 0, 0, 1).
        let q = quat_step(
            UnitQuat::<f64>::identity(),
            Vector3::new(0.0, 0.0, std::f64::consts::PI),
            1.0,
        );
        assert!(q.w.abs() < 1e-6);
        assert!((q.z - 1.0).abs() < 1e-6);
    }

    #[test]
    fn distance_examples() {
        let q = rot_z(0.7);
        assert_eq!(quat_distance(q, q), 0.0);
        let neg = UnitQuat {
            w: -q.w,
            x: -q.x,
            y: -q.y,
            z: -q.z,
        };
        assert!(quat_distance(q, neg) < 1e-15);
        // identity vs 90° about z: ⟨q1,q2⟩ = cos 45°, distance 0.5
        let d = quat_distance(UnitQuat::identity(), rot_z(std::f64::consts::FRAC_PI_2));
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn heading_error_examples() {
        let id = UnitQuat::<f64>::identity();
        let (a, deg) = heading_angle_error(id, Vector3::unit_x());
        assert_eq!(a, 0.0);
        assert!(!deg);

        let (a, _) = heading_angle_error(id, Vector3::unit_y());
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

        // Branch at ±π breaks toward +π.
        let (a, _) = heading_angle_error(id, Vector3::new(-1.0, 1e-12, 0.0));
        assert!(a > 0.0 && (a - std::f64::consts::PI).abs() < 1e-6);
        let (a, _) = heading_angle_error(id, Vector3::new(-1.0, 0.0, 0.0));
        assert!((a - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn heading_error_flags_degenerate_cases() {
        // Body x pointing straight up has no horizontal projection.
        let pitch_up = UnitQuat::from_axis_angle(Vector3::unit_y(), -std::f64::consts::FRAC_PI_2);
        let (a, deg) = heading_angle_error(pitch_up, Vector3::unit_x());
        assert_eq!(a, 0.0);
        assert!(deg);

        let (_, deg) = heading_angle_error(UnitQuat::<f64>::identity(), Vector3::zero());
        assert!(deg);
    }

    #[test]
    fn from_axes_recovers_rotation() {
        let q = UnitQuat::from_axis_angle(Vector3::new(1.0, -2.0, 0.5), 2.3);
        let (ax, ay, az) = q.axes();
        let r = UnitQuat::from_axes(ax, ay, az);
        assert!(quat_distance(q, r) < 1e-20);
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in -6.0f64..6.0,
            v in prop::array::uniform3(-10.0f64..10.0),
        ) {
            prop_assume!(Vector3::from(axis).norm() > 1e-3);
            let q = UnitQuat::from_axis_angle(axis.into(), angle);
            let v = Vector3::from(v);
            let r = q.rotate(v);
            prop_assert!((r.norm() - v.norm()).abs() < 1e-12 * (1.0 + v.norm()));
        }

        #[test]
        fn step_keeps_unit_norm(
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in -6.0f64..6.0,
            w in prop::array::uniform3(-10.0f64..10.0),
            dt in 0.0f64..0.1,
        ) {
            prop_assume!(Vector3::from(axis).norm() > 1e-3);
            let q = UnitQuat::from_axis_angle(axis.into(), angle);
            let s = quat_step(q, w.into(), dt);
            prop_assert!((s.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn distance_is_symmetric_and_bounded(
            a1 in -6.0f64..6.0, a2 in -6.0f64..6.0,
        ) {
            let q1 = rot_z(a1);
            let q2 = rot_z(a2);
            let d12 = quat_distance(q1, q2);
            let d21 = quat_distance(q2, q1);
            prop_assert!((d12 - d21).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&d12));
        }
    }
}
