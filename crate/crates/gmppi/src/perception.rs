//! Depth-frame data model and the projective collision test: corner-set
//! expansion, pose-compensated reprojection onto the latest frame, and the
//! occupancy-interval check behind the sensed surface.
//!
//! Depth pixels store Euclidean distance along the viewing ray, not optical
//! z, so the interval comparison against a projected point's camera
//! distance is exact.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::VehicleParams;
use crate::{Quat, Vec3};

/// Body world pose at frame capture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyPose {
    pub p: Vec3,
    pub q: Quat,
}

fn default_fx() -> f64 {
    50.0
}
fn default_fy() -> f64 {
    65.0
}
fn default_cx() -> f64 {
    48.0
}
fn default_cy() -> f64 {
    36.0
}
fn default_width() -> usize {
    96
}
fn default_height() -> usize {
    72
}
fn zero_vec() -> Vec3 {
    Vec3::zero()
}

/// Pinhole intrinsics plus the camera-to-body mount.
///
/// Camera frame: x right, y down, z along the optical axis. Body frame:
/// x forward, y left, z up. Tilt pitches the optical axis upward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Upward pitch of the optical axis from body x (degrees).
    pub tilt_deg: f64,
    /// Camera origin in the body frame (m).
    pub mount_translation: Vec3,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: default_fx(),
            fy: default_fy(),
            cx: default_cx(),
            cy: default_cy(),
            width: default_width(),
            height: default_height(),
            tilt_deg: 0.0,
            mount_translation: zero_vec(),
        }
    }
}

impl CameraModel {
    /// Camera axes expressed in the body frame: (right, down, optical).
    pub fn mount_axes(&self) -> (Vec3, Vec3, Vec3) {
        let t = self.tilt_deg.to_radians();
        let (s, c) = t.sin_cos();
        let x_c = Vec3::new(0.0, -1.0, 0.0);
        let y_c = Vec3::new(s, 0.0, -c);
        let z_c = Vec3::new(c, 0.0, s);
        (x_c, y_c, z_c)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err("focal lengths must be positive".into());
        }
        if self.width == 0 || self.height == 0 {
            return Err("image must be non-empty".into());
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64)
            || !(0.0 <= self.cy && self.cy < self.height as f64)
        {
            return Err("principal point must lie inside the image".into());
        }
        Ok(())
    }
}

/// Safety-expanded vehicle box for collision testing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionBoxParams {
    pub l: f64,
    pub w: f64,
    pub h: f64,
    /// Safety multiplier on the box, > 1.
    pub epsilon: f64,
    /// Assumed obstacle depth behind a sensed surface (m).
    pub d_a: f64,
}

impl CollisionBoxParams {
    pub fn from_vehicle(p: &VehicleParams<f64>, epsilon: f64, d_a: f64) -> Self {
        Self {
            l: p.dims.x,
            w: p.dims.y,
            h: p.dims.z,
            epsilon,
            d_a,
        }
    }
}

/// One depth image with everything needed to query it later from other
/// poses. Immutable after construction; replaced whole at capture rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    /// Row-major ray distances (m); +∞ encodes no return within range.
    pub depths: Vec<f32>,
    pub camera: CameraModel,
    pub capture_pose: BodyPose,
    /// Sensor range (m); depths beyond it are the no-return sentinel.
    pub range: f64,
}

impl DepthFrame {
    pub fn new(depths: Vec<f32>, camera: CameraModel, capture_pose: BodyPose, range: f64) -> Self {
        assert_eq!(depths.len(), camera.width * camera.height);
        Self {
            depths,
            camera,
            capture_pose,
            range,
        }
    }

    /// All-clear frame: every pixel reports no return.
    pub fn empty(camera: CameraModel, capture_pose: BodyPose, range: f64) -> Self {
        Self::new(
            vec![f32::INFINITY; camera.width * camera.height],
            camera,
            capture_pose,
            range,
        )
    }

    #[inline]
    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depths[v * self.camera.width + u] as f64
    }

    /// World point into the capture camera frame.
    #[inline]
    pub fn world_to_camera(&self, pt: Vec3) -> Vec3 {
        let body = self.capture_pose.q.rotate_inverse(pt - self.capture_pose.p);
        let rel = body - self.camera.mount_translation;
        let (x_c, y_c, z_c) = self.camera.mount_axes();
        Vec3::new(rel.dot(x_c), rel.dot(y_c), rel.dot(z_c))
    }
}

/// Continuous projection of a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    /// Continuous pixel coordinates; may fall outside the image.
    pub px: f64,
    pub py: f64,
    /// Euclidean camera distance ‖ᶜp‖ (m).
    pub dist: f64,
}

/// Projects a world point onto the frame. `None` means the point lies
/// behind the camera and carries no collision evidence.
pub fn world_to_pixel(pt: Vec3, frame: &DepthFrame) -> Option<ProjectedPoint> {
    let c = frame.world_to_camera(pt);
    if c.z <= 1e-9 {
        return None;
    }
    Some(ProjectedPoint {
        px: frame.camera.cx + frame.camera.fx * c.x / c.z,
        py: frame.camera.cy + frame.camera.fy * c.y / c.z,
        dist: c.norm(),
    })
}

#[inline]
fn nearest_pixel(px: f64, py: f64, cam: &CameraModel) -> (usize, usize) {
    let u = px.round().clamp(0.0, (cam.width - 1) as f64) as usize;
    let v = py.round().clamp(0.0, (cam.height - 1) as f64) as usize;
    (u, v)
}

/// Occupancy test for one point: collides iff its camera distance falls in
/// the assumed-occupied interval [d_px, d_px + d_a] behind the sensed
/// surface at its (nearest) pixel.
pub fn point_collides(pt: Vec3, frame: &DepthFrame, d_a: f64) -> bool {
    let Some(proj) = world_to_pixel(pt, frame) else {
        return false;
    };
    let (u, v) = nearest_pixel(proj.px, proj.py, &frame.camera);
    let d_px = frame.depth_at(u, v);
    d_px.is_finite() && proj.dist >= d_px && proj.dist <= d_px + d_a
}

/// The 8 safety-expanded box corners around `p` plus `p` itself,
/// world-axis-aligned.
pub fn corner_set(p: Vec3, bx: &CollisionBoxParams) -> [Vec3; 9] {
    let half = 0.5 * bx.epsilon;
    let (dx, dy, dz) = (half * bx.l, half * bx.w, half * bx.h);
    [
        p,
        p + Vec3::new(dx, dy, dz),
        p + Vec3::new(dx, dy, -dz),
        p + Vec3::new(dx, -dy, dz),
        p + Vec3::new(dx, -dy, -dz),
        p + Vec3::new(-dx, dy, dz),
        p + Vec3::new(-dx, dy, -dz),
        p + Vec3::new(-dx, -dy, dz),
        p + Vec3::new(-dx, -dy, -dz),
    ]
}

/// Number of colliding points among the 9-point set, in [0, 9].
pub fn state_collision_count(p: Vec3, frame: &DepthFrame, bx: &CollisionBoxParams) -> usize {
    corner_set(p, bx)
        .iter()
        .filter(|&&pt| point_collides(pt, frame, bx.d_a))
        .count()
}

/// Sidecar metadata written next to a PFM dump.
#[derive(Debug, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub camera: CameraModel,
    pub capture_pose: BodyPose,
    pub range: f64,
}

/// Writes the frame as little-endian PFM (bottom-up scanlines, scale −1.0)
/// plus a JSON sidecar with intrinsics and pose at `<path>.json`.
pub fn write_pfm(frame: &DepthFrame, path: &Path) -> std::io::Result<()> {
    let (w, h) = (frame.camera.width, frame.camera.height);
    let mut buf = Vec::with_capacity(64 + 4 * w * h);
    write!(buf, "Pf\n{} {}\n-1.0\n", w, h)?;
    for row in (0..h).rev() {
        for col in 0..w {
            buf.extend_from_slice(&frame.depths[row * w + col].to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;

    let sidecar = FrameSidecar {
        camera: frame.camera,
        capture_pose: frame.capture_pose,
        range: frame.range,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("frame metadata serializes");
    std::fs::write(path.with_extension("json"), json)
}
