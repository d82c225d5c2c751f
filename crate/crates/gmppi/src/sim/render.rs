//! Analytic depth rendering: per-pixel rays against tree cylinders (side
//! walls and top caps) and the ground plane, recorded as Euclidean ray
//! distance exactly as the collision checker expects.

use crate::perception::{BodyPose, CameraModel, DepthFrame};
use crate::sim::forest::Forest;
use crate::Vec3;

/// First positive hit distance of a world-space ray against one finite
/// cylinder, or +∞.
fn ray_cylinder(o: Vec3, d: Vec3, cx: f64, cy: f64, r: f64, h: f64) -> f64 {
    let ox = o.x - cx;
    let oy = o.y - cy;
    // Side wall: quadratic in the ray parameter on the xy-projection.
    let a = d.x * d.x + d.y * d.y;
    let mut best = f64::INFINITY;
    if a > 1e-12 {
        let b = ox * d.x + oy * d.y;
        let c = ox * ox + oy * oy - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / a, (-b + sq) / a] {
                if t > 0.0 && t < best {
                    let z = o.z + t * d.z;
                    if (0.0..=h).contains(&z) {
                        best = t;
                    }
                }
            }
        }
    }
    // Top cap disk at z = h.
    if d.z.abs() > 1e-12 {
        let t = (h - o.z) / d.z;
        if t > 0.0 && t < best {
            let px = ox + t * d.x;
            let py = oy + t * d.y;
            if px * px + py * py <= r * r {
                best = t;
            }
        }
    }
    best
}

/// Renders one depth frame from the given body pose. Pixels store the
/// Euclidean distance along the (unit) pixel ray to the nearest surface,
/// +∞ when nothing returns within `range`.
pub fn render_depth(pose: &BodyPose, camera: &CameraModel, forest: &Forest, range: f64) -> DepthFrame {
    let (x_c, y_c, z_c) = camera.mount_axes();
    let origin = pose.p + pose.q.rotate(camera.mount_translation);

    // Cull trees entirely behind the image plane or out of range.
    let visible: Vec<_> = forest
        .trees
        .iter()
        .filter(|t| {
            let rel = Vec3::new(t.x - origin.x, t.y - origin.y, 0.0);
            let fwd = pose.q.rotate(z_c);
            let along = rel.x * fwd.x + rel.y * fwd.y;
            along + t.radius > 0.0 && rel.horizontal().norm() - t.radius <= range
        })
        .collect();

    let mut depths = vec![f32::INFINITY; camera.width * camera.height];
    for v in 0..camera.height {
        for u in 0..camera.width {
            let rx = (u as f64 - camera.cx) / camera.fx;
            let ry = (v as f64 - camera.cy) / camera.fy;
            let dir_body = x_c * rx + y_c * ry + z_c;
            let dir = pose
                .q
                .rotate(dir_body)
                .normalized(1e-12)
                .expect("pixel ray is never null");

            let mut t_hit = f64::INFINITY;
            for tree in &visible {
                let t = ray_cylinder(origin, dir, tree.x, tree.y, tree.radius, tree.height);
                t_hit = t_hit.min(t);
            }
            if dir.z < -1e-12 {
                let t_ground = -origin.z / dir.z;
                if t_ground > 0.0 {
                    t_hit = t_hit.min(t_ground);
                }
            }
            if t_hit <= range {
                depths[v * camera.width + u] = t_hit as f32;
            }
        }
    }
    DepthFrame::new(depths, *camera, *pose, range)
}
