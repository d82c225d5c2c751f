//! Procedural obstacle fields: tree counts drawn from a Poisson law over
//! the field area, centers uniform, with a protected clearing around the
//! start point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::Vec3;

pub const TREE_RADIUS: f64 = 0.3;
pub const TREE_HEIGHT: f64 = 10.0;
pub const START_CLEARING_RADIUS: f64 = 2.0;

/// Vertical cylinder obstacle rooted at the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub height: f64,
}

/// Axis-aligned ground rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]).max(0.0) * (self.max[1] - self.min[1]).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub bounds: Rect,
    pub density: f64,
    pub seed: u64,
}

/// Draws a forest: tree count ~ Poisson(density·area), centers uniform in
/// bounds. Centers landing inside the start clearing are redrawn, which
/// preserves the count. The stream index is pinned away from the rollout
/// streams so a shared seed cannot alias controller noise.
pub fn generate_forest(density: f64, bounds: Rect, seed: u64, start: [f64; 2]) -> Forest {
    assert!(density > 0.0, "density must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let area = bounds.area();
    let count = if area > 0.0 {
        Poisson::new(density * area)
            .expect("positive Poisson mean")
            .sample(&mut rng) as usize
    } else {
        0
    };
    let mut trees = Vec::with_capacity(count);
    for _ in 0..count {
        // A clearing covering the whole field would starve the redraw;
        // give up on the tree rather than loop forever.
        for _attempt in 0..1000 {
            let x = rng.gen_range(bounds.min[0]..=bounds.max[0]);
            let y = rng.gen_range(bounds.min[1]..=bounds.max[1]);
            let clear = (x - start[0]).hypot(y - start[1]) < START_CLEARING_RADIUS + TREE_RADIUS;
            if !clear {
                trees.push(Tree {
                    x,
                    y,
                    radius: TREE_RADIUS,
                    height: TREE_HEIGHT,
                });
                break;
            }
        }
    }
    Forest {
        trees,
        bounds,
        density,
        seed,
    }
}

/// Ground-truth collision arbiter: the vehicle box (world-axis-aligned,
/// half extents scaled by `epsilon`) against every tree cylinder. Returns
/// the worst-case signed clearance (negative when intersecting).
pub fn box_forest_clearance(p: Vec3, dims: Vec3, epsilon: f64, forest: &Forest) -> f64 {
    let hx = 0.5 * epsilon * dims.x;
    let hy = 0.5 * epsilon * dims.y;
    let hz = 0.5 * epsilon * dims.z;
    let mut worst = f64::INFINITY;
    for t in &forest.trees {
        if p.z - hz > t.height || p.z + hz < 0.0 {
            continue;
        }
        // 2D distance from the tree axis to the box footprint.
        let dx = (t.x - p.x).abs() - hx;
        let dy = (t.y - p.y).abs() - hy;
        let outside = (dx.max(0.0)).hypot(dy.max(0.0));
        let inside = dx.max(dy).min(0.0);
        let clearance = outside + inside - t.radius;
        worst = worst.min(clearance);
    }
    worst
}

pub fn vehicle_hits_tree(p: Vec3, dims: Vec3, epsilon: f64, forest: &Forest) -> bool {
    box_forest_clearance(p, dims, epsilon, forest) <= 0.0
}
