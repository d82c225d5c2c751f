pub mod quat;
pub mod vec3;

pub use quat::{heading_angle_error, quat_distance, quat_step, UnitQuat, DEGENERACY_EPS};
pub use vec3::Vector3;
