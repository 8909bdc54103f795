//! Walk on Stars Poisson solver with learned directional guiding.

pub mod clock;
pub mod field;
pub mod geom2d;
pub mod harness;
pub mod math;
pub mod presets;
pub mod scene;
pub mod special;
pub mod spherical;
pub mod train;
pub mod wost;
