//! Sphere maps and the reverse-mode differentiation tape.

mod map;
mod param;
mod tape;

pub use map::{Domain, MapShape, SphereMap};
pub use param::Parameter;
pub use tape::{Gradients, Tape, Value, Var};
