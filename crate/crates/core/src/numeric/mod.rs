//! Dense single-channel grids, seeded random streams and the central
//! difference gradient oracle.

mod finite_diff;
mod grid;
mod rng;

pub use finite_diff::{finite_diff_gradient, relative_error};
pub use grid::ImageGrid;
pub use rng::SeededStream;
