//! Pointing Game (alignment) and Pixel Flipping with its reference-set
//! variant (performance), plus a spatial isolation statistic for masks.

mod flipping;
mod pointing;

pub use flipping::{
    apply_mask, isolation_score, pixel_flipping, reference_pixel_flipping, top_k_mask, write_curves_csv,
    Baseline, FlippingCurve, MaskSpec,
};
pub use pointing::{pointing_game, write_pointing_csv, PointingGameResult};

/// `{0, step, 2 step, ...}` up to and including `max` when it lands on the grid.
pub fn default_schedule(max: usize, step: usize) -> Vec<usize> {
    (0..=max).step_by(step.max(1)).collect()
}
