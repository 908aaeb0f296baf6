//! Phantoms, measurement synthesis, Ω̂ estimation, the score-based pixel
//! estimator and the low-pass repair stage.

pub mod estimator;
pub mod filter;
pub mod phantom;
pub mod synth;

pub use estimator::{analytic_score_field, score_map, score_pixel, PixelEstimate};
pub use filter::{low_pass, FilterKind};
pub use phantom::{builtin_phantom, phantom_from_gray, BuiltinPattern};
pub use synth::{estimate_omega, synthesize_envelope, OmegaMode};
