// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

pub mod error;
pub mod hilbert;

pub use error::{Error, Result};
pub mod histories;
pub mod records;
pub mod open_systems;
pub mod rng;
pub mod qbm;
pub mod timeless;
pub mod arrival;
pub mod scenario;
