//! Minimal reverse-mode autodiff over dense f64 arrays, plus the segment
//! operations graph message passing needs, parameter storage, seeded RNG,
//! and the checkpoint container.

pub mod array;
pub mod checkpoint;
pub mod error;
pub mod grad_check;
pub mod params;
pub mod rng;
pub mod tape;

pub use array::Array;
pub use error::TensorError;
pub use params::{GradMap, Param, ParamSet};
pub use rng::SplitRng;
pub use tape::{Activation, Mode, Reduction, SegmentIndex, Tape, ValueId};
