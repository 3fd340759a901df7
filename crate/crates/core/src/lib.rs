//! Scene-graph question answering engine.
//!
//! Translates a natural-language question into a fixed number of
//! instruction vectors and executes them as instruction-conditioned
//! message passing over a scene graph (GCN / GINE / GAT / LCGN layer
//! families), trained end to end from final-answer supervision only.
//! Everything runs on a self-contained f64 reverse-mode autodiff engine.

pub mod answer;
pub mod data;
pub mod lang;
pub mod model;
pub mod reasoning;
pub mod tensor;
pub mod train;

pub use tensor::{Array, GradMap, Mode, ParamSet, SegmentIndex, SplitRng, Tape, TensorError, ValueId};
