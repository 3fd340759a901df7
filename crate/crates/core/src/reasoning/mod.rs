//! Graph reasoning: feature building, contextual encoding, and the
//! instruction-conditioned message-passing step families.

pub mod features;
pub mod layers;
pub mod lcgn;
pub mod program;

pub use features::{contextual_encode, init_graph_features, GraphFeatures};
pub use layers::{condition_on_instruction, StepConditionedInput};
pub use program::{execute_program, AttentionEntry, StepRecord, StepTrace};

use crate::model::{Family, ModelConfig};
use crate::tensor::{ParamSet, SplitRng};

/// Register every reasoning parameter for the configured family.
pub fn register_params(params: &mut ParamSet, config: &ModelConfig, rng: &SplitRng) {
    features::register_params(params, config, rng);
    match config.family {
        Family::Gcn => {
            for step in 0..config.steps {
                layers::register_gcn(params, config, step, rng);
            }
        }
        Family::Gine => {
            for step in 0..config.steps {
                layers::register_gine(params, config, step, rng);
            }
        }
        Family::Gat => {
            for step in 0..config.steps {
                layers::register_gat(params, config, step, rng);
            }
        }
        Family::Lcgn => lcgn::register_params(params, config, rng),
    }
}
