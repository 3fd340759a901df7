//! Language frontend: word embeddings and the question-to-instructions
//! seq2seq translator.

pub mod embedding;
pub mod seq2seq;

pub use embedding::{CoverageReport, EmbeddingError, EmbeddingTable};
pub use seq2seq::{
    decode_instructions, encode_question, multi_head_attention, position_encodings,
    InstructionProgram,
};
