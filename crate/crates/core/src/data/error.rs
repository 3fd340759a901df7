use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON at line {line}, column {column} (byte offset {byte_offset}): {message}")]
    Json {
        path: String,
        line: usize,
        column: usize,
        byte_offset: usize,
        message: String,
    },
    #[error("{path}: entry {id}: {detail}")]
    Schema {
        path: String,
        id: String,
        detail: String,
    },
    #[error("empty corpus: no questions with answers")]
    EmptyCorpus,
    #[error("question {question_id} references unknown graph {graph_id}")]
    UnknownGraphId {
        question_id: String,
        graph_id: String,
    },
}
