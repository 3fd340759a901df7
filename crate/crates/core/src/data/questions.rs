//! GQA question file parsing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::error::DataError;
use super::scene_graph::parse_json_file;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct QuestionRecord {
    pub question_id: String,
    pub graph_id: String,
    pub text: String,
    pub answer: String,
    /// verify | query | choose | logical | compare, or empty when absent.
    pub structural_type: String,
    /// object | attribute | relation | category | global, or empty when absent.
    pub semantic_type: String,
}

/// Parse a GQA question file: a JSON object keyed by question id with fields
/// `{imageId, question, answer, types: {structural, semantic}}`. Missing
/// `types` fields map to empty strings. Records come back sorted by id.
pub fn parse_questions(path: &Path) -> Result<Vec<QuestionRecord>, DataError> {
    let Some(root) = parse_json_file(path)? else {
        return Ok(Vec::new());
    };
    let root = root.as_object().ok_or_else(|| DataError::Schema {
        path: path.display().to_string(),
        id: "<root>".into(),
        detail: "top level is not an object keyed by question id".into(),
    })?;

    let schema_err = |id: &str, detail: String| DataError::Schema {
        path: path.display().to_string(),
        id: id.to_string(),
        detail,
    };

    let mut out = Vec::with_capacity(root.len());
    for (question_id, entry) in root {
        let entry = entry
            .as_object()
            .ok_or_else(|| schema_err(question_id, "question entry is not an object".into()))?;
        let field = |name: &str| -> Result<String, DataError> {
            entry
                .get(name)
                .ok_or_else(|| schema_err(question_id, format!("missing required field `{name}`")))?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| schema_err(question_id, format!("field `{name}` is not a string")))
        };
        let (structural_type, semantic_type) = match entry.get("types") {
            Some(serde_json::Value::Object(types)) => (
                types
                    .get("structural")
                    .and_then(|v| v.as_str())
                    .unwrap_or("")
                    .to_string(),
                types
                    .get("semantic")
                    .and_then(|v| v.as_str())
                    .unwrap_or("")
                    .to_string(),
            ),
            _ => (String::new(), String::new()),
        };
        out.push(QuestionRecord {
            question_id: question_id.clone(),
            graph_id: field("imageId")?,
            text: field("question")?,
            answer: field("answer")?,
            structural_type,
            semantic_type,
        });
    }
    out.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    Ok(out)
}
