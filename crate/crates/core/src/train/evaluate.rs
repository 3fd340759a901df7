//! Evaluation: exact-match accuracy with binary/open, semantic-type, and
//! question-word-count breakdowns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::answer;
use crate::data::batch::GraphBatch;
use crate::data::questions::QuestionRecord;
use crate::data::scene_graph::SceneGraph;
use crate::data::vocab::Vocabulary;
use crate::model::Model;
use crate::tensor::{Mode, ParamSet, SplitRng};

use super::error::TrainError;

/// Structural types counted as binary; everything else is open. The GQA
/// split is not pinned down anywhere official, so reports carry this
/// definition in their header.
pub const BINARY_STRUCTURAL_TYPES: [&str; 4] = ["verify", "logical", "choose", "compare"];

pub fn is_binary(structural_type: &str) -> bool {
    BINARY_STRUCTURAL_TYPES.contains(&structural_type)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Bucket {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl Bucket {
    fn new() -> Self {
        Bucket {
            count: 0,
            correct: 0,
            accuracy: 0.0,
        }
    }

    fn add(&mut self, correct: bool) {
        self.count += 1;
        if correct {
            self.correct += 1;
        }
    }

    fn finish(&mut self) {
        if self.count > 0 {
            self.accuracy = self.correct as f64 / self.count as f64;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    /// How the binary/open split is defined, stated up front.
    pub binary_definition: String,
    pub total: usize,
    pub correct: usize,
    pub overall_accuracy: f64,
    pub binary: Bucket,
    pub open: Bucket,
    /// Omitted when no record carries semantic metadata.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub by_semantic_type: Option<BTreeMap<String, Bucket>>,
    pub by_word_count: BTreeMap<usize, Bucket>,
}

/// One scored question, the unit the report is built from.
#[derive(Clone, Debug)]
pub struct ScoredQuestion {
    pub question_id: String,
    pub structural_type: String,
    pub semantic_type: String,
    pub word_count: usize,
    pub correct: bool,
}

pub fn build_report(scored: &[ScoredQuestion]) -> EvalReport {
    let mut binary = Bucket::new();
    let mut open = Bucket::new();
    let mut semantic: BTreeMap<String, Bucket> = BTreeMap::new();
    let mut word_count: BTreeMap<usize, Bucket> = BTreeMap::new();
    let mut correct = 0;
    let any_semantic = scored.iter().any(|s| !s.semantic_type.is_empty());
    for s in scored {
        if s.correct {
            correct += 1;
        }
        if is_binary(&s.structural_type) {
            binary.add(s.correct);
        } else {
            open.add(s.correct);
        }
        if any_semantic {
            let key = if s.semantic_type.is_empty() {
                "unknown".to_string()
            } else {
                s.semantic_type.clone()
            };
            semantic.entry(key).or_insert_with(Bucket::new).add(s.correct);
        }
        word_count
            .entry(s.word_count)
            .or_insert_with(Bucket::new)
            .add(s.correct);
    }
    binary.finish();
    open.finish();
    for b in semantic.values_mut().chain(word_count.values_mut()) {
        b.finish();
    }
    EvalReport {
        binary_definition: format!(
            "binary = structural type in {{{}}}; open = all others",
            BINARY_STRUCTURAL_TYPES.join(", ")
        ),
        total: scored.len(),
        correct,
        overall_accuracy: if scored.is_empty() {
            0.0
        } else {
            correct as f64 / scored.len() as f64
        },
        binary,
        open,
        by_semantic_type: any_semantic.then_some(semantic),
        by_word_count: word_count,
    }
}

impl EvalReport {
    /// Aligned text row with Binary / Open / Accuracy columns, percentages.
    pub fn to_table(&self) -> String {
        let pct = |b: &Bucket| {
            if b.count == 0 {
                "     -".to_string()
            } else {
                format!("{:6.2}", b.accuracy * 100.0)
            }
        };
        let mut out = String::new();
        out.push_str(&format!("# {}\n", self.binary_definition));
        out.push_str("Binary    Open    Accuracy\n");
        out.push_str(&format!(
            "{}  {}      {:6.2}\n",
            pct(&self.binary),
            pct(&self.open),
            self.overall_accuracy * 100.0
        ));
        out
    }

    pub fn semantic_csv(&self) -> String {
        let mut out = String::from("semantic_type,count,correct,accuracy\n");
        if let Some(buckets) = &self.by_semantic_type {
            for (key, b) in buckets {
                out.push_str(&format!("{key},{},{},{:.6}\n", b.count, b.correct, b.accuracy));
            }
        }
        out
    }

    pub fn word_count_csv(&self) -> String {
        let mut out = String::from("word_count,count,correct,accuracy\n");
        for (wc, b) in &self.by_word_count {
            out.push_str(&format!("{wc},{},{},{:.6}\n", b.count, b.correct, b.accuracy));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TopAnswer {
    pub answer: String,
    pub prob: f64,
}

/// Per-question prediction line for the JSONL output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub question_id: String,
    pub predicted: String,
    pub gold: String,
    pub correct: bool,
    pub top5: Vec<TopAnswer>,
}

/// Run the model over questions (eval mode, no dropout) and score exact
/// matches. Questions whose gold answer is outside the answer vocabulary
/// stay in and score wrong.
pub fn evaluate(
    model: &Model,
    params: &ParamSet,
    vocab: &Vocabulary,
    graphs: &BTreeMap<String, SceneGraph>,
    questions: &[QuestionRecord],
    batch_size: usize,
) -> Result<(EvalReport, Vec<PredictionRecord>), TrainError> {
    let mut scored = Vec::with_capacity(questions.len());
    let mut predictions = Vec::with_capacity(questions.len());
    for chunk in questions.chunks(batch_size.max(1)) {
        let mut graph_refs = Vec::with_capacity(chunk.len());
        let mut tokens = Vec::with_capacity(chunk.len());
        for q in chunk {
            let g = graphs
                .get(&q.graph_id)
                .ok_or_else(|| TrainError::Data(crate::data::DataError::UnknownGraphId {
                    question_id: q.question_id.clone(),
                    graph_id: q.graph_id.clone(),
                }))?;
            graph_refs.push(g);
            tokens.push(vocab.encode_text(&q.text));
        }
        let batch = GraphBatch::build(&graph_refs, vocab);
        let out = model.forward(
            params,
            &batch,
            &tokens,
            Mode::Eval,
            SplitRng::new(0),
            false,
        )?;
        let dists = answer::distributions(out.fwd.tape.data(out.logits));
        for (q, dist) in chunk.iter().zip(dists) {
            let predicted = vocab.answer_string(dist.predicted_id).to_string();
            let gold = q.answer.trim().to_lowercase();
            let correct = predicted == gold;
            scored.push(ScoredQuestion {
                question_id: q.question_id.clone(),
                structural_type: q.structural_type.clone(),
                semantic_type: q.semantic_type.clone(),
                word_count: q.text.split_whitespace().count(),
                correct,
            });
            predictions.push(PredictionRecord {
                question_id: q.question_id.clone(),
                predicted,
                gold,
                correct,
                top5: dist
                    .top_k(5)
                    .into_iter()
                    .map(|(id, prob)| TopAnswer {
                        answer: vocab.answer_string(id).to_string(),
                        prob,
                    })
                    .collect(),
            });
        }
    }
    Ok((build_report(&scored), predictions))
}
