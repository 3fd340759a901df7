//! Vocabulary over question words, object names, attributes and relations,
//! plus the answer space.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::error::DataError;
use super::questions::QuestionRecord;
use super::scene_graph::SceneGraph;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const SELF_LOOP_ID: usize = 2;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const SELF_LOOP_TOKEN: &str = "<self_loop>";

/// Lowercase, split on whitespace, strip leading/trailing punctuation.
/// Multi-word names and relations stay token sequences.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let t: String = raw
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase();
            if t.is_empty() {
                None
            } else {
                Some(t)
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    /// Token strings in id order; ids 0..3 are PAD, UNK, SELF_LOOP.
    pub words: Vec<String>,
    /// Answer strings in id order.
    pub answers: Vec<String>,
    #[serde(skip)]
    word_index: BTreeMap<String, usize>,
    #[serde(skip)]
    answer_index: BTreeMap<String, usize>,
}

impl Vocabulary {
    fn reindex(&mut self) {
        self.word_index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        self.answer_index = self
            .answers
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
    }

    /// Deterministic vocabulary: reserved ids, then sorted observed tokens.
    pub fn build(
        graphs: impl Iterator<Item = impl std::borrow::Borrow<SceneGraph>>,
        questions: &[QuestionRecord],
    ) -> Result<Self, DataError> {
        let mut tokens: BTreeSet<String> = BTreeSet::new();
        let mut answers: BTreeSet<String> = BTreeSet::new();
        for q in questions {
            tokens.extend(tokenize(&q.text));
            let answer = q.answer.trim().to_lowercase();
            if !answer.is_empty() {
                answers.insert(answer);
            }
        }
        for g in graphs {
            let g = g.borrow();
            for node in &g.nodes {
                tokens.extend(tokenize(&node.name));
                for attr in &node.attributes {
                    tokens.extend(tokenize(attr));
                }
            }
            for edge in &g.edges {
                if !edge.synthetic_reverse {
                    tokens.extend(tokenize(&edge.relation));
                }
            }
        }
        if answers.is_empty() {
            return Err(DataError::EmptyCorpus);
        }
        let mut words = vec![
            PAD_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
            SELF_LOOP_TOKEN.to_string(),
        ];
        words.extend(tokens);
        let mut vocab = Vocabulary {
            words,
            answers: answers.into_iter().collect(),
            word_index: BTreeMap::new(),
            answer_index: BTreeMap::new(),
        };
        vocab.reindex();
        Ok(vocab)
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn answer_count(&self) -> usize {
        self.answers.len()
    }

    /// Id of a (already normalized) token, UNK when absent.
    pub fn word_id(&self, token: &str) -> usize {
        self.word_index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn answer_id(&self, answer: &str) -> Option<usize> {
        self.answer_index.get(&answer.trim().to_lowercase()).copied()
    }

    pub fn answer_string(&self, id: usize) -> &str {
        &self.answers[id]
    }

    /// Token ids of free text.
    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.word_id(t)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let mut v: Vocabulary = serde_json::from_str(json)?;
        v.reindex();
        Ok(v)
    }

    /// FNV-1a over the serialized form; checkpoints record it so mismatched
    /// vocabularies are caught at load time.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.to_json().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}
