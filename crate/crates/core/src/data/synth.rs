//! Synthetic desk-scale corpus: grids of colored shapes with templated
//! relational, attribute and existence questions. Small enough to train on
//! a CPU in minutes yet relational enough that attention has something to
//! select.

use std::collections::BTreeMap;

use super::questions::QuestionRecord;
use super::scene_graph::{SceneEdge, SceneGraph, SceneNode};
use crate::tensor::SplitRng;

const COLORS: [&str; 5] = ["red", "blue", "green", "yellow", "purple"];
const SHAPES: [&str; 10] = [
    "square", "circle", "triangle", "star", "diamond", "cross", "arrow", "ring", "heart", "moon",
];

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub graph_count: usize,
    /// Grid side length; each graph has `grid * grid` objects.
    pub grid: usize,
    pub seed: u64,
    pub questions_per_graph: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            graph_count: 200,
            grid: 3,
            seed: 2024,
            questions_per_graph: 1,
        }
    }
}

/// One generated corpus: graphs keyed by id plus question records that
/// reference them. Stored edges run left-to-right ("left of") and
/// top-to-bottom ("above"); reverse reasoning must flow through the
/// synthetic symmetric edges the augmentation pass adds.
pub struct SynthCorpus {
    pub graphs: BTreeMap<String, SceneGraph>,
    pub questions: Vec<QuestionRecord>,
}

struct Cell {
    color: &'static str,
    shape: &'static str,
}

fn build_graph(id: &str, grid: usize, rng: &mut SplitRng) -> (SceneGraph, Vec<Cell>) {
    // one distinct shape per cell, so name lookups are unambiguous; colors
    // may repeat and only attribute/existence questions use them
    assert!(grid * grid <= SHAPES.len(), "grid too large for distinct shapes");
    let mut shape_ids: Vec<usize> = (0..SHAPES.len()).collect();
    rng.shuffle(&mut shape_ids);
    let cells: Vec<Cell> = shape_ids
        .iter()
        .take(grid * grid)
        .map(|&s| Cell {
            color: COLORS[rng.below(COLORS.len())],
            shape: SHAPES[s],
        })
        .collect();

    let nodes: Vec<SceneNode> = cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let (r, c) = (i / grid, i % grid);
            SceneNode {
                name: cell.shape.to_string(),
                attributes: vec![cell.color.to_string()],
                bbox: [c as i64 * 100, r as i64 * 100, 90, 90],
            }
        })
        .collect();

    let mut edges = Vec::new();
    for r in 0..grid {
        for c in 0..grid {
            let i = r * grid + c;
            if c + 1 < grid {
                edges.push(SceneEdge {
                    src: i,
                    dst: i + 1,
                    relation: "left of".into(),
                    synthetic_reverse: false,
                });
            }
            if r + 1 < grid {
                edges.push(SceneEdge {
                    src: i,
                    dst: i + grid,
                    relation: "above".into(),
                    synthetic_reverse: false,
                });
            }
        }
    }

    (
        SceneGraph {
            graph_id: id.to_string(),
            nodes,
            edges,
        },
        cells,
    )
}

/// "what is left of X" asks for the source of a stored edge into X;
/// "what is X left of" asks for its destination.
fn relation_question(
    grid: usize,
    cells: &[Cell],
    rng: &mut SplitRng,
) -> Option<(String, String)> {
    let horizontal = rng.bernoulli(0.5);
    let incoming = rng.bernoulli(0.5);
    let rel = if horizontal { "left of" } else { "above" };
    let candidates: Vec<usize> = (0..cells.len())
        .filter(|&i| {
            let (r, c) = (i / grid, i % grid);
            if incoming {
                if horizontal {
                    c > 0
                } else {
                    r > 0
                }
            } else if horizontal {
                c + 1 < grid
            } else {
                r + 1 < grid
            }
        })
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let target = *rng.choose(&candidates);
    let neighbor = if incoming {
        if horizontal {
            target - 1
        } else {
            target - grid
        }
    } else if horizontal {
        target + 1
    } else {
        target + grid
    };
    let t = &cells[target];
    let text = if incoming {
        format!("what is {} the {}", rel, t.shape)
    } else {
        format!("what is the {} {}", t.shape, rel)
    };
    Some((text, cells[neighbor].shape.to_string()))
}

fn attribute_question(cells: &[Cell], rng: &mut SplitRng) -> Option<(String, String)> {
    let i = rng.below(cells.len());
    Some((
        format!("what color is the {}", cells[i].shape),
        cells[i].color.to_string(),
    ))
}

fn verify_question(cells: &[Cell], rng: &mut SplitRng) -> (String, String) {
    let want_present = rng.bernoulli(0.5);
    for _ in 0..64 {
        let color = *rng.choose(&COLORS);
        let shape = *rng.choose(&SHAPES);
        let present = cells.iter().any(|c| c.color == color && c.shape == shape);
        if present == want_present {
            let answer = if present { "yes" } else { "no" };
            return (
                format!("is there a {color} {shape} in the image"),
                answer.to_string(),
            );
        }
    }
    // grid smaller than the combo space, so an absent combo always exists
    ("is there a red square in the image".into(), "no".into())
}

/// Generate a corpus. Question mix: roughly half relation, a quarter
/// attribute, a quarter existence checks.
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let root = SplitRng::new(config.seed).split("synth");
    let mut graphs = BTreeMap::new();
    let mut questions = Vec::new();
    for gi in 0..config.graph_count {
        let graph_id = format!("synth_{gi:04}");
        let mut g_rng = root.split(&graph_id);
        let (graph, cells) = build_graph(&graph_id, config.grid, &mut g_rng);
        for qi in 0..config.questions_per_graph {
            let mut q_rng = g_rng.split("question").split_index(qi as u64);
            let roll = q_rng.unit();
            let (text, answer, structural, semantic) = if roll < 0.6 {
                match relation_question(config.grid, &cells, &mut q_rng) {
                    Some((text, answer)) => (text, answer, "query", "relation"),
                    None => {
                        let (text, answer) = verify_question(&cells, &mut q_rng);
                        (text, answer, "verify", "object")
                    }
                }
            } else if roll < 0.85 {
                match attribute_question(&cells, &mut q_rng) {
                    Some((text, answer)) => (text, answer, "query", "attribute"),
                    None => {
                        let (text, answer) = verify_question(&cells, &mut q_rng);
                        (text, answer, "verify", "object")
                    }
                }
            } else {
                let (text, answer) = verify_question(&cells, &mut q_rng);
                (text, answer, "verify", "object")
            };
            questions.push(QuestionRecord {
                question_id: format!("{graph_id}_q{qi}"),
                graph_id: graph_id.clone(),
                text,
                answer,
                structural_type: structural.to_string(),
                semantic_type: semantic.to_string(),
            });
        }
        graphs.insert(graph_id, graph);
    }
    SynthCorpus { graphs, questions }
}

impl SynthCorpus {
    /// Scene graphs in the GQA file schema, for driving the parsers.
    pub fn graphs_json(&self) -> serde_json::Value {
        let mut root = serde_json::Map::new();
        for (id, g) in &self.graphs {
            let mut objects = serde_json::Map::new();
            for (i, node) in g.nodes.iter().enumerate() {
                let relations: Vec<serde_json::Value> = g
                    .edges
                    .iter()
                    .filter(|e| !e.synthetic_reverse && e.src == i)
                    .map(|e| {
                        serde_json::json!({
                            "object": format!("{}", e.dst),
                            "name": e.relation,
                        })
                    })
                    .collect();
                objects.insert(
                    format!("{i}"),
                    serde_json::json!({
                        "name": node.name,
                        "x": node.bbox[0], "y": node.bbox[1],
                        "w": node.bbox[2], "h": node.bbox[3],
                        "attributes": node.attributes,
                        "relations": relations,
                    }),
                );
            }
            root.insert(id.clone(), serde_json::json!({ "objects": objects }));
        }
        serde_json::Value::Object(root)
    }

    /// Questions in the GQA file schema.
    pub fn questions_json(&self, subset: &[QuestionRecord]) -> serde_json::Value {
        let mut root = serde_json::Map::new();
        for q in subset {
            root.insert(
                q.question_id.clone(),
                serde_json::json!({
                    "imageId": q.graph_id,
                    "question": q.text,
                    "answer": q.answer,
                    "types": {
                        "structural": q.structural_type,
                        "semantic": q.semantic_type,
                    },
                }),
            );
        }
        serde_json::Value::Object(root)
    }
}
