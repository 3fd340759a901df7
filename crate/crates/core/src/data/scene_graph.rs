//! Scene-graph parsing (GQA schema) and symmetric-edge augmentation.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::error::DataError;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SceneNode {
    pub name: String,
    pub attributes: Vec<String>,
    /// x, y, w, h
    pub bbox: [i64; 4],
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SceneEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: String,
    /// True only for edges appended by `augment_symmetric_edges`; the edge
    /// feature is negated at build time for these.
    pub synthetic_reverse: bool,
}

/// Objects as nodes, typed directed relations as edges. Stored data never
/// contains self-loops; those are appended at feature-build time.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SceneGraph {
    pub graph_id: String,
    pub nodes: Vec<SceneNode>,
    pub edges: Vec<SceneEdge>,
}

impl SceneGraph {
    pub fn stored_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.synthetic_reverse).count()
    }
}

#[derive(Debug, Default)]
pub struct ParsedGraphs {
    pub graphs: BTreeMap<String, SceneGraph>,
    /// Relations whose target object id did not resolve; dropped.
    pub unresolved_relation_targets: usize,
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Byte offset of a 1-based (line, column) position reported by serde_json.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

pub(crate) fn parse_json_file(path: &Path) -> Result<Option<Value>, DataError> {
    let text = read_to_string(path)?;
    if text.trim().is_empty() {
        return Ok(None);
    }
    match serde_json::from_str::<Value>(&text) {
        Ok(v) => Ok(Some(v)),
        Err(e) => Err(DataError::Json {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            byte_offset: byte_offset(&text, e.line(), e.column()),
            message: e.to_string(),
        }),
    }
}

fn schema_err(path: &Path, id: &str, detail: String) -> DataError {
    DataError::Schema {
        path: path.display().to_string(),
        id: id.to_string(),
        detail,
    }
}

fn require<'v>(
    obj: &'v serde_json::Map<String, Value>,
    field: &str,
    path: &Path,
    id: &str,
) -> Result<&'v Value, DataError> {
    obj.get(field)
        .ok_or_else(|| schema_err(path, id, format!("missing required field `{field}`")))
}

fn as_i64(v: &Value, field: &str, path: &Path, id: &str) -> Result<i64, DataError> {
    v.as_i64()
        .or_else(|| v.as_f64().map(|f| f as i64))
        .ok_or_else(|| schema_err(path, id, format!("field `{field}` is not a number")))
}

fn as_str<'v>(v: &'v Value, field: &str, path: &Path, id: &str) -> Result<&'v str, DataError> {
    v.as_str()
        .ok_or_else(|| schema_err(path, id, format!("field `{field}` is not a string")))
}

/// Parse a GQA scene-graph file: a JSON object keyed by image id, each entry
/// holding an `objects` map of `{name, x, y, w, h, attributes, relations}`.
/// Empty or whitespace-only files parse as zero graphs.
pub fn parse_scene_graphs(path: &Path) -> Result<ParsedGraphs, DataError> {
    let Some(root) = parse_json_file(path)? else {
        return Ok(ParsedGraphs::default());
    };
    let root = root.as_object().ok_or_else(|| {
        schema_err(path, "<root>", "top level is not an object keyed by graph id".into())
    })?;

    let mut out = ParsedGraphs::default();
    for (graph_id, entry) in root {
        let entry = entry
            .as_object()
            .ok_or_else(|| schema_err(path, graph_id, "graph entry is not an object".into()))?;
        let objects = match entry.get("objects") {
            Some(v) => v.as_object().ok_or_else(|| {
                schema_err(path, graph_id, "field `objects` is not an object".into())
            })?,
            // a graph without an objects map is an empty graph
            None => {
                out.graphs.insert(
                    graph_id.clone(),
                    SceneGraph {
                        graph_id: graph_id.clone(),
                        nodes: Vec::new(),
                        edges: Vec::new(),
                    },
                );
                continue;
            }
        };

        // stable node indexing: object ids in sorted order
        let mut object_ids: Vec<&String> = objects.keys().collect();
        object_ids.sort();
        let index_of: BTreeMap<&str, usize> = object_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();

        let mut nodes = Vec::with_capacity(object_ids.len());
        let mut edges = Vec::new();
        for &obj_id in &object_ids {
            let ctx = format!("{graph_id}/{obj_id}");
            let obj = objects[obj_id]
                .as_object()
                .ok_or_else(|| schema_err(path, &ctx, "object entry is not an object".into()))?;
            let name = as_str(require(obj, "name", path, &ctx)?, "name", path, &ctx)?.to_string();
            let mut bbox = [0i64; 4];
            for (slot, field) in ["x", "y", "w", "h"].iter().enumerate() {
                bbox[slot] = as_i64(require(obj, field, path, &ctx)?, field, path, &ctx)?;
            }
            let attributes = match obj.get("attributes") {
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| as_str(v, "attributes", path, &ctx).map(str::to_string))
                    .collect::<Result<Vec<_>, _>>()?,
                Some(_) => {
                    return Err(schema_err(path, &ctx, "field `attributes` is not an array".into()))
                }
                None => Vec::new(),
            };

            let src = index_of[obj_id.as_str()];
            if let Some(rels) = obj.get("relations") {
                let rels = rels.as_array().ok_or_else(|| {
                    schema_err(path, &ctx, "field `relations` is not an array".into())
                })?;
                for rel in rels {
                    let rel = rel.as_object().ok_or_else(|| {
                        schema_err(path, &ctx, "relation entry is not an object".into())
                    })?;
                    let target = as_str(require(rel, "object", path, &ctx)?, "object", path, &ctx)?;
                    let relation =
                        as_str(require(rel, "name", path, &ctx)?, "name", path, &ctx)?.to_string();
                    match index_of.get(target) {
                        Some(&dst) => edges.push(SceneEdge {
                            src,
                            dst,
                            relation,
                            synthetic_reverse: false,
                        }),
                        None => out.unresolved_relation_targets += 1,
                    }
                }
            }
            nodes.push(SceneNode {
                name,
                attributes,
                bbox,
            });
        }

        out.graphs.insert(
            graph_id.clone(),
            SceneGraph {
                graph_id: graph_id.clone(),
                nodes,
                edges,
            },
        );
    }
    Ok(out)
}

/// Append a reverse edge for every stored edge `(i -> j)` that has no stored
/// edge `(j -> i)`, reusing the forward relation string and flagging it so
/// feature building negates the looked-up embedding. Idempotent; never
/// removes or mutates existing edges.
pub fn augment_symmetric_edges(g: &SceneGraph) -> SceneGraph {
    let pairs: HashSet<(usize, usize)> = g.edges.iter().map(|e| (e.src, e.dst)).collect();
    let mut edges = g.edges.clone();
    for e in &g.edges {
        if !pairs.contains(&(e.dst, e.src)) {
            edges.push(SceneEdge {
                src: e.dst,
                dst: e.src,
                relation: e.relation.clone(),
                synthetic_reverse: true,
            });
        }
    }
    SceneGraph {
        graph_id: g.graph_id.clone(),
        nodes: g.nodes.clone(),
        edges,
    }
}

/// Number of edges `augment_symmetric_edges` would add.
pub fn count_unpaired_edges(g: &SceneGraph) -> usize {
    let pairs: HashSet<(usize, usize)> = g.edges.iter().map(|e| (e.src, e.dst)).collect();
    g.edges
        .iter()
        .filter(|e| !pairs.contains(&(e.dst, e.src)))
        .count()
}
