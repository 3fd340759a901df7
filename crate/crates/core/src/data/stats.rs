//! Dataset statistics over stored (pre-augmentation) scene graphs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::scene_graph::SceneGraph;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StatsReport {
    pub graph_count: usize,
    pub node_count: usize,
    pub edge_count: usize,
    pub avg_nodes_per_graph: f64,
    pub avg_edges_per_graph: f64,
    /// Rounded to integer, the form the summary table prints.
    pub avg_nodes_rounded: i64,
    pub avg_edges_rounded: i64,
    pub node_type_count: usize,
    pub edge_type_count: usize,
    pub attribute_type_count: usize,
}

/// Totals, per-graph averages, and distinct type counts. Synthetic reverse
/// edges are excluded so the numbers describe the raw dataset.
pub fn compute_stats<'a>(graphs: impl Iterator<Item = &'a SceneGraph>) -> StatsReport {
    let mut graph_count = 0;
    let mut node_count = 0;
    let mut edge_count = 0;
    let mut names: BTreeSet<&str> = BTreeSet::new();
    let mut relations: BTreeSet<&str> = BTreeSet::new();
    let mut attributes: BTreeSet<&str> = BTreeSet::new();
    for g in graphs {
        graph_count += 1;
        node_count += g.nodes.len();
        for node in &g.nodes {
            names.insert(&node.name);
            for a in &node.attributes {
                attributes.insert(a);
            }
        }
        for e in &g.edges {
            if !e.synthetic_reverse {
                edge_count += 1;
                relations.insert(&e.relation);
            }
        }
    }
    let avg_nodes = if graph_count > 0 {
        node_count as f64 / graph_count as f64
    } else {
        0.0
    };
    let avg_edges = if graph_count > 0 {
        edge_count as f64 / graph_count as f64
    } else {
        0.0
    };
    StatsReport {
        graph_count,
        node_count,
        edge_count,
        avg_nodes_per_graph: avg_nodes,
        avg_edges_per_graph: avg_edges,
        avg_nodes_rounded: avg_nodes.round() as i64,
        avg_edges_rounded: avg_edges.round() as i64,
        node_type_count: names.len(),
        edge_type_count: relations.len(),
        attribute_type_count: attributes.len(),
    }
}

/// 10696 -> "10,696"
pub fn thousands(n: i64) -> String {
    let digits = n.abs().to_string();
    let mut grouped = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            grouped.push(',');
        }
        grouped.push(c);
    }
    if n < 0 {
        format!("-{grouped}")
    } else {
        grouped
    }
}

impl StatsReport {
    /// Column-aligned summary table.
    pub fn to_table(&self) -> String {
        let rows = [
            ("Total Number of Graphs", thousands(self.graph_count as i64)),
            ("Total Number of Nodes", thousands(self.node_count as i64)),
            ("Total Number of Edges", thousands(self.edge_count as i64)),
            (
                "Average Number of Nodes per Graph",
                thousands(self.avg_nodes_rounded),
            ),
            (
                "Average Number of Edges per Graph",
                thousands(self.avg_edges_rounded),
            ),
            ("Total Number of Node Types", thousands(self.node_type_count as i64)),
            ("Total Number of Edge Types", thousands(self.edge_type_count as i64)),
            (
                "Total Number of Attributes Types",
                thousands(self.attribute_type_count as i64),
            ),
        ];
        let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap();
        let value_width = rows.iter().map(|(_, v)| v.len()).max().unwrap();
        let mut out = String::from("Scene Graphs Statistics\n");
        for (label, value) in rows {
            out.push_str(&format!("{label:<label_width$}  {value:>value_width$}\n"));
        }
        out
    }
}
