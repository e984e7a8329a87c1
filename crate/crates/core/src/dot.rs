//! Graphviz DOT rendering of task graphs.

use std::fmt::Write;

use crate::graphinfer::{NodeKind, TaskGraph};

fn escape(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for ch in label.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

/// Key steps are boxes; AND/OR nodes are small diamonds. Nodes are emitted
/// in id order and edges in graph order, so output is deterministic.
pub fn export_dot(graph: &TaskGraph) -> String {
    let mut out = String::from("digraph task {\n  rankdir=LR;\n");
    for node in graph.nodes() {
        let line = match node.kind {
            NodeKind::Step => format!("  n{} [shape=box, label=\"{}\"];\n", node.id, escape(&node.label)),
            NodeKind::And => format!(
                "  n{} [shape=diamond, width=0.3, height=0.3, fontsize=8, label=\"AND\"];\n",
                node.id
            ),
            NodeKind::Or => format!(
                "  n{} [shape=diamond, width=0.3, height=0.3, fontsize=8, label=\"OR\"];\n",
                node.id
            ),
        };
        out.push_str(&line);
    }
    for &(a, b) in graph.edges() {
        let _ = writeln!(out, "  n{a} -> n{b};");
    }
    out.push_str("}\n");
    out
}
