use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompletionVector, DnfPrecondition, PreconditionFunction};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Step,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub kind: NodeKind,
    pub label: String,
}

/// Key steps `1..=m` plus AND/OR nodes; an edge `(a, b)` means `a` must be
/// satisfied before `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    m: usize,
    nodes: Vec<GraphNode>,
    edges: Vec<(usize, usize)>,
    preconditions: BTreeMap<usize, DnfPrecondition>,
    functions: BTreeMap<usize, PreconditionFunction>,
}

/// On-disk graph schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub m: usize,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<[usize; 2]>,
    pub preconditions: BTreeMap<usize, DnfPrecondition>,
    /// Learned trees, when the graph came out of inference.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub trees: BTreeMap<usize, PreconditionFunction>,
}

/// Builds the AND/OR graph for per-step preconditions.
///
/// Node ids: key steps keep `1..=m`; AND/OR nodes are numbered from `m + 1`
/// in step order. Single-literal terms connect the step node directly and a
/// single term needs no OR node. Steps absent from `dnfs` are unconstrained.
pub fn consolidate_graph(dnfs: &BTreeMap<usize, DnfPrecondition>, labels: &[String]) -> Result<TaskGraph> {
    let m = labels.len();
    for (&step, dnf) in dnfs {
        if step == 0 || step > m {
            return Err(Error::InvalidGraph(format!("precondition for unknown step {step}")));
        }
        if let Some(&bad) = dnf.literals().iter().find(|&&s| s == 0 || s > m) {
            return Err(Error::InvalidGraph(format!(
                "step {step} depends on unknown step {bad}"
            )));
        }
    }
    check_acyclic(m, dnfs)?;

    let mut nodes: Vec<GraphNode> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| GraphNode {
            id: i + 1,
            kind: NodeKind::Step,
            label: l.clone(),
        })
        .collect();
    let mut edges = Vec::new();
    let fresh = |kind: NodeKind, nodes: &mut Vec<GraphNode>| {
        let id = nodes.len() + 1;
        let label = match kind {
            NodeKind::And => "AND",
            NodeKind::Or => "OR",
            NodeKind::Step => unreachable!(),
        };
        nodes.push(GraphNode {
            id,
            kind,
            label: label.into(),
        });
        id
    };
    for (&step, dnf) in dnfs {
        if dnf.is_always() || dnf.is_never() {
            continue;
        }
        let mut term_nodes = Vec::new();
        for term in dnf.terms() {
            if term.len() == 1 {
                term_nodes.push(*term.iter().next().expect("non-empty"));
            } else {
                let and = fresh(NodeKind::And, &mut nodes);
                edges.extend(term.iter().map(|&lit| (lit, and)));
                term_nodes.push(and);
            }
        }
        if term_nodes.len() == 1 {
            edges.push((term_nodes[0], step));
        } else {
            let or = fresh(NodeKind::Or, &mut nodes);
            edges.extend(term_nodes.iter().map(|&t| (t, or)));
            edges.push((or, step));
        }
    }
    Ok(TaskGraph {
        m,
        nodes,
        edges,
        preconditions: dnfs.clone(),
        functions: BTreeMap::new(),
    })
}

/// Rejects dependency cycles among key steps (`r -> p` when `r` appears in
/// any term of `p`).
fn check_acyclic(m: usize, dnfs: &BTreeMap<usize, DnfPrecondition>) -> Result<()> {
    // Parents per step; DFS over "depends on" edges.
    let deps: Vec<Vec<usize>> = (0..=m)
        .map(|p| {
            dnfs.get(&p)
                .map(|d| d.literals().into_iter().collect())
                .unwrap_or_default()
        })
        .collect();
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; m + 1];
    let mut stack: Vec<usize> = Vec::new();

    fn visit(p: usize, deps: &[Vec<usize>], mark: &mut [Mark], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        mark[p] = Mark::Active;
        stack.push(p);
        for &d in &deps[p] {
            match mark[d] {
                Mark::Active => {
                    let start = stack.iter().position(|&s| s == d).expect("on stack");
                    // Report in dependency order: each step precedes the next.
                    let mut cycle: Vec<usize> = stack[start..].iter().rev().copied().collect();
                    cycle.push(cycle[0]);
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(c) = visit(d, deps, mark, stack) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        mark[p] = Mark::Done;
        None
    }

    for p in 1..=m {
        if mark[p] == Mark::New {
            if let Some(cycle) = visit(p, &deps, &mut mark, &mut stack) {
                return Err(Error::CyclicGraph { cycle });
            }
        }
    }
    Ok(())
}

impl TaskGraph {
    /// Graph with `m` unconstrained steps.
    pub fn unconstrained(labels: &[String]) -> Self {
        consolidate_graph(&BTreeMap::new(), labels).expect("no preconditions, no cycles")
    }

    pub fn with_functions(mut self, functions: BTreeMap<usize, PreconditionFunction>) -> Self {
        self.functions = functions;
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Vec<String> {
        self.nodes[..self.m].iter().map(|n| n.label.clone()).collect()
    }

    pub fn label(&self, step: usize) -> &str {
        &self.nodes[step - 1].label
    }

    pub fn preconditions(&self) -> &BTreeMap<usize, DnfPrecondition> {
        &self.preconditions
    }

    /// Precondition of `step`; unconstrained steps report "always".
    pub fn precondition(&self, step: usize) -> DnfPrecondition {
        self.preconditions
            .get(&step)
            .cloned()
            .unwrap_or_else(DnfPrecondition::always)
    }

    pub fn functions(&self) -> &BTreeMap<usize, PreconditionFunction> {
        &self.functions
    }

    /// `f^p(c)`, from the learned tree when present, else from the DNF.
    pub fn step_eligible(&self, step: usize, c: &CompletionVector) -> bool {
        match self.functions.get(&step) {
            Some(f) => f.eval(c),
            None => self.preconditions.get(&step).is_none_or(|d| d.eval(c)),
        }
    }

    pub fn eligibility(&self, c: &CompletionVector) -> Result<Vec<bool>> {
        if c.len() != self.m {
            return Err(Error::invalid(format!(
                "completion vector has length {}, graph has {} steps",
                c.len(),
                self.m
            )));
        }
        Ok((1..=self.m).map(|p| self.step_eligible(p, c)).collect())
    }

    /// Same preconditions on every step (labels and trees ignored).
    pub fn same_structure(&self, other: &TaskGraph) -> bool {
        self.m == other.m && (1..=self.m).all(|p| self.precondition(p) == other.precondition(p))
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            m: self.m,
            nodes: self.nodes.clone(),
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            preconditions: self.preconditions.clone(),
            trees: self.functions.clone(),
        }
    }

    /// Rebuilds the graph from its preconditions; the stored node and edge
    /// lists must agree with them.
    pub fn from_file(file: GraphFile) -> Result<Self> {
        let mut labels = vec![None; file.m];
        for n in file.nodes.iter().filter(|n| n.kind == NodeKind::Step) {
            if n.id == 0 || n.id > file.m {
                return Err(Error::InvalidGraph(format!(
                    "step node id {} outside 1..={}",
                    n.id, file.m
                )));
            }
            labels[n.id - 1] = Some(n.label.clone());
        }
        let labels: Vec<String> = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.unwrap_or_else(|| format!("k{}", i + 1)))
            .collect();
        for (&step, f) in &file.trees {
            if step != f.step || step == 0 || step > file.m {
                return Err(Error::InvalidGraph(format!("tree for step {step} is misplaced")));
            }
        }
        let graph = consolidate_graph(&file.preconditions, &labels)?.with_functions(file.trees);
        let edges: Vec<(usize, usize)> = file.edges.iter().map(|&[a, b]| (a, b)).collect();
        if !file.nodes.is_empty() && (graph.edges != edges || graph.nodes.len() != file.nodes.len()) {
            return Err(Error::InvalidGraph(
                "node/edge lists disagree with preconditions".into(),
            ));
        }
        Ok(graph)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GraphFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_file(file)
    }
}
