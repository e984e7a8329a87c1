//! Per-step eligibility trees grown greedily by weighted Gini impurity.

use serde::{Deserialize, Serialize};

use super::{CompletionVector, DnfPrecondition, EligibilityExample};

/// Minimum impurity decrease for a split to count as an improvement.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        positive_count: usize,
        negative_weight: f64,
        eligible: bool,
    },
    /// Tests whether key step `step` is complete.
    Split {
        step: usize,
        absent: Box<TreeNode>,
        present: Box<TreeNode>,
    },
}

impl TreeNode {
    fn leaf(positive_count: usize, negative_weight: f64) -> Self {
        TreeNode::Leaf {
            positive_count,
            negative_weight,
            eligible: positive_count > 0,
        }
    }

    pub fn eval(&self, c: &CompletionVector) -> bool {
        match self {
            TreeNode::Leaf { eligible, .. } => *eligible,
            TreeNode::Split { step, absent, present } => {
                if c.is_done(*step) {
                    present.eval(c)
                } else {
                    absent.eval(c)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { absent, present, .. } => 1 + absent.depth().max(present.depth()),
        }
    }

    /// Root-to-leaf paths as `(step, present)` tests, paired with the leaf.
    pub fn paths(&self) -> Vec<(Vec<(usize, bool)>, &TreeNode)> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.collect_paths(&mut path, &mut out);
        out
    }

    fn collect_paths<'a>(&'a self, path: &mut Vec<(usize, bool)>, out: &mut Vec<(Vec<(usize, bool)>, &'a TreeNode)>) {
        match self {
            TreeNode::Leaf { .. } => out.push((path.clone(), self)),
            TreeNode::Split { step, absent, present } => {
                path.push((*step, false));
                absent.collect_paths(path, out);
                path.pop();
                path.push((*step, true));
                present.collect_paths(path, out);
                path.pop();
            }
        }
    }
}

/// `f^p`: whether key step `step` is eligible given a completion vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreconditionFunction {
    pub step: usize,
    pub tree: TreeNode,
}

impl PreconditionFunction {
    pub fn always(step: usize) -> Self {
        PreconditionFunction {
            step,
            tree: TreeNode::Leaf {
                positive_count: 0,
                negative_weight: 0.0,
                eligible: true,
            },
        }
    }

    pub fn eval(&self, c: &CompletionVector) -> bool {
        self.tree.eval(c)
    }

    /// DNF over the present-literals of each eligible path. Absent-literals
    /// are dropped, so the export can be more permissive than the tree.
    pub fn to_dnf(&self) -> DnfPrecondition {
        DnfPrecondition::new(self.tree.paths().into_iter().filter_map(|(path, leaf)| {
            matches!(leaf, TreeNode::Leaf { eligible: true, .. })
                .then(|| path.iter().filter(|(_, present)| *present).map(|(s, _)| *s).collect())
        }))
    }
}

pub fn tree_to_dnf(f: &PreconditionFunction) -> DnfPrecondition {
    f.to_dnf()
}

/// Gini impurity of a node with the given class weights.
pub fn gini(positive: f64, negative: f64) -> f64 {
    let total = positive + negative;
    if total <= 0.0 {
        return 0.0;
    }
    let (p, n) = (positive / total, negative / total);
    1.0 - p * p - n * n
}

#[derive(Clone, Copy, Default)]
struct Weights {
    positive_count: usize,
    positive: f64,
    negative: f64,
}

impl Weights {
    fn of<'a>(examples: impl IntoIterator<Item = &'a EligibilityExample>) -> Self {
        let mut w = Weights::default();
        for e in examples {
            w.add(e);
        }
        w
    }

    fn add(&mut self, e: &EligibilityExample) {
        if e.eligible {
            self.positive_count += 1;
            self.positive += e.weight;
        } else {
            self.negative += e.weight;
        }
    }

    fn total(&self) -> f64 {
        self.positive + self.negative
    }

    fn impurity(&self) -> f64 {
        gini(self.positive, self.negative)
    }
}

/// Grows the eligibility tree for `step` from its examples.
///
/// At each node the completion bit with the lowest weighted child impurity
/// is chosen (ties: lowest step id); growth stops at pure nodes, when no
/// split lowers impurity, or at depth `m`. Leaves predict eligible iff any
/// positive example reaches them.
pub fn fit_precondition_tree(step: usize, examples: &[EligibilityExample], m: usize) -> PreconditionFunction {
    let own: Vec<&EligibilityExample> = examples.iter().filter(|e| e.step == step).collect();
    let tree = grow(&own, m, &mut vec![false; m + 1], 0);
    PreconditionFunction { step, tree }
}

fn grow(examples: &[&EligibilityExample], m: usize, used: &mut Vec<bool>, depth: usize) -> TreeNode {
    let here = Weights::of(examples.iter().copied());
    let leaf = TreeNode::leaf(here.positive_count, here.negative);
    if here.positive == 0.0 || here.negative == 0.0 || depth >= m {
        return leaf;
    }
    let parent = here.impurity();
    let mut best: Option<(usize, f64)> = None;
    for bit in (1..=m).filter(|&b| !used[b]) {
        let mut present = Weights::default();
        let mut absent = Weights::default();
        for e in examples {
            if e.completion.is_done(bit) {
                present.add(e);
            } else {
                absent.add(e);
            }
        }
        if present.total() == 0.0 || absent.total() == 0.0 {
            continue;
        }
        let child = (present.total() * present.impurity() + absent.total() * absent.impurity()) / here.total();
        if child < parent - MIN_GAIN && best.is_none_or(|(_, b)| child < b) {
            best = Some((bit, child));
        }
    }
    let Some((bit, _)) = best else { return leaf };
    let (present, absent): (Vec<&EligibilityExample>, Vec<&EligibilityExample>) =
        examples.iter().copied().partition(|e| e.completion.is_done(bit));
    used[bit] = true;
    let node = TreeNode::Split {
        step: bit,
        absent: Box::new(grow(&absent, m, used, depth + 1)),
        present: Box::new(grow(&present, m, used, depth + 1)),
    };
    used[bit] = false;
    node
}
