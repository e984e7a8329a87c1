//! Task graph inference from key step sequences.
//!
//! Each sequence becomes a set of (completion vector, step, label) examples:
//! the step executed at position `i` is eligible given the steps completed
//! strictly before `i`; steps executed later in the same sequence are
//! recorded as weak, down-weighted negatives at that point. One Gini
//! decision tree per step is fit to these examples, its eligible paths are
//! read off as a DNF, and the DNFs are consolidated into an AND/OR graph.

mod accuracy;
mod dnf;
mod graph;
mod tree;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use accuracy::{eval_accuracy, AccuracyMode, MAX_EXACT_STEPS, SAMPLED_COMPLETIONS};
pub use dnf::DnfPrecondition;
pub use graph::{consolidate_graph, GraphFile, GraphNode, NodeKind, TaskGraph};
pub use tree::{fit_precondition_tree, gini, tree_to_dnf, PreconditionFunction, TreeNode};

use crate::label::KeyStepSequence;
use crate::{Error, Result};

/// Which key steps are complete. Steps are 1-based; `bits[p - 1]` is step `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompletionVector {
    bits: Vec<bool>,
}

impl CompletionVector {
    pub fn empty(m: usize) -> Self {
        CompletionVector { bits: vec![false; m] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        CompletionVector { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_done(&self, step: usize) -> bool {
        self.bits[step - 1]
    }

    pub fn complete(&mut self, step: usize) {
        self.bits[step - 1] = true;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityExample {
    pub completion: CompletionVector,
    pub step: usize,
    /// `false` marks an assumed-ineligible (weak negative) observation.
    pub eligible: bool,
    pub weight: f64,
}

/// Converts one key step sequence over `m` steps into training examples.
pub fn to_examples(ids: &[usize], m: usize, negative_weight: f64) -> Result<Vec<EligibilityExample>> {
    let mut seen = BTreeSet::new();
    for &p in ids {
        if p == 0 || p > m {
            return Err(Error::invalid(format!("key step {p} outside 1..={m}")));
        }
        if !seen.insert(p) {
            return Err(Error::invalid(format!("key step {p} occurs twice in one sequence")));
        }
    }
    let mut out = Vec::new();
    let mut c = CompletionVector::empty(m);
    for (i, &p) in ids.iter().enumerate() {
        out.push(EligibilityExample {
            completion: c.clone(),
            step: p,
            eligible: true,
            weight: 1.0,
        });
        if negative_weight > 0.0 {
            for &q in &ids[i + 1..] {
                out.push(EligibilityExample {
                    completion: c.clone(),
                    step: q,
                    eligible: false,
                    weight: negative_weight,
                });
            }
        }
        c.complete(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    /// Weight of assumed-ineligible examples, in `(0, 1]`.
    pub negative_weight: f64,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig { negative_weight: 0.3 }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.negative_weight > 0.0 && self.negative_weight <= 1.0) {
            return Err(Error::Config(format!(
                "negative_weight must lie in (0, 1], got {}",
                self.negative_weight
            )));
        }
        Ok(())
    }
}

/// Fits one eligibility tree per step and consolidates the graph.
pub fn infer_graph(sequences: &[KeyStepSequence], labels: &[String], config: &InferConfig) -> Result<TaskGraph> {
    config.validate()?;
    if sequences.is_empty() {
        return Err(Error::invalid("graph inference needs at least one sequence"));
    }
    let m = labels.len();
    let mut examples = Vec::new();
    for h in sequences {
        examples.extend(to_examples(&h.ids(), m, config.negative_weight)?);
    }
    let functions: Vec<PreconditionFunction> = (1..=m)
        .into_par_iter()
        .map(|p| {
            let f = fit_precondition_tree(p, &examples, m);
            if !examples.iter().any(|e| e.step == p && e.eligible) {
                log::warn!("key step {p} never observed; treating it as never eligible");
            }
            f
        })
        .collect();
    let dnfs: BTreeMap<usize, DnfPrecondition> = functions.iter().map(|f| (f.step, f.to_dnf())).collect();
    let functions = functions.into_iter().map(|f| (f.step, f)).collect();
    Ok(consolidate_graph(&dnfs, labels)?.with_functions(functions))
}
