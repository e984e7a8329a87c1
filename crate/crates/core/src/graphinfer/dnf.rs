use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::CompletionVector;

/// Precondition in disjunctive normal form over positive literals.
///
/// Each term is a set of key step ids that must all be complete. The
/// canonical form has no term that is a superset of another, no duplicates,
/// and terms in lexicographic order. A single empty term means "always
/// eligible"; no terms at all means "never eligible".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<BTreeSet<usize>>", into = "Vec<BTreeSet<usize>>")]
pub struct DnfPrecondition {
    terms: Vec<BTreeSet<usize>>,
}

impl DnfPrecondition {
    pub fn new(terms: impl IntoIterator<Item = BTreeSet<usize>>) -> Self {
        let mut terms: Vec<BTreeSet<usize>> = terms.into_iter().collect();
        terms.sort();
        terms.dedup();
        let absorbed: Vec<BTreeSet<usize>> = terms
            .iter()
            .filter(|t| !terms.iter().any(|o| o != *t && o.is_subset(t)))
            .cloned()
            .collect();
        DnfPrecondition { terms: absorbed }
    }

    pub fn always() -> Self {
        DnfPrecondition {
            terms: vec![BTreeSet::new()],
        }
    }

    pub fn never() -> Self {
        DnfPrecondition { terms: Vec::new() }
    }

    /// Single AND-term.
    pub fn all_of(steps: impl IntoIterator<Item = usize>) -> Self {
        Self::new([steps.into_iter().collect()])
    }

    pub fn terms(&self) -> &[BTreeSet<usize>] {
        &self.terms
    }

    pub fn is_always(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].is_empty()
    }

    pub fn is_never(&self) -> bool {
        self.terms.is_empty()
    }

    /// Every step mentioned in any term.
    pub fn literals(&self) -> BTreeSet<usize> {
        self.terms.iter().flatten().copied().collect()
    }

    pub fn eval(&self, c: &CompletionVector) -> bool {
        self.terms.iter().any(|t| t.iter().all(|&s| c.is_done(s)))
    }
}

impl From<Vec<BTreeSet<usize>>> for DnfPrecondition {
    fn from(terms: Vec<BTreeSet<usize>>) -> Self {
        Self::new(terms)
    }
}

impl From<DnfPrecondition> for Vec<BTreeSet<usize>> {
    fn from(d: DnfPrecondition) -> Self {
        d.terms
    }
}
