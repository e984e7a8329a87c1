//! Synthetic key step sequences sampled from a known graph.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graphinfer::{consolidate_graph, CompletionVector, DnfPrecondition, TaskGraph};
use crate::label::KeyStepSequence;
use crate::{Error, Result};

/// Chance that a step with at least two candidate parents gets a two-term OR.
pub const OR_PROBABILITY: f64 = 0.2;

/// A ground-truth precondition structure over steps `1..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthGraph {
    m: usize,
    preconditions: BTreeMap<usize, DnfPrecondition>,
    labels: Vec<String>,
}

impl GroundTruthGraph {
    /// Validates that the graph is acyclic and that some execution order
    /// completes every step.
    pub fn new(m: usize, preconditions: BTreeMap<usize, DnfPrecondition>) -> Result<Self> {
        let labels = (1..=m).map(|p| format!("k{p}")).collect();
        Self::with_labels(preconditions, labels)
    }

    pub fn with_labels(preconditions: BTreeMap<usize, DnfPrecondition>, labels: Vec<String>) -> Result<Self> {
        let m = labels.len();
        let preconditions: BTreeMap<_, _> = preconditions.into_iter().filter(|(_, d)| !d.is_always()).collect();
        consolidate_graph(&preconditions, &labels)?;
        let g = GroundTruthGraph {
            m,
            preconditions,
            labels,
        };
        let mut done = CompletionVector::empty(m);
        for _ in 0..m {
            match (1..=m).find(|&p| !done.is_done(p) && g.eligible(p, &done)) {
                Some(p) => done.complete(p),
                None => {
                    let stuck: Vec<String> = (1..=m).filter(|&p| !done.is_done(p)).map(|p| format!("k{p}")).collect();
                    return Err(Error::InvalidGraph(format!(
                        "steps can never be completed: {}",
                        stuck.join(", ")
                    )));
                }
            }
        }
        Ok(g)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn preconditions(&self) -> &BTreeMap<usize, DnfPrecondition> {
        &self.preconditions
    }

    pub fn precondition(&self, step: usize) -> DnfPrecondition {
        self.preconditions
            .get(&step)
            .cloned()
            .unwrap_or_else(DnfPrecondition::always)
    }

    pub fn eligible(&self, step: usize, c: &CompletionVector) -> bool {
        self.preconditions.get(&step).is_none_or(|d| d.eval(c))
    }

    pub fn to_task_graph(&self) -> TaskGraph {
        consolidate_graph(&self.preconditions, &self.labels).expect("validated on construction")
    }

    /// Uses the graph's DNF preconditions; learned trees are ignored.
    pub fn from_task_graph(g: &TaskGraph) -> Result<Self> {
        Self::with_labels(g.preconditions().clone(), g.labels())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_task_graph(&TaskGraph::load(path)?)
    }

    /// True when every prefix of `ids` only executes eligible steps.
    pub fn respects(&self, ids: &[usize]) -> bool {
        let mut c = CompletionVector::empty(self.m);
        for &p in ids {
            if p == 0 || p > self.m || c.is_done(p) || !self.eligible(p, &c) {
                return false;
            }
            c.complete(p);
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub count: usize,
    pub seed: u64,
    /// Probability that an executed step is left out of the emitted sequence.
    pub drop_prob: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            count: 60,
            seed: 0,
            drop_prob: 0.0,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("rollout count must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(Error::Config(format!(
                "drop_prob must lie in [0, 1), got {}",
                self.drop_prob
            )));
        }
        Ok(())
    }
}

/// One execution: repeatedly performs a uniformly random eligible step.
pub fn rollout(g: &GroundTruthGraph, seed: u64, drop_prob: f64) -> Result<KeyStepSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = CompletionVector::empty(g.m);
    let mut ids = Vec::with_capacity(g.m);
    for _ in 0..g.m {
        let eligible: Vec<usize> = (1..=g.m).filter(|&p| !c.is_done(p) && g.eligible(p, &c)).collect();
        if eligible.is_empty() {
            return Err(Error::InvalidGraph("no eligible step before completion".into()));
        }
        let p = eligible[rng.random_range(0..eligible.len())];
        c.complete(p);
        if drop_prob == 0.0 || !rng.random_bool(drop_prob) {
            ids.push(p);
        }
    }
    Ok(KeyStepSequence::from_ids(format!("rollout-{seed}"), &ids, |p| {
        g.labels[p - 1].clone()
    }))
}

/// `count` rollouts with seeds `seed, seed + 1, ...`.
pub fn generate_dataset(g: &GroundTruthGraph, config: &RolloutConfig) -> Result<Vec<KeyStepSequence>> {
    config.validate()?;
    (0..config.count as u64)
        .into_par_iter()
        .map(|i| rollout(g, config.seed.wrapping_add(i), config.drop_prob))
        .collect()
}

/// Random acyclic graph: steps are placed in a random order and each earlier
/// step becomes a required literal with probability `density`.
///
/// A step that drew at least one literal and has two or more earlier steps
/// instead requires either of two of them with probability
/// [`OR_PROBABILITY`]. Literals implied by other literals are removed, so
/// every remaining literal is observable in rollouts.
pub fn random_graph(m: usize, density: f64, seed: u64) -> Result<GroundTruthGraph> {
    random_graph_with(m, density, OR_PROBABILITY, seed)
}

pub fn random_graph_with(m: usize, density: f64, or_prob: f64, seed: u64) -> Result<GroundTruthGraph> {
    if m < 2 {
        return Err(Error::invalid("random graphs need at least 2 steps"));
    }
    if !(0.0..=1.0).contains(&density) || !(0.0..=1.0).contains(&or_prob) {
        return Err(Error::invalid("density and OR probability must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (1..=m).collect();
    order.shuffle(&mut rng);
    let mut raw = BTreeMap::new();
    for (i, &p) in order.iter().enumerate() {
        let earlier = &order[..i];
        let literals: BTreeSet<usize> = earlier.iter().copied().filter(|_| rng.random_bool(density)).collect();
        if literals.is_empty() {
            continue;
        }
        let dnf = if earlier.len() >= 2 && rng.random_bool(or_prob) {
            let picked: Vec<usize> = earlier.choose_multiple(&mut rng, 2).copied().collect();
            DnfPrecondition::new(picked.iter().map(|&a| BTreeSet::from([a])))
        } else {
            DnfPrecondition::new([literals])
        };
        raw.insert(p, dnf);
    }
    GroundTruthGraph::new(m, reduce(&order, &raw))
}

/// Drops literals implied by other literals of the same term, then terms
/// implied by other terms. Steps are processed in topological order.
fn reduce(order: &[usize], raw: &BTreeMap<usize, DnfPrecondition>) -> BTreeMap<usize, DnfPrecondition> {
    // required[p]: steps that every execution completes before p.
    let mut required: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut out = BTreeMap::new();
    let closure = |term: &BTreeSet<usize>, required: &BTreeMap<usize, BTreeSet<usize>>| -> BTreeSet<usize> {
        let mut all = term.clone();
        for l in term {
            all.extend(required[l].iter().copied());
        }
        all
    };
    for &p in order {
        let Some(dnf) = raw.get(&p) else {
            required.insert(p, BTreeSet::new());
            continue;
        };
        let terms: Vec<BTreeSet<usize>> = dnf
            .terms()
            .iter()
            .map(|t| {
                t.iter()
                    .copied()
                    .filter(|a| !t.iter().any(|b| required[b].contains(a)))
                    .collect()
            })
            .collect();
        let closures: Vec<BTreeSet<usize>> = terms.iter().map(|t| closure(t, &required)).collect();
        let kept: Vec<BTreeSet<usize>> = terms
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                !terms
                    .iter()
                    .enumerate()
                    .any(|(j, u)| j != *i && u != &terms[*i] && u.is_subset(&closures[*i]))
            })
            .map(|(_, t)| t.clone())
            .collect();
        let req = closures
            .iter()
            .skip(1)
            .fold(closures[0].clone(), |acc, c| acc.intersection(c).copied().collect());
        required.insert(p, req);
        out.insert(p, DnfPrecondition::new(kept));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(m: usize) -> GroundTruthGraph {
        GroundTruthGraph::new(m, (2..=m).map(|p| (p, DnfPrecondition::all_of([p - 1]))).collect()).unwrap()
    }

    #[test]
    fn chain_has_one_execution() {
        for seed in 0..20 {
            assert_eq!(rollout(&chain(3), seed, 0.0).unwrap().ids(), vec![1, 2, 3]);
        }
    }

    #[test]
    fn and_step_comes_last() {
        let g = GroundTruthGraph::new(3, BTreeMap::from([(3, DnfPrecondition::all_of([1, 2]))])).unwrap();
        for seed in 0..50 {
            assert_eq!(rollout(&g, seed, 0.0).unwrap().ids()[2], 3);
        }
    }

    #[test]
    fn independent_steps_are_balanced() {
        let g = GroundTruthGraph::new(2, BTreeMap::new()).unwrap();
        let first_one = (0..100).filter(|&s| rollout(&g, s, 0.0).unwrap().ids()[0] == 1).count();
        assert!((40..=60).contains(&first_one), "{first_one}");
    }

    #[test]
    fn dataset_is_deterministic() {
        let g = random_graph(6, 0.4, 3).unwrap();
        let cfg = RolloutConfig::default();
        let a = generate_dataset(&g, &cfg).unwrap();
        assert_eq!(a.len(), 60);
        assert_eq!(a, generate_dataset(&g, &cfg).unwrap());
        assert!(a.iter().all(|h| g.respects(&h.ids()) && h.len() == 6));
        let c = generate_dataset(&chain(4), &cfg).unwrap();
        assert!(c.windows(2).all(|w| w[0].ids() == w[1].ids()));
    }

    #[test]
    fn drop_prob_omits_steps() {
        let g = GroundTruthGraph::new(8, BTreeMap::new()).unwrap();
        let cfg = RolloutConfig {
            count: 50,
            seed: 0,
            drop_prob: 0.5,
        };
        let total: usize = generate_dataset(&g, &cfg).unwrap().iter().map(|h| h.len()).sum();
        assert!(total > 100 && total < 300, "{total}");
        assert!(RolloutConfig {
            drop_prob: 1.0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(RolloutConfig { count: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn uncompletable_graphs_are_rejected() {
        let never = BTreeMap::from([(2, DnfPrecondition::never())]);
        assert!(matches!(GroundTruthGraph::new(2, never), Err(Error::InvalidGraph(_))));
        let cyclic = BTreeMap::from([(1, DnfPrecondition::all_of([2])), (2, DnfPrecondition::all_of([1]))]);
        assert!(matches!(
            GroundTruthGraph::new(2, cyclic),
            Err(Error::CyclicGraph { .. })
        ));
    }

    #[test]
    fn density_extremes() {
        for seed in 0..10 {
            let g = random_graph(6, 0.0, seed).unwrap();
            assert!(g.preconditions().is_empty());
            let g = random_graph_with(6, 1.0, 0.0, seed).unwrap();
            let h = rollout(&g, seed, 0.0).unwrap().ids();
            for (i, &p) in h.iter().enumerate().skip(1) {
                assert_eq!(g.precondition(p), DnfPrecondition::all_of([h[i - 1]]));
            }
            assert!(g.precondition(h[0]).is_always());
        }
    }

    #[test]
    fn reduction_drops_implied_literals() {
        // order 1, 2, 3: 2 needs 1, 3 needs {1, 2} -> {2}.
        let raw = BTreeMap::from([(2, DnfPrecondition::all_of([1])), (3, DnfPrecondition::all_of([1, 2]))]);
        let r = reduce(&[1, 2, 3], &raw);
        assert_eq!(r[&3], DnfPrecondition::all_of([2]));
        // 3 needs 1 or 2, where 2 already needs 1 -> just 1.
        let raw = BTreeMap::from([
            (2, DnfPrecondition::all_of([1])),
            (3, DnfPrecondition::new([BTreeSet::from([1]), BTreeSet::from([2])])),
        ]);
        assert_eq!(reduce(&[1, 2, 3], &raw)[&3], DnfPrecondition::all_of([1]));
    }

    #[test]
    fn reduction_preserves_reachable_behaviour() {
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = 6;
            let mut order: Vec<usize> = (1..=m).collect();
            order.shuffle(&mut rng);
            let mut raw = BTreeMap::new();
            for (i, &p) in order.iter().enumerate().skip(1) {
                let terms: Vec<BTreeSet<usize>> = (0..rng.random_range(1..=2))
                    .map(|_| order[..i].iter().copied().filter(|_| rng.random_bool(0.5)).collect())
                    .collect();
                raw.insert(p, DnfPrecondition::new(terms));
            }
            let full = GroundTruthGraph::new(m, raw.clone()).unwrap();
            let reduced = GroundTruthGraph::new(m, reduce(&order, &raw)).unwrap();
            for s in 0..40 {
                let h = rollout(&full, s, 0.0).unwrap().ids();
                assert!(reduced.respects(&h));
                assert!(full.respects(&rollout(&reduced, s, 0.0).unwrap().ids()));
            }
        }
    }

    #[test]
    fn task_graph_round_trip() {
        let g = random_graph(7, 0.5, 11).unwrap();
        let back = GroundTruthGraph::from_task_graph(&g.to_task_graph()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn random_graph_is_seeded() {
        assert_eq!(random_graph(8, 0.4, 5).unwrap(), random_graph(8, 0.4, 5).unwrap());
        assert!(random_graph(1, 0.4, 5).is_err());
    }
}
