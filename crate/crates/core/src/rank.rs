//! Likelihood ranking of key step sequences and top-k filtering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::label::KeyStepSequence;
use crate::providers::{LikelihoodScorer, Prompt};
use crate::summarize::{render_template, DEFAULT_TEMPLATE};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankConfig {
    pub keep_fraction: f64,
    /// Conditioning prompt; `{task}` is replaced by the task name.
    pub prompt_template: String,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            keep_fraction: 0.75,
            prompt_template: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

impl RankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "keep_fraction must lie in (0, 1], got {}",
                self.keep_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedSequence {
    pub sequence: KeyStepSequence,
    pub score: f64,
}

/// Persisted ranking outcome for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub video_id: String,
    /// `None` for sequences that matched no key step.
    pub score: Option<f64>,
    pub kept: bool,
}

/// `"1. <label>\n2. <label>..."` using the key steps' labels.
pub fn render_sequence(h: &KeyStepSequence, labels: &BTreeMap<usize, String>) -> Result<String> {
    h.items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            labels
                .get(&item.key_step_id)
                .map(|l| format!("{}. {l}", i + 1))
                .ok_or_else(|| Error::invalid(format!("unknown key step id {}", item.key_step_id)))
        })
        .collect::<Result<Vec<_>>>()
        .map(|lines| lines.join("\n"))
}

pub fn score_sequence(
    h: &KeyStepSequence,
    task_name: &str,
    labels: &BTreeMap<usize, String>,
    scorer: &dyn LikelihoodScorer,
    config: &RankConfig,
) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::invalid(format!(
            "{}: empty key step sequence has no continuation",
            h.video_id
        )));
    }
    let prompt = Prompt::new(render_template(&config.prompt_template, task_name))?;
    let score = scorer.score_loglik(&prompt, &render_sequence(h, labels)?)?;
    if !score.is_finite() {
        return Err(Error::invalid(format!("{}: non-finite score {score}", h.video_id)));
    }
    Ok(score)
}

/// Number of sequences kept out of `n`.
pub fn kept_count(n: usize, keep_fraction: f64) -> usize {
    // The epsilon absorbs products like 0.7 * 10 = 7.000000000000001.
    let k = (keep_fraction * n as f64 - 1e-9).ceil();
    (k.max(0.0) as usize).min(n)
}

/// Stable sort by descending score, then keep the first
/// `ceil(keep_fraction * n)`.
pub fn topk_filter(ranked: Vec<RankedSequence>, keep_fraction: f64) -> Result<Vec<RankedSequence>> {
    if ranked.is_empty() {
        return Err(Error::invalid("nothing to rank"));
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::invalid(format!("keep_fraction {keep_fraction} outside (0, 1]")));
    }
    let k = kept_count(ranked.len(), keep_fraction);
    let mut sorted = ranked;
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    sorted.truncate(k);
    Ok(sorted)
}

/// Scores every non-empty sequence and marks the kept ones. Empty sequences
/// are reported without a score and never kept.
pub fn rank_all(
    sequences: &[KeyStepSequence],
    task_name: &str,
    labels: &BTreeMap<usize, String>,
    scorer: &dyn LikelihoodScorer,
    config: &RankConfig,
    max_parallel: usize,
) -> Result<(Vec<RankedSequence>, Vec<RankRecord>)> {
    config.validate()?;
    let scorable: Vec<&KeyStepSequence> = sequences.iter().filter(|s| !s.is_empty()).collect();
    for s in sequences.iter().filter(|s| s.is_empty()) {
        log::warn!("{}: no key steps matched; excluded from ranking", s.video_id);
    }
    let scores = par::bounded_map(&scorable, max_parallel, |h| {
        score_sequence(h, task_name, labels, scorer, config)
    });
    let ranked = scorable
        .into_iter()
        .zip(scores)
        .map(|(h, s)| {
            Ok(RankedSequence {
                sequence: h.clone(),
                score: s?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let kept = topk_filter(ranked.clone(), config.keep_fraction)?;
    let kept_ids: std::collections::HashSet<&str> = kept.iter().map(|r| r.sequence.video_id.as_str()).collect();
    let records = sequences
        .iter()
        .map(|h| {
            let score = ranked
                .iter()
                .find(|r| r.sequence.video_id == h.video_id)
                .map(|r| r.score);
            RankRecord {
                video_id: h.video_id.clone(),
                score,
                kept: kept_ids.contains(h.video_id.as_str()),
            }
        })
        .collect();
    Ok((kept, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::BigramScorer;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels() -> BTreeMap<usize, String> {
        [
            (1, "fill water"),
            (2, "press brew"),
            (3, "grind beans"),
            (4, "pour milk"),
            (5, "serve cup"),
        ]
        .into_iter()
        .map(|(k, v)| (k, v.to_string()))
        .collect()
    }

    fn seq(video: &str, ids: &[usize]) -> KeyStepSequence {
        KeyStepSequence::from_ids(video, ids, |i| format!("k{i}"))
    }

    fn ranked(scores: &[f64]) -> Vec<RankedSequence> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &score)| RankedSequence {
                sequence: seq(&format!("v{i}"), &[1]),
                score,
            })
            .collect()
    }

    #[test]
    fn render_format() {
        assert_eq!(
            render_sequence(&seq("v", &[1, 2]), &labels()).unwrap(),
            "1. fill water\n2. press brew"
        );
        assert_eq!(render_sequence(&seq("v", &[]), &labels()).unwrap(), "");
        assert!(render_sequence(&seq("v", &[9]), &labels()).is_err());
        let expected = "1. grind beans\n2. fill water\n3. press brew\n4. pour milk\n5. serve cup";
        let lines: Vec<String> = [3, 1, 2, 4, 5]
            .iter()
            .enumerate()
            .map(|(i, k)| format!("{}. {}", i + 1, labels()[k]))
            .collect();
        assert_eq!(lines.join("\n"), expected);
        assert_eq!(
            render_sequence(&seq("v", &[3, 1, 2, 4, 5]), &labels()).unwrap(),
            expected
        );
    }

    #[test]
    fn score_is_deterministic_and_rejects_empty() {
        let scorer = BigramScorer::fit(&["fill water press brew"]);
        let cfg = RankConfig::default();
        let h = seq("v", &[1, 2]);
        let a = score_sequence(&h, "make coffee", &labels(), &scorer, &cfg).unwrap();
        assert_eq!(a, score_sequence(&h, "make coffee", &labels(), &scorer, &cfg).unwrap());
        assert!(score_sequence(&seq("v", &[]), "make coffee", &labels(), &scorer, &cfg).is_err());
    }

    /// Direct bigram log-probability with add-one smoothing, tokens taken
    /// from the rendered continuation after the prompt's final token.
    fn oracle_loglik(corpus: &[String], prompt_last: &str, continuation: &str) -> f64 {
        let toks = |s: &str| -> Vec<String> {
            s.split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_lowercase)
                .collect()
        };
        let mut vocab: std::collections::BTreeSet<String> = ["<unk>".to_string()].into();
        let mut pairs: BTreeMap<(String, String), f64> = BTreeMap::new();
        let mut ctx: BTreeMap<String, f64> = BTreeMap::new();
        for doc in corpus {
            let mut prev = "<s>".to_string();
            for t in toks(doc) {
                vocab.insert(t.clone());
                *pairs.entry((prev.clone(), t.clone())).or_default() += 1.0;
                *ctx.entry(prev).or_default() += 1.0;
                prev = t;
            }
        }
        let map = |t: String| if vocab.contains(&t) { t } else { "<unk>".to_string() };
        let mut prev = map(prompt_last.to_string());
        let mut total = 0.0;
        for t in toks(continuation).into_iter().map(map) {
            let num = pairs.get(&(prev.clone(), t.clone())).copied().unwrap_or(0.0) + 1.0;
            let den = ctx.get(&prev).copied().unwrap_or(0.0) + vocab.len() as f64;
            total += (num / den).ln();
            prev = t;
        }
        total
    }

    #[test]
    fn consistent_order_beats_reversal() {
        let labels = labels();
        let mut wins = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (1..=5).collect();
            order.shuffle(&mut rng);
            let len = rng.random_range(3..=5);
            order.truncate(len);
            let h = seq("v", &order);
            let rendered = render_sequence(&h, &labels).unwrap();
            let corpus: Vec<String> = (0..3).map(|_| rendered.clone()).collect();
            let scorer = BigramScorer::fit(&corpus);
            let cfg = RankConfig::default();
            let forward = score_sequence(&h, "make coffee", &labels, &scorer, &cfg).unwrap();
            let mut rev_ids = order.clone();
            rev_ids.reverse();
            let reversed = score_sequence(&seq("v", &rev_ids), "make coffee", &labels, &scorer, &cfg).unwrap();
            let oracle = oracle_loglik(&corpus, "phrases", &rendered);
            assert!((forward - oracle).abs() < 1e-9, "{forward} vs {oracle}");
            if forward >= reversed {
                wins += 1;
            }
        }
        assert!(wins >= 18, "only {wins}/20");
    }

    #[test]
    fn corpus_sentence_beats_its_shuffles() {
        let corpus = vec![
            "first fill the pot with water then grind the beans".to_string(),
            "after that press the brew button and wait".to_string(),
        ];
        let scorer = BigramScorer::fit(&corpus);
        let prompt = Prompt::new("make coffee").unwrap();
        let sentence = &corpus[0];
        let original = scorer.score_loglik(&prompt, sentence).unwrap();
        assert!((original - oracle_loglik(&corpus, "coffee", sentence)).abs() < 1e-9);
        for seed in 0..20 {
            let mut toks: Vec<&str> = sentence.split(' ').collect();
            toks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled = toks.join(" ");
            let s = scorer.score_loglik(&prompt, &shuffled).unwrap();
            assert!((s - oracle_loglik(&corpus, "coffee", &shuffled)).abs() < 1e-9);
            assert!(original >= s, "seed {seed}: {shuffled}");
        }
    }

    #[test]
    fn sixty_keeps_forty_five() {
        assert_eq!(kept_count(60, 0.75), 45);
        assert_eq!(kept_count(2, 0.75), 2);
        assert_eq!(kept_count(10, 0.7), 7);
        assert_eq!(kept_count(1, 0.01), 1);
        let r = topk_filter(ranked(&vec![-1.0; 60]), 0.75).unwrap();
        assert_eq!(r.len(), 45);
    }

    #[test]
    fn full_fraction_sorts_everything() {
        let r = topk_filter(ranked(&[-3.0, -1.0, -2.0]), 1.0).unwrap();
        let ids: Vec<_> = r.iter().map(|x| x.sequence.video_id.clone()).collect();
        assert_eq!(ids, vec!["v1", "v2", "v0"]);
        assert!(topk_filter(vec![], 0.5).is_err());
        assert!(topk_filter(ranked(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn matches_sort_and_slice() {
        let scores = [-5.0, -1.5, -9.0, -1.5, -0.2, -7.0, -3.3, -2.0, -8.8, -4.1];
        let mut idx: Vec<usize> = (0..10).collect();
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let expected: Vec<String> = idx[..8].iter().map(|i| format!("v{i}")).collect();
        let got: Vec<String> = topk_filter(ranked(&scores), 0.75)
            .unwrap()
            .into_iter()
            .map(|r| r.sequence.video_id)
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn rank_all_marks_kept_and_skips_empty() {
        let scorer = BigramScorer::fit(&["fill water press brew grind beans"]);
        let seqs = vec![seq("a", &[1, 2]), seq("b", &[2, 1]), seq("c", &[]), seq("d", &[3])];
        let cfg = RankConfig {
            keep_fraction: 0.5,
            ..Default::default()
        };
        let (kept, records) = rank_all(&seqs, "make coffee", &labels(), &scorer, &cfg, 2).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(records.len(), 4);
        assert!(!records[2].kept && records[2].score.is_none());
        assert_eq!(records.iter().filter(|r| r.kept).count(), 2);
    }

    proptest! {
        #[test]
        fn kept_dominates_dropped(scores in proptest::collection::vec(-100i32..0, 1..100), frac in 0.01f64..=1.0) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let n = scores.len();
            let kept = topk_filter(ranked(&scores), frac).unwrap();
            prop_assert_eq!(kept.len(), kept_count(n, frac));
            let kept_ids: std::collections::HashSet<_> = kept.iter().map(|r| r.sequence.video_id.clone()).collect();
            let dropped_max = (0..n).filter(|i| !kept_ids.contains(&format!("v{i}"))).map(|i| scores[i]).fold(f64::MIN, f64::max);
            let kept_min = kept.iter().map(|r| r.score).fold(f64::MAX, f64::min);
            prop_assert!(kept_min >= dropped_max);
            // Equal scores keep input order.
            for w in kept.windows(2) {
                if w[0].score == w[1].score {
                    let a: usize = w[0].sequence.video_id[1..].parse().unwrap();
                    let b: usize = w[1].sequence.video_id[1..].parse().unwrap();
                    prop_assert!(a < b);
                }
            }
        }

        #[test]
        fn invariant_under_positive_affine_maps(scores in proptest::collection::vec(-50i32..0, 1..40), scale in 0.1f64..10.0, shift in -20.0f64..20.0) {
            let base: Vec<f64> = scores.iter().map(|&s| f64::from(s)).collect();
            let moved: Vec<f64> = base.iter().map(|s| s * scale + shift).collect();
            let ids = |v: Vec<RankedSequence>| v.into_iter().map(|r| r.sequence.video_id).collect::<Vec<_>>();
            prop_assert_eq!(ids(topk_filter(ranked(&base), 0.75).unwrap()), ids(topk_filter(ranked(&moved), 0.75).unwrap()));
        }
    }
}
