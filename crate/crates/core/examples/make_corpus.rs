//! Regenerates the bundled pour-over coffee corpus under `data/coffee`.
//!
//! Videos are rollouts of a hand-written ground-truth graph, with some steps
//! missing from the summaries. Each transcript narrates its rollout, and its
//! recorded completion lists the steps using randomly chosen surface forms.
//!
//!     cargo run -p taskgraph-core --example make_corpus -- data/coffee

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskgraph_core::graphinfer::DnfPrecondition;
use taskgraph_core::pipeline::canonical_json;
use taskgraph_core::providers::{Embedder, FixtureCompleter, TrigramEmbedder};
use taskgraph_core::simulate::{generate_dataset, GroundTruthGraph, RolloutConfig};
use taskgraph_core::summarize::{build_prompt, Transcript, DEFAULT_TEMPLATE};

const TASK: &str = "make pour-over coffee";
const VIDEOS: usize = 40;

const STEPS: [&[&str]; 7] = [
    &["Boil the water", "boil the water", "Boil the water."],
    &[
        "Grind the coffee beans",
        "grind the coffee beans",
        "Grind the coffee bean",
    ],
    &[
        "Place a filter in the dripper",
        "place a filter in the dripper",
        "Place a filter in the dripper.",
    ],
    &[
        "Rinse the paper filter",
        "rinse the paper filter",
        "Rinse the paper filters",
    ],
    &[
        "Add the ground coffee",
        "add the ground coffee",
        "Add the ground coffee.",
    ],
    &[
        "Pour hot water over the grounds",
        "pour hot water over the grounds",
        "Pour the hot water over the grounds",
    ],
    &["Serve the coffee", "serve the coffee", "Serve the coffee!"],
];

const NOISE: [&str; 10] = [
    "Like and subscribe",
    "Check out my other videos",
    "Thanks for watching",
    "Use good quality beans",
    "Enjoy your morning",
    "My kettle is from a local shop",
    "Leave a comment below",
    "This takes about four minutes",
    "Say hi to my cat",
    "Try it with oat milk",
];

const CONNECTORS: [&str; 5] = ["First", "Next", "Then", "After that", "Now"];

fn ground_truth() -> GroundTruthGraph {
    let pre = BTreeMap::from([
        (4, DnfPrecondition::all_of([1, 3])),
        (5, DnfPrecondition::all_of([2, 4])),
        (6, DnfPrecondition::all_of([5])),
        (7, DnfPrecondition::all_of([6])),
    ]);
    GroundTruthGraph::new(STEPS.len(), pre).expect("valid ground truth")
}

fn check_surface_forms() {
    let e = TrigramEmbedder;
    let emb = |s: &str| e.embed(s).unwrap();
    for (i, forms) in STEPS.iter().enumerate() {
        for a in forms.iter() {
            for b in forms.iter() {
                let c = emb(a).cosine(&emb(b));
                assert!(c >= 0.9, "{a:?} / {b:?}: {c:.3}");
            }
            for other in STEPS.iter().skip(i + 1) {
                for b in other.iter() {
                    let c = emb(a).cosine(&emb(b));
                    assert!(c < 0.75, "{a:?} / {b:?}: {c:.3}");
                }
            }
        }
    }
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/coffee".into()));
    check_surface_forms();
    let truth = ground_truth();
    let rollouts = generate_dataset(
        &truth,
        &RolloutConfig {
            count: VIDEOS,
            seed: 2024,
            drop_prob: 0.1,
        },
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut transcripts = Vec::new();
    let mut completer = FixtureCompleter::default();
    for (v, h) in rollouts.iter().enumerate() {
        let lines: Vec<String> = h
            .ids()
            .into_iter()
            .map(|p| STEPS[p - 1].choose(&mut rng).unwrap().to_string())
            .collect();
        // Chatter appears in the narration only; summaries leave it out.
        let mut spoken = lines.clone();
        if rng.random_bool(0.3) {
            let at = rng.random_range(0..=spoken.len());
            spoken.insert(at, NOISE.choose(&mut rng).unwrap().to_string());
        }
        let mut text = format!("Hi everyone, today I will show you how to {TASK}.");
        for (i, line) in spoken.iter().enumerate() {
            let conn = if i == 0 {
                "First"
            } else {
                CONNECTORS[1 + rng.random_range(0..4)]
            };
            text.push_str(&format!(
                " {conn}, {}.",
                line.to_lowercase().trim_end_matches(['.', '!'])
            ));
        }
        text.push_str(" That's it.");
        let completion = std::iter::once("Here are the key steps:".to_string())
            .chain(lines.iter().enumerate().map(|(i, l)| match v % 3 {
                0 => format!("{}. {l}", i + 1),
                1 => format!("{}) {l}", i + 1),
                _ => format!("- {l}"),
            }))
            .collect::<Vec<_>>()
            .join("\n");
        let t = Transcript {
            task_name: TASK.to_string(),
            video_id: format!("video-{:02}", v + 1),
            text,
        };
        completer.record(&build_prompt(TASK, &t.text, DEFAULT_TEMPLATE).unwrap(), completion);
        transcripts.push(t);
    }
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("transcripts.json"), canonical_json(&transcripts).unwrap()).unwrap();
    std::fs::write(
        out.join("completions.json"),
        canonical_json(completer.recorded()).unwrap(),
    )
    .unwrap();
    println!("wrote {} transcripts to {}", transcripts.len(), out.display());
}
