use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CompletionVector, TaskGraph};
use crate::{Error, Result};

/// Largest `m` enumerated exhaustively.
pub const MAX_EXACT_STEPS: usize = 16;
pub const SAMPLED_COMPLETIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    /// All `2^m` completion vectors; falls back to sampling above
    /// [`MAX_EXACT_STEPS`].
    #[default]
    Exact,
    /// [`SAMPLED_COMPLETIONS`] uniform draws from the seed.
    Sampled,
}

impl std::str::FromStr for AccuracyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(AccuracyMode::Exact),
            "sampled" => Ok(AccuracyMode::Sampled),
            other => Err(Error::invalid(format!("unknown accuracy mode {other:?}"))),
        }
    }
}

fn completions(m: usize, mode: AccuracyMode, seed: u64) -> Vec<CompletionVector> {
    if mode == AccuracyMode::Exact && m <= MAX_EXACT_STEPS {
        (0..1u64 << m)
            .map(|mask| CompletionVector::from_bits((0..m).map(|i| mask & (1 << i) != 0).collect()))
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..SAMPLED_COMPLETIONS)
            .map(|_| CompletionVector::from_bits((0..m).map(|_| rng.random_bool(0.5)).collect()))
            .collect()
    }
}

/// Mean over steps of the probability that both graphs agree on the step's
/// eligibility, with completion vectors drawn uniformly.
pub fn eval_accuracy(pred: &TaskGraph, truth: &TaskGraph, mode: AccuracyMode, seed: u64) -> Result<f64> {
    let m = truth.m();
    if pred.m() != m {
        return Err(Error::invalid(format!("graphs have {} and {m} steps", pred.m())));
    }
    if m == 0 {
        return Ok(1.0);
    }
    let cs = completions(m, mode, seed);
    let mut agree = vec![0usize; m];
    for c in &cs {
        for (p, slot) in agree.iter_mut().enumerate() {
            if pred.step_eligible(p + 1, c) == truth.step_eligible(p + 1, c) {
                *slot += 1;
            }
        }
    }
    let n = cs.len() as f64;
    Ok(agree.iter().map(|&a| a as f64 / n).sum::<f64>() / m as f64)
}
