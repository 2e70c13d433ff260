//! Keyword-separable synthetic corpora for exercising the full pipeline
//! without external data.
//!
//! Sentences are runs of neutral filler words with a few sentiment keywords
//! mixed in. Sentiment examples carry keywords of a single polarity; the
//! regression corpus mixes four keywords and scores the fraction that are
//! positive on `[0, 5]`.

use crate::dataset::{DatasetExample, Gold};
use crate::error::Result;
use crate::registry::{Metric, TaskKind, TaskSpec};
use crate::rng::SplitMix64;

pub const POSITIVE: [&str; 10] = [
    "wonderful", "superb", "delightful", "brilliant", "charming", "moving", "gripping", "joyful", "stunning", "clever",
];

pub const NEGATIVE: [&str; 10] = [
    "dreadful", "boring", "awful", "clumsy", "tedious", "dull", "painful", "messy", "bland", "hollow",
];

const ONSETS: [&str; 15] = ["ba", "ke", "lo", "mi", "nu", "pa", "ri", "so", "ta", "ve", "zo", "fi", "gu", "ha", "ju"];
const CODAS: [&str; 12] = ["ran", "let", "mon", "dis", "ful", "ber", "sak", "tin", "wop", "lix", "dom", "pel"];

/// Neutral filler vocabulary: every onset/coda pair, 180 words.
pub fn filler_words() -> Vec<String> {
    ONSETS
        .iter()
        .flat_map(|o| CODAS.iter().map(move |c| format!("{o}{c}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub min_filler: usize,
    pub max_filler: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            min_filler: 4,
            max_filler: 8,
            seed: 7,
        }
    }
}

struct Generator {
    rng: SplitMix64,
    filler: Vec<String>,
    cfg: SyntheticConfig,
}

impl Generator {
    fn new(cfg: SyntheticConfig, stream: u64) -> Self {
        Self {
            rng: SplitMix64::derive(cfg.seed, stream),
            filler: filler_words(),
            cfg,
        }
    }

    fn sentence(&mut self, keywords: &[&str]) -> String {
        let span = self.cfg.max_filler - self.cfg.min_filler + 1;
        let n = self.cfg.min_filler + self.rng.next_below(span as u64) as usize;
        let mut words: Vec<String> = (0..n).map(|_| self.rng.choose(&self.filler).clone()).collect();
        for kw in keywords {
            let at = self.rng.next_below(words.len() as u64 + 1) as usize;
            words.insert(at, kw.to_string());
        }
        words.join(" ")
    }
}

/// Binary sentiment corpus for the built-in `sst-2` task, alternating
/// classes: class 0 ("great") sentences carry 2 or 3 positive keywords,
/// class 1 ("terrible") sentences negative ones.
pub fn sentiment(count: usize, cfg: SyntheticConfig) -> Vec<DatasetExample> {
    let mut g = Generator::new(cfg, 1);
    (0..count)
        .map(|i| {
            let class = i % 2;
            let pool = if class == 0 { &POSITIVE } else { &NEGATIVE };
            let n = 2 + g.rng.next_below(2) as usize;
            let kws: Vec<&str> = (0..n).map(|_| *g.rng.choose(pool)).collect();
            DatasetExample {
                id: format!("syn-{i}"),
                s1: g.sentence(&kws),
                s2: None,
                gold: Gold::Class(class),
            }
        })
        .collect()
}

/// Regression task over the synthetic corpus: `[0, 5]`, poles "bad" and "good".
pub fn regression_task() -> Result<TaskSpec> {
    TaskSpec::new(
        "synthetic-regression",
        TaskKind::Regression { lower: 0.0, upper: 5.0 },
        "<S1> It was {LABELS}",
        vec!["bad".into(), "good".into()],
        Metric::Pearson,
    )
}

/// Each sentence carries four keywords; gold is `5 * positives / 4`.
/// The number of positives cycles through 0..=4.
pub fn regression(count: usize, cfg: SyntheticConfig) -> Vec<DatasetExample> {
    let mut g = Generator::new(cfg, 2);
    (0..count)
        .map(|i| {
            let pos = i % 5;
            let mut kws: Vec<&str> = (0..4)
                .map(|j| if j < pos { *g.rng.choose(&POSITIVE) } else { *g.rng.choose(&NEGATIVE) })
                .collect();
            g.rng.shuffle(&mut kws);
            DatasetExample {
                id: format!("syn-{i}"),
                s1: g.sentence(&kws),
                s2: None,
                gold: Gold::Value(5.0 * pos as f64 / 4.0),
            }
        })
        .collect()
}
