//! Word-level tokenizer for the toy discriminator.
//!
//! Text is lowercased and split into maximal alphanumeric runs; every other
//! non-whitespace character is a token of its own. Offsets are character
//! indices into the original text.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::template::CharSpan;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    /// Character range of each non-special token; `offsets[j]` belongs to `ids[j + 1]`.
    pub offsets: Vec<CharSpan>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Splits text into lowercased word pieces with character offsets.
pub fn pre_tokenize(text: &str) -> Vec<(String, CharSpan)> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (i, c) in text.chars().enumerate() {
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = i;
            }
            current.extend(c.to_lowercase());
            continue;
        }
        if !current.is_empty() {
            out.push((std::mem::take(&mut current), CharSpan::new(start, i)));
        }
        if !c.is_whitespace() {
            out.push((c.to_lowercase().collect(), CharSpan::new(i, i + 1)));
        }
    }
    if !current.is_empty() {
        let end = text.chars().count();
        out.push((current, CharSpan::new(start, end)));
    }
    out
}

impl Vocab {
    /// Word types with frequency ≥ `min_count`, ordered by frequency
    /// (descending) then lexicographically, after the four reserved tokens.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Self> {
        Self::build_keeping_words(corpus, min_count, &[] as &[&str])
    }

    /// Like [`Vocab::build`], but words of `keep` are admitted whatever
    /// their frequency.
    pub fn build_keeping_words<S: AsRef<str>, K: AsRef<str>>(
        corpus: &[S],
        min_count: usize,
        keep: &[K],
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in corpus {
            for (word, _) in pre_tokenize(text.as_ref()) {
                *counts.entry(word).or_default() += 1;
            }
        }
        let kept: HashSet<String> = keep
            .iter()
            .flat_map(|k| pre_tokenize(k.as_ref()).into_iter().map(|(w, _)| w))
            .collect();
        for w in &kept {
            counts.entry(w.clone()).or_default();
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, n)| (*n >= min_count.max(1) || kept.contains(w)) && !RESERVED.contains(&w.as_str()))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_tokens(words.into_iter().map(|(w, _)| w)))
    }

    fn from_tokens(words: impl IntoIterator<Item = String>) -> Self {
        let tokens: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(words)
            .collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// `[CLS] tokens [SEP]`, keeping at most `max_length` ids by dropping
    /// trailing tokens.
    pub fn encode(&self, text: &str, max_length: usize) -> Result<TokenSeq> {
        if max_length < 3 {
            return Err(Error::Model(format!("max_length must be at least 3, got {max_length}")));
        }
        let mut pieces = pre_tokenize(text);
        pieces.truncate(max_length - 2);
        Ok(self.assemble(pieces))
    }

    /// Like [`encode`](Self::encode) but never drops a token overlapping
    /// `keep`. Text before the first kept span loses tokens from its start,
    /// text after the last kept span loses tokens from its end, always taking
    /// from whichever side is currently longer.
    pub fn encode_keeping(&self, text: &str, keep: &[CharSpan], max_length: usize) -> Result<TokenSeq> {
        if max_length < 3 {
            return Err(Error::Model(format!("max_length must be at least 3, got {max_length}")));
        }
        let pieces = pre_tokenize(text);
        let budget = max_length - 2;
        if pieces.len() <= budget || keep.is_empty() {
            return self.encode(text, max_length);
        }
        let first = keep.iter().map(|s| s.start).min().unwrap_or(0);
        let last = keep.iter().map(|s| s.end).max().unwrap_or(0);
        let mut lead = pieces.iter().take_while(|(_, o)| o.end <= first).count();
        let mut trail = pieces.iter().rev().take_while(|(_, o)| o.start >= last).count();
        let core = pieces.len() - lead - trail;
        if core > budget {
            let span = keep.iter().max_by_key(|s| s.end).copied().unwrap_or(CharSpan::new(0, 0));
            return Err(Error::Truncation {
                start: span.start,
                end: span.end,
                max_length,
            });
        }
        let mut drop_lead = 0;
        while lead + trail + core > budget {
            if lead >= trail {
                lead -= 1;
                drop_lead += 1;
            } else {
                trail -= 1;
            }
        }
        let kept: Vec<_> = pieces.into_iter().skip(drop_lead).take(lead + core + trail).collect();
        Ok(self.assemble(kept))
    }

    fn assemble(&self, pieces: Vec<(String, CharSpan)>) -> TokenSeq {
        let mut ids = Vec::with_capacity(pieces.len() + 2);
        let mut offsets = Vec::with_capacity(pieces.len());
        ids.push(CLS);
        for (word, span) in pieces {
            ids.push(self.id(&word));
            offsets.push(span);
        }
        ids.push(SEP);
        TokenSeq { ids, offsets }
    }

    /// One token per line; the line index is the id.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let lines = r
            .lines()
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::Checkpoint(format!("vocab: {e}")))?;
        if lines.len() < RESERVED.len() || lines[..RESERVED.len()] != RESERVED {
            return Err(Error::Checkpoint("vocab: missing reserved tokens".into()));
        }
        Ok(Self::from_tokens(lines.into_iter().skip(RESERVED.len())))
    }
}

/// Token positions `[t_1 .. t_k]` of the label words. Each span must match
/// one token's offsets exactly.
pub fn map_spans(seq: &TokenSeq, spans: &[CharSpan]) -> Result<Vec<usize>> {
    spans
        .iter()
        .map(|span| match seq.offsets.iter().position(|o| o == span) {
            Some(j) => Ok(j + 1),
            None if seq.offsets.last().is_none_or(|o| span.start >= o.end) => Err(Error::Truncation {
                start: span.start,
                end: span.end,
                max_length: seq.ids.len(),
            }),
            None => Err(Error::SpanAlignment {
                start: span.start,
                end: span.end,
            }),
        })
        .collect()
}
