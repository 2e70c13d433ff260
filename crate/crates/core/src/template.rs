//! Prompt templates.
//!
//! A template is literal text with three placeholders: `<S1>` and `<S2>` for
//! the input sentences and `{LABELS}` for every label description word,
//! space-separated, in label order. Nothing else is inserted: spacing and
//! punctuation belong to the template. See `docs/template-grammar.md`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LABELS: &str = "{LABELS}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    SlotS1,
    SlotS2,
    SlotLabels,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

/// Half-open range of character (Unicode scalar) indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl From<[usize; 2]> for CharSpan {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<CharSpan> for [usize; 2] {
    fn from(span: CharSpan) -> Self {
        [span.start, span.end]
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    /// One span per label word, in label-word order.
    pub label_spans: Vec<CharSpan>,
}

impl RenderedPrompt {
    /// Text covered by `span`.
    pub fn slice(&self, span: CharSpan) -> String {
        char_slice(&self.text, span)
    }
}

pub(crate) fn char_slice(text: &str, span: CharSpan) -> String {
    text.chars().skip(span.start).take(span.len()).collect()
}

impl Template {
    pub fn parse(src: &str) -> Result<Self> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut rest = src;

        while let Some(c) = rest.chars().next() {
            let slot = match c {
                '{' => {
                    if rest.starts_with(LABELS) {
                        rest = &rest[LABELS.len()..];
                        Segment::SlotLabels
                    } else {
                        let shown: String = rest.chars().take(12).collect();
                        return Err(Error::Template(format!(
                            "unbalanced or unknown placeholder at `{shown}`"
                        )));
                    }
                }
                '}' => {
                    return Err(Error::Template("unbalanced `}`".into()));
                }
                '<' if rest.starts_with("<S") => {
                    let digits: String = rest[2..].chars().take_while(char::is_ascii_digit).collect();
                    if digits.is_empty() {
                        literal.push(c);
                        rest = &rest[1..];
                        continue;
                    }
                    let after = &rest[2 + digits.len()..];
                    if !after.starts_with('>') {
                        return Err(Error::Template(format!("unterminated placeholder `<S{digits}`")));
                    }
                    rest = &after[1..];
                    match digits.as_str() {
                        "1" => Segment::SlotS1,
                        "2" => Segment::SlotS2,
                        _ => return Err(Error::Template(format!("unknown slot `<S{digits}>`"))),
                    }
                }
                _ => {
                    literal.push(c);
                    rest = &rest[c.len_utf8()..];
                    continue;
                }
            };
            if !literal.is_empty() {
                segments.push(Segment::Literal(std::mem::take(&mut literal)));
            }
            if segments.contains(&slot) {
                return Err(Error::Template(format!("duplicate slot {}", slot_name(&slot))));
            }
            segments.push(slot);
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }

        if !segments.contains(&Segment::SlotLabels) {
            return Err(Error::Template("missing {LABELS}".into()));
        }
        if !segments.contains(&Segment::SlotS1) {
            return Err(Error::Template("missing <S1>".into()));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn has_s2(&self) -> bool {
        self.segments.contains(&Segment::SlotS2)
    }

    /// Literal segments in order.
    pub fn literals(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Literal(text) => Some(text.as_str()),
            _ => None,
        })
    }

    pub fn render<S: AsRef<str>>(
        &self,
        s1: &str,
        s2: Option<&str>,
        label_words: &[S],
    ) -> Result<RenderedPrompt> {
        match (self.has_s2(), s2) {
            (true, None) => return Err(Error::Render("template needs <S2> but no second sentence was given".into())),
            (false, Some(_)) => {
                return Err(Error::Render("second sentence given but template has no <S2>".into()))
            }
            _ => {}
        }
        if label_words.is_empty() {
            return Err(Error::Render("no label words".into()));
        }
        if let Some(w) = label_words.iter().find(|w| w.as_ref().is_empty()) {
            return Err(Error::Render(format!("empty label word `{}`", w.as_ref())));
        }

        let mut text = String::new();
        let mut len = 0usize;
        let mut label_spans = Vec::with_capacity(label_words.len());
        let push = |text: &mut String, len: &mut usize, piece: &str| -> CharSpan {
            let start = *len;
            text.push_str(piece);
            *len += piece.chars().count();
            CharSpan::new(start, *len)
        };

        for segment in &self.segments {
            match segment {
                Segment::Literal(lit) => {
                    push(&mut text, &mut len, lit);
                }
                Segment::SlotS1 => {
                    push(&mut text, &mut len, s1);
                }
                Segment::SlotS2 => {
                    push(&mut text, &mut len, s2.unwrap_or_default());
                }
                Segment::SlotLabels => {
                    for (i, word) in label_words.iter().enumerate() {
                        if i > 0 {
                            push(&mut text, &mut len, " ");
                        }
                        label_spans.push(push(&mut text, &mut len, word.as_ref()));
                    }
                }
            }
        }
        Ok(RenderedPrompt { text, label_spans })
    }
}

impl std::str::FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => f.write_str(text)?,
                other => f.write_str(slot_name(other))?,
            }
        }
        Ok(())
    }
}

fn slot_name(segment: &Segment) -> &'static str {
    match segment {
        Segment::SlotS1 => "<S1>",
        Segment::SlotS2 => "<S2>",
        Segment::SlotLabels => LABELS,
        Segment::Literal(_) => "literal",
    }
}
