//! Target construction and prediction decoding.
//!
//! During fine-tuning every token of a prompt gets a target: label words are
//! "replaced" (1) except the gold one, which is "original" (0), and all other
//! tokens are original. Regression spreads the gold value over the two pole
//! words as soft targets. At test time the least-replaced label word wins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::TokenSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossScope {
    /// Every token contributes to the loss.
    #[default]
    FullSequence,
    /// Only label-word tokens contribute.
    #[serde(alias = "label-only")]
    LabelPositionsOnly,
}

impl std::str::FromStr for LossScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full-sequence" => Ok(LossScope::FullSequence),
            "label-positions-only" | "label-only" => Ok(LossScope::LabelPositionsOnly),
            other => Err(Error::Config(format!("unknown loss scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptEncoding {
    pub tokens: TokenSeq,
    pub label_positions: Vec<usize>,
}

impl PromptEncoding {
    pub fn new(tokens: TokenSeq, label_positions: Vec<usize>) -> Result<Self> {
        if label_positions.len() < 2 {
            return Err(Error::Target("need at least two label positions".into()));
        }
        if label_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Target("label positions must be strictly ascending".into()));
        }
        if label_positions.iter().any(|&p| p >= tokens.len()) {
            return Err(Error::Target("label position past end of sequence".into()));
        }
        Ok(Self {
            tokens,
            label_positions,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub values: Vec<f64>,
    pub loss_mask: Vec<bool>,
}

impl TargetVector {
    /// Zeros everywhere except `word_targets` at `positions`.
    pub fn from_word_targets(
        len: usize,
        positions: &[usize],
        word_targets: &[f64],
        scope: LossScope,
    ) -> Result<Self> {
        if positions.len() != word_targets.len() {
            return Err(Error::Target(format!(
                "{} targets for {} label positions",
                word_targets.len(),
                positions.len()
            )));
        }
        let mut values = vec![0.0; len];
        let mut loss_mask = vec![scope == LossScope::FullSequence; len];
        for (&pos, &target) in positions.iter().zip(word_targets) {
            if !(0.0..=1.0).contains(&target) {
                return Err(Error::Target(format!("target {target} outside [0, 1]")));
            }
            let slot = values
                .get_mut(pos)
                .ok_or_else(|| Error::Target(format!("position {pos} past end of sequence")))?;
            *slot = target;
            loss_mask[pos] = true;
        }
        Ok(Self { values, loss_mask })
    }
}

/// Replaced probability per label word, in label-word order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelProbabilities(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prediction {
    ClassIndex(usize),
    Value(f64),
}

impl Prediction {
    pub fn as_f64(&self) -> f64 {
        match *self {
            Prediction::ClassIndex(i) => i as f64,
            Prediction::Value(v) => v,
        }
    }
}

/// Word-level targets for a classification example: 0 for the gold word,
/// 1 for every other label word.
pub fn classification_word_targets(k: usize, gold: usize) -> Result<Vec<f64>> {
    if gold >= k {
        return Err(Error::Target(format!("gold class {gold} out of range for {k} labels")));
    }
    Ok((0..k).map(|i| if i == gold { 0.0 } else { 1.0 }).collect())
}

/// Word-level soft targets `[1 - P(lower | x), 1 - P(upper | x)]` with the
/// pole probabilities interpolated linearly from `y`.
pub fn regression_word_targets(y: f64, lower: f64, upper: f64) -> Result<[f64; 2]> {
    if !(lower < upper) {
        return Err(Error::Target(format!("invalid interval [{lower}, {upper}]")));
    }
    if !(lower..=upper).contains(&y) {
        return Err(Error::Target(format!("value {y} outside [{lower}, {upper}]")));
    }
    let width = upper - lower;
    let p_lower = (upper - y) / width;
    let p_upper = (y - lower) / width;
    Ok([1.0 - p_lower, 1.0 - p_upper])
}

pub fn build_classification_targets(enc: &PromptEncoding, gold: usize, scope: LossScope) -> Result<TargetVector> {
    let words = classification_word_targets(enc.label_positions.len(), gold)?;
    TargetVector::from_word_targets(enc.len(), &enc.label_positions, &words, scope)
}

pub fn build_regression_targets(
    enc: &PromptEncoding,
    y: f64,
    lower: f64,
    upper: f64,
    scope: LossScope,
) -> Result<TargetVector> {
    if enc.label_positions.len() != 2 {
        return Err(Error::Target(format!(
            "regression needs exactly 2 label positions, got {}",
            enc.label_positions.len()
        )));
    }
    let words = regression_word_targets(y, lower, upper)?;
    TargetVector::from_word_targets(enc.len(), &enc.label_positions, &words, scope)
}

/// Index of the least-replaced label word. Ties go to the lowest index.
pub fn decode_classification(probs: &LabelProbabilities) -> Result<Prediction> {
    if probs.0.len() < 2 {
        return Err(Error::Target("need at least two label probabilities".into()));
    }
    let mut best = 0;
    for (i, &p) in probs.0.iter().enumerate().skip(1) {
        if p < probs.0[best] {
            best = i;
        }
    }
    Ok(Prediction::ClassIndex(best))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionDecode {
    pub value: f64,
    /// Both pole words scored fully replaced; `value` is the interval midpoint.
    pub degenerate: bool,
}

/// Regression value from the replaced probabilities of the lower and upper
/// pole words: pole posteriors `1 - y`, normalised to sum to one, then the
/// expected interval endpoint.
pub fn decode_regression(y_lower: f64, y_upper: f64, lower: f64, upper: f64) -> RegressionDecode {
    let p_lower = 1.0 - y_lower;
    let p_upper = 1.0 - y_upper;
    let total = p_lower + p_upper;
    if total <= 0.0 {
        return RegressionDecode {
            value: (lower + upper) / 2.0,
            degenerate: true,
        };
    }
    let value = lower * (p_lower / total) + upper * (p_upper / total);
    RegressionDecode {
        value: value.clamp(lower, upper),
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::CharSpan;

    fn encoding(len: usize, positions: Vec<usize>) -> PromptEncoding {
        let tokens = TokenSeq {
            ids: vec![5; len],
            offsets: (0..len - 2).map(|i| CharSpan::new(i, i + 1)).collect(),
        };
        PromptEncoding::new(tokens, positions).unwrap()
    }

    #[test]
    fn five_class_pattern() {
        // [CLS] this is one of his best films . it was great good okay bad terrible [SEP]
        let enc = encoding(17, vec![11, 12, 13, 14, 15]);
        let t = build_classification_targets(&enc, 0, LossScope::FullSequence).unwrap();
        assert_eq!(&t.values[10..], &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0][..]);
        assert!(t.loss_mask.iter().all(|&m| m));
    }

    #[test]
    fn binary_gold_one() {
        let enc = encoding(6, vec![3, 4]);
        let t = build_classification_targets(&enc, 1, LossScope::FullSequence).unwrap();
        assert_eq!((t.values[3], t.values[4]), (1.0, 0.0));
        assert!(build_classification_targets(&enc, 2, LossScope::FullSequence).is_err());
    }

    #[test]
    fn label_only_scope_masks_other_tokens() {
        let enc = encoding(6, vec![3, 4]);
        let t = build_classification_targets(&enc, 0, LossScope::LabelPositionsOnly).unwrap();
        assert_eq!(t.loss_mask, vec![false, false, false, true, true, false]);
    }

    #[test]
    fn regression_soft_targets() {
        let enc = encoding(8, vec![3, 4]);
        let t = build_regression_targets(&enc, 4.0, 0.0, 5.0, LossScope::FullSequence).unwrap();
        assert!((t.values[3] - 0.8).abs() < 1e-12);
        assert!((t.values[4] - 0.2).abs() < 1e-12);
        assert_eq!(regression_word_targets(0.0, 0.0, 5.0).unwrap(), [0.0, 1.0]);
        assert_eq!(regression_word_targets(5.0, 0.0, 5.0).unwrap(), [1.0, 0.0]);
        assert_eq!(regression_word_targets(2.5, 0.0, 5.0).unwrap(), [0.5, 0.5]);
        assert!(regression_word_targets(5.1, 0.0, 5.0).is_err());
        assert!(build_regression_targets(&encoding(8, vec![1, 2, 3]), 1.0, 0.0, 5.0, LossScope::FullSequence).is_err());
    }

    #[test]
    fn classification_decoding() {
        let d = |p: &[f64]| decode_classification(&LabelProbabilities(p.to_vec())).unwrap();
        assert_eq!(d(&[0.3, 0.7]), Prediction::ClassIndex(0));
        assert_eq!(d(&[0.5, 0.5]), Prediction::ClassIndex(0));
        assert_eq!(d(&[0.9, 0.4, 0.4]), Prediction::ClassIndex(1));
        assert!(decode_classification(&LabelProbabilities(vec![0.1])).is_err());
    }

    #[test]
    fn regression_decoding() {
        let r = decode_regression(0.2, 0.8, 0.0, 5.0);
        assert!((r.value - 1.0).abs() < 1e-12 && !r.degenerate);
        assert!((decode_regression(0.3, 0.3, 0.0, 5.0).value - 2.5).abs() < 1e-12);
        assert!((decode_regression(0.8, 0.2, 0.0, 5.0).value - 4.0).abs() < 1e-12);
        let d = decode_regression(1.0, 1.0, 0.0, 5.0);
        assert_eq!(d, RegressionDecode { value: 2.5, degenerate: true });
    }

    proptest::proptest! {
        #[test]
        fn classification_round_trip(k in 2usize..=10, gold_seed in 0usize..100, extra in 0usize..5) {
            let gold = gold_seed % k;
            let positions: Vec<usize> = (0..k).map(|i| 1 + extra + i).collect();
            let enc = encoding(k + extra + 3, positions.clone());
            let t = build_classification_targets(&enc, gold, LossScope::FullSequence).unwrap();
            let probs = LabelProbabilities(positions.iter().map(|&p| t.values[p]).collect());
            proptest::prop_assert_eq!(decode_classification(&probs).unwrap(), Prediction::ClassIndex(gold));
            for (i, v) in t.values.iter().enumerate() {
                if !positions.contains(&i) {
                    proptest::prop_assert_eq!(*v, 0.0);
                }
            }
        }

        #[test]
        fn argmin_invariant_under_monotone_maps(p in proptest::collection::vec(0.0f64..1.0, 2..10)) {
            let a = decode_classification(&LabelProbabilities(p.clone())).unwrap();
            let b = decode_classification(&LabelProbabilities(p.iter().map(|x| x.powi(3) * 0.5 + 0.1).collect())).unwrap();
            let c = decode_classification(&LabelProbabilities(p.iter().map(|x| (x * 4.0).exp()).collect())).unwrap();
            proptest::prop_assert_eq!(a, b);
            proptest::prop_assert_eq!(a, c);
        }

        #[test]
        fn regression_round_trip(y in 0.0f64..=5.0) {
            let [tl, tu] = regression_word_targets(y, 0.0, 5.0).unwrap();
            let r = decode_regression(tl, tu, 0.0, 5.0);
            proptest::prop_assert!((r.value - y).abs() < 1e-9);
        }

        #[test]
        fn normalised_posteriors_sum_to_one(yl in 0.0f64..1.0, yu in 0.0f64..1.0) {
            let (pl, pu) = (1.0 - yl, 1.0 - yu);
            let total = pl + pu;
            proptest::prop_assert!(((pl / total) + (pu / total) - 1.0).abs() < 1e-12);
            let r = decode_regression(yl, yu, 0.0, 5.0);
            proptest::prop_assert!((0.0..=5.0).contains(&r.value));
        }
    }
}
