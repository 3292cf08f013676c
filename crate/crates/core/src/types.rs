//! Domain types shared by every module: tokens, sentences, label alphabets,
//! label grids, extractions, and coordination structures.
//!
//! All types here are immutable after construction and safe to share across
//! threads.

use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Number of synthetic tokens appended to a sentence for extraction
/// (`[is]`, `[of]`, `[from]`).
pub const APPENDED_TOKENS: [&str; 3] = ["[is]", "[of]", "[from]"];

/// One token of a sentence.
///
/// Appended tokens keep their bracketed surface (`"[is]"`); use
/// [`Token::match_text`] to get the bare word used for string matching and
/// serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// 0-based position in the sentence.
    pub index: usize,
    /// True for the three appended tokens, which occupy the final
    /// positions of a sentence when present.
    pub is_appended: bool,
}

impl Token {
    /// Surface used for matching and serialization: appended tokens are
    /// stripped of their brackets (`"[is]"` → `"is"`).
    pub fn match_text(&self) -> &str {
        if self.is_appended {
            self.surface.trim_start_matches('[').trim_end_matches(']')
        } else {
            &self.surface
        }
    }
}

/// A tokenized sentence, optionally extended with the appended tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
    raw: String,
}

impl Sentence {
    /// Build a sentence from real (non-appended) token surfaces.
    pub fn new(surfaces: Vec<String>, raw: String) -> Result<Self> {
        if surfaces.is_empty() {
            return Err(Error::validation("sentence must have at least one token"));
        }
        let tokens = surfaces
            .into_iter()
            .enumerate()
            .map(|(index, surface)| Token {
                surface,
                index,
                is_appended: false,
            })
            .collect();
        Ok(Sentence { tokens, raw })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Total token count, appended tokens included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Count of real (non-appended) tokens.
    pub fn real_len(&self) -> usize {
        self.tokens.iter().filter(|t| !t.is_appended).count()
    }

    pub fn has_appended(&self) -> bool {
        self.tokens.iter().any(|t| t.is_appended)
    }

    pub fn token(&self, index: usize) -> Option<&Token> {
        self.tokens.get(index)
    }

    /// Real-token surfaces joined by single spaces.
    pub fn detokenized(&self) -> String {
        let words: Vec<&str> = self
            .tokens
            .iter()
            .filter(|t| !t.is_appended)
            .map(|t| t.surface.as_str())
            .collect();
        words.join(" ")
    }

    /// Extend with the three appended tokens, in their fixed order.
    /// Errors on a second append.
    pub fn with_appended(&self) -> Result<Sentence> {
        if self.has_appended() {
            return Err(Error::validation(
                "sentence already carries appended tokens",
            ));
        }
        let mut tokens = self.tokens.clone();
        let base = tokens.len();
        for (i, surface) in APPENDED_TOKENS.iter().enumerate() {
            tokens.push(Token {
                surface: (*surface).to_string(),
                index: base + i,
                is_appended: true,
            });
        }
        Ok(Sentence {
            tokens,
            raw: self.raw.clone(),
        })
    }
}

/// A label alphabet for one kind of grid. The tuple and coordination
/// alphabets are distinct types, so a grid can only ever use one of them.
pub trait LabelAlphabet: Copy + Eq + fmt::Debug + Send + Sync + 'static {
    const SIZE: usize;
    /// Index of the "none" label within the alphabet.
    const NONE_INDEX: usize;
    /// Stable name recorded in checkpoints.
    const NAME: &'static str;

    fn index(self) -> usize;
    fn from_index(i: usize) -> Self;
    fn symbol(self) -> &'static str;
    fn parse(s: &str) -> Option<Self>
    where
        Self: Sized;

    fn none() -> Self
    where
        Self: Sized,
    {
        Self::from_index(Self::NONE_INDEX)
    }
}

/// Labels for extraction grids: subject, relation, object, none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TupleLabel {
    Subject,
    Relation,
    Object,
    None,
}

impl LabelAlphabet for TupleLabel {
    const SIZE: usize = 4;
    const NONE_INDEX: usize = 3;
    const NAME: &'static str = "tuple";

    fn index(self) -> usize {
        match self {
            TupleLabel::Subject => 0,
            TupleLabel::Relation => 1,
            TupleLabel::Object => 2,
            TupleLabel::None => 3,
        }
    }

    fn from_index(i: usize) -> Self {
        match i {
            0 => TupleLabel::Subject,
            1 => TupleLabel::Relation,
            2 => TupleLabel::Object,
            3 => TupleLabel::None,
            _ => panic!("tuple label index out of range: {i}"),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            TupleLabel::Subject => "S",
            TupleLabel::Relation => "R",
            TupleLabel::Object => "O",
            TupleLabel::None => "N",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "S" => Some(TupleLabel::Subject),
            "R" => Some(TupleLabel::Relation),
            "O" => Some(TupleLabel::Object),
            "N" => Some(TupleLabel::None),
            _ => None,
        }
    }
}

/// Labels for coordination grids: coordinating conjunction, conjunct
/// member, none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoordLabel {
    Coordinator,
    Conjunct,
    None,
}

impl LabelAlphabet for CoordLabel {
    const SIZE: usize = 3;
    const NONE_INDEX: usize = 2;
    const NAME: &'static str = "coordination";

    fn index(self) -> usize {
        match self {
            CoordLabel::Coordinator => 0,
            CoordLabel::Conjunct => 1,
            CoordLabel::None => 2,
        }
    }

    fn from_index(i: usize) -> Self {
        match i {
            0 => CoordLabel::Coordinator,
            1 => CoordLabel::Conjunct,
            2 => CoordLabel::None,
            _ => panic!("coordination label index out of range: {i}"),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CoordLabel::Coordinator => "CC",
            CoordLabel::Conjunct => "CONJ",
            CoordLabel::None => "N",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "CC" => Some(CoordLabel::Coordinator),
            "CONJ" => Some(CoordLabel::Conjunct),
            "N" | "NONE" => Some(CoordLabel::None),
            _ => None,
        }
    }
}

/// Tolerance for probability-row normalization checks.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// An `levels × width` grid of labels over one sentence: hard labels per
/// cell, plus the full per-cell probability distributions when the grid
/// came out of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid<A: LabelAlphabet> {
    levels: usize,
    width: usize,
    hard: Vec<A>,
    probs: Option<Vec<f64>>,
}

impl<A: LabelAlphabet> LabelGrid<A> {
    /// Build a hard-label grid. All rows must have equal width.
    pub fn from_hard(rows: Vec<Vec<A>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::shape("label grid needs at least one level"));
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(Error::shape("label grid needs at least one column"));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::shape("label grid rows have unequal widths"));
        }
        let hard = rows.into_iter().flatten().collect();
        Ok(LabelGrid {
            levels: 0,
            width,
            hard,
            probs: None,
        }
        .with_levels_from_hard())
    }

    fn with_levels_from_hard(mut self) -> Self {
        self.levels = self.hard.len() / self.width;
        self
    }

    /// Build a probabilistic grid from `levels × width × SIZE` data in
    /// level-major, then column-major, then label order. Every cell
    /// distribution must sum to 1 within [`PROB_SUM_TOLERANCE`]; hard
    /// labels are the per-cell argmax.
    pub fn from_probs(levels: usize, width: usize, probs: Vec<f64>) -> Result<Self> {
        if levels == 0 || width == 0 {
            return Err(Error::shape("label grid needs at least one cell"));
        }
        if probs.len() != levels * width * A::SIZE {
            return Err(Error::shape(format!(
                "probability grid has {} values, expected {}",
                probs.len(),
                levels * width * A::SIZE
            )));
        }
        let mut hard = Vec::with_capacity(levels * width);
        for cell in probs.chunks(A::SIZE) {
            let sum: f64 = cell.iter().sum();
            if !sum.is_finite() || (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::validation(format!(
                    "probability cell sums to {sum}, expected 1"
                )));
            }
            let mut best = 0;
            for (k, &p) in cell.iter().enumerate() {
                if p > cell[best] {
                    best = k;
                }
            }
            hard.push(A::from_index(best));
        }
        Ok(LabelGrid {
            levels,
            width,
            hard,
            probs: Some(probs),
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Number of grid columns (tokens, appended ones included).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn hard(&self, level: usize, col: usize) -> A {
        self.hard[level * self.width + col]
    }

    pub fn level_hard(&self, level: usize) -> &[A] {
        &self.hard[level * self.width..(level + 1) * self.width]
    }

    /// Probability of label `k` at `(level, col)`. Hard grids report 1 for
    /// the stored label and 0 elsewhere.
    pub fn prob(&self, level: usize, col: usize, k: usize) -> f64 {
        match &self.probs {
            Some(p) => p[(level * self.width + col) * A::SIZE + k],
            None => {
                if self.hard(level, col).index() == k {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_probabilistic(&self) -> bool {
        self.probs.is_some()
    }
}

/// One `(subject; relation; object)` tuple over a sentence.
///
/// Argument slots are sorted index lists (gaps allowed, so a relation may
/// interleave appended tokens). Canonical extractions produced by decoding
/// and gold alignment always have a non-empty relation; subject and object
/// may be empty. Confidence is a length-normalized log-probability, so it
/// is never positive; exponentiate for display.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub subject: Vec<usize>,
    pub relation: Vec<usize>,
    pub object: Vec<usize>,
    pub confidence: f64,
    pub source: Arc<Sentence>,
}

impl Extraction {
    pub fn new(
        subject: Vec<usize>,
        relation: Vec<usize>,
        object: Vec<usize>,
        confidence: f64,
        source: Arc<Sentence>,
    ) -> Result<Self> {
        let e = Extraction {
            subject,
            relation,
            object,
            confidence,
            source,
        };
        e.validate()?;
        Ok(e)
    }

    fn validate(&self) -> Result<()> {
        let len = self.source.len();
        let mut seen = vec![false; len];
        for (name, slot) in [
            ("subject", &self.subject),
            ("relation", &self.relation),
            ("object", &self.object),
        ] {
            let mut prev: Option<usize> = None;
            for &i in slot {
                if i >= len {
                    return Err(Error::validation(format!(
                        "{name} index {i} out of range for sentence of {len} tokens"
                    )));
                }
                if let Some(p) = prev {
                    if i <= p {
                        return Err(Error::validation(format!(
                            "{name} indices not strictly ascending"
                        )));
                    }
                }
                if seen[i] {
                    return Err(Error::validation(format!(
                        "token {i} appears in two argument slots"
                    )));
                }
                seen[i] = true;
                prev = Some(i);
            }
        }
        Ok(())
    }

    /// Rendering order for a slot: an appended `[is]` leads, real tokens
    /// follow in sentence order, appended `[of]`/`[from]` trail. Index
    /// lists themselves stay sorted ascending.
    fn ordered_slot(&self, slot: &[usize]) -> Vec<usize> {
        let is_lead = |i: &usize| {
            self.source
                .token(*i)
                .is_some_and(|t| t.is_appended && t.surface == APPENDED_TOKENS[0])
        };
        let is_trail =
            |i: &usize| self.source.token(*i).is_some_and(|t| t.is_appended) && !is_lead(i);
        let mut ordered: Vec<usize> = slot.iter().copied().filter(is_lead).collect();
        ordered.extend(slot.iter().copied().filter(|i| !is_lead(i) && !is_trail(i)));
        ordered.extend(slot.iter().copied().filter(is_trail));
        ordered
    }

    fn slot_text(&self, slot: &[usize]) -> String {
        let words: Vec<&str> = self
            .ordered_slot(slot)
            .into_iter()
            .map(|i| self.source.token(i).map(|t| t.match_text()).unwrap_or(""))
            .collect();
        words.join(" ")
    }

    /// Subject text with appended-token brackets stripped.
    pub fn subject_text(&self) -> String {
        self.slot_text(&self.subject)
    }

    pub fn relation_text(&self) -> String {
        self.slot_text(&self.relation)
    }

    pub fn object_text(&self) -> String {
        self.slot_text(&self.object)
    }

    /// Slot text preserving appended-token brackets, for display.
    pub fn display_slot(&self, slot: &[usize]) -> String {
        let words: Vec<&str> = self
            .ordered_slot(slot)
            .into_iter()
            .map(|i| {
                self.source
                    .token(i)
                    .map(|t| t.surface.as_str())
                    .unwrap_or("")
            })
            .collect();
        words.join(" ")
    }
}

impl fmt::Display for Extraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}; {}; {})",
            self.display_slot(&self.subject),
            self.display_slot(&self.relation),
            self.display_slot(&self.object)
        )
    }
}

/// Flatten an extraction to text: subject, relation, object surfaces joined
/// by single spaces, empty slots omitted. Appended tokens contribute their
/// bare word.
pub fn serialize_extraction(e: &Extraction) -> String {
    let parts = [e.subject_text(), e.relation_text(), e.object_text()];
    let non_empty: Vec<&str> = parts
        .iter()
        .map(|s| s.as_str())
        .filter(|s| !s.is_empty())
        .collect();
    non_empty.join(" ")
}

/// Deduplication key: case-folded, whitespace-collapsed text triple.
/// Equal keys identify duplicate extractions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DedupKey {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalize an extraction into its deduplication key.
pub fn normalize_extraction(e: &Extraction) -> DedupKey {
    DedupKey {
        subject: normalize_text(&e.subject_text()),
        relation: normalize_text(&e.relation_text()),
        object: normalize_text(&e.object_text()),
    }
}

/// A contiguous token span, end exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i < self.end
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> {
        self.start..self.end
    }
}

/// A coordinator token with its conjunct spans, at one hierarchy level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinationStructure {
    /// Hierarchy row index; lower is outermost.
    pub level: usize,
    /// Token index of the coordinating conjunction.
    pub coordinator: usize,
    /// At least two disjoint, ordered conjunct spans.
    pub conjuncts: Vec<Span>,
}

impl CoordinationStructure {
    pub fn new(level: usize, coordinator: usize, conjuncts: Vec<Span>) -> Result<Self> {
        if conjuncts.len() < 2 {
            return Err(Error::validation(
                "coordination structure needs at least two conjuncts",
            ));
        }
        for pair in conjuncts.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::validation(
                    "conjunct spans must be ordered and disjoint",
                ));
            }
        }
        let first = conjuncts.first().unwrap();
        let last = conjuncts.last().unwrap();
        if coordinator + 1 < first.start || coordinator > last.end {
            return Err(Error::validation(
                "coordinator must lie between or adjacent to the conjuncts",
            ));
        }
        Ok(CoordinationStructure {
            level,
            coordinator,
            conjuncts,
        })
    }

    /// Full span covered by the structure: first conjunct start through
    /// last conjunct end (coordinator included when adjacent).
    pub fn full_span(&self) -> Span {
        let start = self.conjuncts.first().unwrap().start.min(self.coordinator);
        let end = self.conjuncts.last().unwrap().end.max(self.coordinator + 1);
        Span::new(start, end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(words: &[&str]) -> Arc<Sentence> {
        Arc::new(
            Sentence::new(
                words.iter().map(|w| w.to_string()).collect(),
                words.join(" "),
            )
            .unwrap(),
        )
    }

    #[test]
    fn appended_tokens_extend_sentence() {
        let s = sentence(&["Rome", "is", "known"]);
        let a = s.with_appended().unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a.real_len(), 3);
        assert_eq!(a.token(3).unwrap().surface, "[is]");
        assert_eq!(a.token(5).unwrap().surface, "[from]");
        assert!(a.token(5).unwrap().is_appended);
        // double append is rejected
        assert!(a.with_appended().is_err());
    }

    #[test]
    fn serialize_strips_appended_brackets() {
        // (Rome; [is] the capital of; Italy) over the Figure-style sentence
        let s = sentence(&["Rome", "the", "capital", "of", "Italy"])
            .with_appended()
            .map(Arc::new)
            .unwrap();
        let e = Extraction::new(vec![0], vec![1, 2, 3, 5], vec![4], 0.0, s).unwrap();
        assert_eq!(serialize_extraction(&e), "Rome is the capital of Italy");
        assert_eq!(e.display_slot(&e.relation), "[is] the capital of");
    }

    #[test]
    fn serialize_omits_empty_object() {
        let s = sentence(&["Talks", "resumed"]);
        let e = Extraction::new(vec![0], vec![1], vec![], 0.0, s).unwrap();
        assert_eq!(serialize_extraction(&e), "Talks resumed");
    }

    #[test]
    fn serialize_simple_triple() {
        let s = sentence(&["I", "ate", "an", "apple"]);
        let e = Extraction::new(vec![0], vec![1], vec![2, 3], 0.0, s).unwrap();
        assert_eq!(serialize_extraction(&e), "I ate an apple");
    }

    #[test]
    fn normalize_folds_case_and_whitespace() {
        let s1 = sentence(&["I", "ate", "an", "apple"]);
        let s2 = sentence(&["i", "Ate", "an", "apple"]);
        let e1 = Extraction::new(vec![0], vec![1], vec![2, 3], 0.0, s1).unwrap();
        let e2 = Extraction::new(vec![0], vec![1], vec![2, 3], -0.5, s2).unwrap();
        assert_eq!(normalize_extraction(&e1), normalize_extraction(&e2));
    }

    #[test]
    fn normalize_distinguishes_objects() {
        let s1 = sentence(&["I", "ate", "an", "apple"]);
        let s2 = sentence(&["I", "ate", "an", "orange"]);
        let e1 = Extraction::new(vec![0], vec![1], vec![2, 3], 0.0, s1).unwrap();
        let e2 = Extraction::new(vec![0], vec![1], vec![2, 3], 0.0, s2).unwrap();
        assert_ne!(normalize_extraction(&e1), normalize_extraction(&e2));
    }

    #[test]
    fn extraction_rejects_overlapping_slots() {
        let s = sentence(&["a", "b", "c"]);
        assert!(Extraction::new(vec![0], vec![0, 1], vec![2], 0.0, s).is_err());
    }

    #[test]
    fn extraction_rejects_out_of_range() {
        let s = sentence(&["a", "b"]);
        assert!(Extraction::new(vec![0], vec![5], vec![], 0.0, s).is_err());
    }

    #[test]
    fn extraction_rejects_unsorted_indices() {
        let s = sentence(&["a", "b", "c"]);
        assert!(Extraction::new(vec![], vec![2, 1], vec![], 0.0, s).is_err());
    }

    #[test]
    fn prob_grid_checks_normalization() {
        let ok = LabelGrid::<TupleLabel>::from_probs(1, 1, vec![0.25; 4]);
        assert!(ok.is_ok());
        let bad = LabelGrid::<TupleLabel>::from_probs(1, 1, vec![0.3; 4]);
        assert!(bad.is_err());
    }

    #[test]
    fn prob_grid_argmax_matches_hard() {
        let g = LabelGrid::<TupleLabel>::from_probs(1, 2, {
            let mut v = vec![0.7, 0.1, 0.1, 0.1];
            v.extend([0.0, 0.0, 0.05, 0.95]);
            v
        })
        .unwrap();
        assert_eq!(g.hard(0, 0), TupleLabel::Subject);
        assert_eq!(g.hard(0, 1), TupleLabel::None);
        assert!((g.prob(0, 0, 0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn coordination_requires_two_conjuncts() {
        assert!(CoordinationStructure::new(0, 1, vec![Span::new(0, 1)]).is_err());
        let ok =
            CoordinationStructure::new(0, 1, vec![Span::new(0, 1), Span::new(2, 3)]).unwrap();
        assert_eq!(ok.full_span(), Span::new(0, 3));
    }
}
