//! Tokenization, part-of-speech tagging, and head-verb detection.
//!
//! The tagger is pluggable: the built-in [`LexiconTagger`] combines a
//! shipped lexicon with suffix and capitalization rules, and
//! [`GoldTagger`] passes through tags supplied in input files. Both are
//! deterministic and total over any token sequence.

use std::collections::HashMap;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use crate::types::{Sentence, Token};
use crate::{Error, Result};

/// Coarse part-of-speech tags. The coverage constraints only consult
/// membership in {NOUN, VERB, ADJ, ADV}, so nothing finer is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Adv,
    Other,
}

impl PosTag {
    pub fn symbol(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Other => "OTHER",
        }
    }

    pub fn parse(s: &str) -> Option<PosTag> {
        match s {
            "NOUN" => Some(PosTag::Noun),
            "VERB" => Some(PosTag::Verb),
            "ADJ" => Some(PosTag::Adj),
            "ADV" => Some(PosTag::Adv),
            "OTHER" => Some(PosTag::Other),
            _ => None,
        }
    }

    /// True for the tags whose tokens the POS-coverage constraint cares
    /// about.
    pub fn is_important(self) -> bool {
        matches!(self, PosTag::Noun | PosTag::Verb | PosTag::Adj | PosTag::Adv)
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Whitespace + punctuation tokenization. Punctuation marks become their
/// own tokens; internal hyphens and apostrophes are kept, so
/// `"City-based"` stays one token.
pub fn tokenize(raw: &str) -> Result<Sentence> {
    if raw.trim().is_empty() {
        return Err(Error::validation("cannot tokenize empty input"));
    }
    let mut surfaces = Vec::new();
    for chunk in raw.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        if chars.iter().all(|c| !c.is_alphanumeric()) {
            // pure punctuation: one token per character
            surfaces.extend(chars.iter().map(|c| c.to_string()));
            continue;
        }
        let mut start = 0;
        while start < chars.len() && !chars[start].is_alphanumeric() {
            surfaces.push(chars[start].to_string());
            start += 1;
        }
        let mut end = chars.len();
        let mut trailing = Vec::new();
        while end > start && !chars[end - 1].is_alphanumeric() {
            trailing.push(chars[end - 1].to_string());
            end -= 1;
        }
        surfaces.push(chars[start..end].iter().collect());
        surfaces.extend(trailing.into_iter().rev());
    }
    Sentence::new(surfaces, raw.to_string())
}

/// Extend a sentence with the `[is]`, `[of]`, `[from]` tokens.
pub fn append_special(s: &Sentence) -> Result<Sentence> {
    s.with_appended()
}

/// A part-of-speech tagger over real tokens. Implementations must be
/// total: every token receives exactly one tag.
pub trait Tagger: Send + Sync {
    fn tag_tokens(&self, tokens: &[Token]) -> Vec<PosTag>;
}

/// Tag a sentence: one tag per real token from the tagger, appended
/// tokens always tagged OTHER.
pub fn tag(s: &Sentence, tagger: &dyn Tagger) -> Vec<PosTag> {
    let real: Vec<Token> = s
        .tokens()
        .iter()
        .filter(|t| !t.is_appended)
        .cloned()
        .collect();
    let mut tags = tagger.tag_tokens(&real);
    tags.resize(real.len(), PosTag::Other);
    for t in s.tokens() {
        if t.is_appended {
            tags.push(PosTag::Other);
        }
    }
    tags
}

const SUFFIX_RULES: &[(&str, PosTag)] = &[
    ("ly", PosTag::Adv),
    ("ing", PosTag::Verb),
    ("ed", PosTag::Verb),
    ("tion", PosTag::Noun),
    ("sion", PosTag::Noun),
    ("ment", PosTag::Noun),
    ("ness", PosTag::Noun),
    ("ity", PosTag::Noun),
    ("ency", PosTag::Noun),
    ("ancy", PosTag::Noun),
    ("ship", PosTag::Noun),
    ("hood", PosTag::Noun),
    ("ism", PosTag::Noun),
    ("ous", PosTag::Adj),
    ("ful", PosTag::Adj),
    ("ive", PosTag::Adj),
    ("able", PosTag::Adj),
    ("ible", PosTag::Adj),
    ("ish", PosTag::Adj),
    ("less", PosTag::Adj),
    ("al", PosTag::Adj),
    ("ic", PosTag::Adj),
];

/// The shipped rule tagger: lexicon lookup first, then suffix rules, then
/// capitalization, defaulting to NOUN for unknown open-class words.
pub struct LexiconTagger {
    lexicon: HashMap<String, PosTag>,
}

impl LexiconTagger {
    /// Tagger backed by the built-in lexicon.
    pub fn shipped() -> Self {
        Self::parse_lexicon(include_str!("../data/lexicon.tsv"), "<builtin lexicon>")
            .expect("builtin lexicon parses")
    }

    /// Load a lexicon file: `token<TAB>tag` per line, `#` comments.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_lexicon(&text, &path.display().to_string())
    }

    fn parse_lexicon(text: &str, file: &str) -> Result<Self> {
        let mut lexicon = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let word = parts.next().unwrap_or("");
            let tag = parts.next().and_then(PosTag::parse);
            match (word.is_empty(), tag) {
                (false, Some(tag)) => {
                    lexicon.insert(word.to_lowercase(), tag);
                }
                _ => {
                    return Err(Error::Parse {
                        file: file.to_string(),
                        line: lineno + 1,
                        msg: format!("expected token<TAB>tag, got {line:?}"),
                    })
                }
            }
        }
        Ok(LexiconTagger { lexicon })
    }

    fn tag_word(&self, surface: &str) -> PosTag {
        if surface.chars().all(|c| !c.is_alphanumeric()) {
            return PosTag::Other;
        }
        let lower = surface.to_lowercase();
        if let Some(&tag) = self.lexicon.get(&lower) {
            return tag;
        }
        if surface.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            return PosTag::Noun;
        }
        for (suffix, tag) in SUFFIX_RULES {
            if lower.len() > suffix.len() + 2 && lower.ends_with(suffix) {
                return *tag;
            }
        }
        PosTag::Noun
    }
}

impl Tagger for LexiconTagger {
    fn tag_tokens(&self, tokens: &[Token]) -> Vec<PosTag> {
        tokens.iter().map(|t| self.tag_word(&t.surface)).collect()
    }
}

/// Passthrough tagger reproducing tags given in an input file for one
/// sentence. Extra tokens fall back to OTHER.
pub struct GoldTagger {
    tags: Vec<PosTag>,
}

impl GoldTagger {
    pub fn new(tags: Vec<PosTag>) -> Self {
        GoldTagger { tags }
    }
}

impl Tagger for GoldTagger {
    fn tag_tokens(&self, tokens: &[Token]) -> Vec<PosTag> {
        (0..tokens.len())
            .map(|i| self.tags.get(i).copied().unwrap_or(PosTag::Other))
            .collect()
    }
}

/// The shipped light-verb list; verbs on it never count as head verbs.
#[derive(Debug, Clone)]
pub struct LightVerbs {
    set: HashSet<String>,
}

impl LightVerbs {
    pub fn shipped() -> Self {
        Self::parse(include_str!("../data/light_verbs.txt"))
    }

    /// Load from a file: one lowercase verb per line, `#` comments.
    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    fn parse(text: &str) -> Self {
        let set = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.to_lowercase())
            .collect();
        LightVerbs { set }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.set.contains(&word.to_lowercase())
    }
}

impl Default for LightVerbs {
    fn default() -> Self {
        Self::shipped()
    }
}

/// Per-token constraint masks: `important` marks nouns, verbs,
/// adjectives and adverbs; `head_verb` marks verbs that are not light
/// verbs. Appended tokens never set either bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMasks {
    pub important: Vec<bool>,
    pub head_verb: Vec<bool>,
}

impl TokenMasks {
    pub fn len(&self) -> usize {
        self.important.len()
    }

    pub fn is_empty(&self) -> bool {
        self.important.is_empty()
    }

    pub fn head_verb_count(&self) -> usize {
        self.head_verb.iter().filter(|&&b| b).count()
    }
}

/// Compute the constraint masks for a tagged sentence.
pub fn token_masks(s: &Sentence, tags: &[PosTag], light: &LightVerbs) -> Result<TokenMasks> {
    if tags.len() != s.len() {
        return Err(Error::shape(format!(
            "{} tags for {} tokens",
            tags.len(),
            s.len()
        )));
    }
    let mut important = vec![false; s.len()];
    let mut head_verb = vec![false; s.len()];
    for (i, token) in s.tokens().iter().enumerate() {
        if token.is_appended {
            continue;
        }
        important[i] = tags[i].is_important();
        head_verb[i] = tags[i] == PosTag::Verb && !light.contains(&token.surface);
    }
    Ok(TokenMasks {
        important,
        head_verb,
    })
}
