//! End-to-end extraction: coordination-based sentence splitting, grid
//! labeling over the simple sentences, dedup/merge, confidence rescoring,
//! and gold-to-grid alignment for training data.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use crate::decode::{grid_to_coordinations, grid_to_extractions, DecodeConfig};
use crate::lingo::tokenize;
use crate::types::{
    normalize_extraction, CoordLabel, CoordinationStructure, Extraction, LabelAlphabet,
    LabelGrid, Sentence, Span, TupleLabel,
};
use crate::{Error, Result};

/// Anything that can label a sentence with a grid: the trained network,
/// or a fixture oracle in tests.
pub trait GridLabeler<A: LabelAlphabet>: Send + Sync {
    fn label_grid(&self, sentence: &Sentence) -> Result<LabelGrid<A>>;
}

/// Fixture labeler returning pre-built grids keyed by the sentence's
/// detokenized text.
pub struct FixtureLabeler<A: LabelAlphabet> {
    grids: HashMap<String, LabelGrid<A>>,
}

impl<A: LabelAlphabet> FixtureLabeler<A> {
    pub fn new() -> Self {
        FixtureLabeler {
            grids: HashMap::new(),
        }
    }

    pub fn insert(&mut self, sentence_text: &str, grid: LabelGrid<A>) {
        self.grids.insert(sentence_text.to_string(), grid);
    }
}

impl<A: LabelAlphabet> Default for FixtureLabeler<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A: LabelAlphabet> GridLabeler<A> for FixtureLabeler<A> {
    fn label_grid(&self, sentence: &Sentence) -> Result<LabelGrid<A>> {
        self.grids
            .get(&sentence.detokenized())
            .cloned()
            .ok_or_else(|| {
                Error::validation(format!(
                    "no fixture grid for sentence {:?}",
                    sentence.detokenized()
                ))
            })
    }
}

/// Re-estimates an extraction's confidence against the original
/// (pre-split) sentence. The default keeps the decoder's confidence; a
/// trained estimator can be plugged in here.
pub trait Rescorer: Send + Sync {
    fn rescore(&self, original: &Sentence, extraction: &Extraction) -> f64;
}

/// The default rescorer: identity on the decode confidence.
pub struct IdentityRescorer;

impl Rescorer for IdentityRescorer {
    fn rescore(&self, _original: &Sentence, extraction: &Extraction) -> f64 {
        extraction.confidence
    }
}

/// One conjunct substitution on the path from the root to a leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    pub level: usize,
    pub coordinator: usize,
    pub chosen: Span,
}

/// A simple sentence derived from the root by conjunct substitutions.
#[derive(Debug, Clone)]
pub struct SplitLeaf {
    pub sentence: Arc<Sentence>,
    /// Root token indices retained in this leaf, ascending.
    pub kept: Vec<usize>,
    pub substitutions: Vec<Substitution>,
}

/// The full split of one sentence.
#[derive(Debug, Clone)]
pub struct SplitTree {
    pub root: Arc<Sentence>,
    pub leaves: Vec<SplitLeaf>,
}

impl SplitTree {
    pub fn sentences(&self) -> Vec<Arc<Sentence>> {
        self.leaves.iter().map(|l| Arc::clone(&l.sentence)).collect()
    }
}

/// Split a sentence on its coordination structures, outermost level
/// first. Each structure is replaced by one conjunct per variant; a
/// structure immediately preceded by the token "between" is left whole
/// (combinatory coordination heuristic). Leaves are deduplicated.
///
/// Same-level structures must not overlap.
pub fn split_sentence(
    root: &Arc<Sentence>,
    structures: &[CoordinationStructure],
) -> Result<SplitTree> {
    let mut by_level: BTreeMap<usize, Vec<&CoordinationStructure>> = BTreeMap::new();
    for s in structures {
        if s.full_span().end > root.len() {
            return Err(Error::validation(
                "coordination structure exceeds sentence bounds",
            ));
        }
        by_level.entry(s.level).or_default().push(s);
    }
    for level in by_level.values_mut() {
        level.sort_by_key(|s| s.full_span().start);
        for pair in level.windows(2) {
            if pair[1].full_span().start < pair[0].full_span().end {
                return Err(Error::validation(format!(
                    "overlapping coordination structures at level {}",
                    pair[0].level
                )));
            }
        }
    }

    struct State {
        retained: Vec<bool>,
        substitutions: Vec<Substitution>,
    }
    let mut states = vec![State {
        retained: vec![true; root.len()],
        substitutions: Vec::new(),
    }];
    for level in by_level.values() {
        for structure in level {
            let span = structure.full_span();
            let mut next = Vec::new();
            for state in states {
                let alive = structure
                    .conjuncts
                    .iter()
                    .flat_map(|c| c.indices())
                    .chain([structure.coordinator])
                    .all(|i| state.retained[i]);
                if !alive || preceded_by_between(root, &state.retained, span) {
                    next.push(state);
                    continue;
                }
                for conjunct in &structure.conjuncts {
                    let mut retained = state.retained.clone();
                    for i in span.indices() {
                        retained[i] = conjunct.contains(i);
                    }
                    let mut substitutions = state.substitutions.clone();
                    substitutions.push(Substitution {
                        level: structure.level,
                        coordinator: structure.coordinator,
                        chosen: *conjunct,
                    });
                    next.push(State {
                        retained,
                        substitutions,
                    });
                }
            }
            states = next;
        }
    }

    let mut seen = HashSet::new();
    let mut leaves = Vec::new();
    for state in states {
        let kept: Vec<usize> = (0..root.len()).filter(|&i| state.retained[i]).collect();
        let surfaces: Vec<String> = kept
            .iter()
            .map(|&i| root.token(i).unwrap().surface.clone())
            .collect();
        if surfaces.is_empty() {
            continue;
        }
        if !seen.insert(surfaces.join("\u{1}")) {
            continue;
        }
        let raw = surfaces.join(" ");
        leaves.push(SplitLeaf {
            sentence: Arc::new(Sentence::new(surfaces, raw)?),
            kept,
            substitutions: state.substitutions,
        });
    }
    Ok(SplitTree {
        root: Arc::clone(root),
        leaves,
    })
}

fn preceded_by_between(root: &Sentence, retained: &[bool], span: Span) -> bool {
    (0..span.start)
        .rev()
        .find(|&i| retained[i])
        .and_then(|i| root.token(i))
        .is_some_and(|t| t.surface.eq_ignore_ascii_case("between"))
}

/// Run the full pipeline on raw text: split on predicted coordinations
/// (when a coordination labeler is given), extract over each simple
/// sentence, rescore, deduplicate, and sort by descending confidence.
pub fn extract(
    raw: &str,
    extractor: &dyn GridLabeler<TupleLabel>,
    coordination: Option<&dyn GridLabeler<CoordLabel>>,
    cfg: &DecodeConfig,
    rescorer: &dyn Rescorer,
) -> Result<Vec<Extraction>> {
    let root = Arc::new(tokenize(raw)?);
    let leaves = match coordination {
        Some(coord) => {
            let grid = coord.label_grid(&root)?;
            let structures = grid_to_coordinations(&grid, &root)?;
            split_sentence(&root, &structures)?.sentences()
        }
        None => vec![Arc::clone(&root)],
    };
    let mut merged: BTreeMap<crate::types::DedupKey, Extraction> = BTreeMap::new();
    for leaf in leaves {
        let appended = Arc::new(leaf.with_appended()?);
        let grid = extractor.label_grid(&appended)?;
        for mut e in grid_to_extractions(&grid, &appended, cfg)? {
            e.confidence = rescorer.rescore(&root, &e);
            let key = normalize_extraction(&e);
            match merged.get(&key) {
                Some(existing) if existing.confidence >= e.confidence => {}
                _ => {
                    merged.insert(key, e);
                }
            }
        }
    }
    let mut out: Vec<(crate::types::DedupKey, Extraction)> = merged.into_iter().collect();
    out.sort_by(|a, b| {
        b.1.confidence
            .partial_cmp(&a.1.confidence)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(out.into_iter().map(|(_, e)| e).collect())
}

/// Result of aligning one gold triple onto a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlignOutcome {
    /// A full grid row over the sentence's tokens (appended included).
    Row(Vec<TupleLabel>),
    /// The triple cannot be aligned; the reason says why.
    Skipped(String),
}

impl AlignOutcome {
    pub fn row(&self) -> Option<&Vec<TupleLabel>> {
        match self {
            AlignOutcome::Row(r) => Some(r),
            AlignOutcome::Skipped(_) => None,
        }
    }
}

/// Align a gold `(subject; relation; object)` text triple onto a
/// sentence as one grid row.
///
/// Each argument is matched as an exact token sequence. The words "is",
/// "of" and "from" may fall back to the appended tokens when no surface
/// match exists. If one argument matches in several places, the match
/// closest to the other (anchored) arguments wins, earliest on ties; a
/// second still-ambiguous argument skips the triple, as does an argument
/// with no match at all.
pub fn align_gold(
    sentence: &Sentence,
    subject: &str,
    relation: &str,
    object: &str,
) -> AlignOutcome {
    let words = |text: &str| -> Vec<String> {
        match tokenize(text) {
            Ok(s) => s.tokens().iter().map(|t| t.surface.clone()).collect(),
            Err(_) => Vec::new(),
        }
    };
    let relation_words = words(relation);
    if relation_words.is_empty() {
        return AlignOutcome::Skipped("empty relation".to_string());
    }
    let slots = [
        (TupleLabel::Subject, "subject", words(subject)),
        (TupleLabel::Relation, "relation", relation_words),
        (TupleLabel::Object, "object", words(object)),
    ];

    let mut anchored: Vec<Option<Vec<usize>>> = vec![None, None, None];
    let mut candidate_sets: Vec<Vec<Vec<usize>>> = Vec::new();
    for (_, name, w) in &slots {
        if w.is_empty() {
            candidate_sets.push(vec![Vec::new()]);
            continue;
        }
        let cands = argument_candidates(sentence, w);
        if cands.is_empty() {
            return AlignOutcome::Skipped(format!("no match for {name}: {:?}", w.join(" ")));
        }
        candidate_sets.push(cands);
    }

    // anchor unique arguments first
    let mut used = vec![false; sentence.len()];
    for slot in 0..3 {
        if candidate_sets[slot].len() == 1 {
            let c = candidate_sets[slot][0].clone();
            if c.iter().any(|&i| used[i]) {
                return AlignOutcome::Skipped("arguments overlap".to_string());
            }
            for &i in &c {
                used[i] = true;
            }
            anchored[slot] = Some(c);
        }
    }

    // resolve ambiguous arguments in slot order; only one may need the
    // distance rule
    let mut distance_used = false;
    for slot in 0..3 {
        if anchored[slot].is_some() {
            continue;
        }
        let name = slots[slot].1;
        let viable: Vec<&Vec<usize>> = candidate_sets[slot]
            .iter()
            .filter(|c| c.iter().all(|&i| !used[i]))
            .collect();
        let chosen: Vec<usize> = match viable.len() {
            0 => {
                return AlignOutcome::Skipped(format!(
                    "no non-overlapping match for {name}"
                ))
            }
            1 => viable[0].clone(),
            _ if distance_used => {
                return AlignOutcome::Skipped(
                    "multiple string matches for more than one argument".to_string(),
                )
            }
            _ => {
                distance_used = true;
                let anchors: Vec<&Vec<usize>> =
                    anchored.iter().flatten().filter(|a| !a.is_empty()).collect();
                viable
                    .into_iter()
                    .min_by(|a, b| {
                        let da = candidate_distance(a, &anchors);
                        let db = candidate_distance(b, &anchors);
                        da.cmp(&db).then_with(|| a.first().cmp(&b.first()))
                    })
                    .unwrap()
                    .clone()
            }
        };
        for &i in &chosen {
            used[i] = true;
        }
        anchored[slot] = Some(chosen);
    }

    let mut row = vec![TupleLabel::None; sentence.len()];
    for (slot, (label, _, _)) in slots.iter().enumerate() {
        for &i in anchored[slot].as_ref().unwrap() {
            row[i] = *label;
        }
    }
    AlignOutcome::Row(row)
}

/// Sum over anchors of the closest index gap to the candidate.
fn candidate_distance(candidate: &[usize], anchors: &[&Vec<usize>]) -> usize {
    anchors
        .iter()
        .map(|anchor| {
            candidate
                .iter()
                .flat_map(|&i| anchor.iter().map(move |&j| i.abs_diff(j)))
                .min()
                .unwrap_or(0)
        })
        .sum()
}

/// All placements of an argument's words in the sentence: contiguous
/// matches over real tokens, falling back to the appended tokens for a
/// leading "is" or trailing "of"/"from" when no surface match exists.
fn argument_candidates(sentence: &Sentence, words: &[String]) -> Vec<Vec<usize>> {
    let real: Vec<&str> = sentence
        .tokens()
        .iter()
        .filter(|t| !t.is_appended)
        .map(|t| t.surface.as_str())
        .collect();
    let mut candidates = contiguous_matches(&real, words);
    if !candidates.is_empty() {
        return candidates;
    }
    // appended-token fallback
    let appended_index = |word: &str| {
        sentence
            .tokens()
            .iter()
            .find(|t| t.is_appended && t.match_text() == word)
            .map(|t| t.index)
    };
    let lead = words.first().map(|w| w.as_str()) == Some("is");
    let trail = matches!(words.last().map(|w| w.as_str()), Some("of") | Some("from"));
    let variants: &[(bool, bool)] = &[(true, false), (false, true), (true, true)];
    for &(use_lead, use_trail) in variants {
        if (use_lead && !lead) || (use_trail && !trail) {
            continue;
        }
        let take = words.len() - usize::from(use_lead) - usize::from(use_trail);
        if use_lead && use_trail && words.len() < 2 {
            continue;
        }
        let middle = &words[usize::from(use_lead)..usize::from(use_lead) + take];
        let lead_idx = if use_lead { appended_index("is") } else { None };
        let trail_idx = if use_trail {
            appended_index(words.last().unwrap())
        } else {
            None
        };
        if (use_lead && lead_idx.is_none()) || (use_trail && trail_idx.is_none()) {
            continue;
        }
        let middles: Vec<Vec<usize>> = if middle.is_empty() {
            vec![Vec::new()]
        } else {
            contiguous_matches(&real, middle)
        };
        for m in middles {
            let mut c = m;
            c.extend(lead_idx);
            c.extend(trail_idx);
            c.sort_unstable();
            if !candidates.contains(&c) {
                candidates.push(c);
            }
        }
    }
    candidates
}

fn contiguous_matches(real: &[&str], words: &[String]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if words.is_empty() || words.len() > real.len() {
        return out;
    }
    for start in 0..=real.len() - words.len() {
        if (0..words.len()).all(|k| real[start + k] == words[k]) {
            out.push((start..start + words.len()).collect());
        }
    }
    out
}

/// Assemble gold rows into a fixed-depth training grid: rows sorted by
/// first relation token (ties by first subject token), truncated to
/// `max_levels`, padded with all-N rows.
pub fn gold_grid(
    width: usize,
    mut rows: Vec<Vec<TupleLabel>>,
    max_levels: usize,
) -> Result<LabelGrid<TupleLabel>> {
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::shape("gold row width mismatch".to_string()));
    }
    let first = |row: &[TupleLabel], label: TupleLabel| {
        row.iter().position(|&l| l == label).unwrap_or(usize::MAX)
    };
    rows.sort_by_key(|r| (first(r, TupleLabel::Relation), first(r, TupleLabel::Subject)));
    rows.truncate(max_levels);
    while rows.len() < max_levels {
        rows.push(vec![TupleLabel::None; width]);
    }
    LabelGrid::from_hard(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::DecodeConfig;
    use crate::types::CoordLabel as C;
    use crate::types::TupleLabel as L;

    fn arc(raw: &str) -> Arc<Sentence> {
        Arc::new(tokenize(raw).unwrap())
    }

    const TABLE_SENTENCE: &str = "Other signs of lens subluxation include mild conjunctival \
         redness , vitreous humour degeneration , and an increase or decrease of anterior \
         chamber depth .";

    fn table_structures() -> Vec<CoordinationStructure> {
        vec![
            CoordinationStructure::new(
                0,
                14,
                vec![Span::new(6, 9), Span::new(10, 13), Span::new(15, 23)],
            )
            .unwrap(),
            CoordinationStructure::new(1, 17, vec![Span::new(16, 17), Span::new(18, 19)])
                .unwrap(),
        ]
    }

    #[test]
    fn hierarchical_split_gives_four_leaves() {
        let root = arc(TABLE_SENTENCE);
        let tree = split_sentence(&root, &table_structures()).unwrap();
        let texts: Vec<String> = tree
            .leaves
            .iter()
            .map(|l| l.sentence.detokenized())
            .collect();
        assert_eq!(texts.len(), 4);
        assert!(texts.contains(
            &"Other signs of lens subluxation include mild conjunctival redness .".to_string()
        ));
        assert!(texts.contains(
            &"Other signs of lens subluxation include vitreous humour degeneration ."
                .to_string()
        ));
        assert!(texts.contains(
            &"Other signs of lens subluxation include an increase of anterior chamber depth ."
                .to_string()
        ));
        assert!(texts.contains(
            &"Other signs of lens subluxation include an decrease of anterior chamber depth ."
                .to_string()
        ));
    }

    #[test]
    fn leaves_are_subsequences_of_the_root() {
        let root = arc(TABLE_SENTENCE);
        let tree = split_sentence(&root, &table_structures()).unwrap();
        for leaf in &tree.leaves {
            assert!(leaf.kept.windows(2).all(|w| w[0] < w[1]));
            for (pos, &root_idx) in leaf.kept.iter().enumerate() {
                assert_eq!(
                    leaf.sentence.token(pos).unwrap().surface,
                    root.token(root_idx).unwrap().surface
                );
            }
        }
    }

    #[test]
    fn no_structures_is_identity() {
        let root = arc("Talks resumed .");
        let tree = split_sentence(&root, &[]).unwrap();
        assert_eq!(tree.leaves.len(), 1);
        assert_eq!(tree.leaves[0].sentence.detokenized(), "Talks resumed .");
        assert!(tree.leaves[0].substitutions.is_empty());
    }

    #[test]
    fn between_heuristic_blocks_splitting() {
        let root = arc("Talks resumed between USA and China");
        let s =
            CoordinationStructure::new(0, 4, vec![Span::new(3, 4), Span::new(5, 6)]).unwrap();
        let tree = split_sentence(&root, &[s]).unwrap();
        assert_eq!(tree.leaves.len(), 1);
        assert_eq!(
            tree.leaves[0].sentence.detokenized(),
            "Talks resumed between USA and China"
        );
    }

    #[test]
    fn independent_structures_multiply() {
        // "a or b saw c or d" -> 4 leaves
        let root = arc("a or b saw c or d");
        let s1 = CoordinationStructure::new(0, 1, vec![Span::new(0, 1), Span::new(2, 3)])
            .unwrap();
        let s2 = CoordinationStructure::new(0, 5, vec![Span::new(4, 5), Span::new(6, 7)])
            .unwrap();
        let tree = split_sentence(&root, &[s1, s2]).unwrap();
        let texts: HashSet<String> = tree
            .leaves
            .iter()
            .map(|l| l.sentence.detokenized())
            .collect();
        assert_eq!(
            texts,
            HashSet::from([
                "a saw c".to_string(),
                "a saw d".to_string(),
                "b saw c".to_string(),
                "b saw d".to_string(),
            ])
        );
    }

    #[test]
    fn overlapping_same_level_structures_rejected() {
        let root = arc("a and b and c");
        let s1 = CoordinationStructure::new(0, 1, vec![Span::new(0, 1), Span::new(2, 3)])
            .unwrap();
        let s2 = CoordinationStructure::new(0, 3, vec![Span::new(2, 3), Span::new(4, 5)])
            .unwrap();
        assert!(split_sentence(&root, &[s1, s2]).is_err());
    }

    #[test]
    fn splitting_own_leaves_is_idempotent() {
        let root = arc("I ate apples and oranges .");
        let s = CoordinationStructure::new(0, 3, vec![Span::new(2, 3), Span::new(4, 5)])
            .unwrap();
        let tree = split_sentence(&root, &[s]).unwrap();
        assert_eq!(tree.leaves.len(), 2);
        for leaf in &tree.leaves {
            let again = split_sentence(&leaf.sentence, &[]).unwrap();
            assert_eq!(again.leaves.len(), 1);
            assert_eq!(
                again.leaves[0].sentence.detokenized(),
                leaf.sentence.detokenized()
            );
        }
    }

    fn tuple_fixture(sentences: &[(&str, Vec<Vec<L>>)]) -> FixtureLabeler<L> {
        let mut f = FixtureLabeler::new();
        for (text, rows) in sentences {
            f.insert(text, LabelGrid::from_hard(rows.clone()).unwrap());
        }
        f
    }

    fn simple_row(width: usize, s: &[usize], r: &[usize], o: &[usize]) -> Vec<L> {
        let mut row = vec![L::None; width];
        for &i in s {
            row[i] = L::Subject;
        }
        for &i in r {
            row[i] = L::Relation;
        }
        for &i in o {
            row[i] = L::Object;
        }
        row
    }

    #[test]
    fn pipeline_is_neutral_without_coordinations() {
        // simple declarative sentence; oracle grid
        let text = "Talks resumed .";
        let width = 3 + 3;
        let rows = vec![simple_row(width, &[0], &[1], &[])];
        let fixture = tuple_fixture(&[(text, rows)]);
        let plain = extract(text, &fixture, None, &DecodeConfig::default(), &IdentityRescorer)
            .unwrap();
        // coordination labeler marking nothing
        let mut coord = FixtureLabeler::<C>::new();
        coord.insert(text, LabelGrid::from_hard(vec![vec![C::None; 3]]).unwrap());
        let with_coord = extract(
            text,
            &fixture,
            Some(&coord),
            &DecodeConfig::default(),
            &IdentityRescorer,
        )
        .unwrap();
        assert_eq!(plain.len(), 1);
        assert_eq!(plain.len(), with_coord.len());
        assert_eq!(
            normalize_extraction(&plain[0]),
            normalize_extraction(&with_coord[0])
        );
    }

    #[test]
    fn duplicate_extractions_from_two_leaves_merge() {
        // "I ate apples and oranges ." splits into two leaves; both
        // yield the same (I; ate) tuple over different objects plus an
        // identical (I; ate; fruit)-style duplicate subject-relation pair
        let root_text = "I ate apples and oranges .";
        let mut coord = FixtureLabeler::<C>::new();
        coord.insert(
            root_text,
            LabelGrid::from_hard(vec![vec![
                C::None,
                C::None,
                C::Conjunct,
                C::Coordinator,
                C::Conjunct,
                C::None,
            ]])
            .unwrap(),
        );
        let leaf1 = "I ate apples .";
        let leaf2 = "I ate oranges .";
        let width = 4 + 3;
        let fixture = tuple_fixture(&[
            (leaf1, vec![simple_row(width, &[0], &[1], &[2])]),
            (leaf2, vec![simple_row(width, &[0], &[1], &[2])]),
        ]);
        let out = extract(
            root_text,
            &fixture,
            Some(&coord),
            &DecodeConfig::default(),
            &IdentityRescorer,
        )
        .unwrap();
        let triples: HashSet<String> = out
            .iter()
            .map(|e| crate::types::serialize_extraction(e))
            .collect();
        assert_eq!(
            triples,
            HashSet::from(["I ate apples".to_string(), "I ate oranges".to_string()])
        );
    }

    #[test]
    fn table_style_pipeline_emits_all_four_tuples() {
        let mut coord = FixtureLabeler::<C>::new();
        let root = arc(TABLE_SENTENCE);
        let mut level0 = vec![C::None; root.len()];
        for i in 6..9 {
            level0[i] = C::Conjunct;
        }
        for i in 10..13 {
            level0[i] = C::Conjunct;
        }
        for i in 15..23 {
            level0[i] = C::Conjunct;
        }
        level0[14] = C::Coordinator;
        let mut level1 = vec![C::None; root.len()];
        level1[16] = C::Conjunct;
        level1[17] = C::Coordinator;
        level1[18] = C::Conjunct;
        coord.insert(
            TABLE_SENTENCE,
            LabelGrid::from_hard(vec![level0, level1]).unwrap(),
        );

        let leaf_short = |tail: &str| {
            format!("Other signs of lens subluxation include {tail} .")
        };
        let mut fixture = FixtureLabeler::<L>::new();
        for (tail, obj_len) in [
            ("mild conjunctival redness", 3),
            ("vitreous humour degeneration", 3),
            ("an increase of anterior chamber depth", 6),
            ("an decrease of anterior chamber depth", 6),
        ] {
            let text = leaf_short(tail);
            let width = 6 + obj_len + 1 + 3;
            let rows = vec![simple_row(
                width,
                &[0, 1, 2, 3, 4],
                &[5],
                &(6..6 + obj_len).collect::<Vec<_>>(),
            )];
            fixture.insert(&text, LabelGrid::from_hard(rows).unwrap());
        }
        let out = extract(
            TABLE_SENTENCE,
            &fixture,
            Some(&coord),
            &DecodeConfig::default(),
            &IdentityRescorer,
        )
        .unwrap();
        assert_eq!(out.len(), 4);
        let triples: HashSet<(String, String, String)> = out
            .iter()
            .map(|e| {
                let k = normalize_extraction(e);
                (k.subject, k.relation, k.object)
            })
            .collect();
        for tail in [
            "mild conjunctival redness",
            "vitreous humour degeneration",
            "an increase of anterior chamber depth",
            "an decrease of anterior chamber depth",
        ] {
            assert!(triples.contains(&(
                "other signs of lens subluxation".to_string(),
                "include".to_string(),
                tail.to_string()
            )));
        }
    }

    #[test]
    fn align_unique_matches_directly() {
        let s = tokenize("Rome is the capital of Italy")
            .unwrap()
            .with_appended()
            .unwrap();
        let outcome = align_gold(&s, "Rome", "is the capital of", "Italy");
        let row = outcome.row().expect("aligned");
        assert_eq!(row[0], L::Subject);
        assert_eq!(&row[1..5], &[L::Relation; 4]);
        assert_eq!(row[5], L::Object);
        // appended columns unused
        assert_eq!(&row[6..], &[L::None; 3]);
    }

    #[test]
    fn align_uses_appended_tokens_when_words_are_absent() {
        let s = tokenize("Rome the capital of Italy")
            .unwrap()
            .with_appended()
            .unwrap();
        let outcome = align_gold(&s, "Rome", "is the capital of", "Italy");
        let row = outcome.row().expect("aligned");
        // [is] is the first appended token, at index 5
        assert_eq!(row[5], L::Relation);
        assert_eq!(&row[1..4], &[L::Relation; 3]);
    }

    #[test]
    fn align_resolves_one_ambiguous_argument_by_distance() {
        let s = tokenize("the dog chased the dog")
            .unwrap()
            .with_appended()
            .unwrap();
        let outcome = align_gold(&s, "the dog", "chased", "the dog");
        let row = outcome.row().expect("aligned");
        assert_eq!(&row[0..2], &[L::Subject; 2]);
        assert_eq!(row[2], L::Relation);
        assert_eq!(&row[3..5], &[L::Object; 2]);
    }

    #[test]
    fn align_skips_two_ambiguous_arguments() {
        let s = tokenize("the cat saw the cat near the cat")
            .unwrap()
            .with_appended()
            .unwrap();
        match align_gold(&s, "the cat", "saw", "the cat") {
            AlignOutcome::Skipped(reason) => {
                assert!(reason.contains("more than one argument"), "{reason}")
            }
            AlignOutcome::Row(_) => panic!("expected skip"),
        }
    }

    #[test]
    fn align_skips_unmatched_argument() {
        let s = tokenize("Talks resumed").unwrap().with_appended().unwrap();
        match align_gold(&s, "Negotiations", "resumed", "") {
            AlignOutcome::Skipped(reason) => assert!(reason.contains("subject")),
            AlignOutcome::Row(_) => panic!("expected skip"),
        }
    }

    #[test]
    fn align_round_trips_through_decode() {
        let s = Arc::new(
            tokenize("Obama gained popularity after Oprah endorsed him")
                .unwrap()
                .with_appended()
                .unwrap(),
        );
        for (subj, rel, obj) in [
            ("Obama", "gained", "popularity"),
            ("Oprah", "endorsed", "him"),
        ] {
            let row = match align_gold(&s, subj, rel, obj) {
                AlignOutcome::Row(r) => r,
                AlignOutcome::Skipped(why) => panic!("skipped: {why}"),
            };
            let grid = LabelGrid::from_hard(vec![row]).unwrap();
            let out = grid_to_extractions(&grid, &s, &DecodeConfig::default()).unwrap();
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].subject_text(), subj);
            assert_eq!(out[0].relation_text(), rel);
            assert_eq!(out[0].object_text(), obj);
        }
    }

    #[test]
    fn gold_grid_orders_rows_canonically() {
        let width = 6;
        let row_late = simple_row(width, &[3], &[4], &[5]);
        let row_early = simple_row(width, &[0], &[1], &[2]);
        let grid = gold_grid(width, vec![row_late.clone(), row_early.clone()], 3).unwrap();
        assert_eq!(grid.level_hard(0), &row_early[..]);
        assert_eq!(grid.level_hard(1), &row_late[..]);
        assert_eq!(grid.level_hard(2), &[L::None; 6]);
    }
}
