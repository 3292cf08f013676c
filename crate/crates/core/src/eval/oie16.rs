//! OIE16-C scoring: serialized-overlap similarity with greedy one-to-one
//! matching and binary credit.
//!
//! Each extraction is flattened to its word sequence; pair similarity is
//! the shared-word count between the two sequences. Pairs are matched
//! greedily in descending similarity (positive similarity required), and
//! precision/recall count matched extractions over totals. Because credit
//! is binary, a system extraction that shares a single word with a gold
//! one earns full credit — lenient by design.

use super::{common_tokens, MicroTotals, TextTuple};

fn tuple_key(t: &TextTuple) -> String {
    t.serialized().join(" ")
}

/// Greedy one-to-one matching by descending similarity. Ties break on the
/// tuples' serialized text so scores do not depend on input order.
/// Returns matched (gold, system) index pairs.
pub(crate) fn greedy_match(
    gold: &[TextTuple],
    system: &[TextTuple],
    similarity: impl Fn(&TextTuple, &TextTuple) -> f64,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (gi, g) in gold.iter().enumerate() {
        for (ei, e) in system.iter().enumerate() {
            let sim = similarity(g, e);
            if sim > 0.0 {
                pairs.push((sim, tuple_key(g), tuple_key(e), gi, ei));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    let mut gold_used = vec![false; gold.len()];
    let mut sys_used = vec![false; system.len()];
    let mut matched = Vec::new();
    for (_, _, _, gi, ei) in pairs {
        if !gold_used[gi] && !sys_used[ei] {
            gold_used[gi] = true;
            sys_used[ei] = true;
            matched.push((gi, ei));
        }
    }
    matched
}

pub(crate) fn sentence_totals(gold: &[TextTuple], system: &[TextTuple]) -> MicroTotals {
    let matched = greedy_match(gold, system, |g, e| {
        common_tokens(&g.serialized(), &e.serialized()) as f64
    });
    MicroTotals {
        prec_num: matched.len() as f64,
        prec_den: system.len() as f64,
        rec_num: matched.len() as f64,
        rec_den: gold.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{score, Corpus, ScorerKind, TextTuple};

    fn corpus(system: Vec<TextTuple>, gold: Vec<TextTuple>) -> Corpus {
        Corpus::build(
            system.into_iter().map(|t| ("1".to_string(), t)).collect(),
            gold.into_iter().map(|t| ("1".to_string(), t)).collect(),
        )
        .0
    }

    #[test]
    fn single_shared_word_earns_full_credit() {
        let c = corpus(
            vec![TextTuple::new("the talks", "stalled", "here", 0.0)],
            vec![TextTuple::new("Talks", "resumed", "between USA", 0.0)],
        );
        let r = score(&c, ScorerKind::Oie16C);
        assert!((r.precision - 100.0).abs() < 1e-9);
        assert!((r.recall - 100.0).abs() < 1e-9);
        assert!((r.f1 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_vocabularies_score_zero() {
        let c = corpus(
            vec![TextTuple::new("x", "y", "z", 0.0)],
            vec![TextTuple::new("a", "b", "c", 0.0)],
        );
        let r = score(&c, ScorerKind::Oie16C);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn greedy_prefers_higher_overlap() {
        // one gold, two systems: the two-word overlap must win the match,
        // leaving the one-word system extraction unmatched
        let c = corpus(
            vec![
                TextTuple::new("Talks", "were", "fine", 0.0),
                TextTuple::new("Talks", "resumed", "quickly", 0.0),
            ],
            vec![TextTuple::new("Talks", "resumed", "between USA", 0.0)],
        );
        let r = score(&c, ScorerKind::Oie16C);
        assert!((r.precision - 50.0).abs() < 1e-9);
        assert!((r.recall - 100.0).abs() < 1e-9);
    }
}
