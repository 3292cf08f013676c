//! Wire57-C scoring: candidate filtering by per-argument overlap, greedy
//! one-to-one matching on pairwise token F1, token-level aggregation.
//!
//! A system extraction is a candidate for a gold one only if it shares at
//! least one word with every non-empty gold argument. Matched pairs
//! contribute their shared-token counts; precision divides by the token
//! count of *all* system extractions and recall by that of all gold
//! extractions, so overlong or unmatched extractions are penalized.

use super::{common_tokens, MicroTotals, TextTuple};

fn shared_tokens(g: &TextTuple, e: &TextTuple) -> usize {
    g.slots()
        .iter()
        .zip(e.slots().iter())
        .map(|(gs, es)| common_tokens(gs, es))
        .sum()
}

fn is_candidate(g: &TextTuple, e: &TextTuple) -> bool {
    g.slots()
        .iter()
        .zip(e.slots().iter())
        .all(|(gs, es)| gs.is_empty() || common_tokens(gs, es) >= 1)
}

fn pair_f1(g: &TextTuple, e: &TextTuple) -> f64 {
    let shared = shared_tokens(g, e) as f64;
    if shared == 0.0 || g.token_count() == 0 || e.token_count() == 0 {
        return 0.0;
    }
    let p = shared / e.token_count() as f64;
    let r = shared / g.token_count() as f64;
    2.0 * p * r / (p + r)
}

pub(crate) fn sentence_totals(gold: &[TextTuple], system: &[TextTuple]) -> MicroTotals {
    let matched = super::oie16::greedy_match(gold, system, |g, e| {
        if is_candidate(g, e) {
            pair_f1(g, e)
        } else {
            0.0
        }
    });
    let matched_tokens: usize = matched
        .iter()
        .map(|&(gi, ei)| shared_tokens(&gold[gi], &system[ei]))
        .sum();
    MicroTotals {
        prec_num: matched_tokens as f64,
        prec_den: system.iter().map(|t| t.token_count()).sum::<usize>() as f64,
        rec_num: matched_tokens as f64,
        rec_den: gold.iter().map(|t| t.token_count()).sum::<usize>() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::super::assignment::brute_force_best;
    use super::super::{score, Corpus, ScorerKind, TextTuple};
    use super::*;

    fn corpus(system: Vec<TextTuple>, gold: Vec<TextTuple>) -> Corpus {
        Corpus::build(
            system.into_iter().map(|t| ("1".to_string(), t)).collect(),
            gold.into_iter().map(|t| ("1".to_string(), t)).collect(),
        )
        .0
    }

    #[test]
    fn missing_object_words_disqualify_candidates() {
        let c = corpus(
            vec![TextTuple::new("I", "ate", "nothing at all", 0.0)],
            vec![TextTuple::new("I", "ate", "an apple", 0.0)],
        );
        let r = score(&c, ScorerKind::Wire57C);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn overlong_extraction_pays_in_precision() {
        let c = corpus(
            vec![TextTuple::new(
                "I",
                "ate",
                "an apple with great delight yesterday evening",
                0.0,
            )],
            vec![TextTuple::new("I", "ate", "an apple", 0.0)],
        );
        let r = score(&c, ScorerKind::Wire57C);
        assert!((r.recall - 100.0).abs() < 1e-9);
        assert!(r.precision < 50.0);
    }

    #[test]
    fn greedy_agrees_with_brute_force_on_hand_built_instance() {
        // two golds, two systems, distinct best pairings
        let gold = vec![
            TextTuple::new("Obama", "gained", "popularity", 0.0),
            TextTuple::new("Oprah", "endorsed", "him", 0.0),
        ];
        let system = vec![
            TextTuple::new("Oprah", "endorsed", "him", 0.0),
            TextTuple::new("Obama", "gained", "popularity quickly", 0.0),
        ];
        let f1s: Vec<Vec<f64>> = gold
            .iter()
            .map(|g| {
                system
                    .iter()
                    .map(|e| if is_candidate(g, e) { pair_f1(g, e) } else { 0.0 })
                    .collect()
            })
            .collect();
        let matched = super::super::oie16::greedy_match(&gold, &system, |g, e| {
            if is_candidate(g, e) {
                pair_f1(g, e)
            } else {
                0.0
            }
        });
        let greedy_total: f64 = matched.iter().map(|&(gi, ei)| f1s[gi][ei]).sum();
        assert!((greedy_total - brute_force_best(&f1s)).abs() < 1e-9);
        assert_eq!(matched.len(), 2);
    }
}
