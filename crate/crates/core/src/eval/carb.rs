//! CaRB and CaRB(1-1) scoring.
//!
//! Pair similarity is argument-wise: shared tokens are counted per slot
//! and divided by the system-side token count (precision similarity) or
//! the gold-side count (recall similarity). A pair is matchable only if
//! the relations share at least one token.
//!
//! CaRB maps one-to-one for precision (exact maximum-weight assignment on
//! precision similarities) and many-to-one for recall (each gold takes
//! its best system extraction independently). CaRB(1-1) instead computes
//! a single maximum-weight one-to-one assignment on recall similarities
//! and reads both precision and recall off the matched pairs.

use super::assignment::max_weight_assignment;
use super::{common_tokens, MicroTotals, TextTuple};

/// Directional similarities for every (gold, system) pair of one
/// sentence.
#[derive(Debug, Clone)]
pub struct MatchTable {
    /// `precision_sim[g][e]`: shared tokens / system token count.
    pub precision_sim: Vec<Vec<f64>>,
    /// `recall_sim[g][e]`: shared tokens / gold token count.
    pub recall_sim: Vec<Vec<f64>>,
}

impl MatchTable {
    pub fn compute(gold: &[TextTuple], system: &[TextTuple]) -> MatchTable {
        let mut precision_sim = vec![vec![0.0; system.len()]; gold.len()];
        let mut recall_sim = vec![vec![0.0; system.len()]; gold.len()];
        for (gi, g) in gold.iter().enumerate() {
            for (ei, e) in system.iter().enumerate() {
                if common_tokens(&g.relation, &e.relation) == 0 {
                    continue;
                }
                let shared: usize = g
                    .slots()
                    .iter()
                    .zip(e.slots().iter())
                    .map(|(gs, es)| common_tokens(gs, es))
                    .sum();
                if e.token_count() > 0 {
                    precision_sim[gi][ei] = shared as f64 / e.token_count() as f64;
                }
                if g.token_count() > 0 {
                    recall_sim[gi][ei] = shared as f64 / g.token_count() as f64;
                }
            }
        }
        MatchTable {
            precision_sim,
            recall_sim,
        }
    }
}

/// Per-sentence micro totals for CaRB (`one_to_one_recall = false`) or
/// CaRB(1-1) (`true`).
pub(crate) fn sentence_totals(
    gold: &[TextTuple],
    system: &[TextTuple],
    one_to_one_recall: bool,
) -> MicroTotals {
    let mut t = MicroTotals {
        prec_den: system.len() as f64,
        rec_den: gold.len() as f64,
        ..MicroTotals::default()
    };
    if gold.is_empty() || system.is_empty() {
        return t;
    }
    let table = MatchTable::compute(gold, system);
    if one_to_one_recall {
        // one assignment, maximizing total recall, feeds both sides
        let (gold_to_sys, _) = max_weight_assignment(&table.recall_sim);
        for (gi, ei) in gold_to_sys.iter().enumerate() {
            if let Some(ei) = ei {
                t.prec_num += table.precision_sim[gi][*ei];
                t.rec_num += table.recall_sim[gi][*ei];
            }
        }
    } else {
        let (_, best_precision) = max_weight_assignment(&table.precision_sim);
        t.prec_num += best_precision;
        for gi in 0..gold.len() {
            let best = table.recall_sim[gi]
                .iter()
                .cloned()
                .fold(0.0f64, f64::max);
            t.rec_num += best;
        }
    }
    t
}
