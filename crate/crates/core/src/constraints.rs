//! The four coverage penalties over probability grids, the combined
//! constrained loss with warmup, and discrete violation counting.
//!
//! Penalties are evaluated on the predicted label distributions, so they
//! are differentiable and act as extra supervision during training only;
//! nothing is enforced at inference. The discrete counts are the integer
//! analogs used for reporting.

use crate::lingo::TokenMasks;
use crate::types::{Extraction, LabelAlphabet, LabelGrid, TupleLabel};
use crate::{Error, Result};

const SUBJECT: usize = 0;
const RELATION: usize = 1;
const OBJECT: usize = 2;

/// Weights of the four penalties in the combined loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeights {
    pub posc: f64,
    pub hvc: f64,
    pub hve: f64,
    pub ec: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        PenaltyWeights {
            posc: 3.0,
            hvc: 3.0,
            hve: 3.0,
            ec: 3.0,
        }
    }
}

impl PenaltyWeights {
    pub fn zero() -> Self {
        PenaltyWeights {
            posc: 0.0,
            hvc: 0.0,
            hve: 0.0,
            ec: 0.0,
        }
    }

    pub fn uniform(lambda: f64) -> Self {
        PenaltyWeights {
            posc: lambda,
            hvc: lambda,
            hve: lambda,
            ec: lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("posc", self.posc),
            ("hvc", self.hvc),
            ("hve", self.hve),
            ("ec", self.ec),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(format!(
                    "penalty weight {name} must be a non-negative finite number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn check_shapes(grid: &LabelGrid<TupleLabel>, masks: &TokenMasks) -> Result<()> {
    if masks.len() != grid.width() {
        return Err(Error::shape(format!(
            "masks cover {} tokens but grid has {} columns",
            masks.len(),
            grid.width()
        )));
    }
    Ok(())
}

/// POS coverage: every important token should belong to at least one
/// extraction. Charges `1 - max_m max_{k in {S,R,O}} Y[m][n][k]` per
/// important token.
pub fn posc_penalty(grid: &LabelGrid<TupleLabel>, masks: &TokenMasks) -> Result<f64> {
    check_shapes(grid, masks)?;
    let mut total = 0.0;
    for n in 0..grid.width() {
        if !masks.important[n] {
            continue;
        }
        let mut best = 0.0f64;
        for m in 0..grid.levels() {
            for k in [SUBJECT, RELATION, OBJECT] {
                best = best.max(grid.prob(m, n, k));
            }
        }
        total += 1.0 - best;
    }
    Ok(total)
}

/// Head-verb coverage: each head verb should sit in the relation of
/// exactly one extraction in aggregate. Charges `|1 - sum_m Y[m][n][R]|`
/// per head verb.
pub fn hvc_penalty(grid: &LabelGrid<TupleLabel>, masks: &TokenMasks) -> Result<f64> {
    check_shapes(grid, masks)?;
    let mut total = 0.0;
    for n in 0..grid.width() {
        if !masks.head_verb[n] {
            continue;
        }
        let sum: f64 = (0..grid.levels()).map(|m| grid.prob(m, n, RELATION)).sum();
        total += (1.0 - sum).abs();
    }
    Ok(total)
}

/// Head-verb exclusivity: a relation span holds at most one head verb.
/// Charges `max(0, sum_n hv_n * Y[m][n][R] - 1)` per level.
pub fn hve_penalty(grid: &LabelGrid<TupleLabel>, masks: &TokenMasks) -> Result<f64> {
    check_shapes(grid, masks)?;
    let mut total = 0.0;
    for m in 0..grid.levels() {
        let sum: f64 = (0..grid.width())
            .filter(|&n| masks.head_verb[n])
            .map(|n| grid.prob(m, n, RELATION))
            .sum();
        total += (sum - 1.0).max(0.0);
    }
    Ok(total)
}

/// Extraction count: at least as many head-verb-bearing extractions as
/// head verbs. Charges `max(0, #head_verbs - sum_m max_n hv_n*Y[m][n][R])`.
pub fn ec_penalty(grid: &LabelGrid<TupleLabel>, masks: &TokenMasks) -> Result<f64> {
    check_shapes(grid, masks)?;
    let verbs = masks.head_verb_count() as f64;
    let mut covered = 0.0;
    for m in 0..grid.levels() {
        let best = (0..grid.width())
            .filter(|&n| masks.head_verb[n])
            .map(|n| grid.prob(m, n, RELATION))
            .fold(0.0f64, f64::max);
        covered += best;
    }
    Ok((verbs - covered).max(0.0))
}

/// All four penalties at once: `[posc, hvc, hve, ec]`.
pub fn all_penalties(grid: &LabelGrid<TupleLabel>, masks: &TokenMasks) -> Result<[f64; 4]> {
    Ok([
        posc_penalty(grid, masks)?,
        hvc_penalty(grid, masks)?,
        hve_penalty(grid, masks)?,
        ec_penalty(grid, masks)?,
    ])
}

/// The combined training objective: plain cross-entropy during warmup,
/// then the weighted sum of CE and the four penalties.
pub fn combined_loss(
    ce: f64,
    grid: &LabelGrid<TupleLabel>,
    masks: &TokenMasks,
    weights: &PenaltyWeights,
    step: usize,
    warmup: usize,
) -> Result<f64> {
    weights.validate()?;
    if step < warmup {
        return Ok(ce);
    }
    let [posc, hvc, hve, ec] = all_penalties(grid, masks)?;
    Ok(ce + weights.posc * posc + weights.hvc * hvc + weights.hve * hve + weights.ec * ec)
}

/// Discrete violation counts for reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ViolationReport {
    pub posc: usize,
    pub hvc: usize,
    pub hve: usize,
    pub ec: usize,
    pub extraction_count: usize,
}

impl ViolationReport {
    pub fn total(&self) -> usize {
        self.posc + self.hvc + self.hve + self.ec
    }

    /// Fixed-order TSV rendering: posc, hvc, hve, ec, total extractions.
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.posc, self.hvc, self.hve, self.ec, self.extraction_count
        )
    }
}

/// Count discrete violations over one sentence's hard grid:
/// - POSC: important tokens labeled N in every row;
/// - HVC: head verbs in the relation of a number of rows other than one;
/// - HVE: rows whose relation holds two or more head verbs;
/// - EC: shortfall of head-verb-bearing rows against head-verb count.
pub fn count_sentence_violations(
    grid: &LabelGrid<TupleLabel>,
    masks: &TokenMasks,
) -> Result<ViolationReport> {
    check_shapes(grid, masks)?;
    let mut report = ViolationReport::default();
    for n in 0..grid.width() {
        let rows_covering = (0..grid.levels())
            .filter(|&m| grid.hard(m, n) != TupleLabel::None)
            .count();
        if masks.important[n] && rows_covering == 0 {
            report.posc += 1;
        }
        if masks.head_verb[n] {
            let rows_relation = (0..grid.levels())
                .filter(|&m| grid.hard(m, n) == TupleLabel::Relation)
                .count();
            if rows_relation != 1 {
                report.hvc += 1;
            }
        }
    }
    let mut rows_with_verb = 0;
    for m in 0..grid.levels() {
        let verbs_in_relation = (0..grid.width())
            .filter(|&n| masks.head_verb[n] && grid.hard(m, n) == TupleLabel::Relation)
            .count();
        if verbs_in_relation >= 2 {
            report.hve += 1;
        }
        if verbs_in_relation >= 1 {
            rows_with_verb += 1;
        }
        let non_none = (0..grid.width())
            .filter(|&n| grid.hard(m, n) != TupleLabel::None)
            .count();
        if non_none > 0 {
            report.extraction_count += 1;
        }
    }
    report.ec = masks.head_verb_count().saturating_sub(rows_with_verb);
    Ok(report)
}

/// Sum violations over many sentences.
pub fn count_violations(
    sentences: &[(LabelGrid<TupleLabel>, TokenMasks)],
) -> Result<ViolationReport> {
    let mut total = ViolationReport::default();
    for (grid, masks) in sentences {
        let r = count_sentence_violations(grid, masks)?;
        total.posc += r.posc;
        total.hvc += r.hvc;
        total.hve += r.hve;
        total.ec += r.ec;
        total.extraction_count += r.extraction_count;
    }
    Ok(total)
}

/// Reconstruct a hard grid from an extraction set, one row per
/// extraction, for violation counting. An empty set yields a single
/// all-N row.
pub fn grid_from_extractions(
    extractions: &[Extraction],
    width: usize,
) -> Result<LabelGrid<TupleLabel>> {
    let mut rows = Vec::new();
    for e in extractions {
        let mut row = vec![TupleLabel::None; width];
        for (label, slot) in [
            (TupleLabel::Subject, &e.subject),
            (TupleLabel::Relation, &e.relation),
            (TupleLabel::Object, &e.object),
        ] {
            for &i in slot {
                if i >= width {
                    return Err(Error::shape(format!(
                        "extraction index {i} outside grid width {width}"
                    )));
                }
                row[i] = label;
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        rows.push(vec![TupleLabel::None; width]);
    }
    LabelGrid::from_hard(rows)
}
