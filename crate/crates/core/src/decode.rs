//! Turn hard label grids into extractions (tuple alphabet) or
//! hierarchical coordination structures (coordination alphabet).
//!
//! Decoding is total: any grid yields a possibly-empty result. Rows are
//! decoded independently; constraints act at training time only, so no
//! cross-level repair happens here.

use std::sync::Arc;

use crate::types::{
    CoordLabel, CoordinationStructure, Extraction, LabelAlphabet, LabelGrid, Sentence, Span,
    TupleLabel,
};
use crate::{Error, Result};

/// Filters applied while decoding extraction rows.
#[derive(Debug, Clone, Copy)]
pub struct DecodeConfig {
    /// Drop rows without a relation token (on by default).
    pub require_relation: bool,
    /// Drop rows without a subject token (off by default).
    pub require_subject: bool,
    /// Confidence floor in log space.
    pub min_confidence: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            require_relation: true,
            require_subject: false,
            min_confidence: f64::NEG_INFINITY,
        }
    }
}

/// Decode one extraction per non-empty grid row.
///
/// Indices labeled S, R, O at a level become that extraction's slots, in
/// sentence order. The confidence is the mean log-probability of the
/// predicted labels at the non-N cells, so it is never positive and a
/// hard (one-hot) grid decodes at confidence 0.
pub fn grid_to_extractions(
    grid: &LabelGrid<TupleLabel>,
    sentence: &Arc<Sentence>,
    cfg: &DecodeConfig,
) -> Result<Vec<Extraction>> {
    if grid.width() != sentence.len() {
        return Err(Error::shape(format!(
            "grid has {} columns for a {}-token sentence",
            grid.width(),
            sentence.len()
        )));
    }
    let mut extractions = Vec::new();
    for m in 0..grid.levels() {
        let mut subject = Vec::new();
        let mut relation = Vec::new();
        let mut object = Vec::new();
        let mut log_prob_sum = 0.0;
        let mut labeled = 0usize;
        for n in 0..grid.width() {
            let label = grid.hard(m, n);
            match label {
                TupleLabel::Subject => subject.push(n),
                TupleLabel::Relation => relation.push(n),
                TupleLabel::Object => object.push(n),
                TupleLabel::None => continue,
            }
            labeled += 1;
            log_prob_sum += grid.prob(m, n, label.index()).max(f64::MIN_POSITIVE).ln();
        }
        if labeled == 0 {
            continue;
        }
        if cfg.require_relation && relation.is_empty() {
            continue;
        }
        if cfg.require_subject && subject.is_empty() {
            continue;
        }
        let confidence = log_prob_sum / labeled as f64;
        if confidence < cfg.min_confidence {
            continue;
        }
        extractions.push(Extraction::new(
            subject,
            relation,
            object,
            confidence,
            Arc::clone(sentence),
        )?);
    }
    Ok(extractions)
}

/// Decode coordination structures row by row.
///
/// Maximal runs of CONJ cells are conjunct spans. Spans and CC tokens
/// chain together when separated only by comma tokens; each chain with a
/// coordinator and at least two conjuncts becomes one structure, anchored
/// at its rightmost CC token. Any other intervening token breaks the
/// chain.
pub fn grid_to_coordinations(
    grid: &LabelGrid<CoordLabel>,
    sentence: &Sentence,
) -> Result<Vec<CoordinationStructure>> {
    if grid.width() != sentence.len() {
        return Err(Error::shape(format!(
            "grid has {} columns for a {}-token sentence",
            grid.width(),
            sentence.len()
        )));
    }
    let mut structures = Vec::new();
    for m in 0..grid.levels() {
        structures.extend(decode_row(grid, m, sentence)?);
    }
    Ok(structures)
}

#[derive(Debug, Clone, Copy)]
enum Item {
    Conjunct(Span),
    Cc(usize),
}

impl Item {
    fn start(&self) -> usize {
        match self {
            Item::Conjunct(s) => s.start,
            Item::Cc(i) => *i,
        }
    }

    fn end(&self) -> usize {
        match self {
            Item::Conjunct(s) => s.end,
            Item::Cc(i) => i + 1,
        }
    }
}

fn decode_row(
    grid: &LabelGrid<CoordLabel>,
    level: usize,
    sentence: &Sentence,
) -> Result<Vec<CoordinationStructure>> {
    let labels = grid.level_hard(level);
    let mut items = Vec::new();
    let mut n = 0;
    while n < labels.len() {
        match labels[n] {
            CoordLabel::Conjunct => {
                let start = n;
                while n < labels.len() && labels[n] == CoordLabel::Conjunct {
                    n += 1;
                }
                items.push(Item::Conjunct(Span::new(start, n)));
            }
            CoordLabel::Coordinator => {
                items.push(Item::Cc(n));
                n += 1;
            }
            CoordLabel::None => {
                n += 1;
            }
        }
    }

    let is_comma = |i: usize| sentence.token(i).is_some_and(|t| t.surface == ",");
    let mut structures = Vec::new();
    let mut chain: Vec<Item> = Vec::new();
    let flush = |chain: &mut Vec<Item>, out: &mut Vec<CoordinationStructure>| {
        let conjuncts: Vec<Span> = chain
            .iter()
            .filter_map(|i| match i {
                Item::Conjunct(s) => Some(*s),
                Item::Cc(_) => None,
            })
            .collect();
        let last_cc = chain.iter().rev().find_map(|i| match i {
            Item::Cc(c) => Some(*c),
            Item::Conjunct(_) => None,
        });
        if let Some(coordinator) = last_cc {
            if conjuncts.len() >= 2 {
                if let Ok(s) = CoordinationStructure::new(level, coordinator, conjuncts) {
                    out.push(s);
                }
            }
        }
        chain.clear();
    };
    for item in items {
        let connected = chain
            .last()
            .map(|prev| (prev.end()..item.start()).all(is_comma))
            .unwrap_or(false);
        if !chain.is_empty() && !connected {
            flush(&mut chain, &mut structures);
        }
        chain.push(item);
    }
    flush(&mut chain, &mut structures);
    Ok(structures)
}
