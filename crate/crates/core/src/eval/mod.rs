//! The four benchmark scoring functions (CaRB, CaRB(1-1), OIE16-C,
//! Wire57-C), precision-recall curves, and AUC.
//!
//! Scorers compare tokenized, case-folded text tuples. They differ along
//! two axes: how pair similarity is computed (argument-wise token overlap
//! vs. serialized overlap) and how system extractions are mapped to gold
//! ones (exact one-to-one assignment, greedy one-to-one, or many-to-one
//! for recall). Corpus scores are micro-averages: numerators and
//! denominators are summed across sentences before dividing.

pub mod assignment;
mod carb;
mod curve;
mod oie16;
mod wire57;

use std::collections::{BTreeMap, HashMap};

use crate::{Error, Result};

pub use assignment::{brute_force_best, max_weight_assignment};
pub use carb::MatchTable;
pub use curve::CurvePoint;

/// An extraction reduced to scoring form: per-slot token lists, already
/// tokenized and case-folded, plus the confidence used for threshold
/// sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct TextTuple {
    pub subject: Vec<String>,
    pub relation: Vec<String>,
    pub object: Vec<String>,
    pub confidence: f64,
}

fn slot_tokens(text: &str) -> Vec<String> {
    match crate::lingo::tokenize(text) {
        Ok(s) => s
            .tokens()
            .iter()
            .map(|t| t.surface.to_lowercase())
            .collect(),
        Err(_) => Vec::new(),
    }
}

impl TextTuple {
    pub fn new(subject: &str, relation: &str, object: &str, confidence: f64) -> Self {
        TextTuple {
            subject: slot_tokens(subject),
            relation: slot_tokens(relation),
            object: slot_tokens(object),
            confidence,
        }
    }

    pub fn slots(&self) -> [&[String]; 3] {
        [&self.subject, &self.relation, &self.object]
    }

    /// Total token count across the three slots.
    pub fn token_count(&self) -> usize {
        self.subject.len() + self.relation.len() + self.object.len()
    }

    /// All slot tokens concatenated, the "serialized" form used by the
    /// OIE16-C similarity.
    pub fn serialized(&self) -> Vec<String> {
        let mut all = self.subject.clone();
        all.extend(self.relation.iter().cloned());
        all.extend(self.object.iter().cloned());
        all
    }
}

/// Multiset intersection size between two token lists.
pub(crate) fn common_tokens(a: &[String], b: &[String]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in a {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut shared = 0;
    for t in b {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                shared += 1;
            }
        }
    }
    shared
}

/// Extractions for one sentence, system side and gold side.
#[derive(Debug, Clone, Default)]
pub struct SentencePair {
    pub system: Vec<TextTuple>,
    pub gold: Vec<TextTuple>,
}

/// A scoring corpus: sentence key to extraction pair. Keys are ordered so
/// every traversal is deterministic.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub sentences: BTreeMap<String, SentencePair>,
}

impl Corpus {
    /// Assemble a corpus from keyed system and gold extractions. System
    /// extractions under a key with no gold sentence still count against
    /// precision (zero credit); each such key produces a warning.
    pub fn build(
        system: Vec<(String, TextTuple)>,
        gold: Vec<(String, TextTuple)>,
    ) -> (Corpus, Vec<String>) {
        let mut sentences: BTreeMap<String, SentencePair> = BTreeMap::new();
        for (key, tuple) in gold {
            sentences.entry(key).or_default().gold.push(tuple);
        }
        let mut warnings = Vec::new();
        for (key, tuple) in system {
            if !sentences.contains_key(&key) {
                warnings.push(format!(
                    "system sentence {key:?} has no gold entry; its extractions get zero credit"
                ));
            }
            sentences.entry(key).or_default().system.push(tuple);
        }
        warnings.sort();
        warnings.dedup();
        (Corpus { sentences }, warnings)
    }

    /// Copy of the corpus keeping only system extractions with
    /// `confidence >= threshold`.
    fn at_threshold(&self, threshold: f64) -> Corpus {
        let sentences = self
            .sentences
            .iter()
            .map(|(k, pair)| {
                let system = pair
                    .system
                    .iter()
                    .filter(|t| t.confidence >= threshold)
                    .cloned()
                    .collect();
                (
                    k.clone(),
                    SentencePair {
                        system,
                        gold: pair.gold.clone(),
                    },
                )
            })
            .collect();
        Corpus { sentences }
    }

    /// Distinct system confidences, descending.
    fn thresholds(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .sentences
            .values()
            .flat_map(|p| p.system.iter().map(|t| t.confidence))
            .collect();
        all.sort_by(|a, b| b.partial_cmp(a).unwrap());
        all.dedup();
        all
    }
}

/// Which scoring function to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    Carb,
    CarbOneOne,
    Oie16C,
    Wire57C,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 4] = [
        ScorerKind::Carb,
        ScorerKind::CarbOneOne,
        ScorerKind::Oie16C,
        ScorerKind::Wire57C,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Carb => "carb",
            ScorerKind::CarbOneOne => "carb-1-1",
            ScorerKind::Oie16C => "oie16-c",
            ScorerKind::Wire57C => "wire57-c",
        }
    }

    pub fn parse(s: &str) -> Option<ScorerKind> {
        match s.to_lowercase().as_str() {
            "carb" => Some(ScorerKind::Carb),
            "carb-1-1" | "carb(1-1)" | "carb_one_one" | "carb11" => Some(ScorerKind::CarbOneOne),
            "oie16-c" | "oie16c" | "oie16" | "oie2016" => Some(ScorerKind::Oie16C),
            "wire57-c" | "wire57c" | "wire57" => Some(ScorerKind::Wire57C),
            _ => None,
        }
    }

    /// Wire57-C matches by pairwise F1, so its recall is not monotone in
    /// the confidence threshold and AUC is undefined for it.
    pub fn supports_auc(self) -> bool {
        !matches!(self, ScorerKind::Wire57C)
    }
}

/// Precision/recall/F1 on the percent scale, with an optional
/// precision-recall curve and AUC for the scorers that support one.
#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub scorer: ScorerKind,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub curve: Option<Vec<CurvePoint>>,
    pub auc: Option<f64>,
}

/// Micro-average accumulator shared by all scorers.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct MicroTotals {
    pub prec_num: f64,
    pub prec_den: f64,
    pub rec_num: f64,
    pub rec_den: f64,
}

impl MicroTotals {
    fn report(self, scorer: ScorerKind) -> ScoreReport {
        let precision = if self.prec_den > 0.0 {
            self.prec_num / self.prec_den
        } else {
            0.0
        };
        let recall = if self.rec_den > 0.0 {
            self.rec_num / self.rec_den
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ScoreReport {
            scorer,
            precision: precision * 100.0,
            recall: recall * 100.0,
            f1: f1 * 100.0,
            curve: None,
            auc: None,
        }
    }
}

fn totals(corpus: &Corpus, kind: ScorerKind) -> MicroTotals {
    let mut total = MicroTotals::default();
    for pair in corpus.sentences.values() {
        let t = match kind {
            ScorerKind::Carb => carb::sentence_totals(&pair.gold, &pair.system, false),
            ScorerKind::CarbOneOne => carb::sentence_totals(&pair.gold, &pair.system, true),
            ScorerKind::Oie16C => oie16::sentence_totals(&pair.gold, &pair.system),
            ScorerKind::Wire57C => wire57::sentence_totals(&pair.gold, &pair.system),
        };
        total.prec_num += t.prec_num;
        total.prec_den += t.prec_den;
        total.rec_num += t.rec_num;
        total.rec_den += t.rec_den;
    }
    total
}

/// Score the corpus with one scorer at zero confidence (every extraction
/// kept).
pub fn score(corpus: &Corpus, kind: ScorerKind) -> ScoreReport {
    totals(corpus, kind).report(kind)
}

/// Sweep the confidence threshold, scoring at each distinct value, and
/// integrate the precision-recall curve. Errors for Wire57-C, whose
/// matching is incompatible with a monotone recall sweep.
pub fn pr_curve_auc(corpus: &Corpus, kind: ScorerKind) -> Result<(Vec<CurvePoint>, f64)> {
    if !kind.supports_auc() {
        return Err(Error::Unsupported(
            "AUC undefined for Wire57-C: its F1-based matching does not yield \
             monotonically decreasing recall"
                .to_string(),
        ));
    }
    let mut points = Vec::new();
    for threshold in corpus.thresholds() {
        let report = score(&corpus.at_threshold(threshold), kind);
        points.push(CurvePoint {
            threshold,
            precision: report.precision,
            recall: report.recall,
        });
    }
    let auc = curve::auc(&points);
    Ok((points, auc))
}

/// Score with the curve and AUC attached when the scorer supports them.
pub fn score_with_curve(corpus: &Corpus, kind: ScorerKind) -> ScoreReport {
    let mut report = score(corpus, kind);
    if kind.supports_auc() {
        if let Ok((points, auc)) = pr_curve_auc(corpus, kind) {
            report.curve = Some(points);
            report.auc = Some(auc);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn keyed(key: &str, tuples: &[(&str, &str, &str, f64)]) -> Vec<(String, TextTuple)> {
        tuples
            .iter()
            .map(|(s, r, o, c)| (key.to_string(), TextTuple::new(s, r, o, *c)))
            .collect()
    }

    #[test]
    fn identity_scores_100_for_every_scorer() {
        let gold = keyed(
            "1",
            &[
                ("I", "ate", "an apple", 0.0),
                ("I", "ate", "an orange", 0.0),
            ],
        );
        let (corpus, warnings) = Corpus::build(gold.clone(), gold);
        assert!(warnings.is_empty());
        for kind in ScorerKind::ALL {
            let r = score(&corpus, kind);
            assert!(
                (r.precision - 100.0).abs() < 1e-9
                    && (r.recall - 100.0).abs() < 1e-9
                    && (r.f1 - 100.0).abs() < 1e-9,
                "{:?} gave ({}, {}, {})",
                kind,
                r.precision,
                r.recall,
                r.f1
            );
        }
    }

    #[test]
    fn unknown_system_key_warns_and_costs_precision() {
        let gold = keyed("1", &[("a", "b", "c", 0.0)]);
        let mut system = keyed("1", &[("a", "b", "c", 0.0)]);
        system.extend(keyed("2", &[("x", "y", "z", 0.0)]));
        let (corpus, warnings) = Corpus::build(system, gold);
        assert_eq!(warnings.len(), 1);
        let r = score(&corpus, ScorerKind::Carb);
        assert!((r.precision - 50.0).abs() < 1e-9);
        assert!((r.recall - 100.0).abs() < 1e-9);
    }

    #[test]
    fn wire57_auc_is_an_explicit_error() {
        let gold = keyed("1", &[("a", "b", "c", 0.0)]);
        let (corpus, _) = Corpus::build(gold.clone(), gold);
        let err = pr_curve_auc(&corpus, ScorerKind::Wire57C).unwrap_err();
        assert!(err.to_string().contains("AUC undefined for Wire57-C"));
    }
}
