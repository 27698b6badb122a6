//! Scoring predicted tags against gold: token- and relation-level
//! precision/recall/F1 and the Predicate Matching Score (PMS).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;

use crate::corpus::{Corpus, LabeledSentence};
use crate::error::{Error, Result};
use crate::scheme::{extract_relations, RelationSpan};
use crate::tag::TagSequence;

/// The stopword list shipped with the crate.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords-v1.txt");
pub const DEFAULT_MODALS: &[&str] = &[
    "could", "can", "may", "might", "must", "shall", "should", "will", "would",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterLists {
    pub stopwords: HashSet<String>,
    pub modals: HashSet<String>,
}

impl Default for FilterLists {
    fn default() -> Self {
        FilterLists::with_stopwords(DEFAULT_STOPWORDS)
    }
}

impl FilterLists {
    /// One word per line; blank lines and `#` comments are skipped and
    /// entries are lowercased. Modal verbs keep the built-in list.
    pub fn with_stopwords(text: &str) -> Self {
        let stopwords = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        FilterLists {
            stopwords,
            modals: DEFAULT_MODALS.iter().map(|m| m.to_string()).collect(),
        }
    }

    pub fn empty() -> Self {
        FilterLists {
            stopwords: HashSet::new(),
            modals: HashSet::new(),
        }
    }

    pub fn is_filtered_word(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.stopwords.contains(&w) || self.modals.contains(&w)
    }

    /// True when every token of `relation` is a stopword or modal.
    pub fn drops(&self, relation: &str) -> bool {
        let mut words = relation.split_whitespace().peekable();
        words.peek().is_some() && words.all(|w| self.is_filtered_word(w))
    }
}

/// Lowercase with single spaces, the key relations are compared on.
pub fn normalize(relation: &str) -> String {
    relation
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchOutcome {
    /// Predictions paired with a gold relation, as written.
    pub matched: Vec<String>,
    /// Predictions made only of stopwords and modals.
    pub removed: Vec<String>,
    /// Remaining predictions with no gold partner left.
    pub unmatched: Vec<String>,
}

/// Drops stopword/modal-only predictions, then pairs the rest with gold
/// relations by normalized surface, each gold relation used at most once.
pub fn match_predictions<S: AsRef<str>>(predicted: &[S], gold: &[S], f: &FilterLists) -> MatchOutcome {
    let mut available: HashMap<String, usize> = HashMap::new();
    for g in gold {
        *available.entry(normalize(g.as_ref())).or_default() += 1;
    }
    let mut out = MatchOutcome::default();
    for p in predicted {
        let p = p.as_ref();
        if f.drops(p) {
            out.removed.push(p.to_owned());
            continue;
        }
        match available.get_mut(&normalize(p)) {
            Some(n) if *n > 0 => {
                *n -= 1;
                out.matched.push(p.to_owned());
            }
            _ => out.unmatched.push(p.to_owned()),
        }
    }
    out
}

/// The predictions that survive filtering and matching.
pub fn filter_predictions<S: AsRef<str>>(predicted: &[S], gold: &[S], f: &FilterLists) -> Vec<String> {
    match_predictions(predicted, gold, f).matched
}

/// Predicted and gold relation surfaces for one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PmsItem {
    pub sentence_id: String,
    pub predicted: Vec<String>,
    pub gold: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePms {
    pub sentence_id: String,
    pub matched: usize,
    pub gold: usize,
    pub removed_by_filter: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmsReport {
    pub matched_count: usize,
    pub gold_count: usize,
    /// Percentage.
    pub pms: f64,
    pub per_sentence: Vec<SentencePms>,
}

pub fn pms(items: &[PmsItem], f: &FilterLists) -> Result<PmsReport> {
    let per_sentence: Vec<SentencePms> = items
        .iter()
        .map(|it| {
            let m = match_predictions(&it.predicted, &it.gold, f);
            SentencePms {
                sentence_id: it.sentence_id.clone(),
                matched: m.matched.len(),
                gold: it.gold.len(),
                removed_by_filter: m.removed.len(),
            }
        })
        .collect();
    let matched_count: usize = per_sentence.iter().map(|s| s.matched).sum();
    let gold_count: usize = per_sentence.iter().map(|s| s.gold).sum();
    if gold_count == 0 {
        return Err(Error::UndefinedMetric("PMS needs at least one gold relation".into()));
    }
    Ok(PmsReport {
        matched_count,
        gold_count,
        pms: 100.0 * matched_count as f64 / gold_count as f64,
        per_sentence,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Token,
    Relation,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Token => "token",
            Level::Relation => "relation",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub level: Level,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// Undefined ratios are reported as 0.
    pub fn from_counts(level: Level, tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            level,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Micro-average: counts are summed, ratios recomputed.
    pub fn merge(&self, other: &Metrics) -> Metrics {
        Metrics::from_counts(
            self.level,
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
        )
    }
}

/// Counts over non-O tags by exact tag equality.
pub fn prf_token(pred: &TagSequence, gold: &TagSequence) -> Result<Metrics> {
    if pred.len() != gold.len() {
        return Err(Error::Alignment(format!(
            "predicted sequence has {} tags, gold has {}",
            pred.len(),
            gold.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.tags.iter().zip(&gold.tags) {
        let hit = !g.is_other() && p == g;
        if hit {
            tp += 1;
        }
        if !p.is_other() && !hit {
            fp += 1;
        }
        if !g.is_other() && !hit {
            fn_ += 1;
        }
    }
    Ok(Metrics::from_counts(Level::Token, tp, fp, fn_))
}

/// Exact `(start, end)` matches between predicate spans, as multisets.
pub fn prf_relation(pred: &[RelationSpan], gold: &[RelationSpan]) -> Metrics {
    let mut available: HashMap<(usize, usize), usize> = HashMap::new();
    for g in gold {
        *available.entry(g.range()).or_default() += 1;
    }
    let mut tp = 0;
    for p in pred {
        if let Some(n) = available.get_mut(&p.range()).filter(|n| **n > 0) {
            *n -= 1;
            tp += 1;
        }
    }
    Metrics::from_counts(Level::Relation, tp, pred.len() - tp, gold.len() - tp)
}

/// Distinct predicate spans over all of a sentence's sequences, by start.
pub fn sentence_relations(ls: &LabeledSentence) -> Vec<RelationSpan> {
    let mut seen = BTreeSet::new();
    let mut out: Vec<RelationSpan> = ls
        .sequences
        .iter()
        .flat_map(|q| extract_relations(q, &ls.tokens))
        .filter(|r| seen.insert(r.range()))
        .collect();
    out.sort_by_key(RelationSpan::range);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// `None` when the two corpora cannot be compared tag by tag.
    pub token: Option<Metrics>,
    pub token_note: Option<String>,
    pub relation: Metrics,
    pub pms: PmsReport,
}

/// Scores a predicted corpus against gold. Sentences are paired in order
/// and must agree on id and tokens.
pub fn evaluate(gold: &Corpus, pred: &Corpus, f: &FilterLists) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment(format!(
            "gold has {} sentences, predictions have {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut token_note = None;
    if gold.scheme != pred.scheme {
        token_note = Some(format!(
            "token-level scores need one scheme; gold is {}, predictions are {}",
            gold.scheme, pred.scheme
        ));
    }
    let mut token = Metrics::from_counts(Level::Token, 0, 0, 0);
    let mut relation = Metrics::from_counts(Level::Relation, 0, 0, 0);
    let mut items = Vec::with_capacity(gold.len());
    for (g, p) in gold.items.iter().zip(&pred.items) {
        if g.id != p.id {
            return Err(Error::Alignment(format!("sentence ids differ: {} vs {}", g.id, p.id)));
        }
        if g.words() != p.words() {
            return Err(Error::Alignment(format!("sentence {}: tokens differ", g.id)));
        }
        if token_note.is_none() {
            if g.sequences.len() == p.sequences.len() {
                for (ps, gs) in p.sequences.iter().zip(&g.sequences) {
                    token = token.merge(&prf_token(ps, gs)?);
                }
            } else {
                token_note = Some(format!(
                    "token-level scores need matching sequence counts; sentence {} has {} gold and {} predicted",
                    g.id,
                    g.sequences.len(),
                    p.sequences.len()
                ));
            }
        }
        let gr = sentence_relations(g);
        let pr = sentence_relations(p);
        relation = relation.merge(&prf_relation(&pr, &gr));
        items.push(PmsItem {
            sentence_id: g.id.clone(),
            predicted: pr.into_iter().map(|r| r.surface).collect(),
            gold: gr.into_iter().map(|r| r.surface).collect(),
        });
    }
    Ok(EvalReport {
        token: token_note.is_none().then_some(token),
        token_note,
        relation,
        pms: pms(&items, f)?,
    })
}

impl EvalReport {
    /// Human-readable summary table.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("level      P       R       F1      TP    FP    FN\n");
        let line = |m: &Metrics| {
            format!(
                "{:<9}  {:.4}  {:.4}  {:.4}  {:<5} {:<5} {}\n",
                m.level.to_string(),
                m.precision,
                m.recall,
                m.f1,
                m.true_positives,
                m.false_positives,
                m.false_negatives
            )
        };
        match &self.token {
            Some(m) => s.push_str(&line(m)),
            None => s.push_str("token      n/a\n"),
        }
        s.push_str(&line(&self.relation));
        if let Some(note) = &self.token_note {
            s.push_str(&format!("note: {note}\n"));
        }
        s.push_str(&format!(
            "PMS {:.1}% ({} of {} gold relations)\n",
            self.pms.pms, self.pms.matched_count, self.pms.gold_count
        ));
        s
    }

    /// `dataset,model,P,R,F1,PMS` with relation-level P/R/F1.
    pub fn write_csv<W: Write>(&self, dataset: &str, model: &str, mut out: W) -> Result<()> {
        writeln!(out, "dataset,model,P,R,F1,PMS")?;
        writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.1}",
            csv_field(dataset),
            csv_field(model),
            self.relation.precision,
            self.relation.recall,
            self.relation.f1,
            self.pms.pms
        )?;
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
