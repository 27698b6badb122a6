//! Conversion between the single-relation scheme and the ordered
//! multi-relation scheme, overlap detection, and relation span extraction.

use std::collections::BTreeSet;
use std::fmt;

use crate::corpus::{Corpus, LabeledSentence, Token};
use crate::error::{Error, Result};
use crate::tag::{Boundary, Role, SchemeKind, Tag, TagSequence};

/// A contiguous predicate span, `end` inclusive.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RelationSpan {
    pub start: usize,
    pub end: usize,
    pub pred_index: Option<u32>,
    pub surface: String,
}

impl RelationSpan {
    pub fn range(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One token whose tag differs between two sequences of a sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub token: usize,
    pub tag_a: Tag,
    pub tag_b: Tag,
    pub seq_a: usize,
    pub seq_b: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OverlapReport {
    pub conflicts: Vec<Conflict>,
}

impl OverlapReport {
    pub fn is_empty(&self) -> bool {
        self.conflicts.is_empty()
    }

    /// Distinct token positions involved in at least one conflict.
    pub fn positions(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.conflicts.iter().map(|c| c.token).collect();
        set.into_iter().collect()
    }
}

/// Every (token, sequence pair) whose tags disagree.
pub fn detect_overlap(ls: &LabeledSentence) -> Result<OverlapReport> {
    if ls.scheme() != Some(SchemeKind::Single) {
        return Err(Error::SchemeMismatch(format!(
            "overlap detection needs single-scheme sequences (sentence {:?})",
            ls.id
        )));
    }
    let mut conflicts = Vec::new();
    for token in 0..ls.len() {
        for a in 0..ls.sequences.len() {
            for b in a + 1..ls.sequences.len() {
                let (ta, tb) = (ls.sequences[a].tags[token], ls.sequences[b].tags[token]);
                if ta != tb {
                    conflicts.push(Conflict {
                        token,
                        tag_a: ta,
                        tag_b: tb,
                        seq_a: a,
                        seq_b: b,
                    });
                }
            }
        }
    }
    Ok(OverlapReport { conflicts })
}

/// Maximal begin/inside chains for which `select` holds, as
/// `(start, end, role)`. An inside tag that does not continue a chain
/// starts a new one.
fn chains(tags: &[Tag], select: impl Fn(Tag) -> bool) -> Vec<(usize, usize, Role)> {
    let mut out: Vec<(usize, usize, Role)> = Vec::new();
    let mut open = false;
    for (i, &tag) in tags.iter().enumerate() {
        if !select(tag) {
            open = false;
            continue;
        }
        let continues = open
            && tag.is_inside()
            && out.last().is_some_and(|&(_, end, role)| end + 1 == i && role == tag.role());
        if continues {
            out.last_mut().unwrap().1 = i;
        } else {
            out.push((i, i, tag.role()));
        }
        open = true;
    }
    out
}

fn surface(tokens: &[Token], start: usize, end: usize) -> String {
    tokens[start..=end]
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Predicate spans of a sequence, ordered by start.
pub fn extract_relations(seq: &TagSequence, tokens: &[Token]) -> Vec<RelationSpan> {
    chains(&seq.tags, Tag::is_predicate)
        .into_iter()
        .map(|(start, end, role)| RelationSpan {
            start,
            end,
            pred_index: match role {
                Role::Predicate(k) => k,
                _ => unreachable!(),
            },
            surface: surface(tokens, start, end),
        })
        .collect()
}

/// An argument span from a later relation that lost tokens to an earlier
/// relation or to a predicate during a merge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgumentConflict {
    pub sequence: usize,
    pub span: (usize, usize),
    pub lost_tokens: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Merge {
    pub sequence: TagSequence,
    /// Predicate spans in output index order.
    pub relations: Vec<(usize, usize)>,
    pub argument_conflicts: Vec<ArgumentConflict>,
}

/// Merges the single-scheme sequences of a sentence into one
/// multi-relation sequence. See [`merge_to_nts_logged`].
pub fn merge_to_nts(ls: &LabeledSentence) -> Result<TagSequence> {
    merge_to_nts_logged(ls).map(|m| m.sequence)
}

/// Merge with the argument conflict log.
///
/// Predicate spans get indices `0..m` ordered by start, longer span first
/// on equal starts, then input order; identical spans collapse to one
/// index. Argument spans are copied relation by relation in that order,
/// each token going to the first relation that claims it. A span that
/// loses some tokens keeps its free runs, each opened with a begin tag.
pub fn merge_to_nts_logged(ls: &LabeledSentence) -> Result<Merge> {
    if ls.scheme() != Some(SchemeKind::Single) {
        return Err(Error::SchemeMismatch(format!(
            "sentence {:?} is not in the single-relation scheme",
            ls.id
        )));
    }
    let n = ls.len();

    // (start, end, sequence) for every predicate span
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    for (s, seq) in ls.sequences.iter().enumerate() {
        for (start, end, _) in chains(&seq.tags, Tag::is_predicate) {
            spans.push((start, end, s));
        }
    }
    spans.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));

    let mut relations: Vec<(usize, usize)> = Vec::new();
    // relation rank of each input sequence, by its first predicate span
    let mut rank_of_seq: Vec<Option<usize>> = vec![None; ls.sequences.len()];
    for &(start, end, s) in &spans {
        let rank = match relations.iter().position(|&r| r == (start, end)) {
            Some(r) => r,
            None => {
                if let Some(&other) = relations.iter().find(|&&(a, b)| a <= end && start <= b) {
                    return Err(Error::UnmergeablePredicates {
                        sentence_id: ls.id.clone(),
                        first: other,
                        second: (start, end),
                    });
                }
                relations.push((start, end));
                relations.len() - 1
            }
        };
        rank_of_seq[s] = Some(rank_of_seq[s].map_or(rank, |r: usize| r.min(rank)));
    }

    let mut tags = vec![Tag::Other; n];
    for (k, &(start, end)) in relations.iter().enumerate() {
        tags[start] = Tag::pred(Some(k as u32), Boundary::Begin);
        for t in &mut tags[start + 1..=end] {
            *t = Tag::pred(Some(k as u32), Boundary::Inside);
        }
    }

    // sequences without predicates come after every relation, in input order
    let mut order: Vec<usize> = (0..ls.sequences.len()).collect();
    order.sort_by_key(|&s| (rank_of_seq[s].unwrap_or(usize::MAX), s));

    let mut argument_conflicts = Vec::new();
    for s in order {
        let seq = &ls.sequences[s];
        for (start, end, role) in chains(&seq.tags, |t| matches!(t, Tag::Argument { .. })) {
            let Role::Argument(index) = role else {
                unreachable!()
            };
            let mut lost = Vec::new();
            let mut open = false;
            for (i, slot) in tags.iter_mut().enumerate().take(end + 1).skip(start) {
                if slot.is_other() {
                    let boundary = if open { Boundary::Inside } else { Boundary::Begin };
                    *slot = Tag::arg(index, boundary);
                    open = true;
                } else {
                    lost.push(i);
                    open = false;
                }
            }
            if !lost.is_empty() {
                log::debug!(
                    "sentence {:?}: argument span {}..={} of sequence {} lost tokens {:?}",
                    ls.id,
                    start,
                    end,
                    s,
                    lost
                );
                argument_conflicts.push(ArgumentConflict {
                    sequence: s,
                    span: (start, end),
                    lost_tokens: lost,
                });
            }
        }
    }

    Ok(Merge {
        sequence: TagSequence::new(tags, SchemeKind::Nts),
        relations,
        argument_conflicts,
    })
}

/// Splits a multi-relation sequence into one single-scheme sequence per
/// predicate index. Argument tags are kept in every output sequence.
pub fn explode_from_nts(seq: &TagSequence) -> Result<Vec<TagSequence>> {
    if seq.scheme != SchemeKind::Nts {
        return Err(Error::SchemeMismatch(
            "explode needs a multi-relation sequence".into(),
        ));
    }
    let indices: BTreeSet<u32> = seq
        .tags
        .iter()
        .filter_map(|t| match t {
            Tag::Predicate { index: Some(k), .. } => Some(*k),
            _ => None,
        })
        .collect();
    if let Some(&max) = indices.iter().next_back() {
        if let Some(missing) = (0..=max).find(|k| !indices.contains(k)) {
            return Err(Error::PredicateGap { missing, max });
        }
    }
    let strip = |keep: Option<u32>| -> TagSequence {
        let tags = seq
            .tags
            .iter()
            .map(|&t| match t {
                Tag::Predicate { index, boundary } if index == keep => Tag::pred(None, boundary),
                Tag::Predicate { .. } => Tag::Other,
                other => other,
            })
            .collect();
        TagSequence::new(tags, SchemeKind::Single)
    };
    if indices.is_empty() {
        return Ok(vec![strip(None)]);
    }
    Ok(indices.into_iter().map(|k| strip(Some(k))).collect())
}

/// Converts every sentence of a single-scheme corpus to one merged
/// sequence.
pub fn corpus_to_nts(corpus: &Corpus) -> Result<Corpus> {
    if corpus.scheme != SchemeKind::Single {
        return Err(Error::SchemeMismatch("input already in NTS".into()));
    }
    let items = corpus
        .items
        .iter()
        .map(|ls| {
            Ok(LabeledSentence {
                id: ls.id.clone(),
                tokens: ls.tokens.clone(),
                sequences: vec![merge_to_nts(ls)?],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        items,
        scheme: SchemeKind::Nts,
    })
}

/// Explodes every sentence of a multi-relation corpus.
pub fn corpus_to_single(corpus: &Corpus) -> Result<Corpus> {
    if corpus.scheme != SchemeKind::Nts {
        return Err(Error::SchemeMismatch("input already in the single scheme".into()));
    }
    let items = corpus
        .items
        .iter()
        .map(|ls| {
            let mut sequences = Vec::new();
            for seq in &ls.sequences {
                sequences.extend(explode_from_nts(seq)?);
            }
            Ok(LabeledSentence {
                id: ls.id.clone(),
                tokens: ls.tokens.clone(),
                sequences,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        items,
        scheme: SchemeKind::Single,
    })
}

/// The ordered set of tags a model predicts over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagAlphabet {
    tags: Vec<Tag>,
}

fn alphabet_key(tag: &Tag) -> (u8, Option<u32>, Option<Boundary>) {
    match *tag {
        Tag::Other => (0, None, None),
        Tag::Argument { index, boundary } => (1, Some(index), Some(boundary)),
        Tag::Predicate { index, boundary } => (2, index, Some(boundary)),
    }
}

impl TagAlphabet {
    /// Builds an alphabet from arbitrary tags: `O` first, then arguments,
    /// then predicates, each group by index and then begin before inside.
    pub fn from_tags(tags: impl IntoIterator<Item = Tag>) -> Self {
        let mut set: Vec<Tag> = tags.into_iter().collect();
        set.push(Tag::Other);
        set.sort_by_key(alphabet_key);
        set.dedup();
        TagAlphabet { tags: set }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn index_of(&self, tag: Tag) -> Option<usize> {
        self.tags.binary_search_by_key(&alphabet_key(&tag), alphabet_key).ok()
    }

    pub fn tag(&self, index: usize) -> Tag {
        self.tags[index]
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn strings(&self) -> Vec<String> {
        self.tags.iter().map(Tag::to_string).collect()
    }

    pub fn from_strings<S: AsRef<str>>(strings: &[S]) -> Result<Self> {
        let tags = strings
            .iter()
            .map(|s| s.as_ref().parse())
            .collect::<Result<Vec<Tag>>>()?;
        let alphabet = TagAlphabet::from_tags(tags.iter().copied());
        if alphabet.tags != tags {
            return Err(Error::Argument(
                "tag alphabet strings are not in canonical order".into(),
            ));
        }
        Ok(alphabet)
    }

    pub fn encode(&self, seq: &TagSequence) -> Result<Vec<usize>> {
        seq.tags
            .iter()
            .map(|&t| {
                self.index_of(t)
                    .ok_or_else(|| Error::Argument(format!("tag {t} not in the model alphabet")))
            })
            .collect()
    }

    pub fn decode(&self, indices: &[usize], scheme: SchemeKind) -> TagSequence {
        TagSequence::new(indices.iter().map(|&i| self.tags[i]).collect(), scheme)
    }

    /// Scheme the alphabet's predicate tags belong to.
    pub fn scheme(&self) -> SchemeKind {
        crate::tag::infer_scheme(&self.tags)
    }
}

impl fmt::Display for TagAlphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.strings().join(" "))
    }
}

pub fn build_tag_alphabet(corpus: &Corpus) -> Result<TagAlphabet> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let tags = corpus
        .items
        .iter()
        .flat_map(|s| &s.sequences)
        .flat_map(|q| q.tags.iter().copied());
    Ok(TagAlphabet::from_tags(tags))
}
