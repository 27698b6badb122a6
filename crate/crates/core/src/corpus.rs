//! Labeled corpora in a tab-separated column format.
//!
//! One token per line: the token text, then one tag per relation column,
//! separated by single tabs. A blank line ends a sentence. A line of the
//! form `#id <sentence-id>` names the next sentence. An optional
//! `#scheme single|nts` line before the first sentence fixes the scheme,
//! which is otherwise inferred (indexed predicates mean multi-relation).
//! Any other line that starts with `#` and holds no tab is kept as a
//! comment and otherwise ignored.
//!
//! ```text
//! #id s1
//! Joe	A0-B
//! visited	P-B
//!
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::tag::{validate_bio, SchemeKind, Tag, TagSequence};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSentence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub sequences: Vec<TagSequence>,
}

impl LabeledSentence {
    pub fn new(id: impl Into<String>, words: &[&str], sequences: Vec<TagSequence>) -> Self {
        LabeledSentence {
            id: id.into(),
            tokens: tokens_from(words.iter().copied()),
            sequences,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn scheme(&self) -> Option<SchemeKind> {
        self.sequences.first().map(|s| s.scheme)
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }
}

pub fn tokens_from<'a>(words: impl IntoIterator<Item = &'a str>) -> Vec<Token> {
    words
        .into_iter()
        .enumerate()
        .map(|(index, w)| Token {
            text: w.to_owned(),
            index,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub items: Vec<LabeledSentence>,
    pub scheme: SchemeKind,
}

/// Relation counts for a corpus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub sentences: usize,
    pub relations: usize,
    /// Relations per sentence, rounded to one decimal.
    pub avg_relations_per_sentence: f64,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Checks every corpus invariant: unique ids, aligned sequence lengths,
    /// a shared scheme, and BIO-valid sequences.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for item in &self.items {
            if !ids.insert(item.id.as_str()) {
                return Err(Error::DuplicateSentenceId(item.id.clone()));
            }
            if item.sequences.is_empty() {
                return Err(Error::Structure {
                    line: 0,
                    message: format!("sentence {:?} has no tag sequences", item.id),
                });
            }
            for (column, seq) in item.sequences.iter().enumerate() {
                if seq.len() != item.len() {
                    return Err(Error::Alignment(format!(
                        "sentence {:?}: sequence {} has {} tags for {} tokens",
                        item.id,
                        column,
                        seq.len(),
                        item.len()
                    )));
                }
                if seq.scheme != self.scheme {
                    return Err(Error::SchemeMismatch(format!(
                        "sentence {:?} uses {} in a {} corpus",
                        item.id, seq.scheme, self.scheme
                    )));
                }
                if let Some(v) = validate_bio(seq).into_iter().next() {
                    return Err(Error::Bio {
                        sentence_id: item.id.clone(),
                        column: column + 1,
                        position: v.position,
                        description: v.description,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> Result<Stats> {
        corpus_stats(self)
    }
}

pub fn corpus_stats(corpus: &Corpus) -> Result<Stats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let relations: usize = corpus
        .items
        .iter()
        .flat_map(|s| &s.sequences)
        .map(TagSequence::predicate_count)
        .sum();
    let sentences = corpus.len();
    let avg = relations as f64 / sentences as f64;
    Ok(Stats {
        sentences,
        relations,
        avg_relations_per_sentence: (avg * 10.0).round() / 10.0,
    })
}

/// Which input columns hold the token and the tags. The default reads the
/// canonical layout: token in column 0, tags in every following column.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ColumnLayout {
    pub token_column: usize,
    /// `None` takes every column after `token_column`.
    pub tag_columns: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default)]
pub struct ParseOptions {
    /// Rewrite orphan inside tags as begins and tolerate extra predicate
    /// spans in single-scheme sequences, recording each change.
    pub lenient: bool,
    pub layout: ColumnLayout,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Repair {
    pub sentence_id: String,
    pub column: usize,
    pub position: usize,
    pub note: String,
}

#[derive(Clone, Debug, Default)]
pub struct ParseLog {
    pub repairs: Vec<Repair>,
    pub warnings: Vec<String>,
    /// Raw `#` comment lines, minus the `#id` directives.
    pub comments: Vec<String>,
}

/// Strict parse with the canonical column layout.
pub fn parse_conll<R: BufRead>(source: R) -> Result<Corpus> {
    parse_conll_with(source, &ParseOptions::default()).map(|(c, _)| c)
}

struct PendingSentence {
    id: Option<String>,
    first_line: usize,
    words: Vec<String>,
    columns: Vec<Vec<Tag>>,
    width: usize,
}

pub fn parse_conll_with<R: BufRead>(source: R, opts: &ParseOptions) -> Result<(Corpus, ParseLog)> {
    let mut log = ParseLog::default();
    let mut raw: Vec<(String, usize, Vec<String>, Vec<Vec<Tag>>)> = Vec::new();
    let mut next_id: Option<String> = None;
    let mut declared: Option<(SchemeKind, usize)> = None;
    let mut pending: Option<PendingSentence> = None;

    let flush = |pending: &mut Option<PendingSentence>,
                 raw: &mut Vec<(String, usize, Vec<String>, Vec<Vec<Tag>>)>| {
        if let Some(p) = pending.take() {
            let id = p.id.unwrap_or_else(|| format!("s{}", raw.len() + 1));
            raw.push((id, p.first_line, p.words, p.columns));
        }
    };

    for (lineno, line) in source.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);

        if line.trim().is_empty() {
            flush(&mut pending, &mut raw);
            continue;
        }
        if line.starts_with('#') && !line.contains('\t') {
            if let Some(rest) = line.strip_prefix("#id ") {
                let id = rest.trim();
                if id.is_empty() {
                    return Err(Error::Structure {
                        line: lineno,
                        message: "empty sentence id".into(),
                    });
                }
                if pending.is_some() {
                    return Err(Error::Structure {
                        line: lineno,
                        message: "#id line inside a sentence".into(),
                    });
                }
                next_id = Some(id.to_owned());
            } else if let Some(rest) = line.strip_prefix("#scheme ") {
                let kind = rest.trim().parse().map_err(|e| Error::Structure {
                    line: lineno,
                    message: format!("{e}"),
                })?;
                if pending.is_some() || !raw.is_empty() {
                    return Err(Error::Structure {
                        line: lineno,
                        message: "#scheme must come before the first sentence".into(),
                    });
                }
                declared = Some((kind, lineno));
            } else {
                log.comments.push(line.to_owned());
            }
            continue;
        }

        let fields: Vec<&str> = line.split('\t').collect();
        let p = pending.get_or_insert_with(|| PendingSentence {
            id: next_id.take(),
            first_line: lineno,
            words: Vec::new(),
            columns: Vec::new(),
            width: fields.len(),
        });
        if fields.len() != p.width {
            return Err(Error::Structure {
                line: lineno,
                message: format!("expected {} columns, found {}", p.width, fields.len()),
            });
        }
        let token = *fields.get(opts.layout.token_column).ok_or_else(|| Error::Structure {
            line: lineno,
            message: format!("no token column {}", opts.layout.token_column),
        })?;
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::Structure {
                line: lineno,
                message: format!("token {token:?} is empty or contains whitespace"),
            });
        }
        let tag_columns: Vec<usize> = match &opts.layout.tag_columns {
            Some(cols) => cols.clone(),
            None => (opts.layout.token_column + 1..fields.len()).collect(),
        };
        if tag_columns.is_empty() {
            return Err(Error::Structure {
                line: lineno,
                message: "no tag columns".into(),
            });
        }
        if p.columns.is_empty() {
            p.columns = vec![Vec::new(); tag_columns.len()];
        }
        for (slot, &col) in tag_columns.iter().enumerate() {
            let text = fields.get(col).ok_or_else(|| Error::Structure {
                line: lineno,
                message: format!("no tag column {col}"),
            })?;
            let tag: Tag = text.parse().map_err(|e| Error::TagAt {
                line: lineno,
                column: col,
                source: Box::new(e),
            })?;
            p.columns[slot].push(tag);
        }
        p.words.push(token.to_owned());
    }
    flush(&mut pending, &mut raw);

    if raw.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let scheme = raw
        .iter()
        .flat_map(|(_, _, _, cols)| cols.iter().flatten())
        .any(|t| matches!(t, Tag::Predicate { index: Some(_), .. }));
    let scheme = match (scheme, declared) {
        (true, Some((SchemeKind::Single, line))) => {
            return Err(Error::SchemeMismatch(format!(
                "line {line} declares the single scheme but the file has indexed predicates"
            )))
        }
        (_, Some((kind, _))) => kind,
        (true, None) => SchemeKind::Nts,
        (false, None) => SchemeKind::Single,
    };

    let mut items = Vec::with_capacity(raw.len());
    let mut seen = HashSet::new();
    for (id, first_line, words, columns) in raw {
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateSentenceId(id));
        }
        let mut sequences = Vec::with_capacity(columns.len());
        for (c, tags) in columns.into_iter().enumerate() {
            let column = c + 1;
            let mut seq = TagSequence::new(tags, scheme);
            warn_large_indices(&seq, &id, &mut log);
            let violations = validate_bio(&seq);
            if violations.is_empty() {
                sequences.push(seq);
                continue;
            }
            if !opts.lenient {
                let v = &violations[0];
                return Err(Error::Bio {
                    sentence_id: id,
                    column,
                    position: v.position,
                    description: format!("{} (sentence starts at line {first_line})", v.description),
                });
            }
            for position in seq.repair_orphans() {
                log.repairs.push(Repair {
                    sentence_id: id.clone(),
                    column,
                    position,
                    note: "orphan inside tag rewritten as begin".into(),
                });
            }
            for v in validate_bio(&seq) {
                if scheme == SchemeKind::Single && v.description.starts_with("second predicate span") {
                    log.repairs.push(Repair {
                        sentence_id: id.clone(),
                        column,
                        position: v.position,
                        note: "extra predicate span kept".into(),
                    });
                    continue;
                }
                return Err(Error::Bio {
                    sentence_id: id,
                    column,
                    position: v.position,
                    description: v.description,
                });
            }
            sequences.push(seq);
        }
        items.push(LabeledSentence {
            id,
            tokens: tokens_from(words.iter().map(String::as_str)),
            sequences,
        });
    }

    for r in &log.repairs {
        log::warn!(
            "sentence {:?} column {} token {}: {}",
            r.sentence_id,
            r.column,
            r.position,
            r.note
        );
    }
    Ok((Corpus { items, scheme }, log))
}

fn warn_large_indices(seq: &TagSequence, id: &str, log: &mut ParseLog) {
    for tag in &seq.tags {
        let msg = match *tag {
            Tag::Argument { index, .. } if index > 9 => format!("argument index {index}"),
            Tag::Predicate { index: Some(index), .. } if index > 9 => {
                format!("predicate index {index}")
            }
            _ => continue,
        };
        let msg = format!("sentence {id:?}: unusually large {msg}");
        log::warn!("{msg}");
        log.warnings.push(msg);
        return;
    }
}

/// Writes the corpus in the column format; `parse_conll` reads it back to
/// an equal corpus.
pub fn write_conll<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    out.write_all(to_conll_string(corpus).as_bytes())?;
    Ok(())
}

pub fn to_conll_string(corpus: &Corpus) -> String {
    let mut s = format!("#scheme {}\n", corpus.scheme.name());
    for item in &corpus.items {
        let _ = writeln!(s, "#id {}", item.id);
        for (i, tok) in item.tokens.iter().enumerate() {
            s.push_str(&tok.text);
            for seq in &item.sequences {
                let _ = write!(s, "\t{}", seq.tags[i]);
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s
}
