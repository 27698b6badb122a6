//! Argument/predicate tags and BIO validation.
//!
//! Tags serialize as `O`, `A<k>-B` / `A<k>-I` for arguments, `P-B` / `P-I`
//! for predicates of the single-relation scheme, and `P<k>-B` / `P<k>-I` for
//! the ordered multi-relation scheme.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Boundary {
    Begin,
    Inside,
}

impl Boundary {
    fn suffix(self) -> &'static str {
        match self {
            Boundary::Begin => "B",
            Boundary::Inside => "I",
        }
    }
}

/// A single token label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    Other,
    Argument { index: u32, boundary: Boundary },
    /// `index` is `None` in the single-relation scheme.
    Predicate {
        index: Option<u32>,
        boundary: Boundary,
    },
}

/// What a tag refers to, ignoring its boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Other,
    Argument(u32),
    Predicate(Option<u32>),
}

impl Tag {
    pub fn arg(index: u32, boundary: Boundary) -> Self {
        Tag::Argument { index, boundary }
    }

    pub fn pred(index: Option<u32>, boundary: Boundary) -> Self {
        Tag::Predicate { index, boundary }
    }

    pub fn role(self) -> Role {
        match self {
            Tag::Other => Role::Other,
            Tag::Argument { index, .. } => Role::Argument(index),
            Tag::Predicate { index, .. } => Role::Predicate(index),
        }
    }

    pub fn boundary(self) -> Option<Boundary> {
        match self {
            Tag::Other => None,
            Tag::Argument { boundary, .. } | Tag::Predicate { boundary, .. } => Some(boundary),
        }
    }

    pub fn with_boundary(self, boundary: Boundary) -> Self {
        match self {
            Tag::Other => Tag::Other,
            Tag::Argument { index, .. } => Tag::Argument { index, boundary },
            Tag::Predicate { index, .. } => Tag::Predicate { index, boundary },
        }
    }

    pub fn is_other(self) -> bool {
        self == Tag::Other
    }

    pub fn is_predicate(self) -> bool {
        matches!(self, Tag::Predicate { .. })
    }

    pub fn is_begin(self) -> bool {
        self.boundary() == Some(Boundary::Begin)
    }

    pub fn is_inside(self) -> bool {
        self.boundary() == Some(Boundary::Inside)
    }

    /// Whether `self` may directly follow `prev` (or start a sequence when
    /// `prev` is `None`).
    pub fn may_follow(self, prev: Option<Tag>) -> bool {
        match self.boundary() {
            Some(Boundary::Inside) => match prev {
                Some(p) => !p.is_other() && p.role() == self.role(),
                None => false,
            },
            _ => true,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Tag::Other => f.write_str("O"),
            Tag::Argument { index, boundary } => write!(f, "A{}-{}", index, boundary.suffix()),
            Tag::Predicate {
                index: None,
                boundary,
            } => write!(f, "P-{}", boundary.suffix()),
            Tag::Predicate {
                index: Some(index),
                boundary,
            } => write!(f, "P{}-{}", index, boundary.suffix()),
        }
    }
}

fn parse_index(digits: &str, text: &str) -> Result<u32> {
    let bad = |reason: &str| Error::Tag {
        text: text.to_owned(),
        reason: reason.to_owned(),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("index must be a decimal number"));
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return Err(bad("index has a leading zero"));
    }
    digits.parse().map_err(|_| bad("index out of range"))
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        if text == "O" {
            return Ok(Tag::Other);
        }
        let bad = |reason: &str| Error::Tag {
            text: text.to_owned(),
            reason: reason.to_owned(),
        };
        let (head, suffix) = text
            .rsplit_once('-')
            .ok_or_else(|| bad("expected O or <role>-B / <role>-I"))?;
        let boundary = match suffix {
            "B" => Boundary::Begin,
            "I" => Boundary::Inside,
            _ => return Err(bad("boundary must be B or I")),
        };
        if let Some(digits) = head.strip_prefix('A') {
            if digits.is_empty() {
                return Err(bad("argument tags carry an index (A0, A1, ...)"));
            }
            Ok(Tag::arg(parse_index(digits, text)?, boundary))
        } else if let Some(digits) = head.strip_prefix('P') {
            let index = if digits.is_empty() {
                None
            } else {
                Some(parse_index(digits, text)?)
            };
            Ok(Tag::pred(index, boundary))
        } else {
            Err(bad("role must be A<k> or P / P<k>"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// One predicate span per sequence, predicates tagged `P-B` / `P-I`.
    Single,
    /// Ordered multi-relation scheme, predicates tagged `P<k>-B` / `P<k>-I`.
    Nts,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Single => "single",
            SchemeKind::Nts => "nts",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(SchemeKind::Single),
            "nts" => Ok(SchemeKind::Nts),
            other => Err(Error::Argument(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSequence {
    pub tags: Vec<Tag>,
    pub scheme: SchemeKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub position: usize,
    pub description: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "token {}: {}", self.position, self.description)
    }
}

impl TagSequence {
    pub fn new(tags: Vec<Tag>, scheme: SchemeKind) -> Self {
        TagSequence { tags, scheme }
    }

    /// Parses whitespace-separated tag strings, inferring the scheme from
    /// the presence of indexed predicate tags.
    pub fn parse(text: &str) -> Result<Self> {
        let tags = text
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<Tag>>>()?;
        let scheme = infer_scheme(&tags);
        Ok(TagSequence { tags, scheme })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Number of predicate spans, counted as predicate `Begin` tags.
    pub fn predicate_count(&self) -> usize {
        self.tags
            .iter()
            .filter(|t| t.is_predicate() && t.is_begin())
            .count()
    }

    /// Rewrites every orphan `Inside` tag as `Begin`, returning the
    /// positions that changed.
    pub fn repair_orphans(&mut self) -> Vec<usize> {
        let mut repaired = Vec::new();
        let mut prev = None;
        for (i, tag) in self.tags.iter_mut().enumerate() {
            if !tag.may_follow(prev) {
                *tag = tag.with_boundary(Boundary::Begin);
                repaired.push(i);
            }
            prev = Some(*tag);
        }
        repaired
    }
}

impl fmt::Display for TagSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, tag) in self.tags.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{tag}")?;
        }
        Ok(())
    }
}

/// `Nts` when any predicate tag carries an index.
pub fn infer_scheme(tags: &[Tag]) -> SchemeKind {
    let indexed = tags
        .iter()
        .any(|t| matches!(t, Tag::Predicate { index: Some(_), .. }));
    if indexed {
        SchemeKind::Nts
    } else {
        SchemeKind::Single
    }
}

/// Lists every violation of the sequence invariants: BIO chaining, scheme
/// consistency, one predicate span in single-scheme sequences, and a
/// contiguous `0..m` predicate index range in multi-relation sequences.
pub fn validate_bio(seq: &TagSequence) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut prev = None;
    for (i, &tag) in seq.tags.iter().enumerate() {
        if !tag.may_follow(prev) {
            let description = match prev {
                Some(p) if !p.is_other() => {
                    format!("{tag} follows {p} (role or index mismatch)")
                }
                _ => format!("{tag} has no preceding begin tag"),
            };
            out.push(Violation {
                position: i,
                description,
            });
        }
        prev = Some(tag);
    }

    match seq.scheme {
        SchemeKind::Single => {
            let mut spans = 0;
            for (i, &tag) in seq.tags.iter().enumerate() {
                if let Tag::Predicate { index: Some(_), .. } = tag {
                    out.push(Violation {
                        position: i,
                        description: format!("indexed predicate {tag} in a single-scheme sequence"),
                    });
                }
                if tag.is_predicate() && tag.is_begin() {
                    spans += 1;
                    if spans == 2 {
                        out.push(Violation {
                            position: i,
                            description: "second predicate span in a single-scheme sequence".into(),
                        });
                    }
                }
            }
        }
        SchemeKind::Nts => {
            // first position where each index appears, and begin counts
            let mut first_seen: BTreeMap<u32, usize> = BTreeMap::new();
            let mut begins: BTreeMap<u32, usize> = BTreeMap::new();
            for (i, &tag) in seq.tags.iter().enumerate() {
                match tag {
                    Tag::Predicate { index: None, .. } => out.push(Violation {
                        position: i,
                        description: format!("unindexed predicate {tag} in a multi-relation sequence"),
                    }),
                    Tag::Predicate {
                        index: Some(k),
                        boundary,
                    } => {
                        first_seen.entry(k).or_insert(i);
                        if boundary == Boundary::Begin {
                            let n = begins.entry(k).or_insert(0);
                            *n += 1;
                            if *n == 2 {
                                out.push(Violation {
                                    position: i,
                                    description: format!("predicate index {k} begins more than once"),
                                });
                            }
                        }
                    }
                    _ => {}
                }
            }
            for (rank, (&k, &pos)) in first_seen.iter().enumerate() {
                if k as usize != rank {
                    out.push(Violation {
                        position: pos,
                        description: format!(
                            "predicate index {k} present but index {rank} is missing"
                        ),
                    });
                    break;
                }
            }
        }
    }
    out.sort_by_key(|v| v.position);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TagSequence {
        TagSequence::parse(s).unwrap()
    }

    #[test]
    fn parses_all_forms() {
        assert_eq!("O".parse::<Tag>().unwrap(), Tag::Other);
        assert_eq!("A0-B".parse::<Tag>().unwrap(), Tag::arg(0, Boundary::Begin));
        assert_eq!("A12-I".parse::<Tag>().unwrap(), Tag::arg(12, Boundary::Inside));
        assert_eq!("P-B".parse::<Tag>().unwrap(), Tag::pred(None, Boundary::Begin));
        assert_eq!("P3-I".parse::<Tag>().unwrap(), Tag::pred(Some(3), Boundary::Inside));
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "B", "A-B", "P-X", "Q0-B", "P01-B", "A0B", "P-", "o", "P0-B-I"] {
            assert!(bad.parse::<Tag>().is_err(), "{bad} should not parse");
        }
    }

    #[test]
    fn validity_examples() {
        assert!(validate_bio(&seq("O P-B P-I")).is_empty());

        let v = validate_bio(&seq("P-I O"));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].position, 0);

        let v = validate_bio(&seq("P0-B P1-I"));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].position, 1);
    }

    #[test]
    fn scheme_level_violations() {
        // two spans in a single-scheme sequence
        assert_eq!(validate_bio(&seq("P-B O P-B")).len(), 1);
        // index gap
        let v = validate_bio(&seq("P0-B O P2-B"));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].position, 2);
        // repeated begin of one index
        assert_eq!(validate_bio(&seq("P0-B O P0-B")).len(), 1);
        // arguments may chain across a begin of the same role
        assert!(validate_bio(&seq("A0-B A0-I A0-B P0-B")).is_empty());
    }

    #[test]
    fn repair_turns_orphans_into_begins() {
        let mut s = seq("P-I O A0-I A1-I");
        let fixed = s.repair_orphans();
        assert_eq!(fixed, vec![0, 2, 3]);
        assert_eq!(s.to_string(), "P-B O A0-B A1-B");
        assert!(validate_bio(&s).is_empty());
    }

    /// Independent reference checker for two-tag sequences: inside tags
    /// need a predecessor of the same role, predicate indices must start at
    /// zero and be contiguous.
    fn brute_force_violations(a: &str, b: &str) -> Vec<usize> {
        let parts = |t: &str| -> (String, char) {
            if t == "O" {
                ("O".to_string(), 'O')
            } else {
                let (r, s) = t.rsplit_once('-').unwrap();
                (r.to_string(), s.chars().next().unwrap())
            }
        };
        let (ra, sa) = parts(a);
        let (rb, sb) = parts(b);
        let mut v = Vec::new();
        if sa == 'I' {
            v.push(0);
        }
        if sb == 'I' && (sa == 'O' || ra != rb) {
            v.push(1);
        }
        let mut indices: Vec<(u32, usize)> = Vec::new();
        for (pos, r) in [(0usize, &ra), (1, &rb)] {
            if let Some(d) = r.strip_prefix('P') {
                let k: u32 = d.parse().unwrap();
                if !indices.iter().any(|&(j, _)| j == k) {
                    indices.push((k, pos));
                }
            }
        }
        indices.sort();
        for (rank, &(k, pos)) in indices.iter().enumerate() {
            if k as usize != rank {
                v.push(pos);
                break;
            }
        }
        if sa == 'B' && sb == 'B' && ra == rb && ra.starts_with('P') {
            v.push(1);
        }
        v.sort();
        v
    }

    #[test]
    fn two_tag_sequences_match_brute_force() {
        let alphabet = ["O", "P0-B", "P0-I", "P1-B", "P1-I"];
        for a in alphabet {
            for b in alphabet {
                let s = TagSequence::new(
                    vec![a.parse().unwrap(), b.parse().unwrap()],
                    SchemeKind::Nts,
                );
                let got: Vec<usize> = validate_bio(&s).iter().map(|v| v.position).collect();
                assert_eq!(got, brute_force_violations(a, b), "{a} {b}");
            }
        }
    }
}
