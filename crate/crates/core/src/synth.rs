//! Small generated corpora for smoke tests, benchmarks and sanity runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, LabeledSentence};
use crate::tag::{SchemeKind, TagSequence};

const SUBJECT: &[&str] = &["alice", "bob", "carol", "dave", "erin"];
const SUBJECT_TAIL: &[&str] = &["smith", "jones"];
const PREDICATE: &[&str] = &["visited", "founded", "joined", "met"];
const PREDICATE_TAIL: &[&str] = &["by", "with"];
const OBJECT: &[&str] = &["paris", "acme", "rome", "ibm", "oslo"];
const OBJECT_TAIL: &[&str] = &["labs", "city"];
const FILLER: &[&str] = &["the", "quietly", "yesterday"];

/// The tag every word of [`word_tag_corpus`] carries.
pub fn word_tag(word: &str) -> Option<&'static str> {
    let groups: [(&[&str], &str); 7] = [
        (SUBJECT, "A0-B"),
        (SUBJECT_TAIL, "A0-I"),
        (PREDICATE, "P-B"),
        (PREDICATE_TAIL, "P-I"),
        (OBJECT, "A1-B"),
        (OBJECT_TAIL, "A1-I"),
        (FILLER, "O"),
    ];
    groups
        .iter()
        .find(|(words, _)| words.contains(&word))
        .map(|(_, tag)| *tag)
}

fn pick<'a, R: Rng>(rng: &mut R, words: &[&'a str]) -> &'a str {
    words.choose(rng).copied().unwrap()
}

fn relation_words<R: Rng>(rng: &mut R) -> Vec<&'static str> {
    let mut w = vec![pick(rng, SUBJECT)];
    if rng.gen_bool(0.4) {
        w.push(pick(rng, SUBJECT_TAIL));
    }
    w.push(pick(rng, PREDICATE));
    if rng.gen_bool(0.4) {
        w.push(pick(rng, PREDICATE_TAIL));
    }
    w.push(pick(rng, OBJECT));
    if rng.gen_bool(0.4) {
        w.push(pick(rng, OBJECT_TAIL));
    }
    w
}

/// Single-scheme sentences of one relation each, where every word always
/// carries the same tag. A model only has to memorise the vocabulary.
pub fn word_tag_corpus(sentences: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..sentences)
        .map(|i| {
            let mut words = Vec::new();
            if rng.gen_bool(0.5) {
                words.push(pick(&mut rng, FILLER));
            }
            words.extend(relation_words(&mut rng));
            if rng.gen_bool(0.5) {
                words.push(pick(&mut rng, FILLER));
            }
            let tags: Vec<&str> = words.iter().map(|w| word_tag(w).unwrap()).collect();
            let seq = TagSequence::parse(&tags.join(" ")).expect("generated tags parse");
            LabeledSentence::new(format!("w{i}"), &words, vec![seq])
        })
        .collect();
    Corpus {
        items,
        scheme: SchemeKind::Single,
    }
}

/// Single-scheme sentences joining one to three relations with "and"; each
/// relation gets its own tagging sequence, so predicates never overlap.
pub fn multi_relation_corpus(sentences: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..sentences)
        .map(|i| {
            let count = rng.gen_range(1..=3);
            let mut words: Vec<&str> = Vec::new();
            let mut spans = Vec::new();
            for r in 0..count {
                if r > 0 {
                    words.push("and");
                }
                let rel = relation_words(&mut rng);
                spans.push((words.len(), rel.clone()));
                words.extend(rel);
            }
            let sequences = spans
                .iter()
                .map(|(start, rel)| {
                    let mut tags = vec!["O"; words.len()];
                    for (j, w) in rel.iter().enumerate() {
                        tags[start + j] = word_tag(w).unwrap();
                    }
                    TagSequence::parse(&tags.join(" ")).expect("generated tags parse")
                })
                .collect();
            LabeledSentence::new(format!("m{i}"), &words, sequences)
        })
        .collect();
    Corpus {
        items,
        scheme: SchemeKind::Single,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tag::validate_bio;

    #[test]
    fn generated_corpora_are_valid() {
        for c in [word_tag_corpus(50, 1), multi_relation_corpus(50, 1)] {
            c.validate().unwrap();
            for s in &c.items {
                for q in &s.sequences {
                    assert!(validate_bio(q).is_empty());
                    assert_eq!(q.predicate_count(), 1);
                }
            }
        }
        assert_eq!(word_tag_corpus(5, 3), word_tag_corpus(5, 3));
        let rels: usize = multi_relation_corpus(100, 4).items.iter().map(|s| s.sequences.len()).sum();
        assert!(rels > 150 && rels < 250);
    }
}
