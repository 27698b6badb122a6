//! Word vectors: static tables in the GloVe text format and precomputed
//! per-token contextual vectors.

use std::collections::HashMap;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LabeledSentence, Token};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    unk: Vec<f64>,
}

/// The vector sequence for one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedSentence {
    pub sentence_id: String,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddedSentence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

fn parse_components(fields: &[&str], line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| Error::EmbeddingFormat {
                line,
                message: format!("cannot parse component {f:?}"),
            })
        })
        .collect()
}

impl EmbeddingTable {
    /// Builds a table from rows; the unknown-word vector is the mean of all
    /// rows.
    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("embedding dimension must be positive".into()));
        }
        let mut entries = HashMap::new();
        for (word, v) in rows {
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "vector for {word:?} has {} components, expected {dim}",
                    v.len()
                )));
            }
            entries.insert(word, v);
        }
        if entries.is_empty() {
            return Err(Error::EmbeddingFormat {
                line: 0,
                message: "no vectors".into(),
            });
        }
        // sorted for a summation order independent of hashing
        let mut words: Vec<&String> = entries.keys().collect();
        words.sort();
        let mut unk = vec![0.0; dim];
        for (n, w) in words.iter().enumerate() {
            // running mean keeps finite inputs finite
            for (u, x) in unk.iter_mut().zip(&entries[*w]) {
                *u += (x - *u) / (n + 1) as f64;
            }
        }
        Ok(EmbeddingTable { dim, entries, unk })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn unk(&self) -> &[f64] {
        &self.unk
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    /// Lowercased word first, then the word as written, then the unknown
    /// vector.
    pub fn lookup(&self, word: &str) -> &[f64] {
        self.get(&word.to_lowercase())
            .or_else(|| self.get(word))
            .unwrap_or(&self.unk)
    }
}

/// Reads `<word> <f1> ... <fD>` lines. A repeated word keeps its last
/// vector.
pub fn load_static_embeddings<R: BufRead>(source: R, dim: usize) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Argument("embedding dimension must be positive".into()));
    }
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in source.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(Error::EmbeddingFormat {
                line: lineno,
                message: format!("expected {} components, found {}", dim, fields.len() - 1),
            });
        }
        let v = parse_components(&fields[1..], lineno)?;
        let word = fields[0].to_owned();
        match index.get(&word) {
            Some(&i) => {
                log::warn!("line {lineno}: duplicate word {word:?}, keeping the later vector");
                rows[i].1 = v;
            }
            None => {
                index.insert(word.clone(), rows.len());
                rows.push((word, v));
            }
        }
    }
    EmbeddingTable::from_rows(dim, rows)
}

/// Number of components on the first non-empty line of a static table.
pub fn sniff_static_dim(first_line: &str) -> Option<usize> {
    let n = first_line.split_whitespace().count();
    (n >= 2).then(|| n - 1)
}

pub fn embed_static(sentence_id: &str, tokens: &[Token], table: &EmbeddingTable) -> EmbeddedSentence {
    EmbeddedSentence {
        sentence_id: sentence_id.to_owned(),
        vectors: tokens.iter().map(|t| table.lookup(&t.text).to_vec()).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextualBlock {
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

/// Per-sentence token vectors produced by an external encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualVectorFile {
    dim: usize,
    blocks: HashMap<String, ContextualBlock>,
}

impl ContextualVectorFile {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, sentence_id: &str) -> Option<&ContextualBlock> {
        self.blocks.get(sentence_id)
    }
}

/// Reads blocks of the form
///
/// ```text
/// #sent <sentence-id> <n> <dim>
/// <token> <f1> ... <fD>     (n lines)
/// ```
///
/// separated by blank lines.
pub fn load_contextual<R: BufRead>(source: R) -> Result<ContextualVectorFile> {
    let mut dim: Option<usize> = None;
    let mut blocks = HashMap::new();
    // (id, expected rows, header line, block)
    let mut open: Option<(String, usize, usize, ContextualBlock)> = None;

    fn close(
        open: &mut Option<(String, usize, usize, ContextualBlock)>,
        blocks: &mut HashMap<String, ContextualBlock>,
    ) -> Result<()> {
        if let Some((id, n, header, block)) = open.take() {
            if block.vectors.len() != n {
                return Err(Error::EmbeddingFormat {
                    line: header,
                    message: format!(
                        "block {id:?} declares {n} tokens but holds {}",
                        block.vectors.len()
                    ),
                });
            }
            if blocks.insert(id.clone(), block).is_some() {
                return Err(Error::EmbeddingFormat {
                    line: header,
                    message: format!("duplicate block {id:?}"),
                });
            }
        }
        Ok(())
    }

    for (lineno, line) in source.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            close(&mut open, &mut blocks)?;
            continue;
        }
        if fields[0] == "#sent" {
            close(&mut open, &mut blocks)?;
            let bad = |message: &str| Error::EmbeddingFormat {
                line: lineno,
                message: message.to_owned(),
            };
            if fields.len() != 4 {
                return Err(bad("header must be: #sent <id> <n> <dim>"));
            }
            let n: usize = fields[2].parse().map_err(|_| bad("bad token count"))?;
            let d: usize = fields[3].parse().map_err(|_| bad("bad dimension"))?;
            if d == 0 {
                return Err(bad("dimension must be positive"));
            }
            match dim {
                Some(prev) if prev != d => {
                    return Err(bad(&format!("dimension {d} differs from earlier {prev}")))
                }
                _ => dim = Some(d),
            }
            let block = ContextualBlock {
                tokens: Vec::with_capacity(n),
                vectors: Vec::with_capacity(n),
            };
            open = Some((fields[1].to_owned(), n, lineno, block));
            continue;
        }
        let Some((id, n, _, block)) = open.as_mut() else {
            return Err(Error::EmbeddingFormat {
                line: lineno,
                message: "vector line outside a #sent block".into(),
            });
        };
        let d = dim.unwrap_or(0);
        if fields.len() != d + 1 {
            return Err(Error::EmbeddingFormat {
                line: lineno,
                message: format!("expected {} components, found {}", d, fields.len() - 1),
            });
        }
        if block.vectors.len() == *n {
            return Err(Error::EmbeddingFormat {
                line: lineno,
                message: format!("block {id:?} has more than {n} tokens"),
            });
        }
        block.tokens.push(fields[0].to_owned());
        block.vectors.push(parse_components(&fields[1..], lineno)?);
    }
    close(&mut open, &mut blocks)?;
    let dim = dim.ok_or(Error::EmbeddingFormat {
        line: 0,
        message: "no blocks".into(),
    })?;
    Ok(ContextualVectorFile { dim, blocks })
}

pub fn embed_contextual(
    sentence_id: &str,
    tokens: &[Token],
    file: &ContextualVectorFile,
) -> Result<EmbeddedSentence> {
    let block = file
        .block(sentence_id)
        .ok_or_else(|| Error::MissingSentence(sentence_id.to_owned()))?;
    if block.vectors.len() != tokens.len() {
        return Err(Error::Alignment(format!(
            "sentence {sentence_id:?} has {} tokens but {} vectors",
            tokens.len(),
            block.vectors.len()
        )));
    }
    Ok(EmbeddedSentence {
        sentence_id: sentence_id.to_owned(),
        vectors: block.vectors.clone(),
    })
}

/// 64-bit FNV-1a, used to seed per-word vectors.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// A fixed pseudo-random vector per lowercased word, components uniform in
/// `[-1, 1)`. Needs no vector file, so it suits synthetic corpora and
/// smoke tests; every word (seen or not) gets its own vector.
pub fn hashed_vector(word: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.to_lowercase().as_bytes()));
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Where input vectors come from.
#[derive(Clone, Debug)]
pub enum Embedder {
    Static(EmbeddingTable),
    Contextual(ContextualVectorFile),
    Hashed { dim: usize },
}

impl Embedder {
    pub fn dim(&self) -> usize {
        match self {
            Embedder::Static(t) => t.dim(),
            Embedder::Contextual(f) => f.dim(),
            Embedder::Hashed { dim } => *dim,
        }
    }

    pub fn embed(&self, sentence_id: &str, tokens: &[Token]) -> Result<EmbeddedSentence> {
        match self {
            Embedder::Static(t) => Ok(embed_static(sentence_id, tokens, t)),
            Embedder::Contextual(f) => embed_contextual(sentence_id, tokens, f),
            Embedder::Hashed { dim } => Ok(EmbeddedSentence {
                sentence_id: sentence_id.to_owned(),
                vectors: tokens.iter().map(|t| hashed_vector(&t.text, *dim)).collect(),
            }),
        }
    }

    pub fn embed_sentence(&self, ls: &LabeledSentence) -> Result<EmbeddedSentence> {
        self.embed(&ls.id, &ls.tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokens_from;

    #[test]
    fn loads_static_rows() {
        let text = "a 1 2 3 4\nb 0 0 0 0\nc -1 -2 -3 -4\n";
        let t = load_static_embeddings(text.as_bytes(), 4).unwrap();
        assert_eq!(t.len(), 3);
        for w in ["a", "b", "c", "zzz"] {
            assert_eq!(t.lookup(w).len(), 4);
        }
        // a and c cancel
        assert_eq!(t.unk(), &[0.0; 4][..]);
    }

    #[test]
    fn unk_is_the_mean() {
        let t = load_static_embeddings("x 1 0\ny 0 1\nz 2 3\n".as_bytes(), 2).unwrap();
        assert!((t.unk()[0] - 1.0).abs() < 1e-15);
        assert!((t.unk()[1] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn format_errors() {
        match load_static_embeddings("a 1 2\nb 1\n".as_bytes(), 2) {
            Err(Error::EmbeddingFormat { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(load_static_embeddings("a 1 x\n".as_bytes(), 2).is_err());
        assert!(load_static_embeddings("".as_bytes(), 2).is_err());
    }

    #[test]
    fn duplicate_word_keeps_last() {
        let t = load_static_embeddings("a 1\na 5\n".as_bytes(), 1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("a"), Some(&[5.0][..]));
    }

    #[test]
    fn lookup_policy() {
        let t = load_static_embeddings("apple 1 1\nApple 9 9\nIBM 3 3\n".as_bytes(), 2).unwrap();
        let toks = tokens_from(["Apple", "apple", "IBM", "ibm", "pear"]);
        let e = embed_static("s", &toks, &t);
        assert_eq!(e.vectors[0], vec![1.0, 1.0]); // lowercase row wins
        assert_eq!(e.vectors[1], vec![1.0, 1.0]);
        assert_eq!(e.vectors[2], vec![3.0, 3.0]); // exact-case fallback
        assert_eq!(e.vectors[3], t.unk()); // only "IBM" is stored
        assert_eq!(e.vectors[4], t.unk());
        assert_eq!(e.len(), 5);
    }

    const CTX: &str = "#sent s1 2 3\nJoe 1 2 3\nran 4 5 6\n\n#sent s2 1 3\nhi 0 0 1\n";

    #[test]
    fn contextual_blocks() {
        let f = load_contextual(CTX.as_bytes()).unwrap();
        assert_eq!(f.dim(), 3);
        assert_eq!(f.len(), 2);
        let toks = tokens_from(["Joe", "ran"]);
        let a = embed_contextual("s1", &toks, &f).unwrap();
        let b = embed_contextual("s1", &toks, &f).unwrap();
        assert_eq!(a.vectors.len(), 2);
        let bits = |e: &EmbeddedSentence| -> Vec<u64> {
            e.vectors.iter().flatten().map(|x| x.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));

        assert!(matches!(
            embed_contextual("nope", &toks, &f),
            Err(Error::MissingSentence(_))
        ));
        assert!(matches!(
            embed_contextual("s2", &toks, &f),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn contextual_format_errors() {
        // fewer rows than declared
        assert!(load_contextual("#sent a 2 1\nx 1\n".as_bytes()).is_err());
        // dimension drift across blocks
        assert!(load_contextual("#sent a 1 1\nx 1\n\n#sent b 1 2\ny 1 2\n".as_bytes()).is_err());
        // row width differs from header
        assert!(load_contextual("#sent a 1 2\nx 1\n".as_bytes()).is_err());
        assert!(load_contextual("x 1\n".as_bytes()).is_err());
    }

    #[test]
    fn hashed_vectors_are_stable_per_word() {
        let a = hashed_vector("Jobs", 6);
        assert_eq!(a, hashed_vector("jobs", 6));
        assert_ne!(a, hashed_vector("job", 6));
        assert!(a.iter().all(|x| (-1.0..1.0).contains(x)));
        let e = Embedder::Hashed { dim: 6 };
        let s = e.embed("s", &tokens_from(["Jobs", "jobs"])).unwrap();
        assert_eq!(s.vectors[0], s.vectors[1]);
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
