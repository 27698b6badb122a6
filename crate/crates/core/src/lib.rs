//! Open relation extraction with a BiLSTM-CRF tagger.
//!
//! Sentences are tagged token by token with argument and predicate labels,
//! either one relation per tagging sequence (`SchemeKind::Single`) or all
//! relations of a sentence in one sequence with ordered predicate indices
//! (`SchemeKind::Nts`). The crate covers corpus I/O and conversion between
//! the two schemes, the network and CRF with exact gradients, training,
//! checkpoints and evaluation.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod crf;
pub mod embed;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod net;
pub mod params;
pub mod scheme;
pub mod synth;
pub mod tag;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint};
pub use config::{parse_config, render_config, EmbeddingMode, TrainConfig};
pub use corpus::{
    corpus_stats, parse_conll, parse_conll_with, to_conll_string, write_conll, Corpus, LabeledSentence,
    ParseLog, ParseOptions, Stats, Token,
};
pub use crf::{log_partition, nll_loss, score_path, viterbi, CrfParams};
pub use embed::{load_contextual, load_static_embeddings, Embedder, EmbeddingTable};
pub use error::{Error, Result};
pub use eval::{evaluate, filter_predictions, pms, prf_relation, prf_token, EvalReport, FilterLists, Metrics, PmsReport};
pub use linalg::Matrix;
pub use net::{bilstm_emissions, init_params, BiLstmParams};
pub use scheme::{
    corpus_to_nts, corpus_to_single, detect_overlap, explode_from_nts, extract_relations, merge_to_nts,
    RelationSpan, TagAlphabet,
};
pub use tag::{validate_bio, Boundary, SchemeKind, Tag, TagSequence};
pub use train::{adam_step, make_batches, train, EpochReport, Model, ModelParams, TrainOutcome};
