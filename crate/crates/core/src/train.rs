//! Mini-batch training of the BiLSTM-CRF tagger with Adam, plus the
//! trained model's inference entry point.

use std::io::Write;
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint::ModelCheckpoint;
use crate::config::{EmbeddingMode, TrainConfig};
use crate::corpus::{Corpus, Token};
use crate::crf::{nll_loss, viterbi, CrfParams};
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{bilstm_backward_from_trace, bilstm_emissions, bilstm_forward_trace, init_params, BiLstmParams};
use crate::params::{clip_global_norm, ParamSet, TensorView};
use crate::scheme::{build_tag_alphabet, corpus_to_nts, corpus_to_single, TagAlphabet};
use crate::tag::{SchemeKind, TagSequence};

/// Every trainable tensor: encoder first, then CRF.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub bilstm: BiLstmParams,
    pub crf: CrfParams,
}

impl ModelParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, num_tags: usize) -> Self {
        ModelParams {
            bilstm: BiLstmParams::zeros(input_dim, hidden_dim, num_tags),
            crf: CrfParams::zeros(num_tags),
        }
    }

    /// Seeded encoder weights; CRF scores start at zero.
    pub fn init(input_dim: usize, hidden_dim: usize, num_tags: usize, seed: u64) -> Result<Self> {
        Ok(ModelParams {
            bilstm: init_params(input_dim, hidden_dim, num_tags, seed)?,
            crf: CrfParams::zeros(num_tags),
        })
    }

    /// `(input, hidden, tags)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.bilstm.input_dim(), self.bilstm.hidden_dim(), self.crf.num_tags())
    }
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut t = self.bilstm.tensors();
        t.extend(self.crf.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.bilstm.tensors_mut();
        t.extend(self.crf.tensors_mut());
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl From<&TrainConfig> for AdamConfig {
    fn from(c: &TrainConfig) -> Self {
        AdamConfig {
            learning_rate: c.learning_rate,
            beta1: c.adam_beta1,
            beta2: c.adam_beta2,
            epsilon: c.adam_epsilon,
            weight_decay: c.weight_decay,
        }
    }
}

/// First and second moment estimates, flattened in tensor order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_values: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; num_values],
            v: vec![0.0; num_values],
        }
    }
}

/// One bias-corrected Adam update. Weight decay is added to the gradient
/// of decayed tensors before the moments are updated.
pub fn adam_step<P: ParamSet>(params: &mut P, grads: &P, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let n = params.num_values();
    if grads.num_values() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape(format!(
            "adam: {n} parameters, {} gradients, {}/{} moments",
            grads.num_values(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    let grad_views = grads.tensors();
    let decay: Vec<bool> = params.tensors().iter().map(|v| v.decay).collect();
    let mut offset = 0;
    for ((theta, g), decays) in params.tensors_mut().into_iter().zip(&grad_views).zip(decay) {
        let wd = if decays { cfg.weight_decay } else { 0.0 };
        for (i, (p, &gi)) in theta.iter_mut().zip(g.data).enumerate() {
            let j = offset + i;
            let g = gi + wd * *p;
            state.m[j] = cfg.beta1 * state.m[j] + (1.0 - cfg.beta1) * g;
            state.v[j] = cfg.beta2 * state.v[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = state.m[j] / c1;
            let v_hat = state.v[j] / c2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        offset += theta.len();
    }
    Ok(())
}

/// One labelled training sequence with its input vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub sentence_id: String,
    pub inputs: Vec<Vec<f64>>,
    pub gold: Vec<usize>,
}

/// Examples right-padded to the longest in the batch. `mask[i][t]` is
/// false on padding, which never reaches the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    pub sentence_ids: Vec<String>,
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub gold: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
}

impl PaddedBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn width(&self) -> usize {
        self.mask.first().map_or(0, Vec::len)
    }

    fn pad(examples: &[&Example]) -> PaddedBatch {
        let width = examples.iter().map(|e| e.inputs.len()).max().unwrap_or(0);
        let dim = examples
            .iter()
            .find_map(|e| e.inputs.first().map(Vec::len))
            .unwrap_or(0);
        let mut b = PaddedBatch {
            sentence_ids: Vec::with_capacity(examples.len()),
            inputs: Vec::with_capacity(examples.len()),
            gold: Vec::with_capacity(examples.len()),
            mask: Vec::with_capacity(examples.len()),
        };
        for e in examples {
            let n = e.inputs.len();
            let mut xs = e.inputs.clone();
            xs.resize(width, vec![0.0; dim]);
            let mut gold = e.gold.clone();
            gold.resize(width, 0);
            b.sentence_ids.push(e.sentence_id.clone());
            b.inputs.push(xs);
            b.gold.push(gold);
            b.mask.push((0..width).map(|t| t < n).collect());
        }
        b
    }
}

/// The visiting order of `n` examples in `epoch`; a pure function of
/// `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
    }
    order
}

/// Splits the epoch's ordering into padded batches of at most
/// `batch_size`. Every example lands in exactly one batch.
pub fn make_batches(examples: &[Example], batch_size: usize, seed: u64, epoch: usize, shuffle: bool) -> Vec<PaddedBatch> {
    let order = epoch_order(examples.len(), seed, epoch, shuffle);
    order
        .chunks(batch_size.max(1))
        .map(|idx| {
            let picked: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            PaddedBatch::pad(&picked)
        })
        .collect()
}

/// NLL of one sentence and its gradients with respect to every parameter
/// and every input vector.
pub fn sentence_loss_and_grad(
    params: &ModelParams,
    inputs: &[Vec<f64>],
    gold: &[usize],
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<(f64, ModelParams, Vec<Vec<f64>>)> {
    let (em, trace) = bilstm_forward_trace(&params.bilstm, inputs, dropout)?;
    let out = nll_loss(&em, &params.crf, gold)?;
    let (bilstm, d_inputs) = bilstm_backward_from_trace(&params.bilstm, inputs, &trace, &out.grad_emissions)?;
    Ok((
        out.loss,
        ModelParams {
            bilstm,
            crf: out.grad_crf,
        },
        d_inputs,
    ))
}

#[derive(Clone, Debug)]
pub struct BatchGrad {
    /// Mean per-sentence NLL.
    pub loss: f64,
    pub losses: Vec<f64>,
    /// Gradient of the mean loss.
    pub grads: ModelParams,
    /// Gradient of the mean loss with respect to the padded inputs; zero on
    /// padding.
    pub input_grads: Vec<Vec<Vec<f64>>>,
}

/// Mean NLL over a padded batch. Sentences run in parallel and their
/// gradients are summed in batch order, so the result does not depend on
/// scheduling. With `dropout = Some((rate, seed))`, sentence `i` draws its
/// masks from stream `i` of `seed`.
pub fn batch_loss_and_grad(params: &ModelParams, batch: &PaddedBatch, dropout: Option<(f64, u64)>) -> Result<BatchGrad> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let parts: Vec<(f64, ModelParams, Vec<Vec<f64>>)> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let n = batch.mask[i].iter().take_while(|&&m| m).count();
            let xs = &batch.inputs[i][..n];
            let gold = &batch.gold[i][..n];
            match dropout {
                Some((rate, seed)) if rate > 0.0 => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    sentence_loss_and_grad(params, xs, gold, Some((rate, &mut rng)))
                }
                _ => sentence_loss_and_grad(params, xs, gold, None),
            }
        })
        .collect::<Result<_>>()?;

    let (d, h, k) = params.dims();
    let scale = 1.0 / batch.len() as f64;
    let mut grads = ModelParams::zeros(d, h, k);
    let mut losses = Vec::with_capacity(parts.len());
    let mut input_grads = Vec::with_capacity(parts.len());
    for (loss, g, mut dx) in parts {
        grads.add_assign_from(&g);
        losses.push(loss);
        dx.iter_mut().flatten().for_each(|x| *x *= scale);
        dx.resize(batch.width(), vec![0.0; d]);
        input_grads.push(dx);
    }
    grads.scale(scale);
    Ok(BatchGrad {
        loss: losses.iter().sum::<f64>() * scale,
        losses,
        grads,
        input_grads,
    })
}

/// A trained tagger ready for decoding.
#[derive(Clone, Debug)]
pub struct Model {
    pub alphabet: TagAlphabet,
    pub scheme: SchemeKind,
    pub params: ModelParams,
    pub bio_constrained: bool,
    decode_crf: CrfParams,
}

impl Model {
    pub fn new(alphabet: TagAlphabet, scheme: SchemeKind, params: ModelParams, bio_constrained: bool) -> Result<Self> {
        if params.crf.num_tags() != alphabet.len() || params.bilstm.num_tags() != alphabet.len() {
            return Err(Error::Shape(format!(
                "model has {} tags, alphabet has {}",
                params.crf.num_tags(),
                alphabet.len()
            )));
        }
        let decode_crf = if bio_constrained {
            params.crf.bio_constrained(alphabet.tags())
        } else {
            params.crf.clone()
        };
        Ok(Model {
            alphabet,
            scheme,
            params,
            bio_constrained,
            decode_crf,
        })
    }

    pub fn from_checkpoint(cp: &ModelCheckpoint) -> Result<Self> {
        Model::new(cp.alphabet.clone(), cp.scheme, cp.params.clone(), cp.config.bio_constrained)
    }

    pub fn input_dim(&self) -> usize {
        self.params.bilstm.input_dim()
    }

    pub fn emissions(&self, inputs: &[Vec<f64>]) -> Result<Matrix> {
        bilstm_emissions(&self.params.bilstm, inputs)
    }

    pub fn predict_indices(&self, inputs: &[Vec<f64>]) -> Result<Vec<usize>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let em = self.emissions(inputs)?;
        Ok(viterbi(&em, &self.decode_crf)?.0)
    }

    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<TagSequence> {
        let idx = self.predict_indices(inputs)?;
        Ok(self.alphabet.decode(&idx, self.scheme))
    }

    pub fn tag_tokens(&self, embedder: &Embedder, sentence_id: &str, tokens: &[Token]) -> Result<TagSequence> {
        let e = embedder.embed(sentence_id, tokens)?;
        self.predict(&e.vectors)
    }
}

/// Fraction of gold tags the model reproduces.
pub fn token_accuracy(model: &Model, examples: &[Example]) -> Result<f64> {
    let counts: Vec<(usize, usize)> = examples
        .par_iter()
        .map(|e| {
            let p = model.predict_indices(&e.inputs)?;
            Ok((p.iter().zip(&e.gold).filter(|(a, b)| a == b).count(), e.gold.len()))
        })
        .collect::<Result<_>>()?;
    let (hit, total) = counts
        .into_iter()
        .fold((0, 0), |(h, t), (a, b)| (h + a, t + b));
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean per-sentence NLL over the epoch's training batches.
    pub loss: f64,
    /// Token accuracy on the held-out split (the training split when
    /// nothing is held out).
    pub accuracy: f64,
    /// Wall time, or 0 unless `record_timing` is set.
    pub seconds: f64,
}

pub fn write_epoch_csv<W: Write>(reports: &[EpochReport], mut out: W) -> Result<()> {
    writeln!(out, "epoch,loss,accuracy,seconds")?;
    for r in reports {
        writeln!(out, "{},{:.6},{:.6},{:.3}", r.epoch, r.loss, r.accuracy, r.seconds)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub reports: Vec<EpochReport>,
    /// Optimizer steps taken by this call.
    pub steps: u64,
}

/// Training and held-out examples drawn from a corpus.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub alphabet: TagAlphabet,
    pub scheme: SchemeKind,
    pub train: Vec<Example>,
    pub heldout: Vec<Example>,
}

/// Sentence indices held out for evaluation: `⌊n·fraction⌋` of them,
/// always leaving at least one for training.
pub fn heldout_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let count = ((n as f64 * fraction).floor() as usize).min(n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // epochs use streams 1 and up
    rng.set_stream(0);
    order.shuffle(&mut rng);
    let mut held = order[..count].to_vec();
    held.sort_unstable();
    held
}

fn check_embedding(mode: &EmbeddingMode, embedder: &Embedder) -> Result<()> {
    let expected = match (mode, embedder) {
        (EmbeddingMode::Static { dim, .. }, Embedder::Static(_)) => Some(*dim),
        (EmbeddingMode::Hashed { dim }, Embedder::Hashed { .. }) => Some(*dim),
        (EmbeddingMode::Contextual { .. }, Embedder::Contextual(_)) => None,
        _ => {
            return Err(Error::Setup(format!(
                "configured embedding {mode} does not match the supplied vector source"
            )))
        }
    };
    match expected {
        Some(d) if d != embedder.dim() => Err(Error::Setup(format!(
            "configured embedding dimension {d}, vectors have {}",
            embedder.dim()
        ))),
        _ => Ok(()),
    }
}

/// Converts the corpus to the configured scheme, builds the alphabet,
/// embeds every sentence and splits off the held-out sentences.
pub fn prepare(corpus: &Corpus, embedder: &Embedder, config: &TrainConfig) -> Result<PreparedData> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus.validate()?;
    let converted;
    let corpus = match config.scheme {
        Some(SchemeKind::Nts) if corpus.scheme == SchemeKind::Single => {
            converted = corpus_to_nts(corpus)?;
            &converted
        }
        Some(SchemeKind::Single) if corpus.scheme == SchemeKind::Nts => {
            converted = corpus_to_single(corpus)?;
            &converted
        }
        _ => corpus,
    };
    check_embedding(&config.embedding, embedder)?;
    let alphabet = build_tag_alphabet(corpus)?;
    let held = heldout_indices(corpus.len(), config.holdout, config.seed);
    let mut data = PreparedData {
        alphabet,
        scheme: corpus.scheme,
        train: Vec::new(),
        heldout: Vec::new(),
    };
    for (i, ls) in corpus.items.iter().enumerate() {
        let e = embedder
            .embed_sentence(ls)
            .map_err(|e| Error::Setup(format!("sentence {}: {e}", ls.id)))?;
        let dest = if held.binary_search(&i).is_ok() {
            &mut data.heldout
        } else {
            &mut data.train
        };
        for seq in &ls.sequences {
            dest.push(Example {
                sentence_id: ls.id.clone(),
                inputs: e.vectors.clone(),
                gold: data.alphabet.encode(seq)?,
            });
        }
    }
    Ok(data)
}

/// Trains from freshly initialised parameters.
pub fn train(corpus: &Corpus, embedder: &Embedder, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let data = prepare(corpus, embedder, config)?;
    let params = ModelParams::init(embedder.dim(), config.hidden_dim, data.alphabet.len(), config.seed)?;
    let adam = AdamState::new(params.num_values());
    let cp = ModelCheckpoint {
        alphabet: data.alphabet.clone(),
        scheme: data.scheme,
        params,
        config: config.clone(),
        epochs_completed: 0,
        optimizer: Some(adam),
    };
    run_epochs(cp, &data)
}

/// Continues a checkpoint's run up to `config.epochs`, using the
/// checkpoint's own configuration otherwise. Because batching and dropout
/// depend only on `(seed, epoch)`, resuming gives the same result as an
/// uninterrupted run.
pub fn resume(checkpoint: ModelCheckpoint, corpus: &Corpus, embedder: &Embedder, epochs: usize) -> Result<TrainOutcome> {
    let mut cp = checkpoint;
    cp.config.epochs = epochs;
    cp.config.validate()?;
    let data = prepare(corpus, embedder, &cp.config)?;
    if data.alphabet != cp.alphabet {
        return Err(Error::Setup(format!(
            "corpus tags [{}] differ from the checkpoint's [{}]",
            data.alphabet, cp.alphabet
        )));
    }
    if cp.params.dims().0 != embedder.dim() {
        return Err(Error::Setup(format!(
            "checkpoint expects {}-dimensional inputs, vectors have {}",
            cp.params.dims().0,
            embedder.dim()
        )));
    }
    run_epochs(cp, &data)
}

fn dropout_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed ^ (epoch as u64).rotate_left(32) ^ (batch as u64).rotate_left(48) ^ 0x5eed
}

fn run_epochs(mut cp: ModelCheckpoint, data: &PreparedData) -> Result<TrainOutcome> {
    let cfg = cp.config.clone();
    let adam_cfg = AdamConfig::from(&cfg);
    let mut adam = cp
        .optimizer
        .take()
        .unwrap_or_else(|| AdamState::new(cp.params.num_values()));
    if data.train.is_empty() {
        return Err(Error::Setup("no training sentences after the held-out split".into()));
    }
    info!(
        "training on {} sequences ({} held out), {} tags, dims {:?}",
        data.train.len(),
        data.heldout.len(),
        data.alphabet.len(),
        cp.params.dims()
    );
    let mut reports = Vec::new();
    let mut steps = 0;
    for epoch in cp.epochs_completed + 1..=cfg.epochs {
        let started = Instant::now();
        let batches = make_batches(&data.train, cfg.batch_size, cfg.seed, epoch, cfg.shuffle);
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let dropout = (cfg.dropout > 0.0).then(|| (cfg.dropout, dropout_seed(cfg.seed, epoch, b)));
            let mut bg = batch_loss_and_grad(&cp.params, batch, dropout)?;
            if !bg.loss.is_finite() || !bg.grads.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b + 1,
                    what: "loss",
                });
            }
            let norm = clip_global_norm(&mut bg.grads, cfg.grad_clip_norm);
            debug!("epoch {epoch} batch {} loss {:.6} grad norm {norm:.4}", b + 1, bg.loss);
            adam_step(&mut cp.params, &bg.grads, &mut adam, &adam_cfg)?;
            steps += 1;
            if !cp.params.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b + 1,
                    what: "parameters",
                });
            }
            loss_sum += bg.losses.iter().sum::<f64>();
        }
        cp.epochs_completed = epoch;
        let model = Model::new(cp.alphabet.clone(), cp.scheme, cp.params.clone(), cfg.bio_constrained)?;
        let eval_set = if data.heldout.is_empty() { &data.train } else { &data.heldout };
        let accuracy = token_accuracy(&model, eval_set)?;
        let loss = loss_sum / data.train.len() as f64;
        let elapsed = started.elapsed().as_secs_f64();
        info!("epoch {epoch}: loss {loss:.6} accuracy {accuracy:.4} ({elapsed:.2}s)");
        reports.push(EpochReport {
            epoch,
            loss,
            accuracy,
            seconds: if cfg.record_timing { elapsed } else { 0.0 },
        });
    }
    cp.optimizer = Some(adam);
    Ok(TrainOutcome {
        checkpoint: cp,
        reports,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledSentence;
    use crate::synth::word_tag_corpus;
    use rand::Rng;

    fn adam(lr: f64, wd: f64) -> AdamConfig {
        AdamConfig {
            learning_rate: lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: wd,
        }
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut theta = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut theta, &vec![1.0], &mut s, &adam(0.01, 0.0)).unwrap();
        assert!((theta[0] - -0.01 / (1.0 + 1e-8)).abs() < 1e-15);

        let mut theta = vec![0.3, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut theta, &vec![0.0, 0.0], &mut s, &adam(0.01, 0.0)).unwrap();
        assert_eq!(theta, vec![0.3, -2.0]);
    }

    #[test]
    fn adam_five_step_trajectory() {
        // θ₀ = 0.5, lr 0.1; reference values from a separate scalar
        // implementation of the recurrence
        let grads = [1.0, -0.5, 2.0, 0.25, -1.5];
        let plain = [
            0.400000001,
            0.37336629737090316,
            0.3075551378428032,
            0.24765746414613296,
            0.23501918247711678,
        ];
        let decayed = [
            0.40000000099502486,
            0.3728657630434456,
            0.30686892375262487,
            0.24676263741943086,
            0.23385042883900603,
        ];
        for (wd, expected) in [(0.0, plain), (0.01, decayed)] {
            let mut theta = vec![0.5];
            let mut s = AdamState::new(1);
            for (g, e) in grads.iter().zip(expected) {
                adam_step(&mut theta, &vec![*g], &mut s, &adam(0.1, wd)).unwrap();
                assert!((theta[0] - e).abs() < 1e-12, "wd {wd}: {} vs {e}", theta[0]);
            }
        }
    }

    #[test]
    fn adam_skips_decay_on_biases() {
        let mut p = ModelParams::init(2, 2, 3, 4).unwrap();
        p.crf.start = vec![1.0; 3];
        let zero = ModelParams::zeros(2, 2, 3);
        let before = p.clone();
        let mut s = AdamState::new(p.num_values());
        adam_step(&mut p, &zero, &mut s, &adam(0.1, 0.5)).unwrap();
        assert_eq!(p.crf.start, before.crf.start);
        assert_eq!(p.bilstm.forward.forget.bias, before.bilstm.forward.forget.bias);
        assert_ne!(p.bilstm.projection, before.bilstm.projection);
        assert!(adam_step(&mut p, &ModelParams::zeros(2, 2, 4), &mut s, &adam(0.1, 0.0)).is_err());
    }

    fn examples(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let len = rng.gen_range(1..6);
                Example {
                    sentence_id: format!("e{i}"),
                    inputs: (0..len).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
                    gold: (0..len).map(|_| rng.gen_range(0..3)).collect(),
                }
            })
            .collect()
    }

    #[test]
    fn batches_cover_every_example_once() {
        let ex = examples(23, 1);
        let batches = make_batches(&ex, 5, 9, 3, true);
        assert_eq!(batches.len(), 5);
        let mut ids: Vec<String> = batches.iter().flat_map(|b| b.sentence_ids.clone()).collect();
        ids.sort();
        let mut expected: Vec<String> = ex.iter().map(|e| e.sentence_id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);
        for b in &batches {
            for (i, m) in b.mask.iter().enumerate() {
                assert_eq!(m.len(), b.width());
                let n = m.iter().filter(|&&x| x).count();
                assert!(m[..n].iter().all(|&x| x));
                assert_eq!(b.inputs[i].len(), b.width());
            }
        }

        let one = make_batches(&ex[..1], 50, 1, 1, true);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 1);
    }

    #[test]
    fn permutations_depend_on_seed_and_epoch() {
        assert_eq!(epoch_order(100, 1, 1, true), epoch_order(100, 1, 1, true));
        assert_ne!(epoch_order(100, 1, 1, true), epoch_order(100, 1, 2, true));
        assert_ne!(epoch_order(100, 1, 1, true), epoch_order(100, 2, 1, true));
        assert_eq!(epoch_order(5, 1, 1, false), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn padding_gets_zero_gradient() {
        let mut ex = examples(2, 5);
        ex[0].inputs.truncate(1);
        ex[0].gold.truncate(1);
        ex[1].inputs = (0..4).map(|t| vec![0.1 * t as f64, -0.2, 0.3]).collect();
        ex[1].gold = vec![0, 1, 2, 1];
        let batch = make_batches(&ex, 2, 0, 1, false).remove(0);
        assert_eq!(batch.width(), 4);
        let params = ModelParams::init(3, 2, 3, 11).unwrap();
        let bg = batch_loss_and_grad(&params, &batch, None).unwrap();
        assert!(bg.input_grads[0][1..].iter().flatten().all(|&g| g == 0.0));

        let eps = 1e-5;
        for t in 1..4 {
            for c in 0..3 {
                let mut probe = batch.clone();
                probe.inputs[0][t][c] += eps;
                let plus = batch_loss_and_grad(&params, &probe, None).unwrap().loss;
                probe.inputs[0][t][c] -= 2.0 * eps;
                let minus = batch_loss_and_grad(&params, &probe, None).unwrap().loss;
                assert_eq!((plus - minus) / (2.0 * eps), 0.0);
            }
        }
        // and an unpadded entry does move the loss
        let mut probe = batch.clone();
        probe.inputs[0][0][0] += 1e-3;
        assert_ne!(batch_loss_and_grad(&params, &probe, None).unwrap().loss, bg.loss);
    }

    #[test]
    fn batch_gradient_is_mean_of_sentences() {
        let ex = examples(3, 8);
        let batch = make_batches(&ex, 3, 0, 1, false).remove(0);
        let params = ModelParams::init(3, 2, 3, 2).unwrap();
        let bg = batch_loss_and_grad(&params, &batch, None).unwrap();
        let mut sum = ModelParams::zeros(3, 2, 3);
        let mut loss = 0.0;
        for e in &ex {
            let (l, g, _) = sentence_loss_and_grad(&params, &e.inputs, &e.gold, None).unwrap();
            sum.add_assign_from(&g);
            loss += l;
        }
        sum.scale(1.0 / 3.0);
        assert!((bg.loss - loss / 3.0).abs() < 1e-12);
        for (a, b) in bg.grads.to_flat().iter().zip(sum.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            hidden_dim: 4,
            epochs: 3,
            embedding: EmbeddingMode::Hashed { dim: 5 },
            ..TrainConfig::default()
        }
    }

    fn one_sentence() -> Corpus {
        Corpus {
            items: vec![LabeledSentence::new(
                "only",
                &["Jobs", "founded", "Apple"],
                vec![TagSequence::parse("A0-B P-B A1-B").unwrap()],
            )],
            scheme: SchemeKind::Single,
        }
    }

    #[test]
    fn one_sentence_one_step() {
        let mut cfg = tiny_config();
        cfg.epochs = 1;
        let out = train(&one_sentence(), &Embedder::Hashed { dim: 5 }, &cfg).unwrap();
        assert_eq!(out.steps, 1);
        assert_eq!(out.checkpoint.optimizer.as_ref().unwrap().step, 1);
        assert_eq!(out.reports.len(), 1);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut cfg = tiny_config();
        cfg.learning_rate = 0.0;
        let emb = Embedder::Hashed { dim: 5 };
        let out = train(&one_sentence(), &emb, &cfg).unwrap();
        let fresh = ModelParams::init(5, 4, out.checkpoint.alphabet.len(), cfg.seed).unwrap();
        assert_eq!(out.checkpoint.params, fresh);
    }

    #[test]
    fn setup_errors() {
        let cfg = tiny_config();
        assert!(matches!(
            train(&one_sentence(), &Embedder::Hashed { dim: 6 }, &cfg),
            Err(Error::Setup(_))
        ));
        let empty = Corpus {
            items: vec![],
            scheme: SchemeKind::Single,
        };
        assert!(matches!(
            train(&empty, &Embedder::Hashed { dim: 5 }, &cfg),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn divergence_names_the_batch() {
        let mut cfg = tiny_config();
        cfg.learning_rate = f64::MAX;
        cfg.grad_clip_norm = f64::MAX;
        match train(&one_sentence(), &Embedder::Hashed { dim: 5 }, &cfg) {
            // Adam moves each value by about lr, so the first step still
            // leaves finite parameters and the loss blows up one epoch later
            Err(Error::Diverged { epoch, batch, what }) => assert_eq!((epoch, batch, what), (2, 1, "loss")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn heldout_split() {
        let h = heldout_indices(20, 0.1, 3);
        assert_eq!(h.len(), 2);
        assert_eq!(h, heldout_indices(20, 0.1, 3));
        assert!(heldout_indices(1, 0.5, 3).is_empty());
        assert_eq!(heldout_indices(10, 0.0, 3), Vec::<usize>::new());
    }

    #[test]
    fn resumed_run_matches_uninterrupted_run() {
        let corpus = word_tag_corpus(8, 2);
        let emb = Embedder::Hashed { dim: 5 };
        let mut cfg = tiny_config();
        cfg.batch_size = 3;
        cfg.dropout = 0.2;
        cfg.epochs = 4;
        let full = train(&corpus, &emb, &cfg).unwrap();
        cfg.epochs = 2;
        let half = train(&corpus, &emb, &cfg).unwrap();
        let rest = resume(half.checkpoint, &corpus, &emb, 4).unwrap();
        assert_eq!(rest.checkpoint, full.checkpoint);
        assert_eq!(rest.reports[..], full.reports[2..]);
    }

    #[test]
    fn epoch_csv_layout() {
        let r = [EpochReport {
            epoch: 1,
            loss: 2.5,
            accuracy: 0.75,
            seconds: 0.0,
        }];
        let mut out = Vec::new();
        write_epoch_csv(&r, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,loss,accuracy,seconds\n1,2.500000,0.750000,0.000\n");
    }

    #[test]
    fn model_predicts_scheme_tags() {
        let cfg = tiny_config();
        let out = train(&one_sentence(), &Embedder::Hashed { dim: 5 }, &cfg).unwrap();
        let model = Model::from_checkpoint(&out.checkpoint).unwrap();
        let seq = model.predict(&vec![vec![0.1; 5]; 4]).unwrap();
        assert_eq!(seq.len(), 4);
        assert_eq!(seq.scheme, SchemeKind::Single);
        assert!(model.predict(&[]).unwrap().is_empty());
    }
}
