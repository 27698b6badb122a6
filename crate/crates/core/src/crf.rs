//! Linear-chain CRF over emission matrices.
//!
//! A path `y` over a sentence of length `n` scores
//! `start[y₀] + Σ emit[t][yₜ] + Σ trans[yₜ][yₜ₊₁] + stop[yₙ₋₁]`.

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, Matrix};
use crate::params::{ParamSet, TensorView};
use crate::tag::Tag;

/// Score given to forbidden transitions under constrained decoding.
pub const FORBIDDEN: f64 = -1e4;

#[derive(Clone, Debug, PartialEq)]
pub struct CrfParams {
    /// `transitions[a][b]`: score of tag `a` followed by tag `b`.
    pub transitions: Matrix,
    pub start: Vec<f64>,
    pub stop: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(num_tags: usize) -> Self {
        CrfParams {
            transitions: Matrix::zeros(num_tags, num_tags),
            start: vec![0.0; num_tags],
            stop: vec![0.0; num_tags],
        }
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    /// Copy with BIO-invalid transitions and starts set to [`FORBIDDEN`].
    /// `tags` lists the alphabet in index order.
    pub fn bio_constrained(&self, tags: &[Tag]) -> CrfParams {
        let mut out = self.clone();
        for (b, &to) in tags.iter().enumerate() {
            if !to.may_follow(None) {
                out.start[b] = FORBIDDEN;
            }
            for (a, &from) in tags.iter().enumerate() {
                if !to.may_follow(Some(from)) {
                    out.transitions.set(a, b, FORBIDDEN);
                }
            }
        }
        out
    }

    fn check(&self, emissions: &Matrix) -> Result<()> {
        let k = self.num_tags();
        if self.transitions.shape() != (k, k) || self.stop.len() != k {
            return Err(Error::Shape("inconsistent CRF parameter shapes".into()));
        }
        if emissions.cols() != k {
            return Err(Error::Shape(format!(
                "emissions have {} columns, CRF has {k} tags",
                emissions.cols()
            )));
        }
        if emissions.rows() == 0 {
            return Err(Error::Shape("empty emission matrix".into()));
        }
        Ok(())
    }
}

impl ParamSet for CrfParams {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        let k = self.num_tags();
        vec![
            TensorView {
                name: "crf.transitions".into(),
                shape: vec![k, k],
                data: self.transitions.as_slice(),
                decay: true,
            },
            TensorView {
                name: "crf.start".into(),
                shape: vec![k],
                data: &self.start,
                decay: false,
            },
            TensorView {
                name: "crf.stop".into(),
                shape: vec![k],
                data: &self.stop,
                decay: false,
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.transitions.as_mut_slice(),
            &mut self.start,
            &mut self.stop,
        ]
    }
}

pub fn score_path(emissions: &Matrix, crf: &CrfParams, tags: &[usize]) -> Result<f64> {
    crf.check(emissions)?;
    let k = crf.num_tags();
    if tags.len() != emissions.rows() {
        return Err(Error::Argument(format!(
            "path has {} tags for {} positions",
            tags.len(),
            emissions.rows()
        )));
    }
    if let Some(&bad) = tags.iter().find(|&&t| t >= k) {
        return Err(Error::Argument(format!("tag index {bad} out of range (k = {k})")));
    }
    let mut s = crf.start[tags[0]] + crf.stop[tags[tags.len() - 1]];
    for (t, &y) in tags.iter().enumerate() {
        s += emissions.get(t, y);
    }
    for w in tags.windows(2) {
        s += crf.transitions.get(w[0], w[1]);
    }
    Ok(s)
}

/// Forward log-scores `alpha[t][j]`: log-sum over prefixes ending in `j`.
fn forward_scores(emissions: &Matrix, crf: &CrfParams) -> Vec<Vec<f64>> {
    let (n, k) = emissions.shape();
    let mut alpha = vec![vec![0.0; k]; n];
    for j in 0..k {
        alpha[0][j] = crf.start[j] + emissions.get(0, j);
    }
    let mut buf = vec![0.0; k];
    for t in 1..n {
        for j in 0..k {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = alpha[t - 1][i] + crf.transitions.get(i, j);
            }
            alpha[t][j] = emissions.get(t, j) + log_sum_exp(&buf);
        }
    }
    alpha
}

/// Backward log-scores `beta[t][i]`: log-sum over suffixes after `i`.
fn backward_scores(emissions: &Matrix, crf: &CrfParams) -> Vec<Vec<f64>> {
    let (n, k) = emissions.shape();
    let mut beta = vec![vec![0.0; k]; n];
    beta[n - 1].copy_from_slice(&crf.stop);
    let mut buf = vec![0.0; k];
    for t in (0..n - 1).rev() {
        for i in 0..k {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = crf.transitions.get(i, j) + emissions.get(t + 1, j) + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&buf);
        }
    }
    beta
}

fn final_log_z(alpha_last: &[f64], stop: &[f64]) -> f64 {
    let last: Vec<f64> = alpha_last.iter().zip(stop).map(|(a, s)| a + s).collect();
    log_sum_exp(&last)
}

/// Log of the summed exponentiated scores of all `kⁿ` paths.
pub fn log_partition(emissions: &Matrix, crf: &CrfParams) -> Result<f64> {
    crf.check(emissions)?;
    let alpha = forward_scores(emissions, crf);
    Ok(final_log_z(&alpha[alpha.len() - 1], &crf.stop))
}

#[derive(Clone, Debug)]
pub struct NllOutput {
    pub loss: f64,
    pub grad_emissions: Matrix,
    pub grad_crf: CrfParams,
}

/// Negative log-likelihood of `gold` and its exact gradients (expected
/// feature counts minus gold counts) by forward-backward.
pub fn nll_loss(emissions: &Matrix, crf: &CrfParams, gold: &[usize]) -> Result<NllOutput> {
    let gold_score = score_path(emissions, crf, gold)?;
    let (n, k) = emissions.shape();
    let alpha = forward_scores(emissions, crf);
    let beta = backward_scores(emissions, crf);
    let log_z = final_log_z(&alpha[n - 1], &crf.stop);

    let mut grad_emissions = Matrix::zeros(n, k);
    let mut grad_crf = CrfParams::zeros(k);
    for t in 0..n {
        for j in 0..k {
            let p = (alpha[t][j] + beta[t][j] - log_z).exp();
            grad_emissions.set(t, j, p);
        }
    }
    for j in 0..k {
        grad_crf.start[j] = grad_emissions.get(0, j);
        grad_crf.stop[j] = grad_emissions.get(n - 1, j);
    }
    for t in 0..n.saturating_sub(1) {
        for i in 0..k {
            for j in 0..k {
                let p = (alpha[t][i]
                    + crf.transitions.get(i, j)
                    + emissions.get(t + 1, j)
                    + beta[t + 1][j]
                    - log_z)
                    .exp();
                let g = grad_crf.transitions.get(i, j) + p;
                grad_crf.transitions.set(i, j, g);
            }
        }
    }

    for (t, &y) in gold.iter().enumerate() {
        let v = grad_emissions.get(t, y);
        grad_emissions.set(t, y, v - 1.0);
    }
    grad_crf.start[gold[0]] -= 1.0;
    grad_crf.stop[gold[n - 1]] -= 1.0;
    for w in gold.windows(2) {
        let v = grad_crf.transitions.get(w[0], w[1]);
        grad_crf.transitions.set(w[0], w[1], v - 1.0);
    }

    Ok(NllOutput {
        loss: (log_z - gold_score).max(0.0),
        grad_emissions,
        grad_crf,
    })
}

/// Highest-scoring path and its score. Ties go to the lowest tag index at
/// every backtracking step.
pub fn viterbi(emissions: &Matrix, crf: &CrfParams) -> Result<(Vec<usize>, f64)> {
    crf.check(emissions)?;
    let (n, k) = emissions.shape();
    let mut delta: Vec<f64> = (0..k).map(|j| crf.start[j] + emissions.get(0, j)).collect();
    let mut back = vec![vec![0usize; k]; n];
    for (t, bp) in back.iter_mut().enumerate().skip(1) {
        let mut next = vec![0.0; k];
        for j in 0..k {
            let mut best = 0;
            let mut best_score = delta[0] + crf.transitions.get(0, j);
            for (i, &d) in delta.iter().enumerate().skip(1) {
                let s = d + crf.transitions.get(i, j);
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            bp[j] = best;
            next[j] = best_score + emissions.get(t, j);
        }
        delta = next;
    }
    let mut last = 0;
    let mut last_score = delta[0] + crf.stop[0];
    for j in 1..k {
        let s = delta[j] + crf.stop[j];
        if s > last_score {
            last = j;
            last_score = s;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    let score = score_path(emissions, crf, &path)?;
    Ok((path, score))
}
