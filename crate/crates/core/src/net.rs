//! Bidirectional LSTM encoder producing per-token emission scores, with
//! exact backpropagation through time.
//!
//! Each direction runs the standard gated cell
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)   o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```
//!
//! from zero initial states. The forward direction walks positions
//! `0..n`, the backward direction `n-1..=0`. Emissions are a linear map of
//! the concatenated hidden states.

use num_traits::Float;
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};
use crate::params::{ParamSet, TensorView};

/// Parameters of one gate.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate<T = f64> {
    /// hidden × input
    pub w_input: Matrix<T>,
    /// hidden × hidden
    pub w_hidden: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Float> Gate<T> {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Gate {
            w_input: Matrix::zeros(hidden_dim, input_dim),
            w_hidden: Matrix::zeros(hidden_dim, hidden_dim),
            bias: vec![T::zero(); hidden_dim],
        }
    }

    /// `W x + U h + b`
    fn preactivation(&self, x: &[T], h: &[T]) -> Vec<T> {
        let mut a = self.bias.clone();
        self.w_input.mul_vec_add(x, &mut a);
        self.w_hidden.mul_vec_add(h, &mut a);
        a
    }

    fn cast<U: Float>(&self) -> Gate<U> {
        Gate {
            w_input: self.w_input.cast(),
            w_hidden: self.w_hidden.cast(),
            bias: self.bias.iter().map(|&b| U::from(b).unwrap()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T = f64> {
    pub input: Gate<T>,
    pub forget: Gate<T>,
    pub cell: Gate<T>,
    pub output: Gate<T>,
}

impl<T: Float> LstmParams<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            input: Gate::zeros(input_dim, hidden_dim),
            forget: Gate::zeros(input_dim, hidden_dim),
            cell: Gate::zeros(input_dim, hidden_dim),
            output: Gate::zeros(input_dim, hidden_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input.w_input.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.input.bias.len()
    }

    fn gates(&self) -> [(&'static str, &Gate<T>); 4] {
        [
            ("input", &self.input),
            ("forget", &self.forget),
            ("cell", &self.cell),
            ("output", &self.output),
        ]
    }

    fn gates_mut(&mut self) -> [&mut Gate<T>; 4] {
        [
            &mut self.input,
            &mut self.forget,
            &mut self.cell,
            &mut self.output,
        ]
    }

    pub fn cast<U: Float>(&self) -> LstmParams<U> {
        LstmParams {
            input: self.input.cast(),
            forget: self.forget.cast(),
            cell: self.cell.cast(),
            output: self.output.cast(),
        }
    }
}

impl LstmParams<f64> {
    fn views<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        for (name, g) in self.gates() {
            let h = g.bias.len();
            out.push(TensorView {
                name: format!("{prefix}.{name}.w_input"),
                shape: vec![h, g.w_input.cols()],
                data: g.w_input.as_slice(),
                decay: true,
            });
            out.push(TensorView {
                name: format!("{prefix}.{name}.w_hidden"),
                shape: vec![h, h],
                data: g.w_hidden.as_slice(),
                decay: true,
            });
            out.push(TensorView {
                name: format!("{prefix}.{name}.bias"),
                shape: vec![h],
                data: &g.bias,
                decay: false,
            });
        }
    }

    fn views_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        for g in self.gates_mut() {
            out.push(g.w_input.as_mut_slice());
            out.push(g.w_hidden.as_mut_slice());
            out.push(&mut g.bias);
        }
    }
}

impl ParamSet for LstmParams<f64> {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        self.views("lstm", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.views_mut(&mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams<T = f64> {
    pub forward: LstmParams<T>,
    pub backward: LstmParams<T>,
    /// tags × 2·hidden
    pub projection: Matrix<T>,
    pub projection_bias: Vec<T>,
}

impl<T: Float> BiLstmParams<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize, num_tags: usize) -> Self {
        BiLstmParams {
            forward: LstmParams::zeros(input_dim, hidden_dim),
            backward: LstmParams::zeros(input_dim, hidden_dim),
            projection: Matrix::zeros(num_tags, 2 * hidden_dim),
            projection_bias: vec![T::zero(); num_tags],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    pub fn num_tags(&self) -> usize {
        self.projection_bias.len()
    }

    /// Lower-precision copy for fast inference.
    pub fn cast<U: Float>(&self) -> BiLstmParams<U> {
        BiLstmParams {
            forward: self.forward.cast(),
            backward: self.backward.cast(),
            projection: self.projection.cast(),
            projection_bias: self
                .projection_bias
                .iter()
                .map(|&b| U::from(b).unwrap())
                .collect(),
        }
    }

    fn check(&self) -> Result<()> {
        let (d, h) = (self.input_dim(), self.hidden_dim());
        if self.backward.input_dim() != d || self.backward.hidden_dim() != h {
            return Err(Error::Shape("forward and backward LSTMs differ in shape".into()));
        }
        if self.projection.shape() != (self.num_tags(), 2 * h) {
            return Err(Error::Shape(format!(
                "projection is {:?}, expected ({}, {})",
                self.projection.shape(),
                self.num_tags(),
                2 * h
            )));
        }
        Ok(())
    }
}

impl ParamSet for BiLstmParams<f64> {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        self.forward.views("lstm.fwd", &mut out);
        self.backward.views("lstm.bwd", &mut out);
        out.push(TensorView {
            name: "proj.weight".into(),
            shape: vec![self.projection.rows(), self.projection.cols()],
            data: self.projection.as_slice(),
            decay: true,
        });
        out.push(TensorView {
            name: "proj.bias".into(),
            shape: vec![self.projection_bias.len()],
            data: &self.projection_bias,
            decay: false,
        });
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.forward.views_mut(&mut out);
        self.backward.views_mut(&mut out);
        out.push(self.projection.as_mut_slice());
        out.push(&mut self.projection_bias);
        out
    }
}

/// Deterministic initialization: weights uniform in `±√(1/hidden)`,
/// forget-gate biases 1, other biases 0.
pub fn init_params(
    input_dim: usize,
    hidden_dim: usize,
    num_tags: usize,
    seed: u64,
) -> Result<BiLstmParams> {
    if input_dim == 0 || hidden_dim == 0 || num_tags == 0 {
        return Err(Error::Argument(format!(
            "dimensions must be positive (input {input_dim}, hidden {hidden_dim}, tags {num_tags})"
        )));
    }
    let bound = (1.0 / hidden_dim as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = BiLstmParams::zeros(input_dim, hidden_dim, num_tags);
    for lstm in [&mut p.forward, &mut p.backward] {
        for g in lstm.gates_mut() {
            fill(&mut rng, &dist, g.w_input.as_mut_slice());
            fill(&mut rng, &dist, g.w_hidden.as_mut_slice());
        }
        lstm.forget.bias.iter_mut().for_each(|b| *b = 1.0);
    }
    fill(&mut rng, &dist, p.projection.as_mut_slice());
    Ok(p)
}

fn fill<R: Rng>(rng: &mut R, dist: &Uniform<f64>, xs: &mut [f64]) {
    for x in xs {
        *x = dist.sample(rng);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn order(self, n: usize) -> Box<dyn Iterator<Item = usize>> {
        match self {
            Direction::Forward => Box::new(0..n),
            Direction::Backward => Box::new((0..n).rev()),
        }
    }
}

/// Activations of one step, indexed by sentence position.
#[derive(Clone, Debug)]
struct Step<T> {
    i: Vec<T>,
    f: Vec<T>,
    g: Vec<T>,
    o: Vec<T>,
    c: Vec<T>,
    tanh_c: Vec<T>,
    h: Vec<T>,
}

#[derive(Clone, Debug)]
struct LstmTrace<T> {
    direction: Direction,
    steps: Vec<Step<T>>,
}

fn check_inputs<T: Float>(p: &LstmParams<T>, xs: &[Vec<T>]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Shape("empty input sequence".into()));
    }
    if let Some((t, x)) = xs.iter().enumerate().find(|(_, x)| x.len() != p.input_dim()) {
        return Err(Error::Shape(format!(
            "input {t} has dimension {}, expected {}",
            x.len(),
            p.input_dim()
        )));
    }
    Ok(())
}

fn run_lstm<T: Float>(p: &LstmParams<T>, xs: &[Vec<T>], direction: Direction) -> LstmTrace<T> {
    let hd = p.hidden_dim();
    let n = xs.len();
    let mut slots: Vec<Option<Step<T>>> = vec![None; n];
    let mut h_prev = vec![T::zero(); hd];
    let mut c_prev = vec![T::zero(); hd];
    for t in direction.order(n) {
        let x = &xs[t];
        let i: Vec<T> = p.input.preactivation(x, &h_prev).into_iter().map(sigmoid).collect();
        let f: Vec<T> = p.forget.preactivation(x, &h_prev).into_iter().map(sigmoid).collect();
        let g: Vec<T> = p.cell.preactivation(x, &h_prev).into_iter().map(T::tanh).collect();
        let o: Vec<T> = p.output.preactivation(x, &h_prev).into_iter().map(sigmoid).collect();
        let c: Vec<T> = (0..hd).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
        let tanh_c: Vec<T> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<T> = (0..hd).map(|j| o[j] * tanh_c[j]).collect();
        h_prev.clone_from(&h);
        c_prev.clone_from(&c);
        slots[t] = Some(Step {
            i,
            f,
            g,
            o,
            c,
            tanh_c,
            h,
        });
    }
    LstmTrace {
        direction,
        steps: slots.into_iter().map(Option::unwrap).collect(),
    }
}

/// Hidden states of one direction, indexed by sentence position.
pub fn lstm_forward<T: Float>(
    p: &LstmParams<T>,
    xs: &[Vec<T>],
    direction: Direction,
) -> Result<Vec<Vec<T>>> {
    check_inputs(p, xs)?;
    Ok(run_lstm(p, xs, direction)
        .steps
        .into_iter()
        .map(|s| s.h)
        .collect())
}

/// Backpropagation through time. `d_hidden[t]` is the loss gradient with
/// respect to `h_t`; gradients accumulate into `grads` and `d_inputs`.
fn lstm_backward(
    p: &LstmParams,
    xs: &[Vec<f64>],
    trace: &LstmTrace<f64>,
    d_hidden: &[Vec<f64>],
    grads: &mut LstmParams,
    d_inputs: &mut [Vec<f64>],
) {
    let hd = p.hidden_dim();
    let n = xs.len();
    let order: Vec<usize> = trace.direction.order(n).collect();
    let zeros = vec![0.0; hd];
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];

    for (k, &t) in order.iter().enumerate().rev() {
        let s = &trace.steps[t];
        let (h_prev, c_prev) = if k == 0 {
            (&zeros, &zeros)
        } else {
            let prev = &trace.steps[order[k - 1]];
            (&prev.h, &prev.c)
        };

        let mut da_i = vec![0.0; hd];
        let mut da_f = vec![0.0; hd];
        let mut da_g = vec![0.0; hd];
        let mut da_o = vec![0.0; hd];
        for j in 0..hd {
            let dh = d_hidden[t][j] + dh_next[j];
            let d_o = dh * s.tanh_c[j];
            let dc = dc_next[j] + dh * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            da_i[j] = dc * s.g[j] * s.i[j] * (1.0 - s.i[j]);
            da_f[j] = dc * c_prev[j] * s.f[j] * (1.0 - s.f[j]);
            da_g[j] = dc * s.i[j] * (1.0 - s.g[j] * s.g[j]);
            da_o[j] = d_o * s.o[j] * (1.0 - s.o[j]);
            dc_next[j] = dc * s.f[j];
        }

        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let pairs = [
            (&p.input, &mut grads.input, &da_i),
            (&p.forget, &mut grads.forget, &da_f),
            (&p.cell, &mut grads.cell, &da_g),
            (&p.output, &mut grads.output, &da_o),
        ];
        for (gate, grad, da) in pairs {
            grad.w_input.add_outer(da, &xs[t]);
            grad.w_hidden.add_outer(da, h_prev);
            for (b, d) in grad.bias.iter_mut().zip(da.iter()) {
                *b += d;
            }
            gate.w_input.tr_mul_vec_add(da, &mut d_inputs[t]);
            gate.w_hidden.tr_mul_vec_add(da, &mut dh_next);
        }
    }
}

pub type Emissions<T = f64> = Matrix<T>;

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct BiLstmTrace {
    forward: LstmTrace<f64>,
    backward: LstmTrace<f64>,
    /// Concatenated hidden states after dropout, n × 2·hidden.
    features: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers on the features, if any.
    dropout: Option<Vec<Vec<f64>>>,
}

/// Emission scores `n × tags` for one sentence.
pub fn bilstm_emissions<T: Float>(p: &BiLstmParams<T>, xs: &[Vec<T>]) -> Result<Emissions<T>> {
    p.check()?;
    check_inputs(&p.forward, xs)?;
    let fwd = run_lstm(&p.forward, xs, Direction::Forward);
    let bwd = run_lstm(&p.backward, xs, Direction::Backward);
    let k = p.num_tags();
    let mut out = Matrix::zeros(xs.len(), k);
    for t in 0..xs.len() {
        let feat: Vec<T> = fwd.steps[t].h.iter().chain(&bwd.steps[t].h).copied().collect();
        let row = out.row_mut(t);
        row.copy_from_slice(&p.projection_bias);
        p.projection.mul_vec_add(&feat, row);
    }
    Ok(out)
}

/// Forward pass that keeps activations. `dropout` is `(rate, rng)`; when
/// present each feature is zeroed with probability `rate` and the rest
/// scaled by `1/(1-rate)`.
pub fn bilstm_forward_trace<R: Rng>(
    p: &BiLstmParams,
    xs: &[Vec<f64>],
    dropout: Option<(f64, &mut R)>,
) -> Result<(Emissions, BiLstmTrace)> {
    p.check()?;
    check_inputs(&p.forward, xs)?;
    let forward = run_lstm(&p.forward, xs, Direction::Forward);
    let backward = run_lstm(&p.backward, xs, Direction::Backward);
    let n = xs.len();
    let width = 2 * p.hidden_dim();
    let mut features: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            forward.steps[t]
                .h
                .iter()
                .chain(&backward.steps[t].h)
                .copied()
                .collect()
        })
        .collect();
    let dropout = match dropout {
        Some((rate, rng)) if rate > 0.0 => {
            let keep = 1.0 - rate;
            let masks: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..width)
                        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
                        .collect()
                })
                .collect();
            for (f, m) in features.iter_mut().zip(&masks) {
                f.iter_mut().zip(m).for_each(|(x, s)| *x *= s);
            }
            Some(masks)
        }
        _ => None,
    };
    let mut em = Matrix::zeros(n, p.num_tags());
    for (t, feat) in features.iter().enumerate() {
        let row = em.row_mut(t);
        row.copy_from_slice(&p.projection_bias);
        p.projection.mul_vec_add(feat, row);
    }
    Ok((
        em,
        BiLstmTrace {
            forward,
            backward,
            features,
            dropout,
        },
    ))
}

/// Gradients of `Σ emissions ⊙ upstream` given a stored forward trace.
pub fn bilstm_backward_from_trace(
    p: &BiLstmParams,
    xs: &[Vec<f64>],
    trace: &BiLstmTrace,
    upstream: &Emissions,
) -> Result<(BiLstmParams, Vec<Vec<f64>>)> {
    let n = xs.len();
    let (hd, k) = (p.hidden_dim(), p.num_tags());
    if upstream.shape() != (n, k) {
        return Err(Error::Shape(format!(
            "upstream gradient is {:?}, expected ({n}, {k})",
            upstream.shape()
        )));
    }
    let mut grads = BiLstmParams::zeros(p.input_dim(), hd, k);
    let mut d_fwd = vec![vec![0.0; hd]; n];
    let mut d_bwd = vec![vec![0.0; hd]; n];
    for t in 0..n {
        let de = upstream.row(t);
        grads.projection.add_outer(de, &trace.features[t]);
        for (b, d) in grads.projection_bias.iter_mut().zip(de) {
            *b += d;
        }
        let mut d_feat = vec![0.0; 2 * hd];
        p.projection.tr_mul_vec_add(de, &mut d_feat);
        if let Some(masks) = &trace.dropout {
            d_feat.iter_mut().zip(&masks[t]).for_each(|(d, m)| *d *= m);
        }
        d_fwd[t].copy_from_slice(&d_feat[..hd]);
        d_bwd[t].copy_from_slice(&d_feat[hd..]);
    }
    let mut d_inputs = vec![vec![0.0; p.input_dim()]; n];
    lstm_backward(&p.forward, xs, &trace.forward, &d_fwd, &mut grads.forward, &mut d_inputs);
    lstm_backward(&p.backward, xs, &trace.backward, &d_bwd, &mut grads.backward, &mut d_inputs);
    Ok((grads, d_inputs))
}

/// Exact gradients of `Σ emissions ⊙ upstream` with respect to every
/// parameter and every input vector.
pub fn bilstm_backward(
    p: &BiLstmParams,
    xs: &[Vec<f64>],
    upstream: &Emissions,
) -> Result<(BiLstmParams, Vec<Vec<f64>>)> {
    let (_, trace) = bilstm_forward_trace::<ChaCha8Rng>(p, xs, None)?;
    bilstm_backward_from_trace(p, xs, &trace, upstream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(d: usize, h: usize, k: usize, seed: u64) -> BiLstmParams {
        let mut p = init_params(d, h, k, seed).unwrap();
        // spread biases too so every gradient path is exercised
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        for t in p.tensors_mut() {
            for x in t.iter_mut() {
                *x += rng.gen_range(-0.5..0.5);
            }
        }
        p
    }

    fn random_inputs(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    /// Scalar-by-scalar LSTM written independently of the vectorized path.
    fn naive_lstm(p: &LstmParams, xs: &[Vec<f64>], reverse: bool) -> Vec<Vec<f64>> {
        let hd = p.hidden_dim();
        let d = p.input_dim();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |g: &Gate, x: &[f64], h: &[f64], j: usize| {
            let mut s = g.bias[j];
            for q in 0..d {
                s += g.w_input.get(j, q) * x[q];
            }
            for q in 0..hd {
                s += g.w_hidden.get(j, q) * h[q];
            }
            s
        };
        let n = xs.len();
        let mut out = vec![vec![0.0; hd]; n];
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        for step in 0..n {
            let t = if reverse { n - 1 - step } else { step };
            let mut nh = vec![0.0; hd];
            let mut nc = vec![0.0; hd];
            for j in 0..hd {
                let i = sig(pre(&p.input, &xs[t], &h, j));
                let f = sig(pre(&p.forget, &xs[t], &h, j));
                let g = pre(&p.cell, &xs[t], &h, j).tanh();
                let o = sig(pre(&p.output, &xs[t], &h, j));
                nc[j] = f * c[j] + i * g;
                nh[j] = o * nc[j].tanh();
            }
            h = nh;
            c = nc;
            out[t] = h.clone();
        }
        out
    }

    #[test]
    fn zero_parameters_give_zero_states() {
        let p = LstmParams::<f64>::zeros(3, 2);
        let xs = random_inputs(4, 3, 1);
        for h in lstm_forward(&p, &xs, Direction::Forward).unwrap() {
            assert_eq!(h, vec![0.0, 0.0]);
        }
        let bp = BiLstmParams {
            projection_bias: vec![0.5, -1.0, 2.0],
            ..BiLstmParams::zeros(3, 2, 3)
        };
        let em = bilstm_emissions(&bp, &xs).unwrap();
        for t in 0..4 {
            assert_eq!(em.row(t), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn single_step_is_direction_free() {
        let p = random_params(3, 2, 2, 9).forward;
        let xs = random_inputs(1, 3, 2);
        assert_eq!(
            lstm_forward(&p, &xs, Direction::Forward).unwrap(),
            lstm_forward(&p, &xs, Direction::Backward).unwrap()
        );
    }

    #[test]
    fn matches_scalar_reference() {
        let p = init_params(3, 2, 2, 42).unwrap();
        let xs = random_inputs(4, 3, 42);
        for (dir, rev) in [(Direction::Forward, false), (Direction::Backward, true)] {
            let fast = lstm_forward(&p.forward, &xs, dir).unwrap();
            let slow = naive_lstm(&p.forward, &xs, rev);
            for (a, b) in fast.iter().flatten().zip(slow.iter().flatten()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }

        let p = random_params(3, 2, 3, 5);
        let xs = random_inputs(2, 3, 6);
        let em = bilstm_emissions(&p, &xs).unwrap();
        let hf = naive_lstm(&p.forward, &xs, false);
        let hb = naive_lstm(&p.backward, &xs, true);
        for t in 0..2 {
            let feat: Vec<f64> = hf[t].iter().chain(&hb[t]).copied().collect();
            for j in 0..3 {
                let mut s = p.projection_bias[j];
                for (q, f) in feat.iter().enumerate() {
                    s += p.projection.get(j, q) * f;
                }
                assert!((em.get(t, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn palindrome_gives_mirrored_emissions() {
        let mut p = random_params(3, 2, 3, 11);
        p.backward = p.forward.clone();
        // same projection weights for both halves
        for j in 0..3 {
            for q in 0..2 {
                let v = p.projection.get(j, q);
                p.projection.set(j, q + 2, v);
            }
        }
        let half = random_inputs(3, 3, 12);
        let xs: Vec<Vec<f64>> = half.iter().chain(half.iter().rev().skip(1)).cloned().collect();
        let em = bilstm_emissions(&p, &xs).unwrap();
        let n = xs.len();
        for t in 0..n {
            for j in 0..3 {
                assert!((em.get(t, j) - em.get(n - 1 - t, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_direction_is_reversed_forward() {
        let p = random_params(3, 4, 2, 3).forward;
        let xs = random_inputs(5, 3, 4);
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let mut a = lstm_forward(&p, &rev, Direction::Forward).unwrap();
        a.reverse();
        assert_eq!(a, lstm_forward(&p, &xs, Direction::Backward).unwrap());
    }

    #[test]
    fn hidden_states_are_bounded() {
        let mut p = random_params(2, 3, 2, 8);
        p.forward.scale(20.0);
        let xs = random_inputs(6, 2, 1);
        for h in lstm_forward(&p.forward, &xs, Direction::Forward).unwrap().iter().flatten() {
            assert!(h.abs() < 1.0 || (h.abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = random_params(3, 2, 2, 1);
        let xs = random_inputs(3, 3, 2);
        let (g, dx) = bilstm_backward(&p, &xs, &Matrix::zeros(3, 2)).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
        assert!(dx.iter().flatten().all(|&v| v == 0.0));
    }

    fn weighted_sum(p: &BiLstmParams, xs: &[Vec<f64>], w: &Matrix) -> f64 {
        let em = bilstm_emissions(p, xs).unwrap();
        em.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (d, h, n, k) = (3, 2, 3, 2);
        let p = random_params(d, h, k, 21);
        let xs = random_inputs(n, d, 22);
        let w = Matrix::from_vec(n, k, random_inputs(n, k, 23).concat()).unwrap();
        let (g, dx) = bilstm_backward(&p, &xs, &w).unwrap();
        let eps = 1e-5;

        let analytic = g.to_flat();
        let mut probe = p.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = *probe.value_mut(i);
            *probe.value_mut(i) = orig + eps;
            let plus = weighted_sum(&probe, &xs, &w);
            *probe.value_mut(i) = orig - eps;
            let minus = weighted_sum(&probe, &xs, &w);
            *probe.value_mut(i) = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            assert!(rel_err(a, numeric) < 1e-4, "param {i}: {a} vs {numeric}");
        }

        for t in 0..n {
            for q in 0..d {
                let mut xp = xs.clone();
                xp[t][q] += eps;
                let plus = weighted_sum(&p, &xp, &w);
                xp[t][q] -= 2.0 * eps;
                let minus = weighted_sum(&p, &xp, &w);
                let numeric = (plus - minus) / (2.0 * eps);
                assert!(rel_err(dx[t][q], numeric) < 1e-4);
            }
        }
    }

    #[test]
    fn f32_path_tracks_f64() {
        let p = random_params(3, 2, 3, 31);
        let xs = random_inputs(4, 3, 32);
        let em64 = bilstm_emissions(&p, &xs).unwrap();
        let xs32: Vec<Vec<f32>> = xs.iter().map(|x| x.iter().map(|&v| v as f32).collect()).collect();
        let em32 = bilstm_emissions(&p.cast::<f32>(), &xs32).unwrap();
        for (a, b) in em64.as_slice().iter().zip(em32.as_slice()) {
            assert!((a - *b as f64).abs() < 1e-2);
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_params(4, 3, 5, 7).unwrap();
        assert_eq!(a, init_params(4, 3, 5, 7).unwrap());
        assert_ne!(a, init_params(4, 3, 5, 8).unwrap());
        let bound = (1.0f64 / 3.0).sqrt();
        for t in a.tensors() {
            if t.decay {
                assert!(t.data.iter().all(|v| v.abs() <= bound));
            } else if t.name.contains("forget") {
                assert!(t.data.iter().all(|&v| v == 1.0));
            } else {
                assert!(t.data.iter().all(|&v| v == 0.0));
            }
        }
        assert!(init_params(0, 3, 5, 1).is_err());
    }

    #[test]
    fn shape_errors() {
        let p = init_params(3, 2, 2, 1).unwrap();
        assert!(bilstm_emissions(&p, &[vec![0.0; 4]]).is_err());
        assert!(bilstm_emissions::<f64>(&p, &[]).is_err());
        assert!(bilstm_backward(&p, &[vec![0.0; 3]], &Matrix::zeros(2, 2)).is_err());
    }
}
