//! Uniform access to named parameter tensors, used by the optimizer,
//! gradient clipping and checkpointing.

/// A borrowed parameter tensor.
#[derive(Debug)]
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
    /// Whether weight decay applies (weight matrices, not biases).
    pub decay: bool,
}

/// A collection of named tensors. `tensors` and `tensors_mut` must list
/// the same tensors in the same order.
pub trait ParamSet {
    fn tensors(&self) -> Vec<TensorView<'_>>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += other`, tensor by tensor.
    fn add_assign_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src: Vec<&[f64]> = other.tensors().into_iter().map(|t| t.data).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    /// The `i`-th value in flattened tensor order.
    fn value_mut(&mut self, i: usize) -> &mut f64 {
        self.tensors_mut()
            .into_iter()
            .flat_map(|t| t.iter_mut())
            .nth(i)
            .expect("parameter index out of range")
    }

    /// Flattened copy of every value, in tensor order.
    fn to_flat(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<P: ParamSet>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

/// A bare vector of decayed values, handy for optimizer experiments.
impl ParamSet for Vec<f64> {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        vec![TensorView {
            name: "values".into(),
            shape: vec![self.len()],
            data: self,
            decay: true,
        }]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![3.0, 4.0];
        let before = clip_global_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        assert!(g.global_norm() <= 1.0 + 1e-12);
        assert!((g[0] - 0.6).abs() < 1e-15);

        let mut small = vec![0.1, 0.1];
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }
}
