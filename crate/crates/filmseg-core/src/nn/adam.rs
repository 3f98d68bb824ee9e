//! Adam optimizer with bias correction, keyed by parameter name.

use std::collections::HashMap;

use ndarray::ArrayD;

use super::ParamWalk;
use crate::scalar::{sc, Scalar};

pub struct Adam<S: Scalar> {
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    /// Number of completed steps (for bias correction).
    pub t: u64,
    moments: HashMap<String, (ArrayD<S>, ArrayD<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new() -> Self {
        Adam {
            beta1: sc(0.9),
            beta2: sc(0.999),
            eps: sc(1e-8),
            t: 0,
            moments: HashMap::new(),
        }
    }

    /// One update over every `(param, grad)` pair the model exposes.
    ///
    /// The update is element-wise per tensor, so walk order cannot change
    /// the result; moments are keyed by qualified name, so model identity
    /// follows the names rather than the visit sequence.
    pub fn step(&mut self, lr: S, model: &mut dyn ParamWalk<S>) {
        self.t += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let eps = self.eps;
        let t = self.t as i32;
        let corr1 = S::one() - b1.powi(t);
        let corr2 = S::one() - b2.powi(t);
        let moments = &mut self.moments;

        model.walk_pairs("", &mut |name, mut p, g| {
            let (m, v) = moments
                .entry(name.to_string())
                .or_insert_with(|| (ArrayD::zeros(p.raw_dim()), ArrayD::zeros(p.raw_dim())));
            for ((pi, &gi), (mi, vi)) in p
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = b1 * *mi + (S::one() - b1) * gi;
                *vi = b2 * *vi + (S::one() - b2) * gi * gi;
                let mhat = *mi / corr1;
                let vhat = *vi / corr2;
                *pi = *pi - lr * mhat / (vhat.sqrt() + eps);
            }
        });
    }
}

impl<S: Scalar> Default for Adam<S> {
    fn default() -> Self {
        Self::new()
    }
}
