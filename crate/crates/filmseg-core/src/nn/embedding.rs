//! Token embedding table: gather on forward, scatter-add on backward.

use ndarray::{Array2, ArrayViewD, ArrayViewMutD};
use rand_chacha::ChaCha12Rng;

use super::{init, qualify, ParamWalk};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Embedding<S: Scalar> {
    /// `(vocab, dim)`.
    pub w: Array2<S>,
    pub gw: Array2<S>,
}

impl<S: Scalar> Embedding<S> {
    pub fn new(rng: &mut ChaCha12Rng, vocab: usize, dim: usize) -> Self {
        Embedding {
            w: init::normal2(rng, (vocab, dim), init::INIT_STD),
            gw: Array2::zeros((vocab, dim)),
        }
    }

    /// Gathers rows for `ids`; panics on an out-of-vocabulary id (the
    /// tokenizer maps unknown words to its UNK id before this point).
    pub fn forward(&self, ids: &[u32]) -> Array2<S> {
        let dim = self.w.ncols();
        let mut out = Array2::zeros((ids.len(), dim));
        for (row, &id) in ids.iter().enumerate() {
            out.row_mut(row).assign(&self.w.row(id as usize));
        }
        out
    }

    /// Scatter-adds `dy` rows into the gradient table.
    pub fn backward(&mut self, ids: &[u32], dy: &Array2<S>) {
        for (row, &id) in ids.iter().enumerate() {
            let mut g = self.gw.row_mut(id as usize);
            g += &dy.row(row);
        }
    }
}

impl<S: Scalar> ParamWalk<S> for Embedding<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        f(&qualify(prefix, "w"), self.w.view().into_dyn());
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        f(&qualify(prefix, "w"), self.w.view_mut().into_dyn());
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        f(
            &qualify(prefix, "w"),
            self.w.view_mut().into_dyn(),
            self.gw.view_mut().into_dyn(),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn gather_then_scatter_accumulates_per_id() {
        let mut e: Embedding<f64> = Embedding::new(&mut rng_for(2, "emb", 0), 5, 3);
        let ids = [1u32, 4, 1];
        let out = e.forward(&ids);
        assert_eq!(out.row(0), e.w.row(1));
        assert_eq!(out.row(2), e.w.row(1));

        let dy = Array2::from_elem((3, 3), 1.0);
        e.backward(&ids, &dy);
        assert_eq!(e.gw[[1, 0]], 2.0); // id 1 appeared twice
        assert_eq!(e.gw[[4, 0]], 1.0);
        assert_eq!(e.gw[[0, 0]], 0.0);
    }
}
