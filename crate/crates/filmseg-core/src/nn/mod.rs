//! Minimal neural-network substrate with hand-written backward passes.
//!
//! Nothing here is framework-backed: every layer implements its own forward
//! and backward, and correctness is pinned by central-finite-difference
//! checks in `f64` (see [`gradcheck`]). That keeps the whole training stack
//! deterministic, dependency-light, and generic over the working scalar.
//!
//! Batch convention: a batch of `B` token sequences of length `T` with
//! feature width `C` is stored as one `Array2` of shape `(B*T, C)`, row
//! `b*T + t` holding token `t` of sample `b`. Row-wise layers (linear,
//! layer norm, activations) ignore the grouping; attention receives `(B, T)`
//! explicitly and slices per sample.

pub mod act;
pub mod adam;
pub mod attention;
pub mod block;
pub mod conv;
pub mod embedding;
pub mod film;
pub mod gradcheck;
pub mod init;
pub mod linear;
pub mod norm;

pub use act::{gelu, gelu_backward, sigmoid, softmax_rows, softmax_rows_backward};
pub use adam::Adam;
pub use attention::{AttnCache, MultiHeadAttention};
pub use block::{BlockCache, TransformerBlock};
pub use conv::ConvTranspose2d;
pub use embedding::Embedding;
pub use film::{Film, FilmCache};
pub use linear::Linear;
pub use norm::{l2_normalize_rows, l2_normalize_rows_backward, LayerNorm, LnCache};

use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD};

use crate::io::container::TensorData;
use crate::io::hash::StreamHasher;
use crate::scalar::Scalar;

/// Uniform access to a module's parameters and gradient buffers.
///
/// Implementations must visit tensors in a fixed, documented order — the
/// walk order *is* the canonical parameter order used by checkpoints,
/// fingerprints, and the optimizer.
pub trait ParamWalk<S: Scalar> {
    /// Visits `(qualified_name, param)` read-only.
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>));

    /// Visits `(qualified_name, param)` mutably (checkpoint loading).
    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>));

    /// Visits `(qualified_name, param, grad)` mutably (optimizer step,
    /// gradient zeroing).
    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    );
}

/// Joins a walk prefix with a local tensor name.
pub fn qualify(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Total scalar parameter count.
pub fn param_count<S: Scalar>(m: &dyn ParamWalk<S>) -> usize {
    let mut n = 0;
    m.walk("", &mut |_, v| n += v.len());
    n
}

/// Sets every gradient buffer to zero.
pub fn zero_grads<S: Scalar>(m: &mut dyn ParamWalk<S>) {
    m.walk_pairs("", &mut |_, _, mut g| g.fill(S::zero()));
}

/// SHA-256 fingerprint over names, shapes, and values (as `f64` LE bytes) in
/// canonical walk order. Identical weights ⇒ identical fingerprint, across
/// runs and machines.
pub fn fingerprint<S: Scalar>(m: &dyn ParamWalk<S>) -> String {
    let mut h = StreamHasher::new();
    m.walk("", &mut |name, v| {
        h.update(name.as_bytes());
        h.update(&(v.ndim() as u64).to_le_bytes());
        for d in v.shape() {
            h.update(&(*d as u64).to_le_bytes());
        }
        for x in v.iter() {
            h.update(&x.to_f64().expect("scalar widens to f64").to_le_bytes());
        }
    });
    h.finish_hex()
}

/// Extracts all parameters as named `f64` tensors for checkpointing.
pub fn collect_tensors<S: Scalar>(m: &dyn ParamWalk<S>) -> Vec<TensorData> {
    let mut out = Vec::new();
    m.walk("", &mut |name, v| {
        out.push(TensorData {
            name: name.to_string(),
            shape: v.shape().to_vec(),
            data: v.iter().map(|x| x.to_f64().unwrap()).collect(),
        });
    });
    out
}

/// Error raised when checkpoint tensors do not line up with a model.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("checkpoint is missing tensor '{0}'")]
    MissingTensor(String),
    #[error("tensor '{name}' has shape {found:?} but the model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint holds {found} tensors but the model expects {expected}")]
    TensorCountMismatch { expected: usize, found: usize },
}

/// Loads named tensors into a model, matching by qualified name.
///
/// Every model tensor must be present with the right shape, and no extra
/// tensors may remain unused.
pub fn load_tensors<S: Scalar>(
    m: &mut dyn ParamWalk<S>,
    tensors: &[TensorData],
) -> Result<(), LoadError> {
    use std::collections::HashMap;
    let by_name: HashMap<&str, &TensorData> =
        tensors.iter().map(|t| (t.name.as_str(), t)).collect();

    let mut used = 0usize;
    let mut err: Option<LoadError> = None;
    m.walk_mut("", &mut |name, mut v| {
        if err.is_some() {
            return;
        }
        match by_name.get(name) {
            None => err = Some(LoadError::MissingTensor(name.to_string())),
            Some(t) => {
                if t.shape != v.shape() {
                    err = Some(LoadError::ShapeMismatch {
                        name: name.to_string(),
                        expected: v.shape().to_vec(),
                        found: t.shape.clone(),
                    });
                    return;
                }
                used += 1;
                for (dst, src) in v.iter_mut().zip(&t.data) {
                    *dst = crate::scalar::sc(*src);
                }
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if used != tensors.len() {
        return Err(LoadError::TensorCountMismatch {
            expected: used,
            found: tensors.len(),
        });
    }
    Ok(())
}

/// Convenience: snapshot the analytic gradients currently stored in the
/// model as named `f64` tensors (used by the finite-difference checks).
pub fn collect_grads<S: Scalar>(m: &mut dyn ParamWalk<S>) -> Vec<(String, ArrayD<f64>)> {
    let mut out = Vec::new();
    m.walk_pairs("", &mut |name, _, g| {
        out.push((name.to_string(), g.map(|x| x.to_f64().unwrap())));
    });
    out
}
