//! Text embeddings and cosine similarity.
//!
//! An [`Encoder`] turns text into an L2-normalized [`EmbeddingVector`]. Two
//! encoders ship with the crate: the deterministic [`HashingEncoder`] used for
//! offline work and tests, and [`RemoteEncoder`] which talks to an embedding
//! service over HTTP.

mod hashing;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use hashing::HashingEncoder;
pub use remote::{RemoteEncoder, RemoteEncoderConfig};

/// Default dimension of the offline hashing encoder.
pub const DEFAULT_OFFLINE_DIMENSION: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("text contains no alphanumeric tokens")]
    NoTokens,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("encoder mismatch: index built with `{expected}`, query from `{actual}`")]
    EncoderMismatch { expected: String, actual: String },
    #[error("remote encoder unavailable: {0}")]
    RemoteEncoderUnavailable(String),
}

impl EmbeddingError {
    /// Whether retrying the same request may succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, EmbeddingError::RemoteEncoderUnavailable(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    RemoteHttp,
    OfflineDeterministic,
}

/// Identifies an encoder and the vector space it produces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderDescriptor {
    pub name: String,
    pub dimension: usize,
    pub kind: EncoderKind,
}

impl EncoderDescriptor {
    pub fn offline(dimension: usize) -> Self {
        Self {
            name: format!("hashed-bow-{dimension}"),
            dimension,
            kind: EncoderKind::OfflineDeterministic,
        }
    }
}

/// A fixed-length embedding. When `normalized` is set the Euclidean norm is 1.
/// The norm is computed once at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", from = "StoredVector<S>", into = "StoredVector<S>")]
pub struct EmbeddingVector<S> {
    values: Vec<S>,
    normalized: bool,
    norm: S,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct StoredVector<S> {
    values: Vec<S>,
    normalized: bool,
}

impl<S: Scalar> From<StoredVector<S>> for EmbeddingVector<S> {
    fn from(v: StoredVector<S>) -> Self {
        Self::with_flag(v.values, v.normalized)
    }
}

impl<S: Scalar> From<EmbeddingVector<S>> for StoredVector<S> {
    fn from(v: EmbeddingVector<S>) -> Self {
        Self {
            values: v.values,
            normalized: v.normalized,
        }
    }
}

impl<S: Scalar> EmbeddingVector<S> {
    fn with_flag(values: Vec<S>, normalized: bool) -> Self {
        let norm = l2_norm(&values);
        Self {
            values,
            normalized,
            norm,
        }
    }

    /// Wraps raw values without normalizing them.
    pub fn raw(values: Vec<S>) -> Self {
        Self::with_flag(values, false)
    }

    /// Scales `values` to unit length. Rejects the zero vector.
    pub fn normalized(mut values: Vec<S>) -> Result<Self, EmbeddingError> {
        let norm = l2_norm(&values);
        if norm == S::zero() || !norm.is_finite() {
            return Err(EmbeddingError::ZeroVector);
        }
        for v in &mut values {
            *v = *v / norm;
        }
        Ok(Self::with_flag(values, true))
    }

    /// Renormalized mean of a non-empty set of equal-length vectors.
    pub fn centroid<'a, I>(vectors: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = &'a EmbeddingVector<S>>,
    {
        let mut acc: Option<Vec<S>> = None;
        let mut count = 0usize;
        for v in vectors {
            match acc.as_mut() {
                None => acc = Some(v.values.clone()),
                Some(sum) => {
                    if sum.len() != v.dim() {
                        return Err(EmbeddingError::DimensionMismatch {
                            expected: sum.len(),
                            actual: v.dim(),
                        });
                    }
                    for (s, x) in sum.iter_mut().zip(&v.values) {
                        *s = *s + *x;
                    }
                }
            }
            count += 1;
        }
        let mut sum = acc.ok_or(EmbeddingError::ZeroVector)?;
        let n = S::lit(count as f64);
        for s in &mut sum {
            *s = *s / n;
        }
        Self::normalized(sum)
    }

    /// Marks stored values as unit length without rescaling them.
    pub(crate) fn assume_normalized(values: Vec<S>) -> Self {
        Self::with_flag(values, true)
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> S {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == S::zero())
    }

    /// Converts to another scalar type, keeping the normalization flag.
    pub fn cast<T: Scalar>(&self) -> EmbeddingVector<T> {
        EmbeddingVector::with_flag(self.values.iter().map(|v| T::lit(v.as_f64())).collect(), self.normalized)
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (x, y)| acc + *x * *y)
}

fn l2_norm<S: Scalar>(v: &[S]) -> S {
    dot(v, v).sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity<S: Scalar>(
    a: &EmbeddingVector<S>,
    b: &EmbeddingVector<S>,
) -> Result<S, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let na = a.norm();
    let nb = b.norm();
    if na == S::zero() || nb == S::zero() {
        return Err(EmbeddingError::ZeroVector);
    }
    let cos = dot(&a.values, &b.values) / (na * nb);
    Ok(cos.max(-S::one()).min(S::one()))
}

/// Text encoder contract. Implementations must return L2-normalized vectors of
/// `descriptor().dimension` entries.
pub trait Encoder<S: Scalar>: Send + Sync {
    fn descriptor(&self) -> &EncoderDescriptor;

    fn encode(&self, text: &str) -> Result<EmbeddingVector<S>, EmbeddingError>;

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        texts.iter().map(|t| self.encode(t)).collect()
    }
}

impl<S: Scalar, E: Encoder<S> + ?Sized> Encoder<S> for std::sync::Arc<E> {
    fn descriptor(&self) -> &EncoderDescriptor {
        (**self).descriptor()
    }

    fn encode(&self, text: &str) -> Result<EmbeddingVector<S>, EmbeddingError> {
        (**self).encode(text)
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        (**self).encode_batch(texts)
    }
}
