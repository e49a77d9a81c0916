use std::marker::PhantomData;

use super::{EmbeddingError, EmbeddingVector, Encoder, EncoderDescriptor};
use crate::scalar::Scalar;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercased alphanumeric tokens of `text`, in order.
pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Hashed bag-of-words encoder.
///
/// Tokens are hashed (FNV-1a) into `dimension` buckets, counts are accumulated
/// and the result is L2-normalized. The mapping is a pure function of the text.
#[derive(Debug, Clone)]
pub struct HashingEncoder<S = f64> {
    descriptor: EncoderDescriptor,
    _scalar: PhantomData<fn() -> S>,
}

impl<S: Scalar> HashingEncoder<S> {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "encoder dimension must be positive");
        Self {
            descriptor: EncoderDescriptor::offline(dimension),
            _scalar: PhantomData,
        }
    }
}

impl<S: Scalar> Default for HashingEncoder<S> {
    fn default() -> Self {
        Self::new(super::DEFAULT_OFFLINE_DIMENSION)
    }
}

impl<S: Scalar> Encoder<S> for HashingEncoder<S> {
    fn descriptor(&self) -> &EncoderDescriptor {
        &self.descriptor
    }

    fn encode(&self, text: &str) -> Result<EmbeddingVector<S>, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let dim = self.descriptor.dimension;
        let mut counts = vec![0u32; dim];
        let mut seen = false;
        for tok in tokens(text) {
            counts[(fnv1a(tok.as_bytes()) % dim as u64) as usize] += 1;
            seen = true;
        }
        if !seen {
            return Err(EmbeddingError::NoTokens);
        }
        EmbeddingVector::normalized(counts.into_iter().map(|c| S::lit(f64::from(c))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine_similarity;

    #[test]
    fn deterministic() {
        let enc = HashingEncoder::<f64>::default();
        let a = enc.encode("x").unwrap();
        let b = enc.encode("x").unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.dim(), 256);
    }

    #[test]
    fn empty_text_is_rejected() {
        let enc = HashingEncoder::<f64>::default();
        assert_eq!(enc.encode(""), Err(EmbeddingError::EmptyText));
        assert_eq!(enc.encode("   \n"), Err(EmbeddingError::EmptyText));
        assert_eq!(enc.encode("?!"), Err(EmbeddingError::NoTokens));
    }

    #[test]
    fn output_is_unit_norm() {
        let enc = HashingEncoder::<f64>::default();
        let v = enc.encode("low back pain").unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-6);
        assert!(v.is_normalized());

        let enc32 = HashingEncoder::<f32>::new(64);
        let v = enc32.encode("low back pain").unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let enc = HashingEncoder::<f64>::default();
        let a = enc.encode("Low-back PAIN!").unwrap();
        let b = enc.encode("low back pain").unwrap();
        assert_eq!(a, b);
        let c = enc.encode("knee swelling").unwrap();
        assert!(cosine_similarity(&a, &c).unwrap() < 0.5);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
