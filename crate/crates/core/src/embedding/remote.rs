use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingVector, Encoder, EncoderDescriptor, EncoderKind};
use crate::http::{HttpEndpoint, JsonClient};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEncoderConfig {
    #[serde(flatten)]
    pub endpoint: HttpEndpoint,
    pub model: String,
    pub dimension: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a [&'a str],
    model: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Encoder backed by an embedding service.
///
/// Wire format: `POST {base_url}` with `{"input": [..], "model": ..}`, reply
/// `{"embeddings": [[..], ..]}`. Returned vectors are renormalized locally.
pub struct RemoteEncoder<S = f64> {
    descriptor: EncoderDescriptor,
    model: String,
    client: JsonClient,
    _scalar: PhantomData<fn() -> S>,
}

impl<S: Scalar> RemoteEncoder<S> {
    pub fn new(config: RemoteEncoderConfig) -> Self {
        Self {
            descriptor: EncoderDescriptor {
                name: config.model.clone(),
                dimension: config.dimension,
                kind: EncoderKind::RemoteHttp,
            },
            model: config.model,
            client: JsonClient::new(config.endpoint),
            _scalar: PhantomData,
        }
    }
}

impl<S: Scalar> Encoder<S> for RemoteEncoder<S> {
    fn descriptor(&self) -> &EncoderDescriptor {
        &self.descriptor
    }

    fn encode(&self, text: &str) -> Result<EmbeddingVector<S>, EmbeddingError> {
        let mut out = self.encode_batch(&[text])?;
        Ok(out.remove(0))
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let resp: EmbedResponse = self
            .client
            .post(
                "",
                &EmbedRequest {
                    input: texts,
                    model: &self.model,
                },
            )
            .map_err(EmbeddingError::RemoteEncoderUnavailable)?;
        if resp.embeddings.len() != texts.len() {
            return Err(EmbeddingError::RemoteEncoderUnavailable(format!(
                "{} embeddings returned for {} inputs",
                resp.embeddings.len(),
                texts.len()
            )));
        }
        resp.embeddings
            .into_iter()
            .map(|values| {
                if values.len() != self.descriptor.dimension {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: self.descriptor.dimension,
                        actual: values.len(),
                    });
                }
                EmbeddingVector::normalized(values.into_iter().map(S::lit).collect())
            })
            .collect()
    }
}
