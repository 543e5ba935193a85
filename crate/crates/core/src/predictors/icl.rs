//! In-context prediction through a language model endpoint.

use thiserror::Error;

use crate::llm::{BridgeError, DistributionSource, LlmClient};
use crate::sampler::{SamplerError, TokenCodec};

use super::PredictiveDistribution;

#[derive(Debug, Error)]
pub enum IclError {
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Codec(#[from] SamplerError),
}

/// Prediction plus accounting for mass the codec could not attribute.
#[derive(Debug, Clone)]
pub struct IclOutcome {
    pub dist: PredictiveDistribution,
    /// Probability mass on returned tokens outside the codec image.
    pub dropped_mass: f64,
    /// No returned token mapped to a symbol; output fell back to uniform.
    pub zero_mass_fallback: bool,
    pub source: DistributionSource,
}

/// Encode the history, ask for one next token, and map the returned token
/// log-probabilities back through the codec. Tokens outside the codec image
/// are dropped before renormalization.
pub fn icl_predict(
    client: &LlmClient,
    codec: &TokenCodec,
    observations: &[u16],
) -> Result<IclOutcome, IclError> {
    let prompt = codec.encode(observations)?;
    let response = client.next_token_distribution(&prompt)?;

    let l = codec.alphabet();
    let mut probs = vec![0.0f64; l];
    let mut dropped = 0.0f64;
    for (token, &logprob) in &response.logprobs {
        let p = logprob.exp();
        match codec.symbol(token) {
            Some(sym) => probs[usize::from(sym)] += p,
            None => dropped += p,
        }
    }
    let total: f64 = probs.iter().sum();
    let zero_mass_fallback = total <= 0.0;
    let dist = if zero_mass_fallback {
        PredictiveDistribution::uniform(l)
    } else {
        for p in &mut probs {
            *p /= total;
        }
        PredictiveDistribution::from_probs(probs)
    };
    Ok(IclOutcome {
        dist,
        dropped_mass: dropped,
        zero_mass_fallback,
        source: response.source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{write_fixture, EndpointConfig, LlmClient};
    use crate::sampler::CodecScheme;
    use std::collections::BTreeMap;

    fn offline_client_with(entries: &[(String, BTreeMap<String, f64>)]) -> LlmClient {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.json");
        write_fixture("test-model", entries, &path).unwrap();
        LlmClient::new(EndpointConfig {
            base_url: "http://127.0.0.1:1".into(),
            model_id: "test-model".into(),
            api_key_env: None,
            top_logprobs: 20,
            timeout_secs: 0.2,
            max_inflight: 1,
            prompt_prefix: None,
        })
        .unwrap()
        .with_fixture(&path)
        .unwrap()
    }

    #[test]
    fn uniform_logprobs_give_uniform_distribution() {
        let lp: BTreeMap<String, f64> = [("A", 0.25f64.ln()), ("B", 0.25f64.ln()), ("C", 0.25f64.ln()), ("D", 0.25f64.ln())]
            .into_iter()
            .map(|(t, p)| (t.to_string(), p))
            .collect();
        let client = offline_client_with(&[("AB".to_string(), lp)]);
        let codec = TokenCodec::new(CodecScheme::Abc, 4).unwrap();
        let out = icl_predict(&client, &codec, &[0, 1]).unwrap();
        for &p in out.dist.probs() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_concentrated_on_b_selects_symbol_two() {
        let lp: BTreeMap<String, f64> = [("B", -0.01f64), ("A", -6.0)]
            .into_iter()
            .map(|(t, p)| (t.to_string(), p))
            .collect();
        let client = offline_client_with(&[("A".to_string(), lp)]);
        let codec = TokenCodec::new(CodecScheme::Abc, 2).unwrap();
        let out = icl_predict(&client, &codec, &[0]).unwrap();
        assert_eq!(out.dist.argmax_symbol(), 2);
    }

    #[test]
    fn out_of_image_tokens_are_dropped_and_logged() {
        let lp: BTreeMap<String, f64> = [("A", -1.0f64), ("\n", -0.5), ("Z", -0.7)]
            .into_iter()
            .map(|(t, p)| (t.to_string(), p))
            .collect();
        let client = offline_client_with(&[("A".to_string(), lp)]);
        let codec = TokenCodec::new(CodecScheme::Abc, 2).unwrap();
        let out = icl_predict(&client, &codec, &[0]).unwrap();
        assert!((out.dist.probs()[0] - 1.0).abs() < 1e-12);
        let expected_drop = (-0.5f64).exp() + (-0.7f64).exp();
        assert!((out.dropped_mass - expected_drop).abs() < 1e-12);
    }

    #[test]
    fn zero_mapped_mass_falls_back_to_uniform() {
        let lp: BTreeMap<String, f64> = [("\n".to_string(), -0.1f64)].into_iter().collect();
        let client = offline_client_with(&[("A".to_string(), lp)]);
        let codec = TokenCodec::new(CodecScheme::Abc, 3).unwrap();
        let out = icl_predict(&client, &codec, &[0]).unwrap();
        assert!(out.zero_mass_fallback);
        for &p in out.dist.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}
