//! Next-observation predictors.
//!
//! Every predictor maps (model or fitted state, observation history) to a
//! [`PredictiveDistribution`] over the next symbol: the Viterbi oracle and
//! the truncated-memory forward predictor use the true parameters; Baum-Welch,
//! the smoothed n-gram, and single-trajectory spectral learning fit the
//! history; the in-context predictor queries a language model over HTTP.

mod baum_welch;
mod exact;
mod icl;
mod ngram;
mod spectral;

pub use baum_welch::{baum_welch_fit, BaumWelchFit, BaumWelchOptions, BaumWelchWarning};
pub use exact::{
    truncated_forward_predict, truncated_forward_with_prior, viterbi_path, viterbi_predict,
};
pub use icl::{icl_predict, IclOutcome};
pub use ngram::ngram_predict;
pub use spectral::{
    default_burn_in, spectral_fit, spectral_predict, SpectralConditioning, SpectralParams,
    SpectralPrediction, DEFAULT_SPECTRAL_CLAMP,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("symbol {symbol} out of range for alphabet size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },
    #[error("history is empty")]
    EmptyHistory,
    #[error("spectral moments are rank deficient (sigma_M = {sigma_m:.3e})")]
    RankDeficient { sigma_m: f64 },
    #[error("spectral learning requires L >= M (got M = {m}, L = {l})")]
    StateCountExceedsAlphabet { m: usize, l: usize },
    #[error("sequence too short: need at least {needed} symbols, have {have}")]
    SequenceTooShort { needed: usize, have: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Hmm(#[from] crate::hmm::HmmError),
}

/// A probability vector over the next observation symbol.
///
/// Normalized within 1e-9; the argmax uses the lowest symbol index on ties
/// so every predictor is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    probs: Vec<f64>,
    argmax: usize,
}

impl PredictiveDistribution {
    /// Wrap an already-normalized probability vector.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        debug_assert!(
            (probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
            "predictor produced an unnormalized distribution"
        );
        let argmax = argmax_lowest(&probs);
        Self { probs, argmax }
    }

    pub fn uniform(len: usize) -> Self {
        Self::from_probs(vec![1.0 / len as f64; len])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// 0-based index of the most probable symbol.
    pub fn argmax_index(&self) -> usize {
        self.argmax
    }

    /// 1-based symbol in `[1..L]`, the external convention.
    pub fn argmax_symbol(&self) -> usize {
        self.argmax + 1
    }
}

/// First index achieving the maximum.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_symbols(observations: &[u16], alphabet: usize) -> Result<(), PredictError> {
    for &o in observations {
        if usize::from(o) >= alphabet {
            return Err(PredictError::SymbolOutOfRange {
                symbol: usize::from(o) + 1,
                alphabet,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        let d = PredictiveDistribution::from_probs(vec![0.25, 0.25, 0.25, 0.25]);
        assert_eq!(d.argmax_index(), 0);
        assert_eq!(d.argmax_symbol(), 1);
        let d = PredictiveDistribution::from_probs(vec![0.2, 0.4, 0.4]);
        assert_eq!(d.argmax_index(), 1);
    }
}
