//! Additively smoothed n-gram next-observation prediction.

use std::collections::HashMap;

use super::{check_symbols, PredictError, PredictiveDistribution};

/// Predict the next symbol from counts over the history.
///
/// `P(o | ctx) = (count(ctx.o) + delta) / (V delta + count(ctx))` where `V`
/// is the number of distinct symbols observed in the history. Unseen
/// contexts back off to `1/V` over the observed symbols. Symbols never seen
/// in-history get probability zero before the final renormalization over the
/// full alphabet `[1..L]`, so the output is always length `l`. A history
/// shorter than the context also backs off; an empty history is uniform over
/// the whole alphabet.
pub fn ngram_predict(
    observations: &[u16],
    l: usize,
    n: usize,
    delta: f64,
) -> Result<PredictiveDistribution, PredictError> {
    if n == 0 {
        return Err(PredictError::Invalid("n-gram order must be >= 1".into()));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(PredictError::Invalid("smoothing delta must be > 0".into()));
    }
    check_symbols(observations, l)?;
    if observations.is_empty() {
        return Ok(PredictiveDistribution::uniform(l));
    }

    let mut seen = vec![false; l];
    for &o in observations {
        seen[usize::from(o)] = true;
    }
    let vocab = seen.iter().filter(|&&s| s).count() as f64;

    let ctx_len = n - 1;
    let backoff = |seen: &[bool]| {
        let mut probs = vec![0.0f64; l];
        for (o, &s) in seen.iter().enumerate() {
            if s {
                probs[o] = 1.0 / vocab;
            }
        }
        renormalize(probs)
    };

    if observations.len() < ctx_len {
        return Ok(backoff(&seen));
    }

    let mut ctx_counts: HashMap<&[u16], f64> = HashMap::new();
    let mut next_counts: HashMap<(&[u16], u16), f64> = HashMap::new();
    for t in ctx_len..observations.len() {
        let ctx = &observations[t - ctx_len..t];
        *ctx_counts.entry(ctx).or_insert(0.0) += 1.0;
        *next_counts.entry((ctx, observations[t])).or_insert(0.0) += 1.0;
    }

    let query = &observations[observations.len() - ctx_len..];
    let Some(&ctx_total) = ctx_counts.get(query) else {
        return Ok(backoff(&seen));
    };

    let denom = vocab * delta + ctx_total;
    let mut probs = vec![0.0f64; l];
    for (o, &s) in seen.iter().enumerate() {
        if !s {
            continue;
        }
        let count = next_counts.get(&(query, o as u16)).copied().unwrap_or(0.0);
        probs[o] = (count + delta) / denom;
    }
    Ok(renormalize(probs))
}

fn renormalize(mut probs: Vec<f64>) -> PredictiveDistribution {
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        for p in &mut probs {
            *p /= total;
        }
    } else {
        let l = probs.len();
        probs = vec![1.0 / l as f64; l];
    }
    PredictiveDistribution::from_probs(probs)
}
