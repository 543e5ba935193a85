//! Predictors that read the true parameters: the Viterbi reference and the
//! truncated-memory forward predictor.

use crate::hmm::{self, HmmParams};

use super::{argmax_lowest, check_symbols, PredictError, PredictiveDistribution};

/// Most likely hidden state path for the observation history, log-space with
/// backtracking. Ties resolve toward the lowest state index.
pub fn viterbi_path(params: &HmmParams, observations: &[u16]) -> Result<Vec<usize>, PredictError> {
    if observations.is_empty() {
        return Err(PredictError::EmptyHistory);
    }
    check_symbols(observations, params.num_obs())?;
    let m = params.num_states();
    let t_len = observations.len();

    let ln = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };

    let mut score = vec![f64::NEG_INFINITY; m];
    let mut back = vec![vec![0usize; m]; t_len];
    let o0 = usize::from(observations[0]);
    for s in 0..m {
        score[s] = ln(params.pi()[s]) + ln(params.b(s, o0));
    }

    let mut next = vec![f64::NEG_INFINITY; m];
    for t in 1..t_len {
        let ot = usize::from(observations[t]);
        for s in 0..m {
            let mut best_val = f64::NEG_INFINITY;
            let mut best_prev = 0usize;
            for r in 0..m {
                let v = score[r] + ln(params.a(r, s));
                if v > best_val {
                    best_val = v;
                    best_prev = r;
                }
            }
            next[s] = best_val + ln(params.b(s, ot));
            back[t][s] = best_prev;
        }
        std::mem::swap(&mut score, &mut next);
    }

    let mut path = vec![0usize; t_len];
    path[t_len - 1] = argmax_lowest(&score);
    for t in (0..t_len - 1).rev() {
        path[t] = back[t + 1][path[t + 1]];
    }
    Ok(path)
}

/// Viterbi-based next-observation prediction: decode the most probable final
/// state and emit row `x_T` of `A B`.
pub fn viterbi_predict(
    params: &HmmParams,
    observations: &[u16],
) -> Result<PredictiveDistribution, PredictError> {
    let path = viterbi_path(params, observations)?;
    let last = *path.last().expect("nonempty path");
    let m = params.num_states();
    let l = params.num_obs();
    let mut probs = vec![0.0f64; l];
    for s in 0..m {
        let w = params.a(last, s);
        if w == 0.0 {
            continue;
        }
        for o in 0..l {
            probs[o] += w * params.b(s, o);
        }
    }
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        for p in &mut probs {
            *p /= total;
        }
    } else {
        probs = vec![1.0 / l as f64; l];
    }
    Ok(PredictiveDistribution::from_probs(probs))
}

/// Exact Bayesian prediction from the last `k + 1` observations only, with
/// the stationary distribution as the window prior.
pub fn truncated_forward_predict(
    params: &HmmParams,
    observations: &[u16],
    k: usize,
) -> Result<PredictiveDistribution, PredictError> {
    if observations.is_empty() {
        return Err(PredictError::EmptyHistory);
    }
    check_symbols(observations, params.num_obs())?;
    let mu = hmm::stationary_distribution(params.transition(), params.num_states())?;
    truncated_forward_with_prior(params, &mu, observations, k)
}

/// Same as [`truncated_forward_predict`] with a caller-supplied stationary
/// prior, so batch evaluation can solve for it once.
pub fn truncated_forward_with_prior(
    params: &HmmParams,
    mu: &[f64],
    observations: &[u16],
    k: usize,
) -> Result<PredictiveDistribution, PredictError> {
    if observations.is_empty() {
        return Err(PredictError::EmptyHistory);
    }
    check_symbols(observations, params.num_obs())?;
    let window_len = k.saturating_add(1).min(observations.len());
    let window = &observations[observations.len() - window_len..];
    let posterior = hmm::forward_posterior(params, mu, window);
    Ok(hmm::predict_from_posterior(params, &posterior, params.num_states()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::oracle_forward;

    fn fully_observed() -> HmmParams {
        HmmParams::new(
            2,
            2,
            vec![0.5, 0.5],
            vec![0.8, 0.2, 0.4, 0.6],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn viterbi_identity_emission_returns_transition_row() {
        let p = fully_observed();
        let d = viterbi_predict(&p, &[0, 1]).unwrap();
        assert!((d.probs()[0] - 0.4).abs() < 1e-12);
        assert!((d.probs()[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn viterbi_deterministic_chain_tracks_truth() {
        // Deterministic rotation: 0 -> 1 -> 0, B = I.
        let p = HmmParams::new(
            2,
            2,
            vec![1.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let obs = [0u16, 1, 0, 1, 0];
        for t in 1..=obs.len() {
            let d = viterbi_predict(&p, &obs[..t]).unwrap();
            let expected = usize::from(obs[t - 1] ^ 1);
            assert_eq!(d.argmax_index(), expected);
        }
    }

    #[test]
    fn viterbi_empty_history_is_error() {
        assert!(matches!(
            viterbi_predict(&fully_observed(), &[]),
            Err(PredictError::EmptyHistory)
        ));
    }

    #[test]
    fn truncated_zero_window_identity_emission() {
        // k = 0 with B = I conditions on the last symbol only: row o_t of A.
        let p = fully_observed();
        let d = truncated_forward_predict(&p, &[1, 1, 0], 0).unwrap();
        assert!((d.probs()[0] - 0.8).abs() < 1e-12);
        assert!((d.probs()[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn truncated_full_window_matches_oracle_under_stationary_start() {
        // When pi = mu, the k >= t-1 window reproduces the exact oracle.
        let mu = crate::hmm::stationary_distribution(&[0.8, 0.2, 0.4, 0.6], 2).unwrap();
        let p = HmmParams::new(
            2,
            3,
            mu.clone(),
            vec![0.8, 0.2, 0.4, 0.6],
            vec![0.5, 0.3, 0.2, 0.1, 0.2, 0.7],
        )
        .unwrap();
        let obs = [2u16, 0, 1, 0, 2, 1];
        for t in 1..=obs.len() {
            let full = oracle_forward(&p, &obs[..t]).unwrap();
            let trunc = truncated_forward_predict(&p, &obs[..t], t.max(8)).unwrap();
            for (a, b) in full.probs().iter().zip(trunc.probs()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
