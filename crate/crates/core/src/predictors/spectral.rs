//! Single-trajectory spectral learning.
//!
//! Method-of-moments estimation of projected observation operators from the
//! unigram/bigram/trigram statistics of one observation sequence, followed by
//! belief updates and next-symbol scoring. No transition or emission matrix
//! is ever recovered; prediction happens entirely through the estimated
//! operators.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{check_symbols, PredictError, PredictiveDistribution};

/// Floor applied to next-symbol scores before renormalization.
pub const DEFAULT_SPECTRAL_CLAMP: f64 = 1e-10;

/// Relative singular-value cutoff for every pseudo-inverse taken here.
const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// `sigma_M` of the bigram moment matrix below this is rank deficiency.
const RANK_TOL: f64 = 1e-12;

/// Belief normalizers below this magnitude abort the update chain.
const BLOWUP_TOL: f64 = 1e-300;

/// Conditioning diagnostics captured while fitting.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralConditioning {
    /// M-th largest singular value of the bigram moment matrix.
    pub sigma_m: f64,
}

/// Estimated spectral parameters for one sequence.
#[derive(Debug, Clone)]
pub struct SpectralParams {
    /// L x M orthonormal-column projection (top left singular vectors).
    pub projection: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub b_inf: DVector<f64>,
    /// One M x M operator per observation symbol.
    pub operators: Vec<DMatrix<f64>>,
    pub burn_in_used: usize,
    pub cond: SpectralConditioning,
    /// Score-clamp floor used at prediction time.
    pub clamp_floor: f64,
}

/// Outcome of a spectral prediction, with stabilization diagnostics.
#[derive(Debug, Clone)]
pub struct SpectralPrediction {
    pub dist: PredictiveDistribution,
    /// Any score fell below the clamp floor before renormalization.
    pub clamped: bool,
    /// A belief normalizer collapsed; the output fell back to uniform.
    pub blowup: bool,
    /// Smallest belief-normalizer magnitude seen over the update chain.
    pub min_normalizer: f64,
}

/// Default burn-in when the harness knows the true mixing rate.
pub fn default_burn_in(lambda2: f64) -> usize {
    if lambda2 >= 1.0 {
        return 0;
    }
    (10.0 / (1.0 - lambda2)).ceil() as usize
}

/// Estimate spectral parameters from one observation sequence.
///
/// The first `burn_in` symbols are discarded; sliding windows over the rest
/// produce the unigram vector, bigram matrix `[i, j] = freq(o_k = i,
/// o_{k-1} = j)`, and per-symbol trigram slices. `l` is the alphabet size
/// and `m` the number of hidden states to project onto.
pub fn spectral_fit(
    observations: &[u16],
    m: usize,
    l: usize,
    burn_in: usize,
    clamp_floor: f64,
) -> Result<SpectralParams, PredictError> {
    if m == 0 {
        return Err(PredictError::Invalid("M must be >= 1".into()));
    }
    if l < m {
        return Err(PredictError::StateCountExceedsAlphabet { m, l });
    }
    check_symbols(observations, l)?;
    if observations.len() < burn_in + 3 {
        return Err(PredictError::SequenceTooShort {
            needed: burn_in + 3,
            have: observations.len(),
        });
    }
    let obs = &observations[burn_in..];
    let n = obs.len();

    let mut p1 = DVector::<f64>::zeros(l);
    for &o in obs {
        p1[usize::from(o)] += 1.0;
    }
    p1 /= n as f64;

    let mut p2 = DMatrix::<f64>::zeros(l, l);
    for w in obs.windows(2) {
        p2[(usize::from(w[1]), usize::from(w[0]))] += 1.0;
    }
    p2 /= (n - 1) as f64;

    let mut p3 = vec![DMatrix::<f64>::zeros(l, l); l];
    for w in obs.windows(3) {
        p3[usize::from(w[1])][(usize::from(w[2]), usize::from(w[0]))] += 1.0;
    }
    for slice in &mut p3 {
        *slice /= (n - 2) as f64;
    }

    let svd = p2
        .clone()
        .try_svd(true, false, f64::EPSILON, 100_000)
        .ok_or(PredictError::RankDeficient { sigma_m: f64::NAN })?;
    let sigma_m = svd.singular_values.get(m - 1).copied().unwrap_or(0.0);
    if sigma_m < RANK_TOL {
        return Err(PredictError::RankDeficient { sigma_m });
    }
    let u = svd.u.expect("requested U").columns(0, m).into_owned();

    let b1 = u.transpose() * &p1;
    let b_inf = pseudo_inverse(&(p2.transpose() * &u))? * &p1;
    let ut_p2_pinv = pseudo_inverse(&(u.transpose() * &p2))?;
    let operators: Vec<DMatrix<f64>> = p3
        .iter()
        .map(|slice| u.transpose() * slice * &ut_p2_pinv)
        .collect();

    Ok(SpectralParams {
        projection: u,
        b1,
        b_inf,
        operators,
        burn_in_used: burn_in,
        cond: SpectralConditioning { sigma_m },
        clamp_floor,
    })
}

/// Run the belief update over a history and score every candidate next
/// symbol. Scores are floored at the clamp and renormalized.
pub fn spectral_predict(
    sp: &SpectralParams,
    observations: &[u16],
) -> Result<SpectralPrediction, PredictError> {
    let l = sp.operators.len();
    check_symbols(observations, l)?;

    let mut belief = sp.b1.clone();
    let mut min_normalizer = f64::INFINITY;
    let mut blowup = false;
    for &o in observations {
        let pushed = &sp.operators[usize::from(o)] * &belief;
        let normalizer = sp.b_inf.dot(&pushed);
        min_normalizer = min_normalizer.min(normalizer.abs());
        if normalizer.abs() < BLOWUP_TOL {
            blowup = true;
            break;
        }
        belief = pushed / normalizer;
    }

    if blowup {
        return Ok(SpectralPrediction {
            dist: PredictiveDistribution::uniform(l),
            clamped: false,
            blowup: true,
            min_normalizer,
        });
    }

    let mut scores = vec![0.0f64; l];
    let mut clamped = false;
    for (o, op) in sp.operators.iter().enumerate() {
        let s = sp.b_inf.dot(&(op * &belief));
        if s < sp.clamp_floor {
            clamped = true;
            scores[o] = sp.clamp_floor;
        } else {
            scores[o] = s;
        }
    }
    let total: f64 = scores.iter().sum();
    for s in &mut scores {
        *s /= total;
    }
    Ok(SpectralPrediction {
        dist: PredictiveDistribution::from_probs(scores),
        clamped,
        blowup: false,
        min_normalizer,
    })
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
fn pseudo_inverse(mat: &DMatrix<f64>) -> Result<DMatrix<f64>, PredictError> {
    let svd = mat
        .clone()
        .try_svd(true, true, f64::EPSILON, 100_000)
        .ok_or_else(|| PredictError::Invalid("SVD did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = max_sv * PINV_RELATIVE_CUTOFF;
    let mut inv = DMatrix::<f64>::zeros(v_t.nrows(), u.ncols());
    for (i, &sv) in svd.singular_values.iter().enumerate() {
        if sv > cutoff {
            inv[(i, i)] = 1.0 / sv;
        }
    }
    Ok(v_t.transpose() * inv * u.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{oracle_forward, HmmParams};
    use crate::metrics::hellinger;
    use crate::sampler::sample_batch;

    #[test]
    fn rejects_more_states_than_symbols() {
        let obs = vec![0u16, 1, 0, 1, 0, 1];
        assert!(matches!(
            spectral_fit(&obs, 3, 2, 0, DEFAULT_SPECTRAL_CLAMP),
            Err(PredictError::StateCountExceedsAlphabet { .. })
        ));
    }

    #[test]
    fn constant_sequence_is_rank_deficient() {
        let obs = vec![0u16; 100];
        assert!(matches!(
            spectral_fit(&obs, 2, 2, 0, DEFAULT_SPECTRAL_CLAMP),
            Err(PredictError::RankDeficient { .. })
        ));
    }

    #[test]
    fn too_short_sequence_errors() {
        assert!(matches!(
            spectral_fit(&[0u16, 1], 2, 2, 0, DEFAULT_SPECTRAL_CLAMP),
            Err(PredictError::SequenceTooShort { .. })
        ));
    }

    #[test]
    fn projection_has_orthonormal_columns() {
        let truth = HmmParams::new(
            2,
            2,
            vec![0.5, 0.5],
            vec![0.8, 0.2, 0.4, 0.6],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let batch = sample_batch(&truth, 1, 5000, 11).unwrap();
        let sp = spectral_fit(&batch.observations[0], 2, 2, 0, DEFAULT_SPECTRAL_CLAMP).unwrap();
        let gram = sp.projection.transpose() * &sp.projection;
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expected).abs() < 1e-8);
            }
        }
        assert_eq!(sp.operators.len(), 2);
    }

    #[test]
    fn single_symbol_alphabet_predicts_certainty() {
        let obs = vec![0u16; 50];
        let sp = spectral_fit(&obs, 1, 1, 0, DEFAULT_SPECTRAL_CLAMP).unwrap();
        let pred = spectral_predict(&sp, &obs).unwrap();
        assert!((pred.dist.probs()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fully_observed_chain_converges_to_markov_conditional() {
        // B = I makes observations a first-order Markov chain; at T = 100k
        // the spectral prediction must be within 0.02 Hellinger of the true
        // conditional row of A.
        let truth = HmmParams::new(
            2,
            2,
            vec![2.0 / 3.0, 1.0 / 3.0],
            vec![0.8, 0.2, 0.4, 0.6],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let batch = sample_batch(&truth, 1, 100_000, 2048).unwrap();
        let obs = &batch.observations[0];
        let sp = spectral_fit(obs, 2, 2, 0, DEFAULT_SPECTRAL_CLAMP).unwrap();
        let pred = spectral_predict(&sp, obs).unwrap();
        let oracle = oracle_forward(&truth, obs).unwrap();
        let h = hellinger(pred.dist.probs(), oracle.probs()).unwrap();
        assert!(h <= 0.02, "Hellinger {h} above tolerance");
    }
}
