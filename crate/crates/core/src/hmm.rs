//! Finite-alphabet hidden Markov model parameters and exact analysis.
//!
//! An HMM over `M` hidden states and `L` observation symbols is the triple
//! `(pi, A, B)`: initial state distribution, row-stochastic transition
//! matrix, and row-stochastic emission matrix. This module holds the
//! parameter type shared by every predictor plus the exact chain-analysis
//! operations: stationary distribution, mixing rate (second-largest
//! eigenvalue modulus), stationary-weighted entropies, and the full-history
//! forward oracle used as the ground-truth conditional everywhere else.
//!
//! Symbols and states are 0-based in memory; external formats (sequence
//! files, the C API) are 1-based and converted at the I/O boundary.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictors::PredictiveDistribution;

/// Row sums of `A`, `B` and the sum of `pi` must hit 1 within this.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// The unit eigenvalue counts as simple only if the second-largest modulus
/// stays below `1 - ERGODIC_GAP_TOL`.
pub const ERGODIC_GAP_TOL: f64 = 1e-10;

const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
const POWER_ITERATION_TOL: f64 = 1e-12;
const POWER_ITERATION_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("unit eigenvalue of the transition matrix is not simple (modulus gap {gap:.3e})")]
    NonErgodic { gap: f64 },
    #[error("symbol {symbol} out of range for alphabet size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

/// The triple `(pi, A, B)` plus alphabet sizes.
///
/// Serialized form matches the on-disk params file: `{"M", "L", "pi", "A",
/// "B"}` with `A` and `B` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmmParams {
    #[serde(rename = "M")]
    num_states: usize,
    #[serde(rename = "L")]
    num_obs: usize,
    pi: Vec<f64>,
    #[serde(rename = "A")]
    transition: Vec<f64>,
    #[serde(rename = "B")]
    emission: Vec<f64>,
}

impl HmmParams {
    /// Build parameters after checking dimensions only. Stochasticity is
    /// reported by [`validate`], not enforced here, so that candidate
    /// parameters can be inspected as data.
    pub fn new(
        num_states: usize,
        num_obs: usize,
        pi: Vec<f64>,
        transition: Vec<f64>,
        emission: Vec<f64>,
    ) -> Result<Self, HmmError> {
        if num_states == 0 || num_obs == 0 {
            return Err(HmmError::Invalid("M and L must be >= 1".into()));
        }
        if pi.len() != num_states {
            return Err(HmmError::Invalid(format!(
                "pi length {} != M {}",
                pi.len(),
                num_states
            )));
        }
        if transition.len() != num_states * num_states {
            return Err(HmmError::Invalid(format!(
                "A length {} != M*M {}",
                transition.len(),
                num_states * num_states
            )));
        }
        if emission.len() != num_states * num_obs {
            return Err(HmmError::Invalid(format!(
                "B length {} != M*L {}",
                emission.len(),
                num_states * num_obs
            )));
        }
        Ok(Self {
            num_states,
            num_obs,
            pi,
            transition,
            emission,
        })
    }

    /// Dimension-checked and fully validated construction.
    pub fn validated(
        num_states: usize,
        num_obs: usize,
        pi: Vec<f64>,
        transition: Vec<f64>,
        emission: Vec<f64>,
    ) -> Result<Self, HmmError> {
        let params = Self::new(num_states, num_obs, pi, transition, emission)?;
        let violations = validate(&params);
        if violations.is_empty() {
            Ok(params)
        } else {
            Err(HmmError::Invalid(
                violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn emission(&self) -> &[f64] {
        &self.emission
    }

    #[inline]
    pub fn a(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.num_states + to]
    }

    #[inline]
    pub fn b(&self, state: usize, symbol: usize) -> f64 {
        self.emission[state * self.num_obs + symbol]
    }

    pub fn a_row(&self, from: usize) -> &[f64] {
        &self.transition[from * self.num_states..(from + 1) * self.num_states]
    }

    pub fn b_row(&self, state: usize) -> &[f64] {
        &self.emission[state * self.num_obs..(state + 1) * self.num_obs]
    }

    /// Full exact analysis of the hidden chain. When the chain is not
    /// ergodic, `stationary` is the power-iteration limit point and the
    /// `ergodic` flag is false.
    pub fn analyze(&self) -> ChainAnalysis {
        let (stationary, ergodic) = match stationary_distribution(&self.transition, self.num_states)
        {
            Ok(mu) => (mu, true),
            Err(_) => (
                power_iteration(&self.transition, self.num_states).0,
                false,
            ),
        };
        let ent = entropies(self, &stationary);
        ChainAnalysis {
            stationary,
            mixing_rate: mixing_rate(&self.transition, self.num_states),
            transition_entropy: ent.transition,
            emission_entropy: ent.emission,
            normalized_joint_entropy: ent.normalized_joint,
            ergodic,
        }
    }

    fn check_symbols(&self, observations: &[u16]) -> Result<(), HmmError> {
        for &o in observations {
            if usize::from(o) >= self.num_obs {
                return Err(HmmError::SymbolOutOfRange {
                    symbol: usize::from(o) + 1,
                    alphabet: self.num_obs,
                });
            }
        }
        Ok(())
    }
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: &'static str,
    pub row: Option<usize>,
    pub col: Option<usize>,
    pub magnitude: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.constraint)?;
        if let Some(r) = self.row {
            write!(f, " row {r}")?;
        }
        if let Some(c) = self.col {
            write!(f, " col {c}")?;
        }
        write!(f, " (magnitude {:.3e})", self.magnitude)
    }
}

/// Report every violated parameter invariant. An empty list means the
/// parameters are valid.
pub fn validate(params: &HmmParams) -> Vec<Violation> {
    let m = params.num_states;
    let l = params.num_obs;
    let mut out = Vec::new();

    let mut check_matrix = |data: &[f64], cols: usize, sum_name: &'static str, entry_name: &'static str| {
        for row in 0..data.len() / cols {
            let slice = &data[row * cols..(row + 1) * cols];
            let sum: f64 = slice.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                out.push(Violation {
                    constraint: sum_name,
                    row: Some(row),
                    col: None,
                    magnitude: (sum - 1.0).abs(),
                });
            }
            for (col, &v) in slice.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || v.is_nan() {
                    out.push(Violation {
                        constraint: entry_name,
                        row: Some(row),
                        col: Some(col),
                        magnitude: if v < 0.0 { -v } else { v - 1.0 },
                    });
                }
            }
        }
    };

    check_matrix(&params.transition, m, "transition row sum != 1", "transition entry outside [0,1]");
    check_matrix(&params.emission, l, "emission row sum != 1", "emission entry outside [0,1]");

    let pi_sum: f64 = params.pi.iter().sum();
    if (pi_sum - 1.0).abs() > ROW_SUM_TOL {
        out.push(Violation {
            constraint: "pi sum != 1",
            row: None,
            col: None,
            magnitude: (pi_sum - 1.0).abs(),
        });
    }
    for (col, &v) in params.pi.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) || v.is_nan() {
            out.push(Violation {
                constraint: "pi entry outside [0,1]",
                row: None,
                col: Some(col),
                magnitude: if v < 0.0 { -v } else { v - 1.0 },
            });
        }
    }
    out
}

/// Exact analysis results for the hidden chain of one parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainAnalysis {
    pub stationary: Vec<f64>,
    pub mixing_rate: f64,
    pub transition_entropy: f64,
    pub emission_entropy: f64,
    pub normalized_joint_entropy: f64,
    pub ergodic: bool,
}

/// Stationary-weighted entropies in nats, plus their normalized forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropies {
    pub transition: f64,
    pub emission: f64,
    pub normalized_transition: f64,
    pub normalized_emission: f64,
    pub normalized_joint: f64,
}

#[inline]
fn plogp(p: f64) -> f64 {
    // 0 ln 0 := 0 by explicit branch so deterministic matrices report
    // exactly zero entropy.
    if p <= 0.0 {
        0.0
    } else {
        p * p.ln()
    }
}

/// `H(A) = -sum_ij mu_i a_ij ln a_ij`, `H(B, mu) = -sum_jl mu_j b_jl ln b_jl`,
/// with normalizations by `ln M` and `ln L` (zero when the denominator is).
pub fn entropies(params: &HmmParams, mu: &[f64]) -> Entropies {
    let m = params.num_states;
    let l = params.num_obs;
    let mut h_a = 0.0;
    let mut h_b = 0.0;
    for i in 0..m {
        let w = mu[i];
        h_a -= w * params.a_row(i).iter().map(|&p| plogp(p)).sum::<f64>();
        h_b -= w * params.b_row(i).iter().map(|&p| plogp(p)).sum::<f64>();
    }
    let ln_m = (m as f64).ln();
    let ln_l = (l as f64).ln();
    let norm = |h: f64, d: f64| if d > 0.0 { h / d } else { 0.0 };
    Entropies {
        transition: h_a,
        emission: h_b,
        normalized_transition: norm(h_a, ln_m),
        normalized_emission: norm(h_b, ln_l),
        normalized_joint: norm(h_a + h_b, ln_m + ln_l),
    }
}

/// Modulus of the second-largest eigenvalue of a row-stochastic matrix.
///
/// The known unit eigenpair (eigenvalue 1, right eigenvector of ones) is
/// removed by Wielandt deflation, which leaves the remaining spectrum
/// untouched; the deflated spectral radius is then the Gelfand limit
/// `lim ||B^n||^(1/n)` evaluated by normalized repeated squaring. Unlike QR
/// iteration this costs a fixed 60 matrix squarings and cannot stall on
/// defective or repeated spectra.
pub fn mixing_rate(transition: &[f64], m: usize) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    // Identical rows mean a rank-one matrix whose spectrum is {1, 0, ..};
    // report an exact zero rather than the repeated-squaring noise floor.
    let first = &transition[..m];
    let rank_one = transition
        .chunks_exact(m)
        .all(|row| row.iter().zip(first).all(|(a, b)| (a - b).abs() <= 1e-10));
    if rank_one {
        return 0.0;
    }
    let w = 1.0 / m as f64;
    let mut deflated = DMatrix::from_row_slice(m, m, transition);
    for v in deflated.iter_mut() {
        *v -= w;
    }
    spectral_radius(deflated).min(1.0)
}

fn spectral_radius(mut c: DMatrix<f64>) -> f64 {
    let mut acc = 0.0f64;
    let mut weight = 1.0f64;
    for _ in 0..60 {
        let norm = c.norm();
        if !norm.is_finite() {
            return f64::INFINITY;
        }
        if norm == 0.0 {
            return 0.0;
        }
        acc += weight * norm.ln();
        weight *= 0.5;
        c /= norm;
        c = &c * &c;
    }
    acc.exp()
}

/// Whether the unit eigenvalue is simple, i.e. the chain has a unique
/// stationary distribution it converges to (unichains pass).
pub fn is_ergodic(transition: &[f64], m: usize) -> bool {
    m == 1 || unit_eigenvalue_gap(transition, m) >= ERGODIC_GAP_TOL
}

fn unit_eigenvalue_gap(transition: &[f64], m: usize) -> f64 {
    if m <= 1 {
        return 1.0;
    }
    1.0 - mixing_rate(transition, m)
}

/// Solve `mu = mu A` for the unique stationary distribution.
///
/// The eigen route extracts the null vector of `A^T - I` by SVD; if the
/// residual is above tolerance a power-iteration fallback refines it.
pub fn stationary_distribution(transition: &[f64], m: usize) -> Result<Vec<f64>, HmmError> {
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let gap = unit_eigenvalue_gap(transition, m);
    if gap < ERGODIC_GAP_TOL {
        return Err(HmmError::NonErgodic { gap });
    }

    let at = DMatrix::from_row_slice(m, m, transition).transpose();
    let shifted = &at - DMatrix::identity(m, m);
    let Some(svd) = shifted.try_svd(false, true, f64::EPSILON, 100_000) else {
        let (mu, residual) = power_iteration(transition, m);
        if residual > STATIONARY_RESIDUAL_TOL {
            return Err(HmmError::NonErgodic { gap });
        }
        return Ok(mu);
    };
    let v_t = svd.v_t.expect("requested V^T");
    // Null vector = right singular vector of the smallest singular value.
    let mut mu: Vec<f64> = v_t.row(m - 1).iter().copied().collect();
    let total: f64 = mu.iter().sum();
    if total < 0.0 {
        for v in &mut mu {
            *v = -*v;
        }
    }
    for v in &mut mu {
        *v = v.max(0.0);
    }
    let total: f64 = mu.iter().sum();
    if total > 0.0 {
        for v in &mut mu {
            *v /= total;
        }
    }

    if stationary_residual(transition, m, &mu) > STATIONARY_RESIDUAL_TOL || total <= 0.0 {
        let (refined, residual) = power_iteration(transition, m);
        if residual > STATIONARY_RESIDUAL_TOL {
            return Err(HmmError::NonErgodic { gap });
        }
        mu = refined;
    }
    Ok(mu)
}

/// Max-norm of `mu A - mu`.
pub fn stationary_residual(transition: &[f64], m: usize, mu: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m {
        let mut acc = 0.0;
        for i in 0..m {
            acc += mu[i] * transition[i * m + j];
        }
        worst = worst.max((acc - mu[j]).abs());
    }
    worst
}

fn power_iteration(transition: &[f64], m: usize) -> (Vec<f64>, f64) {
    let mut mu = vec![1.0 / m as f64; m];
    let mut next = vec![0.0f64; m];
    for _ in 0..POWER_ITERATION_CAP {
        next.fill(0.0);
        for i in 0..m {
            let w = mu[i];
            let row = &transition[i * m..(i + 1) * m];
            for j in 0..m {
                next[j] += w * row[j];
            }
        }
        let total: f64 = next.iter().sum();
        if total > 0.0 {
            for v in &mut next {
                *v /= total;
            }
        }
        let delta = mu
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        std::mem::swap(&mut mu, &mut next);
        if delta < POWER_ITERATION_TOL {
            break;
        }
    }
    let residual = stationary_residual(transition, m, &mu);
    (mu, residual)
}

/// Exact conditional `P(O_{t+1} | O_{1:t})` under the true parameters.
///
/// Forward recursion over the entire history with per-step normalization.
/// The empty history returns the prior predictive `pi A B` normalized. If a
/// history has zero likelihood under the parameters the belief resets to
/// uniform over states so the output stays a probability vector.
pub fn oracle_forward(
    params: &HmmParams,
    observations: &[u16],
) -> Result<PredictiveDistribution, HmmError> {
    params.check_symbols(observations)?;
    let m = params.num_states();
    let posterior = forward_posterior(params, params.pi(), observations);
    Ok(predict_from_posterior(params, &posterior, m))
}

/// Normalized state posterior after filtering `observations`, starting from
/// `prior`. Shared by the oracle and the truncated-window predictor.
pub(crate) fn forward_posterior(params: &HmmParams, prior: &[f64], observations: &[u16]) -> Vec<f64> {
    let m = params.num_states();
    let mut alpha: Vec<f64> = prior.to_vec();
    let mut scratch = vec![0.0f64; m];
    for (step, &obs) in observations.iter().enumerate() {
        let o = usize::from(obs);
        if step == 0 {
            for s in 0..m {
                scratch[s] = params.b(s, o) * alpha[s];
            }
        } else {
            for s in 0..m {
                let mut acc = 0.0;
                for r in 0..m {
                    acc += params.a(r, s) * alpha[r];
                }
                scratch[s] = params.b(s, o) * acc;
            }
        }
        let total: f64 = scratch.iter().sum();
        if total > 0.0 {
            for s in 0..m {
                alpha[s] = scratch[s] / total;
            }
        } else {
            // Impossible history under these parameters; keep the belief a
            // probability vector.
            for s in 0..m {
                alpha[s] = 1.0 / m as f64;
            }
        }
    }
    alpha
}

/// One transition step from a state posterior, then marginalize through `B`.
pub(crate) fn predict_from_posterior(
    params: &HmmParams,
    posterior: &[f64],
    m: usize,
) -> PredictiveDistribution {
    let l = params.num_obs();
    let mut next_state = vec![0.0f64; m];
    for r in 0..m {
        let w = posterior[r];
        if w == 0.0 {
            continue;
        }
        for s in 0..m {
            next_state[s] += w * params.a(r, s);
        }
    }
    let mut probs = vec![0.0f64; l];
    for s in 0..m {
        let w = next_state[s];
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
    PredictiveDistribution::from_probs(probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> Vec<f64> {
        vec![a, 1.0 - a, 1.0 - b, b]
    }

    #[test]
    fn validate_accepts_exactly_stochastic() {
        let p = HmmParams::new(
            2,
            2,
            vec![0.5, 0.5],
            vec![0.5, 0.5, 0.5, 0.5],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        assert!(validate(&p).is_empty());
    }

    #[test]
    fn validate_reports_row_sum() {
        let p = HmmParams::new(
            2,
            2,
            vec![0.5, 0.5],
            vec![0.6, 0.6, 0.5, 0.5],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let v = validate(&p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].row, Some(0));
        assert!((v[0].magnitude - 0.2).abs() < 1e-12);
    }

    #[test]
    fn validate_reports_negativity() {
        let p = HmmParams::new(
            2,
            2,
            vec![0.5, 0.5],
            vec![1.01, -0.01, 0.5, 0.5],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let v = validate(&p);
        // One negative entry plus one entry above 1; row sums still hit 1.
        assert_eq!(v.len(), 2);
        assert!(v.iter().any(|x| x.col == Some(1) && (x.magnitude - 0.01).abs() < 1e-12));
    }

    #[test]
    fn stationary_symmetric_chain() {
        let mu = stationary_distribution(&two_state(0.9, 0.9), 2).unwrap();
        assert!((mu[0] - 0.5).abs() < 1e-10);
        assert!((mu[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn stationary_doubly_stochastic() {
        let mu = stationary_distribution(&two_state(0.5, 0.5), 2).unwrap();
        assert!((mu[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn stationary_hand_solved_two_state() {
        // mu = mu A for A = [[0.8, 0.2], [0.4, 0.6]] gives mu = [2/3, 1/3].
        let mu = stationary_distribution(&[0.8, 0.2, 0.4, 0.6], 2).unwrap();
        assert!((mu[0] - 2.0 / 3.0).abs() < 1e-10, "{mu:?}");
        assert!((mu[1] - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn stationary_rejects_identity() {
        let err = stationary_distribution(&[1.0, 0.0, 0.0, 1.0], 2).unwrap_err();
        assert!(matches!(err, HmmError::NonErgodic { .. }));
    }

    #[test]
    fn stationary_rejects_periodic() {
        let err = stationary_distribution(&[0.0, 1.0, 1.0, 0.0], 2).unwrap_err();
        assert!(matches!(err, HmmError::NonErgodic { .. }));
    }

    #[test]
    fn mixing_rate_symmetric_two_state() {
        assert!((mixing_rate(&two_state(0.9, 0.9), 2) - 0.8).abs() < 1e-10);
    }

    #[test]
    fn mixing_rate_rank_one_is_zero() {
        assert!(mixing_rate(&two_state(0.5, 0.5), 2).abs() < 1e-10);
    }

    #[test]
    fn mixing_rate_identity_is_one() {
        assert!((mixing_rate(&[1.0, 0.0, 0.0, 1.0], 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_uniform_rows() {
        let p = HmmParams::new(
            2,
            2,
            vec![0.5, 0.5],
            vec![0.5, 0.5, 0.5, 0.5],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let e = entropies(&p, &[0.5, 0.5]);
        assert!((e.transition - 2f64.ln()).abs() < 1e-12);
        assert!((e.emission - 0.0).abs() < 1e-15, "one-hot rows have zero entropy");
        assert!((e.normalized_transition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_hand_evaluated() {
        // -(0.9 ln 0.9 + 0.1 ln 0.1) = 0.325083...
        let p = HmmParams::new(
            2,
            2,
            vec![0.5, 0.5],
            two_state(0.9, 0.9),
            vec![0.5, 0.5, 0.5, 0.5],
        )
        .unwrap();
        let e = entropies(&p, &[0.5, 0.5]);
        let expected = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert!((e.transition - expected).abs() < 1e-12);
        assert!((expected - 0.3251).abs() < 1e-4);
    }

    #[test]
    fn entropy_single_state_normalization() {
        let p = HmmParams::new(1, 3, vec![1.0], vec![1.0], vec![0.2, 0.3, 0.5]).unwrap();
        let e = entropies(&p, &[1.0]);
        assert_eq!(e.normalized_transition, 0.0);
        assert!(e.normalized_joint > 0.0);
    }

    #[test]
    fn oracle_identity_emission_gives_transition_row() {
        // B = I means the chain is fully observed: prediction is row o_t of A.
        let p = HmmParams::new(
            2,
            2,
            vec![0.5, 0.5],
            vec![0.8, 0.2, 0.4, 0.6],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let d = oracle_forward(&p, &[0, 1, 1]).unwrap();
        assert!((d.probs()[0] - 0.4).abs() < 1e-12);
        assert!((d.probs()[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn oracle_empty_history_prior_predictive() {
        let p = HmmParams::new(
            2,
            2,
            vec![0.25, 0.75],
            vec![0.8, 0.2, 0.4, 0.6],
            vec![0.9, 0.1, 0.3, 0.7],
        )
        .unwrap();
        let d = oracle_forward(&p, &[]).unwrap();
        // pi A B, computed by hand.
        let pa = [
            0.25 * 0.8 + 0.75 * 0.4,
            0.25 * 0.2 + 0.75 * 0.6,
        ];
        let expected = [
            pa[0] * 0.9 + pa[1] * 0.3,
            pa[0] * 0.1 + pa[1] * 0.7,
        ];
        assert!((d.probs()[0] - expected[0]).abs() < 1e-12);
        assert!((d.probs()[1] - expected[1]).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_out_of_range_symbol() {
        let p = HmmParams::new(
            2,
            2,
            vec![0.5, 0.5],
            vec![0.5, 0.5, 0.5, 0.5],
            vec![0.5, 0.5, 0.5, 0.5],
        )
        .unwrap();
        assert!(matches!(
            oracle_forward(&p, &[2]),
            Err(HmmError::SymbolOutOfRange { .. })
        ));
    }

    #[test]
    fn oracle_impossible_history_stays_normalized() {
        let p = HmmParams::new(
            2,
            2,
            vec![1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        // Symbol 1 has zero probability from state 0 under an absorbing chain.
        let d = oracle_forward(&p, &[1]).unwrap();
        let total: f64 = d.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn serde_roundtrip_params_file_shape() {
        let p = HmmParams::new(
            2,
            3,
            vec![0.5, 0.5],
            vec![0.9, 0.1, 0.2, 0.8],
            vec![0.2, 0.3, 0.5, 0.6, 0.3, 0.1],
        )
        .unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"M\":2"));
        assert!(json.contains("\"A\":"));
        let back: HmmParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
