//! Baum-Welch expectation-maximization for a single observation sequence.
//!
//! Forward and backward passes use per-step scaling (normalized alpha/beta)
//! so likelihoods stay representable at sequence length 2048 and beyond; the
//! scaling factors reconstruct the exact log-likelihood and leave the
//! posteriors gamma and xi unchanged.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::hmm::HmmParams;

use super::{check_symbols, PredictError};

/// Absolute slack when asserting the EM monotonicity guarantee; covers f64
/// rounding in the scaled recursions, nothing more.
const MONOTONICITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct BaumWelchOptions {
    pub max_iters: usize,
    /// Stop once the per-symbol log-likelihood improvement is at or below
    /// this. `f64::INFINITY` returns the initialization untouched.
    pub tol: f64,
}

impl Default for BaumWelchOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BaumWelchWarning {
    /// The sequence contains a single distinct symbol while M > 1.
    DegenerateSequence,
    /// A state accumulated (numerically) zero occupancy; its rows were left
    /// at their previous values.
    DeadState,
    /// The log-likelihood decreased beyond numerical slack. EM guarantees
    /// this never happens in exact arithmetic.
    MonotonicityViolation,
}

/// A fitted model plus the optimization trace.
#[derive(Debug, Clone)]
pub struct BaumWelchFit {
    pub params: HmmParams,
    /// Total log-likelihood of the sequence after each E-step.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub warnings: Vec<BaumWelchWarning>,
}

impl BaumWelchFit {
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Random stochastic rows drawn from `init_seed`; entries are bounded away
/// from zero so the first E-step cannot underflow.
pub fn random_initialization(m: usize, l: usize, init_seed: u64) -> HmmParams {
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut row = |n: usize| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
        let total: f64 = v.iter().sum();
        for x in &mut v {
            *x /= total;
        }
        v
    };
    let pi = row(m);
    let mut a = Vec::with_capacity(m * m);
    for _ in 0..m {
        a.extend(row(m));
    }
    let mut b = Vec::with_capacity(m * l);
    for _ in 0..m {
        b.extend(row(l));
    }
    HmmParams::new(m, l, pi, a, b).expect("dimensions are consistent")
}

/// Fit an `m`-state HMM to one observation sequence over alphabet size `l`.
pub fn baum_welch_fit(
    observations: &[u16],
    m: usize,
    l: usize,
    init_seed: u64,
    options: BaumWelchOptions,
) -> Result<BaumWelchFit, PredictError> {
    if observations.is_empty() {
        return Err(PredictError::EmptyHistory);
    }
    if m == 0 || l == 0 {
        return Err(PredictError::Invalid("M and L must be >= 1".into()));
    }
    check_symbols(observations, l)?;

    let mut warnings = Vec::new();
    let distinct = {
        let mut seen = vec![false; l];
        observations.iter().for_each(|&o| seen[usize::from(o)] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct == 1 && m > 1 {
        warnings.push(BaumWelchWarning::DegenerateSequence);
    }

    if m == 1 {
        return Ok(single_state_fit(observations, l, warnings));
    }

    let mut params = random_initialization(m, l, init_seed);
    let t_len = observations.len();
    let mut alpha = vec![0.0f64; t_len * m];
    let mut beta = vec![0.0f64; t_len * m];
    let mut scale = vec![0.0f64; t_len];

    let mut trace: Vec<f64> = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut iterations = 0usize;

    for _ in 0..options.max_iters {
        let ll = forward_scaled(&params, observations, &mut alpha, &mut scale);
        if let Some(&last) = trace.last() {
            if ll < last - MONOTONICITY_SLACK {
                warnings.push(BaumWelchWarning::MonotonicityViolation);
                debug_assert!(false, "EM log-likelihood decreased: {last} -> {ll}");
            }
        }
        trace.push(ll);
        let improvement = (ll - prev_ll) / t_len as f64;
        if improvement <= options.tol {
            break;
        }
        prev_ll = ll;
        iterations += 1;

        backward_scaled(&params, observations, &scale, &mut beta);
        params = m_step(&params, observations, &alpha, &beta, &scale, &mut warnings);
    }

    warnings.dedup();
    Ok(BaumWelchFit {
        params,
        log_likelihood_trace: trace,
        iterations,
        warnings,
    })
}

fn single_state_fit(observations: &[u16], l: usize, warnings: Vec<BaumWelchWarning>) -> BaumWelchFit {
    let mut counts = vec![0.0f64; l];
    for &o in observations {
        counts[usize::from(o)] += 1.0;
    }
    let total = observations.len() as f64;
    let b: Vec<f64> = counts.iter().map(|&c| c / total).collect();
    let ll: f64 = counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| c * (c / total).ln())
        .sum();
    BaumWelchFit {
        params: HmmParams::new(1, l, vec![1.0], vec![1.0], b).expect("single state"),
        log_likelihood_trace: vec![ll],
        iterations: 1,
        warnings,
    }
}

/// Scaled forward pass; returns the total log-likelihood.
fn forward_scaled(params: &HmmParams, obs: &[u16], alpha: &mut [f64], scale: &mut [f64]) -> f64 {
    let m = params.num_states();
    let t_len = obs.len();
    let mut ll = 0.0f64;
    for t in 0..t_len {
        let o = usize::from(obs[t]);
        if t == 0 {
            for s in 0..m {
                alpha[s] = params.pi()[s] * params.b(s, o);
            }
        } else {
            let (prev, cur) = alpha.split_at_mut(t * m);
            let prev = &prev[(t - 1) * m..];
            for s in 0..m {
                let mut acc = 0.0;
                for r in 0..m {
                    acc += prev[r] * params.a(r, s);
                }
                cur[s] = acc * params.b(s, o);
            }
        }
        let row = &mut alpha[t * m..(t + 1) * m];
        let c: f64 = row.iter().sum();
        let c = if c > 0.0 { c } else { f64::MIN_POSITIVE };
        for v in row {
            *v /= c;
        }
        scale[t] = c;
        ll += c.ln();
    }
    ll
}

fn backward_scaled(params: &HmmParams, obs: &[u16], scale: &[f64], beta: &mut [f64]) {
    let m = params.num_states();
    let t_len = obs.len();
    for s in 0..m {
        beta[(t_len - 1) * m + s] = 1.0;
    }
    for t in (0..t_len - 1).rev() {
        let o_next = usize::from(obs[t + 1]);
        let c = scale[t + 1];
        let (cur, next) = beta.split_at_mut((t + 1) * m);
        let cur = &mut cur[t * m..];
        for s in 0..m {
            let mut acc = 0.0;
            for r in 0..m {
                acc += params.a(s, r) * params.b(r, o_next) * next[r];
            }
            cur[s] = acc / c;
        }
    }
}

fn m_step(
    params: &HmmParams,
    obs: &[u16],
    alpha: &[f64],
    beta: &[f64],
    scale: &[f64],
    warnings: &mut Vec<BaumWelchWarning>,
) -> HmmParams {
    let m = params.num_states();
    let l = params.num_obs();
    let t_len = obs.len();

    // gamma_t[s] = alpha_t[s] * beta_t[s] with the scaling chosen above;
    // each row already sums to 1.
    let gamma = |t: usize, s: usize| alpha[t * m + s] * beta[t * m + s];

    let mut pi = vec![0.0f64; m];
    for s in 0..m {
        pi[s] = gamma(0, s);
    }

    let mut a_num = vec![0.0f64; m * m];
    let mut a_den = vec![0.0f64; m];
    for t in 0..t_len - 1 {
        let o_next = usize::from(obs[t + 1]);
        let c_next = scale[t + 1];
        for s in 0..m {
            let g = gamma(t, s);
            a_den[s] += g;
            let a_s = alpha[t * m + s];
            if a_s == 0.0 {
                continue;
            }
            for r in 0..m {
                let xi = a_s * params.a(s, r) * params.b(r, o_next) * beta[(t + 1) * m + r] / c_next;
                a_num[s * m + r] += xi;
            }
        }
    }

    let mut b_num = vec![0.0f64; m * l];
    let mut b_den = vec![0.0f64; m];
    for t in 0..t_len {
        let o = usize::from(obs[t]);
        for s in 0..m {
            let g = gamma(t, s);
            b_num[s * l + o] += g;
            b_den[s] += g;
        }
    }

    let mut a = params.transition().to_vec();
    let mut b = params.emission().to_vec();
    let mut dead = false;
    for s in 0..m {
        if a_den[s] > 0.0 {
            for r in 0..m {
                a[s * m + r] = a_num[s * m + r] / a_den[s];
            }
        } else {
            dead = true;
        }
        if b_den[s] > 0.0 {
            for o in 0..l {
                b[s * l + o] = b_num[s * l + o] / b_den[s];
            }
        } else {
            dead = true;
        }
    }
    if dead {
        warnings.push(BaumWelchWarning::DeadState);
    }

    HmmParams::new(m, l, pi, a, b).expect("dimensions preserved")
}
