//! Brute-force reference computations shared by the integration suites.
//!
//! Everything here enumerates hidden paths directly and stays independent of
//! the dynamic-programming implementations it checks.
#![allow(dead_code)] // each test binary uses its own subset
#![allow(clippy::needless_range_loop)]

use hmmlab::HmmParams;

/// Joint-enumeration conditional `P(O_{t+1} | history)` from an explicit
/// prior over the first hidden state. `M^t` paths, exact.
pub fn enumerate_next_distribution(
    params: &HmmParams,
    prior: &[f64],
    history: &[u16],
) -> Vec<f64> {
    let m = params.num_states();
    let l = params.num_obs();
    let t = history.len();
    let mut next = vec![0.0f64; l];

    if t == 0 {
        // One transition step from the prior, then emit.
        for s0 in 0..m {
            for s in 0..m {
                let w = prior[s0] * params.a(s0, s);
                for o in 0..l {
                    next[o] += w * params.b(s, o);
                }
            }
        }
    } else {
        let mut path = vec![0usize; t];
        loop {
            // Weight of this hidden path against the observed history.
            let mut w = prior[path[0]] * params.b(path[0], usize::from(history[0]));
            for i in 1..t {
                w *= params.a(path[i - 1], path[i]) * params.b(path[i], usize::from(history[i]));
            }
            if w > 0.0 {
                let last = path[t - 1];
                for s in 0..m {
                    let ws = w * params.a(last, s);
                    for o in 0..l {
                        next[o] += ws * params.b(s, o);
                    }
                }
            }
            // Advance the mixed-radix path counter.
            let mut i = 0;
            loop {
                path[i] += 1;
                if path[i] < m {
                    break;
                }
                path[i] = 0;
                i += 1;
                if i == t {
                    let total: f64 = next.iter().sum();
                    if total > 0.0 {
                        for v in &mut next {
                            *v /= total;
                        }
                    }
                    return next;
                }
            }
        }
    }
    let total: f64 = next.iter().sum();
    if total > 0.0 {
        for v in &mut next {
            *v /= total;
        }
    }
    next
}

/// Most probable final hidden state by exhaustive path maximization, lowest
/// index on ties. Returns `None` when every path has zero probability.
pub fn enumerate_viterbi_final_state(params: &HmmParams, history: &[u16]) -> Option<usize> {
    let m = params.num_states();
    let t = history.len();
    assert!(t >= 1);
    let mut best_per_state = vec![0.0f64; m];
    let mut path = vec![0usize; t];
    loop {
        let mut w = params.pi()[path[0]] * params.b(path[0], usize::from(history[0]));
        for i in 1..t {
            w *= params.a(path[i - 1], path[i]) * params.b(path[i], usize::from(history[i]));
        }
        let last = path[t - 1];
        if w > best_per_state[last] {
            best_per_state[last] = w;
        }
        let mut i = 0;
        loop {
            path[i] += 1;
            if path[i] < m {
                break;
            }
            path[i] = 0;
            i += 1;
            if i == t {
                let mut best = 0usize;
                for s in 1..m {
                    if best_per_state[s] > best_per_state[best] {
                        best = s;
                    }
                }
                if best_per_state.iter().all(|&w| w == 0.0) {
                    return None;
                }
                return Some(best);
            }
        }
    }
}

/// Deterministic pseudo-random stochastic rows, entries bounded away from
/// zero, built on a splitmix64 stream.
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn stochastic_row(&mut self, n: usize) -> Vec<f64> {
        let mut row: Vec<f64> = (0..n).map(|_| 0.1 + self.next_f64()).collect();
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
        row
    }

    pub fn stochastic_matrix(&mut self, rows: usize, cols: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            out.extend(self.stochastic_row(cols));
        }
        out
    }
}

/// A strictly positive random HMM whose initial distribution equals its
/// stationary distribution.
pub fn random_stationary_hmm(m: usize, l: usize, seed: u64) -> HmmParams {
    let mut rng = TestRng(seed);
    let a = rng.stochastic_matrix(m, m);
    let b = rng.stochastic_matrix(m, l);
    let mu = hmmlab::hmm::stationary_distribution(&a, m).expect("positive chains are ergodic");
    HmmParams::new(m, l, mu, a, b).unwrap()
}

/// Every observation history of the given length over an `l`-symbol
/// alphabet.
pub fn all_histories(l: usize, len: usize) -> Vec<Vec<u16>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * l);
        for h in &out {
            for o in 0..l {
                let mut h2 = h.clone();
                h2.push(o as u16);
                next.push(h2);
            }
        }
        out = next;
    }
    out
}
