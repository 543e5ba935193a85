//! A benchmark laboratory for learning and predicting hidden Markov model
//! sequences.
//!
//! The crate synthesizes HMMs with controlled mixing rate, entropy, and
//! stationary distribution, samples reproducible trajectory batches, runs a
//! suite of next-observation predictors (Viterbi oracle, truncated-memory
//! forward inference, Baum-Welch, smoothed n-grams, single-trajectory
//! spectral learning, and an optional in-context LLM predictor over HTTP),
//! and reports per-context-length accuracy and Hellinger-distance curves
//! with derived convergence summaries.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`hmm`]: parameter types and exact chain analysis
//! - [`synth`]: constrained construction of parameter sets
//! - [`sampler`]: seeded trajectory batches and token codecs
//! - [`predictors`]: the prediction method suite
//! - [`metrics`]: curves, Hellinger distance, convergence summaries
//! - [`llm`]: the HTTP next-token bridge with cache and fixtures
//! - [`experiment`]: run orchestration, ingestion, and artifacts
//!
//! # Quick start
//!
//! ```
//! use hmmlab::hmm::{oracle_forward, HmmParams};
//! use hmmlab::predictors::viterbi_predict;
//! use hmmlab::sampler::sample_batch;
//!
//! // Two hidden states emitting two symbols with sticky transitions.
//! let params = HmmParams::validated(
//!     2,
//!     2,
//!     vec![0.5, 0.5],
//!     vec![0.9, 0.1, 0.2, 0.8],
//!     vec![0.95, 0.05, 0.1, 0.9],
//! )
//! .unwrap();
//!
//! let analysis = params.analyze();
//! assert!(analysis.ergodic);
//!
//! let batch = sample_batch(&params, 4, 64, 7).unwrap();
//! let history = &batch.observations[0][..32];
//! let truth = oracle_forward(&params, history).unwrap();
//! let decoded = viterbi_predict(&params, history).unwrap();
//! assert_eq!(truth.probs().len(), 2);
//! assert_eq!(decoded.probs().len(), 2);
//! ```

// Index loops mirror the matrix subscripts of the recursions they
// implement; iterator rewrites would obscure them.
#![allow(clippy::needless_range_loop)]

pub mod experiment;
pub mod hmm;
pub mod llm;
pub mod metrics;
pub mod predictors;
pub mod sampler;
pub mod synth;

pub use hmm::{ChainAnalysis, HmmParams};
pub use metrics::{CurvePoint, CurveSummary, MethodSpec};
pub use predictors::PredictiveDistribution;
pub use sampler::{TokenCodec, TrajectoryBatch};
pub use synth::{SynthesisReport, SynthesisSpec};
