//! C ABI over the hmmlab core: opaque handles, status codes, and flat
//! buffers so other languages can drive synthesis, sampling, and the
//! predictor suite.
//!
//! Conventions: every fallible call returns [`HmmlabStatus`]; outputs go
//! through out-pointers; observation and state symbols are 1-based `u32` at
//! this boundary (matching the text file formats); strings returned by the
//! library must be released with `hmmlab_string_free` and handles with their
//! matching `_free` function. `hmmlab_last_error` returns a thread-local
//! message for the most recent failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use hmmlab::hmm::{self, HmmParams};
use hmmlab::predictors::{
    baum_welch_fit, ngram_predict, spectral_fit, spectral_predict, truncated_forward_predict,
    viterbi_predict, BaumWelchOptions, PredictiveDistribution, SpectralParams,
    DEFAULT_SPECTRAL_CLAMP,
};
use hmmlab::sampler::{sample_batch, TrajectoryBatch};
use hmmlab::synth::{build_setting, InitMode, StationaryMode, SynthesisSpec};

/// Status code for every fallible call. Zero is success; anything else is
/// an error whose detail is available from `hmmlab_last_error`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum HmmlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonErgodic = 3,
    SynthesisFailed = 4,
    SymbolOutOfRange = 5,
    RankDeficient = 6,
    SequenceTooShort = 7,
    BufferTooSmall = 8,
    Utf8Error = 9,
    JsonError = 10,
    InternalError = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: HmmlabStatus, message: &str) -> HmmlabStatus {
    set_error(message);
    status
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hmmlab_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static string.
#[no_mangle]
pub extern "C" fn hmmlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must have been returned by a hmmlab function and not freed before.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Model handle
// ---------------------------------------------------------------------------

/// Opaque HMM parameter set.
pub struct HmmlabModel(HmmParams);

fn predict_error_status(err: &hmmlab::predictors::PredictError) -> HmmlabStatus {
    use hmmlab::predictors::PredictError as E;
    match err {
        E::SymbolOutOfRange { .. } => HmmlabStatus::SymbolOutOfRange,
        E::RankDeficient { .. } => HmmlabStatus::RankDeficient,
        E::SequenceTooShort { .. } => HmmlabStatus::SequenceTooShort,
        E::StateCountExceedsAlphabet { .. } | E::Invalid(_) | E::EmptyHistory => {
            HmmlabStatus::InvalidArgument
        }
        E::Hmm(e) => hmm_error_status(e),
    }
}

fn hmm_error_status(err: &hmm::HmmError) -> HmmlabStatus {
    match err {
        hmm::HmmError::NonErgodic { .. } => HmmlabStatus::NonErgodic,
        hmm::HmmError::SymbolOutOfRange { .. } => HmmlabStatus::SymbolOutOfRange,
        hmm::HmmError::Invalid(_) => HmmlabStatus::InvalidArgument,
    }
}

unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

/// Convert 1-based external symbols into the internal 0-based form.
fn symbols_in(raw: &[u32], alphabet: usize) -> Result<Vec<u16>, HmmlabStatus> {
    let mut out = Vec::with_capacity(raw.len());
    for &v in raw {
        if v == 0 || v as usize > alphabet || v > u32::from(u16::MAX) {
            set_error(&format!(
                "symbol {v} outside 1..={alphabet} (symbols are 1-based)"
            ));
            return Err(HmmlabStatus::SymbolOutOfRange);
        }
        out.push((v - 1) as u16);
    }
    Ok(out)
}

/// Build a model from row-major matrices. `pi` has length `m`, `a` is
/// `m * m`, `b` is `m * l`. The parameters must be stochastic.
///
/// # Safety
/// All pointers must reference buffers of the documented lengths.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_new(
    m: u32,
    l: u32,
    pi: *const f64,
    a: *const f64,
    b: *const f64,
    out: *mut *mut HmmlabModel,
) -> HmmlabStatus {
    if out.is_null() {
        return fail(HmmlabStatus::NullPointer, "out pointer is null");
    }
    let (m, l) = (m as usize, l as usize);
    let (Some(pi), Some(a), Some(b)) = (
        slice_arg(pi, m),
        slice_arg(a, m * m),
        slice_arg(b, m * l),
    ) else {
        return fail(HmmlabStatus::NullPointer, "parameter pointer is null");
    };
    match HmmParams::validated(m, l, pi.to_vec(), a.to_vec(), b.to_vec()) {
        Ok(params) => {
            *out = Box::into_raw(Box::new(HmmlabModel(params)));
            HmmlabStatus::Ok
        }
        Err(e) => fail(hmm_error_status(&e), &e.to_string()),
    }
}

/// Parse a model from the params-file JSON shape `{"M", "L", "pi", "A", "B"}`.
///
/// # Safety
/// `json` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_from_json(
    json: *const c_char,
    out: *mut *mut HmmlabModel,
) -> HmmlabStatus {
    if json.is_null() || out.is_null() {
        return fail(HmmlabStatus::NullPointer, "null argument");
    }
    let Ok(text) = CStr::from_ptr(json).to_str() else {
        return fail(HmmlabStatus::Utf8Error, "json is not valid UTF-8");
    };
    let params: HmmParams = match serde_json::from_str(text) {
        Ok(p) => p,
        Err(e) => return fail(HmmlabStatus::JsonError, &e.to_string()),
    };
    let violations = hmm::validate(&params);
    if !violations.is_empty() {
        return fail(
            HmmlabStatus::InvalidArgument,
            &format!("invalid parameters: {}", violations[0]),
        );
    }
    *out = Box::into_raw(Box::new(HmmlabModel(params)));
    HmmlabStatus::Ok
}

/// Serialize a model to its JSON file shape; free with `hmmlab_string_free`.
///
/// # Safety
/// `model` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_to_json(model: *const HmmlabModel) -> *mut c_char {
    let Some(model) = model.as_ref() else {
        set_error("model is null");
        return std::ptr::null_mut();
    };
    let text = serde_json::to_string(&model.0).expect("parameters serialize");
    CString::new(text).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `model` must be a live handle; it is invalid after this call.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_free(model: *mut HmmlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_num_states(model: *const HmmlabModel) -> u32 {
    model.as_ref().map_or(0, |m| m.0.num_states() as u32)
}

/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_num_obs(model: *const HmmlabModel) -> u32 {
    model.as_ref().map_or(0, |m| m.0.num_obs() as u32)
}

/// Number of violated parameter invariants (0 means valid).
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_validate(model: *const HmmlabModel) -> u32 {
    model
        .as_ref()
        .map_or(u32::MAX, |m| hmm::validate(&m.0).len() as u32)
}

/// Exact chain analysis results.
#[repr(C)]
pub struct HmmlabAnalysis {
    pub mixing_rate: f64,
    pub transition_entropy: f64,
    pub emission_entropy: f64,
    pub normalized_joint_entropy: f64,
    /// 1 when the unit eigenvalue is simple.
    pub ergodic: u8,
}

/// # Safety
/// `model` must be a live handle; `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_analyze(
    model: *const HmmlabModel,
    out: *mut HmmlabAnalysis,
) -> HmmlabStatus {
    let (Some(model), Some(out)) = (model.as_ref(), out.as_mut()) else {
        return fail(HmmlabStatus::NullPointer, "null argument");
    };
    let analysis = model.0.analyze();
    *out = HmmlabAnalysis {
        mixing_rate: analysis.mixing_rate,
        transition_entropy: analysis.transition_entropy,
        emission_entropy: analysis.emission_entropy,
        normalized_joint_entropy: analysis.normalized_joint_entropy,
        ergodic: u8::from(analysis.ergodic),
    };
    HmmlabStatus::Ok
}

/// Stationary distribution into a caller buffer of length `len >= M`.
///
/// # Safety
/// `model` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_stationary(
    model: *const HmmlabModel,
    buf: *mut f64,
    len: usize,
) -> HmmlabStatus {
    let Some(model) = model.as_ref() else {
        return fail(HmmlabStatus::NullPointer, "model is null");
    };
    if buf.is_null() {
        return fail(HmmlabStatus::NullPointer, "buffer is null");
    }
    let m = model.0.num_states();
    if len < m {
        return fail(HmmlabStatus::BufferTooSmall, "buffer shorter than M");
    }
    match hmm::stationary_distribution(model.0.transition(), m) {
        Ok(mu) => {
            std::ptr::copy_nonoverlapping(mu.as_ptr(), buf, m);
            HmmlabStatus::Ok
        }
        Err(e) => fail(hmm_error_status(&e), &e.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

/// Flat synthesis request. `beta = 0` means a uniform stationary
/// distribution, `beta >= 1` the Beta(1, beta) skew; `target_ha = NaN`
/// leaves the transition entropy free; `deterministic_init != 0` puts all
/// initial mass on state 1.
#[repr(C)]
pub struct HmmlabSynthesisSpec {
    pub num_states: u32,
    pub num_obs: u32,
    pub target_lambda2: f64,
    pub beta: f64,
    pub target_ha: f64,
    pub target_hb: f64,
    pub deterministic_init: u8,
    pub seed: u64,
    pub max_retries: u32,
}

/// What the accepted construction achieved.
#[repr(C)]
pub struct HmmlabSynthesisReport {
    pub achieved_lambda2: f64,
    pub achieved_ha: f64,
    pub achieved_hb: f64,
    pub max_row_sum_error: f64,
    pub stationary_error: f64,
    pub iterations_used: u64,
    pub retries: u32,
    pub accepted: u8,
}

/// # Safety
/// `spec` and `out_model` must be valid; `out_report` may be null.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_synthesize(
    spec: *const HmmlabSynthesisSpec,
    out_model: *mut *mut HmmlabModel,
    out_report: *mut HmmlabSynthesisReport,
) -> HmmlabStatus {
    let (Some(spec), Some(out_slot)) = (spec.as_ref(), out_model.as_mut()) else {
        return fail(HmmlabStatus::NullPointer, "null argument");
    };
    let stationary_mode = if spec.beta == 0.0 {
        StationaryMode::Uniform
    } else {
        StationaryMode::BetaSkew { beta: spec.beta }
    };
    let synth_spec = SynthesisSpec {
        num_states: spec.num_states as usize,
        num_obs: spec.num_obs as usize,
        target_lambda2: spec.target_lambda2,
        stationary_mode,
        target_ha: if spec.target_ha.is_nan() {
            None
        } else {
            Some(spec.target_ha)
        },
        target_hb: spec.target_hb,
        init_mode: if spec.deterministic_init != 0 {
            InitMode::Deterministic
        } else {
            InitMode::Uniform
        },
        seed: spec.seed,
        max_retries: spec.max_retries as usize,
    };
    match build_setting(&synth_spec) {
        Ok((params, _analysis, report)) => {
            if let Some(out_report) = out_report.as_mut() {
                *out_report = HmmlabSynthesisReport {
                    achieved_lambda2: report.achieved_lambda2,
                    achieved_ha: report.achieved_ha,
                    achieved_hb: report.achieved_hb,
                    max_row_sum_error: report.max_row_sum_error,
                    stationary_error: report.stationary_error,
                    iterations_used: report.iterations_used as u64,
                    retries: report.retries as u32,
                    accepted: u8::from(report.accepted),
                };
            }
            *out_slot = Box::into_raw(Box::new(HmmlabModel(params)));
            HmmlabStatus::Ok
        }
        Err(e) => {
            let status = match &e {
                hmmlab::synth::SynthesisError::SynthesisFailed { .. } => {
                    HmmlabStatus::SynthesisFailed
                }
                _ => HmmlabStatus::InvalidArgument,
            };
            fail(status, &e.to_string())
        }
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Opaque sampled trajectory batch.
pub struct HmmlabBatch {
    batch: TrajectoryBatch,
}

/// Sample `n` state/observation sequence pairs of length `t`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_sample(
    model: *const HmmlabModel,
    n: u32,
    t: u32,
    seed: u64,
    out: *mut *mut HmmlabBatch,
) -> HmmlabStatus {
    let (Some(model), Some(out_slot)) = (model.as_ref(), out.as_mut()) else {
        return fail(HmmlabStatus::NullPointer, "null argument");
    };
    match sample_batch(&model.0, n as usize, t as usize, seed) {
        Ok(batch) => {
            *out_slot = Box::into_raw(Box::new(HmmlabBatch { batch }));
            HmmlabStatus::Ok
        }
        Err(e) => fail(HmmlabStatus::InvalidArgument, &e.to_string()),
    }
}

/// # Safety
/// `batch` must be a live handle; it is invalid after this call.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_batch_free(batch: *mut HmmlabBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}

/// # Safety
/// `batch` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_batch_num_sequences(batch: *const HmmlabBatch) -> u32 {
    batch.as_ref().map_or(0, |b| b.batch.num_sequences() as u32)
}

/// # Safety
/// `batch` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_batch_seq_len(batch: *const HmmlabBatch) -> u32 {
    batch.as_ref().map_or(0, |b| b.batch.seq_len as u32)
}

unsafe fn copy_row(
    rows: &[Vec<u16>],
    index: u32,
    buf: *mut u32,
    len: usize,
) -> HmmlabStatus {
    if buf.is_null() {
        return fail(HmmlabStatus::NullPointer, "buffer is null");
    }
    let Some(row) = rows.get(index as usize) else {
        return fail(HmmlabStatus::InvalidArgument, "sequence index out of range");
    };
    if len < row.len() {
        return fail(HmmlabStatus::BufferTooSmall, "buffer shorter than sequence");
    }
    for (i, &v) in row.iter().enumerate() {
        *buf.add(i) = u32::from(v) + 1;
    }
    HmmlabStatus::Ok
}

/// Copy sequence `index`'s observations as 1-based symbols.
///
/// # Safety
/// `batch` must be a live handle; `buf` must hold `len` u32 values.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_batch_observations(
    batch: *const HmmlabBatch,
    index: u32,
    buf: *mut u32,
    len: usize,
) -> HmmlabStatus {
    let Some(b) = batch.as_ref() else {
        return fail(HmmlabStatus::NullPointer, "batch is null");
    };
    copy_row(&b.batch.observations, index, buf, len)
}

/// Copy sequence `index`'s hidden states as 1-based symbols.
///
/// # Safety
/// `batch` must be a live handle; `buf` must hold `len` u32 values.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_batch_states(
    batch: *const HmmlabBatch,
    index: u32,
    buf: *mut u32,
    len: usize,
) -> HmmlabStatus {
    let Some(b) = batch.as_ref() else {
        return fail(HmmlabStatus::NullPointer, "batch is null");
    };
    copy_row(&b.batch.states, index, buf, len)
}

// ---------------------------------------------------------------------------
// Predictors
// ---------------------------------------------------------------------------

unsafe fn write_distribution(
    dist: &PredictiveDistribution,
    out_probs: *mut f64,
    out_len: usize,
) -> HmmlabStatus {
    if out_probs.is_null() {
        return fail(HmmlabStatus::NullPointer, "output buffer is null");
    }
    if out_len < dist.probs().len() {
        return fail(HmmlabStatus::BufferTooSmall, "output shorter than alphabet");
    }
    std::ptr::copy_nonoverlapping(dist.probs().as_ptr(), out_probs, dist.probs().len());
    HmmlabStatus::Ok
}

type ModelPredictor = fn(&HmmParams, &[u16]) -> Result<PredictiveDistribution, hmmlab::predictors::PredictError>;

unsafe fn model_predict(
    model: *const HmmlabModel,
    observations: *const u32,
    len: usize,
    out_probs: *mut f64,
    out_len: usize,
    predictor: ModelPredictor,
) -> HmmlabStatus {
    let Some(model) = model.as_ref() else {
        return fail(HmmlabStatus::NullPointer, "model is null");
    };
    let Some(raw) = slice_arg(observations, len) else {
        return fail(HmmlabStatus::NullPointer, "observations pointer is null");
    };
    let symbols = match symbols_in(raw, model.0.num_obs()) {
        Ok(s) => s,
        Err(status) => return status,
    };
    match predictor(&model.0, &symbols) {
        Ok(dist) => write_distribution(&dist, out_probs, out_len),
        Err(e) => fail(predict_error_status(&e), &e.to_string()),
    }
}

/// Exact conditional `P(O_{t+1} | O_{1:t})` under the model.
///
/// # Safety
/// `model` live; `observations` holds `len` 1-based symbols; `out_probs`
/// holds `out_len >= L` doubles.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_oracle_forward(
    model: *const HmmlabModel,
    observations: *const u32,
    len: usize,
    out_probs: *mut f64,
    out_len: usize,
) -> HmmlabStatus {
    model_predict(model, observations, len, out_probs, out_len, |p, o| {
        hmm::oracle_forward(p, o).map_err(Into::into)
    })
}

/// Viterbi-decoded next-observation distribution.
///
/// # Safety
/// As for `hmmlab_oracle_forward`.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_viterbi_predict(
    model: *const HmmlabModel,
    observations: *const u32,
    len: usize,
    out_probs: *mut f64,
    out_len: usize,
) -> HmmlabStatus {
    model_predict(model, observations, len, out_probs, out_len, viterbi_predict)
}

/// Truncated-memory forward prediction over the last `k + 1` observations.
///
/// # Safety
/// As for `hmmlab_oracle_forward`.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_truncated_forward_predict(
    model: *const HmmlabModel,
    observations: *const u32,
    len: usize,
    k: u32,
    out_probs: *mut f64,
    out_len: usize,
) -> HmmlabStatus {
    let Some(model_ref) = model.as_ref() else {
        return fail(HmmlabStatus::NullPointer, "model is null");
    };
    let Some(raw) = slice_arg(observations, len) else {
        return fail(HmmlabStatus::NullPointer, "observations pointer is null");
    };
    let symbols = match symbols_in(raw, model_ref.0.num_obs()) {
        Ok(s) => s,
        Err(status) => return status,
    };
    match truncated_forward_predict(&model_ref.0, &symbols, k as usize) {
        Ok(dist) => write_distribution(&dist, out_probs, out_len),
        Err(e) => fail(predict_error_status(&e), &e.to_string()),
    }
}

/// Additively smoothed n-gram prediction over a 1-based symbol history.
///
/// # Safety
/// `observations` holds `len` symbols; `out_probs` holds `out_len >=
/// alphabet` doubles.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_ngram_predict(
    observations: *const u32,
    len: usize,
    alphabet: u32,
    n: u32,
    delta: f64,
    out_probs: *mut f64,
    out_len: usize,
) -> HmmlabStatus {
    let Some(raw) = slice_arg(observations, len) else {
        return fail(HmmlabStatus::NullPointer, "observations pointer is null");
    };
    let symbols = match symbols_in(raw, alphabet as usize) {
        Ok(s) => s,
        Err(status) => return status,
    };
    match ngram_predict(&symbols, alphabet as usize, n as usize, delta) {
        Ok(dist) => write_distribution(&dist, out_probs, out_len),
        Err(e) => fail(predict_error_status(&e), &e.to_string()),
    }
}

/// Fit an HMM to one sequence with Baum-Welch and return it as a new model
/// handle.
///
/// # Safety
/// `observations` holds `len` 1-based symbols; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_baum_welch_fit(
    observations: *const u32,
    len: usize,
    num_states: u32,
    alphabet: u32,
    init_seed: u64,
    max_iters: u32,
    tol: f64,
    out: *mut *mut HmmlabModel,
) -> HmmlabStatus {
    let Some(out_slot) = out.as_mut() else {
        return fail(HmmlabStatus::NullPointer, "out pointer is null");
    };
    let Some(raw) = slice_arg(observations, len) else {
        return fail(HmmlabStatus::NullPointer, "observations pointer is null");
    };
    let symbols = match symbols_in(raw, alphabet as usize) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let options = BaumWelchOptions {
        max_iters: max_iters as usize,
        tol,
    };
    match baum_welch_fit(&symbols, num_states as usize, alphabet as usize, init_seed, options) {
        Ok(fit) => {
            *out_slot = Box::into_raw(Box::new(HmmlabModel(fit.params)));
            HmmlabStatus::Ok
        }
        Err(e) => fail(predict_error_status(&e), &e.to_string()),
    }
}

/// Opaque fitted spectral parameters.
pub struct HmmlabSpectral(SpectralParams);

/// Estimate spectral parameters from one sequence (`alphabet >= num_states`).
///
/// # Safety
/// `observations` holds `len` 1-based symbols; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_spectral_fit(
    observations: *const u32,
    len: usize,
    num_states: u32,
    alphabet: u32,
    burn_in: u32,
    out: *mut *mut HmmlabSpectral,
) -> HmmlabStatus {
    let Some(out_slot) = out.as_mut() else {
        return fail(HmmlabStatus::NullPointer, "out pointer is null");
    };
    let Some(raw) = slice_arg(observations, len) else {
        return fail(HmmlabStatus::NullPointer, "observations pointer is null");
    };
    let symbols = match symbols_in(raw, alphabet as usize) {
        Ok(s) => s,
        Err(status) => return status,
    };
    match spectral_fit(
        &symbols,
        num_states as usize,
        alphabet as usize,
        burn_in as usize,
        DEFAULT_SPECTRAL_CLAMP,
    ) {
        Ok(sp) => {
            *out_slot = Box::into_raw(Box::new(HmmlabSpectral(sp)));
            HmmlabStatus::Ok
        }
        Err(e) => fail(predict_error_status(&e), &e.to_string()),
    }
}

/// Belief-update over the history and score the next symbol.
///
/// # Safety
/// `spectral` must be a live handle; buffers as documented.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_spectral_predict(
    spectral: *const HmmlabSpectral,
    observations: *const u32,
    len: usize,
    out_probs: *mut f64,
    out_len: usize,
) -> HmmlabStatus {
    let Some(sp) = spectral.as_ref() else {
        return fail(HmmlabStatus::NullPointer, "spectral handle is null");
    };
    let Some(raw) = slice_arg(observations, len) else {
        return fail(HmmlabStatus::NullPointer, "observations pointer is null");
    };
    let alphabet = sp.0.operators.len();
    let symbols = match symbols_in(raw, alphabet) {
        Ok(s) => s,
        Err(status) => return status,
    };
    match spectral_predict(&sp.0, &symbols) {
        Ok(pred) => write_distribution(&pred.dist, out_probs, out_len),
        Err(e) => fail(predict_error_status(&e), &e.to_string()),
    }
}

/// # Safety
/// `spectral` must be a live handle; it is invalid after this call.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_spectral_free(spectral: *mut HmmlabSpectral) {
    if !spectral.is_null() {
        drop(Box::from_raw(spectral));
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Hellinger distance between two probability vectors of length `len`.
///
/// # Safety
/// `p`, `q` hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_hellinger(
    p: *const f64,
    q: *const f64,
    len: usize,
    out: *mut f64,
) -> HmmlabStatus {
    let (Some(p), Some(q), Some(out)) = (slice_arg(p, len), slice_arg(q, len), out.as_mut())
    else {
        return fail(HmmlabStatus::NullPointer, "null argument");
    };
    match hmmlab::metrics::hellinger(p, q) {
        Ok(d) => {
            *out = d;
            HmmlabStatus::Ok
        }
        Err(e) => fail(HmmlabStatus::InvalidArgument, &e.to_string()),
    }
}
