//! Exercise the C surface exactly as a foreign caller would: through raw
//! pointers, status codes, and flat buffers.

use hmmlab_ffi::*;

fn build_model(m: u32, l: u32, pi: &[f64], a: &[f64], b: &[f64]) -> *mut HmmlabModel {
    let mut handle: *mut HmmlabModel = std::ptr::null_mut();
    let status =
        unsafe { hmmlab_model_new(m, l, pi.as_ptr(), a.as_ptr(), b.as_ptr(), &mut handle) };
    assert_eq!(status, HmmlabStatus::Ok);
    assert!(!handle.is_null());
    handle
}

#[test]
fn model_lifecycle_and_analysis() {
    let model = build_model(
        2,
        2,
        &[0.5, 0.5],
        &[0.9, 0.1, 0.1, 0.9],
        &[1.0, 0.0, 0.0, 1.0],
    );
    unsafe {
        assert_eq!(hmmlab_model_num_states(model), 2);
        assert_eq!(hmmlab_model_num_obs(model), 2);
        assert_eq!(hmmlab_model_validate(model), 0);

        let mut analysis = std::mem::zeroed::<HmmlabAnalysis>();
        assert_eq!(hmmlab_model_analyze(model, &mut analysis), HmmlabStatus::Ok);
        assert!((analysis.mixing_rate - 0.8).abs() < 1e-8);
        assert_eq!(analysis.ergodic, 1);

        let mut mu = [0.0f64; 2];
        assert_eq!(
            hmmlab_model_stationary(model, mu.as_mut_ptr(), 2),
            HmmlabStatus::Ok
        );
        assert!((mu[0] - 0.5).abs() < 1e-10);

        // Round-trip through JSON.
        let json = hmmlab_model_to_json(model);
        assert!(!json.is_null());
        let mut back: *mut HmmlabModel = std::ptr::null_mut();
        assert_eq!(hmmlab_model_from_json(json, &mut back), HmmlabStatus::Ok);
        assert_eq!(hmmlab_model_num_states(back), 2);
        hmmlab_string_free(json);
        hmmlab_model_free(back);
        hmmlab_model_free(model);
    }
}

#[test]
fn invalid_parameters_are_rejected_with_message() {
    let mut handle: *mut HmmlabModel = std::ptr::null_mut();
    let pi = [0.5f64, 0.5];
    let a = [0.6f64, 0.6, 0.5, 0.5];
    let b = [1.0f64, 0.0, 0.0, 1.0];
    let status = unsafe { hmmlab_model_new(2, 2, pi.as_ptr(), a.as_ptr(), b.as_ptr(), &mut handle) };
    assert_eq!(status, HmmlabStatus::InvalidArgument);
    let msg = unsafe { std::ffi::CStr::from_ptr(hmmlab_last_error()) };
    assert!(msg.to_string_lossy().contains("row sum"));
}

#[test]
fn synthesis_sampling_and_prediction_pipeline() {
    let spec = HmmlabSynthesisSpec {
        num_states: 3,
        num_obs: 3,
        target_lambda2: 0.6,
        beta: 0.0,
        target_ha: f64::NAN,
        target_hb: 0.5,
        deterministic_init: 0,
        seed: 41,
        max_retries: 64,
    };
    unsafe {
        let mut model: *mut HmmlabModel = std::ptr::null_mut();
        let mut report = std::mem::zeroed::<HmmlabSynthesisReport>();
        assert_eq!(
            hmmlab_synthesize(&spec, &mut model, &mut report),
            HmmlabStatus::Ok
        );
        assert_eq!(report.accepted, 1);
        assert!((report.achieved_lambda2 - 0.6).abs() <= 1e-3);

        let mut batch: *mut HmmlabBatch = std::ptr::null_mut();
        assert_eq!(hmmlab_sample(model, 2, 32, 7, &mut batch), HmmlabStatus::Ok);
        assert_eq!(hmmlab_batch_num_sequences(batch), 2);
        assert_eq!(hmmlab_batch_seq_len(batch), 32);
        let mut obs = [0u32; 32];
        assert_eq!(
            hmmlab_batch_observations(batch, 0, obs.as_mut_ptr(), 32),
            HmmlabStatus::Ok
        );
        assert!(obs.iter().all(|&o| (1..=3).contains(&o)));
        let mut states = [0u32; 32];
        assert_eq!(
            hmmlab_batch_states(batch, 1, states.as_mut_ptr(), 32),
            HmmlabStatus::Ok
        );

        // Every predictor produces a normalized distribution over L = 3.
        let mut probs = [0.0f64; 3];
        for f in [
            hmmlab_oracle_forward as unsafe extern "C" fn(_, _, _, _, _) -> _,
            hmmlab_viterbi_predict,
        ] {
            assert_eq!(
                f(model, obs.as_ptr(), 32, probs.as_mut_ptr(), 3),
                HmmlabStatus::Ok
            );
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(
            hmmlab_truncated_forward_predict(model, obs.as_ptr(), 32, 4, probs.as_mut_ptr(), 3),
            HmmlabStatus::Ok
        );
        assert_eq!(
            hmmlab_ngram_predict(obs.as_ptr(), 32, 3, 2, 1.0, probs.as_mut_ptr(), 3),
            HmmlabStatus::Ok
        );
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let mut fitted: *mut HmmlabModel = std::ptr::null_mut();
        assert_eq!(
            hmmlab_baum_welch_fit(obs.as_ptr(), 32, 2, 3, 5, 50, 1e-5, &mut fitted),
            HmmlabStatus::Ok
        );
        assert_eq!(hmmlab_model_validate(fitted), 0);
        hmmlab_model_free(fitted);

        hmmlab_batch_free(batch);
        hmmlab_model_free(model);
    }
}

#[test]
fn spectral_fit_and_predict_through_ffi() {
    // Deterministic alternating sequence has full bigram rank for M = 2.
    let obs: Vec<u32> = (0..2000).map(|t| (t % 2) + 1).collect();
    unsafe {
        let mut sp: *mut HmmlabSpectral = std::ptr::null_mut();
        assert_eq!(
            hmmlab_spectral_fit(obs.as_ptr(), obs.len(), 2, 2, 0, &mut sp),
            HmmlabStatus::Ok
        );
        let mut probs = [0.0f64; 2];
        assert_eq!(
            hmmlab_spectral_predict(sp, obs.as_ptr(), obs.len(), probs.as_mut_ptr(), 2),
            HmmlabStatus::Ok
        );
        // Last symbol is 2, so the next is 1 with near certainty.
        assert!(probs[0] > 0.95, "{probs:?}");
        hmmlab_spectral_free(sp);
    }

    // M > L is a precondition violation.
    unsafe {
        let mut sp: *mut HmmlabSpectral = std::ptr::null_mut();
        assert_eq!(
            hmmlab_spectral_fit(obs.as_ptr(), obs.len(), 3, 2, 0, &mut sp),
            HmmlabStatus::InvalidArgument
        );
    }
}

#[test]
fn symbol_range_and_buffer_errors() {
    let model = build_model(
        2,
        2,
        &[0.5, 0.5],
        &[0.5, 0.5, 0.5, 0.5],
        &[0.5, 0.5, 0.5, 0.5],
    );
    unsafe {
        let bad = [0u32]; // symbols are 1-based; zero is out of range
        let mut probs = [0.0f64; 2];
        assert_eq!(
            hmmlab_oracle_forward(model, bad.as_ptr(), 1, probs.as_mut_ptr(), 2),
            HmmlabStatus::SymbolOutOfRange
        );
        let ok = [1u32, 2];
        assert_eq!(
            hmmlab_oracle_forward(model, ok.as_ptr(), 2, probs.as_mut_ptr(), 1),
            HmmlabStatus::BufferTooSmall
        );
        assert_eq!(
            hmmlab_oracle_forward(std::ptr::null(), ok.as_ptr(), 2, probs.as_mut_ptr(), 2),
            HmmlabStatus::NullPointer
        );
        hmmlab_model_free(model);
    }
}

#[test]
fn hellinger_through_ffi() {
    let p = [0.5f64, 0.5];
    let q = [1.0f64, 0.0];
    let mut out = 0.0f64;
    let status = unsafe { hmmlab_hellinger(p.as_ptr(), q.as_ptr(), 2, &mut out) };
    assert_eq!(status, HmmlabStatus::Ok);
    let expected = ((2.0 - 2.0f64.sqrt()) / 2.0).sqrt();
    assert!((out - expected).abs() < 1e-12);
}

#[test]
fn generated_header_exists_with_guards() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hmmlab.h");
    let text = std::fs::read_to_string(header).expect("cbindgen header present");
    assert!(text.contains("HMMLAB_H"));
    assert!(text.contains("hmmlab_oracle_forward"));
    assert!(text.contains("HmmlabStatus"));
}
