//! Experiment orchestration: grid configuration, synthesis, sampling,
//! evaluation, real-data ingestion, and artifact emission.
//!
//! A run walks each configured setting through build -> sample -> evaluate ->
//! summarize and writes three artifacts into the output directory:
//! `curves.csv` (per-method per-context-length accuracy and Hellinger),
//! `summary.json` (analysis, synthesis report, and convergence summaries per
//! setting), and `manifest.json` (config echo, derived seeds, failures).
//! Identical configs and master seeds produce byte-identical `curves.csv`
//! and `summary.json` regardless of thread count; only the manifest carries
//! timestamps.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::hmm::{validate, ChainAnalysis, HmmParams};
use crate::llm::{EndpointConfig, LlmClient};
use crate::metrics::{
    convergence_summary, evaluate_methods, CurvePoint, CurveSummary, EvalContext, MethodSpec,
    MetricsError, Weighting,
};
use crate::sampler::{
    read_sequences_text, sample_batch, splitmix64, write_batch, write_sequences_text,
};
use crate::synth::{build_setting, SynthesisReport, SynthesisSpec};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The context grid of the experimental protocol.
pub const DEFAULT_CONTEXT_GRID: [usize; 10] = [4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("composite alphabet exceeds 256 distinct tokens")]
    AlphabetOverflow,
    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Synthesis(#[from] crate::synth::SynthesisError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sampler(#[from] crate::sampler::SamplerError),
    #[error(transparent)]
    Hmm(#[from] crate::hmm::HmmError),
    #[error(transparent)]
    Bridge(#[from] crate::llm::BridgeError),
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One setting: synthesize parameters, load them from a file, or evaluate
/// raw ingested sequences (no true parameters, learning methods only).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SettingSpec {
    Synth {
        #[serde(default)]
        id: Option<String>,
        spec: SynthesisSpec,
    },
    ParamsFile {
        #[serde(default)]
        id: Option<String>,
        path: PathBuf,
    },
    SequenceFile {
        #[serde(default)]
        id: Option<String>,
        path: PathBuf,
    },
}

impl SettingSpec {
    fn id_or_default(&self, index: usize) -> String {
        let explicit = match self {
            SettingSpec::Synth { id, .. }
            | SettingSpec::ParamsFile { id, .. }
            | SettingSpec::SequenceFile { id, .. } => id.clone(),
        };
        explicit.unwrap_or_else(|| format!("setting_{index:03}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
}

/// Versioned run configuration; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub settings: Vec<SettingSpec>,
    #[serde(default = "default_n_sequences")]
    pub n_sequences: usize,
    /// One longer than the largest grid length so the realized next symbol
    /// exists at every evaluated context.
    #[serde(default = "default_seq_length")]
    pub seq_length: usize,
    #[serde(default = "default_grid")]
    pub context_grid: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub master_seed: u64,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub llm: Option<LlmSection>,
}

fn default_n_sequences() -> usize {
    256
}
fn default_seq_length() -> usize {
    2049
}
fn default_grid() -> Vec<usize> {
    DEFAULT_CONTEXT_GRID.to_vec()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ExperimentError::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.settings.is_empty() {
            return Err(ExperimentError::Config("no settings configured".into()));
        }
        if self.methods.is_empty() {
            return Err(ExperimentError::Config("no methods configured".into()));
        }
        if self.n_sequences == 0 {
            return Err(ExperimentError::Config("n_sequences must be >= 1".into()));
        }
        if self.context_grid.is_empty() {
            return Err(ExperimentError::Config("context_grid is empty".into()));
        }
        if self.context_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::Config(
                "context_grid must be strictly increasing".into(),
            ));
        }
        let max = *self.context_grid.last().unwrap();
        if max >= self.seq_length {
            return Err(ExperimentError::Config(format!(
                "max(context_grid) = {max} must be < seq_length = {}",
                self.seq_length
            )));
        }
        Ok(())
    }
}

/// Seed for setting `index`; independent of every other setting so adding
/// settings never perturbs existing ones.
pub fn setting_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(master_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct MethodSummaryOut {
    t_converge: Option<usize>,
    epsilon_gap: Option<f64>,
    reference_method: String,
}

#[derive(Debug, Serialize)]
struct SettingSummaryOut {
    setting_id: String,
    analysis: Option<ChainAnalysis>,
    synthesis_report: Option<SynthesisReport>,
    methods: BTreeMap<String, MethodSummaryOut>,
    diagnostics: BTreeMap<String, BTreeMap<String, u64>>,
}

#[derive(Debug, Serialize)]
struct SummaryFile {
    schema_version: u32,
    assumptions: BTreeMap<&'static str, &'static str>,
    settings: Vec<SettingSummaryOut>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunFailure {
    pub setting_id: String,
    pub error: String,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub failures: Vec<RunFailure>,
    /// Settings that produced curves.
    pub completed: usize,
}

struct SettingResult {
    setting_id: String,
    analysis: Option<ChainAnalysis>,
    report: Option<SynthesisReport>,
    curves: Vec<Vec<CurvePoint>>,
    summaries: Vec<CurveSummary>,
    diagnostics: BTreeMap<String, BTreeMap<String, u64>>,
}

/// Execute the full pipeline for every setting and write artifacts.
pub fn run_experiment(
    config: &ExperimentConfig,
    output_dir: &Path,
    threads: Option<usize>,
) -> Result<RunOutcome, ExperimentError> {
    config.validate()?;
    std::fs::create_dir_all(output_dir)?;

    let llm = match &config.llm {
        Some(section) => {
            let mut client = LlmClient::new(section.endpoint.clone())?;
            if let Some(dir) = &section.cache_dir {
                client = client.with_cache_dir(dir.clone())?;
            }
            if let Some(fixture) = &section.fixture {
                client = client.with_fixture(fixture)?;
            }
            Some(client)
        }
        None => None,
    };

    // ICL rows appear only when an endpoint or fixture is configured.
    let methods: Vec<MethodSpec> = config
        .methods
        .iter()
        .filter(|m| !(matches!(m, MethodSpec::Icl { .. }) && llm.is_none()))
        .cloned()
        .collect();
    if methods.is_empty() {
        return Err(ExperimentError::Config(
            "no runnable methods (ICL configured without an llm section)".into(),
        ));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;

    let results: Vec<Result<SettingResult, RunFailure>> = pool.install(|| {
        use rayon::prelude::*;
        config
            .settings
            .par_iter()
            .enumerate()
            .map(|(index, setting)| {
                let id = setting.id_or_default(index);
                run_one_setting(config, setting, index, &id, &methods, llm.as_ref()).map_err(
                    |e| RunFailure {
                        setting_id: id,
                        error: e.to_string(),
                    },
                )
            })
            .collect()
    });

    let mut completed = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => completed.push(s),
            Err(f) => failures.push(f),
        }
    }

    write_curves_csv(&completed, &output_dir.join("curves.csv"))?;
    write_summary(&completed, &output_dir.join("summary.json"))?;
    write_manifest(config, &failures, threads, &output_dir.join("manifest.json"))?;

    Ok(RunOutcome {
        output_dir: output_dir.to_path_buf(),
        failures,
        completed: completed.len(),
    })
}

fn run_one_setting(
    config: &ExperimentConfig,
    setting: &SettingSpec,
    index: usize,
    id: &str,
    methods: &[MethodSpec],
    llm: Option<&LlmClient>,
) -> Result<SettingResult, ExperimentError> {
    let seed = setting_seed(config.master_seed, index);

    let (params, analysis, report, sequences) = match setting {
        SettingSpec::Synth { spec, .. } => {
            let mut spec = spec.clone();
            if spec.seed == 0 {
                spec.seed = seed;
            }
            let (params, analysis, report) = build_setting(&spec)?;
            let batch = sample_batch(
                &params,
                config.n_sequences,
                config.seq_length,
                splitmix64(seed ^ 1),
            )?;
            (Some(params), Some(analysis), Some(report), batch.observations)
        }
        SettingSpec::ParamsFile { path, .. } => {
            let text = std::fs::read_to_string(path)?;
            let params: HmmParams = serde_json::from_str(&text)?;
            let violations = validate(&params);
            if !violations.is_empty() {
                return Err(ExperimentError::Config(format!(
                    "{}: invalid parameters: {}",
                    path.display(),
                    violations[0]
                )));
            }
            let analysis = params.analyze();
            let batch = sample_batch(
                &params,
                config.n_sequences,
                config.seq_length,
                splitmix64(seed ^ 1),
            )?;
            (Some(params), Some(analysis), None, batch.observations)
        }
        SettingSpec::SequenceFile { path, .. } => {
            let sequences = read_sequences_text(path)?;
            if sequences.is_empty() {
                return Err(ExperimentError::Config(format!(
                    "{}: no sequences",
                    path.display()
                )));
            }
            (None, None, None, sequences)
        }
    };

    let alphabet = match &params {
        Some(p) => p.num_obs(),
        None => sequences
            .iter()
            .flat_map(|s| s.iter())
            .map(|&o| usize::from(o) + 1)
            .max()
            .unwrap_or(1),
    };

    // Spectral auto burn-in fires only for uniform-pi settings that are not
    // already stationary.
    let auto_burn_in = match (&params, &analysis) {
        (Some(p), Some(a)) => {
            let m = p.num_states() as f64;
            let uniform_pi = p.pi().iter().all(|&x| (x - 1.0 / m).abs() < 1e-12);
            uniform_pi
                && p.pi()
                    .iter()
                    .zip(&a.stationary)
                    .any(|(pi, s)| (pi - s).abs() > 1e-6)
        }
        _ => false,
    };

    let ctx = EvalContext {
        llm,
        true_lambda2: analysis.as_ref().map(|a| a.mixing_rate),
        auto_burn_in,
        weighting: config.weighting,
        seed,
    };

    let output = evaluate_methods(
        params.as_ref(),
        alphabet,
        &sequences,
        methods,
        &config.context_grid,
        &ctx,
    )?;

    // Convergence summaries against the Viterbi reference. When Viterbi is
    // not among the requested methods but true parameters exist, evaluate it
    // separately as the (unreported) reference.
    let mut summaries = Vec::new();
    if params.is_some() {
        let reference: Option<Vec<CurvePoint>> = match methods
            .iter()
            .position(|m| matches!(m, MethodSpec::Viterbi))
        {
            Some(vi) => Some(output.curves[vi].clone()),
            None => {
                let ref_out = evaluate_methods(
                    params.as_ref(),
                    alphabet,
                    &sequences,
                    &[MethodSpec::Viterbi],
                    &config.context_grid,
                    &ctx,
                )?;
                Some(ref_out.curves.into_iter().next().unwrap())
            }
        };
        if let Some(reference) = reference {
            for curve in &output.curves {
                summaries.push(convergence_summary(curve, &reference)?);
            }
        }
    }

    Ok(SettingResult {
        setting_id: id.to_string(),
        analysis,
        report,
        curves: output.curves,
        summaries,
        diagnostics: output.diagnostics,
    })
}

fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.6}")
    }
}

fn write_curves_csv(results: &[SettingResult], path: &Path) -> Result<(), ExperimentError> {
    let mut out = String::from(
        "setting_id,method,context_len,accuracy,acc_std,mean_hellinger,hell_std,n_samples\n",
    );
    for r in results {
        for curve in &r.curves {
            for p in curve {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.setting_id,
                    p.method,
                    p.context_len,
                    format_float(p.accuracy),
                    format_float(p.acc_std),
                    format_float(p.mean_hellinger),
                    format_float(p.hell_std),
                    p.n_samples
                ));
            }
        }
    }
    atomic_write(path, out.as_bytes())?;
    Ok(())
}

fn write_summary(results: &[SettingResult], path: &Path) -> Result<(), ExperimentError> {
    let mut assumptions = BTreeMap::new();
    assumptions.insert("entropy_units", "nats (natural logarithm)");
    assumptions.insert(
        "transition_entropy_band",
        "synthesis accepts |H_A - target| <= 0.05 nats",
    );
    assumptions.insert(
        "ngram_backoff",
        "uniform 1/V over in-history symbols, zero elsewhere, renormalized over the alphabet",
    );
    assumptions.insert(
        "baum_welch_prediction",
        "Viterbi final state by default; filtered posterior behind the `posterior` flag",
    );
    assumptions.insert(
        "sequence_weighting",
        "equal weight per sequence unless `weighting` selects trial_count",
    );

    let settings = results
        .iter()
        .map(|r| {
            let methods = r
                .summaries
                .iter()
                .map(|s| {
                    (
                        s.method.clone(),
                        MethodSummaryOut {
                            t_converge: s.t_converge,
                            epsilon_gap: if s.epsilon_gap.is_nan() {
                                None
                            } else {
                                Some(s.epsilon_gap)
                            },
                            reference_method: s.reference_method.clone(),
                        },
                    )
                })
                .collect();
            SettingSummaryOut {
                setting_id: r.setting_id.clone(),
                analysis: r.analysis.clone(),
                synthesis_report: r.report.clone(),
                methods,
                diagnostics: r.diagnostics.clone(),
            }
        })
        .collect();

    let file = SummaryFile {
        schema_version: CONFIG_SCHEMA_VERSION,
        assumptions,
        settings,
    };
    atomic_write(path, serde_json::to_string_pretty(&file)?.as_bytes())?;
    Ok(())
}

fn write_manifest(
    config: &ExperimentConfig,
    failures: &[RunFailure],
    threads: Option<usize>,
    path: &Path,
) -> Result<(), ExperimentError> {
    let seeds: Vec<u64> = (0..config.settings.len())
        .map(|i| setting_seed(config.master_seed, i))
        .collect();
    let manifest = serde_json::json!({
        "artifact_version": ARTIFACT_VERSION,
        "created_unix": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "threads": threads,
        "config": config,
        "setting_seeds": seeds,
        "failures": failures,
    });
    atomic_write(path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

// ---------------------------------------------------------------------------
// Synthesis and sampling entry points used by the CLI
// ---------------------------------------------------------------------------

/// `synth` subcommand: spec file in, params + report files out.
pub fn synth_to_files(
    spec: &SynthesisSpec,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf), ExperimentError> {
    std::fs::create_dir_all(out_dir)?;
    let (params, analysis, report) = build_setting(spec)?;
    let params_path = out_dir.join("params.json");
    let report_path = out_dir.join("synthesis_report.json");
    atomic_write(&params_path, serde_json::to_string_pretty(&params)?.as_bytes())?;
    let report_doc = serde_json::json!({
        "report": report,
        "analysis": analysis,
    });
    atomic_write(&report_path, serde_json::to_string_pretty(&report_doc)?.as_bytes())?;
    Ok((params_path, report_path))
}

/// `sample` subcommand: params file in, binary batch (and optional text
/// export) out.
pub fn sample_to_files(
    params_path: &Path,
    n: usize,
    t: usize,
    seed: u64,
    out_path: &Path,
    text_path: Option<&Path>,
) -> Result<(), ExperimentError> {
    let text = std::fs::read_to_string(params_path)?;
    let params: HmmParams = serde_json::from_str(&text)?;
    let violations = validate(&params);
    if !violations.is_empty() {
        return Err(ExperimentError::Config(format!(
            "invalid parameters: {}",
            violations[0]
        )));
    }
    let mut batch = sample_batch(&params, n, t, seed)?;
    batch.setting_id = params_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    write_batch(&batch, &params, out_path)?;
    if let Some(tp) = text_path {
        write_sequences_text(&batch.observations, tp)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// A discretized real-data sequence: composite tokens mapped onto a
/// contiguous 1-based alphabet.
#[derive(Debug, Clone, Serialize)]
pub struct IngestedSequence {
    pub id: String,
    pub symbols: Vec<u16>,
    pub field_mask: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct IngestOutput {
    pub sequences: Vec<IngestedSequence>,
    /// Composite token -> 1-based symbol.
    pub mapping: BTreeMap<String, u16>,
    pub alphabet: usize,
}

const MAX_INGEST_ALPHABET: usize = 256;

/// Compose the masked columns of each CSV row into one token per trial and
/// map tokens to a contiguous symbol alphabet. Rows group into sequences by
/// `id_column` when given (ordered by first appearance), otherwise the whole
/// file is one sequence.
pub fn ingest_csv(
    csv_text: &str,
    mask: &[String],
    id_column: Option<&str>,
) -> Result<IngestOutput, ExperimentError> {
    let mut lines = csv_text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| ExperimentError::Config("empty CSV".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();

    let mut mask_idx = Vec::with_capacity(mask.len());
    for name in mask {
        match columns.iter().position(|c| c == name) {
            Some(i) => mask_idx.push(i),
            None => return Err(ExperimentError::UnknownColumn(name.clone())),
        }
    }
    if mask_idx.is_empty() {
        return Err(ExperimentError::Config("empty column mask".into()));
    }
    let id_idx = match id_column {
        Some(name) => Some(
            columns
                .iter()
                .position(|c| *c == name)
                .ok_or_else(|| ExperimentError::UnknownColumn(name.to_string()))?,
        ),
        None => None,
    };

    let mut mapping: BTreeMap<String, u16> = BTreeMap::new();
    let mut next_symbol: u16 = 0;
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<u16>> = BTreeMap::new();

    for (row_no, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(ExperimentError::Config(format!(
                "row {} has {} fields, header has {}",
                row_no + 2,
                fields.len(),
                columns.len()
            )));
        }
        let token = mask_idx
            .iter()
            .map(|&i| fields[i])
            .collect::<Vec<_>>()
            .join("|");
        let symbol = match mapping.get(&token) {
            Some(&s) => s,
            None => {
                if usize::from(next_symbol) >= MAX_INGEST_ALPHABET {
                    return Err(ExperimentError::AlphabetOverflow);
                }
                let s = next_symbol;
                mapping.insert(token.clone(), s);
                next_symbol += 1;
                s
            }
        };
        let id = match id_idx {
            Some(i) => fields[i].to_string(),
            None => "seq0".to_string(),
        };
        if !grouped.contains_key(&id) {
            order.push(id.clone());
        }
        grouped.entry(id).or_default().push(symbol);
    }

    let sequences: Vec<IngestedSequence> = order
        .into_iter()
        .map(|id| IngestedSequence {
            symbols: grouped.remove(&id).unwrap(),
            id,
            field_mask: mask.to_vec(),
        })
        .collect();
    if sequences.is_empty() {
        return Err(ExperimentError::Config("CSV has no data rows".into()));
    }

    let alphabet = usize::from(next_symbol);
    // Externally visible mapping is 1-based, like every sequence file.
    let mapping = mapping.into_iter().map(|(k, v)| (k, v + 1)).collect();
    Ok(IngestOutput {
        sequences,
        mapping,
        alphabet,
    })
}

/// `ingest` subcommand: CSV in, sequence file plus mapping table out.
pub fn ingest_to_files(
    csv_path: &Path,
    mask: &[String],
    id_column: Option<&str>,
    out_path: &Path,
) -> Result<IngestOutput, ExperimentError> {
    let text = std::fs::read_to_string(csv_path)?;
    let output = ingest_csv(&text, mask, id_column)?;
    let rows: Vec<Vec<u16>> = output.sequences.iter().map(|s| s.symbols.clone()).collect();
    write_sequences_text(&rows, out_path)?;
    let mapping_path = out_path.with_extension("mapping.json");
    let doc = serde_json::json!({
        "field_mask": mask,
        "alphabet": output.alphabet,
        "tokens": output.mapping,
        "sequence_ids": output.sequences.iter().map(|s| s.id.clone()).collect::<Vec<_>>(),
    });
    atomic_write(&mapping_path, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    Ok(output)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Render the human-readable per-setting report from run artifacts. Never
/// mutates anything under `dir`.
pub fn report(dir: &Path) -> Result<String, ExperimentError> {
    let summary_path = dir.join("summary.json");
    if !summary_path.exists() {
        return Err(ExperimentError::MissingArtifacts(format!(
            "{} not found",
            summary_path.display()
        )));
    }
    let text = std::fs::read_to_string(&summary_path)?;
    let summary: serde_json::Value = serde_json::from_str(&text)?;
    let settings = summary["settings"]
        .as_array()
        .ok_or_else(|| ExperimentError::MissingArtifacts("summary.json has no settings".into()))?;

    let mut out = String::new();
    for s in settings {
        let id = s["setting_id"].as_str().unwrap_or("?");
        out.push_str(&format!("setting {id}\n"));
        if let Some(a) = s["analysis"].as_object() {
            out.push_str(&format!(
                "  lambda2 {:.4}  H_A {:.4}  H_B {:.4}  ergodic {}\n",
                a["mixing_rate"].as_f64().unwrap_or(f64::NAN),
                a["transition_entropy"].as_f64().unwrap_or(f64::NAN),
                a["emission_entropy"].as_f64().unwrap_or(f64::NAN),
                a["ergodic"].as_bool().unwrap_or(false),
            ));
        }
        // Rank methods by final accuracy gap, converged first.
        let mut rows: Vec<(String, Option<f64>, Option<u64>)> = Vec::new();
        if let Some(methods) = s["methods"].as_object() {
            for (name, m) in methods {
                rows.push((
                    name.clone(),
                    m["epsilon_gap"].as_f64(),
                    m["t_converge"].as_u64(),
                ));
            }
        }
        rows.sort_by(|a, b| {
            let ka = a.1.unwrap_or(f64::INFINITY);
            let kb = b.1.unwrap_or(f64::INFINITY);
            ka.partial_cmp(&kb).unwrap().then(a.0.cmp(&b.0))
        });
        for (name, eps, t) in &rows {
            let eps = eps.map_or("   n/a".to_string(), |e| format!("{e:+.4}"));
            let t = t.map_or("never".to_string(), |t| t.to_string());
            let mut flags = String::new();
            if let Some(diag) = s["diagnostics"][name].as_object() {
                if diag.keys().any(|k| k.starts_with("spectral_")) {
                    flags.push_str(" [spectral diagnostics fired]");
                }
                if diag.contains_key("icl_source_fixture") {
                    flags.push_str(" [source=fixture]");
                }
            }
            out.push_str(&format!(
                "    {name:<28} epsilon {eps}  T {t}{flags}\n"
            ));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        let text = r#"{
            "schema_version": 1,
            "settings": [],
            "methods": [{"type": "viterbi"}],
            "master_seed": 1,
            "bogus_key": true
        }"#;
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn config_rejects_bad_grid() {
        let text = r#"{
            "schema_version": 1,
            "settings": [{"kind": "synth", "spec": {"M": 2, "L": 2, "target_lambda2": 0.5, "target_hb": 0.3, "seed": 1}}],
            "methods": [{"type": "viterbi"}],
            "context_grid": [4, 4, 8],
            "master_seed": 1
        }"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn config_rejects_grid_reaching_seq_length() {
        let text = r#"{
            "schema_version": 1,
            "settings": [{"kind": "synth", "spec": {"M": 2, "L": 2, "target_lambda2": 0.5, "target_hb": 0.3, "seed": 1}}],
            "methods": [{"type": "viterbi"}],
            "context_grid": [4, 512],
            "seq_length": 512,
            "master_seed": 1
        }"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn setting_seeds_are_stable_under_appends() {
        let a = setting_seed(99, 0);
        let b = setting_seed(99, 1);
        assert_ne!(a, b);
        assert_eq!(a, setting_seed(99, 0));
    }

    #[test]
    fn ingest_masks_and_maps_tokens() {
        let csv = "stimulus,choice,reward\n1,L,0\n2,R,1\n1,L,1\n3,L,0\n";
        let out = ingest_csv(
            csv,
            &["choice".to_string()],
            None,
        )
        .unwrap();
        assert_eq!(out.alphabet, 2);
        assert_eq!(out.sequences.len(), 1);
        assert_eq!(out.sequences[0].symbols, vec![0, 1, 0, 0]);
    }

    #[test]
    fn ingest_composite_mask_bounds_alphabet() {
        let csv = "stimulus,choice,reward\n1,L,0\n2,R,1\n1,L,1\n";
        let out = ingest_csv(
            csv,
            &["stimulus".to_string(), "choice".to_string(), "reward".to_string()],
            None,
        )
        .unwrap();
        assert_eq!(out.alphabet, 3);
        assert!(out.mapping.contains_key("1|L|0"));
    }

    #[test]
    fn ingest_unknown_column_errors() {
        let csv = "a,b\n1,2\n";
        assert!(matches!(
            ingest_csv(csv, &["missing".to_string()], None),
            Err(ExperimentError::UnknownColumn(_))
        ));
    }

    #[test]
    fn ingest_groups_by_id_column() {
        let csv = "mouse,choice\nm1,L\nm2,R\nm1,R\n";
        let out = ingest_csv(csv, &["choice".to_string()], Some("mouse")).unwrap();
        assert_eq!(out.sequences.len(), 2);
        assert_eq!(out.sequences[0].id, "m1");
        assert_eq!(out.sequences[0].symbols, vec![0, 1]);
        assert_eq!(out.sequences[1].symbols, vec![1]);
    }

    #[test]
    fn report_requires_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            report(dir.path()),
            Err(ExperimentError::MissingArtifacts(_))
        ));
    }
}
