//! Command-line driver for the HMM laboratory pipeline.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use hmmlab::experiment::{
    ingest_to_files, report, run_experiment, sample_to_files, synth_to_files, ExperimentConfig,
    ExperimentError,
};
use hmmlab::llm::EndpointConfig;
use hmmlab::sampler::CodecScheme;
use hmmlab::synth::SynthesisSpec;

#[derive(Parser)]
#[command(name = "hmmlab", version, about = "HMM sequence-prediction benchmark laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct one parameter set from a synthesis spec file.
    Synth {
        /// JSON synthesis spec: {"M", "L", "target_lambda2", "target_hb", ...}
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for params.json and synthesis_report.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample a trajectory batch from a params file.
    Sample {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 2049)]
        len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Binary batch output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional text export: one sequence per line, 1-based symbols.
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Run a full experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// OpenAI-compatible completions endpoint base URL.
        #[arg(long)]
        llm_endpoint: Option<String>,
        /// Model id sent with each completion request.
        #[arg(long, default_value = "default")]
        llm_model: String,
        /// Fixture file for offline in-context prediction.
        #[arg(long)]
        llm_fixture: Option<PathBuf>,
        /// Response cache directory.
        #[arg(long)]
        llm_cache: Option<PathBuf>,
        /// Token encoding for in-context prediction.
        #[arg(long, value_parser = parse_codec)]
        codec: Option<CodecScheme>,
    },
    /// Discretize a CSV of trials into a sequence file.
    Ingest {
        /// Input CSV with a header row.
        #[arg(long)]
        input: PathBuf,
        /// Columns composed into each symbol, joined with '+' or ','.
        #[arg(long)]
        mask: String,
        /// Optional column that groups rows into per-subject sequences.
        #[arg(long)]
        id_column: Option<String>,
        /// Output sequence file; a .mapping.json lands alongside.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize run artifacts as a ranking table.
    Report {
        /// Directory holding curves.csv and summary.json.
        #[arg(long)]
        dir: PathBuf,
    },
}

fn parse_codec(s: &str) -> Result<CodecScheme, String> {
    match s {
        "abc" => Ok(CodecScheme::Abc),
        "digits" => Ok(CodecScheme::Digits),
        "random" | "random_special" => Ok(CodecScheme::RandomSpecial),
        other => Err(format!("unknown codec {other:?} (abc|digits|random)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, ExperimentError> {
    match cli.command {
        Command::Synth { spec, out, seed } => {
            let text = std::fs::read_to_string(&spec)?;
            let mut spec: SynthesisSpec =
                serde_json::from_str(&text).map_err(|e| ExperimentError::Config(e.to_string()))?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let (params_path, report_path) = synth_to_files(&spec, &out)?;
            println!("wrote {}", params_path.display());
            println!("wrote {}", report_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample {
            params,
            n,
            len,
            seed,
            out,
            text,
        } => {
            sample_to_files(&params, n, len, seed, &out, text.as_deref())?;
            println!("wrote {}", out.display());
            if let Some(t) = text {
                println!("wrote {}", t.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            out,
            seed,
            threads,
            llm_endpoint,
            llm_model,
            llm_fixture,
            llm_cache,
            codec,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut config = ExperimentConfig::from_json(&text)?;
            if let Some(s) = seed {
                config.master_seed = s;
            }
            apply_llm_flags(&mut config, llm_endpoint, llm_model, llm_fixture, llm_cache, codec);
            let out_dir = out
                .or_else(|| config.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("hmmlab_out"));
            let threads = if threads == 0 { None } else { Some(threads) };
            let outcome = run_experiment(&config, &out_dir, threads)?;
            println!(
                "completed {} settings, {} failures -> {}",
                outcome.completed,
                outcome.failures.len(),
                outcome.output_dir.display()
            );
            for f in &outcome.failures {
                eprintln!("setting {} failed: {}", f.setting_id, f.error);
            }
            if outcome.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
        Command::Ingest {
            input,
            mask,
            id_column,
            out,
        } => {
            let mask: Vec<String> = mask
                .split(['+', ','])
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            let output = ingest_to_files(&input, &mask, id_column.as_deref(), &out)?;
            println!(
                "wrote {} ({} sequences, alphabet {})",
                out.display(),
                output.sequences.len(),
                output.alphabet
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir } => {
            let text = report(&dir)?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// CLI LLM flags override or create the config's llm section; the ICL method
/// itself still comes from the config's method list (or is appended when a
/// codec is given explicitly).
fn apply_llm_flags(
    config: &mut ExperimentConfig,
    endpoint: Option<String>,
    model: String,
    fixture: Option<PathBuf>,
    cache: Option<PathBuf>,
    codec: Option<CodecScheme>,
) {
    use hmmlab::experiment::LlmSection;
    use hmmlab::metrics::MethodSpec;

    if endpoint.is_some() || fixture.is_some() {
        let section = config.llm.get_or_insert_with(|| LlmSection {
            endpoint: EndpointConfig {
                base_url: "http://127.0.0.1:1".into(),
                model_id: model.clone(),
                api_key_env: None,
                top_logprobs: 20,
                timeout_secs: 30.0,
                max_inflight: 4,
                prompt_prefix: None,
            },
            cache_dir: None,
            fixture: None,
        });
        if let Some(url) = endpoint {
            section.endpoint.base_url = url;
            section.endpoint.model_id = model;
        }
        if fixture.is_some() {
            section.fixture = fixture;
        }
        if cache.is_some() {
            section.cache_dir = cache;
        }
    }
    if let Some(scheme) = codec {
        let already = config
            .methods
            .iter()
            .any(|m| matches!(m, MethodSpec::Icl { .. }));
        if !already {
            config.methods.push(MethodSpec::Icl { codec: scheme });
        }
    }
}
