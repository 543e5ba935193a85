//! Trajectory sampling and observation-to-token encoding.
//!
//! Batches are reproducible: sequence `i` draws from a ChaCha8 substream
//! keyed by `(seed, i)`, so the realized sequences do not depend on the
//! batch size or on how sampling work is scheduled, and the stream is
//! identical across platforms.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::hmm::HmmParams;

const BATCH_MAGIC: &[u8; 8] = b"HMMBATCH";
const BATCH_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("alphabet size {alphabet} too large for {scheme} encoding (max {max})")]
    AlphabetTooLarge {
        alphabet: usize,
        scheme: &'static str,
        max: usize,
    },
    #[error("symbol {symbol} out of range for alphabet size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },
    #[error("token stream does not decode under this codec at byte {at}")]
    UndecodableToken { at: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("malformed batch file: {0}")]
    MalformedBatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `n` state/observation sequence pairs of equal length sampled from one
/// parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub setting_id: String,
    pub seed: u64,
    pub seq_len: usize,
    /// `n` rows of hidden states, 0-based.
    pub states: Vec<Vec<u16>>,
    /// `n` rows of observations, 0-based, same shape as `states`.
    pub observations: Vec<Vec<u16>>,
}

impl TrajectoryBatch {
    pub fn num_sequences(&self) -> usize {
        self.observations.len()
    }
}

/// Mix `(seed, index)` into a 32-byte ChaCha key via splitmix64 so every
/// sequence owns an independent, platform-stable stream.
fn substream_key(seed: u64, index: u64) -> [u8; 32] {
    let mut state = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn draw(rng: &mut ChaCha8Rng, cdf_row: &[f64]) -> u16 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in cdf_row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u16;
        }
    }
    (cdf_row.len() - 1) as u16
}

/// Sample `n` sequences of length `t` from `params`.
pub fn sample_batch(
    params: &HmmParams,
    n: usize,
    t: usize,
    seed: u64,
) -> Result<TrajectoryBatch, SamplerError> {
    if n == 0 || t == 0 {
        return Err(SamplerError::Invalid("n and T must be >= 1".into()));
    }
    let mut states = Vec::with_capacity(n);
    let mut observations = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::from_seed(substream_key(seed, i as u64));
        let mut xs = Vec::with_capacity(t);
        let mut os = Vec::with_capacity(t);
        let mut x = draw(&mut rng, params.pi());
        xs.push(x);
        os.push(draw(&mut rng, params.b_row(usize::from(x))));
        for _ in 1..t {
            x = draw(&mut rng, params.a_row(usize::from(x)));
            xs.push(x);
            os.push(draw(&mut rng, params.b_row(usize::from(x))));
        }
        states.push(xs);
        observations.push(os);
    }
    Ok(TrajectoryBatch {
        setting_id: String::new(),
        seed,
        seq_len: t,
        states,
        observations,
    })
}

// ---------------------------------------------------------------------------
// Batch persistence
// ---------------------------------------------------------------------------

/// Binary layout: magic, version, header (setting id, seed, M, L, n, T),
/// then states and observations row-major as little-endian u16.
pub fn write_batch(
    batch: &TrajectoryBatch,
    params: &HmmParams,
    path: &Path,
) -> Result<(), SamplerError> {
    let mut out = Vec::new();
    out.extend_from_slice(BATCH_MAGIC);
    out.extend_from_slice(&BATCH_VERSION.to_le_bytes());
    let id = batch.setting_id.as_bytes();
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&batch.seed.to_le_bytes());
    out.extend_from_slice(&(params.num_states() as u32).to_le_bytes());
    out.extend_from_slice(&(params.num_obs() as u32).to_le_bytes());
    out.extend_from_slice(&(batch.num_sequences() as u32).to_le_bytes());
    out.extend_from_slice(&(batch.seq_len as u32).to_le_bytes());
    for row in batch.states.iter().chain(batch.observations.iter()) {
        for &v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Read a batch file; returns the batch plus `(M, L)` from the header.
pub fn read_batch(path: &Path) -> Result<(TrajectoryBatch, usize, usize), SamplerError> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], SamplerError> {
        if *cursor + n > data.len() {
            return Err(SamplerError::MalformedBatch("truncated file".into()));
        }
        let slice = &data[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    if take(&mut cursor, 8)? != BATCH_MAGIC {
        return Err(SamplerError::MalformedBatch("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    if version != BATCH_VERSION {
        return Err(SamplerError::MalformedBatch(format!(
            "unsupported version {version}"
        )));
    }
    let id_len = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let setting_id = String::from_utf8(take(&mut cursor, id_len)?.to_vec())
        .map_err(|_| SamplerError::MalformedBatch("setting id not utf-8".into()))?;
    let seed = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
    let m = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let l = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let t = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;

    let read_rows = |cursor: &mut usize| -> Result<Vec<Vec<u16>>, SamplerError> {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let raw = take(cursor, 2 * t)?;
            rows.push(
                raw.chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            );
        }
        Ok(rows)
    };
    let states = read_rows(&mut cursor)?;
    let observations = read_rows(&mut cursor)?;
    Ok((
        TrajectoryBatch {
            setting_id,
            seed,
            seq_len: t,
            states,
            observations,
        },
        m,
        l,
    ))
}

/// One sequence per line, space-separated 1-based integers.
pub fn write_sequences_text(sequences: &[Vec<u16>], path: &Path) -> Result<(), SamplerError> {
    let mut out = String::new();
    for row in sequences {
        let mut first = true;
        for &v in row {
            if !first {
                out.push(' ');
            }
            out.push_str(&(u32::from(v) + 1).to_string());
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse the one-sequence-per-line 1-based format back to 0-based symbols.
pub fn read_sequences_text(path: &Path) -> Result<Vec<Vec<u16>>, SamplerError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split_whitespace() {
            let v: u32 = tok
                .parse()
                .map_err(|_| SamplerError::Invalid(format!("line {}: bad integer {tok:?}", ln + 1)))?;
            if v == 0 || v > u32::from(u16::MAX) {
                return Err(SamplerError::Invalid(format!(
                    "line {}: symbol {v} outside 1-based range",
                    ln + 1
                )));
            }
            row.push((v - 1) as u16);
        }
        rows.push(row);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Token codecs
// ---------------------------------------------------------------------------

/// Fixed special-character tokens for the `random_special` scheme; the first
/// four match the "!@#$" convention.
const SPECIAL_TOKENS: [&str; 26] = [
    "!", "@", "#", "$", "%", "^", "&", "*", "(", ")", "-", "+", "=", "[", "]", "{", "}", "<", ">",
    "?", "/", "~", ";", ":", ",", ".",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecScheme {
    Abc,
    Digits,
    RandomSpecial,
}

/// Injective map from observation symbols to prompt tokens.
#[derive(Debug, Clone)]
pub struct TokenCodec {
    pub scheme: CodecScheme,
    alphabet: usize,
    tokens: Vec<String>,
    pub separator: String,
}

impl TokenCodec {
    pub fn new(scheme: CodecScheme, alphabet: usize) -> Result<Self, SamplerError> {
        let (max, name) = match scheme {
            CodecScheme::Abc => (26, "abc"),
            CodecScheme::Digits => (10, "digits"),
            CodecScheme::RandomSpecial => (SPECIAL_TOKENS.len(), "random_special"),
        };
        if alphabet == 0 || alphabet > max {
            return Err(SamplerError::AlphabetTooLarge {
                alphabet,
                scheme: name,
                max,
            });
        }
        let tokens: Vec<String> = (0..alphabet)
            .map(|i| match scheme {
                CodecScheme::Abc => char::from(b'A' + i as u8).to_string(),
                CodecScheme::Digits => char::from(b'0' + i as u8).to_string(),
                CodecScheme::RandomSpecial => SPECIAL_TOKENS[i].to_string(),
            })
            .collect();
        Ok(Self {
            scheme,
            alphabet,
            tokens,
            separator: String::new(),
        })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Token string for a 0-based symbol.
    pub fn token(&self, symbol: u16) -> Result<&str, SamplerError> {
        self.tokens
            .get(usize::from(symbol))
            .map(String::as_str)
            .ok_or(SamplerError::SymbolOutOfRange {
                symbol: usize::from(symbol) + 1,
                alphabet: self.alphabet,
            })
    }

    /// Symbol for a token, if the token is in the codec image.
    pub fn symbol(&self, token: &str) -> Option<u16> {
        self.tokens.iter().position(|t| t == token).map(|i| i as u16)
    }

    pub fn encode(&self, observations: &[u16]) -> Result<String, SamplerError> {
        let mut out = String::new();
        for (i, &o) in observations.iter().enumerate() {
            if i > 0 {
                out.push_str(&self.separator);
            }
            out.push_str(self.token(o)?);
        }
        Ok(out)
    }

    pub fn decode(&self, text: &str) -> Result<Vec<u16>, SamplerError> {
        let mut out = Vec::new();
        if self.separator.is_empty() {
            let mut rest = text;
            let mut at = 0usize;
            while !rest.is_empty() {
                let hit = self
                    .tokens
                    .iter()
                    .position(|t| rest.starts_with(t.as_str()));
                match hit {
                    Some(i) => {
                        out.push(i as u16);
                        at += self.tokens[i].len();
                        rest = &rest[self.tokens[i].len()..];
                    }
                    None => return Err(SamplerError::UndecodableToken { at }),
                }
            }
        } else {
            for (i, piece) in text.split(self.separator.as_str()).enumerate() {
                match self.symbol(piece) {
                    Some(s) => out.push(s),
                    None => return Err(SamplerError::UndecodableToken { at: i }),
                }
            }
        }
        Ok(out)
    }
}
