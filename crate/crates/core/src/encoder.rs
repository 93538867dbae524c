//! Watermarked generation.
//!
//! Each request draws a fresh 10-bit random sequence R, expands it to the
//! 63-bit payload P = BCH(R), and generates exactly L tokens. Position i
//! carries payload bit P_{A(i)}: the greenlist comes from a seed keyed by
//! the window key over the prefix digest (plus R for the first alpha*n
//! positions), and the target half (green for 1, red for 0) gets a logit
//! boost of delta before sampling.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bch::{BchCode, Codeword, InfoWord, INFO_LENGTH};
use crate::error::{Error, Result};
use crate::keychain::{TimeKey, TimeWindow};
use crate::source::{sample_index, TokenSource};
use crate::wm::{
    self, allocate, derive_seed, greenlist, ContextTracker, PrefixHasher, SeedContext, Stage,
    WatermarkConfig,
};

pub struct GenerationRequest<'a, S: TokenSource + ?Sized> {
    pub window: TimeWindow,
    pub cfg: WatermarkConfig,
    pub model: &'a S,
    /// Drives both the payload draw and token sampling.
    pub rng_seed: u64,
}

/// Generated token ids. The watermark is the only channel: no timestamp or
/// payload travels with the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatermarkedDocument {
    pub tokens: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl WatermarkedDocument {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self { tokens, note: None }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Writes documents as JSON lines.
pub fn write_documents<'a, W: Write>(
    mut out: W,
    docs: impl IntoIterator<Item = &'a WatermarkedDocument>,
) -> Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads JSON-lines documents, skipping blank lines.
pub fn read_documents<R: BufRead>(input: R) -> Result<Vec<WatermarkedDocument>> {
    let mut docs = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("document line {}: {e}", n + 1)))?;
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub position: usize,
    pub stage: Stage,
    pub bit: u8,
    pub token: u32,
    pub in_green: bool,
}

/// Debug instrumentation. Only [`encode_document`] returns it; the payload
/// is otherwise never exposed or persisted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeTrace {
    pub r: InfoWord,
    pub p: Codeword,
    pub positions: Vec<PositionRecord>,
}

impl EncodeTrace {
    /// Fraction of positions in `stage` whose token landed in the target half.
    pub fn target_hit_rate(&self, stage: Stage) -> f64 {
        let recs: Vec<_> = self.positions.iter().filter(|r| r.stage == stage).collect();
        let hits = recs.iter().filter(|r| r.in_green == (r.bit == 1)).count();
        hits as f64 / recs.len().max(1) as f64
    }
}

/// Where the embedded random sequence comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadMode {
    /// Fresh uniform R per document.
    Fresh,
    /// A caller-chosen R reused across documents; models fixed-payload
    /// schemes for the attack simulation.
    Fixed(InfoWord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedOptions {
    pub payload: PayloadMode,
    pub context: SeedContext,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            payload: PayloadMode::Fresh,
            context: SeedContext::FullPrefix,
        }
    }
}

fn stream_rng(tag: &[u8], seed: u64) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(tag);
    h.update(seed.to_be_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Independent payload and sampling streams expanded from one request seed.
pub fn request_rngs(rng_seed: u64) -> (ChaCha20Rng, ChaCha20Rng) {
    (
        stream_rng(b"timemark/rng/payload", rng_seed),
        stream_rng(b"timemark/rng/sampling", rng_seed),
    )
}

/// Per-item seed fanned out from a master seed under a domain tag.
pub fn derive_subseed(tag: &str, master: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"timemark/subseed/");
    h.update(tag.as_bytes());
    h.update([0u8]);
    h.update(master.to_be_bytes());
    h.update(index.to_be_bytes());
    let d: [u8; 32] = h.finalize().into();
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

/// m independent uniform bits.
pub fn sample_payload(rng: &mut impl Rng) -> InfoWord {
    let bits: Vec<u8> = (0..INFO_LENGTH)
        .map(|_| rng.random_range(0..=1u8))
        .collect();
    InfoWord::from_bits(&bits).expect("INFO_LENGTH bits")
}

fn check_source<S: TokenSource + ?Sized>(cfg: &WatermarkConfig, model: &S) -> Result<()> {
    cfg.validate()?;
    if model.vocab_size() != cfg.vocab_size {
        return Err(Error::Config(format!(
            "model vocabulary {} differs from configured vocab_size {}",
            model.vocab_size(),
            cfg.vocab_size
        )));
    }
    Ok(())
}

/// Generates a watermarked document and returns only the tokens.
pub fn generate<S: TokenSource + ?Sized>(
    req: &GenerationRequest<'_, S>,
    key: &TimeKey,
) -> Result<WatermarkedDocument> {
    embed(req, key, EmbedOptions::default()).map(|(doc, _)| doc)
}

/// Generates a watermarked document together with its debug trace.
pub fn encode_document<S: TokenSource + ?Sized>(
    req: &GenerationRequest<'_, S>,
    key: &TimeKey,
) -> Result<(WatermarkedDocument, EncodeTrace)> {
    embed(req, key, EmbedOptions::default())
}

/// The generation loop, parameterized over payload source and seeding context.
pub fn embed<S: TokenSource + ?Sized>(
    req: &GenerationRequest<'_, S>,
    key: &TimeKey,
    opts: EmbedOptions,
) -> Result<(WatermarkedDocument, EncodeTrace)> {
    let cfg = &req.cfg;
    check_source(cfg, req.model)?;
    let code = BchCode::standard();
    let (mut payload_rng, mut sample_rng) = request_rngs(req.rng_seed);
    let r = match opts.payload {
        PayloadMode::Fresh => sample_payload(&mut payload_rng),
        PayloadMode::Fixed(r) => r,
    };
    let p = code.encode(r);

    let vocab = cfg.vocab_size;
    let mut tokens = Vec::with_capacity(cfg.min_length);
    let mut positions = Vec::with_capacity(cfg.min_length);
    let mut ctx = ContextTracker::new(opts.context, vocab);
    let mut model_prefix = PrefixHasher::new(vocab);
    for i in 1..=cfg.min_length {
        let stage = cfg.stage_of(i);
        let bit = p.bit(allocate(i, cfg)? - 1);
        let r_in_seed = (stage == Stage::Verification).then_some(r);
        let seed = derive_seed(key, r_in_seed, &ctx.digest());
        let mask = greenlist(&seed, vocab)?;
        let dist = req
            .model
            .next_distribution_with_digest(&tokens, &model_prefix.digest())?;
        let biased = wm::apply_bias(dist.probs(), &mask, bit, cfg.delta)?;
        let token = sample_index(&biased, &mut sample_rng);
        positions.push(PositionRecord {
            position: i,
            stage,
            bit,
            token,
            in_green: mask.contains(token as usize),
        });
        tokens.push(token);
        ctx.push(token)?;
        model_prefix.push(token)?;
    }
    Ok((
        WatermarkedDocument::new(tokens),
        EncodeTrace { r, p, positions },
    ))
}

/// Plain sampling from the model with no payload and no bias, using the
/// same sampling stream a watermarked request with this seed would use.
pub fn generate_unwatermarked<S: TokenSource + ?Sized>(
    cfg: &WatermarkConfig,
    model: &S,
    rng_seed: u64,
) -> Result<WatermarkedDocument> {
    check_source(cfg, model)?;
    let (_, mut sample_rng) = request_rngs(rng_seed);
    let mut tokens = Vec::with_capacity(cfg.min_length);
    let mut prefix = PrefixHasher::new(cfg.vocab_size);
    for _ in 0..cfg.min_length {
        let dist = model.next_distribution_with_digest(&tokens, &prefix.digest())?;
        let token = sample_index(dist.probs(), &mut sample_rng);
        tokens.push(token);
        prefix.push(token)?;
    }
    Ok(WatermarkedDocument::new(tokens))
}
