//! Watermark mechanics shared by the encoder and the decoder: scheme
//! configuration, prefix hashing, keyed seed derivation, seeded vocabulary
//! permutation, position-to-bit allocation and logit biasing.

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bch::{InfoWord, CODE_LENGTH, INFO_LENGTH};
use crate::error::{Error, Result};
use crate::keychain::TimeKey;

const STAGE1_TAG: &[u8] = b"timemark/seed/stage1";
const STAGE2_TAG: &[u8] = b"timemark/seed/stage2";

/// Scheme parameters. Serialized field names follow the usual notation:
/// `m` info bits, `n` payload bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatermarkConfig {
    pub vocab_size: u32,
    #[serde(rename = "m")]
    pub info_bits: usize,
    #[serde(rename = "n")]
    pub payload_bits: usize,
    pub alpha: usize,
    pub delta: f64,
    pub phi: f64,
    pub min_length: usize,
    pub granularity_seconds: u64,
}

impl Default for WatermarkConfig {
    fn default() -> Self {
        Self {
            vocab_size: 1024,
            info_bits: INFO_LENGTH,
            payload_bits: CODE_LENGTH,
            alpha: 5,
            delta: 2.5,
            phi: 0.65,
            min_length: 945,
            granularity_seconds: 60,
        }
    }
}

impl WatermarkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.vocab_size < 2 || !self.vocab_size.is_multiple_of(2) {
            return fail(format!(
                "vocab_size {} must be even and >= 2",
                self.vocab_size
            ));
        }
        if self.info_bits != INFO_LENGTH || self.payload_bits != CODE_LENGTH {
            return fail(format!(
                "only the ({CODE_LENGTH},{INFO_LENGTH}) BCH code is supported, got (n={}, m={})",
                self.payload_bits, self.info_bits
            ));
        }
        if self.alpha == 0 {
            return fail("alpha must be positive".into());
        }
        let stage1 = self.stage1_len();
        if self.min_length < stage1 {
            return fail(format!(
                "min_length {} is shorter than alpha*n = {stage1}",
                self.min_length
            ));
        }
        if !(self.min_length - stage1).is_multiple_of(self.payload_bits)
            || self.min_length == stage1
        {
            return fail(format!(
                "min_length - alpha*n = {} must be a positive multiple of n = {}",
                self.min_length - stage1,
                self.payload_bits
            ));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return fail(format!("delta {} must be finite and >= 0", self.delta));
        }
        if !(self.phi > 0.5 && self.phi <= 1.0) {
            return fail(format!("phi {} must lie in (0.5, 1]", self.phi));
        }
        if self.granularity_seconds == 0 {
            return fail("granularity_seconds must be positive".into());
        }
        Ok(())
    }

    /// Number of verification (Stage I) positions, alpha * n.
    pub fn stage1_len(&self) -> usize {
        self.alpha * self.payload_bits
    }

    /// Stage II positions per payload bit.
    pub fn reps_stage2(&self) -> usize {
        (self.min_length - self.stage1_len()) / self.payload_bits
    }

    pub fn stage_of(&self, position: usize) -> Stage {
        if position <= self.stage1_len() {
            Stage::Verification
        } else {
            Stage::Recovery
        }
    }

    /// Minimum number of Stage I matches for `score >= phi`.
    pub fn acceptance_threshold(&self) -> usize {
        acceptance_threshold(self.stage1_len(), self.phi)
    }
}

/// Smallest `k` with `k / count >= phi`.
pub fn acceptance_threshold(count: usize, phi: f64) -> usize {
    let raw = phi * count as f64;
    // guard against 0.6 * 10 = 6.000000000000001
    let k = (raw - 1e-9).ceil().max(0.0) as usize;
    k.min(count + 1)
}

/// Stage I seeds mix in the random sequence R and feed verification;
/// Stage II seeds omit R and feed payload recovery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Verification,
    Recovery,
}

/// Bit index (1-based) carried by position `i` (1-based): round-robin over
/// the payload within each stage.
pub fn allocate(i: usize, cfg: &WatermarkConfig) -> Result<usize> {
    if i == 0 || i > cfg.min_length {
        return Err(Error::InvalidInput(format!(
            "position {i} outside 1..={}",
            cfg.min_length
        )));
    }
    let n = cfg.payload_bits;
    let stage1 = cfg.stage1_len();
    Ok(if i <= stage1 {
        (i - 1) % n + 1
    } else {
        (i - stage1 - 1) % n + 1
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrefixDigest(pub [u8; 32]);

impl std::fmt::Debug for PrefixDigest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PrefixDigest({})", hex::encode(&self.0[..8]))
    }
}

/// SHA-256 over the token ids, each as 4-byte big-endian.
pub fn prefix_hash(tokens: &[u32], vocab_size: u32) -> Result<PrefixDigest> {
    let mut h = PrefixHasher::new(vocab_size);
    for &t in tokens {
        h.push(t)?;
    }
    Ok(h.digest())
}

/// Incremental form of [`prefix_hash`].
#[derive(Clone)]
pub struct PrefixHasher {
    state: Sha256,
    vocab_size: u32,
}

impl PrefixHasher {
    pub fn new(vocab_size: u32) -> Self {
        Self {
            state: Sha256::new(),
            vocab_size,
        }
    }

    pub fn push(&mut self, token: u32) -> Result<()> {
        check_token(token, self.vocab_size)?;
        self.state.update(token.to_be_bytes());
        Ok(())
    }

    pub fn digest(&self) -> PrefixDigest {
        PrefixDigest(self.state.clone().finalize().into())
    }
}

pub(crate) fn check_token(token: u32, vocab_size: u32) -> Result<()> {
    if token < vocab_size {
        Ok(())
    } else {
        Err(Error::TokenOutOfRange { token, vocab_size })
    }
}

/// Which part of the generated prefix feeds seed derivation.
///
/// `FullPrefix` is the scheme proper. `PreviousToken` hashes only the last
/// token, the short-context seeding of conventional multi-bit schemes; it
/// exists to model the vulnerable baseline in the attack simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedContext {
    #[default]
    FullPrefix,
    PreviousToken,
}

/// Tracks the context digest while tokens are appended.
#[derive(Clone)]
pub struct ContextTracker {
    mode: SeedContext,
    full: PrefixHasher,
    last: Option<u32>,
    vocab_size: u32,
}

impl ContextTracker {
    pub fn new(mode: SeedContext, vocab_size: u32) -> Self {
        Self {
            mode,
            full: PrefixHasher::new(vocab_size),
            last: None,
            vocab_size,
        }
    }

    pub fn push(&mut self, token: u32) -> Result<()> {
        check_token(token, self.vocab_size)?;
        if self.mode == SeedContext::FullPrefix {
            self.full.push(token)?;
        }
        self.last = Some(token);
        Ok(())
    }

    pub fn digest(&self) -> PrefixDigest {
        match self.mode {
            SeedContext::FullPrefix => self.full.digest(),
            SeedContext::PreviousToken => {
                let mut h = PrefixHasher::new(self.vocab_size);
                if let Some(t) = self.last {
                    h.push(t).expect("checked on push");
                }
                h.digest()
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub [u8; 32]);

impl std::fmt::Debug for Seed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Seed({})", hex::encode(&self.0[..8]))
    }
}

/// HMAC-SHA-256 keyed by the window key over `tag ‖ R ‖ h(prefix)`.
/// Passing `Some(R)` gives a Stage I seed, `None` a Stage II seed.
pub fn derive_seed(key: &TimeKey, r: Option<InfoWord>, prefix: &PrefixDigest) -> Seed {
    let mut mac =
        <Hmac<Sha256> as KeyInit>::new_from_slice(key.as_bytes()).expect("HMAC accepts any key");
    match r {
        Some(r) => {
            mac.update(STAGE1_TAG);
            mac.update(&r.to_be_bytes());
        }
        None => mac.update(STAGE2_TAG),
    }
    mac.update(&prefix.0);
    Seed(mac.finalize().into_bytes().into())
}

/// Counter-mode byte stream: block j = SHA-256(seed ‖ j as u32 BE).
struct SeedStream {
    seed: [u8; 32],
    counter: u32,
    block: [u8; 32],
    pos: usize,
}

impl SeedStream {
    fn new(seed: &Seed) -> Self {
        Self {
            seed: seed.0,
            counter: 0,
            block: [0; 32],
            pos: 32,
        }
    }

    fn next_u32(&mut self) -> u32 {
        if self.pos == 32 {
            let mut h = Sha256::new();
            h.update(self.seed);
            h.update(self.counter.to_be_bytes());
            self.block = h.finalize().into();
            self.counter += 1;
            self.pos = 0;
        }
        let bytes = &self.block[self.pos..self.pos + 4];
        self.pos += 4;
        u32::from_be_bytes(bytes.try_into().expect("4 bytes"))
    }

    /// Uniform draw from 0..bound by rejection sampling.
    fn below(&mut self, bound: u32) -> u32 {
        debug_assert!(bound > 0);
        let limit = (1u64 << 32) / bound as u64 * bound as u64;
        loop {
            let x = self.next_u32() as u64;
            if x < limit {
                return (x % bound as u64) as u32;
            }
        }
    }
}

fn shuffle_prefix(seed: &Seed, vocab_size: u32, slots: usize) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..vocab_size).collect();
    let mut stream = SeedStream::new(seed);
    let v = vocab_size as usize;
    for i in 0..slots.min(v.saturating_sub(1)) {
        let j = i + stream.below((v - i) as u32) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Full Fisher-Yates permutation of the vocabulary driven by `seed`.
pub fn permute(seed: &Seed, vocab_size: u32) -> Vec<u32> {
    shuffle_prefix(seed, vocab_size, vocab_size as usize)
}

/// Greenlist: the first half of the seeded permutation.
///
/// The shuffle fixes slot `i` at step `i`, so only `|V|/2` steps are run;
/// the result equals the first half of [`permute`].
pub fn greenlist(seed: &Seed, vocab_size: u32) -> Result<GreenMask> {
    if vocab_size < 2 || !vocab_size.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "vocab_size {vocab_size} must be even and >= 2"
        )));
    }
    let half = vocab_size as usize / 2;
    let perm = shuffle_prefix(seed, vocab_size, half);
    let mut mask = GreenMask::empty(vocab_size as usize);
    for &t in &perm[..half] {
        mask.insert(t as usize);
    }
    Ok(mask)
}

/// Membership bit-vector over the vocabulary.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GreenMask {
    words: Vec<u64>,
    len: usize,
}

impl std::fmt::Debug for GreenMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GreenMask(len={}, green={})", self.len, self.count())
    }
}

impl GreenMask {
    pub fn empty(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_members(len: usize, members: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(len);
        for t in members {
            m.insert(t);
        }
        m
    }

    fn insert(&mut self, t: usize) {
        assert!(t < self.len);
        self.words[t / 64] |= 1 << (t % 64);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, t: usize) -> bool {
        t < self.len && (self.words[t / 64] >> (t % 64)) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&t| self.contains(t))
    }
}

/// Multiplies the probabilities of the target subset (green for bit 1, red
/// for bit 0) by e^delta and renormalizes.
pub fn apply_bias(dist: &[f64], mask: &GreenMask, bit: u8, delta: f64) -> Result<Vec<f64>> {
    validate_distribution(dist)?;
    if dist.len() != mask.len() {
        return Err(Error::Shape {
            what: "green mask",
            expected: dist.len(),
            actual: mask.len(),
        });
    }
    if bit > 1 {
        return Err(Error::InvalidInput(format!("bit value {bit} is not 0/1")));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidInput(format!("delta {delta} must be >= 0")));
    }
    let boost = delta.exp();
    let want_green = bit == 1;
    let mut out: Vec<f64> = dist
        .iter()
        .enumerate()
        .map(|(v, &p)| {
            if mask.contains(v) == want_green {
                p * boost
            } else {
                p
            }
        })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

pub(crate) fn validate_distribution(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::InvalidInput("empty distribution".into()));
    }
    if let Some(p) = dist.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "distribution entry {p} is negative or non-finite"
        )));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "distribution sums to {total}, not 1"
        )));
    }
    Ok(())
}
