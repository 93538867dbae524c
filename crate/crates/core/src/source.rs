//! Next-token distribution sources.
//!
//! [`SyntheticModel`] stands in for a language model: its logits at each
//! step are Gaussian variates derived from a hash of the model seed and the
//! prefix, scaled by a concentration `gamma` and passed through softmax.
//! `gamma = 0` gives the uniform distribution; larger values give peakier
//! distributions in which a random half of the vocabulary tends to hold
//! either very little or very much of the mass.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::wm::{self, prefix_hash, GreenMask, PrefixDigest, Seed};

#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        wm::validate_distribution(&probs)?;
        Ok(Self { probs })
    }

    pub fn uniform(vocab_size: u32) -> Self {
        let p = 1.0 / vocab_size as f64;
        Self {
            probs: vec![p; vocab_size as usize],
        }
    }

    /// Softmax of `logits`.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() || logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidInput(
                "logits must be finite and non-empty".into(),
            ));
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().cloned().fold(0.0, f64::max)
    }
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index(probs: &[f64], rng: &mut impl RngCore) -> u32 {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i as u32;
        }
    }
    // rounding left u above the final cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
}

/// Total probability of the mask's members.
pub fn green_mass(dist: &TokenDistribution, mask: &GreenMask) -> Result<f64> {
    if dist.len() != mask.len() {
        return Err(Error::Shape {
            what: "green mask",
            expected: dist.len(),
            actual: mask.len(),
        });
    }
    Ok(mask.members().map(|v| dist.probs[v]).sum())
}

pub trait TokenSource: Sync {
    fn vocab_size(&self) -> u32;

    fn next_distribution(&self, prefix: &[u32]) -> Result<TokenDistribution>;

    /// Same as [`next_distribution`](Self::next_distribution) when the caller
    /// already holds the full-prefix digest.
    fn next_distribution_with_digest(
        &self,
        prefix: &[u32],
        _digest: &PrefixDigest,
    ) -> Result<TokenDistribution> {
        self.next_distribution(prefix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticModel {
    pub model_seed: u64,
    pub vocab_size: u32,
    /// gamma: standard deviation of the logits.
    pub concentration: f64,
}

impl SyntheticModel {
    pub fn new(model_seed: u64, vocab_size: u32, concentration: f64) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        if !(concentration.is_finite() && concentration >= 0.0) {
            return Err(Error::Config(format!(
                "concentration {concentration} must be finite and >= 0"
            )));
        }
        Ok(Self {
            model_seed,
            vocab_size,
            concentration,
        })
    }

    /// Unit-variance Gaussian logits for the given prefix digest.
    pub fn standard_logits(&self, digest: &PrefixDigest) -> Vec<f64> {
        gaussian_block(self.model_seed, &digest.0, self.vocab_size as usize)
    }

    fn distribution_for(&self, digest: &PrefixDigest) -> TokenDistribution {
        if self.concentration == 0.0 {
            return TokenDistribution::uniform(self.vocab_size);
        }
        let logits: Vec<f64> = self
            .standard_logits(digest)
            .into_iter()
            .map(|z| z * self.concentration)
            .collect();
        TokenDistribution::from_logits(&logits).expect("finite logits")
    }
}

impl TokenSource for SyntheticModel {
    fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    fn next_distribution(&self, prefix: &[u32]) -> Result<TokenDistribution> {
        let digest = prefix_hash(prefix, self.vocab_size)?;
        Ok(self.distribution_for(&digest))
    }

    fn next_distribution_with_digest(
        &self,
        _prefix: &[u32],
        digest: &PrefixDigest,
    ) -> Result<TokenDistribution> {
        Ok(self.distribution_for(digest))
    }
}

fn unit_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Box-Muller over SHA-256(model_seed ‖ digest ‖ j) blocks, four normals
/// per block.
fn gaussian_block(model_seed: u64, digest: &[u8; 32], count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count + 3);
    let mut j: u32 = 0;
    while out.len() < count {
        let mut h = Sha256::new();
        h.update(model_seed.to_be_bytes());
        h.update(digest);
        h.update(j.to_be_bytes());
        let block: [u8; 32] = h.finalize().into();
        let u: Vec<f64> = block
            .chunks_exact(8)
            .map(|c| unit_open(u64::from_be_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        for pair in u.chunks_exact(2) {
            let r = (-2.0 * pair[0].ln()).sqrt();
            let theta = std::f64::consts::TAU * pair[1];
            out.push(r * theta.cos());
            out.push(r * theta.sin());
        }
        j += 1;
    }
    out.truncate(count);
    out
}

/// Monte Carlo summary of how a model's distributions split across random
/// half-vocabulary masks.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GreenMassStats {
    pub concentration: f64,
    pub samples: usize,
    /// Mean mass of a random half. 0.5 for every model, up to noise.
    pub mean_green_mass: f64,
    /// Mean mass of the target half after applying the bias.
    pub mean_biased_mass: f64,
    /// The green mass g whose closed-form biased mass g e^d / (g e^d + 1 - g)
    /// equals `mean_biased_mass`.
    pub effective_green_mass: f64,
    pub mean_max_prob: f64,
}

/// Inverse of the closed-form biased mass: the g that maps to `biased`.
pub fn effective_green_mass(biased: f64, delta: f64) -> f64 {
    biased / (biased + delta.exp() * (1.0 - biased))
}

/// Fixed random draws (logit directions and masks) reused across every
/// concentration value, so statistics vary smoothly with gamma.
pub struct GreenMassProbe {
    delta: f64,
    logits: Vec<Vec<f64>>,
    masks: Vec<GreenMask>,
}

impl GreenMassProbe {
    pub fn new(vocab_size: u32, delta: f64, samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidInput("samples must be positive".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let model = SyntheticModel::new(rng.next_u64(), vocab_size, 1.0)?;
        let mut logits = Vec::with_capacity(samples);
        let mut masks = Vec::with_capacity(samples);
        for _ in 0..samples {
            let len = rng.random_range(0..16usize);
            let prefix: Vec<u32> = (0..len).map(|_| rng.random_range(0..vocab_size)).collect();
            logits.push(model.standard_logits(&prefix_hash(&prefix, vocab_size)?));
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            masks.push(wm::greenlist(&Seed(s), vocab_size)?);
        }
        Ok(Self {
            delta,
            logits,
            masks,
        })
    }

    pub fn stats(&self, concentration: f64) -> GreenMassStats {
        let boost = self.delta.exp();
        let (mut g_sum, mut b_sum, mut m_sum) = (0.0, 0.0, 0.0);
        for (z, mask) in self.logits.iter().zip(&self.masks) {
            let scaled: Vec<f64> = z.iter().map(|v| v * concentration).collect();
            let dist = TokenDistribution::from_logits(&scaled).expect("finite");
            let g = green_mass(&dist, mask).expect("same length");
            g_sum += g;
            b_sum += g * boost / (g * boost + 1.0 - g);
            m_sum += dist.max_prob();
        }
        let n = self.logits.len() as f64;
        let mean_biased_mass = b_sum / n;
        GreenMassStats {
            concentration,
            samples: self.logits.len(),
            mean_green_mass: g_sum / n,
            mean_biased_mass,
            effective_green_mass: effective_green_mass(mean_biased_mass, self.delta),
            mean_max_prob: m_sum / n,
        }
    }

    /// Bisection for the concentration whose effective green mass equals
    /// `target` (which must lie in (0, 0.5]).
    pub fn calibrate(&self, target: f64) -> Result<GreenMassStats> {
        if !(target > 0.0 && target <= 0.5) {
            return Err(Error::InvalidInput(format!(
                "target effective green mass {target} outside (0, 0.5]"
            )));
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while self.stats(hi).effective_green_mass > target {
            hi *= 2.0;
            if hi > 1e3 {
                return Err(Error::InvalidInput(format!(
                    "effective green mass {target} not reachable"
                )));
            }
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if self.stats(mid).effective_green_mass > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(self.stats(0.5 * (lo + hi)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_concentration_is_uniform() {
        let m = SyntheticModel::new(1, 64, 0.0).unwrap();
        let d = m.next_distribution(&[1, 2, 3]).unwrap();
        assert!(d.probs().iter().all(|&p| p == 1.0 / 64.0));
    }

    #[test]
    fn model_is_deterministic_and_normalized() {
        let m = SyntheticModel::new(42, 100, 2.0).unwrap();
        let a = m.next_distribution(&[7, 8]).unwrap();
        let b = m.next_distribution(&[7, 8]).unwrap();
        assert_eq!(a, b);
        assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let c = m.next_distribution(&[8, 7]).unwrap();
        assert_ne!(a, c);
        let digest = prefix_hash(&[7, 8], 100).unwrap();
        assert_eq!(
            m.next_distribution_with_digest(&[7, 8], &digest).unwrap(),
            a
        );
    }

    #[test]
    fn standard_logits_look_gaussian() {
        let m = SyntheticModel::new(5, 4096, 1.0).unwrap();
        let z = m.standard_logits(&prefix_hash(&[], 4096).unwrap());
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 5.0 / n.sqrt(), "{mean}");
        assert!((var - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn green_mass_cases() {
        let mask = GreenMask::from_members(4, [1, 2]);
        assert_eq!(
            green_mass(&TokenDistribution::uniform(4), &mask).unwrap(),
            0.5
        );
        let point = TokenDistribution::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(green_mass(&point, &mask).unwrap(), 1.0);
        assert!(green_mass(&TokenDistribution::uniform(6), &mask).is_err());
    }

    #[test]
    fn sampling_follows_cdf() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let probs = [0.0, 0.25, 0.0, 0.75];
        let mut counts = [0usize; 4];
        for _ in 0..20_000 {
            counts[sample_index(&probs, &mut rng) as usize] += 1;
        }
        assert_eq!(counts[0] + counts[2], 0);
        let frac = counts[3] as f64 / 20_000.0;
        // 5 sigma
        assert!((frac - 0.75).abs() < 5.0 * (0.75f64 * 0.25 / 20_000.0).sqrt());
    }

    #[test]
    fn peakiness_increases_with_concentration() {
        let probe = GreenMassProbe::new(256, 2.5, 200, 1).unwrap();
        let mut last = 0.0;
        for gamma in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let s = probe.stats(gamma);
            assert!(s.mean_max_prob > last, "gamma {gamma}");
            last = s.mean_max_prob;
        }
    }

    #[test]
    fn uniform_model_has_half_green_mass() {
        let probe = GreenMassProbe::new(128, 2.5, 50, 3).unwrap();
        let s = probe.stats(0.0);
        assert!((s.mean_green_mass - 0.5).abs() < 1e-12);
        assert!((s.effective_green_mass - 0.5).abs() < 1e-12);
    }

    #[test]
    fn effective_mass_inverts_closed_form() {
        let g = 0.35f64;
        let b = g * 2.5f64.exp() / (g * 2.5f64.exp() + 1.0 - g);
        assert!((effective_green_mass(b, 2.5) - g).abs() < 1e-12);
    }
}
