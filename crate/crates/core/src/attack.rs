//! Statistical imitation (spoofing) attack simulation.
//!
//! The attacker collects watermarked documents from one window, labels
//! every token with the bit it believes was embedded there, fits a logistic
//! surrogate on hashed (stage, previous token, token) features, and then
//! samples forgeries from the base model reweighted by the surrogate's
//! log-odds. Against a fixed payload the labels are right and the surrogate
//! learns the greenlists; against fresh random payloads the labels are coin
//! flips relative to the truth and nothing is learned.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{false_acceptance_prob, wilson_interval};
use crate::bch::{BchCode, Codeword, InfoWord};
use crate::decoder::{verify_window, Decision, PreparedDocument};
use crate::encoder::{
    derive_subseed, embed, request_rngs, EmbedOptions, GenerationRequest, PayloadMode,
    WatermarkedDocument,
};
use crate::error::{Error, Result};
use crate::keychain::{derive_key, TimeKey, TimeWindow};
use crate::source::{sample_index, SyntheticModel, TokenSource};
use crate::wm::{allocate, PrefixHasher, SeedContext, Stage, WatermarkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Payload = encoding of the window index, identical for every
    /// document in a window.
    FixedPayloadBaseline,
    /// Fresh random payload per document.
    TimeMark,
}

impl AttackMode {
    fn tag(self) -> &'static str {
        match self {
            AttackMode::FixedPayloadBaseline => "baseline",
            AttackMode::TimeMark => "timemark",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// N, documents collected per mode.
    pub corpus_docs: usize,
    /// F, hashed feature buckets.
    pub feature_buckets: u32,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// lambda, forgery strength.
    pub lambda: f64,
    /// t*, the window the corpus comes from and the forgeries claim.
    pub target_window: u64,
    pub forged_docs: usize,
    pub heldout_fraction: f64,
    pub vocab_size: u32,
    pub concentration: f64,
    pub delta: f64,
    /// Seeding context of the attacked scheme, shared by both modes.
    pub context: SeedContext,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            corpus_docs: 200,
            feature_buckets: 1 << 16,
            epochs: 10,
            learning_rate: 0.2,
            l2: 1e-5,
            lambda: 1.5,
            target_window: 7,
            forged_docs: 20,
            heldout_fraction: 0.2,
            vocab_size: 64,
            concentration: 0.0,
            delta: 2.5,
            context: SeedContext::PreviousToken,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.corpus_docs < 2 {
            return bad("corpus_docs must be at least 2 to hold out documents");
        }
        if self.feature_buckets == 0 || self.epochs == 0 || self.forged_docs == 0 {
            return bad("feature_buckets, epochs and forged_docs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be >= 0");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
            return bad("heldout_fraction must lie in (0, 1)");
        }
        self.wm_config().validate()?;
        self.model().map(|_| ())
    }

    pub fn wm_config(&self) -> WatermarkConfig {
        WatermarkConfig {
            vocab_size: self.vocab_size,
            delta: self.delta,
            ..WatermarkConfig::default()
        }
    }

    pub fn model(&self) -> Result<SyntheticModel> {
        SyntheticModel::new(
            derive_subseed("attack/model", self.seed, 0),
            self.vocab_size,
            self.concentration,
        )
    }

    /// The provider's key for t*. Held by the simulated provider and
    /// decoder only.
    fn provider_key(&self) -> TimeKey {
        let root = TimeKey::from_seed(derive_subseed("attack/root", self.seed, 0));
        derive_key(&root, self.target_window)
    }
}

/// The baseline's public time encoding: the low 10 bits of the index.
pub fn window_info(window: u64) -> InfoWord {
    InfoWord::from_u16((window % 1024) as u16).expect("10-bit value")
}

pub fn window_payload(window: u64) -> Codeword {
    BchCode::standard().encode(window_info(window))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub tokens: Vec<u32>,
    pub window: u64,
    pub mode: AttackMode,
    /// Ground truth for instrumentation; never shown to the attacker.
    pub true_payload: Codeword,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackCorpus {
    pub cfg: WatermarkConfig,
    pub entries: Vec<CorpusEntry>,
}

/// Generates `n` documents in window t* under `mode`.
pub fn collect_corpus(mode: AttackMode, n: usize, acfg: &AttackConfig) -> Result<AttackCorpus> {
    if n == 0 {
        return Err(Error::InvalidInput("corpus size must be positive".into()));
    }
    let cfg = acfg.wm_config();
    let model = acfg.model()?;
    let key = acfg.provider_key();
    let window = TimeWindow::new(acfg.target_window, cfg.granularity_seconds)?;
    let payload = match mode {
        AttackMode::FixedPayloadBaseline => PayloadMode::Fixed(window_info(acfg.target_window)),
        AttackMode::TimeMark => PayloadMode::Fresh,
    };
    let opts = EmbedOptions {
        payload,
        context: acfg.context,
    };
    let tag = format!("attack/corpus/{}", mode.tag());
    let entries = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let req = GenerationRequest {
                window,
                cfg,
                model: &model,
                rng_seed: derive_subseed(&tag, acfg.seed, i),
            };
            let (doc, trace) = embed(&req, &key, opts)?;
            Ok(CorpusEntry {
                tokens: doc.tokens,
                window: acfg.target_window,
                mode,
                true_payload: trace.p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackCorpus { cfg, entries })
}

/// What the surrogate sees besides the candidate token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureContext {
    pub stage: Stage,
    pub prev: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTriplet {
    pub context: FeatureContext,
    pub token: u32,
    pub label: u8,
}

/// The attacker's belief for every position of a window-`window` document:
/// bit A(i) of the window's public payload.
pub fn attacker_labels(window: u64, cfg: &WatermarkConfig) -> Vec<u8> {
    let p = window_payload(window);
    (1..=cfg.min_length)
        .map(|i| p.bit(allocate(i, cfg).expect("in range") - 1))
        .collect()
}

fn document_triplets(tokens: &[u32], labels: &[u8], cfg: &WatermarkConfig) -> Vec<TrainingTriplet> {
    tokens
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(idx, (&token, &label))| TrainingTriplet {
            context: FeatureContext {
                stage: cfg.stage_of(idx + 1),
                prev: idx.checked_sub(1).map(|j| tokens[j]),
            },
            token,
            label,
        })
        .collect()
}

/// One triplet per token of every document, document-major.
pub fn build_triplets(corpus: &AttackCorpus) -> Vec<TrainingTriplet> {
    corpus
        .entries
        .iter()
        .flat_map(|e| {
            let labels = attacker_labels(e.window, &corpus.cfg);
            document_triplets(&e.tokens, &labels, &corpus.cfg)
        })
        .collect()
}

/// Fraction of attacker labels equal to the bit actually embedded.
pub fn label_agreement(corpus: &AttackCorpus) -> f64 {
    let cfg = &corpus.cfg;
    let (mut agree, mut total) = (0usize, 0usize);
    for e in &corpus.entries {
        let labels = attacker_labels(e.window, cfg);
        for (i, &y) in labels.iter().enumerate().take(e.tokens.len()) {
            let truth = e
                .true_payload
                .bit(allocate(i + 1, cfg).expect("in range") - 1);
            agree += usize::from(truth == y);
            total += 1;
        }
    }
    agree as f64 / total.max(1) as f64
}

fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

/// Bucket of the (stage, previous token, token) feature.
pub fn feature_bucket(ctx: FeatureContext, token: u32, buckets: u32) -> usize {
    let stage = match ctx.stage {
        Stage::Verification => 1u64,
        Stage::Recovery => 2,
    };
    let prev = ctx.prev.map_or(u32::MAX as u64, u64::from);
    let key = (stage << 62) ^ (prev << 32) ^ u64::from(token);
    (fmix64(key) % u64::from(buckets)) as usize
}

/// Logistic model with one weight per feature bucket plus a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl SurrogateClassifier {
    pub fn buckets(&self) -> u32 {
        self.weights.len() as u32
    }

    pub fn logit(&self, ctx: FeatureContext, token: u32) -> f64 {
        self.weights[feature_bucket(ctx, token, self.buckets())] + self.bias
    }

    /// h(1 | c, v).
    pub fn prob_one(&self, ctx: FeatureContext, token: u32) -> f64 {
        sigmoid(self.logit(ctx, token))
    }

    pub fn predict(&self, ctx: FeatureContext, token: u32) -> u8 {
        u8::from(self.logit(ctx, token) >= 0.0)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// s(c, v) = log(h(1|c,v) / h(0|c,v)).
pub fn surrogate_score(clf: &SurrogateClassifier, ctx: FeatureContext, token: u32) -> f64 {
    clf.logit(ctx, token)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub examples: usize,
    /// Mean logistic loss over the last epoch.
    pub final_loss: f64,
}

/// SGD on the L2-regularized logistic loss, shuffling with a seed derived
/// from `acfg.seed`.
pub fn train_surrogate(
    triplets: &[TrainingTriplet],
    acfg: &AttackConfig,
) -> Result<(SurrogateClassifier, TrainingSummary)> {
    if triplets.is_empty() {
        return Err(Error::InvalidInput("no training triplets".into()));
    }
    let buckets = acfg.feature_buckets;
    let features: Vec<usize> = triplets
        .iter()
        .map(|t| feature_bucket(t.context, t.token, buckets))
        .collect();
    let mut clf = SurrogateClassifier {
        weights: vec![0.0; buckets as usize],
        bias: 0.0,
    };
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(derive_subseed("attack/train", acfg.seed, 0));
    let lr = acfg.learning_rate;
    let mut final_loss = f64::NAN;
    for epoch in 1..=acfg.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &i in &order {
            let b = features[i];
            let y = f64::from(triplets[i].label);
            let z = clf.weights[b] + clf.bias;
            loss += softplus(z) - y * z;
            let g = sigmoid(z) - y;
            clf.weights[b] -= lr * (g + acfg.l2 * clf.weights[b]);
            clf.bias -= lr * g;
        }
        final_loss = loss / triplets.len() as f64;
        if !final_loss.is_finite() || final_loss > 10.0 * std::f64::consts::LN_2 {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: final_loss,
            });
        }
    }
    Ok((
        clf,
        TrainingSummary {
            epochs: acfg.epochs,
            examples: triplets.len(),
            final_loss,
        },
    ))
}

/// Balanced accuracy with its standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub balanced: f64,
    pub true_positive_rate: f64,
    pub true_negative_rate: f64,
    pub positives: usize,
    pub negatives: usize,
    /// Standard error of a label-independent predictor's balanced accuracy.
    pub sigma_null: f64,
    /// (balanced - 0.5) / sigma_null.
    pub z_score: f64,
    /// Normal-approximation 95% interval from the observed rates.
    pub ci95: [f64; 2],
}

pub fn heldout_accuracy(
    clf: &SurrogateClassifier,
    triplets: &[TrainingTriplet],
) -> Result<Accuracy> {
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for t in triplets {
        let pred = clf.predict(t.context, t.token);
        if t.label == 1 {
            pos += 1;
            tp += usize::from(pred == 1);
        } else {
            neg += 1;
            tn += usize::from(pred == 0);
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidInput(
            "held-out set needs both label classes".into(),
        ));
    }
    let tpr = tp as f64 / pos as f64;
    let tnr = tn as f64 / neg as f64;
    let balanced = 0.5 * (tpr + tnr);
    let (p, n) = (pos as f64, neg as f64);
    let sigma_null = ((1.0 / p + 1.0 / n) / 16.0).sqrt();
    let se = ((tpr * (1.0 - tpr) / p + tnr * (1.0 - tnr) / n) / 4.0).sqrt();
    Ok(Accuracy {
        balanced,
        true_positive_rate: tpr,
        true_negative_rate: tnr,
        positives: pos,
        negatives: neg,
        sigma_null,
        z_score: (balanced - 0.5) / sigma_null,
        ci95: [balanced - 1.96 * se, balanced + 1.96 * se],
    })
}

/// Samples a length-L document from the base model reweighted by
/// exp(lambda (2y* - 1) s(c, v)), with y* the target window's public bits.
pub fn forge_document<S: TokenSource + ?Sized>(
    clf: &SurrogateClassifier,
    target_window: u64,
    lambda: f64,
    model: &S,
    cfg: &WatermarkConfig,
    rng_seed: u64,
) -> Result<WatermarkedDocument> {
    cfg.validate()?;
    if model.vocab_size() != cfg.vocab_size {
        return Err(Error::Config("model and config vocabularies differ".into()));
    }
    let targets = attacker_labels(target_window, cfg);
    let (_, mut rng) = request_rngs(rng_seed);
    let mut tokens = Vec::with_capacity(cfg.min_length);
    let mut prefix = PrefixHasher::new(cfg.vocab_size);
    let mut weights = vec![0.0; cfg.vocab_size as usize];
    for (idx, &y) in targets.iter().enumerate() {
        let dist = model.next_distribution_with_digest(&tokens, &prefix.digest())?;
        let ctx = FeatureContext {
            stage: cfg.stage_of(idx + 1),
            prev: tokens.last().copied(),
        };
        let sign = if y == 1 { 1.0 } else { -1.0 };
        let scores: Vec<f64> = (0..cfg.vocab_size)
            .map(|v| lambda * sign * surrogate_score(clf, ctx, v))
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (w, (&p, s)) in weights.iter_mut().zip(dist.probs().iter().zip(&scores)) {
            *w = p * (s - max).exp();
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let token = sample_index(&weights, &mut rng);
        tokens.push(token);
        prefix.push(token)?;
    }
    Ok(WatermarkedDocument::new(tokens))
}

/// Whether the mode's decoder accepts `doc` as generated in `window`.
///
/// The baseline decoder reads the time off the payload, so it needs the
/// recovered R to equal the window's encoding; the TimeMark decoder only
/// needs the window key to verify.
pub fn decoder_accepts(
    mode: AttackMode,
    doc: &WatermarkedDocument,
    window: u64,
    key: &TimeKey,
    cfg: &WatermarkConfig,
    context: SeedContext,
) -> Result<bool> {
    let prepared = PreparedDocument::new(doc, cfg, context)?;
    let report = verify_window(&prepared, window, key);
    let passed = report.decision == Decision::Pass;
    Ok(match mode {
        AttackMode::FixedPayloadBaseline => {
            passed && report.recovered_r == Some(window_info(window))
        }
        AttackMode::TimeMark => passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub mode: AttackMode,
    pub corpus_docs: usize,
    pub train_docs: usize,
    pub heldout_docs: usize,
    pub label_agreement: f64,
    pub training: TrainingSummary,
    pub heldout: Accuracy,
    pub forged_docs: usize,
    pub forged_passes: usize,
    pub forged_pass_rate: f64,
    pub forged_pass_ci95: [f64; 2],
    /// Analytical false-acceptance probability of one wrong-payload check.
    pub false_acceptance_floor: f64,
}

/// Collect, label, train on a document-level split, forge, decode.
pub fn evaluate_attack(mode: AttackMode, acfg: &AttackConfig) -> Result<AttackResult> {
    acfg.validate()?;
    let corpus = collect_corpus(mode, acfg.corpus_docs, acfg)?;
    let cfg = corpus.cfg;

    let mut docs: Vec<usize> = (0..corpus.entries.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(derive_subseed("attack/split", acfg.seed, 0));
    docs.shuffle(&mut rng);
    let n_held =
        ((docs.len() as f64 * acfg.heldout_fraction).ceil() as usize).clamp(1, docs.len() - 1);
    let (held, train) = docs.split_at(n_held);
    let subset = |idx: &[usize]| AttackCorpus {
        cfg,
        entries: idx.iter().map(|&i| corpus.entries[i].clone()).collect(),
    };
    let (clf, training) = train_surrogate(&build_triplets(&subset(train)), acfg)?;
    let heldout = heldout_accuracy(&clf, &build_triplets(&subset(held)))?;

    let model = acfg.model()?;
    let key = acfg.provider_key();
    let tag = format!("attack/forge/{}", mode.tag());
    let passes = (0..acfg.forged_docs as u64)
        .into_par_iter()
        .map(|i| {
            let doc = forge_document(
                &clf,
                acfg.target_window,
                acfg.lambda,
                &model,
                &cfg,
                derive_subseed(&tag, acfg.seed, i),
            )?;
            decoder_accepts(mode, &doc, acfg.target_window, &key, &cfg, acfg.context)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&p| p)
        .count();
    let (lo, hi) = wilson_interval(passes, acfg.forged_docs);
    Ok(AttackResult {
        mode,
        corpus_docs: corpus.entries.len(),
        train_docs: train.len(),
        heldout_docs: held.len(),
        label_agreement: label_agreement(&corpus),
        training,
        heldout,
        forged_docs: acfg.forged_docs,
        forged_passes: passes,
        forged_pass_rate: passes as f64 / acfg.forged_docs as f64,
        forged_pass_ci95: [lo, hi],
        false_acceptance_floor: false_acceptance_prob(cfg.stage1_len() as u64, cfg.phi)?.value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackComparison {
    pub config: AttackConfig,
    pub baseline: AttackResult,
    pub timemark: AttackResult,
}

pub fn compare_attack(acfg: &AttackConfig) -> Result<AttackComparison> {
    Ok(AttackComparison {
        config: *acfg,
        baseline: evaluate_attack(AttackMode::FixedPayloadBaseline, acfg)?,
        timemark: evaluate_attack(AttackMode::TimeMark, acfg)?,
    })
}

impl AttackResult {
    fn row(&self) -> String {
        format!(
            "{:<24} {:>8.4} [{:.4}, {:.4}] {:>7.2} {:>8.4} {:>5}/{:<5}\n",
            format!("{:?}", self.mode),
            self.heldout.balanced,
            self.heldout.ci95[0],
            self.heldout.ci95[1],
            self.heldout.z_score,
            self.label_agreement,
            self.forged_passes,
            self.forged_docs
        )
    }
}

impl AttackComparison {
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<24} {:>8} {:<18} {:>7} {:>8} {:>11}\n",
            "mode", "bal.acc", "95% CI", "z", "labels", "forged pass"
        );
        out.push_str(&self.baseline.row());
        out.push_str(&self.timemark.row());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> AttackConfig {
        AttackConfig {
            corpus_docs: 4,
            forged_docs: 2,
            ..AttackConfig::default()
        }
    }

    #[test]
    fn corpus_shapes_and_payloads() {
        let acfg = small();
        let base = collect_corpus(AttackMode::FixedPayloadBaseline, 3, &acfg).unwrap();
        assert_eq!(base.entries.len(), 3);
        assert!(base.entries.iter().all(|e| e.tokens.len() == 945));
        assert_eq!(base.entries[0].true_payload, base.entries[1].true_payload);
        assert_eq!(
            base.entries[0].true_payload,
            window_payload(acfg.target_window)
        );
        assert_eq!(build_triplets(&base).len(), 3 * 945);
        assert_eq!(label_agreement(&base), 1.0);
        assert!(collect_corpus(AttackMode::TimeMark, 0, &acfg).is_err());
    }

    #[test]
    fn score_is_log_odds() {
        let ctx = FeatureContext {
            stage: Stage::Recovery,
            prev: Some(3),
        };
        let mut clf = SurrogateClassifier {
            weights: vec![0.0; 16],
            bias: 0.0,
        };
        assert_eq!(surrogate_score(&clf, ctx, 5), 0.0);
        assert_eq!(clf.prob_one(ctx, 5), 0.5);
        clf.bias = 1.0;
        let h = clf.prob_one(ctx, 5);
        assert!((h - 1f64.exp() / (1.0 + 1f64.exp())).abs() < 1e-15);
        assert!(((h / (1.0 - h)).ln() - surrogate_score(&clf, ctx, 5)).abs() < 1e-12);
        clf.bias = -0.3;
        assert_eq!(clf.predict(ctx, 5), 0);
    }

    #[test]
    fn zero_lambda_is_plain_sampling() {
        let acfg = small();
        let cfg = acfg.wm_config();
        let model = acfg.model().unwrap();
        let clf = SurrogateClassifier {
            weights: (0..64).map(f64::from).collect(),
            bias: 0.0,
        };
        let forged = forge_document(&clf, 7, 0.0, &model, &cfg, 5).unwrap();
        let plain = crate::encoder::generate_unwatermarked(&cfg, &model, 5).unwrap();
        assert_eq!(forged, plain);
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::default().validate().is_ok());
        assert!(AttackConfig {
            lambda: 0.0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(AttackConfig {
            corpus_docs: 1,
            ..small()
        }
        .validate()
        .is_err());
        assert!(AttackConfig {
            vocab_size: 63,
            ..small()
        }
        .validate()
        .is_err());
    }
}
