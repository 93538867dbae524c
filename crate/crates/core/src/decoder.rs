//! Generation-window recovery.
//!
//! For each candidate window key, Step 1 rebuilds the Stage II greenlists,
//! majority-votes each payload bit over its positions and BCH-decodes the
//! result to a candidate R. Step 2 rebuilds the Stage I greenlists with that
//! R and scores how many Stage I tokens sit in the half their payload bit
//! asks for. A window passes when Step 1 recovers R and the score reaches
//! phi; exactly one passing window identifies the generation time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bch::{BchCode, Codeword, DecodeStatus, InfoWord};
use crate::encoder::WatermarkedDocument;
use crate::error::{Error, Result};
use crate::keychain::{KeyVault, Role, TimeKey};
use crate::wm::{
    allocate, check_token, derive_seed, greenlist, ContextTracker, PrefixDigest, SeedContext,
    WatermarkConfig,
};

/// A document checked against a configuration, with the per-position
/// context digests precomputed (they do not depend on the key).
pub struct PreparedDocument<'a> {
    tokens: &'a [u32],
    digests: Vec<PrefixDigest>,
    cfg: &'a WatermarkConfig,
}

impl<'a> PreparedDocument<'a> {
    pub fn new(
        doc: &'a WatermarkedDocument,
        cfg: &'a WatermarkConfig,
        context: SeedContext,
    ) -> Result<Self> {
        cfg.validate()?;
        if doc.len() != cfg.min_length {
            return Err(Error::Shape {
                what: "document",
                expected: cfg.min_length,
                actual: doc.len(),
            });
        }
        let mut ctx = ContextTracker::new(context, cfg.vocab_size);
        let mut digests = Vec::with_capacity(doc.len());
        for &t in &doc.tokens {
            check_token(t, cfg.vocab_size)?;
            digests.push(ctx.digest());
            ctx.push(t)?;
        }
        Ok(Self {
            tokens: &doc.tokens,
            digests,
            cfg,
        })
    }

    /// Whether the token at 1-based `position` is in its greenlist under
    /// `key` (and `r` for Stage I seeds).
    fn in_green(&self, key: &TimeKey, r: Option<InfoWord>, position: usize) -> bool {
        let seed = derive_seed(key, r, &self.digests[position - 1]);
        let mask = greenlist(&seed, self.cfg.vocab_size).expect("validated vocab size");
        mask.contains(self.tokens[position - 1] as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step1Status {
    Recovered,
    EccFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitEvidence {
    /// 1-based payload bit index.
    pub bit: usize,
    pub positions: Vec<usize>,
    pub green_hits: usize,
}

impl BitEvidence {
    /// Strict majority; a tie votes 0.
    pub fn vote(&self) -> u8 {
        u8::from(2 * self.green_hits > self.positions.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step1Outcome {
    pub status: Step1Status,
    /// Majority-vote payload estimate before error correction.
    pub raw_payload: Codeword,
    pub recovered: Option<InfoWord>,
    pub errors_corrected: usize,
    pub evidence: Vec<BitEvidence>,
}

pub fn decode_step1(
    doc: &WatermarkedDocument,
    key: &TimeKey,
    cfg: &WatermarkConfig,
) -> Result<Step1Outcome> {
    let prepared = PreparedDocument::new(doc, cfg, SeedContext::FullPrefix)?;
    Ok(step1(&prepared, key))
}

pub fn step1(doc: &PreparedDocument<'_>, key: &TimeKey) -> Step1Outcome {
    let cfg = doc.cfg;
    let mut evidence: Vec<BitEvidence> = (1..=cfg.payload_bits)
        .map(|bit| BitEvidence {
            bit,
            positions: Vec::with_capacity(cfg.reps_stage2()),
            green_hits: 0,
        })
        .collect();
    for i in cfg.stage1_len() + 1..=cfg.min_length {
        let j = allocate(i, cfg).expect("position in range") - 1;
        evidence[j].positions.push(i);
        if doc.in_green(key, None, i) {
            evidence[j].green_hits += 1;
        }
    }
    let votes: Vec<u8> = evidence.iter().map(BitEvidence::vote).collect();
    let raw_payload = Codeword::from_bits(&votes).expect("n votes");
    let outcome = BchCode::standard().decode(raw_payload);
    let status = match outcome.status {
        DecodeStatus::Corrected => Step1Status::Recovered,
        DecodeStatus::Uncorrectable => Step1Status::EccFailure,
    };
    Step1Outcome {
        status,
        raw_payload,
        recovered: outcome.info,
        errors_corrected: outcome.errors_corrected,
        evidence,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step2Outcome {
    pub score: f64,
    pub matched: usize,
    pub verify_count: usize,
    pub decision: Decision,
}

/// Scores the Stage I positions against the payload `p_hat` under seeds
/// keyed by (`key`, `r_hat`). `p_hat` should be `encode(r_hat)`.
pub fn verify_step2(
    doc: &WatermarkedDocument,
    key: &TimeKey,
    r_hat: InfoWord,
    p_hat: Codeword,
    cfg: &WatermarkConfig,
) -> Result<Step2Outcome> {
    let prepared = PreparedDocument::new(doc, cfg, SeedContext::FullPrefix)?;
    Ok(step2(&prepared, key, r_hat, p_hat))
}

pub fn step2(
    doc: &PreparedDocument<'_>,
    key: &TimeKey,
    r_hat: InfoWord,
    p_hat: Codeword,
) -> Step2Outcome {
    let cfg = doc.cfg;
    let count = cfg.stage1_len();
    let matched = (1..=count)
        .filter(|&i| {
            let bit = p_hat.bit(allocate(i, cfg).expect("position in range") - 1);
            doc.in_green(key, Some(r_hat), i) == (bit == 1)
        })
        .count();
    let decision = if matched >= cfg.acceptance_threshold() {
        Decision::Pass
    } else {
        Decision::Fail
    };
    Step2Outcome {
        score: matched as f64 / count as f64,
        matched,
        verify_count: count,
        decision,
    }
}

/// What the reported score was computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreBasis {
    /// The BCH-decoded R and its re-encoded codeword.
    Recovered,
    /// Step 1 failed; the score is a diagnostic against the nearest codeword
    /// and cannot pass.
    NearestCodeword,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub window: u64,
    pub step1_status: Step1Status,
    pub recovered_r: Option<InfoWord>,
    pub raw_payload: Codeword,
    pub errors_corrected: usize,
    pub score: f64,
    pub matched: usize,
    pub verify_count: usize,
    pub score_basis: ScoreBasis,
    pub phi: f64,
    pub decision: Decision,
}

pub fn verify_window(doc: &PreparedDocument<'_>, window: u64, key: &TimeKey) -> VerificationReport {
    let code = BchCode::standard();
    let s1 = step1(doc, key);
    let (r, basis) = match s1.recovered {
        Some(r) => (r, ScoreBasis::Recovered),
        None => (
            code.nearest_codeword(s1.raw_payload).0,
            ScoreBasis::NearestCodeword,
        ),
    };
    let s2 = step2(doc, key, r, code.encode(r));
    let decision = if s1.status == Step1Status::Recovered {
        s2.decision
    } else {
        Decision::Fail
    };
    VerificationReport {
        window,
        step1_status: s1.status,
        recovered_r: s1.recovered,
        raw_payload: s1.raw_payload,
        errors_corrected: s1.errors_corrected,
        score: s2.score,
        matched: s2.matched,
        verify_count: s2.verify_count,
        score_basis: basis,
        phi: doc.cfg.phi,
        decision,
    }
}

/// Disputed windows T: non-empty, distinct, kept in the given order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateWindowSet(Vec<u64>);

impl CandidateWindowSet {
    pub fn new(windows: Vec<u64>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::InvalidInput("candidate window set is empty".into()));
        }
        let mut sorted = windows.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(
                "candidate windows must be distinct".into(),
            ));
        }
        Ok(Self(windows))
    }

    /// Inclusive range.
    pub fn range(from: u64, to: u64) -> Result<Self> {
        if from > to {
            return Err(Error::InvalidInput(format!(
                "empty window range {from}..={to}"
            )));
        }
        Self::new((from..=to).collect())
    }

    /// `center - radius ..= center + radius`, clipped at 0.
    pub fn centered(center: u64, radius: u64) -> Result<Self> {
        Self::range(center.saturating_sub(radius), center + radius)
    }

    pub fn windows(&self) -> &[u64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Identified { window: u64 },
    NoWatermark,
    Ambiguous { windows: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub verdict: Verdict,
    pub passing_windows: Vec<VerificationReport>,
    /// Every candidate's report, in candidate order.
    pub reports: Vec<VerificationReport>,
}

impl IdentificationResult {
    fn from_reports(reports: Vec<VerificationReport>) -> Self {
        let passing_windows: Vec<_> = reports
            .iter()
            .filter(|r| r.decision == Decision::Pass)
            .cloned()
            .collect();
        let verdict = match passing_windows.as_slice() {
            [] => Verdict::NoWatermark,
            [one] => Verdict::Identified { window: one.window },
            many => Verdict::Ambiguous {
                windows: many.iter().map(|r| r.window).collect(),
            },
        };
        Self {
            verdict,
            passing_windows,
            reports,
        }
    }

    pub fn report_for(&self, window: u64) -> Option<&VerificationReport> {
        self.reports.iter().find(|r| r.window == window)
    }
}

/// Runs both steps for every candidate window, with keys read from the
/// vault under the authority role.
pub fn identify_time(
    doc: &WatermarkedDocument,
    candidates: &CandidateWindowSet,
    vault: &mut KeyVault,
    cfg: &WatermarkConfig,
) -> Result<IdentificationResult> {
    let keys = candidates
        .windows()
        .iter()
        .map(|&w| vault.read_key(Role::Authority, w).map(|k| (w, k)))
        .collect::<Result<Vec<_>>>()?;
    identify_with_keys(doc, &keys, cfg)
}

/// As [`identify_time`], with the candidate keys already in hand.
pub fn identify_with_keys(
    doc: &WatermarkedDocument,
    keys: &[(u64, TimeKey)],
    cfg: &WatermarkConfig,
) -> Result<IdentificationResult> {
    let prepared = PreparedDocument::new(doc, cfg, SeedContext::FullPrefix)?;
    let reports = keys
        .par_iter()
        .map(|(w, k)| verify_window(&prepared, *w, k))
        .collect();
    Ok(IdentificationResult::from_reports(reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_document, GenerationRequest};
    use crate::keychain::{derive_key, TimeWindow};
    use crate::source::SyntheticModel;

    fn cfg() -> WatermarkConfig {
        WatermarkConfig {
            vocab_size: 64,
            ..WatermarkConfig::default()
        }
    }

    #[test]
    fn tie_votes_zero() {
        let ev = BitEvidence {
            bit: 1,
            positions: (0..10).collect(),
            green_hits: 5,
        };
        assert_eq!(ev.vote(), 0);
        assert_eq!(
            BitEvidence {
                green_hits: 6,
                ..ev.clone()
            }
            .vote(),
            1
        );
    }

    #[test]
    fn roundtrip_recovers_r_and_passes() {
        let model = SyntheticModel::new(3, 64, 0.0).unwrap();
        let key = TimeKey::from_seed(11);
        let req = GenerationRequest {
            window: TimeWindow::new(0, 60).unwrap(),
            cfg: cfg(),
            model: &model,
            rng_seed: 4,
        };
        let (doc, trace) = encode_document(&req, &key).unwrap();
        let s1 = decode_step1(&doc, &key, &cfg()).unwrap();
        assert_eq!(s1.status, Step1Status::Recovered);
        assert_eq!(s1.recovered, Some(trace.r));
        assert!(s1.evidence.iter().all(|e| e.positions.len() == 10));
        let s2 = verify_step2(&doc, &key, trace.r, trace.p, &cfg()).unwrap();
        assert_eq!(s2.decision, Decision::Pass);
        assert!(s2.score > 0.8);
    }

    #[test]
    fn short_document_is_a_shape_error() {
        let doc = WatermarkedDocument::new(vec![0; 944]);
        assert!(matches!(
            decode_step1(&doc, &TimeKey::from_seed(0), &cfg()),
            Err(Error::Shape {
                what: "document",
                expected: 945,
                actual: 944
            })
        ));
        let bad = WatermarkedDocument::new(vec![64; 945]);
        assert!(matches!(
            decode_step1(&bad, &TimeKey::from_seed(0), &cfg()),
            Err(Error::TokenOutOfRange { .. })
        ));
    }

    #[test]
    fn candidate_sets() {
        assert!(CandidateWindowSet::new(vec![]).is_err());
        assert!(CandidateWindowSet::new(vec![1, 2, 1]).is_err());
        assert_eq!(
            CandidateWindowSet::centered(5, 2).unwrap().windows(),
            &[3, 4, 5, 6, 7]
        );
        assert_eq!(
            CandidateWindowSet::centered(1, 2).unwrap().windows(),
            &[0, 1, 2, 3]
        );
    }

    #[test]
    fn verdict_shapes() {
        let root = TimeKey::from_seed(1);
        let model = SyntheticModel::new(3, 64, 0.0).unwrap();
        let req = GenerationRequest {
            window: TimeWindow::new(2, 60).unwrap(),
            cfg: cfg(),
            model: &model,
            rng_seed: 8,
        };
        let (doc, _) = encode_document(&req, &derive_key(&root, 2)).unwrap();
        let keys: Vec<_> = (0..5).map(|w| (w, derive_key(&root, w))).collect();
        let res = identify_with_keys(&doc, &keys, &cfg()).unwrap();
        assert_eq!(res.verdict, Verdict::Identified { window: 2 });
        assert_eq!(res.reports.len(), 5);

        // the same key twice under two labels surfaces as ambiguous
        let dup = vec![(2, derive_key(&root, 2)), (9, derive_key(&root, 2))];
        let res = identify_with_keys(&doc, &dup, &cfg()).unwrap();
        assert_eq!(
            res.verdict,
            Verdict::Ambiguous {
                windows: vec![2, 9]
            }
        );

        let json = serde_json::to_value(&res).unwrap();
        assert_eq!(json["verdict"]["kind"], "ambiguous");
    }
}
