//! Desk-scale end-to-end experiment.
//!
//! Trial k runs in window w_k = radius + k. The provider reads the current
//! key from the vault, generates one watermarked and one plain document,
//! and the vault moves on. Once the last trial's window is `radius` windows
//! in the past, the authority reads every candidate key and identifies each
//! document over w_k - radius ..= w_k + radius. Trials differ only in their
//! derived seeds.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{
    identify_with_keys, CandidateWindowSet, Decision, IdentificationResult, Step1Status, Verdict,
};
use crate::encoder::{
    derive_subseed, generate, generate_unwatermarked, GenerationRequest, WatermarkedDocument,
};
use crate::error::{Error, Result};
use crate::keychain::{FixedClock, KeyVault, Role, TimeKey};
use crate::source::SyntheticModel;
use crate::wm::WatermarkConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub candidate_window_radius: u64,
    pub wm: WatermarkConfig,
    /// gamma of the synthetic model.
    pub concentration: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            candidate_window_radius: 2,
            wm: WatermarkConfig::default(),
            concentration: 0.0,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        self.wm.validate()?;
        self.model().map(|_| ())
    }

    pub fn model(&self) -> Result<SyntheticModel> {
        SyntheticModel::new(
            derive_subseed("experiment/model", self.seed, 0),
            self.wm.vocab_size,
            self.concentration,
        )
    }

    pub fn trial_window(&self, trial: usize) -> u64 {
        self.candidate_window_radius + trial as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRate {
    pub count: usize,
    pub rate: f64,
}

impl CountRate {
    fn new(count: usize, total: usize) -> Self {
        Self {
            count,
            rate: count as f64 / total as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub window: u64,
    pub step1_status: Step1Status,
    pub score: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocOutcome {
    pub verdict: Verdict,
    pub windows: Vec<WindowScore>,
}

impl DocOutcome {
    fn from_result(res: IdentificationResult) -> Self {
        Self {
            verdict: res.verdict,
            windows: res
                .reports
                .into_iter()
                .map(|r| WindowScore {
                    window: r.window,
                    step1_status: r.step1_status,
                    score: r.score,
                    decision: r.decision,
                })
                .collect(),
        }
    }

    pub fn at(&self, window: u64) -> Option<&WindowScore> {
        self.windows.iter().find(|w| w.window == window)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub window: u64,
    pub watermarked: DocOutcome,
    pub unwatermarked: DocOutcome,
}

impl TrialRow {
    pub fn watermarked_score(&self) -> f64 {
        self.watermarked
            .at(self.window)
            .expect("true window is a candidate")
            .score
    }

    pub fn unwatermarked_score(&self) -> f64 {
        self.unwatermarked
            .at(self.window)
            .expect("true window is a candidate")
            .score
    }

    /// Passing verifications of the watermarked document under keys other
    /// than its own.
    pub fn wrong_key_passes(&self) -> usize {
        self.watermarked
            .windows
            .iter()
            .filter(|w| w.window != self.window && w.decision == Decision::Pass)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessProbe {
    pub attempted: usize,
    pub denied: usize,
    /// Denials that left a granted=false audit record for that window.
    pub audited_denials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub correct_identifications: CountRate,
    pub false_identifications_on_unwatermarked: CountRate,
    pub mean_score_watermarked: f64,
    pub mean_score_unwatermarked: f64,
    pub wrong_key_checks: usize,
    pub wrong_key_passes: usize,
    pub mean_score_wrong_keys: f64,
    pub provider_past_access: AccessProbe,
    pub audit_records: usize,
    pub rows: Vec<TrialRow>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n.max(1) as f64
}

impl ExperimentReport {
    pub fn from_rows(
        config: ExperimentConfig,
        rows: Vec<TrialRow>,
        probe: AccessProbe,
        audit_records: usize,
    ) -> Self {
        let trials = rows.len();
        let correct = rows
            .iter()
            .filter(|r| r.watermarked.verdict == Verdict::Identified { window: r.window })
            .count();
        let false_ids = rows
            .iter()
            .filter(|r| r.unwatermarked.verdict != Verdict::NoWatermark)
            .count();
        let wrong: Vec<&WindowScore> = rows
            .iter()
            .flat_map(|r| {
                r.watermarked
                    .windows
                    .iter()
                    .filter(move |w| w.window != r.window)
            })
            .collect();
        Self {
            config,
            correct_identifications: CountRate::new(correct, trials),
            false_identifications_on_unwatermarked: CountRate::new(false_ids, trials),
            mean_score_watermarked: mean(rows.iter().map(TrialRow::watermarked_score)),
            mean_score_unwatermarked: mean(rows.iter().map(TrialRow::unwatermarked_score)),
            wrong_key_checks: wrong.len(),
            wrong_key_passes: wrong
                .iter()
                .filter(|w| w.decision == Decision::Pass)
                .count(),
            mean_score_wrong_keys: mean(wrong.iter().map(|w| w.score)),
            provider_past_access: probe,
            audit_records,
            rows,
        }
    }

    pub fn table(&self) -> String {
        let c = &self.correct_identifications;
        let f = &self.false_identifications_on_unwatermarked;
        format!(
            "trials                         {}\n\
             correct identification         {} ({:.1}%)\n\
             identified unwatermarked       {} ({:.1}%)\n\
             mean score, watermarked        {:.4}\n\
             mean score, unwatermarked      {:.4}\n\
             wrong-key passes               {} / {}\n\
             mean score, wrong keys         {:.4}\n\
             provider past reads denied     {} / {}\n",
            self.rows.len(),
            c.count,
            100.0 * c.rate,
            f.count,
            100.0 * f.rate,
            self.mean_score_watermarked,
            self.mean_score_unwatermarked,
            self.wrong_key_passes,
            self.wrong_key_checks,
            self.mean_score_wrong_keys,
            self.provider_past_access.denied,
            self.provider_past_access.attempted,
        )
    }
}

/// Runs the experiment on `jobs` worker threads (all cores when `None`).
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport> {
    cfg.validate()?;
    match jobs {
        Some(0) => Err(Error::Config("jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run_inner(cfg)),
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let model = cfg.model()?;
    let root = TimeKey::from_seed(derive_subseed("experiment/root", cfg.seed, 0));
    let mut vault = KeyVault::new(root, cfg.wm.granularity_seconds, Arc::new(FixedClock(0)))?;
    let radius = cfg.candidate_window_radius;

    let mut provider_keys = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let window = cfg.trial_window(trial);
        while vault.current_index() < window {
            vault.advance();
        }
        provider_keys.push(vault.read_key(Role::Provider, window)?);
    }

    let docs = provider_keys
        .par_iter()
        .enumerate()
        .map(|(trial, key)| {
            let req = GenerationRequest {
                window: crate::keychain::TimeWindow::new(
                    cfg.trial_window(trial),
                    cfg.wm.granularity_seconds,
                )?,
                cfg: cfg.wm,
                model: &model,
                rng_seed: derive_subseed("experiment/watermarked", cfg.seed, trial as u64),
            };
            let marked = generate(&req, key)?;
            let plain = generate_unwatermarked(
                &cfg.wm,
                &model,
                derive_subseed("experiment/unwatermarked", cfg.seed, trial as u64),
            )?;
            Ok((marked, plain))
        })
        .collect::<Result<Vec<(WatermarkedDocument, WatermarkedDocument)>>>()?;

    let last = cfg.trial_window(cfg.trials - 1);
    while vault.current_index() < last + radius {
        vault.advance();
    }

    let mut probe = AccessProbe {
        attempted: 0,
        denied: 0,
        audited_denials: 0,
    };
    for trial in 0..cfg.trials {
        let window = cfg.trial_window(trial);
        probe.attempted += 1;
        if let Err(Error::ProviderPastAccessDenied { .. }) = vault.read_key(Role::Provider, window)
        {
            probe.denied += 1;
            let rec = vault.audit_log().last().expect("read was audited");
            if rec.requester_role == Some(Role::Provider)
                && rec.requested_index == window
                && !rec.granted
            {
                probe.audited_denials += 1;
            }
        }
    }

    let mut candidate_keys = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let set = CandidateWindowSet::centered(cfg.trial_window(trial), radius)?;
        let keys = set
            .windows()
            .iter()
            .map(|&w| vault.read_key(Role::Authority, w).map(|k| (w, k)))
            .collect::<Result<Vec<_>>>()?;
        candidate_keys.push(keys);
    }

    let rows = docs
        .par_iter()
        .zip(candidate_keys.par_iter())
        .enumerate()
        .map(|(trial, ((marked, plain), keys))| {
            Ok(TrialRow {
                trial,
                window: cfg.trial_window(trial),
                watermarked: DocOutcome::from_result(identify_with_keys(marked, keys, &cfg.wm)?),
                unwatermarked: DocOutcome::from_result(identify_with_keys(plain, keys, &cfg.wm)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport::from_rows(
        *cfg,
        rows,
        probe,
        vault.audit_log().len(),
    ))
}
