//! Closed-form error analysis under the independent-token approximation.
//!
//! Every tail is carried as a natural log so that probabilities far below
//! the smallest normal double (1e-44 and beyond) stay exact to a few ulps.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::bch::{CODE_LENGTH, CORRECTABLE};
use crate::error::{Error, Result};
use crate::wm::{acceptance_threshold, WatermarkConfig};

/// A probability with its natural log kept alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prob {
    pub value: f64,
    pub log_value: f64,
}

impl Prob {
    pub fn from_log(log_value: f64) -> Self {
        Self {
            value: log_value.exp(),
            log_value,
        }
    }

    pub fn from_value(value: f64) -> Self {
        Self {
            value,
            log_value: value.ln(),
        }
    }

    /// log10 of the probability, handy for reporting tiny tails.
    pub fn log10(&self) -> f64 {
        self.log_value / std::f64::consts::LN_10
    }
}

/// ln(1 - e^x) for x <= 0.
fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `x * ln_y` with the convention 0 * ln 0 = 0.
fn xlny(x: u64, ln_y: f64) -> f64 {
    if x == 0 {
        0.0
    } else {
        x as f64 * ln_y
    }
}

/// ln Pr(X = k) for X ~ Binomial(n, p).
pub fn ln_binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    ln_binomial(n, k) + xlny(k, p.ln()) + xlny(n - k, (-p).ln_1p())
}

/// ln Pr(X >= k) for X ~ Binomial(n, p).
pub fn ln_binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k > n {
        return f64::NEG_INFINITY;
    }
    log_sum_exp((k..=n).map(|i| ln_binomial_pmf(n, i, p)))
}

/// ln Pr(X <= k) for X ~ Binomial(n, p).
pub fn ln_binomial_lower_tail(n: u64, k: u64, p: f64) -> f64 {
    if k >= n {
        return 0.0;
    }
    log_sum_exp((0..=k).map(|i| ln_binomial_pmf(n, i, p)))
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} = {p} is not in [0, 1]"
        )))
    }
}

/// Probability that a biased token lands in its target half:
/// g e^delta / (g e^delta + 1 - g).
pub fn token_match_prob(delta: f64, green_mass: f64) -> Result<f64> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "delta {delta} must be finite and >= 0"
        )));
    }
    if !(green_mass > 0.0 && green_mass < 1.0) {
        return Err(Error::InvalidInput(format!(
            "green mass {green_mass} must lie in (0, 1)"
        )));
    }
    let boosted = green_mass * delta.exp();
    Ok(boosted / (boosted + 1.0 - green_mass))
}

/// Pr(majority of `reps` Stage II tokens votes correctly), a strict majority
/// being needed.
pub fn bit_correct_prob(p_tok: f64, reps: u64) -> Result<Prob> {
    check_prob("p_tok", p_tok)?;
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be positive".into()));
    }
    Ok(Prob::from_log(ln_binomial_upper_tail(
        reps,
        reps / 2 + 1,
        p_tok,
    )))
}

/// Recovery probability of the payload with per-bit error `q_bit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadRecovery {
    /// Pr(at most t bit errors).
    pub success: Prob,
    /// Pr(more than t bit errors), from the upper tail directly.
    pub failure: Prob,
}

pub fn payload_recovery_prob(q_bit: f64, n: u64, t: u64) -> Result<PayloadRecovery> {
    check_prob("q_bit", q_bit)?;
    if t > n {
        return Err(Error::InvalidInput(format!("t = {t} exceeds n = {n}")));
    }
    let ln_fail = ln_binomial_upper_tail(n, t + 1, q_bit);
    Ok(PayloadRecovery {
        success: Prob::from_log(ln_one_minus_exp(ln_fail)),
        failure: Prob::from_log(ln_fail),
    })
}

fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.5 && phi <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "phi {phi} must lie in (0.5, 1]"
        )))
    }
}

/// Pr(score < phi) for a correct key and payload: at most k - 1 of
/// `verify_count` positions match, where k is the acceptance threshold.
pub fn false_rejection_prob(p_match: f64, verify_count: u64, phi: f64) -> Result<Prob> {
    check_prob("p_match", p_match)?;
    check_phi(phi)?;
    let k = acceptance_threshold(verify_count as usize, phi) as u64;
    if k == 0 {
        return Ok(Prob::from_log(f64::NEG_INFINITY));
    }
    Ok(Prob::from_log(ln_binomial_lower_tail(
        verify_count,
        k - 1,
        p_match,
    )))
}

/// Pr(score >= phi) when every position matches with probability 1/2.
pub fn false_acceptance_prob(verify_count: u64, phi: f64) -> Result<Prob> {
    check_phi(phi)?;
    let k = acceptance_threshold(verify_count as usize, phi) as u64;
    Ok(Prob::from_log(ln_binomial_upper_tail(verify_count, k, 0.5)))
}

/// Wilson score 95% interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisParams {
    pub delta: f64,
    pub green_mass: f64,
    pub reps_stage2: u64,
    pub n: u64,
    pub t: u64,
    pub verify_count: u64,
    pub phi: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            delta: 2.5,
            green_mass: 0.5,
            reps_stage2: 10,
            n: CODE_LENGTH as u64,
            t: CORRECTABLE as u64,
            verify_count: 315,
            phi: 0.65,
        }
    }
}

impl AnalysisParams {
    pub fn from_config(cfg: &WatermarkConfig, green_mass: f64) -> Self {
        Self {
            delta: cfg.delta,
            green_mass,
            reps_stage2: cfg.reps_stage2() as u64,
            n: cfg.payload_bits as u64,
            t: CORRECTABLE as u64,
            verify_count: cfg.stage1_len() as u64,
            phi: cfg.phi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps_stage2 == 0 || self.n == 0 || self.verify_count == 0 {
            return Err(Error::InvalidInput(
                "reps_stage2, n and verify_count must be positive".into(),
            ));
        }
        check_phi(self.phi)?;
        token_match_prob(self.delta, self.green_mass).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbReport {
    pub params: AnalysisParams,
    pub p_tok: Prob,
    pub q_tok: Prob,
    pub p_bit: Prob,
    pub q_bit: Prob,
    pub p_r: Prob,
    /// 1 - p_R.
    pub payload_failure: Prob,
    pub acceptance_threshold: u64,
    pub false_rejection: Prob,
    pub false_acceptance: Prob,
}

/// The full chain: token match, bit vote, payload recovery, and both
/// Step 2 error rates.
pub fn analyze(params: &AnalysisParams) -> Result<ProbReport> {
    params.validate()?;
    let p_tok = token_match_prob(params.delta, params.green_mass)?;
    let p_bit = bit_correct_prob(p_tok, params.reps_stage2)?;
    let q_bit = Prob::from_log(ln_one_minus_exp(p_bit.log_value));
    let recovery = payload_recovery_prob(q_bit.value, params.n, params.t)?;
    Ok(ProbReport {
        params: *params,
        p_tok: Prob::from_value(p_tok),
        q_tok: Prob::from_value(1.0 - p_tok),
        p_bit,
        q_bit,
        p_r: recovery.success,
        payload_failure: recovery.failure,
        acceptance_threshold: acceptance_threshold(params.verify_count as usize, params.phi) as u64,
        false_rejection: false_rejection_prob(p_tok, params.verify_count, params.phi)?,
        false_acceptance: false_acceptance_prob(params.verify_count, params.phi)?,
    })
}

impl ProbReport {
    /// Plain-text table, one quantity per line.
    pub fn table(&self) -> String {
        let p = &self.params;
        let mut out = format!(
            "delta={} g={} r2={} n={} t={} verify={} phi={}\n",
            p.delta, p.green_mass, p.reps_stage2, p.n, p.t, p.verify_count, p.phi
        );
        let rows = [
            ("p_tok", self.p_tok),
            ("p_bit", self.p_bit),
            ("q_bit", self.q_bit),
            ("p_R", self.p_r),
            ("1 - p_R", self.payload_failure),
            ("false rejection", self.false_rejection),
            ("false acceptance", self.false_acceptance),
        ];
        for (name, prob) in rows {
            out.push_str(&format!(
                "{name:<18} {:<14.7e} log10 = {:.4}\n",
                prob.value,
                prob.log10()
            ));
        }
        out.push_str(&format!(
            "acceptance needs   >= {} matches\n",
            self.acceptance_threshold
        ));
        out
    }
}
