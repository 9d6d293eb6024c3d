//! Closed-form throughput expressions and the model dispatcher.
//!
//! Three exact routes cover the possible harvest laws:
//!
//! * both exclusive-harvest probabilities positive: the chain visits every
//!   state uniformly and the throughput has a closed form;
//! * lockstep harvests only (`p10 = p01 = 0`): the batteries walk a diagonal
//!   cycle and a renewal argument gives the throughput;
//! * anything else: solve the chain numerically and account per state.
//!
//! Two asymptotic approximations of the lockstep total (small and large
//! normalized SNR) back the closed-form threshold rules in [`crate::optimize`].

use std::fmt;

use crate::error::{Error, Result};
use crate::markov;
use crate::model::NetworkConfig;

/// Which route produced a throughput figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Uniform-state closed form (both exclusive-harvest probabilities positive).
    ClosedForm,
    /// Renewal argument for lockstep harvests.
    Renewal,
    /// Per-state accounting over a numerically solved chain.
    StationaryAccounting,
    /// Slot-level Monte Carlo.
    Simulated,
    /// Small normalized-SNR approximation of the lockstep total.
    SmallDeltaApprox,
    /// Large normalized-SNR approximation of the lockstep total.
    LargeDeltaApprox,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Source::ClosedForm => "closed-form",
            Source::Renewal => "renewal",
            Source::StationaryAccounting => "stationary-accounting",
            Source::Simulated => "simulated",
            Source::SmallDeltaApprox => "approx-small-delta",
            Source::LargeDeltaApprox => "approx-large-delta",
        };
        f.write_str(tag)
    }
}

/// Long-term average rates of the two nodes, in nats/sec/Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputReport {
    pub r1: f64,
    pub r2: f64,
    /// Aggregate rate, always `r1 + r2`.
    pub total: f64,
    pub source: Source,
}

impl ThroughputReport {
    pub fn new(r1: f64, r2: f64, source: Source) -> Self {
        Self {
            r1,
            r2,
            total: r1 + r2,
            source,
        }
    }
}

/// Per-node throughput when both exclusive-harvest probabilities are positive.
///
/// The chain then spreads uniformly over the grid and
/// `r1 = ln(1 + gamma1 d') * [(gamma2 - 1)(p10 + p11) + p10] / (gamma1 gamma2)`,
/// symmetrically for node 2. Outside that regime the uniform distribution is
/// wrong and the caller must use [`renewal_throughput`] or
/// [`markov::chain_throughput`] instead.
pub fn closed_form_throughput(config: &NetworkConfig) -> Result<ThroughputReport> {
    let probs = config.probs();
    if !(probs.p01() > 0.0 && probs.p10() > 0.0) {
        return Err(Error::PreconditionViolated(
            "the uniform-state closed form needs p01 > 0 and p10 > 0",
        ));
    }
    let gamma1 = f64::from(config.gamma1());
    let gamma2 = f64::from(config.gamma2());
    let states = gamma1 * gamma2;
    let r1 =
        config.success_rate1() * ((gamma2 - 1.0) * (probs.p10() + probs.p11()) + probs.p10())
            / states;
    let r2 =
        config.success_rate2() * ((gamma1 - 1.0) * (probs.p01() + probs.p11()) + probs.p01())
            / states;
    Ok(ThroughputReport::new(r1, r2, Source::ClosedForm))
}

/// Aggregate objective for the threshold optimization: the closed-form total.
pub fn aggregate_throughput(config: &NetworkConfig) -> Result<f64> {
    Ok(closed_form_throughput(config)?.total)
}

/// Total throughput under exclusive harvests (`p00 = p11 = 0`, node 1 with
/// probability `p`), as a function of real-valued thresholds:
/// `p ln(1 + g1 d')/g1 + (1-p) ln(1 + g2 d')/g2`.
///
/// Thresholds are continuous here because the threshold-monotonicity
/// analysis differentiates this expression; integer inputs reproduce the
/// closed-form total exactly.
pub fn negative_corr_total(gamma1: f64, gamma2: f64, p: f64, delta_prime: f64) -> f64 {
    p * (1.0 + gamma1 * delta_prime).ln() / gamma1
        + (1.0 - p) * (1.0 + gamma2 * delta_prime).ln() / gamma2
}

/// Per-node throughput under lockstep harvests (`p10 = p01 = 0`, joint
/// harvest probability `p`).
///
/// Both nodes fire together every `lcm(gamma1, gamma2)` harvest events,
/// colliding and resetting the cycle, so node `n` completes
/// `lcm/gamma_n - 1` clean transmissions per cycle:
/// `r_n = p (lcm/gamma_n - 1)/lcm * ln(1 + gamma_n d')`.
pub fn renewal_throughput(gamma1: u32, gamma2: u32, p: f64, delta_prime: f64) -> ThroughputReport {
    debug_assert!((0.0..=1.0).contains(&p));
    let cycle = lcm(u64::from(gamma1), u64::from(gamma2))
        .expect("lcm of two u32 thresholds fits in u64") as f64;
    let rate = |gamma: u32| {
        let g = f64::from(gamma);
        p * (cycle / g - 1.0) / cycle * (1.0 + g * delta_prime).ln()
    };
    ThroughputReport::new(rate(gamma1), rate(gamma2), Source::Renewal)
}

/// Small normalized-SNR approximation of the lockstep total:
/// `2 d' p - gcd(gamma1, gamma2) (1/gamma1 + 1/gamma2) d' p`.
pub fn positive_small_delta_total(gamma1: u32, gamma2: u32, p: f64, delta_prime: f64) -> f64 {
    let g = gcd(u64::from(gamma1), u64::from(gamma2)) as f64;
    2.0 * delta_prime * p
        - g * (1.0 / f64::from(gamma1) + 1.0 / f64::from(gamma2)) * delta_prime * p
}

/// Large normalized-SNR approximation of the lockstep total:
/// `p [(gamma2 - g) ln(gamma1 d') + (gamma1 - g) ln(gamma2 d')] / (gamma1 gamma2)`
/// with `g = gcd(gamma1, gamma2)`.
///
/// Guarded to `gamma_n * d' > 1` so both logarithms are positive.
pub fn positive_large_delta_total(
    gamma1: u32,
    gamma2: u32,
    p: f64,
    delta_prime: f64,
) -> Result<f64> {
    let x1 = f64::from(gamma1) * delta_prime;
    let x2 = f64::from(gamma2) * delta_prime;
    if x1 <= 1.0 || x2 <= 1.0 {
        return Err(Error::ApproximationDomain(format!(
            "need gamma_n * delta' > 1 for both nodes, got {x1} and {x2}"
        )));
    }
    let g = gcd(u64::from(gamma1), u64::from(gamma2)) as f64;
    let g1 = f64::from(gamma1);
    let g2 = f64::from(gamma2);
    Ok(p * ((g2 - g) * x1.ln() + (g1 - g) * x2.ln()) / (g1 * g2))
}

/// Greatest common divisor (Euclid).
pub fn gcd(a: u64, b: u64) -> u64 {
    debug_assert!(a >= 1 && b >= 1);
    let (mut a, mut b) = (a, b);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Least common multiple, overflow-checked: `a * b / gcd(a, b)` exactly.
pub fn lcm(a: u64, b: u64) -> Result<u64> {
    (a / gcd(a, b))
        .checked_mul(b)
        .ok_or(Error::Overflow { a, b })
}

/// Computes the throughput by the exact route matching the harvest law:
/// closed form when both exclusive probabilities are positive, renewal when
/// neither is, chain accounting otherwise.
pub fn throughput(config: &NetworkConfig) -> Result<ThroughputReport> {
    let probs = config.probs();
    if probs.p01() > 0.0 && probs.p10() > 0.0 {
        closed_form_throughput(config)
    } else if probs.p01() == 0.0 && probs.p10() == 0.0 {
        Ok(renewal_throughput(
            config.gamma1(),
            config.gamma2(),
            probs.p11(),
            config.delta_prime(),
        ))
    } else {
        markov::chain_throughput(config)
    }
}
