//! Slot-level Monte Carlo simulation of the exact dynamics.
//!
//! The simulator is the independent check on every analytic figure: it walks
//! [`crate::model::step`] for a fixed horizon and reports the time-average
//! rates together with batch-means standard errors.
//!
//! Randomness comes from ChaCha8 seeded with the run's 64-bit seed, so runs
//! are reproducible bit for bit on any platform. Each run owns the whole
//! stream of its seed; independent runs (sweeps, repeated trials) must use
//! distinct seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analytic::{Source, ThroughputReport};
use crate::error::{Error, Result};
use crate::model::{step, BatteryState, NetworkConfig};

/// Number of batches used for the batch-means standard error.
pub const BATCH_COUNT: u64 = 20;

/// One reproducible simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    horizon: u64,
    seed: u64,
    network: NetworkConfig,
}

impl SimulationConfig {
    pub fn new(horizon: u64, seed: u64, network: NetworkConfig) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidConfig {
                reason: "horizon must be at least 1 slot".into(),
            });
        }
        Ok(Self {
            horizon,
            seed,
            network,
        })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn network(&self) -> &NetworkConfig {
        &self.network
    }

    /// The same run under a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// Everything measured over one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Time-average rates; `r_n = successes_n * ln(1 + gamma_n d') / horizon`.
    pub report: ThroughputReport,
    pub successes1: u64,
    pub successes2: u64,
    pub collisions: u64,
    /// Fraction of slots spent in each pre-step state, row-major over the
    /// `gamma1 x gamma2` grid; sums to one.
    pub occupancy: Vec<f64>,
    /// Batch-means standard error of `r1` (`None` when the horizon is too
    /// short to form two batches).
    pub stderr1: Option<f64>,
    /// Batch-means standard error of `r2`.
    pub stderr2: Option<f64>,
}

/// Runs the chain from empty batteries for the configured horizon.
///
/// Occupancy counts the state at the start of each slot; throughput averages
/// over all slots with no warm-up discard, so the start-up bias is O(1/T).
pub fn run(config: &SimulationConfig) -> SimulationResult {
    let net = &config.network;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = BatteryState::empty();

    let mut successes1 = 0u64;
    let mut successes2 = 0u64;
    let mut collisions = 0u64;
    let mut occupancy_counts = vec![0u64; net.state_count()];

    // Per-batch success counts over the first BATCH_COUNT * batch_len slots.
    let batch_len = config.horizon / BATCH_COUNT;
    let mut batch_successes1 = vec![0u64; BATCH_COUNT as usize];
    let mut batch_successes2 = vec![0u64; BATCH_COUNT as usize];

    let gamma2 = net.gamma2();
    for slot in 0..config.horizon {
        occupancy_counts[(state.b1 * gamma2 + state.b2) as usize] += 1;
        let harvest = net.probs().sample(&mut rng);
        let out = step(state, harvest, net).expect("trajectory stays within the state invariant");
        if out.collision {
            collisions += 1;
        } else {
            if out.tx1 {
                successes1 += 1;
            }
            if out.tx2 {
                successes2 += 1;
            }
        }
        if let Some(batch) = slot.checked_div(batch_len) {
            if batch < BATCH_COUNT {
                let b = batch as usize;
                if out.tx1 && !out.collision {
                    batch_successes1[b] += 1;
                }
                if out.tx2 && !out.collision {
                    batch_successes2[b] += 1;
                }
            }
        }
        state = out.next_state;
    }

    let horizon = config.horizon as f64;
    let r1 = successes1 as f64 * net.success_rate1() / horizon;
    let r2 = successes2 as f64 * net.success_rate2() / horizon;
    let occupancy = occupancy_counts
        .iter()
        .map(|&c| c as f64 / horizon)
        .collect();

    let stderr = |counts: &[u64], rate: f64| -> Option<f64> {
        if batch_len < 1 {
            return None;
        }
        let b = BATCH_COUNT as f64;
        let means: Vec<f64> = counts
            .iter()
            .map(|&c| c as f64 * rate / batch_len as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / b;
        let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b * (b - 1.0));
        Some(var.sqrt())
    };

    SimulationResult {
        report: ThroughputReport::new(r1, r2, Source::Simulated),
        successes1,
        successes2,
        collisions,
        occupancy,
        stderr1: stderr(&batch_successes1, net.success_rate1()),
        stderr2: stderr(&batch_successes2, net.success_rate2()),
    }
}

/// Percent relative and absolute error of a simulated figure against an
/// analytic one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    /// `(analytic - simulated) / analytic * 100`; `None` when the analytic
    /// value is zero and the ratio is undefined.
    pub re_percent: Option<f64>,
    /// `(analytic - simulated) * 100`.
    pub ae_percent: f64,
}

/// Error metrics for one pair of values.
pub fn error_metrics(analytic: f64, simulated: f64) -> ErrorMetrics {
    let ae_percent = (analytic - simulated) * 100.0;
    let re_percent = if analytic != 0.0 {
        Some((analytic - simulated) / analytic * 100.0)
    } else {
        None
    };
    ErrorMetrics {
        re_percent,
        ae_percent,
    }
}

/// Per-node and aggregate error metrics of a run against an analytic report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub node1: ErrorMetrics,
    pub node2: ErrorMetrics,
    pub total: ErrorMetrics,
}

pub fn compare(result: &SimulationResult, analytic: &ThroughputReport) -> Comparison {
    Comparison {
        node1: error_metrics(analytic.r1, result.report.r1),
        node2: error_metrics(analytic.r2, result.report.r2),
        total: error_metrics(analytic.total, result.report.total),
    }
}

/// Header of the per-run CSV schema.
pub fn csv_header() -> &'static str {
    "gamma1,gamma2,p00,p10,p01,p11,delta_prime,horizon,seed,r1_sim,r2_sim,total_sim,collisions,re_total,ae_total"
}

/// One per-run CSV row at full precision. An undefined relative error (zero
/// analytic total) is written as an empty field.
pub fn csv_row(config: &SimulationConfig, result: &SimulationResult, vs: &Comparison) -> String {
    let net = &config.network;
    let probs = net.probs();
    let re_total = vs
        .total
        .re_percent
        .map(|v| v.to_string())
        .unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        net.gamma1(),
        net.gamma2(),
        probs.p00(),
        probs.p10(),
        probs.p01(),
        probs.p11(),
        net.delta_prime(),
        config.horizon,
        config.seed,
        result.report.r1,
        result.report.r2,
        result.report.total,
        result.collisions,
        re_total,
        vs.total.ae_percent,
    )
}
