//! Throughput analysis of a two-node energy-harvesting network on a
//! random-access channel.
//!
//! Two nodes harvest energy in unit quanta, possibly in a correlated way,
//! and each transmits, draining its battery, whenever its level reaches a
//! per-node threshold. Simultaneous transmissions collide. This crate
//! computes the long-term average throughput of that system exactly,
//! searches for throughput-maximizing thresholds, and validates every
//! analytic figure against a slot-level Monte Carlo simulator.
//!
//! * [`model`]: domain types and the exact one-slot dynamics.
//! * [`markov`]: the joint-battery chain, its stationary distribution, and
//!   per-state throughput accounting.
//! * [`analytic`]: closed-form throughput for the tractable harvest
//!   regimes, asymptotic approximations, and the model dispatcher.
//! * [`sim`]: reproducible Monte Carlo with batch-means error bars.
//! * [`optimize`]: exhaustive threshold search and closed-form rules.
//!
//! ```
//! use ehnet::{analytic, optimize, sim, HarvestProbabilities, NetworkConfig};
//! use ehnet::sim::SimulationConfig;
//!
//! // Both nodes harvest in lockstep half the time; thresholds 4 and 6.
//! let law = HarvestProbabilities::high_positive(0.5)?;
//! let config = NetworkConfig::new((10, 10), (4, 6), 1.0, law)?;
//!
//! // Exact throughput (the renewal route applies to this law) ...
//! let exact = analytic::throughput(&config)?;
//! assert!((exact.r1 - 0.134119826036175).abs() < 1e-12);
//!
//! // ... agrees with a seeded slot-level simulation,
//! let run = sim::run(&SimulationConfig::new(200_000, 7, config)?);
//! assert!((run.report.r1 - exact.r1).abs() <= 3.0 * run.stderr1.unwrap());
//!
//! // and the best thresholds for this law maximize the same objective.
//! let best = optimize::exhaustive_search((10, 10), law, 1.0)?;
//! assert_eq!(best.evaluated, 100);
//! # Ok::<(), ehnet::Error>(())
//! ```

pub mod analytic;
pub mod error;
pub mod markov;
pub mod model;
pub mod optimize;
pub mod sim;

pub use analytic::{Source, ThroughputReport};
pub use error::{Error, Result};
pub use markov::{SteadyState, TransitionMatrix};
pub use model::{BatteryState, Harvest, HarvestProbabilities, NetworkConfig, SlotOutcome};
pub use optimize::OptimizationOutcome;
pub use sim::{SimulationConfig, SimulationResult};
