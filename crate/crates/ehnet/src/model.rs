//! Domain types and the exact one-slot dynamics of the two-node network.
//!
//! Two battery-powered nodes share a collision channel. Each slot a node may
//! harvest one energy quantum; a node transmits (draining its battery
//! completely) in the slot its stored energy reaches its threshold. If both
//! transmit in the same slot the packets collide and both are lost. All
//! quantities here are tracked in integer quanta so that the slot dynamics
//! are exact and the joint battery process can be indexed as a finite chain.

use rand::Rng;

use crate::error::{Error, Result};

/// Absolute tolerance for requiring the four joint probabilities to sum to one.
pub const PROB_SUM_TOLERANCE: f64 = 1e-12;

/// Joint law of the two per-slot harvest indicators.
///
/// `p_ab` is the probability that node 1 harvests `a` quanta and node 2
/// harvests `b` quanta in a slot. The four entries must form a probability
/// distribution; harvests are i.i.d. across slots but may be correlated
/// between the nodes within a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestProbabilities {
    p00: f64,
    p10: f64,
    p01: f64,
    p11: f64,
}

impl HarvestProbabilities {
    /// Builds a validated joint harvest law.
    pub fn new(p00: f64, p10: f64, p01: f64, p11: f64) -> Result<Self> {
        let probs = Self { p00, p10, p01, p11 };
        probs.validate()?;
        Ok(probs)
    }

    /// Checks that every entry is a probability and that the four sum to one.
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("p00", self.p00),
            ("p10", self.p10),
            ("p01", self.p01),
            ("p11", self.p11),
        ] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(Error::OutOfRange { field, value });
            }
        }
        let sum = self.p00 + self.p10 + self.p01 + self.p11;
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::NonStochastic { sum });
        }
        Ok(())
    }

    /// Exactly one node harvests per harvest event: `(0, p, 1-p, 0)`.
    pub fn high_negative(p: f64) -> Result<Self> {
        Self::new(0.0, p, 1.0 - p, 0.0)
    }

    /// Both nodes harvest together or not at all: `(1-p, 0, 0, p)`.
    pub fn high_positive(p: f64) -> Result<Self> {
        Self::new(1.0 - p, 0.0, 0.0, p)
    }

    /// The two nodes harvest independently with probability one half each.
    pub fn independent() -> Self {
        Self {
            p00: 0.25,
            p10: 0.25,
            p01: 0.25,
            p11: 0.25,
        }
    }

    pub fn p00(&self) -> f64 {
        self.p00
    }

    pub fn p10(&self) -> f64 {
        self.p10
    }

    pub fn p01(&self) -> f64 {
        self.p01
    }

    pub fn p11(&self) -> f64 {
        self.p11
    }

    /// Draws one joint harvest outcome.
    ///
    /// A single uniform variate is mapped through the cumulative law in the
    /// fixed order `p00, p10, p01, p11`, so the outcome is a deterministic
    /// function of the generator state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Harvest {
        let u: f64 = rng.gen();
        if u < self.p00 {
            Harvest::new(false, false)
        } else if u < self.p00 + self.p10 {
            Harvest::new(true, false)
        } else if u < self.p00 + self.p10 + self.p01 {
            Harvest::new(false, true)
        } else {
            Harvest::new(true, true)
        }
    }
}

/// Normalized per-quantum SNR: `(delta / epsilon) / noise`.
///
/// `delta` is the quantum size in joules, `epsilon` the transmission time as
/// a fraction of a slot, and `noise` the channel noise power. A transmission
/// fired at threshold `gamma` then succeeds at rate `ln(1 + gamma * delta')`
/// nats/sec/Hz.
pub fn compute_delta_prime(delta: f64, epsilon: f64, noise: f64) -> Result<f64> {
    for (field, value) in [("delta", delta), ("epsilon", epsilon), ("noise", noise)] {
        if value <= 0.0 || value.is_nan() {
            return Err(Error::NonPositiveInput { field, value });
        }
    }
    Ok((delta / epsilon) / noise)
}

/// Full parameterization of the two-node network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    cap1: u32,
    cap2: u32,
    gamma1: u32,
    gamma2: u32,
    delta_prime: f64,
    probs: HarvestProbabilities,
}

impl NetworkConfig {
    /// Builds a validated configuration.
    ///
    /// Thresholds must satisfy `1 <= gamma_n <= cap_n` and `delta_prime`
    /// must be positive.
    pub fn new(
        caps: (u32, u32),
        gammas: (u32, u32),
        delta_prime: f64,
        probs: HarvestProbabilities,
    ) -> Result<Self> {
        probs.validate()?;
        if delta_prime <= 0.0 || delta_prime.is_nan() {
            return Err(Error::NonPositiveInput {
                field: "delta_prime",
                value: delta_prime,
            });
        }
        for (name, gamma, cap) in [("gamma1", gammas.0, caps.0), ("gamma2", gammas.1, caps.1)] {
            if gamma < 1 || gamma > cap {
                return Err(Error::InvalidConfig {
                    reason: format!("{name} = {gamma} must lie in [1, {cap}]"),
                });
            }
        }
        Ok(Self {
            cap1: caps.0,
            cap2: caps.1,
            gamma1: gammas.0,
            gamma2: gammas.1,
            delta_prime,
            probs,
        })
    }

    pub fn cap1(&self) -> u32 {
        self.cap1
    }

    pub fn cap2(&self) -> u32 {
        self.cap2
    }

    pub fn gamma1(&self) -> u32 {
        self.gamma1
    }

    pub fn gamma2(&self) -> u32 {
        self.gamma2
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta_prime
    }

    pub fn probs(&self) -> HarvestProbabilities {
        self.probs
    }

    /// Rate of a successful node-1 transmission, `ln(1 + gamma1 * delta')`.
    pub fn success_rate1(&self) -> f64 {
        (1.0 + f64::from(self.gamma1) * self.delta_prime).ln()
    }

    /// Rate of a successful node-2 transmission, `ln(1 + gamma2 * delta')`.
    pub fn success_rate2(&self) -> f64 {
        (1.0 + f64::from(self.gamma2) * self.delta_prime).ln()
    }

    /// Number of joint battery states, `gamma1 * gamma2`.
    pub fn state_count(&self) -> usize {
        self.gamma1 as usize * self.gamma2 as usize
    }
}

/// Joint battery levels in integer quanta at a slot boundary.
///
/// Levels at or above a node's threshold are transient within a slot
/// (transmission is immediate), so a valid boundary state satisfies
/// `b_n <= gamma_n - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BatteryState {
    pub b1: u32,
    pub b2: u32,
}

impl BatteryState {
    pub fn new(b1: u32, b2: u32) -> Self {
        Self { b1, b2 }
    }

    /// Both batteries empty; the start state of every run.
    pub fn empty() -> Self {
        Self { b1: 0, b2: 0 }
    }

    fn check(&self, config: &NetworkConfig) -> Result<()> {
        if self.b1 >= config.gamma1 || self.b2 >= config.gamma2 {
            return Err(Error::InvalidState {
                b1: self.b1,
                b2: self.b2,
                gamma1: config.gamma1,
                gamma2: config.gamma2,
            });
        }
        Ok(())
    }
}

/// One slot's joint harvest outcome (one quantum per node at most).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Harvest {
    pub node1: bool,
    pub node2: bool,
}

impl Harvest {
    pub fn new(node1: bool, node2: bool) -> Self {
        Self { node1, node2 }
    }

    /// All four possible outcomes, in the cumulative sampling order.
    pub fn all() -> [Harvest; 4] {
        [
            Harvest::new(false, false),
            Harvest::new(true, false),
            Harvest::new(false, true),
            Harvest::new(true, true),
        ]
    }
}

/// Everything that happened in one slot transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub next_state: BatteryState,
    pub tx1: bool,
    pub tx2: bool,
    pub collision: bool,
    /// Successful node-1 rate this slot (zero unless node 1 alone transmitted).
    pub rate1: f64,
    /// Successful node-2 rate this slot (zero unless node 2 alone transmitted).
    pub rate2: f64,
}

/// Advances the network by one slot: harvest, threshold check, transmit.
///
/// A node whose post-harvest level reaches its threshold transmits
/// immediately and its battery drains to zero; simultaneous transmissions
/// collide and carry no rate. The capacity clamp can never engage while the
/// state invariant holds (`b_n + 1 <= gamma_n <= cap_n`) but is kept so the
/// update is the literal battery recursion.
pub fn step(state: BatteryState, harvest: Harvest, config: &NetworkConfig) -> Result<SlotOutcome> {
    state.check(config)?;

    let candidate1 = (state.b1 + u32::from(harvest.node1)).min(config.cap1);
    let candidate2 = (state.b2 + u32::from(harvest.node2)).min(config.cap2);
    let tx1 = candidate1 >= config.gamma1;
    let tx2 = candidate2 >= config.gamma2;
    let collision = tx1 && tx2;

    let next_state = BatteryState::new(
        if tx1 { 0 } else { candidate1 },
        if tx2 { 0 } else { candidate2 },
    );
    let rate1 = if tx1 && !collision {
        config.success_rate1()
    } else {
        0.0
    };
    let rate2 = if tx2 && !collision {
        config.success_rate2()
    } else {
        0.0
    };

    Ok(SlotOutcome {
        next_state,
        tx1,
        tx2,
        collision,
        rate1,
        rate2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(gammas: (u32, u32), delta_prime: f64, probs: HarvestProbabilities) -> NetworkConfig {
        NetworkConfig::new((10, 10), gammas, delta_prime, probs).unwrap()
    }

    #[test]
    fn accepts_independent_law() {
        assert!(HarvestProbabilities::new(0.25, 0.25, 0.25, 0.25).is_ok());
    }

    #[test]
    fn accepts_high_negative_law() {
        assert!(HarvestProbabilities::new(0.0, 0.5, 0.5, 0.0).is_ok());
    }

    #[test]
    fn rejects_non_stochastic_law() {
        match HarvestProbabilities::new(0.5, 0.5, 0.5, 0.5) {
            Err(Error::NonStochastic { sum }) => assert!((sum - 2.0).abs() < 1e-15),
            other => panic!("expected NonStochastic, got {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_entry() {
        match HarvestProbabilities::new(-0.1, 0.6, 0.25, 0.25) {
            Err(Error::OutOfRange { field, .. }) => assert_eq!(field, "p00"),
            other => panic!("expected OutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn delta_prime_from_raw_quantities() {
        assert_eq!(compute_delta_prime(30.0, 1.0, 1.0).unwrap(), 30.0);
        assert!((compute_delta_prime(3.0, 0.1, 1.0).unwrap() - 30.0).abs() < 1e-12);
        assert_eq!(compute_delta_prime(1.0, 0.5, 4.0).unwrap(), 0.5);
    }

    #[test]
    fn delta_prime_rejects_non_positive_inputs() {
        assert!(matches!(
            compute_delta_prime(0.0, 1.0, 1.0),
            Err(Error::NonPositiveInput { field: "delta", .. })
        ));
        assert!(matches!(
            compute_delta_prime(1.0, -2.0, 1.0),
            Err(Error::NonPositiveInput { field: "epsilon", .. })
        ));
        assert!(matches!(
            compute_delta_prime(1.0, 1.0, 0.0),
            Err(Error::NonPositiveInput { field: "noise", .. })
        ));
    }

    #[test]
    fn config_rejects_threshold_above_capacity() {
        let probs = HarvestProbabilities::independent();
        assert!(matches!(
            NetworkConfig::new((3, 3), (4, 1), 1.0, probs),
            Err(Error::InvalidConfig { .. })
        ));
        assert!(matches!(
            NetworkConfig::new((3, 3), (1, 0), 1.0, probs),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn degenerate_law_always_yields_same_outcome() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let only_node1 = HarvestProbabilities::new(0.0, 1.0, 0.0, 0.0).unwrap();
        let both = HarvestProbabilities::new(0.0, 0.0, 0.0, 1.0).unwrap();
        for _ in 0..100 {
            assert_eq!(only_node1.sample(&mut rng), Harvest::new(true, false));
            assert_eq!(both.sample(&mut rng), Harvest::new(true, true));
        }
    }

    #[test]
    fn sampling_matches_the_law_at_three_sigma() {
        // Frequency check over 10^6 draws of the independent law. Each cell
        // expects 250_000 with sigma = sqrt(n * 0.25 * 0.75) ~ 433; the
        // chi-square statistic (3 dof) is also kept below its 99.9% point.
        let probs = HarvestProbabilities::independent();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000u64;
        let mut counts = [0u64; 4];
        for _ in 0..n {
            let h = probs.sample(&mut rng);
            let cell = usize::from(h.node1) + 2 * usize::from(h.node2);
            counts[cell] += 1;
        }
        let expected = n as f64 / 4.0;
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        let mut chi2 = 0.0;
        for &c in &counts {
            assert!(
                (c as f64 - expected).abs() <= 3.0 * sigma,
                "cell count {c} deviates from {expected} beyond 3 sigma"
            );
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        assert!(chi2 < 16.27, "chi-square statistic {chi2} too large");
    }

    #[test]
    fn node_at_threshold_minus_one_transmits_on_harvest() {
        let probs = HarvestProbabilities::independent();
        let cfg = config((3, 3), 5.0, probs);
        let out = step(BatteryState::new(2, 1), Harvest::new(true, false), &cfg).unwrap();
        assert!(out.tx1 && !out.tx2 && !out.collision);
        assert_eq!(out.next_state, BatteryState::new(0, 1));
        assert!((out.rate1 - 16f64.ln()).abs() < 1e-15);
        assert_eq!(out.rate2, 0.0);
    }

    #[test]
    fn simultaneous_threshold_crossings_collide() {
        let probs = HarvestProbabilities::independent();
        let cfg = config((3, 3), 5.0, probs);
        let out = step(BatteryState::new(2, 2), Harvest::new(true, true), &cfg).unwrap();
        assert!(out.tx1 && out.tx2 && out.collision);
        assert_eq!(out.next_state, BatteryState::empty());
        assert_eq!((out.rate1, out.rate2), (0.0, 0.0));
    }

    #[test]
    fn below_threshold_harvests_accumulate() {
        let probs = HarvestProbabilities::independent();
        let cfg = config((3, 3), 5.0, probs);
        let out = step(BatteryState::empty(), Harvest::new(true, true), &cfg).unwrap();
        assert!(!out.tx1 && !out.tx2 && !out.collision);
        assert_eq!(out.next_state, BatteryState::new(1, 1));
    }

    #[test]
    fn step_rejects_state_outside_invariant() {
        let probs = HarvestProbabilities::independent();
        let cfg = config((3, 3), 5.0, probs);
        assert!(matches!(
            step(BatteryState::new(3, 0), Harvest::new(false, false), &cfg),
            Err(Error::InvalidState { .. })
        ));
    }

    proptest! {
        #[test]
        fn trajectories_stay_within_the_invariant(
            seed in 0u64..1000,
            gamma1 in 1u32..=6,
            gamma2 in 1u32..=6,
            raw in prop::array::uniform4(0.01f64..1.0),
        ) {
            let total: f64 = raw.iter().sum();
            let probs = HarvestProbabilities::new(
                raw[0] / total, raw[1] / total, raw[2] / total, raw[3] / total,
            ).unwrap();
            let cfg = NetworkConfig::new((gamma1, gamma2), (gamma1, gamma2), 1.0, probs).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = BatteryState::empty();
            for _ in 0..200 {
                let harvest = probs.sample(&mut rng);
                let out = step(state, harvest, &cfg).unwrap();

                // Purity: same inputs, same outcome.
                prop_assert_eq!(step(state, harvest, &cfg).unwrap(), out);

                // Per-slot energy conservation in quanta.
                let gained = u32::from(harvest.node1);
                let spent1 = if out.tx1 { state.b1 + gained } else { 0 };
                prop_assert_eq!(out.next_state.b1, state.b1 + gained - spent1);

                // Positive rate only for a clean transmission, at the fixed
                // threshold rate.
                if out.rate1 > 0.0 {
                    prop_assert!(out.tx1 && !out.collision);
                    prop_assert_eq!(out.rate1, cfg.success_rate1());
                }
                prop_assert_eq!(out.collision, out.tx1 && out.tx2);

                state = out.next_state;
                prop_assert!(state.b1 < gamma1 && state.b2 < gamma2);
            }
        }
    }
}
