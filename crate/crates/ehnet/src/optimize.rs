//! Threshold selection: exhaustive integer search over the feasible grid and
//! the closed-form rules for the two perfectly correlated harvest regimes.
//!
//! The exhaustive search always maximizes the exact model total (never an
//! asymptotic approximation); the closed forms are the fast path and are
//! cross-checkable against the search.

use crate::analytic::{
    self, gcd, negative_corr_total, positive_large_delta_total, positive_small_delta_total,
    Source,
};
use crate::error::{Error, Result};
use crate::model::{HarvestProbabilities, NetworkConfig};

/// Two objective values within this distance count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Result of a threshold optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationOutcome {
    /// One maximizing pair `(gamma1, gamma2)`; always a member of `ties`.
    pub best: (u32, u32),
    /// Objective value at `best`.
    pub best_value: f64,
    /// Every feasible pair within [`TIE_TOLERANCE`] of the maximum, in
    /// lexicographic order.
    pub ties: Vec<(u32, u32)>,
    /// Number of grid points evaluated.
    pub evaluated: usize,
    /// Route that produced the objective values.
    pub model_used: Source,
}

/// One evaluated point of the objective surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub gamma1: u32,
    pub gamma2: u32,
    pub r1: f64,
    pub r2: f64,
    pub total: f64,
    pub model: Source,
}

/// Evaluates the exact per-node throughput at one threshold pair.
pub fn evaluate_point(
    caps: (u32, u32),
    gammas: (u32, u32),
    probs: HarvestProbabilities,
    delta_prime: f64,
) -> Result<SurfacePoint> {
    let config = NetworkConfig::new(caps, gammas, delta_prime, probs)?;
    let report = analytic::throughput(&config)?;
    Ok(SurfacePoint {
        gamma1: gammas.0,
        gamma2: gammas.1,
        r1: report.r1,
        r2: report.r2,
        total: report.total,
        model: report.source,
    })
}

/// Evaluates the exact objective over a threshold sub-grid, in row-major
/// order.
pub fn objective_surface(
    caps: (u32, u32),
    gamma1_range: (u32, u32),
    gamma2_range: (u32, u32),
    probs: HarvestProbabilities,
    delta_prime: f64,
) -> Result<Vec<SurfacePoint>> {
    for (name, (lo, hi), cap) in [
        ("gamma1", gamma1_range, caps.0),
        ("gamma2", gamma2_range, caps.1),
    ] {
        if lo < 1 || hi > cap || lo > hi {
            return Err(Error::InvalidConfig {
                reason: format!("{name} range [{lo}, {hi}] must lie within [1, {cap}]"),
            });
        }
    }
    let mut points = Vec::new();
    for g1 in gamma1_range.0..=gamma1_range.1 {
        for g2 in gamma2_range.0..=gamma2_range.1 {
            points.push(evaluate_point(caps, (g1, g2), probs, delta_prime)?);
        }
    }
    Ok(points)
}

fn outcome_from_surface(points: &[SurfacePoint]) -> OptimizationOutcome {
    let best_value = points
        .iter()
        .map(|p| p.total)
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<(u32, u32)> = points
        .iter()
        .filter(|p| (best_value - p.total) <= TIE_TOLERANCE)
        .map(|p| (p.gamma1, p.gamma2))
        .collect();
    OptimizationOutcome {
        best: ties[0],
        best_value,
        ties,
        evaluated: points.len(),
        model_used: points[0].model,
    }
}

/// Maximizes the exact aggregate throughput over every integer pair in
/// `[1, cap1] x [1, cap2]`, reporting the full tie set.
pub fn exhaustive_search(
    caps: (u32, u32),
    probs: HarvestProbabilities,
    delta_prime: f64,
) -> Result<OptimizationOutcome> {
    let points = objective_surface(caps, (1, caps.0), (1, caps.1), probs, delta_prime)?;
    Ok(outcome_from_surface(&points))
}

/// Closed-form optimum for exclusive harvests: both thresholds at one.
///
/// The exclusive-harvest total strictly decreases in each threshold, so the
/// smallest feasible pair wins and no transmission ever collides.
pub fn negative_corr_optimum(caps: (u32, u32), p: f64, delta_prime: f64) -> OptimizationOutcome {
    debug_assert!(caps.0 >= 1 && caps.1 >= 1);
    debug_assert!(p > 0.0 && p < 1.0);
    OptimizationOutcome {
        best: (1, 1),
        best_value: negative_corr_total(1.0, 1.0, p, delta_prime),
        ties: vec![(1, 1)],
        evaluated: 1,
        model_used: Source::ClosedForm,
    }
}

/// Closed-form rule for lockstep harvests at small normalized SNR: the
/// smaller-capacity node takes its full capacity and the other takes the
/// largest threshold coprime with it.
///
/// Equal capacities are ambiguous (either node could take the larger
/// threshold); callers fall back to [`exhaustive_search`].
pub fn positive_small_delta_optimum(
    caps: (u32, u32),
    p: f64,
    delta_prime: f64,
) -> Result<OptimizationOutcome> {
    let (cap1, cap2) = caps;
    if cap1 == cap2 {
        return Err(Error::AmbiguousCase);
    }
    let (small, large) = (cap1.min(cap2), cap1.max(cap2));
    let partner = (1..=large)
        .rev()
        .find(|&j| gcd(u64::from(small), u64::from(j)) == 1)
        .expect("1 is coprime with everything");
    let best = if cap1 < cap2 {
        (small, partner)
    } else {
        (partner, small)
    };
    Ok(OptimizationOutcome {
        best,
        best_value: positive_small_delta_total(best.0, best.1, p, delta_prime),
        ties: vec![best],
        evaluated: 1,
        model_used: Source::SmallDeltaApprox,
    })
}

/// Closed-form rule for lockstep harvests at large normalized SNR: one node
/// fires every harvest while the larger-capacity node saves up to its full
/// battery. Equal capacities give the symmetric pair of optima.
pub fn positive_large_delta_optimum(
    caps: (u32, u32),
    p: f64,
    delta_prime: f64,
) -> Result<OptimizationOutcome> {
    if delta_prime <= 1.0 {
        return Err(Error::ApproximationDomain(format!(
            "need delta' > 1 so gamma * delta' > 1 across the grid, got {delta_prime}"
        )));
    }
    let (cap1, cap2) = caps;
    let mut ties: Vec<(u32, u32)> = if cap1 > cap2 {
        vec![(cap1, 1)]
    } else if cap2 > cap1 {
        vec![(1, cap2)]
    } else {
        vec![(1, cap2), (cap1, 1)]
    };
    ties.dedup();
    let best = ties[0];
    Ok(OptimizationOutcome {
        best,
        best_value: positive_large_delta_total(best.0, best.1, p, delta_prime)?,
        evaluated: ties.len(),
        ties,
        model_used: Source::LargeDeltaApprox,
    })
}

/// Serializes an objective surface as CSV with the fixed schema
/// `gamma1,gamma2,r1,r2,total,model_used` at full precision.
pub fn surface_csv(points: &[SurfacePoint]) -> String {
    let mut out = String::from("gamma1,gamma2,r1,r2,total,model_used\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.gamma1, p.gamma2, p.r1, p.r2, p.total, p.model
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::renewal_throughput;

    #[test]
    fn exclusive_harvests_favor_unit_thresholds() {
        let probs = HarvestProbabilities::high_negative(0.5).unwrap();
        let outcome = exhaustive_search((10, 10), probs, 5.0).unwrap();
        assert_eq!(outcome.ties, vec![(1, 1)]);
        assert_eq!(outcome.evaluated, 100);
        assert_eq!(outcome.model_used, Source::ClosedForm);
        assert!((outcome.best_value - 6f64.ln()).abs() < 1e-12);

        let closed = negative_corr_optimum((10, 10), 0.5, 5.0);
        assert_eq!(closed.best, outcome.best);
        assert!((closed.best_value - outcome.best_value).abs() < 1e-12);
    }

    #[test]
    fn closed_form_negative_matches_search_across_settings() {
        for p in [0.2, 0.5, 0.8] {
            for dp in [0.1, 1.0, 10.0] {
                let probs = HarvestProbabilities::high_negative(p).unwrap();
                let search = exhaustive_search((6, 8), probs, dp).unwrap();
                let closed = negative_corr_optimum((6, 8), p, dp);
                assert_eq!(search.ties, closed.ties, "p = {p}, delta' = {dp}");
            }
        }
    }

    #[test]
    fn trivial_capacity_grid_has_one_point() {
        let outcome = negative_corr_optimum((1, 1), 0.5, 2.0);
        assert_eq!(outcome.best, (1, 1));
    }

    #[test]
    fn lockstep_high_snr_splits_the_roles() {
        let probs = HarvestProbabilities::high_positive(0.5).unwrap();
        let outcome = exhaustive_search((10, 10), probs, 30.0).unwrap();
        assert_eq!(outcome.ties, vec![(1, 10), (10, 1)]);
        assert_eq!(outcome.model_used, Source::Renewal);
        assert!((outcome.best_value - 1.5452942420183158).abs() < 1e-12);
    }

    #[test]
    fn lockstep_low_snr_search_matches_independent_enumeration() {
        // Oracle: enumerate the exact renewal totals directly.
        let probs = HarvestProbabilities::high_positive(0.5).unwrap();
        let outcome = exhaustive_search((10, 10), probs, 0.04).unwrap();

        let mut best = f64::NEG_INFINITY;
        for g1 in 1..=10u32 {
            for g2 in 1..=10u32 {
                best = best.max(renewal_throughput(g1, g2, 0.5, 0.04).total);
            }
        }
        let ties: Vec<(u32, u32)> = (1..=10u32)
            .flat_map(|g1| (1..=10u32).map(move |g2| (g1, g2)))
            .filter(|&(g1, g2)| {
                best - renewal_throughput(g1, g2, 0.5, 0.04).total <= TIE_TOLERANCE
            })
            .collect();
        assert_eq!(outcome.ties, ties);
        assert!((outcome.best_value - best).abs() < 1e-15);
        // At this SNR the curvature of ln(1 + x) already matters: the exact
        // argmax backs off the capacity corner to the coprime pair (8, 9).
        assert_eq!(outcome.ties, vec![(8, 9), (9, 8)]);
    }

    #[test]
    fn small_delta_rule_takes_largest_coprime_pair() {
        // Oracle: minimize gcd * (1/g1 + 1/g2) over the feasible grid, the
        // quantity the small-SNR total penalizes.
        for caps in [(4u32, 6u32), (9, 10), (5, 12), (12, 5)] {
            let outcome = positive_small_delta_optimum(caps, 0.5, 0.04).unwrap();
            let mut best_pair = (0, 0);
            let mut best_penalty = f64::INFINITY;
            for g1 in 1..=caps.0 {
                for g2 in 1..=caps.1 {
                    let penalty = gcd(u64::from(g1), u64::from(g2)) as f64
                        * (1.0 / f64::from(g1) + 1.0 / f64::from(g2));
                    if penalty < best_penalty {
                        best_penalty = penalty;
                        best_pair = (g1, g2);
                    }
                }
            }
            assert_eq!(outcome.best, best_pair, "caps {caps:?}");
        }

        let outcome = positive_small_delta_optimum((4, 6), 0.5, 0.04).unwrap();
        assert_eq!(outcome.best, (4, 5));
        let outcome = positive_small_delta_optimum((9, 10), 0.5, 0.04).unwrap();
        assert_eq!(outcome.best, (9, 10));
    }

    #[test]
    fn equal_capacities_are_ambiguous_for_the_small_delta_rule() {
        assert!(matches!(
            positive_small_delta_optimum((10, 10), 0.5, 0.04),
            Err(Error::AmbiguousCase)
        ));
        // The fallback exhaustive search still answers; at delta' = 0.04 the
        // exact optimum is the coprime pair below the capacity corner.
        let probs = HarvestProbabilities::high_positive(0.5).unwrap();
        let outcome = exhaustive_search((10, 10), probs, 0.04).unwrap();
        assert_eq!(outcome.ties, vec![(8, 9), (9, 8)]);
    }

    #[test]
    fn large_delta_rule_matches_search_away_from_the_guard() {
        let probs = HarvestProbabilities::high_positive(0.5).unwrap();

        let closed = positive_large_delta_optimum((12, 5), 0.5, 50.0).unwrap();
        assert_eq!(closed.best, (12, 1));
        let search = exhaustive_search((12, 5), probs, 50.0).unwrap();
        assert_eq!(search.ties, vec![(12, 1)]);

        let closed = positive_large_delta_optimum((5, 12), 0.5, 50.0).unwrap();
        assert_eq!(closed.best, (1, 12));
        let search = exhaustive_search((5, 12), probs, 50.0).unwrap();
        assert_eq!(search.ties, vec![(1, 12)]);

        let closed = positive_large_delta_optimum((10, 10), 0.5, 30.0).unwrap();
        assert_eq!(closed.ties, vec![(1, 10), (10, 1)]);
    }

    #[test]
    fn large_delta_rule_guards_low_snr() {
        assert!(matches!(
            positive_large_delta_optimum((4, 6), 0.5, 0.5),
            Err(Error::ApproximationDomain(_))
        ));
    }

    #[test]
    fn search_dominates_every_closed_form_point() {
        // The search maximizes the exact model, so its value is at least the
        // exact value at any closed-form pair.
        let p = 0.5;
        for (caps, dp) in [((4u32, 6u32), 0.04f64), ((9, 10), 0.04), ((12, 5), 50.0)] {
            let probs = HarvestProbabilities::high_positive(p).unwrap();
            let search = exhaustive_search(caps, probs, dp).unwrap();
            let closed = if dp > 1.0 {
                positive_large_delta_optimum(caps, p, dp).unwrap()
            } else {
                positive_small_delta_optimum(caps, p, dp).unwrap()
            };
            let exact_at_closed =
                renewal_throughput(closed.best.0, closed.best.1, p, dp).total;
            assert!(search.best_value >= exact_at_closed - 1e-15);
        }
    }

    #[test]
    fn symmetric_problems_have_swap_closed_ties() {
        let probs = HarvestProbabilities::independent();
        let outcome = exhaustive_search((6, 6), probs, 3.0).unwrap();
        for &(g1, g2) in &outcome.ties {
            assert!(
                outcome.ties.contains(&(g2, g1)),
                "tie set {:?} is not swap-closed",
                outcome.ties
            );
        }
    }

    #[test]
    fn search_visits_the_whole_grid() {
        let probs = HarvestProbabilities::independent();
        let outcome = exhaustive_search((7, 3), probs, 1.0).unwrap();
        assert_eq!(outcome.evaluated, 21);
        assert!(outcome.ties.contains(&outcome.best));
    }

    #[test]
    fn mixed_laws_route_through_chain_accounting() {
        let probs = HarvestProbabilities::new(0.2, 0.3, 0.0, 0.5).unwrap();
        let outcome = exhaustive_search((4, 4), probs, 2.0).unwrap();
        assert_eq!(outcome.model_used, Source::StationaryAccounting);
        assert_eq!(outcome.evaluated, 16);
    }

    #[test]
    fn surface_csv_has_the_fixed_schema() {
        let probs = HarvestProbabilities::high_negative(0.5).unwrap();
        let points = objective_surface((2, 2), (1, 2), (1, 2), probs, 5.0).unwrap();
        let csv = surface_csv(&points);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("gamma1,gamma2,r1,r2,total,model_used"));
        assert_eq!(lines.count(), 4);
        assert!(csv.contains(",closed-form\n"));
    }

    #[test]
    fn surface_range_outside_caps_is_rejected() {
        let probs = HarvestProbabilities::independent();
        assert!(matches!(
            objective_surface((4, 4), (1, 5), (1, 4), probs, 1.0),
            Err(Error::InvalidConfig { .. })
        ));
    }
}
