//! Command execution: everything downstream of a resolved [`RunSpec`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ehnet::analytic;
use ehnet::markov::{build_chain, solve_steady_state, stationary_throughput};
use ehnet::model::NetworkConfig;
use ehnet::optimize::{
    self, exhaustive_search, negative_corr_optimum, positive_large_delta_optimum,
    positive_small_delta_optimum, OptimizationOutcome,
};
use ehnet::sim::{self, SimulationConfig};
use ehnet::{Error as LibError, HarvestProbabilities, ThroughputReport};
use rayon::prelude::*;

use crate::config::{CommandKind, RunSpec};
use crate::CliError;

/// Formats a value with six significant digits for the human-readable tables.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Library errors caused by the user's values are validation failures;
/// anything else is an internal failure.
fn lib_error(e: LibError) -> CliError {
    match e {
        LibError::NonStochastic { .. }
        | LibError::OutOfRange { .. }
        | LibError::NonPositiveInput { .. }
        | LibError::InvalidConfig { .. }
        | LibError::PreconditionViolated(_)
        | LibError::ApproximationDomain(_)
        | LibError::AmbiguousCase => CliError::Validation(e.to_string()),
        other => CliError::Internal(other.to_string()),
    }
}

fn network(spec: &RunSpec, gammas: (u32, u32)) -> Result<NetworkConfig, CliError> {
    NetworkConfig::new(spec.caps, gammas, spec.delta_prime(), spec.probs).map_err(lib_error)
}

fn law_line(probs: &HarvestProbabilities) -> String {
    format!(
        "law: p00={} p10={} p01={} p11={}",
        probs.p00(),
        probs.p10(),
        probs.p01(),
        probs.p11()
    )
}

fn report_lines(label: &str, report: &ThroughputReport) -> String {
    format!(
        "{label} (source: {}):\n  r1 = {}   r2 = {}   total = {}\n",
        report.source,
        sig6(report.r1),
        sig6(report.r2),
        sig6(report.total)
    )
}

pub fn execute(spec: &RunSpec) -> Result<(), CliError> {
    install_thread_pool()?;
    match &spec.kind {
        CommandKind::Analytic { dump_chain } => run_analytic(spec, dump_chain.as_deref()),
        CommandKind::Simulate => run_simulate(spec),
        CommandKind::Optimize {
            closed_form,
            verify,
        } => run_optimize(spec, *closed_form, *verify),
        CommandKind::Sweep => run_sweep(spec),
        CommandKind::Verify => run_verify(spec),
    }
}

/// Caps sweep parallelism at EHNET_THREADS when the variable is set.
fn install_thread_pool() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("EHNET_THREADS") {
        let threads: usize = raw
            .parse()
            .map_err(|_| CliError::Usage(format!("EHNET_THREADS = '{raw}' is not a thread count")))?;
        if threads == 0 {
            return Err(CliError::Usage("EHNET_THREADS must be at least 1".into()));
        }
        // A later global build (for example in tests driving several specs)
        // keeps the first pool; that is fine for a capping knob.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(())
}

fn run_analytic(spec: &RunSpec, dump_chain: Option<&Path>) -> Result<(), CliError> {
    let gammas = spec.gammas.expect("resolve() requires gammas for analytic");
    let config = network(spec, gammas)?;
    let report = analytic::throughput(&config).map_err(lib_error)?;

    if let Some(path) = dump_chain {
        std::fs::write(path, build_chain(&config).to_csv())
            .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?;
    }

    let mut text = String::new();
    let _ = writeln!(
        text,
        "gammas: ({}, {})   caps: ({}, {})   delta': {}",
        gammas.0, gammas.1, spec.caps.0, spec.caps.1, spec.delta_prime()
    );
    let _ = writeln!(text, "{}", law_line(&spec.probs));
    text.push_str(&report_lines("throughput", &report));
    emit(spec.output.as_deref(), &text)
}

fn run_simulate(spec: &RunSpec) -> Result<(), CliError> {
    let gammas = spec.gammas.expect("resolve() requires gammas for simulate");
    let horizon = spec.horizon.expect("resolve() requires a horizon for simulate");
    let config = network(spec, gammas)?;
    let sim_config = SimulationConfig::new(horizon, spec.seed, config).map_err(lib_error)?;

    let result = sim::run(&sim_config);
    let analytic = analytic::throughput(&config).map_err(lib_error)?;
    let vs = sim::compare(&result, &analytic);

    let mut text = String::new();
    let _ = writeln!(
        text,
        "horizon: {horizon} slots   seed: {}   gammas: ({}, {})   delta': {}",
        spec.seed, gammas.0, gammas.1, spec.delta_prime()
    );
    let _ = writeln!(text, "{}", law_line(&spec.probs));
    text.push_str(&report_lines("simulated", &result.report));
    let _ = writeln!(
        text,
        "  se(r1) = {}   se(r2) = {}",
        result.stderr1.map(sig6).unwrap_or_else(|| "n/a".into()),
        result.stderr2.map(sig6).unwrap_or_else(|| "n/a".into()),
    );
    let _ = writeln!(
        text,
        "  successes: node1 {}, node2 {}, collisions {}",
        result.successes1, result.successes2, result.collisions
    );
    text.push_str(&report_lines("analytic", &analytic));
    let re = |m: &sim::ErrorMetrics| m.re_percent.map(sig6).unwrap_or_else(|| "n/a".into());
    let _ = writeln!(
        text,
        "%RE: node1 {}   node2 {}   total {}",
        re(&vs.node1),
        re(&vs.node2),
        re(&vs.total)
    );
    let _ = writeln!(
        text,
        "%AE: node1 {}   node2 {}   total {}",
        sig6(vs.node1.ae_percent),
        sig6(vs.node2.ae_percent),
        sig6(vs.total.ae_percent)
    );

    if let Some(path) = &spec.output {
        let csv = format!(
            "{}\n{}\n",
            sim::csv_header(),
            sim::csv_row(&sim_config, &result, &vs)
        );
        std::fs::write(path, csv)
            .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?;
    }
    print!("{text}");
    Ok(())
}

/// The closed-form rule for the law's regime, when one exists.
fn closed_form_for(spec: &RunSpec) -> Result<Option<OptimizationOutcome>, CliError> {
    let probs = &spec.probs;
    let dp = spec.delta_prime();
    if probs.p00() == 0.0 && probs.p11() == 0.0 && probs.p10() > 0.0 && probs.p01() > 0.0 {
        return Ok(Some(negative_corr_optimum(spec.caps, probs.p10(), dp)));
    }
    if probs.p10() == 0.0 && probs.p01() == 0.0 {
        let outcome = if dp > 1.0 {
            positive_large_delta_optimum(spec.caps, probs.p11(), dp)
        } else {
            positive_small_delta_optimum(spec.caps, probs.p11(), dp)
        };
        return match outcome {
            Ok(o) => Ok(Some(o)),
            // Equal capacities: the spec'd fallback is the exhaustive search.
            Err(LibError::AmbiguousCase) => Ok(None),
            Err(e) => Err(lib_error(e)),
        };
    }
    Ok(None)
}

fn outcome_lines(label: &str, outcome: &OptimizationOutcome) -> String {
    let ties = outcome
        .ties
        .iter()
        .map(|(a, b)| format!("({a}, {b})"))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "{label} (model: {}):\n  best: ({}, {})   value = {}\n  ties: {}\n  evaluated: {} pairs\n",
        outcome.model_used,
        outcome.best.0,
        outcome.best.1,
        sig6(outcome.best_value),
        ties,
        outcome.evaluated
    )
}

fn run_optimize(spec: &RunSpec, closed_form: bool, verify: bool) -> Result<(), CliError> {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "caps: ({}, {})   delta': {}",
        spec.caps.0, spec.caps.1, spec.delta_prime()
    );
    let _ = writeln!(text, "{}", law_line(&spec.probs));

    let closed = if closed_form || verify {
        let c = closed_form_for(spec)?;
        if c.is_none() {
            let _ = writeln!(
                text,
                "closed form: none applies to this law{}; using exhaustive search",
                if spec.probs.p10() == 0.0 && spec.probs.p01() == 0.0 {
                    " (equal capacities are ambiguous)"
                } else {
                    ""
                }
            );
        }
        c
    } else {
        None
    };

    let search = if closed.is_none() || verify || !closed_form {
        Some(exhaustive_search(spec.caps, spec.probs, spec.delta_prime()).map_err(lib_error)?)
    } else {
        None
    };

    if let Some(c) = &closed {
        text.push_str(&outcome_lines("closed form", c));
    }
    if let Some(s) = &search {
        text.push_str(&outcome_lines("exhaustive search", s));
    }
    if verify {
        if let (Some(c), Some(s)) = (&closed, &search) {
            if c.ties == s.ties {
                let _ = writeln!(text, "verify: closed form and exhaustive search agree");
            } else {
                // Outside the asymptotic regimes the closed form may differ
                // from the exact optimum; report, do not fail.
                let _ = writeln!(
                    text,
                    "verify: closed form {:?} differs from exact search {:?}",
                    c.ties, s.ties
                );
            }
        }
    }
    emit(spec.output.as_deref(), &text)
}

fn sweep_output_path(base: &Path, delta_prime: f64, multiple: bool) -> PathBuf {
    if !multiple {
        return base.to_path_buf();
    }
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let ext = base
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    base.with_file_name(format!("{stem}.dp{delta_prime}{ext}"))
}

fn run_sweep(spec: &RunSpec) -> Result<(), CliError> {
    let g1 = spec.gamma1_range.unwrap_or((1, spec.caps.0));
    let g2 = spec.gamma2_range.unwrap_or((1, spec.caps.1));
    for (name, (lo, hi)) in [("gamma1-range", g1), ("gamma2-range", g2)] {
        if lo > hi {
            return Err(CliError::Validation(format!(
                "{name} [{lo}, {hi}] is empty"
            )));
        }
    }
    let multiple = spec.delta_primes.len() > 1;
    if multiple && spec.output.is_none() {
        return Err(CliError::Usage(
            "sweeping several --delta-primes needs --output for the per-value files".into(),
        ));
    }

    for &dp in &spec.delta_primes {
        // Points are independent; evaluate the grid in parallel and keep
        // row-major order for the CSV.
        let pairs: Vec<(u32, u32)> = (g1.0..=g1.1)
            .flat_map(|a| (g2.0..=g2.1).map(move |b| (a, b)))
            .collect();
        let points = pairs
            .par_iter()
            .map(|&gammas| optimize::evaluate_point(spec.caps, gammas, spec.probs, dp))
            .collect::<Result<Vec<_>, _>>()
            .map_err(lib_error)?;
        let csv = optimize::surface_csv(&points);
        match &spec.output {
            Some(base) => {
                let path = sweep_output_path(base, dp, multiple);
                std::fs::write(&path, csv).map_err(|e| {
                    CliError::Internal(format!("cannot write {}: {e}", path.display()))
                })?;
                println!(
                    "wrote {} ({} points, delta' = {dp})",
                    path.display(),
                    pairs.len()
                );
            }
            None => print!("{csv}"),
        }
    }
    Ok(())
}

struct VerifyReport {
    lines: String,
    failures: usize,
}

impl VerifyReport {
    fn new() -> Self {
        Self {
            lines: String::new(),
            failures: 0,
        }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            let _ = writeln!(self.lines, "PASS {name}: {detail}");
        } else {
            self.failures += 1;
            let _ = writeln!(self.lines, "FAIL {name}: {detail}");
        }
    }

    fn skip(&mut self, name: &str, why: &str) {
        let _ = writeln!(self.lines, "SKIP {name}: {why}");
    }
}

fn run_verify(spec: &RunSpec) -> Result<(), CliError> {
    let mut report = VerifyReport::new();
    let horizon = spec.horizon.unwrap_or(100_000);
    let dp = spec.delta_prime();
    let probs = spec.probs;
    let (cap1, cap2) = spec.caps;

    // Threshold sweeps are capped at 10 per node so the suite stays within
    // its CI budget even for large batteries.
    let sweep1 = cap1.min(10);
    let sweep2 = cap2.min(10);

    // Uniform occupancy over the threshold grid whenever both
    // exclusive-harvest probabilities are positive.
    if probs.p01() > 0.0 && probs.p10() > 0.0 {
        let mut worst: f64 = 0.0;
        for gamma1 in 1..=sweep1 {
            for gamma2 in 1..=sweep2 {
                let config = NetworkConfig::new(spec.caps, (gamma1, gamma2), dp, probs)
                    .map_err(lib_error)?;
                let steady = solve_steady_state(&build_chain(&config)).map_err(lib_error)?;
                let uniform = 1.0 / config.state_count() as f64;
                for i in 0..gamma1 {
                    for j in 0..gamma2 {
                        worst = worst.max((steady.get(i, j) - uniform).abs());
                    }
                }
            }
        }
        report.check(
            "uniform steady state",
            worst <= 1e-9,
            format!("max deviation {worst:.3e} over the [1,{sweep1}] x [1,{sweep2}] grid"),
        );
    } else {
        report.skip(
            "uniform steady state",
            "law has an exclusive-harvest probability of zero",
        );
    }

    // The dispatched analytic value against chain accounting at the sweep
    // corner.
    {
        let config =
            NetworkConfig::new(spec.caps, (sweep1, sweep2), dp, probs).map_err(lib_error)?;
        let analytic = analytic::throughput(&config).map_err(lib_error)?;
        let steady = solve_steady_state(&build_chain(&config)).map_err(lib_error)?;
        let accounted = stationary_throughput(&steady, &config).map_err(lib_error)?;
        let gap = (analytic.r1 - accounted.r1)
            .abs()
            .max((analytic.r2 - accounted.r2).abs());
        report.check(
            "analytic vs chain accounting",
            gap <= 1e-9,
            format!("per-node gap {gap:.3e} at gammas ({sweep1}, {sweep2})"),
        );
    }

    // Monte Carlo agreement at three representative threshold pairs.
    {
        let pairs = [
            (1, 1),
            (sweep1.div_ceil(2), sweep2.div_ceil(2)),
            (sweep1, sweep2),
        ];
        let mut worst_sigma: f64 = 0.0;
        let mut worst_re: f64 = 0.0;
        for (index, gammas) in pairs.iter().enumerate() {
            let config = NetworkConfig::new(spec.caps, *gammas, dp, probs).map_err(lib_error)?;
            let analytic = analytic::throughput(&config).map_err(lib_error)?;
            let sim_config =
                SimulationConfig::new(horizon, spec.seed.wrapping_add(index as u64), config)
                    .map_err(lib_error)?;
            let result = sim::run(&sim_config);
            for (sim_value, exact, se) in [
                (result.report.r1, analytic.r1, result.stderr1),
                (result.report.r2, analytic.r2, result.stderr2),
            ] {
                if let Some(se) = se {
                    if se > 0.0 {
                        worst_sigma = worst_sigma.max((sim_value - exact).abs() / se);
                    }
                }
                if exact != 0.0 {
                    worst_re = worst_re.max(((exact - sim_value) / exact * 100.0).abs());
                }
            }
        }
        report.check(
            "simulation agreement",
            worst_sigma <= 3.0 && worst_re <= 2.0,
            format!(
                "worst deviation {worst_sigma:.2} sigma, worst |%RE| {worst_re:.3} \
                 over {} pairs at horizon {horizon}",
                pairs.len()
            ),
        );
    }

    // Closed form against exhaustive search in the laws' own regimes.
    if probs.p00() == 0.0 && probs.p11() == 0.0 && probs.p10() > 0.0 && probs.p01() > 0.0 {
        let closed = negative_corr_optimum(spec.caps, probs.p10(), dp);
        let search = exhaustive_search(spec.caps, probs, dp).map_err(lib_error)?;
        report.check(
            "closed form vs search",
            closed.ties == search.ties,
            format!("closed {:?} vs search {:?}", closed.ties, search.ties),
        );
    } else if probs.p10() == 0.0 && probs.p01() == 0.0 {
        match closed_form_for(spec)? {
            Some(closed) => {
                let search = exhaustive_search(spec.caps, probs, dp).map_err(lib_error)?;
                // Asymptotic rules may leave the exact optimum at moderate
                // SNR; agreement is informational here.
                let agree = closed.ties == search.ties;
                let _ = writeln!(
                    report.lines,
                    "INFO closed form vs search: {} (closed {:?}, search {:?})",
                    if agree { "agree" } else { "differ" },
                    closed.ties,
                    search.ties
                );
            }
            None => report.skip("closed form vs search", "equal capacities are ambiguous"),
        }
    } else {
        report.skip("closed form vs search", "no closed form for this law");
    }

    // Bit-for-bit reproducibility of the simulator.
    {
        let config = NetworkConfig::new(spec.caps, spec.caps, dp, probs).map_err(lib_error)?;
        let sim_config =
            SimulationConfig::new(horizon.min(100_000), spec.seed, config).map_err(lib_error)?;
        let analytic = analytic::throughput(&config).map_err(lib_error)?;
        let row = |cfg: &SimulationConfig| {
            let result = sim::run(cfg);
            let vs = sim::compare(&result, &analytic);
            sim::csv_row(cfg, &result, &vs)
        };
        let identical = row(&sim_config) == row(&sim_config);
        let other = sim_config.with_seed(sim_config.seed().wrapping_add(1));
        let distinct = row(&sim_config) != row(&other);
        report.check(
            "determinism",
            identical && distinct,
            format!(
                "same seed identical: {identical}, different seed distinct: {distinct}"
            ),
        );
    }

    print!("{}", report.lines);
    if report.failures > 0 {
        println!("{} check(s) failed", report.failures);
        return Err(CliError::Verification);
    }
    println!("all checks passed");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_keeps_six_significant_digits() {
        assert_eq!(sig6(1.5452942420183158), "1.54529");
        assert_eq!(sig6(0.0001234567), "0.000123457");
        assert_eq!(sig6(123456.789), "123457");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn sweep_paths_embed_the_delta_value() {
        let base = PathBuf::from("out/surface.csv");
        assert_eq!(sweep_output_path(&base, 5.0, false), base);
        assert_eq!(
            sweep_output_path(&base, 0.04, true),
            PathBuf::from("out/surface.dp0.04.csv")
        );
    }
}
