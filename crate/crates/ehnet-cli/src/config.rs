//! Flag and config-file handling: everything merges into a [`RunSpec`].
//!
//! A JSON config file may supply any field; command-line flags override it.
//! Missing required fields are usage errors (exit 2); present-but-invalid
//! values are validation errors (exit 3).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ehnet::HarvestProbabilities;
use serde::Deserialize;

use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "ehnet",
    version,
    about = "Throughput analysis of a two-node energy-harvesting random-access network"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Analytic throughput for one threshold pair (model auto-dispatched)
    Analytic {
        #[command(flatten)]
        common: CommonArgs,
        /// Also dump the chain transition matrix as CSV to this path
        #[arg(long, value_name = "FILE")]
        dump_chain: Option<PathBuf>,
    },
    /// Monte Carlo run plus error metrics against the analytic value
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Threshold search over the full capacity grid
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        /// Use the regime closed form instead of exhaustive search
        #[arg(long)]
        closed_form: bool,
        /// Cross-check the closed form against exhaustive search
        #[arg(long)]
        verify: bool,
    },
    /// Objective-surface CSV over a threshold grid
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the built-in invariant suite; nonzero exit on any failure
    Verify {
        #[command(flatten)]
        common: CommonArgs,
    },
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Analytic { common, .. }
            | Command::Simulate { common }
            | Command::Optimize { common, .. }
            | Command::Sweep { common }
            | Command::Verify { common } => common,
        }
    }
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// JSON config file; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Harvest-law preset: high-negative, high-positive, or independent
    #[arg(long, value_name = "NAME", conflicts_with = "probs")]
    pub preset: Option<String>,

    /// Preset parameter p (high-negative: node 1 harvests with p;
    /// high-positive: joint harvest with p)
    #[arg(long)]
    pub p: Option<f64>,

    /// Explicit joint law: p00 p10 p01 p11
    #[arg(long, num_args = 4, value_names = ["P00", "P10", "P01", "P11"])]
    pub probs: Option<Vec<f64>>,

    /// Thresholds gamma1 gamma2
    #[arg(long, num_args = 2, value_names = ["G1", "G2"])]
    pub gammas: Option<Vec<u32>>,

    /// Battery capacities cap1 cap2
    #[arg(long, num_args = 2, value_names = ["C1", "C2"])]
    pub caps: Option<Vec<u32>>,

    /// Normalized per-quantum SNR
    #[arg(long)]
    pub delta_prime: Option<f64>,

    /// Several SNR values for a sweep (one surface file per value)
    #[arg(long, value_delimiter = ',', value_name = "D1,D2,...")]
    pub delta_primes: Option<Vec<f64>>,

    /// Simulation horizon in slots
    #[arg(long)]
    pub horizon: Option<u64>,

    /// Simulation seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Sweep range for gamma1: LO HI (inclusive; defaults to 1..cap1)
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub gamma1_range: Option<Vec<u32>>,

    /// Sweep range for gamma2: LO HI (inclusive; defaults to 1..cap2)
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub gamma2_range: Option<Vec<u32>>,

    /// Output file (stdout when omitted)
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

/// Config-file mirror of the flags.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub p: Option<f64>,
    pub probs: Option<[f64; 4]>,
    pub gammas: Option<[u32; 2]>,
    pub caps: Option<[u32; 2]>,
    pub delta_prime: Option<f64>,
    pub delta_primes: Option<Vec<f64>>,
    pub horizon: Option<u64>,
    pub seed: Option<u64>,
    pub gamma1_range: Option<[u32; 2]>,
    pub gamma2_range: Option<[u32; 2]>,
    pub output: Option<String>,
}

/// What to run, fully resolved and validated.
#[derive(Debug)]
pub struct RunSpec {
    pub kind: CommandKind,
    pub probs: HarvestProbabilities,
    pub caps: (u32, u32),
    pub gammas: Option<(u32, u32)>,
    pub delta_primes: Vec<f64>,
    pub horizon: Option<u64>,
    pub seed: u64,
    pub gamma1_range: Option<(u32, u32)>,
    pub gamma2_range: Option<(u32, u32)>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommandKind {
    Analytic { dump_chain: Option<PathBuf> },
    Simulate,
    Optimize { closed_form: bool, verify: bool },
    Sweep,
    Verify,
}

impl RunSpec {
    /// The single SNR value, for commands that take exactly one.
    pub fn delta_prime(&self) -> f64 {
        self.delta_primes[0]
    }
}

fn expand_probs(
    preset: Option<&str>,
    p: Option<f64>,
    explicit: Option<[f64; 4]>,
) -> Result<HarvestProbabilities, CliError> {
    if let Some(values) = explicit {
        return HarvestProbabilities::new(values[0], values[1], values[2], values[3])
            .map_err(|e| CliError::Validation(format!("probs: {e}")));
    }
    let preset = preset.ok_or_else(|| {
        CliError::Usage("missing harvest law: give --preset or --probs".into())
    })?;
    let p = p.unwrap_or(0.5);
    let law = match preset {
        "high-negative" => HarvestProbabilities::high_negative(p),
        "high-positive" => HarvestProbabilities::high_positive(p),
        "independent" => Ok(HarvestProbabilities::independent()),
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset '{other}'; expected high-negative, high-positive, or independent"
            )))
        }
    };
    law.map_err(|e| CliError::Validation(format!("preset parameter p: {e}")))
}

fn pair(values: Option<Vec<u32>>, file: Option<[u32; 2]>) -> Option<(u32, u32)> {
    values
        .map(|v| (v[0], v[1]))
        .or_else(|| file.map(|v| (v[0], v[1])))
}

/// Merges flags over the optional config file and applies the per-command
/// required-field rules.
pub fn resolve(command: &Command) -> Result<RunSpec, CliError> {
    let args = command.common();
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::Usage(format!("malformed config file {}: {e}", path.display()))
            })?
        }
        None => FileConfig::default(),
    };

    let explicit_probs: Option<[f64; 4]> = args
        .probs
        .as_ref()
        .map(|v| [v[0], v[1], v[2], v[3]])
        .or(file.probs);
    let preset = args.preset.as_deref().or(file.preset.as_deref());
    let probs = expand_probs(preset, args.p.or(file.p), explicit_probs)?;

    let gammas = pair(args.gammas.clone(), file.gammas);
    let caps = pair(args.caps.clone(), file.caps);
    let delta_primes: Vec<f64> = args
        .delta_primes
        .clone()
        .or_else(|| file.delta_primes.clone())
        .or_else(|| args.delta_prime.or(file.delta_prime).map(|d| vec![d]))
        .ok_or_else(|| CliError::Usage("missing --delta-prime".into()))?;
    if delta_primes.is_empty() {
        return Err(CliError::Usage("missing --delta-prime".into()));
    }

    let kind = match command {
        Command::Analytic { dump_chain, .. } => CommandKind::Analytic {
            dump_chain: dump_chain.clone(),
        },
        Command::Simulate { .. } => CommandKind::Simulate,
        Command::Optimize {
            closed_form,
            verify,
            ..
        } => CommandKind::Optimize {
            closed_form: *closed_form,
            verify: *verify,
        },
        Command::Sweep { .. } => CommandKind::Sweep,
        Command::Verify { .. } => CommandKind::Verify,
    };

    // Command-specific required fields.
    let needs_gammas = matches!(kind, CommandKind::Analytic { .. } | CommandKind::Simulate);
    if needs_gammas && gammas.is_none() {
        return Err(CliError::Usage("missing --gammas".into()));
    }
    let needs_caps = matches!(
        kind,
        CommandKind::Optimize { .. } | CommandKind::Sweep | CommandKind::Verify
    );
    if needs_caps && caps.is_none() {
        return Err(CliError::Usage("missing --caps".into()));
    }
    let horizon = args.horizon.or(file.horizon);
    if matches!(kind, CommandKind::Simulate) && horizon.is_none() {
        return Err(CliError::Usage("missing --horizon".into()));
    }
    if delta_primes.len() > 1 && !matches!(kind, CommandKind::Sweep) {
        return Err(CliError::Usage(
            "--delta-primes with several values is only valid for sweep".into(),
        ));
    }

    // Thresholds need a battery to live in: default each capacity to its
    // threshold when only thresholds were given.
    let caps = caps.or(gammas).expect("caps or gammas present by the rules above");

    Ok(RunSpec {
        kind,
        probs,
        caps,
        gammas,
        delta_primes,
        horizon,
        seed: args.seed.or(file.seed).unwrap_or(0),
        gamma1_range: pair(args.gamma1_range.clone(), file.gamma1_range),
        gamma2_range: pair(args.gamma2_range.clone(), file.gamma2_range),
        output: args
            .output
            .clone()
            .or_else(|| file.output.as_ref().map(PathBuf::from)),
    })
}
