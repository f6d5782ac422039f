//! `pprxdb`: equilibrium tables, ensemble simulation, verification bundles and
//! parameter sweeps over scenario files.

pub mod commands;
pub mod output;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pprx_core::LowCapVariant;

pub use commands::{execute, rerun, Execution};
pub use output::{RunManifest, MANIFEST_FILE};

#[derive(Parser, Debug, Clone)]
#[command(name = "pprxdb", version, about = "Provision-point crowdfunding with refund bonuses and belief-based rewards")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Per-agent equilibrium strategy table.
    Equilibrium(CommonArgs),
    /// Ensemble of simulated runs with ledgers and a summary.
    Simulate(SimulateArgs),
    /// Numerical verification of the equilibrium claims.
    Verify(VerifyArgs),
    /// Ensemble metrics across values of one parameter.
    Sweep(SweepArgs),
    /// Re-execute the command recorded in a manifest and compare checksums.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Master seed, or `random` to draw one (the drawn seed is recorded).
    #[arg(long, value_parser = parse_seed)]
    pub seed: Option<SeedArg>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the scenario's low-belief cap variant.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Monte Carlo runs for timing, best-response and funding checks.
    #[arg(long, default_value_t = 10_000)]
    pub runs: usize,
    /// Comma-separated claim ids, or `all`.
    #[arg(long, default_value = "all", value_parser = parse_claims)]
    pub claims: ClaimSet,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// `a,b,c` or `start:stop:step` (stop inclusive).
    #[arg(long, value_parser = parse_range)]
    pub range: SweepRange,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
}

#[derive(Args, Debug, Clone)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedArg {
    Fixed(u64),
    Random,
}

pub fn parse_seed(s: &str) -> Result<SeedArg, String> {
    if s == "random" {
        return Ok(SeedArg::Random);
    }
    s.parse().map(SeedArg::Fixed).map_err(|_| format!("expected an unsigned integer or `random`, got `{s}`"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Paper,
    Rederived,
}

impl VariantArg {
    pub fn variant(self) -> LowCapVariant {
        match self {
            VariantArg::Paper => LowCapVariant::PaperVerbatim,
            VariantArg::Rederived => LowCapVariant::Rederived,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VariantArg::Paper => "paper",
            VariantArg::Rederived => "rederived",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    #[value(name = "B_C")]
    ContributionBudget,
    #[value(name = "B_B")]
    BeliefBudget,
    #[value(name = "H0")]
    ProvisionPoint,
    #[value(name = "b0")]
    PriorBelief,
    #[value(name = "drift_gain")]
    DriftGain,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::ContributionBudget => "B_C",
            SweepParam::BeliefBudget => "B_B",
            SweepParam::ProvisionPoint => "H0",
            SweepParam::PriorBelief => "b0",
            SweepParam::DriftGain => "drift_gain",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRange(pub Vec<f64>);

pub fn parse_range(s: &str) -> Result<SweepRange, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty range".into());
    }
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: `{t}`"));
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!("expected start:stop:step, got `{s}`"));
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || stop < start {
            return Err("need step > 0 and stop >= start".into());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| start + k as f64 * step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(format!("invalid range `{s}`"));
    }
    Ok(SweepRange(values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Claim {
    Bstar,
    Indifference,
    LowMonotonicity,
    Timing,
    BestResponse,
    Funded,
}

impl Claim {
    pub const ALL: [Claim; 6] = [
        Claim::Bstar,
        Claim::Indifference,
        Claim::LowMonotonicity,
        Claim::Timing,
        Claim::BestResponse,
        Claim::Funded,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Claim::Bstar => "bstar",
            Claim::Indifference => "indifference",
            Claim::LowMonotonicity => "low_monotonicity",
            Claim::Timing => "timing",
            Claim::BestResponse => "best_response",
            Claim::Funded => "funded",
        }
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimSet(pub Vec<Claim>);

impl ClaimSet {
    pub fn ids(&self) -> String {
        self.0.iter().map(|c| c.id()).collect::<Vec<_>>().join(",")
    }
}

pub fn parse_claims(s: &str) -> Result<ClaimSet, String> {
    let valid = || {
        let mut ids: Vec<&str> = Claim::ALL.iter().map(|c| c.id()).collect();
        ids.push("all");
        ids.join(", ")
    };
    let mut claims = Vec::new();
    for token in s.split(',').map(str::trim) {
        if token == "all" {
            claims.extend(Claim::ALL);
            continue;
        }
        match Claim::ALL.iter().find(|c| c.id() == token) {
            Some(c) => claims.push(*c),
            None => return Err(format!("unknown claim `{token}`; valid ids: {}", valid())),
        }
    }
    claims.sort();
    claims.dedup();
    Ok(ClaimSet(claims))
}
