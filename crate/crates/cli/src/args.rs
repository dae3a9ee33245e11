//! Command-line parsing and validation into a [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "epca", version, about = "epsilon-PCA generalization error: curves, phase diagrams, optimal rank and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Empirical and asymptotic GE for every rank.
    GeCurve(CommonArgs),
    /// Analytic and brute-force regimes on an (alpha, eps) grid.
    PhaseDiagram(CommonArgs),
    /// Closed-form optimal rank as JSON.
    OptimalRank(CommonArgs),
    /// Run the invariant checklist.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Visible dimension N_V.
    #[arg(long = "nv", default_value_t = 64)]
    pub n_v: usize,
    /// Number of samples D per dataset.
    #[arg(long = "d", default_value_t = 96)]
    pub d_samples: usize,
    /// Noise floor for discarded directions.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub eps: f64,
    /// Number of Monte-Carlo datasets.
    #[arg(long, default_value_t = 800)]
    pub realizations: usize,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub alpha_min: f64,
    #[arg(long, default_value_t = 0.95, allow_negative_numbers = true)]
    pub alpha_max: f64,
    #[arg(long, default_value_t = 22)]
    pub alpha_steps: usize,
    #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
    pub eps_min: f64,
    #[arg(long, default_value_t = 0.98, allow_negative_numbers = true)]
    pub eps_max: f64,
    #[arg(long, default_value_t = 22)]
    pub eps_steps: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Bound for every numerical identity check.
    #[arg(long, default_value_t = 1e-10, allow_negative_numbers = true)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubcommandName {
    GeCurve,
    PhaseDiagram,
    OptimalRank,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

/// Validated run configuration; serialized into every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: SubcommandName,
    pub n_v: usize,
    pub d_samples: usize,
    pub eps: f64,
    pub realizations: usize,
    pub seed: u64,
    pub alpha_grid: GridRange,
    pub eps_grid: GridRange,
    pub output_path: Option<PathBuf>,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl RunConfig {
    pub fn alpha(&self) -> f64 {
        self.n_v as f64 / self.d_samples as f64
    }
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn check_range(name: &str, g: &GridRange, lo: f64, hi: f64) -> Result<(), CliError> {
    if !(g.min.is_finite() && g.max.is_finite()) {
        return Err(usage(format!("--{name}-min and --{name}-max must be finite")));
    }
    if !(g.min > lo && g.max < hi) {
        return Err(usage(format!("--{name}-min/--{name}-max must lie in ({lo}, {hi})")));
    }
    if g.min > g.max {
        return Err(usage(format!("--{name}-min {} exceeds --{name}-max {}", g.min, g.max)));
    }
    if g.steps == 0 {
        return Err(usage(format!("--{name}-steps must be at least 1")));
    }
    Ok(())
}

/// Validates every numeric parameter before any computation starts.
pub fn validate(command: &Command) -> Result<RunConfig, CliError> {
    let (name, a, tolerance) = match command {
        Command::GeCurve(a) => (SubcommandName::GeCurve, a, None),
        Command::PhaseDiagram(a) => (SubcommandName::PhaseDiagram, a, None),
        Command::OptimalRank(a) => (SubcommandName::OptimalRank, a, None),
        Command::Verify(v) => (SubcommandName::Verify, &v.common, Some(v.tolerance)),
    };
    if a.n_v == 0 {
        return Err(usage("--nv must be at least 1".into()));
    }
    if a.d_samples <= a.n_v {
        return Err(usage(format!("--d ({}) must exceed --nv ({})", a.d_samples, a.n_v)));
    }
    if !(a.eps > 0.0) || !a.eps.is_finite() {
        return Err(usage(format!("--eps must be finite and > 0, got {}", a.eps)));
    }
    if a.realizations == 0 {
        return Err(usage("--realizations must be at least 1".into()));
    }
    let alpha_grid = GridRange { min: a.alpha_min, max: a.alpha_max, steps: a.alpha_steps };
    let eps_grid = GridRange { min: a.eps_min, max: a.eps_max, steps: a.eps_steps };
    check_range("alpha", &alpha_grid, 0.0, 1.0)?;
    check_range("eps", &eps_grid, 0.0, f64::INFINITY)?;
    if let Some(t) = tolerance {
        if !(t > 0.0) || !t.is_finite() {
            return Err(usage(format!("--tolerance must be finite and > 0, got {t}")));
        }
    }
    Ok(RunConfig {
        subcommand: name,
        n_v: a.n_v,
        d_samples: a.d_samples,
        eps: a.eps,
        realizations: a.realizations,
        seed: a.seed,
        alpha_grid,
        eps_grid,
        output_path: a.out.clone(),
        format: a.format,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        let cli = Cli::try_parse_from(std::iter::once("epca").chain(args.iter().copied())).unwrap();
        validate(&cli.command)
    }

    #[test]
    fn defaults() {
        let cfg = parse(&["ge-curve"]).unwrap();
        assert_eq!((cfg.n_v, cfg.d_samples, cfg.eps, cfg.realizations), (64, 96, 0.5, 800));
        assert_eq!(cfg.alpha_grid, GridRange { min: 0.05, max: 0.95, steps: 22 });
        assert_eq!(cfg.eps_grid, GridRange { min: 0.02, max: 0.98, steps: 22 });
        assert_eq!(cfg.format, Format::Csv);
        assert_eq!(cfg.tolerance, None);
        assert!((cfg.alpha() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(parse(&["verify"]).unwrap().tolerance, Some(1e-10));
    }

    #[test]
    fn rejects_bad_values() {
        for args in [
            &["ge-curve", "--eps", "0"][..],
            &["ge-curve", "--eps", "-1"],
            &["ge-curve", "--eps", "nan"],
            &["ge-curve", "--nv", "0"],
            &["ge-curve", "--nv", "10", "--d", "10"],
            &["ge-curve", "--realizations", "0"],
            &["phase-diagram", "--alpha-min", "0"],
            &["phase-diagram", "--alpha-max", "1"],
            &["phase-diagram", "--alpha-min", "0.6", "--alpha-max", "0.5"],
            &["phase-diagram", "--eps-steps", "0"],
            &["phase-diagram", "--eps-min", "-0.1"],
            &["verify", "--tolerance", "0"],
        ] {
            assert!(matches!(parse(args), Err(CliError::Usage(_))), "{args:?}");
        }
    }
}
