//! Command-line runner: `integrate`, `converge`, `stability-region` and `analyze`.
//!
//! Exit codes are 0 on success, 2 for configuration and I/O errors and 3 for
//! numerical failures.

pub mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, CliResult, RegionConfig};
use config::{parse_config_text, parse_nu, parse_number_list, ConfigError, Format, RawConfig, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "timefilter",
    version,
    about = "Backward Euler with a curvature-reducing time filter"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one problem and write every accepted step.
    Integrate(RunArgs),
    /// Error table over k0 * 2^-i.
    Converge(ConvergeArgs),
    /// Boundary locus and membership raster for be-filter, be and bdf2.
    StabilityRegion(RegionArgs),
    /// Coefficients, order, stability and modified-equation report for (nu, tau).
    Analyze(AnalyzeArgs),
}

/// Flags shared by `integrate` and `converge`. Flags override the config file.
#[derive(Debug, Args, Default, Clone)]
pub struct RunArgs {
    /// Flat `key = value` or JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    /// be, be-filter, oneleg, bdf2, rkf45 or adaptive.
    #[arg(long)]
    pub method: Option<String>,
    /// Filter strength, or `auto` for the second-order choice.
    #[arg(long)]
    pub nu: Option<String>,
    /// Step size (first step for ratio grids, initial step for adaptive runs).
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub tol: Option<String>,
    #[arg(long)]
    pub t0: Option<String>,
    #[arg(long)]
    pub t_end: Option<String>,
    /// constant, ratios, random or adaptive.
    #[arg(long)]
    pub grid: Option<String>,
    /// Step ratios applied cyclically, e.g. `1.5,0.8`.
    #[arg(long)]
    pub ratios: Option<String>,
    /// Seed for random-ratio grids.
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub y0: Option<String>,
    /// Problem parameter, e.g. `--param lambda=-2`. Repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Output file; stdout when absent or `-`.
    #[arg(long)]
    pub out: Option<String>,
    /// csv or json.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of halvings of k.
    #[arg(long)]
    pub levels: Option<String>,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    /// Filter strength of the be-filter region; `auto` is 2/3.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub nu: String,
    /// Samples on the boundary locus.
    #[arg(long, default_value_t = 3601)]
    pub n_points: usize,
    /// Raster box `re0,re1,im0,im1`.
    #[arg(long = "box", default_value = "-4,8,-6,6", allow_hyphen_values = true)]
    pub bbox: String,
    /// Raster samples per axis.
    #[arg(long, default_value_t = 241)]
    pub resolution: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Filter strength, or `auto`.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub nu: String,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Print JSON instead of text.
    #[arg(long)]
    pub format: Option<String>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// Flag values as a raw config; only flags that were given appear.
    pub fn flags(&self) -> CliResult<RawConfig> {
        let mut raw = RawConfig::new();
        let pairs = [
            ("problem", &self.problem),
            ("method", &self.method),
            ("nu", &self.nu),
            ("k", &self.k),
            ("tol", &self.tol),
            ("t0", &self.t0),
            ("t-end", &self.t_end),
            ("grid", &self.grid),
            ("ratios", &self.ratios),
            ("seed", &self.seed),
            ("y0", &self.y0),
            ("out", &self.out),
            ("format", &self.format),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                raw.set(key, v.as_str());
            }
        }
        for p in &self.params {
            let (name, value) = p.split_once('=').ok_or_else(|| ConfigError::BadValue {
                key: "param".into(),
                value: p.clone(),
                reason: "expected NAME=VALUE".into(),
            })?;
            raw.set(&format!("param.{}", name.trim()), value.trim());
        }
        Ok(raw)
    }

    /// Config file entries overridden by flags.
    pub fn raw_config(&self) -> CliResult<RawConfig> {
        let mut raw = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                parse_config_text(&text)?
            }
            None => RawConfig::new(),
        };
        raw.merge(&self.flags()?);
        Ok(raw)
    }
}

fn parse_levels(raw: &RawConfig, flag: Option<&str>) -> CliResult<u32> {
    match flag.or(raw.get("levels")) {
        None => Ok(6),
        Some(v) => v.trim().parse().map_err(|_| {
            ConfigError::BadValue {
                key: "levels".into(),
                value: v.into(),
                reason: "not an unsigned integer".into(),
            }
            .into()
        }),
    }
}

fn parse_box(text: &str) -> CliResult<(f64, f64, f64, f64)> {
    let v = parse_number_list(text).map_err(|reason| ConfigError::BadValue {
        key: "box".into(),
        value: text.into(),
        reason,
    })?;
    match v[..] {
        [a, b, c, d] => Ok((a, b, c, d)),
        _ => Err(ConfigError::BadValue {
            key: "box".into(),
            value: text.into(),
            reason: "expected re0,re1,im0,im1".into(),
        }
        .into()),
    }
}

fn parse_format(text: Option<&str>) -> CliResult<Option<Format>> {
    match text {
        None | Some("text") => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|reason| {
            ConfigError::BadValue {
                key: "format".into(),
                value: v.into(),
                reason,
            }
            .into()
        }),
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Integrate(args) => {
            let raw = args.raw_config()?;
            if raw.contains("levels") {
                return Err(ConfigError::Invalid("`levels` only applies to converge".into()).into());
            }
            commands::cmd_integrate(&RunConfig::from_raw(&raw)?)
        }
        Command::Converge(args) => {
            let raw = args.run.raw_config()?;
            let levels = parse_levels(&raw, args.levels.as_deref())?;
            commands::cmd_converge(&RunConfig::from_raw(&raw)?, levels)
        }
        Command::StabilityRegion(args) => {
            let rc = RegionConfig {
                nu: parse_nu(&args.nu)?.nu(1.0),
                n_points: args.n_points,
                bbox: parse_box(&args.bbox)?,
                resolution: args.resolution,
                out_dir: args.out,
            };
            commands::cmd_stability_region(&rc).map(|_| ())
        }
        Command::Analyze(args) => {
            let nu = parse_nu(&args.nu)?;
            let format = parse_format(args.format.as_deref())?;
            commands::cmd_analyze(nu, args.tau, format, args.out.as_deref())
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("timefilter: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_become_raw_entries() {
        let args = RunArgs {
            k: Some("0.2".into()),
            t_end: Some("3".into()),
            params: vec!["lambda = -4".into()],
            ..Default::default()
        };
        let raw = args.flags().unwrap();
        assert_eq!(raw.get("k"), Some("0.2"));
        assert_eq!(raw.get("t-end"), Some("3"));
        assert_eq!(raw.get("param.lambda"), Some("-4"));
        assert_eq!(raw.len(), 3);
        let bad = RunArgs {
            params: vec!["lambda".into()],
            ..Default::default()
        };
        assert!(bad.flags().is_err());
    }

    #[test]
    fn box_and_levels() {
        assert_eq!(parse_box("-4,8,-6,6").unwrap(), (-4.0, 8.0, -6.0, 6.0));
        assert!(parse_box("1,2,3").is_err());
        assert_eq!(parse_levels(&RawConfig::new(), None).unwrap(), 6);
        assert_eq!(parse_levels(&RawConfig::new(), Some("3")).unwrap(), 3);
        assert!(parse_levels(&RawConfig::new(), Some("-1")).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
