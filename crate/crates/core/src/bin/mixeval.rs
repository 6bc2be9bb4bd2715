//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration error, 2 estimation error,
//! 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mixeval::dataset::write_survey;
use mixeval::estimation::GpsScore;
use mixeval::pipeline::{self, OutputFormat, RunConfig, Severity};
use mixeval::synthetic::{generate, ScenarioConfig, PACKAGED_SCENARIOS};
use mixeval::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mixeval",
    version,
    about = "Policy-mix evaluation with propensity-score matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write result tables and a manifest.
    Run(RunArgs),
    /// Check a configuration and its input without estimating anything.
    Validate(RunArgs),
    /// Write a synthetic survey file with known treatment effects.
    GenerateSynthetic(SyntheticArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Delimited,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gps {
    Conditional,
    Marginal,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags below override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Area threshold for one state, as STATE=SQUARE_METRES; repeatable.
    #[arg(long = "threshold", value_name = "STATE=AREA")]
    thresholds: Vec<String>,
    /// Comma-separated contrast ids.
    #[arg(long, value_delimiter = ',')]
    contrasts: Option<Vec<u8>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    min_successful: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also estimate below and above the farm-size split.
    #[arg(long, overrides_with = "no_subgroups")]
    subgroups: bool,
    #[arg(long)]
    no_subgroups: bool,
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    #[arg(long, value_enum)]
    gps: Option<Gps>,
}

#[derive(Args)]
struct SyntheticArgs {
    /// Packaged scenario name or path to a scenario TOML file.
    #[arg(long, default_value = "default")]
    scenario: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Destination CSV.
    #[arg(short, long)]
    output: PathBuf,
    /// Optional JSON file for the per-contrast true effects.
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let missing =
                |flag: &str| Error::Config(format!("--{flag} is required without --config"));
            RunConfig::new(
                args.input.clone().ok_or_else(|| missing("input"))?,
                args.output_dir
                    .clone()
                    .ok_or_else(|| missing("output-dir"))?,
            )
        }
    };
    if let Some(p) = &args.input {
        config.input = p.clone();
    }
    if let Some(p) = &args.output_dir {
        config.output_dir = p.clone();
    }
    for t in &args.thresholds {
        let (state, area) = t
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("threshold `{t}` is not STATE=AREA")))?;
        let area: f64 = area
            .parse()
            .map_err(|_| Error::Config(format!("threshold `{t}` has a non-numeric area")))?;
        config
            .filter
            .area_threshold_by_state
            .insert(state.to_string(), area);
    }
    if let Some(c) = &args.contrasts {
        config.contrasts = c.clone();
    }
    if let Some(r) = args.replicates {
        config.bootstrap.replicates = r;
    }
    if let Some(m) = args.min_successful {
        config.bootstrap.min_successful = m;
    }
    if let Some(s) = args.seed {
        config.bootstrap.seed = s;
    }
    if args.subgroups {
        config.subgroups = true;
    }
    if args.no_subgroups {
        config.subgroups = false;
    }
    if let Some(f) = &args.format {
        config.formats = f
            .iter()
            .map(|f| match f {
                Format::Text => OutputFormat::Text,
                Format::Delimited => OutputFormat::Delimited,
            })
            .collect();
    }
    if let Some(g) = args.gps {
        config.gps = match g {
            Gps::Conditional => GpsScore::Conditional,
            Gps::Marginal => GpsScore::Marginal,
        };
    }
    Ok(config)
}

fn run(args: &RunArgs) -> Result<()> {
    let config = build_config(args)?;
    let report = pipeline::run(&config)?;
    let rows: Vec<_> = report.att_rows().collect();
    let skipped = rows.iter().filter(|r| r.estimate.is_none()).count();
    println!(
        "wrote {} files to {} ({} ATT rows, {} non-calculable)",
        report.files.len(),
        config.output_dir.display(),
        rows.len(),
        skipped
    );
    Ok(())
}

fn validate(args: &RunArgs) -> Result<()> {
    let config = build_config(args)?;
    let findings = pipeline::validate(&config);
    for f in &findings {
        let tag = match f.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        println!("{tag}: {}", f.message);
    }
    match findings
        .iter()
        .filter(|f| f.severity == Severity::Error)
        .count()
    {
        0 => {
            if findings.is_empty() {
                println!("configuration is valid");
            }
            Ok(())
        }
        n => Err(Error::Config(format!("{n} problem(s) found"))),
    }
}

fn load_scenario(name: &str) -> Result<ScenarioConfig> {
    if PACKAGED_SCENARIOS.iter().any(|(n, _)| *n == name) {
        ScenarioConfig::packaged(name)
    } else {
        ScenarioConfig::load(Path::new(name))
    }
}

fn generate_synthetic(args: &SyntheticArgs) -> Result<()> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(n) = args.n {
        scenario.n = n;
    }
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    let data = generate(&scenario)?;
    write_survey(std::fs::File::create(&args.output)?, &data.records)?;
    if let Some(path) = &args.truth {
        let json = serde_json::to_string_pretty(&data.truth)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        std::fs::write(path, json + "\n")?;
    }
    println!(
        "wrote {} records to {}",
        data.records.len(),
        args.output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Validate(a) => validate(a),
        Command::GenerateSynthetic(a) => generate_synthetic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
