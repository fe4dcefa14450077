use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use groto::config::{BranchSwitch, RunConfig, SEED_ENV};
use groto::error::{Error, Result};
use groto::{report, workflow};

#[derive(Parser)]
#[command(name = "groto", version, about = "Class-incremental source-free adaptation on synthetic embeddings")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the configuration.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Comma-separated seed list; overrides the configuration and GROTO_SEED.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic scenario files of every seed.
    Gen,
    /// Train and freeze the source model of every seed.
    Pretrain,
    /// Adapt through every target session and write the run directory.
    Adapt(AdaptArgs),
    /// Aggregate run directories into a mean ± std table.
    Report(ReportArgs),
}

#[derive(Args)]
struct AdaptArgs {
    #[arg(long)]
    disable_ptd: bool,
    #[arg(long)]
    disable_replay: bool,
    #[arg(long)]
    disable_con: bool,
    /// Label by plain prediction instead of prototypes.
    #[arg(long)]
    disable_ptfs: bool,
    #[arg(long, value_enum)]
    disable_hkpcm_branch: Option<BranchSwitch>,
    /// Run directory name; derived from the ablation switches by default.
    #[arg(long)]
    run_name: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories, each expected to hold a summary.json.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen => {
            let cfg = load_config(&cli)?;
            for path in workflow::generate(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Pretrain => {
            let cfg = load_config(&cli)?;
            for r in workflow::pretrain(&cfg)? {
                println!(
                    "seed {}: source test accuracy {:.4} -> {}",
                    r.seed,
                    r.source_test_accuracy,
                    r.checkpoint.display()
                );
            }
        }
        Command::Adapt(args) => {
            let mut cfg = load_config(&cli)?;
            let a = &mut cfg.ablation;
            a.disable_ptd |= args.disable_ptd;
            a.disable_replay |= args.disable_replay;
            a.disable_con |= args.disable_con;
            a.disable_ptfs |= args.disable_ptfs;
            if let Some(b) = args.disable_hkpcm_branch {
                a.disable_hkpcm_branch = b;
            }
            let name = args.run_name.clone().unwrap_or_else(|| cfg.ablation.run_name());
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(Error::config("run_name", format!("not a plain directory name: {name:?}")));
            }
            for r in workflow::adapt(&cfg, &name)? {
                let s = &r.summary;
                let per_session: Vec<String> =
                    s.session_accuracy.iter().map(|a| format!("{:.4}", a)).collect();
                println!(
                    "seed {}: final accuracy {:.4} (sessions {}) -> {}",
                    r.seed,
                    s.final_accuracy,
                    per_session.join(" "),
                    r.run_dir.display()
                );
            }
        }
        Command::Report(args) => {
            let (summaries, missing) = report::collect_summaries(&args.runs)?;
            if !summaries.is_empty() {
                let rows = report::aggregate(&summaries);
                print!("{}", report::aggregate_text(&rows));
                if let Some(path) = &args.csv {
                    std::fs::write(path, report::aggregate_csv(&rows))
                        .map_err(|e| Error::io(path, e))?;
                }
            }
            if !missing.is_empty() {
                return Err(Error::Incomplete(missing));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
