use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use byzagg::config::{set_path, ExperimentConfig};
use byzagg::experiment::{run_experiment, RunOptions};
use byzagg::report::{self, format_table, summarize, summarize_csv};
use byzagg::selftest::{self, SelftestOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "byzagg", version, about = "Private Byzantine-robust federated training simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every rule and seed of a TOML experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Record wall-clock time per epoch (makes CSVs differ between runs).
        #[arg(long)]
        timing: bool,
    },
    /// Repeat an experiment for several values of one dotted parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted path into the config, e.g. `protocol.n` or `attack.kind`.
        #[arg(long)]
        param: String,
        #[arg(long, num_args = 1.., required = true)]
        values: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        timing: bool,
    },
    /// Mean ± std of the best accuracy per CSV file.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        csv: Vec<PathBuf>,
    },
    /// Run the acceptance checks.
    Selftest {
        #[arg(long, default_value = "selftest_out")]
        out: PathBuf,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Smaller trial counts; not evidence for the criteria.
        #[arg(long)]
        quick: bool,
        /// Only these checks (1 to 9).
        #[arg(long, num_args = 1..)]
        only: Vec<usize>,
    },
}

fn seed_override(cfg: &mut ExperimentConfig) -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var("BYZAGG_SEED") {
        let seed = raw.trim().parse().with_context(|| format!("BYZAGG_SEED={raw:?} is not an integer"))?;
        cfg.seeds = vec![seed];
    }
    Ok(())
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var("BYZAGG_THREADS") {
        let threads: usize = raw.trim().parse().with_context(|| format!("BYZAGG_THREADS={raw:?} is not an integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn run_and_write(mut cfg: ExperimentConfig, out: &std::path::Path, timing: bool) -> anyhow::Result<()> {
    seed_override(&mut cfg)?;
    log::info!("running {} ({} rules x {} seeds)", cfg.name, cfg.rules.len(), cfg.seeds.len());
    let result = run_experiment(&cfg, &RunOptions { timing })?;
    let paths = report::write_outputs(out, &result)?;
    let summary = summarize(&result);
    print!("{}", format_table(&summary.rules));
    for p in paths {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.command {
        Command::Run { config, out, timing } => {
            run_and_write(ExperimentConfig::load(&config)?, &out, timing)?;
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
            timing,
        } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let base: toml::Value = toml::from_str(&text)?;
            for raw in &values {
                let mut tree = base.clone();
                set_path(&mut tree, &param, raw)?;
                let mut cfg = ExperimentConfig::from_toml_value(tree)?;
                let tag: String = raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
                cfg.name = format!("{}_{}={tag}", cfg.name, param.replace('.', "_"));
                println!("== {param} = {raw}");
                run_and_write(cfg, &out, timing)?;
            }
        }
        Command::Report { csv } => {
            let rows = csv.iter().map(|p| summarize_csv(p)).collect::<Result<Vec<_>, _>>()?;
            print!("{}", format_table(&rows));
        }
        Command::Selftest { out, seed, quick, only } => {
            if let Some(bad) = only.iter().find(|&&i| !(1..=selftest::NAMES.len()).contains(&i)) {
                bail!("no check numbered {bad}");
            }
            let opts = SelftestOptions { out_dir: out, seed, quick, only };
            let outcomes = selftest::run_all(&opts)?;
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
