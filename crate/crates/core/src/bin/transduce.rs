use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use transduce::config::RawConfig;
use transduce::experiments::{
    default_config_text, parse_grid, run_experiment, sweep, validate_config, EXPERIMENTS,
};
use transduce::{Error, Result};

#[derive(Parser)]
#[command(
    name = "transduce",
    version,
    about = "Rydberg-EIT microwave-to-optical transduction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a bundled experiment and write its CSVs and summary.
    Run {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate an experiment over a grid of one numeric config field.
    Sweep {
        name: String,
        /// Config field as section.key, in the file's unit.
        #[arg(long)]
        axis: String,
        /// lin:a:b:n, log:a:b:n or a comma-separated list.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and check a config file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn config_text(name: &str, path: Option<&Path>) -> Result<(String, String)> {
    let bundled = default_config_text(name)?;
    Ok(match path {
        Some(p) => (read(p)?, p.display().to_string()),
        None => (bundled.to_string(), "bundled".to_string()),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            name,
            config,
            out,
            seed,
        } => {
            let (text, source) = config_text(&name, config.as_deref())?;
            let mut cfg = RawConfig::parse(&text)?.build()?;
            if let Some(s) = seed {
                cfg.statistics.seed = s;
            }
            let result = run_experiment(&name, &cfg)?;
            result.write(&out, &source)?;
            for r in &result.summary {
                let status = match r.passed() {
                    None => "report",
                    Some(true) => "pass",
                    Some(false) => "FAIL",
                };
                let reference = r.reference.map(|v| format!("{v}")).unwrap_or_default();
                println!(
                    "{status:>6}  {:<40} {:>14.6e}  {reference:>10} {}",
                    r.name, r.engine, r.check
                );
            }
            Ok(result.passed())
        }
        Command::Sweep {
            name,
            axis,
            grid,
            config,
            out,
            seed,
        } => {
            let (text, _) = config_text(&name, config.as_deref())?;
            let raw = RawConfig::parse(&text)?;
            let grid = parse_grid(&grid)?;
            let table = sweep(&name, &raw, &axis, &grid, seed)?;
            create_dir(&out)?;
            let path = out.join(format!("{}.csv", table.name));
            table.write(&path)?;
            println!("{} rows -> {}", table.rows.len(), path.display());
            Ok(true)
        }
        Command::Validate { config } => {
            let cfg = validate_config(&read(&config)?)?;
            println!(
                "ok: d_M = {:e}, rho33 d_M = {:.1}, d_L = {:.1}, T_p = {:e} s",
                cfg.ensemble.d_m,
                cfg.effective_mw_od(),
                cfg.ensemble.d_l,
                cfg.pulse.fwhm
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("TRANSDUCE_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    eprintln!("warning: {e}");
                }
            }
            _ => eprintln!("warning: ignoring TRANSDUCE_THREADS={n}"),
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::UnknownExperiment { .. } | Error::Usage(_))) => {
            eprintln!("error: {e}");
            eprintln!(
                "usage: transduce run <{}> [--config PATH] [--out DIR] [--seed N]",
                EXPERIMENTS.join("|")
            );
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
