use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sgr::scenario::{parse_scenario_str, run_pipeline, scenario_hash, Command, FixAt};

/// Safety-guaranteed coordination regions: simulate, certify, optimize, verify, slice, sweep.
#[derive(Parser, Debug)]
#[command(name = "sgr", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the scenario's `outputs`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling seed; defaults to a hash of the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// 1-based agent for `slice`.
    #[arg(long)]
    slice_agent: Option<usize>,
    /// Two 1-based state coordinates for `slice`, e.g. `1,2`.
    #[arg(long, value_delimiter = ',')]
    slice_dims: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    fix_at: Option<FixAtArg>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum FixAtArg {
    Formation,
    Initial,
}

fn run(cli: Cli) -> sgr::Result<bool> {
    let text = std::fs::read_to_string(&cli.config)?;
    let mut cfg = parse_scenario_str(&text)?;
    cfg.apply_env()?;
    if let Some(a) = cli.slice_agent {
        cfg.slice.agent = a;
    }
    if let Some(d) = cli.slice_dims {
        let [a, b] = d[..] else {
            return Err(sgr::Error::Config("--slice-dims takes two coordinates, e.g. 1,2".into()));
        };
        cfg.slice.dims = [a, b];
    }
    if let Some(f) = cli.fix_at {
        cfg.slice.fix_at = match f {
            FixAtArg::Formation => FixAt::Formation,
            FixAtArg::Initial => FixAt::Initial,
        };
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or_else(|| scenario_hash(&text));
    let out = cli.out.unwrap_or_else(|| cfg.outputs.clone());
    let summary = run_pipeline(cli.command, &cfg, &out, seed)?;
    println!("{}", summary.message);
    for f in &summary.files {
        println!("  wrote {}", f.display());
    }
    Ok(summary.ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
