//! Runs one pipeline command on a scenario file, as the `sgr` binary does.
//!
//! `cargo run --release --example scenario_pipeline -- verify scenarios/toy_1d.json out/toy`

use std::path::PathBuf;

use sgr::scenario::{parse_scenario_str, run_pipeline, scenario_hash, Command};

fn main() -> sgr::Result<()> {
    let mut args = std::env::args().skip(1);
    let cmd = match args.next().as_deref().unwrap_or("certify") {
        "simulate" => Command::Simulate,
        "certify" => Command::Certify,
        "optimize" => Command::Optimize,
        "verify" => Command::Verify,
        "slice" => Command::Slice,
        "sweep" => Command::Sweep,
        other => return Err(sgr::Error::Config(format!("unknown command {other}"))),
    };
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = args.next().map(PathBuf::from).unwrap_or_else(|| root.join("scenarios/toy_1d.json"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("sgr-example"));

    let text = std::fs::read_to_string(&config)?;
    let mut cfg = parse_scenario_str(&text)?;
    cfg.apply_env()?;
    let summary = run_pipeline(cmd, &cfg, &out, scenario_hash(&text))?;
    println!("{} (ok: {})", summary.message, summary.ok);
    for f in summary.files {
        println!("  {}", f.display());
    }
    Ok(())
}
