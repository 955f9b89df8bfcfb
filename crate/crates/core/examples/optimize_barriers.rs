//! Alternating barrier optimization on the two-agent line scenario.

use std::path::Path;

use sgr::scenario::{optimize_scenario, parse_scenario, Scenario};

fn main() -> sgr::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/two_agent.json");
    let cfg = parse_scenario(&path)?;
    let Scenario::Agents(s) = cfg.build()? else {
        unreachable!("agent scenario");
    };
    let (out, model) = optimize_scenario(&s, &cfg)?;
    println!("model has {} variables, W = {}", model.num_vars(), model.w);
    println!("iteration  trace(W)   c");
    for (k, (t, c)) in out.traces.iter().zip(&out.levels).enumerate() {
        println!("{k:>9}  {t:.6}  {c:.6}");
    }
    println!("kappa = c / trace: {:.6} (fixed barrier {:.6})", out.kappa, out.baseline_kappa);
    println!("connectivity barrier: {}", out.barriers.connectivity.poly);
    for d in &out.diagnostics {
        println!("note: {d}");
    }
    Ok(())
}
