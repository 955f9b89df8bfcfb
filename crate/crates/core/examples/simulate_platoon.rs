//! Closed-loop simulation of the three-car platoon scenario.
//!
//! `cargo run --release --example simulate_platoon [out.csv]`

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use sgr::dynamics::{simulate, SimOptions};
use sgr::scenario::{parse_scenario, Scenario};

fn main() -> sgr::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/platoon.json");
    let cfg = parse_scenario(&path)?;
    let Scenario::Agents(s) = cfg.build()? else {
        unreachable!("the platoon is an agent scenario");
    };
    let opts = SimOptions {
        record_every: 100,
        ..cfg.sim.clone()
    };
    let traj = simulate(&s.system, &s.initial, &opts)?;

    let min_dist = traj.records.iter().map(|r| r.min_dist).fold(f64::INFINITY, f64::min);
    let min_l2 = traj.records.iter().map(|r| r.lambda2).fold(f64::INFINITY, f64::min);
    println!("termination: {:?}", traj.termination);
    println!("min distance {min_dist:.3} (d_s = {}), min lambda2 {min_l2:.3}", s.system.geometry.d_s);
    println!("{} edge events, first violation {:?}", traj.edge_events.len(), traj.first_violation);
    println!("W at start {:.3}, at end {:.3e}", traj.records[0].w, traj.records.last().unwrap().w);
    if let Some(mu) = s.mu_max {
        println!("energy cap {mu:.2}");
    }

    if let Some(out) = std::env::args().nth(1) {
        traj.write_csv(BufWriter::new(File::create(&out)?))?;
        println!("wrote {out}");
    }
    Ok(())
}
