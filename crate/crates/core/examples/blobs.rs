//! Runs a session on synthetic blobs and prints metrics before and after.
//!
//! `cargo run --release -p a3s-core --example blobs -- [n] [k] [budget] [seed]`

use std::time::Instant;

use a3s::synth::{gaussian_blobs, BlobConfig};
use a3s::{Engine, SessionConfig, SimulatedOracle};

fn main() -> a3s::Result<()> {
    let args: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer argument"))
        .collect();
    let arg = |i: usize, d: u64| args.get(i).copied().unwrap_or(d);
    let (n, k, budget, seed) = (arg(0, 1000) as usize, arg(1, 20) as usize, arg(2, 600) as usize, arg(3, 0));

    let ds = gaussian_blobs(&BlobConfig::scaled(n, k, seed))?;
    let started = Instant::now();
    let mut engine = Engine::new(&ds, SessionConfig { budget, seed, ..SessionConfig::default() })?;
    let init = engine.report()?.expect("synthetic data has labels");
    println!("initial: k={} nmi={:.4} tau={:.3}", init.k, init.nmi, engine.tau());

    let mut oracle = SimulatedOracle::new(ds.labels().expect("labels").to_vec());
    let reason = engine.run(&mut oracle)?;
    let r = engine.report()?.expect("labels");
    println!(
        "final:   k={} nmi={:.4} ari={:.4} purity={:.4} upsilon={:.3} queries={} stop={reason} ({:.2?})",
        r.k,
        r.nmi,
        r.ari,
        r.purity,
        r.upsilon,
        engine.queries_used(),
        started.elapsed()
    );
    Ok(())
}
