//! Alternating-optimization probe: runs a few schedules and reports
//! min(d12, d21) at the design SNR.
//!
//! Usage: alt_run [k] [rounds] [iters_per_half] [eps0] [seed] [anneal_across]

use noncoh_mac::metrics;
use noncoh_mac::optimizer::{
    alternating_optimize, ObliquePoint, OptimizerConfig, Criterion,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let k: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(32);
    let rounds: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(300);
    let eps0: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(16.0);
    let seed: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(40);
    let across: bool = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(false);

    let start = std::time::Instant::now();
    let init = ObliquePoint::random(5, k, k, seed).unwrap().to_joint(1000.0).unwrap();
    let cfg = OptimizerConfig {
        criterion: Criterion::DMin,
        epsilon: eps0,
        design_snr: 1000.0,
        max_iters: iters,
        anneal: across,
        seed,
        ..OptimizerConfig::default()
    };
    let joint = alternating_optimize(&init, &cfg, rounds).unwrap();
    let lo = metrics::d12(&joint).unwrap().min(metrics::d21(&joint).unwrap());
    let (dmin, _) = metrics::d_min(&joint).unwrap();
    println!(
        "alternating K={k} rounds={rounds} iters={iters} eps0={eps0} across={across}: min(d12,d21) = {lo:.1}, d_min = {dmin:.1} ({:?})",
        start.elapsed()
    );
}
