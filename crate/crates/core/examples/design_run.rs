//! Desk-scale design run: optimize a two-user codebook and report the
//! resulting metrics at a few benchmark SNRs.
//!
//! Usage: design_run [criterion] [k_per_user] [iters] [epsilon] [anneal] [seed]

use noncoh_mac::metrics;
use noncoh_mac::optimizer::{optimize, Criterion, ObliquePoint, OptimizerConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let criterion = args
        .get(1)
        .map(|s| Criterion::parse(s).unwrap())
        .unwrap_or(Criterion::DMin);
    let k: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(32);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(300);
    let epsilon: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2.0);
    let anneal: bool = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(false);
    let seed: u64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(1);

    let init_mode = args.get(7).map(String::as_str).unwrap_or("random").to_string();

    let t = 5;
    let cfg = OptimizerConfig {
        criterion,
        epsilon,
        design_snr: 1000.0,
        max_iters: iters,
        seed,
        anneal,
        ..OptimizerConfig::default()
    };
    let init = if init_mode == "chordal" {
        // warm start: chordal packing of 2K lines, split between the users
        let pre = OptimizerConfig {
            criterion: Criterion::Chordal,
            epsilon: 0.02,
            design_snr: 1000.0,
            max_iters: 1500,
            seed,
            ..OptimizerConfig::default()
        };
        let start = std::time::Instant::now();
        let base0 = ObliquePoint::random(t, 2 * k, 0, seed).unwrap();
        let (packed, trace) = noncoh_mac::optimizer::optimize_point(&base0, &pre).unwrap();
        println!(
            "chordal warm start: obj {:.4} -> {:.4} in {:?}",
            trace.first().unwrap().objective,
            trace.last().unwrap().objective,
            start.elapsed()
        );
        let base = packed.to_codebook(1000.0).unwrap();
        let joint =
            noncoh_mac::constellation::partition(&base, noncoh_mac::constellation::PartitionStrategy::Random, seed)
                .unwrap();
        ObliquePoint::from_joint(&joint).unwrap()
    } else {
        ObliquePoint::random(t, k, k, seed).unwrap()
    };
    let start = std::time::Instant::now();
    let (joint, trace) = optimize(&init, &cfg).unwrap();
    let elapsed = start.elapsed();
    println!(
        "criterion={} K={k} iters={} accepted={} time={:.1?} ({:.0} ms/iter)",
        criterion.name(),
        iters,
        trace.len() - 1,
        elapsed,
        elapsed.as_millis() as f64 / trace.len().max(1) as f64
    );
    println!(
        "objective: first {:.4} last {:.4}  true max|corr|^2 = {:.4}",
        trace.first().unwrap().objective,
        trace.last().unwrap().objective,
        metrics::chordal_objective(&joint)
    );
    for snr_db in [10.0, 20.0, 30.0] {
        let p = 10f64.powf(snr_db / 10.0);
        let scaled = joint.with_power(p).unwrap();
        let (dmin, _) = metrics::d_min(&scaled).unwrap();
        let (mm, _) = metrics::min_mean_pllr(&scaled).unwrap();
        println!(
            "snr {snr_db:>4} dB: d_min = {dmin:>10.3}  (1/N)minE[L] = {mm:>10.3}  gap {:.2}%",
            100.0 * (mm - dmin).abs() / dmin
        );
    }
}
