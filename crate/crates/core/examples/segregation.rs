//! Agent-based run at full memory loss: the attraction-difference histogram
//! splits in two once the intensity of choice is high enough.

use auction_ewa::fp::LearningParams;
use auction_ewa::sim::{self, SimConfig};
use auction_ewa::stats::fit_two_gaussians;
use auction_ewa::{Class, GameParams};

fn main() -> auction_ewa::Result<()> {
    let params = GameParams::symmetric(0.3, 0.2);
    for beta in [2.0, 10.0] {
        let mut cfg = SimConfig::new(4000, params, LearningParams { r: 0.01, alpha: 1.0, beta }, 5000, 1);
        cfg.snapshot_times = vec![cfg.t_end()];
        cfg.trace_stride = 500;
        let trace = sim::simulate(&cfg)?;
        let snap = trace.snapshot(cfg.t_end(), Class::One).expect("snapshot requested");
        let fit = fit_two_gaussians(&snap.deltas)?;
        let last = trace.rows.last().expect("trace has rows");
        println!(
            "beta={beta}: pbar1={:.3} bimodal={} (D={:.2}, means {:.3} / {:.3})",
            last.pbar_1,
            fit.is_bimodal(),
            fit.ashman_d(),
            fit.means[0],
            fit.means[1]
        );
        let h = &snap.histogram;
        let peak = *h.counts.iter().max().unwrap_or(&1) as f64;
        for (k, &c) in h.counts.iter().enumerate().step_by(4) {
            let (lo, _) = h.edges(k);
            println!("  {lo:>7.3} {}", "#".repeat((40.0 * c as f64 / peak).round() as usize));
        }
    }
    Ok(())
}
