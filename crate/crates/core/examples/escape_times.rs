//! How long a population started in the mixed state stays near it, for a few
//! population sizes.

use auction_ewa::fp::LearningParams;
use auction_ewa::sim::{self, SimConfig};
use auction_ewa::{GameModel, GameParams};

fn main() -> auction_ewa::Result<()> {
    let model = GameModel::new(GameParams::symmetric(0.3, 0.2))?;
    let learning = LearningParams { r: 0.005, alpha: 0.068, beta: 1.0 / 0.11 };
    let start = sim::mixed_state_start(&model, learning)?;
    println!("mixed state pbar1={:.4}", start.pbar_1);
    let mut cfg = SimConfig::new(1000, model.params, learning, 80_000, 100);
    cfg.initial = start.initial;
    let times = sim::escape_time_scan(&cfg, &[1000, 4000], 3, start.pbar_1, 0.1)?;
    for t in &times {
        println!("N={:<5} seed={} exit t={:.1}{}", t.n_agents, t.seed, t.t_exit, if t.censored { " (censored)" } else { "" });
    }
    for (n, median, _) in sim::median_exit_times(&times) {
        println!("N={n}: median {median:.1}");
    }
    Ok(())
}
