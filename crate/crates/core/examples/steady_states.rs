//! Steady states of learning across the memory-loss parameter alpha.

use auction_ewa::action::{self, SteadyStateOptions};
use auction_ewa::fp::LearningParams;
use auction_ewa::{GameModel, GameParams};

fn main() -> auction_ewa::Result<()> {
    let model = GameModel::new(GameParams::symmetric(0.3, 0.2))?;
    let opts = SteadyStateOptions::default();
    for alpha in [0.01, 0.05, 0.067, 0.0728, 0.1] {
        let s = action::solve_steady_state(&model, LearningParams { r: 0.0, alpha, beta: 1.0 / 0.11 }, &opts)?;
        let peaks: Vec<String> = s.peaks[0].iter().map(|p| format!("{}:{:.3}", p.role.name(), p.weight)).collect();
        println!("alpha={alpha:<7} {:<20} pbar1={:.4} peaks [{}]", s.kind.name(), s.aggregates.pbar_1, peaks.join(", "));
    }
    Ok(())
}
