//! Fixed points of one agent's learning drift with the markets frozen at the
//! Nash aggregates.

use auction_ewa::fp::{LearningParams, SingleAgent};
use auction_ewa::{nash, Class, Error, GameModel, GameParams};

fn main() -> auction_ewa::Result<()> {
    let model = GameModel::new(GameParams::symmetric(0.3, 0.2))?;
    let aggr = nash::symmetric_equilibrium(&model, 256).ok_or(Error::NoFixedPoint)?.aggregates;
    for alpha in [0.01, 0.07, 0.2] {
        let learning = LearningParams { r: 0.01, alpha, beta: 1.0 / 0.11 };
        let set = SingleAgent::new(&model, Class::One, aggr, learning).fixed_points()?;
        println!("alpha={alpha}:");
        for p in &set.points {
            println!(
                "  {:<8} delta={:+.4} p1={:.4} {:?}",
                p.role.name(),
                p.delta,
                p.choice_prob(learning.beta),
                p.stability
            );
        }
    }
    Ok(())
}
