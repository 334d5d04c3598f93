//! One-round jump statistics of a learning agent compared with the drift and
//! diffusion used by the Fokker-Planck description.

use auction_ewa::fp::{AttractionState, LearningParams, SingleAgent};
use auction_ewa::sim::sample_jump_moments;
use auction_ewa::{Aggregates, Class, GameModel, GameParams};

fn main() -> auction_ewa::Result<()> {
    let model = GameModel::new(GameParams::symmetric(0.3, 0.2))?;
    let aggr = Aggregates::symmetric(0.42);
    let learning = LearningParams { r: 0.01, alpha: 0.07, beta: 1.0 / 0.11 };
    let state = AttractionState::new(0.5, 0.3);
    let est = sample_jump_moments(&model, Class::One, aggr, learning, state, 200_000, 7)?;
    let agent = SingleAgent::new(&model, Class::One, aggr, learning);
    let mu = agent.drift(state.to_array());
    let d = agent.diffusion(state.to_array());
    for i in 0..2 {
        println!("drift_{}: {:.5} +- {:.5} (predicted {:.5})", i + 1, est.drift[i], est.drift_se[i], mu[i]);
    }
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        println!(
            "diffusion_{}{}: {:.5} +- {:.5} (predicted {:.5})",
            i + 1,
            j + 1,
            est.second_moment[i][j],
            est.second_moment_se[i][j],
            d[i][j]
        );
    }
    Ok(())
}
