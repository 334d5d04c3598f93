//! Nash equilibria of the two-market game for one parameter point.

use auction_ewa::nash;
use auction_ewa::{GameModel, GameParams};

fn main() -> auction_ewa::Result<()> {
    let model = GameModel::new(GameParams::symmetric(0.3, 0.2))?;
    for eq in nash::find_equilibria(&model, nash::DEFAULT_GRID_N) {
        println!(
            "{:<38} pbar1={:.4} pbar2={:.4}",
            eq.kind.name(),
            eq.aggregates.pbar_1,
            eq.aggregates.pbar_2
        );
    }
    Ok(())
}
