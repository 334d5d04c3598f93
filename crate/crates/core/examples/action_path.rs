//! Minimal-action escape from the mixing peak to a pure peak and back.

use auction_ewa::action::{minimize_action, ActionOptions};
use auction_ewa::fp::{LearningParams, PeakRole, SingleAgent};
use auction_ewa::{nash, Class, Error, GameModel, GameParams};

fn main() -> auction_ewa::Result<()> {
    let model = GameModel::new(GameParams::symmetric(0.3, 0.2))?;
    let aggr = nash::symmetric_equilibrium(&model, 256).ok_or(Error::NoFixedPoint)?.aggregates;
    let agent = SingleAgent::new(&model, Class::One, aggr, LearningParams { r: 0.01, alpha: 0.07, beta: 1.0 / 0.11 });
    let set = agent.fixed_points()?;
    let central = set.stable_with_role(PeakRole::Central).ok_or(Error::NoFixedPoint)?;
    let right = set.stable_with_role(PeakRole::Right).ok_or(Error::NoFixedPoint)?;
    let opts = ActionOptions { n_steps: 40, ..Default::default() };
    for (from, to) in [(central, right), (right, central)] {
        let t = minimize_action(&agent, &set, from, to, &opts)?;
        println!("{} -> {}: S = {:.5}", from.role.name(), to.role.name(), t.min_action);
        for (time, s) in t.path.times.iter().zip(&t.path.states).step_by(10) {
            println!("  t={time:>5.2} A1={:.4} A2={:.4}", s.a_1, s.a_2);
        }
    }
    Ok(())
}
