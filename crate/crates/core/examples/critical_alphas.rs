//! Characteristic alpha values as the intensity of choice grows.

use auction_ewa::action::{critical_alphas, CriticalOptions};
use auction_ewa::{Error, GameModel, GameParams};

fn main() -> auction_ewa::Result<()> {
    let model = GameModel::new(GameParams::symmetric(0.3, 0.2))?;
    for beta in [7.0, 1.0 / 0.11, 12.0, 15.0] {
        match critical_alphas(&model, beta, 0.0, &CriticalOptions::default()) {
            Ok(c) => println!(
                "beta={beta:.3} alpha_c={:.5} alpha_c'={:.5} alpha_c''={}",
                c.alpha_c,
                c.alpha_c_prime,
                c.alpha_c_dprime.map_or("-".to_string(), |a| format!("{a:.5}"))
            ),
            Err(Error::EmptyWedge { .. }) => println!("beta={beta:.3} no heterogeneous window"),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
