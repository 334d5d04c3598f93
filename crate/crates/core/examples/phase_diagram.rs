//! Coarse map of equilibrium types over (theta1, pb), drawn as text.

use auction_ewa::nash;
use auction_ewa::GameParams;

fn main() -> auction_ewa::Result<()> {
    let (n_theta, n_pb) = (24, 12);
    let diagram = nash::phase_diagram(&GameParams::symmetric(0.3, 0.2), n_theta, n_pb, 96)?;
    // Rows are pb from high to low, columns theta1 from 0 to 1.
    // P: potentially heterogeneous, S: pure split, .: neither.
    for j in (0..n_pb).rev() {
        let row: String = (0..n_theta)
            .map(|i| {
                let r = diagram.cell(i, j).region;
                match (r.has_pot_heterogeneous, r.has_pure_split) {
                    (true, _) => 'P',
                    (_, true) => 'S',
                    _ => '.',
                }
            })
            .collect();
        println!("pb={:.3} {row}", diagram.cell(0, j).pb);
    }
    println!("cells where the closed-form boundary disagrees: {}", diagram.disagreements().len());
    Ok(())
}
