//! Builds PMFs on the default grids, mixes them and maps loss to FEC ratio.

use livecast_lab::scheduler::min_fec_ratio;
use livecast_lab::{Grid, Pmf};

fn main() -> livecast_lab::Result<()> {
    let loss = Grid::loss_default();
    let calm = Pmf::point_mass(loss, 0.02);
    let burst = Pmf::from_samples(&[0.12, 0.18, 0.2, 0.26, 0.31], loss)?;
    let mixed = Pmf::mix(&burst, &calm, 0.3073)?;

    println!(
        "E[loss] calm {:.4}, burst {:.4}, mixed {:.4}",
        calm.expect(),
        burst.expect(),
        mixed.expect()
    );
    for (x, p) in mixed.support() {
        println!("  P(l = {x:.2}) = {p:.4}");
    }

    // minimal FEC ratio per loss value, accumulated on the FEC grid
    let fec = mixed.transform(|l| min_fec_ratio(l).ok(), Grid::fec_default());
    println!("FEC ratio distribution (clamped mass {:.3}):", fec.clamped_mass);
    for (a, p) in fec.pmf.support() {
        println!("  P(alpha = {a:.2}) = {p:.4}");
    }
    println!("CRPS of the mixture against l = 0.2: {:.4}", mixed.crps(0.2));
    Ok(())
}
