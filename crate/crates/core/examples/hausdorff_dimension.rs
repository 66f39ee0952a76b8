//! Packing counts of small balls at a Martinet singular point and the fitted dimension.

use subriemann::fixtures;
use subriemann::hausdorff::{default_scales, estimate_dimension, PackingConfig};

fn main() -> subriemann::Result<()> {
    let sys = fixtures::martinet();
    let r = 0.2;
    let run = estimate_dimension(&sys, &[0.0; 3], r, &default_scales(r, 5), Some(4.0), 10.0, &PackingConfig::default())?;
    println!("calibration kappa {:.4}", run.kappa);
    print!("{}", run.estimate.to_csv());
    println!("{}", run.estimate.summary());
    Ok(())
}
