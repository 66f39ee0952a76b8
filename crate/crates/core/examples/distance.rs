//! Distance estimates on the Heisenberg group against the closed-form value.
//!
//! Witnesses are piecewise constant with k = 4n segments, so the best they can do
//! is the regular k-gon of the given area.

use std::f64::consts::PI;

use subriemann::control::OdeConfig;
use subriemann::fixtures;
use subriemann::metric::{estimate_distance, DistanceConfig};

fn main() -> subriemann::Result<()> {
    let sys = fixtures::heisenberg();
    let cfg = DistanceConfig::default();
    let k = (4 * sys.dim()) as f64;
    let ode = OdeConfig::default();
    for z in [0.01, 0.04, 0.16] {
        let est = estimate_distance(&sys.fields, &[0.0; 3], &[0.0, 0.0, z], &cfg, &ode)?;
        println!(
            "d(0, (0,0,{z})) in [{:.6}, {:.6}], circle {:.6}, {k}-gon {:.6}",
            est.lower,
            est.upper,
            (4.0 * PI * z).sqrt(),
            (4.0 * k * (PI / k).tan() * z).sqrt()
        );
    }
    Ok(())
}
