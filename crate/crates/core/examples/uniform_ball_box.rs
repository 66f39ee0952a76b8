//! One Ball-Box constant across Martinet points approaching the singular plane.

use subriemann::control::OdeConfig;
use subriemann::fixtures;
use subriemann::metric::{uniform_ballbox_check, volume_check, DistanceConfig, UniformConfig};
use subriemann::symfield::{rat, rint};

fn main() -> subriemann::Result<()> {
    let sys = fixtures::martinet();
    let points: Vec<_> = [rat(0, 1), rat(1, 20), rat(1, 5)]
        .into_iter()
        .map(|x| vec![x, rint(0), rint(0)])
        .collect();
    let dist = DistanceConfig {
        restarts: 6,
        ..Default::default()
    };
    let ode = OdeConfig::default();
    let cfg = UniformConfig::default();
    let rep = uniform_ballbox_check(&sys, &points, &[0.2, 0.05], 3, &cfg, &dist, &ode)?;
    println!("{}\n", rep.summary());
    let vol = volume_check(&sys, &points[..2], &[0.2, 0.05], 80, 3, &cfg, &dist, &ode)?;
    println!("{}", vol.summary());
    Ok(())
}
