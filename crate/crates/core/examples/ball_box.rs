//! Distance against the pseudo-norm across scales, privileged and not.

use subriemann::charts::algebraic_privileged_coords;
use subriemann::control::OdeConfig;
use subriemann::fixtures;
use subriemann::liealgebra::flag_at;
use subriemann::metric::{ballbox_check, BallBoxConfig, DistanceConfig};
use subriemann::symfield::rint;

fn main() -> subriemann::Result<()> {
    let eps = [0.4, 0.2, 0.1, 0.05];
    let dist = DistanceConfig {
        restarts: 8,
        ..Default::default()
    };
    let ode = OdeConfig::default();
    let tol = BallBoxConfig::default();

    let sys = fixtures::martinet();
    let flag = flag_at(&sys, &vec![rint(0); 3], 6)?;
    let chart = algebraic_privileged_coords(&sys, &flag)?;
    let rep = ballbox_check(&sys.fields, &chart, &eps, 4, 1, &dist, &ode, &tol)?;
    println!("martinet, algebraic chart\n{}\n", rep.summary());

    let np = fixtures::nonprivileged();
    let naive = fixtures::nonprivileged_naive_chart()?;
    let rep = ballbox_check(&np.fields, &naive, &eps, 4, 1, &dist, &ode, &tol)?;
    println!("adapted linear chart\n{}", rep.summary());
    Ok(())
}
