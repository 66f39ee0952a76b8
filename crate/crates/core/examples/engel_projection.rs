//! Engel trajectories project onto Martinet trajectories.

use subriemann::control::{projection_defect, simulate, ControlSignal, OdeConfig};
use subriemann::fixtures;
use subriemann::symfield::CompiledSystem;

fn main() -> subriemann::Result<()> {
    let engel = CompiledSystem::new(&fixtures::engel().fields);
    let martinet = CompiledSystem::new(&fixtures::martinet().fields);
    let ode = OdeConfig::default();
    let c = ControlSignal::new(vec![0.5, 0.5, 0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -0.5]])?;
    let x0 = [0.1, -0.2, 0.0, 0.3];
    let traj = simulate(&engel, &c, &x0, &ode)?;
    println!("engel endpoint {:?}", traj.states.last());
    println!("largest gap to martinet: {:e}", projection_defect(&engel, &martinet, &[0, 1, 2], &c, &x0, &ode)?);
    Ok(())
}
