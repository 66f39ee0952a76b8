//! Parallel parking: plan a lateral unicycle move through nilpotent steering.

use subriemann::fixtures;
use subriemann::planner::{plan, PlanConfig};

fn main() -> subriemann::Result<()> {
    let sys = fixtures::unicycle();
    let r = plan(&sys, &[0.0; 3], &[0.0, 0.1, 0.0], &PlanConfig::default())?;
    print!("{}", r.residual_log());
    println!("\n{}", r.control_csv());
    println!("final state {:?}", r.final_state());
    Ok(())
}
