//! Builds algebraic privileged coordinates and shows why an adapted chart can fail.

use subriemann::charts::{algebraic_privileged_coords, verify_privileged};
use subriemann::fixtures;
use subriemann::liealgebra::flag_at;
use subriemann::symfield::rint;

fn main() -> subriemann::Result<()> {
    let sys = fixtures::nonprivileged();
    let flag = flag_at(&sys, &vec![rint(0); 3], 6)?;
    println!("weights {}", flag.weights_string());

    let naive = fixtures::nonprivileged_naive_chart()?;
    println!("adapted linear chart:\n{}\n", verify_privileged(&naive, &flag)?);

    let chart = algebraic_privileged_coords(&sys, &flag)?;
    for (j, z) in chart.z_of_x().iter().enumerate() {
        println!("z{} = {}", j + 1, z.display_with(&sys.var_names));
    }
    println!("{}", verify_privileged(&chart, &flag)?);
    Ok(())
}
