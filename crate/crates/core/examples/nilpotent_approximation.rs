//! Nilpotent approximation of the unicycle and its homogeneous expansion.

use subriemann::fixtures;
use subriemann::nilpotent::{homogeneous_components, nilpotent_approximation, verify_nilpotency};

fn main() -> subriemann::Result<()> {
    let sys = fixtures::unicycle();
    let chart = fixtures::unicycle_chart()?;
    let names = ["x".to_string(), "theta".to_string(), "y".to_string()];
    let x1 = chart.pushforward(&sys.fields[0])?;
    for part in homogeneous_components(&x1, &chart, 3) {
        println!("X1 degree {:>2}: {}", part.degree, part.field.display_with(&names));
    }
    let nil = nilpotent_approximation(&sys, &chart)?;
    println!("\n{nil}");
    println!("{}", verify_nilpotency(&nil, None)?);
    println!("\n{}", nil.to_system_string("unicycle_hat"));
    Ok(())
}
