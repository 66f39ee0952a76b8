//! Commutator flows and the defect of their bracket expansion as t shrinks.

use subriemann::control::OdeConfig;
use subriemann::fixtures;
use subriemann::flowcheck::{defect_fit_commutator, geometric_times, pushforward_series_defect};
use subriemann::symfield::rint;

fn main() -> subriemann::Result<()> {
    let sys = fixtures::unicycle();
    let ode = OdeConfig::default();
    let p = vec![rint(0); 3];
    let t = geometric_times(0.3, 0.01, 8);
    let fit = defect_fit_commutator(&sys, &"1,2".parse()?, &p, &t, &ode)?;
    print!("{}", fit.to_csv());
    println!("{}", fit.verdict());
    for n in [1, 2] {
        let fit = pushforward_series_defect(&sys.fields[0], &sys.fields[1], n, &p, &t, &ode)?;
        println!("push-forward series to order {n}: {}", fit.verdict());
    }
    Ok(())
}
