//! Parses a system from text, computes brackets and the growth vector at two points.

use subriemann::liealgebra::{flag_at, iterated_bracket};
use subriemann::symfield::{parse_system, rint};

const SRC: &str = "\
[system]
name = martinet
dim = 3
vars = x y z
field X1 = 1 | 0 | 0
field X2 = 0 | 1 | x^2/2
";

fn main() -> subriemann::Result<()> {
    let sys = parse_system(SRC)?;
    for idx in ["1,2", "1,1,2", "2,1,2"] {
        let b = iterated_bracket(&sys, &idx.parse()?)?;
        println!("X_[{idx}] = {}", b.display_with(&sys.var_names));
    }
    for p in [[0, 0, 0], [1, 0, 0]] {
        let p: Vec<_> = p.iter().map(|&v| rint(v)).collect();
        let flag = flag_at(&sys, &p, 6)?;
        println!(
            "at ({}): growth {} weights {} frame {:?}",
            p.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
            flag.growth_string(),
            flag.weights_string(),
            flag.adapted_frame.iter().map(ToString::to_string).collect::<Vec<_>>()
        );
    }
    Ok(())
}
