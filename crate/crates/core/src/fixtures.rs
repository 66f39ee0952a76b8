//! Systems bundled with the crate.

use num_traits::Zero;

use crate::charts::PrivilegedChart;
use crate::error::Result;
use crate::liealgebra::flag_at;
use crate::symfield::{parse_system, rat, Poly, Rational, SystemDef};

pub const HEISENBERG: &str = include_str!("../fixtures/heisenberg.sys");
pub const MARTINET: &str = include_str!("../fixtures/martinet.sys");
pub const GRUSIN: &str = include_str!("../fixtures/grusin.sys");
pub const UNICYCLE: &str = include_str!("../fixtures/unicycle.sys");
pub const ENGEL: &str = include_str!("../fixtures/engel.sys");
pub const NONPRIVILEGED: &str = include_str!("../fixtures/nonprivileged.sys");

/// `(name, source)` for every bundled system.
pub const ALL: [(&str, &str); 6] = [
    ("heisenberg", HEISENBERG),
    ("martinet", MARTINET),
    ("grusin", GRUSIN),
    ("unicycle", UNICYCLE),
    ("engel", ENGEL),
    ("nonprivileged", NONPRIVILEGED),
];

pub fn by_name(name: &str) -> Option<SystemDef> {
    ALL.iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| parse_system(src).expect("bundled fixture parses"))
}

pub fn heisenberg() -> SystemDef {
    parse_system(HEISENBERG).expect("bundled fixture parses")
}

pub fn martinet() -> SystemDef {
    parse_system(MARTINET).expect("bundled fixture parses")
}

pub fn grusin() -> SystemDef {
    parse_system(GRUSIN).expect("bundled fixture parses")
}

pub fn unicycle() -> SystemDef {
    parse_system(UNICYCLE).expect("bundled fixture parses")
}

pub fn engel() -> SystemDef {
    parse_system(ENGEL).expect("bundled fixture parses")
}

pub fn nonprivileged() -> SystemDef {
    parse_system(NONPRIVILEGED).expect("bundled fixture parses")
}

/// Unicycle chart `(x, theta, y)` at the origin, weights (1,1,2).
pub fn unicycle_chart() -> Result<PrivilegedChart> {
    let sys = unicycle();
    let origin = vec![Rational::zero(); 3];
    let flag = flag_at(&sys, &origin, 4)?;
    let z = vec![Poly::var(3, 0), Poly::var(3, 2), Poly::var(3, 1)];
    PrivilegedChart::from_coordinates(origin, flag.weights, flag.adapted_frame, z, sys.taylor_degree)
}

/// Privileged correction `(x, y, z - y^2/2)` of the adapted chart for `nonprivileged`.
pub fn nonprivileged_corrected_chart() -> Result<PrivilegedChart> {
    let sys = nonprivileged();
    let origin = vec![Rational::zero(); 3];
    let flag = flag_at(&sys, &origin, 4)?;
    let z3 = &Poly::var(3, 2) - &Poly::var(3, 1).pow(2).scale(&rat(1, 2));
    let z = vec![Poly::var(3, 0), Poly::var(3, 1), z3];
    PrivilegedChart::from_coordinates(origin, flag.weights, flag.adapted_frame, z, sys.taylor_degree)
}

/// Adapted but non-privileged chart `(x, y, z)` for `nonprivileged`.
pub fn nonprivileged_naive_chart() -> Result<PrivilegedChart> {
    let sys = nonprivileged();
    let origin = vec![Rational::zero(); 3];
    let flag = flag_at(&sys, &origin, 4)?;
    PrivilegedChart::translation(origin, flag.weights, flag.adapted_frame, sys.taylor_degree)
}
