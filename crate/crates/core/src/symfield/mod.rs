//! Exact polynomial vector fields, analytic inputs and system files.

pub mod expr;
pub mod field;
pub mod poly;
pub mod system;

pub use expr::{parse_expr, taylor_truncate, Expr, Func};
pub use field::{lie_bracket, CompiledField, CompiledSystem, SymField};
pub use poly::{point_from_f64, point_to_f64, rat, rint, CompiledPoly, Poly, Rational};
pub use system::{parse_point, parse_system, parse_system_file, JetClamp, SystemDef};
