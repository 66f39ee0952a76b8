//! Homogeneous decomposition, nilpotent approximation, triangular quadrature and dilations.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{Num, Zero};

use crate::charts::{ord_field_weights, weight_of, PrivilegedChart, WeightedDegree};
use crate::control::{ControlSignal, Trajectory};
use crate::error::{Error, Result};
use crate::liealgebra::{flag_from_tower, BracketIndex, BracketTower};
use crate::symfield::poly::{from_f64, to_f64};
use crate::symfield::{CompiledSystem, Poly, Rational, SymField};

/// Samples recorded per control segment by [`integrate_triangular`].
pub const DEFAULT_SAMPLES_PER_SEGMENT: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousField {
    pub degree: i64,
    pub field: SymField,
}

/// Nonzero homogeneous parts of `x` (in chart coordinates) with degree `<= max_degree`,
/// sorted by degree.
pub fn homogeneous_components(x: &SymField, chart: &PrivilegedChart, max_degree: i64) -> Vec<HomogeneousField> {
    homogeneous_components_weights(x, &chart.weights, max_degree)
}

pub fn homogeneous_components_weights(x: &SymField, weights: &[u32], max_degree: i64) -> Vec<HomogeneousField> {
    let n = x.nvars();
    let mut parts: BTreeMap<i64, Vec<Poly>> = BTreeMap::new();
    for (j, c) in x.components().iter().enumerate() {
        for (e, v) in c.terms() {
            let d = weight_of(e, weights) - weights[j] as i64;
            if d > max_degree {
                continue;
            }
            let comps = parts.entry(d).or_insert_with(|| vec![Poly::zero(n); n]);
            comps[j].add_term(e.clone(), v.clone());
        }
    }
    parts
        .into_iter()
        .map(|(degree, comps)| HomogeneousField {
            degree,
            field: SymField::new(comps).expect("components share the ambient dimension"),
        })
        .collect()
}

/// The part of `x` of exact degree `degree` (possibly zero).
pub fn homogeneous_part(x: &SymField, weights: &[u32], degree: i64) -> SymField {
    let mut comps = Vec::with_capacity(x.nvars());
    for (j, c) in x.components().iter().enumerate() {
        comps.push(c.filter(|e| weight_of(e, weights) - weights[j] as i64 == degree));
    }
    SymField::new(comps).expect("components share the ambient dimension")
}

/// Degree -1 truncations `X^_i` in a privileged chart.
#[derive(Clone, Debug, PartialEq)]
pub struct NilpotentSystem {
    pub fields: Vec<SymField>,
    pub weights: Vec<u32>,
    pub step: u32,
    /// Growth vector implied by the chart weights.
    pub growth_vector: Vec<usize>,
    /// Base point in the original coordinates.
    pub center: Vec<Rational>,
}

impl NilpotentSystem {
    /// Builds a nilpotent system from fields already written in weighted coordinates,
    /// checking homogeneity of degree -1 and triangularity.
    pub fn from_fields(fields: Vec<SymField>, weights: Vec<u32>, center: Vec<Rational>) -> Result<Self> {
        let n = weights.len();
        if weights.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("weights must be nondecreasing".into()));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.nvars() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: f.nvars(),
                });
            }
            for (j, c) in f.components().iter().enumerate() {
                for (e, _) in c.terms() {
                    if weight_of(e, &weights) - weights[j] as i64 != -1 {
                        return Err(Error::InvalidArgument(format!(
                            "field {} is not homogeneous of degree -1 in component {}",
                            i + 1,
                            j + 1
                        )));
                    }
                    if e.iter().enumerate().any(|(k, &a)| a > 0 && weights[k] >= weights[j]) {
                        return Err(Error::InvalidArgument(format!(
                            "field {} is not triangular in component {}",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        let step = weights.last().copied().unwrap_or(0);
        let growth_vector = (1..=step)
            .map(|s| weights.iter().filter(|&&w| w <= s).count())
            .collect();
        Ok(Self {
            fields,
            weights,
            step,
            growth_vector,
            center,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn nfields(&self) -> usize {
        self.fields.len()
    }

    pub fn var_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|j| format!("z{j}")).collect()
    }

    pub fn compile(&self) -> CompiledSystem {
        CompiledSystem::new(&self.fields)
    }

    /// Plain-text system file for the approximation in chart coordinates.
    pub fn to_system_string(&self, name: &str) -> String {
        let names = self.var_names();
        let mut s = format!("name = {name}\ndim = {}\nvars = {}\n", self.dim(), names.join(" "));
        for (i, f) in self.fields.iter().enumerate() {
            let comps: Vec<String> = f.components().iter().map(|c| c.display_with(&names)).collect();
            s.push_str(&format!("field {} = {}\n", i + 1, comps.join(" | ")));
        }
        s
    }
}

impl fmt::Display for NilpotentSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.var_names();
        for (i, x) in self.fields.iter().enumerate() {
            writeln!(f, "X^{} = {}", i + 1, x.display_with(&names))?;
        }
        write!(f, "weights = {:?}, step = {}", self.weights, self.step)
    }
}

/// Nilpotent approximation at the chart center.
pub fn nilpotent_approximation(sys: &crate::symfield::SystemDef, chart: &PrivilegedChart) -> Result<NilpotentSystem> {
    let mut hats = Vec::with_capacity(sys.nfields());
    for (i, x) in sys.fields.iter().enumerate() {
        let pushed = chart.pushforward(x)?;
        if let WeightedDegree::Finite(d) = ord_field_weights(&pushed, &chart.weights) {
            if d < -1 {
                return Err(Error::NotPrivileged(format!(
                    "X{} has a term of weighted degree {d} in the chart",
                    i + 1
                )));
            }
        }
        hats.push(homogeneous_part(&pushed, &chart.weights, -1));
    }
    NilpotentSystem::from_fields(hats, chart.weights.clone(), chart.center.clone())
}

#[derive(Clone, Debug)]
pub struct NilpotencyReport {
    pub step: u32,
    pub length_cap: usize,
    /// First bracket of length `> step` that does not vanish.
    pub offending: Option<BracketIndex>,
    pub growth_at_origin: Vec<usize>,
    pub expected_growth: Vec<usize>,
    pub passed: bool,
}

impl fmt::Display for NilpotencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "step = {}, brackets checked up to length {}", self.step, self.length_cap)?;
        match &self.offending {
            Some(b) => writeln!(f, "nonvanishing bracket {b}")?,
            None => writeln!(f, "all brackets of length > {} vanish", self.step)?,
        }
        writeln!(
            f,
            "growth at 0 = {:?}, expected {:?}",
            self.growth_at_origin, self.expected_growth
        )?;
        write!(f, "nilpotency: {}", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// Exact check that brackets of lengths `step+1 ..= length_cap` vanish and that the
/// growth vector at 0 matches the chart weights. `None` uses `step + 2`.
pub fn verify_nilpotency(nil: &NilpotentSystem, length_cap: Option<usize>) -> Result<NilpotencyReport> {
    let step = nil.step as usize;
    let cap = length_cap.unwrap_or(step + 2).max(step + 1);
    let mut tower = BracketTower::new(nil.fields.clone(), None);
    tower.grow_to(cap)?;
    let offending = (step + 1..=cap).find_map(|len| tower.level(len).first().map(|(b, _)| b.clone()));
    let origin = vec![Rational::zero(); nil.dim()];
    let flag = flag_from_tower(&tower, &origin)?;
    let passed = offending.is_none() && flag.growth_vector == nil.growth_vector;
    Ok(NilpotencyReport {
        step: nil.step,
        length_cap: cap,
        offending,
        growth_at_origin: flag.growth_vector,
        expected_growth: nil.growth_vector.clone(),
        passed,
    })
}

/// `z -> (t^{w_1} z_1, ..., t^{w_n} z_n)`.
pub fn dilate(z: &[f64], t: f64, weights: &[u32]) -> Vec<f64> {
    z.iter().zip(weights).map(|(v, &w)| v * t.powi(w as i32)).collect()
}

pub fn dilate_exact(z: &[Rational], t: &Rational, weights: &[u32]) -> Vec<Rational> {
    z.iter().zip(weights).map(|(v, &w)| v * num_traits::pow(t.clone(), w as usize)).collect()
}

/// Pull-back `delta_t^* X`; a monomial field `z^a d/dz_j` picks up `t^{w(a) - w_j}`.
pub fn dilate_field(x: &SymField, t: &Rational, weights: &[u32]) -> Result<SymField> {
    if t.is_zero() {
        return Err(Error::InvalidArgument("dilation factor must be nonzero".into()));
    }
    let comps = x
        .components()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut out = Poly::zero(x.nvars());
            for (e, v) in c.terms() {
                let d = weight_of(e, weights) - weights[j] as i64;
                let f = if d >= 0 {
                    num_traits::pow(t.clone(), d as usize)
                } else {
                    num_traits::pow(t.recip(), (-d) as usize)
                };
                out.add_term(e.clone(), v * f);
            }
            out
        })
        .collect();
    SymField::new(comps)
}

/// One monomial `coef * u_field * prod z_k^p` of a component.
#[derive(Clone, Debug)]
struct Term<T> {
    field: usize,
    coef: T,
    powers: Vec<(usize, u32)>,
}

/// Per-component monomials of a triangular system in a given scalar type.
#[derive(Clone, Debug)]
struct Triangular<T> {
    comps: Vec<Vec<Term<T>>>,
}

impl<T: Clone> Triangular<T> {
    fn new(nil: &NilpotentSystem, conv: impl Fn(&Rational) -> T) -> Self {
        let comps = (0..nil.dim())
            .map(|j| {
                let mut terms = Vec::new();
                for (i, f) in nil.fields.iter().enumerate() {
                    for (e, c) in f.component(j).terms() {
                        let powers = e
                            .iter()
                            .enumerate()
                            .filter(|(_, &a)| a > 0)
                            .map(|(k, &a)| (k, a))
                            .collect();
                        terms.push(Term {
                            field: i,
                            coef: conv(c),
                            powers,
                        });
                    }
                }
                terms
            })
            .collect();
        Self { comps }
    }
}

fn nat<T: Num + Clone>(k: usize) -> T {
    let mut acc = T::zero();
    for _ in 0..k {
        acc = acc + T::one();
    }
    acc
}

fn poly_mul<T: Num + Clone>(a: &[T], b: &[T]) -> Vec<T> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![T::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j].clone() + x.clone() * y.clone();
        }
    }
    out
}

fn poly_eval<T: Num + Clone>(a: &[T], s: &T) -> T {
    a.iter().rev().fold(T::zero(), |acc, c| acc * s.clone() + c.clone())
}

/// Coordinates as polynomials in the local time `s` of a constant-control segment.
fn segment_polys<T: Num + Clone>(sys: &Triangular<T>, z0: &[T], u: &[T]) -> Vec<Vec<T>> {
    let n = z0.len();
    let mut zs: Vec<Vec<T>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut integrand: Vec<T> = Vec::new();
        for term in &sys.comps[j] {
            let ui = &u[term.field];
            if ui.is_zero() {
                continue;
            }
            let mut p = vec![term.coef.clone() * ui.clone()];
            for &(k, a) in &term.powers {
                for _ in 0..a {
                    p = poly_mul(&p, &zs[k]);
                }
            }
            if integrand.len() < p.len() {
                integrand.resize(p.len(), T::zero());
            }
            for (d, c) in p.into_iter().enumerate() {
                integrand[d] = integrand[d].clone() + c;
            }
        }
        let mut zj = vec![z0[j].clone()];
        for (d, c) in integrand.into_iter().enumerate() {
            zj.push(c / nat::<T>(d + 1));
        }
        zs.push(zj);
    }
    zs
}

fn check_inputs(nil: &NilpotentSystem, control: &ControlSignal, x0_len: usize) -> Result<()> {
    if x0_len != nil.dim() {
        return Err(Error::DimensionMismatch {
            expected: nil.dim(),
            got: x0_len,
        });
    }
    if !control.is_empty() && control.nfields() != nil.nfields() {
        return Err(Error::DimensionMismatch {
            expected: nil.nfields(),
            got: control.nfields(),
        });
    }
    Ok(())
}

/// Float evaluator for the endpoint map of a nilpotent system.
#[derive(Clone, Debug)]
pub struct TriangularIntegrator {
    sys: Triangular<f64>,
    dim: usize,
    nfields: usize,
}

impl TriangularIntegrator {
    pub fn new(nil: &NilpotentSystem) -> Self {
        Self {
            sys: Triangular::new(nil, to_f64),
            dim: nil.dim(),
            nfields: nil.nfields(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nfields(&self) -> usize {
        self.nfields
    }

    /// Endpoint for piecewise constant values `values[k]` held for `durations[k]`.
    pub fn endpoint_raw(&self, durations: &[f64], values: &[Vec<f64>], x0: &[f64]) -> Vec<f64> {
        let mut z = x0.to_vec();
        for (d, u) in durations.iter().zip(values) {
            let polys = segment_polys(&self.sys, &z, u);
            z = polys.iter().map(|p| poly_eval(p, d)).collect();
        }
        z
    }

    pub fn endpoint(&self, control: &ControlSignal, x0: &[f64]) -> Vec<f64> {
        self.endpoint_raw(control.durations(), control.values(), x0)
    }

    /// Endpoint of unit-duration segments whose values are `flat` chunks of length m.
    pub fn endpoint_displacements(&self, flat: &[f64], x0: &[f64]) -> Vec<f64> {
        let mut z = x0.to_vec();
        for u in flat.chunks(self.nfields) {
            let polys = segment_polys(&self.sys, &z, u);
            z = polys.iter().map(|p| p.iter().sum()).collect();
        }
        z
    }

    /// Trajectory with `samples` evenly spaced samples per segment.
    pub fn trajectory(&self, control: &ControlSignal, x0: &[f64], samples: usize) -> Trajectory {
        let samples = samples.max(1);
        let mut traj = Trajectory {
            times: vec![0.0],
            states: vec![x0.to_vec()],
            controls: vec![vec![0.0; self.nfields]],
            length: control.cost(),
        };
        let mut z = x0.to_vec();
        let mut t0 = 0.0;
        for (d, u) in control.segments() {
            let polys = segment_polys(&self.sys, &z, u);
            for k in 1..=samples {
                let s = d * k as f64 / samples as f64;
                traj.times.push(t0 + s);
                traj.states.push(polys.iter().map(|p| poly_eval(p, &s)).collect());
                traj.controls.push(u.to_vec());
            }
            z = traj.states.last().cloned().unwrap_or_default();
            t0 += d;
        }
        traj
    }
}

/// Integrates a nilpotent system by per-segment polynomial quadrature.
pub fn integrate_triangular(nil: &NilpotentSystem, control: &ControlSignal, x0: &[f64]) -> Result<Trajectory> {
    check_inputs(nil, control, x0.len())?;
    Ok(TriangularIntegrator::new(nil).trajectory(control, x0, DEFAULT_SAMPLES_PER_SEGMENT))
}

/// Exact endpoint for rational durations and control values.
pub fn endpoint_exact(
    nil: &NilpotentSystem,
    durations: &[Rational],
    values: &[Vec<Rational>],
    x0: &[Rational],
) -> Result<Vec<Rational>> {
    if x0.len() != nil.dim() {
        return Err(Error::DimensionMismatch {
            expected: nil.dim(),
            got: x0.len(),
        });
    }
    if let Some(bad) = values.iter().find(|u| u.len() != nil.nfields()) {
        return Err(Error::DimensionMismatch {
            expected: nil.nfields(),
            got: bad.len(),
        });
    }
    let sys = Triangular::new(nil, Rational::clone);
    let mut z = x0.to_vec();
    for (d, u) in durations.iter().zip(values) {
        let polys = segment_polys(&sys, &z, u);
        z = polys.iter().map(|p| poly_eval(p, d)).collect();
    }
    Ok(z)
}

/// Exact endpoint for a float control, with every input converted exactly to a rational.
pub fn endpoint_exact_f64(nil: &NilpotentSystem, control: &ControlSignal, x0: &[f64]) -> Result<Vec<Rational>> {
    check_inputs(nil, control, x0.len())?;
    let d: Vec<Rational> = control.durations().iter().copied().map(from_f64).collect();
    let v: Vec<Vec<Rational>> = control
        .values()
        .iter()
        .map(|u| u.iter().copied().map(from_f64).collect())
        .collect();
    let x: Vec<Rational> = x0.iter().copied().map(from_f64).collect();
    endpoint_exact(nil, &d, &v, &x)
}

/// True when every nonzero term of `x - x^` has weighted degree `>= 0`.
pub fn first_order_ok(pushed: &SymField, hat: &SymField, weights: &[u32]) -> Result<bool> {
    let diff = pushed.sub(hat)?;
    Ok(match ord_field_weights(&diff, weights) {
        WeightedDegree::Finite(d) => d >= 0,
        WeightedDegree::Infinite => true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::algebraic_privileged_coords;
    use crate::control::{simulate, OdeConfig};
    use crate::fixtures;
    use crate::liealgebra::flag_at;
    use crate::symfield::{rat, rint, SystemDef};
    use proptest::prelude::*;

    fn origin(n: usize) -> Vec<Rational> {
        vec![Rational::zero(); n]
    }

    fn field(comps: Vec<Poly>) -> SymField {
        SymField::new(comps).unwrap()
    }

    fn z(n: usize, j: usize) -> Poly {
        Poly::var(n, j)
    }

    fn algebraic_nil(sys: &SystemDef) -> NilpotentSystem {
        let flag = flag_at(sys, &origin(sys.dim()), 8).unwrap();
        let chart = algebraic_privileged_coords(sys, &flag).unwrap();
        nilpotent_approximation(sys, &chart).unwrap()
    }

    #[test]
    fn unicycle_components_and_approximation() {
        let sys = fixtures::unicycle();
        let chart = fixtures::unicycle_chart().unwrap();
        let x1 = chart.pushforward(&sys.fields[0]).unwrap();
        let parts = homogeneous_components(&x1, &chart, 1);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].degree, -1);
        assert_eq!(parts[0].field, field(vec![Poly::one(3), Poly::zero(3), z(3, 1)]));
        assert_eq!(homogeneous_part(&x1, &chart.weights, 0), SymField::zero(3));
        assert_eq!(parts[1].degree, 1);
        let expect = field(vec![
            z(3, 1).pow(2).scale(&rat(-1, 2)),
            Poly::zero(3),
            z(3, 1).pow(3).scale(&rat(-1, 6)),
        ]);
        assert_eq!(parts[1].field, expect);

        let nil = nilpotent_approximation(&sys, &chart).unwrap();
        assert_eq!(nil.fields[0], parts[0].field);
        assert_eq!(nil.fields[1], SymField::coordinate(3, 1));
        let rep = verify_nilpotency(&nil, None).unwrap();
        assert!(rep.passed, "{rep}");
        assert_eq!(rep.growth_at_origin, vec![2, 3]);
        for (x, hat) in sys.fields.iter().zip(&nil.fields) {
            assert!(first_order_ok(&chart.pushforward(x).unwrap(), hat, &chart.weights).unwrap());
        }
    }

    #[test]
    fn homogeneous_systems_are_their_own_approximation() {
        for sys in [fixtures::grusin(), fixtures::martinet(), fixtures::heisenberg()] {
            let nil = algebraic_nil(&sys);
            assert_eq!(nil.fields, sys.fields, "{}", sys.name);
            let parts = homogeneous_components_weights(&sys.fields[0], &nil.weights, 10);
            assert_eq!(parts.len(), 1);
            assert_eq!(parts[0].degree, -1);
        }
    }

    #[test]
    fn nilpotency_steps() {
        let h = verify_nilpotency(&algebraic_nil(&fixtures::heisenberg()), None).unwrap();
        assert!(h.passed);
        assert_eq!(h.step, 2);
        let m = verify_nilpotency(&algebraic_nil(&fixtures::martinet()), None).unwrap();
        assert!(m.passed);
        assert_eq!(m.step, 3);
        assert_eq!(m.growth_at_origin, vec![2, 2, 3]);
        let e = verify_nilpotency(&algebraic_nil(&fixtures::engel()), Some(6)).unwrap();
        assert!(e.passed, "{e}");
        assert_eq!(e.growth_at_origin, vec![2, 3, 4]);
    }

    #[test]
    fn bad_chart_is_rejected() {
        let sys = fixtures::nonprivileged();
        let good = fixtures::nonprivileged_corrected_chart().unwrap();
        assert!(nilpotent_approximation(&sys, &good).is_ok());
        let bad = fixtures::nonprivileged_naive_chart().unwrap();
        assert!(matches!(nilpotent_approximation(&sys, &bad), Err(Error::NotPrivileged(_))));
    }

    #[test]
    fn heisenberg_loop_is_exact() {
        let nil = algebraic_nil(&fixtures::heisenberg());
        let t = rat(3, 7);
        let one = rint(1);
        let zero = rint(0);
        let vals = vec![
            vec![one.clone(), zero.clone()],
            vec![zero.clone(), one.clone()],
            vec![-one.clone(), zero.clone()],
            vec![zero.clone(), -one.clone()],
        ];
        let end = endpoint_exact(&nil, &[t.clone(), t.clone(), t.clone(), t.clone()], &vals, &origin(3)).unwrap();
        assert_eq!(end, vec![zero.clone(), zero, &t * &t]);
        let c = ControlSignal::new(vec![0.5], vec![vec![1.0, 0.0]]).unwrap();
        let traj = integrate_triangular(&nil, &c, &[0.0; 3]).unwrap();
        assert_eq!(traj.final_state(), &[0.5, 0.0, 0.0]);
        let zero_c = ControlSignal::new(vec![1.0], vec![vec![0.0, 0.0]]).unwrap();
        let traj = integrate_triangular(&nil, &zero_c, &[0.1, 0.2, 0.3]).unwrap();
        assert!(traj.states.iter().all(|s| s == &[0.1, 0.2, 0.3]));
    }

    #[test]
    fn dilations() {
        let w = [1, 1, 2];
        assert_eq!(dilate(&[0.0; 3], 3.0, &w), vec![0.0; 3]);
        assert_eq!(dilate(&[1.0, 1.0, 1.0], 2.0, &w), vec![2.0, 2.0, 4.0]);
        let nil = algebraic_nil(&fixtures::martinet());
        let t = rat(5, 3);
        for x in &nil.fields {
            assert_eq!(dilate_field(x, &t, &nil.weights).unwrap(), x.scale(&t.recip()));
        }
        assert!(dilate_field(&nil.fields[0], &rint(0), &nil.weights).is_err());
    }

    fn random_control(m: usize, vals: &[f64], durs: &[f64]) -> ControlSignal {
        let values = vals.chunks(m).map(<[f64]>::to_vec).collect();
        ControlSignal::new(durs.to_vec(), values).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn dilation_equivariance(
            vals in prop::collection::vec(-1.0f64..1.0, 6),
            durs in prop::collection::vec(0.05f64..0.4, 3),
            x0 in prop::collection::vec(-0.5f64..0.5, 4),
            lambda in 0.2f64..3.0,
        ) {
            let nil = algebraic_nil(&fixtures::engel());
            let integ = TriangularIntegrator::new(&nil);
            let c = random_control(2, &vals, &durs);
            let base = integ.endpoint(&c, &x0);
            let scaled = integ.endpoint(&c.scaled(lambda), &dilate(&x0, lambda, &nil.weights));
            let expect = dilate(&base, lambda, &nil.weights);
            for (a, b) in scaled.iter().zip(&expect) {
                prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn quadrature_matches_rk4(
            vals in prop::collection::vec(-1.0f64..1.0, 6),
            durs in prop::collection::vec(0.05f64..0.5, 3),
        ) {
            let nil = algebraic_nil(&fixtures::martinet());
            let c = random_control(2, &vals, &durs);
            let exact = integrate_triangular(&nil, &c, &[0.1, -0.2, 0.3]).unwrap();
            let rk = simulate(&nil.compile(), &c, &[0.1, -0.2, 0.3], &OdeConfig::default()).unwrap();
            for (a, b) in exact.final_state().iter().zip(rk.final_state()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
