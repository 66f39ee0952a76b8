use std::fmt;

use super::poly::{power_table, CompiledPoly, Poly, Rational};
use crate::error::{Error, Result};

/// A polynomial vector field: `components[j]` is the coefficient of `d/dx_j`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SymField {
    components: Vec<Poly>,
}

impl SymField {
    pub fn new(components: Vec<Poly>) -> Result<Self> {
        let n = components.len();
        if let Some(bad) = components.iter().find(|c| c.nvars() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.nvars(),
            });
        }
        Ok(Self { components })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            components: vec![Poly::zero(n); n],
        }
    }

    /// The coordinate field `d/dx_j`.
    pub fn coordinate(n: usize, j: usize) -> Self {
        let mut f = Self::zero(n);
        f.components[j] = Poly::one(n);
        f
    }

    pub fn nvars(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Poly] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &Poly {
        &self.components[j]
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Poly::is_zero)
    }

    /// Lie derivative `X f = sum_j X_j df/dx_j`.
    pub fn apply(&self, f: &Poly) -> Result<Poly> {
        if f.nvars() != self.nvars() {
            return Err(Error::DimensionMismatch {
                expected: self.nvars(),
                got: f.nvars(),
            });
        }
        let mut acc = Poly::zero(self.nvars());
        for (j, xj) in self.components.iter().enumerate() {
            if xj.is_zero() {
                continue;
            }
            let d = f.partial_derivative(j)?;
            if !d.is_zero() {
                acc = &acc + &(xj * &d);
            }
        }
        Ok(acc)
    }

    pub fn evaluate(&self, point: &[Rational]) -> Result<Vec<Rational>> {
        self.components.iter().map(|c| c.evaluate(point)).collect()
    }

    pub fn eval_f64(&self, point: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval_f64(point)).collect()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scale(&self, c: &Rational) -> Self {
        Self {
            components: self.components.iter().map(|p| p.scale(c)).collect(),
        }
    }

    /// Multiplies every component by the function `f`.
    pub fn mul_fn(&self, f: &Poly) -> Self {
        Self {
            components: self.components.iter().map(|p| p * f).collect(),
        }
    }

    pub fn map_components<F: FnMut(&Poly) -> Poly>(&self, f: F) -> Self {
        Self {
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn truncate(&self, degree: u32) -> Self {
        self.map_components(|p| p.truncate(degree))
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.nvars() != other.nvars() {
            return Err(Error::DimensionMismatch {
                expected: self.nvars(),
                got: other.nvars(),
            });
        }
        Ok(())
    }

    pub fn compile(&self) -> CompiledField {
        CompiledField::new(self)
    }

    pub fn display_with(&self, names: &[String]) -> String {
        let parts: Vec<String> = self
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(j, c)| {
                let name = names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1));
                if c.nterms() > 1 {
                    format!("({}) d/d{}", c.display_with(names), name)
                } else {
                    format!("{} d/d{}", c.display_with(names), name)
                }
            })
            .collect();
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ")
        }
    }
}

impl fmt::Debug for SymField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.nvars()).map(|i| format!("x{}", i + 1)).collect();
        write!(f, "SymField[{}]", self.display_with(&names))
    }
}

/// Exact Lie bracket `[X,Y] = (DY) X - (DX) Y`, i.e. `[X,Y] f = X(Y f) - Y(X f)`.
pub fn lie_bracket(x: &SymField, y: &SymField) -> Result<SymField> {
    x.check(y)?;
    let comps = (0..x.nvars())
        .map(|j| Ok(&x.apply(&y.components[j])? - &y.apply(&x.components[j])?))
        .collect::<Result<Vec<_>>>()?;
    Ok(SymField { components: comps })
}

/// Float evaluator for a field.
#[derive(Clone, Debug)]
pub struct CompiledField {
    comps: Vec<CompiledPoly>,
    stride: usize,
}

impl CompiledField {
    fn new(f: &SymField) -> Self {
        let comps: Vec<CompiledPoly> = f.components.iter().map(Poly::compile).collect();
        let stride = comps.iter().map(CompiledPoly::max_exponent).max().unwrap_or(0) + 1;
        Self { comps, stride }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn eval_into(&self, point: &[f64], out: &mut [f64]) {
        let powers = power_table(point, self.stride);
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c.eval_with_powers(&powers, self.stride);
        }
    }

    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.comps.len()];
        self.eval_into(point, &mut out);
        out
    }
}

/// Evaluates `sum_i u_i X_i(x)` for a family of compiled fields sharing one power table.
#[derive(Clone, Debug)]
pub struct CompiledSystem {
    fields: Vec<CompiledField>,
    stride: usize,
    dim: usize,
}

impl CompiledSystem {
    pub fn new(fields: &[SymField]) -> Self {
        let compiled: Vec<CompiledField> = fields.iter().map(SymField::compile).collect();
        let stride = compiled.iter().map(|f| f.stride).max().unwrap_or(1);
        let dim = fields.first().map_or(0, SymField::nvars);
        Self {
            fields: compiled,
            stride,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nfields(&self) -> usize {
        self.fields.len()
    }

    pub fn field(&self, i: usize) -> &CompiledField {
        &self.fields[i]
    }

    /// `out = sum_i u_i X_i(x)`.
    pub fn velocity(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let powers = power_table(x, self.stride);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (f, &ui) in self.fields.iter().zip(u) {
            if ui == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(&f.comps) {
                *o += ui * c.eval_with_powers(&powers, self.stride);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symfield::poly::{rat, rint};
    use proptest::prelude::*;

    fn v(n: usize, i: usize) -> Poly {
        Poly::var(n, i)
    }

    fn heisenberg() -> (SymField, SymField) {
        let x1 = SymField::new(vec![Poly::one(3), Poly::zero(3), v(3, 1).scale(&rat(-1, 2))]).unwrap();
        let x2 = SymField::new(vec![Poly::zero(3), Poly::one(3), v(3, 0).scale(&rat(1, 2))]).unwrap();
        (x1, x2)
    }

    #[test]
    fn heisenberg_bracket_is_dz() {
        let (x1, x2) = heisenberg();
        assert_eq!(lie_bracket(&x1, &x2).unwrap(), SymField::coordinate(3, 2));
    }

    #[test]
    fn martinet_brackets() {
        let x1 = SymField::coordinate(3, 0);
        let x2 = SymField::new(vec![Poly::zero(3), Poly::one(3), v(3, 0).pow(2).scale(&rat(1, 2))]).unwrap();
        let x12 = lie_bracket(&x1, &x2).unwrap();
        assert_eq!(x12, SymField::new(vec![Poly::zero(3), Poly::zero(3), v(3, 0)]).unwrap());
        let x112 = lie_bracket(&x1, &x12).unwrap();
        assert_eq!(x112, SymField::coordinate(3, 2));
    }

    #[test]
    fn self_bracket_vanishes() {
        let (x1, _) = heisenberg();
        assert!(lie_bracket(&x1, &x1).unwrap().is_zero());
    }

    #[test]
    fn bracket_dimension_mismatch() {
        assert!(lie_bracket(&SymField::zero(2), &SymField::zero(3)).is_err());
    }

    #[test]
    fn compiled_velocity() {
        let (x1, x2) = heisenberg();
        let sys = CompiledSystem::new(&[x1, x2]);
        let mut out = [0.0; 3];
        sys.velocity(&[2.0, 4.0, 0.0], &[1.0, -1.0], &mut out);
        assert_eq!(out, [1.0, -1.0, -2.0 - 1.0]);
    }

    fn arb_field() -> impl Strategy<Value = SymField> {
        let poly = prop::collection::vec((prop::collection::vec(0u32..3, 3), -3i64..4), 0..4)
            .prop_map(|ts| Poly::from_terms(3, ts.into_iter().map(|(e, c)| (e, rint(c)))).unwrap());
        prop::collection::vec(poly, 3).prop_map(|c| SymField::new(c).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn jacobi_identity(a in arb_field(), b in arb_field(), c in arb_field()) {
            let t1 = lie_bracket(&a, &lie_bracket(&b, &c).unwrap()).unwrap();
            let t2 = lie_bracket(&b, &lie_bracket(&c, &a).unwrap()).unwrap();
            let t3 = lie_bracket(&c, &lie_bracket(&a, &b).unwrap()).unwrap();
            prop_assert!(t1.add(&t2).unwrap().add(&t3).unwrap().is_zero());
        }

        #[test]
        fn bracket_is_commutator_of_derivations(a in arb_field(), b in arb_field(), f in prop::collection::vec((prop::collection::vec(0u32..3, 3), -3i64..4), 1..4)) {
            let f = Poly::from_terms(3, f.into_iter().map(|(e, c)| (e, rint(c)))).unwrap();
            let lhs = lie_bracket(&a, &b).unwrap().apply(&f).unwrap();
            let rhs = &a.apply(&b.apply(&f).unwrap()).unwrap() - &b.apply(&a.apply(&f).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
