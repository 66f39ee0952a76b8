//! Iterated brackets, bracket flags, growth vectors, weights and adapted frames.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::control::OdeConfig;
use crate::error::{Error, Result};
use crate::flowcheck::psi_flow;
use crate::symfield::{lie_bracket, point_to_f64, rat, CompiledSystem, JetClamp, Rational, SymField, SystemDef};

pub const DEFAULT_DEPTH_CAP: usize = 8;

/// Right-nested multi-index `I = (i1, ..., ik)` naming `[X_i1, [X_i2, ..., X_ik]]`.
/// Stored zero-based; displayed one-based.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BracketIndex(Vec<usize>);

impl BracketIndex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("bracket index must be nonempty".into()));
        }
        Ok(Self(indices))
    }

    pub fn single(i: usize) -> Self {
        Self(vec![i])
    }

    /// From one-based indices, as written by users.
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::InvalidArgument("bracket indices are one-based".into()));
        }
        Self::new(indices.iter().map(|i| i - 1).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn head(&self) -> usize {
        self.0[0]
    }

    /// `J` in `I = iJ`; `None` for length one.
    pub fn tail(&self) -> Option<BracketIndex> {
        (self.0.len() > 1).then(|| Self(self.0[1..].to_vec()))
    }

    pub fn prepend(&self, i: usize) -> Self {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(i);
        v.extend_from_slice(&self.0);
        Self(v)
    }
}

impl fmt::Display for BracketIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.0.len();
        for (pos, i) in self.0.iter().enumerate() {
            if pos + 1 < k {
                write!(f, "[{},", i + 1)?;
            } else {
                write!(f, "{}", i + 1)?;
            }
        }
        for _ in 1..k {
            write!(f, "]")?;
        }
        Ok(())
    }
}

impl fmt::Debug for BracketIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Accepts `1,2`, `1 1 2` or the nested form `[1,[1,2]]`.
impl FromStr for BracketIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let nums = s
            .split(|c: char| c == ',' || c == '[' || c == ']' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad bracket index '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_one_based(&nums)
    }
}

/// `X_I` for the fields of `sys`.
pub fn iterated_bracket(sys: &SystemDef, idx: &BracketIndex) -> Result<SymField> {
    iterated_bracket_of(&sys.fields, idx, sys.jet_clamp().as_ref())
}

pub fn iterated_bracket_of(fields: &[SymField], idx: &BracketIndex, clamp: Option<&JetClamp>) -> Result<SymField> {
    let m = fields.len();
    if let Some(&bad) = idx.indices().iter().find(|&&i| i >= m) {
        return Err(Error::IndexOutOfRange { index: bad + 1, len: m });
    }
    let ids = idx.indices();
    let mut acc = fields[ids[ids.len() - 1]].clone();
    for &i in ids[..ids.len() - 1].iter().rev() {
        acc = lie_bracket(&fields[i], &acc)?;
        if let Some(c) = clamp {
            acc = c.apply(acc);
        }
    }
    Ok(acc)
}

/// All nonzero right-nested brackets, grouped by length and listed lexicographically.
#[derive(Clone, Debug)]
pub struct BracketTower {
    fields: Vec<SymField>,
    clamp: Option<JetClamp>,
    levels: Vec<Vec<(BracketIndex, SymField)>>,
}

impl BracketTower {
    pub fn new(fields: Vec<SymField>, clamp: Option<JetClamp>) -> Self {
        let first = fields
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_zero())
            .map(|(i, f)| (BracketIndex::single(i), f.clone()))
            .collect();
        Self {
            fields,
            clamp,
            levels: vec![first],
        }
    }

    pub fn for_system(sys: &SystemDef) -> Self {
        Self::new(sys.fields.clone(), sys.jet_clamp())
    }

    pub fn nvars(&self) -> usize {
        self.fields.first().map_or(0, SymField::nvars)
    }

    pub fn fields(&self) -> &[SymField] {
        &self.fields
    }

    /// Builds levels up to `len` inclusive.
    pub fn grow_to(&mut self, len: usize) -> Result<()> {
        while self.levels.len() < len {
            let prev = self.levels.last().expect("level one always present");
            let mut next = Vec::new();
            for (i, xi) in self.fields.iter().enumerate() {
                for (j, xj) in prev {
                    let mut b = lie_bracket(xi, xj)?;
                    if let Some(c) = &self.clamp {
                        b = c.apply(b);
                    }
                    if !b.is_zero() {
                        next.push((j.prepend(i), b));
                    }
                }
            }
            self.levels.push(next);
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Nonzero brackets of length exactly `len` (must already be grown).
    pub fn level(&self, len: usize) -> &[(BracketIndex, SymField)] {
        &self.levels[len - 1]
    }

    /// Brackets of length `<= len` in length-then-lexicographic order.
    pub fn up_to(&self, len: usize) -> impl Iterator<Item = &(BracketIndex, SymField)> {
        self.levels.iter().take(len).flatten()
    }

    pub fn get(&self, idx: &BracketIndex) -> Option<&SymField> {
        self.levels
            .get(idx.len() - 1)?
            .iter()
            .find(|(j, _)| j == idx)
            .map(|(_, f)| f)
    }
}

/// Incremental exact row-echelon basis of a subspace of Q^n.
#[derive(Clone, Debug, Default)]
pub struct RationalSpan {
    rows: Vec<(usize, Vec<Rational>)>,
}

impl RationalSpan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    fn reduce(&self, v: &[Rational]) -> Vec<Rational> {
        let mut v = v.to_vec();
        for (pivot, row) in &self.rows {
            if !v[*pivot].is_zero() {
                let c = v[*pivot].clone();
                for (a, b) in v.iter_mut().zip(row) {
                    *a -= &c * b;
                }
            }
        }
        v
    }

    pub fn contains(&self, v: &[Rational]) -> bool {
        self.reduce(v).iter().all(Zero::is_zero)
    }

    /// Adds `v`; returns whether it was independent.
    pub fn insert(&mut self, v: &[Rational]) -> bool {
        let mut r = self.reduce(v);
        let Some(pivot) = r.iter().position(|c| !c.is_zero()) else {
            return false;
        };
        let inv = r[pivot].recip();
        r.iter_mut().for_each(|c| *c *= &inv);
        for (_, row) in self.rows.iter_mut() {
            if !row[pivot].is_zero() {
                let c = row[pivot].clone();
                for (a, b) in row.iter_mut().zip(&r) {
                    *a -= &c * b;
                }
            }
        }
        self.rows.push((pivot, r));
        true
    }
}

/// Exact rank of a list of rational vectors.
pub fn exact_rank(vectors: &[Vec<Rational>]) -> usize {
    let mut s = RationalSpan::new();
    vectors.iter().filter(|v| s.insert(v)).count()
}

#[derive(Clone, Debug)]
pub struct Flag {
    pub point: Vec<Rational>,
    pub growth_vector: Vec<usize>,
    pub weights: Vec<u32>,
    pub degree_of_nonholonomy: usize,
    pub adapted_frame: Vec<BracketIndex>,
    /// The bracket fields `X_{I_j}` of the adapted frame.
    pub frame_fields: Vec<SymField>,
    /// Their values at `point`.
    pub frame_values: Vec<Vec<Rational>>,
    /// Filled in by [`is_regular`]; `None` until probed.
    pub regular: Option<bool>,
}

impl Flag {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `Q = sum_j w_j`.
    pub fn homogeneous_dimension(&self) -> u32 {
        self.weights.iter().sum()
    }

    /// Largest weight `w_n`.
    pub fn step(&self) -> u32 {
        self.weights.last().copied().unwrap_or(0)
    }

    pub fn growth_string(&self) -> String {
        tuple_string(&self.growth_vector)
    }

    pub fn weights_string(&self) -> String {
        tuple_string(&self.weights)
    }
}

pub fn tuple_string<T: fmt::Display>(v: &[T]) -> String {
    let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
    format!("({})", parts.join(","))
}

/// Flag at `p` from an already grown tower; fails if the rank stays below `n`
/// through every grown level.
pub fn flag_from_tower(tower: &BracketTower, p: &[Rational]) -> Result<Flag> {
    flag_from_levels(&tower.levels, tower.nvars(), p)
}

fn flag_from_levels(levels: &[Vec<(BracketIndex, SymField)>], n: usize, p: &[Rational]) -> Result<Flag> {
    if p.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.len(),
        });
    }
    let mut span = RationalSpan::new();
    let mut growth = Vec::new();
    let mut frame = Vec::new();
    let mut frame_fields = Vec::new();
    let mut frame_values = Vec::new();
    let mut weights = Vec::new();
    for (lvl, brackets) in levels.iter().enumerate() {
        let s = lvl + 1;
        for (idx, f) in brackets {
            let v = f.evaluate(p)?;
            if span.insert(&v) {
                frame.push(idx.clone());
                frame_fields.push(f.clone());
                frame_values.push(v);
                weights.push(s as u32);
                if span.rank() == n {
                    break;
                }
            }
        }
        growth.push(span.rank());
        if span.rank() == n {
            return Ok(Flag {
                point: p.to_vec(),
                growth_vector: growth,
                weights,
                degree_of_nonholonomy: s,
                adapted_frame: frame,
                frame_fields,
                frame_values,
                regular: None,
            });
        }
    }
    Err(Error::ChowFails {
        stalled_rank: span.rank(),
        dim: n,
        depth: levels.len(),
    })
}

/// Grows `tower` as needed and computes the flag at `p`.
pub fn flag_in_tower(tower: &mut BracketTower, p: &[Rational], depth_cap: usize) -> Result<Flag> {
    if depth_cap == 0 {
        return Err(Error::InvalidArgument("depth_cap must be at least 1".into()));
    }
    let n = tower.nvars();
    let mut s = 1;
    loop {
        tower.grow_to(s)?;
        match flag_from_levels(&tower.levels[..s], n, p) {
            Ok(flag) => return Ok(flag),
            Err(Error::ChowFails { stalled_rank, .. }) => {
                if s >= depth_cap || tower.level(s).is_empty() {
                    return Err(Error::ChowFails {
                        stalled_rank,
                        dim: n,
                        depth: depth_cap,
                    });
                }
            }
            Err(e) => return Err(e),
        }
        s += 1;
    }
}

pub fn flag_at(sys: &SystemDef, p: &[Rational], depth_cap: usize) -> Result<Flag> {
    let mut tower = BracketTower::for_system(sys);
    flag_in_tower(&mut tower, p, depth_cap)
}

#[derive(Clone, Debug)]
pub struct RegularityEvidence {
    /// True means "no counterexample found among the probes".
    pub regular: bool,
    pub growth_at_p: Vec<usize>,
    pub witness: Option<Vec<Rational>>,
    pub witness_growth: Option<Vec<usize>>,
    pub probes: usize,
}

/// Random rational points in the cube of half-side `radius` around `p`.
pub fn probe_points(p: &[Rational], radius: f64, count: usize, seed: u64) -> Vec<Vec<Rational>> {
    const DEN: i64 = 1 << 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = crate::symfield::poly::from_f64(radius);
    (0..count)
        .map(|_| {
            p.iter()
                .map(|c| c + rat(rng.gen_range(-DEN..=DEN), DEN) * &r)
                .collect()
        })
        .collect()
}

/// Compares growth vectors at seeded random points near `p` against the one at `p`.
pub fn is_regular(
    sys: &SystemDef,
    p: &[Rational],
    depth_cap: usize,
    probe_radius: f64,
    probe_count: usize,
    seed: u64,
) -> Result<RegularityEvidence> {
    let mut tower = BracketTower::for_system(sys);
    let flag = flag_in_tower(&mut tower, p, depth_cap)?;
    let probes = probe_points(p, probe_radius, probe_count, seed);
    let results: Vec<Result<Flag>> = probes.par_iter().map(|q| flag_from_tower(&tower, q)).collect();
    for (q, res) in probes.iter().zip(results) {
        let g = res?.growth_vector;
        if g != flag.growth_vector {
            return Ok(RegularityEvidence {
                regular: false,
                growth_at_p: flag.growth_vector,
                witness: Some(q.clone()),
                witness_growth: Some(g),
                probes: probe_count,
            });
        }
    }
    Ok(RegularityEvidence {
        regular: true,
        growth_at_p: flag.growth_vector,
        witness: None,
        witness_growth: None,
        probes: probe_count,
    })
}

#[derive(Clone, Debug)]
pub struct ChowCertificate {
    pub jacobian: DMatrix<f64>,
    pub condition_number: f64,
    pub numeric_rank: usize,
    /// Largest deviation between a Jacobian column and `X_{I_j}(p)`.
    pub column_error: f64,
}

/// Finite-difference Jacobian at 0 of `(t_1..t_n) -> psi^{I_n}_{t_n} o ... o psi^{I_1}_{t_1}(p)`.
pub fn chow_certificate(sys: &SystemDef, flag: &Flag, h: f64, cfg: &OdeConfig) -> Result<ChowCertificate> {
    let n = sys.dim();
    let compiled = CompiledSystem::new(&sys.fields);
    let p = point_to_f64(&flag.point);
    let phi = |t: &[f64]| -> Result<Vec<f64>> {
        let mut x = p.clone();
        for (idx, &ti) in flag.adapted_frame.iter().zip(t) {
            x = psi_flow(&compiled, idx, &x, ti, cfg)?;
        }
        Ok(x)
    };
    let mut jac = DMatrix::zeros(n, n);
    let mut column_error: f64 = 0.0;
    for j in 0..n {
        let mut tp = vec![0.0; n];
        let mut tm = vec![0.0; n];
        tp[j] = h;
        tm[j] = -h;
        let a = phi(&tp)?;
        let b = phi(&tm)?;
        let expected = point_to_f64(&flag.frame_values[j]);
        for i in 0..n {
            let d = (a[i] - b[i]) / (2.0 * h);
            jac[(i, j)] = d;
            column_error = column_error.max((d - expected[i]).abs());
        }
    }
    let sv = jac.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let rank = sv.iter().filter(|s| **s > 1e-6 * smax.max(1e-300)).count();
    if rank < n {
        return Err(Error::SingularJacobian { rank, dim: n });
    }
    Ok(ChowCertificate {
        jacobian: jac,
        condition_number: smax / smin,
        numeric_rank: rank,
        column_error,
    })
}

/// The matrix whose columns are the adapted-frame values at the flag point.
pub fn frame_matrix(flag: &Flag) -> Vec<Vec<Rational>> {
    let n = flag.dim();
    (0..n)
        .map(|i| (0..n).map(|j| flag.frame_values[j][i].clone()).collect())
        .collect()
}

/// Exact inverse of a square rational matrix (rows), or `None` if singular.
pub fn invert_rational(a: &[Vec<Rational>]) -> Option<Vec<Vec<Rational>>> {
    let n = a.len();
    let mut m: Vec<Vec<Rational>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let inv = m[col][col].recip();
        m[col].iter_mut().for_each(|c| *c *= &inv);
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let c = m[r][col].clone();
                let pivot_row = m[col].clone();
                for (a, b) in m[r].iter_mut().zip(&pivot_row) {
                    *a -= &c * b;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::symfield::rint;

    fn origin(n: usize) -> Vec<Rational> {
        vec![Rational::zero(); n]
    }

    #[test]
    fn display_and_parse() {
        let i = BracketIndex::from_one_based(&[1, 1, 2]).unwrap();
        assert_eq!(i.to_string(), "[1,[1,2]]");
        assert_eq!("[1,[1,2]]".parse::<BracketIndex>().unwrap(), i);
        assert_eq!("1,1,2".parse::<BracketIndex>().unwrap(), i);
        assert_eq!(BracketIndex::single(1).to_string(), "2");
        assert!("0,1".parse::<BracketIndex>().is_err());
    }

    #[test]
    fn iterated_brackets_martinet() {
        let sys = fixtures::martinet();
        let x12 = iterated_bracket(&sys, &"1,2".parse().unwrap()).unwrap();
        assert_eq!(x12.component(2).to_string(), "x1");
        let x112 = iterated_bracket(&sys, &"1,1,2".parse().unwrap()).unwrap();
        assert_eq!(x112, SymField::coordinate(3, 2));
        assert_eq!(iterated_bracket(&sys, &"2".parse().unwrap()).unwrap(), sys.fields[1]);
        assert!(iterated_bracket(&sys, &"1,3".parse().unwrap()).is_err());
    }

    #[test]
    fn flags_of_fixtures() {
        let h = flag_at(&fixtures::heisenberg(), &origin(3), 8).unwrap();
        assert_eq!((h.growth_vector.clone(), h.weights.clone()), (vec![2, 3], vec![1, 1, 2]));
        let m = fixtures::martinet();
        let f0 = flag_at(&m, &origin(3), 8).unwrap();
        assert_eq!((f0.growth_vector.clone(), f0.weights.clone()), (vec![2, 2, 3], vec![1, 1, 3]));
        assert_eq!(f0.adapted_frame[2].to_string(), "[1,[1,2]]");
        let f1 = flag_at(&m, &[rint(1), rint(0), rint(0)], 8).unwrap();
        assert_eq!(f1.growth_vector, vec![2, 3]);
        let g = flag_at(&fixtures::grusin(), &origin(2), 8).unwrap();
        assert_eq!((g.growth_vector.clone(), g.weights.clone()), (vec![1, 2], vec![1, 2]));
    }

    #[test]
    fn chow_failure_reports_stalled_rank() {
        let f = SymField::coordinate(2, 0);
        let sys = SystemDef::from_fields("line", &["x", "y"], vec![f]).unwrap();
        match flag_at(&sys, &origin(2), 5) {
            Err(Error::ChowFails { stalled_rank, dim, .. }) => assert_eq!((stalled_rank, dim), (1, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn regularity_probes() {
        let h = is_regular(&fixtures::heisenberg(), &origin(3), 8, 0.5, 16, 1).unwrap();
        assert!(h.regular);
        let m = is_regular(&fixtures::martinet(), &origin(3), 8, 0.5, 16, 1).unwrap();
        assert!(!m.regular);
        assert!(!m.witness.unwrap()[0].is_zero());
        let g = is_regular(&fixtures::grusin(), &origin(2), 8, 0.5, 16, 1).unwrap();
        assert!(!g.regular);
        assert_eq!(g.witness_growth, Some(vec![2]));
    }

    #[test]
    fn rank_and_inverse() {
        let v = vec![vec![rint(1), rint(2)], vec![rint(2), rint(4)]];
        assert_eq!(exact_rank(&v), 1);
        let a = vec![vec![rint(2), rint(1)], vec![rint(1), rint(1)]];
        let inv = invert_rational(&a).unwrap();
        assert_eq!(inv, vec![vec![rint(1), rint(-1)], vec![rint(-1), rint(2)]]);
        assert!(invert_rational(&v).is_none());
    }
}
