//! Privileged coordinates: linearly adapted changes, the algebraic construction,
//! numeric canonical coordinates of the second kind, orders and push-forwards.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Zero};

use crate::control::{field_flow, OdeConfig};
use crate::error::{Error, Result};
use crate::liealgebra::{frame_matrix, invert_rational, BracketIndex, Flag};
use crate::symfield::poly::factorial;
use crate::symfield::{point_to_f64, CompiledField, CompiledPoly, Poly, Rational, SymField, SystemDef};

/// Weighted degree or nonholonomic order; `Infinite` for the zero function or field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WeightedDegree {
    Finite(i64),
    Infinite,
}

impl WeightedDegree {
    pub fn finite(self) -> Option<i64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Infinite => None,
        }
    }
}

impl fmt::Display for WeightedDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v}"),
            Self::Infinite => write!(f, "+inf"),
        }
    }
}

/// `w(alpha) = sum_j w_j alpha_j`.
pub fn weight_of(alpha: &[u32], weights: &[u32]) -> i64 {
    alpha.iter().zip(weights).map(|(a, w)| (*a as i64) * (*w as i64)).sum()
}

/// Least weighted degree of the monomials of `f`.
pub fn weighted_degree(f: &Poly, weights: &[u32]) -> WeightedDegree {
    f.terms()
        .map(|(e, _)| weight_of(e, weights))
        .min()
        .map_or(WeightedDegree::Infinite, WeightedDegree::Finite)
}

/// Order of a function already written in the chart coordinates.
pub fn ord_function(f: &Poly, chart: &PrivilegedChart) -> WeightedDegree {
    weighted_degree(f, &chart.weights)
}

/// Least `w(alpha) - w_j` over the monomial fields `z^alpha d/dz_j` of `x`.
pub fn ord_field_weights(x: &SymField, weights: &[u32]) -> WeightedDegree {
    x.components()
        .iter()
        .enumerate()
        .flat_map(|(j, c)| c.terms().map(move |(e, _)| weight_of(e, weights) - weights[j] as i64))
        .min()
        .map_or(WeightedDegree::Infinite, WeightedDegree::Finite)
}

/// Order of a field already written in the chart coordinates.
pub fn ord_field(x: &SymField, chart: &PrivilegedChart) -> WeightedDegree {
    ord_field_weights(x, &chart.weights)
}

/// Every exponent vector with `w(alpha) <= max_weight`, in graded lexicographic order.
pub fn multi_indices_up_to(weights: &[u32], max_weight: i64) -> Vec<Vec<u32>> {
    fn rec(weights: &[u32], pos: usize, left: i64, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == weights.len() {
            out.push(cur.clone());
            return;
        }
        let w = weights[pos] as i64;
        let mut k = 0;
        while k * w <= left {
            cur.push(k as u32);
            rec(weights, pos + 1, left - k * w, cur, out);
            cur.pop();
            k += 1;
        }
    }
    let mut out = Vec::new();
    if max_weight >= 0 {
        rec(weights, 0, max_weight, &mut Vec::new(), &mut out);
    }
    out.sort_by_key(|a| (weight_of(a, weights), std::cmp::Reverse(a.clone())));
    out
}

fn translate_poly(f: &Poly, p: &[Rational]) -> Poly {
    if p.iter().all(Zero::is_zero) {
        f.clone()
    } else {
        f.translate(p).expect("point arity checked by caller")
    }
}

fn translate_field(f: &SymField, p: &[Rational]) -> SymField {
    f.map_components(|c| translate_poly(c, p))
}

/// `Y_{w_0}(Y_{w_1}(... Y_{w_k}(g)))(0)` for fields and `g` centered at the origin;
/// only the jets that can reach the value at 0 are kept.
fn word_value_at_origin(fields: &[SymField], word: &[usize], g: &Poly) -> Result<Rational> {
    let mut h = g.truncate(word.len() as u32);
    for (k, &i) in word.iter().rev().enumerate() {
        let remaining = (word.len() - k - 1) as u32;
        h = fields[i].truncate(remaining).apply(&h)?.truncate(remaining);
        if h.is_zero() {
            return Ok(Rational::zero());
        }
    }
    Ok(h.constant_term())
}

/// The word `1^a1 2^a2 ... n^an` (leftmost applied last).
fn alpha_word(alpha: &[u32]) -> Vec<usize> {
    alpha
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| std::iter::repeat_n(i, a as usize))
        .collect()
}

/// `(Y_1^a1 ... Y_n^an f)(p)` computed exactly.
pub fn frame_derivative_at(frame: &[SymField], alpha: &[u32], f: &Poly, p: &[Rational]) -> Result<Rational> {
    let centered: Vec<SymField> = frame.iter().map(|y| translate_field(y, p)).collect();
    word_value_at_origin(&centered, &alpha_word(alpha), &translate_poly(f, p))
}

/// Least `s` such that some `X_{i1}...X_{is} f (p)` is nonzero.
pub fn ord_function_by_derivatives(sys: &SystemDef, f: &Poly, p: &[Rational], cap: u32) -> Result<u32> {
    ord_by_derivatives_of(&sys.fields, f, p, cap)
}

pub fn ord_by_derivatives_of(fields: &[SymField], f: &Poly, p: &[Rational], cap: u32) -> Result<u32> {
    if p.len() != f.nvars() {
        return Err(Error::DimensionMismatch {
            expected: f.nvars(),
            got: p.len(),
        });
    }
    let centered: Vec<SymField> = fields.iter().map(|x| translate_field(x, p)).collect();
    let mut level = vec![translate_poly(f, p).truncate(cap)];
    for s in 0..=cap {
        if level.iter().any(|g| !g.constant_term().is_zero()) {
            return Ok(s);
        }
        if s == cap {
            break;
        }
        let remaining = cap - s - 1;
        let mut next = Vec::new();
        for g in &level {
            for x in &centered {
                let h = x.truncate(remaining).apply(g)?.truncate(remaining);
                if !h.is_zero() && !next.contains(&h) {
                    next.push(h);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }
    Err(Error::ExceedsCap { cap })
}

/// `x = center + matrix * y`, with the frame values at the center as the columns of `matrix`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineChange {
    pub center: Vec<Rational>,
    pub matrix: Vec<Vec<Rational>>,
    pub inverse: Vec<Vec<Rational>>,
}

impl AffineChange {
    pub fn identity(center: Vec<Rational>) -> Self {
        let n = center.len();
        let id: Vec<Vec<Rational>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect())
            .collect();
        Self {
            center,
            matrix: id.clone(),
            inverse: id,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_identity(&self) -> bool {
        self.center.iter().all(Zero::is_zero) && *self == Self::identity(self.center.clone())
    }

    /// `y_i(x) = sum_k inverse[i][k] (x_k - center_k)`.
    pub fn y_of_x(&self) -> Vec<Poly> {
        affine_polys(&self.inverse, &self.center, true)
    }

    /// `x_i(y) = center_i + sum_k matrix[i][k] y_k`.
    pub fn x_of_y(&self) -> Vec<Poly> {
        affine_polys(&self.matrix, &self.center, false)
    }
}

fn affine_polys(m: &[Vec<Rational>], c: &[Rational], subtract_center: bool) -> Vec<Poly> {
    let n = c.len();
    (0..n)
        .map(|i| {
            let mut p = Poly::zero(n);
            let mut konst = Rational::zero();
            for k in 0..n {
                if !m[i][k].is_zero() {
                    p = &p + &Poly::var(n, k).scale(&m[i][k]);
                    if subtract_center {
                        konst -= &m[i][k] * &c[k];
                    }
                }
            }
            if !subtract_center {
                konst = c[i].clone();
            }
            &p + &Poly::constant(n, konst)
        })
        .collect()
}

/// Affine coordinates centered at the flag point with `d/dy_i = Y_i(p)`.
pub fn linear_adapted_change(flag: &Flag) -> Result<AffineChange> {
    let matrix = frame_matrix(flag);
    let inverse = invert_rational(&matrix).ok_or(Error::SingularFrame)?;
    Ok(AffineChange {
        center: flag.point.clone(),
        matrix,
        inverse,
    })
}

/// A polynomial chart centered at `center` with `z = forward(y)`, `y = backward(z)`
/// and `y` linearly adapted.
#[derive(Clone, Debug)]
pub struct PrivilegedChart {
    pub center: Vec<Rational>,
    pub weights: Vec<u32>,
    pub frame_used: Vec<BracketIndex>,
    pub affine: AffineChange,
    /// `z_j` as polynomials in `y`.
    pub forward: Vec<Poly>,
    /// `y_j` as polynomials in `z`.
    pub backward: Vec<Poly>,
    /// Truncation degree for push-forwards.
    pub degree: u32,
    z_of_x: Vec<Poly>,
    x_of_z: Vec<Poly>,
    z_eval: Vec<CompiledPoly>,
    x_eval: Vec<CompiledPoly>,
}

impl PrivilegedChart {
    fn assemble(
        weights: Vec<u32>,
        frame_used: Vec<BracketIndex>,
        affine: AffineChange,
        forward: Vec<Poly>,
        backward: Vec<Poly>,
        degree: u32,
    ) -> Result<Self> {
        let z_of_x = forward
            .iter()
            .map(|f| f.compose(&affine.y_of_x(), None))
            .collect::<Result<Vec<_>>>()?;
        let x_lin = affine.x_of_y();
        let x_of_z = x_lin
            .iter()
            .map(|f| f.compose(&backward, None))
            .collect::<Result<Vec<_>>>()?;
        let z_eval = z_of_x.iter().map(Poly::compile).collect();
        let x_eval = x_of_z.iter().map(Poly::compile).collect();
        Ok(Self {
            center: affine.center.clone(),
            weights,
            frame_used,
            affine,
            forward,
            backward,
            degree,
            z_of_x,
            x_of_z,
            z_eval,
            x_eval,
        })
    }

    /// Chart from explicit coordinate functions `z_j(x)`, which must vanish at
    /// `center` and have an invertible linear part there.
    pub fn from_coordinates(
        center: Vec<Rational>,
        weights: Vec<u32>,
        frame_used: Vec<BracketIndex>,
        z_of_x: Vec<Poly>,
        degree: u32,
    ) -> Result<Self> {
        let n = center.len();
        if z_of_x.len() != n || weights.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: z_of_x.len().min(weights.len()),
            });
        }
        for (j, z) in z_of_x.iter().enumerate() {
            if !z.evaluate(&center)?.is_zero() {
                return Err(Error::InvalidArgument(format!("coordinate {} does not vanish at the center", j + 1)));
            }
        }
        let lin: Vec<Vec<Rational>> = z_of_x
            .iter()
            .map(|z| {
                (0..n)
                    .map(|k| z.partial_derivative(k).and_then(|d| d.evaluate(&center)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let matrix = invert_rational(&lin).ok_or(Error::SingularFrame)?;
        let affine = AffineChange {
            center,
            matrix,
            inverse: lin,
        };
        let x_of_y = affine.x_of_y();
        let forward = z_of_x
            .iter()
            .map(|z| z.compose(&x_of_y, None))
            .collect::<Result<Vec<_>>>()?;
        let backward = invert_near_identity(&forward, degree)?;
        Self::assemble(weights, frame_used, affine, forward, backward, degree)
    }

    /// The chart `z = x - center` with the given weights (useful for charts that are
    /// adapted but possibly not privileged).
    pub fn translation(center: Vec<Rational>, weights: Vec<u32>, frame_used: Vec<BracketIndex>, degree: u32) -> Result<Self> {
        let n = center.len();
        let z = (0..n)
            .map(|j| &Poly::var(n, j) - &Poly::constant(n, center[j].clone()))
            .collect();
        Self::from_coordinates(center, weights, frame_used, z, degree)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn z_of_x(&self) -> &[Poly] {
        &self.z_of_x
    }

    pub fn x_of_z(&self) -> &[Poly] {
        &self.x_of_z
    }

    pub fn to_chart(&self, x: &[f64]) -> Vec<f64> {
        self.z_eval.iter().map(|c| c.eval(x)).collect()
    }

    pub fn from_chart(&self, z: &[f64]) -> Vec<f64> {
        self.x_eval.iter().map(|c| c.eval(z)).collect()
    }

    pub fn to_chart_exact(&self, x: &[Rational]) -> Result<Vec<Rational>> {
        self.z_of_x.iter().map(|p| p.evaluate(x)).collect()
    }

    pub fn from_chart_exact(&self, z: &[Rational]) -> Result<Vec<Rational>> {
        self.x_of_z.iter().map(|p| p.evaluate(z)).collect()
    }

    /// `sum_j |z_j|^(1/w_j)`.
    pub fn pseudo_norm(&self, z: &[f64]) -> f64 {
        pseudo_norm(z, &self.weights)
    }

    /// A function of `x` rewritten in chart coordinates.
    pub fn function_in_chart(&self, f: &Poly) -> Result<Poly> {
        f.compose(&self.x_of_z, None)
    }

    /// A function of the chart coordinates rewritten in `x`.
    pub fn function_from_chart(&self, g: &Poly) -> Result<Poly> {
        g.compose(&self.z_of_x, None)
    }

    /// `X` written in chart coordinates, truncated at the chart degree.
    pub fn pushforward(&self, x: &SymField) -> Result<SymField> {
        let comps = self
            .z_of_x
            .iter()
            .map(|zj| {
                let xz = x.apply(zj)?;
                xz.compose(&self.x_of_z, Some(self.degree)).map(|p| p.truncate(self.degree))
            })
            .collect::<Result<Vec<_>>>()?;
        SymField::new(comps)
    }

    /// True when `forward` and `backward` compose to the identity up to the chart degree.
    pub fn round_trip_ok(&self) -> Result<bool> {
        let n = self.dim();
        for (j, f) in self.forward.iter().enumerate() {
            let c = f.compose(&self.backward, Some(self.degree))?.truncate(self.degree);
            if c != Poly::var(n, j) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn pseudo_norm(z: &[f64], weights: &[u32]) -> f64 {
    z.iter()
        .zip(weights)
        .map(|(v, w)| v.abs().powf(1.0 / *w as f64))
        .sum()
}

/// Inverse of a polynomial map with identity linear part. Exact for triangular maps
/// (`f_j - y_j` depending only on `y_1..y_{j-1}`); otherwise a fixed-point
/// iteration truncated at `degree`.
pub fn invert_near_identity(forward: &[Poly], degree: u32) -> Result<Vec<Poly>> {
    let n = forward.len();
    let nonlinear: Vec<Poly> = forward
        .iter()
        .enumerate()
        .map(|(j, f)| f - &Poly::var(n, j))
        .collect();
    let triangular = nonlinear
        .iter()
        .enumerate()
        .all(|(j, g)| g.terms().all(|(e, _)| e[j..].iter().all(|&a| a == 0)));
    if triangular {
        let mut back: Vec<Poly> = Vec::with_capacity(n);
        for (j, g) in nonlinear.iter().enumerate() {
            let mut subs = back.clone();
            subs.extend((j..n).map(|k| Poly::var(n, k)));
            let yj = &Poly::var(n, j) - &g.compose(&subs, None)?;
            back.push(yj);
        }
        return Ok(back);
    }
    let mut back: Vec<Poly> = (0..n).map(|j| Poly::var(n, j)).collect();
    for _ in 0..=degree {
        let next: Vec<Poly> = (0..n)
            .map(|j| {
                let g = nonlinear[j].compose(&back, Some(degree))?;
                Ok((&Poly::var(n, j) - &g).truncate(degree))
            })
            .collect::<Result<_>>()?;
        if next == back {
            break;
        }
        back = next;
    }
    Ok(back)
}

/// Algebraic privileged coordinates at the flag point:
/// `z_j = y_j - sum_{k=2}^{w_j - 1} h_k(y_1..y_{j-1})`.
pub fn algebraic_privileged_coords(sys: &SystemDef, flag: &Flag) -> Result<PrivilegedChart> {
    let n = sys.dim();
    let affine = linear_adapted_change(flag)?;
    let p = &flag.point;
    let frame: Vec<SymField> = flag.frame_fields.iter().map(|y| translate_field(y, p)).collect();
    // y as polynomials in the centered variables x' = x - p
    let y_lin: Vec<Poly> = (0..n)
        .map(|i| {
            (0..n).fold(Poly::zero(n), |acc, k| {
                if affine.inverse[i][k].is_zero() {
                    acc
                } else {
                    &acc + &Poly::var(n, k).scale(&affine.inverse[i][k])
                }
            })
        })
        .collect();
    let mut forward = Vec::with_capacity(n);
    for j in 0..n {
        let wj = flag.weights[j] as i64;
        // h_k in the y variables (only y_1..y_{j-1} occur)
        let mut hs: Vec<Poly> = Vec::new();
        for k in 2..wj.max(2) {
            // g = y_j - sum_{q<k} h_q, as a function of x'
            let mut g_y = Poly::var(n, j);
            for h in &hs {
                g_y = &g_y - h;
            }
            let g_x = g_y.compose(&y_lin, None)?;
            let mut hk = Poly::zero(n);
            for alpha in alphas_of_total_degree(j, k as u32, n) {
                if weight_of(&alpha, &flag.weights) >= wj {
                    continue;
                }
                let c = word_value_at_origin(&frame, &alpha_word(&alpha), &g_x)?;
                if c.is_zero() {
                    continue;
                }
                let denom = alpha.iter().fold(Rational::one(), |acc, &a| acc * factorial(a));
                hk.add_term(alpha.clone(), c / denom);
            }
            hs.push(hk);
        }
        let mut zj = Poly::var(n, j);
        for h in &hs {
            zj = &zj - h;
        }
        forward.push(zj);
    }
    let backward = invert_near_identity(&forward, sys.taylor_degree)?;
    PrivilegedChart::assemble(
        flag.weights.clone(),
        flag.adapted_frame.clone(),
        affine,
        forward,
        backward,
        sys.taylor_degree,
    )
}

/// Exponents over the first `j` variables with total degree `k`, padded to `n`.
fn alphas_of_total_degree(j: usize, k: u32, n: usize) -> Vec<Vec<u32>> {
    fn rec(pos: usize, j: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == j {
            cur[pos] = left;
            out.push(cur.clone());
            cur[pos] = 0;
            return;
        }
        for a in (0..=left).rev() {
            cur[pos] = a;
            rec(pos + 1, j, left - a, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    if j > 0 {
        rec(0, j, k, &mut vec![0; n], &mut out);
    }
    out
}

#[derive(Clone, Debug)]
pub struct CoordinateCheck {
    pub index: usize,
    pub weight: u32,
    pub passed: bool,
    /// First `alpha` with `w(alpha) < w_j` and `(Y^alpha z_j)(p) != 0`.
    pub failing_alpha: Option<(Vec<u32>, Rational)>,
    /// Some `alpha` with `w(alpha) = w_j` and `(Y^alpha z_j)(p) != 0`.
    pub exhibited_alpha: Option<Vec<u32>>,
}

#[derive(Clone, Debug)]
pub struct PrivilegedReport {
    pub coordinates: Vec<CoordinateCheck>,
    pub passed: bool,
}

impl PrivilegedReport {
    pub fn first_failure(&self) -> Option<&CoordinateCheck> {
        self.coordinates.iter().find(|c| !c.passed)
    }
}

impl fmt::Display for PrivilegedReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.coordinates {
            write!(f, "z{} (weight {}): {}", c.index + 1, c.weight, if c.passed { "ok" } else { "FAIL" })?;
            if let Some((a, v)) = &c.failing_alpha {
                write!(f, ", Y^{:?} z{}(p) = {} with w(alpha) < {}", a, c.index + 1, v, c.weight)?;
            }
            if let Some(a) = &c.exhibited_alpha {
                write!(f, ", order reached by Y^{a:?}")?;
            }
            writeln!(f)?;
        }
        write!(f, "privileged: {}", if self.passed { "yes" } else { "no" })
    }
}

/// Checks `(Y^alpha z_j)(p) = 0` for every `w(alpha) < w_j` and that some
/// `alpha` with `w(alpha) = w_j` gives a nonzero value, using the flag's frame.
pub fn verify_privileged(chart: &PrivilegedChart, flag: &Flag) -> Result<PrivilegedReport> {
    let p = &flag.point;
    let frame: Vec<SymField> = flag.frame_fields.iter().map(|y| translate_field(y, p)).collect();
    let mut coords = Vec::new();
    for (j, zj) in chart.z_of_x().iter().enumerate() {
        let wj = chart.weights[j];
        let g = translate_poly(zj, p);
        let mut failing = None;
        let mut exhibited = None;
        for alpha in multi_indices_up_to(&flag.weights, wj as i64) {
            let w = weight_of(&alpha, &flag.weights);
            if w == wj as i64 && exhibited.is_some() {
                continue;
            }
            let v = word_value_at_origin(&frame, &alpha_word(&alpha), &g)?;
            if v.is_zero() {
                continue;
            }
            if w < wj as i64 {
                failing = Some((alpha, v));
                break;
            }
            exhibited = Some(alpha);
        }
        coords.push(CoordinateCheck {
            index: j,
            weight: wj,
            passed: failing.is_none() && exhibited.is_some(),
            failing_alpha: failing,
            exhibited_alpha: exhibited,
        });
    }
    let passed = coords.iter().all(|c| c.passed);
    Ok(PrivilegedReport {
        coordinates: coords,
        passed,
    })
}

#[derive(Clone, Debug)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Inverse is refused for targets whose linear-chart norm exceeds this.
    pub radius: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            radius: 1.0,
        }
    }
}

/// Canonical coordinates of the second kind: `z -> exp(z_n Y_n) o ... o exp(z_1 Y_1)(p)`.
#[derive(Clone, Debug)]
pub struct CanonicalChart {
    pub center: Vec<f64>,
    pub weights: Vec<u32>,
    pub frame_used: Vec<BracketIndex>,
    frame: Vec<CompiledField>,
    affine_inverse: DMatrix<f64>,
    pub ode: OdeConfig,
    pub newton: NewtonConfig,
}

pub fn canonical_coords_second_kind(flag: &Flag, ode: OdeConfig, newton: NewtonConfig) -> Result<CanonicalChart> {
    let affine = linear_adapted_change(flag)?;
    let n = flag.dim();
    let inv = DMatrix::from_fn(n, n, |i, j| crate::symfield::poly::to_f64(&affine.inverse[i][j]));
    Ok(CanonicalChart {
        center: point_to_f64(&flag.point),
        weights: flag.weights.clone(),
        frame_used: flag.adapted_frame.clone(),
        frame: flag.frame_fields.iter().map(SymField::compile).collect(),
        affine_inverse: inv,
        ode,
        newton,
    })
}

impl CanonicalChart {
    /// Point with chart coordinates `z`.
    pub fn from_chart(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.center.clone();
        for (y, &zj) in self.frame.iter().zip(z) {
            x = field_flow(y, &x, zj, &self.ode)?;
        }
        Ok(x)
    }

    /// Chart coordinates of `x` by damped Newton on [`Self::from_chart`].
    pub fn to_chart(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.center.len();
        let dx = DVector::from_iterator(n, x.iter().zip(&self.center).map(|(a, b)| a - b));
        let mut z = &self.affine_inverse * dx;
        if z.norm() > self.newton.radius {
            return Err(Error::OutOfRadius {
                norm: z.norm(),
                radius: self.newton.radius,
            });
        }
        let target = DVector::from_column_slice(x);
        let resid = |z: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(DVector::from_vec(self.from_chart(z.as_slice())?) - &target)
        };
        let mut r = resid(&z)?;
        for _ in 0..self.newton.max_iter {
            if r.norm() < self.newton.tol {
                return Ok(z.as_slice().to_vec());
            }
            let h = 1e-7;
            let mut jac = DMatrix::zeros(n, n);
            for k in 0..n {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[k] += h;
                zm[k] -= h;
                let col = (resid(&zp)? - resid(&zm)?) / (2.0 * h);
                jac.set_column(k, &col);
            }
            let step = jac.lu().solve(&r).ok_or(Error::SingularJacobian { rank: n - 1, dim: n })?;
            let mut lambda = 1.0;
            loop {
                let cand = &z - &step * lambda;
                let rc = resid(&cand)?;
                if rc.norm() < r.norm() || lambda < 1e-4 {
                    z = cand;
                    r = rc;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if r.norm() < self.newton.tol {
            Ok(z.as_slice().to_vec())
        } else {
            Err(Error::NewtonDiverged { residual: r.norm() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::liealgebra::flag_at;
    use crate::symfield::{parse_expr, rat, rint};

    fn zero(n: usize) -> Vec<Rational> {
        vec![Rational::zero(); n]
    }

    fn poly(src: &str, vars: &[&str]) -> Poly {
        let names: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        crate::symfield::taylor_truncate(&parse_expr(src, &names).unwrap(), &zero(vars.len()), 20).unwrap()
    }

    #[test]
    fn weighted_degrees() {
        let w = [1, 1, 2];
        assert_eq!(weighted_degree(&poly("z", &["x", "y", "z"]), &w), WeightedDegree::Finite(2));
        assert_eq!(weighted_degree(&poly("x*y", &["x", "y", "z"]), &w), WeightedDegree::Finite(2));
        assert_eq!(weighted_degree(&Poly::constant(3, rint(5)), &w), WeightedDegree::Finite(0));
        assert_eq!(weighted_degree(&Poly::zero(3), &w), WeightedDegree::Infinite);
    }

    #[test]
    fn multi_index_enumeration() {
        let all = multi_indices_up_to(&[1, 1, 2], 2);
        assert_eq!(all.len(), 1 + 2 + 4);
        assert!(all.iter().all(|a| weight_of(a, &[1, 1, 2]) <= 2));
        assert_eq!(all[0], vec![0, 0, 0]);
    }

    #[test]
    fn linear_changes() {
        let h = fixtures::heisenberg();
        let f0 = flag_at(&h, &zero(3), 8).unwrap();
        assert!(linear_adapted_change(&f0).unwrap().is_identity());
        let m = fixtures::martinet();
        assert!(linear_adapted_change(&flag_at(&m, &zero(3), 8).unwrap()).unwrap().is_identity());
        let p = vec![rint(1), rint(1), rint(0)];
        let a = linear_adapted_change(&flag_at(&h, &p, 8).unwrap()).unwrap();
        let cols: Vec<Vec<Rational>> = (0..3).map(|j| (0..3).map(|i| a.matrix[i][j].clone()).collect()).collect();
        assert_eq!(cols[0], vec![rint(1), rint(0), rat(-1, 2)]);
        assert_eq!(cols[1], vec![rint(0), rint(1), rat(1, 2)]);
        assert_eq!(cols[2], vec![rint(0), rint(0), rint(1)]);
    }

    #[test]
    fn heisenberg_and_martinet_charts_are_identity() {
        for sys in [fixtures::heisenberg(), fixtures::martinet()] {
            let flag = flag_at(&sys, &zero(3), 8).unwrap();
            let chart = algebraic_privileged_coords(&sys, &flag).unwrap();
            for j in 0..3 {
                assert_eq!(chart.z_of_x()[j], Poly::var(3, j), "{}", sys.name);
            }
            assert!(verify_privileged(&chart, &flag).unwrap().passed);
        }
    }

    #[test]
    fn nonprivileged_example() {
        let sys = fixtures::nonprivileged();
        let flag = flag_at(&sys, &zero(3), 8).unwrap();
        assert_eq!(flag.weights, vec![1, 1, 3]);
        let adapted = PrivilegedChart::translation(zero(3), flag.weights.clone(), flag.adapted_frame.clone(), 12).unwrap();
        let rep = verify_privileged(&adapted, &flag).unwrap();
        let bad = rep.first_failure().unwrap();
        assert_eq!(bad.index, 2);
        assert_eq!(bad.failing_alpha, Some((vec![0, 2, 0], rint(1))));
        let alg = algebraic_privileged_coords(&sys, &flag).unwrap();
        assert_eq!(alg.z_of_x()[2], poly("z/2 - y^2/4", &["x", "y", "z"]));
        assert!(verify_privileged(&alg, &flag).unwrap().passed);
        let vars = ["x", "y", "z"];
        let hand = PrivilegedChart::from_coordinates(
            zero(3),
            flag.weights.clone(),
            flag.adapted_frame.clone(),
            vec![poly("x", &vars), poly("y", &vars), poly("z - y^2/2", &vars)],
            12,
        )
        .unwrap();
        assert!(verify_privileged(&hand, &flag).unwrap().passed);
        let pushed = hand.pushforward(&sys.fields[1]).unwrap();
        assert_eq!(pushed, SymField::new(vec![Poly::zero(3), Poly::one(3), poly("x^2", &vars)]).unwrap());
    }

    #[test]
    fn orders_by_derivatives() {
        let h = fixtures::heisenberg();
        let vars = ["x", "y", "z"];
        assert_eq!(ord_function_by_derivatives(&h, &poly("z", &vars), &zero(3), 4).unwrap(), 2);
        assert_eq!(ord_function_by_derivatives(&h, &poly("1 + x", &vars), &zero(3), 4).unwrap(), 0);
        let m = fixtures::martinet();
        assert_eq!(ord_function_by_derivatives(&m, &poly("z", &vars), &zero(3), 5).unwrap(), 3);
        assert!(matches!(
            ord_function_by_derivatives(&m, &poly("z", &vars), &zero(3), 2),
            Err(Error::ExceedsCap { cap: 2 })
        ));
        let flag = flag_at(&h, &zero(3), 8).unwrap();
        let x1 = &flag.frame_fields[0];
        let x2 = &flag.frame_fields[1];
        let v = frame_derivative_at(&[x1.clone(), x2.clone()], &[1, 1], &poly("z", &vars), &zero(3)).unwrap();
        assert_eq!(v, rat(1, 2));
    }

    #[test]
    fn field_orders() {
        let h = fixtures::heisenberg();
        let flag = flag_at(&h, &zero(3), 8).unwrap();
        let chart = algebraic_privileged_coords(&h, &flag).unwrap();
        assert_eq!(ord_field(&h.fields[0], &chart), WeightedDegree::Finite(-1));
        assert_eq!(ord_field(&flag.frame_fields[2], &chart), WeightedDegree::Finite(-2));
        assert_eq!(ord_field(&SymField::zero(3), &chart), WeightedDegree::Infinite);
    }

    #[test]
    fn affine_chart_at_regular_point() {
        let h = fixtures::heisenberg();
        let p = vec![rint(1), rint(1), rint(0)];
        let flag = flag_at(&h, &p, 8).unwrap();
        let chart = algebraic_privileged_coords(&h, &flag).unwrap();
        assert!(verify_privileged(&chart, &flag).unwrap().passed);
        assert!(chart.round_trip_ok().unwrap());
        let x1 = chart.pushforward(&h.fields[0]).unwrap();
        assert_eq!(x1.evaluate(&zero(3)).unwrap(), vec![rint(1), rint(0), rint(0)]);
    }

    #[test]
    fn canonical_second_kind() {
        let h = fixtures::heisenberg();
        let flag = flag_at(&h, &zero(3), 8).unwrap();
        let c = canonical_coords_second_kind(&flag, OdeConfig::default(), NewtonConfig::default()).unwrap();
        let x = c.from_chart(&[1.0, 0.0, 0.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-13 && x[1].abs() < 1e-13 && x[2].abs() < 1e-13);
        assert_eq!(c.from_chart(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        let z = [0.2, -0.1, 0.05];
        let back = c.to_chart(&c.from_chart(&z).unwrap()).unwrap();
        for (a, b) in back.iter().zip(z) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
