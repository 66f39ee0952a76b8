//! Numerical checks of the small-time flow expansions: commutator flows,
//! reparametrized commutator flows, the push-forward series and truncated BCH.

use crate::control::{field_flow, rk4, OdeConfig};
use crate::error::{Error, Result};
use crate::liealgebra::{iterated_bracket, BracketIndex};
use crate::report::weighted_linear_fit;
use crate::symfield::{lie_bracket, point_to_f64, rat, CompiledSystem, Rational, SymField, SystemDef};

/// Defects below this are treated as integrator noise.
pub const NOISE_FLOOR: f64 = 1e-11;
pub const EXPONENT_TOLERANCE: f64 = 0.2;

fn flow_i(sys: &CompiledSystem, i: usize, x: &[f64], t: f64, cfg: &OdeConfig) -> Result<Vec<f64>> {
    if i >= sys.nfields() {
        return Err(Error::IndexOutOfRange {
            index: i + 1,
            len: sys.nfields(),
        });
    }
    field_flow(sys.field(i), x, t, cfg)
}

/// How `phi^J_{-t}` is read inside `phi^{iJ}_t = phi^J_{-t} o phi^i_{-t} o phi^J_t o phi^i_t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CommutatorForm {
    /// `phi^J_{-t}` is the inverse map of `phi^J_t`, so every level is a group
    /// commutator and `phi^I_t = id + t^|I| X_I + O(t^(|I|+1))` holds for all `I`.
    #[default]
    Group,
    /// `phi^J_{-t}` is `phi^J` evaluated at time `-t`. Agrees with `Group` when
    /// `|J| = 1`; for longer `J` it leaves a `2 t^|J| X_J` term.
    Literal,
}

/// `phi^I_t(p)` using group commutators.
pub fn commutator_flow(
    sys: &CompiledSystem,
    idx: &BracketIndex,
    p: &[f64],
    t: f64,
    cfg: &OdeConfig,
) -> Result<Vec<f64>> {
    commutator_flow_with(sys, idx, p, t, CommutatorForm::Group, cfg)
}

pub fn commutator_flow_with(
    sys: &CompiledSystem,
    idx: &BracketIndex,
    p: &[f64],
    t: f64,
    form: CommutatorForm,
    cfg: &OdeConfig,
) -> Result<Vec<f64>> {
    match form {
        CommutatorForm::Group => group_commutator(sys, idx, p, t, false, cfg),
        CommutatorForm::Literal => literal_commutator(sys, idx, p, t, cfg),
    }
}

/// `phi^I_t` or, with `inverse`, its inverse map.
fn group_commutator(
    sys: &CompiledSystem,
    idx: &BracketIndex,
    p: &[f64],
    t: f64,
    inverse: bool,
    cfg: &OdeConfig,
) -> Result<Vec<f64>> {
    let i = idx.head();
    let Some(j) = idx.tail() else {
        return flow_i(sys, i, p, if inverse { -t } else { t }, cfg);
    };
    if inverse {
        let x = group_commutator(sys, &j, p, t, false, cfg)?;
        let x = flow_i(sys, i, &x, t, cfg)?;
        let x = group_commutator(sys, &j, &x, t, true, cfg)?;
        flow_i(sys, i, &x, -t, cfg)
    } else {
        let x = flow_i(sys, i, p, t, cfg)?;
        let x = group_commutator(sys, &j, &x, t, false, cfg)?;
        let x = flow_i(sys, i, &x, -t, cfg)?;
        group_commutator(sys, &j, &x, t, true, cfg)
    }
}

fn literal_commutator(sys: &CompiledSystem, idx: &BracketIndex, p: &[f64], t: f64, cfg: &OdeConfig) -> Result<Vec<f64>> {
    let i = idx.head();
    let Some(j) = idx.tail() else {
        return flow_i(sys, i, p, t, cfg);
    };
    let x = flow_i(sys, i, p, t, cfg)?;
    let x = literal_commutator(sys, &j, &x, t, cfg)?;
    let x = flow_i(sys, i, &x, -t, cfg)?;
    literal_commutator(sys, &j, &x, -t, cfg)
}

/// `psi^I_t(p)`: the commutator flow reparametrized so its time derivative at 0 is `X_I`.
pub fn psi_flow(sys: &CompiledSystem, idx: &BracketIndex, p: &[f64], t: f64, cfg: &OdeConfig) -> Result<Vec<f64>> {
    let k = idx.len();
    let s = t.abs().powf(1.0 / k as f64);
    if t >= 0.0 {
        return commutator_flow(sys, idx, p, s, cfg);
    }
    if k % 2 == 1 {
        return commutator_flow(sys, idx, p, -s, cfg);
    }
    // even length, negative time: [phi^J_s, phi^i_s], the inverse of phi^{iJ}_s
    group_commutator(sys, idx, p, s, true, cfg)
}

#[derive(Clone, Debug)]
pub struct DefectFit {
    pub t_list: Vec<f64>,
    pub defect_norms: Vec<f64>,
    /// NaN when every defect sits at the noise floor.
    pub fitted_exponent: f64,
    pub target_exponent: u32,
    pub at_noise_floor: bool,
    pub passed: bool,
}

impl DefectFit {
    /// Weighted log-log fit; points within three decades of the noise floor are
    /// down-weighted and points below it dropped.
    pub fn from_samples(t_list: Vec<f64>, defect_norms: Vec<f64>, target_exponent: u32) -> Self {
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        let mut w = Vec::new();
        for (t, d) in t_list.iter().zip(&defect_norms) {
            if *d > NOISE_FLOOR {
                lx.push(t.ln());
                ly.push(d.ln());
                w.push(((d / NOISE_FLOOR).log10() / 3.0).min(1.0));
            }
        }
        let (fitted_exponent, at_noise_floor) = if lx.len() < 3 {
            (f64::NAN, true)
        } else {
            (weighted_linear_fit(&lx, &ly, &w).1, false)
        };
        let passed = at_noise_floor || fitted_exponent >= target_exponent as f64 - EXPONENT_TOLERANCE;
        Self {
            t_list,
            defect_norms,
            fitted_exponent,
            target_exponent,
            at_noise_floor,
            passed,
        }
    }

    /// CSV with header `t,defect`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,defect\n");
        for (t, d) in self.t_list.iter().zip(&self.defect_norms) {
            s.push_str(&format!("{},{}\n", crate::report::fmt15(*t), crate::report::fmt15(*d)));
        }
        s
    }

    pub fn verdict(&self) -> String {
        if self.at_noise_floor {
            format!("{}: defect at noise floor (target exponent {})", crate::report::pass_fail(self.passed), self.target_exponent)
        } else {
            format!(
                "{}: fitted exponent {:.3} (target {})",
                crate::report::pass_fail(self.passed),
                self.fitted_exponent,
                self.target_exponent
            )
        }
    }
}

/// `count` geometrically spaced times from `hi` down to `lo`.
pub fn geometric_times(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    let r = (lo / hi).powf(1.0 / (count.max(2) - 1) as f64);
    (0..count).map(|k| hi * r.powi(k as i32)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_times(t_list: &[f64]) -> Result<()> {
    if t_list.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("defect fits need positive times".into()));
    }
    Ok(())
}

/// Defects `|phi^I_t(p) - p - t^|I| X_I(p)|` and their fitted exponent (target `|I| + 1`).
pub fn defect_fit_commutator(
    sys: &SystemDef,
    idx: &BracketIndex,
    p: &[Rational],
    t_list: &[f64],
    cfg: &OdeConfig,
) -> Result<DefectFit> {
    check_times(t_list)?;
    let compiled = CompiledSystem::new(&sys.fields);
    let xi = point_to_f64(&iterated_bracket(sys, idx)?.evaluate(p)?);
    let pf = point_to_f64(p);
    let k = idx.len() as i32;
    let defects = t_list
        .iter()
        .map(|&t| {
            let q = commutator_flow(&compiled, idx, &pf, t, cfg)?;
            let d: Vec<f64> = (0..q.len()).map(|j| q[j] - pf[j] - t.powi(k) * xi[j]).collect();
            Ok(norm(&d))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DefectFit::from_samples(t_list.to_vec(), defects, idx.len() as u32 + 1))
}

/// `sum_{k<=N} (-t)^k/k! [Y,[Y,...,[Y,X]]]`, the Taylor series in `t` of `exp(tY)_* X`.
pub fn pushforward_series_terms(x: &SymField, y: &SymField, n: usize) -> Result<Vec<SymField>> {
    let mut terms = vec![x.clone()];
    for k in 1..=n {
        let next = lie_bracket(y, &terms[k - 1])?;
        terms.push(next);
    }
    Ok(terms)
}

/// `|exp(tY)_* X(p) - sum_{k<=N} (-t)^k/k! (ad Y)^k X(p)|` with `ad Y = [Y, .]`.
///
/// The left side uses a central finite difference of the flow map `exp(tY)` at
/// `exp(-tY)(p)` in the direction `X(exp(-tY)(p))`.
pub fn pushforward_series_defect(
    x: &SymField,
    y: &SymField,
    n: usize,
    p: &[Rational],
    t_list: &[f64],
    cfg: &OdeConfig,
) -> Result<DefectFit> {
    if n > 6 {
        return Err(Error::InvalidArgument("series order must be at most 6".into()));
    }
    check_times(t_list)?;
    let terms: Vec<Vec<f64>> = pushforward_series_terms(x, y, n)?
        .iter()
        .map(|f| f.evaluate(p).map(|v| point_to_f64(&v)))
        .collect::<Result<_>>()?;
    let xc = x.compile();
    let yc = y.compile();
    let pf = point_to_f64(p);
    let h = 1e-5;
    let defects = t_list
        .iter()
        .map(|&t| {
            let q = field_flow(&yc, &pf, -t, cfg)?;
            let v = xc.eval(&q);
            let qp: Vec<f64> = q.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let qm: Vec<f64> = q.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let fp = field_flow(&yc, &qp, t, cfg)?;
            let fm = field_flow(&yc, &qm, t, cfg)?;
            let mut fact = 1.0;
            let mut series = vec![0.0; pf.len()];
            for (k, term) in terms.iter().enumerate() {
                if k > 0 {
                    fact *= k as f64;
                }
                let c = (-t).powi(k as i32) / fact;
                for (s, v) in series.iter_mut().zip(term) {
                    *s += c * v;
                }
            }
            let d: Vec<f64> = (0..pf.len()).map(|j| (fp[j] - fm[j]) / (2.0 * h) - series[j]).collect();
            Ok(norm(&d))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DefectFit::from_samples(t_list.to_vec(), defects, n as u32 + 1))
}

/// Truncated Campbell-Hausdorff series `H_N(A, B)` for `N` in 1..=3.
pub fn bch_truncated(a: &SymField, b: &SymField, n: usize) -> Result<SymField> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("BCH order {n} not in 1..=3")));
    }
    let mut h = a.add(b)?;
    if n >= 2 {
        let ab = lie_bracket(a, b)?;
        h = h.add(&ab.scale(&rat(1, 2)))?;
        if n >= 3 {
            let aab = lie_bracket(a, &ab)?;
            let bba = lie_bracket(b, &lie_bracket(b, a)?)?;
            h = h.add(&aab.add(&bba)?.scale(&rat(1, 12)))?;
        }
    }
    Ok(h)
}

/// `|exp(tX) o exp(tY)(p) - exp(H_N(tY, tX))(p)|` (target exponent `N + 1`).
pub fn bch_defect_fit(
    x: &SymField,
    y: &SymField,
    n: usize,
    p: &[Rational],
    t_list: &[f64],
    cfg: &OdeConfig,
) -> Result<DefectFit> {
    check_times(t_list)?;
    let xc = x.compile();
    let yc = y.compile();
    let pf = point_to_f64(p);
    let defects = t_list
        .iter()
        .map(|&t| {
            let lhs = field_flow(&xc, &field_flow(&yc, &pf, t, cfg)?, t, cfg)?;
            let tq = crate::symfield::poly::from_f64(t);
            let hn = bch_truncated(&y.scale(&tq), &x.scale(&tq), n)?.compile();
            let rhs = rk4(&|z: &[f64], out: &mut [f64]| hn.eval_into(z, out), &pf, 1.0, cfg)?;
            let d: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            Ok(norm(&d))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DefectFit::from_samples(t_list.to_vec(), defects, n as u32 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use num_traits::Zero;

    fn zero3() -> Vec<Rational> {
        vec![Rational::zero(); 3]
    }

    #[test]
    fn heisenberg_loop_endpoint() {
        let sys = CompiledSystem::new(&fixtures::heisenberg().fields);
        let cfg = OdeConfig::default();
        for t in [0.05, 0.3, 1.0] {
            let q = commutator_flow(&sys, &"1,2".parse().unwrap(), &[0.0; 3], t, &cfg).unwrap();
            assert!(q[0].abs() < 1e-10 && q[1].abs() < 1e-10 && (q[2] - t * t).abs() < 1e-10);
        }
    }

    #[test]
    fn length_one_is_plain_flow() {
        let sys = CompiledSystem::new(&fixtures::heisenberg().fields);
        let cfg = OdeConfig::default();
        let q = commutator_flow(&sys, &"1".parse().unwrap(), &[0.0, 1.0, 0.0], 0.5, &cfg).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-14 && (q[2] + 0.25).abs() < 1e-14);
        let r = psi_flow(&sys, &"1".parse().unwrap(), &[0.0, 1.0, 0.0], -0.5, &cfg).unwrap();
        assert!((r[0] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn psi_flow_has_unit_speed_from_both_sides() {
        let sys = CompiledSystem::new(&fixtures::heisenberg().fields);
        let cfg = OdeConfig::default();
        let idx: BracketIndex = "1,2".parse().unwrap();
        let h = 1e-4;
        let a = psi_flow(&sys, &idx, &[0.0; 3], h, &cfg).unwrap();
        let b = psi_flow(&sys, &idx, &[0.0; 3], -h, &cfg).unwrap();
        assert!((a[2] / h - 1.0).abs() < 1e-8);
        assert!((b[2] / -h - 1.0).abs() < 1e-8);
        let c = commutator_flow(&sys, &idx, &[0.0; 3], h.sqrt(), &cfg).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn antisymmetry_at_second_order() {
        let sys = fixtures::unicycle();
        let c = CompiledSystem::new(&sys.fields);
        let cfg = OdeConfig::default();
        let t = 1e-2;
        let a = commutator_flow(&c, &"1,2".parse().unwrap(), &[0.0; 3], t, &cfg).unwrap();
        let b = commutator_flow(&c, &"2,1".parse().unwrap(), &[0.0; 3], t, &cfg).unwrap();
        let x12 = point_to_f64(&iterated_bracket(&sys, &"1,2".parse().unwrap()).unwrap().evaluate(&zero3()).unwrap());
        for j in 0..3 {
            assert!(((a[j] - b[j]) / (t * t) - 2.0 * x12[j]).abs() < 0.05);
        }
    }

    #[test]
    fn commuting_fields_have_zero_series_defect() {
        let x = SymField::coordinate(2, 0);
        let y = SymField::coordinate(2, 1);
        let fit = pushforward_series_defect(&x, &y, 0, &[Rational::zero(), Rational::zero()], &[0.1, 0.05, 0.02], &OdeConfig::default()).unwrap();
        assert!(fit.at_noise_floor && fit.passed);
    }

    #[test]
    fn heisenberg_series_is_x1_plus_t_dz() {
        let sys = fixtures::heisenberg();
        let terms = pushforward_series_terms(&sys.fields[0], &sys.fields[1], 2).unwrap();
        assert_eq!(terms[1].scale(&rat(-1, 1)), SymField::coordinate(3, 2));
        assert!(terms[2].is_zero());
    }

    #[test]
    fn bch_orders() {
        let sys = fixtures::heisenberg();
        let (x1, x2) = (&sys.fields[0], &sys.fields[1]);
        let h1 = bch_truncated(x2, x1, 1).unwrap();
        let h2 = bch_truncated(x2, x1, 2).unwrap();
        assert_eq!(h1, x1.add(x2).unwrap());
        assert_eq!(h2.sub(&h1).unwrap(), SymField::coordinate(3, 2).scale(&rat(-1, 2)));
        assert!(bch_truncated(x1, x2, 4).is_err());
        let a = SymField::coordinate(3, 0);
        let b = SymField::coordinate(3, 1);
        assert_eq!(bch_truncated(&a, &b, 3).unwrap(), a.add(&b).unwrap());
    }

    #[test]
    fn commutator_defect_exponents() {
        let cfg = OdeConfig::default();
        let t = geometric_times(0.3, 0.01, 8);
        let u = defect_fit_commutator(&fixtures::unicycle(), &"1,2".parse().unwrap(), &zero3(), &t, &cfg).unwrap();
        assert!(u.passed && u.fitted_exponent >= 2.8, "{}", u.verdict());
        let m = defect_fit_commutator(&fixtures::martinet(), &"1,1,2".parse().unwrap(), &zero3(), &t, &cfg).unwrap();
        assert!(m.passed, "{}", m.verdict());
        let u3 = defect_fit_commutator(&fixtures::unicycle(), &"1,1,2".parse().unwrap(), &zero3(), &t, &cfg).unwrap();
        assert!(u3.passed, "{}", u3.verdict());
        let m2 = defect_fit_commutator(&fixtures::martinet(), &"1,2".parse().unwrap(), &zero3(), &t, &cfg).unwrap();
        assert!((m2.fitted_exponent - 3.0).abs() < 0.05, "{}", m2.verdict());
        let h = defect_fit_commutator(&fixtures::heisenberg(), &"1,2".parse().unwrap(), &zero3(), &t, &cfg).unwrap();
        assert!(h.at_noise_floor, "{:?}", h.defect_norms);
    }

    #[test]
    fn series_and_bch_exponents() {
        let cfg = OdeConfig::default();
        let t = geometric_times(0.3, 0.01, 8);
        let h = fixtures::heisenberg();
        let f1 = pushforward_series_defect(&h.fields[0], &h.fields[1], 1, &zero3(), &t, &cfg).unwrap();
        assert!(f1.passed, "{}", f1.verdict());
        let m = fixtures::martinet();
        let f2 = pushforward_series_defect(&m.fields[1], &m.fields[0], 2, &zero3(), &t, &cfg).unwrap();
        assert!(f2.passed, "{}", f2.verdict());
        let b = bch_defect_fit(&h.fields[0], &h.fields[1], 2, &zero3(), &t, &cfg).unwrap();
        assert!(b.passed, "{} {:?}", b.verdict(), b.defect_norms);
    }

    #[test]
    fn literal_form_leaves_second_order_term() {
        let sys = fixtures::unicycle();
        let c = CompiledSystem::new(&sys.fields);
        let cfg = OdeConfig::default();
        let idx: BracketIndex = "1,1,2".parse().unwrap();
        let t = 1e-2;
        let lit = commutator_flow_with(&c, &idx, &[0.0; 3], t, CommutatorForm::Literal, &cfg).unwrap();
        let grp = commutator_flow(&c, &idx, &[0.0; 3], t, &cfg).unwrap();
        // X12(0) = -d/dy for the unicycle
        assert!((lit[1] / (t * t) + 2.0).abs() < 0.05);
        assert!(grp[1].abs() < 1e-5);
    }

    #[test]
    fn martinet_triple_commutator_is_exact_everywhere() {
        let c = CompiledSystem::new(&fixtures::martinet().fields);
        let cfg = OdeConfig::default();
        let t = 0.2;
        let q = commutator_flow(&c, &"1,1,2".parse().unwrap(), &[0.7, 0.0, 0.0], t, &cfg).unwrap();
        assert!((q[0] - 0.7).abs() < 1e-12 && q[1].abs() < 1e-12 && (q[2] - t * t * t).abs() < 1e-12);
    }

    #[test]
    fn synthetic_fit() {
        let t = geometric_times(0.5, 0.005, 8);
        let d: Vec<f64> = t.iter().map(|v| 2.0 * v.powi(3)).collect();
        let fit = DefectFit::from_samples(t, d, 3);
        assert!((fit.fitted_exponent - 3.0).abs() < 1e-9 && fit.passed);
    }
}
