//! Sub-Riemannian distance estimates and the metric checks built on them.

mod checks;
mod uniform;

pub use checks::*;
pub use uniform::*;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use crate::control::{simulate, ControlSignal, OdeConfig, Trajectory};
use crate::error::{Error, Result};
use crate::nilpotent::TriangularIntegrator;
use crate::symfield::{CompiledField, CompiledSystem, SymField};

/// Endpoint of a control made of equal segments of duration `tau`.
pub trait EndpointMap: Sync {
    fn dim(&self) -> usize;
    fn nfields(&self) -> usize;
    fn endpoint(&self, tau: f64, values: &[f64], x0: &[f64]) -> Result<Vec<f64>>;

    /// Endpoint together with its derivative in `values`, when available analytically.
    fn endpoint_jacobian(&self, _tau: f64, _values: &[f64], _x0: &[f64]) -> Option<Result<(Vec<f64>, DMatrix<f64>)>> {
        None
    }
}

/// RK4 endpoint map of a control-affine system.
#[derive(Clone, Debug)]
pub struct RkMap {
    pub sys: CompiledSystem,
    pub ode: OdeConfig,
    /// `derivs[i][b]` is `d X_i / d x_b`.
    derivs: Vec<Vec<CompiledField>>,
}

impl RkMap {
    pub fn new(fields: &[SymField], ode: OdeConfig) -> Self {
        let derivs = fields
            .iter()
            .map(|f| {
                (0..f.nvars())
                    .map(|b| {
                        f.map_components(|c| c.partial_derivative(b).expect("variable index in range"))
                            .compile()
                    })
                    .collect()
            })
            .collect();
        Self {
            sys: CompiledSystem::new(fields),
            ode,
            derivs,
        }
    }

    /// `A = sum_i u_i D X_i(x)` and `B = [X_1(x) .. X_m(x)]`.
    fn linearize(&self, x: &[f64], u: &[f64], a: &mut DMatrix<f64>, b: &mut DMatrix<f64>, buf: &mut [f64]) {
        let n = x.len();
        a.fill(0.0);
        for (i, &ui) in u.iter().enumerate() {
            self.sys.field(i).eval_into(x, buf);
            for r in 0..n {
                b[(r, i)] = buf[r];
            }
            if ui == 0.0 {
                continue;
            }
            for (col, d) in self.derivs[i].iter().enumerate() {
                d.eval_into(x, buf);
                for r in 0..n {
                    a[(r, col)] += ui * buf[r];
                }
            }
        }
    }

    /// Stage velocity `k = A(S + c K) + B` restricted to the active columns.
    fn stage(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, s: &DMatrix<f64>, seg: usize, m: usize) -> DMatrix<f64> {
        let mut k = a * s;
        for r in 0..k.nrows() {
            for i in 0..m {
                k[(r, seg * m + i)] += b[(r, i)];
            }
        }
        k
    }
}

impl EndpointMap for RkMap {
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn nfields(&self) -> usize {
        self.sys.nfields()
    }

    fn endpoint(&self, tau: f64, values: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        let m = self.sys.nfields();
        let mut x = x0.to_vec();
        if tau == 0.0 {
            return Ok(x);
        }
        for u in values.chunks(m) {
            let rhs = |y: &[f64], out: &mut [f64]| self.sys.velocity(y, u, out);
            x = crate::control::rk4(&rhs, &x, tau, &self.ode)?;
        }
        Ok(x)
    }

    fn endpoint_jacobian(&self, tau: f64, values: &[f64], x0: &[f64]) -> Option<Result<(Vec<f64>, DMatrix<f64>)>> {
        Some(self.rk4_sensitivity(tau, values, x0))
    }
}

impl RkMap {
    /// Exact derivative of the discrete RK4 endpoint map.
    fn rk4_sensitivity(&self, tau: f64, values: &[f64], x0: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = x0.len();
        let m = self.sys.nfields();
        let cols = values.len();
        let mut x = x0.to_vec();
        let mut s = DMatrix::<f64>::zeros(n, cols);
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DMatrix::<f64>::zeros(n, m);
        let mut buf = vec![0.0; n];
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let steps = (tau.abs() / self.ode.h_max).ceil().max(1.0) as usize;
        let h = tau / steps as f64;
        for (seg, u) in values.chunks(m).enumerate() {
            if tau == 0.0 {
                break;
            }
            let mut carry = vec![0.0; n];
            for _ in 0..steps {
                self.sys.velocity(&x, u, &mut k1);
                self.linearize(&x, u, &mut a, &mut b, &mut buf);
                let s1 = self.stage(&a, &b, &s, seg, m);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k1[i];
                }
                self.sys.velocity(&tmp, u, &mut k2);
                self.linearize(&tmp, u, &mut a, &mut b, &mut buf);
                let s2 = self.stage(&a, &b, &(&s + &s1 * (0.5 * h)), seg, m);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k2[i];
                }
                self.sys.velocity(&tmp, u, &mut k3);
                self.linearize(&tmp, u, &mut a, &mut b, &mut buf);
                let s3 = self.stage(&a, &b, &(&s + &s2 * (0.5 * h)), seg, m);
                for i in 0..n {
                    tmp[i] = x[i] + h * k3[i];
                }
                self.sys.velocity(&tmp, u, &mut k4);
                self.linearize(&tmp, u, &mut a, &mut b, &mut buf);
                let s4 = self.stage(&a, &b, &(&s + &s3 * h), seg, m);
                for i in 0..n {
                    let inc = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) - carry[i];
                    let next = x[i] + inc;
                    carry[i] = (next - x[i]) - inc;
                    x[i] = next;
                }
                s += (s1 + s2 * 2.0 + s3 * 2.0 + s4) * (h / 6.0);
                let nx = norm(&x);
                if !nx.is_finite() || nx > self.ode.blowup_norm {
                    return Err(Error::BlowUp { norm: nx });
                }
            }
        }
        Ok((x, s))
    }
}

impl EndpointMap for TriangularIntegrator {
    fn dim(&self) -> usize {
        TriangularIntegrator::dim(self)
    }

    fn nfields(&self) -> usize {
        TriangularIntegrator::nfields(self)
    }

    fn endpoint(&self, tau: f64, values: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        let m = self.nfields();
        let durations = vec![tau; values.len() / m];
        let vals: Vec<Vec<f64>> = values.chunks(m).map(<[f64]>::to_vec).collect();
        Ok(self.endpoint_raw(&durations, &vals, x0))
    }
}

#[derive(Clone, Debug)]
pub struct DistanceConfig {
    pub restarts: usize,
    /// Control segments; `None` means `4n`.
    pub segments: Option<usize>,
    /// Largest accepted endpoint error of a witness.
    pub snap_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Initial guess for the distance; `None` uses `|q - p|^(1/step_hint)`.
    pub scale_hint: Option<f64>,
    pub step_hint: u32,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            restarts: 16,
            segments: None,
            snap_tol: 1e-6,
            max_iter: 60,
            seed: 0,
            scale_hint: None,
            step_hint: 2,
        }
    }
}

impl DistanceConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LowerBoundKind {
    /// No lower bound available.
    None,
    /// Projection onto coordinates whose velocities are constant in the controls.
    Projection,
}

#[derive(Clone, Debug, Default)]
pub struct SolverStats {
    pub restarts: usize,
    pub converged: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct DistanceEstimate {
    /// L1 length of the witness; an upper bound for the distance.
    pub upper: f64,
    pub lower: f64,
    pub lower_kind: LowerBoundKind,
    pub witness: ControlSignal,
    pub endpoint_error: f64,
    pub stats: SolverStats,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// L1 cost of equal segments.
fn cost_of(tau: f64, values: &[f64], m: usize) -> f64 {
    values.chunks(m).map(|u| tau * norm(u)).sum()
}

struct Problem<'a, M: EndpointMap> {
    map: &'a M,
    p: &'a [f64],
    q: &'a [f64],
    tau: f64,
    evals: std::cell::Cell<usize>,
}

impl<M: EndpointMap> Problem<'_, M> {
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.evals.set(self.evals.get() + 1);
        Ok(sub(&self.map.endpoint(self.tau, u, self.p)?, self.q))
    }

    fn jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        if let Some(res) = self.map.endpoint_jacobian(self.tau, u, self.p) {
            self.evals.set(self.evals.get() + 1 + self.map.dim());
            return res.map(|(_, j)| j);
        }
        let n = self.map.dim();
        let mut jac = DMatrix::zeros(n, u.len());
        let mut w = u.to_vec();
        for k in 0..u.len() {
            let h = 1e-6 * (1.0 + u[k].abs());
            w[k] = u[k] + h;
            let fp = self.residual(&w)?;
            w[k] = u[k] - h;
            let fm = self.residual(&w)?;
            w[k] = u[k];
            for i in 0..n {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    /// Minimum-norm solution of `J d = -r` with Tikhonov damping `mu`.
    fn min_norm_step(jac: &DMatrix<f64>, r: &[f64], mu: f64) -> Option<DVector<f64>> {
        let n = jac.nrows();
        let m = jac * jac.transpose() + DMatrix::identity(n, n) * mu;
        let y = m.cholesky()?.solve(&DVector::from_column_slice(r));
        Some(-(jac.transpose() * y))
    }

    /// Levenberg-Marquardt on the endpoint residual.
    fn feasibility(&self, u: &mut Vec<f64>, iters: usize, tol: f64) -> Result<f64> {
        let mut r = self.residual(u)?;
        let mut rn = norm(&r);
        let mut mu_scale = 1e-3;
        for _ in 0..iters {
            if rn < tol {
                break;
            }
            let jac = self.jacobian(u)?;
            let base = (jac.norm_squared() / jac.nrows() as f64).max(1e-300);
            let mut improved = false;
            for _ in 0..12 {
                let Some(d) = Self::min_norm_step(&jac, &r, mu_scale * base) else {
                    mu_scale *= 10.0;
                    continue;
                };
                let cand: Vec<f64> = u.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
                match self.residual(&cand) {
                    Ok(rc) if norm(&rc) < rn => {
                        *u = cand;
                        r = rc;
                        rn = norm(&r);
                        mu_scale = (mu_scale / 10.0).max(1e-12);
                        improved = true;
                        break;
                    }
                    _ => mu_scale *= 10.0,
                }
            }
            if !improved {
                break;
            }
        }
        Ok(rn)
    }

    /// Sequential quadratic steps on the control energy restricted to the target fiber.
    fn minimize_energy(&self, u: &mut Vec<f64>, iters: usize) -> Result<()> {
        let mut r = self.residual(u)?;
        for _ in 0..iters {
            let jac = self.jacobian(u)?;
            let n = jac.nrows();
            let uv = DVector::from_column_slice(u);
            let rhs = &jac * &uv - DVector::from_column_slice(&r);
            let gram = &jac * jac.transpose() + DMatrix::identity(n, n) * 1e-14;
            let Some(ch) = gram.cholesky() else { break };
            let lambda = ch.solve(&rhs);
            let step = -&uv + jac.transpose() * &lambda;
            if step.norm() <= 1e-6 * (1.0 + uv.norm()) {
                break;
            }
            let rho = 2.0 * lambda.amax() + 1e-6;
            let merit = |v: &[f64], res: &[f64]| 0.5 * norm(v).powi(2) + rho * res.iter().map(|x| x.abs()).sum::<f64>();
            let m0 = merit(u, &r);
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1.0 / 128.0 {
                let cand: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + alpha * b).collect();
                if let Ok(rc) = self.residual(&cand) {
                    if merit(&cand, &rc) < m0 {
                        *u = cand;
                        r = rc;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(())
    }
}

/// Equal-segment resampling of a control onto `segments` pieces over `total` time.
fn resample(control: &ControlSignal, segments: usize, total: f64) -> Vec<f64> {
    let m = control.nfields();
    let t_end = control.total_time();
    let mut out = Vec::with_capacity(segments * m);
    for k in 0..segments {
        let t = (k as f64 + 0.5) / segments as f64 * t_end;
        let mut acc = 0.0;
        let mut value = vec![0.0; m];
        for (d, u) in control.segments() {
            if t < acc + d {
                value = u.to_vec();
                break;
            }
            acc += d;
        }
        out.extend(value.iter().map(|v| v * t_end / total));
    }
    out
}

/// Upper bound for `d(p, q)` by multistart optimization over piecewise-constant controls.
pub fn estimate_distance_map<M: EndpointMap>(
    map: &M,
    p: &[f64],
    q: &[f64],
    cfg: &DistanceConfig,
    guesses: &[ControlSignal],
) -> Result<DistanceEstimate> {
    let n = map.dim();
    let m = map.nfields();
    if p.len() != n || q.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.len().min(q.len()),
        });
    }
    let gap = norm(&sub(q, p));
    if gap == 0.0 {
        return Ok(DistanceEstimate {
            upper: 0.0,
            lower: 0.0,
            lower_kind: LowerBoundKind::None,
            witness: ControlSignal::empty(m),
            endpoint_error: 0.0,
            stats: SolverStats::default(),
        });
    }
    let segments = cfg.segments.unwrap_or(4 * n).max(1);
    let total = cfg
        .scale_hint
        .unwrap_or_else(|| gap.powf(1.0 / cfg.step_hint.max(1) as f64))
        .max(1e-12);
    let tau = total / segments as f64;
    let mut starts: Vec<Vec<f64>> = guesses
        .iter()
        .filter(|g| g.nfields() == m && !g.is_empty())
        .map(|g| resample(g, segments, total))
        .collect();
    for k in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64));
        let u: Vec<f64> = (0..segments * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        starts.push(u);
    }
    let results: Vec<(Option<(f64, Vec<f64>, f64)>, usize)> = starts
        .into_par_iter()
        .map(|mut u| {
            let prob = Problem {
                map,
                p,
                q,
                tau,
                evals: std::cell::Cell::new(0),
            };
            let run = (|| -> Result<(f64, Vec<f64>, f64)> {
                prob.feasibility(&mut u, cfg.max_iter, 1e-12 * (1.0 + gap))?;
                prob.minimize_energy(&mut u, cfg.max_iter)?;
                let err = prob.feasibility(&mut u, 20, 1e-13 * (1.0 + gap))?;
                Ok((cost_of(tau, &u, m), u, err))
            })();
            let out = run.ok().filter(|(_, _, err)| *err <= cfg.snap_tol);
            (out, prob.evals.get())
        })
        .collect();
    let mut stats = SolverStats {
        restarts: results.len(),
        ..Default::default()
    };
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut best_err = f64::INFINITY;
    for (res, evals) in results {
        stats.evaluations += evals;
        if let Some(r) = res {
            stats.converged += 1;
            best_err = best_err.min(r.2);
            if best.as_ref().is_none_or(|b| r.0 < b.0) {
                best = Some(r);
            }
        }
    }
    let Some((_, u, _)) = best else {
        return Err(Error::NoTrajectoryFound { best_error: best_err });
    };
    let witness = ControlSignal::new(vec![tau; segments], u.chunks(m).map(<[f64]>::to_vec).collect())?;
    // recompute from the witness itself so upper and endpoint error are reproducible
    let end = map.endpoint(tau, &u, p)?;
    Ok(DistanceEstimate {
        upper: witness.cost(),
        lower: 0.0,
        lower_kind: LowerBoundKind::None,
        endpoint_error: norm(&sub(&end, q)),
        witness,
        stats,
    })
}

/// Largest Euclidean displacement over unit cost among coordinates whose velocity
/// `sum_i u_i X_i` is constant in the state; gives `d(p,q) >= |q_J - p_J| / sigma_max`.
pub fn projection_lower_bound(fields: &[SymField], p: &[f64], q: &[f64]) -> f64 {
    let n = p.len();
    let cols: Vec<usize> = (0..n)
        .filter(|&j| fields.iter().all(|f| f.component(j).total_degree().is_none_or(|d| d == 0)))
        .collect();
    if cols.is_empty() || fields.is_empty() {
        return 0.0;
    }
    let c = DMatrix::from_fn(cols.len(), fields.len(), |a, i| {
        crate::symfield::poly::to_f64(&fields[i].component(cols[a]).constant_term())
    });
    let sigma = c.singular_values().max();
    if sigma <= 0.0 {
        return 0.0;
    }
    let dj: Vec<f64> = cols.iter().map(|&j| q[j] - p[j]).collect();
    norm(&dj) / sigma
}

/// Distance estimate for a system given by its fields, integrated with RK4.
pub fn estimate_distance(
    fields: &[SymField],
    p: &[f64],
    q: &[f64],
    cfg: &DistanceConfig,
    ode: &OdeConfig,
) -> Result<DistanceEstimate> {
    let map = RkMap::new(fields, ode.clone());
    with_lower_bound(estimate_distance_map(&map, p, q, cfg, &[])?, fields, p, q)
}

fn with_lower_bound(mut est: DistanceEstimate, fields: &[SymField], p: &[f64], q: &[f64]) -> Result<DistanceEstimate> {
    let lower = projection_lower_bound(fields, p, q);
    if lower > 0.0 {
        est.lower = lower.min(est.upper);
        est.lower_kind = LowerBoundKind::Projection;
    }
    Ok(est)
}

/// Distance estimate in a nilpotent approximation, integrated by quadrature.
pub fn estimate_distance_nil(
    nil: &crate::nilpotent::NilpotentSystem,
    p: &[f64],
    q: &[f64],
    cfg: &DistanceConfig,
) -> Result<DistanceEstimate> {
    let map = TriangularIntegrator::new(nil);
    let cfg = DistanceConfig {
        step_hint: nil.step.max(1),
        ..cfg.clone()
    };
    with_lower_bound(estimate_distance_map(&map, p, q, &cfg, &[])?, &nil.fields, p, q)
}

/// A point with `sum_j |z_j|^(1/w_j) = eps`, from a uniform sample of the unit box
/// pushed through `s -> sign(s)|s|^w` and rescaled by a dilation.
pub fn sample_pseudo_sphere<R: Rng>(weights: &[u32], eps: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let s: Vec<f64> = weights.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm1: f64 = s.iter().map(|v| v.abs()).sum();
        if norm1 < 1e-3 {
            continue;
        }
        let lam = eps / norm1;
        return s
            .iter()
            .zip(weights)
            .map(|(v, &w)| v.signum() * (v.abs() * lam).powi(w as i32))
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::pseudo_norm;
    use crate::fixtures;

    fn quick() -> DistanceConfig {
        DistanceConfig {
            restarts: 4,
            ..Default::default()
        }
    }

    #[test]
    fn zero_distance() {
        let h = fixtures::heisenberg();
        let e = estimate_distance(&h.fields, &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3], &quick(), &OdeConfig::default()).unwrap();
        assert_eq!(e.upper, 0.0);
        assert!(e.witness.is_empty());
    }

    #[test]
    fn heisenberg_horizontal_segment() {
        let h = fixtures::heisenberg();
        for a in [0.3, -0.7] {
            let e = estimate_distance(&h.fields, &[0.0; 3], &[a, 0.0, 0.0], &quick(), &OdeConfig::default()).unwrap();
            assert_eq!(e.lower_kind, LowerBoundKind::Projection);
            assert!((e.lower - a.abs()).abs() < 1e-12);
            assert!(e.upper <= a.abs() * 1.02, "{} vs {}", e.upper, a);
            assert!(e.endpoint_error < 1e-6);
            let end = crate::control::endpoint(&CompiledSystem::new(&h.fields), &e.witness, &[0.0; 3], &OdeConfig::default()).unwrap();
            assert!(norm(&sub(&end, &[a, 0.0, 0.0])) < 1e-6);
            assert_eq!(e.upper, e.witness.cost());
        }
    }

    #[test]
    fn heisenberg_vertical_is_isoperimetric() {
        let h = fixtures::heisenberg();
        let s: f64 = 0.01;
        let e = estimate_distance(&h.fields, &[0.0; 3], &[0.0, 0.0, s], &quick(), &OdeConfig::default()).unwrap();
        let circle = (4.0 * std::f64::consts::PI * s).sqrt();
        assert!(e.upper >= circle * 0.999 && e.upper <= circle * 1.03, "{} vs {}", e.upper, circle);
    }

    #[test]
    fn symmetry() {
        let u = fixtures::unicycle();
        let p = [0.0, 0.0, 0.0];
        let q = [0.05, 0.1, -0.2];
        let a = estimate_distance(&u.fields, &p, &q, &quick(), &OdeConfig::default()).unwrap();
        let b = estimate_distance(&u.fields, &q, &p, &quick(), &OdeConfig::default()).unwrap();
        assert!((a.upper - b.upper).abs() < 0.05 * a.upper, "{} {}", a.upper, b.upper);
    }

    #[test]
    fn sensitivity_matches_differences() {
        let u = fixtures::unicycle();
        let map = RkMap::new(&u.fields, OdeConfig::default());
        let vals = [0.3, -0.2, 0.5, 0.4, -0.7, 0.1];
        let x0 = [0.1, 0.0, 0.2];
        let (end, jac) = map.endpoint_jacobian(0.2, &vals, &x0).unwrap().unwrap();
        assert_eq!(end, map.endpoint(0.2, &vals, &x0).unwrap());
        for k in 0..vals.len() {
            let mut w = vals;
            w[k] += 1e-6;
            let fp = map.endpoint(0.2, &w, &x0).unwrap();
            w[k] -= 2e-6;
            let fm = map.endpoint(0.2, &w, &x0).unwrap();
            for i in 0..3 {
                assert!(((fp[i] - fm[i]) / 2e-6 - jac[(i, k)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn sphere_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let z = sample_pseudo_sphere(&[1, 1, 3], 0.2, &mut rng);
            assert!((pseudo_norm(&z, &[1, 1, 3]) - 0.2).abs() < 1e-12);
        }
    }
}
