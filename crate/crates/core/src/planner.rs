//! Approximate motion planning: steer the nilpotent approximation at the goal, apply the
//! control to the true system, repeat.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::charts::{algebraic_privileged_coords, pseudo_norm, PrivilegedChart};
use crate::control::{self, simulate, ControlSignal, OdeConfig};
use crate::error::{Error, Result};
use crate::liealgebra::flag_at;
use crate::metric::{estimate_distance_nil, DistanceConfig};
use crate::nilpotent::{nilpotent_approximation, NilpotentSystem, TriangularIntegrator};
use crate::report::fmt15;
use crate::symfield::poly::from_f64;
use crate::symfield::{CompiledSystem, SystemDef};

/// How `d̂(b, x)` is measured.
#[derive(Clone, Debug)]
pub enum ResidualMetric {
    /// Pseudo-norm of the chart coordinates.
    PseudoNorm,
    /// Optimizer estimate on the nilpotent system, falling back to the pseudo-norm.
    Optimizer(DistanceConfig),
}

impl ResidualMetric {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PseudoNorm => "pseudo-norm",
            Self::Optimizer(_) => "optimizer",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SteerConfig {
    /// Number of control segments; `None` means `2n`.
    pub segments: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    /// Newton starts: the zero control first, then random ones.
    pub restarts: usize,
    /// Cost cap `K` in `cost <= K * d̂`.
    pub k_cap: f64,
    pub seed: u64,
}

impl Default for SteerConfig {
    fn default() -> Self {
        Self {
            segments: None,
            tol: 1e-9,
            max_iter: 100,
            restarts: 8,
            k_cap: 20.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Steering {
    /// Unit-norm control, adjacent segments with equal direction merged.
    pub control: ControlSignal,
    pub cost: f64,
    /// Estimate of `d̂(x0, goal)` the cost is compared against.
    pub reference: f64,
    pub endpoint_error: f64,
}

impl Steering {
    pub fn k_ratio(&self) -> f64 {
        if self.reference > 0.0 {
            self.cost / self.reference
        } else {
            0.0
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn merge_segments(c: &ControlSignal) -> Result<ControlSignal> {
    let mut durations: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (d, u) in c.segments() {
        if let Some(last) = values.last() {
            if last.iter().zip(u).all(|(a, b)| (a - b).abs() < 1e-12) {
                *durations.last_mut().expect("nonempty") += d;
                continue;
            }
        }
        durations.push(d);
        values.push(u.to_vec());
    }
    if durations.is_empty() {
        return Ok(ControlSignal::empty(c.nfields()));
    }
    ControlSignal::new(durations, values)
}

fn residual_of(nil: &NilpotentSystem, metric: &ResidualMetric, x0: &[f64], goal: &[f64]) -> f64 {
    let surrogate = if goal.iter().all(|v| *v == 0.0) {
        pseudo_norm(x0, &nil.weights)
    } else if x0.iter().all(|v| *v == 0.0) {
        pseudo_norm(goal, &nil.weights)
    } else {
        let d: Vec<f64> = goal.iter().zip(x0).map(|(a, b)| a - b).collect();
        pseudo_norm(&d, &nil.weights)
    };
    match metric {
        ResidualMetric::PseudoNorm => surrogate,
        ResidualMetric::Optimizer(cfg) => {
            let cfg = DistanceConfig {
                scale_hint: Some(surrogate.max(1e-12)),
                ..cfg.clone()
            };
            estimate_distance_nil(nil, x0, goal, &cfg).map_or(surrogate, |e| e.upper)
        }
    }
}

struct Newton<'a> {
    map: &'a TriangularIntegrator,
    x0: &'a [f64],
    goal: &'a [f64],
}

impl Newton<'_> {
    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let z = self.map.endpoint_displacements(v, self.x0);
        z.iter().zip(self.goal).map(|(a, b)| a - b).collect()
    }

    fn jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.goal.len();
        let mut jac = DMatrix::zeros(n, v.len());
        let mut w = v.to_vec();
        for k in 0..v.len() {
            let h = 1e-6 * (1.0 + v[k].abs());
            w[k] = v[k] + h;
            let fp = self.residual(&w);
            w[k] = v[k] - h;
            let fm = self.residual(&w);
            w[k] = v[k];
            for i in 0..n {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// Damped minimum-norm Newton; polishes past `tol` until no further decrease.
    fn solve(&self, mut v: Vec<f64>, max_iter: usize) -> (Vec<f64>, f64) {
        let mut r = self.residual(&v);
        let mut err = max_abs(&r);
        for _ in 0..max_iter {
            if err < 1e-16 {
                break;
            }
            let jac = self.jacobian(&v);
            let jjt = &jac * jac.transpose();
            let mu = 1e-14 * jjt.trace().max(1e-300);
            let a = jjt + DMatrix::identity(r.len(), r.len()) * mu;
            let Some(y) = a.cholesky().map(|c| c.solve(&DVector::from_column_slice(&r))) else {
                break;
            };
            let step = jac.transpose() * y;
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, s)| a - alpha * s).collect();
                let rt = self.residual(&trial);
                let et = max_abs(&rt);
                if et < err {
                    v = trial;
                    r = rt;
                    err = et;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (v, err)
    }
}

/// Steers the nilpotent system from `x0` to `goal` with a piecewise constant control.
pub fn steer_nilpotent(
    nil: &NilpotentSystem,
    x0: &[f64],
    goal: &[f64],
    cfg: &SteerConfig,
    metric: &ResidualMetric,
) -> Result<Steering> {
    let n = nil.dim();
    let m = nil.nfields();
    if x0.len() != n || goal.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if x0.len() != n { x0.len() } else { goal.len() },
        });
    }
    if x0 == goal {
        return Ok(Steering {
            control: ControlSignal::empty(m),
            cost: 0.0,
            reference: 0.0,
            endpoint_error: 0.0,
        });
    }
    let reference = residual_of(nil, metric, x0, goal);
    let segments = cfg.segments.unwrap_or(2 * n).max(1);
    let map = TriangularIntegrator::new(nil);
    let newton = Newton { map: &map, x0, goal };
    let scale = reference.max(1e-6) / segments as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, ControlSignal, f64)> = None;
    let mut best_error = f64::INFINITY;
    for k in 0..cfg.restarts.max(1) {
        let v0: Vec<f64> = if k == 0 {
            vec![0.0; m * segments]
        } else {
            (0..m * segments).map(|_| rng.gen_range(-2.0 * scale..2.0 * scale)).collect()
        };
        let (v, err) = newton.solve(v0, cfg.max_iter);
        best_error = best_error.min(err);
        if err > cfg.tol {
            continue;
        }
        let control = merge_segments(&ControlSignal::from_displacements(m, &v).normalized())?;
        let cost = control.cost();
        if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
            best = Some((cost, control, err));
        }
    }
    let Some((cost, control, err)) = best else {
        return Err(Error::SteeringFailed {
            restarts: cfg.restarts.max(1),
            residual: best_error,
        });
    };
    if cost > cfg.k_cap * reference {
        return Err(Error::SteeringFailed {
            restarts: cfg.restarts.max(1),
            residual: err,
        });
    }
    Ok(Steering {
        control,
        cost,
        reference,
        endpoint_error: err,
    })
}

#[derive(Clone, Debug)]
pub struct PlanConfig {
    pub steer: SteerConfig,
    pub max_iter: usize,
    /// Stop when the residual drops below this.
    pub tol: f64,
    /// Chart validity radius, in pseudo-norm around the goal.
    pub radius: f64,
    pub metric: ResidualMetric,
    pub ode: OdeConfig,
    /// Bracket length cap for the flag at the goal.
    pub depth_cap: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            steer: SteerConfig::default(),
            max_iter: 30,
            tol: 1e-5,
            radius: 1.0,
            metric: ResidualMetric::PseudoNorm,
            ode: OdeConfig::default(),
            depth_cap: 6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    /// States `x^0 = a, x^1, ...`.
    pub waypoints: Vec<Vec<f64>>,
    /// Control applied at each iteration.
    pub controls: Vec<ControlSignal>,
    /// `d̂(b, x^k)` for every waypoint.
    pub residuals: Vec<f64>,
    /// `cost_k / residual_k` for every control.
    pub k_ratios: Vec<f64>,
    pub converged: bool,
    pub metric: &'static str,
}

impl PlanResult {
    pub fn iterations(&self) -> usize {
        self.controls.len()
    }

    /// `r_{k+1} / r_k`.
    pub fn contractions(&self) -> Vec<f64> {
        self.residuals.windows(2).map(|w| w[1] / w[0]).collect()
    }

    pub fn max_k_ratio(&self) -> f64 {
        self.k_ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn final_state(&self) -> &[f64] {
        self.waypoints.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Concatenation of every iteration's control.
    pub fn total_control(&self) -> ControlSignal {
        let m = self.controls.first().map_or(0, ControlSignal::nfields);
        self.controls.iter().fold(ControlSignal::empty(m), |acc, c| acc.then(c))
    }

    /// Header `k,x1..xn,residual`.
    pub fn waypoints_csv(&self) -> String {
        let n = self.waypoints.first().map_or(0, Vec::len);
        let mut s = String::from("k");
        for j in 1..=n {
            s.push_str(&format!(",x{j}"));
        }
        s.push_str(",residual\n");
        for (k, (x, r)) in self.waypoints.iter().zip(&self.residuals).enumerate() {
            s.push_str(&k.to_string());
            for v in x {
                s.push(',');
                s.push_str(&fmt15(*v));
            }
            s.push(',');
            s.push_str(&fmt15(*r));
            s.push('\n');
        }
        s
    }

    /// Header `duration,u1..um`.
    pub fn control_csv(&self) -> String {
        let c = self.total_control();
        let mut s = String::from("duration");
        for i in 1..=c.nfields() {
            s.push_str(&format!(",u{i}"));
        }
        s.push('\n');
        for (d, u) in c.segments() {
            s.push_str(&fmt15(d));
            for v in u {
                s.push(',');
                s.push_str(&fmt15(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn residual_log(&self) -> String {
        let mut s = format!("# residual metric: {}\n", self.metric);
        for (k, r) in self.residuals.iter().enumerate() {
            s.push_str(&format!("iter {k} residual {}", fmt15(*r)));
            if k > 0 {
                s.push_str(&format!(" contraction {}", fmt15(r / self.residuals[k - 1])));
            }
            if let Some(kr) = self.k_ratios.get(k) {
                s.push_str(&format!(" cost/residual {}", fmt15(*kr)));
            }
            s.push('\n');
        }
        s.push_str(&format!("converged {}\n", self.converged));
        s
    }

    /// Whitespace-separated state columns along the whole trajectory.
    pub fn gnuplot_data(&self, sys: &CompiledSystem, ode: &OdeConfig) -> Result<String> {
        let x0 = self.waypoints.first().cloned().unwrap_or_default();
        let traj = simulate(sys, &self.total_control(), &x0, ode)?;
        let mut s = String::from("# t");
        for j in 1..=x0.len() {
            s.push_str(&format!(" x{j}"));
        }
        s.push('\n');
        for (t, x) in traj.times.iter().zip(&traj.states) {
            s.push_str(&fmt15(*t));
            for v in x {
                s.push(' ');
                s.push_str(&fmt15(*v));
            }
            s.push('\n');
        }
        Ok(s)
    }
}

/// Iterates steering on the nilpotent approximation `nil` built in `chart` at the goal.
pub fn plan_in_chart(
    sys: &SystemDef,
    chart: &PrivilegedChart,
    nil: &NilpotentSystem,
    a: &[f64],
    cfg: &PlanConfig,
) -> Result<PlanResult> {
    let compiled = CompiledSystem::new(&sys.fields);
    let origin = vec![0.0; sys.dim()];
    let residual = |x: &[f64]| {
        let z = chart.to_chart(x);
        (residual_of(nil, &cfg.metric, &z, &origin), z)
    };
    let mut out = PlanResult {
        waypoints: vec![a.to_vec()],
        controls: Vec::new(),
        residuals: Vec::new(),
        k_ratios: Vec::new(),
        converged: false,
        metric: cfg.metric.name(),
    };
    let (r0, mut z) = residual(a);
    let norm = chart.pseudo_norm(&z);
    if norm > cfg.radius {
        return Err(Error::OutOfRadius {
            norm,
            radius: cfg.radius,
        });
    }
    out.residuals.push(r0);
    let mut x = a.to_vec();
    let mut increases = 0;
    for k in 0..=cfg.max_iter {
        let r = *out.residuals.last().expect("nonempty");
        if r < cfg.tol {
            out.converged = true;
            break;
        }
        if k == cfg.max_iter {
            break;
        }
        let steer = SteerConfig {
            seed: cfg.steer.seed.wrapping_add(k as u64),
            ..cfg.steer.clone()
        };
        let s = steer_nilpotent(nil, &z, &origin, &steer, &cfg.metric)?;
        x = control::endpoint(&compiled, &s.control, &x, &cfg.ode)?;
        out.k_ratios.push(s.cost / r);
        out.controls.push(s.control);
        let (r_next, z_next) = residual(&x);
        z = z_next;
        out.waypoints.push(x.clone());
        out.residuals.push(r_next);
        if (r_next - r).abs() <= 1e-9 * r {
            // roundoff floor: further steering cannot move the state
            break;
        }
        if r_next > r {
            increases += 1;
            if increases >= 2 {
                return Err(Error::Diverged { iteration: k + 1 });
            }
        } else {
            increases = 0;
        }
    }
    Ok(out)
}

/// Plans from `a` to `b` with the algebraic privileged chart and nilpotent approximation at `b`.
pub fn plan(sys: &SystemDef, a: &[f64], b: &[f64], cfg: &PlanConfig) -> Result<PlanResult> {
    let n = sys.dim();
    if a.len() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if a.len() != n { a.len() } else { b.len() },
        });
    }
    let bq: Vec<_> = b.iter().map(|v| from_f64(*v)).collect();
    let flag = flag_at(sys, &bq, cfg.depth_cap)?;
    let chart = algebraic_privileged_coords(sys, &flag)?;
    let nil = nilpotent_approximation(sys, &chart)?;
    plan_in_chart(sys, &chart, &nil, a, cfg)
}

#[derive(Clone, Debug)]
pub struct GlobalPlan {
    /// Intermediate goals `b_1, ..., b_N = b`.
    pub targets: Vec<Vec<f64>>,
    pub legs: Vec<PlanResult>,
}

impl GlobalPlan {
    pub fn final_state(&self) -> &[f64] {
        self.legs.last().map_or(&[], PlanResult::final_state)
    }

    pub fn converged(&self) -> bool {
        self.legs.iter().all(|l| l.converged)
    }
}

/// Chains local plans through equally spaced goals on the segment from `a` to `b`; every
/// goal must share the growth vector of `a` (all-regular path).
pub fn plan_global(sys: &SystemDef, a: &[f64], b: &[f64], spacing: f64, cfg: &PlanConfig) -> Result<GlobalPlan> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("spacing {spacing} must be positive")));
    }
    let length = a.iter().zip(b).map(|(p, q)| (q - p).powi(2)).sum::<f64>().sqrt();
    let count = (length / spacing).ceil().max(1.0) as usize;
    let aq: Vec<_> = a.iter().map(|v| from_f64(*v)).collect();
    let growth = flag_at(sys, &aq, cfg.depth_cap)?.growth_vector;
    let mut targets = Vec::new();
    let mut legs = Vec::new();
    let mut x = a.to_vec();
    for i in 1..=count {
        let s = i as f64 / count as f64;
        let target: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect();
        let tq: Vec<_> = target.iter().map(|v| from_f64(*v)).collect();
        let g = flag_at(sys, &tq, cfg.depth_cap)?.growth_vector;
        if g != growth {
            return Err(Error::InvalidArgument(format!(
                "growth vector changes along the path ({growth:?} -> {g:?}); global planning needs regular points"
            )));
        }
        let leg = plan(sys, &x, &target, cfg)?;
        if !leg.converged {
            return Err(Error::SteeringFailed {
                restarts: leg.iterations(),
                residual: leg.residuals.last().copied().unwrap_or(f64::NAN),
            });
        }
        x = leg.final_state().to_vec();
        targets.push(target);
        legs.push(leg);
    }
    Ok(GlobalPlan { targets, legs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::symfield::rint;

    fn nil_of(sys: &SystemDef) -> NilpotentSystem {
        let o = vec![rint(0); sys.dim()];
        let chart = algebraic_privileged_coords(sys, &flag_at(sys, &o, 6).unwrap()).unwrap();
        nilpotent_approximation(sys, &chart).unwrap()
    }

    #[test]
    fn trivial_goal_is_empty_control() {
        let nil = nil_of(&fixtures::heisenberg());
        let s = steer_nilpotent(&nil, &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3], &SteerConfig::default(), &ResidualMetric::PseudoNorm)
            .unwrap();
        assert!(s.control.is_empty());
    }

    #[test]
    fn heisenberg_horizontal_is_one_segment() {
        let nil = nil_of(&fixtures::heisenberg());
        let a = 0.3;
        let s = steer_nilpotent(&nil, &[0.0; 3], &[a, 0.0, 0.0], &SteerConfig::default(), &ResidualMetric::PseudoNorm)
            .unwrap();
        assert_eq!(s.control.nsegments(), 1);
        assert!((s.control.durations()[0] - a).abs() < 1e-12);
        assert!((s.control.values()[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_vertical_reaches_goal() {
        let nil = nil_of(&fixtures::heisenberg());
        let goal = [0.0, 0.0, 0.04];
        let s = steer_nilpotent(&nil, &[0.0; 3], &goal, &SteerConfig::default(), &ResidualMetric::PseudoNorm).unwrap();
        let z = TriangularIntegrator::new(&nil).endpoint(&s.control, &[0.0; 3]);
        assert!(max_abs(&[z[0] - goal[0], z[1] - goal[1], z[2] - goal[2]]) < 1e-9);
        assert!(s.cost <= 20.0 * 0.2);
    }

    #[test]
    fn exact_systems_converge_in_one_iteration() {
        for (sys, a) in [
            (fixtures::grusin(), vec![0.05, -0.03]),
            (fixtures::heisenberg(), vec![0.05, -0.03, 0.02]),
            (fixtures::martinet(), vec![0.05, -0.03, 0.001]),
        ] {
            let r = plan(&sys, &a, &vec![0.0; sys.dim()], &PlanConfig::default()).unwrap();
            assert!(r.converged, "{}: {:?}", sys.name, r.residuals);
            assert_eq!(r.iterations(), 1, "{}: {:?}", sys.name, r.residuals);
        }
    }

    #[test]
    fn unicycle_contracts() {
        let u = fixtures::unicycle();
        let r = plan(&u, &[0.0; 3], &[0.0, 0.1, 0.0], &PlanConfig::default()).unwrap();
        assert!(r.converged, "{:?}", r.residuals);
        for c in &r.contractions()[1..] {
            assert!(*c <= 0.5, "{:?}", r.residuals);
        }
    }

    #[test]
    fn already_there() {
        let r = plan(&fixtures::unicycle(), &[0.0; 3], &[0.0; 3], &PlanConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations(), 0);
    }

    #[test]
    fn far_start_is_rejected() {
        let cfg = PlanConfig {
            radius: 0.1,
            ..Default::default()
        };
        assert!(matches!(
            plan(&fixtures::heisenberg(), &[0.5, 0.0, 0.0], &[0.0; 3], &cfg),
            Err(Error::OutOfRadius { .. })
        ));
    }
}
