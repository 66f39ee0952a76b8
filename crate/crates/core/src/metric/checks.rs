//! Ball-Box ratios, first-order expansion, Riemannian comparison and trajectory comparison.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    estimate_distance_map, sample_pseudo_sphere, DistanceConfig, DistanceEstimate, EndpointMap, RkMap,
};
use crate::charts::{pseudo_norm, PrivilegedChart};
use crate::control::{endpoint, ControlSignal, OdeConfig};
use crate::error::Result;
use crate::liealgebra::Flag;
use crate::nilpotent::{NilpotentSystem, TriangularIntegrator};
use crate::report::{fmt15, linear_fit, median, pass_fail};
use crate::symfield::poly::to_f64;
use crate::symfield::{point_to_f64, CompiledSystem, SymField};

pub fn sample_seed(seed: u64, a: usize, b: usize) -> u64 {
    seed ^ (a as u64).wrapping_add(1).wrapping_mul(0xA24B_AED4_963E_E407) ^ (b as u64).wrapping_add(1).wrapping_mul(0x9FB2_1C65_1E98_DF25)
}

/// Per-scale ratio statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioRow {
    pub eps: f64,
    pub median_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub failures: usize,
    /// Median of the numerator (distance) at this scale.
    pub median_value: f64,
}

impl RatioRow {
    fn from_ratios(eps: f64, ratios: &[f64], values: &[f64], failures: usize) -> Self {
        Self {
            eps,
            median_ratio: median(ratios),
            min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            failures,
            median_value: median(values),
        }
    }
}

/// CSV with header `eps,median_ratio,min_ratio,max_ratio,failures`.
pub fn ratio_csv(rows: &[RatioRow]) -> String {
    let mut s = String::from("eps,median_ratio,min_ratio,max_ratio,failures\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt15(r.eps),
            fmt15(r.median_ratio),
            fmt15(r.min_ratio),
            fmt15(r.max_ratio),
            r.failures
        ));
    }
    s
}

#[derive(Clone, Debug)]
pub struct BallBoxConfig {
    pub slope_tol: f64,
    /// Largest accepted ratio between the biggest and smallest median ratio.
    pub max_spread: f64,
}

impl Default for BallBoxConfig {
    fn default() -> Self {
        Self {
            slope_tol: 0.15,
            max_spread: 3.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BallBoxReport {
    pub rows: Vec<RatioRow>,
    /// Slope of `ln median d` against `ln eps` (1 for a privileged chart).
    pub slope: f64,
    pub spread: f64,
    pub passed: bool,
}

impl BallBoxReport {
    pub fn to_csv(&self) -> String {
        ratio_csv(&self.rows)
    }

    pub fn summary(&self) -> String {
        let mut s = String::from("ratio d/|z|_p (d is an optimizer upper bound)\n");
        for r in &self.rows {
            s.push_str(&format!(
                "eps {:>8.4}: median {:.4} min {:.4} max {:.4} failures {}\n",
                r.eps, r.median_ratio, r.min_ratio, r.max_ratio, r.failures
            ));
        }
        s.push_str(&format!(
            "slope {:.4}, spread {:.3}: {}",
            self.slope,
            self.spread,
            pass_fail(self.passed)
        ));
        s
    }
}

fn log_slope(rows: &[RatioRow]) -> f64 {
    let usable: Vec<&RatioRow> = rows.iter().filter(|r| r.median_value > 0.0).collect();
    let lx: Vec<f64> = usable.iter().map(|r| r.eps.ln()).collect();
    let ly: Vec<f64> = usable.iter().map(|r| r.median_value.ln()).collect();
    linear_fit(&lx, &ly).1
}

/// Samples `|z|_p = eps` in the chart and compares `d(p, x(z))` to `eps`.
pub fn ballbox_check(
    fields: &[SymField],
    chart: &PrivilegedChart,
    eps_list: &[f64],
    samples_per_eps: usize,
    seed: u64,
    dist: &DistanceConfig,
    ode: &OdeConfig,
    tol: &BallBoxConfig,
) -> Result<BallBoxReport> {
    let map = RkMap::new(fields, ode.clone());
    let p = point_to_f64(&chart.center);
    let step = chart.weights.last().copied().unwrap_or(1);
    let mut rows = Vec::new();
    for (a, &eps) in eps_list.iter().enumerate() {
        let outcomes: Vec<Option<f64>> = (0..samples_per_eps)
            .into_par_iter()
            .map(|b| {
                let s = sample_seed(seed, a, b);
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, usize::MAX, b));
                let z = sample_pseudo_sphere(&chart.weights, eps, &mut rng);
                let x = chart.from_chart(&z);
                let cfg = DistanceConfig {
                    seed: s,
                    scale_hint: Some(eps),
                    step_hint: step,
                    ..dist.clone()
                };
                estimate_distance_map(&map, &p, &x, &cfg, &[]).ok().map(|e| e.upper)
            })
            .collect();
        let values: Vec<f64> = outcomes.iter().flatten().copied().collect();
        let ratios: Vec<f64> = values.iter().map(|d| d / eps).collect();
        rows.push(RatioRow::from_ratios(eps, &ratios, &values, samples_per_eps - values.len()));
    }
    let slope = log_slope(&rows);
    let meds: Vec<f64> = rows.iter().map(|r| r.median_ratio).filter(|v| v.is_finite()).collect();
    let spread = meds.iter().copied().fold(f64::NEG_INFINITY, f64::max) / meds.iter().copied().fold(f64::INFINITY, f64::min);
    let passed = (slope - 1.0).abs() <= tol.slope_tol && spread <= tol.max_spread && !meds.is_empty();
    Ok(BallBoxReport {
        rows,
        slope,
        spread,
        passed,
    })
}

#[derive(Clone, Debug)]
pub struct ExpansionReport {
    /// Ratios `d / d^` per scale.
    pub rows: Vec<RatioRow>,
    /// `max |d/d^ - 1|` per scale.
    pub max_defect: Vec<f64>,
    /// Slope of `ln max_defect` against `ln eps`.
    pub defect_slope: f64,
    pub passed: bool,
}

impl ExpansionReport {
    pub fn to_csv(&self) -> String {
        ratio_csv(&self.rows)
    }

    pub fn summary(&self) -> String {
        let mut s = String::from("ratio d/d^ (both optimizer upper bounds, cross warm-started)\n");
        for (r, m) in self.rows.iter().zip(&self.max_defect) {
            s.push_str(&format!(
                "eps {:>8.4}: median {:.5} min {:.5} max {:.5} max|d/d^-1| {:.2e} failures {}\n",
                r.eps, r.median_ratio, r.min_ratio, r.max_ratio, m, r.failures
            ));
        }
        s.push_str(&format!("defect slope {:.3}: {}", self.defect_slope, pass_fail(self.passed)));
        s
    }
}

#[derive(Clone, Debug)]
pub struct ExpansionConfig {
    /// Defects below this count as solver noise.
    pub noise_tol: f64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self { noise_tol: 0.03 }
    }
}

fn best_of(a: Option<DistanceEstimate>, b: Option<DistanceEstimate>) -> Option<DistanceEstimate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.upper < x.upper { y } else { x }),
        (x, y) => x.or(y),
    }
}

/// Distances in the system and in its nilpotent approximation to the same chart targets.
pub fn distance_expansion_check(
    fields: &[SymField],
    nil: &NilpotentSystem,
    chart: &PrivilegedChart,
    eps_list: &[f64],
    samples_per_eps: usize,
    seed: u64,
    dist: &DistanceConfig,
    ode: &OdeConfig,
    tol: &ExpansionConfig,
) -> Result<ExpansionReport> {
    let map = RkMap::new(fields, ode.clone());
    let nil_map = TriangularIntegrator::new(nil);
    let p = point_to_f64(&chart.center);
    let origin = vec![0.0; nil.dim()];
    let mut rows = Vec::new();
    let mut max_defect = Vec::new();
    for (a, &eps) in eps_list.iter().enumerate() {
        let outcomes: Vec<Option<(f64, f64)>> = (0..samples_per_eps)
            .into_par_iter()
            .map(|b| {
                let s = sample_seed(seed, a, b);
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, usize::MAX, b));
                let z = sample_pseudo_sphere(&chart.weights, eps, &mut rng);
                let x = chart.from_chart(&z);
                let cfg = DistanceConfig {
                    seed: s,
                    scale_hint: Some(eps),
                    step_hint: nil.step,
                    ..dist.clone()
                };
                let hat = estimate_distance_map(&nil_map, &origin, &z, &cfg, &[]).ok();
                let guess: Vec<ControlSignal> = hat.iter().map(|e| e.witness.clone()).collect();
                let d = estimate_distance_map(&map, &p, &x, &cfg, &guess).ok()?;
                let back = estimate_distance_map(&nil_map, &origin, &z, &cfg, std::slice::from_ref(&d.witness)).ok();
                let hat = best_of(hat, back)?;
                Some((d.upper, hat.upper))
            })
            .collect();
        let pairs: Vec<(f64, f64)> = outcomes.iter().flatten().copied().collect();
        let ratios: Vec<f64> = pairs.iter().map(|(d, h)| d / h).collect();
        let values: Vec<f64> = pairs.iter().map(|(d, _)| *d).collect();
        max_defect.push(ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max));
        rows.push(RatioRow::from_ratios(eps, &ratios, &values, samples_per_eps - pairs.len()));
    }
    let usable: Vec<(f64, f64)> = eps_list
        .iter()
        .zip(&max_defect)
        .filter(|(_, d)| **d > 0.0)
        .map(|(e, d)| (e.ln(), d.ln()))
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
    let defect_slope = if lx.len() >= 2 { linear_fit(&lx, &ly).1 } else { f64::NAN };
    let all_noise = max_defect.iter().all(|d| *d <= tol.noise_tol);
    let shrinking = max_defect.len() >= 2
        && max_defect.last().copied().unwrap_or(f64::INFINITY) < max_defect[0] / 2.0
        && defect_slope >= 0.5;
    Ok(ExpansionReport {
        passed: all_noise || shrinking,
        rows,
        max_defect,
        defect_slope,
    })
}

#[derive(Clone, Debug)]
pub struct RiemannianEvidence {
    /// `min d / d_R` over the samples.
    pub c: f64,
    /// `max d / d_R^(1/r)` over the samples.
    pub big_c: f64,
    pub r: u32,
    /// Unit direction of the last adapted-frame vector.
    pub direction: Vec<f64>,
    pub s_list: Vec<f64>,
    pub d_list: Vec<f64>,
    /// Fitted exponent of `d` against the Euclidean step along `direction`.
    pub exponent: f64,
    pub failures: usize,
}

impl RiemannianEvidence {
    pub fn summary(&self) -> String {
        format!(
            "c = {:.4}, C = {:.4}, r = {}, exponent along {:?} = {:.4} (expect {:.4}), failures {}",
            self.c,
            self.big_c,
            self.r,
            self.direction,
            self.exponent,
            1.0 / self.flag_weight_hint(),
            self.failures
        )
    }

    fn flag_weight_hint(&self) -> f64 {
        self.r as f64
    }
}

/// Two-sided comparison with the Euclidean distance at the flag point, plus the
/// exponent of `d` along the highest-weight frame direction.
pub fn riemannian_comparison_check(
    fields: &[SymField],
    flag: &Flag,
    samples: usize,
    s_list: &[f64],
    seed: u64,
    dist: &DistanceConfig,
    ode: &OdeConfig,
) -> Result<RiemannianEvidence> {
    let map = RkMap::new(fields, ode.clone());
    let p = point_to_f64(&flag.point);
    let n = p.len();
    let r = flag.degree_of_nonholonomy as u32;
    let last = flag.frame_values.last().map(|v| v.iter().map(to_f64).collect::<Vec<_>>()).unwrap_or_default();
    let ln = DVector::from_vec(last.clone()).norm();
    let direction: Vec<f64> = last.iter().map(|v| v / ln).collect();
    let cfg_for = |s: u64, hint: f64| DistanceConfig {
        seed: s,
        scale_hint: Some(hint),
        step_hint: r,
        ..dist.clone()
    };
    let sampled: Vec<Option<(f64, f64)>> = (0..samples)
        .into_par_iter()
        .map(|b| {
            let s = sample_seed(seed, 0, b);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            use rand::Rng;
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vn = DVector::from_vec(v.clone()).norm().max(1e-12);
            let len = rng.gen_range(0.02..0.2);
            let q: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + len * b / vn).collect();
            let e = estimate_distance_map(&map, &p, &q, &cfg_for(s, len.powf(1.0 / r as f64)), &[]).ok()?;
            Some((len, e.upper))
        })
        .collect();
    let pairs: Vec<(f64, f64)> = sampled.iter().flatten().copied().collect();
    let mut failures = samples - pairs.len();
    let c = pairs.iter().map(|(dr, d)| d / dr).fold(f64::INFINITY, f64::min);
    let big_c = pairs
        .iter()
        .map(|(dr, d)| d / dr.powf(1.0 / r as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let vertical: Vec<Option<f64>> = s_list
        .par_iter()
        .enumerate()
        .map(|(k, &s)| {
            let q: Vec<f64> = p.iter().zip(&direction).map(|(a, b)| a + s * b).collect();
            let seed_k = sample_seed(seed, 1, k);
            estimate_distance_map(&map, &p, &q, &cfg_for(seed_k, s.powf(1.0 / r as f64)), &[])
                .ok()
                .map(|e| e.upper)
        })
        .collect();
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut d_list = Vec::new();
    for (s, d) in s_list.iter().zip(&vertical) {
        match d {
            Some(d) => {
                lx.push(s.ln());
                ly.push(d.ln());
                d_list.push(*d);
            }
            None => {
                failures += 1;
                d_list.push(f64::NAN);
            }
        }
    }
    let exponent = linear_fit(&lx, &ly).1;
    Ok(RiemannianEvidence {
        c,
        big_c,
        r,
        direction,
        s_list: s_list.to_vec(),
        d_list,
        exponent,
        failures,
    })
}

#[derive(Clone, Debug)]
pub struct TrajectoryComparison {
    pub t_list: Vec<f64>,
    /// `|z(x(t)) - x^(t)|_p`.
    pub defects: Vec<f64>,
    /// NaN when every defect is below the noise floor.
    pub fitted_exponent: f64,
    /// `1 + 1/r`.
    pub expected_exponent: f64,
    pub shrinking: bool,
    pub passed: bool,
}

impl TrajectoryComparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,defect\n");
        for (t, d) in self.t_list.iter().zip(&self.defects) {
            s.push_str(&format!("{},{}\n", fmt15(*t), fmt15(*d)));
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "fitted exponent {:.3} (expect >= {:.3}), shrinking {}: {}",
            self.fitted_exponent,
            self.expected_exponent,
            self.shrinking,
            pass_fail(self.passed)
        )
    }
}

/// Pseudo-norm noise level below which defects are treated as zero.
pub const TRAJECTORY_NOISE: f64 = 1e-9;

/// Coordinate gaps below this are integrator noise and dropped before the pseudo-norm.
pub const COORDINATE_NOISE: f64 = 1e-12;

/// Runs the system from the chart center and the approximation from 0 with the
/// same (normalized) control and measures the chart pseudo-norm of the gap.
pub fn compare_to_nilpotent(
    fields: &[SymField],
    nil: &NilpotentSystem,
    chart: &PrivilegedChart,
    control: &ControlSignal,
    t_list: &[f64],
    ode: &OdeConfig,
) -> Result<TrajectoryComparison> {
    let sys = CompiledSystem::new(fields);
    let integ = TriangularIntegrator::new(nil);
    let p = point_to_f64(&chart.center);
    let origin = vec![0.0; nil.dim()];
    let unit = control.normalized();
    let mut defects = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let c = unit.truncated(t);
        let x = endpoint(&sys, &c, &p, ode)?;
        let z = chart.to_chart(&x);
        let zh = integ.endpoint(&c, &origin);
        let diff: Vec<f64> = z
            .iter()
            .zip(&zh)
            .map(|(a, b)| if (a - b).abs() < COORDINATE_NOISE { 0.0 } else { a - b })
            .collect();
        defects.push(pseudo_norm(&diff, &chart.weights));
    }
    let usable: Vec<(f64, f64)> = t_list
        .iter()
        .zip(&defects)
        .filter(|(_, d)| **d > TRAJECTORY_NOISE)
        .map(|(t, d)| (t.ln(), d.ln()))
        .collect();
    let r = nil.step.max(1) as f64;
    let expected = 1.0 + 1.0 / r;
    let (fitted, at_floor) = if usable.len() < 3 {
        (f64::NAN, true)
    } else {
        let (lx, ly): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
        (linear_fit(&lx, &ly).1, false)
    };
    let mut order: Vec<usize> = (0..t_list.len()).collect();
    order.sort_by(|&a, &b| t_list[a].total_cmp(&t_list[b]));
    let shrinking = order.windows(2).all(|w| defects[w[0]] <= defects[w[1]] + TRAJECTORY_NOISE);
    let passed = shrinking && (at_floor || fitted >= expected - 0.2);
    Ok(TrajectoryComparison {
        t_list: t_list.to_vec(),
        defects,
        fitted_exponent: fitted,
        expected_exponent: expected,
        shrinking,
        passed,
    })
}

/// Runs [`EndpointMap::endpoint`] on a control given as a signal with equal durations.
pub fn endpoint_of<M: EndpointMap>(map: &M, control: &ControlSignal, x0: &[f64]) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    for (d, u) in control.segments() {
        x = map.endpoint(d, u, &x)?;
    }
    Ok(x)
}
