//! Packing counts of sub-Riemannian balls and dimension fits.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::liealgebra::BracketTower;
use crate::metric::{estimate_distance_map, DistanceConfig, OdeConfig, RkMap};
use crate::report::{fmt15, linear_fit, linear_rss, median};
use crate::symfield::{CompiledField, SystemDef};

/// Bracket-box quasi-distance: `rho(x, y)` is the least over frames `(X_I1, ..., X_In)` of
/// `max_i |c_i|^(1/|I_i|)` where `y - x = sum_i c_i X_Ii(x)`.
#[derive(Clone, Debug)]
pub struct BracketBoxes {
    brackets: Vec<(CompiledField, u32)>,
    tuples: Vec<Vec<usize>>,
    dim: usize,
}

/// The invertible frames at one base point.
#[derive(Clone, Debug)]
pub struct LocalBoxes {
    point: Vec<f64>,
    /// `(inverse frame matrix, bracket lengths, frame matrix)`.
    frames: Vec<(DMatrix<f64>, Vec<u32>, DMatrix<f64>)>,
}

fn tuples(len: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > len {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < len - k + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

impl BracketBoxes {
    pub fn new(sys: &SystemDef, r_max: usize) -> Result<Self> {
        let mut tower = BracketTower::for_system(sys);
        tower.grow_to(r_max.max(1))?;
        let brackets: Vec<(CompiledField, u32)> = tower
            .up_to(r_max.max(1))
            .filter(|(_, f)| !f.is_zero())
            .map(|(b, f)| (f.compile(), b.len() as u32))
            .collect();
        let dim = sys.dim();
        Ok(Self {
            tuples: tuples(brackets.len(), dim),
            brackets,
            dim,
        })
    }

    pub fn at(&self, x: &[f64]) -> LocalBoxes {
        let values: Vec<Vec<f64>> = self.brackets.iter().map(|(f, _)| f.eval(x)).collect();
        let frames = self
            .tuples
            .iter()
            .filter_map(|t| {
                let m = DMatrix::from_fn(self.dim, self.dim, |i, j| values[t[j]][i]);
                let inv = m.clone().try_inverse()?;
                inv.iter().all(|v| v.is_finite()).then(|| (inv, t.iter().map(|&k| self.brackets[k].1).collect(), m))
            })
            .collect();
        LocalBoxes {
            point: x.to_vec(),
            frames,
        }
    }
}

impl LocalBoxes {
    pub fn rho(&self, y: &[f64]) -> f64 {
        let d: Vec<f64> = y.iter().zip(&self.point).map(|(a, b)| a - b).collect();
        self.frames
            .iter()
            .map(|(inv, lens, _)| {
                (0..d.len())
                    .map(|i| {
                        let c: f64 = (0..d.len()).map(|j| inv[(i, j)] * d[j]).sum();
                        c.abs().powf(1.0 / lens[i] as f64)
                    })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `rho(y) < s`, with early exit.
    pub fn within(&self, y: &[f64], s: f64) -> bool {
        let n = y.len();
        let d: Vec<f64> = y.iter().zip(&self.point).map(|(a, b)| a - b).collect();
        'frames: for (inv, lens, _) in &self.frames {
            for i in 0..n {
                let c: f64 = (0..n).map(|j| inv[(i, j)] * d[j]).sum();
                if c.abs() >= s.powi(lens[i] as i32) {
                    continue 'frames;
                }
            }
            return true;
        }
        false
    }

    /// Coordinate half-widths of a box containing `{rho < s}`.
    pub fn half_widths(&self, s: f64) -> Vec<f64> {
        let n = self.point.len();
        let mut hw = vec![0.0f64; n];
        for (_, lens, m) in &self.frames {
            for (j, h) in hw.iter_mut().enumerate() {
                let w: f64 = (0..n).map(|i| m[(j, i)].abs() * s.powi(lens[i] as i32)).sum();
                *h = h.max(w);
            }
        }
        hw
    }
}

#[derive(Clone, Debug)]
pub struct PackingConfig {
    /// Cap on candidate centers per packing.
    pub budget: usize,
    /// A packing stops once it has seen this many candidates per accepted center.
    pub candidate_ratio: f64,
    /// Packings are repeated with fresh seeds until the counts add up to this.
    pub min_count: usize,
    pub max_repeats: usize,
    pub r_max: usize,
    /// `d ~ kappa * rho`; `None` calibrates with the optimizer.
    pub kappa: Option<f64>,
    pub calibration_pairs: usize,
    /// Optimizer refinements of pairs with `kappa * rho` in `[1.8 eps, 2.2 eps]`, per scale.
    pub refine_budget: usize,
    pub dist: DistanceConfig,
    pub ode: OdeConfig,
    pub seed: u64,
}

impl Default for PackingConfig {
    fn default() -> Self {
        Self {
            budget: 200_000,
            candidate_ratio: 40.0,
            min_count: 200,
            max_repeats: 16,
            r_max: 3,
            kappa: None,
            calibration_pairs: 6,
            refine_budget: 32,
            dist: DistanceConfig {
                restarts: 4,
                ..Default::default()
            },
            ode: OdeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PackingCount {
    pub eps: f64,
    /// Centers with `kappa * rho(p, c) <= r`, one entry per repeat.
    pub counts: Vec<usize>,
    /// Centers accepted in the enlarged region `r + 2 eps`, summed over repeats.
    pub total: usize,
    pub candidates: usize,
    pub refinements: usize,
    /// Set when a packing hit the candidate budget before saturating.
    pub lower_bound: bool,
}

impl PackingCount {
    pub fn mean(&self) -> f64 {
        if self.counts.is_empty() {
            return 0.0;
        }
        self.counts.iter().sum::<usize>() as f64 / self.counts.len() as f64
    }

    /// The packing centers form a `2 eps` covering of the candidates.
    pub fn covering_radius(&self) -> f64 {
        2.0 * self.eps
    }
}

/// Median of `d / rho` on random nearby pairs.
pub fn calibrate(
    sys: &SystemDef,
    boxes: &BracketBoxes,
    p: &[f64],
    r: f64,
    pairs: usize,
    dist: &DistanceConfig,
    ode: &OdeConfig,
    seed: u64,
) -> Result<f64> {
    let map = RkMap::new(&sys.fields, ode.clone());
    let local = boxes.at(p);
    let hw = local.half_widths(r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b61_7070);
    let mut ratios = Vec::new();
    let mut tries = 0;
    while ratios.len() < pairs && tries < 50 * pairs.max(1) {
        tries += 1;
        let y: Vec<f64> = p.iter().zip(&hw).map(|(c, h)| c + rng.gen_range(-*h..=*h)).collect();
        let rho = local.rho(&y);
        if !(rho > 0.25 * r && rho <= r) {
            continue;
        }
        let cfg = DistanceConfig {
            seed: seed.wrapping_add(tries as u64),
            scale_hint: Some(rho),
            ..dist.clone()
        };
        if let Ok(e) = estimate_distance_map(&map, p, &y, &cfg, &[]) {
            ratios.push(e.upper / rho);
        }
    }
    if ratios.is_empty() {
        return Err(Error::BudgetExhausted("no calibration pair could be estimated".into()));
    }
    Ok(median(&ratios))
}

struct Center {
    local: LocalBoxes,
    bound: Vec<f64>,
    inside: bool,
}

struct Packing {
    count: usize,
    total: usize,
    candidates: usize,
    refinements: usize,
    saturated: bool,
}

struct Packer<'a> {
    boxes: &'a BracketBoxes,
    map: RkMap,
    center: LocalBoxes,
    kappa: f64,
    r: f64,
    cfg: &'a PackingConfig,
}

impl Packer<'_> {
    /// One greedy packing over a stream of uniform candidates in the region `r + 2 eps`.
    fn pack(&self, eps: f64, seed: u64, refine_left: usize) -> Packing {
        let p = &self.center.point;
        let region = self.r + 2.0 * eps;
        let hw = self.center.half_widths(region / self.kappa);
        let sep = 2.0 * eps / self.kappa;
        let band = (1.8 * eps / self.kappa, 2.2 * eps / self.kappa);
        // centers bucketed by their first coordinate
        let width = 2.0 * self.center.half_widths(band.1)[0].max(1e-300);
        let mut buckets: std::collections::HashMap<i64, Vec<usize>> = std::collections::HashMap::new();
        let mut reach: f64 = 0.0;
        let mut centers: Vec<Center> = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Packing {
            count: 0,
            total: 0,
            candidates: 0,
            refinements: 0,
            saturated: false,
        };
        let mut drawn = 0;
        while drawn < self.cfg.budget {
            drawn += 1;
            let y: Vec<f64> = p.iter().zip(&hw).map(|(c, h)| c + rng.gen_range(-*h..=*h)).collect();
            let d0 = self.kappa * self.center.rho(&y);
            if d0 > region {
                continue;
            }
            out.candidates += 1;
            let lo = ((y[0] - reach) / width).floor() as i64;
            let hi = ((y[0] + reach) / width).floor() as i64;
            let mut ok = true;
            'scan: for b in lo..=hi {
                let Some(list) = buckets.get(&b) else { continue };
                for &ci in list {
                    let c = &centers[ci];
                    if y.iter().zip(&c.local.point).zip(&c.bound).any(|((a, b), h)| (a - b).abs() >= *h) {
                        continue;
                    }
                    if !c.local.within(&y, band.1) {
                        continue;
                    }
                    if !c.local.within(&y, band.0) && out.refinements < refine_left {
                        out.refinements += 1;
                        let dcfg = DistanceConfig {
                            seed: seed.wrapping_add(out.refinements as u64),
                            scale_hint: Some(2.0 * eps),
                            ..self.cfg.dist.clone()
                        };
                        match estimate_distance_map(&self.map, &c.local.point, &y, &dcfg, &[]) {
                            Ok(e) if e.upper > 2.0 * eps => continue,
                            Ok(_) => {}
                            Err(_) if !c.local.within(&y, sep) => continue,
                            Err(_) => {}
                        }
                    } else if !c.local.within(&y, sep) {
                        continue;
                    }
                    ok = false;
                    break 'scan;
                }
            }
            if ok {
                let local = self.boxes.at(&y);
                let bound = local.half_widths(band.1);
                reach = reach.max(bound[0]);
                buckets.entry((y[0] / width).floor() as i64).or_default().push(centers.len());
                centers.push(Center {
                    local,
                    bound,
                    inside: d0 <= self.r,
                });
            }
            if out.candidates as f64 >= self.cfg.candidate_ratio * centers.len() as f64 {
                out.saturated = true;
                break;
            }
        }
        out.total = centers.len();
        out.count = centers.iter().filter(|c| c.inside).count();
        out
    }
}

/// Greedy maximal packings of `B(p, r)` at every scale in `eps_list`.
///
/// Candidates are drawn uniformly in a coordinate box around `{kappa * rho(p, .) <= r + 2 eps}`;
/// a candidate becomes a center when it is `2 eps`-separated from every earlier center, and
/// only centers within `r` are counted.
pub fn packing_counts(sys: &SystemDef, p: &[f64], r: f64, eps_list: &[f64], cfg: &PackingConfig) -> Result<(f64, Vec<PackingCount>)> {
    if p.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: p.len(),
        });
    }
    let boxes = BracketBoxes::new(sys, cfg.r_max)?;
    let kappa = match cfg.kappa {
        Some(k) => k,
        None => calibrate(sys, &boxes, p, r, cfg.calibration_pairs, &cfg.dist, &cfg.ode, cfg.seed)?,
    };
    let packer = Packer {
        boxes: &boxes,
        map: RkMap::new(&sys.fields, cfg.ode.clone()),
        center: boxes.at(p),
        kappa,
        r,
        cfg,
    };
    let mut out = Vec::new();
    for (k, &eps) in eps_list.iter().enumerate() {
        let mut pc = PackingCount {
            eps,
            counts: Vec::new(),
            total: 0,
            candidates: 0,
            refinements: 0,
            lower_bound: false,
        };
        if eps >= r {
            pc.counts.push(1);
            pc.total = 1;
            out.push(pc);
            continue;
        }
        while pc.counts.len() < cfg.max_repeats.max(1) {
            let seed = crate::metric::sample_seed(cfg.seed, k, pc.counts.len());
            let run = packer.pack(eps, seed, cfg.refine_budget.saturating_sub(pc.refinements));
            pc.counts.push(run.count);
            pc.total += run.total;
            pc.candidates += run.candidates;
            pc.refinements += run.refinements;
            pc.lower_bound |= !run.saturated;
            if pc.counts.iter().sum::<usize>() >= cfg.min_count {
                break;
            }
        }
        out.push(pc);
    }
    Ok((kappa, out))
}

/// Packing count at a single scale.
pub fn packing_count(sys: &SystemDef, p: &[f64], r: f64, eps: f64, cfg: &PackingConfig) -> Result<PackingCount> {
    Ok(packing_counts(sys, p, r, &[eps], cfg)?.1.remove(0))
}

/// `eps = r * 2^(-k/2)` for `k = 2..2+count`.
pub fn default_scales(r: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| r * 2f64.powf(-(k as f64 + 2.0) / 2.0)).collect()
}

#[derive(Clone, Debug)]
pub struct HausdorffEstimate {
    pub eps_list: Vec<f64>,
    pub counts: Vec<f64>,
    pub radius: f64,
    /// Slope of `ln N` against `ln(r/eps)`.
    pub plain_slope: f64,
    /// Power part of the selected model.
    pub fitted_dimension: f64,
    /// Exponent used for `N eps^Q`.
    pub reference_q: f64,
    pub f_statistic: f64,
    pub log_correction_detected: bool,
    /// Residuals of the plain log-log fit.
    pub residuals: Vec<f64>,
}

impl HausdorffEstimate {
    /// Header `eps,N_eps`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,N_eps\n");
        for (e, n) in self.eps_list.iter().zip(&self.counts) {
            s.push_str(&format!("{},{}\n", fmt15(*e), fmt15(*n)));
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "dimension {:.3} (plain slope {:.3}), N eps^{} vs log: F = {:.3}, log correction {}",
            self.fitted_dimension,
            self.plain_slope,
            self.reference_q,
            self.f_statistic,
            if self.log_correction_detected { "detected" } else { "not detected" }
        )
    }
}

/// Least-squares dimension and a test for a `log(1/eps)` factor.
///
/// The log factor is `L = ln(1 + r/eps)`; `N eps^Q` is regressed on `L` and the linear
/// model is preferred when its F ratio against the constant model exceeds `f_threshold`
/// with positive slope. `Q` defaults to the rounded plain slope.
pub fn dimension_fit(
    eps_list: &[f64],
    counts: &[f64],
    r: f64,
    reference_q: Option<f64>,
    f_threshold: f64,
) -> Result<HausdorffEstimate> {
    if eps_list.len() != counts.len() {
        return Err(Error::DimensionMismatch {
            expected: eps_list.len(),
            got: counts.len(),
        });
    }
    if eps_list.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "dimension fit needs at least 4 scales, got {}",
            eps_list.len()
        )));
    }
    if counts.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::InvalidArgument("packing counts must be positive".into()));
    }
    let x: Vec<f64> = eps_list.iter().map(|e| (r / e).ln()).collect();
    let y: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
    let (a, slope) = linear_fit(&x, &y);
    let residuals = x.iter().zip(&y).map(|(xi, yi)| yi - a - slope * xi).collect();
    let q = reference_q.unwrap_or_else(|| slope.round());
    let logs: Vec<f64> = eps_list.iter().map(|e| (1.0 + r / e).ln()).collect();
    let v: Vec<f64> = counts.iter().zip(eps_list).map(|(c, e)| c * (e / r).powf(q)).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let rss0: f64 = v.iter().map(|vi| (vi - mean).powi(2)).sum();
    let rss1 = linear_rss(&logs, &v);
    let dof = (v.len() - 2) as f64;
    let f = if rss0 <= 1e-24 * mean * mean {
        0.0
    } else if rss1 <= 0.0 {
        f64::INFINITY
    } else {
        (rss0 - rss1) / (rss1 / dof)
    };
    let b = linear_fit(&logs, &v).1;
    let detected = f > f_threshold && b > 0.0;
    let fitted_dimension = if detected {
        let yl: Vec<f64> = y.iter().zip(&logs).map(|(yi, l)| yi - l.ln()).collect();
        linear_fit(&x, &yl).1
    } else {
        slope
    };
    Ok(HausdorffEstimate {
        eps_list: eps_list.to_vec(),
        counts: counts.to_vec(),
        radius: r,
        plain_slope: slope,
        fitted_dimension,
        reference_q: q,
        f_statistic: f,
        log_correction_detected: detected,
        residuals,
    })
}

#[derive(Clone, Debug)]
pub struct HausdorffRun {
    pub kappa: f64,
    pub packings: Vec<PackingCount>,
    pub estimate: HausdorffEstimate,
}

/// Packing counts over `eps_list` followed by [`dimension_fit`].
pub fn estimate_dimension(
    sys: &SystemDef,
    p: &[f64],
    r: f64,
    eps_list: &[f64],
    reference_q: Option<f64>,
    f_threshold: f64,
    cfg: &PackingConfig,
) -> Result<HausdorffRun> {
    let (kappa, packings) = packing_counts(sys, p, r, eps_list, cfg)?;
    let counts: Vec<f64> = packings.iter().map(|c| c.mean().max(1.0)).collect();
    let estimate = dimension_fit(eps_list, &counts, r, reference_q, f_threshold)?;
    Ok(HausdorffRun {
        kappa,
        packings,
        estimate,
    })
}
