//! Scale-adapted frames, box maps and the uniform Ball-Box and volume checks.

use nalgebra::{DMatrix, DVector};
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{estimate_distance_map, DistanceConfig, RkMap};
use crate::control::{field_flow, OdeConfig};
use crate::error::{Error, Result};
use crate::liealgebra::{BracketIndex, BracketTower};
use crate::report::{fmt15, linear_fit, pass_fail};
use crate::symfield::poly::{from_f64, to_f64};
use crate::symfield::{point_to_f64, CompiledField, Rational, SymField, SystemDef};

/// A frame maximizing `|det(X_I1(q) eps^|I1|, ..., X_In(q) eps^|In|)|`.
#[derive(Clone, Debug)]
pub struct ScaleFrame {
    pub point: Vec<Rational>,
    pub eps: Rational,
    pub frame: Vec<BracketIndex>,
    pub score: Rational,
    fields: Vec<CompiledField>,
}

fn det_rational(mut a: Vec<Vec<Rational>>) -> Rational {
    let n = a.len();
    let mut det = Rational::from_integer(1.into());
    for c in 0..n {
        let Some(piv) = (c..n).find(|&r| !a[r][c].is_zero()) else {
            return Rational::zero();
        };
        if piv != c {
            a.swap(piv, c);
            det = -det;
        }
        det *= &a[c][c];
        for r in c + 1..n {
            if a[r][c].is_zero() {
                continue;
            }
            let f = &a[r][c] / &a[c][c];
            for k in c..n {
                let v = &f * &a[c][k];
                a[r][k] -= v;
            }
        }
    }
    det
}

/// Increasing `k`-subsets of `0..len` in lexicographic order.
fn combinations(len: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, len: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..len {
            cur.push(i);
            rec(i + 1, len, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, len, k, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive maximization over `n`-tuples of brackets of length `<= r_max`
/// (length-then-lexicographic order; the first maximizer wins ties).
pub fn scale_adapted_frame(sys: &SystemDef, q: &[Rational], eps: &Rational, r_max: usize) -> Result<ScaleFrame> {
    let n = sys.dim();
    if q.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.len(),
        });
    }
    let mut tower = BracketTower::for_system(sys);
    tower.grow_to(r_max.max(1))?;
    let cands: Vec<(BracketIndex, SymField, Vec<Rational>)> = tower
        .up_to(r_max.max(1))
        .map(|(b, f)| {
            let v = f.evaluate(q)?;
            let s = num_traits::pow(eps.clone(), b.len());
            Ok((b.clone(), f.clone(), v.into_iter().map(|x| x * &s).collect()))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(Rational, Vec<usize>)> = None;
    for combo in combinations(cands.len(), n) {
        let cols: Vec<&Vec<Rational>> = combo.iter().map(|&c| &cands[c].2).collect();
        let rows: Vec<Vec<Rational>> = (0..n).map(|r| cols.iter().map(|c| c[r].clone()).collect()).collect();
        let score = det_rational(rows).abs();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, combo));
        }
    }
    let Some((score, combo)) = best.filter(|(s, _)| !s.is_zero()) else {
        return Err(Error::ZeroScore);
    };
    Ok(ScaleFrame {
        point: q.to_vec(),
        eps: eps.clone(),
        frame: combo.iter().map(|&c| cands[c].0.clone()).collect(),
        score,
        fields: combo.iter().map(|&c| cands[c].1.compile()).collect(),
    })
}

impl ScaleFrame {
    pub fn dim(&self) -> usize {
        self.point.len()
    }

    pub fn score_f64(&self) -> f64 {
        to_f64(&self.score)
    }

    /// Lengths `|I_j|` of the frame brackets.
    pub fn lengths(&self) -> Vec<u32> {
        self.frame.iter().map(|b| b.len() as u32).collect()
    }

    /// `exp(x_1 X_I1) o ... o exp(x_n X_In)(q)`.
    pub fn box_point(&self, x: &[f64], ode: &OdeConfig) -> Result<Vec<f64>> {
        let mut y = point_to_f64(&self.point);
        for (f, &t) in self.fields.iter().zip(x).rev() {
            y = field_flow(f, &y, t, ode)?;
        }
        Ok(y)
    }

    fn box_jacobian(&self, x: &[f64], ode: &OdeConfig) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = 1e-7 * (1.0 + x[k].abs());
            let mut a = x.to_vec();
            a[k] += h;
            let fp = self.box_point(&a, ode)?;
            a[k] -= 2.0 * h;
            let fm = self.box_point(&a, ode)?;
            for i in 0..n {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    /// `|det D(box map)(x)|`.
    pub fn box_volume_factor(&self, x: &[f64], ode: &OdeConfig) -> Result<f64> {
        Ok(self.box_jacobian(x, ode)?.determinant().abs())
    }

    /// Box coordinates of `target` by Newton iteration from the linearization at q.
    pub fn box_coordinates(&self, target: &[f64], ode: &OdeConfig) -> Result<Vec<f64>> {
        let n = self.dim();
        let q = point_to_f64(&self.point);
        let j0 = self.box_jacobian(&vec![0.0; n], ode)?;
        let lu0 = j0.clone().lu();
        let d0 = DVector::from_iterator(n, target.iter().zip(&q).map(|(a, b)| a - b));
        let mut x = lu0.solve(&d0).ok_or(Error::SingularJacobian { rank: n - 1, dim: n })?;
        let tgt = DVector::from_column_slice(target);
        for _ in 0..50 {
            let r = DVector::from_vec(self.box_point(x.as_slice(), ode)?) - &tgt;
            if r.norm() < 1e-13 {
                return Ok(x.as_slice().to_vec());
            }
            let jac = self.box_jacobian(x.as_slice(), ode)?;
            let step = jac.lu().solve(&r).ok_or(Error::SingularJacobian { rank: n - 1, dim: n })?;
            x -= step;
        }
        let r = DVector::from_vec(self.box_point(x.as_slice(), ode)?) - &tgt;
        if r.norm() < 1e-9 {
            Ok(x.as_slice().to_vec())
        } else {
            Err(Error::NewtonDiverged { residual: r.norm() })
        }
    }

    /// Smallest `delta` with box coordinates inside `Box_X(q, delta)`.
    pub fn box_size(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lengths())
            .map(|(v, l)| v.abs().powf(1.0 / l as f64))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct UniformConfig {
    pub r_max: usize,
    /// Random cost-`eps` controls per (q, eps) for the inner inclusion.
    pub inner_samples: usize,
    /// Largest accepted uniform constant.
    pub k_limit: f64,
    /// Volume sampling box `Box_X(q, volume_box * eps)`; must enclose the ball.
    pub volume_box: f64,
}

impl Default for UniformConfig {
    fn default() -> Self {
        Self {
            r_max: 3,
            inner_samples: 16,
            k_limit: 10.0,
            volume_box: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct UniformRow {
    pub point: Vec<f64>,
    pub eps: f64,
    pub frame: Vec<BracketIndex>,
    pub score: f64,
    /// `max d(q, corner) / eps` over the corners of `Box_X(q, eps)`.
    pub k_out: f64,
    /// `max delta / eps` over endpoints of cost-`eps` controls lying in `Box_X(q, delta)`.
    pub k_in: f64,
    pub failures: usize,
}

#[derive(Clone, Debug)]
pub struct UniformReport {
    pub rows: Vec<UniformRow>,
    /// One constant fitting every sampled `(q, eps)`.
    pub k: f64,
    pub passed: bool,
}

impl UniformReport {
    /// CSV with header `eps,median_ratio,min_ratio,max_ratio,failures`; the ratios are
    /// the per-row constants `max(k_out, k_in)` grouped by scale.
    pub fn to_csv(&self) -> String {
        let mut eps: Vec<f64> = self.rows.iter().map(|r| r.eps).collect();
        eps.sort_by(|a, b| b.total_cmp(a));
        eps.dedup();
        let rows: Vec<super::RatioRow> = eps
            .iter()
            .map(|&e| {
                let ks: Vec<f64> = self.rows.iter().filter(|r| r.eps == e).map(|r| r.k_out.max(r.k_in)).collect();
                let fails = self.rows.iter().filter(|r| r.eps == e).map(|r| r.failures).sum();
                super::RatioRow {
                    eps: e,
                    median_ratio: crate::report::median(&ks),
                    min_ratio: ks.iter().copied().fold(f64::INFINITY, f64::min),
                    max_ratio: ks.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    failures: fails,
                    median_value: f64::NAN,
                }
            })
            .collect();
        super::ratio_csv(&rows)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let frame: Vec<String> = r.frame.iter().map(ToString::to_string).collect();
            s.push_str(&format!(
                "q {:?} eps {}: frame ({}) score {:.3e} k_out {:.3} k_in {:.3}\n",
                r.point,
                fmt15(r.eps),
                frame.join(", "),
                r.score,
                r.k_out,
                r.k_in
            ));
        }
        s.push_str(&format!("uniform K = {:.3}: {}", self.k, pass_fail(self.passed)));
        s
    }
}

fn random_unit_control<R: Rng>(m: usize, segments: usize, rng: &mut R) -> Vec<f64> {
    let mut v = Vec::with_capacity(m * segments);
    for _ in 0..segments {
        let u: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        v.extend(u.iter().map(|a| a / nu));
    }
    v
}

/// Checks that one constant `K` sandwiches `B(q, eps)` between boxes at every sampled
/// base point and scale.
pub fn uniform_ballbox_check(
    sys: &SystemDef,
    points: &[Vec<Rational>],
    eps_list: &[f64],
    seed: u64,
    cfg: &UniformConfig,
    dist: &DistanceConfig,
    ode: &OdeConfig,
) -> Result<UniformReport> {
    let map = RkMap::new(&sys.fields, ode.clone());
    let n = sys.dim();
    let m = sys.nfields();
    let mut rows = Vec::new();
    for (a, q) in points.iter().enumerate() {
        let qf = point_to_f64(q);
        for (b, &eps) in eps_list.iter().enumerate() {
            let frame = scale_adapted_frame(sys, q, &from_f64(eps), cfg.r_max)?;
            let lens = frame.lengths();
            let mut failures = 0;
            let mut k_out: f64 = 0.0;
            for corner in 0..(1usize << n) {
                let x: Vec<f64> = (0..n)
                    .map(|i| {
                        let s = if corner >> i & 1 == 1 { -1.0 } else { 1.0 };
                        s * eps.powi(lens[i] as i32)
                    })
                    .collect();
                let target = frame.box_point(&x, ode)?;
                let dcfg = DistanceConfig {
                    seed: seed ^ ((a * 1000 + b * 37 + corner) as u64),
                    scale_hint: Some(eps),
                    step_hint: lens.iter().copied().max().unwrap_or(1),
                    ..dist.clone()
                };
                match estimate_distance_map(&map, &qf, &target, &dcfg, &[]) {
                    Ok(e) => k_out = k_out.max(e.upper / eps),
                    Err(_) => failures += 1,
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((a as u64) << 32) ^ b as u64);
            let segments = 2 * n;
            let mut k_in: f64 = 0.0;
            for _ in 0..cfg.inner_samples {
                let u = random_unit_control(m, segments, &mut rng);
                let y = super::EndpointMap::endpoint(&map, eps / segments as f64, &u, &qf)?;
                match frame.box_coordinates(&y, ode) {
                    Ok(x) => k_in = k_in.max(frame.box_size(&x) / eps),
                    Err(_) => failures += 1,
                }
            }
            rows.push(UniformRow {
                point: qf.clone(),
                eps,
                frame: frame.frame.clone(),
                score: frame.score_f64(),
                k_out,
                k_in,
                failures,
            });
        }
    }
    let k = rows.iter().map(|r| r.k_out.max(r.k_in)).fold(0.0, f64::max);
    Ok(UniformReport {
        passed: k.is_finite() && k <= cfg.k_limit,
        rows,
        k,
    })
}

#[derive(Clone, Debug)]
pub struct VolumeRow {
    pub point: Vec<f64>,
    pub eps: f64,
    pub volume: f64,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct VolumeReport {
    pub rows: Vec<VolumeRow>,
    /// Range of `volume / score` over all rows.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Per point, fitted exponent of volume against eps.
    pub exponents: Vec<f64>,
}

impl VolumeReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&format!(
                "q {:?} eps {}: vol {:.4e} max f {:.4e}\n",
                r.point,
                fmt15(r.eps),
                r.volume,
                r.score
            ));
        }
        s.push_str(&format!(
            "vol/f in [{:.3}, {:.3}], exponents {:?}",
            self.ratio_min, self.ratio_max, self.exponents
        ));
        s
    }
}

/// Monte-Carlo volume of `{d(q, .) <= eps}`: uniform samples of `Box_X(q, k eps)` in box
/// coordinates, weighted by the box-map Jacobian, with membership decided by the optimizer.
pub fn ball_volume(
    sys: &SystemDef,
    frame: &ScaleFrame,
    eps: f64,
    enclosing: f64,
    samples: usize,
    seed: u64,
    dist: &DistanceConfig,
    ode: &OdeConfig,
) -> Result<f64> {
    let map = RkMap::new(&sys.fields, ode.clone());
    let qf = point_to_f64(&frame.point);
    let lens = frame.lengths();
    let half: Vec<f64> = lens.iter().map(|&l| (enclosing * eps).powi(l as i32)).collect();
    let box_vol: f64 = half.iter().map(|h| 2.0 * h).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for k in 0..samples {
        let x: Vec<f64> = half.iter().map(|h| rng.gen_range(-*h..*h)).collect();
        let y = frame.box_point(&x, ode)?;
        let dcfg = DistanceConfig {
            seed: seed.wrapping_add(k as u64),
            scale_hint: Some(eps),
            step_hint: lens.iter().copied().max().unwrap_or(1),
            ..dist.clone()
        };
        if let Ok(e) = estimate_distance_map(&map, &qf, &y, &dcfg, &[]) {
            if e.upper <= eps {
                acc += frame.box_volume_factor(&x, ode)?;
            }
        }
    }
    Ok(box_vol * acc / samples as f64)
}

/// Volumes against `max f_{q,eps}` at several base points and scales.
pub fn volume_check(
    sys: &SystemDef,
    points: &[Vec<Rational>],
    eps_list: &[f64],
    samples: usize,
    seed: u64,
    cfg: &UniformConfig,
    dist: &DistanceConfig,
    ode: &OdeConfig,
) -> Result<VolumeReport> {
    let mut rows = Vec::new();
    let mut exponents = Vec::new();
    for (a, q) in points.iter().enumerate() {
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for (b, &eps) in eps_list.iter().enumerate() {
            let frame = scale_adapted_frame(sys, q, &from_f64(eps), cfg.r_max)?;
            let vol = ball_volume(sys, &frame, eps, cfg.volume_box, samples, seed ^ ((a as u64) << 20) ^ b as u64, dist, ode)?;
            if vol > 0.0 {
                lx.push(eps.ln());
                ly.push(vol.ln());
            }
            rows.push(VolumeRow {
                point: point_to_f64(q),
                eps,
                volume: vol,
                score: frame.score_f64(),
            });
        }
        exponents.push(if lx.len() >= 2 { linear_fit(&lx, &ly).1 } else { f64::NAN });
    }
    let ratios: Vec<f64> = rows.iter().filter(|r| r.volume > 0.0).map(|r| r.volume / r.score).collect();
    Ok(VolumeReport {
        ratio_min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        ratio_max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        rows,
        exponents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::symfield::{rat, rint};

    #[test]
    fn martinet_frames() {
        let m = fixtures::martinet();
        let a = rat(1, 2);
        let q = vec![a.clone(), rint(0), rint(0)];
        let eps = rat(1, 100);
        let f = scale_adapted_frame(&m, &q, &eps, 3).unwrap();
        let names: Vec<String> = f.frame.iter().map(ToString::to_string).collect();
        assert_eq!(names, ["1", "2", "[1,2]"]);
        assert_eq!(f.score, &a * num_traits::pow(eps.clone(), 4));
        let s = scale_adapted_frame(&m, &[rint(0), rint(0), rint(0)], &eps, 3).unwrap();
        let names: Vec<String> = s.frame.iter().map(ToString::to_string).collect();
        assert_eq!(names, ["1", "2", "[1,[1,2]]"]);
        assert_eq!(s.score, num_traits::pow(eps.clone(), 5));
        // crossover: eps = |a| gives equal scores and the earlier tuple wins
        let c = scale_adapted_frame(&m, &q, &a, 3).unwrap();
        assert_eq!(c.score, num_traits::pow(a.clone(), 5));
        assert_eq!(c.frame[2].to_string(), "[1,2]");
    }

    #[test]
    fn box_map_round_trip() {
        let m = fixtures::martinet();
        let f = scale_adapted_frame(&m, &[rat(1, 2), rint(0), rint(0)], &rat(1, 10), 3).unwrap();
        let ode = OdeConfig::default();
        let x = [0.05, -0.03, 0.004];
        let y = f.box_point(&x, &ode).unwrap();
        let back = f.box_coordinates(&y, &ode).unwrap();
        for (a, b) in back.iter().zip(x) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((f.box_size(&x) - 0.05f64.max(0.03).max(0.004f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn zero_score_is_an_error() {
        let g = fixtures::grusin();
        assert!(matches!(
            scale_adapted_frame(&g, &[rint(0), rint(0)], &rat(1, 10), 1),
            Err(Error::ZeroScore)
        ));
    }
}
