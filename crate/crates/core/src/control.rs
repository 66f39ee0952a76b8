//! Piecewise-constant controls, trajectories and fixed-step RK4 integration.

use crate::error::{Error, Result};
use crate::report::fmt15;
use crate::symfield::{CompiledField, CompiledSystem};

#[derive(Clone, Debug)]
pub struct OdeConfig {
    /// Largest RK4 substep.
    pub h_max: f64,
    /// State norm beyond which integration aborts.
    pub blowup_norm: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            h_max: 1e-3,
            blowup_norm: 1e6,
        }
    }
}

/// Integrates `x' = rhs(x)` for signed time `t` with `ceil(|t|/h_max)` equal RK4 steps.
pub fn rk4<F>(rhs: &F, x0: &[f64], t: f64, cfg: &OdeConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut x = x0.to_vec();
    rk4_in_place(rhs, &mut x, t, cfg, |_, _| {})?;
    Ok(x)
}

fn rk4_in_place<F, O>(rhs: &F, x: &mut [f64], t: f64, cfg: &OdeConfig, mut observe: O) -> Result<()>
where
    F: Fn(&[f64], &mut [f64]),
    O: FnMut(f64, &[f64]),
{
    if t == 0.0 {
        return Ok(());
    }
    let n = x.len();
    let steps = (t.abs() / cfg.h_max).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    // compensated summation keeps roundoff flat over many small steps
    let mut carry = vec![0.0; n];
    for step in 0..steps {
        rhs(x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            let inc = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) - carry[i];
            let next = x[i] + inc;
            carry[i] = (next - x[i]) - inc;
            x[i] = next;
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > cfg.blowup_norm {
            return Err(Error::BlowUp { norm });
        }
        observe(h * (step + 1) as f64, x);
    }
    Ok(())
}

/// `exp(tX)(x0)`.
pub fn field_flow(f: &CompiledField, x0: &[f64], t: f64, cfg: &OdeConfig) -> Result<Vec<f64>> {
    rk4(&|x: &[f64], out: &mut [f64]| f.eval_into(x, out), x0, t, cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    durations: Vec<f64>,
    values: Vec<Vec<f64>>,
    nfields: usize,
}

impl ControlSignal {
    pub fn new(durations: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if durations.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: durations.len(),
                got: values.len(),
            });
        }
        if let Some(d) = durations.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidArgument(format!("segment duration {d} is not positive")));
        }
        let m = values.first().map_or(0, Vec::len);
        if let Some(v) = values.iter().find(|v| v.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: v.len(),
            });
        }
        Ok(Self {
            durations,
            values,
            nfields: m,
        })
    }

    pub fn empty(nfields: usize) -> Self {
        Self {
            durations: Vec::new(),
            values: Vec::new(),
            nfields,
        }
    }

    /// Unit-duration segments whose values are the given displacement vectors.
    pub fn from_displacements(nfields: usize, flat: &[f64]) -> Self {
        let values: Vec<Vec<f64>> = flat.chunks(nfields).map(<[f64]>::to_vec).collect();
        Self {
            durations: vec![1.0; values.len()],
            values,
            nfields,
        }
    }

    pub fn nfields(&self) -> usize {
        self.nfields
    }

    pub fn nsegments(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.durations.iter().copied().zip(self.values.iter().map(Vec::as_slice))
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// L1 cost `sum_k duration_k * |u_k|`.
    pub fn cost(&self) -> f64 {
        self.segments()
            .map(|(d, u)| d * u.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum()
    }

    /// The control that retraces the trajectory backwards.
    pub fn reversed(&self) -> Self {
        Self {
            durations: self.durations.iter().rev().copied().collect(),
            values: self
                .values
                .iter()
                .rev()
                .map(|u| u.iter().map(|v| -v).collect())
                .collect(),
            nfields: self.nfields,
        }
    }

    pub fn then(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.durations.extend_from_slice(&other.durations);
        out.values.extend(other.values.iter().cloned());
        out.nfields = self.nfields.max(other.nfields);
        out
    }

    /// Same trajectory with `|u| = 1` on every segment; zero segments are dropped.
    pub fn normalized(&self) -> Self {
        let mut durations = Vec::new();
        let mut values = Vec::new();
        for (d, u) in self.segments() {
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                durations.push(d * norm);
                values.push(u.iter().map(|v| v / norm).collect());
            }
        }
        Self {
            durations,
            values,
            nfields: self.nfields,
        }
    }

    /// Multiplies every control value by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            durations: self.durations.clone(),
            values: self
                .values
                .iter()
                .map(|u| u.iter().map(|v| v * lambda).collect())
                .collect(),
            nfields: self.nfields,
        }
    }

    /// Restriction to `[0, t]`.
    pub fn truncated(&self, t: f64) -> Self {
        let mut out = Self::empty(self.nfields);
        let mut elapsed = 0.0;
        for (d, u) in self.segments() {
            if elapsed >= t {
                break;
            }
            let take = d.min(t - elapsed);
            if take > 0.0 {
                out.durations.push(take);
                out.values.push(u.to_vec());
            }
            elapsed += d;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Control value active on the step ending at each sample (zeros at t = 0).
    pub controls: Vec<Vec<f64>>,
    /// L1 length of the control.
    pub length: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// CSV with header `t,z1..zn,u1..um`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.controls.first().map_or(0, Vec::len);
        let mut s = String::from("t");
        for j in 1..=n {
            s.push_str(&format!(",z{j}"));
        }
        for i in 1..=m {
            s.push_str(&format!(",u{i}"));
        }
        s.push('\n');
        for ((t, x), u) in self.times.iter().zip(&self.states).zip(&self.controls) {
            s.push_str(&fmt15(*t));
            for v in x.iter().chain(u) {
                s.push(',');
                s.push_str(&fmt15(*v));
            }
            s.push('\n');
        }
        s
    }
}

/// Integrates `x' = sum_i u_i X_i(x)` and records every RK4 step.
pub fn simulate(
    sys: &CompiledSystem,
    control: &ControlSignal,
    x0: &[f64],
    cfg: &OdeConfig,
) -> Result<Trajectory> {
    check_control(sys, control, x0)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        controls: vec![vec![0.0; sys.nfields()]],
        length: control.cost(),
    };
    let mut x = x0.to_vec();
    let mut t0 = 0.0;
    for (d, u) in control.segments() {
        let rhs = |y: &[f64], out: &mut [f64]| sys.velocity(y, u, out);
        rk4_in_place(&rhs, &mut x, d, cfg, |s, y| {
            traj.times.push(t0 + s);
            traj.states.push(y.to_vec());
            traj.controls.push(u.to_vec());
        })?;
        t0 += d;
    }
    Ok(traj)
}

/// Endpoint only, without recording samples.
pub fn endpoint(
    sys: &CompiledSystem,
    control: &ControlSignal,
    x0: &[f64],
    cfg: &OdeConfig,
) -> Result<Vec<f64>> {
    check_control(sys, control, x0)?;
    let mut x = x0.to_vec();
    for (d, u) in control.segments() {
        let rhs = |y: &[f64], out: &mut [f64]| sys.velocity(y, u, out);
        rk4_in_place(&rhs, &mut x, d, cfg, |_, _| {})?;
    }
    Ok(x)
}

fn check_control(sys: &CompiledSystem, control: &ControlSignal, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: x0.len(),
        });
    }
    if !control.is_empty() && control.nfields() != sys.nfields() {
        return Err(Error::DimensionMismatch {
            expected: sys.nfields(),
            got: control.nfields(),
        });
    }
    Ok(())
}

/// Largest sample-by-sample gap between the trajectory of `reduced` and the coordinates
/// `keep` of the trajectory of `full` under the same control.
pub fn projection_defect(
    full: &CompiledSystem,
    reduced: &CompiledSystem,
    keep: &[usize],
    control: &ControlSignal,
    x0: &[f64],
    cfg: &OdeConfig,
) -> Result<f64> {
    if keep.len() != reduced.dim() {
        return Err(Error::DimensionMismatch {
            expected: reduced.dim(),
            got: keep.len(),
        });
    }
    if let Some(&k) = keep.iter().find(|&&k| k >= full.dim()) {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: full.dim(),
        });
    }
    let a = simulate(full, control, x0, cfg)?;
    let y0: Vec<f64> = keep.iter().map(|&k| x0[k]).collect();
    let b = simulate(reduced, control, &y0, cfg)?;
    let mut worst: f64 = 0.0;
    for (xa, xb) in a.states.iter().zip(&b.states) {
        for (j, &k) in keep.iter().enumerate() {
            worst = worst.max((xa[k] - xb[j]).abs());
        }
    }
    Ok(worst)
}
