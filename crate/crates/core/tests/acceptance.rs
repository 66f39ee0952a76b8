//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::time::Instant;

use subriemann::charts::{
    algebraic_privileged_coords, frame_derivative_at, multi_indices_up_to, ord_by_derivatives_of, ord_function,
    verify_privileged, WeightedDegree,
};
use subriemann::control::{projection_defect, ControlSignal, OdeConfig};
use subriemann::fixtures;
use subriemann::flowcheck::{commutator_flow, defect_fit_commutator, geometric_times, pushforward_series_defect};
use subriemann::hausdorff::{default_scales, estimate_dimension, PackingConfig};
use subriemann::liealgebra::{flag_at, BracketIndex};
use subriemann::metric::{
    ballbox_check, compare_to_nilpotent, distance_expansion_check, riemannian_comparison_check, BallBoxConfig,
    DistanceConfig, ExpansionConfig,
};
use subriemann::nilpotent::{homogeneous_components, nilpotent_approximation, verify_nilpotency};
use subriemann::planner::{plan, PlanConfig};
use subriemann::symfield::{rat, rint, CompiledSystem, Poly, Rational, SymField, SystemDef};

type Check = Result<Vec<(String, bool)>, String>;

fn zero(n: usize) -> Vec<Rational> {
    vec![rint(0); n]
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn line(name: impl Into<String>, ok: bool) -> (String, bool) {
    (name.into(), ok)
}

fn structure() -> Check {
    let mut out = Vec::new();
    let cases: [(SystemDef, Vec<Rational>, &str, &str); 5] = [
        (fixtures::heisenberg(), zero(3), "(2,3)", "(1,1,2)"),
        (fixtures::martinet(), zero(3), "(2,2,3)", "(1,1,3)"),
        (fixtures::martinet(), vec![rint(1), rint(0), rint(0)], "(2,3)", "(1,1,2)"),
        (fixtures::grusin(), zero(2), "(1,2)", "(1,2)"),
        (fixtures::unicycle(), zero(3), "(2,3)", "(1,1,2)"),
    ];
    for (sys, p, growth, weights) in cases {
        let t = Instant::now();
        let f = flag_at(&sys, &p, 8).map_err(e)?;
        let ok = f.growth_string() == growth && f.weights_string() == weights && t.elapsed().as_secs_f64() < 1.0;
        out.push(line(
            format!("{} at {:?}: growth {} weights {}", sys.name, p.iter().map(e).collect::<Vec<_>>(), f.growth_string(), f.weights_string()),
            ok,
        ));
    }
    Ok(out)
}

fn nilpotent_exactness() -> Check {
    let mut out = Vec::new();
    let u = fixtures::unicycle();
    let chart = fixtures::unicycle_chart().map_err(e)?;
    let nil = nilpotent_approximation(&u, &chart).map_err(e)?;
    let z = |i| Poly::var(3, i);
    let x1_hat = SymField::new(vec![Poly::one(3), Poly::zero(3), z(1)]).map_err(e)?;
    out.push(line("unicycle X^1 = dx + theta dy", nil.fields[0] == x1_hat));
    out.push(line("unicycle X^2 = dtheta", nil.fields[1] == SymField::coordinate(3, 1)));
    let rep = verify_nilpotency(&nil, Some(3)).map_err(e)?;
    out.push(line(format!("unicycle length-3 brackets vanish (step {})", rep.step), rep.passed && rep.step == 2));
    let x1 = chart.pushforward(&u.fields[0]).map_err(e)?;
    let parts = homogeneous_components(&x1, &chart, 1);
    let expect = SymField::new(vec![z(1).pow(2).scale(&rat(-1, 2)), Poly::zero(3), z(1).pow(3).scale(&rat(-1, 6))]).map_err(e)?;
    let ok = parts.iter().any(|h| h.degree == 1 && h.field == expect);
    out.push(line("unicycle X1 degree-1 component = -(theta^2/2) dx - (theta^3/6) dy", ok));
    for sys in [fixtures::grusin(), fixtures::martinet()] {
        let flag = flag_at(&sys, &zero(sys.dim()), 8).map_err(e)?;
        let chart = algebraic_privileged_coords(&sys, &flag).map_err(e)?;
        let nil = nilpotent_approximation(&sys, &chart).map_err(e)?;
        out.push(line(format!("{}: approximation equals the system", sys.name), nil.fields == sys.fields));
    }
    Ok(out)
}

fn privileged_verification() -> Check {
    let mut out = Vec::new();
    for (name, src) in fixtures::ALL {
        let sys = subriemann::symfield::parse_system(src).map_err(e)?;
        let flag = flag_at(&sys, &sys.base_point_default, 8).map_err(e)?;
        let chart = algebraic_privileged_coords(&sys, &flag).map_err(e)?;
        let rep = verify_privileged(&chart, &flag).map_err(e)?;
        out.push(line(format!("algebraic chart privileged on {name}"), rep.passed));
    }
    let np = fixtures::nonprivileged();
    let flag = flag_at(&np, &zero(3), 8).map_err(e)?;
    let naive = verify_privileged(&fixtures::nonprivileged_naive_chart().map_err(e)?, &flag).map_err(e)?;
    let witness = naive.first_failure().and_then(|c| c.failing_alpha.clone());
    out.push(line(
        format!("adapted chart fails with witness {witness:?}"),
        !naive.passed && witness == Some((vec![0, 2, 0], rint(1))),
    ));
    let corrected = fixtures::nonprivileged_corrected_chart().map_err(e)?;
    let rep = verify_privileged(&corrected, &flag).map_err(e)?;
    let oracle: Vec<u32> = corrected
        .z_of_x()
        .iter()
        .map(|z| ord_by_derivatives_of(&np.fields, z, &zero(3), 6))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    out.push(line(
        format!("corrected chart passes, Lie-derivative orders {oracle:?}"),
        rep.passed && oracle == flag.weights,
    ));
    Ok(out)
}

fn orders() -> Check {
    let mut out = Vec::new();
    let h = fixtures::heisenberg();
    let flag = flag_at(&h, &zero(3), 8).map_err(e)?;
    let v = frame_derivative_at(&flag.frame_fields[..2], &[1, 1], &Poly::var(3, 2), &zero(3)).map_err(e)?;
    let ord = ord_by_derivatives_of(&h.fields, &Poly::var(3, 2), &zero(3), 4).map_err(e)?;
    out.push(line(format!("heisenberg ord(z) = {ord}, X1X2 z(0) = {v}"), ord == 2 && v == rat(1, 2)));
    for (name, src) in fixtures::ALL {
        let sys = subriemann::symfield::parse_system(src).map_err(e)?;
        let p = &sys.base_point_default;
        let flag = flag_at(&sys, p, 8).map_err(e)?;
        let chart = algebraic_privileged_coords(&sys, &flag).map_err(e)?;
        let mut total = 0;
        let mut mismatches = 0;
        for alpha in multi_indices_up_to(&flag.weights, 6) {
            let g = Poly::monomial(alpha.clone(), rint(1));
            let f = chart.function_from_chart(&g).map_err(e)?;
            let by_degree = ord_function(&g, &chart);
            let by_derivatives = ord_by_derivatives_of(&sys.fields, &f, p, 7).map_err(e)?;
            total += 1;
            if by_degree != WeightedDegree::Finite(by_derivatives as i64) {
                mismatches += 1;
            }
        }
        out.push(line(format!("{name}: {total} monomials, {mismatches} order mismatches"), mismatches == 0));
    }
    Ok(out)
}

fn quick_distance(restarts: usize) -> DistanceConfig {
    DistanceConfig {
        restarts,
        ..Default::default()
    }
}

fn ball_box() -> Check {
    let mut out = Vec::new();
    let ode = OdeConfig::default();
    let eps = [0.4, 0.2, 0.1, 0.05];
    for sys in [fixtures::heisenberg(), fixtures::martinet()] {
        let flag = flag_at(&sys, &zero(3), 8).map_err(e)?;
        let chart = algebraic_privileged_coords(&sys, &flag).map_err(e)?;
        let rep = ballbox_check(&sys.fields, &chart, &eps, 6, 11, &quick_distance(8), &ode, &BallBoxConfig::default()).map_err(e)?;
        out.push(line(format!("{}: slope {:.3} spread {:.3}", sys.name, rep.slope, rep.spread), rep.passed));
    }
    let np = fixtures::nonprivileged();
    let naive = fixtures::nonprivileged_naive_chart().map_err(e)?;
    let rep = ballbox_check(&np.fields, &naive, &eps, 6, 11, &quick_distance(8), &ode, &BallBoxConfig::default()).map_err(e)?;
    out.push(line(
        format!("non-privileged chart rejected: slope {:.3} spread {:.3}", rep.slope, rep.spread),
        !rep.passed,
    ));
    Ok(out)
}

fn expansion() -> Check {
    let mut out = Vec::new();
    let ode = OdeConfig::default();
    let tol = ExpansionConfig::default();
    for sys in [fixtures::grusin(), fixtures::martinet()] {
        let n = sys.dim();
        let flag = flag_at(&sys, &zero(n), 8).map_err(e)?;
        let chart = algebraic_privileged_coords(&sys, &flag).map_err(e)?;
        let nil = nilpotent_approximation(&sys, &chart).map_err(e)?;
        let rep = distance_expansion_check(&sys.fields, &nil, &chart, &[0.4, 0.2, 0.1], 4, 3, &quick_distance(8), &ode, &tol).map_err(e)?;
        let worst = rep.max_defect.iter().cloned().fold(0.0, f64::max);
        out.push(line(format!("{}: max |d/d^ - 1| = {worst:.2e}", sys.name), worst <= 0.03));
    }
    let u = fixtures::unicycle();
    let chart = fixtures::unicycle_chart().map_err(e)?;
    let nil = nilpotent_approximation(&u, &chart).map_err(e)?;
    let rep = distance_expansion_check(&u.fields, &nil, &chart, &[0.4, 0.1], 6, 3, &quick_distance(8), &ode, &tol).map_err(e)?;
    let (big, small) = (rep.max_defect[0], rep.max_defect[1]);
    out.push(line(
        format!("unicycle: max |d/d^ - 1| {big:.3e} at 0.4, {small:.3e} at 0.1"),
        small < 0.5 * big,
    ));
    Ok(out)
}

fn riemannian() -> Check {
    let mut out = Vec::new();
    let ode = OdeConfig::default();
    for (sys, s_list, expect) in [
        (fixtures::heisenberg(), geometric_times(1e-2, 1e-4, 5), 0.5),
        (fixtures::martinet(), geometric_times(1e-3, 1e-5, 5), 1.0 / 3.0),
    ] {
        let flag = flag_at(&sys, &zero(3), 8).map_err(e)?;
        let ev = riemannian_comparison_check(&sys.fields, &flag, 4, &s_list, 5, &quick_distance(8), &ode).map_err(e)?;
        out.push(line(
            format!("{}: exponent {:.4} (expect {expect:.3}), c = {:.3}, C = {:.3}", sys.name, ev.exponent, ev.c, ev.big_c),
            (ev.exponent - expect).abs() <= 0.05 && ev.c > 0.0 && ev.big_c.is_finite(),
        ));
    }
    Ok(out)
}

fn trajectory_comparison() -> Check {
    let mut out = Vec::new();
    let ode = OdeConfig::default();
    let u = fixtures::unicycle();
    let chart = fixtures::unicycle_chart().map_err(e)?;
    let nil = nilpotent_approximation(&u, &chart).map_err(e)?;
    let ts = geometric_times(0.4, 0.02, 6);
    for (k, c) in [
        ControlSignal::new(vec![1.0], vec![vec![0.7f64.cos(), 0.7f64.sin()]]),
        ControlSignal::new(vec![0.5, 0.5], vec![vec![0.6, 0.8], vec![-0.8, 0.6]]),
    ]
    .into_iter()
    .enumerate()
    {
        let c = c.map_err(e)?;
        let cmp = compare_to_nilpotent(&u.fields, &nil, &chart, &c, &ts, &ode).map_err(e)?;
        out.push(line(format!("unicycle control {}: {}", k + 1, cmp.summary()), cmp.passed && cmp.shrinking));
    }
    let m = fixtures::martinet();
    let flag = flag_at(&m, &zero(3), 8).map_err(e)?;
    let chart = algebraic_privileged_coords(&m, &flag).map_err(e)?;
    let nil = nilpotent_approximation(&m, &chart).map_err(e)?;
    let c = ControlSignal::new(vec![0.3, 0.3], vec![vec![0.6, 0.8], vec![-1.0, 0.0]]).map_err(e)?;
    let cmp = compare_to_nilpotent(&m.fields, &nil, &chart, &c, &ts, &ode).map_err(e)?;
    let worst = cmp.defects.iter().cloned().fold(0.0, f64::max);
    out.push(line(format!("martinet equal to its approximation: max defect {worst:.1e}"), worst < 1e-9));
    Ok(out)
}

fn planner() -> Check {
    let mut out = Vec::new();
    let cfg = PlanConfig::default();
    let cap = cfg.steer.k_cap;
    let u = fixtures::unicycle();
    for b in [[0.0, 0.1, 0.0], [0.0, 0.01, 0.0], [0.0, -0.0008, 0.0], [0.05, 0.002, 0.03]] {
        let r = plan(&u, &[0.0; 3], &b, &cfg).map_err(e)?;
        let contractions = r.contractions();
        let ok = r.converged && contractions.iter().skip(1).all(|c| *c <= 0.5) && r.k_ratios.iter().all(|k| *k <= cap);
        out.push(line(
            format!("unicycle to {b:?}: {} iterations, max cost/residual {:.2}", r.iterations(), r.max_k_ratio()),
            ok,
        ));
    }
    for (sys, a) in [
        (fixtures::grusin(), vec![0.05, -0.03]),
        (fixtures::heisenberg(), vec![0.05, -0.03, 0.02]),
        (fixtures::martinet(), vec![0.05, -0.03, 0.001]),
    ] {
        let r = plan(&sys, &a, &vec![0.0; sys.dim()], &cfg).map_err(e)?;
        let ok = r.converged && r.iterations() == 1 && r.k_ratios.iter().all(|k| *k <= cap);
        out.push(line(format!("{}: {} iteration(s)", sys.name, r.iterations()), ok));
    }
    Ok(out)
}

fn hausdorff() -> Check {
    let mut out = Vec::new();
    let cfg = PackingConfig::default();
    let cases = [
        (fixtures::heisenberg(), vec![0.0; 3], 0.2, Some(false)),
        (fixtures::unicycle(), vec![0.0; 3], 0.2, Some(false)),
        (fixtures::martinet(), vec![0.0; 3], 0.2, Some(true)),
        (fixtures::martinet(), vec![0.5, 0.0, 0.0], 0.1, Some(false)),
    ];
    for (sys, p, r, flagged) in cases {
        let run = estimate_dimension(&sys, &p, r, &default_scales(r, 5), Some(4.0), 10.0, &cfg).map_err(e)?;
        let est = &run.estimate;
        let increasing = est.counts.windows(2).all(|w| w[1] > w[0]);
        let ok = (est.fitted_dimension - 4.0).abs() <= 0.3
            && flagged.is_none_or(|f| f == est.log_correction_detected)
            && increasing;
        out.push(line(
            format!(
                "{} at {p:?}: dimension {:.3}, log correction {} (F = {:.1}), counts increasing {increasing}",
                sys.name, est.fitted_dimension, est.log_correction_detected, est.f_statistic
            ),
            ok,
        ));
    }
    Ok(out)
}

fn flows() -> Check {
    let mut out = Vec::new();
    let ode = OdeConfig::default();
    let t = geometric_times(0.3, 0.01, 8);
    for sys in [fixtures::unicycle(), fixtures::martinet()] {
        for idx in ["1,2", "1,1,2"] {
            let bi: BracketIndex = idx.parse().map_err(e)?;
            let fit = defect_fit_commutator(&sys, &bi, &zero(3), &t, &ode).map_err(e)?;
            let target = bi.len() as f64 + 1.0;
            let ok = fit.at_noise_floor || fit.fitted_exponent >= target - 0.2;
            out.push(line(format!("{} commutator {bi}: {}", sys.name, fit.verdict()), ok));
        }
        for n in [1, 2] {
            let fit = pushforward_series_defect(&sys.fields[0], &sys.fields[1], n, &zero(3), &t, &ode).map_err(e)?;
            let ok = fit.at_noise_floor || fit.fitted_exponent >= n as f64 + 1.0 - 0.2;
            out.push(line(format!("{} push-forward series N = {n}: {}", sys.name, fit.verdict()), ok));
        }
    }
    let h = CompiledSystem::new(&fixtures::heisenberg().fields);
    let idx: BracketIndex = "1,2".parse().map_err(e)?;
    let mut worst: f64 = 0.0;
    for s in [0.05, 0.2, 0.5, 1.0] {
        let q = commutator_flow(&h, &idx, &[0.0; 3], s, &ode).map_err(e)?;
        worst = worst.max(q[0].abs()).max(q[1].abs()).max((q[2] - s * s).abs());
    }
    out.push(line(format!("heisenberg loop endpoint error {worst:.1e}"), worst <= 1e-10));
    Ok(out)
}

fn projection() -> Check {
    let ode = OdeConfig::default();
    let engel = CompiledSystem::new(&fixtures::engel().fields);
    let martinet = CompiledSystem::new(&fixtures::martinet().fields);
    let controls = [
        ControlSignal::new(vec![0.3, 0.4], vec![vec![1.0, -0.5], vec![0.2, 1.0]]),
        ControlSignal::new(vec![0.5, 0.25, 0.5], vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![-0.7, -0.7]]),
    ];
    let starts = [[0.0; 4], [0.1, -0.1, 0.0, 0.3], [-0.4, 0.2, 0.5, -1.0]];
    let mut worst: f64 = 0.0;
    for c in controls {
        let c = c.map_err(e)?;
        for x0 in &starts {
            worst = worst.max(projection_defect(&engel, &martinet, &[0, 1, 2], &c, x0, &ode).map_err(e)?);
        }
    }
    Ok(vec![line(format!("engel projected onto martinet: max gap {worst:.1e}"), worst <= 1e-10)])
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("structure exactness", structure),
        ("nilpotent approximation exactness", nilpotent_exactness),
        ("privileged-coordinate verification", privileged_verification),
        ("orders", orders),
        ("ball-box", ball_box),
        ("first-order distance expansion", expansion),
        ("Riemannian comparison", riemannian),
        ("trajectory comparison", trajectory_comparison),
        ("planner", planner),
        ("Hausdorff dimension", hausdorff),
        ("flow expansions", flows),
        ("projection fixture", projection),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(lines) => (lines.iter().all(|(_, ok)| *ok), lines),
            Err(msg) => (false, vec![(format!("error: {msg}"), false)]),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {:>2} {name} ({:.1} s)", if ok { "PASS" } else { "FAIL" }, k + 1, start.elapsed().as_secs_f64());
        for (d, o) in detail {
            println!("        {} {d}", if o { "ok  " } else { "FAIL" });
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
