//! Command-line front end: argument parsing, run configuration and report emission.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::charts::{algebraic_privileged_coords, verify_privileged, PrivilegedChart};
use crate::control::{projection_defect, ControlSignal, OdeConfig};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::flowcheck::{defect_fit_commutator, geometric_times};
use crate::hausdorff::{default_scales, estimate_dimension, PackingConfig};
use crate::liealgebra::{chow_certificate, flag_at, is_regular, tuple_string, BracketIndex, Flag};
use crate::metric::{
    ballbox_check, distance_expansion_check, estimate_distance, uniform_ballbox_check, BallBoxConfig, DistanceConfig,
    ExpansionConfig, UniformConfig,
};
use crate::nilpotent::{nilpotent_approximation, verify_nilpotency, NilpotentSystem};
use crate::planner::{plan, plan_global, PlanConfig};
use crate::report::{fmt15, pass_fail};
use crate::symfield::{parse_point, parse_system, parse_system_file, point_to_f64, CompiledSystem, Rational, SystemDef};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_CHECK: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    #[default]
    Human,
}

/// Everything a report depends on besides the input file.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    pub budgets: BTreeMap<String, f64>,
    pub output_dir: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn tol(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    pub fn budget(&self, name: &str, default: usize) -> usize {
        self.budgets.get(name).map_or(default, |v| v.max(0.0) as usize)
    }

    fn distance(&self) -> DistanceConfig {
        DistanceConfig {
            restarts: self.budget("restarts", 8),
            seed: self.seed,
            ..Default::default()
        }
    }
}

fn parse_kv(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got '{s}'"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("bad value in '{s}': {e}"))?;
    Ok((k.trim().to_string(), v))
}

#[derive(Debug, Args)]
struct Global {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Named tolerance override, e.g. `ballbox.slope=0.1`.
    #[arg(long = "tol", global = true, value_parser = parse_kv)]
    tol: Vec<(String, f64)>,
    /// Named budget override, e.g. `restarts=16`.
    #[arg(long = "budget", global = true, value_parser = parse_kv)]
    budget: Vec<(String, f64)>,
    /// Directory for report files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
}

#[derive(Debug, Parser)]
#[command(name = "srtool", version, about = "Nonholonomic systems toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SystemAt {
    /// System file, or the name of a bundled system.
    system: String,
    /// Base point, comma separated (rationals allowed).
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Growth vector, weights, adapted frame and regularity.
    Analyze(SystemAt),
    /// Algebraic privileged coordinates and their verification.
    Coords(SystemAt),
    /// Nilpotent approximation.
    Nilpotent(SystemAt),
    /// Distance estimate between two points.
    Distance {
        system: String,
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
    },
    /// Distance against pseudo-norm across scales.
    Ballbox {
        #[command(flatten)]
        at: SystemAt,
        #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.2, 0.1, 0.05])]
        eps: Vec<f64>,
    },
    /// Distance against nilpotent distance across scales.
    Expansion {
        #[command(flatten)]
        at: SystemAt,
        #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.2, 0.1])]
        eps: Vec<f64>,
    },
    /// One Ball-Box constant for several base points.
    UniformBallbox {
        system: String,
        /// Base points separated by ';'.
        #[arg(long, allow_hyphen_values = true)]
        points: String,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.05])]
        eps: Vec<f64>,
    },
    /// Iterative planning through the nilpotent approximation at the goal.
    Plan {
        system: String,
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        /// Chain local plans through intermediate goals.
        #[arg(long)]
        global: bool,
        #[arg(long, default_value_t = 0.1)]
        spacing: f64,
    },
    /// Packing counts and dimension fit for a ball.
    Hausdorff {
        #[command(flatten)]
        at: SystemAt,
        #[arg(long, default_value_t = 0.2)]
        radius: f64,
        #[arg(long, default_value_t = 5)]
        scales: usize,
        /// Exponent for the log-correction test; default is the generic homogeneous dimension.
        #[arg(long)]
        q: Option<f64>,
    },
    /// Commutator-flow defect fit.
    VerifyFlows {
        #[command(flatten)]
        at: SystemAt,
        #[arg(long)]
        bracket: String,
    },
    /// Quick checks on the bundled systems.
    Selftest,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_PARSE,
            };
        }
    };
    let cfg = RunConfig {
        seed: cli.global.seed,
        tolerances: cli.global.tol.into_iter().collect(),
        budgets: cli.global.budget.into_iter().collect(),
        output_dir: cli.global.out,
        format: cli.global.format,
    };
    match run(&cli.command, &cfg) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            if let Err(e) = outcome.write(&cfg) {
                eprintln!("error: {e}");
                return EXIT_OTHER;
            }
            if outcome.passed {
                EXIT_OK
            } else {
                EXIT_CHECK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::UnsupportedExpression(_) | Error::DimensionMismatch { .. } | Error::InvalidArgument(_) => EXIT_PARSE,
        Error::BudgetExhausted(_) | Error::NoTrajectoryFound { .. } | Error::SteeringFailed { .. } => EXIT_BUDGET,
        Error::ChowFails { .. } | Error::NotPrivileged(_) | Error::Diverged { .. } | Error::OutOfRadius { .. } => EXIT_CHECK,
        _ => EXIT_OTHER,
    }
}

/// Text for stdout plus named report files.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub files: Vec<(String, String)>,
    pub passed: bool,
}

impl Outcome {
    fn write(&self, cfg: &RunConfig) -> Result<()> {
        let Some(dir) = &cfg.output_dir else {
            return Ok(());
        };
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Reads a system file, falling back to a bundled system of the same stem.
pub fn load_system(arg: &str) -> Result<SystemDef> {
    let path = Path::new(arg);
    if path.exists() {
        return parse_system_file(path);
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
    match fixtures::ALL.iter().find(|(n, _)| *n == stem) {
        Some((_, src)) => parse_system(src),
        None => Err(Error::InvalidArgument(format!("no such system file or bundled system: {arg}"))),
    }
}

fn point_arg(sys: &SystemDef, s: Option<&str>) -> Result<Vec<Rational>> {
    let p = match s {
        None => sys.base_point_default.clone(),
        Some(s) => parse_point(s).map_err(Error::InvalidArgument)?,
    };
    if p.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: p.len(),
        });
    }
    Ok(p)
}

const DEPTH: usize = 8;

fn taylor_warning(sys: &SystemDef, flag: &Flag) {
    let wn = flag.weights.last().copied().unwrap_or(1);
    if !sys.is_exact() && sys.taylor_degree < wn + 4 {
        eprintln!(
            "warning: taylor_degree {} is below w_n + 4 = {}; truncated jets may change the results",
            sys.taylor_degree,
            wn + 4
        );
    }
}

fn chart_and_nil(sys: &SystemDef, p: &[Rational]) -> Result<(Flag, PrivilegedChart, NilpotentSystem)> {
    let flag = flag_at(sys, p, DEPTH)?;
    taylor_warning(sys, &flag);
    let chart = algebraic_privileged_coords(sys, &flag)?;
    let nil = nilpotent_approximation(sys, &chart)?;
    Ok((flag, chart, nil))
}

fn kv_lines(rows: &[(&str, String)], format: Format) -> String {
    let mut s = String::new();
    for (k, v) in rows {
        match format {
            Format::Csv => {
                let _ = writeln!(s, "{k},\"{v}\"");
            }
            Format::Human => {
                let _ = writeln!(s, "{k}: {v}");
            }
        }
    }
    s
}

fn csv_or_summary(format: Format, csv: &str, summary: &str) -> String {
    match format {
        Format::Csv => csv.to_string(),
        Format::Human => format!("{summary}\n"),
    }
}

pub fn run_command(args: &[&str], cfg: &RunConfig) -> Result<Outcome> {
    let cli = Cli::try_parse_from(std::iter::once("srtool").chain(args.iter().copied()))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    run(&cli.command, cfg)
}

fn run(cmd: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let ode = OdeConfig::default();
    match cmd {
        Command::Analyze(at) => {
            let sys = load_system(&at.system)?;
            let p = point_arg(&sys, at.point.as_deref())?;
            let flag = flag_at(&sys, &p, DEPTH)?;
            taylor_warning(&sys, &flag);
            let reg = is_regular(&sys, &p, DEPTH, 1e-2, 16, cfg.seed)?;
            let chow = chow_certificate(&sys, &flag, 1e-4, &ode)?;
            let frame: Vec<String> = flag.adapted_frame.iter().map(ToString::to_string).collect();
            let rows = [
                ("system", sys.name.clone()),
                ("growth", flag.growth_string()),
                ("weights", flag.weights_string()),
                ("degree_of_nonholonomy", flag.degree_of_nonholonomy.to_string()),
                ("homogeneous_dimension", flag.homogeneous_dimension().to_string()),
                ("adapted_frame", format!("({})", frame.join(", "))),
                ("regular", reg.regular.to_string()),
                ("chow_rank", format!("{} of {}", chow.numeric_rank, sys.dim())),
            ];
            let text = kv_lines(&rows, cfg.format);
            Ok(Outcome {
                files: vec![("analyze.txt".into(), text.clone())],
                stdout: text,
                passed: chow.numeric_rank == sys.dim(),
            })
        }
        Command::Coords(at) => {
            let sys = load_system(&at.system)?;
            let p = point_arg(&sys, at.point.as_deref())?;
            let flag = flag_at(&sys, &p, DEPTH)?;
            taylor_warning(&sys, &flag);
            let chart = algebraic_privileged_coords(&sys, &flag)?;
            let report = verify_privileged(&chart, &flag)?;
            let mut s = String::new();
            for (j, z) in chart.z_of_x().iter().enumerate() {
                let _ = writeln!(s, "z{} = {}", j + 1, z.display_with(&sys.var_names));
            }
            let _ = writeln!(s, "{report}");
            Ok(Outcome {
                files: vec![("coords.txt".into(), s.clone())],
                stdout: s,
                passed: report.passed,
            })
        }
        Command::Nilpotent(at) => {
            let sys = load_system(&at.system)?;
            let p = point_arg(&sys, at.point.as_deref())?;
            let (_, _, nil) = chart_and_nil(&sys, &p)?;
            let report = verify_nilpotency(&nil, None)?;
            let text = match cfg.format {
                Format::Csv => nil.to_system_string(&format!("{}_hat", sys.name)),
                Format::Human => format!("{nil}\n{report}\n"),
            };
            Ok(Outcome {
                files: vec![
                    ("nilpotent.sys".into(), nil.to_system_string(&format!("{}_hat", sys.name))),
                    ("nilpotent.txt".into(), format!("{report}\n")),
                ],
                stdout: text,
                passed: report.passed,
            })
        }
        Command::Distance { system, from, to } => {
            let sys = load_system(system)?;
            let a = point_to_f64(&point_arg(&sys, Some(from))?);
            let b = point_to_f64(&point_arg(&sys, Some(to))?);
            let e = estimate_distance(&sys.fields, &a, &b, &cfg.distance(), &ode)?;
            let csv = format!(
                "upper,lower,endpoint_error,restarts,converged\n{},{},{},{},{}\n",
                fmt15(e.upper),
                fmt15(e.lower),
                fmt15(e.endpoint_error),
                e.stats.restarts,
                e.stats.converged
            );
            let summary = format!(
                "distance in [{}, {}] (endpoint error {:.2e}, {}/{} restarts converged)",
                fmt15(e.lower),
                fmt15(e.upper),
                e.endpoint_error,
                e.stats.converged,
                e.stats.restarts
            );
            Ok(Outcome {
                stdout: csv_or_summary(cfg.format, &csv, &summary),
                files: vec![
                    ("distance.csv".into(), csv),
                    ("witness.csv".into(), control_csv(&e.witness)),
                ],
                passed: true,
            })
        }
        Command::Ballbox { at, eps } => {
            let sys = load_system(&at.system)?;
            let p = point_arg(&sys, at.point.as_deref())?;
            let flag = flag_at(&sys, &p, DEPTH)?;
            taylor_warning(&sys, &flag);
            let chart = algebraic_privileged_coords(&sys, &flag)?;
            let tol = BallBoxConfig {
                slope_tol: cfg.tol("ballbox.slope", 0.15),
                max_spread: cfg.tol("ballbox.spread", 3.0),
            };
            let r = ballbox_check(&sys.fields, &chart, eps, cfg.budget("samples", 8), cfg.seed, &cfg.distance(), &ode, &tol)?;
            let (csv, summary) = (r.to_csv(), r.summary());
            Ok(Outcome {
                stdout: csv_or_summary(cfg.format, &csv, &summary),
                files: vec![("ballbox.csv".into(), csv), ("ballbox.txt".into(), summary)],
                passed: r.passed,
            })
        }
        Command::Expansion { at, eps } => {
            let sys = load_system(&at.system)?;
            let p = point_arg(&sys, at.point.as_deref())?;
            let (_, chart, nil) = chart_and_nil(&sys, &p)?;
            let tol = ExpansionConfig {
                noise_tol: cfg.tol("expansion.noise", 0.03),
            };
            let r = distance_expansion_check(&sys.fields, &nil, &chart, eps, cfg.budget("samples", 8), cfg.seed, &cfg.distance(), &ode, &tol)?;
            let (csv, summary) = (r.to_csv(), r.summary());
            Ok(Outcome {
                stdout: csv_or_summary(cfg.format, &csv, &summary),
                files: vec![("expansion.csv".into(), csv), ("expansion.txt".into(), summary)],
                passed: r.passed,
            })
        }
        Command::UniformBallbox { system, points, eps } => {
            let sys = load_system(system)?;
            let pts = points
                .split(';')
                .map(|s| point_arg(&sys, Some(s)))
                .collect::<Result<Vec<_>>>()?;
            let ucfg = UniformConfig {
                k_limit: cfg.tol("uniform.k", 10.0),
                inner_samples: cfg.budget("samples", 16),
                ..Default::default()
            };
            let r = uniform_ballbox_check(&sys, &pts, eps, cfg.seed, &ucfg, &cfg.distance(), &ode)?;
            let (csv, summary) = (r.to_csv(), r.summary());
            Ok(Outcome {
                stdout: csv_or_summary(cfg.format, &csv, &summary),
                files: vec![("uniform-ballbox.csv".into(), csv), ("uniform-ballbox.txt".into(), summary)],
                passed: r.passed,
            })
        }
        Command::Plan {
            system,
            from,
            to,
            global,
            spacing,
        } => {
            let sys = load_system(system)?;
            let a = point_to_f64(&point_arg(&sys, Some(from))?);
            let b = point_to_f64(&point_arg(&sys, Some(to))?);
            let pcfg = PlanConfig {
                max_iter: cfg.budget("iterations", 30),
                tol: cfg.tol("plan.tol", 1e-5),
                radius: cfg.tol("plan.radius", 1.0),
                ..Default::default()
            };
            let legs = if *global {
                plan_global(&sys, &a, &b, *spacing, &pcfg)?.legs
            } else {
                vec![plan(&sys, &a, &b, &pcfg)?]
            };
            let compiled = CompiledSystem::new(&sys.fields);
            let mut waypoints = String::new();
            let mut controls = String::new();
            let mut log = String::new();
            let mut gnuplot = String::new();
            for (i, leg) in legs.iter().enumerate() {
                let skip = usize::from(i > 0);
                waypoints.extend(leg.waypoints_csv().lines().skip(skip).map(|l| format!("{l}\n")));
                controls.extend(leg.control_csv().lines().skip(skip).map(|l| format!("{l}\n")));
                if legs.len() > 1 {
                    let _ = writeln!(log, "# leg {}", i + 1);
                }
                log.push_str(&leg.residual_log());
                gnuplot.extend(leg.gnuplot_data(&compiled, &ode)?.lines().skip(skip).map(|l| format!("{l}\n")));
            }
            let converged = legs.iter().all(|l| l.converged);
            let k_max = legs.iter().map(|l| l.max_k_ratio()).fold(0.0, f64::max);
            let summary = format!(
                "{} legs, {} iterations, final residual {}, max cost/residual {:.3}: {}",
                legs.len(),
                legs.iter().map(|l| l.iterations()).sum::<usize>(),
                fmt15(legs.last().and_then(|l| l.residuals.last().copied()).unwrap_or(f64::NAN)),
                k_max,
                if converged { "converged" } else { "not converged" }
            );
            Ok(Outcome {
                stdout: csv_or_summary(cfg.format, &waypoints, &format!("{log}{summary}")),
                files: vec![
                    ("waypoints.csv".into(), waypoints),
                    ("control.csv".into(), controls),
                    ("residuals.log".into(), log),
                    ("trajectory.dat".into(), gnuplot),
                ],
                passed: converged,
            })
        }
        Command::Hausdorff { at, radius, scales, q } => {
            if *scales < 4 {
                return Err(Error::InvalidArgument(format!("need at least 4 scales, got {scales}")));
            }
            let sys = load_system(&at.system)?;
            let p = point_arg(&sys, at.point.as_deref())?;
            let q = match q {
                Some(q) => *q,
                None => generic_q(&sys, &p, cfg.seed)?,
            };
            let pcfg = PackingConfig {
                budget: cfg.budget("candidates", 200_000),
                refine_budget: cfg.budget("refinements", 32),
                seed: cfg.seed,
                ..Default::default()
            };
            let eps = default_scales(*radius, *scales);
            let run = estimate_dimension(&sys, &point_to_f64(&p), *radius, &eps, Some(q), cfg.tol("hausdorff.f", 10.0), &pcfg)?;
            let csv = run.estimate.to_csv();
            let mut summary = run.estimate.summary();
            if run.packings.iter().any(|c| c.lower_bound) {
                summary.push_str(" (some counts are lower bounds: candidate budget reached)");
            }
            Ok(Outcome {
                stdout: csv_or_summary(cfg.format, &csv, &summary),
                files: vec![("hausdorff.csv".into(), csv), ("hausdorff.txt".into(), summary)],
                passed: true,
            })
        }
        Command::VerifyFlows { at, bracket } => {
            let sys = load_system(&at.system)?;
            let p = point_arg(&sys, at.point.as_deref())?;
            let idx: BracketIndex = bracket.parse()?;
            let t = geometric_times(cfg.tol("flows.t_max", 0.3), cfg.tol("flows.t_min", 0.01), cfg.budget("times", 8));
            let fit = defect_fit_commutator(&sys, &idx, &p, &t, &ode)?;
            let (csv, summary) = (fit.to_csv(), fit.verdict());
            Ok(Outcome {
                stdout: csv_or_summary(cfg.format, &csv, &summary),
                files: vec![("flows.csv".into(), csv), ("flows.txt".into(), summary)],
                passed: fit.passed,
            })
        }
        Command::Selftest => {
            let lines = selftest(cfg)?;
            let passed = lines.iter().all(|(_, ok, _)| *ok);
            let mut s = String::new();
            for (name, ok, detail) in &lines {
                let _ = writeln!(s, "{} {name}: {detail}", pass_fail(*ok));
            }
            Ok(Outcome {
                files: vec![("selftest.txt".into(), s.clone())],
                stdout: s,
                passed,
            })
        }
    }
}

fn control_csv(c: &ControlSignal) -> String {
    let mut s = String::from("duration");
    for i in 1..=c.nfields() {
        let _ = write!(s, ",u{i}");
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

/// Homogeneous dimension at a generic point near `p`.
pub fn generic_q(sys: &SystemDef, p: &[Rational], seed: u64) -> Result<f64> {
    let probes = crate::liealgebra::probe_points(p, 1e-2, 4, seed);
    let mut best = None;
    for q in probes {
        let f = flag_at(sys, &q, DEPTH)?;
        let h = f.homogeneous_dimension();
        best = Some(best.map_or(h, |b: u32| b.min(h)));
    }
    Ok(best.unwrap_or(0) as f64)
}

/// Fast checks on the bundled systems: `(name, passed, detail)` per check.
pub fn selftest(cfg: &RunConfig) -> Result<Vec<(String, bool, String)>> {
    let o3 = vec![Rational::from_integer(0.into()); 3];
    let mut out = Vec::new();
    for (name, growth, weights) in [
        ("heisenberg", "(2,3)", "(1,1,2)"),
        ("martinet", "(2,2,3)", "(1,1,3)"),
        ("grusin", "(1,2)", "(1,2)"),
        ("unicycle", "(2,3)", "(1,1,2)"),
    ] {
        let sys = load_system(name)?;
        let flag = flag_at(&sys, &sys.base_point_default, DEPTH)?;
        let ok = flag.growth_string() == growth && flag.weights_string() == weights;
        out.push((
            format!("structure {name}"),
            ok,
            format!("growth {} weights {}", flag.growth_string(), flag.weights_string()),
        ));
        let chart = algebraic_privileged_coords(&sys, &flag)?;
        let report = verify_privileged(&chart, &flag)?;
        let nil = nilpotent_approximation(&sys, &chart)?;
        let nrep = verify_nilpotency(&nil, None)?;
        out.push((
            format!("charts {name}"),
            report.passed && nrep.passed,
            format!("privileged {}, nilpotent step {}", report.passed, nrep.step),
        ));
    }
    let np = load_system("nonprivileged")?;
    let naive = fixtures::nonprivileged_naive_chart()?;
    let flag = flag_at(&np, &o3, DEPTH)?;
    let rep = verify_privileged(&naive, &flag)?;
    out.push((
        "adapted chart rejected".into(),
        !rep.passed,
        rep.first_failure()
            .and_then(|c| c.failing_alpha.as_ref())
            .map_or("no witness".into(), |(a, v)| format!("witness {} = {v}", tuple_string(a))),
    ));
    let h = load_system("heisenberg")?;
    let compiled = CompiledSystem::new(&h.fields);
    let ode = OdeConfig::default();
    let q = crate::flowcheck::commutator_flow(&compiled, &"1,2".parse()?, &[0.0; 3], 0.5, &ode)?;
    let loop_err = (q[0].abs()).max(q[1].abs()).max((q[2] - 0.25).abs());
    out.push(("heisenberg loop".into(), loop_err < 1e-10, format!("endpoint error {loop_err:.2e}")));
    let e = estimate_distance(&h.fields, &[0.0; 3], &[0.2, 0.0, 0.0], &cfg.distance(), &ode)?;
    out.push((
        "horizontal distance".into(),
        (e.upper - 0.2).abs() < 0.004,
        format!("d = {} (exact 0.2)", fmt15(e.upper)),
    ));
    for (name, a) in [
        ("heisenberg", vec![0.05, -0.03, 0.02]),
        ("martinet", vec![0.05, -0.03, 0.001]),
        ("grusin", vec![0.05, -0.03]),
    ] {
        let sys = load_system(name)?;
        let r = plan(&sys, &a, &vec![0.0; sys.dim()], &PlanConfig::default())?;
        out.push((
            format!("plan {name}"),
            r.converged && r.iterations() == 1,
            format!("{} iterations", r.iterations()),
        ));
    }
    let e4 = CompiledSystem::new(&load_system("engel")?.fields);
    let m3 = CompiledSystem::new(&load_system("martinet")?.fields);
    let c = ControlSignal::new(vec![0.3, 0.4], vec![vec![1.0, -0.5], vec![0.2, 1.0]])?;
    let d = projection_defect(&e4, &m3, &[0, 1, 2], &c, &[0.1, -0.1, 0.0, 0.3], &ode)?;
    out.push(("engel projection".into(), d < 1e-10, format!("max gap {d:.2e}")));
    Ok(out)
}
