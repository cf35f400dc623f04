use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use causal_hjb::examples::frontrunner::{
    frontrunner_coefficients, frontrunner_probes, frontrunner_problem, frontrunner_value_t0, upsilon_omega_identities, FrontrunnerCandidate,
    FrontrunnerControl, FrontrunnerParams,
};
use causal_hjb::examples::insider::{insider_check, InsiderCoefficient, InsiderParams, InsiderReport};
use causal_hjb::examples::pathwise::{
    pathwise_coefficients, pathwise_probes, pathwise_problem, pathwise_value_and_control, select_paths, transport_counterexample, PathwiseCandidate,
};
use causal_hjb::grid_paths::{dyadic_partitions, make_uniform_grid, SamplePath};
use causal_hjb::hjb::{
    hjb_residuals, martingale_drift_test, mc_value, ConstantControl, DriftInterval, FeedbackControl, McConfig, McEstimate, ResidualOptions, TransportMode,
};
use causal_hjb::quadvar::solution_qv_check;
use causal_hjb::rde::{solve_rde, ControlSignal};
use causal_hjb::roughpath::{brownian_rough_path, ito_lift, LiftRule, DEFAULT_ALPHA};
use causal_hjb::timechange::{aligned_steps, initial_segment};

use crate::args::{Ablation, Coefficient, Example, VerifyArgs};
use crate::report::{Gate, Report};
use crate::{usage, CliError};

pub const RESIDUAL_TOL: f64 = 1e-6;
pub const IDENTITY_TOL: f64 = 1e-5;
pub const TERMINAL_TOL: f64 = 1e-12;
pub const MC_RELATIVE_TOL: f64 = 0.05;
pub const SIGMAS: f64 = 3.0;
pub const SOLUTION_QV_TOL: f64 = 0.05;
pub const REACH_TOL: f64 = 1e-3;
pub const BRANCH_TOL: f64 = 1e-2;
pub const INSIDER_TOL: f64 = 1e-8;

pub fn run(args: &VerifyArgs) -> Result<Report, CliError> {
    if args.ablate.is_some() && args.example != Example::Frontrunner {
        return usage("--ablate applies to the frontrunner example only");
    }
    let (gates, body) = match args.example {
        Example::Frontrunner => frontrunner(args)?,
        Example::Pathwise => pathwise(args)?,
        Example::Insider => insider(args)?,
    };
    Ok(Report::new("verify", args, gates, body))
}

fn residual_options(transport: TransportMode, drop_z_trace: bool) -> ResidualOptions {
    ResidualOptions { transport, drop_z_trace }
}

/// `mean / stderr`, with a zero-variance estimate counted as exact.
fn sigmas(mean: f64, stderr: f64) -> f64 {
    if stderr > 0.0 {
        mean / stderr
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    }
}

#[derive(Serialize)]
struct Comparison {
    control: String,
    estimate: McEstimate,
    /// `E[φ*] - E[this]`.
    advantage: f64,
    stderr: f64,
}

fn frontrunner(args: &VerifyArgs) -> Result<(Vec<Gate>, Value), CliError> {
    let horizon = args.horizon.unwrap_or(1.0);
    let p = FrontrunnerParams::new(args.lambda, args.delta, horizon, args.phi0)?;
    let problem = frontrunner_problem(&p);
    let mut gates = Vec::new();
    let mut body = serde_json::Map::new();

    let ids = upsilon_omega_identities(&p, 1000, 1e-5);
    gates.push(Gate::lt("upsilon_identity_defect", ids.upsilon, IDENTITY_TOL));
    gates.push(Gate::lt("omega_identity_defect", ids.omega, IDENTITY_TOL));
    body.insert("identities".into(), json!(ids));

    let probes = frontrunner_probes(&p, args.probes.unwrap_or(200), args.probe_steps.unwrap_or(200), args.seed)?;
    let cand = FrontrunnerCandidate { p, ablate_transport: args.ablate == Some(Ablation::Transport) };
    let opts = residual_options(TransportMode::Plain, args.ablate == Some(Ablation::ZTrace));
    let res = hjb_residuals(&cand, &problem, &probes, opts, Some(args.seed))?;
    gates.push(Gate::lt("max_parabolic_residual", res.max_parabolic, RESIDUAL_TOL));
    gates.push(Gate::lt("max_transport_residual", res.max_transport, RESIDUAL_TOL));
    gates.push(Gate::le("max_terminal_residual", res.max_terminal, TERMINAL_TOL));
    body.insert("residuals".into(), json!(res));
    if args.skip_mc {
        return Ok((gates, Value::Object(body)));
    }

    let cand = FrontrunnerCandidate::new(p);
    let star = FrontrunnerControl { p };
    let y0 = [0.0, p.phi0, 0.0];
    let m = args.oversampling.unwrap_or(1);
    let n = args.n.unwrap_or(4000);
    if !p.aligned(n) || !p.aligned(args.drift_n) || args.drift_every == 0 || args.drift_n % args.drift_every != 0 {
        return usage("Δ must be a whole number of steps and the drift checkpoints must divide the drift grid");
    }

    // Value at t = 0 with a flat information segment.
    let info = SamplePath::constant(make_uniform_grid(horizon, n * m)?, &[0.0]);
    let init = initial_segment(&SamplePath::constant(make_uniform_grid(horizon, n)?, &[0.0]), &p.tc())?;
    let closed = frontrunner_value_t0(&p, &init)?;
    let cfg = McConfig::new(args.samples, m, args.seed);
    let opt = mc_value(&problem, &star, 0, &y0, &info, &cfg)?;
    let gap = (opt.mean - closed).abs();
    gates.push(Gate::le("mc_value_vs_closed_form", gap, (SIGMAS * opt.stderr).max(MC_RELATIVE_TOL * closed.abs())));
    let mut comparisons = Vec::new();
    for c in [0.0, 0.5, -0.5] {
        let est = mc_value(&problem, &ConstantControl(vec![c]), 0, &y0, &info, &cfg)?;
        let se = opt.stderr.hypot(est.stderr);
        let advantage = opt.mean - est.mean;
        gates.push(Gate::gt(format!("beats_constant_{c}"), advantage, -SIGMAS * se));
        comparisons.push(Comparison { control: format!("constant {c}"), estimate: est, advantage, stderr: se });
    }
    body.insert("value".into(), json!({ "closed_form": closed, "optimal": opt, "comparisons": comparisons }));

    // Martingale drift of the candidate along the optimal and a suboptimal control.
    let info_d = SamplePath::constant(make_uniform_grid(horizon, args.drift_n * m)?, &[0.0]);
    let checkpoints: Vec<usize> = (0..=args.drift_n).step_by(args.drift_every).collect();
    let cfg_d = McConfig::new(args.inner, m, args.seed);
    let drift = |ctrl: &dyn FeedbackControl| -> Result<Vec<DriftInterval>, CliError> {
        Ok(martingale_drift_test(&cand, &problem, ctrl, 0, &y0, &checkpoints, &info_d, args.outer, args.inner, &cfg_d)?)
    };
    let d_star = drift(&star)?;
    let d_zero = drift(&ConstantControl(vec![0.0]))?;
    let worst_abs = d_star.iter().map(|d| sigmas(d.mean, d.stderr).abs()).fold(0.0, f64::max);
    let worst_up = d_zero.iter().map(|d| sigmas(d.mean, d.stderr)).fold(f64::NEG_INFINITY, f64::max);
    gates.push(Gate::le("optimal_drift_sigmas", worst_abs, SIGMAS));
    gates.push(Gate::le("zero_control_max_drift_sigmas", worst_up, SIGMAS));
    body.insert("drift".into(), json!({ "optimal": d_star, "zero": d_zero }));

    // Quadratic variation of the wealth along the optimally controlled system.
    let level = args.qv_level;
    let tc = p.tc();
    let steps = aligned_steps(horizon, 1usize << level, &tc);
    let grid = make_uniform_grid(horizon, steps)?;
    let ps = dyadic_partitions(horizon, level)?;
    let coeffs = frontrunner_coefficients(&p);
    let qv: Vec<[f64; 2]> = (0..args.qv_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let rp = brownian_rough_path(&grid, 1, args.seed, i, 1, LiftRule::Ito)?;
            let sol = {
                let bound = star.bind(rp.path());
                solve_rde(&coeffs, bound.as_ref(), &rp, 0, &y0)?
            };
            let lv = solution_qv_check(&sol, &coeffs, rp.path(), &tc, &ps)?;
            let last = lv.iter().find(|l| l.level == level).expect("finest level present");
            Ok([last.y_terminal[0], last.y_target_terminal[0]])
        })
        .collect::<Result<_, CliError>>()?;
    let worst_rel = qv.iter().map(|v| (v[0] - v[1]).abs() / v[1].abs()).fold(0.0, f64::max);
    gates.push(Gate::lt("solution_qv_max_relative_deviation", worst_rel, SOLUTION_QV_TOL));
    body.insert(
        "solution_qv".into(),
        json!({ "level": level, "steps": steps, "seeds": args.qv_seeds, "max_relative_deviation": worst_rel, "samples": qv }),
    );
    Ok((gates, Value::Object(body)))
}

#[derive(Serialize)]
struct BranchRun {
    reachable: bool,
    clipped: bool,
    control: f64,
    value: f64,
    terminal_gap: f64,
}

fn pathwise(args: &VerifyArgs) -> Result<(Vec<Gate>, Value), CliError> {
    let horizon = args.horizon.unwrap_or(0.5);
    let problem = pathwise_problem(horizon);
    let mut gates = Vec::new();
    let probes = pathwise_probes(horizon, args.probes.unwrap_or(50), args.probe_steps.unwrap_or(256), args.seed)?;
    let res = hjb_residuals(&PathwiseCandidate { counterexample: false }, &problem, &probes, residual_options(TransportMode::Plain, false), Some(args.seed))?;
    gates.push(Gate::lt("max_parabolic_residual", res.max_parabolic, RESIDUAL_TOL));
    gates.push(Gate::lt("max_transport_residual", res.max_transport, RESIDUAL_TOL));
    gates.push(Gate::le("max_terminal_residual", res.max_terminal, TERMINAL_TOL));
    let counter = transport_counterexample(horizon, args.counter_steps, args.counter_paths, args.seed)?;
    gates.push(Gate::le("counterexample_parabolic_residual", counter.residuals.max_parabolic, 0.0));
    gates.push(Gate::gt("counterexample_value_mismatch_sigmas", counter.mismatch_sigmas, SIGMAS));
    let mut body = json!({ "residuals": res, "counterexample": counter });
    if args.skip_mc {
        return Ok((gates, body));
    }

    let n = args.n.unwrap_or(4096);
    let m = args.oversampling.unwrap_or(4);
    let coeffs = pathwise_coefficients();
    let simulate = |fine: &SamplePath, x: f64| -> Result<BranchRun, CliError> {
        let rp = ito_lift(fine, m, DEFAULT_ALPHA)?.geometric()?;
        let d = pathwise_value_and_control(0.0, x, rp.path())?;
        let ctrl = ControlSignal::from_fn(rp.grid().times(), 1, |_| vec![d.control]);
        let sol = solve_rde(&coeffs, &ctrl, &rp, 0, &[x, 0.0])?;
        let xt = sol.path.get(n, 0);
        Ok(BranchRun { reachable: d.reachable, clipped: d.clipped, control: d.control, value: d.value, terminal_gap: (xt - 1.0).abs() })
    };
    let reach: Vec<BranchRun> = select_paths(horizon, n * m, args.x_reach, true, args.paths, args.seed)?
        .par_iter()
        .map(|f| simulate(f, args.x_reach))
        .collect::<Result<_, _>>()?;
    let other: Vec<BranchRun> = select_paths(horizon, n * m, args.x_other, false, args.paths, args.seed ^ 0xb7a4)?
        .par_iter()
        .map(|f| simulate(f, args.x_other))
        .collect::<Result<_, _>>()?;
    let hit: Vec<&BranchRun> = reach.iter().filter(|r| r.reachable && !r.clipped).collect();
    let worst_hit = hit.iter().map(|r| r.terminal_gap).fold(0.0, f64::max);
    let kept: Vec<&BranchRun> = other.iter().filter(|r| !r.reachable).collect();
    let worst_other = kept.iter().map(|r| (r.terminal_gap - r.value).abs()).fold(0.0, f64::max);
    gates.push(Gate::ge("reachable_paths_evaluated", hit.len() as f64, 1.0));
    gates.push(Gate::lt("reachable_max_terminal_gap", worst_hit, REACH_TOL));
    gates.push(Gate::ge("other_branch_paths_evaluated", kept.len() as f64, 1.0));
    gates.push(Gate::lt("other_branch_max_value_gap", worst_other, BRANCH_TOL));
    body["reachable"] = json!({ "x": args.x_reach, "evaluated": hit.len(), "clipped": reach.iter().filter(|r| r.clipped).count(), "max_terminal_gap": worst_hit, "runs": reach });
    body["other_branch"] = json!({ "x": args.x_other, "evaluated": kept.len(), "max_value_gap": worst_other, "runs": other });
    Ok((gates, body))
}

fn summary(r: &InsiderReport, p: &InsiderParams) -> Value {
    json!({
        "coefficient": r.coefficient,
        "coefficient_value": r.coefficient.value(p),
        "max_parabolic": r.max_parabolic,
        "median_parabolic": r.median_parabolic,
        "max_transport": r.max_transport,
        "max_terminal": r.max_terminal,
        "probes": r.probes.len(),
    })
}

fn insider(args: &VerifyArgs) -> Result<(Vec<Gate>, Value), CliError> {
    let p = InsiderParams::new(args.epsilon, args.sigma0, args.horizon.unwrap_or(1.0))?;
    let (coef, other) = match args.coefficient {
        Coefficient::Consistent => (InsiderCoefficient::Consistent, InsiderCoefficient::Printed),
        Coefficient::Printed => (InsiderCoefficient::Printed, InsiderCoefficient::Consistent),
    };
    let count = args.probes.unwrap_or(100);
    let steps = args.probe_steps.unwrap_or(500);
    let r = insider_check(&p, coef, count, steps, args.seed)?;
    let alt = insider_check(&p, other, count, steps, args.seed)?;
    let gates = vec![
        Gate::le("max_transport_residual", r.max_transport, 0.0),
        Gate::lt("max_parabolic_residual", r.max_parabolic, INSIDER_TOL),
        Gate::le("max_terminal_residual", r.max_terminal, 0.0),
    ];
    Ok((gates, json!({ "checked": summary(&r, &p), "alternative": summary(&alt, &p) })))
}
