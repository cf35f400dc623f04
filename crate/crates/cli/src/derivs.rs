use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use causal_hjb::causal::{analytic_bundle, horizontal_derivative, numeric_bundle, CausalFunctional, PointFunctional, Reconstruction, RunningIntegral, ScalarFn, WindowedIntegral};
use causal_hjb::grid_paths::{make_uniform_grid, sample_brownian_keyed};
use causal_hjb::rng::keyed_rng;
use causal_hjb::timechange::{split_initial_segment, TimeChange};

use crate::args::DerivArgs;
use crate::report::{Gate, Report};
use crate::{usage, CliError};

#[derive(Clone, Debug, Serialize)]
struct BuiltinSummary {
    name: String,
    probes: usize,
    max_rel_dt: f64,
    max_rel_grad: f64,
    max_rel_hess: f64,
    unstable_probes: usize,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn check_builtin(f: &dyn CausalFunctional, args: &DerivArgs, stream: u64) -> Result<BuiltinSummary, CliError> {
    let grid = make_uniform_grid(1.0, args.n)?;
    let per: Vec<[f64; 4]> = (0..args.probes as u64)
        .into_par_iter()
        .map(|i| {
            let x = sample_brownian_keyed(&grid, f.dim(), args.seed ^ stream, i)?;
            let t = 0.01 + 0.98 * keyed_rng(args.seed, i, stream).gen::<f64>();
            let ana = analytic_bundle(f, t, &x)?.ok_or_else(|| CliError::Usage(format!("{} has no analytic derivatives", f.name())))?;
            let (num, unstable) = numeric_bundle(f, t, &x, args.h)?;
            let worst = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
            Ok([rel(num.dt, ana.dt), worst(&num.grad, &ana.grad), worst(&num.hess, &ana.hess), if unstable { 1.0 } else { 0.0 }])
        })
        .collect::<Result<_, CliError>>()?;
    let col = |j: usize| per.iter().map(|r| r[j]).fold(0.0, f64::max);
    Ok(BuiltinSummary {
        name: f.name().to_string(),
        probes: per.len(),
        max_rel_dt: col(0),
        max_rel_grad: col(1),
        max_rel_hess: col(2),
        unstable_probes: per.iter().filter(|r| r[3] > 0.0).count(),
    })
}

pub fn run(args: &DerivArgs) -> Result<Report, CliError> {
    if args.probes == 0 || args.reconstruction_step == 0 || args.reconstruction_step >= args.reconstruction_n {
        return usage("need probes and a reconstruction step shorter than the grid");
    }
    let tc = TimeChange::lookahead(args.delta, 1.0)?;
    let f = ScalarFn::sine_quadratic(2);
    let builtins: Vec<Box<dyn CausalFunctional>> = vec![
        Box::new(PointFunctional { f: f.clone() }),
        Box::new(RunningIntegral { g: f.clone() }),
        Box::new(WindowedIntegral::new(f, tc.clone())?),
    ];
    let summaries: Vec<BuiltinSummary> =
        builtins.iter().enumerate().map(|(j, b)| check_builtin(b.as_ref(), args, 100 + j as u64)).collect::<Result<_, _>>()?;

    let grid = make_uniform_grid(1.0, args.reconstruction_n)?;
    let h = args.reconstruction_step as f64 * grid.mesh();
    let flags: Vec<bool> = (0..args.probes as u64)
        .into_par_iter()
        .map(|i| {
            let w = sample_brownian_keyed(&grid, 1, args.seed ^ 200, i)?;
            let (init, z) = split_initial_segment(&w, &tc)?;
            let rec = Reconstruction { f: ScalarFn::coordinate(1, 0), tc: tc.clone(), initial: init };
            let t = (1.0 - h) * keyed_rng(args.seed, i, 200).gen::<f64>();
            Ok(horizontal_derivative(&rec, t, &z, h)?.unstable)
        })
        .collect::<Result<_, CliError>>()?;
    let flagged = flags.iter().filter(|f| **f).count();

    let mut gates = Vec::new();
    for s in &summaries {
        gates.push(Gate::lt(format!("{}_max_rel_error", s.name), s.max_rel_dt.max(s.max_rel_grad).max(s.max_rel_hess), args.tolerance));
    }
    gates.push(Gate::ge("reconstruction_unstable_probes", flagged as f64, args.min_flagged as f64));
    let body = json!({ "builtins": summaries, "reconstruction": { "probes": args.probes, "flagged": flagged, "step": h } });
    Ok(Report::new("derivatives", args, gates, body))
}
