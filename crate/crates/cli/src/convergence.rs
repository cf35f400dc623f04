use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use causal_hjb::controlled::{rough_integral_value, ControlledPath};
use causal_hjb::grid_paths::make_uniform_grid;
use causal_hjb::rde::{solve_rde, ControlSignal, FnCoefficients};
use causal_hjb::roughpath::{brownian_rough_path, LiftRule, RoughPath};

use crate::args::ConvergenceArgs;
use crate::report::{table_csv, Gate, Report};
use crate::{usage, CliError};

#[derive(Clone, Debug, Serialize)]
pub struct LevelError {
    pub n: usize,
    pub rms: f64,
    pub max: f64,
}

fn sweep(args: &ConvergenceArgs, err: impl Fn(&RoughPath) -> Result<f64, CliError> + Sync) -> Result<Vec<LevelError>, CliError> {
    if args.n.is_empty() || args.seeds == 0 {
        return usage("need at least one grid size and one seed");
    }
    args.n
        .iter()
        .map(|&n| {
            let grid = make_uniform_grid(1.0, n)?;
            let errs: Vec<f64> = (0..args.seeds as u64)
                .into_par_iter()
                .map(|i| err(&brownian_rough_path(&grid, 1, args.seed, i, args.oversampling, LiftRule::Ito)?))
                .collect::<Result<_, _>>()?;
            let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
            Ok(LevelError { n, rms, max: errs.iter().fold(0.0, |a: f64, e| a.max(e.abs())) })
        })
        .collect()
}

fn finish(name: &str, args: &ConvergenceArgs, levels: Vec<LevelError>) -> Result<(Report, Option<String>), CliError> {
    let last = levels.last().expect("nonempty");
    let mut gates = vec![Gate::lt(format!("rms_error_n_{}", last.n), last.rms, args.tolerance)];
    for w in levels.windows(2) {
        gates.push(Gate::lt(format!("rms_decreases_{}_to_{}", w[0].n, w[1].n), w[1].rms, w[0].rms));
    }
    let csv = table_csv(&levels)?;
    Ok((Report::new(name, args, gates, json!({ "levels": levels })), Some(csv)))
}

/// `∫₀¹ W d𝐖` against `(W(1)² - 1)/2`.
pub fn integral(args: &ConvergenceArgs) -> Result<(Report, Option<String>), CliError> {
    let levels = sweep(args, |rp| {
        let y = ControlledPath::identity(rp);
        let v = rough_integral_value(&y, rp, None)?[0];
        let w1 = rp.path().get(rp.grid().steps(), 0);
        Ok(v - 0.5 * (w1 * w1 - 1.0))
    })?;
    finish("integral", args, levels)
}

/// `dY = Y d𝐖`, `Y(0) = 1` against `exp(W(1) - 1/2)`.
pub fn rde(args: &ConvergenceArgs) -> Result<(Report, Option<String>), CliError> {
    let c = FnCoefficients::geometric();
    let levels = sweep(args, |rp| {
        let n = rp.grid().steps();
        let sol = solve_rde(&c, &ControlSignal::zero(n + 1, 0), rp, 0, &[1.0])?;
        Ok(sol.path.get(n, 0) - (rp.path().get(n, 0) - 0.5).exp())
    })?;
    finish("rde", args, levels)
}
