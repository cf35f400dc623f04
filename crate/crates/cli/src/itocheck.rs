use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use causal_hjb::causal::{PathView, ScalarFn};
use causal_hjb::funcito::{decompose, StateDerivs, StateFunctional, StateOnly};
use causal_hjb::grid_paths::{make_uniform_grid, SamplePath};
use causal_hjb::hjb::median;
use causal_hjb::rde::{solve_rde, ControlSignal, FnCoefficients};
use causal_hjb::roughpath::{brownian_rough_path, LiftRule};
use causal_hjb::Result;

use crate::args::{Functional, ItoArgs};
use crate::report::{table_csv, Gate, Report};
use crate::tau::parse_tau;
use crate::{usage, CliError};

/// `F(t, y, z) = y² + z(t)²`.
struct Mixed;

impl StateFunctional for Mixed {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn derivatives(&self, _t: f64, y: &[f64], _init: &SamplePath, z: &PathView) -> Result<StateDerivs> {
        let zc = z.current()[0];
        let mut out = StateDerivs::zeros(y[0] * y[0] + zc * zc, 1, 1);
        out.grad_y = vec![2.0 * y[0]];
        out.hess_y = vec![2.0];
        out.grad_z = vec![2.0 * zc];
        out.hess_z = vec![2.0];
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ItoLevel {
    pub n: usize,
    pub median_abs_residual: f64,
    pub max_abs_residual: f64,
    pub max_abs_ito_term: f64,
}

pub fn run(args: &ItoArgs) -> std::result::Result<(Report, Option<String>), CliError> {
    if args.seeds == 0 || args.n >> args.refinements == 0 {
        return usage("need at least one seed and a grid that survives the halvings");
    }
    let tc = parse_tau(&args.tau, 1.0)?;
    let f: Box<dyn StateFunctional> = match args.functional {
        Functional::Square => Box::new(StateOnly { g: ScalarFn::square(1), noise_dim: 1 }),
        Functional::Linear => Box::new(StateOnly { g: ScalarFn::coordinate(1, 0), noise_dim: 1 }),
        Functional::Mixed => Box::new(Mixed),
    };
    let c = FnCoefficients::additive(1);
    let mut levels = Vec::new();
    for r in (0..=args.refinements).rev() {
        let n = args.n >> r;
        let grid = make_uniform_grid(1.0, n)?;
        if !tc.maps_grid_to_grid(&grid) {
            return usage(format!("--tau {} does not map the {n}-step grid onto itself; the time-changed path would be interpolated", args.tau));
        }
        let runs: Vec<(f64, f64)> = (0..args.seeds as u64)
            .into_par_iter()
            .map(|i| {
                let rp = brownian_rough_path(&grid, 1, args.seed, i, args.oversampling, LiftRule::Ito)?;
                let sol = solve_rde(&c, &ControlSignal::zero(n + 1, 0), &rp, 0, &[0.0])?;
                let d = decompose(f.as_ref(), &sol, &c, &rp, &tc)?;
                Ok((d.residual.abs(), d.ito_term.abs()))
            })
            .collect::<std::result::Result<_, CliError>>()?;
        let res: Vec<f64> = runs.iter().map(|r| r.0).collect();
        levels.push(ItoLevel {
            n,
            median_abs_residual: median(&res),
            max_abs_residual: res.iter().copied().fold(0.0, f64::max),
            max_abs_ito_term: runs.iter().map(|r| r.1).fold(0.0, f64::max),
        });
    }
    let last = levels.last().expect("nonempty");
    let mut gates = Vec::new();
    if args.functional == Functional::Linear {
        gates.push(Gate::le("max_abs_residual", last.max_abs_residual, 1e-12));
    } else {
        gates.push(Gate::lt(format!("median_abs_residual_n_{}", last.n), last.median_abs_residual, args.tolerance));
        for w in levels.windows(2) {
            gates.push(Gate::lt(format!("median_decreases_{}_to_{}", w[0].n, w[1].n), w[1].median_abs_residual, w[0].median_abs_residual));
        }
    }
    if matches!(tc.kind, causal_hjb::timechange::TimeChangeKind::Full) {
        let worst = levels.iter().map(|l| l.max_abs_ito_term).fold(0.0, f64::max);
        gates.push(Gate::le("ito_term_vanishes_under_full_information", worst, 0.0));
    }
    let csv = table_csv(&levels)?;
    Ok((Report::new("ito-check", args, gates, json!({ "levels": levels })), Some(csv)))
}
