use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use causal_hjb::grid_paths::{holder_seminorm, make_uniform_grid, SamplePath};
use causal_hjb::rng::keyed_rng;
use causal_hjb::roughpath::{brownian_rough_path, chen_defect_idx, ito_lift, LiftRule, RoughPath};

use crate::args::{LiftArgs, Rule};
use crate::report::{Gate, Report};
use crate::{usage, CliError};

pub const CHEN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
struct LiftSummary {
    sample: usize,
    dim: usize,
    steps: usize,
    exhaustive: bool,
    triples: usize,
    max_chen_defect: f64,
    /// `1 + |X|²_∞`.
    scale: f64,
    normalized_defect: f64,
    holder_path: Option<f64>,
    holder_second: Option<f64>,
    holder_subsampled: Option<bool>,
}

fn summarize(rp: &RoughPath, sample: usize, args: &LiftArgs) -> Result<LiftSummary, CliError> {
    let n = rp.grid().steps();
    let mut worst: f64 = 0.0;
    let exhaustive = n <= args.exhaustive_max;
    let mut triples = 0;
    if exhaustive {
        for j in 0..=n {
            for m in j..=n {
                for k in m..=n {
                    worst = worst.max(chen_defect_idx(rp, j, m, k));
                    triples += 1;
                }
            }
        }
    } else {
        let mut rng = keyed_rng(args.seed, sample as u64, 1234);
        for _ in 0..args.triples {
            let mut t = [rng.gen_range(0..=n), rng.gen_range(0..=n), rng.gen_range(0..=n)];
            t.sort_unstable();
            worst = worst.max(chen_defect_idx(rp, t[0], t[1], t[2]));
        }
        triples = args.triples;
    }
    let sup = rp.path().sup_norm();
    let scale = 1.0 + sup * sup;
    let holder = if sample < args.holder_samples {
        let hp = holder_seminorm(rp.path(), rp.alpha())?;
        let hs = rp.second_holder();
        Some((hp.value, hs.value, hp.subsampled || hs.subsampled))
    } else {
        None
    };
    Ok(LiftSummary {
        sample,
        dim: rp.dim(),
        steps: n,
        exhaustive,
        triples,
        max_chen_defect: worst,
        scale,
        normalized_defect: worst / scale,
        holder_path: holder.map(|h| h.0),
        holder_second: holder.map(|h| h.1),
        holder_subsampled: holder.map(|h| h.2),
    })
}

fn rule(r: Rule) -> LiftRule {
    match r {
        Rule::Ito => LiftRule::Ito,
        Rule::Stratonovich => LiftRule::Stratonovich,
    }
}

pub fn run(args: &LiftArgs) -> Result<(Report, Option<String>), CliError> {
    let lifts: Vec<RoughPath> = match (&args.input, args.brownian.is_empty()) {
        (Some(path), true) => {
            let file = std::fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
            let fine = SamplePath::read_csv(file)?;
            let rp = ito_lift(&fine, args.oversampling.unwrap_or(1), args.alpha)?;
            vec![match args.rule {
                Rule::Ito => rp,
                Rule::Stratonovich => rp.stratonovich()?,
            }]
        }
        (None, false) => {
            if args.samples == 0 {
                return usage("--samples must be positive");
            }
            let grid = make_uniform_grid(args.horizon, args.n)?;
            let m = args.oversampling.unwrap_or(4);
            (0..args.samples)
                .into_par_iter()
                .map(|i| {
                    let d = args.brownian[i % args.brownian.len()];
                    Ok(brownian_rough_path(&grid, d, args.seed, i as u64, m, rule(args.rule))?.with_alpha(args.alpha)?)
                })
                .collect::<Result<_, CliError>>()?
        }
        _ => return usage("give exactly one of --input and --brownian"),
    };
    if let Some(out) = &args.lift_out {
        std::fs::write(out, lifts[0].to_json()?).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", out.display())))?;
    }
    let summaries: Vec<LiftSummary> =
        lifts.par_iter().enumerate().map(|(i, rp)| summarize(rp, i, args)).collect::<Result<_, _>>()?;
    let worst = summaries.iter().map(|s| s.normalized_defect).fold(0.0, f64::max);
    let gates = vec![Gate::le("max_chen_defect_normalized", worst, CHEN_TOLERANCE)];
    let csv = if lifts.len() == 1 {
        let mut buf = Vec::new();
        lifts[0].path().write_csv(&mut buf)?;
        Some(String::from_utf8(buf).expect("csv is utf-8"))
    } else {
        None
    };
    let body = json!({ "max_normalized_defect": worst, "lifts": summaries });
    Ok((Report::new("lift", args, gates, body), csv))
}
