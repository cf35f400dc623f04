use serde::Serialize;
use serde_json::json;

use causal_hjb::quadvar::{cross_qv_stats, CrossQvReport};
use causal_hjb::rng::derive_seed;
use causal_hjb::timechange::TimeChangeKind;

use crate::args::QvArgs;
use crate::report::{table_csv, Gate, Report};
use crate::tau::parse_tau;
use crate::{usage, CliError};

#[derive(Clone, Debug, Serialize)]
pub struct LevelSummary {
    pub level: u32,
    pub cross_mean: f64,
    pub cross_stderr: f64,
    pub cross_rms: f64,
    /// 95% quantile over seeds of `|[W](T) - T|`.
    pub diag_w_abs_q95: f64,
    /// Mean over seeds of `[W∘τ](T) - (τ(T) - τ(0))`.
    pub diag_z_mean_dev: f64,
}

#[derive(Clone, Debug, Serialize)]
struct Row {
    block: &'static str,
    level: u32,
    t: f64,
    mean: f64,
    rms: f64,
    stderr: f64,
}

pub(crate) fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn summaries(r: &CrossQvReport, horizon: f64) -> Vec<LevelSummary> {
    r.terminal
        .iter()
        .map(|ts| {
            let row = CrossQvReport::row(&r.cross, ts.level, horizon).expect("terminal row exists");
            let dz = CrossQvReport::row(&r.diag_z, ts.level, horizon).expect("terminal row exists");
            let dev: Vec<f64> = ts.diag_w.iter().map(|v| (v - horizon).abs()).collect();
            LevelSummary {
                level: ts.level,
                cross_mean: row.mean,
                cross_stderr: row.stderr,
                cross_rms: row.rms,
                diag_w_abs_q95: quantile(&dev, 0.95),
                diag_z_mean_dev: dz.mean,
            }
        })
        .collect()
}

pub fn run(args: &QvArgs) -> Result<(Report, Option<String>), CliError> {
    if args.min_level > args.levels || args.seeds == 0 {
        return usage("need --min-level ≤ --levels and at least one seed");
    }
    let tc = parse_tau(&args.tau, args.horizon)?;
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| derive_seed(args.seed, i)).collect();
    let levels: Vec<u32> = (args.min_level..=args.levels).collect();
    let r = cross_qv_stats(&seeds, &tc, &levels, args.horizon)?;
    let levels_out = summaries(&r, args.horizon);
    let identity = matches!(tc.kind, TimeChangeKind::Identity);
    let cross_equals_diagonal =
        r.terminal.iter().all(|t| t.cross.iter().zip(&t.diag_w).zip(&t.diag_z).all(|((c, a), b)| c == a && a == b));
    let decreasing = (levels_out.len() > 1).then(|| levels_out.windows(2).all(|w| w[1].cross_rms < w[0].cross_rms));

    let mut gates = vec![Gate::le("cauchy_schwarz_violations", r.cauchy_schwarz_violations as f64, 0.0)];
    if !identity && levels_out.len() > 1 {
        let first = levels_out.first().unwrap();
        let last = levels_out.last().unwrap();
        gates.push(Gate::lt(format!("cross_rms_level_{}_below_level_{}", last.level, first.level), last.cross_rms, first.cross_rms));
    }
    let mut rows = Vec::new();
    for (block, set) in [("cross", &r.cross), ("diag_w", &r.diag_w), ("diag_z", &r.diag_z)] {
        rows.extend(set.iter().map(|s| Row { block, level: s.level, t: s.t, mean: s.mean, rms: s.rms, stderr: s.stderr }));
    }
    let csv = table_csv(&rows)?;
    let body = json!({
        "steps": r.steps,
        "interpolated": r.interpolated,
        "seeds": r.seeds,
        "cross_equals_diagonal": cross_equals_diagonal,
        "cross_rms_decreasing": decreasing,
        "levels": levels_out,
        "rows": rows,
    });
    Ok((Report::new("qv", args, gates, body), Some(csv)))
}
