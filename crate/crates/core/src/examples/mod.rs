//! Three worked control problems: a frontrunner with price impact, a fully
//! anticipating pathwise problem with its transport counterexample, and an
//! insider trading problem.

pub mod frontrunner;
pub mod insider;
pub mod pathwise;

use crate::error::{invalid, Result};
use crate::grid_paths::SamplePath;

/// Knots of the path strictly inside `(a, b)` together with `a` and `b`.
pub(crate) fn knots_between(path: &SamplePath, a: f64, b: f64) -> Vec<f64> {
    let times = path.grid().times();
    let lo = times.partition_point(|&t| t <= a);
    let hi = times.partition_point(|&t| t < b);
    let mut out = Vec::with_capacity(hi.saturating_sub(lo) + 2);
    out.push(a);
    out.extend_from_slice(&times[lo..hi.max(lo)]);
    if b > a {
        out.push(b);
    }
    out
}

pub(crate) fn scalar(path: &SamplePath) -> Result<()> {
    if path.dim() != 1 {
        return invalid("the worked examples use a one-dimensional driver");
    }
    Ok(())
}
