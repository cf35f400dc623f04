//! Pathwise quadratic variation along partition sequences.
//!
//! Level `n` puts the atom `(x(u) - x(s))^{⊗2}` at the left point `s` of
//! each interval `[s, u]`. Cumulative functions are read half-open,
//! `F_n(t) = μ_n([0, t))`, so `F_n(0) = 0` and at a partition point `F_n`
//! sums the completed intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid_paths::{make_uniform_grid, sample_brownian_keyed, PartitionSequence, SamplePath};
use crate::quad::trapezoid;
use crate::rde::{Coefficients, RdeSolution};
use crate::timechange::{aligned_steps, time_changed_path, TimeChange};

/// Number of equispaced checkpoints (including 0 and T).
pub const CHECKPOINTS: usize = 33;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QvResult {
    pub level: u32,
    pub dim: usize,
    /// Left points of the partition intervals.
    pub atom_times: Vec<f64>,
    /// Row-major `d×d` atom per interval.
    pub atoms: Vec<Vec<f64>>,
    /// `F_n` at every partition point (length = intervals + 1).
    pub cumulative: Vec<Vec<f64>>,
    /// `Σ |atom_ij|` per entry.
    pub total_variation: Vec<f64>,
}

impl QvResult {
    /// `F_n(t) = μ_n([0, t))`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let i = self.atom_times.partition_point(|&s| s < t);
        self.cumulative[i].clone()
    }

    pub fn terminal(&self) -> &[f64] {
        self.cumulative.last().unwrap()
    }
}

fn qv_on_indices(x: &SamplePath, level: u32, idx: &[usize]) -> QvResult {
    let d = x.dim();
    let mut atoms = Vec::with_capacity(idx.len() - 1);
    let mut cumulative = Vec::with_capacity(idx.len());
    let mut run = vec![0.0; d * d];
    let mut tv = vec![0.0; d * d];
    cumulative.push(run.clone());
    for w in idx.windows(2) {
        let inc = x.increment(w[0], w[1]);
        let mut atom = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let v = inc[i] * inc[j];
                atom[i * d + j] = v;
                run[i * d + j] += v;
                tv[i * d + j] += v.abs();
            }
        }
        atoms.push(atom);
        cumulative.push(run.clone());
    }
    QvResult {
        level,
        dim: d,
        atom_times: idx[..idx.len() - 1].iter().map(|&k| x.grid().t(k)).collect(),
        atoms,
        cumulative,
        total_variation: tv,
    }
}

/// Quadratic variation of `x` along every level of `ps`.
pub fn qv_along_partitions(x: &SamplePath, ps: &PartitionSequence) -> Result<Vec<QvResult>> {
    if (ps.horizon - x.grid().horizon()).abs() > 1e-12 || x.grid().start() != 0.0 {
        return invalid("partition horizon must match the path's [0, T]");
    }
    ps.levels
        .iter()
        .map(|(level, _)| {
            let idx = ps.indices_on(*level, x.grid())?;
            Ok(qv_on_indices(x, *level, &idx))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub level: u32,
    pub t: f64,
    pub mean: f64,
    pub rms: f64,
    pub stderr: f64,
}

fn stats(level: u32, t: f64, xs: &[f64]) -> StatRow {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let rms = (xs.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    StatRow { level, t, mean, rms, stderr: (var / n).sqrt() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalSamples {
    pub level: u32,
    pub cross: Vec<f64>,
    pub diag_w: Vec<f64>,
    pub diag_z: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossQvReport {
    pub steps: usize,
    /// True when `τ` did not map the simulation grid onto itself.
    pub interpolated: bool,
    pub seeds: usize,
    /// Cross block `[W, W∘τ]` (target 0).
    pub cross: Vec<StatRow>,
    /// `[W](t) - t`.
    pub diag_w: Vec<StatRow>,
    /// `[W∘τ](t) - (τ(t) - τ(0))`.
    pub diag_z: Vec<StatRow>,
    /// Per-seed values at `T`.
    pub terminal: Vec<TerminalSamples>,
    /// Samples where the cross total variation exceeded `sqrt(diag_w diag_z)`.
    pub cauchy_schwarz_violations: usize,
}

impl CrossQvReport {
    pub fn row<'a>(rows: &'a [StatRow], level: u32, t: f64) -> Option<&'a StatRow> {
        rows.iter().find(|r| r.level == level && (r.t - t).abs() < 1e-12)
    }
}

struct SeedQv {
    // per level: checkpoints × [cross, diag_w, diag_z]
    checkpoints: Vec<Vec<[f64; 3]>>,
    cs_violation: bool,
}

/// Simulates one-dimensional `W` per seed, forms `(W, W∘τ)` and collects
/// per-level statistics of the cumulative blocks at the checkpoints. The
/// simulation grid has `2^{max level}` steps, refined until `τ` maps grid
/// points to grid points when that is possible.
pub fn cross_qv_stats(seeds: &[u64], tc: &TimeChange, levels: &[u32], horizon: f64) -> Result<CrossQvReport> {
    if seeds.is_empty() || levels.is_empty() {
        return invalid("need at least one seed and one level");
    }
    let max_level = *levels.iter().max().unwrap();
    if max_level > 24 {
        return invalid("levels above 24 are not supported");
    }
    let steps = aligned_steps(horizon, 1usize << max_level, tc);
    let grid = make_uniform_grid(horizon, steps)?;
    let ps = crate::grid_paths::dyadic_partitions(horizon, max_level)?;
    let index_sets: Vec<(u32, Vec<usize>)> =
        levels.iter().map(|&l| Ok((l, ps.indices_on(l, &grid)?))).collect::<Result<_>>()?;
    let checkpoints: Vec<f64> = (0..CHECKPOINTS).map(|i| horizon * i as f64 / (CHECKPOINTS - 1) as f64).collect();
    let interpolated = !tc.maps_grid_to_grid(&grid);

    let per_seed: Vec<Result<SeedQv>> = seeds
        .par_iter()
        .map(|&seed| {
            let w = sample_brownian_keyed(&grid, 1, seed, 0)?;
            let (z, _) = time_changed_path(&w, tc)?;
            let mut out = Vec::with_capacity(index_sets.len());
            let mut cs_violation = false;
            for (_, idx) in &index_sets {
                let mut rows = Vec::with_capacity(CHECKPOINTS);
                let (mut c, mut a, mut b, mut tv) = (0.0, 0.0, 0.0, 0.0);
                let mut ci = 0;
                for win in idx.windows(2) {
                    let s = grid.t(win[0]);
                    while ci < CHECKPOINTS && checkpoints[ci] <= s + 1e-15 {
                        rows.push([c, a, b]);
                        ci += 1;
                    }
                    let dw = w.get(win[1], 0) - w.get(win[0], 0);
                    let dz = z.get(win[1], 0) - z.get(win[0], 0);
                    c += dw * dz;
                    tv += (dw * dz).abs();
                    a += dw * dw;
                    b += dz * dz;
                }
                while ci < CHECKPOINTS {
                    rows.push([c, a, b]);
                    ci += 1;
                }
                if tv > (a * b).sqrt() * (1.0 + 1e-12) + 1e-300 {
                    cs_violation = true;
                }
                out.push(rows);
            }
            Ok(SeedQv { checkpoints: out, cs_violation })
        })
        .collect();
    let per_seed: Vec<SeedQv> = per_seed.into_iter().collect::<Result<_>>()?;

    let tau0 = tc.tau(0.0);
    let mut report = CrossQvReport {
        steps,
        interpolated,
        seeds: seeds.len(),
        cross: Vec::new(),
        diag_w: Vec::new(),
        diag_z: Vec::new(),
        terminal: Vec::new(),
        cauchy_schwarz_violations: per_seed.iter().filter(|s| s.cs_violation).count(),
    };
    for (li, (level, _)) in index_sets.iter().enumerate() {
        for (ci, &t) in checkpoints.iter().enumerate() {
            let col = |j: usize, target: f64| -> Vec<f64> { per_seed.iter().map(|s| s.checkpoints[li][ci][j] - target).collect() };
            report.cross.push(stats(*level, t, &col(0, 0.0)));
            report.diag_w.push(stats(*level, t, &col(1, t)));
            report.diag_z.push(stats(*level, t, &col(2, tc.tau(t) - tau0)));
        }
        let last = CHECKPOINTS - 1;
        report.terminal.push(TerminalSamples {
            level: *level,
            cross: per_seed.iter().map(|s| s.checkpoints[li][last][0]).collect(),
            diag_w: per_seed.iter().map(|s| s.checkpoints[li][last][1]).collect(),
            diag_z: per_seed.iter().map(|s| s.checkpoints[li][last][2]).collect(),
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionQvLevel {
    pub level: u32,
    /// Sup over partition points of the entrywise deviation of the `Y` block
    /// from `∫_0^t f(Y) f(Y)^T dλ`.
    pub y_block_dev: f64,
    /// Same for the `W∘τ` block against `(τ(t) - τ(0)) I`.
    pub z_block_dev: f64,
    /// Sup of the `(Y, W∘τ)` cross block (target 0).
    pub cross_dev: f64,
    /// Terminal values of every entry of the `Y` block and of its target.
    pub y_terminal: Vec<f64>,
    pub y_target_terminal: Vec<f64>,
}

/// Compares the quadratic variation of `(Y, W∘τ)` with
/// `diag(∫ f(Y)^{⊗2} dλ, (τ - τ(0)) I)` along each partition level.
pub fn solution_qv_check(sol: &RdeSolution, c: &dyn Coefficients, w: &SamplePath, tc: &TimeChange, ps: &PartitionSequence) -> Result<Vec<SolutionQvLevel>> {
    let n = c.state_dim();
    let d = c.noise_dim();
    if w.dim() != d || w.grid() != sol.path.grid() {
        return invalid("driver must share the solution grid and noise dimension");
    }
    let grid = sol.path.grid();
    let (z, _) = time_changed_path(w, tc)?;
    let joint = SamplePath::stack(&[&sol.path, &z])?;
    // running ∫ f f^T by trapezoid on the grid
    let mut ff = vec![0.0; grid.len() * n * n];
    let mut f = vec![0.0; n * d];
    for k in 0..grid.len() {
        c.diffusion(sol.path.value(k), &mut f);
        for a in 0..n {
            for b in 0..n {
                ff[k * n * n + a * n + b] = (0..d).map(|j| f[a * d + j] * f[b * d + j]).sum();
            }
        }
    }
    let mut integral = vec![0.0; grid.len() * n * n];
    for k in 0..grid.steps() {
        for e in 0..n * n {
            let v = if k < sol.t0_index { 0.0 } else { trapezoid(&[grid.t(k), grid.t(k + 1)], &[ff[k * n * n + e], ff[(k + 1) * n * n + e]]) };
            integral[(k + 1) * n * n + e] = integral[k * n * n + e] + v;
        }
    }
    let tau0 = tc.tau(0.0);
    let m = n + d;
    let mut out = Vec::new();
    for (level, _) in &ps.levels {
        let idx = ps.indices_on(*level, grid)?;
        let qv = qv_on_indices(&joint, *level, &idx);
        let (mut ydev, mut zdev, mut cdev) = (0.0f64, 0.0f64, 0.0f64);
        for (p, &k) in idx.iter().enumerate() {
            let cum = &qv.cumulative[p];
            for a in 0..n {
                for b in 0..n {
                    ydev = ydev.max((cum[a * m + b] - integral[k * n * n + a * n + b]).abs());
                }
                for j in 0..d {
                    cdev = cdev.max(cum[a * m + n + j].abs());
                }
            }
            let target = tc.tau(grid.t(k)) - tau0;
            for i in 0..d {
                for j in 0..d {
                    let want = if i == j { target } else { 0.0 };
                    zdev = zdev.max((cum[(n + i) * m + n + j] - want).abs());
                }
            }
        }
        let last = qv.terminal();
        let kn = *idx.last().unwrap();
        out.push(SolutionQvLevel {
            level: *level,
            y_block_dev: ydev,
            z_block_dev: zdev,
            cross_dev: cdev,
            y_terminal: (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| last[a * m + b]).collect(),
            y_target_terminal: integral[kn * n * n..(kn + 1) * n * n].to_vec(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakConvergenceReport {
    /// `max |F_n - F|` over the dense grid, per `n`.
    pub gaps: Vec<f64>,
    /// Total variation of each `F_n` along the dense grid.
    pub total_variation: Vec<f64>,
}

/// Pointwise gaps of cumulative functions against a limit on a dense grid.
pub fn weak_convergence_probe(fns: &[&dyn Fn(f64) -> f64], limit: &dyn Fn(f64) -> f64, dense: &[f64]) -> WeakConvergenceReport {
    let gaps = fns.iter().map(|f| dense.iter().map(|&t| (f(t) - limit(t)).abs()).fold(0.0, f64::max)).collect();
    let total_variation = fns
        .iter()
        .map(|f| dense.windows(2).map(|w| (f(w[1]) - f(w[0])).abs()).sum::<f64>() + f(dense[0]).abs())
        .collect();
    WeakConvergenceReport { gaps, total_variation }
}
