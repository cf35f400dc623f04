//! Fully anticipating control of `dX = φ dt + X dW` with `φ ∈ [0, 1]`,
//! `τ ≡ T` and cost `|X(T) - 1|`, solved pathwise (Stratonovich).
//!
//! State `y = (x, w)` with `w` the current noise value; the whole driver
//! on `[0, T]` is the initial segment.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{knots_between, scalar};
use crate::causal::PathView;
use crate::error::{invalid, Result};
use crate::funcito::{StateDerivs, StateFunctional};
use crate::grid_paths::{make_uniform_grid, sample_brownian_keyed, SamplePath};
use crate::hjb::{hjb_residuals, mean_stderr, ControlProblem, ControlSet, Probe, ResidualOptions, ResidualReport, Sense, TransportMode};
use crate::quad::trapezoid;
use crate::rde::FnCoefficients;
use crate::rng::keyed_rng;
use crate::roughpath::LiftRule;
use crate::timechange::TimeChange;

pub const DEFAULT_HORIZON: f64 = 0.5;

pub fn pathwise_coefficients() -> FnCoefficients {
    FnCoefficients {
        n: 2,
        d: 1,
        m: 1,
        drift: Box::new(|_, _, phi, out| {
            out[0] = phi[0];
            out[1] = 0.0;
        }),
        diffusion: Box::new(|y, out| {
            out[0] = y[0];
            out[1] = 1.0;
        }),
        diffusion_grad: Box::new(|_, out| {
            out.fill(0.0);
            out[0] = 1.0;
        }),
        lipschitz: Some(1.0),
        bounded: false,
    }
}

pub fn pathwise_problem(horizon: f64) -> ControlProblem {
    ControlProblem {
        coeffs: Arc::new(pathwise_coefficients()),
        terminal: Arc::new(|y| (y[0] - 1.0).abs()),
        tc: TimeChange::full(horizon),
        control_set: ControlSet::Box { lo: vec![0.0], hi: vec![1.0] },
        sense: Sense::Minimize,
        lift: LiftRule::Stratonovich,
    }
}

/// `∫_t^T exp(W(T) - W(r)) dr` by the trapezoid rule on the path knots.
pub fn growth_integral(w: &SamplePath, t: f64) -> f64 {
    let big_t = w.grid().horizon();
    let wt = w.get(w.len() - 1, 0);
    let knots = knots_between(w, t, big_t);
    let v: Vec<f64> = knots.iter().map(|&r| (wt - w.coord_at(r, 0)).exp()).collect();
    trapezoid(&knots, &v)
}

/// `X(s) = x exp(W(s) - W(t_k)) + ∫_{t_k}^s exp(W(s) - W(r)) φ(r) dr` on the
/// grid points from `k`, with `φ` constant on each step (one entry per step
/// from `k`) and the integral by the trapezoid rule.
pub fn pathwise_solution_formula(k: usize, x: f64, control: &[f64], w: &SamplePath) -> Result<Vec<f64>> {
    scalar(w)?;
    let g = w.grid();
    if k > g.steps() || control.len() != g.steps() - k {
        return invalid("one control value per step from the start index is required");
    }
    let mut out = Vec::with_capacity(g.len() - k);
    let base = w.get(k, 0);
    let mut acc = 0.0;
    out.push(x);
    for (i, &phi) in control.iter().enumerate() {
        let j = k + i;
        acc += 0.5 * g.dt(j) * phi * ((-w.get(j, 0)).exp() + (-w.get(j + 1, 0)).exp());
        let wj = w.get(j + 1, 0);
        out.push(x * (wj - base).exp() + wj.exp() * acc);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathwiseDecision {
    /// `1 < x e^{W(T)-W(t)} + ∫_t^T e^{W(T)-W(r)} dr`.
    pub reachable: bool,
    pub value: f64,
    /// Constant optimal control on `[t, T]`.
    pub control: f64,
    /// The unclipped control fell outside `[0, 1]`.
    pub clipped: bool,
}

/// Value and constant optimal control from `(t, x)` given the driver.
pub fn pathwise_value_and_control(t: f64, x: f64, w: &SamplePath) -> Result<PathwiseDecision> {
    scalar(w)?;
    let wt = w.get(w.len() - 1, 0);
    let a = x * (wt - w.coord_at(t, 0)).exp();
    let b = growth_integral(w, t);
    if a + b > 1.0 {
        let raw = if b > 0.0 { (1.0 - a) / b } else { 0.0 };
        let phi = raw.clamp(0.0, 1.0);
        let clipped = phi != raw;
        return Ok(PathwiseDecision { reachable: true, value: (a + phi * b - 1.0).abs(), control: phi, clipped });
    }
    Ok(PathwiseDecision { reachable: false, value: 1.0 - a - b, control: 1.0, clipped: false })
}

/// `u = 1 - x e^{W(T) - w} - ∫_t^T e^{W(T)-W(r)} dr` on the unreachable
/// branch, or the defective `1 - x - (T - t)` when `counterexample` is set.
#[derive(Clone, Copy, Debug)]
pub struct PathwiseCandidate {
    pub counterexample: bool,
}

impl StateFunctional for PathwiseCandidate {
    fn state_dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn derivatives(&self, t: f64, y: &[f64], init: &SamplePath, _z: &PathView) -> Result<StateDerivs> {
        scalar(init)?;
        let big_t = init.grid().horizon();
        let mut out = StateDerivs::zeros(0.0, 2, 1);
        if self.counterexample {
            out.value = 1.0 - y[0] - (big_t - t);
            out.dt = 1.0;
            out.grad_y = vec![-1.0, 0.0];
            return Ok(out);
        }
        let wt = init.get(init.len() - 1, 0);
        let e = (wt - y[1]).exp();
        out.value = 1.0 - y[0] * e - growth_integral(init, t);
        out.dt = (wt - init.coord_at(t, 0)).exp();
        out.grad_y = vec![-e, y[0] * e];
        out.hess_y = vec![0.0, e, e, -y[0] * e];
        Ok(out)
    }
}

/// Probes on the unreachable branch: `t` uniform, `x ∈ [0, 0.2]`, `w = W(t)`,
/// terminal state `(x, W(T))`.
pub fn pathwise_probes(horizon: f64, count: usize, steps: usize, seed: u64) -> Result<Vec<Probe>> {
    let grid = make_uniform_grid(horizon, steps)?;
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let w = Arc::new(sample_brownian_keyed(&grid, 1, seed, i)?);
        let mut rng = keyed_rng(seed, i, 99);
        i += 1;
        let t = rng.gen::<f64>() * horizon;
        let x = 0.2 * rng.gen::<f64>();
        if pathwise_value_and_control(t, x, &w)?.reachable {
            continue;
        }
        let wt = w.coord_at(t, 0);
        let wend = w.get(w.len() - 1, 0);
        out.push(Probe { t, y: vec![x, wt], y_terminal: vec![x, wend], w });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub residuals: ResidualReport,
    /// Claimed value `1 - T` at `(0, 0)`.
    pub claimed: f64,
    pub true_mean: f64,
    pub true_stderr: f64,
    pub paths: usize,
    pub mismatch_sigmas: f64,
}

/// Residuals of the defective candidate and the gap between its value at
/// `(0, 0)` and the true pathwise value averaged over `paths` samples.
pub fn transport_counterexample(horizon: f64, steps: usize, paths: usize, seed: u64) -> Result<CounterexampleReport> {
    let problem = pathwise_problem(horizon);
    let probes = pathwise_probes(horizon, 50, steps, seed)?;
    let residuals = hjb_residuals(&PathwiseCandidate { counterexample: true }, &problem, &probes, ResidualOptions { transport: TransportMode::Plain, drop_z_trace: false }, Some(seed))?;
    let grid = make_uniform_grid(horizon, steps)?;
    let vals: Vec<f64> = (0..paths as u64)
        .map(|i| Ok(pathwise_value_and_control(0.0, 0.0, &sample_brownian_keyed(&grid, 1, seed ^ 0x5eed, i)?)?.value))
        .collect::<Result<_>>()?;
    let (true_mean, true_stderr) = mean_stderr(&vals);
    let claimed = 1.0 - horizon;
    Ok(CounterexampleReport { residuals, claimed, true_mean, true_stderr, paths, mismatch_sigmas: (true_mean - claimed).abs() / true_stderr })
}

/// Draws paths until `want` satisfy (`reachable`) or violate it from `(0, x)`.
pub fn select_paths(horizon: f64, steps: usize, x: f64, reachable: bool, want: usize, seed: u64) -> Result<Vec<SamplePath>> {
    let grid = make_uniform_grid(horizon, steps)?;
    let mut out = Vec::with_capacity(want);
    let mut i = 0u64;
    while out.len() < want {
        if i > 1000 * want as u64 + 1000 {
            return invalid("event too rare for the requested number of paths");
        }
        let w = sample_brownian_keyed(&grid, 1, seed, i)?;
        i += 1;
        if pathwise_value_and_control(0.0, x, &w)?.reachable == reachable {
            out.push(w);
        }
    }
    Ok(out)
}
