//! Causal HJB residuals, Hamiltonian optimization, conditional Monte Carlo
//! values and martingale-optimality drift tests.
//!
//! Conditioning on the information up to `τ(t)` is simulated by freezing
//! the fine driver sample up to `τ(t)` and resampling the increments after.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::PathView;
use crate::error::{invalid, Error, Result};
use crate::funcito::{StateDerivs, StateFunctional};
use crate::grid_paths::{extend_brownian, SamplePath};
use crate::rde::{solve_rde, Coefficients, ControlSource, RdeSolution};
use crate::rng::derive_seed;
use crate::roughpath::{ito_lift, LiftRule, RoughPath, DEFAULT_ALPHA};
use crate::timechange::{initial_segment, time_changed_path, TimeChange};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ControlSet {
    /// All of `ℝ^m`.
    Unbounded { dim: usize },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Finite { points: Vec<Vec<f64>> },
}

impl ControlSet {
    pub fn dim(&self) -> usize {
        match self {
            Self::Unbounded { dim } => *dim,
            Self::Box { lo, .. } => lo.len(),
            Self::Finite { points } => points.first().map_or(0, Vec::len),
        }
    }
}

/// Transport equation form: `fᵀ∇_y u` alone, or with `+ ∇_w u` for a
/// separate current-noise slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Plain,
    Extended,
}

pub type Terminal = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ControlProblem {
    pub coeffs: Arc<dyn Coefficients + Send>,
    pub terminal: Terminal,
    pub tc: TimeChange,
    pub control_set: ControlSet,
    pub sense: Sense,
    /// Under the Stratonovich convention the `½ tr(fᵀ∇²_y u f)` term is
    /// absent from the parabolic equation and Monte Carlo uses the
    /// Stratonovich lift.
    pub lift: LiftRule,
}

const QUAD_TOL: f64 = 1e-8;

fn sup_quadratic(obj: &dyn Fn(&[f64]) -> f64, m: usize) -> Result<(f64, Vec<f64>)> {
    let k = obj(&vec![0.0; m]);
    let unit = |i: usize, s: f64| {
        let mut e = vec![0.0; m];
        e[i] = s;
        e
    };
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut c = DVector::<f64>::zeros(m);
    let mut plus = vec![0.0; m];
    for i in 0..m {
        plus[i] = obj(&unit(i, 1.0));
        let minus = obj(&unit(i, -1.0));
        a[(i, i)] = plus[i] + minus - 2.0 * k;
        c[i] = 0.5 * (plus[i] - minus);
    }
    for i in 0..m {
        for j in 0..i {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            e[j] = 1.0;
            let v = obj(&e) - plus[i] - plus[j] + k;
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let scale = 1.0 + a.abs().max() + c.abs().max() + k.abs();
    // confirm the quadratic model off the probe stencil
    let probe: Vec<f64> = (0..m).map(|i| 0.37 + 0.11 * i as f64).collect();
    let pv = DVector::from_column_slice(&probe);
    let model = k + c.dot(&pv) + 0.5 * (pv.transpose() * &a * &pv)[(0, 0)];
    if (model - obj(&probe)).abs() > 1e-7 * scale {
        return invalid("objective is not quadratic in the control; use a bounded control set");
    }
    let eig = SymmetricEigen::new(a.clone());
    let tol = QUAD_TOL * scale;
    if eig.eigenvalues.iter().any(|&l| l > tol) {
        return Err(Error::UnboundedHamiltonian("positive curvature in the control".into()));
    }
    // maximize ½φᵀAφ + cᵀφ on the range of A; c must vanish on the kernel
    let mut phi = DVector::<f64>::zeros(m);
    for (idx, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(idx);
        let cv = v.dot(&c);
        if l.abs() <= tol {
            if cv.abs() > tol {
                return Err(Error::UnboundedHamiltonian("linear growth along a flat control direction".into()));
            }
            continue;
        }
        phi -= v * (cv / l);
    }
    let phi: Vec<f64> = phi.iter().copied().collect();
    Ok((obj(&phi), phi))
}

fn golden_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a <= 1e-12 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    let mut best = (f1, x1);
    for x in [x2, lo, hi] {
        let v = f(x);
        if v > best.0 {
            best = (v, x);
        }
    }
    best
}

/// Optimal value and one optimizer of `φ ↦ objective(φ)` over the control
/// set. `Minimize` optimizes the negated objective and negates the value.
pub fn hamiltonian_sup(objective: &dyn Fn(&[f64]) -> f64, set: &ControlSet, sense: Sense) -> Result<(f64, Vec<f64>)> {
    let sign = if sense == Sense::Maximize { 1.0 } else { -1.0 };
    let obj = |p: &[f64]| sign * objective(p);
    let (v, phi) = match set {
        ControlSet::Unbounded { dim } => {
            if *dim == 0 {
                (obj(&[]), Vec::new())
            } else {
                sup_quadratic(&obj, *dim)?
            }
        }
        ControlSet::Finite { points } => {
            let mut best: Option<(f64, Vec<f64>)> = None;
            for p in points {
                let v = obj(p);
                if best.as_ref().map_or(true, |b| v > b.0) {
                    best = Some((v, p.clone()));
                }
            }
            best.ok_or_else(|| Error::InvalidArgument("empty control set".into()))?
        }
        ControlSet::Box { lo, hi } => {
            if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                return invalid("box bounds must satisfy lo ≤ hi");
            }
            let mut phi: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let mut val = obj(&phi);
            for _ in 0..if lo.len() > 1 { 20 } else { 1 } {
                for i in 0..lo.len() {
                    let line = |x: f64| {
                        let mut p = phi.clone();
                        p[i] = x;
                        obj(&p)
                    };
                    let (v, x) = golden_max(&line, lo[i], hi[i]);
                    if v >= val {
                        val = v;
                        phi[i] = x;
                    }
                }
            }
            (val, phi)
        }
    };
    Ok((sign * v, phi))
}

/// A residual probe: time, state at `t`, the state to test the terminal
/// condition with, and the driver sample.
#[derive(Clone, Debug)]
pub struct Probe {
    pub t: f64,
    pub y: Vec<f64>,
    pub y_terminal: Vec<f64>,
    pub w: Arc<SamplePath>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualOptions {
    pub transport: TransportMode,
    /// Drop `½ tr(∇²_z u) τ'` (ablation).
    pub drop_z_trace: bool,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { transport: TransportMode::Extended, drop_z_trace: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResidual {
    pub t: f64,
    pub parabolic: f64,
    pub transport: Vec<f64>,
    pub terminal: f64,
    pub optimal_control: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub seed: Option<u64>,
    pub probes: Vec<ProbeResidual>,
    pub max_parabolic: f64,
    pub median_parabolic: f64,
    pub max_transport: f64,
    pub median_transport: f64,
    pub max_terminal: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Parabolic, transport and terminal residual at one probe from given
/// derivatives.
pub fn residual_from_derivs(dv: &StateDerivs, problem: &ControlProblem, t: f64, y: &[f64], opts: ResidualOptions) -> Result<ProbeResidual> {
    let c = problem.coeffs.as_ref();
    let n = c.state_dim();
    let d = c.noise_dim();
    if dv.grad_y.len() != n || dv.hess_y.len() != n * n || dv.hess_z.len() != d * d {
        return Err(Error::UnsupportedFunctional("candidate lacks the required derivatives".into()));
    }
    let mut b = vec![0.0; n];
    let objective = |phi: &[f64]| {
        let mut b = vec![0.0; n];
        c.drift(t, y, phi, &mut b);
        dv.grad_y.iter().zip(&b).map(|(g, b)| g * b).sum::<f64>()
    };
    let (ham, phi) = hamiltonian_sup(&objective, &problem.control_set, problem.sense)?;
    c.drift(t, y, &phi, &mut b);
    let mut f = vec![0.0; n * d];
    c.diffusion(y, &mut f);
    let mut par = dv.dt + ham;
    if problem.lift == LiftRule::Ito {
        let mut tr = 0.0;
        for j in 0..d {
            for a in 0..n {
                for e in 0..n {
                    tr += f[a * d + j] * dv.hess_y[a * n + e] * f[e * d + j];
                }
            }
        }
        par += 0.5 * tr;
    }
    let dw = dv.grad_w.len();
    par += 0.5 * (0..dw).map(|i| dv.hess_w.get(i * dw + i).copied().unwrap_or(0.0)).sum::<f64>();
    if !opts.drop_z_trace {
        par += 0.5 * (0..d).map(|j| dv.hess_z[j * d + j]).sum::<f64>() * problem.tc.dtau(t);
    }
    let transport = (0..d)
        .map(|j| {
            let mut v: f64 = (0..n).map(|a| f[a * d + j] * dv.grad_y[a]).sum();
            if opts.transport == TransportMode::Extended && dw == d {
                v += dv.grad_w[j];
            }
            v
        })
        .collect();
    Ok(ProbeResidual { t, parabolic: par, transport, terminal: 0.0, optimal_control: phi })
}

/// Evaluates the HJB system at every probe.
pub fn hjb_residuals(cand: &dyn StateFunctional, problem: &ControlProblem, probes: &[Probe], opts: ResidualOptions, seed: Option<u64>) -> Result<ResidualReport> {
    let tc = &problem.tc;
    let rows: Vec<Result<ProbeResidual>> = probes
        .par_iter()
        .map(|p| {
            let init = initial_segment(&p.w, tc)?;
            let (z, _) = time_changed_path(&p.w, tc)?;
            let view = PathView::new(&z, p.t)?;
            let dv = cand.derivatives(p.t, &p.y, &init, &view)?;
            let mut r = residual_from_derivs(&dv, problem, p.t, &p.y, opts)?;
            let horizon = tc.horizon;
            let tv = PathView::new(&z, horizon)?;
            let dt = cand.derivatives(horizon, &p.y_terminal, &init, &tv)?;
            r.terminal = dt.value - (problem.terminal)(&p.y_terminal);
            Ok(r)
        })
        .collect();
    let probes: Vec<ProbeResidual> = rows.into_iter().collect::<Result<_>>()?;
    let par: Vec<f64> = probes.iter().map(|r| r.parabolic.abs()).collect();
    let tra: Vec<f64> = probes.iter().map(|r| r.transport.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
    let max = |v: &[f64]| v.iter().copied().fold(0.0f64, f64::max);
    Ok(ResidualReport {
        seed,
        max_parabolic: max(&par),
        median_parabolic: median(&par),
        max_transport: max(&tra),
        median_transport: median(&tra),
        max_terminal: probes.iter().map(|r| r.terminal.abs()).fold(0.0, f64::max),
        probes,
    })
}

/// Feedback rule `φ(t, y, W on [0, τ(t)])`. `bind` prepares the rule for
/// one driver sample on the solver grid.
pub trait FeedbackControl: Sync {
    fn dim(&self) -> usize;
    fn bind<'a>(&'a self, w: &'a SamplePath) -> Box<dyn ControlSource + 'a>;
}

/// `φ ≡ c`.
#[derive(Clone, Debug)]
pub struct ConstantControl(pub Vec<f64>);

impl ControlSource for ConstantControl {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn control(&self, _k: usize, _t: f64, _y: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

impl FeedbackControl for ConstantControl {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn bind<'a>(&'a self, _w: &'a SamplePath) -> Box<dyn ControlSource + 'a> {
        Box::new(self.clone())
    }
}

/// Perturbs the driver strictly after `τ(t_k)` and checks that the
/// realized control at step `k` does not change.
pub fn feedback_audit(ctrl: &dyn FeedbackControl, tc: &TimeChange, w: &SamplePath, k: usize, y: &[f64], trials: usize, seed: u64) -> Result<bool> {
    let grid = w.grid();
    let t = grid.t(k);
    let cut = tc.tau(t);
    let keep = grid.times().partition_point(|&s| s <= cut + 1e-12) - 1;
    let base = ctrl.bind(w).control(k, t, y);
    for trial in 0..trials {
        let pert = extend_brownian(w, keep, seed, trial as u64)?;
        if ctrl.bind(&pert).control(k, t, y) != base {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    /// Fine steps per solver step for the lift.
    pub oversampling: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl McConfig {
    pub fn new(samples: usize, oversampling: usize, seed: u64) -> Self {
        Self { samples, oversampling, seed, alpha: DEFAULT_ALPHA }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub failed: usize,
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Fine index of the last point whose time is `≤ τ(t_k)`.
fn info_keep(fine: &SamplePath, tc: &TimeChange, t: f64) -> Result<usize> {
    let cut = tc.tau(t);
    fine.grid()
        .index_of(cut)
        .ok_or_else(|| Error::InvalidArgument(format!("τ({t}) = {cut} is not a point of the fine grid")))
}

fn lift(fine: &SamplePath, cfg: &McConfig, rule: LiftRule) -> Result<RoughPath> {
    let rp = ito_lift(fine, cfg.oversampling, cfg.alpha)?;
    match rule {
        LiftRule::Ito => Ok(rp),
        LiftRule::Stratonovich => rp.geometric(),
    }
}

/// Extends the fine sample beyond `τ(t_k)`, lifts it and solves from
/// `(t_k, y)` under the bound feedback rule.
pub fn simulate(problem: &ControlProblem, ctrl: &dyn FeedbackControl, k: usize, y: &[f64], fine: &SamplePath, cfg: &McConfig, sample: u64) -> Result<(RoughPath, RdeSolution)> {
    let t = fine.grid().t(k * cfg.oversampling);
    let keep = info_keep(fine, &problem.tc, t)?;
    let path = extend_brownian(fine, keep, cfg.seed, sample)?;
    let rp = lift(&path, cfg, problem.lift)?;
    let sol = {
        let bound = ctrl.bind(rp.path());
        solve_rde(problem.coeffs.as_ref(), bound.as_ref(), &rp, k, y)?
    };
    Ok((rp, sol))
}

fn checked(values: Vec<Result<f64>>) -> Result<(Vec<f64>, usize)> {
    let total = values.len();
    let mut ok = Vec::with_capacity(total);
    let mut failed = 0;
    for v in values {
        match v {
            Ok(x) if x.is_finite() => ok.push(x),
            Ok(_) | Err(Error::Divergence { .. }) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if failed * 100 > total {
        return Err(Error::McDivergence { failed, total });
    }
    Ok((ok, failed))
}

/// Conditional Monte Carlo estimate of `E[g(Y(T)) | info up to τ(t_k)]`.
/// `info` is a fine sample (`oversampling` fine steps per solver step)
/// whose values after `τ(t_k)` are ignored.
pub fn mc_value(problem: &ControlProblem, ctrl: &dyn FeedbackControl, k: usize, y: &[f64], info: &SamplePath, cfg: &McConfig) -> Result<McEstimate> {
    if cfg.samples == 0 {
        return invalid("need at least one sample");
    }
    let values: Vec<Result<f64>> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let (_, sol) = simulate(problem, ctrl, k, y, info, cfg, i)?;
            Ok((problem.terminal)(sol.path.value(sol.path.len() - 1)))
        })
        .collect();
    let (ok, failed) = checked(values)?;
    let (mean, stderr) = mean_stderr(&ok);
    Ok(McEstimate { mean, stderr, samples: cfg.samples, failed })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftInterval {
    pub from: f64,
    pub to: f64,
    pub mean: f64,
    pub stderr: f64,
}

fn candidate_value(cand: &dyn StateFunctional, tc: &TimeChange, w: &SamplePath, init: &SamplePath, k: usize, y: &[f64]) -> Result<f64> {
    let (z, _) = time_changed_path(w, tc)?;
    let t = w.grid().t(k);
    Ok(cand.derivatives(t, y, init, &PathView::new(&z, t)?)?.value)
}

/// Nested estimate of `E[u(s₂, Y(s₂)) - u(s₁, Y(s₁)) | info up to τ(s₁)]`
/// for consecutive checkpoints (solver-grid indices). `outer` conditioning
/// paths each get `inner` resamples; the stderr is taken across outer paths.
#[allow(clippy::too_many_arguments)]
pub fn martingale_drift_test(
    cand: &dyn StateFunctional,
    problem: &ControlProblem,
    ctrl: &dyn FeedbackControl,
    k: usize,
    y: &[f64],
    checkpoints: &[usize],
    info: &SamplePath,
    outer: usize,
    inner: usize,
    cfg: &McConfig,
) -> Result<Vec<DriftInterval>> {
    if checkpoints.len() < 2 || checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints[0] < k {
        return invalid("checkpoints must be increasing and start at or after the initial index");
    }
    if outer < 2 || inner == 0 {
        return invalid("need at least two outer and one inner sample");
    }
    let m = cfg.oversampling;
    let tc = &problem.tc;
    let per_outer: Vec<Result<Vec<f64>>> = (0..outer as u64)
        .into_par_iter()
        .map(|o| {
            let (rp, sol) = simulate(problem, ctrl, k, y, info, cfg, o)?;
            let coarse = rp.path().clone();
            let init = initial_segment(&coarse, tc)?;
            let fine = extend_brownian(info, info_keep(info, tc, info.grid().t(k * m))?, cfg.seed, o)?;
            let mut drifts = Vec::with_capacity(checkpoints.len() - 1);
            for (i, win) in checkpoints.windows(2).enumerate() {
                let (k1, k2) = (win[0], win[1]);
                let y1 = sol.path.value(k1).to_vec();
                let u1 = candidate_value(cand, tc, &coarse, &init, k1, &y1)?;
                let inner_cfg = McConfig { seed: derive_seed(cfg.seed, 1 + i as u64), ..*cfg };
                let mut acc = Vec::with_capacity(inner);
                for j in 0..inner {
                    let r = simulate(problem, ctrl, k1, &y1, &fine, &inner_cfg, o * inner as u64 + j as u64);
                    match r {
                        Ok((rpj, solj)) => {
                            let u2 = candidate_value(cand, tc, rpj.path(), &init, k2, solj.path.value(k2))?;
                            acc.push(u2 - u1);
                        }
                        Err(Error::Divergence { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                if acc.len() * 100 < inner * 99 {
                    return Err(Error::McDivergence { failed: inner - acc.len(), total: inner });
                }
                drifts.push(acc.iter().sum::<f64>() / acc.len() as f64);
            }
            Ok(drifts)
        })
        .collect();
    let per_outer: Vec<Vec<f64>> = per_outer.into_iter().collect::<Result<_>>()?;
    let grid_t = |kk: usize| info.grid().t(kk * m);
    Ok(checkpoints
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let xs: Vec<f64> = per_outer.iter().map(|d| d[i]).collect();
            let (mean, stderr) = mean_stderr(&xs);
            DriftInterval { from: grid_t(w[0]), to: grid_t(w[1]), mean, stderr }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceEntry {
    pub control: String,
    pub estimate: McEstimate,
    pub dominated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub candidate: f64,
    pub entries: Vec<DominanceEntry>,
    pub all_dominated: bool,
}

/// Checks `E[g(Y(T))] ≤ candidate + 3·stderr` (mirrored for minimization)
/// for every supplied control.
#[allow(clippy::too_many_arguments)]
pub fn dominance_check(
    candidate: f64,
    problem: &ControlProblem,
    controls: &[(&str, &dyn FeedbackControl)],
    k: usize,
    y: &[f64],
    info: &SamplePath,
    cfg: &McConfig,
) -> Result<DominanceReport> {
    let mut entries = Vec::with_capacity(controls.len());
    for (name, ctrl) in controls {
        let est = mc_value(problem, *ctrl, k, y, info, cfg)?;
        let dominated = match problem.sense {
            Sense::Maximize => est.mean <= candidate + 3.0 * est.stderr,
            Sense::Minimize => est.mean >= candidate - 3.0 * est.stderr,
        };
        entries.push(DominanceEntry { control: (*name).to_string(), estimate: est, dominated });
    }
    let all_dominated = entries.iter().all(|e| e.dominated);
    Ok(DominanceReport { candidate, entries, all_dominated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_paths::{make_uniform_grid, sample_brownian};
    use crate::rde::FnCoefficients;

    #[test]
    fn quadratic_sup() {
        let (lam, ux, up) = (2.0, 0.7, 0.3);
        let obj = |p: &[f64]| -0.5 * lam * p[0] * p[0] * ux + p[0] * up;
        let (v, phi) = hamiltonian_sup(&obj, &ControlSet::Unbounded { dim: 1 }, Sense::Maximize).unwrap();
        assert!((phi[0] - up / (lam * ux)).abs() < 1e-12);
        assert!((v - up * up / (2.0 * lam * ux)).abs() < 1e-12);
        let eps = 0.25;
        let dv = 1.3;
        let obj = |p: &[f64]| p[0] * dv + eps * p[0] * p[0];
        let (v, phi) = hamiltonian_sup(&obj, &ControlSet::Unbounded { dim: 1 }, Sense::Minimize).unwrap();
        assert!((phi[0] + dv / (2.0 * eps)).abs() < 1e-12);
        assert!((v + dv * dv / (4.0 * eps)).abs() < 1e-12);
        assert!(matches!(hamiltonian_sup(&obj, &ControlSet::Unbounded { dim: 1 }, Sense::Maximize), Err(Error::UnboundedHamiltonian(_))));
    }

    #[test]
    fn sense_mirrors() {
        let obj = |p: &[f64]| -(p[0] - 0.3).powi(2) - (p[1] + 0.2).powi(2) + 0.5 * p[0] * p[1];
        let neg = |p: &[f64]| -obj(p);
        let set = ControlSet::Unbounded { dim: 2 };
        let (a, pa) = hamiltonian_sup(&obj, &set, Sense::Maximize).unwrap();
        let (b, pb) = hamiltonian_sup(&neg, &set, Sense::Minimize).unwrap();
        assert_eq!(a, -b);
        assert_eq!(pa, pb);
    }

    #[test]
    fn box_and_linear() {
        let obj = |p: &[f64]| -2.0 * p[0];
        let (v, phi) = hamiltonian_sup(&obj, &ControlSet::Box { lo: vec![0.0], hi: vec![1.0] }, Sense::Minimize).unwrap();
        assert_eq!(phi, vec![1.0]);
        assert_eq!(v, -2.0);
        let flat = |_: &[f64]| 4.0;
        assert_eq!(hamiltonian_sup(&flat, &ControlSet::Unbounded { dim: 1 }, Sense::Maximize).unwrap().0, 4.0);
    }

    fn frozen_problem(c: f64) -> ControlProblem {
        let coeffs = FnCoefficients {
            n: 1,
            d: 1,
            m: 0,
            drift: Box::new(|_, _, _, o| o[0] = 0.0),
            diffusion: Box::new(|_, o| o[0] = 0.0),
            diffusion_grad: Box::new(|_, o| o[0] = 0.0),
            lipschitz: Some(0.0),
            bounded: true,
        };
        ControlProblem {
            coeffs: Arc::new(coeffs),
            terminal: Arc::new(move |y| c + y[0]),
            tc: TimeChange::lookahead(0.25, 1.0).unwrap(),
            control_set: ControlSet::Unbounded { dim: 0 },
            sense: Sense::Maximize,
            lift: LiftRule::Ito,
        }
    }

    #[test]
    fn mc_frozen_state() {
        let p = frozen_problem(1.5);
        let fine = sample_brownian(&make_uniform_grid(1.0, 64 * 2).unwrap(), 1, 3).unwrap();
        let est = mc_value(&p, &ConstantControl(vec![]), 8, &[0.25], &fine, &McConfig::new(50, 2, 9)).unwrap();
        assert_eq!(est.mean, 1.75);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn martingale_state_has_no_drift() {
        let mut p = frozen_problem(0.0);
        p.coeffs = Arc::new(FnCoefficients::additive(1));
        p.tc = TimeChange::identity(1.0);
        let fine = sample_brownian(&make_uniform_grid(1.0, 128 * 2).unwrap(), 1, 3).unwrap();
        let cand = crate::funcito::StateOnly { g: crate::causal::ScalarFn::coordinate(1, 0), noise_dim: 1 };
        let r = martingale_drift_test(&cand, &p, &ConstantControl(vec![]), 0, &[0.0], &[0, 32, 64, 128], &fine, 16, 16, &McConfig::new(0, 2, 5)).unwrap();
        for iv in r {
            assert!(iv.mean.abs() <= 4.0 * iv.stderr + 1e-12, "{iv:?}");
        }
    }

    #[test]
    fn static_problem_residuals() {
        let p = frozen_problem(0.0);
        let g = make_uniform_grid(1.0, 64).unwrap();
        let w = Arc::new(sample_brownian(&g, 1, 1).unwrap());
        let cand = crate::funcito::StateOnly { g: crate::causal::ScalarFn::coordinate(1, 0), noise_dim: 1 };
        let probes: Vec<Probe> = (0..5).map(|i| Probe { t: 0.1 * i as f64, y: vec![i as f64], y_terminal: vec![i as f64], w: w.clone() }).collect();
        let r = hjb_residuals(&cand, &p, &probes, ResidualOptions::default(), Some(1)).unwrap();
        assert_eq!(r.max_parabolic, 0.0);
        assert_eq!(r.max_transport, 0.0);
        assert_eq!(r.max_terminal, 0.0);
    }
}
