//! Causal path functionals `F(t, X) = F(t, X_t)` and their causal
//! (Dupire) derivatives.
//!
//! A functional reads its input through a [`PathView`]: the sampled path
//! stopped at `t`, optionally with a vertical bump `X_t + h 1_{[t,T]}`.
//! Point reads at `s ≥ t` return the post-jump value; integrals over
//! `[0, t]` only see the left limit.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid_paths::SamplePath;
use crate::quad::piecewise_gl5;
use crate::rng::keyed_rng;
use crate::timechange::{TimeChange, TimeChangeKind};

/// Default relative bump for first vertical derivatives.
pub const BUMP_FIRST: f64 = 1e-5;
/// Default relative bump for second vertical derivatives.
pub const BUMP_SECOND: f64 = 1e-3;
/// Relative move between successive step halvings that flags a
/// horizontal derivative as unstable.
pub const INSTABILITY_RATIO: f64 = 0.1;

/// Stopped (and possibly bumped) view of a sampled path.
#[derive(Clone, Debug)]
pub struct PathView<'a> {
    path: &'a SamplePath,
    stop: f64,
    bump: Vec<f64>,
}

impl<'a> PathView<'a> {
    pub fn new(path: &'a SamplePath, stop: f64) -> Result<Self> {
        let g = path.grid();
        if !(stop >= g.start() - 1e-12 && stop <= g.horizon() + 1e-12) {
            return Err(Error::OutOfDomain(format!("time {stop} outside path domain")));
        }
        let stop = stop.clamp(g.start(), g.horizon());
        Ok(Self { path, stop, bump: vec![0.0; path.dim()] })
    }

    /// Adds `h 1_{[t,T]}` to the view.
    pub fn bumped(&self, h: &[f64]) -> Self {
        let mut out = self.clone();
        for (b, v) in out.bump.iter_mut().zip(h) {
            *b += v;
        }
        out
    }

    pub fn is_bumped(&self) -> bool {
        self.bump.iter().any(|&b| b != 0.0)
    }

    pub fn stop(&self) -> f64 {
        self.stop
    }

    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    pub fn horizon(&self) -> f64 {
        self.path.grid().horizon()
    }

    /// The unstopped underlying path. Reading it past `stop` anticipates.
    pub fn raw(&self) -> &SamplePath {
        self.path
    }

    /// `X_t(t)` including the bump.
    pub fn current(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.path.coord_at(self.stop, i) + self.bump[i]).collect()
    }

    pub fn coord(&self, s: f64, i: usize) -> f64 {
        if s >= self.stop {
            self.path.coord_at(self.stop, i) + self.bump[i]
        } else {
            self.path.coord_at(s.max(self.path.grid().start()), i)
        }
    }

    pub fn at(&self, s: f64) -> Vec<f64> {
        (0..self.dim()).map(|i| self.coord(s, i)).collect()
    }

    /// Grid points strictly before `stop`, then `stop`.
    pub fn knots(&self) -> Vec<f64> {
        let times = self.path.grid().times();
        let mut k: Vec<f64> = times[..times.partition_point(|&t| t < self.stop)].to_vec();
        k.push(self.stop);
        k
    }
}

/// Smooth scalar map on `ℝ^d` with gradient and Hessian.
#[derive(Clone)]
pub struct ScalarFn {
    pub dim: usize,
    value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    grad: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    hess: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl std::fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarFn(dim={})", self.dim)
    }
}

impl ScalarFn {
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        hess: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, value: Arc::new(value), grad: Arc::new(grad), hess: Arc::new(hess) }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, move |_| c, move |_| vec![0.0; dim], move |_| vec![0.0; dim * dim])
    }

    /// `|x|²`.
    pub fn square(dim: usize) -> Self {
        Self::new(
            dim,
            |x| x.iter().map(|v| v * v).sum(),
            |x| x.iter().map(|v| 2.0 * v).collect(),
            move |_| (0..dim * dim).map(|e| if e / dim == e % dim { 2.0 } else { 0.0 }).collect(),
        )
    }

    /// `x_i`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        Self::new(
            dim,
            move |x| x[i],
            move |_| (0..dim).map(|j| if j == i { 1.0 } else { 0.0 }).collect(),
            move |_| vec![0.0; dim * dim],
        )
    }

    /// `Σ sin(x_i) + x_i² / 2`, smooth with non-trivial derivatives of all orders.
    pub fn sine_quadratic(dim: usize) -> Self {
        Self::new(
            dim,
            |x| x.iter().map(|v| v.sin() + 0.5 * v * v).sum(),
            |x| x.iter().map(|v| v.cos() + v).collect(),
            move |x| (0..dim * dim).map(|e| if e / dim == e % dim { 1.0 - x[e / dim].sin() } else { 0.0 }).collect(),
        )
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }
    pub fn hess(&self, x: &[f64]) -> Vec<f64> {
        (self.hess)(x)
    }
}

pub trait CausalFunctional: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// `F(t, view)` where `t ≥ view.stop()`.
    fn value(&self, t: f64, x: &PathView) -> Result<f64>;
    fn time_derivative(&self, _t: f64, _x: &PathView) -> Option<f64> {
        None
    }
    fn gradient(&self, _t: f64, _x: &PathView) -> Option<Vec<f64>> {
        None
    }
    fn hessian(&self, _t: f64, _x: &PathView) -> Option<Vec<f64>> {
        None
    }
    /// False if the functional cannot be evaluated on bumped (cadlag) input.
    fn accepts_jumps(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBundle {
    pub dt: f64,
    pub grad: Vec<f64>,
    /// Row-major `d×d`.
    pub hess: Vec<f64>,
}

fn bump_scale(x: &PathView, rel: f64) -> f64 {
    let norm = x.current().iter().map(|v| v * v).sum::<f64>().sqrt();
    rel * (1.0 + norm)
}

fn check_vertical(f: &dyn CausalFunctional, x: &SamplePath) -> Result<()> {
    if !f.accepts_jumps() {
        return Err(Error::UnsupportedFunctional(format!("{} rejects bumped paths", f.name())));
    }
    if x.dim() != f.dim() {
        return invalid("path dimension does not match the functional");
    }
    Ok(())
}

/// Central-difference causal space derivative at `t`.
pub fn vertical_derivative(f: &dyn CausalFunctional, t: f64, x: &SamplePath, h: Option<f64>) -> Result<Vec<f64>> {
    check_vertical(f, x)?;
    let view = PathView::new(x, t)?;
    let h = h.unwrap_or_else(|| bump_scale(&view, BUMP_FIRST));
    if !(h > 0.0) {
        return invalid("bump must be positive");
    }
    let d = x.dim();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = h;
        let up = f.value(t, &view.bumped(&e))?;
        e[i] = -h;
        let dn = f.value(t, &view.bumped(&e))?;
        out.push((up - dn) / (2.0 * h));
    }
    Ok(out)
}

/// Second causal space derivative by the symmetric three-point stencil
/// (four-point cross stencil off the diagonal).
pub fn vertical_hessian(f: &dyn CausalFunctional, t: f64, x: &SamplePath, h: Option<f64>) -> Result<Vec<f64>> {
    check_vertical(f, x)?;
    let view = PathView::new(x, t)?;
    let h = h.unwrap_or_else(|| bump_scale(&view, BUMP_SECOND));
    if !(h > 0.0) {
        return invalid("bump must be positive");
    }
    let d = x.dim();
    let at = |pairs: &[(usize, f64)]| -> Result<f64> {
        let mut e = vec![0.0; d];
        for &(i, s) in pairs {
            e[i] += s * h;
        }
        f.value(t, &view.bumped(&e))
    };
    let f0 = f.value(t, &view)?;
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        out[i * d + i] = (at(&[(i, 1.0)])? - 2.0 * f0 + at(&[(i, -1.0)])?) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, 1.0), (j, 1.0)])? - at(&[(i, 1.0), (j, -1.0)])? - at(&[(i, -1.0), (j, 1.0)])? + at(&[(i, -1.0), (j, -1.0)])?)
                / (4.0 * h * h);
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizontalEstimate {
    /// Richardson-extrapolated value from the two smallest steps.
    pub value: f64,
    pub steps: [f64; 3],
    /// One-sided quotients at `h`, `h/2`, `h/4`.
    pub quotients: [f64; 3],
    pub unstable: bool,
}

/// One-sided `(F(t+h, X_t) - F(t, X_t)) / h` at three halvings of `h`.
/// The estimate is flagged unstable when a halving moves it by more than
/// 10%.
pub fn horizontal_derivative(f: &dyn CausalFunctional, t: f64, x: &SamplePath, h: f64) -> Result<HorizontalEstimate> {
    let view = PathView::new(x, t)?;
    let horizon = view.horizon();
    if t >= horizon {
        return Err(Error::OutOfDomain("no horizontal derivative at the horizon".into()));
    }
    if !(h > 0.0) {
        return invalid("step must be positive");
    }
    let h = h.min(horizon - t);
    let f0 = f.value(t, &view)?;
    let steps = [h, h / 2.0, h / 4.0];
    let mut q = [0.0; 3];
    for (qi, s) in q.iter_mut().zip(steps) {
        *qi = (f.value(t + s, &view)? - f0) / s;
    }
    let moved = |a: f64, b: f64| (b - a).abs() > INSTABILITY_RATIO * b.abs() + 1e-12;
    Ok(HorizontalEstimate {
        value: 2.0 * q[2] - q[1],
        steps,
        quotients: q,
        unstable: moved(q[0], q[1]) || moved(q[1], q[2]),
    })
}

/// Numeric `(D, ∇, ∇²)` with the default bumps and a horizontal step `h`.
pub fn numeric_bundle(f: &dyn CausalFunctional, t: f64, x: &SamplePath, h: f64) -> Result<(DerivativeBundle, bool)> {
    let dt = horizontal_derivative(f, t, x, h)?;
    Ok((
        DerivativeBundle { dt: dt.value, grad: vertical_derivative(f, t, x, None)?, hess: vertical_hessian(f, t, x, None)? },
        dt.unstable,
    ))
}

/// Analytic bundle when the functional provides all three derivatives.
pub fn analytic_bundle(f: &dyn CausalFunctional, t: f64, x: &SamplePath) -> Result<Option<DerivativeBundle>> {
    let view = PathView::new(x, t)?;
    Ok(match (f.time_derivative(t, &view), f.gradient(t, &view), f.hessian(t, &view)) {
        (Some(dt), Some(grad), Some(hess)) => Some(DerivativeBundle { dt, grad, hess }),
        _ => None,
    })
}

/// `|a - b| ≤ tol · max(1, |b|)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub trials: usize,
    pub max_change: f64,
    pub pass: bool,
}

/// Perturbs the path strictly after `t` in `trials` random ways and checks
/// that `eval` does not move by more than 1e-12.
pub fn causality_audit(eval: &dyn Fn(f64, &PathView) -> Result<f64>, t: f64, x: &SamplePath, trials: usize, seed: u64) -> Result<AuditReport> {
    let base = x.with_knot(t)?;
    let reference = eval(t, &PathView::new(&base, t)?)?;
    let d = base.dim();
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let mut rng = keyed_rng(seed, trial as u64, 7);
        let mut pert = base.clone();
        let times = base.grid().times().to_vec();
        let vals = pert.values_mut();
        for (k, &s) in times.iter().enumerate() {
            if s > t {
                for i in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    vals[k * d + i] += z;
                }
            }
        }
        let v = eval(t, &PathView::new(&pert, t)?)?;
        worst = worst.max((v - reference).abs());
    }
    Ok(AuditReport { trials, max_change: worst, pass: worst <= 1e-12 })
}

/// Audits the value and every analytic derivative the functional provides.
pub fn audit_functional(f: &dyn CausalFunctional, t: f64, x: &SamplePath, trials: usize, seed: u64) -> Result<AuditReport> {
    let mut evals: Vec<Box<dyn Fn(f64, &PathView) -> Result<f64> + '_>> = vec![Box::new(|t, v: &PathView| f.value(t, v))];
    let probe = PathView::new(x, t)?;
    if f.time_derivative(t, &probe).is_some() {
        evals.push(Box::new(|t, v: &PathView| Ok(f.time_derivative(t, v).unwrap())));
    }
    if let Some(g) = f.gradient(t, &probe) {
        for i in 0..g.len() {
            evals.push(Box::new(move |t, v: &PathView| Ok(f.gradient(t, v).unwrap()[i])));
        }
    }
    if let Some(hs) = f.hessian(t, &probe) {
        for e in 0..hs.len() {
            evals.push(Box::new(move |t, v: &PathView| Ok(f.hessian(t, v).unwrap()[e])));
        }
    }
    let mut out = AuditReport { trials, max_change: 0.0, pass: true };
    for ev in &evals {
        let r = causality_audit(ev.as_ref(), t, x, trials, seed)?;
        out.max_change = out.max_change.max(r.max_change);
        out.pass &= r.pass;
    }
    Ok(out)
}

/// `F(t, X) = f(X(t))`.
pub struct PointFunctional {
    pub f: ScalarFn,
}

impl CausalFunctional for PointFunctional {
    fn name(&self) -> &str {
        "point"
    }
    fn dim(&self) -> usize {
        self.f.dim
    }
    fn value(&self, t: f64, x: &PathView) -> Result<f64> {
        Ok(self.f.value(&x.at(t)))
    }
    fn time_derivative(&self, _t: f64, _x: &PathView) -> Option<f64> {
        Some(0.0)
    }
    fn gradient(&self, t: f64, x: &PathView) -> Option<Vec<f64>> {
        Some(self.f.grad(&x.at(t)))
    }
    fn hessian(&self, t: f64, x: &PathView) -> Option<Vec<f64>> {
        Some(self.f.hess(&x.at(t)))
    }
}

/// `F(t, X) = ∫_0^t g(X(s)) ds`.
pub struct RunningIntegral {
    pub g: ScalarFn,
}

impl CausalFunctional for RunningIntegral {
    fn name(&self) -> &str {
        "running_integral"
    }
    fn dim(&self) -> usize {
        self.g.dim
    }
    fn value(&self, t: f64, x: &PathView) -> Result<f64> {
        let knots = x.knots();
        Ok(piecewise_gl5(&knots, 0.0, t, |s| self.g.value(&x.at(s))))
    }
    fn time_derivative(&self, t: f64, x: &PathView) -> Option<f64> {
        Some(self.g.value(&x.at(t)))
    }
    fn gradient(&self, _t: f64, _x: &PathView) -> Option<Vec<f64>> {
        Some(vec![0.0; self.g.dim])
    }
    fn hessian(&self, _t: f64, _x: &PathView) -> Option<Vec<f64>> {
        Some(vec![0.0; self.g.dim * self.g.dim])
    }
}

/// Reconstruction of `f(W(τ(t)) - W(t))` from the time-changed path `X`
/// and the initial segment `w` on `[0, τ(0)]`:
/// `F(t, X, w) = f(X(t) - X(τ⁻¹(t ∨ τ(0))) + w(τ(0)) - w(t ∧ τ(0)))`.
/// Has a causal space derivative but in general no causal time derivative.
pub struct Reconstruction {
    pub f: ScalarFn,
    pub tc: TimeChange,
    pub initial: SamplePath,
}

impl Reconstruction {
    fn argument(&self, t: f64, x: &PathView) -> Vec<f64> {
        let tau0 = self.tc.tau(0.0);
        let u = self.tc.inverse(t.max(tau0));
        let w_end = self.initial.grid().horizon();
        (0..x.dim())
            .map(|i| x.coord(t, i) - x.coord(u, i) + self.initial.coord_at(w_end, i) - self.initial.coord_at(t.min(tau0).min(w_end), i))
            .collect()
    }
}

impl CausalFunctional for Reconstruction {
    fn name(&self) -> &str {
        "reconstruction"
    }
    fn dim(&self) -> usize {
        self.f.dim
    }
    fn value(&self, t: f64, x: &PathView) -> Result<f64> {
        Ok(self.f.value(&self.argument(t, x)))
    }
    fn gradient(&self, t: f64, x: &PathView) -> Option<Vec<f64>> {
        Some(self.f.grad(&self.argument(t, x)))
    }
    fn hessian(&self, t: f64, x: &PathView) -> Option<Vec<f64>> {
        Some(self.f.hess(&self.argument(t, x)))
    }
}

/// `F(t, X) = ∫_{τ⁻¹(t)}^t f(X(t) - X(u)) τ'(u) du` with `τ⁻¹(t) = 0`
/// for `t ≤ τ(0)`.
pub struct WindowedIntegral {
    pub f: ScalarFn,
    pub tc: TimeChange,
}

impl WindowedIntegral {
    pub fn new(f: ScalarFn, tc: TimeChange) -> Result<Self> {
        let flat = match &tc.kind {
            TimeChangeKind::Full => true,
            TimeChangeKind::Table { points } => points.windows(2).any(|w| w[1].1 <= w[0].1),
            _ => false,
        };
        if flat {
            return Err(Error::UnsupportedFunctional("windowed integral needs a strictly increasing time change".into()));
        }
        Ok(Self { f, tc })
    }

    fn knots(&self, x: &PathView) -> Vec<f64> {
        let mut k = x.knots();
        k.extend(self.tc.kinks());
        k.sort_by(f64::total_cmp);
        k
    }

    fn integrate(&self, t: f64, x: &PathView, g: impl Fn(&[f64]) -> f64) -> f64 {
        let xt = x.at(t);
        let a = self.tc.inverse(t);
        let knots = self.knots(x);
        let mut diff = vec![0.0; xt.len()];
        piecewise_gl5(&knots, a, t, |u| {
            let tu = self.tc.dtau(u);
            if tu == 0.0 {
                return 0.0;
            }
            for (i, d) in diff.iter_mut().enumerate() {
                *d = xt[i] - x.coord(u, i);
            }
            g(&diff) * tu
        })
    }
}

impl CausalFunctional for WindowedIntegral {
    fn name(&self) -> &str {
        "windowed_integral"
    }
    fn dim(&self) -> usize {
        self.f.dim
    }
    fn value(&self, t: f64, x: &PathView) -> Result<f64> {
        Ok(self.integrate(t, x, |v| self.f.value(v)))
    }
    fn time_derivative(&self, t: f64, x: &PathView) -> Option<f64> {
        let d = x.dim();
        let mut out = self.f.value(&vec![0.0; d]) * self.tc.dtau(t);
        if t >= self.tc.tau(0.0) && self.tc.inverse(t) < t {
            let u = self.tc.inverse(t);
            let chain = self.tc.dtau(u) * self.tc.inverse_derivative(t);
            let arg: Vec<f64> = (0..d).map(|i| x.coord(t, i) - x.coord(u, i)).collect();
            out -= self.f.value(&arg) * chain;
        }
        Some(out)
    }
    fn gradient(&self, t: f64, x: &PathView) -> Option<Vec<f64>> {
        Some((0..x.dim()).map(|i| self.integrate(t, x, |v| self.f.grad(v)[i])).collect())
    }
    fn hessian(&self, t: f64, x: &PathView) -> Option<Vec<f64>> {
        let d = x.dim();
        Some((0..d * d).map(|e| self.integrate(t, x, |v| self.f.hess(v)[e])).collect())
    }
}

/// `F(t, X) = X(T)`; anticipative, used to exercise the causality audit.
pub struct TerminalValue {
    pub dim: usize,
}

impl CausalFunctional for TerminalValue {
    fn name(&self) -> &str {
        "terminal_value"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _t: f64, x: &PathView) -> Result<f64> {
        let r = x.raw();
        Ok(r.get(r.len() - 1, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_paths::{make_uniform_grid, sample_brownian};

    fn line(value: f64) -> SamplePath {
        let g = make_uniform_grid(1.0, 100).unwrap();
        SamplePath::constant(g, &[value])
    }

    #[test]
    fn point_square() {
        let x = line(3.0);
        let f = PointFunctional { f: ScalarFn::square(1) };
        let g = vertical_derivative(&f, 0.4, &x, None).unwrap();
        let h = vertical_hessian(&f, 0.4, &x, None).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
        assert!((h[0] - 2.0).abs() < 1e-6);
        let dt = horizontal_derivative(&f, 0.4, &x, 1e-4).unwrap();
        assert_eq!(dt.value, 0.0);
        assert!(!dt.unstable);
    }

    #[test]
    fn running_integral_derivatives() {
        let x = line(2.0);
        let f = RunningIntegral { g: ScalarFn::square(1) };
        let dt = horizontal_derivative(&f, 0.5, &x, 1e-4).unwrap();
        assert!((dt.value - 4.0).abs() < 1e-4);
        let g = vertical_derivative(&f, 0.5, &x, None).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn bump_is_post_jump() {
        let x = line(1.0);
        let v = PathView::new(&x, 0.3).unwrap().bumped(&[0.5]);
        assert_eq!(v.coord(0.3, 0), 1.5);
        assert_eq!(v.coord(0.9, 0), 1.5);
        assert_eq!(v.coord(0.2, 0), 1.0);
    }

    #[test]
    fn audit_detects_anticipation() {
        let g = make_uniform_grid(1.0, 64).unwrap();
        let w = sample_brownian(&g, 1, 4).unwrap();
        let ant = TerminalValue { dim: 1 };
        assert!(!audit_functional(&ant, 0.3, &w, 5, 1).unwrap().pass);
        let pt = PointFunctional { f: ScalarFn::coordinate(1, 0) };
        assert!(audit_functional(&pt, 0.3, &w, 5, 1).unwrap().pass);
        let win = WindowedIntegral::new(ScalarFn::sine_quadratic(1), TimeChange::lookahead(0.25, 1.0).unwrap()).unwrap();
        assert!(audit_functional(&win, 0.61, &w, 5, 1).unwrap().pass);
    }

    #[test]
    fn windowed_constant_integrand() {
        let g = make_uniform_grid(1.0, 64).unwrap();
        let w = sample_brownian(&g, 1, 2).unwrap();
        let tc = TimeChange::lookahead(0.25, 1.0).unwrap();
        let f = WindowedIntegral::new(ScalarFn::constant(1, 2.0), tc).unwrap();
        let v = PathView::new(&w, 0.6).unwrap();
        assert!((f.value(0.6, &v).unwrap() - 2.0 * 0.25).abs() < 1e-14);
        assert_eq!(f.time_derivative(0.6, &v).unwrap(), 0.0);
        let v = PathView::new(&w, 0.1).unwrap();
        assert_eq!(f.time_derivative(0.1, &v).unwrap(), 2.0);
        assert!(WindowedIntegral::new(ScalarFn::constant(1, 1.0), TimeChange::full(1.0)).is_err());
    }

    #[test]
    fn windowed_numeric_matches_analytic() {
        let g = make_uniform_grid(1.0, 256).unwrap();
        let tc = TimeChange::lookahead(0.125, 1.0).unwrap();
        let f = WindowedIntegral::new(ScalarFn::sine_quadratic(2), tc).unwrap();
        let w = sample_brownian(&g, 2, 9).unwrap();
        for &t in &[0.05 + 0.3 / 256.0, 0.5 + 0.5 / 256.0, 0.93 + 0.4 / 256.0] {
            let ana = analytic_bundle(&f, t, &w).unwrap().unwrap();
            let (num, unstable) = numeric_bundle(&f, t, &w, 1e-5).unwrap();
            assert!(!unstable);
            assert!(rel_close(num.dt, ana.dt, 1e-5), "{t}: {} vs {}", num.dt, ana.dt);
            for (a, b) in num.grad.iter().zip(&ana.grad) {
                assert!(rel_close(*a, *b, 1e-5));
            }
            for (a, b) in num.hess.iter().zip(&ana.hess) {
                assert!(rel_close(*a, *b, 1e-5), "{a} vs {b}");
            }
            assert!((num.hess[1] - num.hess[2]).abs() < 1e-8);
        }
    }

    #[test]
    fn reconstruction_time_derivative_unstable() {
        let g = make_uniform_grid(1.0, 1000).unwrap();
        let tc = TimeChange::lookahead(0.1, 1.0).unwrap();
        let w = sample_brownian(&g, 1, 11).unwrap();
        let (init, z) = crate::timechange::split_initial_segment(&w, &tc).unwrap();
        let f = Reconstruction { f: ScalarFn::coordinate(1, 0), tc, initial: init };
        let flagged = (0..10)
            .filter(|i| horizontal_derivative(&f, 0.3 + 0.05 * *i as f64, &z, 8.0 / 1000.0).unwrap().unstable)
            .count();
        assert!(flagged >= 8, "{flagged}");
    }
}
