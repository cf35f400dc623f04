//! Exponential utility of a frontrunner who sees the price `Δ` ahead and
//! trades with temporary price impact `Λ`.
//!
//! State `y = (x, Φ, s)`: marked-to-market wealth, shares held, price.
//! `b = (-Λφ²/2, φ, 0)`, `f = (Φ, 0, 1)`, `g(y) = -exp(-x)`,
//! `τ(t) = (t + Δ) ∧ T`. The candidate value is
//!
//! ```text
//! u = -exp(-(x - Φ s + h(t, Φ, w, z)))
//! h = Φ W(τ(t)) + (1/2Λ) ∫ (W(τ(t)) - W(u))² du - ½ Υ(t) C² + (Δ/2Λ) Ω(t)
//! C = Φ + (1/Λ) ∫ (W(τ(t)) - W(u)) du
//! ```
//!
//! with the integrals over the lookahead window, split into the part read
//! from the initial segment `w` on `[0, Δ]` and the part read from `z = W∘τ`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{knots_between, scalar};
use crate::causal::PathView;
use crate::error::{invalid, Result};
use crate::funcito::{StateDerivs, StateFunctional};
use crate::grid_paths::{make_uniform_grid, sample_brownian_keyed, SamplePath};
use crate::hjb::{ControlProblem, ControlSet, FeedbackControl, Probe, Sense};
use crate::quad::{adaptive, trapezoid};
use crate::rde::{ControlSource, FnCoefficients};
use crate::rng::keyed_rng;
use crate::roughpath::LiftRule;
use crate::timechange::{time_changed_path, TimeChange};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontrunnerParams {
    pub lambda: f64,
    pub delta: f64,
    pub horizon: f64,
    pub phi0: f64,
}

impl Default for FrontrunnerParams {
    fn default() -> Self {
        Self { lambda: 1.0, delta: 0.1, horizon: 1.0, phi0: 0.0 }
    }
}

impl FrontrunnerParams {
    pub fn new(lambda: f64, delta: f64, horizon: f64, phi0: f64) -> Result<Self> {
        if !(lambda > 0.0 && horizon > 0.0 && delta > 0.0 && delta < horizon && phi0.is_finite()) {
            return invalid("need Λ > 0 and 0 < Δ < T");
        }
        Ok(Self { lambda, delta, horizon, phi0 })
    }

    pub fn tc(&self) -> TimeChange {
        TimeChange::lookahead(self.delta, self.horizon).expect("validated parameters")
    }

    /// `T - Δ`, where `τ'` jumps.
    pub fn kink(&self) -> f64 {
        self.horizon - self.delta
    }

    /// True when `Δ` is a whole number of steps of the uniform `steps` grid.
    pub fn aligned(&self, steps: usize) -> bool {
        let r = self.delta * steps as f64 / self.horizon;
        (r - r.round()).abs() < 1e-9
    }
}

/// `Υ(t) = (Λ/Δ) / (1 + (√Λ/Δ) coth((T - τ(t))/√Λ))`, zero once `τ(t) = T`.
pub fn upsilon(t: f64, p: &FrontrunnerParams) -> f64 {
    let sl = p.lambda.sqrt();
    let x = (p.horizon - (t + p.delta).min(p.horizon)) / sl;
    let th = x.tanh();
    (p.lambda / p.delta) * th / (th + sl / p.delta)
}

/// `Υ'` from the Riccati identity, left derivative at `T - Δ`.
pub fn upsilon_prime(t: f64, p: &FrontrunnerParams) -> f64 {
    if t > p.kink() {
        return 0.0;
    }
    let u = upsilon(t, p);
    let a = p.delta * u / p.lambda - 1.0;
    -a * a + u * u / p.lambda
}

/// `Ω(t) = ∫_{τ(t)}^T du / (1 + (Δ/√Λ) tanh((T - u)/√Λ))`.
pub fn omega(t: f64, p: &FrontrunnerParams) -> f64 {
    let sl = p.lambda.sqrt();
    let k = p.delta / sl;
    let a = (t + p.delta).min(p.horizon);
    adaptive(a, p.horizon, 1e-13, |u| 1.0 / (1.0 + k * ((p.horizon - u) / sl).tanh()))
}

/// `Ω'(t) = ΔΥ(t)/Λ - 1`, left derivative at `T - Δ`.
pub fn omega_prime(t: f64, p: &FrontrunnerParams) -> f64 {
    if t > p.kink() {
        return 0.0;
    }
    p.delta * upsilon(t, p) / p.lambda - 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityDefects {
    pub upsilon: f64,
    pub omega: f64,
    pub points: usize,
    pub h: f64,
}

/// Max defect of `Υ' = -(ΔΥ/Λ - 1)² + Υ²/Λ` and `Ω' = ΔΥ/Λ - 1` with
/// central differences of step `h` at `points` equispaced times in
/// `(0, T - Δ)`.
pub fn upsilon_omega_identities(p: &FrontrunnerParams, points: usize, h: f64) -> IdentityDefects {
    let mut out = IdentityDefects { upsilon: 0.0, omega: 0.0, points, h };
    let kink = p.kink();
    for i in 0..points {
        let t = kink * (i as f64 + 0.5) / points as f64;
        if t - h < 0.0 || t + h > kink {
            continue;
        }
        let du = (upsilon(t + h, p) - upsilon(t - h, p)) / (2.0 * h);
        let dom = (omega(t + h, p) - omega(t - h, p)) / (2.0 * h);
        let u = upsilon(t, p);
        let a = p.delta * u / p.lambda - 1.0;
        out.upsilon = out.upsilon.max((du + a * a - u * u / p.lambda).abs());
        out.omega = out.omega.max((dom - a).abs());
    }
    out
}

/// Window quantities at time `t`: `W(τ(t))`, `W(t)` and the integrals of
/// `W(τ(t)) - W(u)` and its square over the lookahead window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub top: f64,
    pub now: f64,
    pub first: f64,
    pub second: f64,
}

/// Reads the window from `w` on `[0, Δ]` and `z` stopped at `t`. The `z`
/// part covers `[(t - Δ) ∨ 0, t]` in the time of `z`.
pub fn window(p: &FrontrunnerParams, t: f64, init: &SamplePath, z: &PathView) -> Result<Window> {
    scalar(init)?;
    let del = init.grid().horizon();
    if (del - p.delta).abs() > 1e-9 * p.horizon {
        return invalid("initial segment must end at Δ");
    }
    let wd = init.get(init.len() - 1, 0);
    let zt = z.coord(t, 0);
    let top = wd + zt;
    let now = if t <= del { init.coord_at(t, 0) } else { wd + z.coord(t - del, 0) };
    let mut first = 0.0;
    let mut second = 0.0;
    if t < del {
        let knots = knots_between(init, t, del);
        let v: Vec<f64> = knots.iter().map(|&u| top - init.coord_at(u, 0)).collect();
        let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
        first += trapezoid(&knots, &v);
        second += trapezoid(&knots, &v2);
    }
    let lo = (t - del).max(0.0);
    if t > lo {
        let knots = knots_between(z.raw(), lo, t);
        let v: Vec<f64> = knots.iter().map(|&r| zt - z.coord(r, 0)).collect();
        let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
        first += trapezoid(&knots, &v);
        second += trapezoid(&knots, &v2);
    }
    Ok(Window { top, now, first, second })
}

/// The candidate value functional. `ablate_transport` drops the `-Φ s`
/// term that the transport equation forces.
#[derive(Clone, Copy, Debug)]
pub struct FrontrunnerCandidate {
    pub p: FrontrunnerParams,
    pub ablate_transport: bool,
}

impl FrontrunnerCandidate {
    pub fn new(p: FrontrunnerParams) -> Self {
        Self { p, ablate_transport: false }
    }
}

impl StateFunctional for FrontrunnerCandidate {
    fn state_dim(&self) -> usize {
        3
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn derivatives(&self, t: f64, y: &[f64], init: &SamplePath, z: &PathView) -> Result<StateDerivs> {
        if y.len() != 3 || z.dim() != 1 {
            return invalid("frontrunner state is (x, Φ, s) with scalar noise");
        }
        let p = &self.p;
        let (lam, del) = (p.lambda, p.delta);
        let (x, phi, s) = (y[0], y[1], y[2]);
        let win = window(p, t, init, z)?;
        let ups = upsilon(t, p);
        let c = phi + win.first / lam;
        let h = phi * win.top + win.second / (2.0 * lam) - 0.5 * ups * c * c + del / (2.0 * lam) * omega(t, p);
        let tr = if self.ablate_transport { 0.0 } else { 1.0 };
        let e = x - tr * phi * s + h;
        let q = (-e).exp();
        let delta = win.top - win.now;
        let dh = -delta * delta / (2.0 * lam) - 0.5 * upsilon_prime(t, p) * c * c + ups * c * delta / lam + del / (2.0 * lam) * omega_prime(t, p);
        let k = 1.0 - del * ups / lam;
        let (h_z, h_zz) = (k * c, k * del / lam);
        let ge = [1.0, win.top - ups * c - tr * s, -tr * phi];
        let he = [0.0, 0.0, 0.0, 0.0, -ups, -tr, 0.0, -tr, 0.0];
        let ez = [0.0, k, 0.0];
        let mut out = StateDerivs::zeros(-q, 3, 1);
        out.dt = q * dh;
        for i in 0..3 {
            out.grad_y[i] = q * ge[i];
            for j in 0..3 {
                out.hess_y[i * 3 + j] = q * (he[i * 3 + j] - ge[i] * ge[j]);
            }
            out.mixed_yz[i] = q * (ez[i] - ge[i] * h_z);
        }
        out.grad_z[0] = q * h_z;
        out.hess_z[0] = q * (h_zz - h_z * h_z);
        Ok(out)
    }
}

/// `W(t)` as read from the split `(w, z)`; probes and initial states use
/// it for the price coordinate.
pub fn price_at(p: &FrontrunnerParams, t: f64, init: &SamplePath, z: &PathView) -> Result<f64> {
    Ok(window(p, t, init, z)?.now)
}

/// The time-zero value for a given initial segment `w` on `[0, Δ]`.
pub fn frontrunner_value_t0(p: &FrontrunnerParams, init: &SamplePath) -> Result<f64> {
    scalar(init)?;
    if (init.grid().horizon() - p.delta).abs() > 1e-9 * p.horizon || init.grid().start() != 0.0 {
        return invalid("initial segment must live on [0, Δ]");
    }
    let (lam, del) = (p.lambda, p.delta);
    let wd = init.get(init.len() - 1, 0);
    let times = init.grid().times();
    let v: Vec<f64> = (0..init.len()).map(|k| wd - init.get(k, 0)).collect();
    let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
    let a1 = trapezoid(times, &v);
    let a2 = trapezoid(times, &v2);
    let sl = lam.sqrt();
    let denom = del / lam + 1.0 / (sl * ((p.horizon - del) / sl).tanh());
    let lead = p.phi0 + a1 / lam;
    let expo = -p.phi0 * (wd - init.get(0, 0)) - a2 / (2.0 * lam) + 0.5 * lead * lead / denom - del / (2.0 * lam) * omega(0.0, p);
    Ok(-expo.exp())
}

pub fn frontrunner_coefficients(p: &FrontrunnerParams) -> FnCoefficients {
    let lam = p.lambda;
    FnCoefficients {
        n: 3,
        d: 1,
        m: 1,
        drift: Box::new(move |_, _, phi, out| {
            out[0] = -0.5 * lam * phi[0] * phi[0];
            out[1] = phi[0];
            out[2] = 0.0;
        }),
        diffusion: Box::new(|y, out| {
            out[0] = y[1];
            out[1] = 0.0;
            out[2] = 1.0;
        }),
        diffusion_grad: Box::new(|_, out| {
            out.fill(0.0);
            out[1] = 1.0;
        }),
        lipschitz: Some(1.0),
        bounded: false,
    }
}

pub fn frontrunner_problem(p: &FrontrunnerParams) -> ControlProblem {
    ControlProblem {
        coeffs: Arc::new(frontrunner_coefficients(p)),
        terminal: Arc::new(|y| -(-y[0]).exp()),
        tc: p.tc(),
        control_set: ControlSet::Unbounded { dim: 1 },
        sense: Sense::Maximize,
        lift: LiftRule::Ito,
    }
}

/// `φ*(t) = (1/Λ)[W(τ(t)) - W(t) - Υ(t)(Φ + (1/Λ)∫_t^{τ(t)} (W(τ(t)) - W(u)) du)]`.
pub fn optimal_speed(p: &FrontrunnerParams, t: f64, phi: f64, win: &Window) -> f64 {
    (win.top - win.now - upsilon(t, p) * (phi + win.first / p.lambda)) / p.lambda
}

/// The optimal feedback rule on the solver grid.
#[derive(Clone, Copy, Debug)]
pub struct FrontrunnerControl {
    pub p: FrontrunnerParams,
}

struct BoundFrontrunner<'a> {
    p: &'a FrontrunnerParams,
    w: &'a SamplePath,
    prefix: Vec<f64>,
    ahead: Vec<usize>,
    ups: Vec<f64>,
}

impl ControlSource for BoundFrontrunner<'_> {
    fn dim(&self) -> usize {
        1
    }
    fn control(&self, k: usize, _t: f64, y: &[f64]) -> Vec<f64> {
        let g = self.w.grid();
        let j = self.ahead[k];
        let top = self.w.get(j, 0);
        let first = (g.t(j) - g.t(k)) * top - (self.prefix[j] - self.prefix[k]);
        let win = Window { top, now: self.w.get(k, 0), first, second: 0.0 };
        vec![(win.top - win.now - self.ups[k] * (y[1] + win.first / self.p.lambda)) / self.p.lambda]
    }
}

impl FeedbackControl for FrontrunnerControl {
    fn dim(&self) -> usize {
        1
    }
    fn bind<'a>(&'a self, w: &'a SamplePath) -> Box<dyn ControlSource + 'a> {
        let g = w.grid();
        let times = g.times();
        let mut prefix = Vec::with_capacity(times.len());
        let mut acc = 0.0;
        prefix.push(0.0);
        for k in 0..g.steps() {
            acc += 0.5 * g.dt(k) * (w.get(k, 0) + w.get(k + 1, 0));
            prefix.push(acc);
        }
        let tol = 1e-9 * g.mesh();
        let ahead = times
            .iter()
            .map(|&t| {
                let tau = (t + self.p.delta).min(self.p.horizon);
                times.partition_point(|&s| s <= tau + tol) - 1
            })
            .collect();
        let ups = times.iter().map(|&t| upsilon(t, &self.p)).collect();
        Box::new(BoundFrontrunner { p: &self.p, w, prefix, ahead, ups })
    }
}

/// `count` residual probes on independent driver samples on a uniform
/// `steps` grid: `t` uniform in `[0, T)` away from `T - Δ`, `x` and `Φ`
/// standard normal, `s = W(t)`. The terminal state uses `s = W(T)`.
pub fn frontrunner_probes(p: &FrontrunnerParams, count: usize, steps: usize, seed: u64) -> Result<Vec<Probe>> {
    if !p.aligned(steps) {
        return invalid("Δ must be a whole number of grid steps");
    }
    let grid = make_uniform_grid(p.horizon, steps)?;
    let tc = p.tc();
    (0..count as u64)
        .map(|i| {
            let w = Arc::new(sample_brownian_keyed(&grid, 1, seed, i)?);
            let mut rng = keyed_rng(seed, i, 99);
            let t = loop {
                let t: f64 = rng.gen::<f64>() * p.horizon;
                if (t - p.kink()).abs() > 1e-3 {
                    break t;
                }
            };
            let x: f64 = rng.sample(StandardNormal);
            let phi: f64 = rng.sample(StandardNormal);
            let init = crate::timechange::initial_segment(&w, &tc)?;
            let (z, _) = time_changed_path(&w, &tc)?;
            let s = price_at(p, t, &init, &PathView::new(&z, t)?)?;
            let st = price_at(p, p.horizon, &init, &PathView::new(&z, p.horizon)?)?;
            Ok(Probe { t, y: vec![x, phi, s], y_terminal: vec![x, phi, st], w })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_paths::sample_brownian;
    use crate::hjb::{hjb_residuals, ResidualOptions, TransportMode};
    use crate::timechange::initial_segment;

    fn goldens() -> serde_json::Value {
        serde_json::from_str(include_str!("../../fixtures/goldens.json")).unwrap()
    }

    /// `Ω` via its antiderivative `√Λ (X - k log(cosh X + k sinh X)) / (1 - k²)`.
    fn omega_closed(t: f64, p: &FrontrunnerParams) -> f64 {
        let sl = p.lambda.sqrt();
        let k = p.delta / sl;
        let x = ((p.horizon - t - p.delta) / sl).max(0.0);
        sl * (x - k * (x.cosh() + k * x.sinh()).ln()) / (1.0 - k * k)
    }

    #[test]
    fn golden_values() {
        for case in goldens()["frontrunner"].as_array().unwrap() {
            let p = FrontrunnerParams::new(case["lambda"].as_f64().unwrap(), case["delta"].as_f64().unwrap(), case["horizon"].as_f64().unwrap(), 0.0).unwrap();
            for pt in case["points"].as_array().unwrap() {
                let t = pt["t"].as_f64().unwrap();
                assert!((upsilon(t, &p) - pt["upsilon"].as_f64().unwrap()).abs() < 1e-14);
                assert!((omega(t, &p) - pt["omega"].as_f64().unwrap()).abs() < 1e-12);
                assert!((omega(t, &p) - omega_closed(t, &p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forced_limits_and_monotonicity() {
        let p = FrontrunnerParams::default();
        for t in [0.9, 0.95, 1.0] {
            assert_eq!(upsilon(t, &p), 0.0);
            assert_eq!(omega(t, &p), 0.0);
        }
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let o = omega(i as f64 * 0.02, &p);
            assert!(o <= prev);
            prev = o;
        }
    }

    #[test]
    fn identities_second_order() {
        let p = FrontrunnerParams::default();
        let a = upsilon_omega_identities(&p, 50, 1e-5);
        assert!(a.upsilon < 1e-5 && a.omega < 1e-5, "{a:?}");
        let c1 = upsilon_omega_identities(&p, 20, 1e-2);
        let c2 = upsilon_omega_identities(&p, 20, 5e-3);
        let r = c1.upsilon / c2.upsilon;
        assert!(r > 3.0 && r < 5.0, "{r}");
    }

    fn split(w: &SamplePath, p: &FrontrunnerParams) -> (SamplePath, SamplePath) {
        let tc = p.tc();
        (initial_segment(w, &tc).unwrap(), time_changed_path(w, &tc).unwrap().0)
    }

    #[test]
    fn value_formulas_agree() {
        let g = make_uniform_grid(1.0, 400).unwrap();
        for (phi0, seed) in [(0.0, 1), (0.7, 2), (-1.2, 3)] {
            let p = FrontrunnerParams { phi0, ..Default::default() };
            let w = sample_brownian(&g, 1, seed).unwrap();
            let (init, z) = split(&w, &p);
            let view = PathView::new(&z, 0.0).unwrap();
            let s = price_at(&p, 0.0, &init, &view).unwrap();
            let u = FrontrunnerCandidate::new(p).derivatives(0.0, &[0.0, phi0, s], &init, &view).unwrap().value;
            assert!((u - frontrunner_value_t0(&p, &init).unwrap()).abs() < 1e-10);
        }
        let p = FrontrunnerParams::default();
        let flat = SamplePath::constant(g, &[0.0]);
        let (init, _) = split(&flat, &p);
        let golden = goldens()["frontrunner"][0]["value_t0_flat"].as_f64().unwrap();
        assert!((frontrunner_value_t0(&p, &init).unwrap() - golden).abs() < 1e-12);
    }

    #[test]
    fn terminal_and_residuals() {
        let p = FrontrunnerParams::default();
        let probes = frontrunner_probes(&p, 40, 200, 11).unwrap();
        let r = hjb_residuals(&FrontrunnerCandidate::new(p), &frontrunner_problem(&p), &probes, ResidualOptions { transport: TransportMode::Plain, drop_z_trace: false }, Some(11)).unwrap();
        assert!(r.max_parabolic < 1e-10, "{}", r.max_parabolic);
        assert!(r.max_transport < 1e-12);
        assert!(r.max_terminal < 1e-12);
        let a = hjb_residuals(&FrontrunnerCandidate::new(p), &frontrunner_problem(&p), &probes, ResidualOptions { transport: TransportMode::Plain, drop_z_trace: true }, None).unwrap();
        assert!(a.max_parabolic > 1e-3);
        let cand = FrontrunnerCandidate { p, ablate_transport: true };
        let b = hjb_residuals(&cand, &frontrunner_problem(&p), &probes, ResidualOptions { transport: TransportMode::Plain, drop_z_trace: false }, None).unwrap();
        assert!(b.max_transport > 1e-3);
    }

    #[test]
    fn control_matches_candidate_argmax() {
        let p = FrontrunnerParams::default();
        let g = make_uniform_grid(1.0, 200).unwrap();
        let w = sample_brownian(&g, 1, 5).unwrap();
        let (init, z) = split(&w, &p);
        let ctrl = FrontrunnerControl { p };
        let bound = ctrl.bind(&w);
        for k in [0usize, 7, 50, 150, 185, 200] {
            let t = g.t(k);
            let view = PathView::new(&z, t).unwrap();
            let win = window(&p, t, &init, &view).unwrap();
            let a = optimal_speed(&p, t, 0.3, &win);
            let b = bound.control(k, t, &[0.0, 0.3, 0.0])[0];
            assert!((a - b).abs() < 1e-12, "{k}: {a} {b}");
        }
        let flat = SamplePath::constant(g.clone(), &[0.0]);
        assert_eq!(ctrl.bind(&flat).control(3, g.t(3), &[0.0, 0.0, 0.0]), vec![0.0]);
    }
}
