//! Time changes `τ` of the driving noise, the time-changed path `W∘τ`,
//! the split into the initial segment `W` on `[0, τ(0)]`, the generalized
//! inverse and the concatenation map.
//!
//! Derivatives use the left-derivative convention at kinks, so for the
//! lookahead `τ(t) = (t + Δ) ∧ T` we have `τ' = 1` on `[0, T - Δ]` and `0`
//! after.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid_paths::{SamplePath, TimeGrid};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeChangeKind {
    /// `τ(t) = (t + Δ) ∧ T`.
    Lookahead { delta: f64 },
    /// `τ ≡ T`.
    Full,
    Identity,
    /// Piecewise linear through `(t, τ(t))` points.
    Table { points: Vec<(f64, f64)> },
    /// Caller-supplied smooth `τ` and `τ'`.
    #[serde(skip)]
    Smooth { tau: ScalarFn, dtau: ScalarFn },
}

impl fmt::Debug for TimeChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lookahead { delta } => write!(f, "Lookahead({delta})"),
            Self::Full => write!(f, "Full"),
            Self::Identity => write!(f, "Identity"),
            Self::Table { points } => write!(f, "Table({points:?})"),
            Self::Smooth { .. } => write!(f, "Smooth"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeChange {
    pub kind: TimeChangeKind,
    pub horizon: f64,
}

impl TimeChange {
    pub fn lookahead(delta: f64, horizon: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta <= horizon) {
            return invalid(format!("lookahead {delta} must lie in [0, T]"));
        }
        Ok(Self { kind: TimeChangeKind::Lookahead { delta }, horizon })
    }
    pub fn full(horizon: f64) -> Self {
        Self { kind: TimeChangeKind::Full, horizon }
    }
    pub fn identity(horizon: f64) -> Self {
        Self { kind: TimeChangeKind::Identity, horizon }
    }
    pub fn table(points: Vec<(f64, f64)>, horizon: f64) -> Result<Self> {
        if points.len() < 2 || points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return invalid("table needs at least two points with increasing times");
        }
        Ok(Self { kind: TimeChangeKind::Table { points }, horizon })
    }
    pub fn smooth(tau: impl Fn(f64) -> f64 + Send + Sync + 'static, dtau: impl Fn(f64) -> f64 + Send + Sync + 'static, horizon: f64) -> Self {
        Self { kind: TimeChangeKind::Smooth { tau: Arc::new(tau), dtau: Arc::new(dtau) }, horizon }
    }

    pub fn tau(&self, t: f64) -> f64 {
        let h = self.horizon;
        match &self.kind {
            TimeChangeKind::Lookahead { delta } => (t + delta).min(h),
            TimeChangeKind::Full => h,
            TimeChangeKind::Identity => t,
            TimeChangeKind::Table { points } => table_eval(points, t),
            TimeChangeKind::Smooth { tau, .. } => tau(t),
        }
    }

    /// `τ'(t)`, left derivative at kinks (right derivative at `t = 0`).
    pub fn dtau(&self, t: f64) -> f64 {
        let h = self.horizon;
        match &self.kind {
            TimeChangeKind::Lookahead { delta } => {
                if t <= h - delta {
                    1.0
                } else {
                    0.0
                }
            }
            TimeChangeKind::Full => 0.0,
            TimeChangeKind::Identity => 1.0,
            TimeChangeKind::Table { points } => {
                let i = points.iter().position(|p| p.0 >= t).unwrap_or(points.len() - 1).clamp(1, points.len() - 1);
                (points[i].1 - points[i - 1].1) / (points[i].0 - points[i - 1].0)
            }
            TimeChangeKind::Smooth { dtau, .. } => dtau(t),
        }
    }

    /// Points where `τ'` jumps.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            TimeChangeKind::Lookahead { delta } if *delta > 0.0 => vec![self.horizon - delta],
            TimeChangeKind::Table { points } => points[1..points.len() - 1].iter().map(|p| p.0).collect(),
            _ => Vec::new(),
        }
    }

    /// `min{u : τ(u) ≥ s}`.
    pub fn inverse(&self, s: f64) -> f64 {
        let h = self.horizon;
        match &self.kind {
            TimeChangeKind::Lookahead { delta } => (s - delta).max(0.0),
            TimeChangeKind::Full => 0.0,
            TimeChangeKind::Identity => s,
            _ => {
                if self.tau(0.0) >= s {
                    return 0.0;
                }
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.tau(mid) >= s {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    }

    /// `(τ⁻¹)'(s) = 1 / τ'(τ⁻¹(s))`, infinite where `τ'` vanishes.
    pub fn inverse_derivative(&self, s: f64) -> f64 {
        let d = self.dtau(self.inverse(s));
        if d > 0.0 {
            1.0 / d
        } else {
            f64::INFINITY
        }
    }

    /// True when every grid point is mapped onto a grid point.
    pub fn maps_grid_to_grid(&self, grid: &TimeGrid) -> bool {
        grid.times().iter().all(|&t| grid.index_of(self.tau(t)).is_some())
    }

    pub fn delta(&self) -> Option<f64> {
        match self.kind {
            TimeChangeKind::Lookahead { delta } => Some(delta),
            _ => None,
        }
    }
}

fn table_eval(points: &[(f64, f64)], t: f64) -> f64 {
    if t <= points[0].0 {
        return points[0].1;
    }
    for w in points.windows(2) {
        if t <= w[1].0 {
            let th = (t - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 + th * (w[1].1 - w[0].1);
        }
    }
    points.last().unwrap().1
}

/// Smallest multiple of `base_steps` whose uniform grid on `[0, T]`
/// contains `Δ` as a whole number of steps (searched up to 1000 multiples).
pub fn aligned_steps(horizon: f64, base_steps: usize, tc: &TimeChange) -> usize {
    let Some(delta) = tc.delta() else { return base_steps };
    for q in 1..=1000 {
        let n = base_steps * q;
        let r = delta * n as f64 / horizon;
        if (r - r.round()).abs() < 1e-9 {
            return n;
        }
    }
    base_steps
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeChangeReport {
    pub checked_points: usize,
    pub max_derivative_error: f64,
}

/// Checks monotonicity, `τ ≥ id`, `τ(T) = T` on the grid and, away from
/// kinks, `τ'` against central differences (relative 1e-4).
pub fn validate_timechange(tc: &TimeChange, grid: &TimeGrid) -> Result<TimeChangeReport> {
    let h = tc.horizon;
    let mut bad = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for &t in grid.times() {
        let v = tc.tau(t);
        if !v.is_finite() || v < prev - 1e-14 {
            bad.push(format!("not monotone at t={t}"));
        }
        if v < t - 1e-12 {
            bad.push(format!("τ({t})={v} < t"));
        }
        if v > h + 1e-12 {
            bad.push(format!("τ({t})={v} > T"));
        }
        prev = v;
    }
    if (tc.tau(h) - h).abs() > 1e-12 {
        bad.push(format!("τ(T)={} differs from T={h}", tc.tau(h)));
    }
    let eps = 1e-6 * h;
    let kinks = tc.kinks();
    let mut worst: f64 = 0.0;
    for &t in grid.times() {
        if t - eps < 0.0 || t + eps > h || kinks.iter().any(|k| (k - t).abs() <= 2.0 * eps) {
            continue;
        }
        let fd = (tc.tau(t + eps) - tc.tau(t - eps)) / (2.0 * eps);
        let d = tc.dtau(t);
        if d < 0.0 {
            bad.push(format!("τ'({t}) negative"));
        }
        let err = (fd - d).abs() / d.abs().max(1.0);
        worst = worst.max(err);
        if err > 1e-4 {
            bad.push(format!("τ'({t})={d} but finite difference gives {fd}"));
        }
    }
    if !bad.is_empty() {
        let shown: Vec<_> = bad.iter().take(10).cloned().collect();
        return Err(Error::Validation(format!("{} violations: {}", bad.len(), shown.join("; "))));
    }
    Ok(TimeChangeReport { checked_points: grid.len(), max_derivative_error: worst })
}

/// `t ↦ W(τ(t)) - W(τ(0))` on the grid of `w`. The flag reports whether
/// any `τ(t_k)` fell between grid points and was interpolated.
pub fn time_changed_path(w: &SamplePath, tc: &TimeChange) -> Result<(SamplePath, bool)> {
    let grid = w.grid();
    let d = w.dim();
    let (base, mut off) = w.at(tc.tau(grid.start()))?;
    let mut values = Vec::with_capacity(grid.len() * d);
    for &t in grid.times() {
        let (v, o) = w.at(tc.tau(t))?;
        off |= o;
        values.extend(v.iter().zip(&base).map(|(a, b)| a - b));
    }
    Ok((SamplePath::new(grid.clone(), d, values)?, off))
}

/// `W` on `[0, τ(0)]` (grid points below `τ(0)` plus `τ(0)` itself).
pub fn initial_segment(w: &SamplePath, tc: &TimeChange) -> Result<SamplePath> {
    let grid = w.grid();
    let t0 = tc.tau(grid.start());
    let t0 = grid.index_of(t0).map_or(t0, |k| grid.t(k));
    let mut times: Vec<f64> = grid.times().iter().copied().filter(|&t| t < t0).collect();
    times.push(t0);
    let mut values = Vec::with_capacity(times.len() * w.dim());
    for &t in &times {
        values.extend(w.at(t)?.0);
    }
    SamplePath::new(TimeGrid::from_times(times)?, w.dim(), values)
}

/// `(W on [0, τ(0)], W∘τ)`.
pub fn split_initial_segment(w: &SamplePath, tc: &TimeChange) -> Result<(SamplePath, SamplePath)> {
    Ok((initial_segment(w, tc)?, time_changed_path(w, tc)?.0))
}

/// `W^{∘τ,t}(s) = W(τ(s)) - W(τ(t))` on the grid points `s ≥ t_k`.
pub fn causal_remainder(w: &SamplePath, tc: &TimeChange, k: usize) -> Result<SamplePath> {
    let (z, _) = time_changed_path(w, tc)?;
    let steps = z.grid().steps();
    if k > steps {
        return invalid("split index beyond grid");
    }
    let mut out = z.restrict(k, steps)?;
    let base = z.value(k).to_vec();
    let d = z.dim();
    for (j, v) in out.values_mut().iter_mut().enumerate() {
        *v -= base[j % d];
    }
    Ok(out)
}

/// The concatenation `(w ⊔_t z)(s) = w∘τ(s ∧ t) + z(s ∨ t)` with
/// `w∘τ(s) = w(τ(s)) - w(τ(0))`, where `w` is known at least on `[0, τ(t)]`
/// and `z` lives on the grid points from `t = t_k` onwards.
pub fn concatenate_at(w: &SamplePath, tc: &TimeChange, z: &SamplePath, k: usize) -> Result<SamplePath> {
    let grid = w.grid();
    if k > grid.steps() {
        return invalid("split index beyond grid");
    }
    let tail = grid.sub(k, grid.steps())?;
    if z.grid() != &tail || z.dim() != w.dim() {
        return invalid("z must live on the grid points from t onwards with the same dimension");
    }
    let d = w.dim();
    let base = w.at(tc.tau(grid.start()))?.0;
    let mut values = Vec::with_capacity(grid.len() * d);
    let wt = w.at(tc.tau(grid.t(k)))?.0;
    for (j, &s) in grid.times().iter().enumerate() {
        if j <= k {
            let v = w.at(tc.tau(s))?.0;
            values.extend(v.iter().zip(&base).map(|(a, b)| a - b));
        } else {
            let zv = z.value(j - k);
            values.extend((0..d).map(|i| wt[i] - base[i] + zv[i]));
        }
    }
    SamplePath::new(grid.clone(), d, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_paths::{make_uniform_grid, sample_brownian};

    #[test]
    fn canonical_examples_validate() {
        let g = make_uniform_grid(1.0, 100).unwrap();
        assert!(validate_timechange(&TimeChange::lookahead(0.1, 1.0).unwrap(), &g).is_ok());
        assert!(validate_timechange(&TimeChange::full(1.0), &g).is_ok());
        assert!(validate_timechange(&TimeChange::identity(1.0), &g).is_ok());
        let half = TimeChange::smooth(|t| t / 2.0, |_| 0.5, 1.0);
        assert!(matches!(validate_timechange(&half, &g), Err(Error::Validation(_))));
        let wrong = TimeChange::smooth(|t| 1.0 - (1.0 - t).powi(2), |t| 2.0 * (1.0 - t) + 0.01, 1.0);
        assert!(validate_timechange(&wrong, &g).is_err());
    }

    #[test]
    fn derivative_convention() {
        let tc = TimeChange::lookahead(0.25, 1.0).unwrap();
        assert_eq!(tc.dtau(0.5), 1.0);
        assert_eq!(tc.dtau(0.75), 1.0);
        assert_eq!(tc.dtau(0.8), 0.0);
        assert_eq!(tc.kinks(), vec![0.75]);
    }

    #[test]
    fn inverses() {
        let tc = TimeChange::lookahead(0.1, 1.0).unwrap();
        assert_eq!(tc.inverse(0.05), 0.0);
        assert!((tc.inverse(0.6) - 0.5).abs() < 1e-15);
        let id = TimeChange::identity(1.0);
        assert_eq!(id.inverse(0.3), 0.3);
        let sm = TimeChange::smooth(|t| 1.0 - (1.0 - t).powi(2), |t| 2.0 * (1.0 - t), 1.0);
        let s = 0.7;
        assert!((sm.tau(sm.inverse(s)) - s).abs() < 1e-12);
        let tab = TimeChange::table(vec![(0.0, 0.2), (0.5, 0.6), (1.0, 1.0)], 1.0).unwrap();
        assert!((tab.inverse(0.4) - 0.25).abs() < 1e-12);
        assert_eq!(tab.inverse(0.1), 0.0);
    }

    #[test]
    fn time_changed_path_cases() {
        let g = make_uniform_grid(1.0, 40).unwrap();
        let w = sample_brownian(&g, 1, 4).unwrap();
        let (z, off) = time_changed_path(&w, &TimeChange::identity(1.0)).unwrap();
        assert!(!off);
        assert_eq!(z.values(), w.values());
        let (z, _) = time_changed_path(&w, &TimeChange::full(1.0)).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let tc = TimeChange::lookahead(0.25, 1.0).unwrap();
        let (z, off) = time_changed_path(&w, &tc).unwrap();
        assert!(!off);
        for k in 30..=40 {
            assert_eq!(z.get(k, 0), w.get(40, 0) - w.get(10, 0));
        }
        let (_, off) = time_changed_path(&w, &TimeChange::lookahead(0.11, 1.0).unwrap()).unwrap();
        assert!(off);
    }

    #[test]
    fn split_and_reconstruct() {
        let g = make_uniform_grid(1.0, 40).unwrap();
        let w = sample_brownian(&g, 2, 4).unwrap();
        let tc = TimeChange::lookahead(0.25, 1.0).unwrap();
        let (init, z) = split_initial_segment(&w, &tc).unwrap();
        assert_eq!(init.len(), 11);
        for k in 0..=10 {
            assert_eq!(init.value(k), w.value(k));
        }
        for k in 0..=40 {
            for i in 0..2 {
                let lhs = w.get((k + 10).min(40), i);
                assert!((lhs - (init.get(10, i) + z.get(k, i))).abs() < 1e-15);
            }
        }
        let (init, _) = split_initial_segment(&w, &TimeChange::identity(1.0)).unwrap();
        assert_eq!(init.len(), 1);
        assert_eq!(init.value(0), &[0.0, 0.0]);
    }

    #[test]
    fn concatenation_identity() {
        let g = make_uniform_grid(1.0, 40).unwrap();
        let w = sample_brownian(&g, 1, 9).unwrap();
        let tc = TimeChange::lookahead(0.25, 1.0).unwrap();
        let (full, _) = time_changed_path(&w, &tc).unwrap();
        for k in [0usize, 7, 30, 40] {
            let z = causal_remainder(&w, &tc, k).unwrap();
            let c = concatenate_at(&w, &tc, &z, k).unwrap();
            for j in 0..=40 {
                assert!((c.get(j, 0) - full.get(j, 0)).abs() < 1e-12);
            }
        }
    }
}
