//! Insider trading with full knowledge of `W`, an independent noise `B`
//! and quadratic transaction costs `εφ²`. Closed forms only.
//!
//! State `(x, Φ, w)`; the candidate is
//! `u = x + (W(T) - w) Φ + c ∫_t^T (W(T) - W(s))² ds`.
//! With `φ ↦ φ ∂_Φ u - εφ²` maximized the parabolic equation forces
//! `c = 1/(4ε)`; the coefficient `3/(4ε)` is kept for comparison.

use serde::{Deserialize, Serialize};

use super::{knots_between, scalar};
use crate::error::{invalid, Result};
use crate::grid_paths::{make_uniform_grid, sample_brownian_keyed, SamplePath};
use crate::hjb::{hamiltonian_sup, median, ControlSet, Sense};
use crate::quad::trapezoid;
use crate::rng::keyed_rng;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsiderParams {
    pub epsilon: f64,
    pub sigma0: f64,
    pub horizon: f64,
}

impl Default for InsiderParams {
    fn default() -> Self {
        Self { epsilon: 0.5, sigma0: 0.3, horizon: 1.0 }
    }
}

impl InsiderParams {
    pub fn new(epsilon: f64, sigma0: f64, horizon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && sigma0 > 0.0 && horizon > 0.0) {
            return invalid("ε, σ₀ and T must be positive");
        }
        Ok(Self { epsilon, sigma0, horizon })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InsiderCoefficient {
    /// `1/(4ε)`.
    Consistent,
    /// `3/(4ε)`.
    Printed,
}

impl InsiderCoefficient {
    pub fn value(self, p: &InsiderParams) -> f64 {
        match self {
            Self::Consistent => 0.25 / p.epsilon,
            Self::Printed => 0.75 / p.epsilon,
        }
    }
}

/// `∫_t^T (W(T) - W(s))² ds` by the trapezoid rule on the path knots.
pub fn squared_gap_integral(w: &SamplePath, t: f64) -> f64 {
    let big_t = w.grid().horizon();
    let wt = w.get(w.len() - 1, 0);
    let knots = knots_between(w, t, big_t);
    let v: Vec<f64> = knots.iter().map(|&s| (wt - w.coord_at(s, 0)).powi(2)).collect();
    trapezoid(&knots, &v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsiderDerivs {
    pub value: f64,
    pub dt: f64,
    pub dx: f64,
    pub dxx: f64,
    pub dphi: f64,
    pub dw: f64,
}

pub fn insider_candidate(t: f64, x: f64, phi: f64, wcur: f64, w: &SamplePath, p: &InsiderParams, coef: InsiderCoefficient) -> Result<InsiderDerivs> {
    scalar(w)?;
    let c = coef.value(p);
    let wt = w.get(w.len() - 1, 0);
    let gap = wt - w.coord_at(t, 0);
    Ok(InsiderDerivs {
        value: x + (wt - wcur) * phi + c * squared_gap_integral(w, t),
        dt: -c * gap * gap,
        dx: 1.0,
        dxx: 0.0,
        dphi: wt - wcur,
        dw: -phi,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsiderResidual {
    pub t: f64,
    pub parabolic: f64,
    pub transport: f64,
    pub terminal: f64,
    pub optimal_control: f64,
}

/// Residuals at `(t, x, Φ, W(t))`: `∂_t u + sup_φ {φ ∂_Φ u - εφ²} + ½σ₀²Φ² ∂²_x u`,
/// `Φ ∂_x u + ∂_w u` and `u(T, x, Φ, W(T)) - x`.
pub fn insider_residual(t: f64, x: f64, phi: f64, w: &SamplePath, p: &InsiderParams, coef: InsiderCoefficient) -> Result<InsiderResidual> {
    let wcur = w.coord_at(t, 0);
    let dv = insider_candidate(t, x, phi, wcur, w, p, coef)?;
    let eps = p.epsilon;
    let obj = |c: &[f64]| c[0] * dv.dphi - eps * c[0] * c[0] + 0.5 * p.sigma0 * p.sigma0 * phi * phi * dv.dxx;
    let (ham, arg) = hamiltonian_sup(&obj, &ControlSet::Unbounded { dim: 1 }, Sense::Maximize)?;
    let big_t = p.horizon;
    let wend = w.get(w.len() - 1, 0);
    let end = insider_candidate(big_t, x, phi, wend, w, p, coef)?;
    Ok(InsiderResidual { t, parabolic: dv.dt + ham, transport: phi * dv.dx + dv.dw, terminal: end.value - x, optimal_control: arg[0] })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsiderReport {
    pub coefficient: InsiderCoefficient,
    pub probes: Vec<InsiderResidual>,
    pub max_parabolic: f64,
    pub median_parabolic: f64,
    pub max_transport: f64,
    pub max_terminal: f64,
}

/// Residuals at `count` random probes, each on its own driver sample.
pub fn insider_check(p: &InsiderParams, coef: InsiderCoefficient, count: usize, steps: usize, seed: u64) -> Result<InsiderReport> {
    let grid = make_uniform_grid(p.horizon, steps)?;
    let probes: Vec<InsiderResidual> = (0..count as u64)
        .map(|i| {
            let w = sample_brownian_keyed(&grid, 1, seed, i)?;
            let mut rng = keyed_rng(seed, i, 99);
            let t = rng.gen::<f64>() * p.horizon;
            let x: f64 = rng.sample(StandardNormal);
            let phi: f64 = rng.sample(StandardNormal);
            insider_residual(t, x, phi, &w, p, coef)
        })
        .collect::<Result<_>>()?;
    let par: Vec<f64> = probes.iter().map(|r| r.parabolic.abs()).collect();
    Ok(InsiderReport {
        coefficient: coef,
        max_parabolic: par.iter().copied().fold(0.0, f64::max),
        median_parabolic: median(&par),
        max_transport: probes.iter().map(|r| r.transport.abs()).fold(0.0, f64::max),
        max_terminal: probes.iter().map(|r| r.terminal.abs()).fold(0.0, f64::max),
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_paths::sample_brownian;

    #[test]
    fn consistent_coefficient_solves_the_system() {
        let p = InsiderParams::default();
        let r = insider_check(&p, InsiderCoefficient::Consistent, 100, 500, 3).unwrap();
        assert_eq!(r.max_transport, 0.0);
        assert_eq!(r.max_terminal, 0.0);
        assert!(r.max_parabolic < 1e-12);
        let bad = insider_check(&p, InsiderCoefficient::Printed, 100, 500, 3).unwrap();
        assert!(bad.max_parabolic > 1e-3);
    }

    #[test]
    fn value_matches_pathwise_optimum() {
        // Y¹(T) - ε∫φ² = x + Φ(W(T)-W(t)) + ∫ (φ (W(T)-W(s)) - εφ²) ds after
        // averaging out B; optimize the integrand pointwise on a grid.
        let p = InsiderParams::default();
        let g = make_uniform_grid(1.0, 2000).unwrap();
        let w = sample_brownian(&g, 1, 12).unwrap();
        let (x, phi, k) = (0.4, -0.8, 600);
        let t = g.t(k);
        let wt = w.get(2000, 0);
        let mut best = x + phi * (wt - w.get(k, 0));
        for j in k..2000 {
            let gap = |i: usize| wt - w.get(i, 0);
            let f = |i: usize| {
                let c = gap(i) / (2.0 * p.epsilon);
                c * gap(i) - p.epsilon * c * c
            };
            best += 0.5 * g.dt(j) * (f(j) + f(j + 1));
        }
        let v = insider_candidate(t, x, phi, w.get(k, 0), &w, &p, InsiderCoefficient::Consistent).unwrap().value;
        assert!((v - best).abs() < 1e-12);
    }

    #[test]
    fn terminal_time_is_trivial() {
        let p = InsiderParams::default();
        let g = make_uniform_grid(1.0, 10).unwrap();
        let w = sample_brownian(&g, 1, 1).unwrap();
        let r = insider_residual(1.0, 2.0, 0.5, &w, &p, InsiderCoefficient::Printed).unwrap();
        assert_eq!(r.parabolic, 0.0);
        assert_eq!(r.terminal, 0.0);
    }
}
