//! Functional Itô decomposition along RDE solutions.
//!
//! For `F(t, y, z)` evaluated along `(Y, W∘τ)`:
//!
//! ```text
//! F(T) - F(t0) = ∫ DF dλ + ∫ H dλ + ∫ ∇_y F f(Y) d𝐖 + ∫ ∇_z F dW∘τ
//! H = <∇_y F, b> + ½ [tr(fᵀ ∇²_y F f) + tr(∇²_z F) τ']
//! ```
//!
//! All terms are left-point sums on the solution grid. Second-derivative
//! pairings use the symmetric part of the lift block.

use serde::{Deserialize, Serialize};

use crate::causal::PathView;
use crate::error::{invalid, Error, Result};
use crate::grid_paths::SamplePath;
use crate::rde::{Coefficients, RdeSolution};
use crate::roughpath::RoughPath;
use crate::timechange::{split_initial_segment, TimeChange};

/// Value and derivatives of `F(t, y, z)` (and optionally of a separate
/// current-noise slot `w`). Matrices are row-major; `mixed_yz` is `n×d`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateDerivs {
    pub value: f64,
    pub dt: f64,
    pub grad_y: Vec<f64>,
    pub hess_y: Vec<f64>,
    pub grad_z: Vec<f64>,
    pub hess_z: Vec<f64>,
    pub mixed_yz: Vec<f64>,
    /// Euclidean derivatives in a separate `w(t)` slot; empty when the
    /// current noise value is part of `y`.
    pub grad_w: Vec<f64>,
    pub hess_w: Vec<f64>,
}

impl StateDerivs {
    /// All-zero derivatives with the right shapes.
    pub fn zeros(value: f64, n: usize, d: usize) -> Self {
        Self {
            value,
            dt: 0.0,
            grad_y: vec![0.0; n],
            hess_y: vec![0.0; n * n],
            grad_z: vec![0.0; d],
            hess_z: vec![0.0; d * d],
            mixed_yz: vec![0.0; n * d],
            grad_w: Vec::new(),
            hess_w: Vec::new(),
        }
    }
}

/// `F(t, y, z)` with `y ∈ ℝ^n` and `z` the time-changed noise path.
pub trait StateFunctional: Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// `init` is the noise on `[0, τ(0)]`, `z` the time-changed path stopped at `t`.
    fn derivatives(&self, t: f64, y: &[f64], init: &SamplePath, z: &PathView) -> Result<StateDerivs>;
}

/// `F(t, y, z) = g(y)` for a smooth `g`.
pub struct StateOnly {
    pub g: crate::causal::ScalarFn,
    pub noise_dim: usize,
}

impl StateFunctional for StateOnly {
    fn state_dim(&self) -> usize {
        self.g.dim
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn derivatives(&self, _t: f64, y: &[f64], _init: &SamplePath, _z: &PathView) -> Result<StateDerivs> {
        let mut out = StateDerivs::zeros(self.g.value(y), self.g.dim, self.noise_dim);
        out.grad_y = self.g.grad(y);
        out.hess_y = self.g.hess(y);
        Ok(out)
    }
}

fn check_shapes(dv: &StateDerivs, n: usize, d: usize) -> Result<()> {
    if dv.grad_y.len() != n || dv.grad_z.len() != d {
        return invalid("derivative shapes do not match the state and noise dimensions");
    }
    if dv.hess_y.len() != n * n || dv.hess_z.len() != d * d {
        return Err(Error::UnsupportedFunctional("second derivatives are missing".into()));
    }
    Ok(())
}

/// `⟨∇_y F, b⟩ + ½[tr(fᵀ ∇²_y F f) + tr(∇²_z F) τ']`; `f` is row-major `n×d`.
pub fn drift_h(dv: &StateDerivs, b: &[f64], f: &[f64], dtau: f64) -> Result<f64> {
    let n = dv.grad_y.len();
    let d = dv.grad_z.len();
    check_shapes(dv, n, d)?;
    if b.len() != n || f.len() != n * d {
        return invalid("coefficient shapes do not match the functional");
    }
    let mut h: f64 = dv.grad_y.iter().zip(b).map(|(g, b)| g * b).sum();
    let mut tr = 0.0;
    for j in 0..d {
        for a in 0..n {
            for c in 0..n {
                tr += f[a * d + j] * dv.hess_y[a * n + c] * f[c * d + j];
            }
        }
    }
    let trz: f64 = (0..d).map(|j| dv.hess_z[j * d + j]).sum();
    h += 0.5 * (tr + trz * dtau);
    Ok(h)
}

/// Left-point sum `Σ ⟨integrand(t_k), z(t_{k+1}) - z(t_k)⟩` from index `k0`.
/// `integrand` holds one `d`-vector per grid point.
pub fn ito_term(integrand: &[f64], z: &SamplePath, k0: usize) -> Result<f64> {
    let d = z.dim();
    if integrand.len() != z.len() * d {
        return invalid("integrand must hold one vector per grid point");
    }
    let mut s = crate::controlled::Compensated::default();
    for k in k0..z.grid().steps() {
        for i in 0..d {
            s.add(integrand[k * d + i] * (z.get(k + 1, i) - z.get(k, i)));
        }
    }
    Ok(s.value())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItoDecomposition {
    pub lhs: f64,
    pub time_term: f64,
    pub drift_term: f64,
    pub rough_term: f64,
    pub ito_term: f64,
    /// `Σ ⟨∇_{yz} F, ΔY ⊗ Δz⟩`; vanishes in the limit, not part of the sum.
    pub mixed_diagnostic: f64,
    pub residual: f64,
}

struct Along {
    derivs: Vec<StateDerivs>,
    z: SamplePath,
}

fn along(f: &dyn StateFunctional, sol: &RdeSolution, rp: &RoughPath, tc: &TimeChange) -> Result<Along> {
    let n = f.state_dim();
    let d = f.noise_dim();
    if sol.path.dim() != n || rp.dim() != d || sol.noise_dim != d {
        return invalid("functional, solution and rough path dimensions disagree");
    }
    if sol.path.grid() != rp.grid() {
        return invalid("solution and rough path must share a grid");
    }
    let (init, z) = split_initial_segment(rp.path(), tc)?;
    let grid = rp.grid();
    let mut derivs = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        if k < sol.t0_index {
            derivs.push(StateDerivs::zeros(0.0, n, d));
            continue;
        }
        let view = PathView::new(&z, grid.t(k))?;
        let dv = f.derivatives(grid.t(k), sol.path.value(k), &init, &view)?;
        check_shapes(&dv, n, d)?;
        if !dv.value.is_finite() {
            return Err(Error::OutOfDomain(format!("functional not finite at index {k}")));
        }
        derivs.push(dv);
    }
    Ok(Along { derivs, z })
}

/// Compensated rough integral `∫ ∇_y F f(Y) d𝐖` along the solution.
pub fn rough_term(f: &dyn StateFunctional, sol: &RdeSolution, c: &dyn Coefficients, rp: &RoughPath, tc: &TimeChange) -> Result<f64> {
    let a = along(f, sol, rp, tc)?;
    Ok(rough_sum(&a, sol, c, rp))
}

fn rough_sum(a: &Along, sol: &RdeSolution, c: &dyn Coefficients, rp: &RoughPath) -> f64 {
    let n = c.state_dim();
    let d = c.noise_dim();
    let mut fv = vec![0.0; n * d];
    let mut gv = vec![0.0; n * d * n];
    let mut sum = crate::controlled::Compensated::default();
    for k in sol.t0_index..rp.grid().steps() {
        let dv = &a.derivs[k];
        let y = sol.path.value(k);
        c.diffusion(y, &mut fv);
        c.diffusion_grad(y, &mut gv);
        let ww = rp.block(k);
        // ⟨∇F, f ΔW⟩
        for aa in 0..n {
            for j in 0..d {
                let dw = rp.path().get(k + 1, j) - rp.path().get(k, j);
                sum.add(dv.grad_y[aa] * fv[aa * d + j] * dw);
            }
        }
        for i in 0..d {
            for j in 0..d {
                let sym = 0.5 * (ww[i * d + j] + ww[j * d + i]);
                let full = ww[i * d + j];
                // ⟨∇²F, f Sym(𝕎) fᵀ⟩
                let mut s2 = 0.0;
                for aa in 0..n {
                    for bb in 0..n {
                        s2 += dv.hess_y[aa * n + bb] * fv[aa * d + i] * fv[bb * d + j];
                    }
                }
                // ⟨∇F, (∇f · f) 𝕎⟩
                let mut s3 = 0.0;
                for aa in 0..n {
                    let mut gf = 0.0;
                    for bb in 0..n {
                        gf += gv[(aa * d + j) * n + bb] * fv[bb * d + i];
                    }
                    s3 += dv.grad_y[aa] * gf;
                }
                sum.add(s2 * sym + s3 * full);
            }
        }
    }
    sum.value()
}

/// Assembles every term of the decomposition on the solution grid.
pub fn decompose(f: &dyn StateFunctional, sol: &RdeSolution, c: &dyn Coefficients, rp: &RoughPath, tc: &TimeChange) -> Result<ItoDecomposition> {
    let a = along(f, sol, rp, tc)?;
    let grid = rp.grid();
    let n = c.state_dim();
    let d = c.noise_dim();
    let m = sol.control_dim;
    let k0 = sol.t0_index;
    let steps = grid.steps();
    let mut bv = vec![0.0; n];
    let mut fv = vec![0.0; n * d];
    let mut time = crate::controlled::Compensated::default();
    let mut drift = crate::controlled::Compensated::default();
    let mut mixed = crate::controlled::Compensated::default();
    for k in k0..steps {
        let t = grid.t(k);
        let dt = grid.dt(k);
        let dv = &a.derivs[k];
        let y = sol.path.value(k);
        c.drift(t, y, &sol.controls[k * m..(k + 1) * m], &mut bv);
        c.diffusion(y, &mut fv);
        time.add(dv.dt * dt);
        drift.add(drift_h(dv, &bv, &fv, tc.dtau(t))? * dt);
        for aa in 0..n {
            let dy = sol.path.get(k + 1, aa) - y[aa];
            for j in 0..d {
                mixed.add(dv.mixed_yz[aa * d + j] * dy * (a.z.get(k + 1, j) - a.z.get(k, j)));
            }
        }
    }
    let integrand: Vec<f64> = a.derivs.iter().flat_map(|dv| dv.grad_z.iter().copied()).collect();
    let ito = ito_term(&integrand, &a.z, k0)?;
    let rough = rough_sum(&a, sol, c, rp);
    let lhs = a.derivs[steps].value - a.derivs[k0].value;
    let (time, drift) = (time.value(), drift.value());
    Ok(ItoDecomposition {
        lhs,
        time_term: time,
        drift_term: drift,
        rough_term: rough,
        ito_term: ito,
        mixed_diagnostic: mixed.value(),
        residual: lhs - (time + drift + rough + ito),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::ScalarFn;
    use crate::grid_paths::make_uniform_grid;
    use crate::rde::{solve_rde, ControlSignal, FnCoefficients};
    use crate::roughpath::{brownian_rough_path, LiftRule};

    fn additive_run(steps: usize, seed: u64) -> (RdeSolution, FnCoefficients, RoughPath) {
        let g = make_uniform_grid(1.0, steps).unwrap();
        let rp = brownian_rough_path(&g, 1, seed, 0, 4, LiftRule::Ito).unwrap();
        let c = FnCoefficients::additive(1);
        let sol = solve_rde(&c, &ControlSignal::zero(steps + 1, 0), &rp, 0, &[0.0]).unwrap();
        (sol, c, rp)
    }

    #[test]
    fn linear_functional_telescopes() {
        let (sol, c, rp) = additive_run(512, 3);
        let f = StateOnly { g: ScalarFn::coordinate(1, 0), noise_dim: 1 };
        let r = decompose(&f, &sol, &c, &rp, &TimeChange::identity(1.0)).unwrap();
        assert!(r.residual.abs() < 1e-13);
        assert!((r.rough_term - rp.path().get(512, 0)).abs() < 1e-13);
    }

    #[test]
    fn square_functional_ito_correction() {
        let (sol, c, rp) = additive_run(4096, 5);
        let f = StateOnly { g: ScalarFn::square(1), noise_dim: 1 };
        let r = decompose(&f, &sol, &c, &rp, &TimeChange::full(1.0)).unwrap();
        assert!((r.drift_term - 1.0).abs() < 1e-12);
        assert_eq!(r.ito_term, 0.0);
        assert!(r.residual.abs() < 0.1);
    }

    #[test]
    fn drift_h_hand_values() {
        let mut dv = StateDerivs::zeros(0.0, 2, 2);
        dv.hess_y = vec![2.0, 0.0, 0.0, 2.0];
        let eye = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(drift_h(&dv, &[0.0, 0.0], &eye, 1.0).unwrap(), 2.0);
        dv.hess_z = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(drift_h(&dv, &[0.0, 0.0], &eye, 0.0).unwrap(), 2.0);
        assert_eq!(drift_h(&dv, &[0.0, 0.0], &eye, 1.0).unwrap(), 3.0);
        dv.hess_y.clear();
        assert!(matches!(drift_h(&dv, &[0.0, 0.0], &eye, 1.0), Err(Error::UnsupportedFunctional(_))));
    }

    #[test]
    fn ito_term_constant_integrand() {
        let g = make_uniform_grid(1.0, 100).unwrap();
        let z = crate::grid_paths::sample_brownian(&g, 1, 1).unwrap();
        let v = ito_term(&vec![2.5; 101], &z, 0).unwrap();
        assert!((v - 2.5 * z.get(100, 0)).abs() < 1e-13);
    }
}
