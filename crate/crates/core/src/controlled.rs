//! Controlled paths and the compensated Riemann sum rough integral.
//!
//! A controlled path takes values in `ℝ^q`; for integration against a
//! `d`-dimensional rough path `q = n·d` and `Y(t)` is read as an `n×d`
//! matrix (row-major). The Gubinelli derivative is stored with layout
//! `yp[(c * d) + i] = ∂_i Y_c`, so for matrices `c = a * d + j`.
//!
//! ```text
//! ∫_s^t Y dX ≈ Σ_{[u,v]} Y(u) δX(u,v) + Y'(u) 𝕏(u,v)
//! (Y' 𝕏)_a = Σ_{i,j} ∂_i Y_{aj} 𝕏^{ij}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid_paths::{holder_over_pairs, SamplePath};
use crate::roughpath::{RoughPath, SecondLevel};

#[derive(Clone, Debug, PartialEq)]
pub struct ControlledPath {
    y: SamplePath,
    yp: Vec<f64>,
    d: usize,
}

/// A smooth map `ℝ^q → ℝ^p` with Jacobian (row-major `p×q`).
pub trait SmoothMap: Sync {
    fn out_dim(&self) -> usize;
    fn eval(&self, y: &[f64]) -> Vec<f64>;
    fn jacobian(&self, y: &[f64]) -> Vec<f64>;
}

impl ControlledPath {
    pub fn new(y: SamplePath, yp: Vec<f64>, d: usize) -> Result<Self> {
        if yp.len() != y.len() * y.dim() * d {
            return invalid(format!("Gubinelli derivative needs {} entries, got {}", y.len() * y.dim() * d, yp.len()));
        }
        Ok(Self { y, yp, d })
    }

    /// The rough path's base path controlled by itself, `Y' = I`.
    pub fn identity(x: &RoughPath) -> Self {
        let d = x.dim();
        let n = x.grid().len();
        let mut yp = vec![0.0; n * d * d];
        for k in 0..n {
            for i in 0..d {
                yp[k * d * d + i * d + i] = 1.0;
            }
        }
        Self { y: x.path().clone(), yp, d }
    }

    /// Constant path with zero derivative.
    pub fn constant(x: &RoughPath, value: &[f64]) -> Self {
        let y = SamplePath::constant(x.grid().clone(), value);
        let yp = vec![0.0; x.grid().len() * value.len() * x.dim()];
        Self { y, yp, d: x.dim() }
    }

    pub fn path(&self) -> &SamplePath {
        &self.y
    }
    pub fn noise_dim(&self) -> usize {
        self.d
    }
    pub fn value_dim(&self) -> usize {
        self.y.dim()
    }
    pub fn derivative(&self, k: usize) -> &[f64] {
        let w = self.y.dim() * self.d;
        &self.yp[k * w..(k + 1) * w]
    }

    /// `R(t_j, t_k) = δY - Y'(t_j) δX`.
    pub fn remainder(&self, x: &SamplePath, j: usize, k: usize) -> Vec<f64> {
        let q = self.y.dim();
        let dp = self.derivative(j);
        (0..q)
            .map(|c| {
                let mut r = self.y.get(k, c) - self.y.get(j, c);
                for i in 0..self.d {
                    r -= dp[c * self.d + i] * (x.get(k, i) - x.get(j, i));
                }
                r
            })
            .collect()
    }

    /// `|R|_{exponent}` over grid pairs (max-abs norm).
    pub fn remainder_holder(&self, x: &SamplePath, exponent: f64) -> f64 {
        holder_over_pairs(self.y.grid(), exponent, |j, k| max_abs(&self.remainder(x, j, k))).value
    }

    /// `|Y'|_{exponent}` over grid pairs.
    pub fn derivative_holder(&self, exponent: f64) -> f64 {
        holder_over_pairs(self.y.grid(), exponent, |j, k| {
            self.derivative(k).iter().zip(self.derivative(j)).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
        })
        .value
    }

    pub fn derivative_sup(&self) -> f64 {
        max_abs(&self.yp)
    }

    /// `(f(Y), ∇f(Y) Y')`.
    pub fn compose_smooth(&self, f: &dyn SmoothMap) -> Result<ControlledPath> {
        let q = self.y.dim();
        let p = f.out_dim();
        let n = self.y.len();
        let mut vals = Vec::with_capacity(n * p);
        let mut yp = vec![0.0; n * p * self.d];
        for k in 0..n {
            let y = self.y.value(k);
            let v = f.eval(y);
            if v.len() != p {
                return invalid("smooth map returned wrong dimension");
            }
            vals.extend_from_slice(&v);
            let jac = f.jacobian(y);
            let dp = self.derivative(k);
            for a in 0..p {
                for i in 0..self.d {
                    let mut s = 0.0;
                    for c in 0..q {
                        s += jac[a * q + c] * dp[c * self.d + i];
                    }
                    yp[k * p * self.d + a * self.d + i] = s;
                }
            }
        }
        ControlledPath::new(SamplePath::new(self.y.grid().clone(), p, vals)?, yp, self.d)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Neumaier compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    /// `∫_0^T Y dX`.
    pub value: Vec<f64>,
    /// Running integral at each partition point.
    pub running: Vec<Vec<f64>>,
    /// Local sewing bound for the whole interval.
    pub local_bound: f64,
    /// Actual `|∫ - Y(0)δX - Y'(0)𝕏|` over the whole interval.
    pub local_error: f64,
    pub beta: f64,
    /// False when `2α + β <= 1`; the bound is then not meaningful.
    pub reliable: bool,
}

/// Compensated term `Y(t_j) δX(t_j,t_k) + Y'(t_j) 𝕏(t_j,t_k)`.
fn germ(y: &ControlledPath, x: &RoughPath, j: usize, k: usize, out: &mut [f64]) {
    let d = x.dim();
    let n = out.len();
    let xx = x.second(j, k);
    let yv = y.y.value(j);
    let dp = y.derivative(j);
    for a in 0..n {
        let mut s = 0.0;
        for jj in 0..d {
            s += yv[a * d + jj] * (x.path().get(k, jj) - x.path().get(j, jj));
            for i in 0..d {
                s += dp[(a * d + jj) * d + i] * xx[i * d + jj];
            }
        }
        out[a] = s;
    }
}

/// Riemann zeta on reals `s > 1` by direct summation with an integral tail.
fn zeta(s: f64) -> f64 {
    let m = 1000;
    let head: f64 = (1..=m).map(|k| (k as f64).powf(-s)).sum();
    let mf = m as f64;
    head + mf.powf(1.0 - s) / (s - 1.0) - 0.5 * mf.powf(-s) + s * mf.powf(-s - 1.0) / 12.0
}

/// Constant of the discrete sewing bound with `θ = 2α + β`.
pub fn sewing_constant(alpha: f64, beta: f64) -> f64 {
    let theta = 2.0 * alpha + beta;
    if theta <= 1.0 {
        return f64::INFINITY;
    }
    2f64.powf(theta) * zeta(theta)
}

fn check_partition<'a>(y: &ControlledPath, x: &RoughPath, indices: Option<&'a [usize]>, all: &'a mut Vec<usize>) -> Result<&'a [usize]> {
    let d = x.dim();
    if y.noise_dim() != d || y.path().grid() != x.grid() {
        return invalid("integrand and rough path must share grid and noise dimension");
    }
    if y.value_dim() % d != 0 {
        return invalid("integrand dimension must be a multiple of the noise dimension");
    }
    let idx = match indices {
        Some(ix) => ix,
        None => {
            *all = (0..x.grid().len()).collect();
            &all[..]
        }
    };
    if idx.len() < 2 || idx.windows(2).any(|w| w[1] <= w[0]) || *idx.last().unwrap() >= x.grid().len() {
        return invalid("partition indices must be increasing grid indices");
    }
    Ok(idx)
}

fn compensated_sum(y: &ControlledPath, x: &RoughPath, idx: &[usize]) -> Vec<Vec<f64>> {
    let n = y.value_dim() / x.dim();
    let mut acc = vec![Compensated::default(); n];
    let mut running = Vec::with_capacity(idx.len());
    running.push(vec![0.0; n]);
    let mut term = vec![0.0; n];
    for w in idx.windows(2) {
        germ(y, x, w[0], w[1], &mut term);
        for a in 0..n {
            acc[a].add(term[a]);
        }
        running.push(acc.iter().map(Compensated::value).collect());
    }
    running
}

/// Value of the compensated Riemann sum only, without the sewing diagnostics.
pub fn rough_integral_value(y: &ControlledPath, x: &RoughPath, indices: Option<&[usize]>) -> Result<Vec<f64>> {
    let mut all = Vec::new();
    let idx = check_partition(y, x, indices, &mut all)?;
    Ok(compensated_sum(y, x, idx).pop().unwrap())
}

/// Rough integral over the partition given by grid `indices`
/// (or the full grid when `None`), with `β` defaulting to the rough path's α.
pub fn rough_integral(y: &ControlledPath, x: &RoughPath, indices: Option<&[usize]>, beta: Option<f64>) -> Result<IntegralResult> {
    let mut all = Vec::new();
    let idx = check_partition(y, x, indices, &mut all)?;
    let alpha = x.alpha();
    let beta = beta.unwrap_or(alpha);
    let running = compensated_sum(y, x, idx);
    let value = running.last().unwrap().clone();
    let (first, last) = (idx[0], *idx.last().unwrap());
    let mut term = vec![0.0; value.len()];
    germ(y, x, first, last, &mut term);
    let local_error = value.iter().zip(&term).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let xa = crate::grid_paths::holder_seminorm(x.path(), alpha).map(|h| h.value).unwrap_or(f64::INFINITY);
    let xx = x.second_holder().value;
    let span = x.grid().t(last) - x.grid().t(first);
    let local_bound = sewing_constant(alpha, beta)
        * (xa * y.remainder_holder(x.path(), alpha + beta) + xx * y.derivative_holder(beta))
        * span.powf(2.0 * alpha + beta);
    Ok(IntegralResult { value, running, local_bound, local_error, beta, reliable: 2.0 * alpha + beta > 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_paths::make_uniform_grid;
    use crate::roughpath::{brownian_rough_path, LiftRule};

    struct Square;
    impl SmoothMap for Square {
        fn out_dim(&self) -> usize {
            1
        }
        fn eval(&self, y: &[f64]) -> Vec<f64> {
            vec![y[0] * y[0]]
        }
        fn jacobian(&self, y: &[f64]) -> Vec<f64> {
            vec![2.0 * y[0]]
        }
    }

    #[test]
    fn value_only_matches_full() {
        let g = make_uniform_grid(1.0, 40).unwrap();
        let x = brownian_rough_path(&g, 1, 5, 0, 2, LiftRule::Ito).unwrap();
        let y = ControlledPath::identity(&x);
        assert_eq!(rough_integral_value(&y, &x, None).unwrap(), rough_integral(&y, &x, None, None).unwrap().value);
    }

    #[test]
    fn constant_integrand() {
        let g = make_uniform_grid(1.0, 64).unwrap();
        let x = brownian_rough_path(&g, 2, 1, 0, 2, LiftRule::Ito).unwrap();
        let y = ControlledPath::constant(&x, &[1.5, -2.0]);
        let r = rough_integral(&y, &x, None, None).unwrap();
        let want = 1.5 * x.path().get(64, 0) - 2.0 * x.path().get(64, 1);
        assert!((r.value[0] - want).abs() < 1e-13);
    }

    #[test]
    fn square_composition_remainder() {
        let g = make_uniform_grid(1.0, 32).unwrap();
        let x = brownian_rough_path(&g, 1, 2, 0, 1, LiftRule::Ito).unwrap();
        let w = ControlledPath::identity(&x);
        let sq = w.compose_smooth(&Square).unwrap();
        for (j, k) in [(0, 5), (3, 31), (10, 11)] {
            let dw = x.path().get(k, 0) - x.path().get(j, 0);
            let r = sq.remainder(x.path(), j, k)[0];
            assert!((r - dw * dw).abs() < 1e-12);
        }
    }

    #[test]
    fn additivity() {
        let g = make_uniform_grid(1.0, 40).unwrap();
        let x = brownian_rough_path(&g, 2, 3, 0, 2, LiftRule::Ito).unwrap();
        let y = ControlledPath::identity(&x);
        let whole = rough_integral(&y, &x, None, None).unwrap();
        let a = rough_integral(&y, &x, Some(&(0..=17).collect::<Vec<_>>()), None).unwrap();
        let b = rough_integral(&y, &x, Some(&(17..=40).collect::<Vec<_>>()), None).unwrap();
        assert_eq!(whole.value.len(), 1);
        assert!((whole.value[0] - a.value[0] - b.value[0]).abs() < 1e-13);
    }

    #[test]
    fn reliability_flag() {
        let g = make_uniform_grid(1.0, 16).unwrap();
        let x = brownian_rough_path(&g, 1, 3, 0, 2, LiftRule::Ito).unwrap();
        let y = ControlledPath::identity(&x);
        assert!(rough_integral(&y, &x, None, None).unwrap().reliable);
        assert!(!rough_integral(&y, &x, None, Some(0.05)).unwrap().reliable);
    }

    #[test]
    fn zeta_values() {
        assert!((zeta(2.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-10);
        assert!((zeta(4.0) - std::f64::consts::PI.powi(4) / 90.0).abs() < 1e-12);
    }
}
