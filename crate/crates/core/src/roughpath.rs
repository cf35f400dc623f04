//! Second-order rough paths over a grid.
//!
//! Only the consecutive blocks `𝕏(t_k, t_{k+1})` are stored. A prefix table
//! `A_k = 𝕏(0, t_k)` built with Chen's relation gives any pair in O(d²):
//!
//! ```text
//! 𝕏(t_j, t_k) = A_k - A_j - (X_j - X_0) ⊗ (X_k - X_j)
//! ```
//!
//! Index convention: `𝕏^{ij}(s,t) = ∫_s^t (X^i_r - X^i_s) dX^j_r`, stored at
//! `i * d + j`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid_paths::{holder_over_pairs, sample_brownian_keyed, HolderEstimate, SamplePath, TimeGrid};

pub const DEFAULT_ALPHA: f64 = 0.45;
pub const DEFAULT_OVERSAMPLING: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftRule {
    Ito,
    Stratonovich,
}

/// Access to the two levels of a rough path on grid indices.
pub trait SecondLevel {
    fn base(&self) -> &SamplePath;
    /// `𝕏(t_j, t_k)` as a row-major d×d block.
    fn second(&self, j: usize, k: usize) -> Vec<f64>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoughPath {
    path: SamplePath,
    blocks: Vec<f64>,
    prefix: Vec<f64>,
    alpha: f64,
    rule: LiftRule,
}

impl RoughPath {
    /// Builds a rough path from consecutive blocks (`N * d * d` values).
    pub fn from_blocks(path: SamplePath, blocks: Vec<f64>, alpha: f64, rule: LiftRule) -> Result<Self> {
        let d = path.dim();
        let n = path.grid().steps();
        if blocks.len() != n * d * d {
            return invalid(format!("expected {} block entries, got {}", n * d * d, blocks.len()));
        }
        if !(alpha > 1.0 / 3.0 && alpha <= 0.5) {
            return invalid(format!("alpha must lie in (1/3, 1/2], got {alpha}"));
        }
        if blocks.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite second-level entry");
        }
        let dd = d * d;
        let mut prefix = vec![0.0; (n + 1) * dd];
        let x0 = path.value(0).to_vec();
        for k in 0..n {
            let xk = path.value(k);
            let xk1 = path.value(k + 1);
            for i in 0..d {
                let a = xk[i] - x0[i];
                for j in 0..d {
                    prefix[(k + 1) * dd + i * d + j] =
                        prefix[k * dd + i * d + j] + blocks[k * dd + i * d + j] + a * (xk1[j] - xk[j]);
                }
            }
        }
        Ok(Self { path, blocks, prefix, alpha, rule })
    }

    pub fn path(&self) -> &SamplePath {
        &self.path
    }
    pub fn grid(&self) -> &TimeGrid {
        self.path.grid()
    }
    pub fn dim(&self) -> usize {
        self.path.dim()
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn rule(&self) -> LiftRule {
        self.rule
    }
    pub fn blocks(&self) -> &[f64] {
        &self.blocks
    }
    /// Consecutive block `𝕏(t_k, t_{k+1})`.
    pub fn block(&self, k: usize) -> &[f64] {
        let dd = self.dim() * self.dim();
        &self.blocks[k * dd..(k + 1) * dd]
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 / 3.0 && alpha <= 0.5) {
            return invalid(format!("alpha must lie in (1/3, 1/2], got {alpha}"));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Itô to Stratonovich: adds `½ (t - s) I` to each block (Brownian case).
    pub fn stratonovich(&self) -> Result<RoughPath> {
        if self.rule == LiftRule::Stratonovich {
            return Ok(self.clone());
        }
        let d = self.dim();
        let mut blocks = self.blocks.clone();
        for k in 0..self.grid().steps() {
            let h = 0.5 * self.grid().dt(k);
            for i in 0..d {
                blocks[k * d * d + i * d + i] += h;
            }
        }
        RoughPath::from_blocks(self.path.clone(), blocks, self.alpha, LiftRule::Stratonovich)
    }

    /// Geometric projection: keeps the area `Anti(𝕏)` of each step and sets
    /// `Sym(𝕏) = ½ δX ⊗ δX`. In one dimension this is the exact Stratonovich lift.
    pub fn geometric(&self) -> Result<RoughPath> {
        let d = self.dim();
        let mut blocks = self.blocks.clone();
        for k in 0..self.grid().steps() {
            let b = &mut blocks[k * d * d..(k + 1) * d * d];
            let dx: Vec<f64> = (0..d).map(|i| self.path.get(k + 1, i) - self.path.get(k, i)).collect();
            for i in 0..d {
                for j in i..d {
                    let anti = 0.5 * (b[i * d + j] - b[j * d + i]);
                    let sym = 0.5 * dx[i] * dx[j];
                    b[i * d + j] = sym + anti;
                    b[j * d + i] = sym - anti;
                }
            }
        }
        RoughPath::from_blocks(self.path.clone(), blocks, self.alpha, LiftRule::Stratonovich)
    }

    /// `|𝕏|_{2α}` over grid pairs.
    pub fn second_holder(&self) -> HolderEstimate {
        holder_over_pairs(self.grid(), 2.0 * self.alpha, |j, k| max_abs(&self.second(j, k)))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = RoughPathDoc {
            grid: self.grid().times().to_vec(),
            dim: self.dim(),
            base: self.path.values().to_vec(),
            blocks: self.blocks.clone(),
            alpha: self.alpha,
            lift_rule: self.rule,
        };
        serde_json::to_string(&doc).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<RoughPath> {
        let doc: RoughPathDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        let grid = TimeGrid::from_times(doc.grid)?;
        let path = SamplePath::new(grid, doc.dim, doc.base)?;
        RoughPath::from_blocks(path, doc.blocks, doc.alpha, doc.lift_rule)
    }
}

impl SecondLevel for RoughPath {
    fn base(&self) -> &SamplePath {
        &self.path
    }

    fn second(&self, j: usize, k: usize) -> Vec<f64> {
        let d = self.dim();
        let dd = d * d;
        let x0 = self.path.value(0);
        let xj = self.path.value(j);
        let xk = self.path.value(k);
        let mut out = vec![0.0; dd];
        for i in 0..d {
            let a = xj[i] - x0[i];
            for l in 0..d {
                out[i * d + l] = self.prefix[k * dd + i * d + l] - self.prefix[j * dd + i * d + l] - a * (xk[l] - xj[l]);
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct RoughPathDoc {
    grid: Vec<f64>,
    dim: usize,
    base: Vec<f64>,
    blocks: Vec<f64>,
    alpha: f64,
    lift_rule: LiftRule,
}

/// Full table of second-level values for every grid pair. Used to inspect
/// hand-built or corrupted objects that need not satisfy Chen's relation.
#[derive(Clone, Debug)]
pub struct DenseSecondLevel {
    path: SamplePath,
    table: Vec<f64>,
}

impl DenseSecondLevel {
    pub fn from_rough_path(rp: &RoughPath) -> Self {
        let n = rp.grid().len();
        let dd = rp.dim() * rp.dim();
        let mut table = vec![0.0; n * n * dd];
        for j in 0..n {
            for k in j..n {
                table[(j * n + k) * dd..(j * n + k + 1) * dd].copy_from_slice(&rp.second(j, k));
            }
        }
        Self { path: rp.path.clone(), table }
    }

    pub fn set(&mut self, j: usize, k: usize, value: &[f64]) {
        let n = self.path.len();
        let dd = self.path.dim() * self.path.dim();
        self.table[(j * n + k) * dd..(j * n + k + 1) * dd].copy_from_slice(value);
    }
}

impl SecondLevel for DenseSecondLevel {
    fn base(&self) -> &SamplePath {
        &self.path
    }
    fn second(&self, j: usize, k: usize) -> Vec<f64> {
        let n = self.path.len();
        let dd = self.path.dim() * self.path.dim();
        self.table[(j * n + k) * dd..(j * n + k + 1) * dd].to_vec()
    }
}

/// Itô lift from a path sampled on an `m`-fold refinement of the target grid.
///
/// Each block is the left-point sum over its `m` fine steps. The returned
/// rough path lives on every `m`-th point of `fine`.
pub fn ito_lift(fine: &SamplePath, m: usize, alpha: f64) -> Result<RoughPath> {
    if m == 0 {
        return invalid("oversampling factor must be at least one");
    }
    let nf = fine.grid().steps();
    if nf % m != 0 {
        return invalid(format!("{nf} fine steps not divisible by oversampling {m}"));
    }
    let d = fine.dim();
    let n = nf / m;
    let mut blocks = vec![0.0; n * d * d];
    for k in 0..n {
        let s = fine.value(k * m);
        let b = &mut blocks[k * d * d..(k + 1) * d * d];
        for r in k * m..(k + 1) * m {
            let xr = fine.value(r);
            let xr1 = fine.value(r + 1);
            for i in 0..d {
                let a = xr[i] - s[i];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    b[i * d + j] += a * (xr1[j] - xr[j]);
                }
            }
        }
    }
    let coarse = fine.subsample(m)?;
    RoughPath::from_blocks(coarse, blocks, alpha, LiftRule::Ito)
}

/// Brownian rough path on `grid` lifted from an `m`-fold finer sample.
pub fn brownian_rough_path(grid: &TimeGrid, d: usize, seed: u64, sample: u64, m: usize, rule: LiftRule) -> Result<RoughPath> {
    let fine = sample_brownian_keyed(&grid.refine(m)?, d, seed, sample)?;
    let rp = ito_lift(&fine, m, DEFAULT_ALPHA)?;
    match rule {
        LiftRule::Ito => Ok(rp),
        LiftRule::Stratonovich => rp.stratonovich(),
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Largest entry of `𝕏(s,t) - 𝕏(s,u) - 𝕏(u,t) - δX(s,u) ⊗ δX(u,t)`.
pub fn chen_defect<L: SecondLevel + ?Sized>(rp: &L, s: f64, u: f64, t: f64) -> Result<f64> {
    let g = rp.base().grid();
    let idx = |x: f64| g.index_of(x).ok_or_else(|| Error::InvalidArgument(format!("time {x} is not a grid point")));
    let (j, m, k) = (idx(s)?, idx(u)?, idx(t)?);
    if !(j <= m && m <= k) {
        return invalid("chen_defect needs s <= u <= t");
    }
    Ok(chen_defect_idx(rp, j, m, k))
}

pub fn chen_defect_idx<L: SecondLevel + ?Sized>(rp: &L, j: usize, m: usize, k: usize) -> f64 {
    let x = rp.base();
    let d = x.dim();
    let st = rp.second(j, k);
    let su = rp.second(j, m);
    let ut = rp.second(m, k);
    let mut worst: f64 = 0.0;
    for a in 0..d {
        let xa = x.get(m, a) - x.get(j, a);
        for b in 0..d {
            let xb = x.get(k, b) - x.get(m, b);
            let v = st[a * d + b] - su[a * d + b] - ut[a * d + b] - xa * xb;
            worst = worst.max(v.abs());
        }
    }
    worst
}

/// Inhomogeneous α-Hölder rough path distance on a common grid:
/// `|X - X̃|_α + |𝕏 - 𝕏̃|_{2α}`.
pub fn rough_metric<A: SecondLevel + ?Sized, B: SecondLevel + ?Sized>(a: &A, b: &B, alpha: f64) -> Result<f64> {
    let (xa, xb) = (a.base(), b.base());
    if xa.grid() != xb.grid() || xa.dim() != xb.dim() {
        return invalid("rough_metric needs a common grid and dimension");
    }
    if !(alpha > 1.0 / 3.0 && alpha <= 0.5) {
        return invalid("alpha must lie in (1/3, 1/2]");
    }
    let d = xa.dim();
    let first = holder_over_pairs(xa.grid(), alpha, |j, k| {
        (0..d)
            .map(|i| ((xa.get(k, i) - xa.get(j, i)) - (xb.get(k, i) - xb.get(j, i))).powi(2))
            .sum::<f64>()
            .sqrt()
    });
    let second = holder_over_pairs(xa.grid(), 2.0 * alpha, |j, k| {
        let p = a.second(j, k);
        let q = b.second(j, k);
        p.iter().zip(&q).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    });
    Ok(first.value + second.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_paths::make_uniform_grid;

    #[test]
    fn geometric_projection() {
        let g = make_uniform_grid(1.0, 16).unwrap();
        let rp = brownian_rough_path(&g, 2, 4, 0, 8, LiftRule::Ito).unwrap();
        let geo = rp.geometric().unwrap();
        for k in 0..16 {
            let (b, c) = (rp.block(k), geo.block(k));
            let dx = [geo.path().get(k + 1, 0) - geo.path().get(k, 0), geo.path().get(k + 1, 1) - geo.path().get(k, 1)];
            for i in 0..2 {
                assert!((c[i * 2 + i] - 0.5 * dx[i] * dx[i]).abs() < 1e-15);
            }
            assert!((c[1] - c[2] - (b[1] - b[2])).abs() < 1e-15);
            assert!((c[1] + c[2] - dx[0] * dx[1]).abs() < 1e-15);
        }
        for (j, m, k) in [(0, 3, 9), (2, 2, 16), (5, 11, 13)] {
            assert!(chen_defect_idx(&geo, j, m, k) < 1e-14);
        }
    }

    #[test]
    fn linear_path_lift() {
        for m in [1usize, 2, 5] {
            let g = make_uniform_grid(1.0, 8 * m).unwrap();
            let x = SamplePath::from_fn(g, 1, |t| vec![t]).unwrap();
            let rp = ito_lift(&x, m, DEFAULT_ALPHA).unwrap();
            let h = 1.0 / 8.0;
            let want = h * h * (m as f64 - 1.0) / (2.0 * m as f64);
            for k in 0..8 {
                assert!((rp.block(k)[0] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn chen_holds_and_corruption_is_seen() {
        let g = make_uniform_grid(1.0, 16).unwrap();
        let rp = brownian_rough_path(&g, 2, 7, 0, 4, LiftRule::Ito).unwrap();
        let worst = (0..=16)
            .flat_map(|j| (j..=16).flat_map(move |m| (m..=16).map(move |k| (j, m, k))))
            .map(|(j, m, k)| chen_defect_idx(&rp, j, m, k))
            .fold(0.0, f64::max);
        assert!(worst < 1e-13);
        let mut dense = DenseSecondLevel::from_rough_path(&rp);
        let mut v = dense.second(2, 9);
        v[1] += 1.0;
        dense.set(2, 9, &v);
        let bad = chen_defect(&dense, g.t(2), g.t(5), g.t(9)).unwrap();
        assert!((bad - 1.0).abs() < 1e-12);
        assert!(chen_defect(&rp, 0.1, 0.5, 0.9).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = make_uniform_grid(1.0, 10).unwrap();
        let rp = brownian_rough_path(&g, 2, 3, 1, 2, LiftRule::Stratonovich).unwrap();
        let back = RoughPath::from_json(&rp.to_json().unwrap()).unwrap();
        assert_eq!(rp, back);
    }

    #[test]
    fn metric_zero_on_self() {
        let g = make_uniform_grid(1.0, 32).unwrap();
        let rp = brownian_rough_path(&g, 2, 3, 1, 2, LiftRule::Ito).unwrap();
        assert_eq!(rough_metric(&rp, &rp, 0.45).unwrap(), 0.0);
    }
}
