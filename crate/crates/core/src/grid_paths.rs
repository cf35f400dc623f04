//! Time grids, sampled paths, Brownian sampling, Hölder seminorms and
//! dyadic partition sequences.
//!
//! Paths are stored row-major: `values[k * dim + i]` is coordinate `i` at
//! grid point `t_k`. Between grid points a path is read by linear
//! interpolation.

use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::keyed_rng;

/// Pair count above which Hölder seminorms switch to dyadic pairs.
pub const HOLDER_EXHAUSTIVE_MAX: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

/// Uniform grid `t_k = kT/N`, `k = 0..=N`, with `t_N = T` exactly.
pub fn make_uniform_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::uniform(horizon, steps)
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return invalid(format!("horizon must be positive, got {horizon}"));
        }
        if steps < 1 {
            return invalid("grid needs at least one step");
        }
        let n = steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * horizon / n).collect();
        times[steps] = horizon;
        Ok(Self { times })
    }

    /// Arbitrary strictly increasing grid. A single point is allowed and
    /// represents a degenerate interval (used for empty initial segments).
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return invalid("grid needs at least one point");
        }
        if times.iter().any(|t| !t.is_finite()) {
            return invalid("grid times must be finite");
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("grid times must be strictly increasing");
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn t(&self, k: usize) -> f64 {
        self.times[k]
    }
    /// Number of grid points, `N + 1`.
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }
    pub fn start(&self) -> f64 {
        self.times[0]
    }
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }
    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }
    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    fn tol(&self) -> f64 {
        if self.steps() == 0 {
            return 1e-12 * self.start().abs().max(1.0);
        }
        1e-9 * (self.horizon() - self.start()) / self.steps() as f64
    }

    /// Index of `t` if it is a grid point (up to a tiny relative tolerance).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let (k, theta) = self.locate(t)?;
        let tol = self.tol();
        if (t - self.times[k]).abs() <= tol {
            Some(k)
        } else if k + 1 < self.times.len() && (self.times[k + 1] - t).abs() <= tol {
            Some(k + 1)
        } else if theta == 0.0 {
            Some(k)
        } else {
            None
        }
    }

    /// Segment containing `t`: returns `(k, θ)` with `t = t_k + θ (t_{k+1} - t_k)`.
    /// At the right end returns `(N - 1, 1)`.
    pub fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let n = self.steps();
        let tol = self.tol();
        if t < self.start() - tol || t > self.horizon() + tol || !t.is_finite() {
            return None;
        }
        if n == 0 {
            return Some((0, 0.0));
        }
        if t >= self.horizon() {
            return Some((n - 1, 1.0));
        }
        if t <= self.start() {
            return Some((0, 0.0));
        }
        let k = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => return Some((k.min(n - 1), if k == n { 1.0 } else { 0.0 })),
            Err(k) => k - 1,
        };
        let theta = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        Some((k, theta))
    }

    /// Each step split into `m` equal substeps.
    pub fn refine(&self, m: usize) -> Result<TimeGrid> {
        if m == 0 {
            return invalid("refinement factor must be at least one");
        }
        let mut times = Vec::with_capacity(self.steps() * m + 1);
        for w in self.times.windows(2) {
            let h = (w[1] - w[0]) / m as f64;
            for j in 0..m {
                times.push(w[0] + j as f64 * h);
            }
        }
        times.push(self.horizon());
        Ok(Self { times })
    }

    /// Sub-grid of points `k0..=k1`.
    pub fn sub(&self, k0: usize, k1: usize) -> Result<TimeGrid> {
        if k1 < k0 || k1 >= self.times.len() {
            return invalid(format!("bad sub-grid range {k0}..={k1}"));
        }
        Ok(Self { times: self.times[k0..=k1].to_vec() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("path dimension must be positive");
        }
        if values.len() != grid.len() * dim {
            return invalid(format!(
                "expected {} values for {} points of dimension {dim}, got {}",
                grid.len() * dim,
                grid.len(),
                values.len()
            ));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * dim);
        for &t in grid.times() {
            let v = f(t);
            if v.len() != dim {
                return invalid("closure returned wrong dimension");
            }
            values.extend_from_slice(&v);
        }
        Self::new(grid, dim, values)
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        let values = value.iter().copied().cycle().take(grid.len() * value.len()).collect();
        Self { grid, dim: value.len(), values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.grid.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.dim + i]
    }

    pub fn increment(&self, j: usize, k: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(k, i) - self.get(j, i)).collect()
    }

    /// Value at `t` by linear interpolation. The flag is true when `t` is
    /// not a grid point.
    pub fn at(&self, t: f64) -> Result<(Vec<f64>, bool)> {
        let (k, theta) = self
            .grid
            .locate(t)
            .ok_or_else(|| Error::InvalidArgument(format!("time {t} outside path domain")))?;
        let off = self.grid.index_of(t).is_none();
        Ok((self.interp(k, theta), off))
    }

    pub(crate) fn interp(&self, k: usize, theta: f64) -> Vec<f64> {
        if theta == 0.0 {
            return self.value(k).to_vec();
        }
        if theta == 1.0 {
            return self.value(k + 1).to_vec();
        }
        let a = self.value(k);
        let b = self.value(k + 1);
        a.iter().zip(b).map(|(x, y)| x + theta * (y - x)).collect()
    }

    /// Single coordinate at `t`, interpolated.
    pub fn coord_at(&self, t: f64, i: usize) -> f64 {
        let (k, theta) = self.grid.locate(t).expect("time outside path domain");
        let a = self.get(k, i);
        if theta == 0.0 {
            a
        } else {
            a + theta * (self.get(k + 1, i) - a)
        }
    }

    /// Coordinates `i` of the path as a one-dimensional path.
    pub fn coordinate(&self, i: usize) -> SamplePath {
        let values = (0..self.len()).map(|k| self.get(k, i)).collect();
        SamplePath { grid: self.grid.clone(), dim: 1, values }
    }

    /// Stacks paths on the same grid side by side.
    pub fn stack(parts: &[&SamplePath]) -> Result<SamplePath> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("nothing to stack".into()))?;
        if parts.iter().any(|p| p.grid != first.grid) {
            return invalid("stacked paths must share a grid");
        }
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut values = Vec::with_capacity(first.len() * dim);
        for k in 0..first.len() {
            for p in parts {
                values.extend_from_slice(p.value(k));
            }
        }
        SamplePath::new(first.grid.clone(), dim, values)
    }

    /// Points `k0..=k1` as a path on the sub-grid.
    pub fn restrict(&self, k0: usize, k1: usize) -> Result<SamplePath> {
        let grid = self.grid.sub(k0, k1)?;
        let values = self.values[k0 * self.dim..(k1 + 1) * self.dim].to_vec();
        SamplePath::new(grid, self.dim, values)
    }

    /// Every `m`-th point.
    pub fn subsample(&self, m: usize) -> Result<SamplePath> {
        if m == 0 || self.grid.steps() % m != 0 {
            return invalid(format!("cannot subsample {} steps by {m}", self.grid.steps()));
        }
        let idx: Vec<usize> = (0..=self.grid.steps() / m).map(|j| j * m).collect();
        let grid = TimeGrid::from_times(idx.iter().map(|&k| self.grid.t(k)).collect())?;
        let mut values = Vec::with_capacity(idx.len() * self.dim);
        for &k in &idx {
            values.extend_from_slice(self.value(k));
        }
        SamplePath::new(grid, self.dim, values)
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|k| self.value(k).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// The path stopped at `t`: `X_t(s) = X(s ∧ t)`, kept on the same grid.
    pub fn stopped(&self, t: f64) -> Result<SamplePath> {
        let (xt, _) = self.at(t)?;
        let mut out = self.clone();
        for k in 0..self.len() {
            if self.grid.t(k) > t {
                out.values[k * self.dim..(k + 1) * self.dim].copy_from_slice(&xt);
            }
        }
        Ok(out)
    }

    /// Same path with `t` inserted as a grid point (no-op if already present).
    pub fn with_knot(&self, t: f64) -> Result<SamplePath> {
        if self.grid.index_of(t).is_some() {
            return Ok(self.clone());
        }
        let (k, _) = self.grid.locate(t).ok_or_else(|| Error::InvalidArgument("knot outside domain".into()))?;
        let (xt, _) = self.at(t)?;
        let mut times = self.grid.times().to_vec();
        times.insert(k + 1, t);
        let mut values = self.values.clone();
        let at = (k + 1) * self.dim;
        values.splice(at..at, xt);
        SamplePath::new(TimeGrid::from_times(times)?, self.dim, values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x{i}")));
        wr.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for k in 0..self.len() {
            let mut row = vec![format!("{:.16e}", self.grid.t(k))];
            row.extend(self.value(k).iter().map(|x| format!("{x:.16e}")));
            wr.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))
    }

    /// Reads the `t,x1,...,xd` format. Errors carry 1-based line numbers.
    pub fn read_csv<R: Read>(r: R) -> Result<SamplePath> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r);
        let header = rd.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
        if header.is_empty() || header.get(0).map(str::trim) != Some("t") || header.len() < 2 {
            return Err(Error::Parse { line: 1, msg: "header must be t,x1,...,xd".into() });
        }
        for (i, h) in header.iter().enumerate().skip(1) {
            if h.trim() != format!("x{i}") {
                return Err(Error::Parse { line: 1, msg: format!("unexpected column '{h}'") });
            }
        }
        let dim = header.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            if rec.len() != dim + 1 {
                return Err(Error::Parse { line, msg: format!("expected {} fields, got {}", dim + 1, rec.len()) });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse { line, msg: format!("not a number: '{field}'") })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line, msg: "non-finite value".into() });
                }
                if j == 0 {
                    if let Some(&prev) = times.last() {
                        if v <= prev {
                            return Err(Error::Parse { line, msg: "times must increase".into() });
                        }
                    }
                    times.push(v);
                } else {
                    values.push(v);
                }
            }
        }
        if times.len() < 2 {
            return Err(Error::Parse { line: times.len() + 2, msg: "need at least two rows".into() });
        }
        SamplePath::new(TimeGrid::from_times(times)?, dim, values)
    }
}

/// Brownian motion on `grid` started at zero. Bit-reproducible for a given
/// `(seed, d)` independently of threading.
pub fn sample_brownian(grid: &TimeGrid, d: usize, seed: u64) -> Result<SamplePath> {
    sample_brownian_keyed(grid, d, seed, 0)
}

/// Brownian sample number `sample` of the ensemble keyed by `seed`.
pub fn sample_brownian_keyed(grid: &TimeGrid, d: usize, seed: u64, sample: u64) -> Result<SamplePath> {
    if d == 0 {
        return invalid("dimension must be positive");
    }
    let n = grid.steps();
    let mut values = vec![0.0; (n + 1) * d];
    for i in 0..d {
        let mut rng = keyed_rng(seed, sample, i as u64);
        let mut x = 0.0;
        for k in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            x += z * grid.dt(k).sqrt();
            values[(k + 1) * d + i] = x;
        }
    }
    SamplePath::new(grid.clone(), d, values)
}

/// Keeps `prefix` on points `0..=keep` and continues it with fresh Brownian
/// increments keyed by `(seed, sample)`.
pub fn extend_brownian(prefix: &SamplePath, keep: usize, seed: u64, sample: u64) -> Result<SamplePath> {
    let grid = prefix.grid();
    let d = prefix.dim();
    if keep > grid.steps() {
        return invalid("keep index beyond grid");
    }
    let mut out = prefix.clone();
    for i in 0..d {
        let mut rng = keyed_rng(seed, sample, i as u64);
        let mut x = prefix.get(keep, i);
        for k in keep..grid.steps() {
            let z: f64 = StandardNormal.sample(&mut rng);
            x += z * grid.dt(k).sqrt();
            out.values[(k + 1) * d + i] = x;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub value: f64,
    /// True when only dyadic pairs were examined.
    pub subsampled: bool,
}

/// Supremum of `dist(j, k) / |t_k - t_j|^exponent` over grid pairs.
pub(crate) fn holder_over_pairs(grid: &TimeGrid, exponent: f64, dist: impl Fn(usize, usize) -> f64) -> HolderEstimate {
    let n = grid.steps();
    let mut best: f64 = 0.0;
    let mut consider = |j: usize, k: usize| {
        let q = dist(j, k) / (grid.t(k) - grid.t(j)).powf(exponent);
        if q > best {
            best = q;
        }
    };
    if n <= HOLDER_EXHAUSTIVE_MAX {
        for j in 0..n {
            for k in j + 1..=n {
                consider(j, k);
            }
        }
        HolderEstimate { value: best, subsampled: false }
    } else {
        let mut span = 1;
        while span <= n {
            for j in 0..=(n - span) {
                consider(j, j + span);
            }
            span *= 2;
        }
        consider(0, n);
        HolderEstimate { value: best, subsampled: true }
    }
}

/// `sup |X_t - X_s| / |t - s|^α` over grid pairs, Euclidean norm.
pub fn holder_seminorm(path: &SamplePath, alpha: f64) -> Result<HolderEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("Hölder exponent must lie in (0, 1), got {alpha}"));
    }
    let d = path.dim();
    Ok(holder_over_pairs(path.grid(), alpha, |j, k| {
        (0..d).map(|i| (path.get(k, i) - path.get(j, i)).powi(2)).sum::<f64>().sqrt()
    }))
}

/// Nested partitions of `[0, T]`: level `k` has `2^k` equal intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSequence {
    pub horizon: f64,
    /// Level number and its partition points.
    pub levels: Vec<(u32, Vec<f64>)>,
}

pub fn dyadic_partitions(horizon: f64, levels: u32) -> Result<PartitionSequence> {
    if !(horizon > 0.0) {
        return invalid("horizon must be positive");
    }
    if levels == 0 || levels > 30 {
        return invalid(format!("levels must be in 1..=30, got {levels}"));
    }
    let levels = (1..=levels)
        .map(|k| {
            let m = 1usize << k;
            let mut pts: Vec<f64> = (0..=m).map(|j| j as f64 * horizon / m as f64).collect();
            pts[m] = horizon;
            (k, pts)
        })
        .collect();
    Ok(PartitionSequence { horizon, levels })
}

impl PartitionSequence {
    pub fn mesh(&self, level: u32) -> Option<f64> {
        self.levels
            .iter()
            .find(|(k, _)| *k == level)
            .map(|(_, p)| p.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max))
    }

    pub fn level(&self, level: u32) -> Option<&[f64]> {
        self.levels.iter().find(|(k, _)| *k == level).map(|(_, p)| p.as_slice())
    }

    /// Grid indices of the points of `level`; every point must be on the grid.
    pub fn indices_on(&self, level: u32, grid: &TimeGrid) -> Result<Vec<usize>> {
        let pts = self.level(level).ok_or_else(|| Error::InvalidArgument(format!("no level {level}")))?;
        pts.iter()
            .map(|&t| {
                grid.index_of(t).ok_or_else(|| {
                    Error::InvalidArgument(format!("partition point {t} of level {level} is not a grid point"))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_endpoints() {
        let g = make_uniform_grid(0.3, 7).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.horizon(), 0.3);
        assert!(make_uniform_grid(0.0, 4).is_err());
        assert!(make_uniform_grid(1.0, 0).is_err());
    }

    #[test]
    fn locate_and_index() {
        let g = make_uniform_grid(1.0, 4).unwrap();
        assert_eq!(g.index_of(0.5), Some(2));
        assert_eq!(g.index_of(0.6), None);
        let (k, th) = g.locate(0.6).unwrap();
        assert_eq!(k, 2);
        assert!((th - 0.4).abs() < 1e-12);
        assert_eq!(g.locate(1.0), Some((3, 1.0)));
        assert!(g.locate(1.5).is_none());
    }

    #[test]
    fn holder_of_identity() {
        let g = make_uniform_grid(1.0, 64).unwrap();
        let p = SamplePath::from_fn(g, 1, |t| vec![t]).unwrap();
        let h = holder_seminorm(&p, 0.5).unwrap();
        assert!((h.value - 1.0).abs() < 1e-12);
        assert!(holder_seminorm(&p, 1.0).is_err());
        assert!(holder_seminorm(&p, 0.0).is_err());
    }

    #[test]
    fn large_grids_subsample() {
        let g = make_uniform_grid(1.0, 8192).unwrap();
        let p = sample_brownian(&g, 1, 3).unwrap();
        assert!(holder_seminorm(&p, 0.4).unwrap().subsampled);
    }

    #[test]
    fn dyadic_meshes() {
        let ps = dyadic_partitions(2.0, 5).unwrap();
        for k in 1..=5u32 {
            assert_eq!(ps.level(k).unwrap().len(), (1 << k) + 1);
            assert!((ps.mesh(k).unwrap() - 2.0 / (1u64 << k) as f64).abs() < 1e-15);
        }
        let g = make_uniform_grid(2.0, 16).unwrap();
        assert!(ps.indices_on(4, &g).is_ok());
        assert!(ps.indices_on(5, &g).is_err());
    }

    #[test]
    fn brownian_reproducible() {
        let g = make_uniform_grid(1.0, 100).unwrap();
        let a = sample_brownian(&g, 2, 11).unwrap();
        let b = sample_brownian(&g, 2, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_brownian(&g, 2, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn extension_keeps_prefix() {
        let g = make_uniform_grid(1.0, 50).unwrap();
        let a = sample_brownian(&g, 2, 1).unwrap();
        let b = extend_brownian(&a, 20, 9, 4).unwrap();
        for k in 0..=20 {
            assert_eq!(a.value(k), b.value(k));
        }
        assert_ne!(a.value(30), b.value(30));
    }

    #[test]
    fn knot_insertion_preserves_path() {
        let g = make_uniform_grid(1.0, 10).unwrap();
        let a = sample_brownian(&g, 1, 5).unwrap();
        let b = a.with_knot(0.33).unwrap();
        assert_eq!(b.len(), 12);
        for t in [0.1, 0.2, 0.33, 0.35, 0.9] {
            assert!((a.coord_at(t, 0) - b.coord_at(t, 0)).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let g = make_uniform_grid(1.0, 33).unwrap();
        let a = sample_brownian(&g, 3, 8).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let b = SamplePath::read_csv(buf.as_slice()).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.grid().times(), b.grid().times());
    }

    #[test]
    fn csv_errors_carry_lines() {
        let text = "t,x1\n0,0\n0.5,abc\n";
        match SamplePath::read_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "t,x1\n0,0\n0.5,1,2\n";
        assert!(matches!(SamplePath::read_csv(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
    }
}
