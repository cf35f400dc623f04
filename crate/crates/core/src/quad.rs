//! Quadrature helpers.
//!
//! Path functionals integrate along the piecewise-linear interpolation of a
//! sampled path with five-point Gauss–Legendre on each grid segment, which is
//! exact for polynomial integrands of degree up to nine along each segment.
//! Deterministic scalar integrals use adaptive Gauss–Kronrod.

const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss–Legendre on `[a, b]`.
pub fn gauss_legendre5(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, w) in GL5_X.iter().zip(GL5_W.iter()) {
        s += w * f(c + h * x);
    }
    s * h
}

/// Sum of Gauss–Legendre rules over the pieces of `[a, b]` cut at `knots`.
pub fn piecewise_gl5(knots: &[f64], a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let start = knots.partition_point(|&t| t <= a);
    let mut left = a;
    let mut total = 0.0;
    for &t in &knots[start..] {
        if t >= b {
            break;
        }
        total += gauss_legendre5(left, t, &mut f);
        left = t;
    }
    total + gauss_legendre5(left, b, &mut f)
}

/// Trapezoid rule on sampled values.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

const K15_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_W: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const G7_W: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = K15_W[7] * fc;
    let mut g = G7_W[3] * fc;
    for i in 0..7 {
        let dx = h * K15_X[i];
        let s = f(c - dx) + f(c + dx);
        k += K15_W[i] * s;
        if i % 2 == 1 {
            g += G7_W[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) with absolute tolerance `tol`.
pub fn adaptive(a: f64, b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut stack = vec![(a, b, tol, 0u32)];
    let mut total = 0.0;
    while let Some((l, r, eps, depth)) = stack.pop() {
        let (v, err) = gk15(l, r, &mut f);
        if err <= eps || depth >= 40 {
            total += v;
        } else {
            let m = 0.5 * (l + r);
            stack.push((m, r, 0.5 * eps, depth + 1));
            stack.push((l, m, 0.5 * eps, depth + 1));
        }
    }
    total
}
