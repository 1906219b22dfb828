//! Adaptive Gauss–Kronrod (7/15) quadrature.

use serde::{Deserialize, Serialize};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    /// Sum of `|K15 - G7|` over accepted panels.
    pub error: f64,
    pub evals: u64,
    /// Set when some panel hit the depth limit before meeting its tolerance.
    pub depth_limited: bool,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrate `f` over `[a, b]` to `max(abs_tol, rel_tol |I|)` by recursive
/// bisection, splitting the tolerance in proportion to panel width.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, rel_tol: f64, max_depth: u32) -> QuadResult {
    let mut out = QuadResult {
        value: 0.0,
        error: 0.0,
        evals: 0,
        depth_limited: false,
    };
    if b <= a {
        return out;
    }
    let (whole, whole_err) = gk15(f, a, b);
    out.evals += 15;
    let tol = abs_tol.max(rel_tol * whole.abs());
    if whole_err <= tol || max_depth == 0 {
        out.depth_limited = whole_err > tol;
        out.value = whole;
        out.error = whole_err;
        return out;
    }
    let mid = 0.5 * (a + b);
    let mut stack = vec![(mid, b, 1u32), (a, mid, 1u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, e) = gk15(f, lo, hi);
        out.evals += 15;
        let local = tol * (hi - lo) / (b - a);
        if e <= local || depth >= max_depth || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1e-300) {
            if e > local {
                out.depth_limited = true;
            }
            out.value += v;
            out.error += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    out
}

/// [`integrate`] over consecutive pieces `[p_0, p_1], [p_1, p_2], ...`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, points: &[f64], abs_tol: f64, rel_tol: f64, max_depth: u32) -> QuadResult {
    let mut out = QuadResult {
        value: 0.0,
        error: 0.0,
        evals: 0,
        depth_limited: false,
    };
    let pieces = points.len().saturating_sub(1).max(1) as f64;
    for w in points.windows(2) {
        let r = integrate(f, w[0], w[1], abs_tol / pieces, rel_tol, max_depth);
        out.value += r.value;
        out.error += r.error;
        out.evals += r.evals;
        out.depth_limited |= r.depth_limited;
    }
    out
}
