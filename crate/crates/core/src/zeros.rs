//! Enumeration of Lee–Yang zeros by monotone bracketing of the iterated lift.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::tree_lift;
use crate::error::{invalid, Error, Result};
use crate::params::{check_t, TreeSpec};

/// Number of zeros, `|V|`.
pub fn zero_count(tree: &TreeSpec) -> u64 {
    tree.vertex_count()
}

/// `floor((G(-pi) - pi) / 2pi)` with `G(-pi) = -pi |V|` exactly.
fn base_branch(n: u64) -> i64 {
    (-(n as i128 + 1)).div_euclid(2) as i64
}

/// Number of zeros in `(-pi, phi]`, computed from the winding of the lift
/// without locating any zero.
pub(crate) fn count_le(tree: &TreeSpec, t: f64, phi: f64) -> u64 {
    let n = zero_count(tree);
    if phi >= PI {
        return n;
    }
    if phi <= -PI {
        return 0;
    }
    let (g, _) = tree_lift(tree, t, phi);
    let c = g.branch_index() - base_branch(n);
    c.clamp(0, n as i64) as u64
}

/// Sorted zero angles of one tree at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    pub tree: TreeSpec,
    pub t: f64,
    /// Ascending, in `(-pi, pi]`.
    pub angles: Vec<f64>,
    /// `|G(phi) - pi - 2 pi m|` at each returned angle.
    pub residuals: Vec<f64>,
}

impl ZeroSet {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Number of zeros `<= phi`.
    pub fn count_le(&self, phi: f64) -> usize {
        self.angles.partition_point(|&a| a <= phi)
    }

    /// CSV with header `index,angle_radians,residual`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "index,angle_radians,residual")?;
        for (i, (a, r)) in self.angles.iter().zip(&self.residuals).enumerate() {
            writeln!(w, "{i},{a:.16e},{r:.16e}")?;
        }
        Ok(())
    }
}

const MAX_SOLVER_STEPS: usize = 200;

/// Solve `G(phi) = pi + 2 pi m` on `[lo, hi]` where `G(lo) < pi + 2 pi m <= G(hi)`.
///
/// Newton steps are taken when they stay inside the bracket, bisection
/// otherwise. `dG/dphi >= 1`, so a residual of `tol * G'` bounds the angular
/// error by `tol`.
fn solve_branch(tree: &TreeSpec, t: f64, m: i64, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)> {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_SOLVER_STEPS {
        let (g, d) = tree_lift(tree, t, x);
        let f = g.offset_from_branch(m);
        if f.abs() <= tol * d {
            return Ok((x, f.abs()));
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            return Ok((x, f.abs()));
        }
        let newton = x - f / d;
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence(format!(
        "branch {m} of {tree} at t = {t} did not converge in {MAX_SOLVER_STEPS} steps"
    )))
}

/// Zeros in `(a, b]` given the counts at both ends.
fn isolate(
    tree: &TreeSpec,
    t: f64,
    base: i64,
    (a, ca): (f64, u64),
    (b, cb): (f64, u64),
    tol: f64,
    out: &mut Vec<(f64, f64)>,
) -> Result<()> {
    if cb <= ca {
        return Ok(());
    }
    if cb - ca == 1 {
        out.push(solve_branch(tree, t, base + cb as i64, a, b, tol)?);
        return Ok(());
    }
    let mid = 0.5 * (a + b);
    if mid <= a || mid >= b {
        // the zeros are closer than one ulp apart
        for _ in ca..cb {
            out.push((b, 0.0));
        }
        return Ok(());
    }
    let cm = count_le(tree, t, mid);
    isolate(tree, t, base, (a, ca), (mid, cm), tol, out)?;
    isolate(tree, t, base, (mid, cm), (b, cb), tol, out)
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(invalid("tol", format!("{tol} must be positive and finite")));
    }
    Ok(())
}

/// Zeros with angle in `(a, b]`, `-pi <= a <= b <= pi`, with residuals.
pub fn enumerate_zeros_in(tree: &TreeSpec, t: f64, a: f64, b: f64, tol: f64) -> Result<Vec<(f64, f64)>> {
    check_t(t)?;
    check_tol(tol)?;
    if !(a >= -PI && a <= b && b <= PI) {
        return Err(invalid("interval", format!("({a}, {b}] is not inside [-pi, pi]")));
    }
    let n = zero_count(tree);
    let base = base_branch(n);
    const CHUNKS: usize = 256;
    let width = (b - a) / CHUNKS as f64;
    let edges: Vec<f64> = (0..=CHUNKS)
        .map(|i| if i == CHUNKS { b } else { a + width * i as f64 })
        .collect();
    let counts: Vec<u64> = edges.par_iter().map(|&x| count_le(tree, t, x)).collect();
    let parts: Vec<Result<Vec<(f64, f64)>>> = (0..CHUNKS)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            isolate(
                tree,
                t,
                base,
                (edges[i], counts[i]),
                (edges[i + 1], counts[i + 1]),
                tol,
                &mut out,
            )?;
            Ok(out)
        })
        .collect();
    let mut zeros = Vec::with_capacity((counts[CHUNKS] - counts[0]) as usize);
    for p in parts {
        zeros.extend(p?);
    }
    let seam_zero = n % 2 == 1 && b == PI;
    if seam_zero {
        // z = -1 is a zero for odd |V|; pin it to the seam exactly
        if let Some(last) = zeros.last_mut() {
            if PI - last.0 < 1e-9 {
                last.0 = PI;
            }
        }
    }
    zeros.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(zeros)
}

/// All `|V|` zeros of the tree at temperature `t < 1`.
pub fn enumerate_zeros(tree: &TreeSpec, t: f64, tol: f64) -> Result<ZeroSet> {
    let zeros = enumerate_zeros_in(tree, t, -PI, PI, tol)?;
    let n = zero_count(tree);
    if zeros.len() as u64 != n {
        return Err(Error::Internal(format!(
            "found {} zeros for {tree}, expected {n}",
            zeros.len()
        )));
    }
    let (angles, residuals) = zeros.into_iter().unzip();
    Ok(ZeroSet {
        tree: *tree,
        t,
        angles,
        residuals,
    })
}

/// The `t = 1` limit: every zero sits at `z = -1`.
pub fn zeros_at_unit_temperature(tree: &TreeSpec) -> ZeroSet {
    let n = zero_count(tree) as usize;
    ZeroSet {
        tree: *tree,
        t: 1.0,
        angles: vec![PI; n],
        residuals: vec![0.0; n],
    }
}

/// Smallest strictly positive zero angle.
pub fn min_positive_zero(zs: &ZeroSet) -> Option<f64> {
    zs.angles.iter().copied().find(|&a| a > 0.0)
}
