//! The normalized counting measure on the zeros, queried through the winding
//! of the iterated lift so that no zero list is needed.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{critical_temperature, tree_lift, TWO_PI};
use crate::error::{invalid, Result};
use crate::params::{check_t, TreeSpec};
use crate::zeros::{self, enumerate_zeros, ZeroSet};

/// `mu_{t,n}`: mass `1/|V|` on each zero of the level-`n` tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    tree: TreeSpec,
    t: f64,
}

impl EmpiricalMeasure {
    pub fn new(tree: TreeSpec, t: f64) -> Result<Self> {
        check_t(t)?;
        Ok(Self { tree, t })
    }

    pub fn tree(&self) -> &TreeSpec {
        &self.tree
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn level(&self) -> u32 {
        self.tree.level()
    }

    /// Number of atoms, `|V|`.
    pub fn total(&self) -> u64 {
        zeros::zero_count(&self.tree)
    }

    /// Number of zeros in `(-pi, phi]`.
    pub fn count_le(&self, phi: f64) -> u64 {
        zeros::count_le(&self.tree, self.t, phi)
    }

    /// Number of zeros in `(a, b]`.
    pub fn interval_count(&self, a: f64, b: f64) -> Result<u64> {
        if !(a >= -PI && a <= b && b <= PI) {
            return Err(invalid("interval", format!("({a}, {b}] is not inside [-pi, pi]")));
        }
        Ok(self.count_le(b) - self.count_le(a))
    }

    /// Number of zeros on the arc `(c - delta, c + delta]`, wrapping around
    /// the seam at `pi`.
    pub fn arc_count(&self, c: f64, delta: f64) -> u64 {
        let n = self.total();
        if delta >= PI {
            return n;
        }
        let (lo, hi) = (c - delta, c + delta);
        if lo < -PI {
            self.count_le(hi) + (n - self.count_le(lo + TWO_PI))
        } else if hi > PI {
            (n - self.count_le(lo)) + self.count_le(hi - TWO_PI)
        } else {
            self.count_le(hi) - self.count_le(lo)
        }
    }

    /// `mu([c - delta, c + delta])` up to atoms at the left endpoint.
    pub fn arc_mass(&self, c: f64, delta: f64) -> f64 {
        self.arc_count(c, delta) as f64 / self.total() as f64
    }

    /// `(G(phi) - G(-pi)) / (2 pi |V|)`: the smooth interpolant of the CDF.
    pub fn continuum_cdf(&self, phi: f64) -> f64 {
        let n = self.total() as f64;
        if phi >= PI {
            return 1.0;
        }
        if phi <= -PI {
            return 0.0;
        }
        let (g, _) = tree_lift(&self.tree, self.t, phi);
        // G(-pi) = -pi n
        let shifted = (g.turns() as f64 + n / 2.0) / n + g.frac() / (TWO_PI * n);
        shifted.clamp(0.0, 1.0)
    }
}

/// `M(phi) = #{zeros <= phi} / |V|`.
pub fn empirical_cdf(phi: f64, em: &EmpiricalMeasure) -> f64 {
    em.count_le(phi) as f64 / em.total() as f64
}

/// `mu((a, b])`.
pub fn interval_mass(a: f64, b: f64, em: &EmpiricalMeasure) -> Result<f64> {
    Ok(em.interval_count(a, b)? as f64 / em.total() as f64)
}

/// Gap statistics of a zero set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    /// Largest circular gap between consecutive zeros, excluding the gap
    /// that contains `phi = 0` when `t > t_c`.
    pub max_gap: f64,
    /// The gap that contains `phi = 0` (the zero-free arc above `t_c`).
    pub central_gap: f64,
    /// Whether `central_gap` was left out of `max_gap`.
    pub central_excluded: bool,
}

/// Gap statistics of an already enumerated zero set.
pub fn gap_stats(zs: &ZeroSet) -> Result<GapStats> {
    let a = &zs.angles;
    let n = a.len();
    let exclude = zs.t > critical_temperature(zs.tree.k())?;
    let mut max_gap: f64 = 0.0;
    let mut central = 0.0;
    for i in 0..n {
        let (lo, hi) = if i + 1 < n {
            (a[i], a[i + 1])
        } else {
            (a[n - 1], a[0] + TWO_PI)
        };
        let gap = hi - lo;
        let contains_zero = lo < 0.0 && hi > 0.0 || (n == 1);
        if contains_zero {
            central = gap;
            if exclude {
                continue;
            }
        }
        max_gap = max_gap.max(gap);
    }
    Ok(GapStats {
        max_gap,
        central_gap: central,
        central_excluded: exclude,
    })
}

/// Enumerate the zeros of `em` and return their gap statistics.
pub fn max_gap(em: &EmpiricalMeasure, tol: f64) -> Result<GapStats> {
    let zs = enumerate_zeros(&em.tree, em.t, tol)?;
    gap_stats(&zs)
}

/// `sup |M_rooted - M_full|` over `grid` equally spaced angles in `(-pi, pi]`.
pub fn cdf_distance_rooted_full(k: u32, n: u32, t: f64, grid: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "the full tree requires level >= 1"));
    }
    if grid == 0 {
        return Err(invalid("grid", "must be >= 1"));
    }
    let rooted = EmpiricalMeasure::new(TreeSpec::rooted(n, k)?, t)?;
    let full = EmpiricalMeasure::new(TreeSpec::full(n, k)?, t)?;
    Ok((1..=grid)
        .into_par_iter()
        .map(|i| {
            let phi = -PI + TWO_PI * i as f64 / grid as f64;
            (empirical_cdf(phi, &rooted) - empirical_cdf(phi, &full)).abs()
        })
        .reduce(|| 0.0, f64::max))
}

/// Histogram CSV with header `bin_center,mass` over `bins` equal bins of `(-pi, pi]`.
pub fn write_histogram_csv<W: Write>(em: &EmpiricalMeasure, bins: usize, mut w: W) -> io::Result<()> {
    writeln!(w, "bin_center,mass")?;
    let edges: Vec<u64> = (0..=bins)
        .into_par_iter()
        .map(|i| em.count_le(-PI + TWO_PI * i as f64 / bins as f64))
        .collect();
    let total = em.total() as f64;
    for i in 0..bins {
        let center = -PI + TWO_PI * (i as f64 + 0.5) / bins as f64;
        let mass = (edges[i + 1] - edges[i]) as f64 / total;
        writeln!(w, "{center:.16e},{mass:.16e}")?;
    }
    Ok(())
}

/// CDF CSV with header `phi,M` on `points` equally spaced angles in `(-pi, pi]`.
pub fn write_cdf_csv<W: Write>(em: &EmpiricalMeasure, points: usize, mut w: W) -> io::Result<()> {
    writeln!(w, "phi,M")?;
    let rows: Vec<(f64, f64)> = (1..=points)
        .into_par_iter()
        .map(|i| {
            let phi = -PI + TWO_PI * i as f64 / points as f64;
            (phi, empirical_cdf(phi, em))
        })
        .collect();
    for (phi, m) in rows {
        writeln!(w, "{phi:.16e},{m:.16e}")?;
    }
    Ok(())
}
