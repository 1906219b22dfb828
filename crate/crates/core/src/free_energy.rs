//! Free energy and magnetization in the field variable `z`, and the radial
//! critical exponent read off the symmetric mass function of the zeros.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use num::complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{critical_temperature, phi_e};
use crate::error::{invalid, Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::params::{check_t, wrap_angle, TreeSpec};
use crate::quadrature::{integrate, QuadResult};
use crate::spectra::linear_fit;
use crate::zeros::{enumerate_zeros, enumerate_zeros_in, ZeroSet};

/// Temperature in units with `J = 1`: `T = -2 / ln t`.
pub fn temperature_units(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(invalid("t", format!("{t} is not in (0, 1)")));
    }
    Ok(-2.0 / t.ln())
}

const ZERO_TOL: f64 = 1e-13;
/// Distances below this (relative) count as evaluation at a zero.
const AT_ZERO: f64 = 8.0 * f64::EPSILON;

fn check_z(z: Complex64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(invalid("z", format!("{z} is not finite")));
    }
    if z == Complex64::new(0.0, 0.0) {
        return Err(invalid("z", "must be nonzero"));
    }
    Ok(())
}

/// `(1/N) sum_i log|z - e^{i theta_i}|`, compensated.
pub fn log_potential(z: Complex64, angles: &[f64]) -> Result<f64> {
    if angles.is_empty() {
        return Err(invalid("angles", "empty zero set"));
    }
    let terms: Vec<f64> = angles
        .par_iter()
        .map(|&a| (z - Complex64::from_polar(1.0, a)).norm())
        .map(|d| if d <= AT_ZERO * z.norm().max(1.0) { f64::NEG_INFINITY } else { d.ln() })
        .collect();
    if let Some(i) = terms.iter().position(|v| v.is_infinite()) {
        return Err(Error::AtZero(format!("z = {z} coincides with the zero at angle {}", angles[i])));
    }
    Ok(neumaier(terms.iter().copied()) / angles.len() as f64)
}

fn neumaier<I: Iterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let s = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - s) + x;
        } else {
            c += (x - s) + sum;
        }
        sum = s;
    }
    sum + c
}

/// `F(z) = -2T (1/N) sum log|z - zeta_i| + T (log|z| + log t)` over an
/// enumerated zero set.
pub fn free_energy_from_zeros(z: Complex64, zs: &ZeroSet) -> Result<f64> {
    check_z(z)?;
    let temp = temperature_units(zs.t)?;
    let u = log_potential(z, &zs.angles)?;
    Ok(-2.0 * temp * u + temp * (z.norm().ln() + zs.t.ln()))
}

/// Free energy per site from the logarithmic potential of the zeros.
pub fn free_energy_electrostatic(z: Complex64, tree: &TreeSpec, t: f64) -> Result<f64> {
    check_z(z)?;
    temperature_units(t)?;
    let zs = enumerate_zeros(tree, t, ZERO_TOL)?;
    free_energy_from_zeros(z, &zs)
}

/// `log |P_n(z)|` for the monic partition polynomial, by the ratio recursion
/// `w -> z ((w + t)/(1 + t w))^e` with `log|A|` accumulated separately.
pub fn log_partition_modulus(z: Complex64, tree: &TreeSpec, t: f64) -> Result<f64> {
    check_z(z)?;
    check_t(t)?;
    let k = tree.k() as f64;
    let steps = tree.level();
    let mut w = z;
    let mut log_a = 0.0;
    let last_exponent = |j: u32| match tree.variant() {
        crate::params::TreeVariant::Full if j + 1 == steps => k + 1.0,
        _ => k,
    };
    for j in 0..steps {
        let e = last_exponent(j);
        let den = Complex64::new(1.0, 0.0) + w * t;
        let den_abs = den.norm();
        if den_abs == 0.0 {
            return Err(Error::AtZero(format!("1 + t w vanishes at step {j} for z = {z}")));
        }
        log_a = e * (log_a + den_abs.ln());
        let ratio = (w + t) / den;
        w = z * ratio.powf(e);
        if !(w.re.is_finite() && w.im.is_finite()) {
            return Err(Error::Significance(format!("ratio overflow at step {j} for z = {z}")));
        }
    }
    let one_plus_w = if w.norm() > 1.0 {
        w.norm().ln() + (Complex64::new(1.0, 0.0) + w.inv()).norm().ln()
    } else {
        (Complex64::new(1.0, 0.0) + w).norm().ln()
    };
    if (Complex64::new(1.0, 0.0) + w).norm() < 1e-12 * w.norm().max(1.0) {
        return Err(Error::Significance(format!(
            "|1 + w_n| = {:e} at z = {z}: too close to a zero",
            (Complex64::new(1.0, 0.0) + w).norm()
        )));
    }
    Ok(log_a + one_plus_w)
}

/// Free energy per site from the exact recursion, in the same normalization
/// as [`free_energy_electrostatic`].
pub fn free_energy_recursive(z: Complex64, tree: &TreeSpec, t: f64) -> Result<f64> {
    let temp = temperature_units(t)?;
    let lp = log_partition_modulus(z, tree, t)?;
    let n = tree.vertex_count() as f64;
    Ok(-2.0 * temp * lp / n + temp * (z.norm().ln() + t.ln()))
}

/// Rejects `z` on the support of the limiting measure.
fn check_off_support(z: Complex64, t: f64, k: u32) -> Result<()> {
    if (z.norm() - 1.0).abs() > 1e-12 {
        return Ok(());
    }
    let phi = z.arg();
    if t > critical_temperature(k)? && phi.abs() < phi_e(t, k)? {
        return Ok(());
    }
    Err(invalid("z", format!("{z} lies on the support of the zero distribution at t = {t}")))
}

/// `M(z) = -4z (1/N) sum 1/(z - zeta_i) + 2`.
pub fn magnetization_from_zeros(z: Complex64, zs: &ZeroSet) -> Result<Complex64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(invalid("z", format!("{z} is not finite")));
    }
    check_off_support(z, zs.t, zs.tree.k())?;
    let terms: Vec<Complex64> = zs
        .angles
        .par_iter()
        .map(|&a| z - Complex64::from_polar(1.0, a))
        .map(|d| if d.norm() <= AT_ZERO * z.norm().max(1.0) { Complex64::new(f64::NAN, 0.0) } else { d.inv() })
        .collect();
    if terms.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::AtZero(format!("z = {z} is a zero")));
    }
    let re = neumaier(terms.iter().map(|c| c.re));
    let im = neumaier(terms.iter().map(|c| c.im));
    let mean = Complex64::new(re, im) / zs.angles.len() as f64;
    Ok(-4.0 * z * mean + 2.0)
}

pub fn magnetization(z: Complex64, tree: &TreeSpec, t: f64) -> Result<Complex64> {
    check_t(t)?;
    check_off_support(z, t, tree.k())?;
    let zs = enumerate_zeros(tree, t, ZERO_TOL)?;
    magnetization_from_zeros(z, &zs)
}

/// `(r, F(r e^{i phi}))` along a ray.
pub fn radial_scan(tree: &TreeSpec, t: f64, phi: f64, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    radii
        .par_iter()
        .map(|&r| Ok((r, free_energy_recursive(Complex64::from_polar(r, phi), tree, t)?)))
        .collect()
}

/// CSV with header `r,free_energy`.
pub fn write_radial_csv<W: Write>(rows: &[(f64, f64)], mut w: W) -> io::Result<()> {
    writeln!(w, "r,free_energy")?;
    for (r, f) in rows {
        writeln!(w, "{r:.16e},{f:.16e}")?;
    }
    Ok(())
}

/// The symmetric mass function `Phi(zeta) = mu([phi - zeta, phi + zeta])` on
/// `[0, delta0]`: constant between consecutive atom distances.
#[derive(Debug, Clone, PartialEq)]
pub struct MassProfile {
    pub phi: f64,
    pub delta0: f64,
    /// Sorted distances `|zeta_i - phi|` of the atoms within `delta0`.
    pub atoms: Vec<f64>,
    /// Piece endpoints `0 = b_0 < b_1 < ... = delta0`.
    pub breaks: Vec<f64>,
    /// `Phi` on `(b_i, b_{i+1})`, read from the exact counting function.
    pub values: Vec<f64>,
    pub total: u64,
}

impl MassProfile {
    pub fn new(em: &EmpiricalMeasure, phi: f64, delta0: f64) -> Result<Self> {
        if !(delta0 > 0.0 && delta0 < PI) {
            return Err(invalid("delta0", format!("{delta0} is not in (0, pi)")));
        }
        let phi = wrap_angle(phi);
        let (lo, hi) = (phi - delta0, phi + delta0);
        let mut raw = Vec::new();
        let mut grab = |a: f64, b: f64| -> Result<()> {
            raw.extend(enumerate_zeros_in(em.tree(), em.t(), a, b, ZERO_TOL)?.into_iter().map(|z| z.0));
            Ok(())
        };
        if lo < -PI {
            grab(-PI, hi)?;
            grab(lo + 2.0 * PI, PI)?;
        } else if hi > PI {
            grab(lo, PI)?;
            grab(-PI, hi - 2.0 * PI)?;
        } else {
            grab(lo, hi)?;
        }
        let mut atoms: Vec<f64> = raw
            .into_iter()
            .map(|a| wrap_angle(a - phi).abs())
            .filter(|&d| d <= delta0)
            .collect();
        atoms.sort_by(f64::total_cmp);
        if atoms.first() == Some(&0.0) {
            return Err(Error::AtZero(format!("phi = {phi} is itself a zero; Phi(0+) > 0")));
        }
        let mut breaks = Vec::with_capacity(atoms.len() + 2);
        breaks.push(0.0);
        for &d in &atoms {
            if d > *breaks.last().unwrap() && d < delta0 {
                breaks.push(d);
            }
        }
        breaks.push(delta0);
        let total = em.total();
        let values = breaks
            .par_windows(2)
            .map(|w| em.arc_count(phi, 0.5 * (w[0] + w[1])) as f64 / total as f64)
            .collect();
        Ok(Self {
            phi,
            delta0,
            atoms,
            breaks,
            values,
            total,
        })
    }

    /// `Phi(delta0)`.
    pub fn outer_mass(&self) -> f64 {
        self.atoms.len() as f64 / self.total as f64
    }

    /// `int_0^delta0 kernel(zeta) Phi(zeta) dzeta`, piecewise, with an extra
    /// split at `split` when it falls inside a piece.
    pub fn integrate_against<K: Fn(f64) -> f64 + Sync>(&self, kernel: &K, split: Option<f64>, rel_tol: f64) -> QuadResult {
        let parts: Vec<QuadResult> = self
            .breaks
            .par_windows(2)
            .zip(self.values.par_iter())
            .filter(|(_, &v)| v > 0.0)
            .map(|(w, &v)| {
                let (a, b) = (w[0], w[1]);
                let mut r = match split {
                    Some(s) if s > a && s < b => {
                        let l = integrate(kernel, a, s, 0.0, rel_tol, 40);
                        let u = integrate(kernel, s, b, 0.0, rel_tol, 40);
                        QuadResult {
                            value: l.value + u.value,
                            error: l.error + u.error,
                            evals: l.evals + u.evals,
                            depth_limited: l.depth_limited || u.depth_limited,
                        }
                    }
                    _ => integrate(kernel, a, b, 0.0, rel_tol, 40),
                };
                r.value *= v;
                r.error *= v;
                r
            })
            .collect();
        let mut out = QuadResult {
            value: 0.0,
            error: 0.0,
            evals: 0,
            depth_limited: false,
        };
        out.value = neumaier(parts.iter().map(|p| p.value));
        for p in parts {
            out.error += p.error;
            out.evals += p.evals;
            out.depth_limited |= p.depth_limited;
        }
        out
    }
}

/// Order `m`: the largest integer with `2m < kappa_prior`.
pub fn singular_order(kappa_prior: f64) -> Result<u32> {
    if !(kappa_prior > 0.0 && kappa_prior.is_finite()) {
        return Err(invalid("kappa_prior", format!("{kappa_prior} must be positive")));
    }
    Ok(((kappa_prior / 2.0).ceil() - 1.0).max(0.0) as u32)
}

const QUAD_REL_TOL: f64 = 1e-10;

/// `h_sing(y) = int_0^delta0 zeta Phi / (zeta^2 + y^2) (y / zeta)^{2m+2} dzeta`.
pub fn h_sing(profile: &MassProfile, y: f64, m: u32) -> QuadResult {
    let p = 2 * m as i32 + 2;
    let kernel = move |z: f64| z / (z * z + y * y) * (y / z).powi(p);
    profile.integrate_against(&kernel, Some(y), QUAD_REL_TOL)
}

/// `h(y) = int_0^delta0 zeta Phi / (zeta^2 + y^2) dzeta`, the full potential
/// integral that splits into the regular polynomial and `+-h_sing`.
pub fn h_total(profile: &MassProfile, y: f64) -> QuadResult {
    let kernel = move |z: f64| z / (z * z + y * y);
    profile.integrate_against(&kernel, Some(y), QUAD_REL_TOL)
}

/// `c_j = int_0^delta0 Phi(zeta) / zeta^{2j+1} dzeta` for `j = 0..=m`.
pub fn regular_coefficients(profile: &MassProfile, m: u32) -> Vec<f64> {
    (0..=m)
        .map(|j| {
            let p = 2 * j as i32 + 1;
            profile.integrate_against(&move |z: f64| z.powi(-p), None, QUAD_REL_TOL).value
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularConfig {
    /// Largest `y` is `delta0 * 2^{-first_octave}`.
    pub first_octave: f64,
    pub points_per_octave: u32,
    /// Smallest `y` must still see this many zeros in `[phi - y, phi + y]`.
    pub min_zeros: u64,
}

impl Default for SingularConfig {
    fn default() -> Self {
        Self {
            first_octave: 4.0,
            points_per_octave: 2,
            min_zeros: 50,
        }
    }
}

/// Dyadic `y`-grid between `delta0 2^{-first_octave}` and the resolution floor.
pub fn dyadic_y_grid(em: &EmpiricalMeasure, phi: f64, delta0: f64, cfg: &SingularConfig) -> Result<Vec<f64>> {
    if cfg.points_per_octave == 0 {
        return Err(invalid("points_per_octave", "must be >= 1"));
    }
    let mut ys = Vec::new();
    for j in 0.. {
        let y = delta0 * (-(cfg.first_octave + j as f64 / cfg.points_per_octave as f64)).exp2();
        if y < 1e-300 || em.arc_count(phi, y) < cfg.min_zeros {
            break;
        }
        ys.push(y);
    }
    Ok(ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularFit {
    pub phi: f64,
    pub t: f64,
    pub delta0: f64,
    pub m_order: u32,
    /// Log–log slope of `h_sing` against `y`.
    pub kappa: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(y, h_sing(y))`.
    pub points: Vec<(f64, f64)>,
    pub quadrature_error: f64,
    /// False when `R^2 < 0.98` or the quadrature hit its depth limit.
    pub stable: bool,
    pub warnings: Vec<String>,
}

pub const MIN_R_SQUARED: f64 = 0.98;

/// Log–log slope of `h_sing` over `ys`, with the order fixed by `kappa_prior`.
pub fn singular_exponent(
    em: &EmpiricalMeasure,
    phi: f64,
    kappa_prior: f64,
    delta0: f64,
    ys: &[f64],
) -> Result<SingularFit> {
    let m = singular_order(kappa_prior)?;
    let phi = wrap_angle(phi);
    if em.t() > critical_temperature(em.tree().k())? {
        let room = phi.abs() - phi_e(em.t(), em.tree().k())?;
        if room <= 0.0 {
            return Err(invalid("phi", format!("{phi} is not in the support at t = {}", em.t())));
        }
    }
    if ys.len() < 3 {
        return Err(Error::Significance(format!("{} y values; need at least 3", ys.len())));
    }
    if ys.iter().any(|&y| !(y > 0.0 && y < delta0)) {
        return Err(invalid("y", format!("grid values must lie in (0, {delta0})")));
    }
    let profile = MassProfile::new(em, phi, delta0)?;
    let evals: Vec<QuadResult> = ys.iter().map(|&y| h_sing(&profile, y, m)).collect();
    let mut warnings = Vec::new();
    if evals.iter().any(|q| q.value <= 0.0) {
        return Err(Error::Significance("h_sing vanished on the grid; lower the first octave".into()));
    }
    let x: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let lh: Vec<f64> = evals.iter().map(|q| q.value.ln()).collect();
    let (kappa, intercept, r_squared) = linear_fit(&x, &lh);
    let depth_limited = evals.iter().any(|q| q.depth_limited);
    if r_squared < MIN_R_SQUARED {
        warnings.push(format!("slope unstable: R^2 = {r_squared:.4} < {MIN_R_SQUARED}"));
    }
    if depth_limited {
        warnings.push("quadrature hit its depth limit".into());
    }
    if kappa <= 2.0 * m as f64 || kappa > 2.0 * m as f64 + 2.0 {
        warnings.push(format!("fitted kappa {kappa:.4} is outside the window (2m, 2m+2] for m = {m}"));
    }
    Ok(SingularFit {
        phi,
        t: em.t(),
        delta0,
        m_order: m,
        kappa,
        intercept,
        r_squared,
        points: ys.iter().copied().zip(evals.iter().map(|q| q.value)).collect(),
        quadrature_error: evals.iter().map(|q| q.error).sum(),
        stable: r_squared >= MIN_R_SQUARED && !depth_limited,
        warnings,
    })
}

/// CSV with header `y,h_sing,fit`.
pub fn write_singular_csv<W: Write>(fit: &SingularFit, mut w: W) -> io::Result<()> {
    writeln!(w, "y,h_sing,fit")?;
    for &(y, h) in &fit.points {
        let model = (fit.intercept + fit.kappa * y.ln()).exp();
        writeln!(w, "{y:.16e},{h:.16e},{model:.16e}")?;
    }
    Ok(())
}

/// Both sides of `int f dPhi = f(delta0) Phi(delta0) - int f' Phi` for
/// `f(zeta) = log(zeta^2 + y^2)` on `(0, delta0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartsCheck {
    /// `(1/N) sum f(d_i)` over the atoms.
    pub atom_sum: f64,
    pub boundary_minus_integral: f64,
    pub quadrature_error: f64,
}

impl PartsCheck {
    pub fn discrepancy(&self) -> f64 {
        (self.atom_sum - self.boundary_minus_integral).abs()
    }
}

pub fn integration_by_parts_check(profile: &MassProfile, y: f64) -> PartsCheck {
    let f = |z: f64| (z * z + y * y).ln();
    let n = profile.total as f64;
    let atom_sum = neumaier(profile.atoms.iter().map(|&d| f(d))) / n;
    let q = profile.integrate_against(&move |z: f64| 2.0 * z / (z * z + y * y), Some(y), QUAD_REL_TOL);
    PartsCheck {
        atom_sum,
        boundary_minus_integral: f(profile.delta0) * profile.outer_mass() - q.value,
        quadrature_error: q.error,
    }
}

/// Regular part after removing the singular integral:
/// `h(y) - (-1)^{m+1} h_sing(y)`, fitted by an even polynomial of degree `2m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularPartCheck {
    pub m_order: u32,
    /// Least-squares coefficients of `sum_j a_j y^{2j}`.
    pub fitted: Vec<f64>,
    /// `(-1)^j c_j`.
    pub direct: Vec<f64>,
    /// Largest `|h_reg(y) - fit(y)| / |h(y)|` over the grid.
    pub max_residual: f64,
}

pub fn regular_part_check(profile: &MassProfile, m: u32, ys: &[f64]) -> Result<RegularPartCheck> {
    if ys.len() < m as usize + 2 {
        return Err(Error::Significance(format!("need more than {} y values", m + 1)));
    }
    let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
    let rows: Vec<(f64, f64)> = ys
        .iter()
        .map(|&y| {
            let h = h_total(profile, y).value;
            (h, h - sign * h_sing(profile, y, m).value)
        })
        .collect();
    let scale = ys.iter().fold(0.0f64, |a, &y| a.max(y));
    let cols = m as usize + 1;
    let a = DMatrix::from_fn(ys.len(), cols, |i, j| (ys[i] / scale).powi(2 * j as i32));
    let b = DVector::from_iterator(ys.len(), rows.iter().map(|r| r.1));
    let svd = a.clone().svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::Internal(format!("least squares failed: {e}")))?;
    let fitted: Vec<f64> = (0..cols).map(|j| sol[j] / scale.powi(2 * j as i32)).collect();
    let direct: Vec<f64> = regular_coefficients(profile, m)
        .into_iter()
        .enumerate()
        .map(|(j, c)| if j % 2 == 0 { c } else { -c })
        .collect();
    let model = &a * &sol;
    let max_residual = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.1 - model[i]).abs() / r.0.abs())
        .fold(0.0, f64::max);
    Ok(RegularPartCheck {
        m_order: m,
        fitted,
        direct,
        max_residual,
    })
}

/// Everything computed at one field value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyReport {
    pub z: Complex64,
    pub t: f64,
    pub level: u32,
    pub f_electrostatic: f64,
    pub f_recursive: f64,
    pub magnetization: Option<Complex64>,
    pub kappa_fit: Option<SingularFit>,
    pub m_order: Option<u32>,
}

pub fn free_energy_report(z: Complex64, tree: &TreeSpec, t: f64, kappa_fit: Option<SingularFit>) -> Result<FreeEnergyReport> {
    check_z(z)?;
    temperature_units(t)?;
    let zs = enumerate_zeros(tree, t, ZERO_TOL)?;
    let magnetization = match magnetization_from_zeros(z, &zs) {
        Ok(m) => Some(m),
        Err(Error::InvalidParameter { .. }) => None,
        Err(e) => return Err(e),
    };
    let m_order = kappa_fit.as_ref().map(|f| f.m_order);
    Ok(FreeEnergyReport {
        z,
        t,
        level: tree.level(),
        f_electrostatic: free_energy_from_zeros(z, &zs)?,
        f_recursive: free_energy_recursive(z, tree, t)?,
        magnetization,
        kappa_fit,
        m_order,
    })
}
