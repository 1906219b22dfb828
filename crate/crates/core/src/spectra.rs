//! Lyapunov exponents of the circle map, the pointwise dimension of the zero
//! measure, and the almost-everywhere critical exponent `kappa = log k / chi`.

use std::f64::consts::{LN_2, PI};
use std::io::{self, Write};

use num::complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    below_phi_e_curve, critical_temperature, disk_fixed_point, lift_raw, phi_e, require_expanding,
    slope_raw, TWO_PI,
};
use crate::error::{invalid, Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::params::{wrap_angle, ModelParams, TreeSpec};

/// `log(k (1 - t^2)) - 2 log|1 + w t|` with `w` the attracting disk fixed point.
///
/// Jensen's formula applied to `log|B'|` over the ACIM density, which is the
/// Poisson kernel at `w`; the only zero of `B'` in the disk is `-t`.
pub fn lyapunov_acim_closed(p: &ModelParams) -> Result<f64> {
    require_expanding(p, "the ACIM Lyapunov exponent")?;
    let w = disk_fixed_point(p)?;
    Ok(acim_from_disk_point(p, w))
}

fn acim_from_disk_point(p: &ModelParams, w: Complex64) -> f64 {
    let t = p.t();
    (p.k() as f64 * (1.0 - t * t)).ln() - 2.0 * (w * t + 1.0).norm().ln()
}

/// `2 pi log|k (1 - t^2) w (1 - w t) / ((w + t)(1 + w t)(t - w))|`, reported
/// next to the closed form for comparison. It does not satisfy `chi -> log k`
/// as `t -> 0`.
pub fn chi_acim_alt_normalization(p: &ModelParams) -> Result<f64> {
    require_expanding(p, "the ACIM Lyapunov exponent")?;
    let w = disk_fixed_point(p)?;
    let t = p.t();
    let num = w * (p.k() as f64 * (1.0 - t * t)) * (-w * t + 1.0);
    let den = (w + t) * (w * t + 1.0) * (-w + t);
    Ok(TWO_PI * (num / den).norm().ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffConfig {
    pub burn_in: u64,
    pub steps: u64,
    pub seeds: u32,
    pub base_seed: u64,
}

impl Default for BirkhoffConfig {
    fn default() -> Self {
        Self {
            burn_in: 1_000,
            steps: 1_000_000,
            seeds: 32,
            base_seed: 0x5eed_1ee_7a9e,
        }
    }
}

/// Above this standard error a Birkhoff estimate is flagged as unconverged.
pub const BIRKHOFF_STDERR_LIMIT: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffEstimate {
    pub value: f64,
    pub stderr: f64,
    pub converged: bool,
}

#[inline]
fn circle_step(theta: f64, k: f64, t: f64, phi: f64) -> f64 {
    let x = lift_raw(theta, k, t, phi).rem_euclid(TWO_PI);
    if x >= TWO_PI {
        0.0
    } else {
        x
    }
}

/// Time average of `log B'` along orbits from uniform random starts.
pub fn lyapunov_acim_birkhoff(p: &ModelParams, cfg: &BirkhoffConfig) -> Result<BirkhoffEstimate> {
    require_expanding(p, "the ACIM Lyapunov exponent")?;
    if cfg.steps == 0 || cfg.seeds < 2 {
        return Err(invalid("birkhoff", "need steps >= 1 and seeds >= 2"));
    }
    let (k, t, phi) = (p.k() as f64, p.t(), p.phi());
    let per_seed: Vec<f64> = (0..cfg.seeds)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed.wrapping_add(s as u64));
            let mut theta = rng.random::<f64>() * TWO_PI;
            for _ in 0..cfg.burn_in {
                theta = circle_step(theta, k, t, phi);
            }
            let mut sum = 0.0;
            for _ in 0..cfg.steps {
                sum += slope_raw(theta, k, t).ln();
                theta = circle_step(theta, k, t, phi);
            }
            sum / cfg.steps as f64
        })
        .collect();
    let (mean, stderr) = mean_stderr(&per_seed);
    Ok(BirkhoffEstimate {
        value: mean,
        stderr,
        converged: stderr <= BIRKHOFF_STDERR_LIMIT,
    })
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Largest number of depth-`n` preimages the pullback will hold.
pub const MAX_PREIMAGES: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmeEstimate {
    /// `(1/n) sum_{m=1}^n e_m`: the equal-weight average over depth-`n`
    /// preimages of the orbit mean of `log B'`.
    pub value: f64,
    /// `e_n = k^{-n} sum log B'(y)` over depth-`n` preimages `y`.
    pub last_level: f64,
    /// `|value - last_level|`, the size of the remaining truncation effect.
    pub stderr: f64,
    pub depth: u32,
}

/// The `k` preimages of `y` under the circle map, in `[0, 2pi)`.
fn preimages(y: f64, k: u32, t: f64, phi: f64) -> Vec<f64> {
    let kf = k as f64;
    // lift maps [0, 2pi) onto [phi, phi + 2pi k)
    let j0 = ((phi - y) / TWO_PI).ceil() as i64;
    (0..k as i64)
        .map(|j| {
            let target = y + TWO_PI * (j0 + j) as f64;
            let (mut lo, mut hi) = (0.0, TWO_PI);
            let mut x = (target - phi) / kf;
            x = x.clamp(lo, hi);
            for _ in 0..100 {
                let f = lift_raw(x, kf, t, phi) - target;
                if f < 0.0 {
                    lo = x;
                } else {
                    hi = x;
                }
                if f.abs() <= 1e-14 * target.abs().max(1.0) || hi - lo <= 1e-15 {
                    break;
                }
                let nx = x - f / slope_raw(x, kf, t);
                x = if nx > lo && nx < hi { nx } else { 0.5 * (lo + hi) };
            }
            x
        })
        .collect()
}

/// Lyapunov exponent of the measure of maximal entropy from uniformly
/// weighted iterated preimages of `theta = pi`.
pub fn lyapunov_mme(p: &ModelParams, depth: u32) -> Result<MmeEstimate> {
    require_expanding(p, "the MME Lyapunov exponent")?;
    if depth == 0 {
        return Err(invalid("depth", "must be >= 1"));
    }
    let (k, t, phi) = (p.k(), p.t(), p.phi());
    let size = (k as u64).checked_pow(depth).filter(|&s| s <= MAX_PREIMAGES);
    if size.is_none() {
        return Err(Error::SizeGuard(format!(
            "{k}^{depth} preimages exceed the cap of {MAX_PREIMAGES}"
        )));
    }
    let mut level = vec![PI];
    let mut e = Vec::with_capacity(depth as usize);
    for m in 1..=depth {
        level = level
            .par_iter()
            .flat_map_iter(|&y| preimages(y, k, t, phi))
            .collect();
        let logs: Vec<f64> = level.par_iter().map(|&x| slope_raw(x, k as f64, t).ln()).collect();
        let sum: f64 = logs.iter().sum();
        e.push(sum / (k as f64).powi(m as i32));
    }
    let value = e.iter().sum::<f64>() / depth as f64;
    let last = *e.last().expect("depth >= 1");
    Ok(MmeEstimate {
        value,
        last_level: last,
        stderr: (value - last).abs(),
        depth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionConfig {
    /// Coarsest half-width is `2^{-coarsest_exponent}`.
    pub coarsest_exponent: f64,
    pub scales_per_octave: u32,
    /// Finest scale must still hold this many zeros.
    pub min_zeros: u64,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        Self {
            coarsest_exponent: 3.0,
            scales_per_octave: 4,
            min_zeros: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub delta: f64,
    pub count: u64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub scales: Vec<ScalePoint>,
    pub warnings: Vec<String>,
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, R^2)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Distance from `phi` to the zero-free arc, or `None` when there is no gap.
fn room_in_support(k: u32, t: f64, phi: f64) -> Result<Option<f64>> {
    if t <= critical_temperature(k)? {
        return Ok(None);
    }
    Ok(Some(phi.abs() - phi_e(t, k)?))
}

/// Dyadic scales for the dimension fit at `phi`: from the coarsest half-width
/// that fits in the support down to the last one holding `min_zeros` zeros.
pub fn dimension_scales(em: &EmpiricalMeasure, phi: f64, cfg: &DimensionConfig) -> Result<(Vec<ScalePoint>, Vec<String>)> {
    if cfg.scales_per_octave == 0 {
        return Err(invalid("scales_per_octave", "must be >= 1"));
    }
    let phi = wrap_angle(phi);
    let mut warnings = Vec::new();
    let mut coarsest = (-cfg.coarsest_exponent).exp2();
    if let Some(room) = room_in_support(em.tree().k(), em.t(), phi)? {
        if room <= 0.0 {
            return Err(invalid("phi", format!("{phi} is not in the support at t = {}", em.t())));
        }
        if room < coarsest {
            warnings.push(format!("coarsest scale reduced from {coarsest:.4e} to {room:.4e} to stay in the support"));
            coarsest = room;
        }
    }
    let total = em.total() as f64;
    let mut scales = Vec::new();
    for j in 0.. {
        let delta = coarsest * (-(j as f64) / cfg.scales_per_octave as f64).exp2();
        let count = em.arc_count(phi, delta);
        if count < cfg.min_zeros || delta < 1e-300 {
            break;
        }
        scales.push(ScalePoint {
            delta,
            count,
            mass: count as f64 / total,
        });
    }
    Ok((scales, warnings))
}

/// Slope of `log mu([phi - delta, phi + delta])` against `log 2 delta`.
pub fn pointwise_dimension(em: &EmpiricalMeasure, phi: f64, cfg: &DimensionConfig) -> Result<DimensionEstimate> {
    let (scales, mut warnings) = dimension_scales(em, phi, cfg)?;
    if scales.len() < 3 {
        return Err(Error::Significance(format!(
            "only {} scales hold at least {} zeros; raise the level",
            scales.len(),
            cfg.min_zeros
        )));
    }
    if scales.len() < 2 * cfg.scales_per_octave as usize {
        warnings.push(format!("fit uses only {} scales", scales.len()));
    }
    let x: Vec<f64> = scales.iter().map(|s| (2.0 * s.delta).ln()).collect();
    let y: Vec<f64> = scales.iter().map(|s| s.mass.ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&x, &y);
    Ok(DimensionEstimate {
        slope,
        intercept,
        r_squared,
        scales,
        warnings,
    })
}

/// Fraction of the candidates that passed, alongside the accepted angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalSample {
    pub accepted: Vec<f64>,
    pub candidates_tried: u32,
    /// Fraction of all candidates whose windowed orbit mean is within 10% of chi.
    pub within_ten_percent: f64,
}

/// Windowed orbit mean of `log B'` along the lift orbit of `theta0 = phi`,
/// over iterates `[round(j0 ln2 / chi), round(j1 ln2 / chi)]`.
pub fn orbit_window_mean(p: &ModelParams, chi: f64, j0: f64, j1: f64) -> f64 {
    let (k, t, phi) = (p.k() as f64, p.t(), p.phi());
    let a = (j0 * LN_2 / chi).round() as u64;
    let b = ((j1 * LN_2 / chi).round() as u64).max(a + 1);
    let mut theta = phi.rem_euclid(TWO_PI);
    let mut sum = 0.0;
    for i in 0..b {
        if i >= a {
            sum += slope_raw(theta, k, t).ln();
        }
        theta = circle_step(theta, k, t, phi);
    }
    sum / (b - a) as f64
}

/// Draw field angles from the interior of the support and keep those whose
/// orbit, over the iterates that set the dimension fit's scale window,
/// averages `log B'` to within `rel_tol` of `chi`.
///
/// Typical points form a full-measure set that cannot be certified at finite
/// depth; this filter is a finite-depth stand-in for membership.
pub fn typical_points(
    tree: &TreeSpec,
    t: f64,
    count: usize,
    seed: u64,
    rel_tol: f64,
    cfg: &DimensionConfig,
) -> Result<TypicalSample> {
    let k = tree.k();
    let em = EmpiricalMeasure::new(*tree, t)?;
    let gap = if t > critical_temperature(k)? { phi_e(t, k)? } else { 0.0 };
    let margin = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = Vec::new();
    let mut tried = 0u32;
    let mut close = 0u32;
    while accepted.len() < count {
        if tried >= 10_000 {
            return Err(Error::NoConvergence(format!(
                "only {} of {count} typical points accepted after {tried} candidates",
                accepted.len()
            )));
        }
        let mag = rng.random_range(gap + margin..PI - margin);
        let phi = if rng.random::<bool>() { mag } else { -mag };
        tried += 1;
        let p = ModelParams::new(k, t, phi)?;
        let chi = lyapunov_acim_closed(&p)?;
        let (scales, _) = dimension_scales(&em, phi, cfg)?;
        let finest = match scales.last() {
            Some(s) => -s.delta.log2(),
            None => continue,
        };
        let coarsest = -scales[0].delta.log2();
        let mean = orbit_window_mean(&p, chi, coarsest, finest);
        let rel = (mean / chi - 1.0).abs();
        if rel <= 0.10 {
            close += 1;
        }
        if rel <= rel_tol {
            accepted.push(phi);
        }
    }
    Ok(TypicalSample {
        accepted,
        candidates_tried: tried,
        within_ten_percent: close as f64 / tried as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub phi: f64,
    /// `None` marks a grid point outside the support (in the zero-free arc).
    pub w_disk: Option<Complex64>,
    pub chi: Option<f64>,
    pub kappa: Option<f64>,
}

/// `kappa(phi, t) = log k / chi_{phi,t}` along a grid of field angles.
pub fn kappa_curve(t: f64, k: u32, phis: &[f64]) -> Result<Vec<KappaRow>> {
    if !(t > 0.0 && t < 1.0) {
        return Err(invalid("t", format!("{t} is not in (0, 1)")));
    }
    phis.par_iter()
        .map(|&phi| {
            let phi = wrap_angle(phi);
            if !below_phi_e_curve(k, t, phi)? {
                return Ok(KappaRow {
                    phi,
                    w_disk: None,
                    chi: None,
                    kappa: None,
                });
            }
            let p = ModelParams::new(k, t, phi)?;
            let w = disk_fixed_point(&p)?;
            let chi = acim_from_disk_point(&p, w);
            Ok(KappaRow {
                phi,
                w_disk: Some(w),
                chi: Some(chi),
                kappa: Some((k as f64).ln() / chi),
            })
        })
        .collect()
}

/// CSV with header `phi,w_disk_re,w_disk_im,chi,kappa,status`; rows in the
/// zero-free arc carry empty numeric fields and status `no-support`.
pub fn write_kappa_csv<W: Write>(rows: &[KappaRow], mut w: W) -> io::Result<()> {
    writeln!(w, "phi,w_disk_re,w_disk_im,chi,kappa,status")?;
    for r in rows {
        match (r.w_disk, r.chi, r.kappa) {
            (Some(wd), Some(chi), Some(kappa)) => writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{chi:.16e},{kappa:.16e},support",
                r.phi, wd.re, wd.im
            )?,
            _ => writeln!(w, "{:.16e},,,,,no-support", r.phi)?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub birkhoff: BirkhoffConfig,
    pub mme_depth: u32,
    pub dimension: DimensionConfig,
    /// Level of the rooted tree used for the pointwise dimension; `None` skips it.
    pub dimension_level: Option<u32>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            birkhoff: BirkhoffConfig::default(),
            mme_depth: 16,
            dimension: DimensionConfig::default(),
            dimension_level: Some(20),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub phi: f64,
    pub t: f64,
    pub k: u32,
    pub chi_acim_closed: f64,
    pub chi_acim_alt_normalization: f64,
    pub chi_acim_birkhoff: BirkhoffEstimate,
    pub chi_mme: MmeEstimate,
    pub dim_pointwise: Option<DimensionEstimate>,
    pub kappa: f64,
    /// `log k / chi_mme`, the dimension of the measure of maximal entropy.
    pub hd_mme: f64,
}

pub fn spectral_report(p: &ModelParams, cfg: &SpectralConfig) -> Result<SpectralReport> {
    let closed = lyapunov_acim_closed(p)?;
    let alt = chi_acim_alt_normalization(p)?;
    let birkhoff = lyapunov_acim_birkhoff(p, &cfg.birkhoff)?;
    let mme = lyapunov_mme(p, cfg.mme_depth)?;
    let dim = match cfg.dimension_level {
        Some(n) => {
            let em = EmpiricalMeasure::new(TreeSpec::rooted(n, p.k())?, p.t())?;
            Some(pointwise_dimension(&em, p.phi(), &cfg.dimension)?)
        }
        None => None,
    };
    let lk = (p.k() as f64).ln();
    Ok(SpectralReport {
        phi: p.phi(),
        t: p.t(),
        k: p.k(),
        chi_acim_closed: closed,
        chi_acim_alt_normalization: alt,
        chi_acim_birkhoff: birkhoff,
        chi_mme: mme,
        dim_pointwise: dim,
        kappa: lk / closed,
        hd_mme: lk / mme.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mp(t: f64, phi: f64) -> ModelParams {
        ModelParams::new(2, t, phi).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let chi = lyapunov_acim_closed(&mp(0.2, 0.0)).unwrap();
        assert!((chi - 0.623_810_7).abs() < 1e-6, "{chi}");
        assert!((LN_2 / chi - 1.111_149_8).abs() < 1e-6);
        assert!((lyapunov_acim_closed(&mp(1e-4, 1.0)).unwrap() - LN_2).abs() < 1e-3);
        assert!((lyapunov_acim_closed(&mp(0.0, 0.4)).unwrap() - LN_2).abs() < 1e-15);
        for (phi, expect) in [(0.7, 0.64259), (1.3, 0.65406), (2.1, 0.66138), (2.9, 0.66400), (-1.7, 0.65851)] {
            let chi = lyapunov_acim_closed(&mp(0.2, phi)).unwrap();
            assert!((chi - expect).abs() < 1e-5, "{phi}: {chi}");
        }
        assert!(matches!(
            lyapunov_acim_closed(&mp(0.5, 0.2)),
            Err(Error::NotExpanding { .. })
        ));
    }

    #[test]
    fn birkhoff_agrees_on_short_run() {
        let cfg = BirkhoffConfig {
            steps: 100_000,
            seeds: 8,
            ..Default::default()
        };
        let p = mp(0.2, 0.0);
        let b = lyapunov_acim_birkhoff(&p, &cfg).unwrap();
        let c = lyapunov_acim_closed(&p).unwrap();
        assert!((b.value - c).abs() < 2e-3 + 3.0 * b.stderr, "{b:?} vs {c}");
        let again = lyapunov_acim_birkhoff(&p, &cfg).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn mme_at_zero_temperature_is_log_k() {
        let m = lyapunov_mme(&mp(0.0, 1.0), 8).unwrap();
        assert!((m.value - LN_2).abs() < 1e-14);
        assert!(m.stderr < 1e-14);
    }

    #[test]
    fn mme_exceeds_log_k() {
        let m = lyapunov_mme(&mp(0.2, 0.0), 14).unwrap();
        assert!(m.value > LN_2 + 5.0 * m.stderr, "{m:?}");
        assert!(matches!(
            lyapunov_mme(&ModelParams::new(3, 0.2, 0.0).unwrap(), 20),
            Err(Error::SizeGuard(_))
        ));
    }

    #[test]
    fn preimages_map_back() {
        let (t, phi) = (0.6, 2.2);
        let y = 1.234;
        let xs = preimages(y, 3, t, phi);
        assert_eq!(xs.len(), 3);
        for x in xs {
            assert!((circle_step(x, 3.0, t, phi) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_near_zero_temperature_is_one() {
        let em = EmpiricalMeasure::new(TreeSpec::rooted(14, 2).unwrap(), 1e-6).unwrap();
        let d = pointwise_dimension(&em, 0.4, &DimensionConfig::default()).unwrap();
        assert!((d.slope - 1.0).abs() < 0.01, "{d:?}");
        assert!(d.r_squared > 0.999);
    }

    #[test]
    fn dimension_rejects_the_gap() {
        let em = EmpiricalMeasure::new(TreeSpec::rooted(10, 2).unwrap(), 0.5).unwrap();
        assert!(pointwise_dimension(&em, 0.1, &DimensionConfig::default()).is_err());
    }

    #[test]
    fn kappa_curve_marks_the_gap() {
        let t = 2.0 / 3.0;
        let rows = kappa_curve(t, 2, &[0.0, 0.5, 1.5, 3.0]).unwrap();
        let pe = phi_e(t, 2).unwrap();
        for r in &rows {
            assert_eq!(r.kappa.is_none(), r.phi.abs() <= pe);
            if let Some(kappa) = r.kappa {
                assert!(kappa > 1.0);
            }
        }
        let near = kappa_curve(t, 2, &[pe + 1e-3, pe + 0.5]).unwrap();
        assert!(near[0].kappa.unwrap() > near[1].kappa.unwrap());
        let mut buf = Vec::new();
        write_kappa_csv(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.lines().nth(1).unwrap().ends_with(",,,,,no-support"));
    }
}
