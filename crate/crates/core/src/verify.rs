//! Self-check suite: oracle comparisons and structural identities, run at a
//! quick or a full scale, producing a hashed, reproducible report.

use std::f64::consts::{LN_2, PI};

use num::complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{critical_temperature, lift_eval, phi_e, tree_lift, TWO_PI};
use crate::error::Result;
use crate::export::{sha256_hex, to_json, SCHEMA_VERSION};
use crate::free_energy::{
    dyadic_y_grid, free_energy_from_zeros, free_energy_recursive, magnetization_from_zeros, singular_exponent,
    SingularConfig,
};
use crate::measure::{cdf_distance_rooted_full, max_gap, EmpiricalMeasure};
use crate::params::{ModelParams, Temperature, TreeSpec, TreeVariant};
use crate::partition::{partition_poly_bruteforce, partition_poly_recursive, poly_roots_on_circle};
use crate::spectra::{
    lyapunov_acim_birkhoff, lyapunov_acim_closed, lyapunov_mme, pointwise_dimension, BirkhoffConfig,
    DimensionConfig,
};
use crate::zeros::{enumerate_zeros, min_positive_zero, zero_count};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// The measured quantity compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
    /// SHA-256 of the report serialized with this field empty.
    pub hash: String,
}

impl VerifyReport {
    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

fn outcome(name: &str, passed: bool, value: f64, threshold: f64, detail: impl Into<String>) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed,
        value,
        threshold,
        detail: detail.into(),
    }
}

struct Scale {
    oracle_levels: u32,
    brute_max_vertices: u64,
    gap_max_level: u32,
    density_levels: [u32; 3],
    rooted_full_level: u32,
    rooted_full_grid: usize,
    birkhoff: BirkhoffConfig,
    lyapunov_grid: usize,
    mme_depth: u32,
    ordering_samples: usize,
    dimension_level: u32,
    dimension_tol: f64,
    singular_level: u32,
    structural_cases: usize,
    free_energy_level: u32,
    free_energy_points: usize,
}

impl Scale {
    fn of(suite: Suite, seed: u64) -> Self {
        match suite {
            Suite::Quick => Self {
                oracle_levels: 2,
                brute_max_vertices: 15,
                gap_max_level: 8,
                density_levels: [4, 6, 8],
                rooted_full_level: 12,
                rooted_full_grid: 2000,
                birkhoff: BirkhoffConfig {
                    burn_in: 1000,
                    steps: 100_000,
                    seeds: 8,
                    base_seed: seed,
                },
                lyapunov_grid: 2,
                mme_depth: 12,
                ordering_samples: 4,
                dimension_level: 16,
                dimension_tol: 0.15,
                singular_level: 16,
                structural_cases: 200,
                free_energy_level: 10,
                free_energy_points: 5,
            },
            Suite::Full => Self {
                oracle_levels: 3,
                brute_max_vertices: 22,
                gap_max_level: 12,
                density_levels: [6, 10, 16],
                rooted_full_level: 14,
                rooted_full_grid: 10_000,
                birkhoff: BirkhoffConfig {
                    base_seed: seed,
                    ..BirkhoffConfig::default()
                },
                lyapunov_grid: 5,
                mme_depth: 16,
                ordering_samples: 10,
                dimension_level: 20,
                dimension_tol: 0.10,
                singular_level: 20,
                structural_cases: 1000,
                free_energy_level: 16,
                free_energy_points: 20,
            },
        }
    }
}

fn guarded(name: &str, f: impl FnOnce() -> Result<CheckOutcome>) -> CheckOutcome {
    f().unwrap_or_else(|e| outcome(name, false, f64::NAN, f64::NAN, format!("error: {e}")))
}

/// Run the suite. The report depends only on `suite` and `seed`.
pub fn run_verify(suite: Suite, seed: u64) -> VerifyReport {
    let s = Scale::of(suite, seed);
    let checks = vec![
        guarded("zeros_match_polynomial_roots", || zeros_vs_roots(&s)),
        guarded("recursion_matches_bruteforce", || recursion_vs_bruteforce(&s)),
        guarded("zero_counts", zero_counts),
        guarded("zero_free_arc", || zero_free_arc(&s)),
        guarded("phi_e_values", phi_e_values),
        guarded("gaps_shrink_with_level", || gaps_shrink(&s)),
        guarded("rooted_full_cdf_distance", || rooted_full(&s)),
        guarded("lyapunov_closed_vs_birkhoff", || lyapunov_cross(&s)),
        guarded("lyapunov_reference_values", lyapunov_reference),
        guarded("lyapunov_ordering", || lyapunov_ordering(&s, seed)),
        guarded("pointwise_dimension_at_zero_field", || dimension_at_zero(&s)),
        guarded("singular_exponent_lebesgue_limit", || singular_lebesgue(&s)),
        guarded("structural_identities", || structural(&s, seed)),
        guarded("free_energy_cross_method", || free_energy_cross(&s, seed)),
        guarded("magnetization_limits", magnetization_limits),
    ];
    let passed = checks.iter().all(|c| c.passed);
    let mut report = VerifyReport {
        schema_version: SCHEMA_VERSION,
        suite,
        seed,
        passed,
        checks,
        hash: String::new(),
    };
    report.hash = sha256_hex(to_json(&report).unwrap_or_default().as_bytes());
    report
}

fn zeros_vs_roots(s: &Scale) -> Result<CheckOutcome> {
    let (mut worst_angle, mut worst_radius) = (0.0f64, 0.0f64);
    let mut cases = 0;
    for n in 1..=s.oracle_levels {
        for (p, q) in [(1, 5), (1, 2)] {
            let tree = TreeSpec::rooted(n, 2)?;
            let t = Temperature::from_ratio(p, q)?;
            let roots = poly_roots_on_circle(&partition_poly_recursive(&tree, &t)?)?;
            let zs = enumerate_zeros(&tree, t.value(), 1e-13)?;
            for (r, a) in roots.iter().zip(&zs.angles) {
                worst_angle = worst_angle.max((r.angle - a).abs());
                worst_radius = worst_radius.max(r.radius_deviation);
            }
            if roots.len() != zs.len() {
                worst_angle = f64::INFINITY;
            }
            cases += 1;
        }
    }
    Ok(outcome(
        "zeros_match_polynomial_roots",
        worst_angle <= 1e-8 && worst_radius <= 1e-9,
        worst_angle,
        1e-8,
        format!("{cases} cases; largest ||root| - 1| = {worst_radius:.3e}"),
    ))
}

/// Every rooted and full tree with at most `max_vertices` vertices and `n >= 1`.
pub fn small_trees(max_vertices: u64) -> Vec<TreeSpec> {
    let mut out = Vec::new();
    for k in 2..max_vertices as u32 {
        for variant in [TreeVariant::Rooted, TreeVariant::Full] {
            for n in 1.. {
                match TreeSpec::new(variant, n, k) {
                    Ok(tree) if tree.vertex_count() <= max_vertices => out.push(tree),
                    _ => break,
                }
            }
        }
    }
    out
}

fn recursion_vs_bruteforce(s: &Scale) -> Result<CheckOutcome> {
    let t = Temperature::from_ratio(1, 5)?;
    let trees = small_trees(s.brute_max_vertices);
    let mut mismatches = 0usize;
    for tree in &trees {
        let a = partition_poly_recursive(tree, &t)?;
        let b = partition_poly_bruteforce(tree, &t)?;
        if a.coeffs != b.coeffs {
            mismatches += 1;
        }
    }
    Ok(outcome(
        "recursion_matches_bruteforce",
        mismatches == 0,
        mismatches as f64,
        0.0,
        format!("{} trees with |V| <= {}", trees.len(), s.brute_max_vertices),
    ))
}

fn zero_counts() -> Result<CheckOutcome> {
    let mut bad = 0;
    for k in [2u64, 3] {
        for n in 0..=6u32 {
            let rooted = TreeSpec::rooted(n, k as u32)?;
            if zero_count(&rooted) != (k.pow(n + 1) - 1) / (k - 1) {
                bad += 1;
            }
            if n >= 1 {
                let full = TreeSpec::full(n, k as u32)?;
                let expect = 1 + (k + 1) * (k.pow(n) - 1) / (k - 1);
                if zero_count(&full) != expect {
                    bad += 1;
                }
                if n <= 4 && enumerate_zeros(&full, 0.3, 1e-12)?.len() as u64 != expect {
                    bad += 1;
                }
            }
        }
    }
    Ok(outcome("zero_counts", bad == 0, bad as f64, 0.0, "k in {2, 3}, n <= 6"))
}

fn zero_free_arc(s: &Scale) -> Result<CheckOutcome> {
    let mut margin = f64::INFINITY;
    for t in [0.4, 0.5, 0.7, 0.9] {
        let edge = phi_e(t, 2)?;
        for n in 1..=s.gap_max_level {
            for tree in [TreeSpec::rooted(n, 2)?, TreeSpec::full(n, 2)?] {
                let zs = enumerate_zeros(&tree, t, 1e-12)?;
                if let Some(a) = min_positive_zero(&zs) {
                    margin = margin.min(a - edge);
                }
            }
        }
    }
    Ok(outcome(
        "zero_free_arc",
        margin >= -1e-6,
        margin,
        -1e-6,
        format!("min over t, n <= {}, both variants of (first positive zero - phi_e)", s.gap_max_level),
    ))
}

fn phi_e_values() -> Result<CheckOutcome> {
    let a = (phi_e(0.5, 2)? - 0.308).abs();
    let b = (phi_e(0.9, 2)? - 1.873).abs();
    let worst = a.max(b);
    Ok(outcome("phi_e_values", worst <= 0.01, worst, 0.01, "phi_e(0.5) ~ 0.308, phi_e(0.9) ~ 1.873"))
}

fn gaps_shrink(s: &Scale) -> Result<CheckOutcome> {
    let g: Vec<f64> = s
        .density_levels
        .iter()
        .map(|&n| Ok(max_gap(&EmpiricalMeasure::new(TreeSpec::rooted(n, 2)?, 0.2)?, 1e-12)?.max_gap))
        .collect::<Result<_>>()?;
    Ok(outcome(
        "gaps_shrink_with_level",
        g[2] < g[1] && g[1] < g[0],
        g[2],
        g[1],
        format!("max gaps at n = {:?}: {:?}", s.density_levels, g),
    ))
}

fn rooted_full(s: &Scale) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for t in [0.2, 0.5] {
        worst = worst.max(cdf_distance_rooted_full(2, s.rooted_full_level, t, s.rooted_full_grid)?);
    }
    Ok(outcome(
        "rooted_full_cdf_distance",
        worst <= 0.01,
        worst,
        0.01,
        format!("n = {}, grid {}", s.rooted_full_level, s.rooted_full_grid),
    ))
}

/// `size x size` parameters below the `phi_e` curve for `k = 2`, spread over
/// `t` in `[0.1, 0.7]` and alternating sides of the circle.
pub fn lyapunov_grid(size: usize) -> Result<Vec<ModelParams>> {
    let tc = critical_temperature(2)?;
    let mut out = Vec::new();
    for i in 0..size {
        let t = if size == 1 { 0.2 } else { 0.1 + 0.6 * i as f64 / (size - 1) as f64 };
        let lo = if t > tc { phi_e(t, 2)? } else { 0.0 };
        for j in 0..size {
            let mag = lo + (PI - lo) * (j as f64 + 0.5) / size as f64;
            let phi = if j % 2 == 0 { mag } else { -mag };
            out.push(ModelParams::new(2, t, phi)?);
        }
    }
    Ok(out)
}

fn lyapunov_cross(s: &Scale) -> Result<CheckOutcome> {
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    for p in lyapunov_grid(s.lyapunov_grid)? {
        let closed = lyapunov_acim_closed(&p)?;
        let b = lyapunov_acim_birkhoff(&p, &s.birkhoff)?;
        let excess = (closed - b.value).abs() - (2e-3 + 3.0 * b.stderr);
        if excess > worst {
            worst = excess;
            detail = format!("worst at t = {}, phi = {:.4}: closed {closed:.6}, birkhoff {:.6} +- {:.2e}", p.t(), p.phi(), b.value, b.stderr);
        }
    }
    Ok(outcome("lyapunov_closed_vs_birkhoff", worst <= 0.0, worst, 0.0, detail))
}

fn lyapunov_reference() -> Result<CheckOutcome> {
    let chi = lyapunov_acim_closed(&ModelParams::new(2, 0.2, 0.0)?)?;
    let kappa = LN_2 / chi;
    let cold = lyapunov_acim_closed(&ModelParams::new(2, 1e-4, 0.0)?)?;
    let errs = [(chi - 0.6239).abs() / 1e-3, (kappa - 1.111).abs() / 1e-3, (cold - LN_2).abs() / 1e-3];
    let worst = errs.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(outcome(
        "lyapunov_reference_values",
        worst <= 1.0,
        worst,
        1.0,
        format!("chi(0.2, 0) = {chi:.6}, kappa = {kappa:.5}, chi(1e-4, 0) - log 2 = {:.2e}", cold - LN_2),
    ))
}

/// Random `k = 2` parameters with `t` in `[0.05, 0.9]` below the `phi_e` curve.
pub fn sample_parameters(rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<ModelParams>> {
    let tc = critical_temperature(2)?;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t = rng.random_range(0.05..0.9);
        let lo = if t > tc { phi_e(t, 2)? } else { 0.0 };
        let phi = rng.random_range(-PI..PI);
        if phi.abs() > lo + 0.05 {
            out.push(ModelParams::new(2, t, phi)?);
        }
    }
    Ok(out)
}

fn lyapunov_ordering(s: &Scale, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0bde_5a11);
    let mut worst = f64::INFINITY;
    let mut detail = String::new();
    for p in sample_parameters(&mut rng, s.ordering_samples)? {
        let closed = lyapunov_acim_closed(&p)?;
        let b = lyapunov_acim_birkhoff(&p, &s.birkhoff)?;
        let mme = lyapunov_mme(&p, s.mme_depth)?;
        let below = (LN_2 - closed) / b.stderr.max(f64::MIN_POSITIVE);
        let above = (mme.value - LN_2) / mme.stderr.max(f64::MIN_POSITIVE);
        let sigmas = below.min(above);
        if sigmas < worst {
            worst = sigmas;
            detail = format!(
                "tightest at t = {:.4}, phi = {:.4}: acim {closed:.6}, mme {:.6} +- {:.2e}, HD(mme) = {:.4}",
                p.t(),
                p.phi(),
                mme.value,
                mme.stderr,
                LN_2 / mme.value
            );
        }
    }
    Ok(outcome("lyapunov_ordering", worst >= 5.0, worst, 5.0, detail))
}

fn dimension_at_zero(s: &Scale) -> Result<CheckOutcome> {
    let target = LN_2 / (4.0f64 / 3.0).ln();
    let em = EmpiricalMeasure::new(TreeSpec::rooted(s.dimension_level, 2)?, 0.2)?;
    let d = pointwise_dimension(&em, 0.0, &DimensionConfig::default())?;
    let rel = (d.slope - target).abs() / target;
    let other = LN_2 / lyapunov_acim_closed(&ModelParams::new(2, 0.2, 0.0)?)?;
    let separates = (d.slope - target).abs() < (d.slope - other).abs();
    Ok(outcome(
        "pointwise_dimension_at_zero_field",
        rel <= s.dimension_tol && separates,
        rel,
        s.dimension_tol,
        format!("n = {}: slope {:.4} (R^2 {:.4}) vs {target:.4}", s.dimension_level, d.slope, d.r_squared),
    ))
}

fn singular_lebesgue(s: &Scale) -> Result<CheckOutcome> {
    let em = EmpiricalMeasure::new(TreeSpec::rooted(s.singular_level, 2)?, 1e-4)?;
    let delta0 = 1.0;
    let ys = dyadic_y_grid(&em, 0.0, delta0, &SingularConfig::default())?;
    let fit = singular_exponent(&em, 0.0, 1.0, delta0, &ys)?;
    let rel = (fit.kappa - 1.0).abs();
    Ok(outcome(
        "singular_exponent_lebesgue_limit",
        rel <= 0.02 && fit.r_squared >= 0.98,
        rel,
        0.02,
        format!("slope {:.5}, R^2 {:.5}, {} points", fit.kappa, fit.r_squared, ys.len()),
    ))
}

fn structural(s: &Scale, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5717_c7a1);
    let per = s.structural_cases / 4;
    let mut failures = Vec::new();
    for _ in 0..per {
        let k = rng.random_range(2..=5u32);
        let p = ModelParams::new(k, rng.random_range(0.0..0.99), rng.random_range(-PI..PI))?;
        let th = rng.random_range(-10.0..10.0);
        let d = lift_eval(th + TWO_PI, &p) - lift_eval(th, &p) - TWO_PI * k as f64;
        if d.abs() > 1e-9 * (1.0 + th.abs() * k as f64) {
            failures.push(format!("periodicity k={k} theta={th}: {d:e}"));
        }
    }
    for _ in 0..per {
        let k = rng.random_range(2..=3u32);
        let tree = TreeSpec::rooted(rng.random_range(1..=10u32), k)?;
        let t = rng.random_range(0.0..0.99);
        let phi = rng.random_range(-PI..PI);
        let (a, _) = tree_lift(&tree, t, phi);
        let (b, _) = tree_lift(&tree, t, phi + TWO_PI);
        let turns = b.turns() - a.turns();
        let frac = b.frac() - a.frac();
        if turns as u64 != zero_count(&tree) || frac.abs() > 1e-6 {
            failures.push(format!("degree {tree} t={t}: turns {turns}, frac {frac:e}"));
        }
    }
    for _ in 0..per {
        let k = rng.random_range(2..=4u32);
        let variant = if rng.random_bool(0.5) { TreeVariant::Rooted } else { TreeVariant::Full };
        let tree = TreeSpec::new(variant, rng.random_range(1..=3u32), k)?;
        let q = rng.random_range(2..=40i64);
        let t = Temperature::from_ratio(rng.random_range(1..q), q)?;
        let poly = partition_poly_recursive(&tree, &t)?;
        if !poly.is_palindromic() || !poly.all_positive() {
            failures.push(format!("palindrome {tree} t={t}"));
        }
    }
    for _ in 0..per {
        let tree = TreeSpec::new(
            if rng.random_bool(0.5) { TreeVariant::Rooted } else { TreeVariant::Full },
            rng.random_range(1..=7u32),
            2,
        )?;
        let t = rng.random_range(0.0..0.99);
        let zs = enumerate_zeros(&tree, t, 1e-13)?;
        let n = zs.len();
        let paired = if n % 2 == 1 { n - 1 } else { n };
        let worst = (0..paired)
            .map(|i| (zs.angles[i] + zs.angles[paired - 1 - i]).abs())
            .fold(0.0f64, f64::max);
        if worst > 1e-10 || (n % 2 == 1 && zs.angles[n - 1] != PI) {
            failures.push(format!("conjugate symmetry {tree} t={t}: {worst:e}"));
        }
    }
    Ok(outcome(
        "structural_identities",
        failures.is_empty(),
        failures.len() as f64,
        0.0,
        if failures.is_empty() {
            format!("{} randomized cases", 4 * per)
        } else {
            failures.join("; ")
        },
    ))
}

fn free_energy_cross(s: &Scale, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf7ee_e7e6);
    let tree = TreeSpec::rooted(s.free_energy_level, 2)?;
    let mut worst = 0.0f64;
    for t in [0.2, 0.5] {
        let zs = enumerate_zeros(&tree, t, 1e-13)?;
        let mut done = 0;
        while done < s.free_energy_points {
            let r = 10f64.powf(rng.random_range(-1.0..1.0));
            if (r - 1.0).abs() < 0.05 {
                continue;
            }
            let z = Complex64::from_polar(r, rng.random_range(-PI..PI));
            let a = free_energy_from_zeros(z, &zs)?;
            let b = free_energy_recursive(z, &tree, t)?;
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
            done += 1;
        }
    }
    Ok(outcome(
        "free_energy_cross_method",
        worst <= 1e-3,
        worst,
        1e-3,
        format!("n = {}, {} points per t", s.free_energy_level, s.free_energy_points),
    ))
}

fn magnetization_limits() -> Result<CheckOutcome> {
    let zs = enumerate_zeros(&TreeSpec::rooted(8, 2)?, 0.5, 1e-13)?;
    let a = (magnetization_from_zeros(Complex64::new(1e-9, 0.0), &zs)? - 2.0).norm();
    let b = (magnetization_from_zeros(Complex64::new(1e9, 0.0), &zs)? + 2.0).norm();
    let worst = a.max(b);
    Ok(outcome("magnetization_limits", worst <= 1e-6, worst, 1e-6, "M(1e-9) -> 2, M(1e9) -> -2"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_catalogue() {
        let trees = small_trees(22);
        assert!(trees.iter().all(|t| t.vertex_count() <= 22));
        assert!(trees.contains(&TreeSpec::full(3, 2).unwrap()));
        assert!(trees.contains(&TreeSpec::rooted(1, 21).unwrap()));
        assert!(!trees.contains(&TreeSpec::rooted(4, 2).unwrap()));
    }

    #[test]
    fn grid_is_expanding() {
        for p in lyapunov_grid(5).unwrap() {
            assert!(crate::dynamics::below_phi_e_curve(2, p.t(), p.phi()).unwrap());
        }
    }
}
