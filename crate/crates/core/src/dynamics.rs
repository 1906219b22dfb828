//! The Blaschke map `B(w) = z ((w + t) / (1 + w t))^k`, its angular lift,
//! fixed points, the tangency curve `phi_e(t)` and expansion certificates.

use std::f64::consts::PI;

use num::complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::{check_k, check_t, wrap_angle, ModelParams, TreeSpec, TreeVariant};
use crate::roots;

pub(crate) const TWO_PI: f64 = 2.0 * PI;

/// Half-width of the band around `|w| = 1` inside which a fixed point is
/// classified as lying on the circle.
pub const CIRCLE_BAND: f64 = 1e-8;

/// Fixed points closer than this are merged into one root with multiplicity.
const CLUSTER_RADIUS: f64 = 1e-4;

/// Lift of the map with branching exponent `b`, without reducing mod 2pi.
#[inline]
pub(crate) fn lift_raw(theta: f64, b: f64, t: f64, phi: f64) -> f64 {
    // 1 + t cos(theta) > 0 for t < 1, so atan2 agrees with atan of the ratio
    b * theta - 2.0 * b * (t * theta.sin()).atan2(1.0 + t * theta.cos()) + phi
}

#[inline]
pub(crate) fn slope_raw(theta: f64, b: f64, t: f64) -> f64 {
    b * (1.0 - t * t) / (1.0 + 2.0 * t * theta.cos() + t * t)
}

/// `k theta - 2k arctan(t sin theta / (1 + t cos theta)) + phi`.
pub fn lift_eval(theta: f64, p: &ModelParams) -> f64 {
    lift_raw(theta, p.k() as f64, p.t(), p.phi())
}

/// Derivative of [`lift_eval`] in `theta`: `k (1 - t^2) / (1 + 2t cos theta + t^2)`.
pub fn lift_derivative(theta: f64, p: &ModelParams) -> f64 {
    slope_raw(theta, p.k() as f64, p.t())
}

/// `B_{z,t,k}(w)`.
pub fn blaschke(w: Complex64, p: &ModelParams) -> Complex64 {
    let t = p.t();
    p.z() * ((w + t) / (w * t + 1.0)).powu(p.k())
}

/// Complex derivative `B'(w) = z k (w + t)^{k-1} (1 - t^2) / (1 + w t)^{k+1}`.
pub fn multiplier(w: Complex64, p: &ModelParams) -> Complex64 {
    let (k, t) = (p.k(), p.t());
    p.z() * (k as f64) * (w + t).powu(k - 1) * (1.0 - t * t) / (w * t + 1.0).powu(k + 1)
}

/// A lifted angle stored as `2 pi turns + frac` with `frac` in `[0, 2 pi)`.
///
/// Iterates of the lift grow like `k^n`; keeping the winding number as an
/// integer leaves the full double precision for the fractional part, so
/// branch counts stay exact at any depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedAngle {
    turns: i64,
    frac: f64,
}

impl LiftedAngle {
    pub fn from_value(x: f64) -> Self {
        let q = (x / TWO_PI).floor();
        Self::normalized(q as i64, x - q * TWO_PI)
    }

    fn normalized(mut turns: i64, mut frac: f64) -> Self {
        if frac >= TWO_PI {
            frac -= TWO_PI;
            turns += 1;
        } else if frac < 0.0 {
            frac += TWO_PI;
            turns -= 1;
        }
        if frac >= TWO_PI {
            // only reachable by rounding of a tiny negative frac
            frac = 0.0;
            turns += 1;
        }
        Self { turns, frac }
    }

    pub fn turns(&self) -> i64 {
        self.turns
    }

    pub fn frac(&self) -> f64 {
        self.frac
    }

    pub fn value(&self) -> f64 {
        self.turns as f64 * TWO_PI + self.frac
    }

    /// Apply the lift with branching exponent `b`; returns the new angle and
    /// the derivative of the step at the old point.
    #[inline]
    pub(crate) fn step(self, b: u32, t: f64, phi: f64) -> (Self, f64) {
        let bf = b as f64;
        let v = lift_raw(self.frac, bf, t, phi);
        let q = (v / TWO_PI).floor();
        let next = Self::normalized(self.turns * b as i64 + q as i64, v - q * TWO_PI);
        (next, slope_raw(self.frac, bf, t))
    }

    /// `floor((x - pi) / 2 pi)`, exact.
    pub fn branch_index(&self) -> i64 {
        if self.frac >= PI {
            self.turns
        } else {
            self.turns - 1
        }
    }

    /// `x - (pi + 2 pi m)` computed without forming `x`.
    pub fn offset_from_branch(&self, m: i64) -> f64 {
        (self.turns - m) as f64 * TWO_PI + (self.frac - PI)
    }
}

/// Result of iterating the lift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSummary {
    /// The `n`-th iterate as a real number.
    pub final_value: f64,
    /// The same iterate with its winding number kept exact.
    pub end: LiftedAngle,
    /// `sum_{j<n} log B'(theta_j)`.
    pub log_derivative_sum: f64,
}

/// Iterate the lift `n` times from `theta0` at fixed `(phi, t, k)`.
pub fn lift_orbit(n: u32, p: &ModelParams, theta0: f64) -> OrbitSummary {
    let mut x = LiftedAngle::from_value(theta0);
    let mut log_sum = 0.0;
    for _ in 0..n {
        let (next, d) = x.step(p.k(), p.t(), p.phi());
        log_sum += d.ln();
        x = next;
    }
    OrbitSummary {
        final_value: x.value(),
        end: x,
        log_derivative_sum: log_sum,
    }
}

/// The zero-locating function of a tree at field angle `phi`, together with
/// its derivative in `phi`.
///
/// Rooted level `n`: `g_n(phi)`, the `n`-th iterate from `theta0 = phi`.
/// Full level `n`: one step with exponent `k + 1` applied to `g_{n-1}(phi)`.
/// Zeros are the solutions of `G(phi) = pi mod 2pi`.
pub fn tree_lift(tree: &TreeSpec, t: f64, phi: f64) -> (LiftedAngle, f64) {
    let k = tree.k();
    let (inner, outer) = match tree.variant() {
        TreeVariant::Rooted => (tree.level(), None),
        TreeVariant::Full => (tree.level() - 1, Some(k + 1)),
    };
    let mut x = LiftedAngle::from_value(phi);
    let mut d = 1.0;
    for _ in 0..inner {
        let (next, s) = x.step(k, t, phi);
        d = s * d + 1.0;
        x = next;
    }
    if let Some(b) = outer {
        let (next, s) = x.step(b, t, phi);
        d = s * d + 1.0;
        x = next;
    }
    (x, d)
}

/// `t_c = (k - 1) / (k + 1)`.
pub fn critical_temperature(k: u32) -> Result<f64> {
    check_k(k)?;
    Ok((k as f64 - 1.0) / (k as f64 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedPointClass {
    Disk,
    Circle,
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub w: Complex64,
    pub class: FixedPointClass,
    pub multiplier: Complex64,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSet {
    pub roots: Vec<FixedPoint>,
    /// Set at `t = 0`, where the fixed-point polynomial drops to degree `k`
    /// and the exterior fixed point sits at infinity.
    pub degree_drop: bool,
}

impl FixedPointSet {
    pub fn disk(&self) -> Option<&FixedPoint> {
        self.roots.iter().find(|r| r.class == FixedPointClass::Disk)
    }

    /// Total number of roots counted with multiplicity.
    pub fn total_multiplicity(&self) -> u32 {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }
}

/// Ascending coefficients of `P(w) = z (w + t)^k - w (1 + w t)^k`.
pub fn fixed_point_polynomial(p: &ModelParams) -> Vec<Complex64> {
    let k = p.k() as usize;
    let t = p.t();
    let z = p.z();
    let binom = binomials(k);
    let mut c = vec![Complex64::new(0.0, 0.0); k + 2];
    for j in 0..=k {
        c[j] += z * binom[j] * t.powi((k - j) as i32);
        c[j + 1] -= Complex64::new(binom[j] * t.powi(j as i32), 0.0);
    }
    c
}

fn binomials(k: usize) -> Vec<f64> {
    let mut row = vec![1.0f64; k + 1];
    for j in 1..k {
        row[j] = row[j - 1] * (k + 1 - j) as f64 / j as f64;
    }
    row
}

/// All roots of the fixed-point polynomial, classified against the unit circle.
pub fn fixed_points(p: &ModelParams) -> Result<FixedPointSet> {
    let mut coeffs = fixed_point_polynomial(p);
    let degree_drop = p.t() == 0.0;
    if degree_drop {
        coeffs.pop();
    }
    let raw = roots::companion_roots(&coeffs)?;

    let mut roots = Vec::new();
    for (w, mult) in cluster(&raw, CLUSTER_RADIUS) {
        // Newton is only reliable on simple roots; the centroid of a cluster
        // is already accurate since it is a symmetric function of the roots
        let w = if mult == 1 {
            roots::newton_polish(&coeffs, w, 8)
        } else {
            w
        };
        let dev = w.norm() - 1.0;
        let class = if dev.abs() <= CIRCLE_BAND {
            FixedPointClass::Circle
        } else if dev < 0.0 {
            FixedPointClass::Disk
        } else {
            FixedPointClass::Exterior
        };
        roots.push(FixedPoint {
            w,
            class,
            multiplier: multiplier(w, p),
            multiplicity: mult,
        });
    }
    roots.sort_by(|a, b| a.w.norm().total_cmp(&b.w.norm()).then(a.w.arg().total_cmp(&b.w.arg())));
    Ok(FixedPointSet { roots, degree_drop })
}

/// Single-linkage clusters; each is replaced by its centroid.
fn cluster(points: &[Complex64], radius: f64) -> Vec<(Complex64, u32)> {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(l: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while l[r] != r {
            r = l[r];
        }
        l[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm() <= radius * (1.0 + points[i].norm()) {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut out: Vec<(usize, Complex64, u32)> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match out.iter_mut().find(|(root, _, _)| *root == r) {
            Some((_, sum, m)) => {
                *sum += points[i];
                *m += 1;
            }
            None => out.push((r, points[i], 1)),
        }
    }
    out.into_iter()
        .map(|(_, sum, m)| (sum / m as f64, m))
        .collect()
}

/// The attracting fixed point in the open unit disk.
///
/// Found by iterating `B` from the origin and polishing with Newton's
/// method on the fixed-point polynomial. Requires `(phi, t)` strictly below
/// the `phi_e` curve.
pub fn disk_fixed_point(p: &ModelParams) -> Result<Complex64> {
    require_expanding(p, "the disk fixed point")?;
    let coeffs = fixed_point_polynomial(p);
    let mut w = Complex64::new(0.0, 0.0);
    for _ in 0..400 {
        let next = blaschke(w, p);
        let done = (next - w).norm() < 1e-13;
        w = next;
        if done {
            break;
        }
    }
    let w = roots::newton_polish(&coeffs, w, 30);
    if w.norm() >= 1.0 || multiplier(w, p).norm() >= 1.0 {
        return Err(Error::NoConvergence(format!(
            "disk fixed point iteration ended at {w} for {p:?}"
        )));
    }
    Ok(w)
}

/// Tangent fixed point on the circle for `t_c < t < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangencyData {
    pub w_bullet: Complex64,
    pub theta_bullet: f64,
    pub phi_e: f64,
}

/// Solve `t w^2 + ((k+1) t^2 - (k-1)) w + t = 0` for the root in the upper
/// half plane and read off `phi_e`.
pub fn tangency(t: f64, k: u32) -> Result<TangencyData> {
    let tc = critical_temperature(k)?;
    if !(t > tc && t < 1.0) {
        return Err(invalid("t", format!("{t} is not in (t_c, 1) = ({tc}, 1)")));
    }
    let kf = k as f64;
    let b = (kf + 1.0) * t * t - (kf - 1.0);
    let mut neg_disc = 4.0 * t * t - b * b;
    if neg_disc <= 0.0 {
        if t - tc < 1e-12 {
            neg_disc = 0.0;
        } else {
            return Err(Error::Internal(format!(
                "tangency discriminant is nonnegative at t = {t}, k = {k}"
            )));
        }
    }
    let w = Complex64::new(-b, neg_disc.sqrt()) / (2.0 * t);
    let theta = neg_disc.sqrt().atan2(-b);
    let raw = theta - lift_raw(theta, kf, t, 0.0);
    Ok(TangencyData {
        w_bullet: w,
        theta_bullet: theta,
        phi_e: wrap_angle(raw).abs(),
    })
}

/// Edge of the zero-free arc: `Supp(mu_t)` is the circle minus `(-phi_e, phi_e)`.
pub fn phi_e(t: f64, k: u32) -> Result<f64> {
    let tc = critical_temperature(k)?;
    if !t.is_finite() || t > 1.0 {
        return Err(invalid("t", format!("{t} is not in [t_c, 1]")));
    }
    if t == 1.0 {
        return Ok(PI);
    }
    if (t - tc).abs() <= 1e-14 {
        return Ok(0.0);
    }
    if t < tc {
        return Err(Error::NoGap { t, t_c: tc });
    }
    Ok(tangency(t, k)?.phi_e)
}

/// True when `(phi, t)` lies strictly below the `phi_e` curve, where the
/// map is expanding on the circle.
pub fn below_phi_e_curve(k: u32, t: f64, phi: f64) -> Result<bool> {
    check_t(t)?;
    let tc = critical_temperature(k)?;
    if t < tc {
        return Ok(true);
    }
    Ok(wrap_angle(phi).abs() > phi_e(t, k)?)
}

pub(crate) fn require_expanding(p: &ModelParams, what: &'static str) -> Result<()> {
    if below_phi_e_curve(p.k(), p.t(), p.phi())? {
        return Ok(());
    }
    Err(Error::NotExpanding {
        phi: p.phi(),
        t: p.t(),
        phi_e: phi_e(p.t(), p.k())?,
        what,
    })
}

/// Sampled constants with `(B^m)'(theta) >= c lambda^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCertificate {
    pub c: f64,
    pub lambda: f64,
    pub n_probe: u32,
    pub grid_size: usize,
}

const EXPANSION_MARGIN: f64 = 1e-9;

/// Fit `lambda` as the smallest per-step geometric mean of the derivative
/// over `n_probe` steps across the grid, then the largest `c` consistent
/// with every sampled partial product.
pub fn expansion_certificate(
    p: &ModelParams,
    n_probe: u32,
    grid_size: usize,
) -> Result<ExpansionCertificate> {
    if n_probe == 0 {
        return Err(invalid("n_probe", "must be >= 1"));
    }
    if grid_size == 0 {
        return Err(invalid("grid_size", "must be >= 1"));
    }
    require_expanding(p, "an expansion certificate")?;
    let partial_sums: Vec<Vec<f64>> = (0..grid_size)
        .map(|i| {
            let theta0 = TWO_PI * i as f64 / grid_size as f64;
            let mut x = LiftedAngle::from_value(theta0);
            let mut s = 0.0;
            (0..n_probe)
                .map(|_| {
                    let (next, d) = x.step(p.k(), p.t(), p.phi());
                    x = next;
                    s += d.ln();
                    s
                })
                .collect()
        })
        .collect();
    let log_lambda = partial_sums
        .iter()
        .map(|row| row[row.len() - 1] / n_probe as f64)
        .fold(f64::INFINITY, f64::min);
    let lambda = log_lambda.exp();
    if lambda <= 1.0 + EXPANSION_MARGIN {
        return Err(Error::NotExpanding {
            phi: p.phi(),
            t: p.t(),
            phi_e: phi_e(p.t(), p.k()).unwrap_or(0.0),
            what: "an expansion certificate (sampled rate is not above 1)",
        });
    }
    let log_c = partial_sums
        .iter()
        .flat_map(|row| {
            row.iter()
                .enumerate()
                .map(|(m, s)| s - (m + 1) as f64 * log_lambda)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(ExpansionCertificate {
        c: log_c.exp(),
        lambda,
        n_probe,
        grid_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mp(k: u32, t: f64, phi: f64) -> ModelParams {
        ModelParams::new(k, t, phi).unwrap()
    }

    #[test]
    fn lift_examples() {
        assert_eq!(lift_eval(0.0, &mp(2, 0.5, 0.3)), 0.3);
        assert!((lift_eval(PI, &mp(2, 0.7, 0.0)) - TWO_PI).abs() < 1e-12);
        assert!((lift_eval(1.0, &mp(2, 0.5, 0.3)) - 1.020_508_358_260_927_8).abs() < 1e-12);
    }

    #[test]
    fn lift_matches_argument_of_map() {
        let p = mp(2, 0.5, 0.3);
        let w = blaschke(Complex64::from_polar(1.0, 1.0), &p);
        assert!((wrap_angle(lift_eval(1.0, &p)) - w.arg()).abs() < 1e-12);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(lift_derivative(0.7, &mp(3, 0.0, 0.0)), 3.0);
        assert!((lift_derivative(0.0, &mp(2, 0.2, 0.0)) - 4.0 / 3.0).abs() < 1e-14);
        assert!((lift_derivative(PI, &mp(2, 0.5, 0.0)) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn orbit_examples() {
        let o = lift_orbit(2, &mp(2, 0.0, 0.1), 0.1);
        assert!((o.final_value - 0.7).abs() < 1e-14);
        assert_eq!(lift_orbit(0, &mp(2, 0.4, 0.1), 1.2).final_value, 1.2);
        // ModelParams keeps phi in (-pi, pi], so shift through the tree lift
        let tree = TreeSpec::rooted(5, 2).unwrap();
        let (a, _) = tree_lift(&tree, 0.6, 0.4);
        let (b, _) = tree_lift(&tree, 0.6, 0.4 + TWO_PI);
        let diff = b.value() - a.value();
        assert!((diff - TWO_PI * 63.0).abs() < 1e-9 * diff);
    }

    #[test]
    fn lifted_angle_tracks_value() {
        let p = mp(2, 0.35, -2.0);
        let mut x = LiftedAngle::from_value(-2.0);
        let mut y = -2.0f64;
        for _ in 0..6 {
            x = x.step(2, p.t(), p.phi()).0;
            y = lift_eval(y, &p);
        }
        assert!((x.value() - y).abs() < 1e-9 * y.abs().max(1.0));
        assert_eq!(LiftedAngle::from_value(-PI).branch_index(), -1);
        assert_eq!(LiftedAngle::from_value(PI).branch_index(), 0);
    }

    #[test]
    fn critical_temperatures() {
        assert!((critical_temperature(2).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(critical_temperature(3).unwrap(), 0.5);
        assert!((critical_temperature(10).unwrap() - 9.0 / 11.0).abs() < 1e-16);
        assert!(critical_temperature(1).is_err());
    }

    #[test]
    fn fixed_points_at_low_temperature() {
        let p = mp(2, 0.2, 0.0);
        let fp = fixed_points(&p).unwrap();
        assert_eq!(fp.total_multiplicity(), 3);
        let s3 = 3f64.sqrt();
        let expect = [7.0 - 4.0 * s3, 1.0, 7.0 + 4.0 * s3];
        for (r, e) in fp.roots.iter().zip(expect) {
            assert!((r.w - e).norm() < 1e-12, "{:?} vs {e}", r.w);
        }
        let disk = fp.disk().unwrap();
        assert!(disk.multiplier.norm() < 1.0);
        let circle = &fp.roots[1];
        assert_eq!(circle.class, FixedPointClass::Circle);
        assert!((circle.multiplier - 4.0 / 3.0).norm() < 1e-12);
        assert!((fp.roots[2].w - 1.0 / disk.w.conj()).norm() < 1e-9);
        let w = disk_fixed_point(&p).unwrap();
        assert!((w - (7.0 - 4.0 * s3)).norm() < 1e-14);
    }

    #[test]
    fn triple_root_at_criticality() {
        let fp = fixed_points(&mp(2, 1.0 / 3.0, 0.0)).unwrap();
        assert_eq!(fp.roots.len(), 1);
        assert_eq!(fp.roots[0].multiplicity, 3);
        assert!((fp.roots[0].w - 1.0).norm() < 1e-6);
        assert_eq!(fp.roots[0].class, FixedPointClass::Circle);
    }

    #[test]
    fn zero_temperature_degree_drop() {
        let fp = fixed_points(&mp(3, 0.0, 1.1)).unwrap();
        assert!(fp.degree_drop);
        assert_eq!(fp.total_multiplicity(), 3);
        assert!(fp.disk().unwrap().w.norm() < 1e-14);
    }

    #[test]
    fn tangency_values() {
        let d = tangency(0.5, 2).unwrap();
        assert!((d.w_bullet - Complex64::new(0.25, 0.968_245_836_551_854_2)).norm() < 1e-12);
        assert!((d.theta_bullet - 1.318_116_071_652_818).abs() < 1e-9);
        assert!((d.phi_e - 0.307_395_051_084_503_4).abs() < 1e-12);
        let d = tangency(0.9, 2).unwrap();
        assert!((d.theta_bullet - 2.488_888_6).abs() < 1e-6);
        assert!((d.phi_e - 1.871_807_547_155_416_5).abs() < 1e-12);
        assert!((phi_e(0.4, 2).unwrap() - 0.083_690).abs() < 1e-5);
        assert!((phi_e(0.6, 3).unwrap() - 0.187_50).abs() < 1e-4);
    }

    #[test]
    fn phi_e_endpoints() {
        assert_eq!(phi_e(1.0 / 3.0, 2).unwrap(), 0.0);
        assert_eq!(phi_e(1.0, 2).unwrap(), PI);
        assert!(matches!(phi_e(0.2, 2), Err(Error::NoGap { .. })));
        assert!(phi_e(1.0 / 3.0 + 1e-9, 2).unwrap() < 1e-6);
        assert!(PI - phi_e(0.999_999, 2).unwrap() < 1e-2);
        assert!(tangency(0.3, 2).is_err());
    }

    #[test]
    fn expansion_examples() {
        let c = expansion_certificate(&mp(2, 0.0, 0.7), 12, 64).unwrap();
        assert!((c.lambda - 2.0).abs() < 1e-12);
        assert!((c.c - 1.0).abs() < 1e-12);
        let c = expansion_certificate(&mp(2, 0.2, 0.0), 20, 256).unwrap();
        assert!(c.lambda >= 4.0 / 3.0 - 1e-12);
        let c = expansion_certificate(&mp(2, 0.5, PI), 20, 256).unwrap();
        assert!(c.lambda > 1.0 && c.c > 0.0);
        assert!(matches!(
            expansion_certificate(&mp(2, 0.5, 0.1), 10, 16),
            Err(Error::NotExpanding { .. })
        ));
    }
}
