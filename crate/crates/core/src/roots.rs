//! Polynomial root finding: companion-matrix eigenvalues for small complex
//! polynomials, and Aberth–Ehrlich iteration with double-double polishing for
//! the partition polynomials. Coefficients are stored in ascending order.

use nalgebra::DMatrix;
use num::bigint::BigInt;
use num::complex::Complex64;
use num::rational::BigRational;
use num::{FromPrimitive, Integer, One, ToPrimitive, Zero};

use crate::ddouble::{CDd, Dd};
use crate::error::{Error, Result};

/// Largest degree accepted by [`aberth`].
pub const MAX_DEGREE: usize = 4096;

const ABERTH_STEP_TOL: f64 = 1e-12;
const DD_STEP_TOL: f64 = 1e-28;
const DD_EPSILON: f64 = 4.93e-32;
const NOISE_FACTOR: f64 = 8.0;
const F64_SWEEPS: usize = 500;
const DD_SWEEPS: usize = 500;

fn horner(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Eigenvalues of the companion matrix of `c` (ascending coefficients).
pub fn companion_roots(c: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut c = c.to_vec();
    while c.last().is_some_and(|x| x.norm() == 0.0) {
        c.pop();
    }
    let n = c.len().saturating_sub(1);
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = c[n];
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    let schur = m
        .try_schur(1e-15, 10_000)
        .ok_or_else(|| Error::NoConvergence("companion matrix Schur decomposition".into()))?;
    let (_, tri) = schur.unpack();
    Ok(tri.diagonal().iter().copied().collect())
}

/// Newton steps on `c` from `w`, keeping a step only when it lowers `|P|`.
pub fn newton_polish(c: &[Complex64], mut w: Complex64, iters: usize) -> Complex64 {
    let (mut p, mut dp) = horner(c, w);
    for _ in 0..iters {
        if p.norm() == 0.0 || dp.norm() == 0.0 {
            break;
        }
        let next = w - p / dp;
        let (np, ndp) = horner(c, next);
        if !(np.norm() < p.norm()) {
            break;
        }
        w = next;
        p = np;
        dp = ndp;
    }
    w
}

/// A polished root with an a-posteriori error estimate `|P(z) / P'(z)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootEstimate {
    pub z: Complex64,
    pub error: f64,
}

/// `P'(z) / P(z)` for real coefficients, evaluated through the reversed
/// polynomial outside the unit disk so that `z^n` never overflows. The flag
/// is set when `|P(z)|` is within its own rounding error bound.
fn log_derivative(c: &[f64], z: Complex64) -> (Complex64, bool) {
    let n = c.len() - 1;
    let (x, coeffs): (Complex64, Box<dyn Iterator<Item = &f64>>) = if z.norm() <= 1.0 {
        (z, Box::new(c.iter().rev()))
    } else {
        (z.inv(), Box::new(c.iter()))
    };
    let r = x.norm();
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    let mut bound = 0.0;
    for &a in coeffs {
        dp = dp * x + p;
        p = p * x + a;
        bound = bound * r + a.abs();
    }
    let noise = p.norm() <= NOISE_FACTOR * (n as f64 + 1.0) * f64::EPSILON * bound;
    if z.norm() <= 1.0 {
        (dp / p, noise)
    } else {
        (x * n as f64 - x * x * dp / p, noise)
    }
}

/// Double-double version of [`log_derivative`].
fn log_derivative_dd(c: &[Dd], z: CDd) -> (CDd, bool) {
    let n = c.len() - 1;
    let inside = z.norm() <= 1.0;
    let x = if inside { z } else { CDd::ONE / z };
    let r = x.norm();
    let mut p = CDd::ZERO;
    let mut dp = CDd::ZERO;
    let mut bound = 0.0;
    let mut step = |a: Dd| {
        dp = dp * x + p;
        p = p * x + CDd::from(a);
        bound = bound * r + a.to_f64().abs();
    };
    if inside {
        c.iter().rev().for_each(|&a| step(a));
    } else {
        c.iter().for_each(|&a| step(a));
    }
    let noise = p.norm() <= NOISE_FACTOR * (n as f64 + 1.0) * DD_EPSILON * bound;
    if inside {
        (dp / p, noise)
    } else {
        let nn = CDd::from(Dd::from(n as f64));
        (x * nn - x * x * dp / p, noise)
    }
}

fn horner_dd(c: &[Dd], z: CDd) -> (CDd, CDd) {
    let mut p = CDd::ZERO;
    let mut dp = CDd::ZERO;
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + CDd::from(a);
    }
    (p, dp)
}

/// All roots of a real polynomial given in double-double coefficients.
///
/// Simultaneous Aberth–Ehrlich iteration in `f64` from points on the unit
/// circle, continued in double-double, then Newton refinement. The roots of
/// the input are expected to be simple.
pub fn aberth(c: &[Dd]) -> Result<Vec<RootEstimate>> {
    let (pos, converged) = aberth_positions(c)?;
    if let Some(open) = Some(converged.iter().filter(|c| !**c).count()).filter(|&o| o > 0) {
        return Err(Error::NoConvergence(format!(
            "Aberth iteration left {open} of {} roots unconverged",
            pos.len()
        )));
    }
    Ok(pos
        .into_iter()
        .map(|w| {
            let (w, error) = polish_dd(c, w);
            RootEstimate { z: w.to_c64(), error }
        })
        .collect())
}

/// Aberth positions in double-double, with a per-root convergence flag.
fn aberth_positions(c: &[Dd]) -> Result<(Vec<CDd>, Vec<bool>)> {
    let n = c.len().saturating_sub(1);
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if n > MAX_DEGREE {
        return Err(Error::SizeGuard(format!(
            "degree {n} exceeds the root finder cap {MAX_DEGREE}"
        )));
    }
    if c[n].hi == 0.0 || c[0].hi == 0.0 {
        return Err(Error::Internal("aberth expects nonzero end coefficients".into()));
    }
    if n == 1 {
        return Ok((vec![CDd::from(-(c[0] / c[1]))], vec![true]));
    }
    let cf: Vec<f64> = c.iter().map(|x| x.to_f64()).collect();
    let mut z: Vec<Complex64> = (0..n)
        .map(|j| {
            let a = std::f64::consts::TAU * (j as f64 + 0.5) / n as f64 + 0.4 / n as f64;
            Complex64::from_polar(1.0, a)
        })
        .collect();
    // stage 1 in f64, until the step is tiny or P(z) is below its rounding noise
    let mut done = vec![false; n];
    for _ in 0..F64_SWEEPS {
        if done.iter().all(|&d| d) {
            break;
        }
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (ld, at_noise) = log_derivative(&cf, z[i]);
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    s += (z[i] - z[j]).inv();
                }
            }
            let step = (ld - s).inv();
            if !step.re.is_finite() || !step.im.is_finite() {
                done[i] = true;
                continue;
            }
            z[i] -= step;
            if at_noise || step.norm() <= ABERTH_STEP_TOL * z[i].norm().max(1e-300) {
                done[i] = true;
            }
        }
    }
    // stage 2 in double-double, which resolves clusters that f64 cannot
    let mut w: Vec<CDd> = z.iter().map(|&x| CDd::from(x)).collect();
    let mut done = vec![false; n];
    let mut sweeps = 0;
    while done.iter().any(|d| !d) && sweeps < DD_SWEEPS {
        sweeps += 1;
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (ld, at_noise) = log_derivative_dd(c, w[i]);
            let mut s = CDd::ZERO;
            for j in 0..n {
                if j != i {
                    s = s + CDd::ONE / (w[i] - w[j]);
                }
            }
            let step = CDd::ONE / (ld - s);
            let sn = step.norm();
            if !sn.is_finite() {
                done[i] = true;
                continue;
            }
            w[i] = w[i] - step;
            if at_noise || sn <= DD_STEP_TOL * w[i].norm().max(1e-300) {
                done[i] = true;
            }
        }
    }
    Ok((w, done))
}

/// A few Newton steps in double-double; returns the point and `|P / P'|` there.
fn polish_dd(c: &[Dd], mut w: CDd) -> (CDd, f64) {
    for _ in 0..4 {
        let (p, dp) = horner_dd(c, w);
        if p.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        w = w - step;
        if step.norm() < 1e-30 {
            break;
        }
    }
    let (p, dp) = horner_dd(c, w);
    let err = if p.norm() == 0.0 { 0.0 } else { (p / dp).norm() };
    (w, err)
}

fn dd_to_rational(x: Dd) -> BigRational {
    let part = |v: f64| BigRational::from_float(v).unwrap_or_else(BigRational::zero);
    part(x.hi) + part(x.lo)
}

/// Gaussian-integer Horner: `D^deg p(Z / D)` for integer coefficients.
fn horner_scaled(c: &[BigInt], zr: &BigInt, zi: &BigInt, d: &BigInt) -> (BigInt, BigInt) {
    let deg = c.len() - 1;
    let (mut hr, mut hi) = (c[deg].clone(), BigInt::zero());
    let mut pow = d.clone();
    for a in c[..deg].iter().rev() {
        let nr = &hr * zr - &hi * zi + a * &pow;
        let ni = &hr * zi + &hi * zr;
        hr = nr;
        hi = ni;
        pow *= d;
    }
    (hr, hi)
}

/// `num / den` rounded to double-double, without forming a reduced rational.
fn ratio_to_dd(num: &BigInt, den: &BigInt) -> Dd {
    if num.is_zero() {
        return Dd::ZERO;
    }
    // scale so the integer quotient carries ~120 significant bits
    let shift = 120 + den.bits() as i64 - num.bits() as i64;
    let q = if shift >= 0 {
        (num << shift as usize) / den
    } else {
        (num >> (-shift) as usize) / den
    };
    let hi = q.to_f64().unwrap_or(f64::NAN);
    let rest = &q - BigInt::from_f64(hi).unwrap_or_else(BigInt::zero);
    let lo = rest.to_f64().unwrap_or(0.0);
    let scale = |x: f64| {
        let mut v = x;
        let mut e = -shift;
        while e > 1000 {
            v *= 2f64.powi(1000);
            e -= 1000;
        }
        while e < -1000 {
            v *= 2f64.powi(-1000);
            e += 1000;
        }
        v * 2f64.powi(e as i32)
    };
    Dd::new(scale(hi), scale(lo))
}

/// Exact `P'(w) / P(w)` for integer coefficients; `None` when `w` is a root.
fn exact_log_derivative(c: &[BigInt], dc: &[BigInt], w: CDd) -> Option<CDd> {
    let (re, im) = (dd_to_rational(w.re), dd_to_rational(w.im));
    let d = num::integer::lcm(re.denom().clone(), im.denom().clone());
    let zr = (&re * BigRational::from_integer(d.clone())).to_integer();
    let zi = (&im * BigRational::from_integer(d.clone())).to_integer();
    // H = D^n P(w), G = D^{n-1} P'(w), so P'/P = D G / H
    let (hr, hi) = horner_scaled(c, &zr, &zi, &d);
    let (gr, gi) = horner_scaled(dc, &zr, &zi, &d);
    let h2 = &hr * &hr + &hi * &hi;
    if h2.is_zero() {
        return None;
    }
    let num_r = (&gr * &hr + &gi * &hi) * &d;
    let num_i = (&gi * &hr - &gr * &hi) * &d;
    Some(CDd::new(ratio_to_dd(&num_r, &h2), ratio_to_dd(&num_i, &h2)))
}

const SUSPECT_TOL: f64 = 1e-14;
const EXACT_STEP_TOL: f64 = 1e-22;
const EXACT_SWEEPS: usize = 200;

/// [`aberth`] for exact rational coefficients. Roots that double-double
/// evaluation cannot resolve (tight clusters, where `P` drops below its
/// rounding noise) are finished with exact big-integer evaluation.
pub fn aberth_exact(c: &[BigRational]) -> Result<Vec<RootEstimate>> {
    let dd = rational_to_dd(c);
    let (pos, converged) = aberth_positions(&dd)?;
    let n = pos.len();
    let mut w = Vec::with_capacity(n);
    let mut err = Vec::with_capacity(n);
    let mut suspect = Vec::with_capacity(n);
    for (i, &p) in pos.iter().enumerate() {
        let (q, e) = polish_dd(&dd, p);
        let bad = !converged[i] || !(e <= SUSPECT_TOL * q.norm().max(1.0));
        w.push(if bad { p } else { q });
        err.push(e);
        suspect.push(bad);
    }
    if suspect.iter().any(|&s| s) {
        let den = c.iter().fold(BigInt::one(), |acc, r| num::integer::lcm(acc, r.denom().clone()));
        let ints: Vec<BigInt> = c.iter().map(|r| (r * &den).to_integer()).collect();
        let dints: Vec<BigInt> = ints.iter().enumerate().skip(1).map(|(i, a)| a * BigInt::from(i)).collect();
        let mut done: Vec<bool> = suspect.iter().map(|s| !s).collect();
        for _ in 0..EXACT_SWEEPS {
            if done.iter().all(|&d| d) {
                break;
            }
            for i in 0..n {
                if done[i] {
                    continue;
                }
                let Some(ld) = exact_log_derivative(&ints, &dints, w[i]) else {
                    done[i] = true;
                    continue;
                };
                let mut s = CDd::ZERO;
                for j in 0..n {
                    if j != i {
                        s = s + CDd::ONE / (w[i] - w[j]);
                    }
                }
                let step = CDd::ONE / (ld - s);
                w[i] = w[i] - step;
                if step.norm() <= EXACT_STEP_TOL * w[i].norm().max(1e-300) {
                    done[i] = true;
                }
            }
        }
        if let Some(open) = Some(done.iter().filter(|d| !**d).count()).filter(|&o| o > 0) {
            return Err(Error::NoConvergence(format!(
                "exact Aberth refinement left {open} of {n} roots unconverged"
            )));
        }
        for i in (0..n).filter(|&i| suspect[i]) {
            err[i] = exact_log_derivative(&ints, &dints, w[i]).map_or(0.0, |ld| 1.0 / ld.norm());
        }
    }
    Ok(w.iter()
        .zip(err)
        .map(|(z, error)| RootEstimate { z: z.to_c64(), error })
        .collect())
}

/// Exact polynomial arithmetic over the rationals, used only to split off
/// repeated factors before numerical root finding.
pub mod qpoly {
    use super::*;

    pub type QPoly = Vec<BigRational>;

    fn trim(mut p: QPoly) -> QPoly {
        while p.last().is_some_and(|c| c.is_zero()) {
            p.pop();
        }
        p
    }

    pub fn derivative(p: &[BigRational]) -> QPoly {
        trim(
            p.iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * BigRational::from_integer(BigInt::from(i)))
                .collect(),
        )
    }

    /// Quotient and remainder of `a / b`.
    pub fn div_rem(a: &[BigRational], b: &[BigRational]) -> (QPoly, QPoly) {
        let b = trim(b.to_vec());
        assert!(!b.is_empty(), "division by the zero polynomial");
        let mut r = trim(a.to_vec());
        if r.len() < b.len() {
            return (Vec::new(), r);
        }
        let db = b.len() - 1;
        let lead = b[db].clone();
        let mut q = vec![BigRational::zero(); r.len() - db];
        while r.len() > db && !r.is_empty() {
            let shift = r.len() - 1 - db;
            let f = &r[r.len() - 1] / &lead;
            for (i, bc) in b.iter().enumerate() {
                r[shift + i] -= &f * bc;
            }
            q[shift] = f;
            r.pop();
            r = trim(r);
        }
        (trim(q), r)
    }

    pub fn monic(p: &[BigRational]) -> QPoly {
        let p = trim(p.to_vec());
        match p.last() {
            Some(l) => {
                let l = l.clone();
                p.into_iter().map(|c| c / &l).collect()
            }
            None => p,
        }
    }

    pub fn gcd(a: &[BigRational], b: &[BigRational]) -> QPoly {
        let mut a = trim(a.to_vec());
        let mut b = trim(b.to_vec());
        while !b.is_empty() {
            let (_, r) = div_rem(&a, &b);
            a = b;
            b = monic(&r);
        }
        monic(&a)
    }

    /// Yun's algorithm: `p = prod f_i^i` with each `f_i` squarefree.
    pub fn squarefree_decomposition(p: &[BigRational]) -> Vec<(QPoly, u32)> {
        let p = monic(p);
        let dp = derivative(&p);
        let a0 = gcd(&p, &dp);
        let mut b = div_rem(&p, &a0).0;
        let c = div_rem(&dp, &a0).0;
        let mut d = sub(&c, &derivative(&b));
        let mut out = Vec::new();
        let mut i = 1;
        while b.len() > 1 {
            let a = gcd(&b, &d);
            let nb = div_rem(&b, &a).0;
            let c = div_rem(&d, &a).0;
            d = sub(&c, &derivative(&nb));
            if a.len() > 1 {
                out.push((a, i));
            }
            b = nb;
            i += 1;
        }
        out
    }

    fn sub(a: &[BigRational], b: &[BigRational]) -> QPoly {
        let n = a.len().max(b.len());
        trim(
            (0..n)
                .map(|i| {
                    let x = a.get(i).cloned().unwrap_or_else(BigRational::zero);
                    let y = b.get(i).cloned().unwrap_or_else(BigRational::zero);
                    x - y
                })
                .collect(),
        )
    }
}

const MOD_PRIME: u64 = 2_305_843_009_213_693_951; // 2^61 - 1

fn mulmod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % MOD_PRIME as u128) as u64
}

fn powmod(mut a: u64, mut e: u64) -> u64 {
    let mut r = 1;
    while e > 0 {
        if e & 1 == 1 {
            r = mulmod(r, a);
        }
        a = mulmod(a, a);
        e >>= 1;
    }
    r
}

fn invmod(a: u64) -> u64 {
    powmod(a, MOD_PRIME - 2)
}

fn gcd_degree_mod(mut a: Vec<u64>, mut b: Vec<u64>) -> usize {
    let trim = |v: &mut Vec<u64>| {
        while v.last() == Some(&0) {
            v.pop();
        }
    };
    trim(&mut a);
    trim(&mut b);
    while !b.is_empty() {
        let inv = invmod(*b.last().unwrap());
        while a.len() >= b.len() {
            let f = mulmod(*a.last().unwrap(), inv);
            let shift = a.len() - b.len();
            for (i, &bc) in b.iter().enumerate() {
                let s = mulmod(f, bc);
                a[shift + i] = (a[shift + i] + MOD_PRIME - s) % MOD_PRIME;
            }
            trim(&mut a);
            if a.is_empty() {
                break;
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
    a.len().saturating_sub(1)
}

/// Squarefree test for an integer polynomial modulo a large prime.
///
/// `Some(true)` proves the polynomial squarefree over the rationals. `None`
/// means the prime divides the leading coefficient and the test says nothing.
/// `Some(false)` means a repeated factor is likely and an exact check is needed.
pub fn squarefree_mod_p(c: &[BigInt]) -> Option<bool> {
    let modp = BigInt::from(MOD_PRIME);
    let red: Vec<u64> = c
        .iter()
        .map(|x| x.mod_floor(&modp).to_u64().expect("reduced below the prime"))
        .collect();
    if red.last().is_none_or(|&l| l == 0) {
        return None;
    }
    let der: Vec<u64> = red
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &x)| mulmod(x, i as u64 % MOD_PRIME))
        .collect();
    Some(gcd_degree_mod(red, der) == 0)
}

/// Scale a rational polynomial by a power of two so its largest coefficient
/// is near one, and round each coefficient to double-double.
pub fn rational_to_dd(c: &[BigRational]) -> Vec<Dd> {
    let bits = |r: &BigRational| r.numer().bits() as i64 - r.denom().bits() as i64;
    let top = c.iter().filter(|r| !r.is_zero()).map(bits).max().unwrap_or(0);
    c.iter()
        .map(|r| {
            let scaled = if top >= 0 {
                r / BigRational::from_integer(BigInt::one() << top as usize)
            } else {
                r * BigRational::from_integer(BigInt::one() << (-top) as usize)
            };
            let hi = scaled.to_f64().unwrap_or(0.0);
            let lo = if hi.is_finite() && hi != 0.0 {
                let rest = &scaled - BigRational::from_float(hi).unwrap_or_else(BigRational::zero);
                rest.to_f64().unwrap_or(0.0)
            } else {
                0.0
            };
            Dd::new(hi, lo)
        })
        .collect()
}
