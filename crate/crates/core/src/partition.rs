//! The finite-tree partition function as a polynomial in `z`, computed by the
//! conditional recursion on subtrees and by brute-force spin enumeration.
//!
//! The stored polynomial is `z^{|V|/2} t^{|E|/2} Z`: the coefficient of `z^j`
//! is the sum of `t^u` over configurations with `j` down spins and `u`
//! unsatisfied edges.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::ddouble::Dd;
use crate::error::{Error, Result};
use crate::params::{wrap_angle, Temperature, TreeSpec, TreeVariant};
use crate::roots::{self, qpoly};

/// Largest polynomial degree the recursion will build.
pub const MAX_POLY_DEGREE: u64 = 10_000;

/// Largest tree enumerated configuration by configuration.
pub const MAX_BRUTEFORCE_VERTICES: u64 = 22;

/// Coefficients of the exact path may not grow beyond this many bits.
pub const MAX_COEFF_BITS: u64 = 1 << 22;

/// Largest degree for the exact repeated-factor split.
const MAX_EXACT_SPLIT_DEGREE: usize = 512;

/// Roots farther than this from the unit circle fail certification.
pub const CIRCLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Exact(Vec<BigRational>),
    Float(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPolynomial {
    pub tree: TreeSpec,
    pub t: Temperature,
    pub coeffs: Coefficients,
}

impl PartitionPolynomial {
    pub fn degree(&self) -> usize {
        self.len() - 1
    }

    fn len(&self) -> usize {
        match &self.coeffs {
            Coefficients::Exact(c) => c.len(),
            Coefficients::Float(c) => c.len(),
        }
    }

    pub fn coeffs_f64(&self) -> Vec<f64> {
        match &self.coeffs {
            Coefficients::Exact(c) => c.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect(),
            Coefficients::Float(c) => c.clone(),
        }
    }

    pub fn is_palindromic(&self) -> bool {
        match &self.coeffs {
            Coefficients::Exact(c) => c.iter().eq(c.iter().rev()),
            Coefficients::Float(c) => c
                .iter()
                .zip(c.iter().rev())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs())),
        }
    }

    pub fn all_positive(&self) -> bool {
        match &self.coeffs {
            Coefficients::Exact(c) => c.iter().all(|r| r.is_positive()),
            Coefficients::Float(c) => c.iter().all(|&x| x > 0.0),
        }
    }

    /// `P(1)`, the Gibbs sum at zero field.
    pub fn value_at_one(&self) -> f64 {
        match &self.coeffs {
            Coefficients::Exact(c) => c
                .iter()
                .fold(BigRational::zero(), |acc, x| acc + x)
                .to_f64()
                .unwrap_or(f64::INFINITY),
            Coefficients::Float(c) => c.iter().sum(),
        }
    }

    /// Coefficients as JSON; exact values become `{"num", "den"}` strings.
    pub fn to_json(&self) -> Value {
        let coeffs: Vec<Value> = match &self.coeffs {
            Coefficients::Exact(c) => c
                .iter()
                .map(|r| json!({"num": r.numer().to_string(), "den": r.denom().to_string()}))
                .collect(),
            Coefficients::Float(c) => c.iter().map(|&x| json!(x)).collect(),
        };
        json!({
            "tree": self.tree.variant().to_string(),
            "k": self.tree.k(),
            "n": self.tree.level(),
            "t": self.t.to_string(),
            "exact": matches!(self.coeffs, Coefficients::Exact(_)),
            "degree": self.degree(),
            "coefficients": coeffs,
        })
    }
}

fn check_degree(tree: &TreeSpec) -> Result<()> {
    if tree.vertex_count() > MAX_POLY_DEGREE {
        return Err(Error::SizeGuard(format!(
            "{tree} has {} vertices; the polynomial recursion is capped at degree {MAX_POLY_DEGREE}",
            tree.vertex_count()
        )));
    }
    Ok(())
}

/// Exponent used at each recursion level: `k` everywhere except the last
/// step of the full tree, which joins `k + 1` subtrees at the center.
fn level_exponents(tree: &TreeSpec) -> Vec<u32> {
    let k = tree.k();
    match tree.variant() {
        TreeVariant::Rooted => vec![k; tree.level() as usize],
        TreeVariant::Full => {
            let mut e = vec![k; tree.level() as usize - 1];
            e.push(k + 1);
            e
        }
    }
}

/// Partition polynomial from the subtree recursion
/// `A' = (A + t B)^e`, `B' = z (t A + B)^e`, starting at `A = 1`, `B = z`.
pub fn partition_poly_recursive(tree: &TreeSpec, t: &Temperature) -> Result<PartitionPolynomial> {
    t.validate_closed()?;
    check_degree(tree)?;
    let coeffs = match t.exact() {
        Some(r) => Coefficients::Exact(recursive_exact(tree, r)?),
        None => Coefficients::Float(recursive_float(tree, t.value())?),
    };
    Ok(PartitionPolynomial {
        tree: *tree,
        t: t.clone(),
        coeffs,
    })
}

fn mul_int(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn pow_int(a: &[BigInt], e: u32) -> Vec<BigInt> {
    let mut out = vec![BigInt::one()];
    for _ in 0..e {
        out = mul_int(&out, a);
    }
    out
}

/// Integer form for `t = p/q`: `A~' = (q A~ + p B~)^e`, `B~' = z (p A~ + q B~)^e`,
/// and the polynomial is `(A~ + B~) / q^{|E|}`.
fn recursive_exact(tree: &TreeSpec, t: &BigRational) -> Result<Vec<BigRational>> {
    let (p, q) = (t.numer().clone(), t.denom().clone());
    let mut a = vec![BigInt::one()];
    let mut b = vec![BigInt::zero(), BigInt::one()];
    for (level, e) in level_exponents(tree).into_iter().enumerate() {
        let len = a.len().max(b.len());
        // x A~ + y B~
        let comb = |x: &BigInt, y: &BigInt| -> Vec<BigInt> {
            (0..len)
                .map(|m| {
                    let l = a.get(m).map_or_else(BigInt::zero, |v| v * x);
                    let r = b.get(m).map_or_else(BigInt::zero, |v| v * y);
                    l + r
                })
                .collect()
        };
        let sa = comb(&q, &p);
        let sb = comb(&p, &q);
        let na = pow_int(&sa, e);
        let mut nb = vec![BigInt::zero()];
        nb.extend(pow_int(&sb, e));
        let bits = na.iter().chain(nb.iter()).map(|c| c.bits()).max().unwrap_or(0);
        if bits > MAX_COEFF_BITS {
            return Err(Error::Overflow {
                level: level as u32 + 1,
                reason: format!("coefficients reached {bits} bits (cap {MAX_COEFF_BITS})"),
            });
        }
        a = na;
        b = nb;
    }
    let scale = num::pow(q, tree.edge_count() as usize);
    let len = a.len().max(b.len());
    Ok((0..len)
        .map(|m| {
            let s = a.get(m).cloned().unwrap_or_default() + b.get(m).cloned().unwrap_or_default();
            BigRational::new(s, scale.clone())
        })
        .collect())
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Convolution with every output coefficient summed in compensated form.
fn conv_compensated(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    (0..n)
        .map(|m| {
            let lo = m.saturating_sub(b.len() - 1);
            let hi = m.min(a.len() - 1);
            let (mut s, mut c) = (0.0, 0.0);
            for i in lo..=hi {
                let p = a[i] * b[m - i];
                let pe = a[i].mul_add(b[m - i], -p);
                let (ns, e) = two_sum(s, p);
                s = ns;
                c += e + pe;
            }
            s + c
        })
        .collect()
}

fn recursive_float(tree: &TreeSpec, t: f64) -> Result<Vec<f64>> {
    let mut a = vec![1.0];
    let mut b = vec![0.0, 1.0];
    for (level, e) in level_exponents(tree).into_iter().enumerate() {
        let len = a.len().max(b.len());
        let get = |v: &[f64], m: usize| v.get(m).copied().unwrap_or(0.0);
        let sa: Vec<f64> = (0..len).map(|m| get(&a, m) + t * get(&b, m)).collect();
        let sb: Vec<f64> = (0..len).map(|m| t * get(&a, m) + get(&b, m)).collect();
        let mut na = vec![1.0];
        let mut pb = vec![1.0];
        for _ in 0..e {
            na = conv_compensated(&na, &sa);
            pb = conv_compensated(&pb, &sb);
        }
        let mut nb = vec![0.0];
        nb.extend(pb);
        if na.iter().chain(nb.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Overflow {
                level: level as u32 + 1,
                reason: "a coefficient is no longer finite in double precision".into(),
            });
        }
        a = na;
        b = nb;
    }
    let len = a.len().max(b.len());
    Ok((0..len)
        .map(|m| a.get(m).copied().unwrap_or(0.0) + b.get(m).copied().unwrap_or(0.0))
        .collect())
}

/// Partition polynomial by summing over all `2^|V|` spin configurations.
pub fn partition_poly_bruteforce(tree: &TreeSpec, t: &Temperature) -> Result<PartitionPolynomial> {
    t.validate_closed()?;
    let nv = tree.vertex_count();
    if nv > MAX_BRUTEFORCE_VERTICES {
        return Err(Error::SizeGuard(format!(
            "{tree} has {nv} vertices; brute force is limited to {MAX_BRUTEFORCE_VERTICES}"
        )));
    }
    let nv = nv as usize;
    let edges = tree.edges();
    let ne = edges.len();
    // table[d * (ne + 1) + u] counts configurations with d down spins and
    // u unsatisfied edges
    let width = ne + 1;
    let total: u64 = 1 << nv;
    let chunk = 1u64 << 12.min(nv);
    let table = (0..total.div_ceil(chunk))
        .into_par_iter()
        .fold(
            || vec![0u64; (nv + 1) * width],
            |mut acc, c| {
                for mask in c * chunk..((c + 1) * chunk).min(total) {
                    let d = mask.count_ones() as usize;
                    let u = edges
                        .iter()
                        .filter(|&&(x, y)| ((mask >> x) ^ (mask >> y)) & 1 == 1)
                        .count();
                    acc[d * width + u] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; (nv + 1) * width],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let coeffs = match t.exact() {
        Some(r) => {
            let pows: Vec<BigRational> = (0..width).map(|u| num::pow(r.clone(), u)).collect();
            Coefficients::Exact(
                (0..=nv)
                    .map(|d| {
                        (0..width).fold(BigRational::zero(), |acc, u| {
                            acc + &pows[u] * BigRational::from_integer(table[d * width + u].into())
                        })
                    })
                    .collect(),
            )
        }
        None => {
            let tv = t.value();
            Coefficients::Float(
                (0..=nv)
                    .map(|d| {
                        (0..width)
                            .map(|u| table[d * width + u] as f64 * tv.powi(u as i32))
                            .sum()
                    })
                    .collect(),
            )
        }
    };
    Ok(PartitionPolynomial {
        tree: *tree,
        t: t.clone(),
        coeffs,
    })
}

/// A root of the partition polynomial on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleRoot {
    pub angle: f64,
    /// Newton-step error estimate `|P(z) / P'(z)|` after refinement.
    pub residual: f64,
    /// `||z| - 1|`.
    pub radius_deviation: f64,
}

/// All roots of the polynomial, certified to lie on the unit circle, as
/// angles in `(-pi, pi]` sorted ascending. Repeated roots are listed with
/// their multiplicity.
pub fn poly_roots_on_circle(p: &PartitionPolynomial) -> Result<Vec<CircleRoot>> {
    let mut found: Vec<(num::complex::Complex64, f64)> = Vec::new();
    match &p.coeffs {
        Coefficients::Exact(c) => {
            let den = c
                .iter()
                .fold(BigInt::one(), |acc, r| num::integer::lcm(acc, r.denom().clone()));
            let ints: Vec<BigInt> = c.iter().map(|r| (r * &den).to_integer()).collect();
            if roots::squarefree_mod_p(&ints) == Some(true) {
                for r in roots::aberth_exact(c)? {
                    found.push((r.z, r.error));
                }
            } else {
                if c.len() - 1 > MAX_EXACT_SPLIT_DEGREE {
                    return Err(Error::SizeGuard(format!(
                        "repeated roots suspected at degree {}; exact splitting is capped at {MAX_EXACT_SPLIT_DEGREE}",
                        c.len() - 1
                    )));
                }
                for (factor, mult) in qpoly::squarefree_decomposition(c) {
                    for r in roots::aberth_exact(&factor)? {
                        for _ in 0..mult {
                            found.push((r.z, r.error));
                        }
                    }
                }
            }
        }
        Coefficients::Float(c) => {
            let dd: Vec<Dd> = c.iter().map(|&x| Dd::from(x)).collect();
            for r in roots::aberth(&dd)? {
                found.push((r.z, r.error));
            }
        }
    }
    if found.len() != p.degree() {
        return Err(Error::Internal(format!(
            "found {} roots for a degree-{} polynomial",
            found.len(),
            p.degree()
        )));
    }
    let mut out = Vec::with_capacity(found.len());
    for (index, (z, residual)) in found.into_iter().enumerate() {
        let deviation = (z.norm() - 1.0).abs();
        if deviation > CIRCLE_TOL {
            if residual >= deviation {
                return Err(Error::Significance(format!(
                    "root {index} is resolved only to {residual:e}; cannot place it relative to the circle"
                )));
            }
            return Err(Error::OffCircle { index, deviation });
        }
        // a real root at -1 belongs to the +pi end of (-pi, pi]
        let angle = if z.re < 0.0 && z.im.abs() <= 1e-12 {
            std::f64::consts::PI
        } else {
            wrap_angle(z.arg())
        };
        out.push(CircleRoot {
            angle,
            residual,
            radius_deviation: deviation,
        });
    }
    out.sort_by(|a, b| a.angle.total_cmp(&b.angle));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn exact(p: &PartitionPolynomial) -> &[BigRational] {
        match &p.coeffs {
            Coefficients::Exact(c) => c,
            Coefficients::Float(_) => panic!("expected exact coefficients"),
        }
    }

    #[test]
    fn small_trees() {
        let tree = TreeSpec::rooted(1, 2).unwrap();
        let p = partition_poly_recursive(&tree, &Temperature::from_ratio(1, 2).unwrap()).unwrap();
        assert_eq!(exact(&p), &[q(1, 1), q(5, 4), q(5, 4), q(1, 1)]);
        let single = TreeSpec::rooted(0, 2).unwrap();
        for t in ["1/3", "0.9"] {
            let t: Temperature = t.parse().unwrap();
            let p = partition_poly_recursive(&single, &t).unwrap();
            assert_eq!(exact(&p), &[q(1, 1), q(1, 1)]);
            let b = partition_poly_bruteforce(&single, &t).unwrap();
            assert_eq!(exact(&b), &[q(1, 1), q(1, 1)]);
        }
    }

    #[test]
    fn unit_temperature_gives_binomials() {
        let tree = TreeSpec::full(2, 2).unwrap();
        let p = partition_poly_recursive(&tree, &Temperature::from_ratio(1, 1).unwrap()).unwrap();
        let c = exact(&p);
        let n = tree.vertex_count() as i64;
        let mut b = 1i64;
        for (j, x) in c.iter().enumerate() {
            assert_eq!(*x, q(b, 1));
            b = b * (n - j as i64) / (j as i64 + 1);
        }
        let r = poly_roots_on_circle(&p).unwrap();
        assert_eq!(r.len(), 10);
        assert!(r.iter().all(|x| x.angle == std::f64::consts::PI));
    }

    #[test]
    fn recursion_matches_bruteforce() {
        let t = Temperature::from_ratio(1, 5).unwrap();
        for tree in [TreeSpec::rooted(2, 2).unwrap(), TreeSpec::full(1, 2).unwrap()] {
            let a = partition_poly_recursive(&tree, &t).unwrap();
            let b = partition_poly_bruteforce(&tree, &t).unwrap();
            assert_eq!(a, b);
            assert!(a.is_palindromic() && a.all_positive());
        }
    }

    #[test]
    fn float_path_agrees_with_exact() {
        let tree = TreeSpec::full(3, 2).unwrap();
        let e = partition_poly_recursive(&tree, &"0.3".parse().unwrap()).unwrap();
        let f = partition_poly_recursive(&tree, &Temperature::from_f64(0.3)).unwrap();
        for (x, y) in e.coeffs_f64().iter().zip(f.coeffs_f64()) {
            assert!((x - y).abs() <= 1e-14 * x);
        }
        let b = partition_poly_bruteforce(&TreeSpec::rooted(2, 2).unwrap(), &Temperature::from_f64(0.3)).unwrap();
        let r = partition_poly_recursive(&TreeSpec::rooted(2, 2).unwrap(), &Temperature::from_f64(0.3)).unwrap();
        for (x, y) in b.coeffs_f64().iter().zip(r.coeffs_f64()) {
            assert!((x - y).abs() <= 1e-14 * x);
        }
    }

    #[test]
    fn roots_of_the_level_one_tree() {
        let tree = TreeSpec::rooted(1, 2).unwrap();
        let p = partition_poly_recursive(&tree, &"1/2".parse().unwrap()).unwrap();
        let r = poly_roots_on_circle(&p).unwrap();
        let a = 1.696_124_157_962_962;
        let expect = [-a, a, std::f64::consts::PI];
        for (x, e) in r.iter().zip(expect) {
            assert!((x.angle - e).abs() < 1e-12, "{} vs {e}", x.angle);
        }
        let p0 = partition_poly_recursive(&tree, &"0".parse().unwrap()).unwrap();
        let r0 = poly_roots_on_circle(&p0).unwrap();
        let third = std::f64::consts::FRAC_PI_3;
        for (x, e) in r0.iter().zip([-third, third, std::f64::consts::PI]) {
            assert!((x.angle - e).abs() < 1e-14);
        }
    }

    #[test]
    fn guards() {
        let big = TreeSpec::rooted(5, 2).unwrap();
        assert!(matches!(
            partition_poly_bruteforce(&big, &"1/2".parse().unwrap()),
            Err(Error::SizeGuard(_))
        ));
        let deep = TreeSpec::rooted(14, 2).unwrap();
        assert!(matches!(
            partition_poly_recursive(&deep, &"1/2".parse().unwrap()),
            Err(Error::SizeGuard(_))
        ));
        assert!(partition_poly_recursive(&big, &"3/2".parse().unwrap()).is_err());
    }

    #[test]
    fn json_export_is_exact() {
        let tree = TreeSpec::rooted(1, 2).unwrap();
        let p = partition_poly_recursive(&tree, &"1/2".parse().unwrap()).unwrap();
        let v = p.to_json();
        assert_eq!(v["coefficients"][1]["num"], "5");
        assert_eq!(v["coefficients"][1]["den"], "4");
        assert_eq!(v["degree"], 3);
    }
}
