//! Model parameters, tree shapes and exact temperature values.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::complex::Complex64;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest vertex count accepted for a tree. Winding numbers of the iterated
/// lift are tracked in `i64`, which needs headroom over `k * |V|`.
pub const MAX_VERTEX_COUNT: u64 = 1 << 58;

/// Branching number, temperature variable and field angle.
///
/// `t = exp(-2J/T)` and `z = exp(i phi)` with `phi = Arg z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    k: u32,
    t: f64,
    phi: f64,
}

impl ModelParams {
    pub fn new(k: u32, t: f64, phi: f64) -> Result<Self> {
        check_k(k)?;
        check_t(t)?;
        if !phi.is_finite() || phi <= -PI || phi > PI {
            return Err(invalid("phi", format!("{phi} is not in (-pi, pi]")));
        }
        Ok(Self { k, t, phi })
    }

    /// Like [`ModelParams::new`] but reduces `phi` into `(-pi, pi]` first.
    pub fn wrapped(k: u32, t: f64, phi: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(invalid("phi", "not finite"));
        }
        Self::new(k, t, wrap_angle(phi))
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// The field variable `z = e^{i phi}`.
    pub fn z(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.phi)
    }

    pub fn with_phi(&self, phi: f64) -> Result<Self> {
        Self::new(self.k, self.t, phi)
    }

    /// Physical temperature `T = -2 / ln t` in units with `J = 1`.
    /// `None` at `t = 0` (zero temperature).
    pub fn temperature(&self) -> Option<f64> {
        temperature_of(self.t)
    }
}

/// `T = -2 / ln t` for `t` in `(0, 1)`.
pub fn temperature_of(t: f64) -> Option<f64> {
    if t > 0.0 && t < 1.0 {
        Some(-2.0 / t.ln())
    } else {
        None
    }
}

pub(crate) fn check_k(k: u32) -> Result<()> {
    if k < 2 {
        return Err(invalid("k", format!("branching number must be >= 2, got {k}")));
    }
    Ok(())
}

pub(crate) fn check_t(t: f64) -> Result<()> {
    if !(0.0..1.0).contains(&t) {
        return Err(invalid("t", format!("{t} is not in [0, 1)")));
    }
    Ok(())
}

/// Reduce an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = x - two_pi * (x / two_pi).round();
    if r <= -PI {
        r += two_pi;
    } else if r > PI {
        r -= two_pi;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeVariant {
    /// Every internal vertex has `k` children.
    Rooted,
    /// A center joined to `k + 1` rooted subtrees of level `n - 1`.
    Full,
}

impl fmt::Display for TreeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeVariant::Rooted => f.write_str("rooted"),
            TreeVariant::Full => f.write_str("full"),
        }
    }
}

impl FromStr for TreeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rooted" => Ok(TreeVariant::Rooted),
            "full" => Ok(TreeVariant::Full),
            other => Err(invalid("tree", format!("unknown variant `{other}`"))),
        }
    }
}

/// A level-`n` Cayley tree with branching number `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeSpec {
    variant: TreeVariant,
    level: u32,
    k: u32,
}

impl TreeSpec {
    pub fn new(variant: TreeVariant, level: u32, k: u32) -> Result<Self> {
        check_k(k)?;
        if variant == TreeVariant::Full && level == 0 {
            return Err(invalid("n", "the full tree requires level >= 1"));
        }
        let spec = Self { variant, level, k };
        match spec.vertex_count_wide() {
            Some(v) if v <= MAX_VERTEX_COUNT as u128 => Ok(spec),
            _ => Err(Error::LevelTooDeep {
                k,
                level,
                reason: format!("vertex count exceeds {MAX_VERTEX_COUNT}"),
            }),
        }
    }

    pub fn rooted(level: u32, k: u32) -> Result<Self> {
        Self::new(TreeVariant::Rooted, level, k)
    }

    pub fn full(level: u32, k: u32) -> Result<Self> {
        Self::new(TreeVariant::Full, level, k)
    }

    pub fn variant(&self) -> TreeVariant {
        self.variant
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    fn vertex_count_wide(&self) -> Option<u128> {
        let k = self.k as u128;
        let rooted = |n: u32| -> Option<u128> {
            // 1 + k + ... + k^n
            let mut total: u128 = 0;
            let mut pow: u128 = 1;
            for _ in 0..=n {
                total = total.checked_add(pow)?;
                pow = pow.checked_mul(k)?;
            }
            Some(total)
        };
        match self.variant {
            TreeVariant::Rooted => rooted(self.level),
            TreeVariant::Full => rooted(self.level - 1)?
                .checked_mul(k + 1)?
                .checked_add(1),
        }
    }

    /// `|V|`: `(k^{n+1} - 1)/(k - 1)` for the rooted tree and
    /// `(k^{n+1} + k^n - 2)/(k - 1)` for the full tree.
    pub fn vertex_count(&self) -> u64 {
        self.vertex_count_wide().expect("validated in TreeSpec::new") as u64
    }

    pub fn edge_count(&self) -> u64 {
        self.vertex_count() - 1
    }

    /// Edge list of the tree, vertices numbered breadth first from the root
    /// (or center).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let nv = self.vertex_count() as usize;
        let mut edges = Vec::with_capacity(nv.saturating_sub(1));
        let mut depth = vec![0u32; nv];
        let mut next = 1usize;
        let mut v = 0usize;
        while next < nv {
            let children = match (self.variant, v) {
                (TreeVariant::Full, 0) => self.k + 1,
                _ => self.k,
            };
            for _ in 0..children {
                edges.push((v, next));
                depth[next] = depth[v] + 1;
                next += 1;
            }
            v += 1;
        }
        debug_assert!(depth.iter().all(|&d| d <= self.level));
        edges
    }
}

impl fmt::Display for TreeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(k={}, n={})", self.variant, self.k, self.level)
    }
}

/// A temperature value with an exact rational form when one is known.
///
/// Decimal strings such as `0.2` parse to the exact rational `1/5`, so every
/// value read from text keeps an exact form.
#[derive(Debug, Clone, PartialEq)]
pub struct Temperature {
    exact: Option<BigRational>,
    value: f64,
}

impl Temperature {
    pub fn from_f64(value: f64) -> Self {
        Self { exact: None, value }
    }

    pub fn from_ratio(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(invalid("t", "zero denominator"));
        }
        Ok(Self::from_rational(BigRational::new(num.into(), den.into())))
    }

    pub fn from_rational(r: BigRational) -> Self {
        let value = r.to_f64().unwrap_or(f64::NAN);
        Self {
            exact: Some(r),
            value,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<&BigRational> {
        self.exact.as_ref()
    }

    /// Checks `0 <= t <= 1`; the partition function is defined at `t = 1`.
    pub fn validate_closed(&self) -> Result<()> {
        let ok = match &self.exact {
            Some(r) => !r.is_negative() && *r <= BigRational::one(),
            None => (0.0..=1.0).contains(&self.value),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("t", format!("{self} is not in [0, 1]")))
        }
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.exact {
            Some(r) if r.denom().is_one() => write!(f, "{}", r.numer()),
            Some(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            None => write!(f, "{}", self.value),
        }
    }
}

impl FromStr for Temperature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p: BigInt = p
                .trim()
                .parse()
                .map_err(|_| invalid("t", format!("bad numerator in `{s}`")))?;
            let q: BigInt = q
                .trim()
                .parse()
                .map_err(|_| invalid("t", format!("bad denominator in `{s}`")))?;
            if q.is_zero() {
                return Err(invalid("t", "zero denominator"));
            }
            return Ok(Self::from_rational(BigRational::new(p, q)));
        }
        parse_decimal(s)
            .map(Self::from_rational)
            .ok_or_else(|| invalid("t", format!("cannot parse `{s}` as a decimal or p/q")))
    }
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("0{int_part}{frac_part}").parse().ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = if scale >= 0 {
        BigRational::from_integer(digits * num::pow(ten, scale as usize))
    } else {
        BigRational::new(digits, num::pow(ten, (-scale) as usize))
    };
    if neg {
        r = -r;
    }
    Some(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_counts() {
        assert_eq!(TreeSpec::rooted(2, 2).unwrap().vertex_count(), 7);
        assert_eq!(TreeSpec::full(1, 2).unwrap().vertex_count(), 4);
        assert_eq!(TreeSpec::rooted(1, 3).unwrap().vertex_count(), 4);
        assert_eq!(TreeSpec::rooted(2, 3).unwrap().vertex_count(), 13);
        // center plus three rooted level-1 subtrees
        assert_eq!(TreeSpec::full(2, 2).unwrap().vertex_count(), 10);
        assert_eq!(TreeSpec::rooted(0, 2).unwrap().vertex_count(), 1);
    }

    #[test]
    fn edges_form_a_tree() {
        for spec in [
            TreeSpec::rooted(3, 2).unwrap(),
            TreeSpec::full(3, 2).unwrap(),
            TreeSpec::full(2, 3).unwrap(),
        ] {
            let e = spec.edges();
            assert_eq!(e.len() as u64, spec.edge_count());
            let mut seen = vec![false; spec.vertex_count() as usize];
            seen[0] = true;
            for (a, b) in e {
                assert!(seen[a] && !seen[b]);
                seen[b] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(1, 0.5, 0.0).is_err());
        assert!(ModelParams::new(2, 1.0, 0.0).is_err());
        assert!(ModelParams::new(2, -0.1, 0.0).is_err());
        assert!(ModelParams::new(2, 0.5, -PI).is_err());
        assert!(ModelParams::new(2, 0.5, PI).is_ok());
        assert!(TreeSpec::full(0, 2).is_err());
        assert!(TreeSpec::rooted(80, 2).is_err());
    }

    #[test]
    fn temperature_accessor() {
        let p = ModelParams::new(2, (-1.0f64).exp(), 0.0).unwrap();
        assert!((p.temperature().unwrap() - 2.0).abs() < 1e-12);
        assert!(ModelParams::new(2, 0.0, 0.0).unwrap().temperature().is_none());
    }

    #[test]
    fn parses_exact_temperatures() {
        let t: Temperature = "1/5".parse().unwrap();
        assert_eq!(t.exact().unwrap(), &BigRational::new(1.into(), 5.into()));
        let d: Temperature = "0.2".parse().unwrap();
        assert_eq!(d.exact(), t.exact());
        let e: Temperature = "1e-4".parse().unwrap();
        assert_eq!(e.exact().unwrap(), &BigRational::new(1.into(), 10000.into()));
        assert!((e.value() - 1e-4).abs() < 1e-20);
        assert!("abc".parse::<Temperature>().is_err());
        assert!("1/0".parse::<Temperature>().is_err());
        assert_eq!(t.to_string(), "1/5");
    }

    #[test]
    fn wraps_angles() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
