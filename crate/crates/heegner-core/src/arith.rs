//! Integer utilities: factorization, Kronecker symbols, Hensel lifting,
//! truncated p-adic residues, formal logarithm sums and representation counts
//! of integers by positive definite binary quadratic forms.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_integer::{gcd, Roots};
use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Upper bound of the prime sieve backing [`factor`].
pub const SIEVE_LIMIT: u64 = 1_000_000;

/// Largest integer [`factor`] accepts (`SIEVE_LIMIT`'s square).
pub const FACTOR_LIMIT: u64 = SIEVE_LIMIT * SIEVE_LIMIT;

fn sieve() -> &'static Vec<u32> {
    static SIEVE: OnceLock<Vec<u32>> = OnceLock::new();
    SIEVE.get_or_init(|| {
        // Odd-prime sieve of Eratosthenes; we only store the primes themselves.
        let n = SIEVE_LIMIT as usize;
        let mut is_comp = vec![false; n + 1];
        let mut primes = vec![2u32];
        let mut i = 3usize;
        while i <= n {
            if !is_comp[i] {
                primes.push(i as u32);
                let mut j = i * i;
                while j <= n {
                    is_comp[j] = true;
                    j += 2 * i;
                }
            }
            i += 2;
        }
        primes
    })
}

/// All primes up to `limit` (`limit <= SIEVE_LIMIT`).
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    assert!(limit <= SIEVE_LIMIT, "primes_up_to: limit exceeds sieve");
    sieve()
        .iter()
        .map(|&p| p as u64)
        .take_while(|&p| p <= limit)
        .collect()
}

/// Primality test by trial division against the sieve (valid below `FACTOR_LIMIT`).
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    assert!(n <= FACTOR_LIMIT, "is_prime: {n} out of range");
    for &p in sieve() {
        let p = p as u64;
        if p * p > n {
            return true;
        }
        if n % p == 0 {
            return n == p;
        }
    }
    true
}

/// A positive integer together with its prime factorization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factorization {
    /// The factored integer.
    pub n: u64,
    /// `(prime, exponent)` pairs in increasing prime order.
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    /// Exponent of `p` in `n`.
    pub fn exponent_of(&self, p: u64) -> u32 {
        self.factors
            .iter()
            .find(|&&(q, _)| q == p)
            .map_or(0, |&(_, e)| e)
    }

    /// All positive divisors of `n`, in increasing order.
    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.factors {
            let mut next = Vec::with_capacity(divs.len() * (e as usize + 1));
            for &d in &divs {
                let mut pe = 1u64;
                for _ in 0..=e {
                    next.push(d * pe);
                    pe = pe.saturating_mul(p);
                }
            }
            divs = next;
        }
        divs.sort_unstable();
        divs
    }

    /// Sum of divisors `sigma_1(n)`.
    pub fn sigma1(&self) -> u64 {
        self.factors.iter().fold(1u64, |acc, &(p, e)| {
            let mut s = 1u64;
            let mut pe = 1u64;
            for _ in 0..e {
                pe *= p;
                s += pe;
            }
            acc * s
        })
    }
}

/// Factor `n` by trial division against the sieve.
///
/// Accepts `1 <= n <= FACTOR_LIMIT`; anything larger is rejected rather than
/// silently mis-factored.
pub fn factor(n: u64) -> Result<Factorization> {
    if n == 0 || n > FACTOR_LIMIT {
        return Err(Error::FactorRange(n));
    }
    let mut m = n;
    let mut factors = Vec::new();
    for &p in sieve() {
        let p = p as u64;
        if p * p > m {
            break;
        }
        if m % p == 0 {
            let mut e = 0;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            factors.push((p, e));
        }
    }
    if m > 1 {
        factors.push((m, 1));
    }
    Ok(Factorization { n, factors })
}

/// `ord_l(n)` for `n != 0`.
pub fn ord_at(mut n: u64, l: u64) -> u32 {
    assert!(n != 0 && l >= 2, "ord_at: need n != 0, l >= 2");
    let mut e = 0;
    while n % l == 0 {
        n /= l;
        e += 1;
    }
    e
}

/// Kronecker symbol `(a | n)`, defined for all integers (n may be negative,
/// even, or zero).
pub fn kronecker(mut a: i64, mut n: i64) -> i32 {
    if n == 0 {
        return if a == 1 || a == -1 { 1 } else { 0 };
    }
    if a.unsigned_abs() % 2 == 0 && n.unsigned_abs() % 2 == 0 {
        return 0;
    }
    let mut result = 1i32;
    if n < 0 {
        n = -n;
        if a < 0 {
            result = -result;
        }
    }
    // Split off the even part of n: (a|2) depends on a mod 8.
    while n % 2 == 0 {
        n /= 2;
        match a.rem_euclid(8) {
            1 | 7 => {}
            3 | 5 => result = -result,
            _ => return 0,
        }
    }
    // Now n is positive and odd: Jacobi symbol with reciprocity.
    a = a.rem_euclid(n);
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            match n.rem_euclid(8) {
                3 | 5 => result = -result,
                _ => {}
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            result = -result;
        }
        a = a.rem_euclid(n);
    }
    if n == 1 {
        result
    } else {
        0
    }
}

pub(crate) fn mod_inverse(a: i128, m: i128) -> i128 {
    // Extended Euclid; panics if gcd(a, m) != 1.
    let (mut r0, mut r1) = (m, a.rem_euclid(m));
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    assert!(r0 == 1, "mod_inverse: arguments not coprime");
    t0.rem_euclid(m)
}

/// Square root of `a` modulo `r^k` for an odd prime `r` with `r` not dividing
/// `a`, if one exists.
///
/// Of the two roots the one returned is canonical: its least residue modulo
/// `r` lies in `[1, (r-1)/2]`.
pub fn hensel_sqrt(a: i64, r: u64, k: u32) -> Option<u64> {
    assert!(r % 2 == 1 && r > 2 && is_prime(r), "hensel_sqrt: r must be an odd prime");
    assert!(k >= 1, "hensel_sqrt: k >= 1");
    let a_mod = a.rem_euclid(r as i64) as u64;
    assert!(a_mod != 0, "hensel_sqrt: r divides a");
    // Base root mod r by direct scan over the canonical half-range.
    let mut x0 = 0u64;
    for x in 1..=(r - 1) / 2 {
        if (x as u128 * x as u128) % r as u128 == a_mod as u128 {
            x0 = x;
            break;
        }
    }
    if x0 == 0 {
        return None;
    }
    // Newton lifting, doubling precision each step.
    let target: u128 = (r as u128).pow(k);
    let mut modulus: u128 = r as u128;
    let mut x = x0 as u128;
    while modulus < target {
        modulus = (modulus * modulus).min(target * target);
        if modulus > target {
            modulus = target;
        }
        let am = (a as i128).rem_euclid(modulus as i128) as u128;
        let fx = (x * x % modulus + modulus - am % modulus) % modulus;
        let inv = mod_inverse((2 * x % modulus) as i128, modulus as i128) as u128;
        x = (x + modulus - fx * inv % modulus) % modulus;
    }
    // The Newton iterate preserves x mod r, so the canonical choice survives.
    debug_assert!(x % r as u64 as u128 == x0 as u128);
    Some(x as u64)
}

/// A residue in `Z / p^M Z`, the working ring for p-adic computations carried
/// to absolute precision `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadicTrunc {
    /// The prime.
    pub p: u64,
    /// Absolute precision exponent.
    pub m: u32,
    /// Cached modulus `p^m`.
    pub pm: u64,
    /// Residue in `[0, p^m)`.
    pub res: u64,
}

impl PadicTrunc {
    /// Construct a residue; `p^m` must fit in a `u64` comfortably below the
    /// overflow threshold for products in `u128`.
    pub fn new(p: u64, m: u32, value: i64) -> Self {
        let pm = (p as u128).pow(m);
        assert!(pm < (1u128 << 63), "PadicTrunc: modulus too large");
        let pm = pm as u64;
        PadicTrunc {
            p,
            m,
            pm,
            res: value.rem_euclid(pm as i64) as u64,
        }
    }

    fn compat(&self, other: &Self) {
        assert!(
            self.p == other.p && self.m == other.m,
            "PadicTrunc: mixed moduli {}^{} vs {}^{}",
            self.p,
            self.m,
            other.p,
            other.m
        );
    }

    /// Additive identity at the same precision.
    pub fn zero_like(&self) -> Self {
        Self { res: 0, ..*self }
    }

    /// Multiplicative identity at the same precision.
    pub fn one_like(&self) -> Self {
        Self { res: 1 % self.pm, ..*self }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.compat(other);
        Self {
            res: ((self.res as u128 + other.res as u128) % self.pm as u128) as u64,
            ..*self
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.compat(other);
        Self {
            res: ((self.res as u128 + self.pm as u128 - other.res as u128) % self.pm as u128)
                as u64,
            ..*self
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.compat(other);
        Self {
            res: ((self.res as u128 * other.res as u128) % self.pm as u128) as u64,
            ..*self
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            res: (self.pm - self.res) % self.pm,
            ..*self
        }
    }

    /// True iff the residue is a p-adic unit.
    pub fn is_unit(&self) -> bool {
        self.res % self.p != 0
    }

    /// Inverse of a unit residue.
    pub fn inv(&self) -> Self {
        assert!(self.is_unit(), "PadicTrunc::inv: not a unit");
        Self {
            res: mod_inverse(self.res as i128, self.pm as i128) as u64,
            ..*self
        }
    }

    /// `self^k` by binary exponentiation.
    pub fn pow(&self, mut k: u64) -> Self {
        let mut base = *self;
        let mut acc = self.one_like();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            k >>= 1;
        }
        acc
    }
}

/// A finite formal sum `sum_l c_l · log(l)` over primes `l` with exact
/// rational coefficients.
///
/// Logarithms of composite arguments are expanded prime-by-prime, so equality
/// of two sums is literal equality of coefficient maps. Nothing here commits
/// to a particular branch or completion of `log`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FormalLogSum {
    coeffs: BTreeMap<u64, Rational64>,
}

impl FormalLogSum {
    /// The empty sum.
    pub fn zero() -> Self {
        Self::default()
    }

    /// `c · log(l)` for a single prime `l`.
    pub fn log_prime(l: u64, c: Rational64) -> Self {
        let mut s = Self::zero();
        s.add_prime(l, c);
        s
    }

    /// `log(n)` for a positive integer, expanded over the primes of `n`.
    pub fn log_integer(n: u64) -> Result<Self> {
        let f = factor(n)?;
        let mut s = Self::zero();
        for (p, e) in f.factors {
            s.add_prime(p, Rational64::from_integer(e as i64));
        }
        Ok(s)
    }

    /// `log(a/b)` for positive integers, expanded over primes.
    pub fn log_rational(a: u64, b: u64) -> Result<Self> {
        let mut s = Self::log_integer(a)?;
        s.sub_assign(&Self::log_integer(b)?);
        Ok(s)
    }

    /// Add `c · log(l)` in place.
    pub fn add_prime(&mut self, l: u64, c: Rational64) {
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(l).or_insert_with(Rational64::zero);
        *entry += c;
        if entry.is_zero() {
            self.coeffs.remove(&l);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (&l, &c) in &other.coeffs {
            self.add_prime(l, c);
        }
    }

    pub fn sub_assign(&mut self, other: &Self) {
        for (&l, &c) in &other.coeffs {
            self.add_prime(l, -c);
        }
    }

    /// Multiply every coefficient by `c`.
    pub fn scale(&mut self, c: Rational64) {
        if c.is_zero() {
            self.coeffs.clear();
            return;
        }
        for v in self.coeffs.values_mut() {
            *v *= c;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient of `log(l)`.
    pub fn coeff(&self, l: u64) -> Rational64 {
        self.coeffs.get(&l).copied().unwrap_or_else(Rational64::zero)
    }

    /// Primes with nonzero coefficient, increasing.
    pub fn support(&self) -> Vec<u64> {
        self.coeffs.keys().copied().collect()
    }

    /// Iterate `(prime, coefficient)` pairs in increasing prime order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, Rational64)> + '_ {
        self.coeffs.iter().map(|(&l, &c)| (l, c))
    }
}

/// All integer representations `(x, y)` of `n` by the positive definite form
/// `a x^2 + b x y + c y^2`, sorted lexicographically.
///
/// The enumeration is exact: `y` ranges over `|y| <= sqrt(4 a n / |disc|)`
/// and for each `y` the quadratic in `x` is solved by integer square root.
pub fn form_representations(a: i64, b: i64, c: i64, n: i64) -> Vec<(i64, i64)> {
    let disc = b * b - 4 * a * c;
    assert!(a > 0 && disc < 0, "form_representations: form must be positive definite");
    if n < 0 {
        return Vec::new();
    }
    if n == 0 {
        return vec![(0, 0)];
    }
    let mut out = Vec::new();
    // 4a·f(x,y) = (2ax + by)^2 + |disc| y^2, so |y| <= sqrt(4an/|disc|).
    let ybound = ((4 * a as i128 * n as i128) / (-disc) as i128).sqrt() as i64 + 1;
    for y in -ybound..=ybound {
        // Solve a x^2 + (b y) x + (c y^2 - n) = 0 over Z.
        let dy = (b as i128 * y as i128).pow(2)
            - 4 * a as i128 * (c as i128 * y as i128 * y as i128 - n as i128);
        if dy < 0 {
            continue;
        }
        let s = dy.sqrt();
        if s * s != dy {
            continue;
        }
        for sign in [1i128, -1] {
            let num = -(b as i128) * y as i128 + sign * s;
            if num.rem_euclid(2 * a as i128) == 0 {
                let x = (num / (2 * a as i128)) as i64;
                out.push((x, y));
            }
            if s == 0 {
                break;
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Histogram of values `f(x,y) <= bound` of a positive definite integer form:
/// `table[v]` = number of lattice points with `f(x,y) = v` (including the
/// origin at `v = 0`).
pub fn form_value_table(a: i64, b: i64, c: i64, bound: usize) -> Vec<u32> {
    let disc = b * b - 4 * a * c;
    assert!(a > 0 && disc < 0, "form_value_table: form must be positive definite");
    let n = bound as i128;
    let mut table = vec![0u32; bound + 1];
    let ybound = ((4 * a as i128 * n) / (-disc) as i128).sqrt() as i64 + 1;
    for y in -ybound..=ybound {
        // For fixed y, f is a parabola in x; walk the integer x-window.
        let byc = b as i128 * y as i128;
        let cy2 = c as i128 * y as i128 * y as i128;
        let dy = byc * byc - 4 * a as i128 * (cy2 - n);
        if dy < 0 {
            continue;
        }
        let s = dy.sqrt();
        let xmin = ((-byc - s) as f64 / (2.0 * a as f64)).floor() as i128 - 1;
        let xmax = ((-byc + s) as f64 / (2.0 * a as f64)).ceil() as i128 + 1;
        for x in xmin..=xmax {
            let v = a as i128 * x * x + byc * x + cy2;
            if (0..=n).contains(&v) {
                table[v as usize] += 1;
            }
        }
    }
    table
}

/// Signed `gcd`-free helpers used across modules.
pub fn gcd_i64(a: i64, b: i64) -> i64 {
    gcd(a.abs(), b.abs())
}

/// Integer square root check: `Some(r)` with `r*r == n` if `n` is a perfect square.
pub fn perfect_sqrt(n: i64) -> Option<i64> {
    if n < 0 {
        return None;
    }
    let r = n.sqrt();
    if r * r == n {
        Some(r)
    } else {
        None
    }
}

/// True iff `d` is a fundamental discriminant.
pub fn is_fundamental_discriminant(d: i64) -> bool {
    if d == 1 {
        return true;
    }
    if d == 0 {
        return false;
    }
    let dm4 = d.rem_euclid(4);
    if dm4 == 1 {
        is_squarefree(d.unsigned_abs())
    } else if dm4 == 0 {
        let q = d / 4;
        let qm4 = q.rem_euclid(4);
        (qm4 == 2 || qm4 == 3) && is_squarefree(q.unsigned_abs())
    } else {
        false
    }
}

fn is_squarefree(n: u64) -> bool {
    match factor(n) {
        Ok(f) => f.factors.iter().all(|&(_, e)| e == 1),
        Err(_) => panic!("is_squarefree: {n} out of factorization range"),
    }
}

/// Decompose the fundamental discriminant `d` as `d1 * d2` with `|d2| = g`,
/// both factors fundamental; requires odd `d` and `g | |d|`.
pub fn split_discriminant(d: i64, g: u64) -> (i64, i64) {
    assert!(d % 2 != 0 && d.unsigned_abs() % g == 0, "split_discriminant: bad divisor");
    let g = g as i64;
    let d2 = if g.rem_euclid(4) == 1 { g } else { -g };
    let d1 = d / d2;
    debug_assert!(is_fundamental_discriminant(d1) && is_fundamental_discriminant(d2));
    (d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_small() {
        let f = factor(2 * 2 * 3 * 49).unwrap();
        assert_eq!(f.factors, vec![(2, 2), (3, 1), (7, 2)]);
        assert_eq!(f.divisors().len(), 3 * 2 * 3);
        assert_eq!(factor(1).unwrap().factors, vec![]);
        assert!(factor(0).is_err());
    }

    #[test]
    fn kronecker_basics() {
        // (-7 | l) detects the splitting of l in Q(sqrt(-7)).
        assert_eq!(kronecker(-7, 2), 1);
        assert_eq!(kronecker(-7, 11), 1);
        assert_eq!(kronecker(-7, 3), -1);
        assert_eq!(kronecker(-7, 7), 0);
        // Negative bottom: (5 | -2) = (5 | -1)(5 | 2) = 1 * (-1).
        assert_eq!(kronecker(5, -2), -1);
        assert_eq!(kronecker(5, 2), -1);
        assert_eq!(kronecker(-3, -1), -1);
    }

    #[test]
    fn hensel_sqrt_examples() {
        assert_eq!(hensel_sqrt(2, 7, 1), Some(3));
        assert_eq!(hensel_sqrt(2, 7, 2), Some(10));
        assert_eq!(hensel_sqrt(3, 7, 1), None);
        let x = hensel_sqrt(-7, 11, 4).unwrap();
        let m = 11u128.pow(4);
        assert_eq!((x as u128 * x as u128) % m, (-7i128).rem_euclid(m as i128) as u128);
        assert!((1..=5).contains(&(x % 11)));
    }

    #[test]
    fn padic_trunc_ring() {
        let a = PadicTrunc::new(3, 10, 12345);
        let b = PadicTrunc::new(3, 10, -1);
        assert_eq!(a.add(&b).sub(&a), b);
        assert!(b.is_unit());
        assert_eq!(b.mul(&b.inv()).res, 1);
        assert_eq!(b.pow(2).res, 1);
    }

    #[test]
    fn formal_log_sum_expansion() {
        // log(12) = 2 log 2 + log 3; log(12/4) = log 3.
        let t = FormalLogSum::log_integer(12).unwrap();
        assert_eq!(t.coeff(2), Rational64::from_integer(2));
        assert_eq!(t.coeff(3), Rational64::from_integer(1));
        let r = FormalLogSum::log_rational(12, 4).unwrap();
        assert_eq!(r.support(), vec![3]);
    }

    #[test]
    fn representations_principal_form() {
        // Form x^2 + xy + 2y^2 of discriminant -7.
        let reps = form_representations(1, 1, 2, 2);
        assert_eq!(reps.len(), 4); // (0,±1), ±(1,-1)
        assert_eq!(form_representations(1, 1, 2, 1).len(), 2);
        assert_eq!(form_representations(1, 1, 2, 3).len(), 0);
        let reps4 = form_representations(1, 1, 2, 4);
        assert_eq!(reps4.len(), 6); // (±2,0), (±1,∓2)... disc -7, r(4)=3 ideals
    }

    #[test]
    fn value_table_matches_pointwise() {
        let table = form_value_table(1, 1, 2, 50);
        for n in 0..=50 {
            assert_eq!(
                table[n as usize] as usize,
                form_representations(1, 1, 2, n).len(),
                "mismatch at {n}"
            );
        }
    }

    #[test]
    fn discriminant_splitting() {
        assert_eq!(split_discriminant(-15, 3), (5, -3));
        assert_eq!(split_discriminant(-15, 5), (-3, 5));
        assert_eq!(split_discriminant(-7, 1), (-7, 1));
        assert_eq!(split_discriminant(-7, 7), (1, -7));
    }
}
