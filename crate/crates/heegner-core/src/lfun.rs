//! Linear-term Fourier coefficients of the two-variable p-adic L-function.
//!
//! The central objects are the twisted divisor sums `sigma'_a(n)`, defined by
//! a sum of genus-character values over the divisors of `n`, and the resulting
//! coefficients `a_m(G_sigma)` for `p | m`.  Every quantity here is a
//! [`FormalLogSum`]: an integer (or rational) combination of symbols
//! `log(ell)` over primes, so all identities are checked exactly, with no
//! floating point or p-adic logarithm evaluation anywhere.
//!
//! Each sum has two independent routes: the divisor-sum definition, and a
//! genus-theory closed form ranging over the nonsplit primes dividing `n`.
//! The two routes share no code beyond the class group itself, which is what
//! makes their agreement a meaningful check.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use num_rational::Rational64;

use crate::arith::{factor, gcd_i64, kronecker, split_discriminant, FormalLogSum};
use crate::orders::{PicGroup, QuadSetting};
use crate::{Error, Result};

/// How far the auxiliary-ideal scans look, as a multiple of the modulus
/// `|D|p`.  Exhaustion is reported, never silently ignored.
const SCAN_MULTIPLIER: u64 = 200;

/// Everything needed to evaluate `sigma'_a` and the `G_sigma` coefficients:
/// the ambient setting, the Picard group of the order `O_s` (conductor `p^s`
/// with `s >= 1`), and the class of the ideal representing `sigma`.
pub struct SigmaContext {
    pub setting: QuadSetting,
    pub pic: Rc<PicGroup>,
    /// Index of the class of the chosen ideal in `pic`.
    pub a: usize,
    /// Cached class of an integral ideal of norm `N` and per-prime caches of
    /// the auxiliary class with norm `-ell mod |D|p`.
    aux: RefCell<AuxClasses>,
}

#[derive(Default)]
struct AuxClasses {
    n_class: Option<usize>,
    c_class: BTreeMap<u64, usize>,
}

/// Result of the closed-form evaluation: either a value, or a report that the
/// hypothesis (an ideal in the class with the required norm residue) could
/// not be verified within the scan bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SigmaClosed {
    Value(FormalLogSum),
    HypothesisFails {
        class: usize,
        n: u64,
        residue: u64,
        scan_bound: u64,
    },
}

impl SigmaContext {
    pub fn new(setting: QuadSetting, pic: Rc<PicGroup>, a: usize) -> Result<Self> {
        if pic.order.d != setting.d {
            return Err(Error::InvalidInput(
                "class group does not belong to the given setting".into(),
            ));
        }
        let mut c = pic.order.cond;
        if c == 1 {
            return Err(Error::InvalidInput("conductor exponent must be >= 1".into()));
        }
        while c % setting.p == 0 {
            c /= setting.p;
        }
        if c != 1 {
            return Err(Error::InvalidInput(format!(
                "conductor {} is not a power of p = {}",
                pic.order.cond, setting.p
            )));
        }
        if a >= pic.h() {
            return Err(Error::InvalidInput(format!("no class with index {a}")));
        }
        Ok(SigmaContext {
            setting,
            pic,
            a,
            aux: RefCell::new(AuxClasses::default()),
        })
    }

    /// Same context with the class replaced by `a`.
    pub fn with_class(&self, a: usize) -> Result<Self> {
        SigmaContext::new(self.setting, Rc::clone(&self.pic), a)
    }

    /// The genus character attached to the factorization `D = D1 * D2`,
    /// evaluated at the class of `a` in the maximal order.  Computed as the
    /// Kronecker symbol `(D1 | nu)` at a represented norm `nu` coprime to
    /// `Dp`; any such norm gives the same value.
    fn chi(&self, d1: i64) -> Result<i32> {
        let modulus = self.setting.d * self.setting.p as i64;
        let nu = self.pic.representative_norm_coprime(self.a, modulus)?;
        Ok(kronecker(d1, nu as i64))
    }

    /// The divisor character `epsilon_a(n, d)`: zero when `d` and `n/d` share
    /// a prime dividing `D`, and otherwise a product of two Kronecker symbols
    /// with the genus-character value of the class.
    pub fn epsilon_factor(&self, n: u64, d: u64) -> Result<i32> {
        if d == 0 || n % d != 0 {
            return Err(Error::InvalidInput(format!("{d} does not divide {n}")));
        }
        let dd = self.setting.d;
        let e = n / d;
        if gcd_i64(gcd_i64(d as i64, e as i64), dd) != 1 {
            return Ok(0);
        }
        let (d1, d2) = split_discriminant(dd, gcd_i64(d as i64, dd).unsigned_abs());
        let chi = if d2 == 1 { 1 } else { self.chi(d1)? };
        let arg = -((self.setting.n_level * e) as i64);
        Ok(kronecker(d1, d as i64) * kronecker(d2, arg) * chi)
    }

    /// `sigma'_a(n) = sum over d | n of epsilon_a(n, d) * log(n / d^2)`,
    /// for `n` coprime to `p`.
    pub fn sigma_prime(&self, n: u64) -> Result<FormalLogSum> {
        if n == 0 || n % self.setting.p == 0 {
            return Err(Error::InvalidInput(format!(
                "sigma' needs n >= 1 coprime to p, got {n}"
            )));
        }
        let mut out = FormalLogSum::zero();
        for d in factor(n)?.divisors() {
            let e = self.epsilon_factor(n, d)?;
            if e == 0 {
                continue;
            }
            let mut term = FormalLogSum::log_rational(n, d * d)?;
            term.scale(Rational64::from_integer(e as i64));
            out.add_assign(&term);
        }
        Ok(out)
    }

    /// Index of a class containing an integral ideal of norm `N`.
    fn norm_n_class(&self) -> Result<usize> {
        if let Some(b) = self.aux.borrow().n_class {
            return Ok(b);
        }
        let n = self.setting.n_level as i64;
        for b in 0..self.pic.h() {
            if self.pic.r_count(b, n) > 0 {
                self.aux.borrow_mut().n_class = Some(b);
                return Ok(b);
            }
        }
        Err(Error::SearchExhausted(format!("no ideal of norm {n}")))
    }

    /// Index of a class containing an integral ideal of norm `== -ell`
    /// modulo `|D|p`.  Only the genus of the result matters downstream, so
    /// the smallest (norm, class index) hit is a canonical choice.
    fn c_class(&self, ell: u64) -> Result<usize> {
        if let Some(&b) = self.aux.borrow().c_class.get(&ell) {
            return Ok(b);
        }
        let m = self.setting.d.unsigned_abs() * self.setting.p;
        let mut nu = m - ell % m;
        if nu == m {
            nu = 2 * m;
        }
        let bound = SCAN_MULTIPLIER * m;
        self.pic.ensure_r_tables(bound as usize);
        while nu <= bound {
            for b in 0..self.pic.h() {
                if self.pic.r_count(b, nu as i64) > 0 {
                    self.aux.borrow_mut().c_class.insert(ell, b);
                    return Ok(b);
                }
            }
            nu += m;
        }
        Err(Error::SearchExhausted(format!(
            "no ideal of norm = -{ell} mod {m} up to {bound}"
        )))
    }

    /// The closed-form weight attached to a nonsplit prime `ell || n` once:
    /// `w * delta(n) * R_{a n c}(n / ell)` where `w` counts `ell` with
    /// multiplicity `ord_ell(ell * n)` in the inert case and `ord_ell(n)` in
    /// the ramified case, and `R` is the genus-level representation count.
    fn closed_weight(&self, n: u64, ell: u64, exp: u32) -> Result<Option<i64>> {
        let eps = self.setting.epsilon(ell);
        if eps == 1 {
            return Ok(None);
        }
        let w = if eps == -1 { exp as i64 + 1 } else { exp as i64 };
        let nc = self.norm_n_class()?;
        let cc = self.c_class(ell)?;
        let b = self.pic.mul(self.pic.mul(self.a, nc), cc);
        let r = self.pic.genus_count(b, (n / ell) as i64) as i64;
        let delta = self.pic.delta_of(n as i64) as i64;
        Ok(Some(w * delta * r))
    }

    /// Genus-theory closed form for `sigma'_a(n)`, valid under the hypothesis
    /// that the class of `a` contains an integral ideal of norm
    /// `== -nN mod |D|p`.  The hypothesis is verified by a bounded scan; when
    /// the scan comes up empty a tagged report is returned instead of a value.
    pub fn sigma_prime_closed(&self, n: u64) -> Result<SigmaClosed> {
        if n == 0 || n % self.setting.p == 0 {
            return Err(Error::InvalidInput(format!(
                "sigma' needs n >= 1 coprime to p, got {n}"
            )));
        }
        let m = self.setting.d.unsigned_abs() * self.setting.p;
        let residue = (m - (n * self.setting.n_level) % m) % m;
        let bound = SCAN_MULTIPLIER * m;
        self.pic.ensure_r_tables(bound as usize);
        let mut nu = if residue == 0 { m } else { residue };
        let mut found = false;
        while nu <= bound {
            if self.pic.r_count(self.a, nu as i64) > 0 {
                found = true;
                break;
            }
            nu += m;
        }
        if !found {
            return Ok(SigmaClosed::HypothesisFails {
                class: self.a,
                n,
                residue,
                scan_bound: bound,
            });
        }
        let mut out = FormalLogSum::zero();
        for (ell, exp) in factor(n)?.factors {
            if let Some(c) = self.closed_weight(n, ell, exp)? {
                out.add_prime(ell, Rational64::from_integer(c));
            }
        }
        Ok(SigmaClosed::Value(out))
    }

    /// Fourier coefficient `a_m(G_sigma)` for `p | m`:
    /// `- sum over n >= 1, gcd(n, p) = 1, nN < m|D|` of
    /// `r_{a ds}(m|D| - nN) * sigma'_a(n)`, with `ds` the class of the
    /// intersected different ideal.
    pub fn g_coeff(&self, m: u64) -> Result<FormalLogSum> {
        if m == 0 || m % self.setting.p != 0 {
            return Err(Error::InvalidInput(format!(
                "coefficient only defined for p | m, got m = {m}"
            )));
        }
        let md = m * self.setting.d.unsigned_abs();
        let ds = self.pic.ds_class()?;
        let ads = self.pic.mul(self.a, ds);
        // A single-class table: the all-classes cache does not scale with m.
        let ra = self.pic.r_table(ads, md as usize);
        let mut out = FormalLogSum::zero();
        for n in 1..md.div_ceil(self.setting.n_level) {
            if n % self.setting.p == 0 || n * self.setting.n_level >= md {
                continue;
            }
            let r = ra[(md - n * self.setting.n_level) as usize];
            if r == 0 {
                continue;
            }
            let mut term = self.sigma_prime(n)?;
            term.scale(Rational64::from_integer(r as i64));
            out.sub_assign(&term);
        }
        Ok(out)
    }

    /// Closed form for the kappa-twisted coefficient `a_m(G_{sigma kappa})`:
    /// the same sum as [`Self::g_coeff`] but with the plain count `r_a` and
    /// the genus-theory weights in place of `sigma'`.  No per-`n` hypothesis
    /// scan is needed: whenever `r_a(m|D| - nN) > 0` that ideal itself
    /// realizes the required norm residue, because `p | m`.
    pub fn g_coeff_twisted_closed(&self, m: u64) -> Result<FormalLogSum> {
        if m == 0 || m % self.setting.p != 0 {
            return Err(Error::InvalidInput(format!(
                "coefficient only defined for p | m, got m = {m}"
            )));
        }
        let md = m * self.setting.d.unsigned_abs();
        // Single-class and per-genus tables; the all-classes cache does not
        // scale with m.
        let ra = self.pic.r_table(self.a, md as usize);
        let gbound = (md / (2 * self.setting.n_level)) as usize;
        let mut gtabs: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        let nc = self.norm_n_class()?;
        let mut out = FormalLogSum::zero();
        for n in 1..=md / self.setting.n_level {
            if n % self.setting.p == 0 || n * self.setting.n_level >= md {
                continue;
            }
            let r = ra[(md - n * self.setting.n_level) as usize];
            if r == 0 {
                continue;
            }
            for (ell, exp) in factor(n)?.factors {
                let eps = self.setting.epsilon(ell);
                if eps == 1 {
                    continue;
                }
                let w = if eps == -1 { exp as i64 + 1 } else { exp as i64 };
                let b = self.pic.mul(self.pic.mul(self.a, nc), self.c_class(ell)?);
                let key = (0..self.pic.h())
                    .find(|&c| self.pic.same_genus(c, b))
                    .expect("genus key");
                let gtab = gtabs
                    .entry(key)
                    .or_insert_with(|| self.pic.genus_r_table(key, gbound));
                let rg = gtab[(n / ell) as usize] as i64;
                if rg == 0 {
                    continue;
                }
                let c = w * self.pic.delta_of(n as i64) as i64 * rg;
                out.add_prime(ell, Rational64::from_integer(-(r as i64) * c));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orders::PicFamily;

    fn context(a: usize) -> SigmaContext {
        let setting = QuadSetting::new(-7, 11, 2).unwrap();
        let fam = PicFamily::new(-7, 11, None);
        SigmaContext::new(setting, fam.group_s(1), a).unwrap()
    }

    #[test]
    fn epsilon_trivial_cases() {
        let ctx = context(0);
        assert_eq!(ctx.epsilon_factor(1, 1).unwrap(), 1);
        // d = 7, n/d = 7 share the ramified prime: defining clause gives 0.
        assert_eq!(ctx.epsilon_factor(49, 7).unwrap(), 0);
        assert!(ctx.epsilon_factor(6, 4).is_err());
    }

    #[test]
    fn sigma_prime_at_one_is_zero() {
        // By definition sigma'(1) is log(1) = 0 for every class.  In this
        // setting the closed form's hypothesis fails at n = 1 for every
        // class: -2 is not a norm residue mod 7 ((-2|7) = -1), so no ideal
        // norm is = -2n mod 77 when (n|7) = 1.
        for a in 0..10 {
            let ctx = context(a);
            assert!(ctx.sigma_prime(1).unwrap().is_zero());
            match ctx.sigma_prime_closed(1).unwrap() {
                SigmaClosed::HypothesisFails { residue, .. } => assert_eq!(residue, 75),
                SigmaClosed::Value(v) => assert!(v.is_zero(), "empty prime sum, class {a}"),
            }
        }
    }

    #[test]
    fn sigma_prime_rejects_multiples_of_p() {
        let ctx = context(0);
        assert!(ctx.sigma_prime(11).is_err());
        assert!(ctx.sigma_prime(22).is_err());
    }

    #[test]
    fn definition_matches_closed_form_small_range() {
        // The full n <= 200 sweep over all classes runs in the acceptance
        // suite; this covers a representative slice per class.
        let mut agreed = 0u32;
        let mut skipped = 0u32;
        for a in 0..10 {
            let ctx = context(a);
            for n in 1..=60u64 {
                if n % 11 == 0 {
                    continue;
                }
                match ctx.sigma_prime_closed(n).unwrap() {
                    SigmaClosed::Value(v) => {
                        let direct = ctx.sigma_prime(n).unwrap();
                        assert_eq!(direct, v, "class {a}, n = {n}");
                        agreed += 1;
                    }
                    // The hypothesis picks out one genus per residue class of
                    // n; the complementary classes are skipped, not wrong.
                    SigmaClosed::HypothesisFails { .. } => skipped += 1,
                }
            }
        }
        // The hypothesis holds iff -2n is a norm residue mod 7 (n = 0, 3, 5,
        // 6 mod 7) and then only in one genus, so roughly (4/7)*(1/2) of the
        // 550 pairs qualify.
        assert_eq!(agreed, 155, "comparison coverage changed");
        assert_eq!(agreed + skipped, 550);
    }

    #[test]
    fn sigma_prime_class_symmetries() {
        // sigma'_a is unchanged under a -> a^{-1} and under the ds twist.
        let ctx = context(3);
        let inv = ctx.with_class(ctx.pic.inv(3)).unwrap();
        let tw = ctx
            .with_class(ctx.pic.mul(3, ctx.pic.ds_class().unwrap()))
            .unwrap();
        for n in 1..=40u64 {
            if n % 11 == 0 {
                continue;
            }
            let v = ctx.sigma_prime(n).unwrap();
            assert_eq!(v, inv.sigma_prime(n).unwrap(), "inverse, n = {n}");
            assert_eq!(v, tw.sigma_prime(n).unwrap(), "ds twist, n = {n}");
        }
    }

    #[test]
    fn sigma_prime_coefficients_supported_on_divisors() {
        let ctx = context(1);
        for n in [6u64, 15, 21, 35, 90] {
            let v = ctx.sigma_prime(n).unwrap();
            for l in v.support() {
                assert_eq!(n % l, 0, "log {l} appears but {l} does not divide {n}");
                assert!(v.coeff(l).is_integer(), "integer coefficients only");
            }
        }
    }

    #[test]
    fn g_coeff_small_and_twist_identity() {
        let fam = PicFamily::new(-7, 11, None);
        let pic = fam.group_s(1);
        let ds = pic.ds_class().unwrap();
        for a in [0usize, 1, 5] {
            let ctx = context(a);
            let twisted = context(pic.mul(a, ds));
            for m in [11u64, 22, 33, 44] {
                let lhs = twisted.g_coeff(m).unwrap();
                let rhs = ctx.g_coeff_twisted_closed(m).unwrap();
                assert_eq!(lhs, rhs, "class {a}, m = {m}");
            }
        }
    }

    #[test]
    fn g_coeff_rejects_m_coprime_to_p() {
        let ctx = context(0);
        assert!(ctx.g_coeff(10).is_err());
        assert!(ctx.g_coeff_twisted_closed(7).is_err());
    }
}
