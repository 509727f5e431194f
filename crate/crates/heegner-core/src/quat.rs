//! The definite quaternion algebra side: Eichler-order lattices, D-set
//! enumeration, and the weighted counts `Delta_s^a(m)` computed three
//! independent ways.
//!
//! For a nonsplit prime `ell != p` the algebra is `B = K + K·j` with
//! `j^2 = -j_norm` for an auxiliary split prime `q`.  Elements `b = alpha +
//! beta·j` in a twisted Eichler lattice are enumerated exactly through the
//! binary norm forms of the two K-ideals involved; the congruence conditions
//! gluing the two halves are checked on scaled integral variables
//! `alpha' = p^s sqrt(D) alpha`, so all modular arithmetic stays in integers.
//!
//! The three routes to the same number — direct lattice enumeration
//! ([`EichlerContext::delta_total`]), the ideal-pair recount
//! ([`EichlerContext::ideal_pair_count`]), and the genus-theory closed form
//! ([`EichlerContext::delta_closed`]) — share nothing beyond the class group,
//! which is what makes their agreement a real check.  The module ends with
//! the grand identity tying these counts to the L-function coefficients.

use std::collections::BTreeMap;
use std::rc::Rc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Rational64};
use num_traits::{Signed, ToPrimitive, Zero};

use crate::arith::{
    factor, gcd_i64, hensel_sqrt, is_prime, kronecker, mod_inverse, ord_at, primes_up_to,
    FormalLogSum,
};
use crate::forms::BinaryForm;
use crate::klattice::{rat, KElem, Lattice};
use crate::lfun::SigmaContext;
use crate::orders::{PicGroup, QuadSetting};
use crate::{Error, Result};

/// Prime search cutoff for [`choose_q`].
const Q_SEARCH_BOUND: u64 = 1_000_000;
/// Residue-class norm scans give up past this many steps of the modulus.
const SCAN_STEPS: u64 = 200;
/// Enumeration refuses form-value budgets beyond this size.
const ENUM_BUDGET: i64 = 50_000_000;

/// The rational definite quaternion algebra `(D, -j_norm)`: `i^2 = D`,
/// `j^2 = -j_norm`, `ij = -ji`, ramified exactly at `ell` and infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuatAlg {
    /// The nonsplit prime (inert or ramified in `K`), distinct from `p`.
    pub ell: u64,
    /// `epsilon(ell)`: -1 inert, 0 ramified.
    pub eps: i32,
    /// Auxiliary split prime.
    pub q: u64,
    /// `-j^2`: `ell*q` in the inert case, `q` in the ramified case.
    pub j_norm: u64,
}

/// Pick the smallest auxiliary prime `q` making `(D, -j_norm)` the right
/// algebra: in the inert case `q = -ell mod |D|p`; in the ramified case
/// `ell*q = -ell mod |D|p` together with `(-q|ell) = -1` and `(-q|r) = 1`
/// for the other primes `r | D`.
pub fn choose_q(setting: &QuadSetting, ell: u64) -> Result<QuatAlg> {
    let eps = setting.epsilon(ell);
    if eps == 1 || ell == setting.p {
        return Err(Error::InvalidInput(format!(
            "ell = {ell} must be a nonsplit prime different from p"
        )));
    }
    let dabs = setting.d.unsigned_abs();
    let big_m = dabs * setting.p;
    let accept = |q: u64| -> bool {
        if !is_prime(q) || q == ell || q == 2 {
            return false;
        }
        if eps == -1 {
            let mj = -((ell * q) as i64);
            factor(dabs)
                .expect("tiny")
                .factors
                .iter()
                .all(|&(r, _)| kronecker(mj, r as i64) == 1)
        } else {
            if kronecker(-(q as i64), ell as i64) != -1 {
                return false;
            }
            factor(dabs / ell)
                .expect("tiny")
                .factors
                .iter()
                .all(|&(r, _)| kronecker(-(q as i64), r as i64) == 1)
        }
    };
    // Congruence class of the search: q = -ell mod |D|p, respectively
    // q = -1 mod |D|p/ell (equivalent to ell*q = -ell since ell || D).
    let (modulus, start) = if eps == -1 {
        (big_m, (big_m - ell % big_m) % big_m)
    } else {
        let m2 = big_m / ell;
        (m2, m2 - 1)
    };
    let mut q = if start == 0 { modulus } else { start };
    while q <= Q_SEARCH_BOUND {
        if accept(q) {
            let alg = QuatAlg {
                ell,
                eps,
                q,
                j_norm: if eps == -1 { ell * q } else { q },
            };
            // Such a q is split in K; asserted, not assumed.
            assert_eq!(
                kronecker(setting.d, q as i64),
                1,
                "chosen q = {q} is not split in K"
            );
            return Ok(alg);
        }
        q += modulus;
    }
    Err(Error::SearchExhausted(format!(
        "no auxiliary prime for ell = {ell} below {Q_SEARCH_BOUND}"
    )))
}

/// An element `alpha + beta·j` of the quaternion algebra, recorded through
/// its two K-components.
#[derive(Debug, Clone, PartialEq)]
pub struct QuatElem {
    pub alpha: KElem,
    pub beta: KElem,
}

impl QuatElem {
    /// Reduced norm `N(alpha) + j_norm·N(beta)`.
    pub fn rnorm(&self, j_norm: u64) -> BigRational {
        self.alpha.norm() + self.beta.norm() * rat(j_norm as i64, 1)
    }
}

/// A square-class transversal entry: a class `g` and a chosen integral
/// ideal in it.
#[derive(Debug, Clone)]
struct GRep {
    class: usize,
    ideal: Lattice,
}

/// Per-lattice enumeration data: a reduced Z-basis with its (integral,
/// positive definite) norm form, the lattice norm as a reduced fraction, and
/// residue generators for the congruence conditions.
struct Frame {
    basis: [KElem; 2],
    form: BinaryForm,
    norm_num: i64,
    norm_den: i64,
    /// For each congruence prime `r | D`: `(r, u(b1) mod r, u(b2) mod r)`.
    u_res: Vec<(i64, i64, i64)>,
    /// `(p^{2s}, Tr(b1), Tr(b2))` residues.
    tr_res: (i64, i64, i64),
}

/// One enumerated lattice point with its congruence residues.
#[derive(Debug, Clone, Copy)]
struct Pt {
    v: i64,
    x: i64,
    y: i64,
    u: [i64; 3],
    tr: i64,
}

fn isqrt(n: i64) -> i64 {
    if n <= 0 {
        return 0;
    }
    let mut x = (n as f64).sqrt() as i64;
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    while x * x > n {
        x -= 1;
    }
    x
}

/// Residue of a rational with denominator invertible mod `m`.
fn res_of(qv: &BigRational, m: i64) -> Result<i64> {
    let mb = BigInt::from(m);
    let num = qv.numer().mod_floor(&mb).to_i64().expect("small residue");
    let den = qv.denom().mod_floor(&mb).to_i64().expect("small residue");
    if gcd_i64(den, m) != 1 {
        return Err(Error::InvalidInput(format!(
            "denominator of {qv} not invertible mod {m}"
        )));
    }
    let inv = mod_inverse(den as i128, m as i128) as i64;
    Ok((num as i128 * inv as i128).rem_euclid(m as i128) as i64)
}

/// Lagrange-reduced basis of a positive definite rank-2 lattice: minimises
/// the norms so the attached binary form has small coefficients.
fn reduce_basis(l: &Lattice) -> [KElem; 2] {
    let mut b1 = l.basis[0].clone();
    let mut b2 = l.basis[1].clone();
    loop {
        if b1.norm() > b2.norm() {
            std::mem::swap(&mut b1, &mut b2);
        }
        // Nearest integer to Tr(conj(b1)·b2) / (2 N(b1)).
        let mu = b1.conj().mul(&b2).trace() / (b1.norm() * rat(2, 1));
        let k = (&mu + rat(1, 2)).floor();
        if k.is_zero() {
            break;
        }
        b2 = b2.sub(&b1.scale(&k));
    }
    [b1, b2]
}

/// All nonzero lattice points with form value `<= vmax`; `half` keeps one
/// point per `{x, -x}` pair.
fn lattice_points(fr: &Frame, vmax: i64, half: bool) -> Result<Vec<Pt>> {
    if vmax > ENUM_BUDGET {
        return Err(Error::InvalidInput(format!(
            "enumeration budget exceeded: form values up to {vmax}"
        )));
    }
    let BinaryForm { a, b, c } = fr.form;
    let disc_abs = -fr.form.disc();
    assert!(a > 0 && disc_abs > 0, "enumeration needs a definite form");
    let mut out = Vec::new();
    if vmax < 1 {
        return Ok(out);
    }
    let ymax = isqrt(4 * a * vmax / disc_abs);
    let ymin = if half { 0 } else { -ymax };
    for y in ymin..=ymax {
        let d2 = 4 * a * vmax - disc_abs * y * y;
        if d2 < 0 {
            continue;
        }
        let sq = isqrt(d2);
        let lo = (-b * y - sq).div_euclid(2 * a);
        let hi = (-b * y + sq).div_euclid(2 * a) + 1;
        for x in lo..=hi {
            if half && y == 0 && x <= 0 {
                continue;
            }
            if x == 0 && y == 0 {
                continue;
            }
            let v = a * x * x + b * x * y + c * y * y;
            if v < 1 || v > vmax {
                continue;
            }
            let mut u = [0i64; 3];
            for (k, &(r, u1, u2)) in fr.u_res.iter().enumerate() {
                u[k] = (x * u1 + y * u2).rem_euclid(r);
            }
            let (pm, t1, t2) = fr.tr_res;
            let tr = (x as i128 * t1 as i128 + y as i128 * t2 as i128).rem_euclid(pm as i128)
                as i64;
            out.push(Pt { v, x, y, u, tr });
        }
    }
    Ok(out)
}

/// Smallest class index containing an integral ideal of norm `n`.
fn class_with_norm(pic: &PicGroup, n: u64) -> Result<usize> {
    for b in 0..pic.h() {
        if pic.r_count(b, n as i64) > 0 {
            return Ok(b);
        }
    }
    Err(Error::SearchExhausted(format!("no ideal of norm {n}")))
}

/// Smallest represented norm `== target mod modulus` over all classes;
/// returns the class reaching it.  Only the genus of the answer matters to
/// the callers, so the smallest hit is a canonical choice.
fn class_with_norm_residue(pic: &PicGroup, target: u64, modulus: u64) -> Result<usize> {
    let bound = SCAN_STEPS * modulus;
    pic.ensure_r_tables(bound as usize);
    let mut nu = if target == 0 { modulus } else { target };
    while nu <= bound {
        for b in 0..pic.h() {
            if pic.r_count(b, nu as i64) > 0 {
                return Ok(b);
            }
        }
        nu += modulus;
    }
    Err(Error::SearchExhausted(format!(
        "no ideal of norm = {target} mod {modulus} up to {bound}"
    )))
}

/// Everything fixed by `(setting, s, class of a, ell)`: the algebra, the
/// auxiliary ideals, the square roots `X_r`, and the twist alphabet.
pub struct EichlerContext {
    pub setting: QuadSetting,
    pub s: u32,
    pub pic: Rc<PicGroup>,
    pub alg: QuatAlg,
    pub a_class: usize,
    pub a_ideal: Lattice,
    pub a_norm: u64,
    pub n_class: usize,
    pub n_ideal: Lattice,
    pub q_class: usize,
    pub q_ideal: Lattice,
    /// The prime above `ell` pulled into the order (ramified case only).
    pub l_class: Option<usize>,
    pub l_ideal: Option<Lattice>,
    /// `X_r` with `X_r^2 = -j_norm`, mod `r` for `r | D` and mod `p^{2s}`
    /// under the key `p`.
    pub x_roots: BTreeMap<u64, u64>,
    /// Generators of the twist set: odd primes of `Dp` (minus `ell` when
    /// ramified), with `p` last.
    pub w0: Vec<u64>,
}

impl EichlerContext {
    pub fn new(
        setting: QuadSetting,
        pic: Rc<PicGroup>,
        a_class: usize,
        ell: u64,
    ) -> Result<Self> {
        let alg = choose_q(&setting, ell)?;
        let mut cond = pic.order.cond;
        let mut s = 0u32;
        while cond % setting.p == 0 {
            cond /= setting.p;
            s += 1;
        }
        if cond != 1 || s == 0 {
            return Err(Error::InvalidInput(
                "quaternionic side needs conductor p^s with s >= 1".into(),
            ));
        }
        let coprime_to = setting.d * (setting.p * ell * alg.q * setting.n_level) as i64;
        let a_norm = pic.representative_norm_coprime(a_class, coprime_to)?;
        let a_ideal = pic.ideal_in_class(a_class, a_norm)?;
        let n_class = class_with_norm(&pic, setting.n_level)?;
        let n_ideal = pic.ideal_in_class(n_class, setting.n_level)?;
        let q_class = class_with_norm(&pic, alg.q)?;
        let q_ideal = pic.ideal_in_class(q_class, alg.q)?;
        let (l_class, l_ideal) = if alg.eps == 0 {
            let lat = pic.ramified_prime_lattice(ell);
            (Some(pic.class_of_lattice(&lat)?), Some(lat))
        } else {
            (None, None)
        };
        let mut x_roots = BTreeMap::new();
        let mut w0 = Vec::new();
        for (r, _) in factor(setting.d.unsigned_abs())?.factors {
            if alg.eps == 0 && r == ell {
                continue;
            }
            let x = hensel_sqrt(-(alg.j_norm as i64), r, 1).ok_or_else(|| {
                Error::InvalidInput(format!("-j_norm is not a square mod {r}"))
            })?;
            x_roots.insert(r, x);
            w0.push(r);
        }
        let xp = hensel_sqrt(-(alg.j_norm as i64), setting.p, 2 * s).ok_or_else(|| {
            Error::InvalidInput("-j_norm is not a square mod p^2s".into())
        })?;
        x_roots.insert(setting.p, xp);
        w0.push(setting.p);
        Ok(EichlerContext {
            setting,
            s,
            pic,
            alg,
            a_class,
            a_ideal,
            a_norm,
            n_class,
            n_ideal,
            q_class,
            q_ideal,
            l_class,
            l_ideal,
            x_roots,
            w0,
        })
    }

    /// Same context with the ideal representing the class replaced by one of
    /// norm `nu` (for choice-independence checks).
    pub fn with_representative(&self, nu: u64) -> Result<Self> {
        let mut other = EichlerContext::new(self.setting, Rc::clone(&self.pic), self.a_class, self.alg.ell)?;
        other.a_ideal = self.pic.ideal_in_class(self.a_class, nu)?;
        other.a_norm = nu;
        Ok(other)
    }

    fn p2s(&self) -> i64 {
        let c = self.pic.order.cond as i64;
        c * c
    }

    fn dabs(&self) -> i64 {
        -self.setting.d
    }

    /// Class of `(sqrt(D))_w`: the product of the pulled-in ramified primes
    /// for `r in w`, with the distinguished class for `p in w`.
    pub fn twist_class(&self, w: &[u64]) -> Result<usize> {
        let mut c = self.pic.id;
        for &r in w {
            let t = if r == self.setting.p {
                self.pic.ds_class()?
            } else {
                self.pic.ramified_prime_class(r)?
            };
            c = self.pic.mul(c, t);
        }
        Ok(c)
    }

    /// One class per square in `Pic^2`, first hit in the stated iteration
    /// order, with a representative ideal of smallest norm coprime to
    /// `D·p·ell·q`.
    fn square_transversal(&self, reversed: bool) -> Result<Vec<GRep>> {
        let h = self.pic.h();
        let mut seen = vec![false; h];
        let mut out = Vec::new();
        let order: Vec<usize> = if reversed {
            (0..h).rev().collect()
        } else {
            (0..h).collect()
        };
        let coprime_to = self.setting.d * (self.setting.p * self.alg.ell * self.alg.q) as i64;
        for g in order {
            let sq = self.pic.mul(g, g);
            if seen[sq] {
                continue;
            }
            seen[sq] = true;
            let norm = self.pic.representative_norm_coprime(g, coprime_to)?;
            let ideal = self.pic.ideal_in_class(g, norm)?;
            out.push(GRep { class: g, ideal });
        }
        assert_eq!(
            out.len(),
            self.pic.square_classes().len(),
            "transversal misses squares"
        );
        Ok(out)
    }

    fn grep_for_class(&self, g_class: usize) -> Result<GRep> {
        let coprime_to = self.setting.d * (self.setting.p * self.alg.ell * self.alg.q) as i64;
        let norm = self.pic.representative_norm_coprime(g_class, coprime_to)?;
        Ok(GRep { class: g_class, ideal: self.pic.ideal_in_class(g_class, norm)? })
    }

    /// The scaled alpha-side lattice `A'`: `a` itself, with the prime above
    /// `ell` folded in when `ell` ramifies.
    fn alpha_lattice(&self) -> Lattice {
        match &self.l_ideal {
            Some(l) => l.mul(&self.a_ideal),
            None => self.a_ideal.clone(),
        }
    }

    /// The scaled beta-side lattice `B' = n q^{-1} g conj(g)^{-1} conj(a)`
    /// (times the prime above `ell` when ramified).
    fn beta_lattice(&self, g: &GRep) -> Lattice {
        let ord = &self.pic.order;
        let mut b = self
            .n_ideal
            .mul(&ord.ideal_inverse(&self.q_ideal))
            .mul(&g.ideal)
            .mul(&ord.ideal_inverse(&g.ideal.conj()))
            .mul(&self.a_ideal.conj());
        if let Some(l) = &self.l_ideal {
            b = b.mul(l);
        }
        b
    }

    fn frame(&self, l: &Lattice) -> Result<Frame> {
        let n = self.pic.order.ideal_norm(l);
        assert!(n.is_positive());
        let basis = reduce_basis(l);
        let to_i64 = |x: &BigRational| -> Result<i64> {
            if !x.is_integer() {
                return Err(Error::NotProper(format!("non-integral form entry {x}")));
            }
            x.to_integer()
                .to_i64()
                .ok_or_else(|| Error::NotProper("form entry overflow".into()))
        };
        let form = BinaryForm {
            a: to_i64(&(basis[0].norm() / &n))?,
            b: to_i64(&(basis[0].conj().mul(&basis[1]).trace() / &n))?,
            c: to_i64(&(basis[1].norm() / &n))?,
        };
        assert_eq!(
            form.disc(),
            self.pic.order.disc(),
            "beta/alpha lattice is not proper"
        );
        if self.w0.len() > 4 {
            return Err(Error::InvalidInput("too many congruence primes".into()));
        }
        let mut u_res = Vec::new();
        for &r in &self.w0 {
            if r == self.setting.p {
                continue;
            }
            u_res.push((
                r as i64,
                res_of(&basis[0].u, r as i64)?,
                res_of(&basis[1].u, r as i64)?,
            ));
        }
        let pm = self.p2s();
        let tr_res = (
            pm,
            res_of(&basis[0].trace(), pm)?,
            res_of(&basis[1].trace(), pm)?,
        );
        let norm_num = to_i64(&(&n * n.denom()))?;
        let norm_den = n.denom().to_i64().expect("small denominator");
        Ok(Frame { basis, form, norm_num, norm_den, u_res, tr_res })
    }

    /// `ord_ell` of the minus-part norm `N(b^-) = j_norm·N(beta)` for a beta
    /// point of form value `v` in the given frame.
    fn ord_nb_minus(&self, fr: &Frame, v: i64) -> i64 {
        let l = self.alg.ell;
        let scale = self.p2s() * self.dabs(); // N(beta') = p^{2s}|D| N(beta)
        ord_at(self.alg.j_norm, l) as i64 + ord_at(fr.norm_num as u64, l) as i64
            + ord_at(v as u64, l) as i64
            - ord_at(fr.norm_den as u64, l) as i64
            - ord_at(scale as u64, l) as i64
    }

    /// Contribution of one `{b, -b}` pair to the cell sum: twice the per-point
    /// weight from the counting formula.
    fn pair_weight(&self, fr: &Frame, v: i64) -> i64 {
        let onb = self.ord_nb_minus(fr, v);
        if self.alg.eps == -1 {
            // Per point: (1 + ord_ell N(b^-))/2, an integer since the ord is
            // odd; asserted here rather than assumed.
            assert!(onb % 2 == 1, "ord_ell N(b^-) = {onb} should be odd");
            1 + onb
        } else {
            // Per point: ord_ell(D·N(b^-)) = 1 + ord_ell N(b^-).
            2 * (1 + onb)
        }
    }

    /// Core engine: for each square-transversal entry, twist subset and `m`,
    /// the sum over the D-set of the counting weights.  `shifted` moves the
    /// p-valuation filter by one (the sensitivity check); the true D-set is
    /// `shifted = false`.
    fn cell_table(
        &self,
        gs: &[GRep],
        masks: &[u32],
        ms: &[u64],
        shifted: bool,
    ) -> Result<Vec<Vec<Vec<i64>>>> {
        let p = self.setting.p as i64;
        let j = self.alg.j_norm as i64;
        let t_unit = self.a_norm as i64 * self.p2s() * self.dabs();
        let mmax = *ms.iter().max().unwrap_or(&0) as i64;
        let fa = self.frame(&self.alpha_lattice())?;
        assert_eq!(fa.norm_den, 1, "alpha lattice must be integral");
        let na = fa.norm_num;
        let va_max = mmax * t_unit / na;
        let apts = lattice_points(&fa, va_max, false)?;
        // Counting-sort bucket index over form values.
        let mut starts = vec![0u32; (va_max + 2) as usize];
        for pt in &apts {
            starts[pt.v as usize + 1] += 1;
        }
        for i in 1..starts.len() {
            starts[i] += starts[i - 1];
        }
        let mut slot = starts.clone();
        let mut order = vec![0u32; apts.len()];
        for (i, pt) in apts.iter().enumerate() {
            order[slot[pt.v as usize] as usize] = i as u32;
            slot[pt.v as usize] += 1;
        }
        let pm = self.p2s();
        let xp = self.x_roots[&self.setting.p] as i64;
        let mut out = vec![vec![vec![0i64; ms.len()]; masks.len()]; gs.len()];
        for (gi, g) in gs.iter().enumerate() {
            let fb = self.frame(&self.beta_lattice(g))?;
            let (pb, qb) = (fb.norm_num, fb.norm_den);
            assert!(pb > 0 && qb > 0);
            let vb_max = mmax * t_unit * qb / (j * pb);
            let bpts = lattice_points(&fb, vb_max, true)?;
            for (wi, &mask) in masks.iter().enumerate() {
                // Signed residue targets per beta point, fixed for this twist.
                let mut tu = vec![[0i64; 3]; bpts.len()];
                let mut ttr = vec![0i64; bpts.len()];
                for (k, bp) in bpts.iter().enumerate() {
                    for (ri, &(r, _, _)) in fb.u_res.iter().enumerate() {
                        let xr = self.x_roots[&(r as u64)] as i64;
                        let sgn: i64 = if mask & (1 << ri) != 0 { -1 } else { 1 };
                        tu[k][ri] = (sgn * xr * bp.u[ri]).rem_euclid(r);
                    }
                    let sgn_p: i64 =
                        if mask & (1 << (self.w0.len() - 1)) != 0 { -1 } else { 1 };
                    ttr[k] = (sgn_p as i128 * xp as i128 * bp.tr as i128).rem_euclid(pm as i128)
                        as i64;
                }
                for (mi, &m) in ms.iter().enumerate() {
                    let t = m as i64 * t_unit;
                    let mut total = 0i64;
                    for (k, bp) in bpts.iter().enumerate() {
                        let jn = j as i128 * pb as i128 * bp.v as i128;
                        let num = t as i128 * qb as i128 - jn;
                        if num <= 0 {
                            continue;
                        }
                        let den = na as i128 * qb as i128;
                        if num % den != 0 {
                            continue;
                        }
                        let va = (num / den) as i64;
                        let ok_val = if shifted {
                            va % p == 0 && (va / p) % p != 0 && bp.v % p == 0
                                && (bp.v / p) % p != 0
                        } else {
                            va % p != 0 && bp.v % p != 0
                        };
                        if !ok_val {
                            continue;
                        }
                        let lo = starts[va as usize] as usize;
                        let hi = starts[va as usize + 1] as usize;
                        let mut hits = 0i64;
                        for &oi in &order[lo..hi] {
                            let ap = &apts[oi as usize];
                            if ap.tr == ttr[k]
                                && fb
                                    .u_res
                                    .iter()
                                    .enumerate()
                                    .all(|(ri, _)| ap.u[ri] == tu[k][ri])
                            {
                                hits += 1;
                            }
                        }
                        if hits > 0 {
                            total += hits * self.pair_weight(&fb, bp.v);
                        }
                    }
                    out[gi][wi][mi] = total;
                }
            }
        }
        Ok(out)
    }

    /// All subsets of the twist alphabet, as explicit prime lists.
    pub fn twist_subsets(&self) -> Vec<Vec<u64>> {
        self.all_masks().into_iter().map(|m| self.subset(m)).collect()
    }

    fn all_masks(&self) -> Vec<u32> {
        (0..(1u32 << self.w0.len())).collect()
    }

    fn mask_of(&self, w: &[u64]) -> u32 {
        let mut mask = 0;
        for &r in w {
            let pos = self
                .w0
                .iter()
                .position(|&x| x == r)
                .expect("twist prime outside the alphabet");
            mask |= 1 << pos;
        }
        mask
    }

    fn subset(&self, mask: u32) -> Vec<u64> {
        self.w0
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &r)| r)
            .collect()
    }

    /// The weighted count over one twisted cell, as a multiple of `log ell`.
    pub fn delta_s(&self, w: &[u64], g_class: usize, m: u64) -> Result<FormalLogSum> {
        let g = self.grep_for_class(g_class)?;
        let table = self.cell_table(&[g], &[self.mask_of(w)], &[m], false)?;
        Ok(FormalLogSum::log_prime(
            self.alg.ell,
            Rational64::new(table[0][0][0], 2),
        ))
    }

    /// `Delta_s^a(m)` for each `m`, by direct enumeration: half the sum of
    /// the cell counts over all twists and the square transversal.  Also
    /// asserts the coverage count of the twisted classes and the integrality
    /// of the half-sum.
    pub fn delta_total_range(&self, ms: &[u64]) -> Result<Vec<FormalLogSum>> {
        let gs = self.square_transversal(false)?;
        let masks = self.all_masks();
        // Coverage: the classes (sqrt(D))_w·[g] hit each Picard class the
        // same number of times: twice in the inert case, once when ramified.
        let mut hits = vec![0u32; self.pic.h()];
        for &mask in &masks {
            let tw = self.twist_class(&self.subset(mask))?;
            for g in &gs {
                hits[self.pic.mul(tw, g.class)] += 1;
            }
        }
        let expected = if self.alg.eps == -1 { 2 } else { 1 };
        assert!(
            hits.iter().all(|&h| h == expected),
            "twist coverage broke: {hits:?}"
        );
        let table = self.cell_table(&gs, &masks, ms, false)?;
        let mut out = Vec::new();
        for mi in 0..ms.len() {
            let mut total = 0i64;
            for gi in 0..gs.len() {
                for wi in 0..masks.len() {
                    total += table[gi][wi][mi];
                }
            }
            assert!(total % 2 == 0, "half-sum fails to clear: {total}");
            out.push(FormalLogSum::log_prime(
                self.alg.ell,
                Rational64::from_integer(total / 2),
            ));
        }
        Ok(out)
    }

    pub fn delta_total(&self, m: u64) -> Result<FormalLogSum> {
        Ok(self.delta_total_range(&[m])?.pop().unwrap())
    }

    /// As [`Self::delta_total_range`] but with the square transversal chosen
    /// in reversed iteration order (choice-independence check).
    pub fn delta_total_shuffled(&self, m: u64) -> Result<FormalLogSum> {
        let gs = self.square_transversal(true)?;
        let masks = self.all_masks();
        let table = self.cell_table(&gs, &masks, &[m], false)?;
        let total: i64 = table.iter().flatten().map(|r| r[0]).sum();
        assert!(total % 2 == 0);
        Ok(FormalLogSum::log_prime(
            self.alg.ell,
            Rational64::from_integer(total / 2),
        ))
    }

    /// Total with the p-valuation filter moved by one; used only to confirm
    /// the filter is load-bearing.
    pub fn delta_total_filter_shifted(&self, m: u64) -> Result<Rational64> {
        let gs = self.square_transversal(false)?;
        let masks = self.all_masks();
        let table = self.cell_table(&gs, &masks, &[m], true)?;
        let total: i64 = table.iter().flatten().map(|r| r[0]).sum();
        Ok(Rational64::new(total, 2))
    }

    /// Explicit D-set of one cell, as unscaled quaternion elements; both
    /// signs are kept.
    pub fn enumerate_dset(&self, w: &[u64], g_class: usize, m: u64) -> Result<Vec<QuatElem>> {
        let g = self.grep_for_class(g_class)?;
        let p = self.setting.p as i64;
        let j = self.alg.j_norm as i64;
        let t = m as i64 * self.a_norm as i64 * self.p2s() * self.dabs();
        let fa = self.frame(&self.alpha_lattice())?;
        let fb = self.frame(&self.beta_lattice(&g))?;
        let na = fa.norm_num;
        let (pb, qb) = (fb.norm_num, fb.norm_den);
        let apts = lattice_points(&fa, t / na, false)?;
        let bpts = lattice_points(&fb, t * qb / (j * pb), false)?;
        let mask = self.mask_of(w);
        let pm = self.p2s();
        let xp = self.x_roots[&self.setting.p] as i64;
        // Unscaling: alpha = alpha' / (p^s sqrt(D)).
        let ps = self.pic.order.cond as i64;
        let unscale = KElem::from_parts(self.setting.d, 0, 1, 1, ps * self.setting.d);
        let mut out = Vec::new();
        for bp in &bpts {
            let num = t as i128 * qb as i128 - j as i128 * pb as i128 * bp.v as i128;
            if num <= 0 || num % (na as i128 * qb as i128) != 0 {
                continue;
            }
            let va = (num / (na as i128 * qb as i128)) as i64;
            if va % p == 0 || bp.v % p == 0 {
                continue;
            }
            let sgn_p: i64 = if mask & (1 << (self.w0.len() - 1)) != 0 { -1 } else { 1 };
            let ttr = (sgn_p as i128 * xp as i128 * bp.tr as i128).rem_euclid(pm as i128) as i64;
            let mut tu = [0i64; 3];
            for (ri, &(r, _, _)) in fb.u_res.iter().enumerate() {
                let xr = self.x_roots[&(r as u64)] as i64;
                let sgn: i64 = if mask & (1 << ri) != 0 { -1 } else { 1 };
                tu[ri] = (sgn * xr * bp.u[ri]).rem_euclid(r);
            }
            for ap in &apts {
                if ap.v != va || ap.tr != ttr {
                    continue;
                }
                if !fb.u_res.iter().enumerate().all(|(ri, _)| ap.u[ri] == tu[ri]) {
                    continue;
                }
                let alpha_s = fa.basis[0]
                    .scale(&rat(ap.x, 1))
                    .add(&fa.basis[1].scale(&rat(ap.y, 1)));
                let beta_s = fb.basis[0]
                    .scale(&rat(bp.x, 1))
                    .add(&fb.basis[1].scale(&rat(bp.y, 1)));
                out.push(QuatElem {
                    alpha: alpha_s.mul(&unscale),
                    beta: beta_s.mul(&unscale),
                });
            }
        }
        Ok(out)
    }

    /// The ideal-pair keys `(c^+, c^-)` of one cell together with the two
    /// norms, for the multiplicity cross-tabulations.
    pub fn dset_pair_keys(
        &self,
        w: &[u64],
        g_class: usize,
        m: u64,
    ) -> Result<Vec<(String, i64, i64)>> {
        let g = self.grep_for_class(g_class)?;
        let ord = &self.pic.order;
        // Rescale back to the integral variables alpha', beta'.
        let scale_back = KElem::from_parts(self.setting.d, 0, 1, self.pic.order.cond as i64, 1);
        let a_inv = ord.ideal_inverse(&self.a_ideal);
        let mut minus_base = self
            .q_ideal
            .mul(&ord.ideal_inverse(&self.n_ideal))
            .mul(&ord.ideal_inverse(&g.ideal))
            .mul(&g.ideal.conj())
            .mul(&ord.ideal_inverse(&self.a_ideal.conj()));
        let mut plus_base = a_inv;
        if let Some(l) = &self.l_ideal {
            let l_inv = ord.ideal_inverse(l);
            minus_base = minus_base.mul(&l_inv);
            plus_base = plus_base.mul(&l_inv);
        }
        let unit = ord.lattice();
        let mut out = Vec::new();
        for e in self.enumerate_dset(w, g_class, m)? {
            let cp = unit.scale_elem(&e.alpha.mul(&scale_back)).mul(&plus_base);
            let cm = unit.scale_elem(&e.beta.mul(&scale_back)).mul(&minus_base);
            let np = ord.ideal_norm(&cp);
            let nm = ord.ideal_norm(&cm);
            assert!(np.is_integer() && nm.is_integer(), "pair ideals not integral");
            assert!(
                self.pic.order.lattice().contains_lattice(&cp)
                    && self.pic.order.lattice().contains_lattice(&cm),
                "pair ideals not contained in the order"
            );
            let key = format!("{:?}|{:?}", cp.basis, cm.basis);
            out.push((
                key,
                np.to_integer().to_i64().expect("norm fits"),
                nm.to_integer().to_i64().expect("norm fits"),
            ));
        }
        Ok(out)
    }

    /// Second route to `Delta_s^a(m)`: the ideal-pair recount.  The inner
    /// class sum over the square transversal is accumulated into a single
    /// table per coset, then paired against the conjugate class's counts.
    pub fn ideal_pair_count_range(&self, ms: &[u64]) -> Result<Vec<FormalLogSum>> {
        let ell = self.alg.ell;
        let n_level = self.setting.n_level as i64;
        let mmax = *ms.iter().max().unwrap_or(&0) as i64;
        let arg_max = (mmax * self.p2s() * self.dabs()) as usize;
        let gs = self.square_transversal(false)?;
        // Classes: r_{conj(a)}(nu+) against sum over g of r_{a nbar q g-bar^2}.
        let abar = self.pic.inv(self.a_class);
        let mut minus_cls = self.pic.mul(self.a_class, self.pic.inv(self.n_class));
        minus_cls = self.pic.mul(minus_cls, self.q_class);
        if let Some(lc) = self.l_class {
            minus_cls = self.pic.mul(minus_cls, lc);
        }
        let minus_bound = if self.alg.eps == -1 {
            arg_max / (ell as usize * n_level as usize)
        } else {
            arg_max / (ell as usize * n_level as usize)
        };
        let mut acc = vec![0u64; minus_bound + 1];
        for g in &gs {
            let gbar2 = self.pic.pow(self.pic.inv(g.class), 2);
            let cls = self.pic.mul(minus_cls, gbar2);
            for (x, y) in acc.iter_mut().zip(self.pic.r_table(cls, minus_bound)) {
                *x += y as u64;
            }
        }
        let ra = self.pic.r_table(abar, arg_max);
        let p = self.setting.p as i64;
        let mut out = Vec::new();
        for &m in ms {
            let arg = m as i64 * self.p2s() * self.dabs();
            let mut total = 0i64;
            if self.alg.eps == -1 {
                let mut nu = 1i64;
                while ell as i64 * n_level * nu < arg {
                    if nu % p != 0 {
                        let plus = arg - ell as i64 * n_level * nu;
                        let r_plus = ra[plus as usize] as i64;
                        if r_plus > 0 {
                            let r_minus = acc[nu as usize] as i64;
                            if r_minus > 0 {
                                let w = 2 + ord_at(nu as u64, ell) as i64;
                                let d = self.pic.delta_of(nu) as i64;
                                total += r_plus * r_minus * w * d;
                            }
                        }
                    }
                    nu += 1;
                }
            } else {
                let mut k = 1i64;
                while ell as i64 * k * n_level < arg {
                    let n = ell as i64 * k;
                    if n % p != 0 {
                        let plus = arg - n * n_level;
                        let r_plus = ra[plus as usize] as i64;
                        if r_plus > 0 {
                            let r_minus = acc[k as usize] as i64;
                            if r_minus > 0 {
                                let w = ord_at(n as u64, ell) as i64;
                                let d = self.pic.delta_of(n) as i64;
                                total += r_plus * r_minus * w * d;
                            }
                        }
                    }
                    k += 1;
                }
            }
            out.push(FormalLogSum::log_prime(ell, Rational64::from_integer(total)));
        }
        Ok(out)
    }

    pub fn ideal_pair_count(&self, m: u64) -> Result<FormalLogSum> {
        Ok(self.ideal_pair_count_range(&[m])?.pop().unwrap())
    }

    /// Third route: the genus-theory closed form, using the classes of the
    /// context's own auxiliary ideals.
    pub fn delta_closed(&self, m: u64) -> Result<FormalLogSum> {
        Ok(self.delta_closed_range(&[m])?.pop().unwrap())
    }

    /// Batched closed form: the value tables are built once at the largest
    /// `m` and shared across the whole range.
    pub fn delta_closed_range(&self, ms: &[u64]) -> Result<Vec<FormalLogSum>> {
        let mut rcls = self.pic.mul(self.a_class, self.q_class);
        rcls = self.pic.mul(rcls, self.n_class);
        if let Some(lc) = self.l_class {
            rcls = self.pic.mul(rcls, lc);
        }
        let m_max = ms.iter().copied().max().unwrap_or(1);
        let ell = self.alg.ell as i64;
        let n_level = self.setting.n_level as i64;
        let arg_max = m_max as i64 * self.p2s() * (-self.setting.d);
        let ra = self.pic.r_table(self.a_class, arg_max as usize);
        let gtab = self
            .pic
            .genus_r_table(rcls, (arg_max / (ell * n_level)) as usize);
        Ok(ms
            .iter()
            .map(|&m| {
                let arg = m as i64 * self.p2s() * (-self.setting.d);
                let c = Rational64::from_integer(closed_sum(
                    &self.pic,
                    &ra,
                    &gtab,
                    arg,
                    n_level,
                    self.setting.p as i64,
                    self.alg.ell,
                    self.alg.eps,
                ));
                FormalLogSum::log_prime(self.alg.ell, c)
            })
            .collect())
    }
}

/// Shared inner sum of the closed form:
/// `sum over n with ell | n, p not | n, nN < m p^{2s}|D|` of
/// `delta(n)·r_a(m p^{2s}|D| - nN)·(weight)·R_{rclass}(n/ell)`.
#[allow(clippy::too_many_arguments)]
fn delta_closed_core(
    pic: &PicGroup,
    setting: &QuadSetting,
    a: usize,
    rclass: usize,
    ell: u64,
    eps: i32,
    p2s: i64,
    m: u64,
) -> Result<Rational64> {
    let arg = m as i64 * p2s * (-setting.d);
    let n_level = setting.n_level as i64;
    let ra = pic.r_table(a, arg as usize);
    let gbound = (arg / (ell as i64 * n_level)) as usize;
    let gtab = pic.genus_r_table(rclass, gbound);
    Ok(Rational64::from_integer(closed_sum(
        pic, &ra, &gtab, arg, n_level, setting.p as i64, ell, eps,
    )))
}

/// The table-driven sum itself, shared with the batched grand-identity path.
#[allow(clippy::too_many_arguments)]
fn closed_sum(
    pic: &PicGroup,
    ra: &[u32],
    gtab: &[u32],
    arg: i64,
    n_level: i64,
    p: i64,
    ell: u64,
    eps: i32,
) -> i64 {
    let mut total = 0i64;
    let mut k = 1i64;
    while ell as i64 * k * n_level < arg {
        let n = ell as i64 * k;
        if n % p != 0 {
            let r = ra[(arg - n * n_level) as usize] as i64;
            if r > 0 {
                let rg = gtab[k as usize] as i64;
                if rg > 0 {
                    let w = if eps == -1 {
                        1 + ord_at(n as u64, ell) as i64
                    } else {
                        ord_at(n as u64, ell) as i64
                    };
                    total += pic.delta_of(n) as i64 * r * w * rg;
                }
            }
        }
        k += 1;
    }
    total
}

/// Closed-form `Delta_s^a(m)` without constructing the quaternion algebra:
/// the auxiliary classes are found by norm-residue scans, which is all the
/// genus-level formula needs.
pub fn delta_closed_standalone(
    setting: &QuadSetting,
    pic: &Rc<PicGroup>,
    a: usize,
    ell: u64,
    m: u64,
) -> Result<Rational64> {
    let eps = setting.epsilon(ell);
    if eps == 1 || ell == setting.p {
        return Err(Error::InvalidInput(format!("ell = {ell} must be nonsplit, not p")));
    }
    let modulus = setting.d.unsigned_abs() * setting.p;
    // Class of an ideal with norm = -ell: the class of q (inert) or of
    // q·(prime above ell) (ramified) — only its genus matters.
    let b = class_with_norm_residue(pic, (modulus - ell % modulus) % modulus, modulus)?;
    let nc = class_with_norm(pic, setting.n_level)?;
    let rclass = pic.mul(pic.mul(a, b), nc);
    let cond = pic.order.cond as i64;
    delta_closed_core(pic, setting, a, rclass, ell, eps, cond * cond, m)
}

/// `log ell · (Delta_s^a(m p^2) - Delta_s^a(m))`, the local height
/// contribution of the places above one nonsplit prime.
pub fn nonsplit_height_part(
    setting: &QuadSetting,
    pic: &Rc<PicGroup>,
    a: usize,
    ell: u64,
    m: u64,
) -> Result<FormalLogSum> {
    let p2 = setting.p * setting.p;
    let hi = delta_closed_standalone(setting, pic, a, ell, m * p2)?;
    let lo = delta_closed_standalone(setting, pic, a, ell, m)?;
    Ok(FormalLogSum::log_prime(ell, hi - lo))
}

/// Outcome of the grand identity check for one `(class, m)`.
#[derive(Debug, Clone)]
pub struct GzReport {
    pub m: u64,
    pub class: usize,
    pub lhs: FormalLogSum,
    pub rhs: FormalLogSum,
    pub matches: bool,
    /// Per-prime ledger `(ell, lhs coefficient, rhs coefficient)`.
    pub per_ell: Vec<(u64, Rational64, Rational64)>,
}

/// The headline identity: the sum over nonsplit primes of the local height
/// parts equals the difference of consecutive twisted L-coefficients,
/// `a_{m p^{2s}}(G) - a_{m p^{2s+2}}(G)`.  Mismatches are reported in the
/// ledger, never thrown.
pub fn gz_identity_check(
    setting: &QuadSetting,
    pic: Rc<PicGroup>,
    a: usize,
    m: u64,
) -> Result<GzReport> {
    if gcd_i64(m as i64, setting.n_level as i64) != 1 {
        return Err(Error::InvalidInput(format!(
            "m = {m} must be coprime to the level {}",
            setting.n_level
        )));
    }
    let cond = pic.order.cond;
    let p2s = (cond * cond) as i64;
    let p2 = (setting.p * setting.p) as i64;
    let arg_max = m as i64 * p2s * p2 * (-setting.d);
    let n_level = setting.n_level as i64;
    let p = setting.p as i64;
    let modulus = setting.d.unsigned_abs() * setting.p;
    let nc = class_with_norm(&pic, setting.n_level)?;
    let ra = pic.r_table(a, arg_max as usize);
    // Genus tables are shared across ell: only the genus of the scanned
    // auxiliary class enters, and there are few genera.
    let mut gtabs: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    let genus_key = |pic: &PicGroup, c: usize| -> usize {
        (0..pic.h()).find(|&b| pic.same_genus(b, c)).unwrap()
    };
    let gbound = (arg_max / (3 * n_level)) as usize;
    let mut lhs = FormalLogSum::zero();
    let lmax = (arg_max / n_level) as u64;
    for ell in primes_up_to(lmax.max(2)) {
        if ell == setting.p || setting.epsilon(ell) == 1 {
            continue;
        }
        let eps = setting.epsilon(ell);
        let b = class_with_norm_residue(&pic, (modulus - ell % modulus) % modulus, modulus)?;
        let rclass = pic.mul(pic.mul(a, b), nc);
        let key = genus_key(&pic, rclass);
        let gtab = gtabs
            .entry(key)
            .or_insert_with(|| pic.genus_r_table(key, gbound));
        let hi = closed_sum(&pic, &ra, gtab, m as i64 * p2s * p2 * (-setting.d), n_level, p, ell, eps);
        let lo = closed_sum(&pic, &ra, gtab, m as i64 * p2s * (-setting.d), n_level, p, ell, eps);
        if hi != lo {
            lhs.add_prime(ell, Rational64::from_integer(hi - lo));
        }
    }
    let ctx = SigmaContext::new(*setting, Rc::clone(&pic), a)?;
    let mut rhs = ctx.g_coeff_twisted_closed(m * cond * cond)?;
    rhs.sub_assign(&ctx.g_coeff_twisted_closed(m * cond * cond * setting.p * setting.p)?);
    let mut primes: Vec<u64> = lhs.support();
    for l in rhs.support() {
        if !primes.contains(&l) {
            primes.push(l);
        }
    }
    primes.sort_unstable();
    let per_ell: Vec<(u64, Rational64, Rational64)> = primes
        .iter()
        .map(|&l| (l, lhs.coeff(l), rhs.coeff(l)))
        .collect();
    let matches = lhs == rhs;
    Ok(GzReport { m, class: a, lhs, rhs, matches, per_ell })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orders::PicFamily;

    fn setting() -> QuadSetting {
        QuadSetting::new(-7, 11, 2).unwrap()
    }

    fn context(a: usize, ell: u64, s: u32) -> EichlerContext {
        let fam = PicFamily::new(-7, 11, None);
        EichlerContext::new(setting(), fam.group_s(s), a, ell).unwrap()
    }

    #[test]
    fn auxiliary_prime_choices() {
        let st = setting();
        let inert = choose_q(&st, 3).unwrap();
        assert_eq!(inert.q, 151, "smallest prime = -3 mod 77");
        assert_eq!(inert.j_norm, 453);
        let ram = choose_q(&st, 7).unwrap();
        assert_eq!(ram.q, 43, "smallest prime = -1 mod 11 with (-q|7) = -1");
        assert_eq!(ram.j_norm, 43);
        assert!(choose_q(&st, 11).is_err(), "ell = p is rejected");
        assert!(choose_q(&st, 2).is_err(), "split ell is rejected");
    }

    #[test]
    fn dset_sign_symmetry_and_positivity() {
        let ctx = context(0, 3, 1);
        let pts = ctx.enumerate_dset(&[], 0, 1).unwrap();
        assert!(pts.len() % 2 == 0, "sign symmetry pairs points up");
        for e in &pts {
            let neg = QuatElem { alpha: e.alpha.scale(&rat(-1, 1)), beta: e.beta.scale(&rat(-1, 1)) };
            assert!(pts.contains(&neg), "D-set must be closed under negation");
            assert!(e.rnorm(ctx.alg.j_norm).is_positive());
        }
    }

    #[test]
    fn three_routes_agree_inert_s1() {
        let ctx = context(0, 3, 1);
        let ms: Vec<u64> = (1..=8).collect();
        let a = ctx.delta_total_range(&ms).unwrap();
        let b = ctx.ideal_pair_count_range(&ms).unwrap();
        for (i, &m) in ms.iter().enumerate() {
            let c = ctx.delta_closed(m).unwrap();
            assert_eq!(a[i], b[i], "total vs pair count at m = {m}");
            assert_eq!(a[i], c, "total vs closed form at m = {m}");
        }
    }

    #[test]
    fn three_routes_agree_ramified_s1() {
        let ctx = context(2, 7, 1);
        let ms: Vec<u64> = (1..=8).collect();
        let a = ctx.delta_total_range(&ms).unwrap();
        let b = ctx.ideal_pair_count_range(&ms).unwrap();
        for (i, &m) in ms.iter().enumerate() {
            let c = ctx.delta_closed(m).unwrap();
            assert_eq!(a[i], b[i], "total vs pair count at m = {m}");
            assert_eq!(a[i], c, "total vs closed form at m = {m}");
        }
    }

    #[test]
    fn closed_form_standalone_matches_context_route() {
        let fam = PicFamily::new(-7, 11, None);
        let pic = fam.group_s(1);
        for ell in [3u64, 7] {
            let ctx = context(1, ell, 1);
            for m in 1..=6 {
                let standalone =
                    delta_closed_standalone(&setting(), &pic, 1, ell, m).unwrap();
                assert_eq!(
                    ctx.delta_closed(m).unwrap().coeff(ell),
                    standalone,
                    "ell = {ell}, m = {m}"
                );
            }
        }
    }

    #[test]
    fn representative_choice_does_not_matter() {
        let ctx = context(3, 3, 1);
        // Second-smallest qualifying representative for the same class.
        let coprime_to = -7 * (11 * 3 * 151 * 2) as i64;
        let first = ctx.a_norm;
        let mut second = first + 1;
        loop {
            if gcd_i64(second as i64, coprime_to) == 1
                && ctx.pic.r_count(ctx.a_class, second as i64) > 0
            {
                break;
            }
            second += 1;
        }
        let other = ctx.with_representative(second).unwrap();
        for m in 1..=5 {
            assert_eq!(
                ctx.delta_total(m).unwrap(),
                other.delta_total(m).unwrap(),
                "m = {m}"
            );
        }
    }

    #[test]
    fn transversal_choice_does_not_matter() {
        let ctx = context(0, 3, 1);
        for m in [2u64, 5, 7] {
            assert_eq!(
                ctx.delta_total(m).unwrap(),
                ctx.delta_total_shuffled(m).unwrap()
            );
        }
    }

    #[test]
    fn valuation_filter_is_load_bearing() {
        let ctx = context(0, 3, 1);
        let mut differs = false;
        for m in 1..=8 {
            let shifted = ctx.delta_total_filter_shifted(m).unwrap();
            if shifted != ctx.delta_total(m).unwrap().coeff(3) {
                differs = true;
            }
        }
        assert!(differs, "shifting the p-valuation filter never changed a count");
    }

    #[test]
    fn pair_multiplicities() {
        // Within one twist the pair map is two-to-one; across twists each
        // pair appears for exactly 2·2^k choices of twist, where k counts
        // the twist primes r | D dividing nu- (all of them in the inert
        // case, so the factor is 2·delta(nu-) there).
        for ell in [3u64, 7] {
            let ctx = context(0, ell, 1);
            let gs = ctx.square_transversal(false).unwrap();
            for m in [4u64, 6] {
                for g in &gs {
                    let mut per_w: BTreeMap<String, (u32, i64)> = BTreeMap::new();
                    for mask in ctx.all_masks() {
                        let w = ctx.subset(mask);
                        let mut within: BTreeMap<String, (u32, i64)> = BTreeMap::new();
                        for (key, _np, nm) in
                            ctx.dset_pair_keys(&w, g.class, m).unwrap()
                        {
                            let e = within.entry(key).or_insert((0, nm));
                            e.0 += 1;
                        }
                        for (key, (count, nm)) in within {
                            assert_eq!(count, 2, "two-to-one failed at m = {m}");
                            let e = per_w.entry(key).or_insert((0, nm));
                            e.0 += 1;
                        }
                    }
                    for (key, (wcount, nm)) in per_w {
                        let k = ctx
                            .w0
                            .iter()
                            .filter(|&&r| r != ctx.setting.p && nm % r as i64 == 0)
                            .count();
                        let expected = 2i64 << k;
                        assert_eq!(
                            wcount as i64, expected,
                            "twist multiplicity failed for {key} (nu- = {nm})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn grand_identity_small() {
        let fam = PicFamily::new(-7, 11, None);
        let pic = fam.group_s(1);
        let report = gz_identity_check(&setting(), pic, 0, 1).unwrap();
        assert!(
            report.matches,
            "grand identity failed: lhs {:?} rhs {:?}",
            report.lhs, report.rhs
        );
        assert!(!report.lhs.is_zero(), "check should not be vacuous");
    }

    #[test]
    fn grand_identity_rejects_m_sharing_level() {
        let fam = PicFamily::new(-7, 11, None);
        assert!(gz_identity_check(&setting(), fam.group_s(1), 0, 2).is_err());
    }
}
