//! The Hecke action `T_m` on classes of CM lattices across conductors.
//!
//! A lattice class is a pair (conductor, ideal class); `T_m` sends a class to
//! the formal sum of the classes of its index-`m` sublattices. Two
//! independent implementations are provided: [`hecke_apply`] computes the
//! multiplicities by the counting formula (via `r`-counts against the
//! neighbouring order), while [`hecke_oracle`] enumerates all Hermite-form
//! sublattices directly and classifies each one. The two must agree
//! everywhere; the tests and the acceptance suite enforce this.

use std::collections::BTreeMap;

use crate::arith::factor;
use crate::orders::{form_lattice, multiplier_class, PicFamily, PicGroup};
use crate::{Error, Result};

/// A class of CM lattices: the multiplier order's conductor together with the
/// proper ideal class index inside `Pic` of that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticeClass {
    /// Full conductor of the multiplier order (not necessarily a p-power).
    pub cond: u64,
    /// Index of the class in the Picard group of that order.
    pub cls: usize,
}

/// An integer formal sum of lattice classes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FormalDivisor {
    coeffs: BTreeMap<LatticeClass, i64>,
}

impl FormalDivisor {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn point(c: LatticeClass) -> Self {
        let mut d = Self::default();
        d.add(c, 1);
        d
    }

    pub fn add(&mut self, c: LatticeClass, mult: i64) {
        if mult == 0 {
            return;
        }
        let e = self.coeffs.entry(c).or_insert(0);
        *e += mult;
        if *e == 0 {
            self.coeffs.remove(&c);
        }
    }

    pub fn add_divisor(&mut self, other: &Self) {
        for (&c, &m) in &other.coeffs {
            self.add(c, m);
        }
    }

    pub fn sub_divisor(&mut self, other: &Self) {
        for (&c, &m) in &other.coeffs {
            self.add(c, -m);
        }
    }

    /// Total degree (sum of multiplicities).
    pub fn degree(&self) -> i64 {
        self.coeffs.values().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticeClass, i64)> + '_ {
        self.coeffs.iter().map(|(&c, &m)| (c, m))
    }

    /// Multiset of `ord_p(conductor)` values weighted by |multiplicity|.
    pub fn conductor_support(&self, p: u64) -> BTreeMap<u32, u64> {
        let mut out = BTreeMap::new();
        for (&c, &m) in &self.coeffs {
            let mut cond = c.cond;
            let mut t = 0u32;
            while cond % p == 0 {
                cond /= p;
                t += 1;
            }
            *out.entry(t).or_insert(0) += m.unsigned_abs();
        }
        out
    }
}

/// Apply `T_m` to a formal divisor by the counting formula.
///
/// `T_m` is multiplicative over coprime factors of `m`; for a prime power
/// `l^k` acting on a class of conductor `c`, the image classes live at
/// conductors `c·l^i`, and the multiplicity of a class `[C]` there is an
/// `r`-count of the class `[C][D]^{-1}` computed in the order of the smaller
/// of the two conductors, evaluated at `l^k` scaled by the conductor ratio.
pub fn hecke_apply(fam: &PicFamily, m: u64, div: &FormalDivisor) -> Result<FormalDivisor> {
    assert!(m >= 1, "hecke_apply: m >= 1");
    let mut cur = div.clone();
    for (l, k) in factor(m)?.factors {
        cur = hecke_prime_power(fam, l, k, &cur)?;
    }
    Ok(cur)
}

fn hecke_prime_power(
    fam: &PicFamily,
    l: u64,
    k: u32,
    div: &FormalDivisor,
) -> Result<FormalDivisor> {
    let mut out = FormalDivisor::zero();
    for (point, mult) in div.iter() {
        let d_cond = point.cond;
        let max_down = crate::arith::ord_at(d_cond, l).min(k);
        for i in -(max_down as i64)..=(k as i64) {
            let c_cond = if i >= 0 {
                d_cond * l.pow(i as u32)
            } else {
                d_cond / l.pow((-i) as u32)
            };
            // l^k scaled by min(c,d)/max(c,d).
            let arg = l.pow(k - i.unsigned_abs() as u32) as i64;
            if i <= 0 {
                // Target conductor divides the source: the multiplicity of a
                // class at c is the r-count in Pic(O_c) of its quotient by
                // the projected source class, so only the classes x with
                // r(x, arg) > 0 contribute, at cls = x·[point].
                let pic_c = fam.group(c_cond);
                let d_proj = if i == 0 {
                    point.cls
                } else {
                    fam.projection(d_cond, c_cond)?.map[point.cls]
                };
                for (x, rx) in pic_c.classes_representing(arg) {
                    let cls = pic_c.mul(x, d_proj);
                    out.add(LatticeClass { cond: c_cond, cls }, mult * rx as i64);
                }
            } else {
                // Source conductor divides the target: a class upstairs
                // contributes r(π(cls)·[point]^{-1}, arg) computed in
                // Pic(O_d), so enumerate the fibres of π over x·[point].
                let pic_d = fam.group(d_cond);
                let proj = fam.projection(c_cond, d_cond)?;
                for (x, rx) in pic_d.classes_representing(arg) {
                    let e = pic_d.mul(x, point.cls);
                    for &cls in &proj.fibers[e] {
                        out.add(LatticeClass { cond: c_cond, cls }, mult * rx as i64);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Apply `T_m` to a single class by brute force: enumerate the index-`m`
/// sublattices in Hermite form `[a·e1 + b·e2, d·e2]` (`a·d = m`, `0 <= b < d`)
/// of a representative lattice and classify each sublattice by its multiplier
/// order and ideal class.
pub fn hecke_oracle(fam: &PicFamily, m: u64, point: LatticeClass) -> Result<FormalDivisor> {
    let pic = fam.group(point.cond);
    let lat = form_lattice(&pic.order, &pic.forms[point.cls]);
    let [e1, e2] = &lat.basis;
    let mut out = FormalDivisor::zero();
    for a in factor(m)?.divisors() {
        let d = m / a;
        // b runs mod a: adding multiples of a·e1 to the second generator
        // does not change the sublattice.
        for b in 0..a {
            let g1 = e1.scale(&crate::klattice::rat(a as i64, 1));
            let g2 = e1
                .scale(&crate::klattice::rat(b as i64, 1))
                .add(&e2.scale(&crate::klattice::rat(d as i64, 1)));
            let sub = crate::klattice::Lattice::from_basis(lat.d, g1, g2);
            debug_assert_eq!(lat.index_of(&sub), crate::klattice::rat(m as i64, 1));
            let (ord, form) = multiplier_class(lat.d, &sub)?;
            let pic_sub = fam.group(ord.cond);
            let cls = pic_sub
                .class_of_form(&form)
                .ok_or_else(|| Error::NotProper("oracle: unclassified sublattice".into()))?;
            out.add(LatticeClass { cond: ord.cond, cls }, 1);
        }
    }
    Ok(out)
}

/// `Norm`-push of a divisor at conductor `c_from` down-compatible with level
/// `c_to | c_from`: each point is summed over the kernel of
/// `Pic(O_from) -> Pic(O_to)` (Galois-theoretically, the norm of a point of
/// the larger ring class field viewed as a divisor upstairs).
pub fn norm_push(
    fam: &PicFamily,
    c_from: u64,
    c_to: u64,
    div: &FormalDivisor,
) -> Result<FormalDivisor> {
    let from = fam.group(c_from);
    let to = fam.group(c_to);
    let kernel: Vec<usize> = if c_from == c_to {
        vec![from.id]
    } else {
        fam.projection(c_from, c_to)?.fibers[to.id].clone()
    };
    let mut out = FormalDivisor::zero();
    for (point, mult) in div.iter() {
        assert!(
            point.cond == c_from,
            "norm_push: divisor must be supported at conductor {c_from}"
        );
        for &b in &kernel {
            out.add(
                LatticeClass { cond: c_from, cls: from.mul(b, point.cls) },
                mult,
            );
        }
    }
    Ok(out)
}

/// A compatible tower `h_0, …, h_top` of lattice classes: `h_t` lives at
/// conductor `p^t` and `h_{t-1}` is the projection of `h_t`.
pub fn tower(fam: &PicFamily, top: u32, top_class: usize) -> Result<Vec<LatticeClass>> {
    let p = fam.p;
    let mut classes = vec![LatticeClass { cond: p.pow(top), cls: top_class }];
    for t in (0..top).rev() {
        let above = classes[0];
        let cls = fam
            .group(above.cond)
            .project_class(&fam.group(p.pow(t)), above.cls)?;
        classes.insert(0, LatticeClass { cond: p.pow(t), cls });
    }
    Ok(classes)
}

/// Outcome of one trace-compatibility check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationReport {
    pub s: u32,
    pub r: u32,
    pub holds: bool,
    pub lhs_degree: i64,
    pub rhs_degree: i64,
}

/// Check the trace-compatibility relation at levels `s >= 1`, `r >= 1`:
/// `T_{p^r}(h_s) = Norm(h_{s+r}) + T_{p^{r-1}}(h_{s-1})`,
/// for the tower determined by `top_class` at conductor `p^(s+r)`.
pub fn euler_relation_check(
    fam: &PicFamily,
    s: u32,
    r: u32,
    top_class: usize,
) -> Result<RelationReport> {
    assert!(s >= 1 && r >= 1);
    let p = fam.p;
    let tow = tower(fam, s + r, top_class)?;
    let lhs = hecke_apply(fam, p.pow(r), &FormalDivisor::point(tow[s as usize]))?;
    let mut rhs = norm_push(
        fam,
        p.pow(s + r),
        p.pow(s),
        &FormalDivisor::point(tow[(s + r) as usize]),
    )?;
    rhs.add_divisor(&hecke_apply(
        fam,
        p.pow(r - 1),
        &FormalDivisor::point(tow[(s - 1) as usize]),
    )?);
    Ok(RelationReport {
        s,
        r,
        holds: lhs == rhs,
        lhs_degree: lhs.degree(),
        rhs_degree: rhs.degree(),
    })
}

/// The `s = 0` variant for split `p`:
/// `T_p(h_0) = Norm(h_1) + (σ_p + σ_p^*)·h_0`,
/// where `σ_p, σ_p^*` are the classes of the two primes above `p` in `Pic(O_K)`.
pub fn euler_relation_check_s0(fam: &PicFamily, top_class: usize) -> Result<RelationReport> {
    let p = fam.p;
    let tow = tower(fam, 1, top_class)?;
    let lhs = hecke_apply(fam, p, &FormalDivisor::point(tow[0]))?;
    let mut rhs = norm_push(fam, p, 1, &FormalDivisor::point(tow[1]))?;
    let pic0 = fam.group(1);
    let frob = prime_class_above(&pic0, p)?;
    rhs.add(LatticeClass { cond: 1, cls: pic0.mul(frob, tow[0].cls) }, 1);
    rhs.add(
        LatticeClass { cond: 1, cls: pic0.mul(pic0.inv(frob), tow[0].cls) },
        1,
    );
    Ok(RelationReport {
        s: 0,
        r: 1,
        holds: lhs == rhs,
        lhs_degree: lhs.degree(),
        rhs_degree: rhs.degree(),
    })
}

/// Ideal class of a prime above the split prime `p` in `Pic(O_K)` (the other
/// prime above `p` is its inverse).
pub fn prime_class_above(pic: &PicGroup, p: u64) -> Result<usize> {
    (0..pic.h())
        .find(|&cls| pic.r_count(cls, p as i64) > 0)
        .ok_or_else(|| Error::SearchExhausted(format!("no ideal of norm {p}")))
}

/// The regrouped divisor identity used for coefficient extraction:
/// `T_{m0}·( T_{p^(r+2)}(h_s) − T_{p^(r+1)}(h_{s-1}) ) = T_{m0}·Norm(h_{s+r+2})`
/// for `gcd(m0, p) = 1`, `s >= 1`. Returns whether both the bare identity and
/// the `T_{m0}`-translated identity hold.
pub fn fexp_divisor_identity(
    fam: &PicFamily,
    s: u32,
    r: u32,
    m0: u64,
    top_class: usize,
) -> Result<bool> {
    assert!(s >= 1 && crate::arith::gcd_i64(m0 as i64, fam.p as i64) == 1);
    let p = fam.p;
    let tow = tower(fam, s + r + 2, top_class)?;
    let mut lhs = hecke_apply(fam, p.pow(r + 2), &FormalDivisor::point(tow[s as usize]))?;
    lhs.sub_divisor(&hecke_apply(
        fam,
        p.pow(r + 1),
        &FormalDivisor::point(tow[(s - 1) as usize]),
    )?);
    let rhs = norm_push(
        fam,
        p.pow(s + r + 2),
        p.pow(s),
        &FormalDivisor::point(tow[(s + r + 2) as usize]),
    )?;
    if lhs != rhs {
        return Ok(false);
    }
    Ok(hecke_apply(fam, m0, &lhs)? == hecke_apply(fam, m0, &rhs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam() -> PicFamily {
        PicFamily::new(-7, 11, None)
    }

    #[test]
    fn t2_on_maximal_order_class() {
        // Index-2 sublattices of O_K for D = -7: the two split primes above 2
        // (both principal since h_K = 1) and Z + 2·O_K of conductor 2.
        let fam = fam();
        let id0 = LatticeClass { cond: 1, cls: fam.group(1).id };
        let div = hecke_apply(&fam, 2, &FormalDivisor::point(id0)).unwrap();
        let oracle = hecke_oracle(&fam, 2, id0).unwrap();
        assert_eq!(div, oracle);
        assert_eq!(div.degree(), 3);
        let pic2 = fam.group(2);
        let expected: Vec<_> = div.iter().collect();
        assert_eq!(
            expected,
            vec![
                (LatticeClass { cond: 1, cls: 0 }, 2),
                (LatticeClass { cond: 2, cls: pic2.id }, 1)
            ]
        );
    }

    #[test]
    fn apply_matches_oracle_small_grid() {
        let fam = fam();
        for cond in [1u64, 11] {
            let pic = fam.group(cond);
            for cls in 0..pic.h().min(3) {
                let point = LatticeClass { cond, cls };
                for m in [2u64, 4, 6, 11, 22] {
                    let a = hecke_apply(&fam, m, &FormalDivisor::point(point)).unwrap();
                    let b = hecke_oracle(&fam, m, point).unwrap();
                    assert_eq!(a, b, "T_{m} at cond {cond} class {cls}");
                    assert_eq!(a.degree() as u64, factor(m).unwrap().sigma1());
                }
            }
        }
    }

    #[test]
    fn euler_relations_hold() {
        let fam = fam();
        let rep = euler_relation_check(&fam, 1, 1, 3).unwrap();
        assert!(rep.holds, "{rep:?}");
        let rep0 = euler_relation_check_s0(&fam, 0).unwrap();
        assert!(rep0.holds, "{rep0:?}");
    }

    #[test]
    fn conductor_support_is_preserved_by_prime_to_p_hecke() {
        let fam = fam();
        let point = LatticeClass { cond: 11, cls: 2 };
        let div = hecke_apply(&fam, 6, &FormalDivisor::point(point)).unwrap();
        let support = div.conductor_support(11);
        assert_eq!(support.keys().copied().collect::<Vec<_>>(), vec![1]);
        assert_eq!(support[&1], 12); // degree σ1(6)
    }
}
