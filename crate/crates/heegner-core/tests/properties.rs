//! Randomized property suites for the arithmetic kernel and the class-group
//! layer.  Each property is an invariant the rest of the crate leans on;
//! the deterministic unit tests in the library cover the worked examples,
//! these cover the algebra.

use std::rc::Rc;

use proptest::prelude::*;

use heegner_core::arith::{
    factor, form_representations, hensel_sqrt, kronecker, FormalLogSum, PadicTrunc,
};
use heegner_core::forms::{reduced_forms, BinaryForm};
use heegner_core::hecke::{hecke_apply, FormalDivisor, LatticeClass};
use heegner_core::klattice::{rat, KElem};
use heegner_core::orders::{PicFamily, PicGroup, QuadOrder};
use heegner_core::qexp::{alpha_root, QExp};

thread_local! {
    static PIC: Rc<PicGroup> = PicFamily::new(-7, 11, None).group_s(1);
    static FAM: PicFamily = PicFamily::new(-7, 11, None);
}

fn odd_nonzero() -> impl Strategy<Value = i64> {
    (-2000i64..2000).prop_map(|x| 2 * x + 1)
}

proptest! {
    #[test]
    fn kronecker_multiplicative_top(a in -300i64..300, b in -300i64..300, n in odd_nonzero()) {
        prop_assert_eq!(kronecker(a * b, n), kronecker(a, n) * kronecker(b, n));
    }

    #[test]
    fn kronecker_multiplicative_bottom(a in -300i64..300, m in odd_nonzero(), n in odd_nonzero()) {
        prop_assert_eq!(kronecker(a, m * n), kronecker(a, m) * kronecker(a, n));
    }

    #[test]
    fn factorization_reassembles(n in 1u64..200_000) {
        let f = factor(n).unwrap();
        let prod: u64 = f.factors.iter().map(|&(p, e)| p.pow(e)).product();
        prop_assert_eq!(prod, n);
        let divs = f.divisors();
        prop_assert!(divs.iter().all(|d| n % d == 0));
        let count: u32 = f.factors.iter().map(|&(_, e)| e + 1).product();
        prop_assert_eq!(divs.len() as u32, count);
    }

    #[test]
    fn hensel_root_squares_back(a in -500i64..500, k in 1u32..4) {
        for r in [3u64, 7, 11, 13] {
            if a.rem_euclid(r as i64) == 0 {
                continue;
            }
            if let Some(x) = hensel_sqrt(a, r, k) {
                let m = r.pow(k) as i64;
                prop_assert_eq!(
                    (x as i64 * x as i64 - a).rem_euclid(m),
                    0,
                    "root {} fails for a = {} mod {}^{}", x, a, r, k
                );
            }
        }
    }

    #[test]
    fn formal_log_is_additive(a in 1u64..5000, b in 1u64..5000) {
        let mut lhs = FormalLogSum::log_integer(a).unwrap();
        lhs.add_assign(&FormalLogSum::log_integer(b).unwrap());
        prop_assert_eq!(lhs, FormalLogSum::log_integer(a * b).unwrap());
        // log(a/b) + log(b/a) = 0.
        let mut z = FormalLogSum::log_rational(a, b).unwrap();
        z.add_assign(&FormalLogSum::log_rational(b, a).unwrap());
        prop_assert!(z.is_zero());
    }

    #[test]
    fn padic_field_axioms(x in -10_000i64..10_000, y in -10_000i64..10_000) {
        let a = PadicTrunc::new(3, 10, x);
        let b = PadicTrunc::new(3, 10, y);
        prop_assert_eq!(a.add(&b), b.add(&a));
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.sub(&a).res, 0);
        if a.is_unit() {
            prop_assert_eq!(a.mul(&a.inv()), a.one_like());
        }
    }

    #[test]
    fn alpha_root_satisfies_vieta(a_p in -50i64..50, m in 1u32..12) {
        prop_assume!(a_p % 3 != 0);
        let alpha = alpha_root(a_p, 3, m).unwrap();
        let p = PadicTrunc::new(3, m, 3);
        let beta = p.mul(&alpha.inv());
        prop_assert_eq!(alpha.mul(&beta), p);
        prop_assert_eq!(alpha.add(&beta), PadicTrunc::new(3, m, a_p));
    }

    #[test]
    fn reduction_preserves_class_data(a in 1i64..60, b in -60i64..60, c in 1i64..60) {
        prop_assume!(b * b < 4 * a * c);
        let f = BinaryForm::new(a, b, c);
        prop_assume!(f.is_primitive());
        let g = f.reduced();
        prop_assert!(g.is_reduced());
        prop_assert_eq!(g.disc(), f.disc());
        // A definite form represents its own leading coefficient.
        prop_assert_eq!(f.eval(1, 0), a);
    }

    #[test]
    fn form_representations_match_values(n in 1i64..400) {
        // Count representations of n by x^2 + xy + 2y^2 (disc -7) two ways.
        let reps = form_representations(1, 1, 2, n);
        prop_assert!(reps.iter().all(|&(x, y)| x * x + x * y + 2 * y * y == n));
        let table = heegner_core::arith::form_value_table(1, 1, 2, n as usize);
        prop_assert_eq!(reps.len() as u32, table[n as usize]);
    }

    #[test]
    fn kelem_norm_is_multiplicative(
        a in -20i64..20, b in -20i64..20, c in -20i64..20, d in -20i64..20,
    ) {
        let x = KElem::new(-7, rat(a, 2), rat(b, 2));
        let y = KElem::new(-7, rat(c, 2), rat(d, 2));
        prop_assert_eq!(x.mul(&y).norm(), x.norm() * y.norm());
        prop_assert_eq!(x.conj().norm(), x.norm());
        prop_assert_eq!(x.add(&y).trace(), x.trace() + y.trace());
    }

    #[test]
    fn representation_counts_respect_inversion(cls in 0usize..10, n in 1i64..400) {
        PIC.with(|pic| {
            let inv = pic.inv(cls);
            prop_assert_eq!(pic.r_count(cls, n), pic.r_count(inv, n), "r_a = r_inv(a)");
            // The genus count only sees the coset of squares.
            prop_assert_eq!(pic.genus_count(cls, n), pic.genus_count(inv, n));
            Ok(())
        })?;
    }

    #[test]
    fn genus_count_constant_on_genus(cls in 0usize..10, n in 1i64..300) {
        PIC.with(|pic| {
            for other in 0..pic.h() {
                if pic.same_genus(cls, other) {
                    prop_assert_eq!(pic.genus_count(cls, n), pic.genus_count(other, n));
                }
            }
            Ok(())
        })?;
    }


    #[test]
    fn u_after_v_is_identity(p in prop::sample::select(vec![3u64, 5, 11]), t in 1usize..60) {
        let mut g = QExp::zero(p, 6, t);
        for n in 1..=t {
            g.set(n, PadicTrunc::new(p, 6, (n as i64).wrapping_mul(37) % 100));
        }
        let uv = g.v_op(t * p as usize).u_op();
        for n in 1..=uv.trunc().min(t) {
            prop_assert_eq!(uv.a(n), g.a(n));
        }
    }
}

#[test]
fn class_numbers_of_small_discriminants() {
    // h(-7) = 1, h(-15) = 2, h(-23) = 3, h(-47) = 5: the reduced-forms
    // enumeration against the classical table.
    for (d, h) in [(-7i64, 1usize), (-15, 2), (-23, 3), (-47, 5)] {
        assert_eq!(reduced_forms(d).len(), h, "h({d})");
        assert_eq!(QuadOrder::new(d, 1).class_number_formula().unwrap(), h as u64);
    }
}

proptest! {
    // The Hecke action is costly per case; fewer cases still sweep every
    // small m several times.
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hecke_degree_is_sigma_one(m in 1u64..30, cls in 0usize..10) {
        FAM.with(|fam| {
            let start = FormalDivisor::point(LatticeClass { cond: 11, cls });
            let div = hecke_apply(fam, m, &start).unwrap();
            prop_assert_eq!(
                div.degree() as u64,
                factor(m).unwrap().sigma1(),
                "deg T_m = sigma_1(m)"
            );
            // All multiplicities are nonnegative counts.
            prop_assert!(div.iter().all(|(_, c)| c > 0));
            Ok(())
        })?;
    }
}
