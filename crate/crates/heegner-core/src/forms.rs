//! Reduced binary quadratic forms of negative discriminant.
//!
//! Positive definite primitive forms `(a, b, c)` up to SL2(Z)-equivalence are
//! the concrete handles used for ideal classes throughout the crate; the
//! group law itself is carried out on lattices (see [`crate::orders`]).

use serde::{Deserialize, Serialize};

use crate::arith::gcd_i64;

/// A positive definite binary quadratic form `a x^2 + b x y + c y^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinaryForm {
    pub a: i64,
    pub b: i64,
    pub c: i64,
}

impl BinaryForm {
    pub fn new(a: i64, b: i64, c: i64) -> Self {
        let f = BinaryForm { a, b, c };
        assert!(a > 0 && f.disc() < 0, "BinaryForm: must be positive definite");
        f
    }

    pub fn disc(&self) -> i64 {
        self.b * self.b - 4 * self.a * self.c
    }

    /// Content `gcd(a, b, c)`; a form is primitive iff this is 1.
    pub fn content(&self) -> i64 {
        gcd_i64(gcd_i64(self.a, self.b), self.c)
    }

    pub fn is_primitive(&self) -> bool {
        self.content() == 1
    }

    /// Gauss-reduced: `|b| <= a <= c`, with `b >= 0` whenever `|b| = a` or `a = c`.
    pub fn is_reduced(&self) -> bool {
        let BinaryForm { a, b, c } = *self;
        b.abs() <= a && a <= c && !((b.abs() == a || a == c) && b < 0)
    }

    /// Evaluate the form at `(x, y)`.
    pub fn eval(&self, x: i64, y: i64) -> i64 {
        self.a * x * x + self.b * x * y + self.c * y * y
    }

    /// The SL2(Z)-reduction of the form (classical reduction loop).
    pub fn reduced(&self) -> BinaryForm {
        let (mut a, mut b, mut c) = (self.a, self.b, self.c);
        loop {
            // Normalise: bring b into (-a, a].
            if b > a || b <= -a {
                // Bring b into (-a, a]: b' = b - 2ka with k = ceil((b-a)/2a).
                let k = (b + a - 1).div_euclid(2 * a);
                let b_new = b - 2 * k * a;
                let c_new = a * k * k - b * k + c;
                b = b_new;
                c = c_new;
            }
            if a > c {
                // Swap outer coefficients, flipping the sign of b.
                (a, b, c) = (c, -b, a);
                continue;
            }
            if a == c && b < 0 {
                b = -b;
            }
            let f = BinaryForm { a, b, c };
            if f.is_reduced() {
                return f;
            }
        }
    }

    /// Inverse class: flip the sign of `b` and re-reduce.
    pub fn inverse(&self) -> BinaryForm {
        BinaryForm { a: self.a, b: -self.b, c: self.c }.reduced()
    }

    /// Principal (identity) form of discriminant `d` (`d < 0`, `d ≡ 0, 1 mod 4`).
    pub fn principal(d: i64) -> BinaryForm {
        assert!(d < 0, "principal: need negative discriminant");
        match d.rem_euclid(4) {
            0 => BinaryForm::new(1, 0, -d / 4),
            1 => BinaryForm::new(1, 1, (1 - d) / 4),
            _ => panic!("principal: {d} is not a discriminant"),
        }
    }
}

/// Reduce a positive definite form whose raw coefficients may be far larger
/// than the reduced ones, carrying the loop in `i128`; the result of a
/// reduction of discriminant `d` has coefficients below `|d|`, safely `i64`.
pub(crate) fn reduced_wide(mut a: i128, mut b: i128, mut c: i128) -> BinaryForm {
    assert!(a > 0 && b * b - 4 * a * c < 0, "reduced_wide: must be positive definite");
    loop {
        if b > a || b <= -a {
            let k = (b + a - 1).div_euclid(2 * a);
            let (b_new, c_new) = (b - 2 * k * a, a * k * k - b * k + c);
            b = b_new;
            c = c_new;
        }
        if a > c {
            (a, b, c) = (c, -b, a);
            continue;
        }
        if (b.abs() == a || a == c) && b < 0 {
            b = -b;
        }
        if b.abs() <= a && a <= c {
            let to_i64 = |x: i128| i64::try_from(x).expect("reduced coefficient fits i64");
            return BinaryForm { a: to_i64(a), b: to_i64(b), c: to_i64(c) };
        }
    }
}

/// All primitive reduced forms of discriminant `d < 0`, sorted.
///
/// This enumeration *is* the class group as a set; its length is the class
/// number `h(d)`.
pub fn reduced_forms(d: i64) -> Vec<BinaryForm> {
    assert!(d < 0 && matches!(d.rem_euclid(4), 0 | 1), "reduced_forms: bad discriminant {d}");
    let mut out = Vec::new();
    // a <= sqrt(|d|/3) for reduced forms; b has the parity of d and only
    // b >= 0 is scanned, with -b emitted alongside (coefficients stay well
    // inside i64: |b*b - d| <= |d|/3 + |d|).
    let amax = ((-d) as f64 / 3.0).sqrt() as i64 + 1;
    let bstart = d.rem_euclid(2);
    for a in 1..=amax {
        let den = 4 * a;
        let mut b = bstart;
        while b <= a {
            if (b * b - d) % den == 0 {
                let c = (b * b - d) / den;
                for bb in [b, -b] {
                    let f = BinaryForm { a, b: bb, c };
                    if f.disc() == d && f.is_reduced() && f.is_primitive() {
                        out.push(f);
                    }
                    if b == 0 {
                        break;
                    }
                }
            }
            b += 2;
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_numbers_of_small_discriminants() {
        assert_eq!(reduced_forms(-7).len(), 1);
        assert_eq!(reduced_forms(-15).len(), 2);
        assert_eq!(reduced_forms(-23).len(), 3);
        // Conductor-11 order in Q(sqrt(-7)): disc -847, h = 10.
        assert_eq!(reduced_forms(-847).len(), 10);
        // Conductor-121 order: disc -102487, h = 110.
        assert_eq!(reduced_forms(-102487).len(), 110);
    }

    #[test]
    fn reduction_reaches_canonical_representative() {
        let f = BinaryForm::new(1, 11, 242 / 4 * 2 + 51); // arbitrary disc<0 form
        let g = f.reduced();
        assert!(g.is_reduced());
        assert_eq!(g.disc(), f.disc());
        // Principal form of the conductor-11 order reduces from (1, 11, ...).
        let h = BinaryForm::new(1, 11, (121 * 7 + 121) / 4).reduced();
        assert_eq!(h, BinaryForm::principal(-847));
    }

    #[test]
    fn inverse_pairs_in_disc_23() {
        let forms = reduced_forms(-23);
        assert!(forms.contains(&BinaryForm::new(2, 1, 3)));
        assert_eq!(BinaryForm::new(2, 1, 3).inverse(), BinaryForm::new(2, -1, 3));
    }
}
