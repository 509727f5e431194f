//! Rank-2 lattices in an imaginary quadratic field, with exact rational bases.
//!
//! An element of `K = Q(sqrt(D))` is stored as the coordinate pair `(u, v)`
//! meaning `u + v·sqrt(D)`. A lattice is a free rank-2 Z-module of such
//! elements, normalised to a canonical Hermite basis so that equal lattices
//! compare equal structurally. Fractional ideals of every order of `K` are
//! represented this way; the order-specific interpretation (norms, classes)
//! lives in [`crate::orders`].

use num_bigint::BigInt;
use num_rational::BigRational;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

/// An element `u + v·sqrt(D)` of the field `Q(sqrt(D))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KElem {
    pub d: i64,
    pub u: BigRational,
    pub v: BigRational,
}

/// Convenience constructor for exact rationals.
pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl KElem {
    pub fn new(d: i64, u: BigRational, v: BigRational) -> Self {
        assert!(d < 0, "KElem: field discriminant must be negative");
        KElem { d, u, v }
    }

    pub fn from_parts(d: i64, un: i64, ud: i64, vn: i64, vd: i64) -> Self {
        Self::new(d, rat(un, ud), rat(vn, vd))
    }

    /// The rational number `q` as an element of `K`.
    pub fn from_rational(d: i64, q: BigRational) -> Self {
        Self::new(d, q, BigRational::zero())
    }

    pub fn zero(d: i64) -> Self {
        Self::new(d, BigRational::zero(), BigRational::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.u.is_zero() && self.v.is_zero()
    }

    pub fn conj(&self) -> Self {
        Self::new(self.d, self.u.clone(), -self.v.clone())
    }

    pub fn add(&self, o: &Self) -> Self {
        self.check(o);
        Self::new(self.d, &self.u + &o.u, &self.v + &o.v)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.check(o);
        Self::new(self.d, &self.u - &o.u, &self.v - &o.v)
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.check(o);
        let d = BigRational::from(BigInt::from(self.d));
        Self::new(
            self.d,
            &self.u * &o.u + &d * &self.v * &o.v,
            &self.u * &o.v + &self.v * &o.u,
        )
    }

    pub fn scale(&self, q: &BigRational) -> Self {
        Self::new(self.d, &self.u * q, &self.v * q)
    }

    /// Field norm `u^2 - D v^2` (positive for nonzero elements since D < 0).
    pub fn norm(&self) -> BigRational {
        let d = BigRational::from(BigInt::from(self.d));
        &self.u * &self.u - d * &self.v * &self.v
    }

    /// Field trace `2u`.
    pub fn trace(&self) -> BigRational {
        &self.u + &self.u
    }

    /// Multiplicative inverse `conj / norm`.
    pub fn inv(&self) -> Self {
        let n = self.norm();
        assert!(!n.is_zero(), "KElem::inv: zero element");
        self.conj().scale(&n.recip())
    }

    fn check(&self, o: &Self) {
        assert!(self.d == o.d, "KElem: mixed fields {} vs {}", self.d, o.d);
    }
}

/// A rank-2 lattice in `Q(sqrt(D))`, held in canonical Hermite form.
///
/// The canonical basis is `[(A, 0), (t, g)]` in `(u, v)` coordinates scaled
/// by a common positive rational, with `A > 0`, `g > 0`, `0 <= t < A`; the
/// basis determinant `A·g` is positive, which fixes an orientation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    pub d: i64,
    /// Canonical basis `[b1, b2]`.
    pub basis: [KElem; 2],
}

impl Lattice {
    /// Span of the given generators, which must have rank 2.
    pub fn from_generators(d: i64, gens: &[KElem]) -> Self {
        // Clear denominators to work over Z.
        let mut denom = BigInt::one();
        for g in gens {
            assert!(g.d == d, "Lattice: mixed fields");
            denom = num_integer::lcm(denom.clone(), g.u.denom().clone());
            denom = num_integer::lcm(denom.clone(), g.v.denom().clone());
        }
        let dq = BigRational::from(denom.clone());
        let mut rows: Vec<(BigInt, BigInt)> = gens
            .iter()
            .filter(|g| !g.is_zero())
            .map(|g| {
                let u = (&g.u * &dq).to_integer();
                let v = (&g.v * &dq).to_integer();
                (u, v)
            })
            .collect();
        assert!(rows.len() >= 2, "Lattice: need rank 2");

        // Stage 1: Euclid on the v-components until one nonzero remains.
        loop {
            let mut idx: Vec<usize> =
                (0..rows.len()).filter(|&i| !rows[i].1.is_zero()).collect();
            if idx.len() <= 1 {
                break;
            }
            // Reduce the larger |v| by the smaller.
            idx.sort_by_key(|&i| rows[i].1.abs());
            let (small, big) = (idx[0], idx[1]);
            let q = rows[big].1.clone() / rows[small].1.clone();
            rows[big].0 = &rows[big].0 - &q * &rows[small].0;
            rows[big].1 = &rows[big].1 - &q * &rows[small].1;
        }
        let pivot = (0..rows.len())
            .find(|&i| !rows[i].1.is_zero())
            .expect("Lattice: rank < 2 (no sqrt(D) component)");
        let (mut t, mut g) = rows[pivot].clone();
        if g.is_negative() {
            t = -t;
            g = -g;
        }
        // Stage 2: gcd of the remaining pure-rational components.
        let mut a = BigInt::zero();
        for (i, (u, v)) in rows.iter().enumerate() {
            if i != pivot {
                debug_assert!(v.is_zero());
                a = num_integer::gcd(a, u.clone());
            }
        }
        assert!(!a.is_zero(), "Lattice: rank < 2 (no rational component)");
        // Normalise t into [0, a).
        t = t.mod_floor(&a);
        let b1 = KElem::new(d, BigRational::new(a, denom.clone()), BigRational::zero());
        let b2 = KElem::new(
            d,
            BigRational::new(t, denom.clone()),
            BigRational::new(g, denom),
        );
        Lattice { d, basis: [b1, b2] }
    }

    /// Lattice `Z·x + Z·y`.
    pub fn from_basis(d: i64, x: KElem, y: KElem) -> Self {
        Self::from_generators(d, &[x, y])
    }

    /// Determinant of the canonical basis in `(u, v)` coordinates (positive).
    pub fn det(&self) -> BigRational {
        let [b1, b2] = &self.basis;
        &b1.u * &b2.v - &b2.u * &b1.v
    }

    /// Product lattice (Z-span of pairwise products of basis elements).
    pub fn mul(&self, other: &Lattice) -> Lattice {
        let mut gens = Vec::with_capacity(4);
        for x in &self.basis {
            for y in &other.basis {
                gens.push(x.mul(y));
            }
        }
        Lattice::from_generators(self.d, &gens)
    }

    /// Scale every element by `x`.
    pub fn scale_elem(&self, x: &KElem) -> Lattice {
        Lattice::from_generators(
            self.d,
            &[self.basis[0].mul(x), self.basis[1].mul(x)],
        )
    }

    /// Scale every element by the rational `q`.
    pub fn scale(&self, q: &BigRational) -> Lattice {
        Lattice::from_generators(
            self.d,
            &[self.basis[0].scale(q), self.basis[1].scale(q)],
        )
    }

    /// Complex conjugate lattice.
    pub fn conj(&self) -> Lattice {
        Lattice::from_generators(self.d, &[self.basis[0].conj(), self.basis[1].conj()])
    }

    /// Sum `L + M` (Z-span of both).
    pub fn sum(&self, other: &Lattice) -> Lattice {
        Lattice::from_generators(
            self.d,
            &[
                self.basis[0].clone(),
                self.basis[1].clone(),
                other.basis[0].clone(),
                other.basis[1].clone(),
            ],
        )
    }

    /// Intersection `L ∩ M`, computed through dual lattices:
    /// `(L ∩ M)^* = L^* + M^*` for the standard pairing on coordinates.
    pub fn intersect(&self, other: &Lattice) -> Lattice {
        let a = self.dual();
        let b = other.dual();
        a.sum(&b).dual()
    }

    /// Dual basis with respect to the standard coordinate pairing.
    fn dual(&self) -> Lattice {
        let [b1, b2] = &self.basis;
        let det = self.det();
        assert!(!det.is_zero());
        // Inverse-transpose of the basis matrix [[u1, v1], [u2, v2]].
        let d1 = KElem::new(self.d, &b2.v / &det, -(&b2.u / &det));
        let d2 = KElem::new(self.d, -(&b1.v / &det), &b1.u / &det);
        Lattice::from_generators(self.d, &[d1, d2])
    }

    /// Coordinates of `x` in the canonical basis, if we allow rationals.
    pub fn coordinates(&self, x: &KElem) -> (BigRational, BigRational) {
        let [b1, b2] = &self.basis;
        let det = self.det();
        let c2 = (&b1.u * &x.v - &x.u * &b1.v) / &det;
        let c1 = (&x.u * &b2.v - &b2.u * &x.v) / &det;
        (c1, c2)
    }

    /// True iff `x` lies in the lattice.
    pub fn contains(&self, x: &KElem) -> bool {
        let (c1, c2) = self.coordinates(x);
        c1.is_integer() && c2.is_integer()
    }

    /// True iff `other` is a sublattice of `self`.
    pub fn contains_lattice(&self, other: &Lattice) -> bool {
        self.contains(&other.basis[0]) && self.contains(&other.basis[1])
    }

    /// Generalised index `[self : other] = det(other)/det(self)` (a positive
    /// rational; an integer when `other ⊆ self`).
    pub fn index_of(&self, other: &Lattice) -> BigRational {
        other.det() / self.det()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok() -> Lattice {
        // Maximal order of Q(sqrt(-7)): Z + Z·(1+sqrt(-7))/2.
        Lattice::from_basis(
            -7,
            KElem::from_parts(-7, 1, 1, 0, 1),
            KElem::from_parts(-7, 1, 2, 1, 2),
        )
    }

    #[test]
    fn canonical_form_is_stable() {
        let l1 = ok();
        // Same lattice from a different generating set.
        let l2 = Lattice::from_generators(
            -7,
            &[
                KElem::from_parts(-7, 3, 1, 0, 1),
                KElem::from_parts(-7, 1, 2, 1, 2),
                KElem::from_parts(-7, 5, 2, 1, 2),
            ],
        );
        assert_eq!(l1, l2);
    }

    #[test]
    fn ring_lattice_is_multiplicatively_idempotent() {
        let l = ok();
        assert_eq!(l.mul(&l), l);
    }

    #[test]
    fn intersection_and_sum_roundtrip() {
        let l = ok();
        let m = l.scale(&rat(2, 1));
        assert_eq!(l.intersect(&m), m);
        assert_eq!(l.sum(&m), l);
        assert_eq!(l.index_of(&m), rat(4, 1));
        assert!(l.contains_lattice(&m));
        assert!(!m.contains_lattice(&l));
    }

    #[test]
    fn membership() {
        let l = ok();
        assert!(l.contains(&KElem::from_parts(-7, 1, 2, 1, 2)));
        assert!(l.contains(&KElem::from_parts(-7, 0, 1, 1, 1))); // sqrt(-7) = 2ω - 1
        assert!(!l.contains(&KElem::from_parts(-7, 1, 2, 0, 1)));
    }
}
