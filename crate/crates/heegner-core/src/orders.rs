//! Orders `Z + c·O_K` in an imaginary quadratic field, their Picard groups,
//! and the counting functions attached to ideal classes.
//!
//! Classes are represented by reduced binary quadratic forms of discriminant
//! `c^2 D`; the group law is computed on the associated lattices (module
//! composition), which keeps a single source of truth for the dictionary
//! between forms and proper ideals.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::rc::Rc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{factor, form_representations, form_value_table, gcd_i64, kronecker, mod_inverse};
use crate::forms::{reduced_forms, reduced_wide, BinaryForm};
use crate::klattice::{rat, KElem, Lattice};
use crate::{Error, Result};

/// Validated reference data defining the ambient situation: the field
/// discriminant `D`, the distinguished split prime `p` and the level `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadSetting {
    /// Fundamental discriminant of the imaginary quadratic field, odd, `<= -7`.
    pub d: i64,
    /// Odd prime split in `K`, coprime to `D`.
    pub p: u64,
    /// Level: every prime divisor splits in `K`, `gcd(N, Dp) = 1`.
    pub n_level: u64,
}

impl QuadSetting {
    pub fn new(d: i64, p: u64, n_level: u64) -> Result<Self> {
        if d >= 0 || d % 2 == 0 || d.rem_euclid(4) != 1 || !crate::arith::is_fundamental_discriminant(d) {
            return Err(Error::InvalidInput(format!(
                "D = {d} must be a negative odd fundamental discriminant"
            )));
        }
        if d == -3 {
            return Err(Error::InvalidInput("D = -3 has extra units; unsupported".into()));
        }
        if p < 3 || !crate::arith::is_prime(p) {
            return Err(Error::InvalidInput(format!("p = {p} must be an odd prime")));
        }
        if kronecker(d, p as i64) != 1 {
            return Err(Error::InvalidInput(format!("p = {p} must split in Q(sqrt({d}))")));
        }
        if n_level == 0 || crate::arith::gcd_i64(n_level as i64, d * p as i64) != 1 {
            return Err(Error::InvalidInput(format!("N = {n_level} must be coprime to Dp")));
        }
        for (l, _) in factor(n_level)?.factors {
            if kronecker(d, l as i64) != 1 {
                return Err(Error::InvalidInput(format!(
                    "prime {l} | N does not split in Q(sqrt({d}))"
                )));
            }
        }
        Ok(QuadSetting { d, p, n_level })
    }

    /// The order of conductor `p^s`.
    pub fn order(&self, s: u32) -> QuadOrder {
        QuadOrder::new(self.d, (self.p as u64).pow(s))
    }

    /// Splitting behaviour of a prime `l`: +1 split, -1 inert, 0 ramified.
    pub fn epsilon(&self, l: u64) -> i32 {
        kronecker(self.d, l as i64)
    }
}

/// The order `Z + c·O_K` of conductor `c` in `Q(sqrt(D))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QuadOrder {
    pub d: i64,
    pub cond: u64,
}

impl QuadOrder {
    pub fn new(d: i64, cond: u64) -> Self {
        assert!(d < 0 && d.rem_euclid(4) == 1 && cond >= 1, "QuadOrder: bad parameters");
        QuadOrder { d, cond }
    }

    /// Discriminant `c^2 D`.
    pub fn disc(&self) -> i64 {
        (self.cond * self.cond) as i64 * self.d
    }

    /// The order as a lattice: `Z + Z·c·(1 + sqrt(D))/2`.
    pub fn lattice(&self) -> Lattice {
        let c = self.cond as i64;
        Lattice::from_basis(
            self.d,
            KElem::from_parts(self.d, 1, 1, 0, 1),
            KElem::from_parts(self.d, c, 2, c, 2),
        )
    }

    /// Covolume factor `c/2` = determinant of the order's basis in `(u, v)`
    /// coordinates; ideal norms are determinants relative to this.
    pub fn basis_det(&self) -> BigRational {
        rat(self.cond as i64, 2)
    }

    /// Norm of a fractional ideal lattice of this order.
    pub fn ideal_norm(&self, l: &Lattice) -> BigRational {
        l.det() / self.basis_det()
    }

    /// Inverse of a proper fractional ideal: `conj(L) / N(L)`.
    pub fn ideal_inverse(&self, l: &Lattice) -> Lattice {
        let n = self.ideal_norm(l);
        l.conj().scale(&n.recip())
    }

    /// Class number by the analytic/index formula
    /// `h(O_c) = h_K · c · prod_{l | c} (1 - (D|l)/l)` (valid for `D < -4`).
    pub fn class_number_formula(&self) -> Result<u64> {
        let hk = reduced_forms(self.d).len() as i64;
        let mut num = hk * self.cond as i64;
        let mut den = 1i64;
        for (l, _) in factor(self.cond)?.factors {
            num *= l as i64 - kronecker(self.d, l as i64) as i64;
            den *= l as i64;
        }
        assert!(num % den == 0);
        Ok((num / den) as u64)
    }
}

/// The Picard group of proper ideal classes of a fixed order, with its
/// composition table and genus structure precomputed.
#[derive(Debug)]
pub struct PicGroup {
    pub order: QuadOrder,
    /// Reduced forms indexing the classes, sorted.
    pub forms: Vec<BinaryForm>,
    index: HashMap<BinaryForm, usize>,
    /// Standard lattices of the forms, used to compute products on demand.
    lattices: Vec<Lattice>,
    /// Memoized composition results, keyed by `(min(i, j), max(i, j))`.
    mul_cache: RefCell<HashMap<(usize, usize), usize>>,
    inv_table: Vec<usize>,
    /// Index of the principal class.
    pub id: usize,
    /// `squares[i]` is true iff class `i` lies in the subgroup of squares;
    /// built on first use (it costs `h` products).
    squares: RefCell<Option<Vec<bool>>>,
    /// Lazily grown per-class representation count tables.
    r_tables: RefCell<Option<(usize, Vec<Vec<u32>>)>>,
}

/// Serialized form of a [`PicGroup`] for the on-disk cache.
#[derive(Serialize, Deserialize)]
struct PicCacheFile {
    d: i64,
    cond: u64,
    forms: Vec<(i64, i64, i64)>,
    mul_table: Vec<Vec<usize>>,
}

impl PicGroup {
    /// Enumerate the class group of `order`. Products are computed lazily and
    /// memoized, so construction is linear in the class number.
    pub fn compute(order: QuadOrder) -> Rc<PicGroup> {
        let forms = reduced_forms(order.disc());
        let index: HashMap<_, _> = forms.iter().copied().zip(0..).collect();
        Rc::new(Self::from_parts(order, forms, index, HashMap::new()))
    }

    fn from_parts(
        order: QuadOrder,
        forms: Vec<BinaryForm>,
        index: HashMap<BinaryForm, usize>,
        mul_cache: HashMap<(usize, usize), usize>,
    ) -> PicGroup {
        let h = forms.len();
        let id = index[&BinaryForm::principal(order.disc())];
        let lattices: Vec<Lattice> = forms.iter().map(|f| form_lattice(&order, f)).collect();
        let mut inv_table = vec![usize::MAX; h];
        for i in 0..h {
            inv_table[i] = index[&forms[i].inverse()];
        }
        PicGroup {
            order,
            forms,
            index,
            lattices,
            mul_cache: RefCell::new(mul_cache),
            inv_table,
            id,
            squares: RefCell::new(None),
            r_tables: RefCell::new(None),
        }
    }

    /// Class count `h`.
    pub fn h(&self) -> usize {
        self.forms.len()
    }

    pub fn mul(&self, i: usize, j: usize) -> usize {
        let key = (i.min(j), i.max(j));
        if let Some(&k) = self.mul_cache.borrow().get(&key) {
            return k;
        }
        let prod = self.lattices[key.0].mul(&self.lattices[key.1]);
        let f = class_form_of_lattice(&self.order, &prod)
            .expect("PicGroup: product of proper ideals must be proper");
        let k = self.index[&f];
        self.mul_cache.borrow_mut().insert(key, k);
        k
    }

    pub fn inv(&self, i: usize) -> usize {
        self.inv_table[i]
    }

    pub fn pow(&self, i: usize, k: i64) -> usize {
        let (mut base, mut k) = if k < 0 { (self.inv(i), (-k) as u64) } else { (i, k as u64) };
        let mut acc = self.id;
        while k > 0 {
            if k & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            k >>= 1;
        }
        acc
    }

    /// Index of a reduced form.
    pub fn class_of_form(&self, f: &BinaryForm) -> Option<usize> {
        self.index.get(&f.reduced()).copied()
    }

    /// Class of a proper fractional ideal lattice.
    pub fn class_of_lattice(&self, l: &Lattice) -> Result<usize> {
        let f = class_form_of_lattice(&self.order, l)?;
        self.class_of_form(&f)
            .ok_or_else(|| Error::NotProper(format!("form {f:?} not in enumerated group")))
    }

    fn is_square(&self, i: usize) -> bool {
        if self.squares.borrow().is_none() {
            let mut sq = vec![false; self.h()];
            for a in 0..self.h() {
                sq[self.mul(a, a)] = true;
            }
            *self.squares.borrow_mut() = Some(sq);
        }
        self.squares.borrow().as_ref().expect("squares just built")[i]
    }

    /// Classes in the subgroup of squares.
    pub fn square_classes(&self) -> Vec<usize> {
        (0..self.h()).filter(|&i| self.is_square(i)).collect()
    }

    /// Two-torsion subgroup.
    pub fn two_torsion(&self) -> Vec<usize> {
        (0..self.h()).filter(|&i| self.mul(i, i) == self.id).collect()
    }

    /// Same-genus test: `a` and `b` lie in one coset of the squares.
    pub fn same_genus(&self, a: usize, b: usize) -> bool {
        self.is_square(self.mul(a, self.inv(b)))
    }

    /// Number of proper integral ideals of norm `n` in class `a`.
    pub fn r_count(&self, a: usize, n: i64) -> u64 {
        if n <= 0 {
            return 0;
        }
        {
            let tab = self.r_tables.borrow();
            if let Some((bound, tables)) = tab.as_ref() {
                if n as usize <= *bound {
                    return tables[a][n as usize] as u64;
                }
            }
        }
        let f = self.forms[a];
        (form_representations(f.a, f.b, f.c, n).len() / 2) as u64
    }

    /// Number of proper integral ideals of norm `n` in the genus of `a`.
    pub fn genus_count(&self, a: usize, n: i64) -> u64 {
        (0..self.h())
            .filter(|&b| self.same_genus(a, b))
            .map(|b| self.r_count(b, n))
            .sum()
    }

    /// All classes containing a proper integral ideal of norm `n`, with the
    /// number of such ideals per class — the nonzero fibre of
    /// [`Self::r_count`], computed without scanning every class.
    ///
    /// Integral ideals of norm `n` are `f·L` with `n = f²·n'` and
    /// `L = n'Z + (b + √disc)/2·Z` for `b` mod `2n'` satisfying
    /// `b² ≡ disc (mod 4n')`; the ideal is proper exactly when the norm form
    /// `(n', b, (b² − disc)/(4n'))` is primitive, and scaling by `f` does not
    /// change the class.
    pub fn classes_representing(&self, n: i64) -> Vec<(usize, u64)> {
        assert!(n >= 1, "classes_representing: n >= 1");
        let disc = self.order.disc();
        let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
        let mut f = 1i64;
        while f * f <= n {
            if n % (f * f) == 0 {
                let np = n / (f * f);
                for b in 0..2 * np {
                    if (b * b - disc) % (4 * np) != 0 {
                        continue;
                    }
                    let c = (b * b - disc) / (4 * np);
                    if gcd_i64(np, gcd_i64(b, c)) != 1 {
                        continue;
                    }
                    let cls = self
                        .class_of_form(&BinaryForm { a: np, b, c })
                        .expect("classes_representing: form of ambient discriminant");
                    *counts.entry(cls).or_insert(0) += 1;
                }
            }
            f += 1;
        }
        counts.into_iter().collect()
    }

    /// Precompute `r_count` for all classes and all `n <= bound`; later calls
    /// within the bound become table lookups.
    pub fn ensure_r_tables(&self, bound: usize) {
        let mut tab = self.r_tables.borrow_mut();
        let need = match tab.as_ref() {
            Some((b, _)) => *b < bound,
            None => true,
        };
        if need {
            let tables: Vec<Vec<u32>> = (0..self.h()).map(|a| self.r_table(a, bound)).collect();
            *tab = Some((bound, tables));
        }
    }

    /// One class's `r_count` values for all `n <= bound` as a flat table,
    /// without touching the shared cache (callers with large bounds keep
    /// memory under control by building and dropping tables themselves).
    pub fn r_table(&self, a: usize, bound: usize) -> Vec<u32> {
        let f = self.forms[a];
        let mut t = form_value_table(f.a, f.b, f.c, bound);
        t[0] = 0; // the origin is not an ideal
        for v in t.iter_mut() {
            *v /= 2; // quotient by the unit group ±1
        }
        t
    }

    /// Genus-level table: `R_a(n)` for all `n <= bound`, the sum of
    /// [`Self::r_table`] over the classes in the genus of `a`.
    pub fn genus_r_table(&self, a: usize, bound: usize) -> Vec<u32> {
        let mut acc = vec![0u32; bound + 1];
        for b in 0..self.h() {
            if self.same_genus(a, b) {
                for (x, y) in acc.iter_mut().zip(self.r_table(b, bound)) {
                    *x += y;
                }
            }
        }
        acc
    }

    /// `delta(k) = 2^(number of primes dividing gcd(k, D))`.
    pub fn delta_of(&self, k: i64) -> u64 {
        let g = gcd_i64(k, self.order.d).unsigned_abs();
        let omega = factor(g).expect("delta_of: tiny input").factors.len() as u32;
        1u64 << omega
    }

    /// Smallest `nu >= 1` coprime to `modulus` represented by class `a`
    /// (i.e. the norm of a smallest suitable integral ideal in the class).
    pub fn representative_norm_coprime(&self, a: usize, modulus: i64) -> Result<u64> {
        let f = self.forms[a];
        let bound = 4 * self.order.disc().unsigned_abs();
        for nu in 1..=bound {
            if gcd_i64(nu as i64, modulus) != 1 {
                continue;
            }
            if !form_representations(f.a, f.b, f.c, nu as i64).is_empty() {
                return Ok(nu);
            }
        }
        Err(Error::SearchExhausted(format!(
            "no represented value coprime to {modulus} for class {a} below {bound}"
        )))
    }

    /// An integral proper ideal of norm `nu` in class `a`.
    pub fn ideal_in_class(&self, a: usize, nu: u64) -> Result<Lattice> {
        let f = self.forms[a];
        let reps = form_representations(f.a, f.b, f.c, nu as i64);
        if reps.is_empty() {
            return Err(Error::SearchExhausted(format!(
                "class {a} does not represent {nu}"
            )));
        }
        let l = form_lattice(&self.order, &f);
        let (x, y) = reps[0];
        // The representation coordinates refer to the defining generators
        // (A, (B + c√D)/2) of L(f), not to the canonical basis of `l`.
        let g1 = KElem::from_parts(self.order.d, f.a, 1, 0, 1);
        let g2 = KElem::from_parts(self.order.d, f.b, 2, self.order.cond as i64, 2);
        let mu = g1.scale(&rat(x, 1)).add(&g2.scale(&rat(y, 1)));
        let linv = self.order.ideal_inverse(&l);
        // mu·L^{-1} is integral of norm nu in the inverse class; conjugating
        // lands in the class itself. Both are checked, the matching one wins.
        for cand in [linv.scale_elem(&mu).conj(), linv.scale_elem(&mu)] {
            if self.class_of_lattice(&cand)? == a {
                debug_assert_eq!(self.order.ideal_norm(&cand), rat(nu as i64, 1));
                return Ok(cand);
            }
        }
        Err(Error::NotProper(format!(
            "constructed ideal of norm {nu} not in class {a}"
        )))
    }

    /// Genus character vector of a class: the Legendre symbols `(nu | r)` for
    /// the odd primes `r` dividing the discriminant, evaluated at a
    /// represented norm `nu` coprime to the discriminant.
    pub fn genus_invariants(&self, a: usize) -> Result<Vec<i32>> {
        let disc = self.order.disc();
        let nu = self.representative_norm_coprime(a, disc)? as i64;
        let mut out = Vec::new();
        for (r, _) in factor(disc.unsigned_abs())?.factors {
            if r % 2 == 1 {
                out.push(kronecker(nu, r as i64));
            }
        }
        Ok(out)
    }

    /// Genus character `chi_{D1,D2}` of a class, for a factorization
    /// `D = D1·D2` into fundamental discriminants: `(D1 | nu)` at a
    /// represented norm `nu` coprime to `D`. Only meaningful at conductor 1.
    pub fn genus_character(&self, a: usize, d1: i64) -> Result<i32> {
        let nu = self.representative_norm_coprime(a, self.order.d)?;
        Ok(kronecker(d1, nu as i64))
    }

    /// The distinguished lattice `sqrt(D)·O_K ∩ O_c`.
    pub fn ds_lattice(&self) -> Lattice {
        let d = self.order.d;
        let ok = QuadOrder::new(d, 1).lattice();
        let sqrt_d = KElem::from_parts(d, 0, 1, 1, 1);
        ok.scale_elem(&sqrt_d).intersect(&self.order.lattice())
    }

    /// Class of the distinguished lattice `sqrt(D)·O_K ∩ O_c`.
    pub fn ds_class(&self) -> Result<usize> {
        self.class_of_lattice(&self.ds_lattice())
    }

    /// The lattice `(sqrt(D)·O_K + r·O_K) ∩ O_c` for a ramified prime
    /// `r | D`: the prime above `r` pulled into the order.
    pub fn ramified_prime_lattice(&self, r: u64) -> Lattice {
        assert!(r > 0 && self.order.d % r as i64 == 0, "{r} must divide D");
        let d = self.order.d;
        let ok = QuadOrder::new(d, 1).lattice();
        let sqrt_d = KElem::from_parts(d, 0, 1, 1, 1);
        let above_r = ok.scale_elem(&sqrt_d).sum(&ok.scale(&rat(r as i64, 1)));
        above_r.intersect(&self.order.lattice())
    }

    /// Class of [`Self::ramified_prime_lattice`].
    pub fn ramified_prime_class(&self, r: u64) -> Result<usize> {
        self.class_of_lattice(&self.ramified_prime_lattice(r))
    }

    /// Project a class to an order of smaller conductor (`to.cond | self.cond`):
    /// extend the ideal by multiplying with the smaller order.
    pub fn project_class(&self, to: &PicGroup, a: usize) -> Result<usize> {
        assert!(
            self.order.d == to.order.d && self.order.cond % to.order.cond == 0,
            "project_class: target conductor must divide source conductor"
        );
        let l = form_lattice(&self.order, &self.forms[a]);
        to.class_of_lattice(&l.mul(&to.order.lattice()))
    }

    /// Kernel of the projection `Pic(self) -> Pic(to)`.
    pub fn projection_kernel(&self, to: &PicGroup) -> Result<Vec<usize>> {
        let mut ker = Vec::new();
        for a in 0..self.h() {
            if self.project_class(to, a)? == to.id {
                ker.push(a);
            }
        }
        Ok(ker)
    }

    /// Write the group to the JSON cache file. This forces the full
    /// composition table, so it is only worthwhile for groups that are
    /// queried densely (the family caches just the p-power conductors).
    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let h = self.h();
        let mut mul_table = vec![vec![0usize; h]; h];
        for i in 0..h {
            for j in i..h {
                let k = self.mul(i, j);
                mul_table[i][j] = k;
                mul_table[j][i] = k;
            }
        }
        let file = PicCacheFile {
            d: self.order.d,
            cond: self.order.cond,
            forms: self.forms.iter().map(|f| (f.a, f.b, f.c)).collect(),
            mul_table,
        };
        let data = serde_json::to_string_pretty(&file).map_err(|e| Error::Cache(e.to_string()))?;
        std::fs::write(path, data).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    /// Load a cached group, verifying it against a fresh form enumeration and
    /// basic group axioms before trusting the composition table.
    pub fn load_cache(order: QuadOrder, path: &Path) -> Result<Rc<PicGroup>> {
        let data = std::fs::read_to_string(path)
            .map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
        let file: PicCacheFile =
            serde_json::from_str(&data).map_err(|e| Error::Cache(e.to_string()))?;
        if file.d != order.d || file.cond != order.cond {
            return Err(Error::Cache("cache file is for a different order".into()));
        }
        let forms: Vec<BinaryForm> = file
            .forms
            .iter()
            .map(|&(a, b, c)| BinaryForm { a, b, c })
            .collect();
        if forms != reduced_forms(order.disc()) {
            return Err(Error::Cache("cached forms disagree with enumeration".into()));
        }
        let h = forms.len();
        if file.mul_table.len() != h || file.mul_table.iter().any(|r| r.len() != h) {
            return Err(Error::Cache("cached table has wrong shape".into()));
        }
        // Integrity: the table is symmetric and satisfies the group axioms
        // for identity and inverses; only then is it trusted as a memo seed.
        for i in 0..h {
            for j in 0..i {
                if file.mul_table[i][j] != file.mul_table[j][i] {
                    return Err(Error::Cache("cached table not commutative".into()));
                }
            }
        }
        let index: HashMap<_, _> = forms.iter().copied().zip(0..).collect();
        let mut seed = HashMap::with_capacity(h * (h + 1) / 2);
        for (i, row) in file.mul_table.iter().enumerate() {
            for (j, &k) in row.iter().enumerate().skip(i) {
                if k >= h {
                    return Err(Error::Cache("cached table index out of range".into()));
                }
                seed.insert((i, j), k);
            }
        }
        let group = Self::from_parts(order, forms, index, seed);
        for i in 0..h {
            if group.mul(group.id, i) != i || group.mul(i, group.inv(i)) != group.id {
                return Err(Error::Cache("cached table violates group axioms".into()));
            }
        }
        Ok(Rc::new(group))
    }
}

/// The standard lattice of a form: `Z·a + Z·(b + c_ord·sqrt(D))/2` where
/// `c_ord` is the conductor (so `b + c_ord·sqrt(D) = b + sqrt(disc)`).
pub fn form_lattice(order: &QuadOrder, f: &BinaryForm) -> Lattice {
    assert_eq!(f.disc(), order.disc(), "form_lattice: discriminant mismatch");
    Lattice::from_basis(
        order.d,
        KElem::from_parts(order.d, f.a, 1, 0, 1),
        KElem::from_parts(order.d, f.b, 2, order.cond as i64, 2),
    )
}

/// The reduced form of a proper ideal lattice of `order`:
/// `(N(b1), Tr(conj(b1)·b2), N(b2)) / N(L)` on the oriented canonical basis.
pub fn class_form_of_lattice(order: &QuadOrder, l: &Lattice) -> Result<BinaryForm> {
    assert_eq!(l.d, order.d);
    let n = order.ideal_norm(l);
    let [b1, b2] = &l.basis;
    let a = b1.norm() / &n;
    let b = b1.conj().mul(b2).trace() / &n;
    let c = b2.norm() / &n;
    let to_i64 = |q: &BigRational| -> Result<i64> {
        if !q.is_integer() {
            return Err(Error::NotProper(format!("non-integral form coefficient {q}")));
        }
        q.to_integer()
            .to_i64()
            .ok_or_else(|| Error::NotProper("form coefficient overflow".into()))
    };
    let f = BinaryForm { a: to_i64(&a)?, b: to_i64(&b)?, c: to_i64(&c)? };
    if f.disc() != order.disc() {
        return Err(Error::NotProper(format!(
            "lattice has discriminant {} as a module, expected {}",
            f.disc(),
            order.disc()
        )));
    }
    if !f.is_primitive() {
        return Err(Error::NotProper("norm form is imprimitive".into()));
    }
    Ok(f.reduced())
}

/// The multiplier order and class of an arbitrary rank-2 lattice in `K`:
/// normalises the norm form to a primitive one and reads off the conductor.
pub fn multiplier_class(d: i64, l: &Lattice) -> Result<(QuadOrder, BinaryForm)> {
    let [b1, b2] = &l.basis;
    let a = b1.norm();
    let b = b1.conj().mul(b2).trace();
    let c = b2.norm();
    // Divide by the positive rational content to get a primitive integer form.
    let denom_lcm = num_integer::lcm(
        num_integer::lcm(a.denom().clone(), b.denom().clone()),
        c.denom().clone(),
    );
    let scale = BigRational::from(denom_lcm);
    let ai = (&a * &scale).to_integer();
    let bi = (&b * &scale).to_integer();
    let ci = (&c * &scale).to_integer();
    let content = num_integer::gcd(num_integer::gcd(ai.clone(), bi.clone()), ci.clone());
    assert!(!content.is_zero());
    let to_i64 = |x: BigInt| x.to_i64().expect("multiplier_class: coefficient overflow");
    let f = BinaryForm {
        a: to_i64(&ai / &content),
        b: to_i64(&bi / &content),
        c: to_i64(&ci / &content),
    };
    let disc = f.disc();
    if disc >= 0 || disc % d != 0 {
        return Err(Error::NotProper(format!("lattice norm form has disc {disc}")));
    }
    let ratio = disc / d;
    let cond = crate::arith::perfect_sqrt(ratio)
        .ok_or_else(|| Error::NotProper(format!("disc ratio {ratio} is not a square")))?;
    Ok((QuadOrder::new(d, cond as u64), f.reduced()))
}

/// A lazily-populated family of Picard groups of varying conductor over one
/// field, with optional JSON caching for the pure `p^s` conductors.
/// Image in `Pic(O_to)` of class `a` of `Pic(O_from)` by integer form
/// arithmetic: move to an equivalent form whose first coefficient `v` is
/// coprime to twice the conductor ratio `ℓ`, extend the ideal
/// `vZ + (b + ℓ√disc_to)/2·Z` to the smaller order by solving
/// `ℓ·β ≡ b (mod 2v)` with the parity of `disc_to`, and reduce
/// `(v, β, (β² − disc_to)/(4v))`. Returns `None` when no small coprime value
/// is found (the caller falls back to the lattice route).
fn project_form_fast(from: &PicGroup, to: &PicGroup, a: usize) -> Option<usize> {
    let ell = (from.order.cond / to.order.cond) as i64;
    assert!(ell > 1 && from.order.cond % to.order.cond == 0);
    let f = from.forms[a];
    let m = 2 * ell;
    let mut pick = None;
    'grid: for x in 0i64..=6 {
        for y in -6i64..=6 {
            if gcd_i64(x, y).abs() != 1 {
                continue;
            }
            let v = f.eval(x, y);
            if gcd_i64(v, m).abs() == 1 {
                pick = Some((x, y, v));
                break 'grid;
            }
        }
    }
    let (x, y, v) = pick?;
    // Unimodular completion x·w − y·u = 1 via the extended Euclid relation
    // x·s + y·t = 1; the transformed form is (v, bb, ·), still of the source
    // discriminant.
    let (s, t) = egcd_unit(x, y)?;
    let (u, w) = (-t, s);
    let bb = 2 * f.a * x * u + f.b * (x * w + y * u) + 2 * f.c * y * w;
    let disc2 = to.order.disc();
    debug_assert_eq!(
        bb as i128 * bb as i128 - 4 * v as i128 * f.eval(u, w) as i128,
        from.order.disc() as i128
    );
    let two_v = 2 * v.abs();
    let beta = if ell % 2 == 1 {
        (mod_inverse((ell % two_v) as i128, two_v as i128) * (bb.rem_euclid(two_v)) as i128
            % two_v as i128) as i64
    } else {
        // gcd(ℓ, 2v) = 2 (v is odd): solve (ℓ/2)·β ≡ bb/2 (mod v), then pick
        // the lift mod 2v whose parity matches disc_to.
        debug_assert_eq!(bb % 2, 0);
        let vv = v.abs();
        let half = ((ell / 2).rem_euclid(vv)) as i128;
        let b0 = (mod_inverse(half, vv as i128) * ((bb / 2).rem_euclid(vv)) as i128
            % vv as i128) as i64;
        if (b0 - disc2).rem_euclid(2) == 0 {
            b0
        } else {
            b0 + vv
        }
    };
    // Centre β in (−v, v] and finish in wide arithmetic.
    let mut beta = beta.rem_euclid(two_v);
    if beta > v.abs() {
        beta -= two_v;
    }
    let num = beta as i128 * beta as i128 - disc2 as i128;
    if num % (4 * v as i128) != 0 {
        return None;
    }
    let g = reduced_wide(v as i128, beta as i128, num / (4 * v as i128));
    to.class_of_form(&g)
}

/// Bezout coefficients `(s, t)` with `x·s + y·t = 1`, if `gcd(x, y) = ±1`.
fn egcd_unit(x: i64, y: i64) -> Option<(i64, i64)> {
    let (mut r0, mut r1) = (x, y);
    let (mut s0, mut s1) = (1i64, 0i64);
    let (mut t0, mut t1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    match r0 {
        1 => Some((s0, t0)),
        -1 => Some((-s0, -t0)),
        _ => None,
    }
}

pub struct PicFamily {
    pub d: i64,
    pub p: u64,
    cache_dir: Option<PathBuf>,
    groups: RefCell<BTreeMap<u64, Rc<PicGroup>>>,
    projections: RefCell<BTreeMap<(u64, u64), Rc<ProjMap>>>,
}

/// Cached projection `Pic(O_from) -> Pic(O_to)` between two conductors of a
/// family, with its fibres.
pub struct ProjMap {
    /// `map[a]` is the image class of `a`.
    pub map: Vec<usize>,
    /// `fibers[e]` lists the source classes mapping to `e`.
    pub fibers: Vec<Vec<usize>>,
}

impl PicFamily {
    pub fn new(d: i64, p: u64, cache_dir: Option<PathBuf>) -> Self {
        PicFamily {
            d,
            p,
            cache_dir,
            groups: RefCell::new(BTreeMap::new()),
            projections: RefCell::new(BTreeMap::new()),
        }
    }

    /// The projection map from conductor `from_cond` down to `to_cond`
    /// (`to_cond | from_cond`), computed once per pair and shared.
    pub fn projection(&self, from_cond: u64, to_cond: u64) -> Result<Rc<ProjMap>> {
        assert!(
            from_cond % to_cond == 0,
            "projection: target conductor must divide source conductor"
        );
        if let Some(pm) = self.projections.borrow().get(&(from_cond, to_cond)) {
            return Ok(Rc::clone(pm));
        }
        let from = self.group(from_cond);
        let to = self.group(to_cond);
        let mut map = Vec::with_capacity(from.h());
        let mut fibers = vec![Vec::new(); to.h()];
        for a in 0..from.h() {
            let e = match project_form_fast(&from, &to, a) {
                Some(e) => e,
                None => from.project_class(&to, a)?,
            };
            map.push(e);
            fibers[e].push(a);
        }
        let pm = Rc::new(ProjMap { map, fibers });
        self.projections
            .borrow_mut()
            .insert((from_cond, to_cond), Rc::clone(&pm));
        Ok(pm)
    }

    /// The group of conductor `cond`, computed or loaded on first use.
    pub fn group(&self, cond: u64) -> Rc<PicGroup> {
        if let Some(g) = self.groups.borrow().get(&cond) {
            return Rc::clone(g);
        }
        let order = QuadOrder::new(self.d, cond);
        let g = self
            .cache_path(cond)
            .and_then(|path| {
                if path.exists() {
                    PicGroup::load_cache(order, &path).ok()
                } else {
                    let g = PicGroup::compute(order);
                    let _ = g.save_cache(&path);
                    Some(g)
                }
            })
            .unwrap_or_else(|| PicGroup::compute(order));
        self.groups.borrow_mut().insert(cond, Rc::clone(&g));
        g
    }

    /// The group of conductor `p^s`.
    pub fn group_s(&self, s: u32) -> Rc<PicGroup> {
        self.group(self.p.pow(s))
    }

    fn cache_path(&self, cond: u64) -> Option<PathBuf> {
        // Only pure p-power conductors are cached (they are the expensive ones).
        let dir = self.cache_dir.as_ref()?;
        let mut c = cond;
        let mut s = 0u32;
        while c % self.p == 0 {
            c /= self.p;
            s += 1;
        }
        if c != 1 {
            return None;
        }
        Some(dir.join(format!("pic_D{}_p{}_s{}.json", self.d, self.p, s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setting() -> QuadSetting {
        QuadSetting::new(-7, 11, 2).unwrap()
    }

    #[test]
    fn setting_validation() {
        assert!(QuadSetting::new(-7, 11, 2).is_ok());
        assert!(QuadSetting::new(-7, 3, 2).is_err()); // 3 inert
        assert!(QuadSetting::new(-7, 11, 3).is_err()); // 3 inert, bad level
        assert!(QuadSetting::new(-3, 7, 1).is_err()); // extra units
        assert!(QuadSetting::new(-8, 3, 1).is_err()); // even discriminant
    }

    #[test]
    fn group_structure_conductor_11() {
        let pic = PicGroup::compute(setting().order(1));
        assert_eq!(pic.h(), 10);
        assert_eq!(pic.order.class_number_formula().unwrap(), 10);
        // Z/10: one element of order 2, cyclic.
        assert_eq!(pic.two_torsion().len(), 2);
        let orders: Vec<usize> = (0..10)
            .map(|i| (1..=10).find(|&k| pic.pow(i, k as i64) == pic.id).unwrap())
            .collect();
        assert!(orders.contains(&10), "group must be cyclic of order 10");
        assert_eq!(pic.square_classes().len(), 5);
    }

    #[test]
    fn form_lattice_roundtrip() {
        for order in [QuadOrder::new(-7, 1), QuadOrder::new(-7, 11), QuadOrder::new(-23, 1)] {
            for f in reduced_forms(order.disc()) {
                let l = form_lattice(&order, &f);
                // The lattice is an O-module of norm a.
                assert_eq!(l.mul(&order.lattice()), l);
                assert_eq!(order.ideal_norm(&l), rat(f.a, 1));
                assert_eq!(class_form_of_lattice(&order, &l).unwrap(), f);
            }
        }
    }

    #[test]
    fn known_composition_disc_15() {
        // Pic of disc -15 is Z/2: the non-principal class squares to the identity.
        let order = QuadOrder::new(-15, 1);
        let pic = PicGroup::compute(order);
        assert_eq!(pic.h(), 2);
        let non_id = 1 - pic.id;
        assert_eq!(pic.mul(non_id, non_id), pic.id);
    }

    #[test]
    fn r_counts_disc_7() {
        let pic = PicGroup::compute(QuadOrder::new(-7, 1));
        // Split prime 2: two ideals; inert 3: none; ramified 7: one; 4 = p·pbar etc.
        assert_eq!(pic.r_count(pic.id, 1), 1);
        assert_eq!(pic.r_count(pic.id, 2), 2);
        assert_eq!(pic.r_count(pic.id, 3), 0);
        assert_eq!(pic.r_count(pic.id, 7), 1);
        assert_eq!(pic.r_count(pic.id, 4), 3);
        pic.ensure_r_tables(100);
        for n in 1..=100 {
            let f = pic.forms[pic.id];
            assert_eq!(
                pic.r_count(pic.id, n),
                (form_representations(f.a, f.b, f.c, n).len() / 2) as u64
            );
        }
    }

    #[test]
    fn genus_character_disc_15() {
        // Class of a norm-2 ideal in disc -15; chi_{5,-3} = (5|2) = -1.
        let pic = PicGroup::compute(QuadOrder::new(-15, 1));
        let cls = (0..2).find(|&i| pic.r_count(i, 2) > 0).unwrap();
        assert_eq!(pic.genus_character(cls, 5).unwrap(), -1);
        assert_eq!(pic.genus_character(pic.id, 5).unwrap(), 1);
    }

    #[test]
    fn ds_class_has_order_two() {
        let pic = PicGroup::compute(setting().order(1));
        let ds = pic.ds_class().unwrap();
        assert_ne!(ds, pic.id);
        assert_eq!(pic.mul(ds, ds), pic.id);
    }

    #[test]
    fn projection_kernel_size() {
        let fam = PicFamily::new(-7, 11, None);
        let p2 = fam.group_s(2);
        let p1 = fam.group_s(1);
        let p0 = fam.group_s(0);
        // h(O_2)/h(O_1) = 110/10 = 11; h(O_1)/h(O_K) = 10.
        assert_eq!(p2.projection_kernel(&p1).unwrap().len(), 11);
        assert_eq!(p1.projection_kernel(&p0).unwrap().len(), 10);
        // Projection is a homomorphism.
        for a in 0..p1.h() {
            for b in 0..p1.h() {
                let lhs = p1.project_class(&p0, p1.mul(a, b)).unwrap();
                let rhs = p0.mul(
                    p1.project_class(&p0, a).unwrap(),
                    p1.project_class(&p0, b).unwrap(),
                );
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn ideal_in_class_constructor() {
        let pic = PicGroup::compute(setting().order(1));
        for a in 0..pic.h() {
            let nu = pic.representative_norm_coprime(a, 7 * 11).unwrap();
            let l = pic.ideal_in_class(a, nu).unwrap();
            assert_eq!(pic.class_of_lattice(&l).unwrap(), a);
            assert_eq!(pic.order.ideal_norm(&l), rat(nu as i64, 1));
            // Integral: contained in the order.
            assert!(pic.order.lattice().contains_lattice(&l));
        }
    }

    #[test]
    fn fast_projection_matches_lattice_projection() {
        let fam = PicFamily::new(-7, 11, None);
        for (from_cond, to_cond) in [(11u64, 1u64), (22, 11), (66, 6), (121, 11), (242, 121)] {
            let from = fam.group(from_cond);
            let to = fam.group(to_cond);
            let pm = fam.projection(from_cond, to_cond).unwrap();
            for a in 0..from.h() {
                assert_eq!(
                    pm.map[a],
                    from.project_class(&to, a).unwrap(),
                    "projection {from_cond} -> {to_cond} disagrees at class {a}"
                );
                assert_eq!(
                    project_form_fast(&from, &to, a),
                    Some(pm.map[a]),
                    "fast route must not fall back at {from_cond} -> {to_cond}, class {a}"
                );
            }
        }
    }

    #[test]
    fn classes_representing_matches_r_count() {
        for cond in [1u64, 6, 11] {
            let pic = PicGroup::compute(QuadOrder::new(-7, cond));
            for n in 1..=50i64 {
                let sparse: BTreeMap<usize, u64> =
                    pic.classes_representing(n).into_iter().collect();
                for a in 0..pic.h() {
                    assert_eq!(
                        sparse.get(&a).copied().unwrap_or(0),
                        pic.r_count(a, n),
                        "cond {cond} class {a} n {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let fam = PicFamily::new(-7, 11, Some(dir.path().to_path_buf()));
        let g1 = fam.group_s(1);
        let path = dir.path().join("pic_D-7_p11_s1.json");
        assert!(path.exists());
        let g2 = PicGroup::load_cache(QuadOrder::new(-7, 11), &path).unwrap();
        assert_eq!(g1.forms, g2.forms);
        for i in 0..g1.h() {
            for j in i..g1.h() {
                assert_eq!(g1.mul(i, j), g2.mul(i, j), "product ({i},{j}) disagrees");
            }
        }
    }

    #[test]
    fn multiplier_order_detection() {
        // Z + 2·O_K inside O_K for D = -7 has conductor 2.
        let ok = QuadOrder::new(-7, 1);
        let l = Lattice::from_basis(
            -7,
            KElem::from_parts(-7, 1, 1, 0, 1),
            KElem::from_parts(-7, 1, 1, 1, 1),
        );
        let (ord2, f) = multiplier_class(-7, &l).unwrap();
        assert_eq!(ord2.cond, 2);
        assert_eq!(f, BinaryForm::principal(-28));
        let (ord1, _) = multiplier_class(-7, &ok.lattice()).unwrap();
        assert_eq!(ord1.cond, 1);
    }
}
