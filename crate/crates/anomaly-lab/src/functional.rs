//! Polynomial functionals on `L[1] ⊕ S`: the free bigraded-commutative algebra
//! on the duals `c*_i`, `φ*_a`, `ξ*_a` with ħ-series coefficients.
//!
//! Multiplication signs are read from a [`KoszulTable`] so that a corrupted
//! table can be injected and detected by the identity suites.

use crate::error::{LabError, Result};
use crate::graded::{koszul_swap_sign, Bidegree};
use crate::scalar::Q;
use num_traits::{One, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Generator family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Class {
    C = 0,
    Phi = 1,
    Xi = 2,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::C, Class::Phi, Class::Xi];

    pub fn degree(self) -> Bidegree {
        match self {
            Class::C => Bidegree::new(1, 0),
            Class::Phi => Bidegree::new(0, 1),
            Class::Xi => Bidegree::new(-1, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Gen {
    pub class: Class,
    pub idx: u16,
}

impl Gen {
    pub fn c(i: usize) -> Gen {
        Gen { class: Class::C, idx: i as u16 }
    }
    pub fn phi(i: usize) -> Gen {
        Gen { class: Class::Phi, idx: i as u16 }
    }
    pub fn xi(i: usize) -> Gen {
        Gen { class: Class::Xi, idx: i as u16 }
    }
    pub fn degree(self) -> Bidegree {
        self.class.degree()
    }
    pub fn is_field(self) -> bool {
        self.class != Class::C
    }
}

/// Swap signs between generator classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KoszulTable {
    pub s: [[i8; 3]; 3],
}

impl KoszulTable {
    pub fn standard() -> Self {
        let mut s = [[1i8; 3]; 3];
        for a in Class::ALL {
            for b in Class::ALL {
                s[a as usize][b as usize] = koszul_swap_sign(a.degree(), b.degree());
            }
        }
        KoszulTable { s }
    }

    /// Flip the sign between classes `a` and `b` (both orders).
    pub fn with_fault(mut self, a: Class, b: Class) -> Self {
        self.s[a as usize][b as usize] *= -1;
        if a != b {
            self.s[b as usize][a as usize] *= -1;
        }
        self
    }

    #[inline]
    pub fn sign(&self, a: Gen, b: Gen) -> i8 {
        self.s[a.class as usize][b.class as usize]
    }
}

impl Default for KoszulTable {
    fn default() -> Self {
        Self::standard()
    }
}

/// Truncation caps: c*-degree, ξ*-degree and ħ-order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub l: usize,
    pub xi: usize,
    pub hbar: i32,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { l: 4, xi: 4, hbar: 2 }
    }
}

/// Shared context: generator counts, caps, sign table, overflow counter.
#[derive(Debug)]
pub struct Algebra {
    pub n_c: usize,
    pub n_s: usize,
    pub caps: Caps,
    pub table: KoszulTable,
    overflow: Arc<AtomicU64>,
}

impl Clone for Algebra {
    fn clone(&self) -> Self {
        Algebra { n_c: self.n_c, n_s: self.n_s, caps: self.caps, table: self.table, overflow: self.overflow.clone() }
    }
}

impl Algebra {
    pub fn new(n_c: usize, n_s: usize, caps: Caps) -> Self {
        Algebra { n_c, n_s, caps, table: KoszulTable::standard(), overflow: Arc::new(AtomicU64::new(0)) }
    }

    pub fn with_table(&self, table: KoszulTable) -> Self {
        Algebra { table, ..self.clone() }
    }

    /// Same generators and table, different caps, shared overflow counter.
    pub fn with_caps(&self, caps: Caps) -> Self {
        Algebra { caps, ..self.clone() }
    }

    /// Different caps and a private overflow counter (for scratch computations).
    pub fn scratch(&self, caps: Caps) -> Self {
        Algebra { caps, overflow: Arc::new(AtomicU64::new(0)), ..self.clone() }
    }

    /// Widen the ξ*-cap (and the ħ-cap) by `margin`.
    pub fn widened(&self, margin: usize) -> Self {
        self.scratch(Caps { l: self.caps.l, xi: self.caps.xi + margin, hbar: self.caps.hbar + margin as i32 })
    }

    pub fn overflow_count(&self) -> u64 {
        self.overflow.load(Ordering::Relaxed)
    }

    fn note_overflow(&self) {
        self.overflow.fetch_add(1, Ordering::Relaxed);
    }

    /// Canonical form of a generator word: `(sign, monomial)`, or `None` when
    /// a generator with `s(x,x) = −1` repeats.
    pub fn canonicalize(&self, mut word: Vec<Gen>) -> Option<(i8, Monomial)> {
        let mut sign = 1i8;
        // Insertion sort; each transposition of distinct neighbours contributes its table sign.
        for i in 1..word.len() {
            let mut j = i;
            while j > 0 && word[j - 1] > word[j] {
                sign *= self.table.sign(word[j - 1], word[j]);
                word.swap(j - 1, j);
                j -= 1;
            }
        }
        for w in word.windows(2) {
            if w[0] == w[1] && self.table.sign(w[0], w[0]) < 0 {
                return None;
            }
        }
        Some((sign, Monomial { gens: word }))
    }

    pub fn within_caps(&self, m: &Monomial) -> bool {
        m.count(Class::C) <= self.caps.l && m.count(Class::Xi) <= self.caps.xi
    }

    /// Product of two canonical monomials.
    pub fn mul_mono(&self, a: &Monomial, b: &Monomial) -> Option<(i8, Monomial)> {
        let mut w = Vec::with_capacity(a.len() + b.len());
        w.extend_from_slice(&a.gens);
        w.extend_from_slice(&b.gens);
        self.canonicalize(w)
    }

    /// Every canonical monomial within the caps (standard sign table).
    pub fn basis_monomials(&self) -> Vec<Monomial> {
        self.basis_monomials_bounded(usize::MAX)
    }

    /// Canonical monomials within the caps with at most `max_fields` field generators.
    pub fn basis_monomials_bounded(&self, max_fields: usize) -> Vec<Monomial> {
        let mut out = Vec::new();
        let subsets = |n: usize, max: usize, class: Class| -> Vec<Vec<Gen>> {
            let mut v = Vec::new();
            for mask in 0u64..(1u64 << n) {
                if (mask.count_ones() as usize) <= max {
                    v.push((0..n).filter(|i| mask & (1 << i) != 0).map(|i| Gen { class, idx: i as u16 }).collect());
                }
            }
            v
        };
        let cs = subsets(self.n_c, self.caps.l, Class::C);
        let ps = subsets(self.n_s, self.n_s.min(max_fields), Class::Phi);
        let mut xs: Vec<Vec<Gen>> = vec![vec![]];
        let mut frontier: Vec<Vec<Gen>> = vec![vec![]];
        for _ in 0..self.caps.xi.min(max_fields) {
            let mut next = Vec::new();
            for w in &frontier {
                let start = w.last().map_or(0, |g: &Gen| g.idx as usize);
                for i in start..self.n_s {
                    let mut w2 = w.clone();
                    w2.push(Gen::xi(i));
                    next.push(w2);
                }
            }
            xs.extend(next.iter().cloned());
            frontier = next;
        }
        for c in &cs {
            for p in &ps {
                for x in &xs {
                    let mut g = c.clone();
                    g.extend_from_slice(p);
                    if p.len() + x.len() > max_fields {
                        continue;
                    }
                    g.extend_from_slice(x);
                    out.push(Monomial { gens: g });
                }
            }
        }
        out.sort();
        out
    }
}

/// Canonically ordered generator word.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial {
    pub gens: Vec<Gen>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial { gens: vec![] }
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn count(&self, c: Class) -> usize {
        self.gens.iter().filter(|g| g.class == c).count()
    }

    pub fn field_degree(&self) -> usize {
        self.gens.iter().filter(|g| g.is_field()).count()
    }

    pub fn degree(&self) -> Bidegree {
        self.gens.iter().fold(Bidegree::ZERO, |d, g| d.add(g.degree()))
    }

    pub fn without(&self, skip: &[usize]) -> Monomial {
        Monomial { gens: self.gens.iter().enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, g)| *g).collect() }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.gens.is_empty() {
            return write!(f, "1");
        }
        let mut i = 0;
        let mut first = true;
        while i < self.gens.len() {
            let g = self.gens[i];
            let mut k = 1;
            while i + k < self.gens.len() && self.gens[i + k] == g {
                k += 1;
            }
            if !first {
                write!(f, " ")?;
            }
            first = false;
            let name = match g.class {
                Class::C => "c",
                Class::Phi => "p",
                Class::Xi => "x",
            };
            write!(f, "{name}{}", g.idx)?;
            if k > 1 {
                write!(f, "^{k}")?;
            }
            i += k;
        }
        Ok(())
    }
}

/// Finite sum of `coefficient · ħ^k · monomial`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Functional {
    terms: BTreeMap<(Monomial, i32), Q>,
}

impl Functional {
    pub fn zero() -> Self {
        Functional::default()
    }

    pub fn constant(c: Q) -> Self {
        let mut f = Functional::zero();
        f.add_term(Monomial::one(), 0, c);
        f
    }

    pub fn one() -> Self {
        Self::constant(Q::one())
    }

    /// A single generator (no cap check).
    pub fn gen(g: Gen) -> Self {
        let mut f = Functional::zero();
        f.add_term(Monomial { gens: vec![g] }, 0, Q::one());
        f
    }

    /// `coef · ħ^k · word`, canonicalized.
    pub fn word(alg: &Algebra, word: Vec<Gen>, k: i32, coef: Q) -> Self {
        let mut f = Functional::zero();
        if let Some((s, m)) = alg.canonicalize(word) {
            f.push(alg, m, k, if s > 0 { coef } else { -coef });
        }
        f
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, i32, &Q)> {
        self.terms.iter().map(|((m, k), c)| (m, *k, c))
    }

    pub fn coeff(&self, m: &Monomial, k: i32) -> Q {
        self.terms.get(&(m.clone(), k)).cloned().unwrap_or_else(Q::zero)
    }

    /// Raw accumulation without cap checks.
    pub fn add_term(&mut self, m: Monomial, k: i32, c: Q) {
        if c.is_zero() {
            return;
        }
        let key = (m, k);
        match self.terms.get_mut(&key) {
            Some(v) => {
                *v += c;
                if v.is_zero() {
                    self.terms.remove(&key);
                }
            }
            None => {
                self.terms.insert(key, c);
            }
        }
    }

    /// Accumulate, dropping (and counting) anything beyond the caps.
    pub fn push(&mut self, alg: &Algebra, m: Monomial, k: i32, c: Q) {
        if c.is_zero() {
            return;
        }
        if !alg.within_caps(&m) || k > alg.caps.hbar {
            alg.note_overflow();
            return;
        }
        self.add_term(m, k, c);
    }

    pub fn add(&self, o: &Functional) -> Functional {
        let mut out = self.clone();
        for ((m, k), c) in &o.terms {
            out.add_term(m.clone(), *k, c.clone());
        }
        out
    }

    pub fn sub(&self, o: &Functional) -> Functional {
        let mut out = self.clone();
        for ((m, k), c) in &o.terms {
            out.add_term(m.clone(), *k, -c.clone());
        }
        out
    }

    pub fn scale(&self, s: &Q) -> Functional {
        if s.is_zero() {
            return Functional::zero();
        }
        Functional { terms: self.terms.iter().map(|(k, c)| (k.clone(), c.clone() * s.clone())).collect() }
    }

    pub fn neg(&self) -> Functional {
        self.scale(&-Q::one())
    }

    /// Multiply by `ħ^k`.
    pub fn shift_hbar(&self, k: i32) -> Functional {
        Functional { terms: self.terms.iter().map(|((m, p), c)| ((m.clone(), p + k), c.clone())).collect() }
    }

    /// Coefficient of `ħ^k` as an ħ-independent functional.
    pub fn hbar_part(&self, k: i32) -> Functional {
        Functional {
            terms: self.terms.iter().filter(|((_, p), _)| *p == k).map(|((m, _), c)| ((m.clone(), 0), c.clone())).collect(),
        }
    }

    pub fn min_hbar(&self) -> Option<i32> {
        self.terms.keys().map(|(_, k)| *k).min()
    }

    pub fn max_hbar(&self) -> Option<i32> {
        self.terms.keys().map(|(_, k)| *k).max()
    }

    /// Evaluate at `ħ = 1`.
    pub fn at_hbar_one(&self) -> Functional {
        let mut out = Functional::zero();
        for ((m, _), c) in &self.terms {
            out.add_term(m.clone(), 0, c.clone());
        }
        out
    }

    /// Drop terms exceeding the given caps (no counting).
    pub fn truncate(&self, caps: Caps) -> Functional {
        Functional {
            terms: self
                .terms
                .iter()
                .filter(|((m, k), _)| m.count(Class::C) <= caps.l && m.count(Class::Xi) <= caps.xi && *k <= caps.hbar)
                .map(|(k, c)| (k.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn filter(&self, pred: impl Fn(&Monomial, i32) -> bool) -> Functional {
        Functional {
            terms: self.terms.iter().filter(|((m, k), _)| pred(m, *k)).map(|(k, c)| (k.clone(), c.clone())).collect(),
        }
    }

    /// Split into pieces of fixed bidegree.
    pub fn homogeneous_parts(&self) -> BTreeMap<Bidegree, Functional> {
        let mut out: BTreeMap<Bidegree, Functional> = BTreeMap::new();
        for ((m, k), c) in &self.terms {
            out.entry(m.degree()).or_default().add_term(m.clone(), *k, c.clone());
        }
        out
    }

    pub fn mul(&self, alg: &Algebra, o: &Functional) -> Functional {
        let mut out = Functional::zero();
        for ((ma, ka), ca) in &self.terms {
            for ((mb, kb), cb) in &o.terms {
                if let Some((s, m)) = alg.mul_mono(ma, mb) {
                    let c = ca.clone() * cb.clone();
                    out.push(alg, m, ka + kb, if s > 0 { c } else { -c });
                }
            }
        }
        out
    }

    /// Largest absolute coefficient (as `f64`).
    pub fn max_abs(&self) -> f64 {
        use crate::scalar::Scalar;
        self.terms.values().map(|c| c.abs_f64()).fold(0.0, f64::max)
    }

    /// Sorted `coefficient<TAB>hbar^k<TAB>monomial` lines.
    pub fn debug_text(&self) -> String {
        let mut s = String::new();
        for ((m, k), c) in &self.terms {
            s.push_str(&format!("{c}\thbar^{k}\t{m}\n"));
        }
        s
    }

    /// Apply a linear operator defined on monomials, term by term (parallel over terms).
    pub fn map_linear(&self, f: impl Fn(&Monomial) -> Functional + Sync + Send) -> Functional {
        let items: Vec<(&(Monomial, i32), &Q)> = self.terms.iter().collect();
        let parts = crate::par::map(&items, |((m, k), c)| f(m).shift_hbar(*k).scale(c));
        let mut out = Functional::zero();
        for p in parts {
            for ((m, k), c) in p.terms {
                out.add_term(m, k, c);
            }
        }
        out
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.debug_text())
    }
}

/// Graded derivation of fixed bidegree, determined by its values on generators.
#[derive(Clone, Debug)]
pub struct Derivation {
    pub degree: Bidegree,
    pub images: BTreeMap<Gen, Functional>,
}

impl Derivation {
    pub fn zero(degree: Bidegree) -> Self {
        Derivation { degree, images: BTreeMap::new() }
    }

    pub fn set(&mut self, g: Gen, f: Functional) {
        if f.is_zero() {
            self.images.remove(&g);
        } else {
            self.images.insert(g, f);
        }
    }

    pub fn apply_mono(&self, alg: &Algebra, m: &Monomial) -> Functional {
        let mut out = Functional::zero();
        let mut eps = 1i8;
        for (i, g) in m.gens.iter().enumerate() {
            if let Some(img) = self.images.get(g) {
                for (im, ik, ic) in img.terms() {
                    let mut w = Vec::with_capacity(m.len() + im.len());
                    w.extend_from_slice(&m.gens[..i]);
                    w.extend_from_slice(&im.gens);
                    w.extend_from_slice(&m.gens[i + 1..]);
                    if let Some((s, mm)) = alg.canonicalize(w) {
                        let c = ic.clone();
                        out.push(alg, mm, ik, if s * eps > 0 { c } else { -c });
                    }
                }
            }
            eps *= koszul_swap_sign(self.degree, g.degree());
        }
        out
    }

    pub fn apply(&self, alg: &Algebra, f: &Functional) -> Functional {
        if self.images.is_empty() {
            return Functional::zero();
        }
        f.map_linear(|m| self.apply_mono(alg, m))
    }

    pub fn add(&self, o: &Derivation) -> Derivation {
        assert_eq!(self.degree, o.degree);
        let mut out = self.clone();
        for (g, f) in &o.images {
            let v = out.images.get(g).map_or_else(|| f.clone(), |x| x.add(f));
            out.set(*g, v);
        }
        out
    }
}

/// Constant-coefficient second-order operator `∂_K`, stored as the symmetric
/// pairing `κ(x, y)` on field-dual generators.
#[derive(Clone, Debug, Default)]
pub struct Contraction {
    pub kappa: BTreeMap<(Gen, Gen), Q>,
    pub degree: Bidegree,
}

/// Element of `S ⊗ S` in the basis `e_0..e_{n−1}, f_0..f_{n−1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoTensor {
    pub n: usize,
    pub coeffs: crate::linalg::QMat,
}

impl TwoTensor {
    pub fn zero(n: usize) -> Self {
        TwoTensor { n, coeffs: crate::linalg::QMat::zeros(2 * n, 2 * n) }
    }

    /// Degree of the `i`-th basis element of `S`.
    pub fn basis_degree(&self, i: usize) -> Bidegree {
        if i < self.n {
            Bidegree::new(0, 1)
        } else {
            Bidegree::new(1, 1)
        }
    }

    /// Plain interchange of tensor factors (no signs).
    pub fn interchange(&self) -> TwoTensor {
        TwoTensor { n: self.n, coeffs: self.coeffs.transpose() }
    }

    /// Koszul flip `τ(a⊗b) = (−1)^{|a||b|+π_aπ_b} b⊗a`.
    pub fn koszul_flip(&self) -> TwoTensor {
        let m = crate::linalg::QMat::from_fn(2 * self.n, 2 * self.n, |i, j| {
            let c = self.coeffs[(j, i)].clone();
            if koszul_swap_sign(self.basis_degree(i), self.basis_degree(j)) > 0 {
                c
            } else {
                -c
            }
        });
        TwoTensor { n: self.n, coeffs: m }
    }

    pub fn add(&self, o: &TwoTensor) -> TwoTensor {
        TwoTensor { n: self.n, coeffs: self.coeffs.add(&o.coeffs) }
    }

    pub fn sub(&self, o: &TwoTensor) -> TwoTensor {
        TwoTensor { n: self.n, coeffs: self.coeffs.sub(&o.coeffs) }
    }

    pub fn neg(&self) -> TwoTensor {
        TwoTensor { n: self.n, coeffs: self.coeffs.neg() }
    }

    /// Dual generator of basis element `i`.
    pub fn dual_gen(&self, i: usize) -> Gen {
        if i < self.n {
            Gen::phi(i)
        } else {
            Gen::xi(i - self.n)
        }
    }

    pub fn basis_of(&self, g: Gen) -> usize {
        match g.class {
            Class::Phi => g.idx as usize,
            Class::Xi => self.n + g.idx as usize,
            Class::C => panic!("c* is not dual to a field"),
        }
    }

    /// `⟨x ⊗ y, K⟩` with the Koszul evaluation `⟨ω₁⊗ω₂, w₁⊗w₂⟩ = (−1)^{|w₁||ω₂|+π_{w₁}π_{ω₂}} ω₁(w₁)ω₂(w₂)`.
    pub fn evaluate(&self, x: Gen, y: Gen) -> Q {
        let (i, j) = (self.basis_of(x), self.basis_of(y));
        let c = self.coeffs[(i, j)].clone();
        if koszul_swap_sign(self.basis_degree(i), y.degree()) > 0 {
            c
        } else {
            -c
        }
    }
}

impl Contraction {
    /// `κ(x, y) = ⟨x⊗y, K⟩ + s(x,y)⟨y⊗x, K⟩` for every pair of field duals.
    pub fn from_tensor(alg: &Algebra, k: &TwoTensor, degree: Bidegree) -> Self {
        let n = k.n;
        let mut kappa = BTreeMap::new();
        for i in 0..2 * n {
            for j in 0..2 * n {
                let (x, y) = (k.dual_gen(i), k.dual_gen(j));
                let a = k.evaluate(x, y);
                let b = k.evaluate(y, x);
                let v = if alg.table.sign(x, y) > 0 { a + b } else { a - b };
                if !v.is_zero() {
                    kappa.insert((x, y), v);
                }
            }
        }
        Contraction { kappa, degree }
    }

    pub fn scaled(&self, s: &Q) -> Contraction {
        Contraction {
            kappa: self.kappa.iter().map(|(k, v)| (*k, v.clone() * s.clone())).filter(|(_, v)| !v.is_zero()).collect(),
            degree: self.degree,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn kappa(&self, x: Gen, y: Gen) -> Q {
        self.kappa.get(&(x, y)).cloned().unwrap_or_else(Q::zero)
    }

    pub fn apply_mono(&self, alg: &Algebra, m: &Monomial) -> Functional {
        let mut out = Functional::zero();
        let g = &m.gens;
        for j in 0..g.len() {
            if !g[j].is_field() {
                continue;
            }
            for i in 0..j {
                if !g[i].is_field() {
                    continue;
                }
                let Some(k) = self.kappa.get(&(g[i], g[j])) else { continue };
                // Move g[i] to the front, then g[j] to the second slot.
                let mut s = 1i8;
                for l in 0..i {
                    s *= alg.table.sign(g[l], g[i]);
                }
                for l in 0..j {
                    if l != i {
                        s *= alg.table.sign(g[l], g[j]);
                    }
                }
                let rest = m.without(&[i, j]);
                out.push(alg, rest, 0, if s > 0 { k.clone() } else { -k.clone() });
            }
        }
        out
    }

    pub fn apply(&self, alg: &Algebra, f: &Functional) -> Functional {
        if self.kappa.is_empty() {
            return Functional::zero();
        }
        f.map_linear(|m| self.apply_mono(alg, m))
    }
}

/// Bracket from the Poisson defect of a second-order operator `Δ` of degree `deg`:
/// `{J, J'} = Δ(JJ') − Δ(J)J' − (−1)^{|J|} J Δ(J')`.
pub fn poisson_defect(alg: &Algebra, delta: &Contraction, a: &Functional, b: &Functional) -> Functional {
    let mut out = delta.apply(alg, &a.mul(alg, b));
    out = out.sub(&delta.apply(alg, a).mul(alg, b));
    for (d, part) in a.homogeneous_parts() {
        let t = part.mul(alg, &delta.apply(alg, b));
        out = if koszul_swap_sign(delta.degree, d) > 0 { out.sub(&t) } else { out.add(&t) };
    }
    out
}

/// `Σ_k x^k / k!` for nilpotent `x` (terminates by caps and fermionic exhaustion).
pub fn exp_nilpotent(alg: &Algebra, x: &Functional) -> Result<Functional> {
    let mut out = Functional::one();
    let mut term = Functional::one();
    for k in 1..=256i64 {
        term = term.mul(alg, x).scale(&Q::new(1.into(), k.into()));
        if term.is_zero() {
            return Ok(out);
        }
        out = out.add(&term);
    }
    Err(LabError::CapOverflow("exponential series did not terminate".into()))
}

/// `log(1 + y) = Σ_{k≥1} (−1)^{k+1} y^k / k` for nilpotent `y`.
pub fn log1p_nilpotent(alg: &Algebra, y: &Functional) -> Result<Functional> {
    let mut out = Functional::zero();
    let mut pow = Functional::one();
    for k in 1..=256i64 {
        pow = pow.mul(alg, y);
        if pow.is_zero() {
            return Ok(out);
        }
        let c = Q::new(if k % 2 == 1 { 1.into() } else { (-1).into() }, k.into());
        out = out.add(&pow.scale(&c));
    }
    Err(LabError::CapOverflow("logarithm series did not terminate".into()))
}

/// `exp(ħ ∂) f = Σ_m ħ^m ∂^m f / m!`.
pub fn exp_hbar_contraction(alg: &Algebra, p: &Contraction, f: &Functional) -> Result<Functional> {
    let mut out = f.clone();
    let mut term = f.clone();
    for m in 1..=256i64 {
        term = p.apply(alg, &term).shift_hbar(1).scale(&Q::new(1.into(), m.into()));
        term = term.filter(|_, k| k <= alg.caps.hbar);
        if term.is_zero() {
            return Ok(out);
        }
        out = out.add(&term);
    }
    Err(LabError::CapOverflow("exp(ħ∂_P) did not terminate".into()))
}

fn check_interaction(i: &Functional) -> Result<()> {
    if i.terms().any(|(m, _, _)| m.count(Class::C) == 0) {
        return Err(LabError::Input("RG flow needs every term of the interaction to contain a c* generator".into()));
    }
    Ok(())
}

/// Scratch algebra for Laurent-in-ħ intermediates of `W`: with every term of
/// the input carrying at least one `c*`, a factor `ħ^{−j}` comes with at least
/// `j` powers of `c*`, so powers above `N_ħ − 1 + N_L` cannot reach the result.
fn laurent_algebra(alg: &Algebra) -> Algebra {
    alg.scratch(Caps { hbar: alg.caps.hbar - 1 + alg.caps.l as i32, ..alg.caps })
}

fn finish_w(alg: &Algebra, logz: &Functional) -> Result<Functional> {
    let w = logz.shift_hbar(1);
    if let Some(k) = w.min_hbar() {
        if k < 0 {
            return Err(LabError::Identity(format!("W has a term of order ħ^{k}")));
        }
    }
    let mut out = Functional::zero();
    for (m, k, c) in w.terms() {
        out.push(alg, m.clone(), k, c.clone());
    }
    Ok(out)
}

/// RG flow `W(P, I) = ħ log(exp(ħ∂_P) exp(I/ħ))`.
pub fn rg_flow(alg: &Algebra, p: &Contraction, i: &Functional) -> Result<Functional> {
    check_interaction(i)?;
    let la = laurent_algebra(alg);
    let e = exp_nilpotent(&la, &i.shift_hbar(-1))?;
    let z = exp_hbar_contraction(&la, p, &e)?;
    let y = z.sub(&Functional::one());
    let logz = log1p_nilpotent(&la, &y)?;
    finish_w(alg, &logz)
}

/// Derivative of `W(P, ·)` at `I` in the direction `O`, computed as
/// `ħ · Z⁻¹ · exp(ħ∂_P)(exp(I/ħ) · O/ħ)` with `Z = exp(ħ∂_P)exp(I/ħ)`;
/// valid for even `εO` with `ε² = 0`.
pub fn rg_flow_tangent(alg: &Algebra, p: &Contraction, i: &Functional, o: &Functional) -> Result<Functional> {
    check_interaction(i)?;
    check_interaction(o)?;
    let la = laurent_algebra(alg);
    let e = exp_nilpotent(&la, &i.shift_hbar(-1))?;
    let z = exp_hbar_contraction(&la, p, &e)?;
    let z1 = exp_hbar_contraction(&la, p, &e.mul(&la, &o.shift_hbar(-1)))?;
    let y = z.sub(&Functional::one());
    // Z⁻¹ = Σ (−Y)^k.
    let mut zinv = Functional::one();
    let mut pow = Functional::one();
    for _ in 0..256 {
        pow = pow.mul(&la, &y).neg();
        if pow.is_zero() {
            break;
        }
        zinv = zinv.add(&pow);
    }
    finish_w(alg, &zinv.mul(&la, &z1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    fn alg() -> Algebra {
        Algebra::new(2, 3, Caps::default())
    }

    #[test]
    fn generator_rules() {
        let a = alg();
        let p1 = Functional::gen(Gen::phi(1));
        let p2 = Functional::gen(Gen::phi(2));
        assert!(p1.mul(&a, &p1).is_zero());
        assert_eq!(p2.mul(&a, &p1), p1.mul(&a, &p2).neg());
        let x1 = Functional::gen(Gen::xi(1));
        let x2 = Functional::gen(Gen::xi(2));
        assert_eq!(x1.mul(&a, &x2), x2.mul(&a, &x1));
        assert!(!x1.mul(&a, &x1).is_zero());
        let c0 = Functional::gen(Gen::c(0));
        assert_eq!(c0.mul(&a, &p1), p1.mul(&a, &c0));
        assert!(c0.mul(&a, &c0).is_zero());
        assert_eq!(c0.mul(&a, &x1), x1.mul(&a, &c0).neg());
    }

    #[test]
    fn caps_count_overflow() {
        let a = Algebra::new(1, 1, Caps { l: 1, xi: 2, hbar: 2 });
        let x = Functional::gen(Gen::xi(0));
        let x3 = x.mul(&a, &x).mul(&a, &x);
        assert!(x3.is_zero());
        assert_eq!(a.overflow_count(), 1);
    }

    #[test]
    fn debug_text_is_sorted() {
        let a = alg();
        let f = Functional::word(&a, vec![Gen::xi(0), Gen::phi(1), Gen::c(1)], 1, q(3))
            .add(&Functional::word(&a, vec![Gen::phi(0)], 0, q(-1)));
        assert_eq!(f.debug_text(), "3\thbar^1\tc1 p1 x0\n-1\thbar^0\tp0\n");
    }

    #[test]
    fn fault_changes_products() {
        let a = alg();
        let bad = a.with_table(KoszulTable::standard().with_fault(Class::Phi, Class::Xi));
        let w = vec![Gen::xi(0), Gen::phi(0)];
        assert_ne!(Functional::word(&a, w.clone(), 0, q(1)), Functional::word(&bad, w, 0, q(1)));
    }

    #[test]
    fn basis_enumeration_counts() {
        let a = Algebra::new(1, 2, Caps { l: 1, xi: 2, hbar: 1 });
        // 2 (c) × 4 (φ subsets) × 6 (ξ multisets of degree ≤ 2 in 2 letters).
        assert_eq!(a.basis_monomials().len(), 48);
    }

    #[test]
    fn exp_log_roundtrip() {
        let a = alg();
        let x = Functional::word(&a, vec![Gen::c(0), Gen::phi(0), Gen::xi(1)], 0, q(2))
            .add(&Functional::word(&a, vec![Gen::c(1), Gen::phi(2)], 0, q(1)));
        let e = exp_nilpotent(&a, &x).unwrap();
        let l = log1p_nilpotent(&a, &e.sub(&Functional::one())).unwrap();
        assert_eq!(l, x);
    }
}
