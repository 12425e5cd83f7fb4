//! Deformation retractions of functional complexes, the homological
//! perturbation lemma, and the chain retracting the scale-∞ observables onto
//! the determinant line `Λ^top(ker D⁺)^∨ ⊗ Λ^top(ker D⁻)^∨`.

use crate::bv::BVEngine;
use crate::error::{LabError, Result};
use crate::functional::{poisson_defect, Algebra, Caps, Class, Contraction, Derivation, Functional, Gen, Monomial};
use crate::graded::Bidegree;
use crate::linalg::QMat;
use crate::models::{DiracData, EquivariantAction, FreeBVTheory};
use crate::report::{Claim, Report};
use crate::scalar::{q, Scalar, Q};
use num_traits::{One, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

type OpFn = Arc<dyn Fn(&Functional) -> Functional + Send + Sync>;

/// Linear operator on functionals of fixed ghost degree.
#[derive(Clone)]
pub struct Op {
    pub name: String,
    pub degree: i32,
    f: OpFn,
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Op({}, degree {})", self.name, self.degree)
    }
}

impl Op {
    pub fn new(name: impl Into<String>, degree: i32, f: impl Fn(&Functional) -> Functional + Send + Sync + 'static) -> Self {
        Op { name: name.into(), degree, f: Arc::new(f) }
    }

    pub fn apply(&self, x: &Functional) -> Functional {
        (self.f)(x)
    }

    pub fn zero(degree: i32) -> Self {
        Op::new("0", degree, |_| Functional::zero())
    }

    pub fn identity() -> Self {
        Op::new("id", 0, |x| x.clone())
    }

    /// `self ∘ inner`.
    pub fn after(&self, inner: &Op) -> Op {
        let (a, b) = (self.f.clone(), inner.f.clone());
        Op::new(format!("{}∘{}", self.name, inner.name), self.degree + inner.degree, move |x| a(&b(x)))
    }

    pub fn add(&self, o: &Op) -> Op {
        let (a, b) = (self.f.clone(), o.f.clone());
        Op::new(format!("({} + {})", self.name, o.name), self.degree, move |x| a(x).add(&b(x)))
    }

    pub fn scale(&self, s: Q) -> Op {
        let a = self.f.clone();
        Op::new(format!("{s}·{}", self.name), self.degree, move |x| a(x).scale(&s))
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Op {
        self.name = name.into();
        self
    }

    pub fn derivation(alg: &Algebra, d: &Derivation, name: &str) -> Op {
        let (alg, d) = (alg.clone(), d.clone());
        Op::new(name, d.degree.ghost, move |x| d.apply(&alg, x))
    }

    pub fn contraction(alg: &Algebra, c: &Contraction, name: &str) -> Op {
        let (alg, c) = (alg.clone(), c.clone());
        Op::new(name, c.degree.ghost, move |x| c.apply(&alg, x))
    }

    /// Keeps the terms whose monomial satisfies `keep`.
    pub fn projection(name: &str, keep: impl Fn(&Monomial) -> bool + Send + Sync + 'static) -> Op {
        Op::new(name, 0, move |x| x.filter(|m, _| keep(m)))
    }

    /// Left multiplication by a homogeneous functional.
    pub fn multiplication(alg: &Algebra, f: &Functional, degree: i32, name: &str) -> Op {
        let (alg, f) = (alg.clone(), f.clone());
        Op::new(name, degree, move |x| f.mul(&alg, x))
    }

    /// `{I, ·}` for the bracket induced by `Δ`.
    pub fn bracket_with(alg: &Algebra, delta: &Contraction, i: &Functional, name: &str) -> Op {
        let (alg, delta, i) = (alg.clone(), delta.clone(), i.clone());
        Op::new(name, delta.degree.ghost, move |x| poisson_defect(&alg, &delta, &i, x))
    }

    /// Operator given by a matrix on a list of monomials (column `j` is the image of `basis[j]`).
    pub fn from_matrix(alg: &Algebra, basis: &[Monomial], m: &QMat, degree: i32, name: &str) -> Op {
        let index: BTreeMap<Monomial, usize> = basis.iter().cloned().enumerate().map(|(i, b)| (b, i)).collect();
        let (alg, basis, m) = (alg.clone(), basis.to_vec(), m.clone());
        Op::new(name, degree, move |x| {
            let mut out = Functional::zero();
            for (mono, k, c) in x.terms() {
                if let Some(&j) = index.get(mono) {
                    for (i, b) in basis.iter().enumerate() {
                        let e = &m[(i, j)];
                        if !e.is_zero() {
                            out.push(&alg, b.clone(), k, e.clone() * c.clone());
                        }
                    }
                }
            }
            out
        })
    }
}

/// A complex: differential plus the monomials on which identities are verified.
#[derive(Clone, Debug)]
pub struct Complex {
    pub name: String,
    pub d: Op,
    pub basis: Vec<Monomial>,
}

/// Outcome of one retraction identity over a basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentityCheck {
    pub name: String,
    pub failures: usize,
    pub total: usize,
    pub first_failure: Option<String>,
}

impl IdentityCheck {
    pub fn holds(&self) -> bool {
        self.failures == 0
    }
}

/// `(small, d) ⇄ (big, d)` with `πι = id` and `ιπ − id = [d, η]`.
#[derive(Clone, Debug)]
pub struct Retraction {
    pub big: Complex,
    pub small: Complex,
    pub iota: Op,
    pub pi: Op,
    pub eta: Op,
    /// Identities are compared after truncation to these caps.
    pub caps: Caps,
}

fn mono_fn(m: &Monomial) -> Functional {
    let mut f = Functional::zero();
    f.add_term(m.clone(), 0, Q::one());
    f
}

fn check(name: &str, basis: &[Monomial], caps: Caps, residual: impl Fn(&Functional) -> Functional + Sync + Send) -> IdentityCheck {
    let out: Vec<Option<String>> = crate::par::map(basis, |m| {
        let r = residual(&mono_fn(m)).truncate(caps);
        if r.is_zero() {
            None
        } else {
            Some(format!("on {m}: residual\n{r}"))
        }
    });
    IdentityCheck {
        name: name.into(),
        failures: out.iter().filter(|x| x.is_some()).count(),
        total: basis.len(),
        first_failure: out.into_iter().flatten().next(),
    }
}

fn degree_check(op: &Op, basis: &[Monomial], caps: Caps) -> IdentityCheck {
    check(&format!("{} has degree {}", op.name, op.degree), basis, caps, |x| {
        let g = x.terms().next().map_or(0, |(m, _, _)| m.degree().ghost);
        op.apply(x).filter(|m, _| m.degree().ghost != g + op.degree)
    })
}

impl Retraction {
    /// Every defining identity, evaluated on the verification bases.
    pub fn verify(&self) -> Vec<IdentityCheck> {
        let (b, s, c) = (&self.big, &self.small, self.caps);
        let (i, p, e) = (&self.iota, &self.pi, &self.eta);
        vec![
            check("pi∘iota = id", &s.basis, c, |x| p.apply(&i.apply(x)).sub(x)),
            check("iota∘pi − id = [d, eta]", &b.basis, c, |x| {
                let lhs = i.apply(&p.apply(x)).sub(x);
                lhs.sub(&b.d.apply(&e.apply(x))).sub(&e.apply(&b.d.apply(x)))
            }),
            check("d∘iota = iota∘d", &s.basis, c, |x| b.d.apply(&i.apply(x)).sub(&i.apply(&s.d.apply(x)))),
            check("pi∘d = d∘pi", &b.basis, c, |x| p.apply(&b.d.apply(x)).sub(&s.d.apply(&p.apply(x)))),
            check("d² = 0 on the big complex", &b.basis, c, |x| b.d.apply(&b.d.apply(x))),
            check("d² = 0 on the small complex", &s.basis, c, |x| s.d.apply(&s.d.apply(x))),
            degree_check(e, &b.basis, c),
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.verify().iter().all(IdentityCheck::holds)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        if let Some(f) = self.verify().into_iter().find(|c| !c.holds()) {
            return Err(LabError::Perturbation(format!(
                "{} ⇄ {}: identity '{}' fails on {}/{} basis elements; {}",
                self.small.name,
                self.big.name,
                f.name,
                f.failures,
                f.total,
                f.first_failure.unwrap_or_default()
            )));
        }
        Ok(())
    }

    /// One claim per identity, labelled with `label`.
    pub fn report(&self, label: &str) -> Report {
        let mut r = Report::new();
        for c in self.verify() {
            r.push(
                Claim::compare(format!("{label}: {}", c.name), &[], vec![c.failures as f64], vec![0.0], 0.0)
                    .with_note(format!("{} basis elements", c.total)),
            );
        }
        r
    }

    /// Fault injection: doubles `η`, breaking `ιπ − id = [d, η]` wherever `η ≠ 0`.
    pub fn with_broken_eta(&self) -> Retraction {
        Retraction { eta: self.eta.scale(q(2)).renamed("2η (broken)"), ..self.clone() }
    }

    /// Identity retraction of a complex onto itself.
    pub fn identity(c: &Complex, caps: Caps) -> Retraction {
        Retraction {
            big: c.clone(),
            small: c.clone(),
            iota: Op::identity(),
            pi: Op::identity(),
            eta: Op::zero(-1),
            caps,
        }
    }
}

/// Diagnostics of a perturbation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PerturbInfo {
    /// Longest Neumann series `Σ (δη)^l x` met on the basis inputs (number of nonzero terms).
    pub neumann_steps: usize,
    pub dense_fallback: bool,
}

/// Largest support explored by the dense fallback.
pub const DENSE_FALLBACK_LIMIT: usize = 4096;

enum Neumann {
    Done(Functional, usize),
    Exceeded,
}

fn neumann(x: &Functional, de: &Op, bound: usize, caps: Caps) -> Neumann {
    let mut sum = x.clone();
    let mut term = x.clone();
    for l in 1..=bound {
        if term.is_zero() {
            return Neumann::Done(sum, l - 1);
        }
        term = de.apply(&term).truncate(caps);
        sum = sum.add(&term);
    }
    if term.is_zero() {
        Neumann::Done(sum, bound)
    } else {
        Neumann::Exceeded
    }
}

/// Solves `(1 − M) z = x` on the span of the monomials reachable from `x` under `M`.
fn dense_inverse(x: &Functional, de: &Op, caps: Caps) -> Option<Functional> {
    let alg_free = |m: &Monomial| mono_fn(m);
    let mut support: BTreeSet<Monomial> = x.terms().map(|(m, _, _)| m.clone()).collect();
    let mut frontier: Vec<Monomial> = support.iter().cloned().collect();
    let mut images: BTreeMap<Monomial, Functional> = BTreeMap::new();
    while let Some(m) = frontier.pop() {
        let img = de.apply(&alg_free(&m)).truncate(caps);
        for (mm, _, _) in img.terms() {
            if support.insert(mm.clone()) {
                frontier.push(mm.clone());
            }
        }
        images.insert(m, img);
        if support.len() > DENSE_FALLBACK_LIMIT {
            return None;
        }
    }
    let basis: Vec<Monomial> = support.into_iter().collect();
    let index: BTreeMap<&Monomial, usize> = basis.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let n = basis.len();
    let mut a = QMat::identity(n);
    for (j, m) in basis.iter().enumerate() {
        for (mm, _, c) in images[m].terms() {
            let i = index[mm];
            a[(i, j)] = a[(i, j)].clone() - c.clone();
        }
    }
    let rhs: Vec<Q> = basis.iter().map(|m| x.coeff(m, 0)).collect();
    let z = a.solve(&rhs)?;
    let mut out = Functional::zero();
    for (m, c) in basis.into_iter().zip(z) {
        if !c.is_zero() {
            out.add_term(m, 0, c);
        }
    }
    Some(out)
}

/// Homological perturbation lemma: transfers `d + δ` across `r`.
///
/// `(1 − δη)⁻¹` is the Neumann series when it terminates within `bound`
/// steps (default twice the big basis size), else a dense solve.
pub fn perturb(r: &Retraction, delta: &Op, bound: Option<usize>) -> Result<(Retraction, PerturbInfo)> {
    let caps = r.caps;
    if delta.degree != 1 {
        return Err(LabError::Degree(format!("perturbation {} has degree {}", delta.name, delta.degree)));
    }
    let d_new = r.big.d.add(delta).renamed(format!("{} + {}", r.big.d.name, delta.name));
    let sq = check("(d + δ)² = 0", &r.big.basis, caps, |x| d_new.apply(&d_new.apply(x)));
    if !sq.holds() {
        return Err(LabError::Perturbation(format!(
            "perturbed differential does not square to zero; {}",
            sq.first_failure.unwrap_or_default()
        )));
    }
    let bound = bound.unwrap_or(2 * r.big.basis.len().max(1));
    let de = delta.after(&r.eta);
    // Scan every input the transferred maps feed to (1 − δη)⁻¹.
    let inputs: Vec<Functional> = r
        .small
        .basis
        .iter()
        .map(|m| delta.apply(&r.iota.apply(&mono_fn(m))))
        .chain(r.big.basis.iter().map(|m| delta.apply(&r.eta.apply(&mono_fn(m)))))
        .collect();
    let scans: Vec<Option<usize>> = crate::par::map(&inputs, |x| match neumann(x, &de, bound, caps) {
        Neumann::Done(_, s) => Some(s),
        Neumann::Exceeded => None,
    });
    let mut info = PerturbInfo { neumann_steps: scans.iter().flatten().copied().max().unwrap_or(0), dense_fallback: false };
    if scans.iter().any(Option::is_none) {
        info.dense_fallback = true;
        for (x, s) in inputs.iter().zip(&scans) {
            if s.is_none() && dense_inverse(x, &de, caps).is_none() {
                return Err(LabError::Perturbation(format!(
                    "(1 − δη) is not invertible: Neumann series exceeds {bound} steps and the dense solve failed"
                )));
            }
        }
    }
    let de2 = de.clone();
    let inv = Op::new("(1 − δη)⁻¹", 0, move |x| match neumann(x, &de2, bound, caps) {
        Neumann::Done(s, _) => s,
        Neumann::Exceeded => dense_inverse(x, &de2, caps).expect("(1 − δη) invertible on scanned inputs"),
    });
    let a_delta = inv.after(delta);
    let delta_w = r.pi.after(&a_delta).after(&r.iota).renamed(format!("π(1 − δη)⁻¹δι [{}]", delta.name));
    let iota = r.iota.add(&r.eta.after(&a_delta).after(&r.iota)).renamed(format!("{}'", r.iota.name));
    let pi = r.pi.add(&r.pi.after(&a_delta).after(&r.eta)).renamed(format!("{}'", r.pi.name));
    let eta = r.eta.add(&r.eta.after(&a_delta).after(&r.eta)).renamed(format!("{}'", r.eta.name));
    let small_d = r.small.d.add(&delta_w).renamed(format!("{} + δ_W", r.small.d.name));
    let out = Retraction {
        big: Complex { name: format!("{} + {}", r.big.name, delta.name), d: d_new, basis: r.big.basis.clone() },
        small: Complex { name: format!("{} + δ_W", r.small.name), d: small_d, basis: r.small.basis.clone() },
        iota,
        pi,
        eta,
        caps,
    };
    out.ensure_valid()?;
    Ok((out, info))
}

/// Composite of `r1: V₁ ⇄ V₂` and `r2: V₂ ⇄ V₃`, with homotopy `η₂ + ι₂η₁π₂`.
pub fn compose(r1: &Retraction, r2: &Retraction) -> Result<Retraction> {
    if r1.big.name != r2.small.name || r1.big.basis != r2.small.basis {
        return Err(LabError::Input(format!(
            "cannot compose: '{}' is not the small complex '{}' of the second retraction",
            r1.big.name, r2.small.name
        )));
    }
    let out = Retraction {
        big: r2.big.clone(),
        small: r1.small.clone(),
        iota: r2.iota.after(&r1.iota),
        pi: r1.pi.after(&r2.pi),
        eta: r2.eta.add(&r2.iota.after(&r1.eta).after(&r2.pi)).renamed("η₂ + ι₂η₁π₂"),
        caps: r2.caps,
    };
    out.ensure_valid()?;
    Ok(out)
}

/// Everything needed for the scale-∞ retraction chain of one model.
#[derive(Clone, Debug)]
pub struct HodgeSetup {
    /// Engine in the adapted frame over a widened algebra.
    pub engine: BVEngine,
    pub caps: Caps,
    /// `dim ker D`, `dim ker D⁺`.
    pub k0: usize,
    pub kplus: usize,
    pub field_bound: usize,
    /// `P^∨`: derivation `φ*_a ↦ Σ_b p_ab ξ*_b` dual to `P(0,∞)`.
    pub p_dual: Derivation,
}

/// Default bound on the number of field generators in verification bases.
pub const DEFAULT_FIELD_BOUND: usize = 3;

impl HodgeSetup {
    pub fn new(d: &DiracData, action: EquivariantAction, caps: Caps, field_bound: usize) -> Result<Self> {
        let (theory, k0) = FreeBVTheory::adapted(d);
        let kplus = d.kernels().0.len();
        let base = BVEngine::new(theory, action, caps)?;
        let wide = Caps { l: caps.l, xi: caps.xi + caps.l + 2, hbar: caps.hbar };
        let engine = base.with_algebra(base.alg.scratch(wide));
        let n = engine.n();
        let prop = engine.propagator(0.0, f64::INFINITY)?;
        let a = engine.propagator_operator(&prop);
        let qm = &engine.theory.q;
        let proj: Vec<Q> = (0..n).map(|i| if i < k0 { q(0) } else { q(1) }).collect();
        let nmat = QMat::diag(&proj);
        let aq = a.mul(qm);
        let c = if aq == nmat {
            q(1)
        } else if aq == nmat.neg() {
            q(-1)
        } else {
            return Err(LabError::Identity("P(0,∞) does not invert Q on Im D".into()));
        };
        if qm.mul(&a) != nmat.scale(&c) {
            return Err(LabError::Identity("Q P(0,∞) is not the projector onto Im D".into()));
        }
        let s = -c;
        let mut p_dual = Derivation::zero(Bidegree::new(-1, 0));
        for i in 0..n {
            let mut img = Functional::zero();
            for j in 0..n {
                let e = a[(i, j)].clone();
                if !e.is_zero() {
                    img = img.add(&Functional::gen(Gen::xi(j)).scale(&(e * s.clone())));
                }
            }
            p_dual.set(Gen::phi(i), img);
        }
        Ok(HodgeSetup { engine, caps, k0, kplus, field_bound: field_bound.max(k0), p_dual })
    }

    fn alg(&self) -> &Algebra {
        &self.engine.alg
    }

    fn is_perp(&self, g: &Gen) -> bool {
        g.is_field() && (g.idx as usize) >= self.k0
    }

    /// `W_⊥`-degree of a monomial.
    pub fn perp_degree(&self, m: &Monomial) -> usize {
        m.gens.iter().filter(|g| self.is_perp(g)).count()
    }

    /// Field part equal to `φ*_0 ⋯ φ*_{k0−1}`.
    pub fn is_line(&self, m: &Monomial) -> bool {
        let fields: Vec<&Gen> = m.gens.iter().filter(|g| g.is_field()).collect();
        fields.len() == self.k0 && fields.iter().enumerate().all(|(i, g)| g.class == Class::Phi && g.idx as usize == i)
    }

    pub fn top(&self) -> Functional {
        Functional::word(self.alg(), (0..self.k0).map(Gen::phi).collect(), 0, q(1))
    }

    fn big_basis(&self) -> Vec<Monomial> {
        self.alg().with_caps(self.caps).basis_monomials_bounded(self.field_bound)
    }

    fn d_l(&self) -> Op {
        Op::derivation(self.alg(), &self.engine.d_l, "d_L")
    }

    /// `(C(L) ⊗ W) ⇄ (O, Q + d_L)`: `π`, `ι` project to and include `W_⊥`-degree 0,
    /// `η = P^∨/k` on `W_⊥`-degree `k > 0`.
    pub fn hodge_retraction(&self) -> Retraction {
        let alg = self.alg().clone();
        let big_basis = self.big_basis();
        let small_basis: Vec<Monomial> = big_basis.iter().filter(|m| self.perp_degree(m) == 0).cloned().collect();
        let q_op = Op::derivation(&alg, &self.engine.q_dual, "Q");
        let d_big = q_op.add(&self.d_l()).renamed("Q + d_L");
        let me = self.clone();
        let pi = Op::projection("π", move |m| me.perp_degree(m) == 0);
        let me = self.clone();
        let p = self.p_dual.clone();
        let eta = Op::new("η = P/k", -1, move |x| {
            let mut out = Functional::zero();
            for (m, k, c) in x.terms() {
                let deg = me.perp_degree(m);
                if deg == 0 {
                    continue;
                }
                let img = p.apply_mono(&alg, m).scale(&(c.clone() / q(deg as i64)));
                out = out.add(&img.shift_hbar(k));
            }
            out
        });
        Retraction {
            big: Complex { name: "O".into(), d: d_big, basis: big_basis },
            small: Complex { name: "C(L)⊗W".into(), d: self.d_l(), basis: small_basis },
            iota: Op::identity().renamed("ι"),
            pi,
            eta,
            caps: self.caps,
        }
    }

    pub fn delta_infinity(&self) -> Result<Op> {
        Ok(Op::contraction(self.alg(), &self.engine.laplacian(f64::INFINITY)?, "Δ_∞"))
    }

    /// `Δ_∞(ξ*_j φ*_j)`, required to be the same constant for every kernel index.
    fn laplacian_normalization(&self) -> Result<Q> {
        let delta = self.engine.laplacian(f64::INFINITY)?;
        let alg = self.alg();
        let mut value: Option<Q> = None;
        for j in 0..self.k0 {
            let r = delta.apply(alg, &Functional::word(alg, vec![Gen::xi(j), Gen::phi(j)], 0, q(1)));
            let c = r.coeff(&Monomial::one(), 0);
            if r != Functional::constant(c.clone()) || c.is_zero() || value.as_ref().is_some_and(|v| *v != c) {
                return Err(LabError::Identity("Δ_∞ is not diagonal in the kernel frame".into()));
            }
            value = Some(c);
        }
        for (x, y) in delta.kappa.keys() {
            if x.class == y.class || (x.idx != y.idx) {
                return Err(LabError::Identity(format!("Δ_∞ contracts {x:?} with {y:?}")));
            }
        }
        Ok(value.unwrap_or_else(|| q(2)))
    }

    /// `(C(L)·φ*_top, d_L) ⇄ (C(L) ⊗ W, d_L + Δ_∞)` with the explicit `η''`.
    pub fn line_retraction(&self) -> Result<Retraction> {
        let alg = self.alg().clone();
        let k0 = self.k0;
        let scale = q(2) / self.laplacian_normalization()?;
        let big_basis: Vec<Monomial> = self.big_basis().into_iter().filter(|m| self.perp_degree(m) == 0).collect();
        let small_basis: Vec<Monomial> = big_basis.iter().filter(|m| self.is_line(m)).cloned().collect();
        let me = self.clone();
        let pi = Op::projection("π''", move |m| me.is_line(m));
        let me = self.clone();
        let eta = Op::new("η''", -1, move |x| {
            let mut out = Functional::zero();
            for (m, k, c) in x.terms() {
                if me.perp_degree(m) != 0 {
                    continue;
                }
                let alpha: Vec<Gen> = m.gens.iter().copied().filter(|g| g.class == Class::C).collect();
                let j_set: Vec<usize> = m.gens.iter().filter(|g| g.class == Class::Phi).map(|g| g.idx as usize).collect();
                let mut i_mult = vec![0usize; k0];
                for g in m.gens.iter().filter(|g| g.class == Class::Xi) {
                    i_mult[g.idx as usize] += 1;
                }
                let i_total: usize = i_mult.iter().sum();
                let j_c = k0 - j_set.len();
                let sigma = j_set.iter().filter(|&&j| i_mult[j] != 0).count();
                if j_c + sigma == 0 {
                    continue;
                }
                let mut coef = c.clone() * scale.clone() / q(2 * (j_c + sigma) as i64);
                // Sign from (−1)^{|α|+1}(−1)^{|I|} and from ξ*_I φ*_J = (−1)^{|I||J|} φ*_J ξ*_I.
                if (alpha.len() + 1 + i_total + i_total * j_set.len()) % 2 == 1 {
                    coef = -coef;
                }
                let xi_i: Vec<Gen> = m.gens.iter().copied().filter(|g| g.class == Class::Xi).collect();
                let phi_j: Vec<Gen> = m.gens.iter().copied().filter(|g| g.class == Class::Phi).collect();
                for j in (0..k0).filter(|j| !j_set.contains(j)) {
                    let mut w = alpha.clone();
                    w.push(Gen::xi(j));
                    w.extend_from_slice(&xi_i);
                    w.push(Gen::phi(j));
                    w.extend_from_slice(&phi_j);
                    let t = Functional::word(&alg, w, k, coef.clone() / q(i_mult[j] as i64 + 1));
                    out = out.add(&t);
                }
            }
            out
        });
        let d_big = self.d_l().add(&self.delta_infinity()?).renamed("d_L + Δ_∞");
        Ok(Retraction {
            big: Complex { name: "C(L)⊗W + Δ_∞".into(), d: d_big, basis: big_basis },
            small: Complex { name: "C(L)·det".into(), d: self.d_l(), basis: small_basis },
            iota: Op::identity().renamed("ι''"),
            pi,
            eta,
            caps: self.caps,
        })
    }
}

/// Output of the determinant-line pipeline.
#[derive(Clone, Debug)]
pub struct DeterminantModule {
    /// `ω` with `δ = d_L + ω·` on the line, from the `{I,·}` perturbation.
    pub omega: Functional,
    /// `ω` from perturbing by `−Obstr[∞]·` (the complex `Obq_obstr`).
    pub omega_obstr: Functional,
    /// Obstruction at `t = ∞` from the bv engine.
    pub obstruction: Functional,
    /// Scalar `u` with `π_obstr(ι_I(det)·e^I) = u·det`.
    pub conjugator: Q,
    /// The transferred differential on the line, as an operator on pure-`c*` functionals.
    pub line_differential: Op,
    pub he2_info: PerturbInfo,
    pub interaction_info: PerturbInfo,
    pub report: Report,
}

/// Strips `φ*_top` from the terms of `f` lying on the line.
fn line_coefficient(setup: &HodgeSetup, f: &Functional) -> Functional {
    let mut out = Functional::zero();
    for (m, k, c) in f.terms() {
        if setup.is_line(m) {
            let gens: Vec<Gen> = m.gens.iter().copied().filter(|g| g.class == Class::C).collect();
            out.add_term(Monomial { gens }, k, c.clone());
        }
    }
    out
}

/// Runs Hodge retraction → Δ_∞ perturbation → line retraction → `{I,·}`
/// perturbation, and cross-checks the resulting line differential against the
/// obstruction through the `e^I` conjugation.
pub fn determinant_module(setup: &HodgeSetup) -> Result<DeterminantModule> {
    let mut report = Report::new();
    let he1 = setup.hodge_retraction();
    report.extend(he1.report("hodge retraction"));
    he1.ensure_valid()?;
    let delta_inf = setup.delta_infinity()?;
    let (he2, he2_info) = perturb(&he1, &delta_inf, None)?;
    report.extend(he2.report("Δ_∞ perturbation"));
    let induced = check("induced perturbation equals πΔ_∞ι", &he1.small.basis, setup.caps, |x| {
        let lhs = he2.small.d.apply(x).sub(&he1.small.d.apply(x));
        lhs.sub(&he1.pi.apply(&delta_inf.apply(&he1.iota.apply(x))))
    });
    report.push(Claim::boolean(&induced.name, induced.holds()));
    report.push(
        Claim::boolean(
            "Neumann series for Δ_∞ terminates within dim ker D + 1 steps",
            he2_info.neumann_steps <= setup.k0 + 1 && !he2_info.dense_fallback,
        )
        .with_note(format!("{} steps, dim ker D = {}", he2_info.neumann_steps, setup.k0)),
    );
    let he3 = setup.line_retraction()?;
    // The Δ_∞-perturbed small complex is C(L)⊗W with d_L + Δ_∞; reuse its name.
    let he2_small = Complex { name: he3.big.name.clone(), ..he2.small.clone() };
    let he2 = Retraction { small: he2_small, ..he2 };
    report.extend(he3.report("line retraction"));
    let chain = compose(&he3, &he2)?;
    report.extend(chain.report("composite retraction"));
    let engine = &setup.engine;
    let alg = &engine.alg;
    let lap = engine.laplacian(f64::INFINITY)?;
    let i = engine.interaction();
    let i_inf = engine.effective(&i, f64::INFINITY)?.at_hbar_one();
    let bracket = Op::bracket_with(alg, &lap, &i_inf, "{I,·}_∞");
    let (line_i, interaction_info) = perturb(&chain, &bracket, None)?;
    report.extend(line_i.report("interaction perturbation"));
    let top = setup.top();
    let omega = line_coefficient(setup, &line_i.small.d.apply(&top).sub(&chain.small.d.apply(&top)));
    let (s2, d_line, top2) = (setup.clone(), line_i.small.d.clone(), top.clone());
    let line_differential =
        Op::new("δ on the line", 1, move |x| line_coefficient(&s2, &d_line.apply(&x.mul(s2.alg(), &top2))));
    let ob = engine.obstruction(&i, f64::INFINITY)?.functional;
    let minus_ob = Op::multiplication(alg, &ob.neg(), 1, "−Obstr·");
    let (line_ob, _) = perturb(&chain, &minus_ob, None)?;
    let omega_obstr = line_coefficient(setup, &line_ob.small.d.apply(&top).sub(&chain.small.d.apply(&top)));
    report.push(Claim::boolean(
        "perturbing by −Obstr[∞]· induces d_L − Obstr[∞]· on the line",
        omega_obstr == ob.neg(),
    ));
    let e = crate::functional::exp_nilpotent(alg, &i_inf)?;
    let image = line_ob.pi.apply(&line_i.iota.apply(&top).mul(alg, &e));
    let u_f = line_coefficient(setup, &image);
    let conjugator = u_f.coeff(&Monomial::one(), 0);
    if u_f != Functional::constant(conjugator.clone()) || conjugator.is_zero() {
        return Err(LabError::Identity(format!("e^I transfer is not an invertible scalar on the line: {u_f}")));
    }
    // With u a nonzero scalar, u·δ_I = (d_L − Obstr·)·u forces ω = −Obstr.
    let dev = omega.add(&ob).max_abs();
    report.push(Claim::compare("conjugated line differential equals d_L − Obstr[∞]·", &[f64::INFINITY], vec![dev], vec![0.0], 1e-9));
    Ok(DeterminantModule { omega, omega_obstr, obstruction: ob, conjugator, line_differential, he2_info, interaction_info, report })
}

/// Values of a degree-1 pure-`c*` functional on the basis `γ_i`.
pub fn cochain_values(f: &Functional, k: usize) -> Vec<Q> {
    (0..k).map(|l| f.coeff(&Monomial { gens: vec![Gen::c(l)] }, 0)).collect()
}

impl DeterminantModule {
    pub fn omega_values(&self, k: usize) -> Vec<f64> {
        cochain_values(&self.omega, k).iter().map(|v| v.to_f64()).collect()
    }
}
