//! Chevalley–Eilenberg cochains of a finite-dimensional Lie algebra with
//! trivial coefficients, exactness with witnesses, and the module-triviality
//! and current-lift questions for the obstruction.

use crate::bv::BVEngine;
use crate::error::{LabError, Result};
use crate::functional::{exp_nilpotent, Algebra, Class, Derivation, Functional, Gen, Monomial};
use crate::hpl::Op;
use crate::linalg::QMat;
use crate::report::{Claim, Report};
use crate::scalar::{q, qr, Scalar, Q};
use num_traits::Zero;

/// Structure constants `f[i][j][l]` with `[e_i, e_j] = Σ_l f[i][j][l] e_l`.
pub type Structure = Vec<Vec<Vec<Q>>>;

/// Increasing `k`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// An alternating `k`-form, stored by its values on `(e_{i_1}, …, e_{i_k})`, `i_1 < … < i_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cochain {
    pub degree: usize,
    pub coeffs: Vec<Q>,
}

impl Cochain {
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }
}

/// Whether a closed cochain is a coboundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Exactness {
    /// `d witness = ω`.
    Exact { witness: Cochain },
    /// A functional `y` on `C^k` with `y ∘ d = 0` and `y(ω) = 1`.
    NotExact { certificate: Vec<Q> },
}

impl Exactness {
    pub fn is_exact(&self) -> bool {
        matches!(self, Exactness::Exact { .. })
    }
}

/// `C^•(g)` as exterior powers of `g^∨` with its differential matrices.
#[derive(Clone, Debug)]
pub struct CEComplex {
    pub dim: usize,
    pub structure: Structure,
    /// `C^0 = ℝ` removed.
    pub reduced: bool,
    bases: Vec<Vec<Vec<usize>>>,
    /// `diffs[k]: C^k → C^{k+1}`.
    diffs: Vec<QMat>,
}

impl CEComplex {
    pub fn new(structure: Structure, reduced: bool) -> Result<Self> {
        let n = structure.len();
        for (i, row) in structure.iter().enumerate() {
            if row.len() != n || row.iter().any(|v| v.len() != n) {
                return Err(LabError::Dimension(format!("structure constants row {i} is not {n}×{n}")));
            }
        }
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    if structure[i][j][l] != -structure[j][i][l].clone() {
                        return Err(LabError::Action(format!("bracket not antisymmetric at ({i},{j})")));
                    }
                }
            }
        }
        let bases: Vec<Vec<Vec<usize>>> = (0..=n + 1).map(|k| subsets(n, k)).collect();
        let mut cx = CEComplex { dim: n, structure, reduced, bases, diffs: Vec::new() };
        cx.diffs = (0..=n).map(|k| cx.build_differential(k)).collect();
        for k in 0..n {
            if !cx.diffs[k + 1].mul(&cx.diffs[k]).is_zero() {
                return Err(LabError::Action(format!("d² ≠ 0 on C^{k}: the bracket fails the Jacobi identity")));
            }
        }
        Ok(cx)
    }

    pub fn abelian(dim: usize, reduced: bool) -> Self {
        CEComplex::new(vec![vec![vec![q(0); dim]; dim]; dim], reduced).expect("abelian algebra")
    }

    pub fn cochain_dim(&self, k: usize) -> usize {
        if k > self.dim || (self.reduced && k == 0) {
            0
        } else {
            self.bases[k].len()
        }
    }

    pub fn basis(&self, k: usize) -> &[Vec<usize>] {
        if self.cochain_dim(k) == 0 {
            &[]
        } else {
            &self.bases[k]
        }
    }

    pub fn zero(&self, k: usize) -> Cochain {
        Cochain { degree: k, coeffs: vec![q(0); self.cochain_dim(k)] }
    }

    /// Matrix of `d: C^k → C^{k+1}`.
    pub fn differential(&self, k: usize) -> Result<&QMat> {
        self.diffs.get(k).ok_or_else(|| LabError::Degree(format!("C^{k} exceeds dim g = {}", self.dim)))
    }

    fn index(&self, k: usize, set: &[usize]) -> usize {
        self.bases[k].binary_search_by(|s| s.as_slice().cmp(set)).expect("sorted subset")
    }

    /// `(dω)(x_0..x_k) = Σ_{a<b} (−1)^{a+b} ω([x_a, x_b], x_0 .. x̂_a .. x̂_b .. x_k)`.
    fn build_differential(&self, k: usize) -> QMat {
        let (rows, cols) = (self.cochain_dim(k + 1), self.cochain_dim(k));
        let mut m = QMat::zeros(rows, cols);
        if rows == 0 || cols == 0 {
            return m;
        }
        for (r, js) in self.bases[k + 1].iter().enumerate() {
            for a in 0..js.len() {
                for b in a + 1..js.len() {
                    let rest: Vec<usize> = js.iter().enumerate().filter(|&(p, _)| p != a && p != b).map(|(_, &x)| x).collect();
                    let sab = if (a + b) % 2 == 0 { q(1) } else { q(-1) };
                    for l in 0..self.dim {
                        let f = &self.structure[js[a]][js[b]][l];
                        if f.is_zero() || rest.contains(&l) {
                            continue;
                        }
                        let pos = rest.iter().filter(|&&x| x < l).count();
                        let mut set = rest.clone();
                        set.insert(pos, l);
                        let sign = if pos % 2 == 0 { q(1) } else { q(-1) };
                        let c = self.index(k, &set);
                        m[(r, c)] = m[(r, c)].clone() + sab.clone() * sign * f.clone();
                    }
                }
            }
        }
        m
    }

    fn check_shape(&self, w: &Cochain) -> Result<()> {
        if w.degree > self.dim {
            return Err(LabError::Degree(format!("degree {} exceeds dim g = {}", w.degree, self.dim)));
        }
        if w.coeffs.len() != self.cochain_dim(w.degree) {
            return Err(LabError::Dimension(format!(
                "{}-cochain has {} coefficients, expected {}",
                w.degree,
                w.coeffs.len(),
                self.cochain_dim(w.degree)
            )));
        }
        Ok(())
    }

    pub fn is_closed(&self, w: &Cochain) -> Result<bool> {
        Ok(ce_differential(self, w)?.is_zero())
    }

    /// Dimension of `H^k`.
    pub fn betti(&self, k: usize) -> usize {
        let dim = self.cochain_dim(k);
        let out_rank = if k < self.dim { self.diffs[k].rank() } else { 0 };
        let in_rank = if k > 0 { self.diffs[k - 1].rank() } else { 0 };
        dim - out_rank - in_rank
    }
}

/// The Chevalley–Eilenberg differential; for a 1-cochain `(dω)(γ, γ') = −ω([γ, γ'])`.
pub fn ce_differential(cx: &CEComplex, w: &Cochain) -> Result<Cochain> {
    cx.check_shape(w)?;
    let d = cx.differential(w.degree)?;
    let coeffs = if d.cols == 0 { vec![q(0); d.rows] } else { d.mul_vec(&w.coeffs) };
    Ok(Cochain { degree: w.degree + 1, coeffs })
}

/// Decides whether a closed cochain is exact; errors on non-closed input.
pub fn is_exact(cx: &CEComplex, w: &Cochain) -> Result<Exactness> {
    if !cx.is_closed(w)? {
        return Err(LabError::NotClosed(format!("{}-cochain {:?}", w.degree, w.coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>())));
    }
    let k = w.degree;
    let below = if k == 0 { 0 } else { cx.cochain_dim(k - 1) };
    if below > 0 {
        let d = cx.differential(k - 1)?;
        if let Some(j) = d.solve(&w.coeffs) {
            let witness = Cochain { degree: k - 1, coeffs: j };
            if ce_differential(cx, &witness)? != *w {
                return Err(LabError::Identity("coboundary witness does not reproduce the cochain".into()));
            }
            return Ok(Exactness::Exact { witness });
        }
    } else if w.is_zero() {
        let degree = k.saturating_sub(1);
        return Ok(Exactness::Exact { witness: Cochain { degree, coeffs: vec![q(0); if k == 0 { 0 } else { below }] } });
    }
    // y ranges over the left kernel of d_{k−1}; pick one not annihilating ω.
    let n = cx.cochain_dim(k);
    let left_kernel: Vec<Vec<Q>> = if below > 0 {
        cx.differential(k - 1)?.transpose().nullspace()
    } else {
        (0..n).map(|i| (0..n).map(|j| if i == j { q(1) } else { q(0) }).collect()).collect()
    };
    for y in left_kernel {
        let pairing: Q = y.iter().zip(&w.coeffs).fold(q(0), |acc, (a, b)| acc + a.clone() * b.clone());
        if !pairing.is_zero() {
            let inv = q(1) / pairing;
            return Ok(Exactness::NotExact { certificate: y.into_iter().map(|c| c * inv.clone()).collect() });
        }
    }
    Err(LabError::Identity("no coboundary and no separating functional".into()))
}

/// Scale identifying pure-`c*` polynomials of degree `k` with CE `k`-cochains.
///
/// With `d_L c*_l = Σ_{ij} f^l_{ij} c*_i c*_j` the map `c*_I ↦ (−½)^k e^I`
/// intertwines `d_L` with the CE differential.
pub fn bridge_scale(k: usize) -> Q {
    let mut s = q(1);
    for _ in 0..k {
        s *= qr(-1, 2);
    }
    s
}

/// The `ħ^0` degree-`k` part of a pure-`c*` functional as a CE cochain.
pub fn cochain_from_functional(cx: &CEComplex, f: &Functional, k: usize) -> Result<Cochain> {
    for (m, h, c) in f.terms() {
        if !c.is_zero() && (m.field_degree() > 0 || h != 0) {
            return Err(LabError::Input(format!("not a pure c* functional: term {m} at ħ^{h}")));
        }
    }
    let s = bridge_scale(k);
    let coeffs = cx
        .basis(k)
        .iter()
        .map(|set| f.coeff(&Monomial { gens: set.iter().map(|&i| Gen::c(i)).collect() }, 0) * s.clone())
        .collect();
    Ok(Cochain { degree: k, coeffs })
}

pub fn functional_from_cochain(cx: &CEComplex, w: &Cochain) -> Functional {
    let s = q(1) / bridge_scale(w.degree);
    let mut f = Functional::zero();
    for (set, c) in cx.basis(w.degree).iter().zip(&w.coeffs) {
        if !c.is_zero() {
            f.add_term(Monomial { gens: set.iter().map(|&i| Gen::c(i)).collect() }, 0, c.clone() * s.clone());
        }
    }
    f
}

/// Outcome of the module-triviality decision for `d_L + ω·`.
#[derive(Clone, Debug)]
pub enum ModuleTriviality {
    /// `e^{α}` intertwines `d_L + ω·` with `d_L`.
    Trivial { alpha: Functional, exp_alpha: Functional },
    NonTrivial { omega: Cochain, certificate: Vec<Q> },
}

impl ModuleTriviality {
    pub fn is_trivial(&self) -> bool {
        matches!(self, ModuleTriviality::Trivial { .. })
    }
}

fn pure_c_basis(alg: &Algebra) -> Vec<Monomial> {
    alg.basis_monomials_bounded(0)
}

/// Decides whether the pure-`c*` differential `delta` is isomorphic to `d_L`.
///
/// `delta` must be `d_L + ω·` for a degree-1 `ω = delta(1)`; this is checked on
/// every pure-`c*` monomial within the caps of `alg`.
pub fn is_module_trivial(delta: &Op, d_l: &Derivation, alg: &Algebra, structure: &Structure) -> Result<ModuleTriviality> {
    let omega_f = delta.apply(&Functional::one());
    for (m, h, c) in omega_f.terms() {
        if !c.is_zero() && (m.len() != 1 || m.count(Class::C) != 1 || h != 0) {
            return Err(LabError::Input(format!("δ(1) is not a degree-1 cochain: term {m} at ħ^{h}")));
        }
    }
    let basis = pure_c_basis(alg);
    for m in &basis {
        let x = Functional::word(alg, m.gens.clone(), 0, q(1));
        let expected = d_l.apply(alg, &x).add(&omega_f.mul(alg, &x));
        if delta.apply(&x) != expected {
            return Err(LabError::Input(format!("δ is not of the form d_L + ω· on {m}")));
        }
    }
    let cx = CEComplex::new(structure.clone(), true)?;
    let omega = cochain_from_functional(&cx, &omega_f, 1)?;
    match is_exact(&cx, &omega)? {
        Exactness::Exact { witness } => {
            let alpha = functional_from_cochain(&cx, &witness);
            let exp_alpha = exp_nilpotent(alg, &alpha)?;
            let exp_minus = exp_nilpotent(alg, &alpha.neg())?;
            for m in &basis {
                let x = Functional::word(alg, m.gens.clone(), 0, q(1));
                let conj = exp_alpha.mul(alg, &delta.apply(&exp_minus.mul(alg, &x)));
                if conj != d_l.apply(alg, &x) {
                    return Err(LabError::Identity(format!("e^α does not trivialize δ on {m}")));
                }
            }
            Ok(ModuleTriviality::Trivial { alpha, exp_alpha })
        }
        Exactness::NotExact { certificate } => Ok(ModuleTriviality::NonTrivial { omega, certificate }),
    }
}

/// Existence of a quantum lift of the current at scale `t`.
#[derive(Clone, Debug)]
pub struct LiftCheck {
    pub obstruction: Cochain,
    pub exactness: Exactness,
    /// `I^{(1)} = −J` when a lift exists.
    pub correction: Option<Functional>,
    pub report: Report,
}

/// Reduces the current-lift question to exactness of `Obstr[t]` in the reduced complex.
pub fn anomaly_lift_check(engine: &BVEngine, t: f64) -> Result<LiftCheck> {
    let mut report = Report::new();
    let cx = CEComplex::new(engine.action.structure.clone(), true)?;
    let i = engine.interaction();
    let ob = engine.obstruction(&i, t)?;
    let omega = cochain_from_functional(&cx, &ob.functional, 1)?;
    let d_omega = ce_differential(&cx, &omega)?;
    let closed_err = d_omega.coeffs.iter().map(|c| c.to_f64().abs()).fold(0.0, f64::max);
    report.push(Claim::compare("obstruction vanishes on commutators", &[t], vec![closed_err], vec![0.0], 1e-9));
    let exactness = is_exact(&cx, &omega)?;
    let correction = match &exactness {
        Exactness::Exact { witness } => {
            let j = functional_from_cochain(&cx, witness);
            if ce_differential(&cx, witness)? != omega {
                return Err(LabError::Identity("lift witness fails dJ = Obstr".into()));
            }
            Some(j.neg())
        }
        Exactness::NotExact { .. } => None,
    };
    report.push(Claim::boolean("lift exists iff Obstr is exact", exactness.is_exact() == ob.functional.is_zero()));
    if let Some(corr) = &correction {
        let it = engine.effective(&i, t)?;
        let corrected = it.add(&corr.shift_hbar(1));
        let r = engine.sqme_residual(&corrected, t)?;
        report.push(Claim::boolean("corrected I[t] − ħJ satisfies the strong QME", r.is_zero()));
    }
    Ok(LiftCheck { obstruction: omega, exactness, correction, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{so3, solvable2};

    fn cochain(k: usize, v: &[i64]) -> Cochain {
        Cochain { degree: k, coeffs: v.iter().map(|&x| q(x)).collect() }
    }

    /// `[x,y] = y`, `[x,z] = z`.
    fn solvable3() -> Structure {
        let mut f = vec![vec![vec![q(0); 3]; 3]; 3];
        for l in [1, 2] {
            f[0][l][l] = q(1);
            f[l][0][l] = q(-1);
        }
        f
    }

    #[test]
    fn abelian_differential_vanishes() {
        let cx = CEComplex::abelian(3, false);
        for k in 0..=3 {
            assert!(cx.differential(k).unwrap().is_zero());
            assert_eq!(cx.betti(k), [1, 3, 3, 1][k]);
        }
    }

    #[test]
    fn so3_dual_generators() {
        let (f, _) = so3();
        let cx = CEComplex::new(f, false).unwrap();
        // Hand computation: d e^1 = −e^2∧e^3, d e^2 = e^1∧e^3, d e^3 = −e^1∧e^2,
        // in the basis (12, 13, 23).
        let expected = [[0, 0, -1], [0, 1, 0], [-1, 0, 0]];
        for l in 0..3 {
            let mut e = vec![0; 3];
            e[l] = 1;
            let d = ce_differential(&cx, &cochain(1, &e)).unwrap();
            assert_eq!(d, cochain(2, &expected[l]), "d e^{}", l + 1);
        }
        assert_eq!((cx.betti(0), cx.betti(1), cx.betti(2), cx.betti(3)), (1, 0, 0, 1));
    }

    #[test]
    fn one_cochain_rule() {
        let (f, _) = solvable2();
        let cx = CEComplex::new(f.clone(), false).unwrap();
        let w = cochain(1, &[2, 5]);
        let d = ce_differential(&cx, &w).unwrap();
        // (dω)(e0, e1) = −ω([e0, e1]) = −ω(e1).
        assert_eq!(d, cochain(2, &[-5]));
    }

    #[test]
    fn jacobi_violation_is_rejected() {
        let mut f = solvable3();
        f[1][2][0] = q(1);
        f[2][1][0] = q(-1);
        assert!(CEComplex::new(f, false).is_err());
    }

    #[test]
    fn exactness_examples() {
        let cx = CEComplex::abelian(1, true);
        assert!(is_exact(&cx, &cochain(1, &[0])).unwrap().is_exact());
        match is_exact(&cx, &cochain(1, &[2])).unwrap() {
            Exactness::NotExact { certificate } => assert_eq!(certificate, vec![qr(1, 2)]),
            e => panic!("{e:?}"),
        }
        let r2 = CEComplex::abelian(2, true);
        assert!(!is_exact(&r2, &cochain(2, &[1])).unwrap().is_exact());
        let (f, _) = solvable2();
        let cx = CEComplex::new(f, true).unwrap();
        assert!(matches!(is_exact(&cx, &cochain(1, &[0, 1])), Err(LabError::NotClosed(_))));
    }

    #[test]
    fn trace_form_on_solvable3_is_exact() {
        let cx = CEComplex::new(solvable3(), true).unwrap();
        // ρ = ad, N_{rc} = 3r + c + 1: ω(γ, γ') = −tr(ad[γ, γ'] N).
        let ad = |i: usize| QMat::from_fn(3, 3, |r, c| cx.structure[i][c][r].clone());
        let n = QMat::from_fn(3, 3, |r, c| q((3 * r + c + 1) as i64));
        let omega: Vec<Q> = cx
            .basis(2)
            .iter()
            .map(|s| {
                let br = (0..3).fold(QMat::zeros(3, 3), |acc, l| acc.add(&ad(l).scale(&cx.structure[s[0]][s[1]][l])));
                -br.mul(&n).trace()
            })
            .collect();
        let w = Cochain { degree: 2, coeffs: omega };
        assert!(!w.is_zero());
        match is_exact(&cx, &w).unwrap() {
            Exactness::Exact { witness } => assert_eq!(ce_differential(&cx, &witness).unwrap(), w),
            e => panic!("{e:?}"),
        }
        assert_eq!(cx.betti(2), 0);
    }

    #[test]
    fn bridge_intertwines_d_l() {
        use crate::bv::BVEngine;
        use crate::functional::Caps;
        use crate::models::{build_abstract, tensor_model, FreeBVTheory};
        for (f, reps) in [so3(), solvable2()] {
            let base = build_abstract(1, 0, QMat::zeros(0, 1), None).unwrap();
            let (d, a) = tensor_model(&base, f.clone(), &reps, "t").unwrap();
            let e = BVEngine::new(FreeBVTheory::new(&d), a, Caps { l: 3, xi: 0, hbar: 0 }).unwrap();
            let cx = CEComplex::new(f, false).unwrap();
            for k in 0..cx.dim {
                for (j, _) in cx.basis(k).iter().enumerate() {
                    let mut w = cx.zero(k);
                    w.coeffs[j] = q(1);
                    let p = functional_from_cochain(&cx, &w);
                    let lhs = cochain_from_functional(&cx, &e.d_l.apply(&e.alg, &p), k + 1).unwrap();
                    assert_eq!(lhs, ce_differential(&cx, &w).unwrap());
                }
            }
        }
    }

    fn line_triviality(name: &str) -> (i64, ModuleTriviality) {
        use crate::functional::Caps;
        use crate::hpl::{determinant_module, HodgeSetup};
        let m = crate::corpus::builtin(name).unwrap();
        let setup = HodgeSetup::new(&m.dirac, m.action_or_axial(), Caps { l: 1, xi: 1, hbar: 1 }, 0).unwrap();
        let dm = determinant_module(&setup).unwrap();
        assert!(dm.report.pass(), "{name}: {:?}", dm.report.failures());
        let e = &setup.engine;
        let alg = e.alg.with_caps(setup.caps);
        (m.dirac.index(), is_module_trivial(&dm.line_differential, &e.d_l, &alg, &e.action.structure).unwrap())
    }

    #[test]
    fn triviality_dichotomy_on_simplicial_corpus() {
        for (name, _) in crate::corpus::SIMPLICIAL_CORPUS.iter() {
            let (ind, t) = line_triviality(name);
            assert_eq!(t.is_trivial(), ind == 0, "{name}");
            if let ModuleTriviality::Trivial { alpha, exp_alpha } = t {
                assert!(alpha.is_zero());
                assert_eq!(exp_alpha, Functional::one());
            }
        }
    }

    #[test]
    fn lift_check_on_corpus() {
        use crate::functional::Caps;
        use crate::models::FreeBVTheory;
        for (name, chi) in crate::corpus::SIMPLICIAL_CORPUS {
            let m = crate::corpus::builtin(name).unwrap();
            let e = BVEngine::new(FreeBVTheory::new(&m.dirac), m.action_or_axial(), Caps { l: 1, xi: 2, hbar: 2 }).unwrap();
            let lc = anomaly_lift_check(&e, 1.0).unwrap();
            assert!(lc.report.pass(), "{name}: {:?}", lc.report.failures());
            assert_eq!(lc.correction.is_some(), *chi == 0, "{name}");
            assert_eq!(lc.obstruction.coeffs, vec![q(*chi)], "{name}: −½·Obstr = ind");
        }
    }

    #[test]
    fn affine_form_is_enforced() {
        use crate::functional::Caps;
        let alg = Algebra::new(1, 0, Caps { l: 1, xi: 0, hbar: 0 });
        let d_l = Derivation::zero(crate::graded::Bidegree::new(1, 0));
        let f = vec![vec![vec![q(0)]]];
        let scaled = Op::new("2·", 1, |x: &Functional| x.scale(&q(2)));
        assert!(matches!(is_module_trivial(&scaled, &d_l, &alg, &f), Err(LabError::Input(_))));
        let c = Functional::gen(Gen::c(0));
        let a2 = alg.clone();
        let twist = Op::new("c·", 1, move |x: &Functional| c.mul(&a2, x));
        match is_module_trivial(&twist, &d_l, &alg, &f).unwrap() {
            ModuleTriviality::NonTrivial { omega, certificate } => {
                assert_eq!(omega.coeffs, vec![qr(-1, 2)]);
                assert_eq!(certificate, vec![q(-2)]);
            }
            t => panic!("{t:?}"),
        }
    }
}
