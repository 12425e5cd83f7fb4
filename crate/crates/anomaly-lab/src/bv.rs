//! BV heat kernels, propagators, the scale-t Laplacian and bracket, the
//! equivariant interaction, tree/wheel effective interactions, the obstruction
//! and the master-equation checks.

use crate::error::{LabError, Result};
use crate::functional::{
    exp_nilpotent, poisson_defect, rg_flow, rg_flow_tangent, Algebra, Caps, Class, Contraction, Derivation,
    Functional, Gen, Monomial, TwoTensor,
};
use crate::graded::Bidegree;
use crate::linalg::{FMat, QMat};
use crate::models::{EquivariantAction, FreeBVTheory};
use crate::report::{Claim, Report};
use crate::scalar::{dyadic, q, qr, Scalar, Q};
use crate::spectral::SpectralData;
use num_traits::Zero;

/// Overall sign of the cubic interaction; fixed by the nonabelian CME.
pub const INTERACTION_SIGN: i64 = 1;
/// Sign relating `Q^∨ ξ*_b` to `Σ_a Q_{ba} φ*_a`; fixed by `[Q, ∂_{P(t,t')}] = Δ_t − Δ_{t'}`.
pub const DUAL_Q_SIGN: i64 = 1;

/// `d_L c*_l = D_L_SCALE · Σ_{ij} f^l_{ij} c*_i c*_j`.
pub const D_L_SCALE: i64 = 1;

/// Relative width of eigenvalue clusters in the heat-operator interpolation.
pub const EIGEN_CLUSTER_REL: f64 = 1e-7;

/// Tolerance on the defining heat-kernel identity.
pub const KERNEL_TOL: f64 = 1e-9;

/// A scale `t ∈ [0, ∞]`.
pub fn is_valid_scale(t: f64) -> bool {
    !t.is_nan() && t >= 0.0
}

/// Kernel `K_t` together with the operators it reproduces.
#[derive(Clone, Debug)]
pub struct BVKernel {
    pub t: f64,
    pub tensor: TwoTensor,
    /// `e^{−tH}` on ghost 0 and ghost 1 in the theory frames.
    pub heat0: QMat,
    pub heat1: QMat,
}

/// The free theory, its action, and everything needed to run the BV machinery.
#[derive(Clone, Debug)]
pub struct BVEngine {
    pub theory: FreeBVTheory,
    pub action: EquivariantAction,
    pub alg: Algebra,
    spectral: Option<SpectralData>,
    g_inv: QMat,
    pub q_dual: Derivation,
    pub d_l: Derivation,
}

fn symmetrize(m: &QMat) -> QMat {
    m.add(&m.transpose()).scale(&qr(1, 2))
}

fn antisymmetrize(m: &QMat) -> QMat {
    m.sub(&m.transpose()).scale(&qr(1, 2))
}

impl BVEngine {
    pub fn new(theory: FreeBVTheory, action: EquivariantAction, caps: Caps) -> Result<Self> {
        action.validate(&theory.dirac)?;
        let n = theory.n;
        let alg = Algebra::new(action.dim(), n, caps);
        let spectral = if theory.dirac.dim() > 0 { Some(SpectralData::new(&theory.dirac)?) } else { None };
        let g_inv = theory.dirac.g.inverse().ok_or_else(|| LabError::NotPositiveDefinite("singular".into()))?;
        let mut q_dual = Derivation::zero(Bidegree::new(1, 0));
        for b in 0..n {
            let mut img = Functional::zero();
            for a in 0..n {
                let c = theory.q[(b, a)].clone();
                if !c.is_zero() {
                    img = img.add(&Functional::gen(Gen::phi(a)).scale(&(c * q(DUAL_Q_SIGN))));
                }
            }
            q_dual.set(Gen::xi(b), img);
        }
        let mut d_l = Derivation::zero(Bidegree::new(1, 0));
        let k = action.dim();
        for l in 0..k {
            let mut img = Functional::zero();
            for i in 0..k {
                for j in 0..k {
                    let f = action.structure[i][j][l].clone();
                    if !f.is_zero() {
                        img = img.add(&Functional::word(&alg, vec![Gen::c(i), Gen::c(j)], 0, f * q(D_L_SCALE)));
                    }
                }
            }
            d_l.set(Gen::c(l), img);
        }
        Ok(BVEngine { theory, action, alg, spectral, g_inv, q_dual, d_l })
    }

    pub fn with_algebra(&self, alg: Algebra) -> Self {
        BVEngine { alg, ..self.clone() }
    }

    pub fn n(&self) -> usize {
        self.theory.n
    }

    fn spectral(&self) -> Result<&SpectralData> {
        self.spectral.as_ref().ok_or_else(|| LabError::Spectral("empty model".into()))
    }

    /// `e^{−tH}` in standard coordinates.
    ///
    /// For finite `t > 0` this is `I − H J(t)` with `J(t)` from
    /// [`Self::integral_std`], so the heat operator, the propagator and `H`
    /// commute exactly and every algebraic identity between them is exact.
    fn heat_std(&self, t: f64) -> Result<QMat> {
        if !is_valid_scale(t) {
            return Err(LabError::Scale(t));
        }
        let d = &self.theory.dirac;
        let n = d.dim();
        let e = if t == 0.0 {
            QMat::identity(n)
        } else if t.is_infinite() {
            d.kernel_projector()
        } else {
            QMat::identity(n).sub(&d.laplacian().mul(&self.integral_std(t)?))
        };
        Ok(symmetrize(&e.mul(&self.g_inv)).mul(&d.g))
    }

    /// `J(t) = ∫_0^t e^{−sH} ds` on `Im D`, as the polynomial in `H` that
    /// interpolates `(1 − e^{−tλ})/λ` at the clustered spectrum and vanishes at 0.
    /// `t = ∞` gives the exact pseudo-inverse `(H + Π)⁻¹ − Π`.
    fn integral_std(&self, t: f64) -> Result<QMat> {
        let d = &self.theory.dirac;
        let n = d.dim();
        let h = d.laplacian();
        if t == 0.0 {
            return Ok(QMat::zeros(n, n));
        }
        if t.is_infinite() {
            let pi = d.kernel_projector();
            return Ok(h.add(&pi).inverse().ok_or_else(|| LabError::Spectral("H + Π is singular".into()))?.sub(&pi));
        }
        let mut nodes: Vec<Q> = vec![q(0)];
        let mut values: Vec<Q> = vec![q(0)];
        for mu in self.spectral()?.distinct_nonzero_eigenvalues(EIGEN_CLUSTER_REL) {
            nodes.push(dyadic(mu));
            values.push(dyadic(-(-t * mu).exp_m1() / mu));
        }
        let mut acc = QMat::zeros(n, n);
        for (k, (xk, yk)) in nodes.iter().zip(&values).enumerate() {
            if yk.is_zero() {
                continue;
            }
            let mut term = QMat::identity(n).scale(yk);
            for (j, xj) in nodes.iter().enumerate() {
                if j != k {
                    let shifted = h.sub(&QMat::identity(n).scale(xj));
                    term = term.mul(&shifted).scale(&(q(1) / (xk.clone() - xj.clone())));
                }
            }
            acc = acc.add(&term);
        }
        Ok(acc)
    }

    /// `F(t) = Q^GF J(t)` in standard coordinates (ghost 1 → ghost 0).
    fn cumulative_std(&self, t: f64) -> Result<QMat> {
        let d = &self.theory.dirac;
        Ok(d.gamma().mul(&d.d()).mul(&self.integral_std(t)?))
    }

    /// BV heat kernel `K_t = −k_{t,1} + k_{t,2}` in the theory frames.
    pub fn kernel(&self, t: f64) -> Result<BVKernel> {
        let n = self.n();
        let e = self.heat_std(t)?;
        let m = e.mul(&self.g_inv);
        let th = &self.theory;
        // e^std_a = Σ_c (Be⁻¹)_{ca} e_c, likewise for f with Bf.
        let be_inv = th.be.inverse().expect("frame");
        let bf_inv = th.bf.inverse().expect("frame");
        let k1 = be_inv.mul(&m).mul(&bf_inv.transpose()); // coefficient of e_a ⊗ f_b
        let k2 = bf_inv.mul(&m).mul(&be_inv.transpose()); // coefficient of f_a ⊗ e_b
        let mut tensor = TwoTensor::zero(n);
        tensor.coeffs.set_block(0, n, &k1.neg());
        tensor.coeffs.set_block(n, 0, &k2);
        let heat0 = th.to_gh0(&e);
        let heat1 = th.to_gh1(&e);
        Ok(BVKernel { t, tensor, heat0, heat1 })
    }

    /// Propagator `P(t, t')` as an element of `e ⊗ e`.
    pub fn propagator(&self, t: f64, t2: f64) -> Result<TwoTensor> {
        if !is_valid_scale(t) || !is_valid_scale(t2) || t > t2 {
            return Err(LabError::Scale(if is_valid_scale(t) { t2 } else { t }));
        }
        let n = self.n();
        let f = self.cumulative_std(t2)?.sub(&self.cumulative_std(t)?);
        let p_std = antisymmetrize(&f.mul(&self.g_inv));
        let be_inv = self.theory.be.inverse().expect("frame");
        let p = be_inv.mul(&p_std).mul(&be_inv.transpose());
        let mut tensor = TwoTensor::zero(n);
        tensor.coeffs.set_block(0, 0, &p);
        Ok(tensor)
    }

    /// Operator of a propagator: ghost 1 → ghost 0 map `A` with `(id⊗⟨⟩)(P⊗f) = A f`.
    pub fn propagator_operator(&self, p: &TwoTensor) -> QMat {
        let n = self.n();
        p.coeffs.block(0, n, 0, n).mul(&self.theory.pair01)
    }

    pub fn laplacian(&self, t: f64) -> Result<Contraction> {
        let k = self.kernel(t)?;
        Ok(self.laplacian_of(&k.tensor))
    }

    /// `Δ = −∂_K`.
    pub fn laplacian_of(&self, k: &TwoTensor) -> Contraction {
        Contraction::from_tensor(&self.alg, k, Bidegree::new(1, 0)).scaled(&q(-1))
    }

    pub fn contraction_of_propagator(&self, p: &TwoTensor) -> Contraction {
        Contraction::from_tensor(&self.alg, p, Bidegree::ZERO)
    }

    pub fn bracket(&self, delta: &Contraction, a: &Functional, b: &Functional) -> Functional {
        poisson_defect(&self.alg, delta, a, b)
    }

    /// Cubic interaction `Σ_i c*_i Σ_{ab} ⟨e_a, γ_i‡ f_b⟩ φ*_a ξ*_b`.
    pub fn interaction(&self) -> Functional {
        let n = self.n();
        let mut out = Functional::zero();
        for i in 0..self.action.dim() {
            let (_, r1) = self.theory.dagger(&self.action, i);
            let b = self.theory.pair01.mul(&r1);
            for a in 0..n {
                for bb in 0..n {
                    let c = b[(a, bb)].clone();
                    if !c.is_zero() {
                        out = out.add(&Functional::word(
                            &self.alg,
                            vec![Gen::c(i), Gen::phi(a), Gen::xi(bb)],
                            0,
                            c * q(INTERACTION_SIGN),
                        ));
                    }
                }
            }
        }
        out
    }

    /// `(d_L + Q) I + ½{I, I}_0`.
    pub fn cme_residual(&self, i: &Functional) -> Result<Functional> {
        let d0 = self.laplacian(0.0)?;
        let br = self.bracket(&d0, i, i).scale(&qr(1, 2));
        Ok(self.d_l.apply(&self.alg, i).add(&self.q_dual.apply(&self.alg, i)).add(&br))
    }

    /// `I[t] = W(P(0,t), I)`.
    pub fn effective(&self, i: &Functional, t: f64) -> Result<Functional> {
        let p = self.contraction_of_propagator(&self.propagator(0.0, t)?);
        rg_flow(&self.alg, &p, i)
    }

    pub fn tree(&self, i: &Functional, t: f64) -> Result<Functional> {
        Ok(self.effective(i, t)?.hbar_part(0))
    }

    pub fn wheel(&self, i: &Functional, t: f64) -> Result<Functional> {
        Ok(self.effective(i, t)?.hbar_part(1))
    }

    /// `QJ + d_L J + ½{J,J}_t + ħΔ_t J`.
    pub fn sqme_residual(&self, j: &Functional, t: f64) -> Result<Functional> {
        let delta = self.laplacian(t)?;
        let a = &self.alg;
        let mut r = self.q_dual.apply(a, j).add(&self.d_l.apply(a, j));
        r = r.add(&self.bracket(&delta, j, j).scale(&qr(1, 2)));
        r = r.add(&delta.apply(a, j).shift_hbar(1));
        Ok(r)
    }

    /// Obstruction by both routes; a mismatch is an error.
    pub fn obstruction(&self, i: &Functional, t: f64) -> Result<Obstruction> {
        let it = self.effective(i, t)?;
        let tr = it.hbar_part(0);
        let wh = it.hbar_part(1);
        let higher = it.filter(|_, k| k >= 2);
        let r = self.sqme_residual(&it, t)?;
        let classical = r.hbar_part(0);
        if !classical.is_zero() {
            return Err(LabError::Identity(format!("scale-t classical master equation fails:\n{classical}")));
        }
        let path_a = r.filter(|_, k| k >= 1).shift_hbar(-1);
        let delta = self.laplacian(t)?;
        let path_b = delta.apply(&self.alg, &tr).add(&self.d_l.apply(&self.alg, &wh));
        if path_a != path_b {
            return Err(LabError::DualPath(format!(
                "defining combination and closed form differ at t = {t}:\n(a)\n{path_a}(b)\n{path_b}"
            )));
        }
        if path_b.terms().any(|(m, k, _)| k != 0 || m.field_degree() != 0 || m.count(Class::C) != 1) {
            return Err(LabError::Identity("obstruction is not a degree-1 element of C(L)".into()));
        }
        let k = self.action.dim();
        let values: Vec<Q> = (0..k).map(|l| path_b.coeff(&Monomial { gens: vec![Gen::c(l)] }, 0)).collect();
        Ok(Obstruction { t, functional: path_b, values, tree: tr, wheel: wh, higher_loops: higher })
    }

    /// Weak QME: `(d_L + Q + {I[t],·}_t + ħΔ_t)² = 0` on every basis monomial.
    pub fn weak_qme(&self, it: &Functional, t: f64, monomials: &[Monomial]) -> Result<(usize, usize)> {
        let wide = self.with_algebra(self.alg.widened(2));
        let delta = wide.laplacian(t)?;
        let op = |f: &Functional| -> Functional {
            let a = &wide.alg;
            wide.d_l
                .apply(a, f)
                .add(&wide.q_dual.apply(a, f))
                .add(&wide.bracket(&delta, it, f))
                .add(&delta.apply(a, f).shift_hbar(1))
        };
        let caps = self.alg.caps;
        let fails: Vec<bool> = crate::par::map(monomials, |m| {
            let f = Functional::word(&wide.alg, m.gens.clone(), 0, q(1));
            !op(&op(&f)).truncate(caps).is_zero()
        });
        Ok((fails.iter().filter(|x| **x).count(), monomials.len()))
    }

    /// `(Q + d_L + Δ_t − Obstr·)(J e^I) = e^I (Q + d_L + Δ_t + {I,·}_t)(J)` at `ħ = 1`.
    pub fn exp_conjugation(&self, i: &Functional, t: f64, monomials: &[Monomial]) -> Result<(usize, usize)> {
        let ob = self.obstruction(i, t)?;
        let ih = self.effective(i, t)?.at_hbar_one();
        let wide = self.with_algebra(self.alg.widened(2));
        let a = &wide.alg;
        let delta = wide.laplacian(t)?;
        let e = exp_nilpotent(a, &ih)?;
        let caps = Caps { hbar: 0, ..self.alg.caps };
        let fails: Vec<bool> = crate::par::map(monomials, |m| {
            let j = Functional::word(a, m.gens.clone(), 0, q(1));
            let je = j.mul(a, &e);
            let lhs = wide
                .q_dual
                .apply(a, &je)
                .add(&wide.d_l.apply(a, &je))
                .add(&delta.apply(a, &je))
                .sub(&ob.functional.mul(a, &je));
            let inner = wide
                .q_dual
                .apply(a, &j)
                .add(&wide.d_l.apply(a, &j))
                .add(&delta.apply(a, &j))
                .add(&wide.bracket(&delta, &ih, &j));
            let rhs = e.mul(a, &inner);
            lhs.at_hbar_one().truncate(caps) != rhs.at_hbar_one().truncate(caps)
        });
        Ok((fails.iter().filter(|x| **x).count(), monomials.len()))
    }

    /// Float values of `−2 Str(ρ(γ_i) e^{−tD²})` for each basis element.
    pub fn spectral_prediction(&self, t: f64) -> Result<Vec<f64>> {
        let sd = self.spectral()?;
        (0..self.action.dim())
            .map(|i| {
                let r: FMat = self.action.rho[i].to_f64();
                Ok(-2.0 * sd.str_with(Some(&r), if t == 0.0 { f64::MIN_POSITIVE } else { t })?)
            })
            .collect()
    }

    /// Mod-ħ transport of `I_tr[t] + εObstr[t]` from `t` to `t2`, compared with direct evaluation.
    pub fn obstruction_transport(&self, i: &Functional, t: f64, t2: f64) -> Result<(bool, bool)> {
        let tr_t = self.tree(i, t)?;
        let tr_t2 = self.tree(i, t2)?;
        let ob_t = self.obstruction(i, t)?.functional;
        let ob_t2 = self.obstruction(i, t2)?.functional;
        let p = self.contraction_of_propagator(&self.propagator(t, t2)?);
        let moved = rg_flow(&self.alg, &p, &tr_t)?.hbar_part(0);
        let tangent = rg_flow_tangent(&self.alg, &p, &tr_t, &ob_t)?.hbar_part(0);
        Ok((moved == tr_t2, tangent == ob_t2))
    }

    /// Residuals of the three kernel invariants.
    pub fn kernel_checks(&self, k: &BVKernel) -> (f64, bool, bool) {
        let n = self.n();
        let th = &self.theory;
        // −(id⊗⟨⟩)(K ⊗ f): for f = e_c the e-part, for f = f_c the f-part (sign from ⟨⟩ passing f_a).
        let a = k.tensor.coeffs.block(0, n, n, 2 * n);
        let b = k.tensor.coeffs.block(n, 2 * n, 0, n);
        let on_e = a.mul(&th.pair01.transpose()).neg();
        let on_f = b.mul(&th.pair01);
        let r0 = on_e.sub(&k.heat0).max_abs();
        let r1 = on_f.sub(&k.heat1).max_abs();
        let interchange_antisym = k.tensor.interchange() == k.tensor.neg();
        let split = k.tensor.coeffs.block(0, n, 0, n).is_zero() && k.tensor.coeffs.block(n, 2 * n, n, 2 * n).is_zero();
        (r0.max(r1), interchange_antisym, split)
    }
}

/// Result of the dual-path obstruction computation.
#[derive(Clone, Debug)]
pub struct Obstruction {
    pub t: f64,
    pub functional: Functional,
    /// Coefficient of `c*_i`, i.e. the value on the basis element `γ_i`.
    pub values: Vec<Q>,
    pub tree: Functional,
    pub wheel: Functional,
    pub higher_loops: Functional,
}

impl Obstruction {
    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.to_f64()).collect()
    }
}

/// QME report in weak or strong mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QmeMode {
    Weak,
    Strong,
}

pub fn qme_check(engine: &BVEngine, t: f64, mode: QmeMode, monomials: &[Monomial]) -> Result<Report> {
    let i = engine.interaction();
    let it = engine.effective(&i, t)?;
    let mut r = Report::new();
    match mode {
        QmeMode::Weak => {
            let (fails, total) = engine.weak_qme(&it, t, monomials)?;
            r.push(
                Claim::compare("weak QME: (d_L + Q + {I[t],-} + hbar Delta_t)^2 = 0", &[t], vec![fails as f64], vec![0.0], 0.0)
                    .with_note(format!("{total} basis monomials")),
            );
        }
        QmeMode::Strong => {
            let ob = engine.obstruction(&i, t)?;
            let res = engine.sqme_residual(&it, t)?;
            let expected = ob.functional.shift_hbar(1);
            let diff = res.sub(&expected);
            r.push(Claim::compare(
                "strong QME residual equals hbar * Obstr[t]",
                &[t],
                vec![diff.max_abs()],
                vec![0.0],
                0.0,
            ));
        }
    }
    Ok(r)
}
