//! Finite-dimensional Dirac data: abstract matrix models, Hodge–Dirac
//! operators of simplicial complexes, Lie-algebra actions, and the free BV
//! theory `S = V ⊕ V[−1]` with its gauge fixing.

use crate::error::{LabError, Result};
use crate::linalg::{kron, orthogonalize, FMat, QMat};
use crate::scalar::{q, Q};
use nalgebra::DMatrix;
use num_traits::{One, Zero};
use std::collections::BTreeMap;

/// Relative singular-value threshold for floating rank decisions.
pub const RANK_REL_TOL: f64 = 1e-8;
/// Singular values within this factor of the threshold are ambiguous.
pub const RANK_AMBIGUITY_BAND: f64 = 10.0;

/// `V = V⁺ ⊕ V⁻` with a block-diagonal inner product and `D⁺: V⁺ → V⁻`.
///
/// The odd block `D⁻` defaults to the adjoint of `D⁺`; it is stored
/// separately so that deliberately broken models can be represented.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracData {
    pub vplus_dim: usize,
    pub vminus_dim: usize,
    pub g: QMat,
    pub dplus: QMat,
    pub dminus: QMat,
    pub name: String,
}

impl DiracData {
    pub fn dim(&self) -> usize {
        self.vplus_dim + self.vminus_dim
    }

    pub fn g_plus(&self) -> QMat {
        self.g.block(0, self.vplus_dim, 0, self.vplus_dim)
    }

    pub fn g_minus(&self) -> QMat {
        let p = self.vplus_dim;
        self.g.block(p, self.dim(), p, self.dim())
    }

    /// Full odd operator `[[0, D⁻], [D⁺, 0]]`.
    pub fn d(&self) -> QMat {
        let (p, n) = (self.vplus_dim, self.dim());
        let mut m = QMat::zeros(n, n);
        m.set_block(p, 0, &self.dplus);
        m.set_block(0, p, &self.dminus);
        m
    }

    /// Chirality involution Γ.
    pub fn gamma(&self) -> QMat {
        let d: Vec<Q> = (0..self.dim()).map(|i| if i < self.vplus_dim { q(1) } else { q(-1) }).collect();
        QMat::diag(&d)
    }

    pub fn laplacian(&self) -> QMat {
        let d = self.d();
        d.mul(&d)
    }

    /// `G`-adjoint `G⁻¹ Aᵀ G` of an endomorphism of `V`.
    pub fn adjoint(&self, a: &QMat) -> QMat {
        let gi = self.g.inverse().expect("inner product is invertible");
        gi.mul(&a.transpose()).mul(&self.g)
    }

    /// Largest entry of `G D − Dᵀ G`: zero iff `⟨Dv,w⟩ = ⟨v,Dw⟩` on all basis pairs.
    pub fn self_adjointness_residual(&self) -> f64 {
        let d = self.d();
        let gd = self.g.mul(&d);
        gd.sub(&gd.transpose()).max_abs()
    }

    pub fn is_self_adjoint(&self) -> bool {
        let d = self.d();
        let gd = self.g.mul(&d);
        gd == gd.transpose()
    }

    /// Exact kernel bases of `D⁺` and `D⁻`.
    pub fn kernels(&self) -> (Vec<Vec<Q>>, Vec<Vec<Q>>) {
        (self.dplus.nullspace(), self.dminus.nullspace())
    }

    /// Exact index: `dim ker D⁺ − dim ker D⁻`.
    pub fn index(&self) -> i64 {
        let (kp, km) = self.kernels();
        kp.len() as i64 - km.len() as i64
    }

    /// Index from `dim V⁺ − rank D⁺ − (dim V⁻ − rank D⁻)` using singular values of `D⁺`
    /// and `D⁻`, with an explicit error when a singular value sits near the threshold.
    pub fn index_float(&self) -> Result<i64> {
        let np = nullity_float(&self.dplus.to_f64())?;
        let nm = nullity_float(&self.dminus.to_f64())?;
        Ok(np as i64 - nm as i64)
    }

    /// `G`-orthogonal projector onto `ker D` (exact), split as `(Π₊, Π₋)` on `V`.
    pub fn kernel_projector(&self) -> QMat {
        let n = self.dim();
        let basis = self.kernel_basis_full();
        let mut pi = QMat::zeros(n, n);
        for u in &basis {
            let nrm = crate::linalg::dot_g(&self.g, u, u);
            let gu = self.g.mul_vec(u);
            for i in 0..n {
                if u[i].is_zero() {
                    continue;
                }
                for j in 0..n {
                    let v = pi[(i, j)].clone() + u[i].clone() * gu[j].clone() / nrm.clone();
                    pi[(i, j)] = v;
                }
            }
        }
        pi
    }

    /// `G`-orthogonal kernel basis in `V` coordinates: `ker D⁺` vectors first.
    pub fn kernel_basis_full(&self) -> Vec<Vec<Q>> {
        let (p, n) = (self.vplus_dim, self.dim());
        let (kp, km) = self.kernels();
        let lift = |v: &Vec<Q>, off: usize| {
            let mut w = vec![Q::zero(); n];
            for (i, x) in v.iter().enumerate() {
                w[off + i] = x.clone();
            }
            w
        };
        let mut out = orthogonalize(&self.g, &kp.iter().map(|v| lift(v, 0)).collect::<Vec<_>>());
        out.extend(orthogonalize(&self.g, &km.iter().map(|v| lift(v, p)).collect::<Vec<_>>()));
        out
    }

    /// Basis of `Im D` (columns of `D` reduced to an independent set).
    pub fn image_basis(&self) -> Vec<Vec<Q>> {
        let d = self.d();
        let (_, pivots) = d.rref();
        pivots.iter().map(|&c| d.col(c)).collect()
    }

    /// Hodge decomposition check: `Π` (onto `ker D`) and `Π_im` (onto `Im D`) are
    /// complementary `G`-orthogonal idempotents. Returns the largest residual.
    pub fn hodge_residual(&self) -> f64 {
        let n = self.dim();
        let pk = self.kernel_projector();
        let im = self.image_basis();
        let pim = projector_onto(&self.g, &im, n);
        let id = QMat::identity(n);
        let r1 = pk.add(&pim).sub(&id).max_abs();
        let r2 = pk.mul(&pim).max_abs();
        let gp = self.g.mul(&pk);
        let r3 = gp.sub(&gp.transpose()).max_abs();
        r1.max(r2).max(r3)
    }

    /// Perturb one entry of `D⁻` (breaks formal self-adjointness when `eps ≠ 0`).
    pub fn with_broken_adjoint(&self, eps: Q) -> DiracData {
        let mut out = self.clone();
        if out.dminus.rows > 0 && out.dminus.cols > 0 {
            let v = out.dminus[(0, 0)].clone() + eps;
            out.dminus[(0, 0)] = v;
        }
        out
    }
}

fn projector_onto(g: &QMat, vs: &[Vec<Q>], n: usize) -> QMat {
    let o = orthogonalize(g, vs);
    let mut p = QMat::zeros(n, n);
    for u in &o {
        let nrm = crate::linalg::dot_g(g, u, u);
        let gu = g.mul_vec(u);
        for i in 0..n {
            for j in 0..n {
                let v = p[(i, j)].clone() + u[i].clone() * gu[j].clone() / nrm.clone();
                p[(i, j)] = v;
            }
        }
    }
    p
}

fn nullity_float(m: &FMat) -> Result<usize> {
    if m.cols == 0 {
        return Ok(0);
    }
    if m.rows == 0 {
        return Ok(m.cols);
    }
    let svd = m.to_dmatrix().svd(false, false);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(m.cols);
    }
    let thr = RANK_REL_TOL * smax;
    let mut rank = 0;
    for &s in &sv {
        if s > thr / RANK_AMBIGUITY_BAND && s < thr * RANK_AMBIGUITY_BAND {
            return Err(LabError::RankAmbiguous { value: s, threshold: thr, band: RANK_AMBIGUITY_BAND });
        }
        if s >= thr {
            rank += 1;
        }
    }
    Ok(m.cols - rank)
}

fn is_block_diagonal(g: &QMat, p: usize) -> bool {
    (0..g.rows).all(|i| (0..g.cols).all(|j| (i < p) == (j < p) || g[(i, j)].is_zero()))
}

/// Exact positive-definiteness test by symmetric Gaussian elimination.
pub fn is_positive_definite(g: &QMat) -> bool {
    if g.rows != g.cols || *g != g.transpose() {
        return false;
    }
    let mut m = g.clone();
    let n = m.rows;
    for k in 0..n {
        if m[(k, k)] <= Q::zero() {
            return false;
        }
        let pivot = m[(k, k)].clone();
        for i in k + 1..n {
            let f = m[(i, k)].clone() / pivot.clone();
            if f.is_zero() {
                continue;
            }
            for j in k..n {
                let v = m[(i, j)].clone() - f.clone() * m[(k, j)].clone();
                m[(i, j)] = v;
            }
        }
    }
    true
}

/// Validated abstract Dirac data; `D⁻ = (D⁺)*` with respect to `g`.
pub fn build_abstract(vplus_dim: usize, vminus_dim: usize, dplus: QMat, g: Option<QMat>) -> Result<DiracData> {
    let n = vplus_dim + vminus_dim;
    if vplus_dim + vminus_dim == 0 {
        return Err(LabError::Dimension("empty space".into()));
    }
    if dplus.rows != vminus_dim || dplus.cols != vplus_dim {
        return Err(LabError::Dimension(format!(
            "D⁺ must be {vminus_dim}x{vplus_dim}, got {}x{}",
            dplus.rows, dplus.cols
        )));
    }
    let g = g.unwrap_or_else(|| QMat::identity(n));
    if g.rows != n || g.cols != n {
        return Err(LabError::Dimension(format!("inner product must be {n}x{n}")));
    }
    if g != g.transpose() {
        return Err(LabError::NotPositiveDefinite("not symmetric".into()));
    }
    if !is_block_diagonal(&g, vplus_dim) {
        return Err(LabError::NotPositiveDefinite("not block-diagonal across the grading".into()));
    }
    if !is_positive_definite(&g) {
        return Err(LabError::NotPositiveDefinite("a pivot is non-positive".into()));
    }
    let gp = g.block(0, vplus_dim, 0, vplus_dim);
    let gm = g.block(vplus_dim, n, vplus_dim, n);
    let dminus = gp.inverse().expect("positive definite").mul(&dplus.transpose()).mul(&gm);
    Ok(DiracData { vplus_dim, vminus_dim, g, dplus, dminus, name: "abstract".into() })
}

/// Finite simplicial complex; simplices are sorted vertex-index lists.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplicialComplex {
    pub vertices: Vec<String>,
    pub simplices: Vec<Vec<usize>>,
    pub weights: Option<Vec<Q>>,
}

impl SimplicialComplex {
    /// Complex generated by the given facets (all faces added, unit weights).
    pub fn closure(n_vertices: usize, facets: &[Vec<usize>]) -> Self {
        let mut set: std::collections::BTreeSet<Vec<usize>> = Default::default();
        for f in facets {
            let mut f = f.clone();
            f.sort_unstable();
            let k = f.len();
            for mask in 1u32..(1 << k) {
                let s: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| f[i]).collect();
                set.insert(s);
            }
        }
        let mut simplices: Vec<Vec<usize>> = set.into_iter().collect();
        simplices.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        SimplicialComplex { vertices: (0..n_vertices).map(|i| format!("v{i}")).collect(), simplices, weights: None }
    }

    pub fn max_dim(&self) -> usize {
        self.simplices.iter().map(|s| s.len()).max().unwrap_or(1) - 1
    }

    /// Number of simplices per dimension.
    pub fn f_vector(&self) -> Vec<usize> {
        let mut f = vec![0; self.max_dim() + 1];
        for s in &self.simplices {
            f[s.len() - 1] += 1;
        }
        f
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.f_vector().iter().enumerate().map(|(p, &c)| if p % 2 == 0 { c as i64 } else { -(c as i64) }).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut index: BTreeMap<&[usize], usize> = BTreeMap::new();
        for (i, s) in self.simplices.iter().enumerate() {
            if s.is_empty() {
                return Err(LabError::InvalidModel("empty simplex".into()));
            }
            if s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LabError::InvalidModel(format!("simplex {s:?} is not strictly sorted")));
            }
            if s.iter().any(|&v| v >= self.vertices.len()) {
                return Err(LabError::InvalidModel(format!("simplex {s:?} uses an unknown vertex")));
            }
            if index.insert(s.as_slice(), i).is_some() {
                return Err(LabError::InvalidModel(format!("simplex {s:?} listed twice")));
            }
        }
        for s in &self.simplices {
            if s.len() < 2 {
                continue;
            }
            for skip in 0..s.len() {
                let face: Vec<usize> = s.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &v)| v).collect();
                if !index.contains_key(face.as_slice()) {
                    return Err(LabError::FaceClosure(format!("face {face:?} of {s:?} is missing")));
                }
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.simplices.len() {
                return Err(LabError::InvalidModel("one weight per simplex is required".into()));
            }
            if w.iter().any(|x| *x <= Q::zero()) {
                return Err(LabError::NotPositiveDefinite("simplex weights must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Hodge–Dirac operator `d + d*`: `V⁺` = even cochains, `V⁻` = odd cochains.
pub fn hodge_dirac(sc: &SimplicialComplex) -> Result<DiracData> {
    sc.validate()?;
    let n = sc.simplices.len();
    let weight = |i: usize| sc.weights.as_ref().map_or_else(Q::one, |w| w[i].clone());
    let mut even: Vec<usize> = Vec::new();
    let mut odd: Vec<usize> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&sc.simplices[a], &sc.simplices[b]);
        sa.len().cmp(&sb.len()).then(sa.cmp(sb))
    });
    for &i in &order {
        if (sc.simplices[i].len() - 1).is_multiple_of(2) {
            even.push(i);
        } else {
            odd.push(i);
        }
    }
    let basis: Vec<usize> = even.iter().chain(odd.iter()).copied().collect();
    let pos: BTreeMap<&[usize], usize> =
        basis.iter().enumerate().map(|(k, &i)| (sc.simplices[i].as_slice(), k)).collect();
    // Coboundary in the V basis: (dω)(σ) = Σ_i (−1)^i ω(∂_i σ).
    let mut dmat = QMat::zeros(n, n);
    for (row, &i) in basis.iter().enumerate() {
        let s = &sc.simplices[i];
        if s.len() < 2 {
            continue;
        }
        for skip in 0..s.len() {
            let face: Vec<usize> = s.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &v)| v).collect();
            let col = pos[face.as_slice()];
            dmat[(row, col)] = if skip % 2 == 0 { q(1) } else { q(-1) };
        }
    }
    let g = QMat::diag(&basis.iter().map(|&i| weight(i)).collect::<Vec<_>>());
    let gi = g.inverse().expect("positive weights");
    let dstar = gi.mul(&dmat.transpose()).mul(&g);
    let full = dmat.add(&dstar);
    let p = even.len();
    let dplus = full.block(p, n, 0, p);
    let dminus = full.block(0, p, p, n);
    Ok(DiracData { vplus_dim: p, vminus_dim: n - p, g, dplus, dminus, name: "simplicial".into() })
}

/// Lie algebra with structure constants `f[i][j][k] = f^k_{ij}` acting on `V`
/// by even endomorphisms `rho[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivariantAction {
    pub structure: Vec<Vec<Vec<Q>>>,
    pub rho: Vec<QMat>,
    pub name: String,
}

impl EquivariantAction {
    pub fn dim(&self) -> usize {
        self.rho.len()
    }

    pub fn abelian(rho: Vec<QMat>, name: &str) -> Self {
        let k = rho.len();
        EquivariantAction { structure: vec![vec![vec![Q::zero(); k]; k]; k], rho, name: name.into() }
    }

    pub fn bracket_coeffs(&self, i: usize, j: usize) -> &[Q] {
        &self.structure[i][j]
    }

    /// `ρ(γ) = Σ γ_i ρ(γ_i)`.
    pub fn rho_of(&self, gamma: &[Q]) -> QMat {
        let n = self.rho.first().map_or(0, |r| r.rows);
        let mut m = QMat::zeros(n, n);
        for (c, r) in gamma.iter().zip(&self.rho) {
            if !c.is_zero() {
                m = m.add(&r.scale(c));
            }
        }
        m
    }

    pub fn rho_of_f64(&self, gamma: &[f64]) -> FMat {
        let n = self.rho.first().map_or(0, |r| r.rows);
        let mut m = FMat::zeros(n, n);
        for (c, r) in gamma.iter().zip(&self.rho) {
            m = m.add(&r.to_f64().scale(c));
        }
        m
    }

    /// Structure constants of `[x, y]` for coefficient vectors `x`, `y`.
    pub fn bracket(&self, x: &[Q], y: &[Q]) -> Vec<Q> {
        let k = self.dim();
        let mut out = vec![Q::zero(); k];
        for i in 0..k {
            for j in 0..k {
                if x[i].is_zero() || y[j].is_zero() {
                    continue;
                }
                for (l, f) in self.structure[i][j].iter().enumerate() {
                    if !f.is_zero() {
                        out[l] = out[l].clone() + x[i].clone() * y[j].clone() * f.clone();
                    }
                }
            }
        }
        out
    }

    /// Checks antisymmetry and Jacobi of the structure constants and the three
    /// action axioms against `d`.
    pub fn validate(&self, d: &DiracData) -> Result<()> {
        let k = self.dim();
        let n = d.dim();
        if self.structure.len() != k || self.structure.iter().any(|r| r.len() != k || r.iter().any(|c| c.len() != k)) {
            return Err(LabError::Action("structure constants must be k×k×k".into()));
        }
        for r in &self.rho {
            if r.rows != n || r.cols != n {
                return Err(LabError::Action(format!("ρ must be {n}x{n}")));
            }
        }
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    if self.structure[i][j][l].clone() + self.structure[j][i][l].clone() != Q::zero() {
                        return Err(LabError::Action("structure constants are not antisymmetric".into()));
                    }
                }
            }
        }
        let p = d.vplus_dim;
        let dm = d.d();
        for (i, r) in self.rho.iter().enumerate() {
            for a in 0..n {
                for b in 0..n {
                    if (a < p) != (b < p) && !r[(a, b)].is_zero() {
                        return Err(LabError::Action(format!("ρ(γ_{i}) does not preserve V⁺ and V⁻")));
                    }
                }
            }
            if r.mul(&dm) != dm.mul(r) {
                return Err(LabError::Action(format!("ρ(γ_{i}) does not commute with D")));
            }
        }
        for i in 0..k {
            for j in 0..k {
                let lhs = self.rho_of(&self.structure[i][j]);
                let rhs = self.rho[i].mul(&self.rho[j]).sub(&self.rho[j].mul(&self.rho[i]));
                if lhs != rhs {
                    return Err(LabError::Action(format!("ρ([γ_{i},γ_{j}]) ≠ [ρ(γ_{i}),ρ(γ_{j})]")));
                }
            }
        }
        Ok(())
    }

    /// The action `γ‡` on `S = V ⊕ V[−1]`: blocks `(gh0, gh1)` on `V`.
    /// Acts by `ρ` on `V⁺ ⊕ V⁻[−1]` and by `−ρ*` on `V⁻ ⊕ V⁺[−1]`.
    pub fn dagger(&self, d: &DiracData, i: usize) -> (QMat, QMat) {
        dagger_of(d, &self.rho[i])
    }
}

pub fn dagger_of(d: &DiracData, r: &QMat) -> (QMat, QMat) {
    let (p, n) = (d.vplus_dim, d.dim());
    let radj = d.adjoint(r);
    let mut g0 = QMat::zeros(n, n);
    let mut g1 = QMat::zeros(n, n);
    g0.set_block(0, 0, &r.block(0, p, 0, p));
    g0.set_block(p, p, &radj.block(p, n, p, n).neg());
    g1.set_block(0, 0, &radj.block(0, p, 0, p).neg());
    g1.set_block(p, p, &r.block(p, n, p, n));
    (g0, g1)
}

/// Axial symmetry: one-dimensional abelian algebra with `ρ = id`, so that
/// `λ‡ = λΓ` on ghost-0 fields and `−λΓ` on ghost-1 fields.
pub fn axial_action(d: &DiracData) -> EquivariantAction {
    EquivariantAction::abelian(vec![QMat::identity(d.dim())], "axial")
}

/// `Tr(A|ker D⁺) − Tr(A|ker D⁻)` via the exact `G`-orthogonal kernel projector.
pub fn kernel_supertrace(d: &DiracData, a: &QMat) -> Q {
    let pi = d.kernel_projector();
    let m = pi.mul(a).mul(&pi);
    let p = d.vplus_dim;
    let mut acc = Q::zero();
    for i in 0..d.dim() {
        acc = if i < p { acc + m[(i, i)].clone() } else { acc - m[(i, i)].clone() };
    }
    acc
}

/// Equivariant index `Tr(ρ(γ)|ker D⁺) − Tr(ρ(γ)|ker D⁻)` (exact).
pub fn equivariant_index(d: &DiracData, a: &EquivariantAction, gamma: &[Q]) -> Result<Q> {
    a.validate(d)?;
    Ok(kernel_supertrace(d, &a.rho_of(gamma)))
}

/// Floating equivariant index from an orthonormal kernel basis obtained by SVD.
pub fn equivariant_index_f64(d: &DiracData, a: &EquivariantAction, gamma: &[f64]) -> Result<f64> {
    a.validate(d)?;
    let r = a.rho_of_f64(gamma);
    let (p, n) = (d.vplus_dim, d.dim());
    let kp = kernel_frame_f64(&d.dplus.to_f64(), &d.g_plus().to_f64())?;
    let km = kernel_frame_f64(&d.dminus.to_f64(), &d.g_minus().to_f64())?;
    let gf = d.g.to_f64().to_dmatrix();
    let rf = r.to_dmatrix();
    let mut acc = 0.0;
    for (frame, off, sign) in [(kp, 0usize, 1.0), (km, p, -1.0)] {
        for u in frame {
            let mut full = nalgebra::DVector::zeros(n);
            for (i, x) in u.iter().enumerate() {
                full[off + i] = *x;
            }
            acc += sign * (full.transpose() * &gf * &rf * &full)[(0, 0)];
        }
    }
    Ok(acc)
}

/// `G`-orthonormal basis of `ker A` for `A` acting on a space with metric `g`.
pub fn kernel_frame_f64(a: &FMat, g: &FMat) -> Result<Vec<Vec<f64>>> {
    let n = a.cols;
    if n == 0 {
        return Ok(vec![]);
    }
    let chol = g.to_dmatrix().cholesky().ok_or_else(|| LabError::NotPositiveDefinite("Cholesky failed".into()))?;
    let l = chol.l();
    let lt_inv = l.transpose().try_inverse().ok_or_else(|| LabError::Spectral("singular metric".into()))?;
    // In coordinates y = Lᵀx the metric is Euclidean.
    let b = if a.rows == 0 { DMatrix::zeros(1, n) } else { a.to_dmatrix() * &lt_inv };
    let bt_b = b.transpose() * &b;
    let eig = bt_b.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let thr = if lmax == 0.0 { f64::INFINITY } else { (RANK_REL_TOL * lmax.sqrt()).powi(2) };
    let mut out = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lmax != 0.0 && lam > thr / RANK_AMBIGUITY_BAND && lam < thr * RANK_AMBIGUITY_BAND {
            return Err(LabError::RankAmbiguous { value: lam.sqrt(), threshold: thr.sqrt(), band: RANK_AMBIGUITY_BAND });
        }
        if lmax == 0.0 || lam < thr {
            let y = eig.eigenvectors.column(k);
            let x = &lt_inv * y;
            out.push(x.iter().copied().collect());
        }
    }
    Ok(out)
}

/// `R^m ⊗ V` with `D⁺ = id ⊗ D⁺` and the representation `r ↦ r ⊗ id` of a
/// Lie algebra given by structure constants and `m×m` matrices.
pub fn tensor_model(
    base: &DiracData,
    structure: Vec<Vec<Vec<Q>>>,
    reps: &[QMat],
    name: &str,
) -> Result<(DiracData, EquivariantAction)> {
    let m = reps.first().map_or(1, |r| r.rows);
    let (p0, n0) = (base.vplus_dim, base.dim());
    let id = QMat::identity(m);
    let p = m * p0;
    let n = m * n0;
    let mut g = QMat::zeros(n, n);
    g.set_block(0, 0, &kron(&id, &base.g_plus()));
    g.set_block(p, p, &kron(&id, &base.g_minus()));
    let mut d = build_abstract(p, n - p, kron(&id, &base.dplus), Some(g))?;
    d.name = name.into();
    let lift = |r: &QMat| {
        let mut out = QMat::zeros(n, n);
        out.set_block(0, 0, &kron(r, &QMat::identity(p0)));
        out.set_block(p, p, &kron(r, &QMat::identity(n0 - p0)));
        out
    };
    let action = EquivariantAction { structure, rho: reps.iter().map(lift).collect(), name: name.into() };
    action.validate(&d)?;
    Ok((d, action))
}

/// `V₁ ⊕ V₂` with the abelian action of `R²` by the two block projectors.
pub fn two_block_model(a: &DiracData, b: &DiracData) -> Result<(DiracData, EquivariantAction)> {
    let (pa, pb) = (a.vplus_dim, b.vplus_dim);
    let (ma, mb) = (a.vminus_dim, b.vminus_dim);
    let p = pa + pb;
    let n = a.dim() + b.dim();
    let mut g = QMat::zeros(n, n);
    g.set_block(0, 0, &a.g_plus());
    g.set_block(pa, pa, &b.g_plus());
    g.set_block(p, p, &a.g_minus());
    g.set_block(p + ma, p + ma, &b.g_minus());
    let mut dplus = QMat::zeros(ma + mb, p);
    dplus.set_block(0, 0, &a.dplus);
    dplus.set_block(ma, pa, &b.dplus);
    let mut d = build_abstract(p, ma + mb, dplus, Some(g))?;
    d.name = "two-block".into();
    let proj = |first: bool| {
        let v: Vec<Q> = (0..n)
            .map(|i| {
                let in_a = if i < p { i < pa } else { i - p < ma };
                if in_a == first { q(1) } else { q(0) }
            })
            .collect();
        QMat::diag(&v)
    };
    let action = EquivariantAction::abelian(vec![proj(true), proj(false)], "two-block");
    action.validate(&d)?;
    Ok((d, action))
}

/// Structure constants of `so(3)`: `[L_i, L_j] = ε_{ijk} L_k`, with the
/// defining representation.
pub fn so3() -> (Vec<Vec<Vec<Q>>>, Vec<QMat>) {
    let mut f = vec![vec![vec![Q::zero(); 3]; 3]; 3];
    let mut reps = vec![QMat::zeros(3, 3); 3];
    for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
        f[i][j][k] = q(1);
        f[j][i][k] = q(-1);
        reps[k][(j, i)] = q(1);
        reps[k][(i, j)] = q(-1);
    }
    (f, reps)
}

/// Two-dimensional solvable algebra `[x, y] = y` acting on `R²` by
/// `x = e₁₁`, `y = e₁₂`.
pub fn solvable2() -> (Vec<Vec<Vec<Q>>>, Vec<QMat>) {
    let mut f = vec![vec![vec![Q::zero(); 2]; 2]; 2];
    f[0][1][1] = q(1);
    f[1][0][1] = q(-1);
    let x = QMat::from_rows(vec![vec![q(1), q(0)], vec![q(0), q(0)]]).expect("2x2");
    let y = QMat::from_rows(vec![vec![q(0), q(1)], vec![q(0), q(0)]]).expect("2x2");
    (f, vec![x, y])
}

/// Free BV theory of the massless fermion in a chosen pair of frames.
///
/// Ghost-0 fields `e_a` use frame `be` (columns in `V`), ghost-1 fields `f_a`
/// use frame `bf`. All maps are stored as `n×n` blocks in these frames.
#[derive(Clone, Debug)]
pub struct FreeBVTheory {
    pub dirac: DiracData,
    pub n: usize,
    pub be: QMat,
    pub bf: QMat,
    be_inv: QMat,
    bf_inv: QMat,
    /// `⟨e_a, f_b⟩`; the pairing is brute-symmetric so `⟨f_b, e_a⟩` is the same number.
    pub pair01: QMat,
    /// `Q = D_{0→1} Γ_{0→0}` as a map from ghost 0 to ghost 1.
    pub q: QMat,
    /// `Q^GF = Γ_{0→0} D_{1→0}` as a map from ghost 1 to ghost 0.
    pub qgf: QMat,
}

impl FreeBVTheory {
    pub fn new(d: &DiracData) -> Self {
        let n = d.dim();
        Self::in_frame(d, QMat::identity(n), QMat::identity(n))
    }

    pub fn in_frame(d: &DiracData, be: QMat, bf: QMat) -> Self {
        let be_inv = be.inverse().expect("ghost-0 frame is invertible");
        let bf_inv = bf.inverse().expect("ghost-1 frame is invertible");
        let dm = d.d();
        let gam = d.gamma();
        let q = bf_inv.mul(&dm.mul(&gam)).mul(&be);
        let qgf = be_inv.mul(&gam.mul(&dm)).mul(&bf);
        let pair01 = be.transpose().mul(&d.g).mul(&bf);
        FreeBVTheory { dirac: d.clone(), n: d.dim(), be, bf, be_inv, bf_inv, pair01, q, qgf }
    }

    /// Darboux frame adapted to `V = ker D ⊕ Im D`: ghost-0 frame is an
    /// orthogonal kernel basis followed by an image basis, ghost-1 frame is its
    /// pairing dual, so `⟨e_a, f_b⟩ = δ_ab`. Returns the theory and `dim ker D`.
    pub fn adapted(d: &DiracData) -> (Self, usize) {
        let n = d.dim();
        let kb = d.kernel_basis_full();
        let ib = d.image_basis();
        let k = kb.len();
        let cols: Vec<Vec<Q>> = kb.into_iter().chain(ib).collect();
        assert_eq!(cols.len(), n, "ker D ⊕ Im D must span V");
        let be = QMat::from_fn(n, n, |i, j| cols[j][i].clone());
        let bf = d.g.mul(&be).transpose().inverse().expect("frame is invertible");
        (Self::in_frame(d, be, bf), k)
    }

    /// Transport an operator on `V` (standard basis) into the ghost-0 frame.
    pub fn to_gh0(&self, a: &QMat) -> QMat {
        self.be_inv.mul(a).mul(&self.be)
    }

    pub fn to_gh1(&self, a: &QMat) -> QMat {
        self.bf_inv.mul(a).mul(&self.bf)
    }

    /// Operator from ghost 1 to ghost 0 given in the standard basis.
    pub fn to_10(&self, a: &QMat) -> QMat {
        self.be_inv.mul(a).mul(&self.bf)
    }

    /// `γ‡` blocks in the theory frames.
    pub fn dagger(&self, a: &EquivariantAction, i: usize) -> (QMat, QMat) {
        let (g0, g1) = a.dagger(&self.dirac, i);
        (self.to_gh0(&g0), self.to_gh1(&g1))
    }

    /// Full `2n×2n` pairing matrix on `S` (ghost 0 indices first).
    pub fn pairing_matrix(&self) -> QMat {
        let n = self.n;
        let mut m = QMat::zeros(2 * n, 2 * n);
        m.set_block(0, n, &self.pair01);
        m.set_block(n, 0, &self.pair01.transpose());
        m
    }

    pub fn q_full(&self) -> QMat {
        let n = self.n;
        let mut m = QMat::zeros(2 * n, 2 * n);
        m.set_block(n, 0, &self.q);
        m
    }

    pub fn qgf_full(&self) -> QMat {
        let n = self.n;
        let mut m = QMat::zeros(2 * n, 2 * n);
        m.set_block(0, n, &self.qgf);
        m
    }

    /// Ghost degree of basis element `i` of `S`.
    pub fn ghost(&self, i: usize) -> i32 {
        if i < self.n {
            0
        } else {
            1
        }
    }

    /// Residuals of the free-theory axioms, each exactly zero for valid data:
    /// pairing graded antisymmetry, non-degeneracy, `Q² = 0`, `Q` skew and
    /// `Q^GF` self-adjoint for the pairing, `[Q, Q^GF] = D² ⊕ D²`.
    pub fn axiom_residuals(&self) -> Vec<(&'static str, bool)> {
        let n = self.n;
        let om = self.pairing_matrix();
        let qf = self.q_full();
        let gf = self.qgf_full();
        let mut antisym = true;
        for i in 0..2 * n {
            for j in 0..2 * n {
                // ⟨x,y⟩ = −(−1)^{|x||y|+π_xπ_y} ⟨y,x⟩ with all fields fermionic.
                let s = crate::graded::koszul_swap_sign(
                    crate::graded::Bidegree::new(self.ghost(i), 1),
                    crate::graded::Bidegree::new(self.ghost(j), 1),
                );
                let rhs = if s > 0 { -om[(j, i)].clone() } else { om[(j, i)].clone() };
                if om[(i, j)] != rhs {
                    antisym = false;
                }
            }
        }
        let nondeg = om.rank() == 2 * n;
        let q2 = qf.mul(&qf).is_zero();
        // ⟨A x, y⟩ = ε (−1)^{|A||x|} ⟨x, A y⟩ with ε = −1 for Q, +1 for Q^GF.
        let adj = |a: &QMat, deg: i32, eps: i32| -> bool {
            let ax = a.transpose().mul(&om); // (i,j) = ⟨A e_i, e_j⟩
            let xa = om.mul(a); // (i,j) = ⟨e_i, A e_j⟩
            (0..2 * n).all(|i| {
                (0..2 * n).all(|j| {
                    let s = if (deg * self.ghost(i)).rem_euclid(2) == 0 { eps } else { -eps };
                    let r = if s > 0 { xa[(i, j)].clone() } else { -xa[(i, j)].clone() };
                    ax[(i, j)] == r
                })
            })
        };
        let q_skew = adj(&qf, 1, -1);
        let qgf_sa = adj(&gf, -1, 1);
        let h = qf.mul(&gf).add(&gf.mul(&qf));
        let lap = self.dirac.laplacian();
        let mut hexp = QMat::zeros(2 * n, 2 * n);
        hexp.set_block(0, 0, &self.to_gh0(&lap));
        hexp.set_block(n, n, &self.to_gh1(&lap));
        let h_ok = h == hexp;
        vec![
            ("pairing graded antisymmetry", antisym),
            ("pairing non-degenerate", nondeg),
            ("Q squares to zero", q2),
            ("Q graded skew self-adjoint", q_skew),
            ("Q^GF graded self-adjoint", qgf_sa),
            ("[Q,Q^GF] = D^2 on each ghost piece", h_ok),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn example() -> DiracData {
        build_abstract(2, 1, QMat::from_rows(vec![vec![q(1), q(0)]]).unwrap(), None).unwrap()
    }

    #[test]
    fn abstract_example_index() {
        let d = example();
        assert_eq!(d.index(), 1);
        assert_eq!(d.index_float().unwrap(), 1);
        assert!(d.is_self_adjoint());
    }

    #[test]
    fn zero_operator_index() {
        let d = build_abstract(3, 1, QMat::zeros(1, 3), None).unwrap();
        assert_eq!(d.index(), 2);
        assert_eq!(d.index_float().unwrap(), 2);
    }

    #[test]
    fn invertible_square_index() {
        let d = build_abstract(2, 2, QMat::from_rows(vec![vec![q(1), q(2)], vec![q(3), q(4)]]).unwrap(), None)
            .unwrap();
        assert_eq!(d.index(), 0);
    }

    #[test]
    fn rejects_bad_inner_products() {
        let dp = QMat::from_rows(vec![vec![q(1), q(0)]]).unwrap();
        let nonsym = QMat::from_rows(vec![
            vec![q(1), q(1), q(0)],
            vec![q(0), q(1), q(0)],
            vec![q(0), q(0), q(1)],
        ])
        .unwrap();
        assert!(build_abstract(2, 1, dp.clone(), Some(nonsym)).is_err());
        let indefinite = QMat::diag(&[q(1), q(-1), q(1)]);
        assert!(build_abstract(2, 1, dp.clone(), Some(indefinite)).is_err());
        assert!(build_abstract(1, 1, dp, None).is_err());
    }

    #[test]
    fn hodge_dirac_corpus() {
        let hollow = SimplicialComplex::closure(3, &[vec![0, 1], vec![1, 2], vec![0, 2]]);
        let solid = SimplicialComplex::closure(3, &[vec![0, 1, 2]]);
        let sphere = SimplicialComplex::closure(4, &[vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 3], vec![1, 2, 3]]);
        for (sc, chi) in [(hollow, 0), (solid, 1), (sphere, 2)] {
            let d = hodge_dirac(&sc).unwrap();
            assert_eq!(d.index(), chi);
            assert_eq!(sc.euler_characteristic(), chi);
            assert!(d.is_self_adjoint());
            assert_eq!(d.hodge_residual(), 0.0);
        }
    }

    #[test]
    fn face_closure_violation() {
        let sc = SimplicialComplex {
            vertices: vec!["a".into(), "b".into()],
            simplices: vec![vec![0], vec![0, 1]],
            weights: None,
        };
        assert!(matches!(hodge_dirac(&sc), Err(LabError::FaceClosure(_))));
    }

    #[test]
    fn free_theory_axioms_hold_in_both_frames() {
        let d = example();
        for t in [FreeBVTheory::new(&d), FreeBVTheory::adapted(&d).0] {
            for (name, ok) in t.axiom_residuals() {
                assert!(ok, "{name}");
            }
        }
    }

    #[test]
    fn axial_action_invariance_and_grading() {
        let d = example();
        let a = axial_action(&d);
        a.validate(&d).unwrap();
        let t = FreeBVTheory::new(&d);
        let (g0, g1) = t.dagger(&a, 0);
        let n = t.n;
        let mut act = QMat::zeros(2 * n, 2 * n);
        act.set_block(0, 0, &g0);
        act.set_block(n, n, &g1);
        let om = t.pairing_matrix();
        // ⟨[λ,x],y⟩ + ⟨x,[λ,y]⟩ = 0 on all basis pairs.
        let lhs = act.transpose().mul(&om).add(&om.mul(&act));
        assert!(lhs.is_zero());
        assert_eq!(g0, d.gamma());
        assert_eq!(g1, d.gamma().neg());
    }
}
