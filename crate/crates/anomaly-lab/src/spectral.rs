//! Heat operators `e^{−tD²}` from a metric-symmetrized eigendecomposition,
//! McKean–Singer checks and infrared decay of the heat trace.

use crate::error::{LabError, Result};
use crate::linalg::FMat;
use crate::models::{equivariant_index_f64, DiracData, EquivariantAction, RANK_AMBIGUITY_BAND, RANK_REL_TOL};
use crate::report::{Claim, Report};
use nalgebra::DMatrix;

/// Eigendecomposition of `H = D²` restricted to one chirality.
#[derive(Clone, Debug)]
pub struct SpectralBlock {
    pub eigenvalues: Vec<f64>,
    /// Columns are `G`-orthonormal eigenvectors.
    pub vectors: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub zero: Vec<bool>,
}

impl SpectralBlock {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ_j w(λ_j) v_j v_jᵀ G` over the selected modes.
    fn functional_calculus(&self, w: impl Fn(f64, bool) -> f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut acc = DMatrix::zeros(n, n);
        for j in 0..n {
            let c = w(self.eigenvalues[j], self.zero[j]);
            if c == 0.0 {
                continue;
            }
            let v = self.vectors.column(j);
            acc += c * (v * v.transpose());
        }
        acc * &self.g
    }
}

/// Spectral data of `H = D²`, split by chirality.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub plus: SpectralBlock,
    pub minus: SpectralBlock,
    pub lambda_max: f64,
    /// Smallest nonzero eigenvalue, if any.
    pub lambda1: Option<f64>,
    pub zero_threshold: f64,
}

/// `e^{−tH}` (or `Π` for `t = ∞`) as an `n×n` matrix on `V`.
#[derive(Clone, Debug)]
pub struct HeatOperator {
    pub t: f64,
    pub matrix: FMat,
}

fn block_eigen(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = h.nrows();
    if n == 0 {
        return Ok((vec![], DMatrix::zeros(0, 0)));
    }
    let chol = g.clone().cholesky().ok_or_else(|| LabError::NotPositiveDefinite("Cholesky failed".into()))?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or_else(|| LabError::Spectral("singular Cholesky factor".into()))?;
    let lt_inv = l_inv.transpose();
    // H is G-self-adjoint, so Lᵀ H L⁻ᵀ is symmetric.
    let hs = l.transpose() * h * &lt_inv;
    let hs = (&hs + hs.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(hs, f64::EPSILON, 10_000)
        .ok_or_else(|| LabError::Spectral("symmetric eigensolver did not converge".into()))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        let v = &lt_inv * eig.eigenvectors.column(i);
        vecs.set_column(k, &v);
    }
    Ok((vals, vecs))
}

impl SpectralData {
    pub fn new(d: &DiracData) -> Result<Self> {
        if !d.is_self_adjoint() {
            return Err(LabError::Spectral(format!(
                "D is not formally self-adjoint (residual {:.3e})",
                d.self_adjointness_residual()
            )));
        }
        let dp = d.dplus.to_f64().to_dmatrix();
        let dm = d.dminus.to_f64().to_dmatrix();
        let gp = d.g_plus().to_f64().to_dmatrix();
        let gm = d.g_minus().to_f64().to_dmatrix();
        let hp = if d.vminus_dim == 0 { DMatrix::zeros(d.vplus_dim, d.vplus_dim) } else { &dm * &dp };
        let hm = if d.vplus_dim == 0 { DMatrix::zeros(d.vminus_dim, d.vminus_dim) } else { &dp * &dm };
        let (vp, up) = block_eigen(&hp, &gp)?;
        let (vm, um) = block_eigen(&hm, &gm)?;
        let lambda_max = vp.iter().chain(&vm).copied().fold(0.0, f64::max);
        let thr = RANK_REL_TOL * lambda_max;
        let classify = |vals: &[f64]| -> Result<Vec<bool>> {
            vals.iter()
                .map(|&l| {
                    if lambda_max == 0.0 {
                        return Ok(true);
                    }
                    if l > thr / RANK_AMBIGUITY_BAND && l < thr * RANK_AMBIGUITY_BAND {
                        return Err(LabError::RankAmbiguous { value: l, threshold: thr, band: RANK_AMBIGUITY_BAND });
                    }
                    Ok(l < thr)
                })
                .collect()
        };
        let zp = classify(&vp)?;
        let zm = classify(&vm)?;
        let clamp = |vals: Vec<f64>, z: &[bool]| -> Vec<f64> {
            vals.into_iter().zip(z).map(|(l, &zz)| if zz { 0.0 } else { l }).collect()
        };
        let vp = clamp(vp, &zp);
        let vm = clamp(vm, &zm);
        let lambda1 = vp.iter().chain(&vm).copied().filter(|&l| l > 0.0).fold(None, |m: Option<f64>, l| {
            Some(m.map_or(l, |m| m.min(l)))
        });
        Ok(SpectralData {
            plus: SpectralBlock { eigenvalues: vp, vectors: up, g: gp, zero: zp },
            minus: SpectralBlock { eigenvalues: vm, vectors: um, g: gm, zero: zm },
            lambda_max,
            lambda1,
            zero_threshold: thr,
        })
    }

    pub fn dim(&self) -> usize {
        self.plus.dim() + self.minus.dim()
    }

    pub fn kernel_dims(&self) -> (usize, usize) {
        (self.plus.zero.iter().filter(|z| **z).count(), self.minus.zero.iter().filter(|z| **z).count())
    }

    fn assemble(&self, w: impl Fn(f64, bool) -> f64 + Copy) -> FMat {
        let (p, n) = (self.plus.dim(), self.dim());
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (p, p)).copy_from(&self.plus.functional_calculus(w));
        m.view_mut((p, p), (n - p, n - p)).copy_from(&self.minus.functional_calculus(w));
        FMat::from_dmatrix(&m)
    }

    /// Nonzero eigenvalues of `H` merged into clusters of relative width `rel`.
    pub fn distinct_nonzero_eigenvalues(&self, rel: f64) -> Vec<f64> {
        let mut all: Vec<f64> = self.plus.eigenvalues.iter().chain(&self.minus.eigenvalues).copied().filter(|&l| l > 0.0).collect();
        all.sort_by(f64::total_cmp);
        let mut clusters: Vec<Vec<f64>> = Vec::new();
        for l in all {
            match clusters.last_mut() {
                Some(c) if (l - c[0]).abs() <= rel * l => c.push(l),
                _ => clusters.push(vec![l]),
            }
        }
        clusters.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    }

    /// `e^{−tH}`; `t = +∞` gives the kernel projector.
    pub fn heat(&self, t: f64) -> Result<HeatOperator> {
        check_scale(t)?;
        let matrix = if t.is_infinite() {
            self.kernel_projector()
        } else {
            self.assemble(|l, _| (-t * l).exp())
        };
        Ok(HeatOperator { t, matrix })
    }

    pub fn kernel_projector(&self) -> FMat {
        self.assemble(|_, z| if z { 1.0 } else { 0.0 })
    }

    /// `Σ_{λ>0} e^{−tλ} v vᵀ G`, the part of the heat operator orthogonal to the kernel.
    pub fn nonzero_heat(&self, t: f64) -> FMat {
        self.assemble(|l, z| if z { 0.0 } else { (-t * l).exp() })
    }

    /// `Σ_{λ>0} (1 − e^{−tλ})/λ v vᵀ G = ∫_0^t e^{−sH} ds` on `Im D`.
    /// For `t = ∞` this is the pseudo-inverse of `H`.
    pub fn integrated_heat(&self, t: f64) -> FMat {
        self.assemble(|l, z| {
            if z {
                0.0
            } else if t.is_infinite() {
                1.0 / l
            } else {
                -(-t * l).exp_m1() / l
            }
        })
    }

    /// `Str(A e^{−tH})` for an even endomorphism `A` of `V`.
    pub fn str_with(&self, a: Option<&FMat>, t: f64) -> Result<f64> {
        let e = self.heat(t)?.matrix;
        let m = match a {
            Some(a) => a.mul(&e),
            None => e,
        };
        Ok(str_f64(&m, self.plus.dim()))
    }

    /// Per-chirality deviations `Tr(e^{−tH}|V±) − Tr(P±)`, computed from the nonzero modes.
    pub fn infrared_deviation(&self, t: f64) -> (f64, f64) {
        let m = self.nonzero_heat(t);
        let p = self.plus.dim();
        let dp: f64 = (0..p).map(|i| m[(i, i)]).sum();
        let dm: f64 = (p..self.dim()).map(|i| m[(i, i)]).sum();
        (dp.abs(), dm.abs())
    }
}

pub fn str_f64(m: &FMat, p: usize) -> f64 {
    (0..m.rows).map(|i| if i < p { m[(i, i)] } else { -m[(i, i)] }).sum()
}

pub fn check_scale(t: f64) -> Result<()> {
    if t.is_nan() || t <= 0.0 {
        return Err(LabError::Scale(t));
    }
    Ok(())
}

pub fn heat_operator(d: &DiracData, t: f64) -> Result<HeatOperator> {
    SpectralData::new(d)?.heat(t)
}

/// Padé matrix exponential of `−tD²`; used only when `D` is not self-adjoint
/// and no orthonormal eigenframe exists.
fn str_heat_general(d: &DiracData, t: f64) -> f64 {
    let dm = d.d().to_f64().to_dmatrix();
    let e = (-(t) * (&dm * &dm)).exp();
    str_f64(&FMat::from_dmatrix(&e), d.vplus_dim)
}

/// McKean–Singer: `Str(e^{−tD²}) = ind(D)` on every grid point, plus the
/// formal self-adjointness hypothesis as its own claim.
pub fn mckean_singer(d: &DiracData, t_grid: &[f64], tol: f64) -> Result<Report> {
    if t_grid.is_empty() {
        return Err(LabError::Input("empty t-grid".into()));
    }
    for &t in t_grid {
        check_scale(t)?;
    }
    let mut r = Report::new();
    let sa = d.self_adjointness_residual();
    r.push(Claim::compare("formal self-adjointness of D", &[], vec![sa], vec![0.0], 0.0));
    let ind = d.index() as f64;
    let values: Vec<f64> = if d.is_self_adjoint() {
        let sd = SpectralData::new(d)?;
        crate::par::map(t_grid, |&t| sd.str_with(None, t)).into_iter().collect::<Result<_>>()?
    } else {
        crate::par::map(t_grid, |&t| str_heat_general(d, t))
    };
    r.push(Claim::compare("McKean-Singer: Str(exp(-tD^2)) = ind(D)", t_grid, values, vec![ind; t_grid.len()], tol));
    Ok(r)
}

/// Equivariant McKean–Singer: `Str(ρ(γ)e^{−tD²})` against the kernel-basis index.
pub fn equivariant_mckean_singer(
    d: &DiracData,
    a: &EquivariantAction,
    gamma: &[f64],
    t_grid: &[f64],
    tol: f64,
) -> Result<Claim> {
    let target = equivariant_index_f64(d, a, gamma)?;
    let sd = SpectralData::new(d)?;
    let rho = a.rho_of_f64(gamma);
    let values = crate::par::map(t_grid, |&t| sd.str_with(Some(&rho), t)).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Claim::compare(
        "equivariant McKean-Singer: Str(rho(g)exp(-tD^2)) = ind(g,D)",
        t_grid,
        values,
        vec![target; t_grid.len()],
        tol,
    ))
}

/// `Str(ρ([γ,γ'])e^{−tD²})`, which vanishes because supertraces kill commutators.
pub fn commutator_supertrace(d: &DiracData, a: &EquivariantAction, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    let sd = SpectralData::new(d)?;
    let rx = a.rho_of_f64(x);
    let ry = a.rho_of_f64(y);
    let c = rx.mul(&ry).sub(&ry.mul(&rx));
    sd.str_with(Some(&c), t)
}

/// Least-squares slope of `log y` against `t`.
pub fn log_slope(ts: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ts.iter().zip(ys).filter(|(_, y)| **y > 0.0).map(|(t, y)| (*t, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub const INFRARED_SLACK: f64 = 0.1;

/// Infrared decay of `|Tr(e^{−tD²}|V±) − Tr(P±)|`: fitted and pairwise
/// log-slopes must not exceed `−(1 − slack)·λ₁/2`.
pub fn infrared_decay(d: &DiracData, t_samples: &[f64]) -> Result<Claim> {
    for &t in t_samples {
        check_scale(t)?;
    }
    if t_samples.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::Input("t-samples must be strictly increasing".into()));
    }
    let sd = SpectralData::new(d)?;
    let Some(l1) = sd.lambda1 else {
        return Ok(Claim::boolean("infrared decay", true).with_note("all eigenvalues vanish: decay is vacuous"));
    };
    let bound = -(1.0 - INFRARED_SLACK) * l1 / 2.0;
    let devs: Vec<(f64, f64)> = t_samples.iter().map(|&t| sd.infrared_deviation(t)).collect();
    let mut slopes = Vec::new();
    for side in 0..2 {
        let ys: Vec<f64> = devs.iter().map(|d| if side == 0 { d.0 } else { d.1 }).collect();
        if let Some(s) = log_slope(t_samples, &ys) {
            slopes.push(s);
        }
        for w in 0..t_samples.len().saturating_sub(1) {
            if let Some(s) = log_slope(&t_samples[w..w + 2], &ys[w..w + 2]) {
                slopes.push(s);
            }
        }
    }
    let worst = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pass = slopes.iter().all(|&s| s <= bound);
    let mut c = Claim::compare("infrared decay: log-slope <= -lambda_1/2 (10% slack)", t_samples, vec![worst], vec![bound], 0.0);
    c.max_abs_error = (worst - bound).max(0.0);
    c.pass = pass;
    c.note = Some(format!("lambda_1 = {l1:.12e}"));
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::QMat;
    use crate::models::{build_abstract, hodge_dirac, SimplicialComplex};
    use crate::scalar::q;

    fn example() -> DiracData {
        build_abstract(2, 1, QMat::from_rows(vec![vec![q(1), q(0)]]).unwrap(), None).unwrap()
    }

    #[test]
    fn closed_form_heat_on_abstract_example() {
        let sd = SpectralData::new(&example()).unwrap();
        let e = sd.heat(0.7).unwrap().matrix;
        assert!((e[(0, 0)] - (-0.7f64).exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - 1.0).abs() < 1e-14);
        assert!(e[(0, 1)].abs() < 1e-14);
        assert!((sd.str_with(None, 0.7).unwrap() - 1.0).abs() < 1e-14);
        let (dp, dm) = sd.infrared_deviation(3.0);
        assert!((dp - (-3.0f64).exp()).abs() < 1e-15);
        assert!((dm - (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn small_t_is_identity_and_infinity_is_projector() {
        let d = hodge_dirac(&SimplicialComplex::closure(3, &[vec![0, 1, 2]])).unwrap();
        let sd = SpectralData::new(&d).unwrap();
        let e = sd.heat(1e-8).unwrap().matrix;
        assert!(e.sub(&FMat::identity(d.dim())).max_abs() < 1e-6);
        let pi = sd.heat(f64::INFINITY).unwrap().matrix;
        assert!(pi.sub(&d.kernel_projector().to_f64()).max_abs() < 1e-10);
        assert!(sd.heat(0.0).is_err());
        assert!(sd.heat(-1.0).is_err());
    }

    #[test]
    fn non_self_adjoint_is_rejected_by_spectral_path() {
        let d = example().with_broken_adjoint(crate::scalar::qr(1, 1000));
        assert!(SpectralData::new(&d).is_err());
        let r = mckean_singer(&d, &[1.0], 1e-9).unwrap();
        assert!(!r.pass());
    }

    #[test]
    fn zero_operator_infrared_is_trivial() {
        let d = build_abstract(2, 1, QMat::zeros(1, 2), None).unwrap();
        assert!(infrared_decay(&d, &[2.0, 4.0]).unwrap().pass);
    }
}
