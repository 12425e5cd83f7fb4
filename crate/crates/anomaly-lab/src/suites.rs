//! Named verification suites assembled into reports.

use crate::bv::{qme_check, BVEngine, QmeMode};
use crate::ce::{anomaly_lift_check, is_module_trivial, ModuleTriviality};
use crate::error::{LabError, Result};
use crate::functional::{rg_flow, Caps, Class, Functional, KoszulTable, Monomial, TwoTensor};
use crate::graded::koszul_swap_sign;
use crate::hpl::{determinant_module, HodgeSetup};
use crate::models::{equivariant_index, DiracData, EquivariantAction, FreeBVTheory};
use crate::report::{Claim, Report};
use crate::scalar::{q, Scalar};

/// Options shared by all suites.
#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub caps: Caps,
    pub t_grid: Vec<f64>,
    /// Tolerance for floating comparisons (obstruction against the index).
    pub tol: f64,
    /// Largest number of field generators in verification bases.
    pub field_bound: usize,
    /// Fault injection: double the Hodge homotopy.
    pub broken_eta: bool,
    /// Fault injection: flip one entry of the Koszul sign table.
    pub koszul_fault: Option<(Class, Class)>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            caps: Caps::default(),
            t_grid: vec![0.5, 1.0, 2.0],
            tol: 1e-8,
            field_bound: 3,
            broken_eta: false,
            koszul_fault: None,
        }
    }
}

pub const SUITES: &[&str] = &["qme", "hpl", "rg", "algebra", "obstruction", "all"];

fn engine_in(theory: FreeBVTheory, action: &EquivariantAction, cfg: &SuiteConfig) -> Result<BVEngine> {
    let e = BVEngine::new(theory, action.clone(), cfg.caps)?;
    Ok(match cfg.koszul_fault {
        Some((a, b)) => e.with_algebra(e.alg.with_table(KoszulTable::standard().with_fault(a, b))),
        None => e,
    })
}

pub fn engine(d: &DiracData, action: &EquivariantAction, cfg: &SuiteConfig) -> Result<BVEngine> {
    engine_in(FreeBVTheory::new(d), action, cfg)
}

fn basis(e: &BVEngine, cfg: &SuiteConfig) -> Vec<Monomial> {
    e.alg.basis_monomials_bounded(cfg.field_bound)
}

fn word(e: &BVEngine, m: &Monomial) -> Functional {
    Functional::word(&e.alg, m.gens.clone(), 0, q(1))
}

fn count(name: &str, t: &[f64], fails: usize, total: usize) -> Claim {
    Claim::compare(name, t, vec![fails as f64], vec![0.0], 0.0).with_note(format!("{total} basis elements"))
}

/// Runs a fallible stage, turning an error into a failing claim.
fn guarded(r: &mut Report, name: &str, f: impl FnOnce(&mut Report) -> Result<()>) {
    if let Err(e) = f(r) {
        r.push(Claim::error(name, e.to_string()));
    }
}

/// Δ_t² = 0, bracket as Leibniz defect, Δ_t a derivation of the bracket, CME,
/// weak QME nilpotence, BV-kernel interchange antisymmetry and the `K_∞` closed form.
pub fn algebra_suite(d: &DiracData, action: &EquivariantAction, cfg: &SuiteConfig) -> Result<Report> {
    let e = engine(d, action, cfg)?;
    let a = &e.alg;
    let mut r = Report::new();
    let mons = basis(&e, cfg);
    let sample: Vec<Monomial> = {
        let long: Vec<&Monomial> = mons.iter().filter(|m| m.len() >= 2).collect();
        let stride = (long.len() / 16).max(1);
        long.into_iter().step_by(stride).take(16).cloned().collect()
    };
    for &t in &cfg.t_grid {
        let delta = e.laplacian(t)?;
        let fails = crate::par::map(&mons, |m| !delta.apply(a, &delta.apply(a, &word(&e, m))).is_zero());
        r.push(count("Delta_t^2 = 0", &[t], fails.iter().filter(|x| **x).count(), mons.len()));
        let pairs: Vec<(Monomial, Monomial, Monomial)> = sample
            .iter()
            .flat_map(|x| sample.iter().map(move |y| (x.clone(), y.clone())))
            .enumerate()
            .map(|(i, (x, y))| {
                let z = sample[(i * 7 + 3) % sample.len()].clone();
                (x, y, z)
            })
            .collect();
        // Products are formed in a widened algebra so that truncation commutes with Δ_t.
        let wide = e.with_algebra(a.widened(2));
        let (wa, wdelta) = (&wide.alg, wide.laplacian(t)?);
        let caps = a.caps;
        let results = crate::par::map(&pairs, |(x, y, z)| {
            let (fx, fy, fz) = (word(&wide, x), word(&wide, y), word(&wide, z));
            let br = |u: &Functional, v: &Functional| wide.bracket(&wdelta, u, v);
            let eq = |u: Functional, v: Functional| u.truncate(caps) == v.truncate(caps);
            // {x, yz} = {x, y} z + (−1)^{(|x|+1)|y|} y {x, z}
            let shifted = x.degree().add(crate::graded::Bidegree::new(1, 0));
            let s = q(koszul_swap_sign(shifted, y.degree()) as i64);
            let leibniz = eq(br(&fx, &fy.mul(wa, &fz)), br(&fx, &fy).mul(wa, &fz).add(&fy.mul(wa, &br(&fx, &fz)).scale(&s)));
            let sym = eq(br(&fx, &fy), br(&fy, &fx).scale(&q(koszul_swap_sign(x.degree(), y.degree()) as i64)));
            let sx = if x.degree().ghost.rem_euclid(2) == 0 { q(1) } else { q(-1) };
            let lhs = wdelta.apply(wa, &br(&fx, &fy));
            let rhs = br(&wdelta.apply(wa, &fx), &fy).add(&br(&fx, &wdelta.apply(wa, &fy)).scale(&sx)).neg();
            (leibniz, sym, eq(lhs, rhs))
        });
        let n = results.len();
        let f0 = results.iter().filter(|x| !x.0).count();
        let f1 = results.iter().filter(|x| !x.1).count();
        let f2 = results.iter().filter(|x| !x.2).count();
        r.push(count("bracket is the Leibniz defect of Delta_t (biderivation)", &[t], f0, n));
        r.push(count("bracket is graded symmetric", &[t], f1, n));
        r.push(count("Delta_t is a derivation of the bracket", &[t], f2, n));
        let k = e.kernel(t)?;
        let (res, anti, split) = e.kernel_checks(&k);
        r.push(Claim::compare("BV kernel contracts to the heat operator", &[t], vec![res], vec![0.0], 1e-12));
        r.push(Claim::boolean("BV kernel: interchange gives -K_t", anti && split));
    }
    let i = e.interaction();
    r.push(Claim::compare("CME residual of I is zero", &[], vec![e.cme_residual(&i)?.max_abs()], vec![0.0], 0.0));
    let t0 = cfg.t_grid[0];
    let it = e.effective(&i, t0)?;
    let (fails, total) = e.weak_qme(&it, t0, &mons)?;
    r.push(count("weak QME differential squares to zero", &[t0], fails, total));
    r.push(k_infinity_closed_form(d, action, cfg)?);
    Ok(r)
}

/// `K_∞ = Σ_{a ∈ ker} (f_a ⊗ e_a − e_a ⊗ f_a)` in a Darboux frame adapted to `ker D`.
fn k_infinity_closed_form(d: &DiracData, action: &EquivariantAction, cfg: &SuiteConfig) -> Result<Claim> {
    let (theory, k0) = FreeBVTheory::adapted(d);
    let n = theory.n;
    let e = engine_in(theory, action, cfg)?;
    let k = e.kernel(f64::INFINITY)?;
    let mut expected = TwoTensor::zero(n);
    for a in 0..k0 {
        expected.coeffs[(a, n + a)] = q(-1);
        expected.coeffs[(n + a, a)] = q(1);
    }
    let dev = k.tensor.sub(&expected).coeffs.max_abs();
    Ok(Claim::compare("K_inf closed form on the kernel frame", &[f64::INFINITY], vec![dev], vec![0.0], 0.0))
}

/// Obstruction per basis element and scale against `−2·ind(γ_i, D)`, its
/// t-independence, and the dual-path agreement.
pub fn obstruction_suite(d: &DiracData, action: &EquivariantAction, cfg: &SuiteConfig) -> Result<Report> {
    let obs_cfg = SuiteConfig { caps: Caps { l: 1, xi: cfg.caps.xi.max(2), hbar: cfg.caps.hbar.max(1) }, ..cfg.clone() };
    let e = engine(d, action, &obs_cfg)?;
    let i = e.interaction();
    let mut r = Report::new();
    let k = action.dim();
    let mut per_t = Vec::new();
    for &t in &cfg.t_grid {
        match e.obstruction(&i, t) {
            Ok(ob) => per_t.push(ob.values_f64()),
            Err(err @ LabError::DualPath(_)) => {
                r.push(Claim::error("dual-path obstruction agreement", err.to_string()));
                return Ok(r);
            }
            Err(err) => return Err(err),
        }
    }
    r.push(Claim::compare("dual-path obstruction agreement", &cfg.t_grid, vec![0.0; cfg.t_grid.len()], vec![0.0; cfg.t_grid.len()], 1e-10));
    for l in 0..k {
        let mut gamma = vec![q(0); k];
        gamma[l] = q(1);
        let target = -2.0 * equivariant_index(d, action, &gamma)?.to_f64();
        let values: Vec<f64> = per_t.iter().map(|v| v[l]).collect();
        r.push(Claim::compare(format!("Obstr[t](gamma_{l}) = -2 ind(gamma_{l}, D)"), &cfg.t_grid, values.clone(), vec![target; values.len()], cfg.tol));
        let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - values.iter().cloned().fold(f64::INFINITY, f64::min);
        r.push(Claim::compare(format!("Obstr[t](gamma_{l}) is independent of t"), &cfg.t_grid, vec![spread], vec![0.0], 1e-9));
    }
    Ok(r)
}

/// Weak and strong QME and the `e^I` conjugation identity on the t-grid.
pub fn qme_suite(d: &DiracData, action: &EquivariantAction, cfg: &SuiteConfig) -> Result<Report> {
    let e = engine(d, action, cfg)?;
    let mons = basis(&e, cfg);
    let i = e.interaction();
    let mut r = Report::new();
    r.push(Claim::compare("CME residual of I is zero", &[], vec![e.cme_residual(&i)?.max_abs()], vec![0.0], 0.0));
    for &t in &cfg.t_grid {
        guarded(&mut r, "QME checks", |r| {
            r.extend(qme_check(&e, t, QmeMode::Weak, &mons)?);
            r.extend(qme_check(&e, t, QmeMode::Strong, &mons)?);
            let (fails, total) = e.exp_conjugation(&i, t, &mons)?;
            r.push(count("exp(I) intertwines the weak and strong QME operators", &[t], fails, total));
            Ok(())
        });
    }
    Ok(r)
}

/// Propagator additivity through the RG flow, `W(0, I) = I`, and mod-ħ transport of the obstruction.
pub fn rg_suite(d: &DiracData, action: &EquivariantAction, cfg: &SuiteConfig) -> Result<Report> {
    let e = engine(d, action, cfg)?;
    let i = e.interaction();
    let mut r = Report::new();
    let mut ts = vec![0.0];
    ts.extend(cfg.t_grid.iter().copied());
    for w in ts.windows(3).chain(std::iter::once(&[0.0, ts[ts.len() - 1], f64::INFINITY][..])) {
        let (t1, t2, t3) = (w[0], w[1], w[2]);
        let p = |a: f64, b: f64| -> Result<_> { Ok(e.contraction_of_propagator(&e.propagator(a, b)?)) };
        let two = rg_flow(&e.alg, &p(t2, t3)?, &rg_flow(&e.alg, &p(t1, t2)?, &i)?)?;
        let one = rg_flow(&e.alg, &p(t1, t3)?, &i)?;
        r.push(Claim::compare(
            "RG semigroup: W(P(t2,t3), W(P(t1,t2), I)) = W(P(t1,t3), I)",
            &[t1, t2, t3],
            vec![two.sub(&one).max_abs()],
            vec![0.0],
            0.0,
        ));
    }
    let zero = e.contraction_of_propagator(&e.propagator(1.0, 1.0)?);
    r.push(Claim::compare("W(0, I) = I", &[], vec![rg_flow(&e.alg, &zero, &i)?.sub(&i).max_abs()], vec![0.0], 0.0));
    for w in cfg.t_grid.windows(2) {
        guarded(&mut r, "obstruction transport", |r| {
            let (tree, tangent) = e.obstruction_transport(&i, w[0], w[1])?;
            r.push(Claim::boolean(format!("tree level flows from t={} to t={}", w[0], w[1]), tree));
            r.push(Claim::boolean(format!("Obstr flows from t={} to t={} as a tangent vector", w[0], w[1]), tangent));
            Ok(())
        });
    }
    Ok(r)
}

/// Determinant-line pipeline, module triviality, and the current-lift question.
pub fn hpl_suite(d: &DiracData, action: &EquivariantAction, cfg: &SuiteConfig) -> Result<Report> {
    let caps = Caps { l: cfg.caps.l.min(2), xi: cfg.caps.xi.min(2), hbar: cfg.caps.hbar.clamp(1, 1) };
    let setup = HodgeSetup::new(d, action.clone(), caps, cfg.field_bound.min(2))?;
    let mut r = Report::new();
    let he1 = if cfg.broken_eta { setup.hodge_retraction().with_broken_eta() } else { setup.hodge_retraction() };
    if !he1.is_valid() {
        r.extend(he1.report("hodge retraction"));
        return Ok(r);
    }
    let dm = determinant_module(&setup)?;
    r.extend(dm.report.clone());
    let e = &setup.engine;
    let alg = e.alg.with_caps(caps);
    let triv = is_module_trivial(&dm.line_differential, &e.d_l, &alg, &action.structure)?;
    let ind_zero = d.index() == 0;
    if action.dim() == 1 && action.rho[0] == crate::linalg::QMat::identity(d.dim()) {
        r.push(
            Claim::boolean("line module is trivial iff ind(D) = 0", triv.is_trivial() == ind_zero)
                .with_note(format!("ind(D) = {}", d.index())),
        );
    }
    if let ModuleTriviality::Trivial { exp_alpha, .. } = &triv {
        r.push(Claim::boolean("trivializing witness e^alpha verified", !exp_alpha.is_zero()));
    }
    let lift_engine = engine(d, action, &SuiteConfig { caps: Caps { l: 1, xi: 2, hbar: 2 }, ..cfg.clone() })?;
    let lift = anomaly_lift_check(&lift_engine, cfg.t_grid[0])?;
    r.extend(lift.report.clone());
    r.push(Claim::boolean("lift exists iff the line module is trivial", lift.correction.is_some() == triv.is_trivial()));
    Ok(r)
}

/// Runs one named suite; `all` concatenates every suite.
pub fn run_suite(name: &str, d: &DiracData, action: &EquivariantAction, cfg: &SuiteConfig) -> Result<Report> {
    match name {
        "qme" => qme_suite(d, action, cfg),
        "hpl" => hpl_suite(d, action, cfg),
        "rg" => rg_suite(d, action, cfg),
        "algebra" => algebra_suite(d, action, cfg),
        "obstruction" => obstruction_suite(d, action, cfg),
        "all" => {
            let mut r = Report::new();
            for s in ["algebra", "obstruction", "qme", "rg", "hpl"] {
                r.extend(run_suite(s, d, action, cfg)?);
            }
            Ok(r)
        }
        other => Err(LabError::Input(format!("unknown suite {other:?} (expected one of {})", SUITES.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin;

    fn small() -> SuiteConfig {
        SuiteConfig { caps: Caps { l: 2, xi: 2, hbar: 1 }, field_bound: 2, ..Default::default() }
    }

    #[test]
    fn every_suite_passes_on_rank_one() {
        let m = builtin("rank-one").unwrap();
        for s in ["algebra", "obstruction", "qme", "rg", "hpl"] {
            let r = run_suite(s, &m.dirac, &m.action_or_axial(), &small()).unwrap();
            assert!(!r.claims.is_empty(), "{s}");
            let fails: Vec<String> = r.failures().iter().map(|c| c.status_line()).collect();
            assert!(fails.is_empty(), "{s}: {fails:?}");
        }
    }

    #[test]
    fn solvable_block_algebra_and_obstruction() {
        let m = builtin("solvable-block").unwrap();
        let a = m.action.clone().unwrap();
        for s in ["algebra", "obstruction", "rg"] {
            let r = run_suite(s, &m.dirac, &a, &small()).unwrap();
            assert!(r.pass(), "{s}: {:?}", r.failures());
        }
    }

    #[test]
    fn broken_eta_names_the_identity() {
        let m = builtin("rank-one").unwrap();
        let cfg = SuiteConfig { broken_eta: true, ..small() };
        let r = hpl_suite(&m.dirac, &m.action_or_axial(), &cfg).unwrap();
        let names: Vec<&str> = r.failures().iter().map(|c| c.claim.as_str()).collect();
        assert_eq!(names.len(), 1);
        assert!(names[0].contains("iota∘pi − id = [d, eta]"), "{names:?}");
    }

    #[test]
    fn koszul_fault_is_detected() {
        let m = builtin("rank-one").unwrap();
        for (a, b) in [(Class::Phi, Class::Xi), (Class::C, Class::Xi), (Class::Xi, Class::Xi)] {
            let cfg = SuiteConfig { koszul_fault: Some((a, b)), ..small() };
            let r = algebra_suite(&m.dirac, &m.action_or_axial(), &cfg);
            assert!(r.map_or(true, |r| !r.pass()), "fault {a:?}/{b:?} went unnoticed");
        }
    }

    #[test]
    fn unknown_suite() {
        let m = builtin("rank-one").unwrap();
        assert!(matches!(run_suite("nope", &m.dirac, &m.action_or_axial(), &small()), Err(LabError::Input(_))));
    }
}
