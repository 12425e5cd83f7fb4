//! Acceptance criteria 1–9, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines always reach stdout. The
//! process fails if any criterion's outcome differs from `EXPECTED_FAILURES`
//! (criteria whose literal statement conflicts with the computed result).

use anomaly_lab::ce::{anomaly_lift_check, is_module_trivial, ModuleTriviality};
use anomaly_lab::corpus::{builtin, builtin_names, SIMPLICIAL_CORPUS};
use anomaly_lab::functional::{Caps, Class};
use anomaly_lab::hpl::{cochain_values, determinant_module, HodgeSetup};
use anomaly_lab::models::{axial_action, equivariant_index_f64, FreeBVTheory};
use anomaly_lab::scalar::{qr, Scalar};
use anomaly_lab::spectral::{commutator_supertrace, equivariant_mckean_singer, infrared_decay, mckean_singer};
use anomaly_lab::suites::{algebra_suite, obstruction_suite, rg_suite, SuiteConfig};
use anomaly_lab::bv::BVEngine;
use rand::{Rng, SeedableRng};
use std::time::Instant;

/// Criterion 6 asks for `d_L + Obstr[∞]·`; the transferred differential is
/// `d_L − Obstr[∞]·` (see README, "Known deviations").
const EXPECTED_FAILURES: &[u32] = &[6];

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, details: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.pass = false;
            self.details.push(format!("failed: {what}"));
        }
    }
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    for (name, chi) in SIMPLICIAL_CORPUS {
        let m = builtin(name).unwrap();
        let r = mckean_singer(&m.dirac, &[0.1, 1.0, 10.0], 1e-9).unwrap();
        o.check(r.pass(), format!("Str(exp(-tD^2)) = {chi} on {name}"));
    }
    o.check(builtin("boundary-tetrahedron").unwrap().dirac.dim() == 14, "dim of the boundary-tetrahedron cochain space is 14");
    let elapsed = start.elapsed().as_secs_f64();
    o.check(elapsed < 1.0, format!("runtime {elapsed:.3}s < 1s"));
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let cfg = SuiteConfig { caps: Caps { l: 1, xi: 2, hbar: 1 }, t_grid: vec![0.5, 1.0, 2.0], tol: 1e-8, ..Default::default() };
    for name in builtin_names() {
        let m = builtin(name).unwrap();
        match obstruction_suite(&m.dirac, &axial_action(&m.dirac), &cfg) {
            Ok(r) => o.check(r.pass(), format!("{name}: {:?}", r.failures().iter().map(|c| c.status_line()).collect::<Vec<_>>())),
            Err(e) => o.check(false, format!("{name}: {e}")),
        }
    }
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let m = builtin("two-block").unwrap();
    let a = m.action.clone().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(anomaly_lab::par::seed());
    for _ in 0..5 {
        let g: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c = equivariant_mckean_singer(&m.dirac, &a, &g, &[0.5, 1.0, 2.0], 1e-8).unwrap();
        let target = equivariant_index_f64(&m.dirac, &a, &g).unwrap();
        o.check(c.pass, format!("gamma = {g:?}: Str = {:?}, index {target}", c.computed));
        let h: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let s = commutator_supertrace(&m.dirac, &a, &g, &h, 1.0).unwrap();
        o.check(s.abs() < 1e-9, format!("Str(rho([g,h]) exp(-tD^2)) = {s:e}"));
    }
    // The solvable block model has non-commuting generators.
    let m = builtin("solvable-block").unwrap();
    let a = m.action.clone().unwrap();
    let s = commutator_supertrace(&m.dirac, &a, &[1.0, 0.3], &[-0.4, 2.0], 1.0).unwrap();
    o.check(s.abs() < 1e-9, format!("solvable block: Str(rho([g,h]) exp(-tD^2)) = {s:e}"));
    o
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let m = builtin("solvable-block").unwrap();
    let cfg = SuiteConfig { caps: Caps { l: 4, xi: 4, hbar: 2 }, t_grid: vec![0.5, 1.0], field_bound: 3, ..Default::default() };
    match algebra_suite(&m.dirac, m.action.as_ref().unwrap(), &cfg) {
        Ok(r) => {
            for c in &r.claims {
                o.check(c.pass, c.status_line());
            }
        }
        Err(e) => o.check(false, e.to_string()),
    }
    let elapsed = start.elapsed().as_secs_f64();
    o.check(elapsed < 30.0, format!("runtime {elapsed:.1}s < 30s"));
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let m = builtin("solvable-block").unwrap();
    o.check(m.dirac.dim() == 6, "model dimension 6");
    let cfg = SuiteConfig { caps: Caps { l: 2, xi: 4, hbar: 2 }, t_grid: vec![0.3, 1.0, 4.0], ..Default::default() };
    match rg_suite(&m.dirac, m.action.as_ref().unwrap(), &cfg) {
        Ok(r) => o.check(r.pass(), format!("{:?}", r.failures().iter().map(|c| c.status_line()).collect::<Vec<_>>())),
        Err(e) => o.check(false, e.to_string()),
    }
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    for (name, caps, bound) in [("rank-one", Caps { l: 2, xi: 2, hbar: 1 }, 3), ("solid-triangle", Caps { l: 1, xi: 1, hbar: 1 }, 1)] {
        let m = builtin(name).unwrap();
        let setup = HodgeSetup::new(&m.dirac, axial_action(&m.dirac), caps, bound).unwrap();
        let dm = match determinant_module(&setup) {
            Ok(dm) => dm,
            Err(e) => {
                o.check(false, format!("{name}: {e}"));
                continue;
            }
        };
        for c in dm.report.claims.iter().filter(|c| !c.claim.starts_with("conjugated line differential")) {
            o.check(c.pass, format!("{name}: {}", c.status_line()));
        }
        o.check(dm.he2_info.neumann_steps <= setup.k0 + 1, format!("{name}: Neumann steps {} <= dim ker D + 1", dm.he2_info.neumann_steps));
        let omega = cochain_values(&dm.omega, 1)[0].to_f64();
        let obstr = cochain_values(&dm.obstruction, 1)[0].to_f64();
        let dev = (omega - obstr).abs();
        o.check(dev < 1e-9, format!("{name}: conjugated differential d_L + omega with omega = {omega}, Obstr[inf] = {obstr}, deviation from d_L + Obstr[inf] is {dev}"));
    }
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    for (name, chi) in SIMPLICIAL_CORPUS {
        let m = builtin(name).unwrap();
        let action = axial_action(&m.dirac);
        let setup = HodgeSetup::new(&m.dirac, action.clone(), Caps { l: 1, xi: 1, hbar: 1 }, 0).unwrap();
        let dm = determinant_module(&setup).unwrap();
        let e = &setup.engine;
        let alg = e.alg.with_caps(setup.caps);
        let triv = is_module_trivial(&dm.line_differential, &e.d_l, &alg, &action.structure).unwrap();
        o.check(triv.is_trivial() == (*chi == 0), format!("{name}: trivial = {} with ind = {chi}", triv.is_trivial()));
        if let ModuleTriviality::Trivial { exp_alpha, .. } = &triv {
            o.check(!exp_alpha.is_zero(), format!("{name}: witness e^alpha"));
        }
        let engine = BVEngine::new(FreeBVTheory::new(&m.dirac), action, Caps { l: 1, xi: 2, hbar: 2 }).unwrap();
        let lift = anomaly_lift_check(&engine, 1.0).unwrap();
        o.check(lift.correction.is_some() == triv.is_trivial(), format!("{name}: lift check agrees"));
        o.check(lift.report.pass(), format!("{name}: {:?}", lift.report.failures().iter().map(|c| c.status_line()).collect::<Vec<_>>()));
    }
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let m = builtin("boundary-tetrahedron").unwrap();
    let ts: Vec<f64> = (0..=16).map(|i| 2.0 + 0.5 * i as f64).collect();
    let c = infrared_decay(&m.dirac, &ts).unwrap();
    o.check(c.pass, c.status_line());
    o
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new();
    let m = builtin("boundary-tetrahedron").unwrap();
    let broken = m.dirac.with_broken_adjoint(qr(1, 1000));
    let r = mckean_singer(&broken, &[0.1, 1.0, 10.0], 1e-9).unwrap();
    o.check(!r.pass(), "broken self-adjointness is reported");
    let m = builtin("rank-one").unwrap();
    let cfg = SuiteConfig { caps: Caps { l: 2, xi: 2, hbar: 1 }, field_bound: 2, ..Default::default() };
    for (a, b) in [(Class::Phi, Class::Xi), (Class::Phi, Class::Phi), (Class::C, Class::Phi)] {
        let faulty = SuiteConfig { koszul_fault: Some((a, b)), ..cfg.clone() };
        let caught = algebra_suite(&m.dirac, &axial_action(&m.dirac), &faulty).map_or(true, |r| !r.pass());
        o.check(caught, format!("Koszul fault {a:?}/{b:?} is reported"));
    }
    let clean = algebra_suite(&m.dirac, &axial_action(&m.dirac), &cfg).unwrap();
    o.check(clean.pass(), "unfaulted suite passes");
    o
}

fn main() {
    type Criterion = (u32, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        (1, "McKean-Singer on the simplicial corpus", criterion_1),
        (2, "obstruction equals -2 ind(D), t-independent, dual paths agree", criterion_2),
        (3, "equivariant McKean-Singer and the commutator cocycle", criterion_3),
        (4, "exact algebraic invariant suite at caps (4,4,2)", criterion_4),
        (5, "RG semigroup and W(0, I) = I", criterion_5),
        (6, "HPL pipeline and the conjugated line differential d_L + Obstr[inf]", criterion_6),
        (7, "module triviality iff ind(D) = 0, with lift check", criterion_7),
        (8, "infrared decay on the boundary tetrahedron", criterion_8),
        (9, "fault injection is detected", criterion_9),
    ];
    let mut unexpected = Vec::new();
    for (n, title, run) in criteria {
        let out = run();
        println!("criterion {n}: {} ({title})", if out.pass { "PASS" } else { "FAIL" });
        for d in &out.details {
            println!("    {d}");
        }
        if out.pass == EXPECTED_FAILURES.contains(&n) {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("criteria with unexpected outcome: {unexpected:?}");
        std::process::exit(1);
    }
}
