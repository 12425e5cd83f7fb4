//! Property tests for the graded and functional layers.

use anomaly_lab::bv::BVEngine;
use anomaly_lab::corpus::builtin;
use anomaly_lab::functional::{Algebra, Caps, Class, Functional, Gen};
use anomaly_lab::graded::{koszul_swap_sign, supertrace, tensor, Bidegree, BigradedMap, BigradedSpace};
use anomaly_lab::linalg::QMat;
use anomaly_lab::models::{axial_action, FreeBVTheory};
use anomaly_lab::scalar::{q, Q};
use proptest::prelude::*;

fn bidegree() -> impl Strategy<Value = Bidegree> {
    (-3i32..=3, 0u8..=1).prop_map(|(g, p)| Bidegree::new(g, p))
}

fn class() -> impl Strategy<Value = Class> {
    prop_oneof![Just(Class::C), Just(Class::Phi), Just(Class::Xi)]
}

fn gen(n_c: usize, n_s: usize) -> impl Strategy<Value = Gen> {
    (class(), 0..n_c.max(2 * n_s)).prop_map(move |(c, i)| match c {
        Class::C => Gen::c(i % n_c),
        Class::Phi => Gen::phi(i % (2 * n_s)),
        Class::Xi => Gen::xi(i % (2 * n_s)),
    })
}

/// Words of at most three generators.
fn word(n_c: usize, n_s: usize) -> impl Strategy<Value = Vec<Gen>> {
    prop::collection::vec(gen(n_c, n_s), 0..4)
}

fn word_degree(w: &[Gen]) -> Bidegree {
    w.iter().fold(Bidegree::ZERO, |d, g| d.add(g.degree()))
}

fn combination(alg: &Algebra, terms: &[(Vec<Gen>, i64)]) -> Functional {
    terms.iter().fold(Functional::zero(), |acc, (w, c)| acc.add(&Functional::word(alg, w.clone(), 0, q(*c))))
}

fn terms(n_c: usize, n_s: usize) -> impl Strategy<Value = Vec<(Vec<Gen>, i64)>> {
    prop::collection::vec((word(n_c, n_s), -5i64..=5), 1..5)
}

fn algebra() -> Algebra {
    Algebra::new(2, 2, Caps { l: 4, xi: 4, hbar: 2 })
}

/// `n_even | n_odd` superspace and a random map of the given parity.
fn supermatrix(n0: usize, n1: usize, odd: bool) -> impl Strategy<Value = QMat> {
    let n = n0 + n1;
    prop::collection::vec(-4i64..=4, n * n).prop_map(move |v| {
        QMat::from_fn(n, n, |i, j| {
            let same = (i < n0) == (j < n0);
            if same != odd {
                q(v[i * n + j])
            } else {
                q(0)
            }
        })
    })
}

fn map(space: &BigradedSpace, m: QMat, odd: bool) -> BigradedMap<Q> {
    BigradedMap::new(space.clone(), space.clone(), m, Bidegree::new(0, odd as u8)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn koszul_sign_is_symmetric_and_bimultiplicative(u in bidegree(), v in bidegree(), w in bidegree()) {
        prop_assert_eq!(koszul_swap_sign(u, v), koszul_swap_sign(v, u));
        prop_assert_eq!(koszul_swap_sign(u.add(v), w), koszul_swap_sign(u, w) * koszul_swap_sign(v, w));
        prop_assert_eq!(koszul_swap_sign(Bidegree::ZERO, w), 1);
    }

    #[test]
    fn supertrace_kills_graded_commutators(
        a in supermatrix(2, 3, true), b in supermatrix(2, 3, true),
        c in supermatrix(2, 3, false), d in supermatrix(2, 3, false),
    ) {
        let space = BigradedSpace::z2("v", 2, 3);
        let odd = map(&space, a, true).graded_commutator(&map(&space, b, true)).unwrap();
        prop_assert_eq!(supertrace(&odd).unwrap(), q(0));
        let even = map(&space, c, false).graded_commutator(&map(&space, d, false)).unwrap();
        prop_assert_eq!(supertrace(&even).unwrap(), q(0));
    }

    #[test]
    fn supertrace_is_multiplicative_on_tensors(a in supermatrix(1, 2, false), b in supermatrix(2, 1, false)) {
        let (s, t) = (BigradedSpace::z2("v", 1, 2), BigradedSpace::z2("w", 2, 1));
        let (ma, mb) = (map(&s, a, false), map(&t, b, false));
        let st = supertrace(&tensor(&ma, &mb)).unwrap();
        prop_assert_eq!(st, supertrace(&ma).unwrap() * supertrace(&mb).unwrap());
    }

    #[test]
    fn words_graded_commute(x in word(2, 2), y in word(2, 2), c in -3i64..=3) {
        let alg = algebra();
        let fx = Functional::word(&alg, x.clone(), 0, q(c));
        let fy = Functional::word(&alg, y.clone(), 1, q(1));
        let s = q(koszul_swap_sign(word_degree(&x), word_degree(&y)) as i64);
        prop_assert_eq!(fx.mul(&alg, &fy), fy.mul(&alg, &fx).scale(&s));
    }

    #[test]
    fn product_is_associative_and_distributive(a in terms(2, 2), b in terms(2, 2), c in terms(2, 2)) {
        let alg = algebra();
        let (fa, fb, fc) = (combination(&alg, &a), combination(&alg, &b), combination(&alg, &c));
        prop_assert_eq!(fa.mul(&alg, &fb).mul(&alg, &fc), fa.mul(&alg, &fb.mul(&alg, &fc)));
        prop_assert_eq!(fa.mul(&alg, &fb.add(&fc)), fa.mul(&alg, &fb).add(&fa.mul(&alg, &fc)));
    }

    #[test]
    fn laplacian_squares_to_zero(a in terms(1, 1), t in prop_oneof![Just(0.25), Just(1.0), Just(3.0), Just(f64::INFINITY)]) {
        let m = builtin("rank-one").unwrap();
        let e = BVEngine::new(FreeBVTheory::new(&m.dirac), axial_action(&m.dirac), Caps { l: 3, xi: 3, hbar: 2 }).unwrap();
        let delta = e.laplacian(t).unwrap();
        let f = combination(&e.alg, &a);
        prop_assert!(delta.apply(&e.alg, &delta.apply(&e.alg, &f)).is_zero());
    }

    #[test]
    fn bracket_is_graded_symmetric_and_leibniz(x in word(1, 1), y in word(1, 1), z in word(1, 1)) {
        let m = builtin("rank-one").unwrap();
        let e = BVEngine::new(FreeBVTheory::new(&m.dirac), axial_action(&m.dirac), Caps { l: 6, xi: 6, hbar: 2 }).unwrap();
        let (alg, delta) = (&e.alg, e.laplacian(1.0).unwrap());
        let f = |w: &Vec<Gen>| Functional::word(alg, w.clone(), 0, q(1));
        let (fx, fy, fz) = (f(&x), f(&y), f(&z));
        let (dx, dy) = (word_degree(&x), word_degree(&y));
        let sym = q(koszul_swap_sign(dx, dy) as i64);
        prop_assert_eq!(e.bracket(&delta, &fx, &fy), e.bracket(&delta, &fy, &fx).scale(&sym));
        let s = q(koszul_swap_sign(dx.add(Bidegree::new(1, 0)), dy) as i64);
        let lhs = e.bracket(&delta, &fx, &fy.mul(alg, &fz));
        let rhs = e.bracket(&delta, &fx, &fy).mul(alg, &fz).add(&fy.mul(alg, &e.bracket(&delta, &fx, &fz)).scale(&s));
        prop_assert_eq!(lhs, rhs);
    }
}
