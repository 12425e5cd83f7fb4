//! ℤ×ℤ/2-bigraded spaces, Koszul signs, bigraded maps, supertrace and the
//! Koszul-signed tensor product.

use crate::error::{LabError, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use std::collections::HashSet;

/// Cohomological degree and statistics parity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bidegree {
    pub ghost: i32,
    pub parity: u8,
}

impl Bidegree {
    pub const ZERO: Bidegree = Bidegree { ghost: 0, parity: 0 };

    pub fn new(ghost: i32, parity: u8) -> Self {
        Bidegree { ghost, parity: parity & 1 }
    }

    pub fn add(self, o: Bidegree) -> Bidegree {
        Bidegree::new(self.ghost + o.ghost, self.parity ^ o.parity)
    }

    pub fn neg(self) -> Bidegree {
        Bidegree::new(-self.ghost, self.parity)
    }

    /// Total parity used by the Koszul rule when only a sign of `(-1)^{|x|}` type is needed.
    pub fn ghost_parity(self) -> u8 {
        (self.ghost.rem_euclid(2)) as u8
    }
}

/// Sign acquired when swapping homogeneous elements of degrees `v` and `w`.
pub fn koszul_swap_sign(v: Bidegree, w: Bidegree) -> i8 {
    let e = (v.ghost as i64 * w.ghost as i64).rem_euclid(2) as u8 ^ (v.parity & w.parity);
    if e == 0 {
        1
    } else {
        -1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Generator {
    pub label: String,
    pub degree: Bidegree,
}

impl Generator {
    pub fn new(label: impl Into<String>, ghost: i32, parity: u8) -> Self {
        Generator { label: label.into(), degree: Bidegree::new(ghost, parity) }
    }
}

/// Ordered basis of homogeneous generators with unique labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BigradedSpace {
    basis: Vec<Generator>,
}

impl BigradedSpace {
    pub fn new(basis: Vec<Generator>) -> Result<Self> {
        let mut seen = HashSet::new();
        for g in &basis {
            if !seen.insert(g.label.clone()) {
                return Err(LabError::InvalidModel(format!("duplicate basis label {}", g.label)));
            }
        }
        Ok(BigradedSpace { basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Generator] {
        &self.basis
    }

    pub fn degree(&self, i: usize) -> Bidegree {
        self.basis[i].degree
    }

    /// Indices of the homogeneous piece of the given bidegree.
    pub fn piece(&self, d: Bidegree) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.basis[i].degree == d).collect()
    }

    /// Distinct bidegrees present, in first-appearance order.
    pub fn pieces(&self) -> Vec<Bidegree> {
        let mut out: Vec<Bidegree> = Vec::new();
        for g in &self.basis {
            if !out.contains(&g.degree) {
                out.push(g.degree);
            }
        }
        out
    }

    /// Z/2-graded space with `plus` even and `minus` odd basis vectors, all in ghost 0.
    pub fn z2(prefix: &str, plus: usize, minus: usize) -> Self {
        let mut basis = Vec::new();
        for i in 0..plus {
            basis.push(Generator::new(format!("{prefix}+{i}"), 0, 0));
        }
        for i in 0..minus {
            basis.push(Generator::new(format!("{prefix}-{i}"), 0, 1));
        }
        BigradedSpace { basis }
    }

    pub fn tensor(&self, other: &BigradedSpace) -> BigradedSpace {
        let mut basis = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.basis {
            for b in &other.basis {
                basis.push(Generator {
                    label: format!("{}⊗{}", a.label, b.label),
                    degree: a.degree.add(b.degree),
                });
            }
        }
        BigradedSpace { basis }
    }

    /// Chirality involution `(-1)^parity` as a diagonal map.
    pub fn gamma<S: Scalar>(&self) -> BigradedMap<S> {
        let d: Vec<S> =
            self.basis.iter().map(|g| if g.degree.parity == 0 { S::one() } else { -S::one() }).collect();
        BigradedMap { source: self.clone(), target: self.clone(), matrix: Mat::diag(&d), degree: Bidegree::ZERO }
    }
}

/// Linear map of fixed bidegree between bigraded spaces; columns index the source basis.
#[derive(Clone, Debug, PartialEq)]
pub struct BigradedMap<S> {
    pub source: BigradedSpace,
    pub target: BigradedSpace,
    pub matrix: Mat<S>,
    pub degree: Bidegree,
}

impl<S: Scalar> BigradedMap<S> {
    pub fn new(source: BigradedSpace, target: BigradedSpace, matrix: Mat<S>, degree: Bidegree) -> Result<Self> {
        if matrix.rows != target.dim() || matrix.cols != source.dim() {
            return Err(LabError::Dimension(format!(
                "matrix is {}x{}, expected {}x{}",
                matrix.rows,
                matrix.cols,
                target.dim(),
                source.dim()
            )));
        }
        for i in 0..matrix.rows {
            for j in 0..matrix.cols {
                if matrix[(i, j)].is_zero() {
                    continue;
                }
                if source.degree(j).add(degree) != target.degree(i) {
                    return Err(LabError::Degree(format!(
                        "entry ({i},{j}) connects {:?} to {:?} but the map has degree {:?}",
                        source.degree(j),
                        target.degree(i),
                        degree
                    )));
                }
            }
        }
        Ok(BigradedMap { source, target, matrix, degree })
    }

    pub fn identity(space: &BigradedSpace) -> Self {
        BigradedMap {
            source: space.clone(),
            target: space.clone(),
            matrix: Mat::identity(space.dim()),
            degree: Bidegree::ZERO,
        }
    }

    pub fn compose(&self, inner: &BigradedMap<S>) -> Result<Self> {
        if inner.target != self.source {
            return Err(LabError::Dimension("composition of incompatible maps".into()));
        }
        Ok(BigradedMap {
            source: inner.source.clone(),
            target: self.target.clone(),
            matrix: self.matrix.mul(&inner.matrix),
            degree: self.degree.add(inner.degree),
        })
    }

    /// Graded commutator `a∘b − (−1)^{|a||b|} b∘a` of two endomorphisms.
    pub fn graded_commutator(&self, other: &BigradedMap<S>) -> Result<Self> {
        let ab = self.compose(other)?;
        let ba = other.compose(self)?;
        let s = koszul_swap_sign(self.degree, other.degree);
        let m = if s > 0 { ab.matrix.sub(&ba.matrix) } else { ab.matrix.add(&ba.matrix) };
        Ok(BigradedMap { matrix: m, ..ab })
    }
}

/// `Tr(m|even) − Tr(m|odd)` for a degree-(0,0) endomorphism.
pub fn supertrace<S: Scalar>(m: &BigradedMap<S>) -> Result<S> {
    if m.degree != Bidegree::ZERO {
        return Err(LabError::Degree(format!("supertrace needs degree (0,0), got {:?}", m.degree)));
    }
    if m.source != m.target {
        return Err(LabError::Dimension("supertrace needs an endomorphism".into()));
    }
    let mut acc = S::zero();
    for i in 0..m.source.dim() {
        let v = m.matrix[(i, i)].clone();
        acc = if m.source.degree(i).parity == 0 { acc + v } else { acc - v };
    }
    Ok(acc)
}

/// Koszul-signed tensor product: `(a⊗b)(v⊗w) = sign(b, v) · a(v)⊗b(w)`.
pub fn tensor<S: Scalar>(a: &BigradedMap<S>, b: &BigradedMap<S>) -> BigradedMap<S> {
    let source = a.source.tensor(&b.source);
    let target = a.target.tensor(&b.target);
    let (bs, bt) = (b.source.dim(), b.target.dim());
    let matrix = Mat::from_fn(target.dim(), source.dim(), |r, c| {
        let (k, l) = (r / bt, r % bt);
        let (i, j) = (c / bs, c % bs);
        let x = a.matrix[(k, i)].clone() * b.matrix[(l, j)].clone();
        if koszul_swap_sign(b.degree, a.source.degree(i)) < 0 {
            -x
        } else {
            x
        }
    });
    BigradedMap { source, target, matrix, degree: a.degree.add(b.degree) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{q, Q};

    fn phi() -> Bidegree {
        Bidegree::new(0, 1)
    }
    fn xi() -> Bidegree {
        Bidegree::new(-1, 1)
    }
    fn c() -> Bidegree {
        Bidegree::new(1, 0)
    }

    #[test]
    fn generator_sign_table() {
        assert_eq!(koszul_swap_sign(phi(), phi()), -1);
        assert_eq!(koszul_swap_sign(xi(), xi()), 1);
        assert_eq!(koszul_swap_sign(c(), phi()), 1);
        assert_eq!(koszul_swap_sign(c(), c()), -1);
        assert_eq!(koszul_swap_sign(phi(), xi()), -1);
    }

    #[test]
    fn supertrace_examples() {
        let v = BigradedSpace::z2("v", 2, 1);
        let id = BigradedMap::<Q>::identity(&v);
        assert_eq!(supertrace(&id).unwrap(), q(1));
        let g = v.gamma::<Q>();
        assert_eq!(supertrace(&g).unwrap(), q(3));
        let odd = BigradedMap { degree: Bidegree::new(0, 1), ..id.clone() };
        assert!(supertrace(&odd).is_err());
    }

    #[test]
    fn degree_validation() {
        let v = BigradedSpace::z2("v", 1, 1);
        let m = Mat::from_rows(vec![vec![q(0), q(1)], vec![q(0), q(0)]]).unwrap();
        assert!(BigradedMap::new(v.clone(), v.clone(), m.clone(), Bidegree::new(0, 1)).is_ok());
        assert!(BigradedMap::new(v.clone(), v, m, Bidegree::ZERO).is_err());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let b = vec![Generator::new("a", 0, 0), Generator::new("a", 1, 0)];
        assert!(BigradedSpace::new(b).is_err());
    }

    #[test]
    fn odd_tensor_odd_on_odd_vector() {
        let v = BigradedSpace::z2("v", 1, 1);
        let swap = Mat::from_rows(vec![vec![q(0), q(1)], vec![q(1), q(0)]]).unwrap();
        let s = BigradedMap::new(v.clone(), v.clone(), swap, Bidegree::new(0, 1)).unwrap();
        let t = tensor(&s, &s);
        // v⊗w with v odd (index 1), w even (index 0): column 1*2+0.
        let col = 2;
        let unsigned = s.matrix[(0, 1)].clone() * s.matrix[(1, 0)].clone();
        assert_eq!(t.matrix[(1, col)], -unsigned);
    }
}
