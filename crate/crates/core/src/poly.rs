//! Sparse multivariate polynomials with real coefficients.
//!
//! Polynomials are the common currency of the crate: orthonormal basis
//! elements, generator images of monomials and pseudo-likelihood ratios are
//! all stored as [`Polynomial`] values.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polynomial dimension must be positive")]
    ZeroDimension,
}

/// Exponent vector of a monomial, `x^α = x_1^{α_1} ... x_d^{α_d}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        assert!(!entries.is_empty(), "multi-index must have length >= 1");
        MultiIndex(entries)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex::new(vec![0; dim])
    }

    /// Unit vector `e_k` of length `dim`, scaled by `power`.
    pub fn unit(dim: usize, k: usize, power: u32) -> Self {
        let mut e = vec![0; dim];
        e[k] = power;
        MultiIndex::new(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total degree `|α|`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.dim(), other.dim());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other` when `other <= self` componentwise.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        let mut out = Vec::with_capacity(self.dim());
        for (a, b) in self.0.iter().zip(&other.0) {
            out.push(a.checked_sub(*b)?);
        }
        Some(MultiIndex(out))
    }

    /// All multi-indices `γ <= self` componentwise.
    pub fn divisors(&self) -> Vec<MultiIndex> {
        let mut out = vec![Vec::with_capacity(self.dim())];
        for &a in &self.0 {
            let mut next = Vec::with_capacity(out.len() * (a as usize + 1));
            for prefix in &out {
                for g in 0..=a {
                    let mut p = prefix.clone();
                    p.push(g);
                    next.push(p);
                }
            }
            out = next;
        }
        out.into_iter().map(MultiIndex).collect()
    }

    /// Product of binomial coefficients `∏ C(α_k, γ_k)`.
    pub fn binomial(&self, gamma: &MultiIndex) -> f64 {
        self.0
            .iter()
            .zip(&gamma.0)
            .map(|(&a, &g)| binomial(a, g))
            .product()
    }

    /// `x^α` evaluated at a point.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product()
    }

    /// Multi-indices of dimension `dim` with `|α| <= max_order`, in graded
    /// order: by total degree, then with higher powers of earlier
    /// coordinates first. For `d = 2`, `k = 2` this is
    /// `1, x1, x2, x1^2, x1 x2, x2^2`.
    pub fn graded(dim: usize, max_order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for deg in 0..=max_order {
            let mut cur = Vec::with_capacity(dim);
            push_with_degree(dim, deg, &mut cur, &mut out);
        }
        out
    }
}

fn push_with_degree(dim: usize, remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if cur.len() + 1 == dim {
        cur.push(remaining);
        out.push(MultiIndex(cur.clone()));
        cur.pop();
        return;
    }
    for first in (0..=remaining).rev() {
        cur.push(first);
        push_with_degree(dim, remaining - first, cur, out);
        cur.pop();
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex::new(v)
    }
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * f64::from(n - i) / f64::from(i + 1);
    }
    acc.round()
}

/// Sparse polynomial in `dim` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    dim: usize,
    #[serde(with = "term_list")]
    terms: BTreeMap<MultiIndex, f64>,
}

mod term_list {
    use super::MultiIndex;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Term {
        index: MultiIndex,
        coeff: f64,
    }

    pub fn serialize<S: Serializer>(
        terms: &BTreeMap<MultiIndex, f64>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let list: Vec<Term> = terms
            .iter()
            .map(|(k, &v)| Term {
                index: k.clone(),
                coeff: v,
            })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<MultiIndex, f64>, D::Error> {
        let list = Vec::<Term>::deserialize(d)?;
        Ok(list
            .into_iter()
            .filter(|t| t.coeff != 0.0)
            .map(|t| (t.index, t.coeff))
            .collect())
    }
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1, "polynomial dimension must be positive");
        Polynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::monomial(MultiIndex::zero(dim), c)
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, 1.0)
    }

    pub fn monomial(index: MultiIndex, coeff: f64) -> Self {
        let mut p = Polynomial::zero(index.dim());
        p.add_term(index, coeff);
        p
    }

    /// The coordinate function `x_k`.
    pub fn variable(dim: usize, k: usize) -> Self {
        Self::monomial(MultiIndex::unit(dim, k, 1), 1.0)
    }

    /// Univariate polynomial from dense coefficients `c_0 + c_1 x + ...`.
    pub fn from_dense(coeffs: &[f64]) -> Self {
        let mut p = Polynomial::zero(1);
        for (j, &c) in coeffs.iter().enumerate() {
            p.add_term(MultiIndex::new(vec![j as u32]), c);
        }
        p
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        if dim == 0 {
            return Err(PolyError::ZeroDimension);
        }
        let mut p = Polynomial::zero(dim);
        for (idx, c) in terms {
            if idx.dim() != dim {
                return Err(PolyError::DimensionMismatch {
                    expected: dim,
                    got: idx.dim(),
                });
            }
            p.add_term(idx, c);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` stands for the `-∞` degree of the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::order).max()
    }

    pub fn coeff(&self, index: &MultiIndex) -> f64 {
        self.terms.get(index).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Accumulates `coeff · x^index`, dropping the term if it cancels to zero.
    pub fn add_term(&mut self, index: MultiIndex, coeff: f64) {
        assert_eq!(index.dim(), self.dim, "term dimension mismatch");
        if coeff == 0.0 {
            return;
        }
        let entry = self.terms.entry(index);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = *o.get() + coeff;
                if v == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
        }
    }

    fn check_dim(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.dim != other.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (k, v) in other.terms() {
            out.add_term(k.clone(), v);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (k, v) in other.terms() {
            out.add_term(k.clone(), -v);
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(other)?;
        let mut out = Polynomial::zero(self.dim);
        for (ka, va) in self.terms() {
            for (kb, vb) in other.terms() {
                out.add_term(ka.add(kb), va * vb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(self.dim);
        }
        Polynomial {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(k, &v)| (k.clone(), v * s))
                .filter(|(_, v)| *v != 0.0)
                .collect(),
        }
    }

    pub fn powi(&self, n: u32) -> Polynomial {
        let mut acc = Polynomial::one(self.dim);
        for _ in 0..n {
            acc = acc.mul(self).expect("same dimension");
        }
        acc
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if self.dim == 1 {
            return Ok(self.horner(x[0]));
        }
        let deg = self.degree().unwrap_or(0) as usize;
        // power tables per coordinate
        let powers: Vec<Vec<f64>> = x
            .iter()
            .map(|&xi| {
                let mut p = Vec::with_capacity(deg + 1);
                let mut acc = 1.0;
                for _ in 0..=deg {
                    p.push(acc);
                    acc *= xi;
                }
                p
            })
            .collect();
        Ok(self
            .terms
            .iter()
            .map(|(k, &c)| {
                c * k
                    .entries()
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| powers[i][a as usize])
                    .product::<f64>()
            })
            .sum())
    }

    /// Univariate Horner evaluation; panics for `dim != 1`.
    pub fn horner(&self, x: f64) -> f64 {
        assert_eq!(self.dim, 1);
        let dense = self.dense_coefficients();
        dense.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Dense coefficient vector `[c_0, ..., c_deg]` of a univariate polynomial.
    pub fn dense_coefficients(&self) -> Vec<f64> {
        assert_eq!(self.dim, 1);
        let deg = self.degree().unwrap_or(0) as usize;
        let mut out = vec![0.0; deg + 1];
        for (k, v) in self.terms() {
            out[k.entries()[0] as usize] = v;
        }
        out
    }

    /// Returns `q` with `q(x) = p(A x + b)`, where `a` is row-major `d×d`.
    pub fn compose_affine(&self, a: &[Vec<f64>], b: &[f64]) -> Result<Polynomial, PolyError> {
        let d = self.dim;
        if a.len() != d {
            return Err(PolyError::DimensionMismatch {
                expected: d,
                got: a.len(),
            });
        }
        if let Some(row) = a.iter().find(|r| r.len() != d) {
            return Err(PolyError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if b.len() != d {
            return Err(PolyError::DimensionMismatch {
                expected: d,
                got: b.len(),
            });
        }
        // y_k = Σ_j a_kj x_j + b_k as polynomials in x
        let linear: Vec<Polynomial> = (0..d)
            .map(|k| {
                let mut p = Polynomial::constant(d, b[k]);
                for (j, &akj) in a[k].iter().enumerate() {
                    p.add_term(MultiIndex::unit(d, j, 1), akj);
                }
                p
            })
            .collect();
        let deg = self.degree().unwrap_or(0);
        let mut power_cache: Vec<Vec<Polynomial>> = linear
            .iter()
            .map(|l| {
                let mut v = vec![Polynomial::one(d)];
                for i in 1..=deg as usize {
                    let next = v[i - 1].mul(l).expect("same dimension");
                    v.push(next);
                }
                v
            })
            .collect();
        let mut out = Polynomial::zero(d);
        for (idx, c) in self.terms() {
            let mut term = Polynomial::constant(d, c);
            for (k, &e) in idx.entries().iter().enumerate() {
                if e > 0 {
                    term = term.mul(&power_cache[k][e as usize])?;
                }
            }
            for (k2, v2) in term.terms() {
                out.add_term(k2.clone(), v2);
            }
        }
        power_cache.clear();
        Ok(out)
    }

    /// Monomial coefficient map `α ↦ coefficient of x^α`.
    pub fn collect_coefficients(&self) -> BTreeMap<MultiIndex, f64> {
        self.terms.clone()
    }

    /// Partial derivative `∂/∂x_k`.
    pub fn derivative(&self, k: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.dim);
        for (idx, c) in self.terms() {
            let e = idx.entries()[k];
            if e == 0 {
                continue;
            }
            let mut ne = idx.entries().to_vec();
            ne[k] -= 1;
            out.add_term(MultiIndex::new(ne), c * f64::from(e));
        }
        out
    }

    /// Leading coefficient of a univariate polynomial, or of the
    /// lexicographically largest top-degree term in several variables.
    pub fn leading_coefficient(&self) -> f64 {
        let Some(deg) = self.degree() else {
            return 0.0;
        };
        self.terms
            .iter()
            .rev()
            .find(|(k, _)| k.order() == deg)
            .map(|(_, &v)| v)
            .unwrap_or(0.0)
    }

    /// Linear functional `Σ_α p_α m(α)` — the expectation of `p` when
    /// `m` returns the moments.
    pub fn apply_moments<E, F>(&self, mut moment: F) -> Result<f64, E>
    where
        F: FnMut(&MultiIndex) -> Result<f64, E>,
    {
        let mut acc = 0.0;
        for (k, c) in self.terms() {
            acc += c * moment(k)?;
        }
        Ok(acc)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (k, v)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{v}·x^{k}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x() -> Polynomial {
        Polynomial::variable(1, 0)
    }

    #[test]
    fn difference_of_squares() {
        let one = Polynomial::one(1);
        let p = x().add(&one).unwrap().mul(&x().sub(&one).unwrap()).unwrap();
        assert_eq!(p, Polynomial::from_dense(&[-1.0, 0.0, 1.0]));
        assert_eq!(p.degree(), Some(2));
    }

    #[test]
    fn multiplication_by_zero_annihilates() {
        let p = Polynomial::from_dense(&[1.0, 2.0, 3.0]);
        let z = p.mul(&Polynomial::zero(1)).unwrap();
        assert!(z.is_zero());
        assert_eq!(z.degree(), None);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = Polynomial::one(1);
        let q = Polynomial::one(2);
        assert!(matches!(
            p.add(&q),
            Err(PolyError::DimensionMismatch { .. })
        ));
        assert!(p.eval(&[1.0, 2.0]).is_err());
        assert!(p.compose_affine(&[vec![1.0, 0.0]], &[0.0]).is_err());
    }

    #[test]
    fn second_laguerre_from_monomials() {
        // (ξ² − 2ξ(D+2) + D² + 3D + 2)/2 assembled from x and constants.
        let d = 1.7;
        let xi = x();
        let built = xi
            .mul(&xi)
            .unwrap()
            .sub(&xi.scale(2.0 * (d + 2.0)))
            .unwrap()
            .add(&Polynomial::one(1).scale(d * d + 3.0 * d + 2.0))
            .unwrap()
            .scale(0.5);
        let expected = Polynomial::from_dense(&[(d * d + 3.0 * d + 2.0) / 2.0, -(d + 2.0), 0.5]);
        for j in 0..3u32 {
            let idx = MultiIndex::new(vec![j]);
            assert!((built.coeff(&idx) - expected.coeff(&idx)).abs() < 1e-15);
        }
    }

    #[test]
    fn evaluation_examples() {
        let d = 2.5;
        let h1 = Polynomial::from_dense(&[d + 1.0, -1.0]);
        assert_eq!(h1.eval(&[d + 1.0]).unwrap(), 0.0);
        assert_eq!(Polynomial::one(3).eval(&[0.3, -2.0, 7.0]).unwrap(), 1.0);
        let c = 1.0;
        let h3 = Polynomial::from_dense(&[0.0, -(c + 3.0), 0.0, 1.0]);
        assert_eq!(h3.eval(&[2.0]).unwrap(), 0.0);
    }

    #[test]
    fn compose_affine_binomial() {
        let p = Polynomial::from_dense(&[0.0, 0.0, 1.0]);
        let q = p.compose_affine(&[vec![2.0]], &[1.0]).unwrap();
        assert_eq!(q, Polynomial::from_dense(&[1.0, 4.0, 4.0]));
        let ident = p.compose_affine(&[vec![1.0]], &[0.0]).unwrap();
        assert_eq!(ident, p);
    }

    #[test]
    fn graded_order_matches_canonical_basis() {
        let b = MultiIndex::graded(2, 2);
        let e: Vec<Vec<u32>> = b.iter().map(|m| m.entries().to_vec()).collect();
        assert_eq!(
            e,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        assert_eq!(MultiIndex::graded(2, 10).len(), 66);
    }

    #[test]
    fn collect_zero_is_empty() {
        assert!(Polynomial::zero(2).collect_coefficients().is_empty());
        let p = Polynomial::from_dense(&[1.0, 0.25]);
        let m = p.collect_coefficients();
        assert_eq!(m.len(), 2);
        assert_eq!(m[&MultiIndex::new(vec![1])], 0.25);
    }

    fn arb_poly(dim: usize) -> impl Strategy<Value = Polynomial> {
        proptest::collection::vec(
            (proptest::collection::vec(0u32..4, dim), -3.0f64..3.0),
            0..6,
        )
        .prop_map(move |terms| {
            Polynomial::from_terms(dim, terms.into_iter().map(|(i, c)| (MultiIndex::new(i), c)))
                .unwrap()
        })
    }

    fn close(p: &Polynomial, q: &Polynomial, tol: f64) -> bool {
        let diff = p.sub(q).unwrap();
        let scale = p
            .terms()
            .chain(q.terms())
            .map(|(_, v)| v.abs())
            .fold(1.0, f64::max);
        let ok = diff.terms().all(|(_, v)| v.abs() <= tol * scale);
        ok
    }

    proptest! {
        #[test]
        fn ring_axioms(p in arb_poly(2), q in arb_poly(2), r in arb_poly(2)) {
            let assoc_l = p.mul(&q).unwrap().mul(&r).unwrap();
            let assoc_r = p.mul(&q.mul(&r).unwrap()).unwrap();
            prop_assert!(close(&assoc_l, &assoc_r, 1e-12));
            let dist_l = p.mul(&q.add(&r).unwrap()).unwrap();
            let dist_r = p.mul(&q).unwrap().add(&p.mul(&r).unwrap()).unwrap();
            prop_assert!(close(&dist_l, &dist_r, 1e-12));
        }

        #[test]
        fn degree_of_product(p in arb_poly(2), q in arb_poly(2)) {
            let pq = p.mul(&q).unwrap();
            match (p.degree(), q.degree()) {
                (Some(a), Some(b)) => {
                    // top-degree parts can cancel only for non-integral-domain
                    // rounding, which never happens with nonzero products here
                    prop_assert!(pq.degree().unwrap_or(0) <= a + b);
                }
                _ => prop_assert!(pq.is_zero()),
            }
        }

        #[test]
        fn compose_matches_pointwise(
            p in arb_poly(2),
            a in proptest::collection::vec(-2.0f64..2.0, 4),
            b in proptest::collection::vec(-1.0f64..1.0, 2),
            x in proptest::collection::vec(-1.5f64..1.5, 2),
        ) {
            let am = vec![vec![a[0], a[1]], vec![a[2], a[3]]];
            let q = p.compose_affine(&am, &b).unwrap();
            let y = [a[0] * x[0] + a[1] * x[1] + b[0], a[2] * x[0] + a[3] * x[1] + b[1]];
            let lhs = q.eval(&x).unwrap();
            let rhs = p.eval(&y).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }

        #[test]
        fn collect_rebuild_is_exact(p in arb_poly(3)) {
            let rebuilt = Polynomial::from_terms(3, p.collect_coefficients()).unwrap();
            prop_assert_eq!(rebuilt, p);
        }
    }
}
