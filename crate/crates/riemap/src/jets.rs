//! Truncated multivariate Taylor arithmetic (jets).
//!
//! A [`Jet`] stores every Taylor coefficient `∂^γ f / γ!` of a scalar quantity
//! at a base point, for all multi-indices `γ` of total degree ≤ K in up to
//! [`MAX_VARS`] variables. Arithmetic is closed at fixed `(vars, order)`:
//! sums and products of jets are jets, so any composed closed-form expression
//! evaluated in jet arithmetic carries its exact partial derivatives up to
//! order K. Elementary functions are applied through univariate composition
//! on the nilpotent part.
//!
//! Coefficients are Taylor-normalized (divided by `γ!`), which makes
//! multiplication a plain truncated convolution. Indices are stored in graded
//! order, so truncating a jet to a lower order is a prefix copy.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::{Error, Result};

/// Maximum number of variables a jet space supports.
pub const MAX_VARS: usize = 6;
/// Maximum truncation order a jet space supports.
pub const MAX_ORDER: usize = 6;

/// Exponent vector of a partial derivative, e.g. `(2,0,1)` for `∂²_x ∂_z`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct MultiIndex(pub [u8; MAX_VARS]);

impl MultiIndex {
    pub fn zero() -> Self {
        MultiIndex([0; MAX_VARS])
    }

    pub fn unit(axis: usize) -> Self {
        let mut e = [0u8; MAX_VARS];
        e[axis] = 1;
        MultiIndex(e)
    }

    pub fn from_slice(exps: &[usize]) -> Self {
        let mut e = [0u8; MAX_VARS];
        for (i, &v) in exps.iter().enumerate() {
            e[i] = v as u8;
        }
        MultiIndex(e)
    }

    /// Total degree (sum of exponents).
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&v| v as usize).sum()
    }

    /// `γ! = Π γ_i!`
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| (1..=v as u64).product::<u64>() as f64)
            .product()
    }

    fn add(&self, other: &MultiIndex) -> MultiIndex {
        let mut e = [0u8; MAX_VARS];
        for i in 0..MAX_VARS {
            e[i] = self.0[i] + other.0[i];
        }
        MultiIndex(e)
    }
}

/// Shared tables for all jets of a fixed `(vars, order)` shape: the graded
/// index list, the convolution triples for multiplication and the
/// coefficient-shift maps for per-axis differentiation.
pub struct JetSpace {
    pub vars: usize,
    pub order: usize,
    indices: Vec<MultiIndex>,
    rank: HashMap<MultiIndex, u32>,
    /// `degree_offset[d]..degree_offset[d+1]` spans the indices of degree d.
    degree_offset: Vec<usize>,
    /// All `(i, j, k)` with `indices[i] + indices[j] = indices[k]`.
    prod: Vec<(u32, u32, u32)>,
    /// Per axis: `(src, dst, factor)` with `coeff_dst(∂f) = factor * coeff_src(f)`.
    deriv: Vec<Vec<(u32, u32, f64)>>,
}

impl JetSpace {
    fn build(vars: usize, order: usize) -> JetSpace {
        assert!(vars >= 1 && vars <= MAX_VARS, "vars out of range");
        assert!(order <= MAX_ORDER, "order out of range");
        let mut indices = Vec::new();
        let mut degree_offset = vec![0usize];
        for d in 0..=order {
            enumerate_degree(vars, d, &mut indices);
            degree_offset.push(indices.len());
        }
        let mut rank = HashMap::with_capacity(indices.len());
        for (pos, &mi) in indices.iter().enumerate() {
            rank.insert(mi, pos as u32);
        }
        let mut prod = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            let da = a.degree();
            for (j, b) in indices.iter().enumerate() {
                if da + b.degree() > order {
                    continue;
                }
                let k = rank[&a.add(b)];
                prod.push((i as u32, j as u32, k));
            }
        }
        // Group by destination for deterministic accumulation order.
        prod.sort_unstable_by_key(|&(i, _, k)| (k, i));
        let mut deriv = Vec::with_capacity(vars);
        for axis in 0..vars {
            let mut map = Vec::new();
            for (dst, mi) in indices.iter().enumerate() {
                if mi.degree() >= order {
                    continue;
                }
                let src = mi.add(&MultiIndex::unit(axis));
                map.push((rank[&src], dst as u32, (mi.0[axis] + 1) as f64));
            }
            deriv.push(map);
        }
        JetSpace {
            vars,
            order,
            indices,
            rank,
            degree_offset,
            prod,
            deriv,
        }
    }

    /// Number of stored coefficients.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, mi: &MultiIndex) -> Option<usize> {
        self.rank.get(mi).map(|&p| p as usize)
    }
}

/// Degree-d multi-indices in `vars` variables, lexicographic within the degree.
fn enumerate_degree(vars: usize, degree: usize, out: &mut Vec<MultiIndex>) {
    fn rec(vars: usize, axis: usize, left: usize, cur: &mut [u8; MAX_VARS], out: &mut Vec<MultiIndex>) {
        if axis + 1 == vars {
            cur[axis] = left as u8;
            out.push(MultiIndex(*cur));
            cur[axis] = 0;
            return;
        }
        for take in (0..=left).rev() {
            cur[axis] = take as u8;
            rec(vars, axis + 1, left - take, cur, out);
        }
        cur[axis] = 0;
    }
    let mut cur = [0u8; MAX_VARS];
    rec(vars, 0, degree, &mut cur, out);
}

/// Global registry of jet spaces; spaces are leaked once so jets can hold a
/// `'static` reference and stay `Send + Sync`.
pub fn space(vars: usize, order: usize) -> &'static JetSpace {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry((vars, order))
        .or_insert_with(|| Box::leak(Box::new(JetSpace::build(vars, order))))
}

/// Truncated multivariate Taylor expansion of a scalar at a point.
#[derive(Clone)]
pub struct Jet {
    space: &'static JetSpace,
    c: Vec<f64>,
}

impl std::fmt::Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Jet({} vars, order {}, value {:.6e})",
            self.space.vars,
            self.space.order,
            self.value()
        )
    }
}

impl Jet {
    pub fn constant(value: f64, space: &'static JetSpace) -> Jet {
        let mut c = vec![0.0; space.len()];
        c[0] = value;
        Jet { space, c }
    }

    /// Seed jet of a coordinate variable: value plus unit first-order
    /// coefficient in its own slot.
    pub fn variable(axis: usize, value: f64, space: &'static JetSpace) -> Result<Jet> {
        if axis >= space.vars {
            return Err(Error::VarIndex(axis, space.vars));
        }
        let mut c = vec![0.0; space.len()];
        c[0] = value;
        if space.order >= 1 {
            let pos = space.position(&MultiIndex::unit(axis)).unwrap();
            c[pos] = 1.0;
        }
        Ok(Jet { space, c })
    }

    pub fn space(&self) -> &'static JetSpace {
        self.space
    }

    pub fn vars(&self) -> usize {
        self.space.vars
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    /// Constant (zeroth-order) coefficient.
    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// Raw partial derivative `∂^γ f` = `γ! ×` stored coefficient.
    pub fn extract(&self, gamma: &MultiIndex) -> Result<f64> {
        if gamma.degree() > self.space.order {
            return Err(Error::DegreeOverflow(gamma.degree(), self.space.order));
        }
        let pos = self.space.position(gamma).ok_or_else(|| Error::Domain {
            op: "extract",
            msg: format!("index {:?} not in space", gamma.0),
        })?;
        Ok(self.c[pos] * gamma.factorial())
    }

    /// Drop coefficients above `order` (prefix copy in graded layout).
    pub fn truncated(&self, order: usize) -> Jet {
        assert!(order <= self.space.order, "cannot raise jet order");
        if order == self.space.order {
            return self.clone();
        }
        let target = space(self.space.vars, order);
        let n = self.space.degree_offset[order + 1];
        Jet {
            space: target,
            c: self.c[..n].to_vec(),
        }
    }

    /// Partial derivative along `axis`, one order lower.
    pub fn derivative(&self, axis: usize) -> Jet {
        assert!(self.space.order >= 1, "jet order budget exhausted");
        assert!(axis < self.space.vars);
        let target = space(self.space.vars, self.space.order - 1);
        let mut c = vec![0.0; target.len()];
        for &(src, dst, factor) in &self.space.deriv[axis] {
            c[dst as usize] = self.c[src as usize] * factor;
        }
        Jet { space: target, c }
    }

    fn assert_same(&self, other: &Jet) {
        assert!(
            std::ptr::eq(self.space, other.space),
            "jet shape mismatch: ({},{}) vs ({},{})",
            self.space.vars,
            self.space.order,
            other.space.vars,
            other.space.order
        );
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.assert_same(other);
        let c = self.c.iter().zip(&other.c).map(|(a, b)| a + b).collect();
        Jet { space: self.space, c }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.assert_same(other);
        let c = self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect();
        Jet { space: self.space, c }
    }

    pub fn neg(&self) -> Jet {
        Jet {
            space: self.space,
            c: self.c.iter().map(|a| -a).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            space: self.space,
            c: self.c.iter().map(|a| a * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.c[0] += s;
        out
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, other: &Jet) -> Jet {
        self.assert_same(other);
        let mut c = vec![0.0; self.c.len()];
        for &(i, j, k) in &self.space.prod {
            c[k as usize] += self.c[i as usize] * other.c[j as usize];
        }
        Jet { space: self.space, c }
    }

    /// `acc += self * other`, reusing the accumulator's storage.
    pub fn mul_add_into(&self, other: &Jet, acc: &mut Jet) {
        self.assert_same(other);
        self.assert_same(acc);
        for &(i, j, k) in &self.space.prod {
            acc.c[k as usize] += self.c[i as usize] * other.c[j as usize];
        }
    }

    pub fn add_assign(&mut self, other: &Jet) {
        self.assert_same(other);
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, other: &Jet) {
        self.assert_same(other);
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a -= b;
        }
    }

    /// Quotient; errors when the divisor's constant term vanishes.
    pub fn try_div(&self, other: &Jet) -> Result<Jet> {
        self.assert_same(other);
        if other.c[0] == 0.0 {
            return Err(Error::Domain {
                op: "div",
                msg: "division by jet with zero constant term".into(),
            });
        }
        Ok(self.mul(&other.recip()))
    }

    pub fn div(&self, other: &Jet) -> Jet {
        self.try_div(other).expect("jet division")
    }

    /// Horner evaluation of `Σ_k coeffs[k] (self − self₀)^k`; the univariate
    /// composition recurrence behind every elementary function.
    fn compose_univariate(&self, coeffs: &[f64]) -> Jet {
        let order = self.space.order;
        let mut nil = self.clone();
        nil.c[0] = 0.0;
        let mut out = Jet::constant(coeffs[order], self.space);
        for k in (0..order).rev() {
            out = out.mul(&nil);
            out.c[0] += coeffs[k];
        }
        out
    }

    fn recip(&self) -> Jet {
        let a0 = self.c[0];
        let order = self.space.order;
        let mut coeffs = vec![0.0; order + 1];
        let mut p = 1.0 / a0;
        for c in coeffs.iter_mut() {
            *c = p;
            p *= -1.0 / a0;
        }
        self.compose_univariate(&coeffs)
    }

    pub fn exp(&self) -> Jet {
        let order = self.space.order;
        let e = self.c[0].exp();
        let mut coeffs = vec![0.0; order + 1];
        let mut fact = 1.0;
        for (k, c) in coeffs.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *c = e / fact;
        }
        self.compose_univariate(&coeffs)
    }

    pub fn try_ln(&self) -> Result<Jet> {
        let a0 = self.c[0];
        if a0 <= 0.0 {
            return Err(Error::Domain {
                op: "log",
                msg: format!("log of non-positive constant term {a0}"),
            });
        }
        let order = self.space.order;
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = a0.ln();
        let mut p = 1.0 / a0;
        for k in 1..=order {
            coeffs[k] = if k % 2 == 1 { p / k as f64 } else { -p / k as f64 };
            p /= a0;
        }
        Ok(self.compose_univariate(&coeffs))
    }

    pub fn ln(&self) -> Jet {
        self.try_ln().expect("jet log")
    }

    pub fn try_sqrt(&self) -> Result<Jet> {
        self.try_powf(0.5).map_err(|_| Error::Domain {
            op: "sqrt",
            msg: format!("sqrt of non-positive constant term {}", self.c[0]),
        })
    }

    pub fn sqrt(&self) -> Jet {
        self.try_sqrt().expect("jet sqrt")
    }

    /// Real power; the base's constant term must be positive.
    pub fn try_powf(&self, p: f64) -> Result<Jet> {
        let a0 = self.c[0];
        if a0 <= 0.0 {
            return Err(Error::Domain {
                op: "pow",
                msg: format!("pow base with non-positive constant term {a0}"),
            });
        }
        let order = self.space.order;
        let mut coeffs = vec![0.0; order + 1];
        // binom(p, k) a0^{p-k}
        let mut binom = 1.0;
        for (k, c) in coeffs.iter_mut().enumerate() {
            if k > 0 {
                binom *= (p - (k as f64 - 1.0)) / k as f64;
            }
            *c = binom * a0.powf(p - k as f64);
        }
        Ok(self.compose_univariate(&coeffs))
    }

    pub fn powf(&self, p: f64) -> Jet {
        self.try_powf(p).expect("jet powf")
    }

    /// Integer power by repeated multiplication; valid for any base.
    pub fn powi(&self, n: i32) -> Jet {
        if n < 0 {
            return Jet::constant(1.0, self.space).div(&self.powi(-n));
        }
        let mut out = Jet::constant(1.0, self.space);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    pub fn sin(&self) -> Jet {
        self.circular(true)
    }

    pub fn cos(&self) -> Jet {
        self.circular(false)
    }

    fn circular(&self, sin_first: bool) -> Jet {
        let order = self.space.order;
        let (s, c) = self.c[0].sin_cos();
        let cycle = if sin_first {
            [s, c, -s, -c]
        } else {
            [c, -s, -c, s]
        };
        let mut coeffs = vec![0.0; order + 1];
        let mut fact = 1.0;
        for (k, out) in coeffs.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *out = cycle[k % 4] / fact;
        }
        self.compose_univariate(&coeffs)
    }

    /// Multivariate composition `outer(inner₁, …, inner_n)`. The outer jet
    /// must be expanded at the inner jets' constant terms; the result lives in
    /// the inner jets' space. Exact to `min(outer.order, inner.order)`.
    pub fn compose(outer: &Jet, inner: &[Jet]) -> Jet {
        assert_eq!(outer.space.vars, inner.len(), "composition arity");
        let ispace = inner[0].space;
        let out_order = outer.space.order.min(ispace.order);
        let target = space(ispace.vars, out_order);
        // Nilpotent parts and their powers up to out_order.
        let mut powers: Vec<Vec<Jet>> = Vec::with_capacity(inner.len());
        for jet in inner {
            let mut nil = jet.truncated(out_order);
            nil.c[0] = 0.0;
            let mut pows = Vec::with_capacity(out_order + 1);
            pows.push(Jet::constant(1.0, target));
            for k in 1..=out_order {
                let next = pows[k - 1].mul(&nil);
                pows.push(next);
            }
            powers.push(pows);
        }
        let mut out = Jet::constant(0.0, target);
        for (pos, gamma) in outer.space.indices.iter().enumerate() {
            if gamma.degree() > out_order {
                break;
            }
            let coeff = outer.c[pos];
            if coeff == 0.0 {
                continue;
            }
            let mut term = Jet::constant(coeff, target);
            for (a, pows) in powers.iter().enumerate() {
                let e = gamma.0[a] as usize;
                if e > 0 {
                    term = term.mul(&pows[e]);
                }
            }
            out.add_assign(&term);
        }
        out
    }
}

/// The four basic arithmetic operations as a checked entry point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Shape-checked jet arithmetic.
pub fn arith(a: &Jet, b: &Jet, op: ArithOp) -> Result<Jet> {
    if !std::ptr::eq(a.space(), b.space()) {
        return Err(Error::JetShape(a.vars(), a.order(), b.vars(), b.order()));
    }
    match op {
        ArithOp::Add => Ok(a.add(b)),
        ArithOp::Sub => Ok(a.sub(b)),
        ArithOp::Mul => Ok(a.mul(b)),
        ArithOp::Div => a.try_div(b),
    }
}

impl std::ops::Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        Jet::add(self, rhs)
    }
}
impl std::ops::Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        Jet::sub(self, rhs)
    }
}
impl std::ops::Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        Jet::mul(self, rhs)
    }
}
impl std::ops::Div<&Jet> for &Jet {
    type Output = Jet;
    fn div(self, rhs: &Jet) -> Jet {
        Jet::div(self, rhs)
    }
}
impl std::ops::Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn variable_seed() {
        let s = space(2, 2);
        let j = Jet::variable(0, 2.0, s).unwrap();
        assert_eq!(j.value(), 2.0);
        assert_eq!(j.extract(&MultiIndex::from_slice(&[1, 0])).unwrap(), 1.0);
        assert_eq!(j.extract(&MultiIndex::from_slice(&[0, 1])).unwrap(), 0.0);
        assert_eq!(j.extract(&MultiIndex::from_slice(&[2, 0])).unwrap(), 0.0);
    }

    #[test]
    fn variable_order_zero_is_constant() {
        let s = space(1, 0);
        let j = Jet::variable(0, 7.5, s).unwrap();
        assert_eq!(j.coeffs(), &[7.5]);
    }

    #[test]
    fn variable_seed_three_vars() {
        let s = space(3, 1);
        let j = Jet::variable(1, -3.5, s).unwrap();
        assert_eq!(j.value(), -3.5);
        assert_eq!(j.extract(&MultiIndex::from_slice(&[0, 1, 0])).unwrap(), 1.0);
        assert_eq!(j.extract(&MultiIndex::from_slice(&[1, 0, 0])).unwrap(), 0.0);
    }

    #[test]
    fn variable_index_out_of_range() {
        assert!(Jet::variable(2, 0.0, space(2, 2)).is_err());
    }

    #[test]
    fn square_of_variable() {
        let s = space(1, 2);
        let x = Jet::variable(0, 3.0, s).unwrap();
        let y = x.mul(&x);
        assert_eq!(y.value(), 9.0);
        assert_eq!(y.extract(&MultiIndex::from_slice(&[1])).unwrap(), 6.0);
        assert_eq!(y.extract(&MultiIndex::from_slice(&[2])).unwrap(), 2.0);
    }

    #[test]
    fn self_division_is_one() {
        let s = space(2, 3);
        let x = Jet::variable(0, 1.3, s).unwrap();
        let y = Jet::variable(1, -0.4, s).unwrap();
        let a = x.exp().mul(&y.sin().add_scalar(2.0));
        let q = a.div(&a);
        assert_abs_diff_eq!(q.value(), 1.0, epsilon = 1e-14);
        for &c in &q.coeffs()[1..] {
            assert_abs_diff_eq!(c, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn mixed_partial_of_product() {
        let s = space(2, 2);
        let x = Jet::variable(0, 2.0, s).unwrap();
        let y = Jet::variable(1, 5.0, s).unwrap();
        let p = x.mul(&y);
        assert_eq!(p.extract(&MultiIndex::from_slice(&[1, 1])).unwrap(), 1.0);
    }

    #[test]
    fn division_by_zero_constant_term_fails() {
        let s = space(1, 2);
        let x = Jet::variable(0, 0.0, s).unwrap();
        let one = Jet::constant(1.0, s);
        assert!(one.try_div(&x).is_err());
    }

    #[test]
    fn arith_rejects_shape_mismatch() {
        let a = Jet::constant(1.0, space(2, 2));
        let b = Jet::constant(1.0, space(2, 3));
        assert!(arith(&a, &b, ArithOp::Add).is_err());
    }

    #[test]
    fn exp_taylor_coefficients() {
        let x = Jet::variable(0, 0.0, space(1, 3)).unwrap();
        let e = x.exp();
        assert_abs_diff_eq!(e.coeffs()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.coeffs()[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.coeffs()[2], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.coeffs()[3], 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn sin_taylor_coefficients() {
        let x = Jet::variable(0, 0.0, space(1, 3)).unwrap();
        let v = x.sin();
        assert_abs_diff_eq!(v.coeffs()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.coeffs()[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.coeffs()[2], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.coeffs()[3], -1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn sqrt_exp_squared_is_exp() {
        let x = Jet::variable(0, 0.7, space(1, 4)).unwrap();
        let lhs = x.exp().sqrt().powi(2);
        let rhs = x.exp();
        for (a, b) in lhs.coeffs().iter().zip(rhs.coeffs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn extract_raw_derivative() {
        let x = Jet::variable(0, 0.0, space(1, 3)).unwrap();
        let e = x.exp();
        // ∂² exp at 0 is 1 (coefficient 1/2 times 2!)
        assert_abs_diff_eq!(
            e.extract(&MultiIndex::from_slice(&[2])).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(e.extract(&MultiIndex::from_slice(&[4])).is_err());
    }

    #[test]
    fn derivative_shifts_coefficients() {
        let s = space(2, 3);
        let x = Jet::variable(0, 0.4, s).unwrap();
        let y = Jet::variable(1, 1.1, s).unwrap();
        let f = x.sin().mul(&y.exp());
        let fx = f.derivative(0);
        // ∂_x f = cos(x) e^y; check value and a second derivative
        assert_abs_diff_eq!(fx.value(), 0.4f64.cos() * 1.1f64.exp(), epsilon = 1e-13);
        assert_abs_diff_eq!(
            fx.extract(&MultiIndex::from_slice(&[0, 2])).unwrap(),
            0.4f64.cos() * 1.1f64.exp(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn truncation_is_prefix() {
        let s = space(3, 4);
        let x = Jet::variable(0, 0.2, s).unwrap();
        let f = x.exp();
        let t = f.truncated(2);
        assert_eq!(t.order(), 2);
        for (a, b) in t.coeffs().iter().zip(f.coeffs()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn composition_matches_direct() {
        // outer(u, v) = sin(u) * v at (u0, v0); inner u = x^2 + y, v = exp(y)
        let sx = space(2, 4);
        let x = Jet::variable(0, 0.3, sx).unwrap();
        let y = Jet::variable(1, -0.2, sx).unwrap();
        let u = x.mul(&x).add(&y);
        let v = y.exp();

        let sy = space(2, 4);
        let u0 = Jet::variable(0, u.value(), sy).unwrap();
        let v0 = Jet::variable(1, v.value(), sy).unwrap();
        let outer = u0.sin().mul(&v0);

        let composed = Jet::compose(&outer, &[u.clone(), v.clone()]);
        let direct = u.sin().mul(&v);
        for (a, b) in composed.coeffs().iter().zip(direct.coeffs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn leibniz_rule_on_extracted_derivatives() {
        let s = space(2, 2);
        let x = Jet::variable(0, 0.9, s).unwrap();
        let y = Jet::variable(1, 0.5, s).unwrap();
        let a = x.exp().mul(&y.cos());
        let b = y.mul(&x.sin()).add_scalar(1.5);
        let prod = a.mul(&b);
        for axis in 0..2 {
            let di = MultiIndex::unit(axis);
            let lhs = prod.extract(&di).unwrap();
            let rhs = a.extract(&di).unwrap() * b.value() + a.value() * b.extract(&di).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-13);
        }
    }
}
