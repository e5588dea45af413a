//! Dense tensors of jets (and of plain values) with an explicit variance
//! signature, plus the coordinate covariant derivative.
//!
//! Index conventions: components are stored row-major in the slot order of
//! the signature. The covariant derivative appends one covariant slot at the
//! END, so `T_{ij,k}` is `nabla(T)[i,j,k]` with `k` the derivative index.

use crate::jets::{Jet, JetSpace};
use crate::{Error, Result};

/// Variance of one tensor slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Covariant chart index (dimension = chart dim).
    Cov,
    /// Contravariant chart index.
    Con,
    /// Contravariant index in the map's target coordinates.
    Map,
}

/// Tensor of jets at a point.
#[derive(Clone, Debug)]
pub struct JetTensor {
    slots: Vec<Slot>,
    dims: Vec<usize>,
    data: Vec<Jet>,
}

impl JetTensor {
    pub fn zeros(slots: &[Slot], chart_dim: usize, map_dim: usize, sp: &'static JetSpace) -> Self {
        let dims: Vec<usize> = slots
            .iter()
            .map(|s| match s {
                Slot::Cov | Slot::Con => chart_dim,
                Slot::Map => map_dim,
            })
            .collect();
        let len = dims.iter().product::<usize>().max(1);
        JetTensor {
            slots: slots.to_vec(),
            dims,
            data: vec![Jet::constant(0.0, sp); len],
        }
    }

    pub fn scalar(j: Jet) -> Self {
        JetTensor {
            slots: vec![],
            dims: vec![],
            data: vec![j],
        }
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn space(&self) -> &'static JetSpace {
        self.data[0].space()
    }

    pub fn order(&self) -> usize {
        self.space().order
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        for (i, &v) in idx.iter().enumerate() {
            debug_assert!(v < self.dims[i]);
            off = off * self.dims[i] + v;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> &Jet {
        &self.data[self.offset(idx)]
    }

    pub fn at_mut(&mut self, idx: &[usize]) -> &mut Jet {
        let off = self.offset(idx);
        &mut self.data[off]
    }

    pub fn set(&mut self, idx: &[usize], j: Jet) {
        let off = self.offset(idx);
        self.data[off] = j;
    }

    pub fn data(&self) -> &[Jet] {
        &self.data
    }

    /// All index tuples in row-major order.
    pub fn index_iter(&self) -> IndexIter {
        IndexIter::new(self.dims.clone())
    }

    pub fn truncated(&self, order: usize) -> JetTensor {
        if order == self.order() {
            return self.clone();
        }
        JetTensor {
            slots: self.slots.clone(),
            dims: self.dims.clone(),
            data: self.data.iter().map(|j| j.truncated(order)).collect(),
        }
    }

    pub fn add(&self, other: &JetTensor) -> JetTensor {
        assert_eq!(self.dims, other.dims);
        let o = self.order().min(other.order());
        let a = self.truncated(o);
        let b = other.truncated(o);
        JetTensor {
            slots: a.slots.clone(),
            dims: a.dims.clone(),
            data: a.data.iter().zip(&b.data).map(|(x, y)| x.add(y)).collect(),
        }
    }

    pub fn sub(&self, other: &JetTensor) -> JetTensor {
        assert_eq!(self.dims, other.dims);
        let o = self.order().min(other.order());
        let a = self.truncated(o);
        let b = other.truncated(o);
        JetTensor {
            slots: a.slots.clone(),
            dims: a.dims.clone(),
            data: a.data.iter().zip(&b.data).map(|(x, y)| x.sub(y)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> JetTensor {
        JetTensor {
            slots: self.slots.clone(),
            dims: self.dims.clone(),
            data: self.data.iter().map(|j| j.scale(s)).collect(),
        }
    }

    pub fn scale_jet(&self, s: &Jet) -> JetTensor {
        let o = self.order().min(s.order());
        let st = s.truncated(o);
        let t = self.truncated(o);
        JetTensor {
            slots: t.slots.clone(),
            dims: t.dims.clone(),
            data: t.data.iter().map(|j| j.mul(&st)).collect(),
        }
    }

    /// Constant terms as a plain value tensor.
    pub fn values(&self) -> Tensor {
        Tensor {
            slots: self.slots.clone(),
            dims: self.dims.clone(),
            data: self.data.iter().map(|j| j.value()).collect(),
        }
    }

    /// Largest |value| over all components.
    pub fn max_abs_value(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, j| m.max(j.value().abs()))
    }
}

/// Plain value tensor (constant terms of a [`JetTensor`], or any component
/// array used in residual reports).
#[derive(Clone, Debug)]
pub struct Tensor {
    pub slots: Vec<Slot>,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(slots: &[Slot], chart_dim: usize, map_dim: usize) -> Self {
        let dims: Vec<usize> = slots
            .iter()
            .map(|s| match s {
                Slot::Cov | Slot::Con => chart_dim,
                Slot::Map => map_dim,
            })
            .collect();
        let len = dims.iter().product::<usize>().max(1);
        Tensor {
            slots: slots.to_vec(),
            dims,
            data: vec![0.0; len],
        }
    }

    fn offset(&self, idx: &[usize]) -> usize {
        let mut off = 0;
        for (i, &v) in idx.iter().enumerate() {
            off = off * self.dims[i] + v;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    pub fn index_iter(&self) -> IndexIter {
        IndexIter::new(self.dims.clone())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.dims, other.dims);
        Tensor {
            slots: self.slots.clone(),
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Row-major iterator over all index tuples of a dims vector.
pub struct IndexIter {
    dims: Vec<usize>,
    cur: Vec<usize>,
    done: bool,
}

impl IndexIter {
    pub fn new(dims: Vec<usize>) -> Self {
        let done = dims.iter().any(|&d| d == 0);
        IndexIter {
            cur: vec![0; dims.len()],
            dims,
            done,
        }
    }
}

impl Iterator for IndexIter {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        let mut k = self.dims.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.cur[k] += 1;
            if self.cur[k] < self.dims[k] {
                break;
            }
            self.cur[k] = 0;
        }
        Some(out)
    }
}

/// Pullback-bundle connection data for covariant derivatives of tensors with
/// target-valued slots: `gamma_pull[a][c][ν] = Γ_N^a_{bc}(φ(x)) ∂_ν φ^b`.
pub struct PullbackConnection<'a> {
    pub gamma_pull: &'a JetTensor,
}

/// Coordinate covariant derivative; appends one covariant slot at the end
/// (the derivative index). `gamma` is the Levi-Civita connection `Γ^κ_{μν}`
/// with slots `[Con, Cov, Cov]`. Tensors with `Map` slots need `pullback`.
pub fn covariant_derivative(
    t: &JetTensor,
    gamma: &JetTensor,
    pullback: Option<&PullbackConnection>,
) -> Result<JetTensor> {
    if t.order() == 0 {
        return Err(Error::JetBudget {
            needed: 1,
            available: 0,
        });
    }
    let m = gamma.dims()[0];
    let out_order = t.order() - 1;
    if gamma.order() < out_order {
        return Err(Error::JetBudget {
            needed: out_order,
            available: gamma.order(),
        });
    }
    if t.slots().contains(&Slot::Map) && pullback.is_none() {
        return Err(Error::Domain {
            op: "covariant_derivative",
            msg: "tensor has target-valued slots but no pullback connection given".into(),
        });
    }
    let sp = crate::jets::space(t.space().vars, out_order);
    let gamma_t = gamma.truncated(out_order);
    let pull_t = pullback.map(|pc| pc.gamma_pull.truncated(out_order));

    let mut out_slots = t.slots().to_vec();
    out_slots.push(Slot::Cov);
    let map_dim = t
        .slots()
        .iter()
        .zip(t.dims())
        .find(|(s, _)| **s == Slot::Map)
        .map(|(_, &d)| d)
        .unwrap_or(0);
    let mut out = JetTensor::zeros(&out_slots, m, map_dim, sp);

    for idx in t.index_iter() {
        let base = t.at(&idx).clone();
        for nu in 0..m {
            let mut acc = base.derivative(nu).truncated(out_order);
            for (s, slot) in t.slots().iter().enumerate() {
                match slot {
                    Slot::Cov => {
                        // − Γ^λ_{ν i_s} T[... λ ...]
                        let i_s = idx[s];
                        let mut corr = Jet::constant(0.0, sp);
                        for lam in 0..m {
                            let mut jdx = idx.clone();
                            jdx[s] = lam;
                            gamma_t
                                .at(&[lam, nu, i_s])
                                .mul_add_into(&t.at(&jdx).truncated(out_order), &mut corr);
                        }
                        acc.sub_assign(&corr);
                    }
                    Slot::Con => {
                        // + Γ^{i_s}_{ν λ} T[... λ ...]
                        let i_s = idx[s];
                        let mut corr = Jet::constant(0.0, sp);
                        for lam in 0..m {
                            let mut jdx = idx.clone();
                            jdx[s] = lam;
                            gamma_t
                                .at(&[i_s, nu, lam])
                                .mul_add_into(&t.at(&jdx).truncated(out_order), &mut corr);
                        }
                        acc.add_assign(&corr);
                    }
                    Slot::Map => {
                        // + Γ_N^{a_s}_{bc}(φ) φ^b_ν T[... c ...]
                        let a_s = idx[s];
                        let pull = pull_t.as_ref().unwrap();
                        let n = map_dim;
                        let mut corr = Jet::constant(0.0, sp);
                        for c in 0..n {
                            let mut jdx = idx.clone();
                            jdx[s] = c;
                            pull.at(&[a_s, c, nu])
                                .mul_add_into(&t.at(&jdx).truncated(out_order), &mut corr);
                        }
                        acc.add_assign(&corr);
                    }
                }
            }
            let mut odx = idx.clone();
            odx.push(nu);
            out.set(&odx, acc);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::space;

    #[test]
    fn index_iter_covers_all() {
        let it = IndexIter::new(vec![2, 3]);
        let all: Vec<_> = it.collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[5], vec![1, 2]);
    }

    #[test]
    fn scalar_tensor_round_trip() {
        let sp = space(2, 1);
        let t = JetTensor::scalar(Jet::constant(3.0, sp));
        assert_eq!(t.rank(), 0);
        assert_eq!(t.at(&[]).value(), 3.0);
    }

    #[test]
    fn derivative_of_scalar_is_gradient() {
        // f = x1^2 x2 on a flat chart: ∇f = ∂f (no connection terms)
        let sp = space(2, 3);
        let x = Jet::variable(0, 1.5, sp).unwrap();
        let y = Jet::variable(1, -0.5, sp).unwrap();
        let f = x.mul(&x).mul(&y);
        let t = JetTensor::scalar(f);
        let gamma = JetTensor::zeros(&[Slot::Con, Slot::Cov, Slot::Cov], 2, 0, space(2, 2));
        let grad = covariant_derivative(&t, &gamma, None).unwrap();
        assert!((grad.at(&[0]).value() - 2.0 * 1.5 * -0.5).abs() < 1e-14);
        assert!((grad.at(&[1]).value() - 1.5 * 1.5).abs() < 1e-14);
    }
}
