//! Coordinate-component Levi-Civita geometry: metric evaluation through
//! jets, Christoffel symbols, the Riemann/Ricci/scalar tower, orthonormal
//! frames and the frame bridge used to compare against moving-frame
//! component formulas.
//!
//! Sign conventions: `R^ρ_{σμν} = ∂_μ Γ^ρ_{νσ} − ∂_ν Γ^ρ_{μσ} + Γ^ρ_{μλ}Γ^λ_{νσ}
//! − Γ^ρ_{νλ}Γ^λ_{μσ}`, lowered as `R_{ρσμν} = g_{ρλ} R^λ_{σμν}`, Ricci by the
//! 1-3 trace `Ric_{σν} = g^{ρμ} R_{ρσμν}`. With these choices the unit round
//! sphere has `Ric = (m−1) g` and `S = m(m−1)`.

mod fields;
mod tensor;

pub use fields::{Chart, MetricField, MetricSource, ScalarField, SymExprMatrix};
pub use tensor::{covariant_derivative, IndexIter, JetTensor, PullbackConnection, Slot, Tensor};

use nalgebra::DMatrix;

use crate::jets::{space, Jet};
use crate::{Error, Result};

/// Tolerance below which |det g| is treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Invert a symmetric matrix of jets by Gauss-Jordan elimination with
/// partial pivoting on constant terms; also returns the determinant jet.
pub fn invert_jet_matrix(mat: &[Vec<Jet>]) -> Result<(Vec<Vec<Jet>>, Jet)> {
    let n = mat.len();
    let sp = mat[0][0].space();
    let mut a: Vec<Vec<Jet>> = mat.to_vec();
    let mut inv: Vec<Vec<Jet>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Jet::constant(if i == j { 1.0 } else { 0.0 }, sp))
                .collect()
        })
        .collect();
    let mut det = Jet::constant(1.0, sp);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                a[r1][col]
                    .value()
                    .abs()
                    .partial_cmp(&a[r2][col].value().abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot_row][col].value().abs() < 1e-300 {
            return Err(Error::Domain {
                op: "invert",
                msg: "singular matrix".into(),
            });
        }
        if pivot_row != col {
            a.swap(pivot_row, col);
            inv.swap(pivot_row, col);
            det = det.neg();
        }
        let pivot = a[col][col].clone();
        det = det.mul(&pivot);
        for j in 0..n {
            a[col][j] = a[col][j].div(&pivot);
            inv[col][j] = inv[col][j].div(&pivot);
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col].clone();
            if factor.coeffs().iter().all(|&c| c == 0.0) {
                continue;
            }
            for j in 0..n {
                let t = factor.mul(&a[col][j]);
                a[row][j].sub_assign(&t);
                let t = factor.mul(&inv[col][j]);
                inv[row][j].sub_assign(&t);
            }
        }
    }
    Ok((inv, det))
}

/// Pointwise geometry of a metric field: the metric, its inverse and volume
/// density as jets of the requested order, with the connection and curvature
/// tower as far down as the order budget allows (each derivative consumes
/// one order).
pub struct GeomAt {
    pub dim: usize,
    pub point: Vec<f64>,
    pub order: usize,
    pub signature: (usize, usize),
    /// `g_{μν}`, order K.
    pub g: JetTensor,
    /// `g^{μν}`, order K.
    pub g_inv: JetTensor,
    /// det g (signed), order K.
    pub det: Jet,
    /// `√|det g|`, order K.
    pub sqrt_det: Jet,
    gamma: Option<JetTensor>,
    riem: Option<JetTensor>,
    ric: Option<JetTensor>,
    scal: Option<JetTensor>,
}

impl GeomAt {
    pub fn new(field: &MetricField, p: &[f64], order: usize) -> Result<GeomAt> {
        if !field.chart.contains(p) {
            return Err(Error::OutsideDomain { point: p.to_vec() });
        }
        let m = field.dim();
        let sp = space(m, order);
        let gm = field.eval_jet(p, sp)?;
        let (inv, det) = invert_jet_matrix(&gm).map_err(|_| Error::DegenerateMetric {
            point: p.to_vec(),
            det: 0.0,
        })?;
        if det.value().abs() <= DEGENERACY_TOL {
            return Err(Error::DegenerateMetric {
                point: p.to_vec(),
                det: det.value(),
            });
        }
        // Eigenvalue sign pattern must match the chart signature.
        let gval = DMatrix::from_fn(m, m, |i, j| gm[i][j].value());
        let eig = gval.symmetric_eigenvalues();
        let pos = eig.iter().filter(|&&v| v > DEGENERACY_TOL).count();
        let neg = eig.iter().filter(|&&v| v < -DEGENERACY_TOL).count();
        if (pos, neg) != field.chart.signature {
            return Err(Error::Scenario(format!(
                "metric signature ({pos},{neg}) at {p:?} does not match chart signature {:?}",
                field.chart.signature
            )));
        }
        let sign = if det.value() < 0.0 { -1.0 } else { 1.0 };
        let sqrt_det = det.scale(sign).sqrt();

        let mut g = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, sp);
        let mut g_inv = JetTensor::zeros(&[Slot::Con, Slot::Con], m, 0, sp);
        for i in 0..m {
            for j in 0..m {
                g.set(&[i, j], gm[i][j].clone());
                g_inv.set(&[i, j], inv[i][j].clone());
            }
        }

        let mut geo = GeomAt {
            dim: m,
            point: p.to_vec(),
            order,
            signature: field.chart.signature,
            g,
            g_inv,
            det,
            sqrt_det,
            gamma: None,
            riem: None,
            ric: None,
            scal: None,
        };
        if order >= 1 {
            geo.gamma = Some(geo.compute_gamma());
        }
        if order >= 2 {
            let (riem, ric, scal) = geo.compute_curvature();
            geo.riem = Some(riem);
            geo.ric = Some(ric);
            geo.scal = Some(scal);
        }
        Ok(geo)
    }

    /// `Γ^κ_{μν} = ½ g^{κλ}(∂_μ g_{λν} + ∂_ν g_{λμ} − ∂_λ g_{μν})`, order K−1.
    fn compute_gamma(&self) -> JetTensor {
        let m = self.dim;
        let ord = self.order - 1;
        let sp = space(m, ord);
        let ginv = self.g_inv.truncated(ord);
        // ∂_μ g_{λν}
        let mut dg = vec![vec![vec![Jet::constant(0.0, sp); m]; m]; m];
        for lam in 0..m {
            for nu in 0..m {
                let gj = self.g.at(&[lam, nu]);
                for mu in 0..m {
                    dg[mu][lam][nu] = gj.derivative(mu);
                }
            }
        }
        let mut gamma = JetTensor::zeros(&[Slot::Con, Slot::Cov, Slot::Cov], m, 0, sp);
        for k in 0..m {
            for mu in 0..m {
                for nu in 0..m {
                    let mut acc = Jet::constant(0.0, sp);
                    for lam in 0..m {
                        let sum = dg[mu][lam][nu]
                            .add(&dg[nu][lam][mu])
                            .sub(&dg[lam][mu][nu]);
                        ginv.at(&[k, lam]).mul_add_into(&sum, &mut acc);
                    }
                    gamma.set(&[k, mu, nu], acc.scale(0.5));
                }
            }
        }
        gamma
    }

    /// Lowered Riemann `R_{ρσμν}`, Ricci and scalar curvature, order K−2.
    fn compute_curvature(&self) -> (JetTensor, JetTensor, JetTensor) {
        let m = self.dim;
        let ord = self.order - 2;
        let sp = space(m, ord);
        let gamma = self.gamma.as_ref().unwrap();
        let gamma_t = gamma.truncated(ord);
        let g_t = self.g.truncated(ord);
        let ginv_t = self.g_inv.truncated(ord);

        // R^ρ_{σμν}
        let mut riem_up = JetTensor::zeros(&[Slot::Con, Slot::Cov, Slot::Cov, Slot::Cov], m, 0, sp);
        for r in 0..m {
            for s in 0..m {
                for mu in 0..m {
                    for nu in 0..m {
                        let mut acc = gamma.at(&[r, nu, s]).derivative(mu).truncated(ord);
                        acc.sub_assign(&gamma.at(&[r, mu, s]).derivative(nu).truncated(ord));
                        let mut quad = Jet::constant(0.0, sp);
                        for lam in 0..m {
                            gamma_t
                                .at(&[r, mu, lam])
                                .mul_add_into(gamma_t.at(&[lam, nu, s]), &mut quad);
                        }
                        acc.add_assign(&quad);
                        let mut quad2 = Jet::constant(0.0, sp);
                        for lam in 0..m {
                            gamma_t
                                .at(&[r, nu, lam])
                                .mul_add_into(gamma_t.at(&[lam, mu, s]), &mut quad2);
                        }
                        acc.sub_assign(&quad2);
                        riem_up.set(&[r, s, mu, nu], acc);
                    }
                }
            }
        }
        // Lower the first index.
        let mut riem = JetTensor::zeros(&[Slot::Cov; 4], m, 0, sp);
        for r in 0..m {
            for s in 0..m {
                for mu in 0..m {
                    for nu in 0..m {
                        let mut acc = Jet::constant(0.0, sp);
                        for lam in 0..m {
                            g_t.at(&[r, lam])
                                .mul_add_into(riem_up.at(&[lam, s, mu, nu]), &mut acc);
                        }
                        riem.set(&[r, s, mu, nu], acc);
                    }
                }
            }
        }
        // Ric_{σν} = g^{ρμ} R_{ρσμν}
        let mut ric = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, sp);
        for s in 0..m {
            for nu in 0..m {
                let mut acc = Jet::constant(0.0, sp);
                for r in 0..m {
                    for mu in 0..m {
                        ginv_t
                            .at(&[r, mu])
                            .mul_add_into(riem.at(&[r, s, mu, nu]), &mut acc);
                    }
                }
                ric.set(&[s, nu], acc);
            }
        }
        // S = g^{σν} Ric_{σν}
        let mut s_acc = Jet::constant(0.0, sp);
        for s in 0..m {
            for nu in 0..m {
                ginv_t.at(&[s, nu]).mul_add_into(ric.at(&[s, nu]), &mut s_acc);
            }
        }
        (riem, ric, JetTensor::scalar(s_acc))
    }

    pub fn gamma(&self) -> Result<&JetTensor> {
        self.gamma.as_ref().ok_or(Error::JetBudget {
            needed: 1,
            available: self.order,
        })
    }

    /// Lowered Riemann tensor `R_{ρσμν}`.
    pub fn riemann(&self) -> Result<&JetTensor> {
        self.riem.as_ref().ok_or(Error::JetBudget {
            needed: 2,
            available: self.order,
        })
    }

    pub fn ricci(&self) -> Result<&JetTensor> {
        self.ric.as_ref().ok_or(Error::JetBudget {
            needed: 2,
            available: self.order,
        })
    }

    /// Scalar curvature as a rank-0 tensor.
    pub fn scalar(&self) -> Result<&JetTensor> {
        self.scal.as_ref().ok_or(Error::JetBudget {
            needed: 2,
            available: self.order,
        })
    }

    /// Covariant derivative with this point's connection.
    pub fn nabla(&self, t: &JetTensor) -> Result<JetTensor> {
        covariant_derivative(t, self.gamma()?, None)
    }

    /// Trace two covariant slots with `g^{μν}`.
    pub fn trace_g(&self, t: &JetTensor, ax1: usize, ax2: usize) -> JetTensor {
        trace_with_inverse(t, ax1, ax2, &self.g_inv)
    }

    /// Raise one covariant slot with `g^{μν}`.
    pub fn raise(&self, t: &JetTensor, ax: usize) -> JetTensor {
        let m = self.dim;
        let ord = t.order().min(self.g_inv.order());
        let sp = space(t.space().vars, ord);
        let tt = t.truncated(ord);
        let ginv = self.g_inv.truncated(ord);
        let mut slots = t.slots().to_vec();
        slots[ax] = Slot::Con;
        let map_dim = map_dim_of(t);
        let mut out = JetTensor::zeros(&slots, m, map_dim, sp);
        for idx in out.index_iter() {
            let mut acc = Jet::constant(0.0, sp);
            for lam in 0..m {
                let mut jdx = idx.clone();
                jdx[ax] = lam;
                ginv.at(&[idx[ax], lam]).mul_add_into(tt.at(&jdx), &mut acc);
            }
            out.set(&idx, acc);
        }
        out
    }

    /// Divergence on the LAST slot group: contracts the final covariant slot
    /// of `∇T` with `g`: `div(T)_{…} = g^{νκ} ∇_κ T_{…ν}` for the last index ν.
    pub fn divergence(&self, t: &JetTensor) -> Result<JetTensor> {
        let n = t.rank();
        let grad = self.nabla(t)?;
        Ok(self.trace_g(&grad, n - 1, n))
    }

    /// Laplacian `ΔT = g^{κτ} ∇_κ ∇_τ T` (trace over the two derivative slots).
    pub fn laplacian(&self, t: &JetTensor) -> Result<JetTensor> {
        let n = t.rank();
        let grad2 = self.nabla(&self.nabla(t)?)?;
        Ok(self.trace_g(&grad2, n, n + 1))
    }

    /// Gradient vector `(∇f)^μ = g^{μν} ∂_ν f` of a scalar.
    pub fn grad_vec(&self, f: &JetTensor) -> Result<JetTensor> {
        let df = self.nabla(f)?;
        Ok(self.raise(&df, 0))
    }

    /// Pointwise orthonormal frame from the symmetric eigendecomposition of
    /// the metric value; eigenvalues sorted descending, rows sign-fixed.
    pub fn frame(&self) -> Frame {
        Frame::from_metric_value(&self.g.values())
    }

    /// Max-abs residuals of the two Bianchi identities at this point.
    /// Needs order ≥ 3 for the differential identity.
    pub fn bianchi_residuals(&self) -> Result<(f64, f64)> {
        let m = self.dim;
        let riem = self.riemann()?;
        let rv = riem.values();
        let mut first = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for t in 0..m {
                        let r = rv.at(&[i, j, k, t]) + rv.at(&[i, k, t, j]) + rv.at(&[i, t, j, k]);
                        first = first.max(r.abs());
                    }
                }
            }
        }
        let dr = self.nabla(riem)?.values();
        let mut second = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for t in 0..m {
                        for l in 0..m {
                            let r = dr.at(&[i, j, k, t, l])
                                + dr.at(&[i, j, t, l, k])
                                + dr.at(&[i, j, l, k, t]);
                            second = second.max(r.abs());
                        }
                    }
                }
            }
        }
        Ok((first, second))
    }

    /// Max-abs of `∇g` (metric compatibility check).
    pub fn nabla_g_residual(&self) -> Result<f64> {
        Ok(self.nabla(&self.g)?.values().max_abs())
    }

    /// Pointwise observables of a scalar field through this geometry.
    pub fn scalar_obs(&self, field: &ScalarField) -> Result<ScalarObs> {
        let sp = space(self.dim, self.order);
        let f = JetTensor::scalar(field.eval_jet(&self.point, sp)?);
        let df = self.nabla(&f)?;
        let grad = self.raise(&df, 0);
        let hess = self.nabla(&df)?;
        let lap = self.trace_g(&hess, 0, 1);
        let mut grad_sq = Jet::constant(0.0, grad.space());
        let dft = df.truncated(grad.order());
        for mu in 0..self.dim {
            grad.at(&[mu]).mul_add_into(dft.at(&[mu]), &mut grad_sq);
        }
        Ok(ScalarObs {
            f,
            df,
            grad,
            hess,
            lap,
            grad_sq: JetTensor::scalar(grad_sq),
        })
    }
}

/// Jets of a scalar field and its first/second derivative objects at a point.
pub struct ScalarObs {
    /// The field value (rank 0), order K.
    pub f: JetTensor,
    /// `∂_μ f`, order K−1.
    pub df: JetTensor,
    /// `(∇f)^μ`, order K−1.
    pub grad: JetTensor,
    /// `Hess(f)_{μν}`, order K−2.
    pub hess: JetTensor,
    /// `Δf` (rank 0), order K−2.
    pub lap: JetTensor,
    /// `|∇f|²` (rank 0), order K−1.
    pub grad_sq: JetTensor,
}

/// Plain contraction of a contravariant slot against a covariant slot.
pub fn trace_pair(t: &JetTensor, ax1: usize, ax2: usize) -> JetTensor {
    assert!(ax1 != ax2);
    let (ax1, ax2) = (ax1.min(ax2), ax1.max(ax2));
    let m = t.dims()[ax1];
    let sp = t.space();
    let mut slots = Vec::new();
    for (i, s) in t.slots().iter().enumerate() {
        if i != ax1 && i != ax2 {
            slots.push(*s);
        }
    }
    let mut out = JetTensor::zeros(&slots, m.max(1), map_dim_of(t), sp);
    let out_dims: Vec<usize> = t
        .dims()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ax1 && *i != ax2)
        .map(|(_, &d)| d)
        .collect();
    for idx in IndexIter::new(out_dims) {
        let mut acc = Jet::constant(0.0, sp);
        for mu in 0..m {
            let mut full = Vec::with_capacity(t.rank());
            let mut it = idx.iter();
            for i in 0..t.rank() {
                if i == ax1 || i == ax2 {
                    full.push(mu);
                } else {
                    full.push(*it.next().unwrap());
                }
            }
            acc.add_assign(t.at(&full));
        }
        out.set(&idx, acc);
    }
    out
}

fn map_dim_of(t: &JetTensor) -> usize {
    t.slots()
        .iter()
        .zip(t.dims())
        .find(|(s, _)| **s == Slot::Map)
        .map(|(_, &d)| d)
        .unwrap_or(0)
}

/// Contract slots `ax1`, `ax2` (both covariant) of `t` with an inverse-metric
/// tensor.
pub fn trace_with_inverse(t: &JetTensor, ax1: usize, ax2: usize, ginv: &JetTensor) -> JetTensor {
    assert!(ax1 != ax2);
    let (ax1, ax2) = (ax1.min(ax2), ax1.max(ax2));
    let m = ginv.dims()[0];
    let ord = t.order().min(ginv.order());
    let sp = space(t.space().vars, ord);
    let tt = t.truncated(ord);
    let gi = ginv.truncated(ord);
    let mut slots = Vec::new();
    for (i, s) in t.slots().iter().enumerate() {
        if i != ax1 && i != ax2 {
            slots.push(*s);
        }
    }
    let mut out = JetTensor::zeros(&slots, m.max(1), map_dim_of(t), sp);
    let out_dims: Vec<usize> = t
        .dims()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ax1 && *i != ax2)
        .map(|(_, &d)| d)
        .collect();
    for idx in IndexIter::new(out_dims) {
        let mut acc = Jet::constant(0.0, sp);
        for mu in 0..m {
            for nu in 0..m {
                let mut full = Vec::with_capacity(t.rank());
                let mut it = idx.iter();
                for i in 0..t.rank() {
                    if i == ax1 {
                        full.push(mu);
                    } else if i == ax2 {
                        full.push(nu);
                    } else {
                        full.push(*it.next().unwrap());
                    }
                }
                gi.at(&[mu, nu]).mul_add_into(tt.at(&full), &mut acc);
            }
        }
        out.set(&idx, acc);
    }
    out
}

/// Pointwise orthonormal frame: rows `e_i` with `g(e_i, e_j) = η_{ij}`,
/// positive-η vectors first, deterministic given the metric value.
#[derive(Clone, Debug)]
pub struct Frame {
    pub dim: usize,
    /// Frame vectors as rows: `e[i][μ]`.
    pub e: Vec<Vec<f64>>,
    /// Dual coframe rows: `theta[i][μ]` with `θ^i(e_j) = δ^i_j`.
    pub theta: Vec<Vec<f64>>,
    /// Diagonal of the frame metric (+1/−1 entries).
    pub eta: Vec<f64>,
}

impl Frame {
    pub fn from_metric_value(g: &Tensor) -> Frame {
        let m = g.dims[0];
        let gm = DMatrix::from_fn(m, m, |i, j| g.at(&[i, j]));
        let eig = gm.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut e = Vec::with_capacity(m);
        let mut eta = Vec::with_capacity(m);
        for &k in &order {
            let lam: f64 = eig.eigenvalues[k];
            let col = eig.eigenvectors.column(k);
            // Fix the sign by making the largest-magnitude entry positive.
            let mut max_i = 0;
            for i in 0..m {
                if col[i].abs() > col[max_i].abs() + 1e-14 {
                    max_i = i;
                }
            }
            let sign = if col[max_i] < 0.0 { -1.0 } else { 1.0 };
            let scale = sign / lam.abs().sqrt();
            e.push((0..m).map(|i| col[i] * scale).collect::<Vec<f64>>());
            eta.push(if lam >= 0.0 { 1.0 } else { -1.0 });
        }
        // θ = (Eᵀ)^{-1} row-wise: Θ Eᵀ = I.
        let emat = DMatrix::from_fn(m, m, |i, j| e[i][j]);
        let theta_m = emat
            .transpose()
            .try_inverse()
            .expect("frame matrix invertible");
        let theta = (0..m)
            .map(|i| (0..m).map(|j| theta_m[(i, j)]).collect())
            .collect();
        Frame {
            dim: m,
            e,
            theta,
            eta,
        }
    }

    /// Project a coordinate value tensor onto frame components: covariant
    /// slots contract with the frame vectors, contravariant with the coframe,
    /// target-valued slots pass through.
    pub fn components(&self, t: &Tensor) -> Tensor {
        let mut cur = t.clone();
        for ax in 0..t.slots.len() {
            match t.slots[ax] {
                Slot::Cov => cur = self.contract_axis(&cur, ax, &self.e),
                Slot::Con => cur = self.contract_axis(&cur, ax, &self.theta),
                Slot::Map => {}
            }
        }
        cur
    }

    fn contract_axis(&self, t: &Tensor, ax: usize, rows: &[Vec<f64>]) -> Tensor {
        let m = self.dim;
        let mut out = t.clone();
        for idx in t.index_iter() {
            if idx[ax] != 0 {
                continue;
            }
            for i in 0..m {
                let mut acc = 0.0;
                for mu in 0..m {
                    let mut jdx = idx.clone();
                    jdx[ax] = mu;
                    acc += rows[i][mu] * t.at(&jdx);
                }
                let mut odx = idx.clone();
                odx[ax] = i;
                out.set(&odx, acc);
            }
        }
        out
    }

    /// `g(e_i, e_j) − η_{ij}` max-abs, a consistency diagnostic.
    pub fn orthonormality_residual(&self, g: &Tensor) -> f64 {
        let m = self.dim;
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for mu in 0..m {
                    for nu in 0..m {
                        acc += self.e[i][mu] * self.e[j][nu] * g.at(&[mu, nu]);
                    }
                }
                let expect = if i == j { self.eta[i] } else { 0.0 };
                worst = worst.max((acc - expect).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat_torus(dim: usize) -> MetricField {
        MetricField::flat(Chart::torus(dim))
    }

    #[test]
    fn flat_metric_at() {
        let g = flat_torus(2);
        let geo = GeomAt::new(&g, &[0.1, 0.2], 2).unwrap();
        assert_abs_diff_eq!(geo.g.at(&[0, 0]).value(), 1.0);
        assert_abs_diff_eq!(geo.g_inv.at(&[0, 1]).value(), 0.0);
        assert_abs_diff_eq!(geo.sqrt_det.value(), 1.0);
        assert_abs_diff_eq!(geo.gamma().unwrap().max_abs_value(), 0.0);
        assert_abs_diff_eq!(geo.riemann().unwrap().max_abs_value(), 0.0);
    }

    #[test]
    fn minkowski_metric_at() {
        let chart = Chart::boxed(4, 1.0).with_signature(3, 1);
        let g = MetricField::flat_signature(chart);
        let geo = GeomAt::new(&g, &[0.0; 4], 2).unwrap();
        assert_abs_diff_eq!(geo.sqrt_det.value(), 1.0);
        assert_abs_diff_eq!(geo.det.value(), -1.0);
        let f = geo.frame();
        assert_eq!(f.eta, vec![1.0, 1.0, 1.0, -1.0]);
        assert_abs_diff_eq!(geo.riemann().unwrap().max_abs_value(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn conformally_flat_inverse() {
        // g = e^{2 sin x1} δ on T²: inverse is e^{-2 sin x1} δ
        let g = MetricField::from_exprs(
            Chart::torus(2),
            SymExprMatrix::parse(&[vec!["exp(2*sin(x1))", "0"], vec!["0", "exp(2*sin(x1))"]])
                .unwrap(),
        )
        .unwrap();
        let geo = GeomAt::new(&g, &[0.3, 0.1], 3).unwrap();
        let expect = (-2.0 * 0.3f64.sin()).exp();
        assert_abs_diff_eq!(geo.g_inv.at(&[0, 0]).value(), expect, epsilon = 1e-13);
        assert_abs_diff_eq!(geo.g_inv.at(&[1, 1]).value(), expect, epsilon = 1e-13);
    }

    #[test]
    fn polar_christoffels() {
        // g = diag(1, x1²) on x1 > 0: Γ^1_{22} = −x1, Γ^2_{12} = 1/x1
        let chart = Chart {
            dim: 2,
            intervals: vec![(0.5, 3.0), (0.0, std::f64::consts::TAU)],
            periodic: vec![false, true],
            signature: (2, 0),
        };
        let g = MetricField::from_exprs(
            chart,
            SymExprMatrix::parse(&[vec!["1", "0"], vec!["0", "x1^2"]]).unwrap(),
        )
        .unwrap();
        let geo = GeomAt::new(&g, &[1.7, 0.4], 2).unwrap();
        let gamma = geo.gamma().unwrap();
        assert_abs_diff_eq!(gamma.at(&[0, 1, 1]).value(), -1.7, epsilon = 1e-13);
        assert_abs_diff_eq!(gamma.at(&[1, 0, 1]).value(), 1.0 / 1.7, epsilon = 1e-13);
        assert_abs_diff_eq!(gamma.at(&[1, 1, 0]).value(), 1.0 / 1.7, epsilon = 1e-13);
        // flat in disguise
        assert_abs_diff_eq!(geo.riemann().unwrap().max_abs_value(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn conformally_flat_christoffel_closed_form() {
        // g = e^{2ω}δ: Γ^κ_{μν} = δ^κ_μ ω_ν + δ^κ_ν ω_μ − δ_{μν} ω^κ
        let g = MetricField::from_exprs(
            Chart::torus(3),
            SymExprMatrix::parse(&[
                vec!["exp(2*(sin(x1) + 0.3*cos(x2)))", "0", "0"],
                vec!["0", "exp(2*(sin(x1) + 0.3*cos(x2)))", "0"],
                vec!["0", "0", "exp(2*(sin(x1) + 0.3*cos(x2)))"],
            ])
            .unwrap(),
        )
        .unwrap();
        let p = [0.7, 1.1, 2.0];
        let geo = GeomAt::new(&g, &p, 2).unwrap();
        let w = ScalarField::parse("sin(x1) + 0.3*cos(x2)", 3).unwrap();
        let wj = w.eval_jet(&p, space(3, 1)).unwrap();
        let dw = [
            wj.derivative(0).value(),
            wj.derivative(1).value(),
            wj.derivative(2).value(),
        ];
        let gamma = geo.gamma().unwrap();
        for k in 0..3 {
            for mu in 0..3 {
                for nu in 0..3 {
                    let mut expect = 0.0;
                    if k == mu {
                        expect += dw[nu];
                    }
                    if k == nu {
                        expect += dw[mu];
                    }
                    if mu == nu {
                        expect -= dw[k];
                    }
                    assert_abs_diff_eq!(gamma.at(&[k, mu, nu]).value(), expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn round_sphere_curvature() {
        // stereographic S²: R_{1212} = g11 g22 − g12², S = 2
        let g = MetricField::sphere(2, 1.0, 0.9);
        let geo = GeomAt::new(&g, &[0.3, -0.2], 2).unwrap();
        let riem = geo.riemann().unwrap().values();
        let gv = geo.g.values();
        let expect = gv.at(&[0, 0]) * gv.at(&[1, 1]) - gv.at(&[0, 1]).powi(2);
        assert_abs_diff_eq!(riem.at(&[0, 1, 0, 1]), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(geo.scalar().unwrap().at(&[]).value(), 2.0, epsilon = 1e-11);
    }

    #[test]
    fn unit_s3_scalar_curvature() {
        let g = MetricField::sphere(3, 1.0, 0.8);
        let geo = GeomAt::new(&g, &[0.2, 0.4, -0.1], 2).unwrap();
        assert_abs_diff_eq!(geo.scalar().unwrap().at(&[]).value(), 6.0, epsilon = 1e-11);
    }

    #[test]
    fn metric_compatibility_and_torsion() {
        let g = MetricField::from_exprs(
            Chart::torus(3),
            SymExprMatrix::parse(&[
                vec!["1 + 0.2*sin(x1 + x2)", "0.1*cos(x3)", "0"],
                vec!["0.1*cos(x3)", "1 + 0.1*cos(x2)", "0.05*sin(x1)"],
                vec!["0", "0.05*sin(x1)", "1 + 0.15*sin(x3 + x1)"],
            ])
            .unwrap(),
        )
        .unwrap();
        let geo = GeomAt::new(&g, &[0.9, 1.7, 0.3], 3).unwrap();
        assert!(geo.nabla_g_residual().unwrap() < 1e-12);
        let gamma = geo.gamma().unwrap();
        for k in 0..3 {
            for mu in 0..3 {
                for nu in 0..3 {
                    let d = gamma.at(&[k, mu, nu]).value() - gamma.at(&[k, nu, mu]).value();
                    assert!(d.abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn bianchi_identities_on_perturbed_torus() {
        let g = MetricField::from_exprs(
            Chart::torus(3),
            SymExprMatrix::parse(&[
                vec!["1 + 0.2*sin(x1 + x2)", "0.1*cos(x3)", "0"],
                vec!["0.1*cos(x3)", "1 + 0.1*cos(x2)", "0.05*sin(x1)"],
                vec!["0", "0.05*sin(x1)", "1 + 0.15*sin(x3 + x1)"],
            ])
            .unwrap(),
        )
        .unwrap();
        let geo = GeomAt::new(&g, &[2.2, 0.5, 4.0], 3).unwrap();
        let (b1, b2) = geo.bianchi_residuals().unwrap();
        assert!(b1 < 1e-12, "first Bianchi {b1}");
        assert!(b2 < 1e-11, "second Bianchi {b2}");
    }

    #[test]
    fn frame_of_diagonal_metric() {
        let g = MetricField::from_exprs(
            Chart::boxed(2, 1.0),
            SymExprMatrix::parse(&[vec!["4", "0"], vec!["0", "9"]]).unwrap(),
        )
        .unwrap();
        let geo = GeomAt::new(&g, &[0.0, 0.0], 0).unwrap();
        let f = geo.frame();
        // eigenvalues sorted descending: 9 then 4
        assert_abs_diff_eq!(f.e[0][1], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.e[1][0], 0.5, epsilon = 1e-14);
        assert!(f.orthonormality_residual(&geo.g.values()) < 1e-13);
    }

    #[test]
    fn frame_components_of_metric_are_eta() {
        let chart = Chart::boxed(3, 1.0).with_signature(2, 1);
        let g = MetricField::from_exprs(
            chart,
            SymExprMatrix::parse(&[
                vec!["2", "0.3", "0"],
                vec!["0.3", "1.5", "0.1"],
                vec!["0", "0.1", "-1"],
            ])
            .unwrap(),
        )
        .unwrap();
        let geo = GeomAt::new(&g, &[0.0; 3], 0).unwrap();
        let f = geo.frame();
        let comp = f.components(&geo.g.values());
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { f.eta[i] } else { 0.0 };
                assert_abs_diff_eq!(comp.at(&[i, j]), expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn identity_frame_for_flat_metric() {
        let g = flat_torus(3);
        let geo = GeomAt::new(&g, &[0.0; 3], 0).unwrap();
        let f = geo.frame();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(f.e[i][j], expect, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn sphere_ricci_in_frame_is_diagonal() {
        let g = MetricField::sphere(2, 1.0, 0.9);
        let geo = GeomAt::new(&g, &[0.25, 0.4], 2).unwrap();
        let f = geo.frame();
        let ric = f.components(&geo.ricci().unwrap().values());
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(ric.at(&[i, j]), expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_metric_rejected() {
        let g = MetricField::from_exprs(
            Chart::boxed(2, 1.0),
            SymExprMatrix::parse(&[vec!["x1", "0"], vec!["0", "1"]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            GeomAt::new(&g, &[0.0, 0.0], 1),
            Err(Error::DegenerateMetric { .. })
        ));
    }

    #[test]
    fn point_outside_domain_rejected() {
        let g = MetricField::sphere(2, 1.0, 0.5);
        assert!(matches!(
            GeomAt::new(&g, &[2.0, 0.0], 1),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn riemann_symmetries_hold() {
        let g = MetricField::from_exprs(
            Chart::torus(3),
            SymExprMatrix::parse(&[
                vec!["1 + 0.3*sin(x2)", "0.1*sin(x1)*cos(x3)", "0"],
                vec!["0.1*sin(x1)*cos(x3)", "1 + 0.2*cos(x1 + x3)", "0"],
                vec!["0", "0", "1 + 0.25*sin(x2 + x3)"],
            ])
            .unwrap(),
        )
        .unwrap();
        let geo = GeomAt::new(&g, &[1.0, 2.0, 3.0], 2).unwrap();
        let r = geo.riemann().unwrap().values();
        let m = 3;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for t in 0..m {
                        let v = r.at(&[i, j, k, t]);
                        assert_abs_diff_eq!(v, -r.at(&[i, j, t, k]), epsilon = 1e-12);
                        assert_abs_diff_eq!(v, -r.at(&[j, i, k, t]), epsilon = 1e-12);
                        assert_abs_diff_eq!(v, r.at(&[k, t, i, j]), epsilon = 1e-12);
                    }
                }
            }
        }
    }
}
