//! Calculus of a smooth map into a Riemannian target: pullback metric,
//! energy density, generalized second fundamental form, tension and
//! bi-tension fields, stress-energy tensors and their conservation
//! identities.
//!
//! Target Christoffels and curvature are evaluated on the target chart with
//! the same jet engine and composed through the map, which realizes the
//! pullback-bundle covariant derivative `∇_μ s^a = ∂_μ s^a +
//! Γ_N^a_{bc}(φ(x)) ∂_μφ^b s^c` explicitly.

use std::sync::Arc;

use crate::expr::Expr;
use crate::geometry::{
    covariant_derivative, Chart, GeomAt, JetTensor, MetricField, PullbackConnection, Slot,
};
use crate::jets::{space, Jet};
use crate::{Error, Result};

/// Riemannian target manifold: a chart and a positive-definite metric field.
#[derive(Clone, Debug)]
pub struct TargetGeometry {
    pub chart: Chart,
    pub metric: MetricField,
}

impl TargetGeometry {
    pub fn new(metric: MetricField) -> Arc<TargetGeometry> {
        assert!(metric.chart.is_riemannian(), "target must be Riemannian");
        Arc::new(TargetGeometry {
            chart: metric.chart.clone(),
            metric,
        })
    }

    /// Flat torus target (identity metric, periodic chart).
    pub fn flat_torus(dim: usize) -> Arc<TargetGeometry> {
        Self::new(MetricField::flat(Chart::torus(dim)))
    }

    /// Flat Euclidean box target.
    pub fn euclidean(dim: usize, half_width: f64) -> Arc<TargetGeometry> {
        Self::new(MetricField::flat(Chart::boxed(dim, half_width)))
    }

    /// Round sphere of sectional curvature `k` in the rational chart.
    pub fn sphere(dim: usize, k: f64, half_width: f64) -> Arc<TargetGeometry> {
        Self::new(MetricField::sphere(dim, k, half_width))
    }

    pub fn dim(&self) -> usize {
        self.chart.dim
    }
}

/// Closed-form map field `φ: M → N` given by target-coordinate expressions.
#[derive(Clone, Debug)]
pub struct MapField {
    pub source_dim: usize,
    pub target: Arc<TargetGeometry>,
    pub components: Vec<Expr>,
    /// Straight-line variation `φ + t·v`; only valid on flat targets.
    pub variation: Option<(Vec<Expr>, f64)>,
}

impl MapField {
    pub fn new(
        source_dim: usize,
        target: Arc<TargetGeometry>,
        components: Vec<Expr>,
    ) -> Result<MapField> {
        if components.len() != target.dim() {
            return Err(Error::Scenario(format!(
                "map has {} components but target dimension is {}",
                components.len(),
                target.dim()
            )));
        }
        for c in &components {
            if let Some(v) = c.max_var() {
                if v >= source_dim {
                    return Err(Error::VarIndex(v, source_dim));
                }
            }
        }
        Ok(MapField {
            source_dim,
            target,
            components,
            variation: None,
        })
    }

    pub fn parse(source_dim: usize, target: Arc<TargetGeometry>, exprs: &[&str]) -> Result<MapField> {
        let components = exprs.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        MapField::new(source_dim, target, components)
    }

    pub fn constant(source_dim: usize, target: Arc<TargetGeometry>, values: &[f64]) -> MapField {
        let components = values.iter().map(|&v| Expr::Const(v)).collect();
        MapField {
            source_dim,
            target,
            components,
            variation: None,
        }
    }

    /// `φ + t·v` along a direction field `v` (flat targets: the straight line
    /// is the geodesic exponential).
    pub fn perturbed(&self, dir: Vec<Expr>, t: f64) -> MapField {
        assert_eq!(dir.len(), self.target.dim());
        let mut out = self.clone();
        out.variation = Some((dir, t));
        out
    }

    pub fn eval_jet(&self, p: &[f64], sp: &'static crate::jets::JetSpace) -> Result<Vec<Jet>> {
        let mut out = Vec::with_capacity(self.components.len());
        for (a, c) in self.components.iter().enumerate() {
            let mut j = c.eval_jet(p, sp)?;
            if let Some((dir, t)) = &self.variation {
                j = j.add(&dir[a].eval_jet(p, sp)?.scale(*t));
            }
            out.push(j);
        }
        Ok(out)
    }
}

/// Everything about the map at one point, to the order the jet budget of the
/// underlying geometry allows. Derivative depth per object: `dφ` 1, `∇dφ`
/// and `τ` 2, `∇τ` and `T₂` 3, `τ₂` 4.
pub struct MapAt {
    pub m: usize,
    pub n: usize,
    pub order: usize,
    /// φ^a as jets, order K.
    pub phi: Vec<Jet>,
    /// `φ^a_μ`, slots [Map, Cov], order K−1.
    pub dphi: JetTensor,
    /// Target metric at the image point, composed through φ: `η_{ab}(φ(x))`.
    pub eta_phi: Vec<Vec<Jet>>,
    /// Inverse target metric composed through φ.
    pub eta_inv_phi: Vec<Vec<Jet>>,
    /// Pullback connection `Γ_N^a_{bc}(φ) φ^b_ν`, slots [Map, Map, Cov].
    pub pull_conn: JetTensor,
    /// Target curvature `R_N^a_{bcd}` composed through φ, slots [Map; 4].
    pub nriem_phi: JetTensor,
    /// `(φ*η)_{μν}`, order K−1.
    pub pullback: JetTensor,
    /// Energy density `e(φ) = ½|dφ|²` as a rank-0 tensor.
    pub energy: JetTensor,
    /// Stress-energy `T = φ*η − ½|dφ|² g`.
    pub stress: JetTensor,
    hess: Option<JetTensor>,
    tau: Option<JetTensor>,
    nabla_tau: Option<JetTensor>,
    tau2: Option<JetTensor>,
    stress2: Option<JetTensor>,
}

impl MapAt {
    pub fn new(geo: &GeomAt, field: &MapField) -> Result<MapAt> {
        let m = geo.dim;
        let n = field.target.dim();
        let order = geo.order;
        let sp = space(m, order);
        let phi = field.eval_jet(&geo.point, sp)?;
        let y0: Vec<f64> = phi.iter().map(|j| j.value()).collect();
        if !field.target.chart.contains(&y0) {
            return Err(Error::OutsideDomain { point: y0 });
        }

        // Target geometry at the image point, composed through the map.
        let tgeo = GeomAt::new(&field.target.metric, &y0, order)?;
        let mut eta_phi = vec![vec![Jet::constant(0.0, sp); n]; n];
        let mut eta_inv_phi = vec![vec![Jet::constant(0.0, sp); n]; n];
        for a in 0..n {
            for b in 0..n {
                eta_phi[a][b] = Jet::compose(tgeo.g.at(&[a, b]), &phi);
                eta_inv_phi[a][b] = Jet::compose(tgeo.g_inv.at(&[a, b]), &phi);
            }
        }

        let d_order = order.saturating_sub(1);
        let dsp = space(m, d_order);
        let mut dphi = JetTensor::zeros(&[Slot::Map, Slot::Cov], m, n, dsp);
        for a in 0..n {
            for mu in 0..m {
                dphi.set(&[a, mu], phi[a].derivative(mu));
            }
        }

        // Γ_N^a_{bc}(φ) φ^b_ν at order K−1.
        let mut pull_conn = JetTensor::zeros(&[Slot::Map, Slot::Map, Slot::Cov], m, n, dsp);
        if order >= 1 {
            let tgamma = tgeo.gamma()?;
            for a in 0..n {
                for c in 0..n {
                    for nu in 0..m {
                        let mut acc = Jet::constant(0.0, dsp);
                        for b in 0..n {
                            let composed = Jet::compose(tgamma.at(&[a, b, c]), &phi).truncated(d_order);
                            composed.mul_add_into(dphi.at(&[b, nu]), &mut acc);
                        }
                        pull_conn.set(&[a, c, nu], acc);
                    }
                }
            }
        }

        // R_N^a_{bcd}(φ) at order K−2 (identically zero when order < 2).
        let r_order = order.saturating_sub(2);
        let rsp = space(m, r_order);
        let mut nriem_phi = JetTensor::zeros(&[Slot::Map; 4], m, n, rsp);
        if order >= 2 {
            let triem = tgeo.raise(tgeo.riemann()?, 0);
            for idx in nriem_phi.index_iter() {
                nriem_phi.set(&idx, Jet::compose(triem.at(&idx), &phi).truncated(r_order));
            }
        }

        // (φ*η)_{μν} = η_{ab}(φ) φ^a_μ φ^b_ν
        let mut pullback = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, dsp);
        for mu in 0..m {
            for nu in 0..m {
                let mut acc = Jet::constant(0.0, dsp);
                for a in 0..n {
                    for b in 0..n {
                        let t = eta_phi[a][b].truncated(d_order).mul(dphi.at(&[a, mu]));
                        t.mul_add_into(dphi.at(&[b, nu]), &mut acc);
                    }
                }
                pullback.set(&[mu, nu], acc);
            }
        }
        let tr = geo.trace_g(&pullback, 0, 1);
        let energy = JetTensor::scalar(tr.at(&[]).scale(0.5));
        let stress = pullback.sub(&geo.g.truncated(d_order).scale_jet(energy.at(&[])));

        let mut map_at = MapAt {
            m,
            n,
            order,
            phi,
            dphi,
            eta_phi,
            eta_inv_phi,
            pull_conn,
            nriem_phi,
            pullback,
            energy,
            stress,
            hess: None,
            tau: None,
            nabla_tau: None,
            tau2: None,
            stress2: None,
        };

        if order >= 2 {
            let hess = map_at.nabla(geo, &map_at.dphi)?;
            let tau = geo.trace_g(&hess, 1, 2);
            map_at.hess = Some(hess);
            map_at.tau = Some(tau);
        }
        if order >= 3 {
            let nabla_tau = map_at.nabla(geo, map_at.tau.as_ref().unwrap())?;
            map_at.stress2 = Some(map_at.compute_stress2(geo, &nabla_tau));
            map_at.nabla_tau = Some(nabla_tau);
        }
        if order >= 4 {
            map_at.tau2 = Some(map_at.compute_tau2(geo)?);
        }
        Ok(map_at)
    }

    /// Covariant derivative with the Levi-Civita + pullback connection.
    pub fn nabla(&self, geo: &GeomAt, t: &JetTensor) -> Result<JetTensor> {
        covariant_derivative(
            t,
            geo.gamma()?,
            Some(&PullbackConnection {
                gamma_pull: &self.pull_conn,
            }),
        )
    }

    /// Contract the Map slot at `map_ax` (same position in both tensors)
    /// with `η_{ab}(φ)`; remaining slots of `s` then of `w` concatenate.
    pub fn contract_map(&self, s: &JetTensor, w: &JetTensor, map_ax: usize) -> JetTensor {
        let ord = s.order().min(w.order());
        let sp = space(s.space().vars, ord);
        let mut slots = Vec::new();
        let mut dims = Vec::new();
        for (i, sl) in s.slots().iter().enumerate() {
            if i != map_ax {
                slots.push(*sl);
                dims.push(s.dims()[i]);
            }
        }
        for (i, sl) in w.slots().iter().enumerate() {
            if i != map_ax {
                slots.push(*sl);
                dims.push(w.dims()[i]);
            }
        }
        let mut out = JetTensor::zeros(&slots, self.m, self.n, sp);
        let s_t = s.truncated(ord);
        let w_t = w.truncated(ord);
        let s_rank = s.rank();
        for idx in crate::geometry::IndexIter::new(dims.clone()) {
            let mut acc = Jet::constant(0.0, sp);
            for a in 0..self.n {
                for b in 0..self.n {
                    let mut sidx = Vec::with_capacity(s_rank);
                    let mut it = idx.iter();
                    for i in 0..s_rank {
                        if i == map_ax {
                            sidx.push(a);
                        } else {
                            sidx.push(*it.next().unwrap());
                        }
                    }
                    let mut widx = Vec::with_capacity(w_t.rank());
                    for i in 0..w_t.rank() {
                        if i == map_ax {
                            widx.push(b);
                        } else {
                            widx.push(*it.next().unwrap());
                        }
                    }
                    let t = self.eta_phi[a][b].truncated(ord).mul(s_t.at(&sidx));
                    t.mul_add_into(w_t.at(&widx), &mut acc);
                }
            }
            out.set(&idx, acc);
        }
        out
    }

    /// Generalized second fundamental form `φ^a_{μν}`, slots [Map, Cov, Cov].
    pub fn hess(&self) -> Result<&JetTensor> {
        self.hess.as_ref().ok_or(Error::JetBudget {
            needed: 2,
            available: self.order,
        })
    }

    /// Tension field `τ(φ)^a = g^{μν} φ^a_{μν}`.
    pub fn tau(&self) -> Result<&JetTensor> {
        self.tau.as_ref().ok_or(Error::JetBudget {
            needed: 2,
            available: self.order,
        })
    }

    /// `∇τ`, slots [Map, Cov] (derivative index last).
    pub fn nabla_tau(&self) -> Result<&JetTensor> {
        self.nabla_tau.as_ref().ok_or(Error::JetBudget {
            needed: 3,
            available: self.order,
        })
    }

    /// Bi-tension `τ₂^a = Δ^{pull} τ^a − R_N^a_{bcd} (dφ·dφ)^{bc} τ^d`.
    pub fn tau2(&self) -> Result<&JetTensor> {
        self.tau2.as_ref().ok_or(Error::JetBudget {
            needed: 4,
            available: self.order,
        })
    }

    /// Bi-energy stress tensor `T₂`.
    pub fn stress2(&self) -> Result<&JetTensor> {
        self.stress2.as_ref().ok_or(Error::JetBudget {
            needed: 3,
            available: self.order,
        })
    }

    /// `|τ|²_η` as a rank-0 tensor.
    pub fn tau_norm_sq(&self) -> Result<JetTensor> {
        let tau = self.tau()?;
        Ok(self.contract_map(tau, tau, 0))
    }

    fn compute_stress2(&self, geo: &GeomAt, nabla_tau: &JetTensor) -> JetTensor {
        let tau = self.tau.as_ref().unwrap();
        let ord = nabla_tau.order();
        let sp = space(nabla_tau.space().vars, ord);
        let m = self.m;
        // η_{ab} τ^a_μ φ^b_ν
        let tp = self.contract_map(nabla_tau, &self.dphi, 0);
        // e₂ = ½ |τ|²
        let tau_sq = self.contract_map(tau, tau, 0);
        let e2 = tau_sq.at(&[]).scale(0.5);
        // ⟨∇τ, dφ⟩ = g^{μν} η_{ab} τ^a_μ φ^b_ν
        let cross = geo.trace_g(&tp, 0, 1);
        let coeff = e2.truncated(cross.order()).add(cross.at(&[]));
        let g_t = geo.g.truncated(ord.min(coeff.order()));
        let mut out = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, sp);
        for mu in 0..m {
            for nu in 0..m {
                let sym = tp.at(&[mu, nu]).add(tp.at(&[nu, mu]));
                let v = sym
                    .truncated(coeff.order())
                    .sub(&g_t.at(&[mu, nu]).mul(&coeff));
                out.set(&[mu, nu], v);
            }
        }
        out
    }

    fn compute_tau2(&self, geo: &GeomAt) -> Result<JetTensor> {
        let nabla_tau = self.nabla_tau.as_ref().unwrap();
        let grad2 = self.nabla(geo, nabla_tau)?;
        let rough = geo.trace_g(&grad2, 1, 2);
        let ord = rough.order();
        let sp = space(rough.space().vars, ord);
        // (dφ·dφ)^{bc} = g^{μν} φ^b_μ φ^c_ν (target indices already up)
        let m = self.m;
        let n = self.n;
        let ginv = geo.g_inv.truncated(ord);
        let dphi = self.dphi.truncated(ord);
        let mut pbc = vec![vec![Jet::constant(0.0, sp); n]; n];
        for b in 0..n {
            for c in 0..n {
                let mut acc = Jet::constant(0.0, sp);
                for mu in 0..m {
                    for nu in 0..m {
                        let t = ginv.at(&[mu, nu]).mul(dphi.at(&[b, mu]));
                        t.mul_add_into(dphi.at(&[c, nu]), &mut acc);
                    }
                }
                pbc[b][c] = acc;
            }
        }
        let tau = self.tau.as_ref().unwrap().truncated(ord);
        let nriem = self.nriem_phi.truncated(ord);
        let mut out = JetTensor::zeros(&[Slot::Map], m, n, sp);
        for a in 0..n {
            let mut acc = rough.at(&[a]).clone();
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let t = nriem.at(&[a, b, c, d]).mul(&pbc[b][c]).mul(tau.at(&[d]));
                        acc.sub_assign(&t);
                    }
                }
            }
            out.set(&[a], acc);
        }
        Ok(out)
    }

    /// Residuals of the conservation identities
    /// `div(T)_μ = η_{ab} τ^a φ^b_μ` and `div(T₂)_μ = η_{ab} τ₂^a φ^b_μ`.
    pub fn conservation_residuals(&self, geo: &GeomAt) -> Result<(f64, f64)> {
        let div_t = geo.divergence(&self.stress)?;
        let rhs = self.contract_map(self.tau()?, &self.dphi, 0);
        let r1 = div_t.sub(&rhs).max_abs_value();

        let div_t2 = geo.divergence(self.stress2()?)?;
        let rhs2 = self.contract_map(self.tau2()?, &self.dphi, 0);
        let r2 = div_t2.sub(&rhs2).max_abs_value();
        Ok((r1, r2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SymExprMatrix;
    use approx::assert_abs_diff_eq;

    fn flat_geo(dim: usize, p: &[f64], order: usize) -> GeomAt {
        GeomAt::new(&MetricField::flat(Chart::torus(dim)), p, order).unwrap()
    }

    #[test]
    fn constant_map_is_inert() {
        let geo = flat_geo(2, &[0.3, 0.6], 4);
        let target = TargetGeometry::flat_torus(2);
        let phi = MapField::constant(2, target, &[0.5, 1.0]);
        let map = MapAt::new(&geo, &phi).unwrap();
        assert_eq!(map.pullback.max_abs_value(), 0.0);
        assert_eq!(map.energy.at(&[]).value(), 0.0);
        assert_eq!(map.tau().unwrap().max_abs_value(), 0.0);
        assert_eq!(map.tau2().unwrap().max_abs_value(), 0.0);
        assert_eq!(map.stress.max_abs_value(), 0.0);
        assert_eq!(map.stress2().unwrap().max_abs_value(), 0.0);
        let (r1, r2) = map.conservation_residuals(&geo).unwrap();
        assert_eq!((r1, r2), (0.0, 0.0));
    }

    #[test]
    fn identity_map_flat_torus() {
        let geo = flat_geo(2, &[0.3, 0.6], 3);
        let target = TargetGeometry::flat_torus(2);
        let phi = MapField::parse(2, target, &["x1", "x2"]).unwrap();
        let map = MapAt::new(&geo, &phi).unwrap();
        assert_abs_diff_eq!(map.pullback.at(&[0, 0]).value(), 1.0);
        assert_abs_diff_eq!(map.pullback.at(&[1, 1]).value(), 1.0);
        assert_abs_diff_eq!(map.energy.at(&[]).value(), 1.0);
        // m = 2 and weakly conformal: stress-energy vanishes
        assert_abs_diff_eq!(map.stress.max_abs_value(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_map_pullback_is_gram_matrix() {
        let geo = flat_geo(4, &[0.1, 0.2, 0.3, 0.4], 2);
        let target = TargetGeometry::flat_torus(2);
        // A = [[1,0,2,0],[0,1,0,-1]]
        let phi = MapField::parse(4, target, &["x1 + 2*x3", "x2 - x4"]).unwrap();
        let map = MapAt::new(&geo, &phi).unwrap();
        let a = [[1.0, 0.0, 2.0, 0.0], [0.0, 1.0, 0.0, -1.0]];
        let mut frob = 0.0;
        for mu in 0..4 {
            for nu in 0..4 {
                let expect: f64 = (0..2).map(|r| a[r][mu] * a[r][nu]).sum();
                assert_abs_diff_eq!(map.pullback.at(&[mu, nu]).value(), expect, epsilon = 1e-14);
            }
            frob += (0..2).map(|r| a[r][mu] * a[r][mu]).sum::<f64>();
        }
        assert_abs_diff_eq!(map.energy.at(&[]).value(), frob / 2.0, epsilon = 1e-14);
        // T = AᵀA − ½‖A‖² g
        for mu in 0..4 {
            let expect: f64 = (0..2).map(|r| a[r][mu] * a[r][mu]).sum::<f64>() - frob / 2.0;
            assert_abs_diff_eq!(map.stress.at(&[mu, mu]).value(), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn hessian_of_scalar_map_on_flat_chart() {
        // φ(x) = sin x1 into flat R: φ_{11} = −sin x1, τ = −sin x1, τ₂ = sin x1
        let geo = flat_geo(1, &[0.7], 4);
        let target = TargetGeometry::euclidean(1, 10.0);
        let phi = MapField::parse(1, target, &["sin(x1)"]).unwrap();
        let map = MapAt::new(&geo, &phi).unwrap();
        let s = 0.7f64.sin();
        assert_abs_diff_eq!(map.hess().unwrap().at(&[0, 0, 0]).value(), -s, epsilon = 1e-14);
        assert_abs_diff_eq!(map.tau().unwrap().at(&[0]).value(), -s, epsilon = 1e-14);
        assert_abs_diff_eq!(map.tau2().unwrap().at(&[0]).value(), s, epsilon = 1e-14);
    }

    #[test]
    fn linear_map_between_flat_tori_is_totally_geodesic() {
        let geo = flat_geo(3, &[0.1, 0.5, 1.2], 3);
        let target = TargetGeometry::flat_torus(2);
        let phi = MapField::parse(3, target, &["x1 - x3", "2*x2"]).unwrap();
        let map = MapAt::new(&geo, &phi).unwrap();
        assert_eq!(map.hess().unwrap().max_abs_value(), 0.0);
    }

    #[test]
    fn sphere_identity_is_totally_geodesic() {
        let g = MetricField::sphere(2, 1.0, 0.9);
        let geo = GeomAt::new(&g, &[0.2, -0.4], 3).unwrap();
        let target = TargetGeometry::sphere(2, 1.0, 2.0);
        let phi = MapField::parse(2, target, &["x1", "x2"]).unwrap();
        let map = MapAt::new(&geo, &phi).unwrap();
        assert!(map.hess().unwrap().max_abs_value() < 1e-12);
        assert!(map.tau().unwrap().max_abs_value() < 1e-12);
        // identity pullback: φ*η = g
        let diff = map.pullback.sub(&geo.g).max_abs_value();
        assert!(diff < 1e-13);
    }

    #[test]
    fn hess_is_symmetric_on_curved_scenario() {
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
        let geo = GeomAt::new(&g, &[1.1, 0.4, 2.5], 4).unwrap();
        let target = TargetGeometry::sphere(2, 1.0, 3.0);
        let phi = MapField::parse(3, target, &["0.3*sin(x1) + 0.1*cos(x2)", "0.2*cos(x3)"]).unwrap();
        let map = MapAt::new(&geo, &phi).unwrap();
        let h = map.hess().unwrap();
        for a in 0..2 {
            for mu in 0..3 {
                for nu in 0..3 {
                    let d = h.at(&[a, mu, nu]).value() - h.at(&[a, nu, mu]).value();
                    assert!(d.abs() < 1e-12, "asymmetry {d}");
                }
            }
        }
    }

    #[test]
    fn conservation_identities_on_curved_scenario() {
        let g = MetricField::from_exprs(
            Chart::torus(2),
            SymExprMatrix::parse(&[
                vec!["1 + 0.2*sin(x1)", "0.1*sin(x1)*sin(x2)"],
                vec!["0.1*sin(x1)*sin(x2)", "1 + 0.2*cos(x2)"],
            ])
            .unwrap(),
        )
        .unwrap();
        let geo = GeomAt::new(&g, &[0.8, 1.9], 6).unwrap();
        let target = TargetGeometry::sphere(2, 1.0, 3.0);
        let phi = MapField::parse(2, target, &["0.4*sin(x1)", "0.3*cos(x2) + 0.1*sin(x1)"]).unwrap();
        let map = MapAt::new(&geo, &phi).unwrap();
        let (r1, r2) = map.conservation_residuals(&geo).unwrap();
        assert!(r1 < 1e-11, "first conservation {r1}");
        assert!(r2 < 1e-10, "second conservation {r2}");
    }

    #[test]
    fn third_derivative_commutation_rule() {
        // φ^a_{ijk} − φ^a_{ikj} = R^λ_{ijk} φ^a_λ + R_N^a_{bdc} φ^b_i φ^c_j φ^d_k,
        // the target term equivalently −R_N^a_{bcd} φ^b_i φ^c_j φ^d_k.
        let g = MetricField::from_exprs(
            Chart::torus(2),
            SymExprMatrix::parse(&[
                vec!["1 + 0.3*sin(x1 + x2)", "0.1*cos(x2)"],
                vec!["0.1*cos(x2)", "1 + 0.2*cos(x1)"],
            ])
            .unwrap(),
        )
        .unwrap();
        let geo = GeomAt::new(&g, &[1.3, 0.7], 5).unwrap();
        let target = TargetGeometry::sphere(2, 1.0, 3.0);
        let phi = MapField::parse(2, target, &["0.5*sin(x1)", "0.4*cos(x2)"]).unwrap();
        let map = MapAt::new(&geo, &phi).unwrap();
        let third = map.nabla(&geo, map.hess().unwrap()).unwrap().values();
        let riem_up = geo.raise(geo.riemann().unwrap(), 0).values();
        let dphi = map.dphi.values();
        let nr = map.nriem_phi.values();
        let m = 2;
        let n = 2;
        let mut worst = 0.0f64;
        for a in 0..n {
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let lhs = third.at(&[a, i, j, k]) - third.at(&[a, i, k, j]);
                        let mut rhs = 0.0;
                        for lam in 0..m {
                            rhs += riem_up.at(&[lam, i, j, k]) * dphi.at(&[a, lam]);
                        }
                        for b in 0..n {
                            for c in 0..n {
                                for d in 0..n {
                                    rhs -= nr.at(&[a, b, c, d])
                                        * dphi.at(&[b, i])
                                        * dphi.at(&[c, j])
                                        * dphi.at(&[d, k]);
                                }
                            }
                        }
                        worst = worst.max((lhs - rhs).abs());
                    }
                }
            }
        }
        assert!(worst < 1e-11, "commutation residual {worst}");
    }
}
