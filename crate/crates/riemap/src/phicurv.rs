//! The map-coupled curvature tensors and their internal identities: the
//! coupled Ricci tensor `Ric^φ = Ric − α φ*η`, its scalar, Schouten, Cotton
//! and Weyl companions, the Bach-type tensor computed along two independent
//! routes, its divergence and the associated target vector `J`, plus the
//! harmonic-Einstein predicates.
//!
//! Moving-frame component formulas are transcribed to coordinates by
//! replacing `η^{ij}` contractions with `g^{μν}` and `φ^a_i φ^a_j` with
//! `η_{ab} φ^a_μ φ^b_ν`; the transcription itself is cross-checked in tests
//! through the frame bridge.

use crate::geometry::{GeomAt, JetTensor, MetricField, Slot};
use crate::jets::{space, Jet};
use crate::phimap::{MapAt, MapField};
use crate::{Error, Result};

/// Kulkarni-Nomizu product of two symmetric 2-tensors:
/// `(T ⊘ V)_{ijkt} = T_{ik}V_{jt} − T_{it}V_{jk} + T_{jt}V_{ik} − T_{jk}V_{it}`.
pub fn kulkarni_nomizu(t: &JetTensor, v: &JetTensor) -> JetTensor {
    assert_eq!(t.rank(), 2);
    assert_eq!(v.rank(), 2);
    let m = t.dims()[0];
    let ord = t.order().min(v.order());
    let sp = space(t.space().vars, ord);
    let tt = t.truncated(ord);
    let vt = v.truncated(ord);
    let mut out = JetTensor::zeros(&[Slot::Cov; 4], m, 0, sp);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    let mut acc = tt.at(&[i, k]).mul(vt.at(&[j, l]));
                    acc.sub_assign(&tt.at(&[i, l]).mul(vt.at(&[j, k])));
                    acc.add_assign(&tt.at(&[j, l]).mul(vt.at(&[i, k])));
                    acc.sub_assign(&tt.at(&[j, k]).mul(vt.at(&[i, l])));
                    out.set(&[i, j, k, l], acc);
                }
            }
        }
    }
    out
}

/// All coupled curvature at one point for a given `(g, φ, α)`.
///
/// Derivative depth relative to the base jet order K: `Ric^φ`, `S^φ`,
/// Schouten and Weyl live at K−2, Cotton at K−3, the Bach tensor, `V` and
/// `J` at K−4, the Bach divergence at K−5. Accessors fail with a budget
/// error when the requested object was not reachable.
pub struct PhiBundle {
    pub alpha: f64,
    pub m: usize,
    pub geo: GeomAt,
    pub map: MapAt,
    pub ric_phi: JetTensor,
    /// Rank-0: `S^φ = S − α|dφ|²`.
    pub s_phi: JetTensor,
    a_phi: Option<JetTensor>,
    w_phi: Option<JetTensor>,
    c_phi: Option<JetTensor>,
    nabla_c: Option<JetTensor>,
    bach_def: Option<JetTensor>,
    bach_alt: Option<JetTensor>,
    v_tensor: Option<JetTensor>,
    j_field: Option<JetTensor>,
    div_bach: Option<JetTensor>,
}

impl PhiBundle {
    pub fn new(
        metric: &MetricField,
        map_field: &MapField,
        alpha: f64,
        p: &[f64],
        order: usize,
    ) -> Result<PhiBundle> {
        let geo = GeomAt::new(metric, p, order)?;
        let map = MapAt::new(&geo, map_field)?;
        Self::from_parts(geo, map, alpha)
    }

    pub fn from_parts(geo: GeomAt, map: MapAt, alpha: f64) -> Result<PhiBundle> {
        if alpha == 0.0 {
            return Err(Error::Scenario("coupling constant must be nonzero".into()));
        }
        let m = geo.dim;
        let order = geo.order;
        if order < 2 {
            return Err(Error::JetBudget {
                needed: 2,
                available: order,
            });
        }
        let ric_phi = geo.ricci()?.sub(&map.pullback.scale(alpha));
        let s_phi = geo.trace_g(&ric_phi, 0, 1);

        let mut bundle = PhiBundle {
            alpha,
            m,
            geo,
            map,
            ric_phi,
            s_phi,
            a_phi: None,
            w_phi: None,
            c_phi: None,
            nabla_c: None,
            bach_def: None,
            bach_alt: None,
            v_tensor: None,
            j_field: None,
            div_bach: None,
        };
        if m >= 3 {
            let a = bundle.ric_phi.sub(
                &bundle
                    .geo
                    .g
                    .scale_jet(bundle.s_phi.at(&[]))
                    .scale(1.0 / (2.0 * (m as f64 - 1.0))),
            );
            let w = bundle
                .geo
                .riemann()?
                .sub(&kulkarni_nomizu(&a, &bundle.geo.g).scale(1.0 / (m as f64 - 2.0)));
            bundle.a_phi = Some(a);
            bundle.w_phi = Some(w);
            if order >= 3 {
                let na = bundle.geo.nabla(bundle.a_phi.as_ref().unwrap())?;
                let mut c = JetTensor::zeros(&[Slot::Cov; 3], m, 0, na.space());
                for i in 0..m {
                    for j in 0..m {
                        for k in 0..m {
                            c.set(&[i, j, k], na.at(&[i, j, k]).sub(na.at(&[i, k, j])));
                        }
                    }
                }
                bundle.c_phi = Some(c);
            }
            if order >= 4 {
                bundle.nabla_c = Some(bundle.geo.nabla(bundle.c_phi.as_ref().unwrap())?);
                bundle.v_tensor = Some(bundle.compute_v()?);
                bundle.bach_def = Some(bundle.compute_bach_def()?);
                bundle.bach_alt = Some(bundle.compute_bach_alt()?);
                bundle.j_field = Some(bundle.compute_j()?);
            }
            if order >= 5 {
                bundle.div_bach = Some(bundle.geo.divergence(bundle.bach_def.as_ref().unwrap())?);
            }
        }
        Ok(bundle)
    }

    fn budget<'a>(&self, t: &'a Option<JetTensor>, needed: usize) -> Result<&'a JetTensor> {
        t.as_ref().ok_or(Error::JetBudget {
            needed,
            available: self.geo.order,
        })
    }

    /// Schouten-type tensor `A^φ = Ric^φ − S^φ/(2(m−1)) g`.
    pub fn a_phi(&self) -> Result<&JetTensor> {
        if self.m < 3 {
            return Err(Error::Dimension {
                dim: self.m,
                why: "Schouten normalization needs m ≥ 3",
            });
        }
        self.budget(&self.a_phi, 2)
    }

    /// Cotton-type tensor `C^φ_{ijk} = A^φ_{ij,k} − A^φ_{ik,j}`.
    pub fn c_phi(&self) -> Result<&JetTensor> {
        if self.m < 3 {
            return Err(Error::Dimension {
                dim: self.m,
                why: "Cotton tensor needs m ≥ 3",
            });
        }
        self.budget(&self.c_phi, 3)
    }

    /// Weyl-type tensor `W^φ = Riem − (m−2)^{-1} A^φ ⊘ g`.
    pub fn w_phi(&self) -> Result<&JetTensor> {
        if self.m < 3 {
            return Err(Error::Dimension {
                dim: self.m,
                why: "Weyl tensor needs m ≥ 3",
            });
        }
        self.budget(&self.w_phi, 2)
    }

    /// Bach-type tensor, definition route (through `∇C`).
    pub fn bach(&self) -> Result<&JetTensor> {
        if self.m < 3 {
            return Err(Error::Dimension {
                dim: self.m,
                why: "Bach tensor needs m ≥ 3",
            });
        }
        self.budget(&self.bach_def, 4)
    }

    /// Bach-type tensor, alternative route (Laplacian-of-Ricci form).
    pub fn bach_alt(&self) -> Result<&JetTensor> {
        self.budget(&self.bach_alt, 4)
    }

    /// The tensor `V_{ij} = g^{κτ}C^φ_{ijκ,τ} − α[(R^φ)^κ_j φ^a_κ + τ^a_{,j}]φ^a_i`.
    pub fn v_tensor(&self) -> Result<&JetTensor> {
        self.budget(&self.v_tensor, 4)
    }

    /// Target vector `J` from the Bach divergence formula.
    pub fn j_field(&self) -> Result<&JetTensor> {
        self.budget(&self.j_field, 4)
    }

    /// Direct divergence `div(B^φ)_μ = g^{νκ}∇_κ B^φ_{μν}`.
    pub fn div_bach(&self) -> Result<&JetTensor> {
        self.budget(&self.div_bach, 5)
    }

    /// `(R^φ)^{κτ}` (both indices raised).
    fn ric_phi_up(&self) -> JetTensor {
        let up1 = self.geo.raise(&self.ric_phi, 0);
        self.geo.raise(&up1, 1)
    }

    /// `(m−2) B^φ_{ij} = g^{κτ}C_{ijκ,τ} + (R^φ)^{τκ}(W_{τiκj} − α(φ*η)_{τi} g_{jκ})
    ///  + α(φ^a_{ij}τ^a − τ^a_{,j}φ^a_i − (m−2)^{-1}|τ|² g_{ij})`.
    fn compute_bach_def(&self) -> Result<JetTensor> {
        let m = self.m;
        let mf = m as f64;
        let nabla_c = self.nabla_c.as_ref().unwrap();
        let ord = nabla_c.order();
        let sp = space(nabla_c.space().vars, ord);
        let div_c = self.geo.trace_g(nabla_c, 2, 3);
        let rup = self.ric_phi_up().truncated(ord);
        let w = self.w_phi.as_ref().unwrap().truncated(ord);
        let pb = self.map.pullback.truncated(ord);
        let g = self.geo.g.truncated(ord);
        let tau = self.map.tau()?.truncated(ord);
        let ntau = self.map.nabla_tau()?.truncated(ord);
        let hess = self.map.hess()?.truncated(ord);
        let dphi = self.map.dphi.truncated(ord);
        let tau_sq = self.map.tau_norm_sq()?.truncated(ord);
        let n = self.map.n;

        let mut out = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, sp);
        for i in 0..m {
            for j in 0..m {
                let mut acc = div_c.at(&[i, j]).clone();
                for t in 0..m {
                    for k in 0..m {
                        let term = w.at(&[t, i, k, j]).sub(
                            &pb.at(&[t, i]).mul(g.at(&[j, k])).scale(self.alpha),
                        );
                        rup.at(&[t, k]).mul_add_into(&term, &mut acc);
                    }
                }
                let mut map_part = Jet::constant(0.0, sp);
                for a in 0..n {
                    for b in 0..n {
                        let eta = self.map.eta_phi[a][b].truncated(ord);
                        let t1 = eta.mul(hess.at(&[a, i, j]));
                        t1.mul_add_into(tau.at(&[b]), &mut map_part);
                        let t2 = eta.mul(ntau.at(&[a, j])).mul(dphi.at(&[b, i]));
                        map_part.sub_assign(&t2);
                    }
                }
                map_part.sub_assign(&tau_sq.at(&[]).mul(g.at(&[i, j])).scale(1.0 / (mf - 2.0)));
                acc.add_assign(&map_part.scale(self.alpha));
                out.set(&[i, j], acc.scale(1.0 / (mf - 2.0)));
            }
        }
        Ok(out)
    }

    /// Laplacian-of-Ricci route for the Bach-type tensor.
    fn compute_bach_alt(&self) -> Result<JetTensor> {
        let m = self.m;
        let mf = m as f64;
        let lap_ric = self.geo.laplacian(&self.ric_phi)?;
        let hess_s = self.geo.nabla(&self.geo.nabla(&self.s_phi)?)?;
        let lap_s = self.geo.trace_g(&hess_s, 0, 1);
        let ord = lap_ric.order();
        let sp = space(lap_ric.space().vars, ord);

        let rp = self.ric_phi.truncated(ord);
        let rup = self.ric_phi_up().truncated(ord);
        let riem = self.geo.riemann()?.truncated(ord);
        let g = self.geo.g.truncated(ord);
        let sphi = self.s_phi.at(&[]).truncated(ord);
        let pb = self.map.pullback.truncated(ord);
        let tau = self.map.tau()?.truncated(ord);
        let hess = self.map.hess()?.truncated(ord);
        let tau_sq = self.map.tau_norm_sq()?.truncated(ord);
        let n = self.map.n;

        // (R^φ)²_{ij} = g^{κτ} R^φ_{iκ} R^φ_{τj} and |Ric^φ|²
        let rp_up1 = self.geo.raise(&self.ric_phi, 0).truncated(ord);
        let mut rp_sq = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, sp);
        let mut rp_norm = Jet::constant(0.0, sp);
        for i in 0..m {
            for j in 0..m {
                let mut acc = Jet::constant(0.0, sp);
                for k in 0..m {
                    rp.at(&[i, k]).mul_add_into(rp_up1.at(&[k, j]), &mut acc);
                }
                rp_sq.set(&[i, j], acc);
            }
        }
        for k in 0..m {
            for t in 0..m {
                rup.at(&[k, t]).mul_add_into(rp.at(&[k, t]), &mut rp_norm);
            }
        }

        // (R^φ)^κ_i (φ*η)_{jκ} + (i↔j)
        let mixed = {
            let mut out = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, sp);
            for i in 0..m {
                for j in 0..m {
                    let mut acc = Jet::constant(0.0, sp);
                    for k in 0..m {
                        rp_up1.at(&[k, i]).mul_add_into(pb.at(&[j, k]), &mut acc);
                        rp_up1.at(&[k, j]).mul_add_into(pb.at(&[i, k]), &mut acc);
                    }
                    out.set(&[i, j], acc);
                }
            }
            out
        };

        let c1 = (mf - 2.0) / (2.0 * (mf - 1.0));
        let c2 = (mf - 4.0) / (mf - 2.0);
        let c3 = mf / ((mf - 1.0) * (mf - 2.0));
        let trace_coeff = sphi
            .mul(&sphi)
            .scale(1.0 / ((mf - 1.0) * (mf - 2.0)))
            .sub(&lap_s.at(&[]).truncated(ord).scale(1.0 / (2.0 * (mf - 1.0))))
            .sub(&rp_norm.scale(1.0 / (mf - 2.0)));

        let mut out = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, sp);
        for i in 0..m {
            for j in 0..m {
                let mut acc = lap_ric.at(&[i, j]).truncated(ord).clone();
                acc.sub_assign(&hess_s.at(&[i, j]).truncated(ord).scale(c1));
                acc.sub_assign(&rp_sq.at(&[i, j]).scale(c2));
                acc.sub_assign(&sphi.mul(rp.at(&[i, j])).scale(c3));
                // +2 R_{kitj} (R^φ)^{kt}
                let mut riem_term = Jet::constant(0.0, sp);
                for k in 0..m {
                    for t in 0..m {
                        rup.at(&[k, t]).mul_add_into(riem.at(&[k, i, t, j]), &mut riem_term);
                    }
                }
                acc.add_assign(&riem_term.scale(2.0));
                acc.add_assign(&trace_coeff.mul(g.at(&[i, j])));
                // α[2 φ^a_{ij} τ^a − (m−2)^{-1}|τ|² g_{ij} − mixed]
                let mut map_part = Jet::constant(0.0, sp);
                for a in 0..n {
                    for b in 0..n {
                        let eta = self.map.eta_phi[a][b].truncated(ord);
                        let t1 = eta.mul(hess.at(&[a, i, j]));
                        t1.mul_add_into(tau.at(&[b]), &mut map_part);
                    }
                }
                let mut map_part = map_part.scale(2.0);
                map_part.sub_assign(&tau_sq.at(&[]).mul(g.at(&[i, j])).scale(1.0 / (mf - 2.0)));
                map_part.sub_assign(mixed.at(&[i, j]));
                acc.add_assign(&map_part.scale(self.alpha));
                out.set(&[i, j], acc.scale(1.0 / (mf - 2.0)));
            }
        }
        Ok(out)
    }

    /// `V_{ij} = g^{κτ}C^φ_{ijκ,τ} − α[(R^φ)^κ_j φ^a_κ + τ^a_{,j}] φ^a_i`.
    fn compute_v(&self) -> Result<JetTensor> {
        let m = self.m;
        let nabla_c = self.nabla_c.as_ref().unwrap();
        let div_c = self.geo.trace_g(nabla_c, 2, 3);
        let ord = div_c.order();
        let sp = space(div_c.space().vars, ord);
        let rp_up1 = self.geo.raise(&self.ric_phi, 0).truncated(ord);
        let pb = self.map.pullback.truncated(ord);
        let ntau = self.map.nabla_tau()?.truncated(ord);
        let dphi = self.map.dphi.truncated(ord);
        let n = self.map.n;
        let mut out = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, sp);
        for i in 0..m {
            for j in 0..m {
                let mut acc = div_c.at(&[i, j]).clone();
                let mut corr = Jet::constant(0.0, sp);
                for k in 0..m {
                    rp_up1.at(&[k, j]).mul_add_into(pb.at(&[k, i]), &mut corr);
                }
                for a in 0..n {
                    for b in 0..n {
                        let eta = self.map.eta_phi[a][b].truncated(ord);
                        let t = eta.mul(ntau.at(&[a, j]));
                        t.mul_add_into(dphi.at(&[b, i]), &mut corr);
                    }
                }
                acc.sub_assign(&corr.scale(self.alpha));
                out.set(&[i, j], acc);
            }
        }
        Ok(out)
    }

    /// `J^a = m S^φ/((m−1)(m−2)) τ^a − (m−2)/(2(m−1)) S^φ_{,j} φ^a_j
    ///  − 2 R^φ_{jk} φ^a_{jk} + 2α τ^b φ^b_j φ^a_j − τ₂^a`.
    ///
    /// The α on the fourth term is forced: the divergence of the Bach-type
    /// tensor and the map-variation of the quadratic curvature functional
    /// (which carries 2α² on this term against an overall α) both require it,
    /// and the numerical divergence identity only closes with it.
    fn compute_j(&self) -> Result<JetTensor> {
        let m = self.m;
        let mf = m as f64;
        let n = self.map.n;
        let tau2 = self.map.tau2()?;
        let ord = tau2.order();
        let sp = space(tau2.space().vars, ord);
        let tau = self.map.tau()?.truncated(ord);
        let rup = self.ric_phi_up().truncated(ord);
        let hess = self.map.hess()?.truncated(ord);
        let dphi_up = self.geo.raise(&self.map.dphi, 1).truncated(ord);
        let dphi = self.map.dphi.truncated(ord);
        let ds = self.geo.nabla(&self.s_phi)?.truncated(ord);
        let sphi = self.s_phi.at(&[]).truncated(ord);

        let mut out = JetTensor::zeros(&[Slot::Map], m, n, sp);
        for a in 0..n {
            let mut acc = sphi.mul(tau.at(&[a])).scale(mf / ((mf - 1.0) * (mf - 2.0)));
            // − (m−2)/(2(m−1)) dφ^a(∇S^φ)
            let mut grad_term = Jet::constant(0.0, sp);
            for j in 0..m {
                ds.at(&[j]).mul_add_into(dphi_up.at(&[a, j]), &mut grad_term);
            }
            acc.sub_assign(&grad_term.scale((mf - 2.0) / (2.0 * (mf - 1.0))));
            // − 2 (R^φ)^{jk} φ^a_{jk}
            let mut ric_term = Jet::constant(0.0, sp);
            for j in 0..m {
                for k in 0..m {
                    rup.at(&[j, k]).mul_add_into(hess.at(&[a, j, k]), &mut ric_term);
                }
            }
            acc.sub_assign(&ric_term.scale(2.0));
            // + 2 η_{bc} τ^b φ^c_j φ^a_j (j raised)
            let mut cross = Jet::constant(0.0, sp);
            for j in 0..m {
                let mut tb = Jet::constant(0.0, sp);
                for b in 0..n {
                    for c in 0..n {
                        let eta = self.map.eta_phi[b][c].truncated(ord);
                        let t = eta.mul(tau.at(&[b]));
                        t.mul_add_into(dphi.at(&[c, j]), &mut tb);
                    }
                }
                tb.mul_add_into(dphi_up.at(&[a, j]), &mut cross);
            }
            acc.add_assign(&cross.scale(2.0 * self.alpha));
            acc.sub_assign(tau2.at(&[a]));
            out.set(&[a], acc);
        }
        Ok(out)
    }

    // ───────────────────────── residuals ─────────────────────────

    /// Generalized Schur identity: `‖div(Ric^φ) − ½ dS^φ + α div(T)‖∞`.
    pub fn schur_residual(&self) -> Result<f64> {
        let div_ric = self.geo.divergence(&self.ric_phi)?;
        let ds = self.geo.nabla(&self.s_phi)?;
        let div_t = self.geo.divergence(&self.map.stress)?;
        let r = div_ric
            .sub(&ds.scale(0.5))
            .add(&div_t.scale(self.alpha));
        Ok(r.max_abs_value())
    }

    /// Cyclic (Bianchi) identity of the Cotton-type tensor.
    pub fn cotton_bianchi_residual(&self) -> Result<f64> {
        let c = self.c_phi()?.values();
        let m = self.m;
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let r = c.at(&[i, j, k]) + c.at(&[j, k, i]) + c.at(&[k, i, j]);
                    worst = worst.max(r.abs());
                }
            }
        }
        Ok(worst)
    }

    /// Trace identity `g^{ij} C^φ_{ijk} = α div(T)_k`.
    pub fn cotton_trace_residual(&self) -> Result<f64> {
        let tr = self.geo.trace_g(self.c_phi()?, 0, 1);
        let div_t = self.geo.divergence(&self.map.stress)?;
        Ok(tr.sub(&div_t.scale(self.alpha)).max_abs_value())
    }

    /// Trace identity `g^{kt} W^φ_{kitj} = α (φ*η)_{ij}`.
    pub fn weyl_trace_residual(&self) -> Result<f64> {
        let tr = self.geo.trace_g(self.w_phi()?, 0, 2);
        Ok(tr
            .sub(&self.map.pullback.scale(self.alpha))
            .max_abs_value())
    }

    /// Divergence law of the Weyl-type tensor against the Cotton-type tensor.
    pub fn weyl_divergence_residual(&self) -> Result<f64> {
        let m = self.m;
        let mf = m as f64;
        let nw = self.geo.nabla(self.w_phi()?)?;
        let div_w = self.geo.trace_g(&nw, 0, 4).values();
        let c = self.c_phi()?.values();
        let g = self.geo.g.values();
        let hess = self.map.hess()?;
        let dphi = &self.map.dphi;
        let tau = self.map.tau()?;
        let hd = self.map.contract_map(hess, dphi, 0).values(); // [i,j][k]
        let taud = self.map.contract_map(tau, dphi, 0).values(); // [k]
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let rhs = (mf - 3.0) / (mf - 2.0) * c.at(&[i, k, j])
                        + self.alpha * (hd.at(&[i, j, k]) - hd.at(&[i, k, j]))
                        + self.alpha / (mf - 2.0)
                            * (taud.at(&[j]) * g.at(&[i, k]) - taud.at(&[k]) * g.at(&[i, j]));
                    worst = worst.max((div_w.at(&[i, j, k]) - rhs).abs());
                }
            }
        }
        Ok(worst)
    }

    /// `max|B_{ij} − B_{ji}|` plus the divergence-of-Cotton identity that
    /// implies it: `g^{kt}C^φ_{kij,t} = α[φ^a_k((R^φ)^k_i φ^a_j − (R^φ)^k_j φ^a_i)
    /// + τ^a_{,i} φ^a_j − τ^a_{,j} φ^a_i]`.
    pub fn bach_symmetry_residual(&self) -> Result<f64> {
        let b = self.bach()?.values();
        let m = self.m;
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((b.at(&[i, j]) - b.at(&[j, i])).abs());
            }
        }
        // the identity behind the symmetry
        let nabla_c = self.nabla_c.as_ref().unwrap();
        let div_first = self.geo.trace_g(nabla_c, 0, 3).values();
        let rp_up1 = self.geo.raise(&self.ric_phi, 0);
        let mixed = {
            // (R^φ)^k_i (φ*η)_{kj}
            let pb = &self.map.pullback;
            let ord = rp_up1.order().min(pb.order());
            let sp = space(rp_up1.space().vars, ord);
            let rp1 = rp_up1.truncated(ord);
            let pbt = pb.truncated(ord);
            let mut out = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, sp);
            for i in 0..m {
                for j in 0..m {
                    let mut acc = Jet::constant(0.0, sp);
                    for k in 0..m {
                        rp1.at(&[k, i]).mul_add_into(pbt.at(&[k, j]), &mut acc);
                    }
                    out.set(&[i, j], acc);
                }
            }
            out.values()
        };
        let ntd = self
            .map
            .contract_map(self.map.nabla_tau()?, &self.map.dphi, 0)
            .values(); // [deriv i][j]
        for i in 0..m {
            for j in 0..m {
                let rhs = self.alpha
                    * (mixed.at(&[i, j]) - mixed.at(&[j, i]) + ntd.at(&[i, j]) - ntd.at(&[j, i]));
                worst = worst.max((div_first.at(&[i, j]) - rhs).abs());
            }
        }
        Ok(worst)
    }

    /// Trace law `(m−2) tr(B^φ) = α (m−4)/(m−2) |τ|²`.
    pub fn bach_trace_residual(&self) -> Result<f64> {
        let mf = self.m as f64;
        let tr = self.geo.trace_g(self.bach()?, 0, 1);
        let tau_sq = self.map.tau_norm_sq()?;
        let expect = tau_sq.at(&[]).value() * self.alpha * (mf - 4.0) / (mf - 2.0) / (mf - 2.0);
        Ok((tr.at(&[]).value() - expect).abs())
    }

    /// Max component difference between the two Bach routes.
    pub fn bach_routes_residual(&self) -> Result<f64> {
        Ok(self.bach()?.sub(self.bach_alt()?).max_abs_value())
    }

    /// Residuals of the divergence formula: `(direct − closed form, and for
    /// m = 4 the reduction div B = α J^a φ^a_i)`.
    pub fn bach_divergence_residuals(&self) -> Result<(f64, Option<f64>)> {
        let m = self.m;
        let mf = m as f64;
        let div_b = self.div_bach()?.values();
        let c = self.c_phi()?;
        let rup = self.ric_phi_up();
        // (R^φ)^{jk} C_{jki}
        let rc = {
            let ord = rup.order().min(c.order());
            let sp = space(rup.space().vars, ord);
            let r = rup.truncated(ord);
            let ct = c.truncated(ord);
            let mut out = JetTensor::zeros(&[Slot::Cov], m, 0, sp);
            for i in 0..m {
                let mut acc = Jet::constant(0.0, sp);
                for j in 0..m {
                    for k in 0..m {
                        r.at(&[j, k]).mul_add_into(ct.at(&[j, k, i]), &mut acc);
                    }
                }
                out.set(&[i], acc);
            }
            out.values()
        };
        // (τ^a_{,i} + R^φ_{ij} φ^a_j) τ^a
        let ntau_tau = self
            .map
            .contract_map(self.map.nabla_tau()?, self.map.tau()?, 0)
            .values(); // [i]
        let dphi_up = self.geo.raise(&self.map.dphi, 1);
        let ric_dphi_tau = {
            // R^φ_{ij} g^{jk} η_{ab} φ^a_k τ^b
            let dt = self.map.contract_map(&dphi_up, self.map.tau()?, 0); // slot [Con j]
            let ord = self.ric_phi.order().min(dt.order());
            let sp = space(self.ric_phi.space().vars, ord);
            let rp = self.ric_phi.truncated(ord);
            let dt = dt.truncated(ord);
            let mut out = JetTensor::zeros(&[Slot::Cov], m, 0, sp);
            for i in 0..m {
                let mut acc = Jet::constant(0.0, sp);
                for j in 0..m {
                    rp.at(&[i, j]).mul_add_into(dt.at(&[j]), &mut acc);
                }
                out.set(&[i], acc);
            }
            out.values()
        };
        let jd = self
            .map
            .contract_map(self.j_field()?, &self.map.dphi, 0)
            .values(); // [i]
        let mut worst = 0.0f64;
        for i in 0..m {
            let rhs = (mf - 4.0) / (mf - 2.0)
                * (rc.at(&[i]) + self.alpha * (ntau_tau.at(&[i]) + ric_dphi_tau.at(&[i])))
                + self.alpha * jd.at(&[i]);
            worst = worst.max((div_b.at(&[i]) - rhs).abs());
        }
        let m4 = if m == 4 {
            let mut w4 = 0.0f64;
            for i in 0..m {
                w4 = w4.max((div_b.at(&[i]) - self.alpha * jd.at(&[i])).abs());
            }
            Some(w4)
        } else {
            None
        };
        Ok((worst, m4))
    }

    /// `(‖(Ric^φ)°‖∞, ‖τ‖∞)`: both vanish exactly on harmonic-Einstein data.
    pub fn harmonic_einstein_residual(&self) -> Result<(f64, f64)> {
        let m = self.m as f64;
        let traceless = self
            .ric_phi
            .sub(&self.geo.g.scale_jet(self.s_phi.at(&[])).scale(1.0 / m));
        let tau_norm = self.map.tau()?.max_abs_value();
        Ok((traceless.max_abs_value(), tau_norm))
    }

    /// `max|G + Λg − αT|` with `Λ = (m−2) S^φ / (2m)`.
    pub fn einstein_field_residual(&self) -> Result<f64> {
        let m = self.m as f64;
        let ric = self.geo.ricci()?;
        let s = self.geo.scalar()?;
        let g = &self.geo.g;
        let einstein = ric.sub(&g.scale_jet(s.at(&[])).scale(0.5));
        let lambda = (m - 2.0) / (2.0 * m) * self.s_phi.at(&[]).value();
        let lhs = einstein
            .add(&g.scale(lambda))
            .sub(&self.map.stress.scale(self.alpha));
        Ok(lhs.max_abs_value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Chart, SymExprMatrix};
    use crate::phimap::TargetGeometry;
    use approx::assert_abs_diff_eq;

    fn t3_scenario() -> (MetricField, MapField) {
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
        let phi = MapField::parse(
            3,
            TargetGeometry::flat_torus(2),
            &["x1 + 0.3*sin(x2)", "x3 - 0.2*cos(x1)"],
        )
        .unwrap();
        (g, phi)
    }

    #[test]
    fn kulkarni_nomizu_of_metric_with_itself() {
        let g = MetricField::flat(Chart::torus(2));
        let geo = GeomAt::new(&g, &[0.0, 0.0], 1).unwrap();
        let kn = kulkarni_nomizu(&geo.g, &geo.g).values();
        // (g ⊘ g)_{ijkt} = 2(g_{ik} g_{jt} − g_{it} g_{jk})
        assert_abs_diff_eq!(kn.at(&[0, 1, 0, 1]), 2.0);
        assert_abs_diff_eq!(kn.at(&[0, 1, 1, 0]), -2.0);
        assert_abs_diff_eq!(kn.at(&[0, 0, 1, 1]), 0.0);
    }

    #[test]
    fn kulkarni_nomizu_symmetry_and_bianchi() {
        let (g, _) = t3_scenario();
        let geo = GeomAt::new(&g, &[1.0, 2.0, 0.5], 2).unwrap();
        let t = geo.ricci().unwrap();
        let v = &geo.g;
        let ab = kulkarni_nomizu(t, v);
        let ba = kulkarni_nomizu(v, t);
        assert!(ab.sub(&ba).max_abs_value() < 1e-13);
        // first-Bianchi residual over all index triples
        let knv = ab.values();
        let m = 3;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for t in 0..m {
                        let r = knv.at(&[i, j, k, t]) + knv.at(&[i, k, t, j]) + knv.at(&[i, t, j, k]);
                        assert!(r.abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_map_reduces_to_classical_ricci() {
        let (g, _) = t3_scenario();
        let phi = MapField::constant(3, TargetGeometry::flat_torus(2), &[0.2, 0.4]);
        let b = PhiBundle::new(&g, &phi, 1.0, &[0.7, 1.1, 2.2], 2).unwrap();
        let diff = b.ric_phi.sub(b.geo.ricci().unwrap()).max_abs_value();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn sphere_identity_is_coupled_einstein() {
        // unit S³, identity map, α: Ric^φ = (m−1−α) g, S^φ = m(m−1−α)
        let g = MetricField::sphere(3, 1.0, 0.8);
        let phi = MapField::parse(3, TargetGeometry::sphere(3, 1.0, 2.0), &["x1", "x2", "x3"])
            .unwrap();
        let alpha = 1.0;
        let b = PhiBundle::new(&g, &phi, alpha, &[0.2, -0.3, 0.4], 3).unwrap();
        let gv = b.geo.g.values();
        let rv = b.ric_phi.values();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(rv.at(&[i, j]), gv.at(&[i, j]), epsilon = 1e-10);
            }
        }
        assert_abs_diff_eq!(b.s_phi.at(&[]).value(), 3.0, epsilon = 1e-10);
        let (he, tau) = b.harmonic_einstein_residual().unwrap();
        assert!(he < 1e-10 && tau < 1e-10);
        assert!(b.einstein_field_residual().unwrap() < 1e-10);
        // Cotton vanishes on harmonic-Einstein data
        assert!(b.c_phi().unwrap().max_abs_value() < 1e-9);
    }

    #[test]
    fn flat_linear_map_coupled_ricci() {
        // flat T⁴, linear map: Ric^φ = −α AᵀA
        let g = MetricField::flat(Chart::torus(4));
        let phi = MapField::parse(
            4,
            TargetGeometry::flat_torus(2),
            &["x1 + 2*x3", "x2 - x4"],
        )
        .unwrap();
        let alpha = 1.3;
        let b = PhiBundle::new(&g, &phi, alpha, &[0.1; 4], 2).unwrap();
        let a = [[1.0, 0.0, 2.0, 0.0], [0.0, 1.0, 0.0, -1.0]];
        for mu in 0..4 {
            for nu in 0..4 {
                let expect: f64 = -alpha * (0..2).map(|r| a[r][mu] * a[r][nu]).sum::<f64>();
                assert_abs_diff_eq!(b.ric_phi.values().at(&[mu, nu]), expect, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn schur_and_cotton_identities_on_generic_scenario() {
        let (g, phi) = t3_scenario();
        let b = PhiBundle::new(&g, &phi, 0.8, &[0.9, 1.6, 0.4], 5).unwrap();
        assert!(b.schur_residual().unwrap() < 1e-11);
        assert!(b.cotton_bianchi_residual().unwrap() < 1e-11);
        assert!(b.cotton_trace_residual().unwrap() < 1e-11);
        assert!(b.weyl_trace_residual().unwrap() < 1e-11);
        assert!(b.weyl_divergence_residual().unwrap() < 1e-10);
    }

    #[test]
    fn bach_identities_on_generic_scenario() {
        let (g, phi) = t3_scenario();
        let b = PhiBundle::new(&g, &phi, 0.8, &[0.9, 1.6, 0.4], 6).unwrap();
        assert!(b.bach_symmetry_residual().unwrap() < 1e-10, "sym {}", b.bach_symmetry_residual().unwrap());
        assert!(b.bach_trace_residual().unwrap() < 1e-10, "trace {}", b.bach_trace_residual().unwrap());
        assert!(b.bach_routes_residual().unwrap() < 1e-10, "routes {}", b.bach_routes_residual().unwrap());
        let (full, m4) = b.bach_divergence_residuals().unwrap();
        assert!(full < 1e-9, "div {full}");
        assert!(m4.is_none());
    }

    #[test]
    fn weyl_vanishes_on_conformally_flat_constant_map() {
        let g = MetricField::sphere(3, 1.0, 0.8);
        let phi = MapField::constant(3, TargetGeometry::flat_torus(2), &[0.0, 0.0]);
        let b = PhiBundle::new(&g, &phi, 1.0, &[0.3, 0.1, -0.2], 2).unwrap();
        assert!(b.w_phi().unwrap().max_abs_value() < 1e-10);
    }

    #[test]
    fn low_dimension_rejected() {
        let g = MetricField::flat(Chart::torus(2));
        let phi = MapField::constant(2, TargetGeometry::flat_torus(1), &[0.0]);
        let b = PhiBundle::new(&g, &phi, 1.0, &[0.0, 0.0], 3).unwrap();
        assert!(matches!(b.a_phi(), Err(Error::Dimension { .. })));
        assert!(matches!(b.w_phi(), Err(Error::Dimension { .. })));
    }
}
