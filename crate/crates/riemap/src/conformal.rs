//! Conformal change of metric `g̃ = e^{−2h} g` and the transformation laws of
//! every coupled curvature object under it, through the dimension-4 weighted
//! invariance of the Bach-type tensor and the Q-density identity.
//!
//! Each check computes both pictures independently: the tilde side directly
//! on the rescaled metric field, the base side from `g`-quantities through
//! the stated law. Component-level laws are compared in paired orthonormal
//! frames `ẽ_i = e^{h} e_i`, which removes any frame-gauge ambiguity.

use crate::geometry::{trace_pair, Frame, GeomAt, JetTensor, MetricField, ScalarField, Tensor};
use crate::jets::Jet;
use crate::phicurv::PhiBundle;
use crate::phimap::{MapAt, MapField};
use crate::{Error, Result};

/// A base metric with a conformal factor field and the derived metric.
#[derive(Clone, Debug)]
pub struct ConformalPair {
    pub base: MetricField,
    /// The exponent field: `g̃ = e^{−2h} g`.
    pub h: ScalarField,
    pub tilde: MetricField,
}

impl ConformalPair {
    pub fn new(base: MetricField, h: ScalarField) -> ConformalPair {
        assert_eq!(h.dim, base.dim());
        let tilde = base.clone().conformal(h.clone());
        ConformalPair { base, h, tilde }
    }

    /// In terms of `f = (m−2) h`.
    pub fn from_f(base: MetricField, f: &ScalarField) -> ConformalPair {
        let m = base.dim() as f64;
        let h = ScalarField::new(
            crate::expr::Expr::Mul(
                Box::new(crate::expr::Expr::Const(1.0 / (m - 2.0))),
                Box::new(f.expr.clone()),
            ),
            f.dim,
        )
        .unwrap();
        ConformalPair::new(base, h)
    }
}

/// Both pictures of one conformal pair at one point: the coupled bundles on
/// `g` and on `g̃`, jets of `h`, and the paired frames.
pub struct ConformalAt {
    pub m: usize,
    pub alpha: f64,
    pub base: PhiBundle,
    pub tilde: PhiBundle,
    /// Scalar observables of `h` through the base geometry.
    pub h_obs: crate::geometry::ScalarObs,
    pub h_val: f64,
    pub frame: Frame,
    pub frame_tilde: Frame,
}

impl ConformalAt {
    pub fn new(
        pair: &ConformalPair,
        map_field: &MapField,
        alpha: f64,
        p: &[f64],
        order: usize,
    ) -> Result<ConformalAt> {
        let base_geo = GeomAt::new(&pair.base, p, order)?;
        let h_obs = base_geo.scalar_obs(&pair.h)?;
        let h_val = h_obs.f.at(&[]).value();
        let base_map = MapAt::new(&base_geo, map_field)?;
        let base = PhiBundle::from_parts(base_geo, base_map, alpha)?;

        let tilde_geo = GeomAt::new(&pair.tilde, p, order)?;
        let tilde_map = MapAt::new(&tilde_geo, map_field)?;
        let tilde = PhiBundle::from_parts(tilde_geo, tilde_map, alpha)?;

        let frame = base.geo.frame();
        let scale = h_val.exp();
        let e = frame
            .e
            .iter()
            .map(|row| row.iter().map(|&v| v * scale).collect())
            .collect();
        let theta = frame
            .theta
            .iter()
            .map(|row| row.iter().map(|&v| v / scale).collect())
            .collect();
        let frame_tilde = Frame {
            dim: frame.dim,
            e,
            theta,
            eta: frame.eta.clone(),
        };
        Ok(ConformalAt {
            m: pair.base.dim(),
            alpha,
            base,
            tilde,
            h_obs,
            h_val,
            frame,
            frame_tilde,
        })
    }

    fn mf(&self) -> f64 {
        self.m as f64
    }

    /// Residual of the coupled-Ricci law
    /// `Ric̃^φ = Ric^φ + (m−2)Hess h + (m−2)dh⊗dh + [Δh − (m−2)|∇h|²] g`
    /// (all derivatives with respect to the base metric).
    pub fn ricci_law_residual(&self) -> f64 {
        let mf = self.mf();
        let hess = &self.h_obs.hess;
        let dh = &self.h_obs.df;
        let lap = self.h_obs.lap.at(&[]);
        let gsq = self.h_obs.grad_sq.at(&[]);
        let ord = hess.order().min(self.base.ric_phi.order());
        let coeff = lap
            .truncated(ord)
            .sub(&gsq.truncated(ord).scale(mf - 2.0));
        let dh2 = {
            let dht = dh.truncated(ord);
            let mut out = hess.truncated(ord);
            for i in 0..self.m {
                for j in 0..self.m {
                    out.set(&[i, j], dht.at(&[i]).mul(dht.at(&[j])));
                }
            }
            out
        };
        let rhs = self
            .base
            .ric_phi
            .add(&hess.scale(mf - 2.0))
            .add(&dh2.scale(mf - 2.0))
            .add(&self.base.geo.g.scale_jet(&coeff));
        self.tilde.ric_phi.sub(&rhs).max_abs_value()
    }

    /// Residual of `e^{−2h} S̃^φ = S^φ + (m−1)[2Δh − (m−2)|∇h|²]`.
    pub fn scalar_law_residual(&self) -> f64 {
        let mf = self.mf();
        let lhs = (-2.0 * self.h_val).exp() * self.tilde.s_phi.at(&[]).value();
        let rhs = self.base.s_phi.at(&[]).value()
            + (mf - 1.0)
                * (2.0 * self.h_obs.lap.at(&[]).value()
                    - (mf - 2.0) * self.h_obs.grad_sq.at(&[]).value());
        (lhs - rhs).abs()
    }

    /// Frame components of `dh` and `η`-raised version.
    fn h_frame(&self) -> (Vec<f64>, Vec<f64>) {
        let dh = self.frame.components(&self.h_obs.df.values());
        let lower: Vec<f64> = (0..self.m).map(|i| dh.at(&[i])).collect();
        let upper: Vec<f64> = (0..self.m)
            .map(|i| self.frame.eta[i] * lower[i])
            .collect();
        (lower, upper)
    }

    /// Residuals of the three map laws: the second-fundamental-form law, the
    /// tension law and the tension-derivative law.
    pub fn map_law_residuals(&self) -> Result<(f64, f64, f64)> {
        let mf = self.mf();
        let m = self.m;
        let n = self.base.map.n;
        let e2h = (2.0 * self.h_val).exp();
        let (h_lo, h_up) = self.h_frame();
        let eta = &self.frame.eta;

        // φ̃^a_{ij} = e^{2h}(φ^a_{ij} + φ^a_i h_j + φ^a_j h_i − φ^a_k h^k η_{ij})
        let hess_t = self.frame_tilde.components(&self.tilde.map.hess()?.values());
        let hess_b = self.frame.components(&self.base.map.hess()?.values());
        let dphi_b = self.frame.components(&self.base.map.dphi.values());
        let mut r1 = 0.0f64;
        for a in 0..n {
            let hk: f64 = (0..m).map(|k| dphi_b.at(&[a, k]) * h_up[k]).sum();
            for i in 0..m {
                for j in 0..m {
                    let mut rhs = hess_b.at(&[a, i, j]);
                    rhs += dphi_b.at(&[a, i]) * h_lo[j] + dphi_b.at(&[a, j]) * h_lo[i];
                    if i == j {
                        rhs -= hk * eta[i];
                    }
                    r1 = r1.max((hess_t.at(&[a, i, j]) - e2h * rhs).abs());
                }
            }
        }

        // τ̃ = e^{2h}[τ − (m−2) dφ(∇h)] (coordinate target vectors)
        let tau_t = self.tilde.map.tau()?.values();
        let tau_b = self.base.map.tau()?.values();
        let grad_h = self.h_obs.grad.values();
        let dphi_coord = self.base.map.dphi.values();
        let mut r2 = 0.0f64;
        for a in 0..n {
            let dg: f64 = (0..m).map(|mu| dphi_coord.at(&[a, mu]) * grad_h.at(&[mu])).sum();
            let rhs = e2h * (tau_b.at(&[a]) - (mf - 2.0) * dg);
            r2 = r2.max((tau_t.at(&[a]) - rhs).abs());
        }

        // τ̃^a_k = e^{3h}[τ^a_k − (m−2)φ^a_{ik}h^i − (m−2)φ^a_i h^i_k
        //          + 2τ^a h_k − 2(m−2)φ^a_i h^i h_k]
        let ntau_t = self.frame_tilde.components(&self.tilde.map.nabla_tau()?.values());
        let ntau_b = self.frame.components(&self.base.map.nabla_tau()?.values());
        let hess_h = self.frame.components(&self.h_obs.hess.values());
        let e3h = (3.0 * self.h_val).exp();
        let mut r3 = 0.0f64;
        for a in 0..n {
            for k in 0..m {
                let mut rhs = ntau_b.at(&[a, k]);
                for i in 0..m {
                    rhs -= (mf - 2.0) * hess_b.at(&[a, i, k]) * h_up[i];
                    rhs -= (mf - 2.0) * dphi_b.at(&[a, i]) * eta[i] * hess_h.at(&[i, k]);
                    rhs -= 2.0 * (mf - 2.0) * dphi_b.at(&[a, i]) * h_up[i] * h_lo[k];
                }
                rhs += 2.0 * tau_b.at(&[a]) * h_lo[k];
                r3 = r3.max((ntau_t.at(&[a, k]) - e3h * rhs).abs());
            }
        }
        Ok((r1, r2, r3))
    }

    /// Residual of the Schouten law (coordinate tensors, `f = (m−2)h`):
    /// `Ã^φ = A^φ + Hess f + (m−2)^{-1}(df⊗df − ½|∇f|² g)`.
    pub fn schouten_law_residual(&self) -> Result<f64> {
        let mf = self.mf();
        let a_t = self.tilde.a_phi()?;
        let a_b = self.base.a_phi()?;
        let ord = a_t.order().min(self.h_obs.hess.order());
        // f-objects from h-objects: f = (m−2) h
        let hess_f = self.h_obs.hess.scale(mf - 2.0).truncated(ord);
        let df = self.h_obs.df.truncated(ord);
        let m = self.m;
        let mut df2 = hess_f.clone();
        for i in 0..m {
            for j in 0..m {
                df2.set(
                    &[i, j],
                    df.at(&[i]).mul(df.at(&[j])).scale((mf - 2.0) * (mf - 2.0)),
                );
            }
        }
        let gsq_f = self
            .h_obs
            .grad_sq
            .at(&[])
            .truncated(ord)
            .scale((mf - 2.0) * (mf - 2.0));
        let rhs = a_b
            .add(&hess_f)
            .add(&df2.scale(1.0 / (mf - 2.0)))
            .sub(&self.base.geo.g.scale_jet(&gsq_f).scale(0.5 / (mf - 2.0)));
        Ok(a_t.sub(&rhs).max_abs_value())
    }

    /// Residual of the Cotton law in paired frames:
    /// `e^{−3h} C̃_{ijk} = C_{ijk} + W_{tijk} f^t` with `f = (m−2)h`.
    pub fn cotton_law_residual(&self) -> Result<f64> {
        let mf = self.mf();
        let m = self.m;
        let c_t = self.frame_tilde.components(&self.tilde.c_phi()?.values());
        let c_b = self.frame.components(&self.base.c_phi()?.values());
        let w_b = self.frame.components(&self.base.w_phi()?.values());
        let (_, h_up) = self.h_frame();
        let f_up: Vec<f64> = h_up.iter().map(|v| v * (mf - 2.0)).collect();
        let scale = (-3.0 * self.h_val).exp();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let mut rhs = c_b.at(&[i, j, k]);
                    for t in 0..m {
                        rhs += w_b.at(&[t, i, j, k]) * f_up[t];
                    }
                    worst = worst.max((scale * c_t.at(&[i, j, k]) - rhs).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Residual of Weyl conformal invariance as (0,4) coordinate tensors:
    /// `W̃^φ = e^{−2h} W^φ`.
    pub fn weyl_invariance_residual(&self) -> Result<f64> {
        let w_t = self.tilde.w_phi()?;
        let w_b = self.base.w_phi()?;
        let scale = (-2.0 * self.h_val).exp();
        Ok(w_t.sub(&w_b.scale(scale)).max_abs_value())
    }

    /// Residual of the law for `V_{ij} = g^{κτ}C_{ijκ,τ} − α[(R^φ)^κ_j φ^a_κ + τ^a_{,j}]φ^a_i`
    /// in paired frames.
    pub fn v_law_residual(&self) -> Result<f64> {
        let mf = self.mf();
        let m = self.m;
        let n = self.base.map.n;
        let v_t = self.frame_tilde.components(&self.tilde.v_tensor()?.values());
        let v_b = self.frame.components(&self.base.v_tensor()?.values());
        let c = self.frame.components(&self.base.c_phi()?.values());
        let w = self.frame.components(&self.base.w_phi()?.values());
        let hess_b = self.frame.components(&self.base.map.hess()?.values());
        let dphi = self.frame.components(&self.base.map.dphi.values());
        let tau = self.base.map.tau()?.values();
        let eta_phi: Vec<Vec<f64>> = self
            .base
            .map
            .eta_phi
            .iter()
            .map(|row| row.iter().map(|j| j.value()).collect())
            .collect();
        let (h_lo, h_up) = self.h_frame();
        let f_lo: Vec<f64> = h_lo.iter().map(|v| v * (mf - 2.0)).collect();
        let f_up: Vec<f64> = h_up.iter().map(|v| v * (mf - 2.0)).collect();
        let hess_h = self.frame.components(&self.h_obs.hess.values());
        let eta = &self.frame.eta;
        // f^{tk} in frame: (m−2) η^{tt'} η^{kk'} h_{t'k'}
        let mut f_uu = vec![vec![0.0; m]; m];
        for t in 0..m {
            for k in 0..m {
                f_uu[t][k] = (mf - 2.0) * eta[t] * eta[k] * hess_h.at(&[t, k]);
            }
        }
        let lap_f = (mf - 2.0) * self.h_obs.lap.at(&[]).value();
        let gsq_f = (mf - 2.0) * (mf - 2.0) * self.h_obs.grad_sq.at(&[]).value();
        let drift = lap_f - gsq_f;
        let scale = (-4.0 * self.h_val).exp();
        // target-contracted helpers (frame source indices, η_{ab} on targets)
        let pairing = |x: &Tensor, i: usize, y: &Tensor, j: usize| -> f64 {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += eta_phi[a][b] * x.at(&[a, i]) * y.at(&[b, j]);
                }
            }
            acc
        };
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let mut rhs = v_b.at(&[i, j]);
                for t in 0..m {
                    for k in 0..m {
                        rhs += f_uu[t][k] * w.at(&[t, i, j, k]);
                        rhs -= (mf - 5.0) / (mf - 2.0) * f_up[t] * f_up[k] * w.at(&[t, i, j, k]);
                    }
                }
                for k in 0..m {
                    rhs += (mf - 4.0) / (mf - 2.0)
                        * (c.at(&[j, k, i]) + c.at(&[i, k, j]))
                        * f_up[k];
                }
                // α φ^a_{ij} φ^a_k f^k
                let mut map_term = 0.0;
                for k in 0..m {
                    let mut hd = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            hd += eta_phi[a][b] * hess_b.at(&[a, i, j]) * dphi.at(&[b, k]);
                        }
                    }
                    map_term += hd * f_up[k];
                }
                // α/(m−2)[(φ^a_k f^k − τ^a)(φ^a_i f_j + φ^a_j f_i)
                //          − τ^a φ^a_k f^k η_{ij} − Δ_f f φ^a_i φ^a_j]
                let mut inner = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        let e_ab = eta_phi[a][b];
                        let dk: f64 = (0..m).map(|k| dphi.at(&[b, k]) * f_up[k]).sum();
                        inner += e_ab
                            * (dk - tau.at(&[b]))
                            * (dphi.at(&[a, i]) * f_lo[j] + dphi.at(&[a, j]) * f_lo[i]);
                    }
                }
                let tau_dk = pairing_tau(&eta_phi, &tau, &dphi, &f_up, n, m);
                if i == j {
                    inner -= tau_dk * eta[i];
                }
                inner -= drift * pairing(&dphi, i, &dphi, j);
                rhs += self.alpha * (map_term + inner / (mf - 2.0));
                worst = worst.max((scale * v_t.at(&[i, j]) - rhs).abs());
            }
        }
        Ok(worst)
    }

    /// Residual of the general-dimension Bach law in paired frames:
    /// `e^{−4h}(m−2)B̃_{ij} = (m−2)B_{ij} − (m−4)/(m−2) f^k(C_{ijk} + f^t W_{tijk} − C_{jki})`.
    pub fn bach_law_residual(&self) -> Result<f64> {
        let mf = self.mf();
        let m = self.m;
        let b_t = self.frame_tilde.components(&self.tilde.bach()?.values());
        let b_b = self.frame.components(&self.base.bach()?.values());
        let c = self.frame.components(&self.base.c_phi()?.values());
        let w = self.frame.components(&self.base.w_phi()?.values());
        let (_, h_up) = self.h_frame();
        let f_up: Vec<f64> = h_up.iter().map(|v| v * (mf - 2.0)).collect();
        let scale = (-4.0 * self.h_val).exp();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let mut corr = 0.0;
                for k in 0..m {
                    let mut inner = c.at(&[i, j, k]) - c.at(&[j, k, i]);
                    for t in 0..m {
                        inner += f_up[t] * w.at(&[t, i, j, k]);
                    }
                    corr += f_up[k] * inner;
                }
                let rhs = (mf - 2.0) * b_b.at(&[i, j]) - (mf - 4.0) / (mf - 2.0) * corr;
                worst = worst.max((scale * (mf - 2.0) * b_t.at(&[i, j]) - rhs).abs());
            }
        }
        Ok(worst)
    }

    /// Dimension-4 weighted invariance as coordinate tensors:
    /// `B̃^φ_{μν} = e^{2h} B^φ_{μν}` (with `f = 2h`, i.e. `B̃ = e^f B`).
    pub fn bach_invariance_residual(&self) -> Result<f64> {
        if self.m != 4 {
            return Err(Error::Dimension {
                dim: self.m,
                why: "coordinate Bach invariance is a dimension-4 statement",
            });
        }
        let b_t = self.tilde.bach()?;
        let b_b = self.base.bach()?;
        let scale = (2.0 * self.h_val).exp();
        Ok(b_t.sub(&b_b.scale(scale)).max_abs_value())
    }

    /// Pointwise Q-density identity in dimension 4 (densities relative to
    /// `μ_g`, with `g̃ = e^{−f}g`, `f = 2h`):
    /// `e^{−2f}(⅓(S̃^φ)² − |Ric̃^φ|² − α|τ̃|²) = ⅓(S^φ)² − |Ric^φ|² − α|τ|² + div(P)`.
    pub fn q_density_residual(&self) -> Result<f64> {
        if self.m != 4 {
            return Err(Error::Dimension {
                dim: self.m,
                why: "the Q-density identity is a dimension-4 statement",
            });
        }
        let lhs = {
            let q = q_scalar(&self.tilde)?;
            (-4.0 * self.h_val).exp() * q
        };
        let rhs = q_scalar(&self.base)? + self.div_p()?;
        Ok((lhs - rhs).abs())
    }

    /// `div_g P(f)` with
    /// `P = (S^φ + Δf − ½|∇f|²)∇f − (2Ric^φ + Hess f)(∇f,·)^♯`, `f = 2h`.
    fn div_p(&self) -> Result<f64> {
        let mf = self.mf();
        let geo = &self.base.geo;
        let m = self.m;
        // f-objects (f = (m−2)h = 2h in dimension 4)
        let c = mf - 2.0;
        let df = self.h_obs.df.scale(c);
        let grad_f = self.h_obs.grad.scale(c);
        let hess_f = self.h_obs.hess.scale(c);
        let lap_f = self.h_obs.lap.at(&[]).scale(c);
        let gsq_f = self.h_obs.grad_sq.at(&[]).scale(c * c);
        let ord = hess_f.order().min(self.base.ric_phi.order()) - 1; // room for one divergence
        let spv = crate::jets::space(df.space().vars, ord + 1);
        let _ = spv;
        let coeff = self
            .base
            .s_phi
            .at(&[])
            .truncated(ord + 1)
            .add(&lap_f.truncated(ord + 1))
            .sub(&gsq_f.truncated(ord + 1).scale(0.5));
        let mut p_vec = grad_f.truncated(ord + 1).scale_jet(&coeff);
        // − (2Ric^φ + Hess f)(∇f,·)^♯ : components (2R^φ_{μν} + f_{μν}) (∇f)^μ raised on ν
        let two_ric_hess = self
            .base
            .ric_phi
            .scale(2.0)
            .add(&hess_f)
            .truncated(ord + 1);
        let gradf_t = grad_f.truncated(ord + 1);
        let mut lowered = JetTensor::zeros(
            &[crate::geometry::Slot::Cov],
            m,
            0,
            two_ric_hess.space(),
        );
        for nu in 0..m {
            let mut acc = Jet::constant(0.0, two_ric_hess.space());
            for mu in 0..m {
                two_ric_hess
                    .at(&[mu, nu])
                    .mul_add_into(gradf_t.at(&[mu]), &mut acc);
            }
            lowered.set(&[nu], acc);
        }
        let raised = geo.raise(&lowered, 0);
        p_vec = p_vec.sub(&raised);
        // div P = ∇_μ P^μ
        let dp = geo.nabla(&p_vec)?;
        Ok(trace_pair(&dp, 0, 1).at(&[]).value())
    }

    /// Surface density law (m = 2): `e^{−2h} S̃^φ = S^φ + 2Δ_g h`.
    pub fn surface_density_residual(&self) -> Result<f64> {
        if self.m != 2 {
            return Err(Error::Dimension {
                dim: self.m,
                why: "the density law is a surface statement",
            });
        }
        let lhs = (-2.0 * self.h_val).exp() * self.tilde.s_phi.at(&[]).value();
        let rhs = self.base.s_phi.at(&[]).value() + 2.0 * self.h_obs.lap.at(&[]).value();
        Ok((lhs - rhs).abs())
    }
}

fn pairing_tau(
    eta_phi: &[Vec<f64>],
    tau: &Tensor,
    dphi: &Tensor,
    f_up: &[f64],
    n: usize,
    m: usize,
) -> f64 {
    let mut acc = 0.0;
    for a in 0..n {
        for b in 0..n {
            let dk: f64 = (0..m).map(|k| dphi.at(&[b, k]) * f_up[k]).sum();
            acc += eta_phi[a][b] * tau.at(&[a]) * dk;
        }
    }
    acc
}

/// `⅓(S^φ)² − |Ric^φ|² − α|τ|²` at a point (the Q-density against the
/// volume form of the same metric).
pub fn q_scalar(bundle: &PhiBundle) -> Result<f64> {
    let s = bundle.s_phi.at(&[]).value();
    let ric_up = bundle.geo.raise(&bundle.geo.raise(&bundle.ric_phi, 0), 1);
    let rv = bundle.ric_phi.values();
    let ru = ric_up.values();
    let m = bundle.m;
    let mut norm = 0.0;
    for i in 0..m {
        for j in 0..m {
            norm += rv.at(&[i, j]) * ru.at(&[i, j]);
        }
    }
    let tau_sq = bundle.map.tau_norm_sq()?.at(&[]).value();
    Ok(s * s / 3.0 - norm - bundle.alpha * tau_sq)
}

/// System residuals for "harmonic-Einstein after conformal change":
/// `((Ric^φ + Hess f + (m−2)^{-1} df⊗df)°, τ(φ) − dφ(∇f))`, plus the
/// directly recomputed defect on the rescaled metric.
pub struct ConformallyCoupledEinstein {
    pub traceless: f64,
    pub tension: f64,
    pub direct: (f64, f64),
}

pub fn conformally_harmonic_einstein_residual(
    g: &MetricField,
    map_field: &MapField,
    alpha: f64,
    f_field: &ScalarField,
    p: &[f64],
    order: usize,
) -> Result<ConformallyCoupledEinstein> {
    let m = g.dim();
    let mf = m as f64;
    let geo = GeomAt::new(g, p, order)?;
    let map = MapAt::new(&geo, map_field)?;
    let f_obs = geo.scalar_obs(f_field)?;
    let bundle = PhiBundle::from_parts(geo, map, alpha)?;

    let ord = f_obs.hess.order().min(bundle.ric_phi.order());
    let df = f_obs.df.truncated(ord);
    let mut df2 = f_obs.hess.truncated(ord);
    for i in 0..m {
        for j in 0..m {
            df2.set(&[i, j], df.at(&[i]).mul(df.at(&[j])));
        }
    }
    let sym = bundle
        .ric_phi
        .add(&f_obs.hess)
        .add(&df2.scale(1.0 / (mf - 2.0)));
    let tr = bundle.geo.trace_g(&sym, 0, 1);
    let traceless = sym
        .sub(&bundle.geo.g.scale_jet(tr.at(&[])).scale(1.0 / mf))
        .max_abs_value();

    let tau = bundle.map.tau()?.values();
    let dphi = bundle.map.dphi.values();
    let grad_f = f_obs.grad.values();
    let n = bundle.map.n;
    let mut tension = 0.0f64;
    for a in 0..n {
        let dg: f64 = (0..m).map(|mu| dphi.at(&[a, mu]) * grad_f.at(&[mu])).sum();
        tension = tension.max((tau.at(&[a]) - dg).abs());
    }

    // direct recomputation on g̃ = e^{−2f/(m−2)} g
    let pair = ConformalPair::from_f(g.clone(), f_field);
    let tilde_geo = GeomAt::new(&pair.tilde, p, order)?;
    let tilde_map = MapAt::new(&tilde_geo, map_field)?;
    let tilde = PhiBundle::from_parts(tilde_geo, tilde_map, alpha)?;
    let direct = tilde.harmonic_einstein_residual()?;

    Ok(ConformallyCoupledEinstein {
        traceless,
        tension,
        direct,
    })
}
