//! Independent verification paths: Richardson-extrapolated finite
//! differences for any scalar field, the constant-curvature closed form for
//! the Riemann tensor, and a classical (map-free) curvature pipeline used to
//! check that every coupled object reduces to its classical counterpart when
//! the map is constant.

use crate::geometry::{GeomAt, JetTensor, Slot, Tensor};
use crate::jets::space;
use crate::phicurv::{kulkarni_nomizu, PhiBundle};
use crate::{Error, Result};

/// Central-difference stencils per axis, composed across axes, then two
/// Richardson levels over step halvings. Limited to total order ≤ 3; beyond
/// that double precision has nothing left to extrapolate.
pub fn fd_partial<F>(f: F, p: &[f64], gamma: &[usize], step: f64) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let total: usize = gamma.iter().sum();
    if total > 3 {
        return Err(Error::Domain {
            op: "fd_partial",
            msg: format!("finite differences limited to order ≤ 3, got {total}"),
        });
    }
    let d = |h: f64| stencil_eval(&f, p, gamma, h);
    let d1 = d(step);
    let d2 = d(step / 2.0);
    let d3 = d(step / 4.0);
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d3 - d2) / 3.0;
    let value = (16.0 * r2 - r1) / 15.0;
    let err = (value - r2).abs().max(f64::EPSILON * value.abs());
    Ok((value, err))
}

/// Apply the 1-D central stencil for the `e`-th derivative recursively over
/// the axes with nonzero exponent.
fn stencil_eval<F>(f: &F, p: &[f64], gamma: &[usize], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    match gamma.iter().position(|&e| e > 0) {
        None => f(p),
        Some(axis) => {
            let e = gamma[axis];
            let mut rest = gamma.to_vec();
            rest[axis] = 0;
            let eval = |offset: f64| {
                let mut q = p.to_vec();
                q[axis] += offset;
                stencil_eval(f, &q, &rest, h)
            };
            match e {
                1 => (eval(h) - eval(-h)) / (2.0 * h),
                2 => (eval(h) - 2.0 * eval(0.0) + eval(-h)) / (h * h),
                3 => (eval(2.0 * h) - 2.0 * eval(h) + 2.0 * eval(-h) - eval(-2.0 * h))
                    / (2.0 * h * h * h),
                _ => unreachable!("order above 3 rejected earlier"),
            }
        }
    }
}

/// Closed-form constant-curvature Riemann tensor
/// `R_{μνκτ} = K (g_{μκ} g_{ντ} − g_{μτ} g_{νκ})` from the metric value.
pub fn constant_curvature_riemann(g: &Tensor, k: f64) -> Tensor {
    let m = g.dims[0];
    let mut out = Tensor::zeros(&[Slot::Cov; 4], m, 0);
    for mu in 0..m {
        for nu in 0..m {
            for ka in 0..m {
                for ta in 0..m {
                    let v = k * (g.at(&[mu, ka]) * g.at(&[nu, ta])
                        - g.at(&[mu, ta]) * g.at(&[nu, ka]));
                    out.set(&[mu, nu, ka, ta], v);
                }
            }
        }
    }
    out
}

/// Classical curvature objects computed with no reference to any map: the
/// α-free path every coupled tensor must reduce to for constant maps.
pub struct ClassicalBundle {
    pub m: usize,
    pub ric: JetTensor,
    pub scal: JetTensor,
    pub schouten: JetTensor,
    pub cotton: Option<JetTensor>,
    pub weyl: JetTensor,
    pub bach: Option<JetTensor>,
}

impl ClassicalBundle {
    pub fn new(geo: &GeomAt) -> Result<ClassicalBundle> {
        let m = geo.dim;
        if m < 3 {
            return Err(Error::Dimension {
                dim: m,
                why: "classical Schouten/Weyl need m ≥ 3",
            });
        }
        let mf = m as f64;
        let ric = geo.ricci()?.clone();
        let scal = geo.scalar()?.clone();
        let schouten = ric.sub(
            &geo.g
                .scale_jet(scal.at(&[]))
                .scale(1.0 / (2.0 * (mf - 1.0))),
        );
        let weyl = geo
            .riemann()?
            .sub(&kulkarni_nomizu(&schouten, &geo.g).scale(1.0 / (mf - 2.0)));
        let mut cotton = None;
        let mut bach = None;
        if geo.order >= 3 {
            let na = geo.nabla(&schouten)?;
            let mut c = JetTensor::zeros(&[Slot::Cov; 3], m, 0, na.space());
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        c.set(&[i, j, k], na.at(&[i, j, k]).sub(na.at(&[i, k, j])));
                    }
                }
            }
            if geo.order >= 4 {
                // (m−2) B_{ij} = g^{kt} C_{ijk,t} + (Ric)^{tk} W_{tikj}
                let nc = geo.nabla(&c)?;
                let div_c = geo.trace_g(&nc, 2, 3);
                let ric_up = geo.raise(&geo.raise(&ric, 0), 1);
                let ord = div_c.order();
                let sp = space(div_c.space().vars, ord);
                let rup = ric_up.truncated(ord);
                let w = weyl.truncated(ord);
                let mut b = JetTensor::zeros(&[Slot::Cov, Slot::Cov], m, 0, sp);
                for i in 0..m {
                    for j in 0..m {
                        let mut acc = div_c.at(&[i, j]).clone();
                        for t in 0..m {
                            for k in 0..m {
                                rup.at(&[t, k]).mul_add_into(w.at(&[t, i, k, j]), &mut acc);
                            }
                        }
                        b.set(&[i, j], acc.scale(1.0 / (mf - 2.0)));
                    }
                }
                bach = Some(b);
            }
            cotton = Some(c);
        }
        Ok(ClassicalBundle {
            m,
            ric,
            scal,
            schouten,
            cotton,
            weyl,
            bach,
        })
    }
}

/// Max-abs deviations of the coupled objects from their classical
/// counterparts. Only meaningful when the bundle's map is constant.
pub struct ClassicalComparison {
    pub ric: f64,
    pub schouten: f64,
    pub cotton: Option<f64>,
    pub weyl: f64,
    pub bach: Option<f64>,
}

impl ClassicalComparison {
    pub fn worst(&self) -> f64 {
        [
            self.ric,
            self.schouten,
            self.cotton.unwrap_or(0.0),
            self.weyl,
            self.bach.unwrap_or(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Compare the coupled curvature of `bundle` against the classical path.
pub fn classical_limit(bundle: &PhiBundle) -> Result<ClassicalComparison> {
    let classical = ClassicalBundle::new(&bundle.geo)?;
    let cotton = match (bundle.c_phi(), &classical.cotton) {
        (Ok(c), Some(cc)) => Some(c.sub(cc).max_abs_value()),
        _ => None,
    };
    let bach = match (bundle.bach(), &classical.bach) {
        (Ok(b), Some(cb)) => Some(b.sub(cb).max_abs_value()),
        _ => None,
    };
    Ok(ClassicalComparison {
        ric: bundle.ric_phi.sub(&classical.ric).max_abs_value(),
        schouten: bundle.a_phi()?.sub(&classical.schouten).max_abs_value(),
        cotton,
        weyl: bundle.w_phi()?.sub(&classical.weyl).max_abs_value(),
        bach,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Chart, MetricField, SymExprMatrix};
    use crate::phimap::{MapField, TargetGeometry};
    use approx::assert_abs_diff_eq;

    #[test]
    fn fd_first_derivative_of_sine() {
        let f = |p: &[f64]| p[0].sin();
        let (v, err) = fd_partial(f, &[0.3], &[1], 1e-2).unwrap();
        assert_abs_diff_eq!(v, 0.3f64.cos(), epsilon = 1e-10);
        assert!(err < 1e-8);
    }

    #[test]
    fn fd_mixed_second_derivative() {
        let f = |p: &[f64]| p[0] * p[1];
        let (v, _) = fd_partial(f, &[0.7, -0.2], &[1, 1], 1e-2).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn fd_rejects_high_order() {
        let f = |p: &[f64]| p[0];
        assert!(fd_partial(f, &[0.0], &[4], 1e-2).is_err());
    }

    #[test]
    fn fd_matches_jets_on_composed_expression() {
        let e = crate::expr::Expr::parse("exp(0.3*sin(x1 + 2*x2))/(2 + cos(x2))").unwrap();
        let p = [0.4, 1.1];
        let jet = e.eval_jet(&p, space(2, 3)).unwrap();
        for gamma in [[1usize, 0], [0, 1], [2, 0], [1, 1], [2, 1], [0, 3]] {
            let f = |q: &[f64]| e.eval_f64(q).unwrap();
            let (fd, _) = fd_partial(f, &p, &gamma, 1e-2).unwrap();
            let exact = jet
                .extract(&crate::jets::MultiIndex::from_slice(&gamma))
                .unwrap();
            let denom = exact.abs().max(1.0);
            assert!(
                ((fd - exact) / denom).abs() < 1e-7,
                "γ={gamma:?}: fd {fd} vs jet {exact}"
            );
        }
    }

    #[test]
    fn constant_curvature_matches_engine_on_spheres() {
        for (dim, k) in [(2, 1.0), (3, 1.0), (2, 4.0)] {
            let g = MetricField::sphere(dim, k, 0.8);
            let p = vec![0.21; dim];
            let geo = GeomAt::new(&g, &p, 2).unwrap();
            let engine = geo.riemann().unwrap().values();
            let oracle = constant_curvature_riemann(&geo.g.values(), k);
            let diff = engine.sub(&oracle).max_abs();
            assert!(diff < 1e-10, "dim {dim} k {k}: {diff}");
        }
    }

    #[test]
    fn hyperbolic_ball_matches_constant_curvature() {
        // Poincaré ball: g = 4 (1 − |x|²)^{-2} δ has K = −1.
        let dim = 2;
        let chart = Chart::boxed(dim, 0.7);
        let g = MetricField::from_exprs(
            chart,
            SymExprMatrix::parse(&[
                vec!["4/(1 - x1^2 - x2^2)^2", "0"],
                vec!["0", "4/(1 - x1^2 - x2^2)^2"],
            ])
            .unwrap(),
        )
        .unwrap();
        let geo = GeomAt::new(&g, &[0.2, -0.3], 2).unwrap();
        let engine = geo.riemann().unwrap().values();
        let oracle = constant_curvature_riemann(&geo.g.values(), -1.0);
        assert!(engine.sub(&oracle).max_abs() < 1e-10);
    }

    #[test]
    fn zero_curvature_oracle_is_zero() {
        let g = MetricField::flat(Chart::torus(3));
        let geo = GeomAt::new(&g, &[0.0; 3], 2).unwrap();
        let oracle = constant_curvature_riemann(&geo.g.values(), 0.0);
        assert_eq!(oracle.max_abs(), 0.0);
    }

    #[test]
    fn classical_limit_on_constant_map() {
        let g = MetricField::from_exprs(
            Chart::torus(4),
            SymExprMatrix::parse(&[
                vec!["1 + 0.2*sin(x1 + x2)", "0.1*cos(x3)", "0", "0"],
                vec!["0.1*cos(x3)", "1 + 0.1*cos(x2)", "0.05*sin(x4)", "0"],
                vec!["0", "0.05*sin(x4)", "1 + 0.15*sin(x3 + x1)", "0"],
                vec!["0", "0", "0", "1 + 0.1*cos(x1 + x4)"],
            ])
            .unwrap(),
        )
        .unwrap();
        let phi = MapField::constant(4, TargetGeometry::flat_torus(2), &[0.3, 0.9]);
        let bundle = PhiBundle::new(&g, &phi, 1.7, &[0.8, 2.5, 1.1, 0.2], 4).unwrap();
        let cmp = classical_limit(&bundle).unwrap();
        assert!(cmp.worst() < 1e-12, "classical reduction {}", cmp.worst());
        assert!(cmp.bach.is_some());
    }
}
