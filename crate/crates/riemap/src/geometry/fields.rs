//! Charts and closed-form fields: scalar fields, symmetric 2-tensor fields
//! and metric fields (expression matrices plus the conformal / perturbed /
//! warped combinators the verification suites need).

use crate::expr::Expr;
use crate::jets::{Jet, JetSpace};
use crate::{Error, Result};

/// A single coordinate chart: dimension, per-axis domain, per-axis
/// periodicity and metric signature `(positive, negative)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub dim: usize,
    /// Per-axis closed interval; for periodic axes the length is the period.
    pub intervals: Vec<(f64, f64)>,
    pub periodic: Vec<bool>,
    /// Signature as (number of positive, number of negative) directions.
    pub signature: (usize, usize),
}

impl Chart {
    /// Fully periodic flat-torus chart with period 2π per axis, Riemannian
    /// signature.
    pub fn torus(dim: usize) -> Chart {
        Chart {
            dim,
            intervals: vec![(0.0, std::f64::consts::TAU); dim],
            periodic: vec![true; dim],
            signature: (dim, 0),
        }
    }

    /// Non-periodic box chart, Riemannian signature.
    pub fn boxed(dim: usize, half_width: f64) -> Chart {
        Chart {
            dim,
            intervals: vec![(-half_width, half_width); dim],
            periodic: vec![false; dim],
            signature: (dim, 0),
        }
    }

    pub fn with_signature(mut self, positive: usize, negative: usize) -> Chart {
        assert_eq!(positive + negative, self.dim, "signature entries must sum to dim");
        self.signature = (positive, negative);
        self
    }

    pub fn is_fully_periodic(&self) -> bool {
        self.periodic.iter().all(|&p| p)
    }

    pub fn is_riemannian(&self) -> bool {
        self.signature.1 == 0
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        if p.len() != self.dim {
            return false;
        }
        p.iter().zip(&self.intervals).zip(&self.periodic).all(
            |((&x, &(lo, hi)), &per)| per || (x >= lo - 1e-12 && x <= hi + 1e-12),
        )
    }

    /// Product chart of base and fiber; signature blocks concatenate.
    pub fn product(&self, fiber: &Chart) -> Chart {
        Chart {
            dim: self.dim + fiber.dim,
            intervals: self
                .intervals
                .iter()
                .chain(&fiber.intervals)
                .copied()
                .collect(),
            periodic: self.periodic.iter().chain(&fiber.periodic).copied().collect(),
            signature: (
                self.signature.0 + fiber.signature.0,
                self.signature.1 + fiber.signature.1,
            ),
        }
    }
}

/// Closed-form scalar field on a chart.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub expr: Expr,
    pub dim: usize,
}

impl ScalarField {
    pub fn new(expr: Expr, dim: usize) -> Result<ScalarField> {
        if let Some(v) = expr.max_var() {
            if v >= dim {
                return Err(Error::VarIndex(v, dim));
            }
        }
        Ok(ScalarField { expr, dim })
    }

    pub fn parse(text: &str, dim: usize) -> Result<ScalarField> {
        ScalarField::new(Expr::parse(text)?, dim)
    }

    pub fn constant(value: f64, dim: usize) -> ScalarField {
        ScalarField {
            expr: Expr::Const(value),
            dim,
        }
    }

    pub fn eval_jet(&self, p: &[f64], sp: &'static JetSpace) -> Result<Jet> {
        self.expr.eval_jet(p, sp)
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        self.expr.eval_f64(p)
    }
}

/// Symmetric matrix of expressions (a 2-tensor field used for metrics and
/// metric-direction perturbations).
#[derive(Clone, Debug)]
pub struct SymExprMatrix {
    pub dim: usize,
    pub entries: Vec<Vec<Expr>>,
}

impl SymExprMatrix {
    pub fn new(entries: Vec<Vec<Expr>>) -> Result<SymExprMatrix> {
        let dim = entries.len();
        for row in &entries {
            if row.len() != dim {
                return Err(Error::Scenario("metric matrix is not square".into()));
            }
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if entries[i][j] != entries[j][i] {
                    return Err(Error::Scenario(format!(
                        "matrix entries ({i},{j}) and ({j},{i}) differ structurally; \
                         symmetric fields must use identical expressions"
                    )));
                }
            }
        }
        Ok(SymExprMatrix { dim, entries })
    }

    pub fn parse(rows: &[Vec<&str>]) -> Result<SymExprMatrix> {
        let entries = rows
            .iter()
            .map(|row| row.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        SymExprMatrix::new(entries)
    }

    pub fn identity(dim: usize) -> SymExprMatrix {
        let entries = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| Expr::Const(if i == j { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        SymExprMatrix { dim, entries }
    }

    pub fn eval_jet(&self, p: &[f64], sp: &'static JetSpace) -> Result<Vec<Vec<Jet>>> {
        let mut out = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let mut row = Vec::with_capacity(self.dim);
            for j in 0..self.dim {
                if j < i {
                    let prev: &Vec<Jet> = &out[j];
                    row.push(prev[i].clone());
                } else {
                    row.push(self.entries[i][j].eval_jet(p, sp)?);
                }
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// A metric field on a chart. Beyond plain expression matrices, the engine
/// composes fields: conformal rescaling, straight-line perturbations
/// (`g + t·h`) and warped products, all still jet-evaluable.
#[derive(Clone, Debug)]
pub struct MetricField {
    pub chart: Chart,
    pub source: MetricSource,
}

#[derive(Clone, Debug)]
pub enum MetricSource {
    Exprs(SymExprMatrix),
    /// `e^{-2h} g`.
    Conformal {
        base: Box<MetricField>,
        h: ScalarField,
    },
    /// `g + t·h`.
    Perturbed {
        base: Box<MetricField>,
        dir: SymExprMatrix,
        t: f64,
    },
    /// Block metric `g ⊕ u² g_F` on a product chart. The fiber expressions
    /// must already be shifted onto the product coordinates.
    Warped {
        base: Box<MetricField>,
        fiber: SymExprMatrix,
        fiber_dim: usize,
        u: ScalarField,
    },
}

impl MetricField {
    pub fn from_exprs(chart: Chart, entries: SymExprMatrix) -> Result<MetricField> {
        if entries.dim != chart.dim {
            return Err(Error::Scenario(format!(
                "metric matrix dim {} does not match chart dim {}",
                entries.dim, chart.dim
            )));
        }
        for row in &entries.entries {
            for e in row {
                if let Some(v) = e.max_var() {
                    if v >= chart.dim {
                        return Err(Error::VarIndex(v, chart.dim));
                    }
                }
            }
        }
        Ok(MetricField {
            chart,
            source: MetricSource::Exprs(entries),
        })
    }

    pub fn flat(chart: Chart) -> MetricField {
        let id = SymExprMatrix::identity(chart.dim);
        MetricField {
            chart,
            source: MetricSource::Exprs(id),
        }
    }

    /// Flat semi-Euclidean metric matching the chart signature: +1 entries
    /// first, then −1.
    pub fn flat_signature(chart: Chart) -> MetricField {
        let dim = chart.dim;
        let pos = chart.signature.0;
        let entries = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| {
                        Expr::Const(if i == j {
                            if i < pos {
                                1.0
                            } else {
                                -1.0
                            }
                        } else {
                            0.0
                        })
                    })
                    .collect()
            })
            .collect();
        MetricField {
            chart,
            source: MetricSource::Exprs(SymExprMatrix { dim, entries }),
        }
    }

    /// Round-sphere metric of sectional curvature `k > 0` in the standard
    /// rational chart `4/k (1 + |x|²)^{-2} δ` on a box.
    pub fn sphere(dim: usize, k: f64, half_width: f64) -> MetricField {
        let chart = Chart::boxed(dim, half_width);
        let r2 = (1..=dim)
            .map(|i| format!("x{i}^2"))
            .collect::<Vec<_>>()
            .join(" + ");
        let conf = format!("{:?}/(1 + {r2})^2", 4.0 / k);
        let entries = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| {
                        if i == j {
                            Expr::parse(&conf).unwrap()
                        } else {
                            Expr::Const(0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        MetricField {
            chart,
            source: MetricSource::Exprs(SymExprMatrix { dim, entries }),
        }
    }

    pub fn conformal(self, h: ScalarField) -> MetricField {
        assert_eq!(h.dim, self.chart.dim);
        let chart = self.chart.clone();
        MetricField {
            chart,
            source: MetricSource::Conformal {
                base: Box::new(self),
                h,
            },
        }
    }

    /// Block metric `g ⊕ u² g_F` on the product chart. The fiber metric must
    /// be expression-sourced; its coordinates are relabeled after the base's.
    pub fn warped(self, fiber: &MetricField, u: ScalarField) -> crate::Result<MetricField> {
        let m = self.dim();
        assert_eq!(u.dim, m, "warping function lives on the base");
        let fiber_exprs = match &fiber.source {
            MetricSource::Exprs(e) => e,
            _ => {
                return Err(crate::Error::Scenario(
                    "warped fiber metric must be expression-sourced".into(),
                ))
            }
        };
        let d = fiber.dim();
        let shifted = SymExprMatrix {
            dim: d,
            entries: fiber_exprs
                .entries
                .iter()
                .map(|row| row.iter().map(|e| e.shift_vars(m)).collect())
                .collect(),
        };
        let chart = self.chart.product(&fiber.chart);
        Ok(MetricField {
            chart,
            source: MetricSource::Warped {
                base: Box::new(self),
                fiber: shifted,
                fiber_dim: d,
                u,
            },
        })
    }

    pub fn perturbed(self, dir: SymExprMatrix, t: f64) -> MetricField {
        assert_eq!(dir.dim, self.chart.dim);
        let chart = self.chart.clone();
        MetricField {
            chart,
            source: MetricSource::Perturbed {
                base: Box::new(self),
                dir,
                t,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.chart.dim
    }

    /// Evaluate the full symmetric matrix `g_{μν}` as jets at `p`.
    pub fn eval_jet(&self, p: &[f64], sp: &'static JetSpace) -> Result<Vec<Vec<Jet>>> {
        match &self.source {
            MetricSource::Exprs(m) => m.eval_jet(p, sp),
            MetricSource::Conformal { base, h } => {
                let g = base.eval_jet(p, sp)?;
                let factor = h.eval_jet(p, sp)?.scale(-2.0).exp();
                Ok(g
                    .into_iter()
                    .map(|row| row.into_iter().map(|e| e.mul(&factor)).collect())
                    .collect())
            }
            MetricSource::Perturbed { base, dir, t } => {
                let g = base.eval_jet(p, sp)?;
                let h = dir.eval_jet(p, sp)?;
                Ok(g
                    .into_iter()
                    .zip(h)
                    .map(|(grow, hrow)| {
                        grow.into_iter()
                            .zip(hrow)
                            .map(|(ge, he)| ge.add(&he.scale(*t)))
                            .collect()
                    })
                    .collect())
            }
            MetricSource::Warped {
                base,
                fiber,
                fiber_dim,
                u,
            } => {
                let m = base.dim();
                let d = *fiber_dim;
                let dim = m + d;
                let gb = base.eval_jet(p, sp)?;
                let gf = fiber.eval_jet(p, sp)?;
                let uj = u.eval_jet(p, sp)?;
                let u2 = uj.mul(&uj);
                let zero = Jet::constant(0.0, sp);
                let mut out = vec![vec![zero; dim]; dim];
                for i in 0..m {
                    for j in 0..m {
                        out[i][j] = gb[i][j].clone();
                    }
                }
                for a in 0..d {
                    for b in 0..d {
                        out[m + a][m + b] = gf[a][b].mul(&u2);
                    }
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::space;

    #[test]
    fn chart_product_concatenates() {
        let base = Chart::torus(2);
        let fiber = Chart::torus(1).with_signature(0, 1);
        let p = base.product(&fiber);
        assert_eq!(p.dim, 3);
        assert_eq!(p.signature, (2, 1));
        assert!(p.is_fully_periodic());
    }

    #[test]
    fn non_symmetric_matrix_rejected() {
        let rows = vec![
            vec![Expr::Const(1.0), Expr::Const(0.5)],
            vec![Expr::Const(0.0), Expr::Const(1.0)],
        ];
        assert!(SymExprMatrix::new(rows).is_err());
    }

    #[test]
    fn conformal_field_scales_entries() {
        let g = MetricField::flat(Chart::torus(2));
        let h = ScalarField::parse("sin(x1)", 2).unwrap();
        let gt = g.conformal(h);
        let sp = space(2, 1);
        let m = gt.eval_jet(&[0.3, 0.0], sp).unwrap();
        let expect = (-2.0 * 0.3f64.sin()).exp();
        assert!((m[0][0].value() - expect).abs() < 1e-15);
        assert!((m[1][1].value() - expect).abs() < 1e-15);
        assert!(m[0][1].value().abs() < 1e-15);
    }

    #[test]
    fn sphere_metric_value() {
        let g = MetricField::sphere(2, 1.0, 0.8);
        let sp = space(2, 0);
        let m = g.eval_jet(&[0.3, 0.1], sp).unwrap();
        let r2: f64 = 0.3 * 0.3 + 0.1 * 0.1;
        let expect = 4.0 / (1.0 + r2).powi(2);
        assert!((m[0][0].value() - expect).abs() < 1e-14);
    }
}
