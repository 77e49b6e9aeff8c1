//! P1 Lagrange elements on the reference simplex and their tabulation at the
//! points of a quadrature rule.
//!
//! The reference simplex has its vertices at the origin and the unit axis
//! points, so its volume is `1/2` in 2D and `1/6` in 3D.

use crate::mesh::check_dim;
use crate::{Error, Result};

const DOMAIN_TOL: f64 = 1e-12;

pub fn reference_volume(dim: usize) -> f64 {
    match dim {
        2 => 0.5,
        3 => 1.0 / 6.0,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Values and reference gradients of the P1 basis at a point.
///
/// `gradients` is row-major `[basis][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub gradients: Vec<f64>,
}

pub fn p1_basis(dim: usize, point: &[f64]) -> Result<BasisEval> {
    check_dim(dim)?;
    if point.len() != dim {
        return Err(Error::Shape {
            what: "reference point",
            expected: dim,
            actual: point.len(),
        });
    }
    let lead = 1.0 - point.iter().sum::<f64>();
    let inside = point.iter().all(|&x| x >= -DOMAIN_TOL) && lead >= -DOMAIN_TOL;
    if !inside || point.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain {
            point: point.to_vec(),
        });
    }
    let mut values = Vec::with_capacity(dim + 1);
    values.push(lead);
    values.extend_from_slice(point);

    let mut gradients = vec![0.0; (dim + 1) * dim];
    gradients[..dim].fill(-1.0);
    for k in 0..dim {
        gradients[(k + 1) * dim + k] = 1.0;
    }
    Ok(BasisEval { values, gradients })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds a rule from flat `[q][k]` points and weights. Weights must be
    /// positive and sum to the reference volume.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if weights.is_empty() || points.len() != weights.len() * dim {
            return Err(Error::Shape {
                what: "quadrature points",
                expected: weights.len() * dim,
                actual: points.len(),
            });
        }
        if weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::Configuration(
                "quadrature weights must be positive".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - reference_volume(dim)).abs() > 1e-14 {
            return Err(Error::Configuration(format!(
                "quadrature weights sum to {sum}, expected the reference volume {}",
                reference_volume(dim)
            )));
        }
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, q: usize) -> f64 {
        self.weights[q]
    }
}

/// Quadrature rule of the given polynomial order. Only the one-point
/// barycentric rule (order 1) is provided.
pub fn quadrature_rule(dim: usize, order: usize) -> Result<QuadratureRule> {
    check_dim(dim)?;
    if order != 1 {
        return Err(Error::Capability(format!(
            "quadrature order {order} (only order 1 is available)"
        )));
    }
    let bary = 1.0 / (dim + 1) as f64;
    QuadratureRule::new(dim, vec![bary; dim], vec![reference_volume(dim)])
}

/// Basis values `B[q][b]` and reference derivatives `D[q][b][k]` at the
/// points of a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulation {
    dim: usize,
    n_b: usize,
    n_q: usize,
    basis: Vec<f64>,
    basis_der: Vec<f64>,
}

impl Tabulation {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    #[inline]
    pub fn value(&self, q: usize, b: usize) -> f64 {
        self.basis[q * self.n_b + b]
    }

    /// Reference gradient of basis `b` at point `q`, length `dim`.
    #[inline]
    pub fn derivative(&self, q: usize, b: usize) -> &[f64] {
        let off = (q * self.n_b + b) * self.dim;
        &self.basis_der[off..off + self.dim]
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn basis_der(&self) -> &[f64] {
        &self.basis_der
    }
}

pub fn tabulate(dim: usize, rule: &QuadratureRule) -> Result<Tabulation> {
    check_dim(dim)?;
    if rule.dim() != dim {
        return Err(Error::Shape {
            what: "quadrature rule dimension",
            expected: dim,
            actual: rule.dim(),
        });
    }
    let n_b = dim + 1;
    let n_q = rule.n_points();
    let mut basis = Vec::with_capacity(n_q * n_b);
    let mut basis_der = Vec::with_capacity(n_q * n_b * dim);
    for q in 0..n_q {
        let eval = p1_basis(dim, rule.point(q))?;
        basis.extend(eval.values);
        basis_der.extend(eval.gradients);
    }
    Ok(Tabulation {
        dim,
        n_b,
        n_q,
        basis,
        basis_der,
    })
}
