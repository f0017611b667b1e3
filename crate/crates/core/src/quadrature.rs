//! Quadrature rules on the reference triangle and the reference edge.
//!
//! Edge rules are Gauss-Legendre on [-1, 1]. Triangle rules use the collapsed
//! (Duffy) tensor construction, which is exact to any requested total degree
//! within the supported range and has strictly positive weights.

use crate::error::{Error, Result};

/// Largest total degree the triangle rule factory supports.
pub const MAX_TRIANGLE_DEGREE: usize = 30;
/// Largest degree the edge rule factory supports.
pub const MAX_EDGE_DEGREE: usize = 47;

/// Quadrature on the reference triangle {x, y >= 0, x + y <= 1},
/// points stored in barycentric coordinates against vertices
/// (0,0), (1,0), (0,1).
#[derive(Debug, Clone)]
pub struct TriangleQuadrature {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

/// Gauss rule on the reference edge [-1, 1].
#[derive(Debug, Clone)]
pub struct EdgeQuadrature {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, t);
        nodes[n - 1 - i] = t;
        weights[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    // symmetrize to the last bit
    for i in 0..n / 2 {
        let a = nodes[i];
        let b = nodes[n - 1 - i];
        let m = 0.5 * (a - b);
        nodes[i] = m;
        nodes[n - 1 - i] = -m;
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (p0 - t * p1) / (1.0 - t * t);
    (p1, dp)
}

/// Rule exact for all polynomials of total degree <= `degree` on the
/// reference triangle.
pub fn quadrature_triangle(degree: usize) -> Result<TriangleQuadrature> {
    if degree > MAX_TRIANGLE_DEGREE {
        return Err(Error::Capability(format!(
            "triangle quadrature supports degree <= {MAX_TRIANGLE_DEGREE}, requested {degree}"
        )));
    }
    // Duffy map x = u, y = v (1 - u): the Jacobian (1 - u) raises the
    // u-degree by one, hence the +2.
    let n = degree / 2 + 1;
    let n_u = (degree + 2).div_ceil(2);
    let (gu, wu) = gauss_legendre(n_u);
    let (gv, wv) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n_u * n);
    let mut weights = Vec::with_capacity(n_u * n);
    for (ui, uw) in gu.iter().zip(&wu) {
        let u = 0.5 * (ui + 1.0);
        for (vi, vw) in gv.iter().zip(&wv) {
            let v = 0.5 * (vi + 1.0);
            let x = u;
            let y = v * (1.0 - u);
            points.push([1.0 - x - y, x, y]);
            weights.push(uw * vw * 0.25 * (1.0 - u));
        }
    }
    Ok(TriangleQuadrature {
        points,
        weights,
        exact_degree: degree,
    })
}

/// Gauss rule on [-1, 1] exact for polynomials of degree <= `degree`.
pub fn quadrature_edge(degree: usize) -> Result<EdgeQuadrature> {
    if degree > MAX_EDGE_DEGREE {
        return Err(Error::Capability(format!(
            "edge quadrature supports degree <= {MAX_EDGE_DEGREE}, requested {degree}"
        )));
    }
    let n = (degree + 1).div_ceil(2).max(1);
    let (points, weights) = gauss_legendre(n);
    Ok(EdgeQuadrature {
        points,
        weights,
        exact_degree: degree,
    })
}

impl TriangleQuadrature {
    /// Integrates `f` (given barycentric coordinates) over the reference triangle.
    pub fn integrate_ref(&self, mut f: impl FnMut(&[f64; 3]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

impl EdgeQuadrature {
    pub fn integrate_ref(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&t, w)| w * f(t))
            .sum()
    }
}
