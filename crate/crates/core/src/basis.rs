//! Legendre polynomials, local modal shape functions, and the nonconforming
//! bubble functions that complete the Crouzeix-Raviart span.
//!
//! All shape functions are expressed through barycentric coordinates, so a
//! single evaluation path serves reference and physical cells alike.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::TriangleQuadrature;

/// Value of the Legendre polynomial of degree `k` at `x`, normalized so that
/// the value at 1 is 1 for every degree.
pub fn legendre_eval(k: usize, x: f64) -> f64 {
    legendre_pair(k, x).0
}

/// Derivative of the Legendre polynomial of degree `k` at `x`.
pub fn legendre_deriv(k: usize, x: f64) -> f64 {
    legendre_pair(k, x).1
}

/// Value and derivative together, via the three-term recurrence.
pub fn legendre_pair(k: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut d0) = (1.0, 0.0);
    if k == 0 {
        return (p0, d0);
    }
    let (mut p1, mut d1) = (x, 1.0);
    for n in 1..k {
        let nf = n as f64;
        let p2 = ((2.0 * nf + 1.0) * x * p1 - nf * p0) / (nf + 1.0);
        let d2 = ((2.0 * nf + 1.0) * (p1 + x * d1) - nf * d0) / (nf + 1.0);
        p0 = p1;
        d0 = d1;
        p1 = p2;
        d1 = d2;
    }
    (p1, d1)
}

/// dim P_k on a triangle; zero for negative `k`.
pub fn dim_pk(k: i64) -> usize {
    if k < 0 {
        0
    } else {
        ((k + 1) * (k + 2) / 2) as usize
    }
}

/// Fixed geometric data of one cell used by every shape evaluation.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub verts: [Point; 3],
    /// Gradients of the barycentric coordinates (constant on the cell).
    pub lambda_grads: [Point; 3],
    pub barycenter: Point,
    pub diameter: f64,
    pub area: f64,
}

impl CellGeometry {
    pub fn of(mesh: &Mesh, cell: usize) -> Self {
        Self {
            verts: mesh.cell_vertices(cell),
            lambda_grads: mesh.barycentric_gradients(cell),
            barycenter: mesh.cell_barycenter(cell),
            diameter: mesh.cell_diameter(cell),
            area: mesh.cell_area(cell),
        }
    }

    pub fn point(&self, l: &[f64; 3]) -> Point {
        let [a, b, c] = self.verts;
        [
            l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
            l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
        ]
    }
}

/// One local Crouzeix-Raviart shape function on a cell.
///
/// `FacetModal` endpoints are the local vertex indices of the facet ordered by
/// global vertex id; this makes the trace of the shape identical from both
/// sides of the facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalShape {
    Vertex { loc: usize },
    FacetModal { lo: usize, hi: usize, j: usize },
    FacetBubble { loc_facet: usize, degree: usize },
    BulkModal { ax: u32, ay: u32 },
    BulkBubble { degree: usize },
}

/// Evaluates the facet bubble S_k(1 - 2 lambda_F) on a cell, where
/// `loc_facet` is the local index of the facet (= opposite vertex).
pub fn facet_bubble_eval(
    k: usize,
    mesh: &Mesh,
    cell: usize,
    loc_facet: usize,
    x: Point,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("facet bubble needs k >= 1".into()));
    }
    let l = mesh.barycentric(cell, x);
    if l.iter().any(|&li| li < -1e-12) {
        return Err(Error::Domain(format!(
            "point {x:?} is outside cell {cell} (barycentric {l:?})"
        )));
    }
    Ok(legendre_eval(k, 1.0 - 2.0 * l[loc_facet]))
}

/// Evaluates the bulk bubble (even k only) at a point of the cell.
pub fn bulk_bubble_eval(k: usize, mesh: &Mesh, cell: usize, x: Point) -> Result<f64> {
    if k < 2 || k % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "bulk bubble requires even k >= 2, got {k}"
        )));
    }
    let l = mesh.barycentric(cell, x);
    if l.iter().any(|&li| li < -1e-12) {
        return Err(Error::Domain(format!(
            "point {x:?} is outside cell {cell} (barycentric {l:?})"
        )));
    }
    Ok(eval_shape(&LocalShape::BulkBubble { degree: k }, &CellGeometry::of(mesh, cell), &l))
}

pub fn eval_shape(shape: &LocalShape, geom: &CellGeometry, l: &[f64; 3]) -> f64 {
    match *shape {
        LocalShape::Vertex { loc } => l[loc],
        LocalShape::FacetModal { lo, hi, j } => {
            l[lo] * l[hi] * legendre_eval(j - 1, l[hi] - l[lo])
        }
        LocalShape::FacetBubble { loc_facet, degree } => {
            legendre_eval(degree, 1.0 - 2.0 * l[loc_facet])
        }
        LocalShape::BulkModal { ax, ay } => {
            let p = geom.point(l);
            let xi = (p[0] - geom.barycenter[0]) / geom.diameter;
            let eta = (p[1] - geom.barycenter[1]) / geom.diameter;
            l[0] * l[1] * l[2] * xi.powi(ax as i32) * eta.powi(ay as i32)
        }
        LocalShape::BulkBubble { degree } => {
            let s: f64 = l.iter().map(|&li| legendre_eval(degree, 1.0 - 2.0 * li)).sum();
            0.5 * (-1.0 + s)
        }
    }
}

pub fn eval_shape_grad(shape: &LocalShape, geom: &CellGeometry, l: &[f64; 3]) -> Point {
    let g = &geom.lambda_grads;
    match *shape {
        LocalShape::Vertex { loc } => g[loc],
        LocalShape::FacetModal { lo, hi, j } => {
            let (s, ds) = legendre_pair(j - 1, l[hi] - l[lo]);
            let d_arg = [g[hi][0] - g[lo][0], g[hi][1] - g[lo][1]];
            [
                (g[lo][0] * l[hi] + l[lo] * g[hi][0]) * s + l[lo] * l[hi] * ds * d_arg[0],
                (g[lo][1] * l[hi] + l[lo] * g[hi][1]) * s + l[lo] * l[hi] * ds * d_arg[1],
            ]
        }
        LocalShape::FacetBubble { loc_facet, degree } => {
            let ds = legendre_deriv(degree, 1.0 - 2.0 * l[loc_facet]);
            [-2.0 * ds * g[loc_facet][0], -2.0 * ds * g[loc_facet][1]]
        }
        LocalShape::BulkModal { ax, ay } => {
            let p = geom.point(l);
            let h = geom.diameter;
            let xi = (p[0] - geom.barycenter[0]) / h;
            let eta = (p[1] - geom.barycenter[1]) / h;
            let bubble = l[0] * l[1] * l[2];
            let grad_bubble = [
                g[0][0] * l[1] * l[2] + l[0] * g[1][0] * l[2] + l[0] * l[1] * g[2][0],
                g[0][1] * l[1] * l[2] + l[0] * g[1][1] * l[2] + l[0] * l[1] * g[2][1],
            ];
            let m = xi.powi(ax as i32) * eta.powi(ay as i32);
            let dm_dx = if ax == 0 {
                0.0
            } else {
                ax as f64 / h * xi.powi(ax as i32 - 1) * eta.powi(ay as i32)
            };
            let dm_dy = if ay == 0 {
                0.0
            } else {
                ay as f64 / h * xi.powi(ax as i32) * eta.powi(ay as i32 - 1)
            };
            [
                grad_bubble[0] * m + bubble * dm_dx,
                grad_bubble[1] * m + bubble * dm_dy,
            ]
        }
        LocalShape::BulkBubble { degree } => {
            let mut grad = [0.0, 0.0];
            for i in 0..3 {
                let ds = legendre_deriv(degree, 1.0 - 2.0 * l[i]);
                grad[0] -= ds * g[i][0];
                grad[1] -= ds * g[i][1];
            }
            grad
        }
    }
}

/// Scaled monomial exponents of total degree <= `k`, graded lexicographic.
pub fn monomial_exponents(k: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(dim_pk(k as i64));
    for d in 0..=k {
        for ax in (0..=d).rev() {
            out.push((ax as u32, (d - ax) as u32));
        }
    }
    out
}

/// An L2(K)-orthonormal polynomial basis of degree <= `degree` on one cell,
/// stored as combinations of scaled monomials.
#[derive(Debug, Clone)]
pub struct OrthoPolyBasis {
    pub degree: usize,
    exponents: Vec<(u32, u32)>,
    /// Row i holds the monomial coefficients of the i-th orthonormal function.
    coeffs: Vec<Vec<f64>>,
    barycenter: Point,
    diameter: f64,
}

impl OrthoPolyBasis {
    /// Gram-Schmidt on the scaled monomials against the cell quadrature,
    /// repeated once for orthogonality at machine precision.
    pub fn build(geom: &CellGeometry, degree: usize, quad: &TriangleQuadrature) -> Self {
        let exponents = monomial_exponents(degree);
        let m = exponents.len();
        // Tabulate monomial values at the mapped quadrature points.
        let npts = quad.points.len();
        let mut vals = vec![vec![0.0; npts]; m];
        let mut wts = vec![0.0; npts];
        for (q, (l, w)) in quad.points.iter().zip(&quad.weights).enumerate() {
            let p = geom.point(l);
            let xi = (p[0] - geom.barycenter[0]) / geom.diameter;
            let eta = (p[1] - geom.barycenter[1]) / geom.diameter;
            wts[q] = w * 2.0 * geom.area;
            for (i, &(ax, ay)) in exponents.iter().enumerate() {
                vals[i][q] = xi.powi(ax as i32) * eta.powi(ay as i32);
            }
        }
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).zip(&wts).map(|((x, y), w)| w * x * y).sum()
        };
        let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut ortho_vals: Vec<Vec<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            let mut c = vec![0.0; m];
            c[i] = 1.0;
            let mut v = vals[i].clone();
            for _pass in 0..2 {
                for j in 0..ortho_vals.len() {
                    let proj = dot(&v, &ortho_vals[j]);
                    for (ck, oj) in c.iter_mut().zip(&coeffs[j]) {
                        *ck -= proj * oj;
                    }
                    for (vk, oj) in v.iter_mut().zip(&ortho_vals[j]) {
                        *vk -= proj * oj;
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            for ck in &mut c {
                *ck /= norm;
            }
            for vk in &mut v {
                *vk /= norm;
            }
            coeffs.push(c);
            ortho_vals.push(v);
        }
        Self {
            degree,
            exponents,
            coeffs,
            barycenter: geom.barycenter,
            diameter: geom.diameter,
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Values of all basis functions at a physical point of the cell.
    pub fn eval_all(&self, x: Point, out: &mut [f64]) {
        let xi = (x[0] - self.barycenter[0]) / self.diameter;
        let eta = (x[1] - self.barycenter[1]) / self.diameter;
        let m = self.exponents.len();
        let mut mono = vec![0.0; m];
        for (i, &(ax, ay)) in self.exponents.iter().enumerate() {
            mono[i] = xi.powi(ax as i32) * eta.powi(ay as i32);
        }
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o = c.iter().zip(&mono).map(|(a, b)| a * b).sum();
        }
    }
}
