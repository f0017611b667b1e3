//! Manufactured problems with built-in consistency checks.
//!
//! The flux/potential pair is the ground truth: every data field (f, b, g_N,
//! g_D) is regenerated from the strong form
//!
//!     grad p + (mu/rho) K^{-1} u + (beta/rho) |u|^{alpha-2} u = f
//!     div u = b,   u . n = g_N on Gamma_N,   p = g_D on Gamma_D,
//!
//! and a pointwise self-check validates the analytic derivative callbacks
//! against the fields at construction time. This guards the convergence
//! studies against transcription slips in the data formulas.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::Permeability;
use crate::error::{Error, Result};
use crate::mesh::{FacetTopology, Mesh, Point};
use crate::quadrature::{quadrature_edge, quadrature_triangle};
use crate::spaces::facet_point;

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
/// Boundary datum evaluated at a point with the outward unit normal.
pub type BoundaryField = Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub u_exact: VectorField,
    pub div_u: ScalarField,
    pub p_exact: ScalarField,
    pub grad_p: VectorField,
    pub f: VectorField,
    pub b: ScalarField,
    pub g_n: BoundaryField,
    pub g_d: ScalarField,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub rho: f64,
    pub kinv: Permeability,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .finish()
    }
}

/// Model constants shared by the built-in cases.
#[derive(Debug, Clone, Copy)]
pub struct CaseParams {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub rho: f64,
}

impl CaseParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            mu: 1.0,
            rho: 1.0,
        }
    }
}

/// Builds a case from an exact flux (with analytic divergence) and an exact
/// potential (with analytic gradient); all data fields follow from the
/// strong form. The self-check runs before the case is returned.
pub fn derive_case(
    name: &str,
    u: VectorField,
    div_u: ScalarField,
    p: ScalarField,
    grad_p: VectorField,
    params: CaseParams,
    kinv: Permeability,
) -> Result<ManufacturedCase> {
    if !(params.alpha > 2.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must exceed 2, got {}",
            params.alpha
        )));
    }
    if !(params.beta >= 0.0) {
        return Err(Error::InvalidArgument("beta must be nonnegative".into()));
    }
    let f: VectorField = {
        let u = u.clone();
        let grad_p = grad_p.clone();
        let kinv = kinv.clone();
        let CaseParams { alpha, beta, mu, rho } = params;
        Arc::new(move |x: Point| {
            let uv = u(x);
            let gp = grad_p(x);
            // piecewise-constant tensors: cell index 0 stands for the
            // constant variant, per-cell data is not used in derived fields
            let k = match &kinv {
                Permeability::Constant(k) => *k,
                Permeability::PerCell(_) => {
                    unreachable!("derived cases use constant permeability")
                }
            };
            let drag = beta / rho * (uv[0] * uv[0] + uv[1] * uv[1]).sqrt().powf(alpha - 2.0);
            [
                gp[0] + mu / rho * (k[0][0] * uv[0] + k[0][1] * uv[1]) + drag * uv[0],
                gp[1] + mu / rho * (k[1][0] * uv[0] + k[1][1] * uv[1]) + drag * uv[1],
            ]
        })
    };
    let g_n: BoundaryField = {
        let u = u.clone();
        Arc::new(move |x: Point, n: Point| {
            let uv = u(x);
            uv[0] * n[0] + uv[1] * n[1]
        })
    };
    let case = ManufacturedCase {
        name: name.to_string(),
        u_exact: u,
        div_u: div_u.clone(),
        p_exact: p.clone(),
        grad_p,
        f,
        b: div_u,
        g_n,
        g_d: p,
        alpha: params.alpha,
        beta: params.beta,
        mu: params.mu,
        rho: params.rho,
        kinv,
    };
    case.self_check()?;
    Ok(case)
}

impl ManufacturedCase {
    /// Pointwise consistency of the callbacks at 100 deterministic random
    /// interior points of (-1,1)^2: the PDE residual must vanish, and the
    /// analytic divergence/gradient must match Richardson-extrapolated
    /// finite differences of u and p.
    pub fn self_check(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
        let mut worst_pde = 0.0f64;
        let mut worst_div = 0.0f64;
        let mut worst_grad = 0.0f64;
        for _ in 0..100 {
            let x = [rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95)];
            let uv = (self.u_exact)(x);
            let gp = (self.grad_p)(x);
            let fv = (self.f)(x);
            let k = self.kinv.kinv(0);
            let drag =
                self.beta / self.rho * (uv[0] * uv[0] + uv[1] * uv[1]).sqrt().powf(self.alpha - 2.0);
            let r0 = fv[0] - gp[0] - self.mu / self.rho * (k[0][0] * uv[0] + k[0][1] * uv[1])
                - drag * uv[0];
            let r1 = fv[1] - gp[1] - self.mu / self.rho * (k[1][0] * uv[0] + k[1][1] * uv[1])
                - drag * uv[1];
            worst_pde = worst_pde.max(r0.abs().max(r1.abs()));

            let div_fd = richardson_div(&*self.u_exact, x);
            worst_div = worst_div.max((div_fd - (self.div_u)(x)).abs());

            let grad_fd = richardson_grad(&*self.p_exact, x);
            worst_grad = worst_grad
                .max((grad_fd[0] - gp[0]).abs())
                .max((grad_fd[1] - gp[1]).abs());
        }
        if worst_pde > 1e-10 {
            return Err(Error::SelfCheck(format!(
                "case {}: PDE residual f - grad p - A(u) reaches {worst_pde:.3e}",
                self.name
            )));
        }
        // finite differences carry ~1e-9 roundoff at these magnitudes
        let fd_tol = 5e-8;
        if worst_div > fd_tol {
            return Err(Error::SelfCheck(format!(
                "case {}: div u mismatch {worst_div:.3e} against finite differences",
                self.name
            )));
        }
        if worst_grad > fd_tol {
            return Err(Error::SelfCheck(format!(
                "case {}: grad p mismatch {worst_grad:.3e} against finite differences",
                self.name
            )));
        }
        Ok(())
    }
}

fn central_diff(f: &dyn Fn(Point) -> f64, x: Point, dir: usize, h: f64) -> f64 {
    let mut xp = x;
    let mut xm = x;
    xp[dir] += h;
    xm[dir] -= h;
    (f(xp) - f(xm)) / (2.0 * h)
}

fn richardson_grad(p: &dyn Fn(Point) -> f64, x: Point) -> [f64; 2] {
    let h = 1e-4;
    let mut g = [0.0; 2];
    for dir in 0..2 {
        let d1 = central_diff(p, x, dir, h);
        let d2 = central_diff(p, x, dir, h / 2.0);
        g[dir] = (4.0 * d2 - d1) / 3.0;
    }
    g
}

fn richardson_div(u: &dyn Fn(Point) -> [f64; 2], x: Point) -> f64 {
    let ux = |p: Point| u(p)[0];
    let uy = |p: Point| u(p)[1];
    let h = 1e-4;
    let dx = {
        let d1 = central_diff(&ux, x, 0, h);
        let d2 = central_diff(&ux, x, 0, h / 2.0);
        (4.0 * d2 - d1) / 3.0
    };
    let dy = {
        let d1 = central_diff(&uy, x, 1, h);
        let d2 = central_diff(&uy, x, 1, h / 2.0);
        (4.0 * d2 - d1) / 3.0
    };
    dx + dy
}

/// Trigonometric flux/potential pair on (-1,1)^2.
pub fn case1(alpha: f64, beta: f64) -> Result<ManufacturedCase> {
    let u: VectorField = Arc::new(|x: Point| [(PI * x[0]).sin(), (PI * x[1]).cos()]);
    let div_u: ScalarField =
        Arc::new(|x: Point| PI * (PI * x[0]).cos() - PI * (PI * x[1]).sin());
    let p: ScalarField = Arc::new(|x: Point| (0.5 * PI * x[0]).cos() * (0.5 * PI * x[1]).sin());
    let grad_p: VectorField = Arc::new(|x: Point| {
        [
            -0.5 * PI * (0.5 * PI * x[0]).sin() * (0.5 * PI * x[1]).sin(),
            0.5 * PI * (0.5 * PI * x[0]).cos() * (0.5 * PI * x[1]).cos(),
        ]
    });
    derive_case(
        "case1",
        u,
        div_u,
        p,
        grad_p,
        CaseParams::new(alpha, beta),
        Permeability::identity(),
    )
}

/// Constant flux with cubic potential on (-1,1)^2; the lowest-order scheme
/// reproduces this flux exactly.
pub fn case2(alpha: f64, beta: f64) -> Result<ManufacturedCase> {
    let u: VectorField = Arc::new(|_| [1.0, -1.0]);
    let div_u: ScalarField = Arc::new(|_| 0.0);
    let p: ScalarField = Arc::new(|x: Point| x[0].powi(3) + x[1].powi(3));
    let grad_p: VectorField = Arc::new(|x: Point| [3.0 * x[0] * x[0], 3.0 * x[1] * x[1]]);
    derive_case(
        "case2",
        u,
        div_u,
        p,
        grad_p,
        CaseParams::new(alpha, beta),
        Permeability::identity(),
    )
}

/// Both sides of the pure-Neumann compatibility condition, integrated with
/// elevated quadrature over the given mesh.
#[derive(Debug, Clone, Copy)]
pub struct CompatibilityReport {
    pub int_b: f64,
    pub int_g_n: f64,
    pub pass: bool,
}

pub fn validate_compatibility(
    case: &ManufacturedCase,
    mesh: &Mesh,
    topo: &FacetTopology,
) -> Result<CompatibilityReport> {
    let tq = quadrature_triangle(12)?;
    let eq = quadrature_edge(12)?;
    let mut int_b = 0.0;
    for c in 0..mesh.n_cells() {
        let area = mesh.cell_area(c);
        let verts = mesh.cell_vertices(c);
        for (l, &w) in tq.points.iter().zip(&tq.weights) {
            let x = [
                l[0] * verts[0][0] + l[1] * verts[1][0] + l[2] * verts[2][0],
                l[0] * verts[0][1] + l[1] * verts[1][1] + l[2] * verts[2][1],
            ];
            int_b += w * 2.0 * area * (case.b)(x);
        }
    }
    let mut int_g_n = 0.0;
    for (_, facet) in topo.boundary() {
        for (&t, &w) in eq.points.iter().zip(&eq.weights) {
            let x = facet_point(mesh, facet, t);
            int_g_n += w * 0.5 * facet.length * (case.g_n)(x, facet.normal);
        }
    }
    let pass = (int_b - int_g_n).abs() <= 1e-9 * (1.0 + int_b.abs());
    Ok(CompatibilityReport { int_b, int_g_n, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_facets, generate_structured_mesh, BoundingBox, TagRule};

    #[test]
    fn case1_point_values() {
        let c = case1(3.0, 10.0).unwrap();
        let u0 = (c.u_exact)([0.0, 0.0]);
        assert!((u0[0] - 0.0).abs() < 1e-15 && (u0[1] - 1.0).abs() < 1e-15);
        assert!((c.p_exact)([0.0, 0.0]).abs() < 1e-15);
    }

    #[test]
    fn case1_neumann_side_values() {
        let c = case1(3.0, 10.0).unwrap();
        // bottom side: outward normal (0,-1), u.n = -cos(-pi) = 1
        let g = (c.g_n)([0.3, -1.0], [0.0, -1.0]);
        assert!((g - 1.0).abs() < 1e-14, "{g}");
        // top side: -1
        let g = (c.g_n)([0.3, 1.0], [0.0, 1.0]);
        assert!((g + 1.0).abs() < 1e-14);
        // left and right sides: 0
        let g = (c.g_n)([-1.0, 0.4], [-1.0, 0.0]);
        assert!(g.abs() < 1e-13);
        let g = (c.g_n)([1.0, 0.4], [1.0, 0.0]);
        assert!(g.abs() < 1e-13);
    }

    #[test]
    fn case2_source_closed_form() {
        let (alpha, beta) = (3.0, 10.0);
        let c = case2(alpha, beta).unwrap();
        let f0 = (c.f)([0.0, 0.0]);
        let expect = 1.0 + 2f64.powf((alpha - 2.0) / 2.0) * beta;
        assert!((f0[0] - expect).abs() < 1e-12, "{} vs {expect}", f0[0]);
        assert!((f0[1] + expect).abs() < 1e-12);
        // g_N: 1 on right and bottom, -1 on left and top
        assert!(((c.g_n)([1.0, 0.2], [1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!(((c.g_n)([0.2, -1.0], [0.0, -1.0]) - 1.0).abs() < 1e-15);
        assert!(((c.g_n)([-1.0, 0.2], [-1.0, 0.0]) + 1.0).abs() < 1e-15);
        assert!(((c.g_n)([0.2, 1.0], [0.0, 1.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn case2_constant_drag_weight() {
        for alpha in [2.5, 3.0, 4.0] {
            let c = case2(alpha, 1.0).unwrap();
            let uv = (c.u_exact)([0.3, -0.7]);
            let w = (uv[0] * uv[0] + uv[1] * uv[1]).sqrt().powf(alpha - 2.0);
            assert!((w - 2f64.powf((alpha - 2.0) / 2.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn derive_case_rejects_bad_divergence() {
        let u: VectorField = Arc::new(|x: Point| [x[0], x[1]]);
        let wrong_div: ScalarField = Arc::new(|_| 0.0); // true div is 2
        let p: ScalarField = Arc::new(|_| 0.0);
        let gp: VectorField = Arc::new(|_| [0.0, 0.0]);
        let err = derive_case(
            "bad",
            u,
            wrong_div,
            p,
            gp,
            CaseParams::new(3.0, 1.0),
            Permeability::identity(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn beta_zero_reduces_to_darcy_source() {
        let u: VectorField = Arc::new(|x: Point| [x[1], -x[0]]);
        let div: ScalarField = Arc::new(|_| 0.0);
        let p: ScalarField = Arc::new(|x: Point| x[0] * x[1]);
        let gp: VectorField = Arc::new(|x: Point| [x[1], x[0]]);
        let c = derive_case(
            "rot",
            u,
            div,
            p,
            gp,
            CaseParams::new(3.0, 0.0),
            Permeability::identity(),
        )
        .unwrap();
        let x = [0.4, -0.2];
        let f = (c.f)(x);
        assert!((f[0] - (x[1] + x[1])).abs() < 1e-14);
        assert!((f[1] - (x[0] - x[0])).abs() < 1e-14);
        assert!(((c.b)(x)).abs() < 1e-15);
    }

    #[test]
    fn compatibility_of_builtin_cases() {
        let mesh = generate_structured_mesh(4, 4, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&mesh, &TagRule::AllNeumann).unwrap();
        for case in [case1(3.0, 10.0).unwrap(), case2(3.0, 10.0).unwrap()] {
            let rep = validate_compatibility(&case, &mesh, &topo).unwrap();
            assert!(rep.pass, "{}: {} vs {}", case.name, rep.int_b, rep.int_g_n);
            assert!(rep.int_b.abs() < 1e-10);
            assert!(rep.int_g_n.abs() < 1e-10);
        }
    }

    #[test]
    fn incompatible_data_detected() {
        // b = 1, g_N = 0 on the bi-unit square: the mismatch is the area 4.
        let mesh = generate_structured_mesh(2, 2, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&mesh, &TagRule::AllNeumann).unwrap();
        let mut case = case2(3.0, 1.0).unwrap();
        case.b = Arc::new(|_| 1.0);
        case.g_n = Arc::new(|_, _| 0.0);
        let rep = validate_compatibility(&case, &mesh, &topo).unwrap();
        assert!(!rep.pass);
        assert!((rep.int_b - rep.int_g_n - 4.0).abs() < 1e-10);
    }

    #[test]
    fn case1_rebuilt_through_derive_matches() {
        // case1 is already built through derive_case; rebuilding with the
        // same callbacks must reproduce f at random points.
        let a = case1(3.3, 7.0).unwrap();
        let b = case1(3.3, 7.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let fa = (a.f)(x);
            let fb = (b.f)(x);
            assert!((fa[0] - fb[0]).abs() < 1e-10 && (fa[1] - fb[1]).abs() < 1e-10);
        }
    }
}
