//! Error measures, Lebesgue norms of discrete and exact fields, and
//! convergence-rate fitting.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::quadrature_triangle;
use crate::spaces::{eval_cr_grad, eval_flux, CrSpace, FluxSpace};

/// Relative error measures of one solve on one mesh.
#[derive(Debug, Clone, Copy)]
pub struct ErrorReport {
    pub h: f64,
    pub e_u: f64,
    pub e_p: f64,
}

/// Outcome of a norm ratio; `absolute` is set when the reference norm
/// vanishes and the unnormalized error is returned instead.
#[derive(Debug, Clone, Copy)]
pub struct RelativeError {
    pub value: f64,
    pub absolute: bool,
}

/// Relative L2(Omega) error of the flux.
pub fn error_flux_l2(
    mesh: &Mesh,
    flux: &FluxSpace,
    u_coeffs: &[f64],
    u_exact: &dyn Fn(Point) -> [f64; 2],
    quad_degree: usize,
) -> Result<RelativeError> {
    let quad = quadrature_triangle(quad_degree)?;
    let mut err2 = 0.0;
    let mut ref2 = 0.0;
    for (c, geom) in flux.cell_geoms.iter().enumerate() {
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let x = geom.point(l);
            let ue = u_exact(x);
            let uh = eval_flux(flux, u_coeffs, c, x);
            let scale = w * 2.0 * geom.area;
            err2 += scale * ((ue[0] - uh[0]).powi(2) + (ue[1] - uh[1]).powi(2));
            ref2 += scale * (ue[0] * ue[0] + ue[1] * ue[1]);
        }
    }
    let _ = mesh;
    relative(err2.sqrt(), ref2.sqrt())
}

/// Relative broken L^{alpha'} norm of the potential gradient error, with
/// alpha' = alpha / (alpha - 1).
pub fn error_potential_grad(
    mesh: &Mesh,
    cr: &CrSpace,
    p_coeffs: &[f64],
    grad_p_exact: &dyn Fn(Point) -> [f64; 2],
    alpha: f64,
    quad_degree: usize,
) -> Result<RelativeError> {
    if !(alpha > 2.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must exceed 2, got {alpha}"
        )));
    }
    let ap = alpha / (alpha - 1.0);
    let quad = quadrature_triangle(quad_degree)?;
    let mut err = 0.0;
    let mut reference = 0.0;
    for c in 0..mesh.n_cells() {
        let geom = cr.geom(c);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let x = geom.point(l);
            let ge = grad_p_exact(x);
            let gh = eval_cr_grad(mesh, cr, p_coeffs, c, x)?;
            let scale = w * 2.0 * geom.area;
            let de = ((ge[0] - gh[0]).powi(2) + (ge[1] - gh[1]).powi(2)).sqrt();
            err += scale * de.powf(ap);
            reference += scale * (ge[0] * ge[0] + ge[1] * ge[1]).sqrt().powf(ap);
        }
    }
    relative(err.powf(1.0 / ap), reference.powf(1.0 / ap))
}

fn relative(err: f64, reference: f64) -> Result<RelativeError> {
    if reference <= 1e-300 {
        Ok(RelativeError {
            value: err,
            absolute: true,
        })
    } else {
        Ok(RelativeError {
            value: err / reference,
            absolute: false,
        })
    }
}

/// Least-squares slope of log E against log h.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(
            "rate fitting needs at least two levels".into(),
        ));
    }
    for w in pairs.windows(2) {
        if !(w[1].0 < w[0].0) {
            return Err(Error::InvalidArgument(
                "mesh sizes must be strictly decreasing".into(),
            ));
        }
    }
    if pairs.iter().any(|&(_, e)| !(e > 0.0)) {
        return Err(Error::InvalidArgument(
            "errors must be positive for a log-log fit".into(),
        ));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|&(h, _)| h.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|&(_, e)| e.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    Ok(num / den)
}

/// Incremental rate between two consecutive levels.
pub fn incremental_rate(coarse: (f64, f64), fine: (f64, f64)) -> f64 {
    (fine.1 / coarse.1).ln() / (fine.0 / coarse.0).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_facets, generate_structured_mesh, BoundingBox, TagRule};
    use crate::spaces::{build_cr_space, build_flux_space, cr_interpolate, project_l2_flux};

    #[test]
    fn flux_error_of_projection_is_zero() {
        let mesh = generate_structured_mesh(2, 2, BoundingBox::biunit()).unwrap();
        let flux = build_flux_space(&mesh, 1).unwrap();
        let w = |p: Point| [0.3 * p[0] - p[1], 1.0 + p[0]];
        let coeffs = project_l2_flux(&flux, &w, 8).unwrap();
        let e = error_flux_l2(&mesh, &flux, &coeffs, &w, 10).unwrap();
        assert!(!e.absolute);
        assert!(e.value <= 1e-12, "{}", e.value);
    }

    #[test]
    fn zero_discrete_flux_gives_unit_relative_error() {
        let mesh = generate_structured_mesh(2, 2, BoundingBox::biunit()).unwrap();
        let flux = build_flux_space(&mesh, 0).unwrap();
        let coeffs = vec![0.0; flux.n_dofs];
        let e = error_flux_l2(&mesh, &flux, &coeffs, &|_| [1.0, 2.0], 6).unwrap();
        assert!((e.value - 1.0).abs() < 1e-13);
    }

    #[test]
    fn zero_exact_flux_reports_absolute() {
        let mesh = generate_structured_mesh(1, 1, BoundingBox::biunit()).unwrap();
        let flux = build_flux_space(&mesh, 0).unwrap();
        let coeffs = vec![0.5; flux.n_dofs];
        let e = error_flux_l2(&mesh, &flux, &coeffs, &|_| [0.0, 0.0], 6).unwrap();
        assert!(e.absolute);
        assert!(e.value > 0.0);
    }

    #[test]
    fn potential_error_of_interpolant_is_zero() {
        let mesh = generate_structured_mesh(2, 2, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&mesh, &TagRule::AllNeumann).unwrap();
        let k = 2;
        let cr = build_cr_space(&mesh, &topo, k).unwrap();
        let p = |x: Point| x[0] * x[0] - 0.5 * x[1] + 0.2 * x[0] * x[1];
        let gp = |x: Point| [2.0 * x[0] + 0.2 * x[1], -0.5 + 0.2 * x[0]];
        let coeffs = cr_interpolate(&mesh, &topo, &cr, &p).unwrap();
        let e = error_potential_grad(&mesh, &cr, &coeffs, &gp, 3.0, 2 * k + 6).unwrap();
        assert!(e.value <= 1e-11, "{}", e.value);
    }

    #[test]
    fn single_cell_closed_form_l15() {
        // constant gradient error (1, 0) and alpha = 3: the broken L^{1.5}
        // norm over one cell is |K|^{2/3}.
        let mesh = crate::mesh::Mesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            cells: vec![[0, 1, 2]],
            domain_box: BoundingBox::new([0.0, 0.0], [1.0, 1.0]),
        };
        let topo = build_facets(&mesh, &TagRule::AllNeumann).unwrap();
        let cr = build_cr_space(&mesh, &topo, 1).unwrap();
        let coeffs = vec![0.0; cr.n_dofs];
        let e = error_potential_grad(&mesh, &cr, &coeffs, &|_| [1.0, 0.0], 3.0, 8).unwrap();
        assert!(e.absolute);
        let want = 0.5f64.powf(2.0 / 3.0);
        assert!((e.value - want).abs() < 1e-12, "{} vs {want}", e.value);
    }

    #[test]
    fn rate_fit_examples() {
        let r = fit_rate(&[(0.5, 0.25), (0.25, 0.0625)]).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        let r = fit_rate(&[(0.5, 0.3), (0.25, 0.3), (0.125, 0.3)]).unwrap();
        assert!(r.abs() < 1e-12);
        assert!(fit_rate(&[(0.5, 0.1)]).is_err());
        assert!(fit_rate(&[(0.5, 0.1), (0.5, 0.05)]).is_err());
        assert!(fit_rate(&[(0.5, 0.1), (0.25, 0.0)]).is_err());
    }

    #[test]
    fn rate_fit_with_noise() {
        // three levels with 1% multiplicative noise around slope 3
        let hs = [0.4, 0.2, 0.1];
        let noise = [1.01, 0.99, 1.005];
        let pairs: Vec<(f64, f64)> = hs
            .iter()
            .zip(&noise)
            .map(|(&h, &n)| (h, n * h.powi(3)))
            .collect();
        let r = fit_rate(&pairs).unwrap();
        assert!((r - 3.0).abs() < 0.05, "{r}");
    }

    #[test]
    fn norm_homogeneity() {
        let mesh = generate_structured_mesh(2, 2, BoundingBox::biunit()).unwrap();
        let flux = build_flux_space(&mesh, 1).unwrap();
        let coeffs = vec![0.0; flux.n_dofs];
        let w = |p: Point| [(1.1 * p[0]).sin(), p[1]];
        let e1 = error_flux_l2(&mesh, &flux, &coeffs, &w, 10).unwrap();
        let w5 = |p: Point| {
            let v = w(p);
            [5.0 * v[0], 5.0 * v[1]]
        };
        let e5 = error_flux_l2(&mesh, &flux, &coeffs, &w5, 10).unwrap();
        // relative errors are scale invariant; absolute norms scale by 5
        assert!((e1.value - e5.value).abs() < 1e-12);
    }
}
